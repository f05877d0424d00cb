//! Coordinatewise taming of Brownian increments.
//!
//! The quartic-exponential family `Pi(x)_i = x_i exp(-x_i^4 / h)` with its
//! exact first and second derivatives, the identity map as the degenerate
//! member, and the stopping radius `exp(sqrt(|log(N/T)|))`.
//!
//! `Pi` acts on each coordinate separately, so its Jacobian is diagonal and
//! is returned as an m-vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_stream, std_normal, DOMAIN_TAMING};
use crate::stats::{mean_and_stderr, sqrt_with_stderr};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TamingParams {
    /// Per-step scale, `T/N` inside the schemes.
    pub h: f64,
    pub m: usize,
}

impl TamingParams {
    pub fn new(h: f64, m: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::invalid(format!("taming scale must be positive, got {h}")));
        }
        if m == 0 {
            return Err(Error::invalid("taming dimension must be positive"));
        }
        Ok(TamingParams { h, m })
    }
}

/// Increment map used by the stepping code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Taming {
    Identity,
    QuarticExp { h: f64 },
}

impl Taming {
    #[inline]
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match *self {
            Taming::Identity => out.copy_from_slice(x),
            Taming::QuarticExp { h } => {
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o = tame_scalar(h, xi);
                }
            }
        }
    }
}

#[inline]
fn damping(h: f64, x: f64) -> (f64, f64) {
    let q = x * x * x * x / h;
    (q, (-q).exp())
}

/// `x exp(-x^4/h)`.
#[inline]
pub fn tame_scalar(h: f64, x: f64) -> f64 {
    let (_, e) = damping(h, x);
    if e == 0.0 {
        return 0.0;
    }
    x * e
}

/// `exp(-x^4/h) (1 - 4x^4/h)`.
#[inline]
pub fn tame_derivative_scalar(h: f64, x: f64) -> f64 {
    let (q, e) = damping(h, x);
    if e == 0.0 {
        return 0.0;
    }
    e * (1.0 - 4.0 * q)
}

/// `exp(-x^4/h) (16x^7/h^2 - 20x^3/h)`.
#[inline]
pub fn tame_second_derivative_scalar(h: f64, x: f64) -> f64 {
    let (q, e) = damping(h, x);
    if e == 0.0 {
        return 0.0;
    }
    let x3_over_h = x * x * x / h;
    e * x3_over_h * (16.0 * q - 20.0)
}

fn map(params: &TamingParams, x: &[f64], f: fn(f64, f64) -> f64) -> Vec<f64> {
    debug_assert_eq!(x.len(), params.m);
    x.iter().map(|&xi| f(params.h, xi)).collect()
}

pub fn tame(params: &TamingParams, x: &[f64]) -> Vec<f64> {
    map(params, x, tame_scalar)
}

/// Diagonal of `D Pi(x)`.
pub fn tame_jacobian_diag(params: &TamingParams, x: &[f64]) -> Vec<f64> {
    map(params, x, tame_derivative_scalar)
}

/// The vector `Delta Pi(x)` of coordinatewise second derivatives.
pub fn tame_laplacian(params: &TamingParams, x: &[f64]) -> Vec<f64> {
    map(params, x, tame_second_derivative_scalar)
}

/// `exp(sqrt(|log(N/T)|))`, the radius outside of which the stopped scheme freezes.
pub fn stopping_threshold(n: usize, horizon: f64) -> f64 {
    (n as f64 / horizon).ln().abs().sqrt().exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    #[serde(with = "crate::serde_float")]
    pub estimate: f64,
    pub std_error: f64,
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
    /// `estimate + 3 * std_error < bound`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamingReport {
    pub h: f64,
    pub m: usize,
    pub samples: usize,
    pub seed: u64,
    /// Samples were drawn as `W_h ~ Normal(0, h I)`; the moments in the
    /// two L^2 bounds are largest at the right end of `[0, h]`.
    pub time: f64,
    /// Largest `|Pi(W)|` over all samples against `h^{1/4} sqrt(m)`.
    pub sup_norm: BoundCheck,
    /// Fraction of samples satisfying the pathwise sup bound.
    pub sup_norm_pass_fraction: f64,
    /// `|| D Pi(W) - I ||_{L^2(Omega; L(R^m))}` against `52 h sqrt(m)`.
    pub jacobian: BoundCheck,
    /// `|| Delta Pi(W) ||_{L^2(Omega; R^m)}` against `32 sqrt(h m)`.
    pub laplacian: BoundCheck,
}

impl TamingReport {
    pub fn all_pass(&self) -> bool {
        self.sup_norm.pass && self.sup_norm_pass_fraction == 1.0 && self.jacobian.pass && self.laplacian.pass
    }
}

pub const MIN_TAMING_SAMPLES: usize = 1000;

/// Monte Carlo check of the three taming bounds at `t = h`.
pub fn verify_taming_bounds(params: &TamingParams, sample_count: usize, seed: u64) -> Result<TamingReport> {
    if sample_count < MIN_TAMING_SAMPLES {
        return Err(Error::SampleCount { got: sample_count, min: MIN_TAMING_SAMPLES });
    }
    let TamingParams { h, m } = *params;
    let sd = h.sqrt();
    let sup_bound = h.powf(0.25) * (m as f64).sqrt();

    let mut rng = keyed_stream(seed, DOMAIN_TAMING, m as u64, h.to_bits());
    let mut w = vec![0.0; m];
    let mut sup_norms = Vec::with_capacity(sample_count);
    let mut jac_sq = Vec::with_capacity(sample_count);
    let mut lap_sq = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        for wi in w.iter_mut() {
            *wi = sd * std_normal(&mut rng);
        }
        let mut tamed_sq = 0.0;
        let mut op_norm: f64 = 0.0;
        let mut lap = 0.0;
        for &wi in &w {
            tamed_sq += tame_scalar(h, wi).powi(2);
            // operator norm of a diagonal matrix is its largest entry
            op_norm = op_norm.max((tame_derivative_scalar(h, wi) - 1.0).abs());
            lap += tame_second_derivative_scalar(h, wi).powi(2);
        }
        sup_norms.push(tamed_sq.sqrt());
        jac_sq.push(op_norm * op_norm);
        lap_sq.push(lap);
    }

    let sup = sup_norms.iter().copied().fold(0.0, f64::max);
    let within = sup_norms.iter().filter(|&&v| v <= sup_bound).count();

    let check = |sq: &[f64], bound: f64| {
        let (mean, se) = mean_and_stderr(sq);
        let (estimate, std_error) = sqrt_with_stderr(mean, se);
        BoundCheck { estimate, std_error, bound, pass: estimate + 3.0 * std_error < bound }
    };

    Ok(TamingReport {
        h,
        m,
        samples: sample_count,
        seed,
        time: h,
        sup_norm: BoundCheck { estimate: sup, std_error: 0.0, bound: sup_bound, pass: sup <= sup_bound },
        sup_norm_pass_fraction: within as f64 / sample_count as f64,
        jacobian: check(&jac_sq, 52.0 * h * (m as f64).sqrt()),
        laplacian: check(&lap_sq, 32.0 * (h * m as f64).sqrt()),
    })
}
