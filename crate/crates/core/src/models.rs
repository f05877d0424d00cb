//! Model zoo and the sampled checker for the Lyapunov and monotonicity conditions.
//!
//! Shipped Lyapunov data (all with `Ubar = 0`, `p = 4`, `q0 = 4`, `q1 = inf`, `r = 2`):
//!
//! * Ginzburg-Landau `dX = (aX - bX^3) dt + s dW`: `U = eps (1 + x^2)`. The
//!   constant term keeps the generator inequality true at the origin where the
//!   additive noise makes the left side positive. `rho` is the smallest value
//!   making the quadratic-in-`x^2` inequality hold, times a safety factor.
//! * Van der Pol `dx = v dt`, `dv = (a v - b x - x^3 - k x^2 v) dt + s x dW`:
//!   `U = eps (1 + x^4/4 + v^2/2)`, admissible when `k >= eps s^2 / 2`.
//!
//! The constants were chosen with `examples/tune_lyapunov.rs` and are
//! re-verified by the test suite through [`check_conditions`].

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_stream, std_normal, DOMAIN_SAMPLER};
use crate::stats::par_map_paths;
use crate::types::{dot, norm, LyapunovSpec, SdeModel};

/// Scale `eps` in the Ginzburg-Landau Lyapunov function, selected by `examples/tune_lyapunov.rs`.
pub const GL_LYAPUNOV_SCALE: f64 = 0.45;
/// Horizon the shipped constants are derived for unless one is given.
pub const DEFAULT_HORIZON: f64 = 1.0;
const RHO_MARGIN: f64 = 1.1;
const C_MARGIN: f64 = 1.25;

pub fn model_gbm(a: f64, b: f64) -> SdeModel {
    SdeModel::new("gbm", 1, 1, Arc::new(move |x, o| o[0] = a * x[0]), Arc::new(move |x, o| o[0] = b * x[0]))
        .expect("fixed dimensions")
        .with_exact_solution(Arc::new(move |x0, t, w, o| {
            o[0] = x0[0] * ((a - 0.5 * b * b) * t + b * w[0]).exp();
        }))
}

/// `U = x^2` for geometric Brownian motion. The quartic `|sigma^T grad U|^2`
/// term breaks the generator inequality, so this is only for demonstrating
/// the checker and never shipped with the model.
pub fn gbm_forced_lyapunov(a: f64, b: f64, horizon: f64) -> LyapunovSpec {
    LyapunovSpec {
        u: Arc::new(|x| x[0] * x[0]),
        grad_u: Arc::new(|x, g| g[0] = 2.0 * x[0]),
        hess_u: Arc::new(|_, h| h[0] = 2.0),
        u_bar: Arc::new(|_| 0.0),
        rho: (2.0 * a + b * b).abs() + 1.0,
        c: (a.abs() + b.abs() + 3.0).max(horizon.powf(1.0 / 32.0)),
        p: 4,
        q0: 4.0,
        q1: f64::INFINITY,
        r: 2.0,
        horizon,
    }
}

pub fn model_ginzburg_landau(alpha: f64, beta: f64, sigma0: f64) -> Result<SdeModel> {
    model_ginzburg_landau_on(alpha, beta, sigma0, DEFAULT_HORIZON)
}

/// Ginzburg-Landau model with Lyapunov constants valid up to `horizon`.
pub fn model_ginzburg_landau_on(alpha: f64, beta: f64, sigma0: f64, horizon: f64) -> Result<SdeModel> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let spec = ginzburg_landau_lyapunov(alpha, beta, sigma0, GL_LYAPUNOV_SCALE, horizon)?;
    Ok(SdeModel::new(
        "ginzburg-landau",
        1,
        1,
        Arc::new(move |x, o| o[0] = alpha * x[0] - beta * x[0] * x[0] * x[0]),
        Arc::new(move |_, o| o[0] = sigma0),
    )?
    .with_lyapunov(spec))
}

/// Lyapunov data `U = eps (1 + x^2)` for the Ginzburg-Landau drift.
pub fn ginzburg_landau_lyapunov(alpha: f64, beta: f64, sigma0: f64, eps: f64, horizon: f64) -> Result<LyapunovSpec> {
    if !(eps > 0.0 && beta > 0.0 && horizon > 0.0) {
        return Err(Error::invalid("eps, beta and horizon must be positive"));
    }
    // LHS / eps = -2 beta z^2 + B z + s^2 with z = x^2; RHS / eps = rho (1 + z)
    let s2 = sigma0 * sigma0;
    let big_b = 2.0 * alpha + 2.0 * s2 * eps;
    let rho_star = if s2 >= big_b {
        s2
    } else {
        let u = -4.0 * beta + (16.0 * beta * beta + 8.0 * beta * (big_b - s2)).sqrt();
        big_b - u
    };
    let rho = RHO_MARGIN * rho_star.max(0.0);
    let c = C_MARGIN
        * [
            alpha.abs() + 1.5 * beta,
            6.0 * eps + alpha.abs() + beta + sigma0.abs(),
            alpha,
            1.0,
            horizon.powf(1.0 / 32.0),
            0.5 / eps.sqrt(),
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovSpec {
        u: Arc::new(move |x| eps * (1.0 + x[0] * x[0])),
        grad_u: Arc::new(move |x, g| g[0] = 2.0 * eps * x[0]),
        hess_u: Arc::new(move |_, h| h[0] = 2.0 * eps),
        u_bar: Arc::new(|_| 0.0),
        rho,
        c,
        p: 4,
        q0: 4.0,
        q1: f64::INFINITY,
        r: 2.0,
        horizon,
    })
}

pub fn model_vdp(a: f64, b: f64, c_damp: f64, sigma0: f64) -> Result<SdeModel> {
    model_vdp_on(a, b, c_damp, sigma0, DEFAULT_HORIZON)
}

/// Van der Pol-Duffing oscillator in `(x, v)` with multiplicative noise on `v`.
///
/// Lyapunov data is attached when `c_damp > 0`; otherwise the model has none.
pub fn model_vdp_on(a: f64, b: f64, c_damp: f64, sigma0: f64, horizon: f64) -> Result<SdeModel> {
    if !(sigma0 >= 0.0) {
        return Err(Error::invalid(format!("sigma0 must be nonnegative, got {sigma0}")));
    }
    let model = SdeModel::new(
        "vdp",
        2,
        1,
        Arc::new(move |s, o| {
            let (x, v) = (s[0], s[1]);
            o[0] = v;
            o[1] = a * v - b * x - x * x * x - c_damp * x * x * v;
        }),
        Arc::new(move |s, o| {
            o[0] = 0.0;
            o[1] = sigma0 * s[0];
        }),
    )?;
    Ok(match vdp_lyapunov(a, b, c_damp, sigma0, horizon) {
        Ok(spec) => model.with_lyapunov(spec),
        Err(_) => model,
    })
}

/// Lyapunov data `U = eps (1 + x^4/4 + v^2/2)` for the oscillator.
pub fn vdp_lyapunov(a: f64, b: f64, c_damp: f64, sigma0: f64, horizon: f64) -> Result<LyapunovSpec> {
    if !(c_damp > 0.0) {
        return Err(Error::NoLyapunov("vdp needs positive cubic damping for a polynomial Lyapunov function".into()));
    }
    let s2 = sigma0 * sigma0;
    // the x^2 v^2 terms cancel when c_damp >= eps s^2 / 2
    let eps = if s2 > 0.0 { (2.0 * c_damp / s2).min(1.0) } else { 1.0 };
    let rho = RHO_MARGIN * (2.0 * a + b.abs()).max(0.5 * (b.abs() + s2)).max(0.0);
    let p = 4u32;
    let q0 = 4.0;
    // monotonicity: cross terms absorbed by kappa (U(x) + U(y))
    let kappa = eps / (2.0 * q0 * horizon * (rho * horizon).exp());
    let big_a = 0.75 + c_damp * c_damp / (8.0 * kappa);
    let c0 = 0.5 + a.abs() + 0.5 * b.abs() + (p as f64 - 1.0) * s2;
    let c_mono = c0 + 2.0 * big_a * big_a / kappa;
    let c_lip = 1.0 + a.abs() + b.abs() + sigma0 + 1.5 * (1.0 + c_damp);
    let c_growth = 7.75 * eps + 2.0 + a.abs() + b.abs() + c_damp + sigma0;
    let c = C_MARGIN
        * [c_mono, c_lip, c_growth, 1.0, horizon.powf(1.0 / 32.0)].into_iter().fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovSpec {
        u: Arc::new(move |s| eps * (1.0 + 0.25 * s[0].powi(4) + 0.5 * s[1] * s[1])),
        grad_u: Arc::new(move |s, g| {
            g[0] = eps * s[0].powi(3);
            g[1] = eps * s[1];
        }),
        hess_u: Arc::new(move |s, h| {
            h[0] = 3.0 * eps * s[0] * s[0];
            h[1] = 0.0;
            h[2] = 0.0;
            h[3] = eps;
        }),
        u_bar: Arc::new(|_| 0.0),
        rho,
        c,
        p,
        q0,
        q1: f64::INFINITY,
        r: 2.0,
        horizon,
    })
}

/// Region where a model's constants are claimed to hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleRegion {
    pub description: String,
    /// Euclidean radius; `inf` means all of R^d.
    #[serde(with = "crate::serde_float")]
    pub radius: f64,
}

impl AdmissibleRegion {
    pub fn whole_space(d: usize) -> Self {
        AdmissibleRegion { description: format!("all of R^{d}"), radius: f64::INFINITY }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        norm(x) <= self.radius
    }
}

#[derive(Debug, Clone)]
pub struct ModelCatalogEntry {
    pub id: &'static str,
    pub model: SdeModel,
    pub admissible_region: AdmissibleRegion,
    pub default_x0: Vec<f64>,
    pub params: Vec<(String, f64)>,
    pub notes: &'static str,
}

/// Static description of a catalog model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogInfo {
    pub id: &'static str,
    pub dimension: usize,
    pub noise_dimension: usize,
    pub params: Vec<(&'static str, f64)>,
    pub default_x0: Vec<f64>,
    pub exact_solution: bool,
    pub lyapunov: bool,
    pub notes: &'static str,
}

const GBM_NOTES: &str = "globally Lipschitz validation case with closed-form solution; no Lyapunov data";
const GL_NOTES: &str = "U = eps (1 + x^2), eps = 0.45, rho from the quadratic-in-x^2 bound with 10% margin";
const VDP_NOTES: &str =
    "U = eps (1 + x^4/4 + v^2/2), eps = min(1, 2 c_damp / sigma0^2); c from closed-form absorption of cross terms";

pub const MODEL_IDS: [&str; 3] = ["gbm", "ginzburg-landau", "vdp"];

/// Default parameters, default initial state and notes.
type Defaults = (Vec<(&'static str, f64)>, Vec<f64>, &'static str);

fn defaults(id: &str) -> Result<Defaults> {
    Ok(match id {
        "gbm" => (vec![("a", 0.05), ("b", 0.2)], vec![1.0], GBM_NOTES),
        "ginzburg-landau" => (vec![("alpha", 1.0), ("beta", 1.0), ("sigma0", 1.0)], vec![1.0], GL_NOTES),
        "vdp" => (vec![("a", 1.0), ("b", 0.0), ("c_damp", 1.0), ("sigma0", 0.5)], vec![1.0, 0.0], VDP_NOTES),
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

pub fn catalog() -> Vec<CatalogInfo> {
    MODEL_IDS
        .iter()
        .map(|id| {
            let entry = catalog_entry(id, &[], DEFAULT_HORIZON).expect("catalog defaults are valid");
            let (params, _, _) = defaults(id).expect("known id");
            CatalogInfo {
                id: entry.id,
                dimension: entry.model.d,
                noise_dimension: entry.model.m,
                params,
                default_x0: entry.default_x0,
                exact_solution: entry.model.exact_solution.is_some(),
                lyapunov: entry.model.lyapunov.is_some(),
                notes: entry.notes,
            }
        })
        .collect()
}

/// Builds catalog model `id`, overriding default parameters by name.
pub fn catalog_entry(id: &str, overrides: &[(String, f64)], horizon: f64) -> Result<ModelCatalogEntry> {
    let (defaults, default_x0, notes) = defaults(id)?;
    let mut params: Vec<(String, f64)> = defaults.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    for (key, value) in overrides {
        match params.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = *value,
            None => {
                return Err(Error::invalid(format!(
                    "model '{id}' has no parameter '{key}' (known: {})",
                    defaults.iter().map(|(k, _)| *k).collect::<Vec<_>>().join(", ")
                )))
            }
        }
    }
    let v: Vec<f64> = params.iter().map(|(_, v)| *v).collect();
    let (id, model) = match id {
        "gbm" => ("gbm", model_gbm(v[0], v[1])),
        "ginzburg-landau" => ("ginzburg-landau", model_ginzburg_landau_on(v[0], v[1], v[2], horizon)?),
        _ => ("vdp", model_vdp_on(v[0], v[1], v[2], v[3], horizon)?),
    };
    Ok(ModelCatalogEntry {
        id,
        admissible_region: AdmissibleRegion::whole_space(model.d),
        model,
        default_x0,
        params,
        notes,
    })
}

/// Seeded sampler of points and pairs in a centered ball.
///
/// Points alternate between uniform-in-ball and Gaussian draws (standard
/// deviation `radius / 3`, pulled back onto the ball). Every third pair is
/// near-coincident at distance `near_distance`, where cancellation in the
/// monotonicity quotient is worst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BallSampler {
    #[serde(with = "crate::serde_float")]
    pub radius: f64,
    pub seed: u64,
    pub near_distance: f64,
}

impl BallSampler {
    pub fn new(radius: f64, seed: u64) -> Self {
        BallSampler { radius, seed, near_distance: 1e-3 }
    }

    fn uniform(&self, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        let mut x: Vec<f64> = (0..d).map(|_| std_normal(rng)).collect();
        let n = norm(&x).max(f64::MIN_POSITIVE);
        let r = self.radius * rng.random::<f64>().powf(1.0 / d as f64);
        x.iter_mut().for_each(|v| *v *= r / n);
        x
    }

    fn gaussian(&self, d: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<f64> {
        let mut x: Vec<f64> = (0..d).map(|_| self.radius / 3.0 * std_normal(rng)).collect();
        let n = norm(&x);
        if n > self.radius {
            x.iter_mut().for_each(|v| *v *= self.radius / n);
        }
        x
    }

    pub fn point(&self, d: usize, i: usize) -> Vec<f64> {
        let mut rng = keyed_stream(self.seed, DOMAIN_SAMPLER, 0, i as u64);
        if i.is_multiple_of(2) {
            self.uniform(d, &mut rng)
        } else {
            self.gaussian(d, &mut rng)
        }
    }

    pub fn pair(&self, d: usize, i: usize) -> (Vec<f64>, Vec<f64>) {
        let mut rng = keyed_stream(self.seed, DOMAIN_SAMPLER, 1, i as u64);
        match i % 3 {
            0 => (self.uniform(d, &mut rng), self.uniform(d, &mut rng)),
            1 => {
                let x = self.uniform(d, &mut rng);
                let mut dir: Vec<f64> = (0..d).map(|_| std_normal(&mut rng)).collect();
                let n = norm(&dir).max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|v| *v *= self.near_distance / n);
                let y = x.iter().zip(&dir).map(|(a, b)| a + b).collect();
                (x, y)
            }
            _ => (self.gaussian(d, &mut rng), self.gaussian(d, &mut rng)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    /// `<grad U, mu> + 1/2 <sigma, Hess U sigma>_F + 1/2 |sigma^T grad U|^2 + Ubar <= rho U`.
    Generator,
    /// Local monotonicity quotient against `c` plus the `U`, `Ubar` terms.
    Monotonicity,
    /// `(1/c) |x|^{1/c} <= 1 + |U(x)|`.
    Coercivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub condition: Condition,
    pub x: Vec<f64>,
    pub y: Option<Vec<f64>>,
    #[serde(with = "crate::serde_float")]
    pub lhs: f64,
    #[serde(with = "crate::serde_float")]
    pub rhs: f64,
    /// `rhs - lhs`; negative for a violation.
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub condition: Condition,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` seen.
    #[serde(with = "crate::serde_float")]
    pub min_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub horizon: f64,
    #[serde(with = "crate::serde_float")]
    pub radius: f64,
    pub seed: u64,
    pub summaries: Vec<ConditionSummary>,
    /// Coincident pairs skipped because the quotient is undefined.
    pub skipped_pairs: usize,
    /// The worst violations, at most [`MAX_LISTED_VIOLATIONS`].
    pub violations: Vec<Violation>,
}

pub const MAX_LISTED_VIOLATIONS: usize = 50;

impl ConditionReport {
    pub fn total_violations(&self) -> usize {
        self.summaries.iter().map(|s| s.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.total_violations() == 0
    }

    pub fn summary(&self, condition: Condition) -> Option<&ConditionSummary> {
        self.summaries.iter().find(|s| s.condition == condition)
    }
}

/// Rounding allowance when comparing two sides of an inequality.
#[inline]
fn violates(lhs: f64, rhs: f64) -> bool {
    !(lhs <= rhs + 1e-9 * (1.0 + rhs.abs().max(lhs.abs())))
}

/// Left and right side of the generator inequality at `x`.
pub fn generator_sides(model: &SdeModel, spec: &LyapunovSpec, x: &[f64]) -> (f64, f64) {
    let (d, m) = (model.d, model.m);
    let mu = model.drift_at(x);
    let sigma = model.diffusion_at(x);
    let grad = spec.grad_at(x);
    let hess = spec.hess_at(x);
    let mut frob = 0.0;
    for i in 0..d {
        for j in 0..m {
            let h_sigma: f64 = (0..d).map(|k| hess[i * d + k] * sigma[k * m + j]).sum();
            frob += sigma[i * m + j] * h_sigma;
        }
    }
    let st_grad_sq: f64 = (0..m).map(|j| (0..d).map(|i| sigma[i * m + j] * grad[i]).sum::<f64>().powi(2)).sum();
    let lhs = dot(&grad, &mu) + 0.5 * frob + 0.5 * st_grad_sq + (spec.u_bar)(x);
    (lhs, spec.rho * (spec.u)(x))
}

/// Left and right side of the local monotonicity inequality; `None` for `x = y`.
pub fn monotonicity_sides(
    model: &SdeModel,
    spec: &LyapunovSpec,
    horizon: f64,
    x: &[f64],
    y: &[f64],
) -> Option<(f64, f64)> {
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let dist_sq = dot(&diff, &diff);
    if dist_sq == 0.0 {
        return None;
    }
    let dmu: Vec<f64> = model.drift_at(x).iter().zip(model.drift_at(y)).map(|(a, b)| a - b).collect();
    let dsigma_sq: f64 = model.diffusion_at(x).iter().zip(model.diffusion_at(y)).map(|(a, b)| (a - b).powi(2)).sum();
    let c = spec.c;
    let coef = (spec.p as f64 - 1.0) * (1.0 + 1.0 / c) / 2.0;
    let lhs = (dot(&diff, &dmu) + coef * dsigma_sq) / dist_sq;
    let growth = (spec.rho * horizon).exp();
    let u_term = ((spec.u)(x).abs() + (spec.u)(y).abs()) / (2.0 * spec.q0 * horizon * growth);
    let ubar_term = if spec.q1.is_infinite() {
        0.0
    } else {
        ((spec.u_bar)(x).abs() + (spec.u_bar)(y).abs()) / (2.0 * spec.q1 * growth)
    };
    Some((lhs, c + u_term + ubar_term))
}

pub fn coercivity_sides(spec: &LyapunovSpec, x: &[f64]) -> (f64, f64) {
    let c = spec.c;
    (norm(x).powf(1.0 / c) / c, 1.0 + (spec.u)(x).abs())
}

/// Checks the three conditions at `n_points` sampled points and pairs.
pub fn check_conditions(
    model: &SdeModel,
    spec: &LyapunovSpec,
    horizon: f64,
    sampler: &BallSampler,
    n_points: usize,
) -> Result<ConditionReport> {
    if n_points == 0 {
        return Err(Error::invalid("need at least one sample point"));
    }
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let d = model.d;
    type Sample = (Vec<f64>, Vec<f64>, Vec<f64>, (f64, f64), (f64, f64), Option<(f64, f64)>);
    let samples: Vec<Sample> = par_map_paths(0..n_points, |i| {
        let x = sampler.point(d, i);
        let (px, py) = sampler.pair(d, i);
        let gen = generator_sides(model, spec, &x);
        let coer = coercivity_sides(spec, &x);
        let mono = monotonicity_sides(model, spec, horizon, &px, &py);
        (x, px, py, gen, coer, mono)
    });

    let mut summaries: Vec<ConditionSummary> = [Condition::Generator, Condition::Monotonicity, Condition::Coercivity]
        .into_iter()
        .map(|condition| ConditionSummary { condition, checked: 0, violations: 0, min_margin: f64::INFINITY })
        .collect();
    let mut violations = Vec::new();
    let mut skipped = 0;
    let mut record = |idx: usize, sides: (f64, f64), x: &[f64], y: Option<&[f64]>| {
        let (lhs, rhs) = sides;
        let s = &mut summaries[idx];
        s.checked += 1;
        s.min_margin = s.min_margin.min(rhs - lhs);
        if violates(lhs, rhs) {
            s.violations += 1;
            violations.push(Violation {
                condition: s.condition,
                x: x.to_vec(),
                y: y.map(<[f64]>::to_vec),
                lhs,
                rhs,
                margin: rhs - lhs,
            });
        }
    };
    for (x, px, py, gen, coer, mono) in &samples {
        record(0, *gen, x, None);
        match mono {
            Some(sides) => record(1, *sides, px, Some(py)),
            None => skipped += 1,
        }
        record(2, *coer, x, None);
    }
    violations.sort_by(|a, b| a.margin.total_cmp(&b.margin));
    violations.truncate(MAX_LISTED_VIOLATIONS);
    Ok(ConditionReport {
        horizon,
        radius: sampler.radius,
        seed: sampler.seed,
        summaries,
        skipped_pairs: skipped,
        violations,
    })
}
