//! Shared data model: SDE models, Lyapunov data, uniform grids, trajectories
//! and Monte Carlo error tables.
//!
//! Vectors are plain `f64` slices. Matrices are row-major: a diffusion value
//! `sigma` in R^{d x m} stores entry (i, j) at `sigma[i * m + j]`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schemes::SchemeKind;

/// `f(x, out)`: writes a vector or row-major matrix valued function of `x` into `out`.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `f(x)`: scalar function of the state.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `f(x0, t, w_t, out)`: pathwise closed-form solution driven by `W_t`.
pub type ExactSolution = Arc<dyn Fn(&[f64], f64, &[f64], &mut [f64]) + Send + Sync>;

/// An Itô SDE `dX = mu(X) dt + sigma(X) dW` on R^d driven by m-dimensional noise.
#[derive(Clone)]
pub struct SdeModel {
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub drift: VectorField,
    pub diffusion: VectorField,
    pub exact_solution: Option<ExactSolution>,
    pub lyapunov: Option<LyapunovSpec>,
}

impl SdeModel {
    pub fn new(
        name: impl Into<String>,
        d: usize,
        m: usize,
        drift: VectorField,
        diffusion: VectorField,
    ) -> Result<Self> {
        if d == 0 || m == 0 {
            return Err(Error::invalid("state and noise dimensions must be positive"));
        }
        Ok(SdeModel { name: name.into(), d, m, drift, diffusion, exact_solution: None, lyapunov: None })
    }

    pub fn with_exact_solution(mut self, exact: ExactSolution) -> Self {
        self.exact_solution = Some(exact);
        self
    }

    pub fn with_lyapunov(mut self, spec: LyapunovSpec) -> Self {
        self.lyapunov = Some(spec);
        self
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        (self.drift)(x, &mut out);
        out
    }

    pub fn diffusion_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d * self.m];
        (self.diffusion)(x, &mut out);
        out
    }

    pub fn lyapunov(&self) -> Result<&LyapunovSpec> {
        self.lyapunov.as_ref().ok_or_else(|| Error::NoLyapunov(self.name.clone()))
    }

    pub(crate) fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Dimension { expected: self.d, got: x.len() });
        }
        Ok(())
    }
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("d", &self.d)
            .field("m", &self.m)
            .field("exact_solution", &self.exact_solution.is_some())
            .field("lyapunov", &self.lyapunov)
            .finish()
    }
}

/// Lyapunov-type data for the exponential-moment and local-monotonicity conditions.
///
/// `u_bar` is the integrand added to the generator inequality; `q0`/`q1` may be
/// `f64::INFINITY`. `horizon` is the largest time horizon the constants were
/// derived for: the monotonicity right-hand side shrinks as the horizon grows.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub u: ScalarField,
    pub grad_u: VectorField,
    /// Row-major d x d.
    pub hess_u: VectorField,
    pub u_bar: ScalarField,
    pub rho: f64,
    pub c: f64,
    pub p: u32,
    pub q0: f64,
    pub q1: f64,
    pub r: f64,
    pub horizon: f64,
}

impl LyapunovSpec {
    pub fn grad_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        (self.grad_u)(x, &mut out);
        out
    }

    pub fn hess_at(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len() * x.len()];
        (self.hess_u)(x, &mut out);
        out
    }

    /// Residual of `1/p + 1/q0 + 1/q1 - 1/r`; zero when the Hölder exponents are consistent.
    pub fn holder_residual(&self) -> f64 {
        1.0 / self.p as f64 + 1.0 / self.q0 + 1.0 / self.q1 - 1.0 / self.r
    }
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("rho", &self.rho)
            .field("c", &self.c)
            .field("p", &self.p)
            .field("q0", &self.q0)
            .field("q1", &self.q1)
            .field("r", &self.r)
            .field("horizon", &self.horizon)
            .finish()
    }
}

/// Uniform grid `t_k = k T / N`, `k = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub horizon: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::invalid("grid needs at least one subinterval"));
        }
        Ok(GridSpec { horizon, steps })
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn grid_point(&self, k: usize) -> Result<f64> {
        if k > self.steps {
            return Err(Error::IndexOutOfRange { index: k, steps: self.steps });
        }
        Ok(self.point(k))
    }

    #[inline]
    pub(crate) fn point(&self, k: usize) -> f64 {
        if k == self.steps {
            return self.horizon;
        }
        k as f64 * self.horizon / self.steps as f64
    }

    /// Index of the largest grid point strictly below `t` (0 for `t = 0`).
    ///
    /// Interior grid points map to the previous index: `floor_index(t_k) = k - 1`.
    pub fn floor_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        if t == 0.0 {
            return Ok(0);
        }
        let guess = (t * self.steps as f64 / self.horizon).ceil() as usize;
        let mut k = guess.saturating_sub(1).min(self.steps - 1);
        // the guess can be off by one either way after rounding
        while k > 0 && self.point(k) >= t {
            k -= 1;
        }
        while k + 1 < self.steps && self.point(k + 1) < t {
            k += 1;
        }
        Ok(k)
    }
}

/// One trajectory on a uniform grid.
///
/// `states` is flat: state k occupies `states[k * dim..(k + 1) * dim]`.
/// `tau_index` is the first k with `|Y_k| > threshold`, or `N` if there is none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRun {
    pub kind: SchemeKind,
    pub grid: GridSpec,
    pub dim: usize,
    pub states: Vec<f64>,
    pub tau_index: usize,
    /// The stopping indicator switched off at some step (stopped scheme only).
    pub frozen: bool,
    /// The path left the floating-point range and was saturated.
    pub diverged: bool,
}

impl SchemeRun {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.grid.steps)
    }

    /// Stopping time `tau^N = tau_index * T / N`.
    pub fn tau(&self) -> f64 {
        self.grid.point(self.tau_index)
    }

    pub fn max_norm(&self) -> f64 {
        self.states.chunks_exact(self.dim).map(norm).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub paths: usize,
    #[serde(with = "crate::serde_float")]
    pub sup_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_gridpoint_errors: Option<Vec<f64>>,
    #[serde(with = "crate::serde_float")]
    pub std_error: f64,
    pub seed: u64,
    pub overflow_fraction: f64,
}

/// Per-N strong error estimates, `sup_k || X_{t_k} - Y_{t_k} ||_{L^r}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub scheme: String,
    pub model: String,
    pub r: f64,
    pub horizon: f64,
    pub rows: Vec<ErrorRow>,
}

/// Least-squares fit of `log(error)` against `log(T/N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub points: Vec<(f64, f64)>,
    /// Rows dropped because their error was zero or non-finite.
    #[serde(default)]
    pub excluded: usize,
}

#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_point_examples() {
        let g = GridSpec::new(1.0, 4).unwrap();
        assert_eq!(g.grid_point(0).unwrap(), 0.0);
        assert_eq!(g.grid_point(4).unwrap(), 1.0);
        let g = GridSpec::new(2.0, 8).unwrap();
        assert_eq!(g.grid_point(3).unwrap(), 0.75);
        assert!(matches!(g.grid_point(9), Err(Error::IndexOutOfRange { index: 9, steps: 8 })));
    }

    #[test]
    fn floor_index_left_open_convention() {
        let g = GridSpec::new(1.0, 4).unwrap();
        assert_eq!(g.floor_index(0.0).unwrap(), 0);
        assert_eq!(g.floor_index(0.3).unwrap(), 1);
        assert_eq!(g.floor_index(0.5).unwrap(), 1);
        assert_eq!(g.floor_index(0.25).unwrap(), 0);
        assert_eq!(g.floor_index(1.0).unwrap(), 3);
        assert!(g.floor_index(1.5).is_err());
        assert!(g.floor_index(-0.1).is_err());
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(GridSpec::new(0.0, 4).is_err());
        assert!(GridSpec::new(1.0, 0).is_err());
        assert!(GridSpec::new(f64::NAN, 4).is_err());
    }

    #[test]
    fn holder_residual_matches_intro_parameters() {
        let spec = LyapunovSpec {
            u: Arc::new(|_| 0.0),
            grad_u: Arc::new(|_, g| g.fill(0.0)),
            hess_u: Arc::new(|_, h| h.fill(0.0)),
            u_bar: Arc::new(|_| 0.0),
            rho: 0.0,
            c: 1.0,
            p: 4,
            q0: 4.0,
            q1: f64::INFINITY,
            r: 2.0,
            horizon: 1.0,
        };
        assert!(spec.holder_residual().abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn floor_index_just_after_grid_point(
                steps in 1usize..2000,
                horizon in 0.01f64..50.0,
                k_frac in 0.0f64..1.0,
                eps_frac in 1e-6f64..0.999,
            ) {
                let g = GridSpec::new(horizon, steps).unwrap();
                let k = ((k_frac * steps as f64) as usize).min(steps - 1);
                let t = g.grid_point(k).unwrap() + eps_frac * g.step_size();
                prop_assume!(t <= horizon && t > g.grid_point(k).unwrap());
                prop_assert_eq!(g.floor_index(t).unwrap(), k);
            }
        }
    }
}
