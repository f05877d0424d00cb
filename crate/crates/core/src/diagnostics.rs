//! Computable side conditions of the convergence analysis.
//!
//! * [`epsilon_n`]: the exponential-moment growth rate `eps^N`, evaluated in
//!   log space so that the tiny-`N` regime returns `+inf` instead of NaN.
//! * [`moment_bound`]: the Gronwall bound on `E[U(Y_t)]`.
//! * [`n0`] and [`preflight`]: admissibility of growth constants `(c, p)`.
//! * [`RegularityChecker`]: the pathwise bound on `|Y_t - Y_floor(t)|`.
//! * [`exp_moment_estimate`] and [`stopping_probability`]: Monte Carlo
//!   estimates of the exponential-moment functional and of `P[tau^N < T]`.

use serde::{Deserialize, Serialize};

use crate::brownian::{generate_path, BrownianGrid};
use crate::error::{Error, Result};
use crate::models::BallSampler;
use crate::rng::{keyed_stream, DOMAIN_REGULARITY};
use crate::schemes::{interpolate, run_path, run_path_with_increments, SchemeKind, OVERFLOW_CAP};
use crate::stats::{mean_and_stderr, par_map_paths};
use crate::types::{norm, GridSpec, LyapunovSpec, SchemeRun, SdeModel};

/// Explanation attached to reports that print `eps^N`.
pub const EPSILON_NOTE: &str = "eps^N follows the stated closed form verbatim; the intermediate \
bound in its derivation has c^{p+1} instead of c^{2p+1} in the h^{31/32} exponent term and an \
additional 2 rho c^{p+1} h^{31/32} term, so the two differ for rho > 0";

/// Constants `(c, p)` with the problem data they are evaluated for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    pub c: f64,
    pub p: u32,
    pub horizon: f64,
    pub m: usize,
    pub rho: f64,
    pub n: usize,
}

impl AnalysisConstants {
    pub fn new(c: f64, p: u32, horizon: f64, m: usize, rho: f64, n: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::invalid("N, m and p must be positive"));
        }
        if !(rho >= 0.0) {
            return Err(Error::invalid(format!("rho must be nonnegative, got {rho}")));
        }
        // c >= T^{1/32}, with a relative allowance for the rounding of the power
        let c_min = horizon.powf(1.0 / 32.0);
        if !(c >= c_min * (1.0 - 1e-12)) {
            return Err(Error::Inadmissible(format!("c = {c} is below T^(1/32) = {c_min}")));
        }
        Ok(AnalysisConstants { c, p, horizon, m, rho, n })
    }

    pub fn from_spec(spec: &LyapunovSpec, horizon: f64, m: usize, n: usize) -> Result<Self> {
        Self::new(spec.c, spec.p, horizon, m, spec.rho, n)
    }

    pub fn with_n(&self, n: usize) -> Self {
        AnalysisConstants { n, ..*self }
    }

    fn h(&self) -> f64 {
        self.horizon / self.n as f64
    }

    fn g(&self) -> f64 {
        self.horizon.powf(0.75) + (self.m as f64).sqrt()
    }
}

#[inline]
fn ln_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + (-(a - b).abs()).exp().ln_1p()
}

/// `ln eps^N`.
pub fn log_epsilon_n(k: &AnalysisConstants) -> f64 {
    let p = k.p as f64;
    let lc = k.c.ln();
    let lh = k.h().ln();
    let l_inv = -lh;
    let lg = k.g().ln();
    let l3 = 3f64.ln();
    let l4 = 4f64.ln();
    let lm_half = 0.5 * (k.m as f64).ln();

    let exponent = ((p + 0.5) * l4 + (2.0 * p + 3.0) * lc + 3.0 / 16.0 * lh + lg).exp()
        + (k.c * k.c + 3f64.powf(p) * k.c.powf(2.0 * p + 1.0)) * (31.0 / 32.0 * lh).exp();

    // first bracketed term
    let inner = ln_add(2f64.ln() + (p + 1.0) * lc + 7.0 / 32.0 * lh + lg, 16f64.ln() + lm_half + 0.5 * lh);
    let t1 = l4 + (2.0 * p + 2.0) * lc + 2.0 * p * l3 + l_inv / 16.0 + inner;
    // A (A + 4 c^2 (N/T)^{1/32})
    let la = ln_add(
        104f64.ln() + lm_half + (p + 1.0) * lc + 15.0 / 32.0 * lh,
        2f64.ln() + (2.0 * p + 2.0) * lc + p * l3 + 3.0 / 16.0 * lh + lg,
    );
    let t2 = la + ln_add(la, l4 + 2.0 * lc + l_inv / 32.0);
    let tail = 2.0 * p * l3 + l4 + (4.0 * p + 2.0) * lc + l_inv / 16.0;
    exponent + ln_add(t1, t2) + tail
}

/// `eps^N`; `+inf` where the closed form overflows.
pub fn epsilon_n(k: &AnalysisConstants) -> f64 {
    log_epsilon_n(k).exp()
}

/// Gronwall constants `(C, Cbar)` of the moment bound.
pub fn moment_bound_constants(k: &AnalysisConstants) -> (f64, f64) {
    let p = k.p as f64;
    let c = k.c;
    let h = k.h();
    let big_c =
        k.rho + 2.0 * c.powf(p + 3.0) * h.powf(15.0 / 16.0) + 32.0 * c.powf(3.0 * p + 4.0) * h.powf(13.0 / 32.0);
    let c_bar = h.powf(13.0 / 32.0)
        * (32.0 * c.powf(3.0 * p + 4.0) + 4f64.powf(p + 3.0) / 2.0 * c.powf(p * p + 4.0 * p + 4.0) * h.powf(p));
    (big_c, c_bar)
}

/// `EU0 e^{Ct} + (Cbar / C)(e^{Ct} - 1)`, with limit `Cbar t` for `C = 0`.
pub fn moment_bound(k: &AnalysisConstants, t: f64, eu0: f64) -> Result<f64> {
    if !(eu0 >= 0.0) {
        return Err(Error::invalid(format!("E[U(Y_0)] must be nonnegative, got {eu0}")));
    }
    if !(0.0..=k.horizon).contains(&t) {
        return Err(Error::TimeOutOfRange { t, horizon: k.horizon });
    }
    let (big_c, c_bar) = moment_bound_constants(k);
    let head = if eu0 == 0.0 { 0.0 } else { eu0 * (big_c * t).exp() };
    let tail = if c_bar == 0.0 || t == 0.0 {
        0.0
    } else if big_c == 0.0 {
        c_bar * t
    } else {
        c_bar / big_c * (big_c * t).exp_m1()
    };
    Ok(head + tail)
}

/// `2 c^{p+1} (T/N)^{7/32} (T^{3/4} + sqrt(m))`.
pub fn regularity_bound(k: &AnalysisConstants) -> f64 {
    2.0 * k.c.powf(k.p as f64 + 1.0) * k.h().powf(7.0 / 32.0) * k.g()
}

/// `C1 exp(1 - log(T/N)^2 / (24 c^5 e^{rho T}))`.
pub fn stopping_probability_bound(k: &AnalysisConstants, c1: f64) -> f64 {
    let l = k.h().ln();
    c1 * (1.0 - l * l / (24.0 * k.c.powi(5) * (k.rho * k.horizon).exp())).exp()
}

/// Smallest `N` from which both growth conditions on the stopping radius and
/// the regularity scale hold for every larger `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct N0 {
    /// `ln N0`; finite even when `N0` itself is not representable.
    #[serde(with = "crate::serde_float")]
    pub ln_n0: f64,
    /// `N0`, `inf` when beyond the f64 range.
    #[serde(with = "crate::serde_float")]
    pub n0: f64,
}

impl N0 {
    pub fn covers(&self, n: usize) -> bool {
        (n as f64).ln() >= self.ln_n0
    }
}

/// Computes `N0` in closed form with `l = ln(N/T)`.
///
/// The radius condition `e^{sqrt l} <= c e^{l/(32p)}` holds for all `l` when
/// `ln c >= 8p`, otherwise for `sqrt l >= 16p (1 + sqrt(1 - ln c / (8p)))`.
/// The scale condition is linear in `l`.
pub fn n0(c: f64, p: u32, horizon: f64, m: usize) -> N0 {
    let p = p as f64;
    let disc = 1.0 - c.ln() / (8.0 * p);
    let l_radius = if disc <= 0.0 { 0.0 } else { (16.0 * p * (1.0 + disc.sqrt())).powi(2) };
    let g = horizon.powf(0.75) + (m as f64).sqrt();
    let l_scale = (p * c.ln() + g.ln()) / (7.0 / 32.0 + 1.0 / (32.0 * p));
    let l = l_radius.max(l_scale).max(0.0);
    let ln_n0 = horizon.ln() + l;
    let n0 = (horizon * l.exp()).ceil().max(1.0);
    N0 { ln_n0: if n0.is_finite() { n0.ln() } else { ln_n0 }, n0 }
}

/// Sampled check of the local Lipschitz and growth conditions for `(c, p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreflightReport {
    pub c: f64,
    pub p: u32,
    pub points: usize,
    /// Smallest `c (1 + |x|^p + |y|^p) |x - y| - (|mu(x) - mu(y)| + |sigma(x) - sigma(y)|_F)`
    /// relative to the right side.
    #[serde(with = "crate::serde_float")]
    pub lipschitz_min_margin: f64,
    /// Same for the growth bound on `|Ubar| + |Hess U| + |grad U| + |U| + |mu| + |sigma|_F`.
    #[serde(with = "crate::serde_float")]
    pub growth_min_margin: f64,
    pub n0: N0,
}

/// Runs the sampled growth check; fails with [`Error::Inadmissible`] on a violation.
pub fn preflight(
    model: &SdeModel,
    spec: &LyapunovSpec,
    horizon: f64,
    sampler: &BallSampler,
    points: usize,
) -> Result<PreflightReport> {
    let d = model.d;
    let c = spec.c;
    let p = spec.p as i32;
    let margins: Vec<(f64, f64)> = par_map_paths(0..points, |i| {
        let (x, y) = sampler.pair(d, i);
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dmu = norm(&model.drift_at(&x).iter().zip(model.drift_at(&y)).map(|(a, b)| a - b).collect::<Vec<_>>());
        let dsig =
            norm(&model.diffusion_at(&x).iter().zip(model.diffusion_at(&y)).map(|(a, b)| a - b).collect::<Vec<_>>());
        let lip_rhs = c * (1.0 + norm(&x).powi(p) + norm(&y).powi(p)) * norm(&diff);
        let lip = if lip_rhs > 0.0 { (lip_rhs - dmu - dsig) / lip_rhs } else { f64::INFINITY };

        let z = sampler.point(d, i);
        // Frobenius norm bounds the operator norm of the Hessian from above
        let growth_lhs = (spec.u_bar)(&z).abs()
            + norm(&spec.hess_at(&z))
            + norm(&spec.grad_at(&z))
            + (spec.u)(&z).abs()
            + norm(&model.drift_at(&z))
            + norm(&model.diffusion_at(&z));
        let growth_rhs = c * (1.0 + norm(&z).powi(p));
        (lip, (growth_rhs - growth_lhs) / growth_rhs)
    });
    let lipschitz_min_margin = margins.iter().map(|m| m.0).fold(f64::INFINITY, f64::min);
    let growth_min_margin = margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min);
    if lipschitz_min_margin < -1e-12 || growth_min_margin < -1e-12 || lipschitz_min_margin.is_nan() {
        return Err(Error::Inadmissible(format!(
            "growth constants c = {c}, p = {p} fail the sampled check \
             (Lipschitz margin {lipschitz_min_margin:.3e}, growth margin {growth_min_margin:.3e})"
        )));
    }
    Ok(PreflightReport {
        c,
        p: spec.p,
        points,
        lipschitz_min_margin,
        growth_min_margin,
        n0: n0(c, spec.p, horizon, model.m),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularitySample {
    pub t: f64,
    pub lhs: f64,
    #[serde(with = "crate::serde_float")]
    pub rhs: f64,
    pub pass: bool,
}

impl RegularitySample {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Checks `|Y_t - Y_floor(t)| <= 2 c^{p+1} (T/N)^{7/32} (T^{3/4} + sqrt m)` at
/// intra-step times, after a passing growth preflight.
#[derive(Debug, Clone)]
pub struct RegularityChecker {
    pub constants: AnalysisConstants,
    pub bound: f64,
    pub preflight: PreflightReport,
}

impl RegularityChecker {
    pub fn new(
        model: &SdeModel,
        spec: &LyapunovSpec,
        grid: &GridSpec,
        sampler: &BallSampler,
        points: usize,
    ) -> Result<Self> {
        let pre = preflight(model, spec, grid.horizon, sampler, points)?;
        let constants = AnalysisConstants::from_spec(spec, grid.horizon, model.m, grid.steps)?;
        Ok(RegularityChecker { bound: regularity_bound(&constants), constants, preflight: pre })
    }

    /// Whether the bound is claimed at this `N` (it is proved for `N >= N0`).
    pub fn claim_applies(&self) -> bool {
        self.preflight.n0.covers(self.constants.n)
    }

    /// Evaluates the bound at explicit times `ts` in `[0, T]`.
    pub fn check_times(
        &self,
        model: &SdeModel,
        run: &SchemeRun,
        path: &BrownianGrid,
        ts: &[f64],
        sub_seed: u64,
    ) -> Result<Vec<RegularitySample>> {
        let grid = run.grid;
        ts.iter()
            .map(|&t| {
                let k = grid.floor_index(t)?;
                let s = (t - grid.point(k)).clamp(0.0, grid.step_size());
                let bridge = path.coarse_offset(grid.steps, k, s, sub_seed)?;
                let y = interpolate(model, run, k, s, &bridge)?;
                let base = run.state(k);
                let lhs = norm(&y.iter().zip(base).map(|(a, b)| a - b).collect::<Vec<_>>());
                Ok(RegularitySample { t, lhs, rhs: self.bound, pass: lhs <= self.bound })
            })
            .collect()
    }

    /// `samples` uniform times drawn from `(seed, path_index)`.
    pub fn check(
        &self,
        model: &SdeModel,
        run: &SchemeRun,
        path: &BrownianGrid,
        samples: usize,
        seed: u64,
    ) -> Result<Vec<RegularitySample>> {
        use rand::Rng;
        let mut rng = keyed_stream(seed, DOMAIN_REGULARITY, 0, path.path_index);
        let ts: Vec<f64> = (0..samples).map(|_| rng.random::<f64>() * run.grid.horizon).collect();
        self.check_times(model, run, path, &ts, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub n: usize,
    pub paths: usize,
    pub samples: usize,
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
    pub max_lhs: f64,
    pub pass_fraction: f64,
    pub n0: N0,
    pub claim_applies: bool,
}

/// Runs `paths` stopped-scheme paths and checks `samples_per_path` times on each.
#[allow(clippy::too_many_arguments)]
pub fn regularity_study(
    model: &SdeModel,
    spec: &LyapunovSpec,
    grid: &GridSpec,
    x0: &[f64],
    paths: usize,
    samples_per_path: usize,
    seed: u64,
    sampler: &BallSampler,
) -> Result<RegularityReport> {
    let checker = RegularityChecker::new(model, spec, grid, sampler, 10_000)?;
    let per_path: Vec<Result<Vec<RegularitySample>>> = par_map_paths(0..paths, |i| {
        let path = generate_path(grid.horizon, grid.steps, model.m, seed, i as u64)?;
        let run = run_path(SchemeKind::StoppedBit, model, grid, x0, &path)?;
        checker.check(model, &run, &path, samples_per_path, seed)
    });
    let mut total = 0usize;
    let mut passed = 0usize;
    let mut max_lhs: f64 = 0.0;
    for r in per_path {
        for s in r? {
            total += 1;
            passed += usize::from(s.pass);
            max_lhs = max_lhs.max(s.lhs);
        }
    }
    Ok(RegularityReport {
        n: grid.steps,
        paths,
        samples: total,
        bound: checker.bound,
        max_lhs,
        pass_fraction: if total == 0 { 1.0 } else { passed as f64 / total as f64 },
        n0: checker.preflight.n0,
        claim_applies: checker.claim_applies(),
    })
}

/// Monte Carlo estimate of `E[exp(e^{-rho (t^tau)} U(Y_t) + int_0^{t^tau} e^{-rho r} Ubar(Y_r) dr)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMomentEstimate {
    pub n: usize,
    pub t: f64,
    #[serde(with = "crate::serde_float")]
    pub estimate: f64,
    pub std_error: f64,
    /// `E[exp(U(Y_0))] e^{eps^N t}`.
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
    #[serde(with = "crate::serde_float")]
    pub epsilon_n: f64,
    /// Fraction of paths whose exponent overflowed and was capped.
    pub saturated_fraction: f64,
}

impl ExpMomentEstimate {
    pub fn saturated(&self) -> bool {
        self.saturated_fraction > 0.0
    }
}

const EXP_ARG_CAP: f64 = 690.0;

/// `exp(x)` capped at the overflow magnitude, with a saturation flag.
pub(crate) fn capped_exp(x: f64) -> (f64, bool) {
    if x.is_nan() || x > EXP_ARG_CAP {
        (OVERFLOW_CAP, true)
    } else {
        (x.exp().min(OVERFLOW_CAP), false)
    }
}

/// Exponent of the functional on the grid at index `j`, stopped at `tau`.
pub(crate) fn functional_exponent(spec: &LyapunovSpec, run: &SchemeRun, j: usize, stopped: bool) -> f64 {
    let grid = run.grid;
    let h = grid.step_size();
    let stop = if stopped { run.tau_index.min(j) } else { j };
    let t_stop = grid.point(stop);
    let mut integral = 0.0;
    for k in 0..stop {
        let tk = grid.point(k);
        integral += (-spec.rho * tk).exp() * (spec.u_bar)(run.state(k)) * h;
    }
    (-spec.rho * t_stop).exp() * (spec.u)(run.state(j)) + integral
}

/// [`functional_exponent`] at every grid index `0..=N` in one pass.
pub(crate) fn functional_series(spec: &LyapunovSpec, run: &SchemeRun, stopped: bool) -> Vec<f64> {
    let grid = run.grid;
    let h = grid.step_size();
    let tau = if stopped { run.tau_index } else { grid.steps };
    let mut integral = 0.0;
    let mut out = Vec::with_capacity(grid.steps + 1);
    for j in 0..=grid.steps {
        let stop = tau.min(j);
        out.push((-spec.rho * grid.point(stop)).exp() * (spec.u)(run.state(j)) + integral);
        if j < tau {
            integral += (-spec.rho * grid.point(j)).exp() * (spec.u_bar)(run.state(j)) * h;
        }
    }
    out
}

fn grid_index(grid: &GridSpec, t: f64) -> Result<usize> {
    if !(0.0..=grid.horizon).contains(&t) {
        return Err(Error::TimeOutOfRange { t, horizon: grid.horizon });
    }
    let j = (t / grid.step_size()).round() as usize;
    if j > grid.steps || (grid.point(j) - t).abs() > 1e-9 * grid.horizon {
        return Err(Error::invalid(format!("t = {t} is not a point of the {}-step grid", grid.steps)));
    }
    Ok(j)
}

/// Estimates the exponential-moment functional at grid time `t` from `paths` runs of `kind`.
#[allow(clippy::too_many_arguments)]
pub fn exp_moment_estimate(
    kind: SchemeKind,
    model: &SdeModel,
    spec: &LyapunovSpec,
    grid: &GridSpec,
    x0: &[f64],
    paths: usize,
    t: f64,
    seed: u64,
) -> Result<ExpMomentEstimate> {
    model.check_state(x0)?;
    let j = grid_index(grid, t)?;
    let values: Vec<Result<(f64, bool)>> = par_map_paths(0..paths, |i| {
        let path = generate_path(grid.horizon, grid.steps, model.m, seed, i as u64)?;
        let run = run_path(kind, model, grid, x0, &path)?;
        Ok(capped_exp(functional_exponent(spec, &run, j, true)))
    });
    let mut vals = Vec::with_capacity(paths);
    let mut saturated = 0usize;
    for v in values {
        let (x, s) = v?;
        vals.push(x);
        saturated += usize::from(s);
    }
    let (estimate, std_error) = mean_and_stderr(&vals);
    let consts = AnalysisConstants::from_spec(spec, grid.horizon, model.m, grid.steps)?;
    let eps = epsilon_n(&consts);
    let eu0 = (spec.u)(x0).exp();
    let bound = if t == 0.0 { eu0 } else { eu0 * (eps * t).exp() };
    Ok(ExpMomentEstimate {
        n: grid.steps,
        t,
        estimate,
        std_error,
        bound,
        epsilon_n: eps,
        saturated_fraction: saturated as f64 / paths.max(1) as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingProbability {
    pub n: usize,
    pub paths: usize,
    #[serde(with = "crate::serde_float")]
    pub estimate: f64,
    pub std_error: f64,
    /// Product of the two simulated exponential-moment suprema.
    #[serde(with = "crate::serde_float")]
    pub c1: f64,
    #[serde(with = "crate::serde_float")]
    pub bound: f64,
}

/// Fraction of stopped-scheme paths with `tau^N < T`, and the tail bound.
///
/// `C1` multiplies the grid supremum of the stopped functional for `Y^N`
/// with the same supremum for a proxy of the exact solution: the closed form
/// when the model has one, otherwise the stopped scheme on the 4x finer grid
/// of the same Brownian path.
pub fn stopping_probability(
    model: &SdeModel,
    spec: &LyapunovSpec,
    grid: &GridSpec,
    x0: &[f64],
    paths: usize,
    seed: u64,
) -> Result<StoppingProbability> {
    model.check_state(x0)?;
    let n = grid.steps;
    let fine = GridSpec::new(grid.horizon, 4 * n)?;
    // per path: stopped before T, then the Y and X functionals on the grid
    type PathStats = (bool, Vec<f64>, Vec<f64>);
    let per_path: Vec<Result<PathStats>> = par_map_paths(0..paths, |i| {
        let path = generate_path(grid.horizon, fine.steps, model.m, seed, i as u64)?;
        let coarse = path.coarsen(n)?;
        let run = run_path_with_increments(SchemeKind::StoppedBit, model, grid, x0, &coarse)?;
        let y_vals: Vec<f64> = functional_series(spec, &run, true).into_iter().map(|e| capped_exp(e).0).collect();
        let x_vals: Vec<f64> = match &model.exact_solution {
            Some(exact) => {
                let w = path.cumulative();
                let mut x = vec![0.0; model.d];
                let mut integral = 0.0;
                let mut out = Vec::with_capacity(n + 1);
                for j in 0..=n {
                    let tj = grid.point(j);
                    let wj = &w[4 * j * model.m..(4 * j + 1) * model.m];
                    exact(x0, tj, wj, &mut x);
                    out.push(capped_exp((-spec.rho * tj).exp() * (spec.u)(&x) + integral).0);
                    integral += (-spec.rho * tj).exp() * (spec.u_bar)(&x) * grid.step_size();
                }
                out
            }
            None => {
                let proxy = run_path_with_increments(SchemeKind::StoppedBit, model, &fine, x0, &path.increments)?;
                functional_series(spec, &proxy, false).into_iter().step_by(4).map(|e| capped_exp(e).0).collect()
            }
        };
        Ok((run.tau_index < n, y_vals, x_vals))
    });
    let mut hits = Vec::with_capacity(paths);
    let mut y_rows = Vec::with_capacity(paths);
    let mut x_rows = Vec::with_capacity(paths);
    for r in per_path {
        let (hit, y, x) = r?;
        hits.push(if hit { 1.0 } else { 0.0 });
        y_rows.push(y);
        x_rows.push(x);
    }
    let sup_mean = |rows: &[Vec<f64>]| -> f64 {
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        crate::stats::pairwise_sum_rows(&refs).into_iter().map(|s| s / rows.len().max(1) as f64).fold(0.0, f64::max)
    };
    let c1 = sup_mean(&y_rows) * sup_mean(&x_rows);
    let (estimate, std_error) = mean_and_stderr(&hits);
    let consts = AnalysisConstants::from_spec(spec, grid.horizon, model.m, n)?;
    Ok(StoppingProbability { n, paths, estimate, std_error, c1, bound: stopping_probability_bound(&consts, c1) })
}
