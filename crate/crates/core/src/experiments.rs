//! Monte Carlo experiments: strong error tables and rate fits, divergence
//! comparison between schemes, and moment and stopping-probability sweeps.
//!
//! Every experiment draws path `i` from `(seed, i)` on one fine grid, runs all
//! requested step counts on coarsenings of that path, and reduces in path
//! order, so results do not depend on the number of worker threads.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::brownian::generate_path;
use crate::diagnostics::{
    capped_exp, epsilon_n, functional_exponent, moment_bound, n0, stopping_probability, AnalysisConstants,
    StoppingProbability, N0,
};
use crate::error::{Error, Result};
use crate::models::catalog_entry;
use crate::schemes::{run_path_with_increments, SchemeKind, OVERFLOW_CAP};
use crate::stats::{batch_ranges, mean_and_stderr, pairwise_sum_rows, par_map_paths};
use crate::types::{norm, ErrorRow, ErrorTable, GridSpec, LyapunovSpec, RateFit, SdeModel};

/// Number of contiguous batches behind every batch-means standard error.
pub const BATCHES: usize = 10;
/// Magnitude beyond which a path counts as exploded.
pub const EXPLOSION_LEVEL: f64 = 1e10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// The model's closed-form solution driven by the same Brownian path.
    Exact,
    /// The given scheme on the `N_ref` grid.
    FineGrid(SchemeKind),
}

impl fmt::Display for Reference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reference::Exact => f.write_str("exact"),
            Reference::FineGrid(k) => write!(f, "fine:{k}"),
        }
    }
}

impl FromStr for Reference {
    type Err = Error;

    /// `exact`, or `fine:<scheme>` (also `fine-grid:<scheme>`, plain `fine` = `fine:bit`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "exact" {
            return Ok(Reference::Exact);
        }
        if s == "fine" || s == "fine-grid" {
            return Ok(Reference::FineGrid(SchemeKind::StoppedBit));
        }
        match s.split_once(':') {
            Some(("fine" | "fine-grid", kind)) => Ok(Reference::FineGrid(kind.parse()?)),
            _ => Err(Error::invalid(format!("unknown reference '{s}' (expected exact or fine:<scheme>)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub model: String,
    #[serde(default)]
    pub params: Vec<(String, f64)>,
    pub scheme: SchemeKind,
    pub r: f64,
    pub horizon: f64,
    pub ns: Vec<usize>,
    pub n_ref: usize,
    pub paths: usize,
    pub seed: u64,
    pub reference: Reference,
    /// Initial state; the catalog default when absent.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl ConvergenceConfig {
    /// Structural checks needed to run: positive sizes and `N_ref` divisible by every `N`.
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(Error::invalid("Ns must not be empty"));
        }
        if self.paths < BATCHES {
            return Err(Error::SampleCount { got: self.paths, min: BATCHES });
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return Err(Error::invalid(format!("error exponent r must be >= 1, got {}", self.r)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        for &n in &self.ns {
            if n == 0 || !self.n_ref.is_multiple_of(n) {
                return Err(Error::NotDivisible { fine: self.n_ref, coarse: n });
            }
        }
        Ok(())
    }

    /// [`validate`](Self::validate) plus the study-design rules: `Ns` strictly
    /// increasing powers of two and, for a fine-grid reference, `N_ref >= 8 max(Ns)`.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        if !self.ns.iter().all(|n| n.is_power_of_two()) || !self.ns.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("Ns must be strictly increasing powers of two"));
        }
        let max = *self.ns.iter().max().expect("nonempty");
        if matches!(self.reference, Reference::FineGrid(_)) && self.n_ref < 8 * max {
            return Err(Error::invalid(format!("N_ref = {} must be at least 8 max(Ns) = {}", self.n_ref, 8 * max)));
        }
        Ok(())
    }
}

/// Strong error table for a catalog model.
pub fn strong_error(config: &ConvergenceConfig) -> Result<ErrorTable> {
    let entry = catalog_entry(&config.model, &config.params, config.horizon)?;
    let x0 = config.x0.clone().unwrap_or(entry.default_x0);
    strong_error_with(&entry.model, &x0, config)
}

/// Strong error table `sup_k || X_{t_k} - Y_{t_k} ||_{L^r}` for each `N`.
pub fn strong_error_with(model: &SdeModel, x0: &[f64], config: &ConvergenceConfig) -> Result<ErrorTable> {
    config.validate()?;
    model.check_state(x0)?;
    if config.reference == Reference::Exact && model.exact_solution.is_none() {
        return Err(Error::NoExactSolution(model.name.clone()));
    }
    let (d, m) = (model.d, model.m);
    let n_fine = config.n_ref;
    let horizon = config.horizon;
    let fine_grid = GridSpec::new(horizon, n_fine)?;
    let grids: Vec<GridSpec> = config.ns.iter().map(|&n| GridSpec::new(horizon, n)).collect::<Result<_>>()?;
    let r = config.r;

    // per path: for each N, |X - Y|^r at k = 0..=N, and whether the path diverged
    let simulate = |i: usize| -> Result<Vec<(Vec<f64>, bool)>> {
        let path = generate_path(horizon, n_fine, m, config.seed, i as u64)?;
        let reference: Vec<f64> = match config.reference {
            Reference::Exact => {
                let exact = model.exact_solution.as_ref().expect("checked above");
                let w = path.cumulative();
                let mut out = vec![0.0; (n_fine + 1) * d];
                for j in 0..=n_fine {
                    exact(x0, fine_grid.point(j), &w[j * m..(j + 1) * m], &mut out[j * d..(j + 1) * d]);
                }
                out
            }
            Reference::FineGrid(kind) => {
                run_path_with_increments(kind, model, &fine_grid, x0, &path.increments)?.states
            }
        };
        let mut increments = Vec::new();
        grids
            .iter()
            .map(|grid| {
                path.coarsen_into(grid.steps, &mut increments)?;
                let run = run_path_with_increments(config.scheme, model, grid, x0, &increments)?;
                let ratio = n_fine / grid.steps;
                let errs = (0..=grid.steps)
                    .map(|k| {
                        let x = &reference[k * ratio * d..(k * ratio + 1) * d];
                        let diff: f64 = norm(&x.iter().zip(run.state(k)).map(|(a, b)| a - b).collect::<Vec<_>>());
                        let e = diff.powf(r);
                        if e.is_nan() {
                            OVERFLOW_CAP
                        } else {
                            e.min(OVERFLOW_CAP)
                        }
                    })
                    .collect();
                Ok((errs, run.diverged))
            })
            .collect()
    };

    let batches = batch_ranges(config.paths, BATCHES);
    // batch_sums[b][n] = per-k sums over the paths of batch b
    let mut batch_sums: Vec<Vec<Vec<f64>>> = Vec::with_capacity(batches.len());
    let mut diverged = vec![0usize; grids.len()];
    for range in &batches {
        type PathErrors = Vec<(Vec<f64>, bool)>;
        let results: Vec<Result<PathErrors>> = par_map_paths(range.clone(), simulate);
        let results: Vec<Vec<(Vec<f64>, bool)>> = results.into_iter().collect::<Result<_>>()?;
        let mut sums = Vec::with_capacity(grids.len());
        for (gi, dv) in diverged.iter_mut().enumerate() {
            let rows: Vec<&[f64]> = results.iter().map(|p| p[gi].0.as_slice()).collect();
            sums.push(pairwise_sum_rows(&rows));
            *dv += results.iter().filter(|p| p[gi].1).count();
        }
        batch_sums.push(sums);
    }

    let rows = grids
        .iter()
        .enumerate()
        .map(|(gi, grid)| {
            let per_batch: Vec<&[f64]> = batch_sums.iter().map(|b| b[gi].as_slice()).collect();
            let total = pairwise_sum_rows(&per_batch);
            let per_k: Vec<f64> = total.iter().map(|s| (s / config.paths as f64).powf(1.0 / r)).collect();
            let sup_error = per_k.iter().copied().fold(0.0, f64::max);
            let batch_sups: Vec<f64> = batch_sums
                .iter()
                .zip(&batches)
                .map(|(b, range)| b[gi].iter().map(|s| (s / range.len() as f64).powf(1.0 / r)).fold(0.0, f64::max))
                .collect();
            let (_, std_error) = mean_and_stderr(&batch_sups);
            ErrorRow {
                n: grid.steps,
                paths: config.paths,
                sup_error,
                per_gridpoint_errors: Some(per_k),
                std_error,
                seed: config.seed,
                overflow_fraction: diverged[gi] as f64 / config.paths as f64,
            }
        })
        .collect();

    Ok(ErrorTable { scheme: config.scheme.to_string(), model: model.name.clone(), r, horizon, rows })
}

/// Least-squares fit of `ln(error)` against `ln(T/N)`; rows with zero or
/// non-finite errors are dropped and counted in `excluded`.
pub fn fit_rate(table: &ErrorTable) -> Result<RateFit> {
    let points: Vec<(f64, f64)> = table
        .rows
        .iter()
        .filter(|row| row.sup_error > 0.0 && row.sup_error.is_finite() && row.n > 0)
        .map(|row| ((table.horizon / row.n as f64).ln(), row.sup_error.ln()))
        .collect();
    let excluded = table.rows.len() - points.len();
    if points.len() < 3 {
        return Err(Error::InsufficientData { usable: points.len(), required: 3 });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("rate fit needs at least two distinct N"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(RateFit { slope, intercept, residual, points, excluded })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub scheme: SchemeKind,
    #[serde(rename = "N")]
    pub n: usize,
    /// Paths that left the float range.
    pub overflow_fraction: f64,
    /// Paths that overflowed or exceeded [`EXPLOSION_LEVEL`] at some grid point.
    pub explosion_fraction: f64,
    /// `E[|Y_T|^2]` with each path capped at the overflow magnitude.
    #[serde(with = "crate::serde_float")]
    pub second_moment: f64,
    pub second_moment_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub model: String,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub rows: Vec<DivergenceRow>,
}

impl DivergenceReport {
    pub fn rows_for(&self, scheme: SchemeKind) -> impl Iterator<Item = &DivergenceRow> {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }
}

/// Explosion statistics of each scheme in `schemes` for each `N`, all on shared paths.
#[allow(clippy::too_many_arguments)]
pub fn divergence_comparison(
    model: &SdeModel,
    schemes: &[SchemeKind],
    ns: &[usize],
    paths: usize,
    x0: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<DivergenceReport> {
    model.check_state(x0)?;
    if paths == 0 || ns.is_empty() {
        return Err(Error::invalid("need at least one path and one N"));
    }
    let n_fine = ns.iter().try_fold(1usize, |acc, &n| lcm(acc, n))?;
    let grids: Vec<GridSpec> = ns.iter().map(|&n| GridSpec::new(horizon, n)).collect::<Result<_>>()?;
    let per_path: Vec<Result<Vec<(bool, bool, f64)>>> = par_map_paths(0..paths, |i| {
        let path = generate_path(horizon, n_fine, model.m, seed, i as u64)?;
        let mut inc = Vec::new();
        let mut out = Vec::with_capacity(grids.len() * schemes.len());
        for grid in &grids {
            path.coarsen_into(grid.steps, &mut inc)?;
            for &kind in schemes {
                let run = run_path_with_increments(kind, model, grid, x0, &inc)?;
                let exploded = run.diverged || !(run.max_norm() <= EXPLOSION_LEVEL);
                let sq = norm(run.final_state()).powi(2);
                out.push((run.diverged, exploded, if sq.is_nan() { OVERFLOW_CAP } else { sq.min(OVERFLOW_CAP) }));
            }
        }
        Ok(out)
    });
    let per_path: Vec<Vec<(bool, bool, f64)>> = per_path.into_iter().collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (gi, grid) in grids.iter().enumerate() {
        for (si, &scheme) in schemes.iter().enumerate() {
            let idx = gi * schemes.len() + si;
            let over = per_path.iter().filter(|p| p[idx].0).count();
            let expl = per_path.iter().filter(|p| p[idx].1).count();
            let sq: Vec<f64> = per_path.iter().map(|p| p[idx].2).collect();
            let (second_moment, second_moment_se) = mean_and_stderr(&sq);
            rows.push(DivergenceRow {
                scheme,
                n: grid.steps,
                overflow_fraction: over as f64 / paths as f64,
                explosion_fraction: expl as f64 / paths as f64,
                second_moment,
                second_moment_se,
            });
        }
    }
    Ok(DivergenceReport { model: model.name.clone(), x0: x0.to_vec(), horizon, paths, seed, rows })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> Result<usize> {
    if b == 0 {
        return Err(Error::invalid("N must be positive"));
    }
    (a / gcd(a, b)).checked_mul(b).ok_or_else(|| Error::invalid("common refinement of Ns overflows"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    #[serde(rename = "N")]
    pub n: usize,
    /// `E[U(Y_T)]`.
    pub mean_u: f64,
    pub mean_u_se: f64,
    /// Exponential-moment functional at `t = T`.
    #[serde(with = "crate::serde_float")]
    pub exp_moment: f64,
    pub exp_moment_se: f64,
    /// `exp(U(x0)) e^{eps^N T}`.
    #[serde(with = "crate::serde_float")]
    pub exp_moment_bound: f64,
    #[serde(with = "crate::serde_float")]
    pub epsilon_n: f64,
    /// Gronwall bound on `E[U(Y_T)]` from `E[U(Y_0)] = U(x0)`.
    #[serde(with = "crate::serde_float")]
    pub moment_bound: f64,
    /// `mean_u <= moment_bound + 3 mean_u_se`.
    pub within_bound: bool,
    /// `N >= N0`, where the bounds are proved.
    pub claim_applies: bool,
    pub saturated_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub model: String,
    pub horizon: f64,
    pub paths: usize,
    pub seed: u64,
    pub n0: N0,
    pub rows: Vec<MomentRow>,
    /// `max / min` of `E[U(Y_T)]` across `N`.
    #[serde(with = "crate::serde_float")]
    pub flatness_ratio: f64,
    /// `1 + 5 max_N (se / mean)`.
    pub flatness_tolerance: f64,
    pub note: String,
}

impl MomentReport {
    pub fn flat_within_stderr(&self) -> bool {
        self.flatness_ratio <= self.flatness_tolerance
    }

    /// Every row at `N >= N0` is within its moment bound.
    pub fn bounds_hold(&self) -> bool {
        self.rows.iter().filter(|r| r.claim_applies).all(|r| r.within_bound)
    }
}

/// `E[U(Y_T)]` and the exponential-moment functional for each `N` from the stopped scheme.
#[allow(clippy::too_many_arguments)]
pub fn moment_sweep(
    model: &SdeModel,
    spec: &LyapunovSpec,
    ns: &[usize],
    paths: usize,
    x0: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<MomentReport> {
    model.check_state(x0)?;
    if paths < 2 || ns.is_empty() {
        return Err(Error::invalid("need at least two paths and one N"));
    }
    let n_fine = ns.iter().try_fold(1usize, |acc, &n| lcm(acc, n))?;
    let grids: Vec<GridSpec> = ns.iter().map(|&n| GridSpec::new(horizon, n)).collect::<Result<_>>()?;
    let per_path: Vec<Result<Vec<(f64, f64, bool)>>> = par_map_paths(0..paths, |i| {
        let path = generate_path(horizon, n_fine, model.m, seed, i as u64)?;
        let mut inc = Vec::new();
        grids
            .iter()
            .map(|grid| {
                path.coarsen_into(grid.steps, &mut inc)?;
                let run = run_path_with_increments(SchemeKind::StoppedBit, model, grid, x0, &inc)?;
                let u = (spec.u)(run.final_state());
                let (e, sat) = capped_exp(functional_exponent(spec, &run, grid.steps, true));
                Ok((u, e, sat))
            })
            .collect()
    });
    let per_path: Vec<Vec<(f64, f64, bool)>> = per_path.into_iter().collect::<Result<_>>()?;
    let eu0 = (spec.u)(x0);
    let n0v = n0(spec.c, spec.p, horizon, model.m);
    let mut rows = Vec::with_capacity(grids.len());
    for (gi, grid) in grids.iter().enumerate() {
        let us: Vec<f64> = per_path.iter().map(|p| p[gi].0).collect();
        let es: Vec<f64> = per_path.iter().map(|p| p[gi].1).collect();
        let sat = per_path.iter().filter(|p| p[gi].2).count();
        let (mean_u, mean_u_se) = mean_and_stderr(&us);
        let (exp_moment, exp_moment_se) = mean_and_stderr(&es);
        let consts = AnalysisConstants::from_spec(spec, horizon, model.m, grid.steps)?;
        let eps = epsilon_n(&consts);
        let bound = moment_bound(&consts, horizon, eu0.abs())?;
        rows.push(MomentRow {
            n: grid.steps,
            mean_u,
            mean_u_se,
            exp_moment,
            exp_moment_se,
            exp_moment_bound: eu0.exp() * (eps * horizon).exp(),
            epsilon_n: eps,
            moment_bound: bound,
            within_bound: mean_u <= bound + 3.0 * mean_u_se,
            claim_applies: n0v.covers(grid.steps),
            saturated_fraction: sat as f64 / paths as f64,
        });
    }
    let max = rows.iter().map(|r| r.mean_u).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.mean_u).fold(f64::INFINITY, f64::min);
    let rel = rows.iter().map(|r| if r.mean_u != 0.0 { r.mean_u_se / r.mean_u.abs() } else { 0.0 }).fold(0.0, f64::max);
    Ok(MomentReport {
        model: model.name.clone(),
        horizon,
        paths,
        seed,
        n0: n0v,
        rows,
        flatness_ratio: if max == min { 1.0 } else { max / min },
        flatness_tolerance: 1.0 + 5.0 * rel,
        note: crate::diagnostics::EPSILON_NOTE.to_string(),
    })
}

/// [`stopping_probability`] for each `N`.
pub fn stopping_sweep(
    model: &SdeModel,
    spec: &LyapunovSpec,
    ns: &[usize],
    paths: usize,
    x0: &[f64],
    horizon: f64,
    seed: u64,
) -> Result<Vec<StoppingProbability>> {
    ns.iter().map(|&n| stopping_probability(model, spec, &GridSpec::new(horizon, n)?, x0, paths, seed)).collect()
}
