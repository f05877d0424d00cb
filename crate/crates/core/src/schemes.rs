//! One-step maps and path drivers.
//!
//! All three schemes share one update `y + 1{|y| <= R} (mu(y) s + sigma(y) Pi(dW))`:
//! Euler-Maruyama uses `Pi = id` and `R = inf`, the drift-tamed scheme
//! rescales `mu` by `1 / (1 + |mu| h)`, and the stopped scheme uses the
//! quartic-exponential taming with `R = exp(sqrt(|log(N/T)|))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::brownian::BrownianGrid;
use crate::error::{Error, Result};
use crate::taming::{stopping_threshold, Taming};
use crate::types::{norm, GridSpec, SchemeRun, SdeModel};

/// Magnitude at which a diverging path is saturated and marked.
pub const OVERFLOW_CAP: f64 = 1e300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "em")]
    EulerMaruyama,
    #[serde(rename = "drift-tamed")]
    DriftTamed,
    #[serde(rename = "bit")]
    StoppedBit,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::EulerMaruyama, SchemeKind::DriftTamed, SchemeKind::StoppedBit];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "em",
            SchemeKind::DriftTamed => "drift-tamed",
            SchemeKind::StoppedBit => "bit",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" | "euler-maruyama" | "euler" => Ok(SchemeKind::EulerMaruyama),
            "drift-tamed" | "tamed" => Ok(SchemeKind::DriftTamed),
            "bit" | "stopped-bit" => Ok(SchemeKind::StoppedBit),
            other => Err(Error::invalid(format!("unknown scheme '{other}' (expected em, drift-tamed or bit)"))),
        }
    }
}

/// Outcome of an unstopped step: the new state and whether it overflowed.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: Vec<f64>,
    /// The update left the float range; `state` holds the saturated value.
    pub overflow: bool,
}

/// Generic stopped, increment-tamed step with elapsed time `s`.
///
/// Returns `y` unchanged if `|y| > threshold`. With `Taming::Identity` and an
/// infinite threshold this is bit-for-bit the Euler-Maruyama step.
pub fn step_stopped_tamed(
    model: &SdeModel,
    taming: Taming,
    threshold: f64,
    s: f64,
    y: &[f64],
    dw: &[f64],
) -> Result<Vec<f64>> {
    model.check_state(y)?;
    check_noise(model, dw)?;
    let mut st = Stepper::new(model, Rule::Stopped { taming, threshold }, s);
    let mut out = vec![0.0; model.d];
    st.apply(y, dw, s, &mut out)?;
    Ok(out)
}

/// Stopped Brownian-increment tamed Euler step on `grid`.
pub fn step_bit(model: &SdeModel, grid: &GridSpec, y: &[f64], dw: &[f64]) -> Result<Vec<f64>> {
    let h = grid.step_size();
    step_stopped_tamed(model, Taming::QuarticExp { h }, stopping_threshold(grid.steps, grid.horizon), h, y, dw)
}

/// Euler-Maruyama step `y + mu(y) h + sigma(y) dW`.
pub fn step_em(model: &SdeModel, grid: &GridSpec, y: &[f64], dw: &[f64]) -> Result<StepResult> {
    unstopped_step(model, grid, Rule::Euler, y, dw)
}

/// Drift-tamed Euler step `y + mu(y) / (1 + |mu(y)| h) h + sigma(y) dW`.
pub fn step_drift_tamed(model: &SdeModel, grid: &GridSpec, y: &[f64], dw: &[f64]) -> Result<StepResult> {
    unstopped_step(model, grid, Rule::DriftTamed, y, dw)
}

fn unstopped_step(model: &SdeModel, grid: &GridSpec, rule: Rule, y: &[f64], dw: &[f64]) -> Result<StepResult> {
    model.check_state(y)?;
    check_noise(model, dw)?;
    let h = grid.step_size();
    let mut st = Stepper::new(model, rule, h);
    let mut state = vec![0.0; model.d];
    let overflow = st.apply(y, dw, h, &mut state)? == Status::Overflow;
    Ok(StepResult { state, overflow })
}

fn check_noise(model: &SdeModel, dw: &[f64]) -> Result<()> {
    if dw.len() != model.m {
        return Err(Error::Dimension { expected: model.m, got: dw.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Rule {
    Euler,
    DriftTamed,
    Stopped { taming: Taming, threshold: f64 },
}

impl Rule {
    fn for_kind(kind: SchemeKind, grid: &GridSpec) -> Self {
        match kind {
            SchemeKind::EulerMaruyama => Rule::Euler,
            SchemeKind::DriftTamed => Rule::DriftTamed,
            SchemeKind::StoppedBit => Rule::Stopped {
                taming: Taming::QuarticExp { h: grid.step_size() },
                threshold: stopping_threshold(grid.steps, grid.horizon),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Moved,
    Frozen,
    Overflow,
}

/// Scratch buffers for repeated steps of one model.
struct Stepper<'a> {
    model: &'a SdeModel,
    rule: Rule,
    h: f64,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    noise: Vec<f64>,
}

impl<'a> Stepper<'a> {
    fn new(model: &'a SdeModel, rule: Rule, h: f64) -> Self {
        Stepper {
            model,
            rule,
            h,
            mu: vec![0.0; model.d],
            sigma: vec![0.0; model.d * model.m],
            noise: vec![0.0; model.m],
        }
    }

    /// Writes the update over elapsed time `s` into `out`.
    fn apply(&mut self, y: &[f64], dw: &[f64], s: f64, out: &mut [f64]) -> Result<Status> {
        let m = self.model.m;
        if let Rule::Stopped { threshold, .. } = self.rule {
            if !(norm(y) <= threshold) {
                out.copy_from_slice(y);
                return Ok(Status::Frozen);
            }
        }
        (self.model.drift)(y, &mut self.mu);
        (self.model.diffusion)(y, &mut self.sigma);
        let mut drift_scale = s;
        match self.rule {
            Rule::Stopped { taming, .. } => {
                if self.mu.iter().chain(&self.sigma).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what: "drift or diffusion inside the stopping ball" });
                }
                taming.apply(dw, &mut self.noise);
            }
            Rule::Euler => self.noise.copy_from_slice(dw),
            Rule::DriftTamed => {
                drift_scale = s / (1.0 + norm(&self.mu) * self.h);
                self.noise.copy_from_slice(dw);
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.sigma[i * m..(i + 1) * m];
            let diffusion: f64 = row.iter().zip(&self.noise).map(|(a, b)| a * b).sum();
            *o = y[i] + self.mu[i] * drift_scale + diffusion;
        }
        if matches!(self.rule, Rule::Stopped { .. }) {
            return Ok(Status::Moved);
        }
        if out.iter().any(|v| !(v.abs() <= OVERFLOW_CAP)) {
            for v in out.iter_mut() {
                *v = saturate(*v);
            }
            return Ok(Status::Overflow);
        }
        Ok(Status::Moved)
    }
}

#[inline]
fn saturate(v: f64) -> f64 {
    if v.is_nan() {
        OVERFLOW_CAP
    } else {
        v.clamp(-OVERFLOW_CAP, OVERFLOW_CAP)
    }
}

/// Runs `kind` over `grid` driven by the coarsening of `path`.
pub fn run_path(
    kind: SchemeKind,
    model: &SdeModel,
    grid: &GridSpec,
    x0: &[f64],
    path: &BrownianGrid,
) -> Result<SchemeRun> {
    if path.m != model.m {
        return Err(Error::Dimension { expected: model.m, got: path.m });
    }
    if (path.horizon - grid.horizon).abs() > 1e-12 * grid.horizon {
        return Err(Error::invalid(format!(
            "path horizon {} differs from grid horizon {}",
            path.horizon, grid.horizon
        )));
    }
    let increments = path.coarsen(grid.steps)?;
    run_path_with_increments(kind, model, grid, x0, &increments)
}

/// Runs `kind` with explicit row-major increments (`grid.steps x m`).
pub fn run_path_with_increments(
    kind: SchemeKind,
    model: &SdeModel,
    grid: &GridSpec,
    x0: &[f64],
    increments: &[f64],
) -> Result<SchemeRun> {
    model.check_state(x0)?;
    let (d, m, n) = (model.d, model.m, grid.steps);
    if increments.len() != n * m {
        return Err(Error::Dimension { expected: n * m, got: increments.len() });
    }
    let threshold = stopping_threshold(n, grid.horizon);
    let mut st = Stepper::new(model, Rule::for_kind(kind, grid), grid.step_size());
    let mut states = vec![0.0; (n + 1) * d];
    states[..d].copy_from_slice(x0);
    let mut tau_index = n;
    let mut frozen = false;
    let mut diverged = false;
    for k in 0..n {
        let (done, rest) = states.split_at_mut((k + 1) * d);
        let y = &done[k * d..];
        let out = &mut rest[..d];
        if tau_index == n && !(norm(y) <= threshold) {
            tau_index = k;
        }
        if diverged || (frozen && kind == SchemeKind::StoppedBit) {
            out.copy_from_slice(y);
            continue;
        }
        match st.apply(y, &increments[k * m..(k + 1) * m], grid.step_size(), out)? {
            Status::Moved => {}
            Status::Frozen => frozen = true,
            Status::Overflow => diverged = true,
        }
    }
    Ok(SchemeRun { kind, grid: *grid, dim: d, states, tau_index, frozen, diverged })
}

/// Continuous-time interpolant `Y_{t_k + s}` given `bridge = W_{t_k + s} - W_{t_k}`.
///
/// The stopped scheme uses the tamed increment with the grid's taming scale;
/// the other two are linear in the increment. At `s = T/N` with the full step
/// increment this reproduces `run.state(k + 1)` exactly.
pub fn interpolate(model: &SdeModel, run: &SchemeRun, k: usize, s: f64, bridge: &[f64]) -> Result<Vec<f64>> {
    let grid = run.grid;
    if k >= grid.steps {
        return Err(Error::IndexOutOfRange { index: k, steps: grid.steps - 1 });
    }
    let h = grid.step_size();
    if !(0.0..=h).contains(&s) {
        return Err(Error::OffsetOutOfRange { offset: s, max: h });
    }
    check_noise(model, bridge)?;
    let y = run.state(k);
    if run.diverged && run.state(k + 1) == y {
        return Ok(y.to_vec());
    }
    let mut st = Stepper::new(model, Rule::for_kind(run.kind, &grid), h);
    let mut out = vec![0.0; model.d];
    st.apply(y, bridge, s, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn cubic() -> SdeModel {
        SdeModel::new("cubic", 1, 1, Arc::new(|x, o| o[0] = -x[0] * x[0] * x[0]), Arc::new(|_, o| o[0] = 1.0)).unwrap()
    }

    fn zero(d: usize, m: usize) -> SdeModel {
        SdeModel::new("zero", d, m, Arc::new(|_, o| o.fill(0.0)), Arc::new(|_, o| o.fill(0.0))).unwrap()
    }

    #[test]
    fn bit_step_closed_form() {
        let g = GridSpec::new(1.0, 4).unwrap();
        let y = step_bit(&cubic(), &g, &[0.5], &[0.2]).unwrap();
        // 30-digit reference value of 0.46875 + 0.2 exp(-4 * 0.0016)
        assert!((y[0] - 0.667_474_087_275_829_8).abs() < 1e-15);
    }

    #[test]
    fn bit_step_freezes_outside_ball() {
        let g = GridSpec::new(1.0, 4).unwrap();
        let thr = stopping_threshold(4, 1.0);
        let y = [thr * 1.01];
        assert_eq!(step_bit(&cubic(), &g, &y, &[0.3]).unwrap(), y.to_vec());
    }

    #[test]
    fn zero_model_is_fixed() {
        let g = GridSpec::new(1.0, 8).unwrap();
        let m = zero(2, 3);
        let y = [0.3, -0.7];
        let dw = [0.1, 0.2, 0.3];
        assert_eq!(step_bit(&m, &g, &y, &dw).unwrap(), y.to_vec());
        assert_eq!(step_em(&m, &g, &y, &dw).unwrap().state, y.to_vec());
        assert_eq!(step_drift_tamed(&m, &g, &y, &dw).unwrap().state, y.to_vec());
    }

    #[test]
    fn em_linear_deterministic() {
        let a = 0.7;
        let m = SdeModel::new("lin", 1, 1, Arc::new(move |x, o| o[0] = a * x[0]), Arc::new(|_, o| o[0] = 0.0)).unwrap();
        let g = GridSpec::new(2.0, 5).unwrap();
        let out = step_em(&m, &g, &[1.5], &[0.4]).unwrap();
        assert_eq!(out.state[0], 1.5 + a * 1.5 * 0.4);
        assert!(!out.overflow);
    }

    #[test]
    fn em_cubic_grows_then_overflows() {
        let g = GridSpec::new(1.0, 4).unwrap();
        let m = cubic();
        let a = step_em(&m, &g, &[10.0], &[0.0]).unwrap().state[0];
        let b = step_em(&m, &g, &[a], &[0.0]).unwrap().state[0];
        assert!(a.abs() > 10.0 && b.abs() > a.abs().powi(2));
        let huge = step_em(&m, &g, &[1e120], &[0.0]).unwrap();
        assert!(huge.overflow);
        assert_eq!(huge.state[0].abs(), OVERFLOW_CAP);
    }

    #[test]
    fn drift_tamed_examples() {
        let g = GridSpec::new(1.0, 4).unwrap();
        let m = SdeModel::new("const", 1, 1, Arc::new(|_, o| o[0] = 8.0), Arc::new(|_, o| o[0] = 0.0)).unwrap();
        let y = step_drift_tamed(&m, &g, &[0.0], &[0.0]).unwrap().state[0];
        assert!((y - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identity_taming_matches_em_bitwise() {
        let g = GridSpec::new(1.0, 16).unwrap();
        let m = cubic();
        for &(y, dw) in &[(0.3, 0.1), (-2.0, 0.7), (5.0, -0.2)] {
            let a = step_stopped_tamed(&m, Taming::Identity, f64::INFINITY, g.step_size(), &[y], &[dw]).unwrap();
            let b = step_em(&m, &g, &[y], &[dw]).unwrap().state;
            assert_eq!(a[0].to_bits(), b[0].to_bits());
        }
    }

    #[test]
    fn run_path_trivial_cases() {
        let g = GridSpec::new(1.0, 1).unwrap();
        let m = zero(1, 1);
        let path = crate::brownian::generate_path(1.0, 4, 1, 1, 0).unwrap();
        for kind in SchemeKind::ALL {
            let run = run_path(kind, &m, &g, &[0.5], &path).unwrap();
            assert_eq!(run.states, vec![0.5, 0.5]);
            assert_eq!(run.tau_index, 1);
        }
        let g = GridSpec::new(1.0, 4).unwrap();
        let far = [stopping_threshold(4, 1.0) + 1.0];
        let run = run_path(SchemeKind::StoppedBit, &cubic(), &g, &far, &path).unwrap();
        assert_eq!(run.tau_index, 0);
        assert!(run.states.iter().all(|&v| v == far[0]));
        assert!(run.frozen);
    }

    #[test]
    fn parsing_roundtrip() {
        for k in SchemeKind::ALL {
            assert_eq!(k.to_string().parse::<SchemeKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{k}\""));
        }
        assert!("milstein".parse::<SchemeKind>().is_err());
    }

    #[test]
    fn interpolation_endpoints() {
        let g = GridSpec::new(1.0, 8).unwrap();
        let m = cubic();
        let path = crate::brownian::generate_path(1.0, 8, 1, 5, 3).unwrap();
        for kind in SchemeKind::ALL {
            let run = run_path(kind, &m, &g, &[0.8], &path).unwrap();
            for k in 0..8 {
                let at0 = interpolate(&m, &run, k, 0.0, &[0.0]).unwrap();
                assert_eq!(at0, run.state(k).to_vec());
                let at1 = interpolate(&m, &run, k, g.step_size(), path.increment(k)).unwrap();
                assert_eq!(at1, run.state(k + 1).to_vec());
            }
            assert!(interpolate(&m, &run, 8, 0.0, &[0.0]).is_err());
            assert!(interpolate(&m, &run, 0, 0.2, &[0.0]).is_err());
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn tamed_noise_bounded(y in -5.0f64..5.0, dw in -3.0f64..3.0, n_exp in 0u32..14) {
                let n = 1usize << n_exp;
                let g = GridSpec::new(1.0, n).unwrap();
                let sigma = 1.0 + y * y;
                let m = SdeModel::new(
                    "mult", 1, 1,
                    Arc::new(|_, o| o[0] = 0.0),
                    Arc::new(move |_, o| o[0] = sigma),
                ).unwrap();
                let out = step_bit(&m, &g, &[y], &[dw]).unwrap()[0];
                let bound = sigma * g.step_size().powf(0.25);
                prop_assert!((out - y).abs() <= bound * (1.0 + 1e-12));
            }

            #[test]
            fn stopped_states_freeze(seed in any::<u64>(), x0 in 1.0f64..6.0) {
                let g = GridSpec::new(1.0, 16).unwrap();
                let m = SdeModel::new(
                    "explosive", 1, 1,
                    Arc::new(|x, o| o[0] = x[0] * x[0] * x[0]),
                    Arc::new(|_, o| o[0] = 1.0),
                ).unwrap();
                let path = crate::brownian::generate_path(1.0, 16, 1, seed, 0).unwrap();
                let run = run_path(SchemeKind::StoppedBit, &m, &g, &[x0], &path).unwrap();
                let frozen = run.state(run.tau_index).to_vec();
                for k in run.tau_index..=16 {
                    prop_assert_eq!(run.state(k), frozen.as_slice());
                }
            }
        }
    }
}
