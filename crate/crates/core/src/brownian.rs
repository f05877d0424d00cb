//! Seeded Brownian increments on nested uniform grids.
//!
//! A [`BrownianGrid`] holds the fine increments of one path. Coarser grids are
//! obtained by summing consecutive fine increments left to right, so the
//! reference and every approximation in a convergence study see the same
//! Brownian path.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_stream, std_normal, DOMAIN_BRIDGE, DOMAIN_INCREMENTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrownianGrid {
    pub horizon: f64,
    pub n_fine: usize,
    pub m: usize,
    pub seed: u64,
    pub path_index: u64,
    /// Row-major `n_fine x m`.
    pub increments: Vec<f64>,
}

pub fn generate_path(horizon: f64, n_fine: usize, m: usize, seed: u64, path_index: u64) -> Result<BrownianGrid> {
    if n_fine == 0 || m == 0 {
        return Err(Error::invalid("fine grid size and dimension must be positive"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    let sd = (horizon / n_fine as f64).sqrt();
    let mut rng = keyed_stream(seed, DOMAIN_INCREMENTS, 0, path_index);
    let increments = (0..n_fine * m).map(|_| sd * std_normal(&mut rng)).collect();
    Ok(BrownianGrid { horizon, n_fine, m, seed, path_index, increments })
}

/// Free-function form of [`BrownianGrid::coarsen`].
pub fn coarsen(path: &BrownianGrid, n_coarse: usize) -> Result<Vec<f64>> {
    path.coarsen(n_coarse)
}

/// Free-function form of [`BrownianGrid::bridge_value`].
pub fn bridge_value(path: &BrownianGrid, k: usize, s: f64, sub_seed: u64) -> Result<Vec<f64>> {
    path.bridge_value(k, s, sub_seed)
}

impl BrownianGrid {
    pub fn fine_step(&self) -> f64 {
        self.horizon / self.n_fine as f64
    }

    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.m..(k + 1) * self.m]
    }

    pub fn coarsen(&self, n_coarse: usize) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        self.coarsen_into(n_coarse, &mut out)?;
        Ok(out)
    }

    /// Coarse increments for `n_coarse` steps written into `out` (resized to `n_coarse * m`).
    pub fn coarsen_into(&self, n_coarse: usize, out: &mut Vec<f64>) -> Result<()> {
        let ratio = self.ratio(n_coarse)?;
        let m = self.m;
        out.clear();
        out.resize(n_coarse * m, 0.0);
        if ratio == 1 {
            out.copy_from_slice(&self.increments);
            return Ok(());
        }
        for (k, dst) in out.chunks_exact_mut(m).enumerate() {
            let block = &self.increments[k * ratio * m..(k + 1) * ratio * m];
            dst.copy_from_slice(&block[..m]);
            for fine in block[m..].chunks_exact(m) {
                for (d, f) in dst.iter_mut().zip(fine) {
                    *d += f;
                }
            }
        }
        Ok(())
    }

    fn ratio(&self, n_coarse: usize) -> Result<usize> {
        if n_coarse == 0 || !self.n_fine.is_multiple_of(n_coarse) {
            return Err(Error::NotDivisible { fine: self.n_fine, coarse: n_coarse });
        }
        Ok(self.n_fine / n_coarse)
    }

    /// `W` at every fine grid point, `n_fine + 1` rows starting with zero.
    pub fn cumulative(&self) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; (self.n_fine + 1) * m];
        for k in 0..self.n_fine {
            for i in 0..m {
                w[(k + 1) * m + i] = w[k * m + i] + self.increments[k * m + i];
            }
        }
        w
    }

    /// `W_{t_k + s} - W_{t_k}` inside fine step `k`, drawn from the Brownian
    /// bridge pinned at both ends of the step.
    pub fn bridge_value(&self, k: usize, s: f64, sub_seed: u64) -> Result<Vec<f64>> {
        if k >= self.n_fine {
            return Err(Error::IndexOutOfRange { index: k, steps: self.n_fine - 1 });
        }
        let h = self.fine_step();
        if !(0.0..=h).contains(&s) {
            return Err(Error::OffsetOutOfRange { offset: s, max: h });
        }
        let inc = self.increment(k);
        if s == 0.0 {
            return Ok(vec![0.0; self.m]);
        }
        if s == h {
            return Ok(inc.to_vec());
        }
        let frac = s / h;
        let sd = (s * (h - s) / h).sqrt();
        let mut rng = keyed_stream(
            self.seed,
            DOMAIN_BRIDGE,
            sub_seed.wrapping_mul(0x1_0000_0001).wrapping_add(k as u64),
            self.path_index,
        );
        Ok(inc.iter().map(|&dw| frac * dw + sd * std_normal(&mut rng)).collect())
    }

    /// `W_{kT/N + s} - W_{kT/N}` for coarse step `k` of an `n_coarse` grid,
    /// `0 <= s <= T/n_coarse`. Full fine steps are summed in the same order as
    /// [`coarsen`](Self::coarsen); the remainder comes from the bridge.
    pub fn coarse_offset(&self, n_coarse: usize, k: usize, s: f64, sub_seed: u64) -> Result<Vec<f64>> {
        let ratio = self.ratio(n_coarse)?;
        if k >= n_coarse {
            return Err(Error::IndexOutOfRange { index: k, steps: n_coarse - 1 });
        }
        let h_coarse = self.horizon / n_coarse as f64;
        if !(0.0..=h_coarse).contains(&s) {
            return Err(Error::OffsetOutOfRange { offset: s, max: h_coarse });
        }
        if s == h_coarse {
            let block = &self.increments[k * ratio * self.m..(k + 1) * ratio * self.m];
            let mut acc = block[..self.m].to_vec();
            for fine in block[self.m..].chunks_exact(self.m) {
                for (a, f) in acc.iter_mut().zip(fine) {
                    *a += f;
                }
            }
            return Ok(acc);
        }
        let h = self.fine_step();
        let full = ((s / h).floor() as usize).min(ratio - 1);
        let rest = (s - full as f64 * h).clamp(0.0, h);
        let first = k * ratio;
        let mut acc = vec![0.0; self.m];
        for j in first..first + full {
            for (a, f) in acc.iter_mut().zip(self.increment(j)) {
                *a += f;
            }
        }
        let tail = self.bridge_value(first + full, rest, sub_seed)?;
        for (a, t) in acc.iter_mut().zip(tail) {
            *a += t;
        }
        Ok(acc)
    }

    /// Little-endian dump: header `T: f64, n_fine: u64, m: u64, seed: u64,
    /// path_index: u64`, then `n_fine * m` increments as f64, row-major.
    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&(self.n_fine as u64).to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.path_index.to_le_bytes())?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_dump<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut word)?;
            Ok(word)
        };
        let horizon = f64::from_le_bytes(next(&mut r)?);
        let n_fine = u64::from_le_bytes(next(&mut r)?) as usize;
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let seed = u64::from_le_bytes(next(&mut r)?);
        let path_index = u64::from_le_bytes(next(&mut r)?);
        let len = n_fine.checked_mul(m).ok_or_else(|| Error::invalid("dump header overflows"))?;
        let mut increments = Vec::with_capacity(len);
        for _ in 0..len {
            increments.push(f64::from_le_bytes(next(&mut r)?));
        }
        Ok(BrownianGrid { horizon, n_fine, m, seed, path_index, increments })
    }
}
