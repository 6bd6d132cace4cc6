//! Coupled Brownian and Poisson increments on dyadic grids.
//!
//! A [`NoiseGrid`] holds the increments of one sample path at the finest step
//! size `2^-K`. Coarser increments are block sums of the fine ones, so every
//! step size simulated from the same grid sees the same Brownian path and the
//! same jump times (up to the grid resolution). Each grid is a pure function
//! of `(master_seed, path_index)`; generation order and worker count play no role.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{domain, Error, Result};

/// Largest admissible fine level.
pub const MAX_FINE_LEVEL: u32 = 26;

/// Largest per-step Poisson mean handled by the inversion sampler.
pub const MAX_POISSON_MEAN: f64 = 10.0;

const BROWNIAN_TAG: u64 = 0x6272_6f77_6e69_616e;
const POISSON_TAG: u64 = 0x706f_6973_736f_6e00;

/// Step size `2^-level`.
pub fn step_size(level: u32) -> f64 {
    2f64.powi(-(level as i32))
}

/// Number of steps of size `2^-level` in `[0, horizon]`; the horizon must be a
/// positive integer multiple of the step.
pub fn steps_at_level(horizon: f64, level: u32) -> Result<usize> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain(format!("horizon must be positive and finite, got {horizon}"));
    }
    let n = horizon * 2f64.powi(level as i32);
    if n.fract() != 0.0 || n < 1.0 {
        return domain(format!(
            "horizon {horizon} is not a whole number of steps of size 2^-{level}"
        ));
    }
    Ok(n as usize)
}

/// Per-path RNG stream for one noise source. ChaCha's 64-bit stream id carries
/// the path index, so streams of different paths never overlap.
fn stream(master_seed: u64, tag: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed ^ tag);
    rng.set_stream(path_index);
    rng
}

/// Poisson sampling by sequential search of the inverse CDF.
#[derive(Clone, Copy, Debug)]
pub struct PoissonInversion {
    mean: f64,
    p0: f64,
}

impl PoissonInversion {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean >= 0.0) {
            return domain(format!("Poisson mean must be nonnegative, got {mean}"));
        }
        if mean > MAX_POISSON_MEAN {
            return Err(Error::Resource(format!(
                "Poisson mean {mean} per step exceeds the inversion cutoff {MAX_POISSON_MEAN}; refine the grid"
            )));
        }
        Ok(Self { mean, p0: (-mean).exp() })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.mean == 0.0 {
            return 0;
        }
        let u: f64 = rng.gen();
        let mut k = 0u32;
        let mut p = self.p0;
        let mut cdf = p;
        while u > cdf {
            k += 1;
            p *= self.mean / f64::from(k);
            if p == 0.0 {
                break;
            }
            cdf += p;
        }
        k
    }
}

/// Brownian and Poisson increments at one step size.
#[derive(Clone, Debug, PartialEq)]
pub struct Increments {
    pub level: u32,
    pub step: f64,
    pub noise_dim: usize,
    /// `len() x noise_dim`, row-major.
    pub brownian: Vec<f64>,
    pub jumps: Vec<u32>,
}

impl Increments {
    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    #[inline]
    pub fn brownian_at(&self, j: usize) -> &[f64] {
        &self.brownian[j * self.noise_dim..(j + 1) * self.noise_dim]
    }

    /// Pairwise block sums: the increments at level `level - 1`.
    pub fn halve(&self) -> Result<Increments> {
        if self.level == 0 || !self.len().is_multiple_of(2) {
            return domain(format!(
                "cannot coarsen {} steps at level {} by a factor of two",
                self.len(),
                self.level
            ));
        }
        let m = self.noise_dim;
        let brownian = self
            .brownian
            .chunks_exact(2 * m)
            .flat_map(|pair| (0..m).map(move |i| pair[i] + pair[m + i]))
            .collect();
        let jumps = self.jumps.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        Ok(Increments {
            level: self.level - 1,
            step: self.step * 2.0,
            noise_dim: m,
            brownian,
            jumps,
        })
    }

    /// Total Brownian displacement `B(T) - B(0)` per noise component.
    pub fn brownian_total(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.noise_dim];
        for row in self.brownian.chunks_exact(self.noise_dim) {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        total
    }

    pub fn jump_total(&self) -> u64 {
        self.jumps.iter().map(|&n| u64::from(n)).sum()
    }

    /// Writes `index, dB0, ..., dB{m-1}, dN` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["index".to_string()];
        header.extend((0..self.noise_dim).map(|i| format!("dB{i}")));
        header.push("dN".into());
        w.write_record(&header)?;
        for j in 0..self.len() {
            let mut row = vec![j.to_string()];
            row.extend(self.brownian_at(j).iter().map(|v| v.to_string()));
            row.push(self.jumps[j].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SeedMaterial {
    pub master_seed: u64,
    pub path_index: u64,
}

/// Fine-level increments of one sample path over `[0, horizon]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseGrid {
    horizon: f64,
    intensity: f64,
    seed: SeedMaterial,
    fine: Increments,
}

impl NoiseGrid {
    /// Draws the increments for path `path_index` at step size `2^-fine_level`.
    pub fn generate(
        master_seed: u64,
        path_index: u64,
        horizon: f64,
        fine_level: u32,
        intensity: f64,
        noise_dim: usize,
    ) -> Result<Self> {
        if fine_level > MAX_FINE_LEVEL {
            return Err(Error::Resource(format!(
                "fine level {fine_level} exceeds the limit {MAX_FINE_LEVEL}"
            )));
        }
        if noise_dim == 0 {
            return domain("noise dimension must be at least 1");
        }
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return domain(format!("intensity must be finite and nonnegative, got {intensity}"));
        }
        let n = steps_at_level(horizon, fine_level)?;
        let step = step_size(fine_level);
        let sampler = PoissonInversion::new(intensity * step)?;
        let sd = step.sqrt();

        let mut rng = stream(master_seed, BROWNIAN_TAG, path_index);
        let brownian = (0..n * noise_dim)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut rng = stream(master_seed, POISSON_TAG, path_index);
        let jumps = (0..n).map(|_| sampler.sample(&mut rng)).collect();

        Ok(Self {
            horizon,
            intensity,
            seed: SeedMaterial { master_seed, path_index },
            fine: Increments {
                level: fine_level,
                step,
                noise_dim,
                brownian,
                jumps,
            },
        })
    }

    /// Builds a grid from explicit fine increments (tests, replays).
    pub fn from_increments(horizon: f64, intensity: f64, fine: Increments) -> Result<Self> {
        let n = steps_at_level(horizon, fine.level)?;
        if fine.len() != n || fine.brownian.len() != n * fine.noise_dim {
            return domain(format!(
                "expected {n} increments at level {}, got {} jumps / {} Brownian values",
                fine.level,
                fine.len(),
                fine.brownian.len()
            ));
        }
        Ok(Self {
            horizon,
            intensity,
            seed: SeedMaterial { master_seed: 0, path_index: 0 },
            fine,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn fine_level(&self) -> u32 {
        self.fine.level
    }

    pub fn noise_dim(&self) -> usize {
        self.fine.noise_dim
    }

    pub fn seed(&self) -> SeedMaterial {
        self.seed
    }

    pub fn fine(&self) -> &Increments {
        &self.fine
    }

    pub fn total_jumps(&self) -> u64 {
        self.fine.jump_total()
    }

    /// Increments at step size `2^-level`, obtained by repeated pairwise block sums.
    pub fn coarsen(&self, level: u32) -> Result<Increments> {
        if level > self.fine.level {
            return domain(format!(
                "level {level} is finer than the grid's fine level {}",
                self.fine.level
            ));
        }
        steps_at_level(self.horizon, level)?;
        let mut current = self.fine.clone();
        while current.level > level {
            current = current.halve()?;
        }
        Ok(current)
    }
}

/// Sample moments of Poisson increments against `E ΔN = λΔ`, `E ΔN² = λΔ(1 + λΔ)`.
#[derive(Clone, Debug, Serialize)]
pub struct MomentReport {
    pub n_samples: usize,
    pub mean: f64,
    pub expected_mean: f64,
    pub mean_std_error: f64,
    pub mean_ok: bool,
    pub second_moment: f64,
    pub expected_second_moment: f64,
    pub second_moment_std_error: f64,
    pub second_moment_ok: bool,
}

impl MomentReport {
    pub fn passed(&self) -> bool {
        self.mean_ok && self.second_moment_ok
    }
}

/// Draws `n_samples` increments `ΔN ~ Poisson(λΔ)` and compares the first two
/// sample moments with their exact values at 5 standard errors.
pub fn increment_moment_test(lambda: f64, delta: f64, n_samples: usize, seed: u64) -> Result<MomentReport> {
    if n_samples < 10_000 {
        return domain(format!("need at least 10^4 samples, got {n_samples}"));
    }
    if !(delta > 0.0) {
        return domain(format!("step size must be positive, got {delta}"));
    }
    let mu = lambda * delta;
    let sampler = PoissonInversion::new(mu)?;
    let mut rng = stream(seed, POISSON_TAG, u64::MAX);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n_samples {
        let k = f64::from(sampler.sample(&mut rng));
        s1 += k;
        s2 += k * k;
    }
    let n = n_samples as f64;
    let (m1, m2) = (s1 / n, s2 / n);
    let e1 = mu;
    let e2 = mu * (1.0 + mu);
    // raw Poisson moments: E N^3 = μ^3 + 3μ^2 + μ, E N^4 = μ^4 + 6μ^3 + 7μ^2 + μ
    let e4 = mu.powi(4) + 6.0 * mu.powi(3) + 7.0 * mu * mu + mu;
    let se1 = (mu / n).sqrt();
    let se2 = ((e4 - e2 * e2) / n).sqrt();
    Ok(MomentReport {
        n_samples,
        mean: m1,
        expected_mean: e1,
        mean_std_error: se1,
        mean_ok: (m1 - e1).abs() <= 5.0 * se1,
        second_moment: m2,
        expected_second_moment: e2,
        second_moment_std_error: se2,
        second_moment_ok: (m2 - e2).abs() <= 5.0 * se2,
    })
}
