//! Monte Carlo hitting statistics for the Hardy SDE
//! `dX = -sqrt(delta) (d-2)/2 X/|X|^2 dt + sqrt(2) dB` in `R^d`.
//!
//! Euler-Maruyama with the drift capped inside `r_core`. A path hits when
//! `|X| <= r_hit` at a grid time, or when a Brownian-bridge test between two
//! grid times reports a crossing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub delta: f64,
    pub x0: Vec<f64>,
    pub t_final: f64,
    pub dt: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub r_hit: f64,
    /// Drift cap radius; `r_hit / 10` when absent.
    #[serde(default)]
    pub r_core: Option<f64>,
    /// Drift points toward the origin when true.
    #[serde(default = "default_attracting")]
    pub attracting: bool,
}

fn default_dim() -> usize {
    3
}
fn default_attracting() -> bool {
    true
}

impl SdeConfig {
    pub fn core_radius(&self) -> f64 {
        self.r_core.unwrap_or(self.r_hit / 10.0)
    }

    /// `sqrt(delta) (d-2)/2`.
    pub fn drift_strength(&self) -> f64 {
        self.delta.sqrt() * (self.dim as f64 - 2.0) / 2.0
    }

    /// Largest drift magnitude applied before a path is stopped.
    pub fn max_applied_drift(&self) -> f64 {
        self.drift_strength() / self.r_hit.max(self.core_radius())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::arg("dim", format!("must be at least 3, got {}", self.dim)));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::arg("delta", "must be positive"));
        }
        if self.x0.len() != self.dim {
            return Err(Error::arg("x0", format!("expected {} coordinates, got {}", self.dim, self.x0.len())));
        }
        if !(self.t_final > 0.0 && self.dt > 0.0 && self.dt <= self.t_final) {
            return Err(Error::arg("dt", "need 0 < dt <= t_final"));
        }
        if self.n_paths == 0 {
            return Err(Error::arg("n_paths", "must be positive"));
        }
        let core = self.core_radius();
        if !(core > 0.0 && self.r_hit > core) {
            return Err(Error::arg("r_core", format!("need 0 < r_core < r_hit, got r_core = {core}")));
        }
        if norm(&self.x0) <= self.r_hit {
            return Err(Error::arg("x0", "starting point lies inside the hitting ball"));
        }
        let step = self.dt * self.max_applied_drift();
        if step >= self.r_hit / 10.0 {
            return Err(Error::Precondition(format!(
                "drift step {step:.3e} must stay below r_hit/10 = {:.3e}; reduce dt",
                self.r_hit / 10.0
            )));
        }
        Ok(())
    }

    fn steps(&self) -> u64 {
        (self.t_final / self.dt).round().max(1.0) as u64
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Raw counts from a range of paths; merging tallies is exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTally {
    pub paths: u64,
    pub hits: u64,
    /// Sum of hitting times over hit paths, in half-steps.
    pub hit_half_steps: u64,
    pub max_jump_bits: u64,
}

impl PathTally {
    pub fn merge(self, other: PathTally) -> PathTally {
        PathTally {
            paths: self.paths + other.paths,
            hits: self.hits + other.hits,
            hit_half_steps: self.hit_half_steps + other.hit_half_steps,
            max_jump_bits: self.max_jump_bits.max(other.max_jump_bits),
        }
    }

    pub fn max_jump(&self) -> f64 {
        f64::from_bits(self.max_jump_bits)
    }
}

/// Simulates paths `start..end`. Each path draws from its own counter-based
/// stream, so results do not depend on how the range is split.
pub fn simulate_range(config: &SdeConfig, start: u64, end: u64) -> Result<PathTally> {
    config.validate()?;
    let d = config.dim;
    let steps = config.steps();
    let dt = config.dt;
    let noise = (2.0 * dt).sqrt();
    let sign = if config.attracting { -1.0 } else { 1.0 };
    let kappa = sign * dt * config.drift_strength();
    let core2 = config.core_radius().powi(2);
    let r = config.r_hit;
    let mut tally = PathTally::default();
    let mut x = vec![0.0; d];
    let mut xi = vec![0.0; d];
    let mut max_jump = 0.0f64;
    for path in start..end {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(path);
        x.copy_from_slice(&config.x0);
        let mut rad = norm(&x);
        tally.paths += 1;
        for k in 0..steps {
            // Fixed draw count per step keeps streams aligned across configurations.
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let u: f64 = rng.random();
            let scale = kappa / (rad * rad).max(core2);
            let mut jump2 = 0.0;
            for (xa, z) in x.iter_mut().zip(&xi) {
                let delta = scale * *xa + noise * z;
                *xa += delta;
                jump2 += delta * delta;
            }
            max_jump = max_jump.max(jump2.sqrt());
            let next = norm(&x);
            if next <= r {
                tally.hits += 1;
                tally.hit_half_steps += 2 * k + 2;
                break;
            }
            if u < (-(rad - r) * (next - r) / dt).exp() {
                tally.hits += 1;
                tally.hit_half_steps += 2 * k + 1;
                break;
            }
            rad = next;
        }
    }
    tally.max_jump_bits = max_jump.to_bits();
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    pub delta: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub hits: u64,
    pub hit_fraction: f64,
    /// Wilson 95% interval.
    pub ci: (f64, f64),
    pub confidence_halfwidth: f64,
    /// Conditional on hitting; `None` without hits.
    pub mean_hit_time: Option<f64>,
    /// Set when some step moved farther than `10 r_hit`.
    pub suggested_dt: Option<f64>,
}

/// Wilson score interval for `hits` successes in `n` trials.
pub fn wilson_interval(hits: u64, n: u64, z: f64) -> (f64, f64) {
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

pub fn stats_from_tally(config: &SdeConfig, tally: PathTally) -> HittingStats {
    let ci = wilson_interval(tally.hits, tally.paths, Z95);
    let unstable = tally.max_jump() > 10.0 * config.r_hit;
    HittingStats {
        delta: config.delta,
        n_paths: tally.paths,
        seed: config.seed,
        hits: tally.hits,
        hit_fraction: tally.hits as f64 / tally.paths as f64,
        ci,
        confidence_halfwidth: 0.5 * (ci.1 - ci.0),
        mean_hit_time: (tally.hits > 0)
            .then(|| 0.5 * config.dt * tally.hit_half_steps as f64 / tally.hits as f64),
        suggested_dt: unstable.then_some(0.5 * config.dt),
    }
}

pub fn simulate_hardy_sde(config: &SdeConfig) -> Result<HittingStats> {
    let tally = simulate_range(config, 0, config.n_paths)?;
    Ok(stats_from_tally(config, tally))
}

/// One run per `delta` with the same seed, so paths share their noise.
pub fn delta_sweep(base: &SdeConfig, deltas: &[f64]) -> Result<Vec<HittingStats>> {
    deltas
        .iter()
        .map(|&delta| simulate_hardy_sde(&SdeConfig { delta, ..base.clone() }))
        .collect()
}

/// Adjacent decreases in `hit_fraction` larger than the summed halfwidths,
/// for a sweep sorted by increasing `delta`.
pub fn monotonicity_violations(stats: &[HittingStats]) -> Vec<(f64, f64)> {
    let mut sorted: Vec<&HittingStats> = stats.iter().collect();
    sorted.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    sorted
        .windows(2)
        .filter(|w| w[0].hit_fraction - w[1].hit_fraction > w[0].confidence_halfwidth + w[1].confidence_halfwidth)
        .map(|w| (w[0].delta, w[1].delta))
        .collect()
}

/// Probability that 3-D Brownian motion with generator `Laplacian`
/// (`dX = sqrt(2) dB`) started at distance `rho` enters the ball of radius
/// `r` before time `t`: `(r/rho) erfc((rho - r)/sqrt(4t))`.
pub fn brownian_hit_probability(r: f64, rho: f64, t: f64) -> f64 {
    (r / rho) * erfc((rho - r) / (4.0 * t).sqrt())
}
