//! Integrating-factor pseudospectral solver for
//! `(lambda + d/dt - Laplacian + b . grad) v = 0` on the torus.
//!
//! Diffusion and the `lambda` shift are applied exactly through the
//! multiplier `exp(-(4 pi^2 |k|^2 + lambda) dt)`. Advection is explicit and
//! dealiased with the two-thirds rule.

use std::fmt::Write as _;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid, VectorField};
use crate::orlicz::{orlicz_norm, phi, DEFAULT_TOL};
use crate::spectral::{lp_norm, mean_of, Compensated, Spectral, Spectrum};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Heun's method on the advective part.
    #[default]
    IfRk2,
    IfEuler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    /// Exponents for the per-step `L^p` norms.
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Even powers for the exponential-weight diagnostics.
    #[serde(default = "default_exp_powers")]
    pub exp_powers: Vec<u32>,
}

fn default_stride() -> usize {
    10
}
fn default_cfl() -> f64 {
    0.5
}
fn default_p_list() -> Vec<f64> {
    vec![2.0, 4.0]
}
fn default_exp_powers() -> Vec<u32> {
    vec![2, 4]
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        SolverConfig {
            dt,
            t_final,
            lambda: 0.0,
            snapshot_stride: default_stride(),
            scheme: Scheme::default(),
            cfl_safety: default_cfl(),
            p_list: default_p_list(),
            exp_powers: default_exp_powers(),
        }
    }

    pub fn steps(&self) -> Result<usize> {
        let steps = (self.t_final / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return Err(Error::arg(
                "t_final",
                format!("{} is not a whole number of steps of dt = {}", self.t_final, self.dt),
            ));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::arg("dt", "must be positive"));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::arg("t_final", "must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::arg("lambda", "must be finite and nonnegative"));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::arg("snapshot_stride", "must be at least 1"));
        }
        if !(self.cfl_safety > 0.0) {
            return Err(Error::arg("cfl_safety", "must be positive"));
        }
        if let Some(p) = self.p_list.iter().find(|p| !(**p >= 1.0)) {
            return Err(Error::arg("p_list", format!("exponent {p} is below 1")));
        }
        if let Some(p) = self.exp_powers.iter().find(|p| **p == 0 || **p % 2 == 1) {
            return Err(Error::arg("exp_powers", format!("power {p} is not a positive even integer")));
        }
        self.steps().map(|_| ())
    }

    /// Largest step allowed by the advective CFL condition (infinite for `b = 0`).
    pub fn max_stable_dt(&self, b: &VectorField) -> f64 {
        let bmax = b.max_magnitude();
        if bmax == 0.0 {
            f64::INFINITY
        } else {
            self.cfl_safety * b.grid().spacing() / bmax
        }
    }
}

/// Exponential-weight terms for one even power `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpWeight {
    pub p: u32,
    /// `<exp(v^p)>`
    pub mass: f64,
    /// `<|grad exp(v^p / 2)|^2>`
    pub grad_exp: f64,
    /// `<|grad v^(p/2)|^2 exp(v^p)>`
    pub grad_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: f64,
    pub sup_norm: f64,
    /// Aligned with the trajectory's `p_list`.
    pub lp_norms: Vec<f64>,
    /// Only evaluated at checkpoints.
    pub orlicz_norm: Option<f64>,
    /// `<cosh(v) - 1>`
    pub modular: f64,
    /// `<|grad v|^2>`
    pub dirichlet: f64,
    pub exp_weights: Vec<ExpWeight>,
}

impl StepDiagnostics {
    pub fn lp(&self, p_list: &[f64], p: f64) -> Option<f64> {
        p_list.iter().position(|q| *q == p).map(|i| self.lp_norms[i])
    }

    pub fn exp_weight(&self, p: u32) -> Option<&ExpWeight> {
        self.exp_weights.iter().find(|w| w.p == p)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TorusGrid,
    pub dt: f64,
    /// The trajectory is `u(t) exp(-shift t)`; zero for unshifted solutions.
    pub shift: f64,
    /// `<|b|^2>` of the drift that produced the trajectory.
    pub drift_l2_squared: f64,
    pub p_list: Vec<f64>,
    pub exp_powers: Vec<u32>,
    /// Checkpoint times, strictly increasing from 0.
    pub times: Vec<f64>,
    /// Full fields at the checkpoint times.
    pub snapshots: Vec<ScalarField>,
    /// Index into `diagnostics` for each checkpoint.
    pub checkpoint_rows: Vec<usize>,
    /// One row per time step.
    pub diagnostics: Vec<StepDiagnostics>,
    /// Per-step diagnostics of `exp(shift t) v`, recorded by the solver when `shift > 0`.
    pub unshifted_diagnostics: Option<Vec<StepDiagnostics>>,
}

impl Trajectory {
    pub fn initial(&self) -> &ScalarField {
        &self.snapshots[0]
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has a checkpoint at t = 0")
    }

    pub fn checkpoint_diagnostics(&self) -> impl Iterator<Item = &StepDiagnostics> {
        self.checkpoint_rows.iter().map(|i| &self.diagnostics[*i])
    }

    /// Builds a trajectory from hand-made snapshots; every snapshot is a checkpoint.
    pub fn from_snapshots(
        times: Vec<f64>,
        snapshots: Vec<ScalarField>,
        p_list: Vec<f64>,
        exp_powers: Vec<u32>,
    ) -> Result<Trajectory> {
        if snapshots.is_empty() || times.len() != snapshots.len() {
            return Err(Error::arg("snapshots", "need one snapshot per time, at least one"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("times", "must be strictly increasing"));
        }
        let grid = *snapshots[0].grid();
        for s in &snapshots {
            grid.ensure_same(s.grid())?;
        }
        let spectral = Spectral::cached(grid);
        let diagnostics = times
            .iter()
            .zip(&snapshots)
            .map(|(t, s)| field_diagnostics(&spectral, *t, s, &p_list, &exp_powers))
            .collect::<Result<Vec<_>>>()?;
        Ok(Trajectory {
            grid,
            dt: if times.len() > 1 { times[1] - times[0] } else { 0.0 },
            shift: 0.0,
            drift_l2_squared: 0.0,
            p_list,
            exp_powers,
            checkpoint_rows: (0..times.len()).collect(),
            times,
            snapshots,
            diagnostics,
            unshifted_diagnostics: None,
        })
    }
}

/// Diagnostics of a full field, including its Orlicz norm.
fn field_diagnostics(
    spectral: &Spectral,
    t: f64,
    f: &ScalarField,
    p_list: &[f64],
    exp_powers: &[u32],
) -> Result<StepDiagnostics> {
    let fhat = spectral.forward(f.values());
    let grads = if exp_powers.is_empty() {
        Vec::new()
    } else {
        gradient_values(spectral, &fhat)
    };
    let mut row = pointwise_diagnostics(
        spectral.grid(),
        t,
        f.values(),
        &grads,
        1.0,
        spectral.dirichlet_from_spectrum(&fhat),
        p_list,
        exp_powers,
    );
    row.orlicz_norm = Some(orlicz_norm(f, DEFAULT_TOL)?.value);
    Ok(row)
}

fn gradient_values(spectral: &Spectral, fhat: &[Complex64]) -> Vec<Vec<f64>> {
    (0..spectral.grid().dim())
        .map(|a| spectral.inverse(spectral.derivative_spectrum(fhat, a)))
        .collect()
}

/// Diagnostics of `scale * v` given grid values of `v` and of its gradient.
#[allow(clippy::too_many_arguments)]
fn pointwise_diagnostics(
    grid: &TorusGrid,
    t: f64,
    v: &[f64],
    grads: &[Vec<f64>],
    scale: f64,
    dirichlet_of_v: f64,
    p_list: &[f64],
    exp_powers: &[u32],
) -> StepDiagnostics {
    let scaled: Vec<f64> = v.iter().map(|x| scale * x).collect();
    let field = ScalarField::from_raw(*grid, scaled);
    let lp_norms = p_list
        .iter()
        .map(|p| lp_norm(&field, *p).expect("validated exponent"))
        .collect();
    let u = field.values();
    let grad_sq: Vec<f64> = if grads.is_empty() {
        Vec::new()
    } else {
        (0..u.len())
            .map(|j| scale * scale * grads.iter().map(|g| g[j] * g[j]).sum::<f64>())
            .collect()
    };
    let vol = grid.cell_volume();
    let exp_weights = exp_powers
        .iter()
        .map(|&p| {
            let quarter_p2 = (p as f64 / 2.0).powi(2);
            let pi = p as i32;
            let (mut mass, mut grad_exp, mut grad_power) =
                (Compensated::default(), Compensated::default(), Compensated::default());
            for (j, x) in u.iter().enumerate() {
                let low = x.powi(pi - 2);
                let e = (low * x * x).exp();
                mass.add(e);
                if let Some(g) = grad_sq.get(j) {
                    let w = quarter_p2 * low * e * g;
                    grad_power.add(w);
                    grad_exp.add(w * low * x * x);
                }
            }
            ExpWeight {
                p,
                mass: mass.value() * vol,
                grad_exp: grad_exp.value() * vol,
                grad_power: grad_power.value() * vol,
            }
        })
        .collect();
    StepDiagnostics {
        t,
        sup_norm: field.max_abs(),
        lp_norms,
        orlicz_norm: None,
        modular: mean_of(grid, u.iter().map(|x| phi(*x))),
        dirichlet: scale * scale * dirichlet_of_v,
        exp_weights,
    }
}

struct Stepper {
    spectral: Arc<Spectral>,
    /// Dealiased drift components on the grid; empty for `b = 0`.
    drift: Vec<Vec<f64>>,
    /// Two-thirds truncation mask.
    keep: Vec<bool>,
    propagator: Vec<f64>,
    dt: f64,
}

impl Stepper {
    fn advection(&self, vhat: &[Complex64]) -> Spectrum {
        let zero = Complex64::new(0.0, 0.0);
        if self.drift.is_empty() {
            return vec![zero; vhat.len()];
        }
        let truncated: Spectrum = vhat
            .iter()
            .zip(&self.keep)
            .map(|(c, k)| if *k { *c } else { zero })
            .collect();
        let mut acc = vec![0.0; self.spectral.grid().len()];
        for (a, b) in self.drift.iter().enumerate() {
            let g = self.spectral.inverse(self.spectral.derivative_spectrum(&truncated, a));
            for ((s, bi), gi) in acc.iter_mut().zip(b).zip(&g) {
                *s += bi * gi;
            }
        }
        let mut out = self.spectral.forward(&acc);
        for (c, k) in out.iter_mut().zip(&self.keep) {
            *c = if *k { -*c } else { zero };
        }
        out
    }

    fn step(&self, vhat: &[Complex64], scheme: Scheme) -> Spectrum {
        let e = &self.propagator;
        let dt = self.dt;
        let n0 = self.advection(vhat);
        match scheme {
            Scheme::IfEuler => vhat
                .iter()
                .zip(&n0)
                .zip(e)
                .map(|((v, n), e)| e * (v + dt * n))
                .collect(),
            Scheme::IfRk2 => {
                let v1: Spectrum = vhat
                    .iter()
                    .zip(&n0)
                    .zip(e)
                    .map(|((v, n), e)| e * (v + dt * n))
                    .collect();
                let n1 = self.advection(&v1);
                vhat.iter()
                    .zip(&n0)
                    .zip(&n1)
                    .zip(e)
                    .map(|(((v, a), b), e)| e * v + 0.5 * dt * (e * a + b))
                    .collect()
            }
        }
    }
}

/// Two-thirds rule: keep modes with `3 |k_a| < n` on every axis.
fn dealias_mask(spectral: &Spectral) -> Vec<bool> {
    let n = spectral.grid().n() as f64;
    let mut keep = vec![false; spectral.spectrum_len()];
    spectral.for_each_mode(|j, k| {
        keep[j] = k.iter().all(|ka| 3.0 * ka.abs() < n);
    });
    keep
}

/// Solves from `f` at `t = 0` to `config.t_final` with drift `b`.
pub fn solve(b: &VectorField, f: &ScalarField, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let grid = *f.grid();
    grid.ensure_same(b.grid())?;
    f.check_finite("initial datum")?;
    let limit = config.max_stable_dt(b);
    if config.dt > limit {
        return Err(Error::Precondition(format!(
            "CFL violated: dt = {} exceeds {:.3e} = {} * h / max|b|",
            config.dt, limit, config.cfl_safety
        )));
    }
    let steps = config.steps()?;
    let spectral = Spectral::cached(grid);
    let keep = dealias_mask(&spectral);
    let drift = if b.max_magnitude() == 0.0 {
        Vec::new()
    } else {
        b.components()
            .iter()
            .map(|c| {
                let mut chat = spectral.forward(c.values());
                for (x, k) in chat.iter_mut().zip(&keep) {
                    if !k {
                        *x = Complex64::new(0.0, 0.0);
                    }
                }
                spectral.inverse(chat)
            })
            .collect()
    };
    let four_pi2 = 4.0 * std::f64::consts::PI.powi(2);
    let propagator = spectral
        .k_squared()
        .iter()
        .map(|k2| (-(four_pi2 * k2 + config.lambda) * config.dt).exp())
        .collect();
    let stepper = Stepper {
        spectral: spectral.clone(),
        drift,
        keep,
        propagator,
        dt: config.dt,
    };

    let lambda = config.lambda;
    let want_grad = !config.exp_powers.is_empty();
    let mut traj = Trajectory {
        grid,
        dt: config.dt,
        shift: lambda,
        drift_l2_squared: mean_of(&grid, b.magnitude_squared().values().iter().copied()),
        p_list: config.p_list.clone(),
        exp_powers: config.exp_powers.clone(),
        times: Vec::new(),
        snapshots: Vec::new(),
        checkpoint_rows: Vec::new(),
        diagnostics: Vec::with_capacity(steps + 1),
        unshifted_diagnostics: (lambda > 0.0).then(|| Vec::with_capacity(steps + 1)),
    };

    let mut vhat = spectral.forward(f.values());
    for k in 0..=steps {
        let t = if k == steps { config.t_final } else { k as f64 * config.dt };
        let values = if k == 0 {
            f.values().to_vec()
        } else {
            spectral.inverse(vhat.clone())
        };
        if let Some(index) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::SolverDiverged {
                t,
                reason: format!("non-finite value at grid index {index}"),
                last_valid: Box::new(traj),
            });
        }
        let grads = if want_grad { gradient_values(&spectral, &vhat) } else { Vec::new() };
        let dirichlet = spectral.dirichlet_from_spectrum(&vhat);
        let mut row = pointwise_diagnostics(
            &grid,
            t,
            &values,
            &grads,
            1.0,
            dirichlet,
            &config.p_list,
            &config.exp_powers,
        );
        let mut companion = traj.unshifted_diagnostics.as_ref().map(|_| {
            pointwise_diagnostics(
                &grid,
                t,
                &values,
                &grads,
                (lambda * t).exp(),
                dirichlet,
                &config.p_list,
                &config.exp_powers,
            )
        });
        if k % config.snapshot_stride == 0 || k == steps {
            let snap = if k == 0 { f.clone() } else { ScalarField::from_raw(grid, values) };
            let norm = orlicz_norm(&snap, DEFAULT_TOL)?.value;
            row.orlicz_norm = Some(norm);
            if let Some(c) = companion.as_mut() {
                c.orlicz_norm = Some(norm * (lambda * t).exp());
            }
            traj.times.push(t);
            traj.snapshots.push(snap);
            traj.checkpoint_rows.push(k);
        }
        traj.diagnostics.push(row);
        if let (Some(rows), Some(c)) = (traj.unshifted_diagnostics.as_mut(), companion) {
            rows.push(c);
        }
        if k < steps {
            vhat = stepper.step(&vhat, config.scheme);
        }
    }
    Ok(traj)
}

/// Multiplies the snapshot at time `t` by `exp(lambda t)`.
///
/// When `lambda` equals the solver shift the per-step diagnostics recorded
/// during the solve are used. Otherwise diagnostics are recomputed from the
/// snapshots and only checkpoint rows are kept.
pub fn unshift(traj: &Trajectory, lambda: f64) -> Result<Trajectory> {
    if lambda == 0.0 {
        return Ok(traj.clone());
    }
    let snapshots: Vec<ScalarField> = traj
        .times
        .iter()
        .zip(&traj.snapshots)
        .map(|(t, s)| s.scale((lambda * t).exp()))
        .collect();
    let shift = traj.shift - lambda;
    if lambda == traj.shift {
        if let Some(rows) = &traj.unshifted_diagnostics {
            return Ok(Trajectory {
                snapshots,
                shift,
                diagnostics: rows.clone(),
                unshifted_diagnostics: None,
                ..traj.clone()
            });
        }
    }
    let spectral = Spectral::cached(traj.grid);
    let diagnostics = traj
        .times
        .iter()
        .zip(&snapshots)
        .map(|(t, s)| field_diagnostics(&spectral, *t, s, &traj.p_list, &traj.exp_powers))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        snapshots,
        shift,
        checkpoint_rows: (0..diagnostics.len()).collect(),
        diagnostics,
        unshifted_diagnostics: None,
        ..traj.clone()
    })
}

/// One CSV row per step.
pub fn diagnostics_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,sup");
    for p in &traj.p_list {
        let _ = write!(out, ",l{p}");
    }
    out.push_str(",orlicz,modular,dirichlet");
    for p in &traj.exp_powers {
        let _ = write!(out, ",exp_mass_p{p},exp_grad_p{p},power_grad_p{p}");
    }
    out.push('\n');
    for row in &traj.diagnostics {
        let _ = write!(out, "{:e},{:e}", row.t, row.sup_norm);
        for v in &row.lp_norms {
            let _ = write!(out, ",{v:e}");
        }
        match row.orlicz_norm {
            Some(v) => {
                let _ = write!(out, ",{v:e}");
            }
            None => out.push(','),
        }
        let _ = write!(out, ",{:e},{:e}", row.modular, row.dirichlet);
        for w in &row.exp_weights {
            let _ = write!(out, ",{:e},{:e},{:e}", w.mass, w.grad_exp, w.grad_power);
        }
        out.push('\n');
    }
    out
}
