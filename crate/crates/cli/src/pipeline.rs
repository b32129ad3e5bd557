//! Pipelines behind each subcommand. Every stage appends to an in-memory
//! [`Artifacts`] set; the caller commits it once the pipeline returns.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use critdrift::config::ExperimentConfig;
use critdrift::drift::{
    build_drift, form_bound_estimate, l2_distance, mollify_drift, random_trials, verify_form_bound,
    FormBoundOutcome, FormBoundRow,
};
use critdrift::orlicz::{orlicz_norm, OrliczNorm, DEFAULT_TOL};
use critdrift::sde::{monotonicity_violations, simulate_range, stats_from_tally, HittingStats, PathTally};
use critdrift::solver::{diagnostics_csv, solve, unshift, SolverConfig, Trajectory};
use critdrift::spectral::{integrate, lp_norm};
use critdrift::verify::{
    cauchy_from_trajectories, check_cosh_energy, check_exp_energy, check_gradient_bound, check_lp_contraction,
    check_orlicz_contraction, gradient_budget, lp_threshold, record_lp_behavior, ToleranceTier,
    VerificationReport,
};
use critdrift::{ScalarField, TorusGrid, VectorField};

use crate::artifacts::Artifacts;

/// Relative slack allowed when a certificate is checked on trial fields.
pub const CERTIFICATE_TOL: f64 = 1e-8;
/// Absolute slack on the discrete maximum principle.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-10;
/// Paths per parallel work unit in the SDE sweep.
const SDE_CHUNK: u64 = 1000;

pub struct Pipeline<'a> {
    pub config: &'a ExperimentConfig,
    pub grid: TorusGrid,
    pub parallel: bool,
    pub artifacts: Artifacts,
}

fn map<T: Sync, R: Send>(parallel: bool, items: &[T], f: impl Fn(&T) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateRow {
    #[serde(flatten)]
    pub row: FormBoundRow,
    /// Worst relative violation on the random trial family.
    pub max_relative_violation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateStage {
    pub mean_b_squared: f64,
    pub trials: usize,
    pub rows: Vec<CertificateRow>,
    #[serde(skip)]
    pub outcomes: Vec<FormBoundOutcome>,
}

impl CertificateStage {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| {
            !r.row.feasible || (r.row.converged && r.max_relative_violation.map_or(true, |v| v <= CERTIFICATE_TOL))
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Constants {
    pub delta: f64,
    pub c_delta: f64,
    /// `delta_hat(c)` when `c` comes from a certificate.
    pub delta_hat: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportEntry {
    pub member: Option<String>,
    pub eps: Option<f64>,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub passed: bool,
    pub tier: ToleranceTier,
    pub constants: Constants,
    pub lambda: f64,
    pub schedule: Vec<f64>,
    pub schedule_alt: Vec<f64>,
    pub reports: Vec<ReportEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SdeRow {
    pub delta: f64,
    pub hit_fraction: f64,
    pub ci: (f64, f64),
    pub mean_hit_time: Option<f64>,
    pub n_paths: u64,
    pub seed: u64,
    pub suggested_dt: Option<f64>,
}

impl From<&HittingStats> for SdeRow {
    fn from(s: &HittingStats) -> Self {
        SdeRow {
            delta: s.delta,
            hit_fraction: s.hit_fraction,
            ci: s.ci,
            mean_hit_time: s.mean_hit_time,
            n_paths: s.n_paths,
            seed: s.seed,
            suggested_dt: s.suggested_dt,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct SdeSummary {
    passed: bool,
    monotone: bool,
    violations: Vec<(f64, f64)>,
    rows: Vec<SdeRow>,
}

#[derive(Debug, Clone, Serialize)]
struct NormSummary {
    dim: usize,
    n: usize,
    sup: f64,
    orlicz: OrliczNorm,
    lp: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
struct MollifyRow {
    schedule: &'static str,
    index: usize,
    eps: f64,
    l2_distance_to_parent: f64,
    max_magnitude: f64,
    max_stable_dt: f64,
    parent_certificate_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
struct SolveRow {
    member: String,
    eps: f64,
    lambda: f64,
    steps: usize,
    final_sup: f64,
    final_orlicz: Option<f64>,
    max_principle_excess: f64,
}

fn max_principle_excess(traj: &Trajectory) -> f64 {
    let bound = traj.initial().max_abs();
    traj.diagnostics.iter().map(|r| r.sup_norm - bound).fold(f64::NEG_INFINITY, f64::max)
}

impl<'a> Pipeline<'a> {
    pub fn new(config: &'a ExperimentConfig, parallel: bool) -> Result<Self> {
        Ok(Pipeline {
            config,
            grid: config.grid()?,
            parallel,
            artifacts: Artifacts::default(),
        })
    }

    fn tier(&self) -> ToleranceTier {
        self.config.verifier.tier
    }

    pub fn drift(&self) -> Result<VectorField> {
        build_drift(&self.config.drift, self.grid).context("building drift")
    }

    pub fn initial(&self) -> Result<ScalarField> {
        self.config.initial.build(self.grid).context("building initial datum")
    }

    /// Certificates over the configured `c` sweep, optionally checked on the
    /// random trial family.
    pub fn certificates(&self, b: &VectorField, with_trials: bool) -> Result<CertificateStage> {
        let fb = &self.config.formbound;
        let mean = integrate(&b.magnitude_squared())?;
        let c_values = fb.resolve_c_values(mean);
        let options = fb.options(self.config.seed);
        let outcomes: Vec<FormBoundOutcome> = map(self.parallel, &c_values, |c| {
            Ok(form_bound_estimate(b, &[*c], &options)?.remove(0))
        })
        .context("form-bound estimation")?;
        let trials = if with_trials {
            random_trials(self.grid, fb.trials, self.config.seed)
        } else {
            Vec::new()
        };
        let rows = map(self.parallel, &outcomes, |o| {
            let max_relative_violation = match o.certificate() {
                Some(cert) if with_trials => {
                    Some(verify_form_bound(b, cert.delta_hat, cert.c_delta, &trials)?.max_relative_violation)
                }
                _ => None,
            };
            Ok(CertificateRow {
                row: o.row(),
                max_relative_violation,
            })
        })?;
        Ok(CertificateStage {
            mean_b_squared: mean,
            trials: trials.len(),
            rows,
            outcomes,
        })
    }

    /// `(delta, c)` for the checks: explicit values win, otherwise the
    /// smallest certified `c` whose `delta_hat` does not exceed `delta`.
    pub fn constants(&self, stage: Option<&CertificateStage>) -> Result<Constants> {
        let delta = self.config.check_delta();
        if let Some(c) = self.config.verifier.c_delta {
            return Ok(Constants {
                delta,
                c_delta: c,
                delta_hat: None,
            });
        }
        let stage = stage.context("no certificate stage to choose c_delta from")?;
        let best = stage
            .outcomes
            .iter()
            .filter_map(|o| o.certificate())
            .filter(|cert| cert.converged && cert.delta_hat <= delta)
            .min_by(|a, b| a.c_delta.total_cmp(&b.c_delta));
        match best {
            Some(cert) => Ok(Constants {
                delta,
                c_delta: cert.c_delta,
                delta_hat: Some(cert.delta_hat),
            }),
            None => bail!(
                "no certified c with delta_hat <= {delta}; widen formbound.c_values or set verifier.c_delta"
            ),
        }
    }

    fn needs_certificate(&self) -> bool {
        self.config.verifier.c_delta.is_none()
    }

    pub fn solver_config(&self, k: &Constants) -> SolverConfig {
        self.config
            .solver
            .resolve(k.c_delta / k.delta.sqrt(), &self.config.verifier.p_list)
    }

    fn mollified(&self, b: &VectorField, schedule: &[f64]) -> Result<Vec<VectorField>> {
        map(self.parallel, schedule, |eps| Ok(mollify_drift(b, *eps)?))
    }

    fn solve_all(&self, members: &[VectorField], f: &ScalarField, cfg: &SolverConfig) -> Result<Vec<Trajectory>> {
        let indexed: Vec<(usize, &VectorField)> = members.iter().enumerate().collect();
        map(self.parallel, &indexed, |(i, b)| {
            solve(b, f, cfg).with_context(|| format!("solving schedule member {i}"))
        })
    }

    pub fn norm(&mut self, field: Option<ScalarField>) -> Result<bool> {
        let f = match field {
            Some(f) => f,
            None => self.initial()?,
        };
        let orlicz = orlicz_norm(&f, DEFAULT_TOL)?;
        let lp = self
            .config
            .verifier
            .p_list
            .iter()
            .map(|p| Ok((*p, lp_norm(&f, *p)?)))
            .collect::<Result<Vec<_>>>()?;
        let summary = NormSummary {
            dim: f.grid().dim(),
            n: f.grid().n(),
            sup: f.max_abs(),
            orlicz,
            lp,
        };
        self.artifacts.add_json("norm.json", &summary)?;
        Ok(true)
    }

    pub fn formbound(&mut self) -> Result<bool> {
        let b = self.drift()?;
        let stage = self.certificates(&b, true)?;
        for (i, o) in stage.outcomes.iter().enumerate() {
            if let Some(cert) = o.certificate() {
                self.artifacts.add_scalar(format!("fields/witness_{i}.bin"), &cert.witness);
            }
        }
        self.artifacts.add_vector("fields/drift.bin", &b);
        self.artifacts.add_json("formbound.json", &stage)?;
        Ok(stage.passed())
    }

    pub fn mollify(&mut self) -> Result<bool> {
        let b = self.drift()?;
        let stage = self.certificates(&b, false)?;
        let k = self.constants(Some(&stage))?;
        let cfg = self.solver_config(&k);
        let trials = random_trials(self.grid, self.config.formbound.trials, self.config.seed);
        let parent = stage
            .outcomes
            .iter()
            .filter_map(|o| o.certificate())
            .find(|c| c.c_delta == k.c_delta);
        let (dh, c) = parent.map_or((k.delta, k.c_delta), |p| (p.delta_hat, p.c_delta));
        let m = &self.config.mollification;
        let mut rows = Vec::new();
        for (name, schedule) in [("a", &m.schedule), ("b", &m.schedule_alt)] {
            let members = self.mollified(&b, schedule)?;
            let violations = map(self.parallel, &members, |be| {
                Ok(verify_form_bound(be, dh, c, &trials)?.max_relative_violation)
            })?;
            for (i, (be, v)) in members.iter().zip(violations).enumerate() {
                self.artifacts.add_vector(format!("fields/mollified_{name}_{i}.bin"), be);
                rows.push(MollifyRow {
                    schedule: name,
                    index: i,
                    eps: schedule[i],
                    l2_distance_to_parent: l2_distance(be, &b)?,
                    max_magnitude: be.max_magnitude(),
                    max_stable_dt: cfg.max_stable_dt(be),
                    parent_certificate_violation: v,
                });
            }
        }
        let passed = rows.iter().all(|r| r.parent_certificate_violation <= CERTIFICATE_TOL);
        #[derive(Serialize)]
        struct Out {
            passed: bool,
            delta_hat: f64,
            c_delta: f64,
            rows: Vec<MollifyRow>,
        }
        self.artifacts.add_json(
            "mollify.json",
            &Out {
                passed,
                delta_hat: dh,
                c_delta: c,
                rows,
            },
        )?;
        Ok(passed)
    }

    pub fn solve(&mut self) -> Result<bool> {
        let b = self.drift()?;
        let f = self.initial()?;
        let stage = if self.needs_certificate() {
            Some(self.certificates(&b, false)?)
        } else {
            None
        };
        let k = self.constants(stage.as_ref())?;
        let cfg = self.solver_config(&k);
        let schedule = self.config.mollification.schedule.clone();
        let members = self.mollified(&b, &schedule)?;
        let trajs = self.solve_all(&members, &f, &cfg)?;
        let mut rows = Vec::new();
        for (i, t) in trajs.iter().enumerate() {
            self.artifacts.add_text(format!("diagnostics/a_{i}.csv"), diagnostics_csv(t));
            self.artifacts.add_scalar(format!("fields/final_a_{i}.bin"), t.snapshots.last().expect("final snapshot"));
            let last = t.diagnostics.last().expect("final row");
            rows.push(SolveRow {
                member: format!("a_{i}"),
                eps: schedule[i],
                lambda: t.shift,
                steps: t.diagnostics.len() - 1,
                final_sup: last.sup_norm,
                final_orlicz: last.orlicz_norm,
                max_principle_excess: max_principle_excess(t),
            });
        }
        let passed = rows.iter().all(|r| r.max_principle_excess <= MAX_PRINCIPLE_TOL);
        #[derive(Serialize)]
        struct Out {
            passed: bool,
            constants: Constants,
            members: Vec<SolveRow>,
        }
        self.artifacts.add_json(
            "solve.json",
            &Out {
                passed,
                constants: k,
                members: rows,
            },
        )?;
        Ok(passed)
    }

    pub fn verify(&mut self) -> Result<bool> {
        let v = &self.config.verifier;
        let tier = self.tier();
        let b = self.drift()?;
        let f = self.initial()?;
        let stage = self.certificates(&b, true)?;
        let k = self.constants(Some(&stage))?;
        let cfg = self.solver_config(&k);
        let rate = k.c_delta / k.delta.sqrt();
        if v.selects("cosh_energy") && (cfg.lambda - rate).abs() > 1e-12 * rate.max(1e-300) {
            bail!(
                "cosh_energy needs lambda = c/sqrt(delta) = {rate}, but solver.lambda = {}; use \"auto\"",
                cfg.lambda
            );
        }
        let m = &self.config.mollification;
        let use_alt = v.selects("cauchy_convergence") || v.selects("gradient_bound");
        let members_a = self.mollified(&b, &m.schedule)?;
        let trajs_a = self.solve_all(&members_a, &f, &cfg)?;
        let trajs_b = if use_alt {
            let members_b = self.mollified(&b, &m.schedule_alt)?;
            self.solve_all(&members_b, &f, &cfg)?
        } else {
            Vec::new()
        };

        let mut reports = Vec::new();
        let per_member = |i: usize, t: &Trajectory| -> Result<Vec<ReportEntry>> {
            let u = unshift(t, t.shift)?;
            let mut out: Vec<VerificationReport> = Vec::new();
            if v.selects("orlicz_contraction") {
                out.extend(check_orlicz_contraction(&u, k.delta, k.c_delta, tier)?);
            }
            if v.selects("lp_contraction") {
                let threshold = lp_threshold(k.delta)?;
                for &p in &v.p_list {
                    if p >= threshold * (1.0 - 1e-12) {
                        out.push(check_lp_contraction(&u, p, k.delta, k.c_delta, tier)?);
                    } else {
                        out.push(record_lp_behavior(&u, p, k.delta, k.c_delta, tier)?);
                    }
                }
            }
            if v.selects("cosh_energy") {
                out.push(check_cosh_energy(t, k.delta, k.c_delta, tier)?);
            }
            if v.selects("exp_energy") {
                for p in cfg.exp_powers.iter().filter(|p| **p == 2 || **p == 4) {
                    out.extend(check_exp_energy(&u, *p, k.delta, k.c_delta, tier)?);
                }
            }
            Ok(out
                .into_iter()
                .map(|report| ReportEntry {
                    member: Some(format!("a_{i}")),
                    eps: Some(m.schedule[i]),
                    report,
                })
                .collect())
        };
        let indexed: Vec<(usize, &Trajectory)> = trajs_a.iter().enumerate().collect();
        for entries in map(self.parallel, &indexed, |(i, t)| per_member(*i, t))? {
            reports.extend(entries);
        }
        if v.selects("gradient_bound") {
            let all: Vec<Trajectory> = trajs_a.iter().chain(&trajs_b).cloned().collect();
            let c0 = gradient_budget(&all);
            reports.push(ReportEntry {
                member: None,
                eps: None,
                report: check_gradient_bound(&all, &f, c0, tier)?,
            });
        }
        for (name, trajs) in [("a", &trajs_a), ("b", &trajs_b)] {
            for (i, t) in trajs.iter().enumerate() {
                self.artifacts.add_text(format!("diagnostics/{name}_{i}.csv"), diagnostics_csv(t));
            }
            if let Some(last) = trajs.last() {
                let fin = last.snapshots.last().expect("final snapshot");
                self.artifacts.add_scalar(format!("fields/final_{name}_finest.bin"), fin);
            }
        }
        if v.selects("cauchy_convergence") {
            let study = cauchy_from_trajectories(trajs_a, trajs_b, tier)?;
            reports.push(ReportEntry {
                member: None,
                eps: None,
                report: study.report,
            });
        }
        let passed = stage.passed() && reports.iter().all(|e| e.report.informational || e.report.passed);
        let summary = VerifySummary {
            passed,
            tier,
            constants: k,
            lambda: cfg.lambda,
            schedule: m.schedule.clone(),
            schedule_alt: if use_alt { m.schedule_alt.clone() } else { Vec::new() },
            reports,
        };
        let mut text = String::new();
        for e in &summary.reports {
            if let Some(member) = &e.member {
                text.push_str(&format!("# member {member} (eps = {:e})\n", e.eps.unwrap_or(0.0)));
            }
            text.push_str(&e.report.to_text());
            text.push('\n');
        }
        text.push_str(&format!("overall: {}\n", if passed { "PASS" } else { "FAIL" }));
        self.artifacts.add_json("formbound.json", &stage)?;
        self.artifacts.add_json("reports.json", &summary)?;
        self.artifacts.add_text("reports.txt", text);
        Ok(passed)
    }

    pub fn sde(&mut self) -> Result<bool> {
        let section = self.config.sde.clone().unwrap_or_default();
        let configs: Vec<_> = section.deltas.iter().map(|d| section.config(*d, self.config.seed)).collect();
        let mut stats = Vec::new();
        for cfg in &configs {
            cfg.validate()?;
            let tally = if self.parallel {
                let chunks: Vec<(u64, u64)> = (0..cfg.n_paths)
                    .step_by(SDE_CHUNK as usize)
                    .map(|s| (s, (s + SDE_CHUNK).min(cfg.n_paths)))
                    .collect();
                chunks
                    .par_iter()
                    .map(|(s, e)| simulate_range(cfg, *s, *e))
                    .collect::<critdrift::Result<Vec<_>>>()?
                    .into_iter()
                    .fold(PathTally::default(), PathTally::merge)
            } else {
                simulate_range(cfg, 0, cfg.n_paths)?
            };
            stats.push(stats_from_tally(cfg, tally));
        }
        let violations = monotonicity_violations(&stats);
        let monotone = violations.is_empty();
        let stable = stats.iter().all(|s| s.suggested_dt.is_none());
        let summary = SdeSummary {
            passed: monotone && stable,
            monotone,
            violations,
            rows: stats.iter().map(SdeRow::from).collect(),
        };
        self.artifacts.add_json("sde.json", &summary)?;
        Ok(summary.passed)
    }
}
