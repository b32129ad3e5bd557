//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::drift::{DriftKind, DriftSpec, FormBoundOptions, TrigTerm};
use crate::error::{Error, Result};
use crate::fieldio;
use crate::grid::{ScalarField, TorusGrid};
use crate::sde::SdeConfig;
use crate::solver::{Scheme, SolverConfig};
use crate::verify::{validate_schedule, ToleranceTier, INEQUALITY_IDS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub grid: GridSection,
    pub drift: DriftSpec,
    #[serde(default)]
    pub mollification: MollificationSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: InitialSpec,
    #[serde(default)]
    pub formbound: FormBoundSection,
    #[serde(default)]
    pub verifier: VerifierSection,
    #[serde(default)]
    pub sde: Option<SdeSection>,
}

fn default_seed() -> u64 {
    42
}
fn default_output() -> PathBuf {
    PathBuf::from("critdrift-out")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollificationSection {
    #[serde(default = "default_schedule")]
    pub schedule: Vec<f64>,
    /// Second schedule for the cross-schedule comparison; empty disables it.
    #[serde(default = "interleaved_schedule")]
    pub schedule_alt: Vec<f64>,
}

impl Default for MollificationSection {
    fn default() -> Self {
        MollificationSection {
            schedule: default_schedule(),
            schedule_alt: interleaved_schedule(),
        }
    }
}

/// `eps_k = 4^{-k} 1e-2`, `k = 0..3`.
pub fn default_schedule() -> Vec<f64> {
    (0..4).map(|k| 1e-2 * 4f64.powi(-k)).collect()
}

/// `eps_k = 2 * 4^{-k} 1e-2`, `k = 0..3`, interleaving [`default_schedule`].
pub fn interleaved_schedule() -> Vec<f64> {
    (0..4).map(|k| 2e-2 * 4f64.powi(-k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda {
    Value(f64),
    Auto(AutoTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoTag {
    Auto,
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda::Auto(AutoTag::Auto)
    }
}

/// Solver settings; `lambda = "auto"` resolves to `c/sqrt(delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default)]
    pub lambda: Lambda,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_exp_powers")]
    pub exp_powers: Vec<u32>,
}

fn default_stride() -> usize {
    10
}
fn default_cfl() -> f64 {
    0.5
}
fn default_exp_powers() -> Vec<u32> {
    vec![2, 4]
}

impl SolverSection {
    pub fn resolve(&self, auto_lambda: f64, p_list: &[f64]) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            t_final: self.t_final,
            lambda: match self.lambda {
                Lambda::Value(v) => v,
                Lambda::Auto(_) => auto_lambda,
            },
            snapshot_stride: self.snapshot_stride,
            scheme: self.scheme,
            cfl_safety: self.cfl_safety,
            p_list: p_list.to_vec(),
            exp_powers: self.exp_powers.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `offset + sum of amplitude * sin(2 pi k.x + phase)`.
    Trig {
        #[serde(default)]
        offset: f64,
        terms: Vec<TrigTerm>,
    },
    /// `amplitude * exp(-|x|^2 / (2 width^2))`, centred at the origin.
    Bump { amplitude: f64, width: f64 },
    File { path: PathBuf },
    Zero,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Trig {
            offset: 0.1,
            terms: vec![
                TrigTerm {
                    amplitude: 0.5,
                    wavevector: vec![1, 0, 0],
                    phase: 0.0,
                },
                TrigTerm {
                    amplitude: 0.3,
                    wavevector: vec![0, 1, 1],
                    phase: 0.5,
                },
            ],
        }
    }
}

impl InitialSpec {
    pub fn build(&self, grid: TorusGrid) -> Result<ScalarField> {
        match self {
            InitialSpec::Trig { offset, terms } => {
                for t in terms {
                    if t.wavevector.len() < grid.dim() || t.wavevector[grid.dim()..].iter().any(|k| *k != 0) {
                        return Err(Error::Config(format!(
                            "initial wavevector {:?} does not fit a {}-dimensional grid",
                            t.wavevector,
                            grid.dim()
                        )));
                    }
                }
                ScalarField::from_fn(grid, |x| offset + terms.iter().map(|t| t.eval(x)).sum::<f64>())
            }
            InitialSpec::Bump { amplitude, width } => {
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("bump width must be positive, got {width}")));
                }
                ScalarField::from_fn(grid, |x| {
                    let r2: f64 = x.iter().map(|v| v * v).sum();
                    amplitude * (-r2 / (2.0 * width * width)).exp()
                })
            }
            InitialSpec::File { path } => {
                let f = fieldio::read_scalar(path)?;
                if *f.grid() != grid {
                    return Err(Error::GridMismatch {
                        expected_dim: grid.dim(),
                        expected_n: grid.n(),
                        found_dim: f.grid().dim(),
                        found_n: f.grid().n(),
                    });
                }
                Ok(f)
            }
            InitialSpec::Zero => Ok(ScalarField::zeros(grid)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormBoundSection {
    /// Absolute `c` values; empty means multiples `{1.1, 1.5, 2, 4}` of `<|b|^2>`.
    #[serde(default)]
    pub c_values: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_fb_iter")]
    pub max_iter: usize,
    #[serde(default = "default_fb_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub mean_zero_only: bool,
}

fn default_trials() -> usize {
    100
}
fn default_fb_iter() -> usize {
    FormBoundOptions::default().max_iter
}
fn default_fb_tol() -> f64 {
    FormBoundOptions::default().rel_tol
}

impl Default for FormBoundSection {
    fn default() -> Self {
        FormBoundSection {
            c_values: Vec::new(),
            trials: default_trials(),
            max_iter: default_fb_iter(),
            rel_tol: default_fb_tol(),
            mean_zero_only: false,
        }
    }
}

/// Multiples of `<|b|^2>` used when no `c_values` are configured.
pub const AUTO_C_FACTORS: [f64; 4] = [1.1, 1.5, 2.0, 4.0];

impl FormBoundSection {
    pub fn options(&self, seed: u64) -> FormBoundOptions {
        FormBoundOptions {
            max_iter: self.max_iter,
            rel_tol: self.rel_tol,
            seed,
            mean_zero_only: self.mean_zero_only,
            ..FormBoundOptions::default()
        }
    }

    pub fn resolve_c_values(&self, mean_b_squared: f64) -> Vec<f64> {
        if !self.c_values.is_empty() {
            return self.c_values.clone();
        }
        if mean_b_squared == 0.0 {
            return vec![0.0];
        }
        AUTO_C_FACTORS.iter().map(|f| f * mean_b_squared).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifierSection {
    #[serde(default = "default_inequalities")]
    pub inequalities: Vec<String>,
    #[serde(default = "default_tier")]
    pub tier: ToleranceTier,
    #[serde(default = "default_p_list")]
    pub p_list: Vec<f64>,
    /// Form-bound used by the checks; defaults to the Hardy parameter, else 4.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Defaults to the smallest certified `c` with `delta_hat <= delta`.
    #[serde(default)]
    pub c_delta: Option<f64>,
}

fn default_inequalities() -> Vec<String> {
    ["orlicz_contraction", "cosh_energy", "exp_energy", "gradient_bound", "cauchy_convergence"]
        .into_iter()
        .map(String::from)
        .collect()
}
fn default_tier() -> ToleranceTier {
    ToleranceTier::Singular
}
fn default_p_list() -> Vec<f64> {
    vec![2.0, 4.0]
}

impl Default for VerifierSection {
    fn default() -> Self {
        VerifierSection {
            inequalities: default_inequalities(),
            tier: default_tier(),
            p_list: default_p_list(),
            delta: None,
            c_delta: None,
        }
    }
}

impl VerifierSection {
    pub fn selects(&self, id: &str) -> bool {
        self.inequalities.iter().any(|s| s == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    #[serde(default = "default_sde_deltas")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_sde_dim")]
    pub dim: usize,
    #[serde(default = "default_x0")]
    pub x0: Vec<f64>,
    #[serde(default = "default_sde_t")]
    pub t_final: f64,
    #[serde(default = "default_sde_dt")]
    pub dt: f64,
    #[serde(default = "default_paths")]
    pub n_paths: u64,
    #[serde(default = "default_r_hit")]
    pub r_hit: f64,
    #[serde(default)]
    pub r_core: Option<f64>,
    #[serde(default = "default_attracting")]
    pub attracting: bool,
    /// Defaults to the top-level seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_sde_deltas() -> Vec<f64> {
    vec![0.5, 4.0, 36.0, 100.0]
}
fn default_sde_dim() -> usize {
    3
}
fn default_x0() -> Vec<f64> {
    vec![0.2, 0.0, 0.0]
}
fn default_sde_t() -> f64 {
    0.5
}
fn default_sde_dt() -> f64 {
    1e-4
}
fn default_paths() -> u64 {
    20_000
}
fn default_r_hit() -> f64 {
    0.1
}
fn default_attracting() -> bool {
    true
}

impl Default for SdeSection {
    fn default() -> Self {
        SdeSection {
            deltas: default_sde_deltas(),
            dim: default_sde_dim(),
            x0: default_x0(),
            t_final: default_sde_t(),
            dt: default_sde_dt(),
            n_paths: default_paths(),
            r_hit: default_r_hit(),
            r_core: None,
            attracting: default_attracting(),
            seed: None,
        }
    }
}

impl SdeSection {
    pub fn config(&self, delta: f64, seed: u64) -> SdeConfig {
        SdeConfig {
            dim: self.dim,
            delta,
            x0: self.x0.clone(),
            t_final: self.t_final,
            dt: self.dt,
            n_paths: self.n_paths,
            seed: self.seed.unwrap_or(seed),
            r_hit: self.r_hit,
            r_core: self.r_core,
            attracting: self.attracting,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text; relative file paths stay as written.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file, resolving relative field paths
    /// against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let DriftKind::File { path } = &mut config.drift.kind {
            *path = base.join(&*path);
        }
        if let InitialSpec::File { path } = &mut config.initial {
            *path = base.join(&*path);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.dim, self.grid.n)
    }

    /// Delta used by the inequality checks.
    pub fn check_delta(&self) -> f64 {
        self.verifier.delta.unwrap_or(match self.drift.kind {
            DriftKind::Hardy { delta, .. } => delta,
            _ => 4.0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.drift.validate()?;
        validate_schedule(&self.mollification.schedule)
            .map_err(|e| Error::Config(format!("mollification.schedule: {e}")))?;
        if !self.mollification.schedule_alt.is_empty() {
            validate_schedule(&self.mollification.schedule_alt)
                .map_err(|e| Error::Config(format!("mollification.schedule_alt: {e}")))?;
        }
        let lambda = match self.solver.lambda {
            Lambda::Value(v) => v,
            Lambda::Auto(_) => 0.0,
        };
        self.solver
            .resolve(lambda, &self.verifier.p_list)
            .validate()
            .map_err(|e| Error::Config(format!("solver: {e}")))?;
        for id in &self.verifier.inequalities {
            if !INEQUALITY_IDS.contains(&id.as_str()) {
                return Err(Error::Config(format!(
                    "verifier.inequalities: unknown id `{id}` (known: {})",
                    INEQUALITY_IDS.join(", ")
                )));
            }
        }
        let delta = self.check_delta();
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("verifier.delta must be positive, got {delta}")));
        }
        if self.verifier.p_list.iter().any(|p| !(*p >= 1.0 && p.is_finite())) {
            return Err(Error::Config("verifier.p_list entries must be finite and >= 1".into()));
        }
        if self.verifier.selects("lp_contraction") && delta >= 4.0 {
            return Err(Error::Config(format!("lp_contraction needs delta < 4, got {delta}")));
        }
        if self.verifier.selects("exp_energy") {
            if delta > 4.0 {
                return Err(Error::Config(format!("exp_energy needs delta <= 4, got {delta}")));
            }
            if !self.solver.exp_powers.iter().any(|p| *p == 2 || *p == 4) {
                return Err(Error::Config("exp_energy needs solver.exp_powers to contain 2 or 4".into()));
            }
        }
        if self.verifier.selects("cauchy_convergence") && self.mollification.schedule_alt.is_empty() {
            return Err(Error::Config("cauchy_convergence needs mollification.schedule_alt".into()));
        }
        if let Some(c) = self.verifier.c_delta {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("verifier.c_delta must be nonnegative, got {c}")));
            }
        }
        if self.formbound.c_values.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("formbound.c_values must be finite".into()));
        }
        if self.formbound.trials == 0 {
            return Err(Error::Config("formbound.trials must be positive".into()));
        }
        if let Some(sde) = &self.sde {
            if sde.deltas.is_empty() {
                return Err(Error::Config("sde.deltas must not be empty".into()));
            }
            for &d in &sde.deltas {
                sde.config(d, self.seed)
                    .validate()
                    .map_err(|e| Error::Config(format!("sde (delta = {d}): {e}")))?;
            }
        }
        Ok(())
    }
}

/// Commented template with every default spelled out.
pub const TEMPLATE: &str = r#"# critdrift experiment configuration. Every value shown is the default
# unless marked "required".

seed = 42                        # drives trial fields, eigen-iteration noise and SDE streams
output_dir = "critdrift-out"     # overridden by --output

[grid]                           # required
dim = 3                          # 1, 2 or 3
n = 64                           # points per axis, even

[drift]                          # required
kind = "hardy"                   # hardy | constant | trig | file
delta = 4.0                      # hardy: form-bound parameter, > 0
sign = 1.0                       # hardy: +1 or -1
# core_radius = 0.03125          # hardy: singularity cap; defaults to 2 grid spacings
cutoff_radius = 0.4              # smooth cutoff radius, in (0, 1/2)
# kind = "constant"; vector = [1.0, 0.0, 0.0]
# kind = "trig"; components = [[{ amplitude = 1.0, wavevector = [1, 0, 0], phase = 0.0 }], [], []]
# kind = "file"; path = "drift.bin"   # relative to this file

[mollification]
schedule = [1e-2, 2.5e-3, 6.25e-4, 1.5625e-4]   # strictly decreasing
schedule_alt = [2e-2, 5e-3, 1.25e-3, 3.125e-4]  # optional second schedule; [] disables

[solver]                         # required
dt = 2.5e-4                      # required; checked against the advective CFL limit
t_final = 0.1                    # required; must be a multiple of dt
lambda = "auto"                  # "auto" = c/sqrt(delta), or a number
snapshot_stride = 40             # steps between checkpoints
scheme = "if_rk2"                # if_rk2 | if_euler
cfl_safety = 0.5
exp_powers = [2, 4]              # even powers for the exponential-weight diagnostics

[initial]
kind = "trig"                    # trig | bump | file | zero
offset = 0.1
terms = [
  { amplitude = 0.5, wavevector = [1, 0, 0], phase = 0.0 },
  { amplitude = 0.3, wavevector = [0, 1, 1], phase = 0.5 },
]
# kind = "bump"; amplitude = 0.8; width = 0.1

[formbound]
c_values = []                    # [] = {1.1, 1.5, 2, 4} x <|b|^2>
trials = 100                     # random trial fields for the direct check
max_iter = 5000
rel_tol = 1e-10
mean_zero_only = false           # restrict the supremum to mean-zero trial functions

[verifier]
inequalities = ["orlicz_contraction", "cosh_energy", "exp_energy", "gradient_bound", "cauchy_convergence"]
# also available: "lp_contraction" (needs delta < 4)
tier = "singular"                # analytic (1e-6) | singular (5e-2)
p_list = [2.0, 4.0]              # L^p exponents recorded and checked
# delta = 4.0                    # defaults to the hardy parameter, else 4
# c_delta = 6.5                  # defaults to the smallest certified c with delta_hat <= delta

# [sde]                          # optional; used by the `sde` and `all` subcommands
# deltas = [0.5, 4.0, 36.0, 100.0]
# dim = 3
# x0 = [0.2, 0.0, 0.0]
# t_final = 0.5
# dt = 1e-4
# n_paths = 20000
# r_hit = 0.1
# r_core = 0.01                  # defaults to r_hit / 10
# attracting = true
# seed = 42                      # defaults to the top-level seed
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        "[grid]\ndim = 2\nn = 16\n[drift]\nkind = \"constant\"\nvector = [0.0, 0.0]\n[solver]\ndt = 1e-3\nt_final = 1e-2\n"
            .to_string()
    }

    #[test]
    fn template_parses_with_documented_defaults() {
        let c = ExperimentConfig::from_toml(TEMPLATE).unwrap();
        assert_eq!(c.seed, 42);
        assert_eq!(c.mollification.schedule, default_schedule());
        assert_eq!(c.mollification.schedule_alt, interleaved_schedule());
        assert_eq!(c.solver.lambda, Lambda::default());
        assert_eq!(c.initial, InitialSpec::default());
        assert_eq!(c.formbound, FormBoundSection::default());
        assert_eq!(c.verifier, VerifierSection::default());
        assert!(c.sde.is_none());
        assert_eq!(c.check_delta(), 4.0);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_toml(&minimal()).unwrap();
        assert_eq!(c.solver.snapshot_stride, 10);
        assert_eq!(c.verifier.tier, ToleranceTier::Singular);
        let s = c.solver.resolve(0.5, &[2.0]);
        assert_eq!(s.lambda, 0.5);
        let fixed = ExperimentConfig::from_toml(&minimal().replace("t_final = 1e-2", "t_final = 1e-2\nlambda = 0.0")).unwrap();
        assert_eq!(fixed.solver.resolve(0.5, &[2.0]).lambda, 0.0);
    }

    #[test]
    fn rejects_bad_schedules_and_ids() {
        let bad = format!("{}[mollification]\nschedule = [1e-3, 1e-2]\n", minimal());
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(m)) if m.contains("decreasing")));
        let bad = format!("{}[verifier]\ninequalities = [\"nope\"]\n", minimal());
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().to_string().contains("nope"));
        let bad = format!("{}[verifier]\ninequalities = [\"lp_contraction\"]\n", minimal());
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().to_string().contains("delta < 4"));
        let ok = format!("{}[verifier]\ninequalities = [\"lp_contraction\"]\ndelta = 1.0\n", minimal());
        assert!(ExperimentConfig::from_toml(&ok).is_ok());
        let bad = format!("{}[mollification]\nschedule_alt = []\n", minimal());
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().to_string().contains("schedule_alt"));
        let bad = minimal().replace("n = 16", "n = 16\nextra = 1");
        assert!(ExperimentConfig::from_toml(&bad).unwrap_err().to_string().contains("extra"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let msg = ExperimentConfig::from_toml("[grid]\ndim = \"three\"\n").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn initial_fields() {
        let grid = TorusGrid::new(2, 8).unwrap();
        assert!(InitialSpec::Zero.build(grid).unwrap().is_zero());
        let bump = InitialSpec::Bump { amplitude: 0.5, width: 0.1 }.build(grid).unwrap();
        assert_eq!(bump.max_abs(), 0.5);
        assert!(InitialSpec::default().build(grid).is_err());
        let f = InitialSpec::Trig {
            offset: 1.0,
            terms: vec![TrigTerm { amplitude: 2.0, wavevector: vec![1, 0], phase: 0.0 }],
        }
        .build(grid)
        .unwrap();
        assert!((f.values()[6 * 8] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn auto_c_values() {
        let s = FormBoundSection::default();
        assert_eq!(s.resolve_c_values(0.0), vec![0.0]);
        assert_eq!(s.resolve_c_values(2.0), vec![2.2, 3.0, 4.0, 8.0]);
    }

    #[test]
    fn sde_section_validated() {
        let ok = format!("{}[sde]\nn_paths = 10\n", minimal());
        assert!(ExperimentConfig::from_toml(&ok).is_ok());
        let bad = format!("{}[sde]\ndeltas = [100.0]\ndt = 0.05\n", minimal());
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
