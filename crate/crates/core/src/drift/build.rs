use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fieldio;
use crate::grid::{ScalarField, TorusGrid, VectorField};

pub const DEFAULT_CUTOFF_RADIUS: f64 = 0.4;

/// One term `amplitude * sin(2 pi k.x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wavevector: Vec<i64>,
    #[serde(default)]
    pub phase: f64,
}

impl TrigTerm {
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let kx: f64 = self
            .wavevector
            .iter()
            .zip(x)
            .map(|(k, xi)| *k as f64 * xi)
            .sum();
        self.amplitude * (2.0 * std::f64::consts::PI * kx + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    /// `sign * sqrt(delta) (d-2)/2 * x / max(|x|, core_radius)^2`, cut off smoothly.
    Hardy {
        delta: f64,
        #[serde(default = "default_sign")]
        sign: f64,
        /// Defaults to two grid spacings.
        #[serde(default)]
        core_radius: Option<f64>,
    },
    Constant { vector: Vec<f64> },
    /// One list of terms per component.
    Trig { components: Vec<Vec<TrigTerm>> },
    File { path: PathBuf },
}

fn default_sign() -> f64 {
    1.0
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(flatten)]
    pub kind: DriftKind,
    /// Radius of the smooth cutoff applied to the Hardy variant.
    #[serde(default = "default_cutoff")]
    pub cutoff_radius: f64,
}

impl DriftSpec {
    pub fn hardy(delta: f64, sign: f64, core_radius: Option<f64>) -> Self {
        DriftSpec {
            kind: DriftKind::Hardy {
                delta,
                sign,
                core_radius,
            },
            cutoff_radius: DEFAULT_CUTOFF_RADIUS,
        }
    }

    pub fn constant(vector: Vec<f64>) -> Self {
        DriftSpec {
            kind: DriftKind::Constant { vector },
            cutoff_radius: DEFAULT_CUTOFF_RADIUS,
        }
    }

    pub fn zero(dim: usize) -> Self {
        DriftSpec::constant(vec![0.0; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff_radius > 0.0 && self.cutoff_radius < 0.5) {
            return Err(Error::arg(
                "cutoff_radius",
                format!("must lie in (0, 1/2), got {}", self.cutoff_radius),
            ));
        }
        if let DriftKind::Hardy {
            delta,
            sign,
            core_radius,
        } = &self.kind
        {
            if !(*delta > 0.0) || !delta.is_finite() {
                return Err(Error::arg("delta", format!("must be > 0, got {delta}")));
            }
            if sign.abs() != 1.0 {
                return Err(Error::arg("sign", format!("must be +1 or -1, got {sign}")));
            }
            if let Some(r) = core_radius {
                if !(*r >= 0.0) {
                    return Err(Error::arg("core_radius", format!("must be >= 0, got {r}")));
                }
            }
        }
        Ok(())
    }
}

/// C-infinity step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    let psi = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = psi(t);
    let b = psi(1.0 - t);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Radial cutoff equal to 1 on `r <= R/2` and 0 on `r >= R`.
pub(crate) fn radial_cutoff(r: f64, radius: f64) -> f64 {
    let half = 0.5 * radius;
    1.0 - smooth_step((r - half) / half)
}

pub fn build_drift(spec: &DriftSpec, grid: TorusGrid) -> Result<VectorField> {
    spec.validate()?;
    let d = grid.dim();
    match &spec.kind {
        DriftKind::Hardy {
            delta,
            sign,
            core_radius,
        } => {
            if d < 2 {
                return Err(Error::arg(
                    "kind",
                    "the Hardy drift needs d >= 2 (its prefactor (d-2)/2 degenerates)",
                ));
            }
            let core = core_radius.unwrap_or(2.0 * grid.spacing());
            let strength = sign * delta.sqrt() * (d as f64 - 2.0) / 2.0;
            let cutoff = spec.cutoff_radius;
            let mut comps = vec![vec![0.0; grid.len()]; d];
            for j in 0..grid.len() {
                let x = grid.point(j);
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if r == 0.0 || r >= cutoff {
                    continue;
                }
                let s = strength * radial_cutoff(r, cutoff) / r.max(core).powi(2);
                for (a, comp) in comps.iter_mut().enumerate() {
                    comp[j] = s * x[a];
                }
            }
            VectorField::new(
                comps
                    .into_iter()
                    .map(|c| ScalarField::new(grid, c))
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        DriftKind::Constant { vector } => {
            if vector.len() != d {
                return Err(Error::arg(
                    "vector",
                    format!("expected {d} components, got {}", vector.len()),
                ));
            }
            VectorField::new(
                vector
                    .iter()
                    .map(|v| {
                        if v.is_finite() {
                            Ok(ScalarField::constant(grid, *v))
                        } else {
                            Err(Error::arg("vector", "non-finite component"))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        DriftKind::Trig { components } => {
            if components.len() != d {
                return Err(Error::arg(
                    "components",
                    format!("expected {d} component lists, got {}", components.len()),
                ));
            }
            for term in components.iter().flatten() {
                if term.wavevector.len() != d {
                    return Err(Error::arg(
                        "wavevector",
                        format!("expected {d} entries, got {}", term.wavevector.len()),
                    ));
                }
            }
            VectorField::new(
                components
                    .iter()
                    .map(|terms| {
                        ScalarField::from_fn(grid, |x| terms.iter().map(|t| t.eval(x)).sum())
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        }
        DriftKind::File { path } => {
            let b = fieldio::read_vector(path)?;
            grid.ensure_same(b.grid())?;
            Ok(b)
        }
    }
}
