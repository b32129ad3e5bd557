//! Singular drift fields: construction, Morrey-type size estimates, heat
//! mollification, and variational estimates of the form bound.

mod build;
mod formbound;
mod lobpcg;
mod morrey;

pub use build::{build_drift, DriftKind, DriftSpec, TrigTerm, DEFAULT_CUTOFF_RADIUS};
pub use formbound::{
    form_bound_estimate, random_trials, verify_form_bound, FormBoundCertificate,
    FormBoundOptions, FormBoundOutcome, FormBoundRow, FormBoundViolation,
};
pub use morrey::morrey_norm;

use crate::error::{Error, Result};
use crate::grid::VectorField;
use crate::spectral::Spectral;

/// `E_eps b`: the heat semigroup applied to each component.
pub fn mollify_drift(b: &VectorField, eps: f64) -> Result<VectorField> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::arg("eps", format!("must be finite and >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(b.clone());
    }
    let spectral = Spectral::cached(*b.grid());
    let components = b
        .components()
        .iter()
        .map(|c| spectral.heat(c, eps))
        .collect::<Result<Vec<_>>>()?;
    VectorField::new(components)
}

/// `||b_1 - b_2||_2` over the torus.
pub fn l2_distance(a: &VectorField, b: &VectorField) -> Result<f64> {
    let diff = a.sub(b)?;
    crate::spectral::integrate(&diff.magnitude_squared()).map(f64::sqrt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ScalarField, TorusGrid};
    use crate::spectral::{heat_semigroup, integrate};

    #[test]
    fn constant_drift_is_unchanged() {
        let g = TorusGrid::new(2, 16).unwrap();
        let b = VectorField::new(vec![ScalarField::constant(g, 1.5), ScalarField::constant(g, -0.5)]).unwrap();
        for eps in [0.0, 1e-3, 0.1] {
            let m = mollify_drift(&b, eps).unwrap();
            assert!(l2_distance(&m, &b).unwrap() < 1e-13);
        }
        assert!(mollify_drift(&b, -1.0).is_err());
    }

    fn hardy(n: usize) -> VectorField {
        let g = TorusGrid::new(3, n).unwrap();
        let spec = DriftSpec::hardy(4.0, 1.0, None);
        build_drift(&spec, g).unwrap()
    }

    #[test]
    fn mollified_hardy_converges_in_l2() {
        let b = hardy(32);
        let dists: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|e| l2_distance(&mollify_drift(&b, *e).unwrap(), &b).unwrap())
            .collect();
        assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");
    }

    #[test]
    fn mollified_magnitude_is_dominated_on_average() {
        let b = hardy(32);
        let g = *b.grid();
        let trials = random_trials(g, 20, 5);
        for eps in [1e-2, 1e-3] {
            let be = mollify_drift(&b, eps).unwrap();
            let lhs_w = be.magnitude_squared();
            let rhs_w = heat_semigroup(&b.magnitude_squared(), eps).unwrap();
            for phi in &trials {
                let sq = phi.map(|v| v * v).unwrap();
                let lhs = integrate(&lhs_w.zip_with(&sq, |a, b| a * b).unwrap()).unwrap();
                let rhs = integrate(&rhs_w.zip_with(&sq, |a, b| a * b).unwrap()).unwrap();
                assert!(lhs <= rhs * (1.0 + 1e-10), "eps {eps}: {lhs} > {rhs}");
            }
        }
    }
}
