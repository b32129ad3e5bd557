//! Fourier pseudospectral calculus on the torus.
//!
//! Spectra use the half-complex layout of a real transform along the last
//! axis: the padded spectral shape is `[s0, s1, n/2 + 1]`, with leading axes
//! of length 1 when `d < 3`. Coefficients are normalized so that
//! `f(x_j) = sum_k fhat_k e^{2 pi i k j / n}`, i.e. the forward transform
//! divides by `n^d` and `fhat_0` is the mean of `f`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{ScalarField, TorusGrid, VectorField};

pub type Spectrum = Vec<Complex64>;

const TWO_PI: f64 = 2.0 * PI;

/// Transform plans and wavenumber tables for one grid.
pub struct Spectral {
    grid: TorusGrid,
    phys: [usize; 3],
    shape: [usize; 3],
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Signed wavenumber along each padded axis.
    wavenumber: [Vec<f64>; 3],
    /// `|k|^2` per spectral index.
    ksq: Vec<f64>,
    /// Multiplicity of each spectral index in the half-complex layout.
    weight: Vec<f64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).finish()
    }
}

thread_local! {
    static CACHE: RefCell<HashMap<TorusGrid, Arc<Spectral>>> = RefCell::new(HashMap::new());
}

impl Spectral {
    pub fn new(grid: TorusGrid) -> Self {
        let n = grid.n();
        let d = grid.dim();
        let mut phys = [1usize; 3];
        let mut shape = [1usize; 3];
        for a in (3 - d)..3 {
            phys[a] = n;
            shape[a] = n;
        }
        shape[2] = n / 2 + 1;

        let mut real_planner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();
        let r2c = real_planner.plan_fft_forward(n);
        let c2r = real_planner.plan_fft_inverse(n);
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);

        let full = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|m| {
                    if len == 1 {
                        0.0
                    } else if m <= n / 2 {
                        m as f64
                    } else {
                        m as f64 - n as f64
                    }
                })
                .collect()
        };
        let wavenumber = [
            full(shape[0]),
            full(shape[1]),
            (0..shape[2]).map(|m| m as f64).collect(),
        ];

        let len = shape.iter().product();
        let mut ksq = Vec::with_capacity(len);
        let mut weight = Vec::with_capacity(len);
        for i0 in 0..shape[0] {
            for i1 in 0..shape[1] {
                for i2 in 0..shape[2] {
                    let k0 = wavenumber[0][i0];
                    let k1 = wavenumber[1][i1];
                    let k2 = wavenumber[2][i2];
                    ksq.push(k0 * k0 + k1 * k1 + k2 * k2);
                    weight.push(if i2 == 0 || i2 == n / 2 { 1.0 } else { 2.0 });
                }
            }
        }

        Spectral {
            grid,
            phys,
            shape,
            r2c,
            c2r,
            fwd,
            inv,
            wavenumber,
            ksq,
            weight,
        }
    }

    /// Shared, per-thread instance for `grid`.
    pub fn cached(grid: TorusGrid) -> Arc<Spectral> {
        CACHE.with(|c| {
            c.borrow_mut()
                .entry(grid)
                .or_insert_with(|| Arc::new(Spectral::new(grid)))
                .clone()
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn spectrum_len(&self) -> usize {
        self.ksq.len()
    }

    /// `|k|^2` for every spectral index (integer wavevectors).
    pub fn k_squared(&self) -> &[f64] {
        &self.ksq
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    /// Forward transform of real grid values.
    pub fn forward(&self, values: &[f64]) -> Spectrum {
        assert_eq!(values.len(), self.grid.len());
        let n = self.phys[2];
        let m = self.shape[2];
        let mut out = vec![Complex64::new(0.0, 0.0); self.spectrum_len()];
        let mut line = vec![0.0; n];
        let mut scratch = self.r2c.make_scratch_vec();
        for (src, dst) in values.chunks_exact(n).zip(out.chunks_exact_mut(m)) {
            line.copy_from_slice(src);
            self.r2c
                .process_with_scratch(&mut line, dst, &mut scratch)
                .expect("real forward transform buffers sized by plan");
        }
        for axis in [1, 0] {
            if self.shape[axis] > 1 {
                self.transform_axis(&mut out, axis, &self.fwd);
            }
        }
        let scale = 1.0 / self.grid.len() as f64;
        out.iter_mut().for_each(|c| *c *= scale);
        out
    }

    /// Inverse transform; consumes the spectrum as scratch space.
    pub fn inverse(&self, mut spectrum: Spectrum) -> Vec<f64> {
        assert_eq!(spectrum.len(), self.spectrum_len());
        for axis in [0, 1] {
            if self.shape[axis] > 1 {
                self.transform_axis(&mut spectrum, axis, &self.inv);
            }
        }
        let n = self.phys[2];
        let m = self.shape[2];
        let mut out = vec![0.0; self.grid.len()];
        let mut scratch = self.c2r.make_scratch_vec();
        for (src, dst) in spectrum.chunks_exact_mut(m).zip(out.chunks_exact_mut(n)) {
            src[0].im = 0.0;
            src[m - 1].im = 0.0;
            self.c2r
                .process_with_scratch(src, dst, &mut scratch)
                .expect("real inverse transform buffers sized by plan");
        }
        out
    }

    fn transform_axis(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let len = self.shape[axis];
        let stride: usize = self.shape[axis + 1..].iter().product();
        let block = len * stride;
        let zero = Complex64::new(0.0, 0.0);
        let mut buf = vec![zero; block];
        let mut scratch = vec![zero; fft.get_inplace_scratch_len()];
        for chunk in data.chunks_exact_mut(block) {
            for i in 0..len {
                let row = &chunk[i * stride..(i + 1) * stride];
                for (s, v) in row.iter().enumerate() {
                    buf[s * len + i] = *v;
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for i in 0..len {
                let row = &mut chunk[i * stride..(i + 1) * stride];
                for (s, v) in row.iter_mut().enumerate() {
                    *v = buf[s * len + i];
                }
            }
        }
    }

    fn padded_axis(&self, component: usize) -> usize {
        component + 3 - self.grid.dim()
    }

    /// Visits every spectral index with its signed wavevector (padded axes).
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, [f64; 3])) {
        let mut flat = 0;
        for i0 in 0..self.shape[0] {
            for i1 in 0..self.shape[1] {
                for i2 in 0..self.shape[2] {
                    f(
                        flat,
                        [
                            self.wavenumber[0][i0],
                            self.wavenumber[1][i1],
                            self.wavenumber[2][i2],
                        ],
                    );
                    flat += 1;
                }
            }
        }
    }

    /// Spectrum of the derivative along `component`, Nyquist mode zeroed.
    pub fn derivative_spectrum(&self, fhat: &[Complex64], component: usize) -> Spectrum {
        let axis = self.padded_axis(component);
        let nyquist = (self.grid.n() / 2) as f64;
        let mut out = vec![Complex64::new(0.0, 0.0); fhat.len()];
        self.for_each_mode(|j, k| {
            let ka = k[axis];
            if ka.abs() != nyquist {
                out[j] = fhat[j] * Complex64::new(0.0, TWO_PI * ka);
            }
        });
        out
    }

    /// Multiplies each coefficient by `symbol(|k|^2)`.
    pub fn apply_radial(&self, fhat: &mut [Complex64], symbol: impl Fn(f64) -> f64) {
        for (c, k2) in fhat.iter_mut().zip(&self.ksq) {
            *c *= symbol(*k2);
        }
    }

    /// `<f g>` from two spectra (Parseval).
    pub fn inner(&self, a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.weight)
            .map(|((x, y), w)| w * (x.re * y.re + x.im * y.im))
            .sum()
    }

    /// `<|grad f|^2>` with the Laplacian symbol `4 pi^2 |k|^2` on every mode.
    pub fn dirichlet_from_spectrum(&self, fhat: &[Complex64]) -> f64 {
        fhat.iter()
            .zip(&self.ksq)
            .zip(&self.weight)
            .map(|((c, k2), w)| w * 4.0 * PI * PI * k2 * c.norm_sqr())
            .sum()
    }

    pub fn gradient(&self, f: &ScalarField) -> Result<VectorField> {
        self.grid.ensure_same(f.grid())?;
        f.check_finite("gradient input")?;
        let fhat = self.forward(f.values());
        let components = (0..self.grid.dim())
            .map(|a| {
                ScalarField::from_raw(self.grid, self.inverse(self.derivative_spectrum(&fhat, a)))
            })
            .collect();
        VectorField::new(components)
    }

    pub fn divergence(&self, v: &VectorField) -> Result<ScalarField> {
        self.grid.ensure_same(v.grid())?;
        let mut acc = vec![Complex64::new(0.0, 0.0); self.spectrum_len()];
        for (a, c) in v.components().iter().enumerate() {
            c.check_finite("divergence input")?;
            let d = self.derivative_spectrum(&self.forward(c.values()), a);
            acc.iter_mut().zip(d).for_each(|(x, y)| *x += y);
        }
        Ok(ScalarField::from_raw(self.grid, self.inverse(acc)))
    }

    pub fn laplacian(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.ensure_same(f.grid())?;
        f.check_finite("laplacian input")?;
        let mut fhat = self.forward(f.values());
        self.apply_radial(&mut fhat, |k2| -4.0 * PI * PI * k2);
        Ok(ScalarField::from_raw(self.grid, self.inverse(fhat)))
    }

    /// `e^{eps Delta} f`.
    pub fn heat(&self, f: &ScalarField, eps: f64) -> Result<ScalarField> {
        self.grid.ensure_same(f.grid())?;
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::arg("eps", format!("must be finite and >= 0, got {eps}")));
        }
        f.check_finite("heat semigroup input")?;
        if eps == 0.0 {
            return Ok(f.clone());
        }
        let mut fhat = self.forward(f.values());
        self.apply_radial(&mut fhat, |k2| (-4.0 * PI * PI * k2 * eps).exp());
        Ok(ScalarField::from_raw(self.grid, self.inverse(fhat)))
    }

    pub fn dirichlet_energy(&self, f: &ScalarField) -> Result<f64> {
        self.grid.ensure_same(f.grid())?;
        f.check_finite("dirichlet input")?;
        Ok(self.dirichlet_from_spectrum(&self.forward(f.values())))
    }
}

/// Running Neumaier sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Compensated {
    sum: f64,
    comp: f64,
}

impl Compensated {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated (Neumaier) sum.
pub fn stable_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Compensated::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Grid mean with unit total volume.
pub(crate) fn mean_of(grid: &TorusGrid, values: impl IntoIterator<Item = f64>) -> f64 {
    stable_sum(values) * grid.cell_volume()
}

/// `<f> = h^d sum_j f(x_j)`.
pub fn integrate(f: &ScalarField) -> Result<f64> {
    f.check_finite("integrand")?;
    Ok(mean_of(f.grid(), f.values().iter().copied()))
}

pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    Spectral::cached(*f.grid()).gradient(f)
}

pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    Spectral::cached(*v.grid()).divergence(v)
}

pub fn laplacian(f: &ScalarField) -> Result<ScalarField> {
    Spectral::cached(*f.grid()).laplacian(f)
}

pub fn heat_semigroup(f: &ScalarField, eps: f64) -> Result<ScalarField> {
    Spectral::cached(*f.grid()).heat(f, eps)
}

/// `<|grad f|^2>`, consistent with `-<f, laplacian f>`.
pub fn dirichlet_energy(f: &ScalarField) -> Result<f64> {
    Spectral::cached(*f.grid()).dirichlet_energy(f)
}

/// `(<|f|^p>)^{1/p}`; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::arg("p", format!("L^p exponent must be >= 1, got {p}")));
    }
    f.check_finite("L^p input")?;
    let max = f.max_abs();
    if p.is_infinite() || max == 0.0 {
        return Ok(max);
    }
    let inv = 1.0 / max;
    let mean = if p.fract() == 0.0 && p <= 64.0 {
        let k = p as i32;
        mean_of(f.grid(), f.values().iter().map(|v| (v.abs() * inv).powi(k)))
    } else {
        mean_of(f.grid(), f.values().iter().map(|v| (v.abs() * inv).powf(p)))
    };
    Ok(max * mean.powf(1.0 / p))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sin1(grid: TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |x| (TWO_PI * x[0]).sin()).unwrap()
    }

    /// Random trigonometric polynomial with per-axis degree <= kmax.
    pub(crate) fn band_limited(grid: TorusGrid, kmax: i64, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms: Vec<([f64; 3], f64, f64)> = (0..12)
            .map(|_| {
                let mut k = [0.0; 3];
                for a in 0..grid.dim() {
                    k[a] = rng.random_range(-kmax..=kmax) as f64;
                }
                (k, rng.random_range(-1.0..1.0), rng.random_range(0.0..TWO_PI))
            })
            .collect();
        ScalarField::from_fn(grid, |x| {
            terms
                .iter()
                .map(|(k, a, ph)| a * (TWO_PI * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]) + ph).cos())
                .sum()
        })
        .unwrap()
    }

    #[test]
    fn integrate_examples() {
        for (d, n) in [(1, 16), (2, 16), (3, 8)] {
            let g = TorusGrid::new(d, n).unwrap();
            assert_relative_eq!(integrate(&ScalarField::constant(g, 1.0)).unwrap(), 1.0, epsilon = 1e-15);
            assert!(integrate(&sin1(g)).unwrap().abs() < 1e-15);
        }
        let g = TorusGrid::new(1, 16).unwrap();
        let f = ScalarField::from_fn(g, |x| (TWO_PI * x[0]).cos().powi(2)).unwrap();
        assert_relative_eq!(integrate(&f).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn round_trip_is_identity() {
        for (d, n) in [(1, 16), (2, 16), (3, 8)] {
            let g = TorusGrid::new(d, n).unwrap();
            let f = band_limited(g, n as i64 / 2 - 1, 3);
            let s = Spectral::new(g);
            let back = s.inverse(s.forward(f.values()));
            for (a, b) in back.iter().zip(f.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_of_sine() {
        for (d, n) in [(1, 32), (2, 16), (3, 16)] {
            let g = TorusGrid::new(d, n).unwrap();
            let grad = gradient(&sin1(g)).unwrap();
            for j in 0..g.len() {
                let x = g.point(j);
                let expect = TWO_PI * (TWO_PI * x[0]).cos();
                assert!((grad.component(0).values()[j] - expect).abs() < 1e-11);
                for a in 1..d {
                    assert!(grad.component(a).values()[j].abs() < 1e-11);
                }
            }
        }
    }

    #[test]
    fn gradient_and_laplacian_annihilate_constants() {
        let g = TorusGrid::new(2, 16).unwrap();
        let c = ScalarField::constant(g, 3.7);
        let grad = gradient(&c).unwrap();
        assert!(grad.components().iter().all(|v| v.max_abs() < 1e-14));
        assert!(laplacian(&c).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn spectral_gradient_agrees_with_centered_difference_to_second_order() {
        // Stencil oracle: (f(x+h) - f(x-h)) / 2h has error h^2 f'''/6.
        let mut errors = Vec::new();
        for n in [32, 64, 128] {
            let g = TorusGrid::new(1, n).unwrap();
            let h = g.spacing();
            let f = ScalarField::from_fn(g, |x| (TWO_PI * x[0]).sin().exp()).unwrap();
            let grad = gradient(&f).unwrap();
            let v = f.values();
            let err = (0..n)
                .map(|j| {
                    let fd = (v[(j + 1) % n] - v[(j + n - 1) % n]) / (2.0 * h);
                    (grad.component(0).values()[j] - fd).abs()
                })
                .fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn laplacian_eigenfunction_and_composition() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = sin1(g);
        let lap = laplacian(&f).unwrap();
        for (a, b) in lap.values().iter().zip(f.values()) {
            assert!((a + 4.0 * PI * PI * b).abs() < 1e-10);
        }
        for (d, n) in [(1, 32), (2, 16), (3, 16)] {
            let g = TorusGrid::new(d, n).unwrap();
            let f = band_limited(g, n as i64 / 2 - 1, 11);
            let lap = laplacian(&f).unwrap();
            let dg = divergence(&gradient(&f).unwrap()).unwrap();
            let scale = lap.max_abs();
            for (a, b) in lap.values().iter().zip(dg.values()) {
                assert!((a - b).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn heat_semigroup_examples() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = sin1(g);
        let e = heat_semigroup(&f, 0.01).unwrap();
        let factor = (-4.0 * PI * PI * 0.01f64).exp();
        for (a, b) in e.values().iter().zip(f.values()) {
            assert!((a - factor * b).abs() < 1e-13);
        }
        assert_eq!(heat_semigroup(&f, 0.0).unwrap(), f);
        assert!(heat_semigroup(&f, -1e-3).is_err());

        let r = band_limited(g, 10, 5);
        let twice = heat_semigroup(&heat_semigroup(&r, 1e-3).unwrap(), 2e-3).unwrap();
        let once = heat_semigroup(&r, 3e-3).unwrap();
        for (a, b) in twice.values().iter().zip(once.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn heat_semigroup_preserves_mean_and_contracts() {
        let g = TorusGrid::new(2, 32).unwrap();
        let f = band_limited(g, 6, 21).map(|v| v + 0.3).unwrap();
        let m0 = integrate(&f).unwrap();
        for eps in [1e-4, 1e-3, 1e-2, 1e-1] {
            let e = heat_semigroup(&f, eps).unwrap();
            assert_relative_eq!(integrate(&e).unwrap(), m0, max_relative = 1e-12);
            for p in [1.0, 2.0, f64::INFINITY] {
                assert!(lp_norm(&e, p).unwrap() <= lp_norm(&f, p).unwrap() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn parseval_holds() {
        for (d, n) in [(1, 64), (2, 32), (3, 16)] {
            let g = TorusGrid::new(d, n).unwrap();
            let f = band_limited(g, n as i64 / 2 - 1, 8);
            let s = Spectral::new(g);
            let fhat = s.forward(f.values());
            let direct = integrate(&f.map(|v| v * v).unwrap()).unwrap();
            assert_relative_eq!(s.inner(&fhat, &fhat), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn lp_norm_examples() {
        let g = TorusGrid::new(2, 16).unwrap();
        assert_relative_eq!(lp_norm(&ScalarField::constant(g, 2.0), 4.0).unwrap(), 2.0, epsilon = 1e-14);
        let alt = ScalarField::from_fn(g, |x| if ((x[0] + 0.5) * 16.0).round() as i64 % 2 == 0 { 1.0 } else { -1.0 }).unwrap();
        assert_relative_eq!(lp_norm(&alt, 2.0).unwrap(), 1.0, epsilon = 1e-14);
        assert!(lp_norm(&alt, 0.5).is_err());
        assert_eq!(lp_norm(&alt, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn lp_norm_is_nondecreasing_in_p() {
        let g = TorusGrid::new(2, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let f = ScalarField::new(g, (0..g.len()).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
            let norms: Vec<f64> = [1.0, 2.0, 4.0, 8.0, f64::INFINITY].iter().map(|p| lp_norm(&f, *p).unwrap()).collect();
            for w in norms.windows(2) {
                assert!(w[0] <= w[1] * (1.0 + 1e-14));
            }
        }
    }

    #[test]
    fn dirichlet_energy_matches_gradient() {
        let g = TorusGrid::new(3, 16).unwrap();
        let f = band_limited(g, 7, 4);
        let grad = gradient(&f).unwrap();
        let direct = integrate(&grad.magnitude_squared()).unwrap();
        assert_relative_eq!(dirichlet_energy(&f).unwrap(), direct, max_relative = 1e-12);
    }
}
