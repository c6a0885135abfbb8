//! Pseudo-spectral field arithmetic on the periodic box [0, L)³: transforms,
//! derivatives, Leray projection, 2/3-rule dealiasing, energy diagnostics
//! and the binary snapshot format.
//!
//! Grid values are stored with index `(i * N + j) * N + k`, where i runs
//! along x. Spectra hold Fourier coefficients (forward transform divided by
//! N³). Derivatives use wavenumbers with the Nyquist mode set to zero, the
//! same for gradient, divergence, Laplacian and projection.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::Vector3;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::fields::TrigField;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicGrid {
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(n: usize) -> Result<Self> {
        PeriodicGrid::with_length(n, 1.0)
    }

    pub fn with_length(n: usize, length: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Domain(format!(
                "grid size {n} must be a power of two >= 8"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Domain(format!(
                "box length {length} must be positive"
            )));
        }
        Ok(PeriodicGrid { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of grid points N³.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    /// (i, j, k) of a flat index; N is a power of two.
    #[inline]
    pub fn split(&self, idx: usize) -> (usize, usize, usize) {
        let s = self.n.trailing_zeros();
        let m = self.n - 1;
        (idx >> (2 * s), (idx >> s) & m, idx & m)
    }

    pub fn point(&self, idx: usize) -> Vector3<f64> {
        let h = self.spacing();
        let (i, j, k) = self.split(idx);
        Vector3::new(i as f64 * h, j as f64 * h, k as f64 * h)
    }

    /// Signed integer frequency of array position i.
    #[inline]
    pub fn frequency(&self, i: usize) -> i64 {
        if i < self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    /// Derivative wavenumber 2π/L · frequency, zero at the Nyquist index.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            TAU / self.length * self.frequency(i) as f64
        }
    }

    /// Wavevector of the flat spectral index.
    #[inline]
    pub fn wavevector(&self, idx: usize) -> Vector3<f64> {
        let (i, j, k) = self.split(idx);
        Vector3::new(self.wavenumber(i), self.wavenumber(j), self.wavenumber(k))
    }

    /// 2/3-rule mask: keeps modes with 3|frequency| < N in every direction.
    #[inline]
    pub fn dealias_keep(&self, idx: usize) -> bool {
        let (i, j, k) = self.split(idx);
        [i, j, k]
            .iter()
            .all(|&i| 3 * self.frequency(i).unsigned_abs() < self.n as u64)
    }

    fn volume(&self) -> f64 {
        self.length.powi(3)
    }

    /// Derivative wavenumbers of the array positions 0..N.
    pub(crate) fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i)).collect()
    }

    /// 1D 2/3-rule mask; a mode is kept when all three positions are.
    pub(crate) fn keep_mask(&self) -> Vec<bool> {
        (0..self.n)
            .map(|i| 3 * self.frequency(i).unsigned_abs() < self.n as u64)
            .collect()
    }

    /// (wavevector, dealias keep flag) in flat index order.
    pub fn modes(&self) -> Modes {
        let n = self.n;
        Modes {
            k: self.wavenumbers(),
            keep: self.keep_mask(),
            n,
            ijk: [0; 3],
            left: n * n * n,
        }
    }
}

/// Iterator over the spectral modes of a grid.
pub struct Modes {
    k: Vec<f64>,
    keep: Vec<bool>,
    n: usize,
    ijk: [usize; 3],
    left: usize,
}

impl Iterator for Modes {
    type Item = (Vector3<f64>, bool);

    #[inline(always)]
    fn next(&mut self) -> Option<Self::Item> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        let [i, j, k] = self.ijk;
        let item = (
            Vector3::new(self.k[i], self.k[j], self.k[k]),
            self.keep[i] && self.keep[j] && self.keep[k],
        );
        self.ijk[2] += 1;
        if self.ijk[2] == self.n {
            self.ijk[2] = 0;
            self.ijk[1] += 1;
            if self.ijk[1] == self.n {
                self.ijk[1] = 0;
                self.ijk[0] += 1;
            }
        }
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.left, Some(self.left))
    }
}

impl ExactSizeIterator for Modes {}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: PeriodicGrid,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    pub grid: PeriodicGrid,
    pub comps: [Vec<f64>; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSpectrum {
    pub grid: PeriodicGrid,
    pub coeffs: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VectorSpectrum {
    pub grid: PeriodicGrid,
    pub comps: [Vec<Complex64>; 3],
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plans(n: usize) -> Plans {
    static CACHE: OnceLock<Mutex<HashMap<usize, Plans>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().expect("plan cache poisoned");
    map.entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
        })
        .clone()
}

thread_local! {
    static FFT_BUF: std::cell::RefCell<(Vec<Complex64>, Vec<Complex64>)> =
        const { std::cell::RefCell::new((Vec::new(), Vec::new())) };
}

/// Unnormalized 3D transform in place. Each pass transforms the contiguous
/// axis and then rotates the axes (i, j, k) → (k, i, j).
fn fft3(data: &mut [Complex64], n: usize, inverse: bool) {
    let (fwd, inv) = plans(n);
    let plan = if inverse { inv } else { fwd };
    FFT_BUF.with_borrow_mut(|(buf, scratch)| {
        buf.resize(data.len(), Complex64::new(0.0, 0.0));
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        plan.process_with_scratch(data, scratch);
        transpose(data, buf, n * n, n);
        plan.process_with_scratch(buf, scratch);
        transpose(buf, data, n * n, n);
        plan.process_with_scratch(data, scratch);
        transpose(data, buf, n * n, n);
        data.copy_from_slice(buf);
    });
}

/// Transforms of band-limited data for pointwise products. The grid side
/// is left in the rotated layout (j, k, i), which pointwise work does not
/// notice; this saves a transpose each way.
///
/// `band_to_grid` assumes the spectrum vanishes outside the 2/3-rule band;
/// `grid_to_band` leaves coefficients outside the band unspecified. Lines
/// that cannot matter are skipped.
fn band_to_grid(data: &mut [Complex64], n: usize, keep: &[bool]) {
    let plan = plans(n).1;
    FFT_BUF.with_borrow_mut(|(buf, scratch)| {
        buf.resize(data.len(), Complex64::new(0.0, 0.0));
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        // (i, j, k) → (k, i, j) → (j, k, i).
        transform_lines(&*plan, data, n, scratch, |i, j| keep[i] && keep[j]);
        transpose(data, buf, n * n, n);
        transform_lines(&*plan, buf, n, scratch, |_, i| keep[i]);
        transpose(buf, data, n * n, n);
        transform_lines(&*plan, data, n, scratch, |_, _| true);
    });
}

/// Unnormalized forward counterpart of [`band_to_grid`].
fn grid_to_band(data: &mut [Complex64], n: usize, keep: &[bool]) {
    let plan = plans(n).0;
    FFT_BUF.with_borrow_mut(|(buf, scratch)| {
        buf.resize(data.len(), Complex64::new(0.0, 0.0));
        scratch.resize(plan.get_inplace_scratch_len(), Complex64::new(0.0, 0.0));
        // (j, k, i) → (k, i, j) → (i, j, k).
        transform_lines(&*plan, data, n, scratch, |_, _| true);
        transpose(data, buf, n, n * n);
        transform_lines(&*plan, buf, n, scratch, |_, i| keep[i]);
        transpose(buf, data, n, n * n);
        transform_lines(&*plan, data, n, scratch, |i, j| keep[i] && keep[j]);
    });
}

/// Transforms the contiguous lines (a, b) of an n × n × n array for which
/// need(a, b) holds, in runs.
fn transform_lines(
    plan: &dyn Fft<f64>,
    data: &mut [Complex64],
    n: usize,
    scratch: &mut [Complex64],
    need: impl Fn(usize, usize) -> bool,
) {
    let mut start = None;
    for line in 0..=n * n {
        let on = line < n * n && need(line / n, line % n);
        match (on, start) {
            (true, None) => start = Some(line),
            (false, Some(s)) => {
                plan.process_with_scratch(&mut data[s * n..line * n], scratch);
                start = None;
            }
            _ => {}
        }
    }
}

/// dst[c · rows + r] = src[r · cols + c], in 8 × 8 tiles; both sides are
/// multiples of 8.
fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const T: usize = 8;
    let zero = Complex64::new(0.0, 0.0);
    let (mut tile, mut flip) = ([[zero; T]; T], [[zero; T]; T]);
    for r0 in (0..rows).step_by(T) {
        for c0 in (0..cols).step_by(T) {
            for (dr, t) in tile.iter_mut().enumerate() {
                t.copy_from_slice(&src[(r0 + dr) * cols + c0..][..T]);
            }
            for (dc, f) in flip.iter_mut().enumerate() {
                for (dr, v) in f.iter_mut().enumerate() {
                    *v = tile[dr][dc];
                }
            }
            for (dc, f) in flip.iter().enumerate() {
                dst[(c0 + dc) * rows + r0..][..T].copy_from_slice(f);
            }
        }
    }
}

/// Index of the mode −k.
fn conj_index(grid: &PeriodicGrid, idx: usize) -> usize {
    let n = grid.n;
    let neg = |i: usize| (n - i) & (n - 1);
    let (i, j, k) = grid.split(idx);
    grid.index(neg(i), neg(j), neg(k))
}

/// Spectra of two real fields from a single complex transform.
fn forward_pair(
    grid: &PeriodicGrid,
    a: &[f64],
    b: Option<&[f64]>,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut z: Vec<Complex64> = match b {
        Some(b) => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect(),
        None => a.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
    };
    fft3(&mut z, grid.n, false);
    if b.is_none() {
        // Symmetrized so the spectrum of real data is exactly Hermitian.
        let scale = 0.5 / grid.len() as f64;
        let fa = (0..z.len())
            .map(|idx| (z[idx] + z[conj_index(grid, idx)].conj()) * scale)
            .collect();
        return (fa, Vec::new());
    }
    unpack_pair(grid, &z)
}

/// Splits the transform of a + ib into the spectra of a and b.
fn unpack_pair(grid: &PeriodicGrid, z: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let scale = 1.0 / grid.len() as f64;
    let mut fa = Vec::with_capacity(z.len());
    let mut fb = Vec::with_capacity(z.len());
    for (idx, &zi) in z.iter().enumerate() {
        let zc = z[conj_index(grid, idx)].conj();
        fa.push((zi + zc) * (0.5 * scale));
        fb.push((zi - zc) * Complex64::new(0.0, -0.5 * scale));
    }
    (fa, fb)
}

/// Real fields of two Hermitian spectra from a single complex transform.
fn inverse_pair(
    grid: &PeriodicGrid,
    a: &[Complex64],
    b: Option<&[Complex64]>,
) -> (Vec<f64>, Vec<f64>) {
    let i = Complex64::new(0.0, 1.0);
    let mut z: Vec<Complex64> = match b {
        Some(b) => a.iter().zip(b).map(|(&x, &y)| x + i * y).collect(),
        None => a.to_vec(),
    };
    fft3(&mut z, grid.n, true);
    let re = z.iter().map(|c| c.re).collect();
    let im = if b.is_some() {
        z.iter().map(|c| c.im).collect()
    } else {
        Vec::new()
    };
    (re, im)
}

impl ScalarField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&Vector3<f64>) -> f64) -> Self {
        ScalarField {
            grid,
            values: (0..grid.len()).map(|i| f(&grid.point(i))).collect(),
        }
    }

    pub fn spectrum(&self) -> ScalarSpectrum {
        ScalarSpectrum {
            grid: self.grid,
            coeffs: forward_pair(&self.grid, &self.values, None).0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.grid.len() as f64
    }

    /// L² norm over the box by grid quadrature.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.volume()
            / self.grid.len() as f64)
            .sqrt()
    }
}

impl ScalarSpectrum {
    pub fn to_field(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: inverse_pair(&self.grid, &self.coeffs, None).0,
        }
    }
}

impl VectorField {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        VectorField {
            grid,
            comps: std::array::from_fn(|_| vec![0.0; grid.len()]),
        }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        let mut out = VectorField::zeros(grid);
        for idx in 0..grid.len() {
            let v = f(&grid.point(idx));
            for c in 0..3 {
                out.comps[c][idx] = v[c];
            }
        }
        out
    }

    /// Samples a trigonometric field given on the unit torus, rescaled to the
    /// box side.
    pub fn from_trig(grid: PeriodicGrid, field: &TrigField) -> Self {
        let l = grid.length();
        VectorField::from_fn(grid, |x| field.eval(&(x / l)))
    }

    pub fn at(&self, idx: usize) -> Vector3<f64> {
        Vector3::new(self.comps[0][idx], self.comps[1][idx], self.comps[2][idx])
    }

    pub fn spectrum(&self) -> VectorSpectrum {
        let (a, b) = forward_pair(&self.grid, &self.comps[0], Some(&self.comps[1]));
        let (c, _) = forward_pair(&self.grid, &self.comps[2], None);
        VectorSpectrum {
            grid: self.grid,
            comps: [a, b, c],
        }
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.grid.len())
            .map(|i| self.at(i).norm())
            .fold(0.0, f64::max)
    }

    /// L² inner product by grid quadrature.
    pub fn inner(&self, other: &VectorField) -> f64 {
        let w = self.grid.volume() / self.grid.len() as f64;
        (0..3)
            .map(|c| {
                self.comps[c]
                    .iter()
                    .zip(&other.comps[c])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum::<f64>()
            * w
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// self + s · other.
    pub fn axpy(&self, s: f64, other: &VectorField) -> VectorField {
        let mut out = self.clone();
        for c in 0..3 {
            for (o, v) in out.comps[c].iter_mut().zip(&other.comps[c]) {
                *o += s * v;
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        let mut out = self.clone();
        out.comps
            .iter_mut()
            .for_each(|c| c.iter_mut().for_each(|v| *v *= s));
        out
    }
}

impl VectorSpectrum {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        VectorSpectrum {
            grid,
            comps: std::array::from_fn(|_| vec![Complex64::new(0.0, 0.0); grid.len()]),
        }
    }

    pub fn to_field(&self) -> VectorField {
        let (a, b) = inverse_pair(&self.grid, &self.comps[0], Some(&self.comps[1]));
        let (c, _) = inverse_pair(&self.grid, &self.comps[2], None);
        VectorField {
            grid: self.grid,
            comps: [a, b, c],
        }
    }

    pub fn at(&self, idx: usize) -> [Complex64; 3] {
        [self.comps[0][idx], self.comps[1][idx], self.comps[2][idx]]
    }

    pub fn set(&mut self, idx: usize, v: [Complex64; 3]) {
        for c in 0..3 {
            self.comps[c][idx] = v[c];
        }
    }

    /// self + s · other.
    pub fn axpy(&self, s: f64, other: &VectorSpectrum) -> VectorSpectrum {
        let mut out = self.clone();
        for c in 0..3 {
            for (o, v) in out.comps[c].iter_mut().zip(&other.comps[c]) {
                *o += v * s;
            }
        }
        out
    }

    /// Leray projection in place.
    pub fn project(&mut self) {
        let modes = self.grid.modes();
        let [a, b, c] = &mut self.comps;
        for (((x, y), z), (k, _)) in a.iter_mut().zip(b.iter_mut()).zip(c.iter_mut()).zip(modes) {
            let k2 = k.norm_squared();
            if k2 == 0.0 {
                continue;
            }
            let kv = (*x * k[0] + *y * k[1] + *z * k[2]) / k2;
            *x -= kv * k[0];
            *y -= kv * k[1];
            *z -= kv * k[2];
        }
    }

    pub fn dealias(&mut self) {
        let modes = self.grid.modes();
        let zero = Complex64::new(0.0, 0.0);
        let [a, b, c] = &mut self.comps;
        for (((x, y), z), (_, keep)) in a.iter_mut().zip(b.iter_mut()).zip(c.iter_mut()).zip(modes)
        {
            if !keep {
                (*x, *y, *z) = (zero, zero, zero);
            }
        }
    }

    /// ½‖u‖² by Parseval.
    pub fn energy(&self) -> f64 {
        0.5 * self.grid.volume()
            * self
                .comps
                .iter()
                .flatten()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
    }

    /// ‖∇u‖² by Parseval.
    pub fn grad_norm_sq(&self) -> f64 {
        let [a, b, c] = &self.comps;
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(c)
            .zip(self.grid.modes())
            .map(|(((x, y), z), (k, _))| {
                k.norm_squared() * (x.norm_sqr() + y.norm_sqr() + z.norm_sqr())
            })
            .sum();
        s * self.grid.volume()
    }

    /// L² inner product by Parseval.
    pub fn inner(&self, other: &VectorSpectrum) -> f64 {
        let mut s = 0.0;
        for c in 0..3 {
            for (a, b) in self.comps[c].iter().zip(&other.comps[c]) {
                s += (a * b.conj()).re;
            }
        }
        s * self.grid.volume()
    }

    /// ‖div u‖ via the spectral divergence.
    pub fn divergence_norm(&self) -> f64 {
        let [a, b, c] = &self.comps;
        let s: f64 = a
            .iter()
            .zip(b)
            .zip(c)
            .zip(self.grid.modes())
            .map(|(((x, y), z), (k, _))| (x * k[0] + y * k[1] + z * k[2]).norm_sqr())
            .sum();
        (s * self.grid.volume()).sqrt()
    }

    /// Curl ik × û.
    pub fn curl(&self) -> VectorSpectrum {
        let mut out = VectorSpectrum::zeros(self.grid);
        for (idx, (k, _)) in self.grid.modes().enumerate() {
            out.set(idx, curl_mode(&k, self.at(idx)));
        }
        out
    }
}

/// Leray projection P(k) = Id − kkᵀ/|k|²; the mean mode is unchanged.
pub fn leray_project(v: &VectorField) -> VectorField {
    let mut s = v.spectrum();
    s.project();
    s.to_field()
}

pub fn gradient(g: &ScalarField) -> VectorField {
    let s = g.spectrum();
    let mut out = VectorSpectrum::zeros(g.grid);
    let i = Complex64::new(0.0, 1.0);
    for idx in 0..g.grid.len() {
        let k = g.grid.wavevector(idx);
        out.set(idx, std::array::from_fn(|c| i * k[c] * s.coeffs[idx]));
    }
    out.to_field()
}

pub fn divergence(v: &VectorField) -> ScalarField {
    let s = v.spectrum();
    let i = Complex64::new(0.0, 1.0);
    let coeffs = (0..v.grid.len())
        .map(|idx| {
            let k = v.grid.wavevector(idx);
            let u = s.at(idx);
            i * (u[0] * k[0] + u[1] * k[1] + u[2] * k[2])
        })
        .collect();
    ScalarSpectrum {
        grid: v.grid,
        coeffs,
    }
    .to_field()
}

pub fn laplacian_scalar(g: &ScalarField) -> ScalarField {
    let mut s = g.spectrum();
    for (idx, c) in s.coeffs.iter_mut().enumerate() {
        *c *= -g.grid.wavevector(idx).norm_squared();
    }
    s.to_field()
}

pub fn laplacian(v: &VectorField) -> VectorField {
    let mut s = v.spectrum();
    for idx in 0..v.grid.len() {
        let k2 = v.grid.wavevector(idx).norm_squared();
        for c in 0..3 {
            s.comps[c][idx] *= -k2;
        }
    }
    s.to_field()
}

/// Dealiased pseudo-spectral (u·∇)u in convective form.
pub fn advect(u: &VectorField) -> VectorField {
    let grid = u.grid;
    let mut us = u.spectrum();
    us.dealias();
    let uf = us.to_field();
    let i = Complex64::new(0.0, 1.0);
    let mut out = VectorSpectrum::zeros(grid);
    for c in 0..3 {
        // ∂_m u_c for m = 0, 1, 2.
        let mut d = VectorSpectrum::zeros(grid);
        for idx in 0..grid.len() {
            let k = grid.wavevector(idx);
            d.set(idx, std::array::from_fn(|m| i * k[m] * us.comps[c][idx]));
        }
        let df = d.to_field();
        let prod: Vec<f64> = (0..grid.len())
            .map(|idx| (0..3).map(|m| uf.comps[m][idx] * df.comps[m][idx]).sum())
            .collect();
        out.comps[c] = forward_pair(&grid, &prod, None).0;
    }
    out.dealias();
    out.to_field()
}

#[inline]
fn curl_mode(k: &Vector3<f64>, v: [Complex64; 3]) -> [Complex64; 3] {
    let i = Complex64::new(0.0, 1.0);
    [
        i * (v[2] * k[1] - v[1] * k[2]),
        i * (v[0] * k[2] - v[2] * k[0]),
        i * (v[1] * k[0] - v[0] * k[1]),
    ]
}

thread_local! {
    static ADVECTION_BUF: std::cell::RefCell<[Vec<Complex64>; 3]> =
        const { std::cell::RefCell::new([Vec::new(), Vec::new(), Vec::new()]) };
}

/// Dealiased ω × u from a spectrum, as a spectrum (rotational form of the
/// advection term; equal to (u·∇)u up to a gradient), together with
/// max |u| of the dealiased velocity on the grid.
#[cfg(test)]
fn rotational_advection(us: &VectorSpectrum) -> (VectorSpectrum, f64) {
    let mut out = VectorSpectrum::zeros(us.grid);
    let umax = rotational_advection_map(us, &mut out, |_, _, c, _| c);
    (out, umax)
}

/// Computes the dealiased ω × u spectrum and writes
/// `finish(idx, k, (ω × u)^(k), multiplicity)` into `out`; returns max |u|.
/// `us` must be Hermitian and `finish` conjugation-equivariant: each pair
/// ±k with 0 < k₃ < N/2 is evaluated once at k and mirrored, which the
/// multiplicity 2 reports.
/// Five complex transforms: (u₁ + iu₂, u₃ + iω₁, ω₂ + iω₃) back,
/// (c₁ + ic₂, c₃) forward.
pub(crate) fn rotational_advection_map(
    us: &VectorSpectrum,
    out: &mut VectorSpectrum,
    mut finish: impl FnMut(usize, [f64; 3], [Complex64; 3], f64) -> [Complex64; 3],
) -> f64 {
    let grid = us.grid;
    let n = grid.n;
    let kn = grid.wavenumbers();
    let keep = grid.keep_mask();
    let zero = Complex64::new(0.0, 0.0);
    out.grid = grid;
    for o in out.comps.iter_mut() {
        o.resize(grid.len(), zero);
    }
    ADVECTION_BUF.with_borrow_mut(|z| {
        let [z0, z1, z2] = z;
        for b in [&mut *z0, &mut *z1, &mut *z2] {
            b.resize(grid.len(), zero);
        }
        let [u0, u1, u2] = &us.comps;
        for i in 0..n {
            for j in 0..n {
                let r = (i * n + j) * n..(i * n + j + 1) * n;
                let (a, b, c) = (&mut z0[r.clone()], &mut z1[r.clone()], &mut z2[r.clone()]);
                if !(keep[i] && keep[j]) {
                    a.fill(zero);
                    b.fill(zero);
                    c.fill(zero);
                    continue;
                }
                let (v0, v1, v2) = (&u0[r.clone()], &u1[r.clone()], &u2[r]);
                for k in 0..n {
                    if !keep[k] {
                        (a[k], b[k], c[k]) = (zero, zero, zero);
                        continue;
                    }
                    let kv = Vector3::new(kn[i], kn[j], kn[k]);
                    let v = [v0[k], v1[k], v2[k]];
                    let w = curl_mode(&kv, v);
                    a[k] = Complex64::new(v[0].re - v[1].im, v[0].im + v[1].re);
                    b[k] = Complex64::new(v[2].re - w[0].im, v[2].im + w[0].re);
                    c[k] = Complex64::new(w[1].re - w[2].im, w[1].im + w[2].re);
                }
            }
        }
        band_to_grid(z0, n, &keep);
        band_to_grid(z1, n, &keep);
        band_to_grid(z2, n, &keep);
        let mut umax2: f64 = 0.0;
        for ((a, b), c) in z0.iter_mut().zip(z1.iter_mut()).zip(z2.iter()) {
            let (u, w) = ([a.re, a.im, b.re], [b.im, c.re, c.im]);
            umax2 = umax2.max(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
            *a = Complex64::new(w[1] * u[2] - w[2] * u[1], w[2] * u[0] - w[0] * u[2]);
            *b = Complex64::new(w[0] * u[1] - w[1] * u[0], 0.0);
        }
        grid_to_band(z0, n, &keep);
        grid_to_band(z1, n, &keep);
        let scale = 1.0 / grid.len() as f64;
        let neg = |i: usize| (n - i) & (n - 1);
        let [o0, o1, o2] = &mut out.comps;
        // Modes with 0 < k < N/2 are computed once and mirrored to −k.
        for i in 0..n {
            for j in 0..n {
                let base = (i * n + j) * n;
                let cbase = (neg(i) * n + neg(j)) * n;
                let row = keep[i] && keep[j];
                for k in 0..=n / 2 {
                    let idx = base + k;
                    let c = if row && keep[k] {
                        let (zi, zc) = (z0[idx], z0[cbase + neg(k)].conj());
                        [
                            (zi + zc) * (0.5 * scale),
                            (zi - zc) * Complex64::new(0.0, -0.5 * scale),
                            z1[idx] * scale,
                        ]
                    } else {
                        [zero; 3]
                    };
                    let mirrored = k != 0 && k != n / 2;
                    let o = finish(
                        idx,
                        [kn[i], kn[j], kn[k]],
                        c,
                        if mirrored { 2.0 } else { 1.0 },
                    );
                    (o0[idx], o1[idx], o2[idx]) = (o[0], o[1], o[2]);
                    if mirrored {
                        let m = cbase + n - k;
                        (o0[m], o1[m], o2[m]) = (o[0].conj(), o[1].conj(), o[2].conj());
                    }
                }
            }
        }
        umax2.sqrt()
    })
}

/// ½‖u‖² over the box by Parseval.
pub fn energy(u: &VectorField) -> f64 {
    u.spectrum().energy()
}

/// ‖div u‖ / ‖u‖ (0 for the zero field).
pub fn divergence_residual(u: &VectorField) -> f64 {
    let s = u.spectrum();
    let norm = (2.0 * s.energy()).sqrt();
    if norm == 0.0 {
        0.0
    } else {
        s.divergence_norm() / norm
    }
}

const MAGIC: &[u8; 6] = b"PHFLD1";

/// Writes components on an N³ grid in the `PHFLD1` binary format.
pub fn write_snapshot<W: Write>(mut out: W, n: usize, comps: &[&[f64]]) -> Result<()> {
    if comps.len() > u8::MAX as usize || comps.iter().any(|c| c.len() != n * n * n) {
        return Err(Error::Precondition(
            "snapshot components must hold N³ values".into(),
        ));
    }
    out.write_all(MAGIC)?;
    for _ in 0..3 {
        out.write_all(&(n as u32).to_le_bytes())?;
    }
    out.write_all(&[comps.len() as u8])?;
    for c in comps {
        for v in c.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a `PHFLD1` snapshot: grid dimensions and components.
pub fn read_snapshot<R: Read>(mut input: R) -> Result<([usize; 3], Vec<Vec<f64>>)> {
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Precondition("not a PHFLD1 snapshot".into()));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        let mut b = [0u8; 4];
        input.read_exact(&mut b)?;
        *d = u32::from_le_bytes(b) as usize;
    }
    let mut nc = [0u8; 1];
    input.read_exact(&mut nc)?;
    let len = dims[0] * dims[1] * dims[2];
    let mut comps = Vec::with_capacity(nc[0] as usize);
    for _ in 0..nc[0] {
        let mut c = Vec::with_capacity(len);
        let mut b = [0u8; 8];
        for _ in 0..len {
            input.read_exact(&mut b)?;
            c.push(f64::from_le_bytes(b));
        }
        comps.push(c);
    }
    Ok((dims, comps))
}

impl VectorField {
    pub fn write_snapshot<W: Write>(&self, out: W) -> Result<()> {
        write_snapshot(
            out,
            self.grid.n(),
            &[&self.comps[0], &self.comps[1], &self.comps[2]],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(n).unwrap()
    }

    fn shear(g: PeriodicGrid) -> VectorField {
        VectorField::from_fn(g, |x| Vector3::new((TAU * x.y).sin(), 0.0, 0.0))
    }

    #[test]
    fn grid_validation() {
        assert!(PeriodicGrid::new(4).is_err());
        assert!(PeriodicGrid::new(12).is_err());
        let g = grid(8);
        assert_eq!(g.frequency(5), -3);
        assert_eq!(g.wavenumber(4), 0.0);
        assert!(g.dealias_keep(g.index(2, 0, 0)) && !g.dealias_keep(g.index(3, 0, 0)));
    }

    #[test]
    fn round_trip_and_single_mode() {
        let g = grid(16);
        let f = TrigField::random_solenoidal(5, 3, 6);
        let u = VectorField::from_trig(g, &f);
        let back = u.spectrum().to_field();
        for c in 0..3 {
            for (a, b) in u.comps[c].iter().zip(&back.comps[c]) {
                assert!((a - b).abs() < 1e-13);
            }
        }
        let s = shear(g).spectrum();
        let idx = g.index(0, 1, 0);
        assert!((s.comps[0][idx] - Complex64::new(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn energy_of_shear() {
        let u = shear(grid(8));
        assert!((energy(&u) - 0.25).abs() < 1e-15);
        assert!((0.5 * u.l2_norm().powi(2) - energy(&u)).abs() < 1e-15);
        assert_eq!(energy(&VectorField::zeros(grid(8))), 0.0);
    }

    #[test]
    fn projection_properties() {
        let g = grid(16);
        let gfun = ScalarField::from_fn(g, |x| (TAU * x.x).sin() * (2.0 * TAU * x.z).cos());
        let pg = leray_project(&gradient(&gfun));
        assert!(pg.l2_norm() < 1e-13);
        let u = shear(g);
        let pu = leray_project(&u);
        assert!(pu.axpy(-1.0, &u).l2_norm() < 1e-14);
        let v = VectorField::from_fn(g, |x| {
            Vector3::new((TAU * x.x).cos(), x.y.sin(), (TAU * (x.x + x.z)).sin())
        });
        let w = VectorField::from_fn(g, |x| {
            Vector3::new((TAU * x.z).sin(), (TAU * x.x).cos(), 0.3)
        });
        let pv = leray_project(&v);
        assert!(leray_project(&pv).axpy(-1.0, &pv).l2_norm() < 1e-13);
        assert!((pv.inner(&w) - v.inner(&leray_project(&w))).abs() < 1e-13);
        assert!(divergence_residual(&pv) < 1e-13);
    }

    #[test]
    fn derivative_identities() {
        let g = grid(16);
        let s = ScalarField::from_fn(g, |x| (TAU * x.x).sin() * (TAU * 2.0 * x.y).cos() + 0.5);
        let a = divergence(&gradient(&s));
        let b = laplacian_scalar(&s);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!(gradient(&ScalarField::from_fn(g, |_| 3.0)).l2_norm() < 1e-15);
        let l = laplacian(&shear(g));
        let expect = shear(g).scaled(-4.0 * PI * PI);
        assert!(l.axpy(-1.0, &expect).l2_norm() < 1e-11);
    }

    #[test]
    fn advection_cases() {
        let g = grid(16);
        assert!(advect(&shear(g)).l2_norm() < 1e-14);
        let c = VectorField::from_fn(g, |_| Vector3::new(1.0, 2.0, 3.0));
        assert!(advect(&c).l2_norm() < 1e-14);
        let abc = VectorField::from_fn(g, |x| {
            Vector3::new(
                (TAU * x.z).sin() + (TAU * x.y).cos(),
                (TAU * x.x).sin() + (TAU * x.z).cos(),
                (TAU * x.y).sin() + (TAU * x.x).cos(),
            )
        });
        let f = TrigField::random_solenoidal(9, 2, 8);
        let u = VectorField::from_trig(g, &f).axpy(1.0, &abc);
        let pa = leray_project(&advect(&u));
        let norm = u.l2_norm();
        assert!(pa.inner(&u).abs() <= 1e-10 * norm.powi(3));
        let a16 = advect(&u);
        let u32 = VectorField::from_trig(grid(32), &f).axpy(
            1.0,
            &VectorField::from_fn(grid(32), |x| {
                Vector3::new(
                    (TAU * x.z).sin() + (TAU * x.y).cos(),
                    (TAU * x.x).sin() + (TAU * x.z).cos(),
                    (TAU * x.y).sin() + (TAU * x.x).cos(),
                )
            }),
        );
        let a32 = advect(&u32);
        // Compare on the coarse grid points.
        let mut err: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let (ic, ifn) = (g.index(i, j, k), grid(32).index(2 * i, 2 * j, 2 * k));
                    err = err.max((a16.at(ic) - a32.at(ifn)).norm());
                }
            }
        }
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn rotational_form_matches_after_projection() {
        let g = grid(16);
        let u = VectorField::from_trig(g, &TrigField::random_solenoidal(2, 2, 6));
        let (mut rot, umax) = rotational_advection(&u.spectrum());
        rot.project();
        let direct = u.max_abs();
        assert!((umax - direct).abs() < 1e-12 * direct, "{umax} {direct}");
        let conv = leray_project(&advect(&u));
        assert!(rot.to_field().axpy(-1.0, &conv).l2_norm() < 1e-12);
    }

    #[test]
    fn snapshot_round_trip() {
        let u = shear(grid(8));
        let mut buf = Vec::new();
        u.write_snapshot(&mut buf).unwrap();
        assert_eq!(&buf[..6], b"PHFLD1");
        assert_eq!(buf.len(), 6 + 12 + 1 + 3 * 512 * 8);
        let (dims, comps) = read_snapshot(&buf[..]).unwrap();
        assert_eq!(dims, [8, 8, 8]);
        assert_eq!(comps[0], u.comps[0]);
        assert!(read_snapshot(&b"PHFLD2"[..]).is_err());
    }
}
