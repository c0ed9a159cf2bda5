//! Sampled optical fields, pattern loading, the lens Fourier transform and
//! the atomic-motion blur kernel.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::imageio::{self, GrayImage};

/// Which plane of the 4f system a field lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    Object,
    Fourier,
    Image,
}

/// Complex amplitude on an `n × n` grid, row-major, with pixel `(n/2, n/2)`
/// at the optical axis. Row index runs along y, column index along x.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField2D {
    n: usize,
    pitch: f64,
    plane: Plane,
    data: Vec<Complex64>,
}

impl ComplexField2D {
    pub fn new(n: usize, pitch: f64, plane: Plane, data: Vec<Complex64>) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("grid size {n} is not a power of two")));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::invalid(format!("pixel pitch must be positive, got {pitch}")));
        }
        if data.len() != n * n {
            return Err(Error::invalid("field buffer does not match grid size"));
        }
        Ok(Self { n, pitch, plane, data })
    }

    pub fn zeros(n: usize, pitch: f64, plane: Plane) -> Result<Self> {
        Self::new(n, pitch, plane, vec![Complex64::new(0.0, 0.0); n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn plane(&self) -> Plane {
        self.plane
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn with_plane(mut self, plane: Plane) -> Self {
        self.plane = plane;
        self
    }

    /// Physical coordinate of row/column index `i`.
    pub fn coord(&self, i: usize) -> f64 {
        grid_coord(self.n, self.pitch, i)
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm_sqr()).collect()
    }

    /// `Σ |u|² · pitch²`.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.pitch * self.pitch
    }

    /// `u(x, y) → u(-x, -y)` about the optical axis (cyclic at the edge row).
    pub fn point_inverted(&self) -> Self {
        let n = self.n;
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(self.data[((n - r) % n) * n + (n - c) % n]);
            }
        }
        Self { data, ..self.clone() }
    }
}

pub(crate) fn grid_coord(n: usize, pitch: f64, i: usize) -> f64 {
    (i as f64 - (n / 2) as f64) * pitch
}

/// Fourier-plane pitch `λ f / (N · pitch)` produced by a lens of focal
/// length `f` from an `N`-point grid.
pub fn fourier_pitch(n: usize, pitch: f64, lambda: f64, focal_length: f64) -> f64 {
    lambda * focal_length / (n as f64 * pitch)
}

/// Reusable 2D FFT plan for one grid size.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn run(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    /// Unnormalized forward transform, index 0 = zero frequency.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, false);
    }

    /// Unnormalized inverse transform.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    /// Unitary transform of a centered grid into a centered grid.
    pub fn centered_unitary(&self, data: &mut [Complex64]) {
        let n = self.n;
        roll_half(data, n);
        self.forward(data);
        roll_half(data, n);
        let scale = 1.0 / n as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in r + 1..n {
            data.swap(r * n + c, c * n + r);
        }
    }
}

/// Cyclic shift by `n/2` along both axes (its own inverse for even `n`).
fn roll_half(data: &mut [Complex64], n: usize) {
    let h = n / 2;
    for r in 0..h {
        for c in 0..n {
            data.swap(r * n + c, (r + h) * n + (c + h) % n);
        }
    }
}

/// A thin lens of focal length `f` mapping its front focal plane onto its
/// back focal plane (Fraunhofer regime). Energy is preserved exactly.
#[derive(Clone, Debug)]
pub struct FourierLens {
    pub lambda: f64,
    pub focal_length: f64,
    fft: Fft2,
}

impl FourierLens {
    pub fn new(n: usize, lambda: f64, focal_length: f64) -> Result<Self> {
        if !(lambda > 0.0 && focal_length > 0.0) {
            return Err(Error::invalid("wavelength and focal length must be positive"));
        }
        Ok(Self {
            lambda,
            focal_length,
            fft: Fft2::new(n),
        })
    }

    pub fn output_pitch(&self, input_pitch: f64) -> f64 {
        fourier_pitch(self.fft.n, input_pitch, self.lambda, self.focal_length)
    }

    /// `u_out ∝ ∬ u_in exp[-i 2π (x'x + y'y)/(λf)] dx dy`, scaled so that
    /// `Σ|u|²·pitch²` is unchanged. The constant `1/i` phase is dropped.
    pub fn transform(&self, field: &ComplexField2D, output: Plane) -> Result<ComplexField2D> {
        if field.n != self.fft.n {
            return Err(Error::invalid("lens planned for a different grid size"));
        }
        let mut data = field.data.clone();
        self.transform_raw(&mut data, field.pitch);
        ComplexField2D::new(field.n, self.output_pitch(field.pitch), output, data)
    }

    /// In-place variant on a raw buffer sampled at `input_pitch`.
    pub fn transform_raw(&self, data: &mut [Complex64], input_pitch: f64) {
        self.fft.centered_unitary(data);
        let scale = input_pitch / self.output_pitch(input_pitch);
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }
}

/// Object plane → Fourier plane through the first lens.
pub fn fraunhofer(u_o: &ComplexField2D, lambda: f64, f: f64) -> Result<ComplexField2D> {
    if u_o.plane != Plane::Object {
        return Err(Error::invalid("fraunhofer expects an object-plane field"));
    }
    FourierLens::new(u_o.n, lambda, f)?.transform(u_o, Plane::Fourier)
}

/// Fourier plane → image plane through the second lens. Two successive
/// transforms image the object point-inverted.
pub fn retrieve(u_f: &ComplexField2D, lambda: f64, f: f64) -> Result<ComplexField2D> {
    if u_f.plane != Plane::Fourier {
        return Err(Error::invalid("retrieve expects a Fourier-plane field"));
    }
    FourierLens::new(u_f.n, lambda, f)?.transform(u_f, Plane::Image)
}

const SUPERSAMPLE: usize = 8;

/// Built-in binary masks, all inscribed in a square of side `D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuiltinPattern {
    Disk,
    Ring,
    ThreeBar,
    LetterMask,
}

impl BuiltinPattern {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "disk" => Some(Self::Disk),
            "ring" => Some(Self::Ring),
            "three-bar" => Some(Self::ThreeBar),
            "letter-mask" => Some(Self::LetterMask),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Disk => "disk",
            Self::Ring => "ring",
            Self::ThreeBar => "three-bar",
            Self::LetterMask => "letter-mask",
        }
    }

    /// Transmission at normalized coordinates `(u, v) ∈ [-1/2, 1/2]²`
    /// (v grows downward, like image rows).
    fn transmits(self, u: f64, v: f64) -> bool {
        let inside = |lo: f64, hi: f64, x: f64| x >= lo && x < hi;
        let square = inside(-0.5, 0.5, u) && inside(-0.5, 0.5, v);
        match self {
            Self::Disk => u * u + v * v <= 0.25,
            Self::Ring => {
                let r2 = u * u + v * v;
                (0.09..=0.25).contains(&r2)
            }
            Self::ThreeBar => {
                square && (inside(-0.5, -0.3, u) || inside(-0.1, 0.1, u) || inside(0.3, 0.5, u))
            }
            Self::LetterMask => {
                // An "F": stem, top arm, shorter middle arm.
                square
                    && (inside(-0.5, -0.3, u)
                        || (inside(-0.5, -0.3, v) && inside(-0.5, 0.4, u))
                        || (inside(-0.1, 0.1, v) && inside(-0.5, 0.2, u)))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PatternSource {
    Builtin(BuiltinPattern),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternSpec {
    pub source: PatternSource,
    /// Physical extent of the pattern's larger side (m).
    pub physical_diameter: f64,
    pub scale_factor: f64,
}

impl PatternSpec {
    pub fn builtin(pattern: BuiltinPattern, diameter: f64) -> Self {
        Self {
            source: PatternSource::Builtin(pattern),
            physical_diameter: diameter,
            scale_factor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.physical_diameter.is_finite() && self.physical_diameter > 0.0) {
            return Err(Error::invalid("pattern diameter must be positive"));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor <= 4.0) {
            return Err(Error::invalid(format!(
                "scale factor {} outside (0, 4]",
                self.scale_factor
            )));
        }
        Ok(())
    }
}

/// Object-plane amplitude for a pattern: `sqrt(intensity)`, flat phase,
/// centered, peak amplitude 1.
///
/// The pattern must fit inside the central `n/2 × n/2` pixels; the outer
/// quarter on each side is a zero guard band that keeps the cyclic DFT from
/// wrapping the diffraction pattern onto itself.
pub fn load_pattern(spec: &PatternSpec, n: usize, pitch: f64) -> Result<ComplexField2D> {
    spec.validate()?;
    let extent = spec.physical_diameter * spec.scale_factor;
    let usable = (n / 2) as f64 * pitch;
    if extent > usable * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "pattern extent {extent:.4e} m exceeds the {usable:.4e} m window inside the guard band"
        )));
    }
    let mut field = ComplexField2D::zeros(n, pitch, Plane::Object)?;
    match &spec.source {
        PatternSource::Builtin(shape) => {
            // Intensity transmission = fractional pixel coverage on a
            // SUPERSAMPLE² sub-grid, so edges resample smoothly.
            let step = pitch / extent / SUPERSAMPLE as f64;
            let offset = |i: usize| (i as f64 + 0.5) * step - 0.5 * pitch / extent;
            let total = (SUPERSAMPLE * SUPERSAMPLE) as f64;
            for r in 0..n {
                let v0 = grid_coord(n, pitch, r) / extent;
                for c in 0..n {
                    let u0 = grid_coord(n, pitch, c) / extent;
                    let mut hits = 0usize;
                    for i in 0..SUPERSAMPLE {
                        for j in 0..SUPERSAMPLE {
                            hits += usize::from(shape.transmits(u0 + offset(j), v0 + offset(i)));
                        }
                    }
                    if hits > 0 {
                        field.data[r * n + c] = Complex64::new((hits as f64 / total).sqrt(), 0.0);
                    }
                }
            }
        }
        PatternSource::File(path) => {
            let img = imageio::read_image(path)?;
            let peak = img.max();
            if !(peak > 0.0) {
                return Err(Error::invalid(format!("{}: image is all zero", path.display())));
            }
            let px = extent / img.width.max(img.height) as f64;
            for r in 0..n {
                let y = grid_coord(n, pitch, r) / px + 0.5 * img.height as f64 - 0.5;
                for c in 0..n {
                    let x = grid_coord(n, pitch, c) / px + 0.5 * img.width as f64 - 0.5;
                    let i = bilinear_image(&img, x, y) / peak;
                    field.data[r * n + c] = Complex64::new(i.max(0.0).sqrt(), 0.0);
                }
            }
        }
    }
    normalize_peak(&mut field.data);
    Ok(field)
}

fn normalize_peak(data: &mut [Complex64]) {
    let peak = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak > 0.0 {
        for z in data.iter_mut() {
            *z /= peak;
        }
    }
}

/// Bilinear sample at continuous pixel-center coordinates; zero outside,
/// edge pixels clamp within half a pixel of the border.
fn bilinear_image(img: &GrayImage, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width as f64, img.height as f64);
    if x < -0.5 || y < -0.5 || x > w - 0.5 || y > h - 0.5 {
        return 0.0;
    }
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
    let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Magnifies a field about the optical axis by `factor` with bilinear
/// interpolation: `out(x) = in(x / factor)`.
pub fn rescale(field: &ComplexField2D, factor: f64) -> Result<ComplexField2D> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::invalid("rescale factor must be positive"));
    }
    let n = field.n;
    let c0 = (n / 2) as f64;
    let sample = |x: f64, y: f64| -> Complex64 {
        if x < 0.0 || y < 0.0 || x > (n - 1) as f64 || y > (n - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(n - 1), (y0 + 1).min(n - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let g = |r: usize, c: usize| field.data[r * n + c];
        (g(y0, x0) * (1.0 - fx) + g(y0, x1) * fx) * (1.0 - fy)
            + (g(y1, x0) * (1.0 - fx) + g(y1, x1) * fx) * fy
    };
    let mut data = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            data.push(sample(
                (c as f64 - c0) / factor + c0,
                (r as f64 - c0) / factor + c0,
            ));
        }
    }
    ComplexField2D::new(n, field.pitch, field.plane, data)
}

/// How atoms move during storage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MotionModel {
    /// Free flight at the most probable thermal speed `sqrt(2 k_B T / m)`,
    /// or at `velocity_override` when given.
    Ballistic {
        temperature: f64,
        mass: f64,
        velocity_override: Option<f64>,
    },
    /// Diffusion with coefficient `D`: radius `sqrt(4 D t)`.
    Diffusive { coefficient: f64 },
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MotionModel::Ballistic {
                temperature,
                mass,
                velocity_override,
            } => {
                if let Some(v) = velocity_override {
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::invalid("velocity override must be non-negative"));
                    }
                } else if !(temperature > 0.0 && mass > 0.0) {
                    return Err(Error::invalid("ballistic blur needs T > 0 and m > 0"));
                }
            }
            MotionModel::Diffusive { coefficient } => {
                if !(coefficient >= 0.0 && coefficient.is_finite()) {
                    return Err(Error::invalid("diffusion coefficient must be non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn most_probable_speed(temperature: f64, mass: f64) -> f64 {
        (2.0 * crate::constants::K_B * temperature / mass).sqrt()
    }

    /// 1/e radius of the blur kernel after `t` seconds.
    pub fn radius(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("negative storage time {t}")));
        }
        self.validate()?;
        Ok(match *self {
            MotionModel::Ballistic {
                temperature,
                mass,
                velocity_override,
            } => velocity_override.unwrap_or_else(|| Self::most_probable_speed(temperature, mass)) * t,
            MotionModel::Diffusive { coefficient } => (4.0 * coefficient * t).sqrt(),
        })
    }
}

/// Convolves the amplitude with the normalized Gaussian `exp(-r²/w²)`, `w`
/// from the motion model at time `t`.
pub fn motion_blur(u: &ComplexField2D, model: &MotionModel, t: f64) -> Result<ComplexField2D> {
    let w = model.radius(t)?;
    let mut out = u.clone();
    if w > 0.0 {
        blur_in_place(&Fft2::new(u.n), &mut out.data, u.pitch, w);
    }
    Ok(out)
}

/// Gaussian blur of 1/e radius `w` through the analytic transfer function
/// `exp(-π² w² ν²)`, which is ≤ 1 everywhere and 1 at zero frequency.
pub(crate) fn blur_in_place(fft: &Fft2, data: &mut [Complex64], pitch: f64, w: f64) {
    let n = fft.n();
    let freq = |k: usize| {
        let k = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        k / (n as f64 * pitch)
    };
    let transfer: Vec<f64> = (0..n).map(|k| (-(PI * w * freq(k)).powi(2)).exp()).collect();
    fft.forward(data);
    let norm = 1.0 / (n * n) as f64;
    for r in 0..n {
        for c in 0..n {
            data[r * n + c] *= transfer[r] * transfer[c] * norm;
        }
    }
    fft.inverse(data);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{LAMBDA_D1, M_RB85};

    const N: usize = 256;
    const PITCH: f64 = 12.5e-6;
    const F: f64 = 0.5;

    fn disk(scale: f64) -> ComplexField2D {
        let mut spec = PatternSpec::builtin(BuiltinPattern::Disk, 1.6e-3);
        spec.scale_factor = scale;
        load_pattern(&spec, N, PITCH).unwrap()
    }

    fn max_diff(a: &ComplexField2D, b: &ComplexField2D) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn disk_energy_matches_area() {
        let u = disk(1.0);
        let d = 1.6e-3;
        let area = PI * d * d / 4.0;
        let perimeter = PI * d;
        assert!((u.energy() - area).abs() < perimeter * PITCH);
    }

    #[test]
    fn oversized_pattern_is_rejected() {
        let mut spec = PatternSpec::builtin(BuiltinPattern::Disk, 1.6e-3);
        spec.scale_factor = 1.5;
        assert!(load_pattern(&spec, N, PITCH).is_err());
        spec.scale_factor = 0.0;
        assert!(load_pattern(&spec, N, PITCH).is_err());
    }

    #[test]
    fn uniform_16bit_file_gives_unit_amplitude() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flat.pgm");
        imageio::write_pgm16(&path, 8, 8, &[0.4; 64]).unwrap();
        let spec = PatternSpec {
            source: PatternSource::File(path),
            physical_diameter: 1.6e-3,
            scale_factor: 1.0,
        };
        let u = load_pattern(&spec, 64, 50e-6).unwrap();
        // centre pixel and its neighbourhood inside the image footprint
        for r in 20..44 {
            for c in 20..44 {
                assert!((u.get(r, c).re - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(u.get(0, 0).norm(), 0.0);
    }

    #[test]
    fn missing_file_is_io_error() {
        let spec = PatternSpec {
            source: PatternSource::File("/nonexistent/mask.pgm".into()),
            physical_diameter: 1e-3,
            scale_factor: 1.0,
        };
        assert!(matches!(load_pattern(&spec, 64, 50e-6), Err(Error::Io { .. })));
    }

    #[test]
    fn rescale_round_trip_error() {
        // Edge-limited: a 2× bilinear upsample widens every edge by a pixel.
        let orig = disk(1.0);
        let back = rescale(&disk(0.5), 2.0).unwrap();
        let rms = (back
            .data()
            .iter()
            .zip(orig.data())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / (N * N) as f64)
            .sqrt();
        assert!(rms < 0.03, "rms = {rms}");
    }

    #[test]
    fn parseval_and_point_inversion() {
        let mut spec = PatternSpec::builtin(BuiltinPattern::LetterMask, 1.6e-3);
        spec.scale_factor = 0.8;
        let u = load_pattern(&spec, N, PITCH).unwrap();
        let uf = fraunhofer(&u, LAMBDA_D1, F).unwrap();
        assert_eq!(uf.plane(), Plane::Fourier);
        assert!(((uf.energy() - u.energy()) / u.energy()).abs() < 1e-10);
        assert_eq!(uf.pitch(), fourier_pitch(N, PITCH, LAMBDA_D1, F));
        let img = retrieve(&uf, LAMBDA_D1, F).unwrap();
        assert!(((img.energy() - u.energy()) / u.energy()).abs() < 1e-10);
        assert!((img.pitch() - PITCH).abs() < 1e-18);
        assert!(max_diff(&img, &u.point_inverted()) < 1e-10);
        // symmetric pattern is its own image
        let d = disk(1.0);
        let img = retrieve(&fraunhofer(&d, LAMBDA_D1, F).unwrap(), LAMBDA_D1, F).unwrap();
        assert!(max_diff(&img, &d) < 1e-10);
    }

    #[test]
    fn wrong_plane_is_rejected() {
        let u = disk(1.0);
        assert!(retrieve(&u, LAMBDA_D1, F).is_err());
        let uf = fraunhofer(&u, LAMBDA_D1, F).unwrap();
        assert!(fraunhofer(&uf, LAMBDA_D1, F).is_err());
    }

    #[test]
    fn plane_wave_focuses_to_one_pixel() {
        let u = ComplexField2D::new(64, 10e-6, Plane::Object, vec![Complex64::new(1.0, 0.0); 64 * 64]).unwrap();
        let uf = fraunhofer(&u, LAMBDA_D1, F).unwrap();
        let peak = uf.get(32, 32).norm_sqr();
        let rest = uf.intensity().iter().sum::<f64>() - peak;
        assert!(rest < 1e-20 * peak);
    }

    #[test]
    fn gaussian_waist_maps_to_lambda_f_over_pi_w() {
        let w = 0.3e-3;
        let mut u = ComplexField2D::zeros(N, PITCH, Plane::Object).unwrap();
        for r in 0..N {
            for c in 0..N {
                let (x, y) = (u.coord(c), u.coord(r));
                u.data_mut()[r * N + c] = Complex64::new((-(x * x + y * y) / (w * w)).exp(), 0.0);
            }
        }
        let uf = fraunhofer(&u, LAMBDA_D1, F).unwrap();
        // 1/e² intensity waist from the second moment: <r²> = w²/2 for |u|².
        let (mut m2, mut tot) = (0.0, 0.0);
        for r in 0..N {
            for c in 0..N {
                let i = uf.get(r, c).norm_sqr();
                let (x, y) = (uf.coord(c), uf.coord(r));
                m2 += i * (x * x + y * y);
                tot += i;
            }
        }
        let fitted = (2.0 * m2 / tot).sqrt();
        let want = LAMBDA_D1 * F / (PI * w);
        assert!(((fitted - want) / want).abs() < 0.01, "{fitted} vs {want}");
    }

    #[test]
    fn linearity() {
        let a = disk(0.7);
        let mut spec = PatternSpec::builtin(BuiltinPattern::ThreeBar, 1.6e-3);
        spec.scale_factor = 0.9;
        let b = load_pattern(&spec, N, PITCH).unwrap();
        let (ca, cb) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        let mix: Vec<Complex64> = a.data().iter().zip(b.data()).map(|(x, y)| ca * x + cb * y).collect();
        let mix = ComplexField2D::new(N, PITCH, Plane::Object, mix).unwrap();
        let fa = fraunhofer(&a, LAMBDA_D1, F).unwrap();
        let fb = fraunhofer(&b, LAMBDA_D1, F).unwrap();
        let fm = fraunhofer(&mix, LAMBDA_D1, F).unwrap();
        let err = fm
            .data()
            .iter()
            .zip(fa.data().iter().zip(fb.data()))
            .map(|(m, (x, y))| (m - (ca * x + cb * y)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn blur_radius_at_200_microkelvin() {
        let model = MotionModel::Ballistic {
            temperature: 200e-6,
            mass: M_RB85,
            velocity_override: None,
        };
        let v = MotionModel::most_probable_speed(200e-6, M_RB85);
        assert!((v - 0.198).abs() < 0.001, "v = {v}");
        let w = model.radius(20e-6).unwrap();
        assert!((w - 3.96e-6).abs() < 0.02e-6, "w = {w}");
        assert!(model.radius(-1.0).is_err());
        let d = MotionModel::Diffusive { coefficient: 1e-4 };
        assert!((d.radius(1e-3).unwrap() - (4e-7f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn blur_identity_and_kernel_shape() {
        let model = MotionModel::Diffusive { coefficient: 2e-6 };
        let u = disk(0.5);
        assert_eq!(motion_blur(&u, &model, 0.0).unwrap(), u);

        let n = 128;
        let pitch = 1e-6;
        let mut delta = ComplexField2D::zeros(n, pitch, Plane::Fourier).unwrap();
        delta.data_mut()[(n / 2) * n + n / 2] = Complex64::new(1.0, 0.0);
        let t = 2e-6;
        let w = model.radius(t).unwrap();
        let out = motion_blur(&delta, &model, t).unwrap();
        let (mut m2, mut tot) = (0.0, 0.0);
        for r in 0..n {
            for c in 0..n {
                let k = out.get(r, c).re;
                let (x, y) = (out.coord(c), out.coord(r));
                m2 += k * (x * x + y * y);
                tot += k;
            }
        }
        assert!((tot - 1.0).abs() < 1e-12);
        let fitted = (m2 / tot).sqrt();
        assert!(((fitted - w) / w).abs() < 0.02, "{fitted} vs {w}");
        assert!(out.energy() <= delta.energy());
    }

    #[test]
    fn blur_commutes_with_translation() {
        let model = MotionModel::Diffusive { coefficient: 5e-5 };
        let u = disk(0.5);
        let shift = 7;
        let shifted = |f: &ComplexField2D| {
            let n = f.n();
            let mut data = vec![Complex64::new(0.0, 0.0); n * n];
            for r in 0..n {
                for c in 0..n {
                    data[r * n + (c + shift) % n] = f.get(r, c);
                }
            }
            ComplexField2D::new(n, f.pitch(), f.plane(), data).unwrap()
        };
        let a = shifted(&motion_blur(&u, &model, 1e-3).unwrap());
        let b = motion_blur(&shifted(&u), &model, 1e-3).unwrap();
        assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn smaller_pattern_spreads_wider_in_fourier_plane() {
        let radius = |u: &ComplexField2D| {
            let uf = fraunhofer(u, LAMBDA_D1, F).unwrap();
            let (mut m2, mut tot) = (0.0, 0.0);
            for r in 0..N {
                for c in 0..N {
                    let i = uf.get(r, c).norm_sqr();
                    let (x, y) = (uf.coord(c), uf.coord(r));
                    m2 += i * (x * x + y * y);
                    tot += i;
                }
            }
            (m2 / tot).sqrt()
        };
        // Gaussian-apodized disks keep the second moment finite.
        let apodized = |scale: f64| {
            let mut u = disk(scale);
            let w = 0.35e-3 * scale;
            for r in 0..N {
                for c in 0..N {
                    let (x, y) = (grid_coord(N, PITCH, c), grid_coord(N, PITCH, r));
                    u.data_mut()[r * N + c] *= (-(x * x + y * y) / (w * w)).exp();
                }
            }
            u
        };
        let ratio = radius(&apodized(0.5)) / radius(&apodized(1.0));
        assert!((ratio - 2.0).abs() < 0.06, "ratio = {ratio}");
    }
}
