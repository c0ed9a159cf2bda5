//! Static magnetic field landscapes: current loops, coil pairs and uniform
//! bias fields, evaluated by Biot–Savart quadrature.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::constants::MU_0;
use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

pub const DEFAULT_SEGMENTS: usize = 720;

/// Minimum distance from the wire, in units of the polygon segment length,
/// at which the quadrature is trusted.
pub const NEAR_WIRE_SEGMENTS: f64 = 10.0;

/// Anything that can report a magnetic field (T) at a point (m).
pub trait FieldSource: Send + Sync {
    fn field_at(&self, point: Vec3) -> Result<Vec3>;
}

impl<F> FieldSource for F
where
    F: Fn(Vec3) -> Result<Vec3> + Send + Sync,
{
    fn field_at(&self, point: Vec3) -> Result<Vec3> {
        self(point)
    }
}

/// A circular current loop of `turns` windings. Positive current circulates
/// right-handed about `axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilLoop {
    pub center: Vec3,
    pub axis: Vec3,
    pub radius: f64,
    pub current: f64,
    pub turns: u32,
    pub segments: usize,
}

impl CoilLoop {
    pub fn new(center: Vec3, axis: Vec3, radius: f64, current: f64, turns: u32) -> Result<Self> {
        let norm = axis.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::invalid("coil axis must be a nonzero finite vector"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("coil radius must be positive, got {radius}")));
        }
        if turns == 0 {
            return Err(Error::invalid("coil needs at least one turn"));
        }
        if !current.is_finite() || !center.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("coil current and center must be finite"));
        }
        Ok(Self {
            center,
            axis: axis / norm,
            radius,
            current,
            turns,
            segments: DEFAULT_SEGMENTS,
        })
    }

    pub fn with_segments(mut self, segments: usize) -> Result<Self> {
        if segments < 8 {
            return Err(Error::invalid("a loop needs at least 8 segments"));
        }
        self.segments = segments;
        Ok(self)
    }

    pub fn segment_length(&self) -> f64 {
        2.0 * PI * self.radius / self.segments as f64
    }

    /// Polygon vertices. The polygon encloses the same area as the circle,
    /// which cancels the leading discretization error of an inscribed one.
    fn vertices(&self) -> Vec<Vec3> {
        let (u, v) = perpendicular_basis(&self.axis);
        let n = self.segments;
        let step = 2.0 * PI / n as f64;
        let rho = self.radius * (step / step.sin()).sqrt();
        (0..n)
            .map(|k| {
                let (s, c) = (step * k as f64).sin_cos();
                self.center + (u * c + v * s) * rho
            })
            .collect()
    }

    fn wire_distance(&self, p: &Vec3) -> f64 {
        let d = p - self.center;
        let h = d.dot(&self.axis);
        let radial = (d - self.axis * h).norm();
        ((radial - self.radius).powi(2) + h * h).sqrt()
    }

    fn check_clearance(&self, p: &Vec3) -> Result<()> {
        let min_distance = NEAR_WIRE_SEGMENTS * self.segment_length();
        let distance = self.wire_distance(p);
        if distance < min_distance {
            return Err(Error::NearSingularity {
                point: [p.x, p.y, p.z],
                distance,
                min_distance,
            });
        }
        Ok(())
    }
}

fn perpendicular_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Exact field of a straight filament from `a` to `b` carrying unit current,
/// without the μ₀/4π prefactor.
fn segment_kernel(a: &Vec3, b: &Vec3, p: &Vec3) -> Vec3 {
    let r1 = p - a;
    let r2 = p - b;
    let n1 = r1.norm();
    let n2 = r2.norm();
    let denom = n1 * n2 * (n1 * n2 + r1.dot(&r2));
    r1.cross(&r2) * ((n1 + n2) / denom)
}

fn polygon_field(vertices: &[Vec3], amp_turns: f64, p: &Vec3) -> Vec3 {
    let n = vertices.len();
    let mut acc = Vec3::zeros();
    for k in 0..n {
        acc += segment_kernel(&vertices[k], &vertices[(k + 1) % n], p);
    }
    acc * (MU_0 / (4.0 * PI) * amp_turns)
}

/// Biot–Savart field of one loop by polygonal quadrature.
pub fn loop_field(coil: &CoilLoop, point: Vec3) -> Result<Vec3> {
    coil.check_clearance(&point)?;
    Ok(polygon_field(
        &coil.vertices(),
        coil.current * f64::from(coil.turns),
        &point,
    ))
}

/// Loops plus a uniform bias field.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilAssembly {
    loops: Vec<CoilLoop>,
    uniform_bias: Vec3,
    vertices: Vec<Vec<Vec3>>,
}

impl CoilAssembly {
    pub fn new(loops: Vec<CoilLoop>, uniform_bias: Vec3) -> Result<Self> {
        if !uniform_bias.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("bias field must be finite"));
        }
        let vertices = loops.iter().map(CoilLoop::vertices).collect();
        Ok(Self {
            loops,
            uniform_bias,
            vertices,
        })
    }

    pub fn uniform(bias: Vec3) -> Result<Self> {
        Self::new(Vec::new(), bias)
    }

    /// Coaxial pair with equal currents (`opposed = false`) or opposed
    /// currents (`opposed = true`, anti-Helmholtz), centered on `center`.
    #[allow(clippy::too_many_arguments)]
    pub fn coil_pair(
        center: Vec3,
        axis: Vec3,
        radius: f64,
        separation: f64,
        turns: u32,
        current: f64,
        opposed: bool,
        segments: usize,
    ) -> Result<Self> {
        let axis_n = axis.normalize();
        let offset = axis_n * (0.5 * separation);
        let second = if opposed { -current } else { current };
        let a = CoilLoop::new(center + offset, axis_n, radius, current, turns)?.with_segments(segments)?;
        let b = CoilLoop::new(center - offset, axis_n, radius, second, turns)?.with_segments(segments)?;
        Self::new(vec![a, b], Vec3::zeros())
    }

    pub fn loops(&self) -> &[CoilLoop] {
        &self.loops
    }

    pub fn uniform_bias(&self) -> Vec3 {
        self.uniform_bias
    }

    pub fn with_bias(&self, bias: Vec3) -> Result<Self> {
        Self::new(self.loops.clone(), bias)
    }

    /// Same geometry with every loop current multiplied by `factor`; the
    /// bias is left untouched.
    pub fn scaled_currents(&self, factor: f64) -> Result<Self> {
        let loops = self
            .loops
            .iter()
            .map(|l| CoilLoop {
                current: l.current * factor,
                ..l.clone()
            })
            .collect();
        Self::new(loops, self.uniform_bias)
    }

    /// Union of two assemblies; biases add.
    pub fn combined(&self, other: &CoilAssembly) -> Result<Self> {
        let mut loops = self.loops.clone();
        loops.extend(other.loops.iter().cloned());
        Self::new(loops, self.uniform_bias + other.uniform_bias)
    }

    /// Field of the loops only.
    pub fn loop_field(&self, point: Vec3) -> Result<Vec3> {
        let mut acc = Vec3::zeros();
        for (coil, verts) in self.loops.iter().zip(&self.vertices) {
            coil.check_clearance(&point)?;
            acc += polygon_field(verts, coil.current * f64::from(coil.turns), &point);
        }
        Ok(acc)
    }
}

impl FieldSource for CoilAssembly {
    fn field_at(&self, point: Vec3) -> Result<Vec3> {
        assembly_field(self, point)
    }
}

/// Superposition of all loop fields plus the uniform bias.
pub fn assembly_field(assembly: &CoilAssembly, point: Vec3) -> Result<Vec3> {
    Ok(assembly.loop_field(point)? + assembly.uniform_bias)
}

/// Central-difference Jacobian, `G[(i, j)] = ∂B_j/∂x_i` (T/m).
pub fn field_gradient(source: &dyn FieldSource, point: Vec3, step: f64) -> Result<Matrix3<f64>> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid(format!("gradient step must be positive, got {step}")));
    }
    let mut g = Matrix3::zeros();
    for i in 0..3 {
        let mut dx = Vec3::zeros();
        dx[i] = step;
        let plus = source.field_at(point + dx)?;
        let minus = source.field_at(point - dx)?;
        let d = (plus - minus) / (2.0 * step);
        for j in 0..3 {
            g[(i, j)] = d[j];
        }
    }
    Ok(g)
}

/// Force `-(μ·∇)B` on a magnetic moment `mu` (J/T).
pub fn magnetic_force(mu: Vec3, source: &dyn FieldSource, point: Vec3, step: f64) -> Result<Vec3> {
    let g = field_gradient(source, point, step)?;
    Ok(-(g.transpose() * mu))
}

/// Displacement after `t` seconds under a constant force, starting at rest.
pub fn drift_displacement(force: Vec3, mass: f64, t: f64) -> Result<Vec3> {
    if t < 0.0 || !(mass > 0.0) {
        return Err(Error::invalid("drift needs t >= 0 and a positive mass"));
    }
    Ok(force / mass * (0.5 * t * t))
}

/// How a coil current is pinned to a quoted field strength at the ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CalibrationConvention {
    /// Density-weighted mean of |B| over the Gaussian ensemble.
    VolumeAverage,
    /// Largest |B| within one ensemble radius of the center.
    Maximum,
}

const CALIBRATION_POINTS: i32 = 12;

/// Field-magnitude statistic of `source` over a Gaussian ensemble of radius
/// `sigma` centered at the origin, sampled on a fixed lattice spanning ±3σ.
pub fn ensemble_field_strength(
    source: &dyn FieldSource,
    sigma: f64,
    convention: CalibrationConvention,
) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("ensemble radius must be positive"));
    }
    let h = 3.0 * sigma / f64::from(CALIBRATION_POINTS);
    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    let mut max = 0.0f64;
    for iz in -CALIBRATION_POINTS..=CALIBRATION_POINTS {
        for iy in -CALIBRATION_POINTS..=CALIBRATION_POINTS {
            for ix in -CALIBRATION_POINTS..=CALIBRATION_POINTS {
                let p = Vec3::new(f64::from(ix), f64::from(iy), f64::from(iz)) * h;
                let r2 = p.norm_squared() / (sigma * sigma);
                let b = source.field_at(p)?.norm();
                match convention {
                    CalibrationConvention::VolumeAverage => {
                        let w = (-r2).exp();
                        weight_sum += w;
                        weighted += w * b;
                    }
                    CalibrationConvention::Maximum => {
                        if r2 <= 1.0 {
                            max = max.max(b);
                        }
                    }
                }
            }
        }
    }
    Ok(match convention {
        CalibrationConvention::VolumeAverage => weighted / weight_sum,
        CalibrationConvention::Maximum => max,
    })
}

/// Rescales the loop currents (bias excluded) so the loop field reaches
/// `target` tesla under `convention`. Returns the calibrated assembly and the
/// applied current factor.
pub fn calibrate_currents(
    assembly: &CoilAssembly,
    sigma: f64,
    target: f64,
    convention: CalibrationConvention,
) -> Result<(CoilAssembly, f64)> {
    let loops_only = CoilAssembly::new(assembly.loops.clone(), Vec3::zeros())?;
    let unit = ensemble_field_strength(&loops_only, sigma, convention)?;
    if !(unit > 0.0) {
        return Err(Error::invalid("assembly produces no field at the ensemble"));
    }
    let factor = target / unit;
    Ok((assembly.scaled_currents(factor)?, factor))
}

/// Field samples on a regular 3D lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldMap {
    pub origin: Vec3,
    pub spacing: Vec3,
    pub dims: [usize; 3],
    /// Index `(iz * ny + iy) * nx + ix`.
    pub values: Vec<Vec3>,
}

impl FieldMap {
    pub fn sample(source: &dyn FieldSource, origin: Vec3, spacing: Vec3, dims: [usize; 3]) -> Result<Self> {
        if spacing.iter().any(|&s| !(s > 0.0)) || dims.contains(&0) {
            return Err(Error::invalid("field map needs positive spacings and dimensions"));
        }
        let [nx, ny, nz] = dims;
        let values = (0..nx * ny * nz)
            .into_par_iter()
            .map(|idx| {
                let ix = idx % nx;
                let iy = (idx / nx) % ny;
                let iz = idx / (nx * ny);
                source.field_at(Self::point_of(origin, spacing, ix, iy, iz))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            origin,
            spacing,
            dims,
            values,
        })
    }

    fn point_of(origin: Vec3, spacing: Vec3, ix: usize, iy: usize, iz: usize) -> Vec3 {
        origin + Vec3::new(ix as f64 * spacing.x, iy as f64 * spacing.y, iz as f64 * spacing.z)
    }

    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        Self::point_of(self.origin, self.spacing, ix, iy, iz)
    }

    pub fn to_csv(&self) -> String {
        let [nx, ny, nz] = self.dims;
        let mut out = String::from("x_m,y_m,z_m,Bx_T,By_T,Bz_T\n");
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = self.point(ix, iy, iz);
                    let b = self.values[(iz * ny + iy) * nx + ix];
                    let _ = writeln!(
                        out,
                        "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                        p.x, p.y, p.z, b.x, b.y, b.z
                    );
                }
            }
        }
        out
    }
}

/// Pickup-coil parameters for estimating the ambient field drift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeCoilSpec {
    pub chi: f64,
    pub turns: u32,
    pub area: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeEstimate {
    /// `(t, dB/dt)` in (s, T/s).
    pub rates: Vec<(f64, f64)>,
    /// Integrated field change over the trace (T).
    pub delta_b: f64,
}

/// `dB/dt ≈ -χ U / (N S)` pointwise, integrated with the trapezoid rule.
pub fn probe_rate_estimate(spec: &ProbeCoilSpec, trace: &[(f64, f64)]) -> Result<ProbeEstimate> {
    if spec.turns == 0 || !(spec.area > 0.0) || !(spec.chi > 0.0) {
        return Err(Error::invalid("probe coil needs chi > 0, N >= 1 and S > 0"));
    }
    if trace.is_empty() {
        return Err(Error::invalid("empty voltage trace"));
    }
    if trace.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::invalid("voltage trace times must be strictly increasing"));
    }
    let k = -spec.chi / (f64::from(spec.turns) * spec.area);
    let rates: Vec<(f64, f64)> = trace.iter().map(|&(t, u)| (t, k * u)).collect();
    let delta_b = rates
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok(ProbeEstimate { rates, delta_b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{GAUSS, MU_B, M_RB85};

    fn z_loop(current: f64) -> CoilLoop {
        CoilLoop::new(Vec3::zeros(), Vec3::z(), 0.1, current, 50).unwrap()
    }

    fn on_axis(n: f64, i: f64, r: f64, z: f64) -> f64 {
        MU_0 * n * i * r * r / (2.0 * (r * r + z * z).powf(1.5))
    }

    #[test]
    fn on_axis_matches_analytic() {
        let l = z_loop(2.0);
        for z in [0.0, 0.03, -0.07, 0.2, 0.5] {
            let b = loop_field(&l, Vec3::new(0.0, 0.0, z)).unwrap();
            let want = on_axis(50.0, 2.0, 0.1, z);
            assert!(((b.z - want) / want).abs() < 1e-6, "z = {z}");
            assert!(b.x.abs() < 1e-12 * want && b.y.abs() < 1e-12 * want);
        }
    }

    #[test]
    fn mirror_symmetry_of_transverse_component() {
        let l = z_loop(1.0);
        let p = Vec3::new(0.02, 0.013, 0.04);
        let q = Vec3::new(-0.02, 0.013, 0.04);
        let bp = loop_field(&l, p).unwrap();
        let bq = loop_field(&l, q).unwrap();
        assert!((bp.x + bq.x).abs() < 1e-12 * bp.norm());
    }

    #[test]
    fn near_wire_is_rejected() {
        let l = z_loop(1.0);
        let err = loop_field(&l, Vec3::new(0.1, 0.0, 0.001)).unwrap_err();
        assert!(matches!(err, Error::NearSingularity { .. }));
    }

    #[test]
    fn quadrature_converges() {
        let coarse = z_loop(1.0);
        let fine = coarse.clone().with_segments(2 * DEFAULT_SEGMENTS).unwrap();
        for p in [
            Vec3::new(0.05, 0.02, 0.01),
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.15, -0.1, 0.05),
            Vec3::new(0.08, 0.03, 0.03),
        ] {
            let a = loop_field(&coarse, p).unwrap();
            let b = loop_field(&fine, p).unwrap();
            assert!((a - b).norm() / b.norm() < 1e-7, "{p:?}");
        }
    }

    #[test]
    fn helmholtz_and_anti_helmholtz_centers() {
        let (r, n, i) = (0.1, 50, 1.5);
        let h = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::z(), r, r, n, i, false, DEFAULT_SEGMENTS).unwrap();
        let b = assembly_field(&h, Vec3::zeros()).unwrap();
        let want = 0.8f64.powf(1.5) * MU_0 * f64::from(n) * i / r;
        assert!(((b.norm() - want) / want).abs() < 1e-4);

        let ah = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::x(), r, 0.15, n, i, true, DEFAULT_SEGMENTS).unwrap();
        let b = assembly_field(&ah, Vec3::zeros()).unwrap();
        let scale = MU_0 * f64::from(n) * i / (2.0 * r);
        assert!(b.norm() < 1e-12 * scale);
    }

    #[test]
    fn uniform_bias_only() {
        let bias = Vec3::new(1e-5, 0.0, 9.7e-5);
        let a = CoilAssembly::uniform(bias).unwrap();
        assert_eq!(assembly_field(&a, Vec3::new(3.0, -2.0, 1.0)).unwrap(), bias);
        let g = field_gradient(&a, Vec3::zeros(), 1e-4).unwrap();
        assert_eq!(g, Matrix3::zeros());
        let f = magnetic_force(Vec3::new(MU_B, 0.0, 0.0), &a, Vec3::zeros(), 1e-4).unwrap();
        assert_eq!(f, Vec3::zeros());
        assert_eq!(drift_displacement(f, M_RB85, 2e-5).unwrap(), Vec3::zeros());
    }

    #[test]
    fn anti_helmholtz_gradient_structure() {
        let (r, sep, n, i) = (0.1, 0.15, 50, 1.0);
        let ah = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::z(), r, sep, n, i, true, DEFAULT_SEGMENTS).unwrap();
        // d/dz of the two on-axis loop fields at the midpoint.
        let z0 = 0.5 * sep;
        let dbz = |z: f64| -3.0 * MU_0 * f64::from(n) * i * r * r * z / (2.0 * (r * r + z * z).powf(2.5));
        let g_axial = dbz(-z0) - dbz(z0);
        let g = field_gradient(&ah, Vec3::zeros(), 1e-4).unwrap();
        assert!(((g[(2, 2)] - g_axial) / g_axial).abs() < 1e-5);
        assert!(((g[(0, 0)] + 0.5 * g_axial) / g_axial).abs() < 1e-5);
        assert!(((g[(1, 1)] + 0.5 * g_axial) / g_axial).abs() < 1e-5);
        assert!(g.trace().abs() < 1e-3 * g_axial.abs());
    }

    #[test]
    fn force_and_drift_orders() {
        // Pair scaled to a 1 G/m axial gradient.
        let ah = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::z(), 0.1, 0.15, 50, 1.0, true, DEFAULT_SEGMENTS).unwrap();
        let g = field_gradient(&ah, Vec3::zeros(), 1e-4).unwrap()[(2, 2)];
        let ah = ah.scaled_currents(GAUSS / g).unwrap();
        let f = magnetic_force(Vec3::new(0.0, 0.0, MU_B), &ah, Vec3::zeros(), 1e-4).unwrap();
        let a = f.norm() / M_RB85;
        assert!((a - 6.58e-3).abs() < 0.05e-3, "a = {a}");
        let d = drift_displacement(f, M_RB85, 20e-6).unwrap().norm();
        assert!((d - 1.32e-12).abs() < 0.02e-12, "d = {d}");
    }

    #[test]
    fn probe_rate() {
        let spec = ProbeCoilSpec { chi: 0.024, turns: 100, area: 1e-3 };
        let flat = probe_rate_estimate(&spec, &[(0.0, 1.0), (1e-6, 1.0), (2e-6, 1.0)]).unwrap();
        for &(_, r) in &flat.rates {
            assert!((r + 0.24).abs() < 1e-15);
        }
        assert!((flat.delta_b + 0.24 * 2e-6).abs() < 1e-18);
        let zero = probe_rate_estimate(&spec, &[(0.0, 0.0), (1.0, 0.0)]).unwrap();
        assert_eq!(zero.delta_b, 0.0);
        assert!(probe_rate_estimate(&spec, &[(1.0, 0.0), (0.5, 0.0)]).is_err());
        let trace = [(0.0, 0.3), (1e-6, -0.2), (3e-6, 0.7)];
        let scaled: Vec<_> = trace.iter().map(|&(t, u)| (t, 3.0 * u)).collect();
        let a = probe_rate_estimate(&spec, &trace).unwrap().delta_b;
        let b = probe_rate_estimate(&spec, &scaled).unwrap().delta_b;
        assert!((b - 3.0 * a).abs() < 1e-15 * a.abs().max(1e-12));
    }

    #[test]
    fn calibration_hits_target() {
        let ah = CoilAssembly::coil_pair(Vec3::zeros(), Vec3::x(), 0.1, 0.15, 50, 1.0, true, DEFAULT_SEGMENTS).unwrap();
        let target = 0.05 * GAUSS;
        let (cal, _) = calibrate_currents(&ah, 1e-3, target, CalibrationConvention::VolumeAverage).unwrap();
        let got = ensemble_field_strength(&cal, 1e-3, CalibrationConvention::VolumeAverage).unwrap();
        assert!((got - target).abs() < 1e-12 * target.max(1.0));
        let (cal, _) = calibrate_currents(&ah, 1e-3, target, CalibrationConvention::Maximum).unwrap();
        let got = ensemble_field_strength(&cal, 1e-3, CalibrationConvention::Maximum).unwrap();
        assert!((got - target).abs() < 1e-9 * target);
    }

    #[test]
    fn field_map_csv_layout() {
        let a = CoilAssembly::uniform(Vec3::new(0.0, 0.0, 1e-4)).unwrap();
        let map = FieldMap::sample(&a, Vec3::new(-1e-3, -1e-3, 0.0), Vec3::new(1e-3, 1e-3, 1e-3), [3, 3, 2]).unwrap();
        let csv = map.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "x_m,y_m,z_m,Bx_T,By_T,Bz_T");
        assert_eq!(lines.len(), 1 + 18);
        assert!(lines[1].starts_with("-1.000000000e-3,-1.000000000e-3,0.000000000e0"));
    }
}
