//! Spin-wave dephasing: channel weights, the per-point kernel `K`, the
//! ensemble envelope and z-weighting, and retrieved-image assembly.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::angmom::{r_coefficient, HalfInt, Helicity, HyperfineManifold, Su2, WignerTable};
use crate::error::{Error, Result};
use crate::fields::{CoilAssembly, FieldSource, Vec3};
use crate::optics::{blur_in_place, grid_coord, ComplexField2D, FourierLens, MotionModel, Plane};

pub const DEFAULT_SIGMA: f64 = 1.0e-3;
pub const DEFAULT_N_Z: usize = 21;
/// Samples whose envelope `Γ` falls below this are treated as empty.
pub const ENVELOPE_CUTOFF: f64 = 1e-18;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PzModel {
    /// `P(z) ∝ exp(-2 z² / σ²)`.
    Gaussian,
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ZSum {
    /// `I = |Σ_z P(z) 𝔉[a_z] Δz|²`.
    Coherent,
    /// `I = Σ_z P(z) |𝔉[a_z]|² Δz`.
    Incoherent,
}

impl ZSum {
    pub fn name(self) -> &'static str {
        match self {
            ZSum::Coherent => "coherent",
            ZSum::Incoherent => "incoherent",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "coherent" => Some(ZSum::Coherent),
            "incoherent" => Some(ZSum::Incoherent),
            _ => None,
        }
    }
}

/// Ground-state populations, indexed in descending-m order.
pub fn uniform_populations(fg: HalfInt) -> Vec<f64> {
    let n = fg.multiplicity();
    vec![1.0 / n as f64; n]
}

/// Partial optical pumping: a fraction `efficiency` pumped into `m = 0`,
/// the remainder spread uniformly over all sublevels.
pub fn sp_populations(fg: HalfInt, efficiency: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::invalid(format!("SP efficiency {efficiency} outside [0, 1]")));
    }
    let i0 = fg
        .index_of(HalfInt::from_int(0))
        .ok_or_else(|| Error::invalid(format!("F_g = {fg} has no m = 0 sublevel")))?;
    let n = fg.multiplicity();
    let mut p = vec![(1.0 - efficiency) / n as f64; n];
    p[i0] += efficiency;
    Ok(p)
}

pub fn pure_population(fg: HalfInt, m: HalfInt) -> Result<Vec<f64>> {
    let i = fg
        .index_of(m)
        .ok_or_else(|| Error::invalid(format!("m = {m} is not a sublevel of F = {fg}")))?;
    let mut p = vec![0.0; fg.multiplicity()];
    p[i] = 1.0;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub sigma: f64,
    pub r_a: f64,
    pub n_z: usize,
    /// `p_m` for `m = Fg, Fg-1, …, -Fg`.
    pub populations: Vec<f64>,
    pub fg: HalfInt,
    pub fs: HalfInt,
    pub fe: HalfInt,
    pub g_g: f64,
    pub g_s: f64,
    pub alpha: Helicity,
    pub beta: Helicity,
    pub pz_model: PzModel,
}

impl EnsembleConfig {
    /// Rb-85 D1 lambda scheme: |F=2> and |F=3> ground levels through
    /// |F'=3>, σ+ signal and σ- coupling, unpolarized.
    pub fn rb85() -> Self {
        let fg = HalfInt::from_int(2);
        let fs = HalfInt::from_int(3);
        let g_g = HyperfineManifold::rb85_ground(fg).map(|m| m.g_f).unwrap_or(f64::NAN);
        let g_s = HyperfineManifold::rb85_ground(fs).map(|m| m.g_f).unwrap_or(f64::NAN);
        Self {
            sigma: DEFAULT_SIGMA,
            r_a: 2.0 * DEFAULT_SIGMA,
            n_z: DEFAULT_N_Z,
            populations: uniform_populations(fg),
            fg,
            fs,
            fe: HalfInt::from_int(3),
            g_g,
            g_s,
            alpha: Helicity::Plus,
            beta: Helicity::Minus,
            pz_model: PzModel::Gaussian,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(self.r_a > 0.0 && self.r_a.is_finite()) {
            return Err(Error::invalid("r_a must be positive"));
        }
        if self.n_z < 3 || self.n_z.is_multiple_of(2) {
            return Err(Error::invalid(format!("n_z must be odd and >= 3, got {}", self.n_z)));
        }
        if self.populations.len() != self.fg.multiplicity() {
            return Err(Error::invalid(format!(
                "{} populations given for F_g = {}",
                self.populations.len(),
                self.fg
            )));
        }
        if self.populations.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("populations must be non-negative"));
        }
        let total: f64 = self.populations.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("populations sum to {total}, not 1")));
        }
        if !(self.g_g.is_finite() && self.g_s.is_finite()) {
            return Err(Error::invalid("Landé factors must be finite"));
        }
        Ok(())
    }

    /// Slice centres `z_k` and weights `P(z_k) Δz` (summing to 1).
    pub fn z_slices(&self) -> Vec<(f64, f64)> {
        let dz = self.r_a / (self.n_z - 1) as f64;
        let zs: Vec<f64> = (0..self.n_z).map(|k| -0.5 * self.r_a + k as f64 * dz).collect();
        let raw: Vec<f64> = zs
            .iter()
            .map(|z| match self.pz_model {
                PzModel::Gaussian => (-2.0 * z * z / (self.sigma * self.sigma)).exp(),
                PzModel::Uniform => 1.0,
            })
            .collect();
        let norm: f64 = raw.iter().sum();
        zs.into_iter().zip(raw).map(|(z, p)| (z, p / norm)).collect()
    }

    pub fn delta_z(&self) -> f64 {
        self.r_a / (self.n_z - 1) as f64
    }
}

/// `Γ = exp(-(x² + y² + z²)/σ²)`.
pub fn gamma_envelope(cfg: &EnsembleConfig, x: f64, y: f64, z: f64) -> f64 {
    (-(x * x + y * y + z * z) / (cfg.sigma * cfg.sigma)).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpinWaveChannel {
    pub m_g: HalfInt,
    pub m_s: HalfInt,
    pub r: f64,
    /// `sqrt(p_m) · R_m`.
    pub weight: f64,
}

/// Populated channels with a defined CG ratio.
pub fn channels(cfg: &EnsembleConfig) -> Result<Vec<SpinWaveChannel>> {
    cfg.validate()?;
    let shift = cfg.alpha.as_half_int() - cfg.beta.as_half_int();
    let mut out = Vec::new();
    for (m, &p) in cfg.fg.sublevels().zip(&cfg.populations) {
        if p == 0.0 {
            continue;
        }
        match r_coefficient(cfg.fg, cfg.fs, cfg.fe, m, cfg.alpha, cfg.beta) {
            Ok(r) if r != 0.0 => out.push(SpinWaveChannel {
                m_g: m,
                m_s: m + shift,
                r,
                weight: p.sqrt() * r,
            }),
            Ok(_) | Err(Error::UndefinedWeight(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::NoCoupling);
    }
    Ok(out)
}

/// Field history: each assembly acts for its duration, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSchedule {
    segments: Vec<(CoilAssembly, f64)>,
}

impl FieldSchedule {
    pub fn new(segments: Vec<(CoilAssembly, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("field schedule has no segments"));
        }
        if segments.iter().any(|(_, d)| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("segment durations must be positive and finite"));
        }
        Ok(Self { segments })
    }

    pub fn constant(assembly: CoilAssembly, duration: f64) -> Result<Self> {
        Self::new(vec![(assembly, duration)])
    }

    pub fn segments(&self) -> &[(CoilAssembly, f64)] {
        &self.segments
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|(_, d)| d).sum()
    }
}

/// Fourier-plane sample positions across all z-slices, restricted to the
/// points where the envelope is non-negligible.
#[derive(Clone, Debug)]
pub struct EnsembleGrid {
    n: usize,
    pitch: f64,
    slices: Vec<(f64, f64)>,
    /// `(slice, pixel index, Γ)` for every active sample.
    active: Vec<(usize, usize, f64)>,
}

impl EnsembleGrid {
    pub fn new(cfg: &EnsembleConfig, n: usize, pitch: f64) -> Result<Self> {
        Self::with_cutoff(cfg, n, pitch, ENVELOPE_CUTOFF)
    }

    pub fn with_cutoff(cfg: &EnsembleConfig, n: usize, pitch: f64, cutoff: f64) -> Result<Self> {
        cfg.validate()?;
        if n < 2 || !n.is_power_of_two() || !(pitch > 0.0) {
            return Err(Error::invalid("invalid Fourier-plane grid"));
        }
        let slices = cfg.z_slices();
        let mut active = Vec::new();
        for (k, &(z, _)) in slices.iter().enumerate() {
            for r in 0..n {
                let y = grid_coord(n, pitch, r);
                for c in 0..n {
                    let g = gamma_envelope(cfg, grid_coord(n, pitch, c), y, z);
                    if g >= cutoff {
                        active.push((k, r * n + c, g));
                    }
                }
            }
        }
        Ok(Self { n, pitch, slices, active })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn slices(&self) -> &[(f64, f64)] {
        &self.slices
    }

    pub fn active_len(&self) -> usize {
        self.active.len()
    }

    pub fn position(&self, sample: usize) -> Vec3 {
        let (k, idx, _) = self.active[sample];
        Vec3::new(
            grid_coord(self.n, self.pitch, idx % self.n),
            grid_coord(self.n, self.pitch, idx / self.n),
            self.slices[k].0,
        )
    }

    /// `source` evaluated at every active sample, in sample order.
    pub fn sample_field(&self, source: &dyn FieldSource) -> Result<Vec<[f64; 3]>> {
        (0..self.active.len())
            .into_par_iter()
            .map(|i| {
                let b = source.field_at(self.position(i))?;
                if !(b.x.is_finite() && b.y.is_finite() && b.z.is_finite()) {
                    return Err(Error::invalid("non-finite field sample"));
                }
                Ok([b.x, b.y, b.z])
            })
            .collect()
    }
}

/// Per-sample field values for every schedule segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSchedule {
    segments: Vec<(Vec<[f64; 3]>, f64)>,
}

impl SampledSchedule {
    pub fn sample(grid: &EnsembleGrid, schedule: &FieldSchedule) -> Result<Self> {
        let segments = schedule
            .segments
            .iter()
            .map(|(assembly, d)| Ok((grid.sample_field(assembly)?, *d)))
            .collect::<Result<_>>()?;
        Ok(Self { segments })
    }

    /// A single segment whose loop contribution is sampled once and can be
    /// rescaled cheaply (see [`SampledSchedule::scaled`]).
    pub fn from_samples(segments: Vec<(Vec<[f64; 3]>, f64)>) -> Self {
        Self { segments }
    }

    /// All fields multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|(b, d)| (b.iter().map(|v| v.map(|c| c * factor)).collect(), *d))
                .collect(),
        }
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|(_, d)| d).sum()
    }

    /// Spin-1/2 propagator at `sample` after `t` seconds for Landé factor `g`.
    fn propagator(&self, sample: usize, g: f64, t: f64) -> Su2 {
        let mut u = Su2::IDENTITY;
        let mut start = 0.0;
        for (fields, d) in &self.segments {
            let dt = (t - start).clamp(0.0, *d);
            if dt > 0.0 {
                u = Su2::precession(g, fields[sample], dt).mul(&u);
            }
            start += d;
        }
        u
    }
}

/// Per-point complex kernel `K̂ = K / K(t=0)` and envelope `Γ` on the
/// `N × N × n_z` ensemble grid (slice-major).
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingMap {
    pub n: usize,
    pub n_z: usize,
    pub t: f64,
    pub kernel: Vec<Complex64>,
    pub gamma: Vec<f64>,
}

impl DephasingMap {
    /// `η = Γ² |K̂|²` (1 at the envelope peak at t = 0).
    pub fn eta(&self) -> Vec<f64> {
        self.kernel
            .iter()
            .zip(&self.gamma)
            .map(|(k, g)| g * g * k.norm_sqr())
            .collect()
    }

    /// `φ = Arg K`.
    pub fn phi(&self) -> Vec<f64> {
        self.kernel.iter().map(|k| k.arg()).collect()
    }
}

/// Precomputed channel tables for fast kernel evaluation.
#[derive(Clone, Debug)]
pub struct KernelEvaluator {
    g_g: f64,
    g_s: f64,
    table_g: WignerTable,
    table_s: WignerTable,
    /// `(index in g, index in s, weight)` per channel.
    chan: Vec<(usize, usize, f64)>,
    k0: f64,
    /// Row-major matrix slots the channel sums read.
    slots_g: Vec<usize>,
    slots_s: Vec<usize>,
}

impl KernelEvaluator {
    pub fn new(cfg: &EnsembleConfig) -> Result<Self> {
        let ch = channels(cfg)?;
        let chan: Vec<_> = ch
            .iter()
            .map(|c| {
                let ig = cfg.fg.index_of(c.m_g).expect("channel sublevel in F_g");
                let is = cfg.fs.index_of(c.m_s).expect("channel sublevel in F_s");
                (ig, is, c.weight)
            })
            .collect();
        let k0 = chan.iter().map(|c| c.2 * c.2).sum();
        let (ng, ns) = (cfg.fg.multiplicity(), cfg.fs.multiplicity());
        let mut slots_g = Vec::new();
        let mut slots_s = Vec::new();
        for a in &chan {
            for b in &chan {
                slots_g.push(a.0 * ng + b.0);
                slots_s.push(a.1 * ns + b.1);
            }
        }
        for v in [&mut slots_g, &mut slots_s] {
            v.sort_unstable();
            v.dedup();
        }
        Ok(Self {
            slots_g,
            slots_s,
            g_g: cfg.g_g,
            g_s: cfg.g_s,
            table_g: WignerTable::new(cfg.fg)?,
            table_s: WignerTable::new(cfg.fs)?,
            chan,
            k0,
        })
    }

    /// `Σ w_m²`, the kernel at t = 0.
    pub fn k0(&self) -> f64 {
        self.k0
    }

    /// Unnormalized `K` for given spin-1/2 propagators of the two levels.
    pub fn kernel(&self, ug: &Su2, us: &Su2, dg: &mut [Complex64], ds: &mut [Complex64]) -> Complex64 {
        self.table_g.fill_selected(ug, &self.slots_g, dg);
        self.table_s.fill_selected(us, &self.slots_s, ds);
        let (ng, ns) = (self.table_g.dim(), self.table_s.dim());
        let mut acc = ZERO;
        for &(ig_row, is_row, w_row) in &self.chan {
            let mut inner = ZERO;
            for &(ig_col, is_col, w_col) in &self.chan {
                inner += dg[ig_row * ng + ig_col].conj() * ds[is_row * ns + is_col] * w_col;
            }
            acc += inner * w_row;
        }
        acc
    }

    /// Normalized kernels `K̂` for every active sample at time `t`.
    pub fn evaluate(&self, fields: &SampledSchedule, t: f64) -> Result<Vec<Complex64>> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("negative storage time {t}")));
        }
        if t > fields.total_duration() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "t = {t:e} s exceeds the field schedule ({:e} s)",
                fields.total_duration()
            )));
        }
        let len = fields.segments.first().map_or(0, |s| s.0.len());
        let (ng, ns) = (self.table_g.dim(), self.table_s.dim());
        let inv_k0 = 1.0 / self.k0;
        Ok((0..len)
            .into_par_iter()
            .map_init(
                || (vec![ZERO; ng * ng], vec![ZERO; ns * ns]),
                |(dg, ds), i| {
                    let ug = fields.propagator(i, self.g_g, t);
                    let us = fields.propagator(i, self.g_s, t);
                    self.kernel(&ug, &us, dg, ds) * inv_k0
                },
            )
            .collect())
    }
}

/// Builds the dephasing map at time `t` from pre-sampled fields.
pub fn dephasing_kernel(
    evaluator: &KernelEvaluator,
    grid: &EnsembleGrid,
    fields: &SampledSchedule,
    t: f64,
) -> Result<DephasingMap> {
    let values = evaluator.evaluate(fields, t)?;
    let nn = grid.n * grid.n;
    let n_z = grid.slices.len();
    let mut kernel = vec![ZERO; nn * n_z];
    let mut gamma = vec![0.0; nn * n_z];
    for (&(k, idx, g), v) in grid.active.iter().zip(values) {
        kernel[k * nn + idx] = v;
        gamma[k * nn + idx] = g;
    }
    Ok(DephasingMap {
        n: grid.n,
        n_z,
        t,
        kernel,
        gamma,
    })
}

/// One-shot convenience: samples `schedule` on an `n × n` grid of the given
/// Fourier-plane pitch and evaluates the map at `t`.
pub fn dephasing_kernel_for(
    cfg: &EnsembleConfig,
    schedule: &FieldSchedule,
    t: f64,
    n: usize,
    pitch: f64,
) -> Result<DephasingMap> {
    let grid = EnsembleGrid::new(cfg, n, pitch)?;
    let fields = SampledSchedule::sample(&grid, schedule)?;
    dephasing_kernel(&KernelEvaluator::new(cfg)?, &grid, &fields, t)
}

/// Retrieved image-plane intensity (normalized to the t = 0 peak).
#[derive(Clone, Debug, PartialEq)]
pub struct RetrievedImage {
    pub n: usize,
    pub pitch: f64,
    pub intensity: Vec<f64>,
    /// Combined complex amplitude (coherent summation only).
    pub amplitude: Option<Vec<Complex64>>,
    /// Total energy relative to the t = 0 retrieval.
    pub efficiency: f64,
    /// Unnormalized `Σ|A|² pitch²`, comparable with the input energy.
    pub raw_energy: f64,
}

/// Image-plane assembly for a fixed stored Fourier-plane field.
#[derive(Clone, Debug)]
pub struct Retriever {
    u_f: ComplexField2D,
    lens: FourierLens,
    z_sum: ZSum,
    blur: Option<MotionModel>,
    ref_peak: f64,
    ref_energy: f64,
    reference: Vec<f64>,
}

impl Retriever {
    pub fn new(
        u_f: &ComplexField2D,
        grid: &EnsembleGrid,
        lens: FourierLens,
        z_sum: ZSum,
        blur: Option<MotionModel>,
    ) -> Result<Self> {
        if u_f.plane() != Plane::Fourier {
            return Err(Error::invalid("retrieval expects a Fourier-plane field"));
        }
        if u_f.n() != grid.n || (u_f.pitch() - grid.pitch).abs() > 1e-12 * grid.pitch {
            return Err(Error::invalid("dephasing grid does not match the Fourier-plane field"));
        }
        if let Some(m) = &blur {
            m.validate()?;
        }
        let mut me = Self {
            u_f: u_f.clone(),
            lens,
            z_sum,
            blur,
            ref_peak: 1.0,
            ref_energy: 1.0,
            reference: Vec::new(),
        };
        let nn = grid.n * grid.n;
        let n_z = grid.slices.len();
        let mut kernel = vec![ZERO; nn * n_z];
        let mut gamma = vec![0.0; nn * n_z];
        for &(k, idx, g) in &grid.active {
            kernel[k * nn + idx] = Complex64::new(1.0, 0.0);
            gamma[k * nn + idx] = g;
        }
        let map = DephasingMap {
            n: grid.n,
            n_z,
            t: 0.0,
            kernel,
            gamma,
        };
        let (intensity, _, energy) = me.assemble(&map, grid)?;
        let peak = intensity.iter().copied().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::invalid("stored field has no overlap with the ensemble"));
        }
        me.ref_peak = peak;
        me.ref_energy = energy;
        me.reference = intensity.iter().map(|v| v / peak).collect();
        Ok(me)
    }

    /// Normalized t = 0 (equivalently B = 0) retrieved intensity.
    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn z_sum(&self) -> ZSum {
        self.z_sum
    }

    pub fn image_pitch(&self) -> f64 {
        self.lens.output_pitch(self.u_f.pitch())
    }

    fn assemble(
        &self,
        map: &DephasingMap,
        grid: &EnsembleGrid,
    ) -> Result<(Vec<f64>, Option<Vec<Complex64>>, f64)> {
        let n = self.u_f.n();
        let nn = n * n;
        if map.n != n || map.n_z != grid.slices.len() {
            return Err(Error::invalid("dephasing map does not match the retrieval grid"));
        }
        let pitch_f = self.u_f.pitch();
        let pitch_i = self.image_pitch();
        let u = self.u_f.data();
        let w = match &self.blur {
            Some(m) => m.radius(map.t)?,
            None => 0.0,
        };
        // a_z = Γ K̂* u_f, times `pw`
        let slice_amp = |k: usize, pw: f64, out: &mut [Complex64]| {
            for i in 0..nn {
                let j = k * nn + i;
                out[i] = map.kernel[j].conj() * (map.gamma[j] * pw) * u[i];
            }
        };
        let to_image = |buf: &mut [Complex64]| {
            if w > 0.0 {
                blur_in_place(self.lens.fft(), buf, pitch_f, w);
            }
            self.lens.transform_raw(buf, pitch_f);
        };
        match self.z_sum {
            ZSum::Coherent => {
                let mut acc = vec![ZERO; nn];
                let mut tmp = vec![ZERO; nn];
                for k in 0..map.n_z {
                    slice_amp(k, grid.slices[k].1, &mut tmp);
                    for (a, b) in acc.iter_mut().zip(&tmp) {
                        *a += b;
                    }
                }
                to_image(&mut acc);
                let intensity: Vec<f64> = acc.iter().map(|z| z.norm_sqr()).collect();
                let energy = intensity.iter().sum::<f64>() * pitch_i * pitch_i;
                Ok((intensity, Some(acc), energy))
            }
            ZSum::Incoherent => {
                let planes: Vec<Vec<f64>> = (0..map.n_z)
                    .into_par_iter()
                    .map(|k| {
                        let mut buf = vec![ZERO; nn];
                        slice_amp(k, 1.0, &mut buf);
                        to_image(&mut buf);
                        let pw = grid.slices[k].1;
                        buf.iter().map(|z| z.norm_sqr() * pw).collect()
                    })
                    .collect();
                let mut intensity = vec![0.0; nn];
                for plane in &planes {
                    for (a, b) in intensity.iter_mut().zip(plane) {
                        *a += b;
                    }
                }
                let energy = intensity.iter().sum::<f64>() * pitch_i * pitch_i;
                Ok((intensity, None, energy))
            }
        }
    }

    /// Image of each z-slice alone, `|𝔉[P(z_k) Γ K̂* u_f]|²`, on the scale
    /// of [`Retriever::retrieve`].
    pub fn slice_images(&self, map: &DephasingMap, grid: &EnsembleGrid) -> Result<Vec<Vec<f64>>> {
        let n = self.u_f.n();
        let nn = n * n;
        if map.n != n || map.n_z != grid.slices.len() {
            return Err(Error::invalid("dephasing map does not match the retrieval grid"));
        }
        let pitch_f = self.u_f.pitch();
        let w = match &self.blur {
            Some(m) => m.radius(map.t)?,
            None => 0.0,
        };
        let u = self.u_f.data();
        Ok((0..map.n_z)
            .into_par_iter()
            .map(|k| {
                let pw = grid.slices[k].1;
                let mut buf: Vec<Complex64> = (0..nn)
                    .map(|i| {
                        let j = k * nn + i;
                        map.kernel[j].conj() * (map.gamma[j] * pw) * u[i]
                    })
                    .collect();
                if w > 0.0 {
                    blur_in_place(self.lens.fft(), &mut buf, pitch_f, w);
                }
                self.lens.transform_raw(&mut buf, pitch_f);
                buf.iter().map(|z| z.norm_sqr() / self.ref_peak).collect()
            })
            .collect())
    }

    pub fn retrieve(&self, map: &DephasingMap, grid: &EnsembleGrid) -> Result<RetrievedImage> {
        let (mut intensity, amplitude, energy) = self.assemble(map, grid)?;
        let scale = 1.0 / self.ref_peak;
        for v in intensity.iter_mut() {
            *v *= scale;
        }
        let amplitude = amplitude.map(|a| {
            let s = scale.sqrt();
            a.into_iter().map(|z| z * s).collect()
        });
        Ok(RetrievedImage {
            n: self.u_f.n(),
            pitch: self.image_pitch(),
            intensity,
            amplitude,
            efficiency: energy / self.ref_energy,
            raw_energy: energy,
        })
    }
}

/// Everything needed to produce retrieved frames for one stored pattern
/// under one field schedule.
#[derive(Clone, Debug)]
pub struct DephasingSimulation {
    pub grid: EnsembleGrid,
    pub fields: SampledSchedule,
    pub evaluator: KernelEvaluator,
    pub retriever: Retriever,
}

impl DephasingSimulation {
    pub fn new(
        cfg: &EnsembleConfig,
        u_f: &ComplexField2D,
        schedule: &FieldSchedule,
        lens: FourierLens,
        z_sum: ZSum,
        blur: Option<MotionModel>,
    ) -> Result<Self> {
        let grid = EnsembleGrid::new(cfg, u_f.n(), u_f.pitch())?;
        let fields = SampledSchedule::sample(&grid, schedule)?;
        Self::from_parts(cfg, u_f, grid, fields, lens, z_sum, blur)
    }

    pub fn from_parts(
        cfg: &EnsembleConfig,
        u_f: &ComplexField2D,
        grid: EnsembleGrid,
        fields: SampledSchedule,
        lens: FourierLens,
        z_sum: ZSum,
        blur: Option<MotionModel>,
    ) -> Result<Self> {
        let evaluator = KernelEvaluator::new(cfg)?;
        let retriever = Retriever::new(u_f, &grid, lens, z_sum, blur)?;
        Ok(Self {
            grid,
            fields,
            evaluator,
            retriever,
        })
    }

    pub fn map_at(&self, t: f64) -> Result<DephasingMap> {
        dephasing_kernel(&self.evaluator, &self.grid, &self.fields, t)
    }

    pub fn image_at(&self, t: f64) -> Result<RetrievedImage> {
        self.retriever.retrieve(&self.map_at(t)?, &self.grid)
    }
}

/// `(t, efficiency)` for each requested time.
pub fn efficiency_curve(sim: &DephasingSimulation, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_times(times)?;
    times
        .iter()
        .map(|&t| Ok((t, sim.image_at(t)?.efficiency)))
        .collect()
}

pub fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid("storage times must be non-negative"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("storage times must be strictly increasing"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{GAUSS, HBAR, H_PLANCK, LAMBDA_D1, MU_B};
    use crate::optics::{fraunhofer, load_pattern, BuiltinPattern, PatternSpec};

    fn small_setup(cfg: &EnsembleConfig, assembly: CoilAssembly) -> DephasingSimulation {
        let n = 64;
        let pitch = 50e-6;
        let u = load_pattern(&PatternSpec::builtin(BuiltinPattern::ThreeBar, 1.6e-3), n, pitch).unwrap();
        let uf = fraunhofer(&u, LAMBDA_D1, 0.5).unwrap();
        let lens = FourierLens::new(n, LAMBDA_D1, 0.5).unwrap();
        let sched = FieldSchedule::constant(assembly, 1e-3).unwrap();
        DephasingSimulation::new(cfg, &uf, &sched, lens, ZSum::Coherent, None).unwrap()
    }

    #[test]
    fn envelope_values() {
        let cfg = EnsembleConfig::rb85();
        assert_eq!(gamma_envelope(&cfg, 0.0, 0.0, 0.0), 1.0);
        let s = cfg.sigma;
        assert!((gamma_envelope(&cfg, s, 0.0, 0.0) - (-1f64).exp()).abs() < 1e-15);
        let r = 0.7 * s;
        let a = gamma_envelope(&cfg, r, 0.0, 0.1 * s);
        let b = gamma_envelope(&cfg, r / 2f64.sqrt(), r / 2f64.sqrt(), 0.1 * s);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn z_slices_normalized() {
        let mut cfg = EnsembleConfig::rb85();
        for model in [PzModel::Gaussian, PzModel::Uniform] {
            cfg.pz_model = model;
            let s = cfg.z_slices();
            assert_eq!(s.len(), cfg.n_z);
            assert!((s.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(s[cfg.n_z / 2].0, 0.0);
        }
        cfg.n_z = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn four_channels_unpolarized() {
        let cfg = EnsembleConfig::rb85();
        let ch = channels(&cfg).unwrap();
        let ms: Vec<i32> = ch.iter().map(|c| c.m_g.twice() / 2).collect();
        assert_eq!(ms, vec![1, 0, -1, -2]);
        for c in &ch {
            assert_eq!(c.m_s, c.m_g + HalfInt::from_int(2));
            assert!((c.weight * c.weight / (c.r * c.r) - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn single_channel_after_pumping() {
        let mut cfg = EnsembleConfig::rb85();
        cfg.alpha = Helicity::Plus;
        cfg.beta = Helicity::Plus;
        cfg.populations = pure_population(cfg.fg, HalfInt::from_int(0)).unwrap();
        let ch = channels(&cfg).unwrap();
        assert_eq!(ch.len(), 1);
        assert_eq!((ch[0].m_g, ch[0].m_s), (HalfInt::from_int(0), HalfInt::from_int(0)));
    }

    #[test]
    fn no_coupling_is_reported() {
        let mut cfg = EnsembleConfig::rb85();
        cfg.populations = pure_population(cfg.fg, HalfInt::from_int(2)).unwrap();
        assert!(matches!(channels(&cfg), Err(Error::NoCoupling)));
    }

    #[test]
    fn sp_model_populations() {
        let p = sp_populations(HalfInt::from_int(2), 0.7).unwrap();
        assert!((p[2] - 0.76).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_at_t0() {
        let cfg = EnsembleConfig::rb85();
        let grad = CoilAssembly::coil_pair(
            Vec3::zeros(),
            Vec3::x(),
            0.1,
            0.15,
            50,
            1.0,
            true,
            crate::fields::DEFAULT_SEGMENTS,
        )
        .unwrap();
        let sim = small_setup(&cfg, grad);
        let map = sim.map_at(0.0).unwrap();
        for (k, g) in map.kernel.iter().zip(&map.gamma) {
            if *g > 0.0 {
                assert!((k - Complex64::new(1.0, 0.0)).norm() < 1e-14);
            }
        }
        let img = sim.image_at(0.0).unwrap();
        assert!((img.efficiency - 1.0).abs() < 1e-14);
        let peak = img.intensity.iter().copied().fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_axial_field_matches_closed_form() {
        let cfg = EnsembleConfig::rb85();
        let b = 0.97 * GAUSS;
        let sim = small_setup(&cfg, CoilAssembly::uniform(Vec3::new(0.0, 0.0, b)).unwrap());
        let ch = channels(&cfg).unwrap();
        let omega = MU_B * b / HBAR;
        let r2: Vec<(f64, f64)> = ch.iter().map(|c| (c.m_g.value(), c.r * c.r)).collect();
        let norm: f64 = r2.iter().map(|x| x.1).sum();
        for i in 0..40 {
            let t = i as f64 * 0.1e-6;
            let closed = r2
                .iter()
                .map(|&(m, r)| Complex64::from_polar(r, -(2.0 * m + 2.0) * omega * t / 3.0))
                .sum::<Complex64>()
                .norm_sqr()
                / (norm * norm);
            // Landé factors are not exactly 1/3; rescale time to match.
            let g = -cfg.g_g;
            let t_eff = t / (3.0 * g);
            let img = sim.image_at(t_eff).unwrap();
            assert!((img.efficiency - closed).abs() < 1e-9, "t = {t}: {} vs {closed}", img.efficiency);
        }
        let period = H_PLANCK / (2.0 * (-cfg.g_g) * MU_B * b);
        assert!((period - 1.10e-6).abs() < 0.011e-6);
        let revival = sim.image_at(period).unwrap().efficiency;
        assert!((revival - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kernel_magnitude_bounded() {
        let cfg = EnsembleConfig::rb85();
        let grad = CoilAssembly::coil_pair(
            Vec3::zeros(),
            Vec3::x(),
            0.1,
            0.15,
            50,
            3.0,
            true,
            crate::fields::DEFAULT_SEGMENTS,
        )
        .unwrap()
        .with_bias(Vec3::new(0.0, 0.3 * GAUSS, 0.0))
        .unwrap();
        let sim = small_setup(&cfg, grad);
        for t in [1e-6, 5e-6, 30e-6] {
            let map = sim.map_at(t).unwrap();
            assert!(map.kernel.iter().all(|k| k.norm() <= 1.0 + 1e-12));
            let img = sim.image_at(t).unwrap();
            assert!(img.efficiency <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn time_past_schedule_is_rejected() {
        let cfg = EnsembleConfig::rb85();
        let sim = small_setup(&cfg, CoilAssembly::uniform(Vec3::zeros()).unwrap());
        assert!(sim.map_at(2e-3).is_err());
        assert!(sim.map_at(-1e-6).is_err());
    }
}
