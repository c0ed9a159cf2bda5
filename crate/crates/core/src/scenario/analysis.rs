//! Field maps and field-strength fits driven by a scenario.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::Scenario;
use super::run::{build_coils, segment_loops};
use crate::error::{Error, Result};
use crate::fields::{ensemble_field_strength, CalibrationConvention, FieldMap, Vec3};
use crate::fit::{fit_field_strength, FitReport};
use crate::optics::{fraunhofer, load_pattern, FourierLens};
use crate::spinwave::{dephasing_kernel, DephasingSimulation, FieldSchedule, SampledSchedule};

/// Field of schedule segment `segment` sampled on an `points³` lattice
/// spanning `±half_extent` about the ensemble center.
pub fn field_map(s: &Scenario, segment: usize, half_extent: f64, points: usize) -> Result<FieldMap> {
    let seg = s.schedule.get(segment).ok_or_else(|| {
        Error::invalid(format!(
            "segment {segment} does not exist (schedule has {})",
            s.schedule.len()
        ))
    })?;
    if !(half_extent > 0.0) || points < 2 {
        return Err(Error::invalid("field map needs a positive extent and at least 2 points per axis"));
    }
    let coils = build_coils(s)?;
    let assembly = segment_loops(&coils, &seg.coils)?.with_bias(seg.bias)?;
    let h = 2.0 * half_extent / (points - 1) as f64;
    FieldMap::sample(
        &assembly,
        Vec3::from_element(-half_extent),
        Vec3::from_element(h),
        [points; 3],
    )
}

/// Forward model for fitting: the scenario's coil field rescaled to a
/// trial strength `B`, biases held fixed.
pub struct FitModel {
    sim: DephasingSimulation,
    loops: Vec<Vec<[f64; 3]>>,
    bias: Vec<Vec3>,
    durations: Vec<f64>,
    reference_strength: f64,
}

impl FitModel {
    /// `B` is measured like the coil calibration: the strength of the coil
    /// field over the ensemble in the last segment that drives any coil.
    pub fn new(s: &Scenario) -> Result<Self> {
        let coils = build_coils(s)?;
        let driven = s
            .schedule
            .iter()
            .rev()
            .find(|seg| !seg.coils.is_empty())
            .ok_or_else(|| Error::invalid("fitting needs a schedule segment that drives a coil"))?;
        let convention = s
            .coils
            .get(&driven.coils[0])
            .map_or(CalibrationConvention::VolumeAverage, |c| c.calibration);
        let reference_strength = ensemble_field_strength(
            &segment_loops(&coils, &driven.coils)?,
            s.ensemble.sigma,
            convention,
        )?;
        if !(reference_strength > 0.0) {
            return Err(Error::invalid("coil field vanishes over the ensemble"));
        }

        let n = s.optics.grid;
        let u_o = load_pattern(&s.pattern, n, s.optics.pitch)?;
        let u_f = fraunhofer(&u_o, s.optics.wavelength, s.optics.focal_length)?;
        let lens = FourierLens::new(n, s.optics.wavelength, s.optics.focal_length)?;
        let mut segments = Vec::new();
        let mut loops_only = Vec::new();
        for seg in &s.schedule {
            let loops = segment_loops(&coils, &seg.coils)?;
            segments.push((loops.clone(), seg.duration));
            loops_only.push(loops);
        }
        let schedule = FieldSchedule::new(segments)?;
        let sim = DephasingSimulation::new(&s.ensemble, &u_f, &schedule, lens, s.z_sum, s.blur)?;
        let loops = loops_only
            .iter()
            .map(|a| sim.grid.sample_field(a))
            .collect::<Result<_>>()?;
        Ok(Self {
            sim,
            loops,
            bias: s.schedule.iter().map(|seg| seg.bias).collect(),
            durations: s.schedule.iter().map(|seg| seg.duration).collect(),
            reference_strength,
        })
    }

    /// Coil field strength (T) of the scenario as written.
    pub fn reference_strength(&self) -> f64 {
        self.reference_strength
    }

    fn fields_for(&self, b: f64) -> SampledSchedule {
        let factor = b / self.reference_strength;
        SampledSchedule::from_samples(
            self.loops
                .iter()
                .zip(&self.bias)
                .zip(&self.durations)
                .map(|((l, bias), d)| {
                    let samples = l
                        .iter()
                        .map(|v| [v[0] * factor + bias.x, v[1] * factor + bias.y, v[2] * factor + bias.z])
                        .collect();
                    (samples, *d)
                })
                .collect(),
        )
    }

    /// Predicted retrieval efficiency at each time for coil strength `b`.
    pub fn predict(&self, b: f64, times: &[f64]) -> Result<Vec<f64>> {
        let fields = self.fields_for(b);
        times
            .iter()
            .map(|&t| {
                let map = dephasing_kernel(&self.sim.evaluator, &self.sim.grid, &fields, t)?;
                Ok(self.sim.retriever.retrieve(&map, &self.sim.grid)?.efficiency)
            })
            .collect()
    }

    pub fn fit(&self, observed: &[(f64, f64)], bracket: (f64, f64), tol: f64) -> Result<FitReport> {
        let times: Vec<f64> = observed.iter().map(|o| o.0).collect();
        fit_field_strength(observed, |b| self.predict(b, &times), bracket, tol)
    }
}

/// Reads `(t, efficiency)` pairs from a CSV with `t_us` and `efficiency`
/// columns (others ignored). Times are returned in seconds.
pub fn read_observed(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_observed(&text).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_observed(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty observation file"))?
        .split(',')
        .map(str::trim)
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| Error::invalid(format!("missing `{name}` column")))
    };
    let (ti, ei) = (col("t_us")?, col("efficiency")?);
    lines
        .enumerate()
        .map(|(i, line)| {
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            let get = |j: usize| {
                cells
                    .get(j)
                    .and_then(|c| c.parse::<f64>().ok())
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::invalid(format!("row {}: bad number", i + 2)))
            };
            Ok((get(ti)? / 1e6, get(ei)?))
        })
        .collect()
}

/// Multiplies each efficiency by `1 + frac·N(0, 1)` with a seeded generator.
pub fn add_noise(observed: &[(f64, f64)], frac: f64, seed: u64) -> Result<Vec<(f64, f64)>> {
    let normal = Normal::new(0.0, frac).map_err(|e| Error::invalid(format!("noise level: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(observed
        .iter()
        .map(|&(t, e)| (t, e * (1.0 + normal.sample(&mut rng))))
        .collect())
}
