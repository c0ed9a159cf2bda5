//! Executing a parsed [`Scenario`]: field schedule, dephasing simulation,
//! scoring, and the on-disk run layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::{echo_config, BackgroundSpec, CoilKind, CoilSpec, ReferenceModel, Scenario};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result, ResultExt};
use crate::fields::{calibrate_currents, CoilAssembly, CoilLoop};
use crate::imageio::{encode_pgm16, read_image};
use crate::metrics::{BackgroundModel, Scorer, SimilarityRecord};
use crate::optics::{fraunhofer, load_pattern, FourierLens, PatternSource};
use crate::spinwave::{DephasingSimulation, FieldSchedule};

pub const CSV_NAME: &str = "similarity.csv";
pub const ECHO_NAME: &str = "config.echo.cfg";
pub const MANIFEST_NAME: &str = "manifest.txt";
pub const CONSTANTS_NAME: &str = "constants.csv";

/// Builds one coil's loops, applying its calibration. Returns the assembly
/// and the current factor (1 when uncalibrated).
pub fn build_coil(spec: &CoilSpec, sigma: f64) -> Result<(CoilAssembly, f64)> {
    let assembly = match spec.kind {
        CoilKind::AntiHelmholtz | CoilKind::Helmholtz => CoilAssembly::coil_pair(
            spec.center,
            spec.axis,
            spec.radius,
            spec.separation,
            spec.turns,
            spec.current,
            spec.kind == CoilKind::AntiHelmholtz,
            spec.segments,
        )?,
        CoilKind::Loop => {
            let l = CoilLoop::new(spec.center, spec.axis, spec.radius, spec.current, spec.turns)?
                .with_segments(spec.segments)?;
            CoilAssembly::new(vec![l], Default::default())?
        }
    };
    match spec.calibrate {
        Some(target) => calibrate_currents(&assembly, sigma, target, spec.calibration),
        None => Ok((assembly, 1.0)),
    }
}

/// Calibrated assemblies for every named coil.
pub fn build_coils(s: &Scenario) -> Result<BTreeMap<String, (CoilAssembly, f64)>> {
    s.coils
        .iter()
        .map(|(name, spec)| {
            let built = build_coil(spec, s.ensemble.sigma).context(|| format!("coil `{name}`"))?;
            Ok((name.clone(), built))
        })
        .collect()
}

/// Loops of the named coils in one segment, without bias.
pub fn segment_loops(
    coils: &BTreeMap<String, (CoilAssembly, f64)>,
    names: &[String],
) -> Result<CoilAssembly> {
    let mut acc = CoilAssembly::new(Vec::new(), Default::default())?;
    for name in names {
        let (a, _) = coils
            .get(name)
            .ok_or_else(|| Error::config(0, format!("undefined coil `{name}`")))?;
        acc = acc.combined(a)?;
    }
    Ok(acc)
}

pub fn build_schedule(s: &Scenario) -> Result<FieldSchedule> {
    let coils = build_coils(s)?;
    let segments = s
        .schedule
        .iter()
        .map(|seg| Ok((segment_loops(&coils, &seg.coils)?.with_bias(seg.bias)?, seg.duration)))
        .collect::<Result<_>>()?;
    FieldSchedule::new(segments)
}

fn load_background(s: &Scenario, n: usize) -> Result<BackgroundModel> {
    match &s.output.background {
        BackgroundSpec::Uniform => Ok(BackgroundModel::Uniform),
        BackgroundSpec::File(p) => {
            let img = read_image(p)?;
            if img.width != n || img.height != n {
                return Err(Error::invalid(format!(
                    "{}: background is {}x{}, frames are {n}x{n}",
                    p.display(),
                    img.width,
                    img.height
                )));
            }
            Ok(BackgroundModel::Supplied(img.data))
        }
    }
}

/// A scenario ready to produce frames.
pub struct PreparedRun {
    pub sim: DephasingSimulation,
    pub scorer: Scorer,
}

pub fn prepare(s: &Scenario) -> Result<PreparedRun> {
    let n = s.optics.grid;
    let u_o = load_pattern(&s.pattern, n, s.optics.pitch).context(|| "loading pattern".into())?;
    let u_f = fraunhofer(&u_o, s.optics.wavelength, s.optics.focal_length)?;
    let lens = FourierLens::new(n, s.optics.wavelength, s.optics.focal_length)?;
    let schedule = build_schedule(s)?;
    let sim = DephasingSimulation::new(&s.ensemble, &u_f, &schedule, lens, s.z_sum, s.blur)?;
    let original = match s.output.reference {
        ReferenceModel::RetrievedT0 => sim.retriever.reference().to_vec(),
        ReferenceModel::Pattern => {
            let inv = u_o.point_inverted().intensity();
            let peak = inv.iter().copied().fold(0.0, f64::max);
            inv.into_iter().map(|v| v / peak).collect()
        }
    };
    let scorer = Scorer::new(original, &load_background(s, n)?)?;
    Ok(PreparedRun { sim, scorer })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub intensity: Vec<f64>,
    /// Per-slice images, filled only when slice frames are requested.
    pub slices: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub n: usize,
    pub records: Vec<SimilarityRecord>,
    pub frames: Vec<Frame>,
    pub s_bg: f64,
}

impl RunResult {
    pub fn record_at(&self, t: f64) -> Option<&SimilarityRecord> {
        self.records
            .iter()
            .find(|r| (r.t - t).abs() <= 1e-12 * t.abs().max(1e-6))
    }
}

/// Runs the scenario in memory. Frames are kept when `s.output.frames` is set.
pub fn simulate(s: &Scenario) -> Result<RunResult> {
    let run = prepare(s)?;
    let mut records = Vec::with_capacity(s.times.len());
    let mut frames = Vec::new();
    for &t in &s.times {
        let map = run.sim.map_at(t)?;
        let img = run.sim.retriever.retrieve(&map, &run.sim.grid)?;
        records.push(run.scorer.score(t, &img.intensity, img.efficiency)?);
        if s.output.frames {
            let slices = if s.output.slice_frames {
                run.sim.retriever.slice_images(&map, &run.sim.grid)?
            } else {
                Vec::new()
            };
            frames.push(Frame {
                t,
                intensity: img.intensity,
                slices,
            });
        }
    }
    Ok(RunResult {
        n: s.optics.grid,
        records,
        frames,
        s_bg: run.scorer.s_bg(),
    })
}

/// `%.6g`-style formatting: six significant digits, trailing zeros dropped.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent in {:e} output");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn records_csv(records: &[SimilarityRecord]) -> String {
    let mut out = String::from("t_us,S,S_r,efficiency\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_sig6(r.t * 1e6),
            format_sig6(r.s),
            format_sig6(r.s_r),
            format_sig6(r.efficiency)
        );
    }
    out
}

/// Frame file name; `slice = None` is the z-summed image.
pub fn frame_name(t: f64, slice: Option<usize>) -> String {
    match slice {
        Some(k) => format!("frame_t{:.3}_z{k}.pgm", t * 1e6),
        None => format!("frame_t{:.3}_zall.pgm", t * 1e6),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash over everything that determines the numbers: the canonical config
/// (output directory excluded), pattern and background file contents, and
/// the physical constants.
pub fn content_hash(s: &Scenario) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"config\n");
    h.update(echo_config(s, false).as_bytes());
    h.update(b"pattern\n");
    match &s.pattern.source {
        PatternSource::Builtin(b) => h.update(b.name().as_bytes()),
        PatternSource::File(p) => h.update(fs::read(p).map_err(|e| Error::io(p, e))?),
    }
    h.update(b"background\n");
    if let BackgroundSpec::File(p) = &s.output.background {
        h.update(fs::read(p).map_err(|e| Error::io(p, e))?);
    }
    h.update(b"constants\n");
    h.update(PhysicalConstants::standard().to_csv().as_bytes());
    h.update(concat!("dspsim ", env!("CARGO_PKG_VERSION")).as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a finished run into the existing directory `dir`.
pub fn write_run(s: &Scenario, result: &RunResult, dir: &Path) -> Result<()> {
    let mut files: Vec<(String, Vec<u8>)> = vec![
        (CSV_NAME.into(), records_csv(&result.records).into_bytes()),
        (ECHO_NAME.into(), echo_config(s, true).into_bytes()),
        (CONSTANTS_NAME.into(), PhysicalConstants::standard().to_csv().into_bytes()),
    ];
    let n = result.n;
    for f in &result.frames {
        files.push((frame_name(f.t, None), encode_pgm16(n, n, &f.intensity)));
        for (k, slice) in f.slices.iter().enumerate() {
            files.push((frame_name(f.t, Some(k)), encode_pgm16(n, n, slice)));
        }
    }
    let mut manifest = String::new();
    let _ = writeln!(manifest, "content_hash = {}", content_hash(s)?);
    let _ = writeln!(manifest, "s_bg = {:?}", result.s_bg);
    let _ = writeln!(manifest, "frames = {}", result.frames.len());
    let _ = writeln!(manifest, "[files]");
    for (name, bytes) in &files {
        write_file(&dir.join(name), bytes)?;
        let _ = writeln!(manifest, "{name} = {}", sha256_hex(bytes));
    }
    write_file(&dir.join(MANIFEST_NAME), manifest.as_bytes())
}

/// Fresh sibling directory to build `target` in before [`commit_dir`].
pub fn staging_dir(target: &Path) -> Result<PathBuf> {
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let name = target
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{}: not a directory name", target.display())))?
        .to_string_lossy()
        .into_owned();
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;
    Ok(staging)
}

/// Moves a completed staging directory into place. An existing `target` is
/// replaced only if it is empty or holds a previous run (has a manifest).
pub fn commit_dir(staging: &Path, target: &Path) -> Result<()> {
    if target.exists() {
        let previous_run = target.join(MANIFEST_NAME).exists();
        let empty = fs::read_dir(target)
            .map_err(|e| Error::io(target, e))?
            .next()
            .is_none();
        if !(previous_run || empty) {
            let _ = fs::remove_dir_all(staging);
            return Err(Error::io(
                target,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "output directory exists and does not hold a previous run",
                ),
            ));
        }
        fs::remove_dir_all(target).map_err(|e| Error::io(target, e))?;
    }
    fs::rename(staging, target).map_err(|e| Error::io(target, e))
}

/// Simulates and writes a single run to `dir` (staged, then renamed).
pub fn run_scenario(s: &Scenario, dir: &Path) -> Result<RunResult> {
    let result = simulate(s)?;
    let staging = staging_dir(dir)?;
    if let Err(e) = write_run(s, &result, &staging) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    commit_dir(&staging, dir)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(0.0), "0");
        assert_eq!(format_sig6(1.0), "1");
        assert_eq!(format_sig6(0.25), "0.25");
        assert_eq!(format_sig6(6.0), "6");
        assert_eq!(format_sig6(123.4567), "123.457");
        assert_eq!(format_sig6(0.999_999_7), "1");
        assert_eq!(format_sig6(-0.123_456_78), "-0.123457");
        assert_eq!(format_sig6(1.234_567e-7), "1.23457e-07");
        assert_eq!(format_sig6(999_999.7), "1e+06");
        assert_eq!(format_sig6(100_000.0), "100000");
    }

    #[test]
    fn frame_names() {
        assert_eq!(frame_name(6e-6, None), "frame_t6.000_zall.pgm");
        assert_eq!(frame_name(0.25e-6, Some(3)), "frame_t0.250_z3.pgm");
    }
}
