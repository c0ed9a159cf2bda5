//! Line-oriented scenario config: `[section]` headers, `key = value` lines,
//! `#` comments, and unit-suffixed keys for dimensioned quantities.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::angmom::{HalfInt, Helicity, HyperfineManifold};
use crate::constants::{GAUSS, M_RB85};
use crate::error::{Error, Result};
use crate::fields::{CalibrationConvention, Vec3, DEFAULT_SEGMENTS};
use crate::optics::{BuiltinPattern, MotionModel, PatternSource, PatternSpec};
use crate::spinwave::{
    pure_population, sp_populations, uniform_populations, EnsembleConfig, PzModel, ZSum,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    None,
    Length,
    Time,
    Field,
    Temperature,
    Current,
}

/// Suffix, dimension, and the divisor taking the value to SI (dividing by
/// an exact power of ten rounds correctly; multiplying by 1e-6 need not).
const SUFFIXES: &[(&str, Dim, f64)] = &[
    ("_m", Dim::Length, 1.0),
    ("_us", Dim::Time, 1e6),
    ("_s", Dim::Time, 1.0),
    ("_gauss", Dim::Field, 1.0 / GAUSS),
    ("_tesla", Dim::Field, 1.0),
    ("_k", Dim::Temperature, 1.0),
    ("_a", Dim::Current, 1.0),
];

const PATTERN_KEYS: &[(&str, Dim)] = &[
    ("builtin", Dim::None),
    ("file", Dim::None),
    ("diameter", Dim::Length),
    ("scale", Dim::None),
];

const OPTICS_KEYS: &[(&str, Dim)] = &[
    ("grid", Dim::None),
    ("pitch", Dim::Length),
    ("wavelength", Dim::Length),
    ("focal_length", Dim::Length),
];

const ENSEMBLE_KEYS: &[(&str, Dim)] = &[
    ("sigma", Dim::Length),
    ("r_a", Dim::Length),
    ("n_z", Dim::None),
    ("pz_model", Dim::None),
    ("fg", Dim::None),
    ("fs", Dim::None),
    ("fe", Dim::None),
    ("g_g", Dim::None),
    ("g_s", Dim::None),
    ("alpha", Dim::None),
    ("beta", Dim::None),
    ("populations", Dim::None),
    ("sp_efficiency", Dim::None),
    ("z_sum", Dim::None),
    ("blur", Dim::None),
    ("temperature", Dim::Temperature),
    ("velocity_m_per_s", Dim::None),
    ("diffusion_m2_per_s", Dim::None),
];

const COIL_KEYS: &[(&str, Dim)] = &[
    ("kind", Dim::None),
    ("center", Dim::Length),
    ("axis", Dim::None),
    ("radius", Dim::Length),
    ("separation", Dim::Length),
    ("turns", Dim::None),
    ("current", Dim::Current),
    ("calibrate", Dim::Field),
    ("calibration", Dim::None),
    ("segments", Dim::None),
];

const SEGMENT_KEYS: &[(&str, Dim)] = &[
    ("coils", Dim::None),
    ("bias", Dim::Field),
    ("duration", Dim::Time),
];

const TIMES_KEYS: &[(&str, Dim)] = &[
    ("ranges", Dim::Time),
    ("logspace", Dim::Time),
    ("list", Dim::Time),
];

const OUTPUT_KEYS: &[(&str, Dim)] = &[
    ("dir", Dim::None),
    ("frames", Dim::None),
    ("slice_frames", Dim::None),
    ("seed", Dim::None),
    ("reference", Dim::None),
    ("background", Dim::None),
];

pub const DEFAULT_GRID: usize = 256;
pub const DEFAULT_PITCH: f64 = 12.5e-6;
pub const DEFAULT_FOCAL_LENGTH: f64 = 0.5;
pub const DEFAULT_PATTERN_DIAMETER: f64 = 1.6e-3;
pub const DEFAULT_SP_EFFICIENCY: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OpticsConfig {
    pub grid: usize,
    pub pitch: f64,
    pub wavelength: f64,
    pub focal_length: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            grid: DEFAULT_GRID,
            pitch: DEFAULT_PITCH,
            wavelength: crate::constants::LAMBDA_D1,
            focal_length: DEFAULT_FOCAL_LENGTH,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PopulationModel {
    Uniform,
    /// Partial pumping into `m = 0` with the given efficiency.
    Sp(f64),
    Pure(HalfInt),
    Explicit(Vec<f64>),
}

impl PopulationModel {
    pub fn resolve(&self, fg: HalfInt) -> Result<Vec<f64>> {
        match self {
            PopulationModel::Uniform => Ok(uniform_populations(fg)),
            PopulationModel::Sp(e) => sp_populations(fg, *e),
            PopulationModel::Pure(m) => pure_population(fg, *m),
            PopulationModel::Explicit(p) => Ok(p.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoilKind {
    AntiHelmholtz,
    Helmholtz,
    Loop,
}

impl CoilKind {
    fn name(self) -> &'static str {
        match self {
            CoilKind::AntiHelmholtz => "anti-helmholtz",
            CoilKind::Helmholtz => "helmholtz",
            CoilKind::Loop => "loop",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoilSpec {
    pub kind: CoilKind,
    pub center: Vec3,
    pub axis: Vec3,
    pub radius: f64,
    pub separation: f64,
    pub turns: u32,
    pub current: f64,
    /// Rescale the current so the ensemble sees this field strength (T).
    pub calibrate: Option<f64>,
    pub calibration: CalibrationConvention,
    pub segments: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSpec {
    pub coils: Vec<String>,
    pub bias: Vec3,
    pub duration: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceModel {
    /// Retrieved image at t = 0 (no dephasing).
    RetrievedT0,
    /// Point-inverted input intensity.
    Pattern,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BackgroundSpec {
    Uniform,
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub frames: bool,
    pub slice_frames: bool,
    pub seed: u64,
    pub reference: ReferenceModel,
    pub background: BackgroundSpec,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            frames: true,
            slice_frames: false,
            seed: 0,
            reference: ReferenceModel::RetrievedT0,
            background: BackgroundSpec::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub pattern: PatternSpec,
    pub optics: OpticsConfig,
    pub ensemble: EnsembleConfig,
    pub populations: PopulationModel,
    pub z_sum: ZSum,
    pub blur: Option<MotionModel>,
    pub coils: BTreeMap<String, CoilSpec>,
    pub schedule: Vec<SegmentSpec>,
    pub times: Vec<f64>,
    pub output: OutputConfig,
}

impl Scenario {
    /// Same field of view on an `n × n` grid.
    pub fn with_grid(mut self, n: usize) -> Self {
        self.optics.pitch *= self.optics.grid as f64 / n as f64;
        self.optics.grid = n;
        self
    }

    pub fn with_n_z(mut self, n_z: usize) -> Self {
        self.ensemble.n_z = n_z;
        self
    }

    pub fn schedule_duration(&self) -> f64 {
        self.schedule.iter().map(|s| s.duration).sum()
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

fn lex(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line, "unterminated section header"))?
                .trim();
            if name.is_empty() {
                return Err(Error::config(line, "empty section name"));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(Error::config(line, format!("duplicate section [{name}]")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected `key = value`, found `{content}`")))?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::config(line, format!("malformed key `{key}`")));
        }
        if value.is_empty() {
            return Err(Error::config(line, format!("key `{key}` has no value")));
        }
        let section = sections
            .last_mut()
            .ok_or_else(|| Error::config(line, "key outside any section"))?;
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::config(line, format!("duplicate key `{key}`")));
        }
        section.entries.push(Entry {
            key: key.to_string(),
            value: value.to_string(),
            line,
        });
    }
    Ok(sections)
}

/// A resolved `key = value` pair: base name and the SI divisor implied by
/// the unit suffix (1 for dimensionless keys).
struct Value<'a> {
    base: &'static str,
    divisor: f64,
    text: &'a str,
    line: usize,
}

fn resolve<'a>(entry: &'a Entry, key: &str, table: &[(&'static str, Dim)]) -> Result<Value<'a>> {
    let line = entry.line;
    let mk = |base: &'static str, divisor: f64| Value {
        base,
        divisor,
        text: &entry.value,
        line,
    };
    if let Some(&(base, dim)) = table.iter().find(|(b, _)| *b == key) {
        if dim == Dim::None {
            return Ok(mk(base, 1.0));
        }
        return Err(Error::config(
            line,
            format!("`{key}` needs a unit suffix ({})", suffix_names(dim)),
        ));
    }
    for &(suffix, dim, divisor) in SUFFIXES {
        if let Some(stem) = key.strip_suffix(suffix) {
            if let Some(&(base, want)) = table.iter().find(|(b, _)| *b == stem) {
                if want == dim {
                    return Ok(mk(base, divisor));
                }
                return Err(Error::config(
                    line,
                    format!("`{key}`: wrong unit, expected {}", suffix_names(want)),
                ));
            }
        }
    }
    Err(Error::config(line, format!("unknown key `{key}`")))
}

fn suffix_names(dim: Dim) -> String {
    SUFFIXES
        .iter()
        .filter(|s| s.1 == dim)
        .map(|s| s.0)
        .collect::<Vec<_>>()
        .join(" or ")
}

impl Value<'_> {
    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::config(self.line, format!("{}: {msg}", self.base))
    }

    fn f64(&self) -> Result<f64> {
        parse_f64(self.text)
            .map(|v| v / self.divisor)
            .ok_or_else(|| self.err(format!("`{}` is not a number", self.text)))
    }

    fn positive(&self) -> Result<f64> {
        let v = self.f64()?;
        if !(v > 0.0) {
            return Err(self.err("must be positive"));
        }
        Ok(v)
    }

    fn usize(&self) -> Result<usize> {
        self.text
            .parse()
            .map_err(|_| self.err(format!("`{}` is not a non-negative integer", self.text)))
    }

    fn list(&self) -> Result<Vec<f64>> {
        self.text
            .split(',')
            .map(|s| {
                parse_f64(s.trim())
                    .map(|v| v / self.divisor)
                    .ok_or_else(|| self.err(format!("`{}` is not a number", s.trim())))
            })
            .collect()
    }

    fn vec3(&self) -> Result<Vec3> {
        let v = self.list()?;
        if v.len() != 3 {
            return Err(self.err("expected three comma-separated components"));
        }
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    fn bool(&self) -> Result<bool> {
        match self.text {
            "true" | "yes" | "on" => Ok(true),
            "false" | "no" | "off" => Ok(false),
            other => Err(self.err(format!("`{other}` is not a boolean"))),
        }
    }

    fn half_int(&self) -> Result<HalfInt> {
        parse_half_int(self.text).ok_or_else(|| self.err(format!("`{}` is not a half-integer", self.text)))
    }

    fn helicity(&self) -> Result<Helicity> {
        let v: i32 = self
            .text
            .trim_start_matches('+')
            .parse()
            .map_err(|_| self.err(format!("`{}` is not -1, 0 or +1", self.text)))?;
        Helicity::from_i32(v).map_err(|e| self.err(e))
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_half_int(s: &str) -> Option<HalfInt> {
    if let Some(num) = s.strip_suffix("/2") {
        let t: i32 = num.trim().parse().ok()?;
        return Some(HalfInt::from_twice(t));
    }
    let v: f64 = s.parse().ok()?;
    HalfInt::new(v).ok()
}

fn format_half_int(h: HalfInt) -> String {
    if h.twice() % 2 == 0 {
        format!("{}", h.twice() / 2)
    } else {
        format!("{}/2", h.twice())
    }
}

fn parse_axis(v: &Value) -> Result<Vec3> {
    let axis = match v.text {
        "x" => Vec3::x(),
        "y" => Vec3::y(),
        "z" => Vec3::z(),
        _ => v.vec3()?,
    };
    if !(axis.norm() > 0.0) {
        return Err(v.err("axis must be non-zero"));
    }
    Ok(axis)
}

/// `a:b:step` ranges (inclusive of `b` when it lands on the step grid).
fn expand_ranges(v: &Value) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in v.text.split(',') {
        let nums: Vec<f64> = part
            .split(':')
            .map(|s| parse_f64(s.trim()).ok_or_else(|| v.err(format!("bad range `{}`", part.trim()))))
            .collect::<Result<_>>()?;
        let [a, b, step] = nums[..] else {
            return Err(v.err(format!("range `{}` is not a:b:step", part.trim())));
        };
        if !(step > 0.0) || b < a {
            return Err(v.err(format!("range `{}` is empty or has a non-positive step", part.trim())));
        }
        let count = ((b - a) / step + 1e-9).floor() as usize;
        out.extend((0..=count).map(|i| (a + i as f64 * step) / v.divisor));
    }
    Ok(out)
}

/// `a:b:n` logarithmically spaced points, both ends included.
fn expand_logspace(v: &Value) -> Result<Vec<f64>> {
    let nums: Vec<&str> = v.text.split(':').map(str::trim).collect();
    let [a, b, n] = nums[..] else {
        return Err(v.err("expected a:b:count"));
    };
    let (a, b) = match (parse_f64(a), parse_f64(b)) {
        (Some(a), Some(b)) if a > 0.0 && b > a => (a, b),
        _ => return Err(v.err("logspace needs 0 < a < b")),
    };
    let n: usize = n.parse().map_err(|_| v.err("logspace count must be an integer"))?;
    if n < 2 {
        return Err(v.err("logspace count must be at least 2"));
    }
    let (la, lb) = (a.ln(), b.ln());
    Ok((0..n)
        .map(|i| {
            let x = if i + 1 == n {
                b
            } else {
                (la + (lb - la) * i as f64 / (n - 1) as f64).exp()
            };
            x / v.divisor
        })
        .collect())
}

struct SectionReader<'a> {
    section: &'a Section,
    table: &'static [(&'static str, Dim)],
}

impl<'a> SectionReader<'a> {
    fn values(&self) -> Result<Vec<Value<'a>>> {
        self.section
            .entries
            .iter()
            .map(|e| resolve(e, &e.key, self.table))
            .collect()
    }
}

fn default_scenario() -> Scenario {
    Scenario {
        pattern: PatternSpec::builtin(BuiltinPattern::ThreeBar, DEFAULT_PATTERN_DIAMETER),
        optics: OpticsConfig::default(),
        ensemble: EnsembleConfig::rb85(),
        populations: PopulationModel::Uniform,
        z_sum: ZSum::Coherent,
        blur: None,
        coils: BTreeMap::new(),
        schedule: Vec::new(),
        times: Vec::new(),
        output: OutputConfig::default(),
    }
}

/// Reads and parses a config file; relative paths inside it resolve
/// against the file's directory.
pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

type PartialSegment = (Option<Vec<String>>, Vec3, Option<f64>, usize);

pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<Scenario> {
    let sections = lex(text)?;
    let mut s = default_scenario();
    let mut g_override = (None, None);
    let mut pop_text: Option<(String, usize)> = None;
    let mut sp_eff = DEFAULT_SP_EFFICIENCY;
    let mut sp_eff_given = None;
    let mut blur_mode: Option<(String, usize)> = None;
    let mut temperature = None;
    let mut velocity = None;
    let mut diffusion = None;
    // per segment: coils, bias, duration, first line seen
    let mut segments: BTreeMap<usize, PartialSegment> = BTreeMap::new();
    let mut times: Vec<f64> = Vec::new();
    let mut times_line = 0;
    let mut pattern_source_line = None;
    let mut r_a_given = false;

    for section in &sections {
        let name = section.name.as_str();
        if let Some(coil_name) = name.strip_prefix("coils.") {
            if coil_name.is_empty() || coil_name.contains(|c: char| c.is_whitespace() || c == ',') {
                return Err(Error::config(section.line, format!("bad coil name `{coil_name}`")));
            }
            let coil = parse_coil(section)?;
            s.coils.insert(coil_name.to_string(), coil);
            continue;
        }
        match name {
            "pattern" => {
                for v in (SectionReader { section, table: PATTERN_KEYS }).values()? {
                    match v.base {
                        "builtin" => {
                            if pattern_source_line.replace(v.line).is_some() {
                                return Err(v.err("give either `builtin` or `file`, not both"));
                            }
                            let p = BuiltinPattern::from_name(v.text).ok_or_else(|| {
                                v.err(format!(
                                    "unknown pattern `{}` (disk, ring, three-bar, letter-mask)",
                                    v.text
                                ))
                            })?;
                            s.pattern.source = PatternSource::Builtin(p);
                        }
                        "file" => {
                            if pattern_source_line.replace(v.line).is_some() {
                                return Err(v.err("give either `builtin` or `file`, not both"));
                            }
                            let p = base_dir.join(v.text);
                            let p = p.canonicalize().map_err(|e| Error::io(&p, e))?;
                            s.pattern.source = PatternSource::File(p);
                        }
                        "diameter" => s.pattern.physical_diameter = v.positive()?,
                        "scale" => {
                            let f = v.f64()?;
                            if !(f > 0.0 && f <= 4.0) {
                                return Err(v.err("scale must lie in (0, 4]"));
                            }
                            s.pattern.scale_factor = f;
                        }
                        _ => unreachable!(),
                    }
                }
            }
            "optics" => {
                for v in (SectionReader { section, table: OPTICS_KEYS }).values()? {
                    match v.base {
                        "grid" => {
                            let n = v.usize()?;
                            if n < 4 || !n.is_power_of_two() {
                                return Err(v.err("grid must be a power of two >= 4"));
                            }
                            s.optics.grid = n;
                        }
                        "pitch" => s.optics.pitch = v.positive()?,
                        "wavelength" => s.optics.wavelength = v.positive()?,
                        "focal_length" => s.optics.focal_length = v.positive()?,
                        _ => unreachable!(),
                    }
                }
            }
            "ensemble" => {
                let e = &mut s.ensemble;
                for v in (SectionReader { section, table: ENSEMBLE_KEYS }).values()? {
                    match v.base {
                        "sigma" => e.sigma = v.positive()?,
                        "r_a" => {
                            e.r_a = v.positive()?;
                            r_a_given = true;
                        }
                        "n_z" => e.n_z = v.usize()?,
                        "pz_model" => {
                            e.pz_model = match v.text {
                                "gaussian" => PzModel::Gaussian,
                                "uniform" => PzModel::Uniform,
                                other => return Err(v.err(format!("unknown model `{other}`"))),
                            }
                        }
                        "fg" => e.fg = v.half_int()?,
                        "fs" => e.fs = v.half_int()?,
                        "fe" => e.fe = v.half_int()?,
                        "g_g" => g_override.0 = Some(v.f64()?),
                        "g_s" => g_override.1 = Some(v.f64()?),
                        "alpha" => e.alpha = v.helicity()?,
                        "beta" => e.beta = v.helicity()?,
                        "populations" => pop_text = Some((v.text.to_string(), v.line)),
                        "sp_efficiency" => {
                            sp_eff = v.f64()?;
                            sp_eff_given = Some(v.line);
                        }
                        "z_sum" => {
                            s.z_sum = ZSum::from_name(v.text)
                                .ok_or_else(|| v.err("expected coherent or incoherent"))?
                        }
                        "blur" => blur_mode = Some((v.text.to_string(), v.line)),
                        "temperature" => temperature = Some(v.positive()?),
                        "velocity_m_per_s" => velocity = Some(v.f64()?),
                        "diffusion_m2_per_s" => diffusion = Some(v.f64()?),
                        _ => unreachable!(),
                    }
                }
            }
            "schedule" => {
                for entry in &section.entries {
                    let (prefix, rest) = entry
                        .key
                        .split_once('.')
                        .ok_or_else(|| Error::config(entry.line, format!("unknown key `{}`", entry.key)))?;
                    let idx: usize = prefix
                        .strip_prefix("seg")
                        .and_then(|n| n.parse().ok())
                        .ok_or_else(|| {
                            Error::config(entry.line, format!("schedule keys look like seg0.duration_us, not `{}`", entry.key))
                        })?;
                    let v = resolve(entry, rest, SEGMENT_KEYS)?;
                    let seg = segments
                        .entry(idx)
                        .or_insert((None, Vec3::zeros(), None, entry.line));
                    match v.base {
                        "coils" => {
                            let names: Vec<String> = if v.text == "none" {
                                Vec::new()
                            } else {
                                v.text.split(',').map(|c| c.trim().to_string()).collect()
                            };
                            seg.0 = Some(names);
                        }
                        "bias" => seg.1 = v.vec3()?,
                        "duration" => seg.2 = Some(v.positive()?),
                        _ => unreachable!(),
                    }
                }
            }
            "times" => {
                times_line = section.line;
                for v in (SectionReader { section, table: TIMES_KEYS }).values()? {
                    match v.base {
                        "ranges" => times.extend(expand_ranges(&v)?),
                        "logspace" => times.extend(expand_logspace(&v)?),
                        "list" => times.extend(v.list()?),
                        _ => unreachable!(),
                    }
                }
            }
            "output" => {
                for v in (SectionReader { section, table: OUTPUT_KEYS }).values()? {
                    match v.base {
                        "dir" => s.output.dir = PathBuf::from(v.text),
                        "frames" => s.output.frames = v.bool()?,
                        "slice_frames" => s.output.slice_frames = v.bool()?,
                        "seed" => {
                            s.output.seed = v
                                .text
                                .parse()
                                .map_err(|_| v.err("seed must be a non-negative integer"))?
                        }
                        "reference" => {
                            s.output.reference = match v.text {
                                "retrieved_t0" => ReferenceModel::RetrievedT0,
                                "pattern" => ReferenceModel::Pattern,
                                other => {
                                    return Err(v.err(format!(
                                        "unknown reference `{other}` (retrieved_t0 or pattern)"
                                    )))
                                }
                            }
                        }
                        "background" => {
                            s.output.background = if v.text == "uniform" {
                                BackgroundSpec::Uniform
                            } else {
                                let p = base_dir.join(v.text);
                                BackgroundSpec::File(p.canonicalize().map_err(|e| Error::io(&p, e))?)
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
            other => {
                return Err(Error::config(section.line, format!("unknown section [{other}]")));
            }
        }
    }

    if !r_a_given {
        s.ensemble.r_a = 2.0 * s.ensemble.sigma;
    }
    // Landé factors: Rb-85 ground-state values unless overridden.
    let lande = |f: HalfInt| HyperfineManifold::rb85_ground(f).map(|m| m.g_f).ok();
    let e = &mut s.ensemble;
    e.g_g = match g_override.0.or_else(|| lande(e.fg)) {
        Some(g) => g,
        None => return Err(Error::config(0, format!("g_g must be given for F_g = {}", e.fg))),
    };
    e.g_s = match g_override.1.or_else(|| lande(e.fs)) {
        Some(g) => g,
        None => return Err(Error::config(0, format!("g_s must be given for F_s = {}", e.fs))),
    };

    let pop_line = pop_text.as_ref().map_or(0, |p| p.1);
    s.populations = match pop_text.as_ref().map(|p| p.0.as_str()) {
        None | Some("uniform") => PopulationModel::Uniform,
        Some("sp") => PopulationModel::Sp(sp_eff),
        Some(t) if t.starts_with("pure:") => PopulationModel::Pure(
            parse_half_int(t["pure:".len()..].trim())
                .ok_or_else(|| Error::config(pop_line, format!("bad sublevel in `{t}`")))?,
        ),
        Some(t) => PopulationModel::Explicit(
            t.split(',')
                .map(|x| {
                    parse_f64(x.trim())
                        .ok_or_else(|| Error::config(pop_line, format!("bad population `{}`", x.trim())))
                })
                .collect::<Result<_>>()?,
        ),
    };
    if let (Some(line), false) = (sp_eff_given, matches!(s.populations, PopulationModel::Sp(_))) {
        return Err(Error::config(line, "sp_efficiency only applies with populations = sp"));
    }
    e.populations = s
        .populations
        .resolve(e.fg)
        .map_err(|err| Error::config(pop_line, err.to_string()))?;
    e.validate().map_err(|err| Error::config(0, format!("[ensemble]: {err}")))?;

    s.blur = match blur_mode {
        None => None,
        Some((mode, line)) => match mode.as_str() {
            "none" => None,
            "ballistic" => {
                let temperature = temperature.unwrap_or(200e-6);
                Some(MotionModel::Ballistic {
                    temperature,
                    mass: M_RB85,
                    velocity_override: velocity,
                })
            }
            "diffusive" => Some(MotionModel::Diffusive {
                coefficient: diffusion
                    .ok_or_else(|| Error::config(line, "diffusive blur needs diffusion_m2_per_s"))?,
            }),
            other => return Err(Error::config(line, format!("unknown blur mode `{other}`"))),
        },
    };
    if let Some(m) = &s.blur {
        m.validate().map_err(|err| Error::config(0, err.to_string()))?;
    }

    if times.is_empty() {
        return Err(Error::config(times_line, "no storage times given ([times] section)"));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    if times[0] < 0.0 {
        return Err(Error::config(times_line, "storage times must be non-negative"));
    }
    s.times = times;
    let t_max = *s.times.last().unwrap_or(&0.0);

    if segments.is_empty() {
        segments.insert(0, (Some(s.coils.keys().cloned().collect()), Vec3::zeros(), None, 0));
    }
    let count = segments.len();
    let mut start = 0.0;
    for (k, (idx, (coils, bias, duration, line))) in segments.into_iter().enumerate() {
        if idx != k {
            return Err(Error::config(line, format!("schedule segments must be numbered 0..{count} without gaps")));
        }
        let coils = coils.unwrap_or_default();
        for c in &coils {
            if !s.coils.contains_key(c) {
                return Err(Error::config(line, format!("segment {idx} uses undefined coil `{c}`")));
            }
        }
        let duration = match duration {
            Some(d) => d,
            None if k + 1 == count => {
                let d = t_max - start;
                if !(d > 0.0) {
                    return Err(Error::config(line, format!("segment {idx} would have no duration")));
                }
                d
            }
            None => return Err(Error::config(line, format!("segment {idx} needs duration_us"))),
        };
        start += duration;
        s.schedule.push(SegmentSpec { coils, bias, duration });
    }
    if start < t_max * (1.0 - 1e-12) {
        return Err(Error::config(
            0,
            format!("schedule covers {:.6e} s but times reach {t_max:.6e} s", start),
        ));
    }

    s.pattern
        .validate()
        .map_err(|err| Error::config(0, format!("[pattern]: {err}")))?;
    Ok(s)
}

fn parse_coil(section: &Section) -> Result<CoilSpec> {
    let mut kind = None;
    let mut coil = CoilSpec {
        kind: CoilKind::AntiHelmholtz,
        center: Vec3::zeros(),
        axis: Vec3::x(),
        radius: 0.1,
        separation: 0.15,
        turns: 50,
        current: 1.0,
        calibrate: None,
        calibration: CalibrationConvention::VolumeAverage,
        segments: DEFAULT_SEGMENTS,
    };
    let mut separation_given = false;
    for v in (SectionReader { section, table: COIL_KEYS }).values()? {
        match v.base {
            "kind" => {
                kind = Some(match v.text {
                    "anti-helmholtz" => CoilKind::AntiHelmholtz,
                    "helmholtz" => CoilKind::Helmholtz,
                    "loop" => CoilKind::Loop,
                    other => return Err(v.err(format!("unknown coil kind `{other}`"))),
                })
            }
            "center" => coil.center = v.vec3()?,
            "axis" => coil.axis = parse_axis(&v)?,
            "radius" => coil.radius = v.positive()?,
            "separation" => {
                coil.separation = v.positive()?;
                separation_given = true;
            }
            "turns" => {
                coil.turns = u32::try_from(v.usize()?)
                    .ok()
                    .filter(|&t| t > 0)
                    .ok_or_else(|| v.err("turns must be a positive integer"))?
            }
            "current" => coil.current = v.f64()?,
            "calibrate" => coil.calibrate = Some(v.positive()?),
            "calibration" => {
                coil.calibration = match v.text {
                    "average" => CalibrationConvention::VolumeAverage,
                    "maximum" => CalibrationConvention::Maximum,
                    other => return Err(v.err(format!("unknown convention `{other}`"))),
                }
            }
            "segments" => {
                coil.segments = v.usize()?;
                if coil.segments < 3 {
                    return Err(v.err("need at least 3 segments"));
                }
            }
            _ => unreachable!(),
        }
    }
    coil.kind = kind.ok_or_else(|| Error::config(section.line, "coil needs a `kind`"))?;
    if coil.kind == CoilKind::Helmholtz && !separation_given {
        coil.separation = coil.radius;
    }
    if coil.calibrate.is_some() && coil.current == 0.0 {
        return Err(Error::config(section.line, "cannot calibrate a coil with zero current"));
    }
    Ok(coil)
}

fn fmt_vec(v: &Vec3) -> String {
    format!("{:?}, {:?}, {:?}", v.x, v.y, v.z)
}

/// Canonical config text; parsing it yields an equal [`Scenario`].
/// With `include_dir = false` the output directory line is left out.
pub fn echo_config(s: &Scenario, include_dir: bool) -> String {
    let mut o = String::new();
    let _ = writeln!(o, "# resolved scenario; all quantities in SI units\n");
    let _ = writeln!(o, "[pattern]");
    match &s.pattern.source {
        PatternSource::Builtin(b) => {
            let _ = writeln!(o, "builtin = {}", b.name());
        }
        PatternSource::File(p) => {
            let _ = writeln!(o, "file = {}", p.display());
        }
    }
    let _ = writeln!(o, "diameter_m = {:?}", s.pattern.physical_diameter);
    let _ = writeln!(o, "scale = {:?}\n", s.pattern.scale_factor);

    let _ = writeln!(o, "[optics]");
    let _ = writeln!(o, "grid = {}", s.optics.grid);
    let _ = writeln!(o, "pitch_m = {:?}", s.optics.pitch);
    let _ = writeln!(o, "wavelength_m = {:?}", s.optics.wavelength);
    let _ = writeln!(o, "focal_length_m = {:?}\n", s.optics.focal_length);

    let e = &s.ensemble;
    let _ = writeln!(o, "[ensemble]");
    let _ = writeln!(o, "sigma_m = {:?}", e.sigma);
    let _ = writeln!(o, "r_a_m = {:?}", e.r_a);
    let _ = writeln!(o, "n_z = {}", e.n_z);
    let pz = match e.pz_model {
        PzModel::Gaussian => "gaussian",
        PzModel::Uniform => "uniform",
    };
    let _ = writeln!(o, "pz_model = {pz}");
    let _ = writeln!(o, "fg = {}", format_half_int(e.fg));
    let _ = writeln!(o, "fs = {}", format_half_int(e.fs));
    let _ = writeln!(o, "fe = {}", format_half_int(e.fe));
    let _ = writeln!(o, "g_g = {:?}", e.g_g);
    let _ = writeln!(o, "g_s = {:?}", e.g_s);
    let _ = writeln!(o, "alpha = {}", e.alpha.value());
    let _ = writeln!(o, "beta = {}", e.beta.value());
    match &s.populations {
        PopulationModel::Uniform => {
            let _ = writeln!(o, "populations = uniform");
        }
        PopulationModel::Sp(eff) => {
            let _ = writeln!(o, "populations = sp");
            let _ = writeln!(o, "sp_efficiency = {eff:?}");
        }
        PopulationModel::Pure(m) => {
            let _ = writeln!(o, "populations = pure:{}", format_half_int(*m));
        }
        PopulationModel::Explicit(p) => {
            let list: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
            let _ = writeln!(o, "populations = {}", list.join(", "));
        }
    }
    let _ = writeln!(o, "z_sum = {}", s.z_sum.name());
    match &s.blur {
        None => {
            let _ = writeln!(o, "blur = none");
        }
        Some(MotionModel::Ballistic {
            temperature,
            velocity_override,
            ..
        }) => {
            let _ = writeln!(o, "blur = ballistic");
            let _ = writeln!(o, "temperature_k = {temperature:?}");
            if let Some(v) = velocity_override {
                let _ = writeln!(o, "velocity_m_per_s = {v:?}");
            }
        }
        Some(MotionModel::Diffusive { coefficient }) => {
            let _ = writeln!(o, "blur = diffusive");
            let _ = writeln!(o, "diffusion_m2_per_s = {coefficient:?}");
        }
    }
    o.push('\n');

    for (name, c) in &s.coils {
        let _ = writeln!(o, "[coils.{name}]");
        let _ = writeln!(o, "kind = {}", c.kind.name());
        let _ = writeln!(o, "center_m = {}", fmt_vec(&c.center));
        let _ = writeln!(o, "axis = {}", fmt_vec(&c.axis));
        let _ = writeln!(o, "radius_m = {:?}", c.radius);
        let _ = writeln!(o, "separation_m = {:?}", c.separation);
        let _ = writeln!(o, "turns = {}", c.turns);
        let _ = writeln!(o, "current_a = {:?}", c.current);
        if let Some(target) = c.calibrate {
            let _ = writeln!(o, "calibrate_tesla = {target:?}");
        }
        let conv = match c.calibration {
            CalibrationConvention::VolumeAverage => "average",
            CalibrationConvention::Maximum => "maximum",
        };
        let _ = writeln!(o, "calibration = {conv}");
        let _ = writeln!(o, "segments = {}\n", c.segments);
    }

    let _ = writeln!(o, "[schedule]");
    for (i, seg) in s.schedule.iter().enumerate() {
        let coils = if seg.coils.is_empty() {
            "none".to_string()
        } else {
            seg.coils.join(", ")
        };
        let _ = writeln!(o, "seg{i}.coils = {coils}");
        let _ = writeln!(o, "seg{i}.bias_tesla = {}", fmt_vec(&seg.bias));
        let _ = writeln!(o, "seg{i}.duration_s = {:?}", seg.duration);
    }
    o.push('\n');

    let _ = writeln!(o, "[times]");
    let list: Vec<String> = s.times.iter().map(|t| format!("{t:?}")).collect();
    let _ = writeln!(o, "list_s = {}\n", list.join(", "));

    let _ = writeln!(o, "[output]");
    if include_dir {
        let _ = writeln!(o, "dir = {}", s.output.dir.display());
    }
    let _ = writeln!(o, "frames = {}", s.output.frames);
    let _ = writeln!(o, "slice_frames = {}", s.output.slice_frames);
    let _ = writeln!(o, "seed = {}", s.output.seed);
    let reference = match s.output.reference {
        ReferenceModel::RetrievedT0 => "retrieved_t0",
        ReferenceModel::Pattern => "pattern",
    };
    let _ = writeln!(o, "reference = {reference}");
    match &s.output.background {
        BackgroundSpec::Uniform => {
            let _ = writeln!(o, "background = uniform");
        }
        BackgroundSpec::File(p) => {
            let _ = writeln!(o, "background = {}", p.display());
        }
    }
    o
}
