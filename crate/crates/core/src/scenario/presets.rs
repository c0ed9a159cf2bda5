//! Bundled scenarios. Some presets expand into several runs that share an
//! output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{parse_config_str, Scenario};
use super::run::{commit_dir, content_hash, format_sig6, simulate, staging_dir, write_run, RunResult, MANIFEST_NAME};
use crate::constants::GAUSS;
use crate::error::{Error, Result, ResultExt};

pub const PRESET_NAMES: &[&str] = &["fig2b", "fig3a", "fig3b", "fig3c", "fig4_nosp", "fig4_sp", "fig5"];

pub const FIG2B_SCALES: [f64; 3] = [1.0, 0.75, 0.5];

/// Bias magnitudes (gauss) of the fig3b sweep.
pub const FIG3B_SWEEP_GAUSS: [f64; 14] = [
    0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.97, 1.0, 1.1, 1.2,
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2b" => include_str!("../../presets/fig2b.cfg"),
        "fig3a" => include_str!("../../presets/fig3a.cfg"),
        "fig3b" => include_str!("../../presets/fig3b.cfg"),
        "fig3c" => include_str!("../../presets/fig3c.cfg"),
        "fig4_nosp" => include_str!("../../presets/fig4_nosp.cfg"),
        "fig4_sp" => include_str!("../../presets/fig4_sp.cfg"),
        "fig5" => include_str!("../../presets/fig5.cfg"),
        _ => return None,
    })
}

/// The preset's base scenario, with `out/<name>` as output directory.
pub fn preset_scenario(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| {
        Error::config(0, format!("unknown preset `{name}` (known: {})", PRESET_NAMES.join(", ")))
    })?;
    let mut s = parse_config_str(text, Path::new(".")).context(|| format!("preset {name}"))?;
    s.output.dir = Path::new("out").join(name);
    Ok(s)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PresetRun {
    /// Subdirectory name; empty for single-run presets.
    pub label: String,
    pub scenario: Scenario,
}

/// Expands a preset into its runs, after applying `adjust` to the base
/// scenario (grid size, z-summation, frame options, ...).
pub fn preset_runs(name: &str, adjust: impl Fn(Scenario) -> Scenario) -> Result<Vec<PresetRun>> {
    let base = adjust(preset_scenario(name)?);
    let single = |scenario| vec![PresetRun { label: String::new(), scenario }];
    Ok(match name {
        "fig2b" => FIG2B_SCALES
            .iter()
            .map(|&f| {
                let mut s = base.clone();
                s.pattern.scale_factor = f;
                PresetRun {
                    label: format!("scale_{f:.2}"),
                    scenario: s,
                }
            })
            .collect(),
        "fig3b" => {
            let dir = base.schedule[0].bias.normalize();
            let mut bias: Vec<f64> = FIG3B_SWEEP_GAUSS.to_vec();
            bias.sort_by(f64::total_cmp);
            bias.into_iter()
                .map(|g| {
                    let mut s = base.clone();
                    s.schedule[0].bias = dir * (g * GAUSS);
                    PresetRun {
                        label: format!("bias_{g:.2}G"),
                        scenario: s,
                    }
                })
                .collect()
        }
        "fig5" => {
            let mut control = base.clone();
            for seg in &mut control.schedule {
                seg.coils.clear();
            }
            vec![
                PresetRun {
                    label: "switched".into(),
                    scenario: base,
                },
                PresetRun {
                    label: "control".into(),
                    scenario: control,
                },
            ]
        }
        _ => single(base),
    })
}

/// `run,t_us,S,S_r,efficiency` over all runs of a multi-run preset.
pub fn summary_csv(results: &[(String, RunResult)]) -> String {
    let mut out = String::from("run,t_us,S,S_r,efficiency\n");
    for (label, r) in results {
        for rec in &r.records {
            let _ = writeln!(
                out,
                "{label},{},{},{},{}",
                format_sig6(rec.t * 1e6),
                format_sig6(rec.s),
                format_sig6(rec.s_r),
                format_sig6(rec.efficiency)
            );
        }
    }
    out
}

/// Runs every expanded run of the preset and writes them under `dir`.
pub fn run_preset(
    name: &str,
    dir: &Path,
    adjust: impl Fn(Scenario) -> Scenario,
) -> Result<Vec<(String, RunResult)>> {
    let runs = preset_runs(name, adjust)?;
    let mut results = Vec::with_capacity(runs.len());
    for run in &runs {
        let r = simulate(&run.scenario).context(|| format!("preset {name} {}", run.label))?;
        results.push((run.label.clone(), r));
    }
    let staging = staging_dir(dir)?;
    let written = (|| -> Result<()> {
        if let [only] = &runs[..] {
            if only.label.is_empty() {
                return write_run(&only.scenario, &results[0].1, &staging);
            }
        }
        let mut manifest = format!("preset = {name}\n[runs]\n");
        for (run, (label, result)) in runs.iter().zip(&results) {
            let sub = staging.join(label);
            fs::create_dir(&sub).map_err(|e| Error::io(&sub, e))?;
            write_run(&run.scenario, result, &sub)?;
            let _ = writeln!(manifest, "{label} = {}", content_hash(&run.scenario)?);
        }
        let summary = staging.join("summary.csv");
        fs::write(&summary, summary_csv(&results)).map_err(|e| Error::io(&summary, e))?;
        let m = staging.join(MANIFEST_NAME);
        fs::write(&m, manifest).map_err(|e| Error::io(&m, e))
    })();
    if let Err(e) = written {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    commit_dir(&staging, dir)?;
    Ok(results)
}
