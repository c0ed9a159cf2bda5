use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dspsim_core::constants::{PhysicalConstants, GAUSS};
use dspsim_core::error::{Error, Result};
use dspsim_core::imageio::read_image;
use dspsim_core::metrics::{background_similarity, relative_similarity, similarity, BackgroundModel};
use dspsim_core::scenario::{
    add_noise, field_map, parse_config, read_observed, run_preset, run_scenario, FitModel, Scenario,
};
use dspsim_core::spinwave::ZSum;

#[derive(Parser)]
#[command(name = "dspsim", version, about = "Dephasing of stored optical patterns in a cold-atom memory")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Output directory (overrides the config).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Summation over z-slices.
    #[arg(long, global = true, value_enum)]
    z_sum: Option<ZSumArg>,
    /// Write retrieved frames.
    #[arg(long, global = true, overrides_with = "no_frames")]
    frames: bool,
    /// Do not write frames.
    #[arg(long, global = true, overrides_with = "frames")]
    no_frames: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZSumArg {
    Coherent,
    Incoherent,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        res: Resolution,
    },
    /// Run a bundled scenario (fig2b, fig3a, fig3b, fig3c, fig4_nosp, fig4_sp, fig5).
    Preset {
        name: String,
        #[command(flatten)]
        res: Resolution,
    },
    /// Sample the field of one schedule segment on a cubic lattice.
    FieldMap {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        segment: usize,
        /// Half-width of the cube (default 3 sigma).
        #[arg(long, value_name = "METRES")]
        extent_m: Option<f64>,
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// Fit the coil field strength to an observed efficiency curve.
    Fit {
        config: PathBuf,
        observed: PathBuf,
        #[arg(long, value_name = "LO,HI", default_value = "0,0.5", value_parser = parse_bracket)]
        bracket_gauss: (f64, f64),
        #[arg(long, default_value_t = 1e-5)]
        tol_gauss: f64,
        /// Relative Gaussian noise added to the observations (seeded by the config).
        #[arg(long, value_name = "FRACTION")]
        noise: Option<f64>,
        #[command(flatten)]
        res: Resolution,
    },
    /// Similarity of two images (PGM or PNG).
    Similarity { a: PathBuf, b: PathBuf },
    /// Print the physical constants used.
    Constants,
}

#[derive(Args)]
struct Resolution {
    /// Override the grid size, keeping the field of view.
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Override the number of z-slices.
    #[arg(long, value_name = "K")]
    n_z: Option<usize>,
}

fn parse_bracket(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number `{a}`"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number `{b}`"))?;
    Ok((lo, hi))
}

fn usage(message: impl Into<String>) -> Error {
    Error::Config {
        line: 0,
        message: message.into(),
    }
}

impl Resolution {
    fn check(&self) -> Result<()> {
        if let Some(n) = self.grid {
            if n < 4 || !n.is_power_of_two() {
                return Err(usage("--grid must be a power of two >= 4"));
            }
        }
        if let Some(k) = self.n_z {
            if k < 3 || k % 2 == 0 {
                return Err(usage("--n-z must be odd and >= 3"));
            }
        }
        Ok(())
    }
}

impl Global {
    fn apply(&self, mut s: Scenario, res: &Resolution) -> Scenario {
        if let Some(z) = self.z_sum {
            s.z_sum = match z {
                ZSumArg::Coherent => ZSum::Coherent,
                ZSumArg::Incoherent => ZSum::Incoherent,
            };
        }
        if self.frames {
            s.output.frames = true;
        }
        if self.no_frames {
            s.output.frames = false;
        }
        if let Some(n) = res.grid {
            s = s.with_grid(n);
        }
        if let Some(k) = res.n_z {
            s = s.with_n_z(k);
        }
        s
    }
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate { config, res } => {
            res.check()?;
            let s = g.apply(parse_config(config)?, res);
            let dir = g.out.clone().unwrap_or_else(|| s.output.dir.clone());
            let r = run_scenario(&s, &dir)?;
            println!("wrote {} time points to {}", r.records.len(), dir.display());
        }
        Command::Preset { name, res } => {
            let dir = g
                .out
                .clone()
                .unwrap_or_else(|| Path::new("out").join(name));
            res.check()?;
            let results = run_preset(name, &dir, |s| g.apply(s, res))?;
            println!("wrote {} run(s) to {}", results.len(), dir.display());
        }
        Command::FieldMap {
            config,
            segment,
            extent_m,
            points,
        } => {
            let s = parse_config(config)?;
            let extent = extent_m.unwrap_or(3.0 * s.ensemble.sigma);
            let map = field_map(&s, *segment, extent, *points)?;
            let csv = map.to_csv();
            match &g.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                    let path = dir.join("field_map.csv");
                    std::fs::write(&path, csv).map_err(|e| io_error(&path, e))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{csv}"),
            }
        }
        Command::Fit {
            config,
            observed,
            bracket_gauss,
            tol_gauss,
            noise,
            res,
        } => {
            res.check()?;
            let s = g.apply(parse_config(config)?, res);
            let mut obs = read_observed(observed)?;
            if let Some(frac) = noise {
                obs = add_noise(&obs, *frac, s.output.seed)?;
            }
            let model = FitModel::new(&s)?;
            let report = model.fit(
                &obs,
                (bracket_gauss.0 * GAUSS, bracket_gauss.1 * GAUSS),
                tol_gauss * GAUSS,
            )?;
            let text = report.to_text();
            print!("{text}");
            if let Some(dir) = &g.out {
                std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
                let path = dir.join("fit_report.txt");
                std::fs::write(&path, &text).map_err(|e| io_error(&path, e))?;
            }
        }
        Command::Similarity { a, b } => {
            let ia = read_image(a)?;
            let ib = read_image(b)?;
            if (ia.width, ia.height) != (ib.width, ib.height) {
                return Err(Error::InvalidArgument(format!(
                    "image sizes differ: {}x{} vs {}x{}",
                    ia.width, ia.height, ib.width, ib.height
                )));
            }
            let s = similarity(&ia.data, &ib.data)?;
            let s_bg = background_similarity(&ia.data, &BackgroundModel::Uniform)?;
            println!("S = {s:.6}");
            println!("S_bg = {s_bg:.6}");
            println!("S_r = {:.6}", relative_similarity(s, s_bg)?);
        }
        Command::Constants => print!("{}", PhysicalConstants::standard().to_csv()),
    }
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
