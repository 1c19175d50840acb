use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dualcam::codec::{load_png, save_png};
use dualcam::config::{PipelineConfig, CONFIG_FILE};
use dualcam::manifest::{Manifest, Stage};
use dualcam::pipeline;
use dualcam_core::protocol::Protocol;

#[derive(Parser)]
#[command(name = "dualcam", version, about = "Wide/telephoto dual-camera dataset toolkit")]
struct Cli {
    /// Dataset root holding manifest.jsonl.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,
    /// TOML config; defaults to <root>/dualcam.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProtocolArg {
    Realistic,
    Theoretical,
}

#[derive(Subcommand)]
enum Cmd {
    /// Add capture folders (wide.png, tele.png, gt.png) from a session directory.
    Ingest { dir: PathBuf },
    /// Run scale, flow and colour alignment.
    Calibrate {
        #[arg(long = "id", conflicts_with = "all")]
        ids: Vec<String>,
        #[arg(long)]
        all: bool,
    },
    /// Print per-stage counts.
    Stats,
    /// Assign train/test to accepted entries.
    Split {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "train-frac")]
        train_frac: Option<f64>,
    },
    /// Write bicubic down/up-sampled wide inputs for the theoretical protocol.
    Degrade {
        #[arg(long, default_value_t = 4)]
        factor: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score method outputs (<dir>/<id>.png) against the calibrated GT.
    Eval {
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        #[arg(long, required = true, num_args = 1..)]
        outputs: Vec<PathBuf>,
    },
    /// Run the edge-guided fusion baseline on calibrated, non-rejected entries.
    Fuse {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Start the review service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Directory with the built UI bundle.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<PipelineConfig> {
    match &cli.config {
        Some(p) => Ok(PipelineConfig::load(p)?),
        None => {
            let p = cli.root.join(CONFIG_FILE);
            if p.is_file() {
                Ok(PipelineConfig::load(&p)?)
            } else {
                Ok(PipelineConfig::default())
            }
        }
    }
}

fn print_stats(r: &pipeline::StageReport) {
    println!("acquired    {}", r.acquired);
    println!("calibrated  {}", r.calibrated);
    println!("annotated   {}", r.annotated);
    println!("accepted    {}", r.accepted);
    println!("rejected    {}", r.rejected);
    for (reason, n) in &r.rejected_by_reason {
        println!("  {reason:<10}{n}");
    }
    println!("train       {}", r.train);
    println!("test        {}", r.test);
}

fn fuse(manifest: &Manifest, cfg: &PipelineConfig, out: &Path) -> anyhow::Result<usize> {
    let mut n = 0;
    for e in manifest.entries() {
        if e.stage.rank() < Stage::Calibrated.rank() || e.stage == Stage::Rejected {
            continue;
        }
        let (Some(w), Some(t)) = (&e.paths.wide_cal, &e.paths.tele_cal) else { continue };
        let wide = load_png(&manifest.resolve(w))?;
        let tele = load_png(&manifest.resolve(t))?;
        match pipeline::fuse_pair(&wide, &tele, cfg) {
            Ok((fused, conf)) => {
                save_png(&fused, &out.join(format!("{}.png", e.id)))?;
                save_png(&conf, &out.join("confidence").join(format!("{}.png", e.id)))?;
                n += 1;
            }
            Err(err) => eprintln!("warning: {}: fusion failed: {err}", e.id),
        }
    }
    Ok(n)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = load_config(&cli)?;
    let root = cli.root.clone();
    match cli.cmd {
        Cmd::Ingest { dir } => {
            let mut m = Manifest::open(&root)?;
            let r = pipeline::ingest(&mut m, &dir).with_context(|| format!("ingest {}", dir.display()))?;
            for (d, why) in &r.skipped {
                eprintln!("warning: skipped {d}: {why}");
            }
            println!("added {} existing {} skipped {}", r.added.len(), r.existing.len(), r.skipped.len());
            Ok(r.warnings() == 0)
        }
        Cmd::Calibrate { ids, all } => {
            if ids.is_empty() && !all {
                bail!("pass --id <ID> (repeatable) or --all");
            }
            let mut m = Manifest::open(&root)?;
            let r = pipeline::calibrate(&mut m, &ids, &cfg)?;
            for (id, err) in &r.failed {
                eprintln!("warning: {id}: {err}");
            }
            println!("calibrated {} failed {}", r.calibrated.len(), r.failed.len());
            Ok(r.failed.is_empty())
        }
        Cmd::Stats => {
            print_stats(&pipeline::stage_report(&Manifest::open(&root)?));
            Ok(true)
        }
        Cmd::Split { seed, train_frac } => {
            let mut m = Manifest::open(&root)?;
            let r = pipeline::stats_and_split(
                &mut m,
                seed.unwrap_or(cfg.split_seed),
                train_frac.unwrap_or(cfg.train_fraction),
            )?;
            print_stats(&r);
            Ok(true)
        }
        Cmd::Degrade { factor, out } => {
            let m = Manifest::open(&root)?;
            let out = out.unwrap_or_else(|| root.join(format!("degraded_x{factor}")));
            let done = pipeline::degrade_entries(&m, factor, &out)?;
            println!("degraded {} into {}", done.len(), out.display());
            Ok(true)
        }
        Cmd::Eval { protocol, outputs } => {
            let m = Manifest::open(&root)?;
            let protocol = match protocol {
                ProtocolArg::Realistic => Protocol::Realistic,
                ProtocolArg::Theoretical => Protocol::Theoretical,
            };
            println!("{:<24} {:>9} {:>7}", "method", "PSNR", "SSIM");
            let mut clean = true;
            for dir in &outputs {
                match pipeline::evaluate(&m, dir, protocol) {
                    Ok(row) => {
                        println!("{}", row.table_line());
                        for d in &row.diagnostics {
                            eprintln!("warning: {d}");
                            clean = false;
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {}: {e}", dir.display());
                        clean = false;
                    }
                }
            }
            Ok(clean)
        }
        Cmd::Fuse { out } => {
            let m = Manifest::open(&root)?;
            let out = out.unwrap_or_else(|| root.join("fused"));
            let n = fuse(&m, &cfg, &out)?;
            println!("fused {n} into {}", out.display());
            Ok(true)
        }
        Cmd::Serve { port, ui } => {
            let ui = ui.or_else(|| Some(root.join("ui")).filter(|p| p.is_dir()));
            tokio::runtime::Runtime::new()?.block_on(dualcam::service::serve(&root, port, ui.as_deref()))?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        // completed with warnings
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
