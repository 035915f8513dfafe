use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use coloc_core::pipeline::{
    evaluate, run, synth_dataset, visualize, GroundTruth, LinkUnits, Manifest, RunConfig, SynthSpec,
};

#[derive(Parser)]
#[command(name = "coloc", version, about = "Multi-cue video object co-localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Units {
    FrameRelative,
    Pixels,
}

#[derive(Subcommand)]
enum Command {
    /// Localize the common object in every video of a manifest.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON run configuration; flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Process every n-th frame and interpolate the rest.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long, value_enum)]
        link_units: Option<Units>,
        /// Also write masks and co-saliency maps.
        #[arg(long)]
        save_intermediates: bool,
    },
    /// CorLoc of written results against ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Ground-truth file overriding boxes in the manifest.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate a synthetic dataset with known boxes.
    Synth {
        /// JSON generator settings; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw predicted and ground-truth boxes onto the frames.
    Visualize {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("COLOC_THREADS") {
        let n: usize = v.parse().with_context(|| format!("COLOC_THREADS={v:?}"))?;
        if n == 0 {
            bail!("COLOC_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    init_threads()?;
    match Cli::parse().command {
        Command::Run {
            manifest,
            out,
            config,
            lambda,
            seed,
            stride,
            link_units,
            save_intermediates,
        } => {
            let mut cfg: RunConfig = match config {
                Some(p) => read_json(&p)?,
                None => RunConfig::default(),
            };
            if let Some(l) = lambda {
                cfg.lambda = l;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = stride {
                cfg.frame_sampling_stride = s;
            }
            if let Some(u) = link_units {
                cfg.link_units = match u {
                    Units::FrameRelative => LinkUnits::FrameRelative,
                    Units::Pixels => LinkUnits::Pixels,
                };
            }
            cfg.save_intermediates |= save_intermediates;
            let m = Manifest::load(&manifest)?;
            let output = run(&m, &cfg, &out)?;
            info!(
                "{} videos localized, {} failed; results in {}",
                output.results.len(),
                output.failures.len(),
                out.display()
            );
            for f in &output.failures {
                eprintln!("failed: {} ({}): {}", f.video_id, f.stage, f.message);
            }
        }
        Command::Eval {
            results,
            manifest,
            ground_truth,
            json,
        } => {
            let mut m = Manifest::load(&manifest)?;
            if let Some(p) = ground_truth {
                m.apply_ground_truth(&GroundTruth::load(&p)?);
            }
            let report = evaluate(&results, &m)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{:<24} {:>8} {:>8} {:>8}", "category", "frames", "correct", "corloc");
                for (cat, s) in &report.categories {
                    println!(
                        "{:<24} {:>8} {:>8} {:>8.3}",
                        cat, s.annotated_frames, s.correct_frames, s.corloc
                    );
                }
                println!("average {:.3}  overall {:.3}", report.average, report.overall);
                for v in &report.missing_videos {
                    println!("missing results: {v}");
                }
            }
        }
        Command::Synth { spec, out } => {
            let spec: SynthSpec = match spec {
                Some(p) => read_json(&p)?,
                None => SynthSpec::default(),
            };
            let o = synth_dataset(&spec, &out)?;
            info!(
                "wrote {} videos; manifest {}",
                o.manifest.videos.len(),
                o.manifest_path.display()
            );
        }
        Command::Visualize { results, out } => {
            let s = visualize(&results, &out)?;
            info!("wrote {} overlays, skipped {}", s.written, s.skipped);
        }
    }
    Ok(())
}
