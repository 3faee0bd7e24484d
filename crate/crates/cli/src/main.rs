use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use salbench::metrics::MetricKind;
use salbench::mosaic::{self, DatasetConfig, MosaicManifest, OtherClassPolicy};
use salbench::reliability::AlphaLevel;
use salbench::report::{self, ALPHA_FILE, ERRORS_FILE, RECORDS_FILE, RHO_FILE, SUMMARY_FILE};
use salbench::saliency;
use salbench::synthetic;

#[derive(Parser)]
#[command(name = "salbench", version, about = "Mosaic-based saliency map evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample 2x2 mosaics from class folders and write rasters plus manifest.json.
    BuildMosaics {
        /// Directory with one sub-folder of images per class.
        #[arg(long)]
        classes: PathBuf,
        /// Target class; repeat for several targets.
        #[arg(long = "target", required = true)]
        targets: Vec<String>,
        /// Mosaics per target class.
        #[arg(long)]
        count: usize,
        /// `fixed:<class>`, `random` (distinct other classes) or `single` (one other class).
        #[arg(long)]
        policy: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "mosaics")]
        name: String,
        #[arg(long, default_value_t = mosaic::CELL_PIXELS)]
        cell_pixels: u32,
    },
    /// Check saliency files against the registry and manifest.
    ValidateSaliency {
        dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Write synthetic oracle maps for every mosaic.
    Synth {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated modes: `p=<prob>`, `perfect`, `inverted`, `noise`, `positive`.
        #[arg(long)]
        methods: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tally every saliency map and write records.csv.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        saliency: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Krippendorff's alpha and Spearman's rho tables from records.csv.
    Reliability {
        #[arg(long)]
        records: PathBuf,
        /// Comma-separated metric names; defaults to all seven.
        #[arg(long)]
        metrics: Option<String>,
        #[arg(long, default_value = "ordinal")]
        level: AlphaLevel,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per method and metric distribution statistics (summary.csv).
    Report {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_metrics(list: Option<&str>) -> Result<Vec<MetricKind>> {
    match list {
        None => Ok(MetricKind::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.parse::<MetricKind>().map_err(anyhow::Error::msg))
            .collect(),
    }
}

fn create_dir(dir: &PathBuf) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildMosaics {
            classes,
            targets,
            count,
            policy,
            seed,
            out,
            name,
            cell_pixels,
        } => {
            let policy: OtherClassPolicy = policy.parse()?;
            let config = DatasetConfig {
                dataset_name: name,
                classes_dir: classes,
                targets: targets.into_iter().map(|t| (t, count)).collect(),
                policy,
                global_seed: seed,
                out_dir: out.clone(),
                cell_pixels,
            };
            let manifest = mosaic::build_dataset(&config)?;
            println!("{} mosaics written to {}", manifest.mosaics.len(), out.display());
        }
        Command::ValidateSaliency { dir, manifest } => {
            let manifest = MosaicManifest::read(&manifest)?;
            let findings = saliency::validate_saliency_dir(&dir, &manifest);
            for f in &findings {
                println!("{}: {}", f.path.display(), f.message);
            }
            if !findings.is_empty() {
                eprintln!("{} finding(s)", findings.len());
                return Ok(ExitCode::FAILURE);
            }
            println!("ok");
        }
        Command::Synth {
            manifest,
            methods,
            seed,
            out,
        } => {
            let manifest = MosaicManifest::read(&manifest)?;
            let methods = synthetic::parse_methods(&methods)?;
            if methods.is_empty() {
                bail!("no methods given");
            }
            synthetic::gen_method_family(&manifest, &methods, seed, &out)?;
            println!(
                "{} maps written to {}",
                manifest.mosaics.len() * methods.len(),
                out.display()
            );
        }
        Command::Evaluate { manifest, saliency, out } => {
            let manifest = MosaicManifest::read(&manifest)?;
            let registry = saliency::read_registry(&saliency)?;
            let outcome = report::evaluate(&manifest, &saliency, &registry);
            create_dir(&out)?;
            report::write_records_file(&out.join(RECORDS_FILE), &outcome.records)?;
            report::write_errors_file(&out.join(ERRORS_FILE), &outcome.errors)?;
            println!(
                "{} records, {} errors, {} absent",
                outcome.records.len(),
                outcome.errors.len(),
                outcome.absent.len()
            );
            if !outcome.is_clean() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Reliability {
            records,
            metrics,
            level,
            out,
        } => {
            let records = report::read_records_file(&records)?;
            let metrics = parse_metrics(metrics.as_deref())?;
            let rel = report::reliability_report(&records, &metrics, level)?;
            rel.write(&out)?;
            for row in &rel.alpha.rows {
                match row.alpha {
                    Some(a) => println!("{:<20} alpha = {a:.4} ({} methods)", row.metric, row.methods.len()),
                    None => println!("{:<20} alpha = undefined", row.metric),
                }
            }
            info!("wrote {} and {}", ALPHA_FILE, RHO_FILE);
        }
        Command::Report { records, out } => {
            let records = report::read_records_file(&records)?;
            let rows = report::summarize(&records)?;
            create_dir(&out)?;
            report::write_summary_file(&out.join(SUMMARY_FILE), &rows)?;
            println!("{} summary rows", rows.len());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
