use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;
use radarnet::ela::{FeatureSource, FeatureTable};
use radarnet::manifest::CENSUS_TILES;
use radarnet_cli::pipeline;

#[derive(Parser)]
#[command(
    name = "radarnet",
    version,
    about = "Radar network coverage benchmark workbench"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic instance census and its manifest.
    GenInstances {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = CENSUS_TILES)]
        tiles: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the algorithm x instance x seed grid; complete logs are skipped.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// `all` or a comma-separated list of portfolio names.
        #[arg(long, default_value = "all")]
        algorithms: String,
        #[arg(long, default_value_t = 2_500)]
        budget: u64,
        /// `a..b`, `a..=b` or a comma-separated list.
        #[arg(long, default_value = "0..30")]
        seeds: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        physics: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Extract landscape features for every manifest instance.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = parse_source)]
        source: FeatureSource,
        #[arg(long, default_value_t = 100)]
        reps: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        physics: Option<PathBuf>,
    },
    /// Train and evaluate selectors on random splits.
    Select {
        #[arg(long)]
        logs: PathBuf,
        /// Feature CSV files; every source they contain gets a selector.
        #[arg(long = "features")]
        features: Vec<PathBuf>,
        #[arg(long, default_value_t = 500)]
        budget: u64,
        #[arg(long, default_value_t = 5)]
        splits: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// SBS stability splits; 0 disables the count.
        #[arg(long, default_value_t = 1_000)]
        stability_splits: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise KS tests per instance at a fixed budget.
    Stats {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long, default_value_t = 500)]
        budget: u64,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve one instance over HTTP.
    Serve {
        /// Grid file (plain ASCII format).
        #[arg(long, conflicts_with = "manifest")]
        grid: Option<PathBuf>,
        #[arg(long, requires = "instance")]
        manifest: Option<PathBuf>,
        /// Instance name inside the manifest.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long)]
        physics: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_source(s: &str) -> Result<FeatureSource, String> {
    s.parse()
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenInstances { seed, tiles, out } => {
            let m = pipeline::gen_instances(&out, seed, tiles)?;
            println!(
                "{} instances written to {}",
                m.instances.len(),
                out.join("manifest.json").display()
            );
        }
        Command::Run {
            manifest,
            algorithms,
            budget,
            seeds,
            out,
            physics,
            jobs,
        } => {
            let physics = pipeline::load_physics(physics.as_deref())?;
            let instances = pipeline::load_instances(&manifest, &physics)?;
            let algorithms = pipeline::parse_algorithms(&algorithms)?;
            let seeds = pipeline::parse_seeds(&seeds)?;
            let s = pipeline::run_grid(&instances, &algorithms, &seeds, budget, &out, jobs)?;
            println!(
                "executed {} runs, skipped {} complete, quarantined {}, aborted {}",
                s.executed, s.skipped, s.quarantined, s.aborted
            );
        }
        Command::Features {
            manifest,
            source,
            reps,
            out,
            physics,
        } => {
            if reps == 0 {
                bail!("reps must be positive");
            }
            let physics = pipeline::load_physics(physics.as_deref())?;
            let instances = pipeline::load_instances(&manifest, &physics)?;
            let table = pipeline::feature_table(&instances, source, reps)?;
            write(&out, &table.to_csv())?;
            println!(
                "{} feature rows written to {}",
                table.rows.len(),
                out.display()
            );
        }
        Command::Select {
            logs,
            features,
            budget,
            splits,
            seed,
            stability_splits,
            out,
        } => {
            let fixed = pipeline::fixed_budget_table(&logs, budget)?;
            let table = pipeline::performance_table(&fixed)?;
            let mut sources = Vec::new();
            for path in &features {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let t = FeatureTable::parse(&text)?;
                for source in [FeatureSource::Radar, FeatureSource::Dem] {
                    let fv = pipeline::features_by_instance(&t, source);
                    if !fv.is_empty() {
                        sources.push((source, fv));
                    }
                }
            }
            let report = pipeline::select_report(&table, &sources, splits, seed)?;
            fs::create_dir_all(&out)?;
            write(&out.join("selection_summary.csv"), &report.summary_csv())?;
            write(&out.join("selection_detail.csv"), &report.detail_csv())?;
            write(&out.join("fixed_budget.csv"), &fixed.to_csv())?;
            if stability_splits > 0 {
                let counts = radarnet::selector::sbs_stability(
                    &table,
                    stability_splits,
                    pipeline::TRAIN_FRACTION,
                    seed,
                )?;
                let mut csv = String::from("algorithm,count\n");
                for (a, c) in &counts {
                    csv.push_str(&format!("{a},{c}\n"));
                }
                write(&out.join("sbs_stability.csv"), &csv)?;
            }
            for (split, sbs) in report.sbs.iter().enumerate() {
                info!("split {split}: SBS {sbs}");
            }
            print!("{}", report.summary_csv());
        }
        Command::Stats {
            logs,
            budget,
            alpha,
            out,
        } => {
            let fixed = pipeline::fixed_budget_table(&logs, budget)?;
            let rows = pipeline::ks_report(&fixed, alpha);
            write(&out, &pipeline::ks_csv(&rows))?;
            let rejected = rows.iter().filter(|r| r.outcome.reject).count();
            let c = radarnet::stats::critical_coefficient(alpha);
            println!("{} pairs tested (c = {c}), {rejected} rejected", rows.len());
        }
        Command::Serve {
            grid,
            manifest,
            instance,
            physics,
            host,
            port,
        } => {
            let physics = pipeline::load_physics(physics.as_deref())?;
            let inst = match (grid, manifest, instance) {
                (Some(g), _, _) => {
                    let grid = radarnet::terrain::load_grid(&g)?;
                    radarnet::Instance::new(grid, physics, radarnet::coverage::DEFAULT_TAU)
                }
                (None, Some(m), Some(name)) => pipeline::load_instances(&m, &physics)?
                    .into_iter()
                    .find(|i| i.name == name)
                    .with_context(|| format!("no instance `{name}` in {}", m.display()))?,
                _ => bail!("serve needs --grid or --manifest with --instance"),
            };
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()?;
            rt.block_on(radarnet_cli::server::serve(inst, &host, port))?;
        }
    }
    Ok(())
}
