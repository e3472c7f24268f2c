//! `vcpa` command line. Exit codes: 0 ok, 1 bad input or usage, 2 internal failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vcpa::analytics::build_report;
use vcpa::catalog::{Catalog, CatalogConfig};
use vcpa::client::HttpStore;
use vcpa::engine::Engine;
use vcpa::pipeline::{self, with_manifest, CatalogToml, PipelineError};
use vcpa::profiles::{ProfileDocument, Standardization};
use vcpa::service::{self, ClockMode, ServiceConfig};
use vcpa::simulate::{self, PopulationSpec, SessionPlan};
use vcpa::survey::{write_csv, ValueSource};

#[derive(Parser)]
#[command(name = "vcpa", version, about = "Value-centered privacy assistant pipeline and mock app store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Manifest to check inputs against and record outputs in.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a survey CSV and write the closed dataset as JSON.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Also write the rejection report here.
        #[arg(long)]
        rejections: Option<PathBuf>,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Spearman table of value scores against practice acceptance.
    Correlate {
        /// Dataset JSON or survey CSV.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Use app-specific instead of general value scores.
        #[arg(long)]
        app_values: bool,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Ward clustering of z-scored general values.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Standardize each respondent instead of each value.
        #[arg(long)]
        by_respondent: bool,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Cluster, characterize, and write the profile document.
    Profiles {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Persona templates JSON; defaults to the built-in set.
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        by_respondent: bool,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Build the app catalog from seeds, similar-app lists, and exclusions.
    Catalog {
        /// Catalog source JSON (apps and seeds).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Exclusion rules JSON.
        #[arg(long)]
        exclusions: Option<PathBuf>,
        /// TOML with a [catalog] table.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Run the mock app store service.
    Serve {
        /// TOML service config; VCPA_* environment variables override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        catalog: Option<PathBuf>,
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Event log (JSONL).
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        red_threshold: Option<f64>,
        /// Take elapsed time from the x-elapsed-ms request header.
        #[arg(long)]
        client_clock: bool,
        #[command(flatten)]
        m: ManifestArg,
    },
    /// Seeded synthetic inputs for end-to-end runs.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Consistency and engagement report from an event log.
    Report {
        /// Event log (JSONL).
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        profiles: PathBuf,
        /// Per-session CSV.
        #[arg(long)]
        output: PathBuf,
        /// CSV with columns phase,concern (phase is entry or exit).
        #[arg(long)]
        concerns: Option<PathBuf>,
        #[arg(long)]
        red_threshold: Option<f64>,
        /// TOML service config for thresholds.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        m: ManifestArg,
    },
}

#[derive(Subcommand)]
enum Simulate {
    /// Cluster-structured survey population as CSV.
    Population {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 91)]
        per_cluster: usize,
        /// Write the generating archetype per respondent here.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Catalog source and exclusion rules.
    Catalog {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        exclusions: PathBuf,
    },
    /// Scripted participants against a service running with --client-clock.
    Sessions {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        url: String,
        /// Profile document the service was started with.
        #[arg(long)]
        input: PathBuf,
        /// Ground-truth JSON.
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 30)]
        sessions: usize,
    },
}

fn standardization(by_respondent: bool) -> Standardization {
    if by_respondent {
        Standardization::ByRespondent
    } else {
        Standardization::ByVariable
    }
}

fn service_config(path: Option<&Path>) -> Result<ServiceConfig, PipelineError> {
    match path {
        Some(p) => ServiceConfig::from_toml_file(p).map_err(PipelineError::Invalid),
        None => Ok(ServiceConfig::default()),
    }
}

fn read_concerns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), PipelineError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| PipelineError::input(path, e))?;
    let (mut entry, mut exit) = (Vec::new(), Vec::new());
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| PipelineError::input(path, e))?;
        let bad = |what: &str| PipelineError::input(path, format!("line {}: {what}", i + 2));
        let value: f64 = row
            .get(1)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| bad("concern is not a number"))?;
        match row.get(0).map(str::trim) {
            Some("entry") => entry.push(value),
            Some("exit") => exit.push(value),
            _ => return Err(bad("phase must be entry or exit")),
        }
    }
    Ok((entry, exit))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest {
            input,
            output,
            rejections,
            m,
        } => with_manifest(m.manifest.as_deref(), &[&input], &[("survey", &output)], || {
            let report = pipeline::ingest_stage(&input, &output)?;
            let text = report.rejection_text();
            eprint!("{text}");
            if let Some(r) = &rejections {
                pipeline::write_text(r, &text)?;
            }
            println!(
                "{} rows read, {} accepted, {} rejected",
                report.rows_read,
                report.dataset.len(),
                report.rejections.len()
            );
            Ok(())
        }),
        Command::Correlate {
            input,
            output,
            app_values,
            m,
        } => with_manifest(m.manifest.as_deref(), &[&input], &[("correlations", &output)], || {
            let source = if app_values { ValueSource::App } else { ValueSource::General };
            let degenerate = pipeline::correlate_stage(&input, &output, source)?;
            println!("wrote {}; {degenerate} degenerate rows flagged", output.display());
            Ok(())
        }),
        Command::Cluster {
            input,
            output,
            k,
            by_respondent,
            m,
        } => with_manifest(m.manifest.as_deref(), &[&input], &[("clusters", &output)], || {
            let doc = pipeline::cluster_stage(&input, &output, k, standardization(by_respondent))?;
            let sizes: Vec<usize> = doc.clustering.member_sets.iter().map(Vec::len).collect();
            println!("cluster sizes: {sizes:?}");
            Ok(())
        }),
        Command::Profiles {
            input,
            output,
            k,
            templates,
            by_respondent,
            m,
        } => {
            let mut inputs = vec![input.as_path()];
            inputs.extend(templates.as_deref());
            with_manifest(m.manifest.as_deref(), &inputs, &[("profiles", &output)], || {
                let doc = pipeline::profiles_stage(&input, &output, k, templates.as_deref(), standardization(by_respondent))?;
                for p in &doc.profiles {
                    let top: Vec<&str> = p.top_values.iter().map(|v| v.display_name()).collect();
                    println!("{} ({} members): {}", p.display_name, p.member_count(), top.join(", "));
                }
                Ok(())
            })
        }
        Command::Catalog {
            input,
            output,
            exclusions,
            config,
            m,
        } => {
            let mut inputs = vec![input.as_path()];
            inputs.extend(exclusions.as_deref());
            inputs.extend(config.as_deref());
            with_manifest(m.manifest.as_deref(), &inputs, &[("catalog", &output)], || {
                let cfg = match &config {
                    Some(p) => {
                        let text = std::fs::read_to_string(p).map_err(|e| PipelineError::input(p, e))?;
                        toml::from_str::<CatalogToml>(&text)
                            .map_err(|e| PipelineError::input(p, e))?
                            .catalog
                    }
                    None => CatalogConfig::default(),
                };
                let catalog = pipeline::catalog_stage(&input, exclusions.as_deref(), &output, &cfg)?;
                println!(
                    "{} apps in {} families, {} excluded",
                    catalog.apps.len(),
                    catalog.families.len(),
                    catalog.exclusions.len()
                );
                Ok(())
            })
        }
        Command::Serve {
            config,
            catalog,
            profiles,
            log,
            listen,
            red_threshold,
            client_clock,
            m,
        } => {
            let mut cfg = service_config(config.as_deref())?;
            cfg.apply_env();
            if let Some(v) = catalog {
                cfg.catalog_path = v;
            }
            if let Some(v) = profiles {
                cfg.profiles_path = v;
            }
            if let Some(v) = log {
                cfg.log_path = v;
            }
            if let Some(v) = listen {
                cfg.listen = v;
            }
            if let Some(v) = red_threshold {
                cfg.red_threshold = v;
            }
            if client_clock {
                cfg.clock = ClockMode::Client;
            }
            let inputs = [cfg.catalog_path.clone(), cfg.profiles_path.clone()];
            let inputs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            with_manifest(m.manifest.as_deref(), &inputs, &[], || {
                let rt = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Invalid(e.to_string()))?;
                eprintln!("listening on {}", cfg.listen);
                rt.block_on(service::serve(cfg.clone()))
                    .map_err(|e| PipelineError::Invalid(e.to_string()))
            })
        }
        Command::Simulate(Simulate::Population {
            seed,
            output,
            per_cluster,
            labels,
        }) => {
            let spec = PopulationSpec {
                seed,
                per_archetype: [per_cluster; 3],
                ..PopulationSpec::default()
            };
            let (responses, archetypes) = simulate::population(&spec);
            let mut buf = Vec::new();
            write_csv(&responses, &mut buf).map_err(|e| PipelineError::Invalid(e.to_string()))?;
            pipeline::write_text(&output, &String::from_utf8_lossy(&buf))?;
            if let Some(path) = labels {
                let rows: Vec<(String, simulate::Archetype)> = responses
                    .iter()
                    .map(|r| r.respondent_id.clone())
                    .zip(archetypes)
                    .collect();
                pipeline::write_json(&path, &rows)?;
            }
            println!("{} respondents written to {}", responses.len(), output.display());
            Ok(())
        }
        Command::Simulate(Simulate::Catalog {
            seed,
            output,
            exclusions,
        }) => {
            let (source, rules, _) = simulate::catalog_source(seed);
            pipeline::write_json(&output, &source)?;
            pipeline::write_json(&exclusions, &rules)?;
            println!("{} apps, {} seeds", source.apps.len(), source.seeds.len());
            Ok(())
        }
        Command::Simulate(Simulate::Sessions {
            seed,
            url,
            input,
            output,
            sessions,
        }) => {
            let profiles: ProfileDocument = pipeline::read_json(&input)?;
            let plan = SessionPlan {
                seed,
                sessions,
                ..SessionPlan::default()
            };
            let truth = simulate::run_sessions(&HttpStore::new(url), &profiles, &plan)
                .map_err(|e| PipelineError::Invalid(format!("store: {e}")))?;
            pipeline::write_json(&output, &truth)?;
            println!("{} sessions simulated", truth.len());
            Ok(())
        }
        Command::Report {
            input,
            catalog,
            profiles,
            output,
            concerns,
            red_threshold,
            config,
            m,
        } => {
            let mut inputs = vec![input.as_path(), catalog.as_path(), profiles.as_path()];
            inputs.extend(concerns.as_deref());
            with_manifest(m.manifest.as_deref(), &inputs, &[("report", &output)], || {
                let mut cfg = service_config(config.as_deref())?;
                if let Some(v) = red_threshold {
                    cfg.red_threshold = v;
                }
                let engine_cfg = cfg.engine_config();
                engine_cfg.validate().map_err(PipelineError::Invalid)?;
                let cat: Catalog = pipeline::read_json(&catalog)?;
                let prof: ProfileDocument = pipeline::read_json(&profiles)?;
                let log = vcpa::eventlog::load(&input).map_err(|e| PipelineError::input(&input, e))?;
                let engine = Engine::new(cat, prof, engine_cfg);
                let concerns = concerns.as_deref().map(read_concerns).transpose()?;
                let report = build_report(
                    &engine,
                    &log,
                    concerns.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
                )
                .map_err(|e| PipelineError::input(&input, e))?;
                pipeline::write_text(&output, &report.to_csv())?;
                print!("{}", report.summary());
                Ok(())
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
