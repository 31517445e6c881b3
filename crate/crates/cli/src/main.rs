mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use ftr_mock::{BugCatalog, BugId};
use fuzztherest::openapi::parse_spec;
use fuzztherest::report::{render_structured, render_summary, TestReport};
use fuzztherest::scenario::parse_scenarios;
use fuzztherest::Campaign;

use config::Settings;

#[derive(Debug, Parser)]
#[command(name = "fuzz-the-rest", version, about = "Reinforcement-learning guided REST API fuzzer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuzz a live API.
    Fuzz {
        #[command(flatten)]
        settings: Settings,
        /// YAML or JSON file with any of the flags above (snake_case keys).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the structured report here.
        #[arg(long)]
        report_out: Option<PathBuf>,
        /// Print the summary table to standard output.
        #[arg(long)]
        summary: bool,
        /// Write the final Q-tables here.
        #[arg(long)]
        dump_qtable: Option<PathBuf>,
        /// Write every run event, one JSON object per line.
        #[arg(long)]
        event_log: Option<PathBuf>,
    },
    /// Serve the bundled vulnerable target.
    Mock {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Bugs to leave disarmed, e.g. `B2,B4`.
        #[arg(long, value_delimiter = ',')]
        disable: Vec<String>,
        /// Print the target's OpenAPI document and exit.
        #[arg(long)]
        print_spec: bool,
        /// Print the bundled scenario file and exit.
        #[arg(long)]
        print_scenarios: bool,
    },
    /// Parse a specification and scenarios without sending anything.
    Validate {
        #[command(flatten)]
        settings: Settings,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the summary of a structured report.
    Report { path: PathBuf },
}

const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn merged(settings: Settings, config: Option<PathBuf>) -> anyhow::Result<Settings> {
    Ok(match config {
        Some(p) => settings.over(Settings::from_file(&p)?),
        None => settings,
    })
}

fn dispatch(command: Command) -> anyhow::Result<u8> {
    match command {
        Command::Fuzz {
            settings,
            config,
            report_out,
            summary,
            dump_qtable,
            event_log,
        } => {
            let rc = merged(settings, config)?.to_run_config()?;
            let campaign = Campaign::from_config(rc)?;
            log::info!(
                "{} scenarios against {}",
                campaign.scenarios.len(),
                campaign.model.base_url
            );
            // Any run error, including an unreachable target, leaves no report behind.
            let outcome = campaign.run()?;
            if let Some(p) = &report_out {
                std::fs::write(p, render_structured(&outcome.report))
                    .with_context(|| format!("cannot write {}", p.display()))?;
            }
            if let Some(p) = &dump_qtable {
                let text = serde_json::to_string_pretty(&outcome.dump_q_tables())?;
                std::fs::write(p, text + "\n").with_context(|| format!("cannot write {}", p.display()))?;
            }
            if let Some(p) = &event_log {
                let mut out = String::new();
                for e in &outcome.events {
                    out.push_str(&serde_json::to_string(e)?);
                    out.push('\n');
                }
                std::fs::write(p, out).with_context(|| format!("cannot write {}", p.display()))?;
            }
            if summary {
                print!("{}", render_summary(&outcome.report));
            }
            Ok(outcome.exit_code() as u8)
        }
        Command::Mock {
            port,
            disable,
            print_spec,
            print_scenarios,
        } => {
            if print_spec {
                print!("{}", ftr_mock::openapi_for(&format!("http://127.0.0.1:{port}")));
                return Ok(0);
            }
            if print_scenarios {
                print!("{}", ftr_mock::SCENARIOS);
                return Ok(0);
            }
            let off = disable
                .iter()
                .map(|s| BugId::parse(s).with_context(|| format!("unknown bug id `{s}`")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let catalog = BugCatalog::only(BugId::ALL.into_iter().filter(|b| !off.contains(b)));
            ftr_mock::run_until_interrupted(port, catalog, |addr| {
                println!("mock target listening on http://{addr} (Ctrl-C to stop)");
            })?;
            Ok(0)
        }
        Command::Validate { settings, config } => {
            let s = merged(settings, config)?;
            let spec_path = s.spec.clone().context("no specification given (--spec)")?;
            let text = std::fs::read_to_string(&spec_path)
                .with_context(|| format!("cannot read {}", spec_path.display()))?;
            let base = s.base_url.as_deref().map(str::parse).transpose()?;
            let model = parse_spec(&text, base.as_ref())?;
            let scenarios = match &s.scenarios {
                Some(p) => {
                    let t = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                    parse_scenarios(&t, &model)?.len()
                }
                None => model.operations.len(),
            };
            println!(
                "ok: {} operations, {} scenarios, base URL {}",
                model.operations.len(),
                scenarios,
                model.base_url
            );
            for w in &model.warnings {
                println!("warning: {w}");
            }
            Ok(0)
        }
        Command::Report { path } => {
            let text = std::fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            let report: TestReport = serde_json::from_str(&text).context("not a structured report")?;
            print!("{}", render_summary(&report));
            Ok(0)
        }
    }
}
