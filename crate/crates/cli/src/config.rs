//! Flag and config-file merging. Flags win over the file; the file wins
//! over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use fuzztherest::agent::AgentConfig;
use fuzztherest::coverage::CoverageSource;
use fuzztherest::RunConfig;
use serde::Deserialize;

/// Settings shared by `fuzz` and `validate`, settable from flags or a file.
#[derive(Debug, Default, Clone, Args, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// OpenAPI 3.0 document (YAML or JSON).
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Scenario file; defaults to one scenario per operation.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// Target base URL, overriding the document's first server.
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Episodes per scenario.
    #[arg(long)]
    pub budget: Option<u64>,
    #[arg(long)]
    pub population_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub epsilon_start: Option<f64>,
    #[arg(long)]
    pub epsilon_end: Option<f64>,
    #[arg(long)]
    pub epsilon_decay_steps: Option<u64>,
    /// Per-request timeout in milliseconds.
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Maximum requests per second.
    #[arg(long)]
    pub rate_limit: Option<f64>,
    /// Extra injection tokens, one per line.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    #[arg(long, conflicts_with = "coverage_file")]
    pub coverage_url: Option<String>,
    #[arg(long)]
    pub coverage_file: Option<PathBuf>,
    /// Uniform random actions, no learning.
    #[arg(long)]
    #[serde(deserialize_with = "flag")]
    pub baseline: Option<bool>,
    /// Bearer token sent in the Authorization header.
    #[arg(long)]
    pub token: Option<String>,
    /// Extra static header `Name: value`; repeatable.
    #[arg(long = "header", value_name = "NAME:VALUE")]
    pub headers: Vec<String>,
    /// Skip TLS certificate verification.
    #[arg(long)]
    #[serde(deserialize_with = "flag")]
    pub insecure: Option<bool>,
    /// Reserved; only 1 is supported.
    #[arg(long)]
    pub concurrency: Option<u32>,
}

fn flag<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<bool>, D::Error> {
    Option::<bool>::deserialize(d)
}

impl Settings {
    pub fn from_file(path: &Path) -> anyhow::Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        serde_yaml::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
    }

    /// `self` (flags) layered over `file`.
    pub fn over(self, file: Settings) -> Settings {
        macro_rules! pick {
            ($($f:ident),*) => { Settings { $($f: self.$f.or(file.$f),)* headers: if self.headers.is_empty() { file.headers } else { self.headers } } };
        }
        pick!(
            spec, scenarios, base_url, seed, budget, population_size, alpha, gamma, epsilon_start, epsilon_end,
            epsilon_decay_steps, timeout_ms, rate_limit, dictionary, coverage_url, coverage_file, baseline, token,
            insecure, concurrency
        )
    }

    pub fn to_run_config(&self) -> anyhow::Result<RunConfig> {
        let Some(spec) = self.spec.clone() else {
            bail!("no specification given (--spec)");
        };
        let mut rc = RunConfig {
            spec_path: spec,
            scenarios_path: self.scenarios.clone(),
            ..RunConfig::default()
        };
        for p in [Some(&rc.spec_path), rc.scenarios_path.as_ref(), self.dictionary.as_ref()]
            .into_iter()
            .flatten()
        {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        if let Some(u) = &self.base_url {
            rc.base_url = Some(u.parse().with_context(|| format!("invalid base URL `{u}`"))?);
        }
        let d = AgentConfig::default();
        rc.agent = AgentConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            gamma: self.gamma.unwrap_or(d.gamma),
            epsilon_start: self.epsilon_start.unwrap_or(d.epsilon_start),
            epsilon_end: self.epsilon_end.unwrap_or(d.epsilon_end),
            epsilon_decay_steps: self.epsilon_decay_steps,
            population_size: self.population_size.unwrap_or(d.population_size),
            budget: self.budget.unwrap_or(d.budget),
            rewards: d.rewards,
        };
        rc.seed = self.seed.unwrap_or(0);
        if let Some(t) = self.timeout_ms {
            rc.timeout_ms = t;
        }
        rc.rate_limit = self.rate_limit;
        rc.dictionary_path = self.dictionary.clone();
        rc.coverage = match (&self.coverage_url, &self.coverage_file) {
            (Some(_), Some(_)) => bail!("use at most one of --coverage-url and --coverage-file"),
            (Some(u), None) => Some(CoverageSource::Url(
                u.parse().with_context(|| format!("invalid coverage URL `{u}`"))?,
            )),
            (None, Some(p)) => Some(CoverageSource::File(p.clone())),
            (None, None) => None,
        };
        rc.baseline_mode = self.baseline.unwrap_or(false);
        rc.bearer_token = self.token.clone();
        rc.insecure = self.insecure.unwrap_or(false);
        rc.headers = self
            .headers
            .iter()
            .map(|h| {
                let (k, v) = h
                    .split_once(':')
                    .with_context(|| format!("header `{h}` must look like `Name: value`"))?;
                Ok((k.trim().to_string(), v.trim().to_string()))
            })
            .collect::<anyhow::Result<_>>()?;
        if self.concurrency.is_some_and(|c| c != 1) {
            bail!("only --concurrency 1 is supported");
        }
        Ok(rc)
    }
}
