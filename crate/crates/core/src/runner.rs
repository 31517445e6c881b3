//! The fuzzing loop: scenarios in order, one fresh agent each, episodes
//! until the budget runs out.

use std::path::PathBuf;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use url::Url;

use crate::agent::{
    action_space, epsilon_at, q_update, reward, select_action, AgentConfig, AgentState, FuzzAction, QTable,
    StatusClass,
};
use crate::coverage::{CoverageHook, CoverageSource};
use crate::dictionary::Dictionary;
use crate::error::RunError;
use crate::forge::{fuzz_parameters, seed_population, InputVector, Mutator};
use crate::http::{
    build_request, Executor, HttpExchange, HttpRequest, RateLimiter, ReqwestTransport, Transport,
    DEFAULT_TIMEOUT_MS,
};
use crate::model::{ApiModel, HttpMethod, OperationSpec, ParamLocation};
use crate::openapi::parse_spec;
use crate::oracle::{NoveltyStore, Oracle};
use crate::report::{Event, ReportBuilder, TestReport};
use crate::scenario::{default_scenarios, parse_scenarios, resolve_bindings, Scenario};
use crate::validate::validate;
use crate::value::FuzzValue;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec_path: PathBuf,
    pub scenarios_path: Option<PathBuf>,
    pub base_url: Option<Url>,
    pub agent: AgentConfig,
    pub seed: u64,
    pub timeout_ms: u64,
    /// Requests per second; `None` is unlimited.
    pub rate_limit: Option<f64>,
    pub dictionary_path: Option<PathBuf>,
    pub coverage: Option<CoverageSource>,
    /// Uniform random actions and no learning, for comparison runs.
    pub baseline_mode: bool,
    pub bearer_token: Option<String>,
    pub headers: Vec<(String, String)>,
    pub insecure: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec_path: PathBuf::new(),
            scenarios_path: None,
            base_url: None,
            agent: AgentConfig::default(),
            seed: 0,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            rate_limit: None,
            dictionary_path: None,
            coverage: None,
            baseline_mode: false,
            bearer_token: None,
            headers: Vec::new(),
            insecure: false,
        }
    }
}

impl RunConfig {
    /// Configuration as echoed in the report; the token is redacted.
    pub fn echo(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if self.bearer_token.is_some() {
            v["bearer_token"] = json!("<redacted>");
        }
        v
    }
}

/// Result of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: TestReport,
    pub events: Vec<Event>,
    /// Final table per scenario, in scenario order.
    pub q_tables: Vec<(String, QTable)>,
}

impl RunOutcome {
    /// 1 when any finding exists, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.report.findings.is_empty() {
            0
        } else {
            1
        }
    }

    /// Episodes elapsed, counted across scenarios, before the first
    /// finding; `None` if nothing was found.
    pub fn episodes_to_first_finding(&self) -> Option<u64> {
        let mut offset = 0;
        for e in &self.events {
            match e {
                Event::Finding { episode, new: Some(_), .. } => return Some(offset + episode),
                Event::ScenarioFinished { episodes, .. } => offset += episodes,
                _ => {}
            }
        }
        None
    }

    /// `{"qtables": {scenario: dump}}`
    pub fn dump_q_tables(&self) -> Value {
        let map: serde_json::Map<String, Value> =
            self.q_tables.iter().map(|(n, q)| (n.clone(), q.dump())).collect();
        json!({ "qtables": map })
    }
}

/// A validated run: model, scenarios and configuration, ready to execute.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub model: ApiModel,
    pub scenarios: Vec<Scenario>,
    pub config: RunConfig,
    mutator: Mutator,
}

impl Campaign {
    /// Parses and cross-checks everything that can fail before the first
    /// request, including seed generation for every scenario step.
    pub fn prepare(config: RunConfig, spec_text: &str, scenarios_text: Option<&str>) -> Result<Campaign, RunError> {
        config.agent.validate().map_err(RunError::Config)?;
        if config.timeout_ms == 0 {
            return Err(RunError::Config("timeout must be positive".into()));
        }
        if config.rate_limit.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(RunError::Config("rate limit must be a positive number".into()));
        }
        let model = parse_spec(spec_text, config.base_url.as_ref())?;
        let scenarios = match scenarios_text {
            Some(t) => parse_scenarios(t, &model)?,
            None => default_scenarios(&model),
        };
        let dictionary = match &config.dictionary_path {
            Some(p) => Dictionary::extended_from(p)?,
            None => Dictionary::builtin(),
        };
        let mut scratch = ChaCha8Rng::seed_from_u64(config.seed);
        for s in &scenarios {
            for (i, step) in s.steps.iter().enumerate() {
                seed_population(step, i, &model, 1, &mut scratch).map_err(|source| RunError::Generation {
                    scenario: s.name.clone(),
                    source,
                })?;
            }
        }
        Ok(Campaign {
            model,
            scenarios,
            config,
            mutator: Mutator::new(dictionary),
        })
    }

    /// Reads the files named in `config` and prepares the run.
    pub fn from_config(config: RunConfig) -> Result<Campaign, RunError> {
        let read = |p: &PathBuf| {
            std::fs::read_to_string(p)
                .map_err(|e| RunError::Config(format!("cannot read {}: {e}", p.display())))
        };
        let spec = read(&config.spec_path)?;
        let scenarios = config.scenarios_path.as_ref().map(read).transpose()?;
        if let Some(p) = &config.dictionary_path {
            if !p.exists() {
                return Err(RunError::Config(format!("dictionary {} does not exist", p.display())));
            }
        }
        if let Some(CoverageSource::File(p)) = &config.coverage {
            if !p.exists() {
                return Err(RunError::Config(format!("coverage file {} does not exist", p.display())));
            }
        }
        Self::prepare(config, &spec, scenarios.as_deref())
    }

    /// Runs against the live target over HTTP.
    pub fn run(&self) -> Result<RunOutcome, RunError> {
        let transport = ReqwestTransport::new(self.config.insecure).map_err(RunError::Config)?;
        self.run_with(Box::new(transport))
    }

    pub fn run_with(&self, transport: Box<dyn Transport>) -> Result<RunOutcome, RunError> {
        let cfg = &self.config;
        let started_at = chrono::Utc::now().to_rfc3339();
        let executor = Executor::new(
            transport,
            Duration::from_millis(cfg.timeout_ms),
            RateLimiter::new(cfg.rate_limit),
        );
        let sends_anything = cfg.agent.budget > 0 && !self.scenarios.is_empty();
        if sends_anything {
            let probe = HttpRequest {
                method: HttpMethod::Get,
                url: self.model.base_url.to_string(),
                headers: Vec::new(),
                body: None,
            };
            if let Err(kind) = executor.probe(&probe) {
                return Err(RunError::Unreachable {
                    url: probe.url,
                    reason: kind.as_str().to_string(),
                });
            }
        }

        let mut loop_state = Loop {
            campaign: self,
            executor,
            oracle: Oracle::default(),
            novelty: NoveltyStore::new(),
            coverage: cfg.coverage.clone().map(CoverageHook::new),
            events: Vec::new(),
        };
        for w in &self.model.warnings {
            loop_state.events.push(Event::Warning { message: w.clone() });
        }
        if let Some(hook) = loop_state.coverage.as_mut() {
            if sends_anything {
                if let Some(w) = hook.prime() {
                    loop_state.events.push(Event::Warning { message: w });
                }
            }
        }

        let mut q_tables = Vec::new();
        for (index, scenario) in self.scenarios.iter().enumerate() {
            let q = loop_state.scenario(index, scenario)?;
            q_tables.push((scenario.name.clone(), q));
        }

        let mut builder = ReportBuilder::new(cfg.echo());
        for e in &loop_state.events {
            builder.record(e);
        }
        builder.set_timestamps(started_at, chrono::Utc::now().to_rfc3339());
        Ok(RunOutcome {
            report: builder.finish(),
            events: loop_state.events,
            q_tables,
        })
    }
}

fn is_path_param(op: &OperationSpec, key: &str) -> bool {
    op.param_by_key(key)
        .is_some_and(|(_, p)| p.location == ParamLocation::Path)
}

/// Reads the configured files and runs over HTTP.
pub fn run(config: RunConfig) -> Result<RunOutcome, RunError> {
    Campaign::from_config(config)?.run()
}

/// Per-scenario generator streams: agent and forge draws never interleave,
/// and scenario N's streams do not depend on how much N-1 consumed.
fn streams(seed: u64, scenario_index: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut agent = ChaCha8Rng::seed_from_u64(seed);
    agent.set_stream(2 * scenario_index as u64);
    let mut forge = ChaCha8Rng::seed_from_u64(seed);
    forge.set_stream(2 * scenario_index as u64 + 1);
    (agent, forge)
}

struct Loop<'a> {
    campaign: &'a Campaign,
    executor: Executor,
    oracle: Oracle,
    novelty: NoveltyStore,
    coverage: Option<CoverageHook>,
    events: Vec<Event>,
}

impl Loop<'_> {
    fn scenario(&mut self, index: usize, scenario: &Scenario) -> Result<QTable, RunError> {
        let c = self.campaign;
        let cfg = &c.config;
        let agent_cfg = &cfg.agent;
        let (mut agent_rng, mut forge_rng) = streams(cfg.seed, index);

        let steps = &scenario.steps;
        let mut population: Vec<Vec<InputVector>> = Vec::with_capacity(steps.len());
        let mut keys = Vec::with_capacity(steps.len());
        let mut actions = Vec::with_capacity(steps.len());
        for (i, step) in steps.iter().enumerate() {
            let members = seed_population(step, i, &c.model, agent_cfg.population_size, &mut forge_rng)
                .map_err(|source| RunError::Generation {
                    scenario: scenario.name.clone(),
                    source,
                })?;
            population.push(members);
            let k = fuzz_parameters(step, &c.model);
            actions.push(action_space(k.len()));
            keys.push(k);
        }

        self.events.push(Event::ScenarioStarted {
            scenario: scenario.name.clone(),
            steps: steps.len(),
        });

        let mut q = QTable::new();
        let mut epsilon = if cfg.baseline_mode { 1.0 } else { agent_cfg.epsilon_start };
        for episode in 0..agent_cfg.budget {
            epsilon = if cfg.baseline_mode {
                1.0
            } else {
                epsilon_at(episode, agent_cfg)
            };
            let member = (episode % agent_cfg.population_size as u64) as usize;
            let mut history: Vec<HttpExchange> = Vec::with_capacity(steps.len());
            let mut last = StatusClass::None;
            let mut pending: Option<(AgentState, FuzzAction, f64)> = None;

            for (si, step) in steps.iter().enumerate() {
                let state = AgentState::new(si, last);
                if let Some((s, a, r)) = pending.take() {
                    if !cfg.baseline_mode {
                        q_update(&mut q, s, a, r, state, &actions[si], agent_cfg);
                    }
                }
                let action = select_action(&q, state, &actions[si], epsilon, &mut agent_rng);
                let parent = &population[si][member];
                let op = c.model.lookup_operation(&step.operation_id).expect("validated scenario");
                let (vector, applicable) = match action {
                    FuzzAction::Hold => (parent.clone(), true),
                    FuzzAction::Mutate { param, op: mop } => {
                        let key = &keys[si][param];
                        match c.mutator.mutate(parent, key, mop, &mut forge_rng) {
                            // A request without its path parameter cannot be built at all.
                            Ok(child) if child.omitted.contains(key) && is_path_param(op, key) => {
                                (parent.clone(), false)
                            }
                            Ok(child) => (child, true),
                            Err(_) => (parent.clone(), false),
                        }
                    }
                };

                let request = resolve_bindings(step, &history, &vector)
                    .map_err(|e| e.to_string())
                    .and_then(|params| {
                        build_request(op, &params, &c.model.base_url, cfg.bearer_token.as_deref(), &cfg.headers)
                            .map_err(|e| e.to_string())
                    });
                let request = match request {
                    Ok(r) => r,
                    Err(reason) => {
                        self.events.push(Event::StepSkipped {
                            scenario: scenario.name.clone(),
                            episode,
                            step: si,
                            reason,
                        });
                        self.agent_step(scenario, episode, state, action, 0.0, epsilon, applicable);
                        pending = Some((state, action, 0.0));
                        break;
                    }
                };

                let exchange = self.executor.execute(request);
                let classes = self.oracle.classify(&exchange, op);
                let obs = self
                    .novelty
                    .observe(&exchange, &op.id, classes, &scenario.name, &vector.lineage);
                let mut units = 0;
                if let Some(hook) = self.coverage.as_mut() {
                    let (d, warning) = hook.poll();
                    units = d;
                    if let Some(message) = warning {
                        self.events.push(Event::Warning { message });
                    }
                }
                let r = if applicable {
                    reward(exchange.status(), obs.novelty, units, &agent_cfg.rewards)
                } else {
                    0.0
                };

                self.events.push(Event::Exchange {
                    scenario: scenario.name.clone(),
                    episode,
                    step: si,
                    operation_id: op.id.clone(),
                    seq: exchange.seq,
                    outcome: exchange.status_key(),
                    latency_ms: exchange.response().map(|r| r.latency_ms),
                    evidence: obs.classes.clone(),
                });
                if let Some(fp) = &obs.fingerprint {
                    self.events.push(Event::Finding {
                        scenario: scenario.name.clone(),
                        episode,
                        fingerprint: fp.clone(),
                        new: obs.new_finding.clone().map(Box::new),
                    });
                }
                self.agent_step(scenario, episode, state, action, r, epsilon, applicable);

                let success = exchange.status().is_some_and(|s| (200..300).contains(&s));
                if applicable
                    && success
                    && matches!(action, FuzzAction::Mutate { .. })
                    && stays_valid(&vector, op)
                {
                    population[si][member] = vector;
                }
                last = StatusClass::from_status(exchange.status());
                pending = Some((state, action, r));
                history.push(exchange);
            }

            if let Some((s, a, r)) = pending {
                if !cfg.baseline_mode {
                    let terminal = AgentState::new(steps.len(), last);
                    q_update(&mut q, s, a, r, terminal, &[], agent_cfg);
                }
            }
        }

        self.events.push(Event::ScenarioFinished {
            scenario: scenario.name.clone(),
            episodes: agent_cfg.budget,
            final_epsilon: epsilon,
        });
        Ok(q)
    }

    #[allow(clippy::too_many_arguments)]
    fn agent_step(
        &mut self,
        scenario: &Scenario,
        episode: u64,
        state: AgentState,
        action: FuzzAction,
        reward: f64,
        epsilon: f64,
        applicable: bool,
    ) {
        self.events.push(Event::AgentStep {
            scenario: scenario.name.clone(),
            episode,
            step: state.step,
            state: state.to_string(),
            action: action.to_string(),
            reward,
            epsilon,
            applicable,
        });
    }
}

/// A mutated child may replace its parent only while every value still
/// satisfies its schema, so each episode injects a single fault.
fn stays_valid(v: &InputVector, op: &crate::model::OperationSpec) -> bool {
    v.omitted.is_empty()
        && v.duplicated.is_empty()
        && v.values.iter().all(|(k, val)| {
            !contains_bytes(val)
                && op
                    .param_by_key(k)
                    .is_some_and(|(_, p)| validate(&val.to_json(), &p.schema).is_ok())
        })
}

fn contains_bytes(v: &FuzzValue) -> bool {
    match v {
        FuzzValue::Bytes(_) => true,
        FuzzValue::Array(items) => items.iter().any(contains_bytes),
        FuzzValue::Object(fields) => {
            let mut seen = std::collections::BTreeSet::new();
            fields.iter().any(|(k, v)| !seen.insert(k) || contains_bytes(v))
        }
        _ => false,
    }
}
