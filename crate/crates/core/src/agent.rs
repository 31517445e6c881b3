//! Tabular Q-learning over (step, last status class) states.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::forge::MutationOp;

/// Coarse outcome of the previous step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatusClass {
    /// No previous step in this episode.
    None,
    #[serde(rename = "2xx")]
    Success,
    /// 4xx, plus 1xx/3xx which carry no fault signal.
    #[serde(rename = "4xx")]
    ClientError,
    #[serde(rename = "5xx")]
    ServerError,
    /// Timeouts and any other failure to get a response.
    Timeout,
}

impl StatusClass {
    pub fn from_status(status: Option<u16>) -> StatusClass {
        match status {
            None => StatusClass::Timeout,
            Some(s) if (200..300).contains(&s) => StatusClass::Success,
            Some(s) if s >= 500 => StatusClass::ServerError,
            Some(_) => StatusClass::ClientError,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StatusClass::None => "none",
            StatusClass::Success => "2xx",
            StatusClass::ClientError => "4xx",
            StatusClass::ServerError => "5xx",
            StatusClass::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentState {
    pub step: usize,
    pub last: StatusClass,
}

impl AgentState {
    pub fn new(step: usize, last: StatusClass) -> Self {
        AgentState { step, last }
    }
}

impl fmt::Display for AgentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.step, self.last.as_str())
    }
}

/// Mutate one fuzzed parameter, or send the member unchanged when the step
/// has nothing to fuzz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FuzzAction {
    Mutate { param: usize, op: MutationOp },
    Hold,
}

impl fmt::Display for FuzzAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuzzAction::Mutate { param, op } => write!(f, "({param},{op})"),
            FuzzAction::Hold => f.write_str("(-,Hold)"),
        }
    }
}

/// The action set for a step with `param_count` fuzzed parameters, in a
/// fixed order: parameter-major, then operator id.
pub fn action_space(param_count: usize) -> Vec<FuzzAction> {
    if param_count == 0 {
        return vec![FuzzAction::Hold];
    }
    (0..param_count)
        .flat_map(|param| MutationOp::ALL.into_iter().map(move |op| FuzzAction::Mutate { param, op }))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub new_failure: f64,
    pub new_status: f64,
    pub success: f64,
    pub coverage_unit: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            new_failure: 100.0,
            new_status: 10.0,
            success: 1.0,
            coverage_unit: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays; defaults to 30% of the budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_decay_steps: Option<u64>,
    pub population_size: usize,
    /// Episodes per scenario; 0 sends nothing.
    pub budget: u64,
    pub rewards: RewardConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.3,
            gamma: 0.8,
            epsilon_start: 1.0,
            epsilon_end: 0.1,
            epsilon_decay_steps: None,
            population_size: 10,
            budget: 1000,
            rewards: RewardConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn decay_steps(&self) -> u64 {
        self.epsilon_decay_steps
            .unwrap_or_else(|| (self.budget * 3).div_ceil(10).max(1))
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64, open_low: bool| {
            let ok = if open_low { v > 0.0 && v <= 1.0 } else { (0.0..=1.0).contains(&v) };
            if ok {
                Ok(())
            } else {
                Err(format!("{name} = {v} is out of range"))
            }
        };
        unit("alpha", self.alpha, true)?;
        unit("gamma", self.gamma, false)?;
        unit("epsilon_start", self.epsilon_start, false)?;
        unit("epsilon_end", self.epsilon_end, false)?;
        if self.epsilon_end > self.epsilon_start {
            return Err("epsilon_end must not exceed epsilon_start".into());
        }
        if self.epsilon_decay_steps == Some(0) {
            return Err("epsilon_decay_steps must be positive".into());
        }
        if self.population_size == 0 {
            return Err("population_size must be at least 1".into());
        }
        if self.budget != 0 && self.budget < self.population_size as u64 {
            return Err(format!(
                "budget {} is smaller than population_size {}",
                self.budget, self.population_size
            ));
        }
        let r = &self.rewards;
        if [r.new_failure, r.new_status, r.success, r.coverage_unit]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err("reward weights must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub value: f64,
    pub visits: u64,
}

/// Q-values keyed by (state, action); absent entries read as 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: BTreeMap<(AgentState, FuzzAction), QEntry>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, state: AgentState, action: FuzzAction) -> f64 {
        self.entries.get(&(state, action)).map_or(0.0, |e| e.value)
    }

    pub fn entry(&self, state: AgentState, action: FuzzAction) -> QEntry {
        self.entries.get(&(state, action)).copied().unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(AgentState, FuzzAction), &QEntry)> {
        self.entries.iter()
    }

    /// Highest value over `actions`; 0 for an empty set (terminal state).
    pub fn max_value(&self, state: AgentState, actions: &[FuzzAction]) -> f64 {
        actions
            .iter()
            .map(|a| self.get(state, *a))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
            .unwrap_or(0.0)
    }

    /// Index of the best action; ties go to the lowest index.
    pub fn argmax(&self, state: AgentState, actions: &[FuzzAction]) -> usize {
        let mut best = 0;
        for i in 1..actions.len() {
            if self.get(state, actions[i]) > self.get(state, actions[best]) {
                best = i;
            }
        }
        best
    }

    /// `{"(step,status)/(param,op)": {"value": q, "visits": n}}`
    pub fn dump(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for ((s, a), e) in &self.entries {
            map.insert(format!("{s}/{a}"), serde_json::to_value(e).expect("plain struct"));
        }
        serde_json::Value::Object(map)
    }
}

/// Epsilon-greedy choice. The coin and an exploration index are drawn on
/// every call so two runs with the same seed consume their generators in
/// lockstep regardless of epsilon.
pub fn select_action<R: Rng + ?Sized>(
    q: &QTable,
    state: AgentState,
    actions: &[FuzzAction],
    epsilon: f64,
    rng: &mut R,
) -> FuzzAction {
    assert!(!actions.is_empty(), "action set must be non-empty");
    let coin: f64 = rng.gen();
    let explore_idx = rng.gen_range(0..actions.len());
    if coin < epsilon {
        actions[explore_idx]
    } else {
        actions[q.argmax(state, actions)]
    }
}

/// One-step Q-learning update:
/// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
pub fn q_update(
    q: &mut QTable,
    state: AgentState,
    action: FuzzAction,
    reward: f64,
    next_state: AgentState,
    next_actions: &[FuzzAction],
    config: &AgentConfig,
) {
    let target = reward + config.gamma * q.max_value(next_state, next_actions);
    let e = q.entries.entry((state, action)).or_default();
    e.value += config.alpha * (target - e.value);
    e.visits += 1;
}

/// Novelty signals for one exchange, as judged by the oracle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoveltyFlags {
    pub new_failure_fingerprint: bool,
    pub new_status_for_operation: bool,
}

/// Scalar reward: one tier of failure / new status / success, plus the
/// coverage bonus.
pub fn reward(
    status: Option<u16>,
    novelty: NoveltyFlags,
    coverage_units: u64,
    config: &RewardConfig,
) -> f64 {
    let tier = if novelty.new_failure_fingerprint {
        config.new_failure
    } else if novelty.new_status_for_operation {
        config.new_status
    } else if status.is_some_and(|s| (200..300).contains(&s)) {
        config.success
    } else {
        0.0
    };
    tier + config.coverage_unit * coverage_units as f64
}

/// Linear decay from start to end over `decay_steps` episodes, then flat.
pub fn epsilon_at(episode: u64, config: &AgentConfig) -> f64 {
    let steps = config.decay_steps();
    if episode >= steps {
        return config.epsilon_end;
    }
    let frac = episode as f64 / steps as f64;
    config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s0() -> AgentState {
        AgentState::new(0, StatusClass::None)
    }

    #[test]
    fn single_update_from_zero() {
        let cfg = AgentConfig::default();
        let mut q = QTable::new();
        let a = FuzzAction::Mutate {
            param: 0,
            op: MutationOp::EmptyString,
        };
        q_update(&mut q, s0(), a, 100.0, AgentState::new(1, StatusClass::ServerError), &[], &cfg);
        assert!((q.get(s0(), a) - 30.0).abs() < 1e-12);
        assert_eq!(q.entry(s0(), a).visits, 1);
    }

    #[test]
    fn greedy_ties_break_low() {
        let acts = action_space(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&QTable::new(), s0(), &acts, 0.0, &mut rng), acts[0]);
    }

    #[test]
    fn greedy_follows_values() {
        let cfg = AgentConfig::default();
        let acts = action_space(1);
        let mut q = QTable::new();
        q_update(&mut q, s0(), acts[5], 10.0, s0(), &[], &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&q, s0(), &acts, 0.0, &mut rng), acts[5]);
    }

    #[test]
    fn reward_tiers() {
        let r = RewardConfig::default();
        let fail = NoveltyFlags {
            new_failure_fingerprint: true,
            new_status_for_operation: true,
        };
        let status = NoveltyFlags {
            new_failure_fingerprint: false,
            new_status_for_operation: true,
        };
        assert_eq!(reward(Some(500), fail, 0, &r), 100.0);
        assert_eq!(reward(Some(404), status, 0, &r), 10.0);
        assert_eq!(reward(Some(200), NoveltyFlags::default(), 0, &r), 1.0);
        assert_eq!(reward(Some(404), NoveltyFlags::default(), 0, &r), 0.0);
        assert_eq!(reward(None, NoveltyFlags::default(), 0, &r), 0.0);
        assert_eq!(reward(Some(200), NoveltyFlags::default(), 3, &r), 16.0);
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = AgentConfig {
            epsilon_decay_steps: Some(300),
            ..AgentConfig::default()
        };
        assert_eq!(epsilon_at(0, &cfg), 1.0);
        assert!((epsilon_at(150, &cfg) - 0.55).abs() < 1e-12);
        assert_eq!(epsilon_at(300, &cfg), 0.1);
        assert_eq!(epsilon_at(10_000, &cfg), 0.1);
        assert_eq!(AgentConfig::default().decay_steps(), 300);
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig::default().validate().is_ok());
        let zero = AgentConfig {
            budget: 0,
            ..AgentConfig::default()
        };
        assert!(zero.validate().is_ok());
        for bad in [
            AgentConfig { alpha: 0.0, ..AgentConfig::default() },
            AgentConfig { gamma: 1.5, ..AgentConfig::default() },
            AgentConfig { epsilon_end: 1.0, epsilon_start: 0.5, ..AgentConfig::default() },
            AgentConfig { population_size: 0, ..AgentConfig::default() },
            AgentConfig { budget: 5, ..AgentConfig::default() },
            AgentConfig { epsilon_decay_steps: Some(0), ..AgentConfig::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn action_space_shape() {
        assert_eq!(action_space(0), vec![FuzzAction::Hold]);
        let a = action_space(3);
        assert_eq!(a.len(), 36);
        assert_eq!(a[13], FuzzAction::Mutate { param: 1, op: MutationOp::NegateNumber });
    }

    #[test]
    fn dump_keys() {
        let cfg = AgentConfig::default();
        let mut q = QTable::new();
        q_update(&mut q, s0(), FuzzAction::Mutate { param: 0, op: MutationOp::ByteFlip }, 1.0, s0(), &[], &cfg);
        let d = q.dump();
        assert!(d.get("(0,none)/(0,ByteFlip)").is_some(), "{d}");
    }
}
