//! Classical MDP model: configuration, brute-force trajectory enumeration,
//! trajectory bit-string codec, and corpus ingestion.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{QmdpError, Result};

const ROW_TOLERANCE: f64 = 1e-9;

/// Bundled four-state MDP.
pub const EXAMPLE_MDP_TOML: &str = include_str!("../data/example_mdp.toml");

/// Bundled 170-trajectory corpus (`id,bits`).
pub const REFERENCE_CORPUS_CSV: &str = include_str!("../data/reference_corpus.csv");

/// Bits needed to index `count` values; 0 for a single value.
pub fn bits_for(count: u64) -> usize {
    if count <= 1 {
        0
    } else {
        (64 - (count - 1).leading_zeros()) as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub s: usize,
    pub a: usize,
    pub next: usize,
    pub p: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub next: usize,
    pub value: u64,
}

/// On-disk configuration document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpConfig {
    pub num_states: usize,
    pub num_actions: usize,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default)]
    pub rewards: Option<Vec<RewardEntry>>,
    #[serde(default)]
    pub state_bits: Option<usize>,
    #[serde(default)]
    pub action_bits: Option<usize>,
    #[serde(default)]
    pub reward_bits: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSpec {
    num_states: usize,
    num_actions: usize,
    /// `transitions[s][a][s']`
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<u64>,
    state_bits: usize,
    action_bits: usize,
    reward_bits: usize,
}

/// Parses a TOML (or JSON, when the document starts with `{`) MDP configuration.
pub fn parse_mdp_config(text: &str) -> Result<MdpSpec> {
    let config: MdpConfig = if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| QmdpError::Config(e.to_string()))?
    } else {
        toml::from_str(text).map_err(|e| QmdpError::Config(e.to_string()))?
    };
    MdpSpec::from_config(&config)
}

impl MdpSpec {
    pub fn example() -> Self {
        parse_mdp_config(EXAMPLE_MDP_TOML).expect("bundled MDP config is valid")
    }

    pub fn from_config(config: &MdpConfig) -> Result<Self> {
        let (ns, na) = (config.num_states, config.num_actions);
        if ns == 0 || na == 0 {
            return Err(QmdpError::Config(
                "num_states and num_actions must be positive".into(),
            ));
        }
        let mut transitions = vec![vec![vec![0.0; ns]; na]; ns];
        for t in &config.transitions {
            if t.s >= ns || t.next >= ns || t.a >= na {
                return Err(QmdpError::Config(format!(
                    "transition (s{}, a{}) -> s{} references an undeclared state or action",
                    t.s, t.a, t.next
                )));
            }
            if !(0.0..=1.0).contains(&t.p) {
                return Err(QmdpError::Config(format!(
                    "transition (s{}, a{}) -> s{} has probability {} outside [0, 1]",
                    t.s, t.a, t.next, t.p
                )));
            }
            transitions[t.s][t.a][t.next] += t.p;
        }
        let mut rewards: Vec<u64> = (0..ns as u64).collect();
        if let Some(list) = &config.rewards {
            for r in list {
                if r.next >= ns {
                    return Err(QmdpError::Config(format!(
                        "reward for undeclared state s{}",
                        r.next
                    )));
                }
                rewards[r.next] = r.value;
            }
        }
        let max_reward = rewards.iter().copied().max().unwrap_or(0);
        let spec = Self {
            num_states: ns,
            num_actions: na,
            transitions,
            state_bits: config.state_bits.unwrap_or_else(|| bits_for(ns as u64)),
            action_bits: config.action_bits.unwrap_or_else(|| bits_for(na as u64)),
            reward_bits: config
                .reward_bits
                .unwrap_or_else(|| bits_for(max_reward + 1)),
            rewards,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec from a dense table with identity rewards and default widths.
    pub fn from_table(transitions: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let ns = transitions.len();
        let na = transitions.first().map_or(0, |r| r.len());
        let mut entries = Vec::new();
        for (s, row) in transitions.iter().enumerate() {
            for (a, dist) in row.iter().enumerate() {
                for (next, &p) in dist.iter().enumerate() {
                    if p != 0.0 {
                        entries.push(TransitionEntry { s, a, next, p });
                    }
                }
            }
        }
        Self::from_config(&MdpConfig {
            num_states: ns,
            num_actions: na,
            transitions: entries,
            rewards: None,
            state_bits: None,
            action_bits: None,
            reward_bits: None,
        })
    }

    /// Uniform probabilities over the given `(s, a, s')` support.
    pub fn uniform_over_support(
        num_states: usize,
        num_actions: usize,
        support: &BTreeSet<(u64, u64, u64)>,
    ) -> Result<Self> {
        let mut table = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
        for (s, row) in table.iter_mut().enumerate() {
            for (a, dist) in row.iter_mut().enumerate() {
                let nexts: Vec<usize> = support
                    .iter()
                    .filter(|t| t.0 as usize == s && t.1 as usize == a)
                    .map(|t| t.2 as usize)
                    .collect();
                for &n in &nexts {
                    if n >= num_states {
                        return Err(QmdpError::Config(format!("support names state s{n}")));
                    }
                    dist[n] = 1.0 / nexts.len() as f64;
                }
            }
        }
        Self::from_table(table)
    }

    /// Replaces the reward map.
    pub fn with_rewards(mut self, rewards: Vec<u64>) -> Result<Self> {
        if rewards.len() != self.num_states {
            return Err(QmdpError::Config(format!(
                "{} rewards for {} states",
                rewards.len(),
                self.num_states
            )));
        }
        self.rewards = rewards;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let sum: f64 = self.transitions[s][a].iter().sum();
                if (sum - 1.0).abs() > ROW_TOLERANCE {
                    return Err(QmdpError::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
        let fits = |count: u64, bits: usize| bits >= 64 || count <= 1u64 << bits;
        if !fits(self.num_states as u64, self.state_bits) {
            return Err(QmdpError::WidthOverflow(format!(
                "{} states do not fit in {} state bits",
                self.num_states, self.state_bits
            )));
        }
        if !fits(self.num_actions as u64, self.action_bits) {
            return Err(QmdpError::WidthOverflow(format!(
                "{} actions do not fit in {} action bits",
                self.num_actions, self.action_bits
            )));
        }
        if !fits(self.max_reward() + 1, self.reward_bits) {
            return Err(QmdpError::WidthOverflow(format!(
                "reward {} does not fit in {} reward bits",
                self.max_reward(),
                self.reward_bits
            )));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn state_bits(&self) -> usize {
        self.state_bits
    }
    pub fn action_bits(&self) -> usize {
        self.action_bits
    }
    pub fn reward_bits(&self) -> usize {
        self.reward_bits
    }

    /// P(s' | s, a) over all s'.
    pub fn row(&self, state: usize, action: usize) -> &[f64] {
        &self.transitions[state][action]
    }

    pub fn probability(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transitions[state][action][next]
    }

    pub fn reward_of(&self, next: usize) -> u64 {
        self.rewards[next]
    }

    pub fn rewards(&self) -> &[u64] {
        &self.rewards
    }

    pub fn max_reward(&self) -> u64 {
        self.rewards.iter().copied().max().unwrap_or(0)
    }

    /// True when every reward equals its next-state index.
    pub fn has_identity_rewards(&self) -> bool {
        self.reward_bits == self.state_bits
            && self.rewards.iter().enumerate().all(|(s, &r)| r == s as u64)
    }

    /// Nonzero `(s, a, s')` triples.
    pub fn support(&self) -> BTreeSet<(u64, u64, u64)> {
        let mut out = BTreeSet::new();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                for (n, &p) in self.transitions[s][a].iter().enumerate() {
                    if p > 0.0 {
                        out.insert((s as u64, a as u64, n as u64));
                    }
                }
            }
        }
        out
    }

    pub fn uniform_start(&self) -> Vec<f64> {
        vec![1.0 / self.num_states as f64; self.num_states]
    }

    pub fn start_at(&self, state: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states];
        v[state] = 1.0;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Step {
    pub state: u64,
    pub action: u64,
    pub next_state: u64,
    pub reward: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub steps: Vec<Step>,
    pub return_value: u64,
    /// Probability (analytic runs) or count (sampled runs).
    pub weight: f64,
}

impl TrajectoryRecord {
    pub fn new(steps: Vec<Step>, weight: f64) -> Self {
        let return_value = steps.iter().map(|s| s.reward).sum();
        Self {
            steps,
            return_value,
            weight,
        }
    }

    pub fn is_chained(&self) -> bool {
        self.steps.windows(2).all(|w| w[1].state == w[0].next_state)
    }
}

/// Agent behavior while generating trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActionPolicy {
    #[default]
    Uniform,
}

/// Every trajectory of length `steps` with nonzero probability.
pub fn classical_enumerate(
    mdp: &MdpSpec,
    steps: usize,
    start: &[f64],
    policy: ActionPolicy,
) -> Result<Vec<TrajectoryRecord>> {
    if steps == 0 {
        return Err(QmdpError::Domain("horizon must be at least 1".into()));
    }
    if start.len() != mdp.num_states {
        return Err(QmdpError::Domain(format!(
            "start distribution has {} entries for {} states",
            start.len(),
            mdp.num_states
        )));
    }
    let total: f64 = start.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE || start.iter().any(|&p| p < 0.0) {
        return Err(QmdpError::Domain(format!(
            "start distribution sums to {total}"
        )));
    }
    let action_factor = match policy {
        ActionPolicy::Uniform => 1.0 / mdp.num_actions as f64,
    };
    let mut out = Vec::new();
    let mut path = Vec::with_capacity(steps);
    for (s, &p) in start.iter().enumerate() {
        if p > 0.0 {
            extend(mdp, steps, s, p, action_factor, &mut path, &mut out);
        }
    }
    Ok(out)
}

fn extend(
    mdp: &MdpSpec,
    steps: usize,
    state: usize,
    weight: f64,
    action_factor: f64,
    path: &mut Vec<Step>,
    out: &mut Vec<TrajectoryRecord>,
) {
    if path.len() == steps {
        out.push(TrajectoryRecord::new(path.clone(), weight));
        return;
    }
    for a in 0..mdp.num_actions {
        for (next, &p) in mdp.transitions[state][a].iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            path.push(Step {
                state: state as u64,
                action: a as u64,
                next_state: next as u64,
                reward: mdp.rewards[next],
            });
            extend(
                mdp,
                steps,
                next,
                weight * action_factor * p,
                action_factor,
                path,
                out,
            );
            path.pop();
        }
    }
}

/// Packs trajectories into classical records.
///
/// Layout from the least-significant bit: for each step `t`, a group of
/// `[state][action][next][reward]` fields; the return register sits above
/// the last group. Printed most-significant first this reads
/// `return | step T-1 | ... | step 0`, with each group as `reward next action state`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryCodec {
    pub state_bits: usize,
    pub action_bits: usize,
    pub reward_bits: usize,
    pub return_bits: usize,
    pub steps: usize,
}

impl TrajectoryCodec {
    pub fn for_mdp(mdp: &MdpSpec, steps: usize) -> Self {
        Self {
            state_bits: mdp.state_bits,
            action_bits: mdp.action_bits,
            reward_bits: mdp.reward_bits,
            return_bits: return_width(steps, mdp.max_reward()),
            steps,
        }
    }

    pub fn group_width(&self) -> usize {
        2 * self.state_bits + self.action_bits + self.reward_bits
    }

    pub fn width(&self) -> usize {
        self.steps * self.group_width() + self.return_bits
    }

    /// Bit offsets of the fields of step `t`: (state, action, next, reward).
    pub fn offsets(&self, t: usize) -> (usize, usize, usize, usize) {
        let base = t * self.group_width();
        let action = base + self.state_bits;
        let next = action + self.action_bits;
        let reward = next + self.state_bits;
        (base, action, next, reward)
    }

    pub fn return_offset(&self) -> usize {
        self.steps * self.group_width()
    }

    pub fn encode(&self, record: &TrajectoryRecord) -> u64 {
        let mut key = 0u64;
        for (t, step) in record.steps.iter().enumerate() {
            let (s, a, n, r) = self.offsets(t);
            key |= step.state << s | step.action << a | step.next_state << n | step.reward << r;
        }
        key | (record.return_value << self.return_offset())
    }

    /// Decoded steps and the stored return value.
    pub fn decode(&self, key: u64) -> (Vec<Step>, u64) {
        let field = |off: usize, width: usize| (key >> off) & ((1u64 << width) - 1);
        let steps = (0..self.steps)
            .map(|t| {
                let (s, a, n, r) = self.offsets(t);
                Step {
                    state: field(s, self.state_bits),
                    action: field(a, self.action_bits),
                    next_state: field(n, self.state_bits),
                    reward: field(r, self.reward_bits),
                }
            })
            .collect();
        (steps, field(self.return_offset(), self.return_bits))
    }

    /// Decodes a record into a trajectory whose return is the stored register value.
    pub fn decode_record(&self, key: u64, weight: f64) -> TrajectoryRecord {
        let (steps, stored) = self.decode(key);
        TrajectoryRecord {
            steps,
            return_value: stored,
            weight,
        }
    }
}

/// Width of a return register holding sums up to `steps · max_reward`.
pub fn return_width(steps: usize, max_reward: u64) -> usize {
    bits_for(steps as u64 * max_reward + 1).max(1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: String,
    pub bits: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
}

impl Corpus {
    pub fn reference() -> Self {
        Self::parse_csv(REFERENCE_CORPUS_CSV).expect("bundled corpus is valid")
    }

    /// Parses `id,bits` lines after a one-line header.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            None => return Err(QmdpError::EmptyCorpus),
            Some(h) if h.trim() == "id,bits" => {}
            Some(h) => {
                return Err(QmdpError::Format(format!(
                    "expected header `id,bits`, found {h:?}"
                )))
            }
        }
        let mut entries = Vec::new();
        let mut ids = BTreeSet::new();
        for (n, line) in lines.enumerate() {
            let (id, bits) = line
                .split_once(',')
                .ok_or_else(|| QmdpError::MalformedCorpus {
                    id: format!("line {}", n + 2),
                    reason: "missing comma".into(),
                })?;
            let (id, bits) = (id.trim().to_string(), bits.trim().to_string());
            if bits.is_empty() || !bits.chars().all(|c| c == '0' || c == '1') {
                return Err(QmdpError::MalformedCorpus {
                    id,
                    reason: format!("{bits:?} is not a binary string"),
                });
            }
            if !ids.insert(id.clone()) {
                return Err(QmdpError::MalformedCorpus {
                    id,
                    reason: "duplicate id".into(),
                });
            }
            entries.push(CorpusEntry { id, bits });
        }
        if entries.is_empty() {
            return Err(QmdpError::EmptyCorpus);
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn id_of(&self, bits: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.bits == bits)
            .map(|e| e.id.as_str())
    }

    pub fn bits_of(&self, id: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .map(|e| e.bits.as_str())
    }

    pub fn bit_set(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.bits.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub id: String,
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportReport {
    /// Union of `(s, a, s')` over every step of every entry.
    pub triples: BTreeSet<(u64, u64, u64)>,
    /// Triples observed at each time step.
    pub per_step: Vec<BTreeSet<(u64, u64, u64)>>,
    pub violations: Vec<Violation>,
    /// Decoded entries keyed by id, in corpus order.
    pub decoded: Vec<(String, TrajectoryRecord)>,
}

/// Decodes every entry and collects consistency violations without failing.
pub fn audit_corpus(corpus: &Corpus, codec: &TrajectoryCodec) -> Result<SupportReport> {
    let mut report = SupportReport {
        triples: BTreeSet::new(),
        per_step: vec![BTreeSet::new(); codec.steps],
        violations: Vec::new(),
        decoded: Vec::new(),
    };
    for entry in &corpus.entries {
        if entry.bits.len() != codec.width() {
            return Err(QmdpError::MalformedCorpus {
                id: entry.id.clone(),
                reason: format!("{} bits, expected {}", entry.bits.len(), codec.width()),
            });
        }
        let key = crate::circuit::parse_bitstring(&entry.bits)?;
        let record = codec.decode_record(key, 1.0);
        let mut sum = 0u64;
        for (t, step) in record.steps.iter().enumerate() {
            report
                .triples
                .insert((step.state, step.action, step.next_state));
            report.per_step[t].insert((step.state, step.action, step.next_state));
            if step.reward != step.next_state {
                report.violations.push(Violation {
                    id: entry.id.clone(),
                    step: t,
                    reason: format!(
                        "reward {} differs from next state {}",
                        step.reward, step.next_state
                    ),
                });
            }
            if t > 0 && step.state != record.steps[t - 1].next_state {
                report.violations.push(Violation {
                    id: entry.id.clone(),
                    step: t,
                    reason: format!(
                        "state {} does not continue from next state {}",
                        step.state,
                        record.steps[t - 1].next_state
                    ),
                });
            }
            sum += step.reward;
        }
        if sum != record.return_value {
            report.violations.push(Violation {
                id: entry.id.clone(),
                step: codec.steps,
                reason: format!(
                    "return prefix {} differs from reward sum {sum}",
                    record.return_value
                ),
            });
        }
        report.decoded.push((entry.id.clone(), record));
    }
    Ok(report)
}

/// Transition support implied by a corpus; fails on the first inconsistency.
pub fn extract_support_from_corpus(
    corpus: &Corpus,
    codec: &TrajectoryCodec,
) -> Result<SupportReport> {
    let report = audit_corpus(corpus, codec)?;
    if let Some(v) = report.violations.first() {
        return Err(QmdpError::Consistency {
            id: v.id.clone(),
            step: v.step,
            reason: v.reason.clone(),
        });
    }
    Ok(report)
}

/// Groups trajectories by return value.
pub fn group_by_return(records: &[TrajectoryRecord]) -> BTreeMap<u64, Vec<&TrajectoryRecord>> {
    let mut groups: BTreeMap<u64, Vec<&TrajectoryRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.return_value).or_default().push(r);
    }
    groups
}
