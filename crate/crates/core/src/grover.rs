//! Amplitude amplification over the measurement-free static preparation.
//!
//! Grover search needs a coherent preparation `A`, so everything here runs on
//! the unrolled static circuit; mid-circuit measurement in the dynamic program
//! would collapse the superposition the diffuser reflects about.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::builder::{build_static_preparation, measure_all, RegisterLayout};
use crate::circuit::{
    apply_segment, invert_segment, sample_state, Instruction, OutcomeDistribution,
};
use crate::error::{QmdpError, Result};
use crate::mdp::{MdpSpec, TrajectoryCodec, TrajectoryRecord};
use crate::statevector::{Control, GateKind, Polarity, StateVector, PROBABILITY_FLOOR};

/// Which trajectories the oracle marks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkPredicate {
    pub target_return: u64,
    /// Required state at t = 0.
    pub start_state: Option<u64>,
    /// Required next state at the final step.
    pub end_state: Option<u64>,
}

impl MarkPredicate {
    pub fn new(target_return: u64) -> Self {
        Self {
            target_return,
            start_state: None,
            end_state: None,
        }
    }

    pub fn with_start(mut self, state: u64) -> Self {
        self.start_state = Some(state);
        self
    }

    pub fn with_end(mut self, state: u64) -> Self {
        self.end_state = Some(state);
        self
    }

    /// Required `(qubit, bit)` pairs on a static layout.
    pub fn qubit_pattern(&self, layout: &RegisterLayout) -> Result<Vec<(usize, bool)>> {
        let codec = &layout.codec;
        let mut out = Vec::new();
        push_code(
            &mut out,
            "return",
            self.target_return,
            &layout.return_qubits,
        )?;
        if let Some(s) = self.start_state {
            push_code(&mut out, "start state", s, &layout.banks[0].state)?;
        }
        if let Some(s) = self.end_state {
            let last = &layout.banks[layout.banks.len() - 1];
            push_code(&mut out, "end state", s, &last.next_state)?;
        }
        if out.is_empty() || codec.steps == 0 {
            return Err(QmdpError::EmptyPredicate("no constrained qubits".into()));
        }
        Ok(out)
    }

    /// Whether a decoded record satisfies the predicate.
    pub fn matches_record(&self, record: &TrajectoryRecord) -> bool {
        let (Some(first), Some(last)) = (record.steps.first(), record.steps.last()) else {
            return false;
        };
        record.return_value == self.target_return
            && self.start_state.is_none_or(|s| first.state == s)
            && self.end_state.is_none_or(|s| last.next_state == s)
    }

    pub fn matches_key(&self, codec: &TrajectoryCodec, key: u64) -> bool {
        self.matches_record(&codec.decode_record(key, 0.0))
    }
}

fn push_code(out: &mut Vec<(usize, bool)>, what: &str, code: u64, qubits: &[usize]) -> Result<()> {
    if qubits.len() < 64 && code >> qubits.len() != 0 {
        return Err(QmdpError::EmptyPredicate(format!(
            "{what} code {code} does not fit in {} bits",
            qubits.len()
        )));
    }
    out.extend(
        qubits
            .iter()
            .enumerate()
            .map(|(i, &q)| (q, code >> i & 1 == 1)),
    );
    Ok(())
}

/// `(mask, value)` selecting basis indices that satisfy a qubit pattern.
fn pattern_mask(pattern: &[(usize, bool)]) -> (usize, usize) {
    pattern.iter().fold((0, 0), |(m, v), &(q, b)| {
        (m | 1 << q, if b { v | 1 << q } else { v })
    })
}

/// Multi-controlled Z that negates exactly the basis states matching `pattern`.
///
/// Zero bits become trigger-on-0 controls. Z is symmetric in its qubits, so a
/// qubit required to be 1 serves as the target when there is one; otherwise the
/// target is conjugated by X.
pub fn phase_flip_pattern(pattern: &[(usize, bool)]) -> Result<Vec<Instruction>> {
    let pos = pattern.iter().position(|&(_, b)| b).unwrap_or(0);
    let &(target, target_bit) = pattern
        .get(pos)
        .ok_or_else(|| QmdpError::EmptyPredicate("empty pattern".into()))?;
    let controls = pattern
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != pos)
        .map(|(_, &(qubit, bit))| Control {
            qubit,
            polarity: Polarity::from_bit(bit),
        })
        .collect();
    let flip = Instruction::gate(GateKind::controlled(GateKind::PauliZ, controls), target);
    Ok(if target_bit {
        vec![flip]
    } else {
        let x = Instruction::gate(GateKind::PauliX, target);
        vec![x.clone(), flip, x]
    })
}

/// Phase oracle for `predicate` on a static layout.
pub fn build_oracle(
    predicate: &MarkPredicate,
    layout: &RegisterLayout,
) -> Result<Vec<Instruction>> {
    phase_flip_pattern(&predicate.qubit_pattern(layout)?)
}

/// Reflection about `preparation |0…0⟩`, with the −1 placed on |0…0⟩.
pub fn build_diffuser(preparation: &[Instruction], num_qubits: usize) -> Result<Vec<Instruction>> {
    let zeros: Vec<(usize, bool)> = (0..num_qubits).map(|q| (q, false)).collect();
    let mut out = invert_segment(preparation)?;
    out.extend(phase_flip_pattern(&zeros)?);
    out.extend_from_slice(preparation);
    Ok(out)
}

/// Success probability after `j` iterations from marked mass `p`.
pub fn success_probability(p: f64, j: usize) -> f64 {
    let theta = p.sqrt().asin();
    ((2 * j + 1) as f64 * theta).sin().powi(2)
}

/// Iteration count maximizing `sin²((2k+1)θ)`.
///
/// The textbook closed form `round(π/(4θ) − 1/2)` is evaluated by comparing
/// both neighbours, breaking ties toward fewer iterations.
pub fn optimal_iterations(p: f64) -> Result<usize> {
    if !(p > 0.0 && p < 1.0) {
        return Err(QmdpError::Domain(format!(
            "marked probability {p} is outside (0, 1)"
        )));
    }
    let x = PI / (4.0 * p.sqrt().asin()) - 0.5;
    let lo = x.floor().max(0.0) as usize;
    let hi = x.ceil().max(0.0) as usize;
    let (s_lo, s_hi) = (success_probability(p, lo), success_probability(p, hi));
    Ok(if s_hi > s_lo + 1e-12 { hi } else { lo })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Iterations {
    Auto,
    Fixed(usize),
}

impl Iterations {
    fn resolve(self, p: f64) -> Result<usize> {
        match self {
            Iterations::Fixed(k) => Ok(k),
            // Nothing to amplify when everything is already marked.
            Iterations::Auto if p >= 1.0 - PROBABILITY_FLOOR => Ok(0),
            Iterations::Auto => optimal_iterations(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroverPlan {
    pub predicate: MarkPredicate,
    pub iterations: usize,
    /// Marked mass of the bare preparation.
    pub marked_probability: f64,
    pub preparation: Vec<Instruction>,
}

/// State after amplification plus the per-iteration success curves.
#[derive(Debug, Clone)]
pub struct Amplification {
    pub iterations: usize,
    pub marked_probability: f64,
    pub analytic: Vec<f64>,
    pub simulated: Vec<f64>,
    pub state: StateVector,
}

/// Runs `(U_s U_w)^k` on a generic gate-only preparation.
pub fn amplify(
    preparation: &[Instruction],
    num_qubits: usize,
    oracle: &[Instruction],
    marked: impl Fn(usize) -> bool,
    iterations: Iterations,
) -> Result<Amplification> {
    let mut state = StateVector::init_zero(num_qubits)?;
    apply_segment(&mut state, preparation)?;
    amplify_prepared(
        state,
        preparation,
        oracle,
        marked,
        iterations,
        |_, _| Ok(()),
    )
}

fn amplify_prepared(
    mut state: StateVector,
    preparation: &[Instruction],
    oracle: &[Instruction],
    marked: impl Fn(usize) -> bool,
    iterations: Iterations,
    mut observe: impl FnMut(usize, &StateVector) -> Result<()>,
) -> Result<Amplification> {
    let p = state.mass_where(&marked);
    if p < PROBABILITY_FLOOR {
        return Err(QmdpError::ZeroMarkedMass(p));
    }
    let k = iterations.resolve(p)?;
    let diffuser = build_diffuser(preparation, state.num_qubits())?;
    let mut simulated = vec![p];
    observe(0, &state)?;
    for j in 1..=k {
        apply_segment(&mut state, oracle)?;
        apply_segment(&mut state, &diffuser)?;
        simulated.push(state.mass_where(&marked));
        observe(j, &state)?;
    }
    Ok(Amplification {
        iterations: k,
        marked_probability: p,
        analytic: (0..=k).map(|j| success_probability(p, j)).collect(),
        simulated,
        state,
    })
}

#[derive(Debug, Clone)]
pub struct GroverRun {
    pub plan: GroverPlan,
    pub layout: RegisterLayout,
    /// Marked trajectories weighted by their pre-amplification probability.
    pub marked: Vec<TrajectoryRecord>,
    pub analytic_curve: Vec<f64>,
    pub simulated_curve: Vec<f64>,
    /// Fraction of shots landing on a marked record, per iteration.
    pub sampled_curve: Vec<f64>,
    /// Shots over the full record after the final iteration.
    pub distribution: OutcomeDistribution,
}

/// Record key a basis index collapses to under `measures`.
fn index_to_key(index: usize, measures: &[Instruction]) -> u64 {
    measures.iter().fold(0, |key, m| match *m {
        Instruction::Measure { qubit, cbit } if index >> qubit & 1 == 1 => key | 1 << cbit,
        _ => key,
    })
}

fn prepare(mdp: &MdpSpec, steps: usize) -> Result<(Vec<Instruction>, RegisterLayout, StateVector)> {
    let (prep, layout) = build_static_preparation(mdp, steps)?;
    let mut state = StateVector::init_zero(layout.num_qubits())?;
    apply_segment(&mut state, &prep)?;
    Ok((prep, layout, state))
}

/// Builds the static preparation and amplifies trajectories matching `predicate`.
pub fn run_grover(
    mdp: &MdpSpec,
    steps: usize,
    predicate: MarkPredicate,
    iterations: Iterations,
    shots: u64,
    seed: u64,
) -> Result<GroverRun> {
    let (prep, layout, state) = prepare(mdp, steps)?;
    run_prepared(prep, layout, state, predicate, iterations, shots, seed)
}

fn run_prepared(
    preparation: Vec<Instruction>,
    layout: RegisterLayout,
    state: StateVector,
    predicate: MarkPredicate,
    iterations: Iterations,
    shots: u64,
    seed: u64,
) -> Result<GroverRun> {
    let (mask, value) = pattern_mask(&predicate.qubit_pattern(&layout)?);
    let marked_fn = |i: usize| i & mask == value;
    let oracle = build_oracle(&predicate, &layout)?;
    let measures = measure_all(&layout);
    let codec = layout.codec;
    let width = codec.width();

    let marked: Vec<TrajectoryRecord> = {
        let mut v: Vec<(u64, f64)> = state
            .support(PROBABILITY_FLOOR)
            .into_iter()
            .filter(|&(i, _)| marked_fn(i))
            .map(|(i, p)| (index_to_key(i, &measures), p))
            .collect();
        v.sort_by_key(|&(k, _)| k);
        v.into_iter()
            .map(|(k, p)| codec.decode_record(k, p))
            .collect()
    };

    let mut sampled_curve = Vec::new();
    let mut distribution = None;
    let amp = amplify_prepared(
        state,
        &preparation,
        &oracle,
        marked_fn,
        iterations,
        |_, s| {
            let dist = sample_state(s, &measures, width, shots, seed)?;
            let hits = dist
                .entries()
                .iter()
                .filter(|(&k, _)| predicate.matches_key(&codec, k))
                .fold(0.0, |acc, (_, &c)| acc + c);
            sampled_curve.push(hits / dist.total());
            distribution = Some(dist);
            Ok(())
        },
    )?;

    Ok(GroverRun {
        plan: GroverPlan {
            predicate,
            iterations: amp.iterations,
            marked_probability: amp.marked_probability,
            preparation,
        },
        layout,
        marked,
        analytic_curve: amp.analytic,
        simulated_curve: amp.simulated,
        sampled_curve,
        distribution: distribution.expect("iteration 0 is always observed"),
    })
}

/// One candidate return examined by [`find_max_return`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub target_return: u64,
    pub marked_probability: f64,
}

#[derive(Debug, Clone)]
pub struct MaxReturnSearch {
    pub best_return: u64,
    pub witnesses: Vec<TrajectoryRecord>,
    pub log: Vec<ScanEntry>,
    pub run: GroverRun,
}

/// Scans candidate returns from `steps · max_reward` downward and amplifies the
/// first one with nonzero marked mass.
pub fn find_max_return(
    mdp: &MdpSpec,
    steps: usize,
    start_state: Option<u64>,
    shots: u64,
    seed: u64,
) -> Result<MaxReturnSearch> {
    if let Some(s) = start_state {
        if s >= mdp.num_states() as u64 {
            return Err(QmdpError::NoTrajectory(s));
        }
    }
    let (prep, layout, state) = prepare(mdp, steps)?;
    let register_max = (1u64 << layout.codec.return_bits) - 1;
    let top = (steps as u64 * mdp.max_reward()).min(register_max);
    let mut log = Vec::new();
    for g in (0..=top).rev() {
        let mut predicate = MarkPredicate::new(g);
        predicate.start_state = start_state;
        let (mask, value) = pattern_mask(&predicate.qubit_pattern(&layout)?);
        let p = state.mass_where(|i| i & mask == value);
        log.push(ScanEntry {
            target_return: g,
            marked_probability: p,
        });
        if p >= PROBABILITY_FLOOR {
            let run = run_prepared(
                prep,
                layout,
                state,
                predicate,
                Iterations::Auto,
                shots,
                seed,
            )?;
            return Ok(MaxReturnSearch {
                best_return: g,
                witnesses: run.marked.clone(),
                log,
                run,
            });
        }
    }
    Err(QmdpError::NoTrajectory(start_state.unwrap_or(0)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyConflict {
    pub state: u64,
    pub actions: BTreeSet<u64>,
    pub chosen: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: BTreeMap<u64, u64>,
    pub conflicts: Vec<PolicyConflict>,
}

/// Orders records by their printed bit string: return first, then the last
/// step down to the first, each as reward, next, action, state.
fn bitstring_order(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Ordering {
    let fields = |r: &TrajectoryRecord| {
        r.steps
            .iter()
            .rev()
            .map(|s| (s.reward, s.next_state, s.action, s.state))
            .collect::<Vec<_>>()
    };
    a.return_value
        .cmp(&b.return_value)
        .then_with(|| fields(a).cmp(&fields(b)))
}

/// Action taken in each visited state; disagreements resolve toward the most
/// probable witness, then the lowest bit string.
pub fn extract_policy(witnesses: &[TrajectoryRecord]) -> PolicyReport {
    let mut ranked: Vec<&TrajectoryRecord> = witnesses.iter().collect();
    ranked.sort_by(|a, b| {
        b.weight
            .partial_cmp(&a.weight)
            .unwrap_or(Ordering::Equal)
            .then_with(|| bitstring_order(a, b))
    });
    let mut policy = BTreeMap::new();
    let mut seen: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for record in ranked {
        for step in &record.steps {
            policy.entry(step.state).or_insert(step.action);
            seen.entry(step.state).or_default().insert(step.action);
        }
    }
    let conflicts = seen
        .into_iter()
        .filter(|(_, actions)| actions.len() > 1)
        .map(|(state, actions)| PolicyConflict {
            state,
            actions,
            chosen: policy[&state],
        })
        .collect();
    PolicyReport { policy, conflicts }
}
