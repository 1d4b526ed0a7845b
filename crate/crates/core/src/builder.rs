//! Compiles an [`MdpSpec`] into trajectory-generating circuits.
//!
//! One interaction step acts on a bank of registers `|s⟩|a⟩|s'⟩|r⟩`:
//! Hadamards put state and action into uniform superposition, a cascade of
//! multi-controlled Ry rotations loads P(s'|s,a) into the next-state
//! register, CNOTs copy the next state into the reward register, and a
//! ripple increment adds the reward into a shared return register `|g⟩`.
//!
//! The dynamic program keeps a single bank and recycles it with
//! mid-circuit measurement, reset and a CNOT hand-off of `s'` into `s`.
//! The static program allocates one bank per step and is measurement-free
//! until the end, which makes it usable as a Grover preparation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{CircuitProgram, Instruction};
use crate::error::{QmdpError, Result};
use crate::mdp::{MdpSpec, TrajectoryCodec};
use crate::statevector::{Control, GateKind, Polarity, MAX_QUBITS};

/// Qubits of one interaction bank; index 0 of each register is its least-significant bit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRegisters {
    pub state: Vec<usize>,
    pub action: Vec<usize>,
    pub next_state: Vec<usize>,
    pub reward: Vec<usize>,
}

impl StepRegisters {
    fn at(base: usize, codec: &TrajectoryCodec) -> Self {
        let range = |start: usize, len: usize| (start..start + len).collect::<Vec<_>>();
        let state = range(base, codec.state_bits);
        let action = range(base + codec.state_bits, codec.action_bits);
        let next_state = range(
            base + codec.state_bits + codec.action_bits,
            codec.state_bits,
        );
        let reward = range(
            base + 2 * codec.state_bits + codec.action_bits,
            codec.reward_bits,
        );
        Self {
            state,
            action,
            next_state,
            reward,
        }
    }

    pub fn width(&self) -> usize {
        self.state.len() + self.action.len() + self.next_state.len() + self.reward.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    State,
    Action,
    NextState,
    Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterLayout {
    /// One bank for the dynamic program, one per step for the static program.
    pub banks: Vec<StepRegisters>,
    pub return_qubits: Vec<usize>,
    /// Classical record layout; also fixes the step count.
    pub codec: TrajectoryCodec,
}

impl RegisterLayout {
    fn new(mdp: &MdpSpec, steps: usize, num_banks: usize) -> Result<Self> {
        if steps == 0 {
            return Err(QmdpError::Domain("horizon must be at least 1".into()));
        }
        if mdp.num_states() != 1 << mdp.state_bits() || mdp.num_actions() != 1 << mdp.action_bits()
        {
            return Err(QmdpError::UnsupportedLayout(format!(
                "Hadamard initialization needs power-of-two registers: {} states in {} bits, {} actions in {} bits",
                mdp.num_states(),
                mdp.state_bits(),
                mdp.num_actions(),
                mdp.action_bits()
            )));
        }
        let codec = TrajectoryCodec::for_mdp(mdp, steps);
        let group = codec.group_width();
        let total = num_banks * group + codec.return_bits;
        if total > MAX_QUBITS {
            return Err(QmdpError::WidthExceedsCeiling {
                requested: total,
                ceiling: MAX_QUBITS,
            });
        }
        let banks = (0..num_banks)
            .map(|b| StepRegisters::at(b * group, &codec))
            .collect();
        let return_qubits = (num_banks * group..total).collect();
        Ok(Self {
            banks,
            return_qubits,
            codec,
        })
    }

    pub fn steps(&self) -> usize {
        self.codec.steps
    }

    /// Registers used at step `t`.
    pub fn bank(&self, t: usize) -> &StepRegisters {
        &self.banks[t.min(self.banks.len() - 1)]
    }

    pub fn num_qubits(&self) -> usize {
        self.banks.len() * self.codec.group_width() + self.return_qubits.len()
    }

    pub fn interaction_qubits(&self) -> usize {
        self.banks.iter().map(StepRegisters::width).sum()
    }

    /// Classical bits holding `role` at step `t`, least-significant first.
    pub fn classical_bits(&self, t: usize, role: Role) -> Vec<usize> {
        let (s, a, n, r) = self.codec.offsets(t);
        let (start, len) = match role {
            Role::State => (s, self.codec.state_bits),
            Role::Action => (a, self.codec.action_bits),
            Role::NextState => (n, self.codec.state_bits),
            Role::Reward => (r, self.codec.reward_bits),
        };
        (start..start + len).collect()
    }

    pub fn return_classical_bits(&self) -> Vec<usize> {
        let start = self.codec.return_offset();
        (start..start + self.codec.return_bits).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub interaction_qubit_count: usize,
    pub total_qubit_count: usize,
    pub gate_counts: BTreeMap<String, usize>,
    pub measure_count: usize,
    pub reset_count: usize,
}

impl BuildReport {
    fn tally(layout: &RegisterLayout, instructions: &[Instruction]) -> Self {
        let mut report = Self {
            interaction_qubit_count: layout.interaction_qubits(),
            total_qubit_count: layout.num_qubits(),
            gate_counts: BTreeMap::new(),
            measure_count: 0,
            reset_count: 0,
        };
        for instr in instructions {
            match instr {
                Instruction::Gate { gate, .. } => {
                    *report.gate_counts.entry(gate.kind_name()).or_insert(0) += 1
                }
                Instruction::Measure { .. } => report.measure_count += 1,
                Instruction::Reset { .. } => report.reset_count += 1,
                Instruction::Barrier(_) => {}
            }
        }
        report
    }

    /// TOML summary.
    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct BuiltCircuit {
    pub program: CircuitProgram,
    pub layout: RegisterLayout,
    pub report: BuildReport,
}

fn controls_for(qubits: &[usize], value: u64) -> impl Iterator<Item = Control> + '_ {
    qubits.iter().enumerate().map(move |(i, &q)| Control {
        qubit: q,
        polarity: Polarity::from_bit((value >> i) & 1 == 1),
    })
}

fn hadamards(qubits: &[usize]) -> impl Iterator<Item = Instruction> + '_ {
    qubits
        .iter()
        .map(|&q| Instruction::gate(GateKind::Hadamard, q))
}

fn copy_register(from: &[usize], to: &[usize]) -> Vec<Instruction> {
    from.iter()
        .zip(to)
        .map(|(&c, &t)| Instruction::gate(GateKind::cx(c), t))
        .collect()
}

/// Uniform superposition over state and action codes.
pub fn build_init_block(bank: &StepRegisters) -> Vec<Instruction> {
    hadamards(&bank.state)
        .chain(hadamards(&bank.action))
        .collect()
}

/// Loads P(·|s,a) into the next-state register for every (s, a).
///
/// Each row is a binary-splitting cascade from the most significant next-state
/// bit down; a rotation at level k is additionally controlled on the already
/// fixed higher bits. Branches with certain outcome use X instead of Ry(π).
pub fn build_transition_block(mdp: &MdpSpec, bank: &StepRegisters) -> Result<Vec<Instruction>> {
    let mut out = Vec::new();
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions() {
            let row = mdp.row(s, a);
            if let Some(bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
                return Err(QmdpError::UnsupportedDistribution {
                    state: s,
                    action: a,
                    reason: format!("probability {bad}"),
                });
            }
            let controls: Vec<Control> = controls_for(&bank.state, s as u64)
                .chain(controls_for(&bank.action, a as u64))
                .collect();
            if bank.next_state.is_empty() {
                continue;
            }
            split(
                row,
                &bank.next_state,
                bank.next_state.len() - 1,
                0,
                controls,
                &mut out,
            );
        }
    }
    Ok(out)
}

fn split(
    row: &[f64],
    next: &[usize],
    bit: usize,
    prefix: usize,
    controls: Vec<Control>,
    out: &mut Vec<Instruction>,
) {
    let mass = |value: usize| -> f64 {
        row.iter()
            .enumerate()
            .filter(|(code, _)| code >> bit == (prefix << 1) | value)
            .map(|(_, p)| p)
            .sum()
    };
    let (m0, m1) = (mass(0), mass(1));
    if m0 + m1 <= 0.0 {
        return;
    }
    if m1 > 0.0 {
        let gate = if m0 == 0.0 {
            GateKind::PauliX
        } else {
            GateKind::ry_for_probability(m1 / (m0 + m1))
        };
        out.push(Instruction::gate(
            GateKind::controlled(gate, controls.clone()),
            next[bit],
        ));
    }
    if bit == 0 {
        return;
    }
    for (value, m) in [(0usize, m0), (1, m1)] {
        if m > 0.0 {
            let mut c = controls.clone();
            c.push(Control {
                qubit: next[bit],
                polarity: Polarity::from_bit(value == 1),
            });
            split(row, next, bit - 1, (prefix << 1) | value, c, out);
        }
    }
}

/// Copies the next-state bits into the reward register.
pub fn build_reward_block(mdp: &MdpSpec, bank: &StepRegisters) -> Result<Vec<Instruction>> {
    if !mdp.has_identity_rewards() {
        return Err(QmdpError::NonCopyReward);
    }
    Ok(copy_register(&bank.next_state, &bank.reward))
}

/// Writes `reward_of(s')` into the reward register for an arbitrary reward map.
pub fn build_reward_block_general(mdp: &MdpSpec, bank: &StepRegisters) -> Result<Vec<Instruction>> {
    let mut out = Vec::new();
    for next in 0..mdp.num_states() {
        let value = mdp.reward_of(next);
        if value >> bank.reward.len() != 0 {
            return Err(QmdpError::WidthOverflow(format!(
                "reward {value} does not fit in {} reward qubits",
                bank.reward.len()
            )));
        }
        let controls: Vec<Control> = controls_for(&bank.next_state, next as u64).collect();
        for (j, &q) in bank.reward.iter().enumerate() {
            if (value >> j) & 1 == 1 {
                out.push(Instruction::gate(
                    GateKind::controlled(GateKind::PauliX, controls.clone()),
                    q,
                ));
            }
        }
    }
    Ok(out)
}

/// Reward block for `mdp`: CNOT copies when possible, multi-controlled X otherwise.
pub fn reward_block_for(mdp: &MdpSpec, bank: &StepRegisters) -> Result<Vec<Instruction>> {
    match build_reward_block(mdp, bank) {
        Err(QmdpError::NonCopyReward) => build_reward_block_general(mdp, bank),
        other => other,
    }
}

/// In-place `return += reward (mod 2^len)`.
///
/// Reward bit i triggers an increment of `return[i..]`; each increment flips
/// the highest bit first, controlled on every lower bit of the slice being 1.
pub fn build_return_accumulate_block(reward: &[usize], ret: &[usize]) -> Vec<Instruction> {
    let mut out = Vec::new();
    for (i, &r) in reward.iter().enumerate() {
        for j in (i..ret.len()).rev() {
            let controls: Vec<Control> = std::iter::once(Control::on_one(r))
                .chain(ret[i..j].iter().map(|&q| Control::on_one(q)))
                .collect();
            out.push(Instruction::gate(
                GateKind::controlled(GateKind::PauliX, controls),
                ret[j],
            ));
        }
    }
    out
}

/// CNOT hand-off of the next state into a freshly reset state register.
pub fn build_state_propagation_block(from_next: &[usize], to_state: &[usize]) -> Vec<Instruction> {
    copy_register(from_next, to_state)
}

fn measure_step(layout: &RegisterLayout, t: usize, bank: &StepRegisters) -> Vec<Instruction> {
    [
        (Role::Reward, &bank.reward),
        (Role::NextState, &bank.next_state),
        (Role::Action, &bank.action),
        (Role::State, &bank.state),
    ]
    .into_iter()
    .flat_map(|(role, qubits)| {
        qubits
            .iter()
            .zip(layout.classical_bits(t, role))
            .map(|(&qubit, cbit)| Instruction::Measure { qubit, cbit })
            .collect::<Vec<_>>()
    })
    .collect()
}

fn measure_return(layout: &RegisterLayout) -> Vec<Instruction> {
    layout
        .return_qubits
        .iter()
        .zip(layout.return_classical_bits())
        .map(|(&qubit, cbit)| Instruction::Measure { qubit, cbit })
        .collect()
}

/// Terminal measurement of every bank and the return register of a static layout.
pub fn measure_all(layout: &RegisterLayout) -> Vec<Instruction> {
    let mut out: Vec<Instruction> = (0..layout.banks.len())
        .flat_map(|t| measure_step(layout, t, &layout.banks[t]))
        .collect();
    out.extend(measure_return(layout));
    out
}

fn resets(qubits: &[usize]) -> impl Iterator<Item = Instruction> + '_ {
    qubits.iter().map(|&qubit| Instruction::Reset { qubit })
}

/// Qubit-reusing program: one interaction bank recycled across `steps` steps.
pub fn build_dynamic_program(mdp: &MdpSpec, steps: usize) -> Result<BuiltCircuit> {
    let layout = RegisterLayout::new(mdp, steps, 1)?;
    let bank = layout.bank(0).clone();
    let transition = build_transition_block(mdp, &bank)?;
    let reward = reward_block_for(mdp, &bank)?;
    let accumulate = build_return_accumulate_block(&bank.reward, &layout.return_qubits);

    let mut instrs = build_init_block(&bank);
    for t in 0..steps {
        instrs.push(Instruction::Barrier(format!("step {t}")));
        instrs.extend(transition.iter().cloned());
        instrs.extend(reward.iter().cloned());
        instrs.extend(accumulate.iter().cloned());
        instrs.extend(measure_step(&layout, t, &bank));
        if t + 1 < steps {
            instrs.extend(resets(&bank.state));
            instrs.extend(build_state_propagation_block(&bank.next_state, &bank.state));
            instrs.extend(resets(&bank.next_state));
            instrs.extend(resets(&bank.action));
            instrs.extend(resets(&bank.reward));
            instrs.extend(hadamards(&bank.action));
        }
    }
    instrs.push(Instruction::Barrier("return".into()));
    instrs.extend(measure_return(&layout));

    let report = BuildReport::tally(&layout, &instrs);
    let program = CircuitProgram::new(layout.num_qubits(), layout.codec.width(), instrs)?;
    Ok(BuiltCircuit {
        program,
        layout,
        report,
    })
}

/// Gate-only unrolled preparation: one bank per step, shared return register.
pub fn build_static_preparation(
    mdp: &MdpSpec,
    steps: usize,
) -> Result<(Vec<Instruction>, RegisterLayout)> {
    let layout = RegisterLayout::new(mdp, steps, steps)?;
    let mut instrs = build_init_block(layout.bank(0));
    for t in 0..steps {
        let bank = layout.bank(t);
        instrs.push(Instruction::Barrier(format!("step {t}")));
        if t > 0 {
            instrs.extend(build_state_propagation_block(
                &layout.bank(t - 1).next_state,
                &bank.state,
            ));
            instrs.extend(hadamards(&bank.action));
        }
        instrs.extend(build_transition_block(mdp, bank)?);
        instrs.extend(reward_block_for(mdp, bank)?);
        instrs.extend(build_return_accumulate_block(
            &bank.reward,
            &layout.return_qubits,
        ));
    }
    Ok((instrs, layout))
}

/// Unrolled program; with `with_measurement` every bank and the return register
/// are measured at the end into the same record layout as the dynamic program.
pub fn build_static_program(
    mdp: &MdpSpec,
    steps: usize,
    with_measurement: bool,
) -> Result<BuiltCircuit> {
    let (mut instrs, layout) = build_static_preparation(mdp, steps)?;
    if with_measurement {
        instrs.push(Instruction::Barrier("measure".into()));
        instrs.extend(measure_all(&layout));
    }
    let report = BuildReport::tally(&layout, &instrs);
    let program = CircuitProgram::new(layout.num_qubits(), layout.codec.width(), instrs)?;
    Ok(BuiltCircuit {
        program,
        layout,
        report,
    })
}
