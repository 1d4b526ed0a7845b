//! Instruction-level circuits with mid-circuit measurement and reset.
//!
//! `exact_distribution` is the reference semantics: it branches the state at
//! every non-terminal measurement or reset and reads trailing measurement
//! blocks straight off the amplitudes. Shot sampling goes through [`Sampler`],
//! which simulates the unitary prefix once and then replays the rest per shot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QmdpError, Result};
use crate::rng::ShotStream;
use crate::statevector::{GateKind, Polarity, StateVector, PROBABILITY_FLOOR};

/// Limit on measurements for analytic branching.
pub const MAX_BRANCHING_MEASURES: usize = 32;

/// Classical records are packed into a `u64`.
pub const MAX_CLASSICAL_BITS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Instruction {
    Gate { gate: GateKind, target: usize },
    Measure { qubit: usize, cbit: usize },
    Reset { qubit: usize },
    Barrier(String),
}

impl Instruction {
    pub fn gate(gate: GateKind, target: usize) -> Self {
        Instruction::Gate { gate, target }
    }

    pub fn is_gate(&self) -> bool {
        matches!(self, Instruction::Gate { .. })
    }

    /// One line of the debug dump.
    pub fn dump_line(&self) -> String {
        match self {
            Instruction::Gate { gate, target } => {
                let (base, controls) = gate.flatten();
                let params = match base {
                    GateKind::Ry(theta) => format!("{theta:?}"),
                    _ => "-".to_string(),
                };
                let (qubits, polarities) = if controls.is_empty() {
                    ("-".to_string(), "-".to_string())
                } else {
                    (
                        join(controls.iter().map(|c| c.qubit.to_string())),
                        join(controls.iter().map(|c| {
                            if c.polarity == Polarity::One {
                                "1"
                            } else {
                                "0"
                            }
                            .to_string()
                        })),
                    )
                };
                format!(
                    "GATE {} {params} {target} {qubits} {polarities}",
                    gate.base_name().to_uppercase()
                )
            }
            Instruction::Measure { qubit, cbit } => format!("MEASURE {qubit} {cbit}"),
            Instruction::Reset { qubit } => format!("RESET {qubit}"),
            Instruction::Barrier(label) => format!("BARRIER {label}"),
        }
    }
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct CircuitProgram {
    num_qubits: usize,
    num_classical_bits: usize,
    instructions: Vec<Instruction>,
}

impl CircuitProgram {
    pub fn new(
        num_qubits: usize,
        num_classical_bits: usize,
        instructions: Vec<Instruction>,
    ) -> Result<Self> {
        if num_classical_bits > MAX_CLASSICAL_BITS {
            return Err(QmdpError::InvalidProgram(format!(
                "{num_classical_bits} classical bits exceeds {MAX_CLASSICAL_BITS}"
            )));
        }
        let check = |q: usize| {
            if q >= num_qubits {
                Err(QmdpError::QubitOutOfRange {
                    qubit: q,
                    num_qubits,
                })
            } else {
                Ok(())
            }
        };
        let mut written = BTreeSet::new();
        for instr in &instructions {
            match instr {
                Instruction::Gate { gate, target } => {
                    check(*target)?;
                    let mut seen = BTreeSet::from([*target]);
                    for c in gate.flatten().1 {
                        check(c.qubit)?;
                        if !seen.insert(c.qubit) {
                            return Err(QmdpError::OverlappingQubits { qubit: c.qubit });
                        }
                    }
                }
                Instruction::Measure { qubit, cbit } => {
                    check(*qubit)?;
                    if *cbit >= num_classical_bits {
                        return Err(QmdpError::InvalidProgram(format!(
                            "classical bit {cbit} out of range for {num_classical_bits} bits"
                        )));
                    }
                    if !written.insert(*cbit) {
                        return Err(QmdpError::InvalidProgram(format!(
                            "classical bit {cbit} is written by more than one measurement"
                        )));
                    }
                }
                Instruction::Reset { qubit } => check(*qubit)?,
                Instruction::Barrier(_) => {}
            }
        }
        Ok(Self {
            num_qubits,
            num_classical_bits,
            instructions,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn num_classical_bits(&self) -> usize {
        self.num_classical_bits
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn measure_count(&self) -> usize {
        self.instructions
            .iter()
            .filter(|i| matches!(i, Instruction::Measure { .. }))
            .count()
    }

    /// Line-oriented text dump, one instruction per line.
    pub fn dump(&self) -> String {
        let mut out = format!(
            "QUBITS {}\nCLBITS {}\n",
            self.num_qubits, self.num_classical_bits
        );
        for instr in &self.instructions {
            let _ = writeln!(out, "{}", instr.dump_line());
        }
        out
    }

    /// Index of the first instruction from which only measurements and barriers remain.
    fn terminal_start(&self) -> usize {
        let mut start = self.instructions.len();
        while start > 0
            && matches!(
                self.instructions[start - 1],
                Instruction::Measure { .. } | Instruction::Barrier(_)
            )
        {
            start -= 1;
        }
        start
    }

    /// Exact probability of every classical record.
    pub fn exact_distribution(&self) -> Result<OutcomeDistribution> {
        let measures = self.measure_count();
        if measures > MAX_BRANCHING_MEASURES {
            return Err(QmdpError::BranchExplosion {
                measures,
                limit: MAX_BRANCHING_MEASURES,
            });
        }
        let terminal = self.terminal_start();
        let mut out = BTreeMap::new();
        let state = StateVector::init_zero(self.num_qubits)?;
        self.explore(0, terminal, state, 0, 1.0, &mut out)?;
        Ok(OutcomeDistribution::analytic(self.num_classical_bits, out))
    }

    fn explore(
        &self,
        mut pc: usize,
        terminal: usize,
        mut state: StateVector,
        mut record: u64,
        mut weight: f64,
        out: &mut BTreeMap<u64, f64>,
    ) -> Result<()> {
        while pc < self.instructions.len() {
            if pc >= terminal {
                accumulate_terminal(&state, &self.instructions[pc..], record, weight, out);
                return Ok(());
            }
            match &self.instructions[pc] {
                Instruction::Gate { gate, target } => state.apply_gate(gate, *target)?,
                Instruction::Barrier(_) => {}
                Instruction::Measure { qubit, .. } | Instruction::Reset { qubit } => {
                    let qubit = *qubit;
                    let p1 = state.probability_of_one(qubit)?;
                    let p0 = (1.0 - p1).max(0.0);
                    let live: Vec<bool> = [(false, p0), (true, p1)]
                        .into_iter()
                        .filter(|(_, p)| weight * p >= PROBABILITY_FLOOR)
                        .map(|(b, _)| b)
                        .collect();
                    let continue_bit = match live.as_slice() {
                        [] => return Ok(()),
                        [bit] => *bit,
                        _ => {
                            // Recurse on the 0 branch, continue in place with 1.
                            let mut branch = state.clone();
                            let p = branch.project(qubit, false)?;
                            self.explore(pc + 1, terminal, branch, record, weight * p, out)?;
                            true
                        }
                    };
                    weight *= state.project(qubit, continue_bit)?;
                    if continue_bit {
                        if let Instruction::Measure { cbit, .. } = &self.instructions[pc] {
                            record |= 1 << cbit;
                        } else {
                            state.apply_gate(&GateKind::PauliX, qubit)?;
                        }
                    }
                }
            }
            pc += 1;
        }
        *out.entry(record).or_insert(0.0) += weight;
        Ok(())
    }
}

fn accumulate_terminal(
    state: &StateVector,
    tail: &[Instruction],
    record: u64,
    weight: f64,
    out: &mut BTreeMap<u64, f64>,
) {
    let measures: Vec<(usize, usize)> = tail
        .iter()
        .filter_map(|i| match i {
            Instruction::Measure { qubit, cbit } => Some((*qubit, *cbit)),
            _ => None,
        })
        .collect();
    for (index, p) in state.support(0.0) {
        let w = weight * p;
        if w < PROBABILITY_FLOOR {
            continue;
        }
        let mut rec = record;
        for &(q, c) in &measures {
            if (index >> q) & 1 == 1 {
                rec |= 1 << c;
            }
        }
        *out.entry(rec).or_insert(0.0) += w;
    }
}

/// Returns the inverse of a gate-only segment: reversed order, each gate inverted.
/// Barriers are carried over.
pub fn invert_segment(instructions: &[Instruction]) -> Result<Vec<Instruction>> {
    instructions
        .iter()
        .enumerate()
        .rev()
        .map(|(index, instr)| match instr {
            Instruction::Gate { gate, target } => Ok(Instruction::Gate {
                gate: gate.inverse(),
                target: *target,
            }),
            Instruction::Barrier(label) => Ok(Instruction::Barrier(label.clone())),
            _ => Err(QmdpError::NonUnitarySegment { index }),
        })
        .collect()
}

/// Applies a gate-only segment to `state`.
pub fn apply_segment(state: &mut StateVector, instructions: &[Instruction]) -> Result<()> {
    for (index, instr) in instructions.iter().enumerate() {
        match instr {
            Instruction::Gate { gate, target } => state.apply_gate(gate, *target)?,
            Instruction::Barrier(_) => {}
            _ => return Err(QmdpError::NonUnitarySegment { index }),
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShotRecord {
    bits: Vec<bool>,
}

impl ShotRecord {
    pub fn from_key(key: u64, width: usize) -> Self {
        Self {
            bits: (0..width).map(|i| (key >> i) & 1 == 1).collect(),
        }
    }

    /// Bit `i` is classical bit `i`.
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn key(&self) -> u64 {
        self.bits
            .iter()
            .enumerate()
            .fold(0, |acc, (i, &b)| acc | ((b as u64) << i))
    }

    /// Most-significant (highest classical index) first.
    pub fn to_bitstring(&self) -> String {
        bitstring(self.key(), self.bits.len())
    }
}

pub fn bitstring(key: u64, width: usize) -> String {
    (0..width)
        .rev()
        .map(|i| if (key >> i) & 1 == 1 { '1' } else { '0' })
        .collect()
}

pub fn parse_bitstring(text: &str) -> Result<u64> {
    if text.is_empty() || text.len() > MAX_CLASSICAL_BITS {
        return Err(QmdpError::Format(format!(
            "bad bit string length in {text:?}"
        )));
    }
    text.chars().try_fold(0u64, |acc, ch| match ch {
        '0' => Ok(acc << 1),
        '1' => Ok((acc << 1) | 1),
        _ => Err(QmdpError::Format(format!(
            "non-binary character in {text:?}"
        ))),
    })
}

/// Precomputed per-shot executor for one program.
pub struct Sampler<'a> {
    program: &'a CircuitProgram,
    prefix: StateVector,
    tail_start: usize,
    terminal: Option<TerminalTable>,
}

impl<'a> Sampler<'a> {
    pub fn new(program: &'a CircuitProgram) -> Result<Self> {
        let mut prefix = StateVector::init_zero(program.num_qubits)?;
        let instrs = &program.instructions;
        let mut tail_start = 0;
        while tail_start < instrs.len() {
            match &instrs[tail_start] {
                Instruction::Gate { gate, target } => prefix.apply_gate(gate, *target)?,
                Instruction::Barrier(_) => {}
                _ => break,
            }
            tail_start += 1;
        }
        let terminal = if program.terminal_start() <= tail_start {
            Some(TerminalTable::new(&prefix, &instrs[tail_start..]))
        } else {
            None
        };
        Ok(Self {
            program,
            prefix,
            tail_start,
            terminal,
        })
    }

    /// Executes shot `shot_index`; identical inputs give identical records.
    pub fn run(&self, seed: u64, shot_index: u64) -> Result<ShotRecord> {
        let width = self.program.num_classical_bits;
        let mut stream = ShotStream::new(seed, shot_index);
        if let Some(table) = &self.terminal {
            return Ok(ShotRecord::from_key(table.draw(&mut stream), width));
        }
        let mut state = self.prefix.clone();
        let mut key = 0u64;
        for instr in &self.program.instructions[self.tail_start..] {
            match instr {
                Instruction::Gate { gate, target } => state.apply_gate(gate, *target)?,
                Instruction::Measure { qubit, cbit } => {
                    if state.measure_qubit(*qubit, stream.next_draw())?.bit {
                        key |= 1 << cbit;
                    }
                }
                Instruction::Reset { qubit } => {
                    state.reset_qubit(*qubit, stream.next_draw())?;
                }
                Instruction::Barrier(_) => {}
            }
        }
        Ok(ShotRecord::from_key(key, width))
    }

    pub fn sample(&self, shots: u64, seed: u64) -> Result<OutcomeDistribution> {
        if shots == 0 {
            return Err(QmdpError::Domain("shots must be at least 1".into()));
        }
        let keys = (0..shots)
            .into_par_iter()
            .map(|i| self.run(seed, i).map(|r| r.key()))
            .collect::<Result<Vec<u64>>>()?;
        let mut counts = BTreeMap::new();
        for k in keys {
            *counts.entry(k).or_insert(0u64) += 1;
        }
        Ok(OutcomeDistribution::from_counts(
            self.program.num_classical_bits,
            counts,
        ))
    }
}

pub fn run_shot(program: &CircuitProgram, seed: u64, shot_index: u64) -> Result<ShotRecord> {
    Sampler::new(program)?.run(seed, shot_index)
}

pub fn sample(program: &CircuitProgram, shots: u64, seed: u64) -> Result<OutcomeDistribution> {
    Sampler::new(program)?.sample(shots, seed)
}

/// Samples terminal measurements of an already-prepared state.
pub fn sample_state(
    state: &StateVector,
    measures: &[Instruction],
    num_classical_bits: usize,
    shots: u64,
    seed: u64,
) -> Result<OutcomeDistribution> {
    if shots == 0 {
        return Err(QmdpError::Domain("shots must be at least 1".into()));
    }
    if let Some(index) = measures
        .iter()
        .position(|m| !matches!(m, Instruction::Measure { .. }))
    {
        return Err(QmdpError::InvalidProgram(format!(
            "instruction {index} is not a measurement"
        )));
    }
    let table = TerminalTable::new(state, measures);
    let keys: Vec<u64> = (0..shots)
        .into_par_iter()
        .map(|i| table.draw(&mut ShotStream::new(seed, i)))
        .collect();
    let mut counts = BTreeMap::new();
    for k in keys {
        *counts.entry(k).or_insert(0u64) += 1;
    }
    Ok(OutcomeDistribution::from_counts(num_classical_bits, counts))
}

/// Sparse joint distribution of the measured qubits, sorted so that sequential
/// single-qubit measurements become nested range splits.
struct TerminalTable {
    /// (qubit, classical bit) per measurement, in program order.
    measures: Vec<(usize, usize)>,
    /// Distinct measured qubits by first appearance; position 0 is the key MSB.
    order: Vec<usize>,
    keys: Vec<u64>,
    cumulative: Vec<f64>,
}

impl TerminalTable {
    fn new(state: &StateVector, tail: &[Instruction]) -> Self {
        let measures: Vec<(usize, usize)> = tail
            .iter()
            .filter_map(|i| match i {
                Instruction::Measure { qubit, cbit } => Some((*qubit, *cbit)),
                _ => None,
            })
            .collect();
        let mut order = Vec::new();
        for &(q, _) in &measures {
            if !order.contains(&q) {
                order.push(q);
            }
        }
        let mut grouped: BTreeMap<u64, f64> = BTreeMap::new();
        for (index, p) in state.support(0.0) {
            let key = order
                .iter()
                .fold(0u64, |acc, &q| (acc << 1) | ((index >> q) & 1) as u64);
            *grouped.entry(key).or_insert(0.0) += p;
        }
        let mut keys = Vec::with_capacity(grouped.len());
        let mut cumulative = Vec::with_capacity(grouped.len() + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for (k, p) in grouped {
            keys.push(k);
            acc += p;
            cumulative.push(acc);
        }
        Self {
            measures,
            order,
            keys,
            cumulative,
        }
    }

    fn draw(&self, stream: &mut ShotStream) -> u64 {
        let m = self.order.len();
        let (mut lo, mut hi) = (0usize, self.keys.len());
        let mut decided = 0usize;
        let mut record = 0u64;
        for &(qubit, cbit) in &self.measures {
            let draw = stream.next_draw();
            let pos = self.order.iter().position(|&q| q == qubit).unwrap_or(0);
            if pos == decided {
                let shift = m - 1 - pos;
                let split = lo + self.keys[lo..hi].partition_point(|k| (k >> shift) & 1 == 0);
                let p0 = self.cumulative[split] - self.cumulative[lo];
                let p1 = self.cumulative[hi] - self.cumulative[split];
                let total = p0 + p1;
                let bit = if split == lo || p0 / total < PROBABILITY_FLOOR {
                    true
                } else if split == hi || p1 / total < PROBABILITY_FLOOR {
                    false
                } else {
                    draw >= p0 / total
                };
                if bit {
                    lo = split;
                } else {
                    hi = split;
                }
                decided += 1;
            }
            if lo < hi && (self.keys[lo] >> (m - 1 - pos)) & 1 == 1 {
                record |= 1 << cbit;
            }
        }
        record
    }
}

/// Counts of an unnormalized tally or exact probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tally {
    Analytic,
    Shots(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    width: usize,
    entries: BTreeMap<u64, f64>,
    tally: Tally,
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    width: usize,
    total_shots: Option<u64>,
    entries: BTreeMap<String, f64>,
}

impl OutcomeDistribution {
    pub fn analytic(width: usize, entries: BTreeMap<u64, f64>) -> Self {
        Self {
            width,
            entries,
            tally: Tally::Analytic,
        }
    }

    pub fn from_counts(width: usize, counts: BTreeMap<u64, u64>) -> Self {
        let total = counts.values().sum();
        Self {
            width,
            entries: counts.into_iter().map(|(k, c)| (k, c as f64)).collect(),
            tally: Tally::Shots(total),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn tally(&self) -> Tally {
        self.tally
    }

    pub fn total_shots(&self) -> Option<u64> {
        match self.tally {
            Tally::Analytic => None,
            Tally::Shots(n) => Some(n),
        }
    }

    /// Raw values: probabilities when analytic, counts when sampled.
    pub fn entries(&self) -> &BTreeMap<u64, f64> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn probability(&self, key: u64) -> f64 {
        let total = self.total();
        if total == 0.0 {
            return 0.0;
        }
        self.entries.get(&key).copied().unwrap_or(0.0) / total
    }

    pub fn probabilities(&self) -> BTreeMap<u64, f64> {
        let total = self.total();
        self.entries
            .iter()
            .map(|(&k, &v)| (k, if total > 0.0 { v / total } else { 0.0 }))
            .collect()
    }

    pub fn support(&self) -> BTreeSet<u64> {
        self.entries.keys().copied().collect()
    }

    pub fn bitstring(&self, key: u64) -> String {
        bitstring(key, self.width)
    }

    /// `bits,value` CSV, most-significant bit first, sorted by key.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bits,value\n");
        for (&k, &v) in &self.entries {
            match self.tally {
                Tally::Analytic => {
                    let _ = writeln!(out, "{},{v:?}", self.bitstring(k));
                }
                Tally::Shots(_) => {
                    let _ = writeln!(out, "{},{}", self.bitstring(k), v as u64);
                }
            }
        }
        out
    }

    /// Parses `bits,value` CSV. Integer-only values are read as counts.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "bits,value" => {}
            other => {
                return Err(QmdpError::Format(format!(
                    "expected header `bits,value`, found {other:?}"
                )))
            }
        }
        let mut width = None;
        let mut entries = BTreeMap::new();
        let mut integral = true;
        for (n, line) in lines.enumerate() {
            let (bits, value) = line
                .split_once(',')
                .ok_or_else(|| QmdpError::Format(format!("line {}: missing comma", n + 2)))?;
            let bits = bits.trim();
            match width {
                None => width = Some(bits.len()),
                Some(w) if w != bits.len() => {
                    return Err(QmdpError::Format(format!(
                        "line {}: width {} differs from {w}",
                        n + 2,
                        bits.len()
                    )))
                }
                _ => {}
            }
            let value = value.trim();
            integral &= value.parse::<u64>().is_ok();
            let v: f64 = value
                .parse()
                .map_err(|_| QmdpError::Format(format!("line {}: bad value {value:?}", n + 2)))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(QmdpError::Format(format!("line {}: negative value", n + 2)));
            }
            *entries.entry(parse_bitstring(bits)?).or_insert(0.0) += v;
        }
        let width = width.unwrap_or(0);
        if integral && !entries.is_empty() {
            let counts = entries.into_iter().map(|(k, v)| (k, v as u64)).collect();
            Ok(Self::from_counts(width, counts))
        } else {
            Ok(Self::analytic(width, entries))
        }
    }

    pub fn to_json(&self) -> String {
        let doc = DistributionJson {
            width: self.width,
            total_shots: self.total_shots(),
            entries: self
                .entries
                .iter()
                .map(|(&k, &v)| (self.bitstring(k), v))
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("distribution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DistributionJson =
            serde_json::from_str(text).map_err(|e| QmdpError::Format(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (bits, v) in doc.entries {
            if bits.len() != doc.width {
                return Err(QmdpError::Format(format!(
                    "{bits} is not {} bits",
                    doc.width
                )));
            }
            entries.insert(parse_bitstring(&bits)?, v);
        }
        Ok(Self {
            width: doc.width,
            entries,
            tally: doc.total_shots.map_or(Tally::Analytic, Tally::Shots),
        })
    }
}

/// ½·Σ|p_a − p_b| over the union of supports, on normalized distributions.
pub fn total_variation_distance(a: &OutcomeDistribution, b: &OutcomeDistribution) -> f64 {
    let pa = a.probabilities();
    let pb = b.probabilities();
    let keys: BTreeSet<u64> = pa.keys().chain(pb.keys()).copied().collect();
    0.5 * keys
        .into_iter()
        .map(|k| (pa.get(&k).unwrap_or(&0.0) - pb.get(&k).unwrap_or(&0.0)).abs())
        .sum::<f64>()
}
