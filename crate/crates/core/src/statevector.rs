//! Dense state-vector kernel.
//!
//! Amplitudes are stored in a flat array indexed by the basis integer with
//! qubit 0 as the least-significant bit. Gates are applied in place by
//! walking amplitude pairs that differ only in the target bit. Only pairs
//! whose controls are satisfied are visited, so each control halves the work.
//!
//! Randomness never originates here: measurement and reset take an explicit
//! draw in `[0, 1)` so callers decide how streams are keyed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QmdpError, Result};

/// Largest register the kernel will allocate (2^28 amplitudes, 4 GiB).
pub const MAX_QUBITS: usize = 28;

/// Outcome probabilities below this are treated as impossible.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    /// Trigger when the control qubit reads 0.
    Zero,
    /// Trigger when the control qubit reads 1.
    One,
}

impl Polarity {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Polarity::One
        } else {
            Polarity::Zero
        }
    }

    pub fn bit(self) -> bool {
        matches!(self, Polarity::One)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Control {
    pub qubit: usize,
    pub polarity: Polarity,
}

impl Control {
    pub fn on_one(qubit: usize) -> Self {
        Self {
            qubit,
            polarity: Polarity::One,
        }
    }

    pub fn on_zero(qubit: usize) -> Self {
        Self {
            qubit,
            polarity: Polarity::Zero,
        }
    }
}

/// Single-target gate, optionally wrapped in controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    Hadamard,
    PauliX,
    PauliZ,
    /// Y-rotation by the given angle in radians.
    Ry(f64),
    Controlled {
        base: Box<GateKind>,
        controls: Vec<Control>,
    },
}

impl GateKind {
    pub fn controlled(base: GateKind, controls: Vec<Control>) -> GateKind {
        if controls.is_empty() {
            return base;
        }
        GateKind::Controlled {
            base: Box::new(base),
            controls,
        }
    }

    pub fn cx(control: usize) -> GateKind {
        GateKind::controlled(GateKind::PauliX, vec![Control::on_one(control)])
    }

    /// Angle that loads probability `p` onto |1⟩ from |0⟩.
    pub fn ry_for_probability(p: f64) -> GateKind {
        GateKind::Ry(2.0 * p.sqrt().asin())
    }

    pub fn inverse(&self) -> GateKind {
        match self {
            GateKind::Hadamard | GateKind::PauliX | GateKind::PauliZ => self.clone(),
            GateKind::Ry(theta) => GateKind::Ry(-theta),
            GateKind::Controlled { base, controls } => GateKind::Controlled {
                base: Box::new(base.inverse()),
                controls: controls.clone(),
            },
        }
    }

    /// Innermost uncontrolled gate and all controls, outermost first.
    pub fn flatten(&self) -> (&GateKind, Vec<Control>) {
        let mut controls = Vec::new();
        let mut gate = self;
        while let GateKind::Controlled { base, controls: c } = gate {
            controls.extend_from_slice(c);
            gate = base;
        }
        (gate, controls)
    }

    /// Short lowercase name of the uncontrolled gate.
    pub fn base_name(&self) -> &'static str {
        match self.flatten().0 {
            GateKind::Hadamard => "h",
            GateKind::PauliX => "x",
            GateKind::PauliZ => "z",
            GateKind::Ry(_) => "ry",
            GateKind::Controlled { .. } => unreachable!("flatten strips controls"),
        }
    }

    /// Name including the control count: `x`, `cx`, `ccx`, `mcx`, ...
    pub fn kind_name(&self) -> String {
        let n = self.flatten().1.len();
        let base = self.base_name();
        match n {
            0 => base.to_string(),
            1 => format!("c{base}"),
            2 => format!("cc{base}"),
            _ => format!("mc{base}"),
        }
    }

    fn matrix(&self) -> [[Complex64; 2]; 2] {
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        match self {
            GateKind::Hadamard => {
                let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                [[h, h], [h, -h]]
            }
            GateKind::PauliX => [[zero, one], [one, zero]],
            GateKind::PauliZ => [[one, zero], [zero, -one]],
            GateKind::Ry(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                [
                    [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
                    [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
                ]
            }
            GateKind::Controlled { .. } => unreachable!("matrix of a flattened gate"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementOutcome {
    pub bit: bool,
    /// Probability of `bit` before collapse.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    /// |0…0⟩ on `num_qubits` qubits.
    pub fn init_zero(num_qubits: usize) -> Result<Self> {
        if num_qubits == 0 {
            return Err(QmdpError::EmptyRegister);
        }
        if num_qubits > MAX_QUBITS {
            return Err(QmdpError::WidthExceedsCeiling {
                requested: num_qubits,
                ceiling: MAX_QUBITS,
            });
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); 1usize << num_qubits];
        amplitudes[0] = Complex64::new(1.0, 0.0);
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Computational basis state `index`.
    pub fn basis(num_qubits: usize, index: usize) -> Result<Self> {
        let mut state = Self::init_zero(num_qubits)?;
        if index >= state.amplitudes.len() {
            return Err(QmdpError::Domain(format!(
                "basis index {index} does not fit in {num_qubits} qubits"
            )));
        }
        state.amplitudes[0] = Complex64::new(0.0, 0.0);
        state.amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(state)
    }

    /// Wraps raw amplitudes; the length must be a power of two and the vector normalized.
    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(QmdpError::Domain(format!(
                "{len} amplitudes is not a power of two >= 2"
            )));
        }
        let num_qubits = len.trailing_zeros() as usize;
        if num_qubits > MAX_QUBITS {
            return Err(QmdpError::WidthExceedsCeiling {
                requested: num_qubits,
                ceiling: MAX_QUBITS,
            });
        }
        let state = Self {
            num_qubits,
            amplitudes,
        };
        let norm = state.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(QmdpError::Domain(format!("amplitudes have norm {norm}")));
        }
        Ok(state)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// |⟨self|other⟩|².
    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    fn check_qubit(&self, qubit: usize) -> Result<()> {
        if qubit >= self.num_qubits {
            return Err(QmdpError::QubitOutOfRange {
                qubit,
                num_qubits: self.num_qubits,
            });
        }
        Ok(())
    }

    /// Applies `gate` on `target` in place.
    ///
    /// Amplitudes whose control pattern is not satisfied are not touched.
    pub fn apply_gate(&mut self, gate: &GateKind, target: usize) -> Result<()> {
        self.check_qubit(target)?;
        let (base, controls) = gate.flatten();
        let mut ctrl_mask = 0usize;
        let mut ctrl_value = 0usize;
        for c in &controls {
            self.check_qubit(c.qubit)?;
            let bit = 1usize << c.qubit;
            if c.qubit == target || ctrl_mask & bit != 0 {
                return Err(QmdpError::OverlappingQubits { qubit: c.qubit });
            }
            ctrl_mask |= bit;
            if c.polarity.bit() {
                ctrl_value |= bit;
            }
        }

        let stride = 1usize << target;
        // Enumerate only indices with the target bit clear and the controls
        // satisfied by depositing a counter into the free bit positions.
        let mut fixed: Vec<usize> = controls.iter().map(|c| c.qubit).collect();
        fixed.push(target);
        fixed.sort_unstable();
        let count = 1usize << (self.num_qubits - fixed.len());
        let index = |k: usize| {
            let mut i = k;
            for &p in &fixed {
                i = ((i >> p) << (p + 1)) | (i & ((1usize << p) - 1));
            }
            i | ctrl_value
        };
        let amps = &mut self.amplitudes;

        // Specialized kernels keep X and Z exact (no multiply by 1.0).
        match base {
            GateKind::PauliX => {
                for k in 0..count {
                    let i = index(k);
                    amps.swap(i, i | stride);
                }
            }
            GateKind::PauliZ => {
                for k in 0..count {
                    let j = index(k) | stride;
                    amps[j] = -amps[j];
                }
            }
            _ => {
                let m = base.matrix();
                for k in 0..count {
                    let i = index(k);
                    let j = i | stride;
                    let (a0, a1) = (amps[i], amps[j]);
                    amps[i] = m[0][0] * a0 + m[0][1] * a1;
                    amps[j] = m[1][0] * a0 + m[1][1] * a1;
                }
            }
        }
        Ok(())
    }

    /// Probability that `qubit` reads 1.
    pub fn probability_of_one(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit != 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Projects onto `qubit == bit` and renormalizes; returns the pre-collapse probability.
    pub fn project(&mut self, qubit: usize, bit: bool) -> Result<f64> {
        let p1 = self.probability_of_one(qubit)?;
        let p = if bit { p1 } else { 1.0 - p1 };
        if p < PROBABILITY_FLOOR {
            return Err(QmdpError::DegenerateState { qubit });
        }
        let mask = 1usize << qubit;
        let scale = 1.0 / p.sqrt();
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if (i & mask != 0) == bit {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(p)
    }

    /// Projective measurement. Reads 0 when `random_draw < P(0)`.
    pub fn measure_qubit(&mut self, qubit: usize, random_draw: f64) -> Result<MeasurementOutcome> {
        let p1 = self.probability_of_one(qubit)?;
        let p0 = self.bit_zero_mass(qubit)?;
        if p0 < PROBABILITY_FLOOR && p1 < PROBABILITY_FLOOR {
            return Err(QmdpError::DegenerateState { qubit });
        }
        let bit = if p0 < PROBABILITY_FLOOR {
            true
        } else if p1 < PROBABILITY_FLOOR {
            false
        } else {
            random_draw >= p0 / (p0 + p1)
        };
        let probability = self.project(qubit, bit)?;
        Ok(MeasurementOutcome { bit, probability })
    }

    fn bit_zero_mass(&self, qubit: usize) -> Result<f64> {
        self.check_qubit(qubit)?;
        let bit = 1usize << qubit;
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & bit == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Measures `qubit` and flips it back to |0⟩ when it read 1.
    pub fn reset_qubit(&mut self, qubit: usize, random_draw: f64) -> Result<MeasurementOutcome> {
        let outcome = self.measure_qubit(qubit, random_draw)?;
        if outcome.bit {
            self.apply_gate(&GateKind::PauliX, qubit)?;
        }
        Ok(outcome)
    }

    /// Joint distribution of `qubits`. Entry `b` has bit `len-1-k` equal to the
    /// value of `qubits[k]`, so the first listed qubit is the most significant.
    pub fn marginal_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>> {
        for (k, &q) in qubits.iter().enumerate() {
            self.check_qubit(q)?;
            if qubits[..k].contains(&q) {
                return Err(QmdpError::OverlappingQubits { qubit: q });
            }
        }
        let len = qubits.len();
        let mut table = vec![0.0; 1usize << len];
        for (i, a) in self.amplitudes.iter().enumerate() {
            let p = a.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut pattern = 0usize;
            for &q in qubits {
                pattern = (pattern << 1) | ((i >> q) & 1);
            }
            table[pattern] += p;
        }
        Ok(table)
    }

    /// Total probability of basis states accepted by `predicate`.
    pub fn mass_where(&self, predicate: impl Fn(usize) -> bool) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| predicate(*i))
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Basis indices with probability above `floor`, paired with that probability.
    pub fn support(&self, floor: f64) -> Vec<(usize, f64)> {
        self.amplitudes
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                let p = a.norm_sqr();
                (p > floor).then_some((i, p))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-10;

    fn ry_04() -> f64 {
        2.0 * 0.4f64.sqrt().asin()
    }

    #[test]
    fn ground_state() {
        let s = StateVector::init_zero(1).unwrap();
        assert_eq!(
            s.amplitudes(),
            &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
        );
        let s = StateVector::init_zero(2).unwrap();
        assert_eq!(s.amplitudes().len(), 4);
        assert_eq!(s.amplitudes()[0], Complex64::new(1.0, 0.0));
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm_sqr() == 0.0));
    }

    #[test]
    fn ceiling_is_enforced() {
        assert_eq!(
            StateVector::init_zero(29),
            Err(QmdpError::WidthExceedsCeiling {
                requested: 29,
                ceiling: 28
            })
        );
        assert_eq!(StateVector::init_zero(0), Err(QmdpError::EmptyRegister));
    }

    #[test]
    fn hadamard_on_zero() {
        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_gate(&GateKind::Hadamard, 0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(s.amplitudes()[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(s.amplitudes()[1].re, h, epsilon = 1e-15);
    }

    #[test]
    fn ry_loads_branch_probability() {
        let theta = ry_04();
        assert_abs_diff_eq!(theta, 1.3694384, epsilon = 1e-7);
        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_gate(&GateKind::Ry(theta), 0).unwrap();
        assert_abs_diff_eq!(s.probability_of_one(0).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn cnot_flips_target() {
        // |10⟩: qubit 1 set.
        let mut s = StateVector::basis(2, 0b10).unwrap();
        s.apply_gate(&GateKind::cx(1), 0).unwrap();
        assert_eq!(s.amplitudes()[0b11], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn gate_index_errors() {
        let mut s = StateVector::init_zero(2).unwrap();
        assert_eq!(
            s.apply_gate(&GateKind::Hadamard, 2),
            Err(QmdpError::QubitOutOfRange {
                qubit: 2,
                num_qubits: 2
            })
        );
        assert_eq!(
            s.apply_gate(&GateKind::cx(0), 0),
            Err(QmdpError::OverlappingQubits { qubit: 0 })
        );
        let dup = GateKind::controlled(
            GateKind::PauliX,
            vec![Control::on_one(1), Control::on_zero(1)],
        );
        let mut s = StateVector::init_zero(3).unwrap();
        assert_eq!(
            s.apply_gate(&dup, 0),
            Err(QmdpError::OverlappingQubits { qubit: 1 })
        );
    }

    #[test]
    fn zero_polarity_matches_x_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = random_state(3, &mut rng);
        let mut b = a.clone();
        let gate = GateKind::controlled(GateKind::Ry(0.7), vec![Control::on_zero(2)]);
        a.apply_gate(&gate, 0).unwrap();
        b.apply_gate(&GateKind::PauliX, 2).unwrap();
        b.apply_gate(
            &GateKind::controlled(GateKind::Ry(0.7), vec![Control::on_one(2)]),
            0,
        )
        .unwrap();
        b.apply_gate(&GateKind::PauliX, 2).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert_abs_diff_eq!(x.re, y.re, epsilon = 1e-14);
            assert_abs_diff_eq!(x.im, y.im, epsilon = 1e-14);
        }
    }

    #[test]
    fn measure_examples() {
        let mut s = StateVector::basis(1, 1).unwrap();
        let o = s.measure_qubit(0, 0.0).unwrap();
        assert!(o.bit);
        assert_eq!(o.probability, 1.0);

        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_gate(&GateKind::Hadamard, 0).unwrap();
        let o = s.measure_qubit(0, 0.25).unwrap();
        assert!(!o.bit);
        assert_abs_diff_eq!(o.probability, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-12);

        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_gate(&GateKind::Ry(ry_04()), 0).unwrap();
        let o = s.measure_qubit(0, 0.7).unwrap();
        assert!(o.bit);
        assert_abs_diff_eq!(o.probability, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[1].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_state_is_rejected() {
        let bad = StateVector {
            num_qubits: 1,
            amplitudes: vec![Complex64::new(0.0, 0.0); 2],
        };
        let mut s = bad.clone();
        assert_eq!(
            s.measure_qubit(0, 0.5),
            Err(QmdpError::DegenerateState { qubit: 0 })
        );
        let mut s = bad;
        assert!(s.reset_qubit(0, 0.5).is_err());
    }

    #[test]
    fn reset_examples() {
        let mut s = StateVector::basis(1, 1).unwrap();
        s.reset_qubit(0, 0.9).unwrap();
        assert_eq!(s, StateVector::init_zero(1).unwrap());

        let mut s = StateVector::init_zero(1).unwrap();
        s.reset_qubit(0, 0.9).unwrap();
        assert_eq!(s, StateVector::init_zero(1).unwrap());

        // Bell pair: resetting qubit 0 with draw 0.3 picks outcome 0 and collapses qubit 1.
        let mut s = StateVector::init_zero(2).unwrap();
        s.apply_gate(&GateKind::Hadamard, 0).unwrap();
        s.apply_gate(&GateKind::cx(0), 1).unwrap();
        s.reset_qubit(0, 0.3).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-12);
        assert!(s.amplitudes()[1..].iter().all(|a| a.norm_sqr() < 1e-24));
    }

    #[test]
    fn marginal_examples() {
        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_gate(&GateKind::Hadamard, 0).unwrap();
        let m = s.marginal_probabilities(&[0]).unwrap();
        assert_abs_diff_eq!(m[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], 0.5, epsilon = 1e-12);

        let s = StateVector::basis(2, 0b10).unwrap();
        let m = s.marginal_probabilities(&[1, 0]).unwrap();
        assert_eq!(m, vec![0.0, 0.0, 1.0, 0.0]);

        let mut s = StateVector::init_zero(1).unwrap();
        s.apply_gate(&GateKind::ry_for_probability(0.9), 0).unwrap();
        let m = s.marginal_probabilities(&[0]).unwrap();
        assert_abs_diff_eq!(m[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], 0.9, epsilon = 1e-12);

        assert!(s.marginal_probabilities(&[0, 0]).is_err());
        assert!(s.marginal_probabilities(&[3]).is_err());
    }

    fn random_state(n: usize, rng: &mut impl Rng) -> StateVector {
        let mut amps: Vec<Complex64> = (0..1usize << n)
            .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= norm);
        StateVector::from_amplitudes(amps).unwrap()
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = (GateKind, usize)> {
        let base = prop_oneof![
            Just(GateKind::Hadamard),
            Just(GateKind::PauliX),
            Just(GateKind::PauliZ),
            (-6.3f64..6.3).prop_map(GateKind::Ry),
        ];
        (
            base,
            0..n,
            proptest::collection::vec((0..n, any::<bool>()), 0..n),
        )
            .prop_map(move |(base, target, ctrls)| {
                let mut controls: Vec<Control> = Vec::new();
                for (q, pol) in ctrls {
                    if q != target && controls.iter().all(|c| c.qubit != q) {
                        controls.push(Control {
                            qubit: q,
                            polarity: Polarity::from_bit(pol),
                        });
                    }
                }
                (GateKind::controlled(base, controls), target)
            })
    }

    proptest! {
        #[test]
        fn gates_preserve_norm_and_invert(seed in any::<u64>(), gates in proptest::collection::vec(arb_gate(4), 1..12)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let start = random_state(4, &mut rng);
            let mut s = start.clone();
            for (g, t) in &gates {
                s.apply_gate(g, *t).unwrap();
                prop_assert!((s.norm() - 1.0).abs() < TOL);
            }
            for (g, t) in gates.iter().rev() {
                s.apply_gate(&g.inverse(), *t).unwrap();
            }
            for (x, y) in s.amplitudes().iter().zip(start.amplitudes()) {
                prop_assert!((x - y).norm() < TOL);
            }
        }

        #[test]
        fn unsatisfied_controls_leave_amplitudes_bit_identical(seed in any::<u64>(), (g, t) in arb_gate(4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let before = random_state(4, &mut rng);
            let mut after = before.clone();
            after.apply_gate(&g, t).unwrap();
            let (_, controls) = g.flatten();
            for i in 0..16usize {
                let satisfied = controls.iter().all(|c| ((i >> c.qubit) & 1 == 1) == c.polarity.bit());
                if !satisfied {
                    prop_assert_eq!(before.amplitudes()[i], after.amplitudes()[i]);
                }
            }
        }
    }

    #[test]
    fn measurement_frequency_matches_marginal() {
        let mut prepared = StateVector::init_zero(2).unwrap();
        prepared
            .apply_gate(&GateKind::ry_for_probability(0.4), 0)
            .unwrap();
        prepared.apply_gate(&GateKind::cx(0), 1).unwrap();
        prepared.apply_gate(&GateKind::Hadamard, 1).unwrap();
        let p1 = prepared.marginal_probabilities(&[1]).unwrap()[1];

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let mut ones = 0usize;
        for _ in 0..n {
            let mut s = prepared.clone();
            if s.measure_qubit(1, rng.random::<f64>()).unwrap().bit {
                ones += 1;
            }
        }
        let sigma = (n as f64 * p1 * (1.0 - p1)).sqrt();
        assert!((ones as f64 - n as f64 * p1).abs() < 3.0 * sigma);
    }
}
