//! Python bindings for the simulator, builders and Grover search.

use std::collections::BTreeMap;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use qmdp_core::circuit::{bitstring, parse_bitstring};
use qmdp_core::mdp::audit_corpus;
use qmdp_core::{
    build_dynamic_program, build_static_program, classical_enumerate, extract_policy,
    find_max_return, optimal_iterations as core_optimal_iterations, parse_mdp_config, run_grover,
    sample as core_sample, total_variation_distance, ActionPolicy, BuiltCircuit, Control, Corpus,
    GateKind, Iterations, MarkPredicate, OutcomeDistribution, QmdpError as CoreError,
    TrajectoryCodec, TrajectoryRecord,
};

create_exception!(qmdp, QmdpError, PyException);

fn py_err(e: CoreError) -> PyErr {
    QmdpError::new_err(e.to_string())
}

fn parse_bits(text: &str) -> PyResult<u64> {
    parse_bitstring(text).map_err(py_err)
}

/// Dense state vector; qubit 0 is the least-significant bit.
#[pyclass(name = "StateVector")]
struct PyStateVector {
    inner: qmdp_core::StateVector,
}

#[pymethods]
impl PyStateVector {
    #[new]
    fn new(num_qubits: usize) -> PyResult<Self> {
        qmdp_core::StateVector::init_zero(num_qubits)
            .map(|inner| Self { inner })
            .map_err(py_err)
    }

    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    /// Applies `gate` ("h", "x", "z" or "ry") on `target`.
    ///
    /// `controls` trigger on 1 and `zero_controls` on 0.
    #[pyo3(signature = (gate, target, angle=None, controls=vec![], zero_controls=vec![]))]
    fn apply(
        &mut self,
        gate: &str,
        target: usize,
        angle: Option<f64>,
        controls: Vec<usize>,
        zero_controls: Vec<usize>,
    ) -> PyResult<()> {
        let base = match (gate.to_ascii_lowercase().as_str(), angle) {
            ("h", None) => GateKind::Hadamard,
            ("x", None) => GateKind::PauliX,
            ("z", None) => GateKind::PauliZ,
            ("ry", Some(theta)) => GateKind::Ry(theta),
            _ => return Err(QmdpError::new_err(format!("unknown gate {gate:?}"))),
        };
        let ctrl = controls
            .into_iter()
            .map(Control::on_one)
            .chain(zero_controls.into_iter().map(Control::on_zero))
            .collect();
        self.inner
            .apply_gate(&GateKind::controlled(base, ctrl), target)
            .map_err(py_err)
    }

    fn probability_of_one(&self, qubit: usize) -> PyResult<f64> {
        self.inner.probability_of_one(qubit).map_err(py_err)
    }

    /// Measures `qubit` with an explicit uniform draw; returns (bit, probability).
    fn measure(&mut self, qubit: usize, draw: f64) -> PyResult<(u8, f64)> {
        self.inner
            .measure_qubit(qubit, draw)
            .map(|o| (u8::from(o.bit), o.probability))
            .map_err(py_err)
    }

    fn reset(&mut self, qubit: usize, draw: f64) -> PyResult<()> {
        self.inner
            .reset_qubit(qubit, draw)
            .map(|_| ())
            .map_err(py_err)
    }

    /// Pattern probabilities; the first listed qubit is the most significant.
    fn marginal(&self, qubits: Vec<usize>) -> PyResult<Vec<f64>> {
        self.inner.marginal_probabilities(&qubits).map_err(py_err)
    }

    fn amplitudes(&self) -> Vec<(f64, f64)> {
        self.inner
            .amplitudes()
            .iter()
            .map(|a| (a.re, a.im))
            .collect()
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }
}

/// Validated MDP; the default is the bundled four-state example.
#[pyclass(name = "MdpSpec")]
struct PyMdpSpec {
    inner: qmdp_core::MdpSpec,
}

#[pymethods]
impl PyMdpSpec {
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(config: Option<&str>) -> PyResult<Self> {
        let inner = match config {
            Some(text) => parse_mdp_config(text).map_err(py_err)?,
            None => qmdp_core::MdpSpec::example(),
        };
        Ok(Self { inner })
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.num_actions()
    }

    fn probability(&self, state: usize, action: usize, next: usize) -> f64 {
        self.inner.probability(state, action, next)
    }
}

fn mdp_or_default(mdp: Option<&PyMdpSpec>) -> qmdp_core::MdpSpec {
    mdp.map_or_else(qmdp_core::MdpSpec::example, |m| m.inner.clone())
}

fn build(mdp: &qmdp_core::MdpSpec, steps: usize, mode: &str) -> PyResult<BuiltCircuit> {
    match mode {
        "dynamic" => build_dynamic_program(mdp, steps),
        "static" => build_static_program(mdp, steps, true),
        other => return Err(QmdpError::new_err(format!("unknown mode {other:?}"))),
    }
    .map_err(py_err)
}

fn as_dict(dist: &OutcomeDistribution) -> BTreeMap<String, f64> {
    dist.entries()
        .iter()
        .map(|(&k, &v)| (dist.bitstring(k), v))
        .collect()
}

/// Exact outcome probabilities keyed by record bit string.
#[pyfunction]
#[pyo3(signature = (steps, mode="dynamic", mdp=None))]
fn exact_distribution(
    steps: usize,
    mode: &str,
    mdp: Option<&PyMdpSpec>,
) -> PyResult<BTreeMap<String, f64>> {
    let built = build(&mdp_or_default(mdp), steps, mode)?;
    built
        .program
        .exact_distribution()
        .map(|d| as_dict(&d))
        .map_err(py_err)
}

/// Shot counts keyed by record bit string.
#[pyfunction]
#[pyo3(signature = (steps, shots, seed, mode="dynamic", mdp=None))]
fn sample(
    steps: usize,
    shots: u64,
    seed: u64,
    mode: &str,
    mdp: Option<&PyMdpSpec>,
) -> PyResult<BTreeMap<String, u64>> {
    let built = build(&mdp_or_default(mdp), steps, mode)?;
    let dist = core_sample(&built.program, shots, seed).map_err(py_err)?;
    Ok(as_dict(&dist)
        .into_iter()
        .map(|(k, v)| (k, v as u64))
        .collect())
}

/// Circuit text dump and build report.
#[pyfunction]
#[pyo3(signature = (steps, mode="dynamic", mdp=None))]
fn circuit(steps: usize, mode: &str, mdp: Option<&PyMdpSpec>) -> PyResult<(String, String)> {
    let built = build(&mdp_or_default(mdp), steps, mode)?;
    Ok((built.program.dump(), built.report.to_text()))
}

/// Classical trajectory probabilities keyed by record bit string.
#[pyfunction]
#[pyo3(signature = (steps, mdp=None))]
fn enumerate(steps: usize, mdp: Option<&PyMdpSpec>) -> PyResult<BTreeMap<String, f64>> {
    let mdp = mdp_or_default(mdp);
    let codec = TrajectoryCodec::for_mdp(&mdp, steps);
    let records = classical_enumerate(&mdp, steps, &mdp.uniform_start(), ActionPolicy::Uniform)
        .map_err(py_err)?;
    Ok(records
        .iter()
        .map(|r| (bitstring(codec.encode(r), codec.width()), r.weight))
        .collect())
}

/// Total variation distance between two `{bits: weight}` maps.
#[pyfunction]
fn tvd(a: BTreeMap<String, f64>, b: BTreeMap<String, f64>) -> PyResult<f64> {
    let load = |m: BTreeMap<String, f64>| -> PyResult<OutcomeDistribution> {
        let width = m.keys().next().map_or(0, String::len);
        let entries = m
            .into_iter()
            .map(|(k, v)| Ok((parse_bits(&k)?, v)))
            .collect::<PyResult<_>>()?;
        Ok(OutcomeDistribution::analytic(width, entries))
    };
    Ok(total_variation_distance(&load(a)?, &load(b)?))
}

#[pyfunction]
fn optimal_iterations(p: f64) -> PyResult<usize> {
    core_optimal_iterations(p).map_err(py_err)
}

fn record_bits(codec: &TrajectoryCodec, r: &TrajectoryRecord) -> String {
    bitstring(codec.encode(r), codec.width())
}

fn policy_dict(records: &[TrajectoryRecord]) -> (BTreeMap<u64, u64>, Vec<u64>) {
    let report = extract_policy(records);
    let conflicts = report.conflicts.iter().map(|c| c.state).collect();
    (report.policy, conflicts)
}

/// Result of a Grover run.
#[pyclass(name = "GroverResult", get_all)]
struct PyGroverResult {
    target_return: String,
    iterations: usize,
    marked_probability: f64,
    /// Marked record bit strings with their pre-amplification probability.
    marked: BTreeMap<String, f64>,
    analytic: Vec<f64>,
    simulated: Vec<f64>,
    sampled: Vec<f64>,
    counts: BTreeMap<String, u64>,
    policy: BTreeMap<u64, u64>,
    conflicts: Vec<u64>,
}

fn grover_result(run: qmdp_core::GroverRun) -> PyGroverResult {
    let codec = run.layout.codec;
    let (policy, conflicts) = policy_dict(&run.marked);
    PyGroverResult {
        target_return: bitstring(run.plan.predicate.target_return, codec.return_bits),
        iterations: run.plan.iterations,
        marked_probability: run.plan.marked_probability,
        marked: run
            .marked
            .iter()
            .map(|r| (record_bits(&codec, r), r.weight))
            .collect(),
        analytic: run.analytic_curve,
        simulated: run.simulated_curve,
        sampled: run.sampled_curve,
        counts: as_dict(&run.distribution)
            .into_iter()
            .map(|(k, v)| (k, v as u64))
            .collect(),
        policy,
        conflicts,
    }
}

/// Amplifies trajectories with the given return (and optional start/end states).
///
/// Codes are bit strings. `iterations=None` picks the optimal count.
#[pyfunction]
#[pyo3(signature = (target_return, steps=3, start=None, end=None, iterations=None, shots=4096, seed=0, mdp=None))]
#[allow(clippy::too_many_arguments)]
fn grover(
    py: Python<'_>,
    target_return: &str,
    steps: usize,
    start: Option<&str>,
    end: Option<&str>,
    iterations: Option<usize>,
    shots: u64,
    seed: u64,
    mdp: Option<&PyMdpSpec>,
) -> PyResult<PyGroverResult> {
    let predicate = MarkPredicate {
        target_return: parse_bits(target_return)?,
        start_state: start.map(parse_bits).transpose()?,
        end_state: end.map(parse_bits).transpose()?,
    };
    let k = iterations.map_or(Iterations::Auto, Iterations::Fixed);
    let mdp = mdp_or_default(mdp);
    let run = py
        .detach(|| run_grover(&mdp, steps, predicate, k, shots, seed))
        .map_err(py_err)?;
    Ok(grover_result(run))
}

/// Highest reachable return from `start`, with its amplified run.
#[pyfunction]
#[pyo3(signature = (steps=3, start=None, shots=4096, seed=0, mdp=None))]
fn max_return(
    py: Python<'_>,
    steps: usize,
    start: Option<&str>,
    shots: u64,
    seed: u64,
    mdp: Option<&PyMdpSpec>,
) -> PyResult<PyGroverResult> {
    let start = start.map(parse_bits).transpose()?;
    let mdp = mdp_or_default(mdp);
    let search = py
        .detach(|| find_max_return(&mdp, steps, start, shots, seed))
        .map_err(py_err)?;
    Ok(grover_result(search.run))
}

/// Bundled trajectory corpus as `{id: bits}`.
#[pyfunction]
fn reference_corpus() -> BTreeMap<String, String> {
    Corpus::reference()
        .entries
        .into_iter()
        .map(|e| (e.id, e.bits))
        .collect()
}

/// Audits `id,bits` CSV text; returns (triples, violations as (id, step, reason)).
#[pyfunction]
#[pyo3(signature = (csv_text, steps=3, mdp=None))]
#[allow(clippy::type_complexity)]
fn audit(
    csv_text: &str,
    steps: usize,
    mdp: Option<&PyMdpSpec>,
) -> PyResult<(Vec<(u64, u64, u64)>, Vec<(String, usize, String)>)> {
    let corpus = Corpus::parse_csv(csv_text).map_err(py_err)?;
    let codec = TrajectoryCodec::for_mdp(&mdp_or_default(mdp), steps);
    let report = audit_corpus(&corpus, &codec).map_err(py_err)?;
    Ok((
        report.triples.into_iter().collect(),
        report
            .violations
            .into_iter()
            .map(|v| (v.id, v.step, v.reason))
            .collect(),
    ))
}

/// Policy implied by witness bit strings with weights; returns (policy, conflicting states).
#[pyfunction]
#[pyo3(signature = (witnesses, steps=3, mdp=None))]
fn policy(
    witnesses: BTreeMap<String, f64>,
    steps: usize,
    mdp: Option<&PyMdpSpec>,
) -> PyResult<(BTreeMap<u64, u64>, Vec<u64>)> {
    let codec = TrajectoryCodec::for_mdp(&mdp_or_default(mdp), steps);
    let records = witnesses
        .iter()
        .map(|(bits, &w)| Ok(codec.decode_record(parse_bits(bits)?, w)))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(policy_dict(&records))
}

#[pymodule]
fn qmdp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("QmdpError", m.py().get_type::<QmdpError>())?;
    m.add_class::<PyStateVector>()?;
    m.add_class::<PyMdpSpec>()?;
    m.add_class::<PyGroverResult>()?;
    m.add_function(wrap_pyfunction!(exact_distribution, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(circuit, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate, m)?)?;
    m.add_function(wrap_pyfunction!(tvd, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(grover, m)?)?;
    m.add_function(wrap_pyfunction!(max_return, m)?)?;
    m.add_function(wrap_pyfunction!(reference_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(policy, m)?)?;
    Ok(())
}
