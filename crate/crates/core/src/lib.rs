//! Dynamic-circuit state-vector simulation of quantum Markov decision processes.
//!
//! The crate is layered bottom-up:
//!
//! * [`statevector`]: dense amplitude kernel with measurement and reset.
//! * [`circuit`]: instruction programs, shot sampling, exact distributions.
//! * [`mdp`]: classical MDP model, brute-force enumeration, corpus ingestion.
//! * [`builder`]: compiles an MDP into dynamic (qubit-reusing) and static circuits.
//! * [`grover`]: oracle, diffuser and amplitude amplification over the static circuit.
//! * [`analysis`]: decoding, grouping and report generation used by the CLI.

pub mod analysis;
pub mod builder;
pub mod circuit;
pub mod error;
pub mod grover;
pub mod mdp;
pub mod rng;
pub mod statevector;

pub use analysis::{execute, Format, Mode, Report, ReturnGroupReport, RunManifest};
pub use builder::{
    build_dynamic_program, build_static_preparation, build_static_program, BuildReport,
    BuiltCircuit, RegisterLayout,
};
pub use circuit::{
    invert_segment, run_shot, sample, total_variation_distance, CircuitProgram, Instruction,
    OutcomeDistribution, Sampler, ShotRecord,
};
pub use error::{QmdpError, Result};
pub use grover::{
    build_diffuser, build_oracle, extract_policy, find_max_return, optimal_iterations, run_grover,
    GroverPlan, GroverRun, Iterations, MarkPredicate, PolicyReport,
};
pub use mdp::{
    classical_enumerate, extract_support_from_corpus, parse_mdp_config, ActionPolicy, Corpus,
    MdpSpec, Step, TrajectoryCodec, TrajectoryRecord,
};
pub use statevector::{Control, GateKind, MeasurementOutcome, Polarity, StateVector};
