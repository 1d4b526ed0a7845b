//! Decoding, grouping and report generation.
//!
//! Every command produces a [`Report`]: a set of named text files plus a short
//! summary. Nothing here touches the filesystem except [`Report::write_to`] and
//! the loaders, which keeps the commands testable and the CLI thin.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::builder::{build_dynamic_program, build_static_program, BuiltCircuit};
use crate::circuit::{
    bitstring, parse_bitstring, total_variation_distance, OutcomeDistribution, Tally,
};
use crate::error::{QmdpError, Result};
use crate::grover::extract_policy;
use crate::grover::{
    find_max_return, run_grover, GroverRun, Iterations, MarkPredicate, PolicyReport,
};
use crate::mdp::{
    audit_corpus, classical_enumerate, parse_mdp_config, ActionPolicy, Corpus, MdpSpec,
    TrajectoryCodec, TrajectoryRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Dynamic,
    Static,
    Grover,
    Enumerate,
    Ingest,
    Compare,
}

/// Everything one command invocation needs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub mode: Mode,
    /// `None` uses the bundled default MDP.
    pub mdp_path: Option<PathBuf>,
    pub corpus_path: Option<PathBuf>,
    pub steps: usize,
    /// `None` requests the analytic distribution.
    pub shots: Option<u64>,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub target_return: Option<String>,
    pub start_state: Option<String>,
    pub end_state: Option<String>,
    /// Two distribution files for compare mode.
    pub inputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(mode: Mode, out: impl Into<PathBuf>) -> Self {
        Self {
            mode,
            mdp_path: None,
            corpus_path: None,
            steps: 3,
            shots: None,
            seed: 0,
            out: out.into(),
            format: Format::Csv,
            target_return: None,
            start_state: None,
            end_state: None,
            inputs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist = |p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(QmdpError::Io(format!("{} does not exist", p.display())))
            }
        };
        if let Some(p) = &self.mdp_path {
            must_exist(p)?;
        }
        if let Some(p) = &self.corpus_path {
            must_exist(p)?;
        }
        if self.shots == Some(0) {
            return Err(QmdpError::Domain("shots must be at least 1".into()));
        }
        if self.mode != Mode::Ingest && self.mode != Mode::Compare && self.steps == 0 {
            return Err(QmdpError::Domain("horizon must be at least 1".into()));
        }
        match self.mode {
            Mode::Compare if self.inputs.len() != 2 => Err(QmdpError::Domain(
                "compare needs exactly two distribution files".into(),
            )),
            Mode::Compare => self.inputs.iter().try_for_each(|p| must_exist(p)),
            Mode::Grover if self.shots.is_none() => {
                Err(QmdpError::Domain("grover needs --shots".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFile {
    pub name: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub files: Vec<ReportFile>,
    pub summary: String,
    /// Set when outputs were produced but the command still failed, e.g. an
    /// ingested corpus with violations.
    pub failure: Option<QmdpError>,
}

impl Report {
    fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push(ReportFile {
            name: name.into(),
            contents,
        });
    }

    fn add_table(&mut self, stem: &str, format: Format, table: &Table) {
        let contents = match format {
            Format::Csv => table.to_csv(),
            Format::Json => table.to_json(),
        };
        self.add(format!("{stem}.{}", format.extension()), contents);
    }

    fn add_distribution(&mut self, stem: &str, format: Format, dist: &OutcomeDistribution) {
        let contents = match format {
            Format::Csv => dist.to_csv(),
            Format::Json => dist.to_json(),
        };
        self.add(format!("{stem}.{}", format.extension()), contents);
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|f| f.name == name)
            .map(|f| f.contents.as_str())
    }

    /// Writes every file into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for f in &self.files {
            write_atomic(&dir.join(&f.name), &f.contents)?;
        }
        write_atomic(&dir.join("summary.txt"), &self.summary)
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| QmdpError::Io(format!("{} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// Header plus rows of JSON scalars; renders to CSV or a JSON array of objects.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(header: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                Value::Object(
                    self.header
                        .iter()
                        .cloned()
                        .zip(row.iter().cloned())
                        .collect(),
                )
            })
            .collect();
        serde_json::to_string_pretty(&rows).expect("table serializes") + "\n"
    }
}

/// A decoded trajectory with its display id.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub id: String,
    pub bits: String,
    /// `weight` holds the normalized probability or sampled frequency.
    pub record: TrajectoryRecord,
}

/// Decodes every outcome; ids come from `corpus` when the bit string is listed.
pub fn decode_distribution(
    dist: &OutcomeDistribution,
    codec: &TrajectoryCodec,
    corpus: Option<&Corpus>,
) -> Vec<TrajectoryRow> {
    dist.probabilities()
        .into_iter()
        .map(|(key, p)| {
            let bits = bitstring(key, codec.width());
            let id = corpus
                .and_then(|c| c.id_of(&bits))
                .map_or_else(|| bits.clone(), str::to_string);
            TrajectoryRow {
                id,
                bits,
                record: codec.decode_record(key, p),
            }
        })
        .collect()
}

fn step_cell(s: &crate::mdp::Step) -> String {
    format!("s{} a{} s{} r{}", s.state, s.action, s.next_state, s.reward)
}

/// `id,bits,return,step0..,probability`.
pub fn trajectory_table(rows: &[TrajectoryRow], steps: usize) -> Table {
    let mut table = Table::new(
        ["id", "bits", "return"]
            .into_iter()
            .map(String::from)
            .chain((0..steps).map(|t| format!("step{t}")))
            .chain(["probability".to_string()]),
    );
    for row in rows {
        let mut cells = vec![
            json!(row.id),
            json!(row.bits),
            json!(row.record.return_value),
        ];
        cells.extend(row.record.steps.iter().map(|s| json!(step_cell(s))));
        cells.push(json!(row.record.weight));
        table.rows.push(cells);
    }
    table
}

/// Trajectory × time step → state, including the final next state.
pub fn visitation_table(rows: &[TrajectoryRow], steps: usize) -> Table {
    let mut table = Table::new(
        ["id".to_string(), "bits".to_string()]
            .into_iter()
            .chain((0..=steps).map(|t| format!("t{t}"))),
    );
    for row in rows {
        let mut cells = vec![json!(row.id), json!(row.bits)];
        cells.extend(row.record.steps.iter().map(|s| json!(s.state)));
        if let Some(last) = row.record.steps.last() {
            cells.push(json!(last.next_state));
        }
        table.rows.push(cells);
    }
    table
}

/// Trajectories bucketed by their decoded return.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReturnGroupReport {
    pub groups: BTreeMap<u64, Vec<TrajectoryRow>>,
}

impl ReturnGroupReport {
    pub fn from_rows(rows: &[TrajectoryRow]) -> Self {
        let mut groups: BTreeMap<u64, Vec<TrajectoryRow>> = BTreeMap::new();
        for row in rows {
            groups
                .entry(row.record.return_value)
                .or_default()
                .push(row.clone());
        }
        Self { groups }
    }

    /// Groups from the highest return down.
    pub fn descending(&self) -> impl Iterator<Item = (&u64, &Vec<TrajectoryRow>)> {
        self.groups.iter().rev()
    }

    pub fn total(&self) -> f64 {
        self.groups
            .values()
            .flatten()
            .map(|r| r.record.weight)
            .sum()
    }

    /// `return,id,bits,probability`, highest return first.
    pub fn table(&self, return_bits: usize) -> Table {
        let mut table = Table::new(["return", "id", "bits", "probability"]);
        for (&g, rows) in self.descending() {
            for row in rows {
                table.rows.push(vec![
                    json!(bitstring(g, return_bits)),
                    json!(row.id),
                    json!(row.bits),
                    json!(row.record.weight),
                ]);
            }
        }
        table
    }
}

/// `iteration,analytic,sampled`.
pub fn success_curve_table(run: &GroverRun) -> Table {
    let mut table = Table::new(["iteration", "analytic", "sampled"]);
    for (j, (a, s)) in run
        .analytic_curve
        .iter()
        .zip(&run.sampled_curve)
        .enumerate()
    {
        table.rows.push(vec![json!(j), json!(a), json!(s)]);
    }
    table
}

pub fn policy_table(report: &PolicyReport) -> Table {
    let mut table = Table::new(["state", "action", "alternatives"]);
    for (&s, &a) in &report.policy {
        let alts = report
            .conflicts
            .iter()
            .find(|c| c.state == s)
            .map(|c| {
                c.actions
                    .iter()
                    .filter(|&&x| x != a)
                    .map(|x| format!("a{x}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_default();
        table.rows.push(vec![
            json!(format!("s{s}")),
            json!(format!("a{a}")),
            json!(alts),
        ]);
    }
    table
}

pub fn load_mdp(path: Option<&Path>) -> Result<MdpSpec> {
    match path {
        Some(p) => parse_mdp_config(&fs::read_to_string(p)?),
        None => Ok(MdpSpec::example()),
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::parse_csv(&fs::read_to_string(path)?)
}

/// Reads a distribution as JSON when the extension says so, otherwise CSV.
pub fn load_distribution(path: &Path) -> Result<OutcomeDistribution> {
    let text = fs::read_to_string(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        OutcomeDistribution::from_json(&text)
    } else {
        OutcomeDistribution::from_csv(&text)
    }
}

fn load_optional_corpus(m: &RunManifest) -> Result<Option<Corpus>> {
    m.corpus_path.as_deref().map(load_corpus).transpose()
}

/// Parses a register code given as a bit string.
fn parse_code(flag: &str, text: &str) -> Result<u64> {
    parse_bitstring(text)
        .map_err(|_| QmdpError::Domain(format!("{flag} expects a bit string, got {text:?}")))
}

/// Distribution, decoded trajectories, return groups and visitation table.
fn trajectory_outputs(
    report: &mut Report,
    format: Format,
    dist: &OutcomeDistribution,
    codec: &TrajectoryCodec,
    corpus: Option<&Corpus>,
) -> (Vec<TrajectoryRow>, ReturnGroupReport) {
    let rows = decode_distribution(dist, codec, corpus);
    let groups = ReturnGroupReport::from_rows(&rows);
    report.add_distribution("distribution", format, dist);
    report.add_table(
        "trajectories",
        format,
        &trajectory_table(&rows, codec.steps),
    );
    report.add_table("groups", format, &groups.table(codec.return_bits));
    report.add_table("visitation", format, &visitation_table(&rows, codec.steps));
    (rows, groups)
}

fn group_summary(groups: &ReturnGroupReport, return_bits: usize) -> String {
    groups
        .descending()
        .map(|(&g, rows)| {
            format!(
                "  return {}: {} trajectories\n",
                bitstring(g, return_bits),
                rows.len()
            )
        })
        .collect()
}

/// Simulates the dynamic or static program.
pub fn cmd_run(m: &RunManifest) -> Result<Report> {
    m.validate()?;
    let mdp = load_mdp(m.mdp_path.as_deref())?;
    let corpus = load_optional_corpus(m)?;
    let built: BuiltCircuit = match m.mode {
        Mode::Static => build_static_program(&mdp, m.steps, true)?,
        _ => build_dynamic_program(&mdp, m.steps)?,
    };
    let dist = match m.shots {
        None => built.program.exact_distribution()?,
        Some(shots) => crate::circuit::sample(&built.program, shots, m.seed)?,
    };
    let codec = built.layout.codec;
    let mut report = Report::default();
    let (rows, groups) = trajectory_outputs(&mut report, m.format, &dist, &codec, corpus.as_ref());
    report.add("build.toml", built.report.to_text());
    report.add("circuit.txt", built.program.dump());
    report.summary = format!(
        "{:?} program, {} steps, {} qubits ({} interaction)\n{} distinct trajectories ({})\n{}",
        m.mode,
        m.steps,
        built.report.total_qubit_count,
        built.report.interaction_qubit_count,
        rows.len(),
        match dist.tally() {
            Tally::Analytic => "analytic".to_string(),
            Tally::Shots(n) => format!("{n} shots, seed {}", m.seed),
        },
        group_summary(&groups, codec.return_bits),
    );
    Ok(report)
}

/// Brute-force classical enumeration under a uniform start.
pub fn cmd_enumerate(m: &RunManifest) -> Result<Report> {
    m.validate()?;
    let mdp = load_mdp(m.mdp_path.as_deref())?;
    let corpus = load_optional_corpus(m)?;
    let codec = TrajectoryCodec::for_mdp(&mdp, m.steps);
    if codec.width() > 64 {
        return Err(QmdpError::WidthOverflow(format!(
            "{}-bit records do not fit in 64 bits",
            codec.width()
        )));
    }
    let records = classical_enumerate(&mdp, m.steps, &mdp.uniform_start(), ActionPolicy::Uniform)?;
    let mut entries = BTreeMap::new();
    for r in &records {
        *entries.entry(codec.encode(r)).or_insert(0.0) += r.weight;
    }
    let dist = OutcomeDistribution::analytic(codec.width(), entries);
    let mut report = Report::default();
    let (rows, groups) = trajectory_outputs(&mut report, m.format, &dist, &codec, corpus.as_ref());
    report.summary = format!(
        "classical enumeration, {} steps\n{} trajectories\n{}",
        m.steps,
        rows.len(),
        group_summary(&groups, codec.return_bits)
    );
    Ok(report)
}

/// Grover search for a target return, or a descending scan when none is given.
pub fn cmd_grover(m: &RunManifest) -> Result<Report> {
    m.validate()?;
    let mdp = load_mdp(m.mdp_path.as_deref())?;
    let corpus = load_optional_corpus(m)?;
    let shots = m.shots.expect("validated");
    let start = m
        .start_state
        .as_deref()
        .map(|s| parse_code("--start", s))
        .transpose()?;
    let end = m
        .end_state
        .as_deref()
        .map(|s| parse_code("--end", s))
        .transpose()?;

    let mut report = Report::default();
    let run = match &m.target_return {
        Some(bits) => {
            let predicate = MarkPredicate {
                target_return: parse_code("--return", bits)?,
                start_state: start,
                end_state: end,
            };
            run_grover(&mdp, m.steps, predicate, Iterations::Auto, shots, m.seed)?
        }
        None => {
            if end.is_some() {
                return Err(QmdpError::Domain("--end requires --return".into()));
            }
            let search = find_max_return(&mdp, m.steps, start, shots, m.seed)?;
            let mut scan = Table::new(["return", "marked_probability"]);
            for e in &search.log {
                scan.rows.push(vec![
                    json!(bitstring(
                        e.target_return,
                        search.run.layout.codec.return_bits
                    )),
                    json!(e.marked_probability),
                ]);
            }
            report.add_table("scan", m.format, &scan);
            search.run
        }
    };

    let codec = run.layout.codec;
    let ids = |r: &TrajectoryRecord| {
        let bits = bitstring(codec.encode(r), codec.width());
        corpus
            .as_ref()
            .and_then(|c| c.id_of(&bits))
            .map_or_else(|| bits.clone(), str::to_string)
    };
    let marked_rows: Vec<TrajectoryRow> = run
        .marked
        .iter()
        .map(|r| TrajectoryRow {
            id: ids(r),
            bits: bitstring(codec.encode(r), codec.width()),
            record: r.clone(),
        })
        .collect();
    let policy = extract_policy(&run.marked);

    report.add_table(
        "marked",
        m.format,
        &trajectory_table(&marked_rows, codec.steps),
    );
    report.add_table("success_curve", m.format, &success_curve_table(&run));
    report.add_table("policy", m.format, &policy_table(&policy));
    report.add_distribution("distribution", m.format, &run.distribution);
    let plan = json!({
        "predicate": run.plan.predicate,
        "iterations": run.plan.iterations,
        "marked_probability": run.plan.marked_probability,
        "preparation_gates": run.plan.preparation.iter().filter(|i| i.is_gate()).count(),
        "policy": policy,
    });
    report.add(
        "plan.json",
        serde_json::to_string_pretty(&plan).expect("plan serializes") + "\n",
    );

    let p = run.plan.predicate;
    let mut summary = format!(
        "target return {}{}{}\nmarked probability {:.6}, {} iteration(s), amplified {:.6}\nwitnesses: {}\npolicy:",
        bitstring(p.target_return, codec.return_bits),
        p.start_state
            .map_or(String::new(), |s| format!(", start {}", bitstring(s, codec.state_bits))),
        p.end_state
            .map_or(String::new(), |s| format!(", end {}", bitstring(s, codec.state_bits))),
        run.plan.marked_probability,
        run.plan.iterations,
        run.simulated_curve.last().copied().unwrap_or_default(),
        marked_rows.iter().map(|r| r.id.as_str()).collect::<Vec<_>>().join(" "),
    );
    for (s, a) in &policy.policy {
        summary.push_str(&format!(" s{s}->a{a}"));
    }
    summary.push('\n');
    for c in &policy.conflicts {
        summary.push_str(&format!(
            "conflict in s{}: actions {:?}, chose a{}\n",
            c.state, c.actions, c.chosen
        ));
    }
    report.summary = summary;
    Ok(report)
}

/// Audits a corpus and extracts its transition support.
pub fn cmd_ingest(m: &RunManifest) -> Result<Report> {
    m.validate()?;
    let corpus = match &m.corpus_path {
        Some(p) => load_corpus(p)?,
        None => Corpus::reference(),
    };
    let mdp = load_mdp(m.mdp_path.as_deref())?;
    let codec = TrajectoryCodec::for_mdp(&mdp, m.steps);
    let audit = audit_corpus(&corpus, &codec)?;

    let mut support = Table::new(["state", "action", "next", "steps"]);
    for &(s, a, n) in &audit.triples {
        let seen: Vec<String> = audit
            .per_step
            .iter()
            .enumerate()
            .filter(|(_, set)| set.contains(&(s, a, n)))
            .map(|(t, _)| t.to_string())
            .collect();
        support
            .rows
            .push(vec![json!(s), json!(a), json!(n), json!(seen.join(" "))]);
    }
    let mut verification = Table::new(["id", "bits", "status", "step", "reason"]);
    for entry in &corpus.entries {
        let found: Vec<_> = audit
            .violations
            .iter()
            .filter(|v| v.id == entry.id)
            .collect();
        if found.is_empty() {
            verification.rows.push(vec![
                json!(entry.id),
                json!(entry.bits),
                json!("ok"),
                json!(""),
                json!(""),
            ]);
        }
        for v in found {
            verification.rows.push(vec![
                json!(entry.id),
                json!(entry.bits),
                json!("violation"),
                json!(v.step),
                json!(v.reason),
            ]);
        }
    }
    let normalized = corpus
        .entries
        .iter()
        .fold(String::from("id,bits\n"), |acc, e| {
            acc + &format!("{},{}\n", e.id, e.bits)
        });

    let mut report = Report::default();
    report.add("corpus.csv", normalized);
    report.add_table("support", m.format, &support);
    report.add_table("verification", m.format, &verification);
    report.summary = format!(
        "{} entries, {} distinct (s, a, s') triples, {} violations\n",
        corpus.len(),
        audit.triples.len(),
        audit.violations.len()
    );
    for v in &audit.violations {
        report
            .summary
            .push_str(&format!("  {} step {}: {}\n", v.id, v.step, v.reason));
    }
    if let Some(v) = audit.violations.first() {
        report.failure = Some(QmdpError::Consistency {
            id: v.id.clone(),
            step: v.step,
            reason: v.reason.clone(),
        });
    }
    Ok(report)
}

/// Total variation distance plus the largest per-string differences.
pub fn cmd_compare(m: &RunManifest) -> Result<Report> {
    m.validate()?;
    let a = load_distribution(&m.inputs[0])?;
    let b = load_distribution(&m.inputs[1])?;
    if a.width() != b.width() {
        return Err(QmdpError::Format(format!(
            "widths differ: {} vs {}",
            a.width(),
            b.width()
        )));
    }
    let tvd = total_variation_distance(&a, &b);
    let (pa, pb) = (a.probabilities(), b.probabilities());
    let mut diffs: Vec<(u64, f64, f64)> = pa
        .keys()
        .chain(pb.keys())
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|k| {
            (
                k,
                pa.get(&k).copied().unwrap_or(0.0),
                pb.get(&k).copied().unwrap_or(0.0),
            )
        })
        .collect();
    // Stable sort keeps key order among equal discrepancies.
    diffs.sort_by(|x, y| (y.2 - y.1).abs().total_cmp(&(x.2 - x.1).abs()));

    let mut table = Table::new(["bits", "a", "b", "diff"]);
    for &(k, x, y) in &diffs {
        table.rows.push(vec![
            json!(bitstring(k, a.width())),
            json!(x),
            json!(y),
            json!(y - x),
        ]);
    }
    let mut report = Report::default();
    report.add_table("diff", m.format, &table);
    report.summary = format!("tvd {tvd:e}\n");
    for &(k, x, y) in diffs.iter().take(10) {
        report
            .summary
            .push_str(&format!("  {} {x:.6} {y:.6}\n", bitstring(k, a.width())));
    }
    Ok(report)
}

/// Dispatches on the manifest mode.
pub fn execute(m: &RunManifest) -> Result<Report> {
    match m.mode {
        Mode::Dynamic | Mode::Static => cmd_run(m),
        Mode::Grover => cmd_grover(m),
        Mode::Enumerate => cmd_enumerate(m),
        Mode::Ingest => cmd_ingest(m),
        Mode::Compare => cmd_compare(m),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn example_codec() -> TrajectoryCodec {
        TrajectoryCodec::for_mdp(&MdpSpec::example(), 3)
    }

    #[test]
    fn corpus_ids_join_and_round_trip() {
        let corpus = Corpus::reference();
        let codec = example_codec();
        let entries = corpus
            .entries
            .iter()
            .map(|e| (parse_bitstring(&e.bits).unwrap(), 1.0))
            .collect();
        let dist = OutcomeDistribution::analytic(codec.width(), entries);
        let rows = decode_distribution(&dist, &codec, Some(&corpus));
        assert_eq!(rows.len(), 170);
        for row in &rows {
            assert_eq!(corpus.bits_of(&row.id), Some(row.bits.as_str()));
            assert_eq!(
                bitstring(codec.encode(&row.record), codec.width()),
                row.bits
            );
        }
        let groups = ReturnGroupReport::from_rows(&rows);
        assert_abs_diff_eq!(groups.total(), 1.0, epsilon = 1e-9);
        let order: Vec<u64> = groups.descending().map(|(&g, _)| g).collect();
        assert_eq!(order.first(), Some(&9));
        assert_eq!(order.last(), Some(&1));
        for (&g, rows) in &groups.groups {
            assert!(rows.iter().all(|r| r.record.return_value == g));
        }
    }

    #[test]
    fn tables_render_both_formats() {
        let mut t = Table::new(["a", "b"]);
        t.rows.push(vec![json!("x"), json!(0.5)]);
        assert_eq!(t.to_csv(), "a,b\nx,0.5\n");
        let parsed: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(parsed, json!([{"a": "x", "b": 0.5}]));
    }

    #[test]
    fn visitation_includes_final_state() {
        let codec = example_codec();
        let corpus = Corpus::reference();
        let key = parse_bitstring(corpus.bits_of("T-151").unwrap()).unwrap();
        let dist = OutcomeDistribution::analytic(codec.width(), BTreeMap::from([(key, 1.0)]));
        let rows = decode_distribution(&dist, &codec, Some(&corpus));
        let table = visitation_table(&rows, 3);
        assert_eq!(table.header, ["id", "bits", "t0", "t1", "t2", "t3"]);
        assert_eq!(table.rows[0][2..], [json!(0), json!(2), json!(3), json!(3)]);
        let traj = trajectory_table(&rows, 3).to_csv();
        assert!(traj.starts_with("id,bits,return,step0,step1,step2,probability\n"));
        assert!(traj
            .contains("T-151,1000111111111111101010000,8,s0 a0 s2 r2,s2 a1 s3 r3,s3 a1 s3 r3,1.0"));
    }

    #[test]
    fn manifest_validation() {
        let mut m = RunManifest::new(Mode::Compare, "/tmp/x");
        assert!(m.validate().is_err());
        m.mode = Mode::Dynamic;
        m.shots = Some(0);
        assert!(m.validate().is_err());
        m.shots = None;
        assert!(m.validate().is_ok());
        m.mdp_path = Some("/definitely/missing.toml".into());
        assert!(matches!(m.validate(), Err(QmdpError::Io(_))));
        let g = RunManifest::new(Mode::Grover, "/tmp/x");
        assert!(g.validate().is_err());
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = std::env::temp_dir().join(format!("qmdp-atomic-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("out.txt");
        write_atomic(&path, "one").unwrap();
        write_atomic(&path, "two").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "two");
        assert_eq!(fs::read_dir(&dir).unwrap().count(), 1);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn enumerate_and_dynamic_reports_agree() {
        let mut m = RunManifest::new(Mode::Enumerate, "/tmp/unused");
        m.steps = 2;
        let enumerated = cmd_enumerate(&m).unwrap();
        m.mode = Mode::Dynamic;
        let dynamic = cmd_run(&m).unwrap();
        let a =
            OutcomeDistribution::from_csv(enumerated.file("distribution.csv").unwrap()).unwrap();
        let b = OutcomeDistribution::from_csv(dynamic.file("distribution.csv").unwrap()).unwrap();
        assert!(total_variation_distance(&a, &b) < 1e-9);
        assert_eq!(
            enumerated.file("groups.csv").unwrap().lines().count(),
            dynamic.file("groups.csv").unwrap().lines().count()
        );
        assert!(dynamic
            .file("build.toml")
            .unwrap()
            .contains("interaction_qubit_count = 7"));
    }

    #[test]
    fn sampled_reports_are_deterministic() {
        let mut m = RunManifest::new(Mode::Dynamic, "/tmp/unused");
        m.steps = 2;
        m.shots = Some(500);
        m.seed = 9;
        let a = cmd_run(&m).unwrap();
        let b = cmd_run(&m).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ingest_reports_violations_by_id() {
        let dir = std::env::temp_dir().join(format!("qmdp-ingest-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        let mut text = crate::mdp::REFERENCE_CORPUS_CSV.to_string();
        let good = Corpus::reference().bits_of("T-151").unwrap().to_string();
        let bad = format!("0111{}", &good[4..]);
        text = text.replace(&format!("T-151,{good}"), &format!("T-151,{bad}"));
        fs::write(&path, text).unwrap();

        let mut m = RunManifest::new(Mode::Ingest, &dir);
        m.corpus_path = Some(path);
        let report = cmd_ingest(&m).unwrap();
        let failure = report.failure.clone().expect("violation reported");
        assert!(matches!(failure, QmdpError::Consistency { ref id, .. } if id == "T-151"));
        let verification = report.file("verification.csv").unwrap();
        assert_eq!(verification.matches("violation").count(), 1);

        m.corpus_path = None;
        let clean = cmd_ingest(&m).unwrap();
        assert!(clean.failure.is_none());
        assert!(clean.summary.starts_with("170 entries"));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn compare_reports_tvd() {
        let dir = std::env::temp_dir().join(format!("qmdp-compare-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let a = dir.join("a.csv");
        let b = dir.join("b.json");
        fs::write(&a, "bits,value\n00,1\n").unwrap();
        let other = OutcomeDistribution::analytic(2, BTreeMap::from([(3, 1.0)]));
        fs::write(&b, other.to_json()).unwrap();
        let mut m = RunManifest::new(Mode::Compare, &dir);
        m.inputs = vec![a.clone(), b];
        let report = cmd_compare(&m).unwrap();
        assert!(report.summary.starts_with("tvd 1e0"));
        m.inputs = vec![a.clone(), a];
        assert!(cmd_compare(&m).unwrap().summary.starts_with("tvd 0e0"));
        fs::remove_dir_all(&dir).unwrap();
    }
}
