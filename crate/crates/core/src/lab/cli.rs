//! The `erlab` command line.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 usage or rule
//! file errors, 3 engine errors (including exceeded budgets).

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use super::corpus;
use super::{
    run_suite, LabError, RuleDescriptor, Subject, Suite, SuiteConfig, VerificationReport, SCHEMA,
};
use crate::engine::Automaton;
use crate::estimators::{
    entropy_curve, entropy_rate_1d, entropy_rate_automaton, Budgets, EntropyCurve, EstimatorError,
    Method, Partition, DEFAULT_ENUMERATION_BUDGET, DEFAULT_MATRIX_BUDGET,
};
use crate::geometry::square_window;
use crate::permutativity::{analyze, permutative_set_1d};
use crate::rules::{parse_rule, RuleSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "erlab", version, about = "Entropy rates of cellular automata")]
pub struct Cli {
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Permutative positions, additivity and invariance of a rule.
    Permutativity(RuleArg),
    /// Joint entropies H(N) for N = 1..steps on one partition.
    Entropy(EntropyArgs),
    /// Entropy-rate estimate from band partitions n_min..n_max.
    Rate(RateArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct RuleArg {
    /// A rule document, or the name of a corpus rule.
    #[arg(long)]
    pub rule: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PartitionArg {
    Band,
    Square,
    /// One-dimensional rules.
    Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Rank for affine rules, exhaustive enumeration otherwise.
    Auto,
    /// Exhaustive enumeration of window patterns.
    #[value(alias = "enumeration")]
    Exact,
    Rank,
    Mc,
}

#[derive(Debug, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Auto)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Enumeration budget in window patterns.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
    pub budget: u64,
    /// Trajectory matrix budget in entries.
    #[arg(long, default_value_t = DEFAULT_MATRIX_BUDGET)]
    pub matrix_budget: u64,
}

impl EngineArgs {
    fn method(&self, automaton: &Automaton) -> Method {
        match self.method {
            MethodArg::Auto => Method::exact_for(automaton),
            MethodArg::Exact => Method::Enumeration,
            MethodArg::Rank => Method::Rank,
            MethodArg::Mc => Method::MonteCarlo {
                samples: self.samples,
                seed: self.seed,
            },
        }
    }

    fn budgets(&self) -> Budgets {
        Budgets {
            enumeration: self.budget,
            matrix_entries: self.matrix_budget,
        }
    }
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[arg(long)]
    pub rule: String,
    #[arg(long, value_enum, default_value_t = PartitionArg::Band)]
    pub partition: PartitionArg,
    #[arg(long)]
    pub n: u32,
    #[arg(long, default_value_t = 3)]
    pub steps: u32,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[arg(long)]
    pub rule: String,
    #[arg(long)]
    pub n_min: u32,
    #[arg(long)]
    pub n_max: u32,
    /// Defaults to 2 ceil(n_max / r) + 2.
    #[arg(long)]
    pub steps: Option<u32>,
    #[command(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long)]
    pub rule: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Samples for the Monte Carlo cross-check.
    #[arg(long, default_value_t = 20_000)]
    pub samples: u64,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_BUDGET)]
    pub budget: u64,
    #[arg(long, default_value_t = DEFAULT_MATRIX_BUDGET)]
    pub matrix_budget: u64,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Engine(String),
}

impl From<LabError> for Failure {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Estimator(e) => e.into(),
            LabError::Rule(e) => Failure::Usage(e.to_string()),
            e => Failure::Engine(e.to_string()),
        }
    }
}

impl From<EstimatorError> for Failure {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::DimensionMismatch { .. }
            | EstimatorError::BadRange { .. }
            | EstimatorError::TooFewSamples(_)
            | EstimatorError::TooFewSteps(_)
            | EstimatorError::Geometry(_) => Failure::Usage(e.to_string()),
            e => Failure::Engine(e.to_string()),
        }
    }
}

struct Output {
    body: String,
    failed: bool,
}

/// Parses `args` (including the program name) and runs the command.
/// Reports go to `out` unless `--out` is given; messages go to `err`.
pub fn run<I, S>(args: I, out: &mut impl Write, err: &mut impl Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Failure::Usage(format!("cannot start {n} threads: {e}"))),
        },
        None => execute(&cli),
    };
    let output = match result {
        Ok(o) => o,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
        Err(Failure::Engine(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_ENGINE;
        }
    };
    let written = match &cli.out {
        Some(path) => {
            std::fs::write(path, &output.body).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => out
            .write_all(output.body.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(msg) = written {
        let _ = writeln!(err, "error: {msg}");
        return EXIT_USAGE;
    }
    if output.failed {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}

/// A rule document path, or a corpus name when no such file exists.
fn load_rule(arg: &str) -> Result<Subject, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        let text =
            std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{arg}: {e}")))?;
        let spec = parse_rule(&text).map_err(|e| Failure::Usage(format!("{arg}: {e}")))?;
        let file = path.file_name().and_then(|f| f.to_str()).unwrap_or(arg);
        let name = file
            .strip_suffix(".rule.json")
            .or_else(|| file.strip_suffix(".json"))
            .unwrap_or(file);
        return Ok(Subject {
            name: name.to_string(),
            spec,
        });
    }
    match corpus::entry(arg) {
        Some(e) => Ok(Subject {
            name: e.name.to_string(),
            spec: e.spec,
        }),
        None => Err(Failure::Usage(format!(
            "{arg}: no such rule file or corpus rule"
        ))),
    }
}

fn automaton(spec: &RuleSpec) -> Automaton {
    match spec {
        RuleSpec::TwoD(r) => Automaton::from_2d(r),
        RuleSpec::OneD(r) => Automaton::from_1d(r),
    }
}

fn envelope(command: &str, subject: &Subject, key: &str, payload: Value) -> Value {
    json!({
        "schema": SCHEMA,
        "command": command,
        "rule": RuleDescriptor::new(subject.name.clone(), &subject.spec),
        key: payload,
    })
}

fn to_json(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s
}

fn csv_body(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

const CURVE_HEADER: [&str; 11] = [
    "rule",
    "partition",
    "n",
    "N",
    "method",
    "h_top",
    "h_meas",
    "stderr",
    "top_units",
    "meas_units",
    "cells",
];

fn curve_rows(rule: &str, curve: &EntropyCurve<f64>) -> Vec<Vec<String>> {
    curve
        .points
        .iter()
        .map(|p| {
            vec![
                rule.to_string(),
                curve.partition.kind().to_string(),
                curve.partition.n().to_string(),
                p.steps.to_string(),
                serde_json::to_value(curve.method)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default(),
                opt(p.h_top),
                p.h_meas.to_string(),
                opt(p.stderr),
                opt(p.top_units),
                opt(p.meas_units),
                opt(p.cells),
            ]
        })
        .collect()
}

fn execute(cli: &Cli) -> Result<Output, Failure> {
    let ok = |body| {
        Ok(Output {
            body,
            failed: false,
        })
    };
    match &cli.command {
        Command::Permutativity(args) => {
            let subject = load_rule(&args.rule)?;
            match &subject.spec {
                RuleSpec::TwoD(rule) => {
                    let analysis = analyze(rule);
                    match cli.format {
                        Format::Json => ok(to_json(&envelope(
                            "permutativity",
                            &subject,
                            "analysis",
                            serde_json::to_value(&analysis).expect("serialisable"),
                        ))),
                        Format::Csv => {
                            let rows = square_window(rule.r())
                                .iter()
                                .map(|c| {
                                    let p = analysis.permutative_positions.contains(&[c.i, c.j]);
                                    vec![
                                        subject.name.clone(),
                                        c.i.to_string(),
                                        c.j.to_string(),
                                        p.to_string(),
                                    ]
                                })
                                .collect();
                            ok(csv_body(&["rule", "i", "j", "permutative"], rows))
                        }
                    }
                }
                RuleSpec::OneD(rule) => {
                    let set = permutative_set_1d(rule);
                    match cli.format {
                        Format::Json => ok(to_json(&envelope(
                            "permutativity",
                            &subject,
                            "analysis",
                            json!({"q": rule.q(), "r": rule.r(), "permutative_offsets": set}),
                        ))),
                        Format::Csv => {
                            let r = rule.r() as i32;
                            let rows = (-r..=r)
                                .map(|i| {
                                    vec![
                                        subject.name.clone(),
                                        i.to_string(),
                                        set.contains(&i).to_string(),
                                    ]
                                })
                                .collect();
                            ok(csv_body(&["rule", "offset", "permutative"], rows))
                        }
                    }
                }
            }
        }
        Command::Entropy(args) => {
            let subject = load_rule(&args.rule)?;
            let a = automaton(&subject.spec);
            let partition = match args.partition {
                PartitionArg::Band => Partition::Band(args.n),
                PartitionArg::Square => Partition::Square(args.n),
                PartitionArg::Interval => Partition::Interval(args.n),
            };
            let curve: EntropyCurve<f64> = entropy_curve(
                &a,
                partition,
                args.steps,
                args.engine.method(&a),
                &args.engine.budgets(),
            )?;
            match cli.format {
                Format::Json => ok(to_json(&envelope(
                    "entropy",
                    &subject,
                    "curve",
                    serde_json::to_value(&curve).expect("serialisable"),
                ))),
                Format::Csv => ok(csv_body(&CURVE_HEADER, curve_rows(&subject.name, &curve))),
            }
        }
        Command::Rate(args) => {
            let subject = load_rule(&args.rule)?;
            let a = automaton(&subject.spec);
            let method = args.engine.method(&a);
            let budgets = args.engine.budgets();
            let (payload, curves): (Value, Vec<EntropyCurve<f64>>) = match &subject.spec {
                RuleSpec::TwoD(_) => {
                    let est = entropy_rate_automaton::<f64>(
                        &a, args.n_min, args.n_max, args.steps, method, &budgets,
                    )?;
                    let curves = est.slopes.iter().map(|s| s.curve.clone()).collect();
                    (serde_json::to_value(&est).expect("serialisable"), curves)
                }
                RuleSpec::OneD(rule) => {
                    let s = entropy_rate_1d::<f64>(
                        rule, args.n_min, args.n_max, args.steps, method, &budgets,
                    )?;
                    let curves = s.slopes.iter().map(|s| s.curve.clone()).collect();
                    (serde_json::to_value(&s).expect("serialisable"), curves)
                }
            };
            match cli.format {
                Format::Json => ok(to_json(&envelope("rate", &subject, "estimate", payload))),
                Format::Csv => ok(csv_body(
                    &CURVE_HEADER,
                    curves
                        .iter()
                        .flat_map(|c| curve_rows(&subject.name, c))
                        .collect(),
                )),
            }
        }
        Command::Verify(args) => {
            let subject = load_rule(&args.rule)?;
            let config = SuiteConfig {
                seed: args.seed,
                samples: args.samples,
                budgets: Budgets {
                    enumeration: args.budget,
                    matrix_entries: args.matrix_budget,
                },
            };
            let report = run_suite(args.suite, &subject, &config)?;
            let body = match cli.format {
                Format::Json => to_json(&report),
                Format::Csv => report_csv(&report),
            };
            Ok(Output {
                body,
                failed: report.failed(),
            })
        }
    }
}

fn report_csv(report: &VerificationReport) -> String {
    let text = |v: &Value| match v {
        Value::Null => String::new(),
        v => v.to_string(),
    };
    let rows = report
        .checks
        .iter()
        .map(|c| {
            vec![
                report.rule.name.clone(),
                c.id.clone(),
                serde_json::to_value(c.status)
                    .ok()
                    .map(|v| text(&v).trim_matches('"').to_string())
                    .unwrap_or_default(),
                c.anchor.clone(),
                serde_json::to_value(c.provenance.kind)
                    .ok()
                    .map(|v| text(&v).trim_matches('"').to_string())
                    .unwrap_or_default(),
                c.provenance.source.clone(),
                text(&c.computed),
                c.expected.as_ref().map(text).unwrap_or_default(),
                c.relation.clone().unwrap_or_default(),
                opt(c.tolerance),
                c.note.clone().unwrap_or_default(),
            ]
        })
        .collect();
    csv_body(
        &[
            "rule",
            "id",
            "status",
            "anchor",
            "provenance",
            "source",
            "computed",
            "expected",
            "relation",
            "tolerance",
            "note",
        ],
        rows,
    )
}
