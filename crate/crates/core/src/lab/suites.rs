use rayon::prelude::*;
use serde_json::{json, Value};

use super::{
    CheckRecord, Environment, LabError, ProvenanceKind, RuleDescriptor, VerificationReport,
};
use crate::engine::{Automaton, EngineError};
use crate::estimators::{
    entropy_curve, entropy_rate_1d, entropy_rate_automaton, joint_entropy_mc,
    shift_entropy_uniform, Budgets, Entropy1dSummary, EntropyCurve, EstimatorError, Fraction,
    Method, Partition, RateEstimate,
};
use crate::permutativity::{
    analyze, is_permutative_exhaustive, permutative_set, permutative_set_1d,
};
use crate::rules::{pt_sites, LocalRule1D, LocalRule2D, RuleError, RuleForm, RuleSpec};

use ProvenanceKind::{Bound, ClosedForm, Identity, Oracle};

const A_PERMUTATIVE: &str =
    "permutativity: the local map is a bijection in the letter at the position";
const A_PT: &str = "rules permutative at the four side midpoints have entropy rate 8r ln q";
const A_TWO_SITE: &str = "additive rules on two side midpoints have entropy rate 4r ln 2";
const A_TRANSLATION: &str = "a translation by r has entropy rate 2r ln 2";
const A_BIPERMUTATIVE: &str = "a one-dimensional rule permutative at -r and r has entropy 2r ln q";
const A_FINITE: &str = "finiteness: the entropy rate is at most 8r ln q";
const A_SHIFT: &str = "the entropy rate is at most 8r times the shift entropy of the measure";
const A_TOP_MEAS: &str = "topological entropy dominates measure entropy";
const A_SANDWICH: &str =
    "band/square sandwich: H_band(N) <= H_square(N) <= H_band(N) + |E_(n-r)| ln q";
const A_POWER: &str = "the entropy rate of F^k is k times the entropy rate of F";
const A_EXTENSION: &str = "the extension to dimension two has twice the one-dimensional entropy";
const A_CONJUGACY: &str = "entropy is invariant under conjugacy by a bijective letter map";
const A_1D: &str = "one-dimensional bound: h <= 2r ln q";
const A_MC: &str = "Monte Carlo estimate of H_meas against the exact value";

const TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum)]
pub enum Suite {
    Permutative,
    Bounds,
    BandSquare,
    Power,
    Extension,
    Conjugacy,
    #[value(name = "1d")]
    OneD,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Permutative => "permutative",
            Suite::Bounds => "bounds",
            Suite::BandSquare => "band-square",
            Suite::Power => "power",
            Suite::Extension => "extension",
            Suite::Conjugacy => "conjugacy",
            Suite::OneD => "1d",
            Suite::All => "all",
        }
    }

    pub const PARTS: [Suite; 7] = [
        Suite::Permutative,
        Suite::Bounds,
        Suite::BandSquare,
        Suite::Power,
        Suite::Extension,
        Suite::Conjugacy,
        Suite::OneD,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Samples for the Monte Carlo cross-check.
    pub samples: u64,
    pub budgets: Budgets,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 0,
            samples: 20_000,
            budgets: Budgets::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subject {
    pub name: String,
    pub spec: RuleSpec,
}

pub fn run_suite(
    suite: Suite,
    subject: &Subject,
    config: &SuiteConfig,
) -> Result<VerificationReport, LabError> {
    let parts: Vec<Suite> = match suite {
        Suite::All => Suite::PARTS.to_vec(),
        s => vec![s],
    };
    let per_suite = parts
        .into_par_iter()
        .map(|part| -> Result<Vec<CheckRecord>, LabError> {
            let ctx = Ctx {
                suite: part.name(),
                config,
            };
            Ok(match (&subject.spec, part) {
                (RuleSpec::TwoD(rule), Suite::Permutative) => ctx.permutative(rule)?,
                (RuleSpec::OneD(rule), Suite::Permutative) => ctx.permutative_1d(rule)?,
                (RuleSpec::TwoD(rule), Suite::Bounds) => ctx.bounds(rule)?,
                (RuleSpec::OneD(rule), Suite::Bounds) => ctx.bound_1d(rule)?,
                (RuleSpec::TwoD(rule), Suite::BandSquare) => ctx.band_square(rule)?,
                (RuleSpec::TwoD(rule), Suite::Power) => ctx.power(rule)?,
                (RuleSpec::OneD(rule), Suite::Power) => ctx.power_1d(rule)?,
                (RuleSpec::TwoD(rule), Suite::Extension) => match rule.form() {
                    RuleForm::Extension(inner) => ctx.extension(inner)?,
                    _ => vec![ctx.not_applicable(
                        "extension",
                        "the rule is not an extension of a one-dimensional rule",
                    )],
                },
                (RuleSpec::OneD(rule), Suite::Extension) => ctx.extension(rule)?,
                (RuleSpec::TwoD(rule), Suite::Conjugacy) => ctx.conjugacy(rule)?,
                (RuleSpec::OneD(rule), Suite::OneD) => ctx.bound_1d(rule)?,
                (RuleSpec::OneD(_), Suite::BandSquare | Suite::Conjugacy) => {
                    vec![ctx.not_applicable(part.name(), "two-dimensional rules only")]
                }
                (RuleSpec::TwoD(_), Suite::OneD) => {
                    vec![ctx.not_applicable("1d", "one-dimensional rules only")]
                }
                (_, Suite::All) => unreachable!("expanded above"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let checks = per_suite.into_iter().flatten().collect();
    VerificationReport::assemble(
        suite.name(),
        RuleDescriptor::new(subject.name.clone(), &subject.spec),
        Environment::new(config),
        checks,
    )
}

fn over_budget(e: &EstimatorError) -> bool {
    matches!(
        e,
        EstimatorError::EnumerationBudget { .. }
            | EstimatorError::Engine(EngineError::MatrixBudget { .. })
            | EstimatorError::Engine(EngineError::Rule(RuleError::BudgetExceeded { .. }))
    )
}

fn ln_q(q: u32) -> f64 {
    f64::from(q).ln()
}

fn units_value(units: Option<Fraction>, nats: f64) -> Value {
    match units {
        Some(u) => json!({"nats": nats, "ln_q_units": u.to_string()}),
        None => json!({"nats": nats}),
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * (1.0 + a.abs().max(b.abs()))
}

fn le(a: f64, b: f64) -> bool {
    a <= b || close(a, b)
}

fn fraction_times(f: Fraction, k: i64) -> Fraction {
    Fraction::new(f.num * k, f.den)
}

fn rate_range(rule_r: u32) -> (u32, u32) {
    (rule_r, rule_r + 2)
}

/// `H_top >= H_meas` at every point of every curve.
fn top_dominates(curves: &[&EntropyCurve<f64>]) -> (bool, Vec<Value>) {
    let mut ok = true;
    let mut rows = Vec::new();
    for c in curves {
        for p in &c.points {
            let holds = match (p.top_units, p.meas_units, p.h_top) {
                (Some(t), Some(m), _) => t >= m,
                (_, _, Some(t)) => le(p.h_meas, t),
                _ => true,
            };
            ok &= holds;
            rows.push(json!({"partition": c.partition, "N": p.steps, "h_top": p.h_top, "h_meas": p.h_meas}));
        }
    }
    (ok, rows)
}

struct Ctx<'a> {
    suite: &'static str,
    config: &'a SuiteConfig,
}

impl Ctx<'_> {
    fn id(&self, rest: &str) -> String {
        format!("{}/{}", self.suite, rest)
    }

    fn not_applicable(&self, what: &str, why: &str) -> CheckRecord {
        CheckRecord::new(
            self.id(what),
            "applicability",
            Identity,
            "rule dimension and form",
        )
        .skipped(why)
    }

    fn rate(
        &self,
        automaton: &Automaton,
        n_min: u32,
        n_max: u32,
        steps: Option<u32>,
    ) -> Result<Result<RateEstimate<f64>, EstimatorError>, LabError> {
        let method = Method::exact_for(automaton);
        match entropy_rate_automaton(automaton, n_min, n_max, steps, method, &self.config.budgets) {
            Ok(r) => Ok(Ok(r)),
            Err(e) if over_budget(&e) || matches!(e, EstimatorError::BoundViolation { .. }) => {
                Ok(Err(e))
            }
            Err(e) => Err(e.into()),
        }
    }

    fn rate_1d(
        &self,
        rule: &LocalRule1D,
        n_min: u32,
        n_max: u32,
    ) -> Result<Result<Entropy1dSummary<f64>, EstimatorError>, LabError> {
        let method = Method::exact_for(&Automaton::from_1d(rule));
        match entropy_rate_1d(rule, n_min, n_max, None, method, &self.config.budgets) {
            Ok(r) => Ok(Ok(r)),
            Err(e) if over_budget(&e) => Ok(Err(e)),
            Err(e) => Err(e.into()),
        }
    }

    fn permutative(&self, rule: &LocalRule2D) -> Result<Vec<CheckRecord>, LabError> {
        let mut out = Vec::new();
        let analysis = analyze(rule);
        out.push(
            CheckRecord::new(
                self.id("analysis"),
                A_PERMUTATIVE,
                Identity,
                "permutativity analysis",
            )
            .computed(serde_json::to_value(&analysis).expect("serialisable")),
        );

        let algebraic = permutative_set(rule);
        let scan: Result<Vec<_>, _> = crate::geometry::square_window(rule.r())
            .iter()
            .map(|v| is_permutative_exhaustive(rule, v).map(|p| (v, p)))
            .collect();
        let rec = CheckRecord::new(
            self.id("scan-agrees"),
            A_PERMUTATIVE,
            Oracle,
            "exhaustive scan of complement patterns",
        );
        out.push(match scan {
            Ok(scan) => {
                let found: Vec<[i32; 2]> = scan
                    .iter()
                    .filter(|s| s.1)
                    .map(|s| [s.0.i, s.0.j])
                    .collect();
                let expected: Vec<[i32; 2]> = algebraic.iter().map(|c| [c.i, c.j]).collect();
                rec.computed(json!(found))
                    .expected("==", json!(expected))
                    .passes(found == expected)
            }
            Err(e) => rec.skipped(e.to_string()),
        });

        let r = rule.r();
        let affine = rule.affine_form().filter(|f| f.is_linear());
        let pt = pt_sites(r);
        let family = if analysis.fully_pt_permutative {
            Some((8 * i64::from(r), A_PT, "8r ln q"))
        } else {
            affine.as_ref().filter(|_| rule.q() == 2).and_then(|f| {
                let on_pt = f.terms.iter().all(|(c, _)| pt.contains(c));
                match (on_pt, f.terms.len()) {
                    (true, 2) => Some((4 * i64::from(r), A_TWO_SITE, "4r ln 2")),
                    (true, 1) => Some((2 * i64::from(r), A_TRANSLATION, "2r ln 2")),
                    _ => None,
                }
            })
        };
        let Some((units, anchor, source)) = family else {
            out.push(
                CheckRecord::new(
                    self.id("closed-form"),
                    A_PT,
                    ClosedForm,
                    "rule families with known rates",
                )
                .skipped("no closed form is known for this rule"),
            );
            return Ok(out);
        };
        let (n_min, n_max) = rate_range(r);
        let rec = CheckRecord::new(self.id("closed-form"), anchor, ClosedForm, source);
        let expected_nats = units as f64 * ln_q(rule.q());
        out.push(
            match self.rate(&Automaton::from_2d(rule), n_min, n_max, None)? {
                Ok(rate) => {
                    let ok = match rate.measure.fitted_units {
                        Some(u) => u == Fraction::integer(units),
                        None => close(rate.fitted_rate(), expected_nats),
                    };
                    rec.computed(units_value(rate.measure.fitted_units, rate.fitted_rate()))
                        .expected(
                            "==",
                            units_value(Some(Fraction::integer(units)), expected_nats),
                        )
                        .tolerance(TOL)
                        .passes(ok)
                        .note(format!(
                            "band partitions n = {n_min}..{n_max}, N = {}",
                            rate.steps
                        ))
                }
                Err(e) => rec.skipped(e.to_string()),
            },
        );
        Ok(out)
    }

    fn permutative_1d(&self, rule: &LocalRule1D) -> Result<Vec<CheckRecord>, LabError> {
        let set = permutative_set_1d(rule);
        let r = rule.r() as i32;
        let mut out = vec![CheckRecord::new(
            self.id("analysis"),
            A_PERMUTATIVE,
            Identity,
            "permutativity analysis",
        )
        .computed(json!({"permutative_offsets": set}))];
        let rec = CheckRecord::new(
            self.id("closed-form"),
            A_BIPERMUTATIVE,
            ClosedForm,
            "2r ln q",
        );
        if !(set.contains(&-r) && set.contains(&r)) {
            out.push(rec.skipped("the rule is not permutative at both -r and r"));
            return Ok(out);
        }
        let (n_min, n_max) = rate_range(rule.r());
        let units = 2 * i64::from(rule.r());
        let expected = units as f64 * ln_q(rule.q());
        out.push(match self.rate_1d(rule, n_min, n_max)? {
            Ok(s) => rec
                .computed(units_value(s.h_units.map(Fraction::integer), s.h))
                .expected("==", units_value(Some(Fraction::integer(units)), expected))
                .passes(match s.h_units {
                    Some(u) => u == units,
                    None => close(s.h, expected),
                }),
            Err(e) => rec.skipped(e.to_string()),
        });
        Ok(out)
    }

    fn bounds(&self, rule: &LocalRule2D) -> Result<Vec<CheckRecord>, LabError> {
        let automaton = Automaton::from_2d(rule);
        let r = rule.r();
        let (n_min, n_max, steps) = if automaton.affine().is_some() {
            (r, r + 2, None)
        } else {
            (r, r, Some(2))
        };
        let bound = 8.0 * f64::from(r) * ln_q(rule.q());
        let bound_value = json!({"nats": bound, "expression": "8r ln q"});
        let mut out = Vec::new();
        let rate = match self.rate(&automaton, n_min, n_max, steps)? {
            Ok(rate) => rate,
            Err(e @ EstimatorError::BoundViolation { .. }) => {
                out.push(
                    CheckRecord::new(self.id("finiteness"), A_FINITE, Bound, "8r ln q")
                        .expected("<=", bound_value)
                        .passes(false)
                        .note(e.to_string()),
                );
                return Ok(out);
            }
            Err(e) => {
                out.push(
                    CheckRecord::new(self.id("finiteness"), A_FINITE, Bound, "8r ln q")
                        .skipped(e.to_string()),
                );
                return Ok(out);
            }
        };
        let caveat = rate.invariance_caveat;
        let span = format!("band partitions n = {n_min}..{n_max}, N = {}", rate.steps);

        let top = rate.topological.as_ref();
        let rec = CheckRecord::new(
            self.id("finiteness/topological"),
            A_FINITE,
            Bound,
            "8r ln q",
        )
        .expected("<=", bound_value.clone())
        .note(span.clone());
        out.push(match top {
            Some(t) => rec
                .computed(units_value(t.fitted_units, t.fitted_rate))
                .passes(le(t.fitted_rate, bound)),
            None => rec.skipped("the engine gives no topological entropy"),
        });

        let measure = units_value(rate.measure.fitted_units, rate.fitted_rate());
        let rec = CheckRecord::new(self.id("finiteness/measure"), A_FINITE, Bound, "8r ln q")
            .computed(measure.clone())
            .expected("<=", bound_value.clone())
            .note(span.clone());
        out.push(if caveat {
            rec.diagnostic()
                .note("uniform measure not witnessed invariant: time-0 plug-in statistic, no claim on h_mu")
        } else {
            rec.passes(le(rate.fitted_rate(), bound))
        });

        let shift_bound = 8.0 * f64::from(r) * shift_entropy_uniform::<f64>(rule.q());
        let rec = CheckRecord::new(
            self.id("shift-entropy"),
            A_SHIFT,
            Bound,
            "8r h(shift) with h(shift) = ln q",
        )
        .computed(json!({"rate": measure, "bound": shift_bound}))
        .expected("<=", json!({"nats": bound}));
        out.push(if caveat {
            rec.diagnostic()
                .note("uniform measure not witnessed invariant")
        } else {
            rec.passes(close(shift_bound, bound) && le(rate.fitted_rate(), shift_bound))
        });

        let curves: Vec<&EntropyCurve<f64>> = rate.slopes.iter().map(|s| &s.curve).collect();
        let (ok, rows) = top_dominates(&curves);
        out.push(
            CheckRecord::new(
                self.id("top-vs-measure"),
                A_TOP_MEAS,
                Bound,
                "Shannon entropy <= log of support size",
            )
            .computed(json!(rows))
            .expected(">=", json!("H_top >= H_meas at every point"))
            .passes(ok),
        );

        out.push(
            CheckRecord::new(self.id("tightness"), A_FINITE, Bound, "8r ln q")
                .computed(json!({"rate": measure, "bound": bound, "equal": close(rate.fitted_rate(), bound)}))
                .diagnostic(),
        );

        out.push(
            CheckRecord::new(
                self.id("diagnostics"),
                A_FINITE,
                Identity,
                "rate estimator diagnostics",
            )
            .computed(serde_json::to_value(&rate.diagnostics).expect("serialisable"))
            .diagnostic(),
        );

        out.push(self.monte_carlo(rule)?);
        Ok(out)
    }

    /// Monte Carlo against the exact engine on the thinnest band at `N = 2`.
    fn monte_carlo(&self, rule: &LocalRule2D) -> Result<CheckRecord, LabError> {
        let automaton = Automaton::from_2d(rule);
        let partition = Partition::Band(rule.r());
        let rec = CheckRecord::new(self.id("monte-carlo"), A_MC, Oracle, "exact engine");
        let exact: EntropyCurve<f64> = match entropy_curve(
            &automaton,
            partition,
            2,
            Method::exact_for(&automaton),
            &self.config.budgets,
        ) {
            Ok(c) => c,
            Err(e) if over_budget(&e) => return Ok(rec.skipped(e.to_string())),
            Err(e) => return Err(e.into()),
        };
        let mc: EntropyCurve<f64> =
            joint_entropy_mc(rule, partition, 2, self.config.samples, self.config.seed)?;
        let (e, m) = (exact.last(), mc.last());
        let se = m.stderr.unwrap_or(0.0);
        Ok(rec
            .computed(json!({"h_meas": m.h_meas, "stderr": se, "plugin": m.h_meas_plugin, "samples": self.config.samples}))
            .expected("~=", json!({"h_meas": e.h_meas}))
            .note(format!(
                "{partition}, N = 2, within 3 stderr: {}",
                (m.h_meas - e.h_meas).abs() <= 3.0 * se
            ))
            .diagnostic())
    }

    fn bound_1d(&self, rule: &LocalRule1D) -> Result<Vec<CheckRecord>, LabError> {
        let (n_min, n_max) = rate_range(rule.r());
        let bound = 2.0 * f64::from(rule.r()) * ln_q(rule.q());
        let rec = CheckRecord::new(
            self.id("entropy-bound"),
            A_1D,
            Bound,
            "2r h(shift) with h(shift) = ln q",
        )
        .expected("<=", json!({"nats": bound, "expression": "2r ln q"}));
        let s = match self.rate_1d(rule, n_min, n_max)? {
            Ok(s) => s,
            Err(e) => return Ok(vec![rec.skipped(e.to_string())]),
        };
        let curves: Vec<&EntropyCurve<f64>> = s.slopes.iter().map(|x| &x.curve).collect();
        let (ok, rows) = top_dominates(&curves);
        let mut out = vec![
            rec.computed(units_value(s.h_units.map(Fraction::integer), s.h_max))
                .passes(s.within_bound)
                .note(format!("intervals n = {n_min}..{n_max}, N = {}", s.steps)),
            CheckRecord::new(
                self.id("top-vs-measure"),
                A_TOP_MEAS,
                Bound,
                "Shannon entropy <= log of support size",
            )
            .computed(json!(rows))
            .expected(">=", json!("H_top >= H_meas at every point"))
            .passes(ok),
            CheckRecord::new(self.id("tightness"), A_1D, Bound, "2r ln q")
                .computed(json!({"h": s.h, "bound": bound, "equal": close(s.h, bound)}))
                .diagnostic(),
        ];
        if s.invariance_caveat {
            out[0].note =
                Some("uniform measure not witnessed invariant: time-0 plug-in statistic".into());
        }
        Ok(out)
    }

    fn band_square(&self, rule: &LocalRule2D) -> Result<Vec<CheckRecord>, LabError> {
        let automaton = Automaton::from_2d(rule);
        let method = Method::exact_for(&automaton);
        let r = rule.r();
        let q = rule.q();
        let mut out = Vec::new();
        for n in [r, r + 1] {
            let curve = |p: Partition, steps: u32| {
                entropy_curve::<f64>(&automaton, p, steps, method, &self.config.budgets)
            };
            // N = 3 first, falling back to N = 2 when only that fits
            let mut pair = None;
            let mut why = String::new();
            for steps in [3, 2] {
                match curve(Partition::Band(n), steps)
                    .and_then(|b| Ok((b, curve(Partition::Square(n), steps)?)))
                {
                    Ok(p) => {
                        pair = Some(p);
                        break;
                    }
                    Err(e) if over_budget(&e) => why = e.to_string(),
                    Err(e) => return Err(e.into()),
                }
            }
            let slack_units = u64::from((2 * (n - r) + 1) * (2 * (n - r) + 1));
            let slack = slack_units as f64 * ln_q(q);
            for steps in [2u32, 3] {
                let rec = CheckRecord::new(
                    self.id(&format!("n={n}/N={steps}")),
                    A_SANDWICH,
                    Bound,
                    "band pattern plus inner square pattern determines the square pattern",
                );
                let Some((band, square)) = &pair else {
                    out.push(rec.skipped(why.clone()));
                    continue;
                };
                let (Some(b), Some(s)) = (band.point(steps), square.point(steps)) else {
                    out.push(rec.skipped(why.clone()));
                    continue;
                };
                let holds = |bu: Option<u64>, su: Option<u64>, bh: f64, sh: f64| match (bu, su) {
                    (Some(bu), Some(su)) => bu <= su && su <= bu + slack_units,
                    _ => le(bh, sh) && le(sh, bh + slack),
                };
                let top_ok = holds(
                    b.top_units,
                    s.top_units,
                    b.h_top.unwrap_or(0.0),
                    s.h_top.unwrap_or(0.0),
                );
                let meas_ok = holds(b.meas_units, s.meas_units, b.h_meas, s.h_meas);
                out.push(
                    rec.computed(json!({
                        "band": {"h_top": b.h_top, "h_meas": b.h_meas, "top_units": b.top_units},
                        "square": {"h_top": s.h_top, "h_meas": s.h_meas, "top_units": s.top_units},
                    }))
                    .expected(
                        "in",
                        json!({"lower": "H_band", "upper": "H_band + slack", "slack": slack}),
                    )
                    .passes(top_ok && meas_ok)
                    .note(format!("{:?} engine", method.kind())),
                );
            }
        }
        Ok(out)
    }

    fn power(&self, rule: &LocalRule2D) -> Result<Vec<CheckRecord>, LabError> {
        const K: u32 = 2;
        let rec = CheckRecord::new(
            self.id("k=2"),
            A_POWER,
            Oracle,
            "rate of F computed independently",
        );
        let powered = match rule.power(K) {
            Ok(p) => p,
            Err(e @ RuleError::BudgetExceeded { .. }) => {
                return Ok(vec![rec.skipped(e.to_string())])
            }
            Err(e) => return Err(e.into()),
        };
        let (n_min, n_max) = rate_range(rule.r());
        let (m_min, m_max) = rate_range(powered.r());
        let base = self.rate(&Automaton::from_2d(rule), n_min, n_max, None)?;
        let pow = self.rate(&Automaton::from_2d(&powered), m_min, m_max, None)?;
        let (base, pow) = match (base, pow) {
            (Ok(b), Ok(p)) => (b, p),
            (Err(e), _) | (_, Err(e)) => return Ok(vec![rec.skipped(e.to_string())]),
        };
        let expected_units = base
            .measure
            .fitted_units
            .map(|f| fraction_times(f, i64::from(K)));
        let expected = f64::from(K) * base.fitted_rate();
        let ok = match (pow.measure.fitted_units, expected_units) {
            (Some(a), Some(b)) => a == b,
            _ => close(pow.fitted_rate(), expected),
        };
        Ok(vec![rec
            .computed(units_value(pow.measure.fitted_units, pow.fitted_rate()))
            .expected("==", units_value(expected_units, expected))
            .tolerance(TOL)
            .passes(ok)
            .note(format!(
                "F on n = {n_min}..{n_max}, F^{K} (radius {}) on n = {m_min}..{m_max}",
                powered.r()
            ))])
    }

    fn power_1d(&self, rule: &LocalRule1D) -> Result<Vec<CheckRecord>, LabError> {
        const K: u32 = 2;
        let rec = CheckRecord::new(
            self.id("k=2"),
            A_POWER,
            Oracle,
            "entropy of F computed independently",
        );
        let powered = match rule.power(K) {
            Ok(p) => p,
            Err(e @ RuleError::BudgetExceeded { .. }) => {
                return Ok(vec![rec.skipped(e.to_string())])
            }
            Err(e) => return Err(e.into()),
        };
        let (n_min, n_max) = rate_range(rule.r());
        let (m_min, m_max) = rate_range(powered.r());
        let (base, pow) = match (
            self.rate_1d(rule, n_min, n_max)?,
            self.rate_1d(&powered, m_min, m_max)?,
        ) {
            (Ok(b), Ok(p)) => (b, p),
            (Err(e), _) | (_, Err(e)) => return Ok(vec![rec.skipped(e.to_string())]),
        };
        let expected_units = base.h_units.map(|u| u * i64::from(K));
        let expected = f64::from(K) * base.h;
        let ok = match (pow.h_units, expected_units) {
            (Some(a), Some(b)) => a == b,
            _ => close(pow.h, expected),
        };
        Ok(vec![rec
            .computed(units_value(pow.h_units.map(Fraction::integer), pow.h))
            .expected(
                "==",
                units_value(expected_units.map(Fraction::integer), expected),
            )
            .passes(ok)])
    }

    fn extension(&self, inner: &LocalRule1D) -> Result<Vec<CheckRecord>, LabError> {
        let rec = CheckRecord::new(
            self.id("doubling"),
            A_EXTENSION,
            Oracle,
            "one-dimensional engine",
        );
        let (n_min, n_max) = rate_range(inner.r());
        let ext = LocalRule2D::extension(inner.clone());
        let h = self.rate_1d(inner, n_min, n_max)?;
        let rate = self.rate(&Automaton::from_2d(&ext), n_min, n_max, None)?;
        let (h, rate) = match (h, rate) {
            (Ok(h), Ok(r)) => (h, r),
            (Err(e), _) | (_, Err(e)) => return Ok(vec![rec.skipped(e.to_string())]),
        };
        let expected_units = h.h_units.map(|u| Fraction::integer(2 * u));
        let expected = 2.0 * h.h;
        let ok = match (rate.measure.fitted_units, expected_units) {
            (Some(a), Some(b)) => a == b,
            _ => close(rate.fitted_rate(), expected),
        };
        Ok(vec![rec
            .computed(units_value(rate.measure.fitted_units, rate.fitted_rate()))
            .expected("==", units_value(expected_units, expected))
            .tolerance(TOL)
            .passes(ok)
            .note(format!(
                "h(1D) = {} nats on intervals n = {n_min}..{n_max}",
                h.h
            ))])
    }

    fn conjugacy(&self, rule: &LocalRule2D) -> Result<Vec<CheckRecord>, LabError> {
        let q = rule.q();
        let perm: Vec<u8> = (0..q).rev().map(|a| a as u8).collect();
        let conj = match rule.conjugate_letters(&perm) {
            Ok(c) => c,
            Err(e @ RuleError::BudgetExceeded { .. }) => {
                return Ok(vec![CheckRecord::new(
                    self.id("curves"),
                    A_CONJUGACY,
                    Oracle,
                    "original rule",
                )
                .skipped(e.to_string())])
            }
            Err(e) => return Err(e.into()),
        };
        let mut out = vec![CheckRecord::new(
            self.id("permutative-set"),
            A_CONJUGACY,
            Oracle,
            "permutative set of the original rule",
        )
        .computed(json!(permutative_set(&conj)
            .iter()
            .map(|c| [c.i, c.j])
            .collect::<Vec<_>>()))
        .expected(
            "==",
            json!(permutative_set(rule)
                .iter()
                .map(|c| [c.i, c.j])
                .collect::<Vec<_>>()),
        )
        .passes(permutative_set(&conj) == permutative_set(rule))];

        let (a, b) = (Automaton::from_2d(rule), Automaton::from_2d(&conj));
        let r = rule.r();
        let mut cases = vec![
            (Method::Enumeration, Partition::Square(r), 2),
            (Method::Enumeration, Partition::Band(r), 2),
        ];
        if a.affine().is_some() && b.affine().is_some() {
            for n in [r, r + 1] {
                cases.push((Method::Rank, Partition::Square(n), 3));
                cases.push((Method::Rank, Partition::Band(n), 3));
            }
        }
        for (method, partition, steps) in cases {
            let rec = CheckRecord::new(
                self.id(&format!(
                    "{}/{}-n={}",
                    serde_json::to_value(method.kind())
                        .expect("name")
                        .as_str()
                        .unwrap_or(""),
                    partition.kind(),
                    partition.n()
                )),
                A_CONJUGACY,
                Oracle,
                "curve of the original rule",
            );
            let budgets = &self.config.budgets;
            let pair = entropy_curve::<f64>(&a, partition, steps, method, budgets).and_then(|x| {
                Ok((
                    x,
                    entropy_curve::<f64>(&b, partition, steps, method, budgets)?,
                ))
            });
            out.push(match pair {
                Ok((x, y)) => {
                    let (px, py) = (
                        serde_json::to_value(&x.points).expect("serialisable"),
                        serde_json::to_value(&y.points).expect("serialisable"),
                    );
                    let same = serde_json::to_string(&px).ok() == serde_json::to_string(&py).ok();
                    rec.computed(py).expected("==", px).passes(same)
                }
                Err(e) if over_budget(&e) => rec.skipped(e.to_string()),
                Err(e) => return Err(e.into()),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::corpus::entry;
    use crate::lab::Status;

    fn run(name: &str, suite: Suite) -> VerificationReport {
        let e = entry(name).unwrap();
        let subject = Subject {
            name: e.name.into(),
            spec: e.spec,
        };
        run_suite(suite, &subject, &SuiteConfig::default()).unwrap()
    }

    fn status(report: &VerificationReport, id: &str) -> Status {
        report
            .checks
            .iter()
            .find(|c| c.id == id)
            .unwrap_or_else(|| panic!("no check {id}"))
            .status
    }

    #[test]
    fn closed_forms() {
        for (name, units) in [("plus", "8"), ("f12", "4"), ("f34", "4"), ("f1", "2")] {
            let report = run(name, Suite::Permutative);
            assert!(!report.failed(), "{name}: {report:#?}");
            let c = report
                .checks
                .iter()
                .find(|c| c.id == "permutative/closed-form")
                .unwrap();
            assert_eq!(c.status, Status::Pass);
            assert_eq!(c.computed["ln_q_units"], units);
        }
        assert_eq!(
            status(&run("and", Suite::Permutative), "permutative/closed-form"),
            Status::Skipped
        );
    }

    #[test]
    fn bounds_on_and_are_caveated() {
        let report = run("and", Suite::Bounds);
        assert!(!report.failed());
        assert_eq!(
            status(&report, "bounds/finiteness/topological"),
            Status::Pass
        );
        assert_eq!(
            status(&report, "bounds/finiteness/measure"),
            Status::Diagnostic
        );
    }

    #[test]
    fn one_dimensional_rules_skip_planar_suites() {
        let report = run("xor-1d", Suite::All);
        assert!(!report.failed(), "{report:#?}");
        assert_eq!(status(&report, "band-square/band-square"), Status::Skipped);
        assert_eq!(status(&report, "extension/doubling"), Status::Pass);
        assert_eq!(status(&report, "1d/entropy-bound"), Status::Pass);
        assert_eq!(status(&report, "power/k=2"), Status::Pass);
        assert_eq!(status(&report, "permutative/closed-form"), Status::Pass);
    }

    #[test]
    fn conjugacy_of_f12() {
        let report = run("f12", Suite::Conjugacy);
        assert!(!report.failed());
        assert_eq!(
            status(&report, "conjugacy/enumeration/square-n=1"),
            Status::Pass
        );
        assert_eq!(status(&report, "conjugacy/rank/band-n=2"), Status::Pass);
    }
}
