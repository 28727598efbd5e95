//! Structural analysis of local rules: permutative positions, additivity
//! and the uniform-measure invariance witness.
//!
//! A rule is permutative at `v` when, for every assignment of the other
//! neighbourhood cells, the letter at `v` determines the output bijectively.
//! Permutativity at any single position is sufficient for the uniform
//! Bernoulli measure to be invariant; the converse is not claimed, so the
//! absence of a witness is reported as [`Invariance::Unknown`].

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{Automaton, Kernel};
use crate::geometry::{checked_pow, Coord, CoordSet, Letter};
use crate::gf::is_prime;
use crate::rules::{pt_sites, AffineForm, LocalRule1D, LocalRule2D, RuleError, TABLE_BUDGET};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("position {coord} lies outside the radius-{r} neighbourhood")]
    OutsideNeighborhood { coord: Coord, r: u32 },
    #[error("budget exceeded: {required} complement patterns, {allowed} allowed")]
    BudgetExceeded { required: String, allowed: u64 },
    #[error("additivity is only defined over a prime alphabet, got q = {0}")]
    NonPrimeField(u32),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// Whether the analysis could certify invariance of the uniform measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Invariance {
    Witnessed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coefficient {
    pub coord: [i32; 2],
    pub coef: u32,
}

fn coefficients(terms: &[(Coord, u32)]) -> Vec<Coefficient> {
    terms
        .iter()
        .map(|&(c, coef)| Coefficient {
            coord: [c.i, c.j],
            coef,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleAnalysis {
    pub q: u32,
    pub r: u32,
    pub permutative_positions: Vec<[i32; 2]>,
    pub is_additive: bool,
    /// Coefficients `c_v = f(δ_v)` when the rule is additive.
    pub additive_coefficients: Option<Vec<Coefficient>>,
    /// Constant term when the rule is affine but not additive.
    pub affine_constant: Option<u32>,
    pub fully_pt_permutative: bool,
    pub uniform_invariant_witness: bool,
    pub invariance: Invariance,
}

fn check_position(rule: &LocalRule2D, v: Coord) -> Result<(), AnalysisError> {
    if v.norm() > rule.r() {
        return Err(AnalysisError::OutsideNeighborhood {
            coord: v,
            r: rule.r(),
        });
    }
    Ok(())
}

/// Exhaustive bijectivity test of `table` in position `k` (little-endian
/// positions). Complement patterns are scanned in parallel.
fn table_permutative(q: u32, table: &[Letter], k: usize) -> bool {
    let qs = q as usize;
    let low = qs.pow(k as u32);
    let complements = table.len() / qs;
    (0..complements).into_par_iter().all(|c| {
        let (hi, lo) = (c / low, c % low);
        let base = hi * low * qs + lo;
        let mut seen = [false; 256];
        (0..qs).all(|b| {
            let out = table[base + b * low] as usize;
            !std::mem::replace(&mut seen[out], true)
        })
    })
}

fn exhaustive_budget(q: u32, r: u32) -> Result<(), AnalysisError> {
    let cells = ((2 * r + 1) * (2 * r + 1) - 1) as usize;
    match checked_pow(q, cells) {
        Some(n) if n <= TABLE_BUDGET => Ok(()),
        _ => Err(AnalysisError::BudgetExceeded {
            required: format!("{q}^{cells}"),
            allowed: TABLE_BUDGET,
        }),
    }
}

/// Exhaustive check over every complement pattern on `E_r \ {v}`,
/// regardless of the rule's form. The rule is evaluated directly, so no
/// table is materialised.
pub fn is_permutative_exhaustive(rule: &LocalRule2D, v: Coord) -> Result<bool, AnalysisError> {
    check_position(rule, v)?;
    exhaustive_budget(rule.q(), rule.r())?;
    let nb = rule.neighborhood();
    let k = nb.position(v).expect("checked above");
    let (q, len) = (rule.q() as usize, nb.len());
    let complements = q.pow(len as u32 - 1);
    const CHUNK: usize = 1 << 12;
    Ok((0..complements.div_ceil(CHUNK))
        .into_par_iter()
        .all(|chunk| {
            let mut word = vec![0 as Letter; len];
            let start = chunk * CHUNK;
            let mut rest = start;
            for (_, d) in word.iter_mut().enumerate().filter(|(p, _)| *p != k) {
                *d = (rest % q) as Letter;
                rest /= q;
            }
            for _ in start..complements.min(start + CHUNK) {
                let mut seen = [false; 256];
                for b in 0..q {
                    word[k] = b as Letter;
                    if std::mem::replace(&mut seen[rule.eval_letters(&word) as usize], true) {
                        return false;
                    }
                }
                for (_, d) in word.iter_mut().enumerate().filter(|(p, _)| *p != k) {
                    if (*d as usize) + 1 < q {
                        *d += 1;
                        break;
                    }
                    *d = 0;
                }
            }
            true
        }))
}

/// Permutative positions of a compiled automaton, as relative offsets.
/// Affine kernels are decided algebraically (`c_v ≠ 0`); lookup kernels
/// exhaustively over the positions they read. Unread positions are never
/// permutative because `q ≥ 2`.
pub(crate) fn automaton_permutative(a: &Automaton) -> Vec<Coord> {
    match a.kernel() {
        Kernel::Affine { terms, .. } => terms.iter().filter(|t| t.1 != 0).map(|t| t.0).collect(),
        Kernel::Lookup { positions, table } => positions
            .iter()
            .enumerate()
            .filter(|&(k, _)| table_permutative(a.q(), table, k))
            .map(|(_, &v)| v)
            .collect(),
    }
}

pub fn is_permutative_at(rule: &LocalRule2D, v: Coord) -> Result<bool, AnalysisError> {
    check_position(rule, v)?;
    Ok(automaton_permutative(&Automaton::from_2d(rule)).contains(&v))
}

pub fn permutative_set(rule: &LocalRule2D) -> CoordSet {
    automaton_permutative(&Automaton::from_2d(rule))
        .into_iter()
        .collect()
}

/// Permutative offsets `k ∈ [-r, r]` of a one-dimensional rule.
pub fn permutative_set_1d(rule: &LocalRule1D) -> Vec<i32> {
    let mut out: Vec<i32> = automaton_permutative(&Automaton::from_1d(rule))
        .into_iter()
        .map(|c| c.j)
        .collect();
    out.sort_unstable();
    out
}

/// Affine realisation over a prime alphabet, verified exhaustively for
/// tables.
pub fn detect_affine(rule: &LocalRule2D) -> Result<Option<AffineForm>, AnalysisError> {
    if !is_prime(rule.q()) {
        return Err(AnalysisError::NonPrimeField(rule.q()));
    }
    Ok(rule.affine_form())
}

/// Coefficients `c_v = f(δ_v)` if `f(0) = 0` and `f` is linear; `None`
/// otherwise.
pub fn detect_additive(rule: &LocalRule2D) -> Result<Option<Vec<(Coord, u32)>>, AnalysisError> {
    Ok(detect_affine(rule)?
        .filter(AffineForm::is_linear)
        .map(|form| form.terms))
}

pub fn analyze(rule: &LocalRule2D) -> RuleAnalysis {
    let set = permutative_set(rule);
    let affine = if is_prime(rule.q()) {
        rule.affine_form()
    } else {
        None
    };
    let is_additive = affine.as_ref().is_some_and(AffineForm::is_linear);
    let fully_pt_permutative = pt_sites(rule.r()).iter().all(|&v| set.contains(v));
    let witness = !set.is_empty();
    RuleAnalysis {
        q: rule.q(),
        r: rule.r(),
        permutative_positions: set.iter().map(|c| [c.i, c.j]).collect(),
        is_additive,
        additive_coefficients: affine
            .as_ref()
            .filter(|f| f.is_linear())
            .map(|f| coefficients(&f.terms)),
        affine_constant: affine
            .as_ref()
            .filter(|f| !f.is_linear())
            .map(|f| f.constant),
        fully_pt_permutative,
        uniform_invariant_witness: witness,
        invariance: if witness {
            Invariance::Witnessed
        } else {
            Invariance::Unknown
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::square_window;
    use crate::rules::{builtin, neighborhood_position, parse_rule, serialize_rule, RuleSpec};
    use proptest::prelude::*;

    fn c(i: i32, j: i32) -> Coord {
        Coord::new(i, j)
    }

    fn and_rule() -> LocalRule2D {
        LocalRule2D::from_fn(2, 1, |w| {
            w[neighborhood_position(c(1, 0), 1)] & w[neighborhood_position(c(0, 1), 1)]
        })
        .unwrap()
    }

    #[test]
    fn projection() {
        let f1 = builtin("F1", 1).unwrap();
        assert!(is_permutative_at(&f1, c(1, 0)).unwrap());
        assert!(!is_permutative_at(&f1, c(0, 0)).unwrap());
        assert!(is_permutative_exhaustive(&f1, c(1, 0)).unwrap());
        assert!(!is_permutative_exhaustive(&f1, c(0, 0)).unwrap());
    }

    #[test]
    fn plus_and_f12_exhaustive() {
        let plus = builtin("PLUS", 1).unwrap();
        for v in pt_sites(1) {
            assert!(is_permutative_exhaustive(&plus, v).unwrap());
        }
        assert!(!is_permutative_exhaustive(&plus, c(1, 1)).unwrap());

        let f12 = builtin("F12", 1).unwrap();
        for v in square_window(1).iter() {
            let expected = v == c(1, 0) || v == c(0, 1);
            assert_eq!(is_permutative_exhaustive(&f12, v).unwrap(), expected, "{v}");
        }
    }

    #[test]
    fn sets() {
        assert_eq!(
            permutative_set(&LocalRule2D::identity(2, 1).unwrap()),
            [c(0, 0)].into_iter().collect()
        );
        assert_eq!(
            permutative_set(&builtin("F34", 1).unwrap()),
            [c(-1, 0), c(0, -1)].into_iter().collect()
        );
        assert!(permutative_set(&LocalRule2D::constant(2, 1, 0).unwrap()).is_empty());
        let f34_table = builtin("F34", 1).unwrap().to_table_rule().unwrap();
        assert_eq!(
            permutative_set(&f34_table),
            [c(-1, 0), c(0, -1)].into_iter().collect()
        );
        assert!(permutative_set(&and_rule()).is_empty());
    }

    #[test]
    fn outside_neighbourhood() {
        assert!(matches!(
            is_permutative_at(&builtin("F1", 1).unwrap(), c(2, 0)),
            Err(AnalysisError::OutsideNeighborhood { .. })
        ));
    }

    #[test]
    fn exhaustive_budget_applies() {
        let f1 = builtin("F1", 3).unwrap();
        assert!(matches!(
            is_permutative_exhaustive(&f1, c(3, 0)),
            Err(AnalysisError::BudgetExceeded { .. })
        ));
        assert!(is_permutative_at(&f1, c(3, 0)).unwrap());
    }

    #[test]
    fn additivity() {
        let f12_table = builtin("F12", 1).unwrap().to_table_rule().unwrap();
        assert_eq!(
            detect_additive(&f12_table).unwrap(),
            Some(vec![(c(0, 1), 1), (c(1, 0), 1)])
        );
        assert_eq!(detect_additive(&and_rule()).unwrap(), None);
        let zero = LocalRule2D::constant(2, 1, 0)
            .unwrap()
            .to_table_rule()
            .unwrap();
        assert_eq!(detect_additive(&zero).unwrap(), Some(vec![]));
        let four = LocalRule2D::constant(4, 1, 0).unwrap();
        assert_eq!(detect_additive(&four), Err(AnalysisError::NonPrimeField(4)));
        let swapped = builtin("F12", 1)
            .unwrap()
            .conjugate_letters(&[1, 0])
            .unwrap();
        assert_eq!(detect_additive(&swapped).unwrap(), None);
        assert_eq!(
            detect_affine(&swapped).unwrap().map(|f| f.constant),
            Some(1)
        );
    }

    #[test]
    fn analyses() {
        let plus = analyze(&builtin("PLUS", 1).unwrap());
        assert!(plus.fully_pt_permutative && plus.is_additive && plus.uniform_invariant_witness);
        assert_eq!(plus.invariance, Invariance::Witnessed);

        let id = analyze(&LocalRule2D::identity(2, 1).unwrap());
        assert!(id.uniform_invariant_witness && !id.fully_pt_permutative);

        let zero = analyze(&LocalRule2D::constant(2, 1, 0).unwrap());
        assert!(!zero.uniform_invariant_witness && zero.permutative_positions.is_empty());
        assert_eq!(zero.invariance, Invariance::Unknown);
        assert!(zero.is_additive);

        let and = analyze(&and_rule());
        assert!(!and.is_additive && and.additive_coefficients.is_none());
        assert_eq!(and.invariance, Invariance::Unknown);
    }

    #[test]
    fn one_dimensional() {
        let xor = LocalRule1D::additive(2, 1, &[(-1, 1), (1, 1)]).unwrap();
        assert_eq!(permutative_set_1d(&xor), vec![-1, 1]);
        let and = LocalRule1D::from_fn(2, 1, |w| w[0] & w[2]).unwrap();
        assert!(permutative_set_1d(&and).is_empty());
    }

    #[test]
    fn round_trip_keeps_additivity() {
        for name in ["F1", "F12", "F34", "PLUS"] {
            let rule = builtin(name, 1).unwrap().to_table_rule().unwrap();
            let spec = RuleSpec::TwoD(rule.clone());
            let back = match parse_rule(&serialize_rule(&spec)).unwrap() {
                RuleSpec::TwoD(r) => r,
                RuleSpec::OneD(_) => unreachable!(),
            };
            assert_eq!(
                detect_additive(&back).unwrap(),
                detect_additive(&rule).unwrap()
            );
        }
    }

    fn additive_rule(q: u32) -> impl Strategy<Value = LocalRule2D> {
        proptest::collection::vec(0..q, 9).prop_map(move |coefs| {
            let terms = square_window(1)
                .iter()
                .zip(coefs)
                .filter(|(_, k)| *k != 0)
                .collect::<Vec<_>>();
            LocalRule2D::additive(q, 1, terms).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn shortcut_matches_exhaustive(rule in additive_rule(2)) {
            let table = rule.to_table_rule().unwrap();
            for v in square_window(1).iter() {
                prop_assert_eq!(
                    is_permutative_at(&rule, v).unwrap(),
                    is_permutative_exhaustive(&table, v).unwrap()
                );
            }
        }

        #[test]
        fn conjugation_preserves_permutative_set(
            rule in additive_rule(3),
            perm in Just(vec![0u8, 1, 2]).prop_shuffle(),
        ) {
            let conj = rule.conjugate_letters(&perm).unwrap();
            prop_assert_eq!(permutative_set(&conj), permutative_set(&rule));
        }
    }
}
