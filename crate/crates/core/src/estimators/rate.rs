use serde::Serialize;

use super::{
    entropy_curve, invariance_witnessed, ln_q, Budgets, EntropyCurve, EstimatorError, Method,
    MethodKind, Partition,
};
use crate::engine::Automaton;
use crate::rules::{LocalRule1D, LocalRule2D};
use crate::scalar::Real;

/// Steps used when none are given: enough for the difference estimator to
/// settle on band partitions up to `n_max`.
pub fn default_steps(n_max: u32, r: u32) -> u32 {
    2 * n_max.div_ceil(r.max(1)) + 2
}

/// A reduced fraction, used for rates in units of `ln q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Fraction {
    pub num: i64,
    pub den: i64,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Fraction {
    pub fn new(num: i64, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num, den).max(1) * den.signum();
        Fraction {
            num: num / g,
            den: den / g,
        }
    }

    pub fn integer(n: i64) -> Self {
        Fraction { num: n, den: 1 }
    }

    pub fn times<T: Real>(self, unit: T) -> T {
        if self.den == 1 {
            T::of_int(self.num) * unit
        } else {
            T::of_int(self.num) * unit / T::of_int(self.den)
        }
    }
}

impl std::fmt::Display for Fraction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// The slope estimators of one partition at `N = steps`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionSlope<T> {
    pub partition: Partition,
    pub steps: u32,
    /// `H(N) - H(N-1)`, the primary estimate `h_n` (measure entropy).
    pub difference: T,
    /// `H(N) / N`, an upper-bound estimate.
    pub average: T,
    pub difference_units: Option<i64>,
    pub top_difference: Option<T>,
    pub top_difference_units: Option<i64>,
    pub top_average: Option<T>,
    /// Whether `H(N) - H(N-1)` equals `H(N-1) - H(N-2)`; needs `N >= 3`.
    pub stable: Option<bool>,
    /// Whether `H(k)/k` is non-increasing over the computed `k`.
    pub average_non_increasing: bool,
    pub curve: EntropyCurve<T>,
}

impl<T: Real> PartitionSlope<T> {
    pub fn h_n(&self) -> T {
        self.difference
    }
}

fn close<T: Real>(a: T, b: T) -> bool {
    (a - b).abs() <= T::of(1e-9) * (T::one() + a.abs().max(b.abs()))
}

fn slope_from_curve<T: Real>(curve: EntropyCurve<T>) -> Result<PartitionSlope<T>, EstimatorError> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(EstimatorError::TooFewSteps(2));
    }
    let (last, prev) = (&pts[pts.len() - 1], &pts[pts.len() - 2]);
    let steps = last.steps;
    let diff_units = |a: Option<u64>, b: Option<u64>| Some(a? as i64 - b? as i64);
    let difference_units = diff_units(last.meas_units, prev.meas_units);
    let top_difference_units = diff_units(last.top_units, prev.top_units);
    let stable = (pts.len() >= 3).then(|| {
        let before = &pts[pts.len() - 3];
        match (
            difference_units,
            diff_units(prev.meas_units, before.meas_units),
        ) {
            (Some(a), Some(b)) => a == b,
            _ => close(last.h_meas - prev.h_meas, prev.h_meas - before.h_meas),
        }
    });
    let average_non_increasing = pts.windows(2).all(|w| {
        let (a, b) = (&w[0], &w[1]);
        match (a.meas_units, b.meas_units) {
            // u_b / N_b <= u_a / N_a
            (Some(ua), Some(ub)) => ub * u64::from(a.steps) <= ua * u64::from(b.steps),
            _ => {
                let (ha, hb) = (
                    a.h_meas / T::of_count(a.steps.into()),
                    b.h_meas / T::of_count(b.steps.into()),
                );
                hb <= ha || close(ha, hb)
            }
        }
    });
    let n = T::of_count(steps.into());
    Ok(PartitionSlope {
        partition: curve.partition,
        steps,
        difference: last.h_meas - prev.h_meas,
        average: last.h_meas / n,
        difference_units,
        top_difference: last.h_top.zip(prev.h_top).map(|(a, b)| a - b),
        top_difference_units,
        top_average: last.h_top.map(|h| h / n),
        stable,
        average_non_increasing,
        curve,
    })
}

/// `h_n` for one partition from `H(steps) - H(steps - 1)`.
pub fn partition_slope<T: Real>(
    rule: &LocalRule2D,
    partition: Partition,
    steps: u32,
    method: Method,
    budgets: &Budgets,
) -> Result<PartitionSlope<T>, EstimatorError> {
    if steps < 2 {
        return Err(EstimatorError::TooFewSteps(2));
    }
    slope_from_curve(entropy_curve(
        &Automaton::from_2d(rule),
        partition,
        steps,
        method,
        budgets,
    )?)
}

/// Per-ring slopes and their fit against `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSeries<T> {
    pub h_n: Vec<T>,
    pub h_n_over_n: Vec<T>,
    /// Least-squares slope of `h_n` against `n` (`h_n / n` for one ring).
    pub fitted_rate: T,
    /// `fitted_rate / ln q` when every `h_n` is an exact multiple of `ln q`.
    pub fitted_units: Option<Fraction>,
    pub tail_max: T,
}

fn series<T: Real>(ns: &[u32], h: Vec<T>, units: Option<Vec<i64>>, unit: T) -> RateSeries<T> {
    let k = ns.len();
    let h_n_over_n: Vec<T> = h
        .iter()
        .zip(ns)
        .map(|(&v, &n)| v / T::of_count(n.into()))
        .collect();
    let tail_max = h_n_over_n.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let fitted_units = units.map(|u| {
        if k == 1 {
            return Fraction::new(u[0], i64::from(ns[0]));
        }
        let (sn, su) = (
            ns.iter().map(|&n| i64::from(n)).sum::<i64>(),
            u.iter().sum::<i64>(),
        );
        let snu: i64 = ns.iter().zip(&u).map(|(&n, &v)| i64::from(n) * v).sum();
        let snn: i64 = ns.iter().map(|&n| i64::from(n) * i64::from(n)).sum();
        let kk = k as i64;
        Fraction::new(kk * snu - sn * su, kk * snn - sn * sn)
    });
    let fitted_rate = match fitted_units {
        Some(f) => f.times(unit),
        None if k == 1 => h_n_over_n[0],
        None => {
            let kt = T::of_count(k as u64);
            let x: Vec<T> = ns.iter().map(|&n| T::of_count(n.into())).collect();
            let mx = x.iter().fold(T::zero(), |a, &b| a + b) / kt;
            let my = h.iter().fold(T::zero(), |a, &b| a + b) / kt;
            let (num, den) = x
                .iter()
                .zip(&h)
                .fold((T::zero(), T::zero()), |(nu, de), (&xi, &yi)| {
                    (nu + (xi - mx) * (yi - my), de + (xi - mx) * (xi - mx))
                });
            num / den
        }
    };
    RateSeries {
        h_n: h,
        h_n_over_n,
        fitted_rate,
        fitted_units,
        tail_max,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateDiagnostics<T> {
    pub h_n_non_decreasing: bool,
    /// `H(N)/N` non-increasing in `N` for every ring; expected for exact
    /// engines when the uniform measure is witnessed invariant.
    pub average_non_increasing: bool,
    pub differences_stable: Vec<Option<bool>>,
    /// `tail_max - fitted_rate`.
    pub spread: T,
    pub spread_ratio: Option<T>,
    /// The finiteness bound `8 r ln q`.
    pub bound: T,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateEstimate<T> {
    pub q: u32,
    pub r: u32,
    pub method: MethodKind,
    pub exact: bool,
    pub invariance_caveat: bool,
    pub steps: u32,
    pub n_values: Vec<u32>,
    pub measure: RateSeries<T>,
    pub topological: Option<RateSeries<T>>,
    pub diagnostics: RateDiagnostics<T>,
    pub slopes: Vec<PartitionSlope<T>>,
}

impl<T: Real> RateEstimate<T> {
    pub fn fitted_rate(&self) -> T {
        self.measure.fitted_rate
    }
}

fn collect_units(values: impl Iterator<Item = Option<i64>>) -> Option<Vec<i64>> {
    values.collect()
}

/// Entropy-rate estimate from band partitions `n_min..=n_max`.
pub fn entropy_rate_automaton<T: Real>(
    automaton: &Automaton,
    n_min: u32,
    n_max: u32,
    steps: Option<u32>,
    method: Method,
    budgets: &Budgets,
) -> Result<RateEstimate<T>, EstimatorError> {
    let r = automaton.radius();
    if n_min < r || n_min > n_max {
        return Err(EstimatorError::BadRange { r, n_min, n_max });
    }
    let steps = steps.unwrap_or_else(|| default_steps(n_max, r));
    if steps < 2 {
        return Err(EstimatorError::TooFewSteps(2));
    }
    let n_values: Vec<u32> = (n_min..=n_max).collect();
    let slopes = n_values
        .iter()
        .map(|&n| {
            slope_from_curve(entropy_curve(
                automaton,
                Partition::Band(n),
                steps,
                method,
                budgets,
            )?)
        })
        .collect::<Result<Vec<PartitionSlope<T>>, _>>()?;

    let unit = ln_q::<T>(automaton.q());
    let measure = series(
        &n_values,
        slopes.iter().map(|s| s.difference).collect(),
        collect_units(slopes.iter().map(|s| s.difference_units)),
        unit,
    );
    let topological = slopes
        .iter()
        .map(|s| s.top_difference)
        .collect::<Option<Vec<T>>>()
        .map(|h| {
            series(
                &n_values,
                h,
                collect_units(slopes.iter().map(|s| s.top_difference_units)),
                unit,
            )
        });

    let bound = T::of_count(8 * u64::from(r)) * unit;
    let exceeds = |x: T| x > bound && !close(x, bound);
    let within_bound = !exceeds(measure.fitted_rate)
        && !topological.as_ref().is_some_and(|t| exceeds(t.fitted_rate));
    if method.is_exact() && !within_bound {
        return Err(EstimatorError::BoundViolation {
            fitted: measure.fitted_rate.to_f64_lossy(),
            bound: bound.to_f64_lossy(),
        });
    }
    let h = &measure.h_n;
    let h_n_non_decreasing = h.windows(2).all(|w| w[1] >= w[0] || close(w[0], w[1]));
    let spread = measure.tail_max - measure.fitted_rate;
    let diagnostics = RateDiagnostics {
        h_n_non_decreasing,
        average_non_increasing: slopes.iter().all(|s| s.average_non_increasing),
        differences_stable: slopes.iter().map(|s| s.stable).collect(),
        spread,
        spread_ratio: (measure.fitted_rate > T::zero())
            .then(|| measure.tail_max / measure.fitted_rate),
        bound,
        within_bound,
    };
    Ok(RateEstimate {
        q: automaton.q(),
        r,
        method: method.kind(),
        exact: method.is_exact(),
        invariance_caveat: !invariance_witnessed(automaton),
        steps,
        n_values,
        measure,
        topological,
        diagnostics,
        slopes,
    })
}

pub fn entropy_rate<T: Real>(
    rule: &LocalRule2D,
    n_min: u32,
    n_max: u32,
    steps: Option<u32>,
    method: Method,
    budgets: &Budgets,
) -> Result<RateEstimate<T>, EstimatorError> {
    entropy_rate_automaton(
        &Automaton::from_2d(rule),
        n_min,
        n_max,
        steps,
        method,
        budgets,
    )
}

/// `h` of a one-dimensional rule observed on `[-n, n]`.
pub fn entropy_1d<T: Real>(
    rule: &LocalRule1D,
    n: u32,
    steps: u32,
    method: Method,
    budgets: &Budgets,
) -> Result<PartitionSlope<T>, EstimatorError> {
    if steps < 2 {
        return Err(EstimatorError::TooFewSteps(2));
    }
    slope_from_curve(entropy_curve(
        &Automaton::from_1d(rule),
        Partition::Interval(n),
        steps,
        method,
        budgets,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Entropy1dSummary<T> {
    pub q: u32,
    pub r: u32,
    pub method: MethodKind,
    pub exact: bool,
    pub invariance_caveat: bool,
    pub steps: u32,
    pub n_values: Vec<u32>,
    /// Estimate at the largest `n`.
    pub h: T,
    pub h_units: Option<i64>,
    pub h_max: T,
    /// `2 r ln q`.
    pub bound: T,
    pub within_bound: bool,
    pub slopes: Vec<PartitionSlope<T>>,
}

pub fn entropy_rate_1d<T: Real>(
    rule: &LocalRule1D,
    n_min: u32,
    n_max: u32,
    steps: Option<u32>,
    method: Method,
    budgets: &Budgets,
) -> Result<Entropy1dSummary<T>, EstimatorError> {
    if n_min > n_max {
        return Err(EstimatorError::BadRange {
            r: rule.r(),
            n_min,
            n_max,
        });
    }
    let steps = steps.unwrap_or_else(|| default_steps(n_max, rule.r()));
    let n_values: Vec<u32> = (n_min..=n_max).collect();
    let slopes = n_values
        .iter()
        .map(|&n| entropy_1d(rule, n, steps, method, budgets))
        .collect::<Result<Vec<PartitionSlope<T>>, _>>()?;
    let last = slopes.last().expect("nonempty range");
    let h_max = slopes
        .iter()
        .fold(T::neg_infinity(), |a, s| a.max(s.difference));
    let bound = T::of_count(2 * u64::from(rule.r())) * ln_q::<T>(rule.q());
    Ok(Entropy1dSummary {
        q: rule.q(),
        r: rule.r(),
        method: method.kind(),
        exact: method.is_exact(),
        invariance_caveat: !invariance_witnessed(&Automaton::from_1d(rule)),
        steps,
        n_values,
        h: last.difference,
        h_units: last.difference_units,
        h_max,
        within_bound: !(h_max > bound && !close(h_max, bound)),
        bound,
        slopes,
    })
}
