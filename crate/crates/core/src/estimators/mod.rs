//! Joint entropies `H(N)` of the partitions by the pattern on an observed
//! set `B`, joined over `N` time steps, and the per-partition slopes and
//! entropy-rate fits derived from them.
//!
//! Three engines compute `H(N)`:
//!
//! * enumeration of every pattern on the window that determines the
//!   trajectory (exact, topological and uniform-measure entropy);
//! * the GF(q) rank of the trajectory matrix for affine rules, where the
//!   join has `q^rank` equiprobable cells (exact);
//! * Monte Carlo sampling with a Miller–Madow correction and a jackknife
//!   standard error over ten blocks.
//!
//! Measure entropies are taken under the uniform Bernoulli measure at time
//! zero. When no permutative position certifies that this measure is
//! invariant, curves carry `invariance_caveat = true` and the measure values
//! are plug-in statistics rather than measure-theoretic entropies.

mod count;
mod rate;

pub use rate::{
    default_steps, entropy_1d, entropy_rate, entropy_rate_1d, entropy_rate_automaton,
    partition_slope, Entropy1dSummary, Fraction, PartitionSlope, RateDiagnostics, RateEstimate,
    RateSeries,
};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    linear_trajectory_matrix, Automaton, BytesCodec, Dimension, EngineError, KeyCodec, PackedCodec,
    TrajectoryPlan,
};
use crate::geometry::{
    band_window, checked_pow, square_window, Coord, CoordSet, GeometryError, Pattern,
};
use crate::permutativity::automaton_permutative;
use crate::rules::{LocalRule1D, LocalRule2D};
use crate::scalar::Real;

use count::{Counts, Histogram, JACKKNIFE_BLOCKS};

pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 25;
pub const DEFAULT_MATRIX_BUDGET: u64 = 1_000_000;
pub const MIN_SAMPLES: u64 = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("enumeration budget exceeded: {required} window patterns, {allowed} allowed")]
    EnumerationBudget { required: String, allowed: u64 },
    #[error("Monte Carlo needs at least {MIN_SAMPLES} samples, got {0}")]
    TooFewSamples(u64),
    #[error("at least {0} time steps are required")]
    TooFewSteps(u32),
    #[error("partition {partition} does not apply to a {dimension}-dimensional rule")]
    DimensionMismatch { partition: String, dimension: u8 },
    #[error("invalid ring range: need r <= n_min <= n_max, got r = {r}, n = {n_min}..{n_max}")]
    BadRange { r: u32, n_min: u32, n_max: u32 },
    #[error("fitted rate {fitted} exceeds the finiteness bound {bound}")]
    BoundViolation { fitted: f64, bound: f64 },
    #[error("no samples given")]
    NoSamples,
    #[error("samples must share one domain")]
    SampleDomainMismatch,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// The observed set `B` defining a partition: the square `E_n`, the band
/// `E_n \ E_{n-r}`, or the interval `[-n, n]` for one-dimensional rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "n", rename_all = "lowercase")]
pub enum Partition {
    Square(u32),
    Band(u32),
    Interval(u32),
}

impl Partition {
    pub fn n(self) -> u32 {
        match self {
            Partition::Square(n) | Partition::Band(n) | Partition::Interval(n) => n,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            Partition::Square(_) => "square",
            Partition::Band(_) => "band",
            Partition::Interval(_) => "interval",
        }
    }

    pub fn observed(self, automaton: &Automaton) -> Result<CoordSet, EstimatorError> {
        let mismatch = || EstimatorError::DimensionMismatch {
            partition: self.to_string(),
            dimension: match automaton.dimension() {
                Dimension::One => 1,
                Dimension::Two => 2,
            },
        };
        match (self, automaton.dimension()) {
            (Partition::Square(n), Dimension::Two) => Ok(square_window(n)),
            (Partition::Band(n), Dimension::Two) => Ok(band_window(n, automaton.radius())?),
            (Partition::Interval(n), Dimension::One) => {
                let n = n as i32;
                Ok((-n..=n).map(|j| Coord::new(0, j)).collect())
            }
            _ => Err(mismatch()),
        }
    }
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} n={}", self.kind(), self.n())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Enumeration,
    Rank,
    MonteCarlo { samples: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Enumeration,
    Rank,
    MonteCarlo,
}

impl Method {
    pub fn kind(self) -> MethodKind {
        match self {
            Method::Enumeration => MethodKind::Enumeration,
            Method::Rank => MethodKind::Rank,
            Method::MonteCarlo { .. } => MethodKind::MonteCarlo,
        }
    }

    pub fn is_exact(self) -> bool {
        !matches!(self, Method::MonteCarlo { .. })
    }

    /// Rank for affine rules, enumeration otherwise.
    pub fn exact_for(automaton: &Automaton) -> Method {
        if automaton.affine().is_some() {
            Method::Rank
        } else {
            Method::Enumeration
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Budgets {
    /// Largest number of window patterns the enumeration engine visits.
    pub enumeration: u64,
    /// Largest `rows · cols` of a trajectory matrix.
    pub matrix_entries: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            enumeration: DEFAULT_ENUMERATION_BUDGET,
            matrix_entries: DEFAULT_MATRIX_BUDGET,
        }
    }
}

/// `H(N)` for one `N`. Exact engines fill `h_top`; `*_units` give the
/// entropy as an integer multiple of `ln q` when it is one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyPoint<T> {
    pub steps: u32,
    /// Nonempty cells of the joined partition (distinct sampled keys for
    /// Monte Carlo).
    pub cells: Option<u64>,
    pub rank: Option<u64>,
    pub top_units: Option<u64>,
    pub meas_units: Option<u64>,
    pub h_top: Option<T>,
    pub h_meas: T,
    pub h_meas_plugin: Option<T>,
    pub stderr: Option<T>,
    pub h_top_lower_bound: Option<T>,
}

impl<T: Real> EntropyPoint<T> {
    fn exact_units(steps: u32, units: u64, cells: Option<u64>, rank: Option<u64>, ln_q: T) -> Self {
        let h = T::of_count(units) * ln_q;
        EntropyPoint {
            steps,
            cells,
            rank,
            top_units: Some(units),
            meas_units: Some(units),
            h_top: Some(h),
            h_meas: h,
            h_meas_plugin: None,
            stderr: None,
            h_top_lower_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyCurve<T> {
    pub dimension: Dimension,
    pub partition: Partition,
    pub q: u32,
    pub r: u32,
    pub method: MethodKind,
    pub exact: bool,
    /// Cells of the window the engine enumerates or samples.
    pub window_cells: usize,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
    pub invariance_caveat: bool,
    pub points: Vec<EntropyPoint<T>>,
}

impl<T: Real> EntropyCurve<T> {
    pub fn n_values(&self) -> Vec<u32> {
        self.points.iter().map(|p| p.steps).collect()
    }

    pub fn h_top(&self) -> Vec<Option<T>> {
        self.points.iter().map(|p| p.h_top).collect()
    }

    pub fn h_meas(&self) -> Vec<T> {
        self.points.iter().map(|p| p.h_meas).collect()
    }

    pub fn stderr(&self) -> Vec<Option<T>> {
        self.points.iter().map(|p| p.stderr).collect()
    }

    pub fn point(&self, steps: u32) -> Option<&EntropyPoint<T>> {
        self.points.iter().find(|p| p.steps == steps)
    }

    pub fn last(&self) -> &EntropyPoint<T> {
        self.points.last().expect("curves have at least one point")
    }
}

fn ln_q<T: Real>(q: u32) -> T {
    T::of_count(q.into()).ln()
}

/// `k` with `count = q^k`, if any.
fn log_exact(count: u64, q: u32) -> Option<u64> {
    let mut k = 0;
    let mut p = 1u64;
    while p < count {
        p = p.checked_mul(q.into())?;
        k += 1;
    }
    (p == count).then_some(k)
}

/// Whether the uniform measure is certified invariant for `automaton`.
pub fn invariance_witnessed(automaton: &Automaton) -> bool {
    !automaton_permutative(automaton).is_empty()
}

/// `H(N)` for `N = 1..=steps`.
pub fn entropy_curve<T: Real>(
    automaton: &Automaton,
    partition: Partition,
    steps: u32,
    method: Method,
    budgets: &Budgets,
) -> Result<EntropyCurve<T>, EstimatorError> {
    if steps == 0 {
        return Err(EstimatorError::TooFewSteps(1));
    }
    let observed = partition.observed(automaton)?;
    let mut curve = EntropyCurve {
        dimension: automaton.dimension(),
        partition,
        q: automaton.q(),
        r: automaton.radius(),
        method: method.kind(),
        exact: method.is_exact(),
        window_cells: 0,
        samples: None,
        seed: None,
        invariance_caveat: !invariance_witnessed(automaton),
        points: Vec::new(),
    };
    match method {
        Method::Rank => rank_points(automaton, &observed, steps, budgets, &mut curve)?,
        Method::Enumeration => {
            let plan = TrajectoryPlan::new(automaton, &observed, steps);
            curve.window_cells = plan.window().len();
            let total = checked_pow(automaton.q(), plan.window().len())
                .filter(|&t| t <= budgets.enumeration)
                .ok_or_else(|| EstimatorError::EnumerationBudget {
                    required: format!("{}^{}", automaton.q(), plan.window().len()),
                    allowed: budgets.enumeration,
                })?;
            let space = checked_pow(automaton.q(), plan.observed_len() * steps as usize)
                .filter(|&s| s <= count::DENSE_KEYS && total <= u64::from(u32::MAX));
            let hists = match (packed_codec(&plan), space) {
                (Some(c), Some(space)) => dense_histograms(&plan, &c, total, space),
                (Some(c), None) => sparse_histograms(&plan, &c, total),
                (None, _) => sparse_histograms(&plan, &bytes_codec(&plan), total),
            };
            curve.points = enumeration_points(automaton.q(), hists);
        }
        Method::MonteCarlo { samples, seed } => {
            if samples < MIN_SAMPLES {
                return Err(EstimatorError::TooFewSamples(samples));
            }
            let plan = TrajectoryPlan::new(automaton, &observed, steps);
            curve.window_cells = plan.window().len();
            curve.samples = Some(samples);
            curve.seed = Some(seed);
            curve.points = match packed_codec(&plan) {
                Some(c) => monte_carlo_points(&plan, &c, samples, seed),
                None => monte_carlo_points(&plan, &bytes_codec(&plan), samples, seed),
            };
        }
    }
    Ok(curve)
}

/// Whole trajectories packed in a `u128` when they fit.
fn packed_codec(plan: &TrajectoryPlan) -> Option<PackedCodec> {
    PackedCodec::new(plan.q(), plan.observed_len(), plan.steps())
}

fn bytes_codec(plan: &TrajectoryPlan) -> BytesCodec {
    BytesCodec::new(plan.q(), plan.observed_len())
}

fn rank_points<T: Real>(
    automaton: &Automaton,
    observed: &CoordSet,
    steps: u32,
    budgets: &Budgets,
    curve: &mut EntropyCurve<T>,
) -> Result<(), EstimatorError> {
    let m = linear_trajectory_matrix(automaton, observed, steps, budgets.matrix_entries)?;
    curve.window_cells = m.col_count();
    let lq = ln_q::<T>(automaton.q());
    curve.points = m
        .prefix_ranks()
        .into_iter()
        .enumerate()
        .map(|(t, rank)| {
            let rank = rank as u64;
            let cells = u32::try_from(rank)
                .ok()
                .and_then(|k| u64::from(automaton.q()).checked_pow(k));
            EntropyPoint::exact_units(t as u32 + 1, rank, cells, Some(rank), lq)
        })
        .collect();
    Ok(())
}

/// Histograms of the joins for `N = 1..=steps`.
fn sparse_histograms<C: KeyCodec>(plan: &TrajectoryPlan, codec: &C, total: u64) -> Vec<Histogram> {
    let mut counts = count::enumerate(plan, codec, total);
    let mut hists = Vec::with_capacity(plan.steps());
    for t in (1..=plan.steps()).rev() {
        if t < plan.steps() {
            counts = count::prefix_counts(codec, &counts, t);
        }
        hists.push(Histogram::from_counts(counts.values().copied()));
    }
    hists.reverse();
    hists
}

fn dense_histograms(
    plan: &TrajectoryPlan,
    codec: &PackedCodec,
    total: u64,
    space: u64,
) -> Vec<Histogram> {
    let mut counts = count::enumerate_dense(plan, codec, total, space);
    let block =
        checked_pow(plan.q(), plan.observed_len()).expect("within the dense key space") as usize;
    let mut hists = Vec::with_capacity(plan.steps());
    for t in (1..=plan.steps()).rev() {
        if t < plan.steps() {
            counts = count::dense_prefix(&counts, block.pow(t as u32));
        }
        hists.push(Histogram::from_counts(counts.iter().map(|&c| u64::from(c))));
    }
    hists.reverse();
    hists
}

fn enumeration_points<T: Real>(q: u32, hists: Vec<Histogram>) -> Vec<EntropyPoint<T>> {
    let lq = ln_q::<T>(q);
    hists
        .into_iter()
        .enumerate()
        .map(|(i, hist)| {
            let top_units = log_exact(hist.cells, q);
            let h_top = match top_units {
                Some(k) => T::of_count(k) * lq,
                None => T::of_count(hist.cells).ln(),
            };
            let (meas_units, h_meas) = match hist.uniform() {
                Some(_) => (top_units, h_top),
                None => (None, hist.plugin()),
            };
            EntropyPoint {
                steps: i as u32 + 1,
                cells: Some(hist.cells),
                rank: None,
                top_units,
                meas_units,
                h_top: Some(h_top),
                h_meas,
                h_meas_plugin: None,
                stderr: None,
                h_top_lower_bound: None,
            }
        })
        .collect()
}

/// Miller–Madow corrected plug-in entropy.
fn miller_madow<T: Real>(hist: &Histogram) -> T {
    let correction =
        T::of_count(hist.cells.saturating_sub(1)) / (T::of_count(2) * T::of_count(hist.total));
    hist.plugin::<T>() + correction
}

fn monte_carlo_points<T: Real, C: KeyCodec>(
    plan: &TrajectoryPlan,
    codec: &C,
    samples: u64,
    seed: u64,
) -> Vec<EntropyPoint<T>> {
    let mut blocks = count::sample(plan, codec, samples, seed);
    let mut points = Vec::with_capacity(plan.steps());
    for t in (1..=plan.steps()).rev() {
        if t < plan.steps() {
            blocks = blocks
                .iter()
                .map(|b| count::prefix_counts(codec, b, t))
                .collect();
        }
        let mut total: Counts<C::Key> = Counts::new();
        for block in &blocks {
            for (k, &v) in block {
                *total.entry(k.clone()).or_insert(0) += v;
            }
        }
        let hist = Histogram::from_counts(total.values().copied());
        let estimate = miller_madow::<T>(&hist);

        // leave-one-block-out jackknife
        let leave_out: Vec<T> = blocks
            .iter()
            .map(|block| {
                let reduced: Vec<u64> = total
                    .iter()
                    .map(|(k, &v)| v - block.get(k).copied().unwrap_or(0))
                    .collect();
                miller_madow::<T>(&Histogram::from_counts(reduced.iter().copied()))
            })
            .collect();
        let g = T::of_count(JACKKNIFE_BLOCKS as u64);
        let mean = leave_out.iter().fold(T::zero(), |a, &x| a + x) / g;
        let ss = leave_out
            .iter()
            .fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
        let stderr = ((g - T::one()) / g * ss).sqrt();

        points.push(EntropyPoint {
            steps: t as u32,
            cells: Some(hist.cells),
            rank: None,
            top_units: None,
            meas_units: None,
            h_top: None,
            h_meas: estimate,
            h_meas_plugin: Some(hist.plugin()),
            stderr: Some(stderr),
            h_top_lower_bound: Some(T::of_count(hist.cells).ln()),
        });
    }
    points.reverse();
    points
}

fn automaton_2d(rule: &LocalRule2D) -> Automaton {
    Automaton::from_2d(rule)
}

/// Exact `H(N)` by enumerating every pattern on the determining window.
pub fn joint_entropy_exact<T: Real>(
    rule: &LocalRule2D,
    partition: Partition,
    steps: u32,
    budget: u64,
) -> Result<EntropyCurve<T>, EstimatorError> {
    let budgets = Budgets {
        enumeration: budget,
        ..Budgets::default()
    };
    entropy_curve(
        &automaton_2d(rule),
        partition,
        steps,
        Method::Enumeration,
        &budgets,
    )
}

/// Exact `H(N) = rank · ln q` for affine rules.
pub fn joint_entropy_rank<T: Real>(
    rule: &LocalRule2D,
    partition: Partition,
    steps: u32,
) -> Result<EntropyCurve<T>, EstimatorError> {
    entropy_curve(
        &automaton_2d(rule),
        partition,
        steps,
        Method::Rank,
        &Budgets::default(),
    )
}

pub fn joint_entropy_mc<T: Real>(
    rule: &LocalRule2D,
    partition: Partition,
    steps: u32,
    samples: u64,
    seed: u64,
) -> Result<EntropyCurve<T>, EstimatorError> {
    entropy_curve(
        &automaton_2d(rule),
        partition,
        steps,
        Method::MonteCarlo { samples, seed },
        &Budgets::default(),
    )
}

/// One-dimensional counterpart of [`entropy_curve`] on intervals.
pub fn entropy_curve_1d<T: Real>(
    rule: &LocalRule1D,
    n: u32,
    steps: u32,
    method: Method,
    budgets: &Budgets,
) -> Result<EntropyCurve<T>, EstimatorError> {
    entropy_curve(
        &Automaton::from_1d(rule),
        Partition::Interval(n),
        steps,
        method,
        budgets,
    )
}

/// Entropy of the uniform measure under the shift, per site: `ln q`.
pub fn shift_entropy_uniform<T: Real>(q: u32) -> T {
    ln_q(q)
}

/// Plug-in entropy of sampled patterns on a common domain, per site.
pub fn shift_entropy_empirical<T: Real>(samples: &[Pattern]) -> Result<T, EstimatorError> {
    let first = samples.first().ok_or(EstimatorError::NoSamples)?;
    if samples.iter().any(|p| p.domain() != first.domain()) {
        return Err(EstimatorError::SampleDomainMismatch);
    }
    let mut counts: std::collections::HashMap<&[u8], u64> = std::collections::HashMap::new();
    for p in samples {
        *counts.entry(p.letters()).or_insert(0) += 1;
    }
    let h: T = Histogram::from_counts(counts.values().copied()).plugin();
    Ok(h / T::of_count(first.domain().len().max(1) as u64))
}
