//! Exact finite-window evolution and trajectory encoding.
//!
//! Trajectories are computed on shrinking windows, with no boundary
//! conditions: the letters of `F^i(x)` on an observed set `B` for `i < N`
//! are fully determined by `x` on the dilated window, so every count taken
//! here is a count over the full configuration space.

mod key;
mod matrix;
mod plan;

pub use key::{BytesCodec, KeyCodec, PackedCodec, TrajectoryKey};
pub use matrix::{linear_trajectory_matrix, TrajectoryMatrix};
pub use plan::TrajectoryPlan;

use thiserror::Error;

use crate::geometry::{
    erode, minkowski_sum, square_window, Coord, CoordSet, GeometryError, Letter, Pattern,
};
use crate::gf::PrimeField;
use crate::rules::{AffineForm, LocalRule1D, LocalRule2D, RuleError, RuleForm};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("window too small: eroding by radius {r} leaves no cell")]
    WindowTooSmall { r: u32 },
    #[error("insufficient window: the input does not cover the {needed}-cell determining window")]
    InsufficientWindow { needed: usize },
    #[error("the rule has no additive (affine) form over a prime field")]
    NotAffine,
    #[error("matrix budget exceeded: {rows}x{cols} entries, {allowed} allowed")]
    MatrixBudget {
        rows: usize,
        cols: usize,
        allowed: u64,
    },
    #[error("at least one time step is required")]
    NoSteps,
    #[error("pattern alphabet does not match the rule (q = {q})")]
    AlphabetMismatch { q: u32 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    One,
    Two,
}

/// How a compiled automaton computes one output letter from its inputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Kernel {
    /// `constant + Σ c·x_(z+v)` over a prime field.
    Affine {
        constant: u32,
        terms: Vec<(Coord, u32)>,
    },
    /// Table over the letters at `positions` (relative offsets, canonical
    /// order, first position least significant).
    Lookup {
        positions: Vec<Coord>,
        table: Vec<Letter>,
    },
}

impl Kernel {
    pub fn positions(&self) -> Vec<Coord> {
        match self {
            Kernel::Affine { terms, .. } => terms.iter().map(|t| t.0).collect(),
            Kernel::Lookup { positions, .. } => positions.clone(),
        }
    }
}

/// Drops table positions the output never depends on.
fn reduce_lookup(q: u32, positions: Vec<Coord>, table: Vec<Letter>) -> (Vec<Coord>, Vec<Letter>) {
    let len = positions.len();
    let qs = q as usize;
    let mut weights = Vec::with_capacity(len);
    let mut w = 1usize;
    for _ in 0..len {
        weights.push(w);
        w *= qs;
    }
    let read: Vec<bool> = (0..len)
        .map(|k| {
            let wk = weights[k];
            (0..table.len()).any(|idx| {
                let digit = (idx / wk) % qs;
                digit != 0 && table[idx] != table[idx - digit * wk]
            })
        })
        .collect();
    if read.iter().all(|&b| b) {
        return (positions, table);
    }
    let kept: Vec<usize> = (0..len).filter(|&k| read[k]).collect();
    let size = qs.pow(kept.len() as u32);
    let reduced = (0..size)
        .map(|small| {
            let mut rest = small;
            let mut idx = 0;
            for &k in &kept {
                idx += (rest % qs) * weights[k];
                rest /= qs;
            }
            table[idx]
        })
        .collect();
    (kept.into_iter().map(|k| positions[k]).collect(), reduced)
}

/// A local rule compiled for evolution: the letters it actually reads and
/// how it combines them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Automaton {
    q: u32,
    r: u32,
    dimension: Dimension,
    kernel: Kernel,
    support: CoordSet,
}

impl Automaton {
    pub fn from_2d(rule: &LocalRule2D) -> Self {
        let kernel = match rule.affine_form() {
            Some(AffineForm { constant, terms }) => Kernel::Affine { constant, terms },
            None => {
                let (positions, table) = match rule.form() {
                    RuleForm::Extension(inner) => (column(rule.r()), inner.entries().to_vec()),
                    RuleForm::Table(t) => (square_window(rule.r()).as_slice().to_vec(), t.clone()),
                    RuleForm::Additive(_) => unreachable!("additive rules are affine"),
                };
                let (positions, table) = reduce_lookup(rule.q(), positions, table);
                Kernel::Lookup { positions, table }
            }
        };
        Self::assemble(rule.q(), rule.r(), Dimension::Two, kernel)
    }

    /// One-dimensional rules act along the second axis: cell `k` of a word
    /// is the coordinate `(0, k)`.
    pub fn from_1d(rule: &LocalRule1D) -> Self {
        let kernel = match rule.affine_form() {
            Some((constant, terms)) => Kernel::Affine {
                constant,
                terms: terms
                    .into_iter()
                    .map(|(k, c)| (Coord::new(0, k), c))
                    .collect(),
            },
            None => {
                let (positions, table) =
                    reduce_lookup(rule.q(), column(rule.r()), rule.entries().to_vec());
                Kernel::Lookup { positions, table }
            }
        };
        Self::assemble(rule.q(), rule.r(), Dimension::One, kernel)
    }

    fn assemble(q: u32, r: u32, dimension: Dimension, kernel: Kernel) -> Self {
        let support = kernel.positions().into_iter().collect();
        Automaton {
            q,
            r,
            dimension,
            kernel,
            support,
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn radius(&self) -> u32 {
        self.r
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// Offsets the local rule actually reads.
    pub fn support(&self) -> &CoordSet {
        &self.support
    }

    pub fn affine(&self) -> Option<AffineForm> {
        match &self.kernel {
            Kernel::Affine { constant, terms } => Some(AffineForm {
                constant: *constant,
                terms: terms.clone(),
            }),
            Kernel::Lookup { .. } => None,
        }
    }

    pub fn field(&self) -> Option<PrimeField> {
        PrimeField::new(self.q)
    }

    /// The neighbourhood `E_r` (or the interval `[-r, r]` in one dimension).
    pub fn neighborhood(&self) -> CoordSet {
        self.reach(1)
    }

    /// `E_{r·steps}`, or the matching interval in one dimension.
    pub fn reach(&self, steps: u32) -> CoordSet {
        let m = self.r * steps;
        match self.dimension {
            Dimension::Two => square_window(m),
            Dimension::One => column(m).into_iter().collect(),
        }
    }

    /// The determining window `B ⊕ E_{r(N-1)}` (intervals in one dimension).
    pub fn full_window(&self, observed: &CoordSet, steps: u32) -> CoordSet {
        if steps <= 1 {
            return observed.clone();
        }
        minkowski_sum(observed, &self.reach(steps - 1))
    }

    /// `K = support ∪ {0}`; layer `t` of an `N`-step plan lives on
    /// `B ⊕ K^(N-1-t)`, which is what the observations actually depend on.
    pub(crate) fn step_kernel(&self) -> CoordSet {
        self.support.iter().chain([Coord::ORIGIN]).collect()
    }

    /// Smallest window whose letters determine the trajectory on `observed`.
    pub fn effective_window(&self, observed: &CoordSet, steps: u32) -> CoordSet {
        let k = self.step_kernel();
        let mut w = observed.clone();
        for _ in 1..steps {
            w = minkowski_sum(&w, &k);
        }
        w
    }

    /// Evaluates the kernel with `get(v)` giving the letter at offset `v`.
    pub fn apply(&self, get: impl Fn(Coord) -> Letter) -> Letter {
        match &self.kernel {
            Kernel::Affine { constant, terms } => {
                let f = PrimeField::new(self.q).expect("affine kernels are over a field");
                terms.iter().fold(*constant, |acc, &(v, c)| {
                    f.add(acc, f.mul(c, get(v).into()))
                }) as Letter
            }
            Kernel::Lookup { positions, table } => {
                let idx = positions
                    .iter()
                    .rev()
                    .fold(0usize, |acc, &v| acc * self.q as usize + get(v) as usize);
                table[idx]
            }
        }
    }

    /// Full table over the neighbourhood in canonical order.
    pub fn to_table(&self) -> Result<Vec<Letter>, RuleError> {
        let nb = self.neighborhood();
        let size = crate::geometry::checked_pow(self.q, nb.len())
            .filter(|&n| n <= crate::rules::TABLE_BUDGET)
            .ok_or_else(|| RuleError::BudgetExceeded {
                required: format!("{}^{}", self.q, nb.len()),
                allowed: crate::rules::TABLE_BUDGET,
            })?;
        let mut table = Vec::with_capacity(size as usize);
        crate::rules::for_each_word(self.q, nb.len(), |_, w| {
            table.push(self.apply(|v| w[nb.position(v).expect("kernel reads inside E_r")]))
        });
        Ok(table)
    }

    /// Trajectory key of `x0` observed on `observed` for `steps` steps.
    pub fn trajectory(
        &self,
        x0: &Pattern,
        observed: &CoordSet,
        steps: u32,
    ) -> Result<TrajectoryKey, EngineError> {
        if steps == 0 {
            return Err(EngineError::NoSteps);
        }
        let needed = self.full_window(observed, steps);
        if !needed.is_subset(x0.domain()) {
            return Err(EngineError::InsufficientWindow {
                needed: needed.len(),
            });
        }
        if x0.letters().iter().any(|&l| u32::from(l) >= self.q) {
            return Err(EngineError::AlphabetMismatch { q: self.q });
        }
        let plan = TrajectoryPlan::new(self, observed, steps);
        let input: Vec<Letter> = plan
            .window()
            .iter()
            .map(|c| {
                x0.get(c)
                    .expect("effective window lies inside the full window")
            })
            .collect();
        let codec = BytesCodec::new(self.q, observed.len());
        let mut layers = plan.scratch();
        plan.evolve(&input, &mut layers);
        Ok(TrajectoryKey::new(
            observed.clone(),
            steps,
            self.q,
            codec.width(),
            codec.encode(&plan, &layers),
        ))
    }
}

/// `(0,-m) … (0,m)` in canonical order.
fn column(m: u32) -> Vec<Coord> {
    (-(m as i32)..=m as i32).map(|j| Coord::new(0, j)).collect()
}

/// One application of `rule` to a pattern on `W`, giving the pattern on
/// `erode(W, r)`.
pub fn step_window(rule: &LocalRule2D, p: &Pattern) -> Result<Pattern, EngineError> {
    let r = rule.r();
    let out = erode(p.domain(), r);
    if out.is_empty() {
        return Err(EngineError::WindowTooSmall { r });
    }
    if p.letters().iter().any(|&l| u32::from(l) >= rule.q()) {
        return Err(EngineError::AlphabetMismatch { q: rule.q() });
    }
    let nb = rule.neighborhood();
    let mut buf = vec![0 as Letter; nb.len()];
    Ok(Pattern::from_fn(out, |v| {
        for (slot, d) in buf.iter_mut().zip(nb.iter()) {
            *slot = p
                .get(v.offset(d))
                .expect("eroded cells see their whole neighbourhood");
        }
        rule.eval_letters(&buf)
    }))
}

/// Trajectory key of a two-dimensional rule; compiles the rule first.
pub fn trajectory(
    rule: &LocalRule2D,
    x0: &Pattern,
    observed: &CoordSet,
    steps: u32,
) -> Result<TrajectoryKey, EngineError> {
    Automaton::from_2d(rule).trajectory(x0, observed, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{band_window, dilate, square_window};
    use crate::rules::{builtin, neighborhood_position};
    use rand::{Rng, SeedableRng};

    fn and_rule() -> LocalRule2D {
        LocalRule2D::from_fn(2, 1, |w| {
            w[neighborhood_position(Coord::new(1, 0), 1)]
                & w[neighborhood_position(Coord::new(0, 1), 1)]
        })
        .unwrap()
    }

    fn random_pattern(domain: CoordSet, q: u32, rng: &mut impl Rng) -> Pattern {
        Pattern::from_fn(domain, |_| rng.random_range(0..q) as Letter)
    }

    #[test]
    fn step_window_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let id = LocalRule2D::identity(2, 1).unwrap();
        let p = random_pattern(square_window(2), 2, &mut rng);
        assert_eq!(
            step_window(&id, &p).unwrap(),
            p.restrict(&square_window(1)).unwrap()
        );

        let f1 = builtin("F1", 1).unwrap();
        let p = Pattern::from_fn(square_window(1), |c| (c == Coord::new(1, 0)) as Letter);
        let out = step_window(&f1, &p).unwrap();
        assert_eq!(out.domain(), &square_window(0));
        assert_eq!(out.letters(), &[1]);

        let plus = builtin("PLUS", 1).unwrap();
        let ones = Pattern::from_fn(square_window(1), |_| 1);
        assert_eq!(step_window(&plus, &ones).unwrap().letters(), &[0]);

        assert_eq!(
            step_window(&plus, &Pattern::zeros(square_window(0))),
            Err(EngineError::WindowTooSmall { r: 1 })
        );
    }

    #[test]
    fn compiled_kernels() {
        let a = Automaton::from_2d(&and_rule());
        let Kernel::Lookup { positions, table } = a.kernel() else {
            panic!("AND is not affine")
        };
        assert_eq!(positions, &vec![Coord::new(0, 1), Coord::new(1, 0)]);
        assert_eq!(table, &vec![0, 0, 0, 1]);

        let id = Automaton::from_2d(&LocalRule2D::identity(2, 1).unwrap());
        assert_eq!(id.affine().unwrap().terms, vec![(Coord::ORIGIN, 1)]);

        for rule in [and_rule(), builtin("PLUS", 1).unwrap()] {
            assert_eq!(
                Automaton::from_2d(&rule).to_table().unwrap(),
                rule.to_table().unwrap()
            );
        }
    }

    #[test]
    fn trajectory_single_step_is_the_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let e1 = square_window(1);
        let x0 = random_pattern(e1.clone(), 2, &mut rng);
        let key = trajectory(&builtin("PLUS", 1).unwrap(), &x0, &e1, 1).unwrap();
        let idx = crate::geometry::pattern_index(&x0, 2).unwrap();
        assert_eq!(key.payload(), &idx.to_le_bytes()[..2]);
    }

    #[test]
    fn identity_blocks_repeat() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b = band_window(2, 1).unwrap();
        let id = LocalRule2D::identity(2, 1).unwrap();
        let x0 = random_pattern(dilate(&b, 1, 4), 2, &mut rng);
        let key = trajectory(&id, &x0, &b, 4).unwrap();
        for t in 1..4 {
            assert_eq!(key.block(t), key.block(0));
        }
    }

    #[test]
    fn translation_moves_the_block() {
        // hand-evaluated: F1 reads x_(z+(1,0)), so block 1 is x on E_1 + (1,0)
        let e1 = square_window(1);
        let w = dilate(&e1, 1, 2);
        let x0 = Pattern::from_fn(w, |c| ((c.i * 3 + c.j * 5).rem_euclid(7) % 2) as Letter);
        let key = trajectory(&builtin("F1", 1).unwrap(), &x0, &e1, 2).unwrap();
        let shifted = x0.shift(Coord::new(1, 0)).restrict(&e1).unwrap();
        let expect = crate::geometry::pattern_index(&shifted, 2).unwrap();
        assert_eq!(key.block(1), &expect.to_le_bytes()[..2]);
        let first = crate::geometry::pattern_index(&x0.restrict(&e1).unwrap(), 2).unwrap();
        assert_eq!(key.block(0), &first.to_le_bytes()[..2]);
    }

    #[test]
    fn trajectory_needs_the_window() {
        let e1 = square_window(1);
        let x0 = Pattern::zeros(square_window(1));
        assert!(matches!(
            trajectory(&builtin("F1", 1).unwrap(), &x0, &e1, 2),
            Err(EngineError::InsufficientWindow { needed: 25 })
        ));
    }

    #[test]
    fn trajectory_depends_only_on_the_determining_window() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let b = band_window(1, 1).unwrap();
        for rule in [
            and_rule(),
            builtin("PLUS", 1).unwrap(),
            builtin("F12", 1).unwrap(),
        ] {
            let needed = dilate(&b, 1, 3);
            let big = square_window(5);
            for _ in 0..50 {
                let x0 = random_pattern(big.clone(), 2, &mut rng);
                let key = trajectory(&rule, &x0, &b, 3).unwrap();
                let perturbed = Pattern::from_fn(big.clone(), |c| {
                    let l = x0.get(c).unwrap();
                    if needed.contains(c) {
                        l
                    } else {
                        rng.random_range(0..2)
                    }
                });
                assert_eq!(trajectory(&rule, &perturbed, &b, 3).unwrap(), key);
            }
        }
    }

    #[test]
    fn trajectory_prefix_nesting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let b = square_window(1);
        let rule = and_rule();
        for _ in 0..20 {
            let x0 = random_pattern(dilate(&b, 1, 4), 2, &mut rng);
            let long = trajectory(&rule, &x0, &b, 4).unwrap();
            let short = trajectory(&rule, &x0, &b, 3).unwrap();
            assert_eq!(long.prefix(3), short);
        }
    }

    #[test]
    fn trajectory_shift_equivariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let b = band_window(1, 1).unwrap();
        let v = Coord::new(2, -3);
        for rule in [and_rule(), builtin("F34", 1).unwrap()] {
            for _ in 0..20 {
                let x0 = random_pattern(square_window(6), 2, &mut rng);
                // σ^v(x0) observed on B - v equals x0 observed on B
                let moved = x0.shift(v);
                let b_moved = b.translate(-v);
                let k1 = trajectory(&rule, &x0, &b, 3).unwrap();
                let k2 = trajectory(&rule, &moved, &b_moved, 3).unwrap();
                assert_eq!(k1.payload(), k2.payload());
            }
        }
    }

    #[test]
    fn one_dimensional_windows_are_intervals() {
        let xor = LocalRule1D::additive(2, 1, &[(-1, 1), (1, 1)]).unwrap();
        let a = Automaton::from_1d(&xor);
        let b: CoordSet = (-2..=2).map(|j| Coord::new(0, j)).collect();
        let w = a.full_window(&b, 3);
        assert_eq!(w, (-4..=4).map(|j| Coord::new(0, j)).collect());
        assert_eq!(a.effective_window(&b, 3), w);
    }
}
