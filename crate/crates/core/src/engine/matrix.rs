use std::collections::BTreeMap;

use crate::geometry::{Coord, CoordSet, Letter};
use crate::gf::{BinaryBasis, PrimeBasis, PrimeField};

use super::{Automaton, EngineError};

#[derive(Debug, Clone, PartialEq, Eq)]
enum RowStorage {
    /// GF(2): one bit per column.
    Packed {
        words: usize,
        rows: Vec<Vec<u64>>,
    },
    Bytes(Vec<Vec<u8>>),
}

/// The GF(q)-linear map from `x` on the window `W = B ⊕ E_{r(N-1)}` to the
/// trajectory `(F^i(x)|_B)_{i<N}`. Row `i·|B| + k` holds the coefficients
/// of `F^i(x)` at the `k`-th cell of `B`; columns follow the canonical
/// order of `W`. Affine rules add the constant vector `offsets`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryMatrix {
    field: PrimeField,
    observed: CoordSet,
    steps: u32,
    window: CoordSet,
    rows: RowStorage,
    offsets: Vec<Letter>,
}

impl TrajectoryMatrix {
    pub fn q(&self) -> u32 {
        self.field.order()
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn observed(&self) -> &CoordSet {
        &self.observed
    }

    pub fn window(&self) -> &CoordSet {
        &self.window
    }

    pub fn row_count(&self) -> usize {
        self.observed.len() * self.steps as usize
    }

    pub fn col_count(&self) -> usize {
        self.window.len()
    }

    pub fn offsets(&self) -> &[Letter] {
        &self.offsets
    }

    pub fn entry(&self, row: usize, col: usize) -> u32 {
        match &self.rows {
            RowStorage::Packed { rows, .. } => ((rows[row][col / 64] >> (col % 64)) & 1) as u32,
            RowStorage::Bytes(rows) => rows[row][col].into(),
        }
    }

    /// Coefficient of `x_w` in row `row`.
    pub fn coefficient(&self, row: usize, w: Coord) -> u32 {
        self.window.position(w).map_or(0, |c| self.entry(row, c))
    }

    /// `M·x + offsets` for `x` given on the window.
    pub fn apply(&self, x: &[Letter]) -> Vec<Letter> {
        debug_assert_eq!(x.len(), self.col_count());
        let f = self.field;
        (0..self.row_count())
            .map(|row| {
                (0..self.col_count()).fold(u32::from(self.offsets[row]), |acc, col| {
                    f.add(acc, f.mul(self.entry(row, col), x[col].into()))
                }) as Letter
            })
            .collect()
    }

    /// Rank of the first `t` step blocks, for `t = 1..=steps`.
    pub fn prefix_ranks(&self) -> Vec<usize> {
        let block = self.observed.len();
        let mut out = Vec::with_capacity(self.steps as usize);
        match &self.rows {
            RowStorage::Packed { rows, .. } => {
                let mut basis = BinaryBasis::new(self.col_count());
                let mut rank = 0;
                for (k, row) in rows.iter().enumerate() {
                    rank += usize::from(basis.insert(row.clone()));
                    if (k + 1) % block == 0 {
                        out.push(rank);
                    }
                }
            }
            RowStorage::Bytes(rows) => {
                let mut basis = PrimeBasis::new(self.field, self.col_count());
                let mut rank = 0;
                for (k, row) in rows.iter().enumerate() {
                    rank += usize::from(basis.insert(row.clone()));
                    if (k + 1) % block == 0 {
                        out.push(rank);
                    }
                }
            }
        }
        if block == 0 {
            out = vec![0; self.steps as usize];
        }
        out
    }

    pub fn rank(&self) -> usize {
        self.prefix_ranks().last().copied().unwrap_or(0)
    }
}

/// Builds the trajectory matrix of an affine automaton by `N-1` symbolic
/// applications of the rule to coefficient vectors.
pub fn linear_trajectory_matrix(
    automaton: &Automaton,
    observed: &CoordSet,
    steps: u32,
    entry_budget: u64,
) -> Result<TrajectoryMatrix, EngineError> {
    if steps == 0 {
        return Err(EngineError::NoSteps);
    }
    let affine = automaton.affine().ok_or(EngineError::NotAffine)?;
    let field = automaton.field().ok_or(EngineError::NotAffine)?;
    let window = automaton.full_window(observed, steps);
    let rows_n = observed.len() * steps as usize;
    let cols = window.len();
    if (rows_n as u128) * (cols as u128) > u128::from(entry_budget) {
        return Err(EngineError::MatrixBudget {
            rows: rows_n,
            cols,
            allowed: entry_budget,
        });
    }

    let mut dense = vec![vec![0u8; cols]; rows_n];
    let mut offsets = vec![0 as Letter; rows_n];
    let block = observed.len();
    for (k, b) in observed.iter().enumerate() {
        let mut form: BTreeMap<Coord, u32> = BTreeMap::from([(b, 1)]);
        let mut constant = 0u32;
        for t in 0..steps as usize {
            let row = t * block + k;
            for (&w, &c) in &form {
                dense[row][window.position(w).expect("forms stay inside W")] = c as u8;
            }
            offsets[row] = constant as Letter;
            if t + 1 == steps as usize {
                break;
            }
            // F^{t+1}(x)_b = Σ_u a_u (const + Σ_v c_v x_{u+v}) + k_t
            let total = form.values().fold(0, |acc, &a| field.add(acc, a));
            constant = field.add(constant, field.mul(affine.constant, total));
            let mut next = BTreeMap::new();
            for (&u, &a) in &form {
                for &(v, c) in &affine.terms {
                    let e = next.entry(u.offset(v)).or_insert(0);
                    *e = field.add(*e, field.mul(a, c));
                }
            }
            next.retain(|_, c| *c != 0);
            form = next;
        }
    }

    let rows = if field.order() == 2 {
        RowStorage::Packed {
            words: cols.div_ceil(64),
            rows: dense.iter().map(|r| crate::gf::pack_bits(r)).collect(),
        }
    } else {
        RowStorage::Bytes(dense)
    };
    Ok(TrajectoryMatrix {
        field,
        observed: observed.clone(),
        steps,
        window,
        rows,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Automaton;
    use crate::geometry::{band_window, square_window, Pattern};
    use crate::rules::{builtin, LocalRule2D};
    use rand::{Rng, SeedableRng};

    const BUDGET: u64 = 1_000_000;

    /// Decodes a trajectory key payload back into per-row letters.
    fn key_letters(key: &crate::engine::TrajectoryKey) -> Vec<Letter> {
        let q = key.q() as u128;
        let mut out = Vec::new();
        for t in 0..key.steps() as usize {
            let mut v: u128 = 0;
            for &byte in key.block(t).iter().rev() {
                v = v * 256 + u128::from(byte);
            }
            for _ in 0..key.observed().len() {
                out.push((v % q) as Letter);
                v /= q;
            }
        }
        out
    }

    fn check_against_direct(
        rule: &LocalRule2D,
        b: &CoordSet,
        steps: u32,
        samples: usize,
        seed: u64,
    ) {
        let a = Automaton::from_2d(rule);
        let m = linear_trajectory_matrix(&a, b, steps, BUDGET).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let x: Vec<Letter> = (0..m.col_count())
                .map(|_| rng.random_range(0..rule.q()) as Letter)
                .collect();
            let x0 = Pattern::new(m.window().clone(), x.clone(), rule.q()).unwrap();
            let key = a.trajectory(&x0, b, steps).unwrap();
            assert_eq!(m.apply(&x), key_letters(&key));
        }
    }

    #[test]
    fn identity_stacks_identities() {
        let id = LocalRule2D::additive(2, 1, [(Coord::ORIGIN, 1)]).unwrap();
        let b = square_window(1);
        let m = linear_trajectory_matrix(&Automaton::from_2d(&id), &b, 2, BUDGET).unwrap();
        assert_eq!((m.row_count(), m.col_count()), (18, 25));
        for row in 0..18 {
            let cell = b.as_slice()[row % 9];
            for (col, w) in m.window().iter().enumerate() {
                assert_eq!(m.entry(row, col), u32::from(w == cell));
            }
        }
        assert_eq!(m.rank(), 9);
    }

    #[test]
    fn translation_rows() {
        let f1 = builtin("F1", 1).unwrap();
        let b = square_window(0);
        let m = linear_trajectory_matrix(&Automaton::from_2d(&f1), &b, 2, BUDGET).unwrap();
        assert_eq!(m.coefficient(0, Coord::ORIGIN), 1);
        assert_eq!(m.coefficient(1, Coord::new(1, 0)), 1);
        assert_eq!(m.coefficient(1, Coord::ORIGIN), 0);
        assert_eq!(m.rank(), 2);
        check_against_direct(&f1, &b, 2, 10, 1);
    }

    #[test]
    fn cross_terms_cancel_over_gf2() {
        let f12 = builtin("F12", 1).unwrap();
        let b = square_window(0);
        let m = linear_trajectory_matrix(&Automaton::from_2d(&f12), &b, 3, BUDGET).unwrap();
        assert_eq!(m.coefficient(2, Coord::new(2, 0)), 1);
        assert_eq!(m.coefficient(2, Coord::new(0, 2)), 1);
        assert_eq!(m.coefficient(2, Coord::new(1, 1)), 0);
        check_against_direct(&f12, &b, 3, 10, 2);
    }

    #[test]
    fn matrix_matches_direct_evolution() {
        let band = band_window(1, 1).unwrap();
        check_against_direct(&builtin("PLUS", 1).unwrap(), &band, 3, 1000, 3);
        check_against_direct(
            &builtin("F12", 1)
                .unwrap()
                .conjugate_letters(&[1, 0])
                .unwrap(),
            &band,
            3,
            300,
            4,
        );
        let ternary =
            LocalRule2D::additive(3, 1, [(Coord::new(1, 1), 2), (Coord::new(-1, 0), 1)]).unwrap();
        check_against_direct(&ternary, &square_window(1), 3, 300, 5);
    }

    #[test]
    fn rejects_non_affine_and_budget() {
        let and = LocalRule2D::from_fn(2, 1, |w| w[5] & w[7]).unwrap();
        let b = square_window(1);
        assert_eq!(
            linear_trajectory_matrix(&Automaton::from_2d(&and), &b, 2, BUDGET),
            Err(EngineError::NotAffine)
        );
        assert!(matches!(
            linear_trajectory_matrix(&Automaton::from_2d(&builtin("F1", 1).unwrap()), &b, 2, 100),
            Err(EngineError::MatrixBudget { .. })
        ));
    }
}
