//! Prime-field arithmetic and incremental row-echelon bases over GF(p).
//!
//! GF(2) rows are packed into `u64` words; odd primes use byte rows. Rows
//! are reduced in insertion order and the pivot of a row is its lowest
//! nonzero column, so ranks of every prefix fall out of a single pass and
//! the result never depends on scheduling.

pub fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= q {
        if q.is_multiple_of(d) {
            return false;
        }
        d += 1;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimeField {
    p: u32,
}

impl PrimeField {
    pub fn new(p: u32) -> Option<Self> {
        is_prime(p).then_some(PrimeField { p })
    }

    pub fn order(self) -> u32 {
        self.p
    }

    pub fn add(self, a: u32, b: u32) -> u32 {
        (a + b) % self.p
    }

    pub fn sub(self, a: u32, b: u32) -> u32 {
        (a + self.p - b % self.p) % self.p
    }

    pub fn mul(self, a: u32, b: u32) -> u32 {
        ((u64::from(a) * u64::from(b)) % u64::from(self.p)) as u32
    }

    pub fn pow(self, mut base: u32, mut exp: u32) -> u32 {
        let mut acc = 1 % self.p;
        base %= self.p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; `a` must be nonzero.
    pub fn inv(self, a: u32) -> u32 {
        debug_assert!(!a.is_multiple_of(self.p));
        self.pow(a, self.p - 2)
    }
}

/// Incremental echelon basis of row vectors over GF(p).
#[derive(Debug, Clone)]
pub enum EchelonBasis {
    Binary(BinaryBasis),
    Prime(PrimeBasis),
}

impl EchelonBasis {
    pub fn new(field: PrimeField, cols: usize) -> Self {
        if field.order() == 2 {
            EchelonBasis::Binary(BinaryBasis::new(cols))
        } else {
            EchelonBasis::Prime(PrimeBasis::new(field, cols))
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            EchelonBasis::Binary(b) => b.rank,
            EchelonBasis::Prime(b) => b.rank,
        }
    }

    /// Inserts a dense row (entries already reduced mod p). Returns true if
    /// the rank grew.
    pub fn insert_dense(&mut self, row: &[u8]) -> bool {
        match self {
            EchelonBasis::Binary(b) => b.insert(pack_bits(row)),
            EchelonBasis::Prime(b) => b.insert(row.to_vec()),
        }
    }
}

pub fn pack_bits(row: &[u8]) -> Vec<u64> {
    let mut words = vec![0u64; row.len().div_ceil(64)];
    for (c, &v) in row.iter().enumerate() {
        if v & 1 == 1 {
            words[c / 64] |= 1 << (c % 64);
        }
    }
    words
}

#[derive(Debug, Clone)]
pub struct BinaryBasis {
    words: usize,
    pivots: Vec<Option<Vec<u64>>>,
    rank: usize,
}

impl BinaryBasis {
    pub fn new(cols: usize) -> Self {
        BinaryBasis {
            words: cols.div_ceil(64),
            pivots: vec![None; cols],
            rank: 0,
        }
    }

    fn lowest_bit(row: &[u64]) -> Option<usize> {
        row.iter()
            .enumerate()
            .find(|(_, w)| **w != 0)
            .map(|(k, w)| k * 64 + w.trailing_zeros() as usize)
    }

    pub fn insert(&mut self, mut row: Vec<u64>) -> bool {
        debug_assert_eq!(row.len(), self.words);
        while let Some(c) = Self::lowest_bit(&row) {
            match &self.pivots[c] {
                Some(basis) => {
                    // pivot rows have no bits below their pivot
                    for k in c / 64..self.words {
                        row[k] ^= basis[k];
                    }
                }
                None => {
                    self.pivots[c] = Some(row);
                    self.rank += 1;
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone)]
pub struct PrimeBasis {
    field: PrimeField,
    pivots: Vec<Option<Vec<u8>>>,
    rank: usize,
}

impl PrimeBasis {
    pub fn new(field: PrimeField, cols: usize) -> Self {
        PrimeBasis {
            field,
            pivots: vec![None; cols],
            rank: 0,
        }
    }

    pub fn insert(&mut self, mut row: Vec<u8>) -> bool {
        let f = self.field;
        while let Some(c) = row.iter().position(|&v| v != 0) {
            match &self.pivots[c] {
                Some(basis) => {
                    // basis rows are normalised to a leading 1
                    let factor = u32::from(row[c]);
                    for k in c..row.len() {
                        let v = f.sub(u32::from(row[k]), f.mul(factor, u32::from(basis[k])));
                        row[k] = v as u8;
                    }
                }
                None => {
                    let inv = f.inv(u32::from(row[c]));
                    for v in row[c..].iter_mut() {
                        *v = f.mul(u32::from(*v), inv) as u8;
                    }
                    self.pivots[c] = Some(row);
                    self.rank += 1;
                    return true;
                }
            }
        }
        false
    }
}

/// Rank of a dense matrix over GF(p).
pub fn rank_dense(field: PrimeField, rows: &[Vec<u8>], cols: usize) -> usize {
    let mut basis = EchelonBasis::new(field, cols);
    for row in rows {
        basis.insert_dense(row);
    }
    basis.rank()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Rank by exhaustive span enumeration: |span| = p^rank.
    fn brute_rank(p: u32, rows: &[Vec<u8>], cols: usize) -> usize {
        let f = PrimeField::new(p).unwrap();
        let mut span = std::collections::HashSet::new();
        span.insert(vec![0u8; cols]);
        for row in rows {
            let mut next = std::collections::HashSet::new();
            for v in &span {
                for s in 0..p {
                    let w: Vec<u8> = v
                        .iter()
                        .zip(row)
                        .map(|(&a, &b)| f.add(a.into(), f.mul(s, b.into())) as u8)
                        .collect();
                    next.insert(w);
                }
            }
            span = next;
        }
        let mut rank = 0;
        let mut size = 1usize;
        while size < span.len() {
            size *= p as usize;
            rank += 1;
        }
        rank
    }

    #[test]
    fn primes() {
        let ps: Vec<u32> = (0..30).filter(|&q| is_prime(q)).collect();
        assert_eq!(ps, vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29]);
    }

    #[test]
    fn inverses() {
        for p in [2, 3, 5, 7, 251] {
            let f = PrimeField::new(p).unwrap();
            for a in 1..p {
                assert_eq!(f.mul(a, f.inv(a)), 1);
            }
        }
    }

    #[test]
    fn identity_rank() {
        let f = PrimeField::new(2).unwrap();
        let rows: Vec<Vec<u8>> = (0..70)
            .map(|k| (0..70).map(|c| (c == k) as u8).collect())
            .collect();
        assert_eq!(rank_dense(f, &rows, 70), 70);
        let mut doubled = rows.clone();
        doubled.extend(rows);
        assert_eq!(rank_dense(f, &doubled, 70), 70);
    }

    proptest! {
        #[test]
        fn rank_matches_span_size(
            p in prop::sample::select(vec![2u32, 3, 5]),
            seed in prop::collection::vec(0u8..=255, 20),
        ) {
            let cols = 5;
            let rows: Vec<Vec<u8>> = seed
                .chunks(cols)
                .map(|ch| ch.iter().map(|&v| (u32::from(v) % p) as u8).collect())
                .collect();
            let f = PrimeField::new(p).unwrap();
            prop_assert_eq!(rank_dense(f, &rows, cols), brute_rank(p, &rows, cols));
        }
    }
}
