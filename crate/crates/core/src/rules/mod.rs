//! Local rules of one- and two-dimensional cellular automata.
//!
//! A two-dimensional rule of radius `r` reads the square `E_r` around each
//! cell: `F(x)_z = f(x_{z + E_r})`. Rules come in three forms: an explicit
//! table indexed by the canonical pattern index over `E_r`, an additive
//! form `Σ c_v x_v (mod q)` over a prime field, or the extension of a
//! one-dimensional rule that reads the column `(0,-r) … (0,r)`.

mod format;

pub use format::{parse_rule, rule_value, serialize_rule, RuleSpec};

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::geometry::{checked_pow, square_window, Coord, CoordSet, Letter, Pattern, MAX_ALPHABET};
use crate::gf::{is_prime, PrimeField};

/// Rule tables are only materialised up to this many entries.
pub const TABLE_BUDGET: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuleError {
    #[error("malformed rule document: {0}")]
    Malformed(String),
    #[error("alphabet size {0} is not supported (need 2 <= q <= 256)")]
    BadAlphabet(u32),
    #[error("radius must be at least 1")]
    ZeroRadius,
    #[error("wrong table length: expected {expected} entries, found {found}")]
    WrongTableLength { expected: u64, found: usize },
    #[error("table entry {letter} at index {index} is not below q = {q}")]
    TableEntryOutOfRange { index: usize, letter: u32, q: u32 },
    #[error("additive rules need a prime alphabet size, got q = {0}")]
    NonPrimeField(u32),
    #[error("coefficient {coef} at {coord} must lie in [1, {q})")]
    BadCoefficient { coord: Coord, coef: u32, q: u32 },
    #[error("coordinate {coord} lies outside the neighbourhood of radius {r}")]
    CoordOutsideNeighborhood { coord: Coord, r: u32 },
    #[error("coordinate {0} appears more than once")]
    DuplicateCoord(Coord),
    #[error("unknown builtin rule '{0}' (known: F1, F12, F34, PLUS)")]
    UnknownBuiltin(String),
    #[error(
        "builtin 'F13' is ambiguous: its published formula repeats F12's; \
         write an explicit additive document such as {{(r,0),(-r,0)}} or {{(0,r),(-r,0)}}"
    )]
    AmbiguousBuiltin,
    #[error("budget exceeded: {required} table entries needed, {allowed} allowed")]
    BudgetExceeded { required: String, allowed: u64 },
    #[error("pattern domain does not match the neighbourhood of radius {r}")]
    DomainMismatch { r: u32 },
    #[error("not a permutation of the alphabet [0, {q})")]
    InvalidPermutation { q: u32 },
    #[error("power exponent must be at least 1")]
    ZeroPower,
}

fn check_alphabet(q: u32) -> Result<(), RuleError> {
    if (2..=MAX_ALPHABET).contains(&q) {
        Ok(())
    } else {
        Err(RuleError::BadAlphabet(q))
    }
}

fn table_size(q: u32, cells: usize) -> Result<u64, RuleError> {
    match checked_pow(q, cells) {
        Some(n) if n <= TABLE_BUDGET => Ok(n),
        _ => Err(RuleError::BudgetExceeded {
            required: format!("{q}^{cells}"),
            allowed: TABLE_BUDGET,
        }),
    }
}

fn check_table(q: u32, expected: u64, table: &[Letter]) -> Result<(), RuleError> {
    if table.len() as u64 != expected {
        return Err(RuleError::WrongTableLength {
            expected,
            found: table.len(),
        });
    }
    if let Some((index, &l)) = table.iter().enumerate().find(|(_, &l)| u32::from(l) >= q) {
        return Err(RuleError::TableEntryOutOfRange {
            index,
            letter: l.into(),
            q,
        });
    }
    Ok(())
}

/// Odometer over all words of `len` letters in canonical index order
/// (position 0 is the least significant digit).
pub(crate) fn for_each_word(q: u32, len: usize, mut f: impl FnMut(usize, &[Letter])) {
    let total = checked_pow(q, len).expect("caller checked the budget") as usize;
    let mut word = vec![0 as Letter; len];
    for idx in 0..total {
        f(idx, &word);
        for d in word.iter_mut() {
            if u32::from(*d) + 1 < q {
                *d += 1;
                break;
            }
            *d = 0;
        }
    }
}

/// Affine realisation `f(P) = constant + Σ c_k P_k (mod q)` of a lookup
/// table over `len` positions, if one exists. Coefficients are returned
/// densely, one per position.
pub fn affine_from_table(q: u32, len: usize, table: &[Letter]) -> Option<(u32, Vec<u32>)> {
    let field = PrimeField::new(q)?;
    debug_assert_eq!(Some(table.len() as u64), checked_pow(q, len));
    let constant = u32::from(table[0]);
    let mut coeffs = Vec::with_capacity(len);
    let mut weight = 1usize;
    for _ in 0..len {
        coeffs.push(field.sub(u32::from(table[weight]), constant));
        weight *= q as usize;
    }
    let mut ok = true;
    for_each_word(q, len, |idx, word| {
        if !ok {
            return;
        }
        let v = word.iter().zip(&coeffs).fold(constant, |acc, (&l, &c)| {
            field.add(acc, field.mul(c, l.into()))
        });
        ok = v == u32::from(table[idx]);
    });
    ok.then_some((constant, coeffs))
}

/// One-dimensional local rule `f: A^{2r+1} → A`, tabulated over the word
/// `w_{-r} … w_r` with `w_{-r}` as the least significant digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalRule1D {
    q: u32,
    r: u32,
    table: Vec<Letter>,
}

impl LocalRule1D {
    pub fn table(q: u32, r: u32, table: Vec<Letter>) -> Result<Self, RuleError> {
        check_alphabet(q)?;
        if r == 0 {
            return Err(RuleError::ZeroRadius);
        }
        let expected = table_size(q, (2 * r + 1) as usize)?;
        check_table(q, expected, &table)?;
        Ok(LocalRule1D { q, r, table })
    }

    pub fn from_fn(q: u32, r: u32, f: impl Fn(&[Letter]) -> Letter) -> Result<Self, RuleError> {
        check_alphabet(q)?;
        if r == 0 {
            return Err(RuleError::ZeroRadius);
        }
        let len = (2 * r + 1) as usize;
        let size = table_size(q, len)?;
        let mut table = Vec::with_capacity(size as usize);
        for_each_word(q, len, |_, w| table.push(f(w) % q as u8));
        Ok(LocalRule1D { q, r, table })
    }

    /// `Σ c_k w_k (mod q)` over offsets `k ∈ [-r, r]`.
    pub fn additive(q: u32, r: u32, terms: &[(i32, u32)]) -> Result<Self, RuleError> {
        check_alphabet(q)?;
        if !is_prime(q) {
            return Err(RuleError::NonPrimeField(q));
        }
        let mut dense = vec![0u32; (2 * r + 1) as usize];
        for &(k, c) in terms {
            let coord = Coord::new(0, k);
            if k.unsigned_abs() > r {
                return Err(RuleError::CoordOutsideNeighborhood { coord, r });
            }
            if c == 0 || c >= q {
                return Err(RuleError::BadCoefficient { coord, coef: c, q });
            }
            let slot = &mut dense[(k + r as i32) as usize];
            if *slot != 0 {
                return Err(RuleError::DuplicateCoord(coord));
            }
            *slot = c;
        }
        let field = PrimeField::new(q).expect("checked prime");
        Self::from_fn(q, r, |w| {
            w.iter()
                .zip(&dense)
                .fold(0, |acc, (&l, &c)| field.add(acc, field.mul(c, l.into())))
                as Letter
        })
    }

    pub fn identity(q: u32, r: u32) -> Result<Self, RuleError> {
        Self::from_fn(q, r, move |w| w[r as usize])
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn entries(&self) -> &[Letter] {
        &self.table
    }

    /// Evaluates the rule on a word of length `2r+1`.
    pub fn eval_word(&self, word: &[Letter]) -> Letter {
        debug_assert_eq!(word.len(), (2 * self.r + 1) as usize);
        let idx = word
            .iter()
            .rev()
            .fold(0usize, |acc, &l| acc * self.q as usize + l as usize);
        self.table[idx]
    }

    /// Offsets and coefficients of an affine realisation, if any.
    pub fn affine_form(&self) -> Option<(u32, Vec<(i32, u32)>)> {
        let len = (2 * self.r + 1) as usize;
        let (constant, dense) = affine_from_table(self.q, len, &self.table)?;
        let terms = dense
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c != 0)
            .map(|(k, c)| (k as i32 - self.r as i32, c))
            .collect();
        Some((constant, terms))
    }

    /// The rule of `F^k`, radius `k·r`.
    pub fn power(&self, k: u32) -> Result<Self, RuleError> {
        if k == 0 {
            return Err(RuleError::ZeroPower);
        }
        if k == 1 {
            return Ok(self.clone());
        }
        let r = self.r as usize;
        Self::from_fn(self.q, self.r * k, |w| {
            let mut cur = w.to_vec();
            while cur.len() > 1 {
                cur = (0..cur.len() - 2 * r)
                    .map(|s| self.eval_word(&cur[s..s + 2 * r + 1]))
                    .collect();
            }
            cur[0]
        })
    }
}

/// The representation behind a [`LocalRule2D`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RuleForm {
    Table(Vec<Letter>),
    /// Nonzero coefficients in canonical coordinate order.
    Additive(Vec<(Coord, u32)>),
    Extension(LocalRule1D),
}

/// Affine realisation `constant + Σ c_v x_v (mod q)` of a two-dimensional rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AffineForm {
    pub constant: u32,
    pub terms: Vec<(Coord, u32)>,
}

impl AffineForm {
    pub fn is_linear(&self) -> bool {
        self.constant == 0
    }

    pub fn support(&self) -> CoordSet {
        self.terms.iter().map(|(c, _)| *c).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LocalRule2D {
    q: u32,
    r: u32,
    form: RuleForm,
}

/// Canonical position of `c` inside `E_r`.
pub(crate) fn neighborhood_position(c: Coord, r: u32) -> usize {
    let side = 2 * r as i32 + 1;
    ((c.i + r as i32) * side + (c.j + r as i32)) as usize
}

impl LocalRule2D {
    pub fn table(q: u32, r: u32, table: Vec<Letter>) -> Result<Self, RuleError> {
        check_alphabet(q)?;
        if r == 0 {
            return Err(RuleError::ZeroRadius);
        }
        let cells = ((2 * r + 1) * (2 * r + 1)) as usize;
        let expected = checked_pow(q, cells)
            .filter(|&n| n <= TABLE_BUDGET)
            .ok_or_else(|| RuleError::WrongTableLength {
                expected: checked_pow(q, cells).unwrap_or(u64::MAX),
                found: table.len(),
            })?;
        check_table(q, expected, &table)?;
        Ok(LocalRule2D {
            q,
            r,
            form: RuleForm::Table(table),
        })
    }

    /// Tabulates `f` over all patterns on `E_r`; `f` receives the letters in
    /// canonical order.
    pub fn from_fn(q: u32, r: u32, f: impl Fn(&[Letter]) -> Letter) -> Result<Self, RuleError> {
        check_alphabet(q)?;
        if r == 0 {
            return Err(RuleError::ZeroRadius);
        }
        let cells = ((2 * r + 1) * (2 * r + 1)) as usize;
        let size = table_size(q, cells)?;
        let mut table = Vec::with_capacity(size as usize);
        for_each_word(q, cells, |_, w| table.push(f(w) % q as u8));
        Ok(LocalRule2D {
            q,
            r,
            form: RuleForm::Table(table),
        })
    }

    pub fn additive(
        q: u32,
        r: u32,
        terms: impl IntoIterator<Item = (Coord, u32)>,
    ) -> Result<Self, RuleError> {
        check_alphabet(q)?;
        if r == 0 {
            return Err(RuleError::ZeroRadius);
        }
        if !is_prime(q) {
            return Err(RuleError::NonPrimeField(q));
        }
        let mut sorted = BTreeMap::new();
        for (coord, coef) in terms {
            if coord.norm() > r {
                return Err(RuleError::CoordOutsideNeighborhood { coord, r });
            }
            if coef == 0 || coef >= q {
                return Err(RuleError::BadCoefficient { coord, coef, q });
            }
            if sorted.insert(coord, coef).is_some() {
                return Err(RuleError::DuplicateCoord(coord));
            }
        }
        Ok(LocalRule2D {
            q,
            r,
            form: RuleForm::Additive(sorted.into_iter().collect()),
        })
    }

    /// Extension of a one-dimensional rule: the column `(0,-r) … (0,r)` of
    /// the neighbourhood is fed to `rule`; every other cell is ignored.
    pub fn extension(rule: LocalRule1D) -> Self {
        LocalRule2D {
            q: rule.q,
            r: rule.r,
            form: RuleForm::Extension(rule),
        }
    }

    pub fn identity(q: u32, r: u32) -> Result<Self, RuleError> {
        let center = neighborhood_position(Coord::ORIGIN, r);
        Self::from_fn(q, r, move |w| w[center])
    }

    pub fn constant(q: u32, r: u32, letter: Letter) -> Result<Self, RuleError> {
        Self::from_fn(q, r, move |_| letter)
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn form(&self) -> &RuleForm {
        &self.form
    }

    /// `E_r` in canonical order.
    pub fn neighborhood(&self) -> CoordSet {
        square_window(self.r)
    }

    fn neighborhood_len(&self) -> usize {
        ((2 * self.r + 1) * (2 * self.r + 1)) as usize
    }

    /// Evaluates on the letters of a pattern over `E_r` in canonical order.
    pub fn eval_letters(&self, letters: &[Letter]) -> Letter {
        debug_assert_eq!(letters.len(), self.neighborhood_len());
        match &self.form {
            RuleForm::Table(table) => {
                let idx = letters
                    .iter()
                    .rev()
                    .fold(0usize, |acc, &l| acc * self.q as usize + l as usize);
                table[idx]
            }
            RuleForm::Additive(terms) => {
                let field = PrimeField::new(self.q).expect("additive rules are over a field");
                terms.iter().fold(0u32, |acc, &(c, k)| {
                    let l = letters[neighborhood_position(c, self.r)];
                    field.add(acc, field.mul(k, l.into()))
                }) as Letter
            }
            RuleForm::Extension(rule) => {
                let word: Vec<Letter> = (-(self.r as i32)..=self.r as i32)
                    .map(|j| letters[neighborhood_position(Coord::new(0, j), self.r)])
                    .collect();
                rule.eval_word(&word)
            }
        }
    }

    pub fn eval(&self, p: &Pattern) -> Result<Letter, RuleError> {
        if *p.domain() != self.neighborhood() {
            return Err(RuleError::DomainMismatch { r: self.r });
        }
        Ok(self.eval_letters(p.letters()))
    }

    /// Full lookup table over `E_r`.
    pub fn to_table(&self) -> Result<Vec<Letter>, RuleError> {
        if let RuleForm::Table(t) = &self.form {
            return Ok(t.clone());
        }
        let size = table_size(self.q, self.neighborhood_len())?;
        let mut table = Vec::with_capacity(size as usize);
        for_each_word(self.q, self.neighborhood_len(), |_, w| {
            table.push(self.eval_letters(w))
        });
        Ok(table)
    }

    pub fn to_table_rule(&self) -> Result<Self, RuleError> {
        Ok(LocalRule2D {
            q: self.q,
            r: self.r,
            form: RuleForm::Table(self.to_table()?),
        })
    }

    /// Affine realisation, when one exists. Additive forms are returned
    /// directly; extensions and tables are tested exhaustively (tables only
    /// over a prime alphabet).
    pub fn affine_form(&self) -> Option<AffineForm> {
        match &self.form {
            RuleForm::Additive(terms) => Some(AffineForm {
                constant: 0,
                terms: terms.clone(),
            }),
            RuleForm::Extension(rule) => {
                let (constant, terms) = rule.affine_form()?;
                Some(AffineForm {
                    constant,
                    terms: terms
                        .into_iter()
                        .map(|(k, c)| (Coord::new(0, k), c))
                        .collect(),
                })
            }
            RuleForm::Table(table) => {
                let side = 2 * self.r as i32 + 1;
                let (constant, dense) = affine_from_table(self.q, self.neighborhood_len(), table)?;
                let terms = dense
                    .into_iter()
                    .enumerate()
                    .filter(|(_, c)| *c != 0)
                    .map(|(k, c)| {
                        let k = k as i32;
                        (
                            Coord::new(k / side - self.r as i32, k % side - self.r as i32),
                            c,
                        )
                    })
                    .collect();
                Some(AffineForm { constant, terms })
            }
        }
    }

    /// Applies the rule to letters on `E_m` (canonical order), giving the
    /// letters on `E_{m-r}`.
    fn step_square(&self, letters: &[Letter], m: u32) -> Vec<Letter> {
        let r = self.r as i32;
        let m = m as i32;
        let side = 2 * m + 1;
        let out = m - r;
        let mut nb = vec![0 as Letter; self.neighborhood_len()];
        let mut result = Vec::with_capacity(((2 * out + 1) * (2 * out + 1)) as usize);
        for ci in -out..=out {
            for cj in -out..=out {
                let mut k = 0;
                for di in -r..=r {
                    for dj in -r..=r {
                        let (i, j) = (ci + di + m, cj + dj + m);
                        nb[k] = letters[(i * side + j) as usize];
                        k += 1;
                    }
                }
                result.push(self.eval_letters(&nb));
            }
        }
        result
    }

    /// The local rule of `F^k`, of radius `k·r`.
    pub fn power(&self, k: u32) -> Result<Self, RuleError> {
        if k == 0 {
            return Err(RuleError::ZeroPower);
        }
        if k == 1 {
            return Ok(self.clone());
        }
        match &self.form {
            RuleForm::Additive(terms) => {
                let field = PrimeField::new(self.q).expect("additive rules are over a field");
                let mut acc: BTreeMap<Coord, u32> = terms.iter().copied().collect();
                for _ in 1..k {
                    let mut next = BTreeMap::new();
                    for (&u, &a) in &acc {
                        for &(v, b) in terms {
                            let e = next.entry(u.offset(v)).or_insert(0);
                            *e = field.add(*e, field.mul(a, b));
                        }
                    }
                    next.retain(|_, c| *c != 0);
                    acc = next;
                }
                LocalRule2D::additive(self.q, self.r * k, acc)
            }
            RuleForm::Extension(rule) => Ok(LocalRule2D::extension(rule.power(k)?)),
            RuleForm::Table(_) => {
                let big = self.r * k;
                LocalRule2D::from_fn(self.q, big, |w| {
                    let mut cur = w.to_vec();
                    let mut m = big;
                    while m > 0 {
                        cur = self.step_square(&cur, m);
                        m -= self.r;
                    }
                    cur[0]
                })
            }
        }
    }

    /// The rule `g(P) = π(f(π⁻¹ ∘ P))` conjugate to this one under the
    /// cellwise letter permutation `π`.
    pub fn conjugate_letters(&self, perm: &[Letter]) -> Result<Self, RuleError> {
        let q = self.q;
        let mut inverse = vec![Letter::MAX; q as usize];
        if perm.len() != q as usize {
            return Err(RuleError::InvalidPermutation { q });
        }
        for (a, &b) in perm.iter().enumerate() {
            if u32::from(b) >= q || inverse[b as usize] != Letter::MAX {
                return Err(RuleError::InvalidPermutation { q });
            }
            inverse[b as usize] = a as Letter;
        }
        let mut buf = vec![0 as Letter; self.neighborhood_len()];
        let size = table_size(q, self.neighborhood_len())?;
        let mut table = Vec::with_capacity(size as usize);
        for_each_word(q, self.neighborhood_len(), |_, w| {
            for (b, &l) in buf.iter_mut().zip(w) {
                *b = inverse[l as usize];
            }
            table.push(perm[self.eval_letters(&buf) as usize]);
        });
        Ok(LocalRule2D {
            q,
            r: self.r,
            form: RuleForm::Table(table),
        })
    }
}

/// Named rules over `{0,1}`, each an additive form in the side midpoints of
/// `E_r`: `p₁ = (0,r)`, `p₂ = (0,-r)`, `p₃ = (-r,0)`, `p₄ = (r,0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Builtin {
    /// `x_(r,0)`
    F1,
    /// `x_(r,0) + x_(0,r)`
    F12,
    /// `x_(-r,0) + x_(0,-r)`
    F34,
    /// all four side midpoints
    Plus,
}

impl Builtin {
    pub fn from_name(name: &str) -> Result<Self, RuleError> {
        match name.to_ascii_uppercase().as_str() {
            "F1" => Ok(Builtin::F1),
            "F12" => Ok(Builtin::F12),
            "F34" => Ok(Builtin::F34),
            "PLUS" => Ok(Builtin::Plus),
            "F13" => Err(RuleError::AmbiguousBuiltin),
            _ => Err(RuleError::UnknownBuiltin(name.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Builtin::F1 => "F1",
            Builtin::F12 => "F12",
            Builtin::F34 => "F34",
            Builtin::Plus => "PLUS",
        }
    }

    pub fn sites(self, r: u32) -> Vec<Coord> {
        let r = r as i32;
        match self {
            Builtin::F1 => vec![Coord::new(r, 0)],
            Builtin::F12 => vec![Coord::new(r, 0), Coord::new(0, r)],
            Builtin::F34 => vec![Coord::new(-r, 0), Coord::new(0, -r)],
            Builtin::Plus => pt_sites(r as u32).to_vec(),
        }
    }

    pub fn rule(self, r: u32) -> Result<LocalRule2D, RuleError> {
        LocalRule2D::additive(2, r, self.sites(r).into_iter().map(|c| (c, 1)))
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The four side midpoints of `E_r`: `(0,r), (0,-r), (-r,0), (r,0)`.
pub fn pt_sites(r: u32) -> [Coord; 4] {
    let r = r as i32;
    [
        Coord::new(0, r),
        Coord::new(0, -r),
        Coord::new(-r, 0),
        Coord::new(r, 0),
    ]
}

pub fn builtin(name: &str, r: u32) -> Result<LocalRule2D, RuleError> {
    Builtin::from_name(name)?.rule(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::index_pattern;
    use proptest::prelude::*;

    fn pattern_with_ones(r: u32, ones: &[(i32, i32)]) -> Pattern {
        Pattern::from_fn(square_window(r), |c| {
            ones.iter().any(|&(i, j)| c == Coord::new(i, j)) as Letter
        })
    }

    #[test]
    fn builtin_evaluation() {
        let f1 = builtin("F1", 1).unwrap();
        assert_eq!(f1.eval(&pattern_with_ones(1, &[(1, 0)])).unwrap(), 1);
        let f12 = builtin("F12", 1).unwrap();
        assert_eq!(
            f12.eval(&pattern_with_ones(1, &[(1, 0), (0, 1)])).unwrap(),
            0
        );
        assert_eq!(f12.eval(&pattern_with_ones(1, &[(0, 1)])).unwrap(), 1);
    }

    #[test]
    fn builtin_forms() {
        assert_eq!(
            builtin("F1", 1).unwrap().form(),
            &RuleForm::Additive(vec![(Coord::new(1, 0), 1)])
        );
        assert_eq!(
            builtin("F34", 1).unwrap().form(),
            &RuleForm::Additive(vec![(Coord::new(-1, 0), 1), (Coord::new(0, -1), 1)])
        );
        let plus = builtin("plus", 1).unwrap();
        let RuleForm::Additive(terms) = plus.form() else {
            panic!()
        };
        let sites: CoordSet = terms.iter().map(|t| t.0).collect();
        assert_eq!(sites, pt_sites(1).into_iter().collect());
        assert!(terms.iter().all(|t| t.1 == 1));
        assert_eq!(builtin("F1", 3).unwrap().r(), 3);
    }

    #[test]
    fn builtin_errors() {
        assert_eq!(builtin("F13", 1), Err(RuleError::AmbiguousBuiltin));
        assert!(matches!(
            builtin("nope", 1),
            Err(RuleError::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn eval_rejects_wrong_domain() {
        let f1 = builtin("F1", 1).unwrap();
        assert_eq!(
            f1.eval(&Pattern::zeros(square_window(2))),
            Err(RuleError::DomainMismatch { r: 1 })
        );
    }

    #[test]
    fn table_form_agrees_with_every_form() {
        let and = LocalRule2D::from_fn(2, 1, |w| {
            w[neighborhood_position(Coord::new(1, 0), 1)]
                & w[neighborhood_position(Coord::new(0, 1), 1)]
        })
        .unwrap();
        let rules = vec![
            builtin("PLUS", 1).unwrap(),
            builtin("F12", 1).unwrap(),
            LocalRule2D::additive(3, 1, [(Coord::new(1, 1), 2), (Coord::new(-1, 0), 1)]).unwrap(),
            LocalRule2D::extension(LocalRule1D::additive(2, 1, &[(-1, 1), (1, 1)]).unwrap()),
            and,
        ];
        for rule in rules {
            let table = rule.to_table_rule().unwrap();
            let e = rule.neighborhood();
            for idx in 0..checked_pow(rule.q(), e.len()).unwrap() {
                let p = index_pattern(idx, &e, rule.q()).unwrap();
                assert_eq!(rule.eval(&p).unwrap(), table.eval(&p).unwrap());
            }
        }
    }

    #[test]
    fn table_length_checks() {
        assert!(LocalRule2D::table(2, 1, vec![0; 512]).is_ok());
        assert_eq!(
            LocalRule2D::table(2, 1, vec![0; 511]),
            Err(RuleError::WrongTableLength {
                expected: 512,
                found: 511
            })
        );
        assert!(matches!(
            LocalRule2D::table(2, 1, vec![2; 512]),
            Err(RuleError::TableEntryOutOfRange { .. })
        ));
    }

    #[test]
    fn additive_validation() {
        assert_eq!(
            LocalRule2D::additive(4, 1, [(Coord::new(1, 0), 1)]),
            Err(RuleError::NonPrimeField(4))
        );
        assert!(matches!(
            LocalRule2D::additive(3, 1, [(Coord::new(1, 0), 3)]),
            Err(RuleError::BadCoefficient { .. })
        ));
        assert!(matches!(
            LocalRule2D::additive(3, 1, [(Coord::new(2, 0), 1)]),
            Err(RuleError::CoordOutsideNeighborhood { .. })
        ));
        assert!(matches!(
            LocalRule2D::additive(3, 1, [(Coord::new(1, 0), 1), (Coord::new(1, 0), 2)]),
            Err(RuleError::DuplicateCoord(_))
        ));
    }

    #[test]
    fn extension_examples() {
        let id1 = LocalRule1D::identity(2, 1).unwrap();
        let ext = LocalRule2D::extension(id1);
        assert_eq!(
            ext.to_table().unwrap(),
            LocalRule2D::identity(2, 1).unwrap().to_table().unwrap()
        );

        let xor = LocalRule1D::additive(2, 1, &[(-1, 1), (1, 1)]).unwrap();
        let ext = LocalRule2D::extension(xor);
        assert_eq!(ext.q(), 2);
        assert_eq!(ext.r(), 1);
        assert_eq!(
            ext.affine_form(),
            Some(AffineForm {
                constant: 0,
                terms: vec![(Coord::new(0, -1), 1), (Coord::new(0, 1), 1)]
            })
        );
    }

    #[test]
    fn extension_reads_the_column() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for q in [2u32, 3] {
            for r in [1u32, 2] {
                if checked_pow(q, (2 * r + 1) as usize).unwrap() > 300 {
                    continue;
                }
                let table: Vec<Letter> = (0..q.pow(2 * r + 1))
                    .map(|_| rng.random_range(0..q) as Letter)
                    .collect();
                let g = LocalRule1D::table(q, r, table).unwrap();
                let ext = LocalRule2D::extension(g.clone());
                for _ in 0..100 {
                    let p =
                        Pattern::from_fn(square_window(r), |_| rng.random_range(0..q) as Letter);
                    let word: Vec<Letter> = (-(r as i32)..=r as i32)
                        .map(|j| p.get(Coord::new(0, j)).unwrap())
                        .collect();
                    assert_eq!(ext.eval(&p).unwrap(), g.eval_word(&word));
                }
            }
        }
    }

    #[test]
    fn power_examples() {
        let f1 = builtin("F1", 1).unwrap();
        assert_eq!(f1.power(1).unwrap(), f1);
        let f1sq = f1.power(2).unwrap();
        assert_eq!(f1sq.r(), 2);
        assert_eq!(
            f1sq.form(),
            &RuleForm::Additive(vec![(Coord::new(2, 0), 1)])
        );

        let f12sq = builtin("F12", 1).unwrap().power(2).unwrap();
        assert_eq!(
            f12sq.form(),
            &RuleForm::Additive(vec![(Coord::new(0, 2), 1), (Coord::new(2, 0), 1)])
        );
        assert_eq!(f1.power(0), Err(RuleError::ZeroPower));
    }

    #[test]
    fn table_power_over_budget() {
        let t = builtin("F1", 1).unwrap().to_table_rule().unwrap();
        assert!(matches!(t.power(2), Err(RuleError::BudgetExceeded { .. })));
    }

    #[test]
    fn one_dim_power_matches_additive_composition() {
        // (w_{-1} + w_1)^2 = w_{-2} + w_2 over GF(2)
        let xor = LocalRule1D::additive(2, 1, &[(-1, 1), (1, 1)]).unwrap();
        let sq = xor.power(2).unwrap();
        assert_eq!(sq, LocalRule1D::additive(2, 2, &[(-2, 1), (2, 1)]).unwrap());
        let ext_sq = LocalRule2D::extension(xor).power(2).unwrap();
        assert_eq!(
            ext_sq.affine_form().unwrap().terms,
            vec![(Coord::new(0, -2), 1), (Coord::new(0, 2), 1)]
        );
    }

    #[test]
    fn conjugation_examples() {
        let f1 = builtin("F1", 1).unwrap();
        assert_eq!(
            f1.conjugate_letters(&[0, 1]).unwrap(),
            f1.to_table_rule().unwrap()
        );
        assert_eq!(
            f1.conjugate_letters(&[1, 0]).unwrap(),
            f1.to_table_rule().unwrap()
        );

        let f12 = builtin("F12", 1).unwrap();
        let swapped = f12.conjugate_letters(&[1, 0]).unwrap();
        let expected = LocalRule2D::from_fn(2, 1, |w| {
            1 ^ w[neighborhood_position(Coord::new(1, 0), 1)]
                ^ w[neighborhood_position(Coord::new(0, 1), 1)]
        })
        .unwrap();
        assert_eq!(swapped, expected);
        assert_eq!(
            swapped.affine_form(),
            Some(AffineForm {
                constant: 1,
                terms: vec![(Coord::new(0, 1), 1), (Coord::new(1, 0), 1)]
            })
        );
        assert!(matches!(
            f12.conjugate_letters(&[0, 0]),
            Err(RuleError::InvalidPermutation { q: 2 })
        ));
    }

    proptest! {
        #[test]
        fn conjugation_round_trip(seed in any::<u64>(), perm_idx in 0usize..6) {
            use rand::{Rng, SeedableRng};
            let perms: [[Letter; 3]; 6] = [[0,1,2],[0,2,1],[1,0,2],[1,2,0],[2,0,1],[2,1,0]];
            let perm = perms[perm_idx];
            let mut inv = [0 as Letter; 3];
            for (a, &b) in perm.iter().enumerate() { inv[b as usize] = a as Letter; }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let table: Vec<Letter> = (0..27).map(|_| rng.random_range(0..3u32) as Letter).collect();
            let g = LocalRule1D::table(3, 1, table).unwrap();
            let rule = LocalRule2D::extension(g).to_table_rule().unwrap();
            let back = rule.conjugate_letters(&perm).unwrap().conjugate_letters(&inv).unwrap();
            prop_assert_eq!(back, rule);
        }

        #[test]
        fn additive_power_composes(a in 1u32..=3, b in 1u32..=3, c0 in 1u32..3, c1 in 1u32..3) {
            let rule = LocalRule2D::additive(3, 1, [(Coord::new(1, 0), c0), (Coord::new(0, -1), c1)]).unwrap();
            let lhs = rule.power(a + b).unwrap();
            // F^(a+b) = F^a ∘ F^b: compose the coefficient vectors
            let pa = rule.power(a).unwrap();
            let pb = rule.power(b).unwrap();
            let (RuleForm::Additive(ta), RuleForm::Additive(tb)) = (pa.form(), pb.form()) else { unreachable!() };
            let f = PrimeField::new(3).unwrap();
            let mut acc = BTreeMap::new();
            for &(u, x) in ta { for &(v, y) in tb {
                let e = acc.entry(u.offset(v)).or_insert(0);
                *e = f.add(*e, f.mul(x, y));
            }}
            acc.retain(|_, c| *c != 0);
            prop_assert_eq!(lhs.form(), &RuleForm::Additive(acc.into_iter().collect()));
        }
    }
}
