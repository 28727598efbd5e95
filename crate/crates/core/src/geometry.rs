//! Finite subsets of Z², the square and band windows, Minkowski
//! dilation/erosion, and the canonical pattern encoding.
//!
//! Canonical order: coordinates are sorted lexicographically by `(i, j)`,
//! `i` ascending in the outer loop and `j` ascending in the inner loop. The
//! letter at canonical position `k` of a pattern carries weight `q^k` in its
//! integer index. Rule tables, trajectory keys and matrix columns all use
//! this order, so it is part of the file and key formats.
//!
//! Shift convention: `σ^(a,b)(x)_(k,l) = x_(k+a, l+b)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Letter = u8;

/// Largest alphabet representable with [`Letter`].
pub const MAX_ALPHABET: u32 = 256;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("invalid geometry: band needs n >= r (n = {n}, r = {r})")]
    BandTooThin { n: u32, r: u32 },
    #[error("invalid geometry: radius must be positive")]
    ZeroRadius,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodingError {
    #[error("index {index} out of range for {cells} cells over an alphabet of size {q}")]
    IndexOutOfRange { index: u64, cells: usize, q: u32 },
    #[error("{q}^{cells} does not fit in a 64-bit index")]
    Overflow { cells: usize, q: u32 },
    #[error("letter {letter} is not below the alphabet size {q}")]
    LetterOutOfRange { letter: u32, q: u32 },
    #[error("pattern has {letters} letters but its domain has {cells} cells")]
    LengthMismatch { letters: usize, cells: usize },
    #[error("alphabet size {0} is not supported (need 2 <= q <= 256)")]
    BadAlphabet(u32),
}

/// A point of Z².
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
pub struct Coord {
    pub i: i32,
    pub j: i32,
}

impl Coord {
    pub const ORIGIN: Coord = Coord { i: 0, j: 0 };

    pub const fn new(i: i32, j: i32) -> Self {
        Coord { i, j }
    }

    pub fn offset(self, v: Coord) -> Coord {
        Coord::new(self.i + v.i, self.j + v.j)
    }

    /// Chebyshev norm; `v ∈ E_n` iff `v.norm() <= n`.
    pub fn norm(self) -> u32 {
        self.i.unsigned_abs().max(self.j.unsigned_abs())
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

impl From<(i32, i32)> for Coord {
    fn from((i, j): (i32, i32)) -> Self {
        Coord::new(i, j)
    }
}

/// A finite set of coordinates stored in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct CoordSet {
    coords: Vec<Coord>,
}

impl CoordSet {
    pub fn empty() -> Self {
        CoordSet { coords: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = Coord> + '_ {
        self.coords.iter().copied()
    }

    pub fn as_slice(&self) -> &[Coord] {
        &self.coords
    }

    pub fn contains(&self, c: Coord) -> bool {
        self.coords.binary_search(&c).is_ok()
    }

    /// Canonical position of `c`, if present.
    pub fn position(&self, c: Coord) -> Option<usize> {
        self.coords.binary_search(&c).ok()
    }

    pub fn translate(&self, v: Coord) -> CoordSet {
        // translation preserves lexicographic order
        CoordSet {
            coords: self.coords.iter().map(|c| c.offset(v)).collect(),
        }
    }

    pub fn union(&self, other: &CoordSet) -> CoordSet {
        self.iter().chain(other.iter()).collect()
    }

    pub fn difference(&self, other: &CoordSet) -> CoordSet {
        CoordSet {
            coords: self.iter().filter(|c| !other.contains(*c)).collect(),
        }
    }

    pub fn is_subset(&self, other: &CoordSet) -> bool {
        self.iter().all(|c| other.contains(c))
    }

    /// Inclusive bounding box `(min, max)`, or `None` for the empty set.
    pub fn bounds(&self) -> Option<(Coord, Coord)> {
        let first = *self.coords.first()?;
        let last = *self.coords.last()?;
        let (jmin, jmax) = self
            .coords
            .iter()
            .fold((i32::MAX, i32::MIN), |(lo, hi), c| {
                (lo.min(c.j), hi.max(c.j))
            });
        Some((Coord::new(first.i, jmin), Coord::new(last.i, jmax)))
    }
}

impl FromIterator<Coord> for CoordSet {
    fn from_iter<T: IntoIterator<Item = Coord>>(iter: T) -> Self {
        let mut coords: Vec<Coord> = iter.into_iter().collect();
        coords.sort_unstable();
        coords.dedup();
        CoordSet { coords }
    }
}

impl<'a> IntoIterator for &'a CoordSet {
    type Item = Coord;
    type IntoIter = std::iter::Copied<std::slice::Iter<'a, Coord>>;

    fn into_iter(self) -> Self::IntoIter {
        self.coords.iter().copied()
    }
}

/// Dense membership grid over a bounding box; used for exact set arithmetic.
struct Grid {
    min: Coord,
    width: usize,
    height: usize,
    cells: Vec<bool>,
}

impl Grid {
    fn new(min: Coord, max: Coord) -> Self {
        let height = (max.i - min.i + 1) as usize;
        let width = (max.j - min.j + 1) as usize;
        Grid {
            min,
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    fn slot(&self, c: Coord) -> Option<usize> {
        let di = c.i - self.min.i;
        let dj = c.j - self.min.j;
        if di < 0 || dj < 0 || di as usize >= self.height || dj as usize >= self.width {
            return None;
        }
        Some(di as usize * self.width + dj as usize)
    }

    fn set(&mut self, c: Coord) {
        if let Some(s) = self.slot(c) {
            self.cells[s] = true;
        }
    }

    fn get(&self, c: Coord) -> bool {
        self.slot(c).is_some_and(|s| self.cells[s])
    }

    /// Row-major scan is exactly the canonical order.
    fn collect(&self) -> CoordSet {
        let mut coords = Vec::new();
        for di in 0..self.height {
            for dj in 0..self.width {
                if self.cells[di * self.width + dj] {
                    coords.push(Coord::new(self.min.i + di as i32, self.min.j + dj as i32));
                }
            }
        }
        CoordSet { coords }
    }
}

/// `E_n`, the square of side `2n+1` centred at the origin.
pub fn square_window(n: u32) -> CoordSet {
    let n = n as i32;
    let mut coords = Vec::with_capacity(((2 * n + 1) * (2 * n + 1)) as usize);
    for i in -n..=n {
        for j in -n..=n {
            coords.push(Coord::new(i, j));
        }
    }
    CoordSet { coords }
}

/// `E'_n = E_n \ E_{n-r}`, the outer band of width `r`.
pub fn band_window(n: u32, r: u32) -> Result<CoordSet, GeometryError> {
    if r == 0 {
        return Err(GeometryError::ZeroRadius);
    }
    if n < r {
        return Err(GeometryError::BandTooThin { n, r });
    }
    let inner = (n - r) as i32;
    Ok(CoordSet {
        coords: square_window(n)
            .coords
            .into_iter()
            .filter(|c| c.i.abs() > inner || c.j.abs() > inner)
            .collect(),
    })
}

/// Exact Minkowski sum `a ⊕ b`.
pub fn minkowski_sum(a: &CoordSet, b: &CoordSet) -> CoordSet {
    let (Some((amin, amax)), Some((bmin, bmax))) = (a.bounds(), b.bounds()) else {
        return CoordSet::empty();
    };
    let mut grid = Grid::new(amin.offset(bmin), amax.offset(bmax));
    for u in a {
        for v in b {
            grid.set(u.offset(v));
        }
    }
    grid.collect()
}

/// `base ⊕ E_{r(N-1)}`: the time-0 window that determines `F^i(x)|_base` for
/// every `i < steps` when `F` has radius `r`. `steps = 0` is treated as 1.
pub fn dilate(base: &CoordSet, r: u32, steps: u32) -> CoordSet {
    let reach = r * steps.saturating_sub(1);
    if reach == 0 {
        return base.clone();
    }
    minkowski_sum(base, &square_window(reach))
}

/// `{v : v + E_r ⊆ w}`.
pub fn erode(w: &CoordSet, r: u32) -> CoordSet {
    let Some((min, max)) = w.bounds() else {
        return CoordSet::empty();
    };
    let mut grid = Grid::new(min, max);
    for c in w {
        grid.set(c);
    }
    let ball = square_window(r);
    CoordSet {
        coords: w
            .iter()
            .filter(|v| ball.iter().all(|d| grid.get(v.offset(d))))
            .collect(),
    }
}

/// An assignment of letters to a finite domain, aligned with canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Pattern {
    domain: CoordSet,
    letters: Vec<Letter>,
}

impl Pattern {
    pub fn new(domain: CoordSet, letters: Vec<Letter>, q: u32) -> Result<Self, EncodingError> {
        if letters.len() != domain.len() {
            return Err(EncodingError::LengthMismatch {
                letters: letters.len(),
                cells: domain.len(),
            });
        }
        if let Some(&bad) = letters.iter().find(|&&l| u32::from(l) >= q) {
            return Err(EncodingError::LetterOutOfRange {
                letter: bad.into(),
                q,
            });
        }
        Ok(Pattern { domain, letters })
    }

    pub fn zeros(domain: CoordSet) -> Self {
        let letters = vec![0; domain.len()];
        Pattern { domain, letters }
    }

    /// Builds a pattern by evaluating `f` at every coordinate of `domain`.
    pub fn from_fn(domain: CoordSet, mut f: impl FnMut(Coord) -> Letter) -> Self {
        let letters = domain.iter().map(&mut f).collect();
        Pattern { domain, letters }
    }

    pub fn domain(&self) -> &CoordSet {
        &self.domain
    }

    pub fn letters(&self) -> &[Letter] {
        &self.letters
    }

    pub fn get(&self, c: Coord) -> Option<Letter> {
        self.domain.position(c).map(|k| self.letters[k])
    }

    /// Restriction to `sub`; `None` if `sub` is not contained in the domain.
    pub fn restrict(&self, sub: &CoordSet) -> Option<Pattern> {
        let letters = sub
            .iter()
            .map(|c| self.get(c))
            .collect::<Option<Vec<_>>>()?;
        Some(Pattern {
            domain: sub.clone(),
            letters,
        })
    }

    /// The pattern `y` on `domain - v` with `y(c) = self(c + v)`, i.e. the
    /// restriction of `σ^v(x)` when `self` is a restriction of `x`.
    pub fn shift(&self, v: Coord) -> Pattern {
        Pattern {
            domain: self.domain.translate(-v),
            letters: self.letters.clone(),
        }
    }
}

/// `q^cells` as a `u64`, if it fits.
pub fn checked_pow(q: u32, cells: usize) -> Option<u64> {
    let exp = u32::try_from(cells).ok()?;
    u64::from(q).checked_pow(exp)
}

/// Canonical index `Σ letter_k · q^k`.
pub fn pattern_index(p: &Pattern, q: u32) -> Result<u64, EncodingError> {
    if !(2..=MAX_ALPHABET).contains(&q) {
        return Err(EncodingError::BadAlphabet(q));
    }
    if checked_pow(q, p.letters.len()).is_none() {
        // q^len - 1 may still fit, but callers only ever need full ranges
        return Err(EncodingError::Overflow {
            cells: p.letters.len(),
            q,
        });
    }
    let mut idx = 0u64;
    for &l in p.letters.iter().rev() {
        if u32::from(l) >= q {
            return Err(EncodingError::LetterOutOfRange {
                letter: l.into(),
                q,
            });
        }
        idx = idx * u64::from(q) + u64::from(l);
    }
    Ok(idx)
}

/// Inverse of [`pattern_index`].
pub fn index_pattern(idx: u64, domain: &CoordSet, q: u32) -> Result<Pattern, EncodingError> {
    if !(2..=MAX_ALPHABET).contains(&q) {
        return Err(EncodingError::BadAlphabet(q));
    }
    let total = checked_pow(q, domain.len()).ok_or(EncodingError::Overflow {
        cells: domain.len(),
        q,
    })?;
    if idx >= total {
        return Err(EncodingError::IndexOutOfRange {
            index: idx,
            cells: domain.len(),
            q,
        });
    }
    let mut rest = idx;
    let letters = (0..domain.len())
        .map(|_| {
            let d = (rest % u64::from(q)) as Letter;
            rest /= u64::from(q);
            d
        })
        .collect();
    Ok(Pattern {
        domain: domain.clone(),
        letters,
    })
}

impl std::ops::Neg for Coord {
    type Output = Coord;

    fn neg(self) -> Coord {
        Coord::new(-self.i, -self.j)
    }
}
