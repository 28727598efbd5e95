//! Key counting for the enumeration and Monte Carlo engines.
//!
//! Work is split into fixed chunks whose partial count tables merge by
//! addition, and entropies are computed from multiplicity histograms kept
//! in ordered maps, so results do not depend on the thread count.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU32, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::{KeyCodec, PackedCodec, TrajectoryPlan};
use crate::geometry::Letter;
use crate::scalar::Real;

pub(crate) type Counts<K> = HashMap<K, u64>;

const ENUM_CHUNK: u64 = 1 << 14;
const SAMPLE_CHUNK: u64 = 1 << 13;
pub(crate) const JACKKNIFE_BLOCKS: usize = 10;

/// How many cells of a partition carry each multiplicity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Histogram {
    pub total: u64,
    pub cells: u64,
    by_multiplicity: BTreeMap<u64, u64>,
}

impl Histogram {
    pub fn from_counts(counts: impl IntoIterator<Item = u64>) -> Self {
        let mut by_multiplicity = BTreeMap::new();
        let (mut total, mut cells) = (0, 0);
        for m in counts {
            if m == 0 {
                continue;
            }
            *by_multiplicity.entry(m).or_insert(0) += 1;
            total += m;
            cells += 1;
        }
        Histogram {
            total,
            cells,
            by_multiplicity,
        }
    }

    /// The common multiplicity when every cell is equally likely.
    pub fn uniform(&self) -> Option<u64> {
        match self.by_multiplicity.len() {
            1 => self.by_multiplicity.keys().next().copied(),
            _ => None,
        }
    }

    /// Shannon entropy (nats) of the empirical distribution,
    /// `ln T - Σ m ln m / T`.
    pub fn plugin<T: Real>(&self) -> T {
        if self.total == 0 {
            return T::zero();
        }
        let total = T::of_count(self.total);
        let weighted = self
            .by_multiplicity
            .iter()
            .fold(T::zero(), |acc, (&m, &c)| {
                let m = T::of_count(m);
                acc + T::of_count(c) * m * m.ln()
            });
        total.ln() - weighted / total
    }
}

fn merge<K: std::hash::Hash + Eq>(mut a: Counts<K>, mut b: Counts<K>) -> Counts<K> {
    if a.len() < b.len() {
        std::mem::swap(&mut a, &mut b);
    }
    for (k, v) in b {
        *a.entry(k).or_insert(0) += v;
    }
    a
}

fn decode_into(mut idx: u64, q: u64, digits: &mut [Letter]) {
    for d in digits.iter_mut() {
        *d = (idx % q) as Letter;
        idx /= q;
    }
}

fn increment(digits: &mut [Letter], q: u32) {
    for d in digits.iter_mut() {
        if u32::from(*d) + 1 < q {
            *d += 1;
            return;
        }
        *d = 0;
    }
}

/// Counts the trajectory keys of all `total = q^|W|` window patterns.
pub(crate) fn enumerate<C: KeyCodec>(
    plan: &TrajectoryPlan,
    codec: &C,
    total: u64,
) -> Counts<C::Key> {
    let q = plan.q();
    let cells = plan.window().len();
    (0..total.div_ceil(ENUM_CHUNK))
        .into_par_iter()
        .fold(Counts::new, |mut counts, chunk| {
            let start = chunk * ENUM_CHUNK;
            let end = total.min(start + ENUM_CHUNK);
            let mut input = vec![0 as Letter; cells];
            decode_into(start, u64::from(q), &mut input);
            let mut layers = plan.scratch();
            for _ in start..end {
                plan.evolve(&input, &mut layers);
                *counts.entry(codec.encode(plan, &layers)).or_insert(0) += 1;
                increment(&mut input, q);
            }
            counts
        })
        .reduce(Counts::new, merge)
}

/// Largest key space counted in a dense array instead of a hash map.
pub(crate) const DENSE_KEYS: u64 = 1 << 25;

/// As [`enumerate`], with one counter per possible key. Needs
/// `space <= DENSE_KEYS` and `total < 2^32`.
pub(crate) fn enumerate_dense(
    plan: &TrajectoryPlan,
    codec: &PackedCodec,
    total: u64,
    space: u64,
) -> Vec<u32> {
    debug_assert!(space <= DENSE_KEYS && total <= u64::from(u32::MAX));
    let q = plan.q();
    let cells = plan.window().len();
    let counts: Vec<AtomicU32> = (0..space).map(|_| AtomicU32::new(0)).collect();
    (0..total.div_ceil(ENUM_CHUNK))
        .into_par_iter()
        .for_each(|chunk| {
            let start = chunk * ENUM_CHUNK;
            let end = total.min(start + ENUM_CHUNK);
            let mut input = vec![0 as Letter; cells];
            decode_into(start, u64::from(q), &mut input);
            let mut layers = plan.scratch();
            for _ in start..end {
                plan.evolve(&input, &mut layers);
                counts[codec.encode(plan, &layers) as usize].fetch_add(1, Ordering::Relaxed);
                increment(&mut input, q);
            }
        });
    counts.into_iter().map(AtomicU32::into_inner).collect()
}

/// Folds dense counts onto the first `space` keys, i.e. onto key prefixes.
pub(crate) fn dense_prefix(counts: &[u32], space: usize) -> Vec<u32> {
    let mut out = vec![0u32; space];
    for (k, &v) in counts.iter().enumerate() {
        out[k % space] += v;
    }
    out
}

/// Sizes of the jackknife blocks for `samples` draws.
pub(crate) fn block_sizes(samples: u64) -> [u64; JACKKNIFE_BLOCKS] {
    let base = samples / JACKKNIFE_BLOCKS as u64;
    let extra = samples % JACKKNIFE_BLOCKS as u64;
    std::array::from_fn(|b| base + u64::from((b as u64) < extra))
}

/// Key counts of `samples` uniform window patterns, kept per jackknife
/// block. Chunk `c` of block `b` draws from its own ChaCha stream
/// `(b << 32) | c` of the seeded generator.
pub(crate) fn sample<C: KeyCodec>(
    plan: &TrajectoryPlan,
    codec: &C,
    samples: u64,
    seed: u64,
) -> Vec<Counts<C::Key>> {
    let q = plan.q();
    let cells = plan.window().len();
    let tasks: Vec<(usize, u64, u64)> = block_sizes(samples)
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| {
            (0..size.div_ceil(SAMPLE_CHUNK)).map(move |c| {
                let len = SAMPLE_CHUNK.min(size - c * SAMPLE_CHUNK);
                (b, c, len)
            })
        })
        .collect();
    let partial: Vec<(usize, Counts<C::Key>)> = tasks
        .into_par_iter()
        .map(|(b, c, len)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((b as u64) << 32) | c);
            let mut input = vec![0 as Letter; cells];
            let mut layers = plan.scratch();
            let mut counts = Counts::new();
            for _ in 0..len {
                for l in input.iter_mut() {
                    *l = rng.random_range(0..q) as Letter;
                }
                plan.evolve(&input, &mut layers);
                *counts.entry(codec.encode(plan, &layers)).or_insert(0) += 1;
            }
            (b, counts)
        })
        .collect();
    let mut blocks: Vec<Counts<C::Key>> = (0..JACKKNIFE_BLOCKS).map(|_| Counts::new()).collect();
    for (b, counts) in partial {
        let acc = std::mem::take(&mut blocks[b]);
        blocks[b] = merge(acc, counts);
    }
    blocks
}

/// Counts of the first `steps` blocks of every key.
pub(crate) fn prefix_counts<C: KeyCodec>(
    codec: &C,
    counts: &Counts<C::Key>,
    steps: usize,
) -> Counts<C::Key> {
    let mut out = Counts::with_capacity(counts.len());
    for (k, &v) in counts {
        *out.entry(codec.prefix(k, steps)).or_insert(0) += v;
    }
    out
}
