use std::hash::Hash;

use crate::geometry::{CoordSet, Letter};

use super::TrajectoryPlan;

/// Canonical encoding of the observed patterns `F^i(x)|_B`, `i < N`.
///
/// Each step contributes one block: the canonical index of the observed
/// pattern as a little-endian base-256 integer, zero-padded to the fixed
/// width needed for `q^|B| - 1`. Equal keys are byte-equal payloads.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrajectoryKey {
    observed: CoordSet,
    steps: u32,
    q: u32,
    width: usize,
    payload: Vec<u8>,
}

impl TrajectoryKey {
    pub(crate) fn new(
        observed: CoordSet,
        steps: u32,
        q: u32,
        width: usize,
        payload: Vec<u8>,
    ) -> Self {
        debug_assert_eq!(payload.len(), width * steps as usize);
        TrajectoryKey {
            observed,
            steps,
            q,
            width,
            payload,
        }
    }

    pub fn observed(&self) -> &CoordSet {
        &self.observed
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn block_width(&self) -> usize {
        self.width
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn block(&self, t: usize) -> &[u8] {
        &self.payload[t * self.width..(t + 1) * self.width]
    }

    /// The key of the first `steps` observations.
    pub fn prefix(&self, steps: u32) -> TrajectoryKey {
        let steps = steps.min(self.steps);
        TrajectoryKey {
            observed: self.observed.clone(),
            steps,
            q: self.q,
            width: self.width,
            payload: self.payload[..steps as usize * self.width].to_vec(),
        }
    }
}

/// Injective encodings of whole trajectories, used as hash-map keys when
/// counting cells of the joined partition.
pub trait KeyCodec: Sync {
    type Key: Clone + Eq + Ord + Hash + Send + Sync;

    fn encode(&self, plan: &TrajectoryPlan, layers: &[Vec<Letter>]) -> Self::Key;

    /// Key of the first `steps` blocks.
    fn prefix(&self, key: &Self::Key, steps: usize) -> Self::Key;
}

/// Whole trajectory packed into one `u128` as `Σ_t block_t · (q^|B|)^t`.
#[derive(Debug, Clone)]
pub struct PackedCodec {
    digit_weights: Vec<u128>,
    block_pows: Vec<u128>,
}

impl PackedCodec {
    /// `None` when `q^(|B|·steps)` does not fit in 128 bits.
    pub fn new(q: u32, cells: usize, steps: usize) -> Option<Self> {
        let q = u128::from(q);
        let mut digit_weights = Vec::with_capacity(cells);
        let mut w: u128 = 1;
        for _ in 0..cells {
            digit_weights.push(w);
            w = w.checked_mul(q)?;
        }
        let base = w;
        let mut block_pows = Vec::with_capacity(steps + 1);
        let mut p: u128 = 1;
        block_pows.push(p);
        for _ in 0..steps {
            p = p.checked_mul(base)?;
            block_pows.push(p);
        }
        Some(PackedCodec {
            digit_weights,
            block_pows,
        })
    }
}

impl KeyCodec for PackedCodec {
    type Key = u128;

    fn encode(&self, plan: &TrajectoryPlan, layers: &[Vec<Letter>]) -> u128 {
        let mut key = 0u128;
        for t in 0..plan.steps() {
            let block: u128 = plan
                .observed(layers, t)
                .zip(&self.digit_weights)
                .map(|(l, &w)| u128::from(l) * w)
                .sum();
            key += block * self.block_pows[t];
        }
        key
    }

    fn prefix(&self, key: &u128, steps: usize) -> u128 {
        key % self.block_pows[steps]
    }
}

/// Byte payloads as in [`TrajectoryKey`]; works for any `|B|`.
#[derive(Debug, Clone)]
pub struct BytesCodec {
    q: u32,
    width: usize,
}

fn mul_add(bytes: &mut [u8], q: u32, digit: u32) {
    let mut carry = digit;
    for b in bytes.iter_mut() {
        let v = u32::from(*b) * q + carry;
        *b = (v & 0xff) as u8;
        carry = v >> 8;
    }
    debug_assert_eq!(carry, 0, "block width too small");
}

impl BytesCodec {
    pub fn new(q: u32, cells: usize) -> Self {
        // width of q^cells - 1, the largest block value
        let mut max = vec![0u8];
        for _ in 0..cells {
            let mut carry = q - 1;
            for b in max.iter_mut() {
                let v = u32::from(*b) * q + carry;
                *b = (v & 0xff) as u8;
                carry = v >> 8;
            }
            while carry > 0 {
                max.push((carry & 0xff) as u8);
                carry >>= 8;
            }
        }
        while max.len() > 1 && *max.last().expect("nonempty") == 0 {
            max.pop();
        }
        BytesCodec {
            q,
            width: max.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn write_block(&self, letters: &[Letter], out: &mut [u8]) {
        out.fill(0);
        for &l in letters.iter().rev() {
            mul_add(out, self.q, l.into());
        }
    }
}

impl KeyCodec for BytesCodec {
    type Key = Vec<u8>;

    fn encode(&self, plan: &TrajectoryPlan, layers: &[Vec<Letter>]) -> Vec<u8> {
        let mut payload = vec![0u8; self.width * plan.steps()];
        let mut letters = Vec::with_capacity(plan.observed_len());
        for (t, out) in payload.chunks_exact_mut(self.width).enumerate() {
            letters.clear();
            letters.extend(plan.observed(layers, t));
            self.write_block(&letters, out);
        }
        payload
    }

    fn prefix(&self, key: &Vec<u8>, steps: usize) -> Vec<u8> {
        key[..steps * self.width].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths() {
        assert_eq!(BytesCodec::new(2, 1).width(), 1);
        assert_eq!(BytesCodec::new(2, 8).width(), 1);
        assert_eq!(BytesCodec::new(2, 9).width(), 2);
        assert_eq!(BytesCodec::new(3, 5).width(), 1); // 242
        assert_eq!(BytesCodec::new(3, 6).width(), 2); // 728
        assert_eq!(BytesCodec::new(2, 0).width(), 1);
    }

    #[test]
    fn block_is_little_endian_index() {
        let c = BytesCodec::new(3, 6);
        let mut out = [0u8; 2];
        c.write_block(&[2, 1, 0, 0, 0, 2], &mut out);
        let v = 2 + 3 + 2 * 243;
        assert_eq!(out, [(v & 0xff) as u8, (v >> 8) as u8]);
    }

    #[test]
    fn packed_overflow() {
        assert!(PackedCodec::new(2, 64, 2).is_none());
        assert!(PackedCodec::new(2, 63, 2).is_some());
    }
}
