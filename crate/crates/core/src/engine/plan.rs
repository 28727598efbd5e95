use crate::geometry::{minkowski_sum, CoordSet, Letter};

use super::{Automaton, Kernel};

#[derive(Debug, Clone)]
enum Eval {
    Xor {
        constant: Letter,
    },
    Affine {
        coefs: Vec<u32>,
        constant: u32,
        q: u32,
    },
    Lookup {
        weights: Vec<usize>,
        table: Vec<Letter>,
    },
}

/// Precomputed index arithmetic for evolving one observed set over a fixed
/// number of steps. Layer `t` holds `F^t(x)` on `B ⊕ K^(N-1-t)`.
#[derive(Debug, Clone)]
pub struct TrajectoryPlan {
    q: u32,
    domains: Vec<CoordSet>,
    arity: usize,
    gathers: Vec<Vec<u32>>,
    observe: Vec<Vec<u32>>,
    eval: Eval,
}

impl TrajectoryPlan {
    pub fn new(automaton: &Automaton, observed: &CoordSet, steps: u32) -> Self {
        let steps = steps.max(1) as usize;
        let k = automaton.step_kernel();
        let mut domains = vec![observed.clone()];
        for _ in 1..steps {
            let next = minkowski_sum(domains.last().expect("nonempty"), &k);
            domains.push(next);
        }
        domains.reverse();

        let positions = automaton.kernel().positions();
        let arity = positions.len();
        let gathers = (1..steps)
            .map(|t| {
                let (prev, cur) = (&domains[t - 1], &domains[t]);
                cur.iter()
                    .flat_map(|c| {
                        positions.iter().map(move |&v| {
                            prev.position(c.offset(v))
                                .expect("layer covers the neighbourhood")
                                as u32
                        })
                    })
                    .collect()
            })
            .collect();
        let observe = domains
            .iter()
            .map(|d| {
                observed
                    .iter()
                    .map(|c| d.position(c).expect("every layer contains B") as u32)
                    .collect()
            })
            .collect();

        let q = automaton.q();
        let eval = match automaton.kernel() {
            Kernel::Affine { constant, terms } if q == 2 && terms.iter().all(|t| t.1 == 1) => {
                Eval::Xor {
                    constant: *constant as Letter,
                }
            }
            Kernel::Affine { constant, terms } => Eval::Affine {
                coefs: terms.iter().map(|t| t.1).collect(),
                constant: *constant,
                q,
            },
            Kernel::Lookup { table, .. } => Eval::Lookup {
                weights: (0..arity).map(|k| (q as usize).pow(k as u32)).collect(),
                table: table.clone(),
            },
        };
        TrajectoryPlan {
            q,
            domains,
            arity,
            gathers,
            observe,
            eval,
        }
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn steps(&self) -> usize {
        self.domains.len()
    }

    /// The input window (layer 0).
    pub fn window(&self) -> &CoordSet {
        &self.domains[0]
    }

    pub fn observed_len(&self) -> usize {
        self.observe[0].len()
    }

    pub fn scratch(&self) -> Vec<Vec<Letter>> {
        self.domains.iter().map(|d| vec![0; d.len()]).collect()
    }

    /// Fills every layer from the letters of `input` on [`Self::window`].
    pub fn evolve(&self, input: &[Letter], layers: &mut [Vec<Letter>]) {
        layers[0].copy_from_slice(input);
        for t in 1..self.domains.len() {
            let (done, rest) = layers.split_at_mut(t);
            let prev = &done[t - 1];
            let cur = &mut rest[0];
            let gather = &self.gathers[t - 1];
            let a = self.arity;
            if a == 0 {
                let v = match &self.eval {
                    Eval::Xor { constant } => *constant,
                    Eval::Affine { constant, q, .. } => (constant % q) as Letter,
                    Eval::Lookup { table, .. } => table[0],
                };
                cur.fill(v);
                continue;
            }
            match &self.eval {
                Eval::Xor { constant } => {
                    for (slot, idx) in cur.iter_mut().zip(gather.chunks_exact(a)) {
                        *slot = idx.iter().fold(*constant, |acc, &k| acc ^ prev[k as usize]);
                    }
                }
                Eval::Affine { coefs, constant, q } => {
                    for (slot, idx) in cur.iter_mut().zip(gather.chunks_exact(a)) {
                        let s = idx.iter().zip(coefs).fold(*constant, |acc, (&k, &c)| {
                            acc + c * u32::from(prev[k as usize])
                        });
                        *slot = (s % q) as Letter;
                    }
                }
                Eval::Lookup { weights, table } => {
                    for (slot, idx) in cur.iter_mut().zip(gather.chunks_exact(a)) {
                        let i: usize = idx
                            .iter()
                            .zip(weights)
                            .map(|(&k, &w)| prev[k as usize] as usize * w)
                            .sum();
                        *slot = table[i];
                    }
                }
            }
        }
    }

    /// Letters of `F^t(x)` on `B`, canonical order.
    pub fn observed<'a>(
        &'a self,
        layers: &'a [Vec<Letter>],
        t: usize,
    ) -> impl Iterator<Item = Letter> + 'a {
        let layer = &layers[t];
        self.observe[t].iter().map(move |&k| layer[k as usize])
    }
}
