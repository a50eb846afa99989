//! Drawing post-states from reset relations `r(x, x') >= 0`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::poly::{CompiledPoly, Polynomial};
use crate::system::Bounds;

/// Rejection sampling in the box, falling back to Newton projection onto the
/// most violated inequality when the post-state set is thin (e.g. a point).
#[derive(Clone, Debug)]
pub struct ResetSampler {
    dim: usize,
    rel: Vec<CompiledPoly>,
    /// `grad[i][j] = d rel_i / d x'_j`.
    grad: Vec<Vec<CompiledPoly>>,
}

const REJECTION_TRIES: usize = 2000;
const PROJECTION_STARTS: usize = 20;
const PROJECTION_STEPS: usize = 200;
const ACCEPT_TOL: f64 = 1e-12;

impl ResetSampler {
    /// `rel` ranges over the state variables followed by their primed copies.
    pub fn new(dim: usize, rel: &[Polynomial]) -> Self {
        Self {
            dim,
            rel: rel.iter().map(Polynomial::compile).collect(),
            grad: rel.iter().map(|r| (0..dim).map(|j| r.derivative(dim + j).compile()).collect()).collect(),
        }
    }

    fn worst(&self, z: &[f64]) -> (usize, f64) {
        self.rel
            .iter()
            .enumerate()
            .map(|(i, r)| (i, r.eval(z)))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a })
    }

    /// A post-state for `pre`, or `None` when none was found in the box.
    pub fn draw(&self, pre: &[f64], bounds: &Bounds, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
        let n = self.dim;
        let mut z = pre.to_vec();
        z.resize(2 * n, 0.0);
        let uniform = |z: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
            for j in 0..n {
                let (l, h) = (bounds.lo[j], bounds.hi[j]);
                z[n + j] = if h > l { rng.gen_range(l..=h) } else { l };
            }
        };
        if self.rel.is_empty() {
            uniform(&mut z, rng);
            return Some(z[n..].to_vec());
        }
        for _ in 0..REJECTION_TRIES {
            uniform(&mut z, rng);
            if self.worst(&z).1 >= 0.0 {
                return Some(z[n..].to_vec());
            }
        }
        for _ in 0..PROJECTION_STARTS {
            uniform(&mut z, rng);
            for _ in 0..PROJECTION_STEPS {
                let (i, v) = self.worst(&z);
                if v >= -ACCEPT_TOL {
                    let post = z[n..].to_vec();
                    if bounds.contains(&post) {
                        return Some(post);
                    }
                    break;
                }
                let g: Vec<f64> = self.grad[i].iter().map(|d| d.eval(&z)).collect();
                let norm2: f64 = g.iter().map(|v| v * v).sum();
                if norm2 == 0.0 || !norm2.is_finite() {
                    break;
                }
                for j in 0..n {
                    z[n + j] -= v * g[j] / norm2;
                }
            }
        }
        None
    }
}
