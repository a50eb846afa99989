//! Seeded rejection sampling of semialgebraic sets inside a finite box.
//!
//! The box is first refined by interval branch-and-prune: sub-boxes on which
//! some defining polynomial is certainly negative are discarded. Points are
//! then drawn uniformly from the surviving sub-boxes (weighted by volume) and
//! accepted when they satisfy every inequality, which keeps the distribution
//! uniform over the set while making thin sets cheap to hit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SemialgebraicSet;
use crate::poly::Polynomial;

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn cube(dim: usize, half_width: f64) -> Self {
        Self { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).product()
    }

    pub fn is_valid(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l.is_finite() && h.is_finite() && l <= h)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| *v >= *l && *v <= *h)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SampleError {
    #[error("set appears empty in box: no acceptance after {attempts} attempts")]
    AppearsEmpty { attempts: usize },
    #[error("invalid bounding box")]
    InvalidBounds,
}

#[derive(Clone, Debug)]
pub struct Samples {
    pub points: Vec<Vec<f64>>,
    pub attempts: usize,
}

impl Samples {
    pub fn acceptance_rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.points.len() as f64 / self.attempts as f64
        }
    }
}

type IntervalTerm = (f64, Vec<(usize, i32)>);

fn pow_interval(lo: f64, hi: f64, e: i32) -> (f64, f64) {
    let a = lo.powi(e);
    let b = hi.powi(e);
    if e % 2 == 0 {
        if lo <= 0.0 && hi >= 0.0 {
            (0.0, a.max(b))
        } else {
            (a.min(b), a.max(b))
        }
    } else {
        (a, b)
    }
}

fn interval_eval(terms: &[IntervalTerm], lo: &[f64], hi: &[f64]) -> (f64, f64) {
    let (mut sl, mut sh) = (0.0, 0.0);
    for (c, m) in terms {
        let (mut tl, mut th) = (1.0f64, 1.0f64);
        for &(v, e) in m {
            let (pl, ph) = pow_interval(lo[v], hi[v], e);
            let cands = [tl * pl, tl * ph, th * pl, th * ph];
            tl = cands.iter().copied().fold(f64::INFINITY, f64::min);
            th = cands.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let (a, b) = (c * tl, c * th);
        sl += a.min(b);
        sh += a.max(b);
    }
    // widen by a relative margin so rounding never prunes a feasible box
    let pad = 1e-9 * (sl.abs().max(sh.abs()) + 1.0);
    (sl - pad, sh + pad)
}

fn compile_terms(p: &Polynomial) -> Vec<IntervalTerm> {
    p.terms()
        .iter()
        .map(|(m, c)| (crate::poly::rational::to_f64(c), m.iter().map(|(v, e)| (v, e as i32)).collect()))
        .collect()
}

/// Prepared sampler for one set and box; reusable across many draws.
#[derive(Clone, Debug)]
pub struct BoxSampler {
    polys: Vec<crate::poly::CompiledPoly>,
    leaves: Vec<Bounds>,
    cumulative: Vec<f64>,
    empty: bool,
}

impl BoxSampler {
    /// Refines `bounds` into at most roughly `max_leaves` candidate sub-boxes.
    pub fn new(set: &SemialgebraicSet, bounds: &Bounds, max_leaves: usize) -> Result<Self, SampleError> {
        if !bounds.is_valid() {
            return Err(SampleError::InvalidBounds);
        }
        let polys = match set {
            SemialgebraicSet::Empty => {
                return Ok(Self { polys: Vec::new(), leaves: Vec::new(), cumulative: Vec::new(), empty: true })
            }
            SemialgebraicSet::Region(p) => p,
        };
        let interval_polys: Vec<Vec<IntervalTerm>> = polys.iter().map(compile_terms).collect();
        // (box, decided-inside)
        let mut frontier: Vec<(Bounds, bool)> = vec![(bounds.clone(), false)];
        let max_depth = 24;
        for _ in 0..max_depth {
            let undecided = frontier.iter().filter(|(_, inside)| !inside).count();
            if undecided == 0 || frontier.len() + undecided > max_leaves {
                break;
            }
            let mut next = Vec::with_capacity(frontier.len() + undecided);
            for (b, inside) in frontier {
                if inside {
                    next.push((b, true));
                    continue;
                }
                let axis =
                    (0..b.dim()).max_by(|&i, &j| (b.hi[i] - b.lo[i]).total_cmp(&(b.hi[j] - b.lo[j]))).unwrap_or(0);
                let mid = 0.5 * (b.lo[axis] + b.hi[axis]);
                let mut left = b.clone();
                left.hi[axis] = mid;
                let mut right = b;
                right.lo[axis] = mid;
                for child in [left, right] {
                    let mut keep = true;
                    let mut all_inside = true;
                    for terms in &interval_polys {
                        let (lo, hi) = interval_eval(terms, &child.lo, &child.hi);
                        if hi < 0.0 {
                            keep = false;
                            break;
                        }
                        if lo < 0.0 {
                            all_inside = false;
                        }
                    }
                    if keep {
                        next.push((child, all_inside));
                    }
                }
            }
            frontier = next;
        }
        let leaves: Vec<Bounds> = frontier.into_iter().map(|(b, _)| b).collect();
        let mut cumulative = Vec::with_capacity(leaves.len());
        let mut acc = 0.0;
        for b in &leaves {
            acc += b.volume();
            cumulative.push(acc);
        }
        let empty = leaves.is_empty();
        Ok(Self { polys: polys.iter().map(Polynomial::compile).collect(), leaves, cumulative, empty })
    }

    /// True when branch-and-prune proved the set empty inside the box.
    pub fn provably_empty(&self) -> bool {
        self.empty
    }

    fn draw_candidate(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let leaf = if total > 0.0 {
            let r = rng.gen::<f64>() * total;
            self.cumulative.partition_point(|&c| c <= r).min(self.leaves.len() - 1)
        } else {
            rng.gen_range(0..self.leaves.len())
        };
        let b = &self.leaves[leaf];
        b.lo.iter().zip(&b.hi).map(|(&l, &h)| if h > l { rng.gen_range(l..=h) } else { l }).collect()
    }

    /// Draws up to `count` members using at most `max_attempts` candidates.
    pub fn sample(&self, count: usize, max_attempts: usize, rng: &mut ChaCha8Rng) -> Result<Samples, SampleError> {
        if count == 0 {
            return Ok(Samples { points: Vec::new(), attempts: 0 });
        }
        if self.empty {
            return Err(SampleError::AppearsEmpty { attempts: 0 });
        }
        let mut points = Vec::with_capacity(count);
        let mut attempts = 0;
        while points.len() < count && attempts < max_attempts {
            attempts += 1;
            let x = self.draw_candidate(rng);
            if self.polys.iter().all(|p| p.eval(&x) >= 0.0) {
                points.push(x);
            }
        }
        if points.is_empty() {
            return Err(SampleError::AppearsEmpty { attempts });
        }
        Ok(Samples { points, attempts })
    }
}

/// Seeded rejection sampling of `set ∩ bounds`. May return fewer than `count`
/// points when the attempt budget runs out.
pub fn sample(set: &SemialgebraicSet, bounds: &Bounds, count: usize, seed: u64) -> Result<Samples, SampleError> {
    let sampler = BoxSampler::new(set, bounds, 4096)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sampler.sample(count, 2000 * count.max(1) + 100_000, &mut rng)
}
