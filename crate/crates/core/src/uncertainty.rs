//! The admissible weight set
//! `{ w in [1 - delta, 1 + delta]^n : sum_i w_i = n }` and maximization over it.
//!
//! Any convex function of `w` attains its maximum over this polytope at a
//! corner. Corners have `floor(n/2)` entries at `1 - delta`, `floor(n/2)` at
//! `1 + delta` and, for odd `n`, a single entry at `1`. Pairing a sorted
//! coefficient vector with the sorted corner (rearrangement inequality) then
//! gives the maximum of linear and squared-linear forms in `O(n log n)`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `n` for which [`WeightBox::corners`] enumerates exhaustively.
pub const DEFAULT_CORNER_CAP: usize = 12;

const CONTAINS_BOUND_TOL: f64 = 1e-12;
const CONTAINS_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightBox {
    n: usize,
    delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// A uniformly random permutation of the worst-case corner.
    Corner,
    /// A centered, shrunk uniform draw from the cube, projected onto the sum constraint.
    Interior,
}

/// Converts a total-variation budget `V = max ||w - 1||_1` into the per-weight bound.
pub fn delta_from_v(v: f64, n: usize) -> Result<f64> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::Parameter(format!(
            "V must be finite and >= 0, got {v}"
        )));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be positive".into()));
    }
    let denom = if n.is_multiple_of(2) { n } else { n - 1 };
    let delta = if v == 0.0 {
        0.0
    } else if denom == 0 {
        // A single weight cannot move; any positive budget is unreachable.
        f64::INFINITY
    } else {
        v / denom as f64
    };
    if delta >= 1.0 {
        return Err(Error::UncertaintyOverflow { delta });
    }
    Ok(delta)
}

/// Sum with Neumaier compensation.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

impl WeightBox {
    pub fn new(n: usize, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("weight box needs n >= 1".into()));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Parameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(Self { n, delta })
    }

    pub fn from_v(v: f64, n: usize) -> Result<Self> {
        Self::new(n, delta_from_v(v, n)?)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `max ||w - 1||_1` over the box: `n delta` (even `n`) or `(n - 1) delta` (odd).
    pub fn v(&self) -> f64 {
        let m = if self.n.is_multiple_of(2) {
            self.n
        } else {
            self.n - 1
        };
        m as f64 * self.delta
    }

    fn half(&self) -> usize {
        self.n / 2
    }

    /// The ascending corner `w#`.
    pub fn worst_case_weights(&self) -> Vec<f64> {
        let h = self.half();
        let mut w = vec![1.0; self.n];
        w[..h].fill(1.0 - self.delta);
        w[self.n - h..].fill(1.0 + self.delta);
        w
    }

    fn check_len(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.n {
            return Err(Error::Dimension(format!(
                "vector of length {} for a box of size {}",
                c.len(),
                self.n
            )));
        }
        Ok(())
    }

    fn sorted_pairing(&self, c: &[f64], squared: bool) -> Result<f64> {
        self.check_len(c)?;
        let mut sorted = c.to_vec();
        sorted.sort_by(f64::total_cmp);
        let h = self.half();
        let (lo, hi) = if squared {
            ((1.0 - self.delta).powi(2), (1.0 + self.delta).powi(2))
        } else {
            (1.0 - self.delta, 1.0 + self.delta)
        };
        let n = self.n;
        Ok(compensated_sum(sorted.iter().enumerate().map(|(i, &v)| {
            if i < h {
                lo * v
            } else if i >= n - h {
                hi * v
            } else {
                v
            }
        })))
    }

    /// `max_w c . w`.
    pub fn max_linear(&self, c: &[f64]) -> Result<f64> {
        self.sorted_pairing(c, false)
    }

    /// `max_w c . (w o w)`, valid for nonnegative `c`.
    pub fn max_linear_squared(&self, c: &[f64]) -> Result<f64> {
        self.sorted_pairing(c, true)
    }

    /// Number of distinct extreme points.
    pub fn corner_count(&self) -> u128 {
        if self.delta == 0.0 || self.n == 1 {
            return 1;
        }
        let n = self.n as u128;
        if self.n.is_multiple_of(2) {
            binomial(n, n / 2)
        } else {
            n * binomial(n - 1, (n - 1) / 2)
        }
    }

    /// Enumerates every extreme point once; refuses `n` above `cap`.
    pub fn corners(&self, cap: usize) -> Result<Corners> {
        if self.n > cap || self.n > 31 {
            return Err(Error::TooManyCorners { n: self.n, cap });
        }
        Ok(Corners::new(*self))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mode: SampleMode) -> Vec<f64> {
        if self.delta == 0.0 {
            return vec![1.0; self.n];
        }
        match mode {
            SampleMode::Corner => {
                let mut w = self.worst_case_weights();
                w.shuffle(rng);
                w
            }
            SampleMode::Interior => {
                let d = self.delta;
                let mut u: Vec<f64> = (0..self.n).map(|_| rng.random_range(-d..=d)).collect();
                let mean = u.iter().sum::<f64>() / self.n as f64;
                u.iter_mut().for_each(|v| *v -= mean);
                let peak = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = if peak > d { d / peak } else { 1.0 };
                u.into_iter().map(|v| 1.0 + scale * v).collect()
            }
        }
    }

    pub fn contains(&self, w: &[f64]) -> Result<bool> {
        self.check_len(w)?;
        let lo = 1.0 - self.delta - CONTAINS_BOUND_TOL;
        let hi = 1.0 + self.delta + CONTAINS_BOUND_TOL;
        let in_bounds = w.iter().all(|&v| v >= lo && v <= hi);
        let sum: f64 = w.iter().sum();
        Ok(in_bounds && (sum - self.n as f64).abs() <= CONTAINS_SUM_TOL * self.n as f64)
    }
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

/// Lazy iterator over the extreme points of a [`WeightBox`].
#[derive(Debug, Clone)]
pub struct Corners {
    weight_box: WeightBox,
    /// Index of the entry held at 1 (odd `n` only).
    middle: usize,
    mask: u32,
    done: bool,
}

impl Corners {
    fn new(weight_box: WeightBox) -> Self {
        Self {
            weight_box,
            middle: 0,
            mask: 0,
            done: false,
        }
    }

    fn degenerate(&self) -> bool {
        self.weight_box.delta == 0.0 || self.weight_box.n == 1
    }
}

impl Iterator for Corners {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let n = self.weight_box.n;
        if self.degenerate() {
            self.done = true;
            return Some(vec![1.0; n]);
        }
        let half = (n / 2) as u32;
        let odd = n % 2 == 1;
        let limit = 1u32 << n;
        loop {
            if self.mask >= limit {
                if odd && self.middle + 1 < n {
                    self.middle += 1;
                    self.mask = 0;
                    continue;
                }
                self.done = true;
                return None;
            }
            let mask = self.mask;
            self.mask += 1;
            if mask.count_ones() != half || (odd && mask & (1 << self.middle) != 0) {
                continue;
            }
            let d = self.weight_box.delta;
            let w = (0..n)
                .map(|i| {
                    if odd && i == self.middle {
                        1.0
                    } else if mask & (1 << i) != 0 {
                        1.0 + d
                    } else {
                        1.0 - d
                    }
                })
                .collect();
            return Some(w);
        }
    }
}
