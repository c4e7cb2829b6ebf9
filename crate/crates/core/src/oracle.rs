//! Brute-force checks: re-solving under many weightings to look for a removed
//! feature that turns out active, and exhaustive corner enumeration for the
//! box maximizations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{dot, Dataset};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::screening::ScreeningReport;
use crate::solver::{fit_weighted_erm, FitConfig, GapTolerance};
use crate::uncertainty::{SampleMode, WeightBox, DEFAULT_CORNER_CAP};

/// A re-solved coefficient above this magnitude counts as active.
pub const ACTIVE_THRESHOLD: f64 = 1e-7;

/// Re-solve tolerance, relative to the intercept-only objective.
pub const RESOLVE_GAP: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub weight_hash: u64,
    pub weights: Vec<f64>,
    pub feature: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inconclusive {
    pub trial: usize,
    pub weight_hash: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationOutcome {
    pub trials: usize,
    pub corner_trials: usize,
    pub violations: Vec<Violation>,
    pub inconclusive: Vec<Inconclusive>,
    pub max_coefficient_on_removed: f64,
    /// Largest absolute gap target used across the re-solves.
    pub resolve_gap_used: f64,
}

impl VerificationOutcome {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.inconclusive.is_empty()
    }
}

/// FNV-1a over the bit patterns of the weights.
pub fn weight_hash(w: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in w {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Weightings to test: every corner when the box is small enough to
/// enumerate, otherwise `trials` draws alternating corner and interior.
fn trial_weights(wbox: &WeightBox, trials: usize, seed: u64) -> Result<(Vec<Vec<f64>>, usize)> {
    if wbox.delta() == 0.0 {
        return Ok((vec![vec![1.0; wbox.n()]], 1));
    }
    if wbox.n() <= DEFAULT_CORNER_CAP {
        let all: Vec<Vec<f64>> = wbox.corners(DEFAULT_CORNER_CAP)?.collect();
        let k = all.len();
        return Ok((all, k));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    let mut corners = 0;
    for t in 0..trials {
        let mode = if t % 2 == 0 {
            corners += 1;
            SampleMode::Corner
        } else {
            SampleMode::Interior
        };
        out.push(wbox.sample(&mut rng, mode));
    }
    Ok((out, corners))
}

enum TrialResult {
    Solved {
        coefficients: Vec<(usize, f64)>,
        tol: f64,
    },
    Failed(String),
}

/// Re-solves the weighted problem for many weightings in the box and records
/// every removed feature that comes back active.
#[allow(clippy::too_many_arguments)]
pub fn verify_no_false_elimination(
    ds: &Dataset,
    loss: LossKind,
    lambda: f64,
    wbox: &WeightBox,
    report: &ScreeningReport,
    trials: usize,
    seed: u64,
) -> Result<VerificationOutcome> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be >= 1".into()));
    }
    if report.removed.len() != ds.d() || wbox.n() != ds.n() {
        return Err(Error::Dimension(
            "report, dataset and weight box disagree".into(),
        ));
    }
    if report.lambda != lambda || report.delta != wbox.delta() {
        return Err(Error::Contract(
            "report was produced for a different lambda or box".into(),
        ));
    }
    let (weights, corner_trials) = trial_weights(wbox, trials, seed)?;
    let removed: Vec<usize> = (0..ds.d()).filter(|&j| report.removed[j]).collect();
    let cfg = FitConfig::default().with_gap_tolerance(GapTolerance::Relative(RESOLVE_GAP));

    let results: Vec<TrialResult> = weights
        .par_iter()
        .map(|w| match fit_weighted_erm(ds, w, loss, lambda, &cfg) {
            Ok(m) => TrialResult::Solved {
                coefficients: removed.iter().map(|&j| (j, m.b[j].abs())).collect(),
                tol: m.gap_tolerance,
            },
            Err(e) => TrialResult::Failed(e.to_string()),
        })
        .collect();

    let mut outcome = VerificationOutcome {
        trials: weights.len(),
        corner_trials,
        violations: Vec::new(),
        inconclusive: Vec::new(),
        max_coefficient_on_removed: 0.0,
        resolve_gap_used: 0.0,
    };
    for (trial, (w, r)) in weights.iter().zip(results).enumerate() {
        match r {
            TrialResult::Solved { coefficients, tol } => {
                outcome.resolve_gap_used = outcome.resolve_gap_used.max(tol);
                for (feature, c) in coefficients {
                    outcome.max_coefficient_on_removed = outcome.max_coefficient_on_removed.max(c);
                    if c > ACTIVE_THRESHOLD {
                        outcome.violations.push(Violation {
                            trial,
                            weight_hash: weight_hash(w),
                            weights: w.clone(),
                            feature,
                            coefficient: c,
                        });
                    }
                }
            }
            TrialResult::Failed(message) => outcome.inconclusive.push(Inconclusive {
                trial,
                weight_hash: weight_hash(w),
                message,
            }),
        }
    }
    Ok(outcome)
}

/// Exhaustive maximum of `c . w` (or `c . (w o w)`) over the box corners.
pub fn brute_force_max(c: &[f64], wbox: &WeightBox, squared: bool) -> Result<f64> {
    if c.len() != wbox.n() {
        return Err(Error::Dimension(format!(
            "vector of length {} for a box over {} weights",
            c.len(),
            wbox.n()
        )));
    }
    let mut best = f64::NEG_INFINITY;
    for w in wbox.corners(DEFAULT_CORNER_CAP)? {
        let v = if squared {
            c.iter().zip(&w).map(|(c, w)| c * w * w).sum()
        } else {
            dot(c, &w)
        };
        best = best.max(v);
    }
    Ok(best)
}

/// Largest `||w - 1||_1` over the box corners.
pub fn brute_force_v(wbox: &WeightBox) -> Result<f64> {
    let mut best = 0.0f64;
    for w in wbox.corners(DEFAULT_CORNER_CAP)? {
        best = best.max(w.iter().map(|v| (v - 1.0).abs()).sum());
    }
    Ok(best)
}
