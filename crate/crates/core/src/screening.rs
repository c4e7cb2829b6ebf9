//! Feature elimination that holds for every weighting in a [`WeightBox`].
//!
//! A single fit at uniform weights serves as the reference. For any weighting
//! `w` in the box, `a_hat = q * a* / w` is dual feasible for the weighted
//! problem, so the weighted dual optimum sits in a ball around it. Bounding
//! the ball's contribution over the whole box gives a per-feature quantity
//! that, when below `lambda`, forces the coefficient to zero for every `w`.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{dot, Dataset};
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::solver::{duality_gap, FittedModel};
use crate::uncertainty::WeightBox;

/// Relative margin applied to the strict `bound < lambda` test.
pub const REMOVAL_MARGIN: f64 = 1e-12;

/// Uniform-weight solution plus the quantities reused by every bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferencePair {
    pub b: Vec<f64>,
    pub b0: f64,
    pub alpha_star: Vec<f64>,
    pub q: f64,
    pub losses_at_optimum: Vec<f64>,
    pub lambda: f64,
    pub delta: f64,
    pub loss: LossKind,
    pub gap: f64,
}

impl ReferencePair {
    /// Dual point scaled for weighting `w`: `q * a*_i / w_i`.
    pub fn scaled_dual(&self, w: &[f64]) -> Vec<f64> {
        self.alpha_star
            .iter()
            .zip(w)
            .map(|(a, w)| self.q * a / w)
            .collect()
    }
}

pub fn build_reference(
    model: &FittedModel,
    ds: &Dataset,
    loss: LossKind,
    wbox: &WeightBox,
) -> Result<ReferencePair> {
    if !model.has_unit_weights() {
        return Err(Error::Contract(
            "reference model must be fit with unit weights".into(),
        ));
    }
    if model.loss_kind != loss {
        return Err(Error::Contract(format!(
            "reference model was fit with {} loss, not {loss}",
            model.loss_kind
        )));
    }
    if model.b.len() != ds.d() || model.alpha.len() != ds.n() || wbox.n() != ds.n() {
        return Err(Error::Dimension(
            "reference model, dataset and weight box disagree".into(),
        ));
    }
    let q = loss.feasibility_q(wbox.delta())?;
    for (i, (&y, &a)) in ds.y().iter().zip(&model.alpha).enumerate() {
        if loss.conjugate_neg(y, a).is_err() {
            return Err(Error::DualInfeasible { instance: i });
        }
    }
    let t = ds.x().margins(&model.b, model.b0);
    let losses_at_optimum = ds
        .y()
        .iter()
        .zip(&t)
        .map(|(&y, &t)| loss.value(y, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferencePair {
        b: model.b.clone(),
        b0: model.b0,
        alpha_star: model.alpha.clone(),
        q,
        losses_at_optimum,
        lambda: model.lambda,
        delta: wbox.delta(),
        loss,
        gap: model.gap,
    })
}

pub fn dg_radius(gap: f64, nu: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::Parameter(format!(
            "delta must lie in [0, 1), got {delta}"
        )));
    }
    if gap < 0.0 || gap.is_nan() {
        return Err(Error::Parameter(format!("gap must be >= 0, got {gap}")));
    }
    Ok((2.0 * nu * gap / (1.0 - delta)).sqrt())
}

/// Per-instance worst case of `l_i + l*(y_i, -q a*_i / w_i)` over `w_i` in
/// `[1 - delta, 1 + delta]`; the conjugate term is convex in `1/w_i` so the
/// endpoints suffice.
pub fn rho_vector(reference: &ReferencePair, ds: &Dataset) -> Result<Vec<f64>> {
    let loss = reference.loss;
    let (q, delta) = (reference.q, reference.delta);
    ds.y()
        .iter()
        .zip(&reference.alpha_star)
        .zip(&reference.losses_at_optimum)
        .enumerate()
        .map(|(i, ((&y, &a), &l))| {
            let lo = loss.conjugate_neg(y, q * a / (1.0 + delta));
            let hi = loss.conjugate_neg(y, q * a / (1.0 - delta));
            match (lo, hi) {
                (Ok(lo), Ok(hi)) => Ok(l + lo.max(hi)),
                _ => Err(Error::DualInfeasible { instance: i }),
            }
        })
        .collect()
}

/// Quantities shared by every feature's bound.
struct Shared {
    /// `2 nu / (1 - delta) * (max_w sum w rho + lambda ||b*||_1)`, clamped at 0.
    gap_factor: f64,
}

fn shared(reference: &ReferencePair, ds: &Dataset, wbox: &WeightBox) -> Result<Shared> {
    let rho = rho_vector(reference, ds)?;
    let g_max = wbox.max_linear(&rho)?
        + reference.lambda * reference.b.iter().map(|v| v.abs()).sum::<f64>();
    let gap_factor = 2.0 * reference.loss.nu() / (1.0 - wbox.delta()) * g_max.max(0.0);
    Ok(Shared { gap_factor })
}

fn feature_bound(
    j: usize,
    reference: &ReferencePair,
    ds: &Dataset,
    wbox: &WeightBox,
    sh: &Shared,
) -> Result<f64> {
    let col = ds.x().column(j);
    let lin = reference.q * dot(&reference.alpha_star, col).abs();
    let sq: Vec<f64> = col.iter().map(|x| x * x).collect();
    let norm = wbox.max_linear_squared(&sq)?.max(0.0);
    Ok(lin + (norm * sh.gap_factor).sqrt())
}

fn check_reference(reference: &ReferencePair, ds: &Dataset, wbox: &WeightBox) -> Result<()> {
    if reference.b.len() != ds.d() || reference.alpha_star.len() != ds.n() || wbox.n() != ds.n() {
        return Err(Error::Dimension(
            "reference pair, dataset and weight box disagree".into(),
        ));
    }
    if reference.delta != wbox.delta() {
        return Err(Error::Contract(format!(
            "reference built for delta = {}, box has delta = {}",
            reference.delta,
            wbox.delta()
        )));
    }
    Ok(())
}

/// Upper bound on `|sum_i w_i a_i^(w) x_ij|` valid for every `w` in the box.
pub fn dr_upper_bound(
    j: usize,
    reference: &ReferencePair,
    ds: &Dataset,
    wbox: &WeightBox,
) -> Result<f64> {
    check_reference(reference, ds, wbox)?;
    if j >= ds.d() {
        return Err(Error::Dimension(format!(
            "feature {j} out of range for d = {}",
            ds.d()
        )));
    }
    let sh = shared(reference, ds, wbox)?;
    feature_bound(j, reference, ds, wbox, &sh)
}

/// The same bound for one fixed weighting, using the weighted duality gap at
/// the reference pair.
pub fn ub_for_weight(
    j: usize,
    w: &[f64],
    reference: &ReferencePair,
    ds: &Dataset,
    wbox: &WeightBox,
) -> Result<f64> {
    check_reference(reference, ds, wbox)?;
    if !wbox.contains(w)? {
        return Err(Error::Parameter(
            "weight vector lies outside the box".into(),
        ));
    }
    let alpha_hat = reference.scaled_dual(w);
    let gap = duality_gap(
        ds,
        w,
        reference.loss,
        reference.lambda,
        &reference.b,
        reference.b0,
        &alpha_hat,
    )?;
    let col = ds.x().column(j);
    let lin: f64 = col
        .iter()
        .zip(w)
        .zip(&alpha_hat)
        .map(|((x, w), a)| w * a * x)
        .sum::<f64>()
        .abs();
    let norm: f64 = col.iter().zip(w).map(|(x, w)| w * w * x * x).sum();
    Ok(lin + (norm * 2.0 * reference.loss.nu() / (1.0 - wbox.delta()) * gap).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningReport {
    pub lambda: f64,
    pub delta: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub bounds: Vec<f64>,
    pub removed: Vec<bool>,
    pub gap_at_reference: f64,
    pub q: f64,
    pub nu: f64,
}

impl ScreeningReport {
    pub fn removed_count(&self) -> usize {
        self.removed.iter().filter(|&&r| r).count()
    }

    pub fn removed_ratio(&self) -> f64 {
        self.removed_count() as f64 / self.removed.len() as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,bound,removed")?;
        for (j, (b, r)) in self.bounds.iter().zip(&self.removed).enumerate() {
            writeln!(out, "{j},{b},{r}")?;
        }
        Ok(())
    }
}

pub fn is_removed(bound: f64, lambda: f64) -> bool {
    bound < lambda * (1.0 - REMOVAL_MARGIN)
}

pub fn screen(
    ds: &Dataset,
    reference: &ReferencePair,
    lambda: f64,
    wbox: &WeightBox,
) -> Result<ScreeningReport> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    check_reference(reference, ds, wbox)?;
    if (lambda - reference.lambda).abs() > 1e-12 * lambda {
        return Err(Error::Contract(format!(
            "reference fit at lambda = {}, screening at {lambda}",
            reference.lambda
        )));
    }
    let sh = shared(reference, ds, wbox)?;
    let bounds = (0..ds.d())
        .into_par_iter()
        .map(|j| feature_bound(j, reference, ds, wbox, &sh))
        .collect::<Result<Vec<_>>>()?;
    let removed = bounds.iter().map(|&b| is_removed(b, lambda)).collect();
    Ok(ScreeningReport {
        lambda,
        delta: wbox.delta(),
        v: wbox.v(),
        bounds,
        removed,
        gap_at_reference: reference.gap,
        q: reference.q,
        nu: reference.loss.nu(),
    })
}
