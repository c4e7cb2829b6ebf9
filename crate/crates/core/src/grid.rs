//! Removed-feature ratios over a grid of uncertainty sizes and penalty levels.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::screening::{build_reference, screen};
use crate::solver::{fit_weighted_erm, lambda_max, FitConfig};
use crate::uncertainty::WeightBox;

/// Ratios are applied to `lambda_max * (1 + LAMBDA_MAX_MARGIN)`. At exactly
/// `lambda_max` the strict removal test cannot fire for the feature attaining
/// the maximum, so the whole grid is nudged up by this relative amount.
pub const LAMBDA_MAX_MARGIN: f64 = 1e-6;

pub fn lambda_from_ratio(ratio: f64, lambda_max: f64) -> Result<f64> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda ratio must be > 0, got {ratio}"
        )));
    }
    Ok(ratio * lambda_max * (1.0 + LAMBDA_MAX_MARGIN))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub v_values: Vec<f64>,
    pub lambda_ratios: Vec<f64>,
    pub loss: LossKind,
}

impl GridSpec {
    /// `V` in `{0, 1e-5, 1e-4.5, ..., 1}` and ratios `{1, 1e-0.5, ..., 1e-2}`.
    pub fn standard(loss: LossKind) -> Self {
        let v_values = std::iter::once(0.0)
            .chain((0..=10).map(|k| 10f64.powf(-5.0 + 0.5 * k as f64)))
            .collect();
        let lambda_ratios = (0..=4).map(|k| 10f64.powf(-0.5 * k as f64)).collect();
        Self {
            v_values,
            lambda_ratios,
            loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_values.is_empty() || self.lambda_ratios.is_empty() {
            return Err(Error::Parameter(
                "grid needs at least one V and one ratio".into(),
            ));
        }
        if let Some(v) = self
            .v_values
            .iter()
            .find(|v| !(**v >= 0.0 && v.is_finite()))
        {
            return Err(Error::Parameter(format!("V must be >= 0, got {v}")));
        }
        if let Some(r) = self
            .lambda_ratios
            .iter()
            .find(|r| !(**r > 0.0 && **r <= 1.0))
        {
            return Err(Error::Parameter(format!(
                "lambda ratio must lie in (0, 1], got {r}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    #[serde(rename = "V")]
    pub v: f64,
    pub delta: f64,
    pub lambda_ratio: f64,
    pub lambda: f64,
    pub removed_count: usize,
    pub removed_ratio: f64,
    pub gap_at_reference: f64,
}

pub const GRID_CSV_HEADER: &str =
    "V,delta,lambda_ratio,lambda,removed_count,removed_ratio,gap_at_reference";

/// One unit-weight fit per ratio, reused for every `V`. Rows come back
/// sorted by `V`, then by ratio.
pub fn run_grid(ds: &Dataset, spec: &GridSpec, config: &FitConfig) -> Result<Vec<GridRow>> {
    spec.validate()?;
    let loss = spec.loss;
    let ones = vec![1.0; ds.n()];
    let lmax = lambda_max(ds, &ones, loss)?;
    let boxes = spec
        .v_values
        .iter()
        .map(|&v| WeightBox::from_v(v, ds.n()).map(|b| (v, b)))
        .collect::<Result<Vec<_>>>()?;
    let per_ratio = spec
        .lambda_ratios
        .par_iter()
        .map(|&ratio| {
            let lambda = lambda_from_ratio(ratio, lmax)?;
            let model = fit_weighted_erm(ds, &ones, loss, lambda, config)?;
            boxes
                .iter()
                .map(|(v, wbox)| {
                    let reference = build_reference(&model, ds, loss, wbox)?;
                    let rep = screen(ds, &reference, lambda, wbox)?;
                    Ok(GridRow {
                        v: *v,
                        delta: wbox.delta(),
                        lambda_ratio: ratio,
                        lambda,
                        removed_count: rep.removed_count(),
                        removed_ratio: rep.removed_ratio(),
                        gap_at_reference: model.gap,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<GridRow> = per_ratio.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        a.v.total_cmp(&b.v)
            .then(a.lambda_ratio.total_cmp(&b.lambda_ratio))
    });
    Ok(rows)
}

pub fn write_grid_csv<W: Write>(rows: &[GridRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{GRID_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.v,
            r.delta,
            r.lambda_ratio,
            r.lambda,
            r.removed_count,
            r.removed_ratio,
            r.gap_at_reference
        )?;
    }
    Ok(())
}
