//! Weighted L1-regularized ERM with an unpenalized intercept
//!
//! ```text
//! P(b, b0) = sum_i w_i l(y_i, x_i . b + b0) + lambda ||b||_1
//! D(a)     = -sum_i w_i l*(y_i, -a_i)
//!            s.t. ||sum_i w_i a_i x_i||_inf <= lambda,  sum_i w_i a_i = 0
//! ```
//!
//! No `1/n` or `1/2` factors are applied anywhere; the screening bounds rely on
//! exactly this scaling.
//!
//! The solver runs accelerated proximal gradient on `b` against the smooth
//! function `F(b) = min_{b0} sum_i w_i l(y_i, x_i . b + b0)`, so each gradient
//! evaluation includes an exact intercept step. Once the signed support stops
//! changing, a Newton step restricted to that support is attempted to reach
//! machine-precision optimality. Termination is certified by a duality gap
//! computed from a repaired (feasible) dual point.

use serde::Serialize;

use crate::dataset::{dot, Dataset, DesignMatrix};
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::losses::LossKind;

/// Gap values in `[-GAP_CLAMP * max(1, P), 0)` are reported as zero.
pub const GAP_CLAMP: f64 = 1e-12;

/// Relative slack used when checking the `l_inf` dual constraint.
pub const DUAL_FEASIBILITY_SLACK: f64 = 1e-10;

const CHECK_EVERY: usize = 10;
const POLISH_WORK_LIMIT: f64 = 5e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GapTolerance {
    Absolute(f64),
    /// Multiplied by `max(1, P(0, b0_null))`, the intercept-only objective.
    Relative(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub gap_tolerance: GapTolerance,
    /// `|sum_i w_i a_i|` target for the logistic intercept step; `None` means `1e-10 n`.
    pub eq_tolerance: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            gap_tolerance: GapTolerance::Relative(1e-9),
            eq_tolerance: None,
            max_iterations: 100_000,
        }
    }
}

impl FitConfig {
    pub fn with_gap_tolerance(mut self, tol: GapTolerance) -> Self {
        self.gap_tolerance = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        let g = match self.gap_tolerance {
            GapTolerance::Absolute(g) | GapTolerance::Relative(g) => g,
        };
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::Parameter(format!(
                "gap tolerance must be > 0, got {g}"
            )));
        }
        if let Some(e) = self.eq_tolerance {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::Parameter(format!(
                    "eq tolerance must be > 0, got {e}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    pub b: Vec<f64>,
    pub b0: f64,
    /// Dual point after feasibility repair.
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub weights: Vec<f64>,
    /// Duality gap certified for `(b, b0, alpha)`.
    pub gap: f64,
    /// Absolute gap target the fit was run against.
    pub gap_tolerance: f64,
    pub loss_kind: LossKind,
    pub iterations: usize,
}

impl FittedModel {
    /// Indices of nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        self.b
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }
}

/// Dual objective value, with `Infeasible` standing in for `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DualValue {
    Finite(f64),
    Infeasible { instance: usize },
}

impl DualValue {
    pub fn value(self) -> f64 {
        match self {
            DualValue::Finite(v) => v,
            DualValue::Infeasible { .. } => f64::NEG_INFINITY,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, DualValue::Finite(_))
    }
}

fn check_weights(ds: &Dataset, w: &[f64]) -> Result<()> {
    if w.len() != ds.n() {
        return Err(Error::Dimension(format!(
            "{} weights for {} instances",
            w.len(),
            ds.n()
        )));
    }
    if let Some(bad) = w.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter(format!(
            "weights must be positive, got {bad}"
        )));
    }
    Ok(())
}

fn check_labels(ds: &Dataset, loss: LossKind) -> Result<()> {
    ds.y().iter().try_for_each(|&y| loss.check_label(y))
}

fn check_coefficients(ds: &Dataset, b: &[f64]) -> Result<()> {
    if b.len() != ds.d() {
        return Err(Error::Dimension(format!(
            "{} coefficients for {} features",
            b.len(),
            ds.d()
        )));
    }
    Ok(())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!(
            "lambda must be > 0, got {lambda}"
        )));
    }
    Ok(())
}

fn l1(b: &[f64]) -> f64 {
    b.iter().map(|v| v.abs()).sum()
}

pub fn primal_objective(
    ds: &Dataset,
    weights: &[f64],
    loss: LossKind,
    lambda: f64,
    b: &[f64],
    b0: f64,
) -> Result<f64> {
    check_weights(ds, weights)?;
    check_coefficients(ds, b)?;
    check_labels(ds, loss)?;
    let t = ds.x().margins(b, b0);
    let data: f64 = ds
        .y()
        .iter()
        .zip(&t)
        .zip(weights)
        .map(|((&y, &t), &w)| w * loss.value_unchecked(y, t))
        .sum();
    Ok(data + lambda * l1(b))
}

pub fn dual_objective(
    ds: &Dataset,
    weights: &[f64],
    loss: LossKind,
    alpha: &[f64],
) -> Result<DualValue> {
    check_weights(ds, weights)?;
    if alpha.len() != ds.n() {
        return Err(Error::Dimension(format!(
            "{} dual variables for {} instances",
            alpha.len(),
            ds.n()
        )));
    }
    let mut total = 0.0;
    for (i, ((&y, &a), &w)) in ds.y().iter().zip(alpha).zip(weights).enumerate() {
        match loss.conjugate_neg(y, a) {
            Ok(v) => total += w * v,
            Err(Error::ConjugateDomain { .. }) => return Ok(DualValue::Infeasible { instance: i }),
            Err(e) => return Err(e),
        }
    }
    Ok(DualValue::Finite(-total))
}

/// Intercept of the model with `b = 0`.
pub fn null_intercept(ds: &Dataset, weights: &[f64], loss: LossKind) -> Result<f64> {
    check_weights(ds, weights)?;
    check_labels(ds, loss)?;
    match loss {
        LossKind::Squared => {
            let sw: f64 = weights.iter().sum();
            Ok(ds.y().iter().zip(weights).map(|(y, w)| y * w).sum::<f64>() / sw)
        }
        LossKind::Logistic => {
            let (mut pos, mut neg) = (0.0, 0.0);
            for (&y, &w) in ds.y().iter().zip(weights) {
                if y > 0.0 {
                    pos += w;
                } else {
                    neg += w;
                }
            }
            if pos == 0.0 || neg == 0.0 {
                return Err(Error::SingleClass);
            }
            Ok(pos.ln() - neg.ln())
        }
    }
}

/// Smallest `lambda` at which the optimal coefficient vector is zero.
pub fn lambda_max(ds: &Dataset, weights: &[f64], loss: LossKind) -> Result<f64> {
    let b0 = null_intercept(ds, weights, loss)?;
    let wa: Vec<f64> = ds
        .y()
        .iter()
        .zip(weights)
        .map(|(&y, &w)| w * loss.dual_from_margin_unchecked(y, b0))
        .collect();
    Ok(ds
        .x()
        .columns()
        .map(|col| dot(col, &wa).abs())
        .fold(0.0, f64::max))
}

/// Dual point matched to `(b, b0)`, repaired to satisfy the dual constraints.
///
/// Squared loss: shifted so that `sum_i w_i a_i = 0`. Both losses: scaled by
/// `lambda / max(lambda, ||X^T (w o a)||_inf)`. For the logistic loss the
/// equality constraint is only as good as the intercept supplied.
pub fn recover_dual(
    ds: &Dataset,
    weights: &[f64],
    loss: LossKind,
    lambda: f64,
    b: &[f64],
    b0: f64,
) -> Result<Vec<f64>> {
    check_weights(ds, weights)?;
    check_coefficients(ds, b)?;
    check_labels(ds, loss)?;
    check_lambda(lambda)?;
    let t = ds.x().margins(b, b0);
    Ok(repaired_dual(ds.x(), ds.y(), weights, loss, lambda, &t).0)
}

/// Returns the repaired dual and `X^T (w o a)` at the repaired point.
fn repaired_dual(
    x: &DesignMatrix,
    y: &[f64],
    w: &[f64],
    loss: LossKind,
    lambda: f64,
    t: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let mut alpha: Vec<f64> = y
        .iter()
        .zip(t)
        .map(|(&y, &t)| loss.dual_from_margin_unchecked(y, t))
        .collect();
    if loss == LossKind::Squared {
        let sw: f64 = w.iter().sum();
        let shift = -alpha.iter().zip(w).map(|(a, w)| a * w).sum::<f64>() / sw;
        alpha.iter_mut().for_each(|a| *a += shift);
    }
    let wa: Vec<f64> = alpha.iter().zip(w).map(|(a, w)| a * w).collect();
    let mut corr = x.transpose_mul(&wa);
    let peak = corr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > lambda {
        let s = lambda / peak;
        alpha.iter_mut().for_each(|a| *a *= s);
        corr.iter_mut().for_each(|c| *c *= s);
    }
    (alpha, corr)
}

/// `P(b, b0) - D(alpha)` for a dual-feasible `alpha`.
///
/// Evaluated as `sum_i w_i FY_i + sum_j (lambda |b_j| - b_j c_j) - b0 sum_i w_i a_i`
/// with `FY_i` the Fenchel-Young residual and `c = X^T (w o a)`. Every term is
/// small and nonnegative near optimality, so this avoids the cancellation of
/// subtracting two large objective values.
#[allow(clippy::too_many_arguments)]
pub fn duality_gap(
    ds: &Dataset,
    weights: &[f64],
    loss: LossKind,
    lambda: f64,
    b: &[f64],
    b0: f64,
    alpha: &[f64],
) -> Result<f64> {
    check_weights(ds, weights)?;
    check_coefficients(ds, b)?;
    check_labels(ds, loss)?;
    check_lambda(lambda)?;
    if alpha.len() != ds.n() {
        return Err(Error::Dimension(format!(
            "{} dual variables for {} instances",
            alpha.len(),
            ds.n()
        )));
    }
    let t = ds.x().margins(b, b0);
    let wa: Vec<f64> = alpha.iter().zip(weights).map(|(a, w)| a * w).collect();
    let corr = ds.x().transpose_mul(&wa);
    let peak = corr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > lambda * (1.0 + DUAL_FEASIBILITY_SLACK) {
        let j = corr.iter().position(|c| c.abs() == peak).unwrap_or(0);
        return Err(Error::Contract(format!(
            "dual point violates the l_inf constraint at feature {j} ({peak} > {lambda})"
        )));
    }
    let primal: f64 = ds
        .y()
        .iter()
        .zip(&t)
        .zip(weights)
        .map(|((&y, &t), &w)| w * loss.value_unchecked(y, t))
        .sum::<f64>()
        + lambda * l1(b);
    raw_gap(ds.y(), weights, loss, lambda, b, b0, &t, alpha, &corr).map(|g| clamp_gap(g, primal))
}

fn clamp_gap(g: f64, primal: f64) -> f64 {
    if (-GAP_CLAMP * primal.abs().max(1.0)..0.0).contains(&g) {
        0.0
    } else {
        g
    }
}

#[allow(clippy::too_many_arguments)]
fn raw_gap(
    y: &[f64],
    w: &[f64],
    loss: LossKind,
    lambda: f64,
    b: &[f64],
    b0: f64,
    t: &[f64],
    alpha: &[f64],
    corr: &[f64],
) -> Result<f64> {
    let mut fy = 0.0;
    let mut sum_wa = 0.0;
    for i in 0..y.len() {
        match loss.fenchel_young_residual(y[i], t[i], alpha[i]) {
            Ok(r) => fy += w[i] * r,
            Err(Error::ConjugateDomain { .. }) => {
                return Err(Error::DualInfeasible { instance: i })
            }
            Err(e) => return Err(e),
        }
        sum_wa += w[i] * alpha[i];
    }
    let reg: f64 = b
        .iter()
        .zip(corr)
        .map(|(&bj, &cj)| lambda * bj.abs() - bj * cj)
        .sum();
    Ok(fy + reg - b0 * sum_wa)
}

struct Problem<'a> {
    x: &'a DesignMatrix,
    y: &'a [f64],
    w: &'a [f64],
    loss: LossKind,
    lambda: f64,
    eq_tol: f64,
}

#[derive(Clone)]
struct Eval {
    /// Smooth part `sum_i w_i l(y_i, t_i)` at the optimal intercept.
    f: f64,
    b0: f64,
    t: Vec<f64>,
    grad: Vec<f64>,
}

fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

impl Problem<'_> {
    /// Exact intercept for margins `m` (without intercept).
    fn intercept(&self, m: &[f64], start: f64) -> f64 {
        match self.loss {
            LossKind::Squared => {
                let (mut num, mut den) = (0.0, 0.0);
                for ((&y, &m), &w) in self.y.iter().zip(m).zip(self.w) {
                    num += w * (y - m);
                    den += w;
                }
                num / den
            }
            LossKind::Logistic => self.logistic_intercept(m, start),
        }
    }

    /// Safeguarded Newton on `phi(b0) = sum_i w_i l'(y_i, m_i + b0)`, which is increasing.
    fn logistic_intercept(&self, m: &[f64], start: f64) -> f64 {
        let mut b0 = if start.is_finite() { start } else { 0.0 };
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for _ in 0..200 {
            let (mut phi, mut dphi) = (0.0, 0.0);
            for ((&y, &m), &w) in self.y.iter().zip(m).zip(self.w) {
                let t = m + b0;
                phi += w * self.loss.derivative_unchecked(y, t);
                dphi += w * self.loss.second_derivative_unchecked(y, t);
            }
            if phi.abs() <= self.eq_tol {
                // One more Newton step: it is nearly free and the residual
                // feeds straight into the gap through the `b0 * sum w a` term.
                if dphi > 0.0 {
                    b0 -= phi / dphi;
                }
                break;
            }
            if phi < 0.0 {
                lo = b0;
            } else {
                hi = b0;
            }
            let mut next = if dphi > 0.0 {
                b0 - phi / dphi
            } else {
                f64::NAN
            };
            let bracketed = lo.is_finite() && hi.is_finite();
            if !next.is_finite() || next <= lo || next >= hi {
                next = if bracketed {
                    0.5 * (lo + hi)
                } else if phi < 0.0 {
                    b0 + 1.0f64.max(2.0 * (b0 - lo).abs().min(1e3))
                } else {
                    b0 - 1.0f64.max(2.0 * (hi - b0).abs().min(1e3))
                };
            }
            if (next - b0).abs() <= 4.0 * f64::EPSILON * (1.0 + b0.abs()) {
                b0 = next;
                break;
            }
            b0 = next;
        }
        b0
    }

    fn eval(&self, b: &[f64], b0_start: f64) -> Eval {
        let n = self.y.len();
        let mut t = vec![0.0; n];
        self.x.margins_into(b, 0.0, &mut t);
        let b0 = self.intercept(&t, b0_start);
        t.iter_mut().for_each(|v| *v += b0);
        let mut f = 0.0;
        let mut g = vec![0.0; n];
        for i in 0..n {
            f += self.w[i] * self.loss.value_unchecked(self.y[i], t[i]);
            g[i] = self.w[i] * self.loss.derivative_unchecked(self.y[i], t[i]);
        }
        let grad = self.x.transpose_mul(&g);
        Eval { f, b0, t, grad }
    }

    fn certificate(&self, b: &[f64], e: &Eval) -> (Vec<f64>, f64) {
        let (alpha, corr) = repaired_dual(self.x, self.y, self.w, self.loss, self.lambda, &e.t);
        let gap = raw_gap(
            self.y,
            self.w,
            self.loss,
            self.lambda,
            b,
            e.b0,
            &e.t,
            &alpha,
            &corr,
        )
        .map(|g| clamp_gap(g, e.f + self.lambda * l1(b)))
        .unwrap_or(f64::INFINITY);
        (alpha, gap)
    }

    /// Smooth objective restricted to a fixed signed support.
    fn restricted_objective(
        &self,
        support: &[usize],
        signs: &[f64],
        theta: &[f64],
    ) -> (f64, Vec<f64>) {
        let k = support.len();
        let mut t = vec![theta[k]; self.y.len()];
        for (s, &j) in support.iter().enumerate() {
            for (o, &x) in t.iter_mut().zip(self.x.column(j)) {
                *o += theta[s] * x;
            }
        }
        let f: f64 = (0..t.len())
            .map(|i| self.w[i] * self.loss.value_unchecked(self.y[i], t[i]))
            .sum::<f64>()
            + self.lambda * (0..k).map(|s| signs[s] * theta[s]).sum::<f64>();
        (f, t)
    }

    /// Newton iterations on `(b_S, b0)` with the signs of `b` frozen. Returns
    /// `None` if the Hessian is singular or a sign would flip.
    #[allow(clippy::needless_range_loop)]
    fn polish(&self, b: &[f64], b0: f64) -> Option<(Vec<f64>, f64)> {
        let support: Vec<usize> = (0..b.len()).filter(|&j| b[j] != 0.0).collect();
        let k = support.len();
        let n = self.y.len();
        if k + 1 > n || (n as f64) * ((k + 1) as f64).powi(2) > POLISH_WORK_LIMIT {
            return None;
        }
        let signs: Vec<f64> = support.iter().map(|&j| b[j].signum()).collect();
        let mut theta: Vec<f64> = support.iter().map(|&j| b[j]).collect();
        theta.push(b0);
        let dim = k + 1;
        let (mut f, mut t) = self.restricted_objective(&support, &signs, &theta);
        for _ in 0..50 {
            let mut grad = vec![0.0; dim];
            let mut hess = vec![0.0; dim * dim];
            let mut row = vec![0.0; dim];
            for i in 0..n {
                let g = self.w[i] * self.loss.derivative_unchecked(self.y[i], t[i]);
                let h = self.w[i] * self.loss.second_derivative_unchecked(self.y[i], t[i]);
                for (s, &j) in support.iter().enumerate() {
                    row[s] = self.x.get(i, j);
                }
                row[k] = 1.0;
                for a in 0..dim {
                    grad[a] += g * row[a];
                    let hr = h * row[a];
                    for c in 0..=a {
                        hess[a * dim + c] += hr * row[c];
                    }
                }
            }
            for a in 0..dim {
                for c in 0..a {
                    hess[c * dim + a] = hess[a * dim + c];
                }
            }
            for s in 0..k {
                grad[s] += self.lambda * signs[s];
            }
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = cholesky_solve(&hess, &neg, dim)?;
            let decrement: f64 = -dot(&grad, &step);
            let mut eta = 1.0;
            let accepted = loop {
                let cand: Vec<f64> = theta.iter().zip(&step).map(|(a, d)| a + eta * d).collect();
                if (0..k).any(|s| cand[s].signum() != signs[s] || cand[s] == 0.0) {
                    return None;
                }
                let (fc, tc) = self.restricted_objective(&support, &signs, &cand);
                // Once the decrement is at rounding level of `f`, objective
                // comparisons are meaningless and the full step is trusted.
                let quadratic = eta == 1.0 && decrement <= 1e-12 * (1.0 + f.abs());
                if quadratic || fc <= f - 1e-4 * eta * decrement || fc <= f {
                    break Some((cand, fc, tc));
                }
                eta *= 0.5;
                if eta < 1e-10 {
                    break None;
                }
            };
            let Some((cand, fc, tc)) = accepted else {
                break;
            };
            let moved = theta
                .iter()
                .zip(&cand)
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            let size = cand.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            theta = cand;
            f = fc;
            t = tc;
            if moved <= 1e-15 * size || decrement <= 1e-30 {
                break;
            }
        }
        let mut out = vec![0.0; b.len()];
        for (s, &j) in support.iter().enumerate() {
            out[j] = theta[s];
        }
        Some((out, theta[k]))
    }
}

/// Fits the weighted problem to the configured duality-gap tolerance.
///
/// On hitting `max_iterations` the best certified iterate is returned inside
/// [`Error::NotConverged`].
pub fn fit_weighted_erm(
    ds: &Dataset,
    weights: &[f64],
    loss: LossKind,
    lambda: f64,
    config: &FitConfig,
) -> Result<FittedModel> {
    check_weights(ds, weights)?;
    check_labels(ds, loss)?;
    check_lambda(lambda)?;
    config.validate()?;
    let n = ds.n();
    let d = ds.d();
    let null_b0 = null_intercept(ds, weights, loss)?;
    let problem = Problem {
        x: ds.x(),
        y: ds.y(),
        w: weights,
        loss,
        lambda,
        eq_tol: config.eq_tolerance.unwrap_or(1e-10 * n as f64),
    };
    let zero = vec![0.0; d];
    let mut cur = problem.eval(&zero, null_b0);
    let tol = match config.gap_tolerance {
        GapTolerance::Absolute(g) => g,
        GapTolerance::Relative(g) => g * cur.f.max(1.0),
    };

    let make_model =
        |b: Vec<f64>, e: &Eval, alpha: Vec<f64>, gap: f64, iterations: usize| FittedModel {
            b,
            b0: e.b0,
            alpha,
            lambda,
            weights: weights.to_vec(),
            gap,
            gap_tolerance: tol,
            loss_kind: loss,
            iterations,
        };

    let mut b = zero;
    let (alpha, gap) = problem.certificate(&b, &cur);
    if gap <= tol {
        return Ok(make_model(b, &cur, alpha, gap, 0));
    }
    let mut best = make_model(b.clone(), &cur, alpha, gap, 0);

    let mut lip = ds
        .x()
        .columns()
        .map(|col| col.iter().zip(weights).map(|(x, w)| w * x * x).sum::<f64>())
        .fold(0.0, f64::max)
        * loss.nu();
    if lip.is_nan() || lip <= 0.0 {
        lip = 1.0;
    }

    let mut p_cur = cur.f + lambda * l1(&b);
    let mut z = b.clone();
    let mut z_eval = cur.clone();
    let mut momentum = 1.0f64;
    let mut last_pattern: Option<Vec<i8>> = None;
    let mut polished_pattern: Option<Vec<i8>> = None;
    // Accepted steps; restarts do not count toward the check cadence.
    let mut steps = 0usize;

    for iter in 1..=config.max_iterations {
        let (cand, ce) = loop {
            let thr = lambda / lip;
            let cand: Vec<f64> = z
                .iter()
                .zip(&z_eval.grad)
                .map(|(zj, gj)| soft_threshold(zj - gj / lip, thr))
                .collect();
            let ce = problem.eval(&cand, z_eval.b0);
            let diff: Vec<f64> = cand.iter().zip(&z).map(|(c, z)| c - z).collect();
            let quad = z_eval.f + dot(&z_eval.grad, &diff) + 0.5 * lip * dot(&diff, &diff);
            if ce.f <= quad + 1e-13 * (1.0 + z_eval.f.abs()) || lip > 1e300 {
                break (cand, ce);
            }
            lip *= 2.0;
        };
        let p_new = ce.f + lambda * l1(&cand);

        if p_new > p_cur && momentum > 1.0 {
            // Function-value restart: retry from the last iterate without momentum.
            momentum = 1.0;
            z.clone_from(&b);
            z_eval = cur.clone();
            continue;
        }

        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        let prev = std::mem::replace(&mut b, cand);
        cur = ce;
        p_cur = p_new;
        momentum = next_momentum;
        if beta > 0.0 {
            z = b
                .iter()
                .zip(&prev)
                .map(|(c, p)| c + beta * (c - p))
                .collect();
            z_eval = problem.eval(&z, cur.b0);
        } else {
            z.clone_from(&b);
            z_eval = cur.clone();
        }

        steps += 1;
        if !steps.is_multiple_of(CHECK_EVERY) && steps != 1 {
            continue;
        }
        let (alpha, gap) = problem.certificate(&b, &cur);
        if gap < best.gap {
            best = make_model(b.clone(), &cur, alpha.clone(), gap, iter);
        }
        let pattern: Vec<i8> = b
            .iter()
            .map(|v| v.signum() as i8 * (*v != 0.0) as i8)
            .collect();
        if gap <= tol {
            // A final restricted Newton pass makes the dual point exact on the
            // identified support; keep it only if it certifies a smaller gap.
            if polished_pattern.as_ref() != Some(&pattern) {
                if let Some((pb, pb0)) = problem.polish(&b, cur.b0) {
                    let pe = problem.eval(&pb, pb0);
                    let (palpha, pgap) = problem.certificate(&pb, &pe);
                    if pgap <= gap {
                        return Ok(make_model(pb, &pe, palpha, pgap, iter));
                    }
                }
            }
            return Ok(make_model(b, &cur, alpha, gap, iter));
        }

        let stable = last_pattern.as_ref() == Some(&pattern);
        if stable && polished_pattern.as_ref() != Some(&pattern) {
            polished_pattern = Some(pattern.clone());
            if let Some((pb, pb0)) = problem.polish(&b, cur.b0) {
                let pe = problem.eval(&pb, pb0);
                let pp = pe.f + lambda * l1(&pb);
                let (palpha, pgap) = problem.certificate(&pb, &pe);
                if pgap < best.gap {
                    best = make_model(pb.clone(), &pe, palpha.clone(), pgap, iter);
                }
                if pgap <= tol {
                    return Ok(make_model(pb, &pe, palpha, pgap, iter));
                }
                if pp < p_cur {
                    b = pb;
                    cur = pe;
                    p_cur = pp;
                    momentum = 1.0;
                    z.clone_from(&b);
                    z_eval = cur.clone();
                }
            }
        }
        last_pattern = Some(pattern);
    }
    best.iterations = config.max_iterations;
    Err(Error::NotConverged(Box::new(best)))
}
