//! Squared and logistic losses with their derivatives and Fenchel conjugates.
//!
//! Conjugates are always evaluated at the negated dual variable, i.e.
//! `conjugate_neg(y, a)` is `l*(y, -a)`, which is the form that appears in the
//! dual objective `-sum_i w_i l*(y_i, -a_i)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `(t - y)^2`
    Squared,
    /// `log(1 + exp(-y t))` with `y` in {-1, +1}
    Logistic,
}

/// A loss together with the Lipschitz constant of its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub nu: f64,
}

impl From<LossKind> for LossSpec {
    fn from(kind: LossKind) -> Self {
        Self {
            kind,
            nu: kind.nu(),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LossKind::Squared => f.write_str("squared"),
            LossKind::Logistic => f.write_str("logistic"),
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "squared" | "square" | "ls" => Ok(LossKind::Squared),
            "logistic" | "log" => Ok(LossKind::Logistic),
            other => Err(Error::Parameter(format!("unknown loss '{other}'"))),
        }
    }
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `1 / (1 + exp(z))` without overflow.
#[inline]
pub(crate) fn inv_one_plus_exp(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}

/// `p log p` with the convention `0 log 0 = 0`.
#[inline]
fn xlogx(p: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * p.ln()
    }
}

impl LossKind {
    /// Lipschitz constant of `t -> dl/dt`, identical for every label.
    pub fn nu(self) -> f64 {
        match self {
            LossKind::Squared => 2.0,
            LossKind::Logistic => 0.25,
        }
    }

    /// Shrink factor that keeps `q * alpha / w_i` inside the conjugate domain
    /// for every `w_i` in `[1 - delta, 1 + delta]`.
    pub fn feasibility_q(self, delta: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Parameter(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(match self {
            LossKind::Squared => 1.0,
            LossKind::Logistic => 1.0 - delta,
        })
    }

    /// Checks that `y` is an admissible label for this loss.
    pub fn check_label(self, y: f64) -> Result<()> {
        match self {
            LossKind::Squared if y.is_finite() => Ok(()),
            LossKind::Logistic if y == 1.0 || y == -1.0 => Ok(()),
            _ => Err(Error::InvalidLabel { label: y }),
        }
    }

    pub fn value(self, y: f64, t: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.value_unchecked(y, t))
    }

    pub fn derivative(self, y: f64, t: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.derivative_unchecked(y, t))
    }

    /// Negated derivative, i.e. the dual variable matched to margin `t`.
    pub fn dual_from_margin(self, y: f64, t: f64) -> Result<f64> {
        self.check_label(y)?;
        Ok(self.dual_from_margin_unchecked(y, t))
    }

    /// `l*(y, -alpha)`.
    ///
    /// For the logistic loss the domain is `0 <= y alpha <= 1`; outside it the
    /// conjugate is `+inf` and a [`Error::ConjugateDomain`] is returned instead.
    pub fn conjugate_neg(self, y: f64, alpha: f64) -> Result<f64> {
        self.check_label(y)?;
        match self {
            LossKind::Squared => Ok(0.25 * alpha * alpha - y * alpha),
            LossKind::Logistic => {
                let p = y * alpha;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::ConjugateDomain { value: p });
                }
                if p == 0.0 || p == 1.0 {
                    return Ok(0.0);
                }
                Ok(xlogx(1.0 - p) + xlogx(p))
            }
        }
    }

    /// `l(y, t) + l*(y, -alpha) + alpha t`, which is nonnegative and vanishes
    /// exactly when `alpha = dual_from_margin(y, t)`.
    ///
    /// Evaluated in a cancellation-free form so that it stays accurate near zero.
    pub fn fenchel_young_residual(self, y: f64, t: f64, alpha: f64) -> Result<f64> {
        self.check_label(y)?;
        match self {
            LossKind::Squared => {
                let r = 0.5 * alpha + t - y;
                Ok(r * r)
            }
            LossKind::Logistic => {
                let p = y * alpha;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::ConjugateDomain { value: p });
                }
                // KL(Bernoulli(p) || Bernoulli(sigma)) with sigma = 1 / (1 + e^{yt}).
                let yt = y * t;
                let mut kl = 0.0;
                if p > 0.0 {
                    kl += p * (p.ln() + softplus(yt));
                }
                if p < 1.0 {
                    let q = 1.0 - p;
                    kl += q * (q.ln() + softplus(-yt));
                }
                Ok(kl.max(0.0))
            }
        }
    }

    #[inline]
    pub(crate) fn value_unchecked(self, y: f64, t: f64) -> f64 {
        match self {
            LossKind::Squared => (t - y) * (t - y),
            LossKind::Logistic => softplus(-y * t),
        }
    }

    #[inline]
    pub(crate) fn derivative_unchecked(self, y: f64, t: f64) -> f64 {
        match self {
            LossKind::Squared => 2.0 * (t - y),
            LossKind::Logistic => -y * inv_one_plus_exp(y * t),
        }
    }

    #[inline]
    pub(crate) fn second_derivative_unchecked(self, y: f64, t: f64) -> f64 {
        match self {
            LossKind::Squared => 2.0,
            LossKind::Logistic => {
                let s = inv_one_plus_exp(y * t);
                s * (1.0 - s)
            }
        }
    }

    #[inline]
    pub(crate) fn dual_from_margin_unchecked(self, y: f64, t: f64) -> f64 {
        match self {
            LossKind::Squared => 2.0 * (y - t),
            LossKind::Logistic => y * inv_one_plus_exp(y * t),
        }
    }
}
