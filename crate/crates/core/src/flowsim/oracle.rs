use std::collections::BTreeMap;

use super::FlowError;
use crate::Scalar;

/// A velocity field `v(z, t | condition)` of a rectified flow with `t = 0` at
/// data and `t = 1` at noise.
///
/// `conditioned = false` requests the unconditional branch used by
/// classifier-free guidance. Implementations must be safe to evaluate from
/// several threads at once.
pub trait VelocityOracle<T: Scalar>: Sync {
    fn dimension(&self) -> usize;

    fn evaluate(&self, z: &[T], t: T, condition: &str, conditioned: bool)
        -> Result<Vec<T>, FlowError>;
}

/// Isotropic Gaussian data distribution `N(mean, variance * I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams<T> {
    pub mean: Vec<T>,
    pub variance: T,
}

/// Closed-form velocity fields, exact for their data distributions.
#[derive(Clone, Debug, PartialEq)]
pub enum AnalyticKind<T> {
    /// All data mass at one anchor per condition.
    Delta { anchors: BTreeMap<String, Vec<T>> },
    /// Gaussian data per condition.
    AffineGaussian { params: BTreeMap<String, GaussianParams<T>> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticOracle<T> {
    kind: AnalyticKind<T>,
    dimension: usize,
}

pub fn make_analytic_oracle<T: Scalar>(kind: AnalyticKind<T>) -> Result<AnalyticOracle<T>, FlowError> {
    let invalid = |m: &str| Err(FlowError::InvalidOracle(m.to_string()));
    let dims: Vec<usize> = match &kind {
        AnalyticKind::Delta { anchors } => {
            if anchors.values().flatten().any(|v| !v.is_finite()) {
                return invalid("anchors must be finite");
            }
            anchors.values().map(Vec::len).collect()
        }
        AnalyticKind::AffineGaussian { params } => {
            for p in params.values() {
                if !(p.variance > T::zero() && p.variance.is_finite()) {
                    return invalid("variance must be positive and finite");
                }
                if p.mean.iter().any(|v| !v.is_finite()) {
                    return invalid("means must be finite");
                }
            }
            params.values().map(|p| p.mean.len()).collect()
        }
    };
    let Some(&dimension) = dims.first() else {
        return invalid("at least one condition is required");
    };
    if dimension == 0 || dims.iter().any(|&d| d != dimension) {
        return invalid("all conditions need the same non-zero dimension");
    }
    Ok(AnalyticOracle { kind, dimension })
}

impl<T: Scalar> AnalyticOracle<T> {
    pub fn delta<S: Into<String>>(anchors: impl IntoIterator<Item = (S, Vec<T>)>) -> Result<Self, FlowError> {
        make_analytic_oracle(AnalyticKind::Delta {
            anchors: anchors.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        })
    }

    pub fn affine_gaussian<S: Into<String>>(
        params: impl IntoIterator<Item = (S, Vec<T>, T)>,
    ) -> Result<Self, FlowError> {
        make_analytic_oracle(AnalyticKind::AffineGaussian {
            params: params
                .into_iter()
                .map(|(k, mean, variance)| (k.into(), GaussianParams { mean, variance }))
                .collect(),
        })
    }

    pub fn kind(&self) -> &AnalyticKind<T> {
        &self.kind
    }

    /// `E[x | z_t = z]` under the condition's data distribution.
    pub fn posterior_mean(&self, z: &[T], t: T, condition: &str) -> Result<Vec<T>, FlowError> {
        let unknown = || FlowError::UnknownCondition(condition.to_string());
        match &self.kind {
            AnalyticKind::Delta { anchors } => anchors.get(condition).cloned().ok_or_else(unknown),
            AnalyticKind::AffineGaussian { params } => {
                let p = params.get(condition).ok_or_else(unknown)?;
                let s = T::one() - t;
                let gain = s * p.variance / (s * s * p.variance + t * t);
                Ok(z.iter()
                    .zip(&p.mean)
                    .map(|(&zi, &mu)| mu + gain * (zi - s * mu))
                    .collect())
            }
        }
    }
}

impl<T: Scalar> VelocityOracle<T> for AnalyticOracle<T> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    /// `v = (z - E[x | z_t = z]) / t`. The unconditional branch answers with
    /// the conditional field, so guidance reduces to the conditional velocity.
    fn evaluate(&self, z: &[T], t: T, condition: &str, _conditioned: bool) -> Result<Vec<T>, FlowError> {
        if t.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(FlowError::NonPositiveTime(t.as_f64()));
        }
        if z.len() != self.dimension {
            return Err(FlowError::DimensionMismatch { expected: self.dimension, actual: z.len() });
        }
        let m = self.posterior_mean(z, t, condition)?;
        Ok(z.iter().zip(&m).map(|(&zi, &mi)| (zi - mi) / t).collect())
    }
}
