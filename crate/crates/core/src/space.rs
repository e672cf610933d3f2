//! Parameter spaces and normalized parameter vectors.
//!
//! Every estimator works in the normalized unit cube: a [`ParamVector`] holds
//! one value in [0, 1] per physical parameter, and the [`ParameterSpace`]
//! carries the affine map to physical units. Normalize and denormalize are
//! exact mutual inverses up to floating-point roundoff.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One physical parameter: name, closed range, unit label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub unit: String,
}

impl ParamDef {
    pub fn new(name: &str, low: f64, high: f64, unit: &str) -> Self {
        ParamDef {
            name: name.to_string(),
            low,
            high,
            unit: unit.to_string(),
        }
    }
}

/// Ordered set of parameter definitions; the sole authority on physical ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    params: Vec<ParamDef>,
}

impl ParameterSpace {
    /// Fails on an empty set, a non-finite bound, or `low >= high`.
    pub fn new(params: Vec<ParamDef>) -> Result<Self> {
        if params.is_empty() {
            return Err(CoreError::EmptyInput("parameter space".into()));
        }
        for p in &params {
            if !p.low.is_finite() || !p.high.is_finite() {
                return Err(CoreError::NonFinite(format!("bounds of `{}`", p.name)));
            }
            if p.low >= p.high {
                return Err(CoreError::invalid(
                    format!("parameter `{}`", p.name),
                    format!("low {} must be strictly below high {}", p.low, p.high),
                ));
            }
        }
        Ok(ParameterSpace { params })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[ParamDef] {
        &self.params
    }

    /// Map physical values into the unit cube. Errors if any value lies
    /// outside its declared range.
    pub fn normalize(&self, phys: &[f64]) -> Result<ParamVector> {
        self.check_len(phys.len())?;
        let mut out = Vec::with_capacity(self.dim());
        for (p, &v) in self.params.iter().zip(phys) {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(format!("physical value of `{}`", p.name)));
            }
            if v < p.low || v > p.high {
                return Err(CoreError::OutOfRange {
                    name: p.name.clone(),
                    value: v,
                    low: p.low,
                    high: p.high,
                });
            }
            out.push((v - p.low) / (p.high - p.low));
        }
        ParamVector::new(out)
    }

    /// Map physical values into the unit cube, clamping anything out of range.
    /// Used when scoring against out-of-distribution targets whose stored
    /// physical values intentionally leave the declared ranges.
    pub fn normalize_clamped(&self, phys: &[f64]) -> Result<ParamVector> {
        self.check_len(phys.len())?;
        let mut out = Vec::with_capacity(self.dim());
        for (p, &v) in self.params.iter().zip(phys) {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(format!("physical value of `{}`", p.name)));
            }
            let t = (v - p.low) / (p.high - p.low);
            out.push(t.clamp(0.0, 1.0));
        }
        ParamVector::new(out)
    }

    /// Map a normalized vector back to physical units.
    pub fn denormalize(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        self.check_len(theta.dim())?;
        Ok(self
            .params
            .iter()
            .zip(theta.as_slice())
            .map(|(p, &t)| p.low + t * (p.high - p.low))
            .collect())
    }

    fn check_len(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(CoreError::shape("parameter vector", self.dim(), got));
        }
        Ok(())
    }
}

/// Normalized parameter vector; every component lies in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CoreError::EmptyInput("parameter vector".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(CoreError::NonFinite(format!("theta[{i}]")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::OutOfRange {
                    name: format!("theta[{i}]"),
                    value: v,
                    low: 0.0,
                    high: 1.0,
                });
            }
        }
        Ok(ParamVector(values))
    }

    /// Clamp arbitrary finite values into the cube. Non-finite input errors.
    pub fn clamped(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite("theta".into()));
        }
        ParamVector::new(values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = CoreError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ParamVector::new(v)
    }
}

impl From<ParamVector> for Vec<f64> {
    fn from(v: ParamVector) -> Vec<f64> {
        v.0
    }
}
