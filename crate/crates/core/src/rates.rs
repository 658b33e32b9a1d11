//! Demographic rates: mating capabilities `p`, natural death `D` and the four
//! competition kernels `U`.
//!
//! `U_ab(x, y)` is the rate at which an individual of sex `a` and trait `x`
//! dies from competition with one unit of mass of sex `b` at trait `y`, so
//! males die at `D_m + U_mm * m + U_mf * f` and females at
//! `D_f + U_fm * m + U_ff * f`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone)]
pub enum TraitFn {
    Const(f64),
    Fn(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

#[derive(Clone)]
pub enum PairFn {
    Const(f64),
    Fn(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl TraitFn {
    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Fn(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Fn(f) => f(x),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Self::Const(c) => Some(*c),
            Self::Fn(_) => None,
        }
    }
}

impl PairFn {
    pub fn function(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Fn(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            Self::Const(c) => *c,
            Self::Fn(f) => f(x, y),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            Self::Const(c) => Some(*c),
            Self::Fn(_) => None,
        }
    }
}

impl fmt::Debug for TraitFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "Const({c})"),
            Self::Fn(_) => f.write_str("Fn(..)"),
        }
    }
}

impl fmt::Debug for PairFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Const(c) => write!(f, "Const({c})"),
            Self::Fn(_) => f.write_str("Fn(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateSet {
    pub p_f: TraitFn,
    pub p_m: TraitFn,
    pub d_f: TraitFn,
    pub d_m: TraitFn,
    pub u_ff: PairFn,
    pub u_fm: PairFn,
    pub u_mf: PairFn,
    pub u_mm: PairFn,
}

impl RateSet {
    /// All eight rates as constants, if they are.
    pub fn constants(&self) -> Option<ConstantRates> {
        Some(ConstantRates {
            p_f: self.p_f.constant()?,
            p_m: self.p_m.constant()?,
            d_f: self.d_f.constant()?,
            d_m: self.d_m.constant()?,
            u_ff: self.u_ff.constant()?,
            u_fm: self.u_fm.constant()?,
            u_mf: self.u_mf.constant()?,
            u_mm: self.u_mm.constant()?,
        })
    }

    /// Whether the competition kernels ignore traits, which lets simulators
    /// track competition through the sex totals alone.
    pub fn constant_competition(&self) -> bool {
        [&self.u_ff, &self.u_fm, &self.u_mf, &self.u_mm]
            .iter()
            .all(|u| u.constant().is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantRates {
    pub p_f: f64,
    pub p_m: f64,
    #[serde(rename = "D_f")]
    pub d_f: f64,
    #[serde(rename = "D_m")]
    pub d_m: f64,
    #[serde(rename = "U_ff")]
    pub u_ff: f64,
    #[serde(rename = "U_fm")]
    pub u_fm: f64,
    #[serde(rename = "U_mf")]
    pub u_mf: f64,
    #[serde(rename = "U_mm")]
    pub u_mm: f64,
}

impl ConstantRates {
    /// Symmetric rates: the same `p`, `D` and `U` for both sexes.
    pub fn symmetric(p: f64, d: f64, u: f64) -> Self {
        Self {
            p_f: p,
            p_m: p,
            d_f: d,
            d_m: d,
            u_ff: u,
            u_fm: u,
            u_mf: u,
            u_mm: u,
        }
    }

    pub fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("p_f", self.p_f),
            ("p_m", self.p_m),
            ("D_f", self.d_f),
            ("D_m", self.d_m),
            ("U_ff", self.u_ff),
            ("U_fm", self.u_fm),
            ("U_mf", self.u_mf),
            ("U_mm", self.u_mm),
        ]
    }

    /// Finite and non-negative. Enough for the simulators, where zero rates
    /// simply switch mechanisms off.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// The setting of the totals analysis: positive deaths and competition,
    /// non-negative mating with `p_f + p_m > 0`.
    pub fn validate_strict(&self) -> Result<()> {
        self.validate()?;
        for (name, v) in self.named().into_iter().skip(2) {
            if v <= 0.0 {
                return Err(Error::InvalidParameters(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.p_f + self.p_m <= 0.0 {
            return Err(Error::InvalidParameters(
                "p_f + p_m must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl From<ConstantRates> for RateSet {
    fn from(c: ConstantRates) -> Self {
        Self {
            p_f: TraitFn::Const(c.p_f),
            p_m: TraitFn::Const(c.p_m),
            d_f: TraitFn::Const(c.d_f),
            d_m: TraitFn::Const(c.d_m),
            u_ff: PairFn::Const(c.u_ff),
            u_fm: PairFn::Const(c.u_fm),
            u_mf: PairFn::Const(c.u_mf),
            u_mm: PairFn::Const(c.u_mm),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serde_uses_paper_names() {
        let r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"D_f\":1.0"));
        assert!(json.contains("\"U_mf\":0.25"));
        let back: ConstantRates = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn validation_names_the_field() {
        let mut r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        r.d_f = -1.0;
        assert!(r.validate().unwrap_err().to_string().contains("D_f"));
        let mut r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        r.u_fm = 0.0;
        assert!(r.validate().is_ok());
        assert!(r.validate_strict().unwrap_err().to_string().contains("U_fm"));
    }

    #[test]
    fn round_trip_through_rate_set() {
        let r = ConstantRates::symmetric(2.0, 1.0, 0.25);
        let set = RateSet::from(r);
        assert_eq!(set.constants(), Some(r));
        assert!(set.constant_competition());
        let mut varying = set.clone();
        varying.p_f = TraitFn::function(|x| 1.0 + x * x);
        assert_eq!(varying.constants(), None);
        assert_eq!(varying.p_f.eval(2.0), 5.0);
    }
}
