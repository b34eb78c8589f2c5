//! Equilibrium sorption isotherms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equilibrium relation between aqueous concentration `C` (mg/l) and sorbed
/// amount `C*` (µg/g).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SorptionModel {
    None,
    /// `C* = K_f C^a`
    Freundlich {
        k_f: f64,
        a: f64,
    },
    /// `C* = K_l S̄ C / (1 + K_l C)`
    Langmuir {
        k_l: f64,
        s_bar: f64,
    },
}

impl SorptionModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SorptionModel::None => Ok(()),
            SorptionModel::Freundlich { k_f, a } => {
                if !(a > 0.0 && a <= 1.0) {
                    return Err(Error::Config(format!("Freundlich exponent a={a} must lie in (0, 1]")));
                }
                if !(k_f >= 0.0) {
                    return Err(Error::Config(format!("Freundlich constant K_f={k_f} must be non-negative")));
                }
                Ok(())
            }
            SorptionModel::Langmuir { k_l, s_bar } => {
                if !(k_l >= 0.0 && s_bar >= 0.0) {
                    return Err(Error::Config(format!(
                        "Langmuir parameters K_l={k_l}, S_bar={s_bar} must be non-negative"
                    )));
                }
                Ok(())
            }
        }
    }

    /// True when the isotherm is identically zero.
    pub fn is_inert(&self) -> bool {
        match *self {
            SorptionModel::None => true,
            SorptionModel::Freundlich { k_f, .. } => k_f == 0.0,
            SorptionModel::Langmuir { k_l, s_bar } => k_l == 0.0 || s_bar == 0.0,
        }
    }

    /// Sorbed amount `C*` at concentration `c`.
    pub fn value(&self, c: f64) -> Result<f64> {
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("isotherm evaluated at negative concentration {c}")));
        }
        Ok(self.value_unchecked(c))
    }

    /// Slope `dC*/dC` at concentration `c`. The Freundlich slope is singular at
    /// zero for `a < 1`.
    pub fn slope(&self, c: f64) -> Result<f64> {
        if !(c >= 0.0) {
            return Err(Error::Domain(format!("isotherm slope evaluated at negative concentration {c}")));
        }
        match *self {
            SorptionModel::Freundlich { k_f, a } if c == 0.0 && a < 1.0 && k_f != 0.0 => {
                Err(Error::Domain("Freundlich slope is singular at C = 0".into()))
            }
            _ => Ok(self.slope_unchecked(c)),
        }
    }

    pub(crate) fn value_unchecked(&self, c: f64) -> f64 {
        match *self {
            SorptionModel::None => 0.0,
            SorptionModel::Freundlich { k_f, a } => {
                if k_f == 0.0 || c <= 0.0 {
                    0.0
                } else {
                    k_f * c.powf(a)
                }
            }
            SorptionModel::Langmuir { k_l, s_bar } => k_l * s_bar * c / (1.0 + k_l * c),
        }
    }

    pub(crate) fn slope_unchecked(&self, c: f64) -> f64 {
        match *self {
            SorptionModel::None => 0.0,
            SorptionModel::Freundlich { k_f, a } => {
                if k_f == 0.0 {
                    0.0
                } else {
                    a * k_f * c.powf(a - 1.0)
                }
            }
            SorptionModel::Langmuir { k_l, s_bar } => {
                let d = 1.0 + k_l * c;
                k_l * s_bar / (d * d)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREUNDLICH: SorptionModel = SorptionModel::Freundlich { k_f: 0.05, a: 0.7 };
    const LANGMUIR: SorptionModel = SorptionModel::Langmuir { k_l: 100.0, s_bar: 0.003 };

    #[test]
    fn isotherm_values() {
        assert_eq!(FREUNDLICH.value(0.0).unwrap(), 0.0);
        assert!((FREUNDLICH.value(1.0).unwrap() - 0.05).abs() < 1e-15);
        assert!((LANGMUIR.value(0.01).unwrap() - 0.0015).abs() < 1e-15);
        assert_eq!(SorptionModel::None.value(3.0).unwrap(), 0.0);
    }

    #[test]
    fn isotherm_slopes() {
        assert!((FREUNDLICH.slope(1.0).unwrap() - 0.035).abs() < 1e-15);
        assert!((LANGMUIR.slope(0.0).unwrap() - 0.3).abs() < 1e-15);
        for c in [0.0, 0.1, 7.0] {
            assert_eq!(SorptionModel::None.slope(c).unwrap(), 0.0);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(FREUNDLICH.value(-1e-3), Err(Error::Domain(_))));
        assert!(matches!(LANGMUIR.slope(-1.0), Err(Error::Domain(_))));
        assert!(matches!(FREUNDLICH.slope(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn slope_matches_finite_difference() {
        for model in [FREUNDLICH, LANGMUIR] {
            for c in [1e-3, 0.01, 0.05] {
                let h = 1e-7 * c;
                let fd = (model.value(c + h).unwrap() - model.value(c - h).unwrap()) / (2.0 * h);
                let an = model.slope(c).unwrap();
                assert!((fd - an).abs() < 1e-6 * an.abs(), "{model:?} at {c}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(SorptionModel::Freundlich { k_f: 0.05, a: 1.2 }.validate().is_err());
        assert!(SorptionModel::Freundlich { k_f: -1.0, a: 0.5 }.validate().is_err());
        assert!(SorptionModel::Langmuir { k_l: -1.0, s_bar: 0.1 }.validate().is_err());
        assert!(LANGMUIR.validate().is_ok());
    }
}
