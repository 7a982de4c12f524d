//! Robust estimators of the error scale used to standardize residuals.
//!
//! The default is the successive-difference M-scale: an M-estimator of
//! scale with bisquare chi applied to `x_2 - x_1, ..., x_n - x_{n-1}` and
//! divided by sqrt(2), with constants `c = 0.7094`, `b = 3/4` so the
//! estimator converges to the standard deviation under normal errors. The
//! alternative is the normalized median absolute residual from an exact-L1
//! isotonic fit.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::psi::ScoreFamily;
use crate::solver::{fit_pava, DesignSample};
use crate::{IsoError, Result};

/// `Phi^{-1}(3/4)`: normalizing constant for the median absolute residual.
pub const PHI_INV_3_4: f64 = 0.674_489_750_196_081_7;

pub const DEFAULT_BISQUARE_C: f64 = 0.7094;
pub const DEFAULT_BISQUARE_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleMethod {
    /// Known scale, passed through unchanged.
    Fixed { sigma0: f64 },
    /// Bisquare M-scale of successive differences, divided by sqrt(2).
    DiffMScale { c: f64, b: f64 },
    /// median|residual| / Phi^{-1}(3/4) with residuals from an exact-L1
    /// isotonic fit. Conjectured (not proved) sqrt(n)-consistent.
    MadnL1Residuals,
}

impl ScaleMethod {
    pub fn diffm() -> Self {
        ScaleMethod::DiffMScale { c: DEFAULT_BISQUARE_C, b: DEFAULT_BISQUARE_B }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ScaleMethod::Fixed { sigma0 } => {
                if sigma0 > 0.0 && sigma0.is_finite() {
                    Ok(())
                } else {
                    Err(IsoError::InvalidInput(format!("fixed scale must be > 0, got {sigma0}")))
                }
            }
            ScaleMethod::DiffMScale { c, b } => {
                if !(c > 0.0 && c.is_finite()) {
                    Err(IsoError::InvalidInput(format!("bisquare c must be > 0, got {c}")))
                } else if !(b > 0.0 && b < 1.0) {
                    Err(IsoError::InvalidInput(format!("target b must be in (0,1), got {b}")))
                } else {
                    Ok(())
                }
            }
            ScaleMethod::MadnL1Residuals => Ok(()),
        }
    }
}

impl fmt::Display for ScaleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScaleMethod::Fixed { sigma0 } => write!(f, "fixed:{sigma0}"),
            ScaleMethod::DiffMScale { c, b } => write!(f, "diffm:c={c},b={b}"),
            ScaleMethod::MadnL1Residuals => write!(f, "madl1"),
        }
    }
}

impl FromStr for ScaleMethod {
    type Err = IsoError;

    /// Accepts `fixed:<sigma>`, `diffm`, `diffm:c=...,b=...` and `madl1`.
    fn from_str(s: &str) -> Result<Self> {
        let method = if let Some(v) = s.strip_prefix("fixed:") {
            let sigma0 = v
                .parse::<f64>()
                .map_err(|_| IsoError::InvalidInput(format!("bad fixed scale '{v}'")))?;
            ScaleMethod::Fixed { sigma0 }
        } else if s == "diffm" {
            ScaleMethod::diffm()
        } else if let Some(args) = s.strip_prefix("diffm:") {
            let mut c = DEFAULT_BISQUARE_C;
            let mut b = DEFAULT_BISQUARE_B;
            for part in args.split(',') {
                match part.split_once('=') {
                    Some(("c", v)) => {
                        c = v.parse().map_err(|_| {
                            IsoError::InvalidInput(format!("bad value for c: '{v}'"))
                        })?
                    }
                    Some(("b", v)) => {
                        b = v.parse().map_err(|_| {
                            IsoError::InvalidInput(format!("bad value for b: '{v}'"))
                        })?
                    }
                    _ => {
                        return Err(IsoError::InvalidInput(format!(
                            "bad diffm parameter '{part}'"
                        )))
                    }
                }
            }
            ScaleMethod::DiffMScale { c, b }
        } else if s == "madl1" {
            ScaleMethod::MadnL1Residuals
        } else {
            return Err(IsoError::InvalidInput(format!("unknown scale method '{s}'")));
        };
        method.validate()?;
        Ok(method)
    }
}

/// A computed scale with the method that produced it and the number of
/// inputs it consumed (`n - 1` differences for `diffm`, `n` residuals for
/// `madl1`, 0 for `fixed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub value: f64,
    pub method: ScaleMethod,
    pub n_used: usize,
}

/// Bisquare chi: `1 - (1 - (u/c)^2)^3` for `|u| <= c`, else 1.
pub fn bisquare_chi(u: f64, c: f64) -> f64 {
    let r = u / c;
    if r.abs() <= 1.0 {
        let w = 1.0 - r * r;
        1.0 - w * w * w
    } else {
        1.0
    }
}

/// M-scale: the `s > 0` with `mean(chi(u_i / s)) = b`. The objective is
/// continuous and nonincreasing in `s`, so bisection is safe; at return
/// `|objective - b| <= 1e-10`.
pub fn m_scale(values: &[f64], c: f64, b: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(IsoError::InsufficientData { needed: 1, got: 0 });
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(IsoError::InvalidInput(format!("target b must be in (0,1), got {b}")));
    }
    let n = values.len() as f64;
    let nonzero = values.iter().filter(|v| **v != 0.0).count() as f64;
    let max_abs = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    // As s -> 0+ the objective tends to the nonzero fraction; a root needs
    // that fraction to exceed b.
    if max_abs == 0.0 || nonzero / n <= b {
        return Err(IsoError::DegenerateSample);
    }
    let objective = |s: f64| values.iter().map(|&u| bisquare_chi(u / s, c)).sum::<f64>() / n;
    let mut lo = 1e-12 * max_abs;
    let mut hi = 1e12 * max_abs;
    for _ in 0..200 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if objective(mid) > b {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let s = 0.5 * (lo + hi);
    debug_assert!((objective(s) - b).abs() <= 1e-10);
    Ok(s)
}

/// Scale estimate for a sample under the given method.
pub fn estimate_scale(
    sample: &DesignSample,
    method: &ScaleMethod,
    _f: &ScoreFamily,
) -> Result<ScaleEstimate> {
    method.validate()?;
    match *method {
        ScaleMethod::Fixed { sigma0 } => {
            Ok(ScaleEstimate { value: sigma0, method: *method, n_used: 0 })
        }
        ScaleMethod::DiffMScale { c, b } => {
            let n = sample.len();
            if n < 2 {
                return Err(IsoError::InsufficientData { needed: 2, got: n });
            }
            let x = sample.x();
            let diffs: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
            let s = m_scale(&diffs, c, b)?;
            Ok(ScaleEstimate {
                value: s / std::f64::consts::SQRT_2,
                method: *method,
                n_used: diffs.len(),
            })
        }
        ScaleMethod::MadnL1Residuals => {
            let l1 = fit_pava(sample, &ScoreFamily::l1(), 1.0)?;
            let mut abs_res: Vec<f64> = l1.residuals.iter().map(|r| r.abs()).collect();
            abs_res.sort_by(f64::total_cmp);
            let n = abs_res.len();
            let med = if n % 2 == 1 {
                abs_res[n / 2]
            } else {
                0.5 * (abs_res[n / 2 - 1] + abs_res[n / 2])
            };
            if med == 0.0 {
                return Err(IsoError::DegenerateSample);
            }
            Ok(ScaleEstimate { value: med / PHI_INV_3_4, method: *method, n_used: n })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi_examples() {
        let c = DEFAULT_BISQUARE_C;
        assert_eq!(bisquare_chi(0.0, c), 0.0);
        assert_eq!(bisquare_chi(c, c), 1.0);
        assert_eq!(bisquare_chi(2.0 * c, c), 1.0);
        // u = c/2: 1 - (3/4)^3 = 37/64
        assert_relative_eq!(bisquare_chi(c / 2.0, c), 37.0 / 64.0, epsilon = 1e-15);
        assert_eq!(bisquare_chi(-c / 2.0, c), bisquare_chi(c / 2.0, c));
    }

    #[test]
    fn m_scale_constant_input_closed_form() {
        // chi(a/s) = 3/4  =>  s = a / (c * xi) with 1 - (1 - xi^2)^3 = 3/4
        let a = 2.5;
        let c = DEFAULT_BISQUARE_C;
        let xi = (1.0 - 0.25f64.powf(1.0 / 3.0)).sqrt();
        let s = m_scale(&[a, -a, a, -a], c, 0.75).unwrap();
        assert_relative_eq!(s, a / (c * xi), max_relative = 1e-9);
    }

    #[test]
    fn m_scale_degenerate() {
        assert!(matches!(m_scale(&[0.0, 0.0], 0.7094, 0.75), Err(IsoError::DegenerateSample)));
        // nonzero fraction (1/2) not above b (3/4)
        assert!(matches!(
            m_scale(&[1.0, 0.0], 0.7094, 0.75),
            Err(IsoError::DegenerateSample)
        ));
    }

    #[test]
    fn m_scale_positive_homogeneous() {
        let v = [0.3, -1.2, 0.9, 2.4, -0.1];
        let s1 = m_scale(&v, 0.7094, 0.75).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| 7.0 * x).collect();
        let s2 = m_scale(&scaled, 0.7094, 0.75).unwrap();
        assert_relative_eq!(s2, 7.0 * s1, max_relative = 1e-9);
    }

    #[test]
    fn estimate_scale_fixed_passthrough() {
        let s = DesignSample::new([(0.0, 1.0), (1.0, 5.0)]).unwrap();
        let est =
            estimate_scale(&s, &ScaleMethod::Fixed { sigma0: 2.5 }, &ScoreFamily::L2).unwrap();
        assert_eq!(est.value, 2.5);
    }

    #[test]
    fn diffm_constant_differences() {
        // noise-free linear trend: all successive differences equal d
        let d = 0.4;
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, d * i as f64)).collect();
        let s = DesignSample::new(pts).unwrap();
        let est = estimate_scale(&s, &ScaleMethod::diffm(), &ScoreFamily::L2).unwrap();
        let xi = (1.0 - 0.25f64.powf(1.0 / 3.0)).sqrt();
        assert_relative_eq!(
            est.value,
            d / (std::f64::consts::SQRT_2 * DEFAULT_BISQUARE_C * xi),
            max_relative = 1e-9
        );
        assert_eq!(est.n_used, 19);
    }

    #[test]
    fn diffm_needs_two_points() {
        let s = DesignSample::new([(0.0, 1.0)]).unwrap();
        assert!(matches!(
            estimate_scale(&s, &ScaleMethod::diffm(), &ScoreFamily::L2),
            Err(IsoError::InsufficientData { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn madl1_normalization() {
        // L1 fit of a single violating pair pools to the midpoint, giving
        // residuals (+1, -1): median |res| = 1.
        let s = DesignSample::new([(0.0, 2.0), (1.0, 0.0)]).unwrap();
        let est = estimate_scale(&s, &ScaleMethod::MadnL1Residuals, &ScoreFamily::L2).unwrap();
        assert_relative_eq!(est.value, 1.0 / PHI_INV_3_4, epsilon = 1e-12);
        assert_relative_eq!(est.value, 1.4826, epsilon = 1e-3);
    }

    #[test]
    fn parse_roundtrip() {
        for s in ["fixed:2.5", "diffm:c=0.7094,b=0.75", "madl1"] {
            let m: ScaleMethod = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert_eq!("diffm".parse::<ScaleMethod>().unwrap(), ScaleMethod::diffm());
        assert!("fixed:-1".parse::<ScaleMethod>().is_err());
        assert!("diffm:b=1.5".parse::<ScaleMethod>().is_err());
    }
}
