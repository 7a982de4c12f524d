//! Score families: the loss `rho`, its derivative `psi` and second
//! derivative `psi'` used throughout the solver and the variance machinery.
//!
//! Every family has `rho(0) = 0`, `rho` even and nondecreasing in `|u|`,
//! `psi` odd and nondecreasing, and `psi' >= 0`. All of them except `L2`
//! have bounded `psi`.
//!
//! The smoothed families replace a kink by the unique monotone quintic
//! blend matching value, first and second derivative at both ends of a
//! narrow transition band, so `psi` is C^2 everywhere. In normalized band
//! coordinates `t in [0,1]` the blend is
//!
//! ```text
//! q(t) = t + 4 t^3 - 7 t^4 + 3 t^5,
//! ```
//!
//! with `q(0)=0, q'(0)=1, q''(0)=0, q(1)=1, q'(1)=0, q''(1)=0` and
//! `q' >= 0` on the whole band.

use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::IsoError;

/// Identifies a loss/score family together with its tuning constants.
///
/// `SmoothedL1 { m: f64::INFINITY }` is the exact-L1 sentinel: the solver
/// switches to block medians and `psi` degenerates to the sign function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreFamily {
    L2,
    Huber { k: f64 },
    SmoothedL1 { m: f64 },
    SmoothedHuber { k: f64, m: f64 },
}

/// Quintic blend on the normalized band, `q(0)=0 .. q(1)=1`.
#[inline]
fn blend(t: f64) -> f64 {
    t + t * t * t * (4.0 - 7.0 * t + 3.0 * t * t)
}

/// `q'(t) = 1 + 12 t^2 - 28 t^3 + 15 t^4`, nonnegative on `[0,1]`.
#[inline]
fn blend_d(t: f64) -> f64 {
    1.0 + t * t * (12.0 - 28.0 * t + 15.0 * t * t)
}

/// `Q(t) = int_0^t q`, used for the antiderivative `rho` on the band.
#[inline]
fn blend_i(t: f64) -> f64 {
    let t2 = t * t;
    0.5 * t2 + t2 * t2 * (1.0 - 1.4 * t + 0.5 * t2)
}

/// One-sided saturating score on `u >= 0`: linear with slope `slope` up to
/// `inner`, quintic band of width `width`, constant `sat` beyond.
#[derive(Debug, Clone, Copy)]
struct Saturating {
    slope: f64,
    inner: f64,
    width: f64,
    sat: f64,
}

impl Saturating {
    fn psi(&self, a: f64) -> f64 {
        if a <= self.inner {
            self.slope * a
        } else if a >= self.inner + self.width {
            self.sat
        } else {
            let y0 = self.slope * self.inner;
            let t = (a - self.inner) / self.width;
            y0 + (self.sat - y0) * blend(t)
        }
    }

    fn psi_prime(&self, a: f64) -> f64 {
        if a < self.inner {
            self.slope
        } else if a >= self.inner + self.width {
            0.0
        } else {
            let y0 = self.slope * self.inner;
            let t = (a - self.inner) / self.width;
            (self.sat - y0) / self.width * blend_d(t)
        }
    }

    fn rho(&self, a: f64) -> f64 {
        let y0 = self.slope * self.inner;
        if a <= self.inner {
            0.5 * self.slope * a * a
        } else if a >= self.inner + self.width {
            self.rho_at_outer() + self.sat * (a - self.inner - self.width)
        } else {
            let t = (a - self.inner) / self.width;
            0.5 * self.slope * self.inner * self.inner
                + self.width * (y0 * t + (self.sat - y0) * blend_i(t))
        }
    }

    fn rho_at_outer(&self) -> f64 {
        let y0 = self.slope * self.inner;
        // blend_i(1) = 0.6
        0.5 * self.slope * self.inner * self.inner + self.width * (y0 + (self.sat - y0) * 0.6)
    }
}

impl ScoreFamily {
    pub const DEFAULT_HUBER_K: f64 = 0.98;

    /// Exact-L1 sentinel (block medians in the solver).
    pub fn l1() -> Self {
        ScoreFamily::SmoothedL1 { m: f64::INFINITY }
    }

    pub fn validate(&self) -> crate::Result<()> {
        match *self {
            ScoreFamily::L2 => Ok(()),
            ScoreFamily::Huber { k } => {
                if k > 0.0 && k.is_finite() {
                    Ok(())
                } else {
                    Err(IsoError::InvalidInput(format!("huber k must be > 0, got {k}")))
                }
            }
            ScoreFamily::SmoothedL1 { m } => {
                if m > 1.0 {
                    Ok(())
                } else {
                    Err(IsoError::InvalidInput(format!("sl1 m must be > 1, got {m}")))
                }
            }
            ScoreFamily::SmoothedHuber { k, m } => {
                if !(k > 0.0 && k.is_finite()) {
                    Err(IsoError::InvalidInput(format!("shuber k must be > 0, got {k}")))
                } else if !(m > 1.0 && m.is_finite()) {
                    Err(IsoError::InvalidInput(format!("shuber m must be > 1, got {m}")))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// True for the exact-L1 sentinel `SmoothedL1 { m: inf }`.
    pub fn is_l1_limit(&self) -> bool {
        matches!(self, ScoreFamily::SmoothedL1 { m } if m.is_infinite())
    }

    fn saturating(&self) -> Option<Saturating> {
        match *self {
            ScoreFamily::L2 => None,
            // Exact Huber has an empty band: handled separately so that
            // psi'(k) = 0 by convention rather than a 0/0 in the blend.
            ScoreFamily::Huber { .. } => None,
            ScoreFamily::SmoothedL1 { m } => {
                if m.is_infinite() {
                    None
                } else {
                    Some(Saturating {
                        slope: m,
                        inner: 1.0 / m - 1.0 / (m * m),
                        width: 1.0 / (m * m),
                        sat: 1.0,
                    })
                }
            }
            ScoreFamily::SmoothedHuber { k, m } => Some(Saturating {
                slope: 1.0,
                inner: k - k / m,
                width: k / m,
                sat: k,
            }),
        }
    }

    /// Loss value `rho(u)`; even, `rho(0) = 0`.
    pub fn rho(&self, u: f64) -> f64 {
        let a = u.abs();
        match *self {
            ScoreFamily::L2 => u * u,
            ScoreFamily::Huber { k } => {
                if a <= k {
                    0.5 * a * a
                } else {
                    k * a - 0.5 * k * k
                }
            }
            ScoreFamily::SmoothedL1 { m } if m.is_infinite() => a,
            _ => self.saturating().expect("non-degenerate family").rho(a),
        }
    }

    /// Score value `psi(u) = rho'(u)`; odd, nondecreasing.
    pub fn psi(&self, u: f64) -> f64 {
        let s = if u < 0.0 { -1.0 } else { 1.0 };
        let a = u.abs();
        s * match *self {
            ScoreFamily::L2 => 2.0 * a,
            ScoreFamily::Huber { k } => a.min(k),
            ScoreFamily::SmoothedL1 { m } if m.is_infinite() => {
                if a == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
            _ => self.saturating().expect("non-degenerate family").psi(a),
        }
    }

    /// Score derivative `psi'(u) >= 0`; even.
    ///
    /// For exact Huber the value at the kink `|u| = k` is 0 by convention.
    /// For the exact-L1 sentinel it is 0 everywhere (the derivative does
    /// not exist at 0; the solver never differentiates on that path).
    pub fn psi_prime(&self, u: f64) -> f64 {
        let a = u.abs();
        match *self {
            ScoreFamily::L2 => 2.0,
            ScoreFamily::Huber { k } => {
                if a < k {
                    1.0
                } else {
                    0.0
                }
            }
            ScoreFamily::SmoothedL1 { m } if m.is_infinite() => 0.0,
            _ => self.saturating().expect("non-degenerate family").psi_prime(a),
        }
    }

    /// `sup |psi|`; `None` for the unbounded L2 score.
    pub fn psi_sup(&self) -> Option<f64> {
        match *self {
            ScoreFamily::L2 => None,
            ScoreFamily::Huber { k } | ScoreFamily::SmoothedHuber { k, .. } => Some(k),
            ScoreFamily::SmoothedL1 { .. } => Some(1.0),
        }
    }

    /// Smallest `a` with `psi'(u) = 0` for all `|u| >= a`; `None` for L2.
    pub fn saturation_point(&self) -> Option<f64> {
        match *self {
            ScoreFamily::L2 => None,
            ScoreFamily::Huber { k } | ScoreFamily::SmoothedHuber { k, .. } => Some(k),
            ScoreFamily::SmoothedL1 { m } => {
                if m.is_infinite() {
                    Some(0.0)
                } else {
                    Some(1.0 / m)
                }
            }
        }
    }

    /// Abscissas (on `u >= 0`) where `psi` changes analytic form; used to
    /// split quadrature intervals.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            ScoreFamily::L2 => vec![],
            ScoreFamily::Huber { k } => vec![k],
            ScoreFamily::SmoothedL1 { m } => {
                if m.is_infinite() {
                    vec![0.0]
                } else {
                    vec![1.0 / m - 1.0 / (m * m), 1.0 / m]
                }
            }
            ScoreFamily::SmoothedHuber { k, m } => vec![k - k / m, k],
        }
    }
}

impl fmt::Display for ScoreFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScoreFamily::L2 => write!(f, "l2"),
            ScoreFamily::Huber { k } => write!(f, "huber:k={k}"),
            ScoreFamily::SmoothedL1 { m } => {
                if m.is_infinite() {
                    write!(f, "l1")
                } else {
                    write!(f, "sl1:m={m}")
                }
            }
            ScoreFamily::SmoothedHuber { k, m } => write!(f, "shuber:k={k},m={m}"),
        }
    }
}

fn parse_kv(spec: &str, key: &str) -> Result<f64, IsoError> {
    for part in spec.split(',') {
        if let Some(v) = part.strip_prefix(key).and_then(|p| p.strip_prefix('=')) {
            let v = if v == "inf" {
                f64::INFINITY
            } else {
                v.parse::<f64>()
                    .map_err(|_| IsoError::InvalidInput(format!("bad number for {key}: {v}")))?
            };
            return Ok(v);
        }
    }
    Err(IsoError::InvalidInput(format!("missing parameter {key} in '{spec}'")))
}

impl FromStr for ScoreFamily {
    type Err = IsoError;

    /// Accepts `l2`, `l1`, `huber:k=0.98`, `sl1:m=1000` (`m=inf` for the
    /// exact L1 path) and `shuber:k=0.98,m=1000`. Bare `huber`, `sl1` and
    /// `shuber` use k=0.98 and m=1000.
    fn from_str(s: &str) -> Result<Self, IsoError> {
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let fam = match name {
            "l2" => ScoreFamily::L2,
            "l1" => ScoreFamily::l1(),
            "huber" => ScoreFamily::Huber {
                k: args.map_or(Ok(Self::DEFAULT_HUBER_K), |a| parse_kv(a, "k"))?,
            },
            "sl1" => ScoreFamily::SmoothedL1 {
                m: args.map_or(Ok(1000.0), |a| parse_kv(a, "m"))?,
            },
            "shuber" => ScoreFamily::SmoothedHuber {
                k: args.map_or(Ok(Self::DEFAULT_HUBER_K), |a| parse_kv(a, "k"))?,
                m: args.map_or(Ok(1000.0), |a| parse_kv(a, "m"))?,
            },
            other => {
                return Err(IsoError::InvalidInput(format!("unknown score family '{other}'")))
            }
        };
        fam.validate()?;
        Ok(fam)
    }
}

impl Serialize for ScoreFamily {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ScoreFamily {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|e| D::Error::custom(format!("{e}")))
    }
}
