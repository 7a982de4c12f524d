//! Asymptotic-variance machinery for the n^{1/3} limit law.
//!
//! The isotonic M-estimator at an interior point converges, after
//! `n^{1/3}` scaling and division by
//! `[1/2 mu'(t0) H'(t0) sigma0^2 E psi^2(u/sigma0) / (E psi'(u/sigma0))^2]^{1/3}`,
//! to the slope at zero of the greatest convex minorant of two-sided
//! Brownian motion with parabolic drift. This module computes the constant
//! (quadrature against the error density) and simulates the limit law on a
//! discretized grid.

use rand::Rng;
use rand_distr::{Distribution, Normal as NormalDist, StudentT as StudentTDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::psi::ScoreFamily;
use crate::quad::{bisect_nonincreasing, integrate_split};
use crate::rngutil::replicate_rng;
use crate::{IsoError, Result};

/// Symmetric error distribution: density, tail mass, variance and draws.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorModel {
    Normal { sigma: f64 },
    StudentT { df: f64 },
    /// Density given on a symmetric grid of `(x, g(x))` points, linearly
    /// interpolated and normalized to unit mass.
    Tabulated { grid: Vec<(f64, f64)> },
    /// Point mass at 0; a zero-noise diagnostics mode. Has no density, so
    /// quadrature-based operations reject it.
    Degenerate,
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            ErrorModel::Normal { sigma } => {
                if *sigma > 0.0 && sigma.is_finite() {
                    Ok(())
                } else {
                    Err(IsoError::InvalidInput(format!("normal sigma must be > 0, got {sigma}")))
                }
            }
            ErrorModel::StudentT { df } => {
                if *df > 0.0 && df.is_finite() {
                    Ok(())
                } else {
                    Err(IsoError::InvalidInput(format!("student df must be > 0, got {df}")))
                }
            }
            ErrorModel::Tabulated { grid } => {
                if grid.len() < 3 {
                    return Err(IsoError::InvalidInput("tabulated grid needs >= 3 points".into()));
                }
                if grid.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(IsoError::InvalidInput("tabulated grid must be increasing".into()));
                }
                if grid.iter().any(|&(x, g)| !x.is_finite() || !g.is_finite() || g < 0.0) {
                    return Err(IsoError::InvalidInput("tabulated densities must be >= 0".into()));
                }
                // symmetry about 0 with g(0) > 0
                let g0 = interp(grid, 0.0);
                if g0 <= 0.0 {
                    return Err(IsoError::InvalidInput("tabulated density must have g(0) > 0".into()));
                }
                let half = grid.last().unwrap().0.min(-grid[0].0);
                for i in 0..=16 {
                    let x = half * i as f64 / 16.0;
                    let (a, b) = (interp(grid, x), interp(grid, -x));
                    if (a - b).abs() > 1e-6 * (1.0 + a.abs()) {
                        return Err(IsoError::InvalidInput(
                            "tabulated density must be symmetric about 0".into(),
                        ));
                    }
                }
                Ok(())
            }
            ErrorModel::Degenerate => Ok(()),
        }
    }

    /// Density `g(x)`; errors for the degenerate model.
    pub fn density(&self, x: f64) -> Result<f64> {
        match self {
            ErrorModel::Normal { sigma } => {
                Ok(Normal::new(0.0, *sigma).expect("validated").pdf(x))
            }
            ErrorModel::StudentT { df } => {
                Ok(StudentsT::new(0.0, 1.0, *df).expect("validated").pdf(x))
            }
            ErrorModel::Tabulated { grid } => Ok(interp(grid, x) / self.tabulated_mass()),
            ErrorModel::Degenerate => Err(IsoError::NonIdentifiable),
        }
    }

    /// Two-sided tail mass `P(|u| > a)` for `a >= 0`.
    pub fn tail(&self, a: f64) -> Result<f64> {
        match self {
            ErrorModel::Normal { sigma } => {
                let d = Normal::new(0.0, *sigma).expect("validated");
                Ok(2.0 * d.sf(a))
            }
            ErrorModel::StudentT { df } => {
                let d = StudentsT::new(0.0, 1.0, *df).expect("validated");
                Ok(2.0 * d.sf(a))
            }
            ErrorModel::Tabulated { grid } => {
                let mass = self.tabulated_mass();
                let upper = grid.last().unwrap().0;
                if a >= upper {
                    return Ok(0.0);
                }
                let t = integrate_split(&|x| interp(grid, x), a, upper, &[], 1e-12);
                Ok(2.0 * t / mass)
            }
            ErrorModel::Degenerate => Ok(0.0),
        }
    }

    pub fn variance(&self) -> Result<f64> {
        match self {
            ErrorModel::Normal { sigma } => Ok(sigma * sigma),
            ErrorModel::StudentT { df } => {
                if *df > 2.0 {
                    Ok(df / (df - 2.0))
                } else {
                    Err(IsoError::DomainError(format!("t({df}) has no finite variance")))
                }
            }
            ErrorModel::Tabulated { grid } => {
                let mass = self.tabulated_mass();
                let (lo, hi) = (grid[0].0, grid.last().unwrap().0);
                Ok(integrate_split(&|x| x * x * interp(grid, x), lo, hi, &[], 1e-12) / mass)
            }
            ErrorModel::Degenerate => Ok(0.0),
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorModel::Normal { sigma } => {
                NormalDist::new(0.0, *sigma).expect("validated").sample(rng)
            }
            ErrorModel::StudentT { df } => {
                StudentTDist::new(*df).expect("validated").sample(rng)
            }
            ErrorModel::Tabulated { grid } => {
                // inverse-CDF on the piecewise-linear density
                let u: f64 = rng.gen();
                self.tabulated_quantile(u, grid)
            }
            ErrorModel::Degenerate => 0.0,
        }
    }

    fn tabulated_mass(&self) -> f64 {
        match self {
            ErrorModel::Tabulated { grid } => grid
                .windows(2)
                .map(|w| 0.5 * (w[1].1 + w[0].1) * (w[1].0 - w[0].0))
                .sum(),
            _ => unreachable!(),
        }
    }

    fn tabulated_quantile(&self, u: f64, grid: &[(f64, f64)]) -> f64 {
        let mass = self.tabulated_mass();
        let target = u * mass;
        let mut acc = 0.0;
        for w in grid.windows(2) {
            let seg = 0.5 * (w[1].1 + w[0].1) * (w[1].0 - w[0].0);
            if acc + seg >= target {
                let frac = if seg > 0.0 { (target - acc) / seg } else { 0.0 };
                return w[0].0 + frac * (w[1].0 - w[0].0);
            }
            acc += seg;
        }
        grid.last().unwrap().0
    }
}

fn interp(grid: &[(f64, f64)], x: f64) -> f64 {
    if x <= grid[0].0 || x >= grid.last().unwrap().0 {
        return 0.0;
    }
    let j = grid.partition_point(|&(gx, _)| gx <= x);
    let (x0, y0) = grid[j - 1];
    let (x1, y1) = grid[j];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// `E_G psi^2(u/sigma0) / [E_G psi'(u/sigma0)]^2` by adaptive quadrature
/// against the error density (relative accuracy ~1e-6 or better).
pub fn efficiency_ratio(f: &ScoreFamily, model: &ErrorModel, sigma0: f64) -> Result<f64> {
    f.validate()?;
    model.validate()?;
    if sigma0 <= 0.0 || !sigma0.is_finite() {
        return Err(IsoError::InvalidInput(format!("sigma0 must be > 0, got {sigma0}")));
    }
    match f {
        ScoreFamily::L2 => {
            // psi(u/s) = 2u/s, psi' = 2: the ratio collapses to E u^2 / s^2,
            // and sigma0^2 * ratio to the error variance.
            Ok(model.variance()? / (sigma0 * sigma0))
        }
        _ if f.is_l1_limit() => {
            // Remark-2 limit: E psi_m^2 -> 1, E psi_m'(u/s) -> 2 g(0) s.
            let g0 = model.density(0.0)?;
            if g0 <= 0.0 {
                return Err(IsoError::NonIdentifiable);
            }
            Ok(1.0 / (4.0 * g0 * g0 * sigma0 * sigma0))
        }
        _ => {
            let sat = sigma0 * f.saturation_point().expect("bounded family");
            let sup = f.psi_sup().expect("bounded family");
            let mut breaks: Vec<f64> = Vec::new();
            for bp in f.breakpoints() {
                breaks.push(sigma0 * bp);
                breaks.push(-sigma0 * bp);
            }
            breaks.push(0.0);
            let g = |u: f64| model.density(u).unwrap_or(0.0);
            let tol = 1e-11 * (1.0 + sup * sup);
            let e_psi2 = integrate_split(&|u| f.psi(u / sigma0).powi(2) * g(u), -sat, sat, &breaks, tol)
                + sup * sup * model.tail(sat)?;
            let e_psip =
                integrate_split(&|u| f.psi_prime(u / sigma0) * g(u), -sat, sat, &breaks, tol);
            if e_psip <= 1e-12 {
                return Err(IsoError::NonIdentifiable);
            }
            Ok(e_psi2 / (e_psip * e_psip))
        }
    }
}

/// The population scale `sigma0` implied by the bisquare M-scale:
/// `E_G chi_c(u / sigma0) = b`.
pub fn limit_m_scale(model: &ErrorModel, c: f64, b: f64) -> Result<f64> {
    model.validate()?;
    if !b.is_finite() || b <= 0.0 || b >= 1.0 || !c.is_finite() || c <= 0.0 {
        return Err(IsoError::InvalidInput("need c > 0 and b in (0,1)".into()));
    }
    if matches!(model, ErrorModel::Degenerate) {
        return Err(IsoError::DegenerateSample);
    }
    let objective = |s: f64| -> f64 {
        // chi == 1 outside [-cs, cs]
        let inner = integrate_split(
            &|u| crate::scale::bisquare_chi(u / s, c) * model.density(u).unwrap_or(0.0),
            -c * s,
            c * s,
            &[0.0],
            1e-12,
        );
        inner + model.tail(c * s).unwrap_or(0.0)
    };
    Ok(bisect_nonincreasing(&|s| objective(s) - b, 1e-8, 1e8, 1e-12))
}

/// Asymptotic-variance report for `n^{1/3} (mu_hat(t0) - mu(t0))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvarReport {
    /// `E psi^2(u/sigma0) / [E psi'(u/sigma0)]^2`
    pub ratio: f64,
    /// `1/2 mu'(t0) H'(t0) sigma0^2 ratio`
    pub kappa: f64,
    /// `kappa^{2/3} * var_chernoff`
    pub avar: f64,
    pub var_chernoff: f64,
}

pub const VAR_CHERNOFF_DEFAULT: f64 = 1.04;

pub fn avar(
    f: &ScoreFamily,
    model: &ErrorModel,
    mu_prime_t0: f64,
    h_t0: f64,
    sigma0: f64,
    var_chernoff: f64,
) -> Result<AvarReport> {
    if mu_prime_t0 <= 0.0 {
        return Err(IsoError::DomainError(format!("mu'(t0) must be > 0, got {mu_prime_t0}")));
    }
    if h_t0 <= 0.0 {
        return Err(IsoError::DomainError(format!("H'(t0) must be > 0, got {h_t0}")));
    }
    let ratio = efficiency_ratio(f, model, sigma0)?;
    let kappa = 0.5 * mu_prime_t0 * h_t0 * sigma0 * sigma0 * ratio;
    Ok(AvarReport { ratio, kappa, avar: kappa.powf(2.0 / 3.0) * var_chernoff, var_chernoff })
}

/// Greatest convex minorant of points with strictly increasing abscissas:
/// the lower convex hull, as a vertex list.
#[derive(Debug, Clone)]
pub struct Gcm {
    pub vertices: Vec<(f64, f64)>,
}

pub fn gcm(points: &[(f64, f64)]) -> Result<Gcm> {
    if points.len() < 2 {
        return Err(IsoError::InvalidInput("gcm needs at least 2 points".into()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(IsoError::InvalidInput("gcm abscissas must be strictly increasing".into()));
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(64);
    for &p in points {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            // pop collinear points too, so the hull vertices are strict
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    Ok(Gcm { vertices: hull })
}

impl Gcm {
    /// Value of the minorant at `v` (linear between vertices, extrapolated
    /// with the end segments outside).
    pub fn value_at(&self, v: f64) -> f64 {
        let i = self.segment_index(v);
        let (x0, y0) = self.vertices[i];
        y0 + self.segment_slope(i) * (v - x0)
    }

    /// Slope of the hull segment whose interval contains `v`; if `v` is a
    /// vertex the left segment is taken.
    pub fn slope_at(&self, v: f64) -> f64 {
        self.segment_slope(self.segment_index(v))
    }

    fn segment_index(&self, v: f64) -> usize {
        let n = self.vertices.len();
        // left segment when v is a vertex: first i with vertices[i].0 >= v
        let j = self.vertices.partition_point(|&(x, _)| x < v);
        j.saturating_sub(1).min(n - 2)
    }

    fn segment_slope(&self, i: usize) -> f64 {
        let (x0, y0) = self.vertices[i];
        let (x1, y1) = self.vertices[i + 1];
        (y1 - y0) / (x1 - x0)
    }

    pub fn slopes(&self) -> Vec<f64> {
        (0..self.vertices.len() - 1).map(|i| self.segment_slope(i)).collect()
    }
}

/// Grid configuration for simulating `slogcm(W(v) + v^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffConfig {
    pub half_width: f64,
    pub step: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Replicate draws of the limit-law slope with their grid configuration.
#[derive(Debug, Clone)]
pub struct ChernoffSample {
    pub slopes: Vec<f64>,
    pub config: ChernoffConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernoffSummary {
    pub reps: usize,
    pub mean: f64,
    pub var: f64,
    pub stderr_mean: f64,
    pub stderr_var: f64,
}

/// Simulates the slope at zero of the greatest convex minorant of
/// `W(v) + v^2` on the grid `{-L, ..., 0, ..., L}` with spacing `step`.
/// `W` is built from independent Gaussian increments on each side of 0,
/// one private RNG stream per replicate.
pub fn simulate_chernoff(config: ChernoffConfig) -> Result<ChernoffSample> {
    let ChernoffConfig { half_width: l, step, reps, seed } = config;
    if !l.is_finite() || l < 2.0 {
        return Err(IsoError::ConfigError(format!("half_width must be >= 2, got {l}")));
    }
    if !(step > 0.0 && step <= 0.01) {
        return Err(IsoError::ConfigError(format!("step must be in (0, 0.01], got {step}")));
    }
    if reps < 1 {
        return Err(IsoError::ConfigError("reps must be >= 1".into()));
    }
    let n_side = (l / step).round() as usize;
    let slopes: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep as u64);
            let sd = step.sqrt();
            let gauss = NormalDist::new(0.0, sd).expect("positive sd");
            let mut points = vec![(0.0f64, 0.0f64); 2 * n_side + 1];
            // right side: W accumulates forward from 0
            let mut w = 0.0;
            for i in 1..=n_side {
                w += gauss.sample(&mut rng);
                let v = i as f64 * step;
                points[n_side + i] = (v, w + v * v);
            }
            // left side: independent increments, accumulated away from 0
            let mut w = 0.0;
            for i in 1..=n_side {
                w += gauss.sample(&mut rng);
                let v = -(i as f64) * step;
                points[n_side - i] = (v, w + v * v);
            }
            let hull = gcm(&points).expect("grid is strictly increasing");
            hull.slope_at(0.0)
        })
        .collect();
    Ok(ChernoffSample { slopes, config })
}

impl ChernoffSample {
    pub fn summary(&self) -> ChernoffSummary {
        let n = self.slopes.len() as f64;
        let mean = self.slopes.iter().sum::<f64>() / n;
        let var = if self.slopes.len() > 1 {
            self.slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let m4 = self.slopes.iter().map(|s| (s - mean).powi(4)).sum::<f64>() / n;
        ChernoffSummary {
            reps: self.slopes.len(),
            mean,
            var,
            stderr_mean: (var / n).sqrt(),
            stderr_var: ((m4 - var * var).max(0.0) / n).sqrt(),
        }
    }
}
