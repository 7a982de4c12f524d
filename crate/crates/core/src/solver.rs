//! Isotonic M-estimation.
//!
//! Production path: generalized pool-adjacent-violators (PAVA) where each
//! merged block is re-solved for its M-estimate of location. Verification
//! path: the literal min-max formula over data windows,
//! `mu(t) = max_{u<=t} min_{v>=t} mu(u, v)`, kept as an O(n^3) oracle.
//!
//! Observations sharing an observation point `t` always belong to the same
//! block: the fitted object is a function of `t`.

use serde::{Deserialize, Serialize};

use crate::psi::ScoreFamily;
use crate::scale::{estimate_scale, ScaleEstimate, ScaleMethod};
use crate::{IsoError, Result};

/// Ordered sample of `(t, x)` pairs. Stored sorted by `t` (stable, so ties
/// keep their input order); original positions are retained.
#[derive(Debug, Clone)]
pub struct DesignSample {
    t: Vec<f64>,
    x: Vec<f64>,
    orig: Vec<usize>,
}

impl DesignSample {
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(IsoError::InvalidInput("empty sample".into()));
        }
        for (i, &(t, x)) in pairs.iter().enumerate() {
            if !t.is_finite() || !x.is_finite() {
                return Err(IsoError::InvalidInput(format!(
                    "non-finite value at row {}: ({t}, {x})",
                    i + 1
                )));
            }
        }
        let mut idx: Vec<usize> = (0..pairs.len()).collect();
        idx.sort_by(|&a, &b| pairs[a].0.total_cmp(&pairs[b].0));
        Ok(DesignSample {
            t: idx.iter().map(|&i| pairs[i].0).collect(),
            x: idx.iter().map(|&i| pairs[i].1).collect(),
            orig: idx,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction guarantees n >= 1
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Original (pre-sort) row index of each stored point.
    pub fn original_indices(&self) -> &[usize] {
        &self.orig
    }

    /// Same design with the responses replaced (in stored, t-sorted order).
    pub fn with_responses(&self, x: Vec<f64>) -> Result<Self> {
        if x.len() != self.t.len() {
            return Err(IsoError::InvalidInput("response length mismatch".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(IsoError::InvalidInput("non-finite response".into()));
        }
        Ok(DesignSample { t: self.t.clone(), x, orig: self.orig.clone() })
    }

    /// Half-open index ranges of equal-t groups, in order.
    pub fn tie_groups(&self) -> Vec<(usize, usize)> {
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..self.t.len() {
            if self.t[i] != self.t[i - 1] {
                groups.push((start, i));
                start = i;
            }
        }
        groups.push((start, self.t.len()));
        groups
    }
}

/// Contiguous index block `[start, end)` with its fitted level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block {
    pub start: usize,
    pub end: usize,
    pub level: f64,
}

/// Result of an isotonic M-fit: block partition, per-point fitted values
/// and residuals (in t-sorted order), the scale and family used, and the
/// attained objective `sum rho(residual / scale)`.
#[derive(Debug, Clone)]
pub struct IsotonicFit {
    pub blocks: Vec<Block>,
    pub fitted: Vec<f64>,
    pub residuals: Vec<f64>,
    pub scale: ScaleEstimate,
    pub family: ScoreFamily,
    pub objective: f64,
}

/// M-estimate of location for one block: the zero of
/// `S(mu) = sum psi((x_j - mu)/sigma)`, which is nonincreasing in `mu`.
/// When the zero set is an interval (saturated scores), its midpoint is
/// returned. L2 short-circuits to the mean and the exact-L1 sentinel to
/// the median.
pub fn block_m_estimate(values: &[f64], f: &ScoreFamily, sigma: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(IsoError::EmptyBlock);
    }
    if values.len() == 1 {
        return Ok(values[0]);
    }
    match f {
        ScoreFamily::L2 => {
            let sum: f64 = values.iter().sum();
            Ok(sum / values.len() as f64)
        }
        _ if f.is_l1_limit() => Ok(median(values)),
        _ => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                return Ok(lo);
            }
            let s = |mu: f64| values.iter().map(|&x| f.psi((x - mu) / sigma)).sum::<f64>();
            // The zero set is [sup{S>0}, inf{S<0}]; find both ends and
            // return the midpoint. Bisection runs to machine precision.
            let a = bisect_split(&s, lo, hi, |v| v > 0.0);
            let b = bisect_split(&s, a.max(lo), hi, |v| v >= 0.0);
            Ok(0.5 * (a + b))
        }
    }
}

/// Bisection boundary point: largest `mu` in `[lo, hi]` where `keep_low`
/// still holds for `S(mu)` (S nonincreasing). Runs until the interval no
/// longer shrinks in f64.
fn bisect_split<S: Fn(f64) -> f64, P: Fn(f64) -> bool>(
    s: &S,
    mut lo: f64,
    mut hi: f64,
    keep_low: P,
) -> f64 {
    if !keep_low(s(lo)) {
        return lo;
    }
    if keep_low(s(hi)) {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if keep_low(s(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Windowed score sum `S_n(u, v, mu) = sum_{u <= t_j <= v} psi((x_j - mu)/sigma)`.
/// An empty window contributes 0.
pub fn s_n(
    sample: &DesignSample,
    u: f64,
    v: f64,
    mu: f64,
    f: &ScoreFamily,
    sigma: f64,
) -> f64 {
    sample
        .t()
        .iter()
        .zip(sample.x())
        .filter(|(&t, _)| t >= u && t <= v)
        .map(|(_, &x)| f.psi((x - mu) / sigma))
        .sum()
}

/// Generalized PAVA with per-block M-step. Initial blocks are equal-t
/// groups; adjacent blocks merge while their levels violate monotonicity,
/// and every merged block is re-solved from its raw values.
pub fn fit_pava(sample: &DesignSample, f: &ScoreFamily, sigma: f64) -> Result<IsotonicFit> {
    f.validate()?;
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(IsoError::InvalidInput(format!("scale must be positive, got {sigma}")));
    }
    let x = sample.x();
    let mut blocks: Vec<Block> = Vec::new();
    for (start, end) in sample.tie_groups() {
        let level = block_m_estimate(&x[start..end], f, sigma)?;
        blocks.push(Block { start, end, level });
        while blocks.len() >= 2 {
            let cur = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if prev.level <= cur.level {
                break;
            }
            let merged_level = block_m_estimate(&x[prev.start..cur.end], f, sigma)?;
            blocks.pop();
            blocks.pop();
            blocks.push(Block { start: prev.start, end: cur.end, level: merged_level });
        }
    }
    // Coalesce exactly-equal adjacent levels so block levels are strictly
    // increasing. S(level) stays zero for the union, so no re-solve.
    let mut coalesced: Vec<Block> = Vec::with_capacity(blocks.len());
    for b in blocks {
        match coalesced.last_mut() {
            Some(last) if last.level == b.level => last.end = b.end,
            _ => coalesced.push(b),
        }
    }
    assemble(sample, f, sigma, coalesced, None)
}

/// Literal min-max oracle: `mu(t_i) = max_{u <= t_i} min_{v >= t_i}` of the
/// windowed block M-estimate. O(n^3) block solves; intended for n up to a
/// couple hundred.
pub fn fit_minmax_oracle(sample: &DesignSample, f: &ScoreFamily, sigma: f64) -> Result<IsotonicFit> {
    f.validate()?;
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(IsoError::InvalidInput(format!("scale must be positive, got {sigma}")));
    }
    let x = sample.x();
    let groups = sample.tie_groups();
    let g = groups.len();
    let mut group_value = vec![0.0f64; g];
    for (gi, value) in group_value.iter_mut().enumerate() {
        let mut best_max = f64::NEG_INFINITY;
        for ui in 0..=gi {
            let start = groups[ui].0;
            let mut best_min = f64::INFINITY;
            for &(_, end) in &groups[gi..g] {
                let m = block_m_estimate(&x[start..end], f, sigma)?;
                best_min = best_min.min(m);
            }
            best_max = best_max.max(best_min);
        }
        *value = best_max;
    }
    let mut blocks: Vec<Block> = Vec::new();
    for (gi, &(start, end)) in groups.iter().enumerate() {
        match blocks.last_mut() {
            Some(last) if last.level == group_value[gi] => last.end = end,
            _ => blocks.push(Block { start, end, level: group_value[gi] }),
        }
    }
    assemble(sample, f, sigma, blocks, None)
}

/// End-to-end fit: estimates the scale with `method`, then runs PAVA.
pub fn fit(sample: &DesignSample, f: &ScoreFamily, method: &ScaleMethod) -> Result<IsotonicFit> {
    let scale = estimate_scale(sample, method, f)?;
    let sigma = scale.value;
    let partial = fit_pava(sample, f, sigma)?;
    assemble(sample, f, sigma, partial.blocks, Some(scale))
}

fn assemble(
    sample: &DesignSample,
    f: &ScoreFamily,
    sigma: f64,
    blocks: Vec<Block>,
    scale: Option<ScaleEstimate>,
) -> Result<IsotonicFit> {
    let n = sample.len();
    let mut fitted = vec![0.0; n];
    for b in &blocks {
        for v in &mut fitted[b.start..b.end] {
            *v = b.level;
        }
    }
    let residuals: Vec<f64> = sample.x().iter().zip(&fitted).map(|(x, f)| x - f).collect();
    let objective = residuals.iter().map(|&r| f.rho(r / sigma)).sum();
    Ok(IsotonicFit {
        blocks,
        fitted,
        residuals,
        scale: scale.unwrap_or(ScaleEstimate {
            value: sigma,
            method: ScaleMethod::Fixed { sigma0: sigma },
            n_used: 0,
        }),
        family: *f,
        objective,
    })
}

impl IsotonicFit {
    /// Right-continuous step prediction: the level of the block owning the
    /// largest `t_j <= t`; below the first design point, the first level.
    pub fn predict(&self, sample: &DesignSample, t: f64) -> f64 {
        let ts = sample.t();
        // index of last t_j <= t
        let idx = ts.partition_point(|&tj| tj <= t);
        if idx == 0 {
            self.fitted[0]
        } else {
            self.fitted[idx - 1]
        }
    }

    pub fn to_document(&self) -> FitDocument {
        FitDocument {
            family: self.family,
            scale: ScaleDoc { method: self.scale.method.to_string(), value: self.scale.value },
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockDoc { from: b.start + 1, to: b.end, level: b.level })
                .collect(),
            objective: self.objective,
        }
    }
}

/// Serializable fit summary. Block indices are 1-based inclusive into the
/// t-sorted sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub family: ScoreFamily,
    pub scale: ScaleDoc,
    pub blocks: Vec<BlockDoc>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleDoc {
    pub method: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDoc {
    pub from: usize,
    pub to: usize,
    pub level: f64,
}
