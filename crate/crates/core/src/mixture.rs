//! Ground-truth mixture model: construction, seeded sampling, responsibilities
//! and densities in log space, and closed-form Gaussian norm utilities.
//!
//! All components share the identity covariance. Data generated under a known
//! common scale `sigma` can be mapped onto this model by rescaling the means
//! with [`MixtureConfig::rescaled_from_sigma`] and dividing the observations
//! by `sigma`.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::special::ln_gamma;
use crate::stacked::{dist, dist2, norm};
use crate::{exec, rng, Error, Result, Stacked};

const LN_2PI: f64 = 1.837_877_066_409_345_6;

/// Weight vector tolerance: weights must sum to 1 within this slack before
/// exact renormalization.
const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A Gaussian mixture with unit covariance: weights `pi` and component means.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureConfig {
    weights: Vec<f64>,
    means: Stacked,
}

/// Pairwise-separation geometry of a mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeparationStats {
    /// Minimum pairwise distance between component means.
    pub r_min: f64,
    /// Maximum pairwise distance between component means.
    pub r_max: f64,
    /// Weight imbalance `pi_max / pi_min`.
    pub kappa: f64,
    /// Effective dimension `min(d, M)`.
    pub d0: usize,
    /// Largest component mean norm.
    pub max_center_norm: f64,
}

/// Points drawn from a mixture. Labels record the hidden component of each
/// draw for diagnostics; estimation code only ever sees [`Sample::points`].
#[derive(Clone, Debug)]
pub struct Sample {
    points: Stacked,
    labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    dim: usize,
}

impl MixtureConfig {
    /// Validates and normalizes: positive weights summing to 1 within 1e-12
    /// (then renormalized exactly), finite pairwise-distinct means.
    pub fn new(weights: Vec<f64>, means: Stacked) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        if means.rows() != weights.len() {
            return Err(Error::InvalidMixture(format!(
                "{} weights for {} means",
                weights.len(),
                means.rows()
            )));
        }
        if !means.is_finite() {
            return Err(Error::InvalidMixture("non-finite mean".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidMixture("weights must be strictly positive".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {sum}, not 1")));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / sum).collect();
        for i in 0..means.rows() {
            for j in 0..i {
                if dist2(means.row(i), means.row(j)) == 0.0 {
                    return Err(Error::InvalidMixture(format!("means {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { weights, means })
    }

    pub fn from_rows(weights: Vec<f64>, means: &[Vec<f64>]) -> Result<Self> {
        Self::new(weights, Stacked::from_rows(means)?)
    }

    /// Equal-weight mixture.
    pub fn balanced(means: Stacked) -> Result<Self> {
        let m = means.rows();
        Self::new(vec![1.0 / m as f64; m], means)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Stacked {
        &self.means
    }

    pub fn mean(&self, i: usize) -> &[f64] {
        self.means.row(i)
    }

    pub fn pi_min(&self) -> f64 {
        self.weights.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn pi_max(&self) -> f64 {
        self.weights.iter().cloned().fold(0.0, f64::max)
    }

    /// Shift every mean by minus the weighted mean, so the mixture has zero
    /// expectation. Weights are unchanged.
    pub fn center_means(&self) -> MixtureConfig {
        let d = self.dim();
        let mut centroid = vec![0.0; d];
        for (w, mu) in self.weights.iter().zip(self.means.iter_rows()) {
            for k in 0..d {
                centroid[k] += w * mu[k];
            }
        }
        let mut means = self.means.clone();
        for i in 0..means.rows() {
            let row = means.row_mut(i);
            for k in 0..d {
                row[k] -= centroid[k];
            }
        }
        MixtureConfig { weights: self.weights.clone(), means }
    }

    /// True when the weighted mean of the centers is zero within `tol` per
    /// coordinate.
    pub fn is_centered(&self, tol: f64) -> bool {
        let d = self.dim();
        let mut centroid = vec![0.0; d];
        for (w, mu) in self.weights.iter().zip(self.means.iter_rows()) {
            for k in 0..d {
                centroid[k] += w * mu[k];
            }
        }
        centroid.iter().all(|c| c.abs() <= tol)
    }

    /// Map a known-common-scale model onto the unit-covariance one by
    /// dividing every mean by `sigma`; observations must be divided by the
    /// same factor.
    pub fn rescaled_from_sigma(&self, sigma: f64) -> Result<MixtureConfig> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        let mut means = self.means.clone();
        for v in means.as_mut_slice() {
            *v /= sigma;
        }
        MixtureConfig::new(self.weights.clone(), means)
    }

    /// Pairwise separation statistics; needs at least two components.
    pub fn separation_stats(&self) -> Result<SeparationStats> {
        let m = self.components();
        if m < 2 {
            return Err(Error::NeedTwoComponents);
        }
        let mut r_min = f64::INFINITY;
        let mut r_max = 0.0f64;
        for i in 0..m {
            for j in 0..i {
                let d = dist(self.means.row(i), self.means.row(j));
                r_min = r_min.min(d);
                r_max = r_max.max(d);
            }
        }
        let max_center_norm = (0..m).map(|i| self.means.row_norm(i)).fold(0.0, f64::max);
        Ok(SeparationStats {
            r_min,
            r_max,
            kappa: self.pi_max() / self.pi_min(),
            d0: self.dim().min(m),
            max_center_norm,
        })
    }

    /// Relabel components by `perm`: component `i` of the result is component
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<MixtureConfig> {
        if perm.len() != self.components() {
            return Err(Error::DimensionMismatch("permutation length".into()));
        }
        let weights = perm.iter().map(|&p| self.weights[p]).collect();
        MixtureConfig::new(weights, self.means.permuted_rows(perm)?)
    }

    /// Draw `n` points, deterministically in `seed`.
    ///
    /// Each point draws its label from `pi`, then `d` standard normal
    /// coordinates around the labelled mean. Generation is chunked with one
    /// ChaCha stream per fixed chunk, so the result is bit-identical for any
    /// thread count.
    ///
    /// # Panics
    /// When `n == 0`.
    pub fn sample(&self, n: usize, seed: u64) -> Sample {
        assert!(n >= 1, "sample size must be at least 1");
        let d = self.dim();
        let mut cum = Vec::with_capacity(self.components());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cum.push(acc);
        }
        let parts = exec::map_collect(exec::chunk_count(n), |c| {
            let range = exec::chunk_range(c, n);
            let mut rng = rng::stream_rng(seed, c as u64);
            let mut pts = Vec::with_capacity(range.len() * d);
            let mut labels = Vec::with_capacity(range.len());
            for _ in range {
                let u: f64 = rng.random();
                let label = cum.iter().position(|&c| u < c).unwrap_or(self.components() - 1);
                let mu = self.means.row(label);
                for &m in mu.iter().take(d) {
                    let z: f64 = rng.sample(StandardNormal);
                    pts.push(m + z);
                }
                labels.push(label);
            }
            (pts, labels)
        });
        let mut pts = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for (p, l) in parts {
            pts.extend_from_slice(&p);
            labels.extend_from_slice(&l);
        }
        Sample { points: Stacked::from_flat(d, pts).expect("chunk output shape"), labels }
    }

    /// Log density of the mixture at `x`, via log-sum-exp.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        let d = self.dim() as f64;
        let mut max = f64::NEG_INFINITY;
        let mut logs = Vec::with_capacity(self.components());
        for (w, mu) in self.weights.iter().zip(self.means.iter_rows()) {
            let v = w.ln() - 0.5 * dist2(x, mu);
            logs.push(v);
            max = max.max(v);
        }
        let sum: f64 = logs.iter().map(|v| (v - max).exp()).sum();
        max + sum.ln() - 0.5 * d * LN_2PI
    }

    /// Sub-gaussian norm bound of the mixture: `1 + sum_i pi_i * ||mu_i||`.
    pub fn mixture_subgaussian_norm(&self) -> f64 {
        1.0 + self
            .weights
            .iter()
            .zip(self.means.iter_rows())
            .map(|(w, mu)| w * norm(mu))
            .sum::<f64>()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file_repr()).expect("mixture serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ConfigFile = serde_json::from_str(s)
            .map_err(|e| Error::InvalidMixture(format!("config parse: {e}")))?;
        Self::from_file_repr(raw)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file_repr()).expect("mixture serializes")
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let raw: ConfigFile =
            toml::from_str(s).map_err(|e| Error::InvalidMixture(format!("config parse: {e}")))?;
        Self::from_file_repr(raw)
    }

    fn file_repr(&self) -> ConfigFile {
        ConfigFile { weights: self.weights.clone(), means: self.means.to_rows(), dim: self.dim() }
    }

    fn from_file_repr(raw: ConfigFile) -> Result<Self> {
        if raw.means.iter().any(|m| m.len() != raw.dim) {
            return Err(Error::InvalidMixture(format!(
                "declared dim {} does not match the means",
                raw.dim
            )));
        }
        Self::from_rows(raw.weights, &raw.means)
    }
}

impl Sample {
    pub fn points(&self) -> &Stacked {
        &self.points
    }

    /// Drop the labels and take the point stack.
    pub fn into_points(self) -> Stacked {
        self.points
    }

    /// Hidden component of each draw. Diagnostics only; estimators take the
    /// point stack, never a `Sample`.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// CSV with header `x1..xd,label`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let d = self.points.dim();
        for k in 1..=d {
            write!(w, "x{k},")?;
        }
        writeln!(w, "label")?;
        for (row, label) in self.points.iter_rows().zip(&self.labels) {
            for v in row {
                write!(w, "{v},")?;
            }
            writeln!(w, "{label}")?;
        }
        Ok(())
    }
}

pub(crate) fn ln_weights(weights: &[f64]) -> Vec<f64> {
    weights.iter().map(|w| w.ln()).collect()
}

/// Hot-path responsibilities: `out[i] = pi_i phi(x|mu_i) / sum_j ...`,
/// computed from log weights with a max shift. No validation.
pub(crate) fn resp_into(ln_w: &[f64], means: &Stacked, x: &[f64], out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (i, mu) in means.iter_rows().enumerate() {
        let v = ln_w[i] - 0.5 * dist2(x, mu);
        out[i] = v;
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Posterior component probabilities of `x` under (`weights`, `means`).
///
/// Works for any estimate of the means, not just the ground truth. Computed
/// in log space with a max shift; exponent gaps beyond ~745 round the losing
/// component to exactly zero.
pub fn responsibilities(weights: &[f64], means: &Stacked, x: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != means.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} means",
            weights.len(),
            means.rows()
        )));
    }
    if x.len() != means.dim() {
        return Err(Error::DimensionMismatch(format!(
            "point of dimension {} under means of dimension {}",
            x.len(),
            means.dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("responsibilities input point".into()));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let mut out = vec![0.0; weights.len()];
    resp_into(&ln_weights(weights), means, x, &mut out);
    Ok(out)
}

/// `E ||X - mu||^p` for `X ~ N(mu, sigma^2 I_d)`:
/// `2^{p/2} Gamma((p+d)/2) / Gamma(d/2) * sigma^p`.
pub fn gaussian_norm_moment(p: u32, d: usize, sigma: f64) -> f64 {
    assert!(d >= 1, "dimension must be positive");
    let p = f64::from(p);
    let d = d as f64;
    (0.5 * p * 2f64.ln() + ln_gamma((p + d) / 2.0) - ln_gamma(d / 2.0)).exp() * sigma.powf(p)
}

/// Tail bound `P(||X|| >= r) <= exp(-r sqrt(d) / 2)` for a standard Gaussian
/// in `d` dimensions; only valid for `r >= 2 sqrt(d)`.
pub fn gaussian_norm_tail(r: f64, d: usize) -> Result<f64> {
    let sd = (d as f64).sqrt();
    if !(r.is_finite() && r >= 2.0 * sd) {
        return Err(Error::TailBoundDomain);
    }
    Ok((-r * sd / 2.0).exp())
}

/// Covering-number bound `(1 + 2/eps)^d` for the unit sphere, `0 < eps <= 2`.
pub fn sphere_covering_bound(d: usize, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 2.0) {
        return Err(Error::CoveringRadius);
    }
    Ok((1.0 + 2.0 / eps).powi(d as i32))
}
