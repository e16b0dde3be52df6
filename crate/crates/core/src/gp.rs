//! Squared-exponential Gaussian-process machinery.
//!
//! All variances refer to the noisy observable (latent variance plus
//! `noise_variance`). Conditioning sets are held as an incrementally grown
//! lower Cholesky factor of `K_A + σ_n² I`, so evaluating a query against a
//! set of `m` samples costs `O(m²)` and a cached query only pays `O(m)` per
//! newly added sample.

use std::f64::consts::{E, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;

/// Conditional variances are clamped to at least this value before use.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Diagonal jitter tried, in order, when a new pivot is not positive.
pub const JITTER_LEVELS: [f64; 3] = [1e-10, 1e-8, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpHyperparams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl GpHyperparams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let h = Self {
            lengthscales,
            signal_variance,
            noise_variance,
        };
        h.validate()?;
        Ok(h)
    }

    /// Same lengthscale for all `dim` features.
    pub fn isotropic(dim: usize, lengthscale: f64, signal_variance: f64, noise_variance: f64) -> Result<Self> {
        Self::new(vec![lengthscale; dim], signal_variance, noise_variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidArgument("at least one lengthscale required".into()));
        }
        if self.lengthscales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidArgument(
                "lengthscales must be positive and finite".into(),
            ));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidArgument("signal variance must be positive".into()));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidArgument("noise variance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// Prior variance of the noisy observable, `σ_f² + σ_n²`.
    pub fn prior_variance(&self) -> f64 {
        self.signal_variance + self.noise_variance
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Kernel value without dimension checks; callers validate first.
    pub(crate) fn k(&self, x: &[f64], x2: &[f64]) -> f64 {
        let r2: f64 = x
            .iter()
            .zip(x2)
            .zip(&self.lengthscales)
            .map(|((a, b), l)| ((a - b) / l).powi(2))
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let h: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        h.validate()?;
        Ok(h)
    }

    /// Key-value text with 12 significant digits per number.
    pub fn to_toml_string(&self) -> String {
        let ls: Vec<String> = self.lengthscales.iter().map(|&l| sig12(l)).collect();
        format!(
            "lengthscales = [{}]\nsignal_variance = {}\nnoise_variance = {}\n",
            ls.join(", "),
            float_literal(self.signal_variance),
            float_literal(self.noise_variance)
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

fn float_literal(x: f64) -> String {
    let s = sig12(x);
    if s.contains(['.', 'e', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Squared-exponential covariance `σ_f² exp(-½ Σ_j ((x_j - x2_j)/ℓ_j)²)`.
pub fn se_kernel(x: &[f64], x2: &[f64], hyper: &GpHyperparams) -> Result<f64> {
    hyper.check_dim(x)?;
    hyper.check_dim(x2)?;
    Ok(hyper.k(x, x2))
}

/// Differential entropy of a scalar Gaussian with variance `variance`
/// (natural log), after applying [`VARIANCE_FLOOR`].
pub fn entropy_of_variance(variance: f64) -> f64 {
    0.5 * (2.0 * PI * E).ln() + 0.5 * variance.max(VARIANCE_FLOOR).ln()
}

/// A query point's whitened cross-covariance `L⁻¹ k_*` against a
/// [`ConditioningSet`], extended lazily as the set grows.
#[derive(Debug, Clone, Default)]
pub struct Whitened {
    coeffs: Vec<f64>,
    explained: f64,
}

impl Whitened {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// `k_*ᵀ (K + σ_n² I)⁻¹ k_*` over the samples folded in so far.
    pub fn explained(&self) -> f64 {
        self.explained
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }
}

/// Incremental Cholesky factor of the noisy Gram matrix of a growing set of
/// sample locations. Owned by a single selector run.
#[derive(Debug, Clone)]
pub struct ConditioningSet {
    hyper: GpHyperparams,
    points: Vec<Vec<f64>>,
    /// Row `j` of the lower factor, `j + 1` entries.
    rows: Vec<Vec<f64>>,
    /// Pivot variances (squared diagonal), the noisy conditional variance of
    /// each point at insertion time, jitter included.
    pivots: Vec<f64>,
}

impl ConditioningSet {
    pub fn new(hyper: GpHyperparams) -> Self {
        Self {
            hyper,
            points: Vec::new(),
            rows: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn with_points<'a>(hyper: GpHyperparams, points: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut set = Self::new(hyper);
        for p in points {
            set.push(p)?;
        }
        Ok(set)
    }

    pub fn hyper(&self) -> &GpHyperparams {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    /// Row `j` of the lower Cholesky factor.
    pub fn factor_row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    /// `ln det(K_A + σ_n² I)` including any jitter applied.
    pub fn log_det(&self) -> f64 {
        self.pivots.iter().map(|p| p.ln()).sum()
    }

    /// Extends `w` so it covers every sample currently in the set.
    /// `x` must be the same point `w` was started for.
    pub fn whiten_into(&self, x: &[f64], w: &mut Whitened) {
        for j in w.coeffs.len()..self.points.len() {
            let row = &self.rows[j];
            let dot: f64 = row[..j].iter().zip(&w.coeffs).map(|(a, b)| a * b).sum();
            let c = (self.hyper.k(x, &self.points[j]) - dot) / row[j];
            w.explained += c * c;
            w.coeffs.push(c);
        }
    }

    pub fn whiten(&self, x: &[f64]) -> Result<Whitened> {
        self.hyper.check_dim(x)?;
        let mut w = Whitened::default();
        self.whiten_into(x, &mut w);
        Ok(w)
    }

    /// Noisy conditional variance implied by a fully extended `w`, clamped to
    /// `[VARIANCE_FLOOR, prior]`.
    pub fn variance_from(&self, w: &Whitened) -> f64 {
        let prior = self.hyper.prior_variance();
        (prior - w.explained).clamp(VARIANCE_FLOOR, prior)
    }

    pub fn conditional_variance(&self, x: &[f64]) -> Result<f64> {
        let w = self.whiten(x)?;
        Ok(self.variance_from(&w))
    }

    /// Adds `x` to the set and returns its pivot variance.
    pub fn push(&mut self, x: &[f64]) -> Result<f64> {
        let w = self.whiten(x)?;
        self.push_whitened(x, w)
    }

    /// Adds `x` using an already extended whitened vector.
    pub fn push_whitened(&mut self, x: &[f64], mut w: Whitened) -> Result<f64> {
        self.hyper.check_dim(x)?;
        self.whiten_into(x, &mut w);
        let prior = self.hyper.prior_variance();
        let raw = prior - w.explained;
        let pivot = if raw >= VARIANCE_FLOOR {
            raw
        } else {
            JITTER_LEVELS
                .iter()
                .map(|j| raw + j)
                .find(|p| *p >= VARIANCE_FLOOR)
                .ok_or(Error::Factorization {
                    condition_estimate: prior / raw.abs().max(f64::MIN_POSITIVE),
                })?
        };
        let mut row = w.coeffs;
        row.push(pivot.sqrt());
        self.rows.push(row);
        self.pivots.push(pivot);
        self.points.push(x.to_vec());
        Ok(pivot)
    }

    /// Solves `L z = y` given the previous solution prefix; `z` grows to
    /// `self.len()`.
    pub fn forward_extend(&self, y: &[f64], z: &mut Vec<f64>) {
        for j in z.len()..self.points.len() {
            let row = &self.rows[j];
            let dot: f64 = row[..j].iter().zip(z.iter()).map(|(a, b)| a * b).sum();
            z.push((y[j] - dot) / row[j]);
        }
    }
}

/// Conditional variance of the noisy observable at `x` given sample
/// locations `conditioning`.
pub fn conditional_variance(x: &[f64], conditioning: &[Vec<f64>], hyper: &GpHyperparams) -> Result<f64> {
    let set = ConditioningSet::with_points(hyper.clone(), conditioning.iter().map(Vec::as_slice))?;
    set.conditional_variance(x)
}

/// Differential entropy `½ ln(2πe) + ½ ln σ²(x | A)` of the scalar
/// prediction at `x`.
pub fn differential_entropy(x: &[f64], conditioning: &[Vec<f64>], hyper: &GpHyperparams) -> Result<f64> {
    Ok(entropy_of_variance(conditional_variance(x, conditioning, hyper)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: f64,
    pub variance: f64,
}

/// GP posterior over a training set that may be grown one pair at a time.
#[derive(Debug, Clone)]
pub struct Posterior {
    set: ConditioningSet,
    targets: Vec<f64>,
    whitened_targets: Vec<f64>,
}

impl Posterior {
    pub fn new(hyper: GpHyperparams) -> Self {
        Self {
            set: ConditioningSet::new(hyper),
            targets: Vec::new(),
            whitened_targets: Vec::new(),
        }
    }

    pub fn fit(hyper: GpHyperparams, train: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut post = Self::new(hyper);
        for (x, y) in train {
            post.push(x, *y)?;
        }
        Ok(post)
    }

    pub fn push(&mut self, x: &[f64], y: f64) -> Result<()> {
        if !y.is_finite() {
            return Err(Error::InvalidArgument("training target is not finite".into()));
        }
        self.set.push(x)?;
        self.targets.push(y);
        self.set.forward_extend(&self.targets, &mut self.whitened_targets);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    pub fn conditioning(&self) -> &ConditioningSet {
        &self.set
    }

    /// Prediction using a cached whitened vector for `x`, extended in place.
    pub fn predict_cached(&self, x: &[f64], w: &mut Whitened) -> PosteriorPrediction {
        self.set.whiten_into(x, w);
        let mean = w.coeffs.iter().zip(&self.whitened_targets).map(|(a, b)| a * b).sum();
        PosteriorPrediction {
            mean,
            variance: self.set.variance_from(w),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<PosteriorPrediction> {
        self.set.hyper.check_dim(x)?;
        Ok(self.predict_cached(x, &mut Whitened::default()))
    }

    /// Exact log marginal likelihood of the training targets.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.len() as f64;
        let fit: f64 = self.whitened_targets.iter().map(|z| z * z).sum();
        -0.5 * fit - 0.5 * self.set.log_det() - 0.5 * n * (2.0 * PI).ln()
    }
}

/// Posterior mean and noisy variance at `query` given training pairs.
pub fn predict(train: &[(Vec<f64>, f64)], query: &[f64], hyper: &GpHyperparams) -> Result<PosteriorPrediction> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    Posterior::fit(hyper.clone(), train)?.predict(query)
}

pub fn log_marginal_likelihood(train: &[(Vec<f64>, f64)], hyper: &GpHyperparams) -> Result<f64> {
    Ok(Posterior::fit(hyper.clone(), train)?.log_marginal_likelihood())
}

/// Picks the grid candidate with the highest log marginal likelihood; ties
/// go to the earliest candidate. Candidates whose factorization fails are
/// skipped.
pub fn fit_hyperparameters(train: &[(Vec<f64>, f64)], grid: &[GpHyperparams]) -> Result<GpHyperparams> {
    if train.len() < 2 {
        return Err(Error::InvalidArgument("at least two training pairs required".into()));
    }
    if grid.is_empty() {
        return Err(Error::InvalidArgument("hyperparameter grid is empty".into()));
    }
    let mut best: Option<(f64, &GpHyperparams)> = None;
    let mut last_err = None;
    for cand in grid {
        match cand.validate().and_then(|_| log_marginal_likelihood(train, cand)) {
            Ok(ll) if ll.is_finite() => {
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((ll, cand));
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    best.map(|(_, h)| h.clone()).ok_or_else(|| {
        last_err.unwrap_or(Error::Factorization {
            condition_estimate: f64::INFINITY,
        })
    })
}
