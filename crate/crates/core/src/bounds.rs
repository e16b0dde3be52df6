//! Closed-form performance guarantees for the periodic secretary algorithm.
//!
//! Logarithms are natural. `periods` always means `⌊N/T⌋`.

use std::f64::consts::{E, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::stream::Observation;
use crate::utility::SetFunction;

/// `P(Z > x)` for a standard normal `Z`.
pub fn gaussian_tail_q(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Upper bound `√(2σ² ln n)` on the expected maximum of `n` i.i.d.
/// zero-mean Gaussians with variance `utility_noise`; zero for `n ≤ 1`.
pub fn expected_max_gap(utility_noise: f64, periods: f64) -> f64 {
    if periods <= 1.0 {
        return 0.0;
    }
    (2.0 * utility_noise * periods.ln()).sqrt()
}

/// Per-acceptance suboptimality `λ + √(2σ_u² ln⌊N/T⌋)`.
pub fn lemma1_gap(lambda: f64, utility_noise: f64, stream_len: usize, period: usize) -> f64 {
    lambda + expected_max_gap(utility_noise, (stream_len / period) as f64)
}

/// How the success probability's argument scales `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QConvention {
    /// `Q(-λ / σ_u²)`, as the guarantee is usually stated.
    #[default]
    Variance,
    /// `Q(-λ / σ_u)`, the dimensionally consistent alternative.
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub k: usize,
    pub lambda: f64,
    /// `σ_u²`.
    pub utility_noise: f64,
    pub stream_len: usize,
    pub period: usize,
    /// `f(A*)`.
    pub f_opt: f64,
    #[serde(default)]
    pub convention: QConvention,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if self.period == 0 || self.period > self.stream_len {
            return Err(Error::InvalidArgument(format!(
                "period {} must lie in 1..={}",
                self.period, self.stream_len
            )));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 || self.utility_noise.is_nan() || self.utility_noise < 0.0 {
            return Err(Error::InvalidArgument(
                "lambda and utility noise must be non-negative".into(),
            ));
        }
        if self.f_opt.is_nan() || self.f_opt < 0.0 {
            return Err(Error::InvalidArgument("f_opt must be non-negative".into()));
        }
        Ok(())
    }

    pub fn periods(&self) -> usize {
        self.stream_len / self.period
    }

    /// Probability that a later period clears the threshold. With zero
    /// utility noise the limit is 1 for `λ > 0` and `½` for `λ = 0`.
    pub fn success_probability(&self) -> f64 {
        if self.utility_noise == 0.0 {
            return if self.lambda > 0.0 { 1.0 } else { 0.5 };
        }
        let scale = match self.convention {
            QConvention::Variance => self.utility_noise,
            QConvention::StdDev => self.utility_noise.sqrt(),
        };
        gaussian_tail_q(-self.lambda / scale)
    }

    pub fn gap(&self) -> f64 {
        lemma1_gap(self.lambda, self.utility_noise, self.stream_len, self.period)
    }
}

/// `(1 - 1/e)(f(A*) - k·gap)`, the guarantee when all `k` samples are taken.
pub fn lemma2_bound(inputs: &BoundInputs) -> f64 {
    (1.0 - 1.0 / E) * (inputs.f_opt - inputs.k as f64 * inputs.gap())
}

/// `min(k, Q(-λ/σ_u²)·⌊N/T⌋)`.
pub fn lemma3_expected_successes(inputs: &BoundInputs) -> f64 {
    (inputs.k as f64).min(inputs.success_probability() * inputs.periods() as f64)
}

/// Lemma-2 bound scaled by the expected fill fraction. May be negative; see
/// [`BoundReport::vacuous`].
pub fn theorem1_lower_bound(inputs: &BoundInputs) -> f64 {
    lemma3_expected_successes(inputs) / inputs.k as f64 * lemma2_bound(inputs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lemma1_gap: f64,
    pub lemma2_bound: f64,
    pub lemma3_expected: f64,
    pub theorem1_bound: f64,
    /// True when the utility lower bound is not positive.
    pub vacuous: bool,
}

impl BoundReport {
    pub fn compute(inputs: &BoundInputs) -> Result<Self> {
        inputs.validate()?;
        let theorem1_bound = theorem1_lower_bound(inputs);
        Ok(Self {
            lemma1_gap: inputs.gap(),
            lemma2_bound: lemma2_bound(inputs),
            lemma3_expected: lemma3_expected_successes(inputs),
            theorem1_bound,
            vacuous: theorem1_bound <= 0.0,
        })
    }

    pub fn to_kv_string(&self) -> String {
        format!(
            "lemma1_gap = {}\nlemma2_bound = {}\nlemma3_expected = {}\ntheorem1_bound = {}\nvacuous = {}\n",
            sig12(self.lemma1_gap),
            sig12(self.lemma2_bound),
            sig12(self.lemma3_expected),
            sig12(self.theorem1_bound),
            self.vacuous
        )
    }
}

/// Pooled across-period variance of singleton utilities `f({x_{p+nT}})`,
/// averaged over phases `p`. Uses whole periods only.
pub fn estimate_utility_noise<F: SetFunction + ?Sized>(
    observations: &[Observation],
    period: usize,
    f: &F,
) -> Result<f64> {
    if period == 0 {
        return Err(Error::InvalidArgument("period must be positive".into()));
    }
    let periods = observations.len() / period;
    if periods < 2 {
        return Err(Error::InvalidArgument(format!(
            "utility noise needs at least 2 whole periods, stream has {periods}"
        )));
    }
    let singles = observations[..periods * period]
        .iter()
        .map(|x| f.value(&[x]))
        .collect::<Result<Vec<f64>>>()?;
    let mut pooled = 0.0;
    for p in 0..period {
        let vals: Vec<f64> = (0..periods).map(|n| singles[p + n * period]).collect();
        let mean = vals.iter().sum::<f64>() / periods as f64;
        let ss: f64 = vals.iter().map(|v| (v - mean).powi(2)).sum();
        pooled += ss / (periods - 1) as f64;
    }
    Ok(pooled / period as f64)
}
