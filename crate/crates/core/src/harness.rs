//! Monte-Carlo experiment protocol: lambda tuning by simulation, multi-
//! algorithm comparison with held-out prediction error, and empirical
//! validation of the performance bounds.
//!
//! Trials run in parallel; every aggregate is reduced in trial order so the
//! reported numbers do not depend on scheduling.

use std::fmt;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{estimate_utility_noise, BoundInputs, BoundReport, QConvention};
use crate::error::{Error, Result};
use crate::format::sig12;
use crate::gp::{ConditioningSet, GpHyperparams, Posterior, Whitened};
use crate::seed;
use crate::selectors::{
    exhaustive_optimum, offline_greedy, periodic_secretary, random_sampler, scheduled_sampler, submodular_secretary,
    PeriodicSecretaryConfig, SelectionResult,
};
use crate::stream::{block_permute, generate_periodic_stream, ObservationStream, PeriodicStreamSpec, StreamView};
use crate::utility::{SetFunction, UtilityFunction};

/// Sample mean and standard deviation (`n - 1` denominator).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd / (self.n as f64).sqrt()
    }
}

/// A selector as named in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AlgorithmSpec {
    Periodic { lambda: f64 },
    Submodular,
    Scheduled,
    Random,
    Greedy,
}

impl AlgorithmSpec {
    /// Parses `periodic:<lambda>`, `submodular`, `scheduled`, `random` or
    /// `greedy`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        match text.split_once(':') {
            Some(("periodic", l)) => {
                let lambda: f64 = l
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad lambda in `{text}`")))?;
                if lambda.is_nan() || lambda < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "lambda must be non-negative in `{text}`"
                    )));
                }
                Ok(AlgorithmSpec::Periodic { lambda })
            }
            None => match text {
                "submodular" => Ok(AlgorithmSpec::Submodular),
                "scheduled" => Ok(AlgorithmSpec::Scheduled),
                "random" => Ok(AlgorithmSpec::Random),
                "greedy" => Ok(AlgorithmSpec::Greedy),
                "periodic" => Err(Error::InvalidArgument(
                    "periodic needs a lambda: `periodic:<lambda>`".into(),
                )),
                _ => Err(Error::InvalidArgument(format!("unknown algorithm `{text}`"))),
            },
            _ => Err(Error::InvalidArgument(format!("unknown algorithm `{text}`"))),
        }
    }

    /// Runs the selector on `view` and fills in its utility trace.
    pub fn run<F: SetFunction + ?Sized>(
        &self,
        view: StreamView<'_>,
        f: &F,
        k: usize,
        period: usize,
        seed: u64,
    ) -> Result<SelectionResult> {
        let observations: Vec<_> = view.iter().cloned().collect();
        match self {
            AlgorithmSpec::Periodic { lambda } => {
                periodic_secretary(view, f, &PeriodicSecretaryConfig::new(k, period, *lambda)?)
            }
            AlgorithmSpec::Submodular => submodular_secretary(view, f, k),
            AlgorithmSpec::Scheduled => {
                let mut r = scheduled_sampler(view, k)?;
                r.score(f, &observations)?;
                Ok(r)
            }
            AlgorithmSpec::Random => {
                let mut r = random_sampler(view, k, seed)?;
                r.score(f, &observations)?;
                Ok(r)
            }
            AlgorithmSpec::Greedy => offline_greedy(&view.eligible_observations(), f, k),
        }
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgorithmSpec::Periodic { lambda } => write!(f, "periodic:{}", sig12(*lambda)),
            AlgorithmSpec::Submodular => f.write_str("submodular"),
            AlgorithmSpec::Scheduled => f.write_str("scheduled"),
            AlgorithmSpec::Random => f.write_str("random"),
            AlgorithmSpec::Greedy => f.write_str("greedy"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaStats {
    pub lambda: f64,
    pub utility: Summary,
    pub count: Summary,
    /// Fraction of runs that filled all `k` samples.
    pub fill_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best_lambda: f64,
    pub stats: Vec<LambdaStats>,
}

impl TuneReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,mean_utility,sd_utility,mean_count,sd_count,fill_rate\n");
        for s in &self.stats {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                sig12(s.lambda),
                sig12(s.utility.mean),
                sig12(s.utility.sd),
                sig12(s.count.mean),
                sig12(s.count.sd),
                sig12(s.fill_rate)
            ));
        }
        out
    }
}

/// Simulates `runs` streams from `spec`, runs the periodic secretary for
/// every lambda on each, and picks the lambda with the highest mean final
/// utility (ties go to the smaller lambda). All lambdas see the same
/// streams.
pub fn tune_lambda<F: SetFunction + ?Sized>(
    spec: &PeriodicStreamSpec,
    f: &F,
    k: usize,
    lambda_grid: &[f64],
    runs: usize,
    seed: u64,
) -> Result<TuneReport> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be positive".into()));
    }
    let configs = lambda_grid
        .iter()
        .map(|&l| PeriodicSecretaryConfig::new(k, spec.period, l))
        .collect::<Result<Vec<_>>>()?;
    let per_run: Vec<Vec<(f64, usize)>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let stream = generate_periodic_stream(spec, seed::derive(seed, r as u64))?;
            configs
                .iter()
                .map(|cfg| {
                    let sel = periodic_secretary(stream.observations().into(), f, cfg)?;
                    Ok((sel.final_utility(), sel.len()))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    Ok(summarize_tuning(lambda_grid, &per_run, k))
}

fn summarize_tuning(lambda_grid: &[f64], per_run: &[Vec<(f64, usize)>], k: usize) -> TuneReport {
    let runs = per_run.len();
    let stats: Vec<LambdaStats> = lambda_grid
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let utils: Vec<f64> = per_run.iter().map(|r| r[j].0).collect();
            let counts: Vec<f64> = per_run.iter().map(|r| r[j].1 as f64).collect();
            LambdaStats {
                lambda,
                utility: Summary::of(&utils),
                count: Summary::of(&counts),
                fill_rate: per_run.iter().filter(|r| r[j].1 == k).count() as f64 / runs as f64,
            }
        })
        .collect();
    let best = stats
        .iter()
        .reduce(|a, b| {
            if b.utility.mean > a.utility.mean || (b.utility.mean == a.utility.mean && b.lambda < a.lambda) {
                b
            } else {
                a
            }
        })
        .expect("grid non-empty");
    TuneReport {
        best_lambda: best.lambda,
        stats,
    }
}

/// Replaces the stream's ground truth with a draw from the zero-mean GP
/// prior (noisy observable) at its feature locations.
pub fn attach_gp_qoi(stream: ObservationStream, hyper: &GpHyperparams, seed: u64) -> Result<ObservationStream> {
    let set = ConditioningSet::with_points(
        hyper.clone(),
        stream.observations().iter().map(|o| o.features.as_slice()),
    )?;
    let mut rng = seed::rng(seed);
    let z: Vec<f64> = (0..stream.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let y = (0..stream.len())
        .map(|i| set.factor_row(i).iter().zip(&z).map(|(l, z)| l * z).sum())
        .collect();
    stream.with_qoi(y)
}

/// Held-out prediction error after each prefix of a selection.
///
/// Entry `m` is the mean squared error, over `test_indices`, of the GP
/// posterior mean trained on the first `m` selected `(x, y)` pairs; entry 0
/// is the zero-mean prior. With `center`, targets are shifted by the mean of
/// the training prefix before fitting.
pub fn evaluate_prediction(
    selection: &SelectionResult,
    stream: &ObservationStream,
    test_indices: &[usize],
    hyper: &GpHyperparams,
    center: bool,
) -> Result<Vec<f64>> {
    let y = stream.qoi_values().ok_or_else(|| Error::MissingColumn("qoi".into()))?;
    if test_indices.is_empty() {
        return Err(Error::InvalidArgument("test set is empty".into()));
    }
    if let Some(i) = selection.chosen.iter().find(|i| test_indices.contains(i)) {
        return Err(Error::InvalidArgument(format!("test index {i} is also selected")));
    }
    let obs = stream.observations();
    let mut post = Posterior::new(hyper.clone());
    let mut ones = Vec::new();
    let mut targets = Vec::new();
    let mut z_y = Vec::new();
    let mut z_1 = Vec::new();
    let mut cache: Vec<Whitened> = vec![Whitened::default(); test_indices.len()];
    let mse_of = |preds: &mut dyn FnMut(usize) -> f64| -> f64 {
        test_indices
            .iter()
            .enumerate()
            .map(|(t, &i)| (preds(t) - y[i]).powi(2))
            .sum::<f64>()
            / test_indices.len() as f64
    };

    let mut trace = vec![mse_of(&mut |_| 0.0)];
    for &i in &selection.chosen {
        post.push(&obs[i].features, y[i])?;
        targets.push(y[i]);
        ones.push(1.0);
        let set = post.conditioning();
        set.forward_extend(&targets, &mut z_y);
        set.forward_extend(&ones, &mut z_1);
        let c = if center {
            targets.iter().sum::<f64>() / targets.len() as f64
        } else {
            0.0
        };
        let mut predict = |t: usize| {
            let w = &mut cache[t];
            set.whiten_into(&obs[test_indices[t]].features, w);
            let dy: f64 = w.coeffs().iter().zip(&z_y).map(|(a, b)| a * b).sum();
            let d1: f64 = w.coeffs().iter().zip(&z_1).map(|(a, b)| a * b).sum();
            dy - c * d1 + c
        };
        trace.push(mse_of(&mut predict));
    }
    Ok(trace)
}

/// Where trial streams come from.
#[derive(Debug, Clone)]
pub enum StreamSource {
    /// Fresh stream per run. With `qoi`, ground truth is drawn from that GP.
    Synthetic {
        spec: PeriodicStreamSpec,
        qoi: Option<GpHyperparams>,
    },
    /// One recorded stream; runs reorder whole periods when
    /// [`ExperimentConfig::permute`] is set.
    Recorded { stream: ObservationStream, period: usize },
}

impl StreamSource {
    pub fn period(&self) -> usize {
        match self {
            StreamSource::Synthetic { spec, .. } => spec.period,
            StreamSource::Recorded { period, .. } => *period,
        }
    }

    fn trial(&self, seed: u64, permute: bool) -> Result<ObservationStream> {
        match self {
            StreamSource::Synthetic { spec, qoi } => {
                let s = generate_periodic_stream(spec, seed)?;
                match qoi {
                    Some(h) => attach_gp_qoi(s, h, seed::derive(seed, 7)),
                    None => Ok(s),
                }
            }
            StreamSource::Recorded { stream, period } => {
                if permute {
                    block_permute(stream, *period, seed)
                } else {
                    Ok(stream.clone())
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub algorithms: Vec<AlgorithmSpec>,
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    /// Fraction of positions held out for prediction error; `0` disables the
    /// prediction-error evaluation.
    pub test_fraction: f64,
    #[serde(default = "default_true")]
    pub permute: bool,
    #[serde(default)]
    pub center_qoi: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::InvalidArgument("no algorithms configured".into()));
        }
        self.validate_trials()
    }

    fn validate_trials(&self) -> Result<()> {
        if self.k == 0 || self.runs == 0 {
            return Err(Error::InvalidArgument("k and runs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::InvalidArgument("test fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn wants_mse(&self) -> bool {
        self.test_fraction > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmReport {
    pub algorithm: AlgorithmSpec,
    /// `f(A_m)` statistics for `m = 1..=k`. Runs that stopped early carry
    /// their final value forward.
    pub utility: Vec<Summary>,
    /// Prediction MSE for `m = 0..=k`, carried forward the same way.
    pub mse: Option<Vec<Summary>>,
    /// Number of runs that reached each step `m = 1..=k`.
    pub reached: Vec<usize>,
    pub final_utility: Summary,
    pub final_mse: Option<Summary>,
    pub count: Summary,
    pub final_utilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub k: usize,
    pub runs: usize,
    pub algorithms: Vec<AlgorithmReport>,
}

struct TrialOutcome {
    utility: Vec<f64>,
    mse: Option<Vec<f64>>,
}

fn carry_forward(trace: &[f64], len: usize, empty: f64) -> Vec<f64> {
    (0..len)
        .map(|m| trace.get(m).or(trace.last()).copied().unwrap_or(empty))
        .collect()
}

fn run_trials(
    source: &StreamSource,
    cfg: &ExperimentConfig,
    hyper: &GpHyperparams,
    algorithms: &[AlgorithmSpec],
    with_mse: bool,
) -> Result<Vec<Vec<TrialOutcome>>> {
    cfg.validate_trials()?;
    let f = UtilityFunction::entropy(hyper.clone());
    let period = source.period();
    let k = cfg.k;
    (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let run_seed = seed::derive(cfg.seed, r as u64);
            let stream = source.trial(run_seed, cfg.permute)?;
            let n = stream.len();
            if k > n {
                return Err(Error::InvalidArgument(format!("k = {k} exceeds stream length {n}")));
            }
            let mut eligible = vec![true; n];
            let mut test = Vec::new();
            if cfg.wants_mse() {
                if with_mse && stream.qoi().is_none() {
                    return Err(Error::MissingColumn("qoi".into()));
                }
                let size = ((cfg.test_fraction * n as f64).floor() as usize).max(1);
                let mut rng = seed::rng(seed::derive(run_seed, 1));
                test = rand::seq::index::sample(&mut rng, n, size).into_vec();
                test.sort_unstable();
                for &i in &test {
                    eligible[i] = false;
                }
            }
            let view = StreamView::with_mask(stream.observations(), &eligible)?;
            algorithms
                .iter()
                .map(|alg| {
                    let sel = alg.run(view, &f, k, period, seed::derive(run_seed, 2))?;
                    let mse = if with_mse && cfg.wants_mse() {
                        Some(evaluate_prediction(&sel, &stream, &test, hyper, cfg.center_qoi)?)
                    } else {
                        None
                    };
                    Ok(TrialOutcome {
                        utility: sel.utility_trace,
                        mse,
                    })
                })
                .collect()
        })
        .collect()
}

/// Lambda tuning under the trial conditions of `cfg`: same stream source,
/// permutation and held-out mask, but without prediction error. Use a seed
/// different from the evaluation seed to keep tuning and evaluation trials
/// independent. Ties go to the smaller lambda.
pub fn tune_lambda_trials(
    source: &StreamSource,
    cfg: &ExperimentConfig,
    hyper: &GpHyperparams,
    lambda_grid: &[f64],
) -> Result<TuneReport> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("lambda grid is empty".into()));
    }
    let algorithms: Vec<AlgorithmSpec> = lambda_grid
        .iter()
        .map(|&lambda| {
            if lambda.is_nan() || lambda < 0.0 {
                Err(Error::InvalidArgument(format!(
                    "lambda must be non-negative, got {lambda}"
                )))
            } else {
                Ok(AlgorithmSpec::Periodic { lambda })
            }
        })
        .collect::<Result<_>>()?;
    let trials = run_trials(source, cfg, hyper, &algorithms, false)?;
    let per_run: Vec<Vec<(f64, usize)>> = trials
        .iter()
        .map(|t| {
            t.iter()
                .map(|o| (o.utility.last().copied().unwrap_or(0.0), o.utility.len()))
                .collect()
        })
        .collect();
    Ok(summarize_tuning(lambda_grid, &per_run, cfg.k))
}

/// Runs every configured algorithm on `cfg.runs` trial streams.
pub fn run_comparison(
    source: &StreamSource,
    cfg: &ExperimentConfig,
    hyper: &GpHyperparams,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    let k = cfg.k;
    let trials = run_trials(source, cfg, hyper, &cfg.algorithms, true)?;

    let algorithms = cfg
        .algorithms
        .iter()
        .enumerate()
        .map(|(a, alg)| {
            let outcomes: Vec<&TrialOutcome> = trials.iter().map(|t| &t[a]).collect();
            let utils: Vec<Vec<f64>> = outcomes.iter().map(|o| carry_forward(&o.utility, k, 0.0)).collect();
            let utility = (0..k)
                .map(|m| Summary::of(&utils.iter().map(|u| u[m]).collect::<Vec<_>>()))
                .collect();
            let reached = (0..k)
                .map(|m| outcomes.iter().filter(|o| o.utility.len() > m).count())
                .collect();
            let final_utilities: Vec<f64> = outcomes
                .iter()
                .map(|o| o.utility.last().copied().unwrap_or(0.0))
                .collect();
            let counts: Vec<f64> = outcomes.iter().map(|o| o.utility.len() as f64).collect();
            let (mse, final_mse) = if cfg.wants_mse() {
                let traces: Vec<Vec<f64>> = outcomes
                    .iter()
                    .map(|o| carry_forward(o.mse.as_deref().unwrap_or_default(), k + 1, f64::NAN))
                    .collect();
                let per_step: Vec<Summary> = (0..=k)
                    .map(|m| Summary::of(&traces.iter().map(|t| t[m]).collect::<Vec<_>>()))
                    .collect();
                let last = *per_step.last().expect("k + 1 entries");
                (Some(per_step), Some(last))
            } else {
                (None, None)
            };
            AlgorithmReport {
                algorithm: alg.clone(),
                utility,
                mse,
                reached,
                final_utility: Summary::of(&final_utilities),
                final_mse,
                count: Summary::of(&counts),
                final_utilities,
            }
        })
        .collect();
    Ok(ComparisonReport {
        k,
        runs: cfg.runs,
        algorithms,
    })
}

impl ComparisonReport {
    pub fn algorithm(&self, spec: &AlgorithmSpec) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| &a.algorithm == spec)
    }

    /// `step, algorithm, mean, sd` rows for the utility curves.
    pub fn utility_csv(&self) -> String {
        let mut out = String::from("step,algorithm,mean,sd\n");
        for a in &self.algorithms {
            for (m, s) in a.utility.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    m + 1,
                    a.algorithm,
                    sig12(s.mean),
                    sig12(s.sd)
                ));
            }
        }
        out
    }

    /// `step, algorithm, mean, sd` rows for the prediction-error curves
    /// (`None` when prediction error was not evaluated).
    pub fn mse_csv(&self) -> Option<String> {
        let mut out = String::from("step,algorithm,mean,sd\n");
        for a in &self.algorithms {
            for (m, s) in a.mse.as_ref()?.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", m, a.algorithm, sig12(s.mean), sig12(s.sd)));
            }
        }
        Some(out)
    }

    pub fn summary(&self) -> String {
        let mut out = format!("k = {}\nruns = {}\n", self.k, self.runs);
        for a in &self.algorithms {
            let name = a.algorithm.to_string();
            out.push_str(&format!(
                "{name}.final_utility_mean = {}\n{name}.final_utility_sd = {}\n{name}.count_mean = {}\n",
                sig12(a.final_utility.mean),
                sig12(a.final_utility.sd),
                sig12(a.count.mean)
            ));
            if let Some(m) = a.final_mse {
                out.push_str(&format!(
                    "{name}.final_mse_mean = {}\n{name}.final_mse_sd = {}\n",
                    sig12(m.mean),
                    sig12(m.sd)
                ));
            }
        }
        out
    }

    /// Writes `entropy_reduction.csv`, `prediction_mse.csv` (when
    /// available) and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("entropy_reduction.csv"), self.utility_csv())?;
        if let Some(mse) = self.mse_csv() {
            std::fs::write(dir.join("prediction_mse.csv"), mse)?;
        }
        std::fs::write(dir.join("summary.txt"), self.summary())?;
        Ok(())
    }
}

/// How `f(A*)` is obtained in bound validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumMode {
    /// Exact enumeration; required for pass/fail verdicts.
    Exhaustive,
    /// Greedy value as a lower estimate of `f(A*)`; results are
    /// informational only.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCell {
    pub k: usize,
    pub lambda: f64,
    pub utility: Summary,
    pub successes: Summary,
    pub utility_noise: f64,
    pub f_opt: f64,
    pub report: BoundReport,
    /// Mean success count more than 3 standard errors below the expected
    /// number of successes.
    pub lemma3_violated: bool,
    /// Mean utility below a non-vacuous utility bound.
    pub theorem1_violated: bool,
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundValidation {
    pub runs: usize,
    pub cells: Vec<BoundCell>,
}

impl BoundValidation {
    /// Cells with a pass/fail violation (informational cells excluded).
    pub fn violations(&self) -> Vec<&BoundCell> {
        self.cells
            .iter()
            .filter(|c| !c.informational && (c.lemma3_violated || c.theorem1_violated))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "k,lambda,mean_utility,se_utility,mean_successes,se_successes,utility_noise,f_opt,lemma3_expected,theorem1_bound,vacuous,lemma3_violated,theorem1_violated,informational\n",
        );
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.k,
                sig12(c.lambda),
                sig12(c.utility.mean),
                sig12(c.utility.se()),
                sig12(c.successes.mean),
                sig12(c.successes.se()),
                sig12(c.utility_noise),
                sig12(c.f_opt),
                sig12(c.report.lemma3_expected),
                sig12(c.report.theorem1_bound),
                c.report.vacuous,
                c.lemma3_violated,
                c.theorem1_violated,
                c.informational
            ));
        }
        out
    }
}

/// Empirical check of the expected-successes and utility bounds over a grid
/// of `(k, λ)` cells. `σ_u²` is estimated per stream and averaged; the bound
/// is evaluated at the ensemble means of `σ_u²` and `f(A*)`.
pub fn validate_bounds<F: SetFunction + ?Sized>(
    spec: &PeriodicStreamSpec,
    f: &F,
    cells: &[(usize, f64)],
    runs: usize,
    seed: u64,
    mode: OptimumMode,
) -> Result<BoundValidation> {
    validate_bounds_with(spec, f, cells, runs, seed, mode, BoundReport::compute)
}

/// [`validate_bounds`] with a caller-supplied bound model.
pub fn validate_bounds_with<F, B>(
    spec: &PeriodicStreamSpec,
    f: &F,
    cells: &[(usize, f64)],
    runs: usize,
    seed: u64,
    mode: OptimumMode,
    bound: B,
) -> Result<BoundValidation>
where
    F: SetFunction + ?Sized,
    B: Fn(&BoundInputs) -> Result<BoundReport>,
{
    if cells.is_empty() || runs == 0 {
        return Err(Error::InvalidArgument("need at least one cell and one run".into()));
    }
    let mut ks: Vec<usize> = cells.iter().map(|c| c.0).collect();
    ks.sort_unstable();
    ks.dedup();
    let configs = cells
        .iter()
        .map(|&(k, l)| PeriodicSecretaryConfig::new(k, spec.period, l))
        .collect::<Result<Vec<_>>>()?;

    struct Trial {
        noise: f64,
        f_opt: Vec<f64>,
        outcomes: Vec<(f64, usize)>,
    }
    let trials: Vec<Trial> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let stream = generate_periodic_stream(spec, seed::derive(seed, r as u64))?;
            let obs = stream.observations();
            let noise = estimate_utility_noise(obs, spec.period, f)?;
            let f_opt = ks
                .iter()
                .map(|&k| match mode {
                    OptimumMode::Exhaustive => exhaustive_optimum(obs, f, k).map(|s| s.final_utility()),
                    OptimumMode::Greedy => offline_greedy(obs, f, k).map(|s| s.final_utility()),
                })
                .collect::<Result<Vec<_>>>()?;
            let outcomes = configs
                .iter()
                .map(|cfg| {
                    let sel = periodic_secretary(obs.into(), f, cfg)?;
                    Ok((sel.final_utility(), sel.len()))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Trial { noise, f_opt, outcomes })
        })
        .collect::<Result<_>>()?;

    let noise = trials.iter().map(|t| t.noise).sum::<f64>() / runs as f64;
    let cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(k, lambda))| {
            let ki = ks.binary_search(&k).expect("k collected above");
            let f_opt = trials.iter().map(|t| t.f_opt[ki]).sum::<f64>() / runs as f64;
            let utility = Summary::of(&trials.iter().map(|t| t.outcomes[c].0).collect::<Vec<_>>());
            let successes = Summary::of(&trials.iter().map(|t| t.outcomes[c].1 as f64).collect::<Vec<_>>());
            let report = bound(&BoundInputs {
                k,
                lambda,
                utility_noise: noise,
                stream_len: spec.length,
                period: spec.period,
                f_opt,
                convention: QConvention::Variance,
            })?;
            Ok(BoundCell {
                k,
                lambda,
                utility,
                successes,
                utility_noise: noise,
                f_opt,
                report,
                lemma3_violated: successes.mean + 3.0 * successes.se() < report.lemma3_expected,
                theorem1_violated: !report.vacuous && utility.mean < report.theorem1_bound,
                informational: mode == OptimumMode::Greedy,
            })
        })
        .collect::<Result<_>>()?;
    Ok(BoundValidation { runs, cells })
}
