//! Sample selectors.
//!
//! Streaming selectors (periodic secretary, classical and submodular
//! secretary, scheduled, random) make one forward pass and emit strictly
//! increasing stream indices. The offline greedy and exhaustive selectors
//! see the whole ground set and serve as references. Ties always go to the
//! lowest stream index.

use std::fmt;
use std::io::Write;
use std::path::Path;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::seed;
use crate::stream::{Observation, StreamView};
use crate::utility::SetFunction;

/// Largest number of subsets [`exhaustive_optimum`] will enumerate.
pub const MAX_EXHAUSTIVE_SUBSETS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FilledK,
    EndOfStream,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::FilledK => "filled_k",
            Termination::EndOfStream => "end_of_stream",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Stream indices in the order they were chosen.
    pub chosen: Vec<usize>,
    /// `f(A)` after each acceptance.
    pub utility_trace: Vec<f64>,
    /// Acceptance threshold in force at each acceptance (periodic secretary
    /// only), in utility units: `f(A) + max_r gain(x_r) - λ`.
    pub threshold_trace: Vec<f64>,
    pub terminated: Termination,
}

impl SelectionResult {
    fn new(k: usize) -> Self {
        Self {
            chosen: Vec::with_capacity(k),
            utility_trace: Vec::with_capacity(k),
            threshold_trace: Vec::new(),
            terminated: Termination::EndOfStream,
        }
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// `f(A)` for the final set, `0` when nothing was chosen.
    pub fn final_utility(&self) -> f64 {
        self.utility_trace.last().copied().unwrap_or(0.0)
    }

    /// Recomputes `utility_trace` by inserting the chosen observations, in
    /// order, into a fresh session of `f`.
    pub fn score<F: SetFunction + ?Sized>(&mut self, f: &F, observations: &[Observation]) -> Result<()> {
        let mut session = f.session();
        self.utility_trace.clear();
        for &i in &self.chosen {
            session.insert(&observations[i])?;
            self.utility_trace.push(session.value());
        }
        Ok(())
    }

    /// CSV with columns `step, stream_index, utility_after, threshold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,stream_index,utility_after,threshold\n");
        for (s, (&i, &u)) in self.chosen.iter().zip(&self.utility_trace).enumerate() {
            let thr = self.threshold_trace.get(s).map(|&t| sig12(t)).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", s + 1, i, sig12(u), thr));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSecretaryConfig {
    pub k: usize,
    pub period: usize,
    pub lambda: f64,
}

impl PeriodicSecretaryConfig {
    pub fn new(k: usize, period: usize, lambda: f64) -> Result<Self> {
        let cfg = Self { k, period, lambda };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be positive".into()));
        }
        if self.period == 0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Largest gain `f({x_r} ∪ A) - f(A)` over the reference observations.
fn reference_max(session: &mut dyn crate::utility::GainSession, reference: &[&Observation]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for x in reference {
        best = best.max(session.gain(x)?);
    }
    Ok(best)
}

/// The periodic secretary algorithm.
///
/// The first `T` observations form the reference set and are never sampled.
/// Each later observation `x_i` is accepted when
/// `f({x_i} ∪ A) ≥ max_r f({x_r} ∪ A) - λ`; after every acceptance the
/// reference maximum is recomputed against the new `A`. Stops at `|A| = k`
/// or at the end of the stream.
pub fn periodic_secretary<F: SetFunction + ?Sized>(
    view: StreamView<'_>,
    f: &F,
    cfg: &PeriodicSecretaryConfig,
) -> Result<SelectionResult> {
    cfg.validate()?;
    if cfg.period > view.len() {
        return Err(Error::InvalidArgument(format!(
            "period {} exceeds stream length {}",
            cfg.period,
            view.len()
        )));
    }
    let mut result = SelectionResult::new(cfg.k);
    let mut session = f.session();
    let mut stream = view.iter();
    let reference: Vec<&Observation> = stream.by_ref().take(cfg.period).collect();
    let mut best = reference_max(session.as_mut(), &reference)?;

    for x in stream {
        if !view.is_eligible(x.index) {
            continue;
        }
        let gain = session.gain(x)?;
        if gain >= best - cfg.lambda {
            let threshold = session.value() + best - cfg.lambda;
            session.insert(x)?;
            result.chosen.push(x.index);
            result.utility_trace.push(session.value());
            result.threshold_trace.push(threshold);
            if result.len() == cfg.k {
                result.terminated = Termination::FilledK;
                return Ok(result);
            }
            best = reference_max(session.as_mut(), &reference)?;
        }
    }
    Ok(result)
}

/// Classical single-choice secretary rule: watch the first `⌊n/e⌋` scores,
/// then take the first later score strictly above their maximum. Returns
/// `None` when no later score beats it.
pub fn classical_secretary(scores: &[f64]) -> Option<usize> {
    let cutoff = (scores.len() as f64 / std::f64::consts::E).floor() as usize;
    let bar = scores[..cutoff].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores[cutoff..].iter().position(|&s| s > bar).map(|p| p + cutoff)
}

/// Submodular secretary baseline: `k` contiguous segments of near-equal
/// length, each running the classical rule on marginal gains with respect
/// to the samples accepted so far.
///
/// Unlike [`classical_secretary`], an item that only ties the observed
/// maximum is accepted. Gains on the empty set are often identical (every
/// singleton has the same entropy), and a strict rule would then never make
/// a first selection.
pub fn submodular_secretary<F: SetFunction + ?Sized>(view: StreamView<'_>, f: &F, k: usize) -> Result<SelectionResult> {
    let n = view.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    let mut result = SelectionResult::new(k);
    let mut session = f.session();
    for j in 0..k {
        let (start, end) = (j * n / k, (j + 1) * n / k);
        let segment: Vec<&Observation> = (start..end)
            .filter(|&i| view.is_eligible(i))
            .map(|i| view.get(i))
            .collect();
        let cutoff = (segment.len() as f64 / std::f64::consts::E).floor() as usize;
        let mut bar = f64::NEG_INFINITY;
        for x in &segment[..cutoff] {
            bar = bar.max(session.gain(x)?);
        }
        for x in &segment[cutoff..] {
            if session.gain(x)? >= bar {
                session.insert(x)?;
                result.chosen.push(x.index);
                result.utility_trace.push(session.value());
                break;
            }
        }
    }
    if result.len() == k {
        result.terminated = Termination::FilledK;
    }
    Ok(result)
}

/// Samples index `⌊jN/k⌋` for `j = 0..k`. With a mask, each slot takes its
/// first eligible position before the next slot starts.
pub fn scheduled_sampler(view: StreamView<'_>, k: usize) -> Result<SelectionResult> {
    let n = view.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={n}")));
    }
    let mut result = SelectionResult::new(k);
    for j in 0..k {
        let (start, end) = (j * n / k, (j + 1) * n / k);
        if let Some(i) = (start..end).find(|&i| view.is_eligible(i)) {
            result.chosen.push(i);
        }
    }
    if result.len() == k {
        result.terminated = Termination::FilledK;
    }
    Ok(result)
}

/// `k` eligible indices drawn uniformly without replacement, returned in
/// increasing order.
pub fn random_sampler(view: StreamView<'_>, k: usize, seed: u64) -> Result<SelectionResult> {
    let pool: Vec<usize> = (0..view.len()).filter(|&i| view.is_eligible(i)).collect();
    if k == 0 || k > pool.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must lie in 1..={} eligible observations",
            pool.len()
        )));
    }
    let mut rng = seed::rng(seed);
    let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), k)
        .into_iter()
        .map(|p| pool[p])
        .collect();
    picks.sort_unstable();
    let mut result = SelectionResult::new(k);
    result.chosen = picks;
    result.terminated = Termination::FilledK;
    Ok(result)
}

/// Offline greedy: repeatedly add the element with the largest marginal
/// gain. `chosen` lists elements in the order they were added.
pub fn offline_greedy<F: SetFunction + ?Sized>(ground: &[Observation], f: &F, k: usize) -> Result<SelectionResult> {
    if k > ground.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds ground set size {}",
            ground.len()
        )));
    }
    let mut result = SelectionResult::new(k);
    let mut taken = vec![false; ground.len()];
    let mut session = f.session();
    for _ in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for (p, x) in ground.iter().enumerate().filter(|(p, _)| !taken[*p]) {
            let g = session.gain(x)?;
            let better = match best {
                None => true,
                Some((bg, bp)) => g > bg || (g == bg && x.index < ground[bp].index),
            };
            if better {
                best = Some((g, p));
            }
        }
        let (_, p) = best.expect("k <= |ground| leaves a candidate");
        taken[p] = true;
        session.insert(&ground[p])?;
        result.chosen.push(ground[p].index);
        result.utility_trace.push(session.value());
    }
    result.terminated = Termination::FilledK;
    Ok(result)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

/// Exact maximiser of `f` over all `k`-subsets of `ground`; among ties the
/// lexicographically smallest subset (by ground position) wins.
pub fn exhaustive_optimum<F: SetFunction + ?Sized>(ground: &[Observation], f: &F, k: usize) -> Result<SelectionResult> {
    if k > ground.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds ground set size {}",
            ground.len()
        )));
    }
    let count = binomial(ground.len(), k);
    if count > MAX_EXHAUSTIVE_SUBSETS {
        return Err(Error::TooLarge {
            what: "exhaustive enumeration",
            size: count,
            cap: MAX_EXHAUSTIVE_SUBSETS,
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut members: Vec<&Observation> = Vec::with_capacity(k);
    for combo in (0..ground.len()).combinations(k) {
        members.clear();
        members.extend(combo.iter().map(|&p| &ground[p]));
        let v = f.value(&members)?;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, combo));
        }
    }
    let (_, combo) = best.expect("at least one subset");
    let mut result = SelectionResult::new(k);
    result.chosen = combo.iter().map(|&p| ground[p].index).collect();
    let chosen_obs: Vec<Observation> = combo.iter().map(|&p| ground[p].clone()).collect();
    let mut session = f.session();
    for x in &chosen_obs {
        session.insert(x)?;
        result.utility_trace.push(session.value());
    }
    result.terminated = Termination::FilledK;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::GpHyperparams;
    use crate::stream::{generate_periodic_stream, ObservationStream, PeriodicStreamSpec, Waveform};
    use crate::utility::UtilityFunction;
    use approx::assert_abs_diff_eq;

    fn scalar_stream(values: &[f64]) -> ObservationStream {
        ObservationStream::from_features(values.iter().map(|&v| vec![v]).collect()).unwrap()
    }

    fn hand_trace_stream() -> ObservationStream {
        let spec = PeriodicStreamSpec::isotropic(4, 3, 0.0, Waveform::scalar_table(&[0.0, 3.0, 1.0, 2.0]));
        generate_periodic_stream(&spec, 0).unwrap()
    }

    #[test]
    fn periodic_hand_trace() {
        let s = hand_trace_stream();
        let f = UtilityFunction::modular_feature(0);
        let cfg = PeriodicSecretaryConfig::new(1, 4, 0.0).unwrap();
        let r = periodic_secretary(s.observations().into(), &f, &cfg).unwrap();
        assert_eq!(r.chosen, vec![5]);
        assert_eq!(r.threshold_trace, vec![3.0]);
        assert_eq!(r.utility_trace, vec![3.0]);
        assert_eq!(r.terminated, Termination::FilledK);
    }

    #[test]
    fn periodic_noiseless_modular_hits_reference_max() {
        let s = hand_trace_stream();
        let f = UtilityFunction::modular_feature(0);
        let cfg = PeriodicSecretaryConfig::new(3, 4, 0.0).unwrap();
        let r = periodic_secretary(s.observations().into(), &f, &cfg).unwrap();
        // Every acceptance carries exactly the reference maximum 3.
        assert_eq!(r.chosen, vec![5, 9]);
        assert_eq!(r.utility_trace, vec![3.0, 6.0]);
        assert_eq!(r.terminated, Termination::EndOfStream);
    }

    #[test]
    fn periodic_entropy_first_pick_is_index_t() {
        let spec = PeriodicStreamSpec::isotropic(10, 4, 0.3, Waveform::SineMix { offset: 0.0 });
        let s = generate_periodic_stream(&spec, 2).unwrap();
        let f = UtilityFunction::entropy(GpHyperparams::isotropic(1, 0.5, 1.0, 0.1).unwrap());
        let cfg = PeriodicSecretaryConfig::new(3, 10, 0.0).unwrap();
        let r = periodic_secretary(s.observations().into(), &f, &cfg).unwrap();
        assert_eq!(r.chosen[0], 10);
        assert!(r.chosen.iter().all(|&i| i >= 10));
        assert!(r.chosen.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn periodic_huge_lambda_takes_first_k() {
        let s = hand_trace_stream();
        let f = UtilityFunction::modular_feature(0);
        let cfg = PeriodicSecretaryConfig::new(3, 4, f64::INFINITY).unwrap();
        let r = periodic_secretary(s.observations().into(), &f, &cfg).unwrap();
        assert_eq!(r.chosen, vec![4, 5, 6]);
    }

    #[test]
    fn periodic_validates_inputs() {
        let s = hand_trace_stream();
        let f = UtilityFunction::modular_feature(0);
        assert!(PeriodicSecretaryConfig::new(1, 4, -1.0).is_err());
        assert!(PeriodicSecretaryConfig::new(0, 4, 0.0).is_err());
        let cfg = PeriodicSecretaryConfig::new(1, 13, 0.0).unwrap();
        assert!(periodic_secretary(s.observations().into(), &f, &cfg).is_err());
    }

    #[test]
    fn periodic_skips_ineligible() {
        let s = hand_trace_stream();
        let f = UtilityFunction::modular_feature(0);
        let mut mask = vec![true; 12];
        mask[5] = false;
        let view = StreamView::with_mask(s.observations(), &mask).unwrap();
        let cfg = PeriodicSecretaryConfig::new(1, 4, 0.0).unwrap();
        assert_eq!(periodic_secretary(view, &f, &cfg).unwrap().chosen, vec![9]);
    }

    #[test]
    fn classical_cases() {
        assert_eq!(classical_secretary(&[3.0, 1.0, 4.0, 1.0, 5.0]), Some(2));
        assert_eq!(classical_secretary(&[9.0, 8.0, 7.0, 6.0, 5.0, 4.0]), None);
        assert_eq!(classical_secretary(&[0.5]), Some(0));
        assert_eq!(classical_secretary(&[]), None);
    }

    #[test]
    fn submodular_secretary_degenerate_segments() {
        let s = scalar_stream(&[4.0, 2.0, 7.0, 1.0]);
        let f = UtilityFunction::modular_feature(0);
        let r = submodular_secretary(s.observations().into(), &f, 4).unwrap();
        assert_eq!(r.chosen, vec![0, 1, 2, 3]);
        assert_eq!(r.terminated, Termination::FilledK);

        let s = scalar_stream(&[3.0, 1.0, 4.0, 1.0, 5.0]);
        let r = submodular_secretary(s.observations().into(), &f, 1).unwrap();
        assert_eq!(r.chosen, vec![classical_secretary(&[3.0, 1.0, 4.0, 1.0, 5.0]).unwrap()]);
        assert!(submodular_secretary(s.observations().into(), &f, 6).is_err());
    }

    #[test]
    fn segment_lengths_differ_by_at_most_one() {
        for n in 1..40 {
            for k in 1..=n {
                let lens: Vec<usize> = (0..k).map(|j| (j + 1) * n / k - j * n / k).collect();
                let (lo, hi) = (lens.iter().min().unwrap(), lens.iter().max().unwrap());
                assert!(hi - lo <= 1);
                assert_eq!(lens.iter().sum::<usize>(), n);
            }
        }
    }

    #[test]
    fn scheduled_indices() {
        let s = scalar_stream(&[0.0; 10]);
        assert_eq!(
            scheduled_sampler(s.observations().into(), 2).unwrap().chosen,
            vec![0, 5]
        );
        assert_eq!(
            scheduled_sampler(s.observations().into(), 10).unwrap().chosen,
            (0..10).collect::<Vec<_>>()
        );
        let s7 = scalar_stream(&[0.0; 7]);
        assert_eq!(
            scheduled_sampler(s7.observations().into(), 3).unwrap().chosen,
            vec![0, 2, 4]
        );
        let mut mask = vec![true; 10];
        mask[5] = false;
        let view = StreamView::with_mask(s.observations(), &mask).unwrap();
        assert_eq!(scheduled_sampler(view, 2).unwrap().chosen, vec![0, 6]);
    }

    #[test]
    fn random_sampler_properties() {
        let s = scalar_stream(&[0.0; 10]);
        let all = random_sampler(s.observations().into(), 10, 3).unwrap();
        assert_eq!(all.chosen, (0..10).collect::<Vec<_>>());
        let a = random_sampler(s.observations().into(), 4, 3).unwrap();
        let b = random_sampler(s.observations().into(), 4, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.chosen.windows(2).all(|w| w[0] < w[1]));
        assert!(random_sampler(s.observations().into(), 11, 3).is_err());
    }

    #[test]
    fn random_inclusion_frequency() {
        let (n, k, trials) = (20usize, 5usize, 10_000u64);
        let s = scalar_stream(&vec![0.0; n]);
        let hits = (0..trials)
            .filter(|&t| {
                random_sampler(s.observations().into(), k, t)
                    .unwrap()
                    .chosen
                    .contains(&7)
            })
            .count() as f64;
        let p = k as f64 / n as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits / trials as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn greedy_and_exhaustive_on_modular() {
        let s = scalar_stream(&[0.0; 4]);
        let f = UtilityFunction::modular(vec![5.0, 1.0, 9.0, 3.0]);
        let g = offline_greedy(s.observations(), &f, 2).unwrap();
        assert_eq!(g.chosen, vec![2, 0]);
        assert_eq!(g.final_utility(), 14.0);
        let e = exhaustive_optimum(s.observations(), &f, 2).unwrap();
        assert_eq!(e.chosen, vec![0, 2]);
        assert_eq!(e.final_utility(), 14.0);
        let full = offline_greedy(s.observations(), &f, 4).unwrap();
        assert_eq!(full.final_utility(), 18.0);
        let none = exhaustive_optimum(s.observations(), &f, 0).unwrap();
        assert!(none.chosen.is_empty());
        assert_eq!(none.final_utility(), 0.0);
    }

    #[test]
    fn greedy_breaks_ties_low() {
        let s = scalar_stream(&[0.0; 3]);
        let f = UtilityFunction::modular(vec![2.0, 2.0, 2.0]);
        assert_eq!(offline_greedy(s.observations(), &f, 2).unwrap().chosen, vec![0, 1]);
        assert_eq!(exhaustive_optimum(s.observations(), &f, 2).unwrap().chosen, vec![0, 1]);
    }

    #[test]
    fn exhaustive_refuses_huge_instances() {
        let s = scalar_stream(&vec![0.0; 60]);
        let f = UtilityFunction::modular_feature(0);
        assert!(matches!(
            exhaustive_optimum(s.observations(), &f, 6),
            Err(Error::TooLarge { .. })
        ));
        assert_eq!(binomial(60, 4), 487_635);
    }

    #[test]
    fn greedy_entropy_matches_exhaustive_bound() {
        let h = GpHyperparams::isotropic(2, 0.7, 1.0, 0.1).unwrap();
        let f = UtilityFunction::entropy(h);
        let spec = PeriodicStreamSpec::isotropic(4, 2, 0.4, Waveform::Seasonal { offset: 0.0 });
        let s = generate_periodic_stream(&spec, 17).unwrap();
        let g = offline_greedy(s.observations(), &f, 3).unwrap();
        let e = exhaustive_optimum(s.observations(), &f, 3).unwrap();
        assert!(g.final_utility() >= (1.0 - 1.0 / std::f64::consts::E) * e.final_utility() - 1e-8);
        assert!(e.final_utility() >= g.final_utility() - 1e-9);
    }

    #[test]
    fn scoring_and_csv() {
        let s = scalar_stream(&[0.0; 10]);
        let f = UtilityFunction::modular((0..10).map(|i| i as f64).collect());
        let mut r = scheduled_sampler(s.observations().into(), 2).unwrap();
        r.score(&f, s.observations()).unwrap();
        assert_eq!(r.utility_trace, vec![0.0, 5.0]);
        assert_eq!(
            r.to_csv(),
            "step,stream_index,utility_after,threshold\n1,0,0,\n2,5,5,\n"
        );

        let h = hand_trace_stream();
        let cfg = PeriodicSecretaryConfig::new(1, 4, 0.5).unwrap();
        let p = periodic_secretary(h.observations().into(), &UtilityFunction::modular_feature(0), &cfg).unwrap();
        assert_abs_diff_eq!(p.threshold_trace[0], 2.5);
        assert!(p.to_csv().ends_with("1,5,3,2.5\n"));
    }
}
