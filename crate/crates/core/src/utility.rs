//! Set utility functions and marginal gains.
//!
//! Every utility satisfies `f(∅) = 0`. Streaming selectors never evaluate a
//! utility from scratch; they open a [`GainSession`] that holds the current
//! sample set and answers marginal-gain queries incrementally.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gp::{entropy_of_variance, ConditioningSet, GpHyperparams, Whitened};
use crate::stream::Observation;

/// Default cap on `|V|` for mutual-information evaluation.
pub const DEFAULT_MI_CAP: usize = 2000;

/// Largest ground set accepted by [`check_submodular_monotone`].
pub const MAX_CHECK_GROUND: usize = 12;

/// A set function over observations.
pub trait SetFunction: Sync {
    fn value(&self, set: &[&Observation]) -> Result<f64>;

    /// Opens an incremental session starting from the empty set.
    fn session(&self) -> Box<dyn GainSession + '_> {
        Box::new(RecomputeSession::new(self))
    }
}

/// Mutable accumulator for a growing sample set.
pub trait GainSession {
    /// `f(A ∪ {x}) - f(A)` for the current set `A`.
    fn gain(&mut self, x: &Observation) -> Result<f64>;

    /// Adds `x` to `A` and returns the gain it contributed.
    fn insert(&mut self, x: &Observation) -> Result<f64>;

    /// `f(A)`.
    fn value(&self) -> f64;

    /// Indices in insertion order.
    fn selected(&self) -> &[usize];

    fn contains(&self, index: usize) -> bool {
        self.selected().contains(&index)
    }
}

/// Generic session that evaluates `f` from scratch.
struct RecomputeSession<'a, F: ?Sized> {
    f: &'a F,
    members: Vec<Observation>,
    indices: Vec<usize>,
    value: f64,
}

impl<'a, F: SetFunction + ?Sized> RecomputeSession<'a, F> {
    fn new(f: &'a F) -> Self {
        Self {
            f,
            members: Vec::new(),
            indices: Vec::new(),
            value: 0.0,
        }
    }

    fn value_with(&self, x: &Observation) -> Result<f64> {
        let mut refs: Vec<&Observation> = self.members.iter().collect();
        refs.push(x);
        self.f.value(&refs)
    }
}

impl<F: SetFunction + ?Sized> GainSession for RecomputeSession<'_, F> {
    fn gain(&mut self, x: &Observation) -> Result<f64> {
        if self.contains(x.index) {
            return Err(Error::AlreadySelected(x.index));
        }
        Ok(self.value_with(x)? - self.value)
    }

    fn insert(&mut self, x: &Observation) -> Result<f64> {
        let gain = self.gain(x)?;
        self.value += gain;
        self.members.push(x.clone());
        self.indices.push(x.index);
        Ok(gain)
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn selected(&self) -> &[usize] {
        &self.indices
    }
}

/// Where a modular utility reads each item's weight from.
#[derive(Debug, Clone, PartialEq)]
pub enum ModularWeights {
    /// `weights[i]` for the observation with stream index `i`.
    PerIndex(Vec<f64>),
    /// The given feature component of the observation.
    Feature(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum UtilityFunction {
    /// Joint differential entropy `H(A)` of the GP prediction at the sample
    /// locations (the constant `-H(V)` is dropped).
    Entropy { hyper: GpHyperparams },
    /// `I(V∖A; A)` over a finite, caller-discretised observation space.
    MutualInformation {
        hyper: GpHyperparams,
        full_space: Vec<Vec<f64>>,
        cap: usize,
    },
    /// Sum of per-item weights.
    ModularSum { weights: ModularWeights },
}

impl UtilityFunction {
    pub fn entropy(hyper: GpHyperparams) -> Self {
        UtilityFunction::Entropy { hyper }
    }

    pub fn mutual_information(hyper: GpHyperparams, full_space: Vec<Vec<f64>>) -> Self {
        UtilityFunction::MutualInformation {
            hyper,
            full_space,
            cap: DEFAULT_MI_CAP,
        }
    }

    pub fn modular(weights: Vec<f64>) -> Self {
        UtilityFunction::ModularSum {
            weights: ModularWeights::PerIndex(weights),
        }
    }

    pub fn modular_feature(component: usize) -> Self {
        UtilityFunction::ModularSum {
            weights: ModularWeights::Feature(component),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            UtilityFunction::Entropy { .. } => "entropy",
            UtilityFunction::MutualInformation { .. } => "mutual_information",
            UtilityFunction::ModularSum { .. } => "modular_sum",
        }
    }

    fn weight(weights: &ModularWeights, x: &Observation) -> Result<f64> {
        match weights {
            ModularWeights::PerIndex(w) => w
                .get(x.index)
                .copied()
                .ok_or_else(|| Error::InvalidArgument(format!("no modular weight for index {}", x.index))),
            ModularWeights::Feature(j) => x.features.get(*j).copied().ok_or(Error::DimensionMismatch {
                expected: j + 1,
                found: x.dim(),
            }),
        }
    }
}

/// Joint entropy by sequential conditioning.
fn joint_entropy<'a>(hyper: &GpHyperparams, points: impl IntoIterator<Item = &'a [f64]>) -> Result<f64> {
    let mut set = ConditioningSet::new(hyper.clone());
    let mut total = 0.0;
    for x in points {
        total += entropy_of_variance(set.conditional_variance(x)?);
        set.push(x)?;
    }
    Ok(total)
}

impl SetFunction for UtilityFunction {
    fn value(&self, set: &[&Observation]) -> Result<f64> {
        match self {
            UtilityFunction::Entropy { hyper } => joint_entropy(hyper, set.iter().map(|o| o.features.as_slice())),
            UtilityFunction::MutualInformation { hyper, full_space, cap } => {
                let a: Vec<&[f64]> = set.iter().map(|o| o.features.as_slice()).collect();
                mutual_information(&a, full_space, hyper, *cap)
            }
            UtilityFunction::ModularSum { weights } => set.iter().map(|x| Self::weight(weights, x)).sum(),
        }
    }

    fn session(&self) -> Box<dyn GainSession + '_> {
        match self {
            UtilityFunction::Entropy { hyper } => Box::new(EntropySession::new(hyper.clone())),
            UtilityFunction::ModularSum { weights } => Box::new(ModularSession {
                weights,
                indices: Vec::new(),
                value: 0.0,
            }),
            UtilityFunction::MutualInformation { .. } => Box::new(RecomputeSession::new(self)),
        }
    }
}

/// Entropy gains `h(x | A)` with per-index cached whitened vectors, so a
/// candidate queried repeatedly (reference set, greedy ground set) only pays
/// `O(m)` per new sample. Indices must identify observations uniquely.
pub struct EntropySession {
    set: ConditioningSet,
    cache: HashMap<usize, Whitened>,
    indices: Vec<usize>,
    value: f64,
}

impl EntropySession {
    pub fn new(hyper: GpHyperparams) -> Self {
        Self {
            set: ConditioningSet::new(hyper),
            cache: HashMap::new(),
            indices: Vec::new(),
            value: 0.0,
        }
    }

    /// Noisy conditional variance of `x` given the current set.
    pub fn variance(&mut self, x: &Observation) -> Result<f64> {
        if self.contains(x.index) {
            return Err(Error::AlreadySelected(x.index));
        }
        let set = &self.set;
        let w = match self.cache.entry(x.index) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(set.whiten(&x.features)?),
        };
        set.whiten_into(&x.features, w);
        Ok(set.variance_from(w))
    }
}

impl GainSession for EntropySession {
    fn gain(&mut self, x: &Observation) -> Result<f64> {
        Ok(entropy_of_variance(self.variance(x)?))
    }

    fn insert(&mut self, x: &Observation) -> Result<f64> {
        let gain = self.gain(x)?;
        let w = self.cache.remove(&x.index).expect("cached by gain");
        self.set.push_whitened(&x.features, w)?;
        self.indices.push(x.index);
        self.value += gain;
        Ok(gain)
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn selected(&self) -> &[usize] {
        &self.indices
    }
}

struct ModularSession<'a> {
    weights: &'a ModularWeights,
    indices: Vec<usize>,
    value: f64,
}

impl GainSession for ModularSession<'_> {
    fn gain(&mut self, x: &Observation) -> Result<f64> {
        if self.contains(x.index) {
            return Err(Error::AlreadySelected(x.index));
        }
        UtilityFunction::weight(self.weights, x)
    }

    fn insert(&mut self, x: &Observation) -> Result<f64> {
        let g = self.gain(x)?;
        self.value += g;
        self.indices.push(x.index);
        Ok(g)
    }

    fn value(&self) -> f64 {
        self.value
    }

    fn selected(&self) -> &[usize] {
        &self.indices
    }
}

/// `H(A)` for a set of sample locations; `0` for the empty set.
pub fn entropy_criterion(set: &[Vec<f64>], hyper: &GpHyperparams) -> Result<f64> {
    joint_entropy(hyper, set.iter().map(Vec::as_slice))
}

fn mutual_information(a: &[&[f64]], full_space: &[Vec<f64>], hyper: &GpHyperparams, cap: usize) -> Result<f64> {
    if full_space.len() > cap {
        return Err(Error::TooLarge {
            what: "mutual information space",
            size: full_space.len() as u128,
            cap: cap as u128,
        });
    }
    let mut unused = vec![true; full_space.len()];
    for x in a {
        let slot = full_space
            .iter()
            .enumerate()
            .position(|(i, v)| unused[i] && v.as_slice() == *x)
            .ok_or(Error::NotSubset)?;
        unused[slot] = false;
    }
    let rest = full_space
        .iter()
        .zip(&unused)
        .filter(|(_, keep)| **keep)
        .map(|(v, _)| v.as_slice());
    // I(V∖A; A) = H(V∖A) - H(V∖A | A) = H(V∖A) + H(A) - H(V).
    let h_rest = joint_entropy(hyper, rest)?;
    let h_a = joint_entropy(hyper, a.iter().copied())?;
    let h_v = joint_entropy(hyper, full_space.iter().map(Vec::as_slice))?;
    Ok(h_rest + h_a - h_v)
}

/// `I(V∖A; A)` with the default size cap.
pub fn mutual_information_criterion(set: &[Vec<f64>], full_space: &[Vec<f64>], hyper: &GpHyperparams) -> Result<f64> {
    let a: Vec<&[f64]> = set.iter().map(Vec::as_slice).collect();
    mutual_information(&a, full_space, hyper, DEFAULT_MI_CAP)
}

/// `f(A ∪ {x}) - f(A)`, evaluated through the utility's incremental session.
pub fn marginal_gain<F: SetFunction + ?Sized>(f: &F, set: &[&Observation], x: &Observation) -> Result<f64> {
    if set.iter().any(|a| a.index == x.index) {
        return Err(Error::AlreadySelected(x.index));
    }
    let mut session = f.session();
    for a in set {
        session.insert(a)?;
    }
    session.gain(x)
}

/// A counterexample found by [`check_submodular_monotone`], in terms of
/// observation indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    /// The added element for diminishing-returns violations.
    pub element: Option<usize>,
    /// How far the inequality is broken.
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmodularityReport {
    pub submodular: bool,
    pub monotone: bool,
    pub submodular_witness: Option<Violation>,
    pub monotone_witness: Option<Violation>,
}

/// Exhaustively checks diminishing returns and monotonicity over every
/// `A ⊆ B ⊆ ground` with tolerance `1e-8`.
pub fn check_submodular_monotone<F: SetFunction + ?Sized>(
    f: &F,
    ground: &[Observation],
) -> Result<SubmodularityReport> {
    const TOL: f64 = 1e-8;
    let n = ground.len();
    if n > MAX_CHECK_GROUND {
        return Err(Error::TooLarge {
            what: "ground set for exhaustive check",
            size: n as u128,
            cap: MAX_CHECK_GROUND as u128,
        });
    }
    let full = 1usize << n;
    let members =
        |mask: usize| -> Vec<&Observation> { (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &ground[i]).collect() };
    let values = (0..full).map(|m| f.value(&members(m))).collect::<Result<Vec<f64>>>()?;
    let ids = |mask: usize| -> Vec<usize> { members(mask).iter().map(|o| o.index).collect() };

    let mut sub_w = None;
    let mut mono_w = None;
    for b in 0..full {
        // Every submask a of b, ascending.
        let mut a = 0usize;
        loop {
            if mono_w.is_none() && values[a] - values[b] > TOL {
                mono_w = Some(Violation {
                    a: ids(a),
                    b: ids(b),
                    element: None,
                    amount: values[a] - values[b],
                });
            }
            if sub_w.is_none() {
                for e in (0..n).filter(|e| b >> e & 1 == 0) {
                    let bit = 1 << e;
                    let ga = values[a | bit] - values[a];
                    let gb = values[b | bit] - values[b];
                    if ga - gb < -TOL {
                        sub_w = Some(Violation {
                            a: ids(a),
                            b: ids(b),
                            element: Some(ground[e].index),
                            amount: gb - ga,
                        });
                        break;
                    }
                }
            }
            if a == b {
                break;
            }
            a = (a | !b).wrapping_add(1) & b;
        }
        if sub_w.is_some() && mono_w.is_some() {
            break;
        }
    }
    Ok(SubmodularityReport {
        submodular: sub_w.is_none(),
        monotone: mono_w.is_none(),
        submodular_witness: sub_w,
        monotone_witness: mono_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::Rng;
    use std::f64::consts::{E, PI};

    fn observations_of(points: &[Vec<f64>]) -> Vec<Observation> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| Observation::new(i, p.clone()))
            .collect()
    }

    fn hyper() -> GpHyperparams {
        GpHyperparams::new(vec![0.8, 1.1], 1.0, 0.1).unwrap()
    }

    fn random_points(seed: u64, n: usize) -> Vec<Vec<f64>> {
        let mut rng = crate::seed::rng(seed);
        (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect()
    }

    /// `½ ln((2πe)^n det K̃)` computed from an explicit determinant.
    fn determinant_entropy(points: &[Vec<f64>], h: &GpHyperparams) -> f64 {
        let n = points.len();
        if n == 0 {
            return 0.0;
        }
        let k = DMatrix::from_fn(n, n, |r, c| {
            h.k(&points[r], &points[c]) + if r == c { h.noise_variance } else { 0.0 }
        });
        0.5 * (n as f64 * (2.0 * PI * E).ln() + k.determinant().ln())
    }

    struct SquaredCardinality;
    impl SetFunction for SquaredCardinality {
        fn value(&self, set: &[&Observation]) -> Result<f64> {
            Ok((set.len() * set.len()) as f64)
        }
    }

    #[test]
    fn entropy_small_cases() {
        let h1 = GpHyperparams::isotropic(2, 1.0, 0.9, 0.1).unwrap();
        assert_eq!(entropy_criterion(&[], &h1).unwrap(), 0.0);
        assert_abs_diff_eq!(
            entropy_criterion(&[vec![0.0, 0.0]], &h1).unwrap(),
            1.418939,
            epsilon = 1e-6
        );
        let pair = random_points(1, 2);
        assert_abs_diff_eq!(
            entropy_criterion(&pair, &h1).unwrap(),
            determinant_entropy(&pair, &h1),
            epsilon = 1e-10
        );
    }

    #[test]
    fn chain_rule_matches_determinant_and_order() {
        let h = hyper();
        for seed in 0..30 {
            let pts = random_points(seed, 1 + seed as usize % 8);
            let chain = entropy_criterion(&pts, &h).unwrap();
            assert_abs_diff_eq!(chain, determinant_entropy(&pts, &h), epsilon = 1e-8);
            let mut rev = pts.clone();
            rev.reverse();
            assert_abs_diff_eq!(chain, entropy_criterion(&rev, &h).unwrap(), epsilon = 1e-8);
        }
    }

    #[test]
    fn mutual_information_against_determinants() {
        let h = hyper();
        let v = random_points(4, 4);
        assert_eq!(mutual_information_criterion(&[], &v, &h).unwrap(), 0.0);
        assert_abs_diff_eq!(mutual_information_criterion(&v, &v, &h).unwrap(), 0.0, epsilon = 1e-10);

        let a = vec![v[1].clone(), v[3].clone()];
        let rest = vec![v[0].clone(), v[2].clone()];
        let direct = determinant_entropy(&rest, &h) + determinant_entropy(&a, &h) - determinant_entropy(&v, &h);
        let mi = mutual_information_criterion(&a, &v, &h).unwrap();
        assert_abs_diff_eq!(mi, direct, epsilon = 1e-8);
        assert!(mi > 0.0);

        assert!(matches!(
            mutual_information_criterion(&[vec![9.0, 9.0]], &v, &h),
            Err(Error::NotSubset)
        ));
        let capped = UtilityFunction::MutualInformation {
            hyper: h,
            full_space: v,
            cap: 3,
        };
        let err = capped.value(&[]).unwrap_err();
        assert!(err.to_string().contains("limit of 3"), "{err}");
    }

    #[test]
    fn marginal_gain_cases() {
        let h = GpHyperparams::isotropic(2, 1.0, 0.5, 0.5).unwrap();
        let f = UtilityFunction::entropy(h);
        let obs: Vec<Observation> = observations_of(&random_points(2, 5));
        assert_abs_diff_eq!(marginal_gain(&f, &[], &obs[0]).unwrap(), 1.418939, epsilon = 1e-6);

        let m = UtilityFunction::modular(vec![5.0, 1.0, 9.0, 3.0, 2.0]);
        assert_eq!(marginal_gain(&m, &[&obs[0], &obs[1]], &obs[2]).unwrap(), 9.0);
        assert_eq!(marginal_gain(&m, &[], &obs[2]).unwrap(), 9.0);

        assert!(matches!(
            marginal_gain(&f, &[&obs[0]], &obs[0]),
            Err(Error::AlreadySelected(0))
        ));
    }

    #[test]
    fn incremental_path_is_consistent() {
        let f = UtilityFunction::entropy(hyper());
        for seed in 0..20 {
            let obs = observations_of(&random_points(100 + seed, 7));
            let (x, a) = obs.split_last().unwrap();
            let refs: Vec<&Observation> = a.iter().collect();
            let gain = marginal_gain(&f, &refs, x).unwrap();
            let mut all = refs.clone();
            all.push(x);
            assert_abs_diff_eq!(gain + f.value(&refs).unwrap(), f.value(&all).unwrap(), epsilon = 1e-12);

            // Gains shrink as the conditioning set grows.
            let small = marginal_gain(&f, &refs[..2], x).unwrap();
            assert!(small >= gain - 1e-12);

            let mut s = f.session();
            for o in &refs {
                s.insert(o).unwrap();
            }
            assert_abs_diff_eq!(s.value(), f.value(&refs).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn modular_is_submodular_and_monotone() {
        let ground = observations_of(&random_points(3, 6));
        let f = UtilityFunction::modular(vec![1.0, 0.0, 2.5, 3.0, 0.1, 7.0]);
        let r = check_submodular_monotone(&f, &ground).unwrap();
        assert!(r.submodular && r.monotone, "{r:?}");
    }

    #[test]
    fn entropy_passes_exhaustive_check() {
        let f = UtilityFunction::entropy(hyper());
        let ground = observations_of(&random_points(8, 6));
        let r = check_submodular_monotone(&f, &ground).unwrap();
        assert!(r.submodular && r.monotone, "{r:?}");
    }

    #[test]
    fn squared_cardinality_is_caught() {
        let ground = observations_of(&random_points(9, 4));
        let r = check_submodular_monotone(&SquaredCardinality, &ground).unwrap();
        assert!(!r.submodular);
        assert!(r.monotone);
        let w = r.submodular_witness.unwrap();
        let (a, b) = (w.a.len() as f64, w.b.len() as f64);
        assert!(w.a.iter().all(|i| w.b.contains(i)));
        assert!((2.0 * a + 1.0) < (2.0 * b + 1.0));
        assert!(!w.b.contains(&w.element.unwrap()));
    }

    #[test]
    fn negative_weights_break_monotonicity() {
        let ground = observations_of(&random_points(9, 3));
        let f = UtilityFunction::modular(vec![1.0, -2.0, 1.0]);
        let r = check_submodular_monotone(&f, &ground).unwrap();
        assert!(r.submodular);
        assert!(!r.monotone);
        assert!(r.monotone_witness.is_some());
    }

    #[test]
    fn check_refuses_large_ground() {
        let ground = observations_of(&random_points(1, 13));
        assert!(matches!(
            check_submodular_monotone(&SquaredCardinality, &ground),
            Err(Error::TooLarge { .. })
        ));
    }
}
