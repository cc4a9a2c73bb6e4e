//! The contentment model `h` and its two training paths: pairwise preference
//! learning from teacher rankings, and a (mu + lambda) evolutionary search.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::approximator::{Approximator, Gradients};
use crate::env::raster::gaussian;
use crate::error::{Error, Result};
use crate::learning::LearningSystem;
use crate::types::BeliefVector;

/// Discount applied to later beliefs when aggregating a trace.
pub const DISCOUNT: f64 = 0.97;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentmentModel {
    pub h: Approximator,
}

impl ContentmentModel {
    /// Fresh `d -> hidden.. -> 1` network.
    pub fn new(belief_dims: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![belief_dims];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Self::from_approximator(Approximator::new(&sizes, seed)?)
    }

    pub fn from_approximator(h: Approximator) -> Result<Self> {
        if h.output_len() != 1 {
            return Err(Error::shape("contentment output", 1, h.output_len()));
        }
        Ok(Self { h })
    }

    pub fn belief_dims(&self) -> usize {
        self.h.input_len()
    }

    pub fn hash(&self) -> String {
        self.h.hash()
    }

    pub fn contentment(&self, v: &[f64]) -> Result<f64> {
        Ok(self.h.forward(v)?[0])
    }

    /// Discounted mean `sum g^k h(v_k) / sum g^k`.
    pub fn plan_utility(&self, beliefs: &[BeliefVector]) -> Result<f64> {
        let values = beliefs
            .iter()
            .map(|v| self.contentment(v))
            .collect::<Result<Vec<_>>>()?;
        aggregate(&values)
    }

    /// Gradient of `scale * plan_utility(beliefs)` with respect to `h`.
    fn utility_gradients(&self, beliefs: &[BeliefVector], scale: f64, into: &mut Gradients) -> Result<()> {
        let weights = discount_weights(beliefs.len());
        for (v, w) in beliefs.iter().zip(weights) {
            let g = self.h.gradients(v, &[1.0])?;
            into.add_scaled(&g, scale * w);
        }
        Ok(())
    }

    /// Bradley-Terry loss `-ln sigmoid(U(w) - U(l))` and its gradient.
    pub fn pair_loss(&self, winner: &[BeliefVector], loser: &[BeliefVector]) -> Result<(f64, Gradients)> {
        let margin = self.plan_utility(winner)? - self.plan_utility(loser)?;
        let loss = softplus(-margin);
        let dmargin = -sigmoid(-margin);
        let mut grads = Gradients::zeros(&self.h);
        self.utility_gradients(winner, dmargin, &mut grads)?;
        self.utility_gradients(loser, -dmargin, &mut grads)?;
        Ok((loss, grads))
    }
}

/// Normalized weights `g^k / sum g^j` for a trace of length `n`.
pub fn discount_weights(n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|k| DISCOUNT.powi(k as i32)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Discounted mean of per-step contentment values.
pub fn aggregate(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("plan utility of an empty trace".into()));
    }
    Ok(discount_weights(values.len())
        .iter()
        .zip(values)
        .map(|(w, h)| w * h)
        .sum())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// One teacher ranking over candidate ids, best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub session_id: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
    pub ordering: Vec<String>,
    /// `(winner, loser)` id pairs implied by `ordering`.
    pub pairs: Vec<(String, String)>,
}

impl PreferenceRecord {
    pub fn new(session_id: impl Into<String>, timestamp: u64, ordering: Vec<String>) -> Result<Self> {
        validate_ordering(&ordering)?;
        let pairs = expand_pairs(&ordering);
        Ok(Self {
            session_id: session_id.into(),
            timestamp,
            ordering,
            pairs,
        })
    }

    /// Checks the ordering and that `pairs` is its expansion.
    pub fn validate(&self) -> Result<()> {
        validate_ordering(&self.ordering)?;
        if self.pairs != expand_pairs(&self.ordering) {
            return Err(Error::Format(format!(
                "pairs of session {} do not match its ordering",
                self.session_id
            )));
        }
        Ok(())
    }
}

pub fn validate_ordering(ordering: &[String]) -> Result<()> {
    if ordering.len() < 2 {
        return Err(Error::InvalidArgument("a ranking needs at least 2 candidates".into()));
    }
    let mut seen = HashSet::new();
    for id in ordering {
        if !seen.insert(id.as_str()) {
            return Err(Error::InvalidArgument(format!("candidate {id} ranked twice")));
        }
    }
    Ok(())
}

/// Every `(better, worse)` pair of a total order: `n(n-1)/2` of them.
pub fn expand_pairs(ordering: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::with_capacity(ordering.len() * ordering.len().saturating_sub(1) / 2);
    for (i, w) in ordering.iter().enumerate() {
        for l in &ordering[i + 1..] {
            out.push((w.clone(), l.clone()));
        }
    }
    out
}

/// Resolves candidate ids to the belief traces their plans imagine.
pub trait TraceSource {
    fn trace(&self, id: &str, ls: &LearningSystem) -> Result<Vec<BeliefVector>>;
}

impl TraceSource for HashMap<String, Vec<BeliefVector>> {
    fn trace(&self, id: &str, _ls: &LearningSystem) -> Result<Vec<BeliefVector>> {
        self.get(id)
            .cloned()
            .ok_or_else(|| Error::UnresolvedTrace(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreferenceConfig {
    pub epochs: usize,
    pub rate: f64,
    /// Fraction of pairs withheld for the accuracy report.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            rate: 0.05,
            holdout: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReport {
    pub pairs_used: usize,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    /// Accuracy on the held-out split, or on the training pairs when the
    /// split is empty.
    pub heldout_accuracy: f64,
    pub train_accuracy: f64,
    pub final_loss: f64,
    pub epoch_loss: Vec<f64>,
}

/// Fits `h` to the pairwise preferences in `prefs`. Only `h` changes; belief
/// traces are resolved once, up front, and held fixed.
pub fn train_preferences(
    cm: &mut ContentmentModel,
    prefs: &[PreferenceRecord],
    traces: &dyn TraceSource,
    ls: &LearningSystem,
    cfg: &PreferenceConfig,
) -> Result<PreferenceReport> {
    if !(cfg.rate > 0.0 && cfg.rate.is_finite()) {
        return Err(Error::InvalidArgument(format!("rate must be positive, got {}", cfg.rate)));
    }
    let mut cache: HashMap<&str, usize> = HashMap::new();
    let mut resolved: Vec<Vec<BeliefVector>> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for record in prefs {
        for (w, l) in &record.pairs {
            let mut ends = [0usize; 2];
            for (slot, id) in ends.iter_mut().zip([w, l]) {
                *slot = match cache.get(id.as_str()) {
                    Some(&i) => i,
                    None => {
                        let trace = traces.trace(id, ls)?;
                        if trace.is_empty() {
                            return Err(Error::UnresolvedTrace(format!("{id} (empty trace)")));
                        }
                        resolved.push(trace);
                        cache.insert(id, resolved.len() - 1);
                        resolved.len() - 1
                    }
                };
            }
            pairs.push((ends[0], ends[1]));
        }
    }
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no preference pairs to train on".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let held = (pairs.len() as f64 * cfg.holdout.clamp(0.0, 1.0)).floor() as usize;
    let (heldout, train) = order.split_at(held);
    let mut train = train.to_vec();

    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        train.shuffle(&mut rng);
        let mut total = 0.0;
        for &p in &train {
            let (w, l) = pairs[p];
            let (loss, grads) = cm.pair_loss(&resolved[w], &resolved[l])?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("ranking loss is {loss}")));
            }
            cm.h.apply_gradients(&grads, cfg.rate)?;
            total += loss;
        }
        epoch_loss.push(total / train.len().max(1) as f64);
    }

    let utilities = resolved
        .iter()
        .map(|t| cm.plan_utility(t))
        .collect::<Result<Vec<_>>>()?;
    let accuracy = |set: &[usize]| -> f64 {
        let score: f64 = set
            .iter()
            .map(|&p| {
                let (w, l) = pairs[p];
                match utilities[w].total_cmp(&utilities[l]) {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                }
            })
            .sum();
        score / set.len().max(1) as f64
    };
    let train_accuracy = accuracy(&train);
    let heldout_accuracy = if heldout.is_empty() {
        train_accuracy
    } else {
        accuracy(heldout)
    };
    let final_loss = train
        .iter()
        .map(|&p| softplus(utilities[pairs[p].1] - utilities[pairs[p].0]))
        .sum::<f64>()
        / train.len().max(1) as f64;
    Ok(PreferenceReport {
        pairs_used: pairs.len(),
        train_pairs: train.len(),
        heldout_pairs: heldout.len(),
        heldout_accuracy,
        train_accuracy,
        final_loss,
        epoch_loss,
    })
}

/// Scores a candidate contentment model, typically by running closed-loop
/// episodes with it and measuring an external objective. Higher is fitter.
pub trait FitnessScorer: Sync {
    fn score(&self, cm: &ContentmentModel) -> Result<f64>;
}

impl<F> FitnessScorer for F
where
    F: Fn(&ContentmentModel) -> Result<f64> + Sync,
{
    fn score(&self, cm: &ContentmentModel) -> Result<f64> {
        self(cm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub population: usize,
    pub generations: usize,
    /// Standard deviation of the Gaussian parameter perturbation.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            population: 8,
            generations: 10,
            sigma: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveReport {
    pub best: ContentmentModel,
    pub best_fitness: f64,
    /// Best fitness in the surviving population after each generation.
    pub best_per_generation: Vec<f64>,
}

/// (mu + lambda) search over `h` parameters. The population starts as `base`
/// plus perturbed copies; each generation every parent spawns one perturbed
/// child, and the fitter half of parents plus children survives. Ties keep
/// the earlier individual, parents before children.
pub fn evolve_contentment(base: &ContentmentModel, scorer: &dyn FitnessScorer, cfg: &EvolveConfig) -> Result<EvolveReport> {
    if cfg.population < 2 {
        return Err(Error::InvalidArgument("evolution needs population >= 2".into()));
    }
    if cfg.generations < 1 {
        return Err(Error::InvalidArgument("evolution needs generations >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base_params = base.h.params();
    let perturb = |params: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        params.iter().map(|p| p + gaussian(rng, cfg.sigma)).collect()
    };
    let build = |params: &[f64]| -> Result<ContentmentModel> {
        let mut h = base.h.clone();
        h.set_params(params)?;
        Ok(ContentmentModel { h })
    };
    let score_all = |genomes: &[Vec<f64>]| -> Result<Vec<f64>> {
        genomes
            .par_iter()
            .map(|g| {
                let s = scorer.score(&build(g)?)?;
                if s.is_nan() {
                    return Err(Error::InvalidArgument("fitness scorer returned NaN".into()));
                }
                Ok(s)
            })
            .collect()
    };

    let mut genomes = vec![base_params.clone()];
    for _ in 1..cfg.population {
        genomes.push(perturb(&base_params, &mut rng));
    }
    let mut fitness = score_all(&genomes)?;
    let mut best_per_generation = Vec::with_capacity(cfg.generations);
    for _ in 0..cfg.generations {
        let children: Vec<Vec<f64>> = genomes.iter().map(|g| perturb(g, &mut rng)).collect();
        let child_fitness = score_all(&children)?;
        genomes.extend(children);
        fitness.extend(child_fitness);
        let mut rank: Vec<usize> = (0..genomes.len()).collect();
        rank.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
        rank.truncate(cfg.population);
        genomes = rank.iter().map(|&i| genomes[i].clone()).collect();
        fitness = rank.iter().map(|&i| fitness[i]).collect();
        best_per_generation.push(fitness[0]);
    }
    Ok(EvolveReport {
        best: build(&genomes[0])?,
        best_fitness: fitness[0],
        best_per_generation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn beliefs(rows: &[&[f64]]) -> Vec<BeliefVector> {
        rows.iter().map(|r| BeliefVector::new(r.to_vec()).unwrap()).collect()
    }

    #[test]
    fn zero_model_is_content_with_nothing() {
        let cm = ContentmentModel::from_approximator(Approximator::zeros(&[3, 4, 1]).unwrap()).unwrap();
        assert_eq!(cm.contentment(&[0.2, -0.5, 1.0]).unwrap(), 0.0);
        assert!(cm.contentment(&[0.2]).is_err());
    }

    #[test]
    fn output_must_be_scalar() {
        assert!(ContentmentModel::from_approximator(Approximator::zeros(&[2, 2]).unwrap()).is_err());
    }

    #[test]
    fn constant_h_gives_constant_utility() {
        let mut h = Approximator::zeros(&[2, 1]).unwrap();
        h.biases_mut(0)[0] = 0.7;
        let cm = ContentmentModel::from_approximator(h).unwrap();
        let trace = beliefs(&[&[0.1, 0.2], &[-0.5, 0.9], &[1.0, -1.0]]);
        assert!((cm.plan_utility(&trace).unwrap() - 0.7).abs() < 1e-15);
        assert!(cm.plan_utility(&[]).is_err());
    }

    #[test]
    fn single_belief_utility_is_its_contentment() {
        let cm = ContentmentModel::new(2, &[5], 3).unwrap();
        let trace = beliefs(&[&[0.3, -0.6]]);
        assert_eq!(cm.plan_utility(&trace).unwrap(), cm.contentment(&trace[0]).unwrap());
    }

    #[test]
    fn early_belief_change_is_discount_weighted() {
        let cm = ContentmentModel::new(2, &[5], 4).unwrap();
        let a = beliefs(&[&[0.1, 0.1], &[0.4, -0.2], &[0.0, 0.5]]);
        let mut b = a.clone();
        b[1] = BeliefVector::new(vec![-0.9, 0.8]).unwrap();
        let norm = 1.0 + DISCOUNT + DISCOUNT * DISCOUNT;
        let expected = DISCOUNT / norm * (cm.contentment(&a[1]).unwrap() - cm.contentment(&b[1]).unwrap());
        let diff = cm.plan_utility(&a).unwrap() - cm.plan_utility(&b).unwrap();
        assert!((diff - expected).abs() < 1e-12);
    }

    #[test]
    fn ordering_expands_to_all_pairs() {
        let ids: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let rec = PreferenceRecord::new("s", 0, ids).unwrap();
        assert_eq!(rec.pairs.len(), 6);
        assert_eq!(rec.pairs[0], ("a".into(), "b".into()));
        assert!(rec.validate().is_ok());
        assert!(PreferenceRecord::new("s", 0, vec!["a".into()]).is_err());
        assert!(PreferenceRecord::new("s", 0, vec!["a".into(), "a".into()]).is_err());
    }

    #[test]
    fn pair_loss_gradient_matches_finite_differences() {
        let mut cm = ContentmentModel::new(3, &[6], 21).unwrap();
        let w = beliefs(&[&[0.1, 0.5, -0.2], &[0.3, 0.2, 0.9]]);
        let l = beliefs(&[&[-0.4, 0.1, 0.6], &[0.8, -0.7, 0.0], &[0.2, 0.2, 0.2]]);
        let (_, grads) = cm.pair_loss(&w, &l).unwrap();
        let analytic = grads.flat_params();
        let eps = 1e-6;
        for i in 0..cm.h.param_count() {
            let p = cm.h.param(i).unwrap();
            cm.h.set_param(i, p + eps).unwrap();
            let up = cm.pair_loss(&w, &l).unwrap().0;
            cm.h.set_param(i, p - eps).unwrap();
            let down = cm.pair_loss(&w, &l).unwrap().0;
            cm.h.set_param(i, p).unwrap();
            let numeric = (up - down) / (2.0 * eps);
            let scale = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!((analytic[i] - numeric).abs() / scale < 1e-4, "param {i}: {} vs {numeric}", analytic[i]);
        }
    }

    fn two_trace_store() -> HashMap<String, Vec<BeliefVector>> {
        let mut store = HashMap::new();
        store.insert("a".to_string(), beliefs(&[&[0.5, 0.0]]));
        store.insert("b".to_string(), beliefs(&[&[-0.5, 0.0]]));
        store
    }

    fn dummy_ls() -> LearningSystem {
        use crate::learning::{SystemDims, Topology};
        use crate::types::FrameDims;
        let dims = SystemDims {
            belief_dims: 2,
            action_dims: 2,
            frame: FrameDims::new(4, 4, 1),
            aux_dims: 0,
        };
        LearningSystem::new(dims, &Topology::default(), 0).unwrap()
    }

    #[test]
    fn single_pair_is_learned() {
        let store = two_trace_store();
        let ls = dummy_ls();
        let mut cm = ContentmentModel::new(2, &[4], 1).unwrap();
        let rec = PreferenceRecord::new("s", 0, vec!["b".into(), "a".into()]).unwrap();
        let before = (cm.clone(), ls.clone());
        let report = train_preferences(&mut cm, &[rec], &store, &ls, &PreferenceConfig::default()).unwrap();
        let margin = cm.plan_utility(&store["b"]).unwrap() - cm.plan_utility(&store["a"]).unwrap();
        assert!(margin > 0.0);
        assert_eq!(report.pairs_used, 1);
        assert_ne!(before.0, cm);
        assert_eq!(before.1, ls);
    }

    #[test]
    fn contradictory_pairs_sit_at_chance() {
        let store = two_trace_store();
        let ls = dummy_ls();
        let mut cm = ContentmentModel::new(2, &[4], 1).unwrap();
        let prefs = [
            PreferenceRecord::new("s1", 0, vec!["a".into(), "b".into()]).unwrap(),
            PreferenceRecord::new("s2", 1, vec!["b".into(), "a".into()]).unwrap(),
        ];
        let report = train_preferences(&mut cm, &prefs, &store, &ls, &PreferenceConfig::default()).unwrap();
        assert!((report.heldout_accuracy - 0.5).abs() <= 0.05, "{report:?}");
    }

    #[test]
    fn unknown_trace_is_an_error() {
        let store = two_trace_store();
        let mut cm = ContentmentModel::new(2, &[4], 1).unwrap();
        let rec = PreferenceRecord::new("s", 0, vec!["a".into(), "zzz".into()]).unwrap();
        let err = train_preferences(&mut cm, &[rec], &store, &dummy_ls(), &PreferenceConfig::default());
        assert!(matches!(err, Err(Error::UnresolvedTrace(_))));
        assert!(train_preferences(&mut cm, &[], &store, &dummy_ls(), &PreferenceConfig::default()).is_err());
    }

    #[test]
    fn constant_fitness_keeps_first_candidate() {
        let base = ContentmentModel::new(2, &[3], 5).unwrap();
        let cfg = EvolveConfig {
            population: 2,
            generations: 1,
            ..EvolveConfig::default()
        };
        let report = evolve_contentment(&base, &|_: &ContentmentModel| Ok(1.0), &cfg).unwrap();
        assert_eq!(report.best, base);
        assert_eq!(report.best_per_generation, vec![1.0]);
        assert!(evolve_contentment(&base, &|_: &ContentmentModel| Ok(1.0), &EvolveConfig {
            population: 1,
            ..cfg.clone()
        })
        .is_err());
    }

    #[test]
    fn evolution_is_elitist_and_deterministic() {
        let base = ContentmentModel::new(2, &[3], 5).unwrap();
        let scorer = |cm: &ContentmentModel| cm.contentment(&[0.5, -0.5]);
        let cfg = EvolveConfig {
            population: 4,
            generations: 10,
            seed: 9,
            ..EvolveConfig::default()
        };
        let a = evolve_contentment(&base, &scorer, &cfg).unwrap();
        let b = evolve_contentment(&base, &scorer, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.best_per_generation.windows(2).all(|w| w[1] >= w[0]));
        assert!(a.best_fitness > base.contentment(&[0.5, -0.5]).unwrap());
    }
}
