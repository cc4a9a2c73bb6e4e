//! Evaluation measures reported by `eval`.

use manic_core::{ActionVector, BeliefVector, LearningSystem, Observation, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Coefficient of determination of the best affine map from `x` rows to `y`.
/// `None` when `y` is constant or the fit is degenerate.
pub fn affine_r2(x: &[Vec<f64>], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n == 0 || n != y.len() {
        return None;
    }
    let d = x[0].len();
    let a = DMatrix::from_fn(n, d + 1, |i, j| if j < d { x[i][j] } else { 1.0 });
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let fit = a * coef;
    let mean = b.mean();
    let ss_tot: f64 = b.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot <= 0.0 {
        return None;
    }
    let ss_res: f64 = b.iter().zip(fit.iter()).map(|(v, f)| (v - f).powi(2)).sum();
    Some(1.0 - ss_res / ss_tot)
}

/// R² of each ground-truth coordinate regressed on the beliefs.
pub fn r2_report(beliefs: &[Vec<f64>], states: &[Vec<f64>]) -> Vec<Option<f64>> {
    let dims = states.first().map_or(0, |s| s.len());
    (0..dims)
        .map(|c| {
            let y: Vec<f64> = states.iter().map(|s| s[c]).collect();
            affine_r2(beliefs, &y)
        })
        .collect()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

/// Mean absolute pixel error of open-loop predictions at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub horizon: usize,
    pub model: f64,
    /// Error of repeating the start frame.
    pub persistence: f64,
    pub ratio: f64,
}

/// How the starting belief of each rollout is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartBelief {
    Encoder,
    /// Refinement through the decoder from the zero belief.
    Inference { steps: usize, rate: f64 },
}

impl StartBelief {
    pub fn for_system(ls: &LearningSystem) -> Self {
        if ls.g_plus.is_some() {
            StartBelief::Encoder
        } else {
            StartBelief::Inference { steps: 200, rate: 0.05 }
        }
    }

    pub fn belief(&self, ls: &LearningSystem, x: &Observation) -> Result<BeliefVector> {
        match *self {
            StartBelief::Encoder => ls.encode(x),
            StartBelief::Inference { steps, rate } => {
                ls.refine_beliefs(&BeliefVector::zeros(ls.belief_dims()), x, steps, rate)
            }
        }
    }
}

/// Open-loop rollouts from `starts`, driven by the recorded actions, scored
/// against the recorded frames at each of `horizons`. Starts too close to
/// the end of the sequence for the longest horizon are skipped.
pub fn rollout_table(
    ls: &LearningSystem,
    observations: &[Observation],
    actions: &[ActionVector],
    starts: &[usize],
    horizons: &[usize],
    start: StartBelief,
) -> Result<Vec<RolloutRow>> {
    let longest = horizons.iter().copied().max().unwrap_or(0);
    let usable: Vec<usize> = starts
        .iter()
        .copied()
        .filter(|&t| t + longest < observations.len() && t + longest <= actions.len())
        .collect();
    let mut model = vec![0.0; horizons.len()];
    let mut persistence = vec![0.0; horizons.len()];
    for &t in &usable {
        let v0 = start.belief(ls, &observations[t])?;
        let video = ls.imagine_video(&v0, &actions[t..t + longest])?;
        for (i, &h) in horizons.iter().enumerate() {
            let truth = &observations[t + h];
            model[i] += video[h - 1].mean_abs_diff(truth)?;
            persistence[i] += observations[t].mean_abs_diff(truth)?;
        }
    }
    let n = usable.len().max(1) as f64;
    Ok(horizons
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let (m, p) = (model[i] / n, persistence[i] / n);
            RolloutRow {
                horizon: h,
                model: m,
                persistence: p,
                ratio: if p > 0.0 { m / p } else { f64::NAN },
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r2_of_exact_affine_map_is_one() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64 % 7.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 1.0).collect();
        assert!((affine_r2(&x, &y).unwrap() - 1.0).abs() < 1e-9);
        assert!(affine_r2(&x, &[2.0; 20]).is_none());
    }

    #[test]
    fn r2_of_unrelated_column_is_small() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![(i % 2) as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i / 2 % 2) as f64).collect();
        assert!(affine_r2(&x, &y).unwrap().abs() < 1e-9);
    }

    #[test]
    fn spearman_sees_monotone_maps() {
        let a: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| v.powi(3)).collect();
        assert!((spearman(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((spearman(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&a, &[1.0; 10]).is_none());
    }
}
