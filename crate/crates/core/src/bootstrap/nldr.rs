//! Temporal Isomap.
//!
//! Frames are joined to their `k` nearest neighbours in pixel space and to
//! their temporal predecessor and successor. Geodesic distances along that
//! graph are embedded with classical multidimensional scaling, and each
//! output dimension is rescaled affinely into `[-1, 1]`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use super::dataset::{BeliefEstimates, WalkDataset};
use crate::error::{Error, Result};

/// Above this many frames, MDS runs on evenly spaced landmarks.
pub const EXACT_MDS_LIMIT: usize = 2000;
pub const LANDMARKS: usize = 500;

/// Undirected weighted neighbour graph in adjacency-list form.
#[derive(Debug, Clone)]
pub struct NeighborGraph {
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

fn pixel_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Frames per block of the Gram-matrix distance screen.
const GRAM_BLOCK: usize = 256;

/// Candidate neighbours of every frame, screened by squared distance from a
/// blocked Gram product, `|a|^2 + |b|^2 - 2 a.b`. The screen keeps a margin
/// beyond `k` so rounding in the expansion cannot change the exact ranking.
fn screened_candidates(frames: &[&[f64]], keep: usize) -> Vec<Vec<usize>> {
    let t = frames.len();
    let n = frames.first().map_or(0, |f| f.len());
    let x = DMatrix::from_fn(t, n, |i, j| frames[i][j]);
    let norms: Vec<f64> = frames.iter().map(|f| f.iter().map(|v| v * v).sum()).collect();
    let mut out = Vec::with_capacity(t);
    for start in (0..t).step_by(GRAM_BLOCK) {
        let rows = GRAM_BLOCK.min(t - start);
        let gram = x.rows(start, rows) * x.transpose();
        let block: Vec<Vec<usize>> = (0..rows)
            .into_par_iter()
            .map(|r| {
                let i = start + r;
                let mut cand: Vec<(usize, f64)> = (0..t)
                    .filter(|&j| j != i)
                    .map(|j| (j, norms[i] + norms[j] - 2.0 * gram[(r, j)]))
                    .collect();
                let keep = keep.min(cand.len());
                if keep < cand.len() {
                    cand.select_nth_unstable_by(keep, |a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                    cand.truncate(keep);
                }
                cand.into_iter().map(|(j, _)| j).collect()
            })
            .collect();
        out.extend(block);
    }
    out
}

/// k-NN (ties to the lower frame index) united with temporal edges.
pub fn neighbor_graph(frames: &[&[f64]], k: usize) -> NeighborGraph {
    let t = frames.len();
    let screened = screened_candidates(frames, 2 * k + 8);
    let knn: Vec<Vec<(usize, f64)>> = screened
        .into_par_iter()
        .enumerate()
        .map(|(i, cand)| {
            let mut dists: Vec<(usize, f64)> = cand
                .into_iter()
                .map(|j| (j, pixel_distance(frames[i], frames[j])))
                .collect();
            dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            dists.truncate(k);
            dists
        })
        .collect();
    let mut adjacency = vec![Vec::new(); t];
    let mut add = |a: usize, b: usize, w: f64| {
        if !adjacency[a].iter().any(|&(n, _)| n == b) {
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
    };
    for (i, neighbors) in knn.into_iter().enumerate() {
        for (j, w) in neighbors {
            add(i, j, w);
        }
    }
    for i in 1..t {
        add(i - 1, i, pixel_distance(frames[i - 1], frames[i]));
    }
    NeighborGraph { adjacency }
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl NeighborGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Single-source shortest paths (Dijkstra).
    pub fn geodesics_from(&self, source: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Frontier(0.0, source));
        while let Some(Frontier(d, node)) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, w) in &self.adjacency[node] {
                let nd = d + w;
                if nd < dist[next] {
                    dist[next] = nd;
                    heap.push(Frontier(nd, next));
                }
            }
        }
        dist
    }

    pub fn is_connected(&self) -> bool {
        self.is_empty() || self.geodesics_from(0).iter().all(|d| d.is_finite())
    }
}

/// Top `d` eigenpairs of the double-centred matrix `-0.5 * J D^2 J`.
fn centered_top_eigen(sq: &DMatrix<f64>, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = sq.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let total = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + total));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let keep = &order[..d.min(n)];
    let values = keep.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    (values, vectors)
}

/// Classical MDS of a full geodesic distance matrix.
fn classical_mds(geo: &[Vec<f64>], d: usize) -> Vec<Vec<f64>> {
    let n = geo.len();
    let sq = DMatrix::from_fn(n, n, |i, j| {
        // symmetrise to remove float asymmetry from separate Dijkstra runs
        let g = 0.5 * (geo[i][j] + geo[j][i]);
        g * g
    });
    let (values, vectors) = centered_top_eigen(&sq, d);
    (0..n)
        .map(|i| {
            (0..d)
                .map(|c| match values.get(c) {
                    Some(&l) if l > 0.0 => vectors[(i, c)] * l.sqrt(),
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Landmark MDS: embed landmarks exactly, triangulate every other point.
fn landmark_mds(graph: &NeighborGraph, landmarks: &[usize], d: usize) -> Vec<Vec<f64>> {
    let m = landmarks.len();
    let to_landmark: Vec<Vec<f64>> = landmarks.par_iter().map(|&l| graph.geodesics_from(l)).collect();
    let sq = DMatrix::from_fn(m, m, |a, b| {
        let g = 0.5 * (to_landmark[a][landmarks[b]] + to_landmark[b][landmarks[a]]);
        g * g
    });
    let mean_sq: Vec<f64> = (0..m).map(|a| sq.column(a).mean()).collect();
    let (values, vectors) = centered_top_eigen(&sq, d);
    (0..graph.len())
        .map(|x| {
            (0..d)
                .map(|c| match values.get(c) {
                    Some(&l) if l > 0.0 => {
                        let s: f64 = (0..m)
                            .map(|a| vectors[(a, c)] * (to_landmark[a][x].powi(2) - mean_sq[a]))
                            .sum();
                        -0.5 * s / l.sqrt()
                    }
                    _ => 0.0,
                })
                .collect()
        })
        .collect()
}

/// Per-dimension affine map onto `[-1, 1]`; constant dimensions become 0.
pub fn rescale_unit(mut coords: Vec<Vec<f64>>, d: usize) -> Vec<Vec<f64>> {
    for c in 0..d {
        let lo = coords.iter().map(|v| v[c]).fold(f64::INFINITY, f64::min);
        let hi = coords.iter().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for v in coords.iter_mut() {
            v[c] = if span > 0.0 {
                (2.0 * (v[c] - lo) / span - 1.0).clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
    }
    coords
}

/// Initial beliefs for every frame of `ds` by temporal Isomap.
pub fn estimate_beliefs(ds: &WalkDataset, d: usize, k: usize) -> Result<BeliefEstimates> {
    let t = ds.len();
    if d == 0 {
        return Err(Error::InvalidArgument("belief dims must be >= 1".into()));
    }
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    if t <= k {
        return Err(Error::InvalidArgument(format!(
            "need more frames ({t}) than neighbours ({k})"
        )));
    }
    let frames: Vec<&[f64]> = ds.observations.iter().map(|o| o.pixels.as_slice()).collect();
    let graph = neighbor_graph(&frames, k);
    let mut coords = if t > EXACT_MDS_LIMIT {
        let landmarks: Vec<usize> = (0..LANDMARKS).map(|i| i * (t - 1) / (LANDMARKS - 1)).collect();
        landmark_mds(&graph, &landmarks, d)
    } else {
        let geo: Vec<Vec<f64>> = (0..t).into_par_iter().map(|s| graph.geodesics_from(s)).collect();
        classical_mds(&geo, d)
    };
    // eigenvector signs are arbitrary; pin them so frame 0 sits on the low side
    for c in 0..d {
        if coords[0][c] > 0.0 {
            coords.iter_mut().for_each(|v| v[c] = -v[c]);
        }
    }
    if coords.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("belief estimates"));
    }
    Ok(BeliefEstimates {
        beliefs: rescale_unit(coords, d),
        dims: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ActionVector, FrameDims, Observation};

    fn dataset(frames: Vec<Vec<f64>>, dims: FrameDims) -> WalkDataset {
        let t = frames.len();
        WalkDataset {
            observations: frames
                .into_iter()
                .map(|p| Observation {
                    dims,
                    pixels: p,
                    aux: Vec::new(),
                })
                .collect(),
            actions: vec![ActionVector::one_hot(2, 0); t - 1],
            true_states: None,
            frame: dims,
            action_dims: 2,
            seed: 0,
        }
    }

    #[test]
    fn three_frame_chain_orders_middle() {
        let dims = FrameDims::new(2, 1, 1);
        let ds = dataset(vec![vec![0.0, 0.0], vec![0.5, 0.5], vec![1.0, 1.0]], dims);
        let be = estimate_beliefs(&ds, 1, 2).unwrap();
        let v: Vec<f64> = be.beliefs.iter().map(|b| b[0]).collect();
        assert!((v[0] < v[1] && v[1] < v[2]) || (v[0] > v[1] && v[1] > v[2]), "{v:?}");
    }

    #[test]
    fn preconditions() {
        let dims = FrameDims::new(1, 1, 1);
        let ds = dataset(vec![vec![0.0], vec![1.0], vec![0.5]], dims);
        assert!(estimate_beliefs(&ds, 0, 2).is_err());
        assert!(estimate_beliefs(&ds, 1, 1).is_err());
        assert!(estimate_beliefs(&ds, 1, 3).is_err());
    }

    #[test]
    fn graph_is_connected_even_with_clusters() {
        // two far-apart clusters: k-NN alone would split them
        let mut frames = Vec::new();
        for i in 0..10 {
            frames.push(vec![i as f64 * 0.001]);
        }
        for i in 0..10 {
            frames.push(vec![100.0 + i as f64 * 0.001]);
        }
        let refs: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
        assert!(neighbor_graph(&refs, 3).is_connected());
    }

    #[test]
    fn knn_ties_prefer_lower_index() {
        let frames = [vec![0.0], vec![10.0], vec![1.0], vec![-1.0], vec![-1.5]];
        let refs: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
        let g = neighbor_graph(&refs, 1);
        // frame 0 is equidistant from 2 and 3; its k-NN edge goes to 2
        let mut n0: Vec<usize> = g.adjacency[0].iter().map(|e| e.0).collect();
        n0.sort_unstable();
        assert_eq!(n0, vec![1, 2]);
    }

    #[test]
    fn rescale_hits_unit_bounds() {
        let out = rescale_unit(vec![vec![2.0, 5.0], vec![4.0, 5.0], vec![3.0, 5.0]], 2);
        assert_eq!(out, vec![vec![-1.0, 0.0], vec![1.0, 0.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn landmark_mds_tracks_a_line() {
        // points on a line: exact and landmark MDS agree up to sign/scale
        let frames: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 39.0, 0.0]).collect();
        let refs: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
        let g = neighbor_graph(&refs, 3);
        let landmarks: Vec<usize> = (0..10).map(|i| i * 39 / 9).collect();
        let lm = rescale_unit(landmark_mds(&g, &landmarks, 1), 1);
        let sign = if lm[0][0] < 0.0 { 1.0 } else { -1.0 };
        for (i, v) in lm.iter().enumerate() {
            let expect = sign * (2.0 * i as f64 / 39.0 - 1.0);
            assert!((v[0] - expect).abs() < 1e-6, "{i}: {v:?}");
        }
    }
}
