//! Forward dynamic programming over per-frame proposals.
//!
//! Each layer keeps, per proposal, the best prefix score ending there, its
//! predecessor, and the lexicographic rank of that prefix's id sequence among
//! all reachable prefixes of the same length. Ranks make the tie-break
//! (smallest id sequence) an O(1) comparison.

use super::index::{Stamps, WorkingSet};
use crate::scalar::Scalar;

pub(crate) type Path = Vec<usize>;

struct Layer<T> {
    score: Vec<T>,
    pred: Vec<u32>,
    rank: Vec<u32>,
}

impl<T: Scalar> Layer<T> {
    fn unreachable(n: usize) -> Self {
        Self {
            score: vec![T::neg_infinity(); n],
            pred: vec![u32::MAX; n],
            rank: vec![u32::MAX; n],
        }
    }

    fn reachable(&self, i: usize) -> bool {
        self.score[i] > T::neg_infinity()
    }
}

#[inline]
pub(crate) fn better<T: Scalar>(score: T, rank: u32, best_score: T, best_rank: u32) -> bool {
    score > best_score || (score == best_score && rank < best_rank)
}

fn first_layer<T: Scalar>(ws: &WorkingSet<'_, T>) -> Layer<T> {
    let mut layer = Layer::unreachable(ws.frame_len(0));
    for (r, i) in ws.alive_by_id(0).enumerate() {
        layer.score[i] = ws.objectness(0, i);
        layer.rank[i] = r as u32;
    }
    layer
}

fn assign_ranks<T: Scalar>(ws: &WorkingSet<'_, T>, t: usize, layer: &mut Layer<T>, prev: &Layer<T>) {
    let mut nodes: Vec<usize> = (0..layer.score.len()).filter(|&i| layer.reachable(i)).collect();
    nodes.sort_unstable_by_key(|&i| (prev.rank[layer.pred[i] as usize], ws.id(t, i)));
    for (r, i) in nodes.into_iter().enumerate() {
        layer.rank[i] = r as u32;
    }
}

fn best_end<T: Scalar>(layer: &Layer<T>) -> Option<usize> {
    (0..layer.score.len())
        .filter(|&i| layer.reachable(i))
        .reduce(|b, i| if better(layer.score[i], layer.rank[i], layer.score[b], layer.rank[b]) { i } else { b })
}

fn backtrack<T: Scalar>(layers: &[Layer<T>], end: usize) -> Path {
    let mut path = vec![0; layers.len()];
    let mut i = end;
    for t in (0..layers.len()).rev() {
        path[t] = i;
        i = layers[t].pred[i] as usize;
    }
    path
}

/// Best legal prefix layers. With `indexed`, predecessors come from the overlap
/// grid; otherwise every alive pair of consecutive proposals is examined.
fn legal_layers<T: Scalar>(ws: &WorkingSet<'_, T>, indexed: bool) -> Vec<Layer<T>> {
    let mut layers = vec![first_layer(ws)];
    let mut seen = Stamps::with_len(if indexed { ws.max_frame_len() } else { 0 });
    for t in 1..ws.num_frames() {
        let prev = &layers[t - 1];
        let mut layer = Layer::unreachable(ws.frame_len(t));
        for i in (0..ws.frame_len(t)).filter(|&i| ws.is_alive(t, i)) {
            let (mut best, mut best_rank, mut pred) = (T::neg_infinity(), u32::MAX, u32::MAX);
            let mut consider = |j: usize| {
                if prev.reachable(j)
                    && ws.legal(t - 1, j, t, i)
                    && better(prev.score[j], prev.rank[j], best, best_rank)
                {
                    best = prev.score[j];
                    best_rank = prev.rank[j];
                    pred = j as u32;
                }
            };
            if indexed {
                ws.grid(t - 1).candidates(&ws.boxes[t][i], &mut seen, consider);
            } else {
                (0..ws.frame_len(t - 1)).for_each(&mut consider);
            }
            if pred != u32::MAX {
                layer.score[i] = best + ws.objectness(t, i);
                layer.pred[i] = pred;
            }
        }
        assign_ranks(ws, t, &mut layer, prev);
        layers.push(layer);
    }
    layers
}

/// Highest-objectness tube over legal links only, using the overlap index.
pub(crate) fn best_legal<T: Scalar>(ws: &WorkingSet<'_, T>) -> Option<Path> {
    if ws.any_frame_empty() {
        return None;
    }
    let layers = legal_layers(ws, true);
    best_end(layers.last()?).map(|end| backtrack(&layers, end))
}

/// Best tube over all link choices, legal or not, scoring legal tubes with the
/// `+T` bonus. Examines every consecutive pair: `O(T N^2)`.
pub(crate) fn best_any<T: Scalar>(ws: &WorkingSet<'_, T>) -> Option<Path> {
    if ws.any_frame_empty() {
        return None;
    }
    let legal = legal_layers(ws, false);

    let mut free = vec![first_layer(ws)];
    for t in 1..ws.num_frames() {
        let prev = &free[t - 1];
        let p = best_end(prev).expect("non-empty frame");
        let mut layer = Layer::unreachable(ws.frame_len(t));
        for i in (0..ws.frame_len(t)).filter(|&i| ws.is_alive(t, i)) {
            layer.score[i] = prev.score[p] + ws.objectness(t, i);
            layer.pred[i] = p as u32;
        }
        assign_ranks(ws, t, &mut layer, prev);
        free.push(layer);
    }

    let bonus = T::from_count(ws.num_frames());
    let free_end = best_end(free.last()?)?;
    let free_path = backtrack(&free, free_end);
    let free_score = free.last()?.score[free_end];
    let Some(legal_end) = best_end(legal.last()?) else {
        return Some(free_path);
    };
    let legal_path = backtrack(&legal, legal_end);
    let legal_score = legal.last()?.score[legal_end] + bonus;

    if legal_score > free_score {
        Some(legal_path)
    } else if legal_score < free_score {
        Some(free_path)
    } else {
        let ids = |path: &Path| path.iter().enumerate().map(|(t, &i)| ws.id(t, i)).collect::<Vec<_>>();
        Some(if ids(&legal_path) <= ids(&free_path) { legal_path } else { free_path })
    }
}
