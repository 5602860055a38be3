//! Top-K pruned linking: only the `K` best partial tubes survive each frame.

use super::index::{Stamps, WorkingSet};
use super::viterbi::{better, Path};
use crate::scalar::{desc, Scalar};

#[derive(Debug, Clone, Copy)]
struct Partial<T> {
    idx: usize,
    score: T,
    /// Position of the predecessor in the previous beam.
    pred: u32,
    /// Lexicographic rank of the id sequence within this beam.
    rank: u32,
}

/// Buffers reused across frames and extractions.
pub(crate) struct BeamScratch<T> {
    query_seen: Stamps,
    touched: Stamps,
    best_score: Vec<T>,
    best_pred: Vec<u32>,
    frontier: Vec<usize>,
}

impl<T: Scalar> BeamScratch<T> {
    pub(crate) fn new(max_frame_len: usize) -> Self {
        Self {
            query_seen: Stamps::with_len(max_frame_len),
            touched: Stamps::with_len(max_frame_len),
            best_score: vec![T::zero(); max_frame_len],
            best_pred: vec![0; max_frame_len],
            frontier: Vec::new(),
        }
    }
}

fn assign_ranks<T: Scalar>(ws: &WorkingSet<'_, T>, t: usize, beam: &mut [Partial<T>], prev: Option<&[Partial<T>]>) {
    let mut order: Vec<usize> = (0..beam.len()).collect();
    let pred_rank = |p: &Partial<T>| prev.map_or(0, |prev| prev[p.pred as usize].rank);
    order.sort_unstable_by_key(|&b| (pred_rank(&beam[b]), ws.id(t, beam[b].idx)));
    for (r, b) in order.into_iter().enumerate() {
        beam[b].rank = r as u32;
    }
}

/// Runs one pruned search. Returns `None` when a frame is empty or no beam
/// entry has a legal successor.
pub(crate) fn beam_search<T: Scalar>(ws: &mut WorkingSet<'_, T>, k: usize, scratch: &mut BeamScratch<T>) -> Option<Path> {
    if ws.any_frame_empty() || k == 0 {
        return None;
    }
    let first = ws.top_by_objectness(0, k);
    let ws = &*ws;
    let mut first: Vec<Partial<T>> = first
        .into_iter()
        .map(|idx| Partial { idx, score: ws.objectness(0, idx), pred: u32::MAX, rank: 0 })
        .collect();
    assign_ranks(ws, 0, &mut first, None);
    let mut beams = vec![first];

    for t in 1..ws.num_frames() {
        let prev = beams.last().expect("beam");
        let BeamScratch { query_seen, touched, best_score, best_pred, frontier } = scratch;
        touched.next();
        frontier.clear();
        let grid = ws.grid(t);
        for (pos, entry) in prev.iter().enumerate() {
            grid.candidates(&ws.boxes[t - 1][entry.idx], query_seen, |i| {
                if !ws.is_alive(t, i) || !ws.legal(t - 1, entry.idx, t, i) {
                    return;
                }
                if touched.mark(i) {
                    frontier.push(i);
                    best_score[i] = entry.score;
                    best_pred[i] = pos as u32;
                } else {
                    let incumbent = &prev[best_pred[i] as usize];
                    if better(entry.score, entry.rank, incumbent.score, incumbent.rank) {
                        best_score[i] = entry.score;
                        best_pred[i] = pos as u32;
                    }
                }
            });
        }
        if frontier.is_empty() {
            return None;
        }
        let mut next: Vec<Partial<T>> = frontier
            .iter()
            .map(|&i| Partial { idx: i, score: best_score[i] + ws.objectness(t, i), pred: best_pred[i], rank: 0 })
            .collect();
        let order = |a: &Partial<T>, b: &Partial<T>| {
            desc(a.score, b.score)
                .then(prev[a.pred as usize].rank.cmp(&prev[b.pred as usize].rank))
                .then(ws.id(t, a.idx).cmp(&ws.id(t, b.idx)))
        };
        if next.len() > k {
            next.select_nth_unstable_by(k - 1, order);
            next.truncate(k);
        }
        assign_ranks(ws, t, &mut next, Some(prev));
        beams.push(next);
    }

    let last = beams.last()?;
    let mut pos = (0..last.len()).reduce(|b, p| {
        if better(last[p].score, last[p].rank, last[b].score, last[b].rank) { p } else { b }
    })?;
    let mut path = vec![0; beams.len()];
    for t in (0..beams.len()).rev() {
        path[t] = beams[t][pos].idx;
        pos = beams[t][pos].pred as usize;
    }
    Some(path)
}
