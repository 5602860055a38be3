//! Mutable view of a clip used across greedy extractions: alive flags, a
//! per-frame uniform grid for overlap queries, and reusable scratch buffers.

use crate::geometry::{iou, BBox};
use crate::proposals::RegionProposal;
use crate::scalar::{desc, Scalar};

/// Uniform grid over one frame. Every box is registered in each cell its extent
/// touches, so two boxes with positive-area intersection always share a cell.
#[derive(Debug, Clone)]
pub(crate) struct Grid {
    x0: f64,
    y0: f64,
    cell: f64,
    nx: usize,
    ny: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    pub(crate) fn build<T: Scalar>(boxes: &[BBox<T>]) -> Self {
        if boxes.is_empty() {
            return Self { x0: 0.0, y0: 0.0, cell: 1.0, nx: 1, ny: 1, starts: vec![0, 0], items: Vec::new() };
        }
        let corners: Vec<[f64; 4]> = boxes.iter().map(|b| b.to_corners().map(Scalar::as_f64)).collect();
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        let mut side = 0.0;
        for c in &corners {
            x0 = x0.min(c[0]);
            y0 = y0.min(c[1]);
            x1 = x1.max(c[2]);
            y1 = y1.max(c[3]);
            side += (c[2] - c[0]).max(c[3] - c[1]);
        }
        let n = boxes.len() as f64;
        // cell near the mean box side, coarsened so the grid has at most ~4 cells per box
        let cell = (side / n).max(((x1 - x0) * (y1 - y0) / (4.0 * n)).sqrt()).max(f64::MIN_POSITIVE);
        let nx = (((x1 - x0) / cell).floor() as usize + 1).max(1);
        let ny = (((y1 - y0) / cell).floor() as usize + 1).max(1);
        let mut grid = Self { x0, y0, cell, nx, ny, starts: vec![0; nx * ny + 1], items: Vec::new() };

        for c in &corners {
            let (ix0, ix1, iy0, iy1) = grid.span(c);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    grid.starts[iy * nx + ix + 1] += 1;
                }
            }
        }
        for k in 1..grid.starts.len() {
            grid.starts[k] += grid.starts[k - 1];
        }
        let mut fill = grid.starts.clone();
        grid.items = vec![0; *grid.starts.last().unwrap() as usize];
        for (i, c) in corners.iter().enumerate() {
            let (ix0, ix1, iy0, iy1) = grid.span(c);
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    let slot = &mut fill[iy * nx + ix];
                    grid.items[*slot as usize] = i as u32;
                    *slot += 1;
                }
            }
        }
        grid
    }

    fn axis(&self, v: f64, origin: f64, n: usize) -> usize {
        let k = ((v - origin) / self.cell).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    }

    fn span(&self, c: &[f64; 4]) -> (usize, usize, usize, usize) {
        (
            self.axis(c[0], self.x0, self.nx),
            self.axis(c[2], self.x0, self.nx),
            self.axis(c[1], self.y0, self.ny),
            self.axis(c[3], self.y0, self.ny),
        )
    }

    /// Calls `f` once for every indexed box that may intersect `query`.
    pub(crate) fn candidates<T: Scalar>(&self, query: &BBox<T>, seen: &mut Stamps, mut f: impl FnMut(usize)) {
        let (ix0, ix1, iy0, iy1) = self.span(&query.to_corners().map(Scalar::as_f64));
        seen.next();
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                let cell = iy * self.nx + ix;
                for &j in &self.items[self.starts[cell] as usize..self.starts[cell + 1] as usize] {
                    if seen.mark(j as usize) {
                        f(j as usize);
                    }
                }
            }
        }
    }
}

/// Generation-stamped visited set; `next` clears it in O(1).
#[derive(Debug, Default, Clone)]
pub(crate) struct Stamps {
    marks: Vec<u32>,
    current: u32,
}

impl Stamps {
    pub(crate) fn with_len(n: usize) -> Self {
        Self { marks: vec![0; n], current: 0 }
    }

    pub(crate) fn next(&mut self) {
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.marks.iter_mut().for_each(|m| *m = 0);
            self.current = 1;
        }
    }

    /// Returns `true` the first time `i` is marked in the current generation.
    pub(crate) fn mark(&mut self, i: usize) -> bool {
        if self.marks[i] == self.current {
            false
        } else {
            self.marks[i] = self.current;
            true
        }
    }
}

/// Working copy of a clip. Deletion only flips alive flags; proposal storage and
/// the grids stay untouched for the lifetime of an extraction run.
pub(crate) struct WorkingSet<'a, T> {
    pub(crate) frames: &'a [Vec<RegionProposal<T>>],
    pub(crate) boxes: Vec<Vec<BBox<T>>>,
    alive: Vec<Vec<bool>>,
    alive_count: Vec<usize>,
    /// Per frame: proposal positions by descending objectness, ascending id.
    by_objectness: Vec<Vec<u32>>,
    /// Per frame: first position in `by_objectness` that may still be alive.
    objectness_cursor: Vec<usize>,
    /// Per frame: proposal positions by ascending id.
    by_id: Vec<Vec<u32>>,
    grids: Option<Vec<Grid>>,
    pub(crate) tau: T,
}

impl<'a, T: Scalar> WorkingSet<'a, T> {
    /// `indexed` controls whether overlap grids are built (the exhaustive
    /// Viterbi baseline never queries them).
    pub(crate) fn new(frames: &'a [Vec<RegionProposal<T>>], tau: T, indexed: bool) -> Self {
        let boxes: Vec<Vec<BBox<T>>> = frames.iter().map(|f| f.iter().map(|p| p.bbox).collect()).collect();
        let by_objectness = frames
            .iter()
            .map(|f| {
                let mut order: Vec<u32> = (0..f.len() as u32).collect();
                order.sort_by(|&a, &b| {
                    let (pa, pb) = (&f[a as usize], &f[b as usize]);
                    desc(pa.objectness, pb.objectness).then(pa.id.cmp(&pb.id))
                });
                order
            })
            .collect();
        let by_id = frames
            .iter()
            .map(|f| {
                let mut order: Vec<u32> = (0..f.len() as u32).collect();
                order.sort_by_key(|&a| f[a as usize].id);
                order
            })
            .collect();
        let grids = indexed.then(|| boxes.iter().map(|b| Grid::build(b)).collect());
        Self {
            frames,
            alive: frames.iter().map(|f| vec![true; f.len()]).collect(),
            alive_count: frames.iter().map(Vec::len).collect(),
            by_objectness,
            objectness_cursor: vec![0; frames.len()],
            by_id,
            grids,
            boxes,
            tau,
        }
    }

    pub(crate) fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub(crate) fn frame_len(&self, t: usize) -> usize {
        self.frames[t].len()
    }

    pub(crate) fn max_frame_len(&self) -> usize {
        self.frames.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub(crate) fn is_alive(&self, t: usize, i: usize) -> bool {
        self.alive[t][i]
    }

    pub(crate) fn any_frame_empty(&self) -> bool {
        self.alive_count.contains(&0)
    }

    pub(crate) fn id(&self, t: usize, i: usize) -> u64 {
        self.frames[t][i].id
    }

    pub(crate) fn objectness(&self, t: usize, i: usize) -> T {
        self.frames[t][i].objectness
    }

    pub(crate) fn legal(&self, t0: usize, i: usize, t1: usize, j: usize) -> bool {
        iou(&self.boxes[t0][i], &self.boxes[t1][j]) > self.tau
    }

    pub(crate) fn grid(&self, t: usize) -> &Grid {
        &self.grids.as_ref().expect("working set built without overlap index")[t]
    }

    /// Alive positions of frame `t` in ascending id order.
    pub(crate) fn alive_by_id(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        self.by_id[t].iter().map(|&i| i as usize).filter(move |&i| self.alive[t][i])
    }

    /// Up to `k` alive positions of frame `t`, highest objectness first.
    pub(crate) fn top_by_objectness(&mut self, t: usize, k: usize) -> Vec<usize> {
        let order = &self.by_objectness[t];
        let mut cursor = self.objectness_cursor[t];
        while cursor < order.len() && !self.alive[t][order[cursor] as usize] {
            cursor += 1;
        }
        self.objectness_cursor[t] = cursor;
        order[cursor..]
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| self.alive[t][i])
            .take(k)
            .collect()
    }

    /// Removes the proposals of a path (one position per frame).
    pub(crate) fn remove(&mut self, path: &[usize]) {
        for (t, &i) in path.iter().enumerate() {
            if std::mem::replace(&mut self.alive[t][i], false) {
                self.alive_count[t] -= 1;
            }
        }
    }
}

/// Mean number of proposals in frame `t + 1` whose IoU with a proposal of frame
/// `t` exceeds `tau`, averaged over all proposals of frames `0..T-1`.
pub(crate) fn mean_legal_successors<T: Scalar>(frames: &[Vec<RegionProposal<T>>], tau: T) -> f64 {
    if frames.len() < 2 {
        return 0.0;
    }
    let ws = WorkingSet::new(frames, tau, true);
    let mut seen = Stamps::with_len(ws.max_frame_len());
    let (mut links, mut sources) = (0usize, 0usize);
    for t in 0..frames.len() - 1 {
        for i in 0..ws.frame_len(t) {
            sources += 1;
            ws.grid(t + 1).candidates(&ws.boxes[t][i], &mut seen, |j| {
                if ws.legal(t, i, t + 1, j) {
                    links += 1;
                }
            });
        }
    }
    if sources == 0 {
        0.0
    } else {
        links as f64 / sources as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::intersection;
    use proptest::prelude::*;

    fn arb_boxes() -> impl Strategy<Value = Vec<BBox<f64>>> {
        prop::collection::vec(
            (0.0..300.0f64, 0.0..200.0f64, 0.5..80.0f64, 0.5..80.0f64)
                .prop_map(|(x, y, w, h)| BBox::new(x, y, w, h).unwrap()),
            0..40,
        )
    }

    proptest! {
        #[test]
        fn grid_has_no_false_negatives(indexed in arb_boxes(), queries in arb_boxes()) {
            let grid = Grid::build(&indexed);
            let mut seen = Stamps::with_len(indexed.len());
            for q in &queries {
                let mut found = Vec::new();
                grid.candidates(q, &mut seen, |j| found.push(j));
                let mut dedup = found.clone();
                dedup.sort();
                dedup.dedup();
                prop_assert_eq!(dedup.len(), found.len());
                for (j, b) in indexed.iter().enumerate() {
                    if intersection(q, b) > 0.0 {
                        prop_assert!(found.contains(&j));
                    }
                }
            }
        }
    }

    #[test]
    fn stamps_reset() {
        let mut s = Stamps::with_len(3);
        s.next();
        assert!(s.mark(1));
        assert!(!s.mark(1));
        s.next();
        assert!(s.mark(1));
    }
}
