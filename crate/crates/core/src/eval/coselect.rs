use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::{mean_iou, BBox};
use crate::linker::{Tube, TubeRecord};
use crate::scalar::{desc, Scalar};

/// Anything with a score and one box per frame.
pub trait ScoredTube<T> {
    fn tube_score(&self) -> T;
    fn tube_boxes(&self) -> &[BBox<T>];
}

impl<T: Scalar> ScoredTube<T> for Tube<T> {
    fn tube_score(&self) -> T {
        self.score()
    }

    fn tube_boxes(&self) -> &[BBox<T>] {
        self.boxes()
    }
}

impl<T: Scalar> ScoredTube<T> for TubeRecord<T> {
    fn tube_score(&self) -> T {
        self.score
    }

    fn tube_boxes(&self) -> &[BBox<T>] {
        &self.boxes
    }
}

fn matches<T: Scalar>(a: &[BBox<T>], b: &[BBox<T>], theta: T) -> bool {
    if theta >= T::one() {
        // no overlap exceeds 1; the top row demands identical boxes instead
        a == b
    } else {
        mean_iou(a, b).is_some_and(|v| v > theta)
    }
}

/// Fraction of the `n` best-scored tubes of `set_a` (ties: input order) whose
/// mean per-frame IoU with some tube of `set_b` exceeds `theta`. At
/// `theta >= 1` a match requires identical boxes.
pub fn coselection_rate<T, A, B>(set_a: &[A], set_b: &[B], theta: T, n: usize) -> Result<T, EvalError>
where
    T: Scalar,
    A: ScoredTube<T>,
    B: ScoredTube<T>,
{
    if !(theta >= T::zero() && theta <= T::one()) {
        return Err(EvalError::InvalidThreshold(theta.as_f64()));
    }
    if n == 0 {
        return Err(EvalError::ZeroN);
    }
    if set_a.len() < n {
        return Err(EvalError::NotEnoughTubes { n, available: set_a.len() });
    }
    let mut order: Vec<usize> = (0..set_a.len()).collect();
    order.sort_by(|&i, &j| desc(set_a[i].tube_score(), set_a[j].tube_score()));
    let tp = order[..n]
        .iter()
        .filter(|&&i| set_b.iter().any(|b| matches(set_a[i].tube_boxes(), b.tube_boxes(), theta)))
        .count();
    Ok(T::from_count(tp) / T::from_count(n))
}

/// Arithmetic mean of per-video coselection rates.
pub fn mean_coselection_rate<T, A, B>(videos: &[(Vec<A>, Vec<B>)], theta: T, n: usize) -> Result<T, EvalError>
where
    T: Scalar,
    A: ScoredTube<T>,
    B: ScoredTube<T>,
{
    if videos.is_empty() {
        return Err(EvalError::NoVideos);
    }
    let mut total = T::zero();
    for (a, b) in videos {
        total = total + coselection_rate(a, b, theta, n)?;
    }
    Ok(total / T::from_count(videos.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell<T> {
    pub theta: T,
    pub n: usize,
    pub gamma: T,
}

/// Dataset-mean coselection rate for every `(theta, n)` pair, theta-major.
pub fn coselection_sweep<T, A, B>(
    videos: &[(Vec<A>, Vec<B>)],
    thetas: &[T],
    ns: &[usize],
) -> Result<Vec<SweepCell<T>>, EvalError>
where
    T: Scalar,
    A: ScoredTube<T>,
    B: ScoredTube<T>,
{
    let mut cells = Vec::with_capacity(thetas.len() * ns.len());
    for &theta in thetas {
        for &n in ns {
            cells.push(SweepCell { theta, n, gamma: mean_coselection_rate(videos, theta, n)? });
        }
    }
    Ok(cells)
}
