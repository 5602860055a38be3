use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::{mean_of, EvalError, MapReport};
use crate::geometry::{iou, mean_iou, BBox};
use crate::scalar::{desc, Scalar};

/// A scored detection of class `class` located by `region` within sample `key`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored<K, R, T> {
    pub key: K,
    pub class: u32,
    pub confidence: T,
    pub region: R,
}

/// A ground-truth region of class `class` within sample `key`.
#[derive(Debug, Clone, PartialEq)]
pub struct Keyed<K, R> {
    pub key: K,
    pub class: u32,
    pub region: R,
}

pub type FrameDetection<T> = Scored<(String, usize), BBox<T>, T>;
pub type FrameGroundTruth<T> = Keyed<(String, usize), BBox<T>>;
pub type TubeDetection<T> = Scored<String, Vec<BBox<T>>, T>;
pub type TubeGroundTruth<T> = Keyed<String, Vec<BBox<T>>>;

/// Average precision of one class's detections against that class's ground truth.
///
/// Detections are ranked by confidence (ties: key, then input order) and each
/// one claims the unmatched ground truth of the same key with the largest
/// overlap strictly above `sigma`. Returns `None` when `gts` is empty.
/// The `class` fields are ignored; callers filter beforehand.
pub fn average_precision<K, R, T, F>(
    dets: &[Scored<K, R, T>],
    gts: &[Keyed<K, R>],
    sigma: T,
    overlap: F,
) -> Result<Option<T>, EvalError>
where
    K: Ord,
    T: Scalar,
    F: Fn(&R, &R) -> T,
{
    if !(sigma >= T::zero() && sigma <= T::one()) {
        return Err(EvalError::InvalidThreshold(sigma.as_f64()));
    }
    if let Some(index) = dets.iter().position(|d| !d.confidence.is_finite()) {
        return Err(EvalError::NonFiniteConfidence { index });
    }
    if gts.is_empty() {
        return Ok(None);
    }

    let mut by_key: BTreeMap<&K, Vec<usize>> = BTreeMap::new();
    for (g, gt) in gts.iter().enumerate() {
        by_key.entry(&gt.key).or_default().push(g);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| desc(dets[a].confidence, dets[b].confidence).then_with(|| dets[a].key.cmp(&dets[b].key)));

    let mut matched = vec![false; gts.len()];
    let mut hits = Vec::with_capacity(order.len());
    for &d in &order {
        let det = &dets[d];
        let mut best: Option<(usize, T)> = None;
        for &g in by_key.get(&det.key).map(Vec::as_slice).unwrap_or(&[]) {
            if matched[g] {
                continue;
            }
            let ov = overlap(&det.region, &gts[g].region);
            if ov > sigma && best.is_none_or(|(_, b)| ov > b) {
                best = Some((g, ov));
            }
        }
        if let Some((g, _)) = best {
            matched[g] = true;
        }
        hits.push(best.is_some());
    }

    // precision after each rank, then its running maximum from the right
    let mut tp = 0usize;
    let mut precision: Vec<T> = hits
        .iter()
        .enumerate()
        .map(|(k, &hit)| {
            tp += hit as usize;
            T::from_count(tp) / T::from_count(k + 1)
        })
        .collect();
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let total = hits
        .iter()
        .zip(&precision)
        .filter(|(hit, _)| **hit)
        .fold(T::zero(), |acc, (_, &p)| acc + p);
    Ok(Some(total / T::from_count(gts.len())))
}

fn per_class_ap<K, R, T, F>(
    dets: &[Scored<K, R, T>],
    gts: &[Keyed<K, R>],
    sigma: T,
    overlap: F,
) -> Result<BTreeMap<u32, T>, EvalError>
where
    K: Ord + Clone + Send + Sync,
    R: Clone + Send + Sync,
    T: Scalar,
    F: Fn(&R, &R) -> T + Sync,
{
    let classes: BTreeSet<u32> = gts.iter().map(|g| g.class).collect();
    let results: Vec<(u32, Option<T>)> = classes
        .into_par_iter()
        .map(|c| {
            let d: Vec<_> = dets.iter().filter(|d| d.class == c).cloned().collect();
            let g: Vec<_> = gts.iter().filter(|g| g.class == c).cloned().collect();
            average_precision(&d, &g, sigma, &overlap).map(|ap| (c, ap))
        })
        .collect::<Result<_, _>>()?;
    Ok(results.into_iter().filter_map(|(c, ap)| ap.map(|v| (c, v))).collect())
}

/// Frame-level mAP: per-class AP pooled over all frames, averaged over the
/// classes that have ground truth.
pub fn frame_map<T: Scalar>(
    dets: &[FrameDetection<T>],
    gts: &[FrameGroundTruth<T>],
    sigma: T,
) -> Result<MapReport<T>, EvalError> {
    let per_class = per_class_ap(dets, gts, sigma, |a, b| iou(a, b))?;
    Ok(MapReport { metric: "frame-map".into(), sigma, value: mean_of(&per_class)?, per_class })
}

/// Video-level mAP with mean per-frame IoU as the tube overlap.
pub fn video_map<T: Scalar>(
    dets: &[TubeDetection<T>],
    gts: &[TubeGroundTruth<T>],
    sigma: T,
) -> Result<MapReport<T>, EvalError> {
    let mut lengths: BTreeMap<&String, usize> = BTreeMap::new();
    for (key, len) in gts.iter().map(|g| (&g.key, g.region.len())).chain(dets.iter().map(|d| (&d.key, d.region.len()))) {
        let expected = *lengths.entry(key).or_insert(len);
        if expected != len {
            return Err(EvalError::LengthMismatch { video: key.clone(), left: expected, right: len });
        }
    }
    let per_class = per_class_ap(dets, gts, sigma, |a, b| mean_iou(a, b).unwrap_or_else(T::zero))?;
    Ok(MapReport { metric: "video-map".into(), sigma, value: mean_of(&per_class)?, per_class })
}
