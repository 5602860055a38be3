//! Detection metrics: average precision, frame-mAP, video-mAP and the
//! coselection rate between two tube sets.
//!
//! AP uses the continuous (all-points) precision envelope. Classes without
//! ground truth are left out of the mean. The overlap of two tubes is the mean
//! of their per-frame IoUs over the shared span.

mod ap;
mod coselect;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Scalar;

pub use ap::{average_precision, frame_map, video_map, FrameDetection, FrameGroundTruth, Keyed, Scored, TubeDetection, TubeGroundTruth};
pub use coselect::{coselection_rate, coselection_sweep, mean_coselection_rate, ScoredTube, SweepCell};

/// Default IoU threshold for frame-mAP.
pub const FRAME_MAP_SIGMA: f64 = 0.5;
/// Default spatio-temporal IoU threshold for video-mAP.
pub const VIDEO_MAP_SIGMA: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("no class has ground truth; mAP is undefined")]
    NoGroundTruth,
    #[error("detection {index} has non-finite confidence")]
    NonFiniteConfidence { index: usize },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("tube lengths differ within video `{video}`: {left} vs {right} frames")]
    LengthMismatch { video: String, left: usize, right: usize },
    #[error("requested top {n} tubes but only {available} are available")]
    NotEnoughTubes { n: usize, available: usize },
    #[error("n must be at least 1")]
    ZeroN,
    #[error("no videos to average over")]
    NoVideos,
}

/// A mean-AP result with its per-class breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct MapReport<T> {
    pub metric: String,
    pub sigma: T,
    pub value: T,
    pub per_class: BTreeMap<u32, T>,
}

/// Tube as read from a prediction or ground-truth file. Link output carries a
/// score but no label; ground-truth files carry a label but no score (treated
/// as confidence 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct LabeledTube<T> {
    #[serde(default)]
    pub label: Option<u32>,
    #[serde(default)]
    pub score: Option<T>,
    pub boxes: Vec<BBox<T>>,
}

/// All labelled tubes of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct VideoTubes<T> {
    pub video_id: String,
    pub tubes: Vec<LabeledTube<T>>,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("video `{video}`, tube {index}: missing class label")]
pub struct MissingLabel {
    pub video: String,
    pub index: usize,
}

impl<T: Scalar> VideoTubes<T> {
    /// Whole-tube detections for video-mAP.
    pub fn tube_detections(&self) -> Result<Vec<TubeDetection<T>>, MissingLabel> {
        self.labeled()
            .map(|r| {
                r.map(|(label, score, boxes)| Scored {
                    key: self.video_id.clone(),
                    class: label,
                    confidence: score,
                    region: boxes.to_vec(),
                })
            })
            .collect()
    }

    /// Every box of every tube as a frame-level detection keyed by
    /// `(video_id, frame)`, carrying its tube's confidence.
    pub fn frame_detections(&self) -> Result<Vec<FrameDetection<T>>, MissingLabel> {
        let mut out = Vec::new();
        for r in self.labeled() {
            let (label, score, boxes) = r?;
            out.extend(boxes.iter().enumerate().map(|(t, b)| Scored {
                key: (self.video_id.clone(), t),
                class: label,
                confidence: score,
                region: *b,
            }));
        }
        Ok(out)
    }

    fn labeled(&self) -> impl Iterator<Item = Result<(u32, T, &[BBox<T>]), MissingLabel>> + '_ {
        self.tubes.iter().enumerate().map(move |(index, t)| {
            let label = t.label.ok_or_else(|| MissingLabel { video: self.video_id.clone(), index })?;
            Ok((label, t.score.unwrap_or_else(T::one), t.boxes.as_slice()))
        })
    }
}

/// Mean over the classes present in `per_class`.
fn mean_of<T: Scalar>(per_class: &BTreeMap<u32, T>) -> Result<T, EvalError> {
    if per_class.is_empty() {
        return Err(EvalError::NoGroundTruth);
    }
    Ok(per_class.values().fold(T::zero(), |a, &v| a + v) / T::from_count(per_class.len()))
}

#[cfg(test)]
mod tests;
