//! Per-frame region proposals, ground-truth tubes, their JSON files, and a
//! seeded synthetic generator standing in for a trained proposal network.

mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};
use crate::scalar::Scalar;

pub use synthetic::{generate, generate_dataset, Clip, SyntheticScenario};

#[derive(Debug, Error)]
pub enum ProposalError {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON")]
    Json(#[from] serde_json::Error),
    #[error("video `{0}` has no frames")]
    NoFrames(String),
    #[error("declared T={declared} but {actual} frames present")]
    FrameCount { declared: usize, actual: usize },
    #[error("non-contiguous frames: expected t={expected}, found t={found}")]
    NonContiguous { expected: usize, found: usize },
    #[error("duplicate proposal id {id} in frame {frame}")]
    DuplicateId { frame: usize, id: u64 },
    #[error("frame {frame}, proposal {id}: objectness {score} is not a finite value in [0, 1]")]
    InvalidScore { frame: usize, id: u64, score: f64 },
    #[error("frame {frame}, proposal {id}: invalid box")]
    InvalidBox {
        frame: usize,
        id: u64,
        #[source]
        source: GeometryError,
    },
    #[error("ground-truth tube {index}: label {label} is reserved for background")]
    BackgroundLabel { index: usize, label: u32 },
    #[error("ground-truth tube {index} has {actual} boxes, expected {expected}")]
    TubeLength {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// One candidate actor box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionProposal<T> {
    /// Unique within its frame.
    pub id: u64,
    pub bbox: BBox<T>,
    /// Objectness in `[0, 1]`.
    pub objectness: T,
}

impl<T: Scalar> RegionProposal<T> {
    pub fn new(id: u64, bbox: BBox<T>, objectness: T) -> Self {
        Self { id, bbox, objectness }
    }
}

/// Proposals for every frame `0..T` of one clip. Frames may be empty; the
/// linkers reject that case themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoProposals<T> {
    video_id: String,
    frames: Vec<Vec<RegionProposal<T>>>,
}

impl<T: Scalar> VideoProposals<T> {
    pub fn new(
        video_id: impl Into<String>,
        frames: Vec<Vec<RegionProposal<T>>>,
    ) -> Result<Self, ProposalError> {
        let video_id = video_id.into();
        if frames.is_empty() {
            return Err(ProposalError::NoFrames(video_id));
        }
        for (t, frame) in frames.iter().enumerate() {
            let mut seen = HashSet::with_capacity(frame.len());
            for p in frame {
                if !seen.insert(p.id) {
                    return Err(ProposalError::DuplicateId { frame: t, id: p.id });
                }
                let s = p.objectness;
                if !(s.is_finite() && s >= T::zero() && s <= T::one()) {
                    return Err(ProposalError::InvalidScore {
                        frame: t,
                        id: p.id,
                        score: s.as_f64(),
                    });
                }
            }
        }
        Ok(Self { video_id, frames })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<RegionProposal<T>>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[RegionProposal<T>] {
        &self.frames[t]
    }

    /// Largest per-frame proposal count.
    pub fn max_frame_len(&self) -> usize {
        self.frames.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_proposals(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    /// Deletes proposal `ids[t]` from each frame `t`; unknown ids are ignored.
    pub fn remove_path(&mut self, ids: &[u64]) {
        for (frame, &id) in self.frames.iter_mut().zip(ids) {
            frame.retain(|p| p.id != id);
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self, ProposalError> {
        let raw: RawVideo<T> = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(&RawVideo::from(self)).expect("proposal serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProposalError> {
        Self::from_json_str(&read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProposalError> {
        write(path.as_ref(), &self.to_json_string())
    }
}

/// Annotated actor track; `label` is a class id in `1..=C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GroundTruthTube<T> {
    pub label: u32,
    pub boxes: Vec<BBox<T>>,
}

/// Ground truth for one video, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct GroundTruth<T> {
    pub video_id: String,
    pub tubes: Vec<GroundTruthTube<T>>,
}

impl<T: Scalar> GroundTruth<T> {
    /// Checks labels and that every tube spans `frames` boxes.
    pub fn validate(&self, frames: usize) -> Result<(), ProposalError> {
        for (index, tube) in self.tubes.iter().enumerate() {
            if tube.label == 0 {
                return Err(ProposalError::BackgroundLabel { index, label: 0 });
            }
            if tube.boxes.len() != frames {
                return Err(ProposalError::TubeLength {
                    index,
                    expected: frames,
                    actual: tube.boxes.len(),
                });
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self, ProposalError> {
        let gt: Self = serde_json::from_str(s)?;
        for (index, tube) in gt.tubes.iter().enumerate() {
            if tube.label == 0 {
                return Err(ProposalError::BackgroundLabel { index, label: 0 });
            }
        }
        Ok(gt)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("ground truth serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ProposalError> {
        Self::from_json_str(&read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ProposalError> {
        write(path.as_ref(), &self.to_json_string())
    }
}

fn read(path: &Path) -> Result<String, ProposalError> {
    fs::read_to_string(path).map_err(|source| ProposalError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<(), ProposalError> {
    fs::write(path, contents).map_err(|source| ProposalError::Io {
        path: path.to_owned(),
        source,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RawVideo<T> {
    video_id: String,
    #[serde(rename = "T")]
    num_frames: usize,
    frames: Vec<RawFrame<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RawFrame<T> {
    t: usize,
    proposals: Vec<RawProposal<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
struct RawProposal<T> {
    id: u64,
    #[serde(rename = "box")]
    bbox: [T; 4],
    score: T,
}

impl<T: Scalar> TryFrom<RawVideo<T>> for VideoProposals<T> {
    type Error = ProposalError;

    fn try_from(raw: RawVideo<T>) -> Result<Self, Self::Error> {
        if raw.frames.len() != raw.num_frames {
            return Err(ProposalError::FrameCount {
                declared: raw.num_frames,
                actual: raw.frames.len(),
            });
        }
        let mut frames = Vec::with_capacity(raw.frames.len());
        for (expected, frame) in raw.frames.into_iter().enumerate() {
            if frame.t != expected {
                return Err(ProposalError::NonContiguous {
                    expected,
                    found: frame.t,
                });
            }
            let proposals = frame
                .proposals
                .into_iter()
                .map(|p| {
                    let bbox = BBox::try_from(p.bbox).map_err(|source| ProposalError::InvalidBox {
                        frame: expected,
                        id: p.id,
                        source,
                    })?;
                    Ok(RegionProposal::new(p.id, bbox, p.score))
                })
                .collect::<Result<Vec<_>, ProposalError>>()?;
            frames.push(proposals);
        }
        VideoProposals::new(raw.video_id, frames)
    }
}

impl<T: Scalar> From<&VideoProposals<T>> for RawVideo<T> {
    fn from(v: &VideoProposals<T>) -> Self {
        RawVideo {
            video_id: v.video_id.clone(),
            num_frames: v.frames.len(),
            frames: v
                .frames
                .iter()
                .enumerate()
                .map(|(t, frame)| RawFrame {
                    t,
                    proposals: frame
                        .iter()
                        .map(|p| RawProposal {
                            id: p.id,
                            bbox: p.bbox.into(),
                            score: p.objectness,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_parses() {
        let json = r#"{"video_id":"v","T":1,"frames":[{"t":0,"proposals":[{"id":7,"box":[5,5,10,10],"score":0.5}]}]}"#;
        let v = VideoProposals::<f64>::from_json_str(json).unwrap();
        assert_eq!(v.num_frames(), 1);
        assert_eq!(v.frame(0)[0].id, 7);
        assert_eq!(v.frame(0)[0].objectness, 0.5);
    }

    #[test]
    fn gap_is_non_contiguous() {
        let json = r#"{"video_id":"v","T":2,"frames":[{"t":0,"proposals":[]},{"t":2,"proposals":[]}]}"#;
        let err = VideoProposals::<f64>::from_json_str(json).unwrap_err();
        assert!(matches!(err, ProposalError::NonContiguous { expected: 1, found: 2 }));
        assert!(err.to_string().contains("non-contiguous"));
    }

    #[test]
    fn duplicate_ids_named() {
        let json = r#"{"video_id":"v","T":1,"frames":[{"t":0,"proposals":[
            {"id":3,"box":[5,5,10,10],"score":0.5},{"id":3,"box":[6,5,10,10],"score":0.4}]}]}"#;
        let err = VideoProposals::<f64>::from_json_str(json).unwrap_err();
        assert_eq!(err.to_string(), "duplicate proposal id 3 in frame 0");
    }

    #[test]
    fn bad_box_and_score_named() {
        let json = r#"{"video_id":"v","T":1,"frames":[{"t":0,"proposals":[{"id":4,"box":[5,5,0,10],"score":0.5}]}]}"#;
        let err = VideoProposals::<f64>::from_json_str(json).unwrap_err();
        assert!(err.to_string().starts_with("frame 0, proposal 4"));
        let json = r#"{"video_id":"v","T":1,"frames":[{"t":0,"proposals":[{"id":4,"box":[5,5,1,10],"score":1.5}]}]}"#;
        assert!(matches!(
            VideoProposals::<f64>::from_json_str(json),
            Err(ProposalError::InvalidScore { frame: 0, id: 4, .. })
        ));
        assert!(matches!(
            VideoProposals::<f64>::from_json_str("{\"video_id\": 3"),
            Err(ProposalError::Json(_))
        ));
        let json = r#"{"video_id":"v","T":3,"frames":[{"t":0,"proposals":[]}]}"#;
        assert!(matches!(
            VideoProposals::<f64>::from_json_str(json),
            Err(ProposalError::FrameCount { declared: 3, actual: 1 })
        ));
    }

    #[test]
    fn ground_truth_rejects_background_label() {
        let json = r#"{"video_id":"v","tubes":[{"label":0,"boxes":[[1,1,2,2]]}]}"#;
        assert!(GroundTruth::<f64>::from_json_str(json).is_err());
        let json = r#"{"video_id":"v","tubes":[{"label":2,"boxes":[[1,1,2,2]]}]}"#;
        let gt = GroundTruth::<f64>::from_json_str(json).unwrap();
        assert!(gt.validate(1).is_ok());
        assert!(matches!(gt.validate(2), Err(ProposalError::TubeLength { .. })));
    }
}
