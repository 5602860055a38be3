//! Deformable tube linking.
//!
//! A tube picks one proposal per frame. Its action score is the summed
//! objectness plus a bonus of `T` when every consecutive pair of boxes overlaps
//! with IoU strictly above `tau` (the tube is then *legal*). Three linkers are
//! provided:
//!
//! * [`Variant::Exact`]: Viterbi over every link, legal or not, `O(T N^2)`.
//! * [`Variant::Ht`]: hard thresholding; only legal links are followed, found
//!   through a spatial index. Returns the optimal legal tube.
//! * [`Variant::HtTs`]: hard thresholding plus top-K selection; at every frame
//!   only the `K` partial tubes with the highest cumulative objectness survive.
//!   Fast, legal, but not guaranteed optimal.
//!
//! All of them break score ties by the lexicographically smallest sequence of
//! proposal ids. [`extract_tubes`] runs a linker greedily, deleting the
//! proposals of each extracted tube before searching for the next one.

mod beam;
mod index;
mod oracle;
mod viterbi;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{iou, BBox};
use crate::proposals::{RegionProposal, VideoProposals};
use crate::scalar::Scalar;

use beam::{beam_search, BeamScratch};
use index::WorkingSet;
use viterbi::Path as IndexPath;

pub use oracle::{oracle_exhaustive, ORACLE_LIMIT};

/// Default IoU legality threshold.
pub const DEFAULT_TAU: f64 = 0.3;
/// Default beam width.
pub const DEFAULT_K: usize = 10;
/// Default number of tubes per clip.
pub const DEFAULT_M: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("frame {frame} has no proposals; no tube can span the clip")]
    EmptyFrame { frame: usize },
    #[error("invalid linker configuration: {0}")]
    InvalidConfig(String),
    #[error("tube fields disagree: {0}")]
    Shape(String),
    #[error("instance has {combinations} candidate tubes, above the exhaustive limit of {limit}")]
    TooLarge { combinations: u128, limit: u128 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "ht")]
    Ht,
    #[serde(rename = "ht-ts", alias = "ht_ts")]
    HtTs,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Exact, Variant::Ht, Variant::HtTs];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Exact => "exact",
            Variant::Ht => "ht",
            Variant::HtTs => "ht-ts",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = LinkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(Variant::Exact),
            "ht" => Ok(Variant::Ht),
            "ht-ts" | "ht_ts" => Ok(Variant::HtTs),
            other => Err(LinkError::InvalidConfig(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkerConfig<T> {
    /// IoU threshold; a link is legal when IoU is strictly greater.
    pub tau: T,
    /// Beam width for [`Variant::HtTs`].
    pub k: usize,
    /// Maximum number of tubes extracted per clip.
    pub m: usize,
    pub variant: Variant,
    /// Once no legal tube remains, keep emitting tubes built from the highest
    /// objectness proposal of every frame until `m` is reached.
    pub fill_illegal: bool,
}

impl<T: Scalar> Default for LinkerConfig<T> {
    fn default() -> Self {
        Self {
            tau: T::lit(DEFAULT_TAU),
            k: DEFAULT_K,
            m: DEFAULT_M,
            variant: Variant::HtTs,
            fill_illegal: false,
        }
    }
}

impl<T: Scalar> LinkerConfig<T> {
    pub fn with_variant(self, variant: Variant) -> Self {
        Self { variant, ..self }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.tau >= T::zero() && self.tau <= T::one()) {
            return Err(LinkError::InvalidConfig(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.k == 0 {
            return Err(LinkError::InvalidConfig("k must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(LinkError::InvalidConfig("m must be at least 1".into()));
        }
        Ok(())
    }
}

/// `true` when every consecutive pair overlaps with IoU above `tau`
/// (vacuously for a single frame).
pub fn is_legal<T: Scalar>(boxes: &[BBox<T>], tau: T) -> bool {
    boxes.windows(2).all(|w| iou(&w[0], &w[1]) > tau)
}

/// Summed objectness plus `T` if the tube is legal.
pub fn action_score<T: Scalar>(boxes: &[BBox<T>], objectness: &[T], tau: T) -> Result<T, LinkError> {
    if boxes.is_empty() || boxes.len() != objectness.len() {
        return Err(LinkError::Shape(format!(
            "{} boxes and {} objectness values",
            boxes.len(),
            objectness.len()
        )));
    }
    let sum = objectness.iter().fold(T::zero(), |acc, &a| acc + a);
    Ok(if is_legal(boxes, tau) { sum + T::from_count(boxes.len()) } else { sum })
}

/// One linked tube spanning every frame of its clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube<T> {
    proposal_ids: Vec<u64>,
    boxes: Vec<BBox<T>>,
    objectness: Vec<T>,
    score: T,
    legal: bool,
}

impl<T: Scalar> Tube<T> {
    /// Builds a tube and derives its legality and score under `tau`.
    pub fn new(proposal_ids: Vec<u64>, boxes: Vec<BBox<T>>, objectness: Vec<T>, tau: T) -> Result<Self, LinkError> {
        if proposal_ids.len() != boxes.len() {
            return Err(LinkError::Shape(format!("{} ids and {} boxes", proposal_ids.len(), boxes.len())));
        }
        let score = action_score(&boxes, &objectness, tau)?;
        let legal = is_legal(&boxes, tau);
        Ok(Self { proposal_ids, boxes, objectness, score, legal })
    }

    pub fn from_proposals(proposals: &[RegionProposal<T>], tau: T) -> Result<Self, LinkError> {
        Self::new(
            proposals.iter().map(|p| p.id).collect(),
            proposals.iter().map(|p| p.bbox).collect(),
            proposals.iter().map(|p| p.objectness).collect(),
            tau,
        )
    }

    fn from_path(ws: &WorkingSet<'_, T>, path: &IndexPath) -> Self {
        let proposals: Vec<RegionProposal<T>> = path.iter().enumerate().map(|(t, &i)| ws.frames[t][i]).collect();
        Self::from_proposals(&proposals, ws.tau).expect("path spans every frame")
    }

    pub fn proposal_ids(&self) -> &[u64] {
        &self.proposal_ids
    }

    pub fn boxes(&self) -> &[BBox<T>] {
        &self.boxes
    }

    pub fn objectness(&self) -> &[T] {
        &self.objectness
    }

    pub fn score(&self) -> T {
        self.score
    }

    pub fn legal(&self) -> bool {
        self.legal
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn to_record(&self) -> TubeRecord<T> {
        TubeRecord {
            score: self.score,
            legal: self.legal,
            ids: self.proposal_ids.clone(),
            boxes: self.boxes.clone(),
            label: None,
        }
    }
}

fn first_empty_frame<T>(v: &VideoProposals<T>) -> Option<usize>
where
    T: Scalar,
{
    v.frames().iter().position(Vec::is_empty)
}

fn single<T: Scalar>(v: &VideoProposals<T>, cfg: &LinkerConfig<T>, variant: Variant) -> Result<Option<Tube<T>>, LinkError> {
    cfg.validate()?;
    if let Some(frame) = first_empty_frame(v) {
        return Err(LinkError::EmptyFrame { frame });
    }
    let mut ws = WorkingSet::new(v.frames(), cfg.tau, variant != Variant::Exact);
    let path = match variant {
        Variant::Exact => viterbi::best_any(&ws),
        Variant::Ht => viterbi::best_legal(&ws),
        Variant::HtTs => {
            let mut scratch = BeamScratch::new(ws.max_frame_len());
            beam_search(&mut ws, cfg.k, &mut scratch)
        }
    };
    Ok(path.map(|p| Tube::from_path(&ws, &p)))
}

/// Highest-scoring tube over all link choices.
pub fn link_exact<T: Scalar>(v: &VideoProposals<T>, cfg: &LinkerConfig<T>) -> Result<Tube<T>, LinkError> {
    Ok(single(v, cfg, Variant::Exact)?.expect("exact linking always succeeds on non-empty frames"))
}

/// Highest-scoring legal tube, or `None` when no legal tube spans the clip.
pub fn link_ht<T: Scalar>(v: &VideoProposals<T>, cfg: &LinkerConfig<T>) -> Result<Option<Tube<T>>, LinkError> {
    single(v, cfg, Variant::Ht)
}

/// Beam-pruned legal tube with beam width `cfg.k`, or `None` if the beam dies.
pub fn link_ht_ts<T: Scalar>(v: &VideoProposals<T>, cfg: &LinkerConfig<T>) -> Result<Option<Tube<T>>, LinkError> {
    single(v, cfg, Variant::HtTs)
}

/// Dispatches on `cfg.variant`.
pub fn link<T: Scalar>(v: &VideoProposals<T>, cfg: &LinkerConfig<T>) -> Result<Option<Tube<T>>, LinkError> {
    single(v, cfg, cfg.variant)
}

/// Greedily extracts up to `cfg.m` proposal-disjoint tubes with `cfg.variant`.
///
/// Stops early when a frame runs out of proposals or the linker finds no tube
/// (unless `cfg.fill_illegal` is set, in which case the remaining slots are
/// filled with per-frame highest-objectness tubes).
pub fn extract_tubes<T: Scalar>(v: &VideoProposals<T>, cfg: &LinkerConfig<T>) -> Result<Vec<Tube<T>>, LinkError> {
    cfg.validate()?;
    let mut ws = WorkingSet::new(v.frames(), cfg.tau, cfg.variant != Variant::Exact);
    let mut scratch = BeamScratch::new(ws.max_frame_len());
    let mut tubes = Vec::new();
    let mut filling = false;
    while tubes.len() < cfg.m && !ws.any_frame_empty() {
        let found = if filling {
            None
        } else {
            match cfg.variant {
                Variant::Exact => viterbi::best_any(&ws),
                Variant::Ht => viterbi::best_legal(&ws),
                Variant::HtTs => beam_search(&mut ws, cfg.k, &mut scratch),
            }
        };
        let path = match found {
            Some(path) => path,
            None if cfg.fill_illegal => {
                filling = true;
                (0..ws.num_frames()).map(|t| ws.top_by_objectness(t, 1)[0]).collect()
            }
            None => break,
        };
        tubes.push(Tube::from_path(&ws, &path));
        ws.remove(&path);
    }
    Ok(tubes)
}

/// Mean number of legal successors per proposal (the `Q` of the complexity
/// bound), measured over consecutive frame pairs.
pub fn mean_legal_successors<T: Scalar>(v: &VideoProposals<T>, tau: T) -> f64 {
    index::mean_legal_successors(v.frames(), tau)
}

/// Serialized tube: `{"score", "legal", "ids", "boxes"}` plus an optional class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TubeRecord<T> {
    pub score: T,
    pub legal: bool,
    pub ids: Vec<u64>,
    pub boxes: Vec<BBox<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u32>,
}

/// Tube output file for one clip; tubes appear in extraction order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TubeFile<T> {
    pub video_id: String,
    pub tubes: Vec<TubeRecord<T>>,
}

impl<T: Scalar> TubeFile<T> {
    pub fn new(video_id: impl Into<String>, tubes: &[Tube<T>]) -> Self {
        Self {
            video_id: video_id.into(),
            tubes: tubes.iter().map(Tube::to_record).collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("tube serialization is infallible")
    }

    pub fn from_json_str(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_json_string())
    }
}
