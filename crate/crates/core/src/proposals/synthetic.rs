use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GroundTruthTube, ProposalError, RegionProposal, VideoProposals};
use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Half-width of the uniform objectness noise band.
const SCORE_SPREAD: f64 = 0.05;

/// Parameters of a synthetic clip: actors performing a reflecting random walk,
/// each surrounded by jittered proposals, plus uniformly scattered clutter.
///
/// The random stream is PCG-XSL-RR 128/64 (`rand_pcg::Pcg64`) seeded through
/// `SeedableRng::seed_from_u64(seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticScenario {
    pub video_id: String,
    pub actors: usize,
    pub proposals_per_actor: usize,
    /// Distance travelled by each actor between consecutive frames (pixels).
    pub motion_step: f64,
    /// Maximum per-axis perturbation of proposal centers and sides (pixels).
    pub jitter: f64,
    pub background_count: usize,
    pub objectness_signal: f64,
    pub objectness_noise: f64,
    pub seed: u64,
    /// `(width, height)` of the image plane.
    pub frame_size: (f64, f64),
    /// `(width, height)` of every actor box.
    pub actor_size: (f64, f64),
    /// `(min, max)` side length of clutter boxes.
    pub background_size: (f64, f64),
    /// Number of action classes; actor `i` gets label `1 + i % num_classes`.
    pub num_classes: u32,
    pub frames: usize,
}

impl Default for SyntheticScenario {
    fn default() -> Self {
        Self {
            video_id: "synthetic".into(),
            actors: 2,
            proposals_per_actor: 5,
            motion_step: 4.0,
            jitter: 3.0,
            background_count: 20,
            objectness_signal: 0.85,
            objectness_noise: 0.3,
            seed: 0,
            frame_size: (640.0, 480.0),
            actor_size: (60.0, 120.0),
            background_size: (16.0, 96.0),
            num_classes: 1,
            frames: 5,
        }
    }
}

impl SyntheticScenario {
    pub fn validate(&self) -> Result<(), ProposalError> {
        let bad = |msg: &str| Err(ProposalError::InvalidScenario(msg.to_owned()));
        let (fw, fh) = self.frame_size;
        let (aw, ah) = self.actor_size;
        let (bmin, bmax) = self.background_size;
        let all_finite = [
            fw, fh, aw, ah, bmin, bmax, self.motion_step, self.jitter,
            self.objectness_signal, self.objectness_noise,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("all numeric fields must be finite");
        }
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        if fw <= 0.0 || fh <= 0.0 || aw <= 0.0 || ah <= 0.0 {
            return bad("frame and actor sizes must be positive");
        }
        if self.actors > 0 && (aw > fw || ah > fh) {
            return bad("frame_size too small to contain actor boxes");
        }
        if self.motion_step < 0.0 || self.jitter < 0.0 {
            return bad("motion_step and jitter must be non-negative");
        }
        if !(0.0 < bmin && bmin <= bmax) {
            return bad("background_size must satisfy 0 < min <= max");
        }
        if !(0.0..=1.0).contains(&self.objectness_signal) || !(0.0..=1.0).contains(&self.objectness_noise) {
            return bad("objectness means must lie in [0, 1]");
        }
        if self.num_classes == 0 {
            return bad("num_classes must be at least 1");
        }
        Ok(())
    }

    pub fn proposals_per_frame(&self) -> usize {
        self.actors * self.proposals_per_actor + self.background_count
    }
}

fn spread(rng: &mut Pcg64, half: f64) -> f64 {
    if half > 0.0 {
        rng.random_range(-half..=half)
    } else {
        0.0
    }
}

fn score(rng: &mut Pcg64, mean: f64) -> f64 {
    (mean + spread(rng, SCORE_SPREAD)).clamp(0.0, 1.0)
}

/// Advances one coordinate by `d`, flipping the direction if the step would
/// leave `[lo, hi]`.
fn reflect(pos: f64, d: f64, lo: f64, hi: f64) -> f64 {
    let next = pos + d;
    if next < lo || next > hi {
        (pos - d).clamp(lo, hi)
    } else {
        next
    }
}

fn bbox<T: Scalar>(cx: f64, cy: f64, w: f64, h: f64) -> Result<BBox<T>, ProposalError> {
    BBox::new(T::lit(cx), T::lit(cy), T::lit(w), T::lit(h))
        .map_err(|e| ProposalError::InvalidScenario(e.to_string()))
}

/// Generates one clip and its ground truth. Output is a pure function of `s`.
pub fn generate<T: Scalar>(
    s: &SyntheticScenario,
) -> Result<(VideoProposals<T>, Vec<GroundTruthTube<T>>), ProposalError> {
    s.validate()?;
    let mut rng = Pcg64::seed_from_u64(s.seed);
    let (fw, fh) = s.frame_size;
    let (aw, ah) = s.actor_size;
    let (xlo, xhi, ylo, yhi) = (aw / 2.0, fw - aw / 2.0, ah / 2.0, fh - ah / 2.0);

    let mut tracks: Vec<Vec<(f64, f64)>> = Vec::with_capacity(s.actors);
    for _ in 0..s.actors {
        let mut x = if xhi > xlo { rng.random_range(xlo..=xhi) } else { xlo };
        let mut y = if yhi > ylo { rng.random_range(ylo..=yhi) } else { ylo };
        let mut track = vec![(x, y)];
        for _ in 1..s.frames {
            let angle = rng.random_range(0.0..TAU);
            x = reflect(x, s.motion_step * angle.cos(), xlo, xhi);
            y = reflect(y, s.motion_step * angle.sin(), ylo, yhi);
            track.push((x, y));
        }
        tracks.push(track);
    }

    let mut frames = Vec::with_capacity(s.frames);
    for t in 0..s.frames {
        let mut raw: Vec<(f64, f64, f64, f64, f64)> = Vec::with_capacity(s.proposals_per_frame());
        for track in &tracks {
            let (x, y) = track[t];
            for _ in 0..s.proposals_per_actor {
                let cx = x + spread(&mut rng, s.jitter);
                let cy = y + spread(&mut rng, s.jitter);
                let w = (aw + spread(&mut rng, s.jitter)).max(1.0);
                let h = (ah + spread(&mut rng, s.jitter)).max(1.0);
                raw.push((cx, cy, w, h, score(&mut rng, s.objectness_signal)));
            }
        }
        let (bmin, bmax) = s.background_size;
        for _ in 0..s.background_count {
            let cx = rng.random_range(0.0..=fw);
            let cy = rng.random_range(0.0..=fh);
            let w = rng.random_range(bmin..=bmax);
            let h = rng.random_range(bmin..=bmax);
            raw.push((cx, cy, w, h, score(&mut rng, s.objectness_noise)));
        }
        raw.shuffle(&mut rng);
        let proposals = raw
            .into_iter()
            .enumerate()
            .map(|(id, (cx, cy, w, h, a))| Ok(RegionProposal::new(id as u64, bbox(cx, cy, w, h)?, T::lit(a))))
            .collect::<Result<Vec<_>, ProposalError>>()?;
        frames.push(proposals);
    }

    let gts = tracks
        .iter()
        .enumerate()
        .map(|(i, track)| {
            Ok(GroundTruthTube {
                label: 1 + (i as u32 % s.num_classes),
                boxes: track
                    .iter()
                    .map(|&(x, y)| bbox(x, y, aw, ah))
                    .collect::<Result<_, ProposalError>>()?,
            })
        })
        .collect::<Result<Vec<_>, ProposalError>>()?;

    Ok((VideoProposals::new(s.video_id.clone(), frames)?, gts))
}

/// Proposals of one generated clip with its ground-truth tubes.
pub type Clip<T> = (VideoProposals<T>, Vec<GroundTruthTube<T>>);

/// `count` clips sharing `base` parameters; clip `i` uses seed `base.seed + i`
/// and video id `{base.video_id}-{i:03}`. Generation is parallel, output order fixed.
pub fn generate_dataset<T: Scalar>(
    base: &SyntheticScenario,
    count: usize,
) -> Result<Vec<Clip<T>>, ProposalError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let s = SyntheticScenario {
                video_id: format!("{}-{i:03}", base.video_id),
                seed: base.seed.wrapping_add(i as u64),
                ..base.clone()
            };
            generate(&s)
        })
        .collect()
}
