//! Runtime comparison of the three linkers and the coselection study between
//! pruned and unpruned extraction, both on synthetic clips.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::eval::{coselection_sweep, EvalError, SweepCell};
use crate::linker::{extract_tubes, mean_legal_successors, LinkError, LinkerConfig, Tube, Variant};
use crate::proposals::{generate, generate_dataset, ProposalError, SyntheticScenario, VideoProposals};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Proposals(#[from] ProposalError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invalid benchmark parameters: {0}")]
    InvalidArgs(String),
    #[error("{variant} at N={n} produced different tubes on repeat {repeat}")]
    NonDeterministic { variant: Variant, n: usize, repeat: usize },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Proposals per frame for each column of the sweep.
    pub sizes: Vec<usize>,
    pub frames: usize,
    pub m: usize,
    pub k: usize,
    pub tau: f64,
    pub seed: u64,
    /// Timed repetitions per cell; the median is reported.
    pub repeat: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { sizes: vec![300, 500, 700, 1000], frames: 5, m: 200, k: 10, tau: 0.3, seed: 0, repeat: 5 }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<(), BenchError> {
        let bad = |s: &str| Err(BenchError::InvalidArgs(s.into()));
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return bad("sizes must be a non-empty list of positive counts");
        }
        if self.frames == 0 || self.m == 0 || self.k == 0 || self.repeat == 0 {
            return bad("frames, m, k and repeat must be positive");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Clip with `n` proposals per frame on a 1920x1080 image plane: one walking
/// actor per 20 proposals, each covered by 15 jittered proposals, and clutter
/// making up the rest. Per-actor density stays fixed as `n` grows.
pub fn bench_scenario(n: usize, frames: usize, seed: u64) -> SyntheticScenario {
    let per_actor = 15.min(n);
    let actors = (n / 20).max(1).min(n / per_actor);
    SyntheticScenario {
        video_id: format!("bench-n{n}"),
        actors,
        proposals_per_actor: per_actor,
        motion_step: 6.0,
        jitter: 4.0,
        background_count: n - actors * per_actor,
        objectness_signal: 0.85,
        objectness_noise: 0.3,
        seed,
        frame_size: (1920.0, 1080.0),
        actor_size: (60.0, 150.0),
        background_size: (24.0, 160.0),
        num_classes: 1,
        frames,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCell {
    pub variant: Variant,
    #[serde(rename = "N")]
    pub n: usize,
    /// Median wall time of one full extraction run.
    pub seconds: f64,
    /// Mean number of legal successors per proposal.
    #[serde(rename = "Q")]
    pub q: f64,
    /// `seconds` of the exact linker divided by this cell's `seconds`.
    pub speedup: f64,
    #[serde(skip)]
    pub tubes: usize,
    #[serde(skip)]
    pub digest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    pub fn cell(&self, variant: Variant, n: usize) -> Option<&BenchCell> {
        self.cells.iter().find(|c| c.variant == variant && c.n == n)
    }

    /// Least-squares slope of `ln(seconds)` against `ln(N)`.
    pub fn log_log_slope(&self, variant: Variant) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .cells
            .iter()
            .filter(|c| c.variant == variant)
            .map(|c| ((c.n as f64).ln(), c.seconds.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    /// CSV with header `variant,N,seconds,Q,speedup`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(c)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

fn digest(tubes: &[Tube<f64>]) -> u64 {
    let mut h = DefaultHasher::new();
    for t in tubes {
        t.proposal_ids().hash(&mut h);
        t.score().to_bits().hash(&mut h);
    }
    h.finish()
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

/// Times `extract_tubes` for every variant and size. Scenarios are prepared in
/// parallel; timing runs strictly one at a time, with one discarded warm-up run
/// per cell.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let clips: Vec<VideoProposals<f64>> = cfg
        .sizes
        .par_iter()
        .map(|&n| generate::<f64>(&bench_scenario(n, cfg.frames, cfg.seed)).map(|(v, _)| v))
        .collect::<Result<_, _>>()?;

    let mut cells = Vec::new();
    for (clip, &n) in clips.iter().zip(&cfg.sizes) {
        let q = mean_legal_successors(clip, cfg.tau);
        let mut row = Vec::new();
        for variant in Variant::ALL {
            let lc = LinkerConfig { tau: cfg.tau, k: cfg.k, m: cfg.m, variant, fill_illegal: false };
            let reference = extract_tubes(clip, &lc)?;
            let expected = digest(&reference);
            let mut times = Vec::with_capacity(cfg.repeat);
            for repeat in 0..cfg.repeat {
                let start = Instant::now();
                let tubes = extract_tubes(clip, &lc)?;
                times.push(start.elapsed());
                if digest(&tubes) != expected {
                    return Err(BenchError::NonDeterministic { variant, n, repeat });
                }
            }
            row.push((variant, median(times).as_secs_f64().max(f64::MIN_POSITIVE), reference.len(), expected));
        }
        let exact = row.iter().find(|r| r.0 == Variant::Exact).map(|r| r.1).expect("exact is always timed");
        cells.extend(row.into_iter().map(|(variant, seconds, tubes, digest)| BenchCell {
            variant,
            n,
            seconds,
            q,
            speedup: exact / seconds,
            tubes,
            digest,
        }));
    }
    Ok(BenchReport { cells })
}

/// Parameters of the pruned-versus-unpruned coselection study.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub videos: usize,
    pub scenario: SyntheticScenario,
    pub tau: f64,
    pub k: usize,
    pub m: usize,
    pub thetas: Vec<f64>,
    pub ns: Vec<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            videos: 20,
            scenario: SyntheticScenario {
                video_id: "smooth".into(),
                actors: 5,
                proposals_per_actor: 30,
                motion_step: 4.0,
                jitter: 3.0,
                background_count: 150,
                frames: 5,
                ..SyntheticScenario::default()
            },
            tau: 0.3,
            k: 10,
            m: 200,
            thetas: vec![0.7, 0.8, 0.9, 1.0],
            ns: vec![50, 100, 150, 200],
        }
    }
}

/// Extracts tubes from every clip with and without top-K selection (both
/// filling the quota with objectness-only tubes once legal ones run out) and
/// returns the dataset-mean coselection rate for every `(theta, n)` pair.
pub fn coselection_study(cfg: &StudyConfig) -> Result<Vec<SweepCell<f64>>, BenchError> {
    if cfg.videos == 0 {
        return Err(BenchError::InvalidArgs("videos must be positive".into()));
    }
    let clips = generate_dataset::<f64>(&cfg.scenario, cfg.videos)?;
    let base = LinkerConfig { tau: cfg.tau, k: cfg.k, m: cfg.m, variant: Variant::HtTs, fill_illegal: true };
    let pairs = clips
        .par_iter()
        .map(|(v, _)| {
            let pruned = extract_tubes(v, &base)?;
            let full = extract_tubes(v, &base.with_variant(Variant::Ht))?;
            Ok((pruned, full))
        })
        .collect::<Result<Vec<_>, LinkError>>()?;
    Ok(coselection_sweep(&pairs, &cfg.thetas, &cfg.ns)?)
}
