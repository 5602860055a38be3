use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tubelink_core::bench::{coselection_study, run_bench, BenchConfig, BenchError, StudyConfig};
use tubelink_core::eval::{
    coselection_sweep, LabeledTube, frame_map, video_map, FrameGroundTruth, Keyed, SweepCell, TubeGroundTruth, VideoTubes,
    FRAME_MAP_SIGMA, VIDEO_MAP_SIGMA,
};
use tubelink_core::linker::{extract_tubes, LinkError, LinkerConfig, TubeFile, TubeRecord, Variant};
use tubelink_core::proposals::{generate as generate_clip, generate_dataset, GroundTruth, SyntheticScenario, VideoProposals};
use tubelink_core::targets::{assign_label_boxes, tube_loss, tube_loss_grad, Offsets, TubePrediction};

use crate::io::{effective_seed, emit, read_many, read_text};
use crate::{
    BenchArgs, CoselectArgs, EvalArgs, GenerateArgs, LabelArgs, LinkArgs, LossArgs, Metric, SweepArgs, UsageError,
};

pub fn generate(a: GenerateArgs) -> Result<()> {
    let mut sc = match &a.scenario {
        Some(p) => serde_json::from_str::<SyntheticScenario>(&read_text(p)?)
            .with_context(|| format!("{}: malformed scenario", p.display()))?,
        None => SyntheticScenario::default(),
    };
    if let Some(seed) = effective_seed(a.seed)? {
        sc.seed = seed;
    }
    if let Some(v) = a.frames {
        sc.frames = v;
    }
    if let Some(v) = a.actors {
        sc.actors = v;
    }
    if let Some(v) = a.per_actor {
        sc.proposals_per_actor = v;
    }
    if let Some(v) = a.background {
        sc.background_count = v;
    }
    if let Some(v) = a.classes {
        sc.num_classes = v;
    }
    if let Some(v) = a.jitter {
        sc.jitter = v;
    }
    if let Some(v) = a.step {
        sc.motion_step = v;
    }
    let clips = if a.videos == 1 {
        vec![generate_clip::<f64>(&sc)?]
    } else {
        generate_dataset::<f64>(&sc, a.videos)?
    };
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    for (v, gt) in &clips {
        v.save(a.out.join(format!("{}.proposals.json", v.video_id())))?;
        let gt = GroundTruth { video_id: v.video_id().to_owned(), tubes: gt.clone() };
        gt.save(a.out.join(format!("{}.gt.json", gt.video_id)))?;
    }
    Ok(())
}

pub fn link(a: LinkArgs) -> Result<()> {
    let v = VideoProposals::<f64>::from_json_str(&read_text(&a.input)?)
        .with_context(|| format!("{}", a.input.display()))?;
    if let Some(frame) = v.frames().iter().position(Vec::is_empty) {
        return Err(LinkError::EmptyFrame { frame }).with_context(|| format!("{}", a.input.display()));
    }
    let cfg = LinkerConfig {
        tau: a.linker.tau,
        k: a.linker.k,
        m: a.linker.m,
        variant: Variant::from(a.algo),
        fill_illegal: a.fill_illegal,
    };
    let tubes = extract_tubes(&v, &cfg).with_context(|| format!("{}", a.input.display()))?;
    emit(a.output.as_deref(), &TubeFile::new(v.video_id(), &tubes).to_json_string())
}

fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruth<f64>>> {
    let gts: Vec<GroundTruth<f64>> = read_many(path)?;
    for g in &gts {
        let frames = g.tubes.first().map_or(0, |t| t.boxes.len());
        g.validate(frames).with_context(|| format!("{}: video `{}`", path.display(), g.video_id))?;
    }
    Ok(gts)
}

/// Requires both files to cover the same, duplicate-free set of videos.
fn check_video_ids<'a>(
    left: (&str, impl Iterator<Item = &'a str>),
    right: (&str, impl Iterator<Item = &'a str>),
) -> Result<()> {
    let collect = |(name, ids): (&str, Box<dyn Iterator<Item = &'a str> + '_>)| -> Result<BTreeSet<&'a str>> {
        let mut set = BTreeSet::new();
        for id in ids {
            if !set.insert(id) {
                bail!("{name}: video `{id}` appears more than once");
            }
        }
        Ok(set)
    };
    let (ln, rn) = (left.0, right.0);
    let l = collect((ln, Box::new(left.1)))?;
    let r = collect((rn, Box::new(right.1)))?;
    if let Some(id) = l.difference(&r).next() {
        bail!("video `{id}` is in {ln} but not in {rn}");
    }
    if let Some(id) = r.difference(&l).next() {
        bail!("video `{id}` is in {rn} but not in {ln}");
    }
    Ok(())
}

pub fn label(a: LabelArgs) -> Result<()> {
    let files: Vec<TubeFile<f64>> = read_many(&a.tubes)?;
    let gts = load_ground_truth(&a.gt)?;
    let by_id: BTreeMap<&str, &GroundTruth<f64>> = gts.iter().map(|g| (g.video_id.as_str(), g)).collect();
    let mut out = Vec::with_capacity(files.len());
    for f in &files {
        let gt = by_id
            .get(f.video_id.as_str())
            .with_context(|| format!("no ground truth for video `{}`", f.video_id))?;
        let mut tubes = Vec::with_capacity(f.tubes.len());
        for (i, rec) in f.tubes.iter().enumerate() {
            let assigned = assign_label_boxes(&rec.boxes, &gt.tubes, a.threshold)
                .with_context(|| format!("video `{}`, tube {i}", f.video_id))?;
            if a.drop_background && assigned.label == 0 {
                continue;
            }
            tubes.push(LabeledTube { label: Some(assigned.label), score: Some(rec.score), boxes: rec.boxes.clone() });
        }
        out.push(VideoTubes { video_id: f.video_id.clone(), tubes });
    }
    let payload = if out.len() == 1 { serde_json::to_string(&out[0]) } else { serde_json::to_string(&out) }?;
    emit(a.output.as_deref(), &payload)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let preds: Vec<VideoTubes<f64>> = read_many(&a.pred)?;
    let gts = load_ground_truth(&a.gt)?;
    check_video_ids(
        ("predictions", preds.iter().map(|p| p.video_id.as_str())),
        ("ground truth", gts.iter().map(|g| g.video_id.as_str())),
    )?;
    let report = match a.metric {
        Metric::FrameMap => {
            let mut dets = Vec::new();
            for p in &preds {
                dets.extend(p.frame_detections()?);
            }
            let truth: Vec<FrameGroundTruth<f64>> = gts
                .iter()
                .flat_map(|g| {
                    g.tubes.iter().flat_map(move |tube| {
                        tube.boxes.iter().enumerate().map(move |(t, b)| Keyed {
                            key: (g.video_id.clone(), t),
                            class: tube.label,
                            region: *b,
                        })
                    })
                })
                .collect();
            frame_map(&dets, &truth, a.sigma.unwrap_or(FRAME_MAP_SIGMA))?
        }
        Metric::VideoMap => {
            let mut dets = Vec::new();
            for p in &preds {
                dets.extend(p.tube_detections()?);
            }
            let truth: Vec<TubeGroundTruth<f64>> = gts
                .iter()
                .flat_map(|g| {
                    g.tubes.iter().map(move |tube| Keyed {
                        key: g.video_id.clone(),
                        class: tube.label,
                        region: tube.boxes.clone(),
                    })
                })
                .collect();
            video_map(&dets, &truth, a.sigma.unwrap_or(VIDEO_MAP_SIGMA))?
        }
    };
    emit(None, &serde_json::to_string(&report)?)
}

fn sweep_csv(cells: &[SweepCell<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in cells {
        w.serialize(c)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn coselect(a: CoselectArgs) -> Result<()> {
    let set_a: Vec<TubeFile<f64>> = read_many(&a.a)?;
    let set_b: Vec<TubeFile<f64>> = read_many(&a.b)?;
    check_video_ids(
        ("--a", set_a.iter().map(|f| f.video_id.as_str())),
        ("--b", set_b.iter().map(|f| f.video_id.as_str())),
    )?;
    let b_by_id: BTreeMap<&str, &Vec<TubeRecord<f64>>> = set_b.iter().map(|f| (f.video_id.as_str(), &f.tubes)).collect();
    let videos: Vec<_> = set_a
        .iter()
        .map(|f| (f.tubes.clone(), b_by_id[f.video_id.as_str()].clone()))
        .collect();
    let cells = coselection_sweep(&videos, &a.theta, &a.n)?;
    if cells.len() == 1 && !a.csv {
        emit(None, &serde_json::to_string(&cells[0])?)
    } else {
        print!("{}", sweep_csv(&cells)?);
        Ok(())
    }
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = StudyConfig { videos: a.videos, tau: a.tau, k: a.k, m: a.m, thetas: a.theta, ns: a.n, ..StudyConfig::default() };
    cfg.scenario.seed = effective_seed(Some(a.seed))?.unwrap_or(a.seed);
    if a.full_beam {
        cfg.k = cfg.scenario.proposals_per_frame();
    }
    let cells = coselection_study(&cfg).map_err(usage_or_data)?;
    let payload = sweep_csv(&cells)?;
    match a.csv {
        Some(p) => fs::write(&p, payload).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{payload}");
            Ok(())
        }
    }
}

fn usage_or_data(e: BenchError) -> anyhow::Error {
    match e {
        BenchError::InvalidArgs(msg) => UsageError(msg).into(),
        other => other.into(),
    }
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        sizes: a.sizes,
        frames: a.t,
        m: a.m,
        k: a.k,
        tau: a.tau,
        seed: effective_seed(Some(a.seed))?.unwrap_or(a.seed),
        repeat: a.repeat,
    };
    let report = run_bench(&cfg).map_err(usage_or_data)?;
    match &a.csv {
        Some(p) => {
            let f = fs::File::create(p).with_context(|| format!("cannot write {}", p.display()))?;
            report.write_csv(f)?;
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    for c in &report.cells {
        eprintln!(
            "{:>6} N={:<5} {:>10.4}s  Q={:<8.3} M={:<4} speedup={:.1}x",
            c.variant.as_str(),
            c.n,
            c.seconds,
            c.q,
            c.tubes,
            c.speedup
        );
    }
    for v in Variant::ALL {
        if let Some(s) = report.log_log_slope(v) {
            eprintln!("{:>6} log-log slope {s:.3}", v.as_str());
        }
    }
    Ok(())
}

#[derive(Deserialize)]
struct LossInput {
    class_probs: Vec<f64>,
    offsets: Vec<Vec<Offsets<f64>>>,
    class: usize,
    #[serde(default)]
    targets: Vec<Offsets<f64>>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum LossValue {
    Finite(f64),
    Sentinel(&'static str),
}

pub fn loss(a: LossArgs) -> Result<()> {
    let input: LossInput =
        serde_json::from_str(&read_text(&a.input)?).with_context(|| format!("{}: malformed JSON", a.input.display()))?;
    let pred = TubePrediction::new(input.class_probs, input.offsets)?;
    let value = tube_loss(&pred, input.class, &input.targets)?;
    let grad = tube_loss_grad(&pred, input.class, &input.targets)?;
    let value = if value.is_finite() { LossValue::Finite(value) } else { LossValue::Sentinel("+inf") };
    emit(None, &serde_json::to_string(&json!({ "loss": value, "grad": grad }))?)
}
