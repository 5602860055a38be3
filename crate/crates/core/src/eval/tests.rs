use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;

use super::*;
use crate::geometry::iou;
use crate::linker::TubeRecord;

fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
    BBox::new(cx, cy, w, h).unwrap()
}

fn det(key: u32, confidence: f64, region: BBox<f64>) -> Scored<u32, BBox<f64>, f64> {
    Scored { key, class: 1, confidence, region }
}

fn gt(key: u32, region: BBox<f64>) -> Keyed<u32, BBox<f64>> {
    Keyed { key, class: 1, region }
}

fn ap(d: &[Scored<u32, BBox<f64>, f64>], g: &[Keyed<u32, BBox<f64>>], sigma: f64) -> Option<f64> {
    average_precision(d, g, sigma, iou).unwrap()
}

/// Interpolated AP summed over distinct recall levels, with selection-sort
/// ranking and linear-scan matching.
fn reference_ap(d: &[Scored<u32, BBox<f64>, f64>], g: &[Keyed<u32, BBox<f64>>], sigma: f64) -> Option<f64> {
    if g.is_empty() {
        return None;
    }
    let mut left: Vec<usize> = (0..d.len()).collect();
    let mut ranked = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for p in 1..left.len() {
            let (a, b) = (&d[left[p]], &d[left[best]]);
            if a.confidence > b.confidence || (a.confidence == b.confidence && a.key < b.key) {
                best = p;
            }
        }
        ranked.push(left.remove(best));
    }
    let mut used = vec![false; g.len()];
    let mut points = Vec::new();
    let mut tp = 0.0;
    for (k, &i) in ranked.iter().enumerate() {
        let mut pick: Option<usize> = None;
        for j in 0..g.len() {
            if used[j] || g[j].key != d[i].key {
                continue;
            }
            let ov = iou(&d[i].region, &g[j].region);
            if ov > sigma && pick.is_none_or(|p| ov > iou(&d[i].region, &g[p].region)) {
                pick = Some(j);
            }
        }
        if let Some(j) = pick {
            used[j] = true;
            tp += 1.0;
        }
        points.push((tp / g.len() as f64, tp / (k + 1) as f64));
    }
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
    levels.dedup();
    let mut area = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let best = points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max);
        area += (r - prev) * best;
        prev = r;
    }
    Some(area)
}

#[test]
fn perfect_and_empty() {
    let a = bx(10.0, 10.0, 10.0, 10.0);
    let b = bx(50.0, 10.0, 10.0, 10.0);
    assert_eq!(ap(&[det(0, 1.0, a), det(0, 1.0, b)], &[gt(0, a), gt(0, b)], 0.5), Some(1.0));
    assert_eq!(ap(&[], &[gt(0, a)], 0.5), Some(0.0));
    assert_eq!(ap(&[det(0, 1.0, a)], &[], 0.5), None);
}

#[test]
fn false_positive_ranked_second() {
    let a = bx(10.0, 10.0, 10.0, 10.0);
    let b = bx(50.0, 10.0, 10.0, 10.0);
    let miss = bx(200.0, 200.0, 10.0, 10.0);
    let d = [det(0, 0.9, a), det(0, 0.8, miss), det(0, 0.7, b)];
    let g = [gt(0, a), gt(0, b)];
    // precisions 1, 1/2, 2/3 -> envelope 1, 2/3, 2/3 -> (1 + 2/3) / 2
    let expected = (1.0 + 2.0 / 3.0) / 2.0;
    assert!((ap(&d, &g, 0.5).unwrap() - expected).abs() < 1e-15);
    assert!((reference_ap(&d, &g, 0.5).unwrap() - expected).abs() < 1e-15);
}

#[test]
fn duplicates_only_match_once_and_keys_are_separate() {
    let a = bx(10.0, 10.0, 10.0, 10.0);
    let d = [det(0, 0.9, a), det(0, 0.8, a), det(1, 0.7, a)];
    let g = [gt(0, a)];
    assert!((ap(&d, &g, 0.5).unwrap() - 1.0).abs() < 1e-15);
    let g2 = [gt(1, a)];
    assert!((ap(&d, &g2, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
}

#[test]
fn overlap_must_exceed_sigma() {
    let a = bx(5.0, 5.0, 10.0, 10.0);
    let third = bx(10.0, 5.0, 10.0, 10.0); // iou 1/3
    assert_eq!(ap(&[det(0, 1.0, third)], &[gt(0, a)], 1.0 / 3.0), Some(0.0));
    assert_eq!(ap(&[det(0, 1.0, third)], &[gt(0, a)], 0.3), Some(1.0));
    assert!(average_precision(&[det(0, f64::NAN, a)], &[gt(0, a)], 0.5, iou).is_err());
    assert!(average_precision(&[det(0, 1.0, a)], &[gt(0, a)], 1.5, iou).is_err());
}

fn random_case(rng: &mut Pcg64) -> (Vec<Scored<u32, BBox<f64>, f64>>, Vec<Keyed<u32, BBox<f64>>>) {
    let place = |rng: &mut Pcg64| {
        bx(
            rng.random_range(0..6) as f64 * 4.0,
            rng.random_range(0..3) as f64 * 4.0,
            8.0 + rng.random_range(0..3) as f64 * 2.0,
            8.0 + rng.random_range(0..3) as f64 * 2.0,
        )
    };
    let nd = rng.random_range(0..=5);
    let ng = rng.random_range(0..=3);
    let d = (0..nd)
        .map(|_| {
            let r = place(rng);
            det(rng.random_range(0..2), rng.random_range(0..4) as f64 / 4.0, r)
        })
        .collect();
    let g = (0..ng)
        .map(|_| {
            let r = place(rng);
            gt(rng.random_range(0..2), r)
        })
        .collect();
    (d, g)
}

#[test]
fn matches_reference_on_random_tiny_instances() {
    let mut rng = Pcg64::seed_from_u64(42);
    for case in 0..500 {
        let (d, g) = random_case(&mut rng);
        let sigma = [0.2, 0.5, 0.7][case % 3];
        let (got, want) = (ap(&d, &g, sigma), reference_ap(&d, &g, sigma));
        match (got, want) {
            (Some(x), Some(y)) => assert!((x - y).abs() < 1e-12, "case {case}: {x} vs {y}"),
            (x, y) => assert_eq!(x, y, "case {case}"),
        }
        if let Some(x) = got {
            assert!((0.0..=1.0).contains(&x));
        }
    }
}

#[test]
fn trailing_unmatched_detection_never_helps() {
    let mut rng = Pcg64::seed_from_u64(7);
    for _ in 0..300 {
        let (mut d, g) = random_case(&mut rng);
        let Some(before) = ap(&d, &g, 0.5) else { continue };
        d.push(det(0, -1.0, bx(1000.0, 1000.0, 5.0, 5.0)));
        assert!(ap(&d, &g, 0.5).unwrap() <= before);
    }
}

#[test]
fn equal_confidence_permutation_invariance() {
    let a = bx(10.0, 10.0, 10.0, 10.0);
    let b = bx(13.0, 10.0, 10.0, 10.0);
    let d1 = [det(0, 0.5, a), det(1, 0.5, b), det(0, 0.5, b)];
    let d2 = [det(1, 0.5, b), det(0, 0.5, a), det(0, 0.5, b)];
    let g = [gt(0, a), gt(1, a)];
    assert_eq!(ap(&d1, &g, 0.3), ap(&d2, &g, 0.3));
}

fn video(id: &str, tubes: Vec<(Option<u32>, Option<f64>, Vec<BBox<f64>>)>) -> VideoTubes<f64> {
    VideoTubes {
        video_id: id.into(),
        tubes: tubes.into_iter().map(|(label, score, boxes)| LabeledTube { label, score, boxes }).collect(),
    }
}

fn gt_lists(videos: &[VideoTubes<f64>]) -> (Vec<FrameGroundTruth<f64>>, Vec<TubeGroundTruth<f64>>) {
    let mut frames = Vec::new();
    let mut tubes = Vec::new();
    for v in videos {
        frames.extend(v.frame_detections().unwrap().into_iter().map(|d| Keyed { key: d.key, class: d.class, region: d.region }));
        tubes.extend(v.tube_detections().unwrap().into_iter().map(|d| Keyed { key: d.key, class: d.class, region: d.region }));
    }
    (frames, tubes)
}

#[test]
fn identical_predictions_score_one() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let b = bx(60.0, 20.0, 10.0, 10.0);
    let gts = vec![
        video("v0", vec![(Some(1), None, vec![a, a, a]), (Some(2), None, vec![b, b, b])]),
        video("v1", vec![(Some(2), None, vec![a, b, a])]),
    ];
    let (fg, tg) = gt_lists(&gts);
    let fd: Vec<_> = gts.iter().flat_map(|v| v.frame_detections().unwrap()).collect();
    let td: Vec<_> = gts.iter().flat_map(|v| v.tube_detections().unwrap()).collect();
    let f = frame_map(&fd, &fg, FRAME_MAP_SIGMA).unwrap();
    let t = video_map(&td, &tg, VIDEO_MAP_SIGMA).unwrap();
    assert_eq!(f.value, 1.0);
    assert_eq!(t.value, 1.0);
    assert_eq!(t.per_class.len(), 2);
    assert_eq!(f.metric, "frame-map");
    assert_eq!(t.sigma, 0.2);
}

#[test]
fn disjoint_predictions_score_zero() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let far = bx(500.0, 500.0, 10.0, 10.0);
    let gts = vec![video("v", vec![(Some(1), None, vec![a, a])])];
    let preds = [video("v", vec![(Some(1), Some(0.9), vec![far, far])])];
    let (fg, tg) = gt_lists(&gts);
    assert_eq!(video_map(&preds[0].tube_detections().unwrap(), &tg, 0.2).unwrap().value, 0.0);
    assert_eq!(frame_map(&preds[0].frame_detections().unwrap(), &fg, 0.5).unwrap().value, 0.0);
}

#[test]
fn mislabelled_tube_two_classes() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let b = bx(60.0, 20.0, 10.0, 10.0);
    let c = bx(100.0, 20.0, 10.0, 10.0);
    let gts = vec![video("v", vec![(Some(1), None, vec![a, a]), (Some(1), None, vec![b, b]), (Some(2), None, vec![c, c])])];
    // class 1: tube b is predicted as class 2; class 2: one TP (c) after a higher-ranked FP (b)
    let preds = video(
        "v",
        vec![(Some(1), Some(0.9), vec![a, a]), (Some(2), Some(0.8), vec![b, b]), (Some(2), Some(0.7), vec![c, c])],
    );
    let (_, tg) = gt_lists(&gts);
    let r = video_map(&preds.tube_detections().unwrap(), &tg, 0.2).unwrap();
    assert!((r.per_class[&1] - 0.5).abs() < 1e-15);
    assert!((r.per_class[&2] - 0.5).abs() < 1e-15);
    assert!((r.value - 0.5).abs() < 1e-15);
}

#[test]
fn classes_without_ground_truth_are_excluded() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let gts = vec![video("v", vec![(Some(1), None, vec![a])])];
    let preds = video("v", vec![(Some(1), Some(0.9), vec![a]), (Some(3), Some(0.9), vec![a])]);
    let (_, tg) = gt_lists(&gts);
    let r = video_map(&preds.tube_detections().unwrap(), &tg, 0.2).unwrap();
    assert_eq!(r.per_class.keys().copied().collect::<Vec<_>>(), vec![1]);
    assert_eq!(r.value, 1.0);
    assert_eq!(video_map::<f64>(&[], &[], 0.2), Err(EvalError::NoGroundTruth));
}

#[test]
fn video_map_rejects_length_mismatch() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let tg = vec![Keyed { key: "v".to_string(), class: 1, region: vec![a, a] }];
    let td = vec![Scored { key: "v".to_string(), class: 1, confidence: 1.0, region: vec![a] }];
    assert!(matches!(video_map(&td, &tg, 0.2), Err(EvalError::LengthMismatch { .. })));
}

#[test]
fn missing_label_is_reported() {
    let v = video("v", vec![(None, Some(1.0), vec![bx(1.0, 1.0, 1.0, 1.0)])]);
    assert_eq!(v.tube_detections().unwrap_err().index, 0);
}

fn record(score: f64, boxes: Vec<BBox<f64>>) -> TubeRecord<f64> {
    TubeRecord { score, legal: true, ids: vec![0; boxes.len()], boxes, label: None }
}

#[test]
fn coselection_examples() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let b = bx(22.0, 20.0, 10.0, 10.0);
    let far = bx(500.0, 20.0, 10.0, 10.0);
    let set = vec![record(3.0, vec![a, a]), record(2.0, vec![b, b]), record(1.0, vec![far, a])];
    for n in 1..=3 {
        assert_eq!(coselection_rate(&set, &set, 1.0, n).unwrap(), 1.0);
    }
    let disjoint = vec![record(1.0, vec![far, far])];
    assert_eq!(coselection_rate(&set[..2], &disjoint, 0.7, 2).unwrap(), 0.0);
    // b vs a: iou 8/12 per frame
    let only_a = vec![record(9.0, vec![a, a])];
    assert_eq!(coselection_rate(&set[..2], &only_a, 0.6, 2).unwrap(), 1.0);
    assert_eq!(coselection_rate(&set[..2], &only_a, 0.7, 2).unwrap(), 0.5);
    assert_eq!(coselection_rate(&set[..2], &only_a, 1.0, 1).unwrap(), 1.0);
    assert!(matches!(coselection_rate(&set, &set, 0.7, 4), Err(EvalError::NotEnoughTubes { n: 4, available: 3 })));
    assert_eq!(coselection_rate(&set, &set, 0.7, 0), Err(EvalError::ZeroN));
}

#[test]
fn coselection_takes_top_n_by_score() {
    let a = bx(20.0, 20.0, 10.0, 10.0);
    let far = bx(500.0, 20.0, 10.0, 10.0);
    let set_a = vec![record(1.0, vec![a]), record(5.0, vec![far])];
    let set_b = vec![record(0.0, vec![a])];
    assert_eq!(coselection_rate(&set_a, &set_b, 0.7, 1).unwrap(), 0.0);
    assert_eq!(coselection_rate(&set_a, &set_b, 0.7, 2).unwrap(), 0.5);
}

#[test]
fn coselection_sweep_is_monotone_in_theta() {
    let mut rng = Pcg64::seed_from_u64(3);
    let mut videos = Vec::new();
    for _ in 0..5 {
        let make = |rng: &mut Pcg64| {
            (0..6)
                .map(|_| {
                    let x = rng.random_range(0..5) as f64 * 3.0;
                    record(rng.random_range(0.0..1.0), vec![bx(10.0 + x, 10.0, 10.0, 10.0), bx(12.0, 10.0 + x, 10.0, 10.0)])
                })
                .collect::<Vec<_>>()
        };
        videos.push((make(&mut rng), make(&mut rng)));
    }
    let thetas = [0.0, 0.3, 0.7, 0.8, 0.9, 1.0];
    let cells = coselection_sweep(&videos, &thetas, &[2, 4, 6]).unwrap();
    assert_eq!(cells.len(), 18);
    for n in [2, 4, 6] {
        let column: Vec<f64> = cells.iter().filter(|c| c.n == n).map(|c| c.gamma).collect();
        assert!(column.windows(2).all(|w| w[0] >= w[1]), "{column:?}");
        assert!(column.iter().all(|g| (0.0..=1.0).contains(g)));
    }
    let empty: Vec<(Vec<TubeRecord<f64>>, Vec<TubeRecord<f64>>)> = Vec::new();
    assert_eq!(mean_coselection_rate(&empty, 0.5, 1), Err(EvalError::NoVideos));
}
