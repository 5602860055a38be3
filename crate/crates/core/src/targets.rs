//! Box regression targets, smooth-L1, the multi-task tube loss and the
//! tube-level label assignment rule.
//!
//! The center offsets are normalized by the *ground-truth coordinates*
//! (`dx = (x - x*) / x*`), not by the ground-truth width and height as in the
//! usual R-CNN parameterization. This makes them depend on the image origin and
//! undefined for a ground-truth center on an axis; such anchors are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{mean_iou, BBox, GeometryError};
use crate::linker::Tube;
use crate::proposals::GroundTruthTube;
use crate::scalar::Scalar;

/// Smallest `|x*|`, `|y*|` accepted by [`encode`].
pub const MIN_ANCHOR_COORD: f64 = 1e-9;
/// Mean IoU at which a tube is labelled with a ground-truth class.
pub const POSITIVE_MEAN_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("degenerate anchor: ground-truth center ({x}, {y}) lies within {MIN_ANCHOR_COORD} of an axis")]
    DegenerateAnchor { x: f64, y: f64 },
    #[error("decoded box is not representable: {0}")]
    Overflow(GeometryError),
    #[error("class probabilities must be non-negative and sum to 1 (sum = {sum})")]
    NotADistribution { sum: f64 },
    #[error("class {class} outside 0..={classes}")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
}

/// Regression offsets `(dx, dy, dw, dh)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[T; 4]", into = "[T; 4]")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct Offsets<T> {
    pub dx: T,
    pub dy: T,
    pub dw: T,
    pub dh: T,
}

impl<T: Scalar> Offsets<T> {
    pub fn new(dx: T, dy: T, dw: T, dh: T) -> Self {
        Self { dx, dy, dw, dh }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn to_array(self) -> [T; 4] {
        [self.dx, self.dy, self.dw, self.dh]
    }
}

impl<T: Scalar> From<[T; 4]> for Offsets<T> {
    fn from(v: [T; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl<T: Scalar> From<Offsets<T>> for [T; 4] {
    fn from(o: Offsets<T>) -> Self {
        o.to_array()
    }
}

/// Offsets that move `gt` onto `b`.
pub fn encode<T: Scalar>(b: &BBox<T>, gt: &BBox<T>) -> Result<Offsets<T>, TargetError> {
    let eps = T::lit(MIN_ANCHOR_COORD);
    if gt.cx().abs() < eps || gt.cy().abs() < eps {
        return Err(TargetError::DegenerateAnchor { x: gt.cx().as_f64(), y: gt.cy().as_f64() });
    }
    Ok(Offsets::new(
        (b.cx() - gt.cx()) / gt.cx(),
        (b.cy() - gt.cy()) / gt.cy(),
        (b.w() / gt.w()).ln(),
        (b.h() / gt.h()).ln(),
    ))
}

/// Inverse of [`encode`].
pub fn decode<T: Scalar>(o: &Offsets<T>, gt: &BBox<T>) -> Result<BBox<T>, TargetError> {
    BBox::new(
        gt.cx() * (T::one() + o.dx),
        gt.cy() * (T::one() + o.dy),
        gt.w() * o.dw.exp(),
        gt.h() * o.dh.exp(),
    )
    .map_err(TargetError::Overflow)
}

/// `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise.
pub fn smooth_l1<T: Scalar>(x: T) -> T {
    let a = x.abs();
    if a < T::one() {
        T::lit(0.5) * x * x
    } else {
        a - T::lit(0.5)
    }
}

pub fn smooth_l1_grad<T: Scalar>(x: T) -> T {
    if x.abs() < T::one() {
        x
    } else {
        x.signum()
    }
}

/// Network output for one tube: a distribution over `C + 1` classes (index 0 is
/// background) and, for every frame, one set of offsets per foreground class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct TubePrediction<T> {
    class_probs: Vec<T>,
    /// `offsets[t][c - 1]` regresses frame `t` towards class `c`.
    offsets: Vec<Vec<Offsets<T>>>,
}

impl<T: Scalar> TubePrediction<T> {
    pub fn new(class_probs: Vec<T>, offsets: Vec<Vec<Offsets<T>>>) -> Result<Self, TargetError> {
        if class_probs.len() < 2 {
            return Err(TargetError::Shape("need background plus at least one class".into()));
        }
        let sum = class_probs.iter().fold(T::zero(), |a, &p| a + p);
        let tol = T::lit(1e-9).max(T::epsilon() * T::from_count(4 * class_probs.len()));
        if class_probs.iter().any(|p| !p.is_finite() || *p < T::zero()) || (sum - T::one()).abs() > tol {
            return Err(TargetError::NotADistribution { sum: sum.as_f64() });
        }
        let classes = class_probs.len() - 1;
        if let Some(t) = offsets.iter().position(|f| f.len() != classes) {
            return Err(TargetError::Shape(format!(
                "frame {t} has {} offset sets, expected {classes}",
                offsets[t].len()
            )));
        }
        Ok(Self { class_probs, offsets })
    }

    pub fn classes(&self) -> usize {
        self.class_probs.len() - 1
    }

    pub fn frames(&self) -> usize {
        self.offsets.len()
    }

    pub fn class_probs(&self) -> &[T] {
        &self.class_probs
    }

    pub fn offsets(&self) -> &[Vec<Offsets<T>>] {
        &self.offsets
    }

    pub fn offsets_mut(&mut self) -> &mut [Vec<Offsets<T>>] {
        &mut self.offsets
    }

    fn check(&self, class: usize, targets: &[Offsets<T>]) -> Result<(), TargetError> {
        if class > self.classes() {
            return Err(TargetError::ClassOutOfRange { class, classes: self.classes() });
        }
        if class > 0 && targets.len() != self.frames() {
            return Err(TargetError::Shape(format!("{} targets for {} frames", targets.len(), self.frames())));
        }
        Ok(())
    }
}

/// Cross-entropy on the class distribution plus, for foreground tubes, the
/// smooth-L1 regression error of the class-`class` offsets in every frame.
/// A zero probability for the true class yields `+inf`.
pub fn tube_loss<T: Scalar>(pred: &TubePrediction<T>, class: usize, targets: &[Offsets<T>]) -> Result<T, TargetError> {
    pred.check(class, targets)?;
    let cls = -pred.class_probs[class].ln();
    if class == 0 {
        return Ok(cls);
    }
    let reg = pred
        .offsets
        .iter()
        .zip(targets)
        .flat_map(|(frame, target)| {
            let p = frame[class - 1].to_array();
            let q = target.to_array();
            (0..4).map(move |i| smooth_l1(p[i] - q[i]))
        })
        .fold(T::zero(), |a, v| a + v);
    Ok(cls + reg)
}

/// Gradient of [`tube_loss`] with respect to every predicted offset
/// (same `[frame][class - 1]` layout; zero outside the true class).
pub fn tube_loss_grad<T: Scalar>(
    pred: &TubePrediction<T>,
    class: usize,
    targets: &[Offsets<T>],
) -> Result<Vec<Vec<Offsets<T>>>, TargetError> {
    pred.check(class, targets)?;
    let mut grad = vec![vec![Offsets::zero(); pred.classes()]; pred.frames()];
    if class > 0 {
        for ((g, frame), target) in grad.iter_mut().zip(&pred.offsets).zip(targets) {
            let (p, q) = (frame[class - 1], target);
            g[class - 1] = Offsets::new(
                smooth_l1_grad(p.dx - q.dx),
                smooth_l1_grad(p.dy - q.dy),
                smooth_l1_grad(p.dw - q.dw),
                smooth_l1_grad(p.dh - q.dh),
            );
        }
    }
    Ok(grad)
}

/// Outcome of [`assign_label`]. `label == 0` means background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelAssignment<T> {
    pub label: u32,
    pub matched: Option<usize>,
    pub mean_iou: T,
}

/// Labels a box sequence with the class of the ground truth it overlaps best on
/// average, if that mean IoU reaches `threshold`; otherwise background. Ties go
/// to the lower ground-truth index.
pub fn assign_label_boxes<T: Scalar>(
    boxes: &[BBox<T>],
    gts: &[GroundTruthTube<T>],
    threshold: T,
) -> Result<LabelAssignment<T>, TargetError> {
    let mut best = LabelAssignment { label: 0, matched: None, mean_iou: T::zero() };
    let mut best_index: Option<(usize, T)> = None;
    for (g, gt) in gts.iter().enumerate() {
        let m = mean_iou(boxes, &gt.boxes).ok_or_else(|| {
            TargetError::Shape(format!("tube spans {} frames, ground truth {g} spans {}", boxes.len(), gt.boxes.len()))
        })?;
        if best_index.is_none_or(|(_, v)| m > v) {
            best_index = Some((g, m));
        }
    }
    if let Some((g, m)) = best_index {
        best.mean_iou = m;
        if m >= threshold {
            best.label = gts[g].label;
            best.matched = Some(g);
        }
    }
    Ok(best)
}

/// [`assign_label_boxes`] at the default threshold of 0.5 (inclusive).
pub fn assign_label<T: Scalar>(tube: &Tube<T>, gts: &[GroundTruthTube<T>]) -> Result<LabelAssignment<T>, TargetError> {
    assign_label_boxes(tube.boxes(), gts, T::lit(POSITIVE_MEAN_IOU))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(cx, cy, w, h).unwrap()
    }

    #[test]
    fn encode_examples() {
        let gt = bx(5.0, 5.0, 10.0, 10.0);
        assert_eq!(encode(&gt, &gt).unwrap(), Offsets::zero());
        let o = encode(&bx(10.0, 10.0, 20.0, 20.0), &gt).unwrap();
        let ln2 = 2f64.ln();
        assert_eq!(o, Offsets::new(1.0, 1.0, ln2, ln2));
        assert_eq!(decode(&o, &gt).unwrap(), bx(10.0, 10.0, 20.0, 20.0));
        assert_eq!(decode(&Offsets::zero(), &gt).unwrap(), gt);
    }

    #[test]
    fn degenerate_anchor_and_overflow() {
        assert!(matches!(
            encode(&bx(1.0, 1.0, 2.0, 2.0), &bx(0.0, 3.0, 2.0, 2.0)),
            Err(TargetError::DegenerateAnchor { .. })
        ));
        assert!(matches!(
            decode(&Offsets::new(0.0, 0.0, 1000.0, 0.0), &bx(1.0, 1.0, 2.0, 2.0)),
            Err(TargetError::Overflow(_))
        ));
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        assert_eq!(smooth_l1(0.5), 0.125);
        assert_eq!(smooth_l1(2.0), 1.5);
        assert_eq!(smooth_l1(-2.0), 1.5);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(1.0 - 1e-12), 0.5 * (1.0 - 1e-12) * (1.0 - 1e-12));
    }

    fn prediction(probs: Vec<f64>, frames: usize) -> TubePrediction<f64> {
        let classes = probs.len() - 1;
        TubePrediction::new(probs, vec![vec![Offsets::zero(); classes]; frames]).unwrap()
    }

    #[test]
    fn tube_loss_examples() {
        let targets = vec![Offsets::new(0.1, -0.2, 0.3, 0.0); 3];
        let mut pred = prediction(vec![0.0, 1.0], 3);
        for f in pred.offsets_mut() {
            f[0] = targets[0];
        }
        assert_eq!(tube_loss(&pred, 1, &targets).unwrap(), 0.0);
        pred.offsets_mut()[1][0].dx += 0.5;
        assert!((tube_loss(&pred, 1, &targets).unwrap() - 0.125).abs() < 1e-15);

        let bg = prediction(vec![0.5, 0.5], 3);
        assert!((tube_loss(&bg, 0, &[]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(tube_loss(&bg, 0, &targets).unwrap(), tube_loss(&bg, 0, &[]).unwrap());

        let impossible = prediction(vec![1.0, 0.0], 3);
        assert_eq!(tube_loss(&impossible, 1, &targets).unwrap(), f64::INFINITY);
    }

    #[test]
    fn tube_loss_reads_only_the_true_class() {
        let targets = vec![Offsets::zero(); 2];
        let mut pred = prediction(vec![0.0, 0.0, 1.0], 2);
        pred.offsets_mut()[0][0] = Offsets::new(5.0, 5.0, 5.0, 5.0);
        assert_eq!(tube_loss(&pred, 2, &targets).unwrap(), 0.0);
        let g = tube_loss_grad(&pred, 2, &targets).unwrap();
        assert_eq!(g[0][0], Offsets::zero());
    }

    #[test]
    fn prediction_validation() {
        assert!(TubePrediction::new(vec![0.5, 0.6], vec![]).is_err());
        assert!(TubePrediction::new(vec![1.5, -0.5], vec![]).is_err());
        assert!(TubePrediction::new(vec![1.0], vec![]).is_err());
        assert!(TubePrediction::new(vec![0.5, 0.5], vec![vec![]]).is_err());
        let p = prediction(vec![0.5, 0.5], 2);
        assert!(matches!(tube_loss(&p, 2, &[]), Err(TargetError::ClassOutOfRange { .. })));
        assert!(matches!(tube_loss(&p, 1, &[Offsets::zero()]), Err(TargetError::Shape(_))));
    }

    fn gt(label: u32, boxes: Vec<BBox<f64>>) -> GroundTruthTube<f64> {
        GroundTruthTube { label, boxes }
    }

    #[test]
    fn label_assignment() {
        let a = bx(50.0, 50.0, 20.0, 20.0);
        let far = bx(500.0, 500.0, 20.0, 20.0);
        let gts = vec![gt(3, vec![a; 5])];
        let hit = assign_label_boxes(&[a; 5], &gts, 0.5).unwrap();
        assert_eq!((hit.label, hit.matched, hit.mean_iou), (3, Some(0), 1.0));
        let miss = assign_label_boxes(&[far; 5], &gts, 0.5).unwrap();
        assert_eq!((miss.label, miss.matched), (0, None));
        let partial = assign_label_boxes(&[a, a, far, far, far], &gts, 0.5).unwrap();
        assert!((partial.mean_iou - 0.4).abs() < 1e-15);
        assert_eq!(partial.label, 0);
        // exactly 0.5 counts as positive
        let half = assign_label_boxes(&[a, far], &[gt(2, vec![a, a])], 0.5).unwrap();
        assert_eq!(half.label, 2);
        // ties go to the lower index
        let tie = assign_label_boxes(&[a], &[gt(4, vec![a]), gt(5, vec![a])], 0.5).unwrap();
        assert_eq!(tie.matched, Some(0));
        assert!(assign_label_boxes(&[a], &[gt(1, vec![a, a])], 0.5).is_err());
        assert_eq!(assign_label_boxes::<f64>(&[a], &[], 0.5).unwrap().label, 0);
    }

    proptest! {
        #[test]
        fn loss_is_non_negative(p1 in 0.0..=1.0f64, d in prop::collection::vec(-3.0..3.0f64, 8), c in 0usize..2) {
            let mut pred = prediction(vec![1.0 - p1, p1], 2);
            pred.offsets_mut()[0][0] = Offsets::new(d[0], d[1], d[2], d[3]);
            pred.offsets_mut()[1][0] = Offsets::new(d[4], d[5], d[6], d[7]);
            let loss = tube_loss(&pred, c, &[Offsets::zero(), Offsets::zero()]).unwrap();
            prop_assert!(loss >= 0.0);
        }

        #[test]
        fn encode_decode_round_trip(
            x in 1.0..1000.0f64, y in 1.0..1000.0f64, w in 1.0..300.0f64, h in 1.0..300.0f64,
            gx in 1.0..1000.0f64, gy in 1.0..1000.0f64, gw in 1.0..300.0f64, gh in 1.0..300.0f64,
            sx in prop::bool::ANY, sy in prop::bool::ANY,
        ) {
            let gx = if sx { -gx } else { gx };
            let gy = if sy { -gy } else { gy };
            let (b, g) = (bx(x, y, w, h), bx(gx, gy, gw, gh));
            let back = decode(&encode(&b, &g).unwrap(), &g).unwrap();
            for (p, q) in [(b.cx(), back.cx()), (b.cy(), back.cy()), (b.w(), back.w()), (b.h(), back.h())] {
                prop_assert!((p - q).abs() <= 1e-9 * p.abs().max(1.0));
            }
        }
    }
}
