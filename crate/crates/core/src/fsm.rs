//! Per-hand touch detection over 2D keypoint streams.
//!
//! Each hand runs a small state machine against the four landmarks on the
//! opposite side of the body:
//!
//! ```text
//! Idle ──(crossed, within r_near, armed)──▶ Approach ──(within r_touch for
//! min_touch_frames)──▶ Contact ──(beyond r_near)──▶ emit, Idle
//! ```
//!
//! Uncrossing the midline, exceeding `max_gesture_frames`, or reaching the end
//! of the stream abandons the gesture without emitting anything. A hand only
//! becomes armed after it has been outside every approach radius (or on its
//! own side), so a hand parked next to a landmark never emits.
//!
//! All distances are divided by the frame's shoulder width.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionClass, BodyPart, Label, Segment, SegmentSeq, Side};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Ear, shoulder, hip and knee on one side of the body.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SideLandmarks {
    pub ear: Point,
    pub shoulder: Point,
    pub hip: Point,
    pub knee: Point,
}

impl SideLandmarks {
    pub fn get(&self, part: BodyPart) -> Point {
        match part {
            BodyPart::Ear => self.ear,
            BodyPart::Shoulder => self.shoulder,
            BodyPart::Hip => self.hip,
            BodyPart::Knee => self.knee,
        }
    }

    pub fn get_mut(&mut self, part: BodyPart) -> &mut Point {
        match part {
            BodyPart::Ear => &mut self.ear,
            BodyPart::Shoulder => &mut self.shoulder,
            BodyPart::Hip => &mut self.hip,
            BodyPart::Knee => &mut self.knee,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KeypointFrame {
    pub left_hand: Point,
    pub right_hand: Point,
    pub left: SideLandmarks,
    pub right: SideLandmarks,
    pub midline_x: f64,
    pub shoulder_width: f64,
}

impl KeypointFrame {
    pub fn hand(&self, side: Side) -> Point {
        match side {
            Side::Left => self.left_hand,
            Side::Right => self.right_hand,
        }
    }

    pub fn landmarks(&self, side: Side) -> &SideLandmarks {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let points = [self.left_hand, self.right_hand]
            .into_iter()
            .chain(BodyPart::ALL.iter().flat_map(|&p| [self.left.get(p), self.right.get(p)]));
        for p in points {
            if !p.is_finite() {
                return Err(Error::InvalidParams(format!("frame {index}: non-finite coordinate")));
            }
        }
        if !self.midline_x.is_finite() {
            return Err(Error::InvalidParams(format!("frame {index}: non-finite midline")));
        }
        if !(self.shoulder_width.is_finite() && self.shoulder_width > 0.0) {
            return Err(Error::InvalidParams(format!(
                "frame {index}: shoulder width must be positive, got {}",
                self.shoulder_width
            )));
        }
        Ok(())
    }
}

/// How the subject's sides map onto the image x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// Subject faces the camera; their right side is at smaller x.
    #[default]
    Facing,
    /// Horizontally flipped stream; the subject's right side is at larger x.
    Mirrored,
}

impl Orientation {
    /// Sign of the image-x offset from the midline for `side` of the body.
    pub fn lateral_sign(self, side: Side) -> f64 {
        match (self, side) {
            (Orientation::Facing, Side::Right) | (Orientation::Mirrored, Side::Left) => -1.0,
            _ => 1.0,
        }
    }

    pub fn crossed_midline(self, hand_x: f64, midline_x: f64, hand: Side) -> bool {
        (hand_x - midline_x) * self.lateral_sign(hand) < 0.0
    }
}

/// Whether a hand is strictly on the opposite side of the midline from its
/// own side, with the subject facing the camera.
pub fn crossed_midline(hand: Point, midline_x: f64, hand_side: Side) -> bool {
    Orientation::Facing.crossed_midline(hand.x, midline_x, hand_side)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsmParams {
    /// Approach radius as a fraction of shoulder width.
    pub r_near: f64,
    /// Touch radius as a fraction of shoulder width.
    pub r_touch: f64,
    pub min_touch_frames: usize,
    /// Longest gesture in frames; `None` means two seconds of video.
    pub max_gesture_frames: Option<usize>,
    pub orientation: Orientation,
}

impl Default for FsmParams {
    fn default() -> Self {
        FsmParams {
            r_near: 0.45,
            r_touch: 0.18,
            min_touch_frames: 1,
            max_gesture_frames: None,
            orientation: Orientation::Facing,
        }
    }
}

impl FsmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_touch > 0.0 && self.r_touch < self.r_near && self.r_near.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "need 0 < r_touch < r_near, got r_touch={} r_near={}",
                self.r_touch, self.r_near
            )));
        }
        if self.min_touch_frames == 0 {
            return Err(Error::InvalidParams("min_touch_frames must be at least 1".into()));
        }
        if self.max_gesture_frames == Some(0) {
            return Err(Error::InvalidParams("max_gesture_frames must be at least 1".into()));
        }
        Ok(())
    }

    pub fn max_frames(&self, fps: f64) -> usize {
        self.max_gesture_frames
            .unwrap_or_else(|| (2.0 * fps).round().max(1.0) as usize)
    }
}

/// A completed approach/touch/leave traversal by one hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GestureEmission {
    pub class: ActionClass,
    /// First approach frame.
    pub start: usize,
    /// First frame of the touch phase.
    pub touch_start: usize,
    /// Last frame before the hand left the approach radius.
    pub end: usize,
}

impl GestureEmission {
    pub fn hand(&self) -> Side {
        self.class.hand()
    }

    pub fn segment(&self) -> Segment {
        Segment::new(Label::Action(self.class), self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy)]
enum Phase {
    Idle { armed: bool },
    Approach { target: BodyPart, start: usize, dwell: usize },
    Contact { target: BodyPart, start: usize, touch_start: usize },
}

/// Runs the state machine for one hand.
pub fn detect_hand(stream: &[KeypointFrame], hand: Side, params: &FsmParams, fps: f64) -> Vec<GestureEmission> {
    let max_frames = params.max_frames(fps);
    let part_side = hand.opposite();
    let mut phase = Phase::Idle { armed: false };
    let mut out = Vec::new();

    for (f, frame) in stream.iter().enumerate() {
        let pos = frame.hand(hand);
        let crossed = params.orientation.crossed_midline(pos.x, frame.midline_x, hand);
        let landmarks = frame.landmarks(part_side);
        let dist = |p: BodyPart| pos.distance(&landmarks.get(p)) / frame.shoulder_width;
        let (nearest, d_min) = BodyPart::ALL
            .iter()
            .map(|&p| (p, dist(p)))
            .fold((BodyPart::Ear, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let near = crossed && d_min <= params.r_near;

        loop {
            match phase {
                Phase::Idle { armed } => {
                    if !near {
                        phase = Phase::Idle { armed: true };
                    } else if armed {
                        phase = Phase::Approach { target: nearest, start: f, dwell: 0 };
                        continue;
                    }
                }
                Phase::Approach { target, start, dwell } => {
                    if !crossed {
                        phase = Phase::Idle { armed: true };
                    } else if f - start + 1 > max_frames {
                        phase = Phase::Idle { armed: !near };
                    } else if nearest != target && near {
                        // Retargeting restarts the approach.
                        phase = Phase::Approach { target: nearest, start: f, dwell: 0 };
                        continue;
                    } else {
                        let d = dist(target);
                        if d > params.r_near {
                            phase = Phase::Idle { armed: true };
                        } else if d <= params.r_touch {
                            let dwell = dwell + 1;
                            phase = if dwell >= params.min_touch_frames {
                                Phase::Contact { target, start, touch_start: f + 1 - dwell }
                            } else {
                                Phase::Approach { target, start, dwell }
                            };
                        } else {
                            phase = Phase::Approach { target, start, dwell: 0 };
                        }
                    }
                }
                Phase::Contact { target, start, touch_start } => {
                    if !crossed {
                        phase = Phase::Idle { armed: true };
                    } else if dist(target) > params.r_near {
                        out.push(GestureEmission {
                            class: ActionClass::from_hand_part(hand, target),
                            start,
                            touch_start,
                            end: f - 1,
                        });
                        phase = Phase::Idle { armed: true };
                        continue;
                    } else if f - start + 1 > max_frames {
                        phase = Phase::Idle { armed: false };
                    }
                }
            }
            break;
        }
    }
    out
}

/// Merges both hands' emissions into one non-overlapping, time-ordered list.
///
/// When emissions from different hands overlap, the earlier one is cut at
/// the frame before the later one's touch phase and the later one starts no
/// earlier than that touch. An emission cut to nothing is dropped.
pub fn resolve_hand_overlap(left: &[GestureEmission], right: &[GestureEmission]) -> Vec<GestureEmission> {
    let mut all: Vec<GestureEmission> = left.iter().chain(right).copied().collect();
    all.sort_by_key(|e| (e.start, e.hand(), e.end));

    let mut out: Vec<GestureEmission> = Vec::with_capacity(all.len());
    for mut e in all {
        if let Some(prev) = out.last_mut() {
            if prev.end >= e.start {
                if e.touch_start <= prev.start {
                    out.pop();
                } else {
                    prev.end = prev.end.min(e.touch_start - 1);
                    e.start = e.start.max(prev.end + 1);
                }
            }
        }
        out.push(e);
    }
    out
}

/// Labels every frame of a keypoint stream.
pub fn detect_gestures(stream: &[KeypointFrame], params: &FsmParams, fps: f64) -> Result<SegmentSeq> {
    if stream.is_empty() {
        return Err(Error::EmptySequence);
    }
    params.validate()?;
    for (i, frame) in stream.iter().enumerate() {
        frame.validate(i)?;
    }
    let left = detect_hand(stream, Side::Left, params, fps);
    let right = detect_hand(stream, Side::Right, params, fps);
    let runs: Vec<Segment> = resolve_hand_overlap(&left, &right)
        .iter()
        .map(GestureEmission::segment)
        .collect();
    SegmentSeq::from_runs(&runs, stream.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MID: f64 = 0.0;

    /// A static body in shoulder-width units, subject facing the camera.
    fn body() -> KeypointFrame {
        let side = |s: f64| SideLandmarks {
            ear: Point::new(0.3 * s, -0.8),
            shoulder: Point::new(0.5 * s, 0.0),
            hip: Point::new(0.35 * s, 1.4),
            knee: Point::new(0.35 * s, 2.4),
        };
        KeypointFrame {
            left_hand: Point::new(1.0, 1.0),
            right_hand: Point::new(-1.0, 1.0),
            left: side(1.0),
            right: side(-1.0),
            midline_x: MID,
            shoulder_width: 1.0,
        }
    }

    fn with_right(points: &[Point]) -> Vec<KeypointFrame> {
        points
            .iter()
            .map(|&p| KeypointFrame { right_hand: p, ..body() })
            .collect()
    }

    /// Right hand positions at `d` shoulder widths to the outside of the
    /// left landmark for `part`.
    fn beside(part: BodyPart, ds: &[f64]) -> Vec<Point> {
        let lm = body().left.get(part);
        ds.iter().map(|&d| Point::new(lm.x + d, lm.y)).collect()
    }

    #[test]
    fn midline_examples() {
        // Facing: the subject's right hand belongs at smaller x.
        assert!(crossed_midline(Point::new(MID + 1.0, 0.0), MID, Side::Right));
        assert!(!crossed_midline(Point::new(MID - 1.0, 0.0), MID, Side::Right));
        assert!(!crossed_midline(Point::new(MID, 0.0), MID, Side::Right));
        assert!(!crossed_midline(Point::new(MID, 0.0), MID, Side::Left));
        assert!(!crossed_midline(Point::new(MID + 1.0, 0.0), MID, Side::Left));
        // Mirrored streams flip it.
        assert!(Orientation::Mirrored.crossed_midline(MID - 1.0, MID, Side::Right));
        assert!(!Orientation::Mirrored.crossed_midline(MID - 1.0, MID, Side::Left));
    }

    #[test]
    fn single_shoulder_touch() {
        let mut pts = vec![Point::new(-1.0, 1.0); 3];
        pts.extend(beside(BodyPart::Shoulder, &[1.0, 0.4, 0.3, 0.1, 0.05, 0.0, 0.0, 0.1, 0.3, 0.44, 0.8]));
        pts.extend(vec![Point::new(-1.0, 1.0); 3]);
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        let fg: Vec<_> = segs.foreground().copied().collect();
        assert_eq!(fg, vec![Segment::new(Label::Action(ActionClass::Rhls), 4, 12)]);
    }

    #[test]
    fn no_touch_no_emission() {
        let pts = beside(BodyPart::Shoulder, &[1.0, 0.4, 0.3, 0.25, 0.3, 0.4, 1.0]);
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 0);
    }

    #[test]
    fn self_correction_emits_only_final_target() {
        let mut pts = beside(BodyPart::Shoulder, &[1.0, 0.4, 0.3, 0.3]);
        // drift down toward the hip without touching the shoulder
        pts.push(Point::new(0.9, 0.7));
        pts.extend(beside(BodyPart::Hip, &[0.4, 0.2, 0.1, 0.1, 0.3, 0.9]));
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        let fg: Vec<_> = segs.foreground().map(|s| s.label.to_string()).collect();
        assert_eq!(fg, ["rhlh"]);
    }

    #[test]
    fn retarget_while_near_restarts_approach() {
        // Between shoulder and hip in a squashed body, both within r_near.
        let mut frames = with_right(&beside(BodyPart::Shoulder, &[1.0, 0.4, 0.3]));
        let mut b = body();
        b.left.hip = Point::new(0.5, 0.6);
        for f in frames.iter_mut() {
            f.left.hip = b.left.hip;
        }
        for x in [Point::new(0.7, 0.35), Point::new(0.6, 0.55), Point::new(0.5, 0.6), Point::new(1.5, 0.6)] {
            frames.push(KeypointFrame { right_hand: x, ..b });
        }
        let segs = detect_gestures(&frames, &FsmParams::default(), 30.0).unwrap();
        let fg: Vec<_> = segs.foreground().copied().collect();
        assert_eq!(fg.len(), 1);
        assert_eq!(fg[0].label, Label::Action(ActionClass::Rhlh));
        assert_eq!(fg[0].start, 3);
    }

    #[test]
    fn uncrossing_aborts() {
        let mut pts = beside(BodyPart::Ear, &[1.0, 0.2, 0.0]);
        pts.push(Point::new(-0.1, -0.8)); // crosses back while still near
        pts.extend(beside(BodyPart::Ear, &[2.0]));
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 0);
    }

    #[test]
    fn timeout_aborts_and_disarms() {
        let mut ds = vec![1.0, 0.3];
        ds.extend(vec![0.0; 70]);
        ds.push(1.0);
        let segs = detect_gestures(&with_right(&beside(BodyPart::Knee, &ds)), &FsmParams::default(), 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 0);

        let params = FsmParams { max_gesture_frames: Some(100), ..Default::default() };
        let segs = detect_gestures(&with_right(&beside(BodyPart::Knee, &ds)), &params, 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 1);
    }

    #[test]
    fn stream_end_mid_gesture() {
        let pts = beside(BodyPart::Hip, &[1.0, 0.3, 0.0, 0.0]);
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 0);
    }

    #[test]
    fn resting_near_part_never_emits() {
        let pts = beside(BodyPart::Shoulder, &[0.3, 0.1, 0.0, 0.1, 0.3, 0.1, 0.0, 0.2]);
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 0);
    }

    #[test]
    fn one_frame_gesture() {
        let pts = beside(BodyPart::Shoulder, &[1.0, 0.0, 1.0]);
        let segs = detect_gestures(&with_right(&pts), &FsmParams::default(), 30.0).unwrap();
        let fg: Vec<_> = segs.foreground().copied().collect();
        assert_eq!(fg, vec![Segment::new(Label::Action(ActionClass::Rhls), 1, 1)]);
    }

    #[test]
    fn min_touch_frames_requires_consecutive_dwell() {
        let ds = [1.0, 0.3, 0.1, 0.3, 0.1, 0.3, 1.0];
        let params = FsmParams { min_touch_frames: 2, ..Default::default() };
        let segs = detect_gestures(&with_right(&beside(BodyPart::Shoulder, &ds)), &params, 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 0);
        let ds = [1.0, 0.3, 0.1, 0.1, 0.3, 1.0];
        let segs = detect_gestures(&with_right(&beside(BodyPart::Shoulder, &ds)), &params, 30.0).unwrap();
        assert_eq!(segs.foreground().count(), 1);
    }

    fn em(class: ActionClass, start: usize, touch_start: usize, end: usize) -> GestureEmission {
        GestureEmission { class, start, touch_start, end }
    }

    #[test]
    fn overlap_disjoint_is_concatenation() {
        let l = [em(ActionClass::Lhre, 20, 22, 30)];
        let r = [em(ActionClass::Rhls, 2, 3, 10), em(ActionClass::Rhlk, 40, 41, 45)];
        let out = resolve_hand_overlap(&l, &r);
        let starts: Vec<_> = out.iter().map(|e| e.start).collect();
        assert_eq!(starts, [2, 20, 40]);
        assert_eq!(out[1], l[0]);
    }

    #[test]
    fn overlap_truncates_earlier() {
        let l = [em(ActionClass::Lhre, 10, 12, 40)];
        let r = [em(ActionClass::Rhls, 30, 35, 60)];
        let out = resolve_hand_overlap(&l, &r);
        assert_eq!((out[0].start, out[0].end), (10, 34));
        assert_eq!((out[1].start, out[1].end), (35, 60));
    }

    #[test]
    fn overlap_drops_fully_preempted() {
        let l = [em(ActionClass::Lhre, 10, 12, 40)];
        let r = [em(ActionClass::Rhls, 10, 10, 20)];
        let out = resolve_hand_overlap(&l, &r);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].class, ActionClass::Rhls);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(detect_gestures(&[], &FsmParams::default(), 30.0), Err(Error::EmptySequence)));
        let bad = FsmParams { r_touch: 0.5, ..Default::default() };
        assert!(detect_gestures(&[body()], &bad, 30.0).is_err());
        let frame = KeypointFrame { shoulder_width: 0.0, ..body() };
        assert!(detect_gestures(&[frame], &FsmParams::default(), 30.0).is_err());
    }
}
