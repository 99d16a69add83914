//! Class taxonomy, frame-label sequences and segments.
//!
//! Action codes are four letters: hand side, `h`, body-part side, body part.
//! `rhls` reads "right hand, left shoulder". Every action is cross-body, so
//! the part side is always opposite the hand side.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default frame rate of the recording stream.
pub const DEFAULT_FPS: f64 = 30.0;

/// Token used for background frames.
pub const BACKGROUND: &str = "BG";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    fn letter(self) -> char {
        match self {
            Side::Left => 'l',
            Side::Right => 'r',
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyPart {
    Ear,
    Shoulder,
    Hip,
    Knee,
}

impl BodyPart {
    pub const ALL: [BodyPart; 4] = [BodyPart::Ear, BodyPart::Shoulder, BodyPart::Hip, BodyPart::Knee];

    pub fn as_str(self) -> &'static str {
        match self {
            BodyPart::Ear => "ear",
            BodyPart::Shoulder => "shoulder",
            BodyPart::Hip => "hip",
            BodyPart::Knee => "knee",
        }
    }

    fn letter(self) -> char {
        match self {
            BodyPart::Ear => 'e',
            BodyPart::Shoulder => 's',
            BodyPart::Hip => 'h',
            BodyPart::Knee => 'k',
        }
    }
}

impl fmt::Display for BodyPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BodyPart {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ear" => Ok(BodyPart::Ear),
            "shoulder" => Ok(BodyPart::Shoulder),
            "hip" => Ok(BodyPart::Hip),
            "knee" => Ok(BodyPart::Knee),
            _ => Err(Error::InvalidPart(s.to_string())),
        }
    }
}

/// One of the eight cross-body touch classes, in taxonomy index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionClass {
    Lhre,
    Rhle,
    Lhrs,
    Rhls,
    Lhrh,
    Rhlh,
    Lhrk,
    Rhlk,
}

impl ActionClass {
    pub const ALL: [ActionClass; 8] = [
        ActionClass::Lhre,
        ActionClass::Rhle,
        ActionClass::Lhrs,
        ActionClass::Rhls,
        ActionClass::Lhrh,
        ActionClass::Rhlh,
        ActionClass::Lhrk,
        ActionClass::Rhlk,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            ActionClass::Lhre => "lhre",
            ActionClass::Rhle => "rhle",
            ActionClass::Lhrs => "lhrs",
            ActionClass::Rhls => "rhls",
            ActionClass::Lhrh => "lhrh",
            ActionClass::Rhlh => "rhlh",
            ActionClass::Lhrk => "lhrk",
            ActionClass::Rhlk => "rhlk",
        }
    }

    pub fn hand(self) -> Side {
        if self.index().is_multiple_of(2) {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn part(self) -> BodyPart {
        BodyPart::ALL[self.index() / 2]
    }

    /// Side of the body the touched part is on.
    pub fn part_side(self) -> Side {
        self.hand().opposite()
    }

    /// The class for a given hand touching the contralateral `part`.
    pub fn from_hand_part(hand: Side, part: BodyPart) -> ActionClass {
        let base = BodyPart::ALL.iter().position(|&p| p == part).unwrap_or(0) * 2;
        ActionClass::ALL[base + usize::from(hand == Side::Right)]
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ActionClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActionClass::ALL
            .iter()
            .copied()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Decodes an action code into `(hand side, body part, part side)`.
pub fn decode_class(code: &str) -> Result<(Side, BodyPart, Side)> {
    let class: ActionClass = code.parse()?;
    debug_assert_eq!(
        format!("{}h{}{}", class.hand().letter(), class.part_side().letter(), class.part().letter()),
        code
    );
    Ok((class.hand(), class.part(), class.part_side()))
}

/// A per-frame label token.
///
/// `Part` only appears after set-level relabelling, where the hand and side
/// are collapsed and only the touched body part is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Background,
    Action(ActionClass),
    Part(BodyPart),
}

impl Label {
    pub fn is_background(self) -> bool {
        matches!(self, Label::Background)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Background => BACKGROUND,
            Label::Action(a) => a.code(),
            Label::Part(p) => p.as_str(),
        }
    }

    /// The touched body part, if any.
    pub fn body_part(self) -> Option<BodyPart> {
        match self {
            Label::Background => None,
            Label::Action(a) => Some(a.part()),
            Label::Part(p) => Some(p),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    /// Accepts action codes, bare part tokens and `BG`.
    fn from_str(s: &str) -> Result<Self> {
        if s == BACKGROUND {
            return Ok(Label::Background);
        }
        if let Ok(a) = s.parse::<ActionClass>() {
            return Ok(Label::Action(a));
        }
        s.parse::<BodyPart>()
            .map(Label::Part)
            .map_err(|_| Error::UnknownClass(s.to_string()))
    }
}

fn check_fps(fps: f64) -> Result<()> {
    if fps.is_finite() && fps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidFps(fps))
    }
}

/// Frame-level labels of one video at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLabelSeq {
    labels: Vec<Label>,
    fps: f64,
}

impl FrameLabelSeq {
    pub fn new(labels: Vec<Label>, fps: f64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptySequence);
        }
        check_fps(fps)?;
        Ok(FrameLabelSeq { labels, fps })
    }

    /// Parses whitespace-free tokens; convenient in tests and fixtures.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S], fps: f64) -> Result<Self> {
        let labels = tokens
            .iter()
            .map(|t| t.as_ref().parse())
            .collect::<Result<Vec<Label>>>()?;
        Self::new(labels, fps)
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Timestamp of frame `i` in seconds.
    pub fn time_of(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }

    pub fn duration_seconds(&self) -> f64 {
        self.labels.len() as f64 / self.fps
    }

    pub fn tokens(&self) -> Vec<&'static str> {
        self.labels.iter().map(|l| l.as_str()).collect()
    }
}

/// A run of frames `[start, end]` (inclusive) sharing one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub label: Label,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn new(label: Label, start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Segment { label, start, end }
    }

    pub fn duration_frames(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn duration_seconds(&self, fps: f64) -> f64 {
        self.duration_frames() as f64 / fps
    }

    /// Frame-level intersection over union.
    pub fn iou(&self, other: &Segment) -> f64 {
        let lo = self.start.max(other.start);
        let hi = self.end.min(other.end);
        if hi < lo {
            return 0.0;
        }
        let inter = hi - lo + 1;
        let union = self.duration_frames() + other.duration_frames() - inter;
        inter as f64 / union as f64
    }
}

/// Maximal constant-label runs covering every frame of a video.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSeq {
    segments: Vec<Segment>,
}

impl SegmentSeq {
    /// Validates contiguity from frame 0 and maximality.
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        let first = segments.first().ok_or(Error::EmptySequence)?;
        if first.start != 0 {
            return Err(Error::NonContiguous(format!("first segment starts at frame {}", first.start)));
        }
        for s in &segments {
            if s.start > s.end {
                return Err(Error::NonContiguous(format!("segment {}..{} is reversed", s.start, s.end)));
            }
        }
        for w in segments.windows(2) {
            if w[1].start != w[0].end + 1 {
                return Err(Error::NonContiguous(format!(
                    "segment ending at {} followed by segment starting at {}",
                    w[0].end, w[1].start
                )));
            }
            if w[0].label == w[1].label {
                return Err(Error::NonMaximal(w[0].start, w[1].start));
            }
        }
        Ok(SegmentSeq { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Number of frames covered.
    pub fn frame_count(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end + 1)
    }

    pub fn foreground(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| !s.label.is_background())
    }

    pub fn into_inner(self) -> Vec<Segment> {
        self.segments
    }
}

/// Run-length encodes a frame-label sequence.
pub fn segments_from_frames(seq: &FrameLabelSeq) -> SegmentSeq {
    let labels = seq.labels();
    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..=labels.len() {
        if i == labels.len() || labels[i] != labels[start] {
            segments.push(Segment::new(labels[start], start, i - 1));
            start = i;
        }
    }
    SegmentSeq { segments }
}

/// Expands segments back to frames, validating the segment invariants.
pub fn frames_from_segments(segments: &[Segment], fps: f64) -> Result<FrameLabelSeq> {
    let segs = SegmentSeq::new(segments.to_vec())?;
    expand(&segs, fps)
}

pub(crate) fn expand(segs: &SegmentSeq, fps: f64) -> Result<FrameLabelSeq> {
    let mut labels = Vec::with_capacity(segs.frame_count());
    for s in segs.segments() {
        labels.extend(std::iter::repeat_n(s.label, s.duration_frames()));
    }
    FrameLabelSeq::new(labels, fps)
}

impl SegmentSeq {
    pub fn to_frames(&self, fps: f64) -> Result<FrameLabelSeq> {
        expand(self, fps)
    }

    /// Builds a maximal cover of `[0, frames)` from possibly non-maximal
    /// runs, filling gaps with background and merging equal neighbours.
    pub fn from_runs(runs: &[Segment], frames: usize) -> Result<Self> {
        if frames == 0 {
            return Err(Error::EmptySequence);
        }
        let mut labels = vec![Label::Background; frames];
        for r in runs {
            if r.end >= frames || r.start > r.end {
                return Err(Error::NonContiguous(format!(
                    "run {}..{} outside 0..{}",
                    r.start, r.end, frames
                )));
            }
            labels[r.start..=r.end].fill(r.label);
        }
        let seq = FrameLabelSeq { labels, fps: DEFAULT_FPS };
        Ok(segments_from_frames(&seq))
    }
}

/// Collapses action codes to bare part tokens for the parts in `parts`;
/// every other action becomes background.
pub fn relabel_set_level(seq: &FrameLabelSeq, parts: &BTreeSet<BodyPart>) -> FrameLabelSeq {
    let labels = seq
        .labels()
        .iter()
        .map(|&l| match l.body_part() {
            Some(p) if parts.contains(&p) => Label::Part(p),
            _ => Label::Background,
        })
        .collect();
    FrameLabelSeq { labels, fps: seq.fps }
}
