//! Accuracy and rhythm scoring of a session from its touch events and
//! instruction timeline.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BodyPart, Label, Segment, SegmentSeq, Side};

/// Slack for comparing frame times against instruction times.
const TIME_EPS: f64 = 1e-9;

/// One of the five task variants, 1 through 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct TaskId(u8);

impl TaskId {
    pub const ALL: [TaskId; 5] = [TaskId(1), TaskId(2), TaskId(3), TaskId(4), TaskId(5)];

    pub fn new(id: i64) -> Result<Self> {
        if (1..=5).contains(&id) {
            Ok(TaskId(id as u8))
        } else {
            Err(Error::InvalidTask(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Expected body part for an announced one under this task's rule.
    pub fn expected_part(self, announced: BodyPart) -> BodyPart {
        use BodyPart::*;
        let swap_ear_knee = matches!(self.0, 3 | 5);
        let swap_shoulder_hip = matches!(self.0, 4 | 5);
        match announced {
            Ear if swap_ear_knee => Knee,
            Knee if swap_ear_knee => Ear,
            Shoulder if swap_shoulder_hip => Hip,
            Hip if swap_shoulder_hip => Shoulder,
            p => p,
        }
    }
}

impl TryFrom<i64> for TaskId {
    type Error = Error;

    fn try_from(v: i64) -> Result<Self> {
        TaskId::new(v)
    }
}

impl From<TaskId> for i64 {
    fn from(t: TaskId) -> i64 {
        t.0 as i64
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Maps an announced body part to the part the subject must touch.
pub fn apply_task_rule(task_id: i64, announced: BodyPart) -> Result<BodyPart> {
    Ok(TaskId::new(task_id)?.expected_part(announced))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstructionEvent {
    pub t: f64,
    pub part: BodyPart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TouchEvent {
    pub part: BodyPart,
    /// `None` once labels were collapsed to bare parts.
    pub hand: Option<Side>,
    pub onset: f64,
    pub offset: f64,
    pub segment: Segment,
}

impl TouchEvent {
    fn time(&self, at: TouchTime) -> f64 {
        match at {
            TouchTime::Onset => self.onset,
            TouchTime::Midpoint => 0.5 * (self.onset + self.offset),
        }
    }
}

/// One touch event per non-background segment.
pub fn extract_touch_events(segs: &SegmentSeq, fps: f64) -> Vec<TouchEvent> {
    segs.foreground()
        .filter_map(|s| {
            let (part, hand) = match s.label {
                Label::Action(a) => (a.part(), Some(a.hand())),
                Label::Part(p) => (p, None),
                Label::Background => return None,
            };
            Some(TouchEvent {
                part,
                hand,
                onset: s.start as f64 / fps,
                offset: s.end as f64 / fps,
                segment: *s,
            })
        })
        .collect()
}

/// Which instant of a touch segment counts as the touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TouchTime {
    #[default]
    Onset,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    /// Longest response window in seconds.
    pub w_max: f64,
    /// Touches within this many seconds of the instruction earn rhythm.
    pub rhythm_window: f64,
    pub touch_time: TouchTime,
    /// Require each matched touch to use the other hand from the previous one.
    pub strict_alternation: bool,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            w_max: 2.0,
            rhythm_window: 1.0,
            touch_time: TouchTime::Onset,
            strict_alternation: false,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.w_max > 0.0 && self.w_max.is_finite()) {
            return Err(Error::InvalidParams(format!("w_max must be positive, got {}", self.w_max)));
        }
        if !(self.rhythm_window >= 0.0 && self.rhythm_window.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "rhythm window must be non-negative, got {}",
                self.rhythm_window
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub instruction: InstructionEvent,
    pub expected: BodyPart,
    /// Index into the event list of the touch that filled this slot.
    pub matched: Option<usize>,
    pub within_rhythm: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionScore {
    pub accuracy: u32,
    pub rhythm: u32,
    pub slots: Vec<SlotRecord>,
}

/// Scores one session.
///
/// Instruction `i` owns the window `[t_i, min(t_{i+1}, t_i + w_max))`. The
/// earliest unused touch of the expected part inside the window fills the
/// slot and earns accuracy; it also earns rhythm when it lands within
/// `rhythm_window` seconds of the instruction.
pub fn score_session(
    events: &[TouchEvent],
    task: TaskId,
    instructions: &[InstructionEvent],
    params: &ScoringParams,
) -> SessionScore {
    let mut used = vec![false; events.len()];
    let mut last_hand: Option<Side> = None;
    let mut score = SessionScore { accuracy: 0, rhythm: 0, slots: Vec::with_capacity(instructions.len()) };

    for (i, ins) in instructions.iter().enumerate() {
        let expected = task.expected_part(ins.part);
        let mut end = ins.t + params.w_max;
        if let Some(next) = instructions.get(i + 1) {
            end = end.min(next.t);
        }
        let hit = events
            .iter()
            .enumerate()
            .filter(|(j, e)| {
                let t = e.time(params.touch_time);
                !used[*j] && e.part == expected && t >= ins.t - TIME_EPS && t < end - TIME_EPS
            })
            .filter(|(_, e)| {
                !params.strict_alternation || last_hand.is_none() || e.hand.is_none() || e.hand != last_hand
            })
            .min_by(|a, b| a.1.time(params.touch_time).total_cmp(&b.1.time(params.touch_time)))
            .map(|(j, _)| j);

        let mut within_rhythm = false;
        if let Some(j) = hit {
            used[j] = true;
            score.accuracy += 1;
            if events[j].hand.is_some() {
                last_hand = events[j].hand;
            }
            if events[j].time(params.touch_time) <= ins.t + params.rhythm_window + TIME_EPS {
                within_rhythm = true;
                score.rhythm += 1;
            }
        }
        score.slots.push(SlotRecord { instruction: *ins, expected, matched: hit, within_rhythm });
    }
    score
}

/// Summed scores for one subject and task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScoreTotals {
    pub accuracy: u32,
    pub rhythm: u32,
    pub slots: u32,
}

impl ScoreTotals {
    pub fn add(&mut self, other: ScoreTotals) {
        self.accuracy += other.accuracy;
        self.rhythm += other.rhythm;
        self.slots += other.slots;
    }
}

/// A scored session tagged with who performed it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedScore {
    pub session_id: String,
    pub subject_id: String,
    pub task: TaskId,
    pub score: SessionScore,
}

impl TaggedScore {
    pub fn totals(&self) -> ScoreTotals {
        ScoreTotals {
            accuracy: self.score.accuracy,
            rhythm: self.score.rhythm,
            slots: self.score.slots.len() as u32,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateScores {
    pub by_task: BTreeMap<(String, TaskId), ScoreTotals>,
    pub by_subject: BTreeMap<String, ScoreTotals>,
}

/// Sums session scores per (subject, task) and per subject.
pub fn aggregate_scores(sessions: &[TaggedScore]) -> AggregateScores {
    let mut agg = AggregateScores::default();
    for s in sessions {
        agg.by_task
            .entry((s.subject_id.clone(), s.task))
            .or_default()
            .add(s.totals());
        agg.by_subject.entry(s.subject_id.clone()).or_default().add(s.totals());
    }
    agg
}
