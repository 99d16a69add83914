//! Readers and writers for every on-disk artifact.
//!
//! Formats:
//! - label files: one token per line, newline-terminated, no header;
//! - session manifests: JSON documents;
//! - score sheets: `subject_id,task_id,accuracy,rhythm[,slots]`;
//! - fold files: `fold,subject_id`;
//! - keypoint streams: one CSV row per frame, columns addressed by header.
//!
//! Writers are byte-stable: rows sorted by key, scores with 2 fractional
//! digits, coordinates with 4.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsm::{KeypointFrame, Point};
use crate::model::{BodyPart, FrameLabelSeq, Label, Side};
use crate::scoring::{score_session, InstructionEvent, ScoringParams, SessionScore, TaskId, TouchEvent};

// ---------------------------------------------------------------------------
// Label files

/// Which tokens a label file may contain.
#[derive(Debug, Clone, Default)]
pub struct LabelVocabulary {
    /// Also accept bare part tokens (`ear`, `shoulder`, ...).
    pub allow_parts: bool,
    /// Extra spellings mapped onto canonical labels, e.g. `background` → `BG`.
    pub aliases: HashMap<String, Label>,
}

impl LabelVocabulary {
    pub fn with_parts() -> Self {
        LabelVocabulary { allow_parts: true, ..Default::default() }
    }

    pub fn alias(mut self, token: impl Into<String>, label: Label) -> Self {
        self.aliases.insert(token.into(), label);
        self
    }

    fn resolve(&self, token: &str) -> Option<Label> {
        if let Some(&l) = self.aliases.get(token) {
            return Some(l);
        }
        match token.parse::<Label>() {
            Ok(Label::Part(_)) if !self.allow_parts => None,
            Ok(l) => Some(l),
            Err(_) => None,
        }
    }
}

pub fn load_frame_labels(text: &str, fps: f64, vocab: &LabelVocabulary) -> Result<FrameLabelSeq> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if body.is_empty() {
        return Err(Error::EmptySequence);
    }
    let labels = body
        .split('\n')
        .enumerate()
        .map(|(i, line)| {
            let token = line.strip_suffix('\r').unwrap_or(line);
            vocab.resolve(token).ok_or_else(|| Error::UnknownLabel {
                line: i + 1,
                token: token.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FrameLabelSeq::new(labels, fps)
}

pub fn write_frame_labels(seq: &FrameLabelSeq) -> String {
    let mut out = String::with_capacity(seq.len() * 5);
    for l in seq.labels() {
        out.push_str(l.as_str());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Manifests

/// Everything needed to score one recorded session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionManifest {
    pub session_id: String,
    pub subject_id: String,
    pub task_id: TaskId,
    pub fps: f64,
    /// Ground-truth label file, relative to the manifest.
    pub gt: String,
    /// Predicted label file, relative to the manifest.
    pub pred: String,
    pub instructions: Vec<InstructionEvent>,
}

impl SessionManifest {
    pub fn validate(&self) -> Result<()> {
        if self.session_id.is_empty() {
            return Err(Error::schema("session_id", "must not be empty"));
        }
        if self.subject_id.is_empty() {
            return Err(Error::schema("subject_id", "must not be empty"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidFps(self.fps));
        }
        for (i, ins) in self.instructions.iter().enumerate() {
            if !(ins.t.is_finite() && ins.t >= 0.0) {
                return Err(Error::schema(format!("instructions[{i}].t"), "must be a non-negative number"));
            }
        }
        for (i, w) in self.instructions.windows(2).enumerate() {
            if w[1].t <= w[0].t {
                return Err(Error::schema(
                    format!("instructions[{}].t", i + 1),
                    "non-increasing instruction times",
                ));
            }
        }
        Ok(())
    }

    /// Checks the instruction timeline fits in a video of `frames` frames.
    pub fn check_duration(&self, frames: usize) -> Result<()> {
        let duration = frames as f64 / self.fps;
        match self.instructions.iter().position(|i| i.t > duration) {
            Some(i) => Err(Error::schema(
                format!("instructions[{i}].t"),
                format!("{} s is past the end of the {duration:.3} s video", self.instructions[i].t),
            )),
            None => Ok(()),
        }
    }

    pub fn score(&self, events: &[TouchEvent], params: &ScoringParams) -> SessionScore {
        score_session(events, self.task_id, &self.instructions, params)
    }
}

/// Parses and validates a manifest. Errors carry line/column or field path.
pub fn load_manifest(text: &str) -> Result<SessionManifest> {
    let m: SessionManifest = serde_json::from_str(text).map_err(|e| {
        let msg = e.to_string();
        // "... at line L column C" is already part of serde_json's message.
        Error::schema("manifest", msg)
    })?;
    m.validate()?;
    Ok(m)
}

pub fn write_manifest(m: &SessionManifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// Score sheets

/// One row of a human or machine score table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRow {
    pub accuracy: f64,
    pub rhythm: f64,
    /// Instruction count; only machine tables carry it.
    pub slots: Option<u32>,
}

pub type ScoreKey = (String, TaskId);

/// Scores keyed by (subject, task); iteration order is the sorted key order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSheet {
    pub rows: BTreeMap<ScoreKey, ScoreRow>,
}

impl ScoreSheet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

const HUMAN_HEADER: [&str; 4] = ["subject_id", "task_id", "accuracy", "rhythm"];
const MACHINE_HEADER: [&str; 5] = ["subject_id", "task_id", "accuracy", "rhythm", "slots"];

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn record_line(r: &csv::StringRecord) -> usize {
    r.position().map_or(0, |p| p.line() as usize)
}

fn csv_error(e: csv::Error) -> Error {
    let loc = e.position().map_or_else(|| "table".to_string(), |p| format!("line {}", p.line()));
    Error::schema(loc, e.to_string())
}

fn parse_field<T: std::str::FromStr>(r: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = r.get(idx).unwrap_or("");
    raw.parse().map_err(|_| {
        Error::schema(format!("line {}", record_line(r)), format!("invalid {name} {raw:?}"))
    })
}

/// Reads a score table. The `slots` column is optional, so the same reader
/// accepts both human and machine tables.
pub fn load_scores(text: &str) -> Result<ScoreSheet> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = header.iter().collect();
    let with_slots = if names == HUMAN_HEADER {
        false
    } else if names == MACHINE_HEADER {
        true
    } else {
        return Err(Error::schema(
            "line 1",
            format!("expected header {:?} or {:?}", HUMAN_HEADER.join(","), MACHINE_HEADER.join(",")),
        ));
    };

    let mut sheet = ScoreSheet::default();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let subject: String = rec.get(0).unwrap_or("").to_string();
        if subject.is_empty() {
            return Err(Error::schema(format!("line {line}"), "empty subject_id"));
        }
        let task_raw: i64 = parse_field(&rec, 1, "task_id")?;
        let task = TaskId::new(task_raw).map_err(|e| Error::schema(format!("line {line}"), e.to_string()))?;
        let accuracy: f64 = parse_field(&rec, 2, "accuracy")?;
        let rhythm: f64 = parse_field(&rec, 3, "rhythm")?;
        for (name, v) in [("accuracy", accuracy), ("rhythm", rhythm)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::schema(format!("line {line}"), format!("negative or invalid {name} {v}")));
            }
        }
        let slots = if with_slots { Some(parse_field(&rec, 4, "slots")?) } else { None };
        let key = (subject, task);
        if sheet.rows.contains_key(&key) {
            return Err(Error::schema(
                format!("line {line}"),
                format!("duplicate row for subject {} task {}", key.0, key.1),
            ));
        }
        sheet.rows.insert(key, ScoreRow { accuracy, rhythm, slots });
    }
    Ok(sheet)
}

pub fn load_human_scores(text: &str) -> Result<ScoreSheet> {
    load_scores(text)
}

/// Writes a human table, or a machine table when every row carries slots.
pub fn write_scores(sheet: &ScoreSheet) -> String {
    let with_slots = !sheet.is_empty() && sheet.rows.values().all(|r| r.slots.is_some());
    let mut out = if with_slots { MACHINE_HEADER.join(",") } else { HUMAN_HEADER.join(",") };
    out.push('\n');
    for ((subject, task), row) in &sheet.rows {
        out.push_str(&format!("{subject},{task},{:.2},{:.2}", row.accuracy, row.rhythm));
        if with_slots {
            out.push_str(&format!(",{}", row.slots.unwrap_or(0)));
        }
        out.push('\n');
    }
    out
}

pub fn write_human_scores(sheet: &ScoreSheet) -> String {
    let stripped = ScoreSheet {
        rows: sheet
            .rows
            .iter()
            .map(|(k, r)| (k.clone(), ScoreRow { slots: None, ..*r }))
            .collect(),
    };
    write_scores(&stripped)
}

// ---------------------------------------------------------------------------
// Folds

/// Subject-disjoint test folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSet {
    pub folds: Vec<BTreeSet<String>>,
}

impl FoldSet {
    pub fn fold_of(&self, subject: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(subject))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds.iter().map(BTreeSet::len).collect()
    }
}

/// Sorts and de-duplicates subjects, shuffles them with a seeded generator,
/// then deals them round-robin into `k` folds.
pub fn make_folds<S: AsRef<str>>(subject_ids: &[S], k: usize, seed: u64) -> Result<FoldSet> {
    let mut subjects: Vec<String> = subject_ids.iter().map(|s| s.as_ref().to_string()).collect();
    subjects.sort();
    subjects.dedup();
    if k < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 folds, got {k}")));
    }
    if k > subjects.len() {
        return Err(Error::InvalidParams(format!(
            "{k} folds requested for {} subjects",
            subjects.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    subjects.shuffle(&mut rng);
    let mut folds = vec![BTreeSet::new(); k];
    for (i, s) in subjects.into_iter().enumerate() {
        folds[i % k].insert(s);
    }
    Ok(FoldSet { folds })
}

pub fn write_folds(folds: &FoldSet) -> String {
    let mut out = String::from("fold,subject_id\n");
    for (i, f) in folds.folds.iter().enumerate() {
        for s in f {
            out.push_str(&format!("{i},{s}\n"));
        }
    }
    out
}

pub fn load_folds(text: &str) -> Result<FoldSet> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != ["fold", "subject_id"] {
        return Err(Error::schema("line 1", "expected header \"fold,subject_id\""));
    }
    let mut folds: Vec<BTreeSet<String>> = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = record_line(&rec);
        let fold: usize = parse_field(&rec, 0, "fold")?;
        let subject = rec.get(1).unwrap_or("").to_string();
        if subject.is_empty() {
            return Err(Error::schema(format!("line {line}"), "empty subject_id"));
        }
        if !seen.insert(subject.clone()) {
            return Err(Error::schema(format!("line {line}"), format!("subject {subject} in two folds")));
        }
        if folds.len() <= fold {
            folds.resize(fold + 1, BTreeSet::new());
        }
        folds[fold].insert(subject);
    }
    if let Some(i) = folds.iter().position(BTreeSet::is_empty) {
        return Err(Error::schema("folds", format!("fold {i} has no subjects")));
    }
    Ok(FoldSet { folds })
}

// ---------------------------------------------------------------------------
// Keypoint streams

fn keypoint_columns() -> Vec<String> {
    let mut cols = Vec::new();
    for hand in ["left_hand", "right_hand"] {
        cols.push(format!("{hand}_x"));
        cols.push(format!("{hand}_y"));
    }
    for side in [Side::Left, Side::Right] {
        for part in BodyPart::ALL {
            cols.push(format!("{}_{}_x", side.as_str(), part.as_str()));
            cols.push(format!("{}_{}_y", side.as_str(), part.as_str()));
        }
    }
    cols.push("midline_x".into());
    cols.push("shoulder_width".into());
    cols
}

fn frame_values(f: &KeypointFrame) -> Vec<f64> {
    let mut v = vec![f.left_hand.x, f.left_hand.y, f.right_hand.x, f.right_hand.y];
    for side in [Side::Left, Side::Right] {
        for part in BodyPart::ALL {
            let p = f.landmarks(side).get(part);
            v.push(p.x);
            v.push(p.y);
        }
    }
    v.push(f.midline_x);
    v.push(f.shoulder_width);
    v
}

fn frame_from_values(v: &[f64]) -> KeypointFrame {
    let mut f = KeypointFrame {
        left_hand: Point::new(v[0], v[1]),
        right_hand: Point::new(v[2], v[3]),
        midline_x: v[20],
        shoulder_width: v[21],
        ..Default::default()
    };
    let mut i = 4;
    for side in [Side::Left, Side::Right] {
        for part in BodyPart::ALL {
            let lm = match side {
                Side::Left => &mut f.left,
                Side::Right => &mut f.right,
            };
            *lm.get_mut(part) = Point::new(v[i], v[i + 1]);
            i += 2;
        }
    }
    f
}

pub fn write_keypoints(stream: &[KeypointFrame]) -> String {
    let mut out = keypoint_columns().join(",");
    out.push('\n');
    for f in stream {
        let row: Vec<String> = frame_values(f).iter().map(|v| format!("{v:.4}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Reads a keypoint stream; columns may appear in any order.
pub fn load_keypoints(text: &str) -> Result<Vec<KeypointFrame>> {
    let mut rdr = csv_reader(text);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let cols = keypoint_columns();
    let order = cols
        .iter()
        .map(|c| {
            index
                .get(c.as_str())
                .copied()
                .ok_or_else(|| Error::schema("line 1", format!("missing column {c}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut frames = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let values = order
            .iter()
            .zip(&cols)
            .map(|(&i, name)| parse_field::<f64>(&rec, i, name))
            .collect::<Result<Vec<_>>>()?;
        frames.push(frame_from_values(&values));
    }
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(frames)
}
