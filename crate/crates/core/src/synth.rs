//! Seeded synthetic sessions: instruction timelines, ground-truth labels,
//! corrupted predictions and keypoint trajectories that replay the labels.

use rand::seq::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::fsm::{FsmParams, KeypointFrame, Point, SideLandmarks};
use crate::ingest::SessionManifest;
use crate::model::{segments_from_frames, ActionClass, BodyPart, FrameLabelSeq, Label, Segment, Side};
use crate::scoring::{InstructionEvent, TaskId};

/// Per-class touch duration in seconds: (min, max, mean), taxonomy order.
pub const CLASS_DURATIONS: [(f64, f64, f64); 8] = [
    (0.03, 0.93, 0.21),
    (0.03, 0.90, 0.23),
    (0.03, 1.17, 0.20),
    (0.03, 0.87, 0.20),
    (0.03, 1.37, 0.25),
    (0.03, 1.00, 0.24),
    (0.03, 0.83, 0.19),
    (0.03, 0.87, 0.21),
];

/// Shortest and longest whole-frame durations inside the class range.
pub fn duration_frames(class: ActionClass, fps: f64) -> (usize, usize) {
    let (lo, hi, _) = CLASS_DURATIONS[class.index()];
    let min = ((lo * fps) - 1e-9).ceil().max(1.0) as usize;
    let max = ((hi * fps) + 1e-9).floor() as usize;
    (min, max.max(min))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InstructionCount {
    Fixed(usize),
    /// Two or three instructions, three with probability 0.7 (mean 2.7).
    Typical,
}

/// When the subject responds relative to each instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseTiming {
    /// Within the rhythm window.
    #[default]
    Prompt,
    /// After the rhythm window but inside the response window.
    Late,
}

/// Subject mistakes planted into the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Behavior {
    /// Skip the touch entirely.
    pub miss_p: f64,
    /// Touch the wrong body part.
    pub wrong_part_p: f64,
}

/// Prediction corruption applied by [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct NoiseParams {
    /// Standard deviation of boundary shifts, in frames.
    pub boundary_jitter_sd: f64,
    pub class_confusion_p: f64,
    pub oversegmentation_p: f64,
    pub deletion_p: f64,
}

impl NoiseParams {
    pub fn is_zero(&self) -> bool {
        *self == NoiseParams::default()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.boundary_jitter_sd >= 0.0 && self.boundary_jitter_sd.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "boundary jitter sd must be non-negative, got {}",
                self.boundary_jitter_sd
            )));
        }
        check_prob("class_confusion_p", self.class_confusion_p)?;
        check_prob("oversegmentation_p", self.oversegmentation_p)?;
        check_prob("deletion_p", self.deletion_p)
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("{name} must be in [0, 1], got {p}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub session_id: String,
    pub subject_id: String,
    pub task_id: TaskId,
    pub fps: f64,
    /// Clip length range in seconds.
    pub video_len_s: (f64, f64),
    pub instructions: InstructionCount,
    /// Time of the first instruction.
    pub lead_s: f64,
    /// Room left after the final instruction; matches the scorer's window.
    pub w_max: f64,
    pub rhythm_window: f64,
    pub timing: ResponseTiming,
    pub behavior: Behavior,
    /// When set, a keypoint stream is synthesized for these detector settings.
    pub keypoints: Option<FsmParams>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            seed: 0,
            session_id: "s0000".into(),
            subject_id: "S01".into(),
            task_id: TaskId::ALL[0],
            fps: 30.0,
            video_len_s: (3.1, 3.6),
            instructions: InstructionCount::Typical,
            lead_s: 0.2,
            w_max: 2.0,
            rhythm_window: 1.0,
            timing: ResponseTiming::Prompt,
            behavior: Behavior::default(),
            keypoints: None,
        }
    }
}

impl GenParams {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.video_len_s;
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidFps(self.fps));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::InvalidParams(format!("bad video length range [{lo}, {hi}]")));
        }
        if matches!(self.instructions, InstructionCount::Fixed(0)) {
            return Err(Error::InvalidParams("at least one instruction is required".into()));
        }
        check_prob("miss_p", self.behavior.miss_p)?;
        check_prob("wrong_part_p", self.behavior.wrong_part_p)?;
        if let Some(f) = &self.keypoints {
            f.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub manifest: SessionManifest,
    pub gt: FrameLabelSeq,
    /// (accuracy, rhythm) the clean ground truth must score.
    pub planted: (u32, u32),
    pub keypoints: Option<Vec<KeypointFrame>>,
}

fn infeasible(what: impl Into<String>) -> Error {
    Error::InvalidParams(format!("infeasible session: {}", what.into()))
}

/// Generates one session.
///
/// Instructions are evenly spaced from `lead_s` to `w_max` before the clip
/// end and all announce one body part. Each performed touch alternates hands,
/// starts inside its instruction's response window, ends before the next
/// window opens, and lasts a whole number of frames inside its class's
/// duration range.
pub fn gen_session(params: &GenParams) -> Result<SynthSession> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let fps = params.fps;

    let len_s = rng.random_range(params.video_len_s.0..=params.video_len_s.1);
    let frames = (len_s * fps).round() as usize;
    let n = match params.instructions {
        InstructionCount::Fixed(n) => n,
        InstructionCount::Typical => {
            if rng.random_bool(0.7) {
                3
            } else {
                2
            }
        }
    };

    let last = frames as f64 / fps - params.w_max;
    if last < params.lead_s {
        return Err(infeasible(format!(
            "{:.3} s clip leaves no room for instructions with w_max {}",
            frames as f64 / fps,
            params.w_max
        )));
    }
    let spacing = if n > 1 { (last - params.lead_s) / (n - 1) as f64 } else { 0.0 };
    let times: Vec<f64> = (0..n)
        .map(|i| ((params.lead_s + i as f64 * spacing) * 1000.0).floor() / 1000.0)
        .collect();
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(infeasible("instructions collapse onto the same millisecond"));
    }

    let announced = *BodyPart::ALL.choose(&mut rng).expect("parts");
    let expected = params.task_id.expected_part(announced);
    let instructions: Vec<InstructionEvent> = times.iter().map(|&t| InstructionEvent { t, part: announced }).collect();

    // Frame bounds per slot.
    let first_frame = |t: f64| (t * fps - 1e-6).ceil().max(0.0) as usize;
    let rhythm_last = |t: f64| ((t + params.rhythm_window) * fps + 1e-6).floor() as usize;
    let earliest_onset = |i: usize| match params.timing {
        ResponseTiming::Prompt => first_frame(times[i]),
        ResponseTiming::Late => first_frame(times[i]).max(rhythm_last(times[i]) + 1),
    };

    let mut hand = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
    let mut labels = vec![Label::Background; frames];
    let (mut accuracy, mut rhythm) = (0, 0);

    for i in 0..n {
        let t = times[i];
        let window_end = times.get(i + 1).map_or(t + params.w_max, |&next| next.min(t + params.w_max));
        let last_onset = ((window_end * fps - 1e-6).ceil() as usize).saturating_sub(1);
        let lo = earliest_onset(i).max(1);
        let hi = match params.timing {
            ResponseTiming::Prompt => last_onset.min(rhythm_last(t)),
            ResponseTiming::Late => last_onset,
        };
        let max_end = if i + 1 < n { earliest_onset(i + 1).saturating_sub(2) } else { frames.saturating_sub(2) };
        let hi = hi.min(max_end);
        if lo > hi {
            return Err(infeasible(format!("no room for the touch answering instruction {i} at {t} s")));
        }

        if rng.random_bool(params.behavior.miss_p) {
            continue;
        }
        let part = if rng.random_bool(params.behavior.wrong_part_p) {
            if announced != expected {
                announced
            } else {
                *BodyPart::ALL
                    .iter()
                    .filter(|&&p| p != expected)
                    .collect::<Vec<_>>()
                    .choose(&mut rng)
                    .copied()
                    .expect("other parts")
            }
        } else {
            expected
        };
        let class = ActionClass::from_hand_part(hand, part);
        let (dmin, dmax) = duration_frames(class, fps);
        let onset_hi = hi.min(max_end + 1 - dmin.min(max_end + 1));
        if lo > onset_hi {
            return Err(infeasible(format!("touch for instruction {i} cannot fit {dmin} frames")));
        }
        let onset = rng.random_range(lo..=onset_hi);
        let dur = rng.random_range(dmin..=dmax.min(max_end + 1 - onset).max(dmin));
        labels[onset..onset + dur].fill(Label::Action(class));
        hand = hand.opposite();

        if part == expected {
            accuracy += 1;
            if onset <= rhythm_last(t) {
                rhythm += 1;
            }
        }
    }

    let gt = FrameLabelSeq::new(labels, fps)?;
    let keypoints = params.keypoints.as_ref().map(|f| gen_keypoints(&gt, f));
    let manifest = SessionManifest {
        session_id: params.session_id.clone(),
        subject_id: params.subject_id.clone(),
        task_id: params.task_id,
        fps,
        gt: format!("{}.gt.txt", params.session_id),
        pred: format!("{}.pred.txt", params.session_id),
        instructions,
    };
    Ok(SynthSession { manifest, gt, planted: (accuracy, rhythm), keypoints })
}

/// Corrupts a label sequence: boundary jitter, class confusion,
/// over-segmentation, then deletion, each driven by `noise`.
pub fn perturb(gt: &FrameLabelSeq, noise: &NoiseParams, seed: u64) -> Result<FrameLabelSeq> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut runs: Vec<Segment> = segments_from_frames(gt).into_inner();
    let frames = gt.len();

    if noise.boundary_jitter_sd > 0.0 {
        let normal = Normal::new(0.0, noise.boundary_jitter_sd).expect("finite sd");
        for j in 1..runs.len() {
            let shift = normal.sample(&mut rng).round() as i64;
            let lo = runs[j - 1].start as i64 + 1;
            let hi = if j + 1 < runs.len() { runs[j + 1].start as i64 - 1 } else { frames as i64 - 1 };
            let b = (runs[j].start as i64 + shift).clamp(lo, hi) as usize;
            runs[j].start = b;
            runs[j - 1].end = b - 1;
        }
    }

    for r in runs.iter_mut() {
        let confuse = rng.random_bool(noise.class_confusion_p);
        if !confuse {
            continue;
        }
        r.label = match r.label {
            Label::Action(a) => {
                let others: Vec<ActionClass> = ActionClass::ALL.into_iter().filter(|&c| c != a).collect();
                Label::Action(*others.choose(&mut rng).expect("others"))
            }
            Label::Part(p) => {
                let others: Vec<BodyPart> = BodyPart::ALL.into_iter().filter(|&c| c != p).collect();
                Label::Part(*others.choose(&mut rng).expect("others"))
            }
            Label::Background => Label::Background,
        };
    }

    let mut split = Vec::with_capacity(runs.len());
    for r in runs {
        let cut = rng.random_bool(noise.oversegmentation_p);
        if cut && !r.label.is_background() && r.duration_frames() >= 3 {
            let a = rng.random_range(r.start + 1..r.end);
            let b = rng.random_range(a..r.end);
            split.push(Segment::new(r.label, r.start, a - 1));
            split.push(Segment::new(Label::Background, a, b));
            split.push(Segment::new(r.label, b + 1, r.end));
        } else {
            split.push(r);
        }
    }

    let mut labels = vec![Label::Background; frames];
    for r in split {
        let delete = rng.random_bool(noise.deletion_p);
        if !delete {
            labels[r.start..=r.end].fill(r.label);
        }
    }
    FrameLabelSeq::new(labels, gt.fps())
}

/// Body layout in shoulder-width units. Lateral offsets are positive toward
/// the side the landmark is on; `y` grows downward.
struct Layout {
    parts: [(f64, f64); 4],
    /// Vertical level of the crossing corridor between shoulder and hip.
    corridor: f64,
    /// Lateral offset of the staging point outside each landmark.
    stage: f64,
    /// Lateral offset of the travel column beyond every staging point.
    column: f64,
}

impl Layout {
    fn new(p: &FsmParams) -> Self {
        let gap = (p.r_near + 0.25).max(0.7);
        let stage = p.r_near + 0.3;
        Layout {
            parts: [(0.3, -gap), (0.5, 0.0), (0.35, 2.0 * gap), (0.35, 3.0 * gap)],
            corridor: gap,
            stage,
            column: 0.5 + stage + 0.2,
        }
    }

    fn part(&self, part: BodyPart) -> (f64, f64) {
        self.parts[BodyPart::ALL.iter().position(|&p| p == part).expect("part")]
    }

    fn staging(&self, part: BodyPart) -> (f64, f64) {
        let (l, y) = self.part(part);
        (l + self.stage, y)
    }

    fn rest(&self) -> (f64, f64) {
        (-self.column, self.corridor)
    }

    /// Waypoints from one touch (or rest) to the next (or rest): out to the
    /// column, along it, and back in. Every waypoint and every point between
    /// them lies outside all approach radii.
    fn travel(&self, from: Option<BodyPart>, to: Option<BodyPart>) -> Vec<(f64, f64)> {
        if from.is_none() && to.is_none() {
            return vec![self.rest()];
        }
        let mut path = Vec::with_capacity(4);
        match from {
            Some(p) => path.extend([self.staging(p), (self.column, self.part(p).1)]),
            None => path.extend([self.rest(), (self.column, self.corridor)]),
        }
        match to {
            Some(p) => path.extend([(self.column, self.part(p).1), self.staging(p)]),
            None => path.extend([(self.column, self.corridor), self.rest()]),
        }
        path
    }
}

const SHOULDER_PX: f64 = 100.0;
const MIDLINE_PX: f64 = 320.0;
const NECK_PX: f64 = 150.0;

fn polyline_at(points: &[(f64, f64)], frac: f64) -> (f64, f64) {
    let lens: Vec<f64> = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .collect();
    let total: f64 = lens.iter().sum();
    if points.len() == 1 || total == 0.0 {
        return points[0];
    }
    let mut target = frac.clamp(0.0, 1.0) * total;
    for (w, len) in points.windows(2).zip(&lens) {
        if target <= *len || *len == total {
            let u = if *len > 0.0 { target / len } else { 0.0 };
            return (w[0].0 + u * (w[1].0 - w[0].0), w[0].1 + u * (w[1].1 - w[0].1));
        }
        target -= len;
    }
    *points.last().expect("non-empty")
}

/// Synthesizes a keypoint stream whose hands act out every action segment of
/// `gt` as an approach/touch/leave crossing, so that the detector recovers
/// each segment. Hands otherwise rest on their own side or travel along
/// paths outside every approach radius. Segments must start after frame 0,
/// end before the last frame and fit the detector's timeout to be recovered;
/// bare part labels carry no hand and are not acted out.
pub fn gen_keypoints(gt: &FrameLabelSeq, params: &FsmParams) -> Vec<KeypointFrame> {
    let layout = Layout::new(params);
    let frames = gt.len();
    let orient = params.orientation;
    let to_px = |side: Side, (l, y): (f64, f64)| {
        Point::new(MIDLINE_PX + orient.lateral_sign(side) * l * SHOULDER_PX, NECK_PX + y * SHOULDER_PX)
    };
    let landmarks = |side: Side| {
        let mut s = SideLandmarks::default();
        for part in BodyPart::ALL {
            *s.get_mut(part) = to_px(side, layout.part(part));
        }
        s
    };
    let body = KeypointFrame {
        left: landmarks(Side::Left),
        right: landmarks(Side::Right),
        midline_x: MIDLINE_PX,
        shoulder_width: SHOULDER_PX,
        ..Default::default()
    };

    let segments = segments_from_frames(gt);
    let mut hands = [vec![(0.0, 0.0); frames], vec![(0.0, 0.0); frames]];
    for (hi, hand) in [Side::Left, Side::Right].into_iter().enumerate() {
        let own: Vec<(ActionClass, usize, usize)> = segments
            .segments()
            .iter()
            .filter_map(|s| match s.label {
                Label::Action(a) if a.hand() == hand => Some((a, s.start, s.end)),
                _ => None,
            })
            .collect();
        let track = &mut hands[hi];

        // Travel between touches.
        let mut prev: Option<(BodyPart, usize)> = None;
        for next in own.iter().map(|&(a, s, _)| Some((a.part(), s))).chain([None]) {
            let from = prev.map_or(0, |(_, e)| e + 1);
            let to = next.map_or(frames, |(_, s)| s);
            if from < to {
                let path = layout.travel(prev.map(|(p, _)| p), next.map(|(p, _)| p));
                let n = to - from;
                for k in 0..n {
                    let frac = if n == 1 { if next.is_some() { 1.0 } else { 0.0 } } else { k as f64 / (n - 1) as f64 };
                    track[from + k] = polyline_at(&path, frac);
                }
            }
            if let Some((p, s)) = next {
                let end = own.iter().find(|&&(_, st, _)| st == s).map_or(s, |&(_, _, e)| e);
                prev = Some((p, end));
            }
        }

        // The touches themselves, along a horizontal ray out of the landmark.
        for &(class, s, e) in &own {
            let len = e - s + 1;
            let touch = params.min_touch_frames.max(((len as f64) / 3.0).round() as usize).min(len);
            let approach = (len - touch) / 2;
            let leave = len - touch - approach;
            let (l, y) = layout.part(class.part());
            let (near, tight) = (params.r_near, params.r_touch);
            for k in 0..len {
                let d = if k < approach {
                    near - (near - tight) * (k + 1) as f64 / (approach + 1) as f64
                } else if k < approach + touch {
                    0.4 * tight
                } else {
                    let j = k - approach - touch;
                    tight + (near - tight) * (j + 1) as f64 / (leave + 1) as f64
                };
                track[s + k] = (l + d, y);
            }
        }
    }

    (0..frames)
        .map(|f| KeypointFrame {
            left_hand: to_px(Side::Right, hands[0][f]),
            right_hand: to_px(Side::Left, hands[1][f]),
            ..body
        })
        .collect()
}

/// Settings for a multi-session corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusParams {
    pub seed: u64,
    pub sessions: usize,
    pub subjects: usize,
    /// Template for every session; seed, ids and task are overwritten.
    pub session: GenParams,
    pub noise: NoiseParams,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            seed: 0,
            sessions: 50,
            subjects: 10,
            session: GenParams { keypoints: Some(FsmParams::default()), ..Default::default() },
            noise: NoiseParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSession {
    pub session: SynthSession,
    pub pred: FrameLabelSeq,
}

/// Generates a corpus. Session `i` belongs to subject `i mod subjects` and
/// cycles through the five tasks; per-session seeds are drawn up front so
/// the result does not depend on `exec`.
pub fn gen_corpus(params: &CorpusParams, exec: Exec) -> Result<Vec<CorpusSession>> {
    if params.subjects == 0 {
        return Err(Error::InvalidParams("need at least one subject".into()));
    }
    params.noise.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(params.seed);
    let seeds: Vec<(u64, u64)> = (0..params.sessions).map(|_| (master.next_u64(), master.next_u64())).collect();
    let width = params.subjects.to_string().len().max(2);

    exec.try_map(&(0..params.sessions).collect::<Vec<_>>(), |&i| {
        let (gen_seed, noise_seed) = seeds[i];
        let task = TaskId::ALL[(i / params.subjects) % 5];
        let p = GenParams {
            seed: gen_seed,
            session_id: format!("s{:04}", i + 1),
            subject_id: format!("S{:0width$}", i % params.subjects + 1),
            task_id: task,
            ..params.session.clone()
        };
        let session = gen_session(&p).map_err(|e| e.in_session(&p.session_id))?;
        let pred = perturb(&session.gt, &params.noise, noise_seed)?;
        Ok(CorpusSession { session, pred })
    })
}
