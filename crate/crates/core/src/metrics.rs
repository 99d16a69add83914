//! Framewise and segmental evaluation metrics.
//!
//! Background segments are excluded from both segment lists before the edit
//! score and F1 are computed. Corpus accumulation pools frame counts and
//! tp/fp/fn over videos and averages edit scores per video.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{segments_from_frames, FrameLabelSeq, Label, SegmentSeq};

/// IoU thresholds reported by default.
pub const DEFAULT_THRESHOLDS: [f64; 3] = [0.10, 0.25, 0.50];

fn check_pair(gt: &FrameLabelSeq, pred: &FrameLabelSeq) -> Result<()> {
    if gt.len() != pred.len() {
        return Err(Error::LengthMismatch {
            gt: gt.len(),
            pred: pred.len(),
        });
    }
    if gt.fps() != pred.fps() {
        return Err(Error::FpsMismatch {
            gt: gt.fps(),
            pred: pred.fps(),
        });
    }
    Ok(())
}

fn matching_frames(gt: &FrameLabelSeq, pred: &FrameLabelSeq, skip_bg: bool) -> (usize, usize) {
    gt.labels()
        .iter()
        .zip(pred.labels())
        .filter(|(g, _)| !(skip_bg && g.is_background()))
        .fold((0, 0), |(hit, total), (g, p)| (hit + usize::from(g == p), total + 1))
}

/// Percentage of frames whose predicted label equals the ground truth.
pub fn framewise_accuracy(gt: &FrameLabelSeq, pred: &FrameLabelSeq) -> Result<f64> {
    check_pair(gt, pred)?;
    let (hit, total) = matching_frames(gt, pred, false);
    Ok(100.0 * hit as f64 / total as f64)
}

/// Framewise accuracy restricted to non-background ground-truth frames.
/// `None` when the ground truth is entirely background.
pub fn framewise_accuracy_no_bg(gt: &FrameLabelSeq, pred: &FrameLabelSeq) -> Result<Option<f64>> {
    check_pair(gt, pred)?;
    let (hit, total) = matching_frames(gt, pred, true);
    Ok((total > 0).then(|| 100.0 * hit as f64 / total as f64))
}

/// Levenshtein distance between two label sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let next = (row[j] + 1).min(row[j + 1] + 1).min(diag + usize::from(x != y));
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

fn foreground_labels(segs: &SegmentSeq) -> Vec<Label> {
    segs.foreground().map(|s| s.label).collect()
}

/// Segmental edit score in percent. Two empty foreground lists score 100.
pub fn edit_score(gt: &SegmentSeq, pred: &SegmentSeq) -> f64 {
    let g = foreground_labels(gt);
    let p = foreground_labels(pred);
    let longest = g.len().max(p.len());
    if longest == 0 {
        return 100.0;
    }
    100.0 * (1.0 - levenshtein(&g, &p) as f64 / longest as f64)
}

/// True/false positive and false negative counts at one IoU threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    fn merge(&mut self, other: &MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Greedy segment matching at IoU threshold `tau`.
///
/// Predictions are visited in temporal order; each takes the unmatched
/// same-label ground-truth segment of highest IoU (earliest on ties) and
/// counts as a true positive when that IoU reaches `tau`.
pub fn f1_at(gt: &SegmentSeq, pred: &SegmentSeq, tau: f64) -> MatchCounts {
    let gt_fg: Vec<_> = gt.foreground().collect();
    let mut used = vec![false; gt_fg.len()];
    let mut counts = MatchCounts::default();

    for p in pred.foreground() {
        let mut best: Option<(usize, f64)> = None;
        for (j, g) in gt_fg.iter().enumerate() {
            if used[j] || g.label != p.label {
                continue;
            }
            let iou = p.iou(g);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou >= tau => {
                used[j] = true;
                counts.tp += 1;
            }
            _ => counts.fp += 1,
        }
    }
    counts.fn_ = gt_fg.len() - counts.tp;
    counts
}

/// Mergeable per-corpus counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricCounts {
    pub thresholds: Vec<f64>,
    pub videos: usize,
    pub frames: usize,
    pub correct_frames: usize,
    pub non_bg_frames: usize,
    pub correct_non_bg_frames: usize,
    /// Per-video edit scores; summed in sorted order so merge order never
    /// changes the result.
    pub edit_scores: Vec<f64>,
    pub matches: Vec<MatchCounts>,
}

impl MetricCounts {
    pub fn empty(thresholds: &[f64]) -> Self {
        MetricCounts {
            thresholds: thresholds.to_vec(),
            videos: 0,
            frames: 0,
            correct_frames: 0,
            non_bg_frames: 0,
            correct_non_bg_frames: 0,
            edit_scores: Vec::new(),
            matches: vec![MatchCounts::default(); thresholds.len()],
        }
    }

    /// Counts for a single video.
    pub fn for_pair(gt: &FrameLabelSeq, pred: &FrameLabelSeq, thresholds: &[f64]) -> Result<Self> {
        check_pair(gt, pred)?;
        let (correct, frames) = matching_frames(gt, pred, false);
        let (correct_fg, fg) = matching_frames(gt, pred, true);
        let gs = segments_from_frames(gt);
        let ps = segments_from_frames(pred);
        Ok(MetricCounts {
            thresholds: thresholds.to_vec(),
            videos: 1,
            frames,
            correct_frames: correct,
            non_bg_frames: fg,
            correct_non_bg_frames: correct_fg,
            edit_scores: vec![edit_score(&gs, &ps)],
            matches: thresholds.iter().map(|&t| f1_at(&gs, &ps, t)).collect(),
        })
    }

    pub fn merge(mut self, other: MetricCounts) -> Self {
        debug_assert_eq!(self.thresholds, other.thresholds);
        self.videos += other.videos;
        self.frames += other.frames;
        self.correct_frames += other.correct_frames;
        self.non_bg_frames += other.non_bg_frames;
        self.correct_non_bg_frames += other.correct_non_bg_frames;
        self.edit_scores.extend(other.edit_scores);
        for (a, b) in self.matches.iter_mut().zip(&other.matches) {
            a.merge(b);
        }
        self
    }

    pub fn edit_sum(&self) -> f64 {
        let mut scores = self.edit_scores.clone();
        scores.sort_by(f64::total_cmp);
        scores.iter().sum()
    }

    pub fn report(&self) -> MetricReport {
        let f1 = self
            .thresholds
            .iter()
            .zip(&self.matches)
            .map(|(&tau, m)| ThresholdScore {
                tau,
                precision: m.precision(),
                recall: m.recall(),
                f1: m.f1(),
                counts: *m,
            })
            .collect();
        MetricReport {
            acc: 100.0 * ratio(self.correct_frames, self.frames),
            acc_bg: (self.non_bg_frames > 0)
                .then(|| 100.0 * ratio(self.correct_non_bg_frames, self.non_bg_frames)),
            edit: if self.videos == 0 {
                0.0
            } else {
                self.edit_sum() / self.videos as f64
            },
            f1,
            counts: self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdScore {
    pub tau: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MatchCounts,
}

/// Corpus- or video-level metric summary. Percentages for `acc`, `acc_bg`
/// and `edit`; fractions for precision, recall and F1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub acc: f64,
    pub acc_bg: Option<f64>,
    pub edit: f64,
    pub f1: Vec<ThresholdScore>,
    pub counts: MetricCounts,
}

impl MetricReport {
    pub fn f1_at(&self, tau: f64) -> Option<&ThresholdScore> {
        self.f1.iter().find(|s| s.tau == tau)
    }

    /// `metric,value` table with 4 fractional digits; `NA` for undefined.
    pub fn to_table(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut row = |k: &str, v: String| {
            out.push_str(k);
            out.push(',');
            out.push_str(&v);
            out.push('\n');
        };
        row("acc", format!("{:.4}", self.acc));
        row("acc_bg", self.acc_bg.map_or_else(|| "NA".into(), |v| format!("{v:.4}")));
        row("edit", format!("{:.4}", self.edit));
        for s in &self.f1 {
            row(&format!("f1@{}", tau_label(s.tau)), format!("{:.4}", s.f1));
        }
        for s in &self.f1 {
            let t = tau_label(s.tau);
            row(&format!("precision@{t}"), format!("{:.4}", s.precision));
            row(&format!("recall@{t}"), format!("{:.4}", s.recall));
            row(&format!("tp@{t}"), s.counts.tp.to_string());
            row(&format!("fp@{t}"), s.counts.fp.to_string());
            row(&format!("fn@{t}"), s.counts.fn_.to_string());
        }
        let c = &self.counts;
        row("videos", c.videos.to_string());
        row("frames", c.frames.to_string());
        row("correct_frames", c.correct_frames.to_string());
        row("non_bg_frames", c.non_bg_frames.to_string());
        row("correct_non_bg_frames", c.correct_non_bg_frames.to_string());
        row("edit_sum", format!("{:.4}", c.edit_sum()));
        out
    }
}

/// Threshold as an integer percentage, e.g. `0.25` → `25`.
pub fn tau_label(tau: f64) -> String {
    format!("{}", (tau * 100.0).round() as i64)
}

/// A labelled ground-truth/prediction pair from one video.
#[derive(Debug, Clone)]
pub struct VideoPair {
    pub id: String,
    pub gt: FrameLabelSeq,
    pub pred: FrameLabelSeq,
}

/// Evaluates a single video.
pub fn evaluate_pair(gt: &FrameLabelSeq, pred: &FrameLabelSeq) -> Result<MetricReport> {
    Ok(MetricCounts::for_pair(gt, pred, &DEFAULT_THRESHOLDS)?.report())
}

/// Corpus evaluation at the default thresholds.
pub fn evaluate_corpus(pairs: &[VideoPair]) -> Result<MetricReport> {
    evaluate_corpus_with(pairs, &DEFAULT_THRESHOLDS, Exec::default())
}

pub fn evaluate_corpus_with(pairs: &[VideoPair], thresholds: &[f64], exec: Exec) -> Result<MetricReport> {
    let per_video = exec.try_map(pairs, |p| {
        MetricCounts::for_pair(&p.gt, &p.pred, thresholds).map_err(|e| e.in_session(&p.id))
    })?;
    let total = per_video
        .into_iter()
        .fold(MetricCounts::empty(thresholds), MetricCounts::merge);
    Ok(total.report())
}
