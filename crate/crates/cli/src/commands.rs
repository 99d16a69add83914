use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crossbody::agreement::{bland_altman, emit_plot_data, pair_sheets, summary_json, PairLevel, ScoreKind};
use crossbody::fsm::detect_gestures;
use crossbody::ingest::{
    load_folds, load_frame_labels, load_keypoints, load_manifest, load_scores, make_folds, write_folds,
    write_frame_labels, write_human_scores, write_keypoints, write_manifest, write_scores, LabelVocabulary,
    ScoreRow, ScoreSheet, SessionManifest,
};
use crossbody::metrics::{tau_label, MetricCounts, MetricReport};
use crossbody::scoring::{aggregate_scores, extract_touch_events, TaggedScore, TaskId};
use crossbody::synth::{gen_corpus, CorpusParams};
use crossbody::{relabel_set_level, segments_from_frames, Exec, FrameLabelSeq};

use crate::config::{
    AgreeOpts, EvalOpts, FoldOpts, FsmOpts, GenOpts, Level, NoiseOpts, RunLayout, ScoreOpts, ScoringOpts,
    Source,
};
use crate::{files_with_suffix, in_file, input_error, read_input, Outputs, Result};

pub const MANIFEST_SUFFIX: &str = ".manifest.json";
pub const KEYPOINT_SUFFIX: &str = ".keypoints.csv";
pub const PRED_SUFFIX: &str = ".pred.txt";

/// Resolved run-wide settings.
#[derive(Debug, Clone, Default)]
pub struct Ctx {
    pub layout: RunLayout,
    pub exec: Exec,
}

// ---------------------------------------------------------------------------
// gen

pub fn gen(ctx: &Ctx, opts: &GenOpts, noise: &NoiseOpts, fsm: &FsmOpts, scoring: &ScoringOpts) -> Result<Outputs> {
    let seed = opts.seed()?;
    let scoring = scoring.params()?;
    let fsm = if opts.keypoints.unwrap_or(true) { Some(fsm.params()?) } else { None };
    let defaults = CorpusParams::default();
    let params = CorpusParams {
        seed,
        sessions: opts.sessions.unwrap_or(defaults.sessions),
        subjects: opts.subjects.unwrap_or(defaults.subjects),
        session: opts.template(fsm, &scoring)?,
        noise: noise.params()?,
    };
    if params.sessions == 0 {
        return Err(input_error("gen needs at least one session"));
    }
    let corpus = gen_corpus(&params, ctx.exec).map_err(|e| input_error(e.to_string()))?;

    let mut out = Outputs::default();
    let mut human: BTreeMap<(String, TaskId), (u32, u32)> = BTreeMap::new();
    for c in &corpus {
        let m = &c.session.manifest;
        out.add(format!("{}{MANIFEST_SUFFIX}", m.session_id), write_manifest(m));
        out.add(m.gt.clone(), write_frame_labels(&c.session.gt));
        out.add(m.pred.clone(), write_frame_labels(&c.pred));
        if let Some(kp) = &c.session.keypoints {
            out.add(format!("{}{KEYPOINT_SUFFIX}", m.session_id), write_keypoints(kp));
        }
        let e = human.entry((m.subject_id.clone(), m.task_id)).or_default();
        e.0 += c.session.planted.0;
        e.1 += c.session.planted.1;
    }
    let sheet = ScoreSheet {
        rows: human
            .into_iter()
            .map(|(k, (a, r))| (k, ScoreRow { accuracy: a as f64, rhythm: r as f64, slots: None }))
            .collect(),
    };
    out.add("human_scores.csv", write_human_scores(&sheet));
    Ok(out)
}

// ---------------------------------------------------------------------------
// folds

pub fn folds(ctx: &Ctx, opts: &FoldOpts) -> Result<Outputs> {
    let subjects: Vec<String> = match &opts.subjects {
        Some(path) => read_input(path)?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
        None => {
            let dir = opts.manifests.clone().unwrap_or_else(|| ctx.layout.stage("gen"));
            load_manifests(&dir)?.into_iter().map(|(_, m)| m.subject_id).collect()
        }
    };
    let k = opts.k.unwrap_or(6);
    let f = make_folds(&subjects, k, opts.seed.unwrap_or(0)).map_err(|e| input_error(e.to_string()))?;
    let mut out = Outputs::default();
    out.add("folds.csv", write_folds(&f));
    Ok(out)
}

// ---------------------------------------------------------------------------
// fsm

/// Runs the gesture detector over every `*.keypoints.csv` in `dir`.
pub fn fsm(ctx: &Ctx, dir: &Path, opts: &FsmOpts) -> Result<Outputs> {
    let params = opts.params()?;
    let fps = opts.fps()?;
    let paths = files_with_suffix(dir, KEYPOINT_SUFFIX)?;
    let preds = ctx.exec.try_map(&paths, |path| -> Result<(String, String)> {
        let stream = in_file(path, load_keypoints(&read_input(path)?))?;
        let segs = in_file(path, detect_gestures(&stream, &params, fps))?;
        let frames = segs.to_frames(fps).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        let sid = name.strip_suffix(KEYPOINT_SUFFIX).unwrap_or(&name).to_string();
        Ok((format!("{sid}{PRED_SUFFIX}"), write_frame_labels(&frames)))
    })?;
    let mut out = Outputs::default();
    for (name, content) in preds {
        out.add(name, content);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// session loading shared by eval and score

/// Loads every manifest in `dir`, sorted by session id.
pub fn load_manifests(dir: &Path) -> Result<Vec<(PathBuf, SessionManifest)>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for path in files_with_suffix(dir, MANIFEST_SUFFIX)? {
        let m = in_file(&path, load_manifest(&read_input(&path)?))?;
        if !seen.insert(m.session_id.clone()) {
            return Err(input_error(format!("{}: duplicate session_id {}", path.display(), m.session_id)));
        }
        out.push((path, m));
    }
    out.sort_by(|a, b| a.1.session_id.cmp(&b.1.session_id));
    Ok(out)
}

struct Session {
    manifest: SessionManifest,
    gt: FrameLabelSeq,
    pred: FrameLabelSeq,
}

fn label_path(manifest_path: &Path, file: &str, pred_dir: Option<&Path>) -> PathBuf {
    match pred_dir {
        Some(d) => d.join(Path::new(file).file_name().unwrap_or_default()),
        None => manifest_path.parent().unwrap_or(Path::new(".")).join(file),
    }
}

fn load_labels(path: &Path, fps: f64) -> Result<FrameLabelSeq> {
    in_file(path, load_frame_labels(&read_input(path)?, fps, &LabelVocabulary::with_parts()))
}

/// Loads manifests and their label files. A `pred_dir` of `None` skips
/// predictions and reuses the ground truth in their place.
fn load_sessions(ctx: &Ctx, manifests: Option<&Path>, pred_dir: Option<Option<&Path>>) -> Result<Vec<Session>> {
    let dir = manifests.map_or_else(|| ctx.layout.stage("gen"), Path::to_path_buf);
    let manifests = load_manifests(&dir)?;
    ctx.exec.try_map(&manifests, |(path, m)| {
        let gt = load_labels(&label_path(path, &m.gt, None), m.fps)?;
        let Some(pred_dir) = pred_dir else {
            in_file(path, m.check_duration(gt.len()))?;
            return Ok(Session { manifest: m.clone(), pred: gt.clone(), gt });
        };
        let pred_path = label_path(path, &m.pred, pred_dir);
        let pred = load_labels(&pred_path, m.fps)?;
        if gt.len() != pred.len() {
            return Err(input_error(format!(
                "{}: session {} has {} ground-truth frames but {} predicted",
                pred_path.display(),
                m.session_id,
                gt.len(),
                pred.len()
            )));
        }
        in_file(path, m.check_duration(gt.len()))?;
        Ok(Session { manifest: m.clone(), gt, pred })
    })
}

// ---------------------------------------------------------------------------
// eval

fn metric_row(r: &MetricReport) -> String {
    let mut cols = vec![
        format!("{:.4}", r.acc),
        r.acc_bg.map_or_else(|| "NA".into(), |v| format!("{v:.4}")),
        format!("{:.4}", r.edit),
    ];
    cols.extend(r.f1.iter().map(|s| format!("{:.4}", s.f1)));
    cols.join(",")
}

fn metric_header(thresholds: &[f64]) -> String {
    let mut cols = vec!["acc".to_string(), "acc_bg".into(), "edit".into()];
    cols.extend(thresholds.iter().map(|&t| format!("f1@{}", tau_label(t))));
    cols.join(",")
}

pub fn eval(ctx: &Ctx, opts: &EvalOpts) -> Result<Outputs> {
    let thresholds = opts.thresholds()?;
    let relabel = opts.relabel_parts()?;
    let folds = match &opts.folds {
        Some(p) => Some(in_file(p, load_folds(&read_input(p)?))?),
        None => None,
    };
    let sessions = load_sessions(ctx, opts.manifests.as_deref(), Some(opts.pred_dir.as_deref()))?;
    if let Some(f) = &folds {
        if let Some(s) = sessions.iter().find(|s| f.fold_of(&s.manifest.subject_id).is_none()) {
            return Err(input_error(format!(
                "session {}: subject {} is not in any fold",
                s.manifest.session_id, s.manifest.subject_id
            )));
        }
    }

    let counts = ctx.exec.try_map(&sessions, |s| {
        let (gt, pred) = match &relabel {
            Some(parts) => (relabel_set_level(&s.gt, parts), relabel_set_level(&s.pred, parts)),
            None => (s.gt.clone(), s.pred.clone()),
        };
        MetricCounts::for_pair(&gt, &pred, &thresholds)
            .map_err(|e| input_error(format!("session {}: {e}", s.manifest.session_id)))
    })?;

    let header = metric_header(&thresholds);
    let mut per_video = format!("session_id,subject_id,task_id,frames,{header}\n");
    for (s, c) in sessions.iter().zip(&counts) {
        let m = &s.manifest;
        per_video.push_str(&format!(
            "{},{},{},{},{}\n",
            m.session_id,
            m.subject_id,
            m.task_id,
            c.frames,
            metric_row(&c.report())
        ));
    }
    let total = counts
        .iter()
        .cloned()
        .fold(MetricCounts::empty(&thresholds), MetricCounts::merge);

    let mut out = Outputs::default();
    out.add("corpus_metrics.csv", total.report().to_table());
    out.add("per_video.csv", per_video);
    if let Some(f) = &folds {
        let mut table = format!("fold,videos,{header}\n");
        for i in 0..f.folds.len() {
            let merged = sessions
                .iter()
                .zip(&counts)
                .filter(|(s, _)| f.fold_of(&s.manifest.subject_id) == Some(i))
                .map(|(_, c)| c.clone())
                .fold(MetricCounts::empty(&thresholds), MetricCounts::merge);
            if merged.videos == 0 {
                out.warnings.push(format!("fold {i} has no sessions"));
                continue;
            }
            table.push_str(&format!("{i},{},{}\n", merged.videos, metric_row(&merged.report())));
        }
        out.add("fold_metrics.csv", table);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// score

pub fn score(ctx: &Ctx, opts: &ScoreOpts, scoring: &ScoringOpts) -> Result<Outputs> {
    let params = scoring.params()?;
    let source = opts.source.unwrap_or(Source::Pred);
    let pred_dir = match source {
        Source::Gt => None,
        Source::Pred => Some(opts.pred_dir.as_deref()),
    };
    let sessions = load_sessions(ctx, opts.manifests.as_deref(), pred_dir)?;
    let tagged: Vec<TaggedScore> = ctx.exec.map(&sessions, |s| {
        let labels = match source {
            Source::Gt => &s.gt,
            Source::Pred => &s.pred,
        };
        let events = extract_touch_events(&segments_from_frames(labels), labels.fps());
        TaggedScore {
            session_id: s.manifest.session_id.clone(),
            subject_id: s.manifest.subject_id.clone(),
            task: s.manifest.task_id,
            score: s.manifest.score(&events, &params),
        }
    });

    let mut per_session = String::from("session_id,subject_id,task_id,accuracy,rhythm,slots\n");
    for t in &tagged {
        let x = t.totals();
        per_session.push_str(&format!(
            "{},{},{},{},{},{}\n",
            t.session_id, t.subject_id, t.task, x.accuracy, x.rhythm, x.slots
        ));
    }
    let agg = aggregate_scores(&tagged);
    let sheet = ScoreSheet {
        rows: agg
            .by_task
            .iter()
            .map(|(k, x)| {
                let row = ScoreRow { accuracy: x.accuracy as f64, rhythm: x.rhythm as f64, slots: Some(x.slots) };
                (k.clone(), row)
            })
            .collect(),
    };
    let mut subjects = String::from("subject_id,accuracy,rhythm,slots\n");
    for (s, x) in &agg.by_subject {
        subjects.push_str(&format!("{s},{},{},{}\n", x.accuracy, x.rhythm, x.slots));
    }

    let mut out = Outputs::default();
    out.add("session_scores.csv", per_session);
    out.add("machine_scores.csv", write_scores(&sheet));
    out.add("subject_totals.csv", subjects);
    Ok(out)
}

// ---------------------------------------------------------------------------
// agree

pub fn agree(ctx: &Ctx, opts: &AgreeOpts) -> Result<Outputs> {
    let machine_path = opts
        .machine
        .clone()
        .unwrap_or_else(|| ctx.layout.stage("score").join("machine_scores.csv"));
    let human_path = opts
        .human
        .clone()
        .unwrap_or_else(|| ctx.layout.stage("gen").join("human_scores.csv"));
    let machine = in_file(&machine_path, load_scores(&read_input(&machine_path)?))?;
    let human = in_file(&human_path, load_scores(&read_input(&human_path)?))?;
    let level = match opts.level.unwrap_or(Level::Task) {
        Level::Task => PairLevel::Task,
        Level::Subject => PairLevel::Subject,
    };

    let mut out = Outputs::default();
    let mut reports = Vec::new();
    for kind in [ScoreKind::Accuracy, ScoreKind::Rhythm] {
        let (pairs, unmatched) = pair_sheets(&machine, &human, kind, level);
        if unmatched > 0 && kind == ScoreKind::Accuracy {
            out.warnings
                .push(format!("{unmatched} score rows have no counterpart in the other table and were skipped"));
        }
        let report = bland_altman(kind.name(), &pairs).map_err(|e| {
            input_error(format!("{}: {e} ({unmatched} score rows have no counterpart)", kind.name()))
        })?;
        out.add(format!("{}_plot.csv", kind.name()), emit_plot_data(&report));
        reports.push(report);
    }
    out.add("agreement.json", summary_json(&reports));
    Ok(out)
}
