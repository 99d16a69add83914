use std::collections::BTreeSet;

use approx::assert_abs_diff_eq;
use crossbody::agreement::{bland_altman, emit_plot_data, parse_plot_data, AgreementPair};
use crossbody::fsm::{detect_gestures, FsmParams, KeypointFrame, Point, SideLandmarks};
use crossbody::ingest::{
    load_folds, load_frame_labels, load_human_scores, load_keypoints, make_folds, write_folds, write_frame_labels,
    write_human_scores, write_keypoints, LabelVocabulary, ScoreRow, ScoreSheet,
};
use crossbody::metrics::{evaluate_corpus, evaluate_pair, f1_at, framewise_accuracy, VideoPair, DEFAULT_THRESHOLDS};
use crossbody::scoring::{
    aggregate_scores, apply_task_rule, extract_touch_events, score_session, InstructionEvent, ScoringParams,
    TaggedScore, TaskId,
};
use crossbody::synth::{gen_session, perturb, GenParams, InstructionCount, NoiseParams};
use crossbody::{
    frames_from_segments, relabel_set_level, segments_from_frames, BodyPart, FrameLabelSeq, Label,
};
use proptest::prelude::*;

const POOL: [&str; 5] = ["BG", "lhre", "rhls", "lhrk", "rhlh"];

fn expand(runs: &[(usize, usize)], len: usize) -> Vec<&'static str> {
    let mut out: Vec<&str> = runs.iter().flat_map(|&(c, n)| std::iter::repeat_n(POOL[c], n)).collect();
    out.resize(len, "BG");
    out
}

fn runs_strategy() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..POOL.len(), 1..7usize), 1..12)
}

fn seq() -> impl Strategy<Value = FrameLabelSeq> {
    runs_strategy().prop_map(|r| {
        let len = r.iter().map(|x| x.1).sum();
        FrameLabelSeq::from_tokens(&expand(&r, len), 30.0).unwrap()
    })
}

fn pair() -> impl Strategy<Value = (FrameLabelSeq, FrameLabelSeq)> {
    (runs_strategy(), runs_strategy()).prop_map(|(g, p)| {
        let len = g.iter().map(|x| x.1).sum();
        (
            FrameLabelSeq::from_tokens(&expand(&g, len), 30.0).unwrap(),
            FrameLabelSeq::from_tokens(&expand(&p, len), 30.0).unwrap(),
        )
    })
}

fn part_subset() -> impl Strategy<Value = BTreeSet<BodyPart>> {
    prop::sample::subsequence(BodyPart::ALL.to_vec(), 0..=4).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #[test]
    fn run_length_round_trip(s in seq()) {
        let segs = segments_from_frames(&s);
        prop_assert_eq!(&frames_from_segments(segs.segments(), s.fps()).unwrap(), &s);
        let changes = s.labels().windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(segs.len(), changes + 1);
    }

    #[test]
    fn relabel_idempotent(s in seq(), parts in part_subset()) {
        let once = relabel_set_level(&s, &parts);
        prop_assert_eq!(relabel_set_level(&once, &parts), once);
    }

    #[test]
    fn relabel_never_lowers_accuracy((g, p) in pair(), parts in part_subset()) {
        let before = framewise_accuracy(&g, &p).unwrap();
        let after = framewise_accuracy(&relabel_set_level(&g, &parts), &relabel_set_level(&p, &parts)).unwrap();
        prop_assert!(after >= before);
    }

    #[test]
    fn label_file_round_trip(s in seq()) {
        let text = write_frame_labels(&s);
        prop_assert_eq!(load_frame_labels(&text, 30.0, &LabelVocabulary::default()).unwrap(), s);
    }

    #[test]
    fn perfect_prediction(s in seq()) {
        let r = evaluate_pair(&s, &s).unwrap();
        prop_assert_eq!(r.acc, 100.0);
        prop_assert_eq!(r.edit, 100.0);
        if let Some(a) = r.acc_bg {
            prop_assert_eq!(a, 100.0);
        }
        if segments_from_frames(&s).foreground().count() > 0 {
            for t in &r.f1 {
                prop_assert_eq!(t.f1, 1.0);
            }
        }
    }

    #[test]
    fn f1_antitone_in_tau((g, p) in pair()) {
        let gs = segments_from_frames(&g);
        let ps = segments_from_frames(&p);
        let counts: Vec<_> = DEFAULT_THRESHOLDS.iter().map(|&t| f1_at(&gs, &ps, t)).collect();
        for w in counts.windows(2) {
            prop_assert!(w[0].tp >= w[1].tp);
            prop_assert!(w[0].f1() >= w[1].f1());
        }
    }

    #[test]
    fn spurious_segment_hurts_edit_and_precision(s in seq(), at in any::<prop::sample::Index>()) {
        // pick a background frame and plant a class that never occurs in s
        let bg: Vec<usize> = (0..s.len()).filter(|&i| s.labels()[i] == Label::Background).collect();
        prop_assume!(!bg.is_empty());
        let i = bg[at.index(bg.len())];
        let mut labels = s.labels().to_vec();
        labels[i] = "rhlk".parse().unwrap();
        let pred = FrameLabelSeq::new(labels, s.fps()).unwrap();
        let clean = evaluate_pair(&s, &s).unwrap();
        let noisy = evaluate_pair(&s, &pred).unwrap();
        prop_assert!(noisy.edit < clean.edit);
        for (a, b) in clean.f1.iter().zip(&noisy.f1) {
            prop_assert_eq!(a.recall, b.recall);
            prop_assert!(b.precision < a.precision || a.counts.tp == 0);
            prop_assert_eq!(b.counts.fp, a.counts.fp + 1);
        }
    }

    #[test]
    fn corpus_report_ignores_order(pairs in prop::collection::vec(pair(), 1..8), rot in 0usize..8) {
        let mut videos: Vec<VideoPair> = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (gt, pred))| VideoPair { id: format!("v{i}"), gt, pred })
            .collect();
        let a = evaluate_corpus(&videos).unwrap();
        let n = videos.len();
        videos.rotate_left(rot % n);
        videos.reverse();
        let b = evaluate_corpus(&videos).unwrap();
        prop_assert_eq!(a.to_table(), b.to_table());
        prop_assert_eq!(a.edit, b.edit);
    }

    #[test]
    fn bland_altman_properties(
        raw in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 2..20),
        c in -5.0..5.0f64,
    ) {
        let pairs: Vec<AgreementPair> = raw
            .iter()
            .enumerate()
            .map(|(i, &(m, h))| AgreementPair { subject_id: format!("S{i:02}"), task_id: None, machine: m, human: h })
            .collect();
        let r = bland_altman("m", &pairs).unwrap();
        assert_abs_diff_eq!(r.bias, 0.5 * (r.loa_lower + r.loa_upper), epsilon = 1e-12);

        let shifted: Vec<_> = pairs.iter().cloned().map(|p| AgreementPair { machine: p.machine + c, ..p }).collect();
        let s = bland_altman("m", &shifted).unwrap();
        assert_abs_diff_eq!(s.bias, r.bias + c, epsilon = 1e-9);
        assert_abs_diff_eq!(s.sd, r.sd, epsilon = 1e-9);
        assert_abs_diff_eq!(s.loa_lower, r.loa_lower + c, epsilon = 1e-9);
        assert_abs_diff_eq!(s.loa_upper, r.loa_upper + c, epsilon = 1e-9);

        let swapped: Vec<_> = pairs
            .iter()
            .cloned()
            .map(|p| AgreementPair { machine: p.human, human: p.machine, ..p })
            .collect();
        let w = bland_altman("m", &swapped).unwrap();
        assert_abs_diff_eq!(w.bias, -r.bias, epsilon = 1e-12);
        assert_abs_diff_eq!(w.sd, r.sd, epsilon = 1e-12);
        assert_abs_diff_eq!(w.loa_lower, -r.loa_upper, epsilon = 1e-12);
        assert_abs_diff_eq!(w.loa_upper, -r.loa_lower, epsilon = 1e-12);

        let back = parse_plot_data("m", &emit_plot_data(&r)).unwrap();
        assert_abs_diff_eq!(back.bias, r.bias, epsilon = 1e-9);
        assert_abs_diff_eq!(back.loa_lower, r.loa_lower, epsilon = 1e-9);
        assert_abs_diff_eq!(back.loa_upper, r.loa_upper, epsilon = 1e-9);
        prop_assert_eq!(back.n, r.n);
    }

    #[test]
    fn folds_are_disjoint_cover(n in 2usize..40, k in 2usize..8, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let subjects: Vec<String> = (0..n).map(|i| format!("P{i:03}")).collect();
        let f = make_folds(&subjects, k, seed).unwrap();
        prop_assert_eq!(&make_folds(&subjects, k, seed).unwrap(), &f);
        let mut seen = BTreeSet::new();
        for fold in &f.folds {
            for s in fold {
                prop_assert!(seen.insert(s.clone()));
            }
        }
        prop_assert_eq!(seen.len(), n);
        let sizes = f.sizes();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        prop_assert_eq!(load_folds(&write_folds(&f)).unwrap(), f);
    }

    #[test]
    fn human_scores_round_trip(rows in prop::collection::btree_map((0u8..30, 1i64..=5), (0u32..2000, 0u32..2000), 0..20)) {
        let sheet = ScoreSheet {
            rows: rows
                .into_iter()
                .map(|((s, t), (a, r))| {
                    let key = (format!("S{s:02}"), TaskId::new(t).unwrap());
                    (key, ScoreRow { accuracy: a as f64 / 100.0, rhythm: r as f64 / 100.0, slots: None })
                })
                .collect(),
        };
        let text = write_human_scores(&sheet);
        let back = load_human_scores(&text).unwrap();
        prop_assert_eq!(write_human_scores(&back), text);
        prop_assert_eq!(back.rows.len(), sheet.rows.len());
        for (k, r) in &sheet.rows {
            let b = back.rows[k];
            assert_abs_diff_eq!(b.accuracy, r.accuracy, epsilon = 1e-9);
            assert_abs_diff_eq!(b.rhythm, r.rhythm, epsilon = 1e-9);
        }
    }

    #[test]
    fn scoring_bounds(seed in any::<u64>(), task in 1i64..=5, miss in 0.0..0.6f64, wrong in 0.0..0.6f64, jitter in 0.0..3.0f64, del in 0.0..0.5f64) {
        let p = GenParams {
            seed,
            task_id: TaskId::new(task).unwrap(),
            behavior: crossbody::synth::Behavior { miss_p: miss, wrong_part_p: wrong },
            ..Default::default()
        };
        let s = gen_session(&p).unwrap();
        let noise = NoiseParams { boundary_jitter_sd: jitter, class_confusion_p: 0.2, oversegmentation_p: 0.1, deletion_p: del };
        let pred = perturb(&s.gt, &noise, seed ^ 1).unwrap();
        let events = extract_touch_events(&segments_from_frames(&pred), pred.fps());
        prop_assert_eq!(events.len(), segments_from_frames(&pred).foreground().count());
        let score = s.manifest.score(&events, &ScoringParams::default());
        prop_assert!(score.rhythm <= score.accuracy);
        prop_assert!(score.accuracy as usize <= s.manifest.instructions.len());
        let used: BTreeSet<_> = score.slots.iter().filter_map(|x| x.matched).collect();
        prop_assert_eq!(used.len(), score.accuracy as usize);

        let clean = extract_touch_events(&segments_from_frames(&s.gt), s.gt.fps());
        let c = s.manifest.score(&clean, &ScoringParams::default());
        prop_assert_eq!((c.accuracy, c.rhythm), s.planted);
    }

    #[test]
    fn identity_tasks_ignore_rule(seed in any::<u64>()) {
        let p = GenParams { seed, instructions: InstructionCount::Fixed(3), ..Default::default() };
        let s = gen_session(&p).unwrap();
        let events = extract_touch_events(&segments_from_frames(&s.gt), s.gt.fps());
        let a = score_session(&events, TaskId::new(1).unwrap(), &s.manifest.instructions, &ScoringParams::default());
        let b = score_session(&events, TaskId::new(2).unwrap(), &s.manifest.instructions, &ScoringParams::default());
        prop_assert_eq!(a, b);
        // tasks 1-2 announce the expected part directly
        let mapped: Vec<InstructionEvent> = s
            .manifest
            .instructions
            .iter()
            .map(|i| InstructionEvent { part: apply_task_rule(1, i.part).unwrap(), ..*i })
            .collect();
        prop_assert_eq!(mapped, s.manifest.instructions);
    }

    #[test]
    fn aggregation_ignores_order(seeds in prop::collection::vec(any::<u64>(), 1..12), rot in 0usize..12) {
        let mut tagged: Vec<TaggedScore> = seeds
            .iter()
            .enumerate()
            .map(|(i, &seed)| {
                let task = TaskId::ALL[i % 5];
                let s = gen_session(&GenParams { seed, task_id: task, ..Default::default() }).unwrap();
                let events = extract_touch_events(&segments_from_frames(&s.gt), s.gt.fps());
                TaggedScore {
                    session_id: format!("s{i}"),
                    subject_id: format!("S{}", i % 3),
                    task,
                    score: s.manifest.score(&events, &ScoringParams::default()),
                }
            })
            .collect();
        let a = aggregate_scores(&tagged);
        let n = tagged.len();
        tagged.rotate_left(rot % n);
        prop_assert_eq!(aggregate_scores(&tagged), a);
    }

    #[test]
    fn zero_noise_is_identity(s in seq(), seed in any::<u64>()) {
        prop_assert_eq!(perturb(&s, &NoiseParams::default(), seed).unwrap(), s);
    }

    #[test]
    fn perturb_is_deterministic(s in seq(), seed in any::<u64>()) {
        let noise = NoiseParams { boundary_jitter_sd: 1.5, class_confusion_p: 0.3, oversegmentation_p: 0.2, deletion_p: 0.2 };
        prop_assert_eq!(perturb(&s, &noise, seed).unwrap(), perturb(&s, &noise, seed).unwrap());
    }
}

#[test]
fn task_rule_is_involution() {
    for t in 1..=5 {
        for p in BodyPart::ALL {
            assert_eq!(apply_task_rule(t, apply_task_rule(t, p).unwrap()).unwrap(), p);
        }
    }
}

// --- detector ---------------------------------------------------------------

/// Static body in shoulder-width units, subject facing the camera.
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
        midline_x: 0.0,
        shoulder_width: 1.0,
    }
}

/// Right hand hovering outside the left knee at the given distances.
fn knee_stream(ds: &[f64]) -> Vec<KeypointFrame> {
    let knee = body().left.knee;
    ds.iter()
        .map(|&d| KeypointFrame { right_hand: Point::new(knee.x + d, knee.y), ..body() })
        .collect()
}

fn keypoint_stream() -> impl Strategy<Value = Vec<KeypointFrame>> {
    prop::collection::vec(0.0..1.2f64, 1..80).prop_map(|ds| knee_stream(&ds))
}

proptest! {
    #[test]
    fn detector_deterministic_and_self_consistent(stream in keypoint_stream()) {
        let params = FsmParams::default();
        let a = detect_gestures(&stream, &params, 30.0).unwrap();
        prop_assert_eq!(&detect_gestures(&stream, &params, 30.0).unwrap(), &a);
        for s in a.foreground() {
            if let Label::Action(c) = s.label {
                prop_assert_ne!(c.hand(), c.part_side());
            }
        }
        let frames = a.to_frames(30.0).unwrap();
        let r = evaluate_pair(&frames, &frames).unwrap();
        prop_assert_eq!(r.acc, 100.0);
        prop_assert_eq!(r.edit, 100.0);
    }

    #[test]
    fn shrinking_touch_radius_only_removes(stream in keypoint_stream(), hi in 0.05..0.44f64, frac in 0.1..1.0f64) {
        let wide = FsmParams { r_touch: hi, max_gesture_frames: Some(10_000), ..Default::default() };
        let narrow = FsmParams { r_touch: hi * frac, ..wide };
        let a = detect_gestures(&stream, &wide, 30.0).unwrap().to_frames(30.0).unwrap();
        let b = detect_gestures(&stream, &narrow, 30.0).unwrap().to_frames(30.0).unwrap();
        for (x, y) in a.labels().iter().zip(b.labels()) {
            prop_assert!(*y == Label::Background || y == x);
        }
        let count = |f: &FrameLabelSeq| segments_from_frames(f).foreground().count();
        prop_assert!(count(&b) <= count(&a));
    }

    #[test]
    fn keypoint_csv_round_trip(ds in prop::collection::vec(0.0..1.2f64, 1..20)) {
        // values on the 4-decimal grid survive exactly
        let grid: Vec<f64> = ds.iter().map(|d| (d * 1e4).round() / 1e4).collect();
        let stream = knee_stream(&grid);
        let text = write_keypoints(&stream);
        let back = load_keypoints(&text).unwrap();
        prop_assert_eq!(write_keypoints(&back), text);
    }
}
