mod common;

use approx::assert_abs_diff_eq;
use crossbody::metrics::{
    edit_score, evaluate_corpus, evaluate_pair, f1_at, framewise_accuracy, framewise_accuracy_no_bg, levenshtein,
    VideoPair, DEFAULT_THRESHOLDS,
};
use crossbody::{segments_from_frames, FrameLabelSeq};

const TOL: f64 = 1e-9;

#[test]
fn per_video_metrics_match_brute_force() {
    let mut rng = common::rng(7);
    for _ in 0..1000 {
        let (gt, pred) = common::random_pair(&mut rng);
        let (g, p) = (gt.labels(), pred.labels());
        let gs = segments_from_frames(&gt);
        let ps = segments_from_frames(&pred);

        assert_abs_diff_eq!(framewise_accuracy(&gt, &pred).unwrap(), common::acc(g, p), epsilon = TOL);
        match (framewise_accuracy_no_bg(&gt, &pred).unwrap(), common::acc_bg(g, p)) {
            (Some(a), Some(b)) => assert_abs_diff_eq!(a, b, epsilon = TOL),
            (a, b) => assert_eq!(a, b),
        }
        assert_abs_diff_eq!(edit_score(&gs, &ps), common::edit(g, p), epsilon = TOL);
        for tau in DEFAULT_THRESHOLDS {
            let got = f1_at(&gs, &ps, tau);
            let (tp, fp, fn_) = common::f1_counts(g, p, tau);
            assert_eq!((got.tp, got.fp, got.fn_), (tp, fp, fn_), "tau {tau}");
            assert_abs_diff_eq!(got.f1(), common::f1(tp, fp, fn_), epsilon = TOL);
        }
    }
}

#[test]
fn levenshtein_matches_recursive_definition() {
    let mut rng = common::rng(11);
    for _ in 0..300 {
        let (gt, pred) = common::random_pair(&mut rng);
        let a = &gt.labels()[..gt.len().min(12)];
        let b = &pred.labels()[..pred.len().min(12)];
        assert_eq!(levenshtein(a, b), common::lev(a, b));
    }
}

#[test]
fn corpus_metrics_pool_frames_and_counts() {
    let mut rng = common::rng(23);
    let pairs: Vec<(FrameLabelSeq, FrameLabelSeq)> = (0..200).map(|_| common::random_pair(&mut rng)).collect();
    let videos: Vec<VideoPair> = pairs
        .iter()
        .enumerate()
        .map(|(i, (g, p))| VideoPair { id: format!("v{i}"), gt: g.clone(), pred: p.clone() })
        .collect();
    let report = evaluate_corpus(&videos).unwrap();

    let g_all: Vec<_> = pairs.iter().flat_map(|(g, _)| g.labels().to_vec()).collect();
    let p_all: Vec<_> = pairs.iter().flat_map(|(_, p)| p.labels().to_vec()).collect();
    assert_abs_diff_eq!(report.acc, common::acc(&g_all, &p_all), epsilon = TOL);

    let edit_mean = pairs.iter().map(|(g, p)| common::edit(g.labels(), p.labels())).sum::<f64>() / pairs.len() as f64;
    assert_abs_diff_eq!(report.edit, edit_mean, epsilon = TOL);

    for tau in DEFAULT_THRESHOLDS {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (g, p) in &pairs {
            let c = common::f1_counts(g.labels(), p.labels(), tau);
            tp += c.0;
            fp += c.1;
            fn_ += c.2;
        }
        let s = report.f1_at(tau).unwrap();
        assert_eq!((s.counts.tp, s.counts.fp, s.counts.fn_), (tp, fp, fn_));
        assert_abs_diff_eq!(s.f1, common::f1(tp, fp, fn_), epsilon = TOL);
    }
}

#[test]
fn single_pair_report_matches_video_metrics() {
    let mut rng = common::rng(5);
    for _ in 0..100 {
        let (gt, pred) = common::random_pair(&mut rng);
        let r = evaluate_pair(&gt, &pred).unwrap();
        assert_abs_diff_eq!(r.acc, common::acc(gt.labels(), pred.labels()), epsilon = TOL);
        assert_abs_diff_eq!(r.edit, common::edit(gt.labels(), pred.labels()), epsilon = TOL);
    }
}
