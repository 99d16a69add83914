//! Brute-force reference metrics, kept independent of the library's
//! segment and matching code.

#![allow(dead_code)]

use std::collections::HashMap;

use crossbody::{FrameLabelSeq, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_pair(rng: &mut ChaCha8Rng) -> (FrameLabelSeq, FrameLabelSeq) {
    let alphabet: [&str; 6] = ["BG", "lhre", "rhls", "lhrk", "rhle", "lhrh"];
    let classes = rng.random_range(1..=4);
    let pool: Vec<&str> = alphabet[..classes].to_vec();
    let t = rng.random_range(1..=60);
    let seq = |rng: &mut ChaCha8Rng| {
        // piecewise-constant runs so segments are non-trivial
        let mut tokens = Vec::with_capacity(t);
        while tokens.len() < t {
            let run = rng.random_range(1..=8);
            let tok = pool[rng.random_range(0..pool.len())];
            for _ in 0..run {
                if tokens.len() < t {
                    tokens.push(tok);
                }
            }
        }
        FrameLabelSeq::from_tokens(&tokens, 30.0).unwrap()
    };
    let gt = seq(rng);
    let pred = if rng.random_bool(0.2) { gt.clone() } else { seq(rng) };
    (gt, pred)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn acc(gt: &[Label], pred: &[Label]) -> f64 {
    let mut hit = 0;
    for i in 0..gt.len() {
        if gt[i] == pred[i] {
            hit += 1;
        }
    }
    100.0 * hit as f64 / gt.len() as f64
}

pub fn acc_bg(gt: &[Label], pred: &[Label]) -> Option<f64> {
    let mut hit = 0;
    let mut total = 0;
    for i in 0..gt.len() {
        if gt[i] != Label::Background {
            total += 1;
            if gt[i] == pred[i] {
                hit += 1;
            }
        }
    }
    if total == 0 {
        None
    } else {
        Some(100.0 * hit as f64 / total as f64)
    }
}

/// (label, first frame, last frame) of every non-background run.
pub fn runs(labels: &[Label]) -> Vec<(Label, usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let mut j = i;
        while j + 1 < labels.len() && labels[j + 1] == labels[i] {
            j += 1;
        }
        if labels[i] != Label::Background {
            out.push((labels[i], i, j));
        }
        i = j + 1;
    }
    out
}

fn lev_rec(a: &[Label], b: &[Label], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if let Some(&v) = memo.get(&(a.len(), b.len())) {
        return v;
    }
    let sub = lev_rec(&a[1..], &b[1..], memo) + usize::from(a[0] != b[0]);
    let del = lev_rec(&a[1..], b, memo) + 1;
    let ins = lev_rec(a, &b[1..], memo) + 1;
    let v = sub.min(del).min(ins);
    memo.insert((a.len(), b.len()), v);
    v
}

pub fn lev(a: &[Label], b: &[Label]) -> usize {
    lev_rec(a, b, &mut HashMap::new())
}

pub fn edit(gt: &[Label], pred: &[Label]) -> f64 {
    let g: Vec<Label> = runs(gt).into_iter().map(|r| r.0).collect();
    let p: Vec<Label> = runs(pred).into_iter().map(|r| r.0).collect();
    let m = g.len().max(p.len());
    if m == 0 {
        100.0
    } else {
        100.0 * (1.0 - lev(&g, &p) as f64 / m as f64)
    }
}

/// IoU by counting frames in each set.
fn frame_iou(a: (usize, usize), b: (usize, usize), t: usize) -> f64 {
    let mut inter = 0;
    let mut union = 0;
    for f in 0..t {
        let ia = f >= a.0 && f <= a.1;
        let ib = f >= b.0 && f <= b.1;
        if ia && ib {
            inter += 1;
        }
        if ia || ib {
            union += 1;
        }
    }
    inter as f64 / union as f64
}

/// (tp, fp, fn) under the greedy same-label max-IoU rule.
pub fn f1_counts(gt: &[Label], pred: &[Label], tau: f64) -> (usize, usize, usize) {
    let g = runs(gt);
    let p = runs(pred);
    let mut taken = vec![false; g.len()];
    let (mut tp, mut fp) = (0, 0);
    for &(pl, ps, pe) in &p {
        let mut best_iou = -1.0;
        let mut best = None;
        for (j, &(gl, gs, ge)) in g.iter().enumerate() {
            if taken[j] || gl != pl {
                continue;
            }
            let iou = frame_iou((ps, pe), (gs, ge), gt.len());
            if iou > best_iou {
                best_iou = iou;
                best = Some(j);
            }
        }
        match best {
            Some(j) if best_iou >= tau => {
                taken[j] = true;
                tp += 1;
            }
            _ => fp += 1,
        }
    }
    (tp, fp, g.len() - tp)
}

pub fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}
