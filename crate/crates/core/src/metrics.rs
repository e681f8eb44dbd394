//! Evaluation of predicted persons against ground-truth labels.
//!
//! Every prediction is matched to the closest label by mean joint error over
//! the joints both have. Predictions are visited in descending score order;
//! when two claim the same label, the label keeps the one with lower error
//! and the other retries its next-closest label. Pairs further than
//! [`MATCH_MAX_ERROR`] apart are dissolved afterwards.
//!
//! Percentages are pooled over part, joint and person instances across all
//! frames, never averaged per frame.

use std::collections::VecDeque;
use std::fmt;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::skeleton::{JointGroup, SkeletonDef};

pub const MATCH_MAX_ERROR: f64 = 500.0;

pub type Joints = [Option<Point3<f64>>];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    /// Mean joint error in mm.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub invalid_predictions: Vec<usize>,
}

/// Mean distance over the joints present in both, `None` if there are none.
pub fn mean_joint_error(pred: &Joints, gt: &Joints) -> Option<f64> {
    let (sum, n) = pred
        .iter()
        .zip(gt)
        .filter_map(|(p, g)| Some((p.as_ref()? - g.as_ref()?).norm()))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Matches predictions to labels. `scores[i]` orders the predictions;
/// equal scores keep input order.
pub fn match_persons(preds: &[Vec<Option<Point3<f64>>>], scores: &[f64], gts: &[Vec<Option<Point3<f64>>>]) -> MatchResult {
    assert_eq!(preds.len(), scores.len(), "one score per prediction");
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    // candidate lists, closest label first
    let prefs: Vec<Vec<(f64, usize)>> = preds
        .iter()
        .map(|p| {
            let mut c: Vec<(f64, usize)> = gts
                .iter()
                .enumerate()
                .filter_map(|(g, gt)| mean_joint_error(p, gt).map(|e| (e, g)))
                .collect();
            c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            c
        })
        .collect();
    let mut rank = vec![0usize; preds.len()];
    for (r, &p) in order.iter().enumerate() {
        rank[p] = r;
    }

    let mut holder: Vec<Option<(usize, f64)>> = vec![None; gts.len()];
    let mut next = vec![0usize; preds.len()];
    let mut free: VecDeque<usize> = order.iter().copied().collect();
    while let Some(p) = free.pop_front() {
        let Some(&(err, g)) = prefs[p].get(next[p]) else {
            continue;
        };
        next[p] += 1;
        match holder[g] {
            None => holder[g] = Some((p, err)),
            Some((q, qerr)) => {
                let better = err.total_cmp(&qerr).then(rank[p].cmp(&rank[q])).is_lt();
                if better {
                    holder[g] = Some((p, err));
                    free.push_front(q);
                } else {
                    free.push_front(p);
                }
            }
        }
    }

    let mut result = MatchResult::default();
    let mut matched_pred = vec![false; preds.len()];
    for (g, h) in holder.iter().enumerate() {
        match h {
            Some((p, err)) if *err <= MATCH_MAX_ERROR => {
                matched_pred[*p] = true;
                result.pairs.push(MatchPair {
                    pred: *p,
                    gt: g,
                    error: *err,
                });
            }
            _ => result.unmatched_gt.push(g),
        }
    }
    result.pairs.sort_by_key(|m| rank[m.pred]);
    result.invalid_predictions = order.iter().copied().filter(|&p| !matched_pred[p]).collect();
    result
}

/// `2PR / (P + R)` with `P = 100 − invalid`, `R = recall@500`.
pub fn f1(invalid_pct: f64, recall500: f64) -> f64 {
    let p = 100.0 - invalid_pct;
    let r = recall500;
    if p + r <= 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn pct(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Running counts; feed one frame at a time with [`MetricAccumulator::add_frame`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricAccumulator {
    pub frames: u64,
    pub preds: u64,
    pub gts: u64,
    pub invalid: u64,
    pub pcp_correct: u64,
    pub pcp_total: u64,
    pub pck100_correct: u64,
    pub pck500_correct: u64,
    pub pck_total: u64,
    pub recall100: u64,
    pub recall500: u64,
    /// Sum of per-person mean errors and person count, per group
    /// (all, body, face, hands).
    pub mpjpe_sum: [f64; 4],
    pub mpjpe_count: [u64; 4],
}

const GROUP_NAMES: [&str; 4] = ["all", "body", "face", "hands"];

fn group_slot(g: JointGroup) -> usize {
    match g {
        JointGroup::Body | JointGroup::Foot => 1,
        JointGroup::Face => 2,
        JointGroup::Hand => 3,
    }
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Matches and scores one frame, returning the match.
    pub fn add_frame(
        &mut self,
        preds: &[Vec<Option<Point3<f64>>>],
        scores: &[f64],
        gts: &[Vec<Option<Point3<f64>>>],
        skel: &SkeletonDef,
    ) -> MatchResult {
        let m = match_persons(preds, scores, gts);
        self.frames += 1;
        self.preds += preds.len() as u64;
        self.gts += gts.len() as u64;
        self.invalid += m.invalid_predictions.len() as u64;
        for pair in &m.pairs {
            let (p, g) = (&preds[pair.pred], &gts[pair.gt]);
            if pair.error < 100.0 {
                self.recall100 += 1;
            }
            if pair.error < 500.0 {
                self.recall500 += 1;
            }
            for &(a, b) in skel.pcp_parts() {
                let (Some(ga), Some(gb)) = (g[a], g[b]) else {
                    continue;
                };
                self.pcp_total += 1;
                if let (Some(pa), Some(pb)) = (p[a], p[b]) {
                    let err = 0.5 * ((pa - ga).norm() + (pb - gb).norm());
                    if err < 0.5 * (ga - gb).norm() {
                        self.pcp_correct += 1;
                    }
                }
            }
            let mut sums = [0.0f64; 4];
            let mut counts = [0u64; 4];
            for (j, gj) in g.iter().enumerate() {
                let Some(gj) = gj else { continue };
                self.pck_total += 1;
                let Some(pj) = p.get(j).copied().flatten() else {
                    continue;
                };
                let d = (pj - gj).norm();
                if d < 100.0 {
                    self.pck100_correct += 1;
                }
                if d < 500.0 {
                    self.pck500_correct += 1;
                }
                for slot in [0, group_slot(skel.group(j))] {
                    sums[slot] += d;
                    counts[slot] += 1;
                }
            }
            for s in 0..4 {
                if counts[s] > 0 {
                    self.mpjpe_sum[s] += sums[s] / counts[s] as f64;
                    self.mpjpe_count[s] += 1;
                }
            }
        }
        m
    }

    pub fn merge(&mut self, o: &MetricAccumulator) {
        self.frames += o.frames;
        self.preds += o.preds;
        self.gts += o.gts;
        self.invalid += o.invalid;
        self.pcp_correct += o.pcp_correct;
        self.pcp_total += o.pcp_total;
        self.pck100_correct += o.pck100_correct;
        self.pck500_correct += o.pck500_correct;
        self.pck_total += o.pck_total;
        self.recall100 += o.recall100;
        self.recall500 += o.recall500;
        for s in 0..4 {
            self.mpjpe_sum[s] += o.mpjpe_sum[s];
            self.mpjpe_count[s] += o.mpjpe_count[s];
        }
    }

    pub fn report(&self) -> MetricReport {
        let mpjpe = |s: usize| {
            (self.mpjpe_count[s] > 0).then(|| self.mpjpe_sum[s] / self.mpjpe_count[s] as f64)
        };
        let invalid_pct = pct(self.invalid, self.preds);
        let recall_500 = pct(self.recall500, self.gts);
        MetricReport {
            pcp: pct(self.pcp_correct, self.pcp_total),
            pck_100: pct(self.pck100_correct, self.pck_total),
            pck_500: pct(self.pck500_correct, self.pck_total),
            mpjpe_mm: mpjpe(0),
            recall_100: pct(self.recall100, self.gts),
            recall_500,
            invalid_pct,
            f1: f1(invalid_pct, recall_500),
            mpjpe_groups: GroupMpjpe {
                body: mpjpe(1),
                face: mpjpe(2),
                hands: mpjpe(3),
            },
            frames: self.frames,
            predictions: self.preds,
            ground_truth: self.gts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMpjpe {
    pub body: Option<f64>,
    pub face: Option<f64>,
    pub hands: Option<f64>,
}

/// Percentages are in `[0, 100]`; MPJPE in mm, `None` without matches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pcp: f64,
    #[serde(rename = "pck@100")]
    pub pck_100: f64,
    #[serde(rename = "pck@500")]
    pub pck_500: f64,
    pub mpjpe_mm: Option<f64>,
    #[serde(rename = "recall@100")]
    pub recall_100: f64,
    #[serde(rename = "recall@500")]
    pub recall_500: f64,
    pub invalid_pct: f64,
    pub f1: f64,
    pub mpjpe_groups: GroupMpjpe,
    pub frames: u64,
    pub predictions: u64,
    pub ground_truth: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"))
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head = [
            "PCP", "PCK@100", "PCK@500", "MPJPE", "Recall@100", "Recall@500", "Invalid", "F1",
        ];
        let vals = [
            format!("{:.1}", self.pcp),
            format!("{:.1}", self.pck_100),
            format!("{:.1}", self.pck_500),
            opt(self.mpjpe_mm),
            format!("{:.1}", self.recall_100),
            format!("{:.1}", self.recall_500),
            format!("{:.1}", self.invalid_pct),
            format!("{:.1}", self.f1),
        ];
        let widths: Vec<usize> = head.iter().zip(&vals).map(|(h, v)| h.len().max(v.len())).collect();
        let row = |cells: &mut dyn Iterator<Item = &str>| {
            cells
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(f, "{}", row(&mut head.iter().copied()))?;
        writeln!(f, "{}", row(&mut vals.iter().map(String::as_str)))?;
        let g = &self.mpjpe_groups;
        if g.face.is_some() || g.hands.is_some() {
            writeln!(
                f,
                "MPJPE {}: {} | {} | {} | {}",
                GROUP_NAMES.join("|"),
                opt(self.mpjpe_mm),
                opt(g.body),
                opt(g.face),
                opt(g.hands)
            )?;
        }
        write!(
            f,
            "frames {}  predictions {}  labels {}",
            self.frames, self.predictions, self.ground_truth
        )
    }
}
