//! Instance segmentation metrics: F1, AP and AJI.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{CebError, Result};
use crate::matching::{solve_ssm, ScoreMatrix, SolverOptions};
use crate::raster::LabelMap;

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchProtocol {
    /// One-to-one by descending IoU.
    #[default]
    Greedy,
    /// Maximum total IoU over pairs at or above the threshold.
    Optimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub f1: f64,
    pub ap: f64,
    pub aji: f64,
    /// Mean IoU over the TP pairs (0 when there are none).
    pub matched_iou: f64,
}

#[derive(Debug, Clone, Copy)]
struct Pair {
    gt: usize,
    pred: usize,
    inter: u64,
    union: u64,
}

impl Pair {
    fn iou(&self) -> f64 {
        self.inter as f64 / self.union as f64
    }

    fn at_threshold(&self) -> bool {
        2 * self.inter >= self.union
    }
}

/// Descending IoU compared exactly, then larger intersection, then the
/// first pixel of the ground truth and of the prediction.
fn greedy_order(a: &Pair, b: &Pair, gt_first: &[usize], pred_first: &[usize]) -> Ordering {
    let lhs = a.inter as u128 * b.union as u128;
    let rhs = b.inter as u128 * a.union as u128;
    rhs.cmp(&lhs)
        .then(b.inter.cmp(&a.inter))
        .then(gt_first[a.gt].cmp(&gt_first[b.gt]))
        .then(pred_first[a.pred].cmp(&pred_first[b.pred]))
}

struct Overlap {
    gt_area: Vec<u64>,
    pred_area: Vec<u64>,
    gt_first: Vec<usize>,
    pred_first: Vec<usize>,
    pairs: Vec<Pair>,
}

fn overlap(pred: &LabelMap, gt: &LabelMap) -> Result<Overlap> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(CebError::Dimension(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let index = |m: &LabelMap| -> BTreeMap<u32, usize> {
        m.instance_ids()
            .into_iter()
            .enumerate()
            .map(|(i, id)| (id, i))
            .collect()
    };
    let (gi, pi) = (index(gt), index(pred));
    let mut gt_area = vec![0u64; gi.len()];
    let mut pred_area = vec![0u64; pi.len()];
    let mut gt_first = vec![usize::MAX; gi.len()];
    let mut pred_first = vec![usize::MAX; pi.len()];
    let mut inter: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    for (px, (&g, &p)) in gt.labels().iter().zip(pred.labels()).enumerate() {
        let g = (g > 0).then(|| gi[&g]);
        let p = (p > 0).then(|| pi[&p]);
        if let Some(g) = g {
            gt_area[g] += 1;
            gt_first[g] = gt_first[g].min(px);
        }
        if let Some(p) = p {
            pred_area[p] += 1;
            pred_first[p] = pred_first[p].min(px);
        }
        if let (Some(g), Some(p)) = (g, p) {
            *inter.entry((g, p)).or_default() += 1;
        }
    }
    let pairs = inter
        .into_iter()
        .map(|((g, p), i)| Pair {
            gt: g,
            pred: p,
            inter: i,
            union: gt_area[g] + pred_area[p] - i,
        })
        .collect();
    Ok(Overlap {
        gt_area,
        pred_area,
        gt_first,
        pred_first,
        pairs,
    })
}

fn greedy(pairs: &[Pair], o: &Overlap, n_gt: usize, n_pred: usize) -> Vec<Pair> {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| greedy_order(a, b, &o.gt_first, &o.pred_first));
    let mut gt_used = vec![false; n_gt];
    let mut pred_used = vec![false; n_pred];
    let mut out = Vec::new();
    for p in sorted {
        if !gt_used[p.gt] && !pred_used[p.pred] {
            gt_used[p.gt] = true;
            pred_used[p.pred] = true;
            out.push(p);
        }
    }
    out
}

pub fn evaluate(pred: &LabelMap, gt: &LabelMap) -> Result<MetricsReport> {
    evaluate_with(pred, gt, MatchProtocol::Greedy)
}

pub fn evaluate_with(
    pred: &LabelMap,
    gt: &LabelMap,
    protocol: MatchProtocol,
) -> Result<MetricsReport> {
    let o = overlap(pred, gt)?;
    let (n_gt, n_pred) = (o.gt_area.len(), o.pred_area.len());
    let eligible: Vec<Pair> = o.pairs.iter().copied().filter(Pair::at_threshold).collect();
    let tp_pairs = match protocol {
        MatchProtocol::Greedy => greedy(&eligible, &o, n_gt, n_pred),
        MatchProtocol::Optimal => {
            let mut m = ScoreMatrix::new(n_gt, n_pred);
            for p in &eligible {
                m.set(p.gt, p.pred, p.iou())?;
            }
            let r = solve_ssm(&m, SolverOptions::default())?;
            r.flows
                .iter()
                .map(|&(g, p)| {
                    *eligible
                        .iter()
                        .find(|e| e.gt == g && e.pred == p)
                        .expect("flow in support")
                })
                .collect()
        }
    };
    let tp = tp_pairs.len();
    let fp = n_pred - tp;
    let fn_ = n_gt - tp;
    let (f1, ap) = if tp + fp + fn_ == 0 {
        (1.0, 1.0)
    } else {
        (
            2.0 * tp as f64 / (2 * tp + fp + fn_) as f64,
            tp as f64 / (tp + fp + fn_) as f64,
        )
    };
    let matched_iou = if tp == 0 {
        0.0
    } else {
        tp_pairs.iter().map(Pair::iou).sum::<f64>() / tp as f64
    };

    let aji_pairs = greedy(&o.pairs, &o, n_gt, n_pred);
    let mut inter = 0u64;
    let mut union = 0u64;
    let mut gt_done = vec![false; n_gt];
    let mut pred_used = vec![false; n_pred];
    for p in &aji_pairs {
        inter += p.inter;
        union += p.union;
        gt_done[p.gt] = true;
        pred_used[p.pred] = true;
    }
    union += (0..n_gt)
        .filter(|&g| !gt_done[g])
        .map(|g| o.gt_area[g])
        .sum::<u64>();
    union += (0..n_pred)
        .filter(|&p| !pred_used[p])
        .map(|p| o.pred_area[p])
        .sum::<u64>();
    let aji = if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    };

    Ok(MetricsReport {
        tp,
        fp,
        fn_,
        f1,
        ap,
        aji,
        matched_iou,
    })
}

pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    if reports.is_empty() {
        return MetricsReport::default();
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricsReport {
        tp: reports.iter().map(|r| r.tp).sum(),
        fp: reports.iter().map(|r| r.fp).sum(),
        fn_: reports.iter().map(|r| r.fn_).sum(),
        f1: mean(|r| r.f1),
        ap: mean(|r| r.ap),
        aji: mean(|r| r.aji),
        matched_iou: mean(|r| r.matched_iou),
    }
}

const COLUMNS: [&str; 8] = ["frame", "tp", "fp", "fn", "f1", "aji", "ap", "matched_iou"];

fn row(name: &str, r: &MetricsReport) -> [String; 8] {
    [
        name.to_string(),
        r.tp.to_string(),
        r.fp.to_string(),
        r.fn_.to_string(),
        format!("{:.6}", r.f1),
        format!("{:.6}", r.aji),
        format!("{:.6}", r.ap),
        format!("{:.6}", r.matched_iou),
    ]
}

/// Per-frame rows followed by a `mean` row.
pub fn write_csv<W: Write>(frames: &[(String, MetricsReport)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for (name, r) in frames {
        w.write_record(row(name, r))?;
    }
    let reports: Vec<MetricsReport> = frames.iter().map(|f| f.1).collect();
    w.write_record(row("mean", &mean_report(&reports)))?;
    w.flush()
        .map_err(|e| CebError::Format(format!("writing metrics: {e}")))?;
    Ok(())
}

pub fn format_table(frames: &[(String, MetricsReport)]) -> String {
    let reports: Vec<MetricsReport> = frames.iter().map(|f| f.1).collect();
    let mut rows: Vec<[String; 8]> = frames.iter().map(|(n, r)| row(n, r)).collect();
    rows.push(row("mean", &mean_report(&reports)));
    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for r in &rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(s, "{}", parts.join("  "));
    };
    line(&mut s, &COLUMNS);
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut s, &cells);
    }
    s
}
