//! Five-class and binary classification metrics, business metrics over
//! session logs, and the per-stage comparison table.
//!
//! Metric values are percentages in [0, 100]. Undefined ratios (a zero
//! denominator) are `None` rather than NaN.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::SessionLog;
use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::scalar::Scalar;
use crate::schema::{collapse_to_binary, BinaryLabel, Dataset, Label};
use crate::selection::predict_labels;

/// K×K counts indexed (truth, prediction), plus per-truth counts of
/// predictions that could not be parsed into any class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    k: usize,
    grid: Vec<u64>,
    unparsed: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            grid: vec![0; k * k],
            unparsed: vec![0; k],
        }
    }

    pub fn from_grid(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidArgument("confusion grid must be square".into()));
        }
        Ok(ConfusionMatrix {
            k,
            grid: rows.concat(),
            unparsed: vec![0; k],
        })
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn add(&mut self, truth: usize, pred: Option<usize>) {
        match pred {
            Some(p) => self.grid[truth * self.k + p] += 1,
            None => self.unparsed[truth] += 1,
        }
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.grid[truth * self.k + pred]
    }

    pub fn unparsed(&self, truth: usize) -> u64 {
        self.unparsed[truth]
    }

    /// Number of examples whose truth is `t`.
    pub fn support(&self, t: usize) -> u64 {
        (0..self.k).map(|p| self.get(t, p)).sum::<u64>() + self.unparsed[t]
    }

    pub fn predicted(&self, p: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, p)).sum()
    }

    pub fn total(&self) -> u64 {
        self.grid.iter().sum::<u64>() + self.unparsed.iter().sum::<u64>()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn scaled(&self, c: u64) -> Self {
        ConfusionMatrix {
            k: self.k,
            grid: self.grid.iter().map(|x| x * c).collect(),
            unparsed: self.unparsed.iter().map(|x| x * c).collect(),
        }
    }

    /// 2×2 matrix over (Relevant, Irrelevant) for a five-class matrix
    /// indexed by label rank.
    pub fn collapse(&self) -> ConfusionMatrix {
        assert_eq!(self.k, 5, "collapse needs a five-class matrix");
        let bin = |i: usize| match collapse_to_binary(Label::from_rank(i as u8).unwrap()) {
            BinaryLabel::Relevant => 0,
            BinaryLabel::NotRelevant => 1,
        };
        let mut m = ConfusionMatrix::new(2);
        for t in 0..5 {
            for p in 0..5 {
                m.grid[bin(t) * 2 + bin(p)] += self.get(t, p);
            }
            m.unparsed[bin(t)] += self.unparsed[t];
        }
        m
    }

    pub fn class_metrics(&self, c: usize) -> ClassMetrics {
        let tp = self.get(c, c);
        let precision = pct(tp, self.predicted(c));
        let recall = pct(tp, self.support(c));
        ClassMetrics {
            precision,
            recall,
            f1: f1(precision, recall),
            support: self.support(c),
        }
    }
}

fn pct(a: u64, b: u64) -> Option<f64> {
    (b > 0).then(|| 100.0 * a as f64 / b as f64)
}

/// Harmonic mean; undefined if either side is, 0 when both are 0.
fn f1(p: Option<f64>, r: Option<f64>) -> Option<f64> {
    let (p, r) = (p?, r?);
    Some(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub support: u64,
}

/// Five-class matrix indexed by label rank; `None` predictions are
/// recorded as unparsed and count as errors.
pub fn confusion(truths: &[Label], preds: &[Option<Label>]) -> Result<ConfusionMatrix> {
    if truths.len() != preds.len() {
        return Err(Error::LengthMismatch {
            truths: truths.len(),
            preds: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut m = ConfusionMatrix::new(5);
    for (t, p) in truths.iter().zip(preds) {
        m.add(t.index(), p.map(Label::index));
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveClass {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

/// Macro F1 (zero-support and undefined classes count as 0), support-
/// weighted F1 and accuracy. Works for any K.
pub fn five_class_metrics(m: &ConfusionMatrix) -> Result<FiveClass> {
    let total = m.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let per: Vec<ClassMetrics> = (0..m.classes()).map(|c| m.class_metrics(c)).collect();
    let macro_f1 = per.iter().map(|c| c.f1.unwrap_or(0.0)).sum::<f64>() / per.len() as f64;
    let weighted_f1 = per.iter().map(|c| c.f1.unwrap_or(0.0) * c.support as f64).sum::<f64>() / total as f64;
    Ok(FiveClass {
        macro_f1,
        weighted_f1,
        accuracy: 100.0 * m.trace() as f64 / total as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl BinaryMetrics {
    fn of(m: &ConfusionMatrix) -> Self {
        let c = m.collapse().class_metrics(0);
        BinaryMetrics {
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
        }
    }
}

/// Relevant-vs-irrelevant metrics on the collapsed labels.
pub fn binary_metrics(truths: &[Label], preds: &[Option<Label>]) -> Result<BinaryMetrics> {
    Ok(BinaryMetrics::of(&confusion(truths, preds)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub binary: BinaryMetrics,
    /// In [`Label::ALL`] order.
    pub per_class: Vec<(Label, ClassMetrics)>,
    pub unparsed: u64,
}

impl MetricsReport {
    pub fn from_confusion(m: &ConfusionMatrix) -> Result<Self> {
        let f = five_class_metrics(m)?;
        Ok(MetricsReport {
            macro_f1: f.macro_f1,
            weighted_f1: f.weighted_f1,
            accuracy: f.accuracy,
            binary: BinaryMetrics::of(m),
            per_class: Label::ALL.iter().map(|l| (*l, m.class_metrics(l.index()))).collect(),
            unparsed: (0..5).map(|t| m.unparsed(t)).sum(),
        })
    }

    pub fn class(&self, l: Label) -> ClassMetrics {
        self.per_class.iter().find(|(x, _)| *x == l).unwrap().1
    }
}

pub fn evaluate<T: Scalar>(c: &Checkpoint<T>, test: &Dataset) -> Result<MetricsReport> {
    let preds = predict_labels(c, test)?;
    let truths: Vec<Label> = test.iter().map(|e| e.label).collect();
    MetricsReport::from_confusion(&confusion(&truths, &preds)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusinessMetrics {
    pub uv_value: f64,
    pub ucvr: f64,
    pub uctr: f64,
}

/// GMV per unique visitor (in currency units), orderlines per visitor and
/// clicks per visitor.
pub fn business_metrics(log: &SessionLog) -> Result<BusinessMetrics> {
    let uv = log.uv();
    if uv == 0 {
        return Err(Error::ZeroUv);
    }
    let uv = uv as f64;
    Ok(BusinessMetrics {
        uv_value: log.total_gmv_cents() as f64 / 100.0 / uv,
        ucvr: log.total_orderlines() as f64 / uv,
        uctr: log.total_clicks() as f64 / uv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub metrics: MetricsReport,
}

/// One row per checkpoint, in the order given.
pub fn stage_report<T: Scalar>(checkpoints: &[&Checkpoint<T>], test: &Dataset) -> Result<Vec<StageRow>> {
    if checkpoints.is_empty() {
        return Err(Error::InvalidArgument("no checkpoints to compare".into()));
    }
    checkpoints
        .iter()
        .map(|c| {
            Ok(StageRow {
                stage: c.stage_tag.clone(),
                metrics: evaluate(*c, test)?,
            })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"))
}

/// Aligned plain-text table, two decimals.
pub fn format_stage_table(rows: &[StageRow]) -> String {
    let heads = ["Stage", "MacroF1", "WeightedF1", "Acc", "BinP", "BinR", "BinF1"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            let m = &r.metrics;
            [
                r.stage.clone(),
                cell(Some(m.macro_f1)),
                cell(Some(m.weighted_f1)),
                cell(Some(m.accuracy)),
                cell(m.binary.precision),
                cell(m.binary.recall),
                cell(m.binary.f1),
            ]
        })
        .collect();
    let mut widths = heads.map(str::len);
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, (c, w)) in cells.iter().zip(widths).enumerate() {
            if i == 0 {
                let _ = write!(out, "{c:<w$}");
            } else {
                let _ = write!(out, "  {c:>w$}");
            }
        }
        out.push('\n');
    };
    line(&mut out, &heads);
    for r in &body {
        line(&mut out, &r.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::corpus::UserActivity;
    use Label::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn identical_lists_give_a_diagonal() {
        let t = [Exact, Marginal, Marginal, Irrelevant];
        let p: Vec<_> = t.iter().map(|l| Some(*l)).collect();
        let m = confusion(&t, &p).unwrap();
        assert_eq!(m.trace(), 4);
        let f = five_class_metrics(&m).unwrap();
        assert!(close(f.accuracy, 100.0) && close(f.weighted_f1, 100.0));
        // two classes have no support and count as 0 in the macro average
        assert!(close(f.macro_f1, 60.0));
    }

    #[test]
    fn single_off_diagonal() {
        let m = confusion(&[Exact], &[Some(Marginal)]).unwrap();
        assert_eq!(m.get(Exact.index(), Marginal.index()), 1);
        assert_eq!(m.total(), 1);
        assert!(matches!(confusion(&[Exact], &[]), Err(Error::LengthMismatch { .. })));
        assert!(confusion(&[], &[]).is_err());
    }

    #[test]
    fn perfect_five_class() {
        let t = Label::ALL;
        let p = t.map(Some);
        let f = five_class_metrics(&confusion(&t, &p).unwrap()).unwrap();
        assert_eq!((f.macro_f1, f.weighted_f1, f.accuracy), (100.0, 100.0, 100.0));
        let b = binary_metrics(&t, &p).unwrap();
        assert_eq!((b.precision, b.recall, b.f1), (Some(100.0), Some(100.0), Some(100.0)));
    }

    #[test]
    fn all_relevant_on_half_relevant_fixture() {
        let t = [Exact, Significant, Marginal, Irrelevant];
        let b = binary_metrics(&t, &[Some(Exact); 4]).unwrap();
        assert!(close(b.precision.unwrap(), 50.0));
        assert!(close(b.recall.unwrap(), 100.0));
        assert!(close(b.f1.unwrap(), 200.0 / 3.0));
    }

    #[test]
    fn no_positive_predictions() {
        let b = binary_metrics(&[Exact, Trivial], &[Some(Marginal), Some(Trivial)]).unwrap();
        assert_eq!(b.precision, None);
        assert_eq!(b.recall, Some(0.0));
        assert_eq!(b.f1, None);
    }

    #[test]
    fn unparsed_predictions_count_against_recall_only() {
        let m = confusion(&[Exact, Exact], &[Some(Exact), None]).unwrap();
        let c = m.class_metrics(Exact.index());
        assert_eq!(c.precision, Some(100.0));
        assert_eq!(c.recall, Some(50.0));
        assert!(close(five_class_metrics(&m).unwrap().accuracy, 50.0));
    }

    #[test]
    fn row_sums_are_truth_counts() {
        let t = [Exact, Exact, Trivial, Marginal, Marginal, Marginal];
        let p = [
            Some(Exact),
            Some(Trivial),
            None,
            Some(Significant),
            Some(Marginal),
            Some(Exact),
        ];
        let m = confusion(&t, &p).unwrap();
        for l in Label::ALL {
            assert_eq!(m.support(l.index()), t.iter().filter(|x| **x == l).count() as u64);
        }
    }

    #[test]
    fn business_formulas() {
        let users = (0..50)
            .map(|u| UserActivity {
                user: u,
                clicks: if u == 0 { 5 } else { 0 },
                orderlines: if u < 2 { 1 } else { 0 },
                gmv_cents: if u == 0 { 10_000 } else { 0 },
            })
            .collect();
        let log = SessionLog {
            users,
            ..Default::default()
        };
        let b = business_metrics(&log).unwrap();
        assert!(close(b.uv_value, 2.0));
        assert!(close(b.ucvr, 0.04));
        assert!(close(b.uctr, 0.1));
        let idle = SessionLog {
            users: vec![UserActivity {
                user: 0,
                clicks: 0,
                orderlines: 0,
                gmv_cents: 0,
            }],
            ..Default::default()
        };
        let z = business_metrics(&idle).unwrap();
        assert_eq!((z.uv_value, z.ucvr, z.uctr), (0.0, 0.0, 0.0));
        assert!(matches!(business_metrics(&SessionLog::default()), Err(Error::ZeroUv)));
    }

    #[test]
    fn table_has_a_row_per_stage() {
        let m =
            MetricsReport::from_confusion(&confusion(&[Exact, Trivial], &[Some(Exact), Some(Exact)]).unwrap()).unwrap();
        let rows = vec![
            StageRow {
                stage: "IM".into(),
                metrics: m.clone(),
            },
            StageRow {
                stage: "final".into(),
                metrics: m,
            },
        ];
        let t = format_stage_table(&rows);
        assert_eq!(t.lines().count(), 3);
        assert!(t.lines().nth(1).unwrap().starts_with("IM "));
        assert!(t.contains("66.67"));
    }

    fn label() -> impl Strategy<Value = Label> {
        (0u8..5).prop_map(|r| Label::from_rank(r).unwrap())
    }

    fn pairs() -> impl Strategy<Value = Vec<(Label, Option<Label>)>> {
        prop::collection::vec((label(), prop::option::weighted(0.95, label())), 1..60)
    }

    proptest! {
        #[test]
        fn accuracy_is_weighted_recall(ps in pairs()) {
            let (t, p): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
            let m = confusion(&t, &p).unwrap();
            let f = five_class_metrics(&m).unwrap();
            let wr: f64 = (0..5)
                .map(|c| m.class_metrics(c).recall.unwrap_or(0.0) * m.support(c) as f64)
                .sum::<f64>() / m.total() as f64;
            prop_assert!((f.accuracy - wr).abs() < 1e-9);
            for v in [f.accuracy, f.macro_f1, f.weighted_f1] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
        }

        #[test]
        fn permutation_invariant(ps in pairs(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = ps.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let (t1, p1): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
            let (t2, p2): (Vec<_>, Vec<_>) = shuffled.into_iter().unzip();
            let a = MetricsReport::from_confusion(&confusion(&t1, &p1).unwrap()).unwrap();
            let b = MetricsReport::from_confusion(&confusion(&t2, &p2).unwrap()).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn scale_invariant(ps in pairs(), c in 1u64..7) {
            let (t, p): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
            let m = confusion(&t, &p).unwrap();
            let a = five_class_metrics(&m).unwrap();
            let b = five_class_metrics(&m.scaled(c)).unwrap();
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-9);
            prop_assert!((a.weighted_f1 - b.weighted_f1).abs() < 1e-9);
            prop_assert!((a.accuracy - b.accuracy).abs() < 1e-9);
        }

        #[test]
        fn binary_matches_collapsed_recount(ps in pairs()) {
            let (t, p): (Vec<_>, Vec<_>) = ps.into_iter().unzip();
            let b = binary_metrics(&t, &p).unwrap();
            let rel = |l: &Label| collapse_to_binary(*l) == BinaryLabel::Relevant;
            let tp = t.iter().zip(&p).filter(|(t, p)| rel(t) && p.as_ref().is_some_and(rel)).count();
            let pp = p.iter().filter(|p| p.as_ref().is_some_and(rel)).count();
            let ap = t.iter().filter(|t| rel(t)).count();
            let prec = (pp > 0).then(|| 100.0 * tp as f64 / pp as f64);
            let rec = (ap > 0).then(|| 100.0 * tp as f64 / ap as f64);
            prop_assert_eq!(b.precision, prec);
            prop_assert_eq!(b.recall, rec);
        }
    }
}
