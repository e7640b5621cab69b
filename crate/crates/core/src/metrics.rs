//! Confusion matrices, per-class precision/recall/F1, and the stratified
//! cross-tab of fused correctness against two base models.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{CrispLabel, LabelSpace};
use crate::similarity::MeasureKind;

/// `counts[t][p]` = samples with true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.class_count()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth].iter().sum()
    }

    pub fn column_sum(&self, predicted: usize) -> u64 {
        self.counts.iter().map(|row| row[predicted]).sum()
    }
}

pub fn confusion(preds: &[usize], truth: &[CrispLabel], class_count: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions but {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut counts = vec![vec![0u64; class_count]; class_count];
    for (i, (&p, t)) in preds.iter().zip(truth).enumerate() {
        let t = t.index();
        if p >= class_count || t >= class_count {
            return Err(Error::validation(format!(
                "sample {i}: class index out of range for {class_count} classes"
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// A ratio that may be undefined because its denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ratio {
    Value(f64),
    Undefined(String),
}

impl Ratio {
    fn of(num: u64, den: u64, reason: &str) -> Self {
        if den == 0 {
            Ratio::Undefined(reason.to_owned())
        } else {
            Ratio::Value(num as f64 / den as f64)
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Ratio::Value(v) => Some(*v),
            Ratio::Undefined(_) => None,
        }
    }
}

/// Evaluation protocol a report was produced under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    Single,
    Multi(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_name: String,
    pub support: u64,
    pub predicted: u64,
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub measure: MeasureKind,
    pub crop_mode: CropMode,
    pub sample_count: u64,
    pub overall_accuracy: f64,
    pub error_rate: f64,
    pub per_class: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
}

pub fn report(
    cm: &ConfusionMatrix,
    labels: &LabelSpace,
    measure: MeasureKind,
    crop_mode: CropMode,
) -> Result<EvaluationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::validation("cannot report on zero evaluated samples"));
    }
    if cm.class_count() != labels.class_count() {
        return Err(Error::shape(format!(
            "confusion matrix has {} classes, label space {}",
            cm.class_count(),
            labels.class_count()
        )));
    }
    let overall_accuracy = cm.trace() as f64 / total as f64;
    let per_class = labels
        .names()
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let tp = cm.get(c, c);
            let support = cm.row_sum(c);
            let predicted = cm.column_sum(c);
            let precision = Ratio::of(tp, predicted, "no samples predicted as this class");
            let recall = Ratio::of(tp, support, "no samples of this class");
            let f1 = match (precision.value(), recall.value()) {
                (Some(p), Some(r)) if p + r > 0.0 => Ratio::Value(2.0 * p * r / (p + r)),
                (Some(_), Some(_)) => Ratio::Value(0.0),
                _ => Ratio::Undefined("precision or recall undefined".into()),
            };
            ClassReport { class_name: name.clone(), support, predicted, precision, recall, f1 }
        })
        .collect();
    Ok(EvaluationReport {
        measure,
        crop_mode,
        sample_count: total,
        overall_accuracy,
        error_rate: 1.0 - overall_accuracy,
        per_class,
        confusion: cm.clone(),
    })
}

/// Which of the two base models got a sample right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    BothWrong,
    FirstWrong,
    SecondWrong,
    BothFine,
}

impl Stratum {
    pub const ALL: [Stratum; 4] =
        [Stratum::BothWrong, Stratum::FirstWrong, Stratum::SecondWrong, Stratum::BothFine];

    fn of(first_ok: bool, second_ok: bool) -> Self {
        match (first_ok, second_ok) {
            (false, false) => Stratum::BothWrong,
            (false, true) => Stratum::FirstWrong,
            (true, false) => Stratum::SecondWrong,
            (true, true) => Stratum::BothFine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCell {
    pub stratum: Stratum,
    pub samples: u64,
    pub fused_correct: u64,
    /// `None` when the stratum is empty.
    pub well_classified_pct: Option<f64>,
    pub misclassified_pct: Option<f64>,
}

/// Fused correctness broken down by the correctness of two base models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionCrossTab {
    pub model_names: [String; 2],
    /// In [`Stratum::ALL`] order.
    pub cells: Vec<StratumCell>,
}

impl FusionCrossTab {
    pub fn cell(&self, stratum: Stratum) -> &StratumCell {
        self.cells.iter().find(|c| c.stratum == stratum).expect("all strata present")
    }
}

pub fn crosstab(
    fused: &[usize],
    base_preds: &[Vec<usize>],
    truth: &[CrispLabel],
) -> Result<FusionCrossTab> {
    if base_preds.len() != 2 {
        return Err(Error::UnsupportedArity(base_preds.len()));
    }
    let n = truth.len();
    if fused.len() != n || base_preds.iter().any(|b| b.len() != n) {
        return Err(Error::shape(format!(
            "cross-tab inputs misaligned: {} fused, {} and {} base predictions, {n} labels",
            fused.len(),
            base_preds[0].len(),
            base_preds[1].len()
        )));
    }
    let mut samples = [0u64; 4];
    let mut correct = [0u64; 4];
    for i in 0..n {
        let t = truth[i].index();
        let s = Stratum::of(base_preds[0][i] == t, base_preds[1][i] == t) as usize;
        samples[s] += 1;
        correct[s] += u64::from(fused[i] == t);
    }
    let cells = Stratum::ALL
        .iter()
        .map(|&stratum| {
            let (n, ok) = (samples[stratum as usize], correct[stratum as usize]);
            let share = |count: u64| (n > 0).then(|| 100.0 * count as f64 / n as f64);
            StratumCell {
                stratum,
                samples: n,
                fused_correct: ok,
                well_classified_pct: share(ok),
                misclassified_pct: share(n - ok),
            }
        })
        .collect();
    Ok(FusionCrossTab { model_names: ["CNN_1".into(), "CNN_2".into()], cells })
}

fn pct(r: &Ratio) -> String {
    match r {
        Ratio::Value(v) => format!("{:.2}%", 100.0 * v),
        Ratio::Undefined(_) => "n/a".into(),
    }
}

/// Per-class table: class, support, precision, recall, F1.
pub fn render_class_table(report: &EvaluationReport) -> String {
    let width = report.per_class.iter().map(|c| c.class_name.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>8}  {:>9}  {:>9}  {:>9}",
        "Class", "#Samples", "Precision", "Recall", "F1"
    );
    for c in &report.per_class {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>9}  {:>9}  {:>9}",
            c.class_name,
            c.support,
            pct(&c.precision),
            pct(&c.recall),
            pct(&c.f1)
        );
    }
    let _ = writeln!(
        out,
        "accuracy {:.2}%  error rate {:.2}%  ({} samples, measure {})",
        100.0 * report.overall_accuracy,
        100.0 * report.error_rate,
        report.sample_count,
        report.measure
    );
    out
}

/// One row per measure: accuracy and error rate.
pub fn render_measure_summary(reports: &[EvaluationReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<7}  {:>9}  {:>10}", "Measure", "Accuracy", "Error rate");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<7}  {:>8.2}%  {:>9.2}%",
            r.measure.tag(),
            100.0 * r.overall_accuracy,
            100.0 * r.error_rate
        );
    }
    out
}

pub fn render_crosstab(ct: &FusionCrossTab) -> String {
    let [a, b] = &ct.model_names;
    let heads = ["Both wrong".to_string(), format!("{a} wrong"), format!("{b} wrong"), "Both fine".into()];
    let fmt = |v: Option<f64>| v.map_or_else(|| "empty".to_string(), |p| format!("{p:.2}%"));
    let mut out = String::new();
    let _ = write!(out, "{:<16}", "Fusion");
    for h in &heads {
        let _ = write!(out, "  {h:>14}");
    }
    out.push('\n');
    for (label, pick) in [("Well-classified", true), ("Misclassified", false)] {
        let _ = write!(out, "{label:<16}");
        for cell in &ct.cells {
            let v = if pick { cell.well_classified_pct } else { cell.misclassified_pct };
            let _ = write!(out, "  {:>14}", fmt(v));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<16}", "Samples");
    for cell in &ct.cells {
        let _ = write!(out, "  {:>14}", cell.samples);
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(idx: &[usize], c: usize) -> Vec<CrispLabel> {
        let ls = LabelSpace::indexed(c).unwrap();
        idx.iter().map(|&i| CrispLabel::new(i, &ls).unwrap()).collect()
    }

    #[test]
    fn all_correct_is_diagonal() {
        let truth = [0, 1, 2, 2, 1];
        let cm = confusion(&truth, &labels(&truth, 3), 3).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        let r = report(&cm, &LabelSpace::indexed(3).unwrap(), MeasureKind::S2, CropMode::Single)
            .unwrap();
        assert_eq!(r.overall_accuracy, 1.0);
        assert_eq!(r.error_rate, 0.0);
        for c in &r.per_class {
            assert_eq!(c.precision, Ratio::Value(1.0));
            assert_eq!(c.recall, Ratio::Value(1.0));
            assert_eq!(c.f1, Ratio::Value(1.0));
        }
    }

    #[test]
    fn empty_confusion_and_report() {
        let cm = confusion(&[], &[], 4).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(cm.counts().iter().flatten().all(|&n| n == 0));
        assert!(report(&cm, &LabelSpace::indexed(4).unwrap(), MeasureKind::N, CropMode::Single)
            .is_err());
    }

    #[test]
    fn confusion_errors() {
        assert!(confusion(&[0, 1], &labels(&[0], 2), 2).is_err());
        assert!(confusion(&[2], &labels(&[0], 2), 2).is_err());
    }

    #[test]
    fn balanced_two_class_report() {
        // cm = [[3,1],[1,3]]
        let preds = [0, 0, 0, 1, 1, 1, 1, 0];
        let truth = [0, 0, 0, 0, 1, 1, 1, 1];
        let cm = confusion(&preds, &labels(&truth, 2), 2).unwrap();
        assert_eq!(cm.counts(), &[vec![3, 1], vec![1, 3]]);
        let r = report(&cm, &LabelSpace::indexed(2).unwrap(), MeasureKind::I2, CropMode::Multi(10))
            .unwrap();
        assert_eq!(r.overall_accuracy, 0.75);
        for c in &r.per_class {
            assert_eq!(c.precision, Ratio::Value(0.75));
            assert_eq!(c.recall, Ratio::Value(0.75));
            assert_eq!(c.f1, Ratio::Value(0.75));
            assert_eq!(c.support, 4);
        }
    }

    #[test]
    fn absent_class_has_undefined_ratios() {
        let cm = confusion(&[0, 1], &labels(&[0, 1], 3), 3).unwrap();
        let r = report(&cm, &LabelSpace::indexed(3).unwrap(), MeasureKind::C, CropMode::Single)
            .unwrap();
        let c = &r.per_class[2];
        assert!(matches!(c.precision, Ratio::Undefined(_)));
        assert!(matches!(c.recall, Ratio::Undefined(_)));
        assert!(matches!(c.f1, Ratio::Undefined(_)));
    }

    #[test]
    fn zero_precision_and_recall_give_zero_f1() {
        // class 0 predicted once (wrong) and present once (missed)
        let cm = confusion(&[0, 1], &labels(&[1, 0], 2), 2).unwrap();
        let r = report(&cm, &LabelSpace::indexed(2).unwrap(), MeasureKind::C, CropMode::Single)
            .unwrap();
        assert_eq!(r.per_class[0].f1, Ratio::Value(0.0));
    }

    #[test]
    fn crosstab_always_correct() {
        let truth = [0, 1, 1, 0];
        let ct = crosstab(&truth, &[vec![1, 1, 0, 0], vec![1, 0, 1, 0]], &labels(&truth, 2)).unwrap();
        for cell in &ct.cells {
            assert_eq!(cell.well_classified_pct, Some(100.0));
            assert_eq!(cell.misclassified_pct, Some(0.0));
        }
    }

    #[test]
    fn crosstab_copy_of_first_model() {
        let truth = [0, 1, 1, 0, 1];
        let first = vec![1, 1, 0, 0, 1];
        let second = vec![0, 1, 1, 1, 1];
        let ct = crosstab(&first, &[first.clone(), second], &labels(&truth, 2)).unwrap();
        assert_eq!(ct.cell(Stratum::FirstWrong).well_classified_pct, Some(0.0));
        assert_eq!(ct.cell(Stratum::BothFine).well_classified_pct, Some(100.0));
        assert_eq!(ct.cell(Stratum::BothWrong).samples, 0);
        assert_eq!(ct.cell(Stratum::BothWrong).well_classified_pct, None);
    }

    #[test]
    fn crosstab_arity_and_alignment() {
        let t = labels(&[0], 2);
        assert!(matches!(crosstab(&[0], &[vec![0]], &t), Err(Error::UnsupportedArity(1))));
        assert!(matches!(
            crosstab(&[0], &[vec![0], vec![0], vec![0]], &t),
            Err(Error::UnsupportedArity(3))
        ));
        assert!(matches!(crosstab(&[0], &[vec![0], vec![]], &t), Err(Error::Shape(_))));
    }

    #[test]
    fn tables_render_two_decimals() {
        let truth = [0, 0, 1];
        let cm = confusion(&[0, 1, 1], &labels(&truth, 2), 2).unwrap();
        let r = report(&cm, &LabelSpace::new(["Bread", "Rice"]).unwrap(), MeasureKind::S2, CropMode::Single)
            .unwrap();
        let table = render_class_table(&r);
        assert!(table.contains("Bread"));
        assert!(table.contains("66.67%"), "{table}");
        assert!(render_measure_summary(&[r]).contains("S2"));
    }
}
