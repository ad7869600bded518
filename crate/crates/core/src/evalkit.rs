//! Confusion-matrix metrics: accuracy plus one-vs-rest sensitivity,
//! specificity, and precision per class.

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Contract(format!(
                "confusion matrix: {} counts for {} classes",
                counts.len(),
                classes
            )));
        }
        Ok(ConfusionMatrix { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn accumulate(&mut self, true_label: usize, predicted: usize) -> Result<()> {
        if true_label >= self.classes {
            return Err(Error::index("accumulate", true_label, self.classes));
        }
        if predicted >= self.classes {
            return Err(Error::index("accumulate", predicted, self.classes));
        }
        self.counts[true_label * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn count(&self, true_label: usize, predicted: usize) -> u64 {
        self.counts[true_label * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Merges a partial matrix; accumulation is associative and
    /// commutative, so partial matrices from parallel work can combine.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Contract(format!(
                "merge: {} vs {} classes",
                self.classes, other.classes
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
        Ok(())
    }

    fn row_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|j| self.count(class, j)).sum()
    }

    fn col_sum(&self, class: usize) -> u64 {
        (0..self.classes).map(|i| self.count(i, class)).sum()
    }
}

/// One-vs-rest metrics; a `None` marks an undefined 0/0 denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    if den == 0 {
        None
    } else {
        Some(num as f64 / den as f64)
    }
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Contract("per_class_metrics: empty matrix".into()));
    }
    let mut per_class = Vec::with_capacity(cm.classes());
    let mut trace = 0u64;
    for c in 0..cm.classes() {
        let tp = cm.count(c, c);
        trace += tp;
        let fn_ = cm.row_sum(c) - tp;
        let fp = cm.col_sum(c) - tp;
        let tn = total - tp - fn_ - fp;
        per_class.push(ClassMetrics {
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            precision: ratio(tp, tp + fp),
        });
    }
    Ok(MetricsReport {
        per_class,
        accuracy: trace as f64 / total as f64,
    })
}

fn csv_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub const REPORT_CSV_HEADER: &str = "config,class,sensitivity,specificity,precision";

/// Per-class CSV rows plus the accuracy summary row, full precision.
pub fn report_csv_rows(
    config_label: &str,
    class_names: &[String],
    report: &MetricsReport,
) -> Vec<String> {
    let mut rows = Vec::with_capacity(report.per_class.len() + 1);
    for (name, m) in class_names.iter().zip(&report.per_class) {
        rows.push(format!(
            "{config_label},{name},{},{},{}",
            csv_cell(m.sensitivity),
            csv_cell(m.specificity),
            csv_cell(m.precision),
        ));
    }
    rows.push(format!(
        "{config_label},overall_accuracy,{},,",
        report.accuracy
    ));
    rows
}

/// Human-readable summary with whole-report percentages at 2 decimals.
pub fn format_report(config_label: &str, class_names: &[String], report: &MetricsReport) -> String {
    let pct = |v: Option<f64>| -> String {
        v.map(|x| format!("{:.2}%", x * 100.0)).unwrap_or_else(|| "n/a".into())
    };
    let mut out = format!(
        "{config_label}: accuracy {:.2}%\n",
        report.accuracy * 100.0
    );
    for (name, m) in class_names.iter().zip(&report.per_class) {
        out.push_str(&format!(
            "  {name}: sensitivity {}, specificity {}, precision {}\n",
            pct(m.sensitivity),
            pct(m.specificity),
            pct(m.precision),
        ));
    }
    out
}
