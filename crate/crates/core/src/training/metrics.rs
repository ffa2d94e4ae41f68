use std::collections::BTreeMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::field::{LabelMap, IGNORE_LABEL};

/// `K×K` counts, rows indexed by ground truth and columns by prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Confusion {
    classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Confusion { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    /// Adds one labelled map; ignored units are skipped.
    pub fn add(&mut self, truth: &LabelMap, pred: &LabelMap) -> Result<()> {
        if truth.dims() != pred.dims() {
            return Err(Error::shape(format!("truth is {}, prediction is {}", truth.dims(), pred.dims())));
        }
        for (&t, &p) in truth.as_slice().iter().zip(pred.as_slice()) {
            if t == IGNORE_LABEL {
                continue;
            }
            let (t, p) = (t as usize, p as usize);
            if t >= self.classes || p >= self.classes {
                return Err(Error::shape(format!(
                    "label pair ({t}, {p}) out of range for {} classes",
                    self.classes
                )));
            }
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, pred)).sum()
    }

    /// Rows of counts, ground truth first.
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// Global pixel accuracy.
    pub gpa: f64,
    /// Average class accuracy over classes present in the ground truth.
    pub aca: f64,
    /// IoU of every class present in ground truth or prediction.
    pub per_class_iou: BTreeMap<usize, f64>,
    pub mean_iou: f64,
    pub confusion: Confusion,
}

impl MetricsReport {
    pub fn from_confusion(confusion: Confusion) -> Result<Self> {
        let total = confusion.total();
        if total == 0 {
            return Err(Error::Empty("no labelled units to evaluate".into()));
        }
        let k = confusion.classes();
        let correct: u64 = (0..k).map(|c| confusion.get(c, c)).sum();
        let gpa = correct as f64 / total as f64;

        let mut recall_sum = 0.0;
        let mut present = 0usize;
        let mut per_class_iou = BTreeMap::new();
        for c in 0..k {
            let tp = confusion.get(c, c);
            let gt = confusion.row_sum(c);
            let predicted = confusion.col_sum(c);
            if gt > 0 {
                recall_sum += tp as f64 / gt as f64;
                present += 1;
            }
            let union = gt + predicted - tp;
            if union > 0 {
                per_class_iou.insert(c, tp as f64 / union as f64);
            }
        }
        let aca = recall_sum / present as f64;
        let mean_iou = per_class_iou.values().sum::<f64>() / per_class_iou.len() as f64;
        Ok(MetricsReport { gpa, aca, per_class_iou, mean_iou, confusion })
    }

    /// Metrics of one set of `(truth, prediction)` label maps.
    pub fn from_maps<'a>(
        classes: usize,
        pairs: impl IntoIterator<Item = (&'a LabelMap, &'a LabelMap)>,
    ) -> Result<Self> {
        let mut confusion = Confusion::new(classes);
        for (t, p) in pairs {
            confusion.add(t, p)?;
        }
        Self::from_confusion(confusion)
    }

    /// Recall of one class, `None` if it never occurs in the ground truth.
    pub fn recall(&self, class: usize) -> Option<f64> {
        let gt = self.confusion.row_sum(class);
        (gt > 0).then(|| self.confusion.get(class, class) as f64 / gt as f64)
    }

    /// `key=value` lines, one metric per line.
    pub fn key_values(&self) -> String {
        let mut s = format!("gpa={:.6}\naca={:.6}\nmiou={:.6}\n", self.gpa, self.aca, self.mean_iou);
        for (c, iou) in &self.per_class_iou {
            s.push_str(&format!("iou_{c}={iou:.6}\n"));
        }
        s
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<22}{:>10.4}", "global pixel accuracy", self.gpa)?;
        writeln!(f, "{:<22}{:>10.4}", "average class acc.", self.aca)?;
        for (c, iou) in &self.per_class_iou {
            writeln!(f, "{:<22}{:>10.4}", format!("IoU class {c}"), iou)?;
        }
        write!(f, "{:<22}{:>10.4}", "mean IoU", self.mean_iou)
    }
}
