use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::label_char;
use crate::error::{Error, Result};

/// `counts[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        for index in [truth, predicted] {
            if index >= self.classes {
                return Err(Error::ClassOutOfRange { index, classes: self.classes });
            }
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Header of class labels, then one row of counts per true class.
    pub fn to_csv(&self) -> String {
        let name = |k: usize| match label_char(k) {
            Some(c) if self.classes <= 52 => c.to_string(),
            _ => k.to_string(),
        };
        let mut out = (0..self.classes).map(name).collect::<Vec<_>>().join(",");
        out.push('\n');
        for k in 0..self.classes {
            let row: Vec<String> = self.row(k).iter().map(u64::to_string).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub rows: Vec<MetricsRow>,
}

impl Metrics {
    pub const HEADER: &'static str = "epoch,train_loss,train_acc,test_loss,test_acc";

    pub fn push(&mut self, row: MetricsRow) {
        self.rows.push(row);
    }

    pub fn last(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.train_acc,
                opt(r.test_loss),
                opt(r.test_acc)
            );
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_fill_the_diagonal() {
        let mut cm = ConfusionMatrix::new(52);
        for k in 0..10 {
            cm.record(k, k).unwrap();
        }
        assert_eq!(cm.accuracy(), 1.0);
        assert_eq!(cm.total(), 10);
        assert_eq!(cm.correct(), 10);
    }

    #[test]
    fn constant_predictor_fills_one_column() {
        let mut cm = ConfusionMatrix::new(52);
        let truth = [3, 3, 5, 7];
        for t in truth {
            cm.record(t, 3).unwrap();
        }
        assert_eq!(cm.accuracy(), 0.5);
        for t in 0..52 {
            for p in 0..52 {
                if p != 3 {
                    assert_eq!(cm.get(t, p), 0);
                }
            }
        }
        assert_eq!(cm.row(3).iter().sum::<u64>(), 2);
    }

    #[test]
    fn out_of_range_class() {
        assert!(ConfusionMatrix::new(4).record(4, 0).is_err());
    }

    #[test]
    fn confusion_csv_layout() {
        let mut cm = ConfusionMatrix::new(52);
        cm.record(26, 0).unwrap();
        let csv = cm.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 53);
        assert!(lines[0].starts_with("a,b,c"));
        assert!(lines[0].ends_with("Y,Z"));
        assert!(lines[27].starts_with("1,0"));
    }

    #[test]
    fn metrics_csv_leaves_missing_test_columns_empty() {
        let mut m = Metrics::default();
        m.push(MetricsRow { epoch: 1, train_loss: 1.5, train_acc: 0.25, test_loss: None, test_acc: None });
        m.push(MetricsRow { epoch: 2, train_loss: 1.0, train_acc: 0.5, test_loss: Some(2.0), test_acc: Some(0.125) });
        assert_eq!(
            m.to_csv(),
            "epoch,train_loss,train_acc,test_loss,test_acc\n1,1.5,0.25,,\n2,1,0.5,2,0.125\n"
        );
    }
}
