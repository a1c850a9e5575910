//! Line-delimited JSON export of training history and metrics.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::train::metrics::MetricsReport;
use crate::train::trainer::{EpochRecord, History};

#[derive(Serialize)]
struct EpochLine {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_acc: Option<f64>,
    seconds: f64,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum MetricsLine<'a> {
    Class {
        split: &'a str,
        class: &'a str,
        precision: f64,
        recall: f64,
        f1: f64,
        support: u64,
    },
    Overall {
        split: &'a str,
        accuracy: f64,
        macro_f1: f64,
        samples: u64,
    },
}

fn put(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(std::io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

pub fn write_epoch_jsonl(rec: &EpochRecord, out: &mut dyn Write) -> Result<()> {
    put(
        out,
        &EpochLine {
            epoch: rec.epoch,
            train_loss: rec.train_loss,
            train_acc: rec.train_acc,
            val_acc: rec.val_acc,
            seconds: rec.seconds,
        },
    )
}

/// One record per epoch.
pub fn write_history_jsonl(history: &History, out: &mut dyn Write) -> Result<()> {
    for rec in &history.epochs {
        write_epoch_jsonl(rec, out)?;
    }
    Ok(())
}

/// One record per class, then one overall record, each tagged with `split`.
pub fn write_metrics_jsonl(report: &MetricsReport, split: &str, out: &mut dyn Write) -> Result<()> {
    for c in &report.classes {
        put(
            out,
            &MetricsLine::Class {
                split,
                class: &c.name,
                precision: c.precision,
                recall: c.recall,
                f1: c.f1,
                support: c.support,
            },
        )?;
    }
    put(
        out,
        &MetricsLine::Overall {
            split,
            accuracy: report.accuracy,
            macro_f1: report.macro_f1,
            samples: report.samples,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_line_shape() {
        let rec = EpochRecord {
            epoch: 2,
            train_loss: 0.5,
            train_acc: 0.75,
            val_acc: None,
            seconds: 1.5,
        };
        let mut buf = Vec::new();
        write_epoch_jsonl(&rec, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"epoch\":2,\"train_loss\":0.5,\"train_acc\":0.75,\"val_acc\":null,\"seconds\":1.5}\n"
        );
    }
}
