use std::fmt;

use crate::graph::model::ModelGraph;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub id: String,
    pub layer: String,
    pub kernel: String,
    pub activation: String,
    pub output_shape: String,
    pub dims: Vec<usize>,
    pub params: usize,
    pub connected_to: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    pub total: usize,
    pub trainable: usize,
    pub non_trainable: usize,
}

impl Summary {
    pub fn row(&self, id: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

pub fn summary<T: Real>(model: &ModelGraph<T>) -> Summary {
    let rows: Vec<SummaryRow> = model
        .nodes()
        .iter()
        .map(|n| SummaryRow {
            id: n.id.clone(),
            layer: n.label.clone(),
            kernel: n.kernel_text(),
            activation: n.activation.label().to_string(),
            output_shape: n.shape_text(),
            dims: n.output_dims.clone(),
            params: model.node_param_count(&n.id),
            connected_to: n.inputs.clone(),
        })
        .collect();
    let total = rows.iter().map(|r| r.params).sum();
    Summary {
        rows,
        total,
        trainable: total,
        non_trainable: 0,
    }
}

/// `138052` → `138,052`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = [
            "Layer (type)",
            "Kernel size",
            "Activation",
            "Output Shape",
            "Parameters",
            "Connected to",
        ];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.layer.clone(),
                    r.kernel.clone(),
                    r.activation.clone(),
                    r.output_shape.clone(),
                    r.params.to_string(),
                    r.connected_to.join(" & "),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, row: &[&str]| -> fmt::Result {
            let mut s = String::new();
            for (i, (c, w)) in row.iter().zip(&widths).enumerate() {
                if i == 4 {
                    s.push_str(&format!("{c:>w$}  "));
                } else {
                    s.push_str(&format!("{c:<w$}  "));
                }
            }
            writeln!(f, "{}", s.trim_end())
        };
        let rule = "=".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1));
        line(f, &header)?;
        writeln!(f, "{rule}")?;
        for row in &cells {
            let refs: Vec<&str> = row.iter().map(String::as_str).collect();
            line(f, &refs)?;
        }
        writeln!(f, "{rule}")?;
        writeln!(f, "Total params: {}", group_thousands(self.total))?;
        writeln!(f, "Trainable params: {}", group_thousands(self.trainable))?;
        writeln!(f, "Non-trainable params: {}", group_thousands(self.non_trainable))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(0), "0");
        assert_eq!(group_thousands(260), "260");
        assert_eq!(group_thousands(4160), "4,160");
        assert_eq!(group_thousands(138_052), "138,052");
        assert_eq!(group_thousands(1_234_567), "1,234,567");
    }
}
