//! Reference layer table of the default network (4 classes, 224x224x1 input).

use crate::graph::model::ModelGraph;
use crate::graph::summary::summary;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRow {
    pub id: &'static str,
    pub output: &'static [usize],
    pub params: usize,
}

const fn row(id: &'static str, output: &'static [usize], params: usize) -> TableRow {
    TableRow { id, output, params }
}

pub const REFERENCE_TOTAL: usize = 138_052;

pub const REFERENCE_ROWS: [TableRow; 29] = [
    row("input", &[224, 224, 1], 0),
    row("fire.squeeze", &[224, 224, 4], 8),
    row("fire.expand1", &[224, 224, 8], 40),
    row("fire.expand2", &[224, 224, 8], 296),
    row("concat1", &[224, 224, 16], 0),
    row("b313.c1", &[224, 224, 32], 1568),
    row("b313.c2", &[224, 224, 32], 1568),
    row("b313.c11", &[224, 224, 32], 3104),
    row("b313.c21", &[224, 224, 32], 3104),
    row("concat2", &[224, 224, 64], 0),
    row("maxpool1", &[56, 56, 64], 0),
    row("conv", &[56, 56, 32], 18464),
    row("reduction.c", &[56, 56, 8], 264),
    row("reduction.c1", &[56, 56, 32], 288),
    row("reduction.c2", &[56, 56, 32], 2336),
    row("reduction.c11", &[56, 56, 32], 9248),
    row("reduction.c12", &[56, 56, 32], 9248),
    row("reduction.maxpool2", &[56, 56, 32], 0),
    row("concat3", &[56, 56, 96], 0),
    row("b31c.maxpool3", &[14, 14, 96], 0),
    row("b31c.c1", &[14, 14, 32], 9248),
    row("b31c.c2", &[14, 14, 32], 9248),
    row("concat4", &[14, 14, 64], 0),
    row("avgpool", &[4, 4, 64], 0),
    row("flatten", &[1024], 0),
    row("dropout", &[1024], 0),
    row("dense1", &[64], 65600),
    row("dense2", &[64], 4160),
    row("dense3", &[4], 260),
];

/// Differences between a model's summary and [`REFERENCE_ROWS`]; empty when
/// they agree row for row.
pub fn table_mismatches<T: Real>(model: &ModelGraph<T>) -> Vec<String> {
    let s = summary(model);
    let mut out = Vec::new();
    if s.rows.len() != REFERENCE_ROWS.len() {
        out.push(format!("{} rows, expected {}", s.rows.len(), REFERENCE_ROWS.len()));
    }
    for (got, want) in s.rows.iter().zip(&REFERENCE_ROWS) {
        if got.id != want.id || got.dims != want.output || got.params != want.params {
            out.push(format!(
                "{}: {:?} / {} params, expected {}: {:?} / {}",
                got.id, got.dims, got.params, want.id, want.output, want.params
            ));
        }
    }
    if s.total != REFERENCE_TOTAL || s.trainable != REFERENCE_TOTAL || s.non_trainable != 0 {
        out.push(format!(
            "totals {} / {} / {}, expected {REFERENCE_TOTAL} / {REFERENCE_TOTAL} / 0",
            s.total, s.trainable, s.non_trainable
        ));
    }
    out
}
