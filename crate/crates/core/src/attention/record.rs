use std::fmt::Write as _;

use crate::autograd::{Gradients, Tape, Tensor};
use crate::error::{Error, Result};

use super::transformer::AttentionVars;

/// Attention matrices of one direction, kept after the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    /// `[block][head]`, each `P_main × P_aux` and row-stochastic.
    pub blocks: Vec<Vec<Tensor>>,
    /// Gradients of some scalar with respect to each matrix, same layout.
    pub grads: Option<Vec<Vec<Tensor>>>,
}

impl AttentionRecord {
    pub fn from_tape(tape: &Tape, vars: &AttentionVars, grads: Option<&Gradients>) -> Self {
        let blocks = vars
            .iter()
            .map(|heads| {
                heads
                    .iter()
                    .map(|&v| tape.value(v).clone().with_requires_grad(false))
                    .collect()
            })
            .collect();
        let grads = grads.map(|g| {
            vars.iter()
                .map(|heads| {
                    heads
                        .iter()
                        .map(|&v| {
                            let shape = tape.shape(v).to_vec();
                            let data = g
                                .get(v)
                                .map(<[f64]>::to_vec)
                                .unwrap_or_else(|| vec![0.0; tape.value(v).numel()]);
                            Tensor::new(shape, data).expect("gradient shape")
                        })
                        .collect()
                })
                .collect()
        });
        AttentionRecord { blocks, grads }
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Largest `|row sum - 1|` over every head and block.
    pub fn max_row_sum_error(&self) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .flat_map(|a| (0..a.rows()).map(move |r| (a.row(r).iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    /// Largest elementwise difference to another record of the same layout.
    pub fn max_abs_diff(&self, other: &AttentionRecord) -> f64 {
        self.blocks
            .iter()
            .flatten()
            .zip(other.blocks.iter().flatten())
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}

/// Appends one record to a text export.
///
/// Each matrix is a header line
/// `matrix study=<id> direction=<name> block=<b> head=<h> rows=<m> cols=<n>`
/// followed by `m` lines of space-separated values printed with `{:e}`
/// (shortest round-trip form).
pub fn write_attention(out: &mut String, study_id: u64, direction: &str, record: &AttentionRecord) {
    for (b, heads) in record.blocks.iter().enumerate() {
        for (h, a) in heads.iter().enumerate() {
            let _ = writeln!(
                out,
                "matrix study={study_id} direction={direction} block={b} head={h} rows={} cols={}",
                a.rows(),
                a.cols()
            );
            for r in 0..a.rows() {
                let line: Vec<String> = a.row(r).iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
    }
}

/// One matrix parsed back from [`write_attention`] output.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMatrixEntry {
    pub study_id: u64,
    pub direction: String,
    pub block: usize,
    pub head: usize,
    pub matrix: Tensor,
}

pub fn parse_attention(text: &str) -> Result<Vec<AttentionMatrixEntry>> {
    let mut lines = text.lines();
    let mut out = Vec::new();
    while let Some(header) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let mut fields = header.split_whitespace();
        if fields.next() != Some("matrix") {
            return Err(Error::parse("attention export", format!("bad header: {header}")));
        }
        let mut get = |key: &str| -> Result<String> {
            let f = fields
                .next()
                .ok_or_else(|| Error::parse("attention export", format!("missing {key}")))?;
            f.strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| Error::parse("attention export", format!("expected {key}=")))
        };
        let num = |s: String| {
            s.parse::<u64>()
                .map_err(|e| Error::parse("attention export", e.to_string()))
        };
        let study_id = num(get("study")?)?;
        let direction = get("direction")?;
        let block = num(get("block")?)? as usize;
        let head = num(get("head")?)? as usize;
        let rows = num(get("rows")?)? as usize;
        let cols = num(get("cols")?)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse("attention export", "truncated matrix"))?;
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|e| Error::parse("attention export", e.to_string()))?,
                );
            }
        }
        out.push(AttentionMatrixEntry {
            study_id,
            direction,
            block,
            head,
            matrix: Tensor::matrix(rows, cols, data)?,
        });
    }
    Ok(out)
}
