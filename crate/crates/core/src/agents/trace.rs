use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::io::{fmt_f64, write_atomic};
use crate::{Error, Result};

pub const TRACE_HEADER: &str =
    "step,critic_loss,actor_loss,bpr_loss,eval_return_mean,eval_return_std,effective_dimension";

/// One row of a training trace. Losses are means over the steps since the
/// previous row; absent values are written as empty cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    pub bpr_loss: Option<f64>,
    pub eval_return_mean: Option<f64>,
    pub eval_return_std: Option<f64>,
    pub effective_dimension: Option<usize>,
}

fn cell(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            cell(r.critic_loss),
            cell(r.actor_loss),
            cell(r.bpr_loss),
            cell(r.eval_return_mean),
            cell(r.eval_return_std),
            r.effective_dimension.map(|d| d.to_string()).unwrap_or_default()
        );
    }
    out
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_atomic(path, trace_to_csv(rows).as_bytes())
}

pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TRACE_HEADER) {
        return Err(Error::Format("trace csv header mismatch".into()));
    }
    let float = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Format(format!("bad number '{s}' in trace")))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 7 {
                return Err(Error::Format(format!("trace row has {} cells", c.len())));
            }
            Ok(TraceRow {
                step: c[0].parse().map_err(|_| Error::Format(format!("bad step '{}'", c[0])))?,
                critic_loss: float(c[1])?,
                actor_loss: float(c[2])?,
                bpr_loss: float(c[3])?,
                eval_return_mean: float(c[4])?,
                eval_return_std: float(c[5])?,
                effective_dimension: if c[6].is_empty() {
                    None
                } else {
                    Some(c[6].parse().map_err(|_| Error::Format(format!("bad dimension '{}'", c[6])))?)
                },
            })
        })
        .collect()
}

/// Running means of the losses between trace rows.
#[derive(Debug, Default)]
pub(crate) struct LossAccumulator {
    critic: (f64, u64),
    actor: (f64, u64),
    bpr: (f64, u64),
}

impl LossAccumulator {
    pub fn critic(&mut self, v: f64) {
        self.critic.0 += v;
        self.critic.1 += 1;
    }

    pub fn actor(&mut self, v: f64) {
        self.actor.0 += v;
        self.actor.1 += 1;
    }

    pub fn bpr(&mut self, v: f64) {
        self.bpr.0 += v;
        self.bpr.1 += 1;
    }

    /// Emit a row with the accumulated means and reset.
    pub fn take(&mut self, step: u64) -> TraceRow {
        let mean = |(s, n): (f64, u64)| (n > 0).then(|| s / n as f64);
        let row = TraceRow {
            step,
            critic_loss: mean(self.critic),
            actor_loss: mean(self.actor),
            bpr_loss: mean(self.bpr),
            ..TraceRow::default()
        };
        *self = Self::default();
        row
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            TraceRow {
                step: 0,
                effective_dimension: Some(7),
                ..TraceRow::default()
            },
            TraceRow {
                step: 10,
                critic_loss: Some(0.1),
                actor_loss: Some(-1.0 / 3.0),
                bpr_loss: None,
                eval_return_mean: Some(-12.5),
                eval_return_std: Some(0.25),
                effective_dimension: None,
            },
        ];
        assert_eq!(parse_trace_csv(&trace_to_csv(&rows)).unwrap(), rows);
    }
}
