use std::io::Write;

use serde::{Deserialize, Serialize};

use super::world::{Action, Cell};
use crate::error::Result;

/// One line of an exported episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub positions: [Cell; 2],
    pub actions: [Action; 2],
    pub tokens_delivered: [usize; 2],
    pub reward: f64,
}

/// Writes steps as JSON lines.
pub fn write_trace<W: Write>(out: &mut W, steps: &[TraceStep]) -> Result<()> {
    for s in steps {
        serde_json::to_writer(&mut *out, s)?;
        out.write_all(b"\n").map_err(|e| crate::Error::io("<trace>", e))?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<TraceStep>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}
