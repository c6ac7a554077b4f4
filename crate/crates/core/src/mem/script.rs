//! Line-oriented allocator scripts: `op,pid,cpu,arg`.
//!
//! `alloc,<pid>,<cpu>,<n_pages>` and `free,<pid>,<cpu>,<f1;f2;...>` act for a
//! process; `drain,<pid>,<cpu>,` empties a CPU's cache (pid is ignored).
//! Blank lines and lines starting with `#` are skipped.

use serde::{Deserialize, Serialize};

use super::{AllocRequest, Allocator, Frame, MemError, Pid};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum ScriptOp {
    Alloc { pid: Pid, cpu: u8, n_pages: usize },
    Free { pid: Pid, cpu: u8, frames: Vec<Frame> },
    Drain { cpu: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub line: usize,
    pub op: ScriptOp,
    /// Frames handed out by an `alloc`.
    pub frames: Vec<Frame>,
}

pub fn parse_script(text: &str) -> Result<Vec<(usize, ScriptOp)>, MemError> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |reason: &str| MemError::Script { line, reason: reason.to_string() };
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(err("expected op,pid,cpu,arg"));
        }
        let pid: Pid = fields[1].parse().map_err(|_| err("bad pid"))?;
        let cpu: u8 = fields[2].parse().map_err(|_| err("bad cpu"))?;
        let op = match fields[0] {
            "alloc" => ScriptOp::Alloc { pid, cpu, n_pages: fields[3].parse().map_err(|_| err("bad page count"))? },
            "free" => {
                let frames = fields[3]
                    .split(';')
                    .map(|f| f.trim().parse().map_err(|_| err("bad frame number")))
                    .collect::<Result<Vec<Frame>, _>>()?;
                ScriptOp::Free { pid, cpu, frames }
            }
            "drain" => ScriptOp::Drain { cpu },
            other => return Err(err(&format!("unknown op {other:?}"))),
        };
        ops.push((line, op));
    }
    Ok(ops)
}

/// Applies the ops in order, stopping at the first failing one.
pub fn run_script(alloc: &mut Allocator, ops: &[(usize, ScriptOp)]) -> Result<Vec<ScriptEvent>, MemError> {
    ops.iter()
        .map(|(line, op)| {
            let at = |e: MemError| MemError::Script { line: *line, reason: e.to_string() };
            let frames = match op {
                ScriptOp::Alloc { pid, cpu, n_pages } => {
                    alloc.alloc(AllocRequest { pid: *pid, n_pages: *n_pages, cpu: *cpu }).map_err(at)?
                }
                ScriptOp::Free { pid, cpu, frames } => {
                    alloc.free(*pid, *cpu, frames).map_err(at)?;
                    Vec::new()
                }
                ScriptOp::Drain { cpu } => {
                    alloc.drain_pfc(*cpu).map_err(at)?;
                    Vec::new()
                }
            };
            Ok(ScriptEvent { line: *line, op: op.clone(), frames })
        })
        .collect()
}
