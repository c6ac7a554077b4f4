//! Buddy allocator with per-CPU page frame caches, and page steering
//! through the cache's last-in first-out behaviour.

mod allocator;
mod script;
mod steer;

use thiserror::Error;

pub use allocator::{AllocRequest, Allocator, Frame, Owner, OwnerRun, PfcConfig, Pid, StateDump};
pub use script::{parse_script, run_script, ScriptEvent, ScriptOp};
pub use steer::{steer, steer_scenario, warm_up, SteerConfig, SteerOutcome, SteerRoles};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemError {
    #[error("invalid page frame cache settings: {0:?}")]
    BadPfcConfig(PfcConfig),
    #[error("{total_frames} frames cannot be split into order-{max_order} blocks over {n_cpus} cpus")]
    BadGeometry { total_frames: u64, max_order: u8, n_cpus: u8 },
    #[error("no cpu {0}")]
    NoSuchCpu(u8),
    #[error("requests must be for at least one page")]
    ZeroPages,
    #[error("{n_pages} pages exceed the largest block (order {max_order})")]
    TooLarge { n_pages: usize, max_order: u8 },
    #[error("out of memory serving {n_pages} pages")]
    OutOfMemory { n_pages: usize },
    #[error("frame {frame} is not an allocated block start owned by {pid:?}")]
    NotOwned { frame: Frame, pid: Option<Pid> },
    #[error("allocator invariant broken: {0}")]
    Invariant(String),
    #[error("script line {line}: {reason}")]
    Script { line: usize, reason: String },
}
