//! Key recovery from persistent-fault ciphertexts: the SEI distinguisher,
//! last-round PFA and the deep-round attack on round 9.

mod corpus;
mod drpfa;
mod partial;
mod pfa;
mod sei;

use thiserror::Error;

pub use corpus::CiphertextCorpus;
pub use drpfa::{
    argmax, drpfa, drpfa_convergence, read_convergence_csv, sampled_candidates, write_convergence_csv,
    write_scores_csv, ConvergencePoint, Drpfa, GuessScore, ScoreCombine, SeiReport,
};
pub use partial::{diagonal_positions, partial_decrypt, ChunkGuess};
pub use pfa::{pfa_last_round, PfaByte, PfaResult, PFA_MIN_CORPUS};
pub use sei::sei;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecoveryError {
    #[error("histogram has no samples")]
    EmptyHistogram,
    #[error("ciphertext corpus is empty")]
    EmptyCorpus,
    #[error("no candidate key chunks")]
    NoCandidates,
    #[error("candidate chunks span several diagonals")]
    MixedDiagonals,
    #[error("step {step} invalid for a corpus of {corpus}")]
    BadStep { step: usize, corpus: usize },
    #[error("the correct chunk is not among the candidates")]
    TruthNotCandidate,
    #[error("corpus has {have} ciphertexts, need at least {need}")]
    CorpusTooSmall { have: usize, need: usize },
}
