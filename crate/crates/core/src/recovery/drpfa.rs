//! Deep-round persistent fault attack: rank 32-bit last-round key chunks by
//! the imbalance they expose at the round-9 S-box output.

use std::collections::BTreeSet;
use std::io;
use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::partial::{diagonal_positions, partial_decrypt_word, ChunkGuess};
use super::sei::sei_unchecked;
use super::{CiphertextCorpus, RecoveryError};

/// How the four per-row SEI values of a reconstructed column become one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCombine {
    Sum,
    /// Largest of the four. A single-bit table fault biases only the one
    /// row whose MixColumns lane it hits; summing adds three rows of noise.
    #[default]
    Max,
}

impl ScoreCombine {
    #[inline]
    fn combine(self, h: &[[u32; 256]; 4], n: u64) -> f64 {
        let per_row = h.iter().map(|row| sei_unchecked(row, n));
        match self {
            ScoreCombine::Sum => per_row.sum(),
            ScoreCombine::Max => per_row.fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuessScore {
    pub guess: ChunkGuess,
    pub sei: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    pub prefix_size: usize,
    pub sei_correct: f64,
    pub sei_wrong_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeiReport {
    /// One score per candidate, in candidate order.
    pub scores: Vec<GuessScore>,
    pub winner: GuessScore,
    /// Empty unless produced by a convergence run.
    pub series: Vec<ConvergencePoint>,
}

impl SeiReport {
    pub fn score_of(&self, guess: &ChunkGuess) -> Option<f64> {
        self.scores.iter().find(|s| s.guess == *guess).map(|s| s.sei)
    }

    /// First prefix size at which the correct chunk strictly beats every
    /// wrong candidate.
    pub fn first_separation(&self) -> Option<usize> {
        self.series.iter().find(|p| p.sei_correct > p.sei_wrong_max).map(|p| p.prefix_size)
    }
}

/// Argmax with ties going to the smallest guess value.
pub fn argmax(scores: &[GuessScore]) -> Option<GuessScore> {
    scores.iter().copied().reduce(better)
}

fn better(a: GuessScore, b: GuessScore) -> GuessScore {
    if b.sei > a.sei || (b.sei == a.sei && b.guess.value() < a.guess.value()) {
        b
    } else {
        a
    }
}

/// Scores one guess at each checkpoint (ascending prefix sizes).
fn score_prefixes(cts: &[[u8; 16]], guess: &ChunkGuess, checkpoints: &[usize], combine: ScoreCombine) -> Vec<f64> {
    let pos = diagonal_positions(guess.diagonal);
    let mut h = [[0u32; 256]; 4];
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for (i, ct) in cts.iter().enumerate() {
        let w = partial_decrypt_word(ct, &pos, &guess.bytes);
        h[0][(w >> 24) as usize] += 1;
        h[1][((w >> 16) & 0xff) as usize] += 1;
        h[2][((w >> 8) & 0xff) as usize] += 1;
        h[3][(w & 0xff) as usize] += 1;
        while next < checkpoints.len() && checkpoints[next] == i + 1 {
            out.push(combine.combine(&h, (i + 1) as u64));
            next += 1;
        }
        if next == checkpoints.len() {
            break;
        }
    }
    out
}

fn check_candidates(candidates: &[ChunkGuess]) -> Result<u8, RecoveryError> {
    let first = candidates.first().ok_or(RecoveryError::NoCandidates)?;
    if candidates.iter().any(|c| c.diagonal != first.diagonal) {
        return Err(RecoveryError::MixedDiagonals);
    }
    Ok(first.diagonal)
}

/// Deep-round attack settings.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drpfa {
    pub combine: ScoreCombine,
}

impl Drpfa {
    pub fn new(combine: ScoreCombine) -> Self {
        Self { combine }
    }

    /// Scores every candidate over the whole corpus. Candidates are scored
    /// in parallel on the current rayon pool.
    pub fn run(&self, corpus: &CiphertextCorpus, candidates: &[ChunkGuess]) -> Result<SeiReport, RecoveryError> {
        if corpus.is_empty() {
            return Err(RecoveryError::EmptyCorpus);
        }
        check_candidates(candidates)?;
        let n = corpus.len();
        let scores: Vec<GuessScore> = candidates
            .par_iter()
            .map(|g| GuessScore { guess: *g, sei: score_prefixes(&corpus.ciphertexts, g, &[n], self.combine)[0] })
            .collect();
        let winner = argmax(&scores).expect("nonempty");
        Ok(SeiReport { scores, winner, series: Vec::new() })
    }

    /// Runs the attack on prefixes `step, 2·step, …` (plus the full corpus
    /// when it is not a multiple of `step`) and tracks the correct chunk
    /// against the best wrong one. Scores and winner refer to the full corpus.
    pub fn convergence(
        &self,
        corpus: &CiphertextCorpus,
        candidates: &[ChunkGuess],
        truth: &ChunkGuess,
        step: usize,
    ) -> Result<SeiReport, RecoveryError> {
        if corpus.is_empty() {
            return Err(RecoveryError::EmptyCorpus);
        }
        let n = corpus.len();
        if step == 0 || step > n {
            return Err(RecoveryError::BadStep { step, corpus: n });
        }
        check_candidates(candidates)?;
        let truth_at = candidates.iter().position(|c| c == truth).ok_or(RecoveryError::TruthNotCandidate)?;
        let mut checkpoints: Vec<usize> = (1..=n / step).map(|i| i * step).collect();
        if !n.is_multiple_of(step) {
            checkpoints.push(n);
        }
        let per_guess: Vec<Vec<f64>> =
            candidates.par_iter().map(|g| score_prefixes(&corpus.ciphertexts, g, &checkpoints, self.combine)).collect();
        let series = checkpoints
            .iter()
            .enumerate()
            .map(|(k, &prefix_size)| ConvergencePoint {
                prefix_size,
                sei_correct: per_guess[truth_at][k],
                sei_wrong_max: per_guess
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| *i != truth_at)
                    .map(|(_, s)| s[k])
                    .fold(f64::NEG_INFINITY, f64::max),
            })
            .collect();
        let last = checkpoints.len() - 1;
        let scores: Vec<GuessScore> =
            candidates.iter().zip(&per_guess).map(|(g, s)| GuessScore { guess: *g, sei: s[last] }).collect();
        let winner = argmax(&scores).expect("nonempty");
        Ok(SeiReport { scores, winner, series })
    }

    /// Exhaustive max-reduce over a range of guess values (a sub-range of
    /// `0..2^32`) without retaining per-guess scores.
    pub fn exhaustive(
        &self,
        corpus: &CiphertextCorpus,
        diagonal: u8,
        values: Range<u64>,
    ) -> Result<GuessScore, RecoveryError> {
        if corpus.is_empty() {
            return Err(RecoveryError::EmptyCorpus);
        }
        if values.is_empty() || values.end > 1 << 32 {
            return Err(RecoveryError::NoCandidates);
        }
        let n = corpus.len();
        Ok(values
            .into_par_iter()
            .map(|v| {
                let g = ChunkGuess::from_value(diagonal, v as u32);
                GuessScore { guess: g, sei: score_prefixes(&corpus.ciphertexts, &g, &[n], self.combine)[0] }
            })
            .reduce_with(better)
            .expect("nonempty range"))
    }
}

pub fn drpfa(corpus: &CiphertextCorpus, candidates: &[ChunkGuess]) -> Result<SeiReport, RecoveryError> {
    Drpfa::default().run(corpus, candidates)
}

pub fn drpfa_convergence(
    corpus: &CiphertextCorpus,
    candidates: &[ChunkGuess],
    truth: &ChunkGuess,
    step: usize,
) -> Result<SeiReport, RecoveryError> {
    Drpfa::default().convergence(corpus, candidates, truth, step)
}

/// `truth` plus `wrong` distinct random chunks on the same diagonal, sorted
/// by value.
pub fn sampled_candidates<R: Rng + ?Sized>(truth: ChunkGuess, wrong: usize, rng: &mut R) -> Vec<ChunkGuess> {
    let mut values = BTreeSet::new();
    values.insert(truth.value());
    while values.len() < wrong + 1 {
        values.insert(rng.random::<u32>());
    }
    values.into_iter().map(|v| ChunkGuess::from_value(truth.diagonal, v)).collect()
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    guess_hex: String,
    diagonal: u8,
    sei: f64,
}

/// `prefix_size,sei_correct,sei_wrong_max`
pub fn write_convergence_csv<W: io::Write>(w: W, series: &[ConvergencePoint]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for p in series {
        wtr.serialize(p)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_convergence_csv<R: io::Read>(r: R) -> Result<Vec<ConvergencePoint>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// `guess_hex,diagonal,sei`
pub fn write_scores_csv<W: io::Write>(w: W, scores: &[GuessScore]) -> Result<(), csv::Error> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in scores {
        wtr.serialize(ScoreRow {
            guess_hex: format!("{:08x}", s.guess.value()),
            diagonal: s.guess.diagonal,
            sei: s.sei,
        })?;
    }
    wtr.flush()?;
    Ok(())
}
