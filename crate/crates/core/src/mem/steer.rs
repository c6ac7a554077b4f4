//! Handing a chosen physical frame to a victim through the page frame cache.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AllocRequest, Allocator, Frame, MemError, PfcConfig, Pid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteerRoles {
    pub attacker: Pid,
    pub victim: Pid,
    /// Unrelated process that may allocate between the free and the
    /// victim's request.
    pub noise: Pid,
    pub cpu: u8,
}

impl Default for SteerRoles {
    fn default() -> Self {
        Self { attacker: 1, victim: 2, noise: 3, cpu: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteerOutcome {
    pub success: bool,
    pub target: Frame,
    pub victim_frames: Vec<Frame>,
    pub noise_frames: Vec<Frame>,
}

/// Attacker frees `target`, the noise process makes `noise_allocs`
/// single-page requests, then the victim asks for one page.
pub fn steer(
    alloc: &mut Allocator,
    roles: SteerRoles,
    target: Frame,
    noise_allocs: usize,
) -> Result<SteerOutcome, MemError> {
    alloc.free(roles.attacker, roles.cpu, &[target])?;
    let mut noise_frames = Vec::with_capacity(noise_allocs);
    for _ in 0..noise_allocs {
        noise_frames.extend(alloc.alloc(AllocRequest { pid: roles.noise, n_pages: 1, cpu: roles.cpu })?);
    }
    let victim_frames = alloc.alloc(AllocRequest { pid: roles.victim, n_pages: 1, cpu: roles.cpu })?;
    Ok(SteerOutcome { success: victim_frames[0] == target, target, victim_frames, noise_frames })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteerConfig {
    pub total_frames: u64,
    pub max_order: u8,
    pub pfc: PfcConfig,
    /// Background allocate/free operations before the attack.
    pub warmup_ops: usize,
    /// Single pages the attacker holds; the target is one of them.
    pub attacker_pages: usize,
    pub noise_allocs: usize,
}

impl Default for SteerConfig {
    fn default() -> Self {
        Self {
            total_frames: 4096,
            max_order: 10,
            pfc: PfcConfig::default(),
            warmup_ops: 200,
            attacker_pages: 8,
            noise_allocs: 0,
        }
    }
}

/// Builds a seeded, pre-fragmented allocator and runs [`steer`] against a
/// randomly chosen attacker page.
pub fn steer_scenario(cfg: &SteerConfig, roles: SteerRoles, seed: u64) -> Result<SteerOutcome, MemError> {
    let mut alloc = Allocator::new(cfg.total_frames, cfg.max_order, roles.cpu + 1, cfg.pfc)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    warm_up(&mut alloc, cfg.warmup_ops, roles.cpu, &mut rng)?;
    let mut pool = Vec::with_capacity(cfg.attacker_pages);
    for _ in 0..cfg.attacker_pages.max(1) {
        pool.extend(alloc.alloc(AllocRequest { pid: roles.attacker, n_pages: 1, cpu: roles.cpu })?);
    }
    let target = pool[rng.random_range(0..pool.len())];
    steer(&mut alloc, roles, target, cfg.noise_allocs)
}

const BACKGROUND_PIDS: std::ops::Range<Pid> = 100..108;

/// Random mix of small allocations and frees by background processes.
pub fn warm_up<R: Rng + ?Sized>(alloc: &mut Allocator, ops: usize, cpu: u8, rng: &mut R) -> Result<(), MemError> {
    let mut held: Vec<(Pid, Frame)> = Vec::new();
    for _ in 0..ops {
        if held.is_empty() || rng.random_bool(0.6) {
            let pid = rng.random_range(BACKGROUND_PIDS);
            let n = if rng.random_bool(0.7) { 1 } else { rng.random_range(2..=8) };
            let frames = alloc.alloc(AllocRequest { pid, n_pages: n, cpu })?;
            held.push((pid, frames[0]));
        } else {
            let (pid, f) = held.swap_remove(rng.random_range(0..held.len()));
            alloc.free(pid, cpu, &[f])?;
        }
    }
    Ok(())
}
