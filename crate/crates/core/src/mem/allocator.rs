use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::MemError;

pub type Frame = u64;
pub type Pid = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Free,
    Pfc(u8),
    Process(Pid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfcConfig {
    pub low_watermark: usize,
    pub high_watermark: usize,
    pub refill_batch: usize,
    pub release_batch: usize,
}

impl Default for PfcConfig {
    fn default() -> Self {
        Self { low_watermark: 8, high_watermark: 64, refill_batch: 16, release_batch: 16 }
    }
}

impl PfcConfig {
    pub fn validate(&self) -> Result<(), MemError> {
        let ok = self.low_watermark < self.high_watermark
            && self.refill_batch >= 1
            && self.release_batch >= 1
            && self.release_batch <= self.high_watermark
            && self.low_watermark + self.refill_batch <= self.high_watermark;
        if ok {
            Ok(())
        } else {
            Err(MemError::BadPfcConfig(*self))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocRequest {
    pub pid: Pid,
    pub n_pages: usize,
    pub cpu: u8,
}

/// Physical memory managed by a binary buddy allocator, fronted by one page
/// frame cache per CPU.
///
/// Each cache is a single list: new frees go to the back (hot end) and are
/// handed out first; refills enter and releases leave at the front (cold
/// end).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocator {
    max_order: u8,
    total_frames: u64,
    free_lists: Vec<BTreeSet<Frame>>,
    owner: Vec<Owner>,
    pfc: Vec<VecDeque<Frame>>,
    cfg: PfcConfig,
    /// Process-owned blocks by start frame: (owner, order).
    blocks: BTreeMap<Frame, (Pid, u8)>,
    payloads: BTreeMap<Frame, String>,
}

impl Allocator {
    /// `total_frames` must be a positive multiple of `2^max_order`.
    pub fn new(total_frames: u64, max_order: u8, n_cpus: u8, cfg: PfcConfig) -> Result<Self, MemError> {
        cfg.validate()?;
        let block = 1u64 << max_order;
        if max_order > 20 || total_frames == 0 || !total_frames.is_multiple_of(block) || n_cpus == 0 {
            return Err(MemError::BadGeometry { total_frames, max_order, n_cpus });
        }
        let mut free_lists = vec![BTreeSet::new(); max_order as usize + 1];
        free_lists[max_order as usize] = (0..total_frames).step_by(block as usize).collect();
        Ok(Self {
            max_order,
            total_frames,
            free_lists,
            owner: vec![Owner::Free; total_frames as usize],
            pfc: vec![VecDeque::new(); n_cpus as usize],
            cfg,
            blocks: BTreeMap::new(),
            payloads: BTreeMap::new(),
        })
    }

    /// One max-order block, one CPU, default watermarks.
    pub fn with_defaults() -> Self {
        Self::new(1024, 10, 1, PfcConfig::default()).expect("defaults are valid")
    }

    pub fn max_order(&self) -> u8 {
        self.max_order
    }

    pub fn total_frames(&self) -> u64 {
        self.total_frames
    }

    pub fn n_cpus(&self) -> u8 {
        self.pfc.len() as u8
    }

    pub fn pfc_config(&self) -> &PfcConfig {
        &self.cfg
    }

    pub fn owner(&self, frame: Frame) -> Option<Owner> {
        self.owner.get(frame as usize).copied()
    }

    /// Cache contents from cold to hot.
    pub fn pfc(&self, cpu: u8) -> &VecDeque<Frame> {
        &self.pfc[cpu as usize]
    }

    pub fn free_list(&self, order: u8) -> &BTreeSet<Frame> {
        &self.free_lists[order as usize]
    }

    pub fn buddy_free_frames(&self) -> u64 {
        self.free_lists.iter().enumerate().map(|(k, l)| (l.len() as u64) << k).sum()
    }

    pub fn allocated_frames(&self) -> u64 {
        self.blocks.values().map(|&(_, k)| 1u64 << k).sum()
    }

    pub fn pfc_frames(&self) -> u64 {
        self.pfc.iter().map(|p| p.len() as u64).sum()
    }

    /// Blocks owned by `pid` as (start, order).
    pub fn blocks_of(&self, pid: Pid) -> impl Iterator<Item = (Frame, u8)> + '_ {
        self.blocks.iter().filter(move |(_, &(p, _))| p == pid).map(|(&f, &(_, k))| (f, k))
    }

    /// Labels a process-owned frame with what the process stored there.
    pub fn tag_payload(&mut self, frame: Frame, payload: impl Into<String>) -> Result<(), MemError> {
        match self.owner(frame) {
            Some(Owner::Process(_)) => {
                self.payloads.insert(frame, payload.into());
                Ok(())
            }
            _ => Err(MemError::NotOwned { frame, pid: None }),
        }
    }

    pub fn payload(&self, frame: Frame) -> Option<&str> {
        self.payloads.get(&frame).map(String::as_str)
    }

    fn check_cpu(&self, cpu: u8) -> Result<(), MemError> {
        if (cpu as usize) < self.pfc.len() {
            Ok(())
        } else {
            Err(MemError::NoSuchCpu(cpu))
        }
    }

    /// Single pages come from the CPU's cache; larger requests are rounded
    /// up to a power of two and served whole by the buddy allocator.
    pub fn alloc(&mut self, req: AllocRequest) -> Result<Vec<Frame>, MemError> {
        self.check_cpu(req.cpu)?;
        if req.n_pages == 0 {
            return Err(MemError::ZeroPages);
        }
        if req.n_pages == 1 {
            let cpu = req.cpu as usize;
            if self.pfc[cpu].len() < self.cfg.low_watermark {
                self.refill(req.cpu);
            }
            let frame = self.pfc[cpu].pop_back().ok_or(MemError::OutOfMemory { n_pages: 1 })?;
            self.assign(frame, 0, req.pid);
            return Ok(vec![frame]);
        }
        let order = req.n_pages.next_power_of_two().trailing_zeros() as u8;
        if order > self.max_order {
            return Err(MemError::TooLarge { n_pages: req.n_pages, max_order: self.max_order });
        }
        let start = self.buddy_alloc(order).ok_or(MemError::OutOfMemory { n_pages: req.n_pages })?;
        self.assign(start, order, req.pid);
        Ok((start..start + (1u64 << order)).collect())
    }

    fn assign(&mut self, start: Frame, order: u8, pid: Pid) {
        for f in start..start + (1u64 << order) {
            self.owner[f as usize] = Owner::Process(pid);
        }
        self.blocks.insert(start, (pid, order));
    }

    /// Tops the cache up to `low + refill_batch` at the cold end, as far as
    /// the buddy allocator can supply.
    fn refill(&mut self, cpu: u8) {
        let target = self.cfg.low_watermark + self.cfg.refill_batch;
        while self.pfc[cpu as usize].len() < target {
            let Some(f) = self.buddy_alloc(0) else { break };
            self.owner[f as usize] = Owner::Pfc(cpu);
            self.pfc[cpu as usize].push_front(f);
        }
    }

    fn buddy_alloc(&mut self, order: u8) -> Option<Frame> {
        let mut k = (order..=self.max_order).find(|&k| !self.free_lists[k as usize].is_empty())?;
        let start = self.free_lists[k as usize].pop_first()?;
        while k > order {
            k -= 1;
            self.free_lists[k as usize].insert(start + (1u64 << k));
        }
        Some(start)
    }

    fn buddy_free(&mut self, mut start: Frame, mut order: u8) {
        for f in start..start + (1u64 << order) {
            self.owner[f as usize] = Owner::Free;
        }
        while order < self.max_order {
            let buddy = start ^ (1u64 << order);
            if !self.free_lists[order as usize].remove(&buddy) {
                break;
            }
            start = start.min(buddy);
            order += 1;
        }
        self.free_lists[order as usize].insert(start);
    }

    /// Frees blocks by their start frame. Order-0 blocks go to `cpu`'s cache
    /// hot end, larger ones straight back to the buddy allocator. Nothing
    /// changes if any frame is not a block start owned by `pid`.
    pub fn free(&mut self, pid: Pid, cpu: u8, frames: &[Frame]) -> Result<(), MemError> {
        self.check_cpu(cpu)?;
        let mut seen = BTreeSet::new();
        for &f in frames {
            match self.blocks.get(&f) {
                Some(&(p, _)) if p == pid && seen.insert(f) => {}
                _ => return Err(MemError::NotOwned { frame: f, pid: Some(pid) }),
            }
        }
        for &f in frames {
            let (_, order) = self.blocks.remove(&f).expect("validated above");
            self.payloads.remove(&f);
            if order == 0 {
                self.owner[f as usize] = Owner::Pfc(cpu);
                self.pfc[cpu as usize].push_back(f);
                if self.pfc[cpu as usize].len() > self.cfg.high_watermark {
                    self.release(cpu, self.cfg.release_batch);
                }
            } else {
                self.buddy_free(f, order);
            }
        }
        Ok(())
    }

    fn release(&mut self, cpu: u8, n: usize) {
        for _ in 0..n {
            let Some(f) = self.pfc[cpu as usize].pop_front() else { break };
            self.buddy_free(f, 0);
        }
    }

    /// Returns every cached frame of `cpu` to the buddy allocator.
    pub fn drain_pfc(&mut self, cpu: u8) -> Result<(), MemError> {
        self.check_cpu(cpu)?;
        let n = self.pfc[cpu as usize].len();
        self.release(cpu, n);
        Ok(())
    }

    /// Checks alignment, coalescing, conservation, ownership and watermark
    /// invariants.
    pub fn check_invariants(&self) -> Result<(), MemError> {
        let bad = |msg: String| Err(MemError::Invariant(msg));
        let mut seen: Vec<Option<Owner>> = vec![None; self.total_frames as usize];
        let mut claim = |f: Frame, o: Owner| -> Result<(), MemError> {
            let slot = &mut seen[f as usize];
            if slot.is_some() {
                return Err(MemError::Invariant(format!("frame {f} accounted twice")));
            }
            *slot = Some(o);
            Ok(())
        };
        for (k, list) in self.free_lists.iter().enumerate() {
            for &start in list {
                if start % (1u64 << k) != 0 || start + (1u64 << k) > self.total_frames {
                    return bad(format!("order-{k} block at {start} misaligned"));
                }
                if k < self.max_order as usize && list.contains(&(start ^ (1u64 << k))) {
                    return bad(format!("buddies {start} and {} both free at order {k}", start ^ (1u64 << k)));
                }
                for f in start..start + (1u64 << k) {
                    claim(f, Owner::Free)?;
                }
            }
        }
        for (cpu, list) in self.pfc.iter().enumerate() {
            if list.len() > self.cfg.high_watermark {
                return bad(format!("cpu {cpu} cache holds {} frames", list.len()));
            }
            for &f in list {
                claim(f, Owner::Pfc(cpu as u8))?;
            }
        }
        for (&start, &(pid, k)) in &self.blocks {
            if start % (1u64 << k) != 0 {
                return bad(format!("allocated order-{k} block at {start} misaligned"));
            }
            for f in start..start + (1u64 << k) {
                claim(f, Owner::Process(pid))?;
            }
        }
        if let Some(f) = seen.iter().position(Option::is_none) {
            return bad(format!("frame {f} unaccounted"));
        }
        if seen.iter().zip(&self.owner).any(|(s, o)| *s != Some(*o)) {
            return bad("ownership map disagrees with lists".into());
        }
        Ok(())
    }

    pub fn dump(&self) -> StateDump {
        let mut owners: Vec<OwnerRun> = Vec::new();
        for (f, &o) in self.owner.iter().enumerate() {
            match owners.last_mut() {
                Some(run) if run.owner == o && run.end == f as Frame => run.end += 1,
                _ => owners.push(OwnerRun { start: f as Frame, end: f as Frame + 1, owner: o }),
            }
        }
        StateDump {
            free_lists: self.free_lists.iter().map(|l| l.iter().copied().collect()).collect(),
            pfc: self.pfc.iter().map(|l| l.iter().copied().collect()).collect(),
            owners,
        }
    }
}

/// Frames `start..end` share one owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerRun {
    pub start: Frame,
    pub end: Frame,
    pub owner: Owner,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDump {
    /// Block starts, indexed by order.
    pub free_lists: Vec<Vec<Frame>>,
    /// Per CPU, cold end first.
    pub pfc: Vec<Vec<Frame>>,
    pub owners: Vec<OwnerRun>,
}
