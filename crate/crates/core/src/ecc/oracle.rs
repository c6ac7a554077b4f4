use serde::{Deserialize, Serialize};

use crate::aes::{encrypt_with, expand_key128, Access, PersistentFault, RoundKeys, TTableSet, TableSource, TableStyle};

use super::EccError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EccConfig {
    pub base_access_cycles: u64,
    pub correction_overhead_cycles: u64,
    /// Scrub the corrected word back to memory on the first faulty read.
    pub correction_clears_fault: bool,
}

impl Default for EccConfig {
    fn default() -> Self {
        Self { base_access_cycles: 100, correction_overhead_cycles: 200_000, correction_clears_fault: true }
    }
}

impl EccConfig {
    pub fn validate(&self) -> Result<(), EccError> {
        if self.base_access_cycles == 0 || self.correction_overhead_cycles < 100 * self.base_access_cycles {
            return Err(EccError::InvalidConfig(*self));
        }
        Ok(())
    }

    fn quiet_cycles(&self) -> u64 {
        160 * self.base_access_cycles
    }
}

/// What the attacker's cache probe reveals about a correction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundVisibility {
    /// The round of the corrected lookup is known.
    #[default]
    Exact,
    /// Only the latency spike is visible.
    Hidden,
}

/// Attacker-visible outcome of one encryption. Deliberately carries no
/// ciphertext and no byte position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncryptionObservation {
    pub correction_round: Option<u8>,
    pub total_cycles: u64,
}

impl EncryptionObservation {
    /// A correction happened, whether or not its round is visible.
    pub fn corrected(&self, cfg: &EccConfig) -> bool {
        self.total_cycles >= cfg.correction_overhead_cycles
    }
}

/// ECC-protected memory holding the victim's T-tables and key.
///
/// At most one fault lives in memory at a time. Reads of the faulty word
/// return the corrected value, so ciphertexts never differ from the
/// fault-free ones.
#[derive(Debug, Clone)]
pub struct EccOracle {
    rk: RoundKeys,
    memory: TTableSet,
    cfg: EccConfig,
    visibility: RoundVisibility,
    planted: Option<PersistentFault>,
    active: bool,
    encryptions: u64,
    hammer_events: u64,
}

struct CorrectingReader<'a> {
    memory: &'a mut TTableSet,
    fault: Option<PersistentFault>,
    clears: bool,
    correction_round: Option<u8>,
}

impl TableSource for CorrectingReader<'_> {
    fn style(&self) -> TableStyle {
        self.memory.style()
    }

    fn read(&mut self, a: Access) -> u32 {
        let stored = self.memory.table(a.table).expect("table missing for style")[a.index as usize];
        match self.fault {
            Some(f) if f.table == a.table && f.entry == a.index => {
                self.correction_round.get_or_insert(a.round);
                if self.clears {
                    self.memory.table_mut(a.table).expect("table checked above")[a.index as usize] =
                        stored ^ f.xor_mask;
                    self.fault = None;
                }
                stored ^ f.xor_mask
            }
            _ => stored,
        }
    }
}

impl EccOracle {
    pub fn new(
        key: &[u8; 16],
        style: TableStyle,
        cfg: EccConfig,
        visibility: RoundVisibility,
    ) -> Result<Self, EccError> {
        cfg.validate()?;
        Ok(Self {
            rk: expand_key128(key),
            memory: TTableSet::derive(style),
            cfg,
            visibility,
            planted: None,
            active: false,
            encryptions: 0,
            hammer_events: 0,
        })
    }

    pub fn config(&self) -> &EccConfig {
        &self.cfg
    }

    pub fn visibility(&self) -> RoundVisibility {
        self.visibility
    }

    /// Hammers a new templated location, replacing any previous fault.
    pub fn place_fault(&mut self, fault: PersistentFault) -> Result<(), EccError> {
        if !self.memory.has_table(fault.table) {
            return Err(EccError::TableAbsent(fault));
        }
        if self.active {
            let old = self.planted.expect("active implies planted");
            self.memory = self.memory.clear_fault(&old)?;
        }
        self.memory = self.memory.inject_fault(&fault)?;
        self.planted = Some(fault);
        self.active = true;
        self.hammer_events += 1;
        Ok(())
    }

    /// Re-hammers the planted location if a correction scrubbed it.
    /// Returns whether a hammer was needed.
    pub fn rehammer(&mut self) -> Result<bool, EccError> {
        let fault = self.planted.ok_or(EccError::NoFault)?;
        if self.active {
            return Ok(false);
        }
        self.memory = self.memory.inject_fault(&fault)?;
        self.active = true;
        self.hammer_events += 1;
        Ok(true)
    }

    /// Victim-side scrub without an encryption, e.g. a memory test.
    pub fn clear(&mut self) -> Result<(), EccError> {
        if let (true, Some(f)) = (self.active, self.planted) {
            self.memory = self.memory.clear_fault(&f)?;
            self.active = false;
        }
        Ok(())
    }

    pub fn observe(&mut self, pt: &[u8; 16]) -> EncryptionObservation {
        self.observe_with_ciphertext(pt).0
    }

    /// Simulation-side variant that also returns the ciphertext; attacks
    /// must use [`Self::observe`].
    pub fn observe_with_ciphertext(&mut self, pt: &[u8; 16]) -> (EncryptionObservation, [u8; 16]) {
        let mut reader = CorrectingReader {
            memory: &mut self.memory,
            fault: if self.active { self.planted } else { None },
            clears: self.cfg.correction_clears_fault,
            correction_round: None,
        };
        let ct = encrypt_with(&mut reader, pt, &self.rk);
        let round = reader.correction_round;
        if round.is_some() && self.cfg.correction_clears_fault {
            self.active = false;
        }
        self.encryptions += 1;
        let mut total_cycles = self.cfg.quiet_cycles();
        if round.is_some() {
            total_cycles += self.cfg.correction_overhead_cycles;
        }
        let correction_round = match self.visibility {
            RoundVisibility::Exact => round,
            RoundVisibility::Hidden => None,
        };
        (EncryptionObservation { correction_round, total_cycles }, ct)
    }

    pub fn fault_present(&self) -> bool {
        self.active
    }

    pub fn planted(&self) -> Option<PersistentFault> {
        self.planted
    }

    pub fn encryptions(&self) -> u64 {
        self.encryptions
    }

    pub fn hammer_events(&self) -> u64 {
        self.hammer_events
    }

    pub fn round_keys(&self) -> &RoundKeys {
        &self.rk
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aes::TableId;

    #[test]
    fn config_ratio_enforced() {
        assert!(EccConfig::default().validate().is_ok());
        let bad = EccConfig { correction_overhead_cycles: 9_999, ..Default::default() };
        assert_eq!(bad.validate(), Err(EccError::InvalidConfig(bad)));
    }

    #[test]
    fn placing_replaces_previous_fault() {
        let mut o =
            EccOracle::new(&[0; 16], TableStyle::SharedTables, EccConfig::default(), RoundVisibility::Exact).unwrap();
        o.place_fault(PersistentFault::new(TableId::te(0), 1, 1).unwrap()).unwrap();
        o.place_fault(PersistentFault::new(TableId::te(2), 9, 4).unwrap()).unwrap();
        let diff = o.memory.diff_from_pristine();
        assert_eq!(diff.len(), 1);
        assert_eq!((diff[0].0, diff[0].1), (TableId::te(2), 9));
        assert_eq!(o.hammer_events(), 2);
    }

    #[test]
    fn primed_fault_rejected_on_shared_tables() {
        let mut o =
            EccOracle::new(&[0; 16], TableStyle::SharedTables, EccConfig::default(), RoundVisibility::Exact).unwrap();
        let f = PersistentFault::new(TableId::primed(0), 1, 1).unwrap();
        assert_eq!(o.place_fault(f), Err(EccError::TableAbsent(f)));
    }
}
