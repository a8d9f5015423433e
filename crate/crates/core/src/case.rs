//! Grid case data model. All electrical quantities are per-unit on
//! `base_mva`; angles are radians.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

impl BusKind {
    pub fn matpower_code(self) -> u8 {
        match self {
            BusKind::Pq => 1,
            BusKind::Pv => 2,
            BusKind::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Load draw.
    pub pd: f64,
    pub qd: f64,
    /// Shunt admittance at 1 p.u. voltage.
    pub gs: f64,
    pub bs: f64,
    pub vm_init: f64,
    pub va_init: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance.
    pub b_chg: f64,
    /// Off-nominal turns ratio on the from side; 1.0 for plain lines.
    pub tap: f64,
    pub shift: f64,
    pub in_service: bool,
}

impl Branch {
    /// Lines have nominal tap and no phase shift; everything else is
    /// treated as a transformer.
    pub fn is_transformer(&self) -> bool {
        self.tap != 1.0 || self.shift != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gen {
    pub bus: BusId,
    pub pg: f64,
    pub qg: f64,
    pub vset: f64,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub gens: Vec<Gen>,
}

impl GridCase {
    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to position in `buses`.
    pub fn bus_index(&self) -> Result<HashMap<BusId, usize>> {
        let mut map = HashMap::with_capacity(self.buses.len());
        for (i, b) in self.buses.iter().enumerate() {
            if map.insert(b.id, i).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", b.id)));
            }
        }
        Ok(map)
    }

    pub fn slack_index(&self) -> Option<usize> {
        self.buses.iter().position(|b| b.kind == BusKind::Slack)
    }

    /// Voltage set-point per bus: the first in-service generator's `vset`
    /// for regulated buses, otherwise the initial magnitude.
    pub fn voltage_setpoints(&self) -> Result<Vec<f64>> {
        let index = self.bus_index()?;
        let mut vset: Vec<Option<f64>> = vec![None; self.buses.len()];
        for g in self.gens.iter().filter(|g| g.in_service) {
            let i = index[&g.bus];
            if vset[i].is_none() {
                vset[i] = Some(g.vset);
            }
        }
        Ok(vset
            .into_iter()
            .zip(&self.buses)
            .map(|(v, b)| v.unwrap_or(b.vm_init))
            .collect())
    }

    /// Net scheduled generation per bus (sum over in-service units).
    pub fn scheduled_generation(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let index = self.bus_index()?;
        let n = self.buses.len();
        let (mut pg, mut qg) = (vec![0.0; n], vec![0.0; n]);
        for g in self.gens.iter().filter(|g| g.in_service) {
            let i = index[&g.bus];
            pg[i] += g.pg;
            qg[i] += g.qg;
        }
        Ok((pg, qg))
    }

    /// Checks every structural invariant of the case.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) || !self.base_mva.is_finite() {
            return Err(Error::Validation(format!(
                "baseMVA must be positive, got {}",
                self.base_mva
            )));
        }
        if self.buses.is_empty() {
            return Err(Error::Validation("case has no buses".into()));
        }
        let index = self.bus_index()?;
        let slacks = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .count();
        if slacks != 1 {
            return Err(Error::Validation(format!(
                "expected exactly one slack bus, found {slacks}"
            )));
        }
        for b in &self.buses {
            if !(b.vm_init > 0.0) {
                return Err(Error::Validation(format!(
                    "bus {} has non-positive initial voltage {}",
                    b.id, b.vm_init
                )));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            for end in [br.from, br.to] {
                if !index.contains_key(&end) {
                    return Err(Error::Validation(format!(
                        "branch {k} references unknown bus {end}"
                    )));
                }
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(Error::Validation(format!(
                    "branch {k} has zero series impedance"
                )));
            }
            if !(br.tap > 0.0) {
                return Err(Error::Validation(format!(
                    "branch {k} has non-positive tap {}",
                    br.tap
                )));
            }
        }
        for g in self.gens.iter().filter(|g| g.in_service) {
            let Some(&i) = index.get(&g.bus) else {
                return Err(Error::Validation(format!(
                    "generator references unknown bus {}",
                    g.bus
                )));
            };
            if self.buses[i].kind == BusKind::Pq {
                return Err(Error::Validation(format!(
                    "in-service generator at PQ bus {}",
                    g.bus
                )));
            }
            if !(g.vset > 0.0) {
                return Err(Error::Validation(format!(
                    "generator at bus {} has non-positive set-point",
                    g.bus
                )));
            }
        }
        Ok(())
    }
}
