//! Named constants used by the estimate checks, each tagged with where its
//! value came from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LandauError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Composed from explicitly displayed factors.
    Traced,
    /// Fitted to data so that the inequality it belongs to is tight.
    Fitted,
    /// Supplied by the run configuration.
    Config,
}

/// Outcome of a check. Unmet hypotheses are not failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    HypothesesUnmet,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    /// Fail dominates, then unmet hypotheses.
    pub fn combine(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::HypothesesUnmet, _) | (_, Verdict::HypothesesUnmet) => Verdict::HypothesesUnmet,
            _ => Verdict::Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    /// Natural log of the value; always finite for positive constants.
    pub ln_value: f64,
    /// The value itself when it fits in a double.
    pub value: Option<f64>,
    pub provenance: Provenance,
    pub note: String,
}

/// Constants keyed by name, serialized in name order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    entries: BTreeMap<String, LedgerEntry>,
}

impl ConstantsLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a positive (or zero) constant given by value.
    pub fn set(&mut self, name: &str, value: f64, provenance: Provenance, note: &str) {
        self.entries.insert(
            name.to_string(),
            LedgerEntry {
                ln_value: value.ln(),
                value: Some(value),
                provenance,
                note: note.to_string(),
            },
        );
    }

    /// Records a constant given by its logarithm.
    pub fn set_ln(&mut self, name: &str, ln_value: f64, provenance: Provenance, note: &str) {
        let value = ln_value.exp();
        let representable = value.is_finite() && (value > 0.0 || ln_value == f64::NEG_INFINITY);
        self.entries.insert(
            name.to_string(),
            LedgerEntry {
                ln_value,
                value: representable.then_some(value),
                provenance,
                note: note.to_string(),
            },
        );
    }

    pub fn entry(&self, name: &str) -> Option<&LedgerEntry> {
        self.entries.get(name)
    }

    /// The value of `name`, or an error naming the missing constant.
    pub fn value(&self, name: &str) -> Result<f64> {
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| LandauError::InvalidParameter(format!("ledger has no constant '{name}'")))?;
        Ok(entry.value.unwrap_or_else(|| entry.ln_value.exp()))
    }

    pub fn ln_value(&self, name: &str) -> Result<f64> {
        self.entries
            .get(name)
            .map(|e| e.ln_value)
            .ok_or_else(|| LandauError::InvalidParameter(format!("ledger has no constant '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &LedgerEntry)> {
        self.entries.iter()
    }

    /// Adds every entry of `other`, overwriting on name clashes.
    pub fn merge(&mut self, other: &ConstantsLedger) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
