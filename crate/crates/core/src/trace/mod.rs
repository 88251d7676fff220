//! Raw transaction records, call-flow trees and execution-trace extraction.

pub mod cft;
pub mod extract;
pub mod raw;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::word::Address;

pub use cft::{
    branch_fingerprint, build_cft, select_relevant_subtrees, BranchId, CallFlowTree, Child,
    EventNode, TxNode,
};
pub use extract::{
    candidate_keys, extract_trace, extract_transaction, ExecutionTrace, LogEntry, Snapshot,
};
pub use raw::{parse_raw_ndjson, AccessKind, RawTxRecord, Step, TxHeader};

/// Pseudo token address under which native ether balances are recorded.
pub const ETH_TOKEN: Address = Address([0xee; 20]);

/// Where in a call a snapshot of dynamic state is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecordPoint {
    PreCall,
    PostCall,
    PreSubCall(u32),
    PostSubCall(u32),
}

impl fmt::Display for RecordPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordPoint::PreCall => f.write_str("PreCall"),
            RecordPoint::PostCall => f.write_str("PostCall"),
            RecordPoint::PreSubCall(i) => write!(f, "PreSubCall#{i}"),
            RecordPoint::PostSubCall(i) => write!(f, "PostSubCall#{i}"),
        }
    }
}

impl FromStr for RecordPoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PreCall" => return Ok(RecordPoint::PreCall),
            "PostCall" => return Ok(RecordPoint::PostCall),
            _ => {}
        }
        let bad = || format!("unknown record point {s:?}");
        let (kind, idx) = s.split_once('#').ok_or_else(bad)?;
        let idx: u32 = idx.parse().map_err(|_| bad())?;
        match kind {
            "PreSubCall" => Ok(RecordPoint::PreSubCall(idx)),
            "PostSubCall" => Ok(RecordPoint::PostSubCall(idx)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for RecordPoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for RecordPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl RecordPoint {
    /// The point this one pairs with for a before/after delta.
    pub fn partner(self) -> Option<RecordPoint> {
        match self {
            RecordPoint::PreCall => Some(RecordPoint::PostCall),
            RecordPoint::PreSubCall(i) => Some(RecordPoint::PostSubCall(i)),
            _ => None,
        }
    }
}
