//! The raw step-record format consumed by the extractor.
//!
//! One transaction per line of newline-delimited JSON:
//!
//! ```text
//! {"header":{"txHash":"0x…","block":7,"timestamp":1700000084,"origin":"0x…"},
//!  "steps":[{"step":"CallEnter","sender":"0x…","receiver":"0x…","calldata":"0x…","value":"0x…"},
//!           {"step":"Jumpi","dest":291},
//!           {"step":"StorageAccess","contract":"0x…","slot":"0x…","pre":"0x…","post":"0x…","kind":"read"},
//!           {"step":"BalanceObservation","token":"0x…","holder":"0x…","point":"PreCall","amount":"0x…"},
//!           {"step":"EventEmit","emitter":"0x…","topics":["0x…"],"data":"0x"},
//!           {"step":"CallExit","success":true}]}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::TraceError;
use crate::trace::RecordPoint;
use crate::word::{Address, Bytes, Word};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TxHeader {
    pub tx_hash: Word,
    pub block: u64,
    pub timestamp: u64,
    pub origin: Address,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step")]
pub enum Step {
    CallEnter {
        sender: Address,
        receiver: Address,
        calldata: Bytes,
        value: Word,
    },
    CallExit {
        success: bool,
    },
    Jumpi {
        dest: u64,
    },
    EventEmit {
        emitter: Address,
        topics: Vec<Word>,
        data: Bytes,
    },
    StorageAccess {
        contract: Address,
        slot: Word,
        pre: Word,
        post: Word,
        kind: AccessKind,
    },
    /// A token (or ether, see [`crate::trace::ETH_TOKEN`]) balance observed
    /// at a record point of the innermost open call.
    BalanceObservation {
        token: Address,
        holder: Address,
        point: RecordPoint,
        amount: Word,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawTxRecord {
    pub header: TxHeader,
    pub steps: Vec<Step>,
}

impl RawTxRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("raw records always serialize")
    }

    /// Receiver of the outermost call.
    pub fn root_receiver(&self) -> Option<Address> {
        self.steps.iter().find_map(|s| match s {
            Step::CallEnter { receiver, .. } => Some(*receiver),
            _ => None,
        })
    }
}

/// Parses newline-delimited raw records; blank lines are skipped and each
/// remaining line yields its own result so one bad record does not stop a stream.
pub fn parse_raw_ndjson(text: &str) -> Vec<Result<RawTxRecord, TraceError>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(TraceError::from))
        .collect()
}
