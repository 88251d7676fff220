//! Contract metadata: ABI, storage layout and typed values.

pub mod abi;
pub mod layout;
pub mod value;

use serde::{Deserialize, Serialize};

use crate::error::MetaError;
use crate::word::Address;

pub use abi::{parse_abi, AbiIndex, AbiType, DecodedCall, DecodedEvent};
pub use layout::{
    decode_slot_value, locate_state_variable, parse_layout, LayoutIndex, Located, PathSeg,
    SlotIndex, TypeDescriptor,
};
pub use value::{NumClass, TypedValue};

/// Everything the extractor needs to know about the analysed contract.
#[derive(Debug, Clone)]
pub struct ContractMeta {
    pub address: Address,
    pub abi: AbiIndex,
    pub layout: LayoutIndex,
    pub source: MetaSource,
}

/// The raw JSON the metadata was parsed from, kept so stores are self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaSource {
    pub abi: serde_json::Value,
    pub layout: serde_json::Value,
}

impl ContractMeta {
    pub fn from_json(
        address: Address,
        abi_json: &str,
        layout_json: &str,
    ) -> Result<Self, MetaError> {
        let abi = parse_abi(abi_json)?;
        let layout = parse_layout(layout_json)?;
        let source = MetaSource {
            abi: serde_json::from_str(abi_json)
                .map_err(|e| MetaError::MalformedAbi(e.to_string()))?,
            layout: serde_json::from_str(layout_json)
                .map_err(|e| MetaError::MalformedLayout(e.to_string()))?,
        };
        Ok(ContractMeta {
            address,
            abi,
            layout,
            source,
        })
    }

    pub fn from_source(address: Address, source: &MetaSource) -> Result<Self, MetaError> {
        Self::from_json(address, &source.abi.to_string(), &source.layout.to_string())
    }
}
