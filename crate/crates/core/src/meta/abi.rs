//! Contract ABI indexing plus standard head/tail encoding and decoding.

use std::collections::BTreeMap;
use std::fmt;

use serde::Deserialize;

use crate::error::MetaError;
use crate::meta::value::TypedValue;
use crate::word::{keccak256, Address, Bytes, Word};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AbiType {
    Address,
    Uint(u16),
    Int(u16),
    Bool,
    FixedBytes(u8),
    Bytes,
    String,
    Array(Box<AbiType>),
    FixedArray(Box<AbiType>, usize),
    Tuple(Vec<(String, AbiType)>),
}

impl AbiType {
    pub fn is_dynamic(&self) -> bool {
        match self {
            AbiType::Bytes | AbiType::String | AbiType::Array(_) => true,
            AbiType::FixedArray(elem, _) => elem.is_dynamic(),
            AbiType::Tuple(members) => members.iter().any(|(_, t)| t.is_dynamic()),
            _ => false,
        }
    }

    /// Bytes occupied in the head of an enclosing tuple.
    fn head_size(&self) -> usize {
        if self.is_dynamic() {
            return 32;
        }
        match self {
            AbiType::FixedArray(elem, n) => elem.head_size() * n,
            AbiType::Tuple(members) => members.iter().map(|(_, t)| t.head_size()).sum(),
            _ => 32,
        }
    }

    /// Parses an ABI type string; `components` supplies tuple members.
    pub fn parse(ty: &str, components: &[AbiParamJson]) -> Result<AbiType, MetaError> {
        if let Some(stripped) = ty.strip_suffix(']') {
            let open = stripped
                .rfind('[')
                .ok_or_else(|| MetaError::MalformedAbi(format!("bad array type {ty:?}")))?;
            let inner = AbiType::parse(&stripped[..open], components)?;
            let dim = &stripped[open + 1..];
            return if dim.is_empty() {
                Ok(AbiType::Array(Box::new(inner)))
            } else {
                let n: usize = dim
                    .parse()
                    .map_err(|_| MetaError::MalformedAbi(format!("bad array length in {ty:?}")))?;
                Ok(AbiType::FixedArray(Box::new(inner), n))
            };
        }
        match ty {
            "address" => Ok(AbiType::Address),
            "bool" => Ok(AbiType::Bool),
            "bytes" => Ok(AbiType::Bytes),
            "string" => Ok(AbiType::String),
            "uint" => Ok(AbiType::Uint(256)),
            "int" => Ok(AbiType::Int(256)),
            "tuple" => components
                .iter()
                .map(|c| Ok((c.name.clone(), AbiType::parse(&c.ty, &c.components)?)))
                .collect::<Result<Vec<_>, _>>()
                .map(AbiType::Tuple),
            _ => {
                let bad = || MetaError::MalformedAbi(format!("unknown type {ty:?}"));
                if let Some(bits) = ty.strip_prefix("uint") {
                    let bits: u16 = bits.parse().map_err(|_| bad())?;
                    if bits == 0 || bits > 256 || !bits.is_multiple_of(8) {
                        return Err(bad());
                    }
                    Ok(AbiType::Uint(bits))
                } else if let Some(bits) = ty.strip_prefix("int") {
                    let bits: u16 = bits.parse().map_err(|_| bad())?;
                    if bits == 0 || bits > 256 || !bits.is_multiple_of(8) {
                        return Err(bad());
                    }
                    Ok(AbiType::Int(bits))
                } else if let Some(n) = ty.strip_prefix("bytes") {
                    let n: u8 = n.parse().map_err(|_| bad())?;
                    if n == 0 || n > 32 {
                        return Err(bad());
                    }
                    Ok(AbiType::FixedBytes(n))
                } else {
                    Err(bad())
                }
            }
        }
    }
}

impl fmt::Display for AbiType {
    /// Canonical form used in signatures.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AbiType::Address => f.write_str("address"),
            AbiType::Uint(b) => write!(f, "uint{b}"),
            AbiType::Int(b) => write!(f, "int{b}"),
            AbiType::Bool => f.write_str("bool"),
            AbiType::FixedBytes(n) => write!(f, "bytes{n}"),
            AbiType::Bytes => f.write_str("bytes"),
            AbiType::String => f.write_str("string"),
            AbiType::Array(e) => write!(f, "{e}[]"),
            AbiType::FixedArray(e, n) => write!(f, "{e}[{n}]"),
            AbiType::Tuple(members) => {
                f.write_str("(")?;
                for (i, (_, t)) in members.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{t}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct AbiParamJson {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    #[serde(default)]
    pub components: Vec<AbiParamJson>,
    #[serde(default)]
    pub indexed: bool,
}

#[derive(Debug, Clone, Deserialize)]
struct AbiEntryJson {
    #[serde(rename = "type", default = "default_entry_type")]
    kind: String,
    #[serde(default)]
    name: String,
    #[serde(default)]
    inputs: Vec<AbiParamJson>,
    #[serde(default)]
    anonymous: bool,
}

fn default_entry_type() -> String {
    "function".into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: AbiType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSig {
    pub name: String,
    pub inputs: Vec<Param>,
}

impl FunctionSig {
    pub fn signature(&self) -> String {
        signature(&self.name, self.inputs.iter().map(|p| &p.ty))
    }

    pub fn selector(&self) -> [u8; 4] {
        let h = keccak256(self.signature().as_bytes());
        [h.0[0], h.0[1], h.0[2], h.0[3]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventParam {
    pub name: String,
    pub ty: AbiType,
    pub indexed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventSig {
    pub name: String,
    pub inputs: Vec<EventParam>,
}

impl EventSig {
    pub fn signature(&self) -> String {
        signature(&self.name, self.inputs.iter().map(|p| &p.ty))
    }

    pub fn topic0(&self) -> Word {
        keccak256(self.signature().as_bytes())
    }
}

fn signature<'a>(name: &str, types: impl Iterator<Item = &'a AbiType>) -> String {
    let parts: Vec<String> = types.map(|t| t.to_string()).collect();
    format!("{name}({})", parts.join(","))
}

/// Functions keyed by selector, events keyed by topic0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AbiIndex {
    pub functions: BTreeMap<[u8; 4], FunctionSig>,
    pub events: BTreeMap<Word, EventSig>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedCall {
    pub name: String,
    pub selector: [u8; 4],
    pub params: Vec<(String, TypedValue)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedEvent {
    pub name: String,
    pub params: Vec<(String, TypedValue)>,
}

pub fn parse_abi(abi_json: &str) -> Result<AbiIndex, MetaError> {
    let value: serde_json::Value =
        serde_json::from_str(abi_json).map_err(|e| MetaError::MalformedAbi(e.to_string()))?;
    // Compiler artifacts sometimes wrap the array as {"abi": [...]}.
    let entries = match value {
        serde_json::Value::Object(mut o) if o.contains_key("abi") => o.remove("abi").unwrap(),
        v => v,
    };
    let entries: Vec<AbiEntryJson> =
        serde_json::from_value(entries).map_err(|e| MetaError::MalformedAbi(e.to_string()))?;

    let mut index = AbiIndex::default();
    for entry in entries {
        match entry.kind.as_str() {
            "function" => {
                let inputs = entry
                    .inputs
                    .iter()
                    .map(|p| {
                        Ok(Param {
                            name: p.name.clone(),
                            ty: AbiType::parse(&p.ty, &p.components)?,
                        })
                    })
                    .collect::<Result<Vec<_>, MetaError>>()?;
                let sig = FunctionSig {
                    name: entry.name,
                    inputs,
                };
                let selector = sig.selector();
                if let Some(prev) = index.functions.get(&selector) {
                    if prev.signature() != sig.signature() {
                        return Err(MetaError::MalformedAbi(format!(
                            "selector collision between {} and {}",
                            prev.signature(),
                            sig.signature()
                        )));
                    }
                }
                index.functions.insert(selector, sig);
            }
            "event" => {
                let inputs = entry
                    .inputs
                    .iter()
                    .map(|p| {
                        Ok(EventParam {
                            name: p.name.clone(),
                            ty: AbiType::parse(&p.ty, &p.components)?,
                            indexed: p.indexed,
                        })
                    })
                    .collect::<Result<Vec<_>, MetaError>>()?;
                if entry.anonymous {
                    continue;
                }
                let sig = EventSig {
                    name: entry.name,
                    inputs,
                };
                index.events.insert(sig.topic0(), sig);
            }
            // constructor, fallback, receive and error entries carry no selector we decode
            _ => {}
        }
    }
    Ok(index)
}

impl AbiIndex {
    pub fn function_by_name(&self, name: &str) -> Option<&FunctionSig> {
        self.functions.values().find(|f| f.name == name)
    }

    pub fn event_by_name(&self, name: &str) -> Option<&EventSig> {
        self.events.values().find(|e| e.name == name)
    }

    pub fn decode_calldata(&self, calldata: &[u8]) -> Result<DecodedCall, MetaError> {
        if calldata.len() < 4 {
            return Err(MetaError::TruncatedCalldata(format!(
                "{} bytes, selector needs 4",
                calldata.len()
            )));
        }
        let selector = [calldata[0], calldata[1], calldata[2], calldata[3]];
        let func = self
            .functions
            .get(&selector)
            .ok_or(MetaError::UnknownSelector(selector))?;
        let types: Vec<AbiType> = func.inputs.iter().map(|p| p.ty.clone()).collect();
        let values = decode_tuple(&types, &calldata[4..]).map_err(MetaError::TruncatedCalldata)?;
        Ok(DecodedCall {
            name: func.name.clone(),
            selector,
            params: func
                .inputs
                .iter()
                .map(|p| p.name.clone())
                .zip(values)
                .collect(),
        })
    }

    pub fn decode_event(&self, topics: &[Word], data: &[u8]) -> Result<DecodedEvent, MetaError> {
        let topic0 = topics
            .first()
            .ok_or_else(|| MetaError::MalformedEventData("no topics".into()))?;
        let event = self
            .events
            .get(topic0)
            .ok_or_else(|| MetaError::UnknownEvent(topic0.to_hex()))?;
        let indexed: Vec<&EventParam> = event.inputs.iter().filter(|p| p.indexed).collect();
        if indexed.len() != topics.len() - 1 {
            return Err(MetaError::MalformedEventData(format!(
                "{} expects {} indexed topics, got {}",
                event.name,
                indexed.len(),
                topics.len() - 1
            )));
        }
        let plain_types: Vec<AbiType> = event
            .inputs
            .iter()
            .filter(|p| !p.indexed)
            .map(|p| p.ty.clone())
            .collect();
        let mut plain = decode_tuple(&plain_types, data)
            .map_err(MetaError::MalformedEventData)?
            .into_iter();
        let mut topic_iter = topics[1..].iter();
        let mut params = Vec::with_capacity(event.inputs.len());
        for p in &event.inputs {
            let v = if p.indexed {
                let topic = topic_iter.next().expect("count checked");
                if p.ty.is_dynamic() || matches!(p.ty, AbiType::Tuple(_) | AbiType::FixedArray(..))
                {
                    // indexed reference types are stored as their hash
                    TypedValue::FixedBytes(Bytes(topic.0.to_vec()))
                } else {
                    decode_single(&p.ty, &topic.0).map_err(MetaError::MalformedEventData)?
                }
            } else {
                plain.next().expect("count matches")
            };
            params.push((p.name.clone(), v));
        }
        Ok(DecodedEvent {
            name: event.name.clone(),
            params,
        })
    }

    /// Encodes a call to `name`; the inverse of [`AbiIndex::decode_calldata`].
    pub fn encode_call(&self, name: &str, args: &[TypedValue]) -> Result<Vec<u8>, MetaError> {
        let func = self
            .function_by_name(name)
            .ok_or_else(|| MetaError::MalformedAbi(format!("no function {name}")))?;
        let types: Vec<AbiType> = func.inputs.iter().map(|p| p.ty.clone()).collect();
        let mut out = func.selector().to_vec();
        out.extend(encode_tuple(&types, args)?);
        Ok(out)
    }

    /// Encodes an event emission into (topics, data).
    pub fn encode_event(
        &self,
        name: &str,
        args: &[TypedValue],
    ) -> Result<(Vec<Word>, Vec<u8>), MetaError> {
        let event = self
            .event_by_name(name)
            .ok_or_else(|| MetaError::MalformedAbi(format!("no event {name}")))?;
        if args.len() != event.inputs.len() {
            return Err(MetaError::MalformedEventData(format!(
                "{name} takes {} arguments",
                event.inputs.len()
            )));
        }
        let mut topics = vec![event.topic0()];
        let mut plain_types = Vec::new();
        let mut plain_vals = Vec::new();
        for (p, v) in event.inputs.iter().zip(args) {
            if p.indexed {
                if p.ty.is_dynamic() {
                    return Err(MetaError::UnsupportedType(format!(
                        "encoding indexed {}",
                        p.ty
                    )));
                }
                let enc = encode_tuple(std::slice::from_ref(&p.ty), std::slice::from_ref(v))?;
                let mut w = [0u8; 32];
                w.copy_from_slice(&enc[..32]);
                topics.push(Word(w));
            } else {
                plain_types.push(p.ty.clone());
                plain_vals.push(v.clone());
            }
        }
        Ok((topics, encode_tuple(&plain_types, &plain_vals)?))
    }
}

fn read_word(buf: &[u8], at: usize) -> Result<&[u8], String> {
    buf.get(at..at + 32)
        .ok_or_else(|| format!("need 32 bytes at offset {at}, have {}", buf.len()))
}

fn read_usize(buf: &[u8], at: usize) -> Result<usize, String> {
    let w = read_word(buf, at)?;
    if w[..24].iter().any(|b| *b != 0) {
        return Err(format!("offset/length at {at} out of range"));
    }
    let mut be = [0u8; 8];
    be.copy_from_slice(&w[24..]);
    usize::try_from(u64::from_be_bytes(be)).map_err(|e| e.to_string())
}

fn decode_tuple(types: &[AbiType], buf: &[u8]) -> Result<Vec<TypedValue>, String> {
    let mut out = Vec::with_capacity(types.len());
    let mut pos = 0usize;
    for ty in types {
        if ty.is_dynamic() {
            let off = read_usize(buf, pos)?;
            if off > buf.len() {
                return Err(format!("offset {off} beyond {} bytes", buf.len()));
            }
            out.push(decode_single(ty, &buf[off..])?);
            pos += 32;
        } else {
            if pos > buf.len() {
                return Err(format!("head at {pos} beyond {} bytes", buf.len()));
            }
            out.push(decode_single(ty, &buf[pos..])?);
            pos += ty.head_size();
        }
    }
    Ok(out)
}

fn decode_single(ty: &AbiType, buf: &[u8]) -> Result<TypedValue, String> {
    match ty {
        AbiType::Address => {
            let w = read_word(buf, 0)?;
            if w[..12].iter().any(|b| *b != 0) {
                return Err("address has dirty high bytes".into());
            }
            let mut a = [0u8; 20];
            a.copy_from_slice(&w[12..]);
            Ok(TypedValue::Address(Address(a)))
        }
        AbiType::Uint(bits) => {
            let w = read_word(buf, 0)?;
            let spare = 32 - (*bits as usize / 8);
            if w[..spare].iter().any(|b| *b != 0) {
                return Err(format!("value exceeds uint{bits}"));
            }
            let mut word = [0u8; 32];
            word.copy_from_slice(w);
            Ok(TypedValue::Unsigned {
                bits: *bits,
                word: Word(word),
            })
        }
        AbiType::Int(bits) => {
            let w = read_word(buf, 0)?;
            let spare = 32 - (*bits as usize / 8);
            let fill = if w[spare] & 0x80 != 0 { 0xff } else { 0 };
            if w[..spare].iter().any(|b| *b != fill) {
                return Err(format!("value is not a sign-extended int{bits}"));
            }
            let mut word = [0u8; 32];
            word.copy_from_slice(w);
            Ok(TypedValue::Signed {
                bits: *bits,
                word: Word(word),
            })
        }
        AbiType::Bool => {
            let w = read_word(buf, 0)?;
            if w[..31].iter().any(|b| *b != 0) || w[31] > 1 {
                return Err("bool must be 0 or 1".into());
            }
            Ok(TypedValue::Bool(w[31] == 1))
        }
        AbiType::FixedBytes(n) => {
            let w = read_word(buf, 0)?;
            Ok(TypedValue::FixedBytes(Bytes(w[..*n as usize].to_vec())))
        }
        AbiType::Bytes | AbiType::String => {
            let len = read_usize(buf, 0)?;
            let data = buf
                .get(32..32 + len)
                .ok_or_else(|| format!("bytes of length {len} truncated"))?;
            Ok(TypedValue::Bytes(Bytes(data.to_vec())))
        }
        AbiType::Array(elem) => {
            let len = read_usize(buf, 0)?;
            let rest = &buf[32.min(buf.len())..];
            if len.saturating_mul(32) > rest.len() {
                return Err(format!("array of length {len} truncated"));
            }
            let types = vec![(**elem).clone(); len];
            decode_tuple(&types, rest).map(TypedValue::Array)
        }
        AbiType::FixedArray(elem, n) => {
            let types = vec![(**elem).clone(); *n];
            decode_tuple(&types, buf).map(TypedValue::Array)
        }
        AbiType::Tuple(members) => {
            let types: Vec<AbiType> = members.iter().map(|(_, t)| t.clone()).collect();
            let vals = decode_tuple(&types, buf)?;
            Ok(TypedValue::Struct(
                members.iter().map(|(n, _)| n.clone()).zip(vals).collect(),
            ))
        }
    }
}

pub fn encode_tuple(types: &[AbiType], values: &[TypedValue]) -> Result<Vec<u8>, MetaError> {
    if types.len() != values.len() {
        return Err(MetaError::UnsupportedType(format!(
            "{} values for {} types",
            values.len(),
            types.len()
        )));
    }
    let head_len: usize = types.iter().map(|t| t.head_size()).sum();
    let mut head = Vec::with_capacity(head_len);
    let mut tail = Vec::new();
    for (ty, v) in types.iter().zip(values) {
        if ty.is_dynamic() {
            head.extend_from_slice(&Word::from_u64((head_len + tail.len()) as u64).0);
            tail.extend(encode_single(ty, v)?);
        } else {
            head.extend(encode_single(ty, v)?);
        }
    }
    head.extend(tail);
    Ok(head)
}

fn encode_single(ty: &AbiType, v: &TypedValue) -> Result<Vec<u8>, MetaError> {
    let mismatch = || MetaError::UnsupportedType(format!("cannot encode {v:?} as {ty}"));
    match (ty, v) {
        (AbiType::Address, TypedValue::Address(a)) => Ok(Word::from_address(*a).0.to_vec()),
        (AbiType::Uint(_), TypedValue::Unsigned { word, .. })
        | (AbiType::Int(_), TypedValue::Signed { word, .. }) => Ok(word.0.to_vec()),
        (AbiType::Bool, TypedValue::Bool(b)) => Ok(Word::from_u64(*b as u64).0.to_vec()),
        (AbiType::FixedBytes(n), TypedValue::FixedBytes(b)) if b.0.len() == *n as usize => {
            let mut w = [0u8; 32];
            w[..b.0.len()].copy_from_slice(&b.0);
            Ok(w.to_vec())
        }
        (AbiType::Bytes | AbiType::String, TypedValue::Bytes(b)) => {
            let mut out = Word::from_u64(b.0.len() as u64).0.to_vec();
            out.extend_from_slice(&b.0);
            out.resize(32 + b.0.len().div_ceil(32) * 32, 0);
            Ok(out)
        }
        (AbiType::Array(elem), TypedValue::Array(items)) => {
            let mut out = Word::from_u64(items.len() as u64).0.to_vec();
            out.extend(encode_tuple(&vec![(**elem).clone(); items.len()], items)?);
            Ok(out)
        }
        (AbiType::FixedArray(elem, n), TypedValue::Array(items)) if items.len() == *n => {
            encode_tuple(&vec![(**elem).clone(); *n], items)
        }
        (AbiType::Tuple(members), TypedValue::Struct(fields)) if members.len() == fields.len() => {
            let types: Vec<AbiType> = members.iter().map(|(_, t)| t.clone()).collect();
            let vals: Vec<TypedValue> = fields.iter().map(|(_, v)| v.clone()).collect();
            encode_tuple(&types, &vals)
        }
        _ => Err(mismatch()),
    }
}
