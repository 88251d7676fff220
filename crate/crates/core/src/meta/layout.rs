//! Storage layout ingestion, slot location and packed-slot decoding.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::MetaError;
use crate::meta::value::TypedValue;
use crate::word::{array_data_slot, mapping_slot, Address, Bytes, Word};

/// Deepest mapping nesting resolved against candidate keys.
pub const MAX_MAPPING_DEPTH: usize = 3;
/// Largest dynamic-array slot offset considered a match.
const ARRAY_SPAN: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeDescriptor {
    /// A value type occupying `width` bytes of a slot.
    Value {
        name: String,
        width: u8,
    },
    DynArray {
        elem: Box<TypeDescriptor>,
    },
    Mapping {
        key: String,
        value: Box<TypeDescriptor>,
    },
    Struct {
        name: String,
        slots: u64,
        members: Vec<StructMember>,
    },
    /// Recognised in the layout but not decoded (strings, static arrays, ...).
    Unsupported {
        name: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StructMember {
    pub label: String,
    pub slot: u64,
    pub offset: u8,
    pub ty: TypeDescriptor,
}

impl TypeDescriptor {
    pub fn uint256() -> Self {
        TypeDescriptor::Value {
            name: "uint256".into(),
            width: 32,
        }
    }

    pub fn is_value(&self) -> bool {
        matches!(self, TypeDescriptor::Value { .. })
    }

    /// Slots taken by one element of this type inside a dynamic array, or
    /// `(per_slot, width)` packing for narrow value types.
    fn array_stride(&self) -> Option<ArrayStride> {
        match self {
            TypeDescriptor::Value { width, .. } => Some(ArrayStride::Packed {
                per_slot: (32 / *width as u64).max(1),
                width: *width,
            }),
            TypeDescriptor::Struct { slots, .. } => Some(ArrayStride::Slots(*slots)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum ArrayStride {
    Packed { per_slot: u64, width: u8 },
    Slots(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutEntry {
    pub label: String,
    pub slot: Word,
    pub offset: u8,
    pub ty: TypeDescriptor,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayoutIndex {
    pub entries: Vec<LayoutEntry>,
}

/// One step from a state variable's root to the located value.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathSeg {
    Key(Word),
    Index(u64),
    Field(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Located {
    pub label: String,
    pub path: Vec<PathSeg>,
    pub ty: TypeDescriptor,
    pub offset: u8,
}

#[derive(Deserialize)]
struct LayoutJson {
    storage: Vec<StorageJson>,
    #[serde(default)]
    types: Option<BTreeMap<String, TypeJson>>,
}

#[derive(Deserialize)]
struct StorageJson {
    label: String,
    #[serde(deserialize_with = "de_u64_or_str")]
    offset: u64,
    slot: String,
    #[serde(rename = "type")]
    ty: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct TypeJson {
    encoding: String,
    label: String,
    #[serde(deserialize_with = "de_u64_or_str")]
    number_of_bytes: u64,
    key: Option<String>,
    value: Option<String>,
    base: Option<String>,
    members: Option<Vec<StorageJson>>,
}

fn de_u64_or_str<'de, D: serde::Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Either {
        N(u64),
        S(String),
    }
    match Either::deserialize(d)? {
        Either::N(n) => Ok(n),
        Either::S(s) => s.parse().map_err(serde::de::Error::custom),
    }
}

fn parse_slot(s: &str) -> Result<Word, MetaError> {
    if s.starts_with("0x") {
        return s
            .parse()
            .map_err(|e| MetaError::MalformedLayout(format!("slot {s:?}: {e}")));
    }
    let n: num_bigint::BigUint = s
        .parse()
        .map_err(|_| MetaError::MalformedLayout(format!("slot {s:?} is not a number")))?;
    Word::from_biguint(&n).ok_or_else(|| MetaError::MalformedLayout(format!("slot {s} too large")))
}

fn value_name(label: &str) -> String {
    if label.starts_with("contract ") || label == "address payable" {
        "address".into()
    } else if label.starts_with("enum ") {
        "uint8".into()
    } else {
        label.to_string()
    }
}

fn build_descriptor(
    id: &str,
    types: &BTreeMap<String, TypeJson>,
    depth: usize,
) -> Result<TypeDescriptor, MetaError> {
    if depth > 16 {
        return Err(MetaError::MalformedLayout(format!(
            "type {id} nests too deeply"
        )));
    }
    let t = types
        .get(id)
        .ok_or_else(|| MetaError::MalformedLayout(format!("unknown type id {id}")))?;
    let missing = |field: &str| MetaError::MalformedLayout(format!("{id} lacks {field}"));
    Ok(match t.encoding.as_str() {
        "inplace" if t.members.is_some() => {
            let members = t
                .members
                .as_ref()
                .unwrap()
                .iter()
                .map(|m| {
                    Ok(StructMember {
                        label: m.label.clone(),
                        slot: m.slot.parse().map_err(|_| {
                            MetaError::MalformedLayout(format!("member slot {}", m.slot))
                        })?,
                        offset: m.offset as u8,
                        ty: build_descriptor(&m.ty, types, depth + 1)?,
                    })
                })
                .collect::<Result<Vec<_>, MetaError>>()?;
            TypeDescriptor::Struct {
                name: t.label.clone(),
                slots: t.number_of_bytes.div_ceil(32).max(1),
                members,
            }
        }
        "inplace" if t.base.is_some() => TypeDescriptor::Unsupported {
            name: t.label.clone(),
        },
        "inplace" => {
            if t.number_of_bytes == 0 || t.number_of_bytes > 32 {
                return Err(MetaError::MalformedLayout(format!(
                    "{id} has width {}",
                    t.number_of_bytes
                )));
            }
            TypeDescriptor::Value {
                name: value_name(&t.label),
                width: t.number_of_bytes as u8,
            }
        }
        "mapping" => {
            let key_id = t.key.as_deref().ok_or_else(|| missing("key"))?;
            let key = types
                .get(key_id)
                .map(|k| value_name(&k.label))
                .unwrap_or_else(|| key_id.to_string());
            TypeDescriptor::Mapping {
                key,
                value: Box::new(build_descriptor(
                    t.value.as_deref().ok_or_else(|| missing("value"))?,
                    types,
                    depth + 1,
                )?),
            }
        }
        "dynamic_array" => TypeDescriptor::DynArray {
            elem: Box::new(build_descriptor(
                t.base.as_deref().ok_or_else(|| missing("base"))?,
                types,
                depth + 1,
            )?),
        },
        _ => TypeDescriptor::Unsupported {
            name: t.label.clone(),
        },
    })
}

/// Parses a compiler `storageLayout` JSON object.
pub fn parse_layout(json: &str) -> Result<LayoutIndex, MetaError> {
    let raw: LayoutJson =
        serde_json::from_str(json).map_err(|e| MetaError::MalformedLayout(e.to_string()))?;
    let types = raw.types.unwrap_or_default();
    let mut entries = Vec::with_capacity(raw.storage.len());
    for s in &raw.storage {
        if s.offset > 31 {
            return Err(MetaError::MalformedLayout(format!(
                "{} has offset {}",
                s.label, s.offset
            )));
        }
        entries.push(LayoutEntry {
            label: s.label.clone(),
            slot: parse_slot(&s.slot)?,
            offset: s.offset as u8,
            ty: build_descriptor(&s.ty, &types, 0)?,
        });
    }
    let index = LayoutIndex { entries };
    index.check_packing()?;
    Ok(index)
}

impl LayoutIndex {
    fn check_packing(&self) -> Result<(), MetaError> {
        let mut by_slot: HashMap<Word, Vec<(u8, u8, &str)>> = HashMap::new();
        for e in &self.entries {
            if let TypeDescriptor::Value { width, .. } = &e.ty {
                if e.offset as usize + *width as usize > 32 {
                    return Err(MetaError::MalformedLayout(format!(
                        "{} overflows its slot",
                        e.label
                    )));
                }
                by_slot
                    .entry(e.slot)
                    .or_default()
                    .push((e.offset, *width, &e.label));
            }
        }
        for ranges in by_slot.values_mut() {
            ranges.sort();
            for pair in ranges.windows(2) {
                let (a_off, a_w, a) = pair[0];
                let (b_off, _, b) = pair[1];
                if a_off + a_w > b_off {
                    return Err(MetaError::MalformedLayout(format!("{a} overlaps {b}")));
                }
            }
        }
        Ok(())
    }

    pub fn entry(&self, label: &str) -> Option<&LayoutEntry> {
        self.entries.iter().find(|e| e.label == label)
    }
}

#[derive(Debug, Clone)]
struct ArrayRoot {
    label: String,
    path: Vec<PathSeg>,
    data: Word,
    elem: TypeDescriptor,
    stride: ArrayStride,
}

/// Precomputed slot → variable table for one layout and one candidate key set.
#[derive(Debug, Clone, Default)]
pub struct SlotIndex {
    exact: HashMap<Word, Vec<Located>>,
    arrays: Vec<ArrayRoot>,
}

impl SlotIndex {
    pub fn new(layout: &LayoutIndex, candidates: &[Word]) -> Self {
        let mut idx = SlotIndex::default();
        for e in &layout.entries {
            idx.register(&e.label, Vec::new(), e.slot, e.offset, &e.ty, candidates, 0);
        }
        idx
    }

    #[allow(clippy::too_many_arguments)]
    fn register(
        &mut self,
        label: &str,
        path: Vec<PathSeg>,
        slot: Word,
        offset: u8,
        ty: &TypeDescriptor,
        candidates: &[Word],
        depth: usize,
    ) {
        match ty {
            TypeDescriptor::Value { .. } | TypeDescriptor::Unsupported { .. } => {
                self.exact.entry(slot).or_default().push(Located {
                    label: label.to_string(),
                    path,
                    ty: ty.clone(),
                    offset,
                });
            }
            TypeDescriptor::Struct { members, .. } => {
                for m in members {
                    let mut p = path.clone();
                    p.push(PathSeg::Field(m.label.clone()));
                    self.register(
                        label,
                        p,
                        slot.wrapping_add(m.slot),
                        m.offset,
                        &m.ty,
                        candidates,
                        depth,
                    );
                }
            }
            TypeDescriptor::DynArray { elem } => {
                let mut len_path = path.clone();
                len_path.push(PathSeg::Field("length".into()));
                self.exact.entry(slot).or_default().push(Located {
                    label: label.to_string(),
                    path: len_path,
                    ty: TypeDescriptor::uint256(),
                    offset: 0,
                });
                if let Some(stride) = elem.array_stride() {
                    self.arrays.push(ArrayRoot {
                        label: label.to_string(),
                        path,
                        data: array_data_slot(&slot),
                        elem: (**elem).clone(),
                        stride,
                    });
                }
            }
            TypeDescriptor::Mapping { value, .. } => {
                if depth >= MAX_MAPPING_DEPTH {
                    return;
                }
                for k in candidates {
                    let mut p = path.clone();
                    p.push(PathSeg::Key(*k));
                    self.register(
                        label,
                        p,
                        mapping_slot(k, &slot),
                        0,
                        value,
                        candidates,
                        depth + 1,
                    );
                }
            }
        }
    }

    /// Every variable stored (possibly packed) in `slot`.
    pub fn lookup(&self, slot: &Word) -> Vec<Located> {
        let mut out: Vec<Located> = self.exact.get(slot).cloned().unwrap_or_default();
        for root in &self.arrays {
            let Some(d) = slot.offset_from(&root.data) else {
                continue;
            };
            if d >= ARRAY_SPAN {
                continue;
            }
            match root.stride {
                ArrayStride::Packed { per_slot, width } => {
                    for j in 0..per_slot {
                        let mut p = root.path.clone();
                        p.push(PathSeg::Index(d * per_slot + j));
                        out.push(Located {
                            label: root.label.clone(),
                            path: p,
                            ty: root.elem.clone(),
                            offset: (j as u8) * width,
                        });
                    }
                }
                ArrayStride::Slots(stride) => {
                    let idx = d / stride;
                    let within = d % stride;
                    if let TypeDescriptor::Struct { members, .. } = &root.elem {
                        for m in members
                            .iter()
                            .filter(|m| m.slot == within && m.ty.is_value())
                        {
                            let mut p = root.path.clone();
                            p.push(PathSeg::Index(idx));
                            p.push(PathSeg::Field(m.label.clone()));
                            out.push(Located {
                                label: root.label.clone(),
                                path: p,
                                ty: m.ty.clone(),
                                offset: m.offset,
                            });
                        }
                    }
                }
            }
        }
        out.sort_by_key(|l| l.offset);
        out
    }
}

/// Finds the state variable stored at `slot_key`, trying each candidate as a
/// mapping key (nested up to [`MAX_MAPPING_DEPTH`]). For packed slots the
/// lowest-offset variable is returned; see [`SlotIndex::lookup`] for all.
pub fn locate_state_variable(
    layout: &LayoutIndex,
    slot_key: &Word,
    candidates: &[Word],
) -> Option<Located> {
    SlotIndex::new(layout, candidates)
        .lookup(slot_key)
        .into_iter()
        .next()
}

/// Recomputes the slot of a located variable from its root and path.
pub fn slot_of(layout: &LayoutIndex, label: &str, path: &[PathSeg]) -> Option<Word> {
    let entry = layout.entry(label)?;
    let mut slot = entry.slot;
    let mut ty = &entry.ty;
    let mut i = 0;
    while i < path.len() {
        match (ty, &path[i]) {
            (TypeDescriptor::Mapping { value, .. }, PathSeg::Key(k)) => {
                slot = mapping_slot(k, &slot);
                ty = value;
            }
            (TypeDescriptor::Struct { members, .. }, PathSeg::Field(f)) => {
                let m = members.iter().find(|m| &m.label == f)?;
                slot = slot.wrapping_add(m.slot);
                ty = &m.ty;
            }
            (TypeDescriptor::DynArray { .. }, PathSeg::Field(f)) if f == "length" => {
                return (i + 1 == path.len()).then_some(slot);
            }
            (TypeDescriptor::DynArray { elem }, PathSeg::Index(n)) => {
                let data = array_data_slot(&slot);
                slot = match elem.array_stride()? {
                    ArrayStride::Packed { per_slot, .. } => data.wrapping_add(n / per_slot),
                    ArrayStride::Slots(s) => data.wrapping_add(n * s),
                };
                ty = elem;
            }
            _ => return None,
        }
        i += 1;
    }
    Some(slot)
}

/// Descriptor reached by following `path` from the root variable `label`.
pub fn type_at<'a>(
    layout: &'a LayoutIndex,
    label: &str,
    path: &[PathSeg],
) -> Option<&'a TypeDescriptor> {
    let mut ty = &layout.entry(label)?.ty;
    for seg in path {
        ty = match (ty, seg) {
            (TypeDescriptor::Mapping { value, .. }, PathSeg::Key(_)) => value,
            (TypeDescriptor::Struct { members, .. }, PathSeg::Field(f)) => {
                &members.iter().find(|m| &m.label == f)?.ty
            }
            (TypeDescriptor::DynArray { elem }, PathSeg::Index(_)) => elem,
            _ => return None,
        };
    }
    Some(ty)
}

/// Extracts the value at byte `offset` (counted from the low-order end, as
/// the compiler packs) of a raw slot.
pub fn decode_slot_value(
    descriptor: &TypeDescriptor,
    raw: &Word,
    offset: u8,
) -> Result<TypedValue, MetaError> {
    let TypeDescriptor::Value { name, width } = descriptor else {
        return Err(MetaError::UnsupportedType(format!("{descriptor:?}")));
    };
    let (w, off) = (*width as usize, offset as usize);
    if off + w > 32 {
        return Err(MetaError::UnsupportedType(format!(
            "{name} at offset {off} overflows the slot"
        )));
    }
    let bytes = &raw.0[32 - off - w..32 - off];
    let widen = |fill: u8| {
        let mut out = [fill; 32];
        out[32 - w..].copy_from_slice(bytes);
        Word(out)
    };
    let name = name.as_str();
    Ok(if name == "address" {
        let mut a = [0u8; 20];
        a.copy_from_slice(&bytes[w.saturating_sub(20)..]);
        TypedValue::Address(Address(a))
    } else if name == "bool" {
        TypedValue::Bool(bytes.iter().any(|b| *b != 0))
    } else if name.starts_with("uint") {
        TypedValue::Unsigned {
            bits: (w * 8) as u16,
            word: widen(0),
        }
    } else if name.starts_with("int") {
        let fill = if bytes[0] & 0x80 != 0 { 0xff } else { 0 };
        TypedValue::Signed {
            bits: (w * 8) as u16,
            word: widen(fill),
        }
    } else if name.starts_with("bytes") {
        TypedValue::FixedBytes(Bytes(bytes.to_vec()))
    } else {
        return Err(MetaError::UnsupportedType(name.to_string()));
    })
}
