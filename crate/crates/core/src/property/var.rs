use crate::meta::NumClass;
use crate::trace::RecordPoint;
use crate::word::Word;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxField {
    Sender,
    Receiver,
    Block,
    Timestamp,
    Value,
}

impl TxField {
    pub const ALL: [TxField; 5] = [
        TxField::Sender,
        TxField::Receiver,
        TxField::Block,
        TxField::Timestamp,
        TxField::Value,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TxField::Sender => "sender",
            TxField::Receiver => "receiver",
            TxField::Block => "block",
            TxField::Timestamp => "timestamp",
            TxField::Value => "value",
        }
    }

    pub fn class(self) -> NumClass {
        match self {
            TxField::Sender | TxField::Receiver => NumClass::Address,
            TxField::Block => NumClass::Block,
            TxField::Timestamp => NumClass::Timestamp,
            TxField::Value => NumClass::Amount,
        }
    }
}

/// A mapping key: a fixed word, or a reference to an entry scalar whose
/// value supplies the key in each trace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Key {
    Concrete(Word),
    Symbolic(Box<VarRef>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Seg {
    Key(Key),
    Index(u64),
    Field(String),
}

/// A storage location whose value is sampled at record points.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    State {
        label: String,
        path: Vec<Seg>,
    },
    Token {
        token: Key,
        holder: Key,
    },
    /// Sum over every observed key of a one-level mapping.
    Sum {
        label: String,
    },
    /// Sum over every observed holder of one token.
    TokenSum {
        token: Key,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarRef {
    Tx(TxField),
    Param(String),
    Event {
        event: String,
        occurrence: u32,
        param: String,
    },
    At {
        loc: Loc,
        point: RecordPoint,
    },
    /// `value(to) - value(from)`.
    Delta {
        loc: Loc,
        from: RecordPoint,
        to: RecordPoint,
    },
}

impl Loc {
    pub fn keys(&self) -> Vec<&Key> {
        match self {
            Loc::State { path, .. } => path
                .iter()
                .filter_map(|s| match s {
                    Seg::Key(k) => Some(k),
                    _ => None,
                })
                .collect(),
            Loc::Token { token, holder } => vec![token, holder],
            Loc::Sum { .. } => vec![],
            Loc::TokenSum { token } => vec![token],
        }
    }

    /// Key positions that advanced inference may rewrite. Anonymous raw-slot
    /// variables carry a slot hash, not a mapping key, and are left alone.
    pub fn mapping_keys_mut(&mut self) -> Vec<&mut Key> {
        match self {
            Loc::State { label, path } => {
                if label == crate::trace::extract::ANON_SLOT_LABEL {
                    return vec![];
                }
                path.iter_mut()
                    .filter_map(|s| match s {
                        Seg::Key(k) => Some(k),
                        _ => None,
                    })
                    .collect()
            }
            Loc::Token { token, holder } => vec![token, holder],
            Loc::Sum { .. } => vec![],
            Loc::TokenSum { token } => vec![token],
        }
    }

    pub fn is_concrete(&self) -> bool {
        self.keys().iter().all(|k| matches!(k, Key::Concrete(_)))
    }
}

impl VarRef {
    pub fn state(label: &str, path: Vec<Seg>, point: RecordPoint) -> Self {
        VarRef::At {
            loc: Loc::State {
                label: label.to_string(),
                path,
            },
            point,
        }
    }

    pub fn param(name: &str) -> Self {
        VarRef::Param(name.to_string())
    }

    pub fn loc(&self) -> Option<&Loc> {
        match self {
            VarRef::At { loc, .. } | VarRef::Delta { loc, .. } => Some(loc),
            _ => None,
        }
    }

    pub fn loc_mut(&mut self) -> Option<&mut Loc> {
        match self {
            VarRef::At { loc, .. } | VarRef::Delta { loc, .. } => Some(loc),
            _ => None,
        }
    }

    /// Entry and log scalars; the only variables a symbolic key may name.
    pub fn is_entry(&self) -> bool {
        matches!(
            self,
            VarRef::Tx(_) | VarRef::Param(_) | VarRef::Event { .. }
        )
    }

    pub fn has_symbolic_key(&self) -> bool {
        self.loc()
            .map(|l| l.keys().iter().any(|k| matches!(k, Key::Symbolic(_))))
            .unwrap_or(false)
    }

    pub fn mapping_keys_mut(&mut self) -> Vec<&mut Key> {
        self.loc_mut()
            .map(|l| l.mapping_keys_mut())
            .unwrap_or_default()
    }
}
