//! Independent keccak and ABI implementations used as test oracles.

use ethabi::Token;
use sha3::{Digest, Keccak256};
use txoracle_core::meta::abi::AbiType;
use txoracle_core::meta::{parse_abi, TypedValue};
use txoracle_core::sim::MachineKind;
use txoracle_core::trace::Step;
use txoracle_core::{RawTxRecord, Word};

pub fn keccak_oracle(data: &[u8]) -> [u8; 32] {
    Keccak256::digest(data).into()
}

pub fn oracle_slot(key: &Word, base: &Word) -> Word {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(&key.0);
    buf[32..].copy_from_slice(&base.0);
    Word(keccak_oracle(&buf))
}

pub fn to_token(ty: &AbiType, v: &TypedValue) -> Token {
    match (ty, v) {
        (AbiType::Address, TypedValue::Address(a)) => Token::Address(ethabi::Address::from(a.0)),
        (AbiType::Uint(_), TypedValue::Unsigned { word, .. }) => {
            Token::Uint(ethabi::Uint::from_big_endian(&word.0))
        }
        (AbiType::Int(_), TypedValue::Signed { word, .. }) => {
            Token::Int(ethabi::Uint::from_big_endian(&word.0))
        }
        (AbiType::Bool, TypedValue::Bool(b)) => Token::Bool(*b),
        (AbiType::FixedBytes(_), TypedValue::FixedBytes(b)) => Token::FixedBytes(b.0.clone()),
        (AbiType::Bytes, TypedValue::Bytes(b)) => Token::Bytes(b.0.clone()),
        (AbiType::String, TypedValue::Bytes(b)) => {
            Token::String(String::from_utf8(b.0.clone()).unwrap())
        }
        (AbiType::Array(t), TypedValue::Array(items)) => {
            Token::Array(items.iter().map(|i| to_token(t, i)).collect())
        }
        (AbiType::FixedArray(t, _), TypedValue::Array(items)) => {
            Token::FixedArray(items.iter().map(|i| to_token(t, i)).collect())
        }
        (AbiType::Tuple(ms), TypedValue::Struct(vs)) => Token::Tuple(
            ms.iter()
                .zip(vs)
                .map(|((_, t), (_, v))| to_token(t, v))
                .collect(),
        ),
        other => panic!("type/value mismatch {other:?}"),
    }
}

/// Every call and event the simulator emits for `m` decodes, and re-encodes
/// to the same bytes under both our encoder and ethabi.
pub fn round_trip_records(m: MachineKind, records: &[RawTxRecord]) -> (usize, usize) {
    let abi = parse_abi(&m.abi_json()).unwrap();
    let target = m.address();
    let (mut calls, mut events) = (0, 0);
    for rec in records {
        for step in &rec.steps {
            match step {
                Step::CallEnter {
                    receiver, calldata, ..
                } if *receiver == target && calldata.0.len() >= 4 => {
                    let d = abi.decode_calldata(&calldata.0).unwrap();
                    let args: Vec<TypedValue> = d.params.iter().map(|(_, v)| v.clone()).collect();
                    assert_eq!(abi.encode_call(&d.name, &args).unwrap(), calldata.0);
                    let f = abi.function_by_name(&d.name).unwrap();
                    let tokens: Vec<Token> = f
                        .inputs
                        .iter()
                        .zip(&args)
                        .map(|(p, v)| to_token(&p.ty, v))
                        .collect();
                    let mut reference = f.selector().to_vec();
                    reference.extend(ethabi::encode(&tokens));
                    assert_eq!(reference, calldata.0);
                    calls += 1;
                }
                Step::EventEmit {
                    emitter,
                    topics,
                    data,
                } if *emitter == target => {
                    let d = abi.decode_event(topics, &data.0).unwrap();
                    let args: Vec<TypedValue> = d.params.iter().map(|(_, v)| v.clone()).collect();
                    let (t2, d2) = abi.encode_event(&d.name, &args).unwrap();
                    assert_eq!((&t2, &d2), (topics, &data.0));
                    let sig = abi.event_by_name(&d.name).unwrap();
                    let mut plain = Vec::new();
                    let mut ref_topics = vec![sig.topic0()];
                    for (p, v) in sig.inputs.iter().zip(&args) {
                        let tok = to_token(&p.ty, v);
                        if p.indexed {
                            ref_topics.push(Word(ethabi::encode(&[tok]).try_into().unwrap()));
                        } else {
                            plain.push(tok);
                        }
                    }
                    assert_eq!(&ref_topics, topics);
                    assert_eq!(ethabi::encode(&plain), data.0);
                    events += 1;
                }
                _ => {}
            }
        }
    }
    (calls, events)
}

