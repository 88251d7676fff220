//! Contract metadata: selectors, slot arithmetic and ABI coding, checked
//! against independent keccak and ABI implementations.

mod common;

use common::reference::{keccak_oracle, oracle_slot, round_trip_records};

use ethabi::Token;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use txoracle_core::meta::layout::{slot_of, LayoutEntry, TypeDescriptor};
use txoracle_core::meta::{
    decode_slot_value, locate_state_variable, parse_abi, parse_layout, LayoutIndex, PathSeg,
    TypedValue,
};
use txoracle_core::sim::MachineKind;
use txoracle_core::trace::Step;
use txoracle_core::{mapping_slot, Address, MetaError, Word};

#[test]
fn transfer_selector_matches_reference_keccak() {
    let abi = parse_abi(&MachineKind::Erc20.abi_json()).unwrap();
    let f = abi.function_by_name("transfer").unwrap();
    assert_eq!(f.signature(), "transfer(address,uint256)");
    let expected = keccak_oracle(b"transfer(address,uint256)");
    assert_eq!(f.selector(), expected[..4]);
    assert_eq!(f.selector(), [0xa9, 0x05, 0x9c, 0xbb]);
}

#[test]
fn transfer_event_indexed_under_reference_topic0() {
    let abi = parse_abi(&MachineKind::Erc20.abi_json()).unwrap();
    let topic = Word(keccak_oracle(b"Transfer(address,address,uint256)"));
    assert_eq!(
        abi.events.get(&topic).map(|e| e.name.as_str()),
        Some("Transfer")
    );
}

#[test]
fn empty_abi_gives_empty_index() {
    let abi = parse_abi("[]").unwrap();
    assert!(abi.functions.is_empty() && abi.events.is_empty());
}

#[test]
fn fixture_abis_agree_with_ethabi() {
    for m in MachineKind::ALL {
        let json = m.abi_json();
        let ours = parse_abi(&json).unwrap();
        let theirs = ethabi::Contract::load(json.as_bytes()).unwrap();
        let mut expected: Vec<[u8; 4]> = theirs.functions().map(|f| f.short_signature()).collect();
        expected.sort();
        let got: Vec<[u8; 4]> = ours.functions.keys().copied().collect();
        assert_eq!(got, expected, "{}", m.name());
        let mut expected: Vec<[u8; 32]> = theirs.events().map(|e| e.signature().0).collect();
        expected.sort();
        let got: Vec<[u8; 32]> = ours.events.keys().map(|w| w.0).collect();
        assert_eq!(got, expected, "{}", m.name());
    }
}

#[test]
fn mapping_slot_of_zero_zero() {
    assert_eq!(
        mapping_slot(&Word::ZERO, &Word::ZERO),
        Word(keccak_oracle(&[0u8; 64]))
    );
    // well-known constant of the EVM ecosystem
    assert_eq!(
        mapping_slot(&Word::ZERO, &Word::ZERO).to_hex(),
        "0xad3228b676f7d3cd4284a5443f17f1962b36e491b30a40b2405849e597ba5fb5"
    );
}

#[test]
fn mapping_slot_matches_reference_on_1000_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5107);
    for _ in 0..1000 {
        let key = Word(rng.random());
        let base = Word(rng.random());
        assert_eq!(mapping_slot(&key, &base), oracle_slot(&key, &base));
    }
}

fn erc20_layout() -> LayoutIndex {
    parse_layout(&MachineKind::Erc20.layout_json()).unwrap()
}

#[test]
fn erc20_balances_slot_matches_simulator_writes() {
    let layout = erc20_layout();
    let base = layout.entry("balances").unwrap().slot;
    let c = common::corpus(MachineKind::Erc20, 20, 3);
    let mut checked = 0;
    for rec in &c.records {
        let Some(Step::CallEnter { sender, .. }) = rec.steps.first() else {
            continue;
        };
        let key = Word::from_address(*sender);
        let slot = oracle_slot(&key, &base);
        let wrote = rec
            .steps
            .iter()
            .any(|s| matches!(s, Step::StorageAccess { slot: sl, .. } if *sl == slot));
        if wrote {
            checked += 1;
        }
    }
    assert!(checked > 0, "no simulator access to balances[sender] found");
}

#[test]
fn locate_direct_slot() {
    let layout = erc20_layout();
    let ts = layout.entry("totalSupply").unwrap().clone();
    let got = locate_state_variable(&layout, &ts.slot, &[]).unwrap();
    assert_eq!(got.label, "totalSupply");
    assert!(got.path.is_empty());
    assert_eq!(got.offset, 0);
    assert_eq!(got.ty, TypeDescriptor::uint256());
}

#[test]
fn locate_mapping_entry_with_candidate_key() {
    let layout = LayoutIndex {
        entries: vec![LayoutEntry {
            label: "balances".into(),
            slot: Word::from_u64(2),
            offset: 0,
            ty: TypeDescriptor::Mapping {
                key: "address".into(),
                value: Box::new(TypeDescriptor::uint256()),
            },
        }],
    };
    let addr = Word::from_address(Address::from_label("holder"));
    let slot = oracle_slot(&addr, &Word::from_u64(2));
    let got = locate_state_variable(&layout, &slot, &[Word::from_u64(9), addr]).unwrap();
    assert_eq!(got.label, "balances");
    assert_eq!(got.path, vec![PathSeg::Key(addr)]);
    assert!(locate_state_variable(&layout, &slot, &[Word::from_u64(9)]).is_none());
}

#[test]
fn locate_unknown_slot_is_absent() {
    let layout = erc20_layout();
    assert!(locate_state_variable(&layout, &Word::from_u64(77), &[Word::ZERO]).is_none());
}

#[test]
fn uint256_slot_value() {
    let v = decode_slot_value(&TypeDescriptor::uint256(), &Word::from_u64(0x64), 0).unwrap();
    assert_eq!(v, TypedValue::uint(100));
}

#[test]
fn packed_bool_at_offset_20() {
    // address in bytes [0,20), bool in byte 20, both counted from the low end
    let mut raw = [0u8; 32];
    raw[12..32].copy_from_slice(&[0x11; 20]);
    raw[11] = 1;
    let raw = Word(raw);
    let bool_ty = TypeDescriptor::Value {
        name: "bool".into(),
        width: 1,
    };
    let addr_ty = TypeDescriptor::Value {
        name: "address".into(),
        width: 20,
    };
    assert_eq!(
        decode_slot_value(&bool_ty, &raw, 20).unwrap(),
        TypedValue::Bool(true)
    );
    assert_eq!(
        decode_slot_value(&addr_ty, &raw, 0).unwrap(),
        TypedValue::Address(Address([0x11; 20]))
    );
    let mut cleared = raw;
    cleared.0[11] = 0;
    assert_eq!(
        decode_slot_value(&bool_ty, &cleared, 20).unwrap(),
        TypedValue::Bool(false)
    );
}

#[test]
fn address_ignores_high_bytes() {
    let mut raw = [0xffu8; 32];
    raw[12..].copy_from_slice(&[0x22; 20]);
    let ty = TypeDescriptor::Value {
        name: "address".into(),
        width: 20,
    };
    assert_eq!(
        decode_slot_value(&ty, &Word(raw), 0).unwrap(),
        TypedValue::Address(Address([0x22; 20]))
    );
}

#[test]
fn simulator_calldata_and_events_round_trip() {
    for m in MachineKind::ALL {
        let (calls, events) = round_trip_records(m, &common::corpus(m, 80, 5).records);
        assert!(
            calls >= 80 && events > 0,
            "{}: {calls} calls, {events} events",
            m.name()
        );
    }
}

#[test]
fn deposit_event_round_trips() {
    let abi = parse_abi(&MachineKind::DepositVault.abi_json()).unwrap();
    let args = vec![
        TypedValue::Address(Address::from_label("vault")),
        TypedValue::Address(Address::from_label("asset")),
        TypedValue::uint(1234),
    ];
    let (topics, data) = abi.encode_event("Deposit", &args).unwrap();
    assert_eq!(topics.len(), 3);
    let d = abi.decode_event(&topics, &data).unwrap();
    assert_eq!(d.name, "Deposit");
    let names: Vec<&str> = d.params.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["vault", "asset", "amount"]);
    assert_eq!(
        d.params.into_iter().map(|(_, v)| v).collect::<Vec<_>>(),
        args
    );
}

#[test]
fn transfer_calldata_from_reference_encoder_decodes() {
    let abi = parse_abi(&MachineKind::Erc20.abi_json()).unwrap();
    let to = [0x42u8; 20];
    let mut calldata = keccak_oracle(b"transfer(address,uint256)")[..4].to_vec();
    calldata.extend(ethabi::encode(&[
        Token::Address(to.into()),
        Token::Uint(100u64.into()),
    ]));
    let d = abi.decode_calldata(&calldata).unwrap();
    assert_eq!(d.name, "transfer");
    assert_eq!(
        d.params,
        vec![
            ("to".into(), TypedValue::Address(Address(to))),
            ("amt".into(), TypedValue::uint(100))
        ]
    );
    assert!(matches!(
        abi.decode_calldata(&[1, 2, 3, 4]),
        Err(MetaError::UnknownSelector(_))
    ));
    assert!(matches!(
        abi.decode_calldata(&calldata[..20]),
        Err(MetaError::TruncatedCalldata(_))
    ));
}

fn mapping_layout() -> LayoutIndex {
    parse_layout(&MachineKind::Erc20.layout_json()).unwrap()
}

proptest! {
    #[test]
    fn word_render_round_trips(bytes in proptest::array::uniform32(any::<u8>())) {
        let w = Word(bytes);
        let s = w.to_string();
        prop_assert_eq!(s.len(), 66);
        prop_assert_eq!(s.parse::<Word>().unwrap(), w);
    }

    #[test]
    fn located_slots_recompute_forward(
        holder in proptest::array::uniform20(any::<u8>()),
        spender in proptest::array::uniform20(any::<u8>()),
        nested in any::<bool>(),
    ) {
        let layout = mapping_layout();
        let (h, s) = (Word::from_address(Address(holder)), Word::from_address(Address(spender)));
        let path = if nested {
            vec![PathSeg::Key(h), PathSeg::Key(s)]
        } else {
            vec![PathSeg::Key(h)]
        };
        let label = if nested { "allowance" } else { "balances" };
        let slot = slot_of(&layout, label, &path).unwrap();
        let got = locate_state_variable(&layout, &slot, &[s, h, Word::ZERO]).unwrap();
        prop_assert_eq!(&got.label, label);
        prop_assert_eq!(slot_of(&layout, &got.label, &got.path), Some(slot));
        // forward recomputation with the reference hash
        let mut expect = layout.entry(label).unwrap().slot;
        for seg in &got.path {
            let PathSeg::Key(k) = seg else { unreachable!() };
            expect = oracle_slot(k, &expect);
        }
        prop_assert_eq!(expect, slot);
    }
}
