//! The shipped fixtures are exactly what the simulator produces.

mod common;

use common::{assert_golden, corpus};
use txoracle_core::meta::{parse_abi, parse_layout};
use txoracle_core::sim::MachineKind;

/// The 1000-transaction ERC20 corpus used by the throughput and recovery checks.
pub const ERC20_FIXTURE_TXS: usize = 1000;
pub const ERC20_FIXTURE_SEED: u64 = 7;

#[test]
fn machine_metadata_matches_fixtures() {
    for m in MachineKind::ALL {
        let abi = m.abi_json();
        let layout = m.layout_json();
        parse_abi(&abi).unwrap();
        parse_layout(&layout).unwrap();
        assert_golden(&format!("{}.abi.json", m.name()), &abi);
        assert_golden(&format!("{}.layout.json", m.name()), &layout);
    }
}

#[test]
fn erc20_corpus_matches_fixture() {
    let c = corpus(MachineKind::Erc20, ERC20_FIXTURE_TXS, ERC20_FIXTURE_SEED);
    assert_golden("erc20.traces.ndjson", &c.to_ndjson());
}
