use std::time::Instant;
use txoracle_core::miner::{candidate_cache, filter_with_cache, group_traces};
use txoracle_core::property::{seed_arithmetic, DetectConfig};
use txoracle_core::sim::{gen_corpus, MachineKind, ScenarioSpec};
use txoracle_core::{extract_transaction, MinerConfig};
fn main() {
    for m in [MachineKind::Erc20, MachineKind::DepositVault] {
        let spec = ScenarioSpec::new(m, 32, 1000);
        let meta = m.meta();
        let traces: Vec<_> = gen_corpus(&spec).unwrap().records.iter().flat_map(|r| extract_transaction(r, &meta).unwrap()).collect();
        let t = Instant::now();
        let cache = candidate_cache(&traces, &MinerConfig::default());
        println!("cache {:?} total cands {}", t.elapsed(), cache.values().map(|v| v.len()).sum::<usize>());
        for g in &group_traces(&traces) {
            let t = Instant::now();
            let n = filter_with_cache(g, &cache, &MinerConfig::default()).len();
            let f = t.elapsed();
            let t = Instant::now();
            let a = seed_arithmetic(&g.traces, &DetectConfig::default()).len();
            println!("{} {} traces filter {:?} ({n}) arith {:?} ({a})", m.name(), g.traces.len(), f, t.elapsed());
        }
    }
}
