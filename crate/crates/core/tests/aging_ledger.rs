mod support;

use impact_core::aging::{device_name, SwitchStressLedger};
use impact_core::dynamics::{default_models, parse_scenario, run_scenario, RunOptions};

#[test]
fn ledger_counts_only_executed_switching() {
    let case = support::ieee118();
    let sched = parse_scenario(
        "0 open_branch 100 106\n5 open_branch 100 104\n10 open_branch 100 104\n15 open_branch 100 103\n",
    )
    .unwrap();
    let (trace, _) = run_scenario(&case, &sched, &default_models(&case), &RunOptions::default()).unwrap();
    let executed = trace.events.iter().filter(|e| e.executed()).count();
    assert_eq!(executed, 3, "the repeated open is skipped");

    let mut ledger = SwitchStressLedger::new();
    ledger.record_trace(&trace, 1);
    let total: u64 = ledger.devices().map(|(_, d)| d.operations).sum();
    assert_eq!(total, executed as u64);
    assert!(ledger.flagged().is_empty());

    ledger.record_trace(&trace, 1);
    let name = device_name(&trace.events[0].action);
    assert_eq!(ledger.get(&name).unwrap().operations, 2);
    assert_eq!(ledger.flagged().len(), 3);
}
