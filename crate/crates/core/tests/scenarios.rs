use cloudpay::harness::{run_scenario, Verdict, SCENARIOS};
use cloudpay::store::{ScenarioConfig, DEMO_CONFIG};

fn demo() -> ScenarioConfig {
    ScenarioConfig::parse(DEMO_CONFIG).unwrap()
}

#[test]
fn every_scenario_passes_its_assertions() {
    let config = demo();
    for s in SCENARIOS {
        let run = run_scenario(s.name, &config, 7).unwrap();
        let failures: Vec<_> = run.outcome.failures().collect();
        assert!(
            failures.is_empty(),
            "{}: {failures:#?}\n{:#?}",
            s.name,
            run.outcome.sessions
        );
    }
}

#[test]
fn adversarial_scenarios_never_debit_other_than_the_price() {
    let config = demo();
    for s in SCENARIOS
        .iter()
        .filter(|s| !matches!(s.name, "happy-path" | "repeat-customer"))
    {
        let run = run_scenario(s.name, &config, 11).unwrap();
        for session in &run.outcome.sessions {
            match &session.verdict {
                Verdict::Dispute { .. } => assert_eq!(s.name, "dishonest-customer-trm"),
                Verdict::Settled => assert_eq!(Some(session.debited), session.price, "{}", s.name),
                _ => assert_eq!(session.debited, 0, "{}: {}", s.name, session.label),
            }
        }
    }
}
