use mcdstat::scenarios::{run, SCENARIOS};

#[test]
fn every_scenario_passes() {
    for (name, _) in SCENARIOS {
        let r = run(name, 0).unwrap();
        for c in &r.checks {
            println!("{name}: {} expected {} observed {} {}", c.label, c.expected, c.observed, c.pass);
        }
        assert!(r.pass, "{name}");
    }
}

#[test]
fn unknown_scenario_is_rejected() {
    assert!(run("nope", 0).is_err());
}
