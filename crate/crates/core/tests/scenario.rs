use cablenet::scenario::{bundled, load_scenario, parse_scenario, Mode, BUNDLED};
use cablenet::{Method, ObjectiveSpec, ParamKind, Sense};

const TWO_PORT: &str = r#"
name = "two_port"
seed = 4

[network]
frequency_ghz = 2.1
index = [1.0, 0.0085]
vertices = 2
bonds = [[1, 2, 27.0]]
leads = [1, 2]

[wavefront]
leads = [{ lead = 1, amplitude = 1.0, phase_deg = 90.0 }]

[objective]
kind = "tmt"
injected = [1]
targeted = [2]

[tunables]
bonds = [[2, 1]]
bond_spread_cm = 3.0
phases = [1]
"#;

#[test]
fn every_bundled_scenario_parses() {
    for (name, _) in BUNDLED {
        let s = bundled(name).unwrap().unwrap();
        assert_eq!(&s.name, name);
        assert!(!s.params.is_empty());
    }
    assert!(bundled("nope").is_none());
}

#[test]
fn cpa_scenario_builds_the_complete_twenty_vertex_network() {
    let s = bundled("fig2_cpa").unwrap().unwrap();
    assert_eq!(s.mode, Mode::DigitalTwin);
    assert_eq!(s.graph.vertex_count(), 20);
    assert_eq!(s.graph.bonds().len(), 190);
    assert_eq!(s.graph.lead_count(), 20);
    assert_eq!(s.frequency, 3.2e9);
    assert_eq!(s.graph.refractive_index().im, 0.0085);
    assert!(s.graph.bonds().iter().all(|b| (0.2..=0.3).contains(&b.length)));
    assert_eq!(s.params.len(), 190);
    assert_eq!(s.optimizer.max_iterations, 5000);
    assert_eq!(s.optimizer.sense, Sense::Maximize);
    assert!(matches!(&s.objective, ObjectiveSpec::Cpa { injected } if injected.len() == 20));
}

#[test]
fn invisibility_scenario_wavefront_is_converted_to_radians() {
    let s = bundled("fig2_invis").unwrap().unwrap();
    assert_eq!(
        s.objective,
        ObjectiveSpec::Invis {
            interrogation: 0,
            probe: 7,
            control: 2,
            control_penalty: true,
        }
    );
    assert_eq!(s.wavefront.amplitude(0), 0.56);
    assert!((s.wavefront.phase(0) - 69f64.to_radians()).abs() < 1e-15);
    assert_eq!(s.wavefront.amplitude(2), 0.85);
    assert!((s.wavefront.phase(2) - (-27f64).to_radians()).abs() < 1e-12);
    assert_eq!(s.target, Some(0.005));
    assert_eq!(s.optimizer.sense, Sense::Minimize);
}

#[test]
fn instrument_scenario_has_a_shifter_tunable() {
    let s = bundled("fig3_tmt_sim").unwrap().unwrap();
    assert_eq!(s.mode, Mode::InstrumentSim);
    assert_eq!(s.optimizer.method, Method::Mma);
    let shifter = s
        .params
        .entries()
        .iter()
        .find(|p| matches!(p.kind, ParamKind::ShifterTravel(_)))
        .unwrap();
    assert!((shifter.value - 6032.0 / 464.0 / 1000.0).abs() < 1e-15);
    assert_eq!((shifter.lower, shifter.upper), (0.003, 0.023));
    assert!(s.graph.bonds().iter().any(|b| b.insert.is_some()));
}

#[test]
fn units_are_converted_to_si_and_zero_based() {
    let s = parse_scenario(TWO_PORT).unwrap();
    assert_eq!(s.frequency, 2.1e9);
    assert!((s.graph.bond(0).length - 0.27).abs() < 1e-15);
    assert_eq!(s.graph.lead_vertices(), &[0, 1]);
    let bond = &s.params.entries()[0];
    assert_eq!(bond.kind, ParamKind::BondLength(0));
    assert!((bond.lower - 0.24).abs() < 1e-15 && (bond.upper - 0.30).abs() < 1e-15);
    assert_eq!(s.params.entries()[1].kind, ParamKind::Phase(0));
    assert!((s.wavefront.phase(0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    assert_eq!(s.optimizer.method, Method::ProjectedGradient);
    assert_eq!(s.target, None);
}

#[test]
fn empty_tunables_is_reported_with_its_line() {
    let text = TWO_PORT.replace("bonds = [[2, 1]]\nbond_spread_cm = 3.0\nphases = [1]\n", "");
    let err = parse_scenario(&text).unwrap_err().to_string();
    let line = text.lines().position(|l| l == "[tunables]").unwrap() + 1;
    assert!(err.contains(&format!("line {line}")), "{err}");
    assert!(err.contains("no tunable"), "{err}");
}

#[test]
fn invalid_values_are_located() {
    let cases = [
        ("frequency_ghz = 2.1", "frequency_ghz = -1.0", "frequency"),
        ("targeted = [2]", "targeted = [5]", "targeted lead 5"),
        ("bonds = [[2, 1]]", "bonds = [[1, 1]]", "not in the network"),
        ("index = [1.0, 0.0085]", "index = [1.0]", "line"),
    ];
    for (from, to, needle) in cases {
        let err = parse_scenario(&TWO_PORT.replace(from, to)).unwrap_err().to_string();
        assert!(err.contains("line "), "{err}");
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn hash_depends_on_content_and_seed_but_not_formatting() {
    let a = parse_scenario(TWO_PORT).unwrap();
    let b = parse_scenario(&format!("# comment\n{TWO_PORT}\n\n")).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_eq!(a.hash.len(), 64);
    assert_ne!(a.hash, a.with_seed(5).unwrap().hash);
    assert_ne!(a.hash, parse_scenario(&TWO_PORT.replace("2.1", "2.2")).unwrap().hash);
}

#[test]
fn seeds_change_random_draws_deterministically() {
    let s = bundled("fig2_tmt").unwrap().unwrap();
    let a = s.with_seed(3).unwrap();
    let b = s.with_seed(3).unwrap();
    let c = s.with_seed(4).unwrap();
    assert_eq!(a.graph, b.graph);
    assert_eq!(a.wavefront, b.wavefront);
    assert_ne!(a.graph, c.graph);
}

#[test]
fn load_reports_missing_files() {
    let err = load_scenario(std::path::Path::new("/nonexistent/x.toml")).unwrap_err();
    assert!(matches!(err, cablenet::Error::Io(_)));
}
