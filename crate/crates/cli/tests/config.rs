use fvqsd_cli::config::{parse_config, ConfigError, ExperimentKind, Origin, RawConfig, StartPoint};
use fvqsd_cli::config::resolve;

fn err_line(text: &str) -> (Origin, String) {
    match parse_config(text) {
        Err(ConfigError::At { origin, message }) => (origin, message),
        other => panic!("expected a located error, got {other:?}"),
    }
}

#[test]
fn populates_a_qsd_config() {
    let cfg = parse_config("experiment=qsd_accuracy\nepsilon=0.5\n# comment\nn_particles = 200  # inline\n").unwrap();
    assert_eq!(cfg.experiment, ExperimentKind::QsdAccuracy);
    assert_eq!(cfg.epsilon, 0.5);
    assert_eq!(cfg.n_particles, vec![200]);
    assert_eq!(cfg.potential.as_str(), "double_well_1d");
    assert_eq!(cfg.x_start, StartPoint::GlobalMin);
    assert_eq!(cfg.threshold("tv"), 0.05);
    assert_eq!(cfg.output_dir.to_str(), Some("out/qsd_accuracy"));
    assert_eq!(cfg.resolved["n_particles"], "200");
}

#[test]
fn every_experiment_resolves_from_defaults() {
    for kind in ExperimentKind::ALL {
        let cfg = parse_config(&format!("experiment={}", kind.as_str())).unwrap();
        assert_eq!(cfg.experiment, kind);
        // The resolved text parses back to the same configuration.
        assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }
}

#[test]
fn duplicate_key_names_both_lines() {
    let (origin, msg) = err_line("experiment=qsd_accuracy\nepsilon=0.5\n\nepsilon=0.4\n");
    assert_eq!(origin, Origin::Line(4));
    assert!(msg.contains("line 2"), "{msg}");
}

#[test]
fn negative_epsilon_is_rejected() {
    let (origin, msg) = err_line("experiment=qsd_accuracy\nepsilon=-1\n");
    assert_eq!(origin, Origin::Line(2));
    assert!(msg.contains("epsilon"), "{msg}");
}

#[test]
fn invariant_violations_are_located() {
    assert_eq!(err_line("experiment=chaos_vs_N\nreplicas=0\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=qsd_accuracy\ndt=abc\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=qsd_accuracy\nburn_in=300\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=chaos_vs_N\ntimes=5,1\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=uniform_survival\nepsilons=0.5,0.25\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=contraction_vs_N\nalpha=0.3\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=qsd_accuracy\nhorizon=arrhenius\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=qsd_accuracy\nn_particles=1\n").0, Origin::Line(2));
}

#[test]
fn unknown_keys_and_names_are_errors() {
    let (origin, msg) = err_line("experiment=qsd_accuracy\nepsilom=0.5\n");
    assert_eq!(origin, Origin::Line(2));
    assert!(msg.contains("epsilom"));
    // A key of another experiment is still unknown here.
    assert_eq!(err_line("experiment=qsd_accuracy\npaths=10\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=qsd_accuracy\npotential=quartic\n").0, Origin::Line(2));
    assert_eq!(err_line("experiment=nonsense\n").0, Origin::Line(1));
    assert!(matches!(parse_config("epsilon=0.5\n"), Err(ConfigError::General(_))));
    assert!(matches!(parse_config("experiment qsd_accuracy\n"), Err(ConfigError::At { .. })));
}

#[test]
fn potential_parameters_follow_the_potential() {
    let cfg = parse_config("experiment=exit_scaling\npotential.tilt=0.5\n").unwrap();
    assert_eq!(cfg.potential_params["tilt"], 0.5);
    assert_eq!(err_line("experiment=qsd_accuracy\npotential.tilt=0.5\n").0, Origin::Line(2));
    let cfg = parse_config("experiment=qsd_accuracy\npotential=quadratic_1d\npotential.half_width=2\n").unwrap();
    assert_eq!(cfg.potential_params["half_width"], 2.0);
}

#[test]
fn overrides_win_over_the_file() {
    let mut raw = RawConfig::parse("experiment=qsd_accuracy\nepsilon=0.5\n").unwrap();
    raw.apply_overrides(&["--epsilon".into(), "0.4".into(), "--n_particles=50".into()]).unwrap();
    let cfg = resolve(&raw).unwrap();
    assert_eq!(cfg.epsilon, 0.4);
    assert_eq!(cfg.n_particles, vec![50]);

    let mut raw = RawConfig::parse("experiment=qsd_accuracy\n").unwrap();
    raw.apply_overrides(&["--epsilon=-2".into()]).unwrap();
    assert!(matches!(resolve(&raw), Err(ConfigError::At { origin: Origin::CommandLine, .. })));
    assert!(RawConfig::default().apply_overrides(&["--dt".into()]).is_err());
    assert!(RawConfig::default().apply_overrides(&["dt".into(), "1".into()]).is_err());
}
