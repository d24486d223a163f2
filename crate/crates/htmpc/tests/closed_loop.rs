use htmpc::closed_loop::{
    emit, load_config, load_trace, parse_config, prepare, run, run_config, verify_trace,
    ClaimStatus,
};
use htmpc::Error;

const PAIR: &str = include_str!("../../../scenarios/coupled_pair.json");

fn with(base: &str, edit: impl FnOnce(&mut serde_json::Value)) -> String {
    let mut v: serde_json::Value = serde_json::from_str(base).unwrap();
    edit(&mut v);
    v.to_string()
}

#[test]
fn config_round_trip() {
    let cfg = parse_config(PAIR).unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(parse_config(&text).unwrap(), cfg);
    assert_eq!(cfg.budget.gamma1, 1.0);
    assert_eq!(cfg.tolerances.convergence, 1e-6);
}

#[test]
fn config_errors_name_the_field() {
    let err = parse_config(&with(PAIR, |v| v["timing"]["n_lx"] = 3.into())).unwrap_err();
    assert!(
        matches!(err, Error::Config(ref m) if m.contains("timing")),
        "{err}"
    );

    let err = parse_config(&with(PAIR, |v| {
        v["timing"]["zeta"] = serde_json::json!([3, 1])
    }))
    .unwrap_err();
    assert!(
        matches!(err, Error::Config(ref m) if m.contains("N_L = zeta_i * N_i")),
        "{err}"
    );

    let err = parse_config(&with(PAIR, |v| {
        v["coupling"][0]["l"] = serde_json::json!([[0.1, 0.2]])
    }))
    .unwrap_err();
    assert!(
        matches!(err, Error::Config(ref m) if m.contains("coupling")),
        "{err}"
    );

    let err = parse_config(&with(PAIR, |v| v["x0"] = serde_json::json!([0.0]))).unwrap_err();
    assert!(
        matches!(err, Error::Config(ref m) if m.contains("x0")),
        "{err}"
    );

    let err = parse_config(&with(PAIR, |v| v["reference"][1]["k"] = 0.into())).unwrap_err();
    assert!(
        matches!(err, Error::Config(ref m) if m.contains("increase")),
        "{err}"
    );

    let err = parse_config(&with(PAIR, |v| {
        v["subsystems"][0]["a"] = serde_json::json!([[0.5, 0.1]])
    }))
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn reference_switch_resynthesizes() {
    let cfg = parse_config(PAIR).unwrap();
    let (_, prepared, trace) = run_config(&cfg).unwrap();
    assert!(trace.completed());
    assert_eq!(trace.references.len(), 2);
    assert!(trace.events.iter().any(|e| e.contains("re-synthesized")));
    assert_eq!(trace.slow.len(), 50);
    assert_eq!(trace.fast.len(), 50 * 8);
    assert!(trace.slow[24].reference == 0 && trace.slow[25].reference == 1);
    let verdict = verify_trace(&trace, &prepared.tuned.report);
    assert!(verdict.passed(), "{verdict:#?}");
}

#[test]
fn failing_tuning_is_gated_unless_overridden() {
    // N_L = 4 leaves χ above one on this plant.
    let text = with(PAIR, |v| v["timing"]["n_l"] = 4.into());
    let cfg = parse_config(&text).unwrap();
    let problem = cfg.problem::<f64>().unwrap();
    assert!(matches!(prepare(&problem), Err(Error::Tuning(_))));
    let mut forced = problem.clone();
    forced.override_tuning = true;
    let prepared = prepare(&forced).unwrap();
    assert!(!prepared.tuned.report.passed);
    let trace = run(&forced, &prepared, &cfg.schedule(), &cfg.x0, 10).unwrap();
    let verdict = verify_trace(&trace, &prepared.tuned.report);
    assert!(verdict.claims.iter().all(|c| c.status != ClaimStatus::Fail));
}

#[test]
fn emitted_files_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(PAIR).unwrap();
    let (_, prepared, trace) = run_config(&cfg).unwrap();
    let verdict = verify_trace(&trace, &prepared.tuned.report);
    let report = serde_json::json!({ "tuning": prepared.tuned.report, "verdict": verdict });
    emit(dir.path(), &trace, &report, &cfg).unwrap();

    let files = load_trace(dir.path()).unwrap();
    assert_eq!(files.fast.rows.len(), trace.fast.len());
    assert_eq!(files.slow.rows.len(), trace.slow.len());
    let x0 = files.fast.column("x_0").unwrap();
    for (a, f) in x0.iter().zip(&trace.fast) {
        assert_eq!(*a, f.x[0]);
    }
    let w = files.slow.column("w_norm").unwrap();
    assert_eq!(w[3], trace.slow[3].w_norm);
    assert_eq!(
        files.report["verdict"]["claims"].as_array().unwrap().len(),
        5
    );
    assert_eq!(load_config(&dir.path().join("config.json")).unwrap(), cfg);
}

#[test]
fn fast_records_keep_inputs_in_limits() {
    let cfg = parse_config(PAIR).unwrap();
    let (problem, _, trace) = run_config(&cfg).unwrap();
    for f in &trace.fast {
        let ss = &trace.references[trace.slow[f.k].reference];
        for i in 0..2 {
            let dev = f.u[i] - ss.u_s[i];
            assert!((problem.limits[i].margin(&[dev]) - f.input_margin[i]).abs() < 1e-12);
            assert!(f.input_margin[i] >= 0.0);
            assert!(f.du_margin[i] >= -1e-9);
        }
    }
}
