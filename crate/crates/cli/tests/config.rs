use proptest::prelude::*;
use slowdrift_cli::artifacts::{write_run, Check, Manifest, PipelineOutput};
use slowdrift_cli::config::{builtin, parse_config, parse_eps_list, PipelineKind, BUILTIN};
use slowdrift_cli::{CliError, RunArtifacts};

fn is_config_error<T: std::fmt::Debug>(r: Result<T, CliError>) -> bool {
    matches!(r, Err(CliError::Config(_)))
}

#[test]
fn every_pipeline_has_a_shipped_scenario() {
    for kind in PipelineKind::ALL {
        let loaded = builtin(kind.name()).unwrap();
        assert_eq!(loaded.config.pipeline, Some(kind));
        assert_eq!(kind.name().parse::<PipelineKind>().unwrap(), kind);
    }
    assert_eq!(BUILTIN.len(), PipelineKind::ALL.len() + 2);
}

#[test]
fn json_and_toml_describe_the_same_config() {
    let toml =
        "schema_version = 1\nscenario = \"s\"\neps = [0.01]\n[drift]\ncode = \"a\"\nz0 = [0.5, 0.0]\nsteps = 3\n";
    let json = r#"{"schema_version": 1, "scenario": "s", "eps": [0.01],
                   "drift": {"code": "a", "z0": [0.5, 0.0], "steps": 3}}"#;
    let a = parse_config(toml, "a.toml").unwrap();
    let b = parse_config(json, "b.json").unwrap();
    assert_eq!(a.config, b.config);
    assert_ne!(a.hash, b.hash);
}

#[test]
fn validation_rejects_bad_sections() {
    let base = "schema_version = 1\nscenario = \"s\"\n";
    for bad in [
        "eps = [0.0]",
        "eps = [0.01, -0.02]",
        "pipeline = \"nonsense\"",
        "extra = 1",
        "[drift]\ncode = \"c\"\nz0 = [0.0, 0.0]\nsteps = 1",
        "[drift]\ncode = \"a\"\nz0 = [0.0]\nsteps = 1",
        "[planner]\npair = [0, 5]\nz0 = [0.0, 0.0]\nz1 = [0.1, 0.0]",
        "[tolerances]\nhalving_ratio = [3.0, 1.5]",
        "[domain]\nkind = \"box\"\nlo = [1.0, 0.0]\nhi = [0.0, 1.0]",
    ] {
        let text = format!("{base}{bad}\n");
        assert!(is_config_error(parse_config(&text, "t")), "accepted {bad:?}");
    }
    assert!(is_config_error(parse_config("{\"schema_version\": 1}", "t")));
}

fn check_strategy() -> impl Strategy<Value = Check> {
    (
        "[a-z ]{1,12}",
        proptest::option::of(1e-4f64..1.0),
        -1e6f64..1e6,
        proptest::option::of(-1e3f64..1e3),
        proptest::option::of(0.0f64..10.0),
        "[a-z<=0-9 ]{0,10}",
        any::<bool>(),
    )
        .prop_map(|(name, eps, measured, constant, ratio, bound, pass)| Check {
            name,
            eps,
            measured,
            constant,
            ratio,
            bound,
            pass,
        })
}

proptest! {
    #[test]
    fn eps_lists_round_trip(values in proptest::collection::vec(1e-8f64..1e3, 1..6)) {
        let text = values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",");
        prop_assert_eq!(parse_eps_list(&text).unwrap(), values);
    }

    #[test]
    fn nonpositive_eps_is_rejected(
        mut values in proptest::collection::vec(1e-8f64..1e3, 0..5),
        bad in -1e3f64..=0.0,
        at in 0usize..5,
    ) {
        values.insert(at.min(values.len()), bad);
        let text = values.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",");
        prop_assert!(is_config_error(parse_eps_list(&text)));
    }

    #[test]
    fn checks_survive_a_write_and_reload(checks in proptest::collection::vec(check_strategy(), 0..8)) {
        let tmp = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            toolkit_version: "t".into(),
            task: "t".into(),
            scenario: "t".into(),
            config_source: "t".into(),
            config_hash: String::new(),
            seed: 0,
            eps: Vec::new(),
            started_unix: 0,
            finished_unix: 0,
            files: Vec::new(),
        };
        let out = PipelineOutput { files: Vec::new(), checks: checks.clone() };
        let written = write_run(tmp.path(), &out, manifest).unwrap();
        let loaded = RunArtifacts::load(tmp.path()).unwrap();
        prop_assert_eq!(&loaded.checks, &checks);
        prop_assert_eq!(&loaded.manifest, &written.manifest);
        prop_assert_eq!(loaded.all_pass(), checks.iter().all(|c| c.pass));
    }
}
