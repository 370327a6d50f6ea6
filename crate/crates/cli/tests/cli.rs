use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use retire_cli::artifacts::{Manifest, MANIFEST, RESOLVED_CONFIG};
use retire_cli::config::sha256_hex;
use retire_cli::RunConfig;

/// A fast configuration: coarse grids and small cohorts.
fn small_config(extra: &str) -> String {
    let mut s = String::from(
        "model.gamma = 2.32\nmodel.nu = 0.288\nmodel.beta = 0.986\nmodel.theta = 0.02899\n\
         model.lambda = 0.001\nspa.p_step = 0.06\nseed = 7\n\
         grid.assets_n = 12\ngrid.income_n = 3\ngrid.aime_n = 2\nscenario.households = 120\n\
         output.policy_ages = 52, 60\n",
    );
    for t in 1..=4 {
        s.push_str(&format!("type.{t}.unemp_prob = 0.08, 0.05, 0.02\n"));
    }
    let mut lines: Vec<String> = s.lines().map(String::from).collect();
    for line in extra.lines() {
        let key = line.split('=').next().unwrap().trim().trim_start_matches('!');
        lines.retain(|l| l.split('=').next().unwrap().trim() != key);
        if !line.trim_start().starts_with("!") {
            lines.push(line.to_string());
        }
    }
    lines.join("\n") + "\n"
}

fn retire(dir: &Path, config: &str, args: &[&str]) -> Output {
    let conf = dir.join("run.conf");
    fs::write(&conf, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_retire"))
        .args(args)
        .arg("--config")
        .arg(&conf)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn manifest(dir: &Path) -> Manifest {
    Manifest::load(&dir.join("out").join(MANIFEST)).unwrap()
}

#[test]
fn missing_required_key_exits_2_naming_the_key() {
    let d = tempfile::tempdir().unwrap();
    let o = retire(d.path(), &small_config("!model.lambda"), &["solve-re"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.lambda"), "{}", stderr(&o));
}

#[test]
fn unknown_key_exits_2() {
    let d = tempfile::tempdir().unwrap();
    let o = retire(d.path(), &small_config("model.lamda = 0.1"), &["solve-re"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.lamda"));
}

#[test]
fn zero_attention_cost_is_rejected_for_the_inattentive_solve() {
    let d = tempfile::tempdir().unwrap();
    let o = retire(d.path(), &small_config("model.lambda = 0.0"), &["solve-ri"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.lambda"));
    assert!(!d.path().join("out/solution_ri.bin").exists());
}

#[test]
fn re_only_run_writes_the_single_model_table() {
    let d = tempfile::tempdir().unwrap();
    let o = retire(d.path(), &small_config("scenario.kinds = re"), &["all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = d.path().join("out");
    let table = fs::read_to_string(out.join("treatment_re.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    assert!(table.starts_with("population,model,n_obs,n_clusters,treatment,se,z,p\n"));
    assert!(!out.join("treatment_comparison.csv").exists());
    assert!(!out.join("panel_ri.csv").exists());
    let sol = fs::read_to_string(out.join("solution_re.csv")).unwrap();
    assert!(sol.starts_with("age,type,asset,assets,income,aime,unemployed,spa,value,next_asset,work\n"));
}

#[test]
fn full_run_is_complete_and_reproducible_across_worker_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config("");
    let oa = retire(a.path(), &cfg, &["all", "--workers", "1"]);
    let ob = retire(b.path(), &cfg, &["all", "--workers", "3"]);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(ob.status.success(), "{}", stderr(&ob));
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma.artifacts, mb.artifacts);
    assert_eq!(ma.config_hash, mb.config_hash);
    assert_eq!(ma.seed, 7);

    let declared = [
        RESOLVED_CONFIG,
        "solution_re.bin",
        "solution_re.csv",
        "solution_ri.bin",
        "solution_ri.csv",
        "panel_re.csv",
        "panel_ri.csv",
        "profiles_re.csv",
        "profiles_ri.csv",
        "beliefs_re.csv",
        "beliefs_ri.csv",
        "treatment_re.csv",
        "treatment_ri.csv",
        "treatment_comparison.csv",
        "summary_re.csv",
        "summary_ri.csv",
        "belief_histogram.csv",
        "diff_map_age57.csv",
    ];
    let names: Vec<&str> = ma.artifacts.keys().map(String::as_str).collect();
    let mut want = declared.to_vec();
    want.sort();
    assert_eq!(names, want);
    for (name, sum) in &ma.artifacts {
        let bytes = fs::read(a.path().join("out").join(name)).unwrap();
        assert_eq!(&sha256_hex(&bytes), sum, "{name}");
    }
    for step in ["solve-re", "solve-ri", "simulate", "analyze"] {
        assert!(ma.timings.contains_key(step), "{step}");
    }

    let cmp = fs::read_to_string(a.path().join("out/treatment_comparison.csv")).unwrap();
    let rows: Vec<&str> = cmp.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("whole,re,") && rows[1].starts_with("whole,ri,"));
    let panel = fs::read_to_string(a.path().join("out/panel_re.csv")).unwrap();
    assert!(panel.starts_with("# panel v1\n# config "));
}

#[test]
fn stages_refuse_missing_and_stale_inputs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config("scenario.kinds = re");
    let o = retire(d.path(), &cfg, &["analyze"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("panel_re.csv"), "{}", stderr(&o));
    let o = retire(d.path(), &cfg, &["simulate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("solution_re.bin"));

    assert!(retire(d.path(), &cfg, &["solve-re"]).status.success());
    let changed = small_config("scenario.kinds = re\nmodel.lambda = 0.002");
    let o = retire(d.path(), &changed, &["simulate"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("stale solution"), "{}", stderr(&o));

    assert!(retire(d.path(), &cfg, &["simulate"]).status.success());
    let o = retire(d.path(), &cfg, &["analyze", "--seed", "8"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("stale panel"));
    let o = retire(d.path(), &small_config("scenario.kinds = re\nregression.age_dummies = false"), &["analyze"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn seed_changes_panels_but_not_solutions() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config("scenario.kinds = re");
    assert!(retire(d.path(), &cfg, &["all"]).status.success());
    let first = manifest(d.path());
    assert!(retire(d.path(), &cfg, &["simulate", "--seed", "99"]).status.success());
    let second = manifest(d.path());
    assert_eq!(second.seed, 99);
    assert_eq!(first.artifacts["solution_re.bin"], second.artifacts["solution_re.bin"]);
    assert_ne!(first.artifacts["panel_re.csv"], second.artifacts["panel_re.csv"]);
    assert!(retire(d.path(), &cfg, &["simulate"]).status.success());
    assert_eq!(first.artifacts["panel_re.csv"], manifest(d.path()).artifacts["panel_re.csv"]);
}

#[test]
fn resolved_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    let cfg = small_config("scenario.cohorts = a:60, b:drawn\nregression.controls = type");
    assert!(retire(d.path(), &cfg, &["solve-re"]).status.success());
    let dumped = fs::read_to_string(d.path().join("out").join(RESOLVED_CONFIG)).unwrap();
    let reloaded = RunConfig::parse(&dumped).unwrap();
    assert_eq!(reloaded.dump_portable(), dumped);
    assert_eq!(reloaded, RunConfig::parse(&cfg).unwrap());
    assert_eq!(sha256_hex(dumped.as_bytes()), manifest(d.path()).config_hash);
}

#[test]
fn shipped_default_config_loads() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/default.conf")).unwrap();
    assert_eq!(RunConfig::parse(&text).unwrap(), RunConfig::default());
}

#[test]
fn oracle_check_reports_residuals() {
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_retire"))
            .arg("oracle-check")
            .args(args)
            .output()
            .unwrap()
    };
    let ok = run(&[]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    let text = stdout(&ok);
    assert!(text.lines().filter(|l| l.starts_with("re ")).count() >= 5);
    assert!(text.lines().filter(|l| l.starts_with("ri ")).count() >= 5);
    assert!(text.contains("ladder monotone: PASS"));

    let bad = run(&["--tolerance-scale", "0"]);
    assert_eq!(bad.status.code(), Some(3));
    let text = stdout(&bad);
    assert!(text.contains("FAIL") && text.contains("residual"), "{text}");
}
