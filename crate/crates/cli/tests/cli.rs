use std::fs;
use std::path::Path;

use fcwdb_cli::{load_genesis, main_with, GENESIS_FILE};
use fcwdb_tpcc::schema::{DISTRICT, ITEM};

fn run(args: &[&str]) -> (u8, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut all = vec!["fcwdb"];
    all.extend_from_slice(args);
    let code = main_with(all, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn fixture(name: &str) -> String {
    format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["verify", "--log", "x", "--bogus"]).0, 2);
    let (code, _, err) = run(&["run", "--db", "nowhere", "--engine", "mvcc"]);
    assert_eq!(code, 2);
    assert!(err.contains("mvcc"));
    assert_eq!(run(&["run", "--db", "nowhere", "--clerks", "0"]).0, 2);
    assert_eq!(run(&["run", "--db", "nowhere", "--timescale", "0"]).0, 2);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("verify"));
}

#[test]
fn verify_fixtures() {
    let (code, out, _) = run(&["verify", "--log", &fixture("write_skew.jsonl")]);
    assert_eq!(code, 3);
    assert_eq!(out.trim(), "CYCLE(T1,T2)");

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let (code, out, _) = run(&["verify", "--log", p(&empty)]);
    assert_eq!(code, 0);
    assert!(out.starts_with("SERIALIZABLE witness=0"));

    let text = fs::read_to_string(fixture("write_skew.jsonl")).unwrap();
    let first = text.lines().next().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, format!("{first}\n{{\"serial\": 3,\n")).unwrap();
    let (code, _, err) = run(&["verify", "--log", p(&bad)]);
    assert_eq!(code, 1);
    assert!(err.contains(":2:"), "{err}");

    let (code, _, _) = run(&["verify", "--log", p(&dir.path().join("missing.jsonl"))]);
    assert_eq!(code, 1);
}

#[test]
fn report_groups_and_rejects_bad_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("runs.csv");
    fs::write(
        &csv,
        "engine,clerks,duration,timescale,seed,commits,exceptions,order,new_order,order_line,delivery\n\
         occ,30,600,0.0166,1,500,700,30240,9040,286900,200\n",
    )
    .unwrap();
    let (code, out, _) = run(&["report", "--csv", p(&csv)]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("30 clerks"));
    assert!(out.contains("30,480,240"));

    let plot = dir.path().join("plot.csv");
    assert_eq!(run(&["report", "--csv", p(&csv), "--plot", p(&plot)]).0, 0);
    assert_eq!(fs::read_to_string(&plot).unwrap().lines().nth(1), Some("30,480,240"));

    fs::write(&csv, "engine,clerks\nocc,30\n").unwrap();
    assert_eq!(run(&["report", "--csv", p(&csv)]).0, 1);
}

#[test]
fn init_run_verify() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db");
    let (code, out, _) = run(&["init", "--db", p(&db)]);
    assert_eq!(code, 0);
    for expected in ["ORDER", "30000", "NEW_ORDER", "9000", "CUSTOMER"] {
        assert!(out.contains(expected), "{out}");
    }
    assert!(db.join(GENESIS_FILE).exists());
    assert_eq!(run(&["init", "--db", p(&db)]).0, 1);

    let log = dir.path().join("run.jsonl");
    let csv = dir.path().join("runs.csv");
    for engine in ["occ", "2pl"] {
        let args = [
            "run", "--db", p(&db), "--engine", engine, "--clerks", "12", "--duration", "60", "--timescale", "0.005",
            "--seed", "4", "--log", p(&log), "--out", p(&csv),
        ];
        let (code, out, err) = run(&args);
        assert_eq!(code, 0, "{err}");
        assert!(out.contains("Commits"));
        let (code, out, _) = run(&["verify", "--log", p(&log)]);
        assert_eq!(code, 0, "{out}");
        assert!(out.starts_with("SERIALIZABLE"));
    }
    let rows = fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().count(), 3);

    let cfg = dir.path().join("two.json");
    fs::write(&cfg, r#"{"warehouses": 2, "seed": 5}"#).unwrap();
    assert_eq!(run(&["init", "--db", p(&db), "--config", p(&cfg), "--force"]).0, 0);
    let root = load_genesis(&db).unwrap();
    assert_eq!(root.tables.len(ITEM), 100_000);
    assert_eq!(root.tables.len(DISTRICT), 20);
}
