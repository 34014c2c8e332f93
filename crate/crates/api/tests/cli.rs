mod common;

use std::path::Path;

use common::*;
use twai_api::cli::{run, EXIT_OK, EXIT_OPERATIONAL, EXIT_USAGE};

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn twai(workspace: &Path, args: &[&str]) -> Outcome {
    let config = fixtures_dir().join("twai.toml");
    let mut full = vec![
        "twai".to_owned(),
        "--workspace".to_owned(),
        workspace.display().to_string(),
        "--config".to_owned(),
        config.display().to_string(),
    ];
    full.extend(args.iter().map(|s| s.to_string()));
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(full, |_| None, &mut out, &mut err);
    Outcome {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn json_of(o: &Outcome) -> serde_json::Value {
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    serde_json::from_str(&o.out).unwrap()
}

#[test]
fn ingest_prints_chunk_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = fixtures_dir().join("corpus");
    let o = twai(
        dir.path(),
        &[
            "ingest",
            corpus.join("findings.json").to_str().unwrap(),
            corpus.join("tv_navigation_notes.txt").to_str().unwrap(),
        ],
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    assert!(o.out.contains("ingested ut-2023-home: 1 chunks"), "{}", o.out);
    assert!(o.out.contains("ingested tv_navigation_notes: 1 chunks"), "{}", o.out);

    let again = twai(dir.path(), &["ingest", corpus.join("findings.json").to_str().unwrap()]);
    assert_eq!(again.code, EXIT_OPERATIONAL);
    assert!(again.err.starts_with("error[DuplicateDocument]"), "{}", again.err);
}

#[test]
fn generate_verify_decide_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path();
    let corpus = fixtures_dir().join("corpus/findings.json");
    assert_eq!(twai(ws, &["ingest", corpus.to_str().unwrap()]).code, EXIT_OK);

    let generated = json_of(&twai(ws, &["--json", "generate", NETFLIX_CRITICAL]));
    let sid = generated["session_id"].as_str().unwrap().to_owned();
    let chatgpt = generated["turn"]["responses"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["provider_id"] == "chatgpt-mock")
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_owned();

    let decide_early = twai(ws, &["decide", &sid]);
    assert_eq!(decide_early.code, EXIT_OPERATIONAL);
    assert!(
        decide_early.err.starts_with("error[NoVerifications]"),
        "{}",
        decide_early.err
    );

    let source = twai(ws, &["verify", &sid, "source", &chatgpt]);
    assert_eq!(source.code, EXIT_OK, "{}", source.err);
    assert!(
        source.out.contains("coverage 1.000 (2/2 claims), passed"),
        "{}",
        source.out
    );
    let dc = twai(ws, &["verify", &sid, "double-check", &chatgpt]);
    assert!(dc.out.contains("passed"), "{}", dc.out);
    let cmp = twai(ws, &["compare", &sid, "--turn", "0"]);
    assert!(cmp.out.contains("1 shared"), "{}", cmp.out);

    let table = twai(ws, &["decide", &sid]);
    assert_eq!(table.code, EXIT_OK, "{}", table.err);
    let first_row = table.out.lines().find(|l| l.trim_start().starts_with('1')).unwrap();
    assert!(first_row.contains("chatgpt-mock"), "{}", table.out);

    let chosen = twai(
        ws,
        &["decide", &sid, "--choose", &chatgpt, "--rationale", "cited twice"],
    );
    assert_eq!(chosen.code, EXIT_OK, "{}", chosen.err);
    let shown = json_of(&twai(ws, &["--json", "session", "show", &sid]));
    assert_eq!(shown["mode"], "decision");
    assert_eq!(shown["decisions"][0]["rationale"], "cited twice");

    let out = dir.path().join("session.tar.gz");
    let export = twai(ws, &["export", &sid, out.to_str().unwrap()]);
    assert_eq!(export.code, EXIT_OK, "{}", export.err);
    let other = tempfile::tempdir().unwrap();
    let import = twai(other.path(), &["import", out.to_str().unwrap()]);
    assert!(
        import.out.contains(&format!("imported session {sid}")),
        "{}",
        import.out
    );
    let reimport = twai(other.path(), &["import", out.to_str().unwrap()]);
    assert!(reimport.err.starts_with("error[SessionExists]"), "{}", reimport.err);
}

#[test]
fn scorecard_commands() {
    let dir = tempfile::tempdir().unwrap();
    let csv = fixtures_dir().join("scorecard.csv");
    let rec = twai(dir.path(), &["scorecard", "record", csv.to_str().unwrap()]);
    assert_eq!(rec.out.trim(), "recorded 40 entries");

    let agg = twai(dir.path(), &["scorecard", "aggregate", "tw_ai"]);
    assert!(agg.out.lines().any(|l| l == "overall 3.65"), "{}", agg.out);
    let agg = twai(dir.path(), &["scorecard", "aggregate", "existing"]);
    assert!(agg.out.lines().any(|l| l == "overall -0.1"), "{}", agg.out);
    let delta = twai(dir.path(), &["scorecard", "compare", "existing", "tw_ai"]);
    assert!(delta.out.lines().any(|l| l == "overall delta 3.75"), "{}", delta.out);

    let exported = dir.path().join("out.csv");
    twai(dir.path(), &["scorecard", "export", exported.to_str().unwrap()]);
    let back = twai_core::scorecard::read_csv(std::fs::File::open(&exported).unwrap()).unwrap();
    assert_eq!(back.len(), 40);

    let missing = twai(dir.path(), &["scorecard", "aggregate", "nobody"]);
    assert_eq!(missing.code, EXIT_OPERATIONAL);
    assert!(missing.err.starts_with("error[NoEntries]"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["verify", "s", "guess", "r"],
        &["compare", "s"],
        &["compare", "s", "--turn", "0", "--prompt", "p"],
        &["serve", "--port", "eighty"],
    ] {
        let o = twai(dir.path(), args);
        assert_eq!(o.code, EXIT_USAGE, "{args:?}: {}", o.err);
        assert!(!o.err.is_empty());
    }
    let help = twai(dir.path(), &["--help"]);
    assert_eq!(help.code, EXIT_OK);
    assert!(help.out.contains("generate"));
}

#[test]
fn mode_commands_follow_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let sid = twai(dir.path(), &["session", "new", "gates"]).out.trim().to_owned();
    let o = twai(dir.path(), &["session", "mode", &sid, "verification"]);
    assert!(o.err.starts_with("error[NoResponses]"), "{}", o.err);
    let o = twai(dir.path(), &["session", "mode", &sid, "decision"]);
    assert!(o.err.starts_with("error[NoVerifications]"), "{}", o.err);
    let o = twai(
        dir.path(),
        &["generate", "--session", &sid, "--provider", "bard-mock", NETFLIX_PICK],
    );
    assert_eq!(o.code, EXIT_OK, "{}", o.err);
    let o = twai(dir.path(), &["session", "mode", &sid, "verification"]);
    assert_eq!(o.out.trim(), "mode: verification");
    let list = twai(dir.path(), &["session", "list"]);
    assert!(list.out.contains(&sid) && list.out.contains("verification"));
}

#[test]
fn bad_config_is_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(
        ["twai", "session", "list"],
        |k| match k {
            "TWAI_WORKSPACE" => Some(dir.path().display().to_string()),
            "TWAI_PORT" => Some("not-a-port".into()),
            _ => None,
        },
        &mut out,
        &mut err,
    );
    assert_eq!(code, EXIT_OPERATIONAL);
    assert!(String::from_utf8(err).unwrap().starts_with("error[InvalidConfig]"));
}

#[test]
fn cli_definition_is_consistent() {
    use clap::CommandFactory;
    twai_api::cli::Cli::command().debug_assert();
}
