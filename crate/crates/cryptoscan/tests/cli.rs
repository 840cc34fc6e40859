//! Black-box tests of the command-line interface and its exit codes.

use std::io::Write as _;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cryptoscan"))
}

fn write_fixture(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(text.as_bytes()).unwrap();
    path
}

const INSECURE: &str = r#"
extern class javax.crypto.spec.SecretKeySpec
extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void
func @main() -> void {
  bb0:
    %key = const.str "embedded"
    %alg = const.str "AES"
    %ks = new javax.crypto.spec.SecretKeySpec
    callv %ks .<init>(%key, %alg)
    ret
}
"#;

const SECURE: &str = r#"
extern class javax.crypto.Cipher
extern func @javax.crypto.Cipher.getInstance(String) -> javax.crypto.Cipher static
func @main() -> void {
  bb0:
    %t = const.str "AES/GCM/NoPadding"
    %c = call @javax.crypto.Cipher.getInstance(%t)
    ret
}
"#;

#[test]
fn findings_exit_one_with_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_fixture(&dir, "app.cir", INSECURE);
    let out = bin().args(["analyze", file.to_str().unwrap(), "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["findings"][0]["ruleId"], "R6");
    assert_eq!(v["findings"][0]["sources"][0]["literal"], "embedded");
}

#[test]
fn clean_program_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_fixture(&dir, "app.cir", SECURE);
    let out = bin().args(["analyze", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_file_exits_two() {
    let out = bin().args(["analyze", "does-not-exist.cir"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn parse_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_fixture(&dir, "broken.cir", "func @main( {");
    let out = bin().args(["analyze", file.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn no_refinements_reports_superset_of_sources() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
extern class javax.crypto.spec.SecretKeySpec
extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void
extern func @String.getBytes(String) -> bytes
func @main() -> void {
  bb0:
    %key = const.str "secret"
    %enc = const.str "UTF-8"
    %kb = callv %key .getBytes(%enc)
    %alg = const.str "AES"
    %ks = new javax.crypto.spec.SecretKeySpec
    callv %ks .<init>(%kb, %alg)
    ret
}
"#;
    let file = write_fixture(&dir, "app.cir", text);
    let literals = |extra: &[&str]| {
        let mut args = vec!["analyze", file.to_str().unwrap(), "--format", "json"];
        args.extend_from_slice(extra);
        let out = bin().args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(1));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        let mut lits: Vec<String> = v["findings"]
            .as_array()
            .unwrap()
            .iter()
            .flat_map(|f| f["sources"].as_array().unwrap())
            .map(|s| s["literal"].as_str().unwrap().to_string())
            .collect();
        lits.sort();
        lits
    };
    let refined = literals(&[]);
    let ablated = literals(&["--no-refinements"]);
    assert_eq!(refined, vec!["secret"]);
    for lit in &refined {
        assert!(ablated.contains(lit), "refined source {lit} lost in ablation");
    }
    assert!(ablated.contains(&"UTF-8".to_string()));
}

#[test]
fn multiple_files_merge_into_one_program() {
    let dir = tempfile::tempdir().unwrap();
    let lib = r#"
func @getKey() -> String {
  bb0:
    %k = const.str "from-lib"
    ret %k
}
"#;
    let app = r#"
extern class javax.crypto.spec.SecretKeySpec
extern func @javax.crypto.spec.SecretKeySpec.<init>(bytes, String) -> void
func @main() -> void {
  bb0:
    %key = call @getKey()
    %alg = const.str "AES"
    %ks = new javax.crypto.spec.SecretKeySpec
    callv %ks .<init>(%key, %alg)
    ret
}
"#;
    let f1 = write_fixture(&dir, "lib.cir", lib);
    let f2 = write_fixture(&dir, "app.cir", app);
    let out = bin()
        .args(["analyze", f2.to_str().unwrap(), f1.to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["findings"][0]["sources"][0]["literal"], "from-lib");
}

#[test]
fn rules_file_overrides_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_fixture(&dir, "app.cir", INSECURE);
    // A catalog whose only sink is an API the program never calls.
    let rules = write_fixture(
        &dir,
        "rules.txt",
        "sink R99 cwe=321 api=com.example.Vault.store arg=0 check=constant type=String\n",
    );
    let out = bin()
        .args(["analyze", file.to_str().unwrap(), "--rules", rules.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn dump_callgraph_emits_dot() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_fixture(&dir, "app.cir", INSECURE);
    let out = bin().args(["analyze", file.to_str().unwrap(), "--dump-callgraph"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("digraph"), "{text}");
    assert!(text.contains("main"));
}

#[test]
fn bench_json_has_table_rows() {
    let out = bin().args(["bench", "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 6);
    assert_eq!(v["total"]["falseNegatives"], 0);
}

#[test]
fn bench_category_filter_and_bad_category() {
    let out = bin().args(["bench", "--category", "basic", "--format", "json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);

    let out = bin().args(["bench", "--category", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
