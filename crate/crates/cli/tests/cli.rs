use std::path::Path;
use std::process::{Command, Output};

fn smnist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smnist"))
        .args(args)
        .env_remove("SMNIST_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_then_validate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("4h");
    let o = smnist(&[
        "gen", "--series", "m2", "--variant", "hard", "--m", "4", "--dist", "pow102x", "--test-pixels", "28",
        "--seed", "1", "--out", p(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("72/28"), "{text}");
    assert!(text.contains("3276"), "{text}");
    assert!(out.join("manifest.json").exists());

    let o = smnist(&["validate", p(&out)]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS"));
}

#[test]
fn single_digit_bound_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let o = smnist(&["gen", "--series", "m2", "--variant", "disjunct", "--m", "12", "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("single digits"));
}

#[test]
fn validate_fails_on_missing_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = smnist(&["validate", p(&dir.path().join("absent"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn train_save_and_eval_agree() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("a2");
    let model = dir.path().join("model.bin");
    let weights = dir.path().join("weights");
    let o = smnist(&[
        "gen", "--preset", "a2-hard-102x", "--m", "3", "--train", "3000", "--test", "1000", "--test-pixels", "43",
        "--out", p(&data), "--gzip",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = smnist(&[
        "train", "--data", p(&data), "--steps", "200", "--save", p(&model), "--weights-dir", p(&weights), "--csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trained = stdout(&o);
    let accuracy = trained.lines().find(|l| l.starts_with("accuracy,")).unwrap().to_string();
    assert!(weights.join("weights-3.pgm").exists());

    let o = smnist(&["eval", "--data", p(&data), "--model", p(&model), "--csv"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().any(|l| l == accuracy), "{accuracy} vs {}", stdout(&o));
}

#[test]
fn simulate_then_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let o = smnist(&[
        "simulate", "--players", "50", "--capacity", "inf", "--reaction-ms", "300", "--seed", "3", "--data-dir",
        p(dir.path()), "--csv",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let simulated = stdout(&o);
    assert!(simulated.starts_with("level_label,measured,theoretical,n\n4,"));
    assert_eq!(simulated.lines().count(), 9);

    let o = smnist(&["aggregate", "--data-dir", p(dir.path()), "--csv"]);
    assert_eq!(stdout(&o), simulated);

    let empty = tempfile::tempdir().unwrap();
    let o = smnist(&["simulate", "--players", "0", "--data-dir", p(empty.path()), "--csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "level_label,measured,theoretical,n\n");
}
