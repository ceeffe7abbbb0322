use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_deltafair"));
    c.env_remove("DELTAFAIR_OUT");
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn buffer_total_line(delta: &str) -> String {
    let o = bin()
        .args(["plan"])
        .arg(scenario("buffer_micro.cfg"))
        .args(["--delta-buffer", delta])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    stdout(&o)
        .lines()
        .find(|l| l.starts_with("buffer reservation total"))
        .unwrap()
        .to_string()
}

#[test]
fn plan_reports_buffer_percentages() {
    assert!(buffer_total_line("0ms").contains("= 12.5% of 2GiB"));
    assert!(buffer_total_line("350ms").contains("= 6.25% of 2GiB"));
    assert!(buffer_total_line("inf").contains("= 0% of 2GiB"));
}

#[test]
fn bare_numbers_are_rejected() {
    let o = bin()
        .arg("plan")
        .arg(scenario("buffer_micro.cfg"))
        .args(["--delta-buffer", "350"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing unit"));
}

#[test]
fn invalid_scenario_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.cfg");
    std::fs::write(&p, "name = \"x\"\n[resources]\nbuffer_capacity = 100\n").unwrap();
    let o = bin().arg("plan").arg(&p).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

fn run_into(dir: &Path, seed: &str) -> (String, String) {
    let o = bin()
        .arg("run")
        .arg(scenario("buffer_micro.cfg"))
        .args(["--seed", seed, "--duration", "4s", "--out"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (
        std::fs::read_to_string(dir.join("buffer_micro.json")).unwrap(),
        std::fs::read_to_string(dir.join("buffer_micro.csv")).unwrap(),
    )
}

#[test]
fn run_is_deterministic_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_into(a.path(), "11");
    assert_eq!(first, run_into(b.path(), "11"));
    assert!(a.path().join("buffer_micro_windows.csv").exists());
    assert!(first
        .1
        .lines()
        .next()
        .unwrap()
        .starts_with("scenario,client,"));
}

#[test]
fn out_dir_falls_back_to_env() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("DELTAFAIR_OUT", dir.path())
        .arg("run")
        .arg(scenario("buffer_micro.cfg"))
        .args(["--duration", "2s"])
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("buffer_micro.json").exists());
}

#[test]
fn sweep_plan_only_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("sweep")
        .arg(scenario("cache_micro.cfg"))
        .args([
            "--param",
            "k",
            "--values",
            "1,2,3",
            "--delta-cache",
            "750ms",
            "--plan-only",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("cache_micro_sweep_k.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(dir.path().join("cache_micro_sweep_k.md").exists());
}

#[test]
fn estimate_k_counts_simultaneous_ramps() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("trace.csv");
    // ten clients, three of which go idle and ramp back together at t = 30 s
    let mut text = String::from("10, 1s\n");
    for t in 0..60u64 {
        for c in 0..10u64 {
            let idle = c < 3 && (10..30).contains(&t);
            let d = if idle { 0 } else { 100 };
            text.push_str(&format!("{}, {c}, {d}\n", t * 1_000_000_000));
        }
    }
    std::fs::write(&p, text).unwrap();
    let o = bin()
        .arg("estimate-k")
        .arg(&p)
        .args(["--window", "5s", "--share", "100B/s"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("k = 3 (30%"), "{}", stdout(&o));
}
