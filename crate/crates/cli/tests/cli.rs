use std::path::PathBuf;
use std::process::{Command, Output};

fn shearlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shearlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("shearlab-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn check_profile_accepts_the_bump_and_rejects_tanh() {
    let ok = shearlab(&[
        "check-profile",
        "--profile",
        "gevrey-bump:0.2,1.0",
        "--n-v",
        "256",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(stdout(&ok).starts_with("key,value"));
    let bad = shearlab(&[
        "check-profile",
        "--profile",
        "tanh-bump:0.2,1.0",
        "--n-v",
        "256",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn unknown_profile_is_an_error() {
    let o = shearlab(&["check-profile", "--profile", "nonsense"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}

#[test]
fn spectrum_reports_one_row_per_k() {
    let o = shearlab(&[
        "spectrum",
        "--profile",
        "gevrey-bump:20,1.0",
        "--k-max",
        "2",
        "--n",
        "256",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,") && rows[1].contains("unstable-mode-found"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unstable-mode-found"));
}

#[test]
fn multiplier_audit_is_clean_on_a_small_grid() {
    let o = shearlab(&[
        "multiplier-audit",
        "--nu",
        "1e-3",
        "--k-ghost",
        "8",
        "--n-t",
        "8",
        "--n-k",
        "11",
        "--n-eta",
        "9",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("inequality,nu,k_ghost"));
    assert!(text.lines().any(|l| l.starts_with("zeta_commutator,")));
}

#[test]
fn linear_crosscheck_prints_a_discrepancy() {
    let o = shearlab(&[
        "linear",
        "--profile",
        "couette",
        "--t-end",
        "1",
        "--n-v",
        "64",
        "--crosscheck",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let d: f64 = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(d < 1e-6, "{d}");
}

#[test]
fn simulate_writes_diagnostics_and_a_checkpoint() {
    let cfg = scratch("run.toml");
    std::fs::write(&cfg, "profile = \"couette\"\nnu = 0.01\nn_z = 8\nn_v = 64\nl_v = 8.0\nt_end = 0.5\nsamples = 5\n").unwrap();
    let csv = scratch("run.csv");
    let chk = scratch("run.bin");
    let o = shearlab(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        csv.to_str().unwrap(),
        "--checkpoint",
        chk.to_str().unwrap(),
        "--strict",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,a_star"));
    assert!(text.lines().count() >= 2);
    assert!(std::fs::metadata(&chk).unwrap().len() > 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("verdict: stable"));
}

#[test]
fn simulate_rejects_unknown_keys() {
    let cfg = scratch("bad.toml");
    std::fs::write(&cfg, "profile = \"couette\"\nviscosity = 1.0\n").unwrap();
    let o = shearlab(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn damping_with_a_short_plan() {
    let plan = scratch("damping.toml");
    std::fs::write(
        &plan,
        "oracle_nu_list = [1e-4, 1e-6]\nsamples = 10\n[simulation]\nprofile = \"couette\"\nnu = 1e-4\nnonlinear = false\n\
         n_z = 4\nn_v = 256\nl_v = 10.0\ndata_k_max = 1\nt_end = 15.0\n",
    )
    .unwrap();
    let o = shearlab(&["damping", "--plan", plan.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("t,u1_neq,u2"));
    assert!(String::from_utf8_lossy(&o.stderr).contains("oracle spread"));
}
