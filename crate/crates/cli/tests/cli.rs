use std::fs;
use std::process::{Command, Output};

fn forkbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_forkbound")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn meta(csv: &str, key: &str) -> f64 {
    let prefix = format!("# {key}: ");
    csv.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("no {key} in\n{csv}")).parse().unwrap()
}

fn rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

const MM1_K4: [&str; 10] =
    ["bound", "forkjoin", "--arrival", "exp:lambda=0.7", "--service", "exp:mu=1", "--k", "4", "--eps", "1e-6"];

#[test]
fn forkjoin_quantile_matches_closed_form() {
    let o = forkbound(&MM1_K4);
    assert_eq!(o.status.code(), Some(0));
    let csv = stdout(&o);
    let expected = ((4.0f64).ln() + (1.0f64 / 0.7).ln() + (1e6f64).ln()) / 0.3;
    assert!((meta(&csv, "quantile") - expected).abs() < 1e-6);
    assert!((meta(&csv, "quantile") - 51.8616).abs() < 1e-4);
    let r = rows(&csv);
    assert_eq!(r.len(), 41);
    assert_eq!(r[0][0], 0.0);
    assert_eq!(r[40][0], (1.5 * expected).ceil());
    assert!(r.windows(2).all(|w| w[1][1] <= w[0][1]));
}

#[test]
fn dependent_redundancy_is_rejected() {
    let o = forkbound(&[
        "bound",
        "kl",
        "--arrival",
        "exp:lambda=0.7",
        "--service",
        "exp:mu=1",
        "--k",
        "2",
        "--l",
        "1",
        "--dependent",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("independence"));
}

#[test]
fn single_stage_network_is_no_tighter_than_forkjoin() {
    let fj = meta(&stdout(&forkbound(&MM1_K4)), "quantile");
    let mut args = MM1_K4.to_vec();
    args[1] = "multistage";
    args.extend(["--h", "1"]);
    let o = forkbound(&args);
    assert_eq!(o.status.code(), Some(0));
    assert!(meta(&stdout(&o), "quantile") >= fj);
}

#[test]
fn exit_codes() {
    let unstable = forkbound(&["bound", "forkjoin", "--arrival", "exp:lambda=1.2", "--service", "exp:mu=1"]);
    assert_eq!(unstable.status.code(), Some(2));
    let bad_law = forkbound(&["bound", "forkjoin", "--arrival", "weibull:k=2", "--service", "exp:mu=1"]);
    assert_eq!(bad_law.status.code(), Some(3));
    let missing = forkbound(&["bound", "forkjoin", "--service", "exp:mu=1"]);
    assert_eq!(missing.status.code(), Some(3));
    let mismatch = forkbound(&[
        "bound",
        "forkjoin",
        "--arrival",
        "exp:lambda=0.5",
        "--service",
        "exp:mu=1",
        "--service",
        "exp:mu=2",
        "--k",
        "3",
    ]);
    assert_eq!(mismatch.status.code(), Some(3));
    assert_eq!(forkbound(&["bogus"]).status.code(), Some(3));
    assert_eq!(forkbound(&["--help"]).status.code(), Some(0));
    assert_eq!(forkbound(&["--version"]).status.code(), Some(0));
    assert_eq!(forkbound(&["figure", "fig9"]).status.code(), Some(3));
}

#[test]
fn simulate_is_deterministic_and_honours_out() {
    let args = [
        "simulate",
        "forkjoin",
        "--arrival",
        "exp:lambda=0.7",
        "--service",
        "exp:mu=1",
        "--k",
        "2",
        "--n",
        "50000",
        "--seed",
        "7",
        "--eps",
        "1e-3",
        "--tau",
        "5,10,20",
    ];
    let a = forkbound(&args);
    let b = forkbound(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sim.csv");
    let mut with_out = args.to_vec();
    with_out.extend(["--out", path.to_str().unwrap()]);
    assert_eq!(forkbound(&with_out).status.code(), Some(0));
    assert_eq!(fs::read(&path).unwrap(), a.stdout);
    let csv = stdout(&a);
    assert!(csv.contains("tau,empirical_p,ci_halfwidth,bound_p"));
    for r in rows(&csv) {
        assert!(r[1] <= r[3] + r[2], "{r:?}");
    }
}

#[test]
fn simulate_every_topology() {
    let cases: [&[&str]; 5] = [
        &["forkjoin", "--k", "3"],
        &["splitmerge", "--k", "2", "--arrival", "exp:lambda=0.1"],
        &["kl", "--k", "3", "--l", "2"],
        &["thinning", "--k", "4", "--mode", "random", "--p", "0.4,0.3,0.2,0.1", "--arrival", "exp:lambda=2"],
        &["multistage", "--k", "2", "--h", "2"],
    ];
    for case in cases {
        let mut args = vec!["simulate", case[0], "--service", "exp:mu=1", "--n", "20000", "--eps", "1e-2"];
        args.extend_from_slice(&case[1..]);
        if !case.contains(&"--arrival") {
            args.extend(["--arrival", "exp:lambda=0.7"]);
        }
        let o = forkbound(&args);
        assert_eq!(o.status.code(), Some(0), "{case:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(rows(&stdout(&o)).len(), 41);
    }
}

#[test]
fn figures_write_one_csv_per_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = forkbound(&["figure", "all", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for name in ["fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7"] {
        let csv = fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        assert!(csv.starts_with(&format!("# forkbound {} {name}", env!("CARGO_PKG_VERSION"))));
    }
    let fig4 = rows(&fs::read_to_string(dir.path().join("fig4.csv")).unwrap());
    assert_eq!(fig4.len(), 26);
    assert!(fig4.iter().all(|r| r[3] <= r[6]));
    let again = forkbound(&["figure", "fig4"]);
    assert_eq!(stdout(&again), fs::read_to_string(dir.path().join("fig4.csv")).unwrap());
}

#[test]
fn validate_passes_and_catches_injected_fault() {
    let ok = forkbound(&["validate", "--n", "200000", "--replications", "5000"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).lines().skip(2).all(|l| l.contains(",PASS,")));
    let bad = forkbound(&["validate", "--n", "200000", "--replications", "5000", "--bound-scale", "0.5"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("mm1_tail,FAIL"));
}

#[test]
fn thread_cap_env() {
    let one =
        Command::new(env!("CARGO_BIN_EXE_forkbound")).env("FORKBOUND_THREADS", "1").args(MM1_K4).output().unwrap();
    assert_eq!(one.status.code(), Some(0));
    let bad =
        Command::new(env!("CARGO_BIN_EXE_forkbound")).env("FORKBOUND_THREADS", "many").args(MM1_K4).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));
}
