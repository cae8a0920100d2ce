use std::path::Path;
use std::process::{Command, Output};

use csrg_cli::output::Header;
use csrg_cli::setfile;
use csrg_cli::trace::TraceFile;

fn csrg(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csrg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn csrg_env(args: &[&str], out: &Path, threads: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csrg"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("CSRG_NUM_THREADS", threads)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn build_set_lateral() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(&["build-set", "--model", "gtm-lateral"], dir.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let (h, res) = setfile::from_toml(&read(&dir.path().join("set.toml"))).unwrap();
    assert_eq!(
        (h.tool.as_str(), h.model.as_str(), h.seed),
        ("csrg", "gtm-lateral", 0)
    );
    assert_eq!(h.config_hash.len(), 64);
    assert!(res.t_star > 0 && res.t_star < 1000 && !res.set.is_empty());
    let report = read(&dir.path().join("build-report.txt"));
    assert!(report.contains(&format!("t*: {}", res.t_star)));
    assert!(report.contains("mode: ra"));
    assert!(report.contains("Gamma(6, 12, 0.98) = -0.942"), "{report}");
    assert!(report.contains("[effective configuration]") && report.contains("row_tol"));
}

#[test]
fn empty_reference_box_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &["build-set", "--model", "gtm-lateral", "--vbox", "0.5,-0.5"],
        dir.path(),
    );
    assert_eq!(code(&o), 1, "{}", text(&o));
    assert!(text(&o).contains("empty"), "{}", text(&o));
    assert!(!dir.path().join("set.toml").exists());
}

#[test]
fn reference_box_outside_the_constraints_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &["build-set", "--model", "gtm-lateral", "--vbox", "1.2,1.3"],
        dir.path(),
    );
    assert_eq!(code(&o), 1, "{}", text(&o));
}

#[test]
fn horizon_cap_is_not_finitely_determined() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &["build-set", "--model", "gtm-lateral", "--tmax", "1"],
        dir.path(),
    );
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("not finitely determined"), "{}", text(&o));
    assert!(std::fs::read_dir(dir.path()).map_or(true, |mut d| d.next().is_none()));
}

#[test]
fn simulate_longitudinal_alg1() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &[
            "simulate",
            "--model",
            "gtm-longitudinal",
            "--governor",
            "alg1",
            "--seed",
            "7",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("hard failures: 0"), "{}", text(&o));
    let csv = read(&dir.path().join("trace.csv"));
    let t = TraceFile::from_csv(&csv).unwrap();
    assert_eq!(t.rows.len(), 1000);
    assert_eq!(t.header.seed, 7);
    assert!(t
        .rows
        .iter()
        .all(|r| r.branch == "optimized" || r.branch == "fallback"));
    assert!(t.rows.iter().any(|r| r.branch == "optimized"));
    assert!(t
        .rows
        .iter()
        .all(|r| r.cost.is_finite() && r.viol.len() == 12));
    // The ramp is shaped: the command jumps at step 20, the governed reference does not.
    assert_eq!(t.rows[20].r, vec![0.1]);
    assert!(t.rows[20].v[0] < 0.1);
    // Re-serializing the parsed trace reproduces the file.
    assert_eq!(t.to_csv().unwrap(), csv);
}

#[test]
fn simulate_without_governor_tracks_the_command() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &[
            "simulate",
            "--model",
            "gtm-longitudinal",
            "--governor",
            "off",
            "--steps",
            "60",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let t = TraceFile::from_csv(&read(&dir.path().join("trace.csv"))).unwrap();
    assert!(t
        .rows
        .iter()
        .all(|r| r.branch == "off" && r.v == r.r && r.cost.is_nan()));
    assert!(t.rows.iter().any(|r| r.viol.iter().any(|&b| b)));
}

#[test]
fn saved_set_reproduces_the_inline_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&csrg(&["build-set", "--model", "integrator"], &a)), 0);
    let set = a.join("set.toml");
    let o = csrg(
        &[
            "simulate",
            "--model",
            "integrator",
            "--set",
            set.to_str().unwrap(),
        ],
        &b,
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let o = csrg(&["simulate", "--model", "integrator"], &a);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let from_file = TraceFile::from_csv(&read(&b.join("trace.csv"))).unwrap();
    let inline = TraceFile::from_csv(&read(&a.join("trace.csv"))).unwrap();
    assert_eq!(from_file.rows, inline.rows);
    assert_ne!(from_file.header.config_hash, inline.header.config_hash);
}

#[test]
fn compare_joint_sign_pattern() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &[
            "compare-joint",
            "--beta",
            "0.98",
            "--ny",
            "1..8",
            "--ng",
            "1..20",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let csv = read(&dir.path().join("gamma.csv"));
    let (h, _) = Header::parse_comments(&csv).unwrap();
    assert_eq!(h.kind, "gamma/1");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 160);
    let mut first_positive = Vec::new();
    for n_y in 1..=8usize {
        let signs: Vec<bool> = rows
            .iter()
            .filter(|r| r[0] == n_y.to_string())
            .map(|r| r[2].parse::<f64>().unwrap() > 0.0)
            .collect();
        assert_eq!(signs.len(), 20);
        // Within a row of the grid the positive entries form a suffix in n_g.
        let k = signs.iter().position(|&s| s).unwrap_or(20);
        assert!(signs[k..].iter().all(|&s| s), "n_y = {n_y}");
        first_positive.push(k);
    }
    // The positive region shrinks as n_y grows and is absent for large n_y.
    assert!(first_positive.windows(2).all(|w| w[0] <= w[1]));
    assert!(first_positive[0] < 20 && first_positive[7] == 20);
    let at = |ny: usize, ng: usize| {
        rows.iter()
            .find(|r| r[0] == ny.to_string() && r[1] == ng.to_string())
            .map(|r| r[3].clone())
            .unwrap()
    };
    assert_eq!(at(6, 12), "ra");
    assert_eq!(at(1, 12), "ce");
}

#[test]
fn project_lateral_is_convex() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &[
            "project",
            "--model",
            "gtm-lateral",
            "--coords",
            "beta,phi",
            "--dirs",
            "720",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let csv = read(&dir.path().join("projection.csv"));
    let (h, extras) = Header::parse_comments(&csv).unwrap();
    assert_eq!(h.kind, "projection-2d/1");
    assert!(extras.contains(&("directions".into(), "720".into())));
    assert!(csv.lines().any(|l| l == "beta,phi"));
    let pts: Vec<[f64; 2]> = data_rows(&csv)
        .iter()
        .map(|r| [r[0].parse().unwrap(), r[1].parse().unwrap()])
        .collect();
    assert!(pts.len() >= 3);
    let n = pts.len();
    for k in 0..n {
        let (a, b, c) = (pts[k], pts[(k + 1) % n], pts[(k + 2) % n]);
        let cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]);
        assert!(cross > -1e-12, "turn {k} is clockwise: {cross}");
    }
    // The equilibrium lies inside the polygon.
    for k in 0..n {
        let (a, b) = (pts[k], pts[(k + 1) % n]);
        assert!((b[0] - a[0]) * (0.0 - a[1]) - (b[1] - a[1]) * (0.0 - a[0]) > 0.0);
    }
}

#[test]
fn project_three_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(
        &[
            "project",
            "--model",
            "integrator",
            "--coords",
            "x,xu0,v",
            "--dirs",
            "50",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let csv = read(&dir.path().join("projection.csv"));
    assert!(csv.contains("# kind: projection-3d/1"));
    assert!(data_rows(&csv).iter().all(|r| r.len() == 3));
}

#[test]
fn exported_model_rebuilds_the_same_set() {
    let dir = tempfile::tempdir().unwrap();
    let o = csrg(&["export-model", "--model", "gtm-lateral"], dir.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let model = dir.path().join("gtm-lateral.toml");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&csrg(&["build-set", "--model", "gtm-lateral"], &a)), 0);
    let o = csrg(&["build-set", "--model", model.to_str().unwrap()], &b);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let (_, ra) = setfile::from_toml(&read(&a.join("set.toml"))).unwrap();
    let (_, rb) = setfile::from_toml(&read(&b.join("set.toml"))).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn montecarlo_is_independent_of_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "montecarlo",
        "--model",
        "integrator",
        "--runs",
        "40",
        "--steps",
        "120",
        "--seed",
        "3",
    ];
    let one = dir.path().join("one");
    let four = dir.path().join("four");
    let o = csrg_env(&args, &one, "1");
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert_eq!(code(&csrg_env(&args, &four, "4")), 0);
    assert_eq!(
        read(&one.join("frequency.csv")),
        read(&four.join("frequency.csv"))
    );
    let summary: toml::Table = toml::from_str(&read(&one.join("montecarlo.toml"))).unwrap();
    let other: toml::Table = toml::from_str(&read(&four.join("montecarlo.toml"))).unwrap();
    assert_eq!(summary["summary"], other["summary"]);
    assert_eq!(summary["header"], other["header"]);
    assert_eq!(summary["summary"]["n_runs"].as_integer(), Some(40));
    assert_eq!(summary["header"]["seed"].as_integer(), Some(3));
    let freq = read(&one.join("frequency.csv"));
    assert_eq!(data_rows(&freq).len(), 120);
    assert_eq!(code(&csrg_env(&args, &four, "zero")), 3);
}

#[test]
fn config_file_errors_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "model = \"integrator\"\nstepz = 10\n").unwrap();
    let o = csrg(
        &["build-set", "--config", cfg.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(code(&o), 3);
    assert!(
        text(&o).contains("line 2") && text(&o).contains("stepz"),
        "{}",
        text(&o)
    );
    std::fs::write(&cfg, "model = \"integrator\"\nsteps = 15\nseed = 4\n").unwrap();
    let o = csrg(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let t = TraceFile::from_csv(&read(&dir.path().join("trace.csv"))).unwrap();
    assert_eq!((t.rows.len(), t.header.seed), (15, 4));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&csrg(
            &["build-set", "--model", "no-such-model"],
            dir.path()
        )),
        3
    );
    assert_eq!(
        code(&csrg(
            &["build-set", "--model", "integrator", "--mode", "joint"],
            dir.path()
        )),
        3
    );
    assert_eq!(code(&csrg(&["frobnicate"], dir.path())), 3);
    let o = Command::new(env!("CARGO_BIN_EXE_csrg"))
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

#[test]
fn shipped_profile_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let prof = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../profiles/gtm-lateral.csv");
    let o = csrg(
        &[
            "simulate",
            "--model",
            "gtm-lateral",
            "--steps",
            "30",
            "--profile",
            prof.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let t = TraceFile::from_csv(&read(&dir.path().join("trace.csv"))).unwrap();
    assert_eq!(t.rows[25].r, vec![0.8]);
}
