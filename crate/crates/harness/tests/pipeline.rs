use std::process::ExitCode;

use lowbound::check::{check_instance, CheckOptions};
use lowbound::cli::{build_instance, run_args};
use lowbound::config::{Cell, ExperimentConfig, MethodName};
use lowbound::experiment::{run_experiment, RunOptions};
use lowbound::instance_file::{checksum, from_text, load_instance, serialize_instance, to_text, InstanceError};
use lowbound::report::{emit_plot_data, read_rows, write_report};
use lowbound_core::oracle::OracleAnswer;
use lowbound_core::space::sample_in_ball;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn opts() -> RunOptions {
    RunOptions { seed: 5, tol: None, polish_iterations: 50, probes: 500, membership_pairs: 0 }
}

fn cell(p: f64, n: usize, t: usize, kappa: f64) -> Cell {
    Cell { n, horizon: t, p, kappa, lipschitz: 1.0, radius: 1.0 }
}

fn same_answer(a: &OracleAnswer<f64>, b: &OracleAnswer<f64>) -> bool {
    a.value.to_bits() == b.value.to_bits()
        && a.gradient.len() == b.gradient.len()
        && a.gradient.iter().zip(&b.gradient).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn resign(body: &str) -> String {
    format!("{body}checksum sha256 {}\n", checksum(body))
}

fn body_of(text: &str) -> &str {
    &text[..text.rfind("checksum sha256").unwrap()]
}

#[test]
fn saved_instance_evaluates_bitwise_identically() {
    let dir = tempfile::tempdir().unwrap();
    for (c, m) in [
        (cell(f64::INFINITY, 32, 6, 2.0), MethodName::Cg),
        (cell(2.0, 24, 5, 1.5), MethodName::Accelerated),
        (cell(4.0, 16, 4, 1.7), MethodName::Subgradient),
    ] {
        let inst = build_instance(&c, m, &opts()).unwrap();
        let path = dir.path().join(format!("{}.txt", m.as_str()));
        serialize_instance(&inst, &path).unwrap();
        let back = load_instance(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = sample_in_ball(&mut rng, c.p, c.n, c.radius);
            let a = inst.base().eval(&x).unwrap();
            let b = back.base().eval(&x).unwrap();
            assert!(same_answer(&a, &b), "p = {}", c.p);
        }
        assert_eq!(to_text(&back), to_text(&inst));
    }
}

#[test]
fn lifted_instance_round_trips() {
    let c = cell(1.5, 100, 5, 2.0);
    let inst = build_instance(&c, MethodName::Cg, &opts()).unwrap();
    let text = to_text(&inst);
    assert!(text.contains("\nkind lifted\n"));
    let back = from_text(&text).unwrap();
    assert_eq!(to_text(&back), text);
    let report = check_instance(&back, &CheckOptions { pairs: 100, ..Default::default() }).unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn truncated_file_is_malformed() {
    let inst = build_instance(&cell(f64::INFINITY, 16, 4, 2.0), MethodName::Cg, &opts()).unwrap();
    let text = to_text(&inst);
    let cut = &text[..text.len() / 2];
    assert!(matches!(from_text(cut), Err(InstanceError::Malformed { .. })));
    let body = body_of(&text);
    let short = &body[..body.rfind("query").unwrap()];
    assert!(matches!(from_text(&resign(short)), Err(InstanceError::Malformed { .. })));
}

#[test]
fn horizon_above_dimension_is_rejected() {
    let inst = build_instance(&cell(f64::INFINITY, 16, 4, 2.0), MethodName::Cg, &opts()).unwrap();
    let text = to_text(&inst);
    let body = body_of(&text).replacen("\nT 4\n", "\nT 17\n", 1);
    assert!(matches!(from_text(&resign(&body)), Err(InstanceError::Validation(_))));
}

#[test]
fn tampered_values_are_rejected_even_with_valid_checksum() {
    let inst = build_instance(&cell(2.0, 16, 4, 2.0), MethodName::Cg, &opts()).unwrap();
    let text = to_text(&inst);
    let bound_line = body_of(&text).lines().find(|l| l.starts_with("bound ")).unwrap().to_string();
    let body = body_of(&text).replacen(&bound_line, "bound 0x1p-1", 1);
    assert!(matches!(from_text(&resign(&body)), Err(InstanceError::Validation(_))));
}

#[test]
fn cli_gen_then_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let code = run_args(&["--out", out, "gen", "--p", "inf", "--n", "16", "--T", "4", "--name", "a.txt"]).unwrap();
    assert_eq!(code, ExitCode::SUCCESS);
    let path = dir.path().join("a.txt");
    assert_eq!(run_args(&["check", path.to_str().unwrap(), "--pairs", "50"]).unwrap(), ExitCode::SUCCESS);
    let text = std::fs::read_to_string(&path).unwrap();
    std::fs::write(&path, text.replacen("kind direct", "kind lifted", 1)).unwrap();
    assert!(run_args(&["check", path.to_str().unwrap()]).is_err());
}

#[test]
fn run_example_grid() {
    let cfg = ExperimentConfig::from_toml_str(
        "methods = [\"cg\", \"subgradient\"]\n[grid]\nn = [64]\nT = [4, 8, 16]\np = [inf]\nkappa = [2.0]\nL = [1.0]\n",
    )
    .unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 6);
    for r in &report.rows {
        assert!(r.is_ok(), "{}", r.status);
        let m = r.m_phi.unwrap();
        let floor = 1.0 / (8.0 * m * r.horizon as f64);
        assert!(r.certified_gap_lower.unwrap() >= floor * (1.0 - 1e-12));
        assert_eq!(r.replay, Some(true));
    }
    let order: Vec<(usize, &str)> = report.rows.iter().map(|r| (r.horizon, r.method.as_str())).collect();
    assert_eq!(order, [(4, "cg"), (4, "subgradient"), (8, "cg"), (8, "subgradient"), (16, "cg"), (16, "subgradient")]);
}

#[test]
fn empty_grid_gives_empty_report() {
    let report = run_experiment(&ExperimentConfig::default()).unwrap();
    assert!(report.rows.is_empty());
    let dir = tempfile::tempdir().unwrap();
    let (rows, _) = write_report(dir.path(), &report).unwrap();
    assert!(read_rows(&rows).unwrap().is_empty());
}

#[test]
fn one_cell_report_gives_one_data_row() {
    let cfg = ExperimentConfig::from_toml_str("[grid]\nn = [16]\nT = [4]\np = [2.0]\n").unwrap();
    let report = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&report.rows, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let data = std::fs::read_to_string(&files[0]).unwrap();
    assert_eq!(data.lines().filter(|l| !l.starts_with('#')).count(), 1);
}

#[test]
fn small_p_routes_through_lift() {
    let cfg = ExperimentConfig::from_toml_str(
        "methods = [\"cg\", \"accelerated\"]\nprobes = 500\n[grid]\nn = [100]\nT = [5]\np = [1.0]\n",
    )
    .unwrap();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 2);
    let cg = report.rows.iter().find(|r| r.method == "cg").unwrap();
    assert!(cg.is_ok(), "{}", cg.status);
    assert!(cg.distortion.unwrap() >= 1.0);
    assert!(cg.certified_gap_lower.unwrap() >= cg.theoretical_lower_bound.unwrap() - 1e-9);
    assert!(cg.reference_bound.unwrap() > 0.0);
    let acc = report.rows.iter().find(|r| r.method == "accelerated").unwrap();
    assert!(acc.status.starts_with("error"));
}

#[test]
fn reports_are_deterministic() {
    let text = "seed = 2\nmethods = [\"cg\", \"accelerated\", \"subgradient\"]\n[grid]\nn = [32]\nT = [4, 8]\np = [2.0, 4.0]\nkappa = [1.5]\n";
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_report(a.path(), &run_experiment(&cfg).unwrap()).unwrap();
    write_report(b.path(), &run_experiment(&cfg).unwrap()).unwrap();
    let ra = std::fs::read(a.path().join("report.csv")).unwrap();
    let rb = std::fs::read(b.path().join("report.csv")).unwrap();
    assert_eq!(ra, rb);
}
