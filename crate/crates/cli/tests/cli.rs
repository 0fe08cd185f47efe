use std::process::{Command, Output};

fn lincons(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lincons")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn certification_exit_codes() {
    let ok = lincons(&["verify-tableau", "--pair", "prk-gauss2", "--order", "4", "--tol", "1e-12"]);
    assert_eq!(ok.status.code(), Some(0));
    let text = stdout(&ok);
    assert!(text.starts_with("# {"));
    assert!(text.lines().any(|l| l.starts_with("tree")));
    let fail = lincons(&["verify-tableau", "--pair", "prk-gauss2", "--order", "5"]);
    assert_eq!(fail.status.code(), Some(3));
    assert_eq!(lincons(&["verify-tableau", "--pair", "prk-dirk3"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lincons(&["converge", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(lincons(&["converge", "--problem", "pendulum"]).status.code(), Some(1));
    assert_eq!(lincons(&["converge", "--mode", "sideways"]).status.code(), Some(1));
    assert_eq!(lincons(&["converge", "--h-list", "T/8,T/16,T/4"]).status.code(), Some(1));
    assert_eq!(lincons(&["orbit", "--problem", "euler"]).status.code(), Some(1));
    assert_eq!(lincons(&[]).status.code(), Some(1));
}

#[test]
fn converge_table_layout() {
    let o = lincons(&["converge", "--k", "1,2", "--h-list", "T/16,T/32,T/64", "--predictor", "euler"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# {"));
    assert_eq!(lines[1], "# h k=1 k=2 base");
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("# slope"));
    for row in &lines[2..5] {
        assert_eq!(row.split_whitespace().count(), 4);
    }
}

#[test]
fn diverged_cells_print_inf() {
    let o = lincons(&[
        "converge", "--problem", "kdv:d=16", "--mode", "explicit", "--k", "6", "--h-list", "T/8",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let row = text.lines().nth(2).unwrap();
    assert_eq!(row.split_whitespace().nth(1), Some("inf"));
}

#[test]
fn output_file_is_deterministic() {
    let dir = std::env::temp_dir().join(format!("lincons-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let run = |name: &str| {
        let path = dir.join(name);
        let p = path.to_str().unwrap();
        let o = lincons(&[
            "drift", "--k", "1", "--h-list", "T/64", "--periods", "2", "--subsample", "16", "--predictor",
            "perturbed", "--seed", "7", "--out", p,
        ]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
        std::fs::read(path).unwrap()
    };
    let a = run("drift.dat");
    assert_eq!(a, run("drift.dat"));
    assert!(a.starts_with(b"# {"));
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn orbit_covers_last_period() {
    let o = lincons(&["orbit", "--problem", "kepler:e=0.6", "--h-list", "T/64", "--k", "3", "--periods", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 64);
    let t0: f64 = rows[0].split_whitespace().next().unwrap().parse().unwrap();
    assert!((t0 - 3.0 * std::f64::consts::TAU).abs() < 1e-5);
}
