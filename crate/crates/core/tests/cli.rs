use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn boolfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boolfact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = boolfact(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let line = String::from_utf8(out.stdout).unwrap();
    assert_eq!(line.lines().count(), 1, "expected a one-line summary, got {line:?}");
    line
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_then_solve_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst");
    ok(&["generate", "--m", "30", "--n", "30", "--k", "8", "--rho", "0.1", "--seed", "2", "--out", s(&inst)]);
    for f in ["v.txt", "true_v.txt", "w.txt", "h.txt", "meta.txt"] {
        assert!(inst.join(f).is_file(), "{f}");
    }
    let out = dir.path().join("solve");
    let line = ok(&[
        "solve", "--matrix", s(&inst), "--mode", "rl-u", "--k", "8", "--seed", "1", "--trace-every", "50", "--out",
        s(&out),
    ]);
    assert!(line.contains("rl-u"));
    let result = fs::read_to_string(out.join("result.csv")).unwrap();
    assert!(result.starts_with("mode,k,seed,mcs0,mcs1,total_mcs"));
    assert_eq!(result.lines().count(), 2);
    assert!(fs::read_to_string(out.join("trace.csv"))
        .unwrap()
        .starts_with("mcs,energy,mismatches,beta,max_lambda"));
    assert!(out.join("reconstruction.txt").is_file());
}

#[test]
fn sweep_from_config_has_one_summary_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(
        &cfg,
        "m=10\nn=10\nk=2,3\nrho=0.3\nmode=bc,rl-u\nbeta0=2,1\nbetaf=0.1\ninstances=2\nseeds=2\nmax-mcs=3000\nseed=5\n",
    )
    .unwrap();
    let out = dir.path().join("sweep");
    ok(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    let raw = fs::read_to_string(out.join("raw_results.csv")).unwrap();
    assert_eq!(raw.lines().count(), 1 + 2 * 2 * 2 * 2 * 2);

    // flags override config keys
    let out2 = dir.path().join("sweep2");
    ok(&["sweep", "--config", s(&cfg), "--k", "2", "--mode", "bc", "--out", s(&out2)]);
    assert_eq!(fs::read_to_string(out2.join("summary.csv")).unwrap().lines().count(), 2);
}

#[test]
fn landscape_and_eval_missing() {
    let dir = tempfile::tempdir().unwrap();
    let land = dir.path().join("land");
    let line = ok(&["landscape", "--distances", "0..10:5", "--samples", "4", "--seed", "1", "--out", s(&land)]);
    assert!(line.contains("Spearman"));
    let csv = fs::read_to_string(land.join("landscape.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 4);

    let inst = dir.path().join("inst");
    ok(&["generate", "--m", "12", "--n", "12", "--k", "3", "--rho", "0.4", "--miss", "0.1", "--seed", "3", "--out", s(&inst)]);
    let eval = dir.path().join("eval");
    ok(&[
        "eval-missing", "--instance", s(&inst), "--k", "3", "--max-mcs", "2000", "--all-modes", "--out", s(&eval),
    ]);
    let report = fs::read_to_string(eval.join("report.csv")).unwrap();
    assert!(report.starts_with("method,error_estimated,error_zero,error_one,error_random,miss_count,seed,instance_id"));
    assert_eq!(report.lines().count(), 4);
}

#[test]
fn ingest_and_hamming() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let movies = dir.path().join("movies.csv");
    let mut text = String::from("userId,movieId,rating,timestamp\n");
    for u in 1..=4 {
        for m in 1..=3 {
            text.push_str(&format!("{u},{m},{},0\n", if (u + m) % 2 == 0 { 4.0 } else { 2.5 }));
        }
    }
    text.push_str("500,1,5.0,0\n");
    fs::write(&ratings, text).unwrap();
    fs::write(&movies, "movieId,title,genres\n1,A (1995),Comedy|Drama\n2,B (1996),Action\n3,C (1997),Drama\n").unwrap();

    let out = dir.path().join("ml");
    let line = ok(&[
        "ingest", "--ratings", s(&ratings), "--movies", s(&movies), "--threshold", "3.0", "--min-ones", "1", "--out",
        s(&out),
    ]);
    assert!(line.starts_with("4x3 matrix"), "{line}");
    assert_eq!(fs::read_to_string(out.join("user_ids.txt")).unwrap(), "1\n2\n3\n4\n");
    assert!(fs::read_to_string(out.join("support.csv")).unwrap().contains("Comedy|Drama"));

    let ham = dir.path().join("ham");
    ok(&[
        "hamming", "--matrix", s(&out.join("matrix.txt")), "--anchor", "0", "--radius", "0", "--movie-ids",
        s(&out.join("movie_ids.txt")), "--movies", s(&movies), "--out", s(&ham),
    ]);
    let d = fs::read_to_string(ham.join("distances.csv")).unwrap();
    assert_eq!(d.lines().next().unwrap(), "0,3,0,3");
    let support = fs::read_to_string(ham.join("support.csv")).unwrap();
    assert!(support.starts_with("movieId,genres,all_ones_flag,column_density\n"));
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = boolfact(&["solve", "--matrix", s(&missing), "--out", s(dir.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.txt"));

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "2 2\n0 1\n1 x\n").unwrap();
    let out = boolfact(&["solve", "--matrix", s(&bad), "--out", s(dir.path())]);
    assert!(!out.status.success());

    assert!(!boolfact(&["solve", "--mode", "nope"]).status.success());
    assert!(!boolfact(&["generate", "--rho", "1.5", "--out", s(dir.path())]).status.success());
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "k=2\nbogus=1\n").unwrap();
    assert!(!boolfact(&["sweep", "--config", s(&cfg), "--out", s(dir.path())]).status.success());
}
