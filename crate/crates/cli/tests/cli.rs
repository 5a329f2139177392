use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn e2v(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_e2v")).args(args).output().unwrap()
}

fn seq20() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/seq20")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    text.split_whitespace()
        .chain(text.lines())
        .find_map(|tok| tok.strip_prefix(&format!("{key}=")))
        .and_then(|v| v.split_whitespace().next())
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let o = e2v(&[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_input_is_a_usage_error() {
    assert_eq!(e2v(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(e2v(&["--no-such-flag", "evaluate", "a", "b"]).status.code(), Some(1));
    assert_eq!(e2v(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_files_are_input_errors() {
    let o = e2v(&["evaluate", "/nonexistent/a", "/nonexistent/b"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    assert!(!o.stderr.is_empty());
}

#[test]
fn self_evaluation_is_perfect() {
    let dir = seq20();
    let o = e2v(&["evaluate", p(&dir), p(&dir)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(value(&out, "mse"), 0.0);
    assert_eq!(value(&out, "ssim"), 1.0);
}

#[test]
fn roundtrip_on_bundled_sequence() {
    let o = e2v(&["roundtrip", p(&seq20())]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("residual_bound: PASS"), "{out}");
    assert!(value(&out, "mean_mse") < 1e-3, "{out}");
}

#[test]
fn roundtrip_bound_holds_with_resets_and_other_params() {
    for args in [
        [
            "--theta-pos",
            "0.3",
            "--theta-neg",
            "0.15",
            "--k",
            "0.1",
            "--reset-interval",
            "0",
        ],
        [
            "--theta-pos",
            "0.25",
            "--theta-neg",
            "0.25",
            "--k",
            "0.05",
            "--reset-interval",
            "4",
        ],
    ] {
        let mut all: Vec<&str> = args.to_vec();
        let dir = seq20();
        all.extend(["roundtrip", p(&dir)]);
        let out = stdout(&e2v(&all));
        assert!(out.contains("residual_bound: PASS"), "{out}");
    }
}

#[test]
fn simulate_reconstruct_evaluate_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.txt");
    let bounds = tmp.path().join("bounds.txt");
    let out = tmp.path().join("recon");
    let seq = seq20();

    let o = e2v(&["simulate", p(&seq), p(&events), "--boundaries-out", p(&bounds)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(value(&stdout(&o), "events") > 0.0);
    let o = e2v(&["reconstruct", p(&events), p(&seq), p(&bounds), p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(value(&stdout(&o), "frames"), 19.0);
    assert!(out.join("frame_000018.pgm").exists());

    let csv = tmp.path().join("scores.csv");
    // The reconstruction starts at the second frame, so compare against a
    // reference directory without the first one.
    let truth = tmp.path().join("truth");
    fs::create_dir(&truth).unwrap();
    let stamps: Vec<String> = fs::read_to_string(seq.join("timestamps.txt"))
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_owned)
        .collect();
    for i in 1..20 {
        fs::copy(
            seq.join(format!("frame_{i:06}.pgm")),
            truth.join(format!("frame_{:06}.pgm", i - 1)),
        )
        .unwrap();
    }
    fs::write(truth.join("timestamps.txt"), stamps.join("\n")).unwrap();
    let o = e2v(&["evaluate", p(&out), p(&truth), "--csv", p(&csv)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(value(&stdout(&o), "mse") < 1e-3);
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("index,mse,ssim\n"));
    assert_eq!(text.lines().count(), 21);
}

#[test]
fn simulate_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let seq = seq20();
    let run = |seed: &str, name: &str| {
        let path = tmp.path().join(name);
        let o = e2v(&["--seed", seed, "simulate", p(&seq), p(&path), "--sigma", "0.03"]);
        assert_eq!(o.status.code(), Some(0));
        (stdout(&o), fs::read(&path).unwrap())
    };
    let a = run("5", "a.txt");
    let b = run("5", "b.txt");
    let c = run("6", "c.txt");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn estimate_prints_a_fit_line_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.txt");
    let report = tmp.path().join("fit.txt");
    let seq = seq20();
    let params = ["--theta-pos", "0.2", "--theta-neg", "0.3", "--k", "0.1"];
    let mut sim = params.to_vec();
    sim.extend(["simulate", p(&seq), p(&events)]);
    assert_eq!(e2v(&sim).status.code(), Some(0));

    let o = e2v(&[
        "--max-rows",
        "20000",
        "estimate",
        p(&events),
        p(&seq),
        "--anchor",
        "event-time",
        "--report",
        p(&report),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    for key in ["theta_pos=", "theta_neg=", "k=", "residual_rms=", "rows=", "flag="] {
        assert!(line.contains(key), "{line}");
    }
    // 8-bit frames blur the targets, so only a loose check here.
    assert!((value(&line, "theta_pos") - 0.2).abs() < 0.04, "{line}");
    assert!((value(&line, "theta_neg") - 0.3).abs() < 0.06, "{line}");
    assert!(fs::read_to_string(&report).unwrap().contains("anchor=EventTime"));
    assert_eq!(
        e2v(&["estimate", p(&events), p(&seq), "--anchor", "sideways"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn voxelize_writes_header_and_sidecar() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.txt");
    fs::write(&events, "0.000050 1 2 1\n0.000075 3 0 0\n").unwrap();
    let out = tmp.path().join("grid.voxg");
    let o = e2v(&[
        "--width",
        "4",
        "--height",
        "3",
        "voxelize",
        p(&events),
        p(&out),
        "--t0",
        "0",
        "--t1",
        "200",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let bytes = fs::read(&out).unwrap();
    assert_eq!(&bytes[..4], b"VOXG");
    assert_eq!(bytes.len(), 16 + 4 * 5 * 4 * 3);
    assert_eq!(fs::read_to_string(tmp.path().join("grid.voxg.txt")).unwrap(), "0 200\n");
    assert_eq!(value(&stdout(&o), "signed_mass"), 0.0);
    assert_eq!(
        e2v(&["voxelize", p(&events), p(&out), "--t0", "0", "--t1", "200"])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn config_file_conflicts_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    fs::write(&cfg, "k=0.05\ntheta-pos=0.2\n").unwrap();
    let dir = seq20();
    let ok = e2v(&["--config", p(&cfg), "roundtrip", p(&dir)]);
    assert_eq!(ok.status.code(), Some(0));
    let clash = e2v(&["--config", p(&cfg), "--k", "0.01", "roundtrip", p(&dir)]);
    assert_eq!(clash.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&clash.stderr).contains("conflicts"));
}
