use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evformer(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evformer"))
        .args(args)
        .env("EVFORMER_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|path| (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(evformer(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(evformer(&["verify", "--no-such-flag"]).status.code(), Some(2));
    let help = evformer(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(stdout(&help).contains("verify"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.ini");
    fs::write(&cfg, "[model]\nwidht = 32\n").unwrap();
    let out = dir.path().join("run");
    let o = evformer(&["--config", p(&cfg), "train", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("widht"));
}

#[test]
fn verify_small_run_passes() {
    let o = evformer(&["verify", "--trials", "10", "--max-events", "500", "--max-side", "16", "--chains", "5"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("equivalence"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn gen_is_byte_reproducible_and_converts_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = evformer(&["gen", "--out", p(out), "--per-class", "2", "--seed", "3"]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let files = dir_bytes(&a);
    assert_eq!(files, dir_bytes(&b));

    let evs = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|path| path.extension().is_some_and(|x| x == "evs1"))
        .expect("an event file");
    let stream = evformer::event::load_stream(&evs, evformer::event::StreamFormat::Evs1).unwrap();
    let (w, h, d) = (stream.width().to_string(), stream.height().to_string(), stream.duration().to_string());
    let csv = dir.path().join("s.csv");
    let back = dir.path().join("s.evs1");
    assert_eq!(evformer(&["convert", "--input", p(&evs), "--output", p(&csv)]).status.code(), Some(0));
    let o = evformer(&[
        "convert", "--input", p(&csv), "--output", p(&back), "--width", &w, "--height", &h, "--duration-us", &d,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&evs).unwrap(), fs::read(&back).unwrap());
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.ini");
    fs::write(&cfg, "[train]\nepochs = 2\n\n[data]\nper_class = 5\nseed = 2\n").unwrap();
    let run = dir.path().join("run");
    let o = evformer(&["--config", p(&cfg), "train", "--out", p(&run)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("trained 2 epochs"));
    for f in ["run.ini", "metrics.jsonl", "confusion.csv", "checkpoint.bin"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let jsonl = fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    for line in jsonl.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }

    let o = evformer(&["eval", "--run", p(&run), "--time-length-us", "500000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("accuracy full"), "{text}");
    assert!(text.contains("accuracy prefix 500000 us"), "{text}");
}

#[test]
fn bench_writes_both_paths() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let o = evformer(&[
        "bench", "--out", p(&csv), "--rates", "1000,10000", "--repeats", "1", "--width", "32", "--height", "32",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(evformer::bench::CSV_HEADER));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().any(|r| r.contains("event_by_event")));
    assert!(rows.iter().any(|r| r.contains("count_map")));
}
