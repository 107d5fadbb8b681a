use std::path::Path;
use std::process::{Command, Output};

fn sasr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "\
# narrow networks so the test trains in seconds
base_channels = 8
growth = 4
rdb_layers = 2
disc_width = 4
batch = 2
epochs = 1
seed = 3
";

#[test]
fn every_subcommand_has_help() {
    for sub in ["synth", "degrade", "train", "infer", "eval", "metrics", "gradcheck"] {
        let o = sasr(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        assert!(stdout(&o).contains("Usage"), "{sub}");
    }
    assert_eq!(sasr(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sasr(&[]).status.code(), Some(1));
    assert_eq!(sasr(&["bogus"]).status.code(), Some(1));
    assert_eq!(sasr(&["synth", "--count", "2"]).status.code(), Some(1));
    assert_eq!(sasr(&["metrics", "--a", "x.pgm", "--b", "y.pgm", "--extra"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_2_with_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.pgm");
    let o = sasr(&["metrics", "--a", p(&missing), "--b", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("error: "), "{err}");
    assert_eq!(err.lines().count(), 1);

    let bogus = dir.path().join("ckpt.bin");
    std::fs::write(&bogus, b"definitely not a checkpoint").unwrap();
    let o = sasr(&["infer", "--checkpoint", p(&bogus), "--in", p(&missing), "--out", p(&missing)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not a checkpoint"));

    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "epochs = 1\nunknown_key = 3\n").unwrap();
    let o = sasr(&["train", "--config", p(&cfg), "--data", p(dir.path()), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn synth_degrade_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = sasr(&["synth", "--count", "2", "--size", "64", "--seed", "5", "--out-dir", p(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["0000_hr.pgm", "0000_synth_lr.pgm", "0000_real_lr.pgm", "0001_vessels.pgm"] {
        assert!(data.join(f).is_file(), "{f}");
    }

    let hr = data.join("0000_hr.pgm");
    let down = dir.path().join("down.pgm");
    assert_eq!(sasr(&["degrade", "--in", p(&hr), "--out", p(&down)]).status.code(), Some(0));
    let o = sasr(&["metrics", "--a", p(&down), "--b", p(&down)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "psnr=99.0000 ssim=1.000000");

    let psnr = |a: &Path, b: &Path| -> f64 {
        let line = stdout(&sasr(&["metrics", "--a", p(a), "--b", p(b)]));
        line.split_whitespace().next().unwrap().trim_start_matches("psnr=").parse().unwrap()
    };
    // The corpus synthetic LR is the same degradation, up to 8-bit storage of the HR input.
    assert!(psnr(&down, &data.join("0000_synth_lr.pgm")) > 45.0);
    assert!(psnr(&hr, &data.join("0001_hr.pgm")) < 40.0);

    let o = sasr(&["metrics", "--a", p(&hr), "--b", p(&down)]);
    assert_eq!(o.status.code(), Some(2), "size mismatch is a runtime error");

    let downs = dir.path().join("downs");
    let o = sasr(&["degrade", "--in", p(&data), "--out", p(&downs)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(&downs).unwrap().count(), 8);
}

#[test]
fn train_resume_infer_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, TINY).unwrap();
    assert_eq!(sasr(&["synth", "--count", "4", "--size", "96", "--out-dir", p(&data)]).status.code(), Some(0));

    let o = sasr(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log = std::fs::read_to_string(run.join("loss_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 2, "header plus two steps");

    // Extending the epoch count resumes from the saved state.
    std::fs::write(&cfg, TINY.replace("epochs = 1", "epochs = 2")).unwrap();
    let o = sasr(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run), "--resume"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("epochs 1..2"), "{}", stdout(&o));

    std::fs::write(&cfg, TINY.replace("seed = 3", "seed = 4")).unwrap();
    let o = sasr(&["train", "--config", p(&cfg), "--data", p(&data), "--out", p(&run), "--resume"]);
    assert_eq!(o.status.code(), Some(2));

    let preds = dir.path().join("preds");
    let inputs = dir.path().join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    for i in 0..4 {
        let name = format!("{i:04}_synth_lr.pgm");
        std::fs::copy(data.join(&name), inputs.join(&name)).unwrap();
    }
    let ckpt = run.join("checkpoint.bin");
    let o = sasr(&["infer", "--checkpoint", p(&ckpt), "--in", p(&inputs), "--out", p(&preds)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let csv_path = dir.path().join("report.csv");
    let o = sasr(&["eval", "--pred-dir", p(&preds), "--ref-dir", p(&data), "--report", p(&csv_path), "--mask-dir", p(&data)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 4 + 1);
    assert!(lines[0].starts_with("sample,psnr_db,ssim"));
    assert!(lines[5].starts_with("aggregate,"));
    assert!(lines[5].contains('±'));

    let json_path = dir.path().join("report.json");
    let o = sasr(&["eval", "--pred-dir", p(&preds), "--ref-dir", p(&data), "--report", p(&json_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let json = std::fs::read_to_string(&json_path).unwrap();
    assert!(json.contains("\"aggregate\""));
    assert!(json.contains("\"dice\": null"), "no masks means no segmentation scores");

    let single = dir.path().join("one.pgm");
    let o = sasr(&["infer", "--checkpoint", p(&ckpt), "--in", p(&data.join("0000_real_lr.pgm")), "--out", p(&single)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = sasr(&["metrics", "--a", p(&single), "--b", p(&data.join("0000_hr.pgm"))]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn quick_gradcheck_passes() {
    let o = sasr(&["gradcheck", "--quick"]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains(" 0 failed"));
}
