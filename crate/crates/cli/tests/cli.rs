use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_torsonet");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn toy(dir: &Path, per_class: usize) {
    let o = run(&["toy", "--out", dir.to_str().unwrap(), "--per-class", &per_class.to_string(), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn summary_defaults() {
    let o = run(&["summary"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("Total params: 138,052"));
    assert!(text.contains("Trainable params: 138,052"));
    assert!(text.contains("Non-trainable params: 0"));
    assert!(text.contains("(None, 4)"));
    assert!(text.contains("ReLU"));
    assert!(!text.contains("Swish"));
}

#[test]
fn summary_two_classes() {
    let o = run(&["summary", "--classes", "2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.contains("Total params: 137,922"));
    assert!(text.contains("(None, 2)"));
}

#[test]
fn summary_swish_keeps_shapes() {
    let relu = stdout(&run(&["summary"]));
    let swish = stdout(&run(&["summary", "--activation", "swish"]));
    assert!(swish.contains("Swish"));
    assert_eq!(relu.lines().count(), swish.lines().count());
    // Only the conv activation cells differ; dense rows keep ReLU.
    let words = |l: &str| l.split_whitespace().map(String::from).collect::<Vec<_>>();
    for (a, b) in relu.lines().zip(swish.lines()) {
        if a.contains("(Conv2D)") {
            assert_eq!(words(&a.replace("ReLU", "Swish")), words(b));
        } else {
            assert_eq!(words(a), words(b));
        }
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["summary", "--bogus"])), 2);
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["summary", "--activation", "tanh"])), 2);
    assert_eq!(code(&run(&["summary", "--classes", "1"])), 2);
    assert_eq!(code(&run(&["verify", "--inject-fault", "nonsense"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn verify_passes_and_catches_injected_fault() {
    let ok = run(&["verify", "--seed", "1"]);
    assert_eq!(code(&ok), 0, "{}", stdout(&ok));
    let text = stdout(&ok);
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
    assert!(text.contains("PASS table.relu"));

    let bad = run(&["verify", "--inject-fault", "conv-backward"]);
    assert_eq!(code(&bad), 1);
    let text = stdout(&bad);
    assert!(text.lines().any(|l| l.starts_with("FAIL conv")), "{text}");
    assert!(text.contains("verification failed"));
}

#[test]
fn toy_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    toy(&data, 3);
    let o = run(&["index", "--data", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 12);
    assert!(lines[0].ends_with("\tlower_horizontal"));
    assert!(lines[11].ends_with("\tupper_vertical"));

    let manifest = dir.path().join("manifest.txt");
    let o = run(&["index", "--data", data.to_str().unwrap(), "--out", manifest.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read_to_string(&manifest).unwrap(), text);

    assert_eq!(code(&run(&["toy", "--out", dir.path().to_str().unwrap(), "--per-class", "0"])), 2);
}

#[test]
fn single_class_tree_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    toy(&data, 2);
    for name in ["lower_vertical", "upper_horizontal", "upper_vertical"] {
        fs::remove_dir_all(data.join(name)).unwrap();
    }
    let out = dir.path().join("m.ctrw");
    let o = run(&["train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
    assert_eq!(code(&run(&["index", "--data", data.to_str().unwrap()])), 3);
}

#[test]
fn bad_training_flags_leave_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    toy(&data, 2);
    let out = dir.path().join("m.ctrw");
    let d = data.to_str().unwrap();
    let o = out.to_str().unwrap();
    for extra in [
        &["--lr", "0"][..],
        &["--lr", "-1"],
        &["--epochs", "0"],
        &["--batch", "0"],
        &["--batch", "100"],
        &["--val-split", "1.5"],
        &["--val-split", "0"],
        &["--activation", "gelu"],
    ] {
        let mut args = vec!["train", "--data", d, "--out", o];
        args.extend_from_slice(extra);
        assert_eq!(code(&run(&args)), 2, "{extra:?}");
        assert!(!out.exists());
    }
    let nested = dir.path().join("no/such/dir/m.ctrw");
    assert_eq!(code(&run(&["train", "--data", d, "--out", nested.to_str().unwrap()])), 2);
    let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(leftovers.len(), 1);
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("toy");
    toy(&data, 4);
    let out = dir.path().join("m.ctrw");
    let d = data.to_str().unwrap();
    let o = out.to_str().unwrap();

    let t = run(&["train", "--data", d, "--out", o, "--epochs", "2", "--batch", "4", "--activation", "swish", "--seed", "5"]);
    assert_eq!(code(&t), 0, "{}", String::from_utf8_lossy(&t.stderr));
    let text = stdout(&t);
    assert!(text.contains("train 12 / val 4"), "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("epoch")).count(), 2);
    assert_eq!(fs::metadata(&out).unwrap().len() as usize, fs::read(&out).unwrap().len());
    assert!(fs::read(&out).unwrap().len() > 138_052 * 4);

    let history = fs::read_to_string(dir.path().join("m.ctrw.history.jsonl")).unwrap();
    let recs: Vec<&str> = history.lines().collect();
    assert_eq!(recs.len(), 2);
    for (i, r) in recs.iter().enumerate() {
        assert!(r.starts_with(&format!("{{\"epoch\":{}", i + 1)), "{r}");
        for key in ["train_loss", "train_acc", "val_acc", "seconds"] {
            assert!(r.contains(&format!("\"{key}\":")));
        }
    }

    let e = run(&["eval", "--model", o, "--data", d]);
    assert_eq!(code(&e), 0);
    let report = stdout(&e);
    assert!(report.starts_with("Metric"));
    assert!(report.contains("upper_vertical"));
    assert!(report.contains("Accuracy"));
    assert!(report.contains("Macro F1"));

    let img_a = data.join("lower_horizontal/0000.pgm");
    let img_b = data.join("upper_vertical/0003.pgm");
    let p = run(&["predict", "--model", o, img_a.to_str().unwrap(), img_b.to_str().unwrap()]);
    assert_eq!(code(&p), 0);
    let lines: Vec<String> = stdout(&p).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    for (line, img) in lines.iter().zip([&img_a, &img_b]) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols.len(), 3);
        assert_eq!(cols[0], img.to_str().unwrap());
        assert!(["lower_horizontal", "lower_vertical", "upper_horizontal", "upper_vertical"].contains(&cols[1]));
        let probs: Vec<f32> = cols[2].split(' ').map(|v| v.parse().unwrap()).collect();
        assert_eq!(probs.len(), 4);
        assert!((probs.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
    let again = run(&["predict", "--model", o, img_a.to_str().unwrap()]);
    assert_eq!(stdout(&again).lines().next().unwrap(), lines[0]);

    // A bad image is reported in place; the others still print.
    let junk = dir.path().join("junk.pgm");
    fs::write(&junk, b"not an image").unwrap();
    let p = run(&["predict", "--model", o, junk.to_str().unwrap(), img_a.to_str().unwrap()]);
    assert_eq!(code(&p), 3);
    let text = stdout(&p);
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with(&format!("{}\terror\t", junk.display())));
    assert_eq!(lines[1], stdout(&again).trim_end());

    // A tree with a different class count cannot be scored.
    fs::remove_dir_all(data.join("upper_vertical")).unwrap();
    assert_eq!(code(&run(&["eval", "--model", o, "--data", d])), 3);

    let missing = dir.path().join("absent.ctrw");
    assert_eq!(code(&run(&["predict", "--model", missing.to_str().unwrap(), img_a.to_str().unwrap()])), 3);
    let mut corrupt = fs::read(&out).unwrap();
    let n = corrupt.len();
    corrupt[n - 100] ^= 1;
    fs::write(&out, corrupt).unwrap();
    assert_eq!(code(&run(&["eval", "--model", o, "--data", d])), 3);
}
