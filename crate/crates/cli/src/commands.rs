use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use torsonet::data::{index_dataset, load_sample, split, write_manifest, write_toy_dataset};
use torsonet::graph::{load_weights, save_weights, summary as layer_summary, table_mismatches, ModelConfig, ModelGraph};
use torsonet::ops::activation_by_name;
use torsonet::train::gradcheck::{perturbed_conv_backward, ConvCheck};
use torsonet::train::{evaluate, train_with, write_epoch_jsonl, GradCheckRegistry, OptimizerSpec, TrainConfig};

use crate::status::CliError;
use crate::TrainArgs;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// `model.ctrw` → `model.ctrw.history.jsonl`.
pub fn history_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".history.jsonl");
    out.with_file_name(name)
}

pub fn summary(classes: usize, activation: &str) -> Result<(), CliError> {
    let act = activation_by_name(activation)?;
    let model = ModelGraph::<f32>::build(&ModelConfig::new(classes, act))?;
    print!("{}", layer_summary(&model));
    Ok(())
}

fn check_train_args(args: &TrainArgs) -> Result<(), CliError> {
    activation_by_name(&args.activation)?;
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        return Err(usage(format!("--lr must be positive, got {}", args.lr)));
    }
    if args.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    if args.batch == 0 {
        return Err(usage("--batch must be at least 1"));
    }
    if !(args.val_split > 0.0 && args.val_split < 1.0) {
        return Err(usage(format!("--val-split must lie in (0, 1), got {}", args.val_split)));
    }
    let parent = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(usage(format!("output directory {} does not exist", parent.display())));
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    check_train_args(args)?;
    let index = index_dataset(&args.data)?;
    let (train_set, val_set) = split(&index, args.val_split, args.seed)?;
    if args.batch > train_set.entries.len() {
        return Err(usage(format!(
            "--batch {} exceeds the {} training images",
            args.batch,
            train_set.entries.len()
        )));
    }
    println!(
        "dataset: {} images, {} classes ({}); train {} / val {}",
        index.entries.len(),
        index.num_classes(),
        index.class_names.join(", "),
        train_set.entries.len(),
        val_set.entries.len()
    );
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        optimizer: OptimizerSpec::default(),
        val_fraction: args.val_split,
        ..TrainConfig::default()
    };
    let act = activation_by_name(&args.activation)?;
    let mut model = ModelGraph::<f32>::build(
        &ModelConfig::new(index.num_classes(), act)
            .with_seed(args.seed)
            .with_dropout(cfg.dropout_rate),
    )?;
    model.set_class_names(index.class_names.clone())?;

    let mut history_lines = Vec::new();
    let mut write_err = None;
    let history = train_with(&mut model, &train_set, &val_set, &cfg, &mut |rec| {
        let val = rec.val_acc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "epoch {:>3}/{}  loss {:.4}  train_acc {:.4}  val_acc {val}  {:.1}s",
            rec.epoch, args.epochs, rec.train_loss, rec.train_acc, rec.seconds
        );
        if let Err(e) = write_epoch_jsonl(rec, &mut history_lines) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let layout = save_weights(&model, &args.out)?;
    let hist = history_path(&args.out);
    fs::write(&hist, &history_lines).map_err(torsonet::Error::from)?;
    println!(
        "saved {} ({} bytes, {} parameters) and {} ({} epochs)",
        args.out.display(),
        layout.total(),
        model.param_count(),
        hist.display(),
        history.epochs.len()
    );
    Ok(())
}

pub fn eval(model_path: &Path, data: &Path) -> Result<(), CliError> {
    let mut model = load_weights(model_path, None)?;
    let index = index_dataset(data)?;
    if index.num_classes() != model.num_classes() {
        return Err(CliError::Data(format!(
            "{} has {} classes but the model was trained for {}",
            data.display(),
            index.num_classes(),
            model.num_classes()
        )));
    }
    if index.class_names != model.class_names() {
        log::warn!(
            "dataset classes [{}] differ from the model's [{}]; matching by position",
            index.class_names.join(", "),
            model.class_names().join(", ")
        );
        model.set_class_names(index.class_names.clone())?;
    }
    let (_, report) = evaluate(&model, &index)?;
    println!("{report}");
    Ok(())
}

pub fn predict(model_path: &Path, images: &[PathBuf]) -> Result<(), CliError> {
    let model = load_weights(model_path, None)?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let mut failed = false;
    for path in images {
        let line = load_sample(path, 0).and_then(|s| model.infer(&s.pixels));
        match line {
            Ok(probs) => {
                let name = &model.class_names()[probs.argmax()];
                let values: Vec<String> = probs.data().iter().map(|p| p.to_string()).collect();
                writeln!(out, "{}\t{name}\t{}", path.display(), values.join(" ")).map_err(torsonet::Error::from)?;
            }
            Err(e) => {
                failed = true;
                writeln!(out, "{}\terror\t{e}", path.display()).map_err(torsonet::Error::from)?;
            }
        }
    }
    if failed {
        Err(CliError::DataReported)
    } else {
        Ok(())
    }
}

pub fn verify(seed: u64, fault: Option<&str>) -> Result<(), CliError> {
    let mut checks = GradCheckRegistry::builtin();
    match fault {
        None => {}
        Some("conv-backward") => checks.register(Box::new(ConvCheck::with_backward(perturbed_conv_backward))),
        Some(other) => return Err(usage(format!("unknown fault `{other}`"))),
    }
    let report = checks.run(seed);
    print!("{report}");
    let mut ok = report.passed();
    for act in ["relu", "swish"] {
        let model = ModelGraph::<f32>::build(&ModelConfig::new(4, activation_by_name(act)?))?;
        let diffs = table_mismatches(&model);
        if diffs.is_empty() {
            println!("PASS table.{act:<10} 29 rows, 138,052 trainable parameters");
        } else {
            ok = false;
            println!("FAIL table.{act:<10} {}", diffs.join("; "));
        }
    }
    if ok {
        println!("all checks passed");
        Ok(())
    } else {
        println!("verification failed");
        Err(CliError::VerifyFailed)
    }
}

pub fn index(data: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let index = index_dataset(data)?;
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(torsonet::Error::from)?);
            write_manifest(&index, &mut w)?;
            w.flush().map_err(torsonet::Error::from)?;
            eprintln!(
                "wrote {} entries over {} classes to {}",
                index.entries.len(),
                index.num_classes(),
                path.display()
            );
        }
        None => write_manifest(&index, &mut io::stdout().lock())?,
    }
    Ok(())
}

pub fn toy(out: &Path, per_class: usize, seed: u64) -> Result<(), CliError> {
    if per_class == 0 {
        return Err(usage("--per-class must be at least 1"));
    }
    let index = write_toy_dataset(out, per_class, seed)?;
    println!("wrote {} images over {} classes under {}", index.entries.len(), index.num_classes(), out.display());
    Ok(())
}
