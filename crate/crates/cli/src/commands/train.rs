use std::fs::File;
use std::io::Write;
use std::path::Path;

use sequelrec_core::checkpoint::save_checkpoint;
use sequelrec_core::data::Dataset;
use sequelrec_core::encoding::PositionalKind;
use sequelrec_core::model::{FusionStrategy, Propagation};
use sequelrec_core::train::{train, TrainConfig, TrainOutcome};
use sequelrec_core::{Error, Result};

use crate::commands::write_file;
use crate::config_file::{pick, ConfigFile};
use crate::TrainArgs;

pub fn build_config(args: &TrainArgs) -> Result<TrainConfig> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let defaults = TrainConfig::default();

    let fusion = match &args.fusion {
        Some(s) => FusionStrategy::parse(s)?,
        None => match file.get_str("fusion") {
            Some(s) => FusionStrategy::parse(s)?,
            None => defaults.fusion,
        },
    };
    let positional = match &args.positional {
        Some(s) => PositionalKind::parse(s)?,
        None => match file.get_str("positional") {
            Some(s) => PositionalKind::parse(s)?,
            None => defaults.positional,
        },
    };
    let patience = if args.epochs_exact {
        None
    } else {
        Some(pick(args.patience, &file, "patience", 5)?)
    };

    Ok(TrainConfig {
        d: pick(args.d, &file, "d", defaults.d)?,
        layers: pick(args.layers, &file, "layers", defaults.layers)?,
        m: pick(args.m, &file, "m", defaults.m)?,
        recent_n: pick(args.recent_n, &file, "recent_n", defaults.recent_n)?,
        lr: pick(args.lr, &file, "lr", defaults.lr)?,
        batch_size: pick(args.batch_size, &file, "batch_size", defaults.batch_size)?,
        weight_decay: pick(args.weight_decay, &file, "weight_decay", defaults.weight_decay)?,
        decoupled_weight_decay: args.decoupled_weight_decay
            || file.get::<bool>("decoupled_weight_decay")?.unwrap_or(false),
        epochs: pick(args.epochs, &file, "epochs", defaults.epochs)?,
        patience,
        fusion,
        positional,
        propagation: if args.gcn_baseline || file.get::<bool>("gcn_baseline")?.unwrap_or(false) {
            Propagation::GcnBaseline
        } else {
            Propagation::Attention
        },
        seed: pick(args.seed, &file, "seed", defaults.seed)?,
        ablate_sequels: args.ablate_sequels
            || file.get::<bool>("ablate_sequels")?.unwrap_or(false),
        val_k: 10,
    })
}

fn config_echo(cfg: &TrainConfig) -> String {
    format!(
        "d = {}\nlayers = {}\nm = {}\nrecent_n = {}\nlr = {}\nbatch_size = {}\nweight_decay = {}\ndecoupled_weight_decay = {}\nepochs = {}\npatience = {}\nfusion = {}\npositional = {}\npropagation = {}\nablate_sequels = {}\nseed = {}\n",
        cfg.d,
        cfg.layers,
        cfg.m,
        cfg.recent_n,
        cfg.lr,
        cfg.batch_size,
        cfg.weight_decay,
        cfg.decoupled_weight_decay,
        cfg.epochs,
        cfg.patience.map_or("none".to_string(), |p| p.to_string()),
        cfg.fusion.as_str(),
        cfg.positional.as_str(),
        cfg.propagation.as_str(),
        cfg.ablate_sequels,
        cfg.seed
    )
}

/// Shared by `train` and `sweep`: run one training job into `out`.
pub fn run_job(dataset: &Dataset, cfg: &TrainConfig, out: &Path) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_file(&out.join("train_config.txt"), &config_echo(cfg))?;

    let log_path = out.join("train_log.jsonl");
    let mut log_file = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let outcome = train(dataset, cfg, |record| {
        let line = serde_json::to_string(record).expect("epoch record serializes");
        // Append-only JSON lines, flushed per epoch.
        let _ = writeln!(log_file, "{line}");
        let _ = log_file.flush();
        eprintln!(
            "epoch {:>3}  loss {:.4}  val hit@10 {:.4}",
            record.epoch, record.train_loss, record.val_hit
        );
    })?;

    save_checkpoint(&out.join("checkpoint.bin"), &outcome.params, cfg.seed)?;
    Ok(outcome)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let cfg = build_config(&args)?;
    let dataset = Dataset::read_dir(&args.data)?;
    let outcome = run_job(&dataset, &cfg, &args.out)?;

    if let Some(reason) = outcome.aborted {
        // The checkpoint written above holds the last good epoch state.
        return Err(Error::Numeric(format!(
            "training aborted ({reason}); last good checkpoint retained"
        )));
    }
    println!(
        "trained {} epochs (best epoch {}{}); checkpoint at {}",
        outcome.log.len(),
        outcome.best_epoch,
        if outcome.stopped_early { ", early stop" } else { "" },
        args.out.join("checkpoint.bin").display()
    );
    Ok(())
}
