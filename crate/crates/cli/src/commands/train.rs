//! `gatbind train`: dataset in, checkpoint and log out.

use std::ops::ControlFlow;

use gatbind::complexbuild::read_dataset;
use gatbind::train::checkpoint::{load_checkpoint, save_checkpoint};
use gatbind::train::{log_csv, TrainConfig, Trainer};
use log::{info, warn};

use super::{ensure_file, ensure_out_dir, read_text, write_text};
use crate::args::TrainArgs;
use crate::config::{apply_config, parse_config, parse_hidden, train_config_pairs, write_echo};
use crate::error::CliError;

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const LOG_FILE: &str = "train_log.csv";

/// Defaults, then the config file, then flags.
pub fn effective_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        ensure_file(path)?;
        apply_config(&mut cfg, &parse_config(&read_text(path)?)?)?;
    }
    if let Some(v) = args.model {
        cfg.model = v;
    }
    if let Some(v) = args.head {
        cfg.head = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.blocks {
        cfg.n_blocks = v;
    }
    if let Some(v) = &args.hidden {
        cfg.hidden = parse_hidden(v)?;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.threshold {
        cfg.threshold = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    ensure_file(&args.data)?;
    if let Some(e) = &args.eval {
        ensure_file(e)?;
    }
    let train = read_dataset(&args.data)?;
    let eval = match &args.eval {
        Some(p) => Some(read_dataset(p)?),
        None => None,
    };
    let mut trainer = match &args.resume {
        Some(dir) => {
            let ck = load_checkpoint::<f64>(dir)?;
            // stored settings win; only --epochs may extend the run
            if args.config.is_some()
                || args.lr.is_some()
                || args.model.is_some()
                || args.head.is_some()
                || args.dim.is_some()
                || args.blocks.is_some()
                || args.hidden.is_some()
                || args.batch_size.is_some()
                || args.seed.is_some()
                || args.threshold.is_some()
            {
                warn!("train: --resume keeps the checkpoint settings; only --epochs is applied");
            }
            Trainer::resume(ck, args.epochs)?
        }
        None => Trainer::new(effective_config(args)?, &train)?,
    };
    ensure_out_dir(&args.out)?;
    write_echo(&args.out, "train", &train_config_pairs(&trainer.config))?;
    info!(
        "train: {} records, {} params, {}",
        train.len(),
        trainer.model.parameter_count(),
        trainer.config.summary()
    );
    let logs = trainer.fit(&train, eval.as_deref(), |_, l| {
        info!(
            "epoch {} loss {:.6} train_metric {:.4}",
            l.epoch, l.train_loss, l.train_metric
        );
        ControlFlow::Continue(())
    })?;
    save_checkpoint(args.out.join(CHECKPOINT_DIR), &trainer.checkpoint())?;
    write_text(&args.out.join(LOG_FILE), &log_csv(&trainer.config, &logs))?;
    Ok(())
}
