//! `gatbind predict`: score every record of a dataset.

use gatbind::complexbuild::read_dataset;
use gatbind::metrics::{write_predictions, PredictionRecord};
use gatbind::train::checkpoint::load_checkpoint;
use gatbind::train::prediction_record;
use log::{info, warn};
use rayon::prelude::*;

use super::{ensure_file, ensure_out_dir};
use crate::args::PredictArgs;
use crate::config::write_echo;
use crate::error::CliError;

pub const PREDICTIONS_FILE: &str = "predictions.csv";

pub fn run(args: &PredictArgs) -> Result<(), CliError> {
    ensure_file(&args.data)?;
    let ck = load_checkpoint::<f64>(&args.checkpoint)?;
    if let Some(h) = args.head {
        ck.expect_head(h)?;
    }
    if let Some(m) = args.model {
        ck.expect_model(m)?;
    }
    let graphs = read_dataset(&args.data)?;
    let model = &ck.model;
    let mut records: Vec<PredictionRecord> = graphs
        .par_iter()
        .map(|g| prediction_record(model, g))
        .collect::<Result<_, _>>()?;
    records.sort_by(|a, b| (&a.sample_id, a.pose_rank).cmp(&(&b.sample_id, b.pose_rank)));
    let flagged = records.iter().filter(|r| r.warning.is_some()).count();
    if flagged > 0 {
        warn!("predict: {flagged} records have no interaction pairs and score as a constant");
    }
    ensure_out_dir(&args.out)?;
    let path = args.out.join(PREDICTIONS_FILE);
    let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
    write_predictions(std::io::BufWriter::new(file), &records)?;
    write_echo(
        &args.out,
        "predict",
        &[
            ("checkpoint".into(), args.checkpoint.display().to_string()),
            ("data".into(), args.data.display().to_string()),
            ("model".into(), model.config.model.as_str().into()),
            ("head".into(), model.config.head.as_str().into()),
        ],
    )?;
    info!(
        "predict: {} rows written to {}",
        records.len(),
        path.display()
    );
    Ok(())
}
