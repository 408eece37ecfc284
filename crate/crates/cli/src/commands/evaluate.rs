//! `gatbind evaluate`: metrics for a prediction CSV.

use gatbind::metrics::read_predictions;
use gatbind::train::evaluate;

use super::{ensure_file, ensure_out_dir, write_text};
use crate::args::EvaluateArgs;
use crate::config::write_echo;
use crate::error::CliError;

pub const METRICS_FILE: &str = "metrics.csv";

pub fn run(args: &EvaluateArgs) -> Result<(), CliError> {
    ensure_file(&args.predictions)?;
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage(format!(
            "--threshold must lie in [0, 1], got {}",
            args.threshold
        )));
    }
    let file =
        std::fs::File::open(&args.predictions).map_err(|e| CliError::io(&args.predictions, e))?;
    let records = read_predictions(file)?;
    let report = evaluate(args.head, &records, args.threshold)?;
    for (name, v) in report.entries() {
        match v {
            Some(v) => println!("{name:>12}  {v}"),
            None => println!("{name:>12}  undefined"),
        }
    }
    ensure_out_dir(&args.out)?;
    write_text(&args.out.join(METRICS_FILE), &report.to_csv())?;
    write_echo(
        &args.out,
        "evaluate",
        &[
            ("predictions".into(), args.predictions.display().to_string()),
            ("head".into(), args.head.as_str().into()),
            ("threshold".into(), args.threshold.to_string()),
        ],
    )
}
