//! `gatbind topn`: share of complexes with a near-native pose in the top N.

use gatbind::metrics::{read_predictions, topn_analysis, RankOrder};

use super::{ensure_file, ensure_out_dir, write_text};
use crate::args::TopnArgs;
use crate::config::write_echo;
use crate::error::CliError;

pub const TOPN_FILE: &str = "topn.csv";

pub fn run(args: &TopnArgs) -> Result<(), CliError> {
    ensure_file(&args.predictions)?;
    if args.n.is_empty() || args.n.contains(&0) {
        return Err(CliError::Usage("--n needs positive values".into()));
    }
    let file =
        std::fs::File::open(&args.predictions).map_err(|e| CliError::io(&args.predictions, e))?;
    let records = read_predictions(file)?;
    let rows = topn_analysis(&records, &args.n, args.rmsd_cutoff, args.rank_order)?;
    let mut csv = String::from("n,hits,groups,percent\n");
    for r in &rows {
        println!(
            "top-{:<3} {:>6.2}%  ({}/{})",
            r.n, r.percent, r.hits, r.groups
        );
        csv.push_str(&format!("{},{},{},{}\n", r.n, r.hits, r.groups, r.percent));
    }
    ensure_out_dir(&args.out)?;
    write_text(&args.out.join(TOPN_FILE), &csv)?;
    let ns: Vec<String> = args.n.iter().map(usize::to_string).collect();
    let order = match args.rank_order {
        RankOrder::Desc => "desc",
        RankOrder::Asc => "asc",
    };
    write_echo(
        &args.out,
        "topn",
        &[
            ("predictions".into(), args.predictions.display().to_string()),
            ("n".into(), ns.join(",")),
            ("rank_order".into(), order.into()),
            ("rmsd_cutoff".into(), args.rmsd_cutoff.to_string()),
        ],
    )
}
