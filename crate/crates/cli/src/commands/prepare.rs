//! `gatbind prepare`: structures in, labeled complex graphs out.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use gatbind::chemio::{
    infer_protein_bonds, parse_pdb, parse_sdf, perceive_ligand, MolecularStructure,
};
use gatbind::complexbuild::{
    affinity_label, balance_classes, build_complex_graph, crop_pocket, heavy_atom_rmsd,
    label_pose_by_rmsd, mean_pic50_label, split_dataset, write_dataset, ComplexError, ComplexGraph,
    LabelKind, LabelValue, MeasureKind, SampleMeta,
};
use log::info;
use rayon::prelude::*;

use super::{ensure_file, ensure_out_dir, read_text, write_text};
use crate::args::PrepareArgs;
use crate::config::write_echo;
use crate::error::CliError;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const SKIP_FILE: &str = "skipped.csv";
pub const TRAIN_FILE: &str = "train.jsonl";
pub const TEST_FILE: &str = "test.jsonl";

/// Machine-readable reasons a pose does not become a record.
pub mod reason {
    pub const EMPTY_POCKET: &str = "empty_pocket";
    pub const AMBIGUOUS_RMSD: &str = "ambiguous_rmsd";
    pub const MISSING_LABEL: &str = "missing_label";
    pub const INVALID_LABEL: &str = "invalid_label";
    pub const CONFLICTING_LABELS: &str = "conflicting_labels";
    pub const MAX_MW: &str = "max_mw";
    pub const ATOM_MISMATCH: &str = "atom_mismatch";
    pub const EMPTY_LIGAND: &str = "empty_ligand";
}

struct Pose {
    sample_id: String,
    title: String,
    pose_rank: u32,
    mol: MolecularStructure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skip {
    pub sample_id: String,
    pub pose_rank: u32,
    pub reason: &'static str,
    pub detail: String,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "unnamed".into())
}

fn ligand_files(args: &PrepareArgs) -> Result<Vec<PathBuf>, CliError> {
    let mut files = args.ligands.clone();
    if let Some(dir) = &args.pose_dir {
        let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
        let mut found: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("sdf")))
            .collect();
        found.sort();
        files.extend(found);
    }
    if files.is_empty() {
        return Err(CliError::Usage(
            "no ligands: pass --ligands or --pose-dir".into(),
        ));
    }
    Ok(files)
}

fn read_poses(files: &[PathBuf], target: &str) -> Result<Vec<Pose>, CliError> {
    let mut counter: HashMap<String, u32> = HashMap::new();
    let mut poses = Vec::new();
    for path in files {
        let mols = parse_sdf(&read_text(path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        for (k, mol) in mols.into_iter().enumerate() {
            let title = match mol.source_id.trim() {
                "" => format!("{}_{}", stem(path), k + 1),
                t => t.to_string(),
            };
            let rank = counter.entry(title.clone()).or_insert(0);
            *rank += 1;
            poses.push(Pose {
                sample_id: format!("{target}:{title}"),
                title,
                pose_rank: *rank,
                mol,
            });
        }
    }
    Ok(poses)
}

/// `id -> [(measure, value)]` from a CSV with header `id,measure,value`.
pub fn read_label_table(text: &str) -> Result<HashMap<String, Vec<(String, f64)>>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "measure", "value"] {
        return Err(CliError::Data(format!(
            "label table header must be id,measure,value, got {}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let value: f64 = row[2].parse().map_err(|_| {
            CliError::Data(format!(
                "label table row {}: bad value '{}'",
                k + 2,
                &row[2]
            ))
        })?;
        out.entry(row[0].to_string())
            .or_default()
            .push((row[1].to_ascii_lowercase(), value));
    }
    Ok(out)
}

/// Collapses the table rows of one ligand into a label.
///
/// Repeated IC50 values average in pIC50 space; repeated Ki/Kd values
/// average their −log10; repeated docking scores average; repeated
/// activity values must agree.
pub fn resolve_label(rows: &[(String, f64)]) -> Result<LabelValue, (&'static str, String)> {
    let invalid = |e: ComplexError| (reason::INVALID_LABEL, e.to_string());
    let kind_of = |m: &str| match m {
        "activity" => Some(LabelKind::Activity),
        "ki" | "kd" => Some(LabelKind::Affinity),
        "ic50" => Some(LabelKind::Pic50),
        "docking" => Some(LabelKind::Docking),
        _ => None,
    };
    let mut kinds = Vec::new();
    for (m, _) in rows {
        match kind_of(m) {
            Some(k) => kinds.push(k),
            None => return Err((reason::INVALID_LABEL, format!("unknown measure '{m}'"))),
        }
    }
    let kind = kinds[0];
    if kinds.iter().any(|&k| k != kind) {
        return Err((reason::CONFLICTING_LABELS, "mixed measures".into()));
    }
    let values: Vec<f64> = rows.iter().map(|(_, v)| *v).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    match kind {
        LabelKind::Activity => {
            if values.iter().any(|&v| v != values[0]) {
                return Err((
                    reason::CONFLICTING_LABELS,
                    "activity values disagree".into(),
                ));
            }
            LabelValue::new(LabelKind::Activity, values[0]).map_err(invalid)
        }
        LabelKind::Pic50 => mean_pic50_label(&values).map_err(invalid),
        LabelKind::Affinity => {
            let logs = rows
                .iter()
                .map(|(m, v)| {
                    let mk = if m == "ki" {
                        MeasureKind::Ki
                    } else {
                        MeasureKind::Kd
                    };
                    affinity_label(mk, *v).map(|l| l.value)
                })
                .collect::<Result<Vec<f64>, _>>()
                .map_err(invalid)?;
            LabelValue::new(LabelKind::Affinity, mean(&logs)).map_err(invalid)
        }
        LabelKind::Docking => LabelValue::new(LabelKind::Docking, mean(&values)).map_err(invalid),
    }
}

struct Context<'a> {
    protein: &'a MolecularStructure,
    target: &'a str,
    crystal: Option<&'a MolecularStructure>,
    labels: Option<&'a HashMap<String, Vec<(String, f64)>>>,
    args: &'a PrepareArgs,
}

fn process(ctx: &Context<'_>, pose: &Pose) -> Result<ComplexGraph, Skip> {
    let skip = |reason: &'static str, detail: String| Skip {
        sample_id: pose.sample_id.clone(),
        pose_rank: pose.pose_rank,
        reason,
        detail,
    };
    let perceived = perceive_ligand(&pose.mol);
    if perceived.is_empty() {
        return Err(skip(reason::EMPTY_LIGAND, "no atoms".into()));
    }
    if let Some(max) = ctx.args.max_mw {
        let mw = perceived.molecular_weight();
        if mw > max {
            return Err(skip(reason::MAX_MW, format!("{mw:.2} > {max}")));
        }
    }
    let rmsd = match ctx.crystal {
        Some(c) => Some(
            heavy_atom_rmsd(&pose.mol, c)
                .map_err(|e| skip(reason::ATOM_MISMATCH, e.to_string()))?,
        ),
        None => None,
    };
    let label = match (ctx.labels, rmsd) {
        (Some(table), _) => {
            let rows = table
                .get(&pose.title)
                .or_else(|| table.get(&pose.sample_id))
                .ok_or_else(|| {
                    skip(
                        reason::MISSING_LABEL,
                        format!("no entry for '{}'", pose.title),
                    )
                })?;
            resolve_label(rows).map_err(|(r, d)| skip(r, d))?
        }
        (None, Some(r)) => label_pose_by_rmsd(r)
            .ok_or_else(|| skip(reason::AMBIGUOUS_RMSD, format!("rmsd {r:.3}")))?,
        (None, None) => unreachable!("label source checked before processing"),
    };
    let pocket = crop_pocket(ctx.protein, &pose.mol, ctx.args.cutoff_pocket)
        .map_err(|e| skip(reason::EMPTY_POCKET, e.to_string()))?;
    let pocket = infer_protein_bonds(&pocket);
    let mut meta = SampleMeta::new(&pose.sample_id, ctx.target, pose.pose_rank);
    meta.rmsd = rmsd;
    build_complex_graph(
        &pocket,
        &perceived,
        label,
        meta,
        ctx.args.cutoff_interaction,
    )
    .map_err(|e| {
        let r = match e {
            ComplexError::EmptyPocket { .. } => reason::EMPTY_POCKET,
            _ => reason::INVALID_LABEL,
        };
        skip(r, e.to_string())
    })
}

/// Pipeline without file output: records and skips, both sorted by
/// `(sample_id, pose_rank)`.
pub fn prepare(args: &PrepareArgs) -> Result<(Vec<ComplexGraph>, Vec<Skip>), CliError> {
    ensure_file(&args.protein)?;
    let files = ligand_files(args)?;
    for f in &files {
        ensure_file(f)?;
    }
    for p in [&args.crystal, &args.labels].into_iter().flatten() {
        ensure_file(p)?;
    }
    if args.crystal.is_none() && args.labels.is_none() {
        return Err(CliError::Usage(
            "no label source: pass --labels or --crystal".into(),
        ));
    }
    for (name, v) in [
        ("--cutoff-pocket", args.cutoff_pocket),
        ("--cutoff-interaction", args.cutoff_interaction),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::Usage(format!("{name} must be positive, got {v}")));
        }
    }
    if let Some(r) = args.split {
        if !(r > 0.0 && r < 1.0) {
            return Err(CliError::Usage(format!(
                "--split must lie in (0, 1), got {r}"
            )));
        }
    }

    let target = stem(&args.protein);
    let protein = parse_pdb(&read_text(&args.protein)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.protein.display())))?;
    let crystal = match &args.crystal {
        Some(p) => Some(
            parse_sdf(&read_text(p)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?
                .into_iter()
                .next()
                .ok_or_else(|| CliError::Data(format!("{}: no molecule", p.display())))?,
        ),
        None => None,
    };
    let labels = match &args.labels {
        Some(p) => Some(read_label_table(&read_text(p)?)?),
        None => None,
    };
    let poses = read_poses(&files, &target)?;
    info!("prepare: {} poses against target {target}", poses.len());

    let ctx = Context {
        protein: &protein,
        target: &target,
        crystal: crystal.as_ref(),
        labels: labels.as_ref(),
        args,
    };
    let outcomes: Vec<Result<ComplexGraph, Skip>> =
        poses.par_iter().map(|p| process(&ctx, p)).collect();
    let mut graphs = Vec::new();
    let mut skips = Vec::new();
    for o in outcomes {
        match o {
            Ok(g) => graphs.push(g),
            Err(s) => skips.push(s),
        }
    }
    graphs.sort_by(|a, b| {
        (&a.meta.sample_id, a.meta.pose_rank).cmp(&(&b.meta.sample_id, b.meta.pose_rank))
    });
    skips.sort_by(|a, b| (&a.sample_id, a.pose_rank).cmp(&(&b.sample_id, b.pose_rank)));

    if args.balance {
        if let Some(g) = graphs.iter().find(|g| g.label.kind != LabelKind::Activity) {
            return Err(CliError::Usage(format!(
                "--balance needs activity labels; '{}' has a {} label",
                g.meta.sample_id,
                g.label.kind.as_str()
            )));
        }
        graphs = balance_classes(graphs, args.seed);
    }
    Ok((graphs, skips))
}

fn skip_csv(skips: &[Skip]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "pose_rank", "reason", "detail"])?;
    for s in skips {
        w.write_record([&s.sample_id, &s.pose_rank.to_string(), s.reason, &s.detail])?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn run(args: &PrepareArgs) -> Result<(), CliError> {
    let (graphs, skips) = prepare(args)?;
    ensure_out_dir(&args.out)?;
    write_text(&args.out.join(SKIP_FILE), &skip_csv(&skips)?)?;
    let mut echo: Vec<(String, String)> = vec![
        ("protein".into(), args.protein.display().to_string()),
        ("cutoff_pocket".into(), args.cutoff_pocket.to_string()),
        (
            "cutoff_interaction".into(),
            args.cutoff_interaction.to_string(),
        ),
        ("balance".into(), args.balance.to_string()),
        (
            "max_mw".into(),
            args.max_mw.map_or("none".into(), |v| v.to_string()),
        ),
        (
            "split".into(),
            args.split.map_or("none".into(), |v| v.to_string()),
        ),
        ("seed".into(), args.seed.to_string()),
    ];
    for l in &args.ligands {
        echo.push(("ligands".into(), l.display().to_string()));
    }
    for (k, p) in [
        ("pose_dir", &args.pose_dir),
        ("crystal", &args.crystal),
        ("labels", &args.labels),
    ] {
        if let Some(p) = p {
            echo.push((k.into(), p.display().to_string()));
        }
    }
    write_echo(&args.out, "prepare", &echo)?;
    let mut by_reason: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &skips {
        *by_reason.entry(s.reason).or_default() += 1;
    }
    info!(
        "prepare: {} records, {} skipped {:?}",
        graphs.len(),
        skips.len(),
        by_reason
    );
    if graphs.is_empty() {
        return Err(CliError::Data(format!(
            "no records produced ({} skipped, see {})",
            skips.len(),
            args.out.join(SKIP_FILE).display()
        )));
    }
    write_dataset(args.out.join(DATASET_FILE), &graphs)?;
    if let Some(ratio) = args.split {
        let ids: Vec<String> = graphs.iter().map(|g| g.meta.sample_id.clone()).collect();
        let split = split_dataset(&ids, ratio, args.seed)?;
        let test: std::collections::HashSet<&str> =
            split.test_ids.iter().map(String::as_str).collect();
        let (te, tr): (Vec<ComplexGraph>, Vec<ComplexGraph>) = graphs
            .into_iter()
            .partition(|g| test.contains(g.meta.sample_id.as_str()));
        write_dataset(args.out.join(TRAIN_FILE), &tr)?;
        write_dataset(args.out.join(TEST_FILE), &te)?;
        info!(
            "prepare: split {} train / {} test records",
            tr.len(),
            te.len()
        );
    }
    Ok(())
}
