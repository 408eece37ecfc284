use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gatbind::chemio::{write_pdb, write_sdf, MolecularStructure};
use gatbind::complexbuild::{read_dataset, write_dataset};
use gatbind::metrics::read_predictions;
use gatbind::synthetic::{classification_set, SyntheticComplex, SyntheticConfig};
use tempfile::TempDir;

fn gatbind(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatbind"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = gatbind(args);
    assert!(
        out.status.success(),
        "gatbind {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn shifted(mol: &MolecularStructure, title: &str, dx: f64) -> MolecularStructure {
    let mut m = mol.clone();
    m.source_id = title.into();
    for a in &mut m.atoms {
        a.position[0] += dx;
    }
    m
}

/// Crystal ligand plus shifted copies, one per RMSD class.
struct Fixture {
    dir: TempDir,
    protein: PathBuf,
    crystal: PathBuf,
    poses: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let c = SyntheticComplex::generate(&SyntheticConfig::default(), 0, true);
    let protein = dir.path().join("tgt.pdb");
    fs::write(&protein, write_pdb(&c.protein)).unwrap();
    let crystal = dir.path().join("crystal.sdf");
    fs::write(&crystal, write_sdf(&[shifted(&c.ligand, "xtal", 0.0)])).unwrap();
    let poses = dir.path().join("poses.sdf");
    let p: Vec<_> = [1.0, 3.0, 5.0]
        .iter()
        .map(|&d| shifted(&c.ligand, "lig", d))
        .collect();
    fs::write(&poses, write_sdf(&p)).unwrap();
    Fixture {
        dir,
        protein,
        crystal,
        poses,
    }
}

#[test]
fn prepare_labels_poses_by_rmsd_and_logs_skips() {
    let f = fixture();
    let out = f.dir.path().join("prep");
    ok(&[
        "prepare",
        "--protein",
        s(&f.protein),
        "--ligands",
        s(&f.poses),
        "--crystal",
        s(&f.crystal),
        "--out",
        s(&out),
    ]);
    let ds = read_dataset(out.join("dataset.jsonl")).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds[0].meta.sample_id, "tgt:lig");
    assert_eq!((ds[0].meta.pose_rank, ds[0].label.value), (1, 1.0));
    assert_eq!((ds[1].meta.pose_rank, ds[1].label.value), (3, 0.0));
    assert!((ds[0].meta.rmsd.unwrap() - 1.0).abs() < 1e-9);
    let skipped = fs::read_to_string(out.join("skipped.csv")).unwrap();
    let lines: Vec<&str> = skipped.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("tgt:lig,2,ambiguous_rmsd"));
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.starts_with("command=prepare\n"));
    assert!(echo.contains("cutoff_pocket=8\n"));
}

#[test]
fn prepare_skips_ligands_missing_from_the_label_table() {
    let f = fixture();
    let labels = f.dir.path().join("labels.csv");
    fs::write(&labels, "id,measure,value\nother,ic50,1e-6\n").unwrap();
    let out = f.dir.path().join("prep");
    let o = gatbind(&[
        "prepare",
        "--protein",
        s(&f.protein),
        "--ligands",
        s(&f.poses),
        "--labels",
        s(&labels),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let skipped = fs::read_to_string(out.join("skipped.csv")).unwrap();
    assert_eq!(skipped.matches("missing_label").count(), 3);

    fs::write(&labels, "id,measure,value\nlig,ic50,1e-6\n").unwrap();
    ok(&[
        "prepare",
        "--protein",
        s(&f.protein),
        "--ligands",
        s(&f.poses),
        "--labels",
        s(&labels),
        "--crystal",
        s(&f.crystal),
        "--out",
        s(&out),
    ]);
    let ds = read_dataset(out.join("dataset.jsonl")).unwrap();
    assert_eq!(ds.len(), 3);
    assert!(ds
        .iter()
        .all(|g| g.label.value == 6.0 && g.meta.rmsd.is_some()));
}

#[test]
fn prepare_balance_downsamples_the_majority_class() {
    let dir = TempDir::new().unwrap();
    let c = SyntheticComplex::generate(&SyntheticConfig::default(), 0, true);
    let protein = dir.path().join("tgt.pdb");
    fs::write(&protein, write_pdb(&c.protein)).unwrap();
    let mut mols = Vec::new();
    let mut table = String::from("id,measure,value\n");
    for k in 0..12 {
        let t = format!("m{k}");
        mols.push(shifted(&c.ligand, &t, 0.0));
        table.push_str(&format!("{t},activity,{}\n", u8::from(k < 3)));
    }
    let ligs = dir.path().join("ligs.sdf");
    fs::write(&ligs, write_sdf(&mols)).unwrap();
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, table).unwrap();
    let out = dir.path().join("prep");
    ok(&[
        "prepare",
        "--protein",
        s(&protein),
        "--ligands",
        s(&ligs),
        "--labels",
        s(&labels),
        "--balance",
        "--split",
        "0.5",
        "--out",
        s(&out),
    ]);
    let ds = read_dataset(out.join("dataset.jsonl")).unwrap();
    assert_eq!(ds.len(), 6);
    assert_eq!(ds.iter().filter(|g| g.label.value == 1.0).count(), 3);
    let tr = read_dataset(out.join("train.jsonl")).unwrap();
    let te = read_dataset(out.join("test.jsonl")).unwrap();
    assert_eq!(tr.len() + te.len(), 6);
    assert!(tr
        .iter()
        .all(|a| te.iter().all(|b| a.meta.sample_id != b.meta.sample_id)));
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let f = fixture();
    let out = f.dir.path().join("x");
    assert_eq!(gatbind(&["train"]).status.code(), Some(2));
    assert_eq!(gatbind(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(gatbind(&["--help"]).status.code(), Some(0));
    let missing = f.dir.path().join("nope.jsonl");
    let o = gatbind(&["train", "--data", s(&missing), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.jsonl"));
    let garbage = f.dir.path().join("bad.jsonl");
    fs::write(&garbage, "{not json}\n").unwrap();
    assert_eq!(
        gatbind(&["train", "--data", s(&garbage), "--out", s(&out)])
            .status
            .code(),
        Some(3)
    );
    let o = gatbind(&[
        "prepare",
        "--protein",
        s(&f.protein),
        "--ligands",
        s(&f.poses),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

fn small_dataset(dir: &Path) -> PathBuf {
    let p = dir.join("data.jsonl");
    write_dataset(&p, &classification_set(&SyntheticConfig::default(), 4, 4)).unwrap();
    p
}

#[test]
fn train_writes_log_checkpoint_and_echo() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--epochs",
        "3",
    ]);
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(log.starts_with("# lr=0.0001 blocks=2 dim=70 epochs=3 batch=32"));
    assert_eq!(log.lines().count(), 5);
    assert!(out.join("checkpoint/manifest.json").is_file());
    assert!(out.join("checkpoint/weights.bin").is_file());
    let echo = fs::read_to_string(out.join("config.txt")).unwrap();
    assert!(echo.contains("lr=0.0001\n") && echo.contains("hidden=128,64\n"));
}

#[test]
fn config_file_and_flags_layer_over_defaults() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let cfg = dir.path().join("train.cfg");
    fs::write(
        &cfg,
        "# small run\nlr = 0.001\ndim = 8\nhidden = 4\nepochs = 2\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
        "--dim",
        "6",
    ]);
    let log = fs::read_to_string(out.join("train_log.csv")).unwrap();
    assert!(
        log.starts_with("# lr=0.001 blocks=2 dim=6 epochs=2"),
        "{log}"
    );
    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    let o = gatbind(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&out),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn resume_matches_an_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let common = [
        "--dim",
        "8",
        "--hidden",
        "6",
        "--lr",
        "0.001",
        "--batch-size",
        "3",
    ];
    let full = dir.path().join("full");
    let mut a = vec![
        "train",
        "--data",
        s(&data),
        "--out",
        s(&full),
        "--epochs",
        "4",
    ];
    a.extend(common);
    ok(&a);
    let half = dir.path().join("half");
    let mut a = vec![
        "train",
        "--data",
        s(&data),
        "--out",
        s(&half),
        "--epochs",
        "2",
    ];
    a.extend(common);
    ok(&a);
    let rest = dir.path().join("rest");
    let ck = half.join("checkpoint");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&rest),
        "--resume",
        s(&ck),
        "--epochs",
        "4",
    ]);
    assert_eq!(
        fs::read(full.join("checkpoint/weights.bin")).unwrap(),
        fs::read(rest.join("checkpoint/weights.bin")).unwrap()
    );
}

#[test]
fn predict_evaluate_and_topn_chain() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--epochs",
        "30",
        "--lr",
        "0.001",
        "--dim",
        "16",
        "--hidden",
        "8",
    ]);
    let log = fs::read_to_string(run.join("train_log.csv")).unwrap();
    let last_acc: f64 = log
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(2)
        .unwrap()
        .parse()
        .unwrap();

    let pred = dir.path().join("pred");
    let ck = run.join("checkpoint");
    ok(&[
        "predict",
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&pred),
        "--head",
        "cls",
    ]);
    let csv = pred.join("predictions.csv");
    let records = read_predictions(fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(records.len(), 8);
    assert!(records.iter().all(|r| (0.0..=1.0).contains(&r.score)));
    assert_eq!(records.iter().filter(|r| r.warning.is_some()).count(), 4);

    let ev = dir.path().join("eval");
    let o = ok(&[
        "evaluate",
        "--predictions",
        s(&csv),
        "--head",
        "cls",
        "--out",
        s(&ev),
    ]);
    let metrics = fs::read_to_string(ev.join("metrics.csv")).unwrap();
    let acc: f64 = metrics
        .lines()
        .find_map(|l| l.strip_prefix("accuracy,"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(acc, last_acc);
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy"));

    let o = gatbind(&[
        "predict",
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&pred),
        "--head",
        "reg",
    ]);
    assert_eq!(o.status.code(), Some(3));

    let tn = dir.path().join("topn");
    let o = gatbind(&[
        "topn",
        "--predictions",
        s(&csv),
        "--n",
        "1,2",
        "--out",
        s(&tn),
    ]);
    // synthetic records carry no RMSD
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn topn_on_prepared_poses() {
    let f = fixture();
    let prep = f.dir.path().join("prep");
    let labels = f.dir.path().join("labels.csv");
    fs::write(&labels, "id,measure,value\nlig,activity,1\n").unwrap();
    ok(&[
        "prepare",
        "--protein",
        s(&f.protein),
        "--ligands",
        s(&f.poses),
        "--crystal",
        s(&f.crystal),
        "--labels",
        s(&labels),
        "--out",
        s(&prep),
    ]);
    let run = f.dir.path().join("run");
    let data = prep.join("dataset.jsonl");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--epochs",
        "1",
        "--dim",
        "4",
        "--hidden",
        "",
    ]);
    let pred = f.dir.path().join("pred");
    let ck = run.join("checkpoint");
    ok(&[
        "predict",
        "--checkpoint",
        s(&ck),
        "--data",
        s(&data),
        "--out",
        s(&pred),
    ]);
    let csv = pred.join("predictions.csv");
    let tn = f.dir.path().join("topn");
    ok(&[
        "topn",
        "--predictions",
        s(&csv),
        "--n",
        "1,3",
        "--out",
        s(&tn),
    ]);
    let rows = fs::read_to_string(tn.join("topn.csv")).unwrap();
    let lines: Vec<&str> = rows.lines().collect();
    assert_eq!(lines[0], "n,hits,groups,percent");
    assert_eq!(lines[2], "3,1,1,100");
}

#[test]
fn predict_on_an_empty_dataset_writes_a_header() {
    let dir = TempDir::new().unwrap();
    let data = small_dataset(dir.path());
    let run = dir.path().join("run");
    ok(&[
        "train",
        "--data",
        s(&data),
        "--out",
        s(&run),
        "--epochs",
        "1",
        "--dim",
        "4",
    ]);
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let pred = dir.path().join("pred");
    ok(&[
        "predict",
        "--checkpoint",
        s(&run.join("checkpoint")),
        "--data",
        s(&empty),
        "--out",
        s(&pred),
    ]);
    let csv = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    assert_eq!(
        csv,
        "sample_id,target_id,pose_rank,score,label,rmsd,warning\n"
    );
}
