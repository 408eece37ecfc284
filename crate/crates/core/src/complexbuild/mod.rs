//! Protein-ligand complex graphs: pocket cropping, pose labeling, label
//! arithmetic, graph assembly and train/test splits.

mod dataset;

pub use dataset::{
    from_json_line, read_dataset, read_dataset_from, to_json_line, write_dataset, write_dataset_to,
    DatasetError,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemio::{distance, ChemError, MolecularStructure, PerceivedLigand};
use crate::featurize::{featurize_ligand, featurize_protein};
use crate::tensor::Tensor;

pub const DEFAULT_POCKET_CUTOFF: f64 = 8.0;
pub const DEFAULT_INTERACTION_CUTOFF: f64 = 5.0;
/// Poses at or below this RMSD (Å) are labeled active.
pub const ACTIVE_RMSD: f64 = 2.0;
/// Poses at or above this RMSD (Å) are labeled inactive.
pub const INACTIVE_RMSD: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error("sample '{sample_id}': no protein atom within {cutoff} Å of the ligand")]
    EmptyPocket { sample_id: String, cutoff: f64 },
    #[error("heavy-atom count mismatch: {left} vs {right}")]
    AtomCountMismatch { left: usize, right: usize },
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("invalid {kind:?} label value {value}")]
    InvalidLabel { kind: LabelKind, value: f64 },
    #[error("split needs at least 2 distinct ids, got {0}")]
    TooFewIds(usize),
    #[error("split ratio must lie in (0, 1), got {0}")]
    BadRatio(f64),
    #[error(transparent)]
    Chem(#[from] ChemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    /// Binary activity, 0 or 1.
    Activity,
    /// −log10 of Ki or Kd.
    Affinity,
    /// −log10 of IC50 (molar).
    Pic50,
    /// Raw docking score.
    Docking,
}

impl LabelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelKind::Activity => "activity",
            LabelKind::Affinity => "affinity",
            LabelKind::Pic50 => "pic50",
            LabelKind::Docking => "docking",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "activity" => Some(LabelKind::Activity),
            "affinity" => Some(LabelKind::Affinity),
            "pic50" => Some(LabelKind::Pic50),
            "docking" => Some(LabelKind::Docking),
            _ => None,
        }
    }

    pub fn is_classification(self) -> bool {
        self == LabelKind::Activity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelValue {
    pub kind: LabelKind,
    pub value: f64,
}

impl LabelValue {
    pub fn new(kind: LabelKind, value: f64) -> Result<Self, ComplexError> {
        let ok = value.is_finite() && (kind != LabelKind::Activity || value == 0.0 || value == 1.0);
        if !ok {
            return Err(ComplexError::InvalidLabel { kind, value });
        }
        Ok(Self { kind, value })
    }

    pub fn active() -> Self {
        Self {
            kind: LabelKind::Activity,
            value: 1.0,
        }
    }

    pub fn inactive() -> Self {
        Self {
            kind: LabelKind::Activity,
            value: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    Ki,
    Kd,
}

fn neg_log10(what: &'static str, value: f64) -> Result<f64, ComplexError> {
    if value.is_nan() || value <= 0.0 || value.is_infinite() {
        return Err(ComplexError::NonPositive { what, value });
    }
    Ok(-value.log10())
}

/// Experimental binding affinity: −log10 of the reported Ki or Kd (molar).
pub fn affinity_label(kind: MeasureKind, value: f64) -> Result<LabelValue, ComplexError> {
    let what = match kind {
        MeasureKind::Ki => "Ki",
        MeasureKind::Kd => "Kd",
    };
    LabelValue::new(LabelKind::Affinity, neg_log10(what, value)?)
}

/// pIC50 = −log10(IC50 in molar).
pub fn pic50_label(ic50: f64) -> Result<LabelValue, ComplexError> {
    LabelValue::new(LabelKind::Pic50, neg_log10("IC50", ic50)?)
}

/// Mean pIC50 over repeated IC50 measurements (averaged in log space).
pub fn mean_pic50_label(ic50s: &[f64]) -> Result<LabelValue, ComplexError> {
    if ic50s.is_empty() {
        return Err(ComplexError::NonPositive {
            what: "measurement count",
            value: 0.0,
        });
    }
    let total = ic50s
        .iter()
        .map(|&v| neg_log10("IC50", v))
        .sum::<Result<f64, _>>()?;
    LabelValue::new(LabelKind::Pic50, total / ic50s.len() as f64)
}

/// Active at ≤ 2 Å, inactive at ≥ 4 Å, `None` (drop the pose) in between.
pub fn label_pose_by_rmsd(rmsd: f64) -> Option<LabelValue> {
    if rmsd <= ACTIVE_RMSD {
        Some(LabelValue::active())
    } else if rmsd >= INACTIVE_RMSD {
        Some(LabelValue::inactive())
    } else {
        None
    }
}

/// Root-mean-square distance between matching heavy atoms of two poses in
/// a shared frame (no superposition).
pub fn heavy_atom_rmsd(
    pose_a: &MolecularStructure,
    pose_b: &MolecularStructure,
) -> Result<f64, ComplexError> {
    let a: Vec<_> = pose_a.heavy_atoms().collect();
    let b: Vec<_> = pose_b.heavy_atoms().collect();
    if a.len() != b.len() || a.is_empty() {
        return Err(ComplexError::AtomCountMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let ss: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let d = x.distance(y);
            d * d
        })
        .sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// Protein atoms within `cutoff` Å of any ligand atom, in original order.
pub fn crop_pocket(
    protein: &MolecularStructure,
    ligand: &MolecularStructure,
    cutoff: f64,
) -> Result<MolecularStructure, ComplexError> {
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(ComplexError::NonPositive {
            what: "pocket cutoff",
            value: cutoff,
        });
    }
    let mut remap = vec![usize::MAX; protein.atoms.len()];
    let mut atoms = Vec::new();
    for (i, pa) in protein.atoms.iter().enumerate() {
        let near = ligand
            .atoms
            .iter()
            .any(|la| distance(&pa.position, &la.position) <= cutoff);
        if near {
            remap[i] = atoms.len();
            atoms.push(pa.clone());
        }
    }
    if atoms.is_empty() {
        return Err(ComplexError::EmptyPocket {
            sample_id: ligand.source_id.clone(),
            cutoff,
        });
    }
    let bonds = protein
        .bonds
        .iter()
        .filter(|b| remap[b.i] != usize::MAX && remap[b.j] != usize::MAX)
        .map(|b| crate::chemio::Bond::new(remap[b.i], remap[b.j], b.order))
        .collect();
    Ok(MolecularStructure {
        atoms,
        bonds,
        source_id: protein.source_id.clone(),
        kind: protein.kind,
    })
}

/// One protein-ligand heavy-atom pair inside the interaction cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub protein: usize,
    pub ligand: usize,
    /// Å, in (0, cutoff].
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub sample_id: String,
    pub target_id: String,
    pub pose_rank: u32,
    pub rmsd: Option<f64>,
}

impl SampleMeta {
    pub fn new(sample_id: impl Into<String>, target_id: impl Into<String>, pose_rank: u32) -> Self {
        Self {
            sample_id: sample_id.into(),
            target_id: target_id.into(),
            pose_rank,
            rmsd: None,
        }
    }
}

/// A labeled, featurized protein-pocket/ligand pair.
///
/// Node order in joined matrices is pocket atoms first, then ligand atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGraph {
    pub meta: SampleMeta,
    pub label: LabelValue,
    pub interaction_cutoff: f64,
    pub pocket: MolecularStructure,
    pub ligand: PerceivedLigand,
    pub ligand_adj: Tensor<f64>,
    pub protein_adj: Tensor<f64>,
    pub interactions: Vec<Interaction>,
    pub ligand_features: Tensor<f64>,
    pub protein_features: Tensor<f64>,
}

fn bond_adjacency(mol: &MolecularStructure) -> Tensor<f64> {
    let mut a = Tensor::identity(mol.atoms.len());
    for b in &mol.bonds {
        a.set(b.i, b.j, 1.0);
        a.set(b.j, b.i, 1.0);
    }
    a
}

impl ComplexGraph {
    pub fn n_ligand(&self) -> usize {
        self.ligand.len()
    }

    pub fn n_protein(&self) -> usize {
        self.pocket.atoms.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_ligand() + self.n_protein()
    }

    /// Block-diagonal covalent adjacency of the joined graph; the
    /// protein-ligand block is zero.
    pub fn covalent_adj(&self) -> Tensor<f64> {
        let np = self.n_protein();
        let n = self.n_nodes();
        Tensor::from_fn(n, n, |i, j| match (i < np, j < np) {
            (true, true) => self.protein_adj.get(i, j),
            (false, false) => self.ligand_adj.get(i - np, j - np),
            _ => 0.0,
        })
    }

    /// Joined-graph (row, col) positions of each interaction, both
    /// orientations, in interaction order.
    pub fn interaction_positions(&self) -> Vec<(usize, usize)> {
        let np = self.n_protein();
        self.interactions
            .iter()
            .flat_map(|it| [(it.protein, np + it.ligand), (np + it.ligand, it.protein)])
            .collect()
    }
}

/// Assembles adjacency, interaction pairs and node features.
///
/// The pocket should already carry inferred bonds. Copies of both
/// structures are renamed after the sample and target ids.
pub fn build_complex_graph(
    pocket: &MolecularStructure,
    ligand: &PerceivedLigand,
    label: LabelValue,
    meta: SampleMeta,
    interaction_cutoff: f64,
) -> Result<ComplexGraph, ComplexError> {
    if pocket.atoms.is_empty() {
        return Err(ComplexError::EmptyPocket {
            sample_id: meta.sample_id,
            cutoff: interaction_cutoff,
        });
    }
    if ligand.is_empty() {
        return Err(ChemError::EmptyStructure {
            source_id: meta.sample_id,
        }
        .into());
    }
    if interaction_cutoff.is_nan() || interaction_cutoff <= 0.0 {
        return Err(ComplexError::NonPositive {
            what: "interaction cutoff",
            value: interaction_cutoff,
        });
    }
    let mut interactions = Vec::new();
    for (p, pa) in pocket.atoms.iter().enumerate() {
        if !pa.is_heavy() {
            continue;
        }
        for (l, la) in ligand.base.atoms.iter().enumerate() {
            if !la.is_heavy() {
                continue;
            }
            let d = pa.distance(la);
            if d > 0.0 && d <= interaction_cutoff {
                interactions.push(Interaction {
                    protein: p,
                    ligand: l,
                    distance: d,
                });
            }
        }
    }
    let mut pocket = pocket.clone();
    pocket.source_id = meta.target_id.clone();
    let mut ligand = ligand.clone();
    ligand.base.source_id = meta.sample_id.clone();
    Ok(ComplexGraph {
        ligand_adj: bond_adjacency(&ligand.base),
        protein_adj: bond_adjacency(&pocket),
        ligand_features: featurize_ligand(&ligand),
        protein_features: featurize_protein(&pocket),
        interactions,
        label,
        interaction_cutoff,
        meta,
        pocket,
        ligand,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub seed: u64,
}

/// Seeded shuffle of the distinct ids; the first round(ratio·n) go to
/// training (clamped so both sides are non-empty).
pub fn split_dataset(ids: &[String], ratio: f64, seed: u64) -> Result<DatasetSplit, ComplexError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(ComplexError::BadRatio(ratio));
    }
    let mut seen = std::collections::HashSet::new();
    let mut unique: Vec<String> = ids.iter().filter(|id| seen.insert(*id)).cloned().collect();
    let n = unique.len();
    if n < 2 {
        return Err(ComplexError::TooFewIds(n));
    }
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let test_ids = unique.split_off(n_train);
    Ok(DatasetSplit {
        train_ids: unique,
        test_ids,
        seed,
    })
}

/// Downsamples the majority activity class to the minority count.
/// Order of the survivors follows the input order.
pub fn balance_classes(graphs: Vec<ComplexGraph>, seed: u64) -> Vec<ComplexGraph> {
    let (pos, neg): (Vec<usize>, Vec<usize>) =
        (0..graphs.len()).partition(|&i| graphs[i].label.value >= 0.5);
    let keep_n = pos.len().min(neg.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = vec![false; graphs.len()];
    for mut group in [pos, neg] {
        group.shuffle(&mut rng);
        for &i in group.iter().take(keep_n) {
            keep[i] = true;
        }
    }
    graphs
        .into_iter()
        .zip(keep)
        .filter_map(|(g, k)| k.then_some(g))
        .collect()
}
