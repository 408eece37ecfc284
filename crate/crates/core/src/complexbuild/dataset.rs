//! JSON-Lines interchange: one complex per line.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    build_complex_graph, ComplexGraph, LabelKind, LabelValue, SampleMeta,
    DEFAULT_INTERACTION_CUTOFF,
};
use crate::chemio::{
    Atom, AtomTraits, Bond, BondOrder, Element, Hybridization, MolecularStructure, MoleculeKind,
    PerceivedLigand,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset i/o: {0}")]
    Io(#[from] io::Error),
    #[error("dataset line {line}: {msg}")]
    Schema { line: usize, msg: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelJson {
    kind: String,
    value: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LigandJson {
    elements: Vec<Element>,
    pos: Vec<[f64; 3]>,
    bonds: Vec<(usize, usize, u8)>,
    formal_charge: Vec<i32>,
    aromatic: Vec<bool>,
    in_ring: Vec<bool>,
    degree: Vec<usize>,
    num_h: Vec<usize>,
    implicit_valence: Vec<usize>,
    hybridization: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProteinJson {
    elements: Vec<Element>,
    residues: Vec<String>,
    pos: Vec<[f64; 3]>,
    bonds: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordJson {
    id: String,
    target: String,
    pose_rank: u32,
    label: LabelJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rmsd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interaction_cutoff: Option<f64>,
    ligand: LigandJson,
    protein: ProteinJson,
}

fn record_of(g: &ComplexGraph) -> RecordJson {
    let lig = &g.ligand;
    let atoms = &lig.base.atoms;
    RecordJson {
        id: g.meta.sample_id.clone(),
        target: g.meta.target_id.clone(),
        pose_rank: g.meta.pose_rank,
        label: LabelJson {
            kind: g.label.kind.as_str().to_string(),
            value: g.label.value,
        },
        rmsd: g.meta.rmsd,
        interaction_cutoff: Some(g.interaction_cutoff),
        ligand: LigandJson {
            elements: atoms.iter().map(|a| a.element).collect(),
            pos: atoms.iter().map(|a| a.position).collect(),
            bonds: lig
                .base
                .bonds
                .iter()
                .map(|b| (b.i, b.j, b.order.code()))
                .collect(),
            formal_charge: atoms.iter().map(|a| a.formal_charge).collect(),
            aromatic: lig.traits.iter().map(|t| t.aromatic).collect(),
            in_ring: lig.traits.iter().map(|t| t.in_ring).collect(),
            degree: lig.traits.iter().map(|t| t.degree).collect(),
            num_h: lig.traits.iter().map(|t| t.num_hydrogens).collect(),
            implicit_valence: lig.traits.iter().map(|t| t.implicit_valence).collect(),
            hybridization: lig
                .traits
                .iter()
                .map(|t| t.hybridization.as_str().to_string())
                .collect(),
        },
        protein: ProteinJson {
            elements: g.pocket.atoms.iter().map(|a| a.element).collect(),
            residues: g
                .pocket
                .atoms
                .iter()
                .map(|a| a.residue_name.clone())
                .collect(),
            pos: g.pocket.atoms.iter().map(|a| a.position).collect(),
            bonds: g.pocket.bonds.iter().map(|b| (b.i, b.j)).collect(),
        },
    }
}

/// Serializes one graph as a single JSON line (no trailing newline).
pub fn to_json_line(g: &ComplexGraph) -> String {
    serde_json::to_string(&record_of(g)).expect("record serializes")
}

fn graph_of(r: RecordJson, line: usize) -> Result<ComplexGraph, DatasetError> {
    let err = |msg: String| DatasetError::Schema { line, msg };
    let kind = LabelKind::parse(&r.label.kind)
        .ok_or_else(|| err(format!("unknown label kind '{}'", r.label.kind)))?;
    let label = LabelValue::new(kind, r.label.value).map_err(|e| err(e.to_string()))?;

    let l = &r.ligand;
    let n = l.elements.len();
    let lens = [
        ("pos", l.pos.len()),
        ("formal_charge", l.formal_charge.len()),
        ("aromatic", l.aromatic.len()),
        ("in_ring", l.in_ring.len()),
        ("degree", l.degree.len()),
        ("num_h", l.num_h.len()),
        ("implicit_valence", l.implicit_valence.len()),
        ("hybridization", l.hybridization.len()),
    ];
    if let Some((name, len)) = lens.iter().find(|(_, len)| *len != n) {
        return Err(err(format!(
            "ligand.{name} has {len} entries, expected {n}"
        )));
    }
    let atoms: Vec<Atom> = (0..n)
        .map(|i| {
            let mut a = Atom::new(l.elements[i], l.pos[i]);
            a.formal_charge = l.formal_charge[i];
            a
        })
        .collect();
    let bonds = l
        .bonds
        .iter()
        .map(|&(i, j, code)| {
            BondOrder::from_code(code)
                .map(|o| Bond::new(i, j, o))
                .ok_or_else(|| err(format!("ligand bond order {code}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let base = MolecularStructure::new(r.id.clone(), MoleculeKind::Ligand, atoms, bonds)
        .map_err(|e| err(format!("ligand: {e}")))?;
    let traits = (0..n)
        .map(|i| {
            let hybridization = Hybridization::parse(&l.hybridization[i])
                .ok_or_else(|| err(format!("hybridization '{}'", l.hybridization[i])))?;
            Ok(AtomTraits {
                degree: l.degree[i],
                num_hydrogens: l.num_h[i],
                implicit_valence: l.implicit_valence[i],
                aromatic: l.aromatic[i],
                in_ring: l.in_ring[i],
                hybridization,
            })
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    let ligand = PerceivedLigand { base, traits };

    let p = &r.protein;
    if p.residues.len() != p.elements.len() || p.pos.len() != p.elements.len() {
        return Err(err(format!(
            "protein arrays disagree: {} elements, {} residues, {} positions",
            p.elements.len(),
            p.residues.len(),
            p.pos.len()
        )));
    }
    let patoms = (0..p.elements.len())
        .map(|i| {
            let mut a = Atom::new(p.elements[i], p.pos[i]);
            a.residue_name = p.residues[i].clone();
            a
        })
        .collect();
    let pbonds = p
        .bonds
        .iter()
        .map(|&(i, j)| Bond::new(i, j, BondOrder::Single))
        .collect();
    let pocket = MolecularStructure::new(r.target.clone(), MoleculeKind::Protein, patoms, pbonds)
        .map_err(|e| err(format!("protein: {e}")))?;

    let meta = SampleMeta {
        sample_id: r.id,
        target_id: r.target,
        pose_rank: r.pose_rank,
        rmsd: r.rmsd,
    };
    let cutoff = r.interaction_cutoff.unwrap_or(DEFAULT_INTERACTION_CUTOFF);
    build_complex_graph(&pocket, &ligand, label, meta, cutoff).map_err(|e| err(e.to_string()))
}

/// Parses one JSON line; `line` is used in error messages.
pub fn from_json_line(text: &str, line: usize) -> Result<ComplexGraph, DatasetError> {
    let rec: RecordJson = serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        line,
        msg: e.to_string(),
    })?;
    graph_of(rec, line)
}

pub fn read_dataset_from(reader: impl Read) -> Result<Vec<ComplexGraph>, DatasetError> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(from_json_line(&line, k + 1)?);
    }
    Ok(out)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<ComplexGraph>, DatasetError> {
    read_dataset_from(File::open(path)?)
}

pub fn write_dataset_to<W: Write>(writer: W, graphs: &[ComplexGraph]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(writer);
    for g in graphs {
        w.write_all(to_json_line(g).as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: impl AsRef<Path>, graphs: &[ComplexGraph]) -> Result<(), DatasetError> {
    write_dataset_to(File::create(path)?, graphs)
}
