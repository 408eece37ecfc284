//! Fixed-width binary node features for ligand and protein atoms.
//!
//! Ligand rows are the concatenation of one-hot groups for element,
//! heavy degree, hydrogen count, implicit valence, hybridization and
//! formal charge, followed by the aromatic and ring flags. Protein rows
//! are element one-hot followed by residue one-hot. Counts past the last
//! bin clamp into it.

use crate::chemio::{Element, Hybridization, MolecularStructure, PerceivedLigand};
use crate::tensor::Tensor;

/// Embedded in checkpoints; inference refuses a mismatch.
pub const FEATURE_SCHEMA_VERSION: &str = "atomfeat-1/L41/P33";

pub const ELEMENT_VOCAB: [Element; 11] = [
    Element::C,
    Element::N,
    Element::O,
    Element::S,
    Element::F,
    Element::P,
    Element::Cl,
    Element::Br,
    Element::I,
    Element::B,
    Element::H,
];

pub const RESIDUE_VOCAB: [&str; 20] = [
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE", "LEU", "LYS", "MET",
    "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
];

pub const ELEMENT_BINS: usize = ELEMENT_VOCAB.len() + 1;
pub const RESIDUE_BINS: usize = RESIDUE_VOCAB.len() + 1;
pub const DEGREE_BINS: usize = 6;
pub const NUM_H_BINS: usize = 5;
pub const IMPLICIT_VALENCE_BINS: usize = 7;
pub const HYBRIDIZATION_BINS: usize = 4;
pub const CHARGE_BINS: usize = 5;

/// Width of one ligand feature row.
pub const LIGAND_FEATURES: usize = ELEMENT_BINS
    + DEGREE_BINS
    + NUM_H_BINS
    + IMPLICIT_VALENCE_BINS
    + HYBRIDIZATION_BINS
    + CHARGE_BINS
    + 2;
/// Width of one protein feature row.
pub const PROTEIN_FEATURES: usize = ELEMENT_BINS + RESIDUE_BINS;

const _: () = assert!(LIGAND_FEATURES == 41);
const _: () = assert!(PROTEIN_FEATURES == 33);

/// Column offsets of each ligand group, in row order.
pub mod ligand_offsets {
    use super::*;
    pub const ELEMENT: usize = 0;
    pub const DEGREE: usize = ELEMENT + ELEMENT_BINS;
    pub const NUM_H: usize = DEGREE + DEGREE_BINS;
    pub const IMPLICIT_VALENCE: usize = NUM_H + NUM_H_BINS;
    pub const HYBRIDIZATION: usize = IMPLICIT_VALENCE + IMPLICIT_VALENCE_BINS;
    pub const CHARGE: usize = HYBRIDIZATION + HYBRIDIZATION_BINS;
    pub const AROMATIC: usize = CHARGE + CHARGE_BINS;
    pub const IN_RING: usize = AROMATIC + 1;
}

pub fn element_bin(e: Element) -> usize {
    ELEMENT_VOCAB
        .iter()
        .position(|&v| v == e)
        .unwrap_or(ELEMENT_VOCAB.len())
}

pub fn residue_bin(name: &str) -> usize {
    RESIDUE_VOCAB
        .iter()
        .position(|&r| r.eq_ignore_ascii_case(name.trim()))
        .unwrap_or(RESIDUE_VOCAB.len())
}

fn hybridization_bin(h: Hybridization) -> usize {
    match h {
        Hybridization::SP => 0,
        Hybridization::SP2 => 1,
        Hybridization::SP3 => 2,
        Hybridization::Other => 3,
    }
}

fn charge_bin(q: i32) -> usize {
    (q.clamp(-2, 2) + 2) as usize
}

pub fn featurize_ligand(lig: &PerceivedLigand) -> Tensor<f64> {
    use ligand_offsets::*;
    let mut m = Tensor::zeros(lig.len(), LIGAND_FEATURES);
    for (i, (atom, t)) in lig.base.atoms.iter().zip(&lig.traits).enumerate() {
        m.set(i, ELEMENT + element_bin(atom.element), 1.0);
        m.set(i, DEGREE + t.degree.min(DEGREE_BINS - 1), 1.0);
        m.set(i, NUM_H + t.num_hydrogens.min(NUM_H_BINS - 1), 1.0);
        m.set(
            i,
            IMPLICIT_VALENCE + t.implicit_valence.min(IMPLICIT_VALENCE_BINS - 1),
            1.0,
        );
        m.set(i, HYBRIDIZATION + hybridization_bin(t.hybridization), 1.0);
        m.set(i, CHARGE + charge_bin(atom.formal_charge), 1.0);
        if t.aromatic {
            m.set(i, AROMATIC, 1.0);
        }
        if t.in_ring {
            m.set(i, IN_RING, 1.0);
        }
    }
    m
}

pub fn featurize_protein(pocket: &MolecularStructure) -> Tensor<f64> {
    let mut m = Tensor::zeros(pocket.atoms.len(), PROTEIN_FEATURES);
    for (i, atom) in pocket.atoms.iter().enumerate() {
        m.set(i, element_bin(atom.element), 1.0);
        m.set(i, ELEMENT_BINS + residue_bin(&atom.residue_name), 1.0);
    }
    m
}
