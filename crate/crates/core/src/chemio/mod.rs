//! Molecular structure input from PDB and V2000 SDF files, plus the
//! chemical perception the featurizer needs.

mod element;
mod pdb;
mod perceive;
mod sdf;

pub use element::Element;
pub use pdb::{parse_pdb, write_pdb};
pub use perceive::{
    infer_protein_bonds, perceive_ligand, ring_atoms, AtomTraits, Hybridization, PerceivedLigand,
    PROTEIN_BOND_CUTOFF, SULFUR_BOND_CUTOFF,
};
pub use sdf::{parse_sdf, write_sdf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_FORMAL_CHARGE: i32 = -4;
pub const MAX_FORMAL_CHARGE: i32 = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChemError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("structure '{source_id}' has no atoms after filtering")]
    EmptyStructure { source_id: String },
    #[error("invalid bond ({i}, {j}) for {n_atoms} atoms: {msg}")]
    InvalidBond {
        i: usize,
        j: usize,
        n_atoms: usize,
        msg: &'static str,
    },
    #[error("atom {atom}: formal charge {charge} outside [-4, 4]")]
    ChargeOutOfRange { atom: usize, charge: i32 },
}

impl ChemError {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        ChemError::Parse {
            line,
            msg: msg.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    /// Cartesian position in Å.
    pub position: [f64; 3],
    pub formal_charge: i32,
    /// Three-letter residue code; empty for ligand atoms.
    pub residue_name: String,
}

impl Atom {
    pub fn new(element: Element, position: [f64; 3]) -> Self {
        Self {
            element,
            position,
            formal_charge: 0,
            residue_name: String::new(),
        }
    }

    pub fn is_heavy(&self) -> bool {
        !self.element.is_hydrogen()
    }

    pub fn distance(&self, other: &Atom) -> f64 {
        distance(&self.position, &other.position)
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// MDL bond type code (1, 2, 3, 4).
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            4 => Some(BondOrder::Aromatic),
            _ => None,
        }
    }

    /// Valence contribution; aromatic bonds count 1.5.
    pub fn valence(self) -> f64 {
        match self {
            BondOrder::Single => 1.0,
            BondOrder::Double => 2.0,
            BondOrder::Triple => 3.0,
            BondOrder::Aromatic => 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(i: usize, j: usize, order: BondOrder) -> Self {
        Self { i, j, order }
    }

    /// The partner of `atom` in this bond, if `atom` is an endpoint.
    pub fn other(&self, atom: usize) -> Option<usize> {
        if self.i == atom {
            Some(self.j)
        } else if self.j == atom {
            Some(self.i)
        } else {
            None
        }
    }

    fn key(&self) -> (usize, usize) {
        (self.i.min(self.j), self.i.max(self.j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoleculeKind {
    Protein,
    Ligand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularStructure {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    /// File stem, record title, or PDB id.
    pub source_id: String,
    pub kind: MoleculeKind,
}

impl MolecularStructure {
    /// Validates charges, bond indices, self-bonds and duplicate bonds.
    pub fn new(
        source_id: impl Into<String>,
        kind: MoleculeKind,
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
    ) -> Result<Self, ChemError> {
        let source_id = source_id.into();
        if atoms.is_empty() {
            return Err(ChemError::EmptyStructure { source_id });
        }
        if let Some((atom, a)) = atoms
            .iter()
            .enumerate()
            .find(|(_, a)| !(MIN_FORMAL_CHARGE..=MAX_FORMAL_CHARGE).contains(&a.formal_charge))
        {
            return Err(ChemError::ChargeOutOfRange {
                atom,
                charge: a.formal_charge,
            });
        }
        validate_bonds(atoms.len(), &bonds)?;
        Ok(Self {
            atoms,
            bonds,
            source_id,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// Per-atom neighbor lists as (neighbor, order).
    pub fn neighbors(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.i].push((b.j, b.order));
            adj[b.j].push((b.i, b.order));
        }
        adj
    }

    pub fn heavy_atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter().filter(|a| a.is_heavy())
    }

    /// Molecular weight in g/mol, counting `extra_hydrogens` implicit H.
    pub fn molecular_weight(&self, extra_hydrogens: usize) -> f64 {
        self.atoms.iter().map(|a| a.element.mass()).sum::<f64>()
            + extra_hydrogens as f64 * Element::H.mass()
    }
}

pub(crate) fn validate_bonds(n_atoms: usize, bonds: &[Bond]) -> Result<(), ChemError> {
    let mut seen = std::collections::HashSet::with_capacity(bonds.len());
    for b in bonds {
        let err = |msg| ChemError::InvalidBond {
            i: b.i,
            j: b.j,
            n_atoms,
            msg,
        };
        if b.i >= n_atoms || b.j >= n_atoms {
            return Err(err("index out of range"));
        }
        if b.i == b.j {
            return Err(err("self bond"));
        }
        if !seen.insert(b.key()) {
            return Err(err("duplicate bond"));
        }
    }
    Ok(())
}
