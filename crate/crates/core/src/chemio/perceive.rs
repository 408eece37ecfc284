//! Rule-based chemical perception for ligands and bond inference for
//! protein pockets.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{Bond, BondOrder, Element, MolecularStructure};

pub const PROTEIN_BOND_CUTOFF: f64 = 1.9;
pub const SULFUR_BOND_CUTOFF: f64 = 2.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hybridization {
    SP,
    SP2,
    SP3,
    Other,
}

impl Hybridization {
    pub fn as_str(self) -> &'static str {
        match self {
            Hybridization::SP => "SP",
            Hybridization::SP2 => "SP2",
            Hybridization::SP3 => "SP3",
            Hybridization::Other => "OTHER",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SP" => Some(Hybridization::SP),
            "SP2" => Some(Hybridization::SP2),
            "SP3" => Some(Hybridization::SP3),
            "OTHER" => Some(Hybridization::Other),
            _ => None,
        }
    }
}

/// Per-atom perception results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomTraits {
    /// Heavy-atom neighbor count.
    pub degree: usize,
    /// Explicit plus implicit hydrogens.
    pub num_hydrogens: usize,
    /// Implicit hydrogens from the valence rule.
    pub implicit_valence: usize,
    pub aromatic: bool,
    pub in_ring: bool,
    pub hybridization: Hybridization,
}

/// A ligand with hydrogens folded into per-atom counts.
///
/// `base` holds the heavy atoms only (original order preserved); a ligand
/// made entirely of hydrogens is kept as is.
#[derive(Debug, Clone, PartialEq)]
pub struct PerceivedLigand {
    pub base: MolecularStructure,
    pub traits: Vec<AtomTraits>,
}

impl PerceivedLigand {
    pub fn len(&self) -> usize {
        self.base.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base.atoms.is_empty()
    }

    /// Total hydrogen count, used for molecular weight.
    pub fn hydrogen_count(&self) -> usize {
        self.traits.iter().map(|t| t.num_hydrogens).sum()
    }

    pub fn molecular_weight(&self) -> f64 {
        self.base.molecular_weight(self.hydrogen_count())
    }
}

fn charge_adjustment(element: Element, charge: i32) -> i32 {
    match element {
        Element::N | Element::O => charge,
        _ => 0,
    }
}

/// True for every atom lying on at least one simple cycle.
///
/// An atom is on a cycle iff one of its bonds is not a bridge; a bond
/// (u, v) is a bridge iff removing it disconnects u from v.
pub fn ring_atoms(n_atoms: usize, bonds: &[Bond]) -> Vec<bool> {
    let mut adj = vec![Vec::new(); n_atoms];
    for (k, b) in bonds.iter().enumerate() {
        adj[b.i].push((b.j, k));
        adj[b.j].push((b.i, k));
    }
    let mut in_ring = vec![false; n_atoms];
    let mut seen = vec![false; n_atoms];
    let mut queue = VecDeque::new();
    for (k, b) in bonds.iter().enumerate() {
        if in_ring[b.i] && in_ring[b.j] {
            continue;
        }
        seen.iter_mut().for_each(|s| *s = false);
        queue.clear();
        seen[b.i] = true;
        queue.push_back(b.i);
        let mut connected = false;
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &adj[u] {
                if e == k || seen[v] {
                    continue;
                }
                if v == b.j {
                    connected = true;
                    break;
                }
                seen[v] = true;
                queue.push_back(v);
            }
            if connected {
                break;
            }
        }
        if connected {
            in_ring[b.i] = true;
            in_ring[b.j] = true;
        }
    }
    in_ring
}

fn hybridization(element: Element, orders: &[BondOrder]) -> Hybridization {
    let doubles = orders.iter().filter(|o| **o == BondOrder::Double).count();
    if orders.contains(&BondOrder::Triple) || doubles >= 2 {
        Hybridization::SP
    } else if doubles == 1 || orders.contains(&BondOrder::Aromatic) {
        Hybridization::SP2
    } else if matches!(element, Element::C | Element::N | Element::O | Element::S) {
        Hybridization::SP3
    } else {
        Hybridization::Other
    }
}

/// Derives degree, hydrogen counts, aromaticity, ring membership and
/// hybridization, then folds hydrogens into counts.
pub fn perceive_ligand(mol: &MolecularStructure) -> PerceivedLigand {
    let n = mol.atoms.len();
    let neighbors = mol.neighbors();
    let in_ring = ring_atoms(n, &mol.bonds);

    let all: Vec<AtomTraits> = (0..n)
        .map(|i| {
            let atom = &mol.atoms[i];
            let nb = &neighbors[i];
            let orders: Vec<BondOrder> = nb.iter().map(|&(_, o)| o).collect();
            let explicit_h = nb
                .iter()
                .filter(|&&(j, _)| mol.atoms[j].element.is_hydrogen())
                .count();
            let bond_sum: f64 = orders.iter().map(|o| o.valence()).sum();
            let target = atom.element.default_valence()
                + charge_adjustment(atom.element, atom.formal_charge);
            let implicit = (target - bond_sum.ceil() as i32).max(0) as usize;
            AtomTraits {
                degree: nb.len() - explicit_h,
                num_hydrogens: explicit_h + implicit,
                implicit_valence: implicit,
                aromatic: orders.contains(&BondOrder::Aromatic),
                in_ring: in_ring[i],
                hybridization: hybridization(atom.element, &orders),
            }
        })
        .collect();

    if mol.atoms.iter().all(|a| !a.is_heavy()) {
        return PerceivedLigand {
            base: mol.clone(),
            traits: all,
        };
    }
    let mut remap = vec![usize::MAX; n];
    let mut atoms = Vec::new();
    let mut traits = Vec::new();
    for (i, a) in mol.atoms.iter().enumerate() {
        if a.is_heavy() {
            remap[i] = atoms.len();
            atoms.push(a.clone());
            traits.push(all[i]);
        }
    }
    let bonds = mol
        .bonds
        .iter()
        .filter(|b| remap[b.i] != usize::MAX && remap[b.j] != usize::MAX)
        .map(|b| Bond::new(remap[b.i], remap[b.j], b.order))
        .collect();
    PerceivedLigand {
        base: MolecularStructure {
            atoms,
            bonds,
            source_id: mol.source_id.clone(),
            kind: mol.kind,
        },
        traits,
    }
}

/// Adds single bonds between heavy atoms closer than the covalent cutoff
/// (wider when sulfur is involved). Existing bonds are kept.
pub fn infer_protein_bonds(mol: &MolecularStructure) -> MolecularStructure {
    let cell = SULFUR_BOND_CUTOFF;
    let key = |p: &[f64; 3]| {
        [
            (p[0] / cell).floor() as i64,
            (p[1] / cell).floor() as i64,
            (p[2] / cell).floor() as i64,
        ]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, a) in mol.atoms.iter().enumerate() {
        if a.is_heavy() {
            grid.entry(key(&a.position)).or_default().push(i);
        }
    }
    let mut existing: HashSet<(usize, usize)> = mol
        .bonds
        .iter()
        .map(|b| (b.i.min(b.j), b.i.max(b.j)))
        .collect();
    let mut new_bonds = Vec::new();
    for (i, a) in mol.atoms.iter().enumerate() {
        if !a.is_heavy() {
            continue;
        }
        let c = key(&a.position);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(cands) = grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &j in cands {
                        if j <= i {
                            continue;
                        }
                        let b = &mol.atoms[j];
                        let cutoff = if a.element == Element::S || b.element == Element::S {
                            SULFUR_BOND_CUTOFF
                        } else {
                            PROTEIN_BOND_CUTOFF
                        };
                        if a.distance(b) <= cutoff && existing.insert((i, j)) {
                            new_bonds.push(Bond::new(i, j, BondOrder::Single));
                        }
                    }
                }
            }
        }
    }
    new_bonds.sort_by_key(|b| (b.i, b.j));
    let mut out = mol.clone();
    out.bonds.extend(new_bonds);
    out
}
