//! Seeded toy complexes with controlled protein-ligand contacts.
//!
//! Each complex is a short ligand chain plus a handful of pocket atoms.
//! "Contact" atoms sit 2.6–3.0 Å from a ligand atom; "distal" atoms are
//! kept farther than the interaction cutoff from every ligand atom but
//! inside the pocket crop radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chemio::{
    infer_protein_bonds, perceive_ligand, Atom, Bond, BondOrder, Element, MolecularStructure,
    MoleculeKind,
};
use crate::complexbuild::{
    build_complex_graph, ComplexGraph, LabelKind, LabelValue, SampleMeta,
    DEFAULT_INTERACTION_CUTOFF,
};
use crate::featurize::RESIDUE_VOCAB;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub seed: u64,
    /// Inclusive range of ligand heavy-atom counts.
    pub ligand_atoms: (usize, usize),
    /// Inclusive range of contact atoms when contacts are requested.
    pub contact_atoms: (usize, usize),
    /// Inclusive range of distal pocket atoms.
    pub distal_atoms: (usize, usize),
    pub interaction_cutoff: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 11,
            ligand_atoms: (3, 5),
            contact_atoms: (2, 4),
            distal_atoms: (3, 5),
            interaction_cutoff: DEFAULT_INTERACTION_CUTOFF,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticComplex {
    pub protein: MolecularStructure,
    pub ligand: MolecularStructure,
    pub graph: ComplexGraph,
}

fn unit_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn offset(p: [f64; 3], dir: [f64; 3], r: f64) -> [f64; 3] {
    [p[0] + dir[0] * r, p[1] + dir[1] * r, p[2] + dir[2] * r]
}

fn min_distance(p: &[f64; 3], atoms: &[Atom]) -> f64 {
    atoms
        .iter()
        .map(|a| crate::chemio::distance(p, &a.position))
        .fold(f64::INFINITY, f64::min)
}

impl SyntheticComplex {
    /// Generates complex `index`; activity label 1 with contacts, 0 without.
    pub fn generate(syn: &SyntheticConfig, index: u64, with_contacts: bool) -> Self {
        let n_contacts = if with_contacts {
            let mut rng = ChaCha8Rng::seed_from_u64(syn.seed ^ 0x5eed_0000 ^ index);
            rng.gen_range(syn.contact_atoms.0..=syn.contact_atoms.1)
        } else {
            0
        };
        let label = if with_contacts {
            LabelValue::active()
        } else {
            LabelValue::inactive()
        };
        Self::with_contacts(syn, index, n_contacts, label)
    }

    /// Generates complex `index` with exactly `n_contacts` contact atoms.
    pub fn with_contacts(
        syn: &SyntheticConfig,
        index: u64,
        n_contacts: usize,
        label: LabelValue,
    ) -> Self {
        let mut rng =
            ChaCha8Rng::seed_from_u64(syn.seed.wrapping_mul(0x9e37_79b9).wrapping_add(index));
        let elements = [
            Element::C,
            Element::C,
            Element::C,
            Element::N,
            Element::O,
            Element::S,
        ];

        let n_lig = rng
            .gen_range(syn.ligand_atoms.0..=syn.ligand_atoms.1)
            .max(1);
        let mut lig_atoms: Vec<Atom> = Vec::with_capacity(n_lig);
        let mut bonds = Vec::new();
        let mut pos = [0.0; 3];
        for k in 0..n_lig {
            if k > 0 {
                // self-avoiding 1.5 Å step
                let mut step;
                loop {
                    step = offset(pos, unit_vector(&mut rng), 1.5);
                    if min_distance(&step, &lig_atoms) >= 1.4 {
                        break;
                    }
                }
                pos = step;
                let order = if rng.gen_bool(0.2) {
                    BondOrder::Double
                } else {
                    BondOrder::Single
                };
                bonds.push(Bond::new(k - 1, k, order));
            }
            let e = elements[rng.gen_range(0..elements.len())];
            lig_atoms.push(Atom::new(e, pos));
        }
        let lig_name = format!("lig{index}");
        let ligand = MolecularStructure::new(&lig_name, MoleculeKind::Ligand, lig_atoms, bonds)
            .expect("generated ligand is valid");

        let prot_elements = [Element::C, Element::N, Element::O, Element::S];
        let mut prot_atoms: Vec<Atom> = Vec::new();
        let push_protein = |p: [f64; 3], rng: &mut ChaCha8Rng, atoms: &mut Vec<Atom>| {
            let mut a = Atom::new(prot_elements[rng.gen_range(0..prot_elements.len())], p);
            a.residue_name = RESIDUE_VOCAB[rng.gen_range(0..RESIDUE_VOCAB.len())].to_string();
            atoms.push(a);
        };
        for _ in 0..n_contacts {
            loop {
                let anchor = ligand.atoms[rng.gen_range(0..n_lig)].position;
                let p = offset(anchor, unit_vector(&mut rng), rng.gen_range(2.6..3.0));
                if min_distance(&p, &ligand.atoms) >= 2.5 && min_distance(&p, &prot_atoms) >= 1.2 {
                    push_protein(p, &mut rng, &mut prot_atoms);
                    break;
                }
            }
        }
        let n_distal = rng.gen_range(syn.distal_atoms.0..=syn.distal_atoms.1);
        let floor = syn.interaction_cutoff + 0.3;
        for _ in 0..n_distal {
            loop {
                let anchor = ligand.atoms[rng.gen_range(0..n_lig)].position;
                let p = offset(anchor, unit_vector(&mut rng), rng.gen_range(floor..7.5));
                if min_distance(&p, &ligand.atoms) >= floor && min_distance(&p, &prot_atoms) >= 1.2
                {
                    push_protein(p, &mut rng, &mut prot_atoms);
                    break;
                }
            }
        }
        let protein = MolecularStructure::new(
            format!("prot{index}"),
            MoleculeKind::Protein,
            prot_atoms,
            Vec::new(),
        )
        .expect("generated pocket is valid");
        let pocket = infer_protein_bonds(&protein);
        let meta = SampleMeta::new(format!("syn{index:03}"), format!("prot{index}"), 1);
        let graph = build_complex_graph(
            &pocket,
            &perceive_ligand(&ligand),
            label,
            meta,
            syn.interaction_cutoff,
        )
        .expect("generated complex is valid");
        Self {
            protein,
            ligand,
            graph,
        }
    }
}

/// `n_active` contact complexes labeled 1 followed by `n_inactive`
/// contact-free complexes labeled 0.
pub fn classification_set(
    syn: &SyntheticConfig,
    n_active: usize,
    n_inactive: usize,
) -> Vec<ComplexGraph> {
    (0..n_active + n_inactive)
        .map(|k| SyntheticComplex::generate(syn, k as u64, k < n_active).graph)
        .collect()
}

/// Complexes with 0..=4 contact atoms, labeled `per_pair` × (number of
/// interaction pairs) as an affinity value.
pub fn regression_set(syn: &SyntheticConfig, n: usize, per_pair: f64) -> Vec<ComplexGraph> {
    (0..n)
        .map(|k| {
            let contacts = k % 5;
            let mut c =
                SyntheticComplex::with_contacts(syn, k as u64, contacts, LabelValue::inactive());
            let pairs = c.graph.interactions.len() as f64;
            c.graph.label =
                LabelValue::new(LabelKind::Affinity, per_pair * pairs).expect("finite label");
            c.graph
        })
        .collect()
}
