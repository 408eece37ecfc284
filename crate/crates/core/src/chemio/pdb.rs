//! Fixed-column PDB reader (ATOM records only) and a minimal writer.

use std::fmt::Write as _;

use super::{Atom, ChemError, Element, MolecularStructure, MoleculeKind};

const WATER: &[&str] = &["HOH", "WAT"];

/// 1-based inclusive column range, clipped to the line.
fn cols(line: &str, start: usize, end: usize) -> &str {
    let len = line.len();
    let a = (start - 1).min(len);
    let b = end.min(len);
    line.get(a..b).unwrap_or("")
}

fn coord(line: &str, lineno: usize, start: usize, axis: char) -> Result<f64, ChemError> {
    let field = cols(line, start, start + 7).trim();
    let v: f64 = field
        .parse()
        .map_err(|_| ChemError::parse(lineno, format!("malformed {axis} coordinate '{field}'")))?;
    if !v.is_finite() {
        return Err(ChemError::parse(
            lineno,
            format!("non-finite {axis} coordinate"),
        ));
    }
    Ok(v)
}

/// "2+" / "1-" style charge field; blank or unreadable is neutral.
fn charge(field: &str) -> i32 {
    let f = field.trim();
    let mut chars = f.chars();
    match (chars.next(), chars.next()) {
        (Some(d), Some(s)) if d.is_ascii_digit() => {
            let v = d.to_digit(10).unwrap_or(0) as i32;
            match s {
                '+' => v,
                '-' => -v,
                _ => 0,
            }
        }
        _ => 0,
    }
}

/// Parses the ATOM records of the first model in a PDB document.
///
/// HETATM records, water residues and hydrogens are dropped; bonds are
/// left empty (see [`super::infer_protein_bonds`]).
pub fn parse_pdb(text: &str) -> Result<MolecularStructure, ChemError> {
    let mut atoms = Vec::new();
    let mut source_id = String::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let record = cols(line, 1, 6);
        if record.starts_with("HEADER") {
            source_id = cols(line, 63, 66).trim().to_string();
            continue;
        }
        if record.starts_with("ENDMDL") {
            break;
        }
        if record != "ATOM  " && record.trim_end() != "ATOM" {
            continue;
        }
        let residue = cols(line, 18, 20).trim().to_string();
        if WATER.contains(&residue.as_str()) {
            continue;
        }
        let position = [
            coord(line, lineno, 31, 'x')?,
            coord(line, lineno, 39, 'y')?,
            coord(line, lineno, 47, 'z')?,
        ];
        let elem_field = cols(line, 77, 78).trim();
        let element = if elem_field.is_empty() {
            let name = cols(line, 13, 16);
            match name.chars().find(|c| c.is_ascii_alphabetic()) {
                Some(c) => Element::from_symbol(&c.to_string()),
                None => return Err(ChemError::parse(lineno, "no element or atom name")),
            }
        } else {
            Element::from_symbol(elem_field)
        };
        if element.is_hydrogen() {
            continue;
        }
        atoms.push(Atom {
            element,
            position,
            formal_charge: charge(cols(line, 79, 80)),
            residue_name: residue,
        });
    }
    MolecularStructure::new(source_id, MoleculeKind::Protein, atoms, Vec::new())
}

/// Writes ATOM records for every atom, one residue number per atom.
pub fn write_pdb(mol: &MolecularStructure) -> String {
    let mut out = String::new();
    for (k, a) in mol.atoms.iter().enumerate() {
        let sym = a.element.symbol();
        let name = if sym.len() == 1 {
            format!(" {sym:<3}")
        } else {
            format!("{sym:<4}")
        };
        let res = if a.residue_name.is_empty() {
            "UNK"
        } else {
            a.residue_name.as_str()
        };
        let chg = match a.formal_charge {
            0 => "  ".to_string(),
            c if c > 0 => format!("{c}+"),
            c => format!("{}-", -c),
        };
        let _ = writeln!(
            out,
            "ATOM  {serial:>5} {name} {res:>3} A{seq:>4}    {x:>8.3}{y:>8.3}{z:>8.3}{occ:>6.2}{tf:>6.2}          {sym:>2}{chg}",
            serial = k + 1,
            seq = k + 1,
            x = a.position[0],
            y = a.position[1],
            z = a.position[2],
            occ = 1.0,
            tf = 0.0,
        );
    }
    out.push_str("END\n");
    out
}
