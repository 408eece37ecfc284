//! MDL V2000 connection tables, single or `$$$$`-separated.

use std::fmt::Write as _;

use super::{
    Atom, Bond, BondOrder, ChemError, Element, MolecularStructure, MoleculeKind, MAX_FORMAL_CHARGE,
    MIN_FORMAL_CHARGE,
};

fn field(line: &str, a: usize, b: usize) -> &str {
    let len = line.len();
    line.get(a.min(len)..b.min(len)).unwrap_or("").trim()
}

/// Atom-block charge code to formal charge.
fn block_charge(code: i32) -> i32 {
    match code {
        1 => 3,
        2 => 2,
        3 => 1,
        5 => -1,
        6 => -2,
        7 => -3,
        _ => 0,
    }
}

fn charge_code(charge: i32) -> i32 {
    match charge {
        3 => 1,
        2 => 2,
        1 => 3,
        -1 => 5,
        -2 => 6,
        -3 => 7,
        _ => 0,
    }
}

fn parse_counts(line: &str, lineno: usize) -> Result<(usize, usize), ChemError> {
    if line.contains("V3000") {
        return Err(ChemError::parse(
            lineno,
            "V3000 connection tables are not supported",
        ));
    }
    let fixed = (field(line, 0, 3).parse(), field(line, 3, 6).parse());
    if let (Ok(a), Ok(b)) = fixed {
        return Ok((a, b));
    }
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b))) => Ok((a, b)),
        _ => Err(ChemError::parse(
            lineno,
            format!("malformed counts line '{line}'"),
        )),
    }
}

fn parse_atom(line: &str, lineno: usize) -> Result<Atom, ChemError> {
    let fixed = (
        field(line, 0, 10).parse::<f64>(),
        field(line, 10, 20).parse::<f64>(),
        field(line, 20, 30).parse::<f64>(),
    );
    let (pos, sym, chg) = match fixed {
        (Ok(x), Ok(y), Ok(z)) if !field(line, 31, 34).is_empty() => {
            let chg = field(line, 36, 39).parse::<i32>().unwrap_or(0);
            ([x, y, z], field(line, 31, 34).to_string(), chg)
        }
        _ => {
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |k: usize| tok.get(k).and_then(|t| t.parse::<f64>().ok());
            match (num(0), num(1), num(2), tok.get(3)) {
                (Some(x), Some(y), Some(z), Some(s)) if s.chars().all(|c| c.is_ascii_alphabetic() || c == '*') => {
                    let chg = tok.get(5).and_then(|t| t.parse().ok()).unwrap_or(0);
                    ([x, y, z], s.to_string(), chg)
                }
                _ => {
                    return Err(ChemError::parse(
                        lineno,
                        format!("expected atom line, found '{line}' (counts line inconsistent with atom block?)"),
                    ))
                }
            }
        }
    };
    if pos.iter().any(|v| !v.is_finite()) {
        return Err(ChemError::parse(lineno, "non-finite coordinate"));
    }
    let mut atom = Atom::new(Element::from_symbol(&sym), pos);
    atom.formal_charge = block_charge(chg);
    Ok(atom)
}

fn parse_bond_fields(line: &str) -> Option<(usize, usize, u8)> {
    let fixed = (
        field(line, 0, 3).parse(),
        field(line, 3, 6).parse(),
        field(line, 6, 9).parse(),
    );
    if let (Ok(i), Ok(j), Ok(t)) = fixed {
        return Some((i, j, t));
    }
    let mut it = line.split_whitespace();
    let i = it.next()?.parse().ok()?;
    let j = it.next()?.parse().ok()?;
    let t = it.next()?.parse().ok()?;
    Some((i, j, t))
}

fn parse_bond(line: &str, lineno: usize, n_atoms: usize) -> Result<Bond, ChemError> {
    let (i, j, t) = parse_bond_fields(line).ok_or_else(|| {
        ChemError::parse(
            lineno,
            format!(
                "expected bond line, found '{line}' (counts line inconsistent with bond block?)"
            ),
        )
    })?;
    if i == 0 || j == 0 || i > n_atoms || j > n_atoms {
        return Err(ChemError::parse(
            lineno,
            format!("bond ({i}, {j}) references atom outside 1..={n_atoms}"),
        ));
    }
    let order = BondOrder::from_code(t)
        .ok_or_else(|| ChemError::parse(lineno, format!("unsupported bond type {t}")))?;
    Ok(Bond::new(i - 1, j - 1, order))
}

/// `M  CHG` entries as (1-based atom, charge).
fn parse_chg(line: &str, lineno: usize) -> Result<Vec<(usize, i32)>, ChemError> {
    let rest = line.get(6..).unwrap_or("");
    let nums: Result<Vec<i64>, _> = rest.split_whitespace().map(str::parse).collect();
    let nums = nums.map_err(|_| ChemError::parse(lineno, "malformed M  CHG line"))?;
    let (count, pairs) = nums
        .split_first()
        .ok_or_else(|| ChemError::parse(lineno, "empty M  CHG line"))?;
    if pairs.len() != 2 * (*count as usize) {
        return Err(ChemError::parse(
            lineno,
            format!(
                "M  CHG declares {count} entries but has {} values",
                pairs.len()
            ),
        ));
    }
    Ok(pairs
        .chunks(2)
        .map(|p| (p[0].max(0) as usize, p[1] as i32))
        .collect())
}

fn parse_record(
    lines: &[&str],
    first_line: usize,
    index: usize,
) -> Result<MolecularStructure, ChemError> {
    let at = |k: usize| first_line + k;
    if lines.len() < 4 {
        return Err(ChemError::parse(
            at(lines.len()),
            "record shorter than header + counts line",
        ));
    }
    let title = lines[0].trim();
    let source_id = if title.is_empty() {
        format!("mol{}", index + 1)
    } else {
        title.to_string()
    };
    let (n_atoms, n_bonds) = parse_counts(lines[3], at(3))?;
    let atom_end = 4 + n_atoms;
    let bond_end = atom_end + n_bonds;
    if lines.len() < bond_end {
        return Err(ChemError::parse(
            at(lines.len()),
            format!(
                "counts line declares {n_atoms} atoms and {n_bonds} bonds but the record has only {} block lines",
                lines.len() - 4
            ),
        ));
    }
    let mut atoms = Vec::with_capacity(n_atoms);
    for (k, line) in lines[4..atom_end].iter().enumerate() {
        atoms.push(parse_atom(line, at(4 + k))?);
    }
    let mut bonds = Vec::with_capacity(n_bonds);
    for (k, line) in lines[atom_end..bond_end].iter().enumerate() {
        bonds.push(parse_bond(line, at(atom_end + k), n_atoms)?);
    }

    let mut charges: Option<Vec<i32>> = None;
    for (k, line) in lines[bond_end..].iter().enumerate() {
        let lineno = at(bond_end + k);
        if line.starts_with("M  END") {
            break;
        }
        if line.starts_with("M  CHG") {
            // any M  CHG line resets every atom-block charge
            let c = charges.get_or_insert_with(|| vec![0; n_atoms]);
            for (atom, q) in parse_chg(line, lineno)? {
                if atom == 0 || atom > n_atoms {
                    return Err(ChemError::parse(
                        lineno,
                        format!("M  CHG atom {atom} out of range"),
                    ));
                }
                if !(MIN_FORMAL_CHARGE..=MAX_FORMAL_CHARGE).contains(&q) {
                    return Err(ChemError::parse(
                        lineno,
                        format!("formal charge {q} out of range"),
                    ));
                }
                c[atom - 1] = q;
            }
        } else if !line.starts_with('M') && parse_bond_fields(line).is_some() {
            return Err(ChemError::parse(
                lineno,
                "extra connection-table line after declared blocks (counts line inconsistent)",
            ));
        }
    }
    if let Some(c) = charges {
        for (a, q) in atoms.iter_mut().zip(c) {
            a.formal_charge = q;
        }
    }
    MolecularStructure::new(source_id, MoleculeKind::Ligand, atoms, bonds).map_err(|e| match e {
        ChemError::InvalidBond { i, j, msg, .. } => {
            ChemError::parse(at(atom_end), format!("bond ({}, {}): {msg}", i + 1, j + 1))
        }
        other => other,
    })
}

/// Parses every record of a V2000 SD file.
pub fn parse_sdf(text: &str) -> Result<Vec<MolecularStructure>, ChemError> {
    let lines: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let mut out = Vec::new();
    let mut start = 0;
    let flush =
        |start: usize, end: usize, out: &mut Vec<MolecularStructure>| -> Result<(), ChemError> {
            let chunk = &lines[start..end];
            if chunk.iter().all(|l| l.trim().is_empty()) {
                return Ok(());
            }
            let idx = out.len();
            out.push(parse_record(chunk, start + 1, idx)?);
            Ok(())
        };
    for (k, line) in lines.iter().enumerate() {
        if line.starts_with("$$$$") {
            flush(start, k, &mut out)?;
            start = k + 1;
        }
    }
    flush(start, lines.len(), &mut out)?;
    Ok(out)
}

/// Canonical V2000 writer; every nonzero charge also goes to `M  CHG`.
pub fn write_sdf(mols: &[MolecularStructure]) -> String {
    let mut out = String::new();
    for m in mols {
        let _ = writeln!(out, "{}", m.source_id);
        out.push_str("  gatbind\n\n");
        let _ = writeln!(
            out,
            "{:>3}{:>3}  0  0  0  0  0  0  0  0999 V2000",
            m.atoms.len(),
            m.bonds.len()
        );
        for a in &m.atoms {
            let _ = writeln!(
                out,
                "{:>10.4}{:>10.4}{:>10.4} {:<3} 0{:>3}  0  0  0  0  0  0  0  0  0  0",
                a.position[0],
                a.position[1],
                a.position[2],
                a.element.symbol(),
                charge_code(a.formal_charge)
            );
        }
        for b in &m.bonds {
            let _ = writeln!(out, "{:>3}{:>3}{:>3}  0", b.i + 1, b.j + 1, b.order.code());
        }
        let charged: Vec<(usize, i32)> = m
            .atoms
            .iter()
            .enumerate()
            .filter(|(_, a)| a.formal_charge != 0)
            .map(|(k, a)| (k + 1, a.formal_charge))
            .collect();
        for chunk in charged.chunks(8) {
            let _ = write!(out, "M  CHG{:>3}", chunk.len());
            for (k, q) in chunk {
                let _ = write!(out, " {k:>3} {q:>3}");
            }
            out.push('\n');
        }
        out.push_str("M  END\n$$$$\n");
    }
    out
}
