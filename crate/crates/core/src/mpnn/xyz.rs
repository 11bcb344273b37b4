use std::path::Path;

use crate::error::{EstError, Result};

/// Element symbols indexed by atomic number minus one.
pub const ELEMENTS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

/// Atomic number of an element symbol, case-insensitive.
pub fn atomic_number(symbol: &str) -> Option<usize> {
    ELEMENTS
        .iter()
        .position(|e| e.eq_ignore_ascii_case(symbol))
        .map(|i| i + 1)
}

/// One frame of an XYZ file; species are atomic numbers, positions in Å.
#[derive(Debug, Clone, PartialEq)]
pub struct Molecule {
    pub comment: String,
    pub species: Vec<usize>,
    pub positions: Vec<[f64; 3]>,
}

/// Parse every frame in an XYZ document.
pub fn parse_xyz(text: &str) -> Result<Vec<Molecule>> {
    let mut lines = text.lines().enumerate().peekable();
    let mut frames = Vec::new();
    loop {
        while lines.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
            lines.next();
        }
        let Some((no, count)) = lines.next() else {
            break;
        };
        let n: usize = count
            .trim()
            .parse()
            .map_err(|_| EstError::invalid(format!("line {}: expected an atom count, got {count:?}", no + 1)))?;
        let comment = lines.next().map(|(_, l)| l.trim().to_string()).unwrap_or_default();
        let mut species = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        for _ in 0..n {
            let (no, row) = lines
                .next()
                .ok_or_else(|| EstError::invalid(format!("frame ended before its {n} atoms")))?;
            let mut parts = row.split_whitespace();
            let sym = parts.next().unwrap_or_default();
            let z = atomic_number(sym)
                .or_else(|| sym.parse().ok().filter(|&z: &usize| (1..=118).contains(&z)))
                .ok_or_else(|| EstError::invalid(format!("line {}: unknown element {sym:?}", no + 1)))?;
            let mut p = [0.0; 3];
            for v in p.iter_mut() {
                *v = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| EstError::invalid(format!("line {}: expected three coordinates", no + 1)))?;
            }
            species.push(z);
            positions.push(p);
        }
        frames.push(Molecule {
            comment,
            species,
            positions,
        });
    }
    Ok(frames)
}

pub fn read_xyz(path: &Path) -> Result<Vec<Molecule>> {
    parse_xyz(&std::fs::read_to_string(path)?)
}

/// First frame of every `*.xyz` file in a directory, in file-name order.
pub fn read_xyz_dir(dir: &Path) -> Result<Vec<Molecule>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        if let Some(m) = read_xyz(&p)?.into_iter().next() {
            out.push(m);
        }
    }
    Ok(out)
}
