use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Closed table of element symbols. Anything else parses to [`Element::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Element {
    H,
    B,
    C,
    N,
    O,
    F,
    Na,
    Mg,
    Si,
    P,
    S,
    Cl,
    K,
    Ca,
    Mn,
    Fe,
    Co,
    Ni,
    Cu,
    Zn,
    Se,
    Br,
    I,
    Other,
}

const TABLE: &[(Element, &str, f64)] = &[
    (Element::H, "H", 1.008),
    (Element::B, "B", 10.81),
    (Element::C, "C", 12.011),
    (Element::N, "N", 14.007),
    (Element::O, "O", 15.999),
    (Element::F, "F", 18.998),
    (Element::Na, "Na", 22.990),
    (Element::Mg, "Mg", 24.305),
    (Element::Si, "Si", 28.085),
    (Element::P, "P", 30.974),
    (Element::S, "S", 32.06),
    (Element::Cl, "Cl", 35.45),
    (Element::K, "K", 39.098),
    (Element::Ca, "Ca", 40.078),
    (Element::Mn, "Mn", 54.938),
    (Element::Fe, "Fe", 55.845),
    (Element::Co, "Co", 58.933),
    (Element::Ni, "Ni", 58.693),
    (Element::Cu, "Cu", 63.546),
    (Element::Zn, "Zn", 65.38),
    (Element::Se, "Se", 78.971),
    (Element::Br, "Br", 79.904),
    (Element::I, "I", 126.904),
];

impl Element {
    /// Case-insensitive symbol lookup; deuterium counts as hydrogen.
    pub fn from_symbol(sym: &str) -> Self {
        let sym = sym.trim();
        if sym.eq_ignore_ascii_case("D") {
            return Element::H;
        }
        TABLE
            .iter()
            .find(|(_, s, _)| s.eq_ignore_ascii_case(sym))
            .map_or(Element::Other, |&(e, _, _)| e)
    }

    pub fn symbol(self) -> &'static str {
        TABLE
            .iter()
            .find(|(e, _, _)| *e == self)
            .map_or("*", |&(_, s, _)| s)
    }

    /// Standard atomic weight in g/mol; zero for [`Element::Other`].
    pub fn mass(self) -> f64 {
        TABLE
            .iter()
            .find(|(e, _, _)| *e == self)
            .map_or(0.0, |&(_, _, m)| m)
    }

    pub fn is_hydrogen(self) -> bool {
        self == Element::H
    }

    /// Default valence used for implicit-hydrogen perception.
    pub fn default_valence(self) -> i32 {
        match self {
            Element::C => 4,
            Element::N | Element::P | Element::B => 3,
            Element::O | Element::S => 2,
            Element::F | Element::Cl | Element::Br | Element::I | Element::H => 1,
            _ => 0,
        }
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Element {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(Element::from_symbol(s))
    }
}

impl From<String> for Element {
    fn from(s: String) -> Self {
        Element::from_symbol(&s)
    }
}

impl From<Element> for String {
    fn from(e: Element) -> Self {
        e.symbol().to_string()
    }
}
