//! Branch labels: `B1` is the tracheal bifurcation; each further digit picks
//! the major (`1`, larger diameter) or minor (`2`) daughter. An `A1`/`A2`
//! suffix selects one of the two branching angles at that bifurcation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Digit path below `B1`; ordering is lexicographic on the path, which is
/// also the textual order (`B1 < B11 < B111 < B112 < B12`).
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchCode {
    path: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AngleCode {
    pub branch: BranchCode,
    pub angle: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Code {
    Branch(BranchCode),
    Angle(AngleCode),
}

impl BranchCode {
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_path(path: &[u8]) -> Result<Self> {
        if let Some(bad) = path.iter().find(|&&d| d != 1 && d != 2) {
            return Err(Error::MalformedCode {
                text: format!("{path:?}"),
                reason: if *bad == 0 { "digit 0" } else { "digit must be 1 or 2" },
            });
        }
        Ok(Self {
            path: path.to_vec(),
        })
    }

    pub fn path(&self) -> &[u8] {
        &self.path
    }

    /// `B1` is generation 1.
    pub fn generation(&self) -> usize {
        self.path.len() + 1
    }

    pub fn is_root(&self) -> bool {
        self.path.is_empty()
    }

    pub fn parent(&self) -> Option<BranchCode> {
        if self.path.is_empty() {
            None
        } else {
            Some(Self {
                path: self.path[..self.path.len() - 1].to_vec(),
            })
        }
    }

    /// Daughter `digit` (1 = major, 2 = minor).
    pub fn child(&self, digit: u8) -> BranchCode {
        assert!(digit == 1 || digit == 2, "daughter digit must be 1 or 2");
        let mut path = self.path.clone();
        path.push(digit);
        Self { path }
    }

    pub fn angle(&self, index: u8) -> AngleCode {
        assert!(index == 1 || index == 2, "angle index must be 1 or 2");
        AngleCode {
            branch: self.clone(),
            angle: index,
        }
    }

    /// All codes of one generation in lexicographic order.
    pub fn all_of_generation(generation: usize) -> Vec<BranchCode> {
        assert!(generation >= 1);
        let depth = generation - 1;
        (0..1usize << depth)
            .map(|bits| {
                let path = (0..depth)
                    .map(|k| if bits >> (depth - 1 - k) & 1 == 0 { 1 } else { 2 })
                    .collect();
                BranchCode { path }
            })
            .collect()
    }
}

impl fmt::Display for BranchCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("B1")?;
        for d in &self.path {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl fmt::Display for AngleCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}A{}", self.branch, self.angle)
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Code::Branch(b) => b.fmt(f),
            Code::Angle(a) => a.fmt(f),
        }
    }
}

pub fn parse_code(text: &str) -> Result<Code> {
    let err = |reason| Error::MalformedCode {
        text: text.to_string(),
        reason,
    };
    let rest = text.strip_prefix('B').ok_or_else(|| err("missing leading B"))?;
    let (digits, angle) = match rest.split_once('A') {
        Some((d, a)) => (d, Some(a)),
        None => (rest, None),
    };
    let mut chars = digits.chars();
    if chars.next() != Some('1') {
        return Err(err("branch path must start with the trachea digit 1"));
    }
    let path = chars
        .map(|c| match c {
            '1' => Ok(1),
            '2' => Ok(2),
            _ => Err(err("branch digits must be 1 or 2")),
        })
        .collect::<Result<Vec<u8>>>()?;
    let branch = BranchCode { path };
    match angle {
        None => Ok(Code::Branch(branch)),
        Some("1") => Ok(Code::Angle(branch.angle(1))),
        Some("2") => Ok(Code::Angle(branch.angle(2))),
        Some(_) => Err(err("angle index must be 1 or 2")),
    }
}

impl FromStr for BranchCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match parse_code(s)? {
            Code::Branch(b) => Ok(b),
            Code::Angle(_) => Err(Error::MalformedCode {
                text: s.to_string(),
                reason: "expected a branch code without angle suffix",
            }),
        }
    }
}

impl FromStr for AngleCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match parse_code(s)? {
            Code::Angle(a) => Ok(a),
            Code::Branch(_) => Err(Error::MalformedCode {
                text: s.to_string(),
                reason: "missing A1/A2 angle suffix",
            }),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(BranchCode);
string_serde!(AngleCode);

/// Bifurcations excluded from the generation 1-4 angle pool.
pub const EXCLUDED_FROM_POOL: [&str; 2] = ["B1221", "B1222"];

/// Bifurcation codes of generations `gens` (inclusive range), minus the
/// excluded pair, in lexicographic order.
pub fn pool_bifurcations(first_gen: usize, last_gen: usize) -> Vec<BranchCode> {
    let excluded: Vec<BranchCode> = EXCLUDED_FROM_POOL
        .iter()
        .map(|s| s.parse().expect("static code"))
        .collect();
    let mut out: Vec<BranchCode> = (first_gen..=last_gen)
        .flat_map(BranchCode::all_of_generation)
        .filter(|c| !excluded.contains(c))
        .collect();
    out.sort();
    out
}

pub fn pool_angles(first_gen: usize, last_gen: usize) -> Vec<AngleCode> {
    pool_bifurcations(first_gen, last_gen)
        .into_iter()
        .flat_map(|b| [b.angle(1), b.angle(2)])
        .collect()
}

/// The 26 angles of generations 1-4.
pub fn pool_gen1to4() -> Vec<AngleCode> {
    pool_angles(1, 4)
}

/// The 20 angles of generations 3-4.
pub fn pool_gen34() -> Vec<AngleCode> {
    pool_angles(3, 4)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_examples() {
        let Code::Angle(a) = parse_code("B1121A2").unwrap() else {
            panic!("expected angle code")
        };
        assert_eq!(a.branch.path(), &[1, 2, 1]);
        assert_eq!(a.branch.generation(), 4);
        assert_eq!(a.angle, 2);

        let Code::Angle(a) = parse_code("B1A1").unwrap() else {
            panic!("expected angle code")
        };
        assert!(a.branch.is_root());
        assert_eq!(a.angle, 1);

        assert!(matches!(parse_code("B122").unwrap(), Code::Branch(_)));
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["B13A1", "1121A1", "B1121A3", "B1121A", "B", "B2A1", "", "B11x", "B1A1A2"] {
            assert!(parse_code(bad).is_err(), "{bad} should not parse");
        }
    }

    #[test]
    fn ordering_follows_text() {
        let mut codes: Vec<BranchCode> = ["B12", "B111", "B1", "B112", "B11", "B1111"]
            .iter()
            .map(|s| s.parse().unwrap())
            .collect();
        codes.sort();
        let text: Vec<String> = codes.iter().map(|c| c.to_string()).collect();
        assert_eq!(text, ["B1", "B11", "B111", "B1111", "B112", "B12"]);
    }

    #[test]
    fn pool_sizes() {
        assert_eq!(pool_bifurcations(1, 4).len(), 13);
        assert_eq!(pool_gen1to4().len(), 26);
        assert_eq!(pool_gen34().len(), 20);
        assert!(!pool_gen34().iter().any(|a| a.branch.to_string() == "B1221"));
        assert_eq!(BranchCode::all_of_generation(4).len(), 8);
    }

    #[test]
    fn json_form_is_text() {
        let a: AngleCode = "B1211A1".parse().unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"B1211A1\"");
        let back: AngleCode = serde_json::from_str("\"B1211A1\"").unwrap();
        assert_eq!(back, a);
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(path in proptest::collection::vec(1u8..=2, 0..8), angle in proptest::option::of(1u8..=2)) {
            let b = BranchCode::from_path(&path).unwrap();
            let code = match angle {
                Some(k) => Code::Angle(b.angle(k)),
                None => Code::Branch(b),
            };
            prop_assert_eq!(parse_code(&code.to_string()).unwrap(), code);
        }
    }
}
