//! JSON measure files.
//!
//! ```json
//! {"header": {"dim": 2, "depth": 3, "mode": "rational"},
//!  "leaves": [[3, 0, 5, 1, 9], [3, 2, 2, 8, 9]]}
//! ```
//!
//! Each leaf is `[level, coords…, numerator, denominator]` in rational mode
//! or `[level, coords…, value]` in float mode, with `level = depth`.
//! Integers too large for JSON numbers are written as decimal strings.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cube::CubeIndex;
use crate::error::{Error, Result};
use crate::scalar::{Mode, Rational, Scalar};
use crate::tree::MeasureTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Header {
    pub dim: u32,
    pub depth: u32,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MeasureFile {
    header: Header,
    leaves: Vec<Vec<Value>>,
}

/// A measure loaded from a file, in the mode recorded in its header.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedMeasure {
    Exact(MeasureTree<Rational>),
    Float(MeasureTree<f64>),
}

impl LoadedMeasure {
    pub fn mode(&self) -> Mode {
        match self {
            LoadedMeasure::Exact(_) => Mode::Rational,
            LoadedMeasure::Float(_) => Mode::Float,
        }
    }

    pub fn to_f64(&self) -> MeasureTree<f64> {
        match self {
            LoadedMeasure::Exact(t) => t.to_f64(),
            LoadedMeasure::Float(t) => t.clone(),
        }
    }

    pub fn to_exact(&self) -> MeasureTree<Rational> {
        match self {
            LoadedMeasure::Exact(t) => t.clone(),
            LoadedMeasure::Float(t) => t.cast(),
        }
    }

    pub fn dim(&self) -> u32 {
        match self {
            LoadedMeasure::Exact(t) => t.dim(),
            LoadedMeasure::Float(t) => t.dim(),
        }
    }

    pub fn depth(&self) -> u32 {
        match self {
            LoadedMeasure::Exact(t) => t.depth(),
            LoadedMeasure::Float(t) => t.depth(),
        }
    }
}

fn int_value(n: &BigInt) -> Value {
    match n.to_i64() {
        Some(v) => Value::from(v),
        None => Value::from(n.to_string()),
    }
}

fn parse_int(v: &Value) -> Result<BigInt> {
    match v {
        Value::Number(n) => n
            .as_i64()
            .map(BigInt::from)
            .or_else(|| n.as_u64().map(BigInt::from))
            .ok_or_else(|| Error::Format(format!("{n} is not an integer"))),
        Value::String(s) => s.parse().map_err(|_| Error::Format(format!("{s:?} is not an integer"))),
        other => Err(Error::Format(format!("expected an integer, found {other}"))),
    }
}

fn parse_u32(v: &Value) -> Result<u32> {
    parse_int(v)?.to_u32().ok_or_else(|| Error::Format(format!("{v} out of range")))
}

pub fn to_json<S: Scalar>(tree: &MeasureTree<S>) -> Result<String> {
    let header = Header { dim: tree.dim(), depth: tree.depth(), mode: S::MODE };
    let mut leaves = Vec::with_capacity(tree.leaves().len());
    for (cube, m) in tree.cubes(tree.depth())? {
        let mut row: Vec<Value> = vec![Value::from(cube.level())];
        row.extend(cube.coords().iter().map(|&c| Value::from(c)));
        match S::MODE {
            Mode::Rational => {
                let r = m.to_rational().ok_or(Error::NotRepresentable(m.to_f64()))?;
                row.push(int_value(r.numer()));
                row.push(int_value(r.denom()));
            }
            Mode::Float => row.push(Value::from(m.to_f64())),
        }
        leaves.push(row);
    }
    Ok(serde_json::to_string(&MeasureFile { header, leaves })?)
}

pub fn from_json(text: &str) -> Result<LoadedMeasure> {
    let file: MeasureFile = serde_json::from_str(text)?;
    let Header { dim, depth, mode } = file.header;
    if !(1..=2).contains(&dim) {
        return Err(Error::Format(format!("dimension {dim}")));
    }
    let width = 1 + dim as usize + if mode == Mode::Rational { 2 } else { 1 };
    let mut exact = Vec::new();
    let mut float = Vec::new();
    for row in &file.leaves {
        if row.len() != width {
            return Err(Error::Format(format!("leaf {row:?} should have {width} entries")));
        }
        let level = parse_u32(&row[0])?;
        if level != depth {
            return Err(Error::Format(format!("leaf at level {level} in a depth-{depth} file")));
        }
        let coords = row[1..=dim as usize].iter().map(parse_u32).collect::<Result<Vec<_>>>()?;
        let cube = CubeIndex::new(dim, level, &coords)?;
        let rest = &row[1 + dim as usize..];
        match mode {
            Mode::Rational => {
                let den = parse_int(&rest[1])?;
                if den == BigInt::from(0) {
                    return Err(Error::Format("zero denominator".into()));
                }
                exact.push((cube, Rational::new(parse_int(&rest[0])?, den)));
            }
            Mode::Float => {
                let v = rest[0].as_f64().ok_or_else(|| Error::Format(format!("{} is not a number", rest[0])))?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("mass {v}")));
                }
                float.push((cube, v));
            }
        }
    }
    let loaded = match mode {
        Mode::Rational => LoadedMeasure::Exact(MeasureTree::from_cubes(dim, depth, exact)?),
        Mode::Float => LoadedMeasure::Float(MeasureTree::from_cubes(dim, depth, float)?),
    };
    match &loaded {
        LoadedMeasure::Exact(t) => t.check_consistency()?,
        LoadedMeasure::Float(t) => t.check_consistency()?,
    }
    Ok(loaded)
}

pub fn save<S: Scalar>(tree: &MeasureTree<S>, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_json(tree)?)?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<LoadedMeasure> {
    from_json(&std::fs::read_to_string(path)?)
}

/// SHA-256 of the canonical file encoding, in hex.
pub fn tree_hash<S: Scalar>(tree: &MeasureTree<S>) -> Result<String> {
    Ok(hex::encode(Sha256::digest(to_json(tree)?.as_bytes())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{beta_model_measure, branching_measure, circle_measure};

    #[test]
    fn round_trips() {
        let t: MeasureTree<Rational> = branching_measure(&[0, 1, 3], 5).unwrap();
        let back = from_json(&to_json(&t).unwrap()).unwrap();
        assert_eq!(back, LoadedMeasure::Exact(t));
        let c: MeasureTree<f64> = circle_measure([0.5, 0.5], 0.25, 7).unwrap();
        let back = from_json(&to_json(&c).unwrap()).unwrap();
        assert_eq!(back.to_f64().leaves(), c.leaves());
    }

    #[test]
    fn big_integers_become_strings() {
        let t = MeasureTree::from_weights(1, 1, &[(0, u64::MAX / 2), (1, 1)]).unwrap();
        let text = to_json(&t).unwrap();
        assert!(text.contains("\"9223372036854775808\""));
        assert_eq!(from_json(&text).unwrap(), LoadedMeasure::Exact(t));
        let huge = r#"{"header":{"dim":1,"depth":1,"mode":"rational"},"leaves":[[1,0,"1","2"],[1,1,"1","2"]]}"#;
        assert_eq!(from_json(huge).unwrap().to_exact().total(), Rational::from_ratio(1, 1));
    }

    #[test]
    fn rejects_malformed_files() {
        let wrong_level = r#"{"header":{"dim":1,"depth":2,"mode":"float"},"leaves":[[1,0,1.0]]}"#;
        assert!(from_json(wrong_level).is_err());
        let wrong_width = r#"{"header":{"dim":2,"depth":1,"mode":"float"},"leaves":[[1,0,1.0]]}"#;
        assert!(from_json(wrong_width).is_err());
        let out_of_range = r#"{"header":{"dim":1,"depth":1,"mode":"float"},"leaves":[[1,2,1.0]]}"#;
        assert!(from_json(out_of_range).is_err());
        assert!(from_json("{").is_err());
    }

    #[test]
    fn hash_is_stable() {
        let a: MeasureTree<f64> = beta_model_measure(2, 0.7, 8, 42).unwrap();
        let b: MeasureTree<f64> = beta_model_measure(2, 0.7, 8, 42).unwrap();
        assert_eq!(tree_hash(&a).unwrap(), tree_hash(&b).unwrap());
        assert_eq!(tree_hash(&a).unwrap().len(), 64);
    }
}
