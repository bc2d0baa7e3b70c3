//! JSON interchange format for CTDs.
//!
//! ```text
//! {"dims": d, "modes": [M_1, ...], "svalues": [...], "factors": [[column-major M_j*r], ...]}
//! ```
//!
//! Reals are written with 17 significant digits so a round trip is bit-exact.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::ctd::Ctd;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct CtdDocument {
    dims: usize,
    modes: Vec<usize>,
    svalues: Vec<f64>,
    factors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CtdDocumentOut {
    dims: usize,
    modes: Vec<usize>,
    svalues: Vec<Box<RawValue>>,
    factors: Vec<Vec<Box<RawValue>>>,
}

/// A real formatted with 17 significant digits.
pub fn real17(x: f64) -> Result<Box<RawValue>> {
    if !x.is_finite() {
        return Err(Error::InvalidInput(format!("cannot serialize non-finite value {x}")));
    }
    Ok(RawValue::from_string(format!("{x:.16e}"))?)
}

fn reals17(xs: &[f64]) -> Result<Vec<Box<RawValue>>> {
    xs.iter().map(|&x| real17(x)).collect()
}

pub fn ctd_to_json(u: &Ctd) -> Result<String> {
    let doc = CtdDocumentOut {
        dims: u.dims(),
        modes: u.modes().to_vec(),
        svalues: reals17(u.svalues())?,
        factors: u.factors().iter().map(|f| reals17(f.as_slice())).collect::<Result<_>>()?,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

/// Parses a CTD document. Input need not be normalized; the result is.
pub fn ctd_from_json(text: &str) -> Result<Ctd> {
    let doc: CtdDocument = serde_json::from_str(text)?;
    if doc.dims != doc.modes.len() || doc.dims != doc.factors.len() {
        return Err(Error::Shape(format!(
            "dims = {} but {} modes and {} factor arrays",
            doc.dims,
            doc.modes.len(),
            doc.factors.len()
        )));
    }
    let r = doc.svalues.len();
    let factors = doc
        .factors
        .into_iter()
        .zip(&doc.modes)
        .enumerate()
        .map(|(j, (data, &m))| {
            if data.len() != m * r {
                return Err(Error::Shape(format!(
                    "factor {j} has {} entries, expected {m}*{r}",
                    data.len()
                )));
            }
            Ok(DMatrix::from_vec(m, r, data))
        })
        .collect::<Result<Vec<_>>>()?;
    Ctd::from_parts(doc.modes, doc.svalues, factors)
}

pub fn read_ctd(path: &Path) -> Result<Ctd> {
    ctd_from_json(&fs::read_to_string(path)?)
}

pub fn write_ctd(path: &Path, u: &Ctd) -> Result<()> {
    fs::write(path, ctd_to_json(u)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctd::random_ctd;

    #[test]
    fn round_trip_is_bit_exact() {
        let u = random_ctd(&[3, 4, 2], 3, -1.0, 1.0, 9).unwrap();
        let text = ctd_to_json(&u).unwrap();
        let back = ctd_from_json(&text).unwrap();
        assert_eq!(back.svalues(), u.svalues());
        for j in 0..3 {
            assert_eq!(back.factor(j), u.factor(j));
        }
    }

    #[test]
    fn writes_seventeen_digits() {
        assert_eq!(real17(0.1).unwrap().get(), "1.0000000000000001e-1");
        assert!(real17(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = r#"{"dims": 2, "modes": [2, 2], "svalues": [1.0], "factors": [[1, 0], [1]]}"#;
        assert!(matches!(ctd_from_json(bad), Err(Error::Shape(_))));
        let bad = r#"{"dims": 3, "modes": [2, 2], "svalues": [], "factors": [[], []]}"#;
        assert!(matches!(ctd_from_json(bad), Err(Error::Shape(_))));
    }

    #[test]
    fn normalizes_on_read() {
        let doc = r#"{"dims": 2, "modes": [2, 2], "svalues": [1.0], "factors": [[3, 4], [0, 2]]}"#;
        let u = ctd_from_json(doc).unwrap();
        assert!((u.svalues()[0] - 10.0).abs() < 1e-14);
    }
}
