//! Complex matrices as JSON: row-major nested arrays of `[re, im]` pairs.
//! Plain numbers are accepted on input as purely real entries.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;
use crate::linalg::{c, CMat};
use crate::operator::HermitianMatrix;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Pair([f64; 2]),
    Real(f64),
}

impl Entry {
    fn value(self) -> num_complex::Complex64 {
        match self {
            Entry::Pair([re, im]) => c(re, im),
            Entry::Real(re) => c(re, 0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<Entry>>);

impl From<&CMat> for MatrixJson {
    fn from(m: &CMat) -> Self {
        MatrixJson(
            (0..m.nrows())
                .map(|i| {
                    (0..m.ncols())
                        .map(|j| Entry::Pair([m[(i, j)].re, m[(i, j)].im]))
                        .collect()
                })
                .collect(),
        )
    }
}

impl TryFrom<MatrixJson> for CMat {
    type Error = Error;
    fn try_from(m: MatrixJson) -> Result<Self, Error> {
        let rows = m.0.len();
        let cols = m.0.first().map_or(0, Vec::len);
        if rows == 0 || m.0.iter().any(|r| r.len() != cols) {
            return Err(Error::Config(
                "matrix rows must be nonempty and of equal length".into(),
            ));
        }
        Ok(CMat::from_fn(rows, cols, |i, j| m.0[i][j].value()))
    }
}

impl TryFrom<MatrixJson> for HermitianMatrix {
    type Error = Error;
    fn try_from(m: MatrixJson) -> Result<Self, Error> {
        // JSON input is typed by hand; allow decimal-rounding asymmetry.
        HermitianMatrix::with_tol(CMat::try_from(m)?, 1e-9)
    }
}

impl From<HermitianMatrix> for MatrixJson {
    fn from(h: HermitianMatrix) -> Self {
        MatrixJson::from(h.matrix())
    }
}

pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    MatrixJson::from(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
    let raw = MatrixJson::deserialize(d)?;
    CMat::try_from(raw).map_err(serde::de::Error::custom)
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        let raw: Vec<MatrixJson> = ms.iter().map(MatrixJson::from).collect();
        raw.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let raw = Vec::<MatrixJson>::deserialize(d)?;
        raw.into_iter()
            .map(|m| CMat::try_from(m).map_err(serde::de::Error::custom))
            .collect()
    }
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMat>, D::Error> {
        let raw = Option::<MatrixJson>::deserialize(d)?;
        raw.map(|m| CMat::try_from(m).map_err(serde::de::Error::custom))
            .transpose()
    }
}
