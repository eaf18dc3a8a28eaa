//! JSON shapes for complex data: scalars are `{"re": .., "im": ..}`, vectors
//! are arrays of those and matrices are arrays of rows.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cx {
    pub re: f64,
    pub im: f64,
}

impl From<C64> for Cx {
    fn from(c: C64) -> Self {
        Cx { re: c.re, im: c.im }
    }
}

impl From<Cx> for C64 {
    fn from(c: Cx) -> Self {
        C64::new(c.re, c.im)
    }
}

pub mod cvec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Cx> = v.iter().map(|&c| c.into()).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let w = Vec::<Cx>::deserialize(d)?;
        Ok(w.into_iter().map(Into::into).collect())
    }
}

pub mod cmat {
    use super::*;

    pub fn to_rows(m: &CMat) -> Vec<Vec<Cx>> {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].into()).collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<Cx>]) -> Result<CMat, String> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err("ragged matrix rows".into());
        }
        Ok(CMat::from_fn(r, c, |i, j| rows[i][j].into()))
    }

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<Cx>>::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

pub mod cmat_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<_> = v.iter().map(cmat::to_rows).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        let w = Vec::<Vec<Vec<Cx>>>::deserialize(d)?;
        w.iter().map(|r| cmat::from_rows(r).map_err(serde::de::Error::custom)).collect()
    }
}

pub mod cvec_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<C64>], s: S) -> Result<S::Ok, S::Error> {
        let w: Vec<Vec<Cx>> = v.iter().map(|x| x.iter().map(|&c| c.into()).collect()).collect();
        w.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<C64>>, D::Error> {
        let w = Vec::<Vec<Cx>>::deserialize(d)?;
        Ok(w.into_iter().map(|x| x.into_iter().map(Into::into).collect()).collect())
    }
}

/// Complex literal for CSV cells, e.g. `-0.5+2i`.
pub fn complex_literal(c: C64) -> String {
    if c.im < 0.0 || (c.im == 0.0 && c.im.is_sign_negative()) {
        format!("{}-{}i", c.re, -c.im)
    } else {
        format!("{}+{}i", c.re, c.im)
    }
}
