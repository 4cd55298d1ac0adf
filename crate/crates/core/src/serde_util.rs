//! JSON encodings: complex numbers as `[re, im]`, matrices as row-major
//! nested arrays of such pairs.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMatrix, CVector, C64};

pub fn to_pair(z: C64) -> [f64; 2] {
    [z.re, z.im]
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| to_pair(m[(i, j)])).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let r = rows.len();
    let cc = rows.first().map(|x| x.len()).unwrap_or(0);
    if rows.iter().any(|row| row.len() != cc) {
        return Err("ragged matrix rows".into());
    }
    Ok(CMatrix::from_fn(r, cc, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
}

pub mod cplx {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        to_pair(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let p = <[f64; 2]>::deserialize(d)?;
        Ok(C64::new(p[0], p[1]))
    }
}

pub mod cplx_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|z| to_pair(*z)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let p = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(p.into_iter().map(|x| C64::new(x[0], x[1])).collect())
    }
}

pub mod cmatrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        rows_to_matrix(&rows).map_err(D::Error::custom)
    }
}

pub mod cmatrix_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(matrix_to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        let all = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        all.iter()
            .map(|rows| rows_to_matrix(rows).map_err(D::Error::custom))
            .collect()
    }
}

pub mod cvector_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CVector], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|x| x.iter().map(|z| to_pair(*z)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVector>, D::Error> {
        let all = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        Ok(all
            .into_iter()
            .map(|x| CVector::from_iterator(x.len(), x.into_iter().map(|p| C64::new(p[0], p[1]))))
            .collect())
    }
}
