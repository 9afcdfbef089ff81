//! `TNS1` tensor files: magic, dtype byte (1 = little-endian f32), rank byte,
//! `rank` little-endian u32 dimensions, then the raw values in row-major order.

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNS1";
const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<u32>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::InvalidParameter("tensor rank above 255".into()));
        }
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize)).ok_or(Error::InvalidInput)?;
        if count != data.len() {
            return Err(Error::InvalidParameter(format!("shape holds {count} values but {} were given", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::BadMagic);
        }
        let dtype = *bytes.get(4).ok_or(Error::Truncated)?;
        if dtype != DTYPE_F32 {
            return Err(Error::InvalidParameter(format!("unsupported tensor dtype {dtype}")));
        }
        let rank = *bytes.get(5).ok_or(Error::Truncated)? as usize;
        let dims_end = 6 + 4 * rank;
        let dim_bytes = bytes.get(6..dims_end).ok_or(Error::Truncated)?;
        let dims: Vec<u32> = dim_bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize)).ok_or(Error::InvalidInput)?;
        let body = &bytes[dims_end..];
        let need = count.checked_mul(4).ok_or(Error::InvalidInput)?;
        if body.len() < need {
            return Err(Error::Truncated);
        }
        if body.len() > need {
            return Err(Error::InvalidParameter("trailing bytes after tensor data".into()));
        }
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor { dims, data })
    }
}
