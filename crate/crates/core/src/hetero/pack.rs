//! Packing many small named arrays into one contiguous transfer buffer.

use serde::{Deserialize, Serialize};

/// Every array starts on a multiple of this many bytes in the payload.
pub const PACK_ALIGN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DType {
    F64,
    F32,
    U64,
    U8,
}

impl DType {
    pub fn elem_bytes(self) -> usize {
        match self {
            DType::F64 | DType::U64 => 8,
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArrayData {
    F64(Vec<f64>),
    F32(Vec<f32>),
    U64(Vec<u64>),
    U8(Vec<u8>),
}

impl ArrayData {
    pub fn dtype(&self) -> DType {
        match self {
            ArrayData::F64(_) => DType::F64,
            ArrayData::F32(_) => DType::F32,
            ArrayData::U64(_) => DType::U64,
            ArrayData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            ArrayData::F64(v) => v.len(),
            ArrayData::F32(v) => v.len(),
            ArrayData::U64(v) => v.len(),
            ArrayData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn byte_len(&self) -> usize {
        self.len() * self.dtype().elem_bytes()
    }

    fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            ArrayData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            ArrayData::U8(v) => out.extend_from_slice(v),
        }
    }

    fn read_le(dtype: DType, bytes: &[u8]) -> Self {
        match dtype {
            DType::F64 => ArrayData::F64(
                bytes
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect(),
            ),
            DType::F32 => ArrayData::F32(
                bytes
                    .chunks_exact(4)
                    .map(|b| f32::from_le_bytes(b.try_into().expect("4-byte chunk")))
                    .collect(),
            ),
            DType::U64 => ArrayData::U64(
                bytes
                    .chunks_exact(8)
                    .map(|b| u64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect(),
            ),
            DType::U8 => ArrayData::U8(bytes.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub data: ArrayData,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, data: ArrayData) -> Self {
        Self {
            name: name.into(),
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub dtype: DType,
    /// Byte offset of the first element.
    pub offset: usize,
    /// Element count.
    pub len: usize,
    /// Alignment bytes inserted before this entry.
    pub pad_before: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PackedBuffer {
    pub manifest: Vec<ManifestEntry>,
    pub payload: Vec<u8>,
}

impl PackedBuffer {
    pub fn payload_bytes(&self) -> usize {
        self.payload.len()
    }

    pub fn padding_bytes(&self) -> usize {
        self.manifest.iter().map(|e| e.pad_before).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PackError {
    #[error("nothing to pack")]
    Empty,
    #[error("manifest entry `{name}` does not fit the payload ({reason})")]
    ManifestMismatch { name: String, reason: String },
}

/// Concatenates `arrays` (little-endian, [`PACK_ALIGN`]-aligned) into one
/// payload.
pub fn pack(arrays: &[NamedArray]) -> Result<PackedBuffer, PackError> {
    if arrays.is_empty() {
        return Err(PackError::Empty);
    }
    let total: usize = arrays
        .iter()
        .map(|a| a.data.byte_len() + PACK_ALIGN - 1)
        .sum();
    let mut payload = Vec::with_capacity(total);
    let mut manifest = Vec::with_capacity(arrays.len());
    for a in arrays {
        let pad_before = (PACK_ALIGN - payload.len() % PACK_ALIGN) % PACK_ALIGN;
        payload.resize(payload.len() + pad_before, 0);
        manifest.push(ManifestEntry {
            name: a.name.clone(),
            dtype: a.data.dtype(),
            offset: payload.len(),
            len: a.data.len(),
            pad_before,
        });
        a.data.write_le(&mut payload);
    }
    Ok(PackedBuffer { manifest, payload })
}

pub fn unpack(buffer: &PackedBuffer) -> Result<Vec<NamedArray>, PackError> {
    let mismatch = |e: &ManifestEntry, reason: String| PackError::ManifestMismatch {
        name: e.name.clone(),
        reason,
    };
    let mut cursor = 0usize;
    let mut out = Vec::with_capacity(buffer.manifest.len());
    for e in &buffer.manifest {
        if e.offset != cursor + e.pad_before {
            return Err(mismatch(
                e,
                format!("offset {} after cursor {cursor} + pad {}", e.offset, e.pad_before),
            ));
        }
        let end = e
            .len
            .checked_mul(e.dtype.elem_bytes())
            .and_then(|b| b.checked_add(e.offset))
            .ok_or_else(|| mismatch(e, "length overflows".into()))?;
        if end > buffer.payload.len() {
            return Err(mismatch(
                e,
                format!("ends at {end}, payload has {}", buffer.payload.len()),
            ));
        }
        out.push(NamedArray {
            name: e.name.clone(),
            data: ArrayData::read_le(e.dtype, &buffer.payload[e.offset..end]),
        });
        cursor = end;
    }
    if cursor != buffer.payload.len() {
        return Err(PackError::ManifestMismatch {
            name: "<trailer>".into(),
            reason: format!("{} unclaimed payload bytes", buffer.payload.len() - cursor),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits_eq(a: &[NamedArray], b: &[NamedArray]) -> bool {
        a.len() == b.len()
            && a.iter().zip(b).all(|(x, y)| {
                x.name == y.name
                    && match (&x.data, &y.data) {
                        (ArrayData::F64(p), ArrayData::F64(q)) => {
                            p.iter().map(|v| v.to_bits()).eq(q.iter().map(|v| v.to_bits()))
                        }
                        (ArrayData::F32(p), ArrayData::F32(q)) => {
                            p.iter().map(|v| v.to_bits()).eq(q.iter().map(|v| v.to_bits()))
                        }
                        (p, q) => p == q,
                    }
            })
    }

    #[test]
    fn single_array_payload_is_its_bytes() {
        let a = vec![NamedArray::new("t", ArrayData::F64(vec![1.5, -0.0, f64::NAN]))];
        let p = pack(&a).unwrap();
        assert_eq!(p.payload.len(), 24);
        assert_eq!(&p.payload[..8], &1.5f64.to_le_bytes());
        assert!(bits_eq(&unpack(&p).unwrap(), &a));
    }

    #[test]
    fn mixed_types_are_aligned() {
        let a = vec![
            NamedArray::new("flags", ArrayData::U8(vec![1, 2, 3])),
            NamedArray::new("empty", ArrayData::F32(vec![])),
            NamedArray::new("q", ArrayData::F32(vec![0.25; 3])),
            NamedArray::new("id", ArrayData::U64(vec![7, u64::MAX])),
        ];
        let p = pack(&a).unwrap();
        assert!(p.manifest.iter().all(|e| e.offset % PACK_ALIGN == 0));
        let data: usize = a.iter().map(|x| x.data.byte_len()).sum();
        assert_eq!(p.payload_bytes(), data + p.padding_bytes());
        let back = unpack(&p).unwrap();
        assert!(bits_eq(&back, &a));
        assert_eq!(back[1].data.len(), 0);
    }

    #[test]
    fn errors() {
        assert_eq!(pack(&[]), Err(PackError::Empty));
        let mut p = pack(&[NamedArray::new("x", ArrayData::F64(vec![1.0; 4]))]).unwrap();
        p.payload.truncate(20);
        assert!(matches!(unpack(&p), Err(PackError::ManifestMismatch { .. })));
        let mut p = pack(&[NamedArray::new("x", ArrayData::F64(vec![1.0; 4]))]).unwrap();
        p.payload.push(0);
        assert!(unpack(&p).is_err());
    }
}
