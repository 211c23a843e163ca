//! Fitted-model file format.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "CPWT"
//! 4       4     format version, u32 little-endian (currently 1)
//! 8       8     header length H in bytes, u64 little-endian
//! 16      H     UTF-8 JSON header (see `Header`)
//! 16+H    ...   factor matrices in order person, input-row, input-col,
//!               output-row, output-col; each `extent x rank`, row-major,
//!               f64 little-endian
//! ...     ...   if `has_target_offset`: d1' x d2' offset map, row-major f64 LE
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{FittedModel, RegressionConfig};
use crate::error::{Error, Result};
use crate::tensor::CpFactors;

pub const MODEL_MAGIC: &[u8; 4] = b"CPWT";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    shape: Vec<usize>,
    rank: usize,
    lambda: f64,
    seed: u64,
    max_sweeps: usize,
    rel_tol: f64,
    working_shape: (usize, usize),
    center_targets: bool,
    persons: Vec<String>,
    objective_trace: Vec<f64>,
    has_target_offset: bool,
}

fn put_f64s<'a>(buf: &mut Vec<u8>, values: impl Iterator<Item = &'a f64>) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_model(model: &FittedModel) -> Result<Vec<u8>> {
    let cfg = &model.config;
    let header = Header {
        shape: model.weights.shape(),
        rank: model.weights.rank(),
        lambda: cfg.lambda,
        seed: cfg.seed,
        max_sweeps: cfg.max_sweeps,
        rel_tol: cfg.rel_tol,
        working_shape: cfg.working_shape,
        center_targets: cfg.center_targets,
        persons: model.persons.clone(),
        objective_trace: model.objective_trace.clone(),
        has_target_offset: model.target_offset.is_some(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    for f in model.weights.factors() {
        put_f64s(&mut buf, f.iter());
    }
    if let Some(offset) = &model.target_offset {
        put_f64s(&mut buf, offset.iter());
    }
    Ok(buf)
}

pub fn decode_model(bytes: &[u8], origin: &Path) -> Result<FittedModel> {
    let bad = |msg: String| Error::parse(origin, msg);
    if bytes.len() < 16 || &bytes[..4] != MODEL_MAGIC {
        return Err(bad("not a CP weight file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(bad(format!("unsupported model version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(16..16usize.saturating_add(hlen))
        .ok_or_else(|| bad("truncated header".into()))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| bad(e.to_string()))?;
    if header.shape.len() != 5 {
        return Err(bad(format!(
            "expected 5 factors, header lists {:?}",
            header.shape
        )));
    }
    let (o1, o2) = (header.shape[3], header.shape[4]);
    let mut expected: usize = header.shape.iter().map(|n| n * header.rank).sum();
    if header.has_target_offset {
        expected += o1 * o2;
    }
    let payload = &bytes[16 + hlen..];
    if payload.len() != expected * 8 {
        return Err(bad(format!(
            "payload is {} bytes, expected {}",
            payload.len(),
            expected * 8
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let mut take = |rows: usize, cols: usize| -> Array2<f64> {
        Array2::from_shape_vec((rows, cols), values.by_ref().take(rows * cols).collect())
            .expect("payload length checked")
    };
    let factors = header
        .shape
        .iter()
        .map(|&n| take(n, header.rank))
        .collect::<Vec<_>>();
    let target_offset = header.has_target_offset.then(|| take(o1, o2));
    Ok(FittedModel {
        weights: CpFactors::new(factors)?,
        config: RegressionConfig {
            rank: header.rank,
            lambda: header.lambda,
            max_sweeps: header.max_sweeps,
            rel_tol: header.rel_tol,
            seed: header.seed,
            working_shape: header.working_shape,
            center_targets: header.center_targets,
        },
        objective_trace: header.objective_trace,
        persons: header.persons,
        target_offset,
    })
}

pub fn write_model(model: &FittedModel, path: &Path) -> Result<()> {
    let bytes = encode_model(model)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<FittedModel> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_model(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::init_factors;
    use proptest::prelude::*;

    fn model(rank: usize, seed: u64, offset: bool) -> FittedModel {
        FittedModel {
            weights: init_factors(&[3, 2, 4, 2, 4], rank, seed).unwrap(),
            config: RegressionConfig {
                rank,
                lambda: 0.25,
                seed,
                working_shape: (2, 4),
                center_targets: offset,
                ..Default::default()
            },
            objective_trace: vec![10.0, 3.5, 3.25],
            persons: vec!["a".into(), "b".into(), "c".into()],
            target_offset: offset.then(|| Array2::from_elem((2, 4), 0.125)),
        }
    }

    proptest! {
        #[test]
        fn roundtrip_is_exact(rank in 1usize..4, seed in 0u64..1000, offset in any::<bool>()) {
            let m = model(rank, seed, offset);
            let bytes = encode_model(&m).unwrap();
            prop_assert_eq!(decode_model(&bytes, Path::new("mem")).unwrap(), m);
        }
    }

    #[test]
    fn layout_prefix_and_length() {
        let m = model(2, 1, false);
        let bytes = encode_model(&m).unwrap();
        assert_eq!(&bytes[..4], b"CPWT");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 16 + hlen + 8 * 2 * (3 + 2 + 4 + 2 + 4));
        let first = f64::from_le_bytes(bytes[16 + hlen..24 + hlen].try_into().unwrap());
        assert_eq!(first, m.weights.factor(0)[[0, 0]]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_model(&model(1, 0, false)).unwrap();
        assert!(decode_model(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad, Path::new("x")).is_err());
    }
}
