//! FEAT files: the ASCII header `FEAT <T> <D>\n` followed by `T·D` little-endian
//! f32 values in row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::FeatureSequence;
use crate::numerics::Tensor;

pub fn encode_features(features: &FeatureSequence) -> Vec<u8> {
    let (t, d) = (features.num_frames(), features.dim());
    let mut out = format!("FEAT {t} {d}\n").into_bytes();
    out.reserve(t * d * 4);
    for &v in features.frames.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn parse_features(bytes: &[u8]) -> Result<FeatureSequence> {
    let nl = bytes
        .iter()
        .take(64)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Feat("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Feat("header is not UTF-8".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some("FEAT") {
        return Err(Error::Feat("bad magic".into()));
    }
    let mut dim = || -> Result<usize> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Feat(format!("malformed header {header:?}")))
    };
    let (t, d) = (dim()?, dim()?);
    let body = &bytes[nl + 1..];
    if body.len() != t * d * 4 {
        return Err(Error::Feat(format!(
            "header declares {t}x{d} = {} values, payload holds {} bytes",
            t * d,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    FeatureSequence::new(Tensor::new(vec![t, d], data)?)
}

pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    parse_features(&fs::read(path)?)
}

pub fn write_feature_file(path: impl AsRef<Path>, features: &FeatureSequence) -> Result<()> {
    fs::write(path, encode_features(features))?;
    Ok(())
}
