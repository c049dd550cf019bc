//! Parameter container files.
//!
//! Layout:
//!
//! ```text
//! MPIVDR-CHECKPOINT 1\n
//! key = value\n            (plain-text header, one record per line)
//! ...
//! \n                       (empty line ends the header)
//! u32 LE  array count
//! per array: u32 LE ndim, then ndim × u32 LE dims
//! all values, array by array, as f32 LE
//! ```

use std::path::Path;

use super::mlp::{Mlp, MlpSpec};
use super::tensor::Tensor;
use crate::kv::KeyValues;
use crate::{Error, Result};

const MAGIC: &str = "MPIVDR-CHECKPOINT 1";

pub fn encode_checkpoint(header: &KeyValues, arrays: &[&Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(header.to_text().as_bytes());
    out.push(b'\n');
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.ndim() as u32).to_le_bytes());
        for &d in a.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for a in arrays {
        for &v in a.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<(KeyValues, Vec<Tensor>)> {
    let bad = |reason: &str| Error::format("checkpoint", path, reason.to_string());

    let magic_end = MAGIC.len();
    if bytes.len() < magic_end + 1 || &bytes[..magic_end] != MAGIC.as_bytes() || bytes[magic_end] != b'\n' {
        return Err(bad("missing checkpoint magic line"));
    }
    let rest = &bytes[magic_end + 1..];
    // The header ends at the first empty line; an empty header is just "\n".
    let header_len = if rest.first() == Some(&b'\n') {
        0
    } else {
        rest.windows(2)
            .position(|w| w == b"\n\n")
            .map(|p| p + 1)
            .ok_or_else(|| bad("unterminated header"))?
    };
    let header_text =
        std::str::from_utf8(&rest[..header_len]).map_err(|_| bad("header is not valid UTF-8"))?;
    let header = KeyValues::parse(header_text, path)?;
    let mut cursor = &rest[header_len + 1..];

    let read_u32 = |cursor: &mut &[u8]| -> Result<u32> {
        if cursor.len() < 4 {
            return Err(bad("truncated shape table"));
        }
        let v = u32::from_le_bytes(cursor[..4].try_into().unwrap());
        *cursor = &cursor[4..];
        Ok(v)
    };
    let count = read_u32(&mut cursor)? as usize;
    if count > 1 << 20 {
        return Err(bad("implausible array count"));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = read_u32(&mut cursor)? as usize;
        if ndim > 16 {
            return Err(bad("implausible array rank"));
        }
        let dims = (0..ndim)
            .map(|_| read_u32(&mut cursor).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        shapes.push(dims);
    }
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if cursor.len() != total * 4 {
        return Err(bad(&format!(
            "expected {} bytes of values, found {}",
            total * 4,
            cursor.len()
        )));
    }
    let mut arrays = Vec::with_capacity(count);
    for shape in shapes {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = cursor[..4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        cursor = &cursor[4 * n..];
        if data.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite parameter value"));
        }
        arrays.push(Tensor::from_vec(&shape, data)?);
    }
    Ok((header, arrays))
}

pub fn write_checkpoint(path: &Path, header: &KeyValues, arrays: &[&Tensor]) -> Result<()> {
    std::fs::write(path, encode_checkpoint(header, arrays)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<(KeyValues, Vec<Tensor>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Records an [`MlpSpec`] under `prefix` (e.g. `position_net.`).
pub fn put_mlp_spec(header: &mut KeyValues, prefix: &str, spec: &MlpSpec) {
    header.set_list(&format!("{prefix}layer_widths"), &spec.layer_widths);
    header.set(&format!("{prefix}negative_slope"), spec.negative_slope);
    header.set(&format!("{prefix}seed"), spec.seed);
}

pub fn get_mlp_spec(header: &KeyValues, prefix: &str, path: &Path) -> Result<MlpSpec> {
    let spec = MlpSpec {
        layer_widths: header.parse_list(&format!("{prefix}layer_widths"), path)?,
        negative_slope: header.parse_value(&format!("{prefix}negative_slope"), path)?,
        seed: header.parse_value(&format!("{prefix}seed"), path)?,
    };
    spec.validate()
        .map_err(|e| Error::format("checkpoint", path, e.to_string()))?;
    Ok(spec)
}

/// Writes a single network with its spec in the header.
pub fn save_mlp(path: &Path, mlp: &Mlp) -> Result<()> {
    let mut header = KeyValues::new();
    header.set("kind", "mlp");
    put_mlp_spec(&mut header, "", mlp.spec());
    let arrays: Vec<&Tensor> = mlp.params().iter().map(|p| &p.value).collect();
    write_checkpoint(path, &header, &arrays)
}

pub fn load_mlp(path: &Path) -> Result<Mlp> {
    let (header, arrays) = read_checkpoint(path)?;
    let spec = get_mlp_spec(&header, "", path)?;
    Mlp::from_params(spec, arrays).map_err(|e| Error::format("checkpoint", path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mlp_round_trip_keeps_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let mlp = Mlp::new(MlpSpec::new(vec![3, 6, 2], 17)).unwrap();
        save_mlp(&path, &mlp).unwrap();
        let back = load_mlp(&path).unwrap();
        assert_eq!(back.spec(), mlp.spec());
        for (a, b) in mlp.flat_values().iter().zip(back.flat_values()) {
            assert_eq!(*a as f32 as f64, b);
        }
    }

    #[test]
    fn header_is_plain_text() {
        let mut header = KeyValues::new();
        header.set("seed", 5);
        let bytes = encode_checkpoint(&header, &[&Tensor::zeros(&[2])]);
        assert!(bytes.starts_with(b"MPIVDR-CHECKPOINT 1\nseed = 5\n\n"));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let bytes = encode_checkpoint(&KeyValues::new(), &[&Tensor::zeros(&[3, 2])]);
        for cut in [0, 10, bytes.len() - 1] {
            assert!(decode_checkpoint(&bytes[..cut], Path::new("t")).is_err());
        }
        assert!(decode_checkpoint(&bytes, Path::new("t")).is_ok());
    }

    proptest! {
        #[test]
        fn container_round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..4, 1..3), 0..4),
                                seed in any::<u64>()) {
            let arrays: Vec<Tensor> = shapes.iter().enumerate().map(|(i, s)| {
                let n: usize = s.iter().product();
                let data = (0..n).map(|j| ((seed ^ (i * 31 + j) as u64) % 1000) as f64 / 8.0).collect();
                Tensor::from_vec(s, data).unwrap()
            }).collect();
            let mut header = KeyValues::new();
            header.set("seed", seed);
            let refs: Vec<&Tensor> = arrays.iter().collect();
            let (h, back) = decode_checkpoint(&encode_checkpoint(&header, &refs), Path::new("p")).unwrap();
            prop_assert_eq!(h, header);
            prop_assert_eq!(back, arrays);
        }
    }
}
