//! Checkpoint files.
//!
//! ```text
//! PENNET-CHECKPOINT 1
//! spec-digest <sha256 hex of the model spec>
//! tensors <n>
//! <name> <dims joined by 'x'> <byte offset> <byte length>   (n lines)
//! end
//! <payload: little-endian f32 values>
//! <crc32 of the payload, little-endian u32>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Model, ModelSpec};
use crate::tensor::Scalar;

const MAGIC: &str = "PENNET-CHECKPOINT 1";

struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

/// Serialises every parameter and running statistic of `model`.
pub fn to_bytes<T: Scalar>(model: &Model<T>) -> Vec<u8> {
    let state = model.named_state();
    let mut header = format!(
        "{MAGIC}\nspec-digest {}\ntensors {}\n",
        model.spec().digest(),
        state.len()
    );
    let mut payload = Vec::new();
    for (name, tensor) in &state {
        let dims: Vec<String> = tensor.shape().iter().map(usize::to_string).collect();
        let bytes = tensor.numel() * 4;
        let _ = writeln!(header, "{name} {} {} {bytes}", dims.join("x"), payload.len());
        for &v in tensor.data() {
            let v = v.to_f32().expect("finite parameter");
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    header.push_str("end\n");
    let mut out = header.into_bytes();
    let crc = crc32fast::hash(&payload);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save<T: Scalar>(model: &Model<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

/// Reads the spec digest stamped in a checkpoint.
pub fn read_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (digest, _, _) = parse_header(&bytes, path)?;
    Ok(digest)
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(String, Vec<Entry>, usize)> {
    let malformed = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    let mut lines = Vec::new();
    let mut pos = 0;
    loop {
        let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') else {
            return Err(if lines.is_empty() {
                malformed("not a checkpoint file")
            } else {
                Error::Truncated { path: path.to_path_buf() }
            });
        };
        let line = std::str::from_utf8(&bytes[pos..pos + nl])
            .map_err(|_| malformed("header is not text"))?;
        pos += nl + 1;
        if lines.is_empty() && line != MAGIC {
            return Err(malformed("not a checkpoint file"));
        }
        if line == "end" {
            break;
        }
        lines.push(line);
    }
    let digest = lines
        .get(1)
        .and_then(|l| l.strip_prefix("spec-digest "))
        .ok_or_else(|| malformed("missing spec digest"))?
        .to_string();
    let count: usize = lines
        .get(2)
        .and_then(|l| l.strip_prefix("tensors "))
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| malformed("missing tensor count"))?;
    if lines.len() != 3 + count {
        return Err(malformed("tensor count does not match the listing"));
    }
    let entries = lines[3..]
        .iter()
        .map(|line| {
            let parts: Vec<&str> = line.split(' ').collect();
            let [name, dims, offset, len] = parts[..] else {
                return Err(malformed(&format!("bad tensor line `{line}`")));
            };
            let shape = dims
                .split('x')
                .map(str::parse)
                .collect::<std::result::Result<Vec<usize>, _>>()
                .map_err(|_| malformed(&format!("bad shape `{dims}`")))?;
            let num = |s: &str| s.parse::<usize>().map_err(|_| malformed(&format!("bad number `{s}`")));
            Ok(Entry { name: name.to_string(), shape, offset: num(offset)?, len: num(len)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((digest, entries, pos))
}

/// Loads a checkpoint into a model built from `spec`.
///
/// Checks, in order: the spec digest, the file length, the payload
/// checksum, and the tensor names and shapes.
pub fn load<T: Scalar>(path: &Path, spec: &ModelSpec) -> Result<Model<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, path, spec)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8], path: &Path, spec: &ModelSpec) -> Result<Model<T>> {
    let (digest, entries, start) = parse_header(bytes, path)?;
    let expected = spec.digest();
    if digest != expected {
        return Err(Error::SpecMismatch { expected, found: digest });
    }
    let payload_len: usize = entries.iter().map(|e| e.len).sum();
    if bytes.len() < start + payload_len + 4 {
        return Err(Error::Truncated { path: path.to_path_buf() });
    }
    if bytes.len() > start + payload_len + 4 {
        return Err(Error::Checkpoint(format!("{}: trailing bytes", path.display())));
    }
    let payload = &bytes[start..start + payload_len];
    let stored = u32::from_le_bytes(bytes[start + payload_len..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut model = Model::<T>::new(spec, 0)?;
    let names: Vec<(String, Vec<usize>)> = model
        .named_state()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();
    if names.len() != entries.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors stored, model has {}",
            entries.len(),
            names.len()
        )));
    }
    for ((tensor, (name, shape)), entry) in model.state_mut().into_iter().zip(&names).zip(&entries) {
        if &entry.name != name || &entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "expected {name} {shape:?}, found {} {:?}",
                entry.name, entry.shape
            )));
        }
        if entry.len != tensor.numel() * 4 || entry.offset + entry.len > payload_len {
            return Err(Error::Checkpoint(format!("bad extent for {name}")));
        }
        let raw = &payload[entry.offset..entry.offset + entry.len];
        for (dst, chunk) in tensor.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            *dst = T::from_f64_lossy(v as f64);
        }
    }
    model.eval();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn spec() -> ModelSpec {
        ModelSpec::reduced(3, 2, 5)
    }

    fn trained_ish() -> Model<f32> {
        let mut model = Model::<f32>::new(&spec(), 4).unwrap();
        // move running statistics away from their initial values
        let x = Tensor::from_f64([2, 2, 32], &(0..128).map(|i| (i as f64 * 0.3).sin()).collect::<Vec<_>>()).unwrap();
        model.predict(&x).unwrap();
        model
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut model = trained_ish();
        save(&model, &path).unwrap();
        let mut loaded: Model<f32> = load(&path, &spec()).unwrap();
        for ((n1, a), (n2, b)) in model.named_state().iter().zip(loaded.named_state()) {
            assert_eq!(n1, &n2);
            assert_eq!(a.data(), b.data(), "{n1}");
        }
        model.eval();
        let x = Tensor::from_f64([1, 2, 40], &(0..80).map(|i| (i as f64).cos()).collect::<Vec<_>>()).unwrap();
        assert_eq!(model.predict(&x).unwrap(), loaded.predict(&x).unwrap());
        assert_eq!(read_digest(&path).unwrap(), spec().digest());
    }

    #[test]
    fn other_spec_is_rejected() {
        let bytes = to_bytes(&trained_ish());
        let other = ModelSpec::reduced(3, 4, 5);
        assert!(matches!(
            from_bytes::<f32>(&bytes, Path::new("x"), &other),
            Err(Error::SpecMismatch { .. })
        ));
    }

    #[test]
    fn corrupted_byte_fails_checksum() {
        let mut bytes = to_bytes(&trained_ish());
        let n = bytes.len();
        bytes[n - 20] ^= 0x40;
        assert!(matches!(
            from_bytes::<f32>(&bytes, Path::new("x"), &spec()),
            Err(Error::Checksum { .. })
        ));
    }

    #[test]
    fn truncated_file() {
        let bytes = to_bytes(&trained_ish());
        for cut in [bytes.len() - 1, bytes.len() / 2, 30] {
            let err = from_bytes::<f32>(&bytes[..cut], Path::new("x"), &spec()).unwrap_err();
            assert!(matches!(err, Error::Truncated { .. }), "cut {cut}: {err}");
        }
        assert!(matches!(
            from_bytes::<f32>(b"hello\n", Path::new("x"), &spec()),
            Err(Error::Checkpoint(_))
        ));
    }
}
