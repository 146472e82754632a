//! Checkpoint format: a little-endian binary container of named matrices.
//! Layout: magic "RMN1", u32 entry count, then per entry a u32 name length,
//! the UTF-8 name, a trainable byte, u32 rows, u32 cols, and rows*cols f64
//! values in row-major order. Raw f64 bits make save/load bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tape::ParamStore;

const MAGIC: &[u8; 4] = b"RMN1";

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(store.len() as u32).to_le_bytes()).map_err(io)?;
    for idx in 0..store.len() {
        let name = store.name(idx).as_bytes();
        let a = store.value(idx);
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name).map_err(io)?;
        w.write_all(&[store.is_trainable(idx) as u8]).map_err(io)?;
        w.write_all(&(a.nrows() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(a.ncols() as u32).to_le_bytes()).map_err(io)?;
        for v in a.iter() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    fn bytes<const N: usize>(r: &mut impl Read, path: &Path) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Checkpoint(format!("{}: truncated", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        Ok(buf)
    }

    let magic: [u8; 4] = bytes(&mut r, path)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic {magic:?}, not a checkpoint",
            path.display()
        )));
    }
    let count = u32::from_le_bytes(bytes(&mut r, path)?) as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = u32::from_le_bytes(bytes(&mut r, path)?) as usize;
        if name_len > 4096 {
            return Err(Error::Checkpoint(format!(
                "{}: implausible name length {name_len}",
                path.display()
            )));
        }
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::Checkpoint(format!("{}: truncated", path.display()))
            } else {
                Error::io(path, e)
            }
        })?;
        let name = String::from_utf8(name_buf)
            .map_err(|_| Error::Checkpoint(format!("{}: name is not UTF-8", path.display())))?;
        let trainable = bytes::<1>(&mut r, path)?[0] != 0;
        let rows = u32::from_le_bytes(bytes(&mut r, path)?) as usize;
        let cols = u32::from_le_bytes(bytes(&mut r, path)?) as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(f64::from_le_bytes(bytes(&mut r, path)?));
        }
        let a = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        store.add(&name, a, trainable);
    }
    // Anything after the last entry means the file was not written by save.
    let mut tail = [0u8; 1];
    match r.read(&mut tail) {
        Ok(0) => Ok(store),
        Ok(_) => Err(Error::Checkpoint(format!("{}: trailing bytes", path.display()))),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{glorot, normal};
    use crate::rng::substream;

    fn sample_store() -> ParamStore {
        let mut rng = substream(5, "ckpt:test");
        let mut s = ParamStore::new();
        s.add("enc.l0.self", glorot(&mut rng, 4, 3), true);
        s.add("lm.embed", normal(&mut rng, 7, 2, 0.02), false);
        s.add("head.w", Array2::zeros((1, 4)), true);
        s
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let store = sample_store();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.rmn");
        save(&store, &p).unwrap();
        let back = load(&p).unwrap();
        assert_eq!(back.len(), store.len());
        for i in 0..store.len() {
            assert_eq!(back.name(i), store.name(i), "insertion order preserved");
            assert_eq!(back.is_trainable(i), store.is_trainable(i));
            assert_eq!(back.value(i), store.value(i));
        }
        assert_eq!(back.digest(""), store.digest(""));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let store = sample_store();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.rmn");
        save(&store, &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let cut = dir.path().join("cut.rmn");
        std::fs::write(&cut, &bytes[..bytes.len() - 9]).unwrap();
        match load(&cut) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("truncated")),
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_and_trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.rmn");
        std::fs::write(&p, b"JUNKxxxx").unwrap();
        assert!(matches!(load(&p), Err(Error::Checkpoint(_))));

        let store = sample_store();
        let good = dir.path().join("model.rmn");
        save(&store, &good).unwrap();
        let mut bytes = std::fs::read(&good).unwrap();
        bytes.push(0);
        let padded = dir.path().join("padded.rmn");
        std::fs::write(&padded, bytes).unwrap();
        match load(&padded) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains("trailing")),
            other => panic!("expected trailing-bytes error, got {other:?}"),
        }
    }
}
