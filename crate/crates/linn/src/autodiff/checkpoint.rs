use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::tensor::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"LINN";
const VERSION: u32 = 1;

/// A saved model: embedding width, variable universe size, and named arrays.
///
/// On disk: magic `LINN`, version (u32), d (u32), variable count (u32),
/// array count (u32), then per array a u32-length-prefixed UTF-8 name,
/// row/col counts (u64 each) and row-major f64 data. All integers and floats
/// are little-endian, so round-trips are bit-exact.
#[derive(Debug)]
pub struct Checkpoint {
    pub d: u32,
    pub variable_count: u32,
    pub arrays: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.d.to_le_bytes())?;
        w.write_all(&self.variable_count.to_le_bytes())?;
        w.write_all(&(self.arrays.len() as u32).to_le_bytes())?;
        for (name, t) in &self.arrays {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.rows() as u64).to_le_bytes())?;
            w.write_all(&(t.cols() as u64).to_le_bytes())?;
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: bad magic {:?}",
                path.display(),
                magic
            )));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported version {}",
                path.display(),
                version
            )));
        }
        let d = read_u32(&mut r)?;
        let variable_count = read_u32(&mut r)?;
        let count = read_u32(&mut r)?;
        let mut arrays = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
            let rows = read_u64(&mut r)? as usize;
            let cols = read_u64(&mut r)? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("{}: array too large", path.display())))?;
            let mut data = vec![0f64; n];
            let mut buf = [0u8; 8];
            for v in &mut data {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            arrays.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        // Anything left over means the writer and reader disagree.
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::Checkpoint(format!(
                "{}: trailing bytes after {} arrays",
                path.display(),
                count
            )));
        }
        Ok(Checkpoint {
            d,
            variable_count,
            arrays,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}
