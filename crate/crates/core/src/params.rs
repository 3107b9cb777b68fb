//! Named parameters and checkpoints.
//!
//! A [`Param`] is a named, swappable slot holding the current value of one
//! model parameter; forward passes clone the tensor out (cheap, shared
//! storage) and optimizer steps replace it. A [`Checkpoint`] is a plain
//! name→(shape, data) snapshot supporting averaging and file round-trips.
//!
//! Checkpoint file layout: magic bytes `SQBR1`, a little-endian u32 entry
//! count, then per entry a u32 name length, the UTF-8 name, a u32 rank and
//! u32 dims; after the manifest, each parameter's values follow as raw
//! little-endian f32 in manifest order. In-memory values are f64; the file
//! format quantizes to f32.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"SQBR1";

#[derive(Clone)]
pub struct Param {
    name: Rc<str>,
    cell: Rc<RefCell<Tensor>>,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Param {
        Param {
            name: name.into().into(),
            cell: Rc::new(RefCell::new(value)),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Current value; the clone shares storage with the slot, so gradients
    /// accumulated through it are visible until the next `set`.
    pub fn value(&self) -> Tensor {
        self.cell.borrow().clone()
    }

    pub fn set(&self, value: Tensor) {
        debug_assert_eq!(value.shape(), self.cell.borrow().shape());
        *self.cell.borrow_mut() = value;
    }

    /// Installs fresh data as a new gradient-target leaf.
    pub fn replace_data(&self, data: Vec<f64>) {
        let shape = self.cell.borrow().shape().to_vec();
        let t = Tensor::new(data, &shape).expect("replace_data shape").requires_grad();
        *self.cell.borrow_mut() = t;
    }

    pub fn clear_grad(&self) {
        self.cell.borrow().clear_grad();
    }
}

impl std::fmt::Debug for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Param({}, {:?})", self.name, self.cell.borrow().shape())
    }
}

pub fn zero_grads(params: &[Param]) {
    for p in params {
        p.clear_grad();
    }
}

/// Snapshot of a parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    entries: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Checkpoint {
        Checkpoint {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        self.entries.insert(name.into(), (shape, data));
    }

    pub fn from_params(params: &[Param]) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        for p in params {
            let t = p.value();
            ckpt.insert(p.name(), t.shape().to_vec(), t.data().to_vec());
        }
        ckpt
    }

    pub fn get(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.entries.get(name).map(|(s, d)| (&s[..], &d[..]))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize], &[f64])> {
        self.entries
            .iter()
            .map(|(n, (s, d))| (n.as_str(), &s[..], &d[..]))
    }

    /// Writes every stored value back into the matching parameter slots.
    /// Every param must be present with an equal shape.
    pub fn apply_to(&self, params: &[Param]) -> Result<()> {
        for p in params {
            let (shape, data) = self.get(p.name()).ok_or_else(|| {
                Error::Checkpoint(format!("parameter `{}` missing from checkpoint", p.name()))
            })?;
            let current = p.value();
            if shape != current.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}`: checkpoint shape {:?} != model shape {:?}",
                    p.name(),
                    shape,
                    current.shape()
                )));
            }
            p.replace_data(data.to_vec());
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&(self.entries.len() as u32).to_le_bytes())?;
        for (name, (shape, _)) in &self.entries {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
        }
        for (_, data) in self.entries.values() {
            for &v in data {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic bytes in {}",
                path.display()
            )));
        }
        let count = read_u32(&mut r)? as usize;
        let mut manifest: Vec<(String, Vec<usize>)> = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let mut name_buf = vec![0u8; name_len];
            r.read_exact(&mut name_buf)?;
            let name = String::from_utf8(name_buf)
                .map_err(|e| Error::Checkpoint(format!("bad name: {e}")))?;
            let rank = read_u32(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(read_u32(&mut r)? as usize);
            }
            manifest.push((name, shape));
        }
        let mut ckpt = Checkpoint::new();
        for (name, shape) in manifest {
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            let mut buf = [0u8; 4];
            for _ in 0..numel {
                r.read_exact(&mut buf)?;
                data.push(f32::from_le_bytes(buf) as f64);
            }
            ckpt.insert(name, shape, data);
        }
        Ok(ckpt)
    }
}

impl Default for Checkpoint {
    fn default() -> Self {
        Checkpoint::new()
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

/// Elementwise arithmetic mean over checkpoints with identical manifests.
///
/// The mean is computed relative to the first checkpoint
/// (`c0 + Σ(ci − c0)/n`) so that averaging identical checkpoints returns
/// them bit for bit.
pub fn average_checkpoints(checkpoints: &[Checkpoint]) -> Result<Checkpoint> {
    let first = checkpoints
        .first()
        .ok_or_else(|| Error::Checkpoint("average: empty checkpoint list".into()))?;
    for (i, c) in checkpoints.iter().enumerate().skip(1) {
        if c.len() != first.len() {
            return Err(Error::Checkpoint(format!(
                "average: checkpoint {i} has {} parameters, expected {}",
                c.len(),
                first.len()
            )));
        }
        for (name, shape, _) in first.iter() {
            match c.get(name) {
                Some((s, _)) if s == shape => {}
                Some((s, _)) => {
                    return Err(Error::Checkpoint(format!(
                        "average: parameter `{name}` shape {s:?} != {shape:?} in checkpoint {i}"
                    )))
                }
                None => {
                    return Err(Error::Checkpoint(format!(
                        "average: parameter `{name}` missing from checkpoint {i}"
                    )))
                }
            }
        }
    }
    let n = checkpoints.len() as f64;
    let mut out = Checkpoint::new();
    for (name, shape, base) in first.iter() {
        let mut mean = base.to_vec();
        for j in 0..mean.len() {
            let mut delta = 0.0f64;
            for c in &checkpoints[1..] {
                delta += c.get(name).unwrap().1[j] - base[j];
            }
            mean[j] += delta / n;
        }
        out.insert(name, shape.to_vec(), mean);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(pairs: &[(&str, &[f64])]) -> Checkpoint {
        let mut c = Checkpoint::new();
        for (name, data) in pairs {
            c.insert(*name, vec![data.len()], data.to_vec());
        }
        c
    }

    #[test]
    fn midpoint_of_two() {
        let a = ckpt(&[("w", &[0.0])]);
        let b = ckpt(&[("w", &[2.0])]);
        let avg = average_checkpoints(&[a, b]).unwrap();
        assert_eq!(avg.get("w").unwrap().1, &[1.0]);
    }

    #[test]
    fn identical_checkpoints_average_to_identity() {
        let c = ckpt(&[("w", &[0.1, -0.3, 7.25]), ("b", &[1e-7])]);
        let avg = average_checkpoints(&[c.clone(), c.clone(), c.clone()]).unwrap();
        assert_eq!(avg, c);
    }

    #[test]
    fn mismatched_names_rejected() {
        let a = ckpt(&[("w", &[0.0])]);
        let b = ckpt(&[("x", &[2.0])]);
        assert!(average_checkpoints(&[a, b]).is_err());
    }

    #[test]
    fn mismatched_shapes_rejected() {
        let a = ckpt(&[("w", &[0.0])]);
        let b = ckpt(&[("w", &[1.0, 2.0])]);
        let err = average_checkpoints(&[a, b]).unwrap_err().to_string();
        assert!(err.contains("w"));
    }

    #[test]
    fn file_roundtrip_quantizes_to_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sqbr");
        let mut c = Checkpoint::new();
        c.insert("layer.w", vec![2, 2], vec![0.25, -1.5, 3.0e-5, 123.456]);
        c.insert("layer.b", vec![2], vec![0.1, 0.2]);
        c.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        let (shape, data) = loaded.get("layer.w").unwrap();
        assert_eq!(shape, &[2, 2]);
        for (got, want) in data.iter().zip([0.25, -1.5, 3.0e-5, 123.456]) {
            assert_eq!(*got, want as f32 as f64);
        }
    }

    #[test]
    fn magic_bytes_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.sqbr");
        std::fs::write(&path, b"NOPE!whatever").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }

    #[test]
    fn apply_to_rejects_shape_mismatch() {
        let p = Param::new("w", Tensor::zeros(&[2]).unwrap().requires_grad());
        let c = ckpt(&[("w", &[1.0, 2.0, 3.0])]);
        assert!(c.apply_to(&[p]).is_err());
    }
}
