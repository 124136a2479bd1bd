//! Self-describing binary checkpoints.
//!
//! Layout (little-endian): the 8-byte magic, the run config as `key=value`
//! text, the model dims, epochs done, the loss history, the Adam
//! hyperparameters and step count, then every tensor as name, shape,
//! values and the two Adam moments.

use std::io::{Read, Write};
use std::path::Path;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::math::{AdamConfig, AdamState};
use crate::model::{Model, ModelDims};

const MAGIC: &[u8; 8] = b"IDCKPT01";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub model: Model,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub losses: Vec<f64>,
}

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u64(&mut self, v: u64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }

    fn f64(&mut self, v: f64) -> std::io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }

    fn bytes(&mut self, b: &[u8]) -> std::io::Result<()> {
        self.u64(b.len() as u64)?;
        self.0.write_all(b)
    }

    fn floats(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u64(v.len() as u64)?;
        v.iter().try_for_each(|&x| self.f64(x))
    }
}

struct Reader<R: Read>(R);

fn corrupt(what: &str) -> Error {
    Error::Checkpoint(format!("truncated or corrupt checkpoint ({what})"))
}

impl<R: Read> Reader<R> {
    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf).map_err(|_| corrupt(what))?;
        Ok(buf)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        usize::try_from(self.u64(what)?).map_err(|_| corrupt(what))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn bytes(&mut self, what: &str) -> Result<Vec<u8>> {
        let n = self.usize(what)?;
        let mut buf = Vec::new();
        (&mut self.0)
            .take(n as u64)
            .read_to_end(&mut buf)
            .map_err(|_| corrupt(what))?;
        if buf.len() != n {
            return Err(corrupt(what));
        }
        Ok(buf)
    }

    fn floats(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.usize(what)?;
        (0..n).map(|_| self.f64(what)).collect()
    }
}

impl Checkpoint {
    pub fn write_to(&self, out: impl Write) -> Result<()> {
        self.encode(out)
            .map_err(|e| Error::Checkpoint(format!("write failed: {e}")))
    }

    fn encode(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = Writer(out);
        w.0.write_all(MAGIC)?;
        w.bytes(self.config.to_text().as_bytes())?;
        let d = self.model.dims();
        for v in [
            d.vocab_size,
            d.embed_dim,
            d.char_embed_dim,
            d.hidden_dim,
            self.epochs_done,
        ] {
            w.u64(v as u64)?;
        }
        w.floats(&self.losses)?;
        let a = self.adam.config;
        for v in [a.alpha, a.beta1, a.beta2, a.epsilon] {
            w.f64(v)?;
        }
        w.u64(self.adam.step_count())?;
        w.u64(self.model.params.len() as u64)?;
        for (id, name, t) in self.model.params.iter() {
            w.bytes(name.as_bytes())?;
            w.u64(t.shape().len() as u64)?;
            for &s in t.shape() {
                w.u64(s as u64)?;
            }
            w.floats(t.values())?;
            w.floats(&self.adam.first_moment()[id.index()])?;
            w.floats(&self.adam.second_moment()[id.index()])?;
        }
        w.0.flush()
    }

    pub fn read_from(input: impl Read) -> Result<Self> {
        let mut r = Reader(input);
        if &r.array::<8>("magic")? != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let text = String::from_utf8(r.bytes("config")?).map_err(|_| corrupt("config"))?;
        let config = RunConfig::parse(&text)?;
        let dims = ModelDims {
            vocab_size: r.usize("dims")?,
            embed_dim: r.usize("dims")?,
            char_embed_dim: r.usize("dims")?,
            hidden_dim: r.usize("dims")?,
        };
        let epochs_done = r.usize("epochs")?;
        let losses = r.floats("losses")?;
        let adam_config = AdamConfig {
            alpha: r.f64("adam")?,
            beta1: r.f64("adam")?,
            beta2: r.f64("adam")?,
            epsilon: r.f64("adam")?,
        };
        let t = r.u64("adam")?;

        let mut model = Model::new(dims, 0)?;
        let n = r.usize("tensor count")?;
        if n != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {n}",
                model.params.len()
            )));
        }
        let mut m = vec![Vec::new(); n];
        let mut v = vec![Vec::new(); n];
        let mut seen = vec![false; n];
        for _ in 0..n {
            let name = String::from_utf8(r.bytes("name")?).map_err(|_| corrupt("name"))?;
            let id = model
                .params
                .id(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown tensor `{name}`")))?;
            let rank = r.usize("shape")?;
            let shape = (0..rank)
                .map(|_| r.usize("shape"))
                .collect::<Result<Vec<_>>>()?;
            let tensor = model.params.get_mut(id);
            if shape != tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` has shape {shape:?}, expected {:?}",
                    tensor.shape()
                )));
            }
            let values = r.floats("values")?;
            let (mi, vi) = (r.floats("moments")?, r.floats("moments")?);
            if values.len() != tensor.len() || mi.len() != tensor.len() || vi.len() != tensor.len()
            {
                return Err(corrupt(&name));
            }
            tensor.values_mut().copy_from_slice(&values);
            m[id.index()] = mi;
            v[id.index()] = vi;
            seen[id.index()] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Checkpoint("duplicate tensor entries".into()));
        }
        let adam = AdamState::from_parts(adam_config, m, v, t)?;
        Ok(Checkpoint {
            config,
            model,
            adam,
            epochs_done,
            losses,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(bytes.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let model = Model::new(
            ModelDims {
                vocab_size: 6,
                embed_dim: 3,
                char_embed_dim: 2,
                hidden_dim: 4,
            },
            11,
        )
        .unwrap();
        let adam = AdamState::new(&model.params, AdamConfig::default());
        Checkpoint {
            config: RunConfig::with_seed(11),
            model,
            adam,
            epochs_done: 2,
            losses: vec![0.7, 0.5],
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let ck = sample();
        let mut a = Vec::new();
        ck.write_to(&mut a).unwrap();
        let back = Checkpoint::read_from(a.as_slice()).unwrap();
        assert_eq!(back.model, ck.model);
        assert_eq!(back.config, ck.config);
        assert_eq!(back.losses, ck.losses);
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Checkpoint::read_from(&b"nope"[..]).is_err());
        let mut a = Vec::new();
        sample().write_to(&mut a).unwrap();
        a.truncate(a.len() - 3);
        assert!(Checkpoint::read_from(a.as_slice()).is_err());
    }
}
