//! Binary model checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! b"SDPC"  u32 version
//! u32 n_entries, then n_entries × (u32 len, key bytes, u32 len, value bytes)
//! 3 × (u64 n, n × f64)   encoder, decoder, latent parameters
//! ```
//!
//! Entries hold the architecture, the noise schedule and `epochs_done`, all
//! as UTF-8 text.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::score_models::{GenerativeModel, ModelConfig};
use crate::sde::VpSchedule;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"SDPC";
const VERSION: u32 = 1;

fn entries(model: &GenerativeModel, epochs_done: usize) -> Vec<(&'static str, String)> {
    let c = &model.config;
    vec![
        ("latent_dim", c.latent_dim.to_string()),
        ("time_embed_dim", c.time_embed_dim.to_string()),
        ("decoder_hidden", c.decoder_hidden.to_string()),
        ("decoder_blocks", c.decoder_blocks.to_string()),
        ("encoder_hidden", c.encoder_hidden.to_string()),
        ("encoder_features", c.encoder_features.to_string()),
        ("latent_hidden", c.latent_hidden.to_string()),
        ("latent_blocks", c.latent_blocks.to_string()),
        ("beta_min", model.schedule.beta_min.to_string()),
        ("beta_max", model.schedule.beta_max.to_string()),
        ("epochs_done", epochs_done.to_string()),
    ]
}

pub fn to_bytes(model: &GenerativeModel, epochs_done: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let kv = entries(model, epochs_done);
    out.extend_from_slice(&(kv.len() as u32).to_le_bytes());
    for (k, v) in kv {
        for s in [k.as_bytes(), v.as_bytes()] {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            out.extend_from_slice(s);
        }
    }
    for params in [model.encoder.params(), model.decoder.params(), model.latent.params()] {
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for v in params {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn text(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("entry is not UTF-8".into()))
    }

    fn vector(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("length overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn field<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = map
        .get(key)
        .ok_or_else(|| Error::Checkpoint(format!("missing entry '{key}'")))?;
    raw.parse()
        .map_err(|_| Error::Checkpoint(format!("entry '{key}' has bad value '{raw}'")))
}

/// Returns the model and the number of completed training epochs.
pub fn from_bytes(buf: &[u8]) -> Result<(GenerativeModel, usize)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n = r.u32()?;
    let mut map = BTreeMap::new();
    for _ in 0..n {
        let k = r.text()?;
        let v = r.text()?;
        map.insert(k, v);
    }
    let config = ModelConfig {
        latent_dim: field(&map, "latent_dim")?,
        time_embed_dim: field(&map, "time_embed_dim")?,
        decoder_hidden: field(&map, "decoder_hidden")?,
        decoder_blocks: field(&map, "decoder_blocks")?,
        encoder_hidden: field(&map, "encoder_hidden")?,
        encoder_features: field(&map, "encoder_features")?,
        latent_hidden: field(&map, "latent_hidden")?,
        latent_blocks: field(&map, "latent_blocks")?,
    };
    let schedule = VpSchedule::new(field(&map, "beta_min")?, field(&map, "beta_max")?)?;
    let epochs_done = field(&map, "epochs_done")?;
    let mut model = GenerativeModel::new(config, schedule, 0)?;
    model.encoder.set_params(r.vector()?)?;
    model.decoder.set_params(r.vector()?)?;
    model.latent.set_params(r.vector()?)?;
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok((model, epochs_done))
}

pub fn save(path: &Path, model: &GenerativeModel, epochs_done: usize) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&to_bytes(model, epochs_done))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load(path: &Path) -> Result<(GenerativeModel, usize)> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    from_bytes(&buf).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn model() -> GenerativeModel {
        let config = ModelConfig {
            latent_dim: 5,
            time_embed_dim: 6,
            decoder_hidden: 7,
            decoder_blocks: 2,
            encoder_hidden: 4,
            encoder_features: 9,
            latent_hidden: 3,
            latent_blocks: 1,
        };
        let mut m = GenerativeModel::new(config, VpSchedule::new(0.05, 12.5).unwrap(), 3).unwrap();
        let mut r = crate::rng::seeded(1);
        for v in m.decoder.params_mut().iter_mut().chain(m.latent.params_mut()) {
            *v = r.random_range(-1.0..1.0) * 1e-3_f64.powi(r.random_range(0..4));
        }
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let (back, epochs) = from_bytes(&to_bytes(&m, 17)).unwrap();
        assert_eq!(epochs, 17);
        assert_eq!(back.config, m.config);
        assert_eq!(back.schedule, m.schedule);
        assert_eq!(back.encoder.params(), m.encoder.params());
        assert_eq!(back.decoder.params(), m.decoder.params());
        assert_eq!(back.latent.params(), m.latent.params());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.sdpc");
        save(&p, &model(), 2).unwrap();
        assert_eq!(load(&p).unwrap().1, 2);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let bytes = to_bytes(&model(), 0);
        assert!(matches!(from_bytes(b"NOPE\x01\0\0\0"), Err(Error::Checkpoint(_))));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Checkpoint(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(from_bytes(&extra), Err(Error::Checkpoint(_))));
        let mut version = bytes;
        version[4] = 9;
        assert!(matches!(from_bytes(&version), Err(Error::Checkpoint(_))));
    }
}
