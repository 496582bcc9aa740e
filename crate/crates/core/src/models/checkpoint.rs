//! Checkpoint container.
//!
//! ```text
//! "RCKP" | header length: u32 LE | JSON header | payload
//! ```
//!
//! The payload is every layer's weight then bias as f32 little-endian, in
//! the header's layer order. When `has_optimizer_state` is set, the Adam
//! first moments follow in the same order, then the second moments.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelKind, Network};
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, AdamState, PlateauConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RCKP";
pub const CHECKPOINT_FORMAT: &str = "rainres-checkpoint/1";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CheckpointHeader {
    pub format: String,
    pub architecture: ModelKind,
    pub dtype: String,
    pub layers: Vec<LayerSpec>,
    pub optimizer: AdamConfig,
    pub optimizer_step: u64,
    pub has_optimizer_state: bool,
    pub scheduler: PlateauConfig,
    pub epoch: usize,
    pub seed: u64,
}

impl CheckpointHeader {
    pub fn for_model<M: Network<f32>>(
        model: &M,
        adam: &AdamState<f32>,
        with_state: bool,
        scheduler: PlateauConfig,
        epoch: usize,
        seed: u64,
    ) -> Self {
        let layers = model
            .layer_names()
            .into_iter()
            .zip(model.layers())
            .map(|(name, l)| LayerSpec {
                name,
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                kernel: 3,
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            architecture: M::KIND,
            dtype: "f32".into(),
            layers,
            optimizer: adam.config,
            optimizer_step: adam.step,
            has_optimizer_state: with_state,
            scheduler,
            epoch,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint<M> {
    pub header: CheckpointHeader,
    pub model: M,
    pub optimizer: Option<AdamState<f32>>,
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn write_checkpoint<M: Network<f32>, W: Write>(
    mut sink: W,
    header: &CheckpointHeader,
    model: &M,
    adam: Option<&AdamState<f32>>,
) -> Result<usize> {
    if header.has_optimizer_state != adam.is_some() {
        return Err(Error::Config(
            "optimizer state flag disagrees with payload".into(),
        ));
    }
    let json = serde_json::to_vec(header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for l in model.layers() {
        put_f32s(&mut buf, &l.weight);
        put_f32s(&mut buf, &l.bias);
    }
    if let Some(st) = adam {
        for m in &st.m {
            put_f32s(&mut buf, m);
        }
        for v in &st.v {
            put_f32s(&mut buf, v);
        }
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(buf.len())
}

pub fn read_checkpoint<M: Network<f32>, R: Read>(mut source: R) -> Result<Checkpoint<M>> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("missing RCKP magic".into()));
    }
    let hlen = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = bytes.get(8..8 + hlen).ok_or(Error::Truncated {
        expected: 8 + hlen,
        found: bytes.len(),
    })?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.format != CHECKPOINT_FORMAT || header.dtype != "f32" {
        return Err(Error::Format(format!(
            "unsupported checkpoint {} / {}",
            header.format, header.dtype
        )));
    }
    if header.architecture != M::KIND {
        return Err(Error::Format(format!(
            "checkpoint holds a {} model, expected {}",
            header.architecture.name(),
            M::KIND.name()
        )));
    }

    let mut model = M::init(0);
    let shapes: Vec<(usize, usize)> = model
        .layers()
        .iter()
        .map(|l| (l.in_channels, l.out_channels))
        .collect();
    let declared: Vec<(usize, usize)> = header
        .layers
        .iter()
        .map(|l| (l.in_channels, l.out_channels))
        .collect();
    if shapes != declared {
        return Err(Error::Format(format!(
            "layer shapes {declared:?} do not match {shapes:?}"
        )));
    }

    let param_len: usize = model.param_count();
    let n_floats = if header.has_optimizer_state {
        3 * param_len
    } else {
        param_len
    };
    let payload = &bytes[8 + hlen..];
    if payload.len() != 4 * n_floats {
        if payload.len() < 4 * n_floats {
            return Err(Error::Truncated {
                expected: 8 + hlen + 4 * n_floats,
                found: bytes.len(),
            });
        }
        return Err(Error::Format(
            "trailing bytes after checkpoint payload".into(),
        ));
    }
    let mut floats = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Result<Vec<f32>> {
        let v: Vec<f32> = floats.by_ref().take(n).collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(
                "checkpoint holds non-finite parameters".into(),
            ));
        }
        Ok(v)
    };
    for l in model.layers_mut() {
        l.weight = take(l.weight.len())?;
        l.bias = take(l.bias.len())?;
    }
    let optimizer = if header.has_optimizer_state {
        let shapes = model.param_shapes();
        let mut st = AdamState::new(header.optimizer, &shapes);
        st.step = header.optimizer_step;
        for (m, &n) in st.m.iter_mut().zip(&shapes) {
            *m = take(n)?;
        }
        for (v, &n) in st.v.iter_mut().zip(&shapes) {
            *v = take(n)?;
        }
        Some(st)
    } else {
        None
    };
    Ok(Checkpoint {
        header,
        model,
        optimizer,
    })
}

pub fn save_checkpoint<M: Network<f32>>(
    path: impl AsRef<Path>,
    header: &CheckpointHeader,
    model: &M,
    adam: Option<&AdamState<f32>>,
) -> Result<usize> {
    write_checkpoint(BufWriter::new(File::create(path)?), header, model, adam)
}

pub fn load_checkpoint<M: Network<f32>>(path: impl AsRef<Path>) -> Result<Checkpoint<M>> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CnnBaseline, TempNet};

    #[test]
    fn round_trip_with_optimizer_state() {
        let model = TempNet::<f32>::init(4);
        let mut adam = AdamState::new(AdamConfig::default(), &model.param_shapes());
        adam.step = 17;
        adam.m[3][0] = 0.25;
        adam.v[8][1] = 0.5;
        let header =
            CheckpointHeader::for_model(&model, &adam, true, PlateauConfig::default(), 12, 99);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header, &model, Some(&adam)).unwrap();

        let ck: Checkpoint<TempNet<f32>> = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(ck.header, header);
        assert_eq!(ck.model, model);
        assert_eq!(ck.optimizer.unwrap(), adam);
    }

    #[test]
    fn rejects_wrong_architecture_and_truncation() {
        let model = CnnBaseline::<f32>::init(1);
        let adam = AdamState::new(AdamConfig::default(), &model.param_shapes());
        let header =
            CheckpointHeader::for_model(&model, &adam, false, PlateauConfig::default(), 0, 1);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &header, &model, None).unwrap();
        assert!(read_checkpoint::<TempNet<f32>, _>(&buf[..]).is_err());
        let ck: Checkpoint<CnnBaseline<f32>> = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(ck.model, model);
        assert!(ck.optimizer.is_none());
        buf.truncate(buf.len() - 4);
        assert!(matches!(
            read_checkpoint::<CnnBaseline<f32>, _>(&buf[..]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(
            read_checkpoint::<CnnBaseline<f32>, _>(&b"NOPE...."[..]),
            Err(Error::Format(_))
        ));
    }
}
