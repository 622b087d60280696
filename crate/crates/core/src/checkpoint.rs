//! Self-describing binary checkpoints.
//!
//! Layout (little-endian): 8-byte magic, `u32` format version, body, then
//! the SHA-256 of everything before it. The body holds the model kind, the
//! resolved config as TOML text, series names, normalization statistics,
//! the architecture, every named parameter tensor and the training history.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::gan::{GanEpoch, GanModel};
use crate::nets::{Activation, FeedForwardStack, LstmStack, Params};
use crate::types::ModelKind;
use crate::vae::{VaeEpoch, VaeModel};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"NGANCKPT";
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gan(GanModel),
    Vae(VaeModel),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Gan(_) => ModelKind::Gan,
            Model::Vae(_) => ModelKind::Vae,
        }
    }

    pub fn n_series(&self) -> usize {
        match self {
            Model::Gan(m) => m.n_series(),
            Model::Vae(m) => m.n_series,
        }
    }

    pub fn window_len(&self) -> usize {
        match self {
            Model::Gan(m) => m.window_len,
            Model::Vae(m) => m.window_len,
        }
    }

    pub fn training_log(&self) -> String {
        match self {
            Model::Gan(m) => m.training_log(),
            Model::Vae(m) => m.training_log(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub series_names: Vec<String>,
    pub stats: NormStats,
    pub model: Model,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        stats: NormStats,
        config: ExperimentConfig,
        series_names: Vec<String>,
    ) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config,
            series_names,
            stats,
            model,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        write_body(&mut body, self);
        seal(self.format_version, &body)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MAGIC.len() + 4;
        if bytes.len() < header + DIGEST_LEN {
            return Err(Error::CorruptCheckpoint(format!(
                "{} bytes is shorter than any checkpoint",
                bytes.len()
            )));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[MAGIC.len()..header].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let (content, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(content).as_slice() != digest {
            return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
        }
        let mut r = Cursor::new(&content[header..]);
        let ckpt = read_body(&mut r, version).map_err(|e| match e {
            Error::Io { source, .. } => Error::CorruptCheckpoint(source.to_string()),
            other => other,
        })?;
        if (r.position() as usize) != content.len() - header {
            return Err(Error::CorruptCheckpoint("trailing bytes".into()));
        }
        Ok(ckpt)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn seal(version: u32, body: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(body.len() + 44);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(body);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

// Writing into a Vec cannot fail.
fn put_u32(w: &mut Vec<u8>, v: usize) {
    w.write_u32::<LE>(u32::try_from(v).expect("size fits in u32"))
        .unwrap();
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.write_f64::<LE>(v).unwrap();
}

fn put_str(w: &mut Vec<u8>, s: &str) {
    put_u32(w, s.len());
    w.extend_from_slice(s.as_bytes());
}

fn put_f64s(w: &mut Vec<u8>, vs: &[f64]) {
    put_u32(w, vs.len());
    for &v in vs {
        put_f64(w, v);
    }
}

fn put_params(w: &mut Vec<u8>, p: &Params) {
    put_u32(w, p.layout().len());
    for (name, shape, values) in p.tensors() {
        put_str(w, &name);
        put_u32(w, shape.len());
        for d in shape {
            put_u32(w, d);
        }
        for v in values {
            put_f64(w, v);
        }
    }
}

fn put_lstm(w: &mut Vec<u8>, net: &LstmStack) {
    for v in [
        net.input_dim(),
        net.hidden_dim(),
        net.num_layers(),
        net.output_dim(),
    ] {
        put_u32(w, v);
    }
    w.push(net.output_activation().code());
    put_params(w, net.params());
}

fn put_ff(w: &mut Vec<u8>, net: &FeedForwardStack) {
    for v in net.widths() {
        put_u32(w, v);
    }
    for a in net.activations() {
        w.push(a.code());
    }
    put_params(w, net.params());
}

fn write_body(w: &mut Vec<u8>, c: &Checkpoint) {
    w.push(match c.model.kind() {
        ModelKind::Gan => 0,
        ModelKind::Vae => 1,
    });
    put_str(w, &c.config.render());
    put_u32(w, c.series_names.len());
    for name in &c.series_names {
        put_str(w, name);
    }
    put_f64s(w, &c.stats.min);
    put_f64s(w, &c.stats.max);
    match &c.model {
        Model::Gan(m) => {
            put_u32(w, m.window_len);
            put_lstm(w, &m.generator);
            put_lstm(w, &m.discriminator);
            put_u32(w, m.history.len());
            for e in &m.history {
                put_u32(w, e.epoch);
                put_f64(w, e.d_loss);
                put_f64(w, e.g_loss);
            }
        }
        Model::Vae(m) => {
            put_u32(w, m.n_series);
            put_u32(w, m.window_len);
            put_f64(w, m.kl_weight);
            put_ff(w, &m.encoder);
            put_ff(w, &m.decoder);
            put_u32(w, m.history.len());
            for e in &m.history {
                put_u32(w, e.epoch);
                put_f64(w, e.total);
                put_f64(w, e.recon_term);
                put_f64(w, e.kl_term);
            }
        }
    }
}

type Reader<'a> = Cursor<&'a [u8]>;

fn io(e: std::io::Error) -> Error {
    Error::CorruptCheckpoint(e.to_string())
}

fn get_u32(r: &mut Reader) -> Result<usize> {
    r.read_u32::<LE>().map(|v| v as usize).map_err(io)
}

fn get_f64(r: &mut Reader) -> Result<f64> {
    r.read_f64::<LE>().map_err(io)
}

fn get_len(r: &mut Reader, elem: usize) -> Result<usize> {
    let n = get_u32(r)?;
    let remaining = r.get_ref().len() - r.position() as usize;
    if n.saturating_mul(elem) > remaining {
        return Err(Error::CorruptCheckpoint(format!(
            "length {n} overruns the file"
        )));
    }
    Ok(n)
}

fn get_str(r: &mut Reader) -> Result<String> {
    let n = get_len(r, 1)?;
    let mut buf = vec![0; n];
    r.read_exact(&mut buf).map_err(io)?;
    String::from_utf8(buf).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
}

fn get_f64s(r: &mut Reader) -> Result<Vec<f64>> {
    let n = get_len(r, 8)?;
    (0..n).map(|_| get_f64(r)).collect()
}

fn get_activation(r: &mut Reader) -> Result<Activation> {
    let code = r.read_u8().map_err(io)?;
    Activation::from_code(code)
        .ok_or_else(|| Error::CorruptCheckpoint(format!("unknown activation code {code}")))
}

fn get_params(r: &mut Reader, into: &mut Params) -> Result<()> {
    let count = get_len(r, 1)?;
    if count != into.layout().len() {
        return Err(Error::ShapeMismatch(format!(
            "expected {} tensors, found {count}",
            into.layout().len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for entry in into.layout() {
        let name = get_str(r)?;
        let ndim = get_len(r, 4)?;
        let shape: Vec<usize> = (0..ndim).map(|_| get_u32(r)).collect::<Result<_>>()?;
        if name != entry.name || shape != entry.shape {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name} {shape:?} does not match expected {} {:?}",
                entry.name, entry.shape
            )));
        }
        let values = (0..entry.len())
            .map(|_| get_f64(r))
            .collect::<Result<_>>()?;
        tensors.push((name, shape, values));
    }
    into.load_tensors(&tensors)
}

fn positive(v: usize, what: &str) -> Result<usize> {
    if v == 0 {
        return Err(Error::ShapeMismatch(format!("{what} is zero")));
    }
    Ok(v)
}

fn get_lstm(r: &mut Reader) -> Result<LstmStack> {
    let input = positive(get_u32(r)?, "LSTM input width")?;
    let hidden = positive(get_u32(r)?, "LSTM hidden width")?;
    let layers = positive(get_u32(r)?, "LSTM layer count")?;
    let output = positive(get_u32(r)?, "LSTM output width")?;
    let act = get_activation(r)?;
    let mut net = LstmStack::zeros(input, hidden, layers, output, act);
    get_params(r, net.params_mut())?;
    Ok(net)
}

fn get_ff(r: &mut Reader) -> Result<FeedForwardStack> {
    let mut widths = [0; 4];
    for w in &mut widths {
        *w = positive(get_u32(r)?, "layer width")?;
    }
    let mut acts = [Activation::Identity; 3];
    for a in &mut acts {
        *a = get_activation(r)?;
    }
    let mut net = FeedForwardStack::zeros(widths, acts);
    get_params(r, net.params_mut())?;
    Ok(net)
}

fn read_body(r: &mut Reader, version: u32) -> Result<Checkpoint> {
    let kind = r.read_u8().map_err(io)?;
    let config = ExperimentConfig::parse(&get_str(r)?)?;
    let names = (0..get_len(r, 4)?)
        .map(|_| get_str(r))
        .collect::<Result<Vec<_>>>()?;
    let stats = NormStats {
        min: get_f64s(r)?,
        max: get_f64s(r)?,
    };
    let model = match kind {
        0 => {
            let window_len = get_u32(r)?;
            let generator = get_lstm(r)?;
            let discriminator = get_lstm(r)?;
            let history = (0..get_len(r, 20)?)
                .map(|_| {
                    Ok(GanEpoch {
                        epoch: get_u32(r)?,
                        d_loss: get_f64(r)?,
                        g_loss: get_f64(r)?,
                    })
                })
                .collect::<Result<_>>()?;
            if generator.output_dim() != discriminator.input_dim()
                || discriminator.output_dim() != 1
            {
                return Err(Error::ShapeMismatch(format!(
                    "generator emits {} series, discriminator reads {} and emits {}",
                    generator.output_dim(),
                    discriminator.input_dim(),
                    discriminator.output_dim()
                )));
            }
            Model::Gan(GanModel {
                generator,
                discriminator,
                window_len,
                history,
            })
        }
        1 => {
            let n_series = get_u32(r)?;
            let window_len = get_u32(r)?;
            let kl_weight = get_f64(r)?;
            let encoder = get_ff(r)?;
            let decoder = get_ff(r)?;
            let history = (0..get_len(r, 28)?)
                .map(|_| {
                    Ok(VaeEpoch {
                        epoch: get_u32(r)?,
                        total: get_f64(r)?,
                        recon_term: get_f64(r)?,
                        kl_term: get_f64(r)?,
                    })
                })
                .collect::<Result<_>>()?;
            let flat = n_series * window_len;
            if encoder.input_dim() != flat
                || decoder.output_dim() != flat
                || encoder.output_dim() != 2 * decoder.input_dim()
            {
                return Err(Error::ShapeMismatch(format!(
                    "encoder {:?} / decoder {:?} inconsistent with {n_series} x {window_len} windows",
                    encoder.widths(),
                    decoder.widths()
                )));
            }
            Model::Vae(VaeModel {
                encoder,
                decoder,
                n_series,
                window_len,
                kl_weight,
                history,
            })
        }
        other => {
            return Err(Error::CorruptCheckpoint(format!(
                "unknown model kind {other}"
            )))
        }
    };
    let n = model.n_series();
    if stats.min.len() != n || stats.max.len() != n || names.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "model has {n} series, stats have {} and names {}",
            stats.min.len(),
            names.len()
        )));
    }
    if model.window_len() != config.window_len {
        return Err(Error::ShapeMismatch(format!(
            "model window {} vs config T = {}",
            model.window_len(),
            config.window_len
        )));
    }
    Ok(Checkpoint {
        format_version: version,
        config,
        series_names: names,
        stats,
        model,
    })
}
