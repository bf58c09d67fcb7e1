use std::io::{Read, Write};
use std::path::Path;

use super::config::{HeadKind, ModelConfig};
use crate::error::{Error, Result};
use crate::numerics::{rng, Slot, Tensor, TensorSet};

/// Shared body `θ` and output-layer head `ω`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    pub body: TensorSet,
    pub head: TensorSet,
}

/// Branch prefixes: closeness then period.
pub const BRANCHES: [&str; 2] = ["c", "p"];

/// Body slots in canonical order.
pub fn body_slots(cfg: &ModelConfig) -> Vec<Slot> {
    let (d, da, dd, c, ch) = (cfg.hidden, cfg.head_width(), cfg.cells, cfg.image[2], cfg.cnn_channels);
    let mut out = Vec::new();
    let mut push = |name: String, shape: Vec<usize>| out.push(Slot::new(name, shape));
    for br in BRANCHES {
        for s in 0..cfg.blocks {
            let p = format!("{br}{s}");
            if s == 0 {
                push(format!("{p}.embed_tra.w"), vec![dd, d]);
                push(format!("{p}.embed_tra.b"), vec![1, d]);
            }
            push(format!("{p}.embed_txt.w"), vec![cfg.text_dims, d]);
            push(format!("{p}.embed_txt.b"), vec![1, d]);
            for m in ["wq", "wk", "wv"] {
                push(format!("{p}.attn.{m}"), vec![d, d]);
            }
            for i in 0..cfg.heads {
                for m in ["wq", "wk", "wv"] {
                    push(format!("{p}.attn.h{i}.{m}"), vec![d, da]);
                }
            }
            push(format!("{p}.attn.wo"), vec![d, d]);
            push(format!("{p}.ln1.g"), vec![1, d]);
            push(format!("{p}.ln1.b"), vec![1, d]);
            push(format!("{p}.ffn.w1"), vec![d, d]);
            push(format!("{p}.ffn.b1"), vec![1, d]);
            push(format!("{p}.ffn.w2"), vec![d, d]);
            push(format!("{p}.ffn.b2"), vec![1, d]);
            push(format!("{p}.ln2.g"), vec![1, d]);
            push(format!("{p}.ln2.b"), vec![1, d]);
            push(format!("{p}.gcn.w"), vec![dd, d]);
            push(format!("{p}.gcn.b"), vec![1, d]);
            push(format!("{p}.cnn.k1"), vec![9 * c, ch]);
            push(format!("{p}.cnn.b1"), vec![1, ch]);
            push(format!("{p}.cnn.k2"), vec![9 * ch, ch]);
            push(format!("{p}.cnn.b2"), vec![1, ch]);
            push(format!("{p}.cnn.proj"), vec![ch, d]);
            push(format!("{p}.cnn.pb"), vec![1, d]);
        }
    }
    if cfg.head == HeadKind::Scalar {
        push("head.proj".into(), vec![d, dd]);
    }
    out
}

/// Head slots: `w1`, `w2`, `b`.
pub fn head_slots(cfg: &ModelConfig) -> Vec<Slot> {
    let (d, dd) = (cfg.hidden, cfg.cells);
    match cfg.head {
        HeadKind::Matrix => vec![
            Slot::new("head.w1", vec![d, dd]),
            Slot::new("head.w2", vec![d, dd]),
            Slot::new("head.b", vec![1, dd]),
        ],
        HeadKind::Scalar => vec![
            Slot::new("head.w1", vec![1, 1]),
            Slot::new("head.w2", vec![1, 1]),
            Slot::new("head.b", vec![1, dd]),
        ],
    }
}

fn init_slot(slot: &Slot, r: &mut rand_chacha::ChaCha8Rng) -> Tensor {
    let name = slot.name.as_str();
    let shape = slot.shape.clone();
    if name.ends_with("ln1.g") || name.ends_with("ln2.g") {
        return Tensor::filled(shape, 1.0);
    }
    // Spatial gates start near the multiplicative identity.
    if name.ends_with("gcn.b") || name.ends_with("cnn.pb") {
        return Tensor::filled(shape, 1.0);
    }
    if (name == "head.w1" || name == "head.w2") && shape == [1, 1] {
        return Tensor::filled(shape, 0.5);
    }
    if name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2") {
        return Tensor::zeros(shape);
    }
    let fan_in = shape[0];
    rng::init_uniform(r, shape, fan_in)
}

impl ParameterSet {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::stream(seed, 0x1417);
        let body = TensorSet::from_pairs(
            body_slots(cfg)
                .iter()
                .map(|s| (s.name.clone(), init_slot(s, &mut r)))
                .collect(),
        );
        let head = Self::init_head(cfg, rng::derive(seed, &[0x4ead]));
        Ok(Self { body, head })
    }

    pub fn init_head(cfg: &ModelConfig, seed: u64) -> TensorSet {
        let mut r = rng::stream(seed, 0x4ead);
        TensorSet::from_pairs(
            head_slots(cfg)
                .iter()
                .map(|s| (s.name.clone(), init_slot(s, &mut r)))
                .collect(),
        )
    }

    /// Body slots followed by head slots.
    pub fn all(&self) -> TensorSet {
        self.body.concat(&self.head)
    }

    pub fn from_all(cfg: &ModelConfig, all: TensorSet) -> Result<Self> {
        let nb = body_slots(cfg).len();
        if all.len() != nb + head_slots(cfg).len() {
            return Err(Error::Shape(format!(
                "{} slots for a model with {}",
                all.len(),
                nb + head_slots(cfg).len()
            )));
        }
        let out = Self {
            body: all.slice(0..nb),
            head: all.slice(nb..all.len()),
        };
        out.check(cfg)?;
        Ok(out)
    }

    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        check_layout(&self.body, &body_slots(cfg), "body")?;
        check_layout(&self.head, &head_slots(cfg), "head")
    }

    pub fn numel(&self) -> usize {
        self.body.numel() + self.head.numel()
    }
}

pub(crate) fn check_layout(set: &TensorSet, slots: &[Slot], what: &str) -> Result<()> {
    if set.len() != slots.len() {
        return Err(Error::Shape(format!(
            "{what}: {} slots, expected {}",
            set.len(),
            slots.len()
        )));
    }
    for ((name, t), slot) in set.iter().zip(slots) {
        if name != slot.name || t.shape() != slot.shape.as_slice() {
            return Err(Error::Shape(format!(
                "{what}: slot {name} {:?} where {} {:?} was expected",
                t.shape(),
                slot.name,
                slot.shape
            )));
        }
    }
    Ok(())
}

const MAGIC: &[u8; 4] = b"CCPK";
const VERSION: u32 = 1;

/// Writes a checkpoint:
///
/// ```text
/// "CCPK" | version: u32 | config_len: u32 | config JSON
/// | n_body: u32 | n_head: u32
/// | per tensor: name_len: u32 | name | rank: u32 | dims: u64 × rank | values: f64 × numel
/// ```
///
/// All integers and floats are little-endian.
pub fn save_checkpoint(path: impl AsRef<Path>, cfg: &ModelConfig, params: &ParameterSet) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let json = serde_json::to_vec(cfg)?;
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(params.body.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(params.head.len() as u32).to_le_bytes());
    for (name, t) in params.body.iter().chain(params.head.iter()) {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &x in t.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ParameterSet)> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = c.u32()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(c.take(len)?)?;
    let (nb, nh) = (c.u32()? as usize, c.u32()? as usize);
    let mut read_set = |n: usize| -> Result<TensorSet> {
        let mut set = TensorSet::new();
        for _ in 0..n {
            let len = c.u32()? as usize;
            let name =
                String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::Checkpoint("non-UTF-8 name".into()))?;
            let rank = c.u32()? as usize;
            let shape = (0..rank)
                .map(|_| c.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = c
                .take(numel * 8)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            set.push(name, Tensor::new(shape, data)?);
        }
        Ok(set)
    };
    let body = read_set(nb)?;
    let head = read_set(nh)?;
    if c.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    let params = ParameterSet { body, head };
    params.check(&cfg)?;
    Ok((cfg, params))
}
