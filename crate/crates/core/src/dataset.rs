//! Binary dataset container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "GMIPSDS\0"
//! version      u32      = 1
//! n            u64
//! K, D, dim_x  u32 x 3
//! |A_k|        u32 x K
//! |E_d|        u32 x D
//! reward_kind  u8       0 gaussian, 1 bernoulli
//! fingerprint  u32 length + UTF-8 bytes
//! behaviors    u32 count, then per matrix: u32 length + name, K*K bytes of 0/1
//! embedding    u8 has_alpha, [alpha f64 x S], probs f64 x S
//!              where S = sum_k |A_k| * sum_d |E_d|
//! logging      u8 kind, f64 parameter, probs f64 x n * sum_k |A_k|
//! target       same as logging
//! samples      per sample: context f64 x dim_x, actions u32 x K,
//!              embedding u32 x K*D (row-major), rewards f64 x K,
//!              behavior_id i32 (-1 when absent)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::policy::{FactorizedRankingPolicy, PolicyKind, PositionTable};
use crate::synth::{BehaviorMatrix, EmbeddingModel};
use crate::types::{
    Context, LoggedDataset, LoggedSample, RankingAction, RankingEmbedding, RewardKind, RewardVector,
};

pub const MAGIC: &[u8; 8] = b"GMIPSDS\0";
pub const VERSION: u32 = 1;

/// Writes `ds` after checking its invariants.
pub fn save_dataset(ds: &LoggedDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    write_dataset(ds, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<LoggedDataset> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    read_dataset(&bytes)
}

fn write_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Shape(format!("{v} does not fit in u32")))?;
    w.write_u32::<LE>(v)?;
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    write_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, vs: &[f64]) -> Result<()> {
    for &v in vs {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn write_policy<W: Write>(w: &mut W, p: &FactorizedRankingPolicy) -> Result<()> {
    let (tag, param) = match p.kind {
        PolicyKind::Softmax { beta } => (0u8, beta),
        PolicyKind::EpsilonGreedy { epsilon } => (1, epsilon),
        PolicyKind::Uniform => (2, 0.0),
        PolicyKind::Tabular => (3, 0.0),
    };
    w.write_u8(tag)?;
    w.write_f64::<LE>(param)?;
    write_f64s(w, p.table().values())
}

pub fn write_dataset<W: Write>(ds: &LoggedDataset, w: &mut W) -> Result<()> {
    let k = ds.positions();
    let d = ds.dims();
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(ds.len() as u64)?;
    write_u32(w, k)?;
    write_u32(w, d)?;
    write_u32(w, ds.context_dim())?;
    for &a in ds.action_counts() {
        write_u32(w, a)?;
    }
    for &c in ds.category_counts() {
        write_u32(w, c)?;
    }
    w.write_u8(match ds.reward_kind {
        RewardKind::Gaussian => 0,
        RewardKind::Bernoulli => 1,
    })?;
    write_str(w, &ds.config_fingerprint)?;
    write_u32(w, ds.behaviors.len())?;
    for b in &ds.behaviors {
        if b.positions() != k {
            return Err(Error::Shape(format!(
                "behavior '{}' is not {k}x{k}",
                b.name
            )));
        }
        write_str(w, &b.name)?;
        for row in b.rows() {
            w.write_all(&row)?;
        }
    }
    let emb = &ds.embedding_model;
    w.write_u8(u8::from(!emb.alpha().is_empty()))?;
    write_f64s(w, emb.alpha())?;
    write_f64s(w, emb.probs())?;
    write_policy(w, &ds.logging_policy)?;
    write_policy(w, &ds.target_policy)?;
    for s in &ds.samples {
        write_f64s(w, &s.context.0)?;
        for &a in &s.action.0 {
            write_u32(w, a)?;
        }
        for &v in s.embedding.as_slice() {
            write_u32(w, v)?;
        }
        write_f64s(w, &s.reward.0)?;
        w.write_i32::<LE>(match s.behavior_id {
            Some(b) => {
                i32::try_from(b).map_err(|_| Error::Shape("behavior id too large".into()))?
            }
            None => -1,
        })?;
    }
    Ok(())
}

/// Maps premature end of input to a corrupt-container error.
fn eof<T>(r: std::io::Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::CorruptContainer(format!("truncated while reading {what}"))
        }
        _ => Error::Io(e),
    })
}

struct Reader<'a, 'b> {
    buf: &'a mut &'b [u8],
}

impl Reader<'_, '_> {
    fn u8(&mut self, what: &str) -> Result<u8> {
        eof(self.buf.read_u8(), what)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(eof(self.buf.read_u32::<LE>(), what)? as usize)
    }

    fn f64s(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        if self.buf.len() < len.saturating_mul(8) {
            return Err(Error::CorruptContainer(format!(
                "truncated while reading {what}"
            )));
        }
        let mut out = vec![0.0; len];
        eof(self.buf.read_f64_into::<LE>(&mut out), what)?;
        Ok(out)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)?;
        if self.buf.len() < len {
            return Err(Error::CorruptContainer(format!(
                "truncated while reading {what}"
            )));
        }
        let mut bytes = vec![0; len];
        eof(self.buf.read_exact(&mut bytes), what)?;
        String::from_utf8(bytes)
            .map_err(|_| Error::CorruptContainer(format!("{what} is not UTF-8")))
    }

    fn policy(
        &mut self,
        counts: &[usize],
        n: usize,
        what: &str,
    ) -> Result<FactorizedRankingPolicy> {
        let tag = self.u8(what)?;
        let param = eof(self.buf.read_f64::<LE>(), what)?;
        let kind = match tag {
            0 => PolicyKind::Softmax { beta: param },
            1 => PolicyKind::EpsilonGreedy { epsilon: param },
            2 => PolicyKind::Uniform,
            3 => PolicyKind::Tabular,
            t => {
                return Err(Error::CorruptContainer(format!(
                    "unknown policy kind {t} in {what}"
                )))
            }
        };
        let stride: usize = counts.iter().sum();
        let values = self.f64s(n.saturating_mul(stride), what)?;
        let mut table = PositionTable::zeros(0, counts);
        for block in values.chunks(stride.max(1)) {
            table.push_block(block);
        }
        FactorizedRankingPolicy::from_table(kind, table)
    }
}

pub fn read_dataset(bytes: &[u8]) -> Result<LoggedDataset> {
    let mut cursor = bytes;
    let mut r = Reader { buf: &mut cursor };
    let mut magic = [0u8; 8];
    eof(r.buf.read_exact(&mut magic), "magic")?;
    if &magic != MAGIC {
        return Err(Error::CorruptContainer("bad magic".into()));
    }
    let version = eof(r.buf.read_u32::<LE>(), "version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = eof(r.buf.read_u64::<LE>(), "sample count")? as usize;
    let k = r.u32("K")?;
    let d = r.u32("D")?;
    let dim_x = r.u32("dim_x")?;
    if k == 0 || d == 0 {
        return Err(Error::CorruptContainer("K and D must be positive".into()));
    }
    let actions = (0..k)
        .map(|_| r.u32("action counts"))
        .collect::<Result<Vec<_>>>()?;
    let cats = (0..d)
        .map(|_| r.u32("category counts"))
        .collect::<Result<Vec<_>>>()?;
    let reward_kind = match r.u8("reward kind")? {
        0 => RewardKind::Gaussian,
        1 => RewardKind::Bernoulli,
        t => return Err(Error::CorruptContainer(format!("unknown reward kind {t}"))),
    };
    let config_fingerprint = r.string("fingerprint")?;
    let n_behaviors = r.u32("behavior count")?;
    let mut behaviors = Vec::new();
    for _ in 0..n_behaviors {
        let name = r.string("behavior name")?;
        let mut rows = vec![vec![0u8; k]; k];
        for row in rows.iter_mut() {
            eof(r.buf.read_exact(row), "behavior matrix")?;
        }
        behaviors.push(
            BehaviorMatrix::from_rows(&name, &rows)
                .map_err(|e| Error::CorruptContainer(e.to_string()))?,
        );
    }
    let table_len = actions.iter().sum::<usize>() * cats.iter().sum::<usize>();
    let has_alpha = r.u8("embedding header")? == 1;
    let alpha = if has_alpha {
        r.f64s(table_len, "embedding logits")?
    } else {
        Vec::new()
    };
    let probs = r.f64s(table_len, "embedding probabilities")?;
    let embedding_model = EmbeddingModel::from_parts(&actions, &cats, alpha, probs)?;
    let logging_policy = r.policy(&actions, n, "logging policy")?;
    let target_policy = r.policy(&actions, n, "target policy")?;

    let record = 8 * dim_x + 4 * k + 4 * k * d + 8 * k + 4;
    if r.buf.len() < n.saturating_mul(record) {
        return Err(Error::CorruptContainer(format!(
            "truncated: {} bytes left for {n} samples of {record} bytes",
            r.buf.len()
        )));
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let context = Context(r.f64s(dim_x, "context")?);
        let action = (0..k)
            .map(|_| r.u32("action"))
            .collect::<Result<Vec<_>>>()?;
        let cats_row = (0..k * d)
            .map(|_| r.u32("embedding"))
            .collect::<Result<Vec<_>>>()?;
        let reward = r.f64s(k, "reward")?;
        let b = eof(r.buf.read_i32::<LE>(), "behavior id")?;
        samples.push(LoggedSample {
            context,
            action: RankingAction(action),
            embedding: RankingEmbedding::new(k, d, cats_row)?,
            reward: RewardVector(reward),
            behavior_id: usize::try_from(b).ok(),
        });
    }
    if !r.buf.is_empty() {
        return Err(Error::CorruptContainer(format!(
            "{} trailing bytes",
            r.buf.len()
        )));
    }
    let ds = LoggedDataset {
        samples,
        logging_policy,
        target_policy,
        embedding_model,
        reward_kind,
        behaviors,
        config_fingerprint,
    };
    ds.validate()?;
    Ok(ds)
}
