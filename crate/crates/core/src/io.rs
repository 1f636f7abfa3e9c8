//! File formats.
//!
//! Binary files are little-endian and start with an 8-byte magic followed by
//! a `u32` format version. Strings are a `u64` byte length then UTF-8 bytes;
//! matrices are `u64` rows, `u64` cols, then row-major `f64`s.
//!
//! Model (`LSHIMODL`, v1):
//!
//! | field        | encoding                                   |
//! |--------------|--------------------------------------------|
//! | config echo  | string, `key=value` lines                  |
//! | vocabulary   | `u64` count, strings in id order           |
//! | classes      | `u64` count, strings in label order        |
//! | phase        | `u8`: 0 baseline, 1 infused                |
//! | E            | matrix `|V| × n`                           |
//! | W            | matrix `n × m`                             |
//! | head         | matrix `m × u` or `2m × u` as the phase says |
//!
//! Source store (`LSHISTOR`, v1): tag string, `u8` centroid flag, matrix,
//! `u64` count and `u32` ids of all-zero rows.
//!
//! Forest (`LSHIFRST`, v1): `u64` header fields m, l, k_m, c, seed, n; then
//! `l·k_m·m` direction components in tree, bit, coordinate order; then the
//! `n × m` indexed points; then per tree `n` leaf entries of `u64` label,
//! `u32` point id, `u8` leaf depth, sorted by label.
//!
//! TSV dumps: embeddings are `id<TAB>label<TAB>x₁ … x_m`; attention is
//! `id<TAB>neighbor ids<TAB>weights` with comma-separated lists.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::corpus::LabeledCorpus;
use crate::encoder::{EncoderParams, Vocabulary};
use crate::error::{Error, Result};
use crate::infusion::{AttentionResult, ClassifierHead, SourceStore};
use crate::linalg::Matrix;
use crate::lsh_forest::{ForestParams, HashFunctionSet, LshForest, PrefixTree};
use crate::pipeline::{ModelParams, TrainingConfig};

const MODEL_MAGIC: &[u8; 8] = b"LSHIMODL";
const STORE_MAGIC: &[u8; 8] = b"LSHISTOR";
const FOREST_MAGIC: &[u8; 8] = b"LSHIFRST";
const VERSION: u32 = 1;

#[derive(Default)]
struct Encoder(Vec<u8>);

impl Encoder {
    fn header(magic: &[u8; 8]) -> Self {
        let mut e = Encoder(magic.to_vec());
        e.u32(VERSION);
        e
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    fn f64s(&mut self, v: &[f64]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }

    fn matrix(&mut self, m: &Matrix) {
        self.usize(m.rows());
        self.usize(m.cols());
        self.f64s(m.as_slice());
    }
}

struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

type Parse<T> = std::result::Result<T, String>;

impl<'a> Decoder<'a> {
    fn open(buf: &'a [u8], magic: &[u8; 8]) -> Parse<Self> {
        let mut d = Decoder { buf, pos: 0 };
        if d.take(8)? != magic {
            return Err(format!("bad magic, expected {}", String::from_utf8_lossy(magic)));
        }
        let version = d.u32()?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        Ok(d)
    }

    fn take(&mut self, n: usize) -> Parse<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("unexpected end of file")?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Parse<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Parse<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Parse<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Parse<usize> {
        usize::try_from(self.u64()?).map_err(|_| "length overflows usize".to_string())
    }

    fn f64s(&mut self, n: usize) -> Parse<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or("length overflow")?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn str(&mut self) -> Parse<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "string is not UTF-8".to_string())
    }

    fn strings(&mut self) -> Parse<Vec<String>> {
        let n = self.usize()?;
        (0..n).map(|_| self.str()).collect()
    }

    fn matrix(&mut self) -> Parse<Matrix> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let data = self.f64s(rows.checked_mul(cols).ok_or("matrix size overflow")?)?;
        Ok(Matrix::from_vec(rows, cols, data))
    }

    fn finish(&self) -> Parse<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes", self.buf.len() - self.pos))
        }
    }
}

fn format_err(path: &Path, reason: impl std::fmt::Display) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

pub fn model_to_bytes(model: &ModelParams) -> Vec<u8> {
    let mut e = Encoder::header(MODEL_MAGIC);
    e.str(&model.config.to_kv_string());
    e.usize(model.vocab.len());
    for t in model.vocab.tokens() {
        e.str(t);
    }
    e.usize(model.classes.len());
    for c in &model.classes {
        e.str(c);
    }
    e.u8(model.head.is_infused() as u8);
    e.matrix(&model.encoder.embedding);
    e.matrix(&model.encoder.projection);
    e.matrix(model.head.weights());
    e.0
}

pub fn model_from_bytes(buf: &[u8]) -> Parse<ModelParams> {
    let mut d = Decoder::open(buf, MODEL_MAGIC)?;
    let config = TrainingConfig::parse(&d.str()?).map_err(|e| e.to_string())?;
    let vocab = Vocabulary::from_tokens(d.strings()?).map_err(|e| e.to_string())?;
    let classes = d.strings()?;
    let phase = d.u8()?;
    let embedding = d.matrix()?;
    let projection = d.matrix()?;
    let weights = d.matrix()?;
    d.finish()?;
    let head = match phase {
        0 => ClassifierHead::Baseline(weights),
        1 => ClassifierHead::Infused(weights),
        p => return Err(format!("unknown phase tag {p}")),
    };
    let encoder = EncoderParams::new(embedding, projection).map_err(|e| e.to_string())?;
    ModelParams::new(config, vocab, classes, encoder, head).map_err(|e| e.to_string())
}

pub fn save_model(path: &Path, model: &ModelParams) -> Result<()> {
    Ok(fs::write(path, model_to_bytes(model))?)
}

pub fn load_model(path: &Path) -> Result<ModelParams> {
    model_from_bytes(&fs::read(path)?).map_err(|r| format_err(path, r))
}

pub fn store_to_bytes(store: &SourceStore) -> Vec<u8> {
    let mut e = Encoder::header(STORE_MAGIC);
    e.str(&store.tag);
    e.u8(store.centroids as u8);
    e.matrix(store.matrix());
    e.usize(store.zero_rows.len());
    for &r in &store.zero_rows {
        e.u32(r);
    }
    e.0
}

pub fn store_from_bytes(buf: &[u8]) -> Parse<SourceStore> {
    let mut d = Decoder::open(buf, STORE_MAGIC)?;
    let tag = d.str()?;
    let centroids = d.u8()? != 0;
    let rows = d.matrix()?;
    let n = d.usize()?;
    let zero_rows = (0..n).map(|_| d.u32()).collect::<Parse<Vec<u32>>>()?;
    d.finish()?;
    let store = SourceStore::new(rows, tag).map_err(|e| e.to_string())?.with_centroids(centroids);
    if store.zero_rows != zero_rows {
        return Err("zero-row list does not match the stored rows".into());
    }
    Ok(store)
}

pub fn save_store(path: &Path, store: &SourceStore) -> Result<()> {
    Ok(fs::write(path, store_to_bytes(store))?)
}

pub fn load_store(path: &Path) -> Result<SourceStore> {
    store_from_bytes(&fs::read(path)?).map_err(|r| format_err(path, r))
}

pub fn forest_to_bytes(forest: &LshForest) -> Vec<u8> {
    let h = &forest.hashes;
    let mut e = Encoder::header(FOREST_MAGIC);
    for v in [h.dim(), h.trees(), h.depth(), forest.params.candidates_per_tree] {
        e.usize(v);
    }
    e.u64(h.seed());
    e.usize(forest.len());
    e.f64s(h.directions());
    e.f64s(forest.points.as_slice());
    for t in &forest.trees {
        for i in 0..t.labels.len() {
            e.u64(t.labels[i]);
            e.u32(t.ids[i]);
            e.u8(t.leaf_depths[i]);
        }
    }
    e.0
}

pub fn forest_from_bytes(buf: &[u8]) -> Parse<LshForest> {
    let mut d = Decoder::open(buf, FOREST_MAGIC)?;
    let m = d.usize()?;
    let l = d.usize()?;
    let k_m = d.usize()?;
    let c = d.usize()?;
    let seed = d.u64()?;
    let n = d.usize()?;
    if n == 0 || c == 0 {
        return Err("forest must index points with a positive candidate constant".into());
    }
    let directions = d.f64s(l.checked_mul(k_m).and_then(|x| x.checked_mul(m)).ok_or("size overflow")?)?;
    let hashes = HashFunctionSet::from_parts(m, l, k_m, seed, directions).map_err(|e| e.to_string())?;
    let points = Matrix::from_vec(n, m, d.f64s(n.checked_mul(m).ok_or("size overflow")?)?);
    let mut trees = Vec::with_capacity(l);
    for _ in 0..l {
        let mut t = PrefixTree {
            labels: Vec::with_capacity(n),
            ids: Vec::with_capacity(n),
            leaf_depths: Vec::with_capacity(n),
        };
        for _ in 0..n {
            t.labels.push(d.u64()?);
            let id = d.u32()?;
            if id as usize >= n {
                return Err(format!("leaf id {id} out of range"));
            }
            t.ids.push(id);
            let depth = d.u8()?;
            if depth as usize > k_m {
                return Err(format!("leaf depth {depth} exceeds {k_m}"));
            }
            t.leaf_depths.push(depth);
        }
        if !t.labels.windows(2).all(|w| w[0] <= w[1]) {
            return Err("leaf table is not sorted by label".into());
        }
        trees.push(t);
    }
    d.finish()?;
    let params = ForestParams {
        trees: l,
        max_depth: k_m,
        candidates_per_tree: c,
    };
    Ok(LshForest {
        hashes,
        params,
        points,
        trees,
    })
}

pub fn save_forest(path: &Path, forest: &LshForest) -> Result<()> {
    Ok(fs::write(path, forest_to_bytes(forest))?)
}

pub fn load_forest(path: &Path) -> Result<LshForest> {
    forest_from_bytes(&fs::read(path)?).map_err(|r| format_err(path, r))
}

/// One line per document: id, class name, then the store row.
pub fn write_embeddings_tsv(corpus: &LabeledCorpus, store: &SourceStore, mut out: impl Write) -> Result<()> {
    if store.len() != corpus.len() {
        return Err(Error::dims("embedding rows vs documents", corpus.len(), store.len()));
    }
    for (i, d) in corpus.documents.iter().enumerate() {
        write!(out, "{}\t{}", d.id, corpus.classes[d.label])?;
        for x in store.row(i) {
            write!(out, "\t{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// One line per instance: id, comma-separated neighbor ids, comma-separated
/// attention weights in the same order.
pub fn write_attention_tsv<'a>(
    rows: impl IntoIterator<Item = (&'a str, &'a AttentionResult)>,
    mut out: impl Write,
) -> Result<()> {
    for (id, att) in rows {
        let ids: Vec<String> = att.neighbor_ids.iter().map(u32::to_string).collect();
        let weights: Vec<String> = att.weights.iter().map(f64::to_string).collect();
        writeln!(out, "{id}\t{}\t{}", ids.join(","), weights.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rng_for;

    fn store() -> SourceStore {
        let mut m = Matrix::uniform(9, 4, 1.0, &mut rng_for(3, 0));
        m.row_mut(2).fill(0.0);
        SourceStore::new(m, "bbc").unwrap().with_centroids(true)
    }

    #[test]
    fn store_round_trip() {
        let s = store();
        assert_eq!(store_from_bytes(&store_to_bytes(&s)).unwrap(), s);
    }

    #[test]
    fn forest_round_trip() {
        let f = LshForest::build(&store(), ForestParams { trees: 3, max_depth: 12, candidates_per_tree: 2 }, 5).unwrap();
        assert_eq!(forest_from_bytes(&forest_to_bytes(&f)).unwrap(), f);
    }

    #[test]
    fn truncated_and_foreign_files_are_rejected() {
        let bytes = store_to_bytes(&store());
        assert!(store_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(forest_from_bytes(&bytes).unwrap_err().contains("magic"));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(store_from_bytes(&extra).is_err());
    }

    #[test]
    fn attention_tsv_layout() {
        let att = AttentionResult {
            weights: vec![0.75, 0.25],
            fused: vec![0.0],
            neighbor_ids: vec![4, 1],
        };
        let mut buf = Vec::new();
        write_attention_tsv([("a/1", &att)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a/1\t4,1\t0.75,0.25\n");
    }
}
