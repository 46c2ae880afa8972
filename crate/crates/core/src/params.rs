//! Learnable parameters: entity, relation and word embeddings plus the
//! convolution kernel and position tables.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{load_json, save_json, EntityId, RelationId, Vocabulary, WordId};

/// Shape of every parameter group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub entities: usize,
    pub relations: usize,
    pub words: usize,
    /// Embedding dimension `k`; also the number of convolution filters.
    pub dim: usize,
    pub position_dim: usize,
    /// Convolution window `m` (odd).
    pub window: usize,
    /// Relative distances are clipped to `±max_distance`.
    pub max_distance: usize,
}

impl Dims {
    pub const DEFAULT_POSITION_DIM: usize = 5;
    pub const DEFAULT_WINDOW: usize = 3;
    pub const DEFAULT_MAX_DISTANCE: usize = 30;

    pub fn new(entities: usize, relations: usize, words: usize, dim: usize) -> Self {
        Dims {
            entities,
            relations,
            words,
            dim,
            position_dim: Self::DEFAULT_POSITION_DIM,
            window: Self::DEFAULT_WINDOW,
            max_distance: Self::DEFAULT_MAX_DISTANCE,
        }
    }

    pub fn for_vocabulary(vocab: &Vocabulary, dim: usize) -> Self {
        Self::new(vocab.num_entities(), vocab.num_relations(), vocab.num_words(), dim)
    }

    /// Width of one input row: word vector plus two position vectors.
    pub fn input_dim(&self) -> usize {
        self.dim + 2 * self.position_dim
    }

    fn validate(&self) -> Result<()> {
        if self.entities == 0 || self.relations == 0 || self.dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "entity count, relation count and dimension must be positive: {self:?}"
            )));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "window must be odd and positive, got {}",
                self.window
            )));
        }
        Ok(())
    }
}

/// Addresses one row in the bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Row {
    Entity(EntityId),
    Relation(RelationId),
    Word(WordId),
}

/// θ_E, θ_R and θ_V. Anchored mention words have no storage of their own:
/// every access is redirected to the entity row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBank {
    pub entities: Array2<f64>,
    pub relations: Array2<f64>,
    pub words: Array2<f64>,
    share_map: Vec<Option<EntityId>>,
}

impl EmbeddingBank {
    pub fn zeros(dims: &Dims, share_map: Vec<Option<EntityId>>) -> Result<Self> {
        if share_map.len() != dims.words {
            return Err(Error::DimensionMismatch {
                expected: dims.words,
                actual: share_map.len(),
            });
        }
        if let Some(e) = share_map.iter().flatten().find(|e| e.index() >= dims.entities) {
            return Err(Error::InvalidConfig(format!(
                "share map points at entity {} outside 0..{}",
                e.0, dims.entities
            )));
        }
        Ok(EmbeddingBank {
            entities: Array2::zeros((dims.entities, dims.dim)),
            relations: Array2::zeros((dims.relations, dims.dim)),
            words: Array2::zeros((dims.words, dims.dim)),
            share_map,
        })
    }

    pub fn dim(&self) -> usize {
        self.entities.ncols()
    }

    pub fn num_entities(&self) -> usize {
        self.entities.nrows()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.nrows()
    }

    pub fn num_words(&self) -> usize {
        self.words.nrows()
    }

    pub fn shared_entity(&self, word: WordId) -> Option<EntityId> {
        self.share_map[word.index()]
    }

    /// Canonical storage location of a row.
    pub fn resolve(&self, row: Row) -> Row {
        match row {
            Row::Word(w) => match self.share_map[w.index()] {
                Some(e) => Row::Entity(e),
                None => row,
            },
            other => other,
        }
    }

    pub fn row(&self, row: Row) -> &[f64] {
        let (mat, i) = match self.resolve(row) {
            Row::Entity(e) => (&self.entities, e.index()),
            Row::Relation(r) => (&self.relations, r.index()),
            Row::Word(w) => (&self.words, w.index()),
        };
        let k = mat.ncols();
        &mat.as_slice().expect("standard layout")[i * k..(i + 1) * k]
    }

    pub fn row_mut(&mut self, row: Row) -> &mut [f64] {
        let (mat, i) = match self.resolve(row) {
            Row::Entity(e) => (&mut self.entities, e.index()),
            Row::Relation(r) => (&mut self.relations, r.index()),
            Row::Word(w) => (&mut self.words, w.index()),
        };
        let k = mat.ncols();
        &mut mat.as_slice_mut().expect("standard layout")[i * k..(i + 1) * k]
    }

    pub fn entity(&self, e: EntityId) -> &[f64] {
        self.row(Row::Entity(e))
    }

    pub fn relation(&self, r: RelationId) -> &[f64] {
        self.row(Row::Relation(r))
    }

    pub fn word(&self, w: WordId) -> &[f64] {
        self.row(Row::Word(w))
    }

    /// `row += scale * delta`
    pub fn add_scaled(&mut self, row: Row, scale: f64, delta: &[f64]) {
        for (p, d) in self.row_mut(row).iter_mut().zip(delta) {
            *p += scale * d;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().all(|v| v.is_finite())
            && self.relations.iter().all(|v| v.is_finite())
            && self.words.iter().all(|v| v.is_finite())
    }
}

/// Convolution kernel `W`, bias `b` and the head/tail position tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    /// `k_c × (m · k_w)`; column block `o` multiplies window slot `o`.
    pub kernel: Array2<f64>,
    pub bias: Array1<f64>,
    pub pos_head: Array2<f64>,
    pub pos_tail: Array2<f64>,
    pub window: usize,
    pub position_dim: usize,
    pub max_distance: usize,
}

impl ConvParams {
    pub fn zeros(dims: &Dims) -> Self {
        let cells = 2 * dims.max_distance + 1;
        ConvParams {
            kernel: Array2::zeros((dims.dim, dims.window * dims.input_dim())),
            bias: Array1::zeros(dims.dim),
            pos_head: Array2::zeros((cells, dims.position_dim)),
            pos_tail: Array2::zeros((cells, dims.position_dim)),
            window: dims.window,
            position_dim: dims.position_dim,
            max_distance: dims.max_distance,
        }
    }

    /// Number of filters `k_c`.
    pub fn filters(&self) -> usize {
        self.kernel.nrows()
    }

    /// Input row width `k_w`.
    pub fn input_dim(&self) -> usize {
        self.kernel.ncols() / self.window
    }

    /// Table row for a relative distance, clipped to `±max_distance`.
    pub fn position_index(&self, distance: isize) -> usize {
        let d = self.max_distance as isize;
        (distance.clamp(-d, d) + d) as usize
    }

    pub fn is_finite(&self) -> bool {
        self.kernel.iter().all(|v| v.is_finite())
            && self.bias.iter().all(|v| v.is_finite())
            && self.pos_head.iter().all(|v| v.is_finite())
            && self.pos_tail.iter().all(|v| v.is_finite())
    }
}

/// Half-width of the uniform initialisation interval, `6 / √k`.
pub fn init_bound(dim: usize) -> f64 {
    6.0 / (dim as f64).sqrt()
}

/// RNG stream reserved for parameter initialisation.
pub(crate) const INIT_STREAM: u64 = 0;

/// RNG stream for renormalising entity rows after loading word vectors.
pub const WORD_INIT_STREAM: u64 = 3;

/// ChaCha8 seeded with `seed`, positioned on `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform `[-6/√k, 6/√k]` initialisation of every embedding, the kernel
/// and the position tables; bias starts at zero. Entity rows end up unit
/// length.
pub fn init_params(
    dims: &Dims,
    share_map: Vec<Option<EntityId>>,
    seed: u64,
) -> Result<(EmbeddingBank, ConvParams)> {
    dims.validate()?;
    let mut bank = EmbeddingBank::zeros(dims, share_map)?;
    let mut conv = ConvParams::zeros(dims);
    let mut rng = stream_rng(seed, INIT_STREAM);
    let bound = init_bound(dims.dim);
    let dist = Uniform::new_inclusive(-bound, bound);

    let mut fill = |m: &mut Array2<f64>| m.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
    fill(&mut bank.entities);
    fill(&mut bank.relations);
    fill(&mut bank.words);
    fill(&mut conv.kernel);
    fill(&mut conv.pos_head);
    fill(&mut conv.pos_tail);

    // mention rows are never read; keep them zero so checkpoints are tidy
    for w in 0..bank.num_words() {
        if bank.share_map[w].is_some() {
            bank.words.row_mut(w).fill(0.0);
        }
    }
    normalize_entities(&mut bank, &mut rng);
    Ok((bank, conv))
}

/// Scale one entity row to unit L2 norm. A zero row is replaced with a
/// random unit vector drawn from `rng`.
pub fn normalize_entity<R: Rng + ?Sized>(bank: &mut EmbeddingBank, entity: EntityId, rng: &mut R) {
    let row = bank.row_mut(Row::Entity(entity));
    normalize_slice(row, rng);
}

pub fn normalize_entities<R: Rng + ?Sized>(bank: &mut EmbeddingBank, rng: &mut R) {
    for e in 0..bank.num_entities() {
        normalize_entity(bank, EntityId::from(e), rng);
    }
}

fn normalize_slice<R: Rng + ?Sized>(row: &mut [f64], rng: &mut R) {
    loop {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            row.iter_mut().for_each(|v| *v /= norm);
            return;
        }
        row.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WordVectorLoad {
    pub loaded: usize,
    pub skipped: usize,
}

/// Overwrite every word row (mention rows land on their entities) from a
/// `words × dim` matrix indexed by word id. Entity rows are left as copied;
/// follow with [`normalize_entities`].
pub fn copy_word_rows(bank: &mut EmbeddingBank, vectors: &Array2<f64>) -> Result<()> {
    if vectors.ncols() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            actual: vectors.ncols(),
        });
    }
    if vectors.nrows() != bank.num_words() {
        return Err(Error::InvalidConfig(format!(
            "{} word vectors for {} words",
            vectors.nrows(),
            bank.num_words()
        )));
    }
    for (w, v) in vectors.rows().into_iter().enumerate() {
        bank.row_mut(Row::Word(WordId::from(w)))
            .iter_mut()
            .zip(v)
            .for_each(|(d, s)| *d = *s);
    }
    Ok(())
}

/// Overwrite word rows (and, through sharing, entity rows) from a word
/// vector file: header `count dim`, then `token v1 … vk` per line. Entity
/// rows are left as read; follow with [`normalize_entities`].
pub fn load_word_vectors(
    path: &Path,
    vocab: &Vocabulary,
    bank: &mut EmbeddingBank,
) -> Result<WordVectorLoad> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing `count dim` header"))?
        .map_err(|e| Error::io(path, e))?;
    let mut fields = header.split_whitespace();
    let parse_usize = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
    let (Some(_count), Some(dim)) = (parse_usize(fields.next()), parse_usize(fields.next())) else {
        return Err(Error::parse(path, 1, "malformed `count dim` header"));
    };
    if dim != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            actual: dim,
        });
    }

    let mut stats = WordVectorLoad::default();
    let mut values = Vec::with_capacity(dim);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        values.clear();
        for f in fields {
            values.push(
                f.parse::<f64>()
                    .map_err(|e| Error::parse(path, line_no, format!("bad value `{f}`: {e}")))?,
            );
        }
        if values.len() != dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        match vocab.word_id(token) {
            Some(w) if w.index() < bank.num_words() => {
                bank.row_mut(Row::Word(w)).copy_from_slice(&values);
                stats.loaded += 1;
            }
            _ => stats.skipped += 1,
        }
    }
    Ok(stats)
}

/// Write vectors in the format `load_word_vectors` reads.
pub fn write_word_vectors<'a>(
    path: &Path,
    dim: usize,
    rows: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {}", rows.len(), dim).map_err(io)?;
    for (token, v) in rows {
        write!(w, "{token}").map_err(io)?;
        for x in v {
            write!(w, " {x}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Everything needed to restore a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: Dims,
    pub seed: u64,
    pub bank: EmbeddingBank,
    pub conv: ConvParams,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json(path)
    }
}
