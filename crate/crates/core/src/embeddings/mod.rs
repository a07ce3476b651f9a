//! Word embedding tables: word2vec text I/O, cosine queries and skip-gram
//! training.

mod skipgram;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use skipgram::{sgns_coefficients, sgns_gradients, sgns_loss, train_skipgram, SgnsGradients, SkipgramConfig};

/// Dense vectors for an ordered vocabulary, stored row-major in `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableRepr")]
pub struct EmbeddingTable {
    dim: usize,
    vocab: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

#[derive(Deserialize)]
struct TableRepr {
    dim: usize,
    vocab: Vec<String>,
    vectors: Vec<f64>,
}

impl TryFrom<TableRepr> for EmbeddingTable {
    type Error = Error;

    fn try_from(r: TableRepr) -> Result<Self> {
        if r.dim == 0 || r.vectors.len() != r.vocab.len() * r.dim {
            return Err(Error::InvalidInput("embedding table shape mismatch".into()));
        }
        let dim = r.dim;
        Self::from_rows(dim, r.vocab.into_iter().zip(r.vectors.chunks(dim).map(<[f64]>::to_vec)))
    }
}

impl EmbeddingTable {
    /// Build a table from `(word, vector)` rows.
    pub fn from_rows<I, S>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        let mut table = Self {
            dim,
            vocab: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        };
        for (n, (word, v)) in rows.into_iter().enumerate() {
            let word = word.into();
            if v.len() != dim {
                return Err(Error::EmbeddingFormat {
                    row: n + 1,
                    message: format!("expected {dim} components, found {}", v.len()),
                });
            }
            table.push(word, &v).map_err(|message| Error::EmbeddingFormat { row: n + 1, message })?;
        }
        Ok(table)
    }

    pub(crate) fn from_parts(dim: usize, vocab: Vec<String>, vectors: Vec<f64>) -> Self {
        debug_assert_eq!(vocab.len() * dim, vectors.len());
        let index = vocab.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Self {
            dim,
            vocab,
            index,
            vectors,
        }
    }

    fn push(&mut self, word: String, v: &[f64]) -> std::result::Result<(), String> {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(format!("invalid word `{word}`"));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("non-finite component for `{word}`"));
        }
        if self.index.contains_key(&word) {
            return Err(format!("duplicate word `{word}`"));
        }
        self.index.insert(word.clone(), self.vocab.len());
        self.vocab.push(word);
        self.vectors.extend_from_slice(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }

    /// The row-major matrix of all vectors.
    pub fn matrix(&self) -> &[f64] {
        &self.vectors
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut [f64] {
        &mut self.vectors
    }

    /// Multiply every vector by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.vectors.iter_mut().for_each(|x| *x *= factor);
        out
    }

    pub fn cosine(&self, a: &str, b: &str) -> Result<f64> {
        let va = self.get(a).ok_or_else(|| Error::OutOfVocabulary(a.to_owned()))?;
        let vb = self.get(b).ok_or_else(|| Error::OutOfVocabulary(b.to_owned()))?;
        Ok(cosine(va, vb))
    }

    /// The `k` most similar words to `word` by cosine, excluding `word`
    /// itself. Ties keep vocabulary order.
    pub fn nearest_neighbors(&self, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        let q = self
            .index_of(word)
            .ok_or_else(|| Error::OutOfVocabulary(word.to_owned()))?;
        let qv = self.row(q);
        let mut scored: Vec<(usize, f64)> = (0..self.len())
            .filter(|&i| i != q)
            .map(|i| (i, cosine(qv, self.row(i))))
            .collect();
        // Stable sort keeps vocabulary order among equal scores.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(i, c)| (self.vocab[i].clone(), c))
            .collect())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Read a word2vec text file: a `<vocab_size> <dim>` header, then one
/// `<word> <v1> ... <v_dim>` row per word. Row numbers in errors count data
/// rows from 1.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::EmbeddingFormat {
        row: 0,
        message: "missing header".into(),
    })?;
    let mut parts = header.split_whitespace();
    let parse_usize = |s: Option<&str>| s.and_then(|s| s.parse::<usize>().ok());
    let (n, dim) = match (parse_usize(parts.next()), parse_usize(parts.next()), parts.next()) {
        (Some(n), Some(d), None) if d > 0 => (n, d),
        _ => {
            return Err(Error::EmbeddingFormat {
                row: 0,
                message: format!("bad header `{header}`"),
            })
        }
    };
    let mut table = EmbeddingTable {
        dim,
        vocab: Vec::with_capacity(n),
        index: HashMap::with_capacity(n),
        vectors: Vec::with_capacity(n * dim),
    };
    let mut buf = Vec::with_capacity(dim);
    let mut row = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        row += 1;
        let err = |message: String| Error::EmbeddingFormat { row, message };
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-blank line").to_owned();
        buf.clear();
        for f in fields {
            buf.push(f.parse::<f64>().map_err(|_| err(format!("bad number `{f}`")))?);
        }
        if buf.len() != dim {
            return Err(err(format!("expected {dim} components, found {}", buf.len())));
        }
        table.push(word, &buf).map_err(err)?;
    }
    if row != n {
        return Err(Error::EmbeddingFormat {
            row,
            message: format!("header declares {n} rows, found {row}"),
        });
    }
    Ok(table)
}

/// Write a table in word2vec text format with `f32` precision.
pub fn save_embeddings(table: &EmbeddingTable, path: &Path) -> Result<()> {
    if table.is_empty() {
        return Err(Error::InvalidInput("refusing to save an empty embedding table".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", table.len(), table.dim)?;
    for (i, word) in table.vocab.iter().enumerate() {
        w.write_all(word.as_bytes())?;
        for x in table.row(i) {
            write!(w, " {}", *x as f32)?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
