//! Unit-norm word embeddings: word2vec text I/O, a small spherical skip-gram
//! trainer, and random topic-embedding initialization.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Vocabulary;
use crate::error::{invalid, Error, Result};
use crate::geometry::random_unit_vector;

/// V×D matrix whose rows are unit vectors, in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    vectors: Array2<f64>,
}

impl EmbeddingMatrix {
    /// Normalizes every row; zero or non-finite rows are rejected.
    pub fn from_rows(mut vectors: Array2<f64>) -> Result<Self> {
        for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if !(n.is_finite() && n > 0.0) {
                return Err(invalid(format!("embedding row {i} has norm {n}")));
            }
            row /= n;
        }
        Ok(Self { vectors })
    }

    /// Accepts rows already of unit length (within `tol`) without rescaling.
    pub fn from_unit_rows(vectors: Array2<f64>, tol: f64) -> Result<Self> {
        for (i, row) in vectors.rows().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if !((n - 1.0).abs() <= tol) {
                return Err(invalid(format!("embedding row {i} has norm {n}, expected 1")));
            }
        }
        Ok(Self { vectors })
    }

    pub fn random(rows: usize, dim: usize, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(invalid("embedding dimension must be >= 2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            vectors: random_rows(&mut rng, rows, dim),
        })
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn cosine(&self, a: usize, b: usize) -> f64 {
        self.row(a).dot(&self.row(b))
    }

    pub fn save_word2vec(&self, path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
        if vocab.len() != self.len() {
            return Err(invalid("vocabulary and embedding sizes differ"));
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (word, row) in vocab.tokens().iter().zip(self.vectors.rows()) {
            write!(out, "{word}")?;
            for v in row {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn random_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((rows, dim));
    for mut row in m.rows_mut() {
        for (dst, v) in row.iter_mut().zip(random_unit_vector(rng, dim)) {
            *dst = v;
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct LoadedEmbeddings {
    pub matrix: EmbeddingMatrix,
    /// Fraction of vocabulary words found in the file.
    pub coverage: f64,
    pub missing: Vec<String>,
}

/// Reads word2vec text format (`"V D"` header, then `word v1 .. vD`). Vocabulary
/// words absent from the file get seeded random unit vectors. An empty file
/// needs `fallback_dim` to size the matrix.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    fallback_dim: usize,
    seed: u64,
) -> Result<LoadedEmbeddings> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut dim: Option<usize> = None;
    let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if n == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            dim = Some(fields[1].parse().unwrap_or(0));
            continue;
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MalformedEmbeddings {
                line: lineno,
                reason: e.to_string(),
            })?;
        match dim {
            Some(d) if d != values.len() => {
                return Err(Error::MalformedEmbeddings {
                    line: lineno,
                    reason: format!("expected {d} values, found {}", values.len()),
                })
            }
            None => dim = Some(values.len()),
            _ => {}
        }
        if let Some(i) = vocab.get(fields[0]) {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::MalformedEmbeddings {
                    line: lineno,
                    reason: "zero or non-finite vector".into(),
                });
            }
            found[i] = Some(values.into_iter().map(|v| v / norm).collect());
        }
    }
    let dim = dim.unwrap_or(fallback_dim);
    if dim < 2 {
        return Err(invalid("embedding dimension must be >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors = Array2::zeros((vocab.len(), dim));
    let mut missing = Vec::new();
    for (i, slot) in found.into_iter().enumerate() {
        let v = match slot {
            Some(v) => v,
            None => {
                missing.push(vocab.token(i).to_string());
                random_unit_vector(&mut rng, dim)
            }
        };
        for (dst, x) in vectors.row_mut(i).iter_mut().zip(v) {
            *dst = x;
        }
    }
    let coverage = if vocab.is_empty() {
        0.0
    } else {
        1.0 - missing.len() as f64 / vocab.len() as f64
    };
    Ok(LoadedEmbeddings {
        matrix: EmbeddingMatrix { vectors },
        coverage,
        missing,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SkipGramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Logit scale applied to the cosine between two unit vectors.
    pub scale: f64,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            window: 10,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            scale: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkipGramReport {
    /// Mean negative-sampling loss per positive pair, one entry per epoch.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn project(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Skip-gram with negative sampling where both word and context vectors are
/// projected back onto the unit sphere after every update. Logits are
/// `scale * cos(u, v)`. Returns the word vectors.
pub fn train_spherical(
    streams: &[Vec<usize>],
    vocab_size: usize,
    config: &SkipGramConfig,
) -> Result<(EmbeddingMatrix, SkipGramReport)> {
    if config.dim < 2 {
        return Err(invalid("embedding dimension must be >= 2"));
    }
    if vocab_size < 2 {
        return Err(invalid("spherical skip-gram needs at least two vocabulary words"));
    }
    if config.window == 0 || config.negatives == 0 {
        return Err(invalid("window and negatives must be positive"));
    }
    let total: usize = streams.iter().map(Vec::len).sum();
    if total < config.window {
        return Err(invalid(format!(
            "corpus has {total} tokens, shorter than the window {}",
            config.window
        )));
    }
    if let Some(&bad) = streams.iter().flatten().find(|&&w| w >= vocab_size) {
        return Err(invalid(format!("token index {bad} out of range")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = config.dim;
    let mut words = random_rows(&mut rng, vocab_size, dim);
    let mut contexts = random_rows(&mut rng, vocab_size, dim);

    // Unigram^0.75 noise table.
    let mut counts = vec![0usize; vocab_size];
    streams.iter().flatten().for_each(|&w| counts[w] += 1);
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let wsum: f64 = weights.iter().sum();
    let table_size = 100_000usize;
    let mut table = Vec::with_capacity(table_size);
    for (w, &p) in weights.iter().enumerate() {
        let n = (p / wsum * table_size as f64).round() as usize;
        table.extend(std::iter::repeat_n(w, n));
    }
    if table.is_empty() {
        table.extend(0..vocab_size);
    }

    let total_steps = (config.epochs * total).max(1) as f64;
    let mut step = 0usize;
    let mut grad_u = vec![0.0; dim];
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut loss = 0.0;
        let mut pairs = 0usize;
        for stream in streams {
            for (pos, &center) in stream.iter().enumerate() {
                let lr = config.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
                step += 1;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(stream.len());
                for cpos in lo..hi {
                    if cpos == pos {
                        continue;
                    }
                    let target = stream[cpos];
                    grad_u.iter_mut().for_each(|g| *g = 0.0);
                    for k in 0..=config.negatives {
                        let (ctx, label) = if k == 0 {
                            (target, 1.0)
                        } else {
                            let n = *table.choose(&mut rng).expect("non-empty table");
                            if n == target {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let u = words.row(center);
                        let mut v = contexts.row_mut(ctx);
                        let score = config.scale * u.dot(&v);
                        let s = sigmoid(score);
                        loss -= if label > 0.0 {
                            s.max(1e-300).ln()
                        } else {
                            (1.0 - s).max(1e-300).ln()
                        };
                        let g = config.scale * (s - label);
                        for d in 0..dim {
                            grad_u[d] += g * v[d];
                            v[d] -= lr * g * u[d];
                        }
                        project(v.as_slice_mut().expect("contiguous row"));
                    }
                    let mut u = words.row_mut(center);
                    for d in 0..dim {
                        u[d] -= lr * grad_u[d];
                    }
                    project(u.as_slice_mut().expect("contiguous row"));
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(loss / pairs.max(1) as f64);
    }
    Ok((EmbeddingMatrix { vectors: words }, SkipGramReport { epoch_losses }))
}

/// M×D topic embeddings with rows uniform on the unit sphere.
pub fn init_topic_embeddings(m: usize, dim: usize, seed: u64) -> Result<Array2<f64>> {
    if m < 2 {
        return Err(invalid("need at least two topics"));
    }
    if dim < 2 {
        return Err(invalid("embedding dimension must be >= 2"));
    }
    Ok(random_rows(&mut ChaCha8Rng::seed_from_u64(seed), m, dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_words(words.iter().copied())
    }

    #[test]
    fn load_normalizes_and_reports_coverage() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "2 2\ncat 3 4\ndog 0 2\nzebra 1 1\n").unwrap();
        let v = vocab(&["cat", "dog"]);
        let l = load_embeddings(&p, &v, 2, 0).unwrap();
        assert_eq!(l.coverage, 1.0);
        assert!((l.matrix.row(0)[0] - 0.6).abs() < 1e-15);
        assert!((l.matrix.row(0)[1] - 0.8).abs() < 1e-15);

        let v = vocab(&["cat", "emu", "fox", "gnu"]);
        let l = load_embeddings(&p, &v, 2, 0).unwrap();
        assert_eq!(l.coverage, 0.25);
        assert_eq!(l.missing, vec!["emu", "fox", "gnu"]);
        for row in l.matrix.vectors().rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_file_gives_random_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "").unwrap();
        let l = load_embeddings(&p, &vocab(&["a", "b", "c"]), 7, 3).unwrap();
        assert_eq!(l.coverage, 0.0);
        assert_eq!(l.matrix.dim(), 7);
        let again = load_embeddings(&p, &vocab(&["a", "b", "c"]), 7, 3).unwrap();
        assert_eq!(l.matrix, again.matrix);
    }

    #[test]
    fn malformed_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        std::fs::write(&p, "2 3\ncat 1 2 3\ndog 1 2\n").unwrap();
        assert!(matches!(
            load_embeddings(&p, &vocab(&["cat"]), 3, 0),
            Err(Error::MalformedEmbeddings { line: 3, .. })
        ));
        std::fs::write(&p, "cat 1 x\n").unwrap();
        assert!(load_embeddings(&p, &vocab(&["cat"]), 3, 0).is_err());
    }

    #[test]
    fn word2vec_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        let v = vocab(&["a", "b"]);
        let m = EmbeddingMatrix::from_rows(array![[3.0, 4.0], [1.0, 0.0]]).unwrap();
        m.save_word2vec(&p, &v).unwrap();
        let l = load_embeddings(&p, &v, 2, 0).unwrap();
        assert_eq!(l.matrix, m);
    }

    #[test]
    fn topic_embeddings_shape_and_norm() {
        let t = init_topic_embeddings(20, 100, 4).unwrap();
        assert_eq!(t.dim(), (20, 100));
        for row in t.rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
        assert_eq!(t, init_topic_embeddings(20, 100, 4).unwrap());
        assert!(init_topic_embeddings(1, 10, 0).is_err());
    }

    fn cooccurrence_corpus(seed: u64) -> Vec<Vec<usize>> {
        // Four themes of ten words each; words 0 and 1 (theme 0) always appear
        // side by side in theme-0 documents.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200)
            .map(|d| {
                let theme = d % 4;
                let mut doc: Vec<usize> = (0..20)
                    .map(|_| theme * 10 + rng.random_range(2..10))
                    .collect();
                if theme == 0 {
                    let at = rng.random_range(0..doc.len());
                    doc.insert(at, 0);
                    doc.insert(at + 1, 1);
                }
                doc
            })
            .collect()
    }

    #[test]
    fn cooccurring_words_are_closer_than_random_pairs() {
        let streams = cooccurrence_corpus(1);
        let cfg = SkipGramConfig {
            dim: 20,
            window: 3,
            epochs: 5,
            seed: 9,
            ..Default::default()
        };
        let (m, report) = train_spherical(&streams, 40, &cfg).unwrap();
        for row in m.vectors().rows() {
            assert!((row.dot(&row).sqrt() - 1.0).abs() < 1e-6);
        }
        let mut avg = 0.0;
        let mut n = 0.0;
        for a in 0..40 {
            for b in (a + 1)..40 {
                avg += m.cosine(a, b);
                n += 1.0;
            }
        }
        avg /= n;
        assert!(m.cosine(0, 1) > avg + 0.2, "{} vs {avg}", m.cosine(0, 1));
        assert!(report.epoch_losses.last() < report.epoch_losses.first());

        let (again, _) = train_spherical(&streams, 40, &cfg).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn trainer_rejects_degenerate_inputs() {
        let cfg = SkipGramConfig::default();
        assert!(train_spherical(&[vec![0; 50]], 1, &cfg).is_err());
        assert!(train_spherical(&[vec![0, 1, 0]], 2, &cfg).is_err());
    }
}
