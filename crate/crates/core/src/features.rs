//! Document featurizers: TF-IDF, document-level PPMI, and encoder embeddings
//! read from the interchange file.
//!
//! TF-IDF uses raw counts and the smoothed idf `ln((1 + N) / (1 + df)) + 1`.
//! PPMI compares a document's empirical term distribution with the corpus
//! term distribution frozen at fit time, `max(0, ln(p(t|d) / p(t)))`.
//! Tokens outside the fitted vocabulary are ignored by both.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::{id_field, tokenize_words, Corpus};
use crate::error::{Error, Result};

/// Sparse vector as `(column, value)` pairs in increasing column order.
pub type SparseVector = Vec<(usize, f64)>;

pub fn to_dense(v: &[(usize, f64)], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for &(j, x) in v {
        out[j] = x;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.terms, r.doc_freq)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            doc_freq: v.doc_freq,
        }
    }
}

impl Vocabulary {
    fn from_parts(terms: Vec<String>, doc_freq: Vec<usize>) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            terms,
            doc_freq,
            index,
        }
    }

    /// Counts document frequencies over `corpus`, keeps terms with
    /// `df >= min_df`, and orders columns by descending df then term.
    fn build(corpus: &Corpus, min_df: usize, max_features: Option<usize>) -> Self {
        let mut df: HashMap<&str, usize> = HashMap::new();
        for doc in corpus {
            let unique: HashSet<&str> = tokenize_words(&doc.text).into_iter().collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = df.into_iter().filter(|&(_, n)| n >= min_df).collect();
        kept.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(max) = max_features {
            kept.truncate(max);
        }
        let (terms, doc_freq) = kept.into_iter().map(|(t, n)| (t.to_owned(), n)).unzip();
        Vocabulary::from_parts(terms, doc_freq)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn get(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn doc_freq(&self, term: &str) -> Option<usize> {
        self.get(term).map(|i| self.doc_freq[i])
    }

    /// In-vocabulary token counts of `text`, sorted by column.
    fn counts(&self, text: &str) -> Vec<(usize, usize)> {
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for token in tokenize_words(text) {
            if let Some(j) = self.get(token) {
                *counts.entry(j).or_default() += 1;
            }
        }
        let mut counts: Vec<_> = counts.into_iter().collect();
        counts.sort_unstable();
        counts
    }
}

/// Documents x features, stored as compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: Vec<String>,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    /// Builds a matrix from sparse rows. Explicit zeros are dropped.
    pub fn from_sparse_rows(rows: Vec<String>, cols: usize, data: Vec<SparseVector>) -> Result<Self> {
        if rows.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: data.len(),
            });
        }
        let nnz = data.iter().map(Vec::len).sum();
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in data {
            let mut last = None;
            for (j, v) in row {
                if j >= cols {
                    return Err(Error::DimensionMismatch {
                        expected: cols,
                        got: j + 1,
                    });
                }
                if last.is_some_and(|l| j <= l) {
                    return Err(Error::InvalidArgument("sparse row columns must increase".into()));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("feature value {v}")));
                }
                last = Some(j);
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(FeatureMatrix {
            rows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn from_dense(rows: Vec<String>, cols: usize, data: Vec<Vec<f64>>) -> Result<Self> {
        let sparse = data
            .into_iter()
            .map(|r| {
                if r.len() != cols {
                    return Err(Error::DimensionMismatch {
                        expected: cols,
                        got: r.len(),
                    });
                }
                Ok(r.into_iter().enumerate().collect())
            })
            .collect::<Result<Vec<SparseVector>>>()?;
        Self::from_sparse_rows(rows, cols, sparse)
    }

    /// Dense rows with generated ids `"0"`, `"1"`, ...; handy for numeric work.
    pub fn from_rows(data: &[Vec<f64>]) -> Result<Self> {
        let cols = data.first().map_or(0, Vec::len);
        let ids = (0..data.len()).map(|i| i.to_string()).collect();
        Self::from_dense(ids, cols, data.to_vec())
    }

    pub fn row_ids(&self) -> &[String] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of the non-zeros in row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let (idx, val) = self.row(i);
        let mut out = vec![0.0; self.cols];
        for (&j, &v) in idx.iter().zip(val) {
            out[j] = v;
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows()).map(|i| self.dense_row(i)).collect()
    }

    /// `x_i . w` for row `i`.
    pub fn row_dot(&self, i: usize, w: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * w[j]).sum()
    }

    /// Rows `order[0], order[1], ...` as a new matrix.
    pub fn select_rows(&self, order: &[usize]) -> FeatureMatrix {
        let mut indptr = Vec::with_capacity(order.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &i in order {
            let (idx, val) = self.row(i);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        FeatureMatrix {
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            cols: self.cols,
            indptr,
            indices,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TfidfConfig {
    pub min_df: usize,
    pub max_features: Option<usize>,
    pub l2_normalize: bool,
}

impl Default for TfidfConfig {
    fn default() -> Self {
        TfidfConfig {
            min_df: 2,
            max_features: Some(50_000),
            l2_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub vocab: Vocabulary,
    pub n_docs_fit: usize,
    pub config: TfidfConfig,
    idf: Vec<f64>,
}

impl TfidfModel {
    pub fn idf(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|j| self.idf[j])
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let mut v: SparseVector = self
            .vocab
            .counts(text)
            .into_iter()
            .map(|(j, c)| (j, c as f64 * self.idf[j]))
            .collect();
        if self.config.l2_normalize {
            let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (_, x) in &mut v {
                    *x /= norm;
                }
            }
        }
        v
    }
}

pub fn fit_tfidf(corpus: &Corpus, config: &TfidfConfig) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot fit TF-IDF on an empty corpus".into()));
    }
    let vocab = Vocabulary::build(corpus, config.min_df, config.max_features);
    if vocab.is_empty() {
        return Err(Error::Empty(format!(
            "TF-IDF vocabulary is empty (min_df = {})",
            config.min_df
        )));
    }
    let n = corpus.len();
    let idf = vocab
        .doc_freq
        .iter()
        .map(|&df| ((1 + n) as f64 / (1 + df) as f64).ln() + 1.0)
        .collect();
    Ok(TfidfModel {
        vocab,
        n_docs_fit: n,
        config: config.clone(),
        idf,
    })
}

pub fn transform_tfidf(model: &TfidfModel, text: &str) -> SparseVector {
    model.transform(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpmiModel {
    pub vocab: Vocabulary,
    /// Corpus term distribution, aligned with `vocab` columns.
    pub term_prob: Vec<f64>,
    pub total_count: usize,
}

impl PpmiModel {
    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    pub fn prob(&self, term: &str) -> Option<f64> {
        self.vocab.get(term).map(|j| self.term_prob[j])
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let counts = self.vocab.counts(text);
        let len: usize = counts.iter().map(|&(_, c)| c).sum();
        if len == 0 {
            return Vec::new();
        }
        counts
            .into_iter()
            .filter_map(|(j, c)| {
                let pmi = ((c as f64 / len as f64) / self.term_prob[j]).ln();
                (pmi > 0.0).then_some((j, pmi))
            })
            .collect()
    }
}

pub fn fit_ppmi(corpus: &Corpus) -> Result<PpmiModel> {
    if corpus.is_empty() {
        return Err(Error::Empty("cannot fit PPMI on an empty corpus".into()));
    }
    let vocab = Vocabulary::build(corpus, 1, None);
    let mut counts = vec![0usize; vocab.len()];
    for doc in corpus {
        for (j, c) in vocab.counts(&doc.text) {
            counts[j] += c;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("corpus has no tokens".into()));
    }
    let term_prob = counts.iter().map(|&c| c as f64 / total as f64).collect();
    Ok(PpmiModel {
        vocab,
        term_prob,
        total_count: total,
    })
}

pub fn transform_ppmi(model: &PpmiModel, text: &str) -> SparseVector {
    model.transform(text)
}

/// Per-document vectors produced by an external encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        EmbeddingSet {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: vector.len(),
            });
        }
        if let Some(v) = vector.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding {id:?} contains {v}")));
        }
        if self.vectors.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads `{"id", "vector"}` lines; a `{"_meta": ...}` header is skipped.
/// The first vector fixes the dimension.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingSet> {
    let mut set: Option<EmbeddingSet> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let at_line = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| at_line(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| at_line(format!("malformed JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(at_line("expected a JSON object".into()));
        };
        if obj.contains_key("_meta") {
            continue;
        }
        let id = id_field(&obj).map_err(at_line)?;
        let vector: Vec<f64> = obj
            .get("vector")
            .cloned()
            .map(serde_json::from_value)
            .transpose()
            .map_err(|e| at_line(format!("\"vector\": {e}")))?
            .ok_or_else(|| at_line("missing \"vector\"".into()))?;
        let set = set.get_or_insert_with(|| EmbeddingSet::new(vector.len()));
        set.insert(id, vector).map_err(|e| at_line(e.to_string()))?;
    }
    Ok(set.unwrap_or_else(|| EmbeddingSet::new(0)))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file))
}

pub enum Featurizer<'a> {
    Tfidf(&'a TfidfModel),
    Ppmi(&'a PpmiModel),
    Embeddings(&'a EmbeddingSet),
}

impl Featurizer<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Tfidf(m) => m.dim(),
            Featurizer::Ppmi(m) => m.dim(),
            Featurizer::Embeddings(e) => e.dim,
        }
    }
}

/// One row per document, in corpus order.
pub fn featurize(corpus: &Corpus, featurizer: &Featurizer<'_>) -> Result<FeatureMatrix> {
    let docs = corpus.documents();
    let rows: Vec<SparseVector> = match featurizer {
        Featurizer::Tfidf(m) => docs.par_iter().map(|d| m.transform(&d.text)).collect(),
        Featurizer::Ppmi(m) => docs.par_iter().map(|d| m.transform(&d.text)).collect(),
        Featurizer::Embeddings(set) => docs
            .iter()
            .map(|d| {
                set.get(&d.id)
                    .map(|v| v.iter().copied().enumerate().collect())
                    .ok_or_else(|| Error::MissingId(format!("{} (no embedding)", d.id)))
            })
            .collect::<Result<_>>()?,
    };
    FeatureMatrix::from_sparse_rows(
        corpus.ids().map(str::to_owned).collect(),
        featurizer.dim(),
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelScheme};

    fn corpus(texts: &[&str]) -> Corpus {
        let docs = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Document::new(format!("d{i}"), *t))
            .collect();
        Corpus::new(docs, LabelScheme::Boundary).unwrap()
    }

    fn min_df(n: usize) -> TfidfConfig {
        TfidfConfig {
            min_df: n,
            max_features: None,
            l2_normalize: false,
        }
    }

    #[test]
    fn tfidf_fit_counts_document_frequency() {
        let m = fit_tfidf(&corpus(&["a b a", "b c"]), &min_df(1)).unwrap();
        assert_eq!(m.n_docs_fit, 2);
        assert_eq!(m.vocab.len(), 3);
        assert_eq!(m.vocab.doc_freq("a"), Some(1));
        assert_eq!(m.vocab.doc_freq("b"), Some(2));
        assert_eq!(m.vocab.doc_freq("c"), Some(1));

        let m2 = fit_tfidf(&corpus(&["a b a", "b c"]), &min_df(2)).unwrap();
        assert_eq!(m2.vocab.terms(), ["b"]);

        assert!(fit_tfidf(&corpus(&[]), &min_df(1)).is_err());
        assert!(fit_tfidf(&corpus(&["a", "b"]), &min_df(2)).is_err());
    }

    #[test]
    fn tfidf_max_features_prefers_frequent_then_lexicographic() {
        let cfg = TfidfConfig {
            min_df: 1,
            max_features: Some(2),
            l2_normalize: false,
        };
        let m = fit_tfidf(&corpus(&["z y x", "z w", "y v"]), &cfg).unwrap();
        assert_eq!(m.vocab.terms(), ["y", "z"]);
    }

    #[test]
    fn tfidf_transform_values() {
        let m = fit_tfidf(&corpus(&["a b a", "b c"]), &min_df(1)).unwrap();
        let v = to_dense(&m.transform("a b a"), m.dim());
        let a = v[m.vocab.get("a").unwrap()];
        let b = v[m.vocab.get("b").unwrap()];
        let c = v[m.vocab.get("c").unwrap()];
        assert!((a - 2.810_930_216_216_329).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-15);
        assert_eq!(c, 0.0);
        assert!(m.transform("z z").is_empty());
    }

    #[test]
    fn tfidf_l2_normalization() {
        let cfg = TfidfConfig {
            l2_normalize: true,
            ..min_df(1)
        };
        let m = fit_tfidf(&corpus(&["a b a", "b c"]), &cfg).unwrap();
        let v = m.transform("a b c c");
        let norm: f64 = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(m.transform("q").is_empty());
    }

    #[test]
    fn ppmi_fit_distribution() {
        let m = fit_ppmi(&corpus(&["a a b", "b c"])).unwrap();
        assert_eq!(m.total_count, 5);
        assert!((m.prob("a").unwrap() - 0.4).abs() < 1e-15);
        assert!((m.prob("b").unwrap() - 0.4).abs() < 1e-15);
        assert!((m.prob("c").unwrap() - 0.2).abs() < 1e-15);
        assert!((m.term_prob.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let single = fit_ppmi(&corpus(&["a"])).unwrap();
        assert_eq!(single.prob("a"), Some(1.0));
        assert!(fit_ppmi(&corpus(&["", "  "])).is_err());
    }

    #[test]
    fn ppmi_transform_values() {
        let m = fit_ppmi(&corpus(&["a a b", "b c"])).unwrap();
        let v = to_dense(&m.transform("a a b"), m.dim());
        assert!((v[m.vocab.get("a").unwrap()] - (5.0f64 / 3.0).ln()).abs() < 1e-12);
        assert_eq!(v[m.vocab.get("b").unwrap()], 0.0);
        let c = to_dense(&m.transform("c"), m.dim());
        assert!((c[m.vocab.get("c").unwrap()] - 5.0f64.ln()).abs() < 1e-12);
        // empirical distribution equal to the corpus one
        assert!(m.transform("a a b b c").is_empty());
        assert!(m.transform("zzz").is_empty());
    }

    #[test]
    fn embeddings_ingestion() {
        let ok = "{\"_meta\":{\"model\":\"m\",\"pooling\":\"mean\",\"dim\":4}}\n\
                  {\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"vector\":[0.5,0,0,1]}\n";
        let set = read_embeddings(ok.as_bytes()).unwrap();
        assert_eq!(set.dim, 4);
        assert_eq!(set.len(), 2);

        let ragged = "{\"id\":\"a\",\"vector\":[1,2,3,4]}\n{\"id\":\"b\",\"vector\":[1,2,3,4,5]}\n";
        let err = read_embeddings(ragged.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");

        let nan = "{\"id\":\"a\",\"vector\":[1,NaN]}\n";
        assert!(read_embeddings(nan.as_bytes()).is_err());

        let dup = "{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[2]}\n";
        assert!(read_embeddings(dup.as_bytes()).unwrap_err().to_string().contains("duplicate"));
    }

    #[test]
    fn featurize_shapes_and_errors() {
        let c = corpus(&["a b a", "b c"]);
        let m = fit_tfidf(&c, &min_df(1)).unwrap();
        let x = featurize(&c, &Featurizer::Tfidf(&m)).unwrap();
        assert_eq!((x.n_rows(), x.n_cols()), (2, 3));
        assert_eq!(x, featurize(&c, &Featurizer::Tfidf(&m)).unwrap());

        let mut emb = EmbeddingSet::new(2);
        emb.insert("d0", vec![1.0, 2.0]).unwrap();
        let err = featurize(&c, &Featurizer::Embeddings(&emb)).unwrap_err();
        assert!(err.to_string().contains("d1"), "{err}");
        emb.insert("d1", vec![0.0, -1.0]).unwrap();
        let x = featurize(&c, &Featurizer::Embeddings(&emb)).unwrap();
        assert_eq!(x.to_dense(), vec![vec![1.0, 2.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn permuting_documents_permutes_rows() {
        let texts = ["a b a c", "b c d", "d d a", "c"];
        let c = corpus(&texts);
        let reordered = {
            let docs = [2, 0, 3, 1].iter().map(|&i| c.documents()[i].clone()).collect();
            Corpus::new(docs, LabelScheme::Boundary).unwrap()
        };
        let m1 = fit_tfidf(&c, &min_df(1)).unwrap();
        let m2 = fit_tfidf(&reordered, &min_df(1)).unwrap();
        assert_eq!(m1, m2);
        let x1 = featurize(&c, &Featurizer::Tfidf(&m1)).unwrap();
        let x2 = featurize(&reordered, &Featurizer::Tfidf(&m2)).unwrap();
        assert_eq!(x1.select_rows(&[2, 0, 3, 1]), x2);
    }
}
