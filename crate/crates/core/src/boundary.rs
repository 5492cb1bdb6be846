//! Human/machine boundary prediction.
//!
//! Each component is a featurizer paired with a regressor. Its raw index
//! prediction is snapped to the nearest paragraph start, then rounded and
//! clipped to `[0, word_count]`. Component predictions are averaged with
//! inverse-dev-MAE weights and the average is rounded and clipped again.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{paragraph_starts, word_count, Corpus, Document, LabelScheme};
use crate::ensemble::{inverse_mae_weights, weighted_average, Prediction, PredictionKind, PredictionSet};
use crate::error::{Error, Result};
use crate::eval::mae;
use crate::features::{
    featurize, fit_ppmi, fit_tfidf, EmbeddingSet, FeatureMatrix, Featurizer, PpmiModel, TfidfConfig,
    TfidfModel,
};
use crate::regress::{fit_regressor, predict, RegressorConfig, RegressorModel};

/// Nearest paragraph start to `raw`; the earlier start wins a tie.
pub fn snap_to_paragraph(raw: f64, starts: &[usize]) -> usize {
    assert!(!starts.is_empty(), "paragraph starts must be non-empty");
    let idx = starts.partition_point(|&s| (s as f64) < raw);
    if idx == 0 {
        return starts[0];
    }
    if idx == starts.len() {
        return starts[idx - 1];
    }
    let (lo, hi) = (starts[idx - 1], starts[idx]);
    if hi as f64 - raw < raw - lo as f64 {
        hi
    } else {
        lo
    }
}

/// Rounds half away from zero, then clamps to `[0, word_count]`. NaN maps to 0.
pub fn clip_round(raw: f64, word_count: usize) -> usize {
    if raw.is_nan() {
        return 0;
    }
    let r = raw.round();
    if r <= 0.0 {
        0
    } else if r >= word_count as f64 {
        word_count
    } else {
        r as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PostProcess {
    pub snap: bool,
    pub clip: bool,
}

impl Default for PostProcess {
    fn default() -> Self {
        PostProcess {
            snap: true,
            clip: true,
        }
    }
}

impl PostProcess {
    /// Integer index for one raw prediction on `text`.
    pub fn apply(&self, raw: f64, text: &str) -> f64 {
        let v = if self.snap {
            snap_to_paragraph(raw, &paragraph_starts(text)) as f64
        } else {
            raw
        };
        self.finalize(v, word_count(text))
    }

    /// Round (and clip, when enabled).
    pub fn finalize(&self, value: f64, word_count: usize) -> f64 {
        if self.clip {
            clip_round(value, word_count) as f64
        } else {
            value.round()
        }
    }
}

/// How a component turns documents into features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeaturizerSpec {
    Tfidf(TfidfConfig),
    Ppmi,
    /// Vectors read from an exporter file, one per split.
    Embeddings,
}

/// A fitted featurizer. Embeddings carry only their dimension; the vectors
/// for the split being predicted are supplied at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeaturizerModel {
    Tfidf(TfidfModel),
    Ppmi(PpmiModel),
    Embeddings { dim: usize },
}

impl FeaturizerModel {
    pub fn fit(spec: &FeaturizerSpec, train: &Corpus, embeddings: Option<&EmbeddingSet>) -> Result<Self> {
        Ok(match spec {
            FeaturizerSpec::Tfidf(cfg) => FeaturizerModel::Tfidf(fit_tfidf(train, cfg)?),
            FeaturizerSpec::Ppmi => FeaturizerModel::Ppmi(fit_ppmi(train)?),
            FeaturizerSpec::Embeddings => {
                let set = embeddings.ok_or_else(|| {
                    Error::InvalidArgument("embedding component needs an embedding file".into())
                })?;
                FeaturizerModel::Embeddings { dim: set.dim }
            }
        })
    }

    pub fn featurize(&self, corpus: &Corpus, embeddings: Option<&EmbeddingSet>) -> Result<FeatureMatrix> {
        match self {
            FeaturizerModel::Tfidf(m) => featurize(corpus, &Featurizer::Tfidf(m)),
            FeaturizerModel::Ppmi(m) => featurize(corpus, &Featurizer::Ppmi(m)),
            FeaturizerModel::Embeddings { dim } => {
                let set = embeddings.ok_or_else(|| {
                    Error::InvalidArgument("embedding component needs an embedding file".into())
                })?;
                if set.dim != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: set.dim,
                    });
                }
                featurize(corpus, &Featurizer::Embeddings(set))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub name: String,
    pub featurizer: FeaturizerSpec,
    pub regressor: RegressorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryComponent {
    pub name: String,
    pub featurizer: FeaturizerModel,
    pub regressor: RegressorModel,
}

fn boundary_targets(corpus: &Corpus) -> Result<Vec<f64>> {
    if corpus.scheme() != LabelScheme::Boundary {
        return Err(Error::InvalidArgument(format!(
            "boundary regression needs a boundary corpus, got {:?}",
            corpus.scheme()
        )));
    }
    Ok(corpus.labels()?.into_iter().map(|l| l as f64).collect())
}

impl BoundaryComponent {
    /// Fits the featurizer and the regressor on `train` gold boundaries.
    pub fn fit(spec: &ComponentSpec, train: &Corpus, embeddings: Option<&EmbeddingSet>) -> Result<Self> {
        let featurizer = FeaturizerModel::fit(&spec.featurizer, train, embeddings)?;
        let x = featurizer.featurize(train, embeddings)?;
        let y = boundary_targets(train)?;
        let regressor = fit_regressor(&x, &y, &spec.regressor)?;
        Ok(BoundaryComponent {
            name: spec.name.clone(),
            featurizer,
            regressor,
        })
    }

    /// Unconstrained real-valued predictions, in corpus order.
    pub fn predict_raw(&self, corpus: &Corpus, embeddings: Option<&EmbeddingSet>) -> Result<Vec<f64>> {
        let x = self.featurizer.featurize(corpus, embeddings)?;
        predict(&self.regressor, &x)
    }

    pub fn predict_raw_doc(&self, doc: &Document, embeddings: Option<&EmbeddingSet>) -> Result<f64> {
        let single = Corpus::new(vec![doc.clone()], LabelScheme::Boundary)?;
        Ok(self.predict_raw(&single, embeddings)?[0])
    }

    /// Snapped and clipped integer predictions as a scalar set.
    pub fn predict(
        &self,
        corpus: &Corpus,
        embeddings: Option<&EmbeddingSet>,
        post: PostProcess,
    ) -> Result<PredictionSet> {
        let raw = self.predict_raw(corpus, embeddings)?;
        let mut set = PredictionSet::new(self.name.clone(), PredictionKind::Scalar);
        for (doc, r) in corpus.iter().zip(raw) {
            set.insert(doc.id.clone(), Prediction::Scalar(post.apply(r, &doc.text)))?;
        }
        Ok(set)
    }
}

/// Embedding sets for one split, keyed by component name.
pub type SplitEmbeddings = HashMap<String, EmbeddingSet>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPipeline {
    pub components: Vec<BoundaryComponent>,
    /// Normalized ensemble weights, one per component.
    pub weights: Vec<f64>,
    pub postprocess: PostProcess,
}

/// Intermediate results of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Post-processed integer predictions of each component.
    pub components: Vec<PredictionSet>,
    /// Weighted average of the component predictions before the final
    /// rounding and clipping.
    pub averaged: PredictionSet,
    pub final_predictions: PredictionSet,
}

impl BoundaryPipeline {
    pub fn new(components: Vec<BoundaryComponent>, weights: Vec<f64>, postprocess: PostProcess) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("boundary pipeline needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        Ok(BoundaryPipeline {
            components,
            weights,
            postprocess,
        })
    }

    /// Fits every component on `train`, scores each on `dev`, and weights
    /// them by reciprocal dev MAE. Returns the pipeline and the dev MAEs.
    pub fn fit(
        specs: &[ComponentSpec],
        train: &Corpus,
        dev: &Corpus,
        postprocess: PostProcess,
        train_embeddings: &SplitEmbeddings,
        dev_embeddings: &SplitEmbeddings,
    ) -> Result<(Self, Vec<f64>)> {
        if specs.is_empty() {
            return Err(Error::Empty("boundary pipeline needs at least one component".into()));
        }
        let mut components = Vec::with_capacity(specs.len());
        let mut dev_maes = Vec::with_capacity(specs.len());
        for spec in specs {
            let component = BoundaryComponent::fit(spec, train, train_embeddings.get(&spec.name))?;
            let preds = component.predict(dev, dev_embeddings.get(&spec.name), postprocess)?;
            let dev_mae = mae(&preds, dev)?;
            if dev_mae == 0.0 {
                return Err(Error::ZeroWeight(spec.name.clone()));
            }
            dev_maes.push(dev_mae);
            components.push(component);
        }
        let weights = inverse_mae_weights(&dev_maes)?;
        Ok((BoundaryPipeline::new(components, weights, postprocess)?, dev_maes))
    }

    pub fn run_detailed(&self, corpus: &Corpus, embeddings: &SplitEmbeddings) -> Result<PipelineOutput> {
        let components = self
            .components
            .iter()
            .map(|c| c.predict(corpus, embeddings.get(&c.name), self.postprocess))
            .collect::<Result<Vec<_>>>()?;
        let (averaged, final_predictions) = combine_boundary(&components, &self.weights, corpus, self.postprocess)?;
        Ok(PipelineOutput {
            components,
            averaged,
            final_predictions,
        })
    }

    pub fn run(&self, corpus: &Corpus, embeddings: &SplitEmbeddings) -> Result<PredictionSet> {
        Ok(self.run_detailed(corpus, embeddings)?.final_predictions)
    }
}

/// Weighted average of component predictions per document of `corpus`,
/// returned both unrounded and rounded/clipped to the document length.
pub fn combine_boundary(
    components: &[PredictionSet],
    weights: &[f64],
    corpus: &Corpus,
    post: PostProcess,
) -> Result<(PredictionSet, PredictionSet)> {
    let aligned = components
        .iter()
        .map(|set| {
            if set.len() != corpus.len() {
                return Err(Error::Coverage(format!(
                    "{:?} has {} predictions for {} documents",
                    set.name,
                    set.len(),
                    corpus.len()
                )));
            }
            set.aligned(corpus)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut averaged = PredictionSet::new("ensemble-average", PredictionKind::Scalar);
    let mut final_set = PredictionSet::new("ensemble", PredictionKind::Scalar);
    for (i, doc) in corpus.iter().enumerate() {
        let values = aligned
            .iter()
            .map(|a| {
                a[i].as_scalar()
                    .ok_or_else(|| Error::InvalidArgument("boundary predictions must be scalar".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let avg = weighted_average(&values, weights)?;
        averaged.insert(doc.id.clone(), Prediction::Scalar(avg))?;
        final_set.insert(doc.id.clone(), Prediction::Scalar(post.finalize(avg, doc.word_count())))?;
    }
    Ok((averaged, final_set))
}

/// Mean absolute error of boundary predictions against gold indices.
pub fn evaluate_boundary(preds: &PredictionSet, gold: &Corpus) -> Result<f64> {
    mae(preds, gold)
}
