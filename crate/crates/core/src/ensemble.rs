//! Combining predictors.
//!
//! Classification components vote with their dev accuracy as weight (raw,
//! not normalized). Boundary regressors are averaged with weights
//! proportional to the reciprocal of their dev MAE, normalized to sum to one.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictionKind {
    Class,
    Probs,
    Scalar,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Class(usize),
    Probs(Vec<f64>),
    Scalar(f64),
}

impl Prediction {
    pub fn kind(&self) -> PredictionKind {
        match self {
            Prediction::Class(_) => PredictionKind::Class,
            Prediction::Probs(_) => PredictionKind::Probs,
            Prediction::Scalar(_) => PredictionKind::Scalar,
        }
    }

    /// Class id for class predictions, argmax (smallest id on ties) for
    /// probability vectors.
    pub fn as_class(&self) -> Option<usize> {
        match self {
            Prediction::Class(c) => Some(*c),
            Prediction::Probs(p) => argmax(p),
            Prediction::Scalar(_) => None,
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Prediction::Scalar(v) => Some(*v),
            Prediction::Class(c) => Some(*c as f64),
            Prediction::Probs(_) => None,
        }
    }
}

/// Per-document predictions of one component, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub name: String,
    pub kind: PredictionKind,
    values: IndexMap<String, Prediction>,
    /// Accuracy or MAE on the dev split, when known.
    pub dev_metric: Option<f64>,
}

impl PredictionSet {
    pub fn new(name: impl Into<String>, kind: PredictionKind) -> Self {
        PredictionSet {
            name: name.into(),
            kind,
            values: IndexMap::new(),
            dev_metric: None,
        }
    }

    pub fn with_dev_metric(mut self, metric: f64) -> Self {
        self.dev_metric = Some(metric);
        self
    }

    pub fn insert(&mut self, id: impl Into<String>, pred: Prediction) -> Result<()> {
        let id = id.into();
        if pred.kind() != self.kind {
            return Err(Error::InvalidArgument(format!(
                "{}: {:?} prediction in a {:?} set",
                self.name,
                pred.kind(),
                self.kind
            )));
        }
        if let Prediction::Probs(p) = &pred {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|&v| !(v >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidArgument(format!(
                    "{}: probabilities for {id:?} must be non-negative and sum to 1 (sum {sum})",
                    self.name
                )));
            }
        }
        if self.values.insert(id.clone(), pred).is_some() {
            return Err(Error::DuplicateId(id));
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Prediction> {
        self.values.get(id)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Prediction)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Predictions in `corpus` order. Fails on the first missing id.
    pub fn aligned<'a>(&'a self, corpus: &Corpus) -> Result<Vec<&'a Prediction>> {
        corpus
            .ids()
            .map(|id| {
                self.get(id).ok_or_else(|| Error::MissingId(format!("{id} (in {})", self.name)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinationRule {
    Vote,
    WeightedAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub components: Vec<String>,
    pub weights: Vec<f64>,
    pub rule: CombinationRule,
}

impl EnsembleSpec {
    pub fn new(components: Vec<String>, weights: Vec<f64>, rule: CombinationRule) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Empty("ensemble has no components".into()));
        }
        if components.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        check_positive(&weights)?;
        Ok(EnsembleSpec {
            components,
            weights,
            rule,
        })
    }
}

fn check_positive(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Empty("no weights".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidArgument(format!("weights must be positive, got {w}")));
    }
    Ok(())
}

/// Smallest index of the maximum; `None` for an empty slice.
pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Fraction of `preds` that match the gold labels of `gold`.
pub(crate) fn set_accuracy(preds: &PredictionSet, gold: &Corpus) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Empty("no gold documents".into()));
    }
    let labels = gold.labels()?;
    let aligned = preds.aligned(gold)?;
    let mut correct = 0usize;
    for (pred, &label) in aligned.iter().zip(&labels) {
        let class = pred.as_class().ok_or_else(|| {
            Error::InvalidArgument(format!("{}: scalar predictions have no class", preds.name))
        })?;
        if class as i64 == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

/// Voting weights: each component's dev accuracy, unnormalized.
pub fn accuracy_weights(dev_preds: &[PredictionSet], gold: &Corpus) -> Result<Vec<f64>> {
    dev_preds
        .iter()
        .map(|set| {
            let acc = set_accuracy(set, gold)?;
            if acc == 0.0 {
                return Err(Error::ZeroWeight(set.name.clone()));
            }
            Ok(acc)
        })
        .collect()
}

/// Weighted plurality vote. Ties go to the smallest class id.
pub fn weighted_vote(votes: &[usize], weights: &[f64]) -> Result<usize> {
    if votes.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: votes.len(),
        });
    }
    check_positive(weights)?;
    let classes = votes.iter().max().map_or(0, |m| m + 1);
    let mut tally = vec![0.0; classes];
    for (&v, &w) in votes.iter().zip(weights) {
        tally[v] += w;
    }
    Ok(argmax(&tally).expect("at least one vote"))
}

/// `w_i = (1/mae_i) / sum_j (1/mae_j)`.
pub fn inverse_mae_weights(dev_maes: &[f64]) -> Result<Vec<f64>> {
    if dev_maes.is_empty() {
        return Err(Error::Empty("no dev MAEs".into()));
    }
    if let Some(m) = dev_maes.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "dev MAE must be positive and finite, got {m}"
        )));
    }
    let reciprocals: Vec<f64> = dev_maes.iter().map(|m| 1.0 / m).collect();
    let total: f64 = reciprocals.iter().sum();
    Ok(reciprocals.into_iter().map(|r| r / total).collect())
}

/// `sum_i w_i * p_i`. Weights must sum to one.
pub fn weighted_average(preds: &[f64], weights: &[f64]) -> Result<f64> {
    if preds.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: preds.len(),
        });
    }
    check_positive(weights)?;
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    Ok(preds.iter().zip(weights).map(|(p, w)| p * w).sum())
}

/// Argmax of the weighted sum of probability vectors, smallest id on ties.
pub fn combine_probs(probs: &[&[f64]], weights: &[f64]) -> Result<usize> {
    if probs.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: probs.len(),
        });
    }
    check_positive(weights)?;
    let k = probs[0].len();
    let mut acc = vec![0.0; k];
    for (p, &w) in probs.iter().zip(weights) {
        if p.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: p.len(),
            });
        }
        for (a, &v) in acc.iter_mut().zip(p.iter()) {
            *a += w * v;
        }
    }
    argmax(&acc).ok_or_else(|| Error::Empty("zero classes".into()))
}

/// Checks that every set covers exactly the ids of the first one and
/// returns those ids in first-set order.
fn common_ids(sets: &[&PredictionSet]) -> Result<Vec<String>> {
    let first = sets.first().ok_or_else(|| Error::Empty("no components".into()))?;
    for set in &sets[1..] {
        if set.len() != first.len() || first.ids().any(|id| set.get(id).is_none()) {
            return Err(Error::Coverage(format!(
                "{:?} and {:?} cover different documents",
                first.name, set.name
            )));
        }
    }
    Ok(first.ids().map(str::to_owned).collect())
}

/// Applies `spec` to whole prediction sets, given in the order of
/// `spec.components`. `Vote` accepts class or probability sets (all
/// probability sets are combined with [`combine_probs`]); `WeightedAverage`
/// requires scalar sets and returns unrounded scalars.
pub fn combine_sets(
    spec: &EnsembleSpec,
    sets: &[&PredictionSet],
    name: impl Into<String>,
) -> Result<PredictionSet> {
    if sets.len() != spec.components.len() {
        return Err(Error::DimensionMismatch {
            expected: spec.components.len(),
            got: sets.len(),
        });
    }
    let ids = common_ids(sets)?;
    let all_probs = sets.iter().all(|s| s.kind == PredictionKind::Probs);
    let kind = match spec.rule {
        CombinationRule::Vote => PredictionKind::Class,
        CombinationRule::WeightedAverage => PredictionKind::Scalar,
    };
    let mut out = PredictionSet::new(name, kind);
    for id in ids {
        let preds: Vec<&Prediction> = sets.iter().map(|s| &s.values[&id]).collect();
        let combined = match spec.rule {
            CombinationRule::Vote if all_probs => {
                let probs: Vec<&[f64]> = preds
                    .iter()
                    .map(|p| match p {
                        Prediction::Probs(v) => v.as_slice(),
                        _ => unreachable!(),
                    })
                    .collect();
                Prediction::Class(combine_probs(&probs, &spec.weights)?)
            }
            CombinationRule::Vote => {
                let votes = preds
                    .iter()
                    .map(|p| {
                        p.as_class().ok_or_else(|| {
                            Error::InvalidArgument("voting needs class predictions".into())
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Prediction::Class(weighted_vote(&votes, &spec.weights)?)
            }
            CombinationRule::WeightedAverage => {
                let values = preds
                    .iter()
                    .map(|p| match p {
                        Prediction::Scalar(v) => Ok(*v),
                        _ => Err(Error::InvalidArgument(
                            "weighted average needs scalar predictions".into(),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Prediction::Scalar(weighted_average(&values, &spec.weights)?)
            }
        };
        out.insert(id, combined)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelScheme};
    use proptest::prelude::*;

    fn gold(labels: &[i64]) -> Corpus {
        let docs = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| Document::new(i.to_string(), "w").with_label(l))
            .collect();
        Corpus::new(docs, LabelScheme::Binary).unwrap()
    }

    fn class_set(name: &str, preds: &[usize]) -> PredictionSet {
        let mut s = PredictionSet::new(name, PredictionKind::Class);
        for (i, &p) in preds.iter().enumerate() {
            s.insert(i.to_string(), Prediction::Class(p)).unwrap();
        }
        s
    }

    #[test]
    fn accuracy_weights_are_raw_accuracies() {
        let g = gold(&[1, 1, 0, 0]);
        let sets = [class_set("a", &[1, 1, 0, 1]), class_set("b", &[1, 1, 0, 0])];
        assert_eq!(accuracy_weights(&sets, &g).unwrap(), vec![0.75, 1.0]);
    }

    #[test]
    fn zero_accuracy_component_rejected() {
        let g = gold(&[1, 0]);
        let err = accuracy_weights(&[class_set("wrong", &[0, 1])], &g).unwrap_err();
        assert!(matches!(err, Error::ZeroWeight(ref n) if n == "wrong"));
    }

    #[test]
    fn accuracy_weights_missing_id() {
        let g = gold(&[1, 0, 1]);
        let err = accuracy_weights(&[class_set("short", &[1, 0])], &g).unwrap_err();
        assert!(matches!(err, Error::MissingId(_)));
        let empty = Corpus::new(vec![], LabelScheme::Binary).unwrap();
        assert!(matches!(
            accuracy_weights(&[class_set("x", &[])], &empty).unwrap_err(),
            Error::Empty(_)
        ));
    }

    #[test]
    fn vote_examples() {
        assert_eq!(weighted_vote(&[1, 0, 1], &[0.70, 0.69, 0.78]).unwrap(), 1);
        assert_eq!(weighted_vote(&[0, 1], &[0.5, 0.5]).unwrap(), 0);
        assert_eq!(weighted_vote(&[1, 0], &[0.5, 0.5]).unwrap(), 0);
        assert_eq!(weighted_vote(&[4], &[0.3]).unwrap(), 4);
        assert_eq!(weighted_vote(&[2, 0, 0], &[0.9, 0.5, 0.3]).unwrap(), 2);
    }

    #[test]
    fn inverse_mae_examples() {
        assert_eq!(inverse_mae_weights(&[1.0, 3.0]).unwrap(), vec![0.75, 0.25]);
        for w in inverse_mae_weights(&[7.5, 7.5, 7.5]).unwrap() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(inverse_mae_weights(&[1.0, 0.0]).is_err());
        assert!(inverse_mae_weights(&[]).is_err());
    }

    #[test]
    fn weighted_average_examples() {
        assert_eq!(weighted_average(&[10.0, 20.0], &[0.75, 0.25]).unwrap(), 12.5);
        assert_eq!(weighted_average(&[3.5, 3.5, 3.5], &[0.2, 0.3, 0.5]).unwrap(), 3.5);
        assert_eq!(weighted_average(&[9.0], &[1.0]).unwrap(), 9.0);
        assert!(weighted_average(&[1.0, 2.0], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn combine_probs_examples() {
        assert_eq!(combine_probs(&[&[1.0, 0.0], &[0.0, 1.0]], &[2.0, 1.0]).unwrap(), 0);
        assert_eq!(combine_probs(&[&[0.2, 0.8], &[0.2, 0.8]], &[1.0, 3.0]).unwrap(), 1);
        assert_eq!(combine_probs(&[&[0.5, 0.5]], &[1.0]).unwrap(), 0);
        assert!(matches!(
            combine_probs(&[&[0.5, 0.5], &[0.2, 0.3, 0.5]], &[1.0, 1.0]).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn combine_sets_checks_coverage() {
        let a = class_set("a", &[1, 0, 1]);
        let b = class_set("b", &[1, 0]);
        let spec =
            EnsembleSpec::new(vec!["a".into(), "b".into()], vec![1.0, 1.0], CombinationRule::Vote)
                .unwrap();
        assert!(matches!(combine_sets(&spec, &[&a, &b], "e").unwrap_err(), Error::Coverage(_)));
    }

    #[test]
    fn combine_sets_votes_per_document() {
        let a = class_set("a", &[1, 0, 1]);
        let b = class_set("b", &[0, 0, 1]);
        let c = class_set("c", &[1, 1, 0]);
        let spec = EnsembleSpec::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.70, 0.69, 0.78],
            CombinationRule::Vote,
        )
        .unwrap();
        let out = combine_sets(&spec, &[&a, &b, &c], "e").unwrap();
        let got: Vec<_> = out.iter().map(|(_, p)| p.as_class().unwrap()).collect();
        assert_eq!(got, vec![1, 0, 1]);
    }

    #[test]
    fn probs_must_be_distributions() {
        let mut s = PredictionSet::new("p", PredictionKind::Probs);
        assert!(s.insert("a", Prediction::Probs(vec![0.5, 0.6])).is_err());
        assert!(s.insert("a", Prediction::Probs(vec![-0.5, 1.5])).is_err());
        s.insert("a", Prediction::Probs(vec![0.4, 0.6])).unwrap();
        assert!(s.insert("b", Prediction::Class(1)).is_err());
    }

    proptest! {
        #[test]
        fn vote_is_scale_invariant(
            votes in prop::collection::vec(0usize..4, 1..8),
            raw in prop::collection::vec(0.01f64..1.0, 8),
            scale in 0.001f64..1000.0,
        ) {
            let weights = &raw[..votes.len()];
            let scaled: Vec<f64> = weights.iter().map(|w| w * scale).collect();
            prop_assert_eq!(
                weighted_vote(&votes, weights).unwrap(),
                weighted_vote(&votes, &scaled).unwrap()
            );
        }

        #[test]
        fn inverse_mae_weights_normalized_and_order_reversing(
            maes in prop::collection::vec(0.01f64..100.0, 1..10)
        ) {
            let w = inverse_mae_weights(&maes).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for i in 0..maes.len() {
                for j in 0..maes.len() {
                    if maes[i] < maes[j] {
                        prop_assert!(w[i] > w[j]);
                    }
                }
            }
        }
    }
}
