use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mgtd::boundary::{combine_boundary, BoundaryComponent, ComponentSpec, FeaturizerModel, PostProcess};
use mgtd::corpus::{
    clean_text, load_jsonl, load_predictions, write_predictions, CleanMode, Corpus, LabelScheme,
};
use mgtd::ensemble::{
    accuracy_weights, combine_sets, inverse_mae_weights, CombinationRule, EnsembleSpec, Prediction,
    PredictionKind, PredictionSet,
};
use mgtd::eval::{accuracy, confusion, emit_report, mae, ComponentMetric, EnsembleMetric, RunReport};
use mgtd::features::{load_embeddings, EmbeddingSet};
use mgtd::regress::{fit_softmax, predict_proba, ClassifierModel};
use mgtd::synthetic::{binary_corpus, mixed_corpus, MixedTextConfig};
use mgtd::Error;
use serde::{Deserialize, Serialize};

use crate::config::{ComponentConfig, ModelSpec, RunConfig, Task};
use crate::{Cli, CliError, Command, ModeArg, SynthKind};

type CliResult<T = ()> = Result<T, CliError>;

pub fn run(cli: &Cli) -> CliResult {
    match &cli.command {
        Command::Preprocess { input, output, mode } => {
            let mode = match mode {
                Some(m) => clean_mode(*m),
                None => match &cli.config {
                    Some(_) => load_config(cli)?.cleaning,
                    None => CleanMode::None,
                },
            };
            preprocess(input, output, mode)
        }
        Command::Fit => fit(&load_config(cli)?),
        Command::Predict { split } => predict(&load_config(cli)?, split),
        Command::Ensemble {
            spec,
            dev_gold,
            target,
            output,
            weights_out,
        } => ensemble(spec, dev_gold.as_deref(), target.as_deref(), output, weights_out.as_deref()),
        Command::Evaluate {
            split,
            preds,
            gold,
            task,
            output,
        } => match (split, preds, gold) {
            (Some(split), _, _) => evaluate_split(&load_config(cli)?, split, output.as_deref()),
            (None, Some(preds), Some(gold)) => {
                let task = match (task, &cli.config) {
                    (Some(t), _) => *t,
                    (None, Some(_)) => load_config(cli)?.task,
                    (None, None) => return Err(CliError::Usage("--task is required".into())),
                };
                let output = output
                    .as_deref()
                    .ok_or_else(|| CliError::Usage("--output is required with --preds".into()))?;
                evaluate_file(preds, gold, task, output)
            }
            _ => Err(CliError::Usage("pass either --split or --preds and --gold".into())),
        },
        Command::Synth {
            kind,
            n_docs,
            id_prefix,
            output,
        } => {
            let cfg = MixedTextConfig {
                n_docs: *n_docs,
                id_prefix: id_prefix.clone(),
                seed: cli.seed.unwrap_or(0),
                ..MixedTextConfig::default()
            };
            let corpus = match kind {
                SynthKind::Boundary => mixed_corpus(&cfg),
                SynthKind::Binary => binary_corpus(&cfg),
            };
            ensure_parent(output)?;
            corpus.write_jsonl(output)?;
            Ok(())
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("this command needs --config".into()))?;
    let mut config = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        config.output_dir = dir.clone();
    }
    config.validate()?;
    Ok(config)
}

fn clean_mode(m: ModeArg) -> CleanMode {
    match m {
        ModeArg::Full => CleanMode::Full,
        ModeArg::LinksOnly => CleanMode::LinksOnly,
        ModeArg::None => CleanMode::None,
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    if e.kind() == std::io::ErrorKind::NotFound {
        CliError::Usage(format!("{}: {e}", path.display()))
    } else {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

fn ensure_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CliResult {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- preprocess

/// Streams `input` to `output`, replacing each record's `text` field with its
/// cleaned form. Other fields are copied unchanged.
fn preprocess(input: &Path, output: &Path, mode: CleanMode) -> CliResult {
    let reader = BufReader::new(File::open(input).map_err(|e| io_err(input, e))?);
    ensure_parent(output)?;
    let mut out = BufWriter::new(File::create(output).map_err(|e| io_err(output, e))?);
    for (i, line) in reader.lines().enumerate() {
        let parse_err = |message: String| Error::Parse { line: i + 1, message };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(format!("malformed JSON: {e}")))?;
        let text = value
            .get_mut("text")
            .ok_or_else(|| parse_err("missing \"text\" field".into()))?;
        let cleaned = match text.as_str() {
            Some(s) => clean_text(s, mode),
            None => return Err(parse_err("\"text\" must be a string".into()).into()),
        };
        *text = serde_json::Value::String(cleaned);
        serde_json::to_writer(&mut out, &value).map_err(Error::from)?;
        out.write_all(b"\n").map_err(|e| io_err(output, e))?;
    }
    out.flush().map_err(|e| io_err(output, e))
}

// ----------------------------------------------------------------------- fit

/// A fitted component as stored under `<output_dir>/models/<name>.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Artifact {
    Boundary(BoundaryComponent),
    Classifier {
        name: String,
        featurizer: FeaturizerModel,
        model: ClassifierModel,
    },
    External {
        name: String,
    },
}

/// `<output_dir>/models/manifest.json`: everything `predict` needs besides
/// the per-component artifacts.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    task: Task,
    seed: u64,
    cleaning: CleanMode,
    postprocess: PostProcess,
    ensemble: EnsembleSpec,
    /// Dev accuracy (classification) or MAE (boundary) per component.
    dev_metrics: Option<Vec<f64>>,
}

fn load_corpus(config: &RunConfig, split: &str) -> CliResult<Corpus> {
    let corpus = load_jsonl(config.split_path(split)?, config.task.scheme())?;
    Ok(corpus.cleaned(config.cleaning)?)
}

fn component_embeddings(c: &ComponentConfig, split: &str) -> CliResult<Option<EmbeddingSet>> {
    match c.embeddings.get(split) {
        Some(path) => Ok(Some(load_embeddings(path)?)),
        None => Ok(None),
    }
}

fn class_targets(corpus: &Corpus) -> CliResult<Vec<usize>> {
    Ok(corpus.labels()?.into_iter().map(|l| l as usize).collect())
}

fn num_classes(task: Task) -> usize {
    task.scheme().num_classes().unwrap_or(0)
}

fn fit_component(c: &ComponentConfig, train: &Corpus) -> CliResult<Artifact> {
    let embeddings = component_embeddings(c, "train")?;
    let featurizer = c.featurizer.clone();
    Ok(match &c.model {
        ModelSpec::External { .. } => Artifact::External { name: c.name.clone() },
        ModelSpec::Softmax(cfg) => {
            let featurizer = FeaturizerModel::fit(featurizer.as_ref().expect("validated"), train, embeddings.as_ref())?;
            let x = featurizer.featurize(train, embeddings.as_ref())?;
            let y = class_targets(train)?;
            let model = fit_softmax(&x, &y, cfg)?;
            Artifact::Classifier {
                name: c.name.clone(),
                featurizer,
                model,
            }
        }
        other => {
            let spec = ComponentSpec {
                name: c.name.clone(),
                featurizer: featurizer.expect("validated"),
                regressor: other.regressor().expect("validated"),
            };
            Artifact::Boundary(BoundaryComponent::fit(&spec, train, embeddings.as_ref())?)
        }
    })
}

fn fit(config: &RunConfig) -> CliResult {
    let train = load_corpus(config, "train")?;
    let has_dev = config.splits.contains_key("dev");
    if config.components.len() > 1 && !has_dev {
        return Err(CliError::Usage(format!(
            "an ensemble of {} components needs a dev split to derive weights",
            config.components.len()
        )));
    }
    let models_dir = config.models_dir();
    let mut artifacts = Vec::with_capacity(config.components.len());
    for c in &config.components {
        eprintln!("fitting {}", c.name);
        let artifact = fit_component(c, &train)?;
        write_json(&artifact, &models_dir.join(format!("{}.json", c.name)))?;
        artifacts.push(artifact);
    }

    let names: Vec<String> = config.components.iter().map(|c| c.name.clone()).collect();
    let rule = match config.task {
        Task::Boundary => CombinationRule::WeightedAverage,
        _ => CombinationRule::Vote,
    };
    let (weights, dev_metrics) = if has_dev {
        let dev = load_corpus(config, "dev")?;
        let sets = config
            .components
            .iter()
            .zip(&artifacts)
            .map(|(c, a)| component_predictions(config, c, a, &dev, "dev").map(|(set, _)| set))
            .collect::<CliResult<Vec<_>>>()?;
        let (weights, metrics) = match config.task {
            Task::Boundary => {
                let maes = sets.iter().map(|s| mae(s, &dev)).collect::<mgtd::Result<Vec<_>>>()?;
                for (m, name) in maes.iter().zip(&names) {
                    if *m == 0.0 {
                        return Err(Error::ZeroWeight(name.clone()).into());
                    }
                }
                (inverse_mae_weights(&maes)?, maes)
            }
            _ => {
                let accs = accuracy_weights(&sets, &dev)?;
                (accs.clone(), accs)
            }
        };
        for (name, m) in names.iter().zip(&metrics) {
            eprintln!("dev {} {name}: {m}", config.task.metric_name());
        }
        (weights, Some(metrics))
    } else {
        (vec![1.0], None)
    };
    let manifest = Manifest {
        task: config.task,
        seed: config.seed,
        cleaning: config.cleaning,
        postprocess: config.postprocess,
        ensemble: EnsembleSpec::new(names, weights, rule)?,
        dev_metrics,
    };
    write_json(&manifest, &models_dir.join("manifest.json"))
}

// ------------------------------------------------------------------- predict

/// Predictions of one component on `corpus`. For classifiers, the second
/// value holds the class probabilities.
fn component_predictions(
    config: &RunConfig,
    c: &ComponentConfig,
    artifact: &Artifact,
    corpus: &Corpus,
    split: &str,
) -> CliResult<(PredictionSet, Option<PredictionSet>)> {
    let embeddings = component_embeddings(c, split)?;
    match (artifact, &c.model) {
        (Artifact::Boundary(component), _) => {
            Ok((component.predict(corpus, embeddings.as_ref(), config.postprocess)?, None))
        }
        (Artifact::Classifier { featurizer, model, .. }, _) => {
            let x = featurizer.featurize(corpus, embeddings.as_ref())?;
            let probs = predict_proba(model, &x)?;
            let mut classes = PredictionSet::new(c.name.clone(), PredictionKind::Class);
            let mut prob_set = PredictionSet::new(c.name.clone(), PredictionKind::Probs);
            for (doc, p) in corpus.iter().zip(probs) {
                let pred = Prediction::Probs(p);
                classes.insert(doc.id.clone(), Prediction::Class(pred.as_class().expect("non-empty")))?;
                prob_set.insert(doc.id.clone(), pred)?;
            }
            Ok((classes, Some(prob_set)))
        }
        (Artifact::External { .. }, ModelSpec::External { prediction_kind, predictions }) => {
            let path = predictions.get(split).ok_or_else(|| {
                CliError::Usage(format!("{}: no external predictions for split {split:?}", c.name))
            })?;
            let raw = load_predictions(path, c.name.clone(), *prediction_kind)?;
            let aligned = raw.aligned(corpus)?;
            let mut set = match config.task {
                Task::Boundary => PredictionSet::new(c.name.clone(), PredictionKind::Scalar),
                _ => PredictionSet::new(c.name.clone(), PredictionKind::Class),
            };
            for (doc, pred) in corpus.iter().zip(aligned) {
                let value = match config.task {
                    Task::Boundary => {
                        let v = pred.as_scalar().ok_or_else(|| {
                            CliError::Usage(format!("{}: boundary predictions must be scalar", c.name))
                        })?;
                        Prediction::Scalar(config.postprocess.apply(v, &doc.text))
                    }
                    _ => Prediction::Class(pred.as_class().ok_or_else(|| {
                        CliError::Usage(format!("{}: classification predictions need classes", c.name))
                    })?),
                };
                set.insert(doc.id.clone(), value)?;
            }
            let probs = (raw.kind == PredictionKind::Probs).then_some(raw);
            Ok((set, probs))
        }
        (Artifact::External { name }, _) => Err(CliError::Usage(format!(
            "{name}: artifact is external but the config model is not"
        ))),
    }
}

fn load_manifest(config: &RunConfig) -> CliResult<Manifest> {
    let manifest: Manifest = read_json(&config.models_dir().join("manifest.json"))?;
    let names: Vec<&str> = config.components.iter().map(|c| c.name.as_str()).collect();
    if manifest.ensemble.components != names || manifest.task != config.task {
        return Err(CliError::Usage(
            "fitted models do not match the config; run `fit` again".into(),
        ));
    }
    Ok(manifest)
}

fn predict(config: &RunConfig, split: &str) -> CliResult {
    let manifest = load_manifest(config)?;
    let corpus = load_corpus(config, split)?;
    let out_dir = config.predictions_dir(split);
    let mut sets = Vec::with_capacity(config.components.len());
    for c in &config.components {
        let artifact: Artifact = read_json(&config.models_dir().join(format!("{}.json", c.name)))?;
        let (set, probs) = component_predictions(config, c, &artifact, &corpus, split)?;
        ensure_parent(&out_dir.join("x"))?;
        write_predictions(&set, out_dir.join(format!("{}.jsonl", c.name)))?;
        if let Some(probs) = probs {
            write_predictions(&probs, out_dir.join(format!("{}.probs.jsonl", c.name)))?;
        }
        sets.push(set);
    }
    let combined = match config.task {
        Task::Boundary => {
            combine_boundary(&sets, &manifest.ensemble.weights, &corpus, manifest.postprocess)?.1
        }
        _ => {
            let refs: Vec<&PredictionSet> = sets.iter().collect();
            combine_sets(&manifest.ensemble, &refs, "ensemble")?
        }
    };
    write_predictions(&combined, out_dir.join("ensemble.jsonl"))?;
    eprintln!("wrote {} predictions to {}", combined.len(), out_dir.display());
    Ok(())
}

// ------------------------------------------------------------------ ensemble

#[derive(Debug, Clone, Deserialize)]
struct EnsembleFileSpec {
    rule: CombinationRule,
    components: Vec<EnsembleFileComponent>,
}

#[derive(Debug, Clone, Deserialize)]
struct EnsembleFileComponent {
    name: String,
    /// Predictions on the target split.
    path: PathBuf,
    #[serde(default)]
    kind: Option<PredictionKind>,
    /// Dev accuracy (vote) or MAE (weighted_average), if already known.
    #[serde(default)]
    dev_metric: Option<f64>,
    /// Dev predictions, scored against `--dev-gold` when `dev_metric` is absent.
    #[serde(default)]
    dev_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct EnsembleWeights {
    rule: CombinationRule,
    components: Vec<String>,
    dev_metrics: Vec<f64>,
    weights: Vec<f64>,
}

fn ensemble(
    spec_path: &Path,
    dev_gold: Option<&Path>,
    target: Option<&Path>,
    output: &Path,
    weights_out: Option<&Path>,
) -> CliResult {
    let mut spec: EnsembleFileSpec = read_json(spec_path)?;
    if spec.components.is_empty() {
        return Err(CliError::Usage("ensemble spec has no components".into()));
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    for c in &mut spec.components {
        c.path = base.join(&c.path);
        if let Some(p) = &mut c.dev_path {
            *p = base.join(&*p);
        }
    }
    let (scheme, default_kind) = match spec.rule {
        CombinationRule::Vote => (LabelScheme::Multiway6, PredictionKind::Class),
        CombinationRule::WeightedAverage => (LabelScheme::Boundary, PredictionKind::Scalar),
    };
    let dev = dev_gold.map(|p| load_jsonl(p, scheme)).transpose()?;

    let mut metrics = Vec::with_capacity(spec.components.len());
    for c in &spec.components {
        let kind = c.kind.unwrap_or(default_kind);
        let metric = match (c.dev_metric, &c.dev_path, &dev) {
            (Some(m), _, _) => m,
            (None, Some(path), Some(dev)) => {
                let set = load_predictions(path, c.name.clone(), kind)?;
                match spec.rule {
                    CombinationRule::Vote => accuracy(&set, dev)?,
                    CombinationRule::WeightedAverage => mae(&set, dev)?,
                }
            }
            _ => {
                return Err(CliError::Usage(format!(
                    "{}: needs dev_metric, or dev_path together with --dev-gold",
                    c.name
                )))
            }
        };
        metrics.push(metric);
    }
    let weights = match spec.rule {
        CombinationRule::Vote => {
            if let Some((c, _)) = spec.components.iter().zip(&metrics).find(|(_, m)| **m == 0.0) {
                return Err(Error::ZeroWeight(c.name.clone()).into());
            }
            metrics.clone()
        }
        CombinationRule::WeightedAverage => inverse_mae_weights(&metrics)?,
    };
    let names: Vec<String> = spec.components.iter().map(|c| c.name.clone()).collect();
    let ens_spec = EnsembleSpec::new(names.clone(), weights.clone(), spec.rule)?;

    let sets = spec
        .components
        .iter()
        .map(|c| load_predictions(&c.path, c.name.clone(), c.kind.unwrap_or(default_kind)))
        .collect::<mgtd::Result<Vec<_>>>()?;
    let combined = match (spec.rule, target) {
        (CombinationRule::WeightedAverage, Some(target)) => {
            let corpus = load_jsonl(target, LabelScheme::Boundary)?;
            let post = PostProcess { snap: false, clip: true };
            combine_boundary(&sets, &weights, &corpus, post)?.1
        }
        _ => {
            let refs: Vec<&PredictionSet> = sets.iter().collect();
            combine_sets(&ens_spec, &refs, "ensemble")?
        }
    };
    ensure_parent(output)?;
    write_predictions(&combined, output)?;

    let summary = EnsembleWeights {
        rule: spec.rule,
        components: names,
        dev_metrics: metrics,
        weights,
    };
    match weights_out {
        Some(path) => write_json(&summary, path)?,
        None => println!("{}", serde_json::to_string(&summary).map_err(Error::from)?),
    }
    Ok(())
}

// ------------------------------------------------------------------ evaluate

fn score(set: &PredictionSet, gold: &Corpus, task: Task) -> CliResult<f64> {
    Ok(match task {
        Task::Boundary => mae(set, gold)?,
        _ => accuracy(set, gold)?,
    })
}

fn with_confusion(mut report: RunReport, set: &PredictionSet, gold: &Corpus, task: Task) -> CliResult<RunReport> {
    if task != Task::Boundary {
        report.confusion = Some(confusion(set, gold, num_classes(task))?);
    }
    Ok(report)
}

fn evaluate_file(preds: &Path, gold_path: &Path, task: Task, output: &Path) -> CliResult {
    let gold = load_jsonl(gold_path, task.scheme())?;
    let kind = match task {
        Task::Boundary => PredictionKind::Scalar,
        _ => PredictionKind::Class,
    };
    let name = preds.file_stem().and_then(|s| s.to_str()).unwrap_or("predictions");
    let set = load_predictions(preds, name, kind)?;
    let split = gold_path.file_stem().and_then(|s| s.to_str()).unwrap_or("gold");
    let mut report = RunReport::new(task.name(), split, task.metric_name());
    let metric = score(&set, &gold, task)?;
    report.components.push(ComponentMetric {
        name: name.to_owned(),
        metric,
    });
    let report = with_confusion(report, &set, &gold, task)?;
    ensure_parent(output)?;
    emit_report(&report, output)?;
    println!("{} {}: {metric}", name, task.metric_name());
    Ok(())
}

fn evaluate_split(config: &RunConfig, split: &str, output: Option<&Path>) -> CliResult {
    let manifest = load_manifest(config)?;
    let gold = load_corpus(config, split)?;
    let dir = config.predictions_dir(split);
    let kind = match config.task {
        Task::Boundary => PredictionKind::Scalar,
        _ => PredictionKind::Class,
    };
    let mut report = RunReport::new(config.task.name(), split, config.task.metric_name());
    for c in &config.components {
        let set = load_predictions(dir.join(format!("{}.jsonl", c.name)), c.name.clone(), kind)?;
        let metric = score(&set, &gold, config.task)?;
        println!("{} {}: {metric}", c.name, config.task.metric_name());
        report.components.push(ComponentMetric {
            name: c.name.clone(),
            metric,
        });
    }
    let combined = load_predictions(dir.join("ensemble.jsonl"), "ensemble", kind)?;
    let metric = score(&combined, &gold, config.task)?;
    println!("ensemble {}: {metric}", config.task.metric_name());
    report.ensemble = Some(EnsembleMetric {
        weights: manifest.ensemble.weights.clone(),
        metric,
    });
    report.config = serde_json::to_value(BTreeMap::from([
        ("seed", serde_json::json!(config.seed)),
        ("cleaning", serde_json::to_value(config.cleaning).map_err(Error::from)?),
        ("postprocess", serde_json::to_value(config.postprocess).map_err(Error::from)?),
        ("dev_metrics", serde_json::to_value(&manifest.dev_metrics).map_err(Error::from)?),
    ]))
    .map_err(Error::from)?;
    let report = with_confusion(report, &combined, &gold, config.task)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => config.reports_dir().join(format!("{split}.json")),
    };
    ensure_parent(&path)?;
    emit_report(&report, &path)?;
    Ok(())
}
