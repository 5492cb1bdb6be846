//! Documents, JSONL ingestion, cleaning, word tokenization and paragraphs.
//!
//! A word index is the position of a token in [`tokenize_words`] output for
//! the text as stored. Boundary labels and paragraph starts both use it.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ensemble::{Prediction, PredictionKind, PredictionSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// 0 = human, 1 = machine.
    Binary,
    /// 0 human, 1 chatGPT, 2 Cohere, 3 davinci, 4 Bloomz, 5 Dolly.
    Multiway6,
    /// Word index of the first machine-generated word.
    Boundary,
}

impl LabelScheme {
    /// Number of classes for classification schemes.
    pub fn num_classes(self) -> Option<usize> {
        match self {
            LabelScheme::Binary => Some(2),
            LabelScheme::Multiway6 => Some(6),
            LabelScheme::Boundary => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, rename = "model", skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            label: None,
            source: None,
            generator: None,
        }
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = Some(label);
        self
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    scheme: LabelScheme,
}

impl Corpus {
    /// Builds a corpus, checking id uniqueness and label ranges.
    pub fn new(documents: Vec<Document>, scheme: LabelScheme) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for doc in &documents {
            if doc.id.is_empty() {
                return Err(Error::InvalidArgument("document id must be non-empty".into()));
            }
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
            check_label(doc, scheme)?;
        }
        Ok(Corpus { documents, scheme })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn scheme(&self) -> LabelScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().map(|d| d.id.as_str())
    }

    /// Gold labels in document order; fails on the first unlabeled document.
    pub fn labels(&self) -> Result<Vec<i64>> {
        self.documents
            .iter()
            .map(|d| d.label.ok_or_else(|| Error::MissingLabel(d.id.clone())))
            .collect()
    }

    /// Applies `clean_text` to every document. Boundary labels are re-checked
    /// against the cleaned word counts.
    pub fn cleaned(&self, mode: CleanMode) -> Result<Corpus> {
        let documents = self
            .documents
            .iter()
            .map(|d| Document {
                text: clean_text(&d.text, mode),
                ..d.clone()
            })
            .collect();
        Corpus::new(documents, self.scheme)
    }

    /// Writes the corpus back out in the input JSONL shape.
    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for doc in &self.documents {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

fn check_label(doc: &Document, scheme: LabelScheme) -> Result<()> {
    let Some(label) = doc.label else {
        return Ok(());
    };
    let out_of_range = |message: String| Error::LabelOutOfRange {
        id: doc.id.clone(),
        message,
    };
    match scheme {
        LabelScheme::Binary | LabelScheme::Multiway6 => {
            let k = scheme.num_classes().unwrap_or(0) as i64;
            if !(0..k).contains(&label) {
                return Err(out_of_range(format!("{label} not in 0..{k}")));
            }
        }
        LabelScheme::Boundary => {
            let words = doc.word_count() as i64;
            if !(0..=words).contains(&label) {
                return Err(out_of_range(format!("{label} not in 0..={words}")));
            }
        }
    }
    Ok(())
}

/// Extracts a required id field, accepting strings or integers.
pub(crate) fn id_field(obj: &serde_json::Map<String, Value>) -> std::result::Result<String, String> {
    match obj.get("id") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) if n.is_i64() || n.is_u64() => Ok(n.to_string()),
        Some(other) => Err(format!("\"id\" must be a string or integer, got {other}")),
        None => Err("missing \"id\"".into()),
    }
}

fn optional_string(
    obj: &serde_json::Map<String, Value>,
    key: &str,
) -> std::result::Result<Option<String>, String> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(format!("\"{key}\" must be a string, got {other}")),
    }
}

fn parse_document(line: &str) -> std::result::Result<Document, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("malformed JSON: {e}"))?;
    let Value::Object(obj) = value else {
        return Err("expected a JSON object".into());
    };
    let id = id_field(&obj)?;
    let text = match obj.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(format!("\"text\" must be a string, got {other}")),
        None => return Err("missing \"text\"".into()),
    };
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => match n.as_i64() {
            Some(v) => Some(v),
            None => return Err(format!("\"label\" must be an integer, got {n}")),
        },
        Some(other) => return Err(format!("\"label\" must be an integer, got {other}")),
    };
    Ok(Document {
        id,
        text,
        label,
        source: optional_string(&obj, "source")?,
        generator: optional_string(&obj, "model")?,
    })
}

/// Reads a JSONL corpus from any reader. Blank lines are skipped.
pub fn read_jsonl<R: BufRead>(reader: R, scheme: LabelScheme) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document(&line).map_err(|message| Error::Parse {
            line: line_no,
            message,
        })?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::Parse {
                line: line_no,
                message: Error::DuplicateId(doc.id).to_string(),
            });
        }
        check_label(&doc, scheme).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        documents.push(doc);
    }
    Corpus::new(documents, scheme)
}

pub fn load_jsonl(path: impl AsRef<Path>, scheme: LabelScheme) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_jsonl(BufReader::new(file), scheme)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CleanMode {
    /// Remove links, strip characters outside the whitelist, collapse
    /// whitespace runs.
    Full,
    /// Remove links only.
    LinksOnly,
    #[default]
    None,
}

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

fn is_horizontal_space(c: char) -> bool {
    c.is_whitespace() && c != '\n'
}

/// Removes every span that starts with a URL prefix and runs to the next
/// whitespace. When the removed span sits between whitespace (or starts the
/// text), one following space or tab is dropped as well.
fn remove_links(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    loop {
        let hit = URL_PREFIXES
            .iter()
            .filter_map(|p| rest.find(p))
            .min();
        let Some(start) = hit else {
            out.push_str(rest);
            return out;
        };
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
        rest = &tail[end..];
        let before_is_space = out.chars().next_back().is_none_or(char::is_whitespace);
        if before_is_space {
            if let Some(c) = rest.chars().next().filter(|&c| c == ' ' || c == '\t') {
                rest = &rest[c.len_utf8()..];
            }
        }
    }
}

fn is_kept(c: char) -> bool {
    c.is_alphanumeric()
        || c.is_whitespace()
        || matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '\'' | '"' | '(' | ')' | '-')
}

/// Collapses horizontal whitespace runs to one space and newline runs of
/// three or more to two newlines.
fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\n' {
            let mut run = 1;
            while chars.next_if_eq(&'\n').is_some() {
                run += 1;
            }
            out.push_str(if run >= 2 { "\n\n" } else { "\n" });
        } else if is_horizontal_space(c) {
            while chars.next_if(|&c| is_horizontal_space(c)).is_some() {}
            out.push(' ');
        } else {
            out.push(c);
        }
    }
    out
}

/// Cleans `text` according to `mode`. Idempotent for every mode.
pub fn clean_text(text: &str, mode: CleanMode) -> String {
    match mode {
        CleanMode::None => text.to_owned(),
        CleanMode::LinksOnly => remove_links(text),
        CleanMode::Full => {
            let filtered: String = remove_links(text).chars().filter(|&c| is_kept(c)).collect();
            // filtering can splice a new "www." together
            collapse_whitespace(&remove_links(&filtered))
        }
    }
}

/// Splits on runs of Unicode whitespace.
pub fn tokenize_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Word index of the first token of every non-empty paragraph. Paragraphs
/// are separated by one or more newlines. Texts without tokens yield `[0]`.
pub fn paragraph_starts(text: &str) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut offset = 0;
    for paragraph in text.split('\n') {
        let n = word_count(paragraph);
        if n > 0 {
            starts.push(offset);
            offset += n;
        }
    }
    if starts.is_empty() {
        starts.push(0);
    }
    starts
}

/// Writes one `{"id", "label"}` line per prediction (`{"id", "probs"}` for
/// probability sets), in set order. Integral scalars are written as integers.
pub fn write_predictions(preds: &PredictionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (id, pred) in preds.iter() {
        let line = match pred {
            Prediction::Class(c) => serde_json::json!({ "id": id, "label": c }),
            Prediction::Scalar(v) if v.fract() == 0.0 && v.abs() < 9.0e15 => {
                serde_json::json!({ "id": id, "label": *v as i64 })
            }
            Prediction::Scalar(v) => serde_json::json!({ "id": id, "label": v }),
            Prediction::Probs(p) => serde_json::json!({ "id": id, "probs": p }),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a prediction file written by [`write_predictions`] or by the
/// exporter. A leading `{"_meta": ...}` header line is skipped.
pub fn load_predictions(
    path: impl AsRef<Path>,
    name: impl Into<String>,
    kind: PredictionKind,
) -> Result<PredictionSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(file), name, kind)
}

pub fn read_predictions<R: BufRead>(
    reader: R,
    name: impl Into<String>,
    kind: PredictionKind,
) -> Result<PredictionSet> {
    let mut set = PredictionSet::new(name, kind);
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let parse_err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| parse_err(format!("malformed JSON: {e}")))?;
        let Value::Object(obj) = value else {
            return Err(parse_err("expected a JSON object".into()));
        };
        if obj.contains_key("_meta") {
            continue;
        }
        let id = id_field(&obj).map_err(parse_err)?;
        let pred = match kind {
            PredictionKind::Class => {
                let label = obj
                    .get("label")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| parse_err("\"label\" must be a non-negative integer".into()))?;
                Prediction::Class(label as usize)
            }
            PredictionKind::Scalar => {
                let label = obj
                    .get("label")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| parse_err("\"label\" must be a number".into()))?;
                Prediction::Scalar(label)
            }
            PredictionKind::Probs => {
                let probs: Vec<f64> = obj
                    .get("probs")
                    .cloned()
                    .map(serde_json::from_value)
                    .transpose()
                    .map_err(|e| parse_err(format!("\"probs\": {e}")))?
                    .ok_or_else(|| parse_err("missing \"probs\"".into()))?;
                Prediction::Probs(probs)
            }
        };
        set.insert(id, pred).map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn corpus_from(lines: &str, scheme: LabelScheme) -> Result<Corpus> {
        read_jsonl(lines.as_bytes(), scheme)
    }

    #[test]
    fn loads_fields() {
        let c = corpus_from(
            "{\"id\":\"7\",\"text\":\"a b\",\"label\":1}\n{\"id\":8,\"text\":\"c\",\"model\":\"chatGPT\",\"source\":\"arxiv\"}\n",
            LabelScheme::Binary,
        )
        .unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.documents()[0], Document::new("7", "a b").with_label(1));
        let d = &c.documents()[1];
        assert_eq!(d.id, "8");
        assert_eq!(d.generator.as_deref(), Some("chatGPT"));
        assert_eq!(d.source.as_deref(), Some("arxiv"));
        assert_eq!(d.label, None);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let c = corpus_from("", LabelScheme::Binary).unwrap();
        assert!(c.is_empty());
    }

    #[test]
    fn label_out_of_range() {
        let err = corpus_from("{\"id\":\"7\",\"text\":\"a b\",\"label\":9}", LabelScheme::Multiway6)
            .unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
        let err = corpus_from("{\"id\":\"7\",\"text\":\"a b\",\"label\":3}", LabelScheme::Boundary)
            .unwrap_err();
        assert!(err.to_string().contains("label out of range"), "{err}");
        corpus_from("{\"id\":\"7\",\"text\":\"a b\",\"label\":2}", LabelScheme::Boundary).unwrap();
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = corpus_from(
            "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":\"2\",\"text\":\"b\"}\n{oops\n",
            LabelScheme::Binary,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_id_rejected() {
        let err = corpus_from(
            "{\"id\":\"1\",\"text\":\"a\"}\n{\"id\":1,\"text\":\"b\"}\n",
            LabelScheme::Binary,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate id"), "{err}");
    }

    #[test]
    fn clean_examples() {
        assert_eq!(clean_text("fine text, here!", CleanMode::Full), "fine text, here!");
        assert_eq!(clean_text("see https://a.b/c now", CleanMode::LinksOnly), "see now");
        assert_eq!(clean_text("a\n\n\n\nb", CleanMode::Full), "a\n\nb");
        assert_eq!(clean_text("x  #y\t\tz @ www.q.org.", CleanMode::Full), "x y z ");
        assert_eq!(clean_text("http://a.b rest", CleanMode::LinksOnly), "rest");
        assert_eq!(clean_text("a\tb  c", CleanMode::LinksOnly), "a\tb  c");
        assert_eq!(clean_text("w#ww.x y", CleanMode::Full), "y");
        assert_eq!(clean_text("anything", CleanMode::None), "anything");
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize_words("a b  c"), vec!["a", "b", "c"]);
        assert!(tokenize_words("").is_empty());
        assert_eq!(tokenize_words("x\ny z"), vec!["x", "y", "z"]);
    }

    #[test]
    fn paragraph_examples() {
        assert_eq!(paragraph_starts("p q\n\nr s"), vec![0, 2]);
        assert_eq!(paragraph_starts("single paragraph here"), vec![0]);
        assert_eq!(paragraph_starts("a\nb\nc"), vec![0, 1, 2]);
        assert_eq!(paragraph_starts(""), vec![0]);
        assert_eq!(paragraph_starts("\n\n  \n"), vec![0]);
        assert_eq!(paragraph_starts("\n\na b\n \nc"), vec![0, 2]);
    }

    #[test]
    fn prediction_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");

        let mut set = PredictionSet::new("x", PredictionKind::Class);
        set.insert("7", Prediction::Class(1)).unwrap();
        write_predictions(&set, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"id\":\"7\",\"label\":1}\n");
        let back = load_predictions(&path, "x", PredictionKind::Class).unwrap();
        assert_eq!(back, set);

        let empty = PredictionSet::new("e", PredictionKind::Scalar);
        write_predictions(&empty, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");

        let mut scalar = PredictionSet::new("s", PredictionKind::Scalar);
        scalar.insert("x", Prediction::Scalar(42.0)).unwrap();
        write_predictions(&scalar, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"id\":\"x\",\"label\":42}\n");
    }

    #[test]
    fn probs_reader_skips_meta_header() {
        let text = "{\"_meta\":{\"model\":\"m\"}}\n{\"id\":\"a\",\"probs\":[0.25,0.75]}\n";
        let set = read_predictions(text.as_bytes(), "p", PredictionKind::Probs).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.get("a"), Some(&Prediction::Probs(vec![0.25, 0.75])));
    }

    fn messy_text() -> impl Strategy<Value = String> {
        let pieces = prop::sample::select(vec![
            "a", "Z", "é", "7", " ", "  ", "\t", "\n", "\n\n\n", ".", ",", "!", "?", "#", "@",
            "/", ":", "w", "ww", "www.", "http://", "https://x.y", "h", "ttp", "-", "\u{00a0}",
            "\r",
        ]);
        prop::collection::vec(pieces, 0..40).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn clean_is_idempotent(text in messy_text()) {
            for mode in [CleanMode::Full, CleanMode::LinksOnly, CleanMode::None] {
                let once = clean_text(&text, mode);
                prop_assert_eq!(clean_text(&once, mode), once.clone(), "mode {:?}", mode);
            }
        }

        #[test]
        fn full_clean_keeps_sentence_punctuation(text in "[a-z.,!? ]{0,40}") {
            let count = |s: &str| s.chars().filter(|c| matches!(c, '.' | ',' | '!' | '?')).count();
            prop_assert_eq!(count(&clean_text(&text, CleanMode::Full)), count(&text));
        }

        #[test]
        fn tokenize_distributes_over_space_join(a in "[a-z \n\t]{0,20}", b in "[a-z \n\t]{0,20}") {
            let joined = format!("{a} {b}");
            let mut expected = tokenize_words(&a);
            expected.extend(tokenize_words(&b));
            prop_assert_eq!(tokenize_words(&joined), expected);
        }

        #[test]
        fn paragraph_starts_are_increasing_and_in_range(text in "[a-z \n]{0,60}") {
            let starts = paragraph_starts(&text);
            let n = word_count(&text);
            prop_assert_eq!(starts[0], 0);
            prop_assert!(starts.windows(2).all(|w| w[0] < w[1]));
            if n > 0 {
                prop_assert!(starts.iter().all(|&s| s < n));
            }
        }
    }
}
