//! Seeded synthetic corpora for benchmarks, demos and tests.
//!
//! "Human" tokens come from a Zipf-like distribution over `w0..w{V-1}`;
//! "machine" tokens use the same shape shifted by `shift` ranks, so the two
//! vocabularies partially overlap.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Document, LabelScheme};

#[derive(Debug, Clone, PartialEq)]
pub struct MixedTextConfig {
    pub n_docs: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub vocab_size: usize,
    pub shift: usize,
    pub min_paragraph: usize,
    pub max_paragraph: usize,
    /// Boundaries are drawn uniformly from this fraction range of the length.
    pub boundary_range: (f64, f64),
    pub id_prefix: String,
    pub seed: u64,
}

impl Default for MixedTextConfig {
    fn default() -> Self {
        MixedTextConfig {
            n_docs: 200,
            min_words: 80,
            max_words: 240,
            vocab_size: 60,
            shift: 30,
            min_paragraph: 8,
            max_paragraph: 30,
            boundary_range: (0.1, 0.9),
            id_prefix: "doc".into(),
            seed: 0,
        }
    }
}

struct TokenSampler {
    dist: WeightedIndex<f64>,
    offset: usize,
}

impl TokenSampler {
    fn new(vocab_size: usize, offset: usize) -> Self {
        let weights: Vec<f64> = (0..vocab_size).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        TokenSampler {
            dist: WeightedIndex::new(weights).expect("non-empty vocabulary"),
            offset,
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> String {
        format!("w{}", self.dist.sample(rng) + self.offset)
    }
}

/// Splits `words` into paragraphs of random length, always breaking at
/// `forced` (when it is inside the text).
fn layout(words: &[String], forced: usize, cfg: &MixedTextConfig, rng: &mut impl Rng) -> String {
    let mut text = String::new();
    let mut next_break = rng.gen_range(cfg.min_paragraph..=cfg.max_paragraph);
    let mut since = 0;
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            if i == forced || since >= next_break {
                text.push_str("\n\n");
                since = 0;
                next_break = rng.gen_range(cfg.min_paragraph..=cfg.max_paragraph);
            } else {
                text.push(' ');
            }
        }
        text.push_str(w);
        since += 1;
    }
    text
}

/// Human prefix followed by a machine suffix; labels are the boundary word
/// index, which always starts a paragraph.
pub fn mixed_corpus(cfg: &MixedTextConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let human = TokenSampler::new(cfg.vocab_size, 0);
    let machine = TokenSampler::new(cfg.vocab_size, cfg.shift);
    let docs = (0..cfg.n_docs)
        .map(|i| {
            let len = rng.gen_range(cfg.min_words..=cfg.max_words);
            let lo = (cfg.boundary_range.0 * len as f64).ceil() as usize;
            let hi = ((cfg.boundary_range.1 * len as f64).floor() as usize).max(lo);
            let boundary = rng.gen_range(lo..=hi);
            let words: Vec<String> = (0..len)
                .map(|k| {
                    if k < boundary {
                        human.sample(&mut rng)
                    } else {
                        machine.sample(&mut rng)
                    }
                })
                .collect();
            let text = layout(&words, boundary, cfg, &mut rng);
            Document::new(format!("{}{i}", cfg.id_prefix), text).with_label(boundary as i64)
        })
        .collect();
    Corpus::new(docs, LabelScheme::Boundary).expect("generated ids are unique")
}

/// Whole documents labeled 0 (human distribution) or 1 (machine).
pub fn binary_corpus(cfg: &MixedTextConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samplers = [
        TokenSampler::new(cfg.vocab_size, 0),
        TokenSampler::new(cfg.vocab_size, cfg.shift),
    ];
    let docs = (0..cfg.n_docs)
        .map(|i| {
            let label = rng.gen_range(0..2usize);
            let len = rng.gen_range(cfg.min_words..=cfg.max_words);
            let words: Vec<String> = (0..len).map(|_| samplers[label].sample(&mut rng)).collect();
            let text = layout(&words, usize::MAX, cfg, &mut rng);
            Document::new(format!("{}{i}", cfg.id_prefix), text).with_label(label as i64)
        })
        .collect();
    Corpus::new(docs, LabelScheme::Binary).expect("generated ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::paragraph_starts;

    #[test]
    fn boundaries_are_in_range_and_start_paragraphs() {
        let cfg = MixedTextConfig {
            n_docs: 50,
            ..MixedTextConfig::default()
        };
        let corpus = mixed_corpus(&cfg);
        for doc in &corpus {
            let n = doc.word_count();
            let b = doc.label.unwrap() as usize;
            assert!(b as f64 >= 0.1 * n as f64 && b as f64 <= 0.9 * n as f64);
            assert!(paragraph_starts(&doc.text).contains(&b));
        }
        assert_eq!(corpus, mixed_corpus(&cfg));
    }

    #[test]
    fn binary_corpus_has_both_labels() {
        let corpus = binary_corpus(&MixedTextConfig {
            n_docs: 40,
            ..MixedTextConfig::default()
        });
        let labels = corpus.labels().unwrap();
        assert!(labels.contains(&0) && labels.contains(&1));
    }
}
