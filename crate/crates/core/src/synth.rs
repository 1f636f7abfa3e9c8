//! Synthetic class-per-directory corpora.
//!
//! Documents are bags of Zipf-distributed generic words with a sprinkling of
//! topic words. Each class owns one or more topics; a document picks one of
//! its class's topics. Topic keys are shared across corpora, so a source
//! corpus whose "sport" class covers the sub-sport topics of a target corpus
//! overlaps with it the way a broad news corpus overlaps a sports one.

use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{Document, LabeledCorpus};
use crate::linalg::rng_for;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub name: String,
    pub docs: usize,
    /// Topic keys; every document draws its topic words from one of them.
    pub topics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSpec {
    pub name: String,
    pub classes: Vec<ClassSpec>,
    pub generic_words: usize,
    pub topic_words: usize,
    /// Probability that a token is a word of the document's own topic.
    pub topic_rate: f64,
    /// Probability that a token is a word of some other class's topic.
    pub confuser_rate: f64,
    /// Inclusive token-count range.
    pub length: (usize, usize),
}

fn class(name: &str, docs: usize, topics: &[&str]) -> ClassSpec {
    ClassSpec {
        name: name.into(),
        docs,
        topics: topics.iter().map(|t| t.to_string()).collect(),
    }
}

const SPORTS: [&str; 5] = ["ath", "crk", "fbl", "rgb", "ten"];

impl SurrogateSpec {
    /// Five sports, 737 documents with a football-heavy class balance.
    pub fn sport_like() -> Self {
        SurrogateSpec {
            name: "sport-like".into(),
            classes: vec![
                class("athletics", 101, &["ath"]),
                class("cricket", 124, &["crk"]),
                class("football", 265, &["fbl"]),
                class("rugby", 147, &["rgb"]),
                class("tennis", 100, &["ten"]),
            ],
            generic_words: 2000,
            topic_words: 40,
            topic_rate: 0.048,
            confuser_rate: 0.012,
            length: (60, 180),
        }
    }

    /// Five news sections, 2225 documents; the sport section spans all the
    /// sub-sport topics of [`SurrogateSpec::sport_like`].
    pub fn news_like() -> Self {
        SurrogateSpec {
            name: "news-like".into(),
            classes: vec![
                class("business", 510, &["bus"]),
                class("entertainment", 386, &["ent"]),
                class("politics", 417, &["pol"]),
                class("sport", 511, &SPORTS),
                class("tech", 401, &["tec"]),
            ],
            generic_words: 2000,
            topic_words: 40,
            topic_rate: 0.05,
            confuser_rate: 0.01,
            length: (80, 220),
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for c in &mut self.classes {
            c.docs = ((c.docs as f64 * factor).round() as usize).max(2);
        }
        self
    }

    pub fn generate(&self, seed: u64) -> LabeledCorpus {
        let mut rng = rng_for(seed, 8);
        let generic = Zipf::new(self.generic_words as f64, 1.0).expect("at least one generic word");
        let topical = Zipf::new(self.topic_words as f64, 0.7).expect("at least one topic word");
        let all_topics: Vec<&str> = self.classes.iter().flat_map(|c| c.topics.iter().map(String::as_str)).collect();
        let mut documents = Vec::new();
        for (label, spec) in self.classes.iter().enumerate() {
            for i in 0..spec.docs {
                let topic = &spec.topics[rng.random_range(0..spec.topics.len())];
                let len = rng.random_range(self.length.0..=self.length.1);
                let words: Vec<String> = (0..len)
                    .map(|_| {
                        let u: f64 = rng.random();
                        let w = topical.sample(&mut rng) as usize;
                        if u < self.topic_rate {
                            format!("{topic}{w}")
                        } else if u < self.topic_rate + self.confuser_rate {
                            let other = loop {
                                let t = all_topics[rng.random_range(0..all_topics.len())];
                                if t != topic {
                                    break t;
                                }
                            };
                            format!("{other}{w}")
                        } else {
                            format!("w{}", generic.sample(&mut rng) as usize)
                        }
                    })
                    .collect();
                documents.push(Document {
                    id: format!("{}/{:04}.txt", spec.name, i),
                    text: words.join(" "),
                    label,
                });
            }
        }
        let classes = self.classes.iter().map(|c| c.name.clone()).collect();
        LabeledCorpus::new(self.name.clone(), classes, documents).expect("spec has classes and documents")
    }
}

/// Two classes with disjoint vocabularies, `per_class` documents each.
pub fn separable_toy(per_class: usize, seed: u64) -> LabeledCorpus {
    const VOCAB: [[&str; 6]; 2] = [
        ["apple", "banana", "cherry", "grape", "lemon", "mango"],
        ["piston", "gear", "valve", "rotor", "shaft", "bolt"],
    ];
    let mut rng = rng_for(seed, 9);
    let mut documents = Vec::new();
    for (label, words) in VOCAB.iter().enumerate() {
        for i in 0..per_class {
            let len = rng.random_range(3..=8);
            let text: Vec<&str> = (0..len).map(|_| words[rng.random_range(0..words.len())]).collect();
            documents.push(Document {
                id: format!("{}/{i:03}", ["fruit", "machine"][label]),
                text: text.join(" "),
                label,
            });
        }
    }
    LabeledCorpus::new("toy", vec!["fruit".into(), "machine".into()], documents).expect("toy corpus is valid")
}
