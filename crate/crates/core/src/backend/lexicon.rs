use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{normalize_token, stem};
use crate::types::{parse_label, SentimentLabel};

const DEFAULT_LEXICON: &str = include_str!("../../data/stub_lexicon.txt");

/// Word lists driving the stub backend's scoring and classification rules.
///
/// File format (UTF-8): sections `[positive]`, `[negative]` and `[labels]`;
/// one term per line in the first two, `keyword=Label` lines in the last.
/// Blank lines and `#` comments are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubLexicon {
    positive: BTreeSet<String>,
    negative: BTreeSet<String>,
    labels: BTreeMap<String, SentimentLabel>,
}

impl StubLexicon {
    pub fn new(
        positive: impl IntoIterator<Item = impl AsRef<str>>,
        negative: impl IntoIterator<Item = impl AsRef<str>>,
        labels: impl IntoIterator<Item = (impl AsRef<str>, SentimentLabel)>,
    ) -> Result<Self> {
        // Each term is stored together with its stem so that preprocessed
        // (stemmed) text still matches.
        fn expand(terms: impl IntoIterator<Item = impl AsRef<str>>) -> BTreeSet<String> {
            terms
                .into_iter()
                .map(|s| normalize_token(s.as_ref()))
                .filter(|s| !s.is_empty())
                .flat_map(|t| [stem(&t), t])
                .collect()
        }
        let positive = expand(positive);
        let negative = expand(negative);
        if let Some(both) = positive.intersection(&negative).next() {
            return Err(Error::Config(format!(
                "lexicon term {both:?} is both positive and negative"
            )));
        }
        let mut keyword_map = BTreeMap::new();
        for (k, l) in labels {
            let k = normalize_token(k.as_ref());
            if k.is_empty() {
                continue;
            }
            if let Some(prev) = keyword_map.insert(k.clone(), l) {
                if prev != l {
                    return Err(Error::Config(format!(
                        "keyword {k:?} maps to both {prev} and {l}"
                    )));
                }
            }
        }
        Ok(StubLexicon {
            positive,
            negative,
            labels: keyword_map,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(Clone, Copy)]
        enum Section {
            None,
            Positive,
            Negative,
            Labels,
        }
        let mut section = Section::None;
        let (mut pos, mut neg, mut labels) = (Vec::new(), Vec::new(), Vec::new());
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            match line {
                "[positive]" => section = Section::Positive,
                "[negative]" => section = Section::Negative,
                "[labels]" => section = Section::Labels,
                _ => match section {
                    Section::Positive => pos.push(line.to_string()),
                    Section::Negative => neg.push(line.to_string()),
                    Section::Labels => {
                        let (k, l) = line.split_once('=').ok_or_else(|| {
                            Error::Config(format!("lexicon line {}: expected keyword=Label", n + 1))
                        })?;
                        labels.push((k.trim().to_string(), parse_label(l)?));
                    }
                    Section::None => {
                        return Err(Error::Config(format!(
                            "lexicon line {}: term outside a section",
                            n + 1
                        )))
                    }
                },
            }
        }
        StubLexicon::new(pos, neg, labels)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn contains(set: &BTreeSet<String>, token: &str) -> bool {
        set.contains(token) || set.contains(&stem(token))
    }

    /// Counts positive and negative term occurrences in `text`.
    pub fn polarity_counts(&self, text: &str) -> (usize, usize) {
        let mut pos = 0;
        let mut neg = 0;
        for tok in text.split_whitespace().map(normalize_token) {
            if tok.is_empty() {
                continue;
            }
            if Self::contains(&self.positive, &tok) {
                pos += 1;
            } else if Self::contains(&self.negative, &tok) {
                neg += 1;
            }
        }
        (pos, neg)
    }

    /// The label of the first keyword occurring in `text`, if any.
    pub fn keyword_label(&self, text: &str) -> Option<(String, SentimentLabel)> {
        text.split_whitespace().map(normalize_token).find_map(|tok| {
            self.labels
                .get(&tok)
                .or_else(|| self.labels.get(&stem(&tok)))
                .map(|&l| (tok.clone(), l))
        })
    }

    pub fn keywords(&self) -> impl Iterator<Item = (&str, SentimentLabel)> {
        self.labels.iter().map(|(k, &l)| (k.as_str(), l))
    }

    /// Keywords for one label, in sorted order.
    pub fn keywords_for(&self, label: SentimentLabel) -> Vec<&str> {
        self.keywords()
            .filter(|&(_, l)| l == label)
            .map(|(k, _)| k)
            .collect()
    }

    pub fn positive_terms(&self) -> impl Iterator<Item = &str> {
        self.positive.iter().map(String::as_str)
    }

    pub fn negative_terms(&self) -> impl Iterator<Item = &str> {
        self.negative.iter().map(String::as_str)
    }
}

impl Default for StubLexicon {
    fn default() -> Self {
        StubLexicon::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lexicon_has_keywords_for_every_label() {
        let lex = StubLexicon::default();
        for l in SentimentLabel::ALL {
            assert!(!lex.keywords_for(l).is_empty(), "no keyword for {l}");
        }
        assert!(lex.positive_terms().count() > 5);
        assert!(lex.negative_terms().count() > 5);
    }

    #[test]
    fn parse_sections() {
        let lex = StubLexicon::parse(
            "# demo\n[positive]\ngood\n[negative]\nawful\n[labels]\nscared = Fear\n",
        )
        .unwrap();
        assert_eq!(lex.polarity_counts("Good, awful AWFUL!"), (1, 2));
        assert_eq!(
            lex.keyword_label("i was so SCARED."),
            Some(("scared".to_string(), SentimentLabel::Fear))
        );
        assert_eq!(lex.keyword_label("calm"), None);
    }

    #[test]
    fn overlapping_terms_rejected() {
        assert!(StubLexicon::parse("[positive]\nsick\n[negative]\nsick\n").is_err());
        assert!(StubLexicon::parse("orphan\n").is_err());
        assert!(StubLexicon::parse("[labels]\nyay=Joy\n").is_err());
    }
}
