//! Greedy longest-match subword segmentation over a vocabulary built from
//! training words.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const CONTINUATION: &str = "##";

#[derive(Debug, Clone, PartialEq)]
pub struct VocabConfig {
    pub max_size: usize,
    /// Whole words at or above this count become single pieces.
    pub min_word_freq: usize,
    /// Character n-grams (n in `2..=max_ngram`) at or above this count become pieces.
    pub min_ngram_freq: usize,
    pub max_ngram: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self {
            max_size: 4000,
            min_word_freq: 3,
            min_ngram_freq: 5,
            max_ngram: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from word occurrences. Every character seen, in both
    /// initial and continuation form, is always included; whole words and
    /// n-grams then fill the remaining budget by descending frequency.
    pub fn build<'a>(words: impl IntoIterator<Item = &'a str>, config: &VocabConfig) -> Self {
        let mut word_freq: HashMap<&str, usize> = HashMap::new();
        for w in words {
            *word_freq.entry(w).or_default() += 1;
        }
        let mut chars: Vec<String> = Vec::new();
        let mut candidates: HashMap<String, usize> = HashMap::new();
        let mut seen_chars = std::collections::BTreeSet::new();
        for (word, freq) in &word_freq {
            let cs: Vec<char> = word.chars().collect();
            for c in &cs {
                seen_chars.insert(*c);
            }
            if *freq >= config.min_word_freq && cs.len() > 1 {
                *candidates.entry(word.to_string()).or_default() += freq;
            }
            for n in 2..=config.max_ngram {
                if cs.len() < n {
                    break;
                }
                for start in 0..=cs.len() - n {
                    let gram: String = cs[start..start + n].iter().collect();
                    let piece = if start == 0 {
                        gram
                    } else {
                        format!("{CONTINUATION}{gram}")
                    };
                    *candidates.entry(piece).or_default() += freq;
                }
            }
        }
        for c in seen_chars {
            chars.push(c.to_string());
            chars.push(format!("{CONTINUATION}{c}"));
        }
        let mut ranked: Vec<(String, usize)> = candidates
            .into_iter()
            .filter(|(piece, f)| {
                let is_word = word_freq.contains_key(piece.as_str());
                *f >= config.min_ngram_freq || (is_word && *f >= config.min_word_freq)
            })
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut pieces = vec![UNK.to_string()];
        pieces.extend(chars);
        let mut known: std::collections::HashSet<String> = pieces.iter().cloned().collect();
        for (piece, _) in ranked {
            if pieces.len() >= config.max_size {
                break;
            }
            if known.insert(piece.clone()) {
                pieces.push(piece);
            }
        }
        Self::from_pieces(pieces).expect("pieces are unique")
    }

    pub fn from_pieces(pieces: Vec<String>) -> Result<Self> {
        if pieces.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Data(format!("vocabulary must start with {UNK}")));
        }
        let mut index = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate() {
            if index.insert(p.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate vocabulary piece {p:?}")));
            }
        }
        Ok(Self { pieces, index })
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> &str {
        &self.pieces[id as usize]
    }

    pub fn unk_id(&self) -> u32 {
        0
    }

    /// Greedy longest-match segmentation of one word. Characters that start no
    /// known piece become `<unk>`.
    pub fn tokenize_word(&self, word: &str) -> Vec<u32> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let body: String = chars[start..end].iter().collect();
                let piece = if start == 0 {
                    body
                } else {
                    format!("{CONTINUATION}{body}")
                };
                if let Some(id) = self.id(&piece) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.push(self.unk_id());
                    start += 1;
                }
            }
        }
        out
    }

    pub fn tokenize_sentence(&self, words: &[String]) -> SubwordSentence {
        let mut ids = Vec::new();
        let mut word_boundaries = Vec::with_capacity(words.len());
        for w in words {
            let start = ids.len();
            let pieces = self.tokenize_word(w);
            if pieces.is_empty() {
                ids.push(self.unk_id());
            } else {
                ids.extend(pieces);
            }
            word_boundaries.push(start..ids.len());
        }
        SubwordSentence {
            ids,
            word_boundaries,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.pieces {
            s.push_str(p);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_pieces(text.lines().map(str::to_string).collect())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&crate::io::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordSentence {
    pub ids: Vec<u32>,
    /// Subword range of each word; together they partition `0..ids.len()`.
    pub word_boundaries: Vec<Range<usize>>,
}

impl SubwordSentence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Pieces as strings, continuation markers included.
    pub fn pieces<'v>(&self, vocab: &'v Vocab) -> Vec<&'v str> {
        self.ids.iter().map(|id| vocab.piece(*id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab_of(pieces: &[&str], chars: &str) -> Vocab {
        let mut all = vec![UNK.to_string()];
        for c in chars.chars() {
            all.push(c.to_string());
            all.push(format!("##{c}"));
        }
        all.extend(pieces.iter().map(|s| s.to_string()));
        Vocab::from_pieces(all).unwrap()
    }

    fn strs(v: &Vocab, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|i| v.piece(*i).to_string()).collect()
    }

    #[test]
    fn greedy_longest_match() {
        let v = vocab_of(&["Zins", "##aufwend", "##ungen", "##auf"], "Zinsaufwdeg");
        assert_eq!(
            strs(&v, &v.tokenize_word("Zinsaufwendungen")),
            ["Zins", "##aufwend", "##ungen"]
        );
    }

    #[test]
    fn whole_word_and_unknown() {
        let v = vocab_of(&["Umsatz"], "Umsatz");
        assert_eq!(strs(&v, &v.tokenize_word("Umsatz")), ["Umsatz"]);
        assert_eq!(strs(&v, &v.tokenize_word("€")), [UNK]);
    }

    #[test]
    fn built_vocab_has_every_character() {
        let words = ["Umsatz", "Umsatzerlöse", "Mio", "€", "1,2"];
        let v = Vocab::build(words.iter().copied(), &VocabConfig::default());
        for c in "Umsatzerlöse€1,2Mio".chars() {
            assert!(v.id(&c.to_string()).is_some(), "{c}");
            assert!(v.id(&format!("##{c}")).is_some(), "##{c}");
        }
        let round = Vocab::from_text(&v.to_text()).unwrap();
        assert_eq!(round, v);
    }

    #[test]
    fn size_cap_is_respected() {
        let words: Vec<String> = (0..500).map(|i| format!("wort{i}x")).collect();
        let cfg = VocabConfig {
            max_size: 60,
            min_word_freq: 1,
            min_ngram_freq: 1,
            max_ngram: 4,
        };
        let v = Vocab::build(words.iter().map(String::as_str), &cfg);
        assert!(v.len() <= 60);
    }

    proptest! {
        #[test]
        fn boundaries_partition_and_reconstruct(words in proptest::collection::vec("[a-zäöü0-9,.]{1,12}", 1..12)) {
            let v = Vocab::build(words.iter().map(String::as_str), &VocabConfig::default());
            let s = v.tokenize_sentence(&words);
            let mut next = 0;
            for (w, r) in words.iter().zip(&s.word_boundaries) {
                prop_assert_eq!(r.start, next);
                prop_assert!(r.end > r.start);
                next = r.end;
                let rebuilt: String = s.ids[r.clone()]
                    .iter()
                    .map(|id| v.piece(*id).trim_start_matches(CONTINUATION))
                    .collect();
                prop_assert_eq!(&rebuilt, w);
            }
            prop_assert_eq!(next, s.len());
        }
    }
}
