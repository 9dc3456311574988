use std::collections::BTreeMap;

use super::DataError;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercases and splits on whitespace and ASCII punctuation, dropping the
/// separators.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
    min_count: usize,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>, min_count: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            min_count,
        }
    }

    /// Vocabulary size including the reserved entries.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.get(token).is_some_and(|&i| i >= RESERVED.len())
    }

    pub fn id(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&i) if i >= RESERVED.len() => i,
            _ => UNK,
        }
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(RESERVED[UNK], String::as_str)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// In-vocabulary ids only; out-of-vocabulary tokens are dropped.
    pub fn encode_known(&self, tokens: &[String]) -> Vec<usize> {
        tokens
            .iter()
            .map(|t| self.id(t))
            .filter(|&i| i != UNK)
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line in index order, reserved entries first.
    pub fn to_text(&self) -> String {
        let mut s = format!("# min_count {}\n", self.min_count);
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let min_count = header
            .strip_prefix("# min_count ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| DataError::Syntax {
                line: 1,
                msg: "missing min_count header".into(),
            })?;
        let tokens: Vec<String> = lines.map(str::to_string).collect();
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(DataError::Invalid("vocabulary lacks reserved entries".into()));
        }
        let vocab = Self::from_tokens(tokens, min_count);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(DataError::Invalid("vocabulary has repeated tokens".into()));
        }
        Ok(vocab)
    }
}

/// Keeps tokens seen at least `min_count` times, ordered by descending
/// frequency then lexicographically, after the reserved entries.
pub fn build_vocabulary(corpus: &[Vec<String>], min_count: usize) -> Result<Vocabulary, DataError> {
    if min_count == 0 {
        return Err(DataError::Invalid("min_count must be at least 1".into()));
    }
    if corpus.iter().all(Vec::is_empty) {
        return Err(DataError::EmptyCorpus);
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for seq in corpus {
        for t in seq {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(t, c)| *c >= min_count && !RESERVED.contains(t))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens = RESERVED
        .iter()
        .map(|s| s.to_string())
        .chain(kept.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Ok(Vocabulary::from_tokens(tokens, min_count))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| tokenize(l)).collect()
    }

    #[test]
    fn tokenizer_lowercases_and_drops_punctuation() {
        assert_eq!(
            tokenize("ATP-dependent (microtubule) motor, activity."),
            vec!["atp", "dependent", "microtubule", "motor", "activity"]
        );
        assert!(tokenize(" ,;. ").is_empty());
    }

    #[test]
    fn min_count_filters_rare_tokens() {
        let corpus = seqs(&["atp rare", "atp binding", "atp rare"]);
        let v = build_vocabulary(&corpus, 3).unwrap();
        assert!(v.contains("atp"));
        assert!(!v.contains("rare"));
        assert_eq!(v.id("rare"), UNK);
        assert_eq!(v.decode(&v.encode(&["rare".into()])), vec!["<unk>"]);
    }

    #[test]
    fn min_count_one_keeps_everything() {
        let corpus = seqs(&["a b c", "c d"]);
        let v = build_vocabulary(&corpus, 1).unwrap();
        assert_eq!(v.len(), 4 + 4);
        for t in ["a", "b", "c", "d"] {
            assert!(v.contains(t));
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(build_vocabulary(&[], 3), Err(DataError::EmptyCorpus)));
        assert!(build_vocabulary(&seqs(&["a"]), 0).is_err());
    }

    #[test]
    fn reserved_ids_fixed() {
        let v = build_vocabulary(&seqs(&["x"]), 1).unwrap();
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(BOS), "<bos>");
        assert_eq!(v.token(EOS), "<eos>");
        assert_eq!(v.token(UNK), "<unk>");
        assert_eq!(v.id("<eos>"), UNK);
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocabulary(&seqs(&["b a a", "c b a"]), 2).unwrap();
        let back = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(v, back);
        assert_eq!(back.id("a"), v.id("a"));
    }
}
