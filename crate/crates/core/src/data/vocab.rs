use std::collections::HashMap;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Frozen token↔index map. Index 0 is PAD and index 1 is UNK.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_freq` times, most frequent first with
    /// lexicographic tie-break. `max_size` caps the total size including the
    /// two reserved entries.
    pub fn build<'a, I, T>(texts: I, min_freq: usize, max_size: Option<usize>) -> Self
    where
        I: IntoIterator<Item = &'a T>,
        T: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for text in texts {
            for tok in text.as_ref() {
                *counts.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_freq.max(1) && t != PAD_TOKEN && t != UNK_TOKEN)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        if let Some(cap) = max_size {
            ranked.truncate(cap.saturating_sub(2));
        }
        Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string())).expect("ranked tokens are unique")
    }

    /// Vocabulary from an explicit regular-token list; PAD and UNK are
    /// prepended. Fails on a duplicate or reserved token.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self, String> {
        let mut v = Vocabulary {
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
            index: HashMap::new(),
        };
        v.index.insert(PAD_TOKEN.to_string(), PAD);
        v.index.insert(UNK_TOKEN.to_string(), UNK);
        for tok in tokens {
            if v.index.contains_key(&tok) {
                return Err(tok);
            }
            v.index.insert(tok.clone(), v.tokens.len());
            v.tokens.push(tok);
        }
        Ok(v)
    }

    /// Rebuilds from a full listing that starts with PAD and UNK, as stored
    /// in checkpoints.
    pub fn from_listing(listing: Vec<String>) -> Result<Self, String> {
        match listing.as_slice() {
            [pad, unk, ..] if pad == PAD_TOKEN && unk == UNK_TOKEN => Self::from_tokens(listing.into_iter().skip(2)),
            _ => Err("listing must start with <pad>, <unk>".to_string()),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Index of `token`; unknown tokens (and a literal PAD token in text)
    /// map to UNK.
    pub fn lookup(&self, token: &str) -> usize {
        match self.index.get(token) {
            Some(&PAD) | None => UNK,
            Some(&ix) => ix,
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<&str> {
        indices.iter().map(|&i| self.token(i).unwrap_or(UNK_TOKEN)).collect()
    }
}
