use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::{tokenize, DataError, Example, Vocabulary};

/// One labelled, tokenized text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextRecord {
    pub tokens: Vec<String>,
    /// 0-based class label.
    pub label: usize,
}

impl AsRef<[String]> for TextRecord {
    fn as_ref(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Clone, Debug, Default)]
pub struct CorpusFormat {
    /// Declared class count; labels above it are errors. Inferred from the
    /// largest label when unset.
    pub n_classes: Option<usize>,
    /// Skip the first row.
    pub has_header: bool,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub records: Vec<TextRecord>,
    pub n_classes: usize,
    /// Rows whose text was empty after tokenization, by 1-based line.
    pub rejected_lines: Vec<u64>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_examples(&self, vocab: &Vocabulary) -> Vec<Example> {
        self.records
            .iter()
            .map(|r| Example::new(vocab.encode(&r.tokens), r.label))
            .collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for r in &self.records {
            counts[r.label] += 1;
        }
        counts
    }
}

/// Reads a class-first CSV corpus: `"class","field1"[,"field2",...]` with a
/// 1-based class index. Text fields are joined with a space and tokenized.
pub fn load_corpus(path: &Path, format: &CorpusFormat) -> Result<Corpus, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(file, format)
}

pub fn parse_corpus<R: Read>(reader: R, format: &CorpusFormat) -> Result<Corpus, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(format.has_header)
        .flexible(true)
        .from_reader(reader);
    let mut records = Vec::new();
    let mut rejected_lines = Vec::new();
    let mut max_label = 0;

    for row in rdr.records() {
        let row = row.map_err(|e| DataError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() < 2 {
            return Err(DataError::MalformedRow {
                line,
                reason: format!(
                    "expected a class and at least one text field, got {} field(s)",
                    row.len()
                ),
            });
        }
        let class: usize = row[0].trim().parse().map_err(|_| DataError::MalformedRow {
            line,
            reason: format!("class {:?} is not a positive integer", &row[0]),
        })?;
        if class == 0 || format.n_classes.is_some_and(|n| class > n) {
            return Err(DataError::LabelOutOfRange {
                line,
                label: class,
                n_classes: format.n_classes,
            });
        }
        let text = row.iter().skip(1).collect::<Vec<_>>().join(" ");
        let tokens = tokenize(&text);
        if tokens.is_empty() {
            rejected_lines.push(line);
            continue;
        }
        max_label = max_label.max(class);
        records.push(TextRecord {
            tokens,
            label: class - 1,
        });
    }

    Ok(Corpus {
        records,
        n_classes: format.n_classes.unwrap_or(max_label),
        rejected_lines,
    })
}
