//! Corpus statistics and tag-scheme diagnostics.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use al_seqtag::corpus::{parse_conll_str, scheme_violations, ColumnMap, Scheme};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub sentences: usize,
    pub tokens: usize,
    /// Entity chunk counts, most frequent first.
    pub entity_counts: Vec<(String, usize)>,
    /// `(sentence index, token positions)` of scheme violations, both 0-based.
    pub violations: Vec<(usize, Vec<usize>)>,
}

/// Picks a column layout from the first non-blank, non-document line.
pub fn detect_columns(text: &str) -> Option<ColumnMap> {
    let line = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with("-DOCSTART-"))?;
    match line.split_whitespace().count() {
        2 => Some(ColumnMap::WORD_TAG),
        3 => Some(ColumnMap::WORD_POS_TAG),
        4 => Some(ColumnMap::CONLL2003),
        _ => None,
    }
}

pub fn validate_file(path: &Path, columns: Option<ColumnMap>, scheme: Scheme) -> Result<Validation, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let columns = match columns {
        Some(c) => c,
        None => detect_columns(&text)
            .ok_or_else(|| CliError::Data(format!("{}: cannot infer the column layout", path.display())))?,
    };
    let corpus = parse_conll_str(&text, &columns, scheme).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let violations = corpus
        .sentences
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let v = scheme_violations(&s.tags(), scheme);
            (!v.is_empty()).then_some((i, v))
        })
        .collect();
    Ok(Validation {
        sentences: corpus.len(),
        tokens: corpus.token_count,
        entity_counts: corpus.entity_counts(),
        violations,
    })
}

impl Validation {
    /// Counts table followed by one warning line per offending sentence.
    pub fn render(&self, name: &str, scheme: Scheme) -> String {
        let mut rows = vec![("# of tokens".to_string(), self.tokens), ("# of sentences".to_string(), self.sentences)];
        rows.extend(self.entity_counts.iter().cloned());
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0).max(12);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {name}", "");
        for (i, (k, v)) in rows.iter().enumerate() {
            if i == 2 {
                let _ = writeln!(out, "Entity types:");
            }
            let _ = writeln!(out, "{k:<width$}  {v}");
        }
        for (sentence, positions) in &self.violations {
            let list: Vec<String> = positions.iter().map(usize::to_string).collect();
            let _ = writeln!(
                out,
                "warning: sentence {sentence}: {scheme} violation at token positions {}",
                list.join(", ")
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_layouts() {
        assert_eq!(detect_columns("-DOCSTART- -X- -X- O\n\nEU NNP B-NP B-ORG\n"), Some(ColumnMap::CONLL2003));
        assert_eq!(detect_columns("a O\n"), Some(ColumnMap::WORD_TAG));
        assert_eq!(detect_columns("a b c d e\n"), None);
    }

    #[test]
    fn flags_inside_after_outside() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        fs::write(&p, "a O\nb I-PER\n\nc B-LOC\nd I-LOC\n").unwrap();
        let v = validate_file(&p, None, Scheme::Iob2).unwrap();
        assert_eq!((v.sentences, v.tokens), (2, 4));
        assert_eq!(v.violations, vec![(0, vec![1])]);
        let text = v.render("c.txt", Scheme::Iob2);
        assert!(text.contains("warning: sentence 0: IOB2 violation at token positions 1"));
        assert!(text.contains("# of tokens"));
    }
}
