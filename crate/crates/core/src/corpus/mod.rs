//! Column-format tagged corpora.
//!
//! A corpus is a list of sentences, each an ordered list of tokens with an
//! optional part-of-speech column and a gold tag. Sentences are separated by
//! blank lines; `-DOCSTART-` lines are skipped and document boundaries are
//! otherwise ignored.

mod spans;
mod synth;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use spans::{extract_spans, scheme_violations, spans_to_iob2, Span};
pub use synth::{synth_corpus, SynthSpec};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: expected {expected} columns, found {found}")]
    Columns { line: usize, expected: usize, found: usize },
    #[error("line {line}: invalid tag {tag:?} (expected O, B-<type> or I-<type>)")]
    Tag { line: usize, tag: String },
    #[error("invalid tag {0:?} (expected O, B-<type> or I-<type>)")]
    Label(String),
    #[error("invalid column map: {0}")]
    ColumnMap(String),
    #[error("invalid synthetic corpus spec: {0}")]
    Synth(String),
}

/// Chunk encoding of entity spans in a tag sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Scheme {
    /// `B-` only separates two adjacent chunks of the same type.
    #[serde(rename = "IOB1")]
    Iob1,
    /// Every chunk starts with `B-`.
    #[default]
    #[serde(rename = "IOB2")]
    Iob2,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Iob1 => "IOB1",
            Scheme::Iob2 => "IOB2",
        })
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "IOB1" => Ok(Scheme::Iob1),
            "IOB2" | "BIO" => Ok(Scheme::Iob2),
            other => Err(format!("unknown scheme {other:?}")),
        }
    }
}

/// A parsed tag label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagKind<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> TagKind<'a> {
    pub fn parse(label: &'a str) -> Option<Self> {
        if label == "O" {
            return Some(TagKind::Outside);
        }
        let (prefix, ty) = label.split_once('-')?;
        if ty.is_empty() {
            return None;
        }
        match prefix {
            "B" => Some(TagKind::Begin(ty)),
            "I" => Some(TagKind::Inside(ty)),
            _ => None,
        }
    }

    pub fn entity_type(&self) -> Option<&'a str> {
        match *self {
            TagKind::Outside => None,
            TagKind::Begin(t) | TagKind::Inside(t) => Some(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Option<String>,
    pub gold_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tags(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.gold_tag.as_str()).collect()
    }

    /// The sentence as a model sees it: surfaces and POS, no gold tags.
    pub fn observed(&self) -> Observed {
        let pos = if self.tokens.iter().all(|t| t.pos.is_some()) && !self.tokens.is_empty() {
            Some(self.tokens.iter().map(|t| t.pos.clone().unwrap_or_default()).collect())
        } else {
            None
        };
        Observed {
            id: self.id,
            words: self.tokens.iter().map(|t| t.surface.clone()).collect(),
            pos,
        }
    }
}

/// Token surfaces (and POS, when the corpus has it) without gold tags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observed {
    pub id: usize,
    pub words: Vec<String>,
    pub pos: Option<Vec<String>>,
}

impl Observed {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// An observed sentence with revealed tag indices into a [`TagSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeled {
    pub obs: Observed,
    pub tags: Vec<usize>,
}

/// Ordered tag labels of a corpus.
///
/// Labels are `O` followed by `B-t`, `I-t` for every entity type `t` in
/// lexicographic order, so tag indices are stable for a given set of types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TagSetRepr", into = "TagSetRepr")]
pub struct TagSet {
    labels: Vec<String>,
    scheme: Scheme,
    entity_types: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct TagSetRepr {
    scheme: Scheme,
    entity_types: Vec<String>,
}

impl From<TagSet> for TagSetRepr {
    fn from(t: TagSet) -> Self {
        TagSetRepr { scheme: t.scheme, entity_types: t.entity_types }
    }
}

impl TryFrom<TagSetRepr> for TagSet {
    type Error = CorpusError;

    fn try_from(r: TagSetRepr) -> Result<Self, Self::Error> {
        TagSet::new(r.entity_types, r.scheme)
    }
}

impl TagSet {
    pub fn new<I, S>(entity_types: I, scheme: Scheme) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let types: BTreeSet<String> = entity_types.into_iter().map(Into::into).collect();
        let mut labels = vec!["O".to_string()];
        for t in &types {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(CorpusError::Label(format!("B-{t}")));
            }
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Ok(TagSet { labels, scheme, entity_types: types.into_iter().collect(), index })
    }

    /// Builds a tag set from observed labels.
    pub fn from_labels<I, S>(labels: I, scheme: Scheme) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut types = BTreeSet::new();
        for l in labels {
            let l = l.as_ref();
            let kind = TagKind::parse(l).ok_or_else(|| CorpusError::Label(l.to_string()))?;
            if let Some(t) = kind.entity_type() {
                types.insert(t.to_string());
            }
        }
        TagSet::new(types, scheme)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn decode(&self, tags: &[usize]) -> Vec<&str> {
        tags.iter().map(|&t| self.label(t)).collect()
    }
}

/// Which whitespace-separated columns hold the surface, POS and tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub columns: usize,
    pub surface: usize,
    pub pos: Option<usize>,
    pub tag: usize,
}

impl ColumnMap {
    /// `word POS chunk NER`, as distributed for CoNLL-2003.
    pub const CONLL2003: ColumnMap = ColumnMap { columns: 4, surface: 0, pos: Some(1), tag: 3 };
    /// `word POS tag`.
    pub const WORD_POS_TAG: ColumnMap = ColumnMap { columns: 3, surface: 0, pos: Some(1), tag: 2 };
    /// `word tag`.
    pub const WORD_TAG: ColumnMap = ColumnMap { columns: 2, surface: 0, pos: None, tag: 1 };

    pub fn validate(&self) -> Result<(), CorpusError> {
        let mut used = vec![self.surface, self.tag];
        used.extend(self.pos);
        if used.iter().any(|&c| c >= self.columns) {
            return Err(CorpusError::ColumnMap(format!(
                "column index out of range for {} columns",
                self.columns
            )));
        }
        let distinct: BTreeSet<_> = used.iter().collect();
        if distinct.len() != used.len() {
            return Err(CorpusError::ColumnMap("columns must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub sentences: Vec<Sentence>,
    pub tagset: TagSet,
    pub token_count: usize,
}

impl Corpus {
    /// Assembles a corpus, renumbering sentence ids to their positions.
    pub fn new(sentences: Vec<Sentence>, scheme: Scheme) -> Result<Self, CorpusError> {
        let tagset = TagSet::from_labels(
            sentences.iter().flat_map(|s| s.tokens.iter().map(|t| t.gold_tag.as_str())),
            scheme,
        )?;
        Ok(Self::with_tagset(sentences, tagset))
    }

    pub(crate) fn with_tagset(mut sentences: Vec<Sentence>, tagset: TagSet) -> Self {
        for (i, s) in sentences.iter_mut().enumerate() {
            s.id = i;
        }
        let token_count = sentences.iter().map(Sentence::len).sum();
        Corpus { sentences, tagset, token_count }
    }

    /// Re-indexes the corpus under a (typically wider) tag set.
    pub fn relabel(self, tagset: TagSet) -> Result<Self, CorpusError> {
        for s in &self.sentences {
            for t in &s.tokens {
                if tagset.index_of(&t.gold_tag).is_none() {
                    return Err(CorpusError::Label(t.gold_tag.clone()));
                }
            }
        }
        Ok(Corpus { tagset, ..self })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn has_pos(&self) -> bool {
        !self.sentences.is_empty()
            && self.sentences.iter().all(|s| s.tokens.iter().all(|t| t.pos.is_some()))
    }

    /// Gold tag indices of one sentence.
    pub fn tag_ids(&self, sentence: usize) -> Vec<usize> {
        self.sentences[sentence]
            .tokens
            .iter()
            .map(|t| self.tagset.index_of(&t.gold_tag).expect("tag in corpus tag set"))
            .collect()
    }

    /// Column layout used by [`Corpus::write_conll`].
    pub fn column_map(&self) -> ColumnMap {
        if self.has_pos() {
            ColumnMap::WORD_POS_TAG
        } else {
            ColumnMap::WORD_TAG
        }
    }

    pub fn write_conll<W: Write>(&self, mut w: W) -> io::Result<()> {
        let with_pos = self.has_pos();
        for s in &self.sentences {
            for t in &s.tokens {
                match (&t.pos, with_pos) {
                    (Some(p), true) => writeln!(w, "{} {} {}", t.surface, p, t.gold_tag)?,
                    _ => writeln!(w, "{} {}", t.surface, t.gold_tag)?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_conll_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_conll(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("corpus text is UTF-8")
    }

    /// Splits into the first `n` sentences and the rest, renumbering both.
    pub fn split_at(&self, n: usize) -> (Corpus, Corpus) {
        let n = n.min(self.sentences.len());
        let head = self.sentences[..n].to_vec();
        let tail = self.sentences[n..].to_vec();
        (
            Corpus::with_tagset(head, self.tagset.clone()),
            Corpus::with_tagset(tail, self.tagset.clone()),
        )
    }

    /// Counts of chunks per entity type, under the corpus scheme.
    pub fn entity_counts(&self) -> Vec<(String, usize)> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for s in &self.sentences {
            for span in extract_spans(&s.tags(), self.tagset.scheme()) {
                *counts.entry(span.entity_type).or_default() += 1;
            }
        }
        let mut out: Vec<_> = counts.into_iter().collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}

pub fn parse_conll(path: &Path, columns: &ColumnMap, scheme: Scheme) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path)
        .map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    parse_conll_str(&text, columns, scheme)
}

pub fn parse_conll_str(text: &str, columns: &ColumnMap, scheme: Scheme) -> Result<Corpus, CorpusError> {
    columns.validate()?;
    let mut sentences = Vec::new();
    let mut current: Vec<Token> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            if !current.is_empty() {
                sentences.push(Sentence { id: 0, tokens: std::mem::take(&mut current) });
            }
            continue;
        }
        if fields[0] == "-DOCSTART-" {
            continue;
        }
        if fields.len() != columns.columns {
            return Err(CorpusError::Columns {
                line: line_no,
                expected: columns.columns,
                found: fields.len(),
            });
        }
        let tag = fields[columns.tag];
        if TagKind::parse(tag).is_none() {
            return Err(CorpusError::Tag { line: line_no, tag: tag.to_string() });
        }
        current.push(Token {
            surface: fields[columns.surface].to_string(),
            pos: columns.pos.map(|c| fields[c].to_string()),
            gold_tag: tag.to_string(),
        });
    }
    if !current.is_empty() {
        sentences.push(Sentence { id: 0, tokens: current });
    }
    Corpus::new(sentences, scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_one_sentence() {
        let c = parse_conll_str("John NNP B-PER\nruns VBZ O\n\n", &ColumnMap::WORD_POS_TAG, Scheme::Iob2)
            .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].len(), 2);
        assert_eq!(c.sentences[0].tags(), vec!["B-PER", "O"]);
        assert_eq!(c.sentences[0].tokens[0].pos.as_deref(), Some("NNP"));
        assert_eq!(c.token_count, 2);
    }

    #[test]
    fn docstart_block_emits_nothing() {
        let c = parse_conll_str("-DOCSTART- -X- O\n\n", &ColumnMap::WORD_POS_TAG, Scheme::Iob2).unwrap();
        assert_eq!(c.len(), 0);
        let c = parse_conll_str(
            "-DOCSTART- -X- -X- O\n\nEU NNP B-NP B-ORG\nrejects VBZ B-VP O\n",
            &ColumnMap::CONLL2003,
            Scheme::Iob1,
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences[0].tags(), vec!["B-ORG", "O"]);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let err = parse_conll_str("John B-PER\n", &ColumnMap::WORD_POS_TAG, Scheme::Iob2).unwrap_err();
        match err {
            CorpusError::Columns { line, expected, found } => {
                assert_eq!((line, expected, found), (1, 3, 2));
            }
            e => panic!("unexpected error {e}"),
        }
        assert!(err_msg("John B-PER\n").contains("line 1"));
    }

    fn err_msg(text: &str) -> String {
        parse_conll_str(text, &ColumnMap::WORD_POS_TAG, Scheme::Iob2).unwrap_err().to_string()
    }

    #[test]
    fn bad_tag_prefix_is_an_error() {
        let err = parse_conll_str("a DT O\nJohn NNP S-PER\n", &ColumnMap::WORD_POS_TAG, Scheme::Iob2)
            .unwrap_err();
        assert!(matches!(err, CorpusError::Tag { line: 2, .. }));
        assert!(parse_conll_str("x NN B-\n", &ColumnMap::WORD_POS_TAG, Scheme::Iob2).is_err());
    }

    #[test]
    fn tagset_layout() {
        let ts = TagSet::from_labels(["I-PER", "O", "B-LOC"], Scheme::Iob1).unwrap();
        assert_eq!(ts.labels(), &["O", "B-LOC", "I-LOC", "B-PER", "I-PER"]);
        assert_eq!(ts.entity_types(), &["LOC", "PER"]);
        assert_eq!(ts.index_of("I-PER"), Some(4));
        let json = serde_json::to_string(&ts).unwrap();
        let back: TagSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ts);
    }

    #[test]
    fn bad_column_map() {
        let m = ColumnMap { columns: 2, surface: 0, pos: Some(1), tag: 2 };
        assert!(parse_conll_str("", &m, Scheme::Iob2).is_err());
    }

    fn arb_corpus() -> impl Strategy<Value = (Vec<Vec<(String, String, String)>>, bool)> {
        let token = ("[A-Za-z0-9.,]{1,8}", "[A-Z]{2,3}", prop_oneof![
            Just("O".to_string()),
            Just("B-PER".to_string()),
            Just("I-PER".to_string()),
            Just("B-LOC".to_string()),
            Just("I-MISC".to_string()),
        ]);
        (prop::collection::vec(prop::collection::vec(token, 1..8), 0..6), any::<bool>())
    }

    proptest! {
        #[test]
        fn parse_serialize_parse_is_stable((sents, with_pos) in arb_corpus()) {
            let sentences = sents
                .into_iter()
                .map(|toks| Sentence {
                    id: 0,
                    tokens: toks
                        .into_iter()
                        .map(|(s, p, t)| Token { surface: s, pos: with_pos.then_some(p), gold_tag: t })
                        .collect(),
                })
                .collect();
            let corpus = Corpus::new(sentences, Scheme::Iob2).unwrap();
            let text = corpus.to_conll_string();
            let back = parse_conll_str(&text, &corpus.column_map(), Scheme::Iob2).unwrap();
            prop_assert_eq!(&back, &corpus);
            let again = parse_conll_str(&back.to_conll_string(), &back.column_map(), Scheme::Iob2).unwrap();
            prop_assert_eq!(again, back);
        }
    }
}
