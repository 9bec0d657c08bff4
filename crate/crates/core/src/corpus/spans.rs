//! Tag sequence to entity span conversion.

use serde::{Deserialize, Serialize};

use super::{Scheme, TagKind};

/// An entity chunk over inclusive token positions `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub entity_type: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(entity_type: impl Into<String>, start: usize, end: usize) -> Self {
        Span { entity_type: entity_type.into(), start, end }
    }
}

/// Extracts entity spans from a tag sequence.
///
/// Repair is lenient: an `I-X` that does not continue an open `X` span opens
/// a new one, and unparseable labels are read as `O`. Under both schemes a
/// `B-X` closes any open span and opens a new one; the schemes only differ in
/// which sequences count as well-formed (see [`scheme_violations`]).
pub fn extract_spans<S: AsRef<str>>(tags: &[S], _scheme: Scheme) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let kind = TagKind::parse(tag.as_ref()).unwrap_or(TagKind::Outside);
        match kind {
            TagKind::Outside => {
                if let Some((ty, start)) = open.take() {
                    spans.push(Span::new(ty, start, i - 1));
                }
            }
            TagKind::Begin(ty) => {
                if let Some((prev, start)) = open.take() {
                    spans.push(Span::new(prev, start, i - 1));
                }
                open = Some((ty, i));
            }
            TagKind::Inside(ty) => match open {
                Some((prev, _)) if prev == ty => {}
                _ => {
                    if let Some((prev, start)) = open.take() {
                        spans.push(Span::new(prev, start, i - 1));
                    }
                    open = Some((ty, i));
                }
            },
        }
    }
    if let Some((ty, start)) = open {
        spans.push(Span::new(ty, start, tags.len() - 1));
    }
    spans
}

/// Positions where the tag sequence is not well-formed under `scheme`.
///
/// IOB2: an `I-X` not preceded by `B-X` or `I-X`. IOB1: a `B-X` not preceded
/// by a tag of type `X` (B- is reserved for adjacent same-type chunks).
pub fn scheme_violations<S: AsRef<str>>(tags: &[S], scheme: Scheme) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        let kind = TagKind::parse(tag.as_ref()).unwrap_or(TagKind::Outside);
        let bad = match (scheme, kind) {
            (Scheme::Iob2, TagKind::Inside(ty)) => prev != Some(ty),
            (Scheme::Iob1, TagKind::Begin(ty)) => prev != Some(ty),
            _ => false,
        };
        if bad {
            out.push(i);
        }
        prev = kind.entity_type();
    }
    out
}

/// Encodes non-overlapping spans as an IOB2 tag sequence of length `n`.
pub fn spans_to_iob2(spans: &[Span], n: usize) -> Vec<String> {
    let mut tags = vec!["O".to_string(); n];
    for s in spans {
        tags[s.start] = format!("B-{}", s.entity_type);
        for t in tags.iter_mut().take(s.end + 1).skip(s.start + 1) {
            *t = format!("I-{}", s.entity_type);
        }
    }
    tags
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn iob2_basic() {
        let spans = extract_spans(&["B-PER", "I-PER", "O", "B-LOC"], Scheme::Iob2);
        assert_eq!(spans, vec![Span::new("PER", 0, 1), Span::new("LOC", 3, 3)]);
    }

    #[test]
    fn iob1_boundary() {
        let spans = extract_spans(&["I-PER", "I-PER", "B-PER", "I-PER"], Scheme::Iob1);
        assert_eq!(spans, vec![Span::new("PER", 0, 1), Span::new("PER", 2, 3)]);
    }

    #[test]
    fn all_outside() {
        for scheme in [Scheme::Iob1, Scheme::Iob2] {
            assert!(extract_spans(&["O", "O", "O"], scheme).is_empty());
        }
        assert!(extract_spans::<&str>(&[], Scheme::Iob2).is_empty());
    }

    #[test]
    fn dangling_inside_opens_span() {
        let spans = extract_spans(&["O", "I-ORG", "I-ORG", "I-LOC", "B-LOC"], Scheme::Iob2);
        assert_eq!(
            spans,
            vec![Span::new("ORG", 1, 2), Span::new("LOC", 3, 3), Span::new("LOC", 4, 4)]
        );
    }

    #[test]
    fn violations() {
        assert_eq!(scheme_violations(&["O", "I-PER", "I-PER", "B-LOC", "I-PER"], Scheme::Iob2), vec![1, 4]);
        assert_eq!(scheme_violations(&["B-PER", "I-PER", "B-PER", "O", "B-LOC"], Scheme::Iob1), vec![0, 4]);
        assert!(scheme_violations(&["I-PER", "B-PER", "O", "I-LOC"], Scheme::Iob1).is_empty());
    }

    fn arb_spans() -> impl Strategy<Value = (Vec<Span>, usize)> {
        // Random segmentation: each segment is either outside or a typed chunk.
        prop::collection::vec((1usize..4, prop::option::of(0usize..3)), 0..10).prop_map(|segs| {
            let mut spans = Vec::new();
            let mut pos = 0;
            for (len, ty) in segs {
                if let Some(t) = ty {
                    spans.push(Span::new(["PER", "LOC", "ORG"][t], pos, pos + len - 1));
                }
                pos += len;
            }
            (spans, pos)
        })
    }

    proptest! {
        #[test]
        fn iob2_round_trip((spans, n) in arb_spans()) {
            let tags = spans_to_iob2(&spans, n);
            prop_assert_eq!(extract_spans(&tags, Scheme::Iob2), spans);
            prop_assert!(scheme_violations(&tags, Scheme::Iob2).is_empty());
        }

        #[test]
        fn spans_sorted_and_disjoint(tags in prop::collection::vec(
            prop_oneof![Just("O"), Just("B-A"), Just("I-A"), Just("B-B"), Just("I-B")], 0..20))
        {
            let spans = extract_spans(&tags, Scheme::Iob1);
            for s in &spans {
                prop_assert!(s.start <= s.end && s.end < tags.len());
            }
            for w in spans.windows(2) {
                prop_assert!(w[0].end < w[1].start);
            }
        }
    }
}
