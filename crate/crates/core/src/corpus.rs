//! Documents, tokenization, sentence segmentation and line-delimited corpus files.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// A raw document with an optional gold label.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: impl Into<String>) -> Self {
        self.gold = Some(gold.into());
        self
    }
}

/// Lowercased tokens of one document, grouped by sentence.
///
/// `tokens` is always the concatenation of `sentences`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenizedDocument {
    pub doc_id: String,
    pub sentences: Vec<Vec<String>>,
    pub tokens: Vec<String>,
}

impl TokenizedDocument {
    pub fn from_text(doc_id: impl Into<String>, text: &str) -> Self {
        let sentences: Vec<Vec<String>> = segment_sentences(text)
            .into_iter()
            .map(|span| tokenize(&text[span]))
            .collect();
        let tokens = sentences.iter().flatten().cloned().collect();
        Self {
            doc_id: doc_id.into(),
            sentences,
            tokens,
        }
    }

    pub fn from_document(doc: &Document) -> Self {
        Self::from_text(doc.id.clone(), &doc.text)
    }

    /// Build a document directly from tokens, treated as one sentence.
    pub fn from_tokens(doc_id: impl Into<String>, tokens: Vec<String>) -> Self {
        let sentences = if tokens.is_empty() {
            Vec::new()
        } else {
            vec![tokens.clone()]
        };
        Self {
            doc_id: doc_id.into(),
            sentences,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

fn is_core(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit()
}

fn is_inner(c: char) -> bool {
    matches!(c, '\'' | '?' | '-')
}

/// Lowercase and split `text` into tokens.
///
/// Tokens are maximal runs over `[a-z0-9'?-]`; the characters `'`, `?` and `-`
/// survive only when both neighbours are ASCII alphanumerics.
pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if is_core(c) {
            current.push(c);
            continue;
        }
        let flanked = is_inner(c)
            && i > 0
            && is_core(chars[i - 1])
            && chars.get(i + 1).copied().is_some_and(is_core);
        if flanked {
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

fn is_boundary_byte(bytes: &[u8], i: usize) -> bool {
    match bytes[i] {
        b'.' | b'!' | b';' | b'\n' => true,
        // A question mark between two alphanumerics is part of a token.
        b'?' => {
            let left = i > 0 && bytes[i - 1].is_ascii_alphanumeric();
            let right = bytes.get(i + 1).is_some_and(|b| b.is_ascii_alphanumeric());
            !(left && right)
        }
        _ => false,
    }
}

/// Split `text` into sentence byte spans.
///
/// A boundary is any maximal run of `.`, `?`, `!`, `;` or newline; the run
/// stays with the sentence it closes. Colons do not split. The spans cover
/// the whole text in order; fragments without any alphanumeric character are
/// merged into a neighbour.
pub fn segment_sentences(text: &str) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut raw = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if is_boundary_byte(bytes, i) {
            let mut end = i + 1;
            while end < bytes.len() && is_boundary_byte(bytes, end) {
                end += 1;
            }
            raw.push(start..end);
            start = end;
            i = end;
        } else {
            i += 1;
        }
    }
    if start < bytes.len() {
        raw.push(start..bytes.len());
    }

    let has_content = |r: &Range<usize>| text[r.clone()].chars().any(char::is_alphanumeric);
    let mut spans: Vec<Range<usize>> = Vec::with_capacity(raw.len());
    let mut pending: Option<usize> = None;
    for r in raw {
        if has_content(&r) {
            let begin = pending.take().unwrap_or(r.start);
            spans.push(begin..r.end);
        } else if let Some(last) = spans.last_mut() {
            last.end = r.end;
        } else {
            pending.get_or_insert(r.start);
        }
    }
    if let Some(begin) = pending {
        // No sentence had content; keep the whole text as one span.
        spans.push(begin..bytes.len());
    }
    spans
}

/// One parsed line of a corpus-style file, with its 1-based line number.
#[derive(Clone, Debug)]
pub struct Record {
    pub line: usize,
    pub fields: Map<String, Value>,
}

impl Record {
    pub fn str_field(&self, key: &str) -> Option<&str> {
        self.fields.get(key).and_then(Value::as_str)
    }
}

/// Read a line-delimited file of flat JSON objects. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<Record>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Map<String, Value> =
            serde_json::from_str(&line).map_err(|e| Error::Corpus {
                path: path.to_owned(),
                line: line_no,
                message: format!("malformed record: {e}"),
            })?;
        out.push(Record {
            line: line_no,
            fields,
        });
    }
    Ok(out)
}

/// Write records, one compact JSON object per line.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn document_from_record(path: &Path, rec: &Record) -> Result<Document> {
    let err = |message: String| Error::Corpus {
        path: path.to_owned(),
        line: rec.line,
        message,
    };
    let id = match rec.fields.get("id") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::String(_)) => return Err(err("empty `id`".into())),
        Some(_) => return Err(err("`id` must be a string".into())),
        None => return Err(err("missing `id`".into())),
    };
    let text = match rec.fields.get("text") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(err("`text` must be a string".into())),
        None => return Err(err("missing `text`".into())),
    };
    let gold = match rec.fields.get("gold") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(err("`gold` must be a string".into())),
    };
    Ok(Document { id, text, gold })
}

/// Load a corpus file. Order is preserved; duplicate ids are rejected.
pub fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    let records = read_records(path)?;
    let mut seen = HashSet::with_capacity(records.len());
    let mut docs = Vec::with_capacity(records.len());
    for rec in &records {
        let doc = document_from_record(path, rec)?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::Corpus {
                path: path.to_owned(),
                line: rec.line,
                message: format!("duplicate id `{}`", doc.id),
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    write_records(path, docs)
}

/// Reject empty or duplicate ids.
pub fn check_ids(docs: &[Document]) -> Result<()> {
    let mut seen = HashSet::with_capacity(docs.len());
    for d in docs {
        if d.id.is_empty() {
            return Err(Error::InvalidInput("document with empty id".into()));
        }
        if !seen.insert(d.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate id `{}`", d.id)));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(toks("No smoking after age XXX"), ["no", "smoking", "after", "age", "xxx"]);
        assert!(toks("").is_empty());
        assert_eq!(toks("doesn't smoke."), ["doesn't", "smoke"]);
    }

    #[test]
    fn inner_punctuation_needs_alphanumeric_neighbours() {
        assert_eq!(toks("smokes? yes"), ["smokes", "yes"]);
        assert_eq!(toks("trans-epiphyseal"), ["trans-epiphyseal"]);
        assert_eq!(toks("a--b 'quoted' x?y"), ["a", "b", "quoted", "x?y"]);
        assert_eq!(toks("Flex/Ext cerv*2vw"), ["flex", "ext", "cerv", "2vw"]);
        assert_eq!(toks("café"), ["caf"]);
    }

    #[test]
    fn segment_examples() {
        let t = "Indications: femur fx... Cannulated screw fixation of the right femoral neck";
        assert_eq!(segment_sentences(t).len(), 2);
        assert_eq!(segment_sentences("one sentence only").len(), 1);
        assert_eq!(segment_sentences("a. b. c").len(), 3);
        assert!(segment_sentences("").is_empty());
    }

    #[test]
    fn segment_boundaries() {
        let t = "fx: femur neck; pain\nhip! ok? x?y";
        let spans = segment_sentences(t);
        let parts: Vec<&str> = spans.iter().map(|r| &t[r.clone()]).collect();
        assert_eq!(parts, ["fx: femur neck;", " pain\n", "hip!", " ok?", " x?y"]);
    }

    #[test]
    fn punctuation_only_fragments_merge() {
        let t = "... first. ;; second.  ";
        let spans = segment_sentences(t);
        let parts: Vec<&str> = spans.iter().map(|r| &t[r.clone()]).collect();
        assert_eq!(parts, ["... first. ;;", " second.  "]);
        assert_eq!(segment_sentences("...").len(), 1);
    }

    #[test]
    fn load_corpus_reads_records() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","text":"hi"}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"id":"b","text":"there","gold":"pos","extra":"x"}}"#).unwrap();
        let docs = load_corpus(f.path()).unwrap();
        assert_eq!(docs[0], Document::new("a", "hi"));
        assert_eq!(docs[1], Document::new("b", "there").with_gold("pos"));
    }

    #[test]
    fn load_corpus_rejects_duplicates_and_garbage() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","text":"hi"}}"#).unwrap();
        writeln!(f, r#"{{"id":"a","text":"again"}}"#).unwrap();
        match load_corpus(f.path()) {
            Err(Error::Corpus { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("duplicate"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, r#"{{"id":"a","text":"hi"}}"#).unwrap();
        writeln!(g, r#"{{"id":"b","text":"#).unwrap();
        assert!(matches!(load_corpus(g.path()), Err(Error::Corpus { line: 2, .. })));

        let mut h = tempfile::NamedTempFile::new().unwrap();
        writeln!(h, r#"{{"id":"a","text":3}}"#).unwrap();
        assert!(matches!(load_corpus(h.path()), Err(Error::Corpus { line: 1, .. })));
    }

    #[test]
    fn corpus_round_trips_through_file() {
        let docs = vec![
            Document::new("x", "line \"quoted\"\nnext"),
            Document::new("y", "").with_gold("neg"),
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_corpus(f.path(), &docs).unwrap();
        assert_eq!(load_corpus(f.path()).unwrap(), docs);
    }

    proptest! {
        #[test]
        fn tokenize_is_idempotent_on_joined_output(s in "[ -~\n]{0,80}") {
            let once = tokenize(&s);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(&once, &twice);
            for t in &once {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn sentences_partition_tokens(s in "[a-zA-Z0-9 .?!;:'\\-\n]{0,120}") {
            let doc = TokenizedDocument::from_text("d", &s);
            let total: usize = doc.sentences.iter().map(Vec::len).sum();
            prop_assert_eq!(total, doc.tokens.len());
            prop_assert_eq!(&doc.tokens, &tokenize(&s));
            let spans = segment_sentences(&s);
            let mut pos = 0;
            for r in &spans {
                prop_assert_eq!(r.start, pos);
                pos = r.end;
            }
            prop_assert_eq!(pos, if spans.is_empty() { 0 } else { s.len() });
        }
    }
}
