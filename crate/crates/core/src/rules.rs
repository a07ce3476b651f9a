//! Declarative keyword/regex rule sets and the weak labeler built from them.
//!
//! Grammar (one directive per line, `#` starts a comment line):
//!
//! ```text
//! task smoking
//! labels smoker non-smoker
//! default non-smoker
//! boundary whole-word            # or: prefix
//! layer any non-smoker:
//!     pattern denies\W*smoking
//! layer cooccur fracture scope sentence:
//!     seta neck
//!     setb fxs?
//! ```
//!
//! Layers are evaluated in file order and the first one that fires decides
//! the label. Patterns are case-insensitive and use ASCII `\w`/`\b`.

use std::fmt;

use rayon::prelude::*;
use regex::bytes::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::corpus::{segment_sentences, Document};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClassLabel {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryMode {
    /// `\b(?:pattern)\b`
    WholeWord,
    /// `\b(?:pattern)`: only the left edge is anchored.
    Prefix,
}

impl BoundaryMode {
    fn keyword(self) -> &'static str {
        match self {
            BoundaryMode::WholeWord => "whole-word",
            BoundaryMode::Prefix => "prefix",
        }
    }

    fn wrap(self, pattern: &str) -> String {
        match self {
            BoundaryMode::WholeWord => format!(r"\b(?:{pattern})\b"),
            BoundaryMode::Prefix => format!(r"\b(?:{pattern})"),
        }
    }
}

/// A pattern source together with its compiled, boundary-wrapped form.
#[derive(Clone, Debug)]
pub struct Pattern {
    source: String,
    regex: Regex,
}

impl Pattern {
    fn compile(source: &str, mode: BoundaryMode) -> std::result::Result<Self, regex::Error> {
        let regex = RegexBuilder::new(&mode.wrap(source))
            .case_insensitive(true)
            .unicode(false)
            .build()?;
        Ok(Self {
            source: source.to_owned(),
            regex,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn find(&self, haystack: &[u8]) -> Option<(usize, usize)> {
        self.regex.find(haystack).map(|m| (m.start(), m.end()))
    }
}

impl PartialEq for Pattern {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source
    }
}

impl Eq for Pattern {}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RuleLayer {
    Any {
        label: ClassLabel,
        patterns: Vec<Pattern>,
    },
    /// Fires when one sentence holds a match from each set.
    Cooccur {
        label: ClassLabel,
        set_a: Vec<Pattern>,
        set_b: Vec<Pattern>,
    },
}

impl RuleLayer {
    pub fn label(&self) -> &ClassLabel {
        match self {
            RuleLayer::Any { label, .. } | RuleLayer::Cooccur { label, .. } => label,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleSet {
    pub task: String,
    pub labels: Vec<ClassLabel>,
    pub default_label: ClassLabel,
    pub boundary: BoundaryMode,
    pub layers: Vec<RuleLayer>,
}

/// One matched pattern inside the firing layer. `span` is a byte range into
/// the lowercased document text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub layer: usize,
    pub pattern: String,
    pub span: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeakLabel {
    pub doc_id: String,
    pub label: ClassLabel,
    /// Empty exactly when no layer fired and the default applied.
    pub trace: Vec<TraceEntry>,
}

enum Open {
    None,
    Any {
        label: ClassLabel,
        patterns: Vec<(usize, String)>,
        line: usize,
    },
    Cooccur {
        label: ClassLabel,
        set_a: Vec<(usize, String)>,
        set_b: Vec<(usize, String)>,
        line: usize,
    },
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::RuleParse {
        line,
        message: message.into(),
    }
}

struct Draft {
    task: Option<String>,
    labels: Option<(usize, Vec<ClassLabel>)>,
    default: Option<(usize, ClassLabel)>,
    boundary: BoundaryMode,
    // (header line, label, sets of (line, pattern))
    layers: Vec<(usize, DraftLayer)>,
}

enum DraftLayer {
    Any(ClassLabel, Vec<(usize, String)>),
    Cooccur(ClassLabel, Vec<(usize, String)>, Vec<(usize, String)>),
}

impl Draft {
    fn close(&mut self, open: Open) -> Result<()> {
        match open {
            Open::None => {}
            Open::Any {
                label,
                patterns,
                line,
            } => {
                if patterns.is_empty() {
                    return Err(parse_err(line, "layer has no patterns"));
                }
                self.layers.push((line, DraftLayer::Any(label, patterns)));
            }
            Open::Cooccur {
                label,
                set_a,
                set_b,
                line,
            } => {
                if set_a.is_empty() || set_b.is_empty() {
                    return Err(parse_err(line, "cooccur layer needs both seta and setb patterns"));
                }
                self.layers
                    .push((line, DraftLayer::Cooccur(label, set_a, set_b)));
            }
        }
        Ok(())
    }
}

fn layer_header(rest: &str, line: usize) -> Result<Open> {
    let body = rest
        .strip_suffix(':')
        .ok_or_else(|| parse_err(line, "layer header must end with `:`"))?;
    let words: Vec<&str> = body.split_whitespace().collect();
    match words.as_slice() {
        ["any", label] => Ok(Open::Any {
            label: ClassLabel::new(*label),
            patterns: Vec::new(),
            line,
        }),
        ["cooccur", label, "scope", "sentence"] => Ok(Open::Cooccur {
            label: ClassLabel::new(*label),
            set_a: Vec::new(),
            set_b: Vec::new(),
            line,
        }),
        ["cooccur", _, "scope", other] => {
            Err(parse_err(line, format!("unsupported scope `{other}`")))
        }
        _ => Err(parse_err(
            line,
            "expected `layer any <label>:` or `layer cooccur <label> scope sentence:`",
        )),
    }
}

impl RuleSet {
    /// Parse a rule configuration.
    pub fn parse(config: &str) -> Result<Self> {
        let mut draft = Draft {
            task: None,
            labels: None,
            default: None,
            boundary: BoundaryMode::WholeWord,
            layers: Vec::new(),
        };
        let mut open = Open::None;

        for (idx, raw) in config.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (directive, rest) = match trimmed.split_once(char::is_whitespace) {
                Some((d, r)) => (d, r.trim()),
                None => (trimmed, ""),
            };
            match directive {
                "pattern" | "seta" | "setb" => {
                    if rest.is_empty() {
                        return Err(parse_err(line, format!("`{directive}` needs a regex")));
                    }
                    let entry = (line, rest.to_owned());
                    match (&mut open, directive) {
                        (Open::Any { patterns, .. }, "pattern") => patterns.push(entry),
                        (Open::Cooccur { set_a, .. }, "seta") => set_a.push(entry),
                        (Open::Cooccur { set_b, .. }, "setb") => set_b.push(entry),
                        _ => {
                            return Err(parse_err(
                                line,
                                format!("`{directive}` is not valid outside a matching layer"),
                            ))
                        }
                    }
                    continue;
                }
                _ => {}
            }

            let prev = std::mem::replace(&mut open, Open::None);
            draft.close(prev)?;
            match directive {
                "task" => {
                    if rest.is_empty() {
                        return Err(parse_err(line, "`task` needs a name"));
                    }
                    draft.task = Some(rest.to_owned());
                }
                "labels" => {
                    let labels: Vec<ClassLabel> =
                        rest.split_whitespace().map(ClassLabel::new).collect();
                    if labels.is_empty() {
                        return Err(parse_err(line, "`labels` needs at least one label"));
                    }
                    for (i, l) in labels.iter().enumerate() {
                        if labels[..i].contains(l) {
                            return Err(parse_err(line, format!("label `{l}` declared twice")));
                        }
                    }
                    draft.labels = Some((line, labels));
                }
                "default" => {
                    let mut words = rest.split_whitespace();
                    match (words.next(), words.next()) {
                        (Some(l), None) => draft.default = Some((line, ClassLabel::new(l))),
                        _ => return Err(parse_err(line, "`default` takes exactly one label")),
                    }
                }
                "boundary" => {
                    draft.boundary = match rest {
                        "whole-word" => BoundaryMode::WholeWord,
                        "prefix" => BoundaryMode::Prefix,
                        other => {
                            return Err(parse_err(
                                line,
                                format!("unknown boundary mode `{other}`"),
                            ))
                        }
                    }
                }
                "layer" => open = layer_header(rest, line)?,
                other => return Err(parse_err(line, format!("unknown directive `{other}`"))),
            }
        }
        let last_line = config.lines().count().max(1);
        draft.close(open)?;

        let (default_line, default_label) = draft
            .default
            .ok_or_else(|| parse_err(last_line, "missing default"))?;
        let labels = match draft.labels {
            Some((_, labels)) => labels,
            None => {
                // Without an explicit declaration the labels are the default
                // plus every layer label, in order of first appearance.
                let mut labels = vec![default_label.clone()];
                for (_, l) in &draft.layers {
                    let label = match l {
                        DraftLayer::Any(label, _) | DraftLayer::Cooccur(label, _, _) => label,
                    };
                    if !labels.contains(label) {
                        labels.push(label.clone());
                    }
                }
                labels
            }
        };
        if !labels.contains(&default_label) {
            return Err(parse_err(
                default_line,
                format!("undeclared label `{default_label}`"),
            ));
        }

        let mode = draft.boundary;
        let compile = |(line, src): &(usize, String)| {
            Pattern::compile(src, mode)
                .map_err(|e| parse_err(*line, format!("invalid regex `{src}`: {e}")))
        };
        let compile_all =
            |set: &[(usize, String)]| set.iter().map(compile).collect::<Result<Vec<_>>>();

        let mut layers = Vec::with_capacity(draft.layers.len());
        for (line, layer) in &draft.layers {
            let label = match layer {
                DraftLayer::Any(label, _) | DraftLayer::Cooccur(label, _, _) => label,
            };
            if !labels.contains(label) {
                return Err(parse_err(*line, format!("undeclared label `{label}`")));
            }
            layers.push(match layer {
                DraftLayer::Any(label, pats) => RuleLayer::Any {
                    label: label.clone(),
                    patterns: compile_all(pats)?,
                },
                DraftLayer::Cooccur(label, a, b) => RuleLayer::Cooccur {
                    label: label.clone(),
                    set_a: compile_all(a)?,
                    set_b: compile_all(b)?,
                },
            });
        }

        Ok(RuleSet {
            task: draft.task.unwrap_or_else(|| "task".to_owned()),
            labels,
            default_label,
            boundary: mode,
            layers,
        })
    }

    /// The first declared label that is not the default: the class that
    /// counts as positive when scoring.
    pub fn positive_label(&self) -> Option<&ClassLabel> {
        self.labels.iter().find(|l| **l != self.default_label)
    }

    /// Assign a weak label to one document.
    pub fn apply(&self, doc_id: &str, text: &str) -> WeakLabel {
        let lowered = text.to_lowercase();
        let bytes = lowered.as_bytes();
        for (idx, layer) in self.layers.iter().enumerate() {
            let trace = match layer {
                RuleLayer::Any { patterns, .. } => patterns.iter().find_map(|p| {
                    p.find(bytes).map(|span| {
                        vec![TraceEntry {
                            layer: idx,
                            pattern: p.source.clone(),
                            span,
                        }]
                    })
                }),
                RuleLayer::Cooccur { set_a, set_b, .. } => {
                    segment_sentences(&lowered).into_iter().find_map(|sent| {
                        let hay = &bytes[sent.clone()];
                        let first = |set: &[Pattern]| {
                            set.iter().find_map(|p| {
                                p.find(hay).map(|(s, e)| TraceEntry {
                                    layer: idx,
                                    pattern: p.source.clone(),
                                    span: (sent.start + s, sent.start + e),
                                })
                            })
                        };
                        Some(vec![first(set_a)?, first(set_b)?])
                    })
                }
            };
            if let Some(trace) = trace {
                return WeakLabel {
                    doc_id: doc_id.to_owned(),
                    label: layer.label().clone(),
                    trace,
                };
            }
        }
        WeakLabel {
            doc_id: doc_id.to_owned(),
            label: self.default_label.clone(),
            trace: Vec::new(),
        }
    }

    pub fn apply_document(&self, doc: &Document) -> WeakLabel {
        self.apply(&doc.id, &doc.text)
    }

    /// Label every document, preserving order. `threads = None` uses the
    /// ambient rayon pool; the output does not depend on the thread count.
    pub fn label_corpus(&self, docs: &[Document], threads: Option<usize>) -> Result<Vec<WeakLabel>> {
        match threads {
            Some(1) => Ok(docs.iter().map(|d| self.apply_document(d)).collect()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
                Ok(pool.install(|| docs.par_iter().map(|d| self.apply_document(d)).collect()))
            }
            None => Ok(docs.par_iter().map(|d| self.apply_document(d)).collect()),
        }
    }
}

impl fmt::Display for RuleSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task {}", self.task)?;
        let labels: Vec<&str> = self.labels.iter().map(ClassLabel::as_str).collect();
        writeln!(f, "labels {}", labels.join(" "))?;
        writeln!(f, "default {}", self.default_label)?;
        writeln!(f, "boundary {}", self.boundary.keyword())?;
        for layer in &self.layers {
            match layer {
                RuleLayer::Any { label, patterns } => {
                    writeln!(f, "layer any {label}:")?;
                    for p in patterns {
                        writeln!(f, "    pattern {}", p.source)?;
                    }
                }
                RuleLayer::Cooccur {
                    label,
                    set_a,
                    set_b,
                } => {
                    writeln!(f, "layer cooccur {label} scope sentence:")?;
                    for p in set_a {
                        writeln!(f, "    seta {}", p.source)?;
                    }
                    for p in set_b {
                        writeln!(f, "    setb {}", p.source)?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Rule sets shipped in `rules/`, embedded for tests and the synthetic
/// experiments.
pub mod shipped {
    pub const SMOKING: &str = include_str!("../../../rules/smoking.rules");
    pub const SMOKING_PREFIX: &str = include_str!("../../../rules/smoking-prefix.rules");
    pub const FRACTURE: &str = include_str!("../../../rules/fracture.rules");

    /// The smoking rules with the semi-structured `tobacco current use: no`
    /// layer switched on.
    pub fn smoking_with_extension() -> String {
        SMOKING
            .lines()
            .map(|l| l.strip_prefix("#ext ").unwrap_or(l))
            .collect::<Vec<_>>()
            .join("\n")
    }
}
