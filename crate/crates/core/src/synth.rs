//! Synthetic corpora with known gold labels.
//!
//! Each document is a handful of filler sentences around one "finding"
//! sentence drawn from its class's templates. Templates contain `{slot}`
//! placeholders filled from per-bank word lists. A document may be perturbed
//! in one of three ways that fool keyword rules:
//!
//! * misspelled keyword: one finding word with a known misspelling is swapped
//!   for it, inside the same template, so the misspelling shares contexts with
//!   the canonical form;
//! * cross-sentence split: a class template that spreads the evidence over
//!   two sentences;
//! * negation-scope trap: a class template whose surface form triggers the
//!   wrong rule layer.
//!
//! Perturbation kinds are drawn per document; a kind the document's class has
//! no material for leaves it unperturbed, and the side-channel manifest says so.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    None,
    MisspelledKeyword,
    CrossSentenceSplit,
    NegationScopeTrap,
}

impl Perturbation {
    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::None => "none",
            Perturbation::MisspelledKeyword => "misspelled-keyword",
            Perturbation::CrossSentenceSplit => "cross-sentence-split",
            Perturbation::NegationScopeTrap => "negation-scope-trap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplates {
    pub label: String,
    pub templates: Vec<String>,
    #[serde(default)]
    pub split_templates: Vec<String>,
    #[serde(default)]
    pub trap_templates: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateBank {
    pub name: String,
    pub classes: Vec<ClassTemplates>,
    pub slots: BTreeMap<String, Vec<String>>,
    /// canonical word -> misspelled variants
    pub misspellings: BTreeMap<String, Vec<String>>,
    pub filler: Vec<String>,
    /// Inclusive range of filler sentences per document.
    pub filler_range: (usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct PerturbationRates {
    pub misspell: f64,
    pub split: f64,
    pub trap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_docs: usize,
    /// (label, prior) in draw order.
    pub class_priors: Vec<(String, f64)>,
    pub template_bank: TemplateBank,
    pub perturbations: PerturbationRates,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub id_prefix: String,
}

fn default_prefix() -> String {
    "syn".to_owned()
}

/// A generated document plus the perturbation applied to it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub text: String,
    pub gold: String,
    pub perturbation: Perturbation,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthCorpus {
    pub documents: Vec<Document>,
    pub manifest: Vec<ManifestRecord>,
}

impl SynthConfig {
    pub fn new(bank: TemplateBank, n_docs: usize, seed: u64) -> Self {
        let p = 1.0 / bank.classes.len() as f64;
        let class_priors = bank.classes.iter().map(|c| (c.label.clone(), p)).collect();
        Self {
            n_docs,
            class_priors,
            template_bank: bank,
            perturbations: PerturbationRates::default(),
            seed,
            id_prefix: default_prefix(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_docs == 0 {
            return bad("n_docs must be positive".into());
        }
        if self.class_priors.is_empty() {
            return bad("class_priors is empty".into());
        }
        let mut sum = 0.0;
        for (label, p) in &self.class_priors {
            if !(0.0..=1.0).contains(p) {
                return bad(format!("prior for `{label}` outside [0,1]"));
            }
            sum += p;
            if *p > 0.0 {
                let has = self
                    .template_bank
                    .classes
                    .iter()
                    .any(|c| &c.label == label && !c.templates.is_empty());
                if !has {
                    return bad(format!("no templates for class `{label}` with positive prior"));
                }
            }
        }
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("class priors sum to {sum}, not 1"));
        }
        let r = self.perturbations;
        for (name, v) in [("misspell", r.misspell), ("split", r.split), ("trap", r.trap)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} rate {v} outside [0,1]"));
            }
        }
        if r.misspell + r.split + r.trap > 1.0 + 1e-12 {
            return bad("perturbation rates sum above 1".into());
        }
        let (lo, hi) = self.template_bank.filler_range;
        if lo > hi {
            return bad("filler_range is inverted".into());
        }
        if hi > 0 && self.template_bank.filler.is_empty() {
            return bad("filler sentences requested but none provided".into());
        }
        Ok(())
    }
}

fn fill(template: &str, slots: &BTreeMap<String, Vec<String>>, rng: &mut Rng) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::InvalidConfig(format!("unclosed slot in `{template}`")))?;
        let name = &rest[open + 1..open + close];
        let words = slots
            .get(name)
            .filter(|w| !w.is_empty())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown slot `{name}`")))?;
        out.push_str(words.choose(rng).expect("non-empty"));
        rest = &rest[open + close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn misspell(sentence: &str, bank: &TemplateBank, rng: &mut Rng) -> Option<String> {
    let words: Vec<&str> = sentence.split(' ').collect();
    let candidates: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, w)| bank.misspellings.get(**w).is_some_and(|v| !v.is_empty()))
        .map(|(i, _)| i)
        .collect();
    let &pick = candidates.choose(rng)?;
    let variant = bank.misspellings[words[pick]].choose(rng).expect("non-empty");
    let mut out: Vec<&str> = words;
    out[pick] = variant;
    Some(out.join(" "))
}

fn sentence_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Draw an index from a discrete distribution given by `weights`.
fn categorical(weights: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    // Rounding slack: fall back to the last entry with positive weight.
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Generate a corpus. Identical configs give identical corpora.
pub fn synth_generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let bank = &cfg.template_bank;
    let mut rng = seeded(cfg.seed);
    let priors: Vec<f64> = cfg.class_priors.iter().map(|(_, p)| *p).collect();
    let r = cfg.perturbations;
    let kind_weights = [r.misspell, r.split, r.trap, (1.0 - r.misspell - r.split - r.trap).max(0.0)];
    let width = cfg.n_docs.saturating_sub(1).to_string().len().max(6);

    let mut documents = Vec::with_capacity(cfg.n_docs);
    let mut manifest = Vec::with_capacity(cfg.n_docs);
    for i in 0..cfg.n_docs {
        let label = &cfg.class_priors[categorical(&priors, &mut rng)].0;
        let class = bank
            .classes
            .iter()
            .find(|c| &c.label == label)
            .expect("validated");
        let drawn = match categorical(&kind_weights, &mut rng) {
            0 => Perturbation::MisspelledKeyword,
            1 => Perturbation::CrossSentenceSplit,
            2 => Perturbation::NegationScopeTrap,
            _ => Perturbation::None,
        };

        let pool = match drawn {
            Perturbation::CrossSentenceSplit if !class.split_templates.is_empty() => {
                &class.split_templates
            }
            Perturbation::NegationScopeTrap if !class.trap_templates.is_empty() => {
                &class.trap_templates
            }
            _ => &class.templates,
        };
        let mut kind = match drawn {
            Perturbation::CrossSentenceSplit | Perturbation::NegationScopeTrap
                if std::ptr::eq(pool, &class.templates) =>
            {
                Perturbation::None
            }
            k => k,
        };
        let template = pool.choose(&mut rng).expect("validated");
        let mut finding = fill(template, &bank.slots, &mut rng)?;
        if kind == Perturbation::MisspelledKeyword {
            match misspell(&finding, bank, &mut rng) {
                Some(s) => finding = s,
                None => kind = Perturbation::None,
            }
        }

        let (lo, hi) = bank.filler_range;
        let n_filler = rng.gen_range(lo..=hi);
        let mut sentences = Vec::with_capacity(n_filler + 1);
        for _ in 0..n_filler {
            let t = bank.filler.choose(&mut rng).expect("validated");
            sentences.push(fill(t, &bank.slots, &mut rng)?);
        }
        let at = rng.gen_range(0..=n_filler);
        sentences.insert(at, finding);
        let text = sentences
            .iter()
            .map(|s| {
                // Templates may hold their own internal sentence breaks.
                let body: Vec<String> = s.split(". ").map(sentence_case).collect();
                format!("{}.", body.join(". "))
            })
            .collect::<Vec<_>>()
            .join(" ");

        let id = format!("{}-{:0width$}", cfg.id_prefix, i);
        documents.push(Document {
            id: id.clone(),
            text: text.clone(),
            gold: Some(label.clone()),
        });
        manifest.push(ManifestRecord {
            id,
            text,
            gold: label.clone(),
            perturbation: kind,
        });
    }
    Ok(SynthCorpus {
        documents,
        manifest,
    })
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

fn slot_map(entries: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    entries
        .iter()
        .map(|(k, v)| ((*k).to_owned(), strings(v)))
        .collect()
}

impl TemplateBank {
    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "smoking" => Some(Self::smoking()),
            "fracture" => Some(Self::fracture()),
            _ => None,
        }
    }

    /// Social-history snippets for the smoking task (labels `smoker` /
    /// `non-smoker`).
    pub fn smoking() -> Self {
        let slots = slot_map(&[
            ("n", &["2", "3", "5", "10", "15", "20", "30", "40"]),
            ("freq", &["daily", "occasionally", "socially", "every morning", "on weekends"]),
            ("pt", &["patient", "she", "he"]),
            ("reason", &["routine visit", "follow up", "knee pain", "cough", "hypertension", "diabetes", "a rash"]),
            ("vs", &["stable", "normal", "within normal limits"]),
            ("symptom", &["mild fatigue", "headache", "back pain", "poor sleep", "heartburn"]),
            ("family", &["daughter", "son", "spouse", "family"]),
            ("drink", &["wine", "beer", "coffee", "tea"]),
            ("job", &["teacher", "taxi driver", "nurse", "farmer", "retired"]),
        ]);
        let misspellings = slot_map(&[
            ("smoker", &["smokr", "smoekr"]),
            ("smokes", &["smoks", "smokez"]),
            ("smoking", &["smokng", "smokin"]),
            ("smoked", &["smokd"]),
            ("tobacco", &["tobaco", "tabacco"]),
            ("cigarettes", &["cigarrettes", "cigarets"]),
            ("cigars", &["cigarz"]),
            ("nicotine", &["nicotene", "nictoine"]),
        ]);
        let classes = vec![
            ClassTemplates {
                label: "smoker".into(),
                templates: strings(&[
                    "current smoker with {n} pack years",
                    "{pt} smokes {freq}",
                    "quit smoking {n} years ago",
                    "uses chewing tobacco {freq}",
                    "{pt} buys cigarettes {freq}",
                    "former smoker who quit {n} years ago",
                    "{pt} uses nicotine gum {freq}",
                    "{pt} has cigars {freq}",
                ]),
                split_templates: Vec::new(),
                trap_templates: strings(&["no smoking after age {n}", "no smoking since {pt} turned {n}"]),
            },
            ClassTemplates {
                label: "non-smoker".into(),
                templates: strings(&[
                    "{pt} denies smoking",
                    "never smoked",
                    "lifelong nonsmoker",
                    "no tobacco use",
                    "tobacco: never",
                    "{pt} doesn't smoke",
                    "zero smokers in the household",
                    "non smoker by history",
                ]),
                split_templates: Vec::new(),
                trap_templates: Vec::new(),
            },
        ];
        Self {
            name: "smoking".into(),
            classes,
            slots,
            misspellings,
            filler: strings(&[
                "{pt} seen today for {reason}",
                "vital signs are {vs}",
                "follow up in {n} weeks",
                "{pt} reports {symptom}",
                "medications reviewed with the {family}",
                "drinks {drink} {freq}",
                "works as a {job}",
                "lives with {family}",
            ]),
            filler_range: (1, 3),
        }
    }

    /// Radiology snippets for the proximal femur fracture task (labels
    /// `fracture` / `negative`).
    pub fn fracture() -> Self {
        let slots = slot_map(&[
            ("mod", &["fracture", "fx", "fractures"]),
            ("hip", &["femoral neck", "intertrochanteric", "subcapital", "greater trochanter", "intracapsular"]),
            ("side", &["right", "left"]),
            ("site", &["wrist", "ankle", "clavicle", "rib", "humerus", "radius"]),
            ("severity", &["acute", "nondisplaced", "comminuted", "healing", "subacute"]),
            ("device", &["cannulated screw", "pin", "intramedullary nail", "dynamic hip screw"]),
            ("n", &["2", "3", "4", "6", "8"]),
            ("study", &["xr pelvis", "ct abdomen", "mri lumbar spine", "xr chest", "dexa scan"]),
            ("view", &["two views", "one view", "ap and lateral views"]),
            ("finding", &["mild degenerative change", "no effusion", "osteopenia", "vascular calcification", "normal alignment"]),
            ("pt", &["patient", "she", "he"]),
        ]);
        let misspellings = slot_map(&[
            ("fracture", &["fractrue", "fracure"]),
            ("fractures", &["fractrues"]),
            ("fx", &["fxx"]),
            ("neck", &["nek", "neckk"]),
            ("intertrochanteric", &["intertrochantric", "introchanteric"]),
            ("subcapital", &["subcaptal", "subcapitol"]),
            ("trochanter", &["trochantr", "trochanteer"]),
            ("intracapsular", &["intracapslar", "intracapsulr"]),
        ]);
        let classes = vec![
            ClassTemplates {
                label: "fracture".into(),
                templates: strings(&[
                    "{severity} {mod} of the {side} {hip}",
                    "{side} {hip} {mod} is seen",
                    "impression: {severity} {side} {hip} {mod}",
                    "findings consistent with {mod} of the {side} {hip} after a fall",
                    "{device} fixation of the {side} {hip} {mod}",
                ]),
                split_templates: strings(&[
                    "indications: {side} femur {mod}. {device} fixation of the {side} {hip}",
                    "history of fall with {severity} {mod}. imaging of the {side} {hip} performed",
                    "impression: {severity} {mod}. location is the {side} {hip}",
                ]),
                trap_templates: Vec::new(),
            },
            ClassTemplates {
                label: "negative".into(),
                templates: strings(&[
                    "{severity} {mod} of the {side} {site}",
                    "{side} {site} {mod} treated with a cast",
                    "{device} fixation across the proximal {side} {hip}",
                    "the {side} {hip} is intact",
                    "imaging of the {side} {hip} performed",
                    "location is the {side} {hip}",
                    "indications: {side} {site} pain",
                    "no acute abnormality",
                ]),
                split_templates: Vec::new(),
                trap_templates: strings(&["indications: {mod} vertebra cervical closed"]),
            },
        ];
        Self {
            name: "fracture".into(),
            classes,
            slots,
            misspellings,
            filler: strings(&[
                "exam: {study} {view}",
                "comparison with prior study from {n} months ago",
                "there is {finding}",
                "{pt} reports pain after a fall",
                "soft tissues are unremarkable",
                "bones are diffusely {finding}",
                "clinical correlation is recommended",
                "follow up in {n} weeks",
            ]),
            filler_range: (1, 3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::{shipped, RuleSet};

    fn cfg(bank: TemplateBank, n: usize, seed: u64) -> SynthConfig {
        SynthConfig::new(bank, n, seed)
    }

    #[test]
    fn same_seed_same_corpus_different_seed_differs() {
        let mut c = cfg(TemplateBank::fracture(), 300, 1);
        c.perturbations = PerturbationRates { misspell: 0.1, split: 0.1, trap: 0.05 };
        let a = synth_generate(&c).unwrap();
        let b = synth_generate(&c).unwrap();
        assert_eq!(a, b);
        c.seed = 2;
        assert_ne!(a, synth_generate(&c).unwrap());
    }

    #[test]
    fn single_class_prior() {
        let mut c = cfg(TemplateBank::smoking(), 200, 3);
        c.class_priors = vec![("smoker".into(), 1.0), ("non-smoker".into(), 0.0)];
        let out = synth_generate(&c).unwrap();
        assert!(out.documents.iter().all(|d| d.gold.as_deref() == Some("smoker")));
    }

    #[test]
    fn validation_errors() {
        let mut c = cfg(TemplateBank::smoking(), 10, 0);
        c.template_bank.classes[0].templates.clear();
        assert!(matches!(synth_generate(&c), Err(Error::InvalidConfig(_))));

        let mut c = cfg(TemplateBank::smoking(), 10, 0);
        c.class_priors[0].1 = 0.7;
        assert!(synth_generate(&c).is_err());

        let mut c = cfg(TemplateBank::smoking(), 10, 0);
        c.perturbations.split = 1.5;
        assert!(synth_generate(&c).is_err());
    }

    #[test]
    fn misspell_rate_matches_binomial() {
        // Every fracture-class template has a misspellable word, so the count
        // of misspelled documents is Binomial(n, rate).
        let n = 10_000;
        let rate = 0.05;
        let mut c = cfg(TemplateBank::fracture(), n, 11);
        c.class_priors = vec![("fracture".into(), 1.0), ("negative".into(), 0.0)];
        c.perturbations.misspell = rate;
        let out = synth_generate(&c).unwrap();
        let k = out
            .manifest
            .iter()
            .filter(|m| m.perturbation == Perturbation::MisspelledKeyword)
            .count() as f64;
        let mean = n as f64 * rate;
        let sd = (n as f64 * rate * (1.0 - rate)).sqrt();
        assert!((k - mean).abs() <= 3.0 * sd, "k={k} mean={mean} sd={sd}");
    }

    #[test]
    fn class_frequencies_track_priors() {
        let mut c = cfg(TemplateBank::smoking(), 5000, 5);
        c.class_priors = vec![("smoker".into(), 0.3), ("non-smoker".into(), 0.7)];
        let out = synth_generate(&c).unwrap();
        let k = out.documents.iter().filter(|d| d.gold.as_deref() == Some("smoker")).count() as f64;
        let sd = (5000.0 * 0.3 * 0.7f64).sqrt();
        assert!((k - 1500.0).abs() <= 4.0 * sd);
    }

    #[test]
    fn perturbations_defeat_the_shipped_rules() {
        let rules = RuleSet::parse(shipped::FRACTURE).unwrap();
        let mut c = cfg(TemplateBank::fracture(), 2000, 9);
        c.perturbations = PerturbationRates { misspell: 0.2, split: 0.2, trap: 0.1 };
        let out = synth_generate(&c).unwrap();
        let mut seen = BTreeMap::new();
        for m in &out.manifest {
            let weak = rules.apply(&m.id, &m.text).label;
            *seen.entry(m.perturbation.as_str()).or_insert(0) += 1;
            match m.perturbation {
                Perturbation::None => assert_eq!(weak.as_str(), m.gold, "{}", m.text),
                Perturbation::CrossSentenceSplit => {
                    assert_eq!(m.gold, "fracture");
                    assert_eq!(weak.as_str(), "negative", "{}", m.text);
                }
                Perturbation::NegationScopeTrap => {
                    assert_eq!(m.gold, "negative");
                    assert_eq!(weak.as_str(), "fracture", "{}", m.text);
                }
                Perturbation::MisspelledKeyword => {
                    assert_eq!(weak.as_str(), "negative", "{}", m.text)
                }
            }
        }
        assert_eq!(seen.len(), 4);
    }

    #[test]
    fn smoking_bank_agrees_with_rules_when_clean() {
        let rules = RuleSet::parse(shipped::SMOKING).unwrap();
        let mut c = cfg(TemplateBank::smoking(), 2000, 4);
        c.perturbations = PerturbationRates { misspell: 0.2, split: 0.0, trap: 0.1 };
        let out = synth_generate(&c).unwrap();
        for m in &out.manifest {
            let weak = rules.apply(&m.id, &m.text).label;
            match m.perturbation {
                Perturbation::None => assert_eq!(weak.as_str(), m.gold, "{}", m.text),
                Perturbation::NegationScopeTrap => {
                    assert_eq!(m.gold, "smoker");
                    assert_eq!(weak.as_str(), "non-smoker", "{}", m.text);
                }
                Perturbation::MisspelledKeyword => {
                    assert_eq!(weak.as_str(), "non-smoker", "{}", m.text)
                }
                Perturbation::CrossSentenceSplit => unreachable!("smoking bank has no split templates"),
            }
        }
    }

    #[test]
    fn misspellings_reuse_canonical_contexts() {
        let mut c = cfg(TemplateBank::fracture(), 500, 2);
        c.perturbations.misspell = 1.0;
        let out = synth_generate(&c).unwrap();
        let bank = TemplateBank::fracture();
        let variants: Vec<&String> = bank.misspellings.values().flatten().collect();
        for m in &out.manifest {
            if m.perturbation == Perturbation::MisspelledKeyword {
                let lower = m.text.to_lowercase();
                assert!(variants.iter().any(|v| lower.split(|c: char| !c.is_alphanumeric()).any(|w| w == v.as_str())));
            }
        }
    }
}
