//! Binary classifiers trained on weak labels: linear SVM, random forest and
//! text CNN, plus the shared prediction type and artifact format.

pub mod cnn;
pub mod rf;
pub mod svm;

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenizedDocument;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, Featurizer};
use crate::rules::ClassLabel;

pub use cnn::{grad_check, train_cnn, CnnHyper, CnnModel, GradCheckOptions, GradFault};
pub use rf::{train_rf, RfHyper, RfModel};
pub use svm::{train_svm, SvmHyper, SvmModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: ClassLabel,
    /// One score per class, in the model's class order.
    pub scores: Vec<f64>,
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// The two classes present in `labels`, sorted.
pub(crate) fn binary_classes(labels: &[ClassLabel]) -> Result<[ClassLabel; 2]> {
    let mut distinct: Vec<&ClassLabel> = labels.iter().collect();
    distinct.sort();
    distinct.dedup();
    match distinct.as_slice() {
        [] => Err(Error::InvalidInput("no training examples".into())),
        [only] => Err(Error::InvalidInput(format!(
            "training labels contain a single class `{only}`; two are required"
        ))),
        [a, b] => Ok([(*a).clone(), (*b).clone()]),
        more => Err(Error::InvalidInput(format!(
            "training labels contain {} classes; only binary classification is supported",
            more.len()
        ))),
    }
}

pub(crate) fn encode(labels: &[ClassLabel], classes: &[ClassLabel; 2]) -> Vec<usize> {
    labels.iter().map(|l| usize::from(*l == classes[1])).collect()
}

pub(crate) fn check_lengths(n_x: usize, n_y: usize) -> Result<()> {
    if n_x != n_y {
        return Err(Error::InvalidInput(format!("{n_x} instances but {n_y} labels")));
    }
    Ok(())
}

pub(crate) fn common_dim(features: &[FeatureVector]) -> Result<usize> {
    let dim = features.first().map_or(0, FeatureVector::dim);
    if let Some(bad) = features.iter().position(|f| f.dim() != dim) {
        return Err(Error::InvalidInput(format!(
            "feature vector {bad} has dimension {}, expected {dim}",
            features[bad].dim()
        )));
    }
    for f in features {
        f.validate()?;
    }
    Ok(dim)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Svm(SvmModel),
    Rf(RfModel),
    Cnn(CnnModel),
}

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Svm(_) => "svm",
            Model::Rf(_) => "rf",
            Model::Cnn(_) => "cnn",
        }
    }

    pub fn classes(&self) -> &[ClassLabel; 2] {
        match self {
            Model::Svm(m) => &m.classes,
            Model::Rf(m) => &m.classes,
            Model::Cnn(m) => &m.classes,
        }
    }
}

/// A trained model together with the featurizer it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelArtifact {
    pub model: Model,
    pub featurizer: Featurizer,
}

#[derive(Serialize, Deserialize)]
struct Body<M> {
    featurizer: Featurizer,
    model: M,
}

const MAGIC: &str = "DSWE-MODEL";
const VERSION: &str = "v1";

impl ModelArtifact {
    pub fn new(model: Model, featurizer: Featurizer) -> Result<Self> {
        let cnn = matches!(model, Model::Cnn(_));
        let tokens = matches!(featurizer, Featurizer::Tokens);
        if cnn != tokens {
            return Err(Error::InvalidConfig(format!(
                "model `{}` cannot consume `{}` features: the CNN reads token sequences, SVM and RF read vectors",
                model.kind(),
                featurizer.name()
            )));
        }
        Ok(Self { model, featurizer })
    }

    pub fn predict(&self, doc: &TokenizedDocument) -> Result<Prediction> {
        match (&self.model, self.featurizer.vector(doc)) {
            (Model::Cnn(m), None) => Ok(m.predict(doc)),
            (Model::Svm(m), Some(x)) => m.predict(&x),
            (Model::Rf(m), Some(x)) => m.predict(&x),
            _ => Err(Error::ModelFormat("model and featurizer kinds disagree".into())),
        }
    }

    /// Header line `DSWE-MODEL v1 <kind>`, then the JSON body.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{MAGIC} {VERSION} {}", self.model.kind())?;
        let featurizer = self.featurizer.clone();
        match &self.model {
            Model::Svm(m) => serde_json::to_writer(&mut out, &Body { featurizer, model: m })?,
            Model::Rf(m) => serde_json::to_writer(&mut out, &Body { featurizer, model: m })?,
            Model::Cnn(m) => serde_json::to_writer(&mut out, &Body { featurizer, model: m })?,
        }
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let kind = match fields.as_slice() {
            [MAGIC, VERSION, kind] => *kind,
            [MAGIC, v, _] => return Err(Error::ModelFormat(format!("unsupported artifact version `{v}`"))),
            _ => return Err(Error::ModelFormat(format!("{}: not a model artifact", path.display()))),
        };
        fn body<M: DeserializeOwned>(r: impl BufRead) -> Result<(Featurizer, M)> {
            let b: Body<M> = serde_json::from_reader(r)?;
            Ok((b.featurizer, b.model))
        }
        let (featurizer, model) = match kind {
            "svm" => body::<SvmModel>(reader).map(|(f, m)| (f, Model::Svm(m)))?,
            "rf" => body::<RfModel>(reader).map(|(f, m)| (f, Model::Rf(m)))?,
            "cnn" => body::<CnnModel>(reader).map(|(f, m)| (f, Model::Cnn(m)))?,
            other => return Err(Error::ModelFormat(format!("unknown model kind `{other}`"))),
        };
        let artifact = Self::new(model, featurizer)?;
        artifact.validate()?;
        Ok(artifact)
    }

    fn validate(&self) -> Result<()> {
        match &self.model {
            Model::Svm(m) => m.validate(),
            Model::Rf(m) => m.validate(),
            Model::Cnn(m) => m.validate(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.5, 0.5, 0.7]), 2);
        assert_eq!(argmax(&[1.0, -1.0]), 0);
    }

    #[test]
    fn class_extraction() {
        let l = |s: &str| ClassLabel::from(s);
        assert_eq!(binary_classes(&[l("b"), l("a"), l("b")]).unwrap(), [l("a"), l("b")]);
        assert!(binary_classes(&[l("a"), l("a")]).is_err());
        assert!(binary_classes(&[l("a"), l("b"), l("c")]).is_err());
        assert_eq!(encode(&[l("b"), l("a")], &[l("a"), l("b")]), [1, 0]);
    }

    fn corpus() -> (Vec<TokenizedDocument>, Vec<ClassLabel>) {
        let texts = ["smoker yes", "non smoker", "smokes daily", "never smoked", "cigs", "denies"];
        let docs = texts.iter().map(|t| TokenizedDocument::from_text("d", t)).collect();
        let labels = ["s", "n", "s", "n", "s", "n"].iter().map(|&l| ClassLabel::from(l)).collect();
        (docs, labels)
    }

    #[test]
    fn artifacts_round_trip() {
        let (docs, labels) = corpus();
        let stats = crate::features::fit_corpus_stats(&docs).unwrap();
        let featurizer = Featurizer::Tfidf { stats };
        let x: Vec<FeatureVector> = docs.iter().map(|d| featurizer.vector(d).unwrap()).collect();
        let table = crate::embeddings::EmbeddingTable::from_rows(
            3,
            [("smoker", vec![0.1, 0.2, 0.3]), ("never", vec![-0.3, 0.1, 0.0]), ("cigs", vec![0.5, -0.5, 0.2])],
        )
        .unwrap();
        let cnn_hyper = CnnHyper { filters: 2, max_len: 4, epochs: 2, ..Default::default() };
        let artifacts = [
            ModelArtifact::new(Model::Svm(train_svm(&x, &labels, &SvmHyper::default()).unwrap()), featurizer.clone()).unwrap(),
            ModelArtifact::new(
                Model::Rf(train_rf(&x, &labels, &RfHyper { n_trees: 3, ..Default::default() }).unwrap()),
                featurizer.clone(),
            )
            .unwrap(),
            ModelArtifact::new(Model::Cnn(train_cnn(&docs, &labels, &table, &cnn_hyper).unwrap()), Featurizer::Tokens).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        for a in &artifacts {
            let path = dir.path().join(a.model.kind());
            a.save(&path).unwrap();
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.starts_with(&format!("DSWE-MODEL v1 {}\n", a.model.kind())));
            let back = ModelArtifact::load(&path).unwrap();
            assert_eq!(&back, a);
            for d in &docs {
                assert_eq!(back.predict(d).unwrap(), a.predict(d).unwrap());
            }
        }
        std::fs::write(dir.path().join("bad"), "DSWE-MODEL v2 svm\n{}").unwrap();
        assert!(ModelArtifact::load(&dir.path().join("bad")).is_err());
    }

    #[test]
    fn cnn_requires_tokens() {
        let (docs, labels) = corpus();
        let table = crate::embeddings::EmbeddingTable::from_rows(2, [("cigs", vec![1.0, 0.0])]).unwrap();
        let cnn = train_cnn(&docs, &labels, &table, &CnnHyper { filters: 2, max_len: 4, epochs: 1, ..Default::default() }).unwrap();
        let stats = crate::features::fit_corpus_stats(&docs).unwrap();
        assert!(ModelArtifact::new(Model::Cnn(cnn), Featurizer::Tfidf { stats }).is_err());
    }
}
