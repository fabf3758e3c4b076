use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::autodiff::TensorValue;

use super::tableqa::STEPS;
use super::{ClassifierModel, Model, ModelError, ModelKind, TableQaModel, Vocabulary};

const FORMAT: &str = "attriq-model";
const VERSION: u32 = 1;

/// Floats stored as 16-digit hex bit patterns so that a load/save round
/// trip is bit-exact.
#[derive(Debug, Clone, PartialEq)]
struct HexFloats(Vec<f64>);

impl Serialize for HexFloats {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.0.iter().map(|x| format!("{:016x}", x.to_bits())))
    }
}

impl<'de> Deserialize<'de> for HexFloats {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|h| {
                u64::from_str_radix(h, 16)
                    .map(f64::from_bits)
                    .map_err(|_| serde::de::Error::custom(format!("bad hex float {h:?}")))
            })
            .collect::<Result<_, _>>()
            .map(HexFloats)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: HexFloats,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    kind: ModelKind,
    dim: usize,
    vocab: Vocabulary,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    classes: Vec<String>,
    tensors: Vec<NamedTensor>,
}

fn named(name: &str, t: &TensorValue) -> NamedTensor {
    NamedTensor {
        name: name.to_string(),
        shape: t.shape().to_vec(),
        data: HexFloats(t.data().to_vec()),
    }
}

pub fn model_to_json(model: &Model) -> Result<String, ModelError> {
    let (classes, tensors) = match model {
        Model::Classifier(m) => (
            m.classes.clone(),
            vec![named("embedding", &m.embedding), named("output", &m.output)],
        ),
        Model::TableQa(m) => (
            Vec::new(),
            m.named_params().into_iter().map(|(n, t)| named(&n, t)).collect(),
        ),
    };
    let ck = Checkpoint {
        format: FORMAT.into(),
        version: VERSION,
        kind: model.kind(),
        dim: model.dim(),
        vocab: model.vocab().clone(),
        classes,
        tensors,
    };
    Ok(serde_json::to_string_pretty(&ck)? + "\n")
}

pub fn model_from_json(json: &str) -> Result<Model, ModelError> {
    let ck: Checkpoint = serde_json::from_str(json)?;
    if ck.format != FORMAT || ck.version != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    let mut tensors = Vec::with_capacity(ck.tensors.len());
    for t in ck.tensors {
        let v = TensorValue::new(t.shape, t.data.0)
            .map_err(|e| ModelError::Checkpoint(format!("tensor {}: {e}", t.name)))?;
        tensors.push((t.name, v));
    }
    let model = match ck.kind {
        ModelKind::Classifier => {
            let mut m = ClassifierModel::zeros(ck.vocab, ck.classes, ck.dim);
            expect_names(&tensors, &["embedding".into(), "output".into()])?;
            m.set_params(tensors.into_iter().map(|(_, v)| v).collect());
            Model::Classifier(m)
        }
        ModelKind::TableQa => {
            let mut m = TableQaModel::zeros(ck.vocab, ck.dim);
            let names: Vec<String> = m.named_params().into_iter().map(|(n, _)| n).collect();
            debug_assert_eq!(names.len(), 1 + 7 * STEPS);
            expect_names(&tensors, &names)?;
            m.set_params(tensors.into_iter().map(|(_, v)| v).collect());
            Model::TableQa(m)
        }
    };
    model.validate()?;
    Ok(model)
}

fn expect_names(tensors: &[(String, TensorValue)], names: &[String]) -> Result<(), ModelError> {
    let got: Vec<&String> = tensors.iter().map(|(n, _)| n).collect();
    if got.len() != names.len() || got.iter().zip(names).any(|(a, b)| *a != b) {
        return Err(ModelError::Checkpoint(format!("unexpected tensor list {got:?}")));
    }
    Ok(())
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    model_from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_round_trip_bit_exact() {
        let vocab = Vocabulary::from_tokens(["a", "b"]);
        let m = Model::Classifier(ClassifierModel::random(vocab, vec!["x".into(), "y".into()], 3, 9));
        let json = model_to_json(&m).unwrap();
        let back = model_from_json(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(model_to_json(&back).unwrap(), json);
    }

    #[test]
    fn table_round_trip_bit_exact() {
        let mut t = TableQaModel::random(Vocabulary::from_tokens(["a"]), 3, 4);
        t.steps[1].op_bias.data_mut()[0] = 0.1 + 0.2;
        let m = Model::TableQa(t);
        assert_eq!(model_from_json(&model_to_json(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(model_from_json("{}").is_err());
        let m = Model::Classifier(ClassifierModel::zeros(Vocabulary::new(), vec!["x".into()], 2));
        let json = model_to_json(&m).unwrap().replace("attriq-model", "other");
        assert!(matches!(model_from_json(&json), Err(ModelError::Checkpoint(_))));
    }
}
