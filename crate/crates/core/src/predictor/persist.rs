use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::lstm::{Layout, GATES};
use super::{Normalization, PredictorKind, PredictorModel};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

const GATE_NAMES: [&str; GATES] = ["input", "forget", "output", "candidate"];

/// Per-gate weight blocks; matrices are row-major.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LstmWeights {
    /// H×1 input map per gate.
    input_weights: BTreeMap<String, Vec<f64>>,
    /// H×H recurrent map per gate.
    recurrent_weights: BTreeMap<String, Vec<f64>>,
    biases: BTreeMap<String, Vec<f64>>,
    /// N×H.
    fc_weights: Vec<f64>,
    fc_bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    kind: PredictorKind,
    m: usize,
    n: usize,
    hidden: usize,
    norm: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<LstmWeights>,
}

pub fn model_to_json(model: &PredictorModel) -> Result<String> {
    model.validate()?;
    let weights = (model.kind == PredictorKind::Lstm).then(|| {
        let l = model.layout();
        let h = model.hidden;
        let p = &model.params;
        let per_gate = |start: usize, size: usize| {
            GATE_NAMES
                .iter()
                .enumerate()
                .map(|(g, name)| (name.to_string(), p[start + g * size..start + (g + 1) * size].to_vec()))
                .collect()
        };
        LstmWeights {
            input_weights: per_gate(l.w_x(), h),
            recurrent_weights: per_gate(l.w_h(), h * h),
            biases: per_gate(l.bias(), h),
            fc_weights: p[l.fc_w()..l.fc_b()].to_vec(),
            fc_bias: p[l.fc_b()..].to_vec(),
        }
    });
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        kind: model.kind,
        m: model.m,
        n: model.n,
        hidden: model.hidden,
        norm: model.norm,
        weights,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<PredictorModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Model(format!(
            "unsupported model format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let params = match (&file.kind, file.weights) {
        (PredictorKind::Lstm, Some(w)) => {
            let l = Layout::new(file.hidden, file.n);
            let mut p = Vec::with_capacity(l.len());
            for (block, size) in [(&w.input_weights, file.hidden), (&w.recurrent_weights, file.hidden * file.hidden)] {
                push_gates(&mut p, block, size)?;
            }
            push_gates(&mut p, &w.biases, file.hidden)?;
            p.extend_from_slice(&w.fc_weights);
            p.extend_from_slice(&w.fc_bias);
            p
        }
        (PredictorKind::Lstm, None) => return Err(Error::Model("LSTM model file has no weights".into())),
        (_, Some(_)) => return Err(Error::Model("baseline model file must not carry weights".into())),
        (_, None) => Vec::new(),
    };
    let model = PredictorModel { kind: file.kind, m: file.m, n: file.n, hidden: file.hidden, norm: file.norm, params };
    model.validate()?;
    Ok(model)
}

fn push_gates(p: &mut Vec<f64>, block: &BTreeMap<String, Vec<f64>>, size: usize) -> Result<()> {
    if block.len() != GATES {
        return Err(Error::Model(format!("expected {GATES} gate blocks, got {}", block.len())));
    }
    for name in GATE_NAMES {
        let v = block.get(name).ok_or_else(|| Error::Model(format!("missing gate `{name}`")))?;
        if v.len() != size {
            return Err(Error::Model(format!("gate `{name}` has {} values, expected {size}", v.len())));
        }
        p.extend_from_slice(v);
    }
    Ok(())
}

pub fn save_model(model: &PredictorModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PredictorModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
