//! Wire format for networks. Weights travel as codebook indices next to a
//! codebook table of exact rationals ("num/den" strings); floating point
//! never appears on the wire.

use crate::codebook::{QuantMode, WeightCodebook};
use crate::network::{Activation, Edge, Layer, QuantizedNetwork, Unit};
use crate::rational::{format_rat, parse_rat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JsonError {
    #[error("malformed document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
    #[error("bad rational literal {0:?}")]
    BadRational(String),
    #[error("bad codebook: {0}")]
    BadCodebook(String),
    #[error("unknown activation tag {0:?}")]
    BadActivation(String),
    #[error("network fails validation after load: {0} violation(s)")]
    Invalid(usize),
}

#[derive(Serialize, Deserialize)]
struct CodebookDoc {
    mode: QuantMode,
    values: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct UnitDoc {
    act: String,
    /// Triples [source, weight_index, multiplicity].
    r#in: Vec<[u64; 3]>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    #[serde(default, skip_serializing_if = "is_false", rename = "const")]
    const_in_prev: bool,
    units: Vec<UnitDoc>,
}

fn is_false(b: &bool) -> bool {
    !b
}

#[derive(Serialize, Deserialize)]
struct NetDoc {
    schema_version: u32,
    codebook: CodebookDoc,
    layers: Vec<LayerDoc>,
    input_dim: usize,
}

pub fn to_json(net: &QuantizedNetwork) -> Vec<u8> {
    let doc = NetDoc {
        schema_version: SCHEMA_VERSION,
        codebook: CodebookDoc {
            mode: net.codebook.mode(),
            values: net.codebook.values().iter().map(format_rat).collect(),
        },
        layers: net
            .layers
            .iter()
            .map(|l| LayerDoc {
                const_in_prev: l.const_in_prev,
                units: l
                    .units
                    .iter()
                    .map(|u| UnitDoc {
                        act: match u.activation {
                            Activation::Relu => "relu".into(),
                            Activation::Identity => "id".into(),
                        },
                        r#in: u
                            .incoming
                            .iter()
                            .map(|e| [e.src as u64, e.weight_idx as u64, e.mult])
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
        input_dim: net.input_dim,
    };
    serde_json::to_vec_pretty(&doc).expect("serializable")
}

pub fn from_json(bytes: &[u8]) -> Result<QuantizedNetwork, JsonError> {
    let doc: NetDoc = serde_json::from_slice(bytes)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(JsonError::SchemaVersion(doc.schema_version));
    }
    let values = doc
        .codebook
        .values
        .iter()
        .map(|s| parse_rat(s).ok_or_else(|| JsonError::BadRational(s.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let codebook = WeightCodebook::from_parts(doc.codebook.mode, values)
        .map_err(|e| JsonError::BadCodebook(e.to_string()))?;
    let layers = doc
        .layers
        .into_iter()
        .map(|l| {
            let units = l
                .units
                .into_iter()
                .map(|u| {
                    let activation = match u.act.as_str() {
                        "relu" => Activation::Relu,
                        "id" => Activation::Identity,
                        other => return Err(JsonError::BadActivation(other.to_string())),
                    };
                    Ok(Unit {
                        activation,
                        incoming: u
                            .r#in
                            .iter()
                            .map(|&[src, widx, mult]| Edge {
                                src: src as usize,
                                weight_idx: widx as usize,
                                mult,
                            })
                            .collect(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Layer {
                units,
                const_in_prev: l.const_in_prev,
            })
        })
        .collect::<Result<Vec<_>, JsonError>>()?;
    let net = QuantizedNetwork {
        codebook,
        layers,
        input_dim: doc.input_dim,
        domain: None,
    };
    let violations = net.validate();
    if !violations.is_empty() {
        return Err(JsonError::Invalid(violations.len()));
    }
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;

    fn sample_net() -> QuantizedNetwork {
        let cb = WeightCodebook::nonlinear(vec![rat(1, 2), rat(-1, 2)]).unwrap();
        let mut net = QuantizedNetwork::new(cb, 1);
        net.append_layer(Layer {
            units: vec![Unit {
                activation: Activation::Relu,
                incoming: vec![
                    Edge { src: 0, weight_idx: 0, mult: 2 },
                    Edge { src: 1, weight_idx: 1, mult: 1 },
                ],
            }],
            const_in_prev: true,
        })
        .unwrap();
        net.append_layer(Layer {
            units: vec![Unit {
                activation: Activation::Identity,
                incoming: vec![Edge { src: 0, weight_idx: 0, mult: 2 }],
            }],
            const_in_prev: false,
        })
        .unwrap();
        net
    }

    #[test]
    fn round_trip_structural_identity() {
        let net = sample_net();
        let back = from_json(&to_json(&net)).unwrap();
        assert_eq!(back.codebook, net.codebook);
        assert_eq!(back.layers, net.layers);
        assert_eq!(back.input_dim, net.input_dim);
    }

    #[test]
    fn round_trip_eval_identical() {
        let net = sample_net();
        let back = from_json(&to_json(&net)).unwrap();
        for k in 0..=16 {
            let x = rat(k, 16);
            assert_eq!(back.eval(&[x.clone()]).unwrap(), net.eval(&[x]).unwrap());
        }
    }

    #[test]
    fn rejects_out_of_range_weight_index() {
        let mut bytes = to_json(&sample_net());
        let mut doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        doc["layers"][0]["units"][0]["in"][0][1] = serde_json::json!(7);
        bytes = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(from_json(&bytes), Err(JsonError::Invalid(_))));
    }

    #[test]
    fn rejects_garbage_and_bad_version() {
        assert!(from_json(b"not json").is_err());
        let mut doc: serde_json::Value =
            serde_json::from_slice(&to_json(&sample_net())).unwrap();
        doc["schema_version"] = serde_json::json!(99);
        let bytes = serde_json::to_vec(&doc).unwrap();
        assert!(matches!(from_json(&bytes), Err(JsonError::SchemaVersion(99))));
    }
}
