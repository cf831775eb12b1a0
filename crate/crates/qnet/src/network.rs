//! Layered network IR, exact and floating-point evaluation, structural
//! validation, and complexity accounting.
//!
//! Biases are not free parameters: a layer may declare that the *previous*
//! layer carries an always-1 constant unit, and bias contributions are
//! ordinary codebook edges from that unit. The constant unit is virtual (it
//! is never materialized as a `Unit`); its source index is the length of the
//! previous layer. It counts toward width only when it actually carries
//! outgoing edges.

use crate::codebook::WeightCodebook;
use crate::rational::{to_f64, Rat};
use num_traits::{Signed, Zero};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// A bundle of parallel edges: `mult` copies of the same codebook weight
/// from one source unit. Each copy counts as one stored weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub src: usize,
    pub weight_idx: usize,
    pub mult: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub activation: Activation,
    pub incoming: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub units: Vec<Unit>,
    /// When set, source index `prev_len` refers to an always-1 unit in the
    /// previous layer (bias edges).
    pub const_in_prev: bool,
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} components, network expects {want}")]
    InputDim { want: usize, got: usize },
    #[error("non-finite input component at index {0}")]
    NonFinite(usize),
    #[error("input component {index} outside declared domain")]
    OutOfDomain { index: usize },
    #[error("network has {got} outputs, expected {want}")]
    OutputDim { want: usize, got: usize },
    #[error("malformed network: {0}")]
    Malformed(String),
    #[error("serial composition: output dim {out} != input dim {inp}")]
    SerialDims { out: usize, inp: usize },
    #[error("composition requires identical codebooks")]
    CodebookMismatch,
    #[error("parallel composition requires equal depths ({0} vs {1})")]
    DepthMismatch(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Edge references a source index beyond the previous layer.
    Layering { layer: usize, unit: usize, src: usize },
    /// Edge references the constant slot but the layer does not declare one.
    MissingConstUnit { layer: usize, unit: usize },
    /// Edge weight index outside the codebook.
    CodebookIndex { layer: usize, unit: usize, weight_idx: usize },
    /// Edge with multiplicity zero.
    ZeroMultiplicity { layer: usize, unit: usize },
    /// Identity activation in a hidden (non-final) layer.
    HiddenIdentity { layer: usize, unit: usize },
    /// Network with no layers or an empty layer.
    EmptyLayer { layer: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    /// Number of weighted layers (input layer excluded).
    pub depth: usize,
    /// Max units in any layer, counting constant units that carry edges.
    pub max_width: usize,
    /// Sum of edge multiplicities (parallel copies each count once).
    pub weight_count: u64,
    /// `weight_count * ceil(log2 lambda)`.
    pub memory_bits: u64,
    /// Optional bound values attached by synthesizers.
    pub predicted: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedNetwork {
    pub codebook: WeightCodebook,
    pub layers: Vec<Layer>,
    pub input_dim: usize,
    /// Declared per-component input interval, checked only by `eval_strict`.
    pub domain: Option<(Rat, Rat)>,
}

impl QuantizedNetwork {
    pub fn new(codebook: WeightCodebook, input_dim: usize) -> Self {
        Self {
            codebook,
            layers: Vec::new(),
            input_dim,
            domain: None,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim, |l| l.units.len())
    }

    fn prev_len(&self, layer_idx: usize) -> usize {
        if layer_idx == 0 {
            self.input_dim
        } else {
            self.layers[layer_idx - 1].units.len()
        }
    }

    /// Exact forward pass; returns all output-layer values.
    pub fn eval_vec(&self, x: &[Rat]) -> Result<Vec<Rat>, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::InputDim {
                want: self.input_dim,
                got: x.len(),
            });
        }
        let one = Rat::from_integer(1.into());
        let mut cur: Vec<Rat> = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let prev_len = cur.len();
            let mut next = Vec::with_capacity(layer.units.len());
            for unit in &layer.units {
                let mut acc = Rat::zero();
                for e in &unit.incoming {
                    let v = if e.src < prev_len {
                        &cur[e.src]
                    } else if e.src == prev_len && layer.const_in_prev {
                        &one
                    } else {
                        return Err(NetError::Malformed(format!(
                            "layer {li}: edge source {} out of range",
                            e.src
                        )));
                    };
                    let w = self.codebook.value(e.weight_idx).ok_or_else(|| {
                        NetError::Malformed(format!(
                            "layer {li}: weight index {} out of range",
                            e.weight_idx
                        ))
                    })?;
                    acc += v * w * Rat::from_integer(e.mult.into());
                }
                next.push(match unit.activation {
                    Activation::Relu => {
                        if acc.is_negative() {
                            Rat::zero()
                        } else {
                            acc
                        }
                    }
                    Activation::Identity => acc,
                });
            }
            cur = next;
        }
        Ok(cur)
    }

    /// Exact forward pass of a single-output network.
    pub fn eval(&self, x: &[Rat]) -> Result<Rat, NetError> {
        let out = self.eval_vec(x)?;
        if out.len() != 1 {
            return Err(NetError::OutputDim {
                want: 1,
                got: out.len(),
            });
        }
        Ok(out.into_iter().next().unwrap())
    }

    /// Like `eval`, but also enforces the declared input domain.
    pub fn eval_strict(&self, x: &[Rat]) -> Result<Rat, NetError> {
        if let Some((lo, hi)) = &self.domain {
            for (i, v) in x.iter().enumerate() {
                if v < lo || v > hi {
                    return Err(NetError::OutOfDomain { index: i });
                }
            }
        }
        self.eval(x)
    }

    /// Floating-point forward pass for large grid scans.
    pub fn eval_f64_vec(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::InputDim {
                want: self.input_dim,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(NetError::NonFinite(i));
        }
        let weights: Vec<f64> = self.codebook.values().iter().map(to_f64).collect();
        let mut cur: Vec<f64> = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let prev_len = cur.len();
            let mut next = Vec::with_capacity(layer.units.len());
            for unit in &layer.units {
                let mut acc = 0.0;
                for e in &unit.incoming {
                    let v = if e.src < prev_len {
                        cur[e.src]
                    } else if e.src == prev_len && layer.const_in_prev {
                        1.0
                    } else {
                        return Err(NetError::Malformed(format!(
                            "layer {li}: edge source {} out of range",
                            e.src
                        )));
                    };
                    let w = *weights.get(e.weight_idx).ok_or_else(|| {
                        NetError::Malformed(format!(
                            "layer {li}: weight index {} out of range",
                            e.weight_idx
                        ))
                    })?;
                    acc += v * w * e.mult as f64;
                }
                next.push(match unit.activation {
                    Activation::Relu => acc.max(0.0),
                    Activation::Identity => acc,
                });
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn eval_f64(&self, x: &[f64]) -> Result<f64, NetError> {
        let out = self.eval_f64_vec(x)?;
        if out.len() != 1 {
            return Err(NetError::OutputDim {
                want: 1,
                got: out.len(),
            });
        }
        Ok(out[0])
    }

    /// Structural checks. Empty result means every invariant holds.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.layers.is_empty() {
            out.push(Violation::EmptyLayer { layer: 0 });
            return out;
        }
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.units.is_empty() {
                out.push(Violation::EmptyLayer { layer: li });
            }
            let prev_len = self.prev_len(li);
            for (ui, unit) in layer.units.iter().enumerate() {
                if li < last && unit.activation == Activation::Identity {
                    out.push(Violation::HiddenIdentity { layer: li, unit: ui });
                }
                for e in &unit.incoming {
                    if e.src > prev_len || (e.src == prev_len && !layer.const_in_prev) {
                        if e.src == prev_len {
                            out.push(Violation::MissingConstUnit { layer: li, unit: ui });
                        } else {
                            out.push(Violation::Layering {
                                layer: li,
                                unit: ui,
                                src: e.src,
                            });
                        }
                    }
                    if e.weight_idx >= self.codebook.lambda() {
                        out.push(Violation::CodebookIndex {
                            layer: li,
                            unit: ui,
                            weight_idx: e.weight_idx,
                        });
                    }
                    if e.mult == 0 {
                        out.push(Violation::ZeroMultiplicity { layer: li, unit: ui });
                    }
                }
            }
        }
        out
    }

    pub fn complexity(&self) -> ComplexityReport {
        let mut weight_count: u64 = 0;
        for layer in &self.layers {
            for unit in &layer.units {
                for e in &unit.incoming {
                    weight_count += e.mult;
                }
            }
        }
        // Width per layer (input layer included); the previous layer's
        // constant unit adds one when the following layer draws edges from it.
        let mut widths = vec![self.input_dim];
        widths.extend(self.layers.iter().map(|l| l.units.len()));
        for (li, layer) in self.layers.iter().enumerate() {
            if layer.const_in_prev {
                let prev_len = self.prev_len(li);
                let used = layer
                    .units
                    .iter()
                    .any(|u| u.incoming.iter().any(|e| e.src == prev_len));
                if used {
                    widths[li] += 1;
                }
            }
        }
        ComplexityReport {
            depth: self.layers.len(),
            max_width: widths.into_iter().max().unwrap_or(0),
            weight_count,
            memory_bits: weight_count * self.codebook.bit_width() as u64,
            predicted: BTreeMap::new(),
        }
    }

    /// Appends a layer after checking its edge references.
    pub fn append_layer(&mut self, layer: Layer) -> Result<(), NetError> {
        let prev_len = self.output_dim();
        let bound = prev_len + layer.const_in_prev as usize;
        for unit in &layer.units {
            for e in &unit.incoming {
                if e.src >= bound {
                    return Err(NetError::Malformed(format!(
                        "appended layer: source {} out of range (prev width {prev_len})",
                        e.src
                    )));
                }
                if e.weight_idx >= self.codebook.lambda() {
                    return Err(NetError::Malformed(format!(
                        "appended layer: weight index {} out of range",
                        e.weight_idx
                    )));
                }
            }
        }
        self.layers.push(layer);
        Ok(())
    }

    /// Feeds `self`'s outputs into `other`. Requires identical codebooks.
    ///
    /// Trailing identity units of `self` are retagged as ReLU so the joint
    /// network stays well-formed; callers must ensure those outputs are
    /// nonnegative (true for every construction in this crate that gets
    /// composed serially).
    pub fn compose_serial(&self, other: &QuantizedNetwork) -> Result<QuantizedNetwork, NetError> {
        if self.codebook != other.codebook {
            return Err(NetError::CodebookMismatch);
        }
        if self.output_dim() != other.input_dim {
            return Err(NetError::SerialDims {
                out: self.output_dim(),
                inp: other.input_dim,
            });
        }
        let mut layers = self.layers.clone();
        if let Some(last) = layers.last_mut() {
            for u in &mut last.units {
                u.activation = Activation::Relu;
            }
        }
        layers.extend(other.layers.iter().cloned());
        Ok(QuantizedNetwork {
            codebook: self.codebook.clone(),
            layers,
            input_dim: self.input_dim,
            domain: self.domain.clone(),
        })
    }

    /// Stacks networks side by side on disjoint input slices. All parts must
    /// share one codebook and one depth; outputs are concatenated.
    pub fn compose_parallel(parts: &[QuantizedNetwork]) -> Result<QuantizedNetwork, NetError> {
        let first = parts
            .first()
            .ok_or_else(|| NetError::Malformed("parallel of zero networks".into()))?;
        let depth = first.layers.len();
        for p in parts.iter().skip(1) {
            if p.codebook != first.codebook {
                return Err(NetError::CodebookMismatch);
            }
            if p.layers.len() != depth {
                return Err(NetError::DepthMismatch(depth, p.layers.len()));
            }
        }
        let input_dim: usize = parts.iter().map(|p| p.input_dim).sum();
        let mut layers: Vec<Layer> = Vec::with_capacity(depth);
        for li in 0..depth {
            // A part's constant slot sits at its own prev_len; after
            // concatenation all parts that use a constant share the combined
            // slot at the end of the joint previous layer.
            let any_const = parts.iter().any(|p| p.layers[li].const_in_prev);
            let prev_lens: Vec<usize> = parts.iter().map(|p| p.prev_len(li)).collect();
            let joint_prev: usize = prev_lens.iter().sum();
            let mut units = Vec::new();
            let mut offset = 0usize;
            for (pi, p) in parts.iter().enumerate() {
                for unit in &p.layers[li].units {
                    let mut u = unit.clone();
                    for e in &mut u.incoming {
                        e.src = if e.src == prev_lens[pi] && p.layers[li].const_in_prev {
                            joint_prev
                        } else {
                            e.src + offset
                        };
                    }
                    units.push(u);
                }
                offset += prev_lens[pi];
            }
            layers.push(Layer {
                units,
                const_in_prev: any_const,
            });
        }
        Ok(QuantizedNetwork {
            codebook: first.codebook.clone(),
            layers,
            input_dim,
            domain: first.domain.clone(),
        })
    }
}
