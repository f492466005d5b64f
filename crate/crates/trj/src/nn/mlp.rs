//! Shallow MLPs: ReLU on hidden layers, linear final layer.

use super::params::{LeasedParams, ParamSet};
use super::tape::{NodeId, Tape};
use crate::error::Result;
use ndarray::Array2;
use rand::Rng;

/// Layer widths from input to output; every layer but the last is followed
/// by ReLU.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
}

impl MlpSpec {
    pub fn new(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        MlpSpec {
            widths: widths.to_vec(),
        }
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// A named MLP whose weights live in a [`ParamSet`] under
/// `{name}.w{i}` / `{name}.b{i}`.
#[derive(Debug, Clone)]
pub struct Mlp {
    name: String,
    spec: MlpSpec,
}

impl Mlp {
    pub fn new(name: impl Into<String>, spec: MlpSpec) -> Self {
        Mlp {
            name: name.into(),
            spec,
        }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Kaiming-uniform weights for the ReLU layers; the final layer is
    /// zero-initialized when `zero_final` is set, so a fresh net is the
    /// zero map and residual wiring starts from the identity.
    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R, zero_final: bool) {
        let last = self.spec.layer_count() - 1;
        for layer in 0..self.spec.layer_count() {
            let (fan_in, fan_out) = (self.spec.widths[layer], self.spec.widths[layer + 1]);
            let w = if layer == last && zero_final {
                Array2::zeros((fan_in, fan_out))
            } else {
                let bound = (6.0 / fan_in as f64).sqrt();
                Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound))
            };
            params.insert(format!("{}.w{layer}", self.name), w);
            params.insert(format!("{}.b{layer}", self.name), Array2::zeros((1, fan_out)));
        }
    }

    /// Forward over a batch of rows.
    pub fn forward(&self, tape: &mut Tape, lease: &LeasedParams, input: NodeId) -> Result<NodeId> {
        let got = tape.value(input).ncols();
        if got != self.spec.input_width() {
            return Err(crate::error::Error::shape(
                format!("{} input", self.name),
                format!("width {}", self.spec.input_width()),
                format!("width {got}"),
            ));
        }
        let mut x = input;
        let last = self.spec.layer_count() - 1;
        for layer in 0..self.spec.layer_count() {
            let w = lease.node(&format!("{}.w{layer}", self.name));
            let b = lease.node(&format!("{}.b{layer}", self.name));
            let lin = tape.matmul(x, w)?;
            x = tape.add_row(lin, b)?;
            if layer != last {
                x = tape.relu(x);
            }
        }
        Ok(x)
    }
}
