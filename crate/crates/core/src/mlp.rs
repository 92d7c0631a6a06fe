//! Fully connected feed-forward blocks.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::params::{Init, ParamId, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!("MLP dimensions must be positive: {self:?}")));
        }
        if self.hidden_activation == Activation::Identity && !self.hidden_dims.is_empty() {
            return Err(Error::Config("hidden activation must be relu or tanh".into()));
        }
        if self.output_activation == Activation::Relu {
            return Err(Error::Config("output activation must be identity or tanh".into()));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

/// An [`MlpSpec`] bound to parameters in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Mlp {
    name: String,
    spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `{prefix}.{layer}.weight` and `{prefix}.{layer}.bias` for
    /// every layer.
    pub fn register(store: &mut ParamStore, prefix: &str, spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_dims()
            .into_iter()
            .enumerate()
            .map(|(i, (fan_in, fan_out))| {
                let w = store.add(
                    format!("{prefix}.{i}.weight"),
                    &[fan_out, fan_in],
                    Init::Xavier { fan_in, fan_out },
                );
                let b = store.add(format!("{prefix}.{i}.bias"), &[fan_out], Init::Constant(0.0));
                (w, b)
            })
            .collect();
        Ok(Self { name: prefix.to_string(), spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let got = tape.value(x).len();
        if got != self.spec.input_dim {
            return Err(shape_err(&self.name, &[self.spec.input_dim], &[got]));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let w = tape.param(store, w);
            let b = tape.param(store, b);
            let wx = tape.matvec(w, h)?;
            let pre = tape.add(wx, b)?;
            let act = if i == last { self.spec.output_activation } else { self.spec.hidden_activation };
            h = act.apply(tape, pre);
        }
        Ok(h)
    }
}

/// Applies the MLP registered under `net` to `x`.
pub fn mlp_forward(net: &Mlp, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
    net.forward(tape, store, x)
}
