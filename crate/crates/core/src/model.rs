//! The full recurrent network and its ablations.

use serde::{Deserialize, Serialize};

use crate::data::MultimodalSequence;
use crate::error::{Error, Result};
use crate::lsthm::{LsthmCell, LsthmLayer, ModalityConfig};
use crate::mab::{spans, AttentionTrace, Mab, MabConfig};
use crate::mlp::{Activation, Mlp, MlpSpec};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// LSTHM cells + multi-attention block
    #[default]
    Full,
    /// disjoint per-modality LSTMs, no cross-view code
    NoMab,
    /// multi-attention block with every coefficient fixed to 1
    NoAttention,
    /// single LSTM over concatenated inputs
    EfLstm,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoMab, Variant::NoAttention, Variant::EfLstm];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoMab => "no_mab",
            Variant::NoAttention => "no_attention",
            Variant::EfLstm => "ef_lstm",
        }
    }

    /// Whether the variant carries a multi-attention block.
    pub fn has_mab(self) -> bool {
        matches!(self, Variant::Full | Variant::NoAttention)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

impl Task {
    pub fn output_dim(self) -> usize {
        match self {
            Task::Classification { classes } => classes,
            Task::Regression => 1,
        }
    }
}

/// Architecture of one feed-forward network; input and output widths come
/// from where the network sits in the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Hidden widths; `None` means one hidden layer of twice the input width.
    pub hidden: Option<Vec<usize>>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: None, hidden_activation: Activation::Relu, output_activation: Activation::Identity }
    }
}

impl NetConfig {
    pub fn spec(&self, input_dim: usize, output_dim: usize) -> MlpSpec {
        MlpSpec {
            input_dim,
            hidden_dims: self.hidden.clone().unwrap_or_else(|| vec![2 * input_dim]),
            output_dim,
            hidden_activation: self.hidden_activation,
            output_activation: self.output_activation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarnConfig {
    pub modalities: Vec<ModalityConfig>,
    /// number of attentions
    pub k: usize,
    pub task: Task,
    #[serde(default)]
    pub variant: Variant,
    #[serde(default)]
    pub attention: NetConfig,
    #[serde(default)]
    pub reducer: NetConfig,
    #[serde(default)]
    pub generator: NetConfig,
    #[serde(default)]
    pub head: NetConfig,
    #[serde(default)]
    pub seed: u64,
}

impl MarnConfig {
    /// Σ d_mem over modalities.
    pub fn total_mem(&self) -> usize {
        self.modalities.iter().map(|m| m.d_mem).sum()
    }

    pub fn total_input(&self) -> usize {
        self.modalities.iter().map(|m| m.d_in).sum()
    }

    pub fn head_input_dim(&self) -> usize {
        if self.variant.has_mab() {
            2 * self.total_mem()
        } else {
            self.total_mem()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Config("at least one modality required".into()));
        }
        for (i, m) in self.modalities.iter().enumerate() {
            m.validate()?;
            if !m.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::Config(format!("modality name {:?} must be [A-Za-z0-9_-]", m.name)));
            }
            if self.modalities[..i].iter().any(|o| o.name == m.name) {
                return Err(Error::Config(format!("duplicate modality {}", m.name)));
            }
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if let Task::Classification { classes } = self.task {
            if classes < 2 {
                return Err(Error::Config("classification needs at least 2 classes".into()));
            }
        }
        Ok(())
    }
}

/// Tape nodes of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub h: Var,
    pub z: Option<Var>,
    pub prediction: Var,
    pub trace: Option<AttentionTrace>,
}

/// Materialized result of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardResult {
    pub h_t: Tensor,
    /// zeros for variants without a cross-view code
    pub z_t: Tensor,
    /// logits (classification) or a single value (regression)
    pub prediction: Tensor,
    pub trace: Option<AttentionTrace>,
}

#[derive(Debug, Clone)]
pub struct Marn {
    cfg: MarnConfig,
    lsthm: LsthmLayer,
    mab: Option<Mab>,
    head: Mlp,
}

impl Marn {
    /// Builds the model and a parameter store initialized from `cfg.seed`.
    pub fn build(cfg: &MarnConfig) -> Result<(Self, ParamStore)> {
        let (model, mut store) = Self::layout(cfg)?;
        store.initialize(cfg.seed);
        Ok((model, store))
    }

    /// Builds the model with a zero-filled store (the parameter layout).
    pub fn layout(cfg: &MarnConfig) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let d = cfg.total_mem();
        let lsthm = match cfg.variant {
            Variant::EfLstm => LsthmLayer::from_cells(vec![LsthmCell::register(
                &mut store,
                "lsthm.ef",
                "ef",
                cfg.total_input(),
                d,
                None,
            )]),
            v => LsthmLayer::register(&mut store, &cfg.modalities, v.has_mab().then_some(d)),
        };
        let mab = if cfg.variant.has_mab() {
            let k = cfg.k;
            let mab_cfg = MabConfig {
                k,
                spans: spans(cfg.modalities.iter().map(|m| (m.name.as_str(), m.d_mem))),
                attention: (cfg.variant == Variant::Full).then(|| cfg.attention.spec(d, k * d)),
                reducers: cfg.modalities.iter().map(|m| cfg.reducer.spec(k * m.d_mem, m.d_local)).collect(),
                generator: cfg
                    .generator
                    .spec(cfg.modalities.iter().map(|m| m.d_local).sum(), d),
            };
            Some(Mab::register(&mut store, mab_cfg)?)
        } else {
            None
        };
        let head = Mlp::register(
            &mut store,
            "head",
            cfg.head.spec(cfg.head_input_dim(), cfg.task.output_dim()),
        )?;
        Ok((Self { cfg: cfg.clone(), lsthm, mab, head }, store))
    }

    pub fn config(&self) -> &MarnConfig {
        &self.cfg
    }

    pub fn lsthm(&self) -> &LsthmLayer {
        &self.lsthm
    }

    pub fn mab(&self) -> Option<&Mab> {
        self.mab.as_ref()
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    /// Checks that `seq` carries every configured modality with the right
    /// width and a common length `T >= 1`. Returns `T`.
    pub fn check_sequence(&self, seq: &MultimodalSequence) -> Result<usize> {
        let fail = |reason: String| Error::Alignment { id: seq.id.clone(), reason };
        if seq.streams.len() != self.cfg.modalities.len() {
            return Err(fail(format!(
                "expected {} streams, found {}",
                self.cfg.modalities.len(),
                seq.streams.len()
            )));
        }
        let mut len = None;
        for m in &self.cfg.modalities {
            let stream = seq
                .streams
                .get(&m.name)
                .ok_or_else(|| fail(format!("missing modality {}", m.name)))?;
            if stream.is_empty() {
                return Err(fail("sequence has no timesteps".into()));
            }
            if let Some(t) = len {
                if t != stream.len() {
                    return Err(fail(format!("modality {} has {} steps, expected {t}", m.name, stream.len())));
                }
            }
            len = Some(stream.len());
            if let Some(row) = stream.iter().find(|r| r.len() != m.d_in) {
                return Err(fail(format!("modality {} rows must have {} features, got {}", m.name, m.d_in, row.len())));
            }
        }
        Ok(len.unwrap_or(0))
    }

    fn inputs_at(&self, tape: &mut Tape, seq: &MultimodalSequence, t: usize) -> Vec<Var> {
        if self.cfg.variant == Variant::EfLstm {
            let x: Vec<f64> = self
                .cfg
                .modalities
                .iter()
                .flat_map(|m| seq.streams[&m.name][t].iter().copied())
                .collect();
            vec![tape.leaf(Tensor::vector(x))]
        } else {
            self.cfg
                .modalities
                .iter()
                .map(|m| tape.leaf(Tensor::vector(seq.streams[&m.name][t].clone())))
                .collect()
        }
    }

    /// Records the recurrence over all `T` steps from `c_0 = h_0 = z_0 = 0`
    /// followed by the prediction head.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        seq: &MultimodalSequence,
        record_trace: bool,
    ) -> Result<ForwardVars> {
        let steps = self.check_sequence(seq)?;
        let d = self.cfg.total_mem();
        let mut states = self.lsthm.zero_states(tape);
        let mut z = self.mab.as_ref().map(|_| tape.leaf(Tensor::zeros(&[d])));
        let mut h = None;
        let mut attention = Vec::new();
        for t in 0..steps {
            let inputs = self.inputs_at(tape, seq, t);
            let (next, h_t) = self.lsthm.step_all(tape, store, &inputs, &states, z)?;
            states = next;
            h = Some(h_t);
            if let Some(mab) = &self.mab {
                let out = mab.step(tape, store, h_t)?;
                z = Some(out.z);
                if record_trace {
                    attention.push(tape.value(out.attention).clone());
                }
            }
        }
        let h = h.expect("at least one step");
        let head_in = match z {
            Some(z) => tape.concat(&[h, z]),
            None => h,
        };
        let prediction = self.head.forward(tape, store, head_in)?;
        let trace = match (&self.mab, record_trace) {
            (Some(mab), true) => Some(AttentionTrace { spans: mab.spans().to_vec(), steps: attention }),
            _ => None,
        };
        Ok(ForwardVars { h, z, prediction, trace })
    }

    /// Forward pass followed by the task loss.
    pub fn loss(&self, tape: &mut Tape, store: &ParamStore, seq: &MultimodalSequence) -> Result<Var> {
        let out = self.forward(tape, store, seq, false)?;
        task_loss(tape, self.cfg.task, out.prediction, seq.label)
    }

    /// Forward pass without keeping the tape.
    pub fn run(&self, store: &ParamStore, seq: &MultimodalSequence, record_trace: bool) -> Result<ForwardResult> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, store, seq, record_trace)?;
        let d = self.cfg.total_mem();
        Ok(ForwardResult {
            h_t: tape.value(out.h).clone(),
            z_t: out.z.map_or_else(|| Tensor::zeros(&[d]), |z| tape.value(z).clone()),
            prediction: tape.value(out.prediction).clone(),
            trace: out.trace,
        })
    }

    /// Loss value and gradients accumulated into `store`.
    pub fn accumulate_gradients(&self, store: &mut ParamStore, seq: &MultimodalSequence) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, store, seq)?;
        let value = tape.value(loss).data()[0];
        tape.backward(loss, store)?;
        Ok(value)
    }

    pub fn loss_value(&self, store: &ParamStore, seq: &MultimodalSequence) -> Result<f64> {
        let mut tape = Tape::new();
        let loss = self.loss(&mut tape, store, seq)?;
        Ok(tape.value(loss).data()[0])
    }
}

/// Cross-entropy on logits for classification, squared error for regression.
pub fn task_loss(tape: &mut Tape, task: Task, prediction: Var, label: f64) -> Result<Var> {
    match task {
        Task::Classification { classes } => {
            let class = class_index(label, classes)?;
            tape.cross_entropy(prediction, class)
        }
        Task::Regression => tape.squared_error(prediction, label),
    }
}

pub fn class_index(label: f64, classes: usize) -> Result<usize> {
    if label < 0.0 || label.fract() != 0.0 || label >= classes as f64 {
        return Err(Error::Config(format!("label {label} is not a class index below {classes}")));
    }
    Ok(label as usize)
}
