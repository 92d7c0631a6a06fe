//! Long-short term hybrid memory cell.
//!
//! An LSTM cell whose gates also read the previous cross-view code `z`
//! through an extra weight matrix `V`. The candidate update is linear; the
//! `tanh` is applied where it enters the memory:
//!
//! ```text
//! i = σ(W_i x + U_i h + V_i z + b_i)      f, o analogous
//! c̄ = W_c x + U_c h + V_c z + b_c
//! c' = f ⊙ c + i ⊙ tanh(c̄)
//! h' = o ⊙ tanh(c')
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::params::{Init, ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalityConfig {
    pub name: String,
    pub d_in: usize,
    pub d_mem: usize,
    pub d_local: usize,
}

impl ModalityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("modality name must be non-empty".into()));
        }
        if self.d_in == 0 || self.d_mem == 0 || self.d_local == 0 {
            return Err(Error::Config(format!("modality {}: dimensions must be positive", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Input => "i",
            Gate::Forget => "f",
            Gate::Output => "o",
            Gate::Candidate => "c",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GateParams {
    pub w: ParamId,
    pub u: ParamId,
    pub v: Option<ParamId>,
    pub b: ParamId,
}

/// Recurrent state of one modality: hybrid memory `c` and output `h`.
#[derive(Debug, Clone, Copy)]
pub struct LsthmState {
    pub c: Var,
    pub h: Var,
}

impl LsthmState {
    pub fn zeros(tape: &mut Tape, d_mem: usize) -> Self {
        Self { c: tape.leaf(Tensor::zeros(&[d_mem])), h: tape.leaf(Tensor::zeros(&[d_mem])) }
    }
}

/// One modality's cell. `z_dim` is `None` for a plain LSTM (no `V`).
#[derive(Debug, Clone)]
pub struct LsthmCell {
    name: String,
    d_in: usize,
    d_mem: usize,
    z_dim: Option<usize>,
    gates: [GateParams; 4],
}

impl LsthmCell {
    /// Registers `{prefix}.{W,U,V,b}_{i,f,o,c}` in the store.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        name: &str,
        d_in: usize,
        d_mem: usize,
        z_dim: Option<usize>,
    ) -> Self {
        let gates = Gate::ALL.map(|gate| {
            let g = gate.suffix();
            let w = store.add(
                format!("{prefix}.W_{g}"),
                &[d_mem, d_in],
                Init::Xavier { fan_in: d_in, fan_out: d_mem },
            );
            let u = store.add(
                format!("{prefix}.U_{g}"),
                &[d_mem, d_mem],
                Init::Xavier { fan_in: d_mem, fan_out: d_mem },
            );
            let v = z_dim.map(|dz| {
                store.add(format!("{prefix}.V_{g}"), &[d_mem, dz], Init::Xavier { fan_in: dz, fan_out: d_mem })
            });
            let bias = if gate == Gate::Forget { 1.0 } else { 0.0 };
            let b = store.add(format!("{prefix}.b_{g}"), &[d_mem], Init::Constant(bias));
            GateParams { w, u, v, b }
        });
        Self { name: name.to_string(), d_in, d_mem, z_dim, gates }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_mem(&self) -> usize {
        self.d_mem
    }

    pub fn gate(&self, gate: Gate) -> &GateParams {
        &self.gates[gate as usize]
    }

    fn check_len(&self, what: &str, tape: &Tape, v: Var, expected: usize) -> Result<()> {
        let got = tape.value(v).len();
        if got != expected {
            return Err(shape_err(format!("lsthm[{}] {what}", self.name), &[expected], &[got]));
        }
        Ok(())
    }

    fn pre_activation(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        gate: Gate,
        x: Var,
        h: Var,
        z: Option<Var>,
    ) -> Result<Var> {
        let p = *self.gate(gate);
        let w = tape.param(store, p.w);
        let u = tape.param(store, p.u);
        let b = tape.param(store, p.b);
        let wx = tape.matvec(w, x)?;
        let uh = tape.matvec(u, h)?;
        let mut acc = tape.add(wx, uh)?;
        if let (Some(v), Some(z)) = (p.v, z) {
            let v = tape.param(store, v);
            let vz = tape.matvec(v, z)?;
            acc = tape.add(acc, vz)?;
        }
        tape.add(acc, b)
    }

    /// One recurrence step. A cell built with `V` weights requires `z_prev`;
    /// a plain cell ignores it.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        prev: &LsthmState,
        z_prev: Option<Var>,
    ) -> Result<LsthmState> {
        self.check_len("input", tape, x, self.d_in)?;
        self.check_len("c", tape, prev.c, self.d_mem)?;
        self.check_len("h", tape, prev.h, self.d_mem)?;
        let z = match (self.z_dim, z_prev) {
            (Some(dz), Some(z)) => {
                self.check_len("z", tape, z, dz)?;
                Some(z)
            }
            (Some(dz), None) => {
                return Err(Error::Config(format!(
                    "lsthm[{}] expects a cross-view code of length {dz}",
                    self.name
                )))
            }
            (None, _) => None,
        };
        let pre_i = self.pre_activation(tape, store, Gate::Input, x, prev.h, z)?;
        let pre_f = self.pre_activation(tape, store, Gate::Forget, x, prev.h, z)?;
        let pre_o = self.pre_activation(tape, store, Gate::Output, x, prev.h, z)?;
        let cand = self.pre_activation(tape, store, Gate::Candidate, x, prev.h, z)?;
        let i = tape.sigmoid(pre_i);
        let f = tape.sigmoid(pre_f);
        let o = tape.sigmoid(pre_o);
        let squashed = tape.tanh(cand);
        let keep = tape.mul(f, prev.c)?;
        let write = tape.mul(i, squashed)?;
        let c = tape.add(keep, write)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(LsthmState { c, h })
    }
}

/// One cell per modality, stepped independently and concatenated in
/// declaration order.
#[derive(Debug, Clone)]
pub struct LsthmLayer {
    cells: Vec<LsthmCell>,
}

impl LsthmLayer {
    pub fn register(store: &mut ParamStore, modalities: &[ModalityConfig], z_dim: Option<usize>) -> Self {
        let cells = modalities
            .iter()
            .map(|m| {
                LsthmCell::register(store, &format!("lsthm.{}", m.name), &m.name, m.d_in, m.d_mem, z_dim)
            })
            .collect();
        Self { cells }
    }

    pub fn from_cells(cells: Vec<LsthmCell>) -> Self {
        Self { cells }
    }

    pub fn cells(&self) -> &[LsthmCell] {
        &self.cells
    }

    pub fn total_mem(&self) -> usize {
        self.cells.iter().map(|c| c.d_mem).sum()
    }

    pub fn zero_states(&self, tape: &mut Tape) -> Vec<LsthmState> {
        self.cells.iter().map(|c| LsthmState::zeros(tape, c.d_mem)).collect()
    }

    /// Steps every modality and returns the new states plus `h_t`, the
    /// concatenation of per-modality outputs.
    pub fn step_all(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &[Var],
        states: &[LsthmState],
        z_prev: Option<Var>,
    ) -> Result<(Vec<LsthmState>, Var)> {
        if inputs.len() != self.cells.len() || states.len() != self.cells.len() {
            return Err(Error::Config(format!(
                "expected {} modality inputs and states, got {} and {}",
                self.cells.len(),
                inputs.len(),
                states.len()
            )));
        }
        let next = self
            .cells
            .iter()
            .zip(inputs.iter().zip(states))
            .map(|(cell, (&x, prev))| cell.step(tape, store, x, prev, z_prev))
            .collect::<Result<Vec<_>>>()?;
        let hs: Vec<Var> = next.iter().map(|s| s.h).collect();
        let h = tape.concat(&hs);
        Ok((next, h))
    }
}
