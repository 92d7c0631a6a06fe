//! Multi-attention block.
//!
//! Given the concatenated hidden state `h_t` (length `D`), the attention
//! network produces `K` distributions over the `D` dimensions. Each row
//! re-weights `h_t`; the resulting `K x D` block is split by modality
//! columns, each split is reduced by its own network, and the reduced codes
//! are mapped back to a length-`D` cross-view code `z_t`.

use std::io::{self, BufRead, Write};

use crate::error::{shape_err, Error, Result};
use crate::mlp::{Mlp, MlpSpec};
use crate::params::ParamStore;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Column range of one modality inside the concatenated hidden state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModalitySpan {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

pub fn spans<'a>(dims: impl IntoIterator<Item = (&'a str, usize)>) -> Vec<ModalitySpan> {
    let mut offset = 0;
    dims.into_iter()
        .map(|(name, len)| {
            let span = ModalitySpan { name: name.to_string(), offset, len };
            offset += len;
            span
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MabConfig {
    pub k: usize,
    pub spans: Vec<ModalitySpan>,
    /// `D -> K*D`; `None` removes the attention network and every
    /// coefficient is fixed to 1.
    pub attention: Option<MlpSpec>,
    /// One per modality: `K*d_mem -> d_local`.
    pub reducers: Vec<MlpSpec>,
    /// `sum(d_local) -> D`.
    pub generator: MlpSpec,
}

impl MabConfig {
    pub fn total_mem(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.total_mem();
        if self.k == 0 {
            return Err(Error::Config("number of attentions K must be at least 1".into()));
        }
        if let Some(a) = &self.attention {
            if a.input_dim != d || a.output_dim != self.k * d {
                return Err(Error::Config(format!(
                    "attention network must map {d} -> {}, got {} -> {}",
                    self.k * d,
                    a.input_dim,
                    a.output_dim
                )));
            }
        }
        if self.reducers.len() != self.spans.len() {
            return Err(Error::Config("one reducer network per modality required".into()));
        }
        for (span, c) in self.spans.iter().zip(&self.reducers) {
            if c.input_dim != self.k * span.len {
                return Err(Error::Config(format!(
                    "reducer for {} must take {} inputs, got {}",
                    span.name,
                    self.k * span.len,
                    c.input_dim
                )));
            }
        }
        let local: usize = self.reducers.iter().map(|c| c.output_dim).sum();
        if self.generator.input_dim != local || self.generator.output_dim != d {
            return Err(Error::Config(format!(
                "code generator must map {local} -> {d}, got {} -> {}",
                self.generator.input_dim, self.generator.output_dim
            )));
        }
        Ok(())
    }
}

/// Tape nodes produced by one block step.
#[derive(Debug, Clone, Copy)]
pub struct MabStep {
    /// cross-view code, length `D`
    pub z: Var,
    /// `K x D` coefficients
    pub attention: Var,
    /// `K x D` attended outputs
    pub attended: Var,
}

#[derive(Debug, Clone)]
pub struct Mab {
    k: usize,
    spans: Vec<ModalitySpan>,
    attention: Option<Mlp>,
    reducers: Vec<Mlp>,
    generator: Mlp,
}

impl Mab {
    /// Registers `mab.A.*`, `mab.C.<modality>.*` and `mab.G.*`.
    pub fn register(store: &mut ParamStore, cfg: MabConfig) -> Result<Self> {
        cfg.validate()?;
        let attention = cfg.attention.map(|a| Mlp::register(store, "mab.A", a)).transpose()?;
        let reducers = cfg
            .spans
            .iter()
            .zip(cfg.reducers)
            .map(|(span, c)| Mlp::register(store, &format!("mab.C.{}", span.name), c))
            .collect::<Result<Vec<_>>>()?;
        let generator = Mlp::register(store, "mab.G", cfg.generator)?;
        Ok(Self { k: cfg.k, spans: cfg.spans, attention, reducers, generator })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn spans(&self) -> &[ModalitySpan] {
        &self.spans
    }

    pub fn has_attention(&self) -> bool {
        self.attention.is_some()
    }

    pub fn total_mem(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }

    pub fn step(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<MabStep> {
        let d = self.total_mem();
        let got = tape.value(h).len();
        if got != d {
            return Err(shape_err("mab input h_t", &[d], &[got]));
        }
        let broadcast = tape.tile(h, self.k);
        let (attention, attended) = match &self.attention {
            Some(net) => {
                let raw = net.forward(tape, store, h)?;
                let raw = tape.reshape(raw, &[self.k, d])?;
                let a = tape.softmax_rows(raw);
                let attended = tape.mul(a, broadcast)?;
                (a, attended)
            }
            None => (tape.leaf(Tensor::full(&[self.k, d], 1.0)), broadcast),
        };
        let codes = self
            .spans
            .iter()
            .zip(&self.reducers)
            .map(|(span, net)| {
                let block = tape.columns(attended, span.offset, span.len)?;
                net.forward(tape, store, block)
            })
            .collect::<Result<Vec<_>>>()?;
        let s = tape.concat(&codes);
        let z = self.generator.forward(tape, store, s)?;
        Ok(MabStep { z, attention, attended })
    }
}

/// Attention coefficients of every step of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTrace {
    pub spans: Vec<ModalitySpan>,
    /// one `K x D` matrix per timestep
    pub steps: Vec<Tensor>,
}

pub const TRACE_HEADER: &str = "t,k,dim,modality,coef";

impl AttentionTrace {
    pub fn k(&self) -> usize {
        self.steps.first().map_or(0, Tensor::rows)
    }

    fn modality_of(&self, dim: usize) -> &str {
        self.spans
            .iter()
            .find(|s| dim >= s.offset && dim < s.offset + s.len)
            .map_or("", |s| s.name.as_str())
    }

    /// Writes `t,k,dim,modality,coef` rows (0-based indices). Floats use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv(&self, mut sink: impl Write) -> io::Result<usize> {
        if self.steps.is_empty() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "empty attention trace"));
        }
        writeln!(sink, "{TRACE_HEADER}")?;
        let mut rows = 0;
        for (t, a) in self.steps.iter().enumerate() {
            for k in 0..a.rows() {
                for (dim, coef) in a.row(k).iter().enumerate() {
                    writeln!(sink, "{t},{k},{dim},{},{coef:?}", self.modality_of(dim))?;
                    rows += 1;
                }
            }
        }
        sink.flush()?;
        Ok(rows)
    }

    pub fn read_csv(source: impl BufRead) -> io::Result<Self> {
        let bad = |line: usize, msg: &str| {
            io::Error::new(io::ErrorKind::InvalidData, format!("trace line {line}: {msg}"))
        };
        let mut lines = source.lines();
        match lines.next() {
            Some(Ok(h)) if h == TRACE_HEADER => {}
            Some(Err(e)) => return Err(e),
            _ => return Err(bad(1, "missing header")),
        }
        let mut rows: Vec<(usize, usize, usize, String, f64)> = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let n = i + 2;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(bad(n, "expected 5 fields"));
            }
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad index"));
            let coef = f[4].parse::<f64>().map_err(|_| bad(n, "bad coefficient"))?;
            rows.push((idx(f[0])?, idx(f[1])?, idx(f[2])?, f[3].to_string(), coef));
        }
        if rows.is_empty() {
            return Err(bad(2, "no rows"));
        }
        let t_len = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let k = rows.iter().map(|r| r.1).max().unwrap() + 1;
        let d = rows.iter().map(|r| r.2).max().unwrap() + 1;
        if rows.len() != t_len * k * d {
            return Err(bad(0, "row count does not match T*K*D"));
        }
        let mut data = vec![vec![f64::NAN; k * d]; t_len];
        let mut names = vec![String::new(); d];
        for (t, kk, dim, name, coef) in rows {
            data[t][kk * d + dim] = coef;
            names[dim] = name;
        }
        let mut spans: Vec<ModalitySpan> = Vec::new();
        for (dim, name) in names.into_iter().enumerate() {
            match spans.last_mut() {
                Some(s) if s.name == name => s.len += 1,
                _ => spans.push(ModalitySpan { name, offset: dim, len: 1 }),
            }
        }
        let steps = data
            .into_iter()
            .map(|v| Tensor::matrix(k, d, v).expect("trace shape"))
            .collect();
        Ok(Self { spans, steps })
    }
}

/// Writes `trace` to `sink` and returns the number of data rows.
pub fn export_attention_trace(trace: &AttentionTrace, sink: impl Write) -> io::Result<usize> {
    trace.write_csv(sink)
}
