//! Synthetic multimodal classification tasks with planted cross-view rules.
//!
//! Every stream is Gaussian background noise (truncated to `±NOISE_CLIP`).
//! A *spike* adds 1.0 to one feature of one modality at one timestep, so
//! spikes and background never overlap. Each rule pair `(first, second,
//! lag)` plants exactly one spike in `first` at `t` and one in `second` at
//! `t'`; the pair is *aligned* when `t' = t - lag`. Misaligned placements
//! are drawn so that each spike's marginal position is the same as in the
//! aligned case, which makes every single modality uninformative about the
//! label on its own.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, DatasetSplit, MultimodalSequence};

/// Bound on background noise magnitude.
pub const NOISE_CLIP: f64 = 0.45;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub name: String,
    pub d_in: usize,
}

/// One feature of one modality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Signal {
    pub modality: String,
    pub dim: usize,
}

/// `first` spiking at `t` together with `second` spiking at `t - lag`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pair {
    pub lag: usize,
    pub first: Signal,
    pub second: Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// label 1 iff the pair is aligned
    CoOccurrence(Pair),
    /// co-occurrence, except that a `witness` spike at the same step as
    /// `first` contradicts it (label 0); witnesses appear with probability
    /// `rate`
    Contradiction { pair: Pair, witness: Signal, rate: f64 },
    /// label 1 iff every pair is aligned
    Conjunction { pairs: Vec<Pair> },
}

impl Rule {
    pub fn pairs(&self) -> Vec<&Pair> {
        match self {
            Rule::CoOccurrence(p) | Rule::Contradiction { pair: p, .. } => vec![p],
            Rule::Conjunction { pairs } => pairs.iter().collect(),
        }
    }
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthTaskSpec {
    pub modalities: Vec<StreamSpec>,
    pub min_len: usize,
    pub max_len: usize,
    pub rule: Rule,
    /// standard deviation of the background noise
    pub noise: f64,
    #[serde(default = "half")]
    pub positive_fraction: f64,
    pub seed: u64,
}

impl SynthTaskSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Spec(m));
        if self.modalities.is_empty() {
            return err("no modalities".into());
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if m.d_in == 0 || m.name.is_empty() || self.modalities[..i].iter().any(|o| o.name == m.name) {
                return err(format!("modality {:?} must have a unique name and d_in > 0", m.name));
            }
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return err(format!("invalid length range [{}, {}]", self.min_len, self.max_len));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return err("noise must be finite and non-negative".into());
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return err("positive_fraction must lie in (0, 1)".into());
        }
        let mut signals: Vec<&Signal> = Vec::new();
        for pair in self.rule.pairs() {
            if pair.lag + 2 > self.min_len {
                return err(format!("lag {} requires min_len >= {}", pair.lag, pair.lag + 2));
            }
            signals.extend([&pair.first, &pair.second]);
        }
        match &self.rule {
            Rule::Contradiction { witness, rate, .. } => {
                if !(0.0..=1.0).contains(rate) {
                    return err(format!("contradiction rate {rate} outside [0, 1]"));
                }
                signals.push(witness);
            }
            Rule::Conjunction { pairs } if pairs.is_empty() => return err("conjunction without pairs".into()),
            _ => {}
        }
        for (i, s) in signals.iter().enumerate() {
            match self.modalities.iter().find(|m| m.name == s.modality) {
                None => return err(format!("rule references unknown modality {:?}", s.modality)),
                Some(m) if s.dim >= m.d_in => {
                    return err(format!("signal dim {} out of range for {}", s.dim, m.name))
                }
                _ => {}
            }
            if signals[..i].contains(s) {
                return err(format!("signal {}[{}] used twice", s.modality, s.dim));
            }
        }
        Ok(())
    }
}

struct Canvas {
    seq: MultimodalSequence,
}

impl Canvas {
    fn spike(&mut self, s: &Signal, t: usize) {
        self.seq.streams[&s.modality][t][s.dim] += 1.0;
    }

    fn len(&self) -> usize {
        self.seq.len()
    }

    /// Plants one pair; returns the step of the `first` spike.
    fn place(&mut self, rng: &mut ChaCha8Rng, pair: &Pair, aligned: bool) -> usize {
        let t_len = self.len();
        let t_first = rng.gen_range(pair.lag..t_len);
        let partner = t_first - pair.lag;
        let t_second = if aligned {
            partner
        } else {
            // uniform over [0, T - lag) without the aligned slot
            let slot = rng.gen_range(0..t_len - pair.lag - 1);
            if slot >= partner {
                slot + 1
            } else {
                slot
            }
        };
        self.spike(&pair.first, t_first);
        self.spike(&pair.second, t_second);
        t_first
    }
}

fn noise_sample(rng: &mut ChaCha8Rng, normal: Option<&Normal<f64>>) -> f64 {
    let Some(normal) = normal else { return 0.0 };
    loop {
        let v = normal.sample(rng);
        if v.abs() < NOISE_CLIP {
            return v;
        }
    }
}

/// Generates `n` labelled sequences and splits them 60/20/20 by id.
pub fn generate_synthetic(spec: &SynthTaskSpec, n: usize) -> Result<DatasetSplit, DataError> {
    spec.validate()?;
    if n < 10 {
        return Err(DataError::Spec(format!("need at least 10 sequences, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // contradiction draws come from their own stream so that rate = 0
    // reproduces the plain co-occurrence dataset exactly
    let mut side = ChaCha8Rng::seed_from_u64(spec.seed);
    side.set_stream(1);

    let n_pos = ((n as f64) * spec.positive_fraction).round() as usize;
    let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    labels.shuffle(&mut rng);

    let normal = (spec.noise > 0.0).then(|| Normal::new(0.0, spec.noise).expect("valid sigma"));
    let mut seqs = Vec::with_capacity(n);
    for (i, &positive) in labels.iter().enumerate() {
        let t_len = rng.gen_range(spec.min_len..=spec.max_len);
        let streams = spec
            .modalities
            .iter()
            .map(|m| {
                let rows = (0..t_len)
                    .map(|_| (0..m.d_in).map(|_| noise_sample(&mut rng, normal.as_ref())).collect())
                    .collect();
                (m.name.clone(), rows)
            })
            .collect();
        let seq = MultimodalSequence {
            id: format!("seq-{i:05}"),
            label: if positive { 1.0 } else { 0.0 },
            streams,
        };
        let mut canvas = Canvas { seq };
        match &spec.rule {
            Rule::CoOccurrence(pair) => {
                canvas.place(&mut rng, pair, positive);
            }
            Rule::Contradiction { pair, witness, rate } => {
                let contradicted = !positive && side.gen_bool(*rate);
                let t_first = canvas.place(&mut rng, pair, positive || contradicted);
                if contradicted {
                    canvas.spike(witness, t_first);
                } else if positive && side.gen_bool(*rate) {
                    // harmless witness away from the first spike
                    let slot = side.gen_range(0..t_len - 1);
                    canvas.spike(witness, if slot >= t_first { slot + 1 } else { slot });
                }
            }
            Rule::Conjunction { pairs } => {
                // negatives break a random non-empty subset of the pairs
                let broken: u32 = if positive { 0 } else { rng.gen_range(1..(1u32 << pairs.len())) };
                for (j, pair) in pairs.iter().enumerate() {
                    canvas.place(&mut rng, pair, broken & (1 << j) == 0);
                }
            }
        }
        seqs.push(canvas.seq);
    }
    Ok(DatasetSplit::from_ordered(seqs))
}
