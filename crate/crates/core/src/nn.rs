//! Layers shared by the encoder, the event representation extractor and the
//! decoder heads.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Result, SeaError};
use crate::params::{ParamId, ParamStore};

/// `x W + b`, with weights drawn from `Normal(0, 1/sqrt(d_in))` so that
/// activations keep their scale through stacked layers at small widths.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            weight: store.normal(&format!("{name}.weight"), &[d_in, d_out], 1.0 / (d_in.max(1) as f64).sqrt())?,
            bias: store.zeros(&format!("{name}.bias"), &[1, d_out])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let xw = tape.matmul(x, w)?;
        Ok(tape.add(xw, b)?)
    }
}

/// Layer normalization with a learned gain and shift.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Result<Self> {
        Ok(Self {
            gain: store.ones(&format!("{name}.gain"), &[1, d])?,
            shift: store.zeros(&format!("{name}.shift"), &[1, d])?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let n = tape.layer_norm(x)?;
        let g = tape.param(self.gain);
        let s = tape.param(self.shift);
        let scaled = tape.mul(n, g)?;
        Ok(tape.add(scaled, s)?)
    }
}

/// Two-layer feed-forward block with a ReLU in between.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub hidden: Linear,
    pub out: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Result<Self> {
        Ok(Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), d_in, d_hidden)?,
            out: Linear::new(store, &format!("{name}.out"), d_hidden, d_out)?,
        })
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, dropout: f64) -> Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h)?;
        let h = tape.dropout(h, dropout)?;
        self.out.forward(tape, h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub dropout: f64,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(SeaError::Config(format!(
                "d_model {} is not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(SeaError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Pre-norm Transformer encoder layer:
/// `x + Attn(LN(x))` followed by `x + FFN(LN(x))`.
#[derive(Clone, Debug)]
pub struct EncoderLayer {
    ln_attn: LayerNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    proj: Linear,
    ln_ff: LayerNorm,
    ff: FeedForward,
    heads: usize,
    dropout: f64,
}

impl EncoderLayer {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &TransformerConfig) -> Result<Self> {
        let d = cfg.d_model;
        Ok(Self {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), d)?,
            query: Linear::new(store, &format!("{name}.query"), d, d)?,
            key: Linear::new(store, &format!("{name}.key"), d, d)?,
            value: Linear::new(store, &format!("{name}.value"), d, d)?,
            proj: Linear::new(store, &format!("{name}.proj"), d, d)?,
            ln_ff: LayerNorm::new(store, &format!("{name}.ln_ff"), d)?,
            ff: FeedForward::new(store, &format!("{name}.ff"), d, cfg.d_ff, d)?,
            heads: cfg.heads,
            dropout: cfg.dropout,
        })
    }

    fn attention(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let q = self.query.forward(tape, x)?;
        let k = self.key.forward(tape, x)?;
        let v = self.value.forward(tape, x)?;
        let d = tape.shape(x)[1];
        let dh = d / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, lo, hi)?;
            let kh = tape.slice_cols(k, lo, hi)?;
            let vh = tape.slice_cols(v, lo, hi)?;
            let scores = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(scores, scale)?;
            let weights = tape.softmax(scores)?;
            let weights = tape.dropout(weights, self.dropout)?;
            outs.push(tape.matmul(weights, vh)?);
        }
        let heads = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        self.proj.forward(tape, heads)
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.ln_attn.forward(tape, x)?;
        let a = self.attention(tape, h)?;
        let a = tape.dropout(a, self.dropout)?;
        let x = tape.add(x, a)?;
        let h = self.ln_ff.forward(tape, x)?;
        let f = self.ff.forward(tape, h, self.dropout)?;
        let f = tape.dropout(f, self.dropout)?;
        Ok(tape.add(x, f)?)
    }

    /// Zeroes the residual branches' output projections so the layer is the
    /// exact identity map.
    pub fn make_identity(&self, store: &mut ParamStore) {
        for id in [self.proj.weight, self.proj.bias, self.ff.out.weight, self.ff.out.bias] {
            store.get_mut(id).value.fill(0.0);
        }
    }
}

/// A stack of pre-norm encoder layers without a final normalization, so an
/// identity-initialized stack passes inputs through unchanged.
#[derive(Clone, Debug)]
pub struct TransformerStack {
    pub layers: Vec<EncoderLayer>,
}

impl TransformerStack {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &TransformerConfig) -> Result<Self> {
        cfg.validate()?;
        let layers = (0..cfg.layers)
            .map(|i| EncoderLayer::new(store, &format!("{name}.layer{i}"), cfg))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn forward(&self, tape: &mut Tape, mut x: Var) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(tape, x)?;
        }
        Ok(x)
    }

    pub fn make_identity(&self, store: &mut ParamStore) {
        for l in &self.layers {
            l.make_identity(store);
        }
    }
}
