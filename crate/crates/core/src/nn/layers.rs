use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

fn fan_in_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

/// Affine map `y = W x + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        let w = store.uniform(format!("{name}.weight"), vec![output, input], fan_in_bound(input), rng);
        let b = store.zeros(format!("{name}.bias"), vec![output]);
        Linear { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        check_width("linear", self.input, tape.len(x))?;
        Ok(tape.affine(self.w, self.b, x))
    }
}

/// Affine layers with tanh between them; the last layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `sizes` lists input width, hidden widths, then output width.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers }
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map(|l| l.output).unwrap_or(0)
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, h)?;
            if i + 1 < self.layers.len() {
                h = tape.tanh(h);
            }
        }
        Ok(h)
    }
}

/// GRU cell with PyTorch gate layout:
///
/// ```text
/// r  = σ(W_ir x + b_ir + W_hr h + b_hr)
/// z  = σ(W_iz x + b_iz + W_hz h + b_hz)
/// n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruCell {
    pub input_size: usize,
    pub hidden_size: usize,
    pub ir: Linear,
    pub iz: Linear,
    pub in_: Linear,
    pub hr: Linear,
    pub hz: Linear,
    pub hn: Linear,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        hidden_size: usize,
        rng: &mut R,
    ) -> Self {
        let mut lin =
            |gate: &str, fan_in: usize| Linear::new(store, &format!("{name}.{gate}"), fan_in, hidden_size, rng);
        let ir = lin("ir", input_size);
        let iz = lin("iz", input_size);
        let in_ = lin("in", input_size);
        let hr = lin("hr", hidden_size);
        let hz = lin("hz", hidden_size);
        let hn = lin("hn", hidden_size);
        GruCell {
            input_size,
            hidden_size,
            ir,
            iz,
            in_,
            hr,
            hz,
            hn,
        }
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Result<Var> {
        check_width("gru input", self.input_size, tape.len(x))?;
        check_width("gru hidden", self.hidden_size, tape.len(h))?;
        let ir = self.ir.forward(tape, x)?;
        let hr = self.hr.forward(tape, h)?;
        let r_pre = tape.add(ir, hr);
        let r = tape.sigmoid(r_pre);

        let iz = self.iz.forward(tape, x)?;
        let hz = self.hz.forward(tape, h)?;
        let z_pre = tape.add(iz, hz);
        let z = tape.sigmoid(z_pre);

        let in_ = self.in_.forward(tape, x)?;
        let hn = self.hn.forward(tape, h)?;
        let gated = tape.mul(r, hn);
        let n_pre = tape.add(in_, gated);
        let n = tape.tanh(n_pre);

        let keep = tape.one_minus(z);
        let fresh = tape.mul(keep, n);
        let carried = tape.mul(z, h);
        Ok(tape.add(fresh, carried))
    }
}

/// Lookup table of `rows` vectors of width `dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: ParamId,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    /// Entries drawn uniformly from `[-1, 1]`.
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, rows: usize, dim: usize, rng: &mut R) -> Self {
        let table = store.uniform(name, vec![rows, dim], 1.0, rng);
        Embedding { table, rows, dim }
    }

    pub fn lookup(&self, tape: &mut Tape<'_>, row: usize) -> Result<Var> {
        if row >= self.rows {
            return Err(Error::Dimension(format!(
                "embedding row {row} out of range (rows = {})",
                self.rows
            )));
        }
        Ok(tape.row(self.table, row))
    }
}

fn check_width(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!(
            "{what}: expected width {expected}, got {got}"
        )));
    }
    Ok(())
}
