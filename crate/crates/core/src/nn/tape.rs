//! Reverse-mode differentiation over vector-valued operations.
//!
//! A [`Tape`] records a forward computation against a borrowed
//! [`ParamStore`]. Calling [`Tape::backward`] with adjoints for any set of
//! output nodes propagates them back to parameters and recorded inputs.

use super::params::{Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Row(ParamId, usize),
    Affine { w: ParamId, b: ParamId, x: Var },
    Add(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Select(Var, Vec<usize>),
    LogSoftmax(Var),
    Pick(Var, usize),
    Entropy(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

/// Result of a backward pass.
pub struct Backward {
    pub grads: Gradients,
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Backward {
    /// Adjoint of a recorded node (zeros if nothing flowed into it).
    pub fn wrt(&self, v: Var, len: usize) -> Vec<f64> {
        self.adjoints[v.0].clone().unwrap_or_else(|| vec![0.0; len])
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_softmax_slice(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    /// Whole parameter tensor as a flat vector.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.values(id).to_vec();
        self.push(value, Op::Param(id))
    }

    /// Row `row` of a 2-D parameter (embedding lookup).
    pub fn row(&mut self, id: ParamId, row: usize) -> Var {
        let t = self.store.get(id);
        let cols = t.shape[1];
        assert!(row < t.shape[0], "row {row} out of range for {}", t.name);
        let value = t.values[row * cols..(row + 1) * cols].to_vec();
        self.push(value, Op::Row(id, row))
    }

    /// `W x + b` with `W` of shape `[out, in]`.
    pub fn affine(&mut self, w: ParamId, b: ParamId, x: Var) -> Var {
        let wt = self.store.get(w);
        let cols = wt.shape[1];
        let xv = &self.nodes[x.0].value;
        assert_eq!(
            cols,
            xv.len(),
            "affine {}: input width {} != {}",
            wt.name,
            xv.len(),
            cols
        );
        let bias = self.store.values(b);
        let mut out = bias.to_vec();
        for (i, o) in out.iter_mut().enumerate() {
            let row = &wt.values[i * cols..(i + 1) * cols];
            *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
        }
        self.push(out, Op::Affine { w, b, x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip(a, b, |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(av.len(), bv.len(), "elementwise op on mismatched lengths");
        av.iter().zip(bv).map(|(x, y)| f(*x, *y)).collect()
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.iter().map(|x| 1.0 - x).collect();
        self.push(v, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.iter().map(|&x| sigmoid(x)).collect();
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.iter().map(|x| x.tanh()).collect();
        self.push(v, Op::Tanh(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let v = parts
            .iter()
            .flat_map(|p| self.nodes[p.0].value.iter().copied())
            .collect();
        self.push(v, Op::Concat(parts.to_vec()))
    }

    /// Gathers `indices` from `a`, in order.
    pub fn select(&mut self, a: Var, indices: &[usize]) -> Var {
        let av = &self.nodes[a.0].value;
        let v = indices.iter().map(|&i| av[i]).collect();
        self.push(v, Op::Select(a, indices.to_vec()))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let v = log_softmax_slice(&self.nodes[a.0].value);
        self.push(v, Op::LogSoftmax(a))
    }

    /// Scalar element `a[index]`.
    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let v = vec![self.nodes[a.0].value[index]];
        self.push(v, Op::Pick(a, index))
    }

    /// Entropy of `softmax(logits)` as a scalar node.
    pub fn entropy(&mut self, logits: Var) -> Var {
        let lp = log_softmax_slice(&self.nodes[logits.0].value);
        let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
        self.push(vec![h], Op::Entropy(logits))
    }

    /// Propagates `seeds` (node, adjoint) back through the tape.
    pub fn backward(&self, seeds: &[(Var, Vec<f64>)]) -> Backward {
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut grads = Gradients::zeros_like(self.store);
        let mut last = 0;
        for (v, g) in seeds {
            assert_eq!(g.len(), self.nodes[v.0].value.len(), "seed length mismatch");
            accumulate(&mut adj[v.0], g);
            last = last.max(v.0);
        }

        for idx in (0..=last).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    let slot = grads.slot(*id, g.len());
                    slot.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                }
                Op::Row(id, row) => {
                    let t = self.store.get(*id);
                    let cols = t.shape[1];
                    let slot = grads.slot(*id, t.values.len());
                    slot[row * cols..(row + 1) * cols]
                        .iter_mut()
                        .zip(&g)
                        .for_each(|(s, d)| *s += d);
                }
                Op::Affine { w, b, x } => {
                    let wt = self.store.get(*w);
                    let cols = wt.shape[1];
                    let xv = &self.nodes[x.0].value;
                    {
                        let gb = grads.slot(*b, g.len());
                        gb.iter_mut().zip(&g).for_each(|(s, d)| *s += d);
                    }
                    {
                        let gw = grads.slot(*w, wt.values.len());
                        for (i, gi) in g.iter().enumerate() {
                            if *gi == 0.0 {
                                continue;
                            }
                            let row = &mut gw[i * cols..(i + 1) * cols];
                            row.iter_mut().zip(xv).for_each(|(s, xj)| *s += gi * xj);
                        }
                    }
                    let mut gx = vec![0.0; cols];
                    for (i, gi) in g.iter().enumerate() {
                        if *gi == 0.0 {
                            continue;
                        }
                        let row = &wt.values[i * cols..(i + 1) * cols];
                        gx.iter_mut().zip(row).for_each(|(s, wij)| *s += gi * wij);
                    }
                    accumulate(&mut adj[x.0], &gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], &g);
                    accumulate(&mut adj[b.0], &g);
                }
                Op::Mul(a, b) => {
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let ga: Vec<f64> = g.iter().zip(bv).map(|(d, y)| d * y).collect();
                    let gb: Vec<f64> = g.iter().zip(av).map(|(d, x)| d * x).collect();
                    accumulate(&mut adj[a.0], &ga);
                    accumulate(&mut adj[b.0], &gb);
                }
                Op::OneMinus(a) => {
                    let ga: Vec<f64> = g.iter().map(|d| -d).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Sigmoid(a) => {
                    let ga: Vec<f64> = g.iter().zip(&node.value).map(|(d, y)| d * y * (1.0 - y)).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Tanh(a) => {
                    let ga: Vec<f64> = g.iter().zip(&node.value).map(|(d, y)| d * (1.0 - y * y)).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        accumulate(&mut adj[p.0], &g[offset..offset + n]);
                        offset += n;
                    }
                }
                Op::Select(a, indices) => {
                    let mut ga = vec![0.0; self.nodes[a.0].value.len()];
                    for (k, &i) in indices.iter().enumerate() {
                        ga[i] += g[k];
                    }
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::LogSoftmax(a) => {
                    let total: f64 = g.iter().sum();
                    let ga: Vec<f64> = g.iter().zip(&node.value).map(|(d, lp)| d - lp.exp() * total).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Pick(a, i) => {
                    let mut ga = vec![0.0; self.nodes[a.0].value.len()];
                    ga[*i] = g[0];
                    accumulate(&mut adj[a.0], &ga);
                }
                Op::Entropy(a) => {
                    let h = node.value[0];
                    let lp = log_softmax_slice(&self.nodes[a.0].value);
                    let ga: Vec<f64> = lp.iter().map(|l| -g[0] * l.exp() * (l + h)).collect();
                    accumulate(&mut adj[a.0], &ga);
                }
            }
            adj[idx] = Some(g);
        }
        Backward { grads, adjoints: adj }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(s) => s.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}
