//! Batched reverse-mode tape over the network, its input gradient, and the
//! directional derivative of that gradient.
//!
//! Training losses depend on `f`, `∇ₓf` and `∇²ₓf ẋ`; all three are built from a handful of
//! matrix ops recorded here, so one backward sweep yields the weight gradients.

use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::surrogate::network::swish;
use crate::surrogate::params::SurrogateParams;

pub(crate) type Id = usize;

#[derive(Clone, Copy, Debug)]
enum Op {
    Leaf,
    /// `x Wᵀ (+ b)`
    Linear { x: Id, w: Id, b: Option<Id> },
    /// `d W`
    BackLinear { d: Id, w: Id },
    /// Elementwise swish derivative of the given order.
    Act { z: Id, order: u8 },
    Mul(Id, Id),
    Add(Id, Id),
}

struct Node<T> {
    value: DenseMatrix<T>,
    op: Op,
    needs_grad: bool,
}

pub(crate) struct Tape<T> {
    nodes: Vec<Node<T>>,
}

fn hadamard<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> DenseMatrix<T> {
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| x * y).collect();
    DenseMatrix::from_row_major(a.rows(), a.cols(), data)
}

fn accumulate<T: Real>(slot: &mut Option<DenseMatrix<T>>, m: DenseMatrix<T>) {
    match slot {
        Some(g) => g.add_assign(&m),
        None => *slot = Some(m),
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: DenseMatrix<T>, op: Op, needs_grad: bool) -> Id {
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: Id) -> &DenseMatrix<T> {
        &self.nodes[id].value
    }

    pub fn constant(&mut self, m: DenseMatrix<T>) -> Id {
        self.push(m, Op::Leaf, false)
    }

    pub fn param(&mut self, m: DenseMatrix<T>) -> Id {
        self.push(m, Op::Leaf, true)
    }

    fn needs(&self, ids: &[Id]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    pub fn linear(&mut self, x: Id, w: Id, b: Option<Id>) -> Id {
        let mut z = self.value(x).matmul(&self.value(w).transpose());
        if let Some(b) = b {
            let bias = self.value(b).as_slice().to_vec();
            for i in 0..z.rows() {
                z.row_mut(i).iter_mut().zip(&bias).for_each(|(v, &bb)| *v += bb);
            }
        }
        let needs = self.needs(&[x, w]) || b.is_some_and(|b| self.nodes[b].needs_grad);
        self.push(z, Op::Linear { x, w, b }, needs)
    }

    pub fn back_linear(&mut self, d: Id, w: Id) -> Id {
        let g = self.value(d).matmul(self.value(w));
        let needs = self.needs(&[d, w]);
        self.push(g, Op::BackLinear { d, w }, needs)
    }

    pub fn act(&mut self, z: Id, order: u8) -> Id {
        let zm = self.value(z);
        let data = zm.as_slice().iter().map(|&v| swish(v, order)).collect();
        let m = DenseMatrix::from_row_major(zm.rows(), zm.cols(), data);
        let needs = self.needs(&[z]);
        self.push(m, Op::Act { z, order }, needs)
    }

    pub fn mul(&mut self, a: Id, b: Id) -> Id {
        let m = hadamard(self.value(a), self.value(b));
        let needs = self.needs(&[a, b]);
        self.push(m, Op::Mul(a, b), needs)
    }

    pub fn add(&mut self, a: Id, b: Id) -> Id {
        let mut m = self.value(a).clone();
        m.add_assign(self.value(b));
        let needs = self.needs(&[a, b]);
        self.push(m, Op::Add(a, b), needs)
    }

    /// Reverse sweep from the given cotangents; returns the gradient of every node that needs one.
    pub fn backward(&self, seeds: Vec<(Id, DenseMatrix<T>)>) -> Vec<Option<DenseMatrix<T>>> {
        let mut grads: Vec<Option<DenseMatrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            accumulate(&mut grads[id], g);
        }
        for id in (0..self.nodes.len()).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::Linear { x, w, b } => {
                    if self.nodes[x].needs_grad {
                        accumulate(&mut grads[x], g.matmul(self.value(w)));
                    }
                    if self.nodes[w].needs_grad {
                        accumulate(&mut grads[w], g.transpose().matmul(self.value(x)));
                    }
                    if let Some(b) = b.filter(|&b| self.nodes[b].needs_grad) {
                        let mut colsum = DenseMatrix::zeros(1, g.cols());
                        for i in 0..g.rows() {
                            colsum.row_mut(0).iter_mut().zip(g.row(i)).for_each(|(s, &v)| *s += v);
                        }
                        accumulate(&mut grads[b], colsum);
                    }
                }
                Op::BackLinear { d, w } => {
                    if self.nodes[d].needs_grad {
                        accumulate(&mut grads[d], g.matmul(&self.value(w).transpose()));
                    }
                    if self.nodes[w].needs_grad {
                        accumulate(&mut grads[w], self.value(d).transpose().matmul(&g));
                    }
                }
                Op::Act { z, order } => {
                    if self.nodes[z].needs_grad {
                        let zm = self.value(z);
                        let data = zm.as_slice().iter().zip(g.as_slice()).map(|(&v, &gv)| gv * swish(v, order + 1)).collect();
                        accumulate(&mut grads[z], DenseMatrix::from_row_major(zm.rows(), zm.cols(), data));
                    }
                }
                Op::Mul(a, b) => {
                    if self.nodes[a].needs_grad {
                        accumulate(&mut grads[a], hadamard(&g, self.value(b)));
                    }
                    if self.nodes[b].needs_grad {
                        accumulate(&mut grads[b], hadamard(&g, self.value(a)));
                    }
                }
                Op::Add(a, b) => {
                    if self.nodes[a].needs_grad {
                        accumulate(&mut grads[a], g.clone());
                    }
                    if self.nodes[b].needs_grad {
                        accumulate(&mut grads[b], g);
                    }
                }
            }
        }
        grads
    }
}

/// Node ids of one batched network evaluation.
pub(crate) struct NetworkGraph<T> {
    pub tape: Tape<T>,
    /// `(W, b)` leaf ids per layer, output layer last.
    pub params: Vec<(Id, Id)>,
    /// `B × 1` outputs.
    pub f: Id,
    /// `B × d_in` input gradients.
    pub grad: Option<Id>,
    /// `B × d_in` directional derivatives of the input gradients along `ẋ`.
    pub hvp: Option<Id>,
}

impl<T: Real> NetworkGraph<T> {
    /// Records `f(X)`, optionally `∇ₓf` and `∇²ₓf Ẋ` (row per sample).
    pub fn build(params: &SurrogateParams<T>, x: DenseMatrix<T>, xdot: Option<DenseMatrix<T>>, with_grad: bool) -> Self {
        let mut tape = Tape::new();
        let batch = x.rows();
        let ids: Vec<(Id, Id)> = params
            .layers
            .iter()
            .map(|l| (tape.param(l.w.clone()), tape.param(DenseMatrix::from_row_major(1, l.b.len(), l.b.clone()))))
            .collect();
        let hidden = ids.len() - 1;
        let x = tape.constant(x);
        let mut h = x;
        let mut zs = Vec::with_capacity(hidden);
        for &(w, b) in &ids[..hidden] {
            let z = tape.linear(h, w, Some(b));
            zs.push(z);
            h = tape.act(z, 0);
        }
        let (wo, bo) = ids[hidden];
        let f = tape.linear(h, wo, Some(bo));
        let mut out = Self { tape, params: ids.clone(), f, grad: None, hvp: None };
        if !(with_grad || xdot.is_some()) {
            return out;
        }
        let tape = &mut out.tape;
        let s1: Vec<Id> = zs.iter().map(|&z| tape.act(z, 1)).collect();
        let ones = tape.constant(DenseMatrix::from_row_major(batch, 1, vec![T::one(); batch]));
        let wo_rows = tape.back_linear(ones, wo);
        // input gradient: gs[l] is ∂f/∂(input of layer l)
        let mut gs = vec![0; hidden];
        let mut d = tape.mul(wo_rows, s1[hidden - 1]);
        for l in (0..hidden).rev() {
            let g = tape.back_linear(d, ids[l].0);
            gs[l] = g;
            if l > 0 {
                d = tape.mul(g, s1[l - 1]);
            }
        }
        out.grad = Some(gs[0]);
        if let Some(xdot) = xdot {
            let s2: Vec<Id> = zs.iter().map(|&z| tape.act(z, 2)).collect();
            let xd = tape.constant(xdot);
            let mut zd = Vec::with_capacity(hidden);
            zd.push(tape.linear(xd, ids[0].0, None));
            for l in 1..hidden {
                let hd = tape.mul(s1[l - 1], zd[l - 1]);
                zd.push(tape.linear(hd, ids[l].0, None));
            }
            let curv = tape.mul(s2[hidden - 1], zd[hidden - 1]);
            let mut dd = tape.mul(wo_rows, curv);
            let mut gd = dd;
            for l in (0..hidden).rev() {
                gd = tape.back_linear(dd, ids[l].0);
                if l > 0 {
                    let a = tape.mul(gd, s1[l - 1]);
                    let c = tape.mul(s2[l - 1], zd[l - 1]);
                    let b = tape.mul(gs[l], c);
                    dd = tape.add(a, b);
                }
            }
            out.hvp = Some(gd);
        }
        out
    }

    /// Weight gradients in [`SurrogateParams::flatten`] order.
    pub fn param_gradient(&self, seeds: Vec<(Id, DenseMatrix<T>)>) -> Vec<T> {
        let grads = self.tape.backward(seeds);
        let mut out = Vec::new();
        for &(w, b) in &self.params {
            for id in [w, b] {
                match &grads[id] {
                    Some(g) => out.extend_from_slice(g.as_slice()),
                    None => out.extend(std::iter::repeat_n(T::zero(), self.tape.value(id).as_slice().len())),
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scalar::Dual;
    use crate::surrogate::network::value_and_input_grad;
    use crate::surrogate::SurrogateConfig;

    fn setup() -> (SurrogateParams<f64>, DenseMatrix<f64>, DenseMatrix<f64>) {
        let cfg = SurrogateConfig { per_edge: 4, width: 6, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut p = SurrogateParams::init(cfg, &mut rng).unwrap();
        for l in &mut p.layers {
            l.b.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
        }
        let d = cfg.input_dim();
        let x = DenseMatrix::from_fn(3, d, |_, _| rng.random_range(-0.5..0.5));
        let xd = DenseMatrix::from_fn(3, d, |_, _| rng.random_range(-1.0..1.0));
        (p, x, xd)
    }

    #[test]
    fn batched_quantities_match_single_sample_evaluation() {
        let (p, x, xd) = setup();
        let g = NetworkGraph::build(&p, x.clone(), Some(xd.clone()), true);
        for i in 0..3 {
            let (f, gx) = value_and_input_grad::<f64, f64>(&p.layers, x.row(i));
            assert!((g.tape.value(g.f)[(i, 0)] - f).abs() < 1e-14);
            let dual: Vec<Dual<f64>> = x.row(i).iter().zip(xd.row(i)).map(|(&a, &b)| Dual::new(a, b)).collect();
            let (_, gd) = value_and_input_grad::<f64, Dual<f64>>(&p.layers, &dual);
            for j in 0..x.cols() {
                assert!((g.tape.value(g.grad.unwrap())[(i, j)] - gx[j]).abs() < 1e-14);
                assert!((g.tape.value(g.hvp.unwrap())[(i, j)] - gd[j].eps).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let (p, x, xd) = setup();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let cf = DenseMatrix::from_fn(3, 1, |_, _| rng.random_range(-1.0..1.0));
        let cg = DenseMatrix::from_fn(3, x.cols(), |_, _| rng.random_range(-1.0..1.0));
        let ch = DenseMatrix::from_fn(3, x.cols(), |_, _| rng.random_range(-1.0..1.0));
        let objective = |q: &SurrogateParams<f64>| -> f64 {
            let g = NetworkGraph::build(q, x.clone(), Some(xd.clone()), true);
            let dot = |id: Id, c: &DenseMatrix<f64>| -> f64 { g.tape.value(id).as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum() };
            dot(g.f, &cf) + dot(g.grad.unwrap(), &cg) + dot(g.hvp.unwrap(), &ch)
        };
        let g = NetworkGraph::build(&p, x.clone(), Some(xd.clone()), true);
        let grad = g.param_gradient(vec![(g.f, cf.clone()), (g.grad.unwrap(), cg.clone()), (g.hvp.unwrap(), ch.clone())]);
        let flat = p.flatten();
        let h = 1e-6;
        let mut q = p.clone();
        for k in (0..flat.len()).step_by(7) {
            let mut fp = flat.clone();
            fp[k] += h;
            q.assign(&fp);
            let ep = objective(&q);
            fp[k] -= 2.0 * h;
            q.assign(&fp);
            let em = objective(&q);
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
