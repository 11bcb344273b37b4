//! Minimal reverse-mode differentiation over [`DenseTensor`]s.
//!
//! A [`Tape`] records one node per operation whose inputs depend on a
//! differentiable leaf. Operations on constants alone are evaluated eagerly
//! and never recorded, and an inference tape ([`Tape::inference`]) records
//! nothing at all, so intermediate values are freed as soon as their
//! [`Var`] handles drop.
//!
//! The operation set is closed: add, sub, elementwise mul, scalar mul,
//! matmul, transpose, concat, slice, sum, mean, softmax, silu, exp, log,
//! sqrt and l2norm. Everything else in the crate is built from these.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use crate::error::{EstError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{silu, silu_grad, DenseTensor};

pub type NodeId = usize;

/// Handle to a value produced on a tape.
#[derive(Clone, Debug)]
pub struct Var {
    value: Rc<DenseTensor>,
    id: Option<NodeId>,
}

impl Var {
    pub fn value(&self) -> &DenseTensor {
        &self.value
    }

    pub fn id(&self) -> Option<NodeId> {
        self.id
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn rows(&self) -> usize {
        self.value.rows()
    }

    pub fn cols(&self) -> usize {
        self.value.cols()
    }

    pub fn to_tensor(&self) -> DenseTensor {
        (*self.value).clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Param,
    Add,
    Sub,
    Mul,
    ScalarMul,
    MatMul,
    Transpose,
    Concat,
    Slice,
    Sum,
    Mean,
    Softmax,
    Silu,
    Exp,
    Log,
    Sqrt,
    L2Norm,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize, usize),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    Softmax(Var, usize),
    Silu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    L2Norm(Var, usize),
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Param(_) => OpKind::Param,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) | Op::ScaleBy(..) => OpKind::ScalarMul,
            Op::MatMul(..) => OpKind::MatMul,
            Op::Transpose(_) => OpKind::Transpose,
            Op::Concat(..) => OpKind::Concat,
            Op::Slice(..) => OpKind::Slice,
            Op::Sum(..) => OpKind::Sum,
            Op::Mean(..) => OpKind::Mean,
            Op::Softmax(..) => OpKind::Softmax,
            Op::Silu(_) => OpKind::Silu,
            Op::Exp(_) => OpKind::Exp,
            Op::Log(_) => OpKind::Log,
            Op::Sqrt(_) => OpKind::Sqrt,
            Op::L2Norm(..) => OpKind::L2Norm,
        }
    }

    fn inputs(&self) -> Vec<&Var> {
        match self {
            Op::Leaf | Op::Param(_) => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::ScaleBy(a, b) | Op::MatMul(a, b) => {
                vec![a, b]
            }
            Op::Concat(parts, _) => parts.iter().collect(),
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Slice(a, ..)
            | Op::Sum(a, _)
            | Op::Mean(a, _)
            | Op::Softmax(a, _)
            | Op::Silu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::L2Norm(a, _) => vec![a],
        }
    }
}

#[derive(Debug)]
struct TapeNode {
    op: Op,
    value: Rc<DenseTensor>,
}

/// Summary of one recorded node, for inspection and tests.
#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub kind: OpKind,
    pub inputs: Vec<NodeId>,
    pub shape: Vec<usize>,
}

pub struct Tape<'p> {
    nodes: RefCell<Vec<TapeNode>>,
    recording: bool,
    store: Option<&'p ParamStore>,
    param_vars: RefCell<HashMap<ParamId, Var>>,
}

impl<'p> Tape<'p> {
    /// A recording tape over `store`.
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            store: Some(store),
            param_vars: RefCell::new(HashMap::new()),
        }
    }

    /// A tape that evaluates but never records.
    pub fn inference(store: &'p ParamStore) -> Self {
        Self {
            recording: false,
            ..Self::new(store)
        }
    }

    /// A recording tape without parameters, for differentiating plain leaves.
    pub fn detached() -> Tape<'static> {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: true,
            store: None,
            param_vars: RefCell::new(HashMap::new()),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    pub fn node_info(&self, id: NodeId) -> Option<NodeInfo> {
        self.nodes.borrow().get(id).map(|n| NodeInfo {
            kind: n.op.kind(),
            inputs: n.op.inputs().iter().filter_map(|v| v.id).collect(),
            shape: n.value.shape().to_vec(),
        })
    }

    fn push(&self, op: Op, value: DenseTensor) -> Var {
        let value = Rc::new(value);
        let needs_node = self.recording && op.inputs().iter().any(|v| v.id.is_some());
        if !needs_node {
            return Var { value, id: None };
        }
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(TapeNode {
            op,
            value: Rc::clone(&value),
        });
        Var {
            value,
            id: Some(id),
        }
    }

    pub fn constant(&self, t: DenseTensor) -> Var {
        Var {
            value: Rc::new(t),
            id: None,
        }
    }

    pub fn constant_rc(&self, t: Rc<DenseTensor>) -> Var {
        Var { value: t, id: None }
    }

    /// A differentiable input that is not a stored parameter.
    pub fn leaf(&self, t: DenseTensor) -> Var {
        if !self.recording {
            return self.constant(t);
        }
        let value = Rc::new(t);
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(TapeNode {
            op: Op::Leaf,
            value: Rc::clone(&value),
        });
        Var {
            value,
            id: Some(id),
        }
    }

    /// The tape-local handle for a stored parameter; repeated calls share one node.
    pub fn param(&self, pid: ParamId) -> Var {
        if let Some(v) = self.param_vars.borrow().get(&pid) {
            return v.clone();
        }
        let store = self.store.expect("tape has no parameter store");
        let value = Rc::new(store.get(pid).clone());
        let var = if self.recording {
            let mut nodes = self.nodes.borrow_mut();
            let id = nodes.len();
            nodes.push(TapeNode {
                op: Op::Param(pid),
                value: Rc::clone(&value),
            });
            Var {
                value,
                id: Some(id),
            }
        } else {
            Var { value, id: None }
        };
        self.param_vars.borrow_mut().insert(pid, var.clone());
        var
    }

    pub fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        let v = a.value.add(&b.value)?;
        Ok(self.push(Op::Add(a.clone(), b.clone()), v))
    }

    pub fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        let v = a.value.sub(&b.value)?;
        Ok(self.push(Op::Sub(a.clone(), b.clone()), v))
    }

    pub fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        let v = a.value.mul(&b.value)?;
        Ok(self.push(Op::Mul(a.clone(), b.clone()), v))
    }

    pub fn scale(&self, a: &Var, k: f64) -> Var {
        let v = a.value.scale(k);
        self.push(Op::Scale(a.clone(), k), v)
    }

    /// Multiply by a `[1, 1]` tensor that may itself be differentiable.
    pub fn scale_by(&self, a: &Var, s: &Var) -> Result<Var> {
        if s.value.len() != 1 {
            return Err(EstError::ShapeMismatch {
                op: "scalar-mul",
                left: a.shape().to_vec(),
                right: s.shape().to_vec(),
            });
        }
        let v = a.value.scale(s.value.item());
        Ok(self.push(Op::ScaleBy(a.clone(), s.clone()), v))
    }

    pub fn matmul(&self, a: &Var, b: &Var) -> Result<Var> {
        let v = a.value.matmul(&b.value)?;
        Ok(self.push(Op::MatMul(a.clone(), b.clone()), v))
    }

    pub fn transpose(&self, a: &Var) -> Result<Var> {
        let v = a.value.transpose()?;
        Ok(self.push(Op::Transpose(a.clone()), v))
    }

    pub fn concat(&self, parts: &[Var], axis: usize) -> Result<Var> {
        let refs: Vec<&DenseTensor> = parts.iter().map(|p| p.value.as_ref()).collect();
        let v = DenseTensor::concat(&refs, axis)?;
        Ok(self.push(Op::Concat(parts.to_vec(), axis), v))
    }

    pub fn slice(&self, a: &Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        let v = a.value.slice(axis, start, end)?;
        Ok(self.push(Op::Slice(a.clone(), axis, start, end), v))
    }

    pub fn sum(&self, a: &Var, axis: Option<usize>) -> Result<Var> {
        let v = a.value.sum_axis(axis)?;
        Ok(self.push(Op::Sum(a.clone(), axis), v))
    }

    pub fn mean(&self, a: &Var, axis: Option<usize>) -> Result<Var> {
        let n = reduced_count(a.shape(), axis);
        if n == 0 {
            return Err(EstError::invalid("mean over empty axis"));
        }
        let v = a.value.sum_axis(axis)?.scale(1.0 / n as f64);
        Ok(self.push(Op::Mean(a.clone(), axis), v))
    }

    pub fn softmax(&self, a: &Var, axis: usize) -> Result<Var> {
        let v = a.value.softmax(axis)?;
        Ok(self.push(Op::Softmax(a.clone(), axis), v))
    }

    pub fn silu(&self, a: &Var) -> Var {
        let v = a.value.map(silu);
        self.push(Op::Silu(a.clone()), v)
    }

    pub fn exp(&self, a: &Var) -> Var {
        let v = a.value.map(f64::exp);
        self.push(Op::Exp(a.clone()), v)
    }

    pub fn log(&self, a: &Var) -> Var {
        let v = a.value.map(f64::ln);
        self.push(Op::Log(a.clone()), v)
    }

    pub fn sqrt(&self, a: &Var) -> Var {
        let v = a.value.map(f64::sqrt);
        self.push(Op::Sqrt(a.clone()), v)
    }

    pub fn l2norm(&self, a: &Var, axis: usize) -> Result<Var> {
        let v = a.value.l2norm(axis)?;
        Ok(self.push(Op::L2Norm(a.clone(), axis), v))
    }

    /// Propagate gradients from the scalar `loss` back through the tape.
    pub fn backward(&self, loss: &Var) -> Result<Gradients> {
        if loss.value.len() != 1 {
            return Err(EstError::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<DenseTensor>> = vec![None; nodes.len()];
        let Some(root) = loss.id else {
            return Ok(Gradients {
                nodes: grads,
                params: HashMap::new(),
            });
        };
        grads[root] = Some(DenseTensor::new(loss.shape().to_vec(), vec![1.0])?);
        let mut params = HashMap::new();
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            for (target, contrib) in local_grads(&node.op, &node.value, &g)? {
                accumulate(&mut grads[target], contrib)?;
            }
            if let Op::Param(pid) = node.op {
                params.insert(pid, g.clone());
            }
            grads[id] = Some(g);
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }
}

fn reduced_count(shape: &[usize], axis: Option<usize>) -> usize {
    match axis {
        None => shape.iter().product(),
        Some(a) => shape.get(a).copied().unwrap_or(0),
    }
}

fn accumulate(slot: &mut Option<DenseTensor>, g: DenseTensor) -> Result<()> {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn broadcast_reduced(g: &DenseTensor, shape: &[usize], axis: Option<usize>) -> DenseTensor {
    let (r, c) = (shape[0], shape[1]);
    let mut out = DenseTensor::zeros(r, c);
    let data = out.data_mut();
    for i in 0..r {
        for j in 0..c {
            data[i * c + j] = match axis {
                None => g.item(),
                Some(0) => g.data()[j],
                _ => g.data()[i],
            };
        }
    }
    out
}

fn local_grads(op: &Op, out: &DenseTensor, g: &DenseTensor) -> Result<Vec<(NodeId, DenseTensor)>> {
    let mut res = Vec::new();
    let mut push = |v: &Var, grad: DenseTensor| {
        if let Some(id) = v.id {
            res.push((id, grad));
        }
    };
    match op {
        Op::Leaf | Op::Param(_) => {}
        Op::Add(a, b) => {
            push(a, g.clone());
            push(b, g.clone());
        }
        Op::Sub(a, b) => {
            push(a, g.clone());
            push(b, g.scale(-1.0));
        }
        Op::Mul(a, b) => {
            if a.id.is_some() {
                push(a, g.mul(&b.value)?);
            }
            if b.id.is_some() {
                push(b, g.mul(&a.value)?);
            }
        }
        Op::Scale(a, k) => push(a, g.scale(*k)),
        Op::ScaleBy(a, s) => {
            if a.id.is_some() {
                push(a, g.scale(s.value.item()));
            }
            if s.id.is_some() {
                let d: f64 = g.data().iter().zip(a.value.data()).map(|(x, y)| x * y).sum();
                push(s, DenseTensor::new(s.shape().to_vec(), vec![d])?);
            }
        }
        Op::MatMul(a, b) => {
            if a.id.is_some() {
                push(a, g.matmul_nt(&b.value)?);
            }
            if b.id.is_some() {
                push(b, a.value.matmul_tn(g)?);
            }
        }
        Op::Transpose(a) => push(a, g.transpose()?),
        Op::Concat(parts, axis) => {
            let mut offset = 0;
            for p in parts {
                let w = p.shape()[*axis];
                if p.id.is_some() {
                    push(p, g.slice(*axis, offset, offset + w)?);
                }
                offset += w;
            }
        }
        Op::Slice(a, axis, start, end) => {
            let shape = a.shape();
            let mut full = DenseTensor::zeros(shape[0], shape[1]);
            let cols = shape[1];
            for i in 0..g.rows() {
                for j in 0..g.cols() {
                    let (r, c) = if *axis == 0 { (i + start, j) } else { (i, j + start) };
                    full.data_mut()[r * cols + c] = g.get(i, j);
                }
            }
            debug_assert!(end >= start);
            push(a, full);
        }
        Op::Sum(a, axis) => push(a, broadcast_reduced(g, a.shape(), *axis)),
        Op::Mean(a, axis) => {
            let n = reduced_count(a.shape(), *axis) as f64;
            push(a, broadcast_reduced(g, a.shape(), *axis).scale(1.0 / n));
        }
        Op::Softmax(a, axis) => {
            let gy = g.mul(out)?;
            let s = broadcast_reduced(&gy.sum_axis(Some(*axis))?, out.shape(), Some(*axis));
            push(a, out.mul(&g.sub(&s)?)?);
        }
        Op::Silu(a) => push(a, a.value.zip_map(g, "silu", |x, gg| gg * silu_grad(x))?),
        Op::Exp(a) => push(a, g.mul(out)?),
        Op::Log(a) => push(a, g.zip_map(&a.value, "log", |gg, x| gg / x)?),
        Op::Sqrt(a) => push(
            a,
            g.zip_map(out, "sqrt", |gg, y| if y > 0.0 { gg / (2.0 * y) } else { 0.0 })?,
        ),
        Op::L2Norm(a, axis) => {
            // Zero vectors get the zero subgradient.
            let gb = broadcast_reduced(g, a.shape(), Some(*axis));
            let nb = broadcast_reduced(out, a.shape(), Some(*axis));
            let mut d = a.value.mul(&gb)?;
            for (v, n) in d.data_mut().iter_mut().zip(nb.data()) {
                *v = if *n > 0.0 { *v / n } else { 0.0 };
            }
            push(a, d);
        }
    }
    Ok(res)
}

/// Gradients produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<DenseTensor>>,
    params: HashMap<ParamId, DenseTensor>,
}

impl Gradients {
    pub fn wrt(&self, v: &Var) -> Option<&DenseTensor> {
        v.id.and_then(|id| self.nodes.get(id)).and_then(Option::as_ref)
    }

    pub fn param(&self, pid: ParamId) -> Option<&DenseTensor> {
        self.params.get(&pid)
    }

    pub fn params(&self) -> &HashMap<ParamId, DenseTensor> {
        &self.params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&Tape, &Var) -> Var, x: DenseTensor) -> f64 {
        let tape = Tape::detached();
        let xv = tape.leaf(x.clone());
        let y = f(&tape, &xv);
        let grads = tape.backward(&y).unwrap();
        let g = grads.wrt(&xv).unwrap().clone();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..x.len() {
            let eval = |delta: f64| {
                let mut xp = x.clone();
                xp.data_mut()[i] += delta;
                let t = Tape::detached();
                let v = t.constant(xp);
                f(&t, &v).value().item()
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let ad = g.data()[i];
            worst = worst.max((ad - fd).abs() / (ad.abs() + 1e-8));
        }
        worst
    }

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::detached();
        let x = tape.leaf(DenseTensor::row_vector(vec![1.0, 2.0]));
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.sum(&sq, None).unwrap();
        let g = tape.backward(&loss).unwrap();
        assert_eq!(g.wrt(&x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn silu_derivative_at_one() {
        // Central difference at h = 1e-5 gives 0.927670511...
        let tape = Tape::detached();
        let x = tape.leaf(DenseTensor::scalar(1.0));
        let y = tape.silu(&x);
        let g = tape.backward(&y).unwrap();
        let fd = (silu(1.0 + 1e-5) - silu(1.0 - 1e-5)) / 2e-5;
        assert!((g.wrt(&x).unwrap().item() - fd).abs() < 1e-9);
        assert!((fd - 0.927_670_511).abs() < 1e-8);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let tape = Tape::detached();
        let x = tape.leaf(DenseTensor::row_vector(vec![1.0, 2.0]));
        assert!(tape.backward(&x).is_err());
    }

    #[test]
    fn node_ids_increase_and_constants_are_not_recorded() {
        let tape = Tape::detached();
        let c = tape.constant(DenseTensor::scalar(2.0));
        let c2 = tape.exp(&c);
        assert!(c2.id().is_none());
        let x = tape.leaf(DenseTensor::scalar(1.0));
        let y = tape.mul(&x, &c2).unwrap();
        let z = tape.exp(&y);
        assert!(x.id() < y.id() && y.id() < z.id());
        let info = tape.node_info(z.id().unwrap()).unwrap();
        assert_eq!(info.kind, OpKind::Exp);
        assert_eq!(info.inputs, vec![y.id().unwrap()]);
    }

    #[test]
    fn softmax_and_norm_gradients() {
        let x = DenseTensor::from_rows(&[vec![0.3, -0.7, 0.2], vec![0.9, 0.1, -0.4]]).unwrap();
        let w = DenseTensor::from_rows(&[vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -0.5]]).unwrap();
        for axis in [0, 1] {
            let w2 = w.clone();
            let err = fd_check(
                move |t, v| {
                    let s = t.softmax(v, axis).unwrap();
                    let c = t.constant(w2.clone());
                    t.sum(&t.mul(&s, &c).unwrap(), None).unwrap()
                },
                x.clone(),
            );
            assert!(err < 1e-6, "softmax axis {axis}: {err}");
            let w3 = w.clone();
            let err = fd_check(
                move |t, v| {
                    let n = t.l2norm(v, axis).unwrap();
                    let c = t.constant(w3.slice(axis, 0, 1).unwrap());
                    t.sum(&t.mul(&n, &c).unwrap(), None).unwrap()
                },
                x.clone(),
            );
            assert!(err < 1e-6, "l2norm axis {axis}: {err}");
        }
    }

    #[test]
    fn zero_vector_norm_has_zero_gradient() {
        let tape = Tape::detached();
        let x = tape.leaf(DenseTensor::zeros(3, 1));
        let n = tape.l2norm(&x, 0).unwrap();
        let g = tape.backward(&n).unwrap();
        assert!(g.wrt(&x).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inference_tape_records_nothing() {
        let store = ParamStore::default();
        let tape = Tape::inference(&store);
        let x = tape.leaf(DenseTensor::scalar(1.0));
        let y = tape.exp(&x);
        assert!(y.id().is_none());
        assert!(tape.is_empty());
    }
}
