use std::cell::{Ref, RefCell};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::ops;
use super::{Result, Tensor, TensorError};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// The closed set of differentiable primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Primitive {
    MatMul,
    Add,
    Scale,
    Mul,
    Div,
    Concat,
    Gather,
    ScatterAdd,
    Relu,
    RowSum,
    RowMean,
    Normalize,
    Exp,
    Log,
    Transpose,
}

impl Primitive {
    pub const ALL: [Primitive; 15] = [
        Primitive::MatMul,
        Primitive::Add,
        Primitive::Scale,
        Primitive::Mul,
        Primitive::Div,
        Primitive::Concat,
        Primitive::Gather,
        Primitive::ScatterAdd,
        Primitive::Relu,
        Primitive::RowSum,
        Primitive::RowMean,
        Primitive::Normalize,
        Primitive::Exp,
        Primitive::Log,
        Primitive::Transpose,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Scale => "scale",
            Primitive::Mul => "mul",
            Primitive::Div => "div",
            Primitive::Concat => "concat",
            Primitive::Gather => "gather",
            Primitive::ScatterAdd => "scatter_add",
            Primitive::Relu => "relu",
            Primitive::RowSum => "row_sum",
            Primitive::RowMean => "row_mean",
            Primitive::Normalize => "l2_normalize",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::Transpose => "transpose",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    Scale(usize, f64),
    Mul(usize, usize),
    Div(usize, usize),
    Concat(usize, usize),
    Gather(usize, Vec<usize>),
    ScatterAdd(usize, Vec<usize>),
    Relu(usize),
    RowSum(usize),
    RowMean(usize),
    Normalize(usize),
    Exp(usize),
    Log(usize),
    Transpose(usize),
}

impl Op {
    fn inputs(&self) -> [Option<usize>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            MatMul(a, b) | Add(a, b) | Mul(a, b) | Div(a, b) | Concat(a, b) => [Some(a), Some(b)],
            Scale(a, _)
            | Gather(a, _)
            | ScatterAdd(a, _)
            | Relu(a)
            | RowSum(a)
            | RowMean(a)
            | Normalize(a)
            | Exp(a)
            | Log(a)
            | Transpose(a) => [Some(a), None],
        }
    }

    fn primitive(&self) -> Option<Primitive> {
        use Op::*;
        Some(match self {
            Leaf => return None,
            MatMul(..) => Primitive::MatMul,
            Add(..) => Primitive::Add,
            Scale(..) => Primitive::Scale,
            Mul(..) => Primitive::Mul,
            Div(..) => Primitive::Div,
            Concat(..) => Primitive::Concat,
            Gather(..) => Primitive::Gather,
            ScatterAdd(..) => Primitive::ScatterAdd,
            Relu(..) => Primitive::Relu,
            RowSum(..) => Primitive::RowSum,
            RowMean(..) => Primitive::RowMean,
            Normalize(..) => Primitive::Normalize,
            Exp(..) => Primitive::Exp,
            Log(..) => Primitive::Log,
            Transpose(..) => Primitive::Transpose,
        })
    }
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

/// Append-only record of one forward pass. Nodes are pushed in evaluation
/// order, which is already a topological order, so the backward sweep is a
/// single reverse scan.
pub struct Tape {
    id: u64,
    nodes: RefCell<Vec<Node>>,
    fault: Option<Primitive>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            fault: None,
        }
    }

    /// Test hook: the backward rule of `primitive` is deliberately skewed by 1%.
    #[doc(hidden)]
    pub fn with_fault(primitive: Primitive) -> Self {
        Self {
            fault: Some(primitive),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn index(&self, v: Var) -> Result<usize> {
        if v.tape == self.id {
            Ok(v.index)
        } else {
            Err(TensorError::DetachedTensor)
        }
    }

    fn push(&self, op: Op, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let tracked = op.inputs().iter().flatten().any(|&i| nodes[i].tracked);
        nodes.push(Node { value, op, tracked });
        Var {
            tape: self.id,
            index: nodes.len() - 1,
        }
    }

    /// A differentiable input (parameter or probe).
    pub fn leaf(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: true,
        });
        Var {
            tape: self.id,
            index: nodes.len() - 1,
        }
    }

    /// An input that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            tracked: false,
        });
        Var {
            tape: self.id,
            index: nodes.len() - 1,
        }
    }

    /// Borrow a recorded value.
    ///
    /// Panics if `v` was recorded on another tape.
    pub fn value(&self, v: Var) -> Ref<'_, Tensor> {
        let i = self
            .index(v)
            .expect("variable recorded on a different tape");
        Ref::map(self.nodes.borrow(), |n| &n[i].value)
    }

    fn unary(
        &self,
        a: Var,
        make: impl FnOnce(usize) -> Op,
        f: impl FnOnce(&Tensor) -> Result<Tensor>,
    ) -> Result<Var> {
        let ia = self.index(a)?;
        let value = f(&self.nodes.borrow()[ia].value)?;
        Ok(self.push(make(ia), value))
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        make: impl FnOnce(usize, usize) -> Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
    ) -> Result<Var> {
        let (ia, ib) = (self.index(a)?, self.index(b)?);
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[ia].value, &nodes[ib].value)?
        };
        Ok(self.push(make(ia, ib), value))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::MatMul, ops::matmul)
    }

    /// Elementwise sum; `b` may be a single row broadcast over `a`.
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add, ops::add)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul, ops::mul)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Div, ops::div)
    }

    pub fn concat(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Concat, ops::concat_cols)
    }

    pub fn scale(&self, a: Var, s: f64) -> Result<Var> {
        self.unary(a, |i| Op::Scale(i, s), |t| Ok(ops::scale(t, s)))
    }

    pub fn gather(&self, a: Var, index: &[usize]) -> Result<Var> {
        self.unary(
            a,
            |i| Op::Gather(i, index.to_vec()),
            |t| ops::gather_rows(t, index),
        )
    }

    pub fn scatter_add(&self, a: Var, index: &[usize], out_rows: usize) -> Result<Var> {
        self.unary(
            a,
            |i| Op::ScatterAdd(i, index.to_vec()),
            |t| ops::scatter_add_rows(t, index, out_rows),
        )
    }

    pub fn relu(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu, |t| Ok(ops::relu(t)))
    }

    pub fn row_sum(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::RowSum, ops::row_sum)
    }

    pub fn row_mean(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::RowMean, ops::row_mean)
    }

    pub fn l2_normalize(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Normalize, ops::l2_normalize_rows)
    }

    pub fn exp(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp, |t| Ok(ops::exp(t)))
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Log, |t| Ok(ops::log(t)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        self.unary(a, Op::Transpose, ops::transpose)
    }

    // Composites built only from the primitives above.

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let nb = self.scale(b, -1.0)?;
        self.add(a, nb)
    }

    /// Sum of every entry as a `1×1` tensor.
    pub fn sum_all(&self, a: Var) -> Result<Var> {
        let rows = self.row_sum(a)?;
        let t = self.transpose(rows)?;
        self.row_sum(t)
    }

    /// `x·w + b`.
    pub fn affine(&self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Pairwise cosine similarity of rows, `n×d, m×d → n×m`.
    pub fn cosine_sim(&self, a: Var, b: Var) -> Result<Var> {
        {
            let (va, vb) = (self.value(a), self.value(b));
            if va.shape().len() != 2 || vb.shape().len() != 2 || va.cols() != vb.cols() {
                return Err(TensorError::ShapeMismatch {
                    op: "cosine_sim",
                    left: va.shape().to_vec(),
                    right: vb.shape().to_vec(),
                });
            }
        }
        let na = self.l2_normalize(a)?;
        let nb = self.l2_normalize(b)?;
        let nbt = self.transpose(nb)?;
        self.matmul(na, nbt)
    }

    /// Reverse sweep from a scalar `loss`. Every tracked node reachable from
    /// `loss` receives its gradient; everything else reads as zero.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let last = self.index(loss)?;
        let nodes = self.nodes.borrow();
        if nodes[last].value.len() != 1 {
            return Err(TensorError::NotScalar(nodes[last].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[last] = Some(Tensor::new(nodes[last].value.shape().to_vec(), vec![1.0])?);

        for i in (0..=last).rev() {
            let node = &nodes[i];
            if !node.tracked {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut contribs = self.local_grads(&nodes, node, &g)?;
            if self.fault.is_some() && self.fault == node.op.primitive() {
                if let Some((_, first)) = contribs.first_mut() {
                    *first = ops::scale(first, 1.01);
                }
            }
            for (j, gj) in contribs.drain(..) {
                if !nodes[j].tracked {
                    continue;
                }
                grads[j] = Some(match grads[j].take() {
                    Some(acc) => ops::add(&acc, &gj)?,
                    None => gj,
                });
            }
            grads[i] = Some(g);
        }
        Ok(Gradients {
            tape: self.id,
            shapes: nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            grads,
        })
    }

    fn local_grads(&self, nodes: &[Node], node: &Node, g: &Tensor) -> Result<Vec<(usize, Tensor)>> {
        let val = |i: usize| &nodes[i].value;
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::MatMul(a, b) => vec![
                (*a, ops::matmul(g, &ops::transpose(val(*b))?)?),
                (*b, ops::matmul(&ops::transpose(val(*a))?, g)?),
            ],
            Op::Add(a, b) => {
                let gb = if val(*b).shape() == g.shape() {
                    g.clone()
                } else {
                    column_sums(g)
                };
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Scale(a, s) => vec![(*a, ops::scale(g, *s))],
            Op::Mul(a, b) => vec![(*a, ops::mul(g, val(*b))?), (*b, ops::mul(g, val(*a))?)],
            Op::Div(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let gb: Vec<f64> = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .zip(y.data())
                    .map(|((&g, &x), &y)| -g * x / (y * y))
                    .collect();
                vec![
                    (*a, ops::div(g, y)?),
                    (*b, Tensor::new(y.shape().to_vec(), gb)?),
                ]
            }
            Op::Concat(a, b) => {
                let ca = val(*a).cols();
                let (n, c) = (g.rows(), g.cols());
                let mut ga = Vec::with_capacity(n * ca);
                let mut gb = Vec::with_capacity(n * (c - ca));
                for r in 0..n {
                    ga.extend_from_slice(&g.row(r)[..ca]);
                    gb.extend_from_slice(&g.row(r)[ca..]);
                }
                vec![
                    (*a, Tensor::matrix(n, ca, ga)?),
                    (*b, Tensor::matrix(n, c - ca, gb)?),
                ]
            }
            Op::Gather(a, index) => vec![(*a, ops::scatter_add_rows(g, index, val(*a).rows())?)],
            Op::ScatterAdd(a, index) => vec![(*a, ops::gather_rows(g, index)?)],
            Op::Relu(a) => {
                let x = val(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
                    .collect();
                vec![(*a, Tensor::new(x.shape().to_vec(), data)?)]
            }
            Op::RowSum(a) | Op::RowMean(a) => {
                let x = val(*a);
                let (n, m) = (x.rows(), x.cols());
                let k = if matches!(node.op, Op::RowMean(_)) {
                    1.0 / m as f64
                } else {
                    1.0
                };
                let data = (0..n)
                    .flat_map(|r| std::iter::repeat_n(g.data()[r] * k, m))
                    .collect();
                vec![(*a, Tensor::matrix(n, m, data)?)]
            }
            Op::Normalize(a) => {
                let x = val(*a);
                let y = &node.value;
                let norms = ops::row_norms(x)?;
                let mut out = Tensor::zeros(x.rows(), x.cols());
                for (r, norm) in norms.iter().enumerate() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot = yr.iter().zip(gr).fold(0.0, |s, (&a, &b)| s + a * b);
                    for ((o, &yv), &gv) in out.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gv - yv * dot) / norm;
                    }
                }
                vec![(*a, out)]
            }
            Op::Exp(a) => vec![(*a, ops::mul(g, &node.value)?)],
            Op::Log(a) => vec![(*a, ops::div(g, val(*a))?)],
            Op::Transpose(a) => vec![(*a, ops::transpose(g)?)],
        })
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let (n, m) = (g.rows(), g.cols());
    let mut out = vec![0.0; m];
    for r in 0..n {
        for (o, &x) in out.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    Tensor::matrix(1, m, out).expect("column sums shape")
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    tape: u64,
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when `v` does not influence the loss.
    pub fn wrt(&self, v: Var) -> Result<Tensor> {
        if v.tape != self.tape {
            return Err(TensorError::DetachedTensor);
        }
        Ok(match self.grads.get(v.index).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => Tensor::new(
                self.shapes[v.index].clone(),
                vec![0.0; self.shapes[v.index].iter().product()],
            )?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let sq = tape.mul(x, x).unwrap();
        let loss = tape.sum_all(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(x).unwrap().item(), 6.0);
    }

    #[test]
    fn unreached_parameter_gets_zero() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0));
        let p = tape.leaf(Tensor::zeros(2, 3));
        let loss = tape.exp(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(p).unwrap(), Tensor::zeros(2, 3));
    }

    #[test]
    fn not_scalar_and_detached() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2));
        assert_eq!(
            tape.backward(x).err(),
            Some(TensorError::NotScalar(vec![2, 2]))
        );
        let other = Tape::new();
        let y = other.leaf(Tensor::scalar(1.0));
        assert_eq!(tape.backward(y).err(), Some(TensorError::DetachedTensor));
        assert!(matches!(tape.exp(y), Err(TensorError::DetachedTensor)));
    }

    #[test]
    fn on_tape_matches_off_tape() {
        let a = Tensor::from_rows(&[vec![0.3, -1.2], vec![2.0, 0.7]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.1, 0.4], vec![-0.5, 0.9]]).unwrap();
        let tape = Tape::new();
        let (va, vb) = (tape.leaf(a.clone()), tape.constant(b.clone()));
        let s = tape.cosine_sim(va, vb).unwrap();
        assert_eq!(*tape.value(s), ops::cosine_sim(&a, &b).unwrap());
    }

    #[test]
    fn fault_skews_gradient() {
        let tape = Tape::with_fault(Primitive::Exp);
        let x = tape.leaf(Tensor::scalar(0.0));
        let e = tape.exp(x).unwrap();
        let g = tape.backward(e).unwrap();
        assert!((g.wrt(x).unwrap().item() - 1.01).abs() < 1e-15);
    }

    #[test]
    fn primitive_names_round_trip() {
        for p in Primitive::ALL {
            assert_eq!(Primitive::from_name(p.name()), Some(p));
        }
    }
}
