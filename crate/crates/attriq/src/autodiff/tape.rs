use super::{AutodiffError, TensorValue};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input(usize),
    Constant(TensorValue),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Concat(Vec<NodeId>),
    RowSelect(NodeId, Vec<usize>),
    Tanh(NodeId),
    Relu(NodeId),
    Softmax(NodeId),
    Log(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    MeanRows(NodeId),
    Max(NodeId),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Constant(_) => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::Dot(..) => "dot",
            Op::Concat(_) => "concat",
            Op::RowSelect(..) => "row_select",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Softmax(_) => "softmax",
            Op::Log(_) => "log",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::MeanRows(_) => "mean_rows",
            Op::Max(_) => "max",
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// Append-only record of a computation. Node ids are topologically ordered
/// because every op can only reference nodes that already exist.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: Vec<NodeId>,
}

/// Forward values for every node of a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    values: Vec<TensorValue>,
}

impl Evaluation {
    pub fn value(&self, node: NodeId) -> &TensorValue {
        &self.values[node.0]
    }

    /// Scalar value of `node`; `None` when the node is not single-element.
    pub fn scalar(&self, node: NodeId) -> Option<f64> {
        self.values[node.0].item()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Gradient of a scalar target with respect to each tape input, in input
/// declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    inputs: Vec<TensorValue>,
}

impl Gradients {
    pub fn input(&self, slot: usize) -> &TensorValue {
        &self.inputs[slot]
    }

    pub fn into_inputs(self) -> Vec<TensorValue> {
        self.inputs
    }

    pub fn as_slice(&self) -> &[TensorValue] {
        &self.inputs
    }
}

fn is_scalar_shape(shape: &[usize]) -> bool {
    shape.iter().product::<usize>() == 1 && shape.len() <= 1
}

fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>, AutodiffError> {
    if a == b {
        Ok(a.to_vec())
    } else if is_scalar_shape(a) {
        Ok(b.to_vec())
    } else if is_scalar_shape(b) {
        Ok(a.to_vec())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            left: a.to_vec(),
            right: b.to_vec(),
        })
    }
}

/// Views a rank-1 or rank-2 shape as a matrix. Vectors become a row on the
/// left of a product and a column on the right.
fn as_matrix(shape: &[usize], left: bool) -> Option<(usize, usize)> {
    match shape {
        [n] if left => Some((1, *n)),
        [n] => Some((*n, 1)),
        [r, c] => Some((*r, *c)),
        _ => None,
    }
}

fn matmul_raw(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * m..(p + 1) * m];
            let orow = &mut out[i * m..(i + 1) * m];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Index of the first maximal element.
pub(crate) fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.len()
    }

    pub fn input_shape(&self, slot: usize) -> &[usize] {
        &self.nodes[self.inputs[slot].0].shape
    }

    pub fn shape(&self, node: NodeId) -> &[usize] {
        &self.nodes[node.0].shape
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    /// Declares a free input. Inputs are bound positionally in declaration order.
    pub fn input(&mut self, shape: &[usize]) -> NodeId {
        let slot = self.inputs.len();
        let id = self.push(Op::Input(slot), shape.to_vec());
        self.inputs.push(id);
        id
    }

    pub fn constant(&mut self, value: TensorValue) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Constant(value), shape)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = broadcast_shape("add", self.shape(a), self.shape(b))?;
        Ok(self.push(Op::Add(a, b), shape))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = broadcast_shape("sub", self.shape(a), self.shape(b))?;
        Ok(self.push(Op::Sub(a, b), shape))
    }

    /// Elementwise product; either side may be a scalar.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = broadcast_shape("mul", self.shape(a), self.shape(b))?;
        Ok(self.push(Op::Mul(a, b), shape))
    }

    /// Matrix product over rank-1/rank-2 operands (`[k]x[k,m] -> [m]`,
    /// `[n,k]x[k] -> [n]`, `[n,k]x[k,m] -> [n,m]`).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let mismatch = || AutodiffError::ShapeMismatch {
            op: "matmul",
            left: sa.clone(),
            right: sb.clone(),
        };
        let (n, k) = as_matrix(&sa, true).ok_or_else(mismatch)?;
        let (k2, m) = as_matrix(&sb, false).ok_or_else(mismatch)?;
        if k != k2 || (sa.len() == 1 && sb.len() == 1) {
            return Err(mismatch());
        }
        let shape = match (sa.len(), sb.len()) {
            (1, _) => vec![m],
            (_, 1) => vec![n],
            _ => vec![n, m],
        };
        Ok(self.push(Op::MatMul(a, b), shape))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::ShapeMismatch {
                op: "dot",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(self.push(Op::Dot(a, b), Vec::new()))
    }

    /// Concatenates along the leading axis; trailing extents must agree.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let first = parts.first().ok_or(AutodiffError::InvalidShape {
            op: "concat",
            shape: Vec::new(),
        })?;
        let tail = self.shape(*first).get(1..).unwrap_or(&[]).to_vec();
        let mut lead = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.is_empty() || s[1..] != tail[..] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    left: self.shape(*first).to_vec(),
                    right: s.to_vec(),
                });
            }
            lead += s[0];
        }
        let mut shape = vec![lead];
        shape.extend(tail);
        Ok(self.push(Op::Concat(parts.to_vec()), shape))
    }

    /// Gathers rows of a `[V, d]` table (embedding lookup).
    pub fn row_select(&mut self, table: NodeId, rows: &[usize]) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(table).to_vec();
        let [v, d] = shape[..] else {
            return Err(AutodiffError::InvalidShape {
                op: "row_select",
                shape,
            });
        };
        if let Some(&bad) = rows.iter().find(|&&r| r >= v) {
            return Err(AutodiffError::RowOutOfRange { row: bad, rows: v });
        }
        Ok(self.push(Op::RowSelect(table, rows.to_vec()), vec![rows.len(), d]))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Tanh(a), shape)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Relu(a), shape)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let shape = self.shape(a).to_vec();
        self.push(Op::Log(a), shape)
    }

    /// Softmax of a non-empty vector.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(a).to_vec();
        if shape.len() != 1 || shape[0] == 0 {
            return Err(AutodiffError::InvalidShape { op: "softmax", shape });
        }
        Ok(self.push(Op::Softmax(a), shape))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.push(Op::Sum(a), Vec::new())
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.non_empty("mean", a)?;
        Ok(self.push(Op::Mean(a), Vec::new()))
    }

    /// Column-wise mean of a `[n, d]` matrix, giving `[d]`.
    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        let shape = self.shape(a).to_vec();
        match shape[..] {
            [n, d] if n > 0 => Ok(self.push(Op::MeanRows(a), vec![d])),
            _ => Err(AutodiffError::InvalidShape {
                op: "mean_rows",
                shape,
            }),
        }
    }

    /// Maximum over all elements; the subgradient goes to the lowest index
    /// among ties.
    pub fn max(&mut self, a: NodeId) -> Result<NodeId, AutodiffError> {
        self.non_empty("max", a)?;
        Ok(self.push(Op::Max(a), Vec::new()))
    }

    fn non_empty(&self, op: &'static str, a: NodeId) -> Result<(), AutodiffError> {
        if self.shape(a).iter().product::<usize>() == 0 {
            return Err(AutodiffError::InvalidShape {
                op,
                shape: self.shape(a).to_vec(),
            });
        }
        Ok(())
    }

    /// Evaluates every node. `bindings[i]` binds the i-th declared input.
    pub fn forward(&self, bindings: &[TensorValue]) -> Result<Evaluation, AutodiffError> {
        if bindings.len() != self.inputs.len() {
            return Err(AutodiffError::Unbound {
                expected: self.inputs.len(),
                got: bindings.len(),
            });
        }
        let mut values: Vec<TensorValue> = Vec::with_capacity(self.nodes.len());
        for (idx, node) in self.nodes.iter().enumerate() {
            let v = |id: &NodeId| &values[id.0];
            let data: Vec<f64> = match &node.op {
                Op::Input(slot) => {
                    let b = &bindings[*slot];
                    if b.shape() != node.shape.as_slice() {
                        return Err(AutodiffError::BindingShape {
                            slot: *slot,
                            expected: node.shape.clone(),
                            got: b.shape().to_vec(),
                        });
                    }
                    b.data().to_vec()
                }
                Op::Constant(t) => t.data().to_vec(),
                Op::Add(a, b) => zip_broadcast(v(a).data(), v(b).data(), |x, y| x + y),
                Op::Sub(a, b) => zip_broadcast(v(a).data(), v(b).data(), |x, y| x - y),
                Op::Mul(a, b) => zip_broadcast(v(a).data(), v(b).data(), |x, y| x * y),
                Op::MatMul(a, b) => {
                    let (n, k) = as_matrix(v(a).shape(), true).expect("checked at build");
                    let (_, m) = as_matrix(v(b).shape(), false).expect("checked at build");
                    matmul_raw(v(a).data(), v(b).data(), n, k, m)
                }
                Op::Dot(a, b) => vec![v(a).data().iter().zip(v(b).data()).map(|(x, y)| x * y).sum()],
                Op::Concat(parts) => parts.iter().flat_map(|p| v(p).data().iter().copied()).collect(),
                Op::RowSelect(t, rows) => {
                    let table = v(t);
                    rows.iter().flat_map(|&r| table.row(r).iter().copied()).collect()
                }
                Op::Tanh(a) => v(a).data().iter().map(|x| x.tanh()).collect(),
                Op::Relu(a) => v(a).data().iter().map(|x| x.max(0.0)).collect(),
                Op::Log(a) => v(a).data().iter().map(|x| x.ln()).collect(),
                Op::Softmax(a) => softmax(v(a).data()),
                Op::Sum(a) => vec![v(a).data().iter().sum()],
                Op::Mean(a) => {
                    let d = v(a).data();
                    vec![d.iter().sum::<f64>() / d.len() as f64]
                }
                Op::MeanRows(a) => {
                    let m = v(a);
                    let (n, d) = (m.shape()[0], m.shape()[1]);
                    let mut out = vec![0.0; d];
                    for r in 0..n {
                        for (o, x) in out.iter_mut().zip(m.row(r)) {
                            *o += x;
                        }
                    }
                    out.iter_mut().for_each(|o| *o /= n as f64);
                    out
                }
                Op::Max(a) => {
                    let d = v(a).data();
                    vec![d[first_argmax(d)]]
                }
            };
            if data.iter().any(|x| !x.is_finite()) {
                return Err(AutodiffError::NonFinite {
                    node: idx,
                    op: node.op.name(),
                });
            }
            values.push(TensorValue::new(node.shape.clone(), data)?);
        }
        Ok(Evaluation { values })
    }

    /// Reverse-mode gradient of the scalar `target` with respect to every
    /// input. Inputs that do not reach `target` receive exact zeros.
    pub fn backward(&self, eval: &Evaluation, target: NodeId) -> Result<Gradients, AutodiffError> {
        if eval.values.len() != self.nodes.len() {
            return Err(AutodiffError::MissingForward);
        }
        let tshape = &self.nodes[target.0].shape;
        if tshape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NotScalar {
                node: target.0,
                shape: tshape.clone(),
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; target.0 + 1];
        grads[target.0] = Some(vec![1.0]);
        let mut input_grads: Vec<TensorValue> = self
            .inputs
            .iter()
            .map(|id| TensorValue::zeros(&self.nodes[id.0].shape))
            .collect();

        for idx in (0..=target.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let val = |id: &NodeId| eval.values[id.0].data();
            match &self.nodes[idx].op {
                Op::Input(slot) => {
                    for (dst, src) in input_grads[*slot].data_mut().iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                Op::Constant(_) => {}
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, reduce_to(&g, val(a).len()));
                    accumulate(&mut grads, *b, reduce_to(&g, val(b).len()));
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, reduce_to(&g, val(a).len()));
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    accumulate(&mut grads, *b, reduce_to(&neg, val(b).len()));
                }
                Op::Mul(a, b) => {
                    let ga = zip_broadcast(&g, val(b), |x, y| x * y);
                    let gb = zip_broadcast(&g, val(a), |x, y| x * y);
                    accumulate(&mut grads, *a, reduce_to(&ga, val(a).len()));
                    accumulate(&mut grads, *b, reduce_to(&gb, val(b).len()));
                }
                Op::MatMul(a, b) => {
                    let (n, k) = as_matrix(eval.values[a.0].shape(), true).expect("checked");
                    let (_, m) = as_matrix(eval.values[b.0].shape(), false).expect("checked");
                    let (va, vb) = (val(a), val(b));
                    // dA = G . B^T, dB = A^T . G
                    let mut ga = vec![0.0; n * k];
                    let mut gb = vec![0.0; k * m];
                    for i in 0..n {
                        for j in 0..m {
                            let gij = g[i * m + j];
                            if gij == 0.0 {
                                continue;
                            }
                            for p in 0..k {
                                ga[i * k + p] += gij * vb[p * m + j];
                                gb[p * m + j] += va[i * k + p] * gij;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Dot(a, b) => {
                    let g0 = g[0];
                    accumulate(&mut grads, *a, val(b).iter().map(|y| g0 * y).collect());
                    accumulate(&mut grads, *b, val(a).iter().map(|x| g0 * x).collect());
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = val(p).len();
                        accumulate(&mut grads, *p, g[offset..offset + len].to_vec());
                        offset += len;
                    }
                }
                Op::RowSelect(t, rows) => {
                    let table = &eval.values[t.0];
                    let d = table.shape()[1];
                    let mut gt = vec![0.0; table.len()];
                    for (k, &r) in rows.iter().enumerate() {
                        for c in 0..d {
                            gt[r * d + c] += g[k * d + c];
                        }
                    }
                    accumulate(&mut grads, *t, gt);
                }
                Op::Tanh(a) => {
                    let y = eval.values[idx].data();
                    accumulate(&mut grads, *a, g.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect());
                }
                Op::Relu(a) => {
                    let x = val(a);
                    accumulate(
                        &mut grads,
                        *a,
                        g.iter().zip(x).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect(),
                    );
                }
                Op::Log(a) => {
                    let x = val(a);
                    accumulate(&mut grads, *a, g.iter().zip(x).map(|(g, x)| g / x).collect());
                }
                Op::Softmax(a) => {
                    let y = eval.values[idx].data();
                    let inner: f64 = g.iter().zip(y).map(|(g, y)| g * y).sum();
                    accumulate(&mut grads, *a, g.iter().zip(y).map(|(g, y)| y * (g - inner)).collect());
                }
                Op::Sum(a) => accumulate(&mut grads, *a, vec![g[0]; val(a).len()]),
                Op::Mean(a) => {
                    let n = val(a).len() as f64;
                    accumulate(&mut grads, *a, vec![g[0] / n; val(a).len()]);
                }
                Op::MeanRows(a) => {
                    let shape = eval.values[a.0].shape();
                    let n = shape[0];
                    let mut ga = Vec::with_capacity(n * shape[1]);
                    for _ in 0..n {
                        ga.extend(g.iter().map(|x| x / n as f64));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Max(a) => {
                    let x = val(a);
                    let mut ga = vec![0.0; x.len()];
                    ga[first_argmax(x)] = g[0];
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(Gradients { inputs: input_grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], node: NodeId, g: Vec<f64>) {
    match &mut grads[node.0] {
        Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, x)| *e += x),
        slot => *slot = Some(g),
    }
}

/// Sums a broadcast gradient back down to a scalar operand.
fn reduce_to(g: &[f64], len: usize) -> Vec<f64> {
    if len == g.len() {
        g.to_vec()
    } else {
        vec![g.iter().sum()]
    }
}

fn zip_broadcast(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    match (a.len(), b.len()) {
        (x, y) if x == y => a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect(),
        (1, _) => b.iter().map(|y| f(a[0], *y)).collect(),
        _ => a.iter().map(|x| f(*x, b[0])).collect(),
    }
}

pub(crate) fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
