use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

pub type NodeId = usize;

/// Norm floor added inside row normalization recorded on a tape. Networks can
/// produce all-zero rows (dead relu layers), so the tape op stabilizes instead
/// of erroring; degenerate rows are counted for the caller to log.
pub const L2NORM_EPS: f64 = 1e-12;

/// Probability floor for `0 * ln 0 := 0` handling in the mutual-information
/// objective. Entries below the floor contribute zero to the value; the
/// reverse rule clamps them at the floor inside logarithms so gradients stay
/// finite.
pub const PROB_FLOOR: f64 = 1e-16;

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    AddRowVec(NodeId, NodeId),
    Relu(NodeId),
    SoftmaxRows(NodeId),
    L2NormRows(NodeId),
    GatherRows(NodeId, Vec<usize>),
    Sum(NodeId),
    MeanRowSqDist(NodeId, NodeId),
    JointDistribution(NodeId, NodeId),
    MiLoss(NodeId, f64),
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Record of primitive matrix operations in execution order, with one
/// reverse sweep producing gradients for every reachable parameter leaf.
///
/// Single-use for differentiation: a second `backward` call is rejected
/// rather than accumulating twice. Tapes are single-threaded objects.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Matrix>>,
    backward_done: bool,
    degenerate_rows: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
            degenerate_rows: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Rows that hit the norm floor in any `l2norm_rows` recorded so far.
    pub fn degenerate_row_events(&self) -> usize {
        self.degenerate_rows
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        self.nodes.len() - 1
    }

    fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    /// Inserts a value that gradients never reach (data, detached targets).
    pub fn constant(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Leaf, false)
    }

    /// Inserts a trainable leaf; `backward` will produce its gradient.
    pub fn param(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Leaf, true)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        debug_assert_eq!(self.nodes[id].value.shape(), (1, 1));
        self.nodes[id].value.get(0, 0)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a].value.matmul(&self.nodes[b].value)?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(v, Op::Matmul(a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a].value.add(&self.nodes[b].value)?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.nodes[a].value.sub(&self.nodes[b].value)?;
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.nodes[a].value.scale(c);
        let rg = self.needs_grad(a);
        self.push(v, Op::Scale(a, c), rg)
    }

    /// Broadcast-adds a 1 x cols bias row to every row of `a`.
    pub fn add_row_vec(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let v = self.nodes[a].value.add_row_vec(&self.nodes[bias].value)?;
        let rg = self.needs_grad(a) || self.needs_grad(bias);
        Ok(self.push(v, Op::AddRowVec(a, bias), rg))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.relu();
        let rg = self.needs_grad(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.nodes[a].value.softmax_rows();
        let rg = self.needs_grad(a);
        self.push(v, Op::SoftmaxRows(a), rg)
    }

    /// Row normalization stabilized by [`L2NORM_EPS`]; degenerate rows are
    /// counted on the tape rather than erroring.
    pub fn l2norm_rows(&mut self, a: NodeId) -> NodeId {
        let (v, degenerate) = self.nodes[a].value.l2norm_rows_eps(L2NORM_EPS);
        self.degenerate_rows += degenerate;
        let rg = self.needs_grad(a);
        self.push(v, Op::L2NormRows(a), rg)
    }

    pub fn gather_rows(&mut self, a: NodeId, idx: &[usize]) -> NodeId {
        let v = self.nodes[a].value.gather_rows(idx);
        let rg = self.needs_grad(a);
        self.push(v, Op::GatherRows(a, idx.to_vec()), rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Matrix::from_raw(1, 1, vec![self.nodes[a].value.sum()]);
        let rg = self.needs_grad(a);
        self.push(v, Op::Sum(a), rg)
    }

    /// Mean over rows of the squared Euclidean distance between paired rows.
    pub fn mean_row_sq_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.shape() != vb.shape() {
            return Err(Error::DimMismatch {
                op: "mean_row_sq_dist",
                left: va.shape_str(),
                right: vb.shape_str(),
            });
        }
        let n = va.rows() as f64;
        let ss: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let rg = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(
            Matrix::from_raw(1, 1, vec![ss / n]),
            Op::MeanRowSqDist(a, b),
            rg,
        ))
    }

    /// Symmetrized joint distribution of two row-stochastic n x K inputs:
    /// P = ((1/n) p1' p2 + transpose) / 2. Rows must sum to 1 within 1e-9.
    pub fn joint_distribution(&mut self, p1: NodeId, p2: NodeId) -> Result<NodeId> {
        let (v1, v2) = (&self.nodes[p1].value, &self.nodes[p2].value);
        if v1.shape() != v2.shape() {
            return Err(Error::DimMismatch {
                op: "joint_distribution",
                left: v1.shape_str(),
                right: v2.shape_str(),
            });
        }
        for (name, v) in [("first", v1), ("second", v2)] {
            for i in 0..v.rows() {
                let s: f64 = v.row(i).iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Contract(format!(
                        "joint_distribution: {name} input row {i} sums to {s}, expected 1"
                    )));
                }
            }
        }
        let v = joint_distribution_value(v1, v2);
        let rg = self.needs_grad(p1) || self.needs_grad(p2);
        Ok(self.push(v, Op::JointDistribution(p1, p2), rg))
    }

    /// Entropy-regularized mutual-information objective of a joint
    /// distribution; lower is better (the MI maximum is the minimum here).
    pub fn mi_loss(&mut self, p: NodeId, eta_reg: f64) -> Result<NodeId> {
        validate_joint(&self.nodes[p].value)?;
        if eta_reg < 0.0 {
            return Err(Error::Config(format!(
                "mi_loss regularizer must be >= 0, got {eta_reg}"
            )));
        }
        let v = mi_loss_value(&self.nodes[p].value, eta_reg);
        let rg = self.needs_grad(p);
        Ok(self.push(Matrix::from_raw(1, 1, vec![v]), Op::MiLoss(p, eta_reg), rg))
    }

    /// Weighted sum of scalar (1x1) nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        if terms.is_empty() {
            return Err(Error::Contract("weighted_sum of no terms".into()));
        }
        let mut total = 0.0;
        let mut rg = false;
        for &(id, w) in terms {
            if self.nodes[id].value.shape() != (1, 1) {
                return Err(Error::Contract(format!(
                    "weighted_sum input must be scalar, got {}",
                    self.nodes[id].value.shape_str()
                )));
            }
            total += w * self.nodes[id].value.get(0, 0);
            rg |= self.needs_grad(id);
        }
        Ok(self.push(
            Matrix::from_raw(1, 1, vec![total]),
            Op::WeightedSum(terms.to_vec()),
            rg,
        ))
    }

    /// Reverse sweep from a scalar loss node. Gradients land on every
    /// parameter leaf reachable from `loss`; constants get none. Calling a
    /// second time on the same tape is rejected.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.backward_done {
            return Err(Error::Contract("backward called twice on one tape".into()));
        }
        if self.nodes[loss].value.shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward seed must be a scalar node, got {}",
                self.nodes[loss].value.shape_str()
            )));
        }
        self.backward_done = true;
        self.grads[loss] = Some(Matrix::filled(1, 1, 1.0));
        for id in (0..=loss).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = self.grads[id].take() else {
                continue;
            };
            self.propagate(id, &g);
            self.grads[id] = Some(g);
        }
        Ok(())
    }

    /// Gradient of the loss with respect to node `id`, if one was produced.
    pub fn grad(&self, id: NodeId) -> Option<&Matrix> {
        self.grads[id].as_ref()
    }

    fn accum(&mut self, id: NodeId, delta: Matrix) {
        if !self.nodes[id].requires_grad {
            return;
        }
        match &mut self.grads[id] {
            Some(g) => {
                for (gv, dv) in g.data_mut().iter_mut().zip(delta.data()) {
                    *gv += dv;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, id: NodeId, g: &Matrix) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                if self.needs_grad(a) {
                    let bt = self.nodes[b].value.transpose();
                    let da = g.matmul(&bt).expect("shapes fixed at record time");
                    self.accum(a, da);
                }
                if self.needs_grad(b) {
                    let at = self.nodes[a].value.transpose();
                    let db = at.matmul(g).expect("shapes fixed at record time");
                    self.accum(b, db);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accum(a, g.clone());
                self.accum(b, g.clone());
            }
            Op::Sub(a, b) => {
                let (a, b) = (*a, *b);
                self.accum(a, g.clone());
                self.accum(b, g.scale(-1.0));
            }
            Op::Scale(a, c) => {
                let (a, c) = (*a, *c);
                self.accum(a, g.scale(c));
            }
            Op::AddRowVec(a, bias) => {
                let (a, bias) = (*a, *bias);
                self.accum(a, g.clone());
                if self.needs_grad(bias) {
                    let cols = g.cols();
                    let mut sums = vec![0.0; cols];
                    for i in 0..g.rows() {
                        for (s, v) in sums.iter_mut().zip(g.row(i)) {
                            *s += v;
                        }
                    }
                    self.accum(bias, Matrix::from_raw(1, cols, sums));
                }
            }
            Op::Relu(a) => {
                let a = *a;
                let mask: Vec<f64> = self.nodes[a]
                    .value
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(x, gv)| if *x > 0.0 { *gv } else { 0.0 })
                    .collect();
                let da = Matrix::from_raw(g.rows(), g.cols(), mask);
                self.accum(a, da);
            }
            Op::SoftmaxRows(id_in) => {
                let a = *id_in;
                let y = &self.nodes[id];
                let mut da = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let yr = y.value.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                    for j in 0..g.cols() {
                        da.set(i, j, yr[j] * (gr[j] - dot));
                    }
                }
                self.accum(a, da);
            }
            Op::L2NormRows(id_in) => {
                let a = *id_in;
                let x = &self.nodes[a].value;
                let y = &self.nodes[id].value;
                let mut da = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let norm = x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt() + L2NORM_EPS;
                    let yr = y.row(i);
                    let gr = g.row(i);
                    let dot: f64 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                    for j in 0..g.cols() {
                        da.set(i, j, (gr[j] - yr[j] * dot) / norm);
                    }
                }
                self.accum(a, da);
            }
            Op::GatherRows(a, idx) => {
                let a = *a;
                let src_rows = self.nodes[a].value.rows();
                let mut da = Matrix::zeros(src_rows, g.cols());
                for (out_i, &src_i) in idx.clone().iter().enumerate() {
                    for j in 0..g.cols() {
                        let v = da.get(src_i, j) + g.get(out_i, j);
                        da.set(src_i, j, v);
                    }
                }
                self.accum(a, da);
            }
            Op::Sum(a) => {
                let a = *a;
                let shape = self.nodes[a].value.shape();
                self.accum(a, Matrix::filled(shape.0, shape.1, g.get(0, 0)));
            }
            Op::MeanRowSqDist(a, b) => {
                let (a, b) = (*a, *b);
                let gv = g.get(0, 0);
                let va = &self.nodes[a].value;
                let vb = &self.nodes[b].value;
                let c = 2.0 * gv / va.rows() as f64;
                let diff: Vec<f64> = va
                    .data()
                    .iter()
                    .zip(vb.data())
                    .map(|(x, y)| c * (x - y))
                    .collect();
                let da = Matrix::from_raw(va.rows(), va.cols(), diff);
                if self.needs_grad(b) {
                    self.accum(b, da.scale(-1.0));
                }
                self.accum(a, da);
            }
            Op::JointDistribution(p1, p2) => {
                let (p1, p2) = (*p1, *p2);
                let n = self.nodes[p1].value.rows() as f64;
                let gs = g.add(&g.transpose()).expect("square").scale(0.5 / n);
                if self.needs_grad(p1) {
                    let d1 = self.nodes[p2]
                        .value
                        .matmul(&gs.transpose())
                        .expect("shapes fixed at record time");
                    self.accum(p1, d1);
                }
                if self.needs_grad(p2) {
                    let d2 = self.nodes[p1]
                        .value
                        .matmul(&gs)
                        .expect("shapes fixed at record time");
                    self.accum(p2, d2);
                }
            }
            Op::MiLoss(p, eta) => {
                let (p, eta) = (*p, *eta);
                let gv = g.get(0, 0);
                let da = mi_loss_grad(&self.nodes[p].value, eta).scale(gv);
                self.accum(p, da);
            }
            Op::WeightedSum(terms) => {
                let gv = g.get(0, 0);
                for (id_t, w) in terms.clone() {
                    self.accum(id_t, Matrix::filled(1, 1, gv * w));
                }
            }
        }
    }
}

/// P = sym((1/n) p1' p2); entries >= 0, total 1 for row-stochastic inputs.
pub(crate) fn joint_distribution_value(p1: &Matrix, p2: &Matrix) -> Matrix {
    let n = p1.rows() as f64;
    let raw = p1
        .transpose()
        .matmul(p2)
        .expect("shapes validated by caller")
        .scale(1.0 / n);
    raw.add(&raw.transpose()).expect("square").scale(0.5)
}

pub(crate) fn validate_joint(p: &Matrix) -> Result<()> {
    let mut total = 0.0;
    for (i, v) in p.data().iter().enumerate() {
        if *v < -1e-12 {
            return Err(Error::Contract(format!(
                "joint distribution entry ({},{}) is negative: {v}",
                i / p.cols(),
                i % p.cols()
            )));
        }
        total += v;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "joint distribution sums to {total}, expected 1"
        )));
    }
    Ok(())
}

/// -sum_ij P_ij (ln P_ij - (1+eta)(ln r_i + ln c_j)) with marginals r, c and
/// the 0*ln 0 := 0 convention below [`PROB_FLOOR`].
pub(crate) fn mi_loss_value(p: &Matrix, eta_reg: f64) -> f64 {
    let (r, c) = marginals(p);
    let coef = 1.0 + eta_reg;
    let term = |i: usize, j: usize| -> f64 {
        let pij = p.get(i, j);
        if pij < PROB_FLOOR {
            return 0.0;
        }
        pij * (pij.ln() - coef * (floor_ln(r[i]) + floor_ln(c[j])))
    };
    let mut total = 0.0;
    if p.rows() == p.cols() {
        // Accumulate over unordered index pairs: transposing p then only
        // swaps the two addends inside one commutative addition per pair, so
        // the value is bit-identical for p and its transpose even when p
        // itself is not symmetric.
        for i in 0..p.rows() {
            total += term(i, i);
            for j in i + 1..p.cols() {
                total += term(i, j) + term(j, i);
            }
        }
    } else {
        for i in 0..p.rows() {
            for j in 0..p.cols() {
                total += term(i, j);
            }
        }
    }
    -total
}

/// Closed-form gradient of [`mi_loss_value`]:
/// d/dP_ij = -ln P_ij + (1+eta)(ln r_i + ln c_j) + 2(1+eta) - 1,
/// with P, r, c clamped at [`PROB_FLOOR`] inside the logarithms.
fn mi_loss_grad(p: &Matrix, eta_reg: f64) -> Matrix {
    let (r, c) = marginals(p);
    let coef = 1.0 + eta_reg;
    let constant = 2.0 * coef - 1.0;
    let mut out = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let lp = floor_ln(p.get(i, j));
            out.set(
                i,
                j,
                -lp + coef * (floor_ln(r[i]) + floor_ln(c[j])) + constant,
            );
        }
    }
    out
}

fn floor_ln(v: f64) -> f64 {
    v.max(PROB_FLOOR).ln()
}

fn marginals(p: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![0.0; p.rows()];
    let mut c = vec![0.0; p.cols()];
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            r[i] += p.get(i, j);
            c[j] += p.get(i, j);
        }
    }
    (r, c)
}
