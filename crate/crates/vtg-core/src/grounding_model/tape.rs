//! Minimal reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] is an append-only arena of nodes; every operation records its
//! inputs so that [`Tape::backward`] can sweep the arena once in reverse and
//! accumulate gradients. The op set is exactly what the grounding decoder
//! needs: matrix product, addition, scaling, transpose, (optionally causal)
//! row softmax, RMS normalization, SiLU, row gather/concat, and a fused
//! masked cross-entropy head.

use crate::numerics::Matrix;

/// Index of a node on a [`Tape`].
pub type NodeId = usize;

const RMS_EPS: f64 = 1e-6;

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    Transpose(NodeId),
    /// Row softmax; `causal` masks column `c > r` in row `r` before
    /// normalizing.
    SoftmaxRows {
        x: NodeId,
        causal: bool,
    },
    RmsNorm(NodeId),
    Silu(NodeId),
    GatherRows {
        x: NodeId,
        indices: Vec<usize>,
    },
    ConcatRows(Vec<NodeId>),
    /// Mean cross-entropy over the rows where `mask` is true; `targets[r]` is
    /// the gold column of row `r`. Produces a 1x1 value.
    CrossEntropyMasked {
        logits: NodeId,
        targets: Vec<usize>,
        mask: Vec<bool>,
    },
}

struct Node {
    value: Matrix,
    grad: Matrix,
    op: Op,
}

/// Append-only computation graph with one backward sweep.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        let grad = Matrix::zeros(value.rows(), value.cols());
        self.nodes.push(Node { value, grad, op });
        self.nodes.len() - 1
    }

    /// Record an input (parameter or activation) node.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].value
    }

    pub fn grad(&self, id: NodeId) -> &Matrix {
        &self.nodes[id].grad
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a]
            .value
            .matmul(&self.nodes[b].value)
            .expect("tape matmul: inner dimensions must agree");
        self.push(value, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a]
            .value
            .add(&self.nodes[b].value)
            .expect("tape add: shapes must agree");
        self.push(value, Op::Add(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = self.nodes[a].value.scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, x: NodeId, causal: bool) -> NodeId {
        let src = &self.nodes[x].value;
        if causal {
            assert_eq!(
                src.rows(),
                src.cols(),
                "causal softmax requires a square score matrix"
            );
        }
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            let limit = if causal { r + 1 } else { src.cols() };
            let row = src.row(r);
            let max = row[..limit]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            let out = value.row_mut(r);
            for c in 0..limit {
                let e = (row[c] - max).exp();
                out[c] = e;
                denom += e;
            }
            for slot in out[..limit].iter_mut() {
                *slot /= denom;
            }
        }
        self.push(value, Op::SoftmaxRows { x, causal })
    }

    pub fn rms_norm(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            let row = src.row(r);
            let ms = row.iter().map(|v| v * v).sum::<f64>() / row.len() as f64;
            let rms = (ms + RMS_EPS).sqrt();
            for (out, v) in value.row_mut(r).iter_mut().zip(row) {
                *out = v / rms;
            }
        }
        self.push(value, Op::RmsNorm(a))
    }

    pub fn silu(&mut self, a: NodeId) -> NodeId {
        let src = &self.nodes[a].value;
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for (out, &v) in value.data_mut().iter_mut().zip(src.data()) {
            *out = v * sigmoid(v);
        }
        self.push(value, Op::Silu(a))
    }

    /// Rows of `x` selected by `indices` (repeats allowed); gradients
    /// scatter-add back into the source rows.
    pub fn gather_rows(&mut self, x: NodeId, indices: Vec<usize>) -> NodeId {
        let src = &self.nodes[x].value;
        let mut value = Matrix::zeros(indices.len(), src.cols());
        for (r, &idx) in indices.iter().enumerate() {
            assert!(
                idx < src.rows(),
                "gather_rows: index {idx} out of {} rows",
                src.rows()
            );
            value.row_mut(r).copy_from_slice(src.row(idx));
        }
        self.push(value, Op::GatherRows { x, indices })
    }

    pub fn concat_rows(&mut self, parts: Vec<NodeId>) -> NodeId {
        assert!(!parts.is_empty(), "concat_rows: need at least one part");
        let cols = self.nodes[parts[0]].value.cols();
        let rows: usize = parts.iter().map(|&p| self.nodes[p].value.rows()).sum();
        let mut value = Matrix::zeros(rows, cols);
        let mut at = 0;
        for &p in &parts {
            let src = &self.nodes[p].value;
            assert_eq!(src.cols(), cols, "concat_rows: column counts must agree");
            for r in 0..src.rows() {
                value.row_mut(at).copy_from_slice(src.row(r));
                at += 1;
            }
        }
        self.push(value, Op::ConcatRows(parts))
    }

    /// Mean cross-entropy of `logits` rows against `targets`, restricted to
    /// rows where `mask` is true. Returns the scalar node; read its value via
    /// [`Tape::scalar`].
    pub fn cross_entropy_masked(
        &mut self,
        logits: NodeId,
        targets: Vec<usize>,
        mask: Vec<bool>,
    ) -> NodeId {
        let src = &self.nodes[logits].value;
        assert_eq!(targets.len(), src.rows(), "one target per logit row");
        assert_eq!(mask.len(), src.rows(), "one mask flag per logit row");
        let counted = mask.iter().filter(|&&m| m).count();
        assert!(counted > 0, "cross_entropy_masked: empty mask");
        let mut total = 0.0;
        for r in 0..src.rows() {
            if !mask[r] {
                continue;
            }
            let row = src.row(r);
            assert!(targets[r] < row.len(), "target id out of vocabulary");
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let logsum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += logsum - row[targets[r]];
        }
        let value = Matrix::from_vec(1, 1, vec![total / counted as f64]).unwrap();
        self.push(
            value,
            Op::CrossEntropyMasked {
                logits,
                targets,
                mask,
            },
        )
    }

    /// The value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = &self.nodes[id].value;
        assert!(v.rows() == 1 && v.cols() == 1, "scalar: node is {}x{}", v.rows(), v.cols());
        v.data()[0]
    }

    /// Backpropagate from `root` (a 1x1 node), filling every node's gradient.
    pub fn backward(&mut self, root: NodeId) {
        {
            let node = &mut self.nodes[root];
            assert!(
                node.value.rows() == 1 && node.value.cols() == 1,
                "backward root must be scalar"
            );
            node.grad.data_mut()[0] = 1.0;
        }
        for id in (0..=root).rev() {
            // Take the node's gradient without cloning the whole node.
            let upstream = std::mem::replace(&mut self.nodes[id].grad, Matrix::zeros(0, 0));
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let da = upstream
                        .matmul(&self.nodes[b].value.transpose())
                        .expect("matmul backward (lhs)");
                    let db = self.nodes[a]
                        .value
                        .transpose()
                        .matmul(&upstream)
                        .expect("matmul backward (rhs)");
                    accumulate(&mut self.nodes[a].grad, &da);
                    accumulate(&mut self.nodes[b].grad, &db);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut self.nodes[a].grad, &upstream);
                    accumulate(&mut self.nodes[b].grad, &upstream);
                }
                Op::Scale(a, factor) => {
                    let (a, factor) = (*a, *factor);
                    accumulate(&mut self.nodes[a].grad, &upstream.scale(factor));
                }
                Op::Transpose(a) => {
                    let a = *a;
                    accumulate(&mut self.nodes[a].grad, &upstream.transpose());
                }
                Op::SoftmaxRows { x, causal } => {
                    let (x, causal) = (*x, *causal);
                    let probs = &self.nodes[id].value;
                    let mut dx = Matrix::zeros(probs.rows(), probs.cols());
                    for r in 0..probs.rows() {
                        let limit = if causal { r + 1 } else { probs.cols() };
                        let a_row = probs.row(r);
                        let g_row = upstream.row(r);
                        let dot: f64 = (0..limit).map(|c| g_row[c] * a_row[c]).sum();
                        let out = dx.row_mut(r);
                        for c in 0..limit {
                            out[c] = a_row[c] * (g_row[c] - dot);
                        }
                    }
                    accumulate(&mut self.nodes[x].grad, &dx);
                }
                Op::RmsNorm(a) => {
                    let a = *a;
                    let src = &self.nodes[a].value;
                    let y = &self.nodes[id].value;
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        let x_row = src.row(r);
                        let y_row = y.row(r);
                        let g_row = upstream.row(r);
                        let n = x_row.len() as f64;
                        let ms = x_row.iter().map(|v| v * v).sum::<f64>() / n;
                        let rms = (ms + RMS_EPS).sqrt();
                        let gy: f64 = g_row.iter().zip(y_row).map(|(g, y)| g * y).sum();
                        let out = dx.row_mut(r);
                        for c in 0..x_row.len() {
                            out[c] = (g_row[c] - y_row[c] * gy / n) / rms;
                        }
                    }
                    accumulate(&mut self.nodes[a].grad, &dx);
                }
                Op::Silu(a) => {
                    let a = *a;
                    let src = &self.nodes[a].value;
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for ((out, &v), &g) in dx
                        .data_mut()
                        .iter_mut()
                        .zip(src.data())
                        .zip(upstream.data())
                    {
                        let s = sigmoid(v);
                        *out = g * (s * (1.0 + v * (1.0 - s)));
                    }
                    accumulate(&mut self.nodes[a].grad, &dx);
                }
                Op::GatherRows { x, indices } => {
                    let x = *x;
                    let indices = indices.clone();
                    let src_rows = self.nodes[x].value.rows();
                    let mut dx = Matrix::zeros(src_rows, upstream.cols());
                    for (r, &idx) in indices.iter().enumerate() {
                        for (dst, g) in dx.row_mut(idx).iter_mut().zip(upstream.row(r)) {
                            *dst += g;
                        }
                    }
                    accumulate(&mut self.nodes[x].grad, &dx);
                }
                Op::ConcatRows(parts) => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let rows = self.nodes[p].value.rows();
                        let cols = self.nodes[p].value.cols();
                        let mut dp = Matrix::zeros(rows, cols);
                        for r in 0..rows {
                            dp.row_mut(r).copy_from_slice(upstream.row(at + r));
                        }
                        at += rows;
                        accumulate(&mut self.nodes[p].grad, &dp);
                    }
                }
                Op::CrossEntropyMasked {
                    logits,
                    targets,
                    mask,
                } => {
                    let logits = *logits;
                    let targets = targets.clone();
                    let mask = mask.clone();
                    let g = upstream.data()[0];
                    let src = &self.nodes[logits].value;
                    let counted = mask.iter().filter(|&&m| m).count() as f64;
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..src.rows() {
                        if !mask[r] {
                            continue;
                        }
                        let row = src.row(r);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        let out = dx.row_mut(r);
                        for c in 0..row.len() {
                            let p = (row[c] - max).exp() / denom;
                            out[c] = g * p / counted;
                        }
                        out[targets[r]] -= g / counted;
                    }
                    accumulate(&mut self.nodes[logits].grad, &dx);
                }
            }
            self.nodes[id].grad = upstream;
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn accumulate(grad: &mut Matrix, delta: &Matrix) {
    debug_assert_eq!(grad.rows(), delta.rows());
    debug_assert_eq!(grad.cols(), delta.cols());
    for (g, d) in grad.data_mut().iter_mut().zip(delta.data()) {
        *g += d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fd_gradient, max_rel_error, FD_STEP};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Finite-difference check for a scalar-valued tape program with a single
    /// varying leaf. `build` receives the tape and the leaf id and must return
    /// the scalar root.
    fn fd_check<F>(x0: &Matrix, build: F) -> f64
    where
        F: Fn(&mut Tape, NodeId) -> NodeId,
    {
        let mut tape = Tape::new();
        let leaf = tape.leaf(x0.clone());
        let root = build(&mut tape, leaf);
        tape.backward(root);
        let analytic = tape.grad(leaf).clone();

        let numeric = fd_gradient(
            |x| {
                let mut t = Tape::new();
                let l = t.leaf(x.clone());
                let r = build(&mut t, l);
                t.scalar(r)
            },
            x0,
            FD_STEP,
        )
        .unwrap();
        max_rel_error(analytic.data(), numeric.data())
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::random(rows, cols, 1.0, &mut rng)
    }

    /// Sum of all entries as a differentiable scalar: ones^T * X * ones via
    /// two matmuls.
    fn sum_all(tape: &mut Tape, x: NodeId) -> NodeId {
        let rows = tape.value(x).rows();
        let cols = tape.value(x).cols();
        let left = tape.leaf(Matrix::from_vec(1, rows, vec![1.0; rows]).unwrap());
        let right = tape.leaf(Matrix::from_vec(cols, 1, vec![1.0; cols]).unwrap());
        let lx = tape.matmul(left, x);
        tape.matmul(lx, right)
    }

    #[test]
    fn matmul_forward_matches_direct_product() {
        let a = random_matrix(3, 4, 1);
        let b = random_matrix(4, 2, 2);
        let mut tape = Tape::new();
        let ia = tape.leaf(a.clone());
        let ib = tape.leaf(b.clone());
        let prod = tape.matmul(ia, ib);
        assert_eq!(tape.value(prod).data(), a.matmul(&b).unwrap().data());
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let b = random_matrix(4, 2, 7);
        let err = fd_check(&random_matrix(3, 4, 6), |tape, x| {
            let ib = tape.leaf(b.clone());
            let prod = tape.matmul(x, ib);
            let act = tape.silu(prod);
            sum_all(tape, act)
        });
        assert!(err < 1e-6, "matmul/silu grad err {err}");
    }

    #[test]
    fn add_scale_transpose_gradients_match_finite_differences() {
        let err = fd_check(&random_matrix(3, 3, 11), |tape, x| {
            let t = tape.transpose(x);
            let s = tape.scale(t, 2.5);
            let a = tape.add(s, x);
            let sq = tape.matmul(a, a);
            sum_all(tape, sq)
        });
        assert!(err < 1e-6, "add/scale/transpose grad err {err}");
    }

    #[test]
    fn full_softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = tape.leaf(random_matrix(4, 6, 21));
        let sm = tape.softmax_rows(x, false);
        for r in 0..4 {
            let s: f64 = tape.value(sm).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_softmax_zeroes_future_columns() {
        let mut tape = Tape::new();
        let x = tape.leaf(random_matrix(5, 5, 22));
        let sm = tape.softmax_rows(x, true);
        for r in 0..5 {
            let row = tape.value(sm).row(r);
            for c in (r + 1)..5 {
                assert_eq!(row[c], 0.0, "row {r} col {c} must be masked");
            }
            let s: f64 = row[..=r].iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // First row attends only to itself.
        assert_eq!(tape.value(sm).get(0, 0), 1.0);
    }

    #[test]
    fn softmax_gradients_match_finite_differences() {
        for causal in [false, true] {
            let weights = random_matrix(4, 4, 31);
            let err = fd_check(&random_matrix(4, 4, 30 + causal as u64), |tape, x| {
                let sm = tape.softmax_rows(x, causal);
                let iw = tape.leaf(weights.clone());
                let mixed = tape.matmul(sm, iw);
                let act = tape.silu(mixed);
                sum_all(tape, act)
            });
            assert!(err < 1e-6, "softmax (causal={causal}) grad err {err}");
        }
    }

    #[test]
    fn rms_norm_rows_have_unit_mean_square() {
        let mut tape = Tape::new();
        let x = tape.leaf(random_matrix(3, 8, 41));
        let y = tape.rms_norm(x);
        for r in 0..3 {
            let ms: f64 =
                tape.value(y).row(r).iter().map(|v| v * v).sum::<f64>() / 8.0;
            assert!((ms - 1.0).abs() < 1e-5, "row {r} mean square {ms}");
        }
    }

    #[test]
    fn rms_norm_gradient_matches_finite_differences() {
        let weights = random_matrix(6, 3, 43);
        let err = fd_check(&random_matrix(4, 6, 42), |tape, x| {
            let y = tape.rms_norm(x);
            let iw = tape.leaf(weights.clone());
            let mixed = tape.matmul(y, iw);
            let act = tape.silu(mixed);
            sum_all(tape, act)
        });
        assert!(err < 1e-6, "rms_norm grad err {err}");
    }

    #[test]
    fn gather_rows_repeats_and_scatter_adds() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let g = tape.gather_rows(x, vec![1, 1, 0]);
        assert_eq!(tape.value(g).row(0), &[3.0, 4.0]);
        assert_eq!(tape.value(g).row(2), &[1.0, 2.0]);
        let root = sum_all(&mut tape, g);
        tape.backward(root);
        // Row 1 was gathered twice, so its gradient doubles.
        assert_eq!(tape.grad(x).row(0), &[1.0, 1.0]);
        assert_eq!(tape.grad(x).row(1), &[2.0, 2.0]);
    }

    #[test]
    fn gather_rows_gradient_matches_finite_differences() {
        let err = fd_check(&random_matrix(5, 3, 51), |tape, x| {
            let g = tape.gather_rows(x, vec![0, 2, 2, 4, 1]);
            let act = tape.silu(g);
            sum_all(tape, act)
        });
        assert!(err < 1e-6, "gather grad err {err}");
    }

    #[test]
    fn concat_rows_stacks_and_routes_gradients() {
        let top = random_matrix(2, 3, 61);
        let err = fd_check(&random_matrix(3, 3, 60), |tape, x| {
            let itop = tape.leaf(top.clone());
            let cat = tape.concat_rows(vec![itop, x]);
            let act = tape.silu(cat);
            sum_all(tape, act)
        });
        assert!(err < 1e-6, "concat grad err {err}");

        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&[vec![1.0]]).unwrap());
        let b = tape.leaf(Matrix::from_rows(&[vec![2.0], vec![3.0]]).unwrap());
        let cat = tape.concat_rows(vec![a, b]);
        assert_eq!(tape.value(cat).data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn cross_entropy_matches_hand_computation() {
        // Uniform logits over 4 classes: loss = ln 4 regardless of target.
        let mut tape = Tape::new();
        let logits = tape.leaf(Matrix::zeros(3, 4));
        let loss = tape.cross_entropy_masked(
            logits,
            vec![0, 1, 2],
            vec![true, false, true],
        );
        assert!((tape.scalar(loss) - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_ignores_masked_rows() {
        let mut base = Matrix::zeros(2, 3);
        base.row_mut(1).copy_from_slice(&[50.0, -50.0, 0.0]);
        let mut tape = Tape::new();
        let logits = tape.leaf(base);
        let loss = tape.cross_entropy_masked(logits, vec![0, 1], vec![true, false]);
        // Row 1 would contribute a huge loss; it must not.
        assert!((tape.scalar(loss) - 3.0f64.ln()).abs() < 1e-12);
        tape.backward(loss);
        assert!(tape.grad(logits).row(1).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let err = fd_check(&random_matrix(5, 7, 71), |tape, x| {
            tape.cross_entropy_masked(
                x,
                vec![3, 0, 6, 2, 5],
                vec![true, false, true, true, false],
            )
        });
        assert!(err < 1e-6, "cross entropy grad err {err}");
    }

    #[test]
    fn backward_through_composite_attention_block() {
        // A miniature attention block exercising every op together.
        let d = 4;
        let wq = random_matrix(d, d, 81);
        let wk = random_matrix(d, d, 82);
        let wv = random_matrix(d, d, 83);
        let err = fd_check(&random_matrix(5, d, 80), |tape, x| {
            let n = tape.rms_norm(x);
            let iq = tape.leaf(wq.clone());
            let ik = tape.leaf(wk.clone());
            let iv = tape.leaf(wv.clone());
            let q = tape.matmul(n, iq);
            let k = tape.matmul(n, ik);
            let v = tape.matmul(n, iv);
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt);
            let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
            let att = tape.softmax_rows(scaled, true);
            let ctx = tape.matmul(att, v);
            let res = tape.add(x, ctx);
            tape.cross_entropy_masked(
                res,
                vec![0, 1, 2, 3, 0],
                vec![true, true, false, true, true],
            )
        });
        assert!(err < 1e-5, "attention block grad err {err}");
    }

    #[test]
    fn leaf_gradients_start_at_zero_and_accumulate() {
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::from_rows(&[vec![2.0, 3.0]]).unwrap());
        assert!(tape.grad(x).data().iter().all(|&g| g == 0.0));
        // y = x + x doubles the gradient.
        let y = tape.add(x, x);
        let root = sum_all(&mut tape, y);
        tape.backward(root);
        assert_eq!(tape.grad(x).data(), &[2.0, 2.0]);
    }
}
