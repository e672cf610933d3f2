//! Reverse-mode automatic differentiation over matrices.
//!
//! The tape is append-only; every operation records its parents and value.
//! `backward_graph` emits the gradient computation *as new tape nodes*, built
//! from the same primitive ops, so a gradient is itself differentiable.
//! Differentiating through an SGD update (as second-order meta-learning
//! requires) is then just: build the inner loss, take its gradient as nodes,
//! form the updated parameters as nodes, build the outer loss on top, and run
//! backward once more. No finite-difference Hessians anywhere.
//!
//! Non-smooth ops (relu, max) treat their selection masks as constants of the
//! backward pass, which is exact almost everywhere.

use super::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    ScalarMul(f64),
    AddScalar,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Ln,
    Relu,
    /// Elementwise product with a constant matrix (payload).
    MulConst,
    SumAll,
    BroadcastFull,
    /// [m,n] -> [m,1], sum across each row.
    SumCols,
    /// [m,1] -> [m,cols].
    BroadcastCols,
    /// [m,n] -> [1,n], sum down each column.
    SumRows,
    /// [1,n] -> [rows,n].
    BroadcastRows,
    /// [m,n] + [1,n] broadcast over rows (bias add).
    AddRowVec,
    /// [m,n] -> [m,1], max across each row; payload = one-hot argmax mask.
    MaxCols,
    /// Horizontal concatenation; `widths[i]` = cols of parent i.
    ConcatCols {
        widths: Vec<usize>,
    },
    /// Columns [start, start+len) of a [m, total] parent.
    SliceCols {
        start: usize,
        len: usize,
        total: usize,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    parents: Vec<NodeId>,
    value: Mat,
    payload: Option<Mat>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    /// Scalar value of a [1,1] node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.shape(), (1, 1), "scalar() on non-scalar node");
        v.get(0, 0)
    }

    fn push(&mut self, op: Op, parents: Vec<NodeId>, value: Mat, payload: Option<Mat>) -> NodeId {
        self.nodes.push(Node {
            op,
            parents,
            value,
            payload,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(Op::Leaf, vec![], value, None)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul, vec![a, b], v, None)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose, vec![a], v, None)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(Op::Add, vec![a, b], v, None)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(Op::Sub, vec![a, b], v, None)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(Op::Mul, vec![a, b], v, None)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x / y);
        self.push(Op::Div, vec![a, b], v, None)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg, vec![a], v, None)
    }

    pub fn scalar_mul(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::ScalarMul(c), vec![a], v, None)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar, vec![a], v, None)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh, vec![a], v, None)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.push(Op::Sigmoid, vec![a], v, None)
    }

    /// ln(1 + e^x), computed stably.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| {
            if x > 0.0 {
                x + (-x).exp().ln_1p()
            } else {
                x.exp().ln_1p()
            }
        });
        self.push(Op::Softplus, vec![a], v, None)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::exp);
        self.push(Op::Exp, vec![a], v, None)
    }

    pub fn ln(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::ln);
        self.push(Op::Ln, vec![a], v, None)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let mask = self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu, vec![a], v, Some(mask))
    }

    pub fn mul_const(&mut self, a: NodeId, c: &Mat) -> NodeId {
        let v = self.value(a).zip(c, |x, y| x * y);
        self.push(Op::MulConst, vec![a], v, Some(c.clone()))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::SumAll, vec![a], Mat::from_vec(1, 1, vec![s]), None)
    }

    pub fn broadcast_full(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let s = self.scalar(a);
        self.push(
            Op::BroadcastFull,
            vec![a],
            Mat::filled(rows, cols, s),
            None,
        )
    }

    pub fn sum_cols(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let mut out = Mat::zeros(m.rows(), 1);
        for r in 0..m.rows() {
            out.set(r, 0, m.row_slice(r).iter().sum());
        }
        self.push(Op::SumCols, vec![a], out, None)
    }

    pub fn broadcast_cols(&mut self, a: NodeId, cols: usize) -> NodeId {
        let m = self.value(a);
        assert_eq!(m.cols(), 1, "broadcast_cols expects a column vector");
        let mut out = Mat::zeros(m.rows(), cols);
        for r in 0..m.rows() {
            let v = m.get(r, 0);
            for c in 0..cols {
                out.set(r, c, v);
            }
        }
        self.push(Op::BroadcastCols, vec![a], out, None)
    }

    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let mut out = Mat::zeros(1, m.cols());
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                out.set(0, c, out.get(0, c) + m.get(r, c));
            }
        }
        self.push(Op::SumRows, vec![a], out, None)
    }

    pub fn broadcast_rows(&mut self, a: NodeId, rows: usize) -> NodeId {
        let m = self.value(a);
        assert_eq!(m.rows(), 1, "broadcast_rows expects a row vector");
        let mut out = Mat::zeros(rows, m.cols());
        for r in 0..rows {
            for c in 0..m.cols() {
                out.set(r, c, m.get(0, c));
            }
        }
        self.push(Op::BroadcastRows, vec![a], out, None)
    }

    /// `a + bias` where `bias` is [1, n] broadcast over `a`'s rows.
    pub fn add_row_vec(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let m = self.value(a);
        let b = self.value(bias);
        assert_eq!(b.rows(), 1, "bias must be a row vector");
        assert_eq!(m.cols(), b.cols(), "bias width mismatch");
        let mut out = m.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                out.set(r, c, out.get(r, c) + b.get(0, c));
            }
        }
        self.push(Op::AddRowVec, vec![a, bias], out, None)
    }

    pub fn max_cols(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let mut out = Mat::zeros(m.rows(), 1);
        let mut mask = Mat::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            let row = m.row_slice(r);
            let (mut bi, mut bv) = (0usize, f64::NEG_INFINITY);
            for (i, &v) in row.iter().enumerate() {
                if v > bv {
                    bv = v;
                    bi = i;
                }
            }
            out.set(r, 0, bv);
            mask.set(r, bi, 1.0);
        }
        self.push(Op::MaxCols, vec![a], out, Some(mask))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut out = Mat::zeros(rows, total);
        let mut off = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols row mismatch");
            for r in 0..rows {
                for c in 0..m.cols() {
                    out.set(r, off + c, m.get(r, c));
                }
            }
            off += m.cols();
        }
        self.push(Op::ConcatCols { widths }, parts.to_vec(), out, None)
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let m = self.value(a);
        let total = m.cols();
        assert!(start + len <= total, "slice_cols out of range");
        let mut out = Mat::zeros(m.rows(), len);
        for r in 0..m.rows() {
            for c in 0..len {
                out.set(r, c, m.get(r, start + c));
            }
        }
        self.push(Op::SliceCols { start, len, total }, vec![a], out, None)
    }

    /// Mean of all entries, as a scalar node.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scalar_mul(s, 1.0 / n)
    }

    /// Sum of squared entries, as a scalar node.
    pub fn sum_squares(&mut self, a: NodeId) -> NodeId {
        let sq = self.mul(a, a);
        self.sum_all(sq)
    }

    /// Gradients of a scalar `loss` with respect to `wrt`, as plain matrices.
    pub fn grad(&mut self, loss: NodeId, wrt: &[NodeId]) -> Vec<Mat> {
        self.backward_graph(loss, wrt)
            .into_iter()
            .enumerate()
            .map(|(i, g)| match g {
                Some(id) => self.value(id).clone(),
                None => {
                    let v = self.value(wrt[i]);
                    Mat::zeros(v.rows(), v.cols())
                }
            })
            .collect()
    }

    /// Gradients of a scalar `loss` w.r.t. `wrt`, emitted as tape nodes so
    /// they can participate in further differentiation. Entries are `None`
    /// when `loss` does not depend on that input.
    pub fn backward_graph(&mut self, loss: NodeId, wrt: &[NodeId]) -> Vec<Option<NodeId>> {
        assert_eq!(
            self.value(loss).shape(),
            (1, 1),
            "backward_graph needs a scalar loss"
        );
        let mut grads: Vec<Option<NodeId>> = vec![None; loss.0 + 1];
        let seed = self.leaf(Mat::from_vec(1, 1, vec![1.0]));
        grads[loss.0] = Some(seed);

        for id in (0..=loss.0).rev() {
            let g = match grads[id] {
                Some(g) => g,
                None => continue,
            };
            let op = self.nodes[id].op.clone();
            let parents = self.nodes[id].parents.clone();
            match op {
                Op::Leaf => {}
                Op::MatMul => {
                    let (a, b) = (parents[0], parents[1]);
                    let bt = self.transpose(b);
                    let ga = self.matmul(g, bt);
                    self.accumulate(&mut grads, a, ga);
                    let at = self.transpose(a);
                    let gb = self.matmul(at, g);
                    self.accumulate(&mut grads, b, gb);
                }
                Op::Transpose => {
                    let gt = self.transpose(g);
                    self.accumulate(&mut grads, parents[0], gt);
                }
                Op::Add => {
                    self.accumulate(&mut grads, parents[0], g);
                    self.accumulate(&mut grads, parents[1], g);
                }
                Op::Sub => {
                    self.accumulate(&mut grads, parents[0], g);
                    let ng = self.neg(g);
                    self.accumulate(&mut grads, parents[1], ng);
                }
                Op::Mul => {
                    let (a, b) = (parents[0], parents[1]);
                    let ga = self.mul(g, b);
                    self.accumulate(&mut grads, a, ga);
                    let gb = self.mul(g, a);
                    self.accumulate(&mut grads, b, gb);
                }
                Op::Div => {
                    // d(a/b) = g/b, -g*a/b^2
                    let (a, b) = (parents[0], parents[1]);
                    let ga = self.div(g, b);
                    self.accumulate(&mut grads, a, ga);
                    let b2 = self.mul(b, b);
                    let ab2 = self.div(a, b2);
                    let gb_pos = self.mul(g, ab2);
                    let gb = self.neg(gb_pos);
                    self.accumulate(&mut grads, b, gb);
                }
                Op::Neg => {
                    let ng = self.neg(g);
                    self.accumulate(&mut grads, parents[0], ng);
                }
                Op::ScalarMul(c) => {
                    let gs = self.scalar_mul(g, c);
                    self.accumulate(&mut grads, parents[0], gs);
                }
                Op::AddScalar => {
                    self.accumulate(&mut grads, parents[0], g);
                }
                Op::Tanh => {
                    // 1 - tanh^2, using this node's own output
                    let y = NodeId(id);
                    let y2 = self.mul(y, y);
                    let neg = self.neg(y2);
                    let one_minus = self.add_scalar(neg, 1.0);
                    let gt = self.mul(g, one_minus);
                    self.accumulate(&mut grads, parents[0], gt);
                }
                Op::Sigmoid => {
                    // y (1 - y)
                    let y = NodeId(id);
                    let ny = self.neg(y);
                    let one_minus = self.add_scalar(ny, 1.0);
                    let d = self.mul(y, one_minus);
                    let gs = self.mul(g, d);
                    self.accumulate(&mut grads, parents[0], gs);
                }
                Op::Softplus => {
                    let s = self.sigmoid(parents[0]);
                    let gs = self.mul(g, s);
                    self.accumulate(&mut grads, parents[0], gs);
                }
                Op::Exp => {
                    let y = NodeId(id);
                    let ge = self.mul(g, y);
                    self.accumulate(&mut grads, parents[0], ge);
                }
                Op::Ln => {
                    let gl = self.div(g, parents[0]);
                    self.accumulate(&mut grads, parents[0], gl);
                }
                Op::Relu | Op::MulConst => {
                    let mask = self.nodes[id].payload.clone().expect("payload");
                    let gm = self.mul_const(g, &mask);
                    self.accumulate(&mut grads, parents[0], gm);
                }
                Op::SumAll => {
                    let (r, c) = self.value(parents[0]).shape();
                    let gb = self.broadcast_full(g, r, c);
                    self.accumulate(&mut grads, parents[0], gb);
                }
                Op::BroadcastFull => {
                    let gs = self.sum_all(g);
                    self.accumulate(&mut grads, parents[0], gs);
                }
                Op::SumCols => {
                    let c = self.value(parents[0]).cols();
                    let gb = self.broadcast_cols(g, c);
                    self.accumulate(&mut grads, parents[0], gb);
                }
                Op::BroadcastCols => {
                    let gs = self.sum_cols(g);
                    self.accumulate(&mut grads, parents[0], gs);
                }
                Op::SumRows => {
                    let r = self.value(parents[0]).rows();
                    let gb = self.broadcast_rows(g, r);
                    self.accumulate(&mut grads, parents[0], gb);
                }
                Op::BroadcastRows => {
                    let gs = self.sum_rows(g);
                    self.accumulate(&mut grads, parents[0], gs);
                }
                Op::AddRowVec => {
                    self.accumulate(&mut grads, parents[0], g);
                    let gb = self.sum_rows(g);
                    self.accumulate(&mut grads, parents[1], gb);
                }
                Op::MaxCols => {
                    let mask = self.nodes[id].payload.clone().expect("payload");
                    let gb = self.broadcast_cols(g, mask.cols());
                    let gm = self.mul_const(gb, &mask);
                    self.accumulate(&mut grads, parents[0], gm);
                }
                Op::ConcatCols { widths } => {
                    let mut off = 0;
                    for (i, w) in widths.iter().enumerate() {
                        let gp = self.slice_cols(g, off, *w);
                        self.accumulate(&mut grads, parents[i], gp);
                        off += w;
                    }
                }
                Op::SliceCols { start, len, total } => {
                    // scatter g back into a zero matrix of the parent's width
                    let rows = self.value(g).rows();
                    let mut mask_parts: Vec<NodeId> = Vec::new();
                    if start > 0 {
                        mask_parts.push(self.leaf(Mat::zeros(rows, start)));
                    }
                    mask_parts.push(g);
                    if start + len < total {
                        mask_parts.push(self.leaf(Mat::zeros(rows, total - start - len)));
                    }
                    let gp = if mask_parts.len() == 1 {
                        mask_parts[0]
                    } else {
                        self.concat_cols(&mask_parts)
                    };
                    self.accumulate(&mut grads, parents[0], gp);
                }
            }
        }

        wrt.iter().map(|w| grads[w.0]).collect()
    }

    fn accumulate(&mut self, grads: &mut [Option<NodeId>], target: NodeId, contrib: NodeId) {
        grads[target.0] = Some(match grads[target.0] {
            Some(existing) => self.add(existing, contrib),
            None => contrib,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences on a scalar function of one leaf.
    fn fd_grad(f: impl Fn(&Mat) -> f64, at: &Mat, h: f64) -> Mat {
        let mut g = Mat::zeros(at.rows(), at.cols());
        for i in 0..at.len() {
            let mut plus = at.clone();
            plus.data_mut()[i] += h;
            let mut minus = at.clone();
            minus.data_mut()[i] -= h;
            g.data_mut()[i] = (f(&plus) - f(&minus)) / (2.0 * h);
        }
        g
    }

    fn assert_close(a: &Mat, b: &Mat, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            let scale = 1.0_f64.max(x.abs()).max(y.abs());
            assert!((x - y).abs() / scale < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn quadratic_gradient() {
        // f(x) = sum(x^2): grad = 2x
        let x0 = Mat::from_vec(2, 2, vec![1.0, -2.0, 0.5, 3.0]);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let loss = tape.sum_squares(x);
        let g = tape.grad(loss, &[x]);
        assert_close(&g[0], &x0.map(|v| 2.0 * v), 1e-12);
    }

    #[test]
    fn composite_matches_finite_differences() {
        // loss = mean(tanh(x W + b)^2) through matmul, bias, tanh
        let x = Mat::from_vec(3, 2, vec![0.3, -0.7, 1.2, 0.1, -0.4, 0.9]);
        let w0 = Mat::from_vec(2, 2, vec![0.5, -0.3, 0.8, 0.2]);
        let b0 = Mat::row(vec![0.1, -0.2]);

        let eval = |w: &Mat, b: &Mat| {
            let mut t = Tape::new();
            let xn = t.leaf(x.clone());
            let wn = t.leaf(w.clone());
            let bn = t.leaf(b.clone());
            let z = t.matmul(xn, wn);
            let zb = t.add_row_vec(z, bn);
            let h = t.tanh(zb);
            let loss = t.sum_squares(h);
            let l = t.mean_all(loss);
            (t, wn, bn, l)
        };

        let (mut t, wn, bn, l) = eval(&w0, &b0);
        let g = t.grad(l, &[wn, bn]);

        let fw = fd_grad(|w| { let (t, _, _, l) = eval(w, &b0); t.scalar(l) }, &w0, 1e-5);
        let fb = fd_grad(|b| { let (t, _, _, l) = eval(&w0, b); t.scalar(l) }, &b0, 1e-5);
        assert_close(&g[0], &fw, 1e-7);
        assert_close(&g[1], &fb, 1e-7);
    }

    #[test]
    fn softmax_logsumexp_gradients() {
        let x0 = Mat::from_vec(2, 3, vec![0.1, 2.0, -1.0, 0.5, 0.4, 0.3]);
        let eval = |x: &Mat| {
            let mut t = Tape::new();
            let xn = t.leaf(x.clone());
            // row-wise logsumexp, then sum
            let m = t.max_cols(xn);
            let mb = t.broadcast_cols(m, x.cols());
            let c = t.sub(xn, mb);
            let e = t.exp(c);
            let s = t.sum_cols(e);
            let l = t.ln(s);
            let lse = t.add(l, m);
            let total = t.sum_all(lse);
            (t, xn, total)
        };
        let (mut t, xn, total) = eval(&x0);
        let g = t.grad(total, &[xn]);
        let f = fd_grad(|x| { let (t, _, l) = eval(x); t.scalar(l) }, &x0, 1e-6);
        assert_close(&g[0], &f, 1e-6);
    }

    #[test]
    fn slice_and_concat_gradients() {
        let x0 = Mat::from_vec(2, 4, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let eval = |x: &Mat| {
            let mut t = Tape::new();
            let xn = t.leaf(x.clone());
            let a = t.slice_cols(xn, 0, 2);
            let b = t.slice_cols(xn, 2, 2);
            let p = t.mul(a, b);
            let cat = t.concat_cols(&[p, a]);
            let l = t.sum_squares(cat);
            (t, xn, l)
        };
        let (mut t, xn, l) = eval(&x0);
        let g = t.grad(l, &[xn]);
        let f = fd_grad(|x| { let (t, _, l) = eval(x); t.scalar(l) }, &x0, 1e-5);
        assert_close(&g[0], &f, 1e-6);
    }

    #[test]
    fn second_order_through_inner_sgd_step() {
        // Inner: w' = w - a * dL_s/dw with L_s = (w c - y_s)^2.
        // Outer: L_q(w') = (w' c - y_q)^2. For scalars everything is closed
        // form; check the full chain (including the Hessian term) exactly.
        let (c, ys, yq, a, w0) = (1.7, 0.3, -0.9, 0.05, 0.4);

        let mut t = Tape::new();
        let w = t.leaf(Mat::from_vec(1, 1, vec![w0]));
        let cn = t.leaf(Mat::from_vec(1, 1, vec![c]));
        let ysn = t.leaf(Mat::from_vec(1, 1, vec![ys]));
        let yqn = t.leaf(Mat::from_vec(1, 1, vec![yq]));

        let pred_s = t.mul(w, cn);
        let rs = t.sub(pred_s, ysn);
        let ls = t.mul(rs, rs);
        let gs = t.backward_graph(ls, &[w])[0].unwrap();
        let step = t.scalar_mul(gs, a);
        let w_adapted = t.sub(w, step);

        let pred_q = t.mul(w_adapted, cn);
        let rq = t.sub(pred_q, yqn);
        let lq = t.mul(rq, rq);
        let meta = t.grad(lq, &[w]);

        // analytic: w' = w - 2ac(wc - ys); dw'/dw = 1 - 2ac^2
        // dLq/dw = 2(w'c - yq) * c * (1 - 2ac^2)
        let w_ad = w0 - 2.0 * a * c * (w0 * c - ys);
        let expected = 2.0 * (w_ad * c - yq) * c * (1.0 - 2.0 * a * c * c);
        let got = meta[0].get(0, 0);
        assert!(
            (got - expected).abs() < 1e-12,
            "meta-gradient {got} vs analytic {expected}"
        );
    }
}
