//! The recording tape and its traced scalar values.

use super::store::ParameterStore;

/// How an input value seeds its forward tangents when lifted onto a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputRole {
    /// Time coordinate: `tangent_t = 1`, `tangent_x = 0`.
    T,
    /// Space coordinate: `tangent_t = 0`, `tangent_x = 1`.
    X,
    /// Velocity coordinate: both tangents zero (the PDE is algebraic in v).
    V,
    /// Plain constant: both tangents zero.
    Constant,
}

/// A scalar taking part in a recorded computation: primal value, directional
/// derivatives along the `t` and `x` inputs, and a handle into the tape.
///
/// The cached fields make reads free; the tape remains the single source of
/// truth during backward.
#[derive(Clone, Copy, Debug)]
pub struct TracedValue {
    pub primal: f64,
    pub tangent_t: f64,
    pub tangent_x: f64,
    node: u32,
}

impl TracedValue {
    pub fn node(&self) -> u32 {
        self.node
    }
}

/// One recorded operation. Input handles always point at earlier nodes, so a
/// single reverse iteration visits consumers before producers.
#[derive(Clone, Copy, Debug)]
enum Op {
    /// Parameter, lifted input or constant: no inputs, nothing to propagate.
    Leaf,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Scale(u32, f64),
    Tanh(u32),
    /// `bias + sum_k w[weights+k] * u[inputs+k]` over two contiguous node
    /// ranges. The weight and bias nodes must be parameters (zero tangents);
    /// this is what lets the tangent channels skip them.
    Affine { inputs: u32, n: u32, weights: u32, bias: u32 },
    /// `sum_k coeffs[k] * u[handles[k]]` with constant coefficients; handles
    /// and coefficients live in the tape's side arrays.
    WeightedSum { handles: u32, coeffs: u32, n: u32 },
    /// Reads the t-tangent channel of a node as a primal value.
    TangentT(u32),
    /// Reads the x-tangent channel of a node as a primal value.
    TangentX(u32),
}

/// Append-only operation tape holding the augmented forward values and, after
/// a reverse sweep, one adjoint per channel per node.
///
/// A tape snapshots the parameter values it was created from: nodes
/// `0..n_params` are the parameters, in store order, which keeps every
/// layer's weight row a contiguous node range.
pub struct Tape {
    ops: Vec<Op>,
    primal: Vec<f64>,
    tan_t: Vec<f64>,
    tan_x: Vec<f64>,
    aux_handles: Vec<u32>,
    aux_coeffs: Vec<f64>,
    n_params: usize,
    adj_p: Vec<f64>,
    adj_t: Vec<f64>,
    adj_x: Vec<f64>,
}

impl Tape {
    /// Start a tape whose first nodes are the parameters of `store`.
    pub fn new(store: &ParameterStore) -> Self {
        let mut tape = Tape {
            ops: Vec::new(),
            primal: Vec::new(),
            tan_t: Vec::new(),
            tan_x: Vec::new(),
            aux_handles: Vec::new(),
            aux_coeffs: Vec::new(),
            n_params: 0,
            adj_p: Vec::new(),
            adj_t: Vec::new(),
            adj_x: Vec::new(),
        };
        tape.reset(store);
        tape
    }

    /// Clear all recorded nodes and re-lift the parameters of `store`,
    /// keeping allocated capacity. Used once per collocation chunk.
    pub fn reset(&mut self, store: &ParameterStore) {
        let p = store.len();
        self.ops.clear();
        self.ops.resize(p, Op::Leaf);
        self.primal.clear();
        self.primal.extend_from_slice(store.values());
        self.tan_t.clear();
        self.tan_t.resize(p, 0.0);
        self.tan_x.clear();
        self.tan_x.resize(p, 0.0);
        self.aux_handles.clear();
        self.aux_coeffs.clear();
        self.n_params = p;
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Next node index to be allocated.
    pub(crate) fn next_node(&self) -> u32 {
        self.ops.len() as u32
    }

    /// Rebuild the `TracedValue` view of an existing node.
    pub(crate) fn node_value(&self, node: u32) -> TracedValue {
        let i = node as usize;
        TracedValue {
            primal: self.primal[i],
            tangent_t: self.tan_t[i],
            tangent_x: self.tan_x[i],
            node,
        }
    }

    fn push(&mut self, op: Op, primal: f64, tan_t: f64, tan_x: f64) -> TracedValue {
        let node = self.ops.len();
        assert!(node < u32::MAX as usize, "tape node count overflow");
        self.ops.push(op);
        self.primal.push(primal);
        self.tan_t.push(tan_t);
        self.tan_x.push(tan_x);
        TracedValue { primal, tangent_t: tan_t, tangent_x: tan_x, node: node as u32 }
    }

    /// Lift a problem input onto the tape, seeding its tangents by role.
    pub fn lift_input(&mut self, value: f64, role: InputRole) -> TracedValue {
        assert!(value.is_finite(), "lift_input requires a finite value, got {value}");
        let (tt, tx) = match role {
            InputRole::T => (1.0, 0.0),
            InputRole::X => (0.0, 1.0),
            InputRole::V | InputRole::Constant => (0.0, 0.0),
        };
        self.push(Op::Leaf, value, tt, tx)
    }

    /// Shorthand for `lift_input(value, InputRole::Constant)`.
    pub fn constant(&mut self, value: f64) -> TracedValue {
        self.lift_input(value, InputRole::Constant)
    }

    /// View parameter `index` as a traced value. The reverse sweep
    /// accumulates this node's adjoint into `gradient[index]`.
    pub fn lift_param(&mut self, store: &ParameterStore, index: usize) -> TracedValue {
        assert!(
            index < self.n_params,
            "parameter index {index} out of range for store of length {}",
            self.n_params
        );
        debug_assert_eq!(
            self.primal[index].to_bits(),
            store.values()[index].to_bits(),
            "store mutated since this tape was reset"
        );
        self.node_value(index as u32)
    }

    pub fn add(&mut self, a: TracedValue, b: TracedValue) -> TracedValue {
        self.push(
            Op::Add(a.node, b.node),
            a.primal + b.primal,
            a.tangent_t + b.tangent_t,
            a.tangent_x + b.tangent_x,
        )
    }

    pub fn sub(&mut self, a: TracedValue, b: TracedValue) -> TracedValue {
        self.push(
            Op::Sub(a.node, b.node),
            a.primal - b.primal,
            a.tangent_t - b.tangent_t,
            a.tangent_x - b.tangent_x,
        )
    }

    pub fn mul(&mut self, a: TracedValue, b: TracedValue) -> TracedValue {
        self.push(
            Op::Mul(a.node, b.node),
            a.primal * b.primal,
            a.tangent_t * b.primal + a.primal * b.tangent_t,
            a.tangent_x * b.primal + a.primal * b.tangent_x,
        )
    }

    pub fn div(&mut self, a: TracedValue, b: TracedValue) -> TracedValue {
        assert!(b.primal != 0.0, "division by zero primal");
        let inv = 1.0 / b.primal;
        let p = a.primal * inv;
        self.push(
            Op::Div(a.node, b.node),
            p,
            (a.tangent_t - p * b.tangent_t) * inv,
            (a.tangent_x - p * b.tangent_x) * inv,
        )
    }

    pub fn neg(&mut self, a: TracedValue) -> TracedValue {
        self.push(Op::Neg(a.node), -a.primal, -a.tangent_t, -a.tangent_x)
    }

    /// Multiply by a compile-time-known constant.
    pub fn scale(&mut self, a: TracedValue, c: f64) -> TracedValue {
        self.push(Op::Scale(a.node, c), c * a.primal, c * a.tangent_t, c * a.tangent_x)
    }

    pub fn tanh(&mut self, a: TracedValue) -> TracedValue {
        let y = a.primal.tanh();
        let s = 1.0 - y * y;
        self.push(Op::Tanh(a.node), y, s * a.tangent_t, s * a.tangent_x)
    }

    pub(crate) fn tanh_node(&mut self, node: u32) -> TracedValue {
        let v = self.node_value(node);
        self.tanh(v)
    }

    /// Extract the t-tangent of `a` as a value. The result carries zero
    /// tangents of its own; second input derivatives are not modelled.
    pub fn tangent_t(&mut self, a: TracedValue) -> TracedValue {
        self.push(Op::TangentT(a.node), a.tangent_t, 0.0, 0.0)
    }

    /// Extract the x-tangent of `a` as a value.
    pub fn tangent_x(&mut self, a: TracedValue) -> TracedValue {
        self.push(Op::TangentX(a.node), a.tangent_x, 0.0, 0.0)
    }

    /// Dense-layer primitive: `bias + sum_k w[k] * u[k]` over the contiguous
    /// node range `inputs..inputs+n` with weights at the contiguous parameter
    /// range `weights..weights+n` and bias at parameter node `bias`.
    pub(crate) fn affine(&mut self, inputs: u32, n: u32, weights: u32, bias: u32) -> TracedValue {
        debug_assert!((weights + n) as usize <= self.n_params && (bias as usize) < self.n_params);
        debug_assert!((inputs + n) as usize <= self.ops.len());
        let (i0, w0, n) = (inputs as usize, weights as usize, n as usize);
        let w = &self.primal[w0..w0 + n];
        let up = &self.primal[i0..i0 + n];
        let ut = &self.tan_t[i0..i0 + n];
        let ux = &self.tan_x[i0..i0 + n];
        let mut p = self.primal[bias as usize];
        let mut tt = 0.0;
        let mut tx = 0.0;
        for k in 0..n {
            p += w[k] * up[k];
            tt += w[k] * ut[k];
            tx += w[k] * ux[k];
        }
        self.push(Op::Affine { inputs, n: n as u32, weights, bias }, p, tt, tx)
    }

    /// Linear combination with constant coefficients over arbitrary nodes.
    pub fn weighted_sum(&mut self, items: &[TracedValue], coeffs: &[f64]) -> TracedValue {
        assert_eq!(items.len(), coeffs.len(), "weighted_sum length mismatch");
        let h0 = self.aux_handles.len() as u32;
        let c0 = self.aux_coeffs.len() as u32;
        self.aux_handles.extend(items.iter().map(|v| v.node));
        self.aux_coeffs.extend_from_slice(coeffs);
        let mut p = 0.0;
        let mut tt = 0.0;
        let mut tx = 0.0;
        for (v, &c) in items.iter().zip(coeffs) {
            p += c * v.primal;
            tt += c * v.tangent_t;
            tx += c * v.tangent_x;
        }
        self.push(Op::WeightedSum { handles: h0, coeffs: c0, n: items.len() as u32 }, p, tt, tx)
    }

    /// Reverse sweep from `loss`, accumulating `d loss / d theta_i` into
    /// `store.gradient[i]`. The recorded nodes are left untouched, so the
    /// sweep can be re-run (or run from a different root) on the same tape.
    pub fn backward(&mut self, loss: TracedValue, store: &mut ParameterStore) {
        assert_eq!(store.len(), self.n_params, "store does not match this tape's parameters");
        self.backward_into(loss, store.gradient_mut());
    }

    /// As [`backward`](Self::backward) but accumulating into a caller buffer.
    pub fn backward_into(&mut self, loss: TracedValue, grad: &mut [f64]) {
        let n = self.ops.len();
        assert!((loss.node as usize) < n, "loss node is not on this tape");
        assert_eq!(grad.len(), self.n_params, "gradient buffer length mismatch");

        self.adj_p.clear();
        self.adj_p.resize(n, 0.0);
        self.adj_t.clear();
        self.adj_t.resize(n, 0.0);
        self.adj_x.clear();
        self.adj_x.resize(n, 0.0);
        self.adj_p[loss.node as usize] = 1.0;

        for idx in (self.n_params..n).rev() {
            let ap = self.adj_p[idx];
            let at = self.adj_t[idx];
            let ax = self.adj_x[idx];
            if ap == 0.0 && at == 0.0 && ax == 0.0 {
                continue;
            }
            match self.ops[idx] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    self.adj_p[a] += ap;
                    self.adj_t[a] += at;
                    self.adj_x[a] += ax;
                    self.adj_p[b] += ap;
                    self.adj_t[b] += at;
                    self.adj_x[b] += ax;
                }
                Op::Sub(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    self.adj_p[a] += ap;
                    self.adj_t[a] += at;
                    self.adj_x[a] += ax;
                    self.adj_p[b] -= ap;
                    self.adj_t[b] -= at;
                    self.adj_x[b] -= ax;
                }
                Op::Mul(a, b) => {
                    let (a, b) = (a as usize, b as usize);
                    let (pa, pb) = (self.primal[a], self.primal[b]);
                    let (ta, tb) = (self.tan_t[a], self.tan_t[b]);
                    let (xa, xb) = (self.tan_x[a], self.tan_x[b]);
                    self.adj_p[a] += ap * pb + at * tb + ax * xb;
                    self.adj_p[b] += ap * pa + at * ta + ax * xa;
                    self.adj_t[a] += at * pb;
                    self.adj_t[b] += at * pa;
                    self.adj_x[a] += ax * pb;
                    self.adj_x[b] += ax * pa;
                }
                Op::Div(a, b) => {
                    // z = a/b with z.tt = ta/pb - pa*tb/pb^2 (same for x).
                    let (a, b) = (a as usize, b as usize);
                    let (pa, pb) = (self.primal[a], self.primal[b]);
                    let (ta, tb) = (self.tan_t[a], self.tan_t[b]);
                    let (xa, xb) = (self.tan_x[a], self.tan_x[b]);
                    let zp = self.primal[idx];
                    let inv = 1.0 / pb;
                    let inv2 = inv * inv;
                    self.adj_p[a] += ap * inv - (at * tb + ax * xb) * inv2;
                    self.adj_p[b] += -ap * zp * inv
                        + at * (-ta * inv2 + 2.0 * pa * tb * inv2 * inv)
                        + ax * (-xa * inv2 + 2.0 * pa * xb * inv2 * inv);
                    self.adj_t[a] += at * inv;
                    self.adj_t[b] -= at * zp * inv;
                    self.adj_x[a] += ax * inv;
                    self.adj_x[b] -= ax * zp * inv;
                }
                Op::Neg(a) => {
                    let a = a as usize;
                    self.adj_p[a] -= ap;
                    self.adj_t[a] -= at;
                    self.adj_x[a] -= ax;
                }
                Op::Scale(a, c) => {
                    let a = a as usize;
                    self.adj_p[a] += c * ap;
                    self.adj_t[a] += c * at;
                    self.adj_x[a] += c * ax;
                }
                Op::Tanh(a) => {
                    // y = tanh(a): d/da = 1-y^2, and the tangent channels pull
                    // in its derivative -2y(1-y^2) against the stored input
                    // tangents.
                    let a = a as usize;
                    let y = self.primal[idx];
                    let s = 1.0 - y * y;
                    let dds = -2.0 * y * s;
                    self.adj_p[a] += ap * s + dds * (at * self.tan_t[a] + ax * self.tan_x[a]);
                    self.adj_t[a] += at * s;
                    self.adj_x[a] += ax * s;
                }
                Op::Affine { inputs, n, weights, bias } => {
                    let (i0, w0, n) = (inputs as usize, weights as usize, n as usize);
                    self.adj_p[bias as usize] += ap;
                    // Four contiguous passes; the channel split keeps each one
                    // a plain fused multiply-add over slices.
                    {
                        let (head, tail) = split_two(&mut self.adj_p, i0, w0, n);
                        let (adj_u, adj_w) = if i0 < w0 { (head, tail) } else { (tail, head) };
                        let w = &self.primal[w0..w0 + n];
                        let up = &self.primal[i0..i0 + n];
                        for k in 0..n {
                            adj_u[k] += ap * w[k];
                            adj_w[k] += ap * up[k];
                        }
                        let ut = &self.tan_t[i0..i0 + n];
                        for k in 0..n {
                            adj_w[k] += at * ut[k];
                        }
                        let ux = &self.tan_x[i0..i0 + n];
                        for k in 0..n {
                            adj_w[k] += ax * ux[k];
                        }
                    }
                    if at != 0.0 {
                        let adj_t = &mut self.adj_t[i0..i0 + n];
                        let w = &self.primal[w0..w0 + n];
                        for k in 0..n {
                            adj_t[k] += at * w[k];
                        }
                    }
                    if ax != 0.0 {
                        let adj_x = &mut self.adj_x[i0..i0 + n];
                        let w = &self.primal[w0..w0 + n];
                        for k in 0..n {
                            adj_x[k] += ax * w[k];
                        }
                    }
                }
                Op::WeightedSum { handles, coeffs, n } => {
                    let h0 = handles as usize;
                    let c0 = coeffs as usize;
                    for k in 0..n as usize {
                        let h = self.aux_handles[h0 + k] as usize;
                        let c = self.aux_coeffs[c0 + k];
                        self.adj_p[h] += c * ap;
                        self.adj_t[h] += c * at;
                        self.adj_x[h] += c * ax;
                    }
                }
                Op::TangentT(a) => {
                    self.adj_t[a as usize] += ap;
                }
                Op::TangentX(a) => {
                    self.adj_x[a as usize] += ap;
                }
            }
        }

        for (g, adj) in grad.iter_mut().zip(&self.adj_p[..self.n_params]) {
            *g += adj;
        }
    }
}

/// Two disjoint mutable windows `[a0, a0+n)` and `[b0, b0+n)` of one slice.
fn split_two(v: &mut [f64], a0: usize, b0: usize, n: usize) -> (&mut [f64], &mut [f64]) {
    let (lo, hi) = if a0 < b0 { (a0, b0) } else { (b0, a0) };
    assert!(lo + n <= hi, "affine input and weight ranges overlap");
    let (left, right) = v.split_at_mut(hi);
    (&mut left[lo..lo + n], &mut right[..n])
}
