//! Velocity quadratures on the full range [-1,1] and half range (0,1].

/// Which velocity interval a rule integrates over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VelocityRange {
    /// [-1, 1]; weights sum to 2 and nodes are symmetric under v <-> -v.
    Full,
    /// (0, 1]; weights sum to 1. Used for the even/odd parity variables.
    Half,
}

/// Nodes and positive weights of one velocity rule, ascending in v.
#[derive(Clone, Debug)]
pub struct VelocityQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    range: VelocityRange,
}

impl VelocityQuadrature {
    /// Gauss-Legendre rule with `n` nodes on [-1, 1].
    ///
    /// Built by mirroring the computed positive roots, so node symmetry and
    /// weight equality under v <-> -v are exact; odd `n` places a node at
    /// exactly 0.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let (nodes, weights) = gauss_legendre_rule(n);
        VelocityQuadrature { nodes, weights, range: VelocityRange::Full }
    }

    /// `n >= 2` uniformly spaced nodes on [-1, 1] including both endpoints,
    /// with trapezoid weights. Odd `n` includes v = 0 exactly.
    pub fn uniform_trapezoid(n: usize) -> Self {
        assert!(n >= 2, "trapezoid rule needs at least two nodes");
        let dv = 2.0 / (n - 1) as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![dv; n];
        for i in 0..n / 2 {
            let a = -1.0 + i as f64 * dv;
            nodes[i] = a;
            nodes[n - 1 - i] = -a;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        weights[0] = 0.5 * dv;
        weights[n - 1] = 0.5 * dv;
        VelocityQuadrature { nodes, weights, range: VelocityRange::Full }
    }

    /// Gauss-Legendre rule with `n` nodes mapped onto (0, 1); weights sum
    /// to 1. Avoids v = 0, where transport degenerates.
    pub fn gauss_legendre_half(n: usize) -> Self {
        let full = Self::gauss_legendre(n);
        let nodes = full.nodes.iter().map(|&x| 0.5 * (x + 1.0)).collect();
        let weights = full.weights.iter().map(|&w| 0.5 * w).collect();
        VelocityQuadrature { nodes, weights, range: VelocityRange::Half }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn range(&self) -> VelocityRange {
        self.range
    }

    /// `sum_k w_k f_k` for samples taken at the rule's nodes.
    pub fn integrate(&self, f_values: &[f64]) -> f64 {
        assert_eq!(f_values.len(), self.len(), "sample count does not match rule");
        self.weights.iter().zip(f_values).map(|(w, f)| w * f).sum()
    }

    /// Index of the node mirroring node `k` (v <-> -v). Only meaningful for
    /// full-range rules, whose construction makes the mirror exact.
    pub fn mirror_index(&self, k: usize) -> usize {
        debug_assert_eq!(self.range, VelocityRange::Full);
        self.len() - 1 - k
    }
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1], by
/// Newton iteration on the Legendre recurrence.
fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n / 2;
    for i in 0..m {
        // Tricomi-style initial guess for the i-th root from the top.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // x is the i-th positive root from the top; mirror it.
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let (_, d) = legendre_and_derivative(n, 0.0);
        nodes[m] = 0.0;
        weights[m] = 2.0 / (d * d);
    }
    (nodes, weights)
}

/// (P_n(x), P_n'(x)) via the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = if x.abs() < 1.0 {
        n as f64 * (x * p - p_prev) / (x * x - 1.0)
    } else {
        // Only reached at the interval ends, which are never roots.
        n as f64 * (n as f64 + 1.0) / 2.0 * x.powi(n as i32 - 1)
    };
    (p, d)
}
