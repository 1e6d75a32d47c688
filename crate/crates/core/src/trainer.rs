//! Gradient-based training: Adam, step-decay scheduling, adaptive loss-weight
//! balancing and the full-batch collocation loop.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{ParameterStore, Tape};
use crate::mlp::{init_parameters, Mlp, NetworkConfig};
use crate::physics::{
    ge_row_sum_squares, ic_point_square, pair_square, CollocationGrid, GridBoundary, LossWeights,
    ProblemSpec,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}: ge={ge}, ic={ic}, bc={bc}")]
    NonFiniteLoss { epoch: usize, ge: f64, ic: f64, bc: f64, history: TrainingHistory },
    #[error("degenerate loss term: mean absolute gradient is zero")]
    DegenerateLoss,
    #[error("relative error needs a reference with nonzero norm")]
    ZeroNormReference,
    #[error("length mismatch: prediction has {pred} entries, reference has {reference}")]
    LengthMismatch { pred: usize, reference: usize },
}

/// Adam hyperparameters. Moments and the step counter live in [`Adam`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8 }
    }
}

/// Adam optimizer state: bias-corrected first/second moments per parameter.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, param_len: usize) -> Self {
        Adam { config, m: vec![0.0; param_len], v: vec![0.0; param_len], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One in-place update from `store.gradient()` at the configured rate.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step_with_lr(store, self.config.learning_rate)
    }

    /// One in-place update at an explicit (scheduled) learning rate.
    pub fn step_with_lr(&mut self, store: &mut ParameterStore, lr: f64) {
        assert_eq!(store.len(), self.m.len(), "optimizer state does not match store");
        self.t += 1;
        let b1 = self.config.beta1;
        let b2 = self.config.beta2;
        let corr1 = 1.0 - b1.powi(self.t as i32);
        let corr2 = 1.0 - b2.powi(self.t as i32);
        let eps = self.config.eps_hat;
        let (values, grad) = store.values_and_gradient();
        for i in 0..values.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let m_hat = self.m[i] / corr1;
            let v_hat = self.v[i] / corr2;
            values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Step-decay schedule: rate after n epochs is `initial * gamma^(n / step_size)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub step_size: usize,
    pub gamma: f64,
}

impl SchedulerConfig {
    pub fn rate_at(&self, initial: f64, epoch: usize) -> f64 {
        assert!(self.step_size > 0 && self.gamma > 0.0 && self.gamma <= 1.0);
        initial * self.gamma.powi((epoch / self.step_size) as i32)
    }
}

/// Settings of the gradient-statistics weight balancing.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub enabled: bool,
    /// Moving-average mixing factor; larger leans harder on the fresh ratio.
    pub alpha: f64,
    /// Refresh cadence in epochs.
    pub update_period: usize,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { enabled: true, alpha: 0.9, update_period: 10 }
    }
}

/// Current loss weights for the non-GE terms. The GE weight is pinned to 1.
#[derive(Clone, Copy, Debug)]
pub struct BalanceState {
    pub lambda_i: f64,
    pub lambda_b: f64,
}

impl Default for BalanceState {
    fn default() -> Self {
        BalanceState { lambda_i: 1.0, lambda_b: 1.0 }
    }
}

impl BalanceState {
    pub fn weights(&self) -> LossWeights {
        LossWeights::new(self.lambda_i, self.lambda_b)
    }
}

/// `max_theta |grad GE| / mean |grad term|`; the raw balance ratio for one
/// non-GE loss term. Gradients are of the unweighted individual losses.
pub fn lambda_hat(ge_grad: &[f64], term_grad: &[f64]) -> Result<f64, TrainError> {
    let max_ge = ge_grad.iter().fold(0.0f64, |m, &g| m.max(g.abs()));
    let mean_term = term_grad.iter().map(|g| g.abs()).sum::<f64>() / term_grad.len().max(1) as f64;
    if mean_term == 0.0 || !mean_term.is_finite() {
        return Err(TrainError::DegenerateLoss);
    }
    Ok(max_ge / mean_term)
}

/// Raw ratios for the IC and BC terms in one call.
pub fn compute_balance_weights(
    ge_grad: &[f64],
    ic_grad: &[f64],
    bc_grad: &[f64],
) -> (Result<f64, TrainError>, Result<f64, TrainError>) {
    (lambda_hat(ge_grad, ic_grad), lambda_hat(ge_grad, bc_grad))
}

/// Moving-average update `lambda <- (1 - alpha) lambda + alpha lambda_hat`.
/// A degenerate (absent) ratio keeps the previous weight.
pub fn update_balance(state: &mut BalanceState, alpha: f64, hat_i: Option<f64>, hat_b: Option<f64>) {
    if let Some(h) = hat_i {
        state.lambda_i = (1.0 - alpha) * state.lambda_i + alpha * h;
    }
    if let Some(h) = hat_b {
        state.lambda_b = (1.0 - alpha) * state.lambda_b + alpha * h;
    }
    assert!(
        state.lambda_i.is_finite() && state.lambda_i > 0.0,
        "balance weight lambda_i left (0, inf): {}",
        state.lambda_i
    );
    assert!(
        state.lambda_b.is_finite() && state.lambda_b > 0.0,
        "balance weight lambda_b left (0, inf): {}",
        state.lambda_b
    );
}

/// One history row per epoch, recorded before the optimizer step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_ge: f64,
    pub loss_ic: f64,
    pub loss_bc: f64,
    pub total: f64,
    pub lambda_i: f64,
    pub lambda_b: f64,
    pub learning_rate: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub const CSV_HEADER: &'static str =
        "epoch,loss_ge,loss_ic,loss_bc,total,lambda_i,lambda_b,lr,wall_time";

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.loss_ge,
                r.loss_ic,
                r.loss_bc,
                r.total,
                r.lambda_i,
                r.lambda_b,
                r.learning_rate,
                r.wall_time
            )?;
        }
        Ok(())
    }
}

/// Everything the training loop needs besides the problem and the grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    pub scheduler: SchedulerConfig,
    pub balance: BalanceConfig,
}

/// The three loss values and their separate parameter gradients at the
/// current weights.
pub struct LossBundle {
    pub ge: f64,
    pub ic: f64,
    pub bc: f64,
    pub grad_ge: Vec<f64>,
    pub grad_ic: Vec<f64>,
    pub grad_bc: Vec<f64>,
}

impl LossBundle {
    pub fn total(&self, w: &LossWeights) -> f64 {
        w.lambda_g * self.ge + w.lambda_i * self.ic + w.lambda_b * self.bc
    }
}

/// Rows per GE chunk / points per IC-BC chunk. Fixed constants: the chunk
/// decomposition is part of the deterministic reduction order.
const GE_CHUNK_ROWS: usize = 16;
const POINT_CHUNK: usize = 512;

/// Evaluate all three losses and their gradients over the full grid.
///
/// Work is split into fixed chunks evaluated on per-thread tapes; chunk
/// contributions are reduced in chunk order, so results are bitwise
/// reproducible regardless of thread count.
pub fn evaluate_losses(
    mlp: &Mlp,
    store: &ParameterStore,
    grid: &CollocationGrid,
    spec: &ProblemSpec,
) -> LossBundle {
    let nv = grid.quad.len();
    let nx = grid.xs.len();
    let nt = grid.times.len();
    let n_params = store.len();

    // --- governing equation: chunk over (t, x) rows ---
    let rows: Vec<(f64, f64)> = grid
        .times
        .iter()
        .flat_map(|&t| grid.xs.iter().map(move |&x| (t, x)))
        .collect();
    let ge_parts: Vec<(f64, Vec<f64>)> = rows
        .par_chunks(GE_CHUNK_ROWS)
        .map(|chunk| {
            let mut tape = Tape::new(store);
            let mut grad = vec![0.0; n_params];
            let mut sum = 0.0;
            let mut row_vals = Vec::with_capacity(nv);
            for &(t, x) in chunk {
                row_vals.clear();
                for &v in grid.quad.nodes() {
                    row_vals.push(mlp.forward_point(&mut tape, t, x, v));
                }
                let row_sum =
                    ge_row_sum_squares(&mut tape, &row_vals, (spec.sigma)(x), spec.epsilon, &grid.quad);
                sum += row_sum.primal;
                tape.backward_into(row_sum, &mut grad);
                tape.reset(store);
            }
            (sum, grad)
        })
        .collect();
    let n_ge = (nt * nx * nv) as f64;
    let (ge, grad_ge) = reduce_parts(ge_parts, n_params, n_ge);

    // --- initial condition: chunk over (x, v) points ---
    let ic_points: Vec<(f64, f64)> = grid
        .xs
        .iter()
        .flat_map(|&x| grid.quad.nodes().iter().map(move |&v| (x, v)))
        .collect();
    let ic_parts: Vec<(f64, Vec<f64>)> = ic_points
        .par_chunks(POINT_CHUNK)
        .map(|chunk| {
            let mut tape = Tape::new(store);
            let mut grad = vec![0.0; n_params];
            let mut sum = 0.0;
            for &(x, v) in chunk {
                let f = mlp.forward_point(&mut tape, 0.0, x, v);
                let sq = ic_point_square(&mut tape, f, (spec.initial_condition)(x, v));
                sum += sq.primal;
                tape.backward_into(sq, &mut grad);
                tape.reset(store);
            }
            (sum, grad)
        })
        .collect();
    let (ic, grad_ic) = reduce_parts(ic_parts, n_params, ic_points.len() as f64);

    // --- boundary condition ---
    enum BcItem {
        /// |f(t,0,v) - f(t,1,v)|^2
        PeriodicPair { t: f64, v: f64 },
        /// |f(t,x_wall,v) - g|^2
        InflowPoint { t: f64, x: f64, v: f64, g: f64 },
        /// |f(t,x_wall,-v) - f(t,x_wall,v)|^2
        SpecularPair { t: f64, x: f64, v: f64 },
    }
    let mut bc_items = Vec::new();
    match &grid.boundary {
        GridBoundary::Periodic => {
            for &t in &grid.times {
                for &v in grid.quad.nodes() {
                    bc_items.push(BcItem::PeriodicPair { t, v });
                }
            }
        }
        GridBoundary::Inflow { left_nodes, right_nodes } => {
            let (left, right) = match &spec.boundary {
                crate::physics::BoundaryCondition::Inflow { left, right } => (left, right),
                _ => panic!("boundary kind mismatch between grid and problem"),
            };
            for &t in &grid.times {
                for &k in left_nodes {
                    let v = grid.quad.nodes()[k];
                    bc_items.push(BcItem::InflowPoint { t, x: 0.0, v, g: left(t, v) });
                }
                for &k in right_nodes {
                    let v = grid.quad.nodes()[k];
                    bc_items.push(BcItem::InflowPoint { t, x: 1.0, v, g: right(t, v) });
                }
            }
        }
        GridBoundary::Specular => {
            for &t in &grid.times {
                for x in [0.0, 1.0] {
                    for &v in grid.quad.nodes() {
                        bc_items.push(BcItem::SpecularPair { t, x, v });
                    }
                }
            }
        }
    }
    let n_bc = bc_items.len() as f64;
    let bc_parts: Vec<(f64, Vec<f64>)> = bc_items
        .par_chunks(POINT_CHUNK)
        .map(|chunk| {
            let mut tape = Tape::new(store);
            let mut grad = vec![0.0; n_params];
            let mut sum = 0.0;
            for item in chunk {
                let sq = match *item {
                    BcItem::PeriodicPair { t, v } => {
                        let fl = mlp.forward_point(&mut tape, t, 0.0, v);
                        let fr = mlp.forward_point(&mut tape, t, 1.0, v);
                        pair_square(&mut tape, fl, fr)
                    }
                    BcItem::InflowPoint { t, x, v, g } => {
                        let f = mlp.forward_point(&mut tape, t, x, v);
                        ic_point_square(&mut tape, f, g)
                    }
                    BcItem::SpecularPair { t, x, v } => {
                        let f = mlp.forward_point(&mut tape, t, x, v);
                        let fm = mlp.forward_point(&mut tape, t, x, -v);
                        pair_square(&mut tape, fm, f)
                    }
                };
                sum += sq.primal;
                tape.backward_into(sq, &mut grad);
                tape.reset(store);
            }
            (sum, grad)
        })
        .collect();
    let (bc, grad_bc) = reduce_parts(bc_parts, n_params, n_bc);

    LossBundle { ge, ic, bc, grad_ge, grad_ic, grad_bc }
}

/// Sum chunk results in chunk order and apply the 1/N mean normalization.
fn reduce_parts(parts: Vec<(f64, Vec<f64>)>, n_params: usize, n_points: f64) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut grad = vec![0.0; n_params];
    for (sum, part) in parts {
        total += sum;
        for (g, p) in grad.iter_mut().zip(&part) {
            *g += p;
        }
    }
    let inv = 1.0 / n_points;
    for g in &mut grad {
        *g *= inv;
    }
    (total * inv, grad)
}

/// Full-batch training loop. Per epoch: evaluate all losses and their
/// gradients, refresh the balance weights on schedule, apply the weighted
/// combined gradient with Adam at the scheduled rate. Deterministic in the
/// network seed.
pub fn train(
    spec: &ProblemSpec,
    grid: &CollocationGrid,
    net_config: &NetworkConfig,
    trainer_config: &TrainerConfig,
) -> Result<(ParameterStore, TrainingHistory), TrainError> {
    train_with_observer(spec, grid, net_config, trainer_config, |_, _| {})
}

/// As [`train`], invoking `observer(record, store)` after every epoch's
/// update. The observer must not mutate training state; it exists for
/// diagnostics such as tracking the density error against a reference.
pub fn train_with_observer(
    spec: &ProblemSpec,
    grid: &CollocationGrid,
    net_config: &NetworkConfig,
    trainer_config: &TrainerConfig,
    mut observer: impl FnMut(&EpochRecord, &ParameterStore),
) -> Result<(ParameterStore, TrainingHistory), TrainError> {
    let mlp = Mlp::new(net_config.clone());
    let mut store = init_parameters(net_config);
    let mut adam = Adam::new(trainer_config.adam, store.len());
    let mut balance = BalanceState::default();
    let mut history = TrainingHistory::default();
    let start = Instant::now();

    for epoch in 0..trainer_config.epochs {
        let bundle = evaluate_losses(&mlp, &store, grid, spec);
        if !(bundle.ge.is_finite() && bundle.ic.is_finite() && bundle.bc.is_finite()) {
            return Err(TrainError::NonFiniteLoss {
                epoch,
                ge: bundle.ge,
                ic: bundle.ic,
                bc: bundle.bc,
                history,
            });
        }

        if trainer_config.balance.enabled && epoch % trainer_config.balance.update_period == 0 {
            let (hat_i, hat_b) =
                compute_balance_weights(&bundle.grad_ge, &bundle.grad_ic, &bundle.grad_bc);
            update_balance(&mut balance, trainer_config.balance.alpha, hat_i.ok(), hat_b.ok());
        }

        let weights = balance.weights();
        let lr = trainer_config
            .scheduler
            .rate_at(trainer_config.adam.learning_rate, epoch);

        store.zero_grad();
        {
            let grad = store.gradient_mut();
            for i in 0..grad.len() {
                grad[i] = weights.lambda_g * bundle.grad_ge[i]
                    + weights.lambda_i * bundle.grad_ic[i]
                    + weights.lambda_b * bundle.grad_bc[i];
            }
        }
        adam.step_with_lr(&mut store, lr);

        let record = EpochRecord {
            epoch,
            loss_ge: bundle.ge,
            loss_ic: bundle.ic,
            loss_bc: bundle.bc,
            total: bundle.total(&weights),
            lambda_i: balance.lambda_i,
            lambda_b: balance.lambda_b,
            learning_rate: lr,
            wall_time: start.elapsed().as_secs_f64(),
        };
        history.records.push(record);
        observer(&record, &store);
    }

    Ok((store, history))
}

/// `||pred - reference||_2 / ||reference||_2`.
pub fn relative_error(pred: &[f64], reference: &[f64]) -> Result<f64, TrainError> {
    if pred.len() != reference.len() {
        return Err(TrainError::LengthMismatch { pred: pred.len(), reference: reference.len() });
    }
    let ref_norm = reference.iter().map(|r| r * r).sum::<f64>().sqrt();
    if ref_norm == 0.0 {
        return Err(TrainError::ZeroNormReference);
    }
    let diff_norm = pred
        .iter()
        .zip(reference)
        .map(|(p, r)| (p - r) * (p - r))
        .sum::<f64>()
        .sqrt();
    Ok(diff_norm / ref_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{LayerShape, ParamLayout};
    use crate::quadrature::VelocityQuadrature;

    fn flat_store(values: &[f64]) -> ParameterStore {
        let layout = ParamLayout::new(vec![LayerShape { rows: values.len(), cols: 0 }]);
        ParameterStore::new(layout, values.to_vec())
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let cfg = AdamConfig { learning_rate: 0.01, ..Default::default() };
        let mut store = flat_store(&[5.0]);
        store.gradient_mut()[0] = 1.0;
        let mut adam = Adam::new(cfg, 1);
        adam.step(&mut store);
        let moved = 5.0 - store.values()[0];
        assert!((moved - 0.01).abs() < 1e-8, "first step moved {moved}");
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut store = flat_store(&[1.0, -2.0]);
        let mut adam = Adam::new(AdamConfig::default(), 2);
        adam.step(&mut store);
        assert_eq!(store.values(), &[1.0, -2.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_matches_hand_unrolled_recurrence() {
        let cfg = AdamConfig { learning_rate: 0.1, beta1: 0.9, beta2: 0.999, eps_hat: 1e-8 };
        let g = 0.7;
        let mut store = flat_store(&[2.0]);
        let mut adam = Adam::new(cfg, 1);
        for _ in 0..2 {
            store.zero_grad();
            store.gradient_mut()[0] = g;
            adam.step(&mut store);
        }
        // hand-unrolled two steps with constant gradient
        let mut theta = 2.0;
        let mut m = 0.0;
        let mut v = 0.0;
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            theta -= 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        assert!((store.values()[0] - theta).abs() < 1e-12);
    }

    #[test]
    fn adam_odd_symmetry_under_sign_flip() {
        let cfg = AdamConfig { learning_rate: 0.05, ..Default::default() };
        let grads = [0.3, -1.2, 0.01, 4.0];
        let mut plus = flat_store(&[0.0; 4]);
        let mut minus = flat_store(&[0.0; 4]);
        let mut adam_p = Adam::new(cfg, 4);
        let mut adam_m = Adam::new(cfg, 4);
        for _ in 0..3 {
            plus.zero_grad();
            minus.zero_grad();
            for i in 0..4 {
                plus.gradient_mut()[i] = grads[i];
                minus.gradient_mut()[i] = -grads[i];
            }
            adam_p.step(&mut plus);
            adam_m.step(&mut minus);
        }
        for i in 0..4 {
            assert!((plus.values()[i] + minus.values()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn scheduler_step_decay_sequence() {
        let sched = SchedulerConfig { step_size: 750, gamma: 0.95 };
        for (epoch, pow) in [(0usize, 0), (749, 0), (750, 1), (1500, 2), (2499, 3)] {
            let expect = 0.005 * 0.95f64.powi(pow);
            assert_eq!(sched.rate_at(0.005, epoch), expect);
        }
    }

    #[test]
    fn lambda_hat_direct_formula() {
        let hat = lambda_hat(&[-4.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!(hat, 4.0);
    }

    #[test]
    fn lambda_hat_of_identical_gradients_at_least_one() {
        let g = [0.1, -0.4, 0.25, 0.05];
        let hat = lambda_hat(&g, &g).unwrap();
        assert!(hat >= 1.0);
    }

    #[test]
    fn lambda_hat_homogeneity() {
        let ge = [3.0, -1.0, 0.5];
        let ic = [0.2, 0.4, -0.1];
        let base = lambda_hat(&ge, &ic).unwrap();
        let c = 7.0;
        let ge_scaled: Vec<f64> = ge.iter().map(|g| c * g).collect();
        let ic_scaled: Vec<f64> = ic.iter().map(|g| c * g).collect();
        assert!((lambda_hat(&ge_scaled, &ic).unwrap() - c * base).abs() < 1e-12);
        assert!((lambda_hat(&ge, &ic_scaled).unwrap() - base / c).abs() < 1e-12);
    }

    #[test]
    fn lambda_hat_degenerate_errors() {
        assert!(matches!(lambda_hat(&[1.0], &[0.0, 0.0]), Err(TrainError::DegenerateLoss)));
    }

    #[test]
    fn balance_update_examples() {
        let mut state = BalanceState::default();
        update_balance(&mut state, 0.9, Some(11.0), None);
        assert!((state.lambda_i - 10.0).abs() < 1e-15);
        assert_eq!(state.lambda_b, 1.0);

        // fixed point
        let before = state.lambda_i;
        update_balance(&mut state, 0.9, Some(before), None);
        assert!((state.lambda_i - before).abs() < 1e-12);

        // alpha = 0 freezes
        update_balance(&mut state, 0.0, Some(1e6), Some(1e6));
        assert!((state.lambda_i - before).abs() < 1e-12);
        assert_eq!(state.lambda_b, 1.0);
    }

    #[test]
    fn relative_error_examples() {
        let r = [1.0, 2.0, 2.0];
        assert_eq!(relative_error(&r, &r).unwrap(), 0.0);
        let scaled: Vec<f64> = r.iter().map(|v| 1.1 * v).collect();
        assert!((relative_error(&scaled, &r).unwrap() - 0.1).abs() < 1e-12);
        let zeros = [0.0, 0.0, 0.0];
        assert!((relative_error(&zeros, &r).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(relative_error(&r, &zeros), Err(TrainError::ZeroNormReference)));
    }

    fn tiny_setup() -> (ProblemSpec, CollocationGrid, NetworkConfig, TrainerConfig) {
        let spec = ProblemSpec::test1(0.1, 0.02);
        let grid = CollocationGrid::new(&spec, 0.2, 0.5, VelocityQuadrature::gauss_legendre(5));
        let net = NetworkConfig::new(vec![3, 6, 1], 42).unwrap();
        let trainer = TrainerConfig {
            epochs: 5,
            adam: AdamConfig { learning_rate: 0.01, ..Default::default() },
            scheduler: SchedulerConfig { step_size: 10, gamma: 0.95 },
            balance: BalanceConfig { enabled: true, alpha: 0.9, update_period: 2 },
        };
        (spec, grid, net, trainer)
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (spec, grid, net, mut trainer) = tiny_setup();
        trainer.epochs = 0;
        let (store, history) = train(&spec, &grid, &net, &trainer).unwrap();
        let init = init_parameters(&net);
        assert_eq!(store.values(), init.values());
        assert!(history.records.is_empty());
    }

    #[test]
    fn training_is_deterministic_bitwise() {
        let (spec, grid, net, trainer) = tiny_setup();
        let (store_a, hist_a) = train(&spec, &grid, &net, &trainer).unwrap();
        let (store_b, hist_b) = train(&spec, &grid, &net, &trainer).unwrap();
        for (a, b) in store_a.values().iter().zip(store_b.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (ra, rb) in hist_a.records.iter().zip(&hist_b.records) {
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
            assert_eq!(ra.lambda_i.to_bits(), rb.lambda_i.to_bits());
        }
    }

    #[test]
    fn history_tracks_epochs_and_schedule() {
        let (spec, grid, net, trainer) = tiny_setup();
        let (_, history) = train(&spec, &grid, &net, &trainer).unwrap();
        assert_eq!(history.records.len(), trainer.epochs);
        for (i, r) in history.records.iter().enumerate() {
            assert_eq!(r.epoch, i);
            assert_eq!(
                r.learning_rate,
                trainer.scheduler.rate_at(trainer.adam.learning_rate, i)
            );
        }
    }

    #[test]
    fn chunked_gradients_match_single_tape_losses() {
        let (spec, grid, net, _) = tiny_setup();
        let store = init_parameters(&net);
        let mlp = Mlp::new(net.clone());
        let bundle = evaluate_losses(&mlp, &store, &grid, &spec);

        let mut tape = Tape::new(&store);
        let (ge, ic, bc) = crate::physics::build_losses_single_tape(&mut tape, &mlp, &grid, &spec);
        assert!(((bundle.ge - ge.primal) / ge.primal.abs().max(1e-300)).abs() < 1e-12);
        assert!(((bundle.ic - ic.primal) / ic.primal.abs().max(1e-300)).abs() < 1e-12);
        assert!(((bundle.bc - bc.primal) / bc.primal.abs().max(1e-300)).abs() < 1e-12);

        let mut grad = vec![0.0; store.len()];
        tape.backward_into(ge, &mut grad);
        for (a, b) in grad.iter().zip(&bundle.grad_ge) {
            let denom = a.abs().max(1e-10);
            assert!(((a - b) / denom).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn csv_roundtrip_has_expected_columns() {
        let history = TrainingHistory {
            records: vec![EpochRecord {
                epoch: 0,
                loss_ge: 1.5,
                loss_ic: 0.25,
                loss_bc: 0.125,
                total: 1.875,
                lambda_i: 1.0,
                lambda_b: 1.0,
                learning_rate: 0.005,
                wall_time: 0.5,
            }],
        };
        let mut buf = Vec::new();
        history.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), TrainingHistory::CSV_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 9);
        assert!(row.starts_with("0,1.5,0.25,0.125,1.875,1,1,0.005,"));
    }
}
