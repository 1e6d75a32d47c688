//! Fully connected feed-forward network f(t,x,v) with tanh hidden layers and
//! a linear scalar output.

use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{InputRole, LayerShape, ParamLayout, ParameterStore, Tape, TracedValue};

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("invalid layer widths {0:?}: need >= 2 layers, first width 3, last width 1, all >= 1")]
    InvalidWidths(Vec<usize>),
    #[error("parameter store of length {store} does not match network layout of length {layout}")]
    LayoutMismatch { store: usize, layout: usize },
    #[error("checkpoint layer {layer} has {got} weights, expected {expected}")]
    ShapeMismatch { layer: usize, got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Layer widths (first 3 for the (t,x,v) inputs, last 1) plus the init seed.
/// Hidden activations are tanh; the output is linear.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct NetworkConfig {
    pub layer_widths: Vec<usize>,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(layer_widths: Vec<usize>, seed: u64) -> Result<Self, MlpError> {
        let ok = layer_widths.len() >= 2
            && layer_widths.first() == Some(&3)
            && layer_widths.last() == Some(&1)
            && layer_widths.iter().all(|&w| w >= 1);
        if !ok {
            return Err(MlpError::InvalidWidths(layer_widths));
        }
        Ok(NetworkConfig { layer_widths, seed })
    }

    pub fn layout(&self) -> ParamLayout {
        let shapes = self
            .layer_widths
            .windows(2)
            .map(|w| LayerShape { rows: w[1], cols: w[0] })
            .collect();
        ParamLayout::new(shapes)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total()
    }
}

/// Glorot-uniform weights, zero biases; a pure function of (config, seed).
pub fn init_parameters(config: &NetworkConfig) -> ParameterStore {
    let layout = config.layout();
    let mut values = vec![0.0; layout.total()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for (l, shape) in layout.layers().to_vec().iter().enumerate() {
        let bound = (6.0 / (shape.cols + shape.rows) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        let w0 = layout.weight_offset(l);
        for w in &mut values[w0..w0 + shape.rows * shape.cols] {
            *w = dist.sample(&mut rng);
        }
        // biases stay zero
    }
    ParameterStore::new(layout, values)
}

/// A network plus its precomputed parameter layout, ready to evaluate on a
/// tape. Stateless with respect to evaluation: safe to share across threads
/// against read-only parameter values.
#[derive(Clone, Debug)]
pub struct Mlp {
    config: NetworkConfig,
    layout: ParamLayout,
}

impl Mlp {
    pub fn new(config: NetworkConfig) -> Self {
        let layout = config.layout();
        Mlp { config, layout }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// Evaluate f(t,x,v) on the tape, returning a traced scalar carrying
    /// valid t- and x-tangents.
    pub fn forward(
        &self,
        tape: &mut Tape,
        t: TracedValue,
        x: TracedValue,
        v: TracedValue,
    ) -> TracedValue {
        assert_eq!(
            tape.n_params(),
            self.layout.total(),
            "tape parameters do not match network layout"
        );
        // The layer primitive consumes a contiguous node range; re-emit the
        // inputs if the caller interleaved other nodes between them.
        let contiguous = x.node() == t.node() + 1 && v.node() == t.node() + 2;
        let mut cur_start = if contiguous {
            t.node()
        } else {
            let start = tape.next_node();
            tape.scale(t, 1.0);
            tape.scale(x, 1.0);
            tape.scale(v, 1.0);
            start
        };
        let mut cur_width = 3u32;

        let n_layers = self.layout.layers().len();
        for l in 0..n_layers {
            let shape = self.layout.layers()[l];
            debug_assert_eq!(shape.cols as u32, cur_width);
            let b0 = self.layout.bias_offset(l) as u32;
            let z_start = tape.next_node();
            for j in 0..shape.rows {
                let w_row = self.layout.weight_row_offset(l, j) as u32;
                tape.affine(cur_start, cur_width, w_row, b0 + j as u32);
            }
            if l + 1 < n_layers {
                let a_start = tape.next_node();
                for j in 0..shape.rows as u32 {
                    tape.tanh_node(z_start + j);
                }
                cur_start = a_start;
            } else {
                cur_start = z_start;
            }
            cur_width = shape.rows as u32;
        }
        debug_assert_eq!(cur_width, 1);
        tape.node_value(cur_start)
    }

    /// Lift a point and evaluate it in one call.
    pub fn forward_point(&self, tape: &mut Tape, t: f64, x: f64, v: f64) -> TracedValue {
        let tv = tape.lift_input(t, InputRole::T);
        let xv = tape.lift_input(x, InputRole::X);
        let vv = tape.lift_input(v, InputRole::V);
        self.forward(tape, tv, xv, vv)
    }
}

/// Spec-level forward: checks the store against the config and evaluates one
/// point. Training paths use [`Mlp`] to avoid rebuilding the layout.
pub fn forward(
    tape: &mut Tape,
    store: &ParameterStore,
    config: &NetworkConfig,
    t: TracedValue,
    x: TracedValue,
    v: TracedValue,
) -> Result<TracedValue, MlpError> {
    let layout = config.layout();
    if store.len() != layout.total() {
        return Err(MlpError::LayoutMismatch { store: store.len(), layout: layout.total() });
    }
    Ok(Mlp::new(config.clone()).forward(tape, t, x, v))
}

/// Batch evaluation: (f, df/dt, df/dx) at each point, order-preserving.
pub fn evaluate_grid(
    store: &ParameterStore,
    config: &NetworkConfig,
    points: &[(f64, f64, f64)],
) -> Vec<(f64, f64, f64)> {
    assert!(!points.is_empty(), "evaluate_grid needs at least one point");
    let mlp = Mlp::new(config.clone());
    let mut tape = Tape::new(store);
    let mut out = Vec::with_capacity(points.len());
    for (i, &(t, x, v)) in points.iter().enumerate() {
        if i % 1024 == 0 && i > 0 {
            tape.reset(store);
        }
        let f = mlp.forward_point(&mut tape, t, x, v);
        out.push((f.primal, f.tangent_t, f.tangent_x));
    }
    out
}

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    w: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    widths: Vec<usize>,
    seed: u64,
    layers: Vec<CheckpointLayer>,
}

/// Serialize (config, parameters) as the checkpoint JSON document
/// `{"widths": [...], "seed": n, "layers": [{"w": [...], "b": [...]}, ...]}`
/// with row-major weights. Loading reproduces outputs bitwise.
pub fn write_checkpoint(
    writer: impl Write,
    config: &NetworkConfig,
    store: &ParameterStore,
) -> Result<(), MlpError> {
    let layout = config.layout();
    if store.len() != layout.total() {
        return Err(MlpError::LayoutMismatch { store: store.len(), layout: layout.total() });
    }
    let layers = layout
        .layers()
        .iter()
        .enumerate()
        .map(|(l, shape)| {
            let w0 = layout.weight_offset(l);
            let b0 = layout.bias_offset(l);
            CheckpointLayer {
                w: store.values()[w0..w0 + shape.rows * shape.cols].to_vec(),
                b: store.values()[b0..b0 + shape.rows].to_vec(),
            }
        })
        .collect();
    let doc = CheckpointDoc { widths: config.layer_widths.clone(), seed: config.seed, layers };
    serde_json::to_writer(writer, &doc)?;
    Ok(())
}

pub fn save_checkpoint(
    path: impl AsRef<Path>,
    config: &NetworkConfig,
    store: &ParameterStore,
) -> Result<(), MlpError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), config, store)
}

pub fn read_checkpoint(reader: impl Read) -> Result<(NetworkConfig, ParameterStore), MlpError> {
    let doc: CheckpointDoc = serde_json::from_reader(reader)?;
    let config = NetworkConfig::new(doc.widths, doc.seed)?;
    let layout = config.layout();
    if doc.layers.len() != layout.layers().len() {
        return Err(MlpError::ShapeMismatch {
            layer: doc.layers.len(),
            got: doc.layers.len(),
            expected: layout.layers().len(),
        });
    }
    let mut values = vec![0.0; layout.total()];
    for (l, (layer, shape)) in doc.layers.iter().zip(layout.layers()).enumerate() {
        let n_w = shape.rows * shape.cols;
        if layer.w.len() != n_w {
            return Err(MlpError::ShapeMismatch { layer: l, got: layer.w.len(), expected: n_w });
        }
        if layer.b.len() != shape.rows {
            return Err(MlpError::ShapeMismatch {
                layer: l,
                got: layer.b.len(),
                expected: shape.rows,
            });
        }
        let w0 = layout.weight_offset(l);
        values[w0..w0 + n_w].copy_from_slice(&layer.w);
        let b0 = layout.bias_offset(l);
        values[b0..b0 + shape.rows].copy_from_slice(&layer.b);
    }
    Ok((config, ParameterStore::new(layout, values)))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkConfig, ParameterStore), MlpError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
