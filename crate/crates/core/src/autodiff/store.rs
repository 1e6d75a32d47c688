//! Flat parameter storage with per-layer slicing metadata.

/// Shape of one dense layer: a `rows x cols` weight matrix plus `rows` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

/// Offsets of every layer's weight block and bias block inside the flat
/// parameter vector. Weights are row-major; each layer stores its weight
/// block first, then its biases.
#[derive(Clone, Debug)]
pub struct ParamLayout {
    layers: Vec<LayerShape>,
    weight_offsets: Vec<usize>,
    bias_offsets: Vec<usize>,
    total: usize,
}

impl ParamLayout {
    pub fn new(layers: Vec<LayerShape>) -> Self {
        let mut weight_offsets = Vec::with_capacity(layers.len());
        let mut bias_offsets = Vec::with_capacity(layers.len());
        let mut offset = 0;
        for layer in &layers {
            weight_offsets.push(offset);
            offset += layer.rows * layer.cols;
            bias_offsets.push(offset);
            offset += layer.rows;
        }
        ParamLayout { layers, weight_offsets, bias_offsets, total: offset }
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    /// Offset of row `row` of layer `layer`'s weight matrix.
    pub fn weight_row_offset(&self, layer: usize, row: usize) -> usize {
        debug_assert!(row < self.layers[layer].rows);
        self.weight_offsets[layer] + row * self.layers[layer].cols
    }

    pub fn weight_offset(&self, layer: usize) -> usize {
        self.weight_offsets[layer]
    }

    pub fn bias_offset(&self, layer: usize) -> usize {
        self.bias_offsets[layer]
    }

    pub fn total(&self) -> usize {
        self.total
    }
}

/// All network weights and biases as one flat `f64` vector, with a matching
/// gradient buffer. The layout invariant (sum of per-layer counts equals the
/// vector length) is enforced at construction.
#[derive(Clone, Debug)]
pub struct ParameterStore {
    values: Vec<f64>,
    gradient: Vec<f64>,
    layout: ParamLayout,
}

impl ParameterStore {
    pub fn new(layout: ParamLayout, values: Vec<f64>) -> Self {
        assert_eq!(
            layout.total(),
            values.len(),
            "parameter vector length {} does not match layout total {}",
            values.len(),
            layout.total()
        );
        let gradient = vec![0.0; values.len()];
        ParameterStore { values, gradient, layout }
    }

    pub fn zeroed(layout: ParamLayout) -> Self {
        let n = layout.total();
        Self::new(layout, vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub fn gradient_mut(&mut self) -> &mut [f64] {
        &mut self.gradient
    }

    pub fn zero_grad(&mut self) {
        self.gradient.fill(0.0);
    }

    /// Mutable values together with the read-only gradient, for optimizer
    /// updates.
    pub fn values_and_gradient(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.gradient)
    }
}
