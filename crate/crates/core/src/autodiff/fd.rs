//! Central finite differences: the independent gradient oracle.

use super::store::ParameterStore;

/// Central-difference gradient `(f(theta + h e_i) - f(theta - h e_i)) / 2h`
/// for every parameter. `f` must be a pure function of the store values.
///
/// This is the validation oracle for [`Tape::backward`](super::Tape::backward)
/// and deliberately shares no code with the reverse sweep.
pub fn finite_diff_gradient(
    f: &mut dyn FnMut(&ParameterStore) -> f64,
    store: &mut ParameterStore,
    h: f64,
) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let n = store.len();
    let mut grad = Vec::with_capacity(n);
    for i in 0..n {
        let original = store.values()[i];
        store.values_mut()[i] = original + h;
        let plus = f(store);
        store.values_mut()[i] = original - h;
        let minus = f(store);
        store.values_mut()[i] = original;
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::super::store::{LayerShape, ParamLayout, ParameterStore};
    use super::*;

    fn flat_store(values: &[f64]) -> ParameterStore {
        let layout = ParamLayout::new(vec![LayerShape { rows: values.len(), cols: 0 }]);
        ParameterStore::new(layout, values.to_vec())
    }

    #[test]
    fn quadratic() {
        let mut store = flat_store(&[3.0]);
        let g = finite_diff_gradient(&mut |s| s.values()[0] * s.values()[0], &mut store, 1e-5);
        assert!((g[0] - 6.0).abs() < 1e-9);
        assert_eq!(store.values()[0], 3.0);
    }

    #[test]
    fn sine_at_zero() {
        let mut store = flat_store(&[0.0]);
        let g = finite_diff_gradient(&mut |s| s.values()[0].sin(), &mut store, 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-9);
    }
}
