//! Forward-over-reverse automatic differentiation on a scalar tape.
//!
//! Every traced value carries its primal together with two forward tangents:
//! the directional derivatives along the `t` and `x` network inputs. The tape
//! records the augmented computation (primal plus both tangent channels), so
//! a single reverse sweep yields the exact parameter gradient of any scalar
//! built from values *and* their extracted tangents. Two fixed tangent
//! directions keep a traced evaluation at roughly 3x the cost of a plain one.
//!
//! Higher-than-first input derivatives are out of scope: extracting a tangent
//! yields a value whose own tangents are zero.

mod fd;
mod store;
mod tape;

pub use fd::finite_diff_gradient;
pub use store::{LayerShape, ParamLayout, ParameterStore};
pub use tape::{InputRole, Tape, TracedValue};
