//! Input gradients, Lipschitz bounds, line polynomials and activation data.

pub(crate) mod jacobian;
mod line;
mod lipschitz;
mod norm;
pub mod poly;
mod scatter;

pub use jacobian::input_jacobian;
pub use line::{line_coeffs, line_coeffs_all, minimize_along, minimize_poly, LineCoeffs, LineMinimum};
pub use lipschitz::{lipschitz_bounds, LayerBound, LipschitzReport};
pub use norm::{operator_norm, power_iteration_norm, SVD_MAX_DIM};
pub use scatter::{activation_scatter, ScatterSeries};
