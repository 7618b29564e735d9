//! Numerical kernel: normal distribution, quadrature, roots, optimization,
//! numeric derivatives and random streams.

pub mod derivatives;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod roots;

pub use derivatives::{numeric_gradient, numeric_hessian, numeric_jacobian};
pub use normal::{quantile as std_normal_quantile, std_normal};
pub use optimize::{minimize, MinimizeOptions, Minimum};
pub use quadrature::{gauss_hermite, gauss_legendre, integrate, QuadratureRule, RuleKind};
pub use rng::RngStream;
pub use roots::find_root;
