//! Numeric building blocks: Gaussian tail functions, dense complex linear
//! algebra on small Hermitian matrices, and power-unit conversions.

mod gauss;
mod linalg;
mod power;

pub use gauss::{q_function, q_inverse};
pub use linalg::{
    frobenius_norm, hermitian_eig, hermitian_part, is_hermitian, outer, project_psd, CMat, CVec,
};
pub use power::PowerValue;
