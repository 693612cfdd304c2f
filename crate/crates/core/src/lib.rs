//! Jack polynomial algebra, Dixon-Anderson kernels and β-Dyson dynamics,
//! with exact and Monte Carlo checks of the intertwining
//! `L^(k) P^(k)(t) = P^(k+1)(t) L^(k)`.

pub mod error;
pub mod jack;
pub mod operators;
pub mod dixon_anderson;
pub mod partitions;
pub mod quadrature;
pub mod rmt;
pub mod sde;
pub mod semigroup;
pub mod stats;
pub mod symmpoly;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
pub use jack::{build_jack, jack_norm, jack_norm_product, pochhammer_ratio, JackBasis, JackParams};
pub use operators::{GeneratorKind, GeneratorMatrix};
pub use partitions::Partition;
pub use symmpoly::SymPoly;
