pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod stats;
