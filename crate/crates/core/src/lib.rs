pub mod campaign;
pub mod config;
pub mod dispersion;
pub mod error;
pub mod expr;
pub mod fit;
pub mod grid;
pub mod nonlinearity;
pub mod solver;
pub mod stationary;
pub mod suites;
pub mod vectorfield;
pub mod scattering;
pub mod wavepacket;

pub use dispersion::{choose_exponents, make_preset, DispersionSymbol, ExponentChoice, LegendrePhase, VelocityRange};
pub use error::{Error, Result};
pub use grid::{Grid, State, C64};
pub use nonlinearity::CubicSymbol;
