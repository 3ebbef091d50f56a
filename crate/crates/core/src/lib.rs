//! Switched SIS epidemic models on networks: threshold classification,
//! joint Lyapunov exponents, norm certificates, persistence, periodic orbits,
//! stabilizing switching and Markov jump moments.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the aliases below fix
//! the scalar for the common cases.

pub mod endemic;
pub mod error;
pub mod jle;
pub mod markov;
pub mod model;
pub mod posmat;
pub mod scalar;
pub mod signals;
pub mod simulate;

pub use error::{Error, Result};
pub use model::SisModel;
pub use posmat::{Mat, MetzlerMatrix};
pub use scalar::Real;
pub use signals::{SwitchedSisModel, SwitchingSignal};

pub type Mat64 = Mat<f64>;
pub type SisModel64 = SisModel<f64>;
pub type SwitchedSisModel64 = SwitchedSisModel<f64>;
pub type SwitchingSignal64 = SwitchingSignal<f64>;
pub type IntegratorConfig64 = simulate::IntegratorConfig<f64>;
pub type MarkovSpec64 = markov::MarkovSpec<f64>;

pub type Mat32 = Mat<f32>;
pub type SisModel32 = SisModel<f32>;
pub type SwitchedSisModel32 = SwitchedSisModel<f32>;
pub type SwitchingSignal32 = SwitchingSignal<f32>;
pub type IntegratorConfig32 = simulate::IntegratorConfig<f32>;
pub type MarkovSpec32 = markov::MarkovSpec<f32>;
