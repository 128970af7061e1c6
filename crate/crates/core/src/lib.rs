pub mod bandsolver;
pub mod config;
pub mod error;
pub mod export;
pub mod fdtd;
pub mod geometry;
pub mod optimizer;
pub mod resonance;
pub mod scalar;
pub mod slabmode;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Real;

pub type Simulation = fdtd::Simulation<f64>;
pub type SimulationF32 = fdtd::Simulation<f32>;
pub type SimulationSpec = fdtd::SimulationSpec<f64>;
pub type RingdownSpec = fdtd::cavity::RingdownSpec<f64>;
pub type TransmissionSpec = fdtd::cavity::TransmissionSpec<f64>;
pub type SlabSolution = slabmode::SlabSolution<f64>;
pub type LorentzianModel = resonance::LorentzianModel<f64>;
