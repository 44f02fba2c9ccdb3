//! Exact ψ-class intersection numbers on moduli spaces of curves, computed by
//! topological recursion on the Witten–Kontsevich Airy structure, together
//! with the numerical tooling built around them: large-genus asymptotics,
//! dataset generation, windowed conformal intervals, the DRA activation
//! experiment and embedding-analysis utilities.

pub mod airy;
pub mod analysis;
pub mod asymptotics;
pub mod conformal;
pub mod dataset;
pub mod dra;
pub mod error;
pub mod numerics;
pub mod recursion;
pub mod verify;

pub use airy::{
    generate_coo, partitions_with_length, wk_tensor_entry, AiryData, CooEntry, InitialData,
    Partition, SurfaceClass, TensorKind, WittenKontsevich,
};
pub use error::{Error, Result};
pub use numerics::{double_factorial, log10_of_rational, log_gamma, LogValue};
pub use recursion::{
    amplitude, amplitude_ordered, amplitude_table, dilaton_residual, intersection_number,
    intersection_number_with, AmplitudeCache, AmplitudeKey,
};
