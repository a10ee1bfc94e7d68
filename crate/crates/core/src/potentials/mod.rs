//! Analytic model potentials and configuration-space sampling.

pub mod dataset;
pub mod sampler;
pub mod sop;

pub use dataset::{Dataset, Provenance, Record, SplitSizes};
pub use sampler::{metropolis_sample, pdf_weight, SamplerConfig, SamplerStats};
pub use sop::{
    coupled_anharmonic, rotated_coupled_ho, AnharmonicParams, OneModeFn, SopPotential, SopTerm,
};
