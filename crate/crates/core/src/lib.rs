//! Socially and spatially aware classification transformer for
//! target-centric vessel trajectory prediction.

pub mod harness;
pub mod model;
pub mod navframe;
pub mod pipeline;
pub mod socialtensor;
pub mod stt;
pub mod synth;
pub mod tensorcore;
