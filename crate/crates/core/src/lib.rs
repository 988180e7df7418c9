//! Design and characterization of superconducting coplanar-waveguide
//! resonators: line parameters, notch-type S21 fitting, loss and
//! frequency-shift models, file formats and batch sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod cpw;
pub mod io;
pub mod loss;
pub mod numerics;
pub mod pipeline;
pub mod resonator;
pub mod spectrum_fit;
pub mod synth;
