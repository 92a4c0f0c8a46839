//! Discrete Fourier transforms, mutual-energy decomposition of neuron
//! input/weight pairs, and the signal-to-noise analysis built on them.

mod dft;
mod energy;
mod theorem;

pub use dft::{
    dft_1d, dft_1d_with, dft_2d, dft_reference, idft_1d, idft_2d, idft_real, Normalization, Spectrum,
};
pub(crate) use dft::{conjugate_index, dft_shaped, idft_complex};
pub use energy::{
    mutual_energy, mutual_energy_bias_folded, snr, BiasMode, EnergyDecomposition, SnrReport,
    ZERO_ENERGY_TOLERANCE,
};
pub use theorem::{check_pair, verify_snr_increase, SnrTrialConfig, SnrTrialReport, TrialOutcome, Witness};
