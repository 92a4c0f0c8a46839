use serde::{Deserialize, Serialize};

use super::dft::dft_1d;
use crate::error::{Error, Result};

/// Relative threshold below which a mutual energy counts as exactly zero.
pub const ZERO_ENERGY_TOLERANCE: f64 = 1e-12;

/// Per-frequency self and mutual energies of a signal pair.
///
/// With the unnormalized forward transform `E^k_xy = Re(X(k) conj(Y(k)))`
/// sums to `N * sum_t x(t) y(t)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyDecomposition {
    pub per_frequency_mutual: Vec<f64>,
    pub per_frequency_x: Vec<f64>,
    pub per_frequency_y: Vec<f64>,
    /// Frequencies with positive mutual energy.
    pub feature_set: Vec<usize>,
    /// Frequencies with negative mutual energy.
    pub noise_set: Vec<usize>,
    /// `|sum_k Im(X(k) conj(Y(k)))|`, zero up to rounding for real signals.
    pub imaginary_residue: f64,
    /// Set when the pair was built with the bias appended as a unit feature.
    pub bias_folded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMode {
    Zero,
    NegativeBias,
    BiasAsFeature,
    /// Outside the theorem's premise.
    PositiveBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrReport {
    pub snr_original: f64,
    pub snr_compound: f64,
    pub bias_mode: BiasMode,
    /// `sum_t x(t) w(t) + B > 0`.
    pub activated: bool,
    /// `(E_x + E_y - 2B') / E^n - 1`, the bound the compound SNR exceeds when
    /// activated; `B'` is the bias in frequency-energy units.
    pub activation_bound: f64,
}

impl SnrReport {
    /// Whether the pair satisfies the premise of the SNR-increase claim.
    pub fn premise_holds(&self) -> bool {
        self.activated && self.bias_mode != BiasMode::PositiveBias
    }
}

impl EnergyDecomposition {
    /// Builds a decomposition from raw per-frequency energies.
    pub fn from_energies(ex: Vec<f64>, ey: Vec<f64>, exy: Vec<f64>) -> Result<Self> {
        if ex.len() != ey.len() || ex.len() != exy.len() {
            return Err(Error::invalid("energy vectors must share one length"));
        }
        if ex.is_empty() {
            return Err(Error::invalid("energy vectors must be non-empty"));
        }
        let scale: f64 = ex.iter().chain(&ey).sum();
        let tol = ZERO_ENERGY_TOLERANCE * scale;
        let feature_set = (0..exy.len()).filter(|&k| exy[k] > tol).collect();
        let noise_set = (0..exy.len()).filter(|&k| exy[k] < -tol).collect();
        Ok(Self {
            per_frequency_mutual: exy,
            per_frequency_x: ex,
            per_frequency_y: ey,
            feature_set,
            noise_set,
            imaginary_residue: 0.0,
            bias_folded: false,
        })
    }

    pub fn len(&self) -> usize {
        self.per_frequency_mutual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_frequency_mutual.is_empty()
    }

    pub fn total_x(&self) -> f64 {
        self.per_frequency_x.iter().sum()
    }

    pub fn total_y(&self) -> f64 {
        self.per_frequency_y.iter().sum()
    }

    pub fn total_mutual(&self) -> f64 {
        self.per_frequency_mutual.iter().sum()
    }

    /// `sum_k E^k_xy / N`, which equals the time-domain dot product.
    pub fn time_domain_dot(&self) -> f64 {
        self.total_mutual() / self.len() as f64
    }

    fn self_sum(&self, set: &[usize]) -> f64 {
        set.iter().map(|&k| self.per_frequency_x[k] + self.per_frequency_y[k]).sum()
    }

    fn compound_sum(&self, set: &[usize]) -> f64 {
        set.iter()
            .map(|&k| self.per_frequency_x[k] + self.per_frequency_y[k] + 2.0 * self.per_frequency_mutual[k])
            .sum()
    }
}

/// Splits the mutual energy of `x` and `y` across frequencies.
pub fn mutual_energy(x: &[f64], y: &[f64]) -> Result<EnergyDecomposition> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "mutual energy signals",
            expected: x.len(),
            found: y.len(),
        });
    }
    let sx = dft_1d(x)?;
    let sy = dft_1d(y)?;
    let products: Vec<_> = sx
        .coefficients()
        .iter()
        .zip(sy.coefficients())
        .map(|(a, b)| a * b.conj())
        .collect();
    let mut decomp = EnergyDecomposition::from_energies(
        sx.energies(),
        sy.energies(),
        products.iter().map(|p| p.re).collect(),
    )?;
    decomp.imaginary_residue = products.iter().map(|p| p.im).sum::<f64>().abs();
    Ok(decomp)
}

/// Mutual energy with the bias appended to `w` and a constant `1` appended to `x`.
pub fn mutual_energy_bias_folded(x: &[f64], w: &[f64], bias: f64) -> Result<EnergyDecomposition> {
    let mut xa = x.to_vec();
    xa.push(1.0);
    let mut wa = w.to_vec();
    wa.push(bias);
    let mut decomp = mutual_energy(&xa, &wa)?;
    decomp.bias_folded = true;
    Ok(decomp)
}

/// Signal-to-noise ratios before and after the two signals are compounded.
///
/// For a folded decomposition the bias already lives inside the signals and
/// `bias` must be zero.
pub fn snr(decomp: &EnergyDecomposition, bias: f64) -> Result<SnrReport> {
    if !bias.is_finite() {
        return Err(Error::invalid("bias must be finite"));
    }
    let bias_mode = if decomp.bias_folded {
        if bias != 0.0 {
            return Err(Error::invalid("bias is already folded into the decomposition"));
        }
        BiasMode::BiasAsFeature
    } else if bias == 0.0 {
        BiasMode::Zero
    } else if bias < 0.0 {
        BiasMode::NegativeBias
    } else {
        BiasMode::PositiveBias
    };

    let noise_self = decomp.self_sum(&decomp.noise_set);
    if decomp.noise_set.is_empty() || noise_self <= 0.0 {
        return Err(Error::DegenerateDecomposition("no noise frequencies"));
    }
    let noise_compound = decomp.compound_sum(&decomp.noise_set);
    let scale = decomp.total_x() + decomp.total_y();
    if noise_compound <= ZERO_ENERGY_TOLERANCE * scale {
        return Err(Error::DegenerateDecomposition(
            "compound noise energy vanishes (signals cancel on every noise frequency)",
        ));
    }
    let snr_original = decomp.self_sum(&decomp.feature_set) / noise_self;
    let snr_compound = decomp.compound_sum(&decomp.feature_set) / noise_compound;
    let energy_bias = bias * decomp.len() as f64;
    Ok(SnrReport {
        snr_original,
        snr_compound,
        bias_mode,
        activated: decomp.time_domain_dot() + bias > 0.0,
        activation_bound: (scale - 2.0 * energy_bias) / noise_compound - 1.0,
    })
}
