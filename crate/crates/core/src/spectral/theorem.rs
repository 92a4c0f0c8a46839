//! Randomised check that activation raises the signal-to-noise ratio.
//!
//! For an unbiased (or negatively biased, or bias-folded) neuron whose input
//! `x` and weights `w` activate it, the feature/noise SNR of the compounded
//! signal must exceed the SNR of the two signals taken separately.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use super::energy::{mutual_energy, mutual_energy_bias_folded, snr, BiasMode, SnrReport};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrTrialConfig {
    /// Number of pairs that must satisfy the premise and be checked.
    pub trials: usize,
    pub seed: u64,
    /// Signal lengths, cycled over attempts.
    pub dims: Vec<usize>,
    /// Bias treatments, cycled over attempts.
    pub bias_modes: Vec<BiasMode>,
}

impl Default for SnrTrialConfig {
    fn default() -> Self {
        Self {
            trials: 1000,
            seed: 0,
            dims: vec![8, 16, 32],
            bias_modes: vec![BiasMode::Zero],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub bias: f64,
    pub bias_mode: BiasMode,
    pub report: SnrReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Checked { passed: bool, report: SnrReport },
    /// Empty noise set or vanishing compound noise energy.
    Skipped,
    /// The neuron is not activated, or the bias is positive and not folded.
    Excluded,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SnrTrialReport {
    pub attempts: usize,
    pub checked: usize,
    pub passed: usize,
    pub skipped_degenerate: usize,
    pub excluded_inactive: usize,
    pub failures: Vec<Witness>,
}

impl SnrTrialReport {
    pub fn violations(&self) -> usize {
        self.failures.len()
    }
}

/// Checks one neuron input/weight pair.
pub fn check_pair(x: &[f64], w: &[f64], bias: f64, mode: BiasMode) -> Result<TrialOutcome> {
    let (decomp, residual_bias) = match mode {
        BiasMode::BiasAsFeature => (mutual_energy_bias_folded(x, w, bias)?, 0.0),
        _ => (mutual_energy(x, w)?, bias),
    };
    let report = match snr(&decomp, residual_bias) {
        Ok(r) => r,
        Err(Error::DegenerateDecomposition(_)) => return Ok(TrialOutcome::Skipped),
        Err(e) => return Err(e),
    };
    if !report.premise_holds() {
        return Ok(TrialOutcome::Excluded);
    }
    Ok(TrialOutcome::Checked {
        passed: report.snr_compound > report.snr_original,
        report,
    })
}

/// Draws Gaussian pairs until `trials` of them satisfy the premise, giving up
/// after `50 * trials` attempts.
pub fn verify_snr_increase(config: &SnrTrialConfig) -> Result<SnrTrialReport> {
    if config.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if config.dims.is_empty() || config.dims.contains(&0) || config.bias_modes.is_empty() {
        return Err(Error::invalid("dims and bias modes must be non-empty and positive"));
    }
    let mut rng = seed::rng(config.seed);
    let negative = Uniform::new(0.0, 1.0);
    let mut report = SnrTrialReport::default();
    let max_attempts = config.trials.saturating_mul(50);

    while report.checked < config.trials && report.attempts < max_attempts {
        let dim = config.dims[report.attempts % config.dims.len()];
        let mode = config.bias_modes[report.attempts % config.bias_modes.len()];
        report.attempts += 1;
        let x: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let bias = match mode {
            BiasMode::Zero => 0.0,
            BiasMode::NegativeBias => -negative.sample(&mut rng),
            BiasMode::BiasAsFeature | BiasMode::PositiveBias => rng.sample(StandardNormal),
        };
        match check_pair(&x, &w, bias, mode)? {
            TrialOutcome::Checked { passed, report: snr } => {
                report.checked += 1;
                if passed {
                    report.passed += 1;
                } else {
                    report.failures.push(Witness {
                        x,
                        w,
                        bias,
                        bias_mode: mode,
                        report: snr,
                    });
                }
            }
            TrialOutcome::Skipped => report.skipped_degenerate += 1,
            TrialOutcome::Excluded => report.excluded_inactive += 1,
        }
    }
    Ok(report)
}
