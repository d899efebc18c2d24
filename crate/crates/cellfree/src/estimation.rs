//! Correlated Rayleigh channel sampling, pilot despreading, and MMSE / LS
//! channel estimation with exact error statistics.
//!
//! Estimation operates on despread length-N observations only; the raw
//! tau_p-length pilot blocks are never materialized since despreading is a
//! sufficient statistic and the full blocks would be dead weight at L = 400.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{complex_normal_vec, hermitize, psd_sqrt, CMat, CVec, HermitianFactor};
use crate::propagation::SpatialCorrelationSet;

/// Channel vectors of one coherence block, indexed [ue][unit].
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: Vec<Vec<CVec>>,
}

/// Despread pilot observations of one coherence block, indexed [pilot][unit].
#[derive(Debug, Clone)]
pub struct PilotObservation {
    pub z: Vec<Vec<CVec>>,
    pub noise_power: f64,
    pub powers: Vec<f64>,
    pub tau_p: usize,
}

/// Which estimator produced an estimate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Mmse,
    Ls,
}

/// Deterministic per-drop estimation statistics: the despread-signal
/// covariance per (pilot, unit) and the estimation-error covariance per
/// (UE, unit) link. Shared across all blocks of a drop.
#[derive(Debug, Clone)]
pub struct ChannelStatistics {
    /// Error covariance C, indexed [ue][unit], N x N Hermitian PSD.
    pub err_cov: Vec<Vec<CMat>>,
    /// Despread-signal covariance, indexed [pilot][unit], N x N Hermitian PD.
    pub psi: Vec<Vec<CMat>>,
}

/// Channel estimates of one block plus the shared per-drop statistics.
#[derive(Debug, Clone)]
pub struct ChannelEstimateSet {
    /// Estimates, indexed [ue][unit], length-N.
    pub h_hat: Vec<Vec<CVec>>,
    pub stats: Arc<ChannelStatistics>,
    pub kind: EstimatorKind,
}

/// Precomputed per-drop channel sampler: one PSD square root per link.
pub struct ChannelSampler {
    factors: Vec<Vec<CMat>>,
}

impl ChannelSampler {
    pub fn new(correlations: &SpatialCorrelationSet) -> Self {
        let factors = correlations
            .r
            .iter()
            .map(|row| row.iter().map(psd_sqrt).collect())
            .collect();
        Self { factors }
    }

    /// Draws one coherence block of channels, h = R^(1/2) w.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let h = self
            .factors
            .iter()
            .map(|row| {
                row.iter()
                    .map(|f| f * complex_normal_vec(f.ncols(), rng))
                    .collect()
            })
            .collect();
        ChannelRealization { h }
    }
}

/// Draws one coherence block of correlated Rayleigh channels.
pub fn sample_channels<R: Rng + ?Sized>(
    correlations: &SpatialCorrelationSet,
    rng: &mut R,
) -> ChannelRealization {
    ChannelSampler::new(correlations).sample(rng)
}

/// Despreads the pilot phase of one block: for each pilot t and unit l,
/// z_tl = sum over UEs on pilot t of sqrt(p_i tau_p) h_il, plus noise of
/// covariance sigma2 * I. Pilots with no UE carry pure noise.
pub fn despread_pilots<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    pilot_of_ue: &[usize],
    num_pilots: usize,
    powers: &[f64],
    sigma2: f64,
    rng: &mut R,
) -> PilotObservation {
    let num_units = channels.h[0].len();
    let n = channels.h[0][0].len();
    let noise_std = sigma2.sqrt();
    let mut z = vec![vec![CVec::zeros(n); num_units]; num_pilots];
    for (t, row) in z.iter_mut().enumerate() {
        for (l, entry) in row.iter_mut().enumerate() {
            let mut acc = complex_normal_vec(n, rng).scale(noise_std);
            for (i, &t_i) in pilot_of_ue.iter().enumerate() {
                if t_i == t {
                    acc += channels.h[i][l].scale((powers[i] * num_pilots as f64).sqrt());
                }
            }
            *entry = acc;
        }
    }
    PilotObservation {
        z,
        noise_power: sigma2,
        powers: powers.to_vec(),
        tau_p: num_pilots,
    }
}

/// Per-drop estimator: despread-signal covariances are factored once and the
/// per-link estimation gains and error covariances reused for every block.
pub struct ChannelEstimator {
    /// Linear estimation gain per link, h_hat = gain * z.
    gain: Vec<Vec<CMat>>,
    pilot_of_ue: Vec<usize>,
    stats: Arc<ChannelStatistics>,
    kind: EstimatorKind,
}

impl ChannelEstimator {
    /// Builds the MMSE estimator for the given correlation structure: the
    /// despread-signal covariance per (pilot, unit) is
    /// Psi = sum over co-pilot UEs of tau_p p_i R_il, plus sigma2 * I, the
    /// estimation gain is sqrt(p_k tau_p) R Psi^(-1), and the error
    /// covariance is C = R - p_k tau_p R Psi^(-1) R.
    pub fn new_mmse(
        correlations: &SpatialCorrelationSet,
        pilot_of_ue: &[usize],
        num_pilots: usize,
        powers: &[f64],
        sigma2: f64,
    ) -> Result<Self> {
        let (psi, psi_inv_r) = despread_covariances(correlations, pilot_of_ue, num_pilots, powers, sigma2)?;
        let num_ues = correlations.num_ues();
        let num_units = correlations.num_units();
        let tau_p = num_pilots as f64;
        let mut gain = Vec::with_capacity(num_ues);
        let mut err_cov = Vec::with_capacity(num_ues);
        for k in 0..num_ues {
            let scale = (powers[k] * tau_p).sqrt();
            let mut gain_row = Vec::with_capacity(num_units);
            let mut cov_row = Vec::with_capacity(num_units);
            for l in 0..num_units {
                let x = &psi_inv_r[k][l]; // Psi^(-1) R
                let r = &correlations.r[k][l];
                gain_row.push(x.adjoint().scale(scale));
                let mut c = r - (x.adjoint() * r).scale(powers[k] * tau_p);
                hermitize(&mut c);
                cov_row.push(c);
            }
            gain.push(gain_row);
            err_cov.push(cov_row);
        }
        Ok(Self {
            gain,
            pilot_of_ue: pilot_of_ue.to_vec(),
            stats: Arc::new(ChannelStatistics { err_cov, psi }),
            kind: EstimatorKind::Mmse,
        })
    }

    /// Builds the least-squares estimator, h_hat = z / sqrt(p_k tau_p).
    /// No prior statistics enter the estimate itself, but the exact error
    /// covariance Psi / (p_k tau_p) - R is attached so the statistics-based
    /// rate expressions apply to LS unchanged.
    pub fn new_ls(
        correlations: &SpatialCorrelationSet,
        pilot_of_ue: &[usize],
        num_pilots: usize,
        powers: &[f64],
        sigma2: f64,
    ) -> Result<Self> {
        if let Some(k) = powers.iter().position(|&p| p <= 0.0) {
            return Err(Error::config(format!(
                "least-squares estimation needs a positive transmit power, UE {k} has p = {}",
                powers[k]
            )));
        }
        let (psi, _) = despread_covariances(correlations, pilot_of_ue, num_pilots, powers, sigma2)?;
        let num_ues = correlations.num_ues();
        let num_units = correlations.num_units();
        let n = correlations.antennas();
        let tau_p = num_pilots as f64;
        let mut gain = Vec::with_capacity(num_ues);
        let mut err_cov = Vec::with_capacity(num_ues);
        for k in 0..num_ues {
            let scale = 1.0 / (powers[k] * tau_p).sqrt();
            let mut gain_row = Vec::with_capacity(num_units);
            let mut cov_row = Vec::with_capacity(num_units);
            for l in 0..num_units {
                gain_row.push(CMat::identity(n, n).scale(scale));
                let mut c = psi[pilot_of_ue[k]][l].scale(1.0 / (powers[k] * tau_p))
                    - &correlations.r[k][l];
                hermitize(&mut c);
                cov_row.push(c);
            }
            gain.push(gain_row);
            err_cov.push(cov_row);
        }
        Ok(Self {
            gain,
            pilot_of_ue: pilot_of_ue.to_vec(),
            stats: Arc::new(ChannelStatistics { err_cov, psi }),
            kind: EstimatorKind::Ls,
        })
    }

    /// Applies the precomputed gains to one block of observations.
    pub fn estimate(&self, observation: &PilotObservation) -> ChannelEstimateSet {
        let h_hat = self
            .gain
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let t = self.pilot_of_ue[k];
                row.iter()
                    .enumerate()
                    .map(|(l, g)| g * &observation.z[t][l])
                    .collect()
            })
            .collect();
        ChannelEstimateSet {
            h_hat,
            stats: Arc::clone(&self.stats),
            kind: self.kind,
        }
    }

    pub fn stats(&self) -> &Arc<ChannelStatistics> {
        &self.stats
    }
}

/// Psi matrices (factored once) and the solves Psi^(-1) R_kl for every link.
#[allow(clippy::type_complexity)]
fn despread_covariances(
    correlations: &SpatialCorrelationSet,
    pilot_of_ue: &[usize],
    num_pilots: usize,
    powers: &[f64],
    sigma2: f64,
) -> Result<(Vec<Vec<CMat>>, Vec<Vec<CMat>>)> {
    let num_ues = correlations.num_ues();
    let num_units = correlations.num_units();
    let n = correlations.antennas();
    let tau_p = num_pilots as f64;

    let mut psi = vec![vec![CMat::identity(n, n).scale(sigma2); num_units]; num_pilots];
    for k in 0..num_ues {
        let t = pilot_of_ue[k];
        for l in 0..num_units {
            psi[t][l] += correlations.r[k][l].scale(tau_p * powers[k]);
        }
    }

    let mut factors: Vec<Vec<Option<HermitianFactor>>> = Vec::with_capacity(num_pilots);
    for t in 0..num_pilots {
        let mut row = Vec::with_capacity(num_units);
        for l in 0..num_units {
            // Only pilots actually in use need a factorization; unused ones
            // can be singular when sigma2 = 0.
            if pilot_of_ue.contains(&t) {
                row.push(Some(HermitianFactor::new(psi[t][l].clone()).map_err(|e| {
                    Error::numerical(format!("despread covariance for pilot {t}, unit {l}: {e}"))
                })?));
            } else {
                row.push(None);
            }
        }
        factors.push(row);
    }

    let mut psi_inv_r = Vec::with_capacity(num_ues);
    for k in 0..num_ues {
        let t = pilot_of_ue[k];
        let row = (0..num_units)
            .map(|l| {
                factors[t][l]
                    .as_ref()
                    .expect("pilot in use has a factor")
                    .solve_mat(&correlations.r[k][l])
            })
            .collect();
        psi_inv_r.push(row);
    }
    Ok((psi, psi_inv_r))
}

/// One-shot MMSE estimation of a single block.
pub fn mmse_estimate(
    observation: &PilotObservation,
    correlations: &SpatialCorrelationSet,
    pilot_of_ue: &[usize],
) -> Result<ChannelEstimateSet> {
    let est = ChannelEstimator::new_mmse(
        correlations,
        pilot_of_ue,
        observation.tau_p,
        &observation.powers,
        observation.noise_power,
    )?;
    Ok(est.estimate(observation))
}

/// One-shot least-squares estimation of a single block.
pub fn ls_estimate(
    observation: &PilotObservation,
    correlations: &SpatialCorrelationSet,
    pilot_of_ue: &[usize],
) -> Result<ChannelEstimateSet> {
    let est = ChannelEstimator::new_ls(
        correlations,
        pilot_of_ue,
        observation.tau_p,
        &observation.powers,
        observation.noise_power,
    )?;
    Ok(est.estimate(observation))
}
