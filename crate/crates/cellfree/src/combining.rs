//! Receive combining: maximum-ratio, local MMSE per AP, fully centralized
//! MMSE, and the statistics-based decoding weights the CPU applies on top of
//! local data estimates.
//!
//! The effective SINR of any combiner is a generalized Rayleigh quotient, so
//! the SINR-maximizing vector comes out of a single Hermitian solve. All
//! solves are factor-and-solve; nothing here forms an explicit inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{ChannelEstimateSet, ChannelRealization, ChannelStatistics};
use crate::linalg::{hermitize, C64, CMat, CVec, HermitianFactor};

/// Receive combining scheme selector. `Mmse` means fully centralized MMSE
/// where a level supports it and local MMSE otherwise; `Lmmse` is accepted as
/// a synonym with the same behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerScheme {
    Mr,
    Lmmse,
    Mmse,
}

impl CombinerScheme {
    /// True for the MMSE family (local or centralized).
    pub fn is_mmse_family(self) -> bool {
        !matches!(self, CombinerScheme::Mr)
    }
}

/// Per-AP combining vectors, indexed [ue][unit], each of length N.
#[derive(Debug, Clone)]
pub struct LocalCombiners {
    pub v: Vec<Vec<CVec>>,
}

/// Network-wide combining vectors, one stacked length-LN vector per UE.
#[derive(Debug, Clone)]
pub struct CollectiveCombiners {
    pub v: Vec<CVec>,
}

/// Interference floor shared by every combiner of a drop: per unit,
/// sum over UEs of p_i C_il, plus sigma2 * I.
#[derive(Debug, Clone)]
pub struct ErrorPlusNoise {
    pub per_unit: Vec<CMat>,
}

impl ErrorPlusNoise {
    pub fn new(stats: &ChannelStatistics, powers: &[f64], sigma2: f64) -> Self {
        let num_units = stats.err_cov[0].len();
        let n = stats.err_cov[0][0].nrows();
        let per_unit = (0..num_units)
            .map(|l| {
                let mut acc = CMat::identity(n, n).scale(sigma2);
                for (i, &p) in powers.iter().enumerate() {
                    acc += stats.err_cov[i][l].scale(p);
                }
                acc
            })
            .collect();
        Self { per_unit }
    }

    /// Assembles the network-wide block-diagonal matrix.
    pub fn block_diagonal(&self) -> CMat {
        let n = self.per_unit[0].nrows();
        let total = n * self.per_unit.len();
        let mut out = CMat::zeros(total, total);
        for (l, block) in self.per_unit.iter().enumerate() {
            out.view_mut((l * n, l * n), (n, n)).copy_from(block);
        }
        out
    }

    /// One Cholesky factor per unit, reused across coherence blocks.
    pub fn factors(&self) -> Result<Vec<HermitianFactor>> {
        self.per_unit
            .iter()
            .map(|m| HermitianFactor::new(m.clone()))
            .collect()
    }
}

/// Stacks the per-AP estimates of each UE into length-LN vectors.
pub fn stack_estimates(estimates: &ChannelEstimateSet) -> Vec<CVec> {
    estimates
        .h_hat
        .iter()
        .map(|row| {
            let n = row[0].len();
            let mut out = CVec::zeros(n * row.len());
            for (l, v) in row.iter().enumerate() {
                out.rows_mut(l * n, n).copy_from(v);
            }
            out
        })
        .collect()
}

/// Maximum-ratio combining: the local vector is the local channel estimate.
pub fn mr_local_combiners(estimates: &ChannelEstimateSet) -> LocalCombiners {
    LocalCombiners {
        v: estimates.h_hat.clone(),
    }
}

/// Maximum-ratio combining at the CPU: the stacked channel estimate.
pub fn mr_collective_combiners(estimates: &ChannelEstimateSet) -> CollectiveCombiners {
    CollectiveCombiners {
        v: stack_estimates(estimates),
    }
}

/// Output of the SINR-maximizing solve at one receiving unit: for each UE
/// the combining vector p_k A^(-1) h_hat_k and the maximized effective SINR,
/// where A is the conditional covariance of the received signal.
#[derive(Debug, Clone)]
pub struct MmseSolveOutput {
    pub combiners: Vec<CVec>,
    pub sinr: Vec<f64>,
}

/// Solves the MMSE combining problem at one receiving unit, given the UEs'
/// estimates seen there and the unit's error-plus-noise floor.
///
/// A single factorization of A = sum_i p_i h_hat_i h_hat_i^H + floor serves
/// all K right-hand sides. The maximized SINR with UE k's own signal removed
/// from A follows from the rank-one update identity
/// `sinr_k = s_k / (1 - s_k)` with `s_k = p_k h_hat_k^H A^(-1) h_hat_k`.
pub fn mmse_solve(h_hats: &[CVec], powers: &[f64], floor: &CMat) -> Result<MmseSolveOutput> {
    let mut a = floor.clone();
    for (i, h) in h_hats.iter().enumerate() {
        // a += p_i h h^H, rank-one Hermitian update.
        a.gerc(C64::new(powers[i], 0.0), h, h, C64::new(1.0, 0.0));
    }
    hermitize(&mut a);
    let factor = HermitianFactor::new(a)?;
    let mut combiners = Vec::with_capacity(h_hats.len());
    let mut sinr = Vec::with_capacity(h_hats.len());
    for (k, h) in h_hats.iter().enumerate() {
        let x = factor.solve_vec(h);
        let s = (powers[k] * h.dotc(&x).re).clamp(0.0, 1.0 - 1e-15);
        sinr.push(s / (1.0 - s));
        combiners.push(x.scale(powers[k]));
    }
    Ok(MmseSolveOutput { combiners, sinr })
}

/// Local MMSE combining vectors for every AP, from one solve per AP.
pub fn local_mmse_combiners(
    estimates: &ChannelEstimateSet,
    powers: &[f64],
    floor: &ErrorPlusNoise,
) -> Result<LocalCombiners> {
    let num_ues = estimates.h_hat.len();
    let num_units = floor.per_unit.len();
    let mut v = vec![Vec::with_capacity(num_units); num_ues];
    for l in 0..num_units {
        let h_hats: Vec<CVec> = (0..num_ues).map(|k| estimates.h_hat[k][l].clone()).collect();
        let solved = mmse_solve(&h_hats, powers, &floor.per_unit[l])?;
        for (k, vector) in solved.combiners.into_iter().enumerate() {
            v[k].push(vector);
        }
    }
    Ok(LocalCombiners { v })
}

/// Centralized MMSE combining vectors over the stacked network channel.
pub fn centralized_mmse_combiners(
    estimates: &ChannelEstimateSet,
    powers: &[f64],
    floor: &ErrorPlusNoise,
) -> Result<CollectiveCombiners> {
    let stacked = stack_estimates(estimates);
    let solved = mmse_solve(&stacked, powers, &floor.block_diagonal())?;
    Ok(CollectiveCombiners { v: solved.combiners })
}

/// Effective SINR of an arbitrary combiner `v` for UE `k`:
/// desired power over interference from the other UEs' estimates plus the
/// quadratic form of the error-plus-noise floor. Invariant to any nonzero
/// complex scaling of `v`.
pub fn sinr_with_combiner(v: &CVec, k: usize, h_hats: &[CVec], powers: &[f64], floor: &CMat) -> f64 {
    let mut interference = 0.0;
    for (i, h) in h_hats.iter().enumerate() {
        if i != k {
            interference += powers[i] * v.dotc(h).norm_sqr();
        }
    }
    let quad = v.dotc(&(floor * v)).re;
    let num = powers[k] * v.dotc(&h_hats[k]).norm_sqr();
    num / (interference + quad)
}

/// Conditional mean-squared error between UE k's symbol and the combined
/// received signal, given the estimates: p_k - 2 p_k Re(v^H h_hat_k) +
/// v^H (sum_i p_i (h_hat_i h_hat_i^H + C_i) + sigma2 I) v.
pub fn conditional_mse(v: &CVec, k: usize, h_hats: &[CVec], powers: &[f64], floor: &CMat) -> f64 {
    let mut quad = v.dotc(&(floor * v)).re;
    for (i, h) in h_hats.iter().enumerate() {
        quad += powers[i] * v.dotc(h).norm_sqr();
    }
    powers[k] - 2.0 * powers[k] * v.dotc(&h_hats[k]).re + quad
}

/// Monte-Carlo estimates of the statistics the CPU needs for decoding local
/// data estimates: the mean combined channel per UE, the power-weighted
/// second moments of the cross-UE combined channels, and the mean combiner
/// energies per AP.
#[derive(Debug, Clone)]
pub struct LsfdStatistics {
    /// E of the combined own-channel vector g_kk, one length-L vector per UE.
    pub mean_gain: Vec<CVec>,
    /// sum over UEs i of p_i * E{g_ki g_ki^H}, one L x L matrix per UE k.
    pub weighted_gram: Vec<CMat>,
    /// E of the squared combiner norm per (UE, AP); the diagonal of D_k.
    pub combiner_energy: Vec<Vec<f64>>,
    /// Number of coherence blocks averaged.
    pub blocks: usize,
}

/// Streaming accumulator behind [`LsfdStatistics`].
pub struct LsfdAccumulator {
    mean_gain: Vec<CVec>,
    weighted_gram: Vec<CMat>,
    combiner_energy: Vec<Vec<f64>>,
    powers: Vec<f64>,
    blocks: usize,
}

impl LsfdAccumulator {
    pub fn new(num_ues: usize, num_units: usize, powers: &[f64]) -> Self {
        Self {
            mean_gain: vec![CVec::zeros(num_units); num_ues],
            weighted_gram: vec![CMat::zeros(num_units, num_units); num_ues],
            combiner_energy: vec![vec![0.0; num_units]; num_ues],
            powers: powers.to_vec(),
            blocks: 0,
        }
    }

    /// Folds in one coherence block of true channels and local combiners.
    pub fn add_block(&mut self, channels: &ChannelRealization, combiners: &LocalCombiners) {
        let num_ues = self.mean_gain.len();
        let num_units = self.mean_gain[0].len();
        let mut g = CVec::zeros(num_units);
        for k in 0..num_ues {
            for l in 0..num_units {
                self.combiner_energy[k][l] += combiners.v[k][l].norm_squared();
            }
            for i in 0..num_ues {
                for l in 0..num_units {
                    g[l] = combiners.v[k][l].dotc(&channels.h[i][l]);
                }
                if i == k {
                    self.mean_gain[k] += &g;
                }
                self.weighted_gram[k].gerc(C64::new(self.powers[i], 0.0), &g, &g, C64::new(1.0, 0.0));
            }
        }
        self.blocks += 1;
    }

    pub fn finalize(mut self) -> LsfdStatistics {
        let scale = 1.0 / self.blocks.max(1) as f64;
        for m in &mut self.mean_gain {
            m.scale_mut(scale);
        }
        for m in &mut self.weighted_gram {
            m.scale_mut(scale);
            hermitize(m);
        }
        for row in &mut self.combiner_energy {
            for e in row.iter_mut() {
                *e *= scale;
            }
        }
        LsfdStatistics {
            mean_gain: self.mean_gain,
            weighted_gram: self.weighted_gram,
            combiner_energy: self.combiner_energy,
            blocks: self.blocks,
        }
    }
}

impl LsfdStatistics {
    /// The matrix whose solve yields the optimal weights:
    /// weighted second moments plus sigma2 * D_k.
    fn decoding_matrix(&self, k: usize, sigma2: f64) -> CMat {
        let mut m = self.weighted_gram[k].clone();
        for (l, &e) in self.combiner_energy[k].iter().enumerate() {
            m[(l, l)] += C64::new(sigma2 * e, 0.0);
        }
        m
    }
}

/// SINR-maximizing deterministic weights for combining the APs' local data
/// estimates at the CPU, one length-L vector per UE.
pub fn lsfd_weights(stats: &LsfdStatistics, sigma2: f64) -> Result<Vec<CVec>> {
    (0..stats.mean_gain.len())
        .map(|k| {
            let factor = HermitianFactor::new(stats.decoding_matrix(k, sigma2)).map_err(|e| {
                Error::numerical(format!("decoding-weight system for UE {k} is singular: {e}"))
            })?;
            Ok(factor.solve_vec(&stats.mean_gain[k]))
        })
        .collect()
}

/// Uniform averaging weights (the simple CPU that knows no statistics).
pub fn uniform_weights(num_ues: usize, num_units: usize) -> Vec<CVec> {
    vec![CVec::from_element(num_units, C64::new(1.0 / num_units as f64, 0.0)); num_ues]
}

/// Effective SINR of UE `k` for arbitrary weights `a` applied to the local
/// estimates: |a^H E{g_kk}|^2 weighted by p_k over the residual variance.
/// Returns None when Monte-Carlo noise drives the denominator nonpositive.
pub fn lsfd_sinr(stats: &LsfdStatistics, a: &CVec, k: usize, p_k: f64, sigma2: f64) -> Option<f64> {
    let signal = p_k * a.dotc(&stats.mean_gain[k]).norm_sqr();
    let mut den = a.dotc(&(&stats.weighted_gram[k] * a)).re - signal;
    for (l, &e) in stats.combiner_energy[k].iter().enumerate() {
        den += sigma2 * e * a[l].norm_sqr();
    }
    if den > 0.0 {
        Some(signal / den)
    } else {
        None
    }
}

/// Maximized effective SINR of UE `k` in closed form: the quadratic form of
/// the mean gain against the decoding matrix with the own-signal moment
/// removed. Dual route to evaluating [`lsfd_sinr`] at [`lsfd_weights`].
pub fn lsfd_sinr_closed_form(stats: &LsfdStatistics, k: usize, p_k: f64, sigma2: f64) -> Result<f64> {
    let mut b = stats.decoding_matrix(k, sigma2);
    let m = &stats.mean_gain[k];
    b.gerc(C64::new(-p_k, 0.0), m, m, C64::new(1.0, 0.0));
    hermitize(&mut b);
    let factor = HermitianFactor::new(b)?;
    Ok(p_k * m.dotc(&factor.solve_vec(m)).re)
}
