//! Achievable uplink spectral efficiency under the four AP-cooperation
//! levels, the closed-form small-cell expression, and the sum rate of MMSE
//! combining with successive interference cancellation at the CPU.
//!
//! Levels 4 and 1 average instantaneous log terms over coherence blocks;
//! Levels 3 and 2 are deterministic functions of channel statistics (the
//! hardening-style bound), so they take the Monte-Carlo statistics produced
//! by the harness's first pass.

use crate::combining::{
    lsfd_sinr, lsfd_weights, mmse_solve, mr_collective_combiners, sinr_with_combiner,
    stack_estimates, uniform_weights, CombinerScheme, ErrorPlusNoise, LsfdStatistics,
};
use crate::error::{Error, Result};
use crate::estimation::ChannelEstimateSet;
use crate::linalg::{hermitize, C64, CMat, CVec, HermitianFactor, KahanSum};

const LN_2: f64 = std::f64::consts::LN_2;

/// Below this value of x, e^(1/x) E_1(1/x) is evaluated by its small-x
/// expansion x (1 - x/2), the midpoint of the classical envelope
/// x/(1+x) <= e^(1/x) E_1(1/x) <= x.
pub const CLOSED_FORM_STABILIZATION_THRESHOLD: f64 = 1e-3;

/// Exponential integral E_1(x) = integral from x to infinity of e^(-t)/t dt.
///
/// Power series below 1, continued fraction (modified Lentz) at and above 1;
/// both converge to full double precision on their branch.
pub fn exp_int_e1(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::numerical(format!("E_1 requires a positive argument, got {x}")));
    }
    if x < 1.0 {
        Ok(e1_series(x))
    } else {
        Ok((-x).exp() * e1_cf_scaled(x))
    }
}

/// Exponentially scaled integral e^x E_1(x), stable for large x where the
/// plain product overflows times underflows.
pub fn exp_scaled_e1(x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Err(Error::numerical(format!("E_1 requires a positive argument, got {x}")));
    }
    if x < 1.0 {
        Ok(x.exp() * e1_series(x))
    } else {
        Ok(e1_cf_scaled(x))
    }
}

fn e1_series(x: f64) -> f64 {
    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
    let mut term = 1.0;
    let mut acc = 0.0;
    for n in 1..200 {
        term *= -x / n as f64;
        let contribution = -term / n as f64;
        acc += contribution;
        if contribution.abs() < 1e-18 * acc.abs().max(1e-30) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() + acc
}

fn e1_cf_scaled(x: f64) -> f64 {
    // Continued fraction for e^x E_1(x) with a_i = -i^2, b_i = x + 1 + 2i.
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..2000 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// e^(1/x) E_1(1/x) with the small-x stabilization applied below the
/// threshold, where the unscaled factors leave the double range.
fn exp_scaled_e1_recip(x: f64) -> Result<f64> {
    if x < CLOSED_FORM_STABILIZATION_THRESHOLD {
        Ok(x * (1.0 - 0.5 * x))
    } else {
        exp_scaled_e1(1.0 / x)
    }
}

/// Parameters of the closed-form single-antenna small-cell rate for one
/// (UE, AP) pair: the pilot-contamination ratio and the effective SNR.
#[derive(Debug, Clone, Copy)]
pub struct ClosedFormL1Params {
    /// Sum over pilot-sharing UEs of (p_i beta_i / (p_k beta_k))^2.
    pub contamination: f64,
    /// Effective SNR of the estimated channel against the conditional
    /// interference floor.
    pub effective_snr: f64,
}

/// Computes the closed-form parameters for every (UE, AP) pair of an N = 1
/// drop directly from the large-scale coefficients.
pub fn closed_form_l1_params(
    beta: &[Vec<f64>],
    copilot_sets: &[Vec<usize>],
    powers: &[f64],
    tau_p: usize,
    sigma2: f64,
) -> Vec<Vec<ClosedFormL1Params>> {
    let num_ues = beta.len();
    let num_units = beta[0].len();
    let tp = tau_p as f64;
    (0..num_ues)
        .map(|k| {
            (0..num_units)
                .map(|l| {
                    let own = powers[k] * beta[k][l];
                    let mut contamination = 0.0;
                    let mut psi = sigma2;
                    let mut copilot_err = 0.0;
                    for &i in &copilot_sets[k] {
                        psi += tp * powers[i] * beta[i][l];
                        if i != k {
                            contamination += (powers[i] * beta[i][l] / own).powi(2);
                        }
                    }
                    for &i in &copilot_sets[k] {
                        let c_il = beta[i][l] - tp * powers[i] * beta[i][l] * beta[i][l] / psi;
                        copilot_err += powers[i] * c_il;
                    }
                    let mut other = 0.0;
                    for i in 0..num_ues {
                        if !copilot_sets[k].contains(&i) {
                            other += powers[i] * beta[i][l];
                        }
                    }
                    let denom = psi * (other + copilot_err + sigma2);
                    ClosedFormL1Params {
                        contamination,
                        effective_snr: powers[k] * powers[k] * tp * beta[k][l] * beta[k][l] / denom,
                    }
                })
                .collect()
        })
        .collect()
}

/// Closed-form small-cell rate of a single (UE, AP) pair with N = 1 and the
/// AP decoding from its own channel estimate:
/// `[f(w (1+A)) - f(w A)] / ln 2` scaled by `prelog`, where
/// f(x) = e^(1/x) E_1(1/x) and the second term vanishes without
/// pilot contamination.
pub fn se_level1_closed_form(params: ClosedFormL1Params, prelog: f64) -> Result<f64> {
    let omega = params.effective_snr;
    let a = params.contamination;
    if omega <= 0.0 {
        return Err(Error::numerical(format!("effective SNR must be positive, got {omega}")));
    }
    let first = exp_scaled_e1_recip(omega * (1.0 + a))?;
    let second = if a == 0.0 { 0.0 } else { exp_scaled_e1_recip(omega * a)? };
    Ok(prelog * (first - second) / LN_2)
}

/// Per-block effective SINRs of all UEs under fully centralized MMSE
/// combining.
pub fn level4_sinrs_mmse(
    estimates: &ChannelEstimateSet,
    powers: &[f64],
    floor_block_diag: &CMat,
) -> Result<Vec<f64>> {
    let stacked = stack_estimates(estimates);
    Ok(mmse_solve(&stacked, powers, floor_block_diag)?.sinr)
}

/// Per-block effective SINRs of all UEs for caller-supplied collective
/// combiners (e.g. maximum ratio).
pub fn level4_sinrs_with_combiners(
    estimates: &ChannelEstimateSet,
    combiners: &[CVec],
    powers: &[f64],
    floor_block_diag: &CMat,
) -> Vec<f64> {
    let stacked = stack_estimates(estimates);
    (0..stacked.len())
        .map(|k| sinr_with_combiner(&combiners[k], k, &stacked, powers, floor_block_diag))
        .collect()
}

/// Per-block effective SINRs of every (UE, AP) pair when the AP decodes
/// alone with its SINR-maximizing local combiner.
pub fn level1_sinrs(
    estimates: &ChannelEstimateSet,
    powers: &[f64],
    floor: &ErrorPlusNoise,
) -> Result<Vec<Vec<f64>>> {
    let num_ues = estimates.h_hat.len();
    let num_units = floor.per_unit.len();
    let mut out = vec![vec![0.0; num_units]; num_ues];
    for l in 0..num_units {
        let h_hats: Vec<CVec> = (0..num_ues).map(|k| estimates.h_hat[k][l].clone()).collect();
        let solved = mmse_solve(&h_hats, powers, &floor.per_unit[l])?;
        for k in 0..num_ues {
            out[k][l] = solved.sinr[k];
        }
    }
    Ok(out)
}

/// Per-block sum rate in bit/channel-use of MMSE combining with successive
/// interference cancellation: log2 det(I_K + P^(1/2) Hhat^H E^(-1) Hhat
/// P^(1/2)), with E the block-diagonal error-plus-noise covariance. The
/// per-unit factors of E are passed in so one factorization per drop serves
/// every block. Independent of the decoding order.
pub fn sic_sum_log2(
    estimates: &ChannelEstimateSet,
    powers: &[f64],
    floor_factors: &[HermitianFactor],
) -> f64 {
    let num_ues = estimates.h_hat.len();
    let num_units = floor_factors.len();
    let mut gram = CMat::zeros(num_ues, num_ues);
    for l in 0..num_units {
        let n = estimates.h_hat[0][l].len();
        let mut h_l = CMat::zeros(n, num_ues);
        for k in 0..num_ues {
            h_l.column_mut(k).copy_from(&estimates.h_hat[k][l]);
        }
        let solved = floor_factors[l].solve_mat(&h_l);
        gram += h_l.adjoint() * solved;
    }
    for r in 0..num_ues {
        for c in 0..num_ues {
            gram[(r, c)] *= C64::new((powers[r] * powers[c]).sqrt(), 0.0);
        }
    }
    let mut b = CMat::identity(num_ues, num_ues) + gram;
    hermitize(&mut b);
    let factor = HermitianFactor::new(b).expect("I + PSD gram is positive definite");
    factor.log_det() / LN_2
}

/// Counters for denominators that Monte-Carlo noise drove nonpositive; the
/// affected SINRs are clamped to zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct SinrDiagnostics {
    pub clamped: usize,
}

/// Statistics-based SE with optimized decoding weights, one value per UE.
pub fn se_level3(
    stats: &LsfdStatistics,
    weights: &[CVec],
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> (Vec<f64>, SinrDiagnostics) {
    se_from_weights(stats, weights, powers, sigma2, prelog)
}

/// Statistics-based SE when the CPU plainly averages the local estimates:
/// the optimized expression evaluated at uniform weights.
pub fn se_level2(
    stats: &LsfdStatistics,
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> (Vec<f64>, SinrDiagnostics) {
    let num_units = stats.mean_gain[0].len();
    let weights = uniform_weights(stats.mean_gain.len(), num_units);
    se_from_weights(stats, &weights, powers, sigma2, prelog)
}

fn se_from_weights(
    stats: &LsfdStatistics,
    weights: &[CVec],
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> (Vec<f64>, SinrDiagnostics) {
    let mut diag = SinrDiagnostics::default();
    let se = (0..stats.mean_gain.len())
        .map(|k| {
            match lsfd_sinr(stats, &weights[k], k, powers[k], sigma2) {
                Some(sinr) => prelog * sinr.ln_1p() / LN_2,
                None => {
                    diag.clamped += 1;
                    0.0
                }
            }
        })
        .collect();
    (se, diag)
}

/// Convenience wrapper: SE with optimized weights computed from the
/// statistics themselves.
pub fn se_level3_optimal(
    stats: &LsfdStatistics,
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> Result<(Vec<f64>, SinrDiagnostics)> {
    let weights = lsfd_weights(stats, sigma2)?;
    Ok(se_level3(stats, &weights, powers, sigma2, prelog))
}

/// SE of every UE under centralized processing, averaged over the given
/// blocks with compensated summation: for the MMSE family the per-block
/// SINR-maximizing value, for MR the quotient at the stacked estimate.
pub fn se_level4(
    blocks: &[ChannelEstimateSet],
    scheme: CombinerScheme,
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> Result<Vec<f64>> {
    assert!(!blocks.is_empty());
    let floor = ErrorPlusNoise::new(&blocks[0].stats, powers, sigma2).block_diagonal();
    let num_ues = powers.len();
    let mut acc = vec![KahanSum::new(); num_ues];
    for est in blocks {
        let sinrs = if scheme.is_mmse_family() {
            level4_sinrs_mmse(est, powers, &floor)?
        } else {
            let mr = mr_collective_combiners(est);
            level4_sinrs_with_combiners(est, &mr.v, powers, &floor)
        };
        for (k, s) in sinrs.iter().enumerate() {
            acc[k].add(s.ln_1p() / LN_2);
        }
    }
    Ok(acc.iter().map(|a| prelog * a.value() / blocks.len() as f64).collect())
}

/// Small-cell SE: per UE, the best AP's block-averaged rate and that AP's
/// index. Ties pick the lowest index. Every AP uses its SINR-maximizing
/// local combiner.
pub fn se_level1(
    blocks: &[ChannelEstimateSet],
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> Result<(Vec<f64>, Vec<usize>)> {
    assert!(!blocks.is_empty());
    let floor = ErrorPlusNoise::new(&blocks[0].stats, powers, sigma2);
    let num_ues = powers.len();
    let num_units = floor.per_unit.len();
    let mut acc = vec![vec![KahanSum::new(); num_units]; num_ues];
    for est in blocks {
        let sinrs = level1_sinrs(est, powers, &floor)?;
        for k in 0..num_ues {
            for l in 0..num_units {
                acc[k][l].add(sinrs[k][l].ln_1p() / LN_2);
            }
        }
    }
    let mut se = Vec::with_capacity(num_ues);
    let mut serving = Vec::with_capacity(num_ues);
    for row in &acc {
        let mut best = 0usize;
        for l in 1..num_units {
            if row[l].value() > row[best].value() {
                best = l;
            }
        }
        se.push(prelog * row[best].value() / blocks.len() as f64);
        serving.push(best);
    }
    Ok((se, serving))
}

/// Sum SE of MMSE combining with interference cancellation, averaged over
/// the given blocks.
pub fn sum_se_mmse_sic(
    blocks: &[ChannelEstimateSet],
    powers: &[f64],
    sigma2: f64,
    prelog: f64,
) -> Result<f64> {
    assert!(!blocks.is_empty());
    let factors = ErrorPlusNoise::new(&blocks[0].stats, powers, sigma2).factors()?;
    let mut acc = KahanSum::new();
    for est in blocks {
        acc.add(sic_sum_log2(est, powers, &factors));
    }
    Ok(prelog * acc.value() / blocks.len() as f64)
}
