//! Large-scale fading (pathloss + correlated shadowing) and per-link spatial
//! correlation matrices for half-wavelength uniform linear arrays.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wraparound_displacement, wraparound_distance};
use crate::linalg::{psd_project, real_cholesky_with_jitter, C64, CMat};

/// Jitter added to a shadowing covariance diagonal if its Cholesky
/// factorization fails; negligible against shadowing variances of 16-64 dB^2.
const SHADOWING_JITTER: f64 = 1e-10;

/// Pathloss / shadowing model selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathlossModel {
    /// Urban-microcell log-distance model, 4 dB shadowing correlated across
    /// nearby UEs at the same AP, 3D distances with the AP height offset.
    Umi3gpp,
    /// Three-slope model on horizontal distances; 8 dB shadowing beyond 50 m
    /// correlated over both UE and AP separations.
    ThreeSlope,
}

/// Propagation configuration: model plus the angular spread of the local
/// scattering around each UE.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagationConfig {
    pub model: PathlossModel,
    pub angular_std_deg: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            model: PathlossModel::Umi3gpp,
            angular_std_deg: 15.0,
        }
    }
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.angular_std_deg >= 0.0) || !self.angular_std_deg.is_finite() {
            return Err(Error::config("propagation.angular_std_deg must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Large-scale coefficients for every (UE, unit) link of one drop.
/// "Unit" is an AP in cell-free mode or a BS in the cellular baseline.
#[derive(Debug, Clone)]
pub struct LargeScaleMap {
    /// Linear-scale power gains, indexed [ue][unit].
    pub beta: Vec<Vec<f64>>,
    /// Realized shadowing in dB, zero where the model applies none.
    pub shadow_db: Vec<Vec<f64>>,
    pub model: PathlossModel,
}

/// Per-link spatial correlation matrices R, indexed [ue][unit], each N x N
/// Hermitian PSD with trace(R)/N equal to the link's large-scale coefficient.
#[derive(Debug, Clone)]
pub struct SpatialCorrelationSet {
    pub r: Vec<Vec<CMat>>,
    pub nominal_angles: Vec<Vec<f64>>,
    pub angular_std_deg: f64,
}

impl SpatialCorrelationSet {
    pub fn num_ues(&self) -> usize {
        self.r.len()
    }

    pub fn num_units(&self) -> usize {
        self.r.first().map_or(0, |row| row.len())
    }

    pub fn antennas(&self) -> usize {
        self.r[0][0].nrows()
    }
}

/// Urban-microcell channel gain in dB before shadowing:
/// -30.5 - 36.7 log10(d / 1 m).
pub fn umi_pathloss_db(d_m: f64) -> f64 {
    debug_assert!(d_m > 0.0);
    -30.5 - 36.7 * d_m.log10()
}

/// Three-slope channel gain in dB before shadowing. Horizontal distance;
/// constant below 10 m, 20 dB/decade to 50 m, 35 dB/decade beyond.
pub fn three_slope_pathloss_db(d_m: f64) -> f64 {
    if d_m < 10.0 {
        -81.2
    } else if d_m < 50.0 {
        -61.2 - 20.0 * d_m.log10()
    } else {
        -35.7 - 35.0 * d_m.log10()
    }
}

fn link_distance(model: PathlossModel, ue: (f64, f64), unit: (f64, f64), area_side: f64, height_delta: f64) -> f64 {
    match model {
        PathlossModel::Umi3gpp => wraparound_distance(ue, unit, area_side, height_delta),
        // Horizontal distance: the model ignores the height difference.
        PathlossModel::ThreeSlope => wraparound_distance(ue, unit, area_side, 0.0),
    }
}

/// Draws the correlated shadowing matrix, indexed [ue][unit], in dB.
///
/// Urban microcell: variance 16 dB^2, covariance 16 * 2^(-delta/9m) between
/// UEs at the same AP and zero across APs, realized by one Cholesky factor
/// per AP of the UE-distance kernel.
///
/// Three-slope: variance 64 dB^2, covariance
/// 32 * (2^(-delta_ue/100m) + 2^(-rho_ap/100m)) across all pairs. The sum
/// structure factors exactly into independent per-UE and per-AP Gaussian
/// terms, F_kl = (u_k + v_l)/sqrt(2), so two small Cholesky factors replace
/// the KL x KL one.
pub fn sample_shadowing<R: Rng + ?Sized>(
    ue_positions: &[(f64, f64)],
    unit_positions: &[(f64, f64)],
    area_side: f64,
    model: PathlossModel,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let k = ue_positions.len();
    let l = unit_positions.len();
    match model {
        PathlossModel::Umi3gpp => {
            let ue_kernel = distance_kernel(ue_positions, area_side, 16.0, 9.0);
            let chol = real_cholesky_with_jitter(ue_kernel, SHADOWING_JITTER)?;
            let mut shadow = vec![vec![0.0; l]; k];
            for unit in 0..l {
                let white = DMatrix::<f64>::from_fn(k, 1, |_, _| rng.sample(StandardNormal));
                let corr = chol.l() * white;
                for ue in 0..k {
                    shadow[ue][unit] = corr[(ue, 0)];
                }
            }
            Ok(shadow)
        }
        PathlossModel::ThreeSlope => {
            let ue_kernel = distance_kernel(ue_positions, area_side, 64.0, 100.0);
            let unit_kernel = distance_kernel(unit_positions, area_side, 64.0, 100.0);
            let ue_chol = real_cholesky_with_jitter(ue_kernel, SHADOWING_JITTER)?;
            let unit_chol = real_cholesky_with_jitter(unit_kernel, SHADOWING_JITTER)?;
            let ue_white = DMatrix::<f64>::from_fn(k, 1, |_, _| rng.sample(StandardNormal));
            let unit_white = DMatrix::<f64>::from_fn(l, 1, |_, _| rng.sample(StandardNormal));
            let u = ue_chol.l() * ue_white;
            let v = unit_chol.l() * unit_white;
            let scale = std::f64::consts::FRAC_1_SQRT_2;
            let shadow = (0..k)
                .map(|ue| (0..l).map(|unit| scale * (u[(ue, 0)] + v[(unit, 0)])).collect())
                .collect();
            Ok(shadow)
        }
    }
}

/// Kernel matrix variance * 2^(-distance/decorrelation) over wrap-around
/// horizontal distances between the given positions.
fn distance_kernel(positions: &[(f64, f64)], area_side: f64, variance: f64, decorrelation_m: f64) -> DMatrix<f64> {
    let n = positions.len();
    DMatrix::from_fn(n, n, |i, j| {
        let d = wraparound_distance(positions[i], positions[j], area_side, 0.0);
        variance * (-d / decorrelation_m).exp2()
    })
}

/// Large-scale coefficients for all (UE, unit) links: pathloss plus realized
/// shadowing. For the three-slope model, shadowing applies only at 50 m and
/// beyond; those inner links get shadow_db = 0.
pub fn large_scale_map<R: Rng + ?Sized>(
    ue_positions: &[(f64, f64)],
    unit_positions: &[(f64, f64)],
    area_side: f64,
    height_delta: f64,
    model: PathlossModel,
    rng: &mut R,
) -> Result<LargeScaleMap> {
    let mut shadow = sample_shadowing(ue_positions, unit_positions, area_side, model, rng)?;
    let k = ue_positions.len();
    let l = unit_positions.len();
    let mut beta = vec![vec![0.0; l]; k];
    for ue in 0..k {
        for unit in 0..l {
            let d = link_distance(model, ue_positions[ue], unit_positions[unit], area_side, height_delta);
            let gain_db = match model {
                PathlossModel::Umi3gpp => umi_pathloss_db(d) + shadow[ue][unit],
                PathlossModel::ThreeSlope => {
                    if d < 50.0 {
                        shadow[ue][unit] = 0.0;
                    }
                    three_slope_pathloss_db(d) + shadow[ue][unit]
                }
            };
            beta[ue][unit] = 10f64.powf(gain_db / 10.0);
        }
    }
    Ok(LargeScaleMap { beta, shadow_db: shadow, model })
}

/// Spatial correlation matrix of a half-wavelength ULA under Gaussian local
/// scattering: entry (m, n) is
/// `beta * exp(j pi (m-n) sin(phi)) * exp(-(std^2 / 2) (pi (m-n) cos(phi))^2)`
/// with `phi` the nominal azimuth and `std` the angular deviation in radians.
/// The result is symmetrized to exact Hermitian form; if rounding produces an
/// eigenvalue below -1e-12 * beta the matrix is projected back onto the PSD
/// cone by clipping.
pub fn local_scattering_correlation(
    beta: f64,
    nominal_angle_rad: f64,
    angular_std_rad: f64,
    antennas: usize,
) -> Result<CMat> {
    if antennas == 0 {
        return Err(Error::config("antenna count must be at least 1"));
    }
    let sin_phi = nominal_angle_rad.sin();
    let cos_phi = nominal_angle_rad.cos();
    let var = angular_std_rad * angular_std_rad;
    let mut r = CMat::zeros(antennas, antennas);
    for m in 0..antennas {
        for n in 0..antennas {
            let gap = std::f64::consts::PI * (m as f64 - n as f64);
            let phase = gap * sin_phi;
            let damp = (-0.5 * var * (gap * cos_phi).powi(2)).exp();
            r[(m, n)] = C64::from_polar(beta * damp, phase);
        }
    }
    // The construction above is Hermitian by symmetry of |m-n|; enforce it
    // exactly so downstream factorizations see a clean input.
    let adj = r.adjoint();
    r += adj;
    r.scale_mut(0.5);
    Ok(psd_project(r, 1e-12 * beta))
}

/// Builds the full correlation set for a drop: one matrix per (UE, unit)
/// link, using the wrap-around azimuth from unit to UE as nominal angle.
pub fn correlation_set(
    ue_positions: &[(f64, f64)],
    unit_positions: &[(f64, f64)],
    area_side: f64,
    large_scale: &LargeScaleMap,
    antennas: usize,
    angular_std_deg: f64,
) -> Result<SpatialCorrelationSet> {
    let std_rad = angular_std_deg.to_radians();
    let mut r = Vec::with_capacity(ue_positions.len());
    let mut angles = Vec::with_capacity(ue_positions.len());
    for (ue, &ue_pos) in ue_positions.iter().enumerate() {
        let mut row = Vec::with_capacity(unit_positions.len());
        let mut angle_row = Vec::with_capacity(unit_positions.len());
        for (unit, &unit_pos) in unit_positions.iter().enumerate() {
            let (dx, dy) = wraparound_displacement(unit_pos, ue_pos, area_side);
            let angle = dy.atan2(dx);
            row.push(local_scattering_correlation(
                large_scale.beta[ue][unit],
                angle,
                std_rad,
                antennas,
            )?);
            angle_row.push(angle);
        }
        r.push(row);
        angles.push(angle_row);
    }
    Ok(SpatialCorrelationSet {
        r,
        nominal_angles: angles,
        angular_std_deg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro_norm, hermitian_eigenvalues};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn umi_pathloss_reference_points() {
        assert_relative_eq!(umi_pathloss_db(10.0), -67.2, epsilon = 1e-12);
        assert_relative_eq!(umi_pathloss_db(1.0), -30.5, epsilon = 1e-12);
        assert_relative_eq!(umi_pathloss_db(100.0), -103.9, epsilon = 1e-12);
    }

    #[test]
    fn three_slope_reference_points() {
        assert_relative_eq!(three_slope_pathloss_db(5.0), -81.2, epsilon = 1e-12);
        // The first two branches meet at 10 m.
        assert_relative_eq!(three_slope_pathloss_db(10.0), -81.2, epsilon = 1e-12);
        let expected_50 = -35.7 - 35.0 * 50f64.log10();
        assert_relative_eq!(three_slope_pathloss_db(50.0), expected_50, epsilon = 1e-12);
        assert_relative_eq!(three_slope_pathloss_db(50.0), -95.164, epsilon = 1e-3);
    }

    #[test]
    fn three_slope_is_monotone_and_continuous_at_ten_meters() {
        let mut prev = f64::INFINITY;
        let mut d = 0.5;
        while d < 500.0 {
            let g = three_slope_pathloss_db(d);
            assert!(g <= prev + 1e-12, "gain increased at d = {d}");
            prev = g;
            d += 0.25;
        }
        let below = three_slope_pathloss_db(10.0 - 1e-9);
        let above = three_slope_pathloss_db(10.0 + 1e-9);
        assert!((below - above).abs() < 1e-6);
    }

    #[test]
    fn umi_shadowing_kernel_reference_values() {
        // Two UEs 9 m apart: covariance at the same AP halves the variance.
        let kernel = distance_kernel(&[(0.0, 0.0), (9.0, 0.0)], 1000.0, 16.0, 9.0);
        assert_relative_eq!(kernel[(0, 1)], 8.0, epsilon = 1e-12);
        assert_relative_eq!(kernel[(0, 0)], 16.0, epsilon = 1e-12);
    }

    #[test]
    fn umi_shadowing_sample_covariance_matches_model() {
        let ue_pos = [(100.0, 100.0), (104.0, 100.0), (100.0, 130.0), (400.0, 700.0)];
        let ap_pos = [(250.0, 250.0), (750.0, 750.0)];
        let (k, l) = (ue_pos.len(), ap_pos.len());
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let draws = 100_000;
        let dim = k * l;
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        for _ in 0..draws {
            let f = sample_shadowing(&ue_pos, &ap_pos, 1000.0, PathlossModel::Umi3gpp, &mut rng).unwrap();
            let flat: Vec<f64> = (0..k).flat_map(|ue| (0..l).map(move |ap| (ue, ap))).map(|(ue, ap)| f[ue][ap]).collect();
            for i in 0..dim {
                for j in 0..dim {
                    acc[(i, j)] += flat[i] * flat[j];
                }
            }
        }
        acc /= draws as f64;

        let mut expected = DMatrix::<f64>::zeros(dim, dim);
        for (i, (ue_i, ap_i)) in (0..k).flat_map(|ue| (0..l).map(move |ap| (ue, ap))).enumerate() {
            for (j, (ue_j, ap_j)) in (0..k).flat_map(|ue| (0..l).map(move |ap| (ue, ap))).enumerate() {
                if ap_i == ap_j {
                    let d = wraparound_distance(ue_pos[ue_i], ue_pos[ue_j], 1000.0, 0.0);
                    expected[(i, j)] = 16.0 * (-d / 9.0).exp2();
                }
            }
        }
        let err = (&acc - &expected).norm() / expected.norm();
        assert!(err < 0.05, "relative Frobenius error {err}");
    }

    #[test]
    fn three_slope_shadowing_sample_covariance_matches_model() {
        let ue_pos = [(100.0, 100.0), (160.0, 100.0), (500.0, 500.0)];
        let ap_pos = [(250.0, 250.0), (300.0, 250.0), (750.0, 750.0)];
        let (k, l) = (ue_pos.len(), ap_pos.len());
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let draws = 100_000;
        let dim = k * l;
        let mut acc = DMatrix::<f64>::zeros(dim, dim);
        for _ in 0..draws {
            let f = sample_shadowing(&ue_pos, &ap_pos, 1000.0, PathlossModel::ThreeSlope, &mut rng).unwrap();
            let flat: Vec<f64> = (0..k).flat_map(|ue| (0..l).map(move |ap| (ue, ap))).map(|(ue, ap)| f[ue][ap]).collect();
            for i in 0..dim {
                for j in 0..dim {
                    acc[(i, j)] += flat[i] * flat[j];
                }
            }
        }
        acc /= draws as f64;

        let mut expected = DMatrix::<f64>::zeros(dim, dim);
        for (i, (ue_i, ap_i)) in (0..k).flat_map(|ue| (0..l).map(move |ap| (ue, ap))).enumerate() {
            for (j, (ue_j, ap_j)) in (0..k).flat_map(|ue| (0..l).map(move |ap| (ue, ap))).enumerate() {
                let delta = wraparound_distance(ue_pos[ue_i], ue_pos[ue_j], 1000.0, 0.0);
                let rho = wraparound_distance(ap_pos[ap_i], ap_pos[ap_j], 1000.0, 0.0);
                expected[(i, j)] = 32.0 * ((-delta / 100.0).exp2() + (-rho / 100.0).exp2());
            }
        }
        // Same UE, same AP: both kernel terms hit their 32 dB^2 peak.
        assert_relative_eq!(expected[(0, 0)], 64.0, epsilon = 1e-12);
        let err = (&acc - &expected).norm() / expected.norm();
        assert!(err < 0.05, "relative Frobenius error {err}");
    }

    #[test]
    fn single_antenna_correlation_is_the_large_scale_coefficient() {
        let r = local_scattering_correlation(0.37, 1.1, 15f64.to_radians(), 1).unwrap();
        assert_eq!(r.nrows(), 1);
        assert_relative_eq!(r[(0, 0)].re, 0.37, epsilon = 1e-15);
        assert_relative_eq!(r[(0, 0)].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn correlation_diagonal_equals_beta() {
        let beta = 2.4e-9;
        let r = local_scattering_correlation(beta, -0.6, 15f64.to_radians(), 6).unwrap();
        for m in 0..6 {
            assert_relative_eq!(r[(m, m)].re, beta, max_relative = 1e-12);
        }
        let trace: f64 = (0..6).map(|m| r[(m, m)].re).sum();
        assert_relative_eq!(trace / 6.0, beta, max_relative = 1e-9);
    }

    #[test]
    fn correlation_eigenvalues_are_nonnegative() {
        for &angle in &[0.0, 0.3, -1.2, 2.9] {
            for &std_deg in &[0.0, 2.0, 15.0, 40.0] {
                let r = local_scattering_correlation(1.0, angle, (std_deg as f64).to_radians(), 8).unwrap();
                let eigs = hermitian_eigenvalues(&r);
                assert!(eigs[0] >= -1e-14, "negative eigenvalue {} (angle {angle}, std {std_deg})", eigs[0]);
            }
        }
    }

    /// Quadrature reference: R_mn = beta * integral of
    /// exp(j pi (m-n) sin(phi + delta)) over the Gaussian density of delta.
    fn quadrature_correlation(beta: f64, angle: f64, std_rad: f64, n: usize) -> CMat {
        let steps = 20_001;
        let span = 8.0 * std_rad;
        let dx = 2.0 * span / (steps - 1) as f64;
        let norm = 1.0 / (std_rad * (2.0 * std::f64::consts::PI).sqrt());
        let mut r = CMat::zeros(n, n);
        for s in 0..steps {
            let delta = -span + s as f64 * dx;
            let w = norm * (-0.5 * (delta / std_rad).powi(2)).exp()
                * if s == 0 || s == steps - 1 { 0.5 } else { 1.0 }
                * dx;
            let sin_phi = (angle + delta).sin();
            for m in 0..n {
                for q in 0..n {
                    let gap = std::f64::consts::PI * (m as f64 - q as f64);
                    r[(m, q)] += C64::from_polar(beta * w, gap * sin_phi);
                }
            }
        }
        r
    }

    #[test]
    fn vanishing_angular_spread_gives_rank_one_steering_matrix() {
        let beta = 0.8;
        let angle = 0.4;
        let n = 4;
        // Exactly zero spread: beta * a(phi) a(phi)^H.
        let r0 = local_scattering_correlation(beta, angle, 0.0, n).unwrap();
        let steering = crate::linalg::CVec::from_fn(n, |m, _| C64::from_polar(1.0, std::f64::consts::PI * m as f64 * angle.sin()));
        let rank1 = (&steering * steering.adjoint()).scale(beta);
        assert!(fro_norm(&(r0.clone() - rank1)) / fro_norm(&r0) < 1e-12);

        // Small spreads: the closed form tracks the exact angular integral
        // and both approach the rank-one limit.
        let mut last_gap = f64::INFINITY;
        for &(std_deg, tol) in &[(2.0, 2e-3), (0.5, 1e-4), (0.1, 1e-5)] {
            let std_rad = (std_deg as f64).to_radians();
            let closed = local_scattering_correlation(beta, angle, std_rad, n).unwrap();
            let exact = quadrature_correlation(beta, angle, std_rad, n);
            let gap = fro_norm(&(closed.clone() - exact.clone())) / fro_norm(&exact);
            assert!(gap < tol, "closed form vs quadrature gap {gap} at {std_deg} deg");
            let to_rank1 = fro_norm(&(closed - r0.clone())) / fro_norm(&r0);
            assert!(to_rank1 < last_gap, "distance to rank-1 must shrink with the spread");
            last_gap = to_rank1;
        }
        assert!(last_gap < 1e-3);
    }

    #[test]
    fn zero_antennas_is_a_config_error() {
        assert!(local_scattering_correlation(1.0, 0.0, 0.1, 0).is_err());
    }

    #[test]
    fn trace_invariant_holds_across_a_generated_drop() {
        let ue_pos: Vec<(f64, f64)> = vec![(100.0, 200.0), (800.0, 300.0), (450.0, 900.0)];
        let ap_pos: Vec<(f64, f64)> = vec![(250.0, 250.0), (750.0, 750.0)];
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let ls = large_scale_map(&ue_pos, &ap_pos, 1000.0, 10.0, PathlossModel::Umi3gpp, &mut rng).unwrap();
        let set = correlation_set(&ue_pos, &ap_pos, 1000.0, &ls, 4, 15.0).unwrap();
        for ue in 0..3 {
            for ap in 0..2 {
                let trace: f64 = (0..4).map(|m| set.r[ue][ap][(m, m)].re).sum();
                assert_relative_eq!(trace / 4.0, ls.beta[ue][ap], max_relative = 1e-9);
            }
        }
    }
}
