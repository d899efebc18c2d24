//! Dense complex Hermitian linear-algebra kernels.
//!
//! Every matrix "inverse" in this crate goes through [`HermitianFactor`],
//! a Cholesky factor-and-solve wrapper: the simulator works with matrices of
//! the form (PSD + noise * I), which are Hermitian positive definite, and
//! explicit inversion is both slower and less accurate at the sizes involved
//! (up to a few hundred rows for the fully centralized combiner).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Cholesky factorization of a Hermitian positive-definite matrix.
pub struct HermitianFactor {
    chol: Cholesky<C64, Dyn>,
}

impl HermitianFactor {
    /// Factors `m`, which must be Hermitian positive definite.
    pub fn new(m: CMat) -> Result<Self> {
        let n = m.nrows();
        let fail = || Error::numerical(format!("{n}x{n} Hermitian matrix is not positive definite"));
        let chol = Cholesky::new(m).ok_or_else(fail)?;
        // nalgebra's complex factorization happily takes square roots of
        // negative pivots; a valid factor has a real positive diagonal.
        let l = chol.l_dirty();
        for i in 0..n {
            let d = l[(i, i)];
            if !(d.re > 0.0) || d.im.abs() > 1e-9 * d.re {
                return Err(fail());
            }
        }
        Ok(Self { chol })
    }

    /// Solves `M x = b`.
    pub fn solve_vec(&self, b: &CVec) -> CVec {
        self.chol.solve(b)
    }

    /// Solves `M X = B` column-wise, reusing the single factorization.
    pub fn solve_mat(&self, b: &CMat) -> CMat {
        self.chol.solve(b)
    }

    /// log(det(M)), real since M is Hermitian positive definite.
    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        let mut acc = 0.0;
        for i in 0..l.nrows() {
            acc += l[(i, i)].re.ln();
        }
        2.0 * acc
    }
}

/// Factors a real symmetric positive-semidefinite matrix, retrying once with
/// `jitter` added to the diagonal. Used for shadowing covariance matrices
/// whose smallest eigenvalues can round below zero.
pub fn real_cholesky_with_jitter(
    m: DMatrix<f64>,
    jitter: f64,
) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    let mut jittered = m;
    for i in 0..n {
        jittered[(i, i)] += jitter;
    }
    Cholesky::new(jittered).ok_or_else(|| {
        Error::numerical(format!(
            "{n}x{n} covariance matrix is not positive semidefinite (jitter {jitter:e} did not help)"
        ))
    })
}

/// Replaces `m` with its Hermitian part (m + m^H)/2.
pub fn hermitize(m: &mut CMat) {
    let h = m.adjoint();
    *m += h;
    m.scale_mut(0.5);
}

/// Eigendecomposition-based square root of a Hermitian PSD matrix, with
/// negative eigenvalues (roundoff) clipped to zero. Returns S with S S^H = m.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let eig = SymmetricEigen::new(m.clone());
    let mut s = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        for i in 0..s.nrows() {
            s[(i, j)] *= C64::new(root, 0.0);
        }
    }
    s
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Projects a Hermitian matrix onto the PSD cone by clipping negative
/// eigenvalues to zero. Only reconstructs when a negative eigenvalue below
/// `-threshold` is present; smaller excursions are roundoff noise.
pub fn psd_project(m: CMat, threshold: f64) -> CMat {
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min >= -threshold.abs() {
        return m;
    }
    let u = eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let l = lambda.max(0.0);
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= C64::new(l, 0.0);
        }
    }
    let mut out = scaled * u.adjoint();
    hermitize(&mut out);
    out
}

/// Frobenius norm of a complex matrix.
pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Draws a length-`n` circularly symmetric standard complex Gaussian vector:
/// each entry has independent real and imaginary parts of variance 1/2.
pub fn complex_normal_vec<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVec {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    CVec::from_fn(n, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

/// Neumaier-compensated accumulator. Reductions over coherence blocks use it
/// in index order so results do not depend on the thread count.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sums `values` in order with compensation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = KahanSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn random_hpd(n: usize, rng: &mut ChaCha12Rng) -> CMat {
        let a = CMat::from_fn(n, n, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        &a * a.adjoint() + CMat::identity(n, n).scale(0.1)
    }

    #[test]
    fn factor_solve_recovers_rhs() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = random_hpd(5, &mut rng);
            let x = complex_normal_vec(5, &mut rng);
            let b = &m * &x;
            let f = HermitianFactor::new(m).unwrap();
            let x2 = f.solve_vec(&b);
            for i in 0..5 {
                assert_relative_eq!(x[i].re, x2[i].re, max_relative = 1e-9, epsilon = 1e-12);
                assert_relative_eq!(x[i].im, x2[i].im, max_relative = 1e-9, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn log_det_matches_eigenvalue_product() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let m = random_hpd(6, &mut rng);
        let eig_sum: f64 = hermitian_eigenvalues(&m).iter().map(|l| l.ln()).sum();
        let f = HermitianFactor::new(m).unwrap();
        assert_relative_eq!(f.log_det(), eig_sum, max_relative = 1e-9);
    }

    #[test]
    fn psd_sqrt_reconstructs_matrix() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let m = random_hpd(4, &mut rng);
        let s = psd_sqrt(&m);
        let back = &s * s.adjoint();
        assert!(fro_norm(&(back - &m)) / fro_norm(&m) < 1e-10);
    }

    #[test]
    fn non_positive_definite_matrix_is_rejected() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(-1.0, 0.0),
        ]));
        assert!(HermitianFactor::new(m).is_err());
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let values = vec![1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(values), 1.0);
    }

    #[test]
    fn complex_normal_has_unit_variance() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let draws = 200_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let v = complex_normal_vec(1, &mut rng);
            acc += v[0].norm_sqr();
        }
        let mean = acc / draws as f64;
        assert!((mean - 1.0).abs() < 0.02, "sample variance {mean}");
    }
}
