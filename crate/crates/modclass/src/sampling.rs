//! Sampling primitives for the Gibbs conditionals: multivariate
//! circularly-symmetric complex Gaussian, Dirichlet, inverse gamma, and
//! categorical (linear- and log-domain).
//!
//! Everything is driven by an explicit RNG so that draws are a deterministic
//! function of the parameters and the stream position. [`RngStream`] keys a
//! ChaCha stream by `(seed, stream)`; the harness derives one stream per
//! (SNR point, trial) so results do not depend on scheduling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::{Error, Result};

/// A reproducible random stream keyed by `(seed, stream)`.
///
/// Identical keys yield bit-identical draw sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    /// Instantiates the generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// One draw of a unit circularly-symmetric complex normal: real and
/// imaginary parts are independent N(0, 1/2), so `E|z|^2 = 1`.
pub fn standard_complex(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn is_hermitian(cov: &DMatrix<Complex64>, tol: f64) -> bool {
    let n = cov.nrows();
    for i in 0..n {
        for j in i..n {
            if (cov[(i, j)] - cov[(j, i)].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// Hermitian Cholesky with escalating diagonal jitter up to `1e-10`.
///
/// The generic complex factorization happily takes square roots of negative
/// pivots (yielding an imaginary diagonal and a wrong reconstruction), so a
/// factor only counts as valid when its diagonal is real and positive.
pub(crate) fn hermitian_cholesky(m: &DMatrix<Complex64>) -> Result<Cholesky<Complex64, Dyn>> {
    for jitter in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut t = m.clone();
        for i in 0..t.nrows() {
            t[(i, i)] += Complex64::new(jitter, 0.0);
        }
        if let Some(c) = t.cholesky() {
            let l = c.l_dirty();
            let positive = (0..l.nrows()).all(|i| {
                let d = l[(i, i)];
                d.re > 0.0 && d.im.abs() <= 1e-8 * (d.re + 1.0)
            });
            if positive {
                return Ok(c);
            }
        }
    }
    Err(Error::FactorizationFailed)
}

/// Draws from a multivariate circularly-symmetric complex Gaussian
/// `CN(mean, cov)` via a Hermitian factorization `cov = A A^H` applied to
/// i.i.d. unit complex normals.
///
/// `cov` must be Hermitian within `1e-10`. A positive-semidefinite matrix
/// that fails to factor as-is gets escalating diagonal jitter up to `1e-10`;
/// if it still fails the covariance is reported as numerically indefinite.
/// An identically zero covariance returns the mean unchanged.
pub fn sample_cgauss(
    mean: &DVector<Complex64>,
    cov: &DMatrix<Complex64>,
    rng: &mut impl Rng,
) -> Result<DVector<Complex64>> {
    let n = mean.len();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "mean has {} entries but covariance is {}x{}",
            n,
            cov.nrows(),
            cov.ncols()
        )));
    }
    if !is_hermitian(cov, 1e-10) {
        return Err(Error::NotHermitian);
    }
    if cov.iter().all(|c| c.norm() == 0.0) {
        return Ok(mean.clone());
    }
    let chol = hermitian_cholesky(cov)?;
    let z = DVector::from_fn(n, |_, _| standard_complex(rng));
    Ok(mean + chol.l() * z)
}

/// Draws from a Dirichlet distribution with the given concentration vector,
/// as normalized Gamma draws. Entries must be strictly positive; the output
/// is strictly positive and sums to one within `1e-12`.
pub fn sample_dirichlet(concentration: &[f64], rng: &mut impl Rng) -> Result<Vec<f64>> {
    if concentration.is_empty() {
        return Err(Error::EmptyInput("Dirichlet concentration"));
    }
    for &c in concentration {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonPositiveParameter {
                name: "Dirichlet concentration",
                value: c,
            });
        }
    }
    let mut draws: Vec<f64> = concentration
        .iter()
        .map(|&c| {
            let g = Gamma::new(c, 1.0).expect("positive shape");
            g.sample(rng).max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = draws.iter().sum();
    for d in &mut draws {
        *d /= total;
    }
    Ok(draws)
}

/// Draws from an inverse gamma distribution with the given shape and scale:
/// the reciprocal of a Gamma(shape, rate = scale) draw. The mean is
/// `scale / (shape - 1)` for shape > 1.
pub fn sample_invgamma(shape: f64, scale: f64, rng: &mut impl Rng) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(Error::NonPositiveParameter {
            name: "inverse gamma shape",
            value: shape,
        });
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::NonPositiveParameter {
            name: "inverse gamma scale",
            value: scale,
        });
    }
    let g = Gamma::new(shape, 1.0 / scale).expect("positive parameters");
    Ok(1.0 / g.sample(rng))
}

/// Walks the cumulative sum of nonnegative weights; assumes `total > 0`.
fn categorical_walk(weights: &[f64], total: f64, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding can leave u just past the final cumulative value.
    last_positive
}

/// Draws an index with probability proportional to the given nonnegative
/// weights. Errors if the weights are empty, contain a negative or
/// non-finite entry, or are all zero.
pub fn sample_categorical(weights: &[f64], rng: &mut impl Rng) -> Result<usize> {
    if weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights("negative or non-finite weight"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidWeights("all weights zero"));
    }
    Ok(categorical_walk(weights, total, rng))
}

/// Log-domain categorical draw. The maximum log-weight is subtracted before
/// exponentiation, so the draw is invariant to adding a constant to every
/// entry and ratios that would underflow in the linear domain survive.
/// `-inf` entries denote zero weight; NaN or `+inf` entries are rejected, as
/// is an all `-inf` vector.
pub fn sample_categorical_log(log_weights: &[f64], rng: &mut impl Rng) -> Result<usize> {
    if log_weights.is_empty() {
        return Err(Error::InvalidWeights("empty weight vector"));
    }
    let mut max = f64::NEG_INFINITY;
    for &lw in log_weights {
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Error::InvalidWeights("NaN or +inf log-weight"));
        }
        if lw > max {
            max = lw;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::InvalidWeights("all weights zero"));
    }
    let weights: Vec<f64> = log_weights.iter().map(|&lw| (lw - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(categorical_walk(&weights, total, rng))
}
