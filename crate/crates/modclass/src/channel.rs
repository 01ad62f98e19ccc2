//! Channel generation and received-block synthesis.
//!
//! A block of `N` symbol-rate samples is `r = S h + w`, where `S` is the
//! `N x L` convolution matrix of the `N + L - 1` transmitted symbols
//! `s_{-L+1} .. s_{N-1}`, `h` holds the `L` taps of the overall pulse shape,
//! and `w` is circularly-symmetric complex Gaussian noise with per-sample
//! power `sigma^2`. Two channel models are provided: independent Rayleigh
//! taps with a dB power profile, and a multipath model whose taps are
//! raised-cosine pulse samples at possibly non-integer path delays. Both are
//! normalized so that the expected channel energy `E[||h||^2]` is one.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::constellation::Constellation;
use crate::sampling::standard_complex;
use crate::{ConstellationKind, Error, Result};

/// The `L` channel taps `h(0) .. h((L-1)T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTaps {
    taps: Vec<Complex64>,
}

impl ChannelTaps {
    pub fn new(taps: Vec<Complex64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::EmptyInput("channel taps"));
        }
        if taps.iter().any(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(Error::InvalidConfig("non-finite channel tap".into()));
        }
        Ok(ChannelTaps { taps })
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    /// Tap count `L`.
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Channel energy `||h||^2` of this realization.
    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }
}

/// Simulation-only ground truth attached to a synthesized block.
#[derive(Debug, Clone)]
pub struct BlockTruth {
    pub kind: ConstellationKind,
    pub symbols: Vec<Complex64>,
    pub taps: ChannelTaps,
    pub sigma2: f64,
}

/// The received samples of one processing block plus its known geometry:
/// `N` samples and channel memory `L`.
#[derive(Debug, Clone)]
pub struct ReceivedBlock {
    samples: Vec<Complex64>,
    l: usize,
    truth: Option<BlockTruth>,
}

impl ReceivedBlock {
    pub fn new(samples: Vec<Complex64>, l: usize) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("received samples"));
        }
        if l == 0 {
            return Err(Error::EmptyInput("channel taps"));
        }
        if samples
            .iter()
            .any(|s| !s.re.is_finite() || !s.im.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite received sample".into()));
        }
        Ok(ReceivedBlock {
            samples,
            l,
            truth: None,
        })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Block length `N`.
    pub fn n(&self) -> usize {
        self.samples.len()
    }

    /// Channel memory `L`.
    pub fn l(&self) -> usize {
        self.l
    }

    /// Number of symbols involved in the block, `N + L - 1`.
    pub fn num_symbols(&self) -> usize {
        self.samples.len() + self.l - 1
    }

    pub fn truth(&self) -> Option<&BlockTruth> {
        self.truth.as_ref()
    }

    /// Mean received power `||r||^2 / N`.
    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Draws `L` independent Rayleigh taps with the given dB power profile,
/// rescaled so the tap variances sum to one (`E[||h||^2] = 1`).
pub fn rayleigh_taps(power_profile_db: &[f64], rng: &mut impl Rng) -> Result<ChannelTaps> {
    if power_profile_db.is_empty() {
        return Err(Error::EmptyInput("power profile"));
    }
    let linear: Vec<f64> = power_profile_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
    let total: f64 = linear.iter().sum();
    let taps = linear
        .iter()
        .map(|&p| standard_complex(rng) * (p / total).sqrt())
        .collect();
    ChannelTaps::new(taps)
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Raised-cosine pulse value at time `t` for the given roll-off factor and
/// symbol period. The removable singularity at `|t| = T / (2 * rolloff)` is
/// evaluated by its analytic limit `(pi/4) * sinc(1 / (2 * rolloff))`.
pub fn raised_cosine(t: f64, rolloff: f64, symbol_period: f64) -> f64 {
    assert!(symbol_period > 0.0, "symbol period must be positive");
    assert!(
        (0.0..=1.0).contains(&rolloff),
        "roll-off must be in [0, 1]"
    );
    let x = t / symbol_period;
    if rolloff == 0.0 {
        return sinc(x);
    }
    let denom = 1.0 - (2.0 * rolloff * x).powi(2);
    if denom.abs() < 1e-8 {
        return std::f64::consts::FRAC_PI_4 * sinc(1.0 / (2.0 * rolloff));
    }
    sinc(x) * (std::f64::consts::PI * rolloff * x).cos() / denom
}

/// Draws tapped-delay-line coefficients for a multipath channel: each path
/// has a Rayleigh complex gain with the given relative dB power and a
/// (possibly non-integer) delay in units of the symbol period, and the taps
/// sample the superposed raised-cosine pulses at integer symbol times
/// `0 .. num_taps - 1`.
///
/// The path variances are rescaled analytically so that `E[||h||^2] = 1`
/// over the retained tap window; individual realizations fluctuate around
/// that expectation.
pub fn multipath_taps(
    delays: &[f64],
    powers_db: &[f64],
    rolloff: f64,
    num_taps: usize,
    rng: &mut impl Rng,
) -> Result<ChannelTaps> {
    if num_taps == 0 {
        return Err(Error::EmptyInput("channel taps"));
    }
    if delays.is_empty() {
        return Err(Error::EmptyInput("path delays"));
    }
    if delays.len() != powers_db.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} delays but {} powers",
            delays.len(),
            powers_db.len()
        )));
    }
    let linear: Vec<f64> = powers_db.iter().map(|db| 10f64.powf(db / 10.0)).collect();
    // Pulse samples per path at the retained integer tap instants.
    let pulse: Vec<Vec<f64>> = delays
        .iter()
        .map(|&tau| {
            (0..num_taps)
                .map(|k| raised_cosine(k as f64 - tau, rolloff, 1.0))
                .collect()
        })
        .collect();
    let captured: f64 = linear
        .iter()
        .zip(&pulse)
        .map(|(&p, rc)| p * rc.iter().map(|v| v * v).sum::<f64>())
        .sum();
    if !(captured > 0.0) {
        return Err(Error::InvalidConfig(
            "no pulse energy falls inside the tap window".into(),
        ));
    }
    let gains: Vec<Complex64> = linear
        .iter()
        .map(|&p| standard_complex(rng) * (p / captured).sqrt())
        .collect();
    let taps: Vec<Complex64> = (0..num_taps)
        .map(|k| {
            gains
                .iter()
                .zip(&pulse)
                .map(|(g, rc)| g * rc[k])
                .sum::<Complex64>()
        })
        .collect();
    ChannelTaps::new(taps)
}

/// Builds the `N x L` symbol convolution matrix: row `k` is
/// `[s_k, s_{k-1}, ..., s_{k-L+1}]`, with `symbols[i]` holding `s_{i-L+1}`.
pub fn convolution_matrix(
    symbols: &[Complex64],
    n: usize,
    l: usize,
) -> Result<DMatrix<Complex64>> {
    if n == 0 || l == 0 {
        return Err(Error::EmptyInput("block geometry"));
    }
    if symbols.len() != n + l - 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} symbols for N={n}, L={l}, got {}",
            n + l - 1,
            symbols.len()
        )));
    }
    Ok(DMatrix::from_fn(n, l, |k, j| symbols[k + l - 1 - j]))
}

/// Computes `S h` directly from the symbol sequence: output row `k` is
/// `sum_j h_j * s_{k-j}`.
pub fn apply_channel(symbols: &[Complex64], taps: &ChannelTaps, n: usize) -> Vec<Complex64> {
    let l = taps.len();
    debug_assert_eq!(symbols.len(), n + l - 1);
    (0..n)
        .map(|k| {
            taps.taps()
                .iter()
                .enumerate()
                .map(|(j, h)| h * symbols[k + l - 1 - j])
                .sum()
        })
        .collect()
}

/// Synthesizes one received block: draws `N + L - 1` i.i.d. uniform symbols
/// from the constellation, convolves with the taps and adds complex Gaussian
/// noise of per-sample power `sigma2`. Ground truth is recorded on the block.
pub fn transmit(
    constellation: &Constellation,
    taps: &ChannelTaps,
    sigma2: f64,
    n: usize,
    rng: &mut impl Rng,
) -> ReceivedBlock {
    assert!(sigma2 >= 0.0, "noise variance must be nonnegative");
    assert!(n >= 1, "block length must be positive");
    let l = taps.len();
    let symbols: Vec<Complex64> = (0..n + l - 1)
        .map(|_| constellation.points()[rng.random_range(0..constellation.size())])
        .collect();
    let noiseless = apply_channel(&symbols, taps, n);
    let noise_scale = sigma2.sqrt();
    let samples: Vec<Complex64> = noiseless
        .iter()
        .map(|&x| x + standard_complex(rng) * noise_scale)
        .collect();
    ReceivedBlock {
        samples,
        l,
        truth: Some(BlockTruth {
            kind: constellation.kind(),
            symbols,
            taps: taps.clone(),
            sigma2,
        }),
    }
}
