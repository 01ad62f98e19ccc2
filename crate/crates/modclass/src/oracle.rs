//! Exhaustive posterior enumeration for tiny instances.
//!
//! With the channel taps and noise variance known and fixed, the posterior
//! mean of the mixture weights has a closed form as a finite sum: enumerate
//! every (point, label) assignment of every symbol slot, weight it by
//!
//! ```text
//! exp(-||r - S h||^2 / sigma^2)              (Gaussian likelihood)
//!   * prod_a gamma_a^(rising c_a)            (Dirichlet-multinomial /
//!                                              Polya sequence weight)
//!   * prod_n 1 / |z_n|                       (uniform point within label)
//! ```
//!
//! and average `E[P_A | c] = (gamma + c) / (sum gamma + m)` under those
//! weights. Assignment-independent factors cancel in the normalization.
//!
//! This is the independent ground truth the Gibbs chain is checked against:
//! it shares no sampling machinery with the sweep path. The enumeration is
//! `pairs^(N+L-1)` and is capped at 5 symbols and 28 pairs.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{transmit, ChannelTaps, ReceivedBlock};
use crate::constellation::{ConstellationKind, ConstellationSet};
use crate::gibbs::{classify, run_chain_from, ChainConfig, GibbsState, Priors, SamplerMode};
use crate::sampling::{standard_complex, RngStream};
use crate::{Error, Result};

/// Hard caps keeping the enumeration around `28^5`.
pub const MAX_SYMBOLS: usize = 5;
pub const MAX_PAIRS: usize = 28;

/// Computes the exact posterior-mean score vector `E[P_A(a) | r]` for a
/// tiny block under known channel taps and noise variance.
pub fn exact_posterior_oracle(
    block: &ReceivedBlock,
    set: &ConstellationSet,
    priors: &Priors,
    taps: &ChannelTaps,
    sigma2: f64,
) -> Result<Vec<f64>> {
    priors.validate(set.len(), SamplerMode::LatentDirichlet)?;
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "sigma2",
            value: sigma2,
        });
    }
    let m = block.num_symbols();
    if m > MAX_SYMBOLS {
        return Err(Error::EnumerationBound(format!(
            "{m} symbols exceed the cap of {MAX_SYMBOLS}"
        )));
    }
    let pairs = set.pairs();
    if pairs.len() > MAX_PAIRS {
        return Err(Error::EnumerationBound(format!(
            "{} pairs exceed the cap of {MAX_PAIRS}",
            pairs.len()
        )));
    }
    if taps.len() != block.l() {
        return Err(Error::DimensionMismatch(format!(
            "{} taps for L = {}",
            taps.len(),
            block.l()
        )));
    }

    let n = block.n();
    let l = block.l();
    let num_members = set.len();
    let gamma_total: f64 = priors.gamma.iter().sum();

    // Log rising factorial table: rise[a][c] = sum_{j<c} ln(gamma_a + j).
    let rise: Vec<Vec<f64>> = priors
        .gamma
        .iter()
        .map(|&g| {
            let mut row = vec![0.0; m + 1];
            for c in 1..=m {
                row[c] = row[c - 1] + (g + (c - 1) as f64).ln();
            }
            row
        })
        .collect();
    let log_size: Vec<f64> = set
        .members()
        .iter()
        .map(|c| (c.size() as f64).ln())
        .collect();
    let super_points = set.super_points();

    // Odometer over one pair index per slot.
    let mut digits = vec![0usize; m];
    let mut counts = vec![0usize; num_members];
    let mut symbols = vec![Complex64::new(0.0, 0.0); m];

    // Streaming log-sum-exp accumulation of the normalizer and the weighted
    // posterior means.
    let mut max_logw = f64::NEG_INFINITY;
    let mut norm = 0.0;
    let mut score_acc = vec![0.0; num_members];

    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        let mut log_point_prior = 0.0;
        for (slot, &digit) in digits.iter().enumerate() {
            let (p, a) = pairs[digit];
            symbols[slot] = super_points[p];
            counts[a] += 1;
            log_point_prior -= log_size[a];
        }
        let mut resid = 0.0;
        for k in 0..n {
            let mut predicted = Complex64::new(0.0, 0.0);
            for (j, h) in taps.taps().iter().enumerate() {
                predicted += h * symbols[k + l - 1 - j];
            }
            resid += (block.samples()[k] - predicted).norm_sqr();
        }
        let mut logw = -resid / sigma2 + log_point_prior;
        for (a, &c) in counts.iter().enumerate() {
            logw += rise[a][c];
        }

        if logw > max_logw {
            let rescale = (max_logw - logw).exp();
            norm *= rescale;
            score_acc.iter_mut().for_each(|s| *s *= rescale);
            max_logw = logw;
        }
        let w = (logw - max_logw).exp();
        norm += w;
        let denom = gamma_total + m as f64;
        for (a, s) in score_acc.iter_mut().enumerate() {
            *s += w * (priors.gamma[a] + counts[a] as f64) / denom;
        }

        // Advance the odometer.
        let mut slot = 0;
        loop {
            if slot == m {
                let score: Vec<f64> = score_acc.iter().map(|s| s / norm).collect();
                return Ok(score);
            }
            digits[slot] += 1;
            if digits[slot] < pairs.len() {
                break;
            }
            digits[slot] = 0;
            slot += 1;
        }
    }
}

/// One oracle-vs-chain comparison on a random small instance.
#[derive(Debug, Clone)]
pub struct FixtureOutcome {
    pub index: u64,
    pub truth: usize,
    pub oracle_scores: Vec<f64>,
    pub chain_scores: Vec<f64>,
    pub max_abs_diff: f64,
}

/// Runs seeded random fixtures: `N = 4`, `L = 1`, uniform `gamma = 1`,
/// known taps and noise variance drawn per fixture. The chain runs with the
/// channel and noise updates disabled and its scores are compared
/// componentwise against [`exact_posterior_oracle`].
pub fn run_fixtures(
    seed: u64,
    instances: u64,
    retained: usize,
    burn_in: usize,
) -> Result<Vec<FixtureOutcome>> {
    let set = ConstellationSet::new(&ConstellationKind::ALL)?;
    let priors = Priors::uniform_gamma(1.0, set.len());
    let config = ChainConfig {
        retained,
        burn_in,
        update_channel: false,
        update_noise: false,
        ..ChainConfig::default()
    };
    let mut outcomes = Vec::with_capacity(instances as usize);
    for index in 0..instances {
        let mut rng = RngStream::new(seed, 0x0f1c_0000 + index).rng();
        let truth = rng.random_range(0..set.len());
        let taps = ChannelTaps::new(vec![standard_complex(&mut rng)])?;
        let sigma2 = 0.15 + 0.35 * rng.random::<f64>();
        let block = transmit(&set.members()[truth], &taps, sigma2, 4, &mut rng);

        let oracle_scores = exact_posterior_oracle(&block, &set, &priors, &taps, sigma2)?;

        let mut state = GibbsState::init(&block, &set, &priors, &config, &mut rng)?;
        state.taps = taps.clone();
        state.sigma2 = sigma2;
        let result = run_chain_from(state, &block, &set, &priors, &config, &mut rng)?;
        let chain_scores = classify(&result, &set)?.scores;

        let max_abs_diff = oracle_scores
            .iter()
            .zip(&chain_scores)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        outcomes.push(FixtureOutcome {
            index,
            truth,
            oracle_scores,
            chain_scores,
            max_abs_diff,
        });
    }
    Ok(outcomes)
}
