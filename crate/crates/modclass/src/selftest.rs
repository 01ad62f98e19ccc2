//! Runtime invariant suite behind the `selftest` subcommand.
//!
//! Each check exercises one module invariant from the public API and
//! reports a message on failure. The whole suite is seeded and runs in a
//! few minutes on one core.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{
    apply_channel, convolution_matrix, multipath_taps, raised_cosine, rayleigh_taps, transmit,
    ChannelTaps,
};
use crate::constellation::{ConstellationKind, ConstellationSet, COINCIDENCE_TOL};
use crate::gibbs::{
    channel_posterior_params, classify, gibbs_sweep, run_chain, sample_mixture,
    symbol_pair_logweights, Annealing, ChainConfig, ChainDiagnostics, ChainResult, GibbsState,
    Priors, SamplerMode,
};
use crate::harness::{run_sweep, wilson_interval, ChannelModel, ExperimentConfig};
use crate::sampling::{
    sample_categorical, sample_categorical_log, sample_cgauss, sample_dirichlet, sample_invgamma,
    standard_complex, RngStream,
};

type CheckResult = std::result::Result<(), String>;

/// A named invariant check.
pub struct Check {
    pub name: &'static str,
    pub run: fn() -> CheckResult,
}

/// The full suite in execution order.
pub fn all_checks() -> Vec<Check> {
    vec![
        Check { name: "constellation_unit_power", run: constellation_unit_power },
        Check { name: "constellation_membership_brute_force", run: membership_brute_force },
        Check { name: "constellation_set_order_insensitive", run: set_order_insensitive },
        Check { name: "convolution_matrix_structure", run: convolution_structure },
        Check { name: "raised_cosine_analytic_values", run: raised_cosine_values },
        Check { name: "rayleigh_taps_normalization", run: rayleigh_normalization },
        Check { name: "multipath_taps_normalization", run: multipath_normalization },
        Check { name: "transmit_noise_power", run: transmit_noise_power },
        Check { name: "complex_gaussian_moments", run: cgauss_moments },
        Check { name: "dirichlet_moments", run: dirichlet_moments },
        Check { name: "inverse_gamma_moments", run: invgamma_moments },
        Check { name: "categorical_goodness_of_fit", run: categorical_fit },
        Check { name: "channel_posterior_limits", run: channel_posterior_limits },
        Check { name: "symbol_weights_vs_recompute", run: symbol_weights_recompute },
        Check { name: "frozen_state_conditional_tv", run: frozen_state_tv },
        Check { name: "residual_and_count_caches", run: residual_cache_drift },
        Check { name: "state_validity_preserved", run: state_validity },
        Check { name: "conventional_mode_absorption", run: conventional_absorption },
        Check { name: "mixture_posterior_mean_identity", run: mixture_posterior_mean },
        Check { name: "classify_tie_and_scaling", run: classify_rules },
        Check { name: "annealing_endpoints", run: annealing_endpoints },
        Check { name: "chain_reproducibility", run: chain_reproducibility },
        Check { name: "sweep_worker_invariance", run: sweep_worker_invariance },
        Check { name: "wilson_interval_sanity", run: wilson_sanity },
    ]
}

/// Runs every check, reporting each outcome through the callback. Returns
/// the number of failures.
pub fn run_all(mut report: impl FnMut(&str, &CheckResult)) -> usize {
    let mut failed = 0;
    for check in all_checks() {
        let outcome = (check.run)();
        if outcome.is_err() {
            failed += 1;
        }
        report(check.name, &outcome);
    }
    failed
}

fn ensure(cond: bool, msg: impl Into<String>) -> CheckResult {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn triple_set() -> ConstellationSet {
    ConstellationSet::new(&ConstellationKind::ALL).expect("triple set")
}

fn constellation_unit_power() -> CheckResult {
    for kind in ConstellationKind::ALL {
        let c = crate::constellation::Constellation::new(kind);
        let p = c.average_power();
        ensure((p - 1.0).abs() <= 1e-12, format!("{kind}: power {p}"))?;
        for (i, &a) in c.points().iter().enumerate() {
            for &b in &c.points()[i + 1..] {
                ensure((a - b).norm() > COINCIDENCE_TOL, format!("{kind}: repeated point"))?;
            }
        }
    }
    Ok(())
}

fn membership_brute_force() -> CheckResult {
    let set = triple_set();
    set.validate().map_err(|e| e.to_string())?;
    for (pi, &p) in set.super_points().iter().enumerate() {
        let expect: Vec<usize> = set
            .members()
            .iter()
            .enumerate()
            .filter(|(_, m)| {
                m.points()
                    .iter()
                    .map(|&q| (p - q).norm())
                    .fold(f64::INFINITY, f64::min)
                    <= COINCIDENCE_TOL
            })
            .map(|(i, _)| i)
            .collect();
        ensure(
            set.membership(pi) == expect.as_slice(),
            format!("membership mismatch at super point {pi}"),
        )?;
    }
    ensure(set.super_points().len() == 24, "super point count")?;
    ensure(set.pairs().len() == 28, "pair count")
}

fn set_order_insensitive() -> CheckResult {
    let a = ConstellationSet::new(&[ConstellationKind::Qpsk, ConstellationKind::Psk8])
        .map_err(|e| e.to_string())?;
    let b = ConstellationSet::new(&[ConstellationKind::Psk8, ConstellationKind::Qpsk])
        .map_err(|e| e.to_string())?;
    ensure(a.super_points().len() == b.super_points().len(), "sizes differ")?;
    for &p in a.super_points() {
        ensure(
            b.super_points().iter().any(|&q| (p - q).norm() <= 1e-12),
            "content differs",
        )?;
    }
    Ok(())
}

fn convolution_structure() -> CheckResult {
    let mut rng = RngStream::new(1001, 0).rng();
    let (n, l) = (5, 3);
    let symbols: Vec<Complex64> = (0..n + l - 1).map(|_| standard_complex(&mut rng)).collect();
    let m = convolution_matrix(&symbols, n, l).map_err(|e| e.to_string())?;
    for k in 0..n {
        for j in 0..l {
            ensure(m[(k, j)] == symbols[k + l - 1 - j], format!("entry ({k},{j})"))?;
        }
    }
    // Unit-tap channel shifts the symbol sequence.
    for j in 0..l {
        let mut taps = vec![Complex64::new(0.0, 0.0); l];
        taps[j] = Complex64::new(1.0, 0.0);
        let taps = ChannelTaps::new(taps).map_err(|e| e.to_string())?;
        let out = apply_channel(&symbols, &taps, n);
        for k in 0..n {
            ensure(out[k] == symbols[k + l - 1 - j], format!("shift {j} row {k}"))?;
        }
    }
    Ok(())
}

fn raised_cosine_values() -> CheckResult {
    ensure(raised_cosine(0.0, 0.3, 1.0) == 1.0, "peak")?;
    for k in 1..=5 {
        let v = raised_cosine(k as f64, 0.3, 1.0);
        ensure(v.abs() <= 1e-12, format!("zero crossing at {k}T: {v}"))?;
    }
    let rolloff = 0.3;
    let t0 = 1.0 / (2.0 * rolloff);
    let x = std::f64::consts::PI * t0;
    let limit = std::f64::consts::FRAC_PI_4 * x.sin() / x;
    let at = raised_cosine(t0, rolloff, 1.0);
    ensure((at - limit).abs() <= 1e-12, format!("singular value {at} vs {limit}"))?;
    for dt in [-1e-7, 1e-7] {
        let near = raised_cosine(t0 + dt, rolloff, 1.0);
        ensure((near - at).abs() < 1e-5, format!("discontinuity near t0: {near}"))?;
    }
    Ok(())
}

fn rayleigh_normalization() -> CheckResult {
    let mut rng = RngStream::new(1002, 0).rng();
    let n = 100_000;
    let mut energy = 0.0;
    for _ in 0..n {
        energy += rayleigh_taps(&[0.0, -0.9, -4.9], &mut rng)
            .map_err(|e| e.to_string())?
            .energy();
    }
    let mean = energy / n as f64;
    ensure((mean - 1.0).abs() < 0.02, format!("E||h||^2 = {mean}"))
}

fn multipath_normalization() -> CheckResult {
    let mut rng = RngStream::new(1003, 0).rng();
    let n = 100_000;
    let mut energy = 0.0;
    for _ in 0..n {
        energy += multipath_taps(&[0.0, 1.3], &[0.0, -0.9], 0.3, 6, &mut rng)
            .map_err(|e| e.to_string())?
            .energy();
    }
    let mean = energy / n as f64;
    ensure((mean - 1.0).abs() < 0.02, format!("E||h||^2 = {mean}"))
}

fn transmit_noise_power() -> CheckResult {
    let set = triple_set();
    let sigma2 = 0.25;
    let mut rng = RngStream::new(1004, 0).rng();
    let taps = rayleigh_taps(&[0.0, -2.0], &mut rng).map_err(|e| e.to_string())?;
    let mut acc = 0.0;
    let mut count = 0usize;
    for _ in 0..100 {
        let block = transmit(&set.members()[0], &taps, sigma2, 1000, &mut rng);
        let truth = block.truth().expect("sim block");
        let clean = apply_channel(&truth.symbols, &truth.taps, block.n());
        for (r, p) in block.samples().iter().zip(&clean) {
            acc += (r - p).norm_sqr();
            count += 1;
        }
    }
    let mean = acc / count as f64;
    ensure(
        (mean - sigma2).abs() < 0.02 * sigma2,
        format!("noise power {mean} vs {sigma2}"),
    )
}

fn cgauss_moments() -> CheckResult {
    let mut rng = RngStream::new(1005, 0).rng();
    let mean = DVector::from_vec(vec![Complex64::new(0.5, -0.5), Complex64::new(0.0, 1.0)]);
    let cov = DMatrix::from_row_slice(
        2,
        2,
        &[
            Complex64::new(2.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(2.0, 0.0),
        ],
    );
    let zero = DMatrix::zeros(2, 2);
    let fixed = sample_cgauss(&mean, &zero, &mut rng).map_err(|e| e.to_string())?;
    ensure(fixed == mean, "zero covariance must return the mean")?;
    let n = 100_000;
    let mut acc = DMatrix::<Complex64>::zeros(2, 2);
    for _ in 0..n {
        let x = sample_cgauss(&mean, &cov, &mut rng).map_err(|e| e.to_string())?;
        let d = &x - &mean;
        acc += &d * d.adjoint();
    }
    let emp = acc / Complex64::new(n as f64, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            let want = cov[(i, j)].re;
            let got = emp[(i, j)].re;
            ensure(
                (got - want).abs() <= 0.05 * want.abs().max(1.0),
                format!("cov[{i},{j}] {got} vs {want}"),
            )?;
        }
    }
    Ok(())
}

fn dirichlet_moments() -> CheckResult {
    let mut rng = RngStream::new(1006, 0).rng();
    let n = 100_000;
    let conc = [2.0, 1.0, 3.0];
    let total: f64 = conc.iter().sum();
    let mut mean = [0.0; 3];
    for _ in 0..n {
        let p = sample_dirichlet(&conc, &mut rng).map_err(|e| e.to_string())?;
        ensure(
            (p.iter().sum::<f64>() - 1.0).abs() <= 1e-12,
            "simplex violation",
        )?;
        for i in 0..3 {
            mean[i] += p[i];
        }
    }
    for i in 0..3 {
        let got = mean[i] / n as f64;
        let want = conc[i] / total;
        ensure((got - want).abs() < 0.01, format!("mean[{i}] {got} vs {want}"))?;
    }
    Ok(())
}

fn invgamma_moments() -> CheckResult {
    let mut rng = RngStream::new(1007, 0).rng();
    let n = 100_000;
    let mut acc = 0.0;
    for _ in 0..n {
        acc += sample_invgamma(3.0, 4.0, &mut rng).map_err(|e| e.to_string())?;
    }
    let mean = acc / n as f64;
    ensure((mean - 2.0).abs() < 0.06, format!("mean {mean} vs 2"))?;
    // Scale equivariance under a replayed stream.
    let mut r1 = RngStream::new(1007, 1).rng();
    let mut r2 = RngStream::new(1007, 1).rng();
    for _ in 0..100 {
        let x = sample_invgamma(2.0, 1.0, &mut r1).map_err(|e| e.to_string())?;
        let y = sample_invgamma(2.0, 2.0, &mut r2).map_err(|e| e.to_string())?;
        ensure((y / x - 2.0).abs() < 1e-12, "scale family violated")?;
    }
    Ok(())
}

fn categorical_fit() -> CheckResult {
    let mut rng = RngStream::new(1008, 0).rng();
    for _ in 0..1000 {
        let i = sample_categorical(&[0.0, 5.0, 0.0], &mut rng).map_err(|e| e.to_string())?;
        ensure(i == 1, "point mass violated")?;
    }
    // Log-domain shift invariance on a replayed stream.
    let logw = [-3.0, -1.0, -2.5, -0.2];
    let shifted: Vec<f64> = logw.iter().map(|l| l - 500.0).collect();
    let mut r1 = RngStream::new(1008, 1).rng();
    let mut r2 = RngStream::new(1008, 1).rng();
    for _ in 0..10_000 {
        let a = sample_categorical_log(&logw, &mut r1).map_err(|e| e.to_string())?;
        let b = sample_categorical_log(&shifted, &mut r2).map_err(|e| e.to_string())?;
        ensure(a == b, "shift changed a draw")?;
    }
    // Chi-squared goodness of fit at significance 1e-3.
    let weights = [1.0, 2.0, 3.0];
    let n = 100_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[sample_categorical(&weights, &mut rng).map_err(|e| e.to_string())?] += 1;
    }
    let total: f64 = weights.iter().sum();
    let chi2: f64 = weights
        .iter()
        .zip(&counts)
        .map(|(&w, &c)| {
            let e = n as f64 * w / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let threshold = -2.0 * 0.001f64.ln();
    ensure(chi2 < threshold, format!("chi2 {chi2} >= {threshold}"))
}

fn channel_posterior_limits() -> CheckResult {
    let mut rng = RngStream::new(1009, 0).rng();
    let (n, l) = (12, 3);
    let s = DMatrix::from_fn(n, l, |_, _| standard_complex(&mut rng));
    let r = DVector::from_fn(n, |_, _| standard_complex(&mut rng));
    // Vague prior reproduces least squares (independent SVD route).
    let vague = Priors {
        alpha_h: 1e12,
        ..Priors::default_for(3)
    };
    let (mean, _) = channel_posterior_params(&s, &r, 0.3, &vague).map_err(|e| e.to_string())?;
    let ls = s
        .clone()
        .svd(true, true)
        .solve(&r, 1e-12)
        .map_err(|e| e.to_string())?;
    let rel = (&mean - &ls).norm() / ls.norm();
    ensure(rel < 1e-6, format!("LS limit deviation {rel}"))?;
    // No-information limit collapses to the prior.
    let tight = Priors {
        alpha_h: 10.0,
        ..Priors::default_for(3)
    };
    let (mean, cov) = channel_posterior_params(&s, &r, 1e12, &tight).map_err(|e| e.to_string())?;
    ensure(mean.norm() < 1e-6, "posterior mean should vanish")?;
    for i in 0..l {
        for j in 0..l {
            let want = if i == j { 10.0 } else { 0.0 };
            ensure(
                (cov[(i, j)].re - want).abs() < 1e-4,
                format!("prior covariance entry ({i},{j})"),
            )?;
        }
    }
    Ok(())
}

fn symbol_weights_recompute() -> CheckResult {
    let set = triple_set();
    let priors = Priors::default_for(3);
    let mut rng = RngStream::new(1010, 0).rng();
    let taps = rayleigh_taps(&[0.0, -1.0, -3.0], &mut rng).map_err(|e| e.to_string())?;
    let block = transmit(&set.members()[1], &taps, 0.3, 8, &mut rng);
    let state = GibbsState::init(&block, &set, &priors, &ChainConfig::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    for slot in 0..block.num_symbols() {
        let fast = symbol_pair_logweights(slot, &state, &block, &set, 1.0);
        // Recompute route: rebuild the touched rows per candidate pair.
        for (idx, &(p, a)) in set.pairs().iter().enumerate() {
            let mut symbols = state.symbol_values(&set);
            symbols[slot] = set.super_points()[p];
            let l = block.l();
            let sym = slot as isize - (l as isize - 1);
            let lo = sym.max(0) as usize;
            let hi = ((sym + l as isize - 1).min(block.n() as isize - 1)) as usize;
            let mut quad = 0.0;
            for k in lo..=hi {
                let mut predicted = Complex64::new(0.0, 0.0);
                for (j, h) in state.taps.taps().iter().enumerate() {
                    predicted += h * symbols[k + l - 1 - j];
                }
                quad += (block.samples()[k] - predicted).norm_sqr();
            }
            let want = state.mixture[a].ln() - (set.members()[a].size() as f64).ln()
                - quad / state.sigma2;
            ensure(
                (fast[idx] - want).abs() < 1e-9,
                format!("slot {slot} pair {idx}: {} vs {want}", fast[idx]),
            )?;
        }
    }
    Ok(())
}

fn frozen_state_tv() -> CheckResult {
    // Empirical distribution of repeated single-site draws against the
    // normalized conditional, in total variation.
    let set = triple_set();
    let priors = Priors::default_for(3);
    let mut rng = RngStream::new(1011, 0).rng();
    let taps = rayleigh_taps(&[0.0, -2.0], &mut rng).map_err(|e| e.to_string())?;
    let block = transmit(&set.members()[2], &taps, 0.5, 20, &mut rng);
    let mut state = GibbsState::init(&block, &set, &priors, &ChainConfig::default(), &mut rng)
        .map_err(|e| e.to_string())?;
    state.sigma2 = 0.5;
    let slot = 10;
    let lw = symbol_pair_logweights(slot, &state, &block, &set, 1.0);
    let max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = lw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

    let draws = 100_000;
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..draws {
        counts[sample_categorical_log(&lw, &mut rng).map_err(|e| e.to_string())?] += 1;
    }
    let tv: f64 = probs
        .iter()
        .zip(&counts)
        .map(|(&p, &c)| (p - c as f64 / draws as f64).abs())
        .sum::<f64>()
        / 2.0;
    ensure(tv < 0.01, format!("total variation {tv}"))
}

fn chain_diag(seed: u64, n: usize, l: usize) -> std::result::Result<ChainDiagnostics, String> {
    let set = triple_set();
    let priors = Priors::default_for(3);
    let config = ChainConfig::default();
    let mut rng = RngStream::new(seed, 0).rng();
    let taps = rayleigh_taps(&vec![0.0; l], &mut rng).map_err(|e| e.to_string())?;
    let block = transmit(&set.members()[0], &taps, 0.05, n, &mut rng);
    let result = run_chain(&block, &set, &priors, &config, &mut rng).map_err(|e| e.to_string())?;
    Ok(result.diagnostics)
}

fn residual_cache_drift() -> CheckResult {
    let diag = chain_diag(1012, 100, 3)?;
    ensure(
        diag.max_residual_drift <= 1e-9,
        format!("drift {}", diag.max_residual_drift),
    )
}

fn state_validity() -> CheckResult {
    let diag = chain_diag(1013, 60, 2)?;
    ensure(diag.state_valid, "state validity violated during chain")
}

fn conventional_absorption() -> CheckResult {
    let set = triple_set();
    let priors = Priors::default_for(3);
    let config = ChainConfig {
        mode: SamplerMode::Conventional,
        ..ChainConfig::default()
    };
    let mut rng = RngStream::new(1014, 0).rng();
    let taps = rayleigh_taps(&[0.0, -0.9, -4.9], &mut rng).map_err(|e| e.to_string())?;
    let block = transmit(&set.members()[2], &taps, 0.01, 60, &mut rng);
    let wrong = 1;
    let mut state = GibbsState::init_in_constellation(&block, &set, &priors, wrong, &mut rng)
        .map_err(|e| e.to_string())?;
    for sweep in 0..50 {
        gibbs_sweep(&mut state, &block, &set, &priors, &config, sweep, &mut rng)
            .map_err(|e| e.to_string())?;
        let distinct: std::collections::BTreeSet<usize> = state.labels.iter().copied().collect();
        ensure(
            distinct.len() == 1 && distinct.contains(&wrong),
            format!("labels left the initial constellation at sweep {sweep}"),
        )?;
    }
    Ok(())
}

fn mixture_posterior_mean() -> CheckResult {
    let priors = Priors::uniform_gamma(1.0, 3);
    let labels = [0usize, 0, 2];
    let want = [0.5, 1.0 / 6.0, 1.0 / 3.0];
    let mut rng = RngStream::new(1015, 0).rng();
    let draws = 100_000;
    let mut mean = [0.0; 3];
    for _ in 0..draws {
        let p = sample_mixture(&labels, &priors, &mut rng).map_err(|e| e.to_string())?;
        for i in 0..3 {
            mean[i] += p[i];
        }
    }
    for i in 0..3 {
        let got = mean[i] / draws as f64;
        // Dirichlet([3,1,2]) component variance <= 0.036; 3 standard errors.
        let se = 3.0 * (0.036f64 / draws as f64).sqrt();
        ensure(
            (got - want[i]).abs() < se.max(0.002),
            format!("mean[{i}] {got} vs {}", want[i]),
        )?;
    }
    Ok(())
}

fn classify_rules() -> CheckResult {
    let set = triple_set();
    let make = |samples: Vec<Vec<f64>>| ChainResult {
        count_samples: vec![vec![0; 3]; samples.len()],
        diagnostics: ChainDiagnostics {
            loglik: vec![],
            state_valid: true,
            max_residual_drift: 0.0,
        },
        mixture_samples: samples,
    };
    let tied = classify(&make(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]), &set)
        .map_err(|e| e.to_string())?;
    ensure(tied.estimate == 0, "tie must break to the lowest index")?;
    let raw = vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.6, 0.3]];
    let scaled: Vec<Vec<f64>> = raw
        .iter()
        .map(|s| s.iter().map(|x| x * 11.0).collect())
        .collect();
    let a = classify(&make(raw), &set).map_err(|e| e.to_string())?;
    let b = classify(&make(scaled), &set).map_err(|e| e.to_string())?;
    ensure(a.estimate == b.estimate, "argmax must be scale invariant")
}

fn annealing_endpoints() -> CheckResult {
    for schedule in [
        Annealing::linear_to_unit(10.0, 100),
        Annealing::logarithmic_to_unit(10.0, 100),
    ] {
        ensure((schedule.temperature(0) - 10.0).abs() < 1e-12, "start")?;
        ensure((schedule.temperature(100) - 1.0).abs() < 1e-12, "end")?;
        let mut prev = f64::INFINITY;
        for i in 0..=120 {
            let t = schedule.temperature(i);
            ensure(t >= 1.0 && t <= prev + 1e-12, format!("not monotone at {i}"))?;
            prev = t;
        }
    }
    ensure(Annealing::None.temperature(7) == 1.0, "no-annealing temperature")
}

fn chain_reproducibility() -> CheckResult {
    let set = triple_set();
    let priors = Priors::default_for(3);
    let config = ChainConfig {
        retained: 40,
        burn_in: 10,
        ..ChainConfig::default()
    };
    let mut rng = RngStream::new(1016, 0).rng();
    let taps = rayleigh_taps(&[0.0, -1.0], &mut rng).map_err(|e| e.to_string())?;
    let block = transmit(&set.members()[1], &taps, 0.1, 40, &mut rng);
    let run = || {
        let mut rng = RngStream::new(1016, 5).rng();
        run_chain(&block, &set, &priors, &config, &mut rng).map_err(|e| e.to_string())
    };
    let a = run()?;
    let b = run()?;
    ensure(
        a.mixture_samples == b.mixture_samples && a.count_samples == b.count_samples,
        "same stream must replay bit-identically",
    )
}

fn sweep_worker_invariance() -> CheckResult {
    let base = ExperimentConfig {
        trials: 6,
        snr_db: vec![5.0, 15.0],
        n: 24,
        channel: ChannelModel::Tapped {
            powers_db: vec![0.0, -2.0],
        },
        m: 25,
        m0: 10,
        seed: 4242,
        ..ExperimentConfig::default()
    };
    let one = run_sweep(&ExperimentConfig {
        workers: 1,
        ..base.clone()
    })
    .map_err(|e| e.to_string())?;
    let many = run_sweep(&ExperimentConfig { workers: 3, ..base }).map_err(|e| e.to_string())?;
    let strip = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| l.rsplit_once(',').map(|(h, _)| h.to_string()).unwrap_or_default())
            .collect()
    };
    ensure(
        strip(&one.to_csv()) == strip(&many.to_csv()),
        "worker count changed the results",
    )
}

fn wilson_sanity() -> CheckResult {
    for (s, n) in [(0usize, 5usize), (5, 5), (3, 7), (83, 100)] {
        let (lo, hi) = wilson_interval(s, n, 1.959963984540054);
        let p = s as f64 / n as f64;
        ensure(
            (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= p && p <= hi,
            format!("interval for ({s},{n})"),
        )?;
    }
    Ok(())
}
