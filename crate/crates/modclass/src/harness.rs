//! Monte Carlo experiment driver: SNR sweeps, PCC estimation, confusion
//! matrices, CSV output, flat-file configs, and the columnar IQ block
//! format used by the `classify` subcommand.
//!
//! Reproducibility contract: every trial derives its RNG stream from
//! `(master seed, SNR index, trial index)`, so sweep results are identical
//! for any worker count and any scheduling. The CSV is byte-identical across
//! re-runs except for the trailing wall-time column.
//!
//! # Config file format
//!
//! UTF-8 text, one `key = value` per line, `#` starts a comment, blank
//! lines ignored, unknown or duplicate keys rejected. Keys:
//!
//! ```text
//! constellations  comma-separated labels: qpsk,8psk,16qam
//! channel         tapped | two_path
//! powers_db       per-tap (tapped) or per-path (two_path) powers in dB
//! delays          two_path only: path delays in symbol periods
//! rolloff         two_path only: raised-cosine roll-off in [0, 1]
//! taps            two_path only: tap count L (tapped infers L)
//! n               block length N
//! snr_db          SNR grid in dB (SNR = 1/sigma^2)
//! trials          Monte Carlo trials per SNR point
//! m               retained samples per chain
//! m0              burn-in sweeps per chain
//! mode            latent-dirichlet | superconstellation | conventional
//! annealing       none | linear | log (cools to 1 at m0)
//! rho0            initial annealing temperature (>= 1)
//! gamma           per-component Dirichlet concentration
//! alpha           channel prior variance
//! alpha0, beta0   noise variance prior (inverse gamma)
//! seed            master seed
//! workers         worker threads (0 = all cores)
//! ```
//!
//! # IQ block format
//!
//! Whitespace-separated `index re im` lines, indices consecutive from 0;
//! `#` comments and blank lines ignored.
//!
//! # CSV schema
//!
//! `snr_db,mode,gamma,n_trials,pcc,ci_lo,ci_hi,confusion_flat,secs_per_trial`
//! where `confusion_flat` is the row-major true-by-estimated matrix joined
//! with `;`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{multipath_taps, rayleigh_taps, transmit, ChannelTaps, ReceivedBlock};
use crate::constellation::{ConstellationKind, ConstellationSet};
use crate::gibbs::{
    classify, run_chain, Annealing, ChainConfig, Classification, Priors, SamplerMode,
};
use crate::sampling::RngStream;
use crate::{Error, Result};

/// Exact CSV header emitted by [`PccTable::to_csv`].
pub const CSV_HEADER: &str =
    "snr_db,mode,gamma,n_trials,pcc,ci_lo,ci_hi,confusion_flat,secs_per_trial";

const WILSON_Z: f64 = 1.959963984540054; // 97.5% normal quantile

/// Channel model drawn independently for every trial.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelModel {
    /// Independent Rayleigh taps with the given dB power profile; `L` is the
    /// profile length.
    Tapped { powers_db: Vec<f64> },
    /// Raised-cosine multipath: Rayleigh path gains at (possibly fractional)
    /// delays, sampled at `taps` symbol-spaced instants.
    TwoPath {
        delays: Vec<f64>,
        powers_db: Vec<f64>,
        rolloff: f64,
        taps: usize,
    },
}

impl ChannelModel {
    /// Channel memory `L` implied by the model.
    pub fn l(&self) -> usize {
        match self {
            ChannelModel::Tapped { powers_db } => powers_db.len(),
            ChannelModel::TwoPath { taps, .. } => *taps,
        }
    }

    pub fn draw(&self, rng: &mut impl Rng) -> Result<ChannelTaps> {
        match self {
            ChannelModel::Tapped { powers_db } => rayleigh_taps(powers_db, rng),
            ChannelModel::TwoPath {
                delays,
                powers_db,
                rolloff,
                taps,
            } => multipath_taps(delays, powers_db, *rolloff, *taps, rng),
        }
    }
}

/// Annealing family named in a config file; the endpoint is always pinned
/// to temperature 1 at the end of burn-in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnealingKind {
    None,
    Linear,
    Logarithmic,
}

impl AnnealingKind {
    fn label(self) -> &'static str {
        match self {
            AnnealingKind::None => "none",
            AnnealingKind::Linear => "linear",
            AnnealingKind::Logarithmic => "log",
        }
    }
}

/// Full description of one Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kinds: Vec<ConstellationKind>,
    pub channel: ChannelModel,
    /// Block length `N`.
    pub n: usize,
    pub snr_db: Vec<f64>,
    /// Trials per SNR point.
    pub trials: usize,
    /// Retained samples `M`.
    pub m: usize,
    /// Burn-in sweeps `M0`.
    pub m0: usize,
    pub mode: SamplerMode,
    pub annealing: AnnealingKind,
    pub rho0: f64,
    pub gamma: f64,
    pub alpha_h: f64,
    pub alpha0: f64,
    pub beta0: f64,
    pub seed: u64,
    /// Worker threads; 0 means one per core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kinds: ConstellationKind::ALL.to_vec(),
            channel: ChannelModel::Tapped {
                powers_db: vec![0.0, -0.9, -4.9],
            },
            n: 100,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            trials: 100,
            m: 300,
            m0: 100,
            mode: SamplerMode::LatentDirichlet,
            annealing: AnnealingKind::None,
            rho0: 10.0,
            gamma: crate::gibbs::DEFAULT_GAMMA,
            alpha_h: crate::gibbs::DEFAULT_ALPHA_H,
            alpha0: crate::gibbs::DEFAULT_ALPHA0,
            beta0: crate::gibbs::DEFAULT_BETA0,
            seed: 1,
            workers: 0,
        }
    }
}

/// Canonical key order; also the processing order, so `channel` is applied
/// before the keys that depend on it.
const CONFIG_KEYS: [&str; 20] = [
    "constellations",
    "channel",
    "powers_db",
    "delays",
    "rolloff",
    "taps",
    "n",
    "snr_db",
    "trials",
    "m",
    "m0",
    "mode",
    "annealing",
    "rho0",
    "gamma",
    "alpha",
    "alpha0",
    "beta0",
    "seed",
    "workers",
];

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::ConfigParse {
        line,
        msg: format!("invalid value `{value}` for key `{key}`"),
    })
}

fn parse_list_f64(key: &str, value: &str, line: usize) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_scalar::<f64>(key, v, line))
        .collect()
}

impl ExperimentConfig {
    /// Channel memory `L`.
    pub fn l(&self) -> usize {
        self.channel.l()
    }

    /// Priors assembled for the configured candidate set. The baseline mode
    /// runs with the frequency rule, i.e. effectively `gamma = 0`.
    pub fn priors(&self) -> Priors {
        let gamma = match self.mode {
            SamplerMode::Superconstellation => 0.0,
            _ => self.gamma,
        };
        Priors {
            gamma: vec![gamma; self.kinds.len()],
            alpha_h: self.alpha_h,
            alpha0: self.alpha0,
            beta0: self.beta0,
        }
    }

    /// Effective Dirichlet concentration reported in results.
    pub fn effective_gamma(&self) -> f64 {
        match self.mode {
            SamplerMode::Superconstellation => 0.0,
            _ => self.gamma,
        }
    }

    pub fn chain_config(&self) -> ChainConfig {
        let annealing = match self.annealing {
            AnnealingKind::None => Annealing::None,
            AnnealingKind::Linear => Annealing::linear_to_unit(self.rho0, self.m0),
            AnnealingKind::Logarithmic => Annealing::logarithmic_to_unit(self.rho0, self.m0),
        };
        ChainConfig {
            retained: self.m,
            burn_in: self.m0,
            mode: self.mode,
            annealing,
            update_channel: true,
            update_noise: true,
        }
    }

    pub fn build_set(&self) -> Result<ConstellationSet> {
        ConstellationSet::new(&self.kinds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::InvalidConfig("no constellations configured".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidConfig("snr_db grid is empty".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidConfig("m must be >= 1".into()));
        }
        let l = self.l();
        if l == 0 {
            return Err(Error::InvalidConfig("channel must have at least one tap".into()));
        }
        if self.n < l {
            return Err(Error::InvalidConfig(format!(
                "block length n = {} must be >= channel memory L = {l}",
                self.n
            )));
        }
        if let ChannelModel::TwoPath {
            delays,
            powers_db,
            rolloff,
            ..
        } = &self.channel
        {
            if delays.is_empty() || delays.len() != powers_db.len() {
                return Err(Error::InvalidConfig(
                    "two_path delays and powers_db must be non-empty and equal length".into(),
                ));
            }
            if !(0.0..=1.0).contains(rolloff) {
                return Err(Error::InvalidConfig(format!(
                    "rolloff {rolloff} outside [0, 1]"
                )));
            }
        }
        if self.annealing != AnnealingKind::None && self.rho0 < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "rho0 {} must be >= 1 when annealing is enabled",
                self.rho0
            )));
        }
        self.priors().validate(self.kinds.len(), self.mode)?;
        self.chain_config().validate()?;
        Ok(())
    }

    fn set_key(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let bad = |msg: String| Error::ConfigParse { line, msg };
        match key {
            "constellations" => {
                self.kinds = value
                    .split(',')
                    .map(|v| v.trim().parse::<ConstellationKind>())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| bad(e.to_string()))?;
            }
            "channel" => match value.trim() {
                "tapped" => {
                    if let ChannelModel::TwoPath { powers_db, .. } = &self.channel {
                        self.channel = ChannelModel::Tapped {
                            powers_db: powers_db.clone(),
                        };
                    }
                }
                "two_path" => {
                    if let ChannelModel::Tapped { powers_db } = &self.channel {
                        self.channel = ChannelModel::TwoPath {
                            delays: vec![0.0, 1.3],
                            powers_db: powers_db.clone(),
                            rolloff: 0.3,
                            taps: 6,
                        };
                    }
                }
                other => return Err(bad(format!("unknown channel model `{other}`"))),
            },
            "powers_db" => {
                let v = parse_list_f64(key, value, line)?;
                match &mut self.channel {
                    ChannelModel::Tapped { powers_db } => *powers_db = v,
                    ChannelModel::TwoPath { powers_db, .. } => *powers_db = v,
                }
            }
            "delays" => match &mut self.channel {
                ChannelModel::TwoPath { delays, .. } => *delays = parse_list_f64(key, value, line)?,
                ChannelModel::Tapped { .. } => {
                    return Err(bad("key `delays` only applies to channel = two_path".into()))
                }
            },
            "rolloff" => match &mut self.channel {
                ChannelModel::TwoPath { rolloff, .. } => {
                    *rolloff = parse_scalar(key, value, line)?
                }
                ChannelModel::Tapped { .. } => {
                    return Err(bad("key `rolloff` only applies to channel = two_path".into()))
                }
            },
            "taps" => match &mut self.channel {
                ChannelModel::TwoPath { taps, .. } => *taps = parse_scalar(key, value, line)?,
                ChannelModel::Tapped { .. } => {
                    return Err(bad(
                        "key `taps` only applies to channel = two_path (tapped infers L from powers_db)"
                            .into(),
                    ))
                }
            },
            "n" => self.n = parse_scalar(key, value, line)?,
            "snr_db" => self.snr_db = parse_list_f64(key, value, line)?,
            "trials" => self.trials = parse_scalar(key, value, line)?,
            "m" => self.m = parse_scalar(key, value, line)?,
            "m0" => self.m0 = parse_scalar(key, value, line)?,
            "mode" => {
                self.mode = value
                    .parse::<SamplerMode>()
                    .map_err(|e| bad(e.to_string()))?
            }
            "annealing" => {
                self.annealing = match value.trim() {
                    "none" => AnnealingKind::None,
                    "linear" => AnnealingKind::Linear,
                    "log" | "logarithmic" => AnnealingKind::Logarithmic,
                    other => return Err(bad(format!("unknown annealing schedule `{other}`"))),
                }
            }
            "rho0" => self.rho0 = parse_scalar(key, value, line)?,
            "gamma" => self.gamma = parse_scalar(key, value, line)?,
            "alpha" => self.alpha_h = parse_scalar(key, value, line)?,
            "alpha0" => self.alpha0 = parse_scalar(key, value, line)?,
            "beta0" => self.beta0 = parse_scalar(key, value, line)?,
            "seed" => self.seed = parse_scalar(key, value, line)?,
            "workers" => self.workers = parse_scalar(key, value, line)?,
            other => {
                return Err(bad(format!("unknown key `{other}`")));
            }
        }
        Ok(())
    }

    /// Parses config text and applies command-line style overrides on top,
    /// then validates. Keys are processed in canonical order, so `channel`
    /// takes effect before its dependent keys regardless of file order.
    pub fn parse_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut entries: HashMap<String, (usize, String)> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::ConfigParse {
                line,
                msg: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim().to_string();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("unknown key `{key}`"),
                });
            }
            if let Some((prev, _)) = entries.get(&key) {
                return Err(Error::ConfigParse {
                    line,
                    msg: format!("duplicate key `{key}` (first set at line {prev})"),
                });
            }
            entries.insert(key, (line, value.trim().to_string()));
        }
        for (key, value) in overrides {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::ConfigParse {
                    line: 0,
                    msg: format!("unknown key `{key}` in override"),
                });
            }
            entries.insert(key.clone(), (0, value.clone()));
        }

        let mut cfg = ExperimentConfig::default();
        for key in CONFIG_KEYS {
            if let Some((line, value)) = entries.remove(key) {
                cfg.set_key(key, &value, line)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Canonical text form; parsing it back yields an identical config.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "# modclass experiment configuration");
        let kinds = self
            .kinds
            .iter()
            .map(|k| k.label())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "constellations = {kinds}");
        match &self.channel {
            ChannelModel::Tapped { powers_db } => {
                let _ = writeln!(s, "channel = tapped");
                let _ = writeln!(s, "powers_db = {}", list(powers_db));
            }
            ChannelModel::TwoPath {
                delays,
                powers_db,
                rolloff,
                taps,
            } => {
                let _ = writeln!(s, "channel = two_path");
                let _ = writeln!(s, "powers_db = {}", list(powers_db));
                let _ = writeln!(s, "delays = {}", list(delays));
                let _ = writeln!(s, "rolloff = {rolloff}");
                let _ = writeln!(s, "taps = {taps}");
            }
        }
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "snr_db = {}", list(&self.snr_db));
        let _ = writeln!(s, "trials = {}", self.trials);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "m0 = {}", self.m0);
        let _ = writeln!(s, "mode = {}", self.mode);
        let _ = writeln!(s, "annealing = {}", self.annealing.label());
        let _ = writeln!(s, "rho0 = {}", self.rho0);
        let _ = writeln!(s, "gamma = {}", self.gamma);
        let _ = writeln!(s, "alpha = {}", self.alpha_h);
        let _ = writeln!(s, "alpha0 = {}", self.alpha0);
        let _ = writeln!(s, "beta0 = {}", self.beta0);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }
}

/// Outcome of a single Monte Carlo trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub truth: usize,
    pub estimate: usize,
    pub scores: Vec<f64>,
    pub secs: f64,
}

type Classifier<'a> = dyn Fn(&ReceivedBlock, &ConstellationSet, &mut ChaCha8Rng) -> Result<Classification>
    + Sync
    + 'a;

fn chain_classifier<'a>(cfg: &'a ExperimentConfig) -> impl Fn(&ReceivedBlock, &ConstellationSet, &mut ChaCha8Rng) -> Result<Classification> + Sync + 'a {
    move |block, set, rng| {
        let priors = cfg.priors();
        let chain = cfg.chain_config();
        let result = run_chain(block, set, &priors, &chain, rng)?;
        classify(&result, set)
    }
}

fn run_trial_with(
    cfg: &ExperimentConfig,
    set: &ConstellationSet,
    snr_idx: usize,
    trial_idx: u64,
    classifier: &Classifier<'_>,
) -> Result<TrialOutcome> {
    let started = Instant::now();
    let stream = RngStream::new(cfg.seed, ((snr_idx as u64) << 32) | trial_idx);
    let mut rng = stream.rng();
    let sigma2 = 10f64.powf(-cfg.snr_db[snr_idx] / 10.0);
    let truth = rng.random_range(0..set.len());
    let taps = cfg.channel.draw(&mut rng)?;
    let block = transmit(&set.members()[truth], &taps, sigma2, cfg.n, &mut rng);
    let decision = classifier(&block, set, &mut rng)?;
    Ok(TrialOutcome {
        truth,
        estimate: decision.estimate,
        scores: decision.scores,
        secs: started.elapsed().as_secs_f64(),
    })
}

/// Runs one trial: draws the true constellation uniformly, synthesizes a
/// block at `sigma^2 = 10^(-snr/10)`, runs one chain and classifies. The
/// RNG stream is keyed by `(seed, snr index, trial index)`.
pub fn run_trial(
    cfg: &ExperimentConfig,
    set: &ConstellationSet,
    snr_idx: usize,
    trial_idx: u64,
) -> Result<TrialOutcome> {
    run_trial_with(cfg, set, snr_idx, trial_idx, &chain_classifier(cfg))
}

/// Aggregated results of one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct PccRow {
    pub snr_db: f64,
    pub mode: SamplerMode,
    pub gamma: f64,
    pub n_trials: usize,
    pub correct: usize,
    /// Row-major true-by-estimated counts; the total equals `n_trials`.
    pub confusion: Vec<usize>,
    pub secs_per_trial: f64,
}

impl PccRow {
    pub fn pcc(&self) -> f64 {
        self.correct as f64 / self.n_trials as f64
    }

    /// Wilson 95% interval for the PCC.
    pub fn wilson(&self) -> (f64, f64) {
        wilson_interval(self.correct, self.n_trials, WILSON_Z)
    }
}

/// Wilson score interval for a binomial proportion. The interval always
/// brackets the point estimate (rounding at the `s = 0` and `s = n`
/// boundaries is clamped) and lies in `[0, 1]`.
pub fn wilson_interval(successes: usize, total: usize, z: f64) -> (f64, f64) {
    assert!(total > 0, "empty sample");
    let n = total as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = (center - half).max(0.0).min(p);
    let hi = (center + half).min(1.0).max(p);
    (lo, hi)
}

/// One row per SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct PccTable {
    pub rows: Vec<PccRow>,
    pub num_members: usize,
}

impl PccTable {
    /// Renders the table with the exact schema in [`CSV_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let (lo, hi) = row.wilson();
            let confusion = row
                .confusion
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6},{:.6},{},{:.6}",
                row.snr_db,
                row.mode,
                row.gamma,
                row.n_trials,
                row.pcc(),
                lo,
                hi,
                confusion,
                row.secs_per_trial,
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Structural invariants: confusion totals match the trial counts and
    /// the Wilson interval brackets the estimate inside `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            if row.confusion.len() != self.num_members * self.num_members {
                return Err(Error::InvalidConfig("confusion matrix size".into()));
            }
            let total: usize = row.confusion.iter().sum();
            if total != row.n_trials {
                return Err(Error::InvalidConfig(format!(
                    "confusion total {total} != trials {}",
                    row.n_trials
                )));
            }
            let diag: usize = (0..self.num_members)
                .map(|a| row.confusion[a * self.num_members + a])
                .sum();
            if diag != row.correct {
                return Err(Error::InvalidConfig("confusion trace mismatch".into()));
            }
            let (lo, hi) = row.wilson();
            let p = row.pcc();
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || p < lo || p > hi {
                return Err(Error::InvalidConfig("Wilson interval out of order".into()));
            }
        }
        Ok(())
    }
}

fn sweep_impl(
    cfg: &ExperimentConfig,
    classifier: &Classifier<'_>,
    mut on_point: Option<&mut dyn FnMut(&PccTable) -> Result<()>>,
) -> Result<PccTable> {
    cfg.validate()?;
    let set = cfg.build_set()?;
    let num = set.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;

    let mut table = PccTable {
        rows: Vec::with_capacity(cfg.snr_db.len()),
        num_members: num,
    };
    for (snr_idx, &snr_db) in cfg.snr_db.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = pool.install(|| {
            (0..cfg.trials as u64)
                .into_par_iter()
                .map(|t| run_trial_with(cfg, &set, snr_idx, t, classifier))
                .collect::<Result<Vec<_>>>()
        })?;
        let mut confusion = vec![0usize; num * num];
        let mut correct = 0;
        let mut secs = 0.0;
        for o in &outcomes {
            confusion[o.truth * num + o.estimate] += 1;
            if o.truth == o.estimate {
                correct += 1;
            }
            secs += o.secs;
        }
        table.rows.push(PccRow {
            snr_db,
            mode: cfg.mode,
            gamma: cfg.effective_gamma(),
            n_trials: cfg.trials,
            correct,
            confusion,
            secs_per_trial: secs / cfg.trials as f64,
        });
        if let Some(cb) = on_point.as_deref_mut() {
            cb(&table)?;
        }
    }
    table.validate()?;
    Ok(table)
}

/// Runs the full trials-by-SNR grid with the Gibbs classifier, in parallel
/// across trials. The aggregate is identical for any worker count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<PccTable> {
    sweep_impl(cfg, &chain_classifier(cfg), None)
}

/// Like [`run_sweep`] but invokes the callback with the partial table after
/// every completed SNR point, so interrupted runs leave results on disk.
pub fn run_sweep_flushing(
    cfg: &ExperimentConfig,
    mut on_point: impl FnMut(&PccTable) -> Result<()>,
) -> Result<PccTable> {
    sweep_impl(cfg, &chain_classifier(cfg), Some(&mut on_point))
}

/// Sweep with an injected classifier; the harness self-test drives this
/// with a stub that reads the ground truth.
pub fn run_sweep_with_classifier(
    cfg: &ExperimentConfig,
    classifier: impl Fn(&ReceivedBlock, &ConstellationSet, &mut ChaCha8Rng) -> Result<Classification>
        + Sync,
) -> Result<PccTable> {
    sweep_impl(cfg, &classifier, None)
}

/// Writes a received block in the columnar `index re im` text format.
pub fn write_iq(block: &ReceivedBlock, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for (i, s) in block.samples().iter().enumerate() {
        let _ = writeln!(out, "{i} {} {}", s.re, s.im);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a columnar `index re im` block; indices must run consecutively
/// from zero. `l` is the channel memory the classifier should assume.
pub fn read_iq(path: impl AsRef<Path>, l: usize) -> Result<ReceivedBlock> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::IqParse {
                line,
                msg: format!("expected `index re im`, got {} fields", fields.len()),
            });
        }
        let index: usize = fields[0].parse().map_err(|_| Error::IqParse {
            line,
            msg: format!("bad index `{}`", fields[0]),
        })?;
        if index != samples.len() {
            return Err(Error::IqParse {
                line,
                msg: format!("expected index {}, got {index}", samples.len()),
            });
        }
        let re: f64 = fields[1].parse().map_err(|_| Error::IqParse {
            line,
            msg: format!("bad re value `{}`", fields[1]),
        })?;
        let im: f64 = fields[2].parse().map_err(|_| Error::IqParse {
            line,
            msg: format!("bad im value `{}`", fields[2]),
        })?;
        samples.push(Complex64::new(re, im));
    }
    ReceivedBlock::new(samples, l)
}
