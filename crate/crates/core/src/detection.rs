//! Monte Carlo detection of a Swerling-I target with a square-law
//! Neyman-Pearson detector.
//!
//! Each trial draws a symbol block, the two path reflectivities and the
//! receiver noise, then forms `|f^H y|^2` with `f` matched to the known
//! transmit block. Trials use per-index RNG substreams, so results do not
//! depend on how the work is split across threads.

use rayon::prelude::*;

use crate::channel::ChannelSet;
use crate::config_io::{complex_normal, RngFactory, ScenarioConfig, Stream};
use crate::signal::{echo_paths, matched_filter, optimal_filter_from_paths, EchoOperators, SpaceTimeFilter, SymbolBlock, SymbolKind};
use crate::{CMat, CVec, Error, Result, C64};

/// One realisation of the target-present observation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionTrial {
    pub alpha0: C64,
    pub alpha1: C64,
    pub symbols: SymbolBlock,
    pub noise: CMat,
    pub statistic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocRow {
    pub p_fa: f64,
    pub threshold: f64,
    pub p_d_empirical: f64,
    pub p_d_analytic: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub rows: Vec<RocRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Thirteen false-alarm rates spaced logarithmically over `[1e-4, 1e-1]`.
pub fn default_p_fa_grid() -> Vec<f64> {
    (0..13).map(|i| 10f64.powf(-4.0 + i as f64 * 0.25)).collect()
}

/// `-sigma_z^2 ln p_fa`: the exponential tail of `|f^H z|^2` with `||f|| = 1`.
pub fn np_threshold(p_fa: f64, sigma_z_sq: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::InvalidArgument(format!("p_fa must lie in (0, 1), got {p_fa}")));
    }
    Ok(-sigma_z_sq * p_fa.ln())
}

/// `p_fa^(1 / (1 + snr_eff))`.
pub fn analytic_pd(p_fa: f64, snr_eff: f64) -> f64 {
    p_fa.powf(1.0 / (1.0 + snr_eff))
}

/// Receive filter for a realised block: matched to the variance-weighted echo
/// when that is non-zero, otherwise to the unweighted echo, otherwise a fixed
/// unit vector (no echo at all).
fn receive_filter(a0: &CMat, a1: &CMat, cfg: &ScenarioConfig) -> SpaceTimeFilter {
    optimal_filter_from_paths(a0, a1, cfg)
        .or_else(|_| matched_filter(a0 + a1))
        .unwrap_or_else(|_| {
            let mut f = CMat::zeros(a0.nrows(), a0.ncols());
            if !f.is_empty() {
                f[(0, 0)] = C64::new(1.0, 0.0);
            }
            SpaceTimeFilter { f }
        })
}

fn noise_block(rng: &mut Stream, m: usize, q: usize, sigma_z_sq: f64) -> CMat {
    CMat::from_fn(m, q, |_, _| complex_normal(rng, sigma_z_sq))
}

/// Draws trial `index` of the target-present model.
pub fn draw_trial(
    w: &CMat,
    ops: &EchoOperators,
    cfg: &ScenarioConfig,
    factory: &RngFactory,
    index: u64,
) -> (DetectionTrial, f64) {
    let mut rng = factory.indexed("detection.trial", index);
    let symbols = SymbolBlock::draw(&mut rng, cfg.k, cfg.m, cfg.l, SymbolKind::Gaussian);
    let (a0, a1) = echo_paths(w, ops, &symbols, cfg);
    let f = receive_filter(&a0, &a1, cfg);
    let alpha0 = complex_normal(&mut rng, cfg.sigma0_sq);
    let alpha1 = complex_normal(&mut rng, cfg.sigma1_sq);
    let noise = noise_block(&mut rng, cfg.m, cfg.q(), cfg.sigma_z_sq());
    let y = &a0 * alpha0 + &a1 * alpha1 + &noise;
    let statistic = f.apply(&y).norm_sqr();
    let snr_eff = (cfg.sigma0_sq * f.apply(&a0).norm_sqr() + cfg.sigma1_sq * f.apply(&a1).norm_sqr()) / cfg.sigma_z_sq();
    (
        DetectionTrial {
            alpha0,
            alpha1,
            symbols,
            noise,
            statistic,
        },
        snr_eff,
    )
}

/// Empirical and analytic detection probability at every `p_fa` in the grid,
/// using the same `n_trials` draws for every grid point.
pub fn run_roc(
    w: &CMat,
    phi: &CVec,
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    p_fa_grid: &[f64],
    n_trials: usize,
    factory: &RngFactory,
) -> Result<RocCurve> {
    let thresholds: Vec<f64> = p_fa_grid.iter().map(|&p| np_threshold(p, cfg.sigma_z_sq())).collect::<Result<_>>()?;
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be positive".into()));
    }
    let ops = EchoOperators::new(channels, phi);
    let draws: Vec<(f64, f64)> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let (trial, snr_eff) = draw_trial(w, &ops, cfg, factory, t);
            (trial.statistic, snr_eff)
        })
        .collect();
    let rows = p_fa_grid
        .iter()
        .zip(&thresholds)
        .map(|(&p_fa, &threshold)| {
            let hits = draws.iter().filter(|(s, _)| *s > threshold).count();
            let analytic: f64 = draws.iter().map(|(_, e)| analytic_pd(p_fa, *e)).sum();
            RocRow {
                p_fa,
                threshold,
                p_d_empirical: hits as f64 / n_trials as f64,
                p_d_analytic: analytic / n_trials as f64,
                trials: n_trials,
            }
        })
        .collect();
    Ok(RocCurve { rows })
}

/// Empirical false-alarm rate of the thresholds for `p_fa_grid` over
/// `n_trials` noise-only blocks, observed through a fixed random unit filter.
pub fn false_alarm_rates(cfg: &ScenarioConfig, p_fa_grid: &[f64], n_trials: usize, factory: &RngFactory) -> Result<Vec<f64>> {
    let thresholds: Vec<f64> = p_fa_grid.iter().map(|&p| np_threshold(p, cfg.sigma_z_sq())).collect::<Result<_>>()?;
    let (m, q) = (cfg.m, cfg.q());
    let f = matched_filter(noise_block(&mut factory.stream("detection.null_filter"), m, q, 1.0))?;
    const CHUNK: u64 = 4096;
    let chunks = (n_trials as u64).div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = factory.indexed("detection.null", c);
            let mut hits = vec![0usize; thresholds.len()];
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(n_trials as u64);
            for _ in lo..hi {
                let s = f.apply(&noise_block(&mut rng, m, q, cfg.sigma_z_sq())).norm_sqr();
                for (h, t) in hits.iter_mut().zip(&thresholds) {
                    *h += usize::from(s > *t);
                }
            }
            hits
        })
        .reduce(
            || vec![0usize; thresholds.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    Ok(counts.into_iter().map(|h| h as f64 / n_trials as f64).collect())
}

/// Sample mean and standard error of `|f^H (alpha0 A0 + alpha1 A1)|^2 / sigma_z^2`
/// over joint symbol and reflectivity draws, with `f` matched to the realised
/// echo of each draw.
pub fn mc_snr_estimate(
    w: &CMat,
    phi: &CVec,
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    n_trials: usize,
    factory: &RngFactory,
) -> SnrEstimate {
    let ops = EchoOperators::new(channels, phi);
    let samples: Vec<f64> = (0..n_trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = factory.indexed("detection.snr", t);
            let symbols = SymbolBlock::draw(&mut rng, cfg.k, cfg.m, cfg.l, SymbolKind::Gaussian);
            let (a0, a1) = echo_paths(w, &ops, &symbols, cfg);
            let alpha0 = complex_normal(&mut rng, cfg.sigma0_sq);
            let alpha1 = complex_normal(&mut rng, cfg.sigma1_sq);
            // the matched filter collects the whole echo energy
            (a0 * alpha0 + a1 * alpha1).norm_squared() / cfg.sigma_z_sq()
        })
        .collect();
    mean_and_error(&samples)
}

fn mean_and_error(samples: &[f64]) -> SnrEstimate {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return SnrEstimate { mean: 0.0, std_error: 0.0 };
    }
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    SnrEstimate {
        mean,
        std_error: (var / n).sqrt(),
    }
}

/// Binomial standard deviation of an empirical rate with success
/// probability `p` over `n` trials.
pub fn binomial_sigma(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
