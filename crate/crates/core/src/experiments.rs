//! The convergence, RCS-split, element-count and ROC experiments, each
//! producing one CSV table.
//!
//! Cells run in parallel; every cell derives its randomness from its own seed,
//! and rows are sorted by their key columns before they are returned.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::admm::{optimize, optimize_w_only, SolveReport};
use crate::channel::{synthesize_channels, ChannelSet};
use crate::config_io::{Field, RngFactory, ScenarioConfig, Table};
use crate::detection::{run_roc, RocRow};
use crate::manifold::{random_phases, riemannian_ascent};
use crate::{CMat, CVec, Error, Result};

/// Independent random phase draws averaged by the random-RIS baseline.
pub const RANDOM_RIS_DRAWS: usize = 10;
/// The two path variances of the RCS sweep always sum to this.
pub const RCS_TOTAL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodTag {
    Proposed,
    RandomRis,
    NoRis,
}

impl MethodTag {
    pub const ALL: [MethodTag; 3] = [MethodTag::Proposed, MethodTag::RandomRis, MethodTag::NoRis];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodTag::Proposed => "proposed",
            MethodTag::RandomRis => "random_ris",
            MethodTag::NoRis => "no_ris",
        }
    }
}

impl fmt::Display for MethodTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodTag::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// One swept parameter with its values, the seeds evaluated at every value
/// and fixed overrides applied first.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub overrides: Vec<(String, f64)>,
}

impl SweepSpec {
    pub fn new(parameter: &str, values: Vec<f64>, seeds: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(format!("sweep over {parameter} has no values")));
        }
        if seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        apply_override(&mut ScenarioConfig::reference(), parameter, values[0])?;
        Ok(Self {
            parameter: parameter.to_string(),
            values,
            seeds,
            overrides: Vec::new(),
        })
    }

    pub fn with_override(mut self, key: &str, value: f64) -> Result<Self> {
        apply_override(&mut ScenarioConfig::reference(), key, value)?;
        self.overrides.push((key.to_string(), value));
        Ok(self)
    }

    /// The configuration of one `(value, seed)` cell.
    pub fn cell(&self, base: &ScenarioConfig, value: f64, seed: u64) -> Result<ScenarioConfig> {
        let mut cfg = base.clone();
        for (k, v) in &self.overrides {
            apply_override(&mut cfg, k, *v)?;
        }
        apply_override(&mut cfg, &self.parameter, value)?;
        cfg.seed = seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Sets one scalar configuration key. `rcs.sigma1_sq` also sets
/// `sigma0_sq = 2 - sigma1_sq`; `power.gamma_db` sets every user.
pub fn apply_override(cfg: &mut ScenarioConfig, key: &str, value: f64) -> Result<()> {
    match key {
        "rcs.sigma1_sq" => {
            if !(value > 0.0 && value < RCS_TOTAL) {
                return Err(Error::InvalidArgument(format!("sigma1_sq must lie in (0, 2), got {value}")));
            }
            cfg.sigma1_sq = value;
            cfg.sigma0_sq = RCS_TOTAL - value;
        }
        "power.P_watts" => cfg.power_w = value,
        "power.gamma_db" => cfg.set_uniform_gamma_db(value),
        "system.N" => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("N must be a non-negative integer, got {value}")));
            }
            cfg.n = value as usize;
        }
        _ => return Err(Error::InvalidArgument(format!("cannot sweep {key}"))),
    }
    Ok(())
}

/// A solved cell: the beamformer, the phases and the resulting SNR. For the
/// random-RIS baseline the lists hold one entry per phase draw and `snr` is
/// their mean.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub designs: Vec<(CMat, CVec)>,
    pub snr: f64,
    pub reports: Vec<SolveReport>,
}

impl MethodOutcome {
    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr.log10()
    }
}

fn no_ris_setup(cfg: &ScenarioConfig, channels: &ChannelSet) -> (ScenarioConfig, ChannelSet) {
    let mut c = cfg.clone();
    c.n = 0;
    (c, channels.without_ris())
}

/// Runs `method` on one channel realisation; randomness comes from
/// `cfg.seed`.
pub fn solve_method(cfg: &ScenarioConfig, channels: &ChannelSet, method: MethodTag) -> Result<MethodOutcome> {
    let factory = RngFactory::new(cfg.seed);
    match method {
        MethodTag::Proposed => {
            let phi0 = riemannian_ascent(channels, cfg, &mut factory.stream("manifold_init")).phi;
            let (state, report) = optimize(cfg, channels, &phi0)?;
            Ok(MethodOutcome {
                snr: report.final_snr,
                designs: vec![(state.w, state.phi)],
                reports: vec![report],
            })
        }
        MethodTag::RandomRis => {
            let mut designs = Vec::with_capacity(RANDOM_RIS_DRAWS);
            let mut reports = Vec::with_capacity(RANDOM_RIS_DRAWS);
            let mut total = 0.0;
            for d in 0..RANDOM_RIS_DRAWS as u64 {
                let phi = random_phases(&mut factory.indexed("random_ris", d), channels.n());
                let (w, report) = optimize_w_only(cfg, channels, &phi)?;
                total += report.final_snr;
                designs.push((w, phi));
                reports.push(report);
            }
            Ok(MethodOutcome {
                snr: total / RANDOM_RIS_DRAWS as f64,
                designs,
                reports,
            })
        }
        MethodTag::NoRis => {
            let (c, ch) = no_ris_setup(cfg, channels);
            let (w, report) = optimize_w_only(&c, &ch, &CVec::zeros(0))?;
            Ok(MethodOutcome {
                snr: report.final_snr,
                designs: vec![(w, CVec::zeros(0))],
                reports: vec![report],
            })
        }
    }
}

/// Channel realisation of `cfg` under its own seed.
pub fn channels_for(cfg: &ScenarioConfig) -> Result<ChannelSet> {
    synthesize_channels(cfg, &RngFactory::new(cfg.seed))
}

fn compare_fields(a: &Field, b: &Field) -> Ordering {
    match (a, b) {
        (Field::Int(x), Field::Int(y)) => x.cmp(y),
        (Field::Float(x), Field::Float(y)) => x.total_cmp(y),
        (Field::Text(x), Field::Text(y)) => x.cmp(y),
        (Field::Int(x), Field::Float(y)) => (*x as f64).total_cmp(y),
        (Field::Float(x), Field::Int(y)) => x.total_cmp(&(*y as f64)),
        (Field::Text(_), _) => Ordering::Greater,
        (_, Field::Text(_)) => Ordering::Less,
    }
}

/// Sorts rows by the named key columns, in order.
pub fn sort_rows(table: &mut Table, keys: &[&str]) {
    let idx: Vec<usize> = keys.iter().map(|k| table.column(k).expect("key column")).collect();
    table.rows.sort_by(|a, b| {
        idx.iter()
            .map(|&i| compare_fields(&a[i], &b[i]))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
}

fn with_seed(cfg: &ScenarioConfig, seed: u64) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.seed = seed;
    c
}

/// One proposed-method trace per seed: `{seed, iter, snr_db, consensus_gap}`.
pub fn cmd_convergence(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<(Table, Vec<SolveReport>)> {
    let reports: Vec<SolveReport> = seeds
        .par_iter()
        .map(|&seed| {
            let c = with_seed(cfg, seed);
            let ch = channels_for(&c)?;
            let mut out = solve_method(&c, &ch, MethodTag::Proposed)?;
            Ok(out.reports.remove(0))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("convergence", &["seed", "iter", "snr_db", "consensus_gap"]);
    for (seed, rep) in seeds.iter().zip(&reports) {
        for r in &rep.records {
            t.push(vec![(*seed).into(), r.iter.into(), r.snr_db.into(), r.consensus_gap.into()]);
        }
    }
    sort_rows(&mut t, &["seed", "iter"]);
    Ok((t, reports))
}

/// SNR over the split `sigma0^2 + sigma1^2 = 2`:
/// `{sigma1_sq, method, power_w, seed, snr_db}`.
pub fn cmd_sweep_rcs(
    cfg: &ScenarioConfig,
    sigma1_sq_list: &[f64],
    methods: &[MethodTag],
    powers: &[f64],
    seeds: &[u64],
) -> Result<Table> {
    let spec = SweepSpec::new("rcs.sigma1_sq", sigma1_sq_list.to_vec(), seeds.to_vec())?;
    if methods.is_empty() || powers.is_empty() {
        return Err(Error::InvalidArgument("empty method or power list".into()));
    }
    let mut cells = Vec::new();
    for &s1 in &spec.values {
        for &m in methods {
            for &p in powers {
                for &seed in &spec.seeds {
                    cells.push((s1, m, p, seed));
                }
            }
        }
    }
    let rows: Vec<Vec<Field>> = cells
        .par_iter()
        .map(|&(s1, m, p, seed)| {
            let mut c = spec.cell(cfg, s1, seed)?;
            apply_override(&mut c, "power.P_watts", p)?;
            c.validate()?;
            let ch = channels_for(&c)?;
            let out = solve_method(&c, &ch, m)?;
            Ok(vec![s1.into(), m.as_str().into(), p.into(), seed.into(), out.snr_db().into()])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("sweep_rcs", &["sigma1_sq", "method", "power_w", "seed", "snr_db"]);
    for r in rows {
        t.push(r);
    }
    sort_rows(&mut t, &["sigma1_sq", "method", "power_w", "seed"]);
    Ok(t)
}

/// Proposed-method SNR over RIS size and SINR requirement:
/// `{N, gamma_db, seed, snr_db}`.
pub fn cmd_sweep_elements(cfg: &ScenarioConfig, n_list: &[usize], gamma_list: &[f64], seeds: &[u64]) -> Result<Table> {
    if n_list.contains(&0) {
        return Err(Error::InvalidArgument("element counts must be positive".into()));
    }
    let spec = SweepSpec::new("system.N", n_list.iter().map(|&n| n as f64).collect(), seeds.to_vec())?;
    if gamma_list.is_empty() {
        return Err(Error::InvalidArgument("empty gamma list".into()));
    }
    let mut cells = Vec::new();
    for &n in &spec.values {
        for &g in gamma_list {
            for &seed in &spec.seeds {
                cells.push((n, g, seed));
            }
        }
    }
    let rows: Vec<Vec<Field>> = cells
        .par_iter()
        .map(|&(n, g, seed)| {
            let mut c = spec.cell(cfg, n, seed)?;
            apply_override(&mut c, "power.gamma_db", g)?;
            let ch = channels_for(&c)?;
            let out = solve_method(&c, &ch, MethodTag::Proposed)?;
            Ok(vec![(n as usize).into(), g.into(), seed.into(), out.snr_db().into()])
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("sweep_elements", &["N", "gamma_db", "seed", "snr_db"]);
    for r in rows {
        t.push(r);
    }
    sort_rows(&mut t, &["N", "gamma_db", "seed"]);
    Ok(t)
}

/// ROC of `method` on one realisation. The random-RIS baseline spreads the
/// trials evenly over its phase draws and averages the curves.
pub fn method_roc(
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    outcome: &MethodOutcome,
    method: MethodTag,
    p_fa_grid: &[f64],
    trials: usize,
) -> Result<Vec<RocRow>> {
    let (c, ch) = match method {
        MethodTag::NoRis => no_ris_setup(cfg, channels),
        _ => (cfg.clone(), channels.clone()),
    };
    let draws = outcome.designs.len();
    let per = trials.div_ceil(draws);
    let mut acc: Vec<RocRow> = Vec::new();
    for (d, (w, phi)) in outcome.designs.iter().enumerate() {
        let factory = RngFactory::new(cfg.seed ^ ((d as u64) << 32));
        let curve = run_roc(w, phi, &c, &ch, p_fa_grid, per, &factory)?;
        if acc.is_empty() {
            acc = curve.rows;
        } else {
            for (a, r) in acc.iter_mut().zip(&curve.rows) {
                a.p_d_empirical += r.p_d_empirical;
                a.p_d_analytic += r.p_d_analytic;
                a.trials += r.trials;
            }
        }
    }
    for a in &mut acc {
        a.p_d_empirical /= draws as f64;
        a.p_d_analytic /= draws as f64;
    }
    Ok(acc)
}

/// Detection curves per method and seed:
/// `{method, seed, p_fa, p_d_empirical, p_d_analytic}`.
pub fn cmd_roc(cfg: &ScenarioConfig, methods: &[MethodTag], p_fa_grid: &[f64], trials: usize, seeds: &[u64]) -> Result<Table> {
    if seeds.is_empty() || methods.is_empty() {
        return Err(Error::InvalidArgument("empty method or seed list".into()));
    }
    let mut cells = Vec::new();
    for &m in methods {
        for &seed in seeds {
            cells.push((m, seed));
        }
    }
    let rows: Vec<Vec<Vec<Field>>> = cells
        .par_iter()
        .map(|&(m, seed)| {
            let c = with_seed(cfg, seed);
            let ch = channels_for(&c)?;
            let out = solve_method(&c, &ch, m)?;
            let roc = method_roc(&c, &ch, &out, m, p_fa_grid, trials)?;
            Ok(roc
                .iter()
                .map(|r| vec![m.as_str().into(), seed.into(), r.p_fa.into(), r.p_d_empirical.into(), r.p_d_analytic.into()])
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("roc", &["method", "seed", "p_fa", "p_d_empirical", "p_d_analytic"]);
    for r in rows.into_iter().flatten() {
        t.push(r);
    }
    sort_rows(&mut t, &["method", "seed", "p_fa"]);
    Ok(t)
}

/// Per-iteration trace of one solve:
/// `{iter, snr_db, min_sinr_margin_db, consensus_gap, al_value}`.
pub fn trace_table(report: &SolveReport) -> Table {
    let mut t = Table::new("optimize", &["iter", "snr_db", "min_sinr_margin_db", "consensus_gap", "al_value"]);
    for r in &report.records {
        t.push(vec![
            r.iter.into(),
            r.snr_db.into(),
            r.min_sinr_margin_db.into(),
            r.consensus_gap.into(),
            r.al_value.into(),
        ]);
    }
    t
}

/// The returned design: `{stream, antenna, re, im}` and `{element, re, im}`.
pub fn design_tables(w: &CMat, phi: &CVec) -> (Table, Table) {
    let mut tw = Table::new("beamformer", &["stream", "antenna", "re", "im"]);
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            tw.push(vec![j.into(), i.into(), w[(i, j)].re.into(), w[(i, j)].im.into()]);
        }
    }
    let mut tp = Table::new("phases", &["element", "re", "im"]);
    for (n, z) in phi.iter().enumerate() {
        tp.push(vec![n.into(), z.re.into(), z.im.into()]);
    }
    (tw, tp)
}
