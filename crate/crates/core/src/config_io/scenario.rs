use std::fmt::Write as _;

use thiserror::Error;
use toml::{Table, Value};

/// Problems found while reading a scenario document. Every variant names the
/// offending key.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed config document: {0}")]
    Syntax(String),
    #[error("missing key {0}")]
    MissingKey(String),
    #[error("key {key}: expected {expected}")]
    WrongType { key: String, expected: &'static str },
    #[error("key {0} must be positive")]
    NonPositive(String),
    #[error("key {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("tau must be < L (system.tau = {tau}, system.L = {l})")]
    TauNotLessThanL { tau: usize, l: usize },
    #[error("power.gamma_db has {got} entries but system.K = {expected}")]
    GammaLength { expected: usize, got: usize },
}

/// Link distances in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub d_bt: f64,
    pub d_br: f64,
    pub d_bu: f64,
    pub d_rt: f64,
    pub d_ru: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathLossExponents {
    pub alpha_br: f64,
    pub alpha_ru: f64,
    pub alpha_bu: f64,
    pub alpha_bt: f64,
    pub alpha_rt: f64,
    /// Reference loss at 1 m, in dB.
    pub pl0_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RicianFactors {
    pub beta_br_db: f64,
    /// `None` is the pure line-of-sight limit.
    pub beta_bt_db: Option<f64>,
    pub beta_other_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverControls {
    pub rho: f64,
    pub tol_outer: f64,
    pub tol_inner: f64,
    pub max_outer_iters: usize,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            rho: 1.0,
            tol_outer: 1e-4,
            tol_inner: 1e-7,
            max_outer_iters: 50,
        }
    }
}

/// One simulation scenario. Decibel quantities are kept as written; the
/// linear-scale values used by all computations come from the accessor
/// methods.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// BS antennas.
    pub m: usize,
    /// RIS elements; 0 disables the RIS.
    pub n: usize,
    /// Downlink users.
    pub k: usize,
    /// Pulse length in slots.
    pub l: usize,
    /// Relative delay of the RIS path in samples.
    pub tau: usize,
    pub power_w: f64,
    pub gamma_db: Vec<f64>,
    pub sigma0_sq: f64,
    pub sigma1_sq: f64,
    pub radar_noise_dbm: f64,
    pub user_noise_dbm: f64,
    pub geometry: Geometry,
    pub pathloss: PathLossExponents,
    pub rician: RicianFactors,
    pub solver: SolverControls,
    pub seed: u64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ScenarioConfig {
    /// The simulation setup of the reference scenario: 16 antennas, 64 RIS
    /// elements, 4 users, 64-slot pulse delayed by 16 samples on the RIS path.
    pub fn reference() -> Self {
        Self {
            m: 16,
            n: 64,
            k: 4,
            l: 64,
            tau: 16,
            power_w: 30.0,
            gamma_db: vec![10.0; 4],
            sigma0_sq: 1.0,
            sigma1_sq: 1.0,
            radar_noise_dbm: -80.0,
            user_noise_dbm: -80.0,
            geometry: Geometry {
                d_bt: 50.0,
                d_br: 40.0,
                d_bu: 36.0,
                d_rt: 25.0,
                d_ru: 3.0,
            },
            pathloss: PathLossExponents {
                alpha_br: 2.0,
                alpha_ru: 2.4,
                alpha_bu: 2.7,
                alpha_bt: 2.0,
                alpha_rt: 2.0,
                pl0_db: -30.0,
            },
            rician: RicianFactors {
                beta_br_db: 5.0,
                beta_bt_db: None,
                beta_other_db: 0.0,
            },
            solver: SolverControls::default(),
            seed: 0,
        }
    }

    /// Snapshot count `Q = L + tau`.
    pub fn q(&self) -> usize {
        self.l + self.tau
    }

    /// Number of beamformer columns, `K + M`.
    pub fn streams(&self) -> usize {
        self.k + self.m
    }

    pub fn sigma_z_sq(&self) -> f64 {
        dbm_to_watts(self.radar_noise_dbm)
    }

    pub fn sigma_k_sq(&self) -> f64 {
        dbm_to_watts(self.user_noise_dbm)
    }

    pub fn gamma_linear(&self, k: usize) -> f64 {
        db_to_linear(self.gamma_db[k])
    }

    /// Sets all users to the same SINR requirement.
    pub fn set_uniform_gamma_db(&mut self, gamma_db: f64) {
        self.gamma_db = vec![gamma_db; self.k];
    }

    /// Checks every invariant that `parse_config` enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, v) in [("system.M", self.m), ("system.L", self.l)] {
            if v == 0 {
                return Err(ConfigError::NonPositive(key.into()));
            }
        }
        if self.tau >= self.l {
            return Err(ConfigError::TauNotLessThanL {
                tau: self.tau,
                l: self.l,
            });
        }
        if self.gamma_db.len() != self.k {
            return Err(ConfigError::GammaLength {
                expected: self.k,
                got: self.gamma_db.len(),
            });
        }
        let g = &self.geometry;
        let positives = [
            ("power.P_watts", self.power_w),
            ("rcs.sigma0_sq", self.sigma0_sq),
            ("rcs.sigma1_sq", self.sigma1_sq),
            ("geometry.d_Bt", g.d_bt),
            ("geometry.d_BR", g.d_br),
            ("geometry.d_BU", g.d_bu),
            ("geometry.d_Rt", g.d_rt),
            ("geometry.d_RU", g.d_ru),
            ("solver.rho", self.solver.rho),
            ("solver.tol_outer", self.solver.tol_outer),
            ("solver.tol_inner", self.solver.tol_inner),
        ];
        for (key, v) in positives {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::NonPositive(key.into()));
            }
        }
        for (key, d) in [
            ("geometry.d_Bt", g.d_bt),
            ("geometry.d_BR", g.d_br),
            ("geometry.d_BU", g.d_bu),
            ("geometry.d_Rt", g.d_rt),
            ("geometry.d_RU", g.d_ru),
        ] {
            if d < 1.0 {
                return Err(ConfigError::Invalid {
                    key: key.into(),
                    reason: "distance must be at least 1 m".into(),
                });
            }
        }
        if self.solver.max_outer_iters == 0 {
            return Err(ConfigError::NonPositive("solver.max_outer_iters".into()));
        }
        Ok(())
    }

    /// Serialises to the same document layout `parse_config` reads.
    pub fn to_toml_string(&self) -> String {
        let mut s = String::new();
        let g = &self.geometry;
        let p = &self.pathloss;
        let r = &self.rician;
        let c = &self.solver;
        let gammas: Vec<String> = self.gamma_db.iter().map(|v| float(*v)).collect();
        let beta_bt = match r.beta_bt_db {
            Some(v) => float(v),
            None => "\"infinite\"".to_string(),
        };
        let _ = writeln!(s, "[system]");
        let _ = writeln!(s, "M = {}\nN = {}\nK = {}\nL = {}\ntau = {}\n", self.m, self.n, self.k, self.l, self.tau);
        let _ = writeln!(s, "[power]");
        let _ = writeln!(s, "P_watts = {}\ngamma_db = [{}]\n", float(self.power_w), gammas.join(", "));
        let _ = writeln!(s, "[rcs]");
        let _ = writeln!(s, "sigma0_sq = {}\nsigma1_sq = {}\n", float(self.sigma0_sq), float(self.sigma1_sq));
        let _ = writeln!(s, "[noise]");
        let _ = writeln!(s, "radar_dbm = {}\nuser_dbm = {}\n", float(self.radar_noise_dbm), float(self.user_noise_dbm));
        let _ = writeln!(s, "[geometry]");
        let _ = writeln!(
            s,
            "d_Bt = {}\nd_BR = {}\nd_BU = {}\nd_Rt = {}\nd_RU = {}\n",
            float(g.d_bt),
            float(g.d_br),
            float(g.d_bu),
            float(g.d_rt),
            float(g.d_ru)
        );
        let _ = writeln!(s, "[pathloss]");
        let _ = writeln!(
            s,
            "alpha_BR = {}\nalpha_RU = {}\nalpha_BU = {}\nalpha_Bt = {}\nalpha_Rt = {}\npl0_db_at_1m = {}\n",
            float(p.alpha_br),
            float(p.alpha_ru),
            float(p.alpha_bu),
            float(p.alpha_bt),
            float(p.alpha_rt),
            float(p.pl0_db)
        );
        let _ = writeln!(s, "[rician]");
        let _ = writeln!(
            s,
            "beta_BR_db = {}\nbeta_Bt_db = {}\nbeta_other_db = {}\n",
            float(r.beta_br_db),
            beta_bt,
            float(r.beta_other_db)
        );
        let _ = writeln!(s, "[solver]");
        let _ = writeln!(
            s,
            "rho = {}\ntol_outer = {}\ntol_inner = {}\nmax_outer_iters = {}\n",
            float(c.rho),
            float(c.tol_outer),
            float(c.tol_inner),
            c.max_outer_iters
        );
        let _ = writeln!(s, "[run]");
        // TOML integers are signed 64-bit
        if i64::try_from(self.seed).is_ok() {
            let _ = writeln!(s, "seed = {}", self.seed);
        } else {
            let _ = writeln!(s, "seed = \"{}\"", self.seed);
        }
        s
    }
}

/// Shortest round-trip float text that TOML reads back as a float.
fn float(v: f64) -> String {
    let s = format!("{v:?}");
    if s.contains(['.', 'e', 'E', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

struct Doc<'a> {
    root: &'a Table,
}

impl<'a> Doc<'a> {
    fn lookup(&self, key: &str) -> Option<&'a Value> {
        let (section, name) = key.split_once('.').expect("dotted key");
        self.root.get(section)?.as_table()?.get(name)
    }

    fn require(&self, key: &str) -> Result<&'a Value, ConfigError> {
        self.lookup(key)
            .ok_or_else(|| ConfigError::MissingKey(key.to_string()))
    }

    fn number(v: &Value, key: &str) -> Result<f64, ConfigError> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::WrongType {
                key: key.into(),
                expected: "a number",
            }),
        }
    }

    fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        Self::number(self.require(key)?, key)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        match self.lookup(key) {
            Some(v) => Self::number(v, key),
            None => Ok(default),
        }
    }

    fn int(v: &Value, key: &str) -> Result<i64, ConfigError> {
        v.as_integer().ok_or_else(|| ConfigError::WrongType {
            key: key.into(),
            expected: "an integer",
        })
    }

    fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let i = Self::int(self.require(key)?, key)?;
        usize::try_from(i).map_err(|_| ConfigError::Invalid {
            key: key.into(),
            reason: format!("must be a non-negative integer, got {i}"),
        })
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        match self.lookup(key) {
            Some(_) => self.usize(key),
            None => Ok(default),
        }
    }
}

/// Parses and validates a scenario document.
///
/// Solver controls, the sensing-link exponents `alpha_Bt`/`alpha_Rt`, the
/// reference loss `pl0_db_at_1m` and `run.seed` fall back to defaults; every
/// other key is required.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
    let doc = Doc { root: &root };

    let m = doc.usize("system.M")?;
    if m == 0 {
        return Err(ConfigError::NonPositive("system.M".into()));
    }
    let n = doc.usize("system.N")?;
    let k = doc.usize("system.K")?;
    let l = doc.usize("system.L")?;
    if l == 0 {
        return Err(ConfigError::NonPositive("system.L".into()));
    }
    let tau = doc.usize("system.tau")?;
    if tau >= l {
        return Err(ConfigError::TauNotLessThanL { tau, l });
    }

    let gamma_db = match doc.require("power.gamma_db")? {
        Value::Array(items) => items
            .iter()
            .map(|v| Doc::number(v, "power.gamma_db"))
            .collect::<Result<Vec<_>, _>>()?,
        v => vec![Doc::number(v, "power.gamma_db")?],
    };
    if gamma_db.len() != k {
        return Err(ConfigError::GammaLength {
            expected: k,
            got: gamma_db.len(),
        });
    }

    let beta_bt_db = match doc.require("rician.beta_Bt_db")? {
        Value::String(s) if matches!(s.to_ascii_lowercase().as_str(), "infinite" | "inf" | "infinity") => None,
        Value::Float(f) if f.is_infinite() && *f > 0.0 => None,
        v => Some(Doc::number(v, "rician.beta_Bt_db")?),
    };

    let defaults = SolverControls::default();
    let seed = match doc.lookup("run.seed") {
        Some(Value::String(text)) => text.trim().parse::<u64>().map_err(|_| ConfigError::Invalid {
            key: "run.seed".into(),
            reason: format!("expected a 64-bit unsigned integer, got {text:?}"),
        })?,
        Some(v) => {
            let i = Doc::int(v, "run.seed")?;
            u64::try_from(i).map_err(|_| ConfigError::Invalid {
                key: "run.seed".into(),
                reason: format!("must be non-negative, got {i}"),
            })?
        }
        None => 0,
    };
    let cfg = ScenarioConfig {
        m,
        n,
        k,
        l,
        tau,
        power_w: doc.f64("power.P_watts")?,
        gamma_db,
        sigma0_sq: doc.f64("rcs.sigma0_sq")?,
        sigma1_sq: doc.f64("rcs.sigma1_sq")?,
        radar_noise_dbm: doc.f64("noise.radar_dbm")?,
        user_noise_dbm: doc.f64("noise.user_dbm")?,
        geometry: Geometry {
            d_bt: doc.f64("geometry.d_Bt")?,
            d_br: doc.f64("geometry.d_BR")?,
            d_bu: doc.f64("geometry.d_BU")?,
            d_rt: doc.f64("geometry.d_Rt")?,
            d_ru: doc.f64("geometry.d_RU")?,
        },
        pathloss: PathLossExponents {
            alpha_br: doc.f64("pathloss.alpha_BR")?,
            alpha_ru: doc.f64("pathloss.alpha_RU")?,
            alpha_bu: doc.f64("pathloss.alpha_BU")?,
            alpha_bt: doc.f64_or("pathloss.alpha_Bt", 2.0)?,
            alpha_rt: doc.f64_or("pathloss.alpha_Rt", 2.0)?,
            pl0_db: doc.f64_or("pathloss.pl0_db_at_1m", -30.0)?,
        },
        rician: RicianFactors {
            beta_br_db: doc.f64("rician.beta_BR_db")?,
            beta_bt_db,
            beta_other_db: doc.f64("rician.beta_other_db")?,
        },
        solver: SolverControls {
            rho: doc.f64_or("solver.rho", defaults.rho)?,
            tol_outer: doc.f64_or("solver.tol_outer", defaults.tol_outer)?,
            tol_inner: doc.f64_or("solver.tol_inner", defaults.tol_inner)?,
            max_outer_iters: doc.usize_or("solver.max_outer_iters", defaults.max_outer_iters)?,
        },
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_doc() -> String {
        ScenarioConfig::reference().to_toml_string()
    }

    #[test]
    fn reference_document_parses_with_q_80() {
        let cfg = parse_config(&reference_doc()).unwrap();
        assert_eq!(cfg.m, 16);
        assert_eq!(cfg.l, 64);
        assert_eq!(cfg.tau, 16);
        assert_eq!(cfg.q(), 80);
        assert!((cfg.sigma_z_sq() - 1e-11).abs() < 1e-24);
        assert_eq!(cfg, ScenarioConfig::reference());
    }

    #[test]
    fn zero_users_is_valid() {
        let doc = reference_doc()
            .replace("K = 4", "K = 0")
            .replace("gamma_db = [10.0, 10.0, 10.0, 10.0]", "gamma_db = []");
        let cfg = parse_config(&doc).unwrap();
        assert_eq!(cfg.k, 0);
        assert!(cfg.gamma_db.is_empty());
    }

    #[test]
    fn tau_equal_to_l_is_rejected() {
        let doc = reference_doc().replace("tau = 16", "tau = 64");
        let err = parse_config(&doc).unwrap_err();
        assert_eq!(err, ConfigError::TauNotLessThanL { tau: 64, l: 64 });
        assert!(err.to_string().contains("tau must be < L"));
    }

    #[test]
    fn diagnostics_name_the_key() {
        let doc = reference_doc().replace("d_RU = 3.0\n", "");
        assert_eq!(
            parse_config(&doc).unwrap_err(),
            ConfigError::MissingKey("geometry.d_RU".into())
        );
        let doc = reference_doc().replace("M = 16", "M = 0");
        assert_eq!(parse_config(&doc).unwrap_err(), ConfigError::NonPositive("system.M".into()));
        let doc = reference_doc().replace("gamma_db = [10.0, 10.0, 10.0, 10.0]", "gamma_db = [10.0]");
        assert_eq!(
            parse_config(&doc).unwrap_err(),
            ConfigError::GammaLength { expected: 4, got: 1 }
        );
        let doc = reference_doc().replace("P_watts = 30.0", "P_watts = -1.0");
        assert_eq!(parse_config(&doc).unwrap_err(), ConfigError::NonPositive("power.P_watts".into()));
    }

    #[test]
    fn solver_controls_default_when_absent() {
        let doc = reference_doc();
        let start = doc.find("[solver]").unwrap();
        let end = doc.find("[run]").unwrap();
        let trimmed = format!("{}{}", &doc[..start], &doc[end..]);
        let cfg = parse_config(&trimmed).unwrap();
        assert_eq!(cfg.solver, SolverControls::default());
    }

    #[test]
    fn finite_beta_bt_round_trips() {
        let mut cfg = ScenarioConfig::reference();
        cfg.rician.beta_bt_db = Some(12.5);
        cfg.gamma_db = vec![4.0, 10.0, 1e-3, -2.5];
        let back = parse_config(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn full_range_seeds_round_trip() {
        for seed in [0, i64::MAX as u64, i64::MAX as u64 + 1, u64::MAX] {
            let mut cfg = ScenarioConfig::reference();
            cfg.seed = seed;
            assert_eq!(parse_config(&cfg.to_toml_string()).unwrap().seed, seed);
        }
        let doc = reference_doc().replace("seed = 0", "seed = -3");
        assert!(matches!(parse_config(&doc), Err(ConfigError::Invalid { .. })));
    }
}
