//! Rician channel synthesis for the BS, RIS, target and users.

use std::f64::consts::PI;

use rand::Rng;

use crate::config_io::{complex_normal, db_to_linear, RngFactory, ScenarioConfig};
use crate::{CMat, CVec, Error, Result, C64};

/// One realisation of every link in the scenario.
///
/// `g` is indexed RIS-row, BS-column (`N x M`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS to target, length `M`.
    pub h_dt: CVec,
    /// RIS to target, length `N`.
    pub h_rt: CVec,
    /// BS to RIS, `N x M`.
    pub g: CMat,
    /// BS to user `k`, each length `M`.
    pub h_dk: Vec<CVec>,
    /// RIS to user `k`, each length `N`.
    pub h_rk: Vec<CVec>,
}

impl ChannelSet {
    pub fn m(&self) -> usize {
        self.h_dt.len()
    }

    pub fn n(&self) -> usize {
        self.h_rt.len()
    }

    pub fn k(&self) -> usize {
        self.h_dk.len()
    }

    /// Same direct links with every RIS link removed (no-RIS baseline).
    pub fn without_ris(&self) -> ChannelSet {
        ChannelSet {
            h_dt: self.h_dt.clone(),
            h_rt: CVec::zeros(0),
            g: CMat::zeros(0, self.m()),
            h_dk: self.h_dk.clone(),
            h_rk: vec![CVec::zeros(0); self.k()],
        }
    }

    /// Multiplies every channel by `factor`.
    pub fn scaled(&self, factor: f64) -> ChannelSet {
        let f = C64::new(factor, 0.0);
        ChannelSet {
            h_dt: &self.h_dt * f,
            h_rt: &self.h_rt * f,
            g: &self.g * f,
            h_dk: self.h_dk.iter().map(|h| h * f).collect(),
            h_rk: self.h_rk.iter().map(|h| h * f).collect(),
        }
    }
}

/// Amplitude gain `sqrt(10^(pl0_db/10) * d^-alpha)` of one link.
pub fn path_loss_linear(d: f64, alpha: f64, pl0_db: f64) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(Error::InvalidArgument(format!("path-loss distance {d} m is below 1 m")));
    }
    Ok((db_to_linear(pl0_db) * d.powf(-alpha)).sqrt())
}

/// Half-wavelength ULA response, entry `i` is `exp(j*pi*i*sin(angle))`.
pub fn steering_vector(n_elems: usize, angle: f64) -> CVec {
    let s = angle.sin();
    CVec::from_iterator(n_elems, (0..n_elems).map(|i| C64::from_polar(1.0, PI * i as f64 * s)))
}

/// Rician factor; `None` is infinite (pure LoS).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RicianFactor {
    Linear(f64),
    Infinite,
}

impl RicianFactor {
    pub fn from_db(db: Option<f64>) -> Self {
        match db {
            Some(v) => RicianFactor::Linear(db_to_linear(v)),
            None => RicianFactor::Infinite,
        }
    }
}

/// `amp * (sqrt(beta/(1+beta)) * los + sqrt(1/(1+beta)) * diffuse)`, with a
/// unit-variance circular Gaussian diffuse part.
pub fn rician_channel<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    beta: RicianFactor,
    los: &CMat,
    amp: f64,
) -> CMat {
    assert_eq!(los.shape(), (rows, cols), "LoS matrix shape");
    match beta {
        RicianFactor::Infinite => los * C64::new(amp, 0.0),
        RicianFactor::Linear(b) => {
            let w_los = (b / (1.0 + b)).sqrt();
            let w_nlos = (1.0 / (1.0 + b)).sqrt();
            // column-major draw order
            let mut out = CMat::zeros(rows, cols);
            for c in 0..cols {
                for r in 0..rows {
                    let d = complex_normal(rng, 1.0);
                    out[(r, c)] = (los[(r, c)] * w_los + d * w_nlos) * amp;
                }
            }
            out
        }
    }
}

fn draw_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-PI / 3.0..PI / 3.0)
}

fn vector_link(factory: &RngFactory, label: &str, len: usize, beta: RicianFactor, amp: f64) -> CVec {
    let mut rng = factory.stream(label);
    let los = CMat::from_column_slice(len, 1, steering_vector(len, draw_angle(&mut rng)).as_slice());
    let h = rician_channel(&mut rng, len, 1, beta, &los, amp);
    h.column(0).into_owned()
}

/// Draws all five channels.
///
/// Each link reads its own substream `channels.<link>` of the run seed, so
/// the direct links of a seed do not change when `N` changes. LoS angles are
/// uniform on `(-pi/3, pi/3)` and independent per link; distances only set
/// path loss. Users share distances and get independent fading.
pub fn synthesize_channels(cfg: &ScenarioConfig, factory: &RngFactory) -> Result<ChannelSet> {
    let (m, n, k) = (cfg.m, cfg.n, cfg.k);
    let g = &cfg.geometry;
    let p = &cfg.pathloss;
    let other = RicianFactor::from_db(Some(cfg.rician.beta_other_db));

    let amp_bt = path_loss_linear(g.d_bt, p.alpha_bt, p.pl0_db)?;
    let amp_rt = path_loss_linear(g.d_rt, p.alpha_rt, p.pl0_db)?;
    let amp_br = path_loss_linear(g.d_br, p.alpha_br, p.pl0_db)?;
    let amp_bu = path_loss_linear(g.d_bu, p.alpha_bu, p.pl0_db)?;
    let amp_ru = path_loss_linear(g.d_ru, p.alpha_ru, p.pl0_db)?;

    let h_dt = vector_link(factory, "channels.h_dt", m, RicianFactor::from_db(cfg.rician.beta_bt_db), amp_bt);
    let h_rt = vector_link(factory, "channels.h_rt", n, other, amp_rt);

    let g_mat = {
        let mut rng = factory.stream("channels.G");
        let arrival = steering_vector(n, draw_angle(&mut rng));
        let departure = steering_vector(m, draw_angle(&mut rng));
        let los = &arrival * departure.transpose();
        rician_channel(&mut rng, n, m, RicianFactor::from_db(Some(cfg.rician.beta_br_db)), &los, amp_br)
    };

    let h_dk = (0..k)
        .map(|u| vector_link(factory, &format!("channels.h_dk.{u}"), m, other, amp_bu))
        .collect();
    let h_rk = (0..k)
        .map(|u| vector_link(factory, &format!("channels.h_rk.{u}"), n, other, amp_ru))
        .collect();

    Ok(ChannelSet {
        h_dt,
        h_rt,
        g: g_mat,
        h_dk,
        h_rk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_io::make_rng;

    #[test]
    fn path_loss_points() {
        let a = path_loss_linear(50.0, 2.0, -30.0).unwrap();
        let db = 20.0 * a.log10();
        assert!((db - (-63.979400086720375)).abs() < 1e-9, "{db}");
        assert!((a - 6.324555320336759e-4).abs() < 1e-12);
        let a1 = path_loss_linear(1.0, 2.7, -30.0).unwrap();
        assert!((a1 - 10f64.powf(-1.5)).abs() < 1e-15);
        assert!(path_loss_linear(40.0, 2.0, -30.0).unwrap() > path_loss_linear(40.0, 2.4, -30.0).unwrap());
        assert!(path_loss_linear(0.5, 2.0, -30.0).is_err());
    }

    #[test]
    fn steering_vector_cases() {
        let v = steering_vector(4, 0.0);
        assert!(v.iter().all(|z| (*z - C64::new(1.0, 0.0)).norm() < 1e-15));
        let v = steering_vector(2, PI / 2.0);
        assert!((v[0] - C64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - C64::new(-1.0, 0.0)).norm() < 1e-15);
        let v = steering_vector(9, 0.37);
        assert!(v.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn infinite_factor_is_exactly_los() {
        let los = &steering_vector(3, 0.2) * steering_vector(2, -0.4).transpose();
        let mut rng = make_rng(3, "t");
        let h = rician_channel(&mut rng, 3, 2, RicianFactor::Infinite, &los, 0.25);
        assert_eq!(h, &los * C64::new(0.25, 0.0));
    }

    #[test]
    fn zero_db_factor_mean_power_is_amp_squared() {
        let n = 100_000;
        let los = CMat::from_element(n, 1, C64::new(0.0, 1.0));
        let mut rng = make_rng(5, "rician");
        let amp = 0.3;
        let h = rician_channel(&mut rng, n, 1, RicianFactor::Linear(1.0), &los, amp);
        let p: Vec<f64> = h.iter().map(|z| z.norm_sqr()).collect();
        let mean = p.iter().sum::<f64>() / n as f64;
        let var = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - amp * amp).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn five_db_los_power_fraction() {
        let beta = db_to_linear(5.0);
        let expected = beta / (1.0 + beta);
        assert!((expected - 0.7597469266479578).abs() < 1e-12);
        // the LoS share is the squared mean of the projection on the LoS entry
        let n = 100_000;
        let los = CMat::from_element(n, 1, C64::new(1.0, 0.0));
        let mut rng = make_rng(6, "rician");
        let h = rician_channel(&mut rng, n, 1, RicianFactor::Linear(beta), &los, 1.0);
        let mean: C64 = h.iter().sum::<C64>() / n as f64;
        let se = (1.0 / (1.0 + beta) / n as f64).sqrt();
        assert!((mean.re - expected.sqrt()).abs() < 3.0 * se);
        let total = h.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        let frac = mean.norm_sqr() / total;
        assert!((frac - expected).abs() < 0.01, "{frac}");
    }

    #[test]
    fn reference_scenario_channels() {
        let cfg = ScenarioConfig::reference();
        let f = RngFactory::new(11);
        let ch = synthesize_channels(&cfg, &f).unwrap();
        assert_eq!(ch.g.shape(), (64, 16));
        assert_eq!(ch.h_dk.len(), 4);
        let amp = path_loss_linear(50.0, 2.0, -30.0).unwrap();
        assert!((ch.h_dt.norm_squared() - 16.0 * amp * amp).abs() < 1e-20);
        assert!(ch.h_dt.iter().all(|z| (z.norm() - amp).abs() < 1e-15));
        assert_eq!(ch, synthesize_channels(&cfg, &f).unwrap());
        assert_ne!(ch, synthesize_channels(&cfg, &RngFactory::new(12)).unwrap());
    }

    #[test]
    fn no_ris_degenerates() {
        let mut cfg = ScenarioConfig::reference();
        cfg.n = 0;
        let ch = synthesize_channels(&cfg, &RngFactory::new(1)).unwrap();
        assert_eq!(ch.h_rt.len(), 0);
        assert_eq!(ch.g.shape(), (0, 16));
        assert!(ch.h_rk.iter().all(|h| h.is_empty()));
        let full = synthesize_channels(&ScenarioConfig::reference(), &RngFactory::new(1)).unwrap();
        assert_eq!(ch.h_dt, full.h_dt);
        assert_eq!(ch.h_dk, full.h_dk);
    }
}
