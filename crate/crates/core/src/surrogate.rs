//! Minorize-maximize surrogates of the radar objective and the SINR
//! constraints around an expansion point `(W_t, phi_t)`.

use crate::channel::ChannelSet;
use crate::config_io::ScenarioConfig;
use crate::signal::{build_h1, effective_user_channel, EchoOperators};
use crate::{CMat, CVec, C64};

/// Coefficients of the surrogate problem at one expansion point.
///
/// `w_t` is the expansion point after each user column has been rotated so
/// that `h_k(phi_t)^T w_k` is real and non-negative. The rotation leaves
/// every SNR and SINR unchanged and makes the real-part form of the SINR
/// surrogate tangent at `w_t`.
#[derive(Debug, Clone)]
pub struct SurrogatePoint {
    pub w_t: CMat,
    pub phi_t: CVec,
    /// `sigma0^2 W_t^H H0^H H0`, `(K+M) x M`.
    pub f1: CMat,
    /// `sigma1^2 W_t^H H1(phi_t)^H`, `(K+M) x M`.
    pub f2: CMat,
    pub c1: f64,
    pub c3: Vec<f64>,
    pub c4: Vec<f64>,
    /// `h_k(phi_t)` for every user.
    pub h_eff_t: Vec<CVec>,
    pub ops_t: EchoOperators,
    pub gamma: Vec<f64>,
    pub noise: f64,
    pub channels: ChannelSet,
}

/// Rotates every user column so its own-channel gain is real and >= 0.
pub fn align_user_phases(w: &CMat, h_eff: &[CVec]) -> CMat {
    let mut out = w.clone();
    for (k, h) in h_eff.iter().enumerate() {
        let a = (h.transpose() * w.column(k))[0];
        let mag = a.norm();
        if mag > 0.0 {
            let rot = a.conj() / mag;
            for v in out.column_mut(k).iter_mut() {
                *v *= rot;
            }
        }
    }
    out
}

/// `sigma0^2 ||H0 W||_F^2 + sigma1^2 ||H1(phi) W||_F^2`.
pub fn quadratic_objective(w: &CMat, phi: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> f64 {
    let ops = EchoOperators::new(channels, phi);
    cfg.sigma0_sq * (&ops.h0 * w).norm_squared() + cfg.sigma1_sq * (&ops.h1 * w).norm_squared()
}

/// `Gamma_k^-1 |h_k^T w_k|^2 - sum_{j != k} |h_k^T w_j|^2 - sigma_k^2`.
pub fn true_constraint(k: usize, w: &CMat, phi: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> f64 {
    let h = effective_user_channel(k, phi, channels);
    let gains = h.transpose() * w;
    let own = gains[k].norm_sqr();
    let rest: f64 = gains.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, z)| z.norm_sqr()).sum();
    own / cfg.gamma_linear(k) - rest - cfg.sigma_k_sq()
}

pub fn build_surrogate(w_t: &CMat, phi_t: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> SurrogatePoint {
    let h_eff_t: Vec<CVec> = (0..cfg.k).map(|k| effective_user_channel(k, phi_t, channels)).collect();
    let w_t = align_user_phases(w_t, &h_eff_t);
    let ops_t = EchoOperators::new(channels, phi_t);
    let h0w = &ops_t.h0 * &w_t;
    let h1w = &ops_t.h1 * &w_t;
    let f1 = (w_t.adjoint() * ops_t.h0.adjoint() * &ops_t.h0) * C64::new(cfg.sigma0_sq, 0.0);
    let f2 = (w_t.adjoint() * ops_t.h1.adjoint()) * C64::new(cfg.sigma1_sq, 0.0);
    let c1 = cfg.sigma0_sq * h0w.norm_squared() + cfg.sigma1_sq * h1w.norm_squared();
    let noise = cfg.sigma_k_sq();
    let gamma: Vec<f64> = (0..cfg.k).map(|k| cfg.gamma_linear(k)).collect();
    let mut c3 = Vec::with_capacity(cfg.k);
    let mut c4 = Vec::with_capacity(cfg.k);
    for (k, h) in h_eff_t.iter().enumerate() {
        let a = (h.transpose() * w_t.column(k))[0];
        let c2 = a.norm_sqr();
        c3.push(2.0 / gamma[k] * a.re);
        c4.push(c2 / gamma[k] + noise);
    }
    SurrogatePoint {
        w_t,
        phi_t: phi_t.clone(),
        f1,
        f2,
        c1,
        c3,
        c4,
        h_eff_t,
        ops_t,
        gamma,
        noise,
        channels: channels.clone(),
    }
}

impl SurrogatePoint {
    /// `(K+M) x M` coefficient `C` such that, at fixed `phi`,
    /// `f_surr(W, phi) = Re Tr(C W)`.
    pub fn w_coefficient(&self, phi: &CVec) -> CMat {
        let h1 = build_h1(phi, &self.channels.h_dt, &self.channels.h_rt, &self.channels.g);
        &self.f1 + &self.f2 * h1
    }

    pub fn effective_channel(&self, k: usize, phi: &CVec) -> CVec {
        effective_user_channel(k, phi, &self.channels)
    }
}

/// `Re Tr(F1 W + F2 H1(phi) W)`.
pub fn f_surr(sp: &SurrogatePoint, w: &CMat, phi: &CVec) -> f64 {
    (sp.w_coefficient(phi) * w).trace().re
}

/// `c3 Re{h_k(phi)^T w_k} - sum_{j != k} |h_k(phi)^T w_j|^2 - c4`.
pub fn g_surr(sp: &SurrogatePoint, k: usize, w: &CMat, phi: &CVec) -> f64 {
    let h = sp.effective_channel(k, phi);
    let gains = h.transpose() * w;
    let rest: f64 = gains.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, z)| z.norm_sqr()).sum();
    sp.c3[k] * gains[k].re - rest - sp.c4[k]
}

/// `(v, constant)` with `f_surr(sp, W, phi) = Re{v^H phi} + constant` for
/// every `phi`.
pub fn phi_linear_coeff(sp: &SurrogatePoint, w: &CMat) -> (CVec, f64) {
    let constant = (&sp.f1 * w).trace().re;
    let ch = &sp.channels;
    if ch.n() == 0 {
        return (CVec::zeros(0), constant);
    }
    let h = &ch.h_dt;
    // Tr(F2 h phi^T D G W)  = (D G W F2 h)^T phi
    let u1 = ch.h_rt.component_mul(&(&ch.g * (w * (&sp.f2 * h))));
    // Tr(F2 G^T D phi h^T W) = (D G F2^T W^T h)^T phi
    let u2 = ch.h_rt.component_mul(&(&ch.g * (sp.f2.transpose() * (w.transpose() * h))));
    ((u1 + u2).map(|z| z.conj()), constant)
}
