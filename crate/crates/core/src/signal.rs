//! Two-path echo model, communication channels and space-time filtering.
//!
//! Every transpose here is the plain (non-conjugating) transpose; the radar
//! path is reciprocal, so `H0` and `H1` are complex symmetric, not Hermitian.
//! The stacked Kronecker operators of the vectorised model are never
//! built: an `M x Q` matrix with the pulse written at a column offset plays
//! the role of `S J`.

use rand::Rng;

use crate::channel::ChannelSet;
use crate::config_io::{complex_normal, ScenarioConfig};
use crate::{CMat, CVec, Error, Result, C64};

/// The `L x Q` 0/1 matrix with ones where `column - row = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftMatrix {
    pub l: usize,
    pub q: usize,
    pub offset: usize,
}

pub fn make_shift_matrix(l: usize, q: usize, offset: usize) -> Result<ShiftMatrix> {
    if l > q || offset > q - l {
        return Err(Error::InvalidArgument(format!(
            "shift offset {offset} out of range for an {l} x {q} shift matrix"
        )));
    }
    Ok(ShiftMatrix { l, q, offset })
}

impl ShiftMatrix {
    pub fn to_dense(&self) -> CMat {
        CMat::from_fn(self.l, self.q, |r, c| {
            if c == r + self.offset {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    /// `x * J` for an `r x L` matrix `x`: the columns of `x` moved right by
    /// `offset` inside an `r x Q` zero matrix.
    pub fn apply_right(&self, x: &CMat) -> CMat {
        assert_eq!(x.ncols(), self.l, "shift input width");
        let mut out = CMat::zeros(x.nrows(), self.q);
        out.columns_mut(self.offset, self.l).copy_from(x);
        out
    }
}

/// `h_dt h_dt^T`.
pub fn build_h0(h_dt: &CVec) -> CMat {
    h_dt * h_dt.transpose()
}

/// `G^T diag(h) phi`, the RIS-reflected part of a BS-side channel.
pub fn cascaded(g: &CMat, h: &CVec, phi: &CVec) -> CVec {
    if g.nrows() == 0 {
        return CVec::zeros(g.ncols());
    }
    let weighted = h.component_mul(phi);
    g.transpose() * weighted
}

/// `h_dt phi^T diag(h_rt) G + G^T diag(h_rt) phi h_dt^T`.
pub fn build_h1(phi: &CVec, h_dt: &CVec, h_rt: &CVec, g: &CMat) -> CMat {
    let u = cascaded(g, h_rt, phi);
    h_dt * u.transpose() + &u * h_dt.transpose()
}

/// The direct and RIS-path echo operators at one reflection vector.
#[derive(Debug, Clone)]
pub struct EchoOperators {
    pub h0: CMat,
    pub h1: CMat,
    /// Diagonal of `diag(h_rt)`.
    pub d_rt: CVec,
}

impl EchoOperators {
    pub fn new(channels: &ChannelSet, phi: &CVec) -> Self {
        Self {
            h0: build_h0(&channels.h_dt),
            h1: build_h1(phi, &channels.h_dt, &channels.h_rt, &channels.g),
            d_rt: channels.h_rt.clone(),
        }
    }
}

/// `h_k(phi) = h_dk + G^T diag(h_rk) phi`.
pub fn effective_user_channel(k: usize, phi: &CVec, channels: &ChannelSet) -> CVec {
    &channels.h_dk[k] + cascaded(&channels.g, &channels.h_rk[k], phi)
}

/// Closed-form expected radar SNR,
/// `(L / sigma_z^2) * (sigma0^2 ||H0 W||_F^2 + sigma1^2 ||H1(phi) W||_F^2)`.
pub fn radar_snr(w: &CMat, phi: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> f64 {
    let ops = EchoOperators::new(channels, phi);
    radar_snr_with(w, &ops, cfg)
}

pub fn radar_snr_with(w: &CMat, ops: &EchoOperators, cfg: &ScenarioConfig) -> f64 {
    let direct = (&ops.h0 * w).norm_squared();
    let ris = (&ops.h1 * w).norm_squared();
    cfg.l as f64 / cfg.sigma_z_sq() * (cfg.sigma0_sq * direct + cfg.sigma1_sq * ris)
}

/// SINR of user `k`; the interference sum runs over all other `K + M - 1`
/// columns of `W`, radar beams included.
pub fn comm_sinr(k: usize, w: &CMat, phi: &CVec, cfg: &ScenarioConfig, channels: &ChannelSet) -> f64 {
    let h = effective_user_channel(k, phi, channels);
    sinr_for_channel(k, w, &h, cfg.sigma_k_sq())
}

pub(crate) fn sinr_for_channel(k: usize, w: &CMat, h: &CVec, noise: f64) -> f64 {
    let gains = h.transpose() * w;
    let signal = gains[k].norm_sqr();
    let interference: f64 = gains
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != k)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    signal / (interference + noise)
}

/// Communication symbol alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SymbolKind {
    #[default]
    Gaussian,
    Qpsk,
}

/// Transmit symbols, `(K + M) x L`; the first `K` rows are communication
/// symbols, the remaining `M` radar probing symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub s: CMat,
}

impl SymbolBlock {
    /// Unit-power i.i.d. symbols; radar rows are always circular Gaussian.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, k: usize, m: usize, l: usize, comm: SymbolKind) -> Self {
        let rows = k + m;
        let mut s = CMat::zeros(rows, l);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for c in 0..l {
            for r in 0..rows {
                s[(r, c)] = if r < k && comm == SymbolKind::Qpsk {
                    let re = if rng.random::<bool>() { h } else { -h };
                    let im = if rng.random::<bool>() { h } else { -h };
                    C64::new(re, im)
                } else {
                    complex_normal(rng, 1.0)
                };
            }
        }
        Self { s }
    }
}

/// The noiseless, unit-RCS echo of each path as `M x Q` matrices:
/// `H0 W S J0` and `H1 W S J1`.
pub fn echo_paths(w: &CMat, ops: &EchoOperators, symbols: &SymbolBlock, cfg: &ScenarioConfig) -> (CMat, CMat) {
    let q = cfg.q();
    let x = w * &symbols.s;
    let j0 = ShiftMatrix { l: cfg.l, q, offset: 0 };
    let j1 = ShiftMatrix { l: cfg.l, q, offset: cfg.tau };
    (j0.apply_right(&(&ops.h0 * &x)), j1.apply_right(&(&ops.h1 * &x)))
}

/// Unit-norm space-time receive filter, stored as `M x Q` (one column per
/// snapshot).
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeFilter {
    pub f: CMat,
}

impl SpaceTimeFilter {
    /// `f^H y` for a received `M x Q` block.
    pub fn apply(&self, y: &CMat) -> C64 {
        self.f.dotc(y)
    }

    /// Flattened column-major (i.e. `vec`) form.
    pub fn to_vector(&self) -> CVec {
        CVec::from_column_slice(self.f.as_slice())
    }
}

/// Normalises a non-zero `M x Q` block into a filter.
pub fn matched_filter(expected: CMat) -> Result<SpaceTimeFilter> {
    let norm = expected.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateFilter);
    }
    Ok(SpaceTimeFilter { f: expected / C64::new(norm, 0.0) })
}

/// Filter matched to `sigma0 H0 W S J0 + sigma1 H1 W S J1` for the realised
/// symbol block.
pub fn optimal_filter(
    w: &CMat,
    phi: &CVec,
    symbols: &SymbolBlock,
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
) -> Result<SpaceTimeFilter> {
    let ops = EchoOperators::new(channels, phi);
    let (a0, a1) = echo_paths(w, &ops, symbols, cfg);
    optimal_filter_from_paths(&a0, &a1, cfg)
}

pub fn optimal_filter_from_paths(a0: &CMat, a1: &CMat, cfg: &ScenarioConfig) -> Result<SpaceTimeFilter> {
    let s0 = C64::new(cfg.sigma0_sq.sqrt(), 0.0);
    let s1 = C64::new(cfg.sigma1_sq.sqrt(), 0.0);
    matched_filter(a0 * s0 + a1 * s1)
}

/// Empirical cross term between the two echo paths.
///
/// Returns `|mean(a0^H a1)|` over `n_trials` symbol draws divided by the
/// mean of the two path energies `(mean ||a0||^2 + mean ||a1||^2) / 2`.
/// With `tau >= 1` and independent symbols the population value is zero.
pub fn path_orthogonality_check<R: Rng + ?Sized>(
    w: &CMat,
    phi: &CVec,
    cfg: &ScenarioConfig,
    channels: &ChannelSet,
    n_trials: usize,
    rng: &mut R,
) -> f64 {
    let ops = EchoOperators::new(channels, phi);
    path_orthogonality_with(n_trials, |_| SymbolBlock::draw(rng, cfg.k, cfg.m, cfg.l, SymbolKind::Gaussian), w, &ops, cfg)
}

/// As [`path_orthogonality_check`] but with a caller-supplied symbol source.
pub fn path_orthogonality_with<F>(n_trials: usize, mut symbols: F, w: &CMat, ops: &EchoOperators, cfg: &ScenarioConfig) -> f64
where
    F: FnMut(usize) -> SymbolBlock,
{
    assert!(n_trials >= 1, "at least one trial");
    let mut cross = C64::new(0.0, 0.0);
    let mut energy = 0.0;
    for t in 0..n_trials {
        let s = symbols(t);
        let (a0, a1) = echo_paths(w, ops, &s, cfg);
        cross += a0.dotc(&a1);
        energy += 0.5 * (a0.norm_squared() + a1.norm_squared());
    }
    if energy == 0.0 {
        return 0.0;
    }
    cross.norm() / energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::synthesize_channels;
    use crate::config_io::{make_rng, RngFactory};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_cmat<R: Rng>(rng: &mut R, r: usize, cc: usize) -> CMat {
        CMat::from_fn(r, cc, |_, _| complex_normal(rng, 1.0))
    }

    fn random_cvec<R: Rng>(rng: &mut R, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| complex_normal(rng, 1.0))
    }

    fn unit_channels<R: Rng>(rng: &mut R, m: usize, n: usize, k: usize) -> ChannelSet {
        ChannelSet {
            h_dt: random_cvec(rng, m),
            h_rt: random_cvec(rng, n),
            g: random_cmat(rng, n, m),
            h_dk: (0..k).map(|_| random_cvec(rng, m)).collect(),
            h_rk: (0..k).map(|_| random_cvec(rng, n)).collect(),
        }
    }

    fn small_cfg(m: usize, n: usize, k: usize, l: usize, tau: usize) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::reference();
        cfg.m = m;
        cfg.n = n;
        cfg.k = k;
        cfg.l = l;
        cfg.tau = tau;
        cfg.gamma_db = vec![10.0; k];
        cfg.radar_noise_dbm = 30.0; // 1 W
        cfg.user_noise_dbm = 30.0;
        cfg
    }

    #[test]
    fn shift_matrix_definition() {
        let j = make_shift_matrix(2, 3, 1).unwrap().to_dense();
        let expect = CMat::from_row_slice(2, 3, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.), c(0., 0.), c(1., 0.)]);
        assert_eq!(j, expect);
        let j0 = make_shift_matrix(4, 6, 0).unwrap().to_dense();
        assert_eq!(j0.columns(0, 4).into_owned(), CMat::identity(4, 4));
        assert!(j0.columns(4, 2).iter().all(|z| *z == c(0., 0.)));
        assert!(make_shift_matrix(4, 6, 3).is_err());
    }

    #[test]
    fn shift_products() {
        let (l, tau) = (5, 2);
        let q = l + tau;
        let j0 = make_shift_matrix(l, q, 0).unwrap().to_dense();
        let j1 = make_shift_matrix(l, q, tau).unwrap().to_dense();
        // J J^T = I_L, exactly L ones
        assert_eq!(&j1 * j1.transpose(), CMat::identity(l, l));
        assert_eq!(j1.iter().filter(|z| **z == c(1., 0.)).count(), l);
        // J0 J1^T has ones on the tau-th subdiagonal only
        let p = &j0 * j1.transpose();
        for r in 0..l {
            for cc in 0..l {
                let want = if r == cc + tau { 1.0 } else { 0.0 };
                assert_eq!(p[(r, cc)], c(want, 0.));
            }
        }
        // the column-shift shortcut equals the dense product
        let mut rng = make_rng(1, "shift");
        let x = random_cmat(&mut rng, 3, l);
        let sj = make_shift_matrix(l, q, tau).unwrap();
        assert!((sj.apply_right(&x) - &x * &j1).norm() < 1e-14);
    }

    #[test]
    fn h0_cases() {
        let e1 = CVec::from_vec(vec![c(1., 0.), c(0., 0.), c(0., 0.)]);
        let h = build_h0(&e1);
        assert_eq!(h[(0, 0)], c(1., 0.));
        assert_eq!(h.iter().filter(|z| **z != c(0., 0.)).count(), 1);
        let v = CVec::from_vec(vec![c(1., 0.), c(0., 1.)]);
        let h = build_h0(&v);
        assert_eq!(h, CMat::from_row_slice(2, 2, &[c(1., 0.), c(0., 1.), c(0., 1.), c(-1., 0.)]));
        // symmetric, not Hermitian
        assert_eq!(h.transpose(), h);
        assert_ne!(h.adjoint(), h);
    }

    #[test]
    fn h1_cases() {
        let mut rng = make_rng(2, "h1");
        let ch = unit_channels(&mut rng, 3, 4, 0);
        let zero = build_h1(&CVec::zeros(4), &ch.h_dt, &ch.h_rt, &ch.g);
        assert_eq!(zero.norm(), 0.0);
        let one = CVec::from_element(1, c(1., 0.));
        let scalar = build_h1(&one, &one, &one, &CMat::from_element(1, 1, c(1., 0.)));
        assert_eq!(scalar[(0, 0)], c(2., 0.));
        let p1 = random_cvec(&mut rng, 4);
        let p2 = random_cvec(&mut rng, 4);
        let h = build_h1(&p1, &ch.h_dt, &ch.h_rt, &ch.g);
        assert!((h.transpose() - &h).norm() < 1e-13);
        // linear in phi
        let (a, b) = (c(0.3, -1.2), c(2.0, 0.5));
        let lhs = build_h1(&(&p1 * a + &p2 * b), &ch.h_dt, &ch.h_rt, &ch.g);
        let rhs = h * a + build_h1(&p2, &ch.h_dt, &ch.h_rt, &ch.g) * b;
        assert!((lhs - rhs).norm() < 1e-12);
        // transpose-based definition, written out literally
        let dense = &ch.h_dt * p1.transpose() * CMat::from_diagonal(&ch.h_rt) * &ch.g
            + ch.g.transpose() * CMat::from_diagonal(&ch.h_rt) * &p1 * ch.h_dt.transpose();
        assert!((build_h1(&p1, &ch.h_dt, &ch.h_rt, &ch.g) - dense).norm() < 1e-12);
    }

    #[test]
    fn effective_channel_cases() {
        let mut rng = make_rng(3, "eff");
        let ch = unit_channels(&mut rng, 3, 5, 2);
        assert_eq!(effective_user_channel(1, &CVec::zeros(5), &ch), ch.h_dk[1]);
        let one = |z: C64| CVec::from_element(1, z);
        let tiny = ChannelSet {
            h_dt: one(c(1., 0.)),
            h_rt: one(c(1., 0.)),
            g: CMat::from_element(1, 1, c(1., 0.)),
            h_dk: vec![one(c(1., 0.))],
            h_rk: vec![one(c(0., 1.))],
        };
        assert!(effective_user_channel(0, &one(c(0., 1.)), &tiny).norm() < 1e-15);
        // (h_dk^T + h_rk^T Phi G)^T
        let phi = random_cvec(&mut rng, 5);
        let direct = (ch.h_dk[0].transpose() + ch.h_rk[0].transpose() * CMat::from_diagonal(&phi) * &ch.g).transpose();
        assert!((effective_user_channel(0, &phi, &ch) - direct).norm() < 1e-12);
    }

    #[test]
    fn radar_snr_hand_value() {
        let mut cfg = small_cfg(1, 0, 0, 4, 1);
        cfg.sigma1_sq = 1.0;
        let ch = ChannelSet {
            h_dt: CVec::from_element(1, c(1., 0.)),
            h_rt: CVec::zeros(0),
            g: CMat::zeros(0, 1),
            h_dk: vec![],
            h_rk: vec![],
        };
        let w = CMat::from_element(1, 1, c(10f64.sqrt(), 0.));
        let snr = radar_snr(&w, &CVec::zeros(0), &cfg, &ch);
        assert!((snr - 40.0).abs() < 1e-12);
        assert_eq!(radar_snr(&CMat::zeros(1, 1), &CVec::zeros(0), &cfg, &ch), 0.0);
    }

    #[test]
    fn radar_snr_matches_trace_and_is_unitarily_invariant() {
        let mut rng = make_rng(4, "trace");
        let cfg = small_cfg(3, 4, 2, 6, 2);
        let ch = unit_channels(&mut rng, 3, 4, 2);
        let phi = random_cvec(&mut rng, 4);
        let w = random_cmat(&mut rng, 3, 5);
        let ops = EchoOperators::new(&ch, &phi);
        let a = ops.h0.adjoint() * &ops.h0 * C64::new(cfg.sigma0_sq, 0.)
            + ops.h1.adjoint() * &ops.h1 * C64::new(cfg.sigma1_sq, 0.);
        let tr = (w.adjoint() * a * &w).trace().re * cfg.l as f64 / cfg.sigma_z_sq();
        let snr = radar_snr(&w, &phi, &cfg, &ch);
        assert!(((snr - tr) / tr).abs() < 1e-12);
        // right-multiplication by a unitary (QR of a random matrix)
        let u = random_cmat(&mut rng, 5, 5).qr().q();
        let rotated = radar_snr(&(&w * u), &phi, &cfg, &ch);
        assert!(((rotated - snr) / snr).abs() < 1e-12);
    }

    #[test]
    fn sinr_cases() {
        let cfg = small_cfg(1, 0, 1, 4, 1);
        let ch = ChannelSet {
            h_dt: CVec::from_element(1, c(1., 0.)),
            h_rt: CVec::zeros(0),
            g: CMat::zeros(0, 1),
            h_dk: vec![CVec::from_element(1, c(1., 0.))],
            h_rk: vec![CVec::zeros(0)],
        };
        let w = CMat::from_row_slice(1, 2, &[c(10f64.sqrt(), 0.), c(0., 0.)]);
        assert!((comm_sinr(0, &w, &CVec::zeros(0), &cfg, &ch) - 10.0).abs() < 1e-12);
        let w = CMat::from_row_slice(1, 2, &[c(0., 0.), c(1., 0.)]);
        assert_eq!(comm_sinr(0, &w, &CVec::zeros(0), &cfg, &ch), 0.0);
    }

    #[test]
    fn sinr_matches_received_power_monte_carlo() {
        let mut rng = make_rng(5, "sinr-mc");
        let mut cfg = small_cfg(2, 3, 2, 8, 2);
        cfg.user_noise_dbm = 20.0; // 0.1 W
        let ch = unit_channels(&mut rng, 2, 3, 2);
        let phi = random_cvec(&mut rng, 3);
        let w = random_cmat(&mut rng, 2, 4);
        let k = 1;
        // received r_k[l] = (h_dk^T + h_rk^T Phi G) x[l] + n_k[l]; split the
        // signal term off and average the rest.
        let row = ch.h_dk[k].transpose() + ch.h_rk[k].transpose() * CMat::from_diagonal(&phi) * &ch.g;
        let n = 100_000;
        let (mut sig, mut rest) = (0.0, 0.0);
        let noise = cfg.sigma_k_sq();
        for _ in 0..n {
            let s = SymbolBlock::draw(&mut rng, 2, 2, 1, SymbolKind::Gaussian).s;
            let x = &w * &s;
            let total = (&row * &x)[0] + complex_normal(&mut rng, noise);
            let own = (&row * w.column(k))[0] * s[(k, 0)];
            sig += own.norm_sqr();
            rest += (total - own).norm_sqr();
        }
        let mc = sig / rest;
        let exact = comm_sinr(k, &w, &phi, &cfg, &ch);
        assert!(((mc - exact) / exact).abs() < 0.03, "mc {mc} exact {exact}");
    }

    #[test]
    fn filter_is_unit_norm_and_supported_on_direct_slots_without_ris_variance() {
        let mut rng = make_rng(6, "filter");
        let mut cfg = small_cfg(2, 3, 1, 4, 2);
        let ch = unit_channels(&mut rng, 2, 3, 1);
        let phi = random_cvec(&mut rng, 3);
        let w = random_cmat(&mut rng, 2, 3);
        let s = SymbolBlock::draw(&mut rng, 1, 2, 4, SymbolKind::Gaussian);
        let f = optimal_filter(&w, &phi, &s, &cfg, &ch).unwrap();
        assert!((f.f.norm() - 1.0).abs() < 1e-12);
        cfg.sigma1_sq = 0.0;
        let f = optimal_filter(&w, &phi, &s, &cfg, &ch).unwrap();
        assert!(f.f.columns(4, 2).norm() == 0.0);
        assert!(matches!(
            optimal_filter(&CMat::zeros(2, 3), &phi, &s, &cfg, &ch),
            Err(Error::DegenerateFilter)
        ));
    }

    #[test]
    fn orthogonality_vanishes_with_delay_only() {
        let mut rng = make_rng(7, "orth");
        let ch = unit_channels(&mut rng, 2, 3, 1);
        let phi = random_cvec(&mut rng, 3);
        let w = random_cmat(&mut rng, 2, 3);
        let cfg = small_cfg(2, 3, 1, 8, 2);
        let v = path_orthogonality_check(&w, &phi, &cfg, &ch, 20_000, &mut rng);
        assert!(v < 0.02, "{v}");
        let cfg0 = small_cfg(2, 3, 1, 8, 0);
        let v0 = path_orthogonality_check(&w, &phi, &cfg0, &ch, 20_000, &mut rng);
        assert!(v0 > 0.05, "{v0}");
        // a block with s[l] = s[l + tau] breaks the independence premise
        let ops = EchoOperators::new(&ch, &phi);
        let periodic = |_t: usize| {
            let base = SymbolBlock::draw(&mut make_rng(8, "p"), 1, 2, 2, SymbolKind::Gaussian).s;
            SymbolBlock { s: CMat::from_fn(3, 8, |r, cc| base[(r, cc % 2)]) }
        };
        let vp = path_orthogonality_with(10, periodic, &w, &ops, &cfg);
        assert!(vp > 1e-3, "{vp}");
    }

    #[test]
    fn reference_channels_feed_snr() {
        let cfg = ScenarioConfig::reference();
        let ch = synthesize_channels(&cfg, &RngFactory::new(3)).unwrap();
        let phi = CVec::from_element(cfg.n, c(1., 0.));
        let w = CMat::from_element(cfg.m, cfg.streams(), c(0.1, 0.));
        assert!(radar_snr(&w, &phi, &cfg, &ch) > 0.0);
    }
}
