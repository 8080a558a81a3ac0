//! Riemannian conjugate-gradient initialisation of `phi` on the complex
//! circle manifold `{phi : |phi_n| = 1}`.
//!
//! The initialiser maximises the total channel gain
//! `||H1(phi)||_F^2 + sum_k ||h_k(phi)||^2`, written as the quadratic form
//! `phi^H A phi + 2 Re{b^H phi} + c`. SINR and power constraints are ignored;
//! they are the outer loop's business.

use rand::Rng;

use crate::channel::ChannelSet;
use crate::config_io::ScenarioConfig;
use crate::{CMat, CVec, C64};

const MAX_ITERS: usize = 500;
const RESTARTS: usize = 3;
const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, PartialEq)]
pub struct CircleManifoldPoint {
    pub phi: CVec,
}

impl CircleManifoldPoint {
    /// Entrywise normalisation; zero entries become `1`.
    pub fn project(phi: &CVec) -> Self {
        Self {
            phi: phi.map(|z| {
                let r = z.norm();
                if r > 0.0 {
                    z / r
                } else {
                    C64::new(1.0, 0.0)
                }
            }),
        }
    }
}

/// `phi^H a phi + 2 Re{b^H phi} + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainQuadratic {
    pub a: CMat,
    pub b: CVec,
    pub c: f64,
}

impl GainQuadratic {
    pub fn new(channels: &ChannelSet) -> Self {
        let (m, n) = (channels.m(), channels.n());
        let gt = channels.g.transpose();
        let scaled = |h: &CVec| CMat::from_fn(m, n, |i, j| gt[(i, j)] * h[j]);
        // ||h u^T + u h^T||^2 = 2||h||^2 ||u||^2 + 2|h^H u|^2 with u = A phi
        let at = scaled(&channels.h_rt);
        let hd = &channels.h_dt;
        let hta = at.adjoint() * hd;
        let mut a = at.adjoint() * &at * C64::new(2.0 * hd.norm_squared(), 0.0) + &hta * hta.adjoint() * C64::new(2.0, 0.0);
        let mut b = CVec::zeros(n);
        let mut c = 0.0;
        for (hdk, hrk) in channels.h_dk.iter().zip(&channels.h_rk) {
            let bk = scaled(hrk);
            a += bk.adjoint() * &bk;
            b += bk.adjoint() * hdk;
            c += hdk.norm_squared();
        }
        Self { a, b, c }
    }

    pub fn value(&self, phi: &CVec) -> f64 {
        let q = phi.dotc(&(&self.a * phi)).re;
        q + 2.0 * self.b.dotc(phi).re + self.c
    }

    /// `2 (A phi + b)`, the gradient under `<x, y> = Re{x^H y}`.
    pub fn gradient(&self, phi: &CVec) -> CVec {
        (&self.a * phi + &self.b) * C64::new(2.0, 0.0)
    }

    fn scale(&self) -> f64 {
        self.a.norm() + self.b.norm()
    }
}

pub fn init_objective(phi: &CVec, channels: &ChannelSet, cfg: &ScenarioConfig) -> f64 {
    debug_assert_eq!(channels.n(), cfg.n);
    GainQuadratic::new(channels).value(phi)
}

pub fn euclidean_gradient(phi: &CVec, channels: &ChannelSet, cfg: &ScenarioConfig) -> CVec {
    debug_assert_eq!(channels.n(), cfg.n);
    GainQuadratic::new(channels).gradient(phi)
}

/// `g - Re{g o conj(phi)} o phi`.
pub fn tangent_project(phi: &CVec, g: &CVec) -> CVec {
    g.zip_map(phi, |gn, pn| gn - pn * (gn * pn.conj()).re)
}

/// Entrywise `(phi + step) / |phi + step|`; an entry stays put where the sum
/// vanishes.
pub fn retract(phi: &CVec, step: &CVec) -> CircleManifoldPoint {
    CircleManifoldPoint {
        phi: phi.zip_map(step, |p, s| {
            let z = p + s;
            let r = z.norm();
            if r > 0.0 {
                z / r
            } else {
                p
            }
        }),
    }
}

fn inner(x: &CVec, y: &CVec) -> f64 {
    x.dotc(y).re
}

/// One conjugate-gradient ascent run.
#[derive(Debug, Clone, PartialEq)]
pub struct AscentRun {
    pub point: CircleManifoldPoint,
    pub objective: f64,
    /// Objective after every accepted step, starting with the initial point.
    pub trace: Vec<f64>,
    pub grad_norm: f64,
}

/// Polak-Ribiere (clipped at zero) conjugate gradients with Armijo
/// backtracking, from `start`. Stops when the Riemannian gradient of the
/// coefficient-normalised quadratic is below `1e-6 N`, after 500 iterations,
/// or when no step is accepted.
pub fn ascend(quad: &GainQuadratic, start: &CVec) -> AscentRun {
    let n = start.len();
    let mut x = CircleManifoldPoint::project(start).phi;
    let s = quad.scale();
    let norm = if s > 0.0 { 1.0 / s } else { 0.0 };
    let f = |p: &CVec| quad.value(p);
    let mut fx = f(&x);
    let mut trace = vec![fx];
    let mut grad = tangent_project(&x, &quad.gradient(&x)) * C64::new(norm, 0.0);
    let mut dir = grad.clone();
    let mut step: f64 = 1.0;
    let tol = 1e-6 * n as f64;
    for _ in 0..MAX_ITERS {
        if grad.norm() < tol || s == 0.0 {
            break;
        }
        let mut slope = inner(&grad, &dir);
        if slope <= 0.0 {
            dir = grad.clone();
            slope = grad.norm_squared();
        }
        let mut alpha = (step * 4.0).min(1e6);
        let mut accepted = None;
        while alpha > MIN_STEP {
            let cand = retract(&x, &(&dir * C64::new(alpha, 0.0))).phi;
            let fc = f(&cand);
            if (fc - fx) * norm >= ARMIJO * alpha * slope {
                accepted = Some((cand, fc));
                break;
            }
            alpha *= BACKTRACK;
        }
        let Some((nx, nf)) = accepted else { break };
        step = alpha;
        let ngrad = tangent_project(&nx, &quad.gradient(&nx)) * C64::new(norm, 0.0);
        let moved = tangent_project(&nx, &dir);
        let old = tangent_project(&nx, &grad);
        let beta = (inner(&ngrad, &(&ngrad - &old)) / grad.norm_squared()).max(0.0);
        dir = &ngrad + moved * C64::new(beta, 0.0);
        x = nx;
        fx = nf;
        grad = ngrad;
        trace.push(fx);
    }
    AscentRun {
        grad_norm: grad.norm(),
        point: CircleManifoldPoint { phi: x },
        objective: fx,
        trace,
    }
}

/// Best of three ascents from uniform random phases drawn from `rng`.
pub fn riemannian_ascent<R: Rng + ?Sized>(channels: &ChannelSet, cfg: &ScenarioConfig, rng: &mut R) -> CircleManifoldPoint {
    debug_assert_eq!(channels.n(), cfg.n);
    let quad = GainQuadratic::new(channels);
    let n = channels.n();
    let mut best: Option<AscentRun> = None;
    for _ in 0..RESTARTS {
        let start = random_phases(rng, n);
        let run = ascend(&quad, &start);
        if best.as_ref().is_none_or(|b| run.objective > b.objective) {
            best = Some(run);
        }
    }
    best.map(|b| b.point).unwrap_or(CircleManifoldPoint { phi: CVec::zeros(0) })
}

/// Unit-modulus vector with independent uniform phases.
pub fn random_phases<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config_io::{complex_normal, make_rng, Stream};
    use crate::signal::{build_h1, effective_user_channel};

    fn rv(rng: &mut Stream, n: usize) -> CVec {
        CVec::from_fn(n, |_, _| complex_normal(rng, 1.0))
    }

    fn channels(rng: &mut Stream, m: usize, n: usize, k: usize) -> ChannelSet {
        ChannelSet {
            h_dt: rv(rng, m),
            h_rt: rv(rng, n),
            g: CMat::from_fn(n, m, |_, _| complex_normal(rng, 1.0)),
            h_dk: (0..k).map(|_| rv(rng, m)).collect(),
            h_rk: (0..k).map(|_| rv(rng, n)).collect(),
        }
    }

    fn cfg_for(ch: &ChannelSet) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::reference();
        cfg.m = ch.m();
        cfg.n = ch.n();
        cfg.k = ch.k();
        cfg.gamma_db = vec![0.0; ch.k()];
        cfg
    }

    fn direct(phi: &CVec, ch: &ChannelSet) -> f64 {
        let h1 = build_h1(phi, &ch.h_dt, &ch.h_rt, &ch.g);
        h1.norm_squared() + (0..ch.k()).map(|k| effective_user_channel(k, phi, ch).norm_squared()).sum::<f64>()
    }

    #[test]
    fn matches_direct_evaluation() {
        let mut rng = make_rng(1, "manifold-test");
        let ch = channels(&mut rng, 3, 5, 2);
        let cfg = cfg_for(&ch);
        for _ in 0..10 {
            let phi = rv(&mut rng, 5);
            let (a, b) = (init_objective(&phi, &ch, &cfg), direct(&phi, &ch));
            assert!((a - b).abs() < 1e-10 * b.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn scalar_hand_value() {
        let one = C64::new(1.0, 0.0);
        let ch = ChannelSet {
            h_dt: CVec::from_element(1, one),
            h_rt: CVec::from_element(1, one),
            g: CMat::from_element(1, 1, one),
            h_dk: vec![],
            h_rk: vec![],
        };
        let cfg = cfg_for(&ch);
        assert!((init_objective(&CVec::from_element(1, one), &ch, &cfg) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn constant_without_ris_paths() {
        let mut rng = make_rng(2, "manifold-test");
        let mut ch = channels(&mut rng, 3, 4, 0);
        ch.h_rt = CVec::zeros(4);
        let cfg = cfg_for(&ch);
        let phi = random_phases(&mut rng, 4);
        assert_eq!(euclidean_gradient(&phi, &ch, &cfg).norm(), 0.0);
        let run = ascend(&GainQuadratic::new(&ch), &phi);
        assert_eq!(run.trace.len(), 1);
        assert_eq!(run.point.phi, phi);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = make_rng(3, "manifold-test");
        let ch = channels(&mut rng, 4, 6, 2);
        let cfg = cfg_for(&ch);
        let q = GainQuadratic::new(&ch);
        let h = 1e-5;
        for _ in 0..20 {
            let phi = rv(&mut rng, 6);
            let g = euclidean_gradient(&phi, &ch, &cfg);
            let mut fd = CVec::zeros(6);
            for i in 0..6 {
                for (unit, part) in [(C64::new(1.0, 0.0), 0), (C64::new(0.0, 1.0), 1)] {
                    let mut p = phi.clone();
                    p[i] += unit * h;
                    let up = q.value(&p);
                    p[i] -= unit * (2.0 * h);
                    let d = (up - q.value(&p)) / (2.0 * h);
                    if part == 0 {
                        fd[i].re = d;
                    } else {
                        fd[i].im = d;
                    }
                }
            }
            let rel = (&fd - &g).norm() / g.norm();
            assert!(rel < 1e-5, "relative error {rel}");
        }
    }

    #[test]
    fn gradient_scales_with_channel_power() {
        let mut rng = make_rng(4, "manifold-test");
        let ch = channels(&mut rng, 3, 4, 2);
        let cfg = cfg_for(&ch);
        let phi = rv(&mut rng, 4);
        let g = euclidean_gradient(&phi, &ch, &cfg);
        // every affine map of phi doubles: the RIS legs and the direct user links
        let two = C64::new(2.0, 0.0);
        let doubled = ChannelSet {
            h_rt: &ch.h_rt * two,
            h_dk: ch.h_dk.iter().map(|h| h * two).collect(),
            h_rk: ch.h_rk.iter().map(|h| h * two).collect(),
            ..ch.clone()
        };
        let g2 = euclidean_gradient(&phi, &doubled, &cfg);
        assert!((&g2 - &g * C64::new(4.0, 0.0)).norm() < 1e-10 * g.norm());
    }

    #[test]
    fn tangent_projection_properties() {
        let mut rng = make_rng(5, "manifold-test");
        let phi = random_phases(&mut rng, 7);
        assert!(tangent_project(&phi, &phi).norm() < 1e-15);
        let jphi = &phi * C64::new(0.0, 1.0);
        assert!((tangent_project(&phi, &jphi) - &jphi).norm() < 1e-15);
        let g = rv(&mut rng, 7);
        let once = tangent_project(&phi, &g);
        assert!((tangent_project(&phi, &once) - &once).norm() < 1e-14);
        for (t, p) in once.iter().zip(phi.iter()) {
            assert!((t * p.conj()).re.abs() < 1e-14);
        }
    }

    #[test]
    fn retraction_properties() {
        let mut rng = make_rng(6, "manifold-test");
        let phi = random_phases(&mut rng, 6);
        assert_eq!(retract(&phi, &CVec::zeros(6)).phi, phi);
        let big = rv(&mut rng, 6) * C64::new(5.0, 0.0);
        assert!(retract(&phi, &big).phi.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
        let dir = tangent_project(&phi, &rv(&mut rng, 6));
        let err = |t: f64| {
            let s = &dir * C64::new(t, 0.0);
            (retract(&phi, &s).phi - (&phi + s)).norm()
        };
        // second order: halving the step quarters the error
        let ratio = err(1e-3) / err(5e-4);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
        let back = &phi * C64::new(-1.0, 0.0);
        assert_eq!(retract(&phi, &back).phi, phi);
    }

    #[test]
    fn single_element_matches_grid_search() {
        for seed in 0..5 {
            let mut rng = make_rng(seed, "manifold-grid");
            let ch = channels(&mut rng, 3, 1, 2);
            let cfg = cfg_for(&ch);
            let q = GainQuadratic::new(&ch);
            let best = (0..10_000)
                .map(|i| q.value(&CVec::from_element(1, C64::from_polar(1.0, i as f64 * std::f64::consts::TAU / 1e4))))
                .fold(f64::NEG_INFINITY, f64::max);
            let got = q.value(&riemannian_ascent(&ch, &cfg, &mut rng).phi);
            assert!(got >= best - 1e-4 * best.abs(), "{got} vs grid {best}");
        }
    }

    #[test]
    fn ascent_is_monotone_and_beats_random_draws() {
        let mut rng = make_rng(7, "manifold-test");
        let ch = channels(&mut rng, 4, 16, 3);
        let cfg = cfg_for(&ch);
        let q = GainQuadratic::new(&ch);
        let run = ascend(&q, &random_phases(&mut rng, 16));
        assert!(run.trace.windows(2).all(|w| w[1] >= w[0]));
        let out = riemannian_ascent(&ch, &cfg, &mut rng);
        assert!(out.phi.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        let f = q.value(&out.phi);
        for _ in 0..100 {
            assert!(f > q.value(&random_phases(&mut rng, 16)));
        }
    }
}
