//! Deterministic solver for concave maximisation problems of the form
//!
//! ```text
//! maximise   Re{c^H x} - (w/2) ||x - x0||^2
//! subject to Re{l_i^H x} - sum_r |a_ir^H x|^2 + offset_i >= 0
//!            ||x_S|| <= radius
//! ```
//!
//! over complex `x`. Quadratic forms are given through their factor rows so
//! they are PSD by construction. The problem is embedded in real coordinates
//! as interleaved `(re, im)` pairs and solved by a log-barrier method.

mod barrier;

use barrier::{BarrierSettings, BarrierStatus, Engine, RBall, RQuad, RRow, RealProblem};

use crate::C64;

/// Complex coefficients `a` acting on `x[start..start + a.len()]` as `a^H x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub coeffs: Vec<C64>,
}

impl Segment {
    pub fn new(start: usize, coeffs: Vec<C64>) -> Self {
        Self { start, coeffs }
    }

    pub fn end(&self) -> usize {
        self.start + self.coeffs.len()
    }

    /// `a^H x[start..]`.
    pub fn dot(&self, x: &[C64]) -> C64 {
        self.coeffs.iter().zip(&x[self.start..self.end()]).map(|(a, v)| a.conj() * v).sum()
    }
}

/// `Re{sum_l l^H x} - sum_r |a_r^H x|^2 + offset >= 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadConstraint {
    pub linear: Vec<Segment>,
    pub factors: Vec<Segment>,
    pub offset: f64,
}

impl QuadConstraint {
    pub fn value(&self, x: &[C64]) -> f64 {
        let l: f64 = self.linear.iter().map(|s| s.dot(x).re).sum();
        let q: f64 = self.factors.iter().map(|s| s.dot(x).norm_sqr()).sum();
        l - q + self.offset
    }

    /// Complex gradient `d/dRe + j d/dIm`.
    fn gradient_into(&self, x: &[C64], out: &mut [C64]) {
        for s in &self.linear {
            for (o, a) in out[s.start..s.end()].iter_mut().zip(&s.coeffs) {
                *o += a;
            }
        }
        for s in &self.factors {
            let d = s.dot(x);
            for (o, a) in out[s.start..s.end()].iter_mut().zip(&s.coeffs) {
                *o -= a * d * 2.0;
            }
        }
    }
}

/// `||x[start..start+len]|| <= radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallConstraint {
    pub start: usize,
    pub len: usize,
    pub radius: f64,
}

impl BallConstraint {
    /// `radius^2 - ||x_S||^2`.
    pub fn value(&self, x: &[C64]) -> f64 {
        self.radius * self.radius - x[self.start..self.start + self.len].iter().map(|z| z.norm_sqr()).sum::<f64>()
    }
}

/// `-(weight/2) ||x - center||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Proximal {
    pub center: Vec<C64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    pub dim: usize,
    pub linear: Vec<C64>,
    pub proximal: Option<Proximal>,
    pub constraints: Vec<QuadConstraint>,
    pub balls: Vec<BallConstraint>,
}

impl ConvexSubproblem {
    pub fn new(linear: Vec<C64>) -> Self {
        Self {
            dim: linear.len(),
            linear,
            proximal: None,
            constraints: Vec::new(),
            balls: Vec::new(),
        }
    }

    pub fn objective(&self, x: &[C64]) -> f64 {
        let mut f: f64 = self.linear.iter().zip(x).map(|(c, v)| (c.conj() * v).re).sum();
        if let Some(p) = &self.proximal {
            f -= 0.5 * p.weight * x.iter().zip(&p.center).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        }
        f
    }

    /// Largest constraint violation `max(0, -value)`.
    pub fn max_violation(&self, x: &[C64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .chain(self.balls.iter().map(|b| b.value(x)))
            .fold(0.0, |acc, v| acc.max(-v))
    }

    /// Normalisation applied to the objective before solving.
    pub fn objective_scale(&self) -> f64 {
        let c = self.linear.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let p = match &self.proximal {
            Some(p) => p.weight * (1.0 + p.center.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()),
            None => 0.0,
        };
        c + p
    }

    fn validate(&self) -> Result<(), String> {
        if self.linear.len() != self.dim {
            return Err("linear coefficient length differs from dimension".into());
        }
        if let Some(p) = &self.proximal {
            if p.center.len() != self.dim || !(p.weight >= 0.0) {
                return Err("bad proximal term".into());
            }
        }
        for c in &self.constraints {
            if c.linear.iter().chain(&c.factors).any(|s| s.end() > self.dim) {
                return Err("constraint segment out of range".into());
            }
        }
        for b in &self.balls {
            if b.start + b.len > self.dim || !(b.radius > 0.0) {
                return Err("bad ball constraint".into());
            }
        }
        Ok(())
    }

    fn to_real(&self, scale: f64) -> RealProblem {
        let n = 2 * self.dim;
        let mut c = vec![0.0; n];
        for (i, z) in self.linear.iter().enumerate() {
            c[2 * i] = z.re / scale;
            c[2 * i + 1] = z.im / scale;
        }
        let (prox, center) = match &self.proximal {
            Some(p) => (vec![p.weight / scale; n], embed(&p.center)),
            None => (vec![0.0; n], vec![0.0; n]),
        };
        let quads = self
            .constraints
            .iter()
            .map(|q| RQuad {
                lin: q.linear.iter().map(linear_row).collect(),
                rows: q.factors.iter().flat_map(factor_rows).collect(),
                offset: q.offset,
            })
            .collect();
        let balls = self
            .balls
            .iter()
            .map(|b| RBall {
                start: 2 * b.start,
                len: 2 * b.len,
                r2: b.radius * b.radius,
            })
            .collect();
        RealProblem {
            dim: n,
            c,
            prox,
            center,
            quads,
            balls,
        }
    }
}

fn embed(x: &[C64]) -> Vec<f64> {
    x.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn unembed(x: &[f64]) -> Vec<C64> {
    x.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// `Re{a^H x}` in real coordinates.
fn linear_row(s: &Segment) -> RRow {
    RRow {
        start: 2 * s.start,
        v: s.coeffs.iter().flat_map(|a| [a.re, a.im]).collect(),
    }
}

/// `Re{a^H x}` and `Im{a^H x}` rows.
fn factor_rows(s: &Segment) -> [RRow; 2] {
    [
        linear_row(s),
        RRow {
            start: 2 * s.start,
            v: s.coeffs.iter().flat_map(|a| [-a.im, a.re]).collect(),
        },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIters,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsolveResult {
    pub solution: Vec<C64>,
    pub objective: f64,
    pub max_violation: f64,
    /// Normalised KKT residual, see [`kkt_residual`].
    pub stationarity: f64,
    /// Newton steps over all phases.
    pub iterations: usize,
    pub status: SolveStatus,
    /// Constraint multipliers, quadratic constraints first, then balls.
    pub multipliers: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_steps: usize,
    pub mu: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_steps: 200, mu: 20.0 }
    }
}

/// Lagrangian stationarity plus complementarity plus primal violation,
/// with the first two divided by the objective scale.
pub fn kkt_residual(problem: &ConvexSubproblem, candidate: &[C64], multipliers: &[f64]) -> f64 {
    let n = problem.dim;
    let mut grad: Vec<C64> = problem.linear.clone();
    if let Some(p) = &problem.proximal {
        for i in 0..n {
            grad[i] -= (candidate[i] - p.center[i]) * p.weight;
        }
    }
    let mut comp = 0.0;
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    for (c, &lam) in problem.constraints.iter().zip(multipliers) {
        tmp.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
        c.gradient_into(candidate, &mut tmp);
        for i in 0..n {
            grad[i] += tmp[i] * lam;
        }
        comp += lam * c.value(candidate).abs();
    }
    for (b, &lam) in problem.balls.iter().zip(multipliers.iter().skip(problem.constraints.len())) {
        for i in b.start..b.start + b.len {
            grad[i] -= candidate[i] * (2.0 * lam);
        }
        comp += lam * b.value(candidate).abs();
    }
    let g = grad.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let scale = match problem.objective_scale() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    (g + comp) / scale + problem.max_violation(candidate)
}

pub fn solve(problem: &ConvexSubproblem, warm_start: Option<&[C64]>, tol_inner: f64) -> SubsolveResult {
    solve_with(problem, warm_start, tol_inner, &SolverOptions::default())
}

pub fn solve_with(
    problem: &ConvexSubproblem,
    warm_start: Option<&[C64]>,
    tol_inner: f64,
    opts: &SolverOptions,
) -> SubsolveResult {
    let n_mult = problem.constraints.len() + problem.balls.len();
    let fallback = warm_start.map(|w| w.to_vec()).unwrap_or_else(|| vec![C64::new(0.0, 0.0); problem.dim]);
    let finish = |x: Vec<C64>, mult: Vec<f64>, iterations: usize, status: SolveStatus| {
        let stationarity = kkt_residual(problem, &x, &mult);
        SubsolveResult {
            objective: problem.objective(&x),
            max_violation: problem.max_violation(&x),
            stationarity,
            iterations,
            status,
            multipliers: mult,
            solution: x,
        }
    };
    if problem.validate().is_err() || warm_start.is_some_and(|w| w.len() != problem.dim) {
        return finish(fallback, vec![0.0; n_mult], 0, SolveStatus::Infeasible);
    }

    let raw_scale = problem.objective_scale();
    let scale = if raw_scale > 0.0 { raw_scale } else { 1.0 };
    let real = problem.to_real(scale);
    let settings = BarrierSettings {
        tol: tol_inner,
        max_steps: opts.max_steps,
        mu: opts.mu,
        newton_eps: 1e-10,
    };

    let x_start = embed(&fallback);
    let mut steps = 0;
    let x_feasible = if real.strictly_feasible(&x_start) {
        x_start.clone()
    } else {
        match phase_one(&real, &x_start, &settings) {
            (Some(x), s) => {
                steps += s;
                x
            }
            (None, s) => return finish(fallback, vec![0.0; n_mult], s, SolveStatus::Infeasible),
        }
    };
    if raw_scale == 0.0 {
        // constant objective: any feasible point is optimal
        return finish(unembed(&x_feasible), vec![0.0; n_mult], steps, SolveStatus::Optimal);
    }

    let engine = Engine::new(&real);
    let m = real.n_constraints().max(1) as f64;
    // the objective is normalised, so this guesses a relative gap of 0.1
    // from a supplied warm start and of 1 otherwise
    let guess = if warm_start.is_some() { 0.1 } else { 1.0 };
    let t0 = (m / guess).min(m / tol_inner);
    let out = engine.run(x_feasible, t0, &settings, None);
    steps += out.steps;
    let mult: Vec<f64> = engine.multipliers(&out.x, out.t).iter().map(|l| l * scale).collect();
    let x = unembed(&out.x);
    let mut status = match out.status {
        BarrierStatus::Converged => SolveStatus::Optimal,
        _ => SolveStatus::MaxIters,
    };
    let mut result = finish(x, mult, steps, status);

    // never return something worse than a feasible warm start
    if let Some(w) = warm_start {
        if problem.max_violation(w) <= tol_inner && problem.objective(w) > result.objective {
            let mult = result.multipliers.clone();
            status = result.status;
            result = finish(w.to_vec(), mult, steps, status);
        }
    }
    if result.status == SolveStatus::Optimal && result.stationarity > 10.0 * tol_inner {
        result.status = SolveStatus::MaxIters;
    }
    result
}

/// Finds a strictly feasible point by maximising the common slack `s` of
/// the normalised constraints, stopping as soon as `s > 0`.
fn phase_one(p: &RealProblem, x_start: &[f64], settings: &BarrierSettings) -> (Option<Vec<f64>>, usize) {
    // balls are centred at the origin, shrinking enters all of them
    let mut theta: f64 = 1.0;
    for b in &p.balls {
        let nrm2: f64 = x_start[b.start..b.start + b.len].iter().map(|v| v * v).sum();
        if nrm2 > 0.0 {
            theta = theta.min(0.99 * (b.r2 / nrm2).sqrt());
        }
    }
    let x0: Vec<f64> = x_start.iter().map(|v| v * theta).collect();
    if p.strictly_feasible(&x0) {
        return (Some(x0), 0);
    }

    let n = p.dim;
    let sigma: Vec<f64> = p
        .quads
        .iter()
        .map(|q| {
            let l: f64 = q.lin.iter().flat_map(|r| r.v.iter()).map(|v| v * v).sum::<f64>().sqrt();
            let r: f64 = q.rows.iter().flat_map(|r| r.v.iter()).map(|v| v * v).sum();
            let s = q.offset.abs() + l + r;
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut quads: Vec<RQuad> = p
        .quads
        .iter()
        .zip(&sigma)
        .map(|(q, &s)| {
            let mut lin: Vec<RRow> = q
                .lin
                .iter()
                .map(|r| RRow {
                    start: r.start,
                    v: r.v.iter().map(|v| v / s).collect(),
                })
                .collect();
            lin.push(RRow { start: n, v: vec![-1.0] });
            RQuad {
                lin,
                rows: q
                    .rows
                    .iter()
                    .map(|r| RRow {
                        start: r.start,
                        v: r.v.iter().map(|v| v / s.sqrt()).collect(),
                    })
                    .collect(),
                offset: q.offset / s,
            }
        })
        .collect();
    quads.push(RQuad {
        lin: vec![RRow { start: n, v: vec![-1.0] }],
        rows: Vec::new(),
        offset: 1.0,
    });
    let eps = 1e-6;
    let mut c = vec![0.0; n + 1];
    c[n] = 1.0;
    let mut prox = vec![eps; n + 1];
    prox[n] = 0.0;
    let mut center = x0.clone();
    center.push(0.0);
    let aux = RealProblem {
        dim: n + 1,
        c,
        prox,
        center,
        quads,
        balls: p.balls.clone(),
    };
    let s_min = p.quads.iter().zip(&sigma).map(|(q, s)| q.value(&x0) / s).fold(f64::INFINITY, f64::min);
    let mut z0 = x0.clone();
    z0.push(s_min.min(0.5) - 1.0);
    let engine = Engine::new(&aux);
    let stop = |z: &[f64]| z[n] > 0.0 && p.strictly_feasible(&z[..n]);
    let out = engine.run(z0, 1.0, settings, Some(&stop));
    if out.status == BarrierStatus::Stopped {
        (Some(out.x[..n].to_vec()), out.steps)
    } else {
        (None, out.steps)
    }
}
