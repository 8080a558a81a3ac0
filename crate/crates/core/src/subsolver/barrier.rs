//! Log-barrier path following over the real embedding.
//!
//! The Newton system is block diagonal (one dense block per group of
//! coordinates coupled by a quadratic factor row) plus a low-rank update for
//! gradient outer products whose support crosses blocks, solved with the
//! Woodbury identity.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Real coefficients acting on `x[start..start + v.len()]`.
#[derive(Debug, Clone)]
pub(crate) struct RRow {
    pub start: usize,
    pub v: Vec<f64>,
}

impl RRow {
    fn end(&self) -> usize {
        self.start + self.v.len()
    }

    fn dot(&self, x: &[f64]) -> f64 {
        self.v.iter().zip(&x[self.start..self.end()]).map(|(a, b)| a * b).sum()
    }

    fn axpy(&self, alpha: f64, out: &mut [f64]) {
        let end = self.end();
        for (o, a) in out[self.start..end].iter_mut().zip(&self.v) {
            *o += alpha * a;
        }
    }
}

/// `lin . x - sum_r (r . x)^2 + offset >= 0`.
#[derive(Debug, Clone)]
pub(crate) struct RQuad {
    pub lin: Vec<RRow>,
    pub rows: Vec<RRow>,
    pub offset: f64,
}

impl RQuad {
    pub fn value(&self, x: &[f64]) -> f64 {
        let l: f64 = self.lin.iter().map(|r| r.dot(x)).sum();
        let q: f64 = self.rows.iter().map(|r| r.dot(x).powi(2)).sum();
        l - q + self.offset
    }

    fn span(&self) -> Option<(usize, usize)> {
        self.lin
            .iter()
            .chain(&self.rows)
            .filter(|r| !r.v.is_empty())
            .map(|r| (r.start, r.end()))
            .reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }
}

/// `r2 - ||x[start..start+len]||^2 >= 0`.
#[derive(Debug, Clone)]
pub(crate) struct RBall {
    pub start: usize,
    pub len: usize,
    pub r2: f64,
}

impl RBall {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.r2 - x[self.start..self.start + self.len].iter().map(|v| v * v).sum::<f64>()
    }
}

/// Maximise `c . x - 1/2 sum_i prox_i (x_i - center_i)^2` over the
/// constraints.
#[derive(Debug, Clone)]
pub(crate) struct RealProblem {
    pub dim: usize,
    pub c: Vec<f64>,
    pub prox: Vec<f64>,
    pub center: Vec<f64>,
    pub quads: Vec<RQuad>,
    pub balls: Vec<RBall>,
}

impl RealProblem {
    pub fn n_constraints(&self) -> usize {
        self.quads.len() + self.balls.len()
    }

    pub fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.quads.iter().all(|q| q.value(x) > 0.0) && self.balls.iter().all(|b| b.value(x) > 0.0)
    }

    fn objective_gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| self.c[i] - self.prox[i] * (x[i] - self.center[i])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BarrierStatus {
    Converged,
    MaxIters,
    Stopped,
    Numerical,
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierOutcome {
    pub x: Vec<f64>,
    pub t: f64,
    pub steps: usize,
    pub status: BarrierStatus,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierSettings {
    pub tol: f64,
    pub max_steps: usize,
    pub mu: f64,
    pub newton_eps: f64,
}

struct Layout {
    blocks: Vec<(usize, usize)>,
    block_of: Vec<usize>,
    quad_block: Vec<Option<usize>>,
    ball_block: Vec<Option<usize>>,
}

impl Layout {
    fn new(p: &RealProblem) -> Self {
        let mut iv: Vec<(usize, usize)> = p
            .quads
            .iter()
            .flat_map(|q| q.rows.iter())
            .filter(|r| !r.v.is_empty())
            .map(|r| (r.start, r.end()))
            .collect();
        iv.sort_unstable();
        let mut merged: Vec<(usize, usize)> = Vec::new();
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a < last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let mut blocks = Vec::new();
        let mut pos = 0;
        for (a, b) in merged {
            for i in pos..a {
                blocks.push((i, 1));
            }
            blocks.push((a, b - a));
            pos = b;
        }
        for i in pos..p.dim {
            blocks.push((i, 1));
        }
        let mut block_of = vec![0; p.dim];
        for (bi, &(s, l)) in blocks.iter().enumerate() {
            block_of[s..s + l].iter_mut().for_each(|v| *v = bi);
        }
        let within = |a: usize, b: usize| -> Option<usize> {
            (block_of[a] == block_of[b - 1]).then_some(block_of[a])
        };
        let quad_block = p.quads.iter().map(|q| q.span().and_then(|(a, b)| within(a, b))).collect();
        let ball_block = p
            .balls
            .iter()
            .map(|b| if b.len == 0 { None } else { within(b.start, b.start + b.len) })
            .collect();
        Layout {
            blocks,
            block_of,
            quad_block,
            ball_block,
        }
    }
}

/// Constraint values and factor-row products at one iterate.
struct Eval {
    q: Vec<f64>,
    rx: Vec<Vec<f64>>,
    s: Vec<f64>,
}

pub(crate) struct Engine<'a> {
    p: &'a RealProblem,
    layout: Layout,
}

fn chol(mut m: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let d = m.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    for i in 0..m.nrows() {
        m[(i, i)] += 1e-12 * d;
    }
    Cholesky::new(m)
}

impl<'a> Engine<'a> {
    pub fn new(p: &'a RealProblem) -> Self {
        Engine {
            p,
            layout: Layout::new(p),
        }
    }

    fn eval(&self, x: &[f64]) -> Eval {
        let mut q = Vec::with_capacity(self.p.quads.len());
        let mut rx = Vec::with_capacity(self.p.quads.len());
        for c in &self.p.quads {
            let dots: Vec<f64> = c.rows.iter().map(|r| r.dot(x)).collect();
            let l: f64 = c.lin.iter().map(|r| r.dot(x)).sum();
            q.push(l - dots.iter().map(|d| d * d).sum::<f64>() + c.offset);
            rx.push(dots);
        }
        let s = self.p.balls.iter().map(|b| b.value(x)).collect();
        Eval { q, rx, s }
    }

    fn quad_gradient(&self, i: usize, ev: &Eval, out: &mut [f64]) {
        let c = &self.p.quads[i];
        for r in &c.lin {
            r.axpy(1.0, out);
        }
        for (r, d) in c.rows.iter().zip(&ev.rx[i]) {
            r.axpy(-2.0 * d, out);
        }
    }

    /// Newton direction, squared decrement and gradient norm for
    /// `-t f + barrier`.
    fn newton(&self, x: &[f64], t: f64, ev: &Eval) -> Option<(Vec<f64>, f64, f64)> {
        let p = self.p;
        let n = p.dim;
        let lay = &self.layout;
        let gf = p.objective_gradient(x);
        let mut g: Vec<f64> = gf.iter().map(|v| -t * v).collect();

        // every block gets prox diagonal plus A A^T, where the columns of A
        // collect scaled factor rows and folded gradient outer products
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut col_block: Vec<usize> = Vec::new();
        let mut diag: Vec<f64> = (0..n).map(|i| t * p.prox[i]).collect();
        let mut push_col = |bi: usize, src_start: usize, v: &[f64], scale: f64| {
            let (s, l) = lay.blocks[bi];
            let mut col = vec![0.0; l];
            for (a, va) in v.iter().enumerate() {
                col[src_start + a - s] = scale * va;
            }
            cols.push(col);
            col_block.push(bi);
        };
        let mut u_cols: Vec<Vec<f64>> = Vec::new();
        let mut tmp = vec![0.0; n];
        for (i, c) in p.quads.iter().enumerate() {
            let qi = ev.q[i];
            let w = (2.0 / qi).sqrt();
            for r in &c.rows {
                if !r.v.is_empty() {
                    push_col(lay.block_of[r.start], r.start, &r.v, w);
                }
            }
            tmp.iter_mut().for_each(|v| *v = 0.0);
            self.quad_gradient(i, ev, &mut tmp);
            for k in 0..n {
                tmp[k] /= qi;
                g[k] -= tmp[k];
            }
            match lay.quad_block[i] {
                Some(bi) => {
                    let (s, l) = lay.blocks[bi];
                    push_col(bi, s, &tmp[s..s + l], 1.0);
                }
                None => u_cols.push(tmp.clone()),
            }
        }
        for (j, (b, s)) in p.balls.iter().zip(&ev.s).enumerate() {
            let w = 2.0 / s;
            let range = b.start..b.start + b.len;
            let u: Vec<f64> = x[range.clone()].iter().map(|v| -2.0 * v / s).collect();
            for (k, uk) in range.zip(&u) {
                diag[k] += w;
                g[k] -= uk;
            }
            match lay.ball_block[j] {
                Some(bi) => push_col(bi, b.start, &u, 1.0),
                None if b.len > 0 => {
                    let mut full = vec![0.0; n];
                    full[b.start..b.start + b.len].copy_from_slice(&u);
                    u_cols.push(full);
                }
                None => {}
            }
        }
        let mut per_block: Vec<Vec<usize>> = vec![Vec::new(); lay.blocks.len()];
        for (ci, &bi) in col_block.iter().enumerate() {
            per_block[bi].push(ci);
        }
        let blocks: Vec<DMatrix<f64>> = lay
            .blocks
            .iter()
            .zip(&per_block)
            .map(|(&(s, l), idx)| {
                let mut m = DMatrix::from_diagonal(&DVector::from_column_slice(&diag[s..s + l]));
                if !idx.is_empty() {
                    let a = DMatrix::from_fn(l, idx.len(), |r, c| cols[idx[c]][r]);
                    m += &a * a.transpose();
                }
                m
            })
            .collect();

        let factors: Vec<Cholesky<f64, Dyn>> = blocks.into_iter().map(chol).collect::<Option<_>>()?;
        let solve_b = |rhs: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for (f, &(s, l)) in factors.iter().zip(&lay.blocks) {
                let v = f.solve(&DVector::from_column_slice(&rhs[s..s + l]));
                out[s..s + l].copy_from_slice(v.as_slice());
            }
            out
        };

        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
        let y = solve_b(&neg_g);
        let dx = if u_cols.is_empty() {
            y
        } else {
            let pcount = u_cols.len();
            let z: Vec<Vec<f64>> = u_cols.iter().map(|u| solve_b(u)).collect();
            let mut cap = DMatrix::<f64>::identity(pcount, pcount);
            for a in 0..pcount {
                for b in 0..pcount {
                    cap[(a, b)] += dot(&u_cols[a], &z[b]);
                }
            }
            let cap = chol(cap)?;
            let uty = DVector::from_iterator(pcount, u_cols.iter().map(|u| dot(u, &y)));
            let w = cap.solve(&uty);
            let mut dx = y;
            for (zb, wb) in z.iter().zip(w.iter()) {
                for k in 0..n {
                    dx[k] -= zb[k] * wb;
                }
            }
            dx
        };
        let dec = -dot(&g, &dx);
        if !dec.is_finite() {
            return None;
        }
        Some((dx, dec, dot(&g, &g).sqrt()))
    }

    /// Backtracking step `alpha` along `dx` that keeps every constraint
    /// strictly satisfied and gives sufficient barrier decrease. Differences
    /// are evaluated without cancellation so steps stay meaningful close to
    /// the boundary.
    fn line_search(&self, x: &[f64], dx: &[f64], t: f64, dec: f64, ev: &Eval) -> Option<f64> {
        let p = self.p;
        let mut cdx = 0.0;
        let mut pdx = 0.0;
        let mut dd = 0.0;
        for i in 0..p.dim {
            cdx += p.c[i] * dx[i];
            pdx += p.prox[i] * (x[i] - p.center[i]) * dx[i];
            dd += p.prox[i] * dx[i] * dx[i];
        }
        let quad_terms: Vec<(f64, Vec<(f64, f64)>)> = p
            .quads
            .iter()
            .zip(&ev.rx)
            .map(|(c, rx)| {
                let ldx: f64 = c.lin.iter().map(|r| r.dot(dx)).sum();
                let rows = c.rows.iter().zip(rx).map(|(r, &x0)| (x0, r.dot(dx))).collect();
                (ldx, rows)
            })
            .collect();
        let ball_terms: Vec<(f64, f64)> = p
            .balls
            .iter()
            .map(|b| {
                let r = b.start..b.start + b.len;
                let xd: f64 = x[r.clone()].iter().zip(&dx[r.clone()]).map(|(a, b)| a * b).sum();
                let d2: f64 = dx[r].iter().map(|v| v * v).sum();
                (xd, d2)
            })
            .collect();

        let delta = |alpha: f64| -> Option<f64> {
            let df = alpha * cdx - alpha * pdx - 0.5 * alpha * alpha * dd;
            let mut phi = -t * df;
            for ((ldx, rows), q) in quad_terms.iter().zip(&ev.q) {
                let mut dq = alpha * ldx;
                for &(r0, rd) in rows {
                    dq -= alpha * rd * (2.0 * r0 + alpha * rd);
                }
                let ratio = dq / q;
                if !(ratio > -1.0) {
                    return None;
                }
                phi -= ratio.ln_1p();
            }
            for ((xd, d2), s) in ball_terms.iter().zip(&ev.s) {
                let ds = -(2.0 * alpha * xd + alpha * alpha * d2);
                let ratio = ds / s;
                if !(ratio > -1.0) {
                    return None;
                }
                phi -= ratio.ln_1p();
            }
            Some(phi)
        };

        let mut alpha = 1.0;
        while alpha > 1e-20 {
            if let Some(d) = delta(alpha) {
                if d <= -0.01 * alpha * dec {
                    return Some(alpha);
                }
            }
            alpha *= 0.5;
        }
        None
    }

    /// Path following from the strictly feasible `x0`. `stop` is checked
    /// after every accepted step.
    pub fn run(
        &self,
        x0: Vec<f64>,
        t0: f64,
        settings: &BarrierSettings,
        stop: Option<&dyn Fn(&[f64]) -> bool>,
    ) -> BarrierOutcome {
        let m = self.p.n_constraints().max(1) as f64;
        let mut x = x0;
        let mut t = t0;
        let mut steps = 0;
        loop {
            // on the last stage the gradient itself must be small, not just
            // the decrement, so the returned multipliers certify optimality
            let last = m / t <= settings.tol;
            let mut prev_gnorm = f64::INFINITY;
            loop {
                if steps >= settings.max_steps {
                    return BarrierOutcome {
                        x,
                        t,
                        steps,
                        status: BarrierStatus::MaxIters,
                    };
                }
                let ev = self.eval(&x);
                let Some((dx, dec, gnorm)) = self.newton(&x, t, &ev) else {
                    return BarrierOutcome {
                        x,
                        t,
                        steps,
                        status: BarrierStatus::Numerical,
                    };
                };
                if dec / 2.0 <= settings.newton_eps
                    && (!last || gnorm / t <= 0.5 * settings.tol || gnorm > 0.5 * prev_gnorm)
                {
                    // the last test stops at the rounding floor
                    break;
                }
                prev_gnorm = gnorm;
                let Some(alpha) = self.line_search(&x, &dx, t, dec, &ev) else {
                    break;
                };
                let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
                if !self.p.strictly_feasible(&trial) {
                    break;
                }
                x = trial;
                steps += 1;
                if let Some(f) = stop {
                    if f(&x) {
                        return BarrierOutcome {
                            x,
                            t,
                            steps,
                            status: BarrierStatus::Stopped,
                        };
                    }
                }
            }
            if last || self.p.n_constraints() == 0 {
                return BarrierOutcome {
                    x,
                    t,
                    steps,
                    status: BarrierStatus::Converged,
                };
            }
            t = (t * settings.mu).min(m / settings.tol);
        }
    }

    /// Multipliers `1/(t q_i)` (quads first, then balls).
    pub fn multipliers(&self, x: &[f64], t: f64) -> Vec<f64> {
        let ev = self.eval(x);
        ev.q.iter().chain(&ev.s).map(|v| 1.0 / (t * v)).collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
