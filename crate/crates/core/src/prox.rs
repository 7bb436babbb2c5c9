//! ROF minimization over the Q1 space and the implicit TV flow.
//!
//! The discrete energy is
//!
//! ```text
//! E(w) = TV_q(w) + alpha/2 ||w - f||^2_{L^2},
//! ```
//!
//! where `TV_q` samples `|grad w|` at the `q x q` Gauss points of every cell
//! (the same functional as [`tv_iso`](crate::variation::tv_iso)) and the
//! fidelity uses the consistent mass matrix, so the value the solver drives
//! down is exactly what [`energy`] reports.
//!
//! The minimizer is computed with a first-order primal-dual method. The
//! primal space carries the L^2 inner product of the Q1 space and the dual
//! space (one vector per Gauss point) the quadrature-weighted one; the
//! gradient-sampling operator `K` and its adjoint `M^{-1} K^T W` are then
//! mesh-independent in scale and the primal proximal step is a pointwise
//! formula. Optimality is certified by the primal-dual gap.

use crate::error::{Error, Result};
use crate::grid::{apply_mass, DomainSpec, GridFunction, MassSolver, Norm};
use crate::interp::{InputField, Operator};
use crate::quadrature::gauss_legendre;
use crate::spectral::ShiftedStiffnessSolver;
use crate::variation::{tv_gauss, tv_iso};

/// Power iterations used to estimate `||K||`.
const POWER_ITERS: usize = 50;
/// Margin on the power-iteration estimate, which approaches `||K||` from below.
const NORM_MARGIN: f64 = 1.05;
/// Consecutive iterations of rising energy that count as divergence.
const DIVERGENCE_WINDOW: usize = 100;
/// Initial dual step of the preconditioned method.
const PRECOND_SIGMA0: f64 = 1.0;
/// The preconditioned dual step is rescaled by `BALANCE_STEP` whenever one
/// residual exceeds the other by more than `BALANCE_RATIO`.
const BALANCE_RATIO: f64 = 2.0;
const BALANCE_STEP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenoiseParams {
    /// Fidelity weight.
    pub alpha: f64,
    pub max_iters: usize,
    /// Threshold on the relative primal-dual gap.
    pub tol: f64,
    /// Over-relaxation of the fixed-step method.
    pub theta: f64,
    /// Gauss order of the discrete TV.
    pub quad: usize,
    pub method: Method,
    /// Evaluate the gap every this many iterations.
    pub check_every: usize,
}

/// Primal-dual iteration used by [`RofSolver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// `tau = sigma = 0.99 / ||K||` and over-relaxation `theta`.
    FixedStep,
    /// Steps adapted to the strong convexity `alpha` of the fidelity term,
    /// extrapolation tied to the step change.
    Accelerated,
    /// Primal step in the metric `alpha M + sigma S` (`S` the stiffness
    /// matrix, solved by FFT), with `sigma` balancing the primal and dual
    /// residuals.
    Preconditioned,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FixedStep, Method::Accelerated, Method::Preconditioned];

    pub fn name(self) -> &'static str {
        match self {
            Method::FixedStep => "fixed",
            Method::Accelerated => "accelerated",
            Method::Preconditioned => "preconditioned",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParam(format!("unknown solver method '{s}' (fixed, accelerated, preconditioned)")))
    }
}

impl Default for DenoiseParams {
    fn default() -> Self {
        DenoiseParams {
            alpha: 10.0,
            max_iters: 20_000,
            tol: 1e-6,
            theta: 1.0,
            quad: 2,
            method: Method::Preconditioned,
            check_every: 10,
        }
    }
}

impl DenoiseParams {
    pub fn with_alpha(alpha: f64) -> Self {
        DenoiseParams {
            alpha,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0, 1], got {}", self.theta));
        }
        if self.quad < 2 {
            return Err(Error::QuadOrder { min: 2, got: self.quad });
        }
        if self.check_every == 0 {
            return bad("check_every must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iters: usize,
    /// Relative primal-dual gap at the returned iterate.
    pub final_gap: f64,
    /// Absolute gap, `E(u) - D(xi)`.
    pub abs_gap: f64,
    pub energy: f64,
    pub converged: bool,
}

/// `TV_q(w) + alpha/2 ||w - f||^2_{L^2}`.
pub fn energy(w: &GridFunction, f: &GridFunction, alpha: f64, q: usize) -> Result<f64> {
    let diff = w.sub(f)?;
    let l2 = diff.lp_norm(Norm::L2);
    Ok(tv_iso(w, q)? + 0.5 * alpha * l2 * l2)
}

/// Samples the gradient of a Q1 function at the Gauss points of every cell.
///
/// Dual vectors are stored cell-major, then point-major (`t` slow), then
/// component.
#[derive(Debug, Clone)]
struct GradientSampler {
    domain: DomainSpec,
    q: usize,
    nodes: Vec<f64>,
    /// Quadrature weight of each point within a cell, including the cell area.
    weights: Vec<f64>,
}

impl GradientSampler {
    fn new(domain: DomainSpec, q: usize) -> Self {
        let g = gauss_legendre(q);
        let area = domain.cell_area();
        let mut weights = Vec::with_capacity(q * q);
        for wt in &g.weights {
            for ws in &g.weights {
                weights.push(wt * ws * area);
            }
        }
        GradientSampler {
            domain,
            q,
            nodes: g.nodes,
            weights,
        }
    }

    fn dual_len(&self) -> usize {
        2 * self.q * self.q * self.domain.cell_count()
    }

    /// Node rows and columns of the cell corners: `(row j, row j+1)` offsets
    /// and `(col i, col i+1)` indices, with the torus seam wrapped.
    fn cell_index(&self) -> (Vec<[usize; 2]>, Vec<[usize; 2]>) {
        let d = &self.domain;
        let stride = d.nodes_x();
        let rows = (0..d.n2()).map(|j| [d.corner(0, j), d.corner(0, j + 1)]).collect();
        let cols = (0..d.n1()).map(|i| [i, d.corner(i + 1, 0) % stride]).collect();
        (rows, cols)
    }

    /// `out = K u`.
    fn forward(&self, u: &[f64], out: &mut [f64]) {
        let d = &self.domain;
        let (r1, r2) = (1.0 / d.h1(), 1.0 / d.h2());
        let q = self.q;
        let (rows, cols) = self.cell_index();
        let mut cells = out.chunks_exact_mut(2 * q * q);
        for [b0, b1] in rows {
            for &[c0, c1] in &cols {
                let cell = cells.next().expect("dual length matches the cell count");
                let (a00, a10, a01, a11) = (u[b0 + c0], u[b0 + c1], u[b1 + c0], u[b1 + c1]);
                let (dx0, dx1) = ((a10 - a00) * r1, (a11 - a01) * r1);
                let (dy0, dy1) = ((a01 - a00) * r2, (a11 - a10) * r2);
                for (row, t) in cell.chunks_exact_mut(2 * q).zip(&self.nodes) {
                    let gx = dx0 + (dx1 - dx0) * t;
                    for (pt, s) in row.chunks_exact_mut(2).zip(&self.nodes) {
                        pt[0] = gx;
                        pt[1] = dy0 + (dy1 - dy0) * s;
                    }
                }
            }
        }
    }

    /// `out = K^T W xi`.
    fn adjoint_weighted(&self, xi: &[f64], out: &mut [f64]) {
        let d = &self.domain;
        let (r1, r2) = (1.0 / d.h1(), 1.0 / d.h2());
        let q = self.q;
        let (rows, cols) = self.cell_index();
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut cells = xi.chunks_exact(2 * q * q);
        for [b0, b1] in rows {
            for &[c0, c1] in &cols {
                let cell = cells.next().expect("dual length matches the cell count");
                let (mut sx0, mut sx1, mut sy0, mut sy1) = (0.0, 0.0, 0.0, 0.0);
                for ((row, t), wrow) in cell.chunks_exact(2 * q).zip(&self.nodes).zip(self.weights.chunks_exact(q)) {
                    let mut px = 0.0;
                    for ((pt, s), w) in row.chunks_exact(2).zip(&self.nodes).zip(wrow) {
                        px += w * pt[0];
                        let py = w * pt[1];
                        sy0 += py * (1.0 - s);
                        sy1 += py * s;
                    }
                    sx0 += px * (1.0 - t);
                    sx1 += px * t;
                }
                let (sx0, sx1, sy0, sy1) = (sx0 * r1, sx1 * r1, sy0 * r2, sy1 * r2);
                out[b0 + c0] += -sx0 - sy0;
                out[b0 + c1] += sx0 - sy1;
                out[b1 + c0] += -sx1 + sy0;
                out[b1 + c1] += sx1 + sy1;
            }
        }
    }

    /// `sum_p w_p |v_p|`.
    fn weighted_abs(&self, v: &[f64]) -> f64 {
        let qq = self.q * self.q;
        v.chunks_exact(2)
            .enumerate()
            .map(|(p, g)| self.weights[p % qq] * (g[0] * g[0] + g[1] * g[1]).sqrt())
            .sum()
    }

    /// `sqrt(sum_p w_p |a_p - b_p|^2)`.
    fn weighted_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let qq = self.q * self.q;
        a.chunks_exact(2)
            .zip(b.chunks_exact(2))
            .enumerate()
            .map(|(p, (x, y))| self.weights[p % qq] * ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)))
            .sum::<f64>()
            .sqrt()
    }

    fn weighted_sq(&self, v: &[f64]) -> f64 {
        let qq = self.q * self.q;
        v.chunks_exact(2)
            .enumerate()
            .map(|(p, g)| self.weights[p % qq] * (g[0] * g[0] + g[1] * g[1]))
            .sum()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Deterministic start vector for the power iteration.
fn start_vector(n: usize) -> Vec<f64> {
    let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Reusable ROF solver for one domain. Keeps the dual variable between
/// solves, which warm-starts sequences of related problems such as the
/// steps of a TV flow.
#[derive(Debug)]
pub struct RofSolver {
    params: DenoiseParams,
    k: GradientSampler,
    mass: MassSolver,
    op_norm: f64,
    xi: Vec<f64>,
    stiff: Option<ShiftedStiffnessSolver>,
}

/// Scratch buffers and bookkeeping shared by the iterations.
struct Work {
    kx: Vec<f64>,
    ktw: Vec<f64>,
    g: Vec<f64>,
    diff: Vec<f64>,
}

impl RofSolver {
    pub fn new(domain: DomainSpec, params: DenoiseParams) -> Result<Self> {
        params.validate()?;
        let k = GradientSampler::new(domain, params.quad);
        let mass = MassSolver::new(&domain);
        let mut s = RofSolver {
            params,
            xi: vec![0.0; k.dual_len()],
            k,
            mass,
            op_norm: 0.0,
            stiff: None,
        };
        s.op_norm = s.estimate_norm();
        Ok(s)
    }

    pub fn params(&self) -> &DenoiseParams {
        &self.params
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.k.domain
    }

    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        let p = DenoiseParams { alpha, ..self.params };
        p.validate()?;
        self.params = p;
        Ok(())
    }

    /// Estimated norm of `K` from the Q1 L^2 space to the weighted dual space.
    pub fn operator_norm(&self) -> f64 {
        self.op_norm
    }

    fn estimate_norm(&mut self) -> f64 {
        let d = self.k.domain;
        let mut v = start_vector(d.node_count());
        let mut y = vec![0.0; self.k.dual_len()];
        let mut lambda: f64 = 0.0;
        for _ in 0..POWER_ITERS {
            let mv = apply_mass(&d, &v);
            let nv = dot(&v, &mv).sqrt();
            if nv == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= nv);
            self.k.forward(&v, &mut y);
            lambda = lambda.max(self.k.weighted_sq(&y));
            self.k.adjoint_weighted(&y, &mut v);
            self.mass.solve_in_place(&mut v);
        }
        NORM_MARGIN * lambda.sqrt().max(f64::MIN_POSITIVE)
    }

    pub fn reset_dual(&mut self) {
        self.xi.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Seeds the dual variable from a solver on a coarser mesh of the same
    /// kind; every fine cell takes the mean dual vector of its parent cell.
    pub fn prolong_dual(&mut self, coarse: &RofSolver) -> Result<()> {
        let (fd, cd) = (self.k.domain, coarse.k.domain);
        if fd.kind() != cd.kind() || fd.n1() % cd.n1() != 0 || fd.n2() % cd.n2() != 0 {
            return Err(Error::DomainMismatch);
        }
        let (r1, r2) = (fd.n1() / cd.n1(), fd.n2() / cd.n2());
        let (cq, fq) = (coarse.k.q * coarse.k.q, self.k.q * self.k.q);
        for j in 0..fd.n2() {
            for i in 0..fd.n1() {
                let c = (j / r2) * cd.n1() + i / r1;
                let pts = &coarse.xi[2 * cq * c..2 * cq * (c + 1)];
                let (mut a, mut b) = (0.0, 0.0);
                for p in pts.chunks_exact(2) {
                    a += p[0];
                    b += p[1];
                }
                let (a, b) = (a / cq as f64, b / cq as f64);
                let f = j * fd.n1() + i;
                for p in self.xi[2 * fq * f..2 * fq * (f + 1)].chunks_exact_mut(2) {
                    p[0] = a;
                    p[1] = b;
                }
            }
        }
        Ok(())
    }

    /// Minimizes the ROF energy for data `f`, starting from `init` (or `f`)
    /// and the dual variable left by the previous solve.
    pub fn solve(&mut self, f: &GridFunction, init: Option<&GridFunction>) -> Result<(GridFunction, SolveReport)> {
        let d = self.k.domain;
        if *f.domain() != d {
            return Err(Error::DomainMismatch);
        }
        if let Some(u) = init {
            if *u.domain() != d {
                return Err(Error::DomainMismatch);
            }
        }
        if let Some(i) = f.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        let p = self.params;
        let n = d.node_count();
        let mut x: Vec<f64> = init.map_or_else(|| f.values().to_vec(), |u| u.values().to_vec());
        let mut w = Work {
            kx: vec![0.0; self.k.dual_len()],
            ktw: vec![0.0; n],
            g: vec![0.0; n],
            diff: vec![0.0; n],
        };
        let fv = f.values();
        // divergence only counts while the energy sits above both obvious candidates
        let ceiling = self.primal(&x, fv, &mut w).max(self.primal(fv, fv, &mut w));
        let mut monitor = Monitor::new(ceiling);
        let start = self.gap_report(&x, fv, 0, &mut w);
        if start.converged {
            return Ok((GridFunction::from_raw(d, x), start));
        }

        let mut kx_cur = vec![0.0; self.k.dual_len()];
        let mut kx_bar = vec![0.0; self.k.dual_len()];
        let mut x_old = vec![0.0; n];
        let mut x_bar = x.clone();
        let mut xi_prev = match p.method {
            Method::Preconditioned => vec![0.0; self.k.dual_len()],
            _ => Vec::new(),
        };
        let mut rhs = vec![0.0; n];
        let mf: Vec<f64> = apply_mass(&d, fv).iter().map(|v| v * p.alpha).collect();
        let mut tau = 0.99 / self.op_norm;
        let mut sigma = match p.method {
            Method::Preconditioned => PRECOND_SIGMA0,
            _ => 0.99 / self.op_norm,
        };
        if p.method == Method::Preconditioned {
            self.stiff.get_or_insert_with(|| ShiftedStiffnessSolver::new(&d));
            self.k.forward(&x, &mut kx_cur);
        }

        for it in 1..=p.max_iters {
            match p.method {
                Method::Preconditioned => {
                    // x = (alpha M + sigma S)^{-1} (alpha M f + K^T W (sigma K x - xi))
                    for (t, (k, xi)) in kx_bar.iter_mut().zip(kx_cur.iter().zip(&self.xi)) {
                        *t = sigma * k - xi;
                    }
                    self.k.adjoint_weighted(&kx_bar, &mut rhs);
                    for (r, m) in rhs.iter_mut().zip(&mf) {
                        *r += m;
                    }
                    let stiff = self.stiff.as_mut().expect("created above");
                    stiff.solve_in_place(p.alpha, sigma, &mut rhs);
                    x.copy_from_slice(&rhs);
                    self.k.forward(&x, &mut w.kx);
                    for (i, (kb, (k, kc))) in kx_bar.iter_mut().zip(w.kx.iter().zip(&kx_cur)).enumerate() {
                        *kb = self.xi[i] + sigma * (2.0 * k - kc);
                    }
                    let balance = it % p.check_every == 0;
                    if balance {
                        xi_prev.copy_from_slice(&self.xi);
                    }
                    project_unit(&kx_bar, &mut self.xi);
                    if balance {
                        // residual balancing: constraint residual vs. dual residual
                        let r = self.k.weighted_dist(&self.xi, &xi_prev) / sigma;
                        let s = sigma * self.k.weighted_dist(&w.kx, &kx_cur);
                        if r > BALANCE_RATIO * s {
                            sigma *= BALANCE_STEP;
                        } else if s > BALANCE_RATIO * r {
                            sigma /= BALANCE_STEP;
                        }
                    }
                    std::mem::swap(&mut kx_cur, &mut w.kx);
                }
                Method::FixedStep | Method::Accelerated => {
                    self.k.forward(&x_bar, &mut kx_bar);
                    for (b, xi) in kx_bar.iter_mut().zip(&self.xi) {
                        *b = xi + sigma * *b;
                    }
                    project_unit(&kx_bar, &mut self.xi);
                    self.k.adjoint_weighted(&self.xi, &mut w.g);
                    self.mass.solve_in_place(&mut w.g);
                    x_old.copy_from_slice(&x);
                    let ta = tau * p.alpha;
                    for i in 0..n {
                        x[i] = (x[i] - tau * w.g[i] + ta * fv[i]) / (1.0 + ta);
                    }
                    let theta = if p.method == Method::Accelerated {
                        let th = 1.0 / (1.0 + 2.0 * p.alpha * tau).sqrt();
                        tau *= th;
                        sigma /= th;
                        th
                    } else {
                        p.theta
                    };
                    for i in 0..n {
                        x_bar[i] = x[i] + theta * (x[i] - x_old[i]);
                    }
                }
            }

            if it == 1 || it % p.check_every == 0 || it == p.max_iters {
                if let Some(i) = x.iter().position(|v| !v.is_finite()) {
                    return Err(Error::Diverged(format!("non-finite iterate at node {i}, iteration {it}")));
                }
                let report = self.gap_report(&x, fv, it, &mut w);
                if report.converged {
                    return Ok((GridFunction::from_raw(d, x), report));
                }
                monitor.observe(&x, report, if it == 1 { 1 } else { p.check_every })?;
            }
        }
        let (xb, report) = monitor.best.expect("at least one gap evaluation");
        Ok((GridFunction::from_raw(d, xb), report))
    }

    fn primal(&self, x: &[f64], fv: &[f64], w: &mut Work) -> f64 {
        self.k.forward(x, &mut w.kx);
        let tv = self.k.weighted_abs(&w.kx);
        for ((dv, a), b) in w.diff.iter_mut().zip(x).zip(fv) {
            *dv = a - b;
        }
        let md = apply_mass(&self.k.domain, &w.diff);
        tv + 0.5 * self.params.alpha * dot(&w.diff, &md)
    }

    /// Primal energy at `x`, dual objective at the current dual variable.
    fn gap_report(&mut self, x: &[f64], fv: &[f64], it: usize, w: &mut Work) -> SolveReport {
        let primal = self.primal(x, fv, w);
        // D(xi) = <K^T W xi, f> - |M^{-1} K^T W xi|_M^2 / (2 alpha)
        self.k.adjoint_weighted(&self.xi, &mut w.ktw);
        w.g.copy_from_slice(&w.ktw);
        self.mass.solve_in_place(&mut w.g);
        let dual = dot(&w.ktw, fv) - dot(&w.g, &w.ktw) / (2.0 * self.params.alpha);
        let abs_gap = primal - dual;
        let rel = if abs_gap <= 0.0 { 0.0 } else { abs_gap / primal.abs().max(f64::MIN_POSITIVE) };
        SolveReport {
            iters: it,
            final_gap: rel,
            abs_gap,
            energy: primal,
            converged: rel <= self.params.tol,
        }
    }
}

/// `out_p = v_p / max(1, |v_p|)` for every dual point.
fn project_unit(v: &[f64], out: &mut [f64]) {
    for (o, g) in out.chunks_exact_mut(2).zip(v.chunks_exact(2)) {
        let r2 = g[0] * g[0] + g[1] * g[1];
        let s = if r2 > 1.0 { 1.0 / r2.sqrt() } else { 1.0 };
        o[0] = g[0] * s;
        o[1] = g[1] * s;
    }
}

/// Best iterate so far and the divergence test.
struct Monitor {
    ceiling: f64,
    prev: f64,
    rising: usize,
    best: Option<(Vec<f64>, SolveReport)>,
}

impl Monitor {
    fn new(ceiling: f64) -> Self {
        Monitor {
            ceiling,
            prev: f64::INFINITY,
            rising: 0,
            best: None,
        }
    }

    fn observe(&mut self, x: &[f64], report: SolveReport, span: usize) -> Result<()> {
        if self.best.as_ref().is_none_or(|(_, b)| report.final_gap < b.final_gap) {
            self.best = Some((x.to_vec(), report));
        }
        let e = report.energy;
        if e > self.prev && e > self.ceiling {
            self.rising += span;
            if self.rising >= DIVERGENCE_WINDOW {
                return Err(Error::Diverged(format!(
                    "energy rose for {} consecutive iterations to {e:.6e}, above the starting value {:.6e}",
                    self.rising, self.ceiling
                )));
            }
        } else {
            self.rising = 0;
        }
        self.prev = e;
        Ok(())
    }
}

/// Minimizes `E(w) = TV_q(w) + alpha/2 ||w - f||^2` over the Q1 space of `f`.
///
/// Returns the iterate with relative gap `<= tol`, or the best iterate seen
/// with `converged = false` once `max_iters` is exhausted.
pub fn rof_minimize(f: &GridFunction, p: &DenoiseParams) -> Result<(GridFunction, SolveReport)> {
    rof_minimize_from(f, None, p)
}

/// [`rof_minimize`] with an initial primal iterate.
pub fn rof_minimize_from(
    f: &GridFunction,
    init: Option<&GridFunction>,
    p: &DenoiseParams,
) -> Result<(GridFunction, SolveReport)> {
    if let Some(i) = f.values().iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    let mut solver = RofSolver::new(*f.domain(), *p)?;
    solver.solve(f, init)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub dt: f64,
    pub t_final: f64,
    /// Inner solver settings; `alpha` is replaced by `1/dt`.
    pub inner: DenoiseParams,
}

impl FlowParams {
    pub fn new(dt: f64, t_final: f64, inner: DenoiseParams) -> Result<Self> {
        let p = FlowParams { dt, t_final, inner };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0 && self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::InvalidParam("dt and T must be positive".into()));
        }
        if self.dt > self.t_final * (1.0 + 1e-12) {
            return Err(Error::InvalidParam(format!(
                "dt = {} exceeds T = {}",
                self.dt, self.t_final
            )));
        }
        DenoiseParams {
            alpha: 1.0 / self.dt,
            ..self.inner
        }
        .validate()
    }

    /// Number of implicit steps, `floor(T/dt)`.
    pub fn steps(&self) -> usize {
        ((self.t_final / self.dt) * (1.0 + 1e-12)).floor() as usize
    }
}

/// Iterates of an implicit TV flow.
#[derive(Debug, Clone)]
pub struct FlowRun {
    /// `u^0, ..., u^K`, or a prefix when the run aborted.
    pub iterates: Vec<GridFunction>,
    pub reports: Vec<SolveReport>,
    pub aborted: Option<String>,
}

impl FlowRun {
    pub fn completed(&self) -> bool {
        self.aborted.is_none()
    }
}

/// Implicit Euler TV flow: `u^0 = interp(u0)`, then each step minimizes
/// `TV_q(u) + 1/(2 dt) ||u - u^k||^2`.
pub fn tv_flow(u0: &InputField, d: &DomainSpec, p: &FlowParams, interp: Operator) -> Result<FlowRun> {
    p.validate()?;
    let start = interp.apply(u0, d)?;
    tv_flow_from(start, p)
}

/// [`tv_flow`] from an already discretized initial state.
pub fn tv_flow_from(start: GridFunction, p: &FlowParams) -> Result<FlowRun> {
    p.validate()?;
    let inner = DenoiseParams {
        alpha: 1.0 / p.dt,
        ..p.inner
    };
    let mut solver = RofSolver::new(*start.domain(), inner)?;
    let mut run = FlowRun {
        iterates: vec![start],
        reports: Vec::new(),
        aborted: None,
    };
    for step in 0..p.steps() {
        let prev = run.iterates.last().expect("non-empty");
        match solver.solve(prev, Some(prev)) {
            Ok((next, rep)) if rep.converged => {
                run.iterates.push(next);
                run.reports.push(rep);
            }
            Ok((_, rep)) => {
                run.aborted = Some(format!(
                    "step {} did not converge: relative gap {:.3e} after {} iterations",
                    step + 1,
                    rep.final_gap,
                    rep.iters
                ));
                run.reports.push(rep);
                break;
            }
            Err(e) => {
                run.aborted = Some(format!("step {} failed: {e}", step + 1));
                break;
            }
        }
    }
    Ok(run)
}

/// Discrete TV used by the solver (Gauss order `q`), exposed for reporting.
pub fn solver_tv(u: &GridFunction, q: usize) -> f64 {
    tv_gauss(u, q)
}
