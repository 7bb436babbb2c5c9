//! Reproducible property suites and convergence-rate runs.
//!
//! Errors against analytic shapes are integrated with a tensor Gauss rule
//! on every coarse cell. Cells cut by the jump of an indicator shape are
//! split recursively until the pieces are `2^-MAX_DEPTH` of a cell wide, so
//! the measurement error is far below the errors being measured.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{solve_mass, DomainKind, DomainSpec, GridFunction, Norm};
use crate::interp::{InputField, Operator, DEFAULT_QUAD_RES};
use crate::parallel::map_indexed;
use crate::prox::{solver_tv, tv_flow, DenoiseParams, FlowParams, RofSolver, SolveReport};
use crate::quadrature::{gauss_legendre, Rule};
use crate::variation::{directional_variation, tv_iso, Direction, DEFAULT_TV_QUAD};

/// Gauss order per (sub)cell when integrating errors and loads.
const ERR_GAUSS: usize = 6;
/// Subdivision depth for cells cut by a jump.
const MAX_DEPTH: usize = 8;
/// Relative slack of the exact directional and L^p checks.
pub const EXACT_SLACK: f64 = 1e-12;
/// Absolute slack of the quadrature-based isotropic check.
pub const ISO_SLACK: f64 = 1e-6;
/// Gap tolerance of the reference ROF solve.
pub const REFERENCE_TOL: f64 = 1e-9;

/// Test data: analytic shapes and random fine-grid fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestShape {
    Constant(f64),
    /// `c0 + c1 x + c2 y`.
    Affine { c0: f64, c1: f64, c2: f64 },
    /// `sin(2 pi x) sin(2 pi y)`.
    SmoothSine,
    /// Indicator of the closed disk; must lie inside the unit square.
    DiskIndicator { r: f64, center: (f64, f64) },
    /// Indicator of `{x_axis < threshold}`.
    HalfPlane { axis: Direction, threshold: f64 },
    /// Uniform nodal values in `[0, 1)` on an `n_fine x n_fine` mesh.
    RandomFine { seed: u64, n_fine: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum RectClass {
    Smooth,
    Constant(f64),
    Cut,
}

impl TestShape {
    /// Disk of radius `r` centred in the unit square.
    pub fn disk(r: f64) -> Self {
        TestShape::DiskIndicator { r, center: (0.5, 0.5) }
    }

    pub fn name(&self) -> String {
        match *self {
            TestShape::Constant(c) => format!("constant({c})"),
            TestShape::Affine { c0, c1, c2 } => format!("affine({c0}+{c1}x+{c2}y)"),
            TestShape::SmoothSine => "smooth_sine".into(),
            TestShape::DiskIndicator { r, center } => format!("disk(r={r},c=({},{}))", center.0, center.1),
            TestShape::HalfPlane { axis, threshold } => {
                format!("half_plane(x{}<{threshold})", if axis == Direction::X1 { 1 } else { 2 })
            }
            TestShape::RandomFine { seed, n_fine } => format!("random(seed={seed},n={n_fine})"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParam(m));
        match *self {
            TestShape::DiskIndicator { r, center: (cx, cy) } => {
                if !(r > 0.0 && cx - r >= 0.0 && cx + r <= 1.0 && cy - r >= 0.0 && cy + r <= 1.0) {
                    return bad(format!("disk r={r} at ({cx},{cy}) must lie inside the unit square"));
                }
            }
            TestShape::HalfPlane { threshold, .. } if !(threshold > 0.0 && threshold < 1.0) => {
                return bad(format!("half-plane threshold must lie in (0,1), got {threshold}"));
            }
            TestShape::RandomFine { n_fine: 0, .. } => return bad("random field needs n_fine >= 1".into()),
            _ => {}
        }
        Ok(())
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, TestShape::RandomFine { .. })
    }

    /// Point value of an analytic shape.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            TestShape::Constant(c) => c,
            TestShape::Affine { c0, c1, c2 } => c0 + c1 * x + c2 * y,
            TestShape::SmoothSine => (2.0 * PI * x).sin() * (2.0 * PI * y).sin(),
            TestShape::DiskIndicator { r, center } => {
                let (dx, dy) = (x - center.0, y - center.1);
                if dx * dx + dy * dy <= r * r {
                    1.0
                } else {
                    0.0
                }
            }
            TestShape::HalfPlane { axis, threshold } => {
                let s = if axis == Direction::X1 { x } else { y };
                if s < threshold {
                    1.0
                } else {
                    0.0
                }
            }
            TestShape::RandomFine { .. } => panic!("random fields have no analytic point values"),
        }
    }

    pub fn known_tv(&self, kind: DomainKind) -> Option<f64> {
        match *self {
            TestShape::Constant(_) => Some(0.0),
            TestShape::Affine { c1, c2, .. } => Some(match kind {
                DomainKind::UnitSquare => c1.hypot(c2),
                // the periodic extension jumps across both seams
                DomainKind::PeriodicTorus => c1.hypot(c2) + c1.abs() + c2.abs(),
            }),
            TestShape::DiskIndicator { r, .. } => Some(2.0 * PI * r),
            TestShape::HalfPlane { .. } => Some(match kind {
                DomainKind::PeriodicTorus => 2.0,
                DomainKind::UnitSquare => 1.0,
            }),
            TestShape::SmoothSine | TestShape::RandomFine { .. } => None,
        }
    }

    pub fn known_linf(&self) -> Option<f64> {
        match *self {
            TestShape::Constant(c) => Some(c.abs()),
            TestShape::SmoothSine | TestShape::DiskIndicator { .. } | TestShape::HalfPlane { .. } => Some(1.0),
            TestShape::Affine { .. } | TestShape::RandomFine { .. } => None,
        }
    }

    /// The random field on the fine mesh of the given kind.
    pub fn fine_grid(&self, kind: DomainKind) -> Result<GridFunction> {
        match *self {
            TestShape::RandomFine { seed, n_fine } => random_field(DomainSpec::new(kind, n_fine, n_fine)?, seed, 0),
            _ => Err(Error::InvalidParam(format!("{} is not a fine-grid shape", self.name()))),
        }
    }

    /// Input field for the interpolation operators; `quad_res` is the
    /// midpoint resolution of the box means of analytic shapes.
    pub fn input_field(&self, kind: DomainKind, quad_res: usize) -> Result<InputField> {
        self.validate()?;
        if self.is_analytic() {
            let s = *self;
            Ok(InputField::analytic_with_res(move |x, y| s.eval(x, y), quad_res))
        } else {
            Ok(InputField::fine(self.fine_grid(kind)?))
        }
    }

    /// `TV(w)`: the closed form where known, otherwise quadrature (smooth
    /// shapes) or the q = 4 isotropic TV of the fine grid.
    pub fn total_variation(&self, kind: DomainKind) -> Result<f64> {
        if let Some(tv) = self.known_tv(kind) {
            return Ok(tv);
        }
        match self {
            TestShape::SmoothSine => {
                // |grad w| = 2 pi sqrt(cos^2(2 pi x) sin^2(2 pi y) + sin^2(2 pi x) cos^2(2 pi y))
                let rule = gauss_legendre(8);
                let m = 64;
                let mut acc = 0.0;
                for j in 0..m {
                    for i in 0..m {
                        for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
                            for (s, ws) in rule.nodes.iter().zip(&rule.weights) {
                                let (x, y) = ((i as f64 + s) / m as f64, (j as f64 + t) / m as f64);
                                let (a, b) = (2.0 * PI * x, 2.0 * PI * y);
                                let g = (a.cos() * b.sin()).hypot(a.sin() * b.cos());
                                acc += wt * ws * g;
                            }
                        }
                    }
                }
                Ok(2.0 * PI * acc / (m * m) as f64)
            }
            _ => tv_iso(&self.fine_grid(kind)?, DEFAULT_TV_QUAD),
        }
    }

    fn classify(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> RectClass {
        match *self {
            TestShape::Constant(c) => RectClass::Constant(c),
            TestShape::DiskIndicator { r, center: (cx, cy) } => {
                let near = (cx.clamp(x0, x1) - cx).hypot(cy.clamp(y0, y1) - cy);
                let far = (cx - x0).abs().max((cx - x1).abs()).hypot((cy - y0).abs().max((cy - y1).abs()));
                if far <= r {
                    RectClass::Constant(1.0)
                } else if near > r {
                    RectClass::Constant(0.0)
                } else {
                    RectClass::Cut
                }
            }
            TestShape::HalfPlane { axis, threshold } => {
                let (lo, hi) = if axis == Direction::X1 { (x0, x1) } else { (y0, y1) };
                if hi <= threshold {
                    RectClass::Constant(1.0)
                } else if lo >= threshold {
                    RectClass::Constant(0.0)
                } else {
                    RectClass::Cut
                }
            }
            _ => RectClass::Smooth,
        }
    }

    /// Calls `visit(s, t, weight, w)` at the quadrature points of cell
    /// `(i, j)`, with `(s, t)` the local coordinates in `[0,1]^2`.
    fn cell_quadrature(&self, d: &DomainSpec, i: usize, j: usize, rule: &Rule, visit: &mut impl FnMut(f64, f64, f64, f64)) {
        self.sub_cell(d, i, j, [0.0, 1.0, 0.0, 1.0], 0, rule, visit);
    }

    #[allow(clippy::too_many_arguments)]
    fn sub_cell(
        &self,
        d: &DomainSpec,
        i: usize,
        j: usize,
        [s0, s1, t0, t1]: [f64; 4],
        depth: usize,
        rule: &Rule,
        visit: &mut impl FnMut(f64, f64, f64, f64),
    ) {
        let (h1, h2) = (d.h1(), d.h2());
        let (x0, x1) = ((i as f64 + s0) * h1, (i as f64 + s1) * h1);
        let (y0, y1) = ((j as f64 + t0) * h2, (j as f64 + t1) * h2);
        let class = self.classify(x0, x1, y0, y1);
        if class == RectClass::Cut && depth < MAX_DEPTH {
            let (sm, tm) = (0.5 * (s0 + s1), 0.5 * (t0 + t1));
            for q in [[s0, sm, t0, tm], [sm, s1, t0, tm], [s0, sm, tm, t1], [sm, s1, tm, t1]] {
                self.sub_cell(d, i, j, q, depth + 1, rule, visit);
            }
            return;
        }
        let area = (s1 - s0) * (t1 - t0) * d.cell_area();
        for (b, wb) in rule.nodes.iter().zip(&rule.weights) {
            let t = t0 + (t1 - t0) * b;
            for (a, wa) in rule.nodes.iter().zip(&rule.weights) {
                let s = s0 + (s1 - s0) * a;
                let w = match class {
                    RectClass::Constant(c) => c,
                    _ => self.eval((i as f64 + s) * h1, (j as f64 + t) * h2),
                };
                visit(s, t, wa * wb * area, w);
            }
        }
    }
}

fn random_field(d: DomainSpec, seed: u64, stream: u64) -> Result<GridFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let v = (0..d.node_count()).map(|_| rng.random::<f64>()).collect();
    GridFunction::new(d, v)
}

/// Bilinear interpolation of cell corners `[a00, a10, a01, a11]`.
fn bilinear([a00, a10, a01, a11]: [f64; 4], s: f64, t: f64) -> f64 {
    (1.0 - t) * ((1.0 - s) * a00 + s * a10) + t * ((1.0 - s) * a01 + s * a11)
}

/// `[L1, L2, Linf]` norms of `shape - u`.
fn analytic_errors(shape: &TestShape, u: &GridFunction) -> [f64; 3] {
    let d = *u.domain();
    let rule = gauss_legendre(ERR_GAUSS);
    let rows = map_indexed(d.n2(), |j| {
        let mut acc = [0.0f64; 3];
        for i in 0..d.n1() {
            let c = u.cell_corners(i, j);
            shape.cell_quadrature(&d, i, j, &rule, &mut |s, t, w, val| {
                let e = (val - bilinear(c, s, t)).abs();
                acc[0] += w * e;
                acc[1] += w * e * e;
                acc[2] = acc[2].max(e);
            });
        }
        acc
    });
    let mut out = [0.0f64; 3];
    for r in rows {
        out[0] += r[0];
        out[1] += r[1];
        out[2] = out[2].max(r[2]);
    }
    out[1] = out[1].sqrt();
    out
}

/// `L^2` projection of an analytic shape onto the Q1 space of `d`.
pub fn l2_projection(shape: &TestShape, d: &DomainSpec) -> Result<GridFunction> {
    shape.validate()?;
    if let TestShape::Constant(c) = *shape {
        return Ok(GridFunction::constant(*d, c));
    }
    if !shape.is_analytic() {
        return Err(Error::InvalidParam("L2 projection needs an analytic shape".into()));
    }
    let rule = gauss_legendre(ERR_GAUSS);
    let rows = map_indexed(d.n2(), |j| {
        let mut loads = vec![[0.0f64; 4]; d.n1()];
        for (i, l) in loads.iter_mut().enumerate() {
            shape.cell_quadrature(d, i, j, &rule, &mut |s, t, w, val| {
                let v = w * val;
                l[0] += v * (1.0 - s) * (1.0 - t);
                l[1] += v * s * (1.0 - t);
                l[2] += v * (1.0 - s) * t;
                l[3] += v * s * t;
            });
        }
        loads
    });
    let mut b = vec![0.0; d.node_count()];
    for (j, row) in rows.iter().enumerate() {
        for (i, l) in row.iter().enumerate() {
            let idx = [d.corner(i, j), d.corner(i + 1, j), d.corner(i, j + 1), d.corner(i + 1, j + 1)];
            for (k, v) in idx.iter().zip(l) {
                b[*k] += v;
            }
        }
    }
    GridFunction::new(*d, solve_mass(d, &b))
}

/// Least-squares slope of `log err` against `log h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
}

/// Fits `err ~ C h^rate`; `None` with fewer than two levels or any
/// non-positive error.
pub fn fit_rate(h: &[f64], err: &[f64]) -> Option<RateFit> {
    if h.len() != err.len() || h.len() < 2 || err.iter().chain(h).any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let n = h.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = h.iter().zip(err).map(|(a, b)| (a.ln(), b.ln())).unzip();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let rate = sxy / sxx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - rate * (x - mx)).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(RateFit { rate, r_squared })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrors {
    pub n: usize,
    pub h: f64,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub linf: Option<f64>,
    /// `TV(u_h) / TV(w)`; NaN when `TV(w) = 0`.
    pub tv_ratio: f64,
}

impl LevelErrors {
    pub fn error(&self, norm: Norm) -> Option<f64> {
        match norm {
            Norm::L1 => self.l1,
            Norm::L2 => self.l2,
            Norm::Linf => self.linf,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub label: String,
    pub levels: Vec<LevelErrors>,
    pub norms: Vec<Norm>,
}

impl ConvergenceReport {
    pub fn errors(&self, norm: Norm) -> Vec<f64> {
        self.levels.iter().filter_map(|l| l.error(norm)).collect()
    }

    pub fn rate(&self, norm: Norm) -> Option<RateFit> {
        let pts: Vec<(f64, f64)> = self.levels.iter().filter_map(|l| l.error(norm).map(|e| (l.h, e))).collect();
        let (h, e): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        fit_rate(&h, &e)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,h,error_L1,error_L2,error_Linf,tv_ratio\n");
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{:.16e},{},{},{},{:.16e}",
                l.n,
                l.h,
                cell(l.l1),
                cell(l.l2),
                cell(l.linf),
                l.tv_ratio
            );
        }
        s
    }

    pub fn summary_line(&self) -> String {
        let mut s = self.label.clone();
        for &norm in &self.norms {
            match self.rate(norm) {
                Some(f) => {
                    let _ = write!(s, "; {} rate {:.4} (R^2 {:.4})", norm.label(), f.rate, f.r_squared);
                }
                None => {
                    let _ = write!(s, "; {} rate n/a", norm.label());
                }
            }
        }
        s
    }
}

fn check_levels(n_list: &[usize]) -> Result<()> {
    if n_list.len() < 3 {
        return Err(Error::InvalidParam(format!("need at least 3 mesh levels, got {}", n_list.len())));
    }
    if n_list[0] == 0 || n_list.windows(2).any(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidParam(format!("mesh sizes must double from level to level: {n_list:?}")));
    }
    Ok(())
}

/// Interpolation error of `operator` applied to `shape` on a sequence of
/// dyadically refined meshes.
pub fn interp_rate_study(
    shape: &TestShape,
    kind: DomainKind,
    operator: Operator,
    norms: &[Norm],
    n_list: &[usize],
    quad_res: usize,
) -> Result<ConvergenceReport> {
    if norms.is_empty() {
        return Err(Error::InvalidParam("empty norm list".into()));
    }
    check_levels(n_list)?;
    let w = shape.input_field(kind, quad_res)?;
    let tv_w = shape.total_variation(kind)?;
    let fine = if shape.is_analytic() { None } else { Some(shape.fine_grid(kind)?) };
    let mut levels = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let d = DomainSpec::new(kind, n, n)?;
        let u = operator.apply(&w, &d)?;
        let errs = match &fine {
            None => analytic_errors(shape, &u),
            Some(g) => {
                let nf = g.domain().n1();
                if nf % n != 0 {
                    return Err(Error::InvalidParam(format!("fine mesh {nf} is not a multiple of N={n}")));
                }
                let diff = u.refine(nf / n)?.sub(g)?;
                [diff.lp_norm(Norm::L1), diff.lp_norm(Norm::L2), diff.lp_norm(Norm::Linf)]
            }
        };
        let pick = |norm: Norm, v: f64| norms.contains(&norm).then_some(v);
        let tv_u = tv_iso(&u, DEFAULT_TV_QUAD)?;
        levels.push(LevelErrors {
            n,
            h: d.h1(),
            l1: pick(Norm::L1, errs[0]),
            l2: pick(Norm::L2, errs[1]),
            linf: pick(Norm::Linf, errs[2]),
            tv_ratio: if tv_w > 0.0 { tv_u / tv_w } else { f64::NAN },
        });
    }
    Ok(ConvergenceReport {
        label: format!("interp {} {} {}", shape.name(), kind.name(), operator.name()),
        levels,
        norms: norms.to_vec(),
    })
}

/// Tally of one inequality over many trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckStat {
    pub name: String,
    pub checked: usize,
    /// Trials skipped because both sides vanish (0/0).
    pub excluded: usize,
    pub violations: usize,
    /// Largest observed ratio of left to right side.
    pub worst: f64,
}

impl CheckStat {
    fn new(name: impl Into<String>) -> Self {
        CheckStat {
            name: name.into(),
            checked: 0,
            excluded: 0,
            violations: 0,
            worst: f64::NAN,
        }
    }

    /// Records `lhs <= rhs` up to `ok`, tracking `lhs / rhs`.
    fn record(&mut self, lhs: f64, rhs: f64, ok: bool) {
        if rhs == 0.0 && lhs == 0.0 {
            self.excluded += 1;
            return;
        }
        self.checked += 1;
        if !ok {
            self.violations += 1;
        }
        let ratio = lhs / rhs;
        if self.worst.is_nan() || ratio > self.worst {
            self.worst = ratio;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub suite: String,
    pub trials: usize,
    pub checks: Vec<CheckStat>,
    /// Free-form diagnostics (aborted runs and the like).
    pub notes: Vec<String>,
}

impl SuiteSummary {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }

    pub fn passed(&self) -> bool {
        self.violations() == 0
    }

    pub fn check(&self, name: &str) -> Option<&CheckStat> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!("{} ({} trials): violations: {}", self.suite, self.trials, self.violations());
        for c in &self.checks {
            let _ = write!(s, "; {} worst {:.6e} over {}", c.name, c.worst, c.checked);
            if c.excluded > 0 {
                let _ = write!(s, " ({} excluded)", c.excluded);
            }
        }
        for n in &self.notes {
            let _ = write!(s, "; {n}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check,checked,excluded,violations,worst_ratio\n");
        for c in &self.checks {
            let _ = writeln!(s, "{},{},{},{},{:.16e}", c.name, c.checked, c.excluded, c.violations, c.worst);
        }
        s
    }
}

/// Trial `t` of a suite: a uniform random field on the `8N` mesh.
fn trial_field(kind: DomainKind, n: usize, seed: u64, t: usize) -> Result<GridFunction> {
    random_field(DomainSpec::new(kind, 8 * n, 8 * n)?, seed, t as u64)
}

/// Directional and isotropic TV of `operator(w)` against `w` for random
/// fine-grid fields `w`.
pub fn tvd_property_suite(trials: usize, seed: u64, kind: DomainKind, operator: Operator, n: usize) -> Result<SuiteSummary> {
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    let d = DomainSpec::new(kind, n, n)?;
    let rows = map_indexed(trials, |t| -> Result<[(f64, f64); 3]> {
        let w = trial_field(kind, n, seed, t)?;
        let u = operator.apply(&InputField::fine(w.clone()), &d)?;
        let side = |g: &GridFunction| -> Result<[f64; 3]> {
            Ok([
                directional_variation(g, Direction::X1),
                directional_variation(g, Direction::X2),
                tv_iso(g, DEFAULT_TV_QUAD)?,
            ])
        };
        let (a, b) = (side(&u)?, side(&w)?);
        Ok([(a[0], b[0]), (a[1], b[1]), (a[2], b[2])])
    });
    let mut checks = vec![CheckStat::new("V1"), CheckStat::new("V2"), CheckStat::new("tv_iso_q4")];
    for r in rows {
        let r = r?;
        for (k, (c, (out, inp))) in checks.iter_mut().zip(r).enumerate() {
            let ok = if k < 2 { out <= inp * (1.0 + EXACT_SLACK) } else { out <= inp + ISO_SLACK };
            c.record(out, inp, ok);
        }
    }
    Ok(SuiteSummary {
        suite: format!("tvd {} {} N={n} seed={seed}", kind.name(), operator.name()),
        trials,
        checks,
        notes: vec![],
    })
}

/// `||operator(w)||_p <= ||w||_p` for random fine-grid fields `w`.
pub fn stability_suite(
    trials: usize,
    seed: u64,
    kind: DomainKind,
    operator: Operator,
    n: usize,
    norms: &[Norm],
) -> Result<SuiteSummary> {
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be >= 1".into()));
    }
    if norms.is_empty() {
        return Err(Error::InvalidParam("empty norm list".into()));
    }
    let d = DomainSpec::new(kind, n, n)?;
    let rows = map_indexed(trials, |t| -> Result<Vec<(f64, f64)>> {
        let w = trial_field(kind, n, seed, t)?;
        let u = operator.apply(&InputField::fine(w.clone()), &d)?;
        Ok(norms.iter().map(|&p| (u.lp_norm(p), w.lp_norm(p))).collect())
    });
    let mut checks: Vec<CheckStat> = norms.iter().map(|p| CheckStat::new(format!("norm_{}", p.label()))).collect();
    for r in rows {
        for (c, (out, inp)) in checks.iter_mut().zip(r?) {
            c.record(out, inp, out <= inp * (1.0 + EXACT_SLACK));
        }
    }
    Ok(SuiteSummary {
        suite: format!("stability {} {} N={n} seed={seed}", kind.name(), operator.name()),
        trials,
        checks,
        notes: vec![],
    })
}

/// Tolerances of the flow checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowTolerances {
    /// Allowed per-step increase of the discrete TV.
    pub tv_increase: f64,
    /// Additive slack of `||u^{k+1} - u^k||^2 <= dt (TV^k - TV^{k+1})`.
    pub step: f64,
    /// `sum_k ||u^{k+1} - u^k||^2 <= dt TV(u^0) * sum_factor`.
    pub sum_factor: f64,
    /// Allowed drift of the mean value.
    pub mass: f64,
}

impl FlowTolerances {
    /// Slacks derived from the solver tolerance.
    pub fn for_tol(tol: f64) -> Self {
        FlowTolerances {
            tv_increase: 10.0 * tol,
            step: tol,
            sum_factor: 1.0 + tol,
            mass: 10.0 * tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowReport {
    pub summary: SuiteSummary,
    /// Discrete TV (the solver's Gauss functional) of every iterate.
    pub tv: Vec<f64>,
    /// `||u^{k+1} - u^k||^2_{L^2}`.
    pub increments: Vec<f64>,
    /// Mean value `int u` of every iterate.
    pub mean: Vec<f64>,
    pub reports: Vec<SolveReport>,
    pub iterates: Vec<GridFunction>,
}

impl FlowReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,tv,increment_sq,mean,solver_iters,solver_gap\n");
        for (k, (tv, m)) in self.tv.iter().zip(&self.mean).enumerate() {
            let (inc, it, gap) = if k == 0 {
                (String::new(), String::new(), String::new())
            } else {
                let r = &self.reports[k - 1];
                (format!("{:.16e}", self.increments[k - 1]), r.iters.to_string(), format!("{:.16e}", r.final_gap))
            };
            let _ = writeln!(s, "{k},{tv:.16e},{inc},{m:.16e},{it},{gap}");
        }
        s
    }
}

/// Runs the implicit TV flow and checks TV decay, the per-step energy
/// inequality, the summed increment bound and conservation of the mean.
pub fn flow_property_suite(
    shape: &TestShape,
    kind: DomainKind,
    n: usize,
    p: &FlowParams,
    tols: &FlowTolerances,
) -> Result<FlowReport> {
    let d = DomainSpec::new(kind, n, n)?;
    let u0 = shape.input_field(kind, DEFAULT_QUAD_RES)?;
    let run = tv_flow(&u0, &d, p, Operator::default_for(kind))?;
    let q = p.inner.quad;
    let tv: Vec<f64> = run.iterates.iter().map(|u| solver_tv(u, q)).collect();
    let mean: Vec<f64> = run.iterates.iter().map(GridFunction::integral).collect();
    let mut increments = Vec::with_capacity(run.iterates.len().saturating_sub(1));
    for w in run.iterates.windows(2) {
        let l2 = w[1].sub(&w[0])?.lp_norm(Norm::L2);
        increments.push(l2 * l2);
    }

    let mut decay = CheckStat::new("tv_decay");
    let mut step = CheckStat::new("step_inequality");
    let mut mass = CheckStat::new("mean_drift");
    for k in 0..increments.len() {
        decay.record(tv[k + 1], tv[k], tv[k + 1] <= tv[k] + tols.tv_increase);
        let rhs = p.dt * (tv[k] - tv[k + 1]);
        step.record(increments[k], rhs, increments[k] <= rhs + tols.step);
        let drift = (mean[k + 1] - mean[0]).abs();
        mass.record(drift, tols.mass, drift <= tols.mass);
    }
    let total: f64 = increments.iter().sum();
    let mut sum = CheckStat::new("increment_sum");
    let bound = p.dt * tv[0];
    sum.record(total, bound, total <= bound * tols.sum_factor);
    let mut completed = CheckStat::new("completed");
    completed.record(run.iterates.len() as f64, (p.steps() + 1) as f64, run.completed());
    let mut checks = vec![completed, decay, step, sum, mass];
    if let TestShape::Constant(_) = shape {
        let mut st = CheckStat::new("stationary");
        for u in &run.iterates[1..] {
            let same = u.values() == run.iterates[0].values();
            st.record(if same { 0.0 } else { 1.0 }, 1.0, same);
        }
        checks.push(st);
    }
    let mut notes = vec![];
    if let Some(msg) = &run.aborted {
        notes.push(format!("aborted: {msg}"));
    }
    Ok(FlowReport {
        summary: SuiteSummary {
            suite: format!("flow {} {} N={n} dt={} T={}", shape.name(), kind.name(), p.dt, p.t_final),
            trials: 1,
            checks,
            notes,
        },
        tv,
        increments,
        mean,
        reports: run.reports,
        iterates: run.iterates,
    })
}

/// Configuration of [`denoise_rate_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseStudyConfig {
    pub kind: DomainKind,
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub n_ref: usize,
    /// Solver settings on the coarse levels (`alpha` is overridden).
    pub level_params: DenoiseParams,
    /// Solver settings of the reference solve (`alpha` is overridden).
    pub reference_params: DenoiseParams,
}

impl DenoiseStudyConfig {
    pub fn new(kind: DomainKind, alpha: f64, n_list: Vec<usize>, n_ref: usize) -> Self {
        let tight = DenoiseParams {
            alpha,
            tol: REFERENCE_TOL,
            max_iters: 200_000,
            ..Default::default()
        };
        DenoiseStudyConfig {
            kind,
            alpha,
            n_list,
            n_ref,
            level_params: tight,
            reference_params: tight,
        }
    }

    fn validate(&self) -> Result<()> {
        let max = self.n_list.iter().copied().max().unwrap_or(0);
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::InvalidParam("need at least one positive mesh size".into()));
        }
        if self.n_ref < 4 * max {
            return Err(Error::InvalidParam(format!("N_ref={} must be at least 4 max(N)={}", self.n_ref, 4 * max)));
        }
        if let Some(n) = self.n_list.iter().find(|n| !self.n_ref.is_multiple_of(**n)) {
            return Err(Error::InvalidParam(format!("N_ref={} is not a multiple of N={n}", self.n_ref)));
        }
        Ok(())
    }

    fn params(&self, base: DenoiseParams) -> DenoiseParams {
        DenoiseParams { alpha: self.alpha, ..base }
    }
}

/// Fine-mesh ROF solution standing in for the continuum minimizer.
#[derive(Debug, Clone)]
pub struct Reference {
    /// Projected data on the reference mesh.
    pub f: GridFunction,
    pub v: GridFunction,
    pub report: SolveReport,
}

/// Solves the reference problem; does not check convergence.
pub fn reference_solution(shape: &TestShape, cfg: &DenoiseStudyConfig) -> Result<Reference> {
    cfg.validate()?;
    let d = DomainSpec::new(cfg.kind, cfg.n_ref, cfg.n_ref)?;
    let f = l2_projection(shape, &d)?;
    let mut solver = RofSolver::new(d, cfg.params(cfg.reference_params))?;
    let (v, report) = solver.solve(&f, None)?;
    Ok(Reference { f, v, report })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseLevel {
    pub n: usize,
    pub h: f64,
    /// `||v_ref - v_h||_{L^2}`.
    pub error: f64,
    /// `sqrt(2 h (||v||_inf + ||f||_inf) TV(v))` with reference quantities.
    pub bound: f64,
    pub tv_ratio: f64,
    pub report: SolveReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseRateReport {
    pub label: String,
    pub levels: Vec<DenoiseLevel>,
    pub reference: SolveReport,
    pub v_linf: f64,
    pub f_linf: f64,
    pub tv_ref: f64,
}

impl DenoiseRateReport {
    pub fn rate(&self) -> Option<RateFit> {
        let h: Vec<f64> = self.levels.iter().map(|l| l.h).collect();
        let e: Vec<f64> = self.levels.iter().map(|l| l.error).collect();
        fit_rate(&h, &e)
    }

    pub fn bound_violations(&self) -> usize {
        self.levels.iter().filter(|l| l.error > l.bound).count()
    }

    pub fn convergence(&self) -> ConvergenceReport {
        ConvergenceReport {
            label: self.label.clone(),
            levels: self
                .levels
                .iter()
                .map(|l| LevelErrors {
                    n: l.n,
                    h: l.h,
                    l1: None,
                    l2: Some(l.error),
                    linf: None,
                    tv_ratio: l.tv_ratio,
                })
                .collect(),
            norms: vec![Norm::L2],
        }
    }

    pub fn summary_line(&self) -> String {
        let mut s = format!(
            "{}: reference gap {:.3e} after {} iterations ({}); bound violations: {}",
            self.label,
            self.reference.final_gap,
            self.reference.iters,
            if self.reference.converged { "converged" } else { "NOT converged" },
            self.bound_violations()
        );
        for l in &self.levels {
            let _ = write!(s, "; N={} err {:.4e} <= {:.4e}", l.n, l.error, l.bound);
        }
        match self.rate() {
            Some(f) => {
                let _ = write!(s, "; L2 rate {:.4} (R^2 {:.4})", f.rate, f.r_squared);
            }
            None => s.push_str("; L2 rate n/a"),
        }
        s
    }
}

/// Coarse-level ROF solutions compared with a given reference.
pub fn denoise_levels(shape: &TestShape, cfg: &DenoiseStudyConfig, reference: &Reference) -> Result<DenoiseRateReport> {
    cfg.validate()?;
    let v_ref = &reference.v;
    if v_ref.domain().n1() != cfg.n_ref || v_ref.domain().kind() != cfg.kind {
        return Err(Error::DomainMismatch);
    }
    let v_linf = v_ref.lp_norm(Norm::Linf);
    let f_linf = match shape.known_linf() {
        Some(v) => v,
        None => reference.f.lp_norm(Norm::Linf),
    };
    let tv_ref = tv_iso(v_ref, DEFAULT_TV_QUAD)?;
    let mut levels = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let d = DomainSpec::new(cfg.kind, n, n)?;
        let f = l2_projection(shape, &d)?;
        let mut solver = RofSolver::new(d, cfg.params(cfg.level_params))?;
        let (v, report) = solver.solve(&f, None)?;
        if !report.converged {
            return Err(Error::NotConverged(format!(
                "level N={n}: gap {:.3e} after {} iterations",
                report.final_gap, report.iters
            )));
        }
        let l2 = v.refine(cfg.n_ref / n)?.sub(v_ref)?.lp_norm(Norm::L2);
        let h = d.h1();
        levels.push(DenoiseLevel {
            n,
            h,
            error: l2,
            bound: (2.0 * h * (v_linf + f_linf) * tv_ref).sqrt(),
            tv_ratio: if tv_ref > 0.0 { tv_iso(&v, DEFAULT_TV_QUAD)? / tv_ref } else { f64::NAN },
            report,
        });
    }
    Ok(DenoiseRateReport {
        label: format!(
            "denoise {} {} alpha={} N_ref={}",
            shape.name(),
            cfg.kind.name(),
            cfg.alpha,
            cfg.n_ref
        ),
        levels,
        reference: reference.report,
        v_linf,
        f_linf,
        tv_ref,
    })
}

/// ROF error `||v - v_h||` against a fine reference solve, checked against
/// `sqrt(2 h (||v||_inf + ||f||_inf) TV(v))`. Fails if the reference solve
/// does not reach its tolerance.
pub fn denoise_rate_study(shape: &TestShape, cfg: &DenoiseStudyConfig) -> Result<DenoiseRateReport> {
    let reference = reference_solution(shape, cfg)?;
    if !reference.report.converged {
        return Err(Error::NotConverged(format!(
            "reference solve at N={}: gap {:.3e} after {} iterations (tol {:.1e})",
            cfg.n_ref, reference.report.final_gap, reference.report.iters, cfg.reference_params.tol
        )));
    }
    denoise_levels(shape, cfg, &reference)
}

/// `c_h` and `i_h` on the unit square, L^1 error.
pub fn ch_boundary_rate_study(
    shape: &TestShape,
    n_list: &[usize],
    quad_res: usize,
) -> Result<(ConvergenceReport, ConvergenceReport)> {
    let c = interp_rate_study(shape, DomainKind::UnitSquare, Operator::C, &[Norm::L1], n_list, quad_res)?;
    let i = interp_rate_study(shape, DomainKind::UnitSquare, Operator::I, &[Norm::L1], n_list, quad_res)?;
    Ok((c, i))
}
