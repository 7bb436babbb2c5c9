//! Cartesian meshes on the unit square or the unit torus and the Q1 space on them.
//!
//! Nodes are `z_{k,l} = (k h1, l h2)` with `h_i = 1/N_i`. Values are stored
//! row-major with `l` (the second coordinate) as the slow index. The torus
//! keeps `N1 * N2` nodes and wraps by index arithmetic; the square keeps
//! `(N1 + 1) * (N2 + 1)`.

use crate::error::{Error, Result};
use crate::interp::InputField;
use crate::quadrature::gauss_legendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DomainKind {
    PeriodicTorus,
    UnitSquare,
}

impl DomainKind {
    pub fn name(self) -> &'static str {
        match self {
            DomainKind::PeriodicTorus => "torus",
            DomainKind::UnitSquare => "square",
        }
    }
}

/// Mesh descriptor. Cell counts are stored, cell sizes derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DomainSpec {
    kind: DomainKind,
    n1: usize,
    n2: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeIndex {
    pub k: i64,
    pub l: i64,
}

impl NodeIndex {
    pub fn new(k: i64, l: i64) -> Self {
        NodeIndex { k, l }
    }
}

impl DomainSpec {
    pub fn new(kind: DomainKind, n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidDomain(format!(
                "cell counts must be positive, got {n1}x{n2}"
            )));
        }
        Ok(DomainSpec { kind, n1, n2 })
    }

    /// # Panics
    /// If either count is zero.
    pub fn torus(n1: usize, n2: usize) -> Self {
        Self::new(DomainKind::PeriodicTorus, n1, n2).expect("positive cell counts")
    }

    /// # Panics
    /// If either count is zero.
    pub fn square(n1: usize, n2: usize) -> Self {
        Self::new(DomainKind::UnitSquare, n1, n2).expect("positive cell counts")
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn is_periodic(&self) -> bool {
        self.kind == DomainKind::PeriodicTorus
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn h1(&self) -> f64 {
        1.0 / self.n1 as f64
    }

    pub fn h2(&self) -> f64 {
        1.0 / self.n2 as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.h1() * self.h2()
    }

    /// Stored nodes along the first axis.
    pub fn nodes_x(&self) -> usize {
        if self.is_periodic() {
            self.n1
        } else {
            self.n1 + 1
        }
    }

    pub fn nodes_y(&self) -> usize {
        if self.is_periodic() {
            self.n2
        } else {
            self.n2 + 1
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes_x() * self.nodes_y()
    }

    pub fn cell_count(&self) -> usize {
        self.n1 * self.n2
    }

    /// Same kind with every cell split `r x r`.
    pub fn refined(&self, r: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidDomain("refinement factor must be >= 1".into()));
        }
        Self::new(self.kind, self.n1 * r, self.n2 * r)
    }

    /// Canonical `(k, l)` after torus reduction, or an error on the square.
    pub fn canonical(&self, idx: NodeIndex) -> Result<(usize, usize)> {
        if self.is_periodic() {
            Ok((
                idx.k.rem_euclid(self.n1 as i64) as usize,
                idx.l.rem_euclid(self.n2 as i64) as usize,
            ))
        } else if (0..=self.n1 as i64).contains(&idx.k) && (0..=self.n2 as i64).contains(&idx.l) {
            Ok((idx.k as usize, idx.l as usize))
        } else {
            Err(Error::NodeOutOfRange {
                k: idx.k,
                l: idx.l,
                n1: self.n1,
                n2: self.n2,
            })
        }
    }

    pub fn flat(&self, k: usize, l: usize) -> usize {
        l * self.nodes_x() + k
    }

    /// Flat index of the cell-corner node `(k, l)`, where `k <= N1`, `l <= N2`.
    #[inline]
    pub(crate) fn corner(&self, k: usize, l: usize) -> usize {
        if self.is_periodic() {
            (l % self.n2) * self.n1 + (k % self.n1)
        } else {
            l * (self.n1 + 1) + k
        }
    }

    pub fn node_coords(&self, idx: NodeIndex) -> Result<(f64, f64)> {
        let (k, l) = self.canonical(idx)?;
        Ok((k as f64 * self.h1(), l as f64 * self.h2()))
    }

    /// Whether `(k, l)` lies on the boundary of the square. Always false on the torus.
    pub fn is_boundary(&self, k: usize, l: usize) -> bool {
        !self.is_periodic() && (k == 0 || l == 0 || k == self.n1 || l == self.n2)
    }
}

/// Locates `x` (in units of cells) in a 1D mesh of `n` cells: returns the
/// cell index and the local coordinate in `[0, 1]`. Points on a cell
/// boundary go to the lower-index cell.
#[inline]
fn locate(x: f64, n: usize, periodic: bool) -> (usize, f64) {
    let x = if periodic {
        x.rem_euclid(1.0)
    } else {
        x.clamp(0.0, 1.0)
    };
    let mut s = x * n as f64;
    let r = s.round();
    if (s - r).abs() <= 4.0 * f64::EPSILON * n as f64 {
        s = r;
    }
    let c = (s.ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize;
    (c, (s - c as f64).clamp(0.0, 1.0))
}

/// The L^p exponents supported for Q1 functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub const ALL: [Norm; 3] = [Norm::L1, Norm::L2, Norm::Linf];

    pub fn from_p(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(Norm::L1)
        } else if p == 2.0 {
            Ok(Norm::L2)
        } else if p == f64::INFINITY {
            Ok(Norm::Linf)
        } else {
            Err(Error::UnsupportedNorm(p.to_string()))
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "2" | "l2" => Ok(Norm::L2),
            "inf" | "linf" | "infinity" => Ok(Norm::Linf),
            _ => Err(Error::UnsupportedNorm(s.to_string())),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Norm::L1 => "L1",
            Norm::L2 => "L2",
            Norm::Linf => "Linf",
        }
    }
}

/// Nodal values of a continuous piecewise-bilinear function.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    domain: DomainSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(domain: DomainSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.node_count() {
            return Err(Error::LengthMismatch {
                expected: domain.node_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(GridFunction { domain, values })
    }

    pub(crate) fn from_raw(domain: DomainSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), domain.node_count());
        GridFunction { domain, values }
    }

    pub fn constant(domain: DomainSpec, c: f64) -> Self {
        GridFunction {
            domain,
            values: vec![c; domain.node_count()],
        }
    }

    pub fn zeros(domain: DomainSpec) -> Self {
        Self::constant(domain, 0.0)
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(domain: DomainSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let (h1, h2) = (domain.h1(), domain.h2());
        let mut values = Vec::with_capacity(domain.node_count());
        for l in 0..domain.nodes_y() {
            for k in 0..domain.nodes_x() {
                values.push(f(k as f64 * h1, l as f64 * h2));
            }
        }
        Self::new(domain, values)
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: NodeIndex) -> Result<f64> {
        let (k, l) = self.domain.canonical(idx)?;
        Ok(self.values[self.domain.flat(k, l)])
    }

    /// Corner values `[a00, a10, a01, a11]` of cell `(i, j)`.
    #[inline]
    pub fn cell_corners(&self, i: usize, j: usize) -> [f64; 4] {
        let d = &self.domain;
        [
            self.values[d.corner(i, j)],
            self.values[d.corner(i + 1, j)],
            self.values[d.corner(i, j + 1)],
            self.values[d.corner(i + 1, j + 1)],
        ]
    }

    /// Bilinear evaluation. Torus coordinates wrap; square coordinates are
    /// clamped to `[0, 1]`.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = &self.domain;
        let (i, s) = locate(x, d.n1, d.is_periodic());
        let (j, t) = locate(y, d.n2, d.is_periodic());
        let [a00, a10, a01, a11] = self.cell_corners(i, j);
        (1.0 - t) * ((1.0 - s) * a00 + s * a10) + t * ((1.0 - s) * a01 + s * a11)
    }

    /// Exact re-representation on the mesh refined `r x r`.
    pub fn refine(&self, r: usize) -> Result<GridFunction> {
        let fine = self.domain.refined(r)?;
        let rf = r as f64;
        let split = |kk: usize, n: usize| -> (usize, f64) {
            let c = (kk / r).min(n - 1);
            (c, (kk - c * r) as f64 / rf)
        };
        let mut values = Vec::with_capacity(fine.node_count());
        for ll in 0..fine.nodes_y() {
            let (j, t) = split(ll, self.domain.n2);
            for kk in 0..fine.nodes_x() {
                let (i, s) = split(kk, self.domain.n1);
                let [a00, a10, a01, a11] = self.cell_corners(i, j);
                values.push((1.0 - t) * ((1.0 - s) * a00 + s * a10) + t * ((1.0 - s) * a01 + s * a11));
            }
        }
        Ok(GridFunction::from_raw(fine, values))
    }

    /// Pointwise combination of two functions on the same domain.
    pub fn zip_map(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if self.domain != other.domain {
            return Err(Error::DomainMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        GridFunction::new(self.domain, values)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        GridFunction::from_raw(self.domain, self.values.iter().map(|v| c * v).collect())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn nodal_mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Exact integral over the domain.
    pub fn integral(&self) -> f64 {
        let d = &self.domain;
        let mut acc = 0.0;
        for j in 0..d.n2 {
            for i in 0..d.n1 {
                let [a, b, c, e] = self.cell_corners(i, j);
                acc += a + b + c + e;
            }
        }
        0.25 * d.cell_area() * acc
    }

    /// Exact integral over the axis-aligned rectangle `[x0,x1] x [y0,y1]`.
    ///
    /// On the torus the rectangle may leave `[0,1]^2`; the periodic extension
    /// is integrated. On the square it must lie inside the domain.
    pub fn integrate_rect(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let d = &self.domain;
        let xs = axis_pieces(x0, x1, d.n1, d.is_periodic());
        let ys = axis_pieces(y0, y1, d.n2, d.is_periodic());
        let mut acc = 0.0;
        for &(j, c0, c1) in &ys {
            for &(i, a0, a1) in &xs {
                let [a00, a10, a01, a11] = self.cell_corners(i, j);
                acc += c0 * (a0 * a00 + a1 * a10) + c1 * (a0 * a01 + a1 * a11);
            }
        }
        acc * d.cell_area()
    }

    /// Exact (p = 2, p = inf, and p = 1 on sign-definite cells) L^p norm.
    ///
    /// Where the bilinear changes sign the L^1 contribution is integrated by
    /// bisecting the cell, down to `2^-L1_DEPTH` of its width, with a 3x3
    /// Gauss rule on the leaves.
    pub fn lp_norm(&self, p: Norm) -> f64 {
        let d = &self.domain;
        match p {
            Norm::Linf => self.values.iter().fold(0.0, |m, v| m.max(v.abs())),
            Norm::L2 => {
                let mut acc = 0.0;
                for j in 0..d.n2 {
                    for i in 0..d.n1 {
                        acc += cell_square_integral(self.cell_corners(i, j));
                    }
                }
                (acc * d.cell_area() / 36.0).sqrt()
            }
            Norm::L1 => {
                let g = gauss_legendre(3);
                let mut acc = 0.0;
                for j in 0..d.n2 {
                    for i in 0..d.n1 {
                        acc += abs_integral(self.cell_corners(i, j), [0.0, 1.0, 0.0, 1.0], 0, &g.nodes, &g.weights);
                    }
                }
                acc * d.cell_area()
            }
        }
    }
}

const L1_DEPTH: usize = 7;

/// Integral of `|bilinear|` over the subrectangle `[s0,s1] x [t0,t1]` of the
/// reference cell.
fn abs_integral(c: [f64; 4], [s0, s1, t0, t1]: [f64; 4], depth: usize, nodes: &[f64], weights: &[f64]) -> f64 {
    let [a00, a10, a01, a11] = c;
    let at = |s: f64, t: f64| (1.0 - t) * ((1.0 - s) * a00 + s * a10) + t * ((1.0 - s) * a01 + s * a11);
    let corners = [at(s0, t0), at(s1, t0), at(s0, t1), at(s1, t1)];
    let area = (s1 - s0) * (t1 - t0);
    // a bilinear is monotone along every edge, so one sign at the corners holds everywhere
    if corners.iter().all(|v| *v >= 0.0) || corners.iter().all(|v| *v <= 0.0) {
        return 0.25 * area * corners.iter().sum::<f64>().abs();
    }
    if depth < L1_DEPTH {
        let (sm, tm) = (0.5 * (s0 + s1), 0.5 * (t0 + t1));
        return [[s0, sm, t0, tm], [sm, s1, t0, tm], [s0, sm, tm, t1], [sm, s1, tm, t1]]
            .iter()
            .map(|r| abs_integral(c, *r, depth + 1, nodes, weights))
            .sum();
    }
    let mut acc = 0.0;
    for (t, wt) in nodes.iter().zip(weights) {
        for (s, ws) in nodes.iter().zip(weights) {
            acc += wt * ws * at(s0 + (s1 - s0) * s, t0 + (t1 - t0) * t).abs();
        }
    }
    area * acc
}

/// `36/(h1 h2)` times the integral of the squared bilinear over its cell.
#[inline]
fn cell_square_integral([a00, a10, a01, a11]: [f64; 4]) -> f64 {
    4.0 * (a00 * a00 + a10 * a10 + a01 * a01 + a11 * a11)
        + 4.0 * (a00 * a10 + a01 * a11 + a00 * a01 + a10 * a11)
        + 2.0 * (a00 * a11 + a10 * a01)
}

/// Splits `[x0, x1]` (physical units) into per-cell pieces. Each piece is
/// `(cell, int (1-s) ds, int s ds)` over the local subinterval.
fn axis_pieces(x0: f64, x1: f64, n: usize, periodic: bool) -> Vec<(usize, f64, f64)> {
    let nf = n as f64;
    let snap = |v: f64| {
        let r = v.round();
        if (v - r).abs() < 1e-11 {
            r
        } else {
            v
        }
    };
    let (mut a, mut b) = (snap(x0 * nf), snap(x1 * nf));
    if !periodic {
        a = a.clamp(0.0, nf);
        b = b.clamp(0.0, nf);
    }
    let mut out = Vec::new();
    if b <= a {
        return out;
    }
    let first = a.floor() as i64;
    let last = b.ceil() as i64;
    for c in first..last {
        let s0 = (a - c as f64).max(0.0);
        let s1 = (b - c as f64).min(1.0);
        if s1 <= s0 {
            continue;
        }
        let lin = 0.5 * (s1 * s1 - s0 * s0);
        let cell = c.rem_euclid(n as i64) as usize;
        out.push((cell, (s1 - s0) - lin, lin));
    }
    out
}

/// Nodal interpolation `w(z_{k,l})`; the baseline comparator for the
/// quasi-interpolants.
pub fn lagrange_interpolate(w: &InputField, d: DomainSpec) -> Result<GridFunction> {
    w.validate_pointwise()?;
    GridFunction::from_fn(d, |x, y| w.eval(x, y))
}

// ---------------------------------------------------------------------------
// Consistent Q1 mass matrix. It is the tensor product of two 1D mass
// matrices, so products and solves factor along the axes.

/// `M u` for the consistent Q1 mass matrix of `d`.
pub fn apply_mass(d: &DomainSpec, u: &[f64]) -> Vec<f64> {
    let mut tmp = vec![0.0; u.len()];
    let nx = d.nodes_x();
    let ny = d.nodes_y();
    let per = d.is_periodic();
    for (row, out) in u.chunks(nx).zip(tmp.chunks_mut(nx)) {
        mass1d_apply(row, out, d.h1(), per);
    }
    let mut col = vec![0.0; ny];
    let mut colout = vec![0.0; ny];
    let mut res = vec![0.0; u.len()];
    for k in 0..nx {
        for l in 0..ny {
            col[l] = tmp[l * nx + k];
        }
        mass1d_apply(&col, &mut colout, d.h2(), per);
        for l in 0..ny {
            res[l * nx + k] = colout[l];
        }
    }
    res
}

/// Solves `M x = b` for the consistent Q1 mass matrix of `d`.
pub fn solve_mass(d: &DomainSpec, b: &[f64]) -> Vec<f64> {
    let mut solver = MassSolver::new(d);
    let mut out = b.to_vec();
    solver.solve_in_place(&mut out);
    out
}

/// Reusable workspace for repeated mass solves on one domain.
#[derive(Debug, Clone)]
pub(crate) struct MassSolver {
    nx: usize,
    ny: usize,
    xs: Tridiag,
    ys: Tridiag,
    col: Vec<f64>,
}

impl MassSolver {
    pub(crate) fn new(d: &DomainSpec) -> Self {
        MassSolver {
            nx: d.nodes_x(),
            ny: d.nodes_y(),
            xs: Tridiag::mass(d.nodes_x(), d.h1(), d.is_periodic()),
            ys: Tridiag::mass(d.nodes_y(), d.h2(), d.is_periodic()),
            col: vec![0.0; d.nodes_y()],
        }
    }

    pub(crate) fn solve_in_place(&mut self, b: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        for row in b.chunks_mut(nx) {
            self.xs.solve(row);
        }
        for k in 0..nx {
            for l in 0..ny {
                self.col[l] = b[l * nx + k];
            }
            self.ys.solve(&mut self.col);
            for l in 0..ny {
                b[l * nx + k] = self.col[l];
            }
        }
    }
}

fn mass1d_apply(x: &[f64], out: &mut [f64], h: f64, periodic: bool) {
    let n = x.len();
    let c = h / 6.0;
    if periodic {
        for i in 0..n {
            let left = x[(i + n - 1) % n];
            let right = x[(i + 1) % n];
            out[i] = c * (4.0 * x[i] + left + right);
        }
    } else {
        for i in 0..n {
            let mut v = if i == 0 || i == n - 1 { 2.0 * x[i] } else { 4.0 * x[i] };
            if i > 0 {
                v += x[i - 1];
            }
            if i + 1 < n {
                v += x[i + 1];
            }
            out[i] = c * v;
        }
    }
}

/// Factored 1D mass matrix: Thomas on the square, Sherman-Morrison on the
/// periodic (cyclic tridiagonal) case.
#[derive(Debug, Clone)]
pub(crate) struct Tridiag {
    n: usize,
    off: f64,
    // forward-elimination multipliers and pivots for the (modified) tridiagonal part
    cp: Vec<f64>,
    piv: Vec<f64>,
    periodic: Option<Cyclic>,
    small: Option<[f64; 4]>,
}

#[derive(Debug, Clone)]
struct Cyclic {
    z: Vec<f64>,
    gamma: f64,
    denom: f64,
}

impl Tridiag {
    fn mass(n: usize, h: f64, periodic: bool) -> Self {
        Self::shifted(n, h, periodic, 1.0, 0.0)
    }

    /// Factors the 1D matrix `cm M + cs S` (`cm > 0`, `cs >= 0`).
    pub(crate) fn shifted(n: usize, h: f64, periodic: bool, cm: f64, cs: f64) -> Self {
        let off = cm * h / 6.0 - cs / h;
        let diag_int = cm * 4.0 * h / 6.0 + 2.0 * cs / h;
        if periodic && n <= 2 {
            // n = 1 has no neighbours; n = 2 couples the two nodes twice.
            let small = if n == 1 {
                [cm * h, 0.0, 0.0, 0.0]
            } else {
                [diag_int, 2.0 * off, 2.0 * off, diag_int]
            };
            return Tridiag {
                n,
                off,
                cp: vec![],
                piv: vec![],
                periodic: None,
                small: Some(small),
            };
        }
        let mut diag = vec![diag_int; n];
        let mut cyc = None;
        let gamma = -diag_int;
        if periodic {
            diag[0] -= gamma;
            diag[n - 1] -= off * off / gamma;
        } else {
            diag[0] = 0.5 * diag_int;
            diag[n - 1] = 0.5 * diag_int;
        }
        let (cp, piv) = factor(&diag, off);
        let mut t = Tridiag {
            n,
            off,
            cp,
            piv,
            periodic: None,
            small: None,
        };
        if periodic {
            let mut z = vec![0.0; n];
            z[0] = gamma;
            z[n - 1] = off;
            t.thomas(&mut z);
            let denom = 1.0 + z[0] + off * z[n - 1] / gamma;
            cyc = Some(Cyclic { z, gamma, denom });
        }
        t.periodic = cyc;
        t
    }

    fn thomas(&self, r: &mut [f64]) {
        let n = self.n;
        r[0] /= self.piv[0];
        for i in 1..n {
            r[i] = (r[i] - self.off * r[i - 1]) / self.piv[i];
        }
        for i in (0..n - 1).rev() {
            r[i] -= self.cp[i] * r[i + 1];
        }
    }

    pub(crate) fn solve(&self, r: &mut [f64]) {
        if let Some([a, b, c, d]) = self.small {
            if self.n == 1 {
                r[0] /= a;
            } else {
                let det = a * d - b * c;
                let (x, y) = ((d * r[0] - b * r[1]) / det, (a * r[1] - c * r[0]) / det);
                r[0] = x;
                r[1] = y;
            }
            return;
        }
        self.thomas(r);
        if let Some(cyc) = &self.periodic {
            let n = self.n;
            let fact = (r[0] + self.off * r[n - 1] / cyc.gamma) / cyc.denom;
            for (ri, zi) in r.iter_mut().zip(&cyc.z) {
                *ri -= fact * zi;
            }
        }
    }
}

fn factor(diag: &[f64], off: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut piv = vec![0.0; n];
    piv[0] = diag[0];
    for i in 0..n {
        if i > 0 {
            piv[i] = diag[i] - off * cp[i - 1];
        }
        cp[i] = off / piv[i];
    }
    (cp, piv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pseudo(d: DomainSpec, seed: u64) -> GridFunction {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let vals = (0..d.node_count())
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect();
        GridFunction::new(d, vals).unwrap()
    }

    #[test]
    fn node_coords_examples() {
        let d = DomainSpec::square(4, 4);
        assert_eq!(d.node_coords(NodeIndex::new(2, 1)).unwrap(), (0.5, 0.25));
        let t = DomainSpec::torus(4, 4);
        assert_eq!(t.node_coords(NodeIndex::new(5, 0)).unwrap(), (0.25, 0.0));
        let d2 = DomainSpec::square(2, 2);
        assert_eq!(d2.node_coords(NodeIndex::new(0, 0)).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn node_coords_out_of_range_on_square() {
        let d = DomainSpec::square(4, 4);
        assert!(matches!(
            d.node_coords(NodeIndex::new(5, 0)),
            Err(Error::NodeOutOfRange { .. })
        ));
        assert!(d.node_coords(NodeIndex::new(-1, 2)).is_err());
    }

    #[test]
    fn node_counts() {
        assert_eq!(DomainSpec::torus(4, 3).node_count(), 12);
        assert_eq!(DomainSpec::square(4, 3).node_count(), 20);
        assert!(DomainSpec::new(DomainKind::UnitSquare, 0, 3).is_err());
    }

    #[test]
    fn eval_examples() {
        let d = DomainSpec::square(4, 4);
        let c = GridFunction::constant(d, 3.0);
        assert!((c.eval(0.37, 0.91) - 3.0).abs() < 1e-15);
        let x = GridFunction::from_fn(d, |x, _| x).unwrap();
        assert!((x.eval(0.3, 0.6) - 0.3).abs() < 1e-15);
        // cell [0, 0.5]^2 with left column 0 and right column 1
        let d2 = DomainSpec::square(2, 2);
        let u = GridFunction::new(d2, vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((u.eval(0.25, 0.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eval_reproduces_nodes() {
        for d in [DomainSpec::torus(5, 7), DomainSpec::square(5, 7)] {
            let u = pseudo(d, 3);
            for l in 0..d.nodes_y() {
                for k in 0..d.nodes_x() {
                    let (x, y) = d.node_coords(NodeIndex::new(k as i64, l as i64)).unwrap();
                    assert_eq!(u.eval(x, y), u.values()[d.flat(k, l)], "({k},{l})");
                }
            }
        }
    }

    #[test]
    fn torus_wrap_on_dyadic_points() {
        let d = DomainSpec::torus(8, 8);
        let u = pseudo(d, 9);
        for i in 0..64 {
            let x = i as f64 / 64.0 + 1.0 / 1024.0;
            let y = (i * 7 % 64) as f64 / 64.0;
            assert_eq!(u.eval(x + 1.0, y), u.eval(x, y));
            assert_eq!(u.eval(x, y - 1.0), u.eval(x, y));
        }
    }

    #[test]
    fn lp_norm_examples() {
        let d = DomainSpec::square(4, 4);
        for p in Norm::ALL {
            let c = GridFunction::constant(d, -2.5);
            assert!((c.lp_norm(p) - 2.5).abs() < 1e-14);
        }
        let x = GridFunction::from_fn(d, |x, _| x).unwrap();
        assert!((x.lp_norm(Norm::L1) - 0.5).abs() < 1e-15);
        assert!((x.lp_norm(Norm::L2) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(x.lp_norm(Norm::Linf), 1.0);
    }

    #[test]
    fn l2_matches_high_order_gauss() {
        let d = DomainSpec::torus(4, 4);
        let u = pseudo(d, 11);
        let g = gauss_legendre(6);
        let mut acc = 0.0;
        for j in 0..4 {
            for i in 0..4 {
                for (t, wt) in g.nodes.iter().zip(&g.weights) {
                    for (s, ws) in g.nodes.iter().zip(&g.weights) {
                        let v = u.eval((i as f64 + s) / 4.0, (j as f64 + t) / 4.0);
                        acc += wt * ws * v * v / 16.0;
                    }
                }
            }
        }
        assert!((u.lp_norm(Norm::L2) - acc.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn unsupported_norm() {
        assert!(matches!(Norm::from_p(3.0), Err(Error::UnsupportedNorm(_))));
        assert!(Norm::parse("l7").is_err());
        assert_eq!(Norm::from_p(f64::INFINITY).unwrap(), Norm::Linf);
    }

    #[test]
    fn rejects_bad_values() {
        let d = DomainSpec::torus(2, 2);
        assert!(matches!(
            GridFunction::new(d, vec![0.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            GridFunction::new(d, vec![0.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite(1))
        ));
    }

    #[test]
    fn refine_is_exact() {
        for d in [DomainSpec::torus(3, 5), DomainSpec::square(3, 5)] {
            let u = pseudo(d, 5);
            let f = u.refine(4).unwrap();
            for (x, y) in [(0.1, 0.2), (0.77, 0.31), (0.5, 0.999)] {
                assert!((f.eval(x, y) - u.eval(x, y)).abs() < 1e-14);
            }
            assert!((f.lp_norm(Norm::L2) - u.lp_norm(Norm::L2)).abs() < 1e-13);
            assert!((f.integral() - u.integral()).abs() < 1e-14);
        }
    }

    #[test]
    fn integrate_rect_matches_refined_midpoint() {
        let d = DomainSpec::torus(4, 4);
        let u = pseudo(d, 21);
        // box straddling the periodic seam
        let (x0, x1, y0, y1) = (-0.1, 0.23, 0.9, 1.17);
        let exact = u.integrate_rect(x0, x1, y0, y1);
        let m = 400;
        let mut acc = 0.0;
        for b in 0..m {
            for a in 0..m {
                let x = x0 + (a as f64 + 0.5) * (x1 - x0) / m as f64;
                let y = y0 + (b as f64 + 0.5) * (y1 - y0) / m as f64;
                acc += u.eval(x, y);
            }
        }
        acc *= (x1 - x0) * (y1 - y0) / (m * m) as f64;
        assert!((exact - acc).abs() < 1e-6, "{exact} vs {acc}");
        assert!((u.integrate_rect(0.0, 1.0, 0.0, 1.0) - u.integral()).abs() < 1e-14);
    }

    #[test]
    fn mass_solve_inverts_apply() {
        for d in [
            DomainSpec::torus(1, 1),
            DomainSpec::torus(2, 5),
            DomainSpec::torus(7, 3),
            DomainSpec::square(1, 1),
            DomainSpec::square(6, 4),
        ] {
            let u = pseudo(d, 2);
            let mu = apply_mass(&d, u.values());
            let back = solve_mass(&d, &mu);
            for (a, b) in back.iter().zip(u.values()) {
                assert!((a - b).abs() < 1e-12, "{d:?}");
            }
            let quad: f64 = mu.iter().zip(u.values()).map(|(a, b)| a * b).sum();
            assert!((quad - u.lp_norm(Norm::L2).powi(2)).abs() < 1e-13, "{d:?}");
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 1usize..20) {
            let d = DomainSpec::square(n, n + 1);
            let one = GridFunction::constant(d, 1.0);
            prop_assert!((one.eval(x, y) - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn lp_homogeneous(seed in 0u64..1000, c in -5.0f64..5.0) {
            let d = DomainSpec::torus(4, 6);
            let u = pseudo(d, seed);
            let cu = u.scaled(c);
            for p in Norm::ALL {
                let a = cu.lp_norm(p);
                let b = c.abs() * u.lp_norm(p);
                prop_assert!((a - b).abs() <= 1e-13 * b.max(1e-300));
            }
        }
    }
}
