//! Box-averaging quasi-interpolation into the Q1 space.
//!
//! The kernel is the normalized indicator of the box
//! `Q = [-h1/2, h1/2] x [-h2/2, h2/2]`, so every nodal value is the mean of
//! the input over `z_{k,l} + Q`. Three operators are built on it:
//!
//! * [`pi_h`] on the torus: the plain box mean at every node, boxes wrap.
//! * [`c_h`] on the square: box means at interior nodes, means over the
//!   box clipped to the square at boundary nodes. Preserves constants.
//! * [`i_h`] on the square: box means of the homothetic extension
//!   `w_eps(y) = w((y + eps)/(1 + 2 eps)) / (1 + 2 eps)` at every node.
//!   Maps a constant `c` to `c / (1 + 2 eps)`.
//!
//! Analytic inputs are averaged with a composite midpoint rule; fine-grid
//! inputs are integrated exactly.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{lagrange_interpolate, DomainKind, DomainSpec, GridFunction, NodeIndex};
use crate::parallel::fill_indexed;

pub const DEFAULT_QUAD_RES: usize = 16;

/// Normalized box kernel `psi = psi1 (x) psi2`, `psi_i = chi_[-h_i/2, h_i/2] / h_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    pub half_width1: f64,
    pub half_width2: f64,
}

impl Kernel {
    pub fn for_domain(d: &DomainSpec) -> Self {
        Kernel {
            half_width1: 0.5 * d.h1(),
            half_width2: 0.5 * d.h2(),
        }
    }

    /// Constant value of the weight on its support, `1/(h1 h2)`.
    pub fn height(&self) -> f64 {
        1.0 / (4.0 * self.half_width1 * self.half_width2)
    }

    pub fn weight(&self, z1: f64, z2: f64) -> f64 {
        if z1.abs() <= self.half_width1 && z2.abs() <= self.half_width2 {
            self.height()
        } else {
            0.0
        }
    }

    /// Integral of the weight over its support.
    pub fn mass(&self) -> f64 {
        self.height() * (2.0 * self.half_width1) * (2.0 * self.half_width2)
    }
}

pub type AnalyticFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// An input function to be interpolated.
#[derive(Clone)]
pub enum InputField {
    /// Pointwise-evaluable function, averaged with an `m x m` midpoint rule per box.
    Analytic { f: AnalyticFn, quad_res: usize },
    /// A Q1 function on a finer mesh of the same kind, integrated exactly.
    FineGrid(GridFunction),
}

impl fmt::Debug for InputField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputField::Analytic { quad_res, .. } => f
                .debug_struct("Analytic")
                .field("quad_res", quad_res)
                .finish_non_exhaustive(),
            InputField::FineGrid(u) => f.debug_tuple("FineGrid").field(u.domain()).finish(),
        }
    }
}

impl InputField {
    pub fn analytic(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        InputField::Analytic {
            f: Arc::new(f),
            quad_res: DEFAULT_QUAD_RES,
        }
    }

    pub fn analytic_with_res(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, m: usize) -> Self {
        InputField::Analytic {
            f: Arc::new(f),
            quad_res: m,
        }
    }

    pub fn fine(u: GridFunction) -> Self {
        InputField::FineGrid(u)
    }

    pub fn constant(c: f64) -> Self {
        Self::analytic(move |_, _| c)
    }

    /// Pointwise value.
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match self {
            InputField::Analytic { f, .. } => f(x, y),
            InputField::FineGrid(u) => u.eval(x, y),
        }
    }

    pub(crate) fn validate_pointwise(&self) -> Result<()> {
        match self {
            InputField::Analytic { quad_res: 0, .. } => {
                Err(Error::MalformedInput("quadrature resolution must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Checks the input can be averaged against the kernel of `d`.
    pub fn validate_for(&self, d: &DomainSpec) -> Result<()> {
        self.validate_pointwise()?;
        if let InputField::FineGrid(u) = self {
            let fd = u.domain();
            if fd.kind() != d.kind() {
                return Err(Error::MalformedInput(format!(
                    "fine grid is on a {}, target is a {}",
                    fd.kind().name(),
                    d.kind().name()
                )));
            }
            if fd.n1() % d.n1() != 0 || fd.n2() % d.n2() != 0 {
                return Err(Error::MalformedInput(format!(
                    "fine mesh {}x{} is not an integer refinement of {}x{}",
                    fd.n1(),
                    fd.n2(),
                    d.n1(),
                    d.n2()
                )));
            }
        }
        Ok(())
    }

    /// Mean over `[x0,x1] x [y0,y1]`. On the torus the rectangle wraps.
    fn rect_mean(&self, periodic: bool, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        match self {
            InputField::Analytic { f, quad_res } => {
                let wrap = |v: f64| if periodic { v.rem_euclid(1.0) } else { v };
                midpoint_mean(*quad_res, x0, x1, y0, y1, |x, y| f(wrap(x), wrap(y)))
            }
            InputField::FineGrid(u) => u.integrate_rect(x0, x1, y0, y1) / ((x1 - x0) * (y1 - y0)),
        }
    }
}

fn midpoint_mean(m: usize, x0: f64, x1: f64, y0: f64, y1: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    let dx = (x1 - x0) / m as f64;
    let dy = (y1 - y0) / m as f64;
    let mut acc = 0.0;
    for b in 0..m {
        let y = y0 + (b as f64 + 0.5) * dy;
        for a in 0..m {
            acc += f(x0 + (a as f64 + 0.5) * dx, y);
        }
    }
    acc / (m * m) as f64
}

/// Dilation parameter of the homothetic extension, `eps = max(h1, h2)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomotheticParams {
    pub epsilon: f64,
}

impl HomotheticParams {
    pub fn for_domain(d: &DomainSpec) -> Self {
        HomotheticParams {
            epsilon: 0.5 * d.h1().max(d.h2()),
        }
    }

    pub fn new(epsilon: f64) -> Result<Self> {
        if epsilon.is_finite() && epsilon > 0.0 {
            Ok(HomotheticParams { epsilon })
        } else {
            Err(Error::InvalidParam(format!("epsilon must be positive, got {epsilon}")))
        }
    }
}

fn node_box(d: &DomainSpec, k: usize, l: usize) -> (f64, f64, f64, f64) {
    let (h1, h2) = (d.h1(), d.h2());
    let (x, y) = (k as f64 * h1, l as f64 * h2);
    (x - 0.5 * h1, x + 0.5 * h1, y - 0.5 * h2, y + 0.5 * h2)
}

/// `W_{k,l}`: the mean of `w` over `z_{k,l} + Q`.
///
/// On the unit square only interior nodes are accepted; boundary nodes need
/// the clipped average of [`c_h`] or the extension of [`i_h`].
pub fn averaged_nodal_value(w: &InputField, d: &DomainSpec, idx: NodeIndex) -> Result<f64> {
    w.validate_for(d)?;
    let (k, l) = d.canonical(idx)?;
    if d.is_boundary(k, l) {
        return Err(Error::BoundaryNode { k: idx.k, l: idx.l });
    }
    let (x0, x1, y0, y1) = node_box(d, k, l);
    Ok(w.rect_mean(d.is_periodic(), x0, x1, y0, y1))
}

/// Mean over the box clipped to the unit square.
fn clipped_value(w: &InputField, d: &DomainSpec, k: usize, l: usize) -> f64 {
    let (x0, x1, y0, y1) = node_box(d, k, l);
    w.rect_mean(false, x0.max(0.0), x1.min(1.0), y0.max(0.0), y1.min(1.0))
}

fn build(d: &DomainSpec, node: impl Fn(usize, usize) -> f64 + Sync) -> Result<GridFunction> {
    let nx = d.nodes_x();
    let mut values = vec![0.0; d.node_count()];
    fill_indexed(&mut values, |i| node(i % nx, i / nx));
    GridFunction::new(*d, values)
}

/// Periodic quasi-interpolant: `pi_h w (z_{k,l}) = W_{k,l}`.
pub fn pi_h(w: &InputField, d: &DomainSpec) -> Result<GridFunction> {
    if !d.is_periodic() {
        return Err(Error::WrongDomainKind { expected: "periodic torus" });
    }
    w.validate_for(d)?;
    build(d, |k, l| {
        let (x0, x1, y0, y1) = node_box(d, k, l);
        w.rect_mean(true, x0, x1, y0, y1)
    })
}

/// Boundary-rescaled quasi-interpolant on the unit square.
pub fn c_h(w: &InputField, d: &DomainSpec) -> Result<GridFunction> {
    if d.is_periodic() {
        return Err(Error::WrongDomainKind { expected: "unit square" });
    }
    w.validate_for(d)?;
    build(d, |k, l| clipped_value(w, d, k, l))
}

/// Homothetic quasi-interpolant `pi_h w_eps` on the unit square.
///
/// Every box `z_{k,l} + Q` lies in `(-eps, 1 + eps)^2`, so the interior
/// formula applies at all nodes.
pub fn i_h(w: &InputField, d: &DomainSpec, p: HomotheticParams) -> Result<GridFunction> {
    if d.is_periodic() {
        return Err(Error::WrongDomainKind { expected: "unit square" });
    }
    w.validate_for(d)?;
    let eps = p.epsilon;
    let scale = 1.0 + 2.0 * eps;
    let back = move |y: f64| ((y + eps) / scale).clamp(0.0, 1.0);
    build(d, |k, l| {
        let (x0, x1, y0, y1) = node_box(d, k, l);
        match w {
            InputField::Analytic { f, quad_res } => {
                midpoint_mean(*quad_res, x0, x1, y0, y1, |x, y| f(back(x), back(y))) / scale
            }
            // change of variables: the mean of w_eps over the box is the mean
            // of w over the pulled-back box, divided by (1 + 2 eps)
            InputField::FineGrid(_) => {
                w.rect_mean(false, back(x0), back(x1), back(y0), back(y1)) / scale
            }
        }
    })
}

/// The interpolation operators, including nodal interpolation as a baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Pi,
    C,
    I,
    Lagrange,
}

impl Operator {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pi" | "pi_h" => Ok(Operator::Pi),
            "c" | "c_h" => Ok(Operator::C),
            "i" | "i_h" => Ok(Operator::I),
            "lagrange" | "nodal" => Ok(Operator::Lagrange),
            _ => Err(Error::InvalidParam(format!("unknown operator {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::Pi => "pi_h",
            Operator::C => "c_h",
            Operator::I => "i_h",
            Operator::Lagrange => "lagrange",
        }
    }

    /// Natural quasi-interpolant for a domain kind.
    pub fn default_for(kind: DomainKind) -> Self {
        match kind {
            DomainKind::PeriodicTorus => Operator::Pi,
            DomainKind::UnitSquare => Operator::C,
        }
    }

    pub fn apply(self, w: &InputField, d: &DomainSpec) -> Result<GridFunction> {
        match self {
            Operator::Pi => pi_h(w, d),
            Operator::C => c_h(w, d),
            Operator::I => i_h(w, d, HomotheticParams::for_domain(d)),
            Operator::Lagrange => lagrange_interpolate(w, *d),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Norm;
    use crate::variation::{directional_variation, Direction};
    use std::f64::consts::PI;

    #[test]
    fn kernel_has_unit_mass() {
        let k = Kernel::for_domain(&DomainSpec::square(8, 5));
        assert!((k.mass() - 1.0).abs() < 1e-15);
        assert!((k.height() - 40.0).abs() < 1e-12);
        assert_eq!(k.weight(0.2, 0.0), 0.0);
        assert_eq!(k.weight(0.0, 0.0), k.height());
    }

    #[test]
    fn constant_average() {
        let d = DomainSpec::torus(8, 8);
        let v = averaged_nodal_value(&InputField::constant(5.0), &d, NodeIndex::new(3, 0)).unwrap();
        assert!((v - 5.0).abs() < 1e-14);
    }

    #[test]
    fn linear_center_value() {
        for n in [4, 8, 10] {
            let d = DomainSpec::square(n, n);
            let w = InputField::analytic(|x, _| x);
            let v = averaged_nodal_value(&w, &d, NodeIndex::new(n as i64 / 2, n as i64 / 2)).unwrap();
            assert!((v - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_mean_matches_closed_form() {
        // mean of x^2 over [z - h/2, z + h/2] is z^2 + h^2/12; the m-point
        // midpoint rule undershoots by exactly h^2/(12 m^2)
        let d = DomainSpec::square(4, 4);
        let exact = 0.25 + 0.25f64.powi(2) / 12.0;
        assert!((exact - 0.255_208_333_333_333_3).abs() < 1e-15);
        let m = 64;
        let w = InputField::analytic_with_res(|x, _| x * x, m);
        let v = averaged_nodal_value(&w, &d, NodeIndex::new(2, 2)).unwrap();
        let predicted = exact - 0.0625 / (12.0 * (m * m) as f64);
        assert!((v - predicted).abs() < 1e-15, "{v} vs {predicted}");
    }

    #[test]
    fn boundary_node_rejected_on_square() {
        let d = DomainSpec::square(4, 4);
        let r = averaged_nodal_value(&InputField::constant(1.0), &d, NodeIndex::new(0, 2));
        assert!(matches!(r, Err(Error::BoundaryNode { .. })));
    }

    #[test]
    fn malformed_inputs() {
        let d = DomainSpec::torus(4, 4);
        let bad = InputField::analytic_with_res(|_, _| 1.0, 0);
        assert!(matches!(pi_h(&bad, &d), Err(Error::MalformedInput(_))));
        let fine = InputField::fine(GridFunction::zeros(DomainSpec::torus(6, 8)));
        assert!(matches!(pi_h(&fine, &d), Err(Error::MalformedInput(_))));
        let wrong_kind = InputField::fine(GridFunction::zeros(DomainSpec::square(8, 8)));
        assert!(pi_h(&wrong_kind, &d).is_err());
    }

    #[test]
    fn operators_check_domain_kind() {
        let w = InputField::constant(1.0);
        assert!(matches!(
            pi_h(&w, &DomainSpec::square(4, 4)),
            Err(Error::WrongDomainKind { .. })
        ));
        assert!(c_h(&w, &DomainSpec::torus(4, 4)).is_err());
        let t = DomainSpec::torus(4, 4);
        assert!(i_h(&w, &t, HomotheticParams::for_domain(&t)).is_err());
    }

    #[test]
    fn pi_h_constant() {
        let d = DomainSpec::torus(8, 4);
        let u = pi_h(&InputField::constant(-1.5), &d).unwrap();
        assert!(u.values().iter().all(|v| (v + 1.5).abs() < 1e-14));
    }

    #[test]
    fn pi_h_half_plane_keeps_variation() {
        let d = DomainSpec::torus(8, 8);
        let w = InputField::analytic_with_res(|x, _| if x < 0.5 { 1.0 } else { 0.0 }, 64);
        let u = pi_h(&w, &d).unwrap();
        // ramp values: 0.5 at the two jump nodes, 1 and 0 elsewhere
        let row: Vec<f64> = (0..8).map(|k| u.values()[k]).collect();
        assert_eq!(row, vec![0.5, 1.0, 1.0, 1.0, 0.5, 0.0, 0.0, 0.0]);
        assert!((directional_variation(&u, Direction::X1) - 2.0).abs() < 1e-14);
        assert!(directional_variation(&u, Direction::X2).abs() < 1e-14);
    }

    #[test]
    fn pi_h_sinusoid_is_damped_sample() {
        let d = DomainSpec::torus(16, 16);
        let w = InputField::analytic_with_res(|x, _| (2.0 * PI * x).sin(), 128);
        let u = pi_h(&w, &d).unwrap();
        let h = d.h1();
        let damp = (PI * h).sin() / (PI * h);
        assert!(u.get(NodeIndex::new(0, 3)).unwrap().abs() < 1e-14);
        assert!((u.get(NodeIndex::new(4, 3)).unwrap() - damp).abs() < 1e-6);
    }

    #[test]
    fn i_h_constant_defect() {
        let d = DomainSpec::square(8, 8);
        let p = HomotheticParams::for_domain(&d);
        assert_eq!(p.epsilon, 1.0 / 16.0);
        let u = i_h(&InputField::constant(1.0), &d, p).unwrap();
        assert!(u.values().iter().all(|v| (v - 8.0 / 9.0).abs() < 1e-14));
        let z = i_h(&InputField::constant(0.0), &d, p).unwrap();
        assert!(z.values().iter().all(|v| *v == 0.0));
        // same through the fine-grid path
        let fine = InputField::fine(GridFunction::constant(DomainSpec::square(32, 32), 1.0));
        let uf = i_h(&fine, &d, p).unwrap();
        assert!(uf.values().iter().all(|v| (v - 8.0 / 9.0).abs() < 1e-14));
    }

    #[test]
    fn i_h_half_plane_is_tvd() {
        let d = DomainSpec::square(8, 8);
        let w = InputField::analytic_with_res(|x, _| if x < 0.5 { 1.0 } else { 0.0 }, 64);
        let u = i_h(&w, &d, HomotheticParams::for_domain(&d)).unwrap();
        let v1 = directional_variation(&u, Direction::X1);
        assert!(v1 <= 1.0 + 1e-12, "{v1}");
        assert!(v1 > 0.5);
    }

    #[test]
    fn c_h_examples() {
        let d = DomainSpec::square(4, 4);
        let c = c_h(&InputField::constant(2.0), &d).unwrap();
        assert!(c.values().iter().all(|v| (v - 2.0).abs() < 1e-14));
        let x = c_h(&InputField::analytic(|x, _| x), &d).unwrap();
        assert!((x.get(NodeIndex::new(0, 0)).unwrap() - 0.0625).abs() < 1e-15);
        assert!((x.get(NodeIndex::new(2, 2)).unwrap() - 0.5).abs() < 1e-15);
        // clipped fine-grid path agrees
        let fx = InputField::fine(GridFunction::from_fn(DomainSpec::square(16, 16), |x, _| x).unwrap());
        let y = c_h(&fx, &d).unwrap();
        for (a, b) in x.values().iter().zip(y.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_affine_exactness() {
        let d = DomainSpec::square(8, 8);
        let w = InputField::analytic(|x, y| 0.3 - 1.7 * x + 2.2 * y);
        for l in 1..8 {
            for k in 1..8 {
                let v = averaged_nodal_value(&w, &d, NodeIndex::new(k, l)).unwrap();
                let (x, y) = (k as f64 / 8.0, l as f64 / 8.0);
                assert!((v - (0.3 - 1.7 * x + 2.2 * y)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn stability_on_a_smooth_field() {
        let fine_d = DomainSpec::torus(64, 64);
        let fine = GridFunction::from_fn(fine_d, |x, y| (2.0 * PI * x).cos() * (4.0 * PI * y).sin()).unwrap();
        let w = InputField::fine(fine.clone());
        let u = pi_h(&w, &DomainSpec::torus(8, 8)).unwrap();
        for p in Norm::ALL {
            assert!(u.lp_norm(p) <= fine.lp_norm(p) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn operator_parse_round_trip() {
        for op in [Operator::Pi, Operator::C, Operator::I, Operator::Lagrange] {
            assert_eq!(Operator::parse(op.name()).unwrap(), op);
        }
        assert!(Operator::parse("spline").is_err());
    }
}
