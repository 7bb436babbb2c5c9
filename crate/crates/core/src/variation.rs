//! Total variation of Q1 grid functions.
//!
//! On a cell, `d1 u` is constant in `x1` and linear in `x2` (and vice versa),
//! so the directional variations `V_i = int |d_i u|` have per-cell closed
//! forms. The isotropic `int |grad u|` has none and is evaluated with a
//! tensor Gauss rule.

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::quadrature::gauss_legendre;

pub const DEFAULT_TV_QUAD: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    X1,
    X2,
}

impl Direction {
    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            1 => Ok(Direction::X1),
            2 => Ok(Direction::X2),
            _ => Err(Error::InvalidParam(format!("direction must be 1 or 2, got {i}"))),
        }
    }
}

/// `int_0^len |a + (b - a) t/len| dt`.
pub fn segment_abs_integral(a: f64, b: f64, len: f64) -> f64 {
    if a * b >= 0.0 {
        0.5 * len * (a.abs() + b.abs())
    } else {
        0.5 * len * (a * a + b * b) / (a.abs() + b.abs())
    }
}

/// Exact `int |d_i u|` over the whole domain.
pub fn directional_variation(u: &GridFunction, dir: Direction) -> f64 {
    let d = u.domain();
    let mut acc = 0.0;
    for j in 0..d.n2() {
        for i in 0..d.n1() {
            let [a00, a10, a01, a11] = u.cell_corners(i, j);
            // h1 * int_0^{h2} |slope(x2)| dx2 with slope = diff / h1; the h1 cancels
            acc += match dir {
                Direction::X1 => segment_abs_integral(a10 - a00, a11 - a01, d.h2()),
                Direction::X2 => segment_abs_integral(a01 - a00, a11 - a10, d.h1()),
            };
        }
    }
    acc
}

/// `int |grad u|` with a `q x q` Gauss rule per cell.
pub fn tv_iso(u: &GridFunction, q: usize) -> Result<f64> {
    if q < 2 {
        return Err(Error::QuadOrder { min: 2, got: q });
    }
    Ok(tv_gauss(u, q))
}

/// Gauss-rule `int |grad u|` for any `q >= 1`; the solver's discrete TV.
pub(crate) fn tv_gauss(u: &GridFunction, q: usize) -> f64 {
    let d = u.domain();
    let g = gauss_legendre(q);
    let (h1, h2) = (d.h1(), d.h2());
    let mut acc = 0.0;
    for j in 0..d.n2() {
        for i in 0..d.n1() {
            let [a00, a10, a01, a11] = u.cell_corners(i, j);
            let (dx0, dx1) = ((a10 - a00) / h1, (a11 - a01) / h1);
            let (dy0, dy1) = ((a01 - a00) / h2, (a11 - a10) / h2);
            let mut cell = 0.0;
            for (t, wt) in g.nodes.iter().zip(&g.weights) {
                let gx = dx0 + (dx1 - dx0) * t;
                for (s, ws) in g.nodes.iter().zip(&g.weights) {
                    let gy = dy0 + (dy1 - dy0) * s;
                    cell += wt * ws * gx.hypot(gy);
                }
            }
            acc += cell;
        }
    }
    acc * h1 * h2
}

/// Directional and isotropic variations of one function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TvBreakdown {
    pub v1: f64,
    pub v2: f64,
    pub aniso: f64,
    pub iso: f64,
    pub quad_order: usize,
}

pub fn tv_breakdown(u: &GridFunction, q: usize) -> Result<TvBreakdown> {
    let iso = tv_iso(u, q)?;
    let v1 = directional_variation(u, Direction::X1);
    let v2 = directional_variation(u, Direction::X2);
    Ok(TvBreakdown {
        v1,
        v2,
        aniso: v1 + v2,
        iso,
        quad_order: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(d: DomainSpec, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..d.node_count()).map(|_| rng.random::<f64>()).collect();
        GridFunction::new(d, v).unwrap()
    }

    /// Brute-force `int |d_i u|` by a fine midpoint rule on the exact
    /// cell-wise derivative.
    fn brute_directional(u: &GridFunction, dir: Direction, m: usize) -> f64 {
        let d = u.domain();
        let (h1, h2) = (d.h1(), d.h2());
        let mut acc = 0.0;
        for j in 0..d.n2() {
            for i in 0..d.n1() {
                let [a00, a10, a01, a11] = u.cell_corners(i, j);
                for b in 0..m {
                    let t = (b as f64 + 0.5) / m as f64;
                    for a in 0..m {
                        let s = (a as f64 + 0.5) / m as f64;
                        let g = match dir {
                            Direction::X1 => ((1.0 - t) * (a10 - a00) + t * (a11 - a01)) / h1,
                            Direction::X2 => ((1.0 - s) * (a01 - a00) + s * (a11 - a10)) / h2,
                        };
                        acc += g.abs();
                    }
                }
            }
        }
        acc * h1 * h2 / (m * m) as f64
    }

    #[test]
    fn segment_examples() {
        assert_eq!(segment_abs_integral(1.0, 1.0, 2.0), 2.0);
        assert_eq!(segment_abs_integral(1.0, -1.0, 2.0), 1.0);
        assert_eq!(segment_abs_integral(0.0, 3.0, 1.0), 1.5);
        assert_eq!(segment_abs_integral(0.0, 0.0, 1.0), 0.0);
    }

    #[test]
    fn segment_matches_fine_midpoint() {
        let (a, b, len) = (0.7, -2.3, 1.3);
        let m = 200_000;
        let s: f64 = (0..m)
            .map(|i| {
                let t = (i as f64 + 0.5) / m as f64;
                (a + (b - a) * t).abs()
            })
            .sum::<f64>()
            * len
            / m as f64;
        assert!((segment_abs_integral(a, b, len) - s).abs() < 1e-9);
    }

    #[test]
    fn directional_examples() {
        let d = DomainSpec::square(4, 4);
        let c = GridFunction::constant(d, 2.0);
        assert_eq!(directional_variation(&c, Direction::X1), 0.0);
        let x = GridFunction::from_fn(d, |x, _| x).unwrap();
        assert!((directional_variation(&x, Direction::X1) - 1.0).abs() < 1e-15);
        assert_eq!(directional_variation(&x, Direction::X2), 0.0);
        let t = DomainSpec::torus(4, 4);
        let col = GridFunction::from_fn(t, |x, _| if x == 0.0 { 1.0 } else { 0.0 }).unwrap();
        assert!((directional_variation(&col, Direction::X1) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn directional_matches_brute_force() {
        for d in [DomainSpec::torus(5, 4), DomainSpec::square(3, 6)] {
            let u = random(d, 17);
            for dir in [Direction::X1, Direction::X2] {
                let exact = directional_variation(&u, dir);
                let brute = brute_directional(&u, dir, 400);
                assert!((exact - brute).abs() < 1e-5 * exact, "{exact} vs {brute}");
            }
        }
    }

    #[test]
    fn iso_examples() {
        let d = DomainSpec::square(4, 4);
        assert_eq!(tv_iso(&GridFunction::constant(d, 1.0), 4).unwrap(), 0.0);
        let x = GridFunction::from_fn(d, |x, _| x).unwrap();
        for q in [2, 3, 7] {
            assert!((tv_iso(&x, q).unwrap() - 1.0).abs() < 1e-14);
        }
        let xy = GridFunction::from_fn(d, |x, y| x + y).unwrap();
        assert!((tv_iso(&xy, 4).unwrap() - 2f64.sqrt()).abs() < 1e-14);
        assert!(matches!(tv_iso(&x, 1), Err(Error::QuadOrder { .. })));
    }

    #[test]
    fn breakdown_examples() {
        let d = DomainSpec::square(4, 4);
        let z = tv_breakdown(&GridFunction::zeros(d), 4).unwrap();
        assert_eq!((z.v1, z.v2, z.aniso, z.iso), (0.0, 0.0, 0.0, 0.0));
        let x = tv_breakdown(&GridFunction::from_fn(d, |x, _| x).unwrap(), 4).unwrap();
        assert!((x.v1 - 1.0).abs() < 1e-15 && x.v2 == 0.0);
        assert!((x.aniso - 1.0).abs() < 1e-15 && (x.iso - 1.0).abs() < 1e-14);
        let r = random(DomainSpec::square(8, 8), 3);
        let a = tv_iso(&r, 4).unwrap();
        let b = tv_iso(&r, 8).unwrap();
        assert!((a - b).abs() < 1e-3 * b, "{a} vs {b}");
    }

    #[test]
    fn refinement_consistency() {
        for d in [DomainSpec::torus(6, 5), DomainSpec::square(6, 5)] {
            let u = random(d, 8);
            let f = u.refine(2).unwrap();
            for dir in [Direction::X1, Direction::X2] {
                let a = directional_variation(&u, dir);
                let b = directional_variation(&f, dir);
                assert!((a - b).abs() < 1e-12 * a);
            }
        }
    }

    proptest! {
        #[test]
        fn scaling_and_translation(seed in 0u64..500, c in -4.0f64..4.0, shift in -3.0f64..3.0) {
            let u = random(DomainSpec::torus(6, 6), seed);
            let cu = u.scaled(c);
            let su = GridFunction::new(*u.domain(), u.values().iter().map(|v| v + shift).collect()).unwrap();
            for dir in [Direction::X1, Direction::X2] {
                let base = directional_variation(&u, dir);
                prop_assert!((directional_variation(&cu, dir) - c.abs() * base).abs() <= 1e-13 * base * c.abs().max(1.0));
                prop_assert!((directional_variation(&su, dir) - base).abs() <= 1e-13 * shift.abs().max(1.0) * base.max(1.0));
            }
            let iso = tv_iso(&u, 4).unwrap();
            prop_assert!((tv_iso(&cu, 4).unwrap() - c.abs() * iso).abs() <= 1e-13 * iso * c.abs().max(1.0));
            prop_assert!((tv_iso(&su, 4).unwrap() - iso).abs() <= 1e-13 * shift.abs().max(1.0) * iso.max(1.0));
        }

        #[test]
        fn norm_equivalence(seed in 0u64..500) {
            let b = tv_breakdown(&random(DomainSpec::square(5, 7), seed), 4).unwrap();
            prop_assert!(b.iso <= b.aniso * (1.0 + 1e-3));
            prop_assert!(b.aniso <= 2f64.sqrt() * b.iso * (1.0 + 1e-3));
            prop_assert!(b.v1 >= 0.0 && b.v2 >= 0.0 && b.iso >= 0.0);
        }
    }
}
