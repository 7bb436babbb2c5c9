//! Solves `(a M + b S) x = r` for the Q1 mass matrix `M` and stiffness `S`.
//!
//! Both are sums of tensor products of 1D factors, `M = Mx (x) My` and
//! `S = Sx (x) My + Mx (x) Sy`. Along x the factors are circulant (torus) or
//! become circulant after even reflection once the half-weighted boundary
//! rows are doubled (square), so an FFT diagonalizes them. What is left per
//! x-frequency is a real tridiagonal system along y.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{DomainSpec, Tridiag};

pub(crate) struct ShiftedStiffnessSolver {
    periodic: bool,
    nx: usize,
    ny: usize,
    hy: f64,
    // FFT length along x and the number of distinct (Hermitian) frequencies
    len: usize,
    modes: usize,
    mass_sym: Vec<f64>,
    stiff_sym: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    row: Vec<Complex64>,
    scratch: Vec<Complex64>,
    // spectrum, mode-major: spec_re[k * ny + j]
    spec_re: Vec<f64>,
    spec_im: Vec<f64>,
    factors: Option<((f64, f64), Vec<Tridiag>)>,
}

impl std::fmt::Debug for ShiftedStiffnessSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShiftedStiffnessSolver")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("len", &self.len)
            .finish()
    }
}

impl ShiftedStiffnessSolver {
    pub(crate) fn new(d: &DomainSpec) -> Self {
        let periodic = d.is_periodic();
        let (nx, ny) = (d.nodes_x(), d.nodes_y());
        let len = if periodic { d.n1() } else { 2 * d.n1() };
        let modes = len / 2 + 1;
        let hx = d.h1();
        let (mut mass_sym, mut stiff_sym) = (Vec::with_capacity(modes), Vec::with_capacity(modes));
        for k in 0..modes {
            let c = (2.0 * PI * k as f64 / len as f64).cos();
            mass_sym.push(hx * (4.0 + 2.0 * c) / 6.0);
            stiff_sym.push((2.0 - 2.0 * c) / hx);
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        ShiftedStiffnessSolver {
            periodic,
            nx,
            ny,
            hy: d.h2(),
            len,
            modes,
            mass_sym,
            stiff_sym,
            fwd,
            inv,
            row: vec![Complex64::default(); len],
            scratch: vec![Complex64::default(); scratch_len],
            spec_re: vec![0.0; modes * ny],
            spec_im: vec![0.0; modes * ny],
            factors: None,
        }
    }

    /// Overwrites `r` with the solution of `(a M + b S) x = r`; `a > 0`, `b >= 0`.
    pub(crate) fn solve_in_place(&mut self, a: f64, b: f64, r: &mut [f64]) {
        let (nx, ny, len, modes) = (self.nx, self.ny, self.len, self.modes);
        if self.factors.as_ref().is_none_or(|(key, _)| *key != (a, b)) {
            let f = (0..modes)
                .map(|k| {
                    let (m, s) = (self.mass_sym[k], self.stiff_sym[k]);
                    Tridiag::shifted(ny, self.hy, self.periodic, a * m + b * s, b * m)
                })
                .collect();
            self.factors = Some(((a, b), f));
        }

        for j in 0..ny {
            let src = &r[j * nx..(j + 1) * nx];
            if self.periodic {
                for (c, v) in self.row.iter_mut().zip(src) {
                    *c = Complex64::new(*v, 0.0);
                }
            } else {
                for (i, (c, v)) in self.row.iter_mut().zip(src).enumerate() {
                    let w = if i == 0 || i == nx - 1 { 2.0 } else { 1.0 };
                    *c = Complex64::new(w * v, 0.0);
                }
                for i in nx..len {
                    self.row[i] = self.row[len - i];
                }
            }
            self.fwd.process_with_scratch(&mut self.row, &mut self.scratch);
            for k in 0..modes {
                self.spec_re[k * ny + j] = self.row[k].re;
                self.spec_im[k * ny + j] = self.row[k].im;
            }
        }

        let (_, factors) = self.factors.as_ref().expect("factored above");
        for (k, t) in factors.iter().enumerate() {
            t.solve(&mut self.spec_re[k * ny..(k + 1) * ny]);
            t.solve(&mut self.spec_im[k * ny..(k + 1) * ny]);
        }

        let scale = 1.0 / len as f64;
        for j in 0..ny {
            for k in 0..modes {
                self.row[k] = Complex64::new(self.spec_re[k * ny + j], self.spec_im[k * ny + j]);
            }
            for k in modes..len {
                self.row[k] = self.row[len - k].conj();
            }
            self.inv.process_with_scratch(&mut self.row, &mut self.scratch);
            for (o, c) in r[j * nx..(j + 1) * nx].iter_mut().zip(&self.row) {
                *o = c.re * scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::apply_mass;

    /// Q1 stiffness applied cell by cell with the exact element matrix.
    fn apply_stiffness(d: &DomainSpec, u: &[f64]) -> Vec<f64> {
        let (h1, h2) = (d.h1(), d.h2());
        let (rx, ry) = (h2 / h1, h1 / h2);
        // element matrix on corners [00, 10, 01, 11]
        let ke = |a: usize, b: usize| -> f64 {
            let (ax, ay, bx, by) = (a & 1, a >> 1, b & 1, b >> 1);
            let dx = if ax == bx { 1.0 } else { -1.0 };
            let my = if ay == by { 1.0 / 3.0 } else { 1.0 / 6.0 };
            let dy = if ay == by { 1.0 } else { -1.0 };
            let mx = if ax == bx { 1.0 / 3.0 } else { 1.0 / 6.0 };
            rx * dx * my + ry * dy * mx
        };
        let mut out = vec![0.0; u.len()];
        for j in 0..d.n2() {
            for i in 0..d.n1() {
                let idx = [d.corner(i, j), d.corner(i + 1, j), d.corner(i, j + 1), d.corner(i + 1, j + 1)];
                for a in 0..4 {
                    for b in 0..4 {
                        out[idx[a]] += ke(a, b) * u[idx[b]];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn inverts_shifted_operator() {
        for d in [
            DomainSpec::torus(1, 1),
            DomainSpec::torus(2, 3),
            DomainSpec::torus(6, 4),
            DomainSpec::torus(7, 5),
            DomainSpec::square(1, 1),
            DomainSpec::square(5, 3),
            DomainSpec::square(8, 9),
        ] {
            let x: Vec<f64> = (0..d.node_count()).map(|i| ((i * 37 % 11) as f64).sin()).collect();
            let mut s = ShiftedStiffnessSolver::new(&d);
            for (a, b) in [(2.5, 0.0), (1.0, 0.3), (10.0, 4.0), (10.0, 4.0)] {
                let m = apply_mass(&d, &x);
                let k = apply_stiffness(&d, &x);
                let mut r: Vec<f64> = m.iter().zip(&k).map(|(m, k)| a * m + b * k).collect();
                s.solve_in_place(a, b, &mut r);
                for (got, want) in r.iter().zip(&x) {
                    assert!((got - want).abs() < 1e-10, "{d:?} a={a} b={b}: {got} vs {want}");
                }
            }
        }
    }
}
