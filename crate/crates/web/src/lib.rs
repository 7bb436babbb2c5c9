//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Images are handed to JavaScript as RGBA bytes ready for `ImageData`,
//! top row first, one pixel per mesh node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvdq::prox::{solver_tv, FlowParams, RofSolver};
use tvdq::studies::{l2_projection, TestShape};
use tvdq::{directional_variation, tv_iso, DenoiseParams, Direction, DomainKind, DomainSpec, GridFunction, Operator};
use wasm_bindgen::prelude::*;

fn js_err(e: tvdq::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn kind(periodic: bool) -> DomainKind {
    if periodic {
        DomainKind::PeriodicTorus
    } else {
        DomainKind::UnitSquare
    }
}

fn shape_by_name(name: &str, seed: u64, n: usize) -> Result<TestShape, JsValue> {
    tvdq::cli::parse_shape(name, seed, 8 * n).map_err(js_err)
}

/// A rendered grid function with a few scalar diagnostics.
#[wasm_bindgen]
pub struct Frame {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    tv: f64,
    v1: f64,
    v2: f64,
    info: String,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// Isotropic TV (q = 4 Gauss points per direction).
    #[wasm_bindgen(getter)]
    pub fn tv(&self) -> f64 {
        self.tv
    }

    #[wasm_bindgen(getter)]
    pub fn v1(&self) -> f64 {
        self.v1
    }

    #[wasm_bindgen(getter)]
    pub fn v2(&self) -> f64 {
        self.v2
    }

    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

impl Frame {
    fn render(u: &GridFunction, info: String) -> Result<Frame, JsValue> {
        let g = tvdq::pgm::Graymap::from_grid(u, 255).map_err(js_err)?;
        let mut rgba = Vec::with_capacity(4 * g.pixels.len());
        for p in &g.pixels {
            let v = *p as u8;
            rgba.extend_from_slice(&[v, v, v, 255]);
        }
        Ok(Frame {
            width: g.width,
            height: g.height,
            rgba,
            tv: tv_iso(u, 4).map_err(js_err)?,
            v1: directional_variation(u, Direction::X1),
            v2: directional_variation(u, Direction::X2),
            info,
        })
    }
}

/// Interpolates a test shape onto an `n x n` mesh with the named operator
/// (`pi`, `c`, `i` or `lagrange`; empty picks the domain default).
#[wasm_bindgen]
pub fn interpolate(shape: &str, n: usize, operator: &str, periodic: bool, seed: u64) -> Result<Frame, JsValue> {
    let k = kind(periodic);
    let d = DomainSpec::new(k, n, n).map_err(js_err)?;
    let op = if operator.is_empty() { Operator::default_for(k) } else { Operator::parse(operator).map_err(js_err)? };
    let s = shape_by_name(shape, seed, n)?;
    let w = s.input_field(k, tvdq::interp::DEFAULT_QUAD_RES).map_err(js_err)?;
    let u = op.apply(&w, &d).map_err(js_err)?;
    let tv_w = s.total_variation(k).map_err(js_err)?;
    Frame::render(&u, format!("{} on {} N={n}; TV of the input {tv_w:.5}", op.name(), k.name()))
}

fn noisy_data(shape: &str, n: usize, periodic: bool, noise: f64, seed: u64) -> Result<GridFunction, JsValue> {
    let k = kind(periodic);
    let d = DomainSpec::new(k, n, n).map_err(js_err)?;
    let s = shape_by_name(shape, seed, n)?;
    let clean = match s {
        TestShape::RandomFine { .. } => {
            Operator::default_for(k).apply(&s.input_field(k, 4).map_err(js_err)?, &d).map_err(js_err)?
        }
        _ => l2_projection(&s, &d).map_err(js_err)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = clean.values().iter().map(|v| v + noise * (rng.random::<f64>() - 0.5)).collect();
    GridFunction::new(d, vals).map_err(js_err)
}

/// The noisy input of [`denoise`], for display next to the result.
#[wasm_bindgen]
pub fn noisy(shape: &str, n: usize, periodic: bool, noise: f64, seed: u64) -> Result<Frame, JsValue> {
    let f = noisy_data(shape, n, periodic, noise, seed)?;
    Frame::render(&f, format!("data with uniform noise of width {noise}"))
}

/// ROF denoising of a shape plus uniform noise.
#[wasm_bindgen]
pub fn denoise(shape: &str, n: usize, periodic: bool, noise: f64, seed: u64, alpha: f64, tol: f64) -> Result<Frame, JsValue> {
    let f = noisy_data(shape, n, periodic, noise, seed)?;
    let p = DenoiseParams { alpha, tol, ..Default::default() };
    let (v, r) = tvdq::rof_minimize(&f, &p).map_err(js_err)?;
    Frame::render(
        &v,
        format!(
            "{} iterations, relative gap {:.2e}{}",
            r.iters,
            r.final_gap,
            if r.converged { "" } else { " (not converged)" }
        ),
    )
}

/// Implicit TV flow advanced one step per call.
#[wasm_bindgen]
pub struct FlowSession {
    solver: RofSolver,
    u: GridFunction,
    dt: f64,
    steps: usize,
}

#[wasm_bindgen]
impl FlowSession {
    #[wasm_bindgen(constructor)]
    pub fn new(shape: &str, n: usize, periodic: bool, dt: f64, seed: u64) -> Result<FlowSession, JsValue> {
        let k = kind(periodic);
        let d = DomainSpec::new(k, n, n).map_err(js_err)?;
        let s = shape_by_name(shape, seed, n)?;
        let u = Operator::default_for(k)
            .apply(&s.input_field(k, tvdq::interp::DEFAULT_QUAD_RES).map_err(js_err)?, &d)
            .map_err(js_err)?;
        let inner = DenoiseParams { alpha: 1.0 / dt, tol: 1e-6, ..Default::default() };
        FlowParams::new(dt, dt, inner).map_err(js_err)?;
        let solver = RofSolver::new(d, inner).map_err(js_err)?;
        Ok(FlowSession { solver, u, dt, steps: 0 })
    }

    pub fn frame(&self) -> Result<Frame, JsValue> {
        Frame::render(
            &self.u,
            format!(
                "t = {:.4} after {} steps; solver TV {:.5}; mean {:.6}",
                self.steps as f64 * self.dt,
                self.steps,
                solver_tv(&self.u, self.solver.params().quad),
                self.u.integral()
            ),
        )
    }

    pub fn step(&mut self) -> Result<Frame, JsValue> {
        let (next, r) = self.solver.solve(&self.u, Some(&self.u)).map_err(js_err)?;
        if !r.converged {
            return Err(JsValue::from_str(&format!("step did not converge: gap {:.2e}", r.final_gap)));
        }
        self.u = next;
        self.steps += 1;
        self.frame()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // only success paths: building a JsValue needs a wasm host

    #[test]
    fn frames_match_the_mesh() {
        let f = interpolate("disk", 16, "", true, 1).unwrap_or_else(|_| panic!("interpolate"));
        // the torus image repeats its seam
        assert_eq!((f.width(), f.height(), f.rgba().len()), (17, 17, 17 * 17 * 4));
        let g = interpolate("sine", 8, "c", false, 1).unwrap_or_else(|_| panic!("interpolate"));
        assert_eq!((g.width(), g.height()), (9, 9));
        assert!(g.tv() > 0.0 && g.v1() > 0.0 && g.v2() > 0.0);
    }

    #[test]
    fn denoising_lowers_tv() {
        let n = noisy("disk", 24, true, 0.5, 3).unwrap_or_else(|_| panic!("noisy"));
        let d = denoise("disk", 24, true, 0.5, 3, 20.0, 1e-5).unwrap_or_else(|_| panic!("denoise"));
        assert!(d.tv() < n.tv());
    }

    #[test]
    fn flow_steps_decrease_tv() {
        let mut s = FlowSession::new("disk", 16, true, 0.01, 1).unwrap_or_else(|_| panic!("session"));
        let a = s.frame().unwrap_or_else(|_| panic!("frame")).tv();
        let b = s.step().unwrap_or_else(|_| panic!("step")).tv();
        assert!(b < a);
    }
}
