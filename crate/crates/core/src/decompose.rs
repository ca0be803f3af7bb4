//! Factorisation of a positive definite metric `M = a^2 (grad Phi1 (x) grad Phi1 + grad Phi2 (x) grad Phi2)`.
//!
//! Writing `M = e^{2 phi} g` with `det g = 1`, the discrete Gauss curvature is
//! `K(M) = e^{-2 phi} (K(g) - L_g phi)`, with `K(g)` from the Brioschi formula
//! and `L_g` a compact divergence-form Laplace-Beltrami stencil. Conformal
//! flattening solves `L_g u = e^{2 phi} (-K(M))` by a fixed point on the flat
//! Poisson solver; the flat metric `e^{-2u} M` is then developed by rotating
//! its Cholesky coframe with the potential of the connection form.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::elliptic::{solve_poisson_with, PoissonProblem, SolveOptions};
use crate::error::{Error, Result};
use crate::field::calculus::{d11_raw, d12_raw, d1_raw, d22_raw, d2_raw, lap_raw};
use crate::field::{c_norm, grad, Grid, NormOptions, ScalarField, SymMatrixField, VectorField};

fn check_pd(m: &SymMatrixField, min: f64) -> Result<()> {
    let g = m.grid();
    for k in 0..g.len() {
        if !g.in_domain(k) {
            continue;
        }
        let e = crate::field::sym_min_eig(m.at(k));
        if !(e > min) {
            let (x, y) = g.point(k);
            return Err(Error::NotPositiveDefinite { x, y, min_eig: e });
        }
    }
    Ok(())
}

/// Conformal split `M = e^{2 phi} g`, `det g = 1`.
struct Split {
    phi: Vec<f64>,
    e: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

fn conformal_split(m: &SymMatrixField) -> Split {
    let n = m.grid().len();
    let (mut phi, mut e, mut f, mut g) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let [a, b, c] = m.at(k);
        let det = a * c - b * b;
        let s = det.sqrt();
        phi[k] = 0.25 * det.ln();
        e[k] = a / s;
        f[k] = b / s;
        g[k] = c / s;
    }
    Split { phi, e, f, g }
}

/// Brioschi curvature of the metric `E dx^2 + 2F dx dy + G dy^2`.
fn brioschi(grid: &Grid, e: &[f64], f: &[f64], g: &[f64]) -> Vec<f64> {
    let (eu, ev) = (d1_raw(grid, e), d2_raw(grid, e));
    let (fu, fv) = (d1_raw(grid, f), d2_raw(grid, f));
    let (gu, gv) = (d1_raw(grid, g), d2_raw(grid, g));
    let evv = d22_raw(grid, e);
    let guu = d11_raw(grid, g);
    let fuv = d12_raw(grid, f);
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    (0..e.len())
        .map(|k| {
            let (ee, ff, gg) = (e[k], f[k], g[k]);
            let m1 = [
                [-0.5 * evv[k] + fuv[k] - 0.5 * guu[k], 0.5 * eu[k], fu[k] - 0.5 * ev[k]],
                [fv[k] - 0.5 * gu[k], ee, ff],
                [0.5 * gv[k], ff, gg],
            ];
            let m2 = [[0.0, 0.5 * ev[k], 0.5 * gu[k]], [0.5 * ev[k], ee, ff], [0.5 * gu[k], ff, gg]];
            let w = ee * gg - ff * ff;
            (det3(m1) - det3(m2)) / (w * w)
        })
        .collect()
}

/// `div(c grad u)` for the unimodular metric `(E, F, G)`, where `c = [[G, -F], [-F, E]]`.
///
/// Interior nodes use midpoint-averaged coefficients for the diagonal terms and
/// central differences for the mixed terms; edge nodes fall back to one-sided
/// differences.
fn beltrami(grid: &Grid, e: &[f64], f: &[f64], g: &[f64], u: &[f64]) -> Vec<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (ux, uy) = (d1_raw(grid, u), d2_raw(grid, u));
    let n = u.len();
    let mixed_a: Vec<f64> = (0..n).map(|k| -f[k] * uy[k]).collect();
    let mixed_b: Vec<f64> = (0..n).map(|k| -f[k] * ux[k]).collect();
    let mut out = d1_raw(grid, &mixed_a);
    for (o, v) in out.iter_mut().zip(d2_raw(grid, &mixed_b)) {
        *o += v;
    }
    let (ax, ay) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let edge_a: Vec<f64> = (0..n).map(|k| g[k] * ux[k]).collect();
    let edge_b: Vec<f64> = (0..n).map(|k| e[k] * uy[k]).collect();
    let (ea, eb) = (d1_raw(grid, &edge_a), d2_raw(grid, &edge_b));
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                out[k] += ea[k] + eb[k];
                continue;
            }
            let ce = 0.5 * (g[k] + g[k + 1]);
            let cw = 0.5 * (g[k] + g[k - 1]);
            let cn = 0.5 * (e[k] + e[k + nx]);
            let cs = 0.5 * (e[k] + e[k - nx]);
            out[k] += ax * (ce * (u[k + 1] - u[k]) - cw * (u[k] - u[k - 1]))
                + ay * (cn * (u[k + nx] - u[k]) - cs * (u[k] - u[k - nx]));
        }
    }
    out
}

/// Discrete Gauss curvature of the metric `M`.
pub fn gauss_curvature(m: &SymMatrixField) -> Result<ScalarField> {
    check_pd(m, 0.0)?;
    let grid = m.grid();
    let s = conformal_split(m);
    let kg = brioschi(grid, &s.e, &s.f, &s.g);
    let lphi = beltrami(grid, &s.e, &s.f, &s.g, &s.phi);
    let k = (0..kg.len()).map(|i| (-2.0 * s.phi[i]).exp() * (kg[i] - lphi[i])).collect();
    ScalarField::new(grid.clone(), k)
}

#[derive(Clone, Copy, Debug)]
pub struct FlattenOptions {
    pub damping: f64,
    pub max_iter: usize,
    /// Tolerance on successive iterates in the sup norm.
    pub tol: f64,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        FlattenOptions { damping: 0.7, max_iter: 100, tol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct Flattening {
    pub u: ScalarField,
    pub iterations: usize,
    /// Interior sup of the curvature of `e^{-2u} M`.
    pub curvature: f64,
}

/// Conformal factor `u` with `u = 0` on the boundary making `e^{-2u} M` flat.
pub fn conformal_flatten(m: &SymMatrixField) -> Result<ScalarField> {
    Ok(conformal_flatten_with(m, &FlattenOptions::default())?.u)
}

pub fn conformal_flatten_with(m: &SymMatrixField, opts: &FlattenOptions) -> Result<Flattening> {
    check_pd(m, 0.0)?;
    let grid = m.grid().clone();
    let s = conformal_split(m);
    let kg = brioschi(&grid, &s.e, &s.f, &s.g);
    let lphi = beltrami(&grid, &s.e, &s.f, &s.g, &s.phi);
    // L_g u = L_g phi - K(g)
    let target: Vec<f64> = lphi.iter().zip(&kg).map(|(a, b)| a - b).collect();
    let n = grid.len();
    let mut u = vec![0.0; n];
    let mut history: Vec<f64> = Vec::new();
    let mut iterations = 0;
    loop {
        let lu = beltrami(&grid, &s.e, &s.f, &s.g, &u);
        let du = lap_raw(&grid, &u);
        let rhs: Vec<f64> = (0..n).map(|k| du[k] - lu[k] + target[k]).collect();
        let rhs = ScalarField::new(grid.clone(), rhs)?;
        let guess = ScalarField::new(grid.clone(), u.clone())?;
        let sol = solve_poisson_with(&PoissonProblem::new(&rhs), &SolveOptions { guess: Some(&guess), ..Default::default() })?;
        let mut change = 0.0f64;
        for (k, uk) in u.iter_mut().enumerate() {
            let step = opts.damping * (sol.u.values()[k] - *uk);
            *uk += step;
            change = change.max(step.abs());
        }
        iterations += 1;
        history.push(change);
        if change <= opts.tol {
            break;
        }
        let h = &history;
        let growing = h.len() >= 4 && h[h.len() - 1] > h[h.len() - 2] && h[h.len() - 2] > h[h.len() - 3] && h[h.len() - 1] > h[0];
        if growing || iterations >= opts.max_iter || !change.is_finite() {
            return Err(Error::FlattenDiverged { iterations, update: change });
        }
    }
    let u = ScalarField::new(grid.clone(), u)?;
    let flat = flat_metric(m, &u);
    let k = gauss_curvature(&flat)?;
    let curvature = interior_max(&k);
    Ok(Flattening { u, iterations, curvature })
}

fn interior_max(f: &ScalarField) -> f64 {
    let g = f.grid();
    (0..g.len()).filter(|&k| g.is_interior(k)).fold(0.0f64, |m, k| m.max(f.values()[k].abs()))
}

/// `e^{-2u} M`.
pub fn flat_metric(m: &SymMatrixField, u: &ScalarField) -> SymMatrixField {
    m.scale_by(&u.map(|x| (-2.0 * x).exp()))
}

#[derive(Clone, Debug)]
pub struct FlatCoordinates {
    pub phi: [ScalarField; 2],
    /// Rotation angle of the coframe.
    pub theta: ScalarField,
    /// Mismatch of the connection form integrated around the boundary.
    pub closure: f64,
}

/// Boundary nodes in counter-clockwise order.
fn boundary_loop(grid: &Grid) -> Vec<usize> {
    if grid.is_rectangle() {
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut out = Vec::with_capacity(2 * (nx + ny));
        out.extend((0..nx).map(|i| grid.idx(i, 0)));
        out.extend((1..ny).map(|j| grid.idx(nx - 1, j)));
        out.extend((0..nx - 1).rev().map(|i| grid.idx(i, ny - 1)));
        out.extend((1..ny - 1).rev().map(|j| grid.idx(0, j)));
        return out;
    }
    let (cx, cy) = grid.point(grid.center_index());
    let mut nodes: Vec<(f64, f64, usize)> = (0..grid.len())
        .filter(|&k| grid.is_boundary(k))
        .map(|k| {
            let (x, y) = grid.point(k);
            ((y - cy).atan2(x - cx), (x - cx).hypot(y - cy), k)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    nodes.into_iter().map(|t| t.2).collect()
}

/// Trapezoid line integral of the one-form `z` along the boundary loop, with
/// the closure mismatch spread linearly in arc length. Returns the values at
/// boundary nodes (zero elsewhere) and the mismatch.
fn boundary_potential(grid: &Grid, z: &VectorField) -> (Vec<f64>, f64) {
    let path = boundary_loop(grid);
    let mut vals = vec![0.0; path.len() + 1];
    let mut arc = vec![0.0; path.len() + 1];
    for s in 0..path.len() {
        let (p, q) = (path[s], path[(s + 1) % path.len()]);
        let (a, b) = (grid.point(p), grid.point(q));
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let zx = 0.5 * (z.x()[p] + z.x()[q]);
        let zy = 0.5 * (z.y()[p] + z.y()[q]);
        vals[s + 1] = vals[s] + zx * dx + zy * dy;
        arc[s + 1] = arc[s] + dx.hypot(dy);
    }
    let closure = vals[path.len()];
    let total = arc[path.len()];
    let mut out = vec![0.0; grid.len()];
    for (s, &k) in path.iter().enumerate() {
        out[k] = vals[s] - closure * arc[s] / total;
    }
    (out, closure)
}

/// Potential of the one-form `z`: boundary values by line integration,
/// interior by `lap p = div z`.
fn potential(grid: &Arc<Grid>, z: &VectorField) -> Result<(ScalarField, f64)> {
    let (b, closure) = boundary_potential(grid, z);
    let b = ScalarField::new(grid.clone(), b)?;
    let zero = ScalarField::zeros(grid);
    let p = crate::elliptic::solve_poisson(&PoissonProblem::new(&zero).with_div(z).with_boundary(&b), 1e-10)?;
    Ok((p, closure))
}

/// Developing map of a flat metric: `grad Phi_a` form an orthonormal coframe.
pub fn flat_coordinates(g: &SymMatrixField) -> Result<FlatCoordinates> {
    check_pd(g, 0.0)?;
    let grid = g.grid().clone();
    let n = grid.len();
    // Cholesky coframe rows e1 = (r11, r12), e2 = (0, r22)
    let (mut r11, mut r12, mut r22) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let [a, b, c] = g.at(k);
        r11[k] = a.sqrt();
        r12[k] = b / r11[k];
        r22[k] = (c - r12[k] * r12[k]).sqrt();
    }
    let zero = vec![0.0; n];
    let tau1: Vec<f64> = {
        let (a, b) = (d1_raw(&grid, &r12), d2_raw(&grid, &r11));
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    };
    let tau2: Vec<f64> = {
        let (a, b) = (d1_raw(&grid, &r22), d2_raw(&grid, &zero));
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    };
    let mut wx = vec![0.0; n];
    let mut wy = vec![0.0; n];
    for k in 0..n {
        let det = r11[k] * r22[k];
        let (c1, c2) = (tau1[k] / det, tau2[k] / det);
        wx[k] = c1 * r11[k];
        wy[k] = c1 * r12[k] + c2 * r22[k];
    }
    let omega = VectorField::new(grid.clone(), wx, wy)?;
    let (mut theta, closure) = potential(&grid, &omega)?;
    let t0 = theta.values()[grid.center_index()];
    theta = theta.map(|t| t - t0);

    let mut frames = Vec::with_capacity(2);
    for a in 0..2 {
        let (mut fx, mut fy) = (vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            let (s, c) = theta.values()[k].sin_cos();
            let (e1, e2) = ([r11[k], r12[k]], [0.0, r22[k]]);
            let (p, q) = if a == 0 { (c, -s) } else { (s, c) };
            fx[k] = p * e1[0] + q * e2[0];
            fy[k] = p * e1[1] + q * e2[1];
        }
        frames.push(VectorField::new(grid.clone(), fx, fy)?);
    }
    let centre = grid.point(grid.center_index());
    let mut phi = Vec::with_capacity(2);
    for (a, f) in frames.iter().enumerate() {
        let (p, _) = potential(&grid, f)?;
        let target = if a == 0 { centre.0 } else { centre.1 };
        let shift = target - p.values()[grid.center_index()];
        phi.push(p.map(|x| x + shift));
    }
    let phi2 = phi.pop().unwrap();
    let phi1 = phi.pop().unwrap();
    Ok(FlatCoordinates { phi: [phi1, phi2], theta, closure })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionNorms {
    /// `|a|_{C^j}` for `j = 0, 1, 2`.
    pub a: [f64; 3],
    /// `|grad Phi|_{C^j}` for `j = 0, 1, 2`.
    pub grad_phi: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub a: ScalarField,
    pub phi: [ScalarField; 2],
    pub grad_phi: [VectorField; 2],
    /// `M - a^2 (grad Phi1 (x) grad Phi1 + grad Phi2 (x) grad Phi2)`.
    pub residual: SymMatrixField,
    pub residual_norm: f64,
    pub min_a: f64,
    /// Minimum Jacobian determinant of `(Phi1, Phi2)` over interior nodes.
    pub min_det: f64,
    pub flatten_iterations: usize,
    pub curvature: f64,
    pub norms: DecompositionNorms,
}

/// Reconstruction `a^2 (grad Phi1 (x) grad Phi1 + grad Phi2 (x) grad Phi2)`.
pub fn reconstruct(a: &ScalarField, grad_phi: &[VectorField; 2]) -> SymMatrixField {
    let sum = crate::field::outer(&grad_phi[0], &grad_phi[0]).add(&crate::field::outer(&grad_phi[1], &grad_phi[1]));
    sum.scale_by(&a.mul(a))
}

/// Factorises `M >= Id / 2`.
pub fn decompose(m: &SymMatrixField) -> Result<Decomposition> {
    check_pd(m, 0.5 - 1e-12)?;
    let grid = m.grid().clone();
    let fl = conformal_flatten_with(m, &FlattenOptions::default())?;
    let a = fl.u.map(f64::exp);
    let flat = flat_metric(m, &fl.u);
    let fc = flat_coordinates(&flat)?;
    let [p1, p2] = fc.phi;
    let grad_phi = [grad(&p1), grad(&p2)];
    let residual = m.sub(&reconstruct(&a, &grad_phi));
    // on a disk the box stencils at boundary nodes reach exterior nodes
    let keep = |k: usize| if grid.is_rectangle() { true } else { grid.is_interior(k) };
    let residual_norm = (0..grid.len())
        .filter(|&k| keep(k))
        .fold(0.0f64, |acc, k| residual.at(k).iter().fold(acc, |b, v| b.max(v.abs())));
    let min_a = a.min();
    let mut min_det = f64::INFINITY;
    for k in 0..grid.len() {
        if grid.is_interior(k) {
            let (g1, g2) = (grad_phi[0].at(k), grad_phi[1].at(k));
            min_det = min_det.min(g1[0] * g2[1] - g1[1] * g2[0]);
        }
    }
    let o = NormOptions::default();
    let norms = DecompositionNorms {
        a: [c_norm(&a, 0, &o), c_norm(&a, 1, &o), c_norm(&a, 2, &o)],
        grad_phi: [0, 1, 2].map(|j| c_norm(&grad_phi[0], j, &o).max(c_norm(&grad_phi[1], j, &o))),
    };
    Ok(Decomposition {
        a,
        phi: [p1, p2],
        grad_phi,
        residual,
        residual_norm,
        min_a,
        min_det,
        flatten_iterations: fl.iterations,
        curvature: fl.curvature,
        norms,
    })
}

/// Seeded smooth symmetric field built from low sine modes, scaled so that
/// its largest eigenvalue magnitude over the domain equals `hmax`.
pub fn seeded_perturbation(grid: &Arc<Grid>, hmax: f64, seed: u64) -> Result<SymMatrixField> {
    if !(hmax >= 0.0 && hmax < 1.0) {
        return Err(Error::InvalidArgument(format!("perturbation size must lie in [0, 1), got {hmax}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut modes = Vec::new();
    for _ in 0..3 {
        let c: Vec<(f64, f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(1..=3) as f64,
                    rng.gen_range(1..=3) as f64,
                    rng.gen_range(0.0..2.0 * PI),
                    rng.gen_range(0.0..2.0 * PI),
                )
            })
            .collect();
        modes.push(c);
    }
    let eval = |c: &[(f64, f64, f64, f64, f64)], x: f64, y: f64| {
        c.iter().map(|&(a, m, n, p, q)| a * (PI * m * x + p).sin() * (PI * n * y + q).cos()).sum::<f64>()
    };
    let h = SymMatrixField::from_fn(grid, |x, y| [eval(&modes[0], x, y), eval(&modes[1], x, y), eval(&modes[2], x, y)]);
    let mut size = 0.0f64;
    for k in 0..grid.len() {
        if grid.in_domain(k) {
            let [a, b, c] = h.at(k);
            let mean = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            size = size.max(mean.abs() + rad);
        }
    }
    Ok(if size > 0.0 { h.scale(hmax / size) } else { h })
}
