//! Dirichlet problems for the five-point Laplacian.
//!
//! Rectangles whose node counts allow repeated halving use geometric multigrid
//! V-cycles with red-black Gauss-Seidel smoothing; other grids (including the
//! disk mask) use conjugate gradients on the interior unknowns.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::{div, same_grid, Grid, ScalarField, VectorField};

/// `lap u = div zeta + f` in the domain, `u = g` on boundary nodes.
#[derive(Clone, Copy, Debug)]
pub struct PoissonProblem<'a> {
    pub rhs: &'a ScalarField,
    pub div_rhs: Option<&'a VectorField>,
    /// Only the values at boundary nodes are used; `None` means zero data.
    pub boundary: Option<&'a ScalarField>,
}

impl<'a> PoissonProblem<'a> {
    pub fn new(rhs: &'a ScalarField) -> Self {
        PoissonProblem { rhs, div_rhs: None, boundary: None }
    }
    pub fn with_div(mut self, zeta: &'a VectorField) -> Self {
        self.div_rhs = Some(zeta);
        self
    }
    pub fn with_boundary(mut self, g: &'a ScalarField) -> Self {
        self.boundary = Some(g);
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions<'a> {
    /// Relative tolerance: `|lap_h u - f|_inf <= tol (1 + |f|_inf)`.
    pub tol: f64,
    pub max_cycles: usize,
    pub guess: Option<&'a ScalarField>,
}

impl Default for SolveOptions<'_> {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_cycles: 200, guess: None }
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub u: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// Residual bound that was accepted; exceeds the relative tolerance only
    /// when round-off in the residual evaluation dominates.
    pub target: f64,
}

pub fn solve_poisson(p: &PoissonProblem, tol: f64) -> Result<ScalarField> {
    Ok(solve_poisson_with(p, &SolveOptions { tol, ..Default::default() })?.u)
}

/// Solution of `lap u = 0` with boundary values taken from `g`.
pub fn harmonic_extension(g: &ScalarField) -> Result<ScalarField> {
    let zero = ScalarField::zeros(g.grid());
    solve_poisson(&PoissonProblem::new(&zero).with_boundary(g), 1e-10)
}

/// Solves `lap u = f` with zero boundary data.
pub fn solve_zero_dirichlet(f: &ScalarField) -> Result<ScalarField> {
    solve_poisson(&PoissonProblem::new(f), 1e-10)
}

pub fn solve_poisson_with(p: &PoissonProblem, opts: &SolveOptions) -> Result<Solution> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let grid = p.rhs.grid().clone();
    if let Some(z) = p.div_rhs {
        same_grid(&grid, z.grid())?;
    }
    if let Some(b) = p.boundary {
        same_grid(&grid, b.grid())?;
    }
    if let Some(u0) = opts.guess {
        same_grid(&grid, u0.grid())?;
    }

    let mut f = p.rhs.values().to_vec();
    if let Some(z) = p.div_rhs {
        for (a, b) in f.iter_mut().zip(div(z).values()) {
            *a += b;
        }
    }
    // only interior values of the right-hand side enter the problem
    for (k, v) in f.iter_mut().enumerate() {
        if !grid.is_interior(k) {
            *v = 0.0;
        }
    }
    let mut u = match opts.guess {
        Some(u0) => u0.values().to_vec(),
        None => vec![0.0; grid.len()],
    };
    for (k, v) in u.iter_mut().enumerate() {
        if !grid.is_interior(k) {
            *v = match (grid.in_domain(k), p.boundary) {
                (true, Some(b)) => b.values()[k],
                _ => 0.0,
            };
        }
    }
    let f_norm = crate::field::max_abs(&f);
    let target = opts.tol * (1.0 + f_norm);

    let levels = level_sizes(&grid);
    let (iterations, residual, accepted) = if grid.is_rectangle() && levels.len() >= 3 {
        multigrid(&grid, &levels, &mut u, &f, target, opts.max_cycles)?
    } else {
        conjugate_gradient(&grid, &mut u, &f, target, opts.max_cycles)?
    };
    let u = ScalarField::new(grid, u)?;
    Ok(Solution { u, iterations, residual, target: accepted })
}

/// Bound on the residual attainable in floating point for this iterate.
fn rounding_floor(hx: f64, hy: f64, u: &[f64], f_norm: f64) -> f64 {
    let stencil = 2.0 / (hx * hx) + 2.0 / (hy * hy);
    64.0 * f64::EPSILON * (crate::field::max_abs(u) * stencil + f_norm)
}

#[derive(Clone, Copy, Debug)]
struct Level {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

fn level_sizes(g: &Grid) -> Vec<Level> {
    let mut out = vec![Level { nx: g.nx(), ny: g.ny(), hx: g.hx(), hy: g.hy() }];
    loop {
        let l = *out.last().unwrap();
        if (l.nx - 1) % 2 != 0 || (l.ny - 1) % 2 != 0 || l.nx.min(l.ny) < 5 {
            break;
        }
        out.push(Level { nx: (l.nx - 1) / 2 + 1, ny: (l.ny - 1) / 2 + 1, hx: 2.0 * l.hx, hy: 2.0 * l.hy });
    }
    out
}

fn residual_into(l: &Level, u: &[f64], f: &[f64], r: &mut [f64]) -> f64 {
    let (ax, ay) = (1.0 / (l.hx * l.hx), 1.0 / (l.hy * l.hy));
    let nx = l.nx;
    let mut m = 0.0f64;
    for j in 1..l.ny - 1 {
        for i in 1..nx - 1 {
            let k = j * nx + i;
            let lap = ax * (u[k - 1] + u[k + 1]) + ay * (u[k - nx] + u[k + nx]) - 2.0 * (ax + ay) * u[k];
            let v = f[k] - lap;
            r[k] = v;
            m = m.max(v.abs());
        }
    }
    m
}

fn smooth(l: &Level, u: &mut [f64], f: &[f64], sweeps: usize) {
    let (ax, ay) = (1.0 / (l.hx * l.hx), 1.0 / (l.hy * l.hy));
    let inv = 1.0 / (2.0 * (ax + ay));
    let nx = l.nx;
    for _ in 0..sweeps {
        for color in 0..2 {
            for j in 1..l.ny - 1 {
                let start = 1 + (j + 1 + color) % 2;
                let mut i = start;
                while i < nx - 1 {
                    let k = j * nx + i;
                    u[k] = (ax * (u[k - 1] + u[k + 1]) + ay * (u[k - nx] + u[k + nx]) - f[k]) * inv;
                    i += 2;
                }
            }
        }
    }
}

fn restrict(fine: &Level, coarse: &Level, r: &[f64], out: &mut [f64]) {
    let (nf, nc) = (fine.nx, coarse.nx);
    out.iter_mut().for_each(|v| *v = 0.0);
    for jc in 1..coarse.ny - 1 {
        for ic in 1..nc - 1 {
            let k = 2 * jc * nf + 2 * ic;
            out[jc * nc + ic] = (4.0 * r[k]
                + 2.0 * (r[k - 1] + r[k + 1] + r[k - nf] + r[k + nf])
                + r[k - nf - 1]
                + r[k - nf + 1]
                + r[k + nf - 1]
                + r[k + nf + 1])
                / 16.0;
        }
    }
}

fn prolong_add(fine: &Level, coarse: &Level, e: &[f64], u: &mut [f64]) {
    let (nf, nc) = (fine.nx, coarse.nx);
    for j in 1..fine.ny - 1 {
        let (jc, ty) = (j / 2, j % 2);
        for i in 1..nf - 1 {
            let (ic, tx) = (i / 2, i % 2);
            let c = |a: usize, b: usize| e[(jc + b) * nc + ic + a];
            let v = match (tx, ty) {
                (0, 0) => c(0, 0),
                (1, 0) => 0.5 * (c(0, 0) + c(1, 0)),
                (0, 1) => 0.5 * (c(0, 0) + c(0, 1)),
                _ => 0.25 * (c(0, 0) + c(1, 0) + c(0, 1) + c(1, 1)),
            };
            u[j * nf + i] += v;
        }
    }
}

struct Workspace {
    u: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

fn vcycle(levels: &[Level], ws: &mut Workspace, depth: usize) {
    let l = levels[depth];
    if depth + 1 == levels.len() {
        // coarsest level: a few interior unknowns, iterate to convergence
        let (u, f) = (&mut ws.u[depth], &ws.f[depth]);
        smooth(&l, u, f, 50 * (l.nx + l.ny));
        return;
    }
    smooth(&l, &mut ws.u[depth], &ws.f[depth], 2);
    {
        let (u, f, r) = (&ws.u[depth], &ws.f[depth], &mut ws.r[depth]);
        residual_into(&l, u, f, r);
    }
    let c = levels[depth + 1];
    {
        let (r, f) = (&ws.r[depth], &mut ws.f[depth + 1]);
        restrict(&l, &c, r, f);
    }
    ws.u[depth + 1].iter_mut().for_each(|v| *v = 0.0);
    vcycle(levels, ws, depth + 1);
    {
        let (lo, hi) = ws.u.split_at_mut(depth + 1);
        prolong_add(&l, &c, &hi[0], &mut lo[depth]);
    }
    smooth(&l, &mut ws.u[depth], &ws.f[depth], 2);
}

fn multigrid(
    grid: &Grid,
    levels: &[Level],
    u: &mut Vec<f64>,
    f: &[f64],
    target: f64,
    max_cycles: usize,
) -> Result<(usize, f64, f64)> {
    let mut ws = Workspace {
        u: levels.iter().map(|l| vec![0.0; l.nx * l.ny]).collect(),
        f: levels.iter().map(|l| vec![0.0; l.nx * l.ny]).collect(),
        r: levels.iter().map(|l| vec![0.0; l.nx * l.ny]).collect(),
    };
    ws.u[0] = std::mem::take(u);
    ws.f[0] = f.to_vec();
    let f_norm = crate::field::max_abs(f);
    let top = levels[0];
    let mut scratch = vec![0.0; grid.len()];
    let mut res = residual_into(&top, &ws.u[0], f, &mut scratch);
    let mut history = vec![res];
    let mut cycles = 0;
    loop {
        let accepted = target.max(rounding_floor(top.hx, top.hy, &ws.u[0], f_norm));
        if res <= accepted || stagnated(&history, accepted) {
            *u = std::mem::take(&mut ws.u[0]);
            return Ok((cycles, res, accepted.max(res)));
        }
        if cycles == max_cycles {
            return Err(Error::NoConvergence { iterations: cycles, residual: res });
        }
        vcycle(levels, &mut ws, 0);
        cycles += 1;
        res = residual_into(&top, &ws.u[0], f, &mut scratch);
        history.push(res);
    }
}

/// Round-off limited: three cycles without halving the residual while within
/// a small multiple of the accepted bound.
fn stagnated(history: &[f64], accepted: f64) -> bool {
    let n = history.len();
    n >= 4 && history[n - 1] <= 100.0 * accepted && history[n - 1] > 0.5 * history[n - 4]
}

fn conjugate_gradient(
    grid: &Grid,
    u: &mut [f64],
    f: &[f64],
    target: f64,
    max_cycles: usize,
) -> Result<(usize, f64, f64)> {
    let (nx, n) = (grid.nx(), grid.len());
    let (ax, ay) = (1.0 / (grid.hx() * grid.hx()), 1.0 / (grid.hy() * grid.hy()));
    let interior: Vec<usize> = (0..n).filter(|&k| grid.is_interior(k)).collect();
    // A = -lap_h on interior unknowns; x holds interior values, other nodes fixed
    let apply = |x: &[f64], out: &mut [f64]| {
        for &k in &interior {
            out[k] = 2.0 * (ax + ay) * x[k] - ax * (x[k - 1] + x[k + 1]) - ay * (x[k - nx] + x[k + nx]);
        }
    };
    let f_norm = crate::field::max_abs(f);
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(u, &mut ap);
    for &k in &interior {
        r[k] = -f[k] - ap[k];
    }
    let mut p = vec![0.0; n];
    for &k in &interior {
        p[k] = r[k];
    }
    let dot = |a: &[f64], b: &[f64]| interior.iter().map(|&k| a[k] * b[k]).sum::<f64>();
    let max_res = |r: &[f64]| interior.iter().fold(0.0f64, |m, &k| m.max(r[k].abs()));
    let mut rr = dot(&r, &r);
    let cap = max_cycles.max(1) * 100 + 4 * (grid.nx() + grid.ny());
    let mut it = 0;
    let mut history = Vec::new();
    loop {
        let res = max_res(&r);
        history.push(res);
        let accepted = target.max(rounding_floor(grid.hx(), grid.hy(), u, f_norm));
        let stalled = it % 50 == 0 && {
            let every: Vec<f64> = history.iter().rev().step_by(50).take(4).rev().copied().collect();
            stagnated(&every, accepted)
        };
        if res <= accepted || stalled {
            // recompute the true residual to guard against drift
            apply(u, &mut ap);
            let true_res = interior.iter().fold(0.0f64, |m, &k| m.max((f[k] + ap[k]).abs()));
            if true_res <= accepted * 2.0 {
                return Ok((it, true_res, accepted.max(true_res)));
            }
            for &k in &interior {
                r[k] = -f[k] - ap[k];
                p[k] = r[k];
            }
            rr = dot(&r, &r);
        }
        if it >= cap {
            return Err(Error::NoConvergence { iterations: it, residual: res });
        }
        apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for &k in &interior {
            u[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for &k in &interior {
            p[k] = r[k] + beta * p[k];
        }
        it += 1;
    }
}

/// Ratio statistics from [`elliptic_bound_probe`].
#[derive(Clone, Debug, PartialEq)]
pub struct BoundProbe {
    pub n: usize,
    pub trials: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub ratios: Vec<f64>,
}

/// Random trigonometric field `sum a cos(2 pi k1 x + p1) cos(2 pi k2 y + p2)`
/// with wavenumbers at most 8.
struct FourierSum {
    terms: Vec<(f64, f64, f64, f64, f64)>,
}

impl FourierSum {
    fn random(rng: &mut ChaCha8Rng, modes: usize) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        let terms = (0..modes)
            .map(|_| {
                (
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0..=8) as f64 * two_pi,
                    rng.gen_range(0.0..two_pi),
                    rng.gen_range(0..=8) as f64 * two_pi,
                    rng.gen_range(0.0..two_pi),
                )
            })
            .collect();
        FourierSum { terms }
    }
    fn eval(&self, x: f64, y: f64) -> f64 {
        self.terms.iter().map(|&(a, k1, p1, k2, p2)| a * (k1 * x + p1).cos() * (k2 * y + p2).cos()).sum()
    }
}

/// Largest observed `|u|_0 / (|f|_0 + |zeta|_0)` for `lap u = div zeta + f`,
/// `u = 0` on the boundary of the unit square with `n` nodes per side.
pub fn elliptic_bound_probe(n: usize, trials: usize, seed: u64) -> Result<BoundProbe> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let grid = Arc::new(Grid::unit_square(n)?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(trials);
    for _ in 0..trials {
        let fs = FourierSum::random(&mut rng, 4);
        let z1 = FourierSum::random(&mut rng, 4);
        let z2 = FourierSum::random(&mut rng, 4);
        let f = ScalarField::from_fn(&grid, |x, y| fs.eval(x, y));
        let zeta = VectorField::from_fn(&grid, |x, y| [z1.eval(x, y), z2.eval(x, y)]);
        ratios.push(bound_ratio(&f, Some(&zeta))?);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let mean_ratio = ratios.iter().sum::<f64>() / trials as f64;
    Ok(BoundProbe { n, trials, max_ratio, mean_ratio, ratios })
}

/// `|u|_0 / (|f|_0 + |zeta|_0)` for a single right-hand side; zero data gives 0.
pub fn bound_ratio(f: &ScalarField, zeta: Option<&VectorField>) -> Result<f64> {
    let mut p = PoissonProblem::new(f);
    if let Some(z) = zeta {
        p = p.with_div(z);
    }
    let u = solve_poisson(&p, 1e-10)?;
    let zn = zeta.map(|z| crate::field::max_abs(z.x()).max(crate::field::max_abs(z.y()))).unwrap_or(0.0);
    let denom = f.max_abs() + zn;
    Ok(if denom == 0.0 { 0.0 } else { u.max_abs() / denom })
}
