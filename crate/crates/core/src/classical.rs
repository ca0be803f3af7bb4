//! Classical solutions for small `|tan theta|`.
//!
//! Picard iteration on `lap psi = -tan theta (det D^2 (psi + g~) - 1) - lap g~`
//! with zero boundary data, where `g~` is the harmonic extension of the
//! boundary values. The solution is `v = psi + g~`.

use crate::deficit::PhaseSpec;
use crate::elliptic::{harmonic_extension, solve_poisson_with, PoissonProblem, SolveOptions};
use crate::error::{Error, Result};
use crate::field::{hessian, holder_seminorm, laplacian, same_grid, Grid, NormOptions, ScalarField};
use crate::verify::strong_residual;

#[derive(Clone, Debug)]
pub struct ClassicalOptions {
    /// Largest admissible `|tan theta|_0`.
    pub mu: f64,
    /// Hölder exponent used by [`small_phase_check`].
    pub kappa: f64,
    /// Target for the strong residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Nodes within this many nodes of the boundary are left out of the residual.
    pub collar: usize,
    /// Starting iterate `psi_0`; zero when absent.
    pub guess: Option<ScalarField>,
}

impl Default for ClassicalOptions {
    fn default() -> Self {
        ClassicalOptions { mu: 0.2, kappa: 0.5, tol: 1e-8, max_iter: 100, collar: 2, guess: None }
    }
}

#[derive(Clone, Debug)]
pub struct ClassicalSolution {
    pub v: ScalarField,
    pub psi: ScalarField,
    pub iterations: usize,
    /// Strong residual after each iteration.
    pub residuals: Vec<f64>,
    /// `|psi_{k+1} - psi_k|_0` for each iteration.
    pub updates: Vec<f64>,
    /// Largest ratio of successive updates above round-off; `None` with fewer
    /// than two informative updates.
    pub contraction: Option<f64>,
    pub tan_c0: f64,
}

impl ClassicalSolution {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::NAN)
    }
}

/// `|tan theta|_0` over the domain, refusing when it exceeds `mu`.
pub fn require_small_phase(phase: &PhaseSpec, mu: f64) -> Result<ScalarField> {
    let g = phase.grid();
    let tan = phase.sin.zip_map(&phase.cos, |s, c| s / c);
    let mut worst = 0.0f64;
    for k in 0..g.len() {
        if g.in_domain(k) {
            let t = tan.values()[k].abs();
            worst = if t.is_finite() { worst.max(t) } else { f64::INFINITY };
        }
    }
    if !(worst <= mu) {
        return Err(Error::PhaseNotSmall { value: worst, mu });
    }
    Ok(tan)
}

/// Measured `|tan theta|_{C^kappa}`: sup norm plus Hölder seminorm.
pub fn small_phase_check(phase: &PhaseSpec, kappa: f64) -> Result<f64> {
    let tan = phase.sin.zip_map(&phase.cos, |s, c| s / c);
    let opts = NormOptions::default();
    let c0 = masked_sup(&tan, &phase.grid().collar_mask(0));
    Ok(c0 + holder_seminorm(&tan, 0, kappa, &opts)?)
}

fn masked_sup(f: &ScalarField, keep: &[bool]) -> f64 {
    f.values().iter().zip(keep).filter(|(_, &k)| k).fold(0.0f64, |m, (&x, _)| m.max(x.abs()))
}

/// Interior nodes at least `collar` nodes away from every boundary node.
pub fn residual_mask(grid: &Grid, collar: usize) -> Vec<bool> {
    let keep = grid.collar_mask(collar + 1);
    (0..grid.len()).map(|k| keep[k] && grid.is_interior(k)).collect()
}

pub fn solve_classical(g: &ScalarField, phase: &PhaseSpec, tol: f64, max_iter: usize) -> Result<ClassicalSolution> {
    solve_classical_with(g, phase, &ClassicalOptions { tol, max_iter, ..Default::default() })
}

pub fn solve_classical_with(g: &ScalarField, phase: &PhaseSpec, opts: &ClassicalOptions) -> Result<ClassicalSolution> {
    same_grid(g.grid(), phase.grid())?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let tan = require_small_phase(phase, opts.mu)?;
    let tan_c0 = masked_sup(&tan, &phase.grid().collar_mask(0));
    let grid = g.grid().clone();
    let keep = residual_mask(&grid, opts.collar);

    let gt = harmonic_extension(g)?;
    let lap_gt = laplacian(&gt);
    let mut psi = match &opts.guess {
        Some(p) => {
            same_grid(&grid, p.grid())?;
            let mut p = p.clone();
            for (k, x) in p.values_mut().iter_mut().enumerate() {
                if !grid.is_interior(k) {
                    *x = 0.0;
                }
            }
            p
        }
        None => ScalarField::zeros(&grid),
    };

    let mut residuals = Vec::new();
    let mut updates = Vec::new();
    let mut rises = 0;
    for it in 1..=opts.max_iter {
        let v = psi.add(&gt);
        let h = hessian(&v);
        let rhs: Vec<f64> = (0..grid.len())
            .map(|k| {
                let [a, b, c] = h.at(k);
                -tan.values()[k] * (a * c - b * b - 1.0) - lap_gt.values()[k]
            })
            .collect();
        let rhs = ScalarField::new(grid.clone(), rhs)?;
        let sol = solve_poisson_with(
            &PoissonProblem::new(&rhs),
            &SolveOptions { tol: 1e-13, max_cycles: 400, guess: Some(&psi) },
        )?;
        updates.push(sol.u.sub(&psi).max_abs());
        psi = sol.u;

        let v = psi.add(&gt);
        let r = masked_sup(&strong_residual(&v, phase)?, &keep);
        if !r.is_finite() {
            return Err(Error::NotContracting { residual: r });
        }
        if let Some(&prev) = residuals.last() {
            rises = if r > prev { rises + 1 } else { 0 };
            if rises >= 2 {
                return Err(Error::NotContracting { residual: r });
            }
        }
        residuals.push(r);
        if r <= opts.tol {
            return Ok(ClassicalSolution {
                v,
                psi,
                iterations: it,
                contraction: contraction(&updates),
                residuals,
                updates,
                tan_c0,
            });
        }
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, residual: residuals.last().copied().unwrap_or(f64::NAN) })
}

fn contraction(updates: &[f64]) -> Option<f64> {
    let scale = updates.first().copied().unwrap_or(0.0);
    let floor = 1e-11 * scale.max(f64::MIN_POSITIVE);
    updates
        .windows(2)
        .filter(|w| w[0] > floor && w[1] > floor)
        .map(|w| w[1] / w[0])
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
}
