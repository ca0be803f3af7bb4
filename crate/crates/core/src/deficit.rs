//! Phase data, the deficit `A - D(v, w)` and its factorisation `rho^2 (Id + H)`.
//!
//! `D(v, w) = sym grad w + 1/2 grad v (x) grad v - (v cot theta) Id + V Id`,
//! where `V` solves `lap V = F(v) = 2 grad v . grad cot theta + v lap cot theta`
//! with zero boundary data.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, RwLock};

use crate::elliptic::{harmonic_extension, solve_poisson_with, PoissonProblem, SolveOptions};
use crate::error::{Error, Result};
use crate::expr::{self, Expr, Func};
use crate::field::{
    curl_curl, grad, hessian, laplacian, outer, same_grid, sym_grad, Grid, ScalarField, SymMatrixField,
    VectorField,
};

#[derive(Clone, Debug, PartialEq)]
pub enum PhaseKind {
    Analytic(Expr),
    Gridded,
}

/// `cot theta` with its gradient and Laplacian.
#[derive(Clone, Debug)]
pub struct CotData {
    pub cot: ScalarField,
    pub grad: VectorField,
    pub lap: ScalarField,
}

/// The phase `theta` with the derived quantities the scheme needs.
///
/// For analytic phases every derivative comes from symbolic differentiation;
/// gridded phases use finite differences.
#[derive(Clone, Debug)]
pub struct PhaseSpec {
    pub theta: ScalarField,
    pub sin: ScalarField,
    pub cos: ScalarField,
    pub grad_sin: VectorField,
    pub grad_cos: VectorField,
    pub hess_sin: SymMatrixField,
    pub hess_cos: SymMatrixField,
    /// Present when `sin theta` has no zero on the grid.
    pub cot: Option<CotData>,
    /// Measured `min |sin theta|`.
    pub c2: f64,
    pub kind: PhaseKind,
    id: u64,
}

fn eval(grid: &Arc<Grid>, e: &Expr) -> Result<ScalarField> {
    ScalarField::new(grid.clone(), (0..grid.len()).map(|k| {
        let (x, y) = grid.point(k);
        e.eval(x, y)
    }).collect())
}

fn eval_grad(grid: &Arc<Grid>, e: &Expr) -> Result<VectorField> {
    VectorField::from_scalars(eval(grid, &e.diff(0))?, eval(grid, &e.diff(1))?)
}

fn eval_hess(grid: &Arc<Grid>, e: &Expr) -> Result<SymMatrixField> {
    let (e1, e2) = (e.diff(0), e.diff(1));
    let xx = eval(grid, &e1.diff(0))?.into_values();
    let xy = eval(grid, &e1.diff(1))?.into_values();
    let yy = eval(grid, &e2.diff(1))?.into_values();
    SymMatrixField::new(grid.clone(), xx, xy, yy)
}

fn content_hash(fields: &[&[f64]]) -> u64 {
    let mut h = DefaultHasher::new();
    for f in fields {
        f.len().hash(&mut h);
        for v in *f {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

impl PhaseSpec {
    pub fn from_expr(grid: &Arc<Grid>, theta: &Expr) -> Result<Self> {
        let th = eval(grid, theta)?;
        check_range(&th)?;
        let sin_e = expr::call(Func::Sin, theta.clone());
        let cos_e = expr::call(Func::Cos, theta.clone());
        let sin = eval(grid, &sin_e)?;
        let c2 = sin.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let cot = if c2 > 0.0 {
            let cot_e = expr::div(cos_e.clone(), sin_e.clone());
            let (d1, d2) = (cot_e.diff(0), cot_e.diff(1));
            let lap_e = expr::add(d1.diff(0), d2.diff(1));
            Some(CotData {
                cot: eval(grid, &cot_e)?,
                grad: VectorField::from_scalars(eval(grid, &d1)?, eval(grid, &d2)?)?,
                lap: eval(grid, &lap_e)?,
            })
        } else {
            None
        };
        let mut p = PhaseSpec {
            grad_sin: eval_grad(grid, &sin_e)?,
            grad_cos: eval_grad(grid, &cos_e)?,
            hess_sin: eval_hess(grid, &sin_e)?,
            hess_cos: eval_hess(grid, &cos_e)?,
            cos: eval(grid, &cos_e)?,
            sin,
            theta: th,
            cot,
            c2,
            kind: PhaseKind::Analytic(theta.clone()),
            id: 0,
        };
        p.id = p.compute_id();
        Ok(p)
    }

    pub fn constant(grid: &Arc<Grid>, theta: f64) -> Result<Self> {
        Self::from_expr(grid, &Expr::constant(theta))
    }

    /// Phase sampled on the grid; derivatives by finite differences.
    pub fn from_field(theta: ScalarField) -> Result<Self> {
        check_range(&theta)?;
        let sin = theta.map(f64::sin);
        let cos = theta.map(f64::cos);
        let c2 = sin.values().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let cot = if c2 > 0.0 {
            let c = cos.zip_map(&sin, |a, b| a / b);
            Some(CotData { grad: grad(&c), lap: laplacian(&c), cot: c })
        } else {
            None
        };
        let mut p = PhaseSpec {
            grad_sin: grad(&sin),
            grad_cos: grad(&cos),
            hess_sin: hessian(&sin),
            hess_cos: hessian(&cos),
            sin,
            cos,
            theta,
            cot,
            c2,
            kind: PhaseKind::Gridded,
            id: 0,
        };
        p.id = p.compute_id();
        Ok(p)
    }

    fn compute_id(&self) -> u64 {
        match &self.cot {
            Some(c) => content_hash(&[c.cot.values(), c.grad.x(), c.grad.y(), c.lap.values()]),
            None => content_hash(&[self.theta.values()]),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.theta.grid()
    }

    /// Requires `|sin theta| >= c2` at every node of the domain.
    pub fn require_weak(&self, c2: f64) -> Result<&CotData> {
        let g = self.grid();
        for k in 0..g.len() {
            let s = self.sin.values()[k].abs();
            if g.in_domain(k) && s < c2 {
                let (x, y) = g.point(k);
                return Err(Error::PhaseTooSmall { x, y, value: s, bound: c2 });
            }
        }
        self.cot_data()
    }

    pub fn cot_data(&self) -> Result<&CotData> {
        self.cot.as_ref().ok_or(Error::PhaseTooSmall {
            x: f64::NAN,
            y: f64::NAN,
            value: self.c2,
            bound: f64::MIN_POSITIVE,
        })
    }

    /// True when `cot theta` is constant, so that `F` vanishes identically.
    pub fn cot_is_constant(&self) -> bool {
        match (&self.cot, &self.kind) {
            (Some(_), PhaseKind::Analytic(e)) => e.is_constant(),
            (Some(c), PhaseKind::Gridded) => {
                let v = c.cot.values();
                v.iter().all(|&x| x == v[0])
            }
            _ => false,
        }
    }
}

fn check_range(theta: &ScalarField) -> Result<()> {
    let g = theta.grid();
    for (k, &t) in theta.values().iter().enumerate() {
        if !(t > -std::f64::consts::PI && t < std::f64::consts::PI) {
            let (x, y) = g.point(k);
            return Err(Error::PhaseOutOfRange { x, y });
        }
    }
    Ok(())
}

/// A scalar field with its gradient.
///
/// Corrugated fields oscillate faster than finite differences can follow, so
/// the gradient is carried along and updated by the chain rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarJet {
    pub value: ScalarField,
    pub grad: VectorField,
}

impl ScalarJet {
    pub fn from_field(value: ScalarField) -> Self {
        ScalarJet { grad: grad(&value), value }
    }
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        ScalarJet { value: ScalarField::zeros(grid), grad: VectorField::zeros(grid) }
    }
    pub fn grid(&self) -> &Arc<Grid> {
        self.value.grid()
    }
    pub fn sub(&self, o: &ScalarJet) -> ScalarJet {
        ScalarJet { value: self.value.sub(&o.value), grad: self.grad.sub(&o.grad) }
    }
    pub fn content_hash(&self) -> u64 {
        content_hash(&[self.value.values(), self.grad.x(), self.grad.y()])
    }
}

/// A vector field with its symmetrised gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorJet {
    pub value: VectorField,
    pub sym_grad: SymMatrixField,
}

impl VectorJet {
    pub fn from_field(value: VectorField) -> Self {
        VectorJet { sym_grad: sym_grad(&value), value }
    }
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorJet { value: VectorField::zeros(grid), sym_grad: SymMatrixField::zeros(grid) }
    }
    pub fn sub(&self, o: &VectorJet) -> VectorJet {
        VectorJet { value: self.value.sub(&o.value), sym_grad: self.sym_grad.sub(&o.sym_grad) }
    }
}

/// `F(v) = 2 grad v . grad cot theta + v lap cot theta`.
pub fn f_of_jet(v: &ScalarJet, phase: &PhaseSpec) -> Result<ScalarField> {
    same_grid(v.grid(), phase.grid())?;
    let c = phase.cot_data()?;
    let n = v.grid().len();
    let (gx, gy) = (v.grad.x(), v.grad.y());
    let out = (0..n)
        .map(|k| 2.0 * (gx[k] * c.grad.x()[k] + gy[k] * c.grad.y()[k]) + v.value.values()[k] * c.lap.values()[k])
        .collect();
    ScalarField::new(v.grid().clone(), out)
}

/// `F(v)` with the gradient of `v` taken by finite differences.
pub fn f_of_v(v: &ScalarField, phase: &PhaseSpec) -> Result<ScalarField> {
    f_of_jet(&ScalarJet::from_field(v.clone()), phase)
}

/// Solves `lap V = F` with `V = 0` on the boundary; `F = 0` gives `V = 0` without a solve.
pub fn solve_v_from(f: &ScalarField, guess: Option<&ScalarField>) -> Result<ScalarField> {
    if f.values().iter().all(|&x| x == 0.0) {
        return Ok(ScalarField::zeros(f.grid()));
    }
    Ok(solve_poisson_with(&PoissonProblem::new(f), &SolveOptions { guess, ..Default::default() })?.u)
}

pub fn solve_v(v: &ScalarJet, phase: &PhaseSpec) -> Result<ScalarField> {
    if phase.cot_is_constant() {
        phase.cot_data()?;
        return Ok(ScalarField::zeros(v.grid()));
    }
    solve_v_from(&f_of_jet(v, phase)?, None)
}

/// Memoised `V(v)` keyed by the content hash of `(v, grad v)` and the phase.
#[derive(Debug, Default)]
pub struct VCache {
    map: RwLock<HashMap<(u64, u64), ScalarField>>,
}

impl VCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_solve(&self, v: &ScalarJet, phase: &PhaseSpec) -> Result<ScalarField> {
        let key = (v.content_hash(), phase.id);
        if let Some(hit) = self.map.read().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let val = solve_v(v, phase)?;
        self.map.write().expect("cache lock").insert(key, val.clone());
        Ok(val)
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Assembles `D(v, w)` given the solved `V`.
pub fn d_assemble(v: &ScalarJet, w: &VectorJet, big_v: &ScalarField, phase: &PhaseSpec) -> Result<SymMatrixField> {
    let c = phase.cot_data()?;
    let half = outer(&v.grad, &v.grad).scale(0.5);
    let iso = big_v.zip_map(&v.value.mul(&c.cot), |a, b| a - b);
    Ok(w.sym_grad.add(&half).add_scalar(&iso))
}

/// `D(v, w)` for gridded fields, derivatives by finite differences.
pub fn d_of(v: &ScalarField, w: &VectorField, phase: &PhaseSpec) -> Result<SymMatrixField> {
    let vj = ScalarJet::from_field(v.clone());
    let wj = VectorJet::from_field(w.clone());
    let big_v = solve_v(&vj, phase)?;
    d_assemble(&vj, &wj, &big_v, phase)
}

/// Adapted subsolution: `A - D(v, w) = rho^2 (Id + H)`.
#[derive(Clone, Debug)]
pub struct SubsolutionState {
    pub v: ScalarJet,
    pub w: VectorJet,
    pub rho: ScalarField,
    pub h: SymMatrixField,
    pub a: SymMatrixField,
    pub q: usize,
    /// `V(v)`.
    pub big_v: ScalarField,
}

impl SubsolutionState {
    pub fn grid(&self) -> &Arc<Grid> {
        self.v.grid()
    }

    /// `rho^2 (Id + H)`.
    pub fn deficit(&self) -> SymMatrixField {
        let r2 = self.rho.mul(&self.rho);
        self.h.add(&SymMatrixField::identity(self.grid())).scale_by(&r2)
    }

    /// Sup norm of `A - D(v, w) - rho^2 (Id + H)`.
    pub fn bookkeeping_error(&self, phase: &PhaseSpec) -> Result<f64> {
        let d = d_assemble(&self.v, &self.w, &self.big_v, phase)?;
        let r = self.a.sub(&d).sub(&self.deficit());
        Ok(crate::field::c_norm(&r, 0, &Default::default()))
    }
}

#[derive(Clone, Debug)]
pub struct InitialOptions {
    /// Initial `w`; zero when absent.
    pub w0: Option<VectorJet>,
    /// Required lower bound for `|sin theta|`.
    pub c2: f64,
    /// Accepted `max |curl curl A + 1|` over interior nodes.
    pub curl_tol: f64,
}

impl Default for InitialOptions {
    fn default() -> Self {
        InitialOptions { w0: None, c2: 1e-3, curl_tol: 5e-2 }
    }
}

#[derive(Clone, Debug)]
pub struct InitialData {
    pub state: SubsolutionState,
    pub u: ScalarField,
    pub psi: ScalarField,
    pub big_u: ScalarField,
    /// `max |curl curl A + 1|` over interior nodes.
    pub curl_residual: f64,
}

/// Builds `A` and the initial adapted subsolution from boundary data `g`.
///
/// `u` is the harmonic extension of `g`, `-lap psi = 1 - det D^2 u` with zero
/// data, `U = V(u)`, and `A = psi Id + 1/2 grad u (x) grad u + (U - u cot) Id`.
pub fn initial_data(g: &ScalarField, phase: &PhaseSpec, opts: &InitialOptions) -> Result<InitialData> {
    same_grid(g.grid(), phase.grid())?;
    phase.require_weak(opts.c2)?;
    let grid = g.grid().clone();
    let u = harmonic_extension(g)?;
    let det = hessian(&u).det();
    let rhs = det.map(|d| d - 1.0);
    let psi = crate::elliptic::solve_zero_dirichlet(&rhs)?;
    for k in 0..grid.len() {
        if grid.is_interior(k) && psi.values()[k] <= -1e-12 {
            let (x, y) = grid.point(k);
            return Err(Error::InitialData(format!("psi = {:e} <= 0 at ({x:.4}, {y:.4})", psi.values()[k])));
        }
    }
    let uj = ScalarJet::from_field(u.clone());
    let big_u = solve_v(&uj, phase)?;
    let cot = &phase.cot_data()?.cot;
    let iso = psi.add(&big_u).sub(&u.mul(cot));
    let a = outer(&uj.grad, &uj.grad).scale(0.5).add_scalar(&iso);

    let cc = curl_curl(&a);
    let mut curl_residual = 0.0f64;
    for k in 0..grid.len() {
        if grid.is_interior(k) {
            curl_residual = curl_residual.max((cc.values()[k] + 1.0).abs());
        }
    }
    if curl_residual > opts.curl_tol {
        return Err(Error::InitialData(format!(
            "max |curl curl A + 1| = {curl_residual:e} exceeds {}",
            opts.curl_tol
        )));
    }

    let (w, rho, h) = match &opts.w0 {
        None => {
            let rho = psi.map(|p| p.max(0.0).sqrt());
            (VectorJet::zeros(&grid), rho, SymMatrixField::zeros(&grid))
        }
        Some(w0) => {
            let d = d_assemble(&uj, w0, &big_u, phase)?;
            let s = split_deficit(&a.sub(&d), &SplitOptions::default())?;
            if let Some((x, y)) = s.first_violation {
                return Err(Error::NotPositiveDefinite { x, y, min_eig: s.min_eig });
            }
            (w0.clone(), s.rho, s.h)
        }
    };
    let state = SubsolutionState { v: uj, w, rho, h, a, q: 0, big_v: big_u.clone() };
    Ok(InitialData { state, u, psi, big_u, curl_residual })
}

#[derive(Clone, Copy, Debug)]
pub struct SplitOptions {
    /// Below this value of `rho^2` the factor `H` is set to zero.
    pub guard: f64,
    /// Half-traces below `-negative_tol` are an error.
    pub negative_tol: f64,
}

impl Default for SplitOptions {
    fn default() -> Self {
        SplitOptions { guard: 1e-14, negative_tol: 1e-9 }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub rho: ScalarField,
    pub h: SymMatrixField,
    /// Smallest eigenvalue of `D` divided by `rho^2`, over nodes above the guard.
    pub min_eig: f64,
    /// First node where `Id + H` is not positive definite.
    pub first_violation: Option<(f64, f64)>,
}

/// Trace-normalised factorisation `D = rho^2 (Id + H)` with `tr H = 0`.
pub fn split_deficit(d: &SymMatrixField, opts: &SplitOptions) -> Result<Split> {
    let g = d.grid().clone();
    let n = g.len();
    let mut rho = vec![0.0; n];
    let (mut hxx, mut hxy, mut hyy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut min_eig = f64::INFINITY;
    let mut first_violation = None;
    for k in 0..n {
        let [a, b, c] = d.at(k);
        let r2 = 0.5 * (a + c);
        if r2 < -opts.negative_tol {
            let (x, y) = g.point(k);
            return Err(Error::NegativeTrace { x, y, trace: a + c });
        }
        let r2 = r2.max(0.0);
        rho[k] = r2.sqrt();
        if r2 > opts.guard {
            hxx[k] = a / r2 - 1.0;
            hxy[k] = b / r2;
            hyy[k] = c / r2 - 1.0;
            let e = crate::field::sym_min_eig([a, b, c]) / r2;
            min_eig = min_eig.min(e);
            if e <= 0.0 && first_violation.is_none() {
                first_violation = Some(g.point(k));
            }
        }
    }
    Ok(Split {
        rho: ScalarField::new(g.clone(), rho)?,
        h: SymMatrixField::new(g, hxx, hxy, hyy)?,
        min_eig,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_square(n).unwrap())
    }

    #[test]
    fn f_vanishes_for_constant_phase() {
        let g = grid(17);
        let v = ScalarField::from_fn(&g, |x, y| x * y + 1.0);
        for th in [FRAC_PI_2, FRAC_PI_4] {
            let p = PhaseSpec::constant(&g, th).unwrap();
            assert!(f_of_v(&v, &p).unwrap().max_abs() < 1e-15);
            assert_eq!(solve_v(&ScalarJet::from_field(v.clone()), &p).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn f_matches_symbolic_oracle() {
        let g = grid(33);
        let p = PhaseSpec::from_expr(&g, &Expr::parse("pi/2 + 0.2*x1").unwrap()).unwrap();
        let v = ScalarField::from_fn(&g, |x, _| x);
        let f = f_of_v(&v, &p).unwrap();
        for k in 0..g.len() {
            let x = g.point(k).0;
            let t = (0.2 * x).tan();
            let sec2 = 1.0 + t * t;
            let want = -0.4 * sec2 - 0.08 * x * sec2 * t;
            assert!((f.values()[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn v_equal_one_gives_lap_cot() {
        let g = grid(17);
        let p = PhaseSpec::from_expr(&g, &Expr::parse("1 + 0.3*sin(x1)*x2").unwrap()).unwrap();
        let f = f_of_v(&ScalarField::constant(&g, 1.0), &p).unwrap();
        assert_eq!(f.values(), p.cot.as_ref().unwrap().lap.values());
    }

    #[test]
    fn d_examples() {
        let g = grid(17);
        let p = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let zero_v = ScalarField::zeros(&g);
        let zero_w = VectorField::zeros(&g);
        assert_eq!(d_of(&zero_v, &zero_w, &p).unwrap().xx().iter().fold(0.0f64, |m, x| m.max(x.abs())), 0.0);

        let v = ScalarField::from_fn(&g, |x, y| 0.5 * (x * x + y * y));
        let d = d_of(&v, &zero_w, &p).unwrap();
        for k in 0..g.len() {
            let (x, y) = g.point(k);
            let want = [0.5 * x * x, 0.5 * x * y, 0.5 * y * y];
            for c in 0..3 {
                assert!((d.at(k)[c] - want[c]).abs() < 1e-12);
            }
        }
        let w = VectorField::from_fn(&g, |x, y| [y, x]);
        let d = d_of(&zero_v, &w, &p).unwrap();
        for k in 0..g.len() {
            let m = d.at(k);
            assert!(m[0].abs() < 1e-12 && (m[1] - 1.0).abs() < 1e-12 && m[2].abs() < 1e-12);
        }
    }

    #[test]
    fn initial_data_torsion() {
        let g = grid(129);
        let p = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let data = initial_data(&ScalarField::zeros(&g), &p, &InitialOptions::default()).unwrap();
        assert!(data.u.max_abs() == 0.0);
        let c = data.psi.values()[g.center_index()];
        assert!((c - 0.0737).abs() < 5e-4, "{c}");
        assert!(data.curl_residual < 1e-8);
        assert!(data.state.bookkeeping_error(&p).unwrap() < 1e-12);
    }

    #[test]
    fn initial_data_saddle_doubles_torsion() {
        let g = grid(65);
        let p = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let b = ScalarField::from_fn(&g, |x, y| x * y);
        let d = initial_data(&b, &p, &InitialOptions::default()).unwrap();
        let t = initial_data(&ScalarField::zeros(&g), &p, &InitialOptions::default()).unwrap();
        assert!(d.psi.sub(&t.psi.scale(2.0)).max_abs() < 1e-9);
    }

    #[test]
    fn initial_data_rejects_small_sine() {
        let g = grid(33);
        let p = PhaseSpec::from_expr(&g, &Expr::parse("0.5*(x1 - 0.5)").unwrap()).unwrap();
        match initial_data(&ScalarField::zeros(&g), &p, &InitialOptions { c2: 0.1, ..Default::default() }) {
            Err(Error::PhaseTooSmall { x, .. }) => assert!((x - 0.5).abs() < 0.25),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nonconstant_phase_bookkeeping() {
        let g = grid(65);
        let p = PhaseSpec::from_expr(&g, &Expr::parse("pi/2 + 0.2*sin(pi*x1)*sin(pi*x2)").unwrap()).unwrap();
        let b = ScalarField::from_fn(&g, |x, y| 0.3 * (x * x - y * y));
        let d = initial_data(&b, &p, &InitialOptions::default()).unwrap();
        assert!(d.big_u.max_abs() > 0.0);
        assert!(d.state.bookkeeping_error(&p).unwrap() < 1e-12);
        assert!(d.curl_residual < 5e-2);
    }

    #[test]
    fn split_examples() {
        let g = grid(9);
        let d = SymMatrixField::scalar_identity(&ScalarField::constant(&g, 0.04));
        let s = split_deficit(&d, &SplitOptions::default()).unwrap();
        assert!((s.rho.values()[0] - 0.2).abs() < 1e-15);
        assert_eq!(s.h.xx()[0], 0.0);
        let d = SymMatrixField::from_fn(&g, |_, _| [0.03, 0.0, 0.01]);
        let s = split_deficit(&d, &SplitOptions::default()).unwrap();
        assert!((s.h.xx()[3] - 0.5).abs() < 1e-14 && (s.h.yy()[3] + 0.5).abs() < 1e-14);
        assert!(s.first_violation.is_none());
        let d = SymMatrixField::from_fn(&g, |_, _| [-0.03, 0.0, 0.01]);
        assert!(matches!(split_deficit(&d, &SplitOptions::default()), Err(Error::NegativeTrace { .. })));
    }

    #[test]
    fn cache_hits() {
        let g = grid(33);
        let p = PhaseSpec::from_expr(&g, &Expr::parse("1.2 + 0.1*x1*x2").unwrap()).unwrap();
        let v = ScalarJet::from_field(ScalarField::from_fn(&g, |x, y| (PI * x).sin() * y));
        let cache = VCache::new();
        let a = cache.get_or_solve(&v, &p).unwrap();
        let b = cache.get_or_solve(&v, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.len(), 1);
    }
}
