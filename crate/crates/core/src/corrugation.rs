//! Corrugation profiles, the two rank-one sub-steps, one stage and the stage schedule.
//!
//! A sub-step at frequency `f` adds `a^2 grad Phi (x) grad Phi` to `D(v, w)`
//! up to an error:
//!
//! ```text
//! v' = v + Gamma1(a, f Phi) / f
//! w' = w - Gamma1(a, f Phi) / f grad v~ + Gamma2(a, f Phi) / f grad Phi
//! ```
//!
//! Gradients of `v'` and `w'` are carried as jets and updated by the chain rule,
//! so the deficit is assembled without differencing the oscillation.

use std::f64::consts::{FRAC_1_PI, PI};
use std::sync::Arc;

use serde::Serialize;

use crate::decompose::decompose;
use crate::deficit::{d_assemble, solve_v, split_deficit, PhaseSpec, ScalarJet, SplitOptions, SubsolutionState, VectorJet};
use crate::error::{Error, Result};
use crate::field::{c_norm, grad, hessian, outer, Grid, NormOptions, ScalarField, SymMatrixField, VectorField};
use crate::mollifier::mollify;

/// `Gamma1(s, t) = s / pi sin(2 pi t)`.
pub fn gamma1(s: f64, t: f64) -> f64 {
    gamma1_dt(s, t, 0)
}

/// `Gamma2(s, t) = -s^2 / (4 pi) sin(4 pi t)`.
pub fn gamma2(s: f64, t: f64) -> f64 {
    gamma2_dt(s, t, 0)
}

/// `k`-th derivative of `sin` at `x`.
fn sin_derivative(x: f64, k: u32) -> f64 {
    let (s, c) = x.sin_cos();
    match k % 4 {
        0 => s,
        1 => c,
        2 => -s,
        _ => -c,
    }
}

/// Constant `c_k` with `d_t^k Gamma1 = c_k s sin^(k)(2 pi t)`, equal to `2^k pi^(k-1)`.
pub fn gamma1_constant(k: u32) -> f64 {
    (2.0 * PI).powi(k as i32) * FRAC_1_PI
}

/// Constant with `d_s d_t^k Gamma2 = -c s sin^(k)(4 pi t)`, equal to `(4 pi)^k / (2 pi)`.
pub fn gamma2_s_constant(k: u32) -> f64 {
    (4.0 * PI).powi(k as i32) / (2.0 * PI)
}

/// Constant with `d_t^k Gamma2 = -c s^2 sin^(k)(4 pi t)`, equal to `(4 pi)^k / (4 pi)`.
pub fn gamma2_constant(k: u32) -> f64 {
    (4.0 * PI).powi(k as i32) / (4.0 * PI)
}

/// `d_t^k Gamma1`. The product is ordered so that `|d_t^k Gamma1| <= fl(c_k |s|)` exactly.
pub fn gamma1_dt(s: f64, t: f64, k: u32) -> f64 {
    (gamma1_constant(k) * s) * sin_derivative(2.0 * PI * t, k)
}

/// `d_s d_t^k Gamma1`.
pub fn gamma1_ds_dt(t: f64, k: u32) -> f64 {
    gamma1_constant(k) * sin_derivative(2.0 * PI * t, k)
}

/// `d_t^k Gamma2`.
pub fn gamma2_dt(s: f64, t: f64, k: u32) -> f64 {
    (-gamma2_constant(k) * (s * s)) * sin_derivative(4.0 * PI * t, k)
}

/// `d_s d_t^k Gamma2`.
pub fn gamma2_ds_dt(s: f64, t: f64, k: u32) -> f64 {
    (-gamma2_s_constant(k) * s) * sin_derivative(4.0 * PI * t, k)
}

/// Values and first partials of both profiles at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaValues {
    pub g1: f64,
    pub g1_s: f64,
    pub g1_t: f64,
    pub g2: f64,
    pub g2_s: f64,
    pub g2_t: f64,
}

pub fn gamma_values(s: f64, t: f64) -> GammaValues {
    let (s1, c1) = (2.0 * PI * t).sin_cos();
    let (s2, c2) = (4.0 * PI * t).sin_cos();
    GammaValues {
        g1: (FRAC_1_PI * s) * s1,
        g1_s: FRAC_1_PI * s1,
        g1_t: (2.0 * s) * c1,
        g2: (-s * s / (4.0 * PI)) * s2,
        g2_s: (-s / (2.0 * PI)) * s2,
        g2_t: -(s * s) * c2,
    }
}

/// Largest frequency a field of gradient size `grad_max` can carry with four nodes per wavelength.
pub fn resolvable_frequency(grid: &Grid, grad_max: f64) -> f64 {
    1.0 / (4.0 * grid.h_max() * grad_max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubstepInfo {
    pub frequency: f64,
    /// `max |grad Phi|`.
    pub grad_phi_max: f64,
    pub resolved: bool,
}

/// One rank-one sub-step at frequency `freq`.
///
/// Returns an error when the oscillation has fewer than four nodes per
/// wavelength; see [`substep_unchecked`] for the diagnostic variant.
pub fn substep(
    v: &ScalarJet,
    w: &VectorJet,
    v_tilde: &ScalarField,
    a: &ScalarField,
    phi: &ScalarField,
    freq: f64,
) -> Result<(ScalarJet, VectorJet, SubstepInfo)> {
    let out = substep_unchecked(v, w, v_tilde, a, phi, freq)?;
    if !out.2.resolved {
        let g = v.grid();
        return Err(Error::UnresolvedScale { l: 1.0 / (freq * out.2.grad_phi_max), min: 4.0 * g.h_max() });
    }
    Ok(out)
}

pub fn substep_unchecked(
    v: &ScalarJet,
    w: &VectorJet,
    v_tilde: &ScalarField,
    a: &ScalarField,
    phi: &ScalarField,
    freq: f64,
) -> Result<(ScalarJet, VectorJet, SubstepInfo)> {
    let grid = v.grid().clone();
    for f in [v_tilde.grid(), a.grid(), phi.grid(), w.value.grid()] {
        crate::field::same_grid(&grid, f)?;
    }
    if !(freq > 0.0) {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {freq}")));
    }
    if let Some(k) = (0..grid.len()).find(|&k| a.values()[k] < 0.0) {
        let (x, y) = grid.point(k);
        return Err(Error::InvalidArgument(format!("negative amplitude at ({x:.4}, {y:.4})")));
    }
    let da = grad(a);
    let dphi = grad(phi);
    let hphi = hessian(phi);
    let dvt = grad(v_tilde);
    let hvt = hessian(v_tilde);
    let n = grid.len();
    let inv = 1.0 / freq;

    let mut vv = v.value.values().to_vec();
    let (mut gx, mut gy) = (v.grad.x().to_vec(), v.grad.y().to_vec());
    let (mut wx, mut wy) = (w.value.x().to_vec(), w.value.y().to_vec());
    let (mut sxx, mut sxy, mut syy) = (w.sym_grad.xx().to_vec(), w.sym_grad.xy().to_vec(), w.sym_grad.yy().to_vec());
    let mut grad_phi_max = 0.0f64;
    for k in 0..n {
        let s = a.values()[k];
        let p = dphi.at(k);
        if s > 0.0 {
            grad_phi_max = grad_phi_max.max(p[0].hypot(p[1]));
        }
        let g = gamma_values(s, freq * phi.values()[k]);
        let (ax, ay) = (da.x()[k], da.y()[k]);
        let (tx, ty) = (dvt.x()[k], dvt.y()[k]);
        // gradients of Gamma_i / f
        let p1 = [g.g1_s * ax * inv + g.g1_t * p[0], g.g1_s * ay * inv + g.g1_t * p[1]];
        let p2 = [g.g2_s * ax * inv + g.g2_t * p[0], g.g2_s * ay * inv + g.g2_t * p[1]];
        let (c1, c2) = (g.g1 * inv, g.g2 * inv);
        vv[k] += c1;
        gx[k] += p1[0];
        gy[k] += p1[1];
        wx[k] += -c1 * tx + c2 * p[0];
        wy[k] += -c1 * ty + c2 * p[1];
        let [vxx, vxy, vyy] = hvt.at(k);
        let [fxx, fxy, fyy] = hphi.at(k);
        sxx[k] += -(p1[0] * tx) - c1 * vxx + p2[0] * p[0] + c2 * fxx;
        sxy[k] += -0.5 * (p1[0] * ty + p1[1] * tx) - c1 * vxy + 0.5 * (p2[0] * p[1] + p2[1] * p[0]) + c2 * fxy;
        syy[k] += -(p1[1] * ty) - c1 * vyy + p2[1] * p[1] + c2 * fyy;
    }
    let v2 = ScalarJet { value: ScalarField::new(grid.clone(), vv)?, grad: VectorField::new(grid.clone(), gx, gy)? };
    let w2 = VectorJet {
        value: VectorField::new(grid.clone(), wx, wy)?,
        sym_grad: SymMatrixField::new(grid.clone(), sxx, sxy, syy)?,
    };
    let resolved = grad_phi_max == 0.0 || freq <= resolvable_frequency(&grid, grad_phi_max) * (1.0 + 1e-9);
    Ok((v2, w2, SubstepInfo { frequency: freq, grad_phi_max, resolved }))
}

/// Parameters of one stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageParams {
    /// C1 bound, `gamma > 1`.
    pub gamma: f64,
    /// Amplitude, `0 < delta < 1`.
    pub delta: f64,
    /// Frequency, `lam > 1`.
    pub lam: f64,
    /// Frequency exponent, `tau > 1`.
    pub tau: f64,
    /// Hoelder exponent of the decomposition, `0 < alpha < 1`.
    pub alpha: f64,
}

impl StageParams {
    pub fn new(lam: f64, tau: f64, delta: f64) -> Self {
        StageParams { gamma: 2.0, delta, lam, tau, alpha: 0.5 }
    }

    pub fn frequencies(&self) -> [f64; 2] {
        [self.lam.powf(self.tau), self.lam.powf(2.0 * self.tau - 1.0)]
    }

    pub fn scales(&self) -> [f64; 2] {
        [self.lam.powf(-self.tau), self.lam.powf(1.0 - 2.0 * self.tau)]
    }

    /// Range errors for the parameters themselves.
    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma > 1.0
            && self.delta > 0.0
            && self.delta < 1.0
            && self.lam > 1.0
            && self.tau > 1.0
            && self.alpha > 0.0
            && self.alpha < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("stage parameters out of range: {self:?}")))
        }
    }

    /// Violated hypotheses, as labels.
    pub fn violations(&self, grid: &Grid) -> Vec<String> {
        let mut out = Vec::new();
        if self.lam.powf(self.alpha) < 2.0 {
            out.push(format!("lam^alpha = {:.3} < 2", self.lam.powf(self.alpha)));
        }
        if self.delta.sqrt() * self.lam <= 1.0 {
            out.push(format!("delta^(1/2) lam = {:.3} <= 1", self.delta.sqrt() * self.lam));
        }
        let f2 = self.frequencies()[1];
        let limit = resolvable_frequency(grid, 1.0);
        if f2 > limit * (1.0 + 1e-9) {
            out.push(format!("second frequency {f2:.1} exceeds grid limit {limit:.1}"));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StageOptions {
    /// Run sub-steps whose oscillation is under-resolved, flagging them.
    pub allow_unresolved: bool,
    /// Also assemble the first sub-step error (one extra solve).
    pub first_error: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageDiagnostics {
    pub params: StageParams,
    pub frequencies: [f64; 2],
    /// Mollification lengths actually used.
    pub scales: [f64; 2],
    pub flags: Vec<String>,
    pub decomposition_residual: f64,
    pub min_a: f64,
    pub min_det: f64,
    pub flatten_iterations: usize,
    pub amplitude_max: f64,
    /// `|v* - v|_0`, `|v* - v|_1`.
    pub v_change: [f64; 2],
    /// `|w* - w|_0`, `|w* - w|_1`.
    pub w_change: [f64; 2],
    /// `|v*|_2`, from differences of the gradient jet.
    pub v_c2: f64,
    /// `|E|_0`, `|E|_1`.
    pub e_norm: [f64; 2],
    /// `|E_1|_0` of the first sub-step, when requested.
    pub e1_norm: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct StageOutput {
    pub v: ScalarJet,
    pub w: VectorJet,
    /// `V(v*)`.
    pub big_v: ScalarField,
    /// `D(v*, w*) - D(v, w) - rho^2 (Id + H)`.
    pub e: SymMatrixField,
    /// `rho^2 (Id + H)`, the tensor the stage was asked to add.
    pub added: SymMatrixField,
    pub diagnostics: StageDiagnostics,
}

impl StageOutput {
    /// The next adapted state, with `(rho, H)` from the assembled deficit.
    pub fn into_state(self, prev: &SubsolutionState, phase: &PhaseSpec, split: &SplitOptions) -> Result<(SubsolutionState, crate::deficit::Split)> {
        let d = d_assemble(&self.v, &self.w, &self.big_v, phase)?;
        let s = split_deficit(&prev.a.sub(&d), split)?;
        let state = SubsolutionState {
            v: self.v,
            w: self.w,
            rho: s.rho.clone(),
            h: s.h.clone(),
            a: prev.a.clone(),
            q: prev.q + 1,
            big_v: self.big_v,
        };
        Ok((state, s))
    }
}

/// One stage adding `rho^2 (Id + H)` of the state's own factorisation.
pub fn stage(state: &SubsolutionState, params: &StageParams, phase: &PhaseSpec, opts: &StageOptions) -> Result<StageOutput> {
    stage_with(state, &state.rho, &state.h, params, phase, opts)
}

fn mollify_scale(grid: &Grid, l: f64, flags: &mut Vec<String>, label: &str) -> f64 {
    let min = 2.0 * grid.h_max();
    if l < min {
        flags.push(format!("{label} mollification length {l:.3e} raised to {min:.3e}"));
        min
    } else {
        l
    }
}

/// One stage adding `rho^2 (Id + H)` for the given amplitude and shape.
pub fn stage_with(
    state: &SubsolutionState,
    rho: &ScalarField,
    h: &SymMatrixField,
    params: &StageParams,
    phase: &PhaseSpec,
    opts: &StageOptions,
) -> Result<StageOutput> {
    params.validate()?;
    let grid = state.grid().clone();
    crate::field::same_grid(&grid, rho.grid())?;
    crate::field::same_grid(&grid, h.grid())?;
    let mut flags = params.violations(&grid);
    let freqs = params.frequencies();
    let [l1, l2] = params.scales();
    let l1 = mollify_scale(&grid, l1, &mut flags, "first");
    let l2 = mollify_scale(&grid, l2, &mut flags, "second");
    let added = h.add(&SymMatrixField::identity(&grid)).scale_by(&rho.mul(rho));

    if rho.values().iter().all(|&r| r == 0.0) {
        let diagnostics = StageDiagnostics {
            params: *params,
            frequencies: freqs,
            scales: [l1, l2],
            flags,
            decomposition_residual: 0.0,
            min_a: 0.0,
            min_det: 0.0,
            flatten_iterations: 0,
            amplitude_max: 0.0,
            v_change: [0.0; 2],
            w_change: [0.0; 2],
            v_c2: jet_c2(&state.v),
            e_norm: [0.0; 2],
            e1_norm: opts.first_error.then_some(0.0),
        };
        return Ok(StageOutput {
            v: state.v.clone(),
            w: state.w.clone(),
            big_v: state.big_v.clone(),
            e: SymMatrixField::zeros(&grid),
            added,
            diagnostics,
        });
    }

    let mut rho_t = mollify(rho, l1)?;
    // FFT rounding can leave tiny negatives
    for k in 0..grid.len() {
        let r = &mut rho_t.values_mut()[k];
        if !grid.is_interior(k) || *r < 0.0 {
            *r = 0.0;
        }
    }
    let h_t = mollify(h, l1)?;
    let v_t = mollify(&state.v.value, l1)?;
    let dec = decompose(&h_t.add(&SymMatrixField::identity(&grid)))?;
    let a = dec.a.mul(&rho_t);
    let [phi1, phi2] = &dec.phi;

    let run = |v: &ScalarJet, w: &VectorJet, vt: &ScalarField, phi: &ScalarField, f: f64| {
        if opts.allow_unresolved {
            substep_unchecked(v, w, vt, &a, phi, f)
        } else {
            substep(v, w, vt, &a, phi, f)
        }
    };
    let (v1, w1, i1) = run(&state.v, &state.w, &v_t, phi1, freqs[0])?;
    let v1_t = mollify(&v1.value, l2)?;
    let (v2, w2, i2) = run(&v1, &w1, &v1_t, phi2, freqs[1])?;
    for (label, info) in [("first", &i1), ("second", &i2)] {
        if !info.resolved {
            flags.push(format!("{label} sub-step frequency {:.1} is under-resolved", info.frequency));
        }
    }

    let d0 = d_assemble(&state.v, &state.w, &state.big_v, phase)?;
    let big_v = solve_v(&v2, phase)?;
    let d2 = d_assemble(&v2, &w2, &big_v, phase)?;
    let e = d2.sub(&d0).sub(&added);
    let e1_norm = if opts.first_error {
        let bv1 = solve_v(&v1, phase)?;
        let d1 = d_assemble(&v1, &w1, &bv1, phase)?;
        let g = &dec.grad_phi[0];
        let e1 = d1.sub(&d0).sub(&outer(g, g).scale_by(&a.mul(&a)));
        Some(c_norm(&e1, 0, &NormOptions::default()))
    } else {
        None
    };

    let o = NormOptions::default();
    let dv = v2.sub(&state.v);
    let dw = w2.sub(&state.w);
    let diagnostics = StageDiagnostics {
        params: *params,
        frequencies: freqs,
        scales: [l1, l2],
        flags,
        decomposition_residual: dec.residual_norm,
        min_a: dec.min_a,
        min_det: dec.min_det,
        flatten_iterations: dec.flatten_iterations,
        amplitude_max: a.max_abs(),
        v_change: [dv.value.max_abs(), dv.value.max_abs() + c_norm(&dv.grad, 0, &o)],
        w_change: [c_norm(&dw.value, 0, &o), c_norm(&dw.value, 0, &o) + c_norm(&dw.sym_grad, 0, &o)],
        v_c2: jet_c2(&v2),
        e_norm: [c_norm(&e, 0, &o), c_norm(&e, 1, &o)],
        e1_norm,
    };
    Ok(StageOutput { v: v2, w: w2, big_v, e, added, diagnostics })
}

/// `|v|_2` with second derivatives taken as differences of the gradient jet.
fn jet_c2(v: &ScalarJet) -> f64 {
    v.value.max_abs() + c_norm(&v.grad, 1, &NormOptions::default())
}

/// Per-stage wiring overriding the schedule, for desk-scale runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, serde::Deserialize)]
pub struct StageOverride {
    pub lam: Option<f64>,
    pub tau: Option<f64>,
    pub floor: Option<f64>,
}

/// Stage `q` takes state `q` to state `q + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StagePlan {
    pub q: usize,
    pub params: StageParams,
    /// Deficit left in place, `delta_{q+2}`.
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub beta: f64,
    pub sigma: f64,
    pub b: f64,
    pub m: f64,
    /// Collar base: stage `q` acts where the distance to the boundary exceeds `r0 2^-(q+1)`.
    pub r0: f64,
    pub q_max: usize,
    /// `delta_q` for `q = 0..=q_max + 2`.
    pub delta: Vec<f64>,
    /// `lam_q` for `q = 0..=q_max + 2`.
    pub lam: Vec<f64>,
    pub stages: Vec<StagePlan>,
}

#[derive(Clone, Debug)]
pub struct ScheduleOptions {
    pub r0: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub overrides: Vec<StageOverride>,
}

impl Default for ScheduleOptions {
    fn default() -> Self {
        ScheduleOptions { r0: 0.1, alpha: 0.5, gamma: 2.0, overrides: Vec::new() }
    }
}

/// `b = 1 + 9 sigma / (1 - 5 beta)`.
pub fn exponent_b(beta: f64, sigma: f64) -> f64 {
    1.0 + 9.0 * sigma / (1.0 - 5.0 * beta)
}

/// Sequences `lam_q = M delta_q^(-1/(2 beta))`, `lam_{q+1} = lam_q^b`, with
/// stage `q` run at `lam_q` and `tau = b`, so its first frequency is `lam_{q+1}`.
pub fn make_schedule(beta: f64, sigma: f64, m: f64, delta1: f64, q_max: usize, opts: &ScheduleOptions) -> Result<Schedule> {
    if !(beta > 0.0 && beta < 0.2) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1/5), got {beta}")));
    }
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::InvalidArgument(format!("sigma must lie in (0, 1), got {sigma}")));
    }
    if !(m > 0.0) || !(delta1 > 0.0 && delta1 < 1.0) || !(opts.r0 > 0.0) {
        return Err(Error::InvalidArgument(format!("need M > 0, delta1 in (0, 1), r0 > 0; got M = {m}, delta1 = {delta1}")));
    }
    let b = exponent_b(beta, sigma);
    let lam1 = m * delta1.powf(-1.0 / (2.0 * beta));
    let mut lam = vec![lam1.powf(1.0 / b), lam1];
    while lam.len() < q_max + 3 {
        let last = *lam.last().unwrap();
        lam.push(last.powf(b));
    }
    let delta: Vec<f64> = lam.iter().map(|l| (m / l).powf(2.0 * beta)).collect();
    let stages = (0..q_max)
        .map(|q| {
            let o = opts.overrides.get(q).copied().unwrap_or_default();
            let params = StageParams {
                gamma: opts.gamma,
                delta: delta[q + 1],
                lam: o.lam.unwrap_or(lam[q]),
                tau: o.tau.unwrap_or(b),
                alpha: opts.alpha,
            };
            StagePlan { q, params, floor: o.floor.unwrap_or(delta[q + 2]) }
        })
        .collect();
    Ok(Schedule { beta, sigma, b, m, r0: opts.r0, q_max, delta, lam, stages })
}

impl Schedule {
    /// Fails when a stage frequency exceeds what the grid resolves.
    pub fn check_feasible(&self, grid: &Grid) -> Result<()> {
        let limit = resolvable_frequency(grid, 1.0);
        for s in &self.stages {
            let f = s.params.frequencies()[1].max(s.params.frequencies()[0]);
            if f > limit * (1.0 + 1e-9) {
                return Err(Error::Unresolvable { stage: s.q, frequency: f, limit, feasible: s.q });
            }
        }
        Ok(())
    }
}

/// Smooth positive part: `0` below `0`, `s` above `width`, `C^2` in between.
pub fn smooth_clamp(s: f64, width: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= width {
        s
    } else {
        let t = s / width;
        width * t * t * t * (6.0 - 8.0 * t + 3.0 * t * t)
    }
}

/// `C^2` step from `0` at `lo` to `1` at `hi`.
pub fn smooth_step(x: f64, lo: f64, hi: f64) -> f64 {
    if x <= lo {
        0.0
    } else if x >= hi {
        1.0
    } else {
        let t = (x - lo) / (hi - lo);
        t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
    }
}

/// Collar cutoff of stage `q`.
pub fn collar_cutoff(grid: &Arc<Grid>, r0: f64, q: usize) -> ScalarField {
    let hi = r0 * 0.5f64.powi(q as i32);
    let d = grid.boundary_distance();
    ScalarField::new(grid.clone(), d.iter().map(|&x| smooth_step(x, 0.5 * hi, hi)).collect())
        .expect("finite cutoff")
}

/// Amplitude `sqrt(chi_q clamp(rho_q^2 - floor))` of the tensor added at stage `q`.
pub fn stage_amplitude(state: &SubsolutionState, chi: &ScalarField, floor: f64) -> ScalarField {
    state.rho.zip_map(chi, |r, c| (c * smooth_clamp(r * r - floor, 0.5 * floor)).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StopReason {
    /// `Id + H` lost positive definiteness after stage `q`.
    PositivityLost { q: usize, x: f64, y: f64, min_eig: f64 },
    /// A stage or the split failed.
    StageFailed { q: usize, code: String, message: String },
}

impl StopReason {
    pub fn code(&self) -> &str {
        match self {
            StopReason::PositivityLost { .. } => "positivity_lost",
            StopReason::StageFailed { code, .. } => code,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StageRecord {
    pub q: usize,
    pub floor: f64,
    pub diagnostics: StageDiagnostics,
    /// `|H_q|_0` of the state entering the stage.
    pub h_norm: f64,
    /// Whether `|H_q|_0 <= 4 lam_{q+1}^(-alpha/b)` failed.
    pub h_bound_violated: bool,
    /// Smallest eigenvalue of `Id + H_{q+1}`.
    pub min_eig_after: f64,
    /// `|A - D(v, w) - rho^2 (Id + H)|_0` after the stage.
    pub bookkeeping: f64,
}

#[derive(Clone, Debug)]
pub struct Run {
    pub states: Vec<SubsolutionState>,
    pub records: Vec<StageRecord>,
    pub stop: Option<StopReason>,
}

#[derive(Clone, Debug, Default)]
pub struct IterateOptions {
    pub stage: StageOptions,
    pub split: SplitOptions,
}

/// Runs the scheduled stages, stopping with a label when a stage fails or
/// `Id + H` loses positive definiteness.
pub fn iterate(initial: &SubsolutionState, schedule: &Schedule, phase: &PhaseSpec, opts: &IterateOptions) -> Result<Run> {
    iterate_with(initial, schedule, phase, opts, |_, _| Ok(()))
}

/// As [`iterate`], calling `on_stage` with each new state and its record.
pub fn iterate_with(
    initial: &SubsolutionState,
    schedule: &Schedule,
    phase: &PhaseSpec,
    opts: &IterateOptions,
    mut on_stage: impl FnMut(&SubsolutionState, &StageRecord) -> Result<()>,
) -> Result<Run> {
    let grid = initial.grid().clone();
    schedule.check_feasible(&grid)?;
    let mut states = vec![initial.clone()];
    let mut records = Vec::new();
    let o = NormOptions::default();
    for plan in &schedule.stages {
        let cur = states.last().unwrap();
        let chi = collar_cutoff(&grid, schedule.r0, plan.q);
        let rho = stage_amplitude(cur, &chi, plan.floor);
        let fail = |e: Error| StopReason::StageFailed { q: plan.q, code: e.code().to_string(), message: e.to_string() };
        let out = match stage_with(cur, &rho, &cur.h, &plan.params, phase, &opts.stage) {
            Ok(o) => o,
            Err(e) => return Ok(Run { states, records, stop: Some(fail(e)) }),
        };
        let diagnostics = out.diagnostics.clone();
        let (next, split) = match out.into_state(cur, phase, &opts.split) {
            Ok(s) => s,
            Err(e) => return Ok(Run { states, records, stop: Some(fail(e)) }),
        };
        let h_norm = c_norm(&cur.h, 0, &o);
        let lam_next = schedule.lam.get(plan.q + 1).copied().unwrap_or(f64::INFINITY);
        let record = StageRecord {
            q: plan.q,
            floor: plan.floor,
            diagnostics,
            h_norm,
            h_bound_violated: h_norm > 4.0 * lam_next.powf(-plan.params.alpha / schedule.b),
            min_eig_after: split.min_eig,
            bookkeeping: next.bookkeeping_error(phase)?,
        };
        on_stage(&next, &record)?;
        states.push(next);
        records.push(record);
        if let Some((x, y)) = split.first_violation {
            let stop = StopReason::PositivityLost { q: plan.q, x, y, min_eig: split.min_eig };
            return Ok(Run { states, records, stop: Some(stop) });
        }
    }
    Ok(Run { states, records, stop: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deficit::{initial_data, InitialOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn closed_form_values() {
        assert!((gamma1(1.0, 0.25) - 1.0 / PI).abs() < 1e-15);
        assert!((gamma2(1.0, 0.125) + 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((gamma1(1.0, 0.25) - 0.31831).abs() < 1e-5);
    }

    #[test]
    fn periodic_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let s: f64 = rng.gen_range(-2.0..2.0);
            let t: f64 = rng.gen_range(-5.0..5.0);
            assert!((gamma1(s, t + 1.0) - gamma1(s, t)).abs() < 1e-12);
            assert!((gamma2(s, t + 1.0) - gamma2(s, t)).abs() < 1e-12);
            let g = gamma_values(s, t);
            assert!((0.5 * g.g1_t * g.g1_t + g.g2_t - s * s).abs() < 1e-12);
            assert_eq!(g.g1_t, gamma1_dt(s, t, 1));
        }
    }

    #[test]
    fn partials_match_differences() {
        let (s, t, e) = (0.7, 0.31, 1e-6);
        let g = gamma_values(s, t);
        assert!(((gamma1(s + e, t) - gamma1(s - e, t)) / (2.0 * e) - g.g1_s).abs() < 1e-8);
        assert!(((gamma2(s, t + e) - gamma2(s, t - e)) / (2.0 * e) - g.g2_t).abs() < 1e-7);
        assert!(((gamma2(s + e, t) - gamma2(s - e, t)) / (2.0 * e) - g.g2_s).abs() < 1e-8);
        assert!(((gamma1_dt(s, t + e, 1) - gamma1_dt(s, t - e, 1)) / (2.0 * e) - gamma1_dt(s, t, 2)).abs() < 1e-6);
    }

    #[test]
    fn schedule_values() {
        assert!((exponent_b(0.1, 1.0 / 90.0) - 1.2).abs() < 1e-15);
        let s = make_schedule(0.1, 1.0 / 90.0, 2.0, 0.25, 2, &ScheduleOptions::default()).unwrap();
        assert!((s.lam[1] - 2048.0).abs() < 1e-9);
        assert!((s.lam[2] - 2048f64.powf(1.2)).abs() < 1e-6);
        assert!((s.delta[1] - 0.25).abs() < 1e-14);
        let grid = Grid::unit_square(65).unwrap();
        match s.check_feasible(&grid) {
            Err(Error::Unresolvable { stage: 0, feasible: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
        let s0 = make_schedule(0.1, 1.0 / 90.0, 2.0, 0.25, 0, &ScheduleOptions::default()).unwrap();
        assert!(s0.stages.is_empty() && s0.check_feasible(&grid).is_ok());
    }

    #[test]
    fn clamp_and_step() {
        assert_eq!(smooth_clamp(-1.0, 0.1), 0.0);
        assert_eq!(smooth_clamp(0.3, 0.1), 0.3);
        for i in 0..100 {
            let s = i as f64 * 0.001;
            let c = smooth_clamp(s, 0.1);
            assert!(c >= 0.0 && c <= s + 1e-17);
        }
        assert_eq!(smooth_step(0.0, 0.1, 0.2), 0.0);
        assert_eq!(smooth_step(0.3, 0.1, 0.2), 1.0);
        assert!((smooth_step(0.15, 0.1, 0.2) - 0.5).abs() < 1e-15);
    }

    fn square(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_square(n).unwrap())
    }

    #[test]
    fn zero_amplitude_substep_is_identity() {
        let g = square(33);
        let v = ScalarJet::from_field(ScalarField::from_fn(&g, |x, y| x * y + x));
        let w = VectorJet::from_field(VectorField::from_fn(&g, |x, y| [y, x * x]));
        let phi = ScalarField::from_fn(&g, |x, _| x);
        let (v2, w2, _) = substep(&v, &w, &v.value, &ScalarField::zeros(&g), &phi, 5.0).unwrap();
        assert_eq!(v2, v);
        assert_eq!(w2, w);
    }

    #[test]
    fn amplitude_bound() {
        let g = square(129);
        let v = ScalarJet::zeros(&g);
        let w = VectorJet::zeros(&g);
        let a = ScalarField::from_fn(&g, |x, y| 0.3 * (PI * x).sin() * (PI * y).sin());
        let phi = ScalarField::from_fn(&g, |x, y| x + 0.1 * y);
        let f = 10.0;
        let (v2, _, info) = substep(&v, &w, &v.value, &a, &phi, f).unwrap();
        assert!(info.resolved);
        assert!(v2.value.max_abs() <= a.max_abs() / PI / f * (1.0 + 1e-12));
    }

    #[test]
    fn rank_one_increment_for_constant_data() {
        // constant a and grad Phi: D(v', w') - D(v, w) = a^2 grad Phi (x) grad Phi exactly
        let g = square(65);
        let phase = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let v = ScalarJet::zeros(&g);
        let w = VectorJet::zeros(&g);
        let a = ScalarField::constant(&g, 0.2);
        let phi = ScalarField::from_fn(&g, |x, y| 0.8 * x + 0.6 * y);
        let (v2, w2, _) = substep(&v, &w, &v.value, &a, &phi, 8.0).unwrap();
        let d = d_assemble(&v2, &w2, &ScalarField::zeros(&g), &phase).unwrap();
        let gp = grad(&phi);
        let want = outer(&gp, &gp).scale(0.04);
        assert!(c_norm(&d.sub(&want), 0, &NormOptions::default()) < 1e-13);
    }

    #[test]
    fn unresolved_substep_is_rejected() {
        let g = square(33);
        let v = ScalarJet::zeros(&g);
        let a = ScalarField::constant(&g, 0.1);
        let phi = ScalarField::from_fn(&g, |x, _| x);
        let r = substep(&v, &VectorJet::zeros(&g), &v.value, &a, &phi, 20.0);
        assert!(matches!(r, Err(Error::UnresolvedScale { .. })));
    }

    #[test]
    fn zero_rho_stage_is_identity() {
        let g = square(65);
        let phase = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let init = initial_data(&ScalarField::zeros(&g), &phase, &InitialOptions::default()).unwrap();
        let mut st = init.state;
        st.rho = ScalarField::zeros(&g);
        let out = stage(&st, &StageParams::new(4.0, 1.2, 0.05), &phase, &StageOptions::default()).unwrap();
        assert_eq!(out.v, st.v);
        assert_eq!(out.w, st.w);
        assert_eq!(c_norm(&out.e, 0, &NormOptions::default()), 0.0);
    }

    #[test]
    fn stage_bookkeeping_and_support() {
        let g = square(257);
        let phase = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let init = initial_data(&ScalarField::zeros(&g), &phase, &InitialOptions::default()).unwrap();
        let mut st = init.state;
        let bump = |x: f64, y: f64| {
            let r2 = ((x - 0.5).powi(2) + (y - 0.5).powi(2)) / 0.09;
            if r2 < 1.0 { 0.2 * (-1.0 / (1.0 - r2)).exp() } else { 0.0 }
        };
        st.rho = ScalarField::from_fn(&g, bump);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c: f64 = rng.gen_range(0.05..0.1);
        st.h = SymMatrixField::from_fn(&g, |x, y| [c * (PI * x).sin(), 0.05 * (PI * y).cos(), -c * (PI * x).sin()]);
        let p = StageParams::new(4.0, 1.5, 0.01);
        let out = stage(&st, &p, &phase, &StageOptions::default()).unwrap();
        let d0 = d_assemble(&st.v, &st.w, &st.big_v, &phase).unwrap();
        let d1 = d_assemble(&out.v, &out.w, &out.big_v, &phase).unwrap();
        let r = d1.sub(&d0).sub(&out.added).sub(&out.e);
        assert!(c_norm(&r, 0, &NormOptions::default()) < 1e-12);
        let l = p.scales()[0];
        for k in 0..g.len() {
            let (x, y) = g.point(k);
            let dist = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt() - 0.3;
            if dist > l + 2.0 * g.h_max() {
                assert_eq!(out.v.value.values()[k], st.v.value.values()[k]);
                assert_eq!(out.v.grad.at(k), st.v.grad.at(k));
                assert_eq!(out.w.value.at(k), st.w.value.at(k));
            }
            if g.is_boundary(k) {
                assert_eq!(out.v.value.values()[k], 0.0);
            }
        }
        assert!(out.diagnostics.e_norm[0] > 0.0);
    }
}
