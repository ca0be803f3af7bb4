//! Very weak and strong residuals, ratio probes and the run report.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corrugation::{
    gamma1_constant, gamma1_dt, gamma2_constant, gamma2_ds_dt, gamma2_dt, gamma2_s_constant, stage, Run, Schedule,
    StageDiagnostics, StageOptions, StageOutput, StageParams, StopReason,
};
use crate::deficit::{d_assemble, solve_v, PhaseSpec, ScalarJet, SubsolutionState, VectorJet};
use crate::error::{Error, Result};
use crate::field::{c_norm, hessian, holder_seminorm, same_grid, Grid, NormOptions, ScalarField, SymMatrixField};

/// Bump `exp(-1 / (1 - |x - c|^2 / r^2))` supported in the open disk of radius `r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Bump {
    /// Value, gradient and Hessian `[xx, xy, yy]`; all zero outside the support.
    pub fn jet(&self, x: f64, y: f64) -> (f64, [f64; 2], [f64; 3]) {
        let r2 = self.radius * self.radius;
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let q = (dx * dx + dy * dy) / r2;
        if q >= 1.0 {
            return (0.0, [0.0; 2], [0.0; 3]);
        }
        let m = 1.0 - q;
        let phi = (-1.0 / m).exp();
        let g1 = -1.0 / (m * m);
        let g2 = -2.0 / (m * m * m);
        let (qx, qy) = (2.0 * dx / r2, 2.0 * dy / r2);
        let qq = 2.0 / r2;
        let c = g1 * g1 + g2;
        (
            phi,
            [phi * g1 * qx, phi * g1 * qy],
            [phi * (c * qx * qx + g1 * qq), phi * c * qx * qy, phi * (c * qy * qy + g1 * qq)],
        )
    }

    /// Node index ranges of the bounding box of the support.
    fn node_box(&self, g: &Grid) -> (usize, usize, usize, usize) {
        let [ox, oy] = g.origin();
        let lo_i = (((self.center[0] - self.radius - ox) / g.hx()).floor().max(0.0)) as usize;
        let hi_i = (((self.center[0] + self.radius - ox) / g.hx()).ceil() as usize).min(g.nx() - 1);
        let lo_j = (((self.center[1] - self.radius - oy) / g.hy()).floor().max(0.0)) as usize;
        let hi_j = (((self.center[1] + self.radius - oy) / g.hy()).ceil() as usize).min(g.ny() - 1);
        (lo_i, hi_i, lo_j, hi_j)
    }
}

/// Fixed family of compactly supported test functions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TestFunctionSet {
    pub bumps: Vec<Bump>,
}

impl TestFunctionSet {
    /// Twelve bumps of radius `0.18` on a `3 x 4` lattice of the unit square,
    /// shrunk by half about the centre on a disk.
    pub fn standard(grid: &Grid) -> Result<Self> {
        let xs = [0.25, 0.5, 0.75];
        let ys = [0.215, 0.405, 0.595, 0.785];
        let [ox, oy] = grid.origin();
        let [lx, ly] = grid.extent();
        let (scale, radius) = if grid.is_rectangle() { (1.0, 0.18) } else { (0.5, 0.09) };
        let mut bumps = Vec::with_capacity(12);
        for &y in &ys {
            for &x in &xs {
                let cx = ox + lx * (0.5 + scale * (x - 0.5));
                let cy = oy + ly * (0.5 + scale * (y - 0.5));
                bumps.push(Bump { center: [cx, cy], radius: radius * lx.min(ly) });
            }
        }
        Self::new(grid, bumps)
    }

    /// Checks that every support stays two nodes away from the boundary.
    pub fn new(grid: &Grid, bumps: Vec<Bump>) -> Result<Self> {
        let margin = 2.0 * grid.h_max();
        let dist = grid.boundary_distance();
        for b in &bumps {
            let (i0, i1, j0, j1) = b.node_box(grid);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let k = grid.idx(i, j);
                    let (x, y) = grid.point(k);
                    let inside = (x - b.center[0]).hypot(y - b.center[1]) < b.radius;
                    if inside && (!grid.in_domain(k) || dist[k] < margin) {
                        return Err(Error::InvalidArgument(format!(
                            "test function at ({:.3}, {:.3}) reaches within two nodes of the boundary",
                            b.center[0], b.center[1]
                        )));
                    }
                }
            }
        }
        Ok(TestFunctionSet { bumps })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakResidual {
    /// Signed residual per test function.
    pub values: Vec<f64>,
    pub max: f64,
}

/// Very weak residual
///
/// ```text
/// int d1v d2v d12(phi s) - 1/2 (d1v)^2 d22(phi s) - 1/2 (d2v)^2 d11(phi s) + v lap(phi c) - phi s
/// ```
///
/// with `s = sin theta`, `c = cos theta`, using the gradient jet of `v`.
pub fn weak_residual(v: &ScalarJet, phase: &PhaseSpec, tests: &TestFunctionSet) -> Result<WeakResidual> {
    let g = v.grid();
    same_grid(g, phase.grid())?;
    let cell = g.hx() * g.hy();
    let mut values = Vec::with_capacity(tests.bumps.len());
    for b in &tests.bumps {
        let (i0, i1, j0, j1) = b.node_box(g);
        let mut sum = 0.0;
        for j in j0..=j1 {
            for i in i0..=i1 {
                let k = g.idx(i, j);
                let (x, y) = g.point(k);
                let (p, [px, py], [pxx, pxy, pyy]) = b.jet(x, y);
                if p == 0.0 && px == 0.0 && py == 0.0 && pxx == 0.0 {
                    continue;
                }
                let s = phase.sin.values()[k];
                let [sx, sy] = phase.grad_sin.at(k);
                let [sxx, sxy, syy] = phase.hess_sin.at(k);
                let c = phase.cos.values()[k];
                let [cx, cy] = phase.grad_cos.at(k);
                let [cxx, _, cyy] = phase.hess_cos.at(k);
                let m11 = pxx * s + 2.0 * px * sx + p * sxx;
                let m12 = pxy * s + px * sy + py * sx + p * sxy;
                let m22 = pyy * s + 2.0 * py * sy + p * syy;
                let lap_pc = (pxx + pyy) * c + 2.0 * (px * cx + py * cy) + p * (cxx + cyy);
                let [v1, v2] = v.grad.at(k);
                let vv = v.value.values()[k];
                sum += v1 * v2 * m12 - 0.5 * v1 * v1 * m22 - 0.5 * v2 * v2 * m11 + vv * lap_pc - p * s;
            }
        }
        values.push(sum * cell);
    }
    let max = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(WeakResidual { values, max })
}

/// `cos theta lap v + sin theta (det D^2 v - 1)` with the finite-difference Hessian.
pub fn strong_residual(v: &ScalarField, phase: &PhaseSpec) -> Result<ScalarField> {
    same_grid(v.grid(), phase.grid())?;
    let h = hessian(v);
    let out = (0..v.grid().len())
        .map(|k| {
            let [a, b, c] = h.at(k);
            phase.cos.values()[k] * (a + c) + phase.sin.values()[k] * (a * c - b * b - 1.0)
        })
        .collect();
    ScalarField::new(v.grid().clone(), out)
}

/// `int phi f` for each test function.
pub fn test_integrals(f: &ScalarField, tests: &TestFunctionSet) -> Vec<f64> {
    let g = f.grid();
    let cell = g.hx() * g.hy();
    tests
        .bumps
        .iter()
        .map(|b| {
            let (i0, i1, j0, j1) = b.node_box(g);
            let mut s = 0.0;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let k = g.idx(i, j);
                    let (x, y) = g.point(k);
                    s += b.jet(x, y).0 * f.values()[k];
                }
            }
            s * cell
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaBound {
    pub quantity: String,
    /// Largest sampled ratio.
    pub max_ratio: f64,
    /// Closed-form constant.
    pub constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaProbe {
    pub samples: usize,
    pub seed: u64,
    pub bounds: Vec<GammaBound>,
}

impl GammaProbe {
    pub fn all_within(&self) -> bool {
        self.bounds.iter().all(|b| b.max_ratio <= b.constant)
    }
}

/// Samples `(s, t)` and bounds `|d_t^k Gamma1| / |s|`, `|d_s d_t^k Gamma2| / |s|`
/// and `|d_t^k Gamma2| / s^2` for `k <= 3` by their closed-form constants.
///
/// Each ratio is reported as `c * |value| / fl(c |s|)`, which the
/// evaluation order of the profiles keeps at most `c` in floating point.
pub fn gamma_bound_probe(samples: usize, seed: u64) -> GammaProbe {
    type Eval = fn(f64, f64, u32) -> f64;
    let families: [(&str, fn(u32) -> f64, Eval, bool); 3] = [
        ("d_t^k Gamma1 / |s|", gamma1_constant, gamma1_dt, false),
        ("d_s d_t^k Gamma2 / |s|", gamma2_s_constant, gamma2_ds_dt, false),
        ("d_t^k Gamma2 / s^2", gamma2_constant, gamma2_dt, true),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64)> = (0..samples).map(|_| (rng.gen_range(-4.0..4.0), rng.gen_range(-8.0..8.0))).collect();
    let mut bounds = Vec::new();
    for (name, constant, eval, square) in families {
        for k in 0..4u32 {
            let c = constant(k);
            let mut max_ratio = 0.0f64;
            for &(s, t) in &pts {
                let scale = if square { s * s } else { s };
                let denom = (if square { -c } else { c } * scale).abs();
                if denom == 0.0 {
                    continue;
                }
                max_ratio = max_ratio.max(c * (eval(s, t, k).abs() / denom));
            }
            bounds.push(GammaBound { quantity: name.replace('k', &k.to_string()), max_ratio, constant: c });
        }
    }
    GammaProbe { samples, seed, bounds }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeFit {
    pub quantity: String,
    pub values: Vec<f64>,
    /// Least-squares slope of `log value` against `log lam`; absent when a value is not positive.
    pub fitted: Option<f64>,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageErrorProbe {
    pub lams: Vec<f64>,
    pub tau: f64,
    pub fits: Vec<SlopeFit>,
}

impl StageErrorProbe {
    pub fn fit(&self, quantity: &str) -> Option<&SlopeFit> {
        self.fits.iter().find(|f| f.quantity == quantity)
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Log-log slopes of stage norms over a sweep in `lam` at fixed `tau`.
pub fn stage_error_probe(sweep: &[StageDiagnostics]) -> Result<StageErrorProbe> {
    if sweep.len() < 3 {
        return Err(Error::InvalidArgument(format!("slope fits need at least 3 runs, got {}", sweep.len())));
    }
    let tau = sweep[0].params.tau;
    if sweep.iter().any(|d| d.params.tau != tau) {
        return Err(Error::InvalidArgument("sweep must share tau".into()));
    }
    let lams: Vec<f64> = sweep.iter().map(|d| d.params.lam).collect();
    let logl: Vec<f64> = lams.iter().map(|l| l.ln()).collect();
    let series: [(&str, fn(&StageDiagnostics) -> f64, f64); 4] = [
        ("E_0", |d| d.e_norm[0], 1.0 - tau),
        ("dv_0", |d| d.v_change[0], -tau),
        ("dv_1", |d| d.v_change[1], 0.0),
        ("v_2", |d| d.v_c2, 2.0 * tau - 1.0),
    ];
    let fits = series
        .iter()
        .map(|(name, get, predicted)| {
            let values: Vec<f64> = sweep.iter().map(get).collect();
            let fitted = if values.iter().all(|v| *v > 0.0 && v.is_finite()) {
                Some(ls_slope(&logl, &values.iter().map(|v| v.ln()).collect::<Vec<_>>()))
            } else {
                None
            };
            SlopeFit { quantity: name.to_string(), values, fitted, predicted: *predicted }
        })
        .collect();
    Ok(StageErrorProbe { lams, tau, fits })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StateReport {
    pub q: usize,
    pub weak_residual: Vec<f64>,
    pub weak_residual_max: f64,
    /// `max |v_q - g|` over boundary nodes.
    pub boundary_deviation: f64,
    /// Hoelder seminorm of `grad v_q` with exponent `alpha`.
    pub c1_alpha: f64,
    pub rho_max: f64,
    pub h_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageReport {
    pub q: usize,
    pub delta_q: f64,
    pub lam_q: f64,
    pub floor: f64,
    /// `|v_{q+1} - v_q|_0`, `|v_{q+1} - v_q|_1`.
    pub cauchy: [f64; 2],
    /// `|v_{q+1} - v_q|_1 / delta_{q+1}^(1/2)`.
    pub c1_ratio: f64,
    /// `|v_{q+1} - v_q|_0 / (delta_{q+1}^(1/2) lam_{q+1}^-1)`.
    pub c0_ratio: f64,
    pub e_norm: [f64; 2],
    pub bookkeeping: f64,
    pub min_eig_after: f64,
    pub h_norm: f64,
    pub h_bound_violated: bool,
    pub diagnostics: StageDiagnostics,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub schedule: Schedule,
    pub states: Vec<StateReport>,
    pub per_stage: Vec<StageReport>,
    pub probes: serde_json::Map<String, serde_json::Value>,
    pub stop: Option<StopReason>,
    /// Seconds per stage; absent unless timing was requested, to keep reports reproducible.
    pub wall_times: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn weak_residuals(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.weak_residual_max).collect()
    }
}

#[derive(Clone, Debug)]
pub struct ReportOptions {
    pub alpha: f64,
    pub norms: NormOptions,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions { alpha: 0.5, norms: NormOptions::default() }
    }
}

/// Tables of Cauchy differences, weak residuals and boundary deviations of a run.
pub fn convergence_report(
    run: &Run,
    schedule: &Schedule,
    phase: &PhaseSpec,
    g: &ScalarField,
    tests: &TestFunctionSet,
    opts: &ReportOptions,
) -> Result<RunReport> {
    let grid: &Arc<Grid> = g.grid();
    let mut states = Vec::with_capacity(run.states.len());
    for st in &run.states {
        same_grid(grid, st.grid())?;
        let wr = weak_residual(&st.v, phase, tests)?;
        let mut dev = 0.0f64;
        for k in 0..grid.len() {
            if grid.is_boundary(k) {
                dev = dev.max((st.v.value.values()[k] - g.values()[k]).abs());
            }
        }
        states.push(StateReport {
            q: st.q,
            weak_residual: wr.values,
            weak_residual_max: wr.max,
            boundary_deviation: dev,
            c1_alpha: holder_seminorm(&st.v.grad, 0, opts.alpha, &opts.norms)?,
            rho_max: st.rho.max_abs(),
            h_norm: c_norm(&st.h, 0, &opts.norms),
        });
    }
    let mut per_stage = Vec::with_capacity(run.records.len());
    for (i, rec) in run.records.iter().enumerate() {
        let d = run.states[i + 1].v.sub(&run.states[i].v);
        let c0 = d.value.max_abs();
        let c1 = c0 + c_norm(&d.grad, 0, &opts.norms);
        let delta_next = schedule.delta.get(rec.q + 1).copied().unwrap_or(f64::NAN);
        let lam_next = schedule.lam.get(rec.q + 1).copied().unwrap_or(f64::NAN);
        per_stage.push(StageReport {
            q: rec.q,
            delta_q: schedule.delta.get(rec.q).copied().unwrap_or(f64::NAN),
            lam_q: schedule.lam.get(rec.q).copied().unwrap_or(f64::NAN),
            floor: rec.floor,
            cauchy: [c0, c1],
            c1_ratio: c1 / delta_next.sqrt(),
            c0_ratio: c0 / (delta_next.sqrt() / lam_next),
            e_norm: rec.diagnostics.e_norm,
            bookkeeping: rec.bookkeeping,
            min_eig_after: rec.min_eig_after,
            h_norm: rec.h_norm,
            h_bound_violated: rec.h_bound_violated,
            diagnostics: rec.diagnostics.clone(),
        });
    }
    let notes = vec![
        "weak residuals are measured against a fixed finite family of test functions".to_string(),
        "constants of the stage estimates are not computable; ratios are reported instead".to_string(),
    ];
    Ok(RunReport {
        config: serde_json::Value::Null,
        schedule: schedule.clone(),
        states,
        per_stage,
        probes: serde_json::Map::new(),
        stop: run.stop.clone(),
        wall_times: None,
        notes,
    })
}

/// Smooth adapted subsolution used by the stage sweeps: `v = x1 (1 - x1) x2 (1 - x2) / 2`,
/// `w = 0`, `rho` a bump of height `0.2` and radius `0.3` at the centre, and a
/// fixed trace-free `H` of size `0.1`; `A` is defined to make the state exact.
pub fn sweep_state(phase: &PhaseSpec) -> Result<SubsolutionState> {
    let g = phase.grid();
    let v = ScalarJet::from_field(ScalarField::from_fn(g, |x, y| 0.5 * x * (1.0 - x) * y * (1.0 - y)));
    let w = VectorJet::zeros(g);
    let bump = Bump { center: [0.5, 0.5], radius: 0.3 };
    let e = bump.jet(0.5, 0.5).0;
    let rho = ScalarField::from_fn(g, |x, y| 0.2 * bump.jet(x, y).0 / e);
    let h = SymMatrixField::from_fn(g, |x, y| {
        let s = 0.08 * (PI * x).sin();
        [s, 0.05 * (PI * y).cos(), -s]
    });
    let big_v = solve_v(&v, phase)?;
    let d = d_assemble(&v, &w, &big_v, phase)?;
    let r2 = rho.mul(&rho);
    let a = d.add(&h.add(&SymMatrixField::identity(g)).scale_by(&r2));
    Ok(SubsolutionState { v, w, rho, h, a, q: 0, big_v })
}

/// One stage on `state` for each frequency in `lams`, at fixed `tau` and `delta`.
pub fn stage_sweep(
    state: &SubsolutionState,
    phase: &PhaseSpec,
    lams: &[f64],
    tau: f64,
    delta: f64,
    opts: &StageOptions,
) -> Result<Vec<StageOutput>> {
    lams.iter().map(|&lam| stage(state, &StageParams::new(lam, tau, delta), phase, opts)).collect()
}

/// `int phi` of a bump with radius `r`, for reference values.
pub fn bump_mass(r: f64) -> f64 {
    // 2 pi r^2 int_0^1 exp(-1 / (1 - s^2)) s ds
    let n = 20000;
    let mut acc = 0.0;
    for i in 0..n {
        let s = (i as f64 + 0.5) / n as f64;
        acc += (-1.0 / (1.0 - s * s)).exp() * s;
    }
    2.0 * PI * r * r * acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use std::f64::consts::FRAC_PI_2;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_square(n).unwrap())
    }

    #[test]
    fn bump_derivatives_match_differences() {
        let b = Bump { center: [0.5, 0.4], radius: 0.2 };
        let (x, y, e) = (0.55, 0.47, 1e-6);
        let (_, gr, h) = b.jet(x, y);
        let fx = (b.jet(x + e, y).0 - b.jet(x - e, y).0) / (2.0 * e);
        let fy = (b.jet(x, y + e).0 - b.jet(x, y - e).0) / (2.0 * e);
        assert!((fx - gr[0]).abs() < 1e-6 && (fy - gr[1]).abs() < 1e-6);
        let fxy = (b.jet(x, y + e).1[0] - b.jet(x, y - e).1[0]) / (2.0 * e);
        let fyy = (b.jet(x, y + e).1[1] - b.jet(x, y - e).1[1]) / (2.0 * e);
        assert!((fxy - h[1]).abs() < 1e-5 && (fyy - h[2]).abs() < 1e-5);
        assert_eq!(b.jet(0.71, 0.4).0, 0.0);
    }

    #[test]
    fn standard_set_fits() {
        assert_eq!(TestFunctionSet::standard(&grid(129)).unwrap().bumps.len(), 12);
        assert!(TestFunctionSet::standard(&Grid::unit_disk(129).unwrap()).is_ok());
        assert!(TestFunctionSet::standard(&grid(17)).is_err());
    }

    #[test]
    fn weak_residual_of_paraboloids() {
        let g = grid(513);
        let phase = PhaseSpec::constant(&g, FRAC_PI_2).unwrap();
        let tests = TestFunctionSet::standard(&g).unwrap();
        let v = ScalarJet::from_field(ScalarField::from_fn(&g, |x, y| 0.5 * (x * x + y * y)));
        let r0 = weak_residual(&v, &phase, &tests).unwrap().max;
        assert!(r0 < 1e-7, "{r0}");
        let v = ScalarJet::from_field(ScalarField::from_fn(&g, |x, _| 0.5 * x * x));
        let r = weak_residual(&v, &phase, &tests).unwrap();
        let mass = bump_mass(0.18);
        for x in r.values {
            assert!((x + mass).abs() < 1e-6 * mass.max(1.0), "{x} {mass}");
        }
    }

    #[test]
    fn weak_matches_strong_for_smooth_fields() {
        let err = |n: usize| {
            let g = grid(n);
            let theta = Expr::parse("pi/2 + 0.2*sin(pi*x1)*sin(pi*x2)").unwrap();
            let phase = PhaseSpec::from_expr(&g, &theta).unwrap();
            let tests = TestFunctionSet::standard(&g).unwrap();
            let v = ScalarField::from_fn(&g, |x, y| (x * y).sin() + 0.3 * x.powi(3) - y * y);
            let weak = weak_residual(&ScalarJet::from_field(v.clone()), &phase, &tests).unwrap();
            let strong = test_integrals(&strong_residual(&v, &phase).unwrap(), &tests);
            weak.values.iter().zip(&strong).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        };
        let (a, b) = (err(129), err(257));
        assert!(a < 2e-3 && a / b > 3.0, "{a} {b}");
    }

    #[test]
    fn strong_residual_quartic() {
        let g = grid(65);
        let phase = PhaseSpec::from_expr(&g, &Expr::parse("0.3*x1").unwrap()).unwrap();
        let v = ScalarField::from_fn(&g, |x, _| x.powi(4));
        let r = strong_residual(&v, &phase).unwrap();
        for k in 0..g.len() {
            if g.is_interior(k) {
                let (x, _) = g.point(k);
                let want = (0.3 * x).cos() * 12.0 * x * x - (0.3 * x).sin();
                assert!((r.values()[k] - want).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn gamma_probe_within_constants() {
        let p = gamma_bound_probe(20000, 9);
        assert!(p.all_within());
        assert!((p.bounds[0].constant - 1.0 / PI).abs() < 1e-15);
        assert!((p.bounds[1].constant - 2.0).abs() < 1e-15);
        assert!((p.bounds[10].constant - 4.0 * PI).abs() < 1e-13);
        assert!(p.bounds.iter().all(|b| b.max_ratio > 0.9 * b.constant));
        assert_eq!(p, gamma_bound_probe(20000, 9));
    }

    #[test]
    fn slopes() {
        assert!((ls_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]) - 2.0).abs() < 1e-15);
    }
}
