use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use clap::ValueEnum;
use lmce_core::corrugation::StageOptions;
use lmce_core::decompose::{decompose, seeded_perturbation};
use lmce_core::deficit::PhaseSpec;
use lmce_core::elliptic::elliptic_bound_probe;
use lmce_core::mollifier::{mollify_probe, ProbeOptions};
use lmce_core::verify::{gamma_bound_probe, ls_slope, stage_error_probe, stage_sweep, sweep_state};
use lmce_core::{Grid, Result, ScalarField, SymMatrixField};
use serde_json::{json, Value};

use crate::config::Config;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProbeKind {
    Gamma,
    Mollify,
    Elliptic,
    StageSweep,
    Decompose,
}

pub struct ProbeArgs {
    pub config: Option<Config>,
    pub grid: Option<usize>,
    pub seed: u64,
    pub lams: Vec<f64>,
    pub hmax: f64,
    pub tau: f64,
}

fn square(n: usize) -> Result<Arc<Grid>> {
    Ok(Arc::new(Grid::unit_square(n)?))
}

pub fn run(kind: ProbeKind, args: &ProbeArgs) -> Result<Value> {
    match kind {
        ProbeKind::Gamma => {
            let p = gamma_bound_probe(100_000, args.seed);
            Ok(json!({ "kind": "gamma", "all_within": p.all_within(), "probe": p }))
        }
        ProbeKind::Mollify => {
            let g = square(args.grid.unwrap_or(257))?;
            let f = ScalarField::from_fn(&g, |x, _| (4.0 * PI * x).sin());
            let mut rows = Vec::new();
            for l in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
                let p = mollify_probe(&f, l, &ProbeOptions::default())?;
                rows.push(json!({
                    "l": p.l,
                    "smoothing": p.smoothing,
                    "approximation": p.approximation,
                    "second_order": p.second_order,
                    "commutator": p.commutator,
                }));
            }
            let approx: Vec<f64> = rows.iter().map(|r| r["approximation"].as_f64().unwrap_or(f64::NAN)).collect();
            let spread = approx.iter().cloned().fold(f64::MIN, f64::max) / approx.iter().cloned().fold(f64::MAX, f64::min);
            Ok(json!({ "kind": "mollify", "n": g.nx(), "rows": rows, "approximation_spread": spread }))
        }
        ProbeKind::Elliptic => {
            let sizes = match args.grid {
                Some(n) => vec![n],
                None => vec![129, 257],
            };
            let mut rows = Vec::new();
            for n in sizes {
                let p = elliptic_bound_probe(n, 50, args.seed)?;
                rows.push(json!({ "n": p.n, "trials": p.trials, "max_ratio": p.max_ratio, "mean_ratio": p.mean_ratio }));
            }
            let change = if rows.len() == 2 {
                let a = rows[0]["max_ratio"].as_f64().unwrap_or(f64::NAN);
                let b = rows[1]["max_ratio"].as_f64().unwrap_or(f64::NAN);
                json!((b - a).abs() / a)
            } else {
                Value::Null
            };
            Ok(json!({ "kind": "elliptic", "seed": args.seed, "rows": rows, "relative_change": change }))
        }
        ProbeKind::StageSweep => {
            let g = square(args.grid.unwrap_or(1025))?;
            let phase = match &args.config {
                Some(c) => c.phase(&g)?,
                None => PhaseSpec::constant(&g, FRAC_PI_2)?,
            };
            let state = sweep_state(&phase)?;
            let opts = StageOptions { allow_unresolved: true, first_error: false };
            let outs = stage_sweep(&state, &phase, &args.lams, args.tau, 0.01, &opts)?;
            let diags: Vec<_> = outs.iter().map(|o| o.diagnostics.clone()).collect();
            let probe = stage_error_probe(&diags)?;
            let logl: Vec<f64> = args.lams.iter().map(|l| l.ln()).collect();
            let bookkeeping: Vec<f64> = outs
                .iter()
                .map(|o| {
                    let d0 = lmce_core::deficit::d_assemble(&state.v, &state.w, &state.big_v, &phase)?;
                    let d1 = lmce_core::deficit::d_assemble(&o.v, &o.w, &o.big_v, &phase)?;
                    let r: SymMatrixField = d1.sub(&d0).sub(&o.added).sub(&o.e);
                    Ok(lmce_core::field::c_norm(&r, 0, &Default::default()))
                })
                .collect::<Result<_>>()?;
            let e_slope = ls_slope(&logl, &diags.iter().map(|d| d.e_norm[0].ln()).collect::<Vec<_>>());
            Ok(json!({
                "kind": "stage-sweep",
                "n": g.nx(),
                "tau": args.tau,
                "slopes": probe,
                "e_slope": e_slope,
                "bookkeeping": bookkeeping,
                "flags": diags.iter().map(|d| d.flags.clone()).collect::<Vec<_>>(),
            }))
        }
        ProbeKind::Decompose => {
            let g = square(args.grid.unwrap_or(257))?;
            let h = seeded_perturbation(&g, args.hmax, args.seed)?;
            let d = decompose(&h.add(&SymMatrixField::identity(&g)))?;
            Ok(json!({
                "kind": "decompose",
                "n": g.nx(),
                "hmax": args.hmax,
                "seed": args.seed,
                "residual": d.residual_norm,
                "min_a": d.min_a,
                "min_det": d.min_det,
                "flatten_iterations": d.flatten_iterations,
                "curvature": d.curvature,
            }))
        }
    }
}
