use std::path::Path;
use std::sync::Arc;

use lmce_core::corrugation::{ScheduleOptions, StageOptions, StageOverride};
use lmce_core::deficit::{PhaseSpec, VectorJet};
use lmce_core::expr::Expr;
use lmce_core::{Error, Grid, Result, ScalarField, SymMatrixField, VectorField};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Square,
    Disk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Phase expression in `x1`, `x2`.
    pub theta: String,
    /// Boundary data expression.
    #[serde(default = "default_g")]
    pub g: String,
    #[serde(default)]
    pub seed: u64,
    /// Lower bound for `|sin theta|` in the weak regime.
    #[serde(default = "default_c2")]
    pub c2: f64,
    /// Initial `w` as two expressions.
    #[serde(default)]
    pub w0: Option<[String; 2]>,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub stage: StageConfig,
    #[serde(default)]
    pub classical: ClassicalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub beta: f64,
    pub sigma: f64,
    /// `lam_1`; `M` follows from `lam_1 = M delta_1^(-1/(2 beta))`.
    pub lam1: f64,
    /// `delta_1`; defaults to `max rho_0^2`.
    pub delta1: Option<f64>,
    pub stages: usize,
    pub r0: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub overrides: Vec<OverrideConfig>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            beta: 0.19,
            sigma: 0.002,
            lam1: 8.5,
            delta1: None,
            stages: 2,
            r0: 0.1,
            alpha: 0.5,
            gamma: 2.0,
            overrides: Vec::new(),
        }
    }
}

/// Per-stage override. `f1`/`f2` set both sub-step frequencies
/// (`lam = f1^2 / f2`, `tau = ln f1 / ln lam`); `floor_fraction` sets the
/// floor as a multiple of `delta_1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverrideConfig {
    pub lam: Option<f64>,
    pub tau: Option<f64>,
    pub floor: Option<f64>,
    pub f1: Option<f64>,
    pub f2: Option<f64>,
    pub floor_fraction: Option<f64>,
}

impl OverrideConfig {
    pub fn resolve(&self, delta1: f64) -> Result<StageOverride> {
        let mut o = StageOverride { lam: self.lam, tau: self.tau, floor: self.floor };
        match (self.f1, self.f2) {
            (Some(f1), Some(f2)) => {
                if self.lam.is_some() || self.tau.is_some() {
                    return Err(Error::InvalidArgument("give either f1/f2 or lam/tau, not both".into()));
                }
                let lam = f1 * f1 / f2;
                if !(f1 > 1.0 && f2 > f1 && lam > 1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "need 1 < f1 < f2 and f1^2 > f2, got f1 = {f1}, f2 = {f2}"
                    )));
                }
                o.lam = Some(lam);
                o.tau = Some(f1.ln() / lam.ln());
            }
            (None, None) => {}
            _ => return Err(Error::InvalidArgument("f1 and f2 must be given together".into())),
        }
        if let Some(x) = self.floor_fraction {
            if self.floor.is_some() {
                return Err(Error::InvalidArgument("give either floor or floor_fraction, not both".into()));
            }
            o.floor = Some(x * delta1);
        }
        Ok(o)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub allow_unresolved: bool,
    pub first_error: bool,
}

impl From<StageConfig> for StageOptions {
    fn from(s: StageConfig) -> Self {
        StageOptions { allow_unresolved: s.allow_unresolved, first_error: s.first_error }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalConfig {
    pub mu: f64,
    pub kappa: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig { mu: 0.2, kappa: 0.5, tol: 1e-8, max_iter: 100 }
    }
}

fn default_domain() -> Domain {
    Domain::Square
}
fn default_grid() -> usize {
    257
}
fn default_g() -> String {
    "0".into()
}
fn default_c2() -> f64 {
    1e-3
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("config {}: {e}", path.display())))
    }

    pub fn make_grid(&self) -> Result<Arc<Grid>> {
        Ok(Arc::new(match self.domain {
            Domain::Square => Grid::unit_square(self.grid)?,
            Domain::Disk => Grid::unit_disk(self.grid)?,
        }))
    }

    pub fn phase(&self, grid: &Arc<Grid>) -> Result<PhaseSpec> {
        PhaseSpec::from_expr(grid, &Expr::parse(&self.theta)?)
    }

    pub fn boundary(&self, grid: &Arc<Grid>) -> Result<ScalarField> {
        sample(grid, &Expr::parse(&self.g)?)
    }

    /// Initial `w` with its symmetrised gradient from symbolic derivatives.
    pub fn w0(&self, grid: &Arc<Grid>) -> Result<Option<VectorJet>> {
        let Some([a, b]) = &self.w0 else { return Ok(None) };
        let (a, b) = (Expr::parse(a)?, Expr::parse(b)?);
        let value = VectorField::from_scalars(sample(grid, &a)?, sample(grid, &b)?)?;
        let cross = lmce_core::expr::mul(
            Expr::constant(0.5),
            lmce_core::expr::add(a.diff(1), b.diff(0)),
        );
        let xx = sample(grid, &a.diff(0))?.into_values();
        let xy = sample(grid, &cross)?.into_values();
        let yy = sample(grid, &b.diff(1))?.into_values();
        let sym_grad = SymMatrixField::new(grid.clone(), xx, xy, yy)?;
        Ok(Some(VectorJet { value, sym_grad }))
    }

    pub fn schedule_options(&self, delta1: f64) -> Result<ScheduleOptions> {
        let s = &self.schedule;
        Ok(ScheduleOptions {
            r0: s.r0,
            alpha: s.alpha,
            gamma: s.gamma,
            overrides: s.overrides.iter().map(|o| o.resolve(delta1)).collect::<Result<_>>()?,
        })
    }
}

fn sample(grid: &Arc<Grid>, e: &Expr) -> Result<ScalarField> {
    ScalarField::new(grid.clone(), (0..grid.len()).map(|k| {
        let (x, y) = grid.point(k);
        e.eval(x, y)
    }).collect())
}
