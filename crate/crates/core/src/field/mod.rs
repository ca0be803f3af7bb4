//! Grids, nodal fields, finite-difference calculus, norms and field files.

pub(crate) mod calculus;
mod grid;
pub mod io;
mod norm;

use std::sync::Arc;

use crate::error::{Error, Result};

pub use calculus::{
    curl_curl, d1, d11, d12, d2, d22, div, grad, hessian, integrate, laplacian, outer, sym_grad,
};
pub use grid::{Grid, NodeKind, Shape};
pub use norm::{
    c_norm, derivatives_of_order, holder_seminorm, norm, norm_r, seminorm_r, NormKind, NormOptions,
};

/// Common access to the component arrays of a nodal field.
pub trait Field: Sized + Clone {
    const COMPONENTS: usize;

    fn grid(&self) -> &Arc<Grid>;
    fn components(&self) -> Vec<&[f64]>;
    fn components_mut(&mut self) -> Vec<&mut [f64]>;
    fn from_components(grid: Arc<Grid>, comps: Vec<Vec<f64>>) -> Result<Self>;

    fn map_components(&self, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Self {
        let comps = self.components().into_iter().map(&mut f).collect();
        Self::from_components(self.grid().clone(), comps).expect("component map preserves shape")
    }
}

pub(crate) fn check_finite(grid: &Grid, v: &[f64]) -> Result<()> {
    if let Some(k) = v.iter().position(|x| !x.is_finite()) {
        let (i, j) = grid.ij(k);
        return Err(Error::NonFinite { i, j });
    }
    Ok(())
}

pub(crate) fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

fn check_len(grid: &Grid, v: &[f64]) -> Result<()> {
    if v.len() != grid.len() {
        return Err(Error::InvalidArgument(format!(
            "expected {} values, got {}",
            grid.len(),
            v.len()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, &values)?;
        check_finite(&grid, &values)?;
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                let (x, y) = grid.point(k);
                f(x, y)
            })
            .collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField::raw(self.grid.clone(), self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        debug_assert!(same_grid(&self.grid, &other.grid).is_ok());
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField::raw(self.grid.clone(), values)
    }

    pub fn add(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }
    pub fn mul(&self, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }
    pub fn scale(&self, c: f64) -> Self {
        self.map(|x| c * x)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum absolute value over nodes where `keep` is true.
    pub fn max_abs_where(&self, keep: &[bool]) -> f64 {
        self.values.iter().zip(keep).filter(|(_, &k)| k).fold(0.0, |m, (&v, _)| m.max(v.abs()))
    }
}

pub(crate) fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

impl Field for ScalarField {
    const COMPONENTS: usize = 1;
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.values]
    }
    fn components_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.values]
    }
    fn from_components(grid: Arc<Grid>, mut comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != 1 {
            return Err(Error::InvalidArgument("scalar field needs 1 component".into()));
        }
        ScalarField::new(grid, comps.pop().unwrap())
    }
}

/// Two-component field, stored component-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Arc<Grid>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Arc<Grid>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        check_len(&grid, &x)?;
        check_len(&grid, &y)?;
        check_finite(&grid, &x)?;
        check_finite(&grid, &y)?;
        Ok(VectorField { grid, x, y })
    }

    pub(crate) fn raw(grid: Arc<Grid>, x: Vec<f64>, y: Vec<f64>) -> Self {
        VectorField { grid, x, y }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField { grid: grid.clone(), x: vec![0.0; grid.len()], y: vec![0.0; grid.len()] }
    }

    pub fn from_scalars(x: ScalarField, y: ScalarField) -> Result<Self> {
        same_grid(&x.grid, &y.grid)?;
        Ok(VectorField { grid: x.grid, x: x.values, y: y.values })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let (mut x, mut y) = (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()));
        for k in 0..grid.len() {
            let (px, py) = grid.point(k);
            let [a, b] = f(px, py);
            x.push(a);
            y.push(b);
        }
        VectorField { grid: grid.clone(), x, y }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }
    pub fn y(&self) -> &[f64] {
        &self.y
    }
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn component(&self, c: usize) -> ScalarField {
        let v = if c == 0 { self.x.clone() } else { self.y.clone() };
        ScalarField::raw(self.grid.clone(), v)
    }
    pub fn at(&self, k: usize) -> [f64; 2] {
        [self.x[k], self.y[k]]
    }

    pub fn add(&self, o: &VectorField) -> Self {
        self.zip(o, |a, b| a + b)
    }
    pub fn sub(&self, o: &VectorField) -> Self {
        self.zip(o, |a, b| a - b)
    }
    pub fn scale(&self, c: f64) -> Self {
        self.map_components(|v| v.iter().map(|x| c * x).collect())
    }
    pub fn scale_by(&self, s: &ScalarField) -> Self {
        let m = |v: &[f64]| v.iter().zip(s.values()).map(|(a, b)| a * b).collect();
        VectorField::raw(self.grid.clone(), m(&self.x), m(&self.y))
    }
    /// Pointwise dot product.
    pub fn dot(&self, o: &VectorField) -> ScalarField {
        let v = (0..self.x.len()).map(|k| self.x[k] * o.x[k] + self.y[k] * o.y[k]).collect();
        ScalarField::raw(self.grid.clone(), v)
    }

    fn zip(&self, o: &VectorField, f: impl Fn(f64, f64) -> f64) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect();
        VectorField::raw(self.grid.clone(), z(&self.x, &o.x), z(&self.y, &o.y))
    }
}

impl Field for VectorField {
    const COMPONENTS: usize = 2;
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.x, &self.y]
    }
    fn components_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.x, &mut self.y]
    }
    fn from_components(grid: Arc<Grid>, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != 2 {
            return Err(Error::InvalidArgument("vector field needs 2 components".into()));
        }
        let mut it = comps.into_iter();
        VectorField::new(grid, it.next().unwrap(), it.next().unwrap())
    }
}

/// Symmetric 2x2 matrix field stored as `(a11, a12, a22)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrixField {
    grid: Arc<Grid>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
}

impl SymMatrixField {
    pub fn new(grid: Arc<Grid>, xx: Vec<f64>, xy: Vec<f64>, yy: Vec<f64>) -> Result<Self> {
        for v in [&xx, &xy, &yy] {
            check_len(&grid, v)?;
            check_finite(&grid, v)?;
        }
        Ok(SymMatrixField { grid, xx, xy, yy })
    }

    pub(crate) fn raw(grid: Arc<Grid>, xx: Vec<f64>, xy: Vec<f64>, yy: Vec<f64>) -> Self {
        SymMatrixField { grid, xx, xy, yy }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        let z = vec![0.0; grid.len()];
        SymMatrixField { grid: grid.clone(), xx: z.clone(), xy: z.clone(), yy: z }
    }

    /// `s * Id` for a scalar field `s`.
    pub fn scalar_identity(s: &ScalarField) -> Self {
        SymMatrixField {
            grid: s.grid.clone(),
            xx: s.values.clone(),
            xy: vec![0.0; s.values.len()],
            yy: s.values.clone(),
        }
    }

    pub fn identity(grid: &Arc<Grid>) -> Self {
        Self::scalar_identity(&ScalarField::constant(grid, 1.0))
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> [f64; 3]) -> Self {
        let n = grid.len();
        let (mut a, mut b, mut c) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for k in 0..n {
            let (x, y) = grid.point(k);
            let [p, q, r] = f(x, y);
            a.push(p);
            b.push(q);
            c.push(r);
        }
        SymMatrixField { grid: grid.clone(), xx: a, xy: b, yy: c }
    }

    pub fn xx(&self) -> &[f64] {
        &self.xx
    }
    pub fn xy(&self) -> &[f64] {
        &self.xy
    }
    pub fn yy(&self) -> &[f64] {
        &self.yy
    }
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn at(&self, k: usize) -> [f64; 3] {
        [self.xx[k], self.xy[k], self.yy[k]]
    }
    pub fn entry(&self, c: usize) -> ScalarField {
        let v = match c {
            0 => self.xx.clone(),
            1 => self.xy.clone(),
            _ => self.yy.clone(),
        };
        ScalarField::raw(self.grid.clone(), v)
    }

    pub fn trace(&self) -> ScalarField {
        ScalarField::raw(self.grid.clone(), self.xx.iter().zip(&self.yy).map(|(a, b)| a + b).collect())
    }

    pub fn det(&self) -> ScalarField {
        let v = (0..self.xx.len()).map(|k| self.xx[k] * self.yy[k] - self.xy[k] * self.xy[k]).collect();
        ScalarField::raw(self.grid.clone(), v)
    }

    /// Smallest eigenvalue at every node.
    pub fn min_eigenvalue(&self) -> ScalarField {
        let v = (0..self.xx.len()).map(|k| sym_min_eig(self.at(k))).collect();
        ScalarField::raw(self.grid.clone(), v)
    }

    pub fn add(&self, o: &SymMatrixField) -> Self {
        self.zip(o, |a, b| a + b)
    }
    pub fn sub(&self, o: &SymMatrixField) -> Self {
        self.zip(o, |a, b| a - b)
    }
    pub fn scale(&self, c: f64) -> Self {
        self.map_components(|v| v.iter().map(|x| c * x).collect())
    }
    pub fn scale_by(&self, s: &ScalarField) -> Self {
        let m = |v: &[f64]| v.iter().zip(s.values()).map(|(a, b)| a * b).collect();
        SymMatrixField::raw(self.grid.clone(), m(&self.xx), m(&self.xy), m(&self.yy))
    }
    /// Adds `s * Id`.
    pub fn add_scalar(&self, s: &ScalarField) -> Self {
        let m = |v: &[f64]| v.iter().zip(s.values()).map(|(a, b)| a + b).collect();
        SymMatrixField::raw(self.grid.clone(), m(&self.xx), self.xy.clone(), m(&self.yy))
    }

    fn zip(&self, o: &SymMatrixField, f: impl Fn(f64, f64) -> f64) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect();
        SymMatrixField::raw(self.grid.clone(), z(&self.xx, &o.xx), z(&self.xy, &o.xy), z(&self.yy, &o.yy))
    }
}

/// Smallest eigenvalue of the symmetric matrix `[[a, b], [b, c]]`.
pub fn sym_min_eig([a, b, c]: [f64; 3]) -> f64 {
    let m = 0.5 * (a + c);
    let d = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    m - d
}

impl Field for SymMatrixField {
    const COMPONENTS: usize = 3;
    fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    fn components(&self) -> Vec<&[f64]> {
        vec![&self.xx, &self.xy, &self.yy]
    }
    fn components_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.xx, &mut self.xy, &mut self.yy]
    }
    fn from_components(grid: Arc<Grid>, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != 3 {
            return Err(Error::InvalidArgument("matrix field needs 3 components".into()));
        }
        let mut it = comps.into_iter();
        SymMatrixField::new(grid, it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        let g = Arc::new(Grid::unit_square(9).unwrap());
        let mut v = vec![0.0; 81];
        v[11] = f64::NAN;
        match ScalarField::new(g, v) {
            Err(Error::NonFinite { i, j }) => assert_eq!((i, j), (2, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn min_eigenvalue_diagonal() {
        assert_eq!(sym_min_eig([2.0, 0.0, 3.0]), 2.0);
        assert!((sym_min_eig([1.0, 1.0, 1.0]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn mismatched_grids_detected() {
        let a = Arc::new(Grid::unit_square(9).unwrap());
        let b = Arc::new(Grid::unit_square(17).unwrap());
        assert!(same_grid(&a, &b).is_err());
        let c = Arc::new(Grid::unit_square(9).unwrap());
        assert!(same_grid(&a, &c).is_ok());
    }
}
