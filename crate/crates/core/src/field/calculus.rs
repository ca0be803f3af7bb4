//! Second-order finite differences on the bounding box.
//!
//! Interior nodes use central stencils, edge nodes one-sided stencils of the
//! same order. All operators are exact on quadratics.

use super::{Grid, ScalarField, SymMatrixField, VectorField};

pub(crate) fn d1_raw(g: &Grid, f: &[f64]) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let c = 0.5 / g.hx();
    let mut out = vec![0.0; f.len()];
    for j in 0..ny {
        let r = &f[j * nx..(j + 1) * nx];
        let o = &mut out[j * nx..(j + 1) * nx];
        o[0] = c * (-3.0 * r[0] + 4.0 * r[1] - r[2]);
        for i in 1..nx - 1 {
            o[i] = c * (r[i + 1] - r[i - 1]);
        }
        o[nx - 1] = c * (3.0 * r[nx - 1] - 4.0 * r[nx - 2] + r[nx - 3]);
    }
    out
}

pub(crate) fn d2_raw(g: &Grid, f: &[f64]) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let c = 0.5 / g.hy();
    let mut out = vec![0.0; f.len()];
    let row = |j: usize| &f[j * nx..(j + 1) * nx];
    for j in 0..ny {
        let o = &mut out[j * nx..(j + 1) * nx];
        if j == 0 {
            let (a, b, d) = (row(0), row(1), row(2));
            for i in 0..nx {
                o[i] = c * (-3.0 * a[i] + 4.0 * b[i] - d[i]);
            }
        } else if j == ny - 1 {
            let (a, b, d) = (row(ny - 1), row(ny - 2), row(ny - 3));
            for i in 0..nx {
                o[i] = c * (3.0 * a[i] - 4.0 * b[i] + d[i]);
            }
        } else {
            let (a, b) = (row(j - 1), row(j + 1));
            for i in 0..nx {
                o[i] = c * (b[i] - a[i]);
            }
        }
    }
    out
}

pub(crate) fn d11_raw(g: &Grid, f: &[f64]) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let c = 1.0 / (g.hx() * g.hx());
    let mut out = vec![0.0; f.len()];
    for j in 0..ny {
        let r = &f[j * nx..(j + 1) * nx];
        let o = &mut out[j * nx..(j + 1) * nx];
        if nx >= 4 {
            o[0] = c * (2.0 * r[0] - 5.0 * r[1] + 4.0 * r[2] - r[3]);
            o[nx - 1] = c * (2.0 * r[nx - 1] - 5.0 * r[nx - 2] + 4.0 * r[nx - 3] - r[nx - 4]);
        } else {
            o[0] = c * (r[0] - 2.0 * r[1] + r[2]);
            o[nx - 1] = o[0];
        }
        for i in 1..nx - 1 {
            o[i] = c * (r[i - 1] - 2.0 * r[i] + r[i + 1]);
        }
    }
    out
}

pub(crate) fn d22_raw(g: &Grid, f: &[f64]) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let c = 1.0 / (g.hy() * g.hy());
    let mut out = vec![0.0; f.len()];
    let at = |i: usize, j: usize| f[j * nx + i];
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] = c * if j == 0 && ny >= 4 {
                2.0 * at(i, 0) - 5.0 * at(i, 1) + 4.0 * at(i, 2) - at(i, 3)
            } else if j == ny - 1 && ny >= 4 {
                2.0 * at(i, j) - 5.0 * at(i, j - 1) + 4.0 * at(i, j - 2) - at(i, j - 3)
            } else {
                let jj = j.clamp(1, ny - 2);
                at(i, jj - 1) - 2.0 * at(i, jj) + at(i, jj + 1)
            };
        }
    }
    out
}

pub(crate) fn d12_raw(g: &Grid, f: &[f64]) -> Vec<f64> {
    d1_raw(g, &d2_raw(g, f))
}

pub(crate) fn lap_raw(g: &Grid, f: &[f64]) -> Vec<f64> {
    let mut a = d11_raw(g, f);
    for (x, y) in a.iter_mut().zip(d22_raw(g, f)) {
        *x += y;
    }
    a
}

pub fn d1(f: &ScalarField) -> ScalarField {
    ScalarField::raw(f.grid().clone(), d1_raw(f.grid(), f.values()))
}
pub fn d2(f: &ScalarField) -> ScalarField {
    ScalarField::raw(f.grid().clone(), d2_raw(f.grid(), f.values()))
}
pub fn d11(f: &ScalarField) -> ScalarField {
    ScalarField::raw(f.grid().clone(), d11_raw(f.grid(), f.values()))
}
pub fn d22(f: &ScalarField) -> ScalarField {
    ScalarField::raw(f.grid().clone(), d22_raw(f.grid(), f.values()))
}
pub fn d12(f: &ScalarField) -> ScalarField {
    ScalarField::raw(f.grid().clone(), d12_raw(f.grid(), f.values()))
}

pub fn grad(f: &ScalarField) -> VectorField {
    let g = f.grid();
    VectorField::raw(g.clone(), d1_raw(g, f.values()), d2_raw(g, f.values()))
}

pub fn hessian(f: &ScalarField) -> SymMatrixField {
    let g = f.grid();
    let v = f.values();
    SymMatrixField::raw(g.clone(), d11_raw(g, v), d12_raw(g, v), d22_raw(g, v))
}

/// Symmetrised gradient `(grad w + grad w^T) / 2`.
pub fn sym_grad(w: &VectorField) -> SymMatrixField {
    let g = w.grid();
    let xx = d1_raw(g, w.x());
    let yy = d2_raw(g, w.y());
    let a = d2_raw(g, w.x());
    let b = d1_raw(g, w.y());
    let xy = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
    SymMatrixField::raw(g.clone(), xx, xy, yy)
}

/// Symmetrised outer product `(p (x) q + q (x) p) / 2`.
pub fn outer(p: &VectorField, q: &VectorField) -> SymMatrixField {
    let n = p.x().len();
    let (mut xx, mut xy, mut yy) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        xx.push(p.x()[k] * q.x()[k]);
        xy.push(0.5 * (p.x()[k] * q.y()[k] + p.y()[k] * q.x()[k]));
        yy.push(p.y()[k] * q.y()[k]);
    }
    SymMatrixField::raw(p.grid().clone(), xx, xy, yy)
}

/// `d22 A11 - 2 d12 A12 + d11 A22`.
pub fn curl_curl(a: &SymMatrixField) -> ScalarField {
    let g = a.grid();
    let p = d22_raw(g, a.xx());
    let q = d12_raw(g, a.xy());
    let r = d11_raw(g, a.yy());
    let v = (0..p.len()).map(|k| p[k] - 2.0 * q[k] + r[k]).collect();
    ScalarField::raw(g.clone(), v)
}

pub fn div(z: &VectorField) -> ScalarField {
    let g = z.grid();
    let mut a = d1_raw(g, z.x());
    for (x, y) in a.iter_mut().zip(d2_raw(g, z.y())) {
        *x += y;
    }
    ScalarField::raw(g.clone(), a)
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    ScalarField::raw(f.grid().clone(), lap_raw(f.grid(), f.values()))
}

/// Integral over the domain: composite trapezoid rule on rectangles; on other
/// shapes interior nodes get full cell weight and boundary nodes half.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid();
    let v = f.values();
    let cell = g.hx() * g.hy();
    let mut s = 0.0;
    if g.is_rectangle() {
        let (nx, ny) = (g.nx(), g.ny());
        for j in 0..ny {
            let wy = if j == 0 || j == ny - 1 { 0.5 } else { 1.0 };
            let r = &v[j * nx..(j + 1) * nx];
            let mut row = 0.5 * (r[0] + r[nx - 1]);
            for &x in &r[1..nx - 1] {
                row += x;
            }
            s += wy * row;
        }
    } else {
        for (k, &x) in v.iter().enumerate() {
            if g.is_interior(k) {
                s += x;
            } else if g.is_boundary(k) {
                s += 0.5 * x;
            }
        }
    }
    s * cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;
    use std::sync::Arc;

    fn grid(n: usize) -> Arc<Grid> {
        Arc::new(Grid::unit_square(n).unwrap())
    }

    #[test]
    fn exact_on_quadratics() {
        let g = grid(9);
        let f = ScalarField::from_fn(&g, |x, y| 3.0 * x * x - 2.0 * x * y + 0.5 * y * y + x - 4.0 * y + 1.0);
        let gr = grad(&f);
        let h = hessian(&f);
        for k in 0..g.len() {
            let (x, y) = g.point(k);
            assert!((gr.x()[k] - (6.0 * x - 2.0 * y + 1.0)).abs() < 1e-12);
            assert!((gr.y()[k] - (-2.0 * x + y - 4.0)).abs() < 1e-12);
            assert!((h.xx()[k] - 6.0).abs() < 1e-10);
            assert!((h.xy()[k] + 2.0).abs() < 1e-10);
            assert!((h.yy()[k] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn curl_curl_of_scalar_identity_is_laplacian() {
        let g = grid(17);
        let f = ScalarField::from_fn(&g, |x, y| (3.0 * x).sin() * y.exp());
        let a = SymMatrixField::scalar_identity(&f);
        let cc = curl_curl(&a);
        let lap = laplacian(&f);
        for k in 0..g.len() {
            assert!((cc.values()[k] - lap.values()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn curl_curl_kills_symmetric_gradients() {
        let g = grid(17);
        let w = VectorField::from_fn(&g, |x, y| [x * x * y, x - y * y * x]);
        let cc = curl_curl(&sym_grad(&w));
        for k in 0..g.len() {
            if g.edge_distance(k) >= 2 {
                assert!(cc.values()[k].abs() < 1e-8, "{}", cc.values()[k]);
            }
        }
    }

    #[test]
    fn trapezoid_exact_for_bilinear() {
        let g = grid(11);
        let f = ScalarField::from_fn(&g, |x, y| 1.0 + 2.0 * x + 3.0 * y + 4.0 * x * y);
        assert!((integrate(&f) - (1.0 + 1.0 + 1.5 + 1.0)).abs() < 1e-13);
    }

    #[test]
    fn second_order_convergence() {
        let err = |n: usize| {
            let g = grid(n);
            let f = ScalarField::from_fn(&g, |x, y| (2.0 * x + y).sin());
            let d = d12(&f);
            (0..g.len())
                .map(|k| {
                    let (x, y) = g.point(k);
                    (d.values()[k] + 2.0 * (2.0 * x + y).sin()).abs()
                })
                .fold(0.0, f64::max)
        };
        let r = err(33) / err(65);
        assert!(r > 3.5 && r < 4.5, "ratio {r}");
    }
}
