//! Convolution with the scaled bump `phi_l(x) = l^-2 phi(x / l)`, where
//! `phi(x) = c exp(-1 / (1 - |x|^2))` on the unit ball.
//!
//! Fields are extended by even reflection across each edge of the bounding
//! box (the node-symmetric extension, periodic with period `2(n - 1)`), then
//! convolved with renormalised discrete weights. Small kernels are applied
//! directly, large ones through the FFT. Either way the output vanishes
//! exactly at nodes farther than `l` from the support of the input.

use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::{norm_r, seminorm_r, Field, Grid, NormOptions, ScalarField};

/// Unnormalised radial profile on `|x|^2 = r2`.
pub fn profile(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

const DIRECT_MAX_TAPS: usize = 169;

#[derive(Debug)]
pub struct MollifierKernel {
    grid: Arc<Grid>,
    l: f64,
    rx: usize,
    ry: usize,
    /// Row-major `(2 ry + 1) x (2 rx + 1)` weights.
    weights: Vec<f64>,
    spectrum: OnceLock<Vec<f64>>,
}

impl MollifierKernel {
    pub fn new(grid: &Arc<Grid>, l: f64) -> Result<Self> {
        let min = 2.0 * grid.h_max();
        if !(l >= min) || !l.is_finite() {
            return Err(Error::UnresolvedScale { l, min });
        }
        let rx = (l / grid.hx()).floor() as usize;
        let ry = (l / grid.hy()).floor() as usize;
        let (wx, wy) = (2 * rx + 1, 2 * ry + 1);
        let mut weights = vec![0.0; wx * wy];
        let mut sum = 0.0;
        for (a, dj) in (-(ry as isize)..=ry as isize).enumerate() {
            for (b, di) in (-(rx as isize)..=rx as isize).enumerate() {
                let d2 = sq(di as f64 * grid.hx()) + sq(dj as f64 * grid.hy());
                let w = if d2 < l * l { profile(d2 / (l * l)) } else { 0.0 };
                weights[a * wx + b] = w;
                sum += w;
            }
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(MollifierKernel { grid: grid.clone(), l, rx, ry, weights, spectrum: OnceLock::new() })
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of taps in each direction from the centre.
    pub fn radius_nodes(&self) -> (usize, usize) {
        (self.rx, self.ry)
    }

    /// Discrete Fourier multiplier for `cos(2 pi (k1 x + k2 y))`.
    pub fn symbol(&self, k1: f64, k2: f64) -> f64 {
        let wx = 2 * self.rx + 1;
        let mut s = 0.0;
        for a in 0..2 * self.ry + 1 {
            for b in 0..wx {
                let dx = (b as f64 - self.rx as f64) * self.grid.hx();
                let dy = (a as f64 - self.ry as f64) * self.grid.hy();
                s += self.weights[a * wx + b] * (2.0 * std::f64::consts::PI * (k1 * dx + k2 * dy)).cos();
            }
        }
        s
    }

    fn uses_fft(&self) -> bool {
        (2 * self.rx + 1) * (2 * self.ry + 1) > DIRECT_MAX_TAPS
    }

    pub fn apply<F: Field>(&self, f: &F) -> Result<F> {
        crate::field::same_grid(&self.grid, f.grid())?;
        let comps = f.components();
        let mut out: Vec<Vec<f64>> = if self.uses_fft() {
            let mut out = Vec::with_capacity(comps.len());
            for pair in comps.chunks(2) {
                let (a, b) = self.convolve_fft(pair[0], pair.get(1).copied());
                out.push(a);
                if let Some(b) = b {
                    out.push(b);
                }
            }
            out
        } else {
            comps.iter().map(|c| self.convolve_direct(c)).collect()
        };
        for (o, c) in out.iter_mut().zip(&comps) {
            self.clip_to_support(c, o);
        }
        F::from_components(self.grid.clone(), out)
    }

    fn convolve_direct(&self, f: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (rx, ry) = (self.rx, self.ry);
        let (px, py) = (nx + 2 * rx, ny + 2 * ry);
        let mut pad = vec![0.0; px * py];
        for j in 0..py {
            let sj = reflect(j as isize - ry as isize, ny);
            for i in 0..px {
                pad[j * px + i] = f[sj * nx + reflect(i as isize - rx as isize, nx)];
            }
        }
        let wx = 2 * rx + 1;
        let mut out = vec![0.0; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut s = 0.0;
                for a in 0..2 * ry + 1 {
                    let row = &pad[(j + a) * px + i..(j + a) * px + i + wx];
                    let w = &self.weights[a * wx..(a + 1) * wx];
                    // kernel is even, so correlation equals convolution
                    for b in 0..wx {
                        s += w[b] * row[b];
                    }
                }
                out[j * nx + i] = s;
            }
        }
        out
    }

    fn periods(&self) -> (usize, usize) {
        (2 * (self.grid.nx() - 1), 2 * (self.grid.ny() - 1))
    }

    fn spectrum(&self) -> &[f64] {
        self.spectrum.get_or_init(|| {
            let (px, py) = self.periods();
            let wx = 2 * self.rx + 1;
            let mut k = vec![Complex::new(0.0, 0.0); px * py];
            for a in 0..2 * self.ry + 1 {
                let j = (a as isize - self.ry as isize).rem_euclid(py as isize) as usize;
                for b in 0..wx {
                    let i = (b as isize - self.rx as isize).rem_euclid(px as isize) as usize;
                    k[j * px + i].re += self.weights[a * wx + b];
                }
            }
            fft2(&mut k, px, py, false);
            k.into_iter().map(|c| c.re).collect()
        })
    }

    fn convolve_fft(&self, a: &[f64], b: Option<&[f64]>) -> (Vec<f64>, Option<Vec<f64>>) {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let (px, py) = self.periods();
        let mut z = vec![Complex::new(0.0, 0.0); px * py];
        for j in 0..py {
            let sj = reflect(j as isize, ny);
            for i in 0..px {
                let k = sj * nx + reflect(i as isize, nx);
                z[j * px + i] = Complex::new(a[k], b.map_or(0.0, |b| b[k]));
            }
        }
        fft2(&mut z, px, py, false);
        for (c, s) in z.iter_mut().zip(self.spectrum()) {
            *c *= *s;
        }
        fft2(&mut z, px, py, true);
        let scale = 1.0 / (px * py) as f64;
        let mut oa = vec![0.0; nx * ny];
        let mut ob = b.map(|_| vec![0.0; nx * ny]);
        for j in 0..ny {
            for i in 0..nx {
                let c = z[j * px + i];
                oa[j * nx + i] = c.re * scale;
                if let Some(ob) = ob.as_mut() {
                    ob[j * nx + i] = c.im * scale;
                }
            }
        }
        (oa, ob)
    }

    /// Zeroes output nodes whose distance to the support of `f` is at least `l`.
    fn clip_to_support(&self, f: &[f64], out: &mut [f64]) {
        if f.iter().all(|&v| v != 0.0) {
            return;
        }
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        let l2 = self.l * self.l;
        // squared x-distance to the nearest support node in the same row, within rx
        let mut row = vec![f64::INFINITY; nx * ny];
        for j in 0..ny {
            let mut last: Option<usize> = None;
            for i in 0..nx {
                if f[j * nx + i] != 0.0 {
                    last = Some(i);
                }
                if let Some(p) = last {
                    row[j * nx + i] = sq((i - p) as f64 * g.hx());
                }
            }
            last = None;
            for i in (0..nx).rev() {
                if f[j * nx + i] != 0.0 {
                    last = Some(i);
                }
                if let Some(p) = last {
                    let d = sq((p - i) as f64 * g.hx());
                    if d < row[j * nx + i] {
                        row[j * nx + i] = d;
                    }
                }
            }
        }
        let ry = self.ry as isize;
        for j in 0..ny {
            for i in 0..nx {
                let mut best = f64::INFINITY;
                for dj in -ry..=ry {
                    let jj = j as isize + dj;
                    if jj < 0 || jj >= ny as isize {
                        continue;
                    }
                    let d = row[jj as usize * nx + i] + sq(dj as f64 * g.hy());
                    if d < best {
                        best = d;
                    }
                }
                if best >= l2 {
                    out[j * nx + i] = 0.0;
                }
            }
        }
    }
}

#[inline]
fn sq(x: f64) -> f64 {
    x * x
}

/// Index of the node-symmetric reflection of `i` into `0..n`.
fn reflect(i: isize, n: usize) -> usize {
    let p = 2 * (n as isize - 1);
    let m = i.rem_euclid(p);
    (if m < n as isize { m } else { p - m }) as usize
}

fn fft2(data: &mut [Complex<f64>], px: usize, py: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (fx, fy) = if inverse {
        (planner.plan_fft_inverse(px), planner.plan_fft_inverse(py))
    } else {
        (planner.plan_fft_forward(px), planner.plan_fft_forward(py))
    };
    fx.process(data);
    let mut t = transpose(data, px, py);
    fy.process(&mut t);
    let back = transpose(&t, py, px);
    data.copy_from_slice(&back);
}

fn transpose(d: &[Complex<f64>], w: usize, h: usize) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); w * h];
    const B: usize = 32;
    for jb in (0..h).step_by(B) {
        for ib in (0..w).step_by(B) {
            for j in jb..(jb + B).min(h) {
                for i in ib..(ib + B).min(w) {
                    out[i * h + j] = d[j * w + i];
                }
            }
        }
    }
    out
}

/// Mollifies every component of `f` at length scale `l`.
pub fn mollify<F: Field>(f: &F, l: f64) -> Result<F> {
    MollifierKernel::new(f.grid(), l)?.apply(f)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeOptions {
    pub r: f64,
    pub s: f64,
    pub alpha: f64,
    pub norms: NormOptions,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { r: 0.0, s: 1.0, alpha: 0.5, norms: NormOptions::default() }
    }
}

/// The four quantitative mollification estimates, each as lhs / rhs with unit constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollifyProbe {
    pub l: f64,
    /// `[h * phi_l]_{r+s} / (l^-s [h]_r)`
    pub smoothing: f64,
    /// `|h - h * phi_l|_r / (l^{1-r} [h]_1)`, with `r` clamped to `[0, 1]`
    pub approximation: f64,
    /// `|h - h * phi_l|_j / (l^{2-j} |h|_2)` for `j = 0, 1`
    pub second_order: [f64; 2],
    /// `|(h h) * phi_l - (h * phi_l)^2|_r / (l^{2 alpha - r} |h|_alpha^2)`
    pub commutator: f64,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        a / b
    }
}

pub fn mollify_probe(f: &ScalarField, l: f64, opts: &ProbeOptions) -> Result<MollifyProbe> {
    let k = MollifierKernel::new(f.grid(), l)?;
    let no = &opts.norms;
    let ft = k.apply(f)?;
    let diff = f.sub(&ft);
    let (r, s) = (opts.r, opts.s);

    let smoothing = ratio(seminorm_r(&ft, r + s, no)?, l.powf(-s) * seminorm_r(f, r, no)?);
    let ra = r.clamp(0.0, 1.0);
    let approximation = ratio(norm_r(&diff, ra, no)?, l.powf(1.0 - ra) * seminorm_r(f, 1.0, no)?);
    let h2 = norm_r(f, 2.0, no)?;
    let second_order = [
        ratio(norm_r(&diff, 0.0, no)?, l * l * h2),
        ratio(norm_r(&diff, 1.0, no)?, l * h2),
    ];
    let prod = k.apply(&f.mul(f))?;
    let comm = prod.sub(&ft.mul(&ft));
    let ha = norm_r(f, opts.alpha, no)?;
    let commutator = ratio(norm_r(&comm, r, no)?, l.powf(2.0 * opts.alpha - r) * ha * ha);
    Ok(MollifyProbe { l, smoothing, approximation, second_order, commutator })
}
