use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::calculus::{d1_raw, d2_raw};
use super::{max_abs, Field, Grid};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    C0,
    C1,
    C2,
    /// `|h|_m + [h]_{m + alpha}` with `alpha` in `(0, 1]`.
    Holder { m: usize, alpha: f64 },
}

/// Sampling controls for norm evaluation.
///
/// Nodes closer than `collar` nodes to the boundary are excluded. Hölder
/// quotients use every pair within `radius` nodes, axis and diagonal pairs at
/// dyadic offsets, and `long_range` seeded random pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptions {
    pub collar: usize,
    pub radius: usize,
    pub long_range: usize,
    pub seed: u64,
}

impl Default for NormOptions {
    fn default() -> Self {
        NormOptions { collar: 0, radius: 8, long_range: 4096, seed: 0x5eed }
    }
}

impl NormOptions {
    pub fn with_collar(collar: usize) -> Self {
        NormOptions { collar, ..Default::default() }
    }
}

/// All partial derivatives of order `m` of a nodal array.
pub fn derivatives_of_order(g: &Grid, f: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut level = vec![f.to_vec()];
    for order in 0..m {
        if order == 1 {
            // second-order derivatives use the compact stencils
            level = vec![
                super::calculus::d11_raw(g, f),
                super::calculus::d12_raw(g, f),
                super::calculus::d22_raw(g, f),
            ];
            continue;
        }
        let mut next = Vec::new();
        for (n, v) in level.iter().enumerate() {
            if n == 0 {
                next.push(d1_raw(g, v));
            }
            next.push(d2_raw(g, v));
        }
        level = next;
    }
    level
}

fn masked_max(v: &[f64], keep: &[bool]) -> f64 {
    v.iter().zip(keep).filter(|(_, &k)| k).fold(0.0f64, |m, (&x, _)| m.max(x.abs()))
}

/// `sum_{j <= m} max_{|b| = j} |d^b h|_0` over the kept nodes.
pub fn c_norm<F: Field>(f: &F, m: usize, opts: &NormOptions) -> f64 {
    let g = f.grid();
    let keep = g.collar_mask(opts.collar);
    let mut total = 0.0;
    for j in 0..=m {
        let mut best = 0.0f64;
        for comp in f.components() {
            if j == 0 {
                best = best.max(if opts.collar == 0 && g.is_rectangle() {
                    max_abs(comp)
                } else {
                    masked_max(comp, &keep)
                });
            } else {
                for d in derivatives_of_order(g, comp, j) {
                    best = best.max(masked_max(&d, &keep));
                }
            }
        }
        total += best;
    }
    total
}

fn pair_offsets(g: &Grid, radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dj in 0..=r {
        for di in -r..=r {
            if (dj == 0 && di <= 0) || di * di + dj * dj > r * r {
                continue;
            }
            out.push((di, dj));
        }
    }
    let span = g.nx().max(g.ny()) as isize;
    let mut s = ((radius + 1).next_power_of_two()) as isize;
    while s < span {
        out.extend([(s, 0), (0, s), (s, s), (-s, s)]);
        s *= 2;
    }
    out
}

fn holder_quotient(g: &Grid, comps: &[Vec<f64>], alpha: f64, keep: &[bool], opts: &NormOptions) -> f64 {
    let (nx, ny) = (g.nx() as isize, g.ny() as isize);
    let mut best = 0.0f64;
    for (di, dj) in pair_offsets(g, opts.radius) {
        let dist = ((di as f64 * g.hx()).powi(2) + (dj as f64 * g.hy()).powi(2)).sqrt();
        let w = dist.powf(-alpha);
        let i0 = 0.max(-di);
        let i1 = nx.min(nx - di);
        for j in 0..(ny - dj).max(0) {
            let row_p = (j * nx) as usize;
            let row_q = ((j + dj) * nx) as usize;
            for i in i0..i1 {
                let p = row_p + i as usize;
                let q = row_q + (i + di) as usize;
                if !(keep[p] && keep[q]) {
                    continue;
                }
                for c in comps {
                    let d = (c[p] - c[q]).abs() * w;
                    if d > best {
                        best = d;
                    }
                }
            }
        }
    }
    let kept: Vec<usize> = (0..keep.len()).filter(|&k| keep[k]).collect();
    if kept.len() >= 2 && opts.long_range > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for _ in 0..opts.long_range {
            let p = kept[rng.gen_range(0..kept.len())];
            let q = kept[rng.gen_range(0..kept.len())];
            if p == q {
                continue;
            }
            let (a, b) = (g.point(p), g.point(q));
            let w = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt().powf(-alpha);
            for c in comps {
                best = best.max((c[p] - c[q]).abs() * w);
            }
        }
    }
    best
}

/// Hölder seminorm `[h]_{m + alpha}`: the largest Hölder quotient of all
/// order-`m` partial derivatives over the sampled node pairs.
pub fn holder_seminorm<F: Field>(f: &F, m: usize, alpha: f64, opts: &NormOptions) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("hölder exponent must lie in (0, 1], got {alpha}")));
    }
    let g = f.grid();
    let keep = g.collar_mask(opts.collar);
    let mut comps = Vec::new();
    for c in f.components() {
        comps.extend(derivatives_of_order(g, c, m));
    }
    Ok(holder_quotient(g, &comps, alpha, &keep, opts))
}

pub fn norm<F: Field>(f: &F, kind: NormKind, opts: &NormOptions) -> Result<f64> {
    Ok(match kind {
        NormKind::C0 => c_norm(f, 0, opts),
        NormKind::C1 => c_norm(f, 1, opts),
        NormKind::C2 => c_norm(f, 2, opts),
        NormKind::Holder { m, alpha } => c_norm(f, m, opts) + holder_seminorm(f, m, alpha, opts)?,
    })
}

fn split_order(r: f64) -> Result<(usize, f64)> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("order must be non-negative, got {r}")));
    }
    if r == 0.0 {
        return Ok((0, 0.0));
    }
    let m = r.ceil() as usize - 1;
    Ok((m, r - m as f64))
}

/// Seminorm `[h]_r` for real `r >= 0`; `[h]_0` is the sup norm.
pub fn seminorm_r<F: Field>(f: &F, r: f64, opts: &NormOptions) -> Result<f64> {
    let (m, alpha) = split_order(r)?;
    if alpha == 0.0 {
        return Ok(c_norm(f, 0, opts));
    }
    if alpha == 1.0 {
        // integer order: sup of the derivatives of that order
        let g = f.grid();
        let keep = g.collar_mask(opts.collar);
        let mut best = 0.0f64;
        for c in f.components() {
            for d in derivatives_of_order(g, c, m + 1) {
                best = best.max(masked_max(&d, &keep));
            }
        }
        return Ok(best);
    }
    holder_seminorm(f, m, alpha, opts)
}

/// Norm `|h|_r = |h|_{floor r} + [h]_r` for non-integer `r`, the `C^r` norm otherwise.
pub fn norm_r<F: Field>(f: &F, r: f64, opts: &NormOptions) -> Result<f64> {
    let (m, alpha) = split_order(r)?;
    if alpha == 0.0 || alpha == 1.0 {
        return Ok(c_norm(f, r as usize, opts));
    }
    Ok(c_norm(f, m, opts) + holder_seminorm(f, m, alpha, opts)?)
}
