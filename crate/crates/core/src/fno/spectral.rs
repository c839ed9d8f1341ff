//! Truncated Fourier transforms as dense matrix products.
//!
//! A spectral layer keeps only the signed modes `|k| < k_max` per axis,
//! so instead of a full FFT each axis is contracted against a
//! `(2 k_max - 1) x n` phase matrix and later expanded back by the
//! inverse-transform partner. At the mode counts used here the dense
//! products cost less than transform-then-truncate, and the adjoints
//! needed by the backward pass are plain conjugate transposes.
//!
//! The `n` samples along an axis are treated as one period of length
//! `n`; the canvas grid's duplicated endpoint is immaterial because the
//! layer is just a linear map on the sample values. Complex data is
//! held as split real/imaginary planes so every product runs through
//! the real gemm kernel.

use crate::error::{Error, Result};
use crate::fno::gemm::rgemm;
use crate::grid::ChannelTensor;

/// Signed modes retained per axis under a cap `k_max`: `2 k_max - 1`.
pub fn modes_per_axis(k_max: usize) -> usize {
    2 * k_max - 1
}

/// Retained mode tuples for a `d`-dimensional transform.
pub fn num_modes(d: usize, k_max: usize) -> usize {
    modes_per_axis(k_max).pow(d as u32)
}

/// Split-plane complex buffer.
#[derive(Debug, Clone)]
pub(crate) struct CxBuf {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CxBuf {
    pub fn zeros(len: usize) -> Self {
        CxBuf { re: vec![0.0; len], im: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }
}

/// Row-major complex matrix, split planes.
struct CxMat {
    rows: usize,
    cols: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Phase matrix `scale * exp(sign * 2 pi i * m * j / n)` where one index
/// runs over signed modes `-(k_max-1) ..= k_max-1` and the other over
/// grid samples `0 .. n`.
fn phase(rows: usize, cols: usize, mode_on_rows: bool, k_max: usize, n: usize, sign: f64, scale: f64) -> CxMat {
    let mut re = vec![0.0; rows * cols];
    let mut im = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (mi, j) = if mode_on_rows { (r, c) } else { (c, r) };
            let m = mi as f64 - (k_max as f64 - 1.0);
            let theta = sign * std::f64::consts::TAU * m * j as f64 / n as f64;
            re[r * cols + c] = scale * theta.cos();
            im[r * cols + c] = scale * theta.sin();
        }
    }
    CxMat { rows, cols, re, im }
}

/// Complex `c = a @ b`, row-major split planes.
fn cgemm(
    m: usize,
    k: usize,
    n: usize,
    (ar, ai): (&[f64], &[f64]),
    (br, bi): (&[f64], &[f64]),
    (cr, ci): (&mut [f64], &mut [f64]),
) {
    rgemm(m, k, n, 1.0, ar, br, 0.0, cr);
    rgemm(m, k, n, -1.0, ai, bi, 1.0, cr);
    rgemm(m, k, n, 1.0, ar, bi, 0.0, ci);
    rgemm(m, k, n, 1.0, ai, br, 1.0, ci);
}

/// Precomputed transform matrices for one `(d, n, k_max)` triple.
///
/// `forward` maps a real channel-major field to its retained modes and
/// `inverse` maps retained modes back to a real field; the `_adjoint`
/// partners are the exact transposes of those two real-linear maps, as
/// required by reverse-mode differentiation. Mode tuples are flattened
/// x-fastest with each axis ordered `-(k_max-1) ..= k_max-1`, and mode
/// buffers are mode-major: entry `m * channels + c`.
pub(crate) struct Spectral {
    pub d: usize,
    pub n: usize,
    pub p: usize,
    fwd_right: CxMat,
    fwd_left: CxMat,
    fwd_adj_right: CxMat,
    fwd_adj_left: CxMat,
    inv_left: CxMat,
    inv_right: CxMat,
    inv_adj_right: CxMat,
    inv_adj_left: CxMat,
}

impl Spectral {
    pub fn new(d: usize, n: usize, k_max: usize) -> Result<Self> {
        if k_max < 1 {
            return Err(Error::invalid("mode cap must be at least 1"));
        }
        if n < 2 * k_max {
            return Err(Error::invalid(format!(
                "grid is too coarse for the mode cap: need n >= {}, got {n}",
                2 * k_max
            )));
        }
        if d != 2 && d != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {d}")));
        }
        let p = modes_per_axis(k_max);
        let inv_n = 1.0 / n as f64;
        Ok(Spectral {
            d,
            n,
            p,
            fwd_right: phase(n, p, false, k_max, n, -1.0, inv_n),
            fwd_left: phase(p, n, true, k_max, n, -1.0, inv_n),
            fwd_adj_right: phase(p, n, true, k_max, n, 1.0, inv_n),
            fwd_adj_left: phase(n, p, false, k_max, n, 1.0, inv_n),
            inv_left: phase(n, p, false, k_max, n, 1.0, 1.0),
            inv_right: phase(p, n, true, k_max, n, 1.0, 1.0),
            inv_adj_right: phase(n, p, false, k_max, n, -1.0, 1.0),
            inv_adj_left: phase(p, n, true, k_max, n, -1.0, 1.0),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.p.pow(self.d as u32)
    }

    fn npts(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Real grid field (channel-major, `nch * n^d`) to retained modes,
    /// axes contracted x, then y, then z.
    fn contract(&self, field: &[f64], nch: usize, right: &CxMat, left: &CxMat) -> CxBuf {
        let (n, p, d) = (self.n, self.p, self.d);
        let npts = self.npts();
        debug_assert_eq!(field.len(), nch * npts);
        debug_assert_eq!((right.rows, right.cols), (n, p));
        debug_assert_eq!((left.rows, left.cols), (p, n));

        // x stage: all channels and slabs share one pair of real products.
        let rows = nch * npts / n;
        let mut a = CxBuf::zeros(rows * p);
        rgemm(rows, n, p, 1.0, field, &right.re, 0.0, &mut a.re);
        rgemm(rows, n, p, 1.0, field, &right.im, 0.0, &mut a.im);

        // y stage: per channel and z slab, kx + p*iy blocks of shape n x p.
        let zslabs = if d == 3 { n } else { 1 };
        let mut b = CxBuf::zeros(nch * zslabs * p * p);
        for blk in 0..nch * zslabs {
            let src = blk * n * p;
            let dst = blk * p * p;
            cgemm(
                p,
                n,
                p,
                (&left.re, &left.im),
                (&a.re[src..src + n * p], &a.im[src..src + n * p]),
                (&mut b.re[dst..dst + p * p], &mut b.im[dst..dst + p * p]),
            );
        }

        // z stage: per channel, kx + p*ky + p^2*iz viewed as n x p^2.
        let cm = if d == 3 {
            let mut c = CxBuf::zeros(nch * p * p * p);
            for ch in 0..nch {
                let src = ch * n * p * p;
                let dst = ch * p * p * p;
                cgemm(
                    p,
                    n,
                    p * p,
                    (&left.re, &left.im),
                    (&b.re[src..src + n * p * p], &b.im[src..src + n * p * p]),
                    (&mut c.re[dst..dst + p * p * p], &mut c.im[dst..dst + p * p * p]),
                );
            }
            c
        } else {
            b
        };

        // Channel-major to mode-major.
        let nm = self.num_modes();
        let mut out = CxBuf::zeros(nm * nch);
        for ch in 0..nch {
            for m in 0..nm {
                out.re[m * nch + ch] = cm.re[ch * nm + m];
                out.im[m * nch + ch] = cm.im[ch * nm + m];
            }
        }
        out
    }

    /// Retained modes (mode-major) to a real grid field, axes expanded
    /// z, then y, then x; only the real part of the result is formed.
    fn expand(&self, modes: &CxBuf, nch: usize, left: &CxMat, right: &CxMat) -> Vec<f64> {
        let (n, p, d) = (self.n, self.p, self.d);
        let npts = self.npts();
        let nm = self.num_modes();
        debug_assert_eq!(modes.len(), nm * nch);
        debug_assert_eq!((left.rows, left.cols), (n, p));
        debug_assert_eq!((right.rows, right.cols), (p, n));

        // Mode-major to channel-major.
        let mut cm = CxBuf::zeros(nch * nm);
        for ch in 0..nch {
            for m in 0..nm {
                cm.re[ch * nm + m] = modes.re[m * nch + ch];
                cm.im[ch * nm + m] = modes.im[m * nch + ch];
            }
        }

        // z stage: per channel, kz rows over p^2 columns.
        let b = if d == 3 {
            let mut b = CxBuf::zeros(nch * n * p * p);
            for ch in 0..nch {
                let src = ch * p * p * p;
                let dst = ch * n * p * p;
                cgemm(
                    n,
                    p,
                    p * p,
                    (&left.re, &left.im),
                    (&cm.re[src..src + p * p * p], &cm.im[src..src + p * p * p]),
                    (&mut b.re[dst..dst + n * p * p], &mut b.im[dst..dst + n * p * p]),
                );
            }
            b
        } else {
            cm
        };

        // y stage: per channel and z slab, ky rows over kx columns.
        let zslabs = if d == 3 { n } else { 1 };
        let mut c = CxBuf::zeros(nch * zslabs * n * p);
        for blk in 0..nch * zslabs {
            let src = blk * p * p;
            let dst = blk * n * p;
            cgemm(
                n,
                p,
                p,
                (&left.re, &left.im),
                (&b.re[src..src + p * p], &b.im[src..src + p * p]),
                (&mut c.re[dst..dst + n * p], &mut c.im[dst..dst + n * p]),
            );
        }

        // x stage, real part only.
        let rows = nch * npts / n;
        let mut out = vec![0.0; nch * npts];
        rgemm(rows, p, n, 1.0, &c.re, &right.re, 0.0, &mut out);
        rgemm(rows, p, n, -1.0, &c.im, &right.im, 1.0, &mut out);
        out
    }

    /// Truncated forward transform of a real field.
    pub fn forward(&self, field: &[f64], nch: usize) -> CxBuf {
        self.contract(field, nch, &self.fwd_right, &self.fwd_left)
    }

    /// Transpose of `forward` applied to a mode gradient (real part of
    /// the conjugate-transpose pipeline).
    pub fn forward_adjoint(&self, modes: &CxBuf, nch: usize) -> Vec<f64> {
        self.expand(modes, nch, &self.fwd_adj_left, &self.fwd_adj_right)
    }

    /// Inverse transform of retained modes onto the grid, real part.
    pub fn inverse(&self, modes: &CxBuf, nch: usize) -> Vec<f64> {
        self.expand(modes, nch, &self.inv_left, &self.inv_right)
    }

    /// Transpose of `inverse` applied to a real grid gradient.
    pub fn inverse_adjoint(&self, field: &[f64], nch: usize) -> CxBuf {
        self.contract(field, nch, &self.inv_adj_right, &self.inv_adj_left)
    }
}

/// Per-mode channel mixing `w_m = R_m v_m` with `R` stored as
/// `[mode][out][in]`, buffers mode-major.
pub(crate) fn mix_modes(r_re: &[f64], r_im: &[f64], v: &CxBuf, nm: usize, dv: usize) -> CxBuf {
    debug_assert_eq!(r_re.len(), nm * dv * dv);
    debug_assert_eq!(v.len(), nm * dv);
    let mut w = CxBuf::zeros(nm * dv);
    for m in 0..nm {
        let rb = m * dv * dv;
        let vb = m * dv;
        for o in 0..dv {
            let mut wr = 0.0;
            let mut wi = 0.0;
            for i in 0..dv {
                let rr = r_re[rb + o * dv + i];
                let ri = r_im[rb + o * dv + i];
                let vr = v.re[vb + i];
                let vi = v.im[vb + i];
                wr += rr * vr - ri * vi;
                wi += rr * vi + ri * vr;
            }
            w.re[vb + o] = wr;
            w.im[vb + o] = wi;
        }
    }
    w
}

/// Transpose of `mix_modes` in the real pairing: `g_v = R^H g_w`.
pub(crate) fn mix_modes_adjoint(r_re: &[f64], r_im: &[f64], g: &CxBuf, nm: usize, dv: usize) -> CxBuf {
    debug_assert_eq!(r_re.len(), nm * dv * dv);
    debug_assert_eq!(g.len(), nm * dv);
    let mut out = CxBuf::zeros(nm * dv);
    for m in 0..nm {
        let rb = m * dv * dv;
        let gb = m * dv;
        for i in 0..dv {
            let mut vr = 0.0;
            let mut vi = 0.0;
            for o in 0..dv {
                let rr = r_re[rb + o * dv + i];
                let ri = r_im[rb + o * dv + i];
                let gr = g.re[gb + o];
                let gi = g.im[gb + o];
                vr += rr * gr + ri * gi;
                vi += rr * gi - ri * gr;
            }
            out.re[gb + i] = vr;
            out.im[gb + i] = vi;
        }
    }
    out
}

/// Weight gradient of `mix_modes`: accumulates `g_w outer conj(v)` per
/// mode into the split `R` gradient planes.
pub(crate) fn mix_modes_grad(
    g: &CxBuf,
    v: &CxBuf,
    nm: usize,
    dv: usize,
    gr_re: &mut [f64],
    gr_im: &mut [f64],
) {
    debug_assert_eq!(gr_re.len(), nm * dv * dv);
    debug_assert_eq!(g.len(), nm * dv);
    debug_assert_eq!(v.len(), nm * dv);
    for m in 0..nm {
        let rb = m * dv * dv;
        let vb = m * dv;
        for o in 0..dv {
            let gr = g.re[vb + o];
            let gi = g.im[vb + o];
            for i in 0..dv {
                let vr = v.re[vb + i];
                let vi = v.im[vb + i];
                gr_re[rb + o * dv + i] += gr * vr + gi * vi;
                gr_im[rb + o * dv + i] += gi * vr - gr * vi;
            }
        }
    }
}

/// Band-limits `v` by the truncated transform pair and mixes the
/// retained modes with the complex weights `R` (`[mode][out][in]`,
/// split planes, full channel mixing per mode).
pub fn spectral_conv(v: &ChannelTensor, r_re: &[f64], r_im: &[f64], k_max: usize) -> Result<ChannelTensor> {
    let grid = v.grid;
    let dv = v.channels;
    let plan = Spectral::new(grid.d, grid.n, k_max)?;
    let nm = plan.num_modes();
    if r_re.len() != nm * dv * dv || r_im.len() != r_re.len() {
        return Err(Error::invalid(format!(
            "spectral weights hold {} + {} entries, expected {} per plane",
            r_re.len(),
            r_im.len(),
            nm * dv * dv
        )));
    }
    let mut flat = Vec::with_capacity(dv * grid.num_points());
    for c in 0..dv {
        flat.extend_from_slice(v.channel(c));
    }
    let modes = plan.forward(&flat, dv);
    let mixed = mix_modes(r_re, r_im, &modes, nm, dv);
    let out = plan.inverse(&mixed, dv);
    ChannelTensor::from_values(grid, dv, out)
}

/// Identity mixing weights: `R_m = I` at every retained mode.
pub fn identity_spectral_weights(d: usize, k_max: usize, dv: usize) -> (Vec<f64>, Vec<f64>) {
    let nm = num_modes(d, k_max);
    let mut re = vec![0.0; nm * dv * dv];
    let im = vec![0.0; nm * dv * dv];
    for m in 0..nm {
        for c in 0..dv {
            re[m * dv * dv + c * dv + c] = 1.0;
        }
    }
    (re, im)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn grid2(n: usize) -> GridSpec {
        GridSpec::new(0.0, 1.0, n, 2).unwrap()
    }

    /// Channel values defined per sample index, x-fastest.
    fn tensor_from_fn(grid: GridSpec, f: impl Fn(usize, usize, usize) -> f64) -> ChannelTensor {
        let n = grid.n;
        let mut vals = Vec::with_capacity(grid.num_points());
        if grid.d == 2 {
            for iy in 0..n {
                for ix in 0..n {
                    vals.push(f(ix, iy, 0));
                }
            }
        } else {
            for iz in 0..n {
                for iy in 0..n {
                    for ix in 0..n {
                        vals.push(f(ix, iy, iz));
                    }
                }
            }
        }
        ChannelTensor::single(grid, vals).unwrap()
    }

    #[test]
    fn constant_field_passes_through_identity_weights() {
        let grid = grid2(16);
        let mut v = ChannelTensor::zeros(grid, 2);
        v.channel_mut(0).fill(3.5);
        v.channel_mut(1).fill(-1.25);
        let (re, im) = identity_spectral_weights(2, 4, 2);
        let out = spectral_conv(&v, &re, &im, 4).unwrap();
        for c in 0..2 {
            for (a, b) in out.channel(c).iter().zip(v.channel(c)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mode_above_cap_is_annihilated() {
        let n = 64;
        let grid = grid2(n);
        let v = tensor_from_fn(grid, |ix, _, _| {
            (std::f64::consts::TAU * 13.0 * ix as f64 / n as f64).cos()
        });
        let (re, im) = identity_spectral_weights(2, 12, 1);
        let out = spectral_conv(&v, &re, &im, 12).unwrap();
        let max = out.channel(0).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max < 1e-12, "truncated mode leaked: {max}");
    }

    #[test]
    fn retained_mode_is_reproduced_exactly() {
        let n = 64;
        let grid = grid2(n);
        let v = tensor_from_fn(grid, |ix, iy, _| {
            (std::f64::consts::TAU * 3.0 * ix as f64 / n as f64).cos()
                + 0.5 * (std::f64::consts::TAU * 7.0 * iy as f64 / n as f64).sin()
        });
        let (re, im) = identity_spectral_weights(2, 12, 1);
        let out = spectral_conv(&v, &re, &im, 12).unwrap();
        for (a, b) in out.channel(0).iter().zip(v.channel(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_weights_give_a_projector() {
        for (d, n, k) in [(2usize, 16usize, 4usize), (3, 8, 3)] {
            let grid = GridSpec::new(0.0, 1.0, n, d).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(11);
            let vals: Vec<f64> = (0..grid.num_points()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = ChannelTensor::single(grid, vals).unwrap();
            let (re, im) = identity_spectral_weights(d, k, 1);
            let once = spectral_conv(&v, &re, &im, k).unwrap();
            let twice = spectral_conv(&once, &re, &im, k).unwrap();
            let mut max = 0.0f64;
            for (a, b) in twice.channel(0).iter().zip(once.channel(0)) {
                max = max.max((a - b).abs());
            }
            assert!(max < 1e-12, "d={d}: projector defect {max}");
        }
    }

    #[test]
    fn truncation_never_gains_energy() {
        let grid = grid2(24);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..8 {
            let vals: Vec<f64> = (0..grid.num_points()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v = ChannelTensor::single(grid, vals).unwrap();
            let (re, im) = identity_spectral_weights(2, 5, 1);
            let out = spectral_conv(&v, &re, &im, 5).unwrap();
            let e_in: f64 = v.channel(0).iter().map(|x| x * x).sum();
            let e_out: f64 = out.channel(0).iter().map(|x| x * x).sum();
            assert!(e_out <= e_in * (1.0 + 1e-12), "energy grew: {e_out} > {e_in}");
        }
    }

    #[test]
    fn adjoints_match_the_forward_maps() {
        // <F x, Y>_Re == <x, F^H Y> for both transform pipelines; this
        // is the identity the backward pass relies on.
        for (d, n, k) in [(2usize, 12usize, 3usize), (3, 8, 2)] {
            let plan = Spectral::new(d, n, k).unwrap();
            let nch = 2;
            let npts = n.pow(d as u32) * nch;
            let nm = plan.num_modes() * nch;
            let mut rng = ChaCha20Rng::seed_from_u64(77);
            let x: Vec<f64> = (0..npts).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut y = CxBuf::zeros(nm);
            for v in y.re.iter_mut().chain(y.im.iter_mut()) {
                *v = rng.random_range(-1.0..1.0);
            }

            let fx = plan.forward(&x, nch);
            let fhy = plan.forward_adjoint(&y, nch);
            let lhs: f64 = fx.re.iter().zip(&y.re).map(|(a, b)| a * b).sum::<f64>()
                + fx.im.iter().zip(&y.im).map(|(a, b)| a * b).sum::<f64>();
            let rhs: f64 = x.iter().zip(&fhy).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "forward adjoint: {lhs} vs {rhs}");

            let iy = plan.inverse(&y, nch);
            let ihx = plan.inverse_adjoint(&x, nch);
            let lhs: f64 = iy.iter().zip(&x).map(|(a, b)| a * b).sum();
            let rhs: f64 = ihx.re.iter().zip(&y.re).map(|(a, b)| a * b).sum::<f64>()
                + ihx.im.iter().zip(&y.im).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()), "inverse adjoint: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn mixing_adjoint_and_gradient_close_the_pairing() {
        let (nm, dv) = (9, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut rnd = |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let r_re = rnd(nm * dv * dv);
        let r_im = rnd(nm * dv * dv);
        let v = CxBuf { re: rnd(nm * dv), im: rnd(nm * dv) };
        let g = CxBuf { re: rnd(nm * dv), im: rnd(nm * dv) };

        // <R v, g> == <v, R^H g> in the real pairing.
        let rv = mix_modes(&r_re, &r_im, &v, nm, dv);
        let rhg = mix_modes_adjoint(&r_re, &r_im, &g, nm, dv);
        let lhs: f64 = rv.re.iter().zip(&g.re).map(|(a, b)| a * b).sum::<f64>()
            + rv.im.iter().zip(&g.im).map(|(a, b)| a * b).sum::<f64>();
        let rhs: f64 = v.re.iter().zip(&rhg.re).map(|(a, b)| a * b).sum::<f64>()
            + v.im.iter().zip(&rhg.im).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));

        // Directional derivative in R of <R v, g> equals the accumulated
        // weight gradient contracted with the direction.
        let mut gr_re = vec![0.0; nm * dv * dv];
        let mut gr_im = vec![0.0; nm * dv * dv];
        mix_modes_grad(&g, &v, nm, dv, &mut gr_re, &mut gr_im);
        let dir_re = rnd(nm * dv * dv);
        let dir_im = rnd(nm * dv * dv);
        let eps = 1e-6;
        let pert_re: Vec<f64> = r_re.iter().zip(&dir_re).map(|(a, b)| a + eps * b).collect();
        let pert_im: Vec<f64> = r_im.iter().zip(&dir_im).map(|(a, b)| a + eps * b).collect();
        let rv2 = mix_modes(&pert_re, &pert_im, &v, nm, dv);
        let f2: f64 = rv2.re.iter().zip(&g.re).map(|(a, b)| a * b).sum::<f64>()
            + rv2.im.iter().zip(&g.im).map(|(a, b)| a * b).sum::<f64>();
        let fd = (f2 - lhs) / eps;
        let analytic: f64 = gr_re.iter().zip(&dir_re).map(|(a, b)| a * b).sum::<f64>()
            + gr_im.iter().zip(&dir_im).map(|(a, b)| a * b).sum::<f64>();
        assert!((fd - analytic).abs() < 1e-5 * (1.0 + analytic.abs()), "{fd} vs {analytic}");
    }

    #[test]
    fn rejects_bad_shapes() {
        let grid = grid2(8);
        let v = ChannelTensor::zeros(grid, 1);
        let (re, im) = identity_spectral_weights(2, 2, 1);
        assert!(spectral_conv(&v, &re, &im, 5).is_err(), "cap above n/2 must fail");
        assert!(spectral_conv(&v, &re[1..].to_vec(), &im, 2).is_err(), "short weights must fail");
    }
}
