//! Uniform canvas grids and multi-channel fields sampled on them.
//!
//! Every field in this crate lives on a tensor-product grid over the cube
//! `[s, t]^d` with `n` points per axis, `d` in {2, 3}. Grid points are
//! enumerated with the x index varying fastest:
//! `K = ix + n*iy` in 2D and `K = ix + n*(iy + n*iz)` in 3D.
//! Coordinates are always computed as `s + k*h` with `h = (t-s)/(n-1)` so
//! that identical indices reproduce identical coordinates bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in canvas coordinates. 2D callers leave the last entry at zero.
pub type Point = [f64; 3];

/// Tensor-product grid over `[s, t]^d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub s: f64,
    pub t: f64,
    /// Points per axis.
    pub n: usize,
    /// Spatial dimension, 2 or 3.
    pub d: usize,
}

impl GridSpec {
    pub fn new(s: f64, t: f64, n: usize, d: usize) -> Result<Self> {
        if !(s.is_finite() && t.is_finite() && t > s) {
            return Err(Error::invalid(format!("canvas [{s}, {t}] is empty or not finite")));
        }
        if n < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points per axis, got {n}")));
        }
        if d != 2 && d != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {d}")));
        }
        Ok(GridSpec { s, t, n, d })
    }

    /// Grid spacing `(t - s) / (n - 1)`.
    #[inline]
    pub fn h(&self) -> f64 {
        (self.t - self.s) / (self.n - 1) as f64
    }

    #[inline]
    pub fn extent(&self) -> f64 {
        self.t - self.s
    }

    #[inline]
    pub fn num_points(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Cells per axis.
    #[inline]
    pub fn cells_per_axis(&self) -> usize {
        self.n - 1
    }

    #[inline]
    pub fn num_cells(&self) -> usize {
        (self.n - 1).pow(self.d as u32)
    }

    /// Volume of one grid cell, `h^d`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    /// Linear index of the point `(ix, iy, iz)`; `iz` is ignored in 2D.
    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        debug_assert!(ix < self.n && iy < self.n);
        if self.d == 2 {
            ix + self.n * iy
        } else {
            ix + self.n * (iy + self.n * iz)
        }
    }

    /// Multi-index of the linear point index `k`, as `[ix, iy, iz]`.
    #[inline]
    pub fn multi_index(&self, k: usize) -> [usize; 3] {
        debug_assert!(k < self.num_points());
        let ix = k % self.n;
        let rest = k / self.n;
        if self.d == 2 {
            [ix, rest, 0]
        } else {
            [ix, rest % self.n, rest / self.n]
        }
    }

    /// Coordinates of the linear point index `k`.
    #[inline]
    pub fn point(&self, k: usize) -> Point {
        let [ix, iy, iz] = self.multi_index(k);
        let h = self.h();
        let mut p = [self.s + ix as f64 * h, self.s + iy as f64 * h, 0.0];
        if self.d == 3 {
            p[2] = self.s + iz as f64 * h;
        }
        p
    }

    /// Linear cell index of `(cx, cy, cz)` on the `(n-1)^d` cell lattice.
    #[inline]
    pub fn cell_index(&self, cx: usize, cy: usize, cz: usize) -> usize {
        let m = self.n - 1;
        debug_assert!(cx < m && cy < m);
        if self.d == 2 {
            cx + m * cy
        } else {
            cx + m * (cy + m * cz)
        }
    }

    /// Multi-index of the linear cell index `c`.
    #[inline]
    pub fn cell_multi_index(&self, c: usize) -> [usize; 3] {
        let m = self.n - 1;
        debug_assert!(c < self.num_cells());
        let cx = c % m;
        let rest = c / m;
        if self.d == 2 {
            [cx, rest, 0]
        } else {
            [cx, rest % m, rest / m]
        }
    }

    /// Lower corner of cell `c`.
    #[inline]
    pub fn cell_corner(&self, c: usize) -> Point {
        let [cx, cy, cz] = self.cell_multi_index(c);
        let h = self.h();
        let mut p = [self.s + cx as f64 * h, self.s + cy as f64 * h, 0.0];
        if self.d == 3 {
            p[2] = self.s + cz as f64 * h;
        }
        p
    }

    /// Center of cell `c`.
    #[inline]
    pub fn cell_center(&self, c: usize) -> Point {
        let h = self.h();
        let mut p = self.cell_corner(c);
        for x in p.iter_mut().take(self.d) {
            *x += 0.5 * h;
        }
        p
    }

    /// Whether `p` lies in the closed canvas cube.
    pub fn contains(&self, p: Point) -> bool {
        p.iter().take(self.d).all(|&x| x >= self.s && x <= self.t)
    }

    /// Cell containing `p`. Points exactly on an interior cell face belong
    /// to the adjacent cell with the smaller linear index.
    pub fn cell_of_point(&self, p: Point) -> Result<usize> {
        if !self.contains(p) {
            return Err(Error::invalid(format!(
                "point ({}, {}, {}) lies outside the canvas [{}, {}]^{}",
                p[0], p[1], p[2], self.s, self.t, self.d
            )));
        }
        let h = self.h();
        let m = self.n - 1;
        let mut idx = [0usize; 3];
        for a in 0..self.d {
            let u = (p[a] - self.s) / h;
            let mut i = u.floor() as isize;
            // Exact hit on an interior face: take the lower cell.
            if i as f64 == u && i > 0 {
                i -= 1;
            }
            idx[a] = (i.max(0) as usize).min(m - 1);
        }
        Ok(self.cell_index(idx[0], idx[1], idx[2]))
    }

    /// Point indices of the `2^d` corners of cell `c`, x fastest.
    pub fn cell_corner_points(&self, c: usize) -> Vec<usize> {
        let [cx, cy, cz] = self.cell_multi_index(c);
        let mut out = Vec::with_capacity(1 << self.d);
        let dz_range = if self.d == 3 { 2 } else { 1 };
        for dz in 0..dz_range {
            for dy in 0..2 {
                for dx in 0..2 {
                    out.push(self.index(cx + dx, cy + dy, cz + dz));
                }
            }
        }
        out
    }
}

/// Multi-channel scalar field on a grid, stored channel-major: channel `c`
/// occupies `values[c*n^d .. (c+1)*n^d]` in point order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    pub grid: GridSpec,
    pub channels: usize,
    pub values: Vec<f64>,
}

impl ChannelTensor {
    pub fn zeros(grid: GridSpec, channels: usize) -> Self {
        ChannelTensor { grid, channels, values: vec![0.0; channels * grid.num_points()] }
    }

    pub fn from_values(grid: GridSpec, channels: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != channels * grid.num_points() {
            return Err(Error::invalid(format!(
                "channel tensor needs {} values for {} channels on {} points, got {}",
                channels * grid.num_points(),
                channels,
                grid.num_points(),
                values.len()
            )));
        }
        Ok(ChannelTensor { grid, channels, values })
    }

    /// Single-channel tensor wrapping a field in point order.
    pub fn single(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::from_values(grid, 1, values)
    }

    #[inline]
    pub fn channel(&self, c: usize) -> &[f64] {
        let np = self.grid.num_points();
        &self.values[c * np..(c + 1) * np]
    }

    #[inline]
    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let np = self.grid.num_points();
        &mut self.values[c * np..(c + 1) * np]
    }

    /// Multilinear interpolation of channel `c` at a point in the canvas.
    /// Values are clamped to the canvas edge cells, so querying exactly on
    /// the boundary is safe.
    pub fn interp(&self, c: usize, p: Point) -> f64 {
        let g = &self.grid;
        let h = g.h();
        let vals = self.channel(c);
        let mut i0 = [0usize; 3];
        let mut w = [0.0f64; 3];
        for a in 0..g.d {
            let u = ((p[a] - g.s) / h).clamp(0.0, (g.n - 1) as f64);
            let i = (u.floor() as usize).min(g.n - 2);
            i0[a] = i;
            w[a] = u - i as f64;
        }
        if g.d == 2 {
            let v00 = vals[g.index(i0[0], i0[1], 0)];
            let v10 = vals[g.index(i0[0] + 1, i0[1], 0)];
            let v01 = vals[g.index(i0[0], i0[1] + 1, 0)];
            let v11 = vals[g.index(i0[0] + 1, i0[1] + 1, 0)];
            let bot = v00 + w[0] * (v10 - v00);
            let top = v01 + w[0] * (v11 - v01);
            bot + w[1] * (top - bot)
        } else {
            let mut acc = 0.0;
            for dz in 0..2 {
                let wz = if dz == 0 { 1.0 - w[2] } else { w[2] };
                for dy in 0..2 {
                    let wy = if dy == 0 { 1.0 - w[1] } else { w[1] };
                    for dx in 0..2 {
                        let wx = if dx == 0 { 1.0 - w[0] } else { w[0] };
                        acc += wx * wy * wz * vals[g.index(i0[0] + dx, i0[1] + dy, i0[2] + dz)];
                    }
                }
            }
            acc
        }
    }

    /// Appends the channels of `other`; grids must match.
    pub fn stack(&mut self, other: &ChannelTensor) -> Result<()> {
        if other.grid != self.grid {
            return Err(Error::invalid("cannot stack channels sampled on different grids"));
        }
        self.values.extend_from_slice(&other.values);
        self.channels += other.channels;
        Ok(())
    }

    /// Concatenates a non-empty list of tensors along the channel axis.
    pub fn stacked(parts: &[ChannelTensor]) -> Result<ChannelTensor> {
        let mut iter = parts.iter();
        let mut out = iter
            .next()
            .ok_or_else(|| Error::invalid("cannot stack an empty channel list"))?
            .clone();
        for part in iter {
            out.stack(part)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_counts() {
        let g = GridSpec::new(0.0, 1.0, 5, 2).unwrap();
        assert_eq!(g.h(), 0.25);
        assert_eq!(g.num_points(), 25);
        assert_eq!(g.num_cells(), 16);
        let g3 = GridSpec::new(-0.5, 0.5, 3, 3).unwrap();
        assert_eq!(g3.num_points(), 27);
        assert_eq!(g3.num_cells(), 8);
    }

    #[test]
    fn rejects_degenerate_specs() {
        assert!(GridSpec::new(1.0, 0.0, 5, 2).is_err());
        assert!(GridSpec::new(0.0, 1.0, 1, 2).is_err());
        assert!(GridSpec::new(0.0, 1.0, 5, 4).is_err());
    }

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::new(0.0, 1.0, 4, 3).unwrap();
        for k in 0..g.num_points() {
            let [ix, iy, iz] = g.multi_index(k);
            assert_eq!(g.index(ix, iy, iz), k);
        }
    }

    #[test]
    fn point_coordinates_exact_form() {
        let g = GridSpec::new(0.0, 1.0, 5, 2).unwrap();
        let p = g.point(g.index(3, 2, 0));
        assert_eq!(p[0], 0.0 + 3.0 * g.h());
        assert_eq!(p[1], 0.0 + 2.0 * g.h());
    }

    #[test]
    fn face_points_go_to_lower_cell() {
        let g = GridSpec::new(0.0, 1.0, 5, 2).unwrap();
        // (0.25, 0.1) sits exactly on the face between cells (0,0) and (1,0).
        let c = g.cell_of_point([0.25, 0.1, 0.0]).unwrap();
        assert_eq!(c, g.cell_index(0, 0, 0));
        // Interior points resolve normally.
        let c = g.cell_of_point([0.3, 0.1, 0.0]).unwrap();
        assert_eq!(c, g.cell_index(1, 0, 0));
        // The far corner of the canvas still maps to the last cell.
        let c = g.cell_of_point([1.0, 1.0, 0.0]).unwrap();
        assert_eq!(c, g.cell_index(3, 3, 0));
        assert!(g.cell_of_point([1.1, 0.0, 0.0]).is_err());
    }

    #[test]
    fn corner_points_order() {
        let g = GridSpec::new(0.0, 1.0, 3, 2).unwrap();
        let c = g.cell_index(1, 1, 0);
        assert_eq!(g.cell_corner_points(c), vec![g.index(1, 1, 0), g.index(2, 1, 0), g.index(1, 2, 0), g.index(2, 2, 0)]);
    }

    #[test]
    fn channel_layout() {
        let g = GridSpec::new(0.0, 1.0, 3, 2).unwrap();
        let mut t = ChannelTensor::zeros(g, 2);
        t.channel_mut(1)[4] = 7.0;
        assert_eq!(t.values[9 + 4], 7.0);
        assert_eq!(t.channel(0).len(), 9);
        let other = ChannelTensor::zeros(g, 1);
        t.stack(&other).unwrap();
        assert_eq!(t.channels, 3);
    }
}
