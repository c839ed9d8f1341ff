//! Coefficient output head: turns per-cell expansion coefficients into
//! a field on a finer grid, differentiably.

use crate::error::{Error, Result};
use crate::grid::{ChannelTensor, GridSpec};
use crate::problem::InterfaceProblem;
use crate::tfpm::{basis_dim, TfpmField, MAX_EXP_SCALE};

/// Everything a coefficient prediction needs besides the coefficients:
/// the per-cell decay rate, particular value, and region label, frozen
/// at cell centers exactly as the matching solver freezes them. The
/// network predicts only the homogeneous coefficients; this context is
/// computed from the known problem data.
#[derive(Debug, Clone)]
pub struct CellContext {
    pub grid: GridSpec,
    /// Per-cell `sqrt(b / a)`.
    pub mu: Vec<f64>,
    /// Per-cell `f / b`.
    pub particular: Vec<f64>,
    /// Region label of each cell center.
    pub labels: Vec<usize>,
}

impl CellContext {
    pub fn from_problem(problem: &InterfaceProblem, grid: &GridSpec) -> Result<Self> {
        problem.check_shapes()?;
        let geom = &problem.geometry;
        if grid.d != geom.d || grid.s != geom.s || grid.t != geom.t {
            return Err(Error::invalid("grid canvas does not match the geometry canvas"));
        }
        let num_cells = grid.num_cells();
        let mut mu = Vec::with_capacity(num_cells);
        let mut particular = Vec::with_capacity(num_cells);
        let mut labels = Vec::with_capacity(num_cells);
        for c in 0..num_cells {
            let center = grid.cell_center(c);
            let label = geom.region_label(center);
            let a = problem.a.eval(center, label);
            let b = problem.b.eval(center, label);
            let f = problem.f.eval(center, label);
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!("diffusion must be positive, got {a} in cell {c}")));
            }
            if !(b > 0.0) || !b.is_finite() {
                return Err(Error::unsupported(format!(
                    "exponential basis needs a positive reaction coefficient, got {b} in cell {c}"
                )));
            }
            mu.push((b / a).sqrt());
            particular.push(f / b);
            labels.push(label);
        }
        let ctx = CellContext { grid: *grid, mu, particular, labels };
        ctx.validate()?;
        Ok(ctx)
    }

    /// Strips the coefficients off a solved field.
    pub fn from_field(field: &TfpmField) -> Self {
        CellContext {
            grid: field.grid,
            mu: field.mu.clone(),
            particular: field.particular.clone(),
            labels: field.labels.clone(),
        }
    }

    /// Context on `grid` taken from a field solved on a different grid of
    /// the same canvas: each cell copies the data of the source cell
    /// holding its center. Exact whenever the source data is constant
    /// over each target cell.
    pub fn from_field_on(field: &TfpmField, grid: &GridSpec) -> Result<Self> {
        if *grid == field.grid {
            return Ok(Self::from_field(field));
        }
        let fg = &field.grid;
        if grid.d != fg.d || grid.s != fg.s || grid.t != fg.t {
            return Err(Error::invalid("context grid does not share the field's canvas"));
        }
        let nc = grid.num_cells();
        let mut mu = Vec::with_capacity(nc);
        let mut particular = Vec::with_capacity(nc);
        let mut labels = Vec::with_capacity(nc);
        for c in 0..nc {
            let fc = fg.cell_of_point(grid.cell_center(c))?;
            mu.push(field.mu[fc]);
            particular.push(field.particular[fc]);
            labels.push(field.labels[fc]);
        }
        let ctx = CellContext { grid: *grid, mu, particular, labels };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn validate(&self) -> Result<()> {
        let nc = self.num_cells();
        if self.mu.len() != nc || self.particular.len() != nc || self.labels.len() != nc {
            return Err(Error::invalid("cell context arrays do not match the cell count"));
        }
        let h = self.grid.h();
        for (c, &m) in self.mu.iter().enumerate() {
            if !(m > 0.0) || !m.is_finite() {
                return Err(Error::invalid(format!("decay rate must be positive, got {m} in cell {c}")));
            }
            if m * h > MAX_EXP_SCALE {
                return Err(Error::unsupported(format!(
                    "mu * h = {:.3} exceeds the stable evaluation range",
                    m * h
                )));
            }
        }
        if self.particular.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("cell context holds a non-finite particular value"));
        }
        Ok(())
    }

    /// Pairs the context with predicted coefficients (cell-major,
    /// `basis_dim` per cell).
    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<TfpmField> {
        self.validate()?;
        let nb = basis_dim(self.grid.d);
        if coeffs.len() != nb * self.num_cells() {
            return Err(Error::invalid(format!(
                "expected {} coefficients, got {}",
                nb * self.num_cells(),
                coeffs.len()
            )));
        }
        Ok(TfpmField {
            grid: self.grid,
            mu: self.mu.clone(),
            particular: self.particular.clone(),
            labels: self.labels.clone(),
            coeffs,
        })
    }
}

/// Evaluates predicted coefficients on `fine` through the cell-local
/// exponential expansion. The map is linear in the coefficients, so its
/// gradient is exactly the basis factors (`reconstruct_backward`).
pub fn reconstruct_head(coeffs: &[f64], ctx: &CellContext, fine: &GridSpec) -> Result<ChannelTensor> {
    let field = ctx.with_coeffs(coeffs.to_vec())?;
    let vals = field.sample_on(fine)?;
    ChannelTensor::single(*fine, vals)
}

/// Gradient of `reconstruct_head` with respect to the coefficients:
/// scatters each fine-point cotangent through the owning cell's basis.
pub(crate) fn reconstruct_backward(field: &TfpmField, fine: &GridSpec, g_fine: &[f64]) -> Vec<f64> {
    let nb = basis_dim(field.grid.d);
    let mut g_coeffs = vec![0.0; nb * field.grid.num_cells()];
    for k in 0..fine.num_points() {
        let g = g_fine[k];
        if g == 0.0 {
            continue;
        }
        let (c, basis) = field.basis_at(fine.point(k));
        for b in 0..nb {
            g_coeffs[c * nb + b] += g * basis[b];
        }
    }
    g_coeffs
}

/// Cell coefficients from grid-point channels: the value for a cell is
/// the mean of its 2^d corner values, channel by channel. Input is
/// channel-major on grid points; output is cell-major.
pub(crate) fn cell_means(grid: &GridSpec, point_vals: &[f64], channels: usize) -> Vec<f64> {
    let npts = grid.num_points();
    debug_assert_eq!(point_vals.len(), channels * npts);
    let num_cells = grid.num_cells();
    let scale = 1.0 / (1usize << grid.d) as f64;
    let mut out = vec![0.0; num_cells * channels];
    for c in 0..num_cells {
        let corners = grid.cell_corner_points(c);
        for j in 0..channels {
            let mut acc = 0.0;
            for &pt in &corners {
                acc += point_vals[j * npts + pt];
            }
            out[c * channels + j] = acc * scale;
        }
    }
    out
}

/// Transpose of `cell_means`: spreads cell cotangents back to corners.
pub(crate) fn cell_means_backward(grid: &GridSpec, g_cells: &[f64], channels: usize) -> Vec<f64> {
    let npts = grid.num_points();
    let num_cells = grid.num_cells();
    debug_assert_eq!(g_cells.len(), num_cells * channels);
    let scale = 1.0 / (1usize << grid.d) as f64;
    let mut out = vec![0.0; channels * npts];
    for c in 0..num_cells {
        let corners = grid.cell_corner_points(c);
        for j in 0..channels {
            let g = g_cells[c * channels + j] * scale;
            for &pt in &corners {
                out[j * npts + pt] += g;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Geometry;
    use crate::problem::InterfaceProblem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn flat_context(n: usize) -> CellContext {
        let grid = GridSpec::new(0.0, 1.0, n, 2).unwrap();
        let nc = grid.num_cells();
        CellContext {
            grid,
            mu: vec![1.0; nc],
            particular: vec![1.0; nc],
            labels: vec![1; nc],
        }
    }

    #[test]
    fn zero_coefficients_reproduce_the_particular_value() {
        let ctx = flat_context(6);
        let fine = GridSpec::new(0.0, 1.0, 21, 2).unwrap();
        let nb = basis_dim(2);
        let out = reconstruct_head(&vec![0.0; nb * ctx.num_cells()], &ctx, &fine).unwrap();
        assert!(out.channel(0).iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn context_restriction_samples_the_holding_cell() {
        let fine = GridSpec::new(0.0, 1.0, 9, 2).unwrap();
        let nc = fine.num_cells();
        // Distinct per-cell data so a wrong lookup is visible.
        let field = TfpmField {
            grid: fine,
            mu: (0..nc).map(|c| 1.0 + 0.01 * c as f64).collect(),
            particular: (0..nc).map(|c| c as f64).collect(),
            labels: (0..nc).map(|c| 1 + c % 2).collect(),
            coeffs: vec![0.0; basis_dim(2) * nc],
        };
        let coarse = GridSpec::new(0.0, 1.0, 5, 2).unwrap();
        let ctx = CellContext::from_field_on(&field, &coarse).unwrap();
        for c in 0..coarse.num_cells() {
            let fc = fine.cell_of_point(coarse.cell_center(c)).unwrap();
            assert_eq!(ctx.mu[c], field.mu[fc]);
            assert_eq!(ctx.particular[c], field.particular[fc]);
            assert_eq!(ctx.labels[c], field.labels[fc]);
        }
        // Same grid degenerates to a plain copy.
        let same = CellContext::from_field_on(&field, &fine).unwrap();
        assert_eq!(same.mu, field.mu);
        // A different canvas is refused.
        let shifted = GridSpec::new(0.1, 1.1, 5, 2).unwrap();
        assert!(CellContext::from_field_on(&field, &shifted).is_err());
    }

    #[test]
    fn coarse_cells_fill_a_fine_grid() {
        let ctx = flat_context(21);
        let fine = GridSpec::new(0.0, 1.0, 101, 2).unwrap();
        let nb = basis_dim(2);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let coeffs: Vec<f64> =
            (0..nb * ctx.num_cells()).map(|_| rng.random_range(-0.1..0.1)).collect();
        let out = reconstruct_head(&coeffs, &ctx, &fine).unwrap();
        assert_eq!(out.grid.n, 101);
        assert!(out.channel(0).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn reconstruction_gradient_matches_finite_differences() {
        let ctx = flat_context(5);
        let fine = GridSpec::new(0.0, 1.0, 17, 2).unwrap();
        let nb = basis_dim(2);
        let ncoef = nb * ctx.num_cells();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let coeffs: Vec<f64> = (0..ncoef).map(|_| rng.random_range(-0.5..0.5)).collect();
        // Scalar functional: weighted sum of the fine field.
        let w: Vec<f64> = (0..fine.num_points()).map(|_| rng.random_range(-1.0..1.0)).collect();

        let field = ctx.with_coeffs(coeffs.clone()).unwrap();
        let g = reconstruct_backward(&field, &fine, &w);

        let eval = |c: &[f64]| -> f64 {
            let out = reconstruct_head(c, &ctx, &fine).unwrap();
            out.channel(0).iter().zip(&w).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        for idx in [0usize, 7, ncoef / 2, ncoef - 1] {
            let mut plus = coeffs.clone();
            plus[idx] += eps;
            let mut minus = coeffs.clone();
            minus[idx] -= eps;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let rel = (fd - g[idx]).abs() / g[idx].abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-5, "coefficient {idx}: fd {fd} vs analytic {}", g[idx]);
        }
    }

    #[test]
    fn corner_mean_roundtrip_is_the_exact_transpose() {
        let grid = GridSpec::new(0.0, 1.0, 7, 2).unwrap();
        let channels = 4;
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let x: Vec<f64> =
            (0..channels * grid.num_points()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> =
            (0..channels * grid.num_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fx = cell_means(&grid, &x, channels);
        let bty = cell_means_backward(&grid, &y, channels);
        let lhs: f64 = fx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&bty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn context_from_problem_matches_solver_freezing() {
        let geom = Geometry::new(0.0, 1.0, 2, crate::geometry::Outer::Canvas, vec![]).unwrap();
        let p = InterfaceProblem::with_constants(geom, 2.0, 8.0, 4.0, 0.0, vec![], vec![]);
        let grid = GridSpec::new(0.0, 1.0, 5, 2).unwrap();
        let ctx = CellContext::from_problem(&p, &grid).unwrap();
        assert!(ctx.mu.iter().all(|&m| (m - 2.0).abs() < 1e-14));
        assert!(ctx.particular.iter().all(|&v| (v - 0.5).abs() < 1e-14));
        assert!(ctx.labels.iter().all(|&l| l == 1));
    }

    #[test]
    fn nonpositive_decay_is_rejected() {
        let mut ctx = flat_context(4);
        ctx.mu[3] = 0.0;
        let nb = basis_dim(2);
        let fine = ctx.grid;
        assert!(reconstruct_head(&vec![0.0; nb * ctx.num_cells()], &ctx, &fine).is_err());
    }
}
