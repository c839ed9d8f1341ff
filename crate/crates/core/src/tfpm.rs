//! Cell-local exponential basis solver for the interface problem.
//!
//! The canvas is split into uniform cells. Within each cell the
//! coefficients are frozen at the cell-center values, so the operator
//! `-a lap(u) + b u` has exact local solutions spanned by a constant
//! particular part `f / b` and the exponentials `exp(+-mu xhat_axis)`
//! with `mu = sqrt(b / a)`, in coordinates `xhat` measured from the
//! cell's lower corner. Neighboring expansions are stitched by matching
//! value and normal flux at face midpoints; faces whose cells sit in
//! different regions impose the prescribed jumps instead, and canvas
//! boundary faces pin the value to the Dirichlet data.
//!
//! Per cell there are `2 d` coefficients and the face equations balance
//! exactly, so the system is square: a 2 x 2 cell split in 2d yields 16
//! unknowns from 8 matching plus 8 boundary equations.

use crate::error::{Error, Result};
use crate::geometry::Outer;
use crate::grid::{GridSpec, Point};
use crate::linalg::{BandMatrix, BandSolver};
use crate::problem::InterfaceProblem;

/// Cap on `mu * h`; beyond this the exponentials spread over enough
/// orders of magnitude that the matched system loses all accuracy.
pub const MAX_EXP_SCALE: f64 = 30.0;

/// Piecewise exponential field: the solver output, and the quantity a
/// coefficient-predicting model regresses.
#[derive(Debug, Clone, PartialEq)]
pub struct TfpmField {
    pub grid: GridSpec,
    /// Per-cell `sqrt(b / a)`.
    pub mu: Vec<f64>,
    /// Per-cell particular value `f / b`.
    pub particular: Vec<f64>,
    /// Region label of each cell center.
    pub labels: Vec<usize>,
    /// `basis_dim * num_cells` expansion coefficients, cell-major, basis
    /// order `[exp(+mu xhat), exp(-mu xhat), exp(+mu yhat), ...]`.
    pub coeffs: Vec<f64>,
}

/// Expansion length per cell: one exponential pair per axis.
pub fn basis_dim(d: usize) -> usize {
    2 * d
}

impl TfpmField {
    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    /// Basis factors of cell `c` at `p`, paired index-for-index with
    /// `coeffs[c * basis_dim ..]`. Local coordinates are clamped to one
    /// cell width beyond the cell so evaluation never overflows, which
    /// also makes the factors the exact coefficient sensitivities of
    /// `eval_in_cell`.
    pub fn cell_basis(&self, c: usize, p: Point) -> [f64; 6] {
        let d = self.grid.d;
        let corner = self.grid.cell_corner(c);
        let h = self.grid.h();
        let mu = self.mu[c];
        let mut out = [0.0; 6];
        for axis in 0..d {
            let local = (p[axis] - corner[axis]).clamp(-h, 2.0 * h);
            let e = (mu * local).exp();
            out[2 * axis] = e;
            out[2 * axis + 1] = 1.0 / e;
        }
        out
    }

    /// Owning cell and basis factors for a canvas point, with the same
    /// clamping as `eval`.
    pub fn basis_at(&self, p: Point) -> (usize, [f64; 6]) {
        let mut q = p;
        for a in 0..self.grid.d {
            q[a] = q[a].clamp(self.grid.s, self.grid.t);
        }
        let c = self.grid.cell_of_point(q).expect("clamped point is on the canvas");
        (c, self.cell_basis(c, q))
    }

    /// Value of cell `c`'s expansion at `p` (which need not lie in the
    /// cell; the expansion extends analytically).
    pub fn eval_in_cell(&self, c: usize, p: Point) -> f64 {
        let nb = basis_dim(self.grid.d);
        let basis = self.cell_basis(c, p);
        let mut v = self.particular[c];
        for b in 0..nb {
            v += self.coeffs[c * nb + b] * basis[b];
        }
        v
    }

    /// Value at `p`, using the expansion of the cell containing it.
    /// Points on interior faces belong to the lower cell; points off the
    /// canvas are clamped onto it first.
    pub fn eval(&self, p: Point) -> f64 {
        let mut q = p;
        for a in 0..self.grid.d {
            q[a] = q[a].clamp(self.grid.s, self.grid.t);
        }
        let c = self.grid.cell_of_point(q).expect("clamped point is on the canvas");
        self.eval_in_cell(c, q)
    }

    /// Samples the field at every point of `target`, which must span the
    /// same canvas.
    pub fn sample_on(&self, target: &GridSpec) -> Result<Vec<f64>> {
        let g = &self.grid;
        if target.d != g.d || target.s != g.s || target.t != g.t {
            return Err(Error::invalid("sampling grid spans a different canvas"));
        }
        Ok((0..target.num_points())
            .map(|k| self.eval(target.point(k)))
            .collect())
    }
}

#[derive(Debug, Clone, Copy)]
struct CellData {
    a: f64,
    mu: f64,
    particular: f64,
    label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssemblyStats {
    pub unknowns: usize,
    pub matching_rows: usize,
    pub boundary_rows: usize,
}

/// Assembled matching system, ready to factor.
pub struct TfpmSystem {
    pub matrix: BandMatrix,
    pub rhs: Vec<f64>,
    pub stats: AssemblyStats,
    grid: GridSpec,
    cells: Vec<CellData>,
}

#[inline]
fn basis_val(mu: f64, local: &[f64; 3], b: usize) -> f64 {
    let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
    (sign * mu * local[b / 2]).exp()
}

#[inline]
fn basis_normal_deriv(mu: f64, local: &[f64; 3], b: usize, axis: usize) -> f64 {
    if b / 2 != axis {
        return 0.0;
    }
    let sign = if b % 2 == 0 { 1.0 } else { -1.0 };
    sign * mu * (sign * mu * local[axis]).exp()
}

pub fn assemble(problem: &InterfaceProblem, grid: &GridSpec) -> Result<TfpmSystem> {
    problem.check_shapes()?;
    let geom = &problem.geometry;
    if !matches!(geom.outer, Outer::Canvas) {
        return Err(Error::unsupported(
            "local basis matching needs the full canvas as domain; clip afterwards instead",
        ));
    }
    if grid.d != geom.d || grid.s != geom.s || grid.t != geom.t {
        return Err(Error::invalid("grid canvas does not match the geometry canvas"));
    }
    let d = grid.d;
    let nb = basis_dim(d);
    let m = grid.cells_per_axis();
    let num_cells = grid.num_cells();
    let h = grid.h();

    let mut cells = Vec::with_capacity(num_cells);
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
        let mu = (b / a).sqrt();
        if mu * h > MAX_EXP_SCALE {
            return Err(Error::unsupported(format!(
                "mu * h = {:.3} exceeds the stable matching range",
                mu * h
            )));
        }
        cells.push(CellData { a, mu, particular: f / b, label });
    }

    // Triplet assembly first; the exact band profile is only known after
    // every equation has been laid out.
    let unknowns = nb * num_cells;
    let mut tr_rows: Vec<usize> = Vec::new();
    let mut tr_cols: Vec<usize> = Vec::new();
    let mut tr_vals: Vec<f64> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut matching_rows = 0usize;
    let mut boundary_rows = 0usize;

    let push = |r: usize, c: usize, v: f64, tr_rows: &mut Vec<usize>, tr_cols: &mut Vec<usize>, tr_vals: &mut Vec<f64>| {
        tr_rows.push(r);
        tr_cols.push(c);
        tr_vals.push(v);
    };

    let strides = [1usize, m, m * m];
    for c in 0..num_cells {
        let mi = grid.cell_multi_index(c);
        let corner = grid.cell_corner(c);
        for axis in 0..d {
            // Face midpoint on this cell's lower side along `axis`.
            let mut p: Point = [0.0; 3];
            let mut local_here: [f64; 3] = [0.0; 3];
            for a2 in 0..d {
                if a2 == axis {
                    p[a2] = corner[a2];
                    local_here[a2] = 0.0;
                } else {
                    p[a2] = corner[a2] + 0.5 * h;
                    local_here[a2] = 0.5 * h;
                }
            }
            if mi[axis] > 0 {
                let cl = c - strides[axis];
                let mut local_nb = local_here;
                local_nb[axis] = h;
                let low = &cells[cl];
                let high = &cells[c];
                let (jump_u, jump_q) = if low.label == high.label {
                    (0.0, 0.0)
                } else {
                    let idx = low.label.max(high.label) - 2;
                    if idx >= problem.alpha.len() {
                        return Err(Error::geometry(format!(
                            "face between labels {} and {} maps past the interface list",
                            low.label, high.label
                        )));
                    }
                    // [u] = u_in - u_out; the deeper label is the inner
                    // side. The flux jump is orientation-free.
                    let s = if low.label > high.label { 1.0 } else { -1.0 };
                    (s * problem.alpha[idx], problem.beta[idx])
                };
                // Value: u_low(p) - u_high(p) = jump_u.
                let r = rhs.len();
                for b in 0..nb {
                    push(r, cl * nb + b, basis_val(low.mu, &local_nb, b), &mut tr_rows, &mut tr_cols, &mut tr_vals);
                    push(r, c * nb + b, -basis_val(high.mu, &local_here, b), &mut tr_rows, &mut tr_cols, &mut tr_vals);
                }
                rhs.push(jump_u - low.particular + high.particular);
                // Flux: a_low du_low - a_high du_high along `axis` = jump_q.
                let r = rhs.len();
                for b in 0..nb {
                    let gl = basis_normal_deriv(low.mu, &local_nb, b, axis);
                    let gh = basis_normal_deriv(high.mu, &local_here, b, axis);
                    if gl != 0.0 {
                        push(r, cl * nb + b, low.a * gl, &mut tr_rows, &mut tr_cols, &mut tr_vals);
                    }
                    if gh != 0.0 {
                        push(r, c * nb + b, -high.a * gh, &mut tr_rows, &mut tr_cols, &mut tr_vals);
                    }
                }
                rhs.push(jump_q);
                matching_rows += 2;
            } else {
                let cell = &cells[c];
                let r = rhs.len();
                for b in 0..nb {
                    push(r, c * nb + b, basis_val(cell.mu, &local_here, b), &mut tr_rows, &mut tr_cols, &mut tr_vals);
                }
                rhs.push(problem.g.eval(p, cell.label) - cell.particular);
                boundary_rows += 1;
            }
            if mi[axis] == m - 1 {
                let mut p_up = p;
                p_up[axis] = corner[axis] + h;
                let mut local_up = local_here;
                local_up[axis] = h;
                let cell = &cells[c];
                let r = rhs.len();
                for b in 0..nb {
                    push(r, c * nb + b, basis_val(cell.mu, &local_up, b), &mut tr_rows, &mut tr_cols, &mut tr_vals);
                }
                rhs.push(problem.g.eval(p_up, cell.label) - cell.particular);
                boundary_rows += 1;
            }
        }
    }
    assert_eq!(rhs.len(), unknowns, "face equations must balance the unknown count");

    let mut kl = 0usize;
    let mut ku = 0usize;
    for (&r, &cc) in tr_rows.iter().zip(&tr_cols) {
        if r >= cc {
            kl = kl.max(r - cc);
        } else {
            ku = ku.max(cc - r);
        }
    }
    let mut matrix = BandMatrix::new(unknowns, kl, ku);
    for ((&r, &cc), &v) in tr_rows.iter().zip(&tr_cols).zip(&tr_vals) {
        matrix.add(r, cc, v);
    }

    Ok(TfpmSystem {
        matrix,
        rhs,
        stats: AssemblyStats { unknowns, matching_rows, boundary_rows },
        grid: *grid,
        cells,
    })
}

impl TfpmSystem {
    pub fn solve(self) -> Result<TfpmField> {
        let solver = BandSolver::new(self.matrix)?;
        let coeffs = solver.solve(&self.rhs);
        Ok(TfpmField {
            grid: self.grid,
            mu: self.cells.iter().map(|c| c.mu).collect(),
            particular: self.cells.iter().map(|c| c.particular).collect(),
            labels: self.cells.iter().map(|c| c.label).collect(),
            coeffs,
        })
    }
}

/// Assembles and solves in one step.
pub fn solve(problem: &InterfaceProblem, grid: &GridSpec) -> Result<TfpmField> {
    assemble(problem, grid)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ClosedCurve, Geometry};
    use crate::problem::Coeff;

    fn plain_canvas(d: usize) -> Geometry {
        Geometry::new(0.0, 1.0, d, Outer::Canvas, vec![]).unwrap()
    }

    #[test]
    fn reconstruction_value_pinned() {
        let field = TfpmField {
            grid: GridSpec::new(0.0, 1.0, 2, 2).unwrap(),
            mu: vec![1.0],
            particular: vec![1.0],
            labels: vec![1],
            coeffs: vec![1.0, 0.0, 0.0, 1.0],
        };
        // exp(+mu x) and exp(-mu y) are both 1 at the lower corner, plus
        // the particular value: 1 + 1 + 1.
        assert_eq!(field.eval_in_cell(0, [0.0, 0.0, 0.0]), 3.0);
        let at_upper = field.eval_in_cell(0, [1.0, 1.0, 0.0]);
        assert!((at_upper - (1.0 + 1.0f64.exp() + (-1.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn system_counts_2d_and_3d() {
        let p2 = InterfaceProblem::with_constants(plain_canvas(2), 1.0, 1.0, 1.0, 0.0, vec![], vec![]);
        let sys = assemble(&p2, &GridSpec::new(0.0, 1.0, 3, 2).unwrap()).unwrap();
        assert_eq!(
            sys.stats,
            AssemblyStats { unknowns: 16, matching_rows: 8, boundary_rows: 8 }
        );
        let p3 = InterfaceProblem::with_constants(plain_canvas(3), 1.0, 1.0, 1.0, 0.0, vec![], vec![]);
        let sys = assemble(&p3, &GridSpec::new(0.0, 1.0, 3, 3).unwrap()).unwrap();
        assert_eq!(
            sys.stats,
            AssemblyStats { unknowns: 48, matching_rows: 24, boundary_rows: 24 }
        );
    }

    #[test]
    fn exact_exponential_solution_2d() {
        // u = 1 + exp(x) satisfies -lap(u) + u = 1 and lies in the local
        // basis, so the matched solution reproduces it to rounding.
        let mut p = InterfaceProblem::with_constants(plain_canvas(2), 1.0, 1.0, 1.0, 0.0, vec![], vec![]);
        p.g = Coeff::func(|q| 1.0 + q[0].exp());
        let field = solve(&p, &GridSpec::new(0.0, 1.0, 6, 2).unwrap()).unwrap();
        let probe = GridSpec::new(0.0, 1.0, 13, 2).unwrap();
        let vals = field.sample_on(&probe).unwrap();
        let err = (0..probe.num_points())
            .map(|k| (vals[k] - (1.0 + probe.point(k)[0].exp())).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn exact_exponential_solution_3d() {
        let mut p = InterfaceProblem::with_constants(plain_canvas(3), 1.0, 1.0, 1.0, 0.0, vec![], vec![]);
        p.g = Coeff::func(|q| 1.0 + q[2].exp());
        let field = solve(&p, &GridSpec::new(0.0, 1.0, 3, 3).unwrap()).unwrap();
        let probe = GridSpec::new(0.0, 1.0, 5, 3).unwrap();
        let vals = field.sample_on(&probe).unwrap();
        let err = (0..probe.num_points())
            .map(|k| (vals[k] - (1.0 + probe.point(k)[2].exp())).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn piecewise_constant_jump_solution() {
        // u = 2 inside the circle, 0.5 outside, flat on both sides: the
        // source balances b u per region, alpha carries the inner-minus-
        // outer difference and the flux jump vanishes. The discrete
        // solution is exactly piecewise constant on cells.
        let circ = ClosedCurve::circle([0.5, 0.5], 0.3).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![circ]).unwrap();
        let p = InterfaceProblem {
            geometry: geom,
            a: Coeff::Constant(1.0),
            b: Coeff::Constant(1.0),
            f: Coeff::PerRegion(vec![0.5, 2.0]),
            g: Coeff::Constant(0.5),
            alpha: vec![1.5],
            beta: vec![0.0],
        };
        let field = solve(&p, &GridSpec::new(0.0, 1.0, 9, 2).unwrap()).unwrap();
        assert!((field.eval([0.5, 0.5, 0.0]) - 2.0).abs() < 1e-10);
        assert!((field.eval([0.05, 0.05, 0.0]) - 0.5).abs() < 1e-10);
        assert!((field.eval([0.95, 0.5, 0.0]) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn smooth_error_decreases_with_refinement() {
        let pi = std::f64::consts::PI;
        fn exact(q: Point) -> f64 {
            let pi = std::f64::consts::PI;
            (pi * q[0]).sin() * (pi * q[1]).sin()
        }
        let mut errs = Vec::new();
        for n in [5usize, 9, 17] {
            let mut p = InterfaceProblem::with_constants(plain_canvas(2), 1.0, 1.0, 0.0, 0.0, vec![], vec![]);
            p.f = Coeff::func(move |q| (2.0 * pi * pi + 1.0) * exact(q));
            let field = solve(&p, &GridSpec::new(0.0, 1.0, n, 2).unwrap()).unwrap();
            let probe = GridSpec::new(0.0, 1.0, 21, 2).unwrap();
            let vals = field.sample_on(&probe).unwrap();
            let err = (0..probe.num_points())
                .map(|k| (vals[k] - exact(probe.point(k))).abs())
                .fold(0.0f64, f64::max);
            errs.push(err);
        }
        assert!(errs[1] / errs[2] > 2.0, "errors {errs:?}");
        assert!(errs[0] / errs[1] > 2.0, "errors {errs:?}");
    }

    #[test]
    fn rejects_unsupported_setups() {
        let p = InterfaceProblem::with_constants(plain_canvas(2), 1.0, 0.0, 1.0, 0.0, vec![], vec![]);
        let g = GridSpec::new(0.0, 1.0, 5, 2).unwrap();
        assert!(matches!(solve(&p, &g), Err(Error::Unsupported(_))));
        let p = InterfaceProblem::with_constants(plain_canvas(2), 1.0, 1.0, 1.0, 0.0, vec![], vec![]);
        let wrong = GridSpec::new(-0.5, 0.5, 5, 2).unwrap();
        assert!(matches!(solve(&p, &wrong), Err(Error::InvalidArgument(_))));
        let curve = ClosedCurve::circle([0.5, 0.5], 0.4).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Curve(curve), vec![]).unwrap();
        let p = InterfaceProblem::with_constants(geom, 1.0, 1.0, 1.0, 0.0, vec![], vec![]);
        assert!(matches!(solve(&p, &g), Err(Error::Unsupported(_))));
    }
}
