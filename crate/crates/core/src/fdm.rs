//! Reference finite-difference solvers used as ground truth: a
//! jump-corrected elliptic solver and an implicit transport stepper
//! with an interface resistance law.
//!
//! The elliptic scheme is the centered second-order stencil in flux
//! form. A stencil arm that crosses an interface is rewritten in terms
//! of the smooth extension of the center's region: the neighbor value
//! is shifted by the solution jump plus the crossing-distance times the
//! flux jump, both evaluated at the crossing point found by bisection
//! on the interface's signed distance. Domain boundaries that do not
//! line up with the grid become nearest-point Dirichlet rows, a
//! first-order staircase the training targets tolerate.

use crate::error::{Error, Result};
use crate::geometry::{Geometry, Outer};
use crate::grid::{ChannelTensor, GridSpec, Point};
use crate::linalg::{bicgstab, BandMatrix, BandSolver, CsrMatrix};
use crate::problem::InterfaceProblem;

/// Band storage above this size falls back to the iterative solver.
const MAX_DIRECT_BYTES: usize = 256 << 20;

const BISECT_TOL: f64 = 1e-12;

/// Interface resistance transport: two diffusivities coupled through a
/// permeable interface with partition coefficient `gamma_star`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportParams {
    /// Interface resistance; the interface flux is
    /// `(phi_in - gamma_star * phi_out) / rho` along the outward normal.
    pub rho: f64,
    /// Equilibrium partition coefficient: zero flux at
    /// `phi_in = gamma_star * phi_out`.
    pub gamma_star: f64,
    pub d_in: f64,
    pub d_out: f64,
    pub dt: f64,
    pub t_end: f64,
}

impl TransportParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.rho > 0.0
            && self.gamma_star > 0.0
            && self.d_in > 0.0
            && self.d_out > 0.0
            && self.dt > 0.0
            && self.dt <= self.t_end;
        if !ok {
            return Err(Error::invalid(format!("transport parameters out of range: {self:?}")));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::invalid("t_end must be an integer number of steps"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

enum Factored {
    Band(BandSolver),
    Iterative { csr: CsrMatrix, diag: Vec<f64> },
}

impl Factored {
    fn build(n: usize, entries: Vec<(usize, usize, f64)>) -> Result<Factored> {
        let mut kl = 0usize;
        let mut ku = 0usize;
        for &(r, c, _) in &entries {
            if r >= c {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
        if BandMatrix::factor_bytes(n, kl, ku) <= MAX_DIRECT_BYTES {
            let mut m = BandMatrix::new(n, kl, ku);
            for (r, c, v) in entries {
                m.add(r, c, v);
            }
            Ok(Factored::Band(BandSolver::new(m)?))
        } else {
            let csr = CsrMatrix::from_triplets(n, entries);
            let diag = csr.diagonal();
            if diag.iter().any(|&d| d == 0.0) {
                return Err(Error::LinearSolve("zero diagonal in iterative path".into()));
            }
            Ok(Factored::Iterative { csr, diag })
        }
    }

    fn solve(&self, rhs: &[f64], x0: Option<&[f64]>) -> Result<Vec<f64>> {
        match self {
            Factored::Band(s) => Ok(s.solve(rhs)),
            Factored::Iterative { csr, diag } => {
                let apply = |x: &[f64], y: &mut [f64]| csr.apply(x, y);
                let (x, _) = bicgstab(&apply, rhs, x0, Some(diag), 1e-12, 20000)?;
                Ok(x)
            }
        }
    }
}

/// Crossing of the segment `p -> q` with `curve`, as a parameter in
/// (0, 1). The endpoint distances must straddle zero; when they do not
/// (degenerate near-tangency), the midpoint stands in.
fn crossing_parameter(curve: &crate::geometry::ClosedCurve, p: Point, q: Point) -> f64 {
    let sp = curve.sdf(p);
    let sq = curve.sdf(q);
    if sp == 0.0 {
        return 0.0;
    }
    if sq == 0.0 {
        return 1.0;
    }
    if sp.signum() == sq.signum() {
        return 0.5;
    }
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut slo = sp;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let pm = [
            p[0] + mid * (q[0] - p[0]),
            p[1] + mid * (q[1] - p[1]),
            p[2] + mid * (q[2] - p[2]),
        ];
        let sm = curve.sdf(pm);
        if sm == 0.0 {
            return mid;
        }
        if sm.signum() == slo.signum() {
            lo = mid;
            slo = sm;
        } else {
            hi = mid;
        }
        if hi - lo < BISECT_TOL {
            break;
        }
    }
    0.5 * (lo + hi)
}

struct StencilContext<'a> {
    problem: &'a InterfaceProblem,
    grid: &'a GridSpec,
    labels: Vec<usize>,
}

impl<'a> StencilContext<'a> {
    fn new(problem: &'a InterfaceProblem, grid: &'a GridSpec) -> Result<Self> {
        problem.check_shapes()?;
        let geom = &problem.geometry;
        if grid.d != geom.d || grid.s != geom.s || grid.t != geom.t {
            return Err(Error::invalid("grid canvas does not match the geometry canvas"));
        }
        let labels = (0..grid.num_points())
            .map(|k| geom.region_label(grid.point(k)))
            .collect();
        Ok(StencilContext { problem, grid, labels })
    }

    /// Jump seen from `p`'s side when its arm reaches `q` across an
    /// interface: the smooth extension of `p`'s region satisfies
    /// `u_ext(q) = u(q) + jump`.
    fn arm_correction(&self, p: Point, q: Point, lp: usize, lq: usize, a_p: f64) -> Result<f64> {
        let idx = lp.max(lq) - 2;
        if idx >= self.problem.alpha.len() {
            return Err(Error::geometry(format!(
                "labels {lp} and {lq} straddle an unknown interface"
            )));
        }
        let curve = &self.problem.geometry.interfaces[idx];
        let t = crossing_parameter(curve, p, q);
        let x = [
            p[0] + t * (q[0] - p[0]),
            p[1] + t * (q[1] - p[1]),
            p[2] + t * (q[2] - p[2]),
        ];
        let extent = self.grid.extent();
        let nrm = curve.normal(x, extent);
        let h = self.grid.h();
        let d = self.grid.d;
        let mut e = [0.0; 3];
        for a in 0..d {
            e[a] = (q[a] - p[a]) / h;
        }
        let dist = (1.0 - t) * h;
        let dot = (0..d).map(|a| e[a] * nrm[a]).sum::<f64>();
        let s = if lp > lq { 1.0 } else { -1.0 };
        let alpha = self.problem.alpha[idx];
        let beta = self.problem.beta[idx];
        Ok(s * (alpha + dist * dot * beta / a_p))
    }
}

/// Solves the elliptic interface problem on the grid. The result is
/// zero outside the domain.
pub fn solve_elliptic_interface(problem: &InterfaceProblem, grid: &GridSpec) -> Result<ChannelTensor> {
    let ctx = StencilContext::new(problem, grid)?;
    let geom = &problem.geometry;
    let n = grid.n;
    let d = grid.d;
    let h = grid.h();
    let np = grid.num_points();
    let strides = [1usize, n, n * n];

    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut rhs = vec![0.0; np];

    for k in 0..np {
        let label = ctx.labels[k];
        let p = grid.point(k);
        if label == 0 {
            entries.push((k, k, 1.0));
            continue;
        }
        let mi = grid.multi_index(k);
        let on_canvas_edge = (0..d).any(|a| mi[a] == 0 || mi[a] == n - 1);
        if on_canvas_edge && matches!(geom.outer, Outer::Canvas) {
            entries.push((k, k, 1.0));
            rhs[k] = problem.g.eval(p, label);
            continue;
        }
        let fringe = on_canvas_edge
            || (0..d).any(|a| {
                ctx.labels[k - strides[a]] == 0 || ctx.labels[k + strides[a]] == 0
            });
        if fringe {
            // Off-grid domain boundary: pin to the Dirichlet data at the
            // nearest boundary point.
            let bp = geom.outer_project(p);
            entries.push((k, k, 1.0));
            rhs[k] = problem.g.eval(bp, label);
            continue;
        }
        let b_p = problem.b.eval(p, label);
        if b_p < 0.0 {
            return Err(Error::invalid(format!("reaction coefficient {b_p} negative at index {k}")));
        }
        let mut diag = b_p;
        rhs[k] = problem.f.eval(p, label);
        for a in 0..d {
            for dir in [-1isize, 1] {
                let kq = (k as isize + dir * strides[a] as isize) as usize;
                let q = grid.point(kq);
                // Arm transmissibility from the midpoint, seen from p's
                // region.
                let mut mid = p;
                mid[a] = 0.5 * (p[a] + q[a]);
                let a_arm = problem.a.eval(mid, label);
                if !(a_arm > 0.0) {
                    return Err(Error::invalid(format!("diffusion {a_arm} not positive near index {k}")));
                }
                let w = a_arm / (h * h);
                diag += w;
                entries.push((k, kq, -w));
                let lq = ctx.labels[kq];
                if lq != label {
                    let a_p = problem.a.eval(p, label);
                    let corr = ctx.arm_correction(p, q, label, lq, a_p)?;
                    // u_ext(q) = u(q) + corr; the -w u_ext(q) term leaves
                    // +w corr for the right side.
                    rhs[k] += w * corr;
                }
            }
        }
        entries.push((k, k, diag));
    }

    let solver = Factored::build(np, entries)?;
    let mut u = solver.solve(&rhs, None)?;
    for k in 0..np {
        if ctx.labels[k] == 0 {
            u[k] = 0.0;
        }
    }
    ChannelTensor::single(*grid, u)
}

/// Transport step matrix plus bookkeeping shared by all steps.
struct TransportSystem {
    factored: Factored,
    labels: Vec<usize>,
    scale: f64,
}

fn build_transport(
    geometry: &Geometry,
    params: &TransportParams,
    grid: &GridSpec,
) -> Result<TransportSystem> {
    params.validate()?;
    if grid.d != geometry.d || grid.s != geometry.s || grid.t != geometry.t {
        return Err(Error::invalid("grid canvas does not match the geometry canvas"));
    }
    let n = grid.n;
    let d = grid.d;
    let h = grid.h();
    let np = grid.num_points();
    let strides = [1usize, n, n * n];
    let labels: Vec<usize> = (0..np).map(|k| geometry.region_label(grid.point(k))).collect();

    // Point-centered volumes h^d and face areas h^(d-1); every interior
    // flux shows up twice with opposite signs, so the scheme conserves
    // the discrete mass exactly.
    let vol = h.powi(d as i32);
    let area = h.powi(d as i32 - 1);
    let scale = vol / params.dt;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for k in 0..np {
        if labels[k] == 0 {
            entries.push((k, k, 1.0));
            continue;
        }
        let mi = grid.multi_index(k);
        let mut diag = scale;
        for a in 0..d {
            for dir in [-1isize, 1] {
                if (dir < 0 && mi[a] == 0) || (dir > 0 && mi[a] == n - 1) {
                    continue;
                }
                let kq = (k as isize + dir * strides[a] as isize) as usize;
                let lq = labels[kq];
                if lq == 0 {
                    // No flux through the outer boundary.
                    continue;
                }
                let lk = labels[k];
                if lq == lk {
                    let dcoef = if lk >= 2 { params.d_in } else { params.d_out };
                    let w = dcoef * area / h;
                    diag += w;
                    entries.push((k, kq, -w));
                } else if lk > lq {
                    // k is the inner side: it loses
                    // (phi_k - gamma_star phi_q) * area / rho.
                    let w = area / params.rho;
                    diag += w;
                    entries.push((k, kq, -w * params.gamma_star));
                } else {
                    // k is the outer side: it gains what the inner cell
                    // loses.
                    let w = area / params.rho;
                    diag += w * params.gamma_star;
                    entries.push((k, kq, -w));
                }
            }
        }
        entries.push((k, k, diag));
    }
    let factored = Factored::build(np, entries)?;
    Ok(TransportSystem { factored, labels, scale })
}

/// Discrete mass of a state restricted to the domain.
fn mass(phi: &[f64], labels: &[usize], vol: f64) -> f64 {
    phi.iter()
        .zip(labels)
        .filter(|(_, &l)| l >= 1)
        .map(|(&v, _)| v * vol)
        .sum()
}

/// Runs the transport model to `t_end`, also reporting the domain mass
/// after every step (index 0 is the initial mass).
pub fn run_transport_traced(
    geometry: &Geometry,
    params: &TransportParams,
    phi0: &ChannelTensor,
    grid: &GridSpec,
) -> Result<(ChannelTensor, Vec<f64>)> {
    if phi0.grid != *grid || phi0.channels != 1 {
        return Err(Error::invalid("initial state must be one channel on the solve grid"));
    }
    let sys = build_transport(geometry, params, grid)?;
    let vol = grid.h().powi(grid.d as i32);
    let mut phi = phi0.values.clone();
    let mut masses = vec![mass(&phi, &sys.labels, vol)];
    for _ in 0..params.steps() {
        let rhs: Vec<f64> = phi
            .iter()
            .zip(&sys.labels)
            .map(|(&v, &l)| if l == 0 { v } else { sys.scale * v })
            .collect();
        phi = sys.factored.solve(&rhs, Some(&phi))?;
        masses.push(mass(&phi, &sys.labels, vol));
    }
    Ok((ChannelTensor::single(*grid, phi)?, masses))
}

/// Runs the transport model and returns the final state.
pub fn run_transport(
    geometry: &Geometry,
    params: &TransportParams,
    phi0: &ChannelTensor,
    grid: &GridSpec,
) -> Result<ChannelTensor> {
    run_transport_traced(geometry, params, phi0, grid).map(|(phi, _)| phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ClosedCurve;
    use crate::problem::Coeff;

    fn canvas(d: usize) -> Geometry {
        Geometry::new(0.0, 1.0, d, Outer::Canvas, vec![]).unwrap()
    }

    fn circle_canvas() -> Geometry {
        let c = ClosedCurve::circle([0.5, 0.5], 0.3).unwrap();
        Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![c]).unwrap()
    }

    fn linf(u: &ChannelTensor, exact: impl Fn(Point) -> f64) -> f64 {
        let g = u.grid;
        (0..g.num_points())
            .map(|k| (u.values[k] - exact(g.point(k))).abs())
            .fold(0.0f64, f64::max)
    }

    #[test]
    fn zero_data_zero_solution() {
        let p = InterfaceProblem::with_constants(circle_canvas(), 1.0, 0.0, 0.0, 0.0, vec![0.0], vec![0.0]);
        let g = GridSpec::new(0.0, 1.0, 17, 2).unwrap();
        let u = solve_elliptic_interface(&p, &g).unwrap();
        assert!(u.values.iter().all(|&v| v.abs() < 1e-13));
    }

    #[test]
    fn smooth_second_order_convergence() {
        let pi = std::f64::consts::PI;
        let exact = move |q: Point| (pi * q[0]).sin() * (pi * q[1]).sin();
        let mut errs = Vec::new();
        for n in [17usize, 33, 65] {
            let mut p = InterfaceProblem::with_constants(canvas(2), 1.0, 0.0, 0.0, 0.0, vec![], vec![]);
            p.f = Coeff::func(move |q| 2.0 * pi * pi * exact(q));
            let g = GridSpec::new(0.0, 1.0, n, 2).unwrap();
            let u = solve_elliptic_interface(&p, &g).unwrap();
            errs.push(linf(&u, exact));
        }
        // Log-log slope across the three grids.
        let slope = (errs[2] / errs[0]).ln() / (4.0f64).recip().ln() * -1.0;
        assert!(slope <= -1.8, "rate {slope}, errors {errs:?}");
    }

    #[test]
    fn piecewise_constant_interface_exact() {
        let p = InterfaceProblem::with_constants(circle_canvas(), 1.0, 0.0, 0.0, 0.0, vec![1.0], vec![0.0]);
        let g = GridSpec::new(0.0, 1.0, 41, 2).unwrap();
        let u = solve_elliptic_interface(&p, &g).unwrap();
        let geom = circle_canvas();
        let err = (0..g.num_points())
            .map(|k| {
                let q = g.point(k);
                let want = if geom.region_label(q) == 2 { 1.0 } else { 0.0 };
                (u.values[k] - want).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }

    #[test]
    fn vline_jump_corrections_exact() {
        // Piecewise quadratic across a vertical interface: both jump
        // correction terms are exact, so the discrete solution hits the
        // truth at rounding level. Pin both their signs here.
        let x0 = 0.503;
        let a_cap = -0.8; // u_right - u_left at the interface
        let gamma = -0.6; // du_right - du_left
        let vline = ClosedCurve::vline(x0).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![vline]).unwrap();
        let exact = move |q: Point| {
            let base = q[0] * q[0] + q[1] * q[1];
            if q[0] > x0 {
                base + gamma * (q[0] - x0) + a_cap
            } else {
                base
            }
        };
        let p = InterfaceProblem {
            geometry: geom,
            a: Coeff::Constant(1.0),
            b: Coeff::Constant(0.0),
            f: Coeff::Constant(-4.0),
            g: Coeff::func(exact),
            alpha: vec![-a_cap],
            beta: vec![-gamma],
        };
        let g = GridSpec::new(0.0, 1.0, 21, 2).unwrap();
        let u = solve_elliptic_interface(&p, &g).unwrap();
        let err = linf(&u, exact);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn fringe_rows_respect_maximum_principle() {
        let c = ClosedCurve::circle([0.0, 0.0], 0.38).unwrap();
        let geom = Geometry::new(-0.5, 0.5, 2, Outer::Curve(c), vec![]).unwrap();
        let p = InterfaceProblem {
            geometry: geom.clone(),
            a: Coeff::Constant(1.0),
            b: Coeff::Constant(0.0),
            f: Coeff::Constant(0.0),
            g: Coeff::func(|q| q[0]),
            alpha: vec![],
            beta: vec![],
        };
        let g = GridSpec::new(-0.5, 0.5, 33, 2).unwrap();
        let u = solve_elliptic_interface(&p, &g).unwrap();
        // Harmonic with g = x on a disc of radius 0.38: bounded by the
        // boundary extremes, and close to x itself up to the staircase.
        for k in 0..g.num_points() {
            assert!(u.values[k] >= -0.38 - 1e-12 && u.values[k] <= 0.38 + 1e-12);
        }
        let err = (0..g.num_points())
            .filter(|&k| geom.region_label(g.point(k)) == 1)
            .map(|k| (u.values[k] - g.point(k)[0]).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 5.0 * g.h(), "interior error {err}");
        // Outside the disc the field is identically zero.
        assert_eq!(u.values[g.index(0, 0, 0)], 0.0);
    }

    #[test]
    fn superposition_linearity() {
        let geom = circle_canvas();
        let solve_with = |f: f64, gb: f64, al: f64, be: f64| {
            let p = InterfaceProblem::with_constants(geom.clone(), 2.0, 1.0, f, gb, vec![al], vec![be]);
            let g = GridSpec::new(0.0, 1.0, 21, 2).unwrap();
            solve_elliptic_interface(&p, &g).unwrap().values
        };
        let u1 = solve_with(0.7, -0.2, 0.4, 0.1);
        let u2 = solve_with(-0.3, 0.5, -0.6, 0.9);
        let mix = solve_with(0.7 - 2.0 * 0.3, -0.2 + 2.0 * 0.5, 0.4 - 2.0 * 0.6, 0.1 + 2.0 * 0.9);
        let worst = (0..u1.len())
            .map(|k| (u1[k] + 2.0 * u2[k] - mix[k]).abs())
            .fold(0.0f64, f64::max);
        let norm = mix.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(worst < 1e-10 * norm.max(1.0), "discrepancy {worst}");
    }

    #[test]
    fn planar_interface_3d() {
        // Piecewise constant across the z = kappa plane in 3d. The plane
        // cuts the canvas boundary, so the Dirichlet data is piecewise
        // as well.
        let plane = ClosedCurve::plane_z(0.47).unwrap();
        let geom = Geometry::new(0.0, 1.0, 3, Outer::Canvas, vec![plane]).unwrap();
        let mut p = InterfaceProblem::with_constants(geom.clone(), 1.0, 0.0, 0.0, 0.0, vec![1.0], vec![0.0]);
        p.g = Coeff::func(|q| if q[2] < 0.47 { 1.0 } else { 0.0 });
        let g = GridSpec::new(0.0, 1.0, 13, 3).unwrap();
        let u = solve_elliptic_interface(&p, &g).unwrap();
        let err = (0..g.num_points())
            .map(|k| {
                let q = g.point(k);
                let want = if q[2] < 0.47 { 1.0 } else { 0.0 };
                (u.values[k] - want).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }

    fn ellipse_canvas() -> Geometry {
        let e = ClosedCurve::ellipse([0.5, 0.5], [0.25, 0.18]).unwrap();
        Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![e]).unwrap()
    }

    #[test]
    fn transport_equilibrium_is_stationary() {
        let geom = ellipse_canvas();
        let g = GridSpec::new(0.0, 1.0, 41, 2).unwrap();
        let params = TransportParams {
            rho: 0.2,
            gamma_star: 2.0,
            d_in: 0.1,
            d_out: 0.5,
            dt: 0.01,
            t_end: 0.1,
        };
        let c = 0.7;
        let phi0: Vec<f64> = (0..g.num_points())
            .map(|k| if geom.region_label(g.point(k)) >= 2 { params.gamma_star * c } else { c })
            .collect();
        let phi0 = ChannelTensor::single(g, phi0).unwrap();
        let out = run_transport(&geom, &params, &phi0, &g).unwrap();
        let drift = out
            .values
            .iter()
            .zip(&phi0.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-8, "equilibrium drift {drift}");
    }

    #[test]
    fn transport_impermeable_limit() {
        let geom = ellipse_canvas();
        let g = GridSpec::new(0.0, 1.0, 41, 2).unwrap();
        let params = TransportParams {
            rho: 1e12,
            gamma_star: 1.0,
            d_in: 0.1,
            d_out: 0.5,
            dt: 0.01,
            t_end: 0.1,
        };
        let phi0: Vec<f64> = (0..g.num_points())
            .map(|k| {
                let q = g.point(k);
                if geom.region_label(q) >= 2 { 0.0 } else { 1.0 + 0.3 * (q[0] + q[1]) }
            })
            .collect();
        let phi0 = ChannelTensor::single(g, phi0).unwrap();
        let out = run_transport(&geom, &params, &phi0, &g).unwrap();
        let vol = g.h() * g.h();
        let part = |phi: &[f64], inner: bool| -> f64 {
            (0..g.num_points())
                .filter(|&k| (geom.region_label(g.point(k)) >= 2) == inner)
                .map(|k| phi[k] * vol)
                .sum()
        };
        let m_in0 = part(&phi0.values, true);
        let m_out0 = part(&phi0.values, false);
        let m_in1 = part(&out.values, true);
        let m_out1 = part(&out.values, false);
        assert!((m_in1 - m_in0).abs() <= 1e-8 * m_out0.abs());
        assert!((m_out1 - m_out0).abs() < 1e-8 * m_out0.abs());
    }

    #[test]
    fn transport_conserves_mass_and_fills_interior() {
        let geom = ellipse_canvas();
        let g = GridSpec::new(0.0, 1.0, 41, 2).unwrap();
        let params = TransportParams {
            rho: 0.2,
            gamma_star: 1.0,
            d_in: 0.1,
            d_out: 0.5,
            dt: 0.01,
            t_end: 0.1,
        };
        let phi0: Vec<f64> = (0..g.num_points())
            .map(|k| {
                let q = g.point(k);
                if geom.region_label(q) >= 2 { 0.0 } else { 1.0 + 0.2 * q[0] }
            })
            .collect();
        let phi0 = ChannelTensor::single(g, phi0).unwrap();
        let (out, masses) = run_transport_traced(&geom, &params, &phi0, &g).unwrap();
        for m in &masses {
            assert!((m - masses[0]).abs() < 1e-8 * masses[0].abs(), "mass trace {masses:?}");
        }
        // Interior mass grows monotonically from empty.
        let vol = g.h() * g.h();
        let inner0: f64 = (0..g.num_points())
            .filter(|&k| geom.region_label(g.point(k)) >= 2)
            .map(|k| phi0.values[k] * vol)
            .sum();
        let inner1: f64 = (0..g.num_points())
            .filter(|&k| geom.region_label(g.point(k)) >= 2)
            .map(|k| out.values[k] * vol)
            .sum();
        assert_eq!(inner0, 0.0);
        assert!(inner1 > 0.0);
    }

    #[test]
    fn transport_rejects_bad_params() {
        let geom = ellipse_canvas();
        let g = GridSpec::new(0.0, 1.0, 9, 2).unwrap();
        let phi0 = ChannelTensor::zeros(g, 1);
        let mut params = TransportParams {
            rho: 0.2,
            gamma_star: 1.0,
            d_in: 0.1,
            d_out: 0.5,
            dt: 0.03,
            t_end: 0.1,
        };
        assert!(run_transport(&geom, &params, &phi0, &g).is_err());
        params.dt = -0.01;
        assert!(run_transport(&geom, &params, &phi0, &g).is_err());
    }
}
