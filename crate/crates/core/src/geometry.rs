//! Closed curves, signed distance, projections, and region labeling.
//!
//! Domains are described by an outer boundary (the canvas cube itself or a
//! closed curve inside it) plus a list of closed interface curves. The sign
//! convention is inside-negative: `sdf < 0` strictly inside the enclosed
//! region, `> 0` outside, `0` on the curve. Points within `eps_geo` of a
//! curve are classified as enclosed, where `eps_geo = 1e-12 * (t - s)`
//! scales with the canvas extent.
//!
//! Two "curve" kinds are not closed loops: `PlaneZ` (the horizontal plane
//! `z = kappa`, 3D only, enclosing the half-space below) and `VLine` (the
//! vertical line `x = x0`, 2D only, enclosing the half-plane to the left).
//! Both model interfaces that deliberately run out through the domain
//! boundary, so containment validation only requires that they actually
//! pass through the domain instead of lying strictly inside it.

use crate::error::{Error, Result};
use crate::grid::Point;

/// Relative geometric tolerance; multiplied by the canvas extent.
pub const GEOM_TOL_SCALE: f64 = 1e-12;

/// Number of polyline segments a star curve is densified to before
/// distance queries: `max(4 * M, 512)` for `M` control radii.
pub const STAR_MIN_SEGMENTS: usize = 512;

/// Samples per curve used by geometry validation.
pub const VALIDATION_SAMPLES: usize = 1024;

#[derive(Debug, Clone)]
enum Kind {
    /// Star-shaped curve densified to `poly` from a piecewise-linear
    /// radius function: `radii[k]` at angle `2*pi*k / M`, interpolated
    /// in angle.
    StarPolar { poly: Vec<[f64; 2]> },
    Ellipse { center: [f64; 2], semi_axes: [f64; 2] },
    AxisSquare { center: [f64; 2], side: f64 },
    Polyline { vertices: Vec<[f64; 2]> },
    PlaneZ { kappa: f64 },
    VLine { x0: f64 },
}

/// A closed interface or boundary curve.
#[derive(Debug, Clone)]
pub struct ClosedCurve {
    kind: Kind,
}

fn check_finite_2d(p: [f64; 2], what: &str) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::geometry(format!("{what} has non-finite coordinates")))
    }
}

impl ClosedCurve {
    /// Star-shaped curve: `radii[k]` at angle `2*pi*k / radii.len()`.
    pub fn star(center: [f64; 2], radii: Vec<f64>) -> Result<Self> {
        check_finite_2d(center, "star center")?;
        if radii.len() < 3 {
            return Err(Error::geometry(format!("star needs at least 3 radii, got {}", radii.len())));
        }
        if radii.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::geometry("star radii must be finite and positive"));
        }
        let segments = (4 * radii.len()).max(STAR_MIN_SEGMENTS);
        let m = radii.len();
        let mut poly = Vec::with_capacity(segments);
        for j in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
            // Linear interpolation of the radius between control angles.
            let u = theta / (2.0 * std::f64::consts::PI) * m as f64;
            let k = (u.floor() as usize) % m;
            let frac = u - u.floor();
            let r = radii[k] * (1.0 - frac) + radii[(k + 1) % m] * frac;
            poly.push([center[0] + r * theta.cos(), center[1] + r * theta.sin()]);
        }
        Ok(ClosedCurve { kind: Kind::StarPolar { poly } })
    }

    pub fn ellipse(center: [f64; 2], semi_axes: [f64; 2]) -> Result<Self> {
        check_finite_2d(center, "ellipse center")?;
        if semi_axes.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::geometry("ellipse semi-axes must be finite and positive"));
        }
        Ok(ClosedCurve { kind: Kind::Ellipse { center, semi_axes } })
    }

    pub fn circle(center: [f64; 2], radius: f64) -> Result<Self> {
        Self::ellipse(center, [radius, radius])
    }

    pub fn axis_square(center: [f64; 2], side: f64) -> Result<Self> {
        check_finite_2d(center, "square center")?;
        if !side.is_finite() || side <= 0.0 {
            return Err(Error::geometry("square side must be finite and positive"));
        }
        Ok(ClosedCurve { kind: Kind::AxisSquare { center, side } })
    }

    /// Closed polyline through `vertices` (last vertex connects to first).
    pub fn polyline(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::geometry(format!("polyline needs at least 3 vertices, got {}", vertices.len())));
        }
        for v in &vertices {
            check_finite_2d(*v, "polyline vertex")?;
        }
        for i in 0..vertices.len() {
            let j = (i + 1) % vertices.len();
            if dist2(vertices[i], vertices[j]) == 0.0 {
                return Err(Error::geometry(format!("polyline has a zero-length segment at vertex {i}")));
            }
        }
        if let Some((i, j)) = first_self_intersection(&vertices) {
            return Err(Error::geometry(format!("polyline self-intersects: segments {i} and {j} cross")));
        }
        Ok(ClosedCurve { kind: Kind::Polyline { vertices } })
    }

    /// Horizontal plane `z = kappa`; 3D only, encloses `z < kappa`.
    pub fn plane_z(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() {
            return Err(Error::geometry("plane height must be finite"));
        }
        Ok(ClosedCurve { kind: Kind::PlaneZ { kappa } })
    }

    /// Vertical line `x = x0`; 2D only, encloses `x < x0`.
    pub fn vline(x0: f64) -> Result<Self> {
        if !x0.is_finite() {
            return Err(Error::geometry("line position must be finite"));
        }
        Ok(ClosedCurve { kind: Kind::VLine { x0 } })
    }

    /// Spatial dimension the curve lives in.
    pub fn dim(&self) -> usize {
        match self.kind {
            Kind::PlaneZ { .. } => 3,
            _ => 2,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            Kind::StarPolar { .. } => "star",
            Kind::Ellipse { .. } => "ellipse",
            Kind::AxisSquare { .. } => "square",
            Kind::Polyline { .. } => "polyline",
            Kind::PlaneZ { .. } => "plane-z",
            Kind::VLine { .. } => "vline",
        }
    }

    /// Signed distance to the curve, negative inside the enclosed region.
    pub fn sdf(&self, p: Point) -> f64 {
        match &self.kind {
            Kind::StarPolar { poly } => polyline_sdf(poly, [p[0], p[1]]),
            Kind::Ellipse { center, semi_axes } => {
                let local = [p[0] - center[0], p[1] - center[1]];
                ellipse_sdf(*semi_axes, local)
            }
            Kind::AxisSquare { center, side } => {
                let half = 0.5 * side;
                let qx = (p[0] - center[0]).abs() - half;
                let qy = (p[1] - center[1]).abs() - half;
                if qx > 0.0 || qy > 0.0 {
                    (qx.max(0.0).powi(2) + qy.max(0.0).powi(2)).sqrt()
                } else {
                    qx.max(qy)
                }
            }
            Kind::Polyline { vertices } => polyline_sdf(vertices, [p[0], p[1]]),
            Kind::PlaneZ { kappa } => p[2] - kappa,
            Kind::VLine { x0 } => p[0] - x0,
        }
    }

    /// Nearest point on the curve. When the nearest point is not unique the
    /// candidate earliest in parameter order wins (parameter zero sits at
    /// angle zero for star/ellipse curves, at the first vertex for
    /// polylines, and at the lower-left corner for squares).
    pub fn project(&self, p: Point) -> Point {
        match &self.kind {
            Kind::StarPolar { poly } => {
                let q = polyline_project(poly, [p[0], p[1]]);
                [q[0], q[1], 0.0]
            }
            Kind::Ellipse { center, semi_axes } => {
                let local = [p[0] - center[0], p[1] - center[1]];
                let q = ellipse_project(*semi_axes, local);
                [center[0] + q[0], center[1] + q[1], 0.0]
            }
            Kind::AxisSquare { center, side } => {
                let q = square_project(*center, 0.5 * side, [p[0], p[1]]);
                [q[0], q[1], 0.0]
            }
            Kind::Polyline { vertices } => {
                let q = polyline_project(vertices, [p[0], p[1]]);
                [q[0], q[1], 0.0]
            }
            Kind::PlaneZ { kappa } => [p[0], p[1], *kappa],
            Kind::VLine { x0 } => [*x0, p[1], 0.0],
        }
    }

    /// Unit outward normal (direction of increasing signed distance) at a
    /// point on or near the curve, via central differences of the SDF.
    pub fn normal(&self, p: Point, extent: f64) -> Point {
        let delta = 1e-7 * extent;
        let mut n = [0.0; 3];
        for a in 0..self.dim().min(3) {
            let mut hi = p;
            let mut lo = p;
            hi[a] += delta;
            lo[a] -= delta;
            n[a] = (self.sdf(hi) - self.sdf(lo)) / (2.0 * delta);
        }
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len > 0.0 {
            for v in n.iter_mut() {
                *v /= len;
            }
        }
        n
    }

    /// `samples` points spread over the curve. Canvas bounds `(s, t)` locate
    /// the sampled span for the plane/line kinds; closed kinds ignore them.
    pub fn sample_points(&self, samples: usize, s: f64, t: f64) -> Vec<Point> {
        match &self.kind {
            Kind::StarPolar { poly } => arc_length_samples(poly, samples),
            Kind::Ellipse { center, semi_axes } => (0..samples)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / samples as f64;
                    [center[0] + semi_axes[0] * th.cos(), center[1] + semi_axes[1] * th.sin(), 0.0]
                })
                .collect(),
            Kind::AxisSquare { center, side } => {
                let half = 0.5 * side;
                let corners = vec![
                    [center[0] - half, center[1] - half],
                    [center[0] + half, center[1] - half],
                    [center[0] + half, center[1] + half],
                    [center[0] - half, center[1] + half],
                ];
                arc_length_samples(&corners, samples)
            }
            Kind::Polyline { vertices } => arc_length_samples(vertices, samples),
            Kind::PlaneZ { kappa } => {
                // Interior lattice of the canvas cross-section at z = kappa.
                let per_axis = (samples as f64).sqrt().ceil() as usize;
                let mut out = Vec::with_capacity(per_axis * per_axis);
                for j in 0..per_axis {
                    for i in 0..per_axis {
                        let fx = (i as f64 + 0.5) / per_axis as f64;
                        let fy = (j as f64 + 0.5) / per_axis as f64;
                        out.push([s + fx * (t - s), s + fy * (t - s), *kappa]);
                    }
                }
                out
            }
            Kind::VLine { x0 } => (0..samples)
                .map(|j| {
                    let fy = (j as f64 + 0.5) / samples as f64;
                    [*x0, s + fy * (t - s), 0.0]
                })
                .collect(),
        }
    }

    /// Closed polyline approximation with `segments` nodes. Errors for the
    /// plane/line kinds, which have no closed polyline form.
    pub fn to_polyline(&self, segments: usize) -> Result<Vec<[f64; 2]>> {
        if segments < 3 {
            return Err(Error::invalid("polyline conversion needs at least 3 segments"));
        }
        match &self.kind {
            Kind::StarPolar { poly } => Ok(resample_closed(poly, segments)),
            Kind::Ellipse { center, semi_axes } => Ok((0..segments)
                .map(|j| {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / segments as f64;
                    [center[0] + semi_axes[0] * th.cos(), center[1] + semi_axes[1] * th.sin()]
                })
                .collect()),
            Kind::AxisSquare { center, side } => {
                let half = 0.5 * side;
                let corners = vec![
                    [center[0] - half, center[1] - half],
                    [center[0] + half, center[1] - half],
                    [center[0] + half, center[1] + half],
                    [center[0] - half, center[1] + half],
                ];
                Ok(resample_closed(&corners, segments))
            }
            Kind::Polyline { vertices } => Ok(resample_closed(vertices, segments)),
            Kind::PlaneZ { .. } | Kind::VLine { .. } => {
                Err(Error::unsupported(format!("{} interfaces have no closed polyline form", self.kind_name())))
            }
        }
    }

    /// Vertex list a perturbation applies to: the vertices themselves for a
    /// polyline, the densified polygon for a star curve.
    pub fn polyline_nodes(&self) -> Result<Vec<[f64; 2]>> {
        match &self.kind {
            Kind::Polyline { vertices } => Ok(vertices.clone()),
            Kind::StarPolar { poly } => Ok(poly.clone()),
            _ => self.to_polyline(STAR_MIN_SEGMENTS),
        }
    }

    /// Whether this kind runs out through the domain boundary by design.
    pub fn is_open_cut(&self) -> bool {
        matches!(self.kind, Kind::PlaneZ { .. } | Kind::VLine { .. })
    }
}

/// Displacement field applied to the nodes of a curve's polyline form.
#[derive(Debug, Clone)]
pub struct Perturbation {
    pub displacements: Vec<[f64; 2]>,
}

impl Perturbation {
    /// Max Euclidean displacement over all nodes.
    pub fn magnitude(&self) -> f64 {
        self.displacements.iter().map(|d| (d[0] * d[0] + d[1] * d[1]).sqrt()).fold(0.0, f64::max)
    }
}

/// Moves each polyline node of `curve` by the matching displacement and
/// returns the perturbed curve plus the applied max displacement norm.
/// Fails if the node counts differ or the result self-intersects.
pub fn perturb(curve: &ClosedCurve, perturbation: &Perturbation) -> Result<(ClosedCurve, f64)> {
    let nodes = curve.polyline_nodes()?;
    if nodes.len() != perturbation.displacements.len() {
        return Err(Error::invalid(format!(
            "perturbation has {} displacements for a curve with {} nodes",
            perturbation.displacements.len(),
            nodes.len()
        )));
    }
    let moved: Vec<[f64; 2]> = nodes
        .iter()
        .zip(&perturbation.displacements)
        .map(|(v, d)| [v[0] + d[0], v[1] + d[1]])
        .collect();
    let curve = ClosedCurve::polyline(moved)?;
    Ok((curve, perturbation.magnitude()))
}

/// Outer boundary of the domain.
#[derive(Debug, Clone)]
pub enum Outer {
    /// The domain is the whole canvas cube.
    Canvas,
    /// The domain is enclosed by a curve inside the canvas.
    Curve(ClosedCurve),
}

/// A domain with interfaces, pinned to a canvas `[s, t]^d`.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub s: f64,
    pub t: f64,
    pub d: usize,
    pub outer: Outer,
    pub interfaces: Vec<ClosedCurve>,
}

impl Geometry {
    pub fn new(s: f64, t: f64, d: usize, outer: Outer, interfaces: Vec<ClosedCurve>) -> Result<Self> {
        if !(s.is_finite() && t.is_finite() && t > s) {
            return Err(Error::geometry(format!("canvas [{s}, {t}] is empty or not finite")));
        }
        if d != 2 && d != 3 {
            return Err(Error::geometry(format!("dimension must be 2 or 3, got {d}")));
        }
        if let Outer::Curve(c) = &outer {
            if c.dim() != d {
                return Err(Error::geometry("outer curve dimension does not match the domain"));
            }
            if c.is_open_cut() {
                return Err(Error::geometry("outer boundary must be a closed curve"));
            }
        }
        for (i, c) in interfaces.iter().enumerate() {
            if c.dim() != d {
                return Err(Error::geometry(format!("interface {i} dimension does not match the domain")));
            }
        }
        Ok(Geometry { s, t, d, outer, interfaces })
    }

    /// Geometric tolerance for this canvas.
    #[inline]
    pub fn eps_geo(&self) -> f64 {
        GEOM_TOL_SCALE * (self.t - self.s)
    }

    #[inline]
    pub fn extent(&self) -> f64 {
        self.t - self.s
    }

    /// Signed distance to the canvas cube boundary, negative inside.
    pub fn canvas_sdf(&self, p: Point) -> f64 {
        cube_sdf(self.s, self.t, self.d, p)
    }

    /// Signed distance to the outer boundary, negative inside the domain.
    pub fn outer_sdf(&self, p: Point) -> f64 {
        match &self.outer {
            Outer::Canvas => self.canvas_sdf(p),
            Outer::Curve(c) => c.sdf(p),
        }
    }

    /// Nearest point on the outer boundary.
    pub fn outer_project(&self, p: Point) -> Point {
        match &self.outer {
            Outer::Canvas => cube_project(self.s, self.t, self.d, p),
            Outer::Curve(c) => c.project(p),
        }
    }

    /// Whether `p` lies in the closed domain (within tolerance of it).
    pub fn inside_domain(&self, p: Point) -> bool {
        self.outer_sdf(p) <= self.eps_geo()
    }

    /// Region label of `p`: 0 outside the domain, 1 in the domain outside
    /// every interface, `i + 2` inside interface `i` (0-based). A point
    /// enclosed by several nested interfaces takes the highest-indexed one,
    /// so nested interfaces should be listed outermost first.
    pub fn region_label(&self, p: Point) -> usize {
        let eps = self.eps_geo();
        if self.outer_sdf(p) > eps {
            return 0;
        }
        let mut label = 1;
        for (i, c) in self.interfaces.iter().enumerate() {
            if c.sdf(p) <= eps {
                label = i + 2;
            }
        }
        label
    }

    /// Sampling-based well-formedness check: every curve lies in the canvas,
    /// interfaces sit strictly inside the domain (open-cut kinds only need
    /// to pass through it), and interfaces are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        let eps = self.eps_geo();
        let all_samples: Vec<Vec<Point>> = self
            .interfaces
            .iter()
            .map(|c| c.sample_points(VALIDATION_SAMPLES, self.s, self.t))
            .collect();

        if let Outer::Curve(c) = &self.outer {
            for p in c.sample_points(VALIDATION_SAMPLES, self.s, self.t) {
                if cube_sdf(self.s, self.t, self.d, p) > eps {
                    return Err(Error::geometry("outer boundary leaves the canvas"));
                }
            }
        }
        for (i, (c, samples)) in self.interfaces.iter().zip(&all_samples).enumerate() {
            if let Kind::PlaneZ { kappa } = &c.kind {
                if !(*kappa > self.s && *kappa < self.t) {
                    return Err(Error::geometry(format!("interface {i}: plane height {kappa} is not strictly inside the canvas")));
                }
            }
            if let Kind::VLine { x0 } = &c.kind {
                if !(*x0 > self.s && *x0 < self.t) {
                    return Err(Error::geometry(format!("interface {i}: line position {x0} is not strictly inside the canvas")));
                }
            }
            if c.is_open_cut() {
                if !samples.iter().any(|&p| self.outer_sdf(p) < 0.0) {
                    return Err(Error::geometry(format!("interface {i} does not pass through the domain")));
                }
            } else {
                for &p in samples {
                    if cube_sdf(self.s, self.t, self.d, p) > eps {
                        return Err(Error::geometry(format!("interface {i} leaves the canvas")));
                    }
                    if self.outer_sdf(p) >= 0.0 {
                        return Err(Error::geometry(format!("interface {i} is not strictly inside the domain")));
                    }
                }
            }
        }

        // Pairwise disjointness: the samples of one interface must sit
        // entirely on one side of the other (strictly nested interfaces are
        // legal; crossing or touching ones are not). Mixed or near-zero
        // signed distances flag a conflict.
        for i in 0..self.interfaces.len() {
            for j in 0..self.interfaces.len() {
                if i == j {
                    continue;
                }
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &p in &all_samples[j] {
                    let d = self.interfaces[i].sdf(p);
                    lo = lo.min(d);
                    hi = hi.max(d);
                }
                if lo <= eps && hi >= -eps {
                    return Err(Error::geometry(format!("interfaces {i} and {j} touch or cross")));
                }
            }
        }
        Ok(())
    }
}

/// Signed distance to the boundary of the cube `[s, t]^d`, negative inside.
pub fn cube_sdf(s: f64, t: f64, d: usize, p: Point) -> f64 {
    let mid = 0.5 * (s + t);
    let half = 0.5 * (t - s);
    let mut inside_max = f64::NEG_INFINITY;
    let mut out_sq = 0.0;
    for a in 0..d {
        let q = (p[a] - mid).abs() - half;
        inside_max = inside_max.max(q);
        if q > 0.0 {
            out_sq += q * q;
        }
    }
    if out_sq > 0.0 {
        out_sq.sqrt()
    } else {
        inside_max
    }
}

/// Nearest point on the boundary of the cube `[s, t]^d`. Interior points
/// move to the nearest face; ties resolve to the earliest axis, lower face
/// first.
pub fn cube_project(s: f64, t: f64, d: usize, p: Point) -> Point {
    let mut q = p;
    if cube_sdf(s, t, d, p) > 0.0 {
        for a in 0..d {
            q[a] = q[a].clamp(s, t);
        }
        return q;
    }
    let mut best_axis = 0;
    let mut best_face = s;
    let mut best_dist = f64::INFINITY;
    for a in 0..d {
        let lo = p[a] - s;
        let hi = t - p[a];
        if lo < best_dist {
            best_dist = lo;
            best_axis = a;
            best_face = s;
        }
        if hi < best_dist {
            best_dist = hi;
            best_axis = a;
            best_face = t;
        }
    }
    q[best_axis] = best_face;
    q
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Squared distance from `p` to segment `a..b` and the nearest point.
#[inline]
fn segment_nearest(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> ([f64; 2], f64) {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (q, dist2(q, p))
}

/// Even-odd crossing test for a closed polyline.
fn point_in_polygon(vertices: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let vi = vertices[i];
        let vj = vertices[j];
        if (vi[1] > p[1]) != (vj[1] > p[1]) {
            let x_cross = vi[0] + (p[1] - vi[1]) / (vj[1] - vi[1]) * (vj[0] - vi[0]);
            if p[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn polyline_sdf(vertices: &[[f64; 2]], p: [f64; 2]) -> f64 {
    let n = vertices.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (_, d2) = segment_nearest(vertices[i], vertices[(i + 1) % n], p);
        if d2 < best {
            best = d2;
        }
    }
    let dist = best.sqrt();
    if point_in_polygon(vertices, p) {
        -dist
    } else {
        dist
    }
}

fn polyline_project(vertices: &[[f64; 2]], p: [f64; 2]) -> [f64; 2] {
    let n = vertices.len();
    let mut best_q = vertices[0];
    let mut best_d2 = f64::INFINITY;
    for i in 0..n {
        let (q, d2) = segment_nearest(vertices[i], vertices[(i + 1) % n], p);
        // Strict comparison keeps the earliest segment on ties.
        if d2 < best_d2 {
            best_d2 = d2;
            best_q = q;
        }
    }
    best_q
}

/// First pair of non-adjacent segments that intersect, if any.
fn first_self_intersection(vertices: &[[f64; 2]]) -> Option<(usize, usize)> {
    let n = vertices.len();
    for i in 0..n {
        let a1 = vertices[i];
        let a2 = vertices[(i + 1) % n];
        for j in (i + 2)..n {
            // Skip the closing segment's adjacency with segment 0.
            if i == 0 && j == n - 1 {
                continue;
            }
            let b1 = vertices[j];
            let b2 = vertices[(j + 1) % n];
            if segments_intersect(a1, a2, b1, b2) {
                return Some((i, j));
            }
        }
    }
    None
}

#[inline]
fn orient(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn segments_intersect(a1: [f64; 2], a2: [f64; 2], b1: [f64; 2], b2: [f64; 2]) -> bool {
    let d1 = orient(b1, b2, a1);
    let d2 = orient(b1, b2, a2);
    let d3 = orient(a1, a2, b1);
    let d4 = orient(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |d: f64, p: [f64; 2], q: [f64; 2], r: [f64; 2]| {
        d == 0.0
            && r[0] >= p[0].min(q[0])
            && r[0] <= p[0].max(q[0])
            && r[1] >= p[1].min(q[1])
            && r[1] <= p[1].max(q[1])
    };
    on(d1, b1, b2, a1) || on(d2, b1, b2, a2) || on(d3, a1, a2, b1) || on(d4, a1, a2, b2)
}

/// `samples` points at uniform arc length along a closed polyline.
fn arc_length_samples(vertices: &[[f64; 2]], samples: usize) -> Vec<Point> {
    resample_closed(vertices, samples).into_iter().map(|v| [v[0], v[1], 0.0]).collect()
}

/// Resamples a closed polyline to `count` nodes at uniform arc length,
/// starting from vertex 0.
fn resample_closed(vertices: &[[f64; 2]], count: usize) -> Vec<[f64; 2]> {
    let n = vertices.len();
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    let mut total = 0.0;
    for i in 0..n {
        total += dist2(vertices[i], vertices[(i + 1) % n]).sqrt();
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for j in 0..count {
        let target = total * j as f64 / count as f64;
        while seg + 1 < n && cumulative[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cumulative[seg + 1] - cumulative[seg];
        let frac = if seg_len > 0.0 { (target - cumulative[seg]) / seg_len } else { 0.0 };
        let a = vertices[seg];
        let b = vertices[(seg + 1) % n];
        out.push([a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1])]);
    }
    out
}

/// Signed distance from `local` (ellipse-centered coordinates) to the
/// ellipse with the given semi-axes.
fn ellipse_sdf(semi_axes: [f64; 2], local: [f64; 2]) -> f64 {
    let q = ellipse_project(semi_axes, local);
    let dist = dist2(q, local).sqrt();
    let level = (local[0] / semi_axes[0]).powi(2) + (local[1] / semi_axes[1]).powi(2);
    if level < 1.0 {
        -dist
    } else {
        dist
    }
}

/// Nearest point on the ellipse boundary from `local` coordinates.
/// Quadrant-folded bisection on the stationarity condition; exact for
/// points on the axes including the evolute region, where the nearest
/// point leaves the axis.
fn ellipse_project(semi_axes: [f64; 2], local: [f64; 2]) -> [f64; 2] {
    let [a, b] = semi_axes;
    if a == b {
        let rho = (local[0] * local[0] + local[1] * local[1]).sqrt();
        if rho == 0.0 {
            // Center of a circle: parameter zero, the point at angle 0.
            return [a, 0.0];
        }
        return [local[0] / rho * a, local[1] / rho * a];
    }
    // Fold into the closed first quadrant; remember signs for unfolding.
    // Zero components keep a positive sign so ties resolve toward the
    // earlier curve parameter.
    let sx = if local[0] < 0.0 { -1.0 } else { 1.0 };
    let sy = if local[1] < 0.0 { -1.0 } else { 1.0 };
    let px = local[0].abs();
    let py = local[1].abs();

    let q = if px == 0.0 && py == 0.0 {
        // Center: nearest points sit on the minor axis; parameter order
        // prefers angle 0 when the x-axis is minor, angle pi/2 otherwise.
        if a <= b {
            [a, 0.0]
        } else {
            [0.0, b]
        }
    } else if py == 0.0 {
        // On the x-axis: off-axis nearest point inside the evolute cusp.
        let cusp = (a * a - b * b) / a;
        if a > b && px < cusp {
            let x = a * a * px / (a * a - b * b);
            let y = b * (1.0 - (x / a) * (x / a)).max(0.0).sqrt();
            [x, y]
        } else {
            [a, 0.0]
        }
    } else if px == 0.0 {
        let cusp = (b * b - a * a) / b;
        if b > a && py < cusp {
            let y = b * b * py / (b * b - a * a);
            let x = a * (1.0 - (y / b) * (y / b)).max(0.0).sqrt();
            [x, y]
        } else {
            [0.0, b]
        }
    } else {
        // General position: solve F(t) = (a*px/(t+a^2))^2 + (b*py/(t+b^2))^2 - 1 = 0
        // for t in (-min(a,b)^2, inf); F is strictly decreasing there.
        let t_lo_barrier = -(a.min(b)).powi(2);
        let mut lo = t_lo_barrier + 1e-300;
        // Expand an upper bracket: F < 0 for large t.
        let mut hi = (a * px).hypot(b * py);
        let f = |t: f64| (a * px / (t + a * a)).powi(2) + (b * py / (t + b * b)).powi(2) - 1.0;
        while f(hi) > 0.0 {
            hi *= 2.0;
        }
        // The barrier end diverges to +inf, so the root is bracketed.
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        [(a * a * px / (t + a * a)).clamp(0.0, a), (b * b * py / (t + b * b)).clamp(0.0, b)]
    };
    [sx * q[0], sy * q[1]]
}

fn square_project(center: [f64; 2], half: f64, p: [f64; 2]) -> [f64; 2] {
    let lo = [center[0] - half, center[1] - half];
    let hi = [center[0] + half, center[1] + half];
    let inside = p[0] > lo[0] && p[0] < hi[0] && p[1] > lo[1] && p[1] < hi[1];
    if !inside {
        return [p[0].clamp(lo[0], hi[0]), p[1].clamp(lo[1], hi[1])];
    }
    // Interior: push to the nearest edge. Candidates follow the curve
    // parameter (lower-left corner, counterclockwise): bottom, right,
    // top, left; strict comparison keeps the earliest on ties.
    let candidates = [
        [p[0], lo[1]],
        [hi[0], p[1]],
        [p[0], hi[1]],
        [lo[0], p[1]],
    ];
    let mut best = candidates[0];
    let mut best_d2 = dist2(candidates[0], p);
    for c in &candidates[1..] {
        let d2 = dist2(*c, p);
        if d2 < best_d2 {
            best_d2 = d2;
            best = *c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_sdf_and_projection() {
        let c = ClosedCurve::circle([0.5, 0.5], 0.3).unwrap();
        assert_abs_diff_eq!(c.sdf([0.5, 0.5, 0.0]), -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(c.sdf([0.9, 0.5, 0.0]), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(c.sdf([0.5, 0.8, 0.0]), 0.0, epsilon = 1e-15);
        // Center projects to the angle-zero point.
        let q = c.project([0.5, 0.5, 0.0]);
        assert_eq!(q[0], 0.8);
        assert_eq!(q[1], 0.5);
        let q = c.project([0.5, 1.0, 0.0]);
        assert_abs_diff_eq!(q[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 0.8, epsilon = 1e-12);
    }

    #[test]
    fn ellipse_axis_cases() {
        let e = ClosedCurve::ellipse([0.0, 0.0], [2.0, 1.0]).unwrap();
        // Focus-side point on the major axis inside the evolute: nearest
        // point leaves the axis, positive-y branch wins the tie.
        let q = e.project([0.5, 0.0, 0.0]);
        assert!(q[1] > 0.0);
        // The stationarity condition holds: (p - q) parallel to the normal
        // (q_x/a^2, q_y/b^2).
        let nrm = [q[0] / 4.0, q[1] / 1.0];
        let dp = [0.5 - q[0], -q[1]];
        let cross = nrm[0] * dp[1] - nrm[1] * dp[0];
        assert_abs_diff_eq!(cross, 0.0, epsilon = 1e-12);
        // Outside along the minor axis: projection stays on the axis.
        let q = e.project([0.0, 3.0, 0.0]);
        assert_abs_diff_eq!(q[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.sdf([0.0, 3.0, 0.0]), 2.0, epsilon = 1e-12);
        // General outside point: distance consistent with projection.
        let p = [1.7, 1.4, 0.0];
        let q = e.project(p);
        let level: f64 = (q[0] / 2.0).powi(2) + (q[1] / 1.0).powi(2);
        assert_abs_diff_eq!(level, 1.0, epsilon = 1e-10);
        assert!(e.sdf(p) > 0.0);
    }

    #[test]
    fn ellipse_sdf_matches_sampled_distance() {
        let e = ClosedCurve::ellipse([0.2, -0.1], [0.4, 0.25]).unwrap();
        let probes =
            [[0.2, -0.1, 0.0], [0.55, 0.05, 0.0], [0.2, 0.4, 0.0], [-0.4, -0.4, 0.0], [0.25, -0.12, 0.0]];
        for p in probes {
            // Brute-force distance over a dense angular sweep.
            let mut brute = f64::INFINITY;
            for j in 0..200_000 {
                let th = 2.0 * std::f64::consts::PI * j as f64 / 200_000.0;
                let q = [0.2 + 0.4 * th.cos(), -0.1 + 0.25 * th.sin()];
                brute = brute.min(dist2(q, [p[0], p[1]]).sqrt());
            }
            assert_abs_diff_eq!(e.sdf(p).abs(), brute, epsilon = 1e-7);
        }
    }

    #[test]
    fn square_sdf_inside_outside_corner() {
        let sq = ClosedCurve::axis_square([0.5, 0.5], 0.4).unwrap();
        assert_abs_diff_eq!(sq.sdf([0.5, 0.5, 0.0]), -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(sq.sdf([0.5, 0.75, 0.0]), 0.05, epsilon = 1e-15);
        // Corner region: Euclidean distance to the corner vertex.
        let d = sq.sdf([0.8, 0.8, 0.0]);
        assert_abs_diff_eq!(d, (2.0f64).sqrt() * 0.1, epsilon = 1e-15);
        // Center projection tie-break: with exactly representable edges all
        // four edge distances agree bit-for-bit and the bottom edge, the
        // earliest along the curve parameter, wins.
        let sq = ClosedCurve::axis_square([0.5, 0.5], 0.5).unwrap();
        let q = sq.project([0.5, 0.5, 0.0]);
        assert_eq!(q, [0.5, 0.25, 0.0]);
    }

    #[test]
    fn star_with_equal_radii_matches_circle() {
        let star = ClosedCurve::star([0.0, 0.0], vec![0.3; 100]).unwrap();
        let circle = ClosedCurve::circle([0.0, 0.0], 0.3).unwrap();
        for p in [[0.1, 0.05, 0.0], [0.4, 0.2, 0.0], [-0.25, 0.1, 0.0], [0.0, -0.35, 0.0]] {
            assert_abs_diff_eq!(star.sdf(p), circle.sdf(p), epsilon = 1e-3);
        }
    }

    #[test]
    fn star_rejects_bad_radii() {
        assert!(ClosedCurve::star([0.0, 0.0], vec![0.1, 0.2]).is_err());
        assert!(ClosedCurve::star([0.0, 0.0], vec![0.1, -0.2, 0.3]).is_err());
    }

    #[test]
    fn polyline_sign_and_simplicity() {
        let tri = ClosedCurve::polyline(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(tri.sdf([0.2, 0.2, 0.0]) < 0.0);
        assert!(tri.sdf([0.8, 0.8, 0.0]) > 0.0);
        assert_abs_diff_eq!(tri.sdf([0.5, -0.25, 0.0]), 0.25, epsilon = 1e-15);
        // Bowtie self-intersects.
        let bow = ClosedCurve::polyline(vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]);
        assert!(bow.is_err());
    }

    #[test]
    fn plane_and_line_kinds() {
        let pl = ClosedCurve::plane_z(0.4).unwrap();
        assert_eq!(pl.dim(), 3);
        assert_abs_diff_eq!(pl.sdf([0.1, 0.9, 0.1]), -0.3, epsilon = 1e-15);
        assert_eq!(pl.project([0.2, 0.3, 0.9]), [0.2, 0.3, 0.4]);
        let vl = ClosedCurve::vline(0.0).unwrap();
        assert!(vl.sdf([-0.2, 0.3, 0.0]) < 0.0);
        assert!(vl.sdf([0.2, 0.3, 0.0]) > 0.0);
        assert_eq!(vl.project([0.2, 0.3, 0.0]), [0.0, 0.3, 0.0]);
    }

    #[test]
    fn region_labels_with_nested_interfaces() {
        let outer_ring = ClosedCurve::circle([0.5, 0.5], 0.4).unwrap();
        let inner_ring = ClosedCurve::circle([0.5, 0.5], 0.2).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![outer_ring, inner_ring]).unwrap();
        assert_eq!(geom.region_label([1.5, 0.5, 0.0]), 0);
        assert_eq!(geom.region_label([0.02, 0.02, 0.0]), 1);
        assert_eq!(geom.region_label([0.5, 0.85, 0.0]), 2);
        // Innermost containing interface wins.
        assert_eq!(geom.region_label([0.5, 0.5, 0.0]), 3);
    }

    #[test]
    fn region_label_on_curve_counts_as_inside() {
        let circ = ClosedCurve::circle([0.5, 0.5], 0.3).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![circ]).unwrap();
        assert_eq!(geom.region_label([0.8, 0.5, 0.0]), 2);
        // Canvas boundary points belong to the domain.
        assert_eq!(geom.region_label([0.0, 0.5, 0.0]), 1);
        assert_eq!(geom.region_label([1.0, 1.0, 0.0]), 1);
    }

    #[test]
    fn validation_catches_escape_and_overlap() {
        let escape = ClosedCurve::circle([0.9, 0.5], 0.3).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![escape]).unwrap();
        assert!(geom.validate().is_err());

        let a = ClosedCurve::circle([0.35, 0.5], 0.2).unwrap();
        let b = ClosedCurve::circle([0.65, 0.5], 0.2).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![a, b]).unwrap();
        assert!(geom.validate().is_err());

        let a = ClosedCurve::circle([0.3, 0.5], 0.15).unwrap();
        let b = ClosedCurve::circle([0.7, 0.5], 0.15).unwrap();
        let geom = Geometry::new(0.0, 1.0, 2, Outer::Canvas, vec![a, b]).unwrap();
        geom.validate().unwrap();
    }

    #[test]
    fn validation_accepts_boundary_crossing_line() {
        let star = ClosedCurve::star([0.0, 0.0], vec![0.2; 64]).unwrap();
        let cut = ClosedCurve::vline(0.0).unwrap();
        let geom = Geometry::new(-0.5, 0.5, 2, Outer::Curve(star), vec![cut]).unwrap();
        geom.validate().unwrap();
    }

    #[test]
    fn cube_sdf_and_projation() {
        assert_abs_diff_eq!(cube_sdf(0.0, 1.0, 2, [0.5, 0.5, 0.0]), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cube_sdf(0.0, 1.0, 2, [0.5, 0.9, 0.0]), -0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(cube_sdf(0.0, 1.0, 2, [1.5, 0.5, 0.0]), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cube_sdf(0.0, 1.0, 3, [0.5, 0.5, 0.2]), -0.2, epsilon = 1e-15);
        let q = cube_project(0.0, 1.0, 2, [0.3, 0.9, 0.0]);
        assert_eq!(q, [0.3, 1.0, 0.0]);
        let q = cube_project(0.0, 1.0, 2, [1.4, 0.6, 0.0]);
        assert_eq!(q, [1.0, 0.6, 0.0]);
    }

    #[test]
    fn normals_point_outward() {
        let c = ClosedCurve::circle([0.0, 0.0], 0.3).unwrap();
        let n = c.normal([0.3, 0.0, 0.0], 1.0);
        assert_abs_diff_eq!(n[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(n[1], 0.0, epsilon = 1e-6);
        let pl = ClosedCurve::plane_z(0.5).unwrap();
        let n = pl.normal([0.2, 0.2, 0.5], 1.0);
        assert_abs_diff_eq!(n[2], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn perturb_moves_nodes_and_reports_magnitude() {
        let circle = ClosedCurve::circle([0.5, 0.5], 0.3).unwrap();
        let nodes = circle.polyline_nodes().unwrap();
        let mut disp = vec![[0.0, 0.0]; nodes.len()];
        disp[7] = [0.003, -0.004];
        let (curve, mag) = perturb(&circle, &Perturbation { displacements: disp }).unwrap();
        assert_abs_diff_eq!(mag, 0.005, epsilon = 1e-15);
        let moved = curve.polyline_nodes().unwrap();
        assert_abs_diff_eq!(moved[7][0], nodes[7][0] + 0.003, epsilon = 1e-15);
        // Zero perturbation reproduces the node set exactly.
        let zero = Perturbation { displacements: vec![[0.0, 0.0]; nodes.len()] };
        let (same, mag) = perturb(&circle, &zero).unwrap();
        assert_eq!(mag, 0.0);
        assert_eq!(same.polyline_nodes().unwrap(), nodes);
    }

    #[test]
    fn perturb_rejects_mismatch_and_self_intersection() {
        let circle = ClosedCurve::circle([0.5, 0.5], 0.3).unwrap();
        let bad = Perturbation { displacements: vec![[0.0, 0.0]; 7] };
        assert!(perturb(&circle, &bad).is_err());

        let sq = ClosedCurve::polyline(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        // Drag one corner far enough to fold the polygon into a bowtie.
        let disp = vec![[0.0, 0.0], [-0.5, 2.0], [0.0, 0.0], [0.0, 0.0]];
        assert!(perturb(&sq, &Perturbation { displacements: disp }).is_err());
    }

    #[test]
    fn sdf_gradient_has_unit_norm_away_from_curve() {
        // Eikonal property probed by central differences on a coarse grid.
        // A gently varying star keeps its skeleton away from the probe
        // collar; strongly concave shapes push medial-axis kinks right up
        // to the curve, where the gradient legitimately degrades.
        let star_radii: Vec<f64> =
            (0..16).map(|k| 0.3 + 0.03 * (2.0 * std::f64::consts::PI * k as f64 / 16.0).sin()).collect();
        let curves = [
            ClosedCurve::circle([0.5, 0.5], 0.3).unwrap(),
            ClosedCurve::axis_square([0.5, 0.5], 0.4).unwrap(),
            ClosedCurve::star([0.5, 0.5], star_radii).unwrap(),
        ];
        let h = 1.0 / 32.0;
        for curve in &curves {
            for iy in 1..32 {
                for ix in 1..32 {
                    let p = [ix as f64 * h, iy as f64 * h, 0.0];
                    let d = curve.sdf(p);
                    // Probe a collar near the curve: far enough out that the
                    // difference stencil clears the curve, close enough in to
                    // stay off the medial axis deep inside.
                    if d.abs() < 2.0 * h || d.abs() > 6.0 * h {
                        continue;
                    }
                    let gx = (curve.sdf([p[0] + h, p[1], 0.0]) - curve.sdf([p[0] - h, p[1], 0.0])) / (2.0 * h);
                    let gy = (curve.sdf([p[0], p[1] + h, 0.0]) - curve.sdf([p[0], p[1] - h, 0.0])) / (2.0 * h);
                    let norm = gx.hypot(gy);
                    // Away from the curve and the medial axis the gradient is
                    // a unit vector; kinks can make individual samples dip, so
                    // the bound is loose.
                    assert!(
                        (norm - 1.0).abs() < 10.0 * h,
                        "{}: |grad| = {norm} at ({}, {})",
                        curve.kind_name(),
                        p[0],
                        p[1]
                    );
                }
            }
        }
    }
}
