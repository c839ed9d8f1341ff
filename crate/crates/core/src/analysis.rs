//! Measurement harness: encoding discrepancy against supersampled
//! quadrature, log-log rate fits, interface-continuity probes, paired
//! head comparisons, and CSV/PGM emitters for the results.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::data::gp::periodic_samples;
use crate::data::Dataset;
use crate::encode::{GeometryScheme, Target};
use crate::error::{Error, Result};
use crate::fdm::solve_elliptic_interface;
use crate::fno::{quadrature_weights, relative_l2, CellContext, FnoModel, HeadKind};
use crate::geometry::{perturb, ClosedCurve, Geometry, Outer, Perturbation};
use crate::grid::{ChannelTensor, GridSpec};
use crate::problem::InterfaceProblem;

/// Default quadrature refinement: oracle points per cell per axis.
pub const ENCODING_SUPERSAMPLE: usize = 16;

/// Correlation length of probe directions, in radians of the closed
/// curve parameter (period `2*pi`).
const PROBE_LENGTHSCALE: f64 = 0.5;

/// One convergence study: errors over a ladder of resolutions and the
/// power law fitted through them. `resolutions` is strictly increasing
/// and `errors` positive; `fit_rate` is the only constructor.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    pub resolutions: Vec<usize>,
    pub errors: Vec<f64>,
    pub fitted_slope: f64,
    pub intercept: f64,
    pub fit_r2: f64,
}

/// Column order of `ConvergenceRecord::write_csv`.
pub const CONVERGENCE_CSV_HEADER: [&str; 2] = ["resolution", "error"];

impl ConvergenceRecord {
    /// One `resolution,error` row per study cell, in ladder order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .resolutions
            .iter()
            .zip(&self.errors)
            .map(|(n, e)| vec![n.to_string(), format!("{e:e}")])
            .collect();
        write_csv(path, &CONVERGENCE_CSV_HEADER, &rows)
    }
}

/// Ordinary least squares of `y` on `x`; returns slope, intercept and
/// R^2, or `None` when `x` has no spread.
fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = (syy - slope * sxy).max(0.0);
    let r2 = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    Some((slope, intercept, r2))
}

/// Fits `log E = intercept + slope * log n` through at least three
/// positive points.
pub fn fit_rate(resolutions: &[usize], errors: &[f64]) -> Result<ConvergenceRecord> {
    if resolutions.len() != errors.len() {
        return Err(Error::invalid(format!(
            "{} resolutions against {} errors",
            resolutions.len(),
            errors.len()
        )));
    }
    if resolutions.len() < 3 {
        return Err(Error::invalid("rate fit needs at least 3 points"));
    }
    if resolutions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("resolutions must be strictly increasing"));
    }
    for &e in errors {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::invalid(format!("rate fit needs positive errors, got {e}")));
        }
    }
    let x: Vec<f64> = resolutions.iter().map(|&n| (n as f64).ln()).collect();
    let y: Vec<f64> = errors.iter().map(|&e| e.ln()).collect();
    let (fitted_slope, intercept, fit_r2) =
        ols(&x, &y).expect("distinct resolutions have log spread");
    Ok(ConvergenceRecord {
        resolutions: resolutions.to_vec(),
        errors: errors.to_vec(),
        fitted_slope,
        intercept,
        fit_r2,
    })
}

/// RMS encoding discrepancy of one curve on one grid, by midpoint
/// quadrature with `ENCODING_SUPERSAMPLE` points per cell per axis.
///
/// `Characteristic` compares the exact interior indicator against its
/// cell-centered samples held constant per cell, so a region whose
/// boundary runs along cell edges encodes exactly. `Sdf` compares the
/// exact signed distance of the domain that the canvas and the curve
/// bound together against the bilinear interpolant of its grid-point
/// samples.
pub fn encoding_error(curve: &ClosedCurve, grid: &GridSpec, scheme: GeometryScheme) -> Result<f64> {
    encoding_error_with(curve, grid, scheme, ENCODING_SUPERSAMPLE)
}

/// `encoding_error` with an explicit supersampling factor. The floor of
/// the measurement is about one oracle cell of area; below 8 points per
/// cell per axis that floor swamps the signal, so such factors are
/// refused.
pub fn encoding_error_with(
    curve: &ClosedCurve,
    grid: &GridSpec,
    scheme: GeometryScheme,
    supersample: usize,
) -> Result<f64> {
    if grid.d != 2 {
        return Err(Error::unsupported("encoding studies are two-dimensional"));
    }
    if supersample < 8 {
        return Err(Error::invalid(format!(
            "supersampling at {supersample} points per cell leaves too few quadrature points"
        )));
    }
    let geom = Geometry::new(grid.s, grid.t, 2, Outer::Canvas, vec![curve.clone()])?;
    geom.validate()?;
    let cells = grid.cells_per_axis();
    let q = supersample * cells;
    let hq = grid.extent() / q as f64;
    let w = hq * hq;
    match scheme {
        GeometryScheme::Characteristic => {
            let inside: Vec<bool> = (0..grid.num_cells())
                .map(|c| curve.sdf(grid.cell_center(c)) <= 0.0)
                .collect();
            let mut mismatch: u64 = 0;
            for jy in 0..q {
                let py = grid.s + (jy as f64 + 0.5) * hq;
                let cy = jy / supersample;
                for jx in 0..q {
                    let px = grid.s + (jx as f64 + 0.5) * hq;
                    let exact = curve.sdf([px, py, 0.0]) <= 0.0;
                    if exact != inside[grid.cell_index(jx / supersample, cy, 0)] {
                        mismatch += 1;
                    }
                }
            }
            Ok((mismatch as f64 * w).sqrt())
        }
        GeometryScheme::Sdf => {
            let phi = |p: [f64; 3]| geom.canvas_sdf(p).max(-curve.sdf(p));
            let samples: Vec<f64> = (0..grid.num_points()).map(|k| phi(grid.point(k))).collect();
            let field = ChannelTensor::single(*grid, samples)?;
            let mut acc = 0.0;
            for jy in 0..q {
                let py = grid.s + (jy as f64 + 0.5) * hq;
                for jx in 0..q {
                    let p = [grid.s + (jx as f64 + 0.5) * hq, py, 0.0];
                    let d = phi(p) - field.interp(0, p);
                    acc += d * d;
                }
            }
            Ok((acc * w).sqrt())
        }
    }
}

/// One probe cell: a direction scaled to one amplitude, solved against
/// the unperturbed reference. A geometrically invalid perturbation is
/// recorded as skipped, its `delta_l2` is NaN and `note` explains why.
#[derive(Debug, Clone)]
pub struct ProbeRow {
    pub direction: usize,
    pub amplitude: f64,
    /// Applied max node displacement, `amplitude * sup |direction|`.
    pub displacement: f64,
    pub delta_l2: f64,
    pub skipped: bool,
    pub note: String,
}

/// Continuity probe results: the full cell table plus ratio and slope
/// summaries over the cells with a positive displacement. Summaries are
/// `None` when no cell qualifies; the slope additionally needs two
/// cells with distinct positive displacement and a positive delta.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    pub max_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    pub slope: Option<f64>,
}

/// Column order of `ProbeReport::write_csv`.
pub const PROBE_CSV_HEADER: [&str; 6] =
    ["direction", "amplitude", "displacement", "delta_l2", "skipped", "note"];

impl ProbeReport {
    /// One row per probe cell, directions outermost, amplitudes in call
    /// order. Skipped cells leave `delta_l2` empty.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.direction.to_string(),
                    format!("{:e}", r.amplitude),
                    format!("{:e}", r.displacement),
                    if r.skipped { String::new() } else { format!("{:e}", r.delta_l2) },
                    r.skipped.to_string(),
                    r.note.clone(),
                ]
            })
            .collect();
        write_csv(path, &PROBE_CSV_HEADER, &rows)
    }
}

/// Solution response to normal perturbations of the interface. Each
/// direction is a smooth periodic random field over the curve nodes,
/// normalized to unit sup; each amplitude scales it along the node
/// normals, the jump values carry over unchanged, and the perturbed
/// problem is re-solved on `grid`. The domain boundary never moves.
pub fn continuity_probe(
    base: &InterfaceProblem,
    grid: &GridSpec,
    amplitudes: &[f64],
    n_directions: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if n_directions == 0 {
        return Err(Error::invalid("probe needs at least one direction"));
    }
    let nodes = single_interface(base)?.polyline_nodes()?;
    let mut directions = Vec::with_capacity(n_directions);
    for j in 0..n_directions {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(j as u64 + 1);
        let mut g = periodic_samples(nodes.len(), PROBE_LENGTHSCALE, &mut rng);
        let sup = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > 0.0 {
            for v in &mut g {
                *v /= sup;
            }
        }
        directions.push(g);
    }
    continuity_probe_with_directions(base, grid, amplitudes, &directions)
}

/// `continuity_probe` over caller-supplied scalar direction fields, one
/// value per curve node, applied along the node normals as given: a
/// zero direction measures an identity perturbation and reports zero
/// deltas.
pub fn continuity_probe_with_directions(
    base: &InterfaceProblem,
    grid: &GridSpec,
    amplitudes: &[f64],
    directions: &[Vec<f64>],
) -> Result<ProbeReport> {
    base.check_shapes()?;
    let curve = single_interface(base)?;
    if amplitudes.is_empty() || directions.is_empty() {
        return Err(Error::invalid("probe needs at least one amplitude and one direction"));
    }
    if amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::invalid("amplitudes must be finite and non-negative"));
    }
    let nodes = curve.polyline_nodes()?;
    for (j, dir) in directions.iter().enumerate() {
        if dir.len() != nodes.len() {
            return Err(Error::invalid(format!(
                "direction {j} has {} values for a curve with {} nodes",
                dir.len(),
                nodes.len()
            )));
        }
        if dir.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("direction {j} holds a non-finite value")));
        }
    }
    let normals = closed_polyline_normals(&nodes)?;

    // The reference is the zero-amplitude member of the perturbation
    // family, the polyline form of the interface, so amplitude zero
    // reproduces it bit for bit and small amplitudes measure pure
    // perturbation response.
    let reference = swap_interface(base, ClosedCurve::polyline(nodes.clone())?)?;
    let u_ref = solve_elliptic_interface(&reference, grid)?;
    let w = quadrature_weights(grid);

    let mut tasks = Vec::with_capacity(directions.len() * amplitudes.len());
    for j in 0..directions.len() {
        for &a in amplitudes {
            tasks.push((j, a));
        }
    }
    let rows: Vec<ProbeRow> = tasks
        .par_iter()
        .map(|&(j, a)| {
            let displacements: Vec<[f64; 2]> = normals
                .iter()
                .zip(&directions[j])
                .map(|(nv, g)| [a * g * nv[0], a * g * nv[1]])
                .collect();
            let pert = Perturbation { displacements };
            let applied = pert.magnitude();
            let outcome = perturb(curve, &pert)
                .and_then(|(moved, _)| swap_interface(base, moved))
                .and_then(|p| solve_elliptic_interface(&p, grid));
            match outcome {
                Ok(u) => {
                    let mut acc = 0.0;
                    for ((&up, &ur), &wt) in u.channel(0).iter().zip(u_ref.channel(0)).zip(&w) {
                        let d = up - ur;
                        acc += wt * d * d;
                    }
                    ProbeRow {
                        direction: j,
                        amplitude: a,
                        displacement: applied,
                        delta_l2: acc.sqrt(),
                        skipped: false,
                        note: String::new(),
                    }
                }
                Err(e) => ProbeRow {
                    direction: j,
                    amplitude: a,
                    displacement: applied,
                    delta_l2: f64::NAN,
                    skipped: true,
                    note: e.to_string(),
                },
            }
        })
        .collect();

    let mut ratios = Vec::new();
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for r in &rows {
        if r.skipped || !(r.displacement > 0.0) {
            continue;
        }
        ratios.push(r.delta_l2 / r.displacement);
        if r.delta_l2 > 0.0 {
            lx.push(r.displacement.ln());
            ly.push(r.delta_l2.ln());
        }
    }
    let max_ratio = ratios.iter().cloned().reduce(f64::max);
    let min_ratio = ratios.iter().cloned().reduce(f64::min);
    let slope = if lx.len() >= 2 { ols(&lx, &ly).map(|(s, _, _)| s) } else { None };
    Ok(ProbeReport { rows, max_ratio, min_ratio, slope })
}

fn single_interface(p: &InterfaceProblem) -> Result<&ClosedCurve> {
    match p.geometry.interfaces.as_slice() {
        [c] => Ok(c),
        other => Err(Error::unsupported(format!(
            "probe perturbs exactly one interface, geometry has {}",
            other.len()
        ))),
    }
}

fn swap_interface(base: &InterfaceProblem, curve: ClosedCurve) -> Result<InterfaceProblem> {
    let g = &base.geometry;
    let geometry = Geometry::new(g.s, g.t, g.d, g.outer.clone(), vec![curve])?;
    geometry.validate()?;
    let mut p = base.clone();
    p.geometry = geometry;
    Ok(p)
}

/// Unit normals of a closed polyline at its nodes, from the central
/// difference of neighboring nodes. Orientation follows the winding;
/// probe directions absorb the sign.
fn closed_polyline_normals(nodes: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let m = nodes.len();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let next = nodes[(i + 1) % m];
        let prev = nodes[(i + m - 1) % m];
        let t = [next[0] - prev[0], next[1] - prev[1]];
        let len = (t[0] * t[0] + t[1] * t[1]).sqrt();
        if !(len > 0.0) {
            return Err(Error::geometry("coincident neighbor nodes leave a normal undefined"));
        }
        out.push([t[1] / len, -t[0] / len]);
    }
    Ok(out)
}

/// One test sample of a head comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub index: usize,
    pub field_rel: f64,
    pub tfpm_rel: f64,
}

/// Paired relative-L2 errors of the two heads against fine ground
/// truth, per test sample and averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub mean_field: f64,
    pub mean_tfpm: f64,
}

/// Column order of `ComparisonReport::write_csv`.
pub const COMPARISON_CSV_HEADER: [&str; 3] = ["sample", "field_rel_l2", "tfpm_rel_l2"];

impl ComparisonReport {
    /// One row per test sample, in split order.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![r.index.to_string(), format!("{:e}", r.field_rel), format!("{:e}", r.tfpm_rel)]
            })
            .collect();
        write_csv(path, &COMPARISON_CSV_HEADER, &rows)
    }
}

/// Evaluates both heads of a coarse-trained pair against fine ground
/// truth over the test split: the field head's coarse prediction is
/// lifted to `fine` by bilinear interpolation, the coefficient head
/// reconstructs there directly, and both are scored against the
/// coefficient target evaluated on `fine`.
pub fn basis_comparison(
    coarse: &Dataset,
    model_field: &FnoModel,
    model_tfpm: &FnoModel,
    fine: &GridSpec,
) -> Result<ComparisonReport> {
    coarse.validate()?;
    if model_field.arch.head != HeadKind::Field {
        return Err(Error::invalid("first model must carry the field head"));
    }
    if model_tfpm.arch.head != HeadKind::TfpmCoeffs {
        return Err(Error::invalid("second model must carry the coefficient head"));
    }
    let test = &coarse.split.1;
    if test.is_empty() {
        return Err(Error::invalid("dataset has no test samples"));
    }
    let coarse_grid = coarse.samples[test[0]].input.tensor.grid;
    if fine.d != coarse_grid.d || fine.s != coarse_grid.s || fine.t != coarse_grid.t {
        return Err(Error::invalid("fine grid does not share the dataset canvas"));
    }
    let mut rows = Vec::with_capacity(test.len());
    let mut sum_field = 0.0;
    let mut sum_tfpm = 0.0;
    for &i in test {
        let sample = &coarse.samples[i];
        let tf = match &sample.target {
            Target::Tfpm(tf) => tf,
            Target::Field(_) => {
                return Err(Error::unsupported(
                    "head comparison needs coefficient targets carrying fine-grid ground truth",
                ))
            }
        };
        let truth = ChannelTensor::single(*fine, tf.sample_on(fine)?)?;
        let coarse_pred = model_field.forward(&sample.input.tensor)?;
        let field_pred = bilinear_upsample(&coarse_pred, fine)?;
        let ctx = CellContext::from_field_on(tf, &sample.input.tensor.grid)?;
        let tfpm_pred = model_tfpm.forward_tfpm(&sample.input.tensor, &ctx, fine)?;
        let field_rel = relative_l2(&field_pred, &truth)?.value;
        let tfpm_rel = relative_l2(&tfpm_pred, &truth)?.value;
        sum_field += field_rel;
        sum_tfpm += tfpm_rel;
        rows.push(ComparisonRow { index: i, field_rel, tfpm_rel });
    }
    let n = rows.len() as f64;
    Ok(ComparisonReport { rows, mean_field: sum_field / n, mean_tfpm: sum_tfpm / n })
}

/// Re-samples every channel onto `fine` by bilinear interpolation.
fn bilinear_upsample(field: &ChannelTensor, fine: &GridSpec) -> Result<ChannelTensor> {
    let g = &field.grid;
    if g.d != fine.d || g.s != fine.s || g.t != fine.t {
        return Err(Error::invalid("interpolation target does not share the source canvas"));
    }
    let mut out = ChannelTensor::zeros(*fine, field.channels);
    for c in 0..field.channels {
        let vals = out.channel_mut(c);
        for k in 0..fine.num_points() {
            vals[k] = field.interp(c, fine.point(k));
        }
    }
    Ok(out)
}

/// Writes rows under a fixed header. Fields holding a comma, quote or
/// newline are quoted with doubled inner quotes; every row must match
/// the header width.
pub fn write_csv(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::new();
    push_csv_row(&mut text, header.iter().copied());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::invalid(format!(
                "row {i} has {} fields under a {}-column header",
                row.len(),
                header.len()
            )));
        }
        push_csv_row(&mut text, row.iter().map(String::as_str));
    }
    fs::write(path, text)?;
    Ok(())
}

fn push_csv_row<'a>(text: &mut String, fields: impl Iterator<Item = &'a str>) {
    for (i, field) in fields.enumerate() {
        if i > 0 {
            text.push(',');
        }
        if field.contains([',', '"', '\n']) {
            text.push('"');
            for ch in field.chars() {
                if ch == '"' {
                    text.push('"');
                }
                text.push(ch);
            }
            text.push('"');
        } else {
            text.push_str(field);
        }
    }
    text.push('\n');
}

/// Writes one channel as a binary 8-bit grayscale PGM, rows top to
/// bottom (highest y first). Values map linearly, minimum to 0 and
/// maximum to 255; a constant channel comes out black.
pub fn write_pgm(path: impl AsRef<Path>, tensor: &ChannelTensor, channel: usize) -> Result<()> {
    let g = &tensor.grid;
    if g.d != 2 {
        return Err(Error::unsupported("image output is two-dimensional"));
    }
    if channel >= tensor.channels {
        return Err(Error::invalid(format!(
            "channel {channel} of a {}-channel tensor",
            tensor.channels
        )));
    }
    let vals = tensor.channel(channel);
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("image channel holds a non-finite value"));
    }
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut header = String::new();
    write!(header, "P5\n{} {}\n255\n", g.n, g.n).expect("writing to a string cannot fail");
    let mut bytes = header.into_bytes();
    bytes.reserve(g.n * g.n);
    for iy in (0..g.n).rev() {
        for ix in 0..g.n {
            let v = vals[g.index(ix, iy, 0)];
            let b = if span > 0.0 { ((v - lo) / span * 255.0).round() as u8 } else { 0 };
            bytes.push(b);
        }
    }
    fs::write(path, bytes)?;
    Ok(())
}
