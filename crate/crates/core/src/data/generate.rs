//! Sample synthesis for the five experiment families.
//!
//! Every sample is fully determined by `(seed, sample index)`: index `i`
//! draws from stream `i + 1` of a counter-mode generator seeded with the
//! dataset seed (stream 0 belongs to the train/test split), so any single
//! sample can be regenerated without running the rest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gp::{sample_gp_field, star_radii};
use super::Dataset;
use crate::encode::{
    assemble_input, encode_characteristic, encode_sdf, ChannelSelect, EncodeOptions,
    EncodedInput, EncodedSample, GeometryScheme, Target,
};
use crate::error::{Error, Result};
use crate::fdm::{run_transport, solve_elliptic_interface, TransportParams};
use crate::geometry::{ClosedCurve, Geometry, Outer};
use crate::grid::{ChannelTensor, GridSpec};
use crate::problem::{Coeff, InterfaceProblem};
use crate::tfpm;

const MAX_GEOMETRY_RETRIES: usize = 16;

/// Star boundaries carry this many polar radius samples.
const STAR_POINTS: usize = 100;
/// Star radius band as a fraction of the canvas half-width.
const STAR_RADIUS_RANGE: (f64, f64) = (0.25, 0.45);
const SQUARE_SIDE_FRACTION: f64 = 0.4;
/// Clearance kept between a sampled square and the canvas boundary.
const SQUARE_MARGIN_FRACTION: f64 = 0.05;
/// Plane height band as a fraction of the canvas extent.
const PLANE_KAPPA_RANGE: (f64, f64) = (0.2, 0.8);
/// Ellipse semi-axis band as a fraction of the canvas extent.
const ELLIPSE_AXIS_RANGE: (f64, f64) = (0.15, 0.3);

const TRANSPORT_RHO: f64 = 0.2;
const TRANSPORT_D_IN: f64 = 0.1;
const TRANSPORT_D_OUT: f64 = 0.5;
const TRANSPORT_DT: f64 = 0.01;
const TRANSPORT_T_END: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    /// Star-shaped domain, fixed midline cut, Gaussian-process source.
    OuterStar,
    /// Fixed square canvas, star-shaped interface, sampled jumps.
    InnerStar,
    /// Fixed canvas, translated square interface, exponential-basis targets.
    SquareTfpm,
    /// 3D canvas cut by a horizontal plane at sampled height.
    Planar3D,
    /// Diffusion across a resistive elliptical interface.
    Transport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Correlation length in canvas units.
    pub lengthscale: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarRange {
    pub lo: f64,
    pub hi: f64,
}

impl ScalarRange {
    pub fn fixed(v: f64) -> Self {
        ScalarRange { lo: v, hi: v }
    }

    pub fn varies(&self) -> bool {
        self.hi > self.lo
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> f64 {
        if self.varies() {
            rng.random_range(self.lo..=self.hi)
        } else {
            self.lo
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(Error::invalid(format!(
                "{name} range [{}, {}] is not an ordered finite interval",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpRanges {
    pub alpha: ScalarRange,
    pub beta: ScalarRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub n_samples: usize,
    pub grid: GridSpec,
    pub scheme: GeometryScheme,
    pub seed: u64,
    pub jump_ranges: JumpRanges,
    pub gp: GpConfig,
    /// Fraction of samples assigned to the training split.
    pub train_fraction: f64,
    /// Equilibrium partition coefficient of the transport interface.
    pub gamma_star: f64,
    /// Constant source used by the star-interface family.
    pub inner_source: f64,
}

impl ExperimentSpec {
    /// Paper defaults for one family: canvas, encoding scheme, jump ranges.
    pub fn preset(kind: ExperimentKind, n_samples: usize, n: usize, seed: u64) -> Result<Self> {
        let (s, t, d) = match kind {
            ExperimentKind::OuterStar => (-0.5, 0.5, 2),
            ExperimentKind::Planar3D => (0.0, 1.0, 3),
            _ => (0.0, 1.0, 2),
        };
        let grid = GridSpec::new(s, t, n, d)?;
        let scheme = match kind {
            ExperimentKind::OuterStar => GeometryScheme::Characteristic,
            _ => GeometryScheme::Sdf,
        };
        let jump_ranges = match kind {
            ExperimentKind::OuterStar => JumpRanges {
                alpha: ScalarRange::fixed(0.0),
                beta: ScalarRange { lo: 0.0, hi: 0.5 },
            },
            ExperimentKind::InnerStar => JumpRanges {
                alpha: ScalarRange { lo: 0.0, hi: 0.1 },
                beta: ScalarRange { lo: 0.0, hi: 0.1 },
            },
            ExperimentKind::SquareTfpm => JumpRanges {
                alpha: ScalarRange::fixed(0.02),
                beta: ScalarRange::fixed(0.02),
            },
            ExperimentKind::Planar3D => JumpRanges {
                alpha: ScalarRange::fixed(0.2),
                beta: ScalarRange::fixed(0.0),
            },
            ExperimentKind::Transport => JumpRanges {
                alpha: ScalarRange::fixed(0.0),
                beta: ScalarRange::fixed(0.0),
            },
        };
        let spec = ExperimentSpec {
            kind,
            n_samples,
            grid,
            scheme,
            seed,
            jump_ranges,
            gp: GpConfig { lengthscale: 0.2 * grid.extent(), variance: 1.0 },
            train_fraction: 0.8,
            gamma_star: 1.0,
            inner_source: 1.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::invalid("a dataset needs at least one sample"));
        }
        let want_d = if self.kind == ExperimentKind::Planar3D { 3 } else { 2 };
        if self.grid.d != want_d {
            return Err(Error::invalid(format!(
                "{:?} runs in {want_d}D but the grid has d = {}",
                self.kind, self.grid.d
            )));
        }
        self.jump_ranges.alpha.validate("alpha")?;
        self.jump_ranges.beta.validate("beta")?;
        if !(self.gp.lengthscale.is_finite() && self.gp.lengthscale > 0.0) {
            return Err(Error::invalid("GP lengthscale must be positive"));
        }
        if !(self.gp.variance.is_finite() && self.gp.variance >= 0.0) {
            return Err(Error::invalid("GP variance must be non-negative"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "train fraction {} outside (0, 1]",
                self.train_fraction
            )));
        }
        if !(self.gamma_star.is_finite() && self.gamma_star > 0.0) {
            return Err(Error::invalid("partition coefficient must be positive"));
        }
        if !self.inner_source.is_finite() {
            return Err(Error::invalid("inner source must be finite"));
        }
        Ok(())
    }

    /// Channels the samples of this family carry beyond geometry: anything
    /// constant across the dataset stays out of the tensor.
    fn select(&self) -> ChannelSelect {
        ChannelSelect {
            f: self.kind == ExperimentKind::OuterStar,
            alpha: self.jump_ranges.alpha.varies(),
            beta: self.jump_ranges.beta.varies(),
            ..ChannelSelect::NONE
        }
    }
}

/// Builds the full dataset: every sample independently keyed, then an
/// index shuffle on the dedicated split stream.
pub fn generate(spec: &ExperimentSpec) -> Result<Dataset> {
    spec.validate()?;
    let samples: Vec<EncodedSample> = (0..spec.n_samples)
        .into_par_iter()
        .map(|i| generate_sample(spec, i))
        .collect::<Result<_>>()?;
    let split = make_split(spec.n_samples, spec.train_fraction, spec.seed);
    let ds = Dataset { spec: spec.clone(), samples, split };
    ds.validate()?;
    Ok(ds)
}

/// Regenerates sample `i` alone; `generate` produces exactly this value at
/// position `i`.
pub fn generate_sample(spec: &ExperimentSpec, i: usize) -> Result<EncodedSample> {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64 + 1);
    match spec.kind {
        ExperimentKind::OuterStar => outer_star(spec, &mut rng),
        ExperimentKind::InnerStar => inner_star(spec, &mut rng),
        ExperimentKind::SquareTfpm => square_tfpm(spec, &mut rng),
        ExperimentKind::Planar3D => planar_3d(spec, &mut rng),
        ExperimentKind::Transport => transport(spec, &mut rng),
    }
}

fn make_split(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher-Yates, explicit so the draw count is pinned.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut n_train = (n as f64 * train_fraction).round() as usize;
    n_train = n_train.clamp(1, n);
    let mut train: Vec<usize> = idx[..n_train].to_vec();
    let mut test: Vec<usize> = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Draws geometry candidates until one validates, with a bounded budget.
fn draw_geometry(
    make: impl Fn(&mut ChaCha20Rng) -> Result<Geometry>,
    rng: &mut ChaCha20Rng,
) -> Result<Geometry> {
    let mut last = None;
    for _ in 0..MAX_GEOMETRY_RETRIES {
        match make(rng).and_then(|g| g.validate().map(|_| g)) {
            Ok(g) => return Ok(g),
            Err(e) => last = Some(e),
        }
    }
    Err(Error::geometry(format!(
        "no valid geometry after {MAX_GEOMETRY_RETRIES} draws: {}",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}

fn canvas_center(grid: &GridSpec) -> [f64; 2] {
    let c = 0.5 * (grid.s + grid.t);
    [c, c]
}

fn outer_star(spec: &ExperimentSpec, rng: &mut ChaCha20Rng) -> Result<EncodedSample> {
    let grid = spec.grid;
    let half = 0.5 * grid.extent();
    let (lo, hi) = (STAR_RADIUS_RANGE.0 * half, STAR_RADIUS_RANGE.1 * half);
    let center = canvas_center(&grid);
    let cut_x = 0.5 * (grid.s + grid.t);
    let geometry = draw_geometry(
        |r| {
            let radii = star_radii(STAR_POINTS, lo, hi, r);
            let star = ClosedCurve::star(center, radii)?;
            let cut = ClosedCurve::vline(cut_x)?;
            Geometry::new(grid.s, grid.t, 2, Outer::Curve(star), vec![cut])
        },
        rng,
    )?;
    let alpha = spec.jump_ranges.alpha.sample(rng);
    let beta = spec.jump_ranges.beta.sample(rng);
    let f_seed: u64 = rng.random();
    let f_field = sample_gp_field(&grid, spec.gp.lengthscale, spec.gp.variance, f_seed)?;
    let problem = InterfaceProblem {
        geometry,
        a: Coeff::Constant(1.0),
        b: Coeff::Constant(0.0),
        f: Coeff::func(move |p| f_field.interp(0, p)),
        g: Coeff::Constant(0.0),
        alpha: vec![alpha],
        beta: vec![beta],
    };
    let u = solve_elliptic_interface(&problem, &grid)?;
    let input = assemble_input(&problem, &spec.select(), &EncodeOptions::new(spec.scheme), &grid)?;
    Ok(EncodedSample { input, target: Target::Field(u) })
}

fn inner_star(spec: &ExperimentSpec, rng: &mut ChaCha20Rng) -> Result<EncodedSample> {
    let grid = spec.grid;
    let half = 0.5 * grid.extent();
    let (lo, hi) = (STAR_RADIUS_RANGE.0 * half, STAR_RADIUS_RANGE.1 * half);
    let center = canvas_center(&grid);
    let geometry = draw_geometry(
        |r| {
            let radii = star_radii(STAR_POINTS, lo, hi, r);
            let star = ClosedCurve::star(center, radii)?;
            Geometry::new(grid.s, grid.t, 2, Outer::Canvas, vec![star])
        },
        rng,
    )?;
    let alpha = spec.jump_ranges.alpha.sample(rng);
    let beta = spec.jump_ranges.beta.sample(rng);
    let problem = InterfaceProblem {
        geometry,
        a: Coeff::Constant(1.0),
        b: Coeff::Constant(0.0),
        f: Coeff::Constant(spec.inner_source),
        g: Coeff::Constant(0.0),
        alpha: vec![alpha],
        beta: vec![beta],
    };
    let u = solve_elliptic_interface(&problem, &grid)?;
    let input = assemble_input(&problem, &spec.select(), &EncodeOptions::new(spec.scheme), &grid)?;
    Ok(EncodedSample { input, target: Target::Field(u) })
}

fn square_tfpm(spec: &ExperimentSpec, rng: &mut ChaCha20Rng) -> Result<EncodedSample> {
    let grid = spec.grid;
    let side = SQUARE_SIDE_FRACTION * grid.extent();
    let margin = SQUARE_MARGIN_FRACTION * grid.extent();
    let lo = grid.s + 0.5 * side + margin;
    let hi = grid.t - 0.5 * side - margin;
    let geometry = draw_geometry(
        |r| {
            let cx = r.random_range(lo..=hi);
            let cy = r.random_range(lo..=hi);
            let square = ClosedCurve::axis_square([cx, cy], side)?;
            Geometry::new(grid.s, grid.t, 2, Outer::Canvas, vec![square])
        },
        rng,
    )?;
    let alpha = spec.jump_ranges.alpha.sample(rng);
    let beta = spec.jump_ranges.beta.sample(rng);
    let problem = InterfaceProblem::with_constants(geometry, 1.0, 1.0, 1.0, 0.0, vec![alpha], vec![beta]);
    let field = tfpm::solve(&problem, &grid)?;
    let input = assemble_input(&problem, &spec.select(), &EncodeOptions::new(spec.scheme), &grid)?;
    Ok(EncodedSample { input, target: Target::Tfpm(field) })
}

fn planar_3d(spec: &ExperimentSpec, rng: &mut ChaCha20Rng) -> Result<EncodedSample> {
    let grid = spec.grid;
    let geometry = draw_geometry(
        |r| {
            let frac = r.random_range(PLANE_KAPPA_RANGE.0..=PLANE_KAPPA_RANGE.1);
            let plane = ClosedCurve::plane_z(grid.s + frac * grid.extent())?;
            Geometry::new(grid.s, grid.t, 3, Outer::Canvas, vec![plane])
        },
        rng,
    )?;
    let alpha = spec.jump_ranges.alpha.sample(rng);
    let beta = spec.jump_ranges.beta.sample(rng);
    let problem = InterfaceProblem {
        geometry,
        a: Coeff::Constant(1.0),
        b: Coeff::Constant(1.0),
        f: Coeff::Constant(1.0),
        g: Coeff::func(|p| (p[0] + p[1] + p[2]).sin()),
        alpha: vec![alpha],
        beta: vec![beta],
    };
    let u = solve_elliptic_interface(&problem, &grid)?;
    let input = assemble_input(&problem, &spec.select(), &EncodeOptions::new(spec.scheme), &grid)?;
    Ok(EncodedSample { input, target: Target::Field(u) })
}

fn transport(spec: &ExperimentSpec, rng: &mut ChaCha20Rng) -> Result<EncodedSample> {
    let grid = spec.grid;
    let center = canvas_center(&grid);
    let (lo, hi) = (ELLIPSE_AXIS_RANGE.0 * grid.extent(), ELLIPSE_AXIS_RANGE.1 * grid.extent());
    let geometry = draw_geometry(
        |r| {
            let ax = r.random_range(lo..=hi);
            let ay = r.random_range(lo..=hi);
            let ellipse = ClosedCurve::ellipse(center, [ax, ay])?;
            Geometry::new(grid.s, grid.t, 2, Outer::Canvas, vec![ellipse])
        },
        rng,
    )?;
    let gp_seed: u64 = rng.random();
    let mut phi0 = sample_gp_field(&grid, spec.gp.lengthscale, spec.gp.variance, gp_seed)?;
    for k in 0..grid.num_points() {
        if geometry.region_label(grid.point(k)) >= 2 {
            phi0.values[k] = 0.0;
        }
    }
    let params = TransportParams {
        rho: TRANSPORT_RHO,
        gamma_star: spec.gamma_star,
        d_in: TRANSPORT_D_IN,
        d_out: TRANSPORT_D_OUT,
        dt: TRANSPORT_DT,
        t_end: TRANSPORT_T_END,
    };
    let u = run_transport(&geometry, &params, &phi0, &grid)?;
    let mut channels = Vec::new();
    let mut manifest = Vec::new();
    match spec.scheme {
        GeometryScheme::Characteristic => {
            channels.push(encode_characteristic(&geometry, &grid)?);
            manifest.push("geom/char".to_string());
        }
        GeometryScheme::Sdf => {
            for (j, ch) in encode_sdf(&geometry, &grid)?.into_iter().enumerate() {
                channels.push(ch);
                manifest.push(format!("geom/sdf/{j}"));
            }
        }
    }
    channels.push(phi0);
    manifest.push("init/phi0".to_string());
    let input = EncodedInput::new(ChannelTensor::stacked(&channels)?, manifest)?;
    Ok(EncodedSample { input, target: Target::Field(u) })
}
