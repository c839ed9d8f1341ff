//! Elliptic interface problem description shared by the solvers.
//!
//! The continuous problem on a domain with interfaces is
//!
//! ```text
//!   -div(a grad u) + b u = f   in the domain, away from interfaces
//!                      u = g   on the outer boundary
//!                    [u] = alpha_i   across interface i
//!             [a du/dn] = beta_i    across interface i
//! ```
//!
//! Jump convention: `[v] = v_in - v_out`, the trace taken from inside the
//! interface minus the trace from outside, with the normal pointing from
//! inside to outside. A problem with `u = 1` inside a circle and `u = 0`
//! outside therefore has `alpha = 1`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::grid::{ChannelTensor, Point};

/// A scalar coefficient field, evaluable anywhere in the canvas.
#[derive(Clone)]
pub enum Coeff {
    Constant(f64),
    /// One value per region label starting at label 1 (the domain outside
    /// all interfaces); entry `i` applies to label `i + 1`.
    PerRegion(Vec<f64>),
    /// Grid samples, multilinearly interpolated between points.
    Grid(ChannelTensor),
    Func(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Coeff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coeff::Constant(c) => write!(f, "Constant({c})"),
            Coeff::PerRegion(v) => write!(f, "PerRegion({v:?})"),
            Coeff::Grid(t) => write!(f, "Grid({} channels, n = {})", t.channels, t.grid.n),
            Coeff::Func(_) => write!(f, "Func(..)"),
        }
    }
}

impl Coeff {
    /// Value at `p`, which carries region `label` (1-based; label 0 queries
    /// fall back to the label-1 value since fields are zero-extended by the
    /// callers that care).
    pub fn eval(&self, p: Point, label: usize) -> f64 {
        match self {
            Coeff::Constant(c) => *c,
            Coeff::PerRegion(v) => {
                let idx = label.saturating_sub(1).min(v.len().saturating_sub(1));
                v[idx]
            }
            Coeff::Grid(t) => t.interp(0, p),
            Coeff::Func(f) => f(p),
        }
    }

    pub fn func(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Coeff::Func(Arc::new(f))
    }
}

/// Full problem data for one solve.
#[derive(Debug, Clone)]
pub struct InterfaceProblem {
    pub geometry: Geometry,
    /// Diffusion coefficient; must be strictly positive.
    pub a: Coeff,
    /// Reaction coefficient; must be non-negative.
    pub b: Coeff,
    /// Source term.
    pub f: Coeff,
    /// Dirichlet data on the outer boundary.
    pub g: Coeff,
    /// Solution jump `[u]` per interface, in interface order.
    pub alpha: Vec<f64>,
    /// Flux jump `[a du/dn]` per interface, in interface order.
    pub beta: Vec<f64>,
}

impl InterfaceProblem {
    /// Checks the jump lists match the interface count.
    pub fn check_shapes(&self) -> Result<()> {
        let m = self.geometry.interfaces.len();
        if self.alpha.len() != m || self.beta.len() != m {
            return Err(Error::invalid(format!(
                "problem has {m} interfaces but {} alpha and {} beta jumps",
                self.alpha.len(),
                self.beta.len()
            )));
        }
        Ok(())
    }

    /// Homogeneous-coefficient convenience constructor.
    pub fn with_constants(
        geometry: Geometry,
        a: f64,
        b: f64,
        f: f64,
        g: f64,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    ) -> Self {
        InterfaceProblem {
            geometry,
            a: Coeff::Constant(a),
            b: Coeff::Constant(b),
            f: Coeff::Constant(f),
            g: Coeff::Constant(g),
            alpha,
            beta,
        }
    }
}
