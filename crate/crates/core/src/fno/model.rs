//! The operator network: pointwise lift, Fourier mixing layers,
//! pointwise decode, and an output head.
//!
//! Every layer computes `act(W v + K v + b)` where `K` is the truncated
//! spectral convolution; the activation is dropped on the final layer.
//! Parameters live in one flat vector described by a block manifest, so
//! the optimizer, the gradient check, and the checkpoint format all see
//! the same layout. The backward pass is hand-rolled layer by layer
//! against cached activations; the spectral pieces reduce to conjugate
//! transposes, which `Spectral` provides directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fno::gemm::{rgemm, rgemm_nt, rgemm_tn};
use crate::fno::head::{self, CellContext};
use crate::fno::spectral::{mix_modes, mix_modes_adjoint, mix_modes_grad, num_modes, CxBuf, Spectral};
use crate::grid::{ChannelTensor, GridSpec};
use crate::tfpm::{basis_dim, TfpmField};

/// Hidden width of the lift and decode pointwise networks.
pub const HIDDEN: usize = 128;

/// What the decode stage emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    /// One field channel on the input grid.
    Field,
    /// `2 d` expansion coefficients per grid point, corner-averaged to
    /// cells and reconstructed through the exponential basis.
    TfpmCoeffs,
}

/// Architecture description; everything needed to rebuild the parameter
/// manifest from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arch {
    /// Spatial dimension of the grids the model consumes.
    pub d: usize,
    pub in_channels: usize,
    /// Latent channel width.
    pub d_v: usize,
    /// Modes kept per axis: signed modes `|k| < k_max`.
    pub k_max: usize,
    /// Number of Fourier layers.
    pub layers: usize,
    pub head: HeadKind,
    /// Names of the input channels, recorded so a checkpoint can refuse
    /// mismatched encodings.
    pub channels: Vec<String>,
}

impl Arch {
    pub fn out_channels(&self) -> usize {
        match self.head {
            HeadKind::Field => 1,
            HeadKind::TfpmCoeffs => basis_dim(self.d),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d != 2 && self.d != 3 {
            return Err(Error::invalid(format!("dimension must be 2 or 3, got {}", self.d)));
        }
        if self.in_channels == 0 || self.d_v == 0 || self.layers == 0 || self.k_max == 0 {
            return Err(Error::invalid("channel counts, width, depth, and mode cap must be positive"));
        }
        if self.channels.len() != self.in_channels {
            return Err(Error::invalid(format!(
                "{} channel names for {} input channels",
                self.channels.len(),
                self.in_channels
            )));
        }
        Ok(())
    }
}

/// One named span of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Block layout: lift (4 blocks), then 4 blocks per layer
/// (`r_re`, `r_im`, `w`, `b`), then decode (4 blocks). Indices below
/// rely on this order.
fn build_blocks(arch: &Arch) -> Vec<BlockInfo> {
    let nm = num_modes(arch.d, arch.k_max);
    let dv = arch.d_v;
    let mut blocks = Vec::new();
    let mut offset = 0usize;
    let mut push = |name: String, shape: Vec<usize>| {
        let len: usize = shape.iter().product();
        blocks.push(BlockInfo { name, shape, offset });
        offset += len;
    };
    push("lift0.w".into(), vec![HIDDEN, arch.in_channels]);
    push("lift0.b".into(), vec![HIDDEN]);
    push("lift1.w".into(), vec![dv, HIDDEN]);
    push("lift1.b".into(), vec![dv]);
    for l in 0..arch.layers {
        push(format!("layer{l}.r_re"), vec![nm, dv, dv]);
        push(format!("layer{l}.r_im"), vec![nm, dv, dv]);
        push(format!("layer{l}.w"), vec![dv, dv]);
        push(format!("layer{l}.b"), vec![dv]);
    }
    push("decode0.w".into(), vec![HIDDEN, dv]);
    push("decode0.b".into(), vec![HIDDEN]);
    push("decode1.w".into(), vec![arch.out_channels(), HIDDEN]);
    push("decode1.b".into(), vec![arch.out_channels()]);
    blocks
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Gaussian error linear unit in its tanh form; smooth, and its exact
/// derivative below is what the backward pass uses.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn gelu_vec(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| gelu(v)).collect()
}

/// The model: architecture plus one flat parameter vector.
#[derive(Debug, Clone)]
pub struct FnoModel {
    pub arch: Arch,
    pub blocks: Vec<BlockInfo>,
    pub params: Vec<f64>,
}

/// Cached forward pass: inputs and pre-activations of every stage, plus
/// the head products, in exactly the form the backward pass consumes.
pub struct Trace {
    grid: GridSpec,
    x: Vec<f64>,
    lift_pre: Vec<f64>,
    lift_act: Vec<f64>,
    /// Latent stages: `v[0]` is the lifted input, `v[l + 1]` the output
    /// of layer `l`.
    v: Vec<Vec<f64>>,
    /// Per-layer pre-activation `W v + K v + b`.
    pre: Vec<Vec<f64>>,
    /// Per-layer retained modes of the layer input (mixing input).
    vhat: Vec<CxBuf>,
    dec_pre: Vec<f64>,
    dec_act: Vec<f64>,
    head: HeadTrace,
    /// The head output: grid field or reconstructed fine field.
    pub output: ChannelTensor,
}

enum HeadTrace {
    Field,
    Tfpm { field: TfpmField, fine: GridSpec },
}

/// Pointwise affine stage `W x + b` over channel-major point data.
fn affine(w: &[f64], b: &[f64], x: &[f64], n_out: usize, n_in: usize, npts: usize) -> Vec<f64> {
    let mut y = vec![0.0; n_out * npts];
    rgemm(n_out, n_in, npts, 1.0, w, x, 0.0, &mut y);
    for r in 0..n_out {
        let bias = b[r];
        for v in &mut y[r * npts..(r + 1) * npts] {
            *v += bias;
        }
    }
    y
}

impl FnoModel {
    /// Fresh model with deterministic initialization: weights uniform in
    /// `+-sqrt(1 / fan_in)`, spectral planes uniform scaled by
    /// `1 / d_v^2`, biases zero. Blocks are filled in manifest order
    /// from a single seeded stream.
    pub fn new(arch: Arch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let blocks = build_blocks(&arch);
        let total: usize = blocks.iter().map(|b| b.len()).sum();
        let mut params = vec![0.0; total];
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let spectral_scale = 1.0 / (arch.d_v * arch.d_v) as f64;
        for b in &blocks {
            let dst = &mut params[b.offset..b.offset + b.len()];
            if b.name.ends_with(".w") {
                let fan_in = *b.shape.last().expect("weight blocks are matrices") as f64;
                let s = (1.0 / fan_in).sqrt();
                for v in dst {
                    *v = rng.random_range(-s..s);
                }
            } else if b.name.ends_with(".r_re") || b.name.ends_with(".r_im") {
                for v in dst {
                    *v = rng.random_range(-1.0..1.0) * spectral_scale;
                }
            }
            // Biases stay zero.
        }
        Ok(FnoModel { arch, blocks, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn zero_gradients(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn block(&self, idx: usize) -> &[f64] {
        let b = &self.blocks[idx];
        &self.params[b.offset..b.offset + b.len()]
    }

    fn layer_base(&self, l: usize) -> usize {
        4 + 4 * l
    }

    fn decode_base(&self) -> usize {
        4 + 4 * self.arch.layers
    }

    /// Field-head forward. The coefficient head needs context; use
    /// `forward_tfpm` for it.
    pub fn forward(&self, input: &ChannelTensor) -> Result<ChannelTensor> {
        if self.arch.head != HeadKind::Field {
            return Err(Error::invalid(
                "coefficient-head models need cell context; call forward_tfpm",
            ));
        }
        Ok(self.forward_traced(input, None)?.output)
    }

    /// Coefficient-head forward: predicts per-cell coefficients on the
    /// input grid and reconstructs them on `fine`.
    pub fn forward_tfpm(
        &self,
        input: &ChannelTensor,
        ctx: &CellContext,
        fine: &GridSpec,
    ) -> Result<ChannelTensor> {
        Ok(self.forward_traced(input, Some((ctx, *fine)))?.output)
    }

    /// Full forward pass with cached intermediates.
    pub fn forward_traced(
        &self,
        input: &ChannelTensor,
        ctx: Option<(&CellContext, GridSpec)>,
    ) -> Result<Trace> {
        let arch = &self.arch;
        let grid = input.grid;
        if grid.d != arch.d {
            return Err(Error::invalid(format!(
                "model is {}-dimensional, input grid is {}-dimensional",
                arch.d, grid.d
            )));
        }
        if input.channels != arch.in_channels {
            return Err(Error::invalid(format!(
                "model lifts {} channels, input has {}",
                arch.in_channels,
                input.channels
            )));
        }
        let plan = Spectral::new(arch.d, grid.n, arch.k_max)?;
        let nm = plan.num_modes();
        let npts = grid.num_points();
        let dv = arch.d_v;

        let mut x = Vec::with_capacity(arch.in_channels * npts);
        for c in 0..arch.in_channels {
            x.extend_from_slice(input.channel(c));
        }

        let lift_pre = affine(self.block(0), self.block(1), &x, HIDDEN, arch.in_channels, npts);
        let lift_act = gelu_vec(&lift_pre);
        let v0 = affine(self.block(2), self.block(3), &lift_act, dv, HIDDEN, npts);

        let mut v = vec![v0];
        let mut pre = Vec::with_capacity(arch.layers);
        let mut vhat = Vec::with_capacity(arch.layers);
        for l in 0..arch.layers {
            let base = self.layer_base(l);
            let vin = &v[l];
            let modes = plan.forward(vin, dv);
            let mixed = mix_modes(self.block(base), self.block(base + 1), &modes, nm, dv);
            let conv = plan.inverse(&mixed, dv);
            let mut y = affine(self.block(base + 2), self.block(base + 3), vin, dv, dv, npts);
            for (a, b) in y.iter_mut().zip(&conv) {
                *a += b;
            }
            if y.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite(format!("activation after layer {l}")));
            }
            let out = if l + 1 < arch.layers { gelu_vec(&y) } else { y.clone() };
            vhat.push(modes);
            pre.push(y);
            v.push(out);
        }

        let db = self.decode_base();
        let dec_pre = affine(self.block(db), self.block(db + 1), &v[arch.layers], HIDDEN, dv, npts);
        let dec_act = gelu_vec(&dec_pre);
        let grid_out = affine(
            self.block(db + 2),
            self.block(db + 3),
            &dec_act,
            arch.out_channels(),
            HIDDEN,
            npts,
        );
        if grid_out.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("activation after decode".into()));
        }

        let (head_trace, output) = match arch.head {
            HeadKind::Field => {
                let out = ChannelTensor::from_values(grid, 1, grid_out.clone())?;
                (HeadTrace::Field, out)
            }
            HeadKind::TfpmCoeffs => {
                let (ctx, fine) = ctx.ok_or_else(|| {
                    Error::invalid("coefficient head needs cell context and a reconstruction grid")
                })?;
                if ctx.grid != grid {
                    return Err(Error::invalid(
                        "cell context grid does not match the input grid",
                    ));
                }
                let coeffs = head::cell_means(&grid, &grid_out, arch.out_channels());
                let field = ctx.with_coeffs(coeffs)?;
                let vals = field.sample_on(&fine)?;
                let out = ChannelTensor::single(fine, vals)?;
                (HeadTrace::Tfpm { field, fine }, out)
            }
        };

        Ok(Trace {
            grid,
            x,
            lift_pre,
            lift_act,
            v,
            pre,
            vhat,
            dec_pre,
            dec_act,
            head: head_trace,
            output,
        })
    }

    /// Reverse pass: accumulates parameter cotangents into `grads`
    /// (same layout as `params`) given the cotangent of the head output.
    pub fn backward(&self, trace: &Trace, g_output: &[f64], grads: &mut [f64]) -> Result<()> {
        let arch = &self.arch;
        let grid = trace.grid;
        let npts = grid.num_points();
        let dv = arch.d_v;
        let c_out = arch.out_channels();
        if grads.len() != self.params.len() {
            return Err(Error::invalid("gradient buffer does not match the parameter count"));
        }

        // Head: cotangent of the decode output on grid points.
        let g_grid: Vec<f64> = match &trace.head {
            HeadTrace::Field => {
                if g_output.len() != npts {
                    return Err(Error::invalid("output cotangent does not match the grid"));
                }
                g_output.to_vec()
            }
            HeadTrace::Tfpm { field, fine } => {
                if g_output.len() != fine.num_points() {
                    return Err(Error::invalid("output cotangent does not match the fine grid"));
                }
                let g_coeffs = head::reconstruct_backward(field, fine, g_output);
                head::cell_means_backward(&grid, &g_coeffs, c_out)
            }
        };

        let plan = Spectral::new(arch.d, grid.n, arch.k_max)?;
        let nm = plan.num_modes();
        let db = self.decode_base();

        let row_sums = |g: &[f64], rows: usize, out: &mut [f64]| {
            for r in 0..rows {
                let mut acc = 0.0;
                for &t in &g[r * npts..(r + 1) * npts] {
                    acc += t;
                }
                out[r] += acc;
            }
        };

        // Decode stage.
        {
            let (w1b, b1b) = (&self.blocks[db + 2], &self.blocks[db + 3]);
            // grad decode1.
            rgemm_nt(
                c_out,
                npts,
                HIDDEN,
                1.0,
                &g_grid,
                &trace.dec_act,
                1.0,
                &mut grads[w1b.offset..w1b.offset + w1b.len()],
            );
            row_sums(&g_grid, c_out, &mut grads[b1b.offset..b1b.offset + b1b.len()]);
        }
        let mut g_act = vec![0.0; HIDDEN * npts];
        rgemm_tn(HIDDEN, c_out, npts, 1.0, self.block(db + 2), &g_grid, 0.0, &mut g_act);
        let mut g_dec_pre = g_act;
        for (g, &z) in g_dec_pre.iter_mut().zip(&trace.dec_pre) {
            *g *= gelu_prime(z);
        }
        {
            let (w0b, b0b) = (&self.blocks[db], &self.blocks[db + 1]);
            rgemm_nt(
                HIDDEN,
                npts,
                dv,
                1.0,
                &g_dec_pre,
                &trace.v[arch.layers],
                1.0,
                &mut grads[w0b.offset..w0b.offset + w0b.len()],
            );
            row_sums(&g_dec_pre, HIDDEN, &mut grads[b0b.offset..b0b.offset + b0b.len()]);
        }
        let mut g_v = vec![0.0; dv * npts];
        rgemm_tn(dv, HIDDEN, npts, 1.0, self.block(db), &g_dec_pre, 0.0, &mut g_v);

        // Fourier layers, last to first.
        for l in (0..arch.layers).rev() {
            let base = self.layer_base(l);
            let mut g_y = g_v;
            if l + 1 < arch.layers {
                for (g, &z) in g_y.iter_mut().zip(&trace.pre[l]) {
                    *g *= gelu_prime(z);
                }
            }
            {
                let (wb, bb) = (&self.blocks[base + 2], &self.blocks[base + 3]);
                rgemm_nt(
                    dv,
                    npts,
                    dv,
                    1.0,
                    &g_y,
                    &trace.v[l],
                    1.0,
                    &mut grads[wb.offset..wb.offset + wb.len()],
                );
                row_sums(&g_y, dv, &mut grads[bb.offset..bb.offset + bb.len()]);
            }
            // Spectral path.
            let g_mixed = plan.inverse_adjoint(&g_y, dv);
            {
                let (rr, ri) = (&self.blocks[base], &self.blocks[base + 1]);
                let (gr, gi) = grads.split_at_mut(ri.offset);
                mix_modes_grad(
                    &g_mixed,
                    &trace.vhat[l],
                    nm,
                    dv,
                    &mut gr[rr.offset..rr.offset + rr.len()],
                    &mut gi[..ri.len()],
                );
            }
            let g_modes = mix_modes_adjoint(self.block(base), self.block(base + 1), &g_mixed, nm, dv);
            let g_spec = plan.forward_adjoint(&g_modes, dv);

            let mut g_down = vec![0.0; dv * npts];
            rgemm_tn(dv, dv, npts, 1.0, self.block(base + 2), &g_y, 0.0, &mut g_down);
            for (a, b) in g_down.iter_mut().zip(&g_spec) {
                *a += b;
            }
            g_v = g_down;
        }

        // Lift stage.
        {
            let (w1b, b1b) = (&self.blocks[2], &self.blocks[3]);
            rgemm_nt(
                dv,
                npts,
                HIDDEN,
                1.0,
                &g_v,
                &trace.lift_act,
                1.0,
                &mut grads[w1b.offset..w1b.offset + w1b.len()],
            );
            row_sums(&g_v, dv, &mut grads[b1b.offset..b1b.offset + b1b.len()]);
        }
        let mut g_lift = vec![0.0; HIDDEN * npts];
        rgemm_tn(HIDDEN, dv, npts, 1.0, self.block(2), &g_v, 0.0, &mut g_lift);
        for (g, &z) in g_lift.iter_mut().zip(&trace.lift_pre) {
            *g *= gelu_prime(z);
        }
        {
            let (w0b, b0b) = (&self.blocks[0], &self.blocks[1]);
            rgemm_nt(
                HIDDEN,
                npts,
                arch.in_channels,
                1.0,
                &g_lift,
                &trace.x,
                1.0,
                &mut grads[w0b.offset..w0b.offset + w0b.len()],
            );
            row_sums(&g_lift, HIDDEN, &mut grads[b0b.offset..b0b.offset + b0b.len()]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(head: HeadKind) -> Arch {
        Arch {
            d: 2,
            in_channels: 3,
            d_v: 4,
            k_max: 3,
            layers: 2,
            head,
            channels: vec!["geom/char".into(), "func/f".into(), "bc/g".into()],
        }
    }

    #[test]
    fn manifest_covers_every_parameter_once() {
        let m = FnoModel::new(arch(HeadKind::Field), 0).unwrap();
        let mut next = 0usize;
        for b in &m.blocks {
            assert_eq!(b.offset, next, "block {} misplaced", b.name);
            next += b.len();
        }
        assert_eq!(next, m.params.len());
        let nm = num_modes(2, 3);
        let expected = HIDDEN * 3
            + HIDDEN
            + 4 * HIDDEN
            + 4
            + 2 * (2 * nm * 16 + 16 + 4)
            + HIDDEN * 4
            + HIDDEN
            + HIDDEN
            + 1;
        assert_eq!(m.params.len(), expected);
    }

    #[test]
    fn zero_parameters_map_zero_input_to_zero() {
        let mut m = FnoModel::new(arch(HeadKind::Field), 1).unwrap();
        m.params.iter_mut().for_each(|p| *p = 0.0);
        let grid = GridSpec::new(0.0, 1.0, 12, 2).unwrap();
        let input = ChannelTensor::zeros(grid, 3);
        let out = m.forward(&input).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_model_runs_at_twice_the_resolution() {
        let m = FnoModel::new(arch(HeadKind::Field), 7).unwrap();
        for n in [12usize, 24] {
            let grid = GridSpec::new(0.0, 1.0, n, 2).unwrap();
            let mut input = ChannelTensor::zeros(grid, 3);
            for c in 0..3 {
                for (k, v) in input.channel_mut(c).iter_mut().enumerate() {
                    *v = ((k % 17) as f64 - 8.0) / 10.0;
                }
            }
            let out = m.forward(&input).unwrap();
            assert_eq!(out.grid.n, n);
            assert!(out.channel(0).iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn coefficient_head_emits_on_the_fine_grid() {
        let m = FnoModel::new(arch(HeadKind::TfpmCoeffs), 3).unwrap();
        let grid = GridSpec::new(0.0, 1.0, 8, 2).unwrap();
        let nc = grid.num_cells();
        let ctx = CellContext {
            grid,
            mu: vec![1.0; nc],
            particular: vec![0.0; nc],
            labels: vec![1; nc],
        };
        let fine = GridSpec::new(0.0, 1.0, 15, 2).unwrap();
        let input = ChannelTensor::zeros(grid, 3);
        let out = m.forward_tfpm(&input, &ctx, &fine).unwrap();
        assert_eq!(out.grid.n, 15);
        assert!(out.channel(0).iter().all(|v| v.is_finite()));
        assert!(m.forward(&input).is_err(), "field entry point must refuse this head");
    }

    #[test]
    fn initialization_is_deterministic_per_seed() {
        let a = FnoModel::new(arch(HeadKind::Field), 42).unwrap();
        let b = FnoModel::new(arch(HeadKind::Field), 42).unwrap();
        let c = FnoModel::new(arch(HeadKind::Field), 43).unwrap();
        assert_eq!(a.params, b.params);
        assert_ne!(a.params, c.params);
    }
}
