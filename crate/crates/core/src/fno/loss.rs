//! Discrete squared-L2 training loss and relative-error reporting.

use crate::error::{Error, Result};
use crate::grid::{ChannelTensor, GridSpec};

/// Per-point quadrature weights for the canvas: cell volume with half
/// weight on each clamped axis at the boundary, so a constant field
/// integrates to exactly the canvas volume.
pub fn quadrature_weights(grid: &GridSpec) -> Vec<f64> {
    let n = grid.n;
    let axis: Vec<f64> = (0..n)
        .map(|i| if i == 0 || i == n - 1 { 0.5 } else { 1.0 })
        .collect();
    let vol = grid.cell_volume();
    let mut w = Vec::with_capacity(grid.num_points());
    if grid.d == 2 {
        for iy in 0..n {
            for ix in 0..n {
                w.push(vol * axis[ix] * axis[iy]);
            }
        }
    } else {
        for iz in 0..n {
            for iy in 0..n {
                for ix in 0..n {
                    w.push(vol * axis[ix] * axis[iy] * axis[iz]);
                }
            }
        }
    }
    w
}

fn check_shapes(pred: &ChannelTensor, target: &ChannelTensor) -> Result<()> {
    if pred.grid != target.grid || pred.channels != target.channels {
        return Err(Error::invalid("prediction and target shapes differ"));
    }
    Ok(())
}

/// Squared discrete L2 distance over the canvas, summed across
/// channels. Averaging over a batch is the caller's one division.
pub fn loss_l2(pred: &ChannelTensor, target: &ChannelTensor) -> Result<f64> {
    check_shapes(pred, target)?;
    let w = quadrature_weights(&pred.grid);
    let mut acc = 0.0;
    for c in 0..pred.channels {
        for ((&p, &t), &wt) in pred.channel(c).iter().zip(target.channel(c)).zip(&w) {
            let d = p - t;
            acc += wt * d * d;
        }
    }
    Ok(acc)
}

/// Loss plus its gradient with respect to the prediction values
/// (channel-major flat, scaled by `scale` for batch averaging).
pub(crate) fn loss_and_grad(
    pred: &ChannelTensor,
    target: &ChannelTensor,
    scale: f64,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(pred, target)?;
    let w = quadrature_weights(&pred.grid);
    let npts = pred.grid.num_points();
    let mut grad = vec![0.0; pred.channels * npts];
    let mut acc = 0.0;
    for c in 0..pred.channels {
        let g = &mut grad[c * npts..(c + 1) * npts];
        for (k, (&p, &t)) in pred.channel(c).iter().zip(target.channel(c)).enumerate() {
            let d = p - t;
            acc += w[k] * d * d;
            g[k] = 2.0 * scale * w[k] * d;
        }
    }
    Ok((acc, grad))
}

/// Relative L2 error report. When the target norm vanishes the ratio is
/// undefined; the error is then the absolute norm and `degenerate` is
/// set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelL2 {
    pub value: f64,
    pub degenerate: bool,
}

pub fn relative_l2(pred: &ChannelTensor, target: &ChannelTensor) -> Result<RelL2> {
    check_shapes(pred, target)?;
    let w = quadrature_weights(&pred.grid);
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..pred.channels {
        for ((&p, &t), &wt) in pred.channel(c).iter().zip(target.channel(c)).zip(&w) {
            let d = p - t;
            num += wt * d * d;
            den += wt * t * t;
        }
    }
    if den == 0.0 {
        Ok(RelL2 { value: num.sqrt(), degenerate: true })
    } else {
        Ok(RelL2 { value: (num / den).sqrt(), degenerate: false })
    }
}
