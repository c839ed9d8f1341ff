//! Dataset synthesis, resolution reduction, and binary persistence.

mod generate;
pub(crate) mod gp;
mod io;

pub use generate::{
    generate, generate_sample, ExperimentKind, ExperimentSpec, GpConfig, JumpRanges, ScalarRange,
};
pub use gp::{sample_gp_field, STAR_GP_LENGTHSCALE};
pub use io::{load, save, save_with_precision, FilePrecision};

use crate::encode::{EncodedInput, EncodedSample, Target};
use crate::error::{Error, Result};
use crate::grid::{ChannelTensor, GridSpec};

/// One experiment's samples plus the split that partitions them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: ExperimentSpec,
    pub samples: Vec<EncodedSample>,
    /// Train and test indices: disjoint, sorted, covering all samples.
    pub split: (Vec<usize>, Vec<usize>),
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() != self.spec.n_samples {
            return Err(Error::invalid(format!(
                "dataset holds {} samples but its spec says {}",
                self.samples.len(),
                self.spec.n_samples
            )));
        }
        let mut seen = vec![false; self.samples.len()];
        for &i in self.split.0.iter().chain(self.split.1.iter()) {
            if i >= seen.len() || seen[i] {
                return Err(Error::invalid(format!(
                    "split index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(Error::invalid("split does not cover every sample"));
        }
        if let Some(first) = self.samples.first() {
            for s in &self.samples[1..] {
                if s.input.tensor.grid != first.input.tensor.grid
                    || s.input.manifest != first.input.manifest
                {
                    return Err(Error::invalid(
                        "samples disagree on grid or channel manifest",
                    ));
                }
                if std::mem::discriminant(&s.target) != std::mem::discriminant(&first.target)
                    || target_grid(&s.target) != target_grid(&first.target)
                {
                    return Err(Error::invalid("samples disagree on target layout"));
                }
            }
            if first.input.tensor.grid != self.spec.grid {
                return Err(Error::invalid("sample grid does not match the spec grid"));
            }
        }
        Ok(())
    }

    pub fn train(&self) -> impl Iterator<Item = &EncodedSample> {
        self.split.0.iter().map(|&i| &self.samples[i])
    }

    pub fn test(&self) -> impl Iterator<Item = &EncodedSample> {
        self.split.1.iter().map(|&i| &self.samples[i])
    }
}

fn target_grid(t: &Target) -> GridSpec {
    match t {
        Target::Field(u) => u.grid,
        Target::Tfpm(f) => f.grid,
    }
}

/// Keeps every `factor`-th grid point per axis. Field targets are strided
/// identically; coefficient targets keep their native resolution, since
/// the expansion evaluates anywhere. The input dataset is untouched, so
/// the caller keeps the originals for evaluation pairing by index.
pub fn downsample(ds: &Dataset, factor: usize) -> Result<Dataset> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be at least 1"));
    }
    if factor == 1 {
        return Ok(ds.clone());
    }
    let n = ds.spec.grid.n;
    if (n - 1) % factor != 0 {
        return Err(Error::invalid(format!(
            "{} cells per axis do not divide by {factor}",
            n - 1
        )));
    }
    let coarse =
        GridSpec::new(ds.spec.grid.s, ds.spec.grid.t, (n - 1) / factor + 1, ds.spec.grid.d)?;
    let mut samples = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let input = EncodedInput::new(
            stride_tensor(&s.input.tensor, &coarse, factor)?,
            s.input.manifest.clone(),
        )?;
        let target = match &s.target {
            Target::Field(u) => {
                if u.grid != ds.spec.grid {
                    return Err(Error::invalid(
                        "field target grid does not match the dataset grid",
                    ));
                }
                Target::Field(stride_tensor(u, &coarse, factor)?)
            }
            Target::Tfpm(f) => Target::Tfpm(f.clone()),
        };
        samples.push(EncodedSample { input, target });
    }
    let mut spec = ds.spec.clone();
    spec.grid = coarse;
    let out = Dataset { spec, samples, split: ds.split.clone() };
    out.validate()?;
    Ok(out)
}

fn stride_tensor(t: &ChannelTensor, coarse: &GridSpec, factor: usize) -> Result<ChannelTensor> {
    let fine = t.grid;
    let mut values = Vec::with_capacity(t.channels * coarse.num_points());
    for c in 0..t.channels {
        let src = t.channel(c);
        for k in 0..coarse.num_points() {
            let [ix, iy, iz] = coarse.multi_index(k);
            values.push(src[fine.index(ix * factor, iy * factor, iz * factor)]);
        }
    }
    ChannelTensor::from_values(*coarse, t.channels, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encode::GeometryScheme;

    fn tiny_dataset() -> Dataset {
        let spec = ExperimentSpec::preset(ExperimentKind::InnerStar, 3, 21, 41).unwrap();
        generate(&spec).unwrap()
    }

    #[test]
    fn downsample_by_one_is_identity() {
        let ds = tiny_dataset();
        assert_eq!(downsample(&ds, 1).unwrap(), ds);
    }

    #[test]
    fn downsample_strides_points_and_targets() {
        let ds = tiny_dataset();
        let coarse = downsample(&ds, 4).unwrap();
        assert_eq!(coarse.spec.grid.n, 6);
        let fine_g = ds.spec.grid;
        let coarse_g = coarse.spec.grid;
        for (s_f, s_c) in ds.samples.iter().zip(&coarse.samples) {
            for c in 0..s_f.input.tensor.channels {
                for k in 0..coarse_g.num_points() {
                    let [ix, iy, _] = coarse_g.multi_index(k);
                    assert_eq!(
                        s_c.input.tensor.channel(c)[k],
                        s_f.input.tensor.channel(c)[fine_g.index(4 * ix, 4 * iy, 0)]
                    );
                }
            }
            let (Target::Field(uf), Target::Field(uc)) = (&s_f.target, &s_c.target) else {
                panic!("field targets expected")
            };
            assert_eq!(uc.grid, coarse_g);
            assert_eq!(uc.values[0], uf.values[0]);
        }
    }

    #[test]
    fn downsample_rejects_non_dividing_factor() {
        let ds = tiny_dataset();
        assert!(downsample(&ds, 3).is_err());
    }

    #[test]
    fn coefficient_targets_survive_downsampling_unchanged() {
        let spec = ExperimentSpec::preset(ExperimentKind::SquareTfpm, 2, 21, 43).unwrap();
        let ds = generate(&spec).unwrap();
        let coarse = downsample(&ds, 5).unwrap();
        assert_eq!(coarse.spec.grid.n, 5);
        for (f, c) in ds.samples.iter().zip(&coarse.samples) {
            assert_eq!(f.target, c.target);
        }
    }

    #[test]
    fn validate_catches_broken_splits() {
        let mut ds = tiny_dataset();
        ds.split.1.clear();
        assert!(ds.validate().is_err());
        let mut ds2 = tiny_dataset();
        ds2.split.1 = ds2.split.0.clone();
        assert!(ds2.validate().is_err());
    }

    #[test]
    fn validate_accepts_both_schemes() {
        let mut spec = ExperimentSpec::preset(ExperimentKind::InnerStar, 2, 17, 47).unwrap();
        spec.scheme = GeometryScheme::Characteristic;
        let ds = generate(&spec).unwrap();
        assert_eq!(ds.samples[0].input.manifest[0], "geom/char");
    }
}
