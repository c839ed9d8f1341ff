//! Binary dataset files.
//!
//! Layout: magic `IFOP1`, version u16 LE, header length u32 LE, a JSON
//! header (spec, precision, channel manifest, target layout, split), then
//! per-sample little-endian value blocks, then a CRC32 of every preceding
//! byte. Value blocks hold the input channels in manifest order followed
//! by the target: field targets as one channel on the target grid,
//! coefficient targets as the per-cell `mu`, `particular`, `labels`, and
//! expansion coefficients of their field.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{target_grid, Dataset, ExperimentSpec};
use crate::encode::{EncodedInput, EncodedSample, Target};
use crate::error::{Error, Result};
use crate::grid::{ChannelTensor, GridSpec};
use crate::tfpm::{basis_dim, TfpmField};

const MAGIC: &[u8; 5] = b"IFOP1";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilePrecision {
    #[serde(rename = "f64")]
    F64,
    #[serde(rename = "f32")]
    F32,
}

impl FilePrecision {
    fn width(self) -> usize {
        match self {
            FilePrecision::F64 => 8,
            FilePrecision::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
enum TargetKindTag {
    Field,
    Tfpm,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: ExperimentSpec,
    precision: FilePrecision,
    input_manifest: Vec<String>,
    target_kind: TargetKindTag,
    target_grid: GridSpec,
    split: (Vec<usize>, Vec<usize>),
}

fn push_values(out: &mut Vec<u8>, values: &[f64], precision: FilePrecision) {
    match precision {
        FilePrecision::F64 => {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        FilePrecision::F32 => {
            for v in values {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
}

fn read_values(bytes: &[u8], count: usize, precision: FilePrecision) -> (Vec<f64>, usize) {
    let w = precision.width();
    let mut vals = Vec::with_capacity(count);
    match precision {
        FilePrecision::F64 => {
            for i in 0..count {
                vals.push(f64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap()));
            }
        }
        FilePrecision::F32 => {
            for i in 0..count {
                vals.push(
                    f32::from_le_bytes(bytes[i * 4..(i + 1) * 4].try_into().unwrap()) as f64,
                );
            }
        }
    }
    (vals, count * w)
}

/// Value count of one sample's block, input channels plus target.
fn sample_value_count(h: &Header) -> usize {
    let input = h.input_manifest.len() * h.spec.grid.num_points();
    let target = match h.target_kind {
        TargetKindTag::Field => h.target_grid.num_points(),
        TargetKindTag::Tfpm => {
            let nc = h.target_grid.num_cells();
            nc * (3 + basis_dim(h.target_grid.d))
        }
    };
    input + target
}

pub fn save(ds: &Dataset, path: &Path) -> Result<()> {
    save_with_precision(ds, path, FilePrecision::F64)
}

pub fn save_with_precision(ds: &Dataset, path: &Path, precision: FilePrecision) -> Result<()> {
    ds.validate()?;
    let (target_kind, tgrid) = match ds.samples.first() {
        Some(s) => match &s.target {
            Target::Field(u) => (TargetKindTag::Field, u.grid),
            Target::Tfpm(f) => (TargetKindTag::Tfpm, f.grid),
        },
        None => (TargetKindTag::Field, ds.spec.grid),
    };
    let header = Header {
        spec: ds.spec.clone(),
        precision,
        input_manifest: ds
            .samples
            .first()
            .map(|s| s.input.manifest.clone())
            .unwrap_or_default(),
        target_kind,
        target_grid: tgrid,
        split: ds.split.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::format(format!("header serialization failed: {e}")))?;

    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for s in &ds.samples {
        push_values(&mut bytes, &s.input.tensor.values, precision);
        match &s.target {
            Target::Field(u) => push_values(&mut bytes, &u.values, precision),
            Target::Tfpm(f) => {
                push_values(&mut bytes, &f.mu, precision);
                push_values(&mut bytes, &f.particular, precision);
                let labels: Vec<f64> = f.labels.iter().map(|&l| l as f64).collect();
                push_values(&mut bytes, &labels, precision);
                push_values(&mut bytes, &f.coeffs, precision);
            }
        }
    }
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&bytes);
    bytes.extend_from_slice(&hasher.finalize().to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    let fixed = MAGIC.len() + 2 + 4;
    if bytes.len() < fixed + 4 {
        return Err(Error::format("file too short for a dataset"));
    }
    if &bytes[..5] != MAGIC {
        return Err(Error::format("bad magic: not a dataset file"));
    }
    let version = u16::from_le_bytes(bytes[5..7].try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(format!("unsupported dataset version {version}")));
    }
    let header_len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    if bytes.len() < fixed + header_len + 4 {
        return Err(Error::format("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[fixed..fixed + header_len])
        .map_err(|e| Error::format(format!("malformed header: {e}")))?;

    let body_start = fixed + header_len;
    let per_sample = sample_value_count(&header) * header.precision.width();
    let expected = body_start + header.spec.n_samples * per_sample + 4;
    if bytes.len() != expected {
        return Err(Error::format(format!(
            "file length {} does not match the {} bytes the header implies",
            bytes.len(),
            expected
        )));
    }
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&bytes[..bytes.len() - 4]);
    let computed = hasher.finalize();
    if stored != computed {
        return Err(Error::format(format!(
            "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
        )));
    }

    let grid = header.spec.grid;
    let nch = header.input_manifest.len();
    let mut samples = Vec::with_capacity(header.spec.n_samples);
    let mut off = body_start;
    for _ in 0..header.spec.n_samples {
        let (vals, used) =
            read_values(&bytes[off..], nch * grid.num_points(), header.precision);
        off += used;
        let input =
            EncodedInput::new(ChannelTensor::from_values(grid, nch, vals)?, header.input_manifest.clone())?;
        let target = match header.target_kind {
            TargetKindTag::Field => {
                let (vals, used) =
                    read_values(&bytes[off..], header.target_grid.num_points(), header.precision);
                off += used;
                Target::Field(ChannelTensor::single(header.target_grid, vals)?)
            }
            TargetKindTag::Tfpm => {
                let nc = header.target_grid.num_cells();
                let nb = basis_dim(header.target_grid.d);
                let (mu, u1) = read_values(&bytes[off..], nc, header.precision);
                off += u1;
                let (particular, u2) = read_values(&bytes[off..], nc, header.precision);
                off += u2;
                let (label_vals, u3) = read_values(&bytes[off..], nc, header.precision);
                off += u3;
                let (coeffs, u4) = read_values(&bytes[off..], nc * nb, header.precision);
                off += u4;
                let labels: Vec<usize> = label_vals
                    .iter()
                    .map(|&v| {
                        if v.fract() == 0.0 && (0.0..1e9).contains(&v) {
                            Ok(v as usize)
                        } else {
                            Err(Error::format(format!("corrupt region label {v}")))
                        }
                    })
                    .collect::<Result<_>>()?;
                Target::Tfpm(TfpmField {
                    grid: header.target_grid,
                    mu,
                    particular,
                    labels,
                    coeffs,
                })
            }
        };
        samples.push(EncodedSample { input, target });
    }
    let ds = Dataset { spec: header.spec, samples, split: header.split };
    ds.validate()?;
    if let Some(first) = ds.samples.first() {
        if target_grid(&first.target) != header.target_grid {
            return Err(Error::format("target grid disagrees with the header"));
        }
    }
    Ok(ds)
}
