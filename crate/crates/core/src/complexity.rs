//! Spatial and temporal energy of luma content.
//!
//! Texture energy of a 32x32 block is the unweighted sum of absolute AC
//! coefficients of its orthonormal 2-D DCT-II, divided by the block area and
//! by `2^(bit_depth - 8)` so 8- and 10-bit sources land on the same scale.
//! Edge blocks are completed by replicating the last row/column.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::y4m::{Frame, Plane, Y4mError, Y4mReader};

pub const BLOCK: usize = 32;
const AREA: usize = BLOCK * BLOCK;

#[derive(Debug, Error)]
pub enum ComplexityError {
    #[error("frame size mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("clip has no frames")]
    EmptyClip,
    #[error("cannot read clip: {0}")]
    Ingest(#[from] Y4mError),
}

struct DctBasis([[f64; BLOCK]; BLOCK]);

fn basis() -> &'static DctBasis {
    static BASIS: OnceLock<DctBasis> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        let n = BLOCK as f64;
        for (k, row) in m.iter_mut().enumerate() {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            for (i, v) in row.iter_mut().enumerate() {
                *v = scale
                    * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * n)).cos();
            }
        }
        DctBasis(m)
    })
}

/// Orthonormal 2-D DCT-II of a row-major 32x32 block.
pub fn dct2d(block: &[f64]) -> Vec<f64> {
    assert_eq!(block.len(), AREA, "block must be 32x32");
    let c = &basis().0;
    // rows first, then columns
    let mut tmp = vec![0.0; AREA];
    for y in 0..BLOCK {
        let row = &block[y * BLOCK..(y + 1) * BLOCK];
        for k in 0..BLOCK {
            tmp[y * BLOCK + k] = c[k].iter().zip(row).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; AREA];
    for x in 0..BLOCK {
        for k in 0..BLOCK {
            out[k * BLOCK + x] = (0..BLOCK).map(|y| c[k][y] * tmp[y * BLOCK + x]).sum();
        }
    }
    out
}

/// Inverse of [`dct2d`].
pub fn idct2d(coeffs: &[f64]) -> Vec<f64> {
    assert_eq!(coeffs.len(), AREA, "block must be 32x32");
    let c = &basis().0;
    let mut tmp = vec![0.0; AREA];
    for x in 0..BLOCK {
        for y in 0..BLOCK {
            tmp[y * BLOCK + x] = (0..BLOCK).map(|k| c[k][y] * coeffs[k * BLOCK + x]).sum();
        }
    }
    let mut out = vec![0.0; AREA];
    for y in 0..BLOCK {
        for i in 0..BLOCK {
            out[y * BLOCK + i] = (0..BLOCK).map(|k| c[k][i] * tmp[y * BLOCK + k]).sum();
        }
    }
    out
}

fn depth_scale(bit_depth: u8) -> f64 {
    f64::from(1u32 << bit_depth.saturating_sub(8))
}

pub fn block_texture_energy(block: &[f64], bit_depth: u8) -> f64 {
    // removing the mean only moves the DC term, and makes flat blocks
    // transform to exact zeros
    let mean = block.iter().sum::<f64>() / block.len() as f64;
    let centered: Vec<f64> = block.iter().map(|v| v - mean).collect();
    let coeffs = dct2d(&centered);
    let ac: f64 = coeffs.iter().skip(1).map(|c| c.abs()).sum();
    ac / AREA as f64 / depth_scale(bit_depth)
}

fn blocks_across(plane: &Plane) -> (usize, usize) {
    (plane.width.div_ceil(BLOCK), plane.height.div_ceil(BLOCK))
}

/// Block `(bx, by)` of a plane with replication padding past the edges.
fn padded_block(plane: &Plane, bx: usize, by: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(AREA);
    for y in 0..BLOCK {
        let sy = (by * BLOCK + y).min(plane.height - 1);
        let row = plane.row(sy);
        for x in 0..BLOCK {
            let sx = (bx * BLOCK + x).min(plane.width - 1);
            out.push(f64::from(row[sx]));
        }
    }
    out
}

/// Texture energy of every luma block, in raster order.
pub fn block_energies(luma: &Plane, bit_depth: u8) -> Vec<f64> {
    let (nx, ny) = blocks_across(luma);
    (0..nx * ny)
        .into_par_iter()
        .map(|i| block_texture_energy(&padded_block(luma, i % nx, i / nx), bit_depth))
        .collect()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn frame_spatial_energy(frame: &Frame, bit_depth: u8) -> f64 {
    mean(&block_energies(&frame.y, bit_depth))
}

fn mean_block_abs_diff(cur: &Plane, prev: &Plane, bit_depth: u8) -> f64 {
    let (nx, ny) = blocks_across(cur);
    let per_block: Vec<f64> = (0..nx * ny)
        .into_par_iter()
        .map(|i| {
            let a = padded_block(cur, i % nx, i / nx);
            let b = padded_block(prev, i % nx, i / nx);
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / AREA as f64
        })
        .collect();
    mean(&per_block) / depth_scale(bit_depth)
}

fn pair_energy(
    cur: &Plane,
    prev: &Plane,
    cur_energy: &[f64],
    prev_energy: &[f64],
    bit_depth: u8,
) -> f64 {
    let texture: Vec<f64> = cur_energy
        .iter()
        .zip(prev_energy)
        .map(|(a, b)| (a - b).abs())
        .collect();
    mean(&texture) + mean_block_abs_diff(cur, prev, bit_depth)
}

/// Change between two frames: mean per-block texture-energy difference plus
/// mean absolute luma difference, both on the 8-bit scale.
pub fn temporal_energy(cur: &Frame, prev: &Frame, bit_depth: u8) -> Result<f64, ComplexityError> {
    if cur.y.width != prev.y.width || cur.y.height != prev.y.height {
        return Err(ComplexityError::DimensionMismatch(
            cur.y.width,
            cur.y.height,
            prev.y.width,
            prev.y.height,
        ));
    }
    let ec = block_energies(&cur.y, bit_depth);
    let ep = block_energies(&prev.y, bit_depth);
    Ok(pair_energy(&cur.y, &prev.y, &ec, &ep, bit_depth))
}

/// Per-clip complexity: mean spatial energy and peak temporal energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRecord {
    pub clip_id: String,
    pub frame_se: Vec<f64>,
    pub frame_te: Vec<f64>,
    pub clip_se: f64,
    pub clip_te: f64,
}

pub fn analyze_reader<R: BufRead>(
    clip_id: impl Into<String>,
    mut reader: Y4mReader<R>,
) -> Result<ComplexityRecord, ComplexityError> {
    let bit_depth = reader.header().bit_depth();
    let mut frame_se = Vec::new();
    let mut frame_te = Vec::new();
    let mut prev: Option<(Plane, Vec<f64>)> = None;
    while let Some(frame) = reader.next_frame()? {
        let energies = block_energies(&frame.y, bit_depth);
        frame_se.push(mean(&energies));
        if let Some((prev_luma, prev_energy)) = &prev {
            frame_te.push(pair_energy(&frame.y, prev_luma, &energies, prev_energy, bit_depth));
        }
        prev = Some((frame.y, energies));
    }
    if frame_se.is_empty() {
        return Err(ComplexityError::EmptyClip);
    }
    Ok(ComplexityRecord {
        clip_id: clip_id.into(),
        clip_se: mean(&frame_se),
        clip_te: frame_te.iter().copied().fold(0.0, f64::max),
        frame_se,
        frame_te,
    })
}

/// Analyzes a Y4M file; the clip id is the file stem.
pub fn analyze_clip(path: impl AsRef<Path>) -> Result<ComplexityRecord, ComplexityError> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    analyze_reader(id, Y4mReader::open(path)?)
}

/// Writes `clip_id,clip_se,clip_te` scatter rows.
pub fn write_scatter_csv<W: Write>(records: &[ComplexityRecord], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["clip_id", "clip_se", "clip_te"])?;
    for r in records {
        w.write_record([r.clip_id.clone(), r.clip_se.to_string(), r.clip_te.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
