//! Per-grid-point policy inputs: raw signature coefficients or Lyndon
//! log-signature coordinates, stacked as `(paths · (J+1)) × D`.

use std::ops::Range;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::free_tensor::{tensor_dim, FreeTensor};
use crate::process::PathBatch;
use crate::signature::{for_each_prefix, LyndonBasis};

#[derive(Clone, Debug)]
pub struct Features {
    /// Row `m·(J+1) + j` holds the input at payoff point `j` of path `m`.
    pub data: Array2<f64>,
    pub paths: usize,
    pub points: usize,
}

impl Features {
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    /// Rows belonging to the given paths, in order.
    pub fn select_paths(&self, paths: &[usize]) -> Array2<f64> {
        let rows: Vec<usize> = paths.iter().flat_map(|&m| m * self.points..(m + 1) * self.points).collect();
        self.data.select(Axis(0), &rows)
    }
}

fn build(
    batch: &PathBatch,
    paths: Range<usize>,
    dim: usize,
    level: usize,
    fill: impl Fn(&[f64], &mut [f64]) -> Result<()> + Sync,
) -> Result<Features> {
    if paths.end > batch.len() {
        return Err(Error::Dimension(format!("path range {paths:?} exceeds batch of {}", batch.len())));
    }
    let points = batch.grid.steps + 1;
    let times = batch.grid.fine_times();
    let stride = batch.grid.stride();
    let mut data = Array2::zeros((paths.len() * points, dim));
    let rows_per_path = points * dim;
    data.as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(rows_per_path)
        .enumerate()
        .try_for_each(|(m, out)| -> Result<()> {
            let mut err = None;
            for_each_prefix(&times, batch.path(paths.start + m), stride, level, |j, s| {
                if err.is_none() {
                    if let Err(e) = fill(s, &mut out[j * dim..(j + 1) * dim]) {
                        err = Some(e);
                    }
                }
            })?;
            err.map_or(Ok(()), Err)
        })?;
    Ok(Features { data, paths: paths.len(), points })
}

/// Truncated signature coefficients including the empty word.
pub fn signature_features(batch: &PathBatch, level: usize) -> Result<Features> {
    signature_features_range(batch, 0..batch.len(), level)
}

pub fn signature_features_range(batch: &PathBatch, paths: Range<usize>, level: usize) -> Result<Features> {
    let width = 1 + batch.dim();
    build(batch, paths, tensor_dim(width, level), level, |s, out| {
        out.copy_from_slice(s);
        Ok(())
    })
}

/// Lyndon coordinates of the log-signature.
pub fn log_signature_features(batch: &PathBatch, basis: &LyndonBasis) -> Result<Features> {
    log_signature_features_range(batch, 0..batch.len(), basis)
}

pub fn log_signature_features_range(batch: &PathBatch, paths: Range<usize>, basis: &LyndonBasis) -> Result<Features> {
    let width = 1 + batch.dim();
    if basis.width() != width {
        return Err(Error::Dimension(format!("basis width {} vs path width {width}", basis.width())));
    }
    let level = basis.level();
    build(batch, paths, basis.len(), level, |s, out| {
        let log = FreeTensor::from_coeffs(width, level, s.to_vec())?.log()?;
        basis.project_into(log.coeffs(), out);
        Ok(())
    })
}
