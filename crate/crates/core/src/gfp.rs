//! Global Field Power and peak-map extraction.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::prep::MultichannelSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct GfpSeries {
    pub values: Vec<f64>,
    pub fs: f64,
}

/// Population standard deviation across channels at every sample.
pub fn gfp_of(data: ArrayView2<f64>) -> Result<Vec<f64>> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::param(format!(
            "GFP needs at least 2 channels, got {n}"
        )));
    }
    Ok(data
        .columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            var.sqrt()
        })
        .collect())
}

pub fn gfp_series(signal: &MultichannelSignal) -> Result<GfpSeries> {
    Ok(GfpSeries {
        values: gfp_of(signal.data.view())?,
        fs: signal.fs,
    })
}

/// Strict local maxima. A flat top counts once, at its first sample, and
/// only if the series falls again afterwards; endpoints are never peaks.
pub fn gfp_peaks(values: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    let n = values.len();
    let mut i = 1;
    while i + 1 < n {
        if values[i - 1] < values[i] {
            let mut j = i + 1;
            while j < n && values[j] == values[i] {
                j += 1;
            }
            if j < n && values[j] < values[i] {
                peaks.push(i);
            }
            i = j;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Rows are the `N`-channel topographies at `peaks`, `[t × N]`.
pub fn extract_peak_maps(signal: &MultichannelSignal, peaks: &[usize]) -> Result<Array2<f64>> {
    let len = signal.n_samples();
    if let Some(&bad) = peaks.iter().find(|&&p| p >= len) {
        return Err(Error::Bounds { index: bad, len });
    }
    Ok(signal
        .data
        .select(Axis(1), peaks)
        .reversed_axes()
        .as_standard_layout()
        .into_owned())
}

/// Subtract the per-sample channel mean. Not applied by default.
pub fn average_reference(signal: &MultichannelSignal) -> MultichannelSignal {
    let mean = signal.data.mean_axis(Axis(0)).expect("signal has channels");
    let mut out = signal.clone();
    out.data -= &mean.insert_axis(Axis(0));
    out
}

/// Convenience: peak maps of a prepared signal.
pub fn peak_maps(signal: &MultichannelSignal) -> Result<Array2<f64>> {
    let series = gfp_series(signal)?;
    extract_peak_maps(signal, &gfp_peaks(&series.values))
}
