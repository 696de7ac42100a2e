//! Frequency-domain baseline features.
//!
//! Each channel is cut into Hann-weighted frames of `t_w` seconds hopping by
//! `(1 − r_o)·t_w`, transformed, and reduced to power per frequency bin. The
//! transform approximates the continuous short-time Fourier integral,
//! `X[k] = Δt · Σ w[n]·x[n]·e^{−2πikn/L}`, and power is `|X|² / 2π`. Bins
//! are one-sided at `Δf = 1/t_w`; every bin other than DC and Nyquist is
//! doubled to account for its negative-frequency twin.
//!
//! Frames start at multiples of the hop and the frame count is
//! `floor(samples / hop)`, i.e. `f_freq · T` with `f_freq = 1/((1 − r_o)·t_w)`.
//! With `r_o = 0` this simply drops the incomplete trailing frame; with
//! overlap, the last frames reach past the signal and are zero-filled.
//!
//! Band power integrates the in-band bins with composite Simpson.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prep::MultichannelSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerScaling {
    /// `|Δt·DFT|² / 2π`
    #[default]
    Angular,
    /// Periodogram density, `|DFT|² / (fs·Σw²)`, µV²/Hz.
    Density,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `[bins × frames]`
    pub power: Array2<f64>,
    pub freqs: Vec<f64>,
    /// Frame centres in seconds.
    pub times: Vec<f64>,
    pub df: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn new(name: &str, low: f64, high: f64) -> Self {
        Band {
            name: name.to_string(),
            low,
            high,
        }
    }
}

/// δ, θ, α, σ, β, γ.
pub fn default_bands() -> Vec<Band> {
    vec![
        Band::new("delta", 0.5, 4.0),
        Band::new("theta", 4.0, 8.0),
        Band::new("alpha", 8.0, 12.0),
        Band::new("sigma", 12.0, 16.0),
        Band::new("beta", 16.0, 30.0),
        Band::new("gamma", 30.0, 40.0),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPowerMatrix {
    /// `[bands × frames]`
    pub power: Array2<f64>,
    pub bands: Vec<Band>,
}

/// Frame geometry in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub frame_len: usize,
    pub hop: usize,
}

impl FrameLayout {
    pub fn new(fs: f64, t_w: f64, r_o: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&r_o) {
            return Err(Error::param(format!(
                "overlap ratio must lie in [0, 1), got {r_o}"
            )));
        }
        let len_f = fs * t_w;
        let frame_len = len_f.round();
        if frame_len < 2.0 || (len_f - frame_len).abs() > 1e-9 * frame_len {
            return Err(Error::param(format!(
                "fs · t_w = {len_f} is not an integer ≥ 2"
            )));
        }
        let hop_f = (1.0 - r_o) * frame_len;
        let hop = hop_f.round();
        if hop < 1.0 || (hop_f - hop).abs() > 1e-9 * frame_len {
            return Err(Error::param(format!(
                "hop (1 − r_o)·fs·t_w = {hop_f} is not an integer"
            )));
        }
        Ok(FrameLayout {
            frame_len: frame_len as usize,
            hop: hop as usize,
        })
    }

    pub fn frames(&self, n_samples: usize) -> usize {
        n_samples / self.hop
    }
}

/// Reusable STFT: plan, window, and scaling for one frame layout.
pub struct Stft {
    fs: f64,
    layout: FrameLayout,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    scaling: PowerScaling,
}

impl Stft {
    pub fn new(fs: f64, t_w: f64, r_o: f64, scaling: PowerScaling) -> Result<Self> {
        let layout = FrameLayout::new(fs, t_w, r_o)?;
        let l = layout.frame_len;
        // periodic Hann: the continuous window on [−T/2, T/2) sampled at L points
        let window = (0..l)
            .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / l as f64).cos()))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(l);
        Ok(Stft {
            fs,
            layout,
            window,
            fft,
            scaling,
        })
    }

    pub fn layout(&self) -> FrameLayout {
        self.layout
    }

    pub fn n_bins(&self) -> usize {
        self.layout.frame_len / 2 + 1
    }

    pub fn power(&self, channel: ArrayView1<f64>) -> Result<Spectrogram> {
        let FrameLayout { frame_len: l, hop } = self.layout;
        let n = channel.len();
        if n < l {
            return Err(Error::param(format!(
                "{n} samples is shorter than one {l}-sample frame"
            )));
        }
        let frames = self.layout.frames(n);
        let bins = self.n_bins();
        let scale = match self.scaling {
            PowerScaling::Angular => 1.0 / (self.fs * self.fs * 2.0 * std::f64::consts::PI),
            PowerScaling::Density => {
                1.0 / (self.fs * self.window.iter().map(|w| w * w).sum::<f64>())
            }
        };
        let mut power = Array2::zeros((bins, frames));
        let mut buf = vec![Complex64::new(0.0, 0.0); l];
        for f in 0..frames {
            let start = f * hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = if start + i < n {
                    channel[start + i]
                } else {
                    0.0
                };
                *slot = Complex64::new(self.window[i] * x, 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..bins {
                let one_sided = if k == 0 || (l % 2 == 0 && k == l / 2) {
                    1.0
                } else {
                    2.0
                };
                power[[k, f]] = buf[k].norm_sqr() * scale * one_sided;
            }
        }
        let df = self.fs / l as f64;
        Ok(Spectrogram {
            power,
            freqs: (0..bins).map(|k| k as f64 * df).collect(),
            times: (0..frames)
                .map(|f| (f * hop) as f64 / self.fs + l as f64 / (2.0 * self.fs))
                .collect(),
            df,
        })
    }
}

/// Hann STFT power of one channel with the default scaling.
pub fn stft_power(channel: ArrayView1<f64>, fs: f64, t_w: f64, r_o: f64) -> Result<Spectrogram> {
    Stft::new(fs, t_w, r_o, PowerScaling::Angular)?.power(channel)
}

/// Composite Simpson over pairs of intervals; with an even point count the
/// final interval falls back to the trapezoid rule.
pub fn simpson(y: &[f64], dx: f64) -> Result<f64> {
    let n = y.len();
    if n < 2 {
        return Err(Error::param(format!(
            "simpson needs at least 2 points, got {n}"
        )));
    }
    let intervals = n - 1;
    let paired = intervals - intervals % 2;
    let mut total = 0.0;
    for i in (0..paired).step_by(2) {
        total += dx / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
    }
    if paired < intervals {
        total += dx / 2.0 * (y[n - 2] + y[n - 1]);
    }
    Ok(total)
}

/// Bin indices owned by `bands[b]`: half-open `[low, high)`, the last band closed.
pub fn band_bins(freqs: &[f64], bands: &[Band], b: usize) -> Vec<usize> {
    let band = &bands[b];
    let last = b + 1 == bands.len();
    let eps = 1e-9;
    freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| {
            f >= band.low - eps
                && if last {
                    f <= band.high + eps
                } else {
                    f < band.high - eps
                }
        })
        .map(|(i, _)| i)
        .collect()
}

/// Integrate each band's bins, frame by frame. A single-bin band yields
/// that bin's power times `Δf`.
pub fn band_power(spec: &Spectrogram, bands: &[Band]) -> Result<BandPowerMatrix> {
    let frames = spec.power.ncols();
    let mut out = Array2::zeros((bands.len(), frames));
    for b in 0..bands.len() {
        let bins = band_bins(&spec.freqs, bands, b);
        if bins.is_empty() {
            return Err(Error::param(format!(
                "band {} ({}–{} Hz) holds no frequency bin at Δf = {}",
                bands[b].name, bands[b].low, bands[b].high, spec.df
            )));
        }
        let first = bins[0];
        let span = bins.len();
        for f in 0..frames {
            let col = spec.power.column(f);
            let y = col.slice(ndarray::s![first..first + span]);
            out[[b, f]] = if span == 1 {
                y[0] * spec.df
            } else {
                simpson(&y.to_vec(), spec.df)?
            };
        }
    }
    Ok(BandPowerMatrix {
        power: out,
        bands: bands.to_vec(),
    })
}

/// `[N × B·frames]`: each channel's band-power matrix flattened band-major,
/// channels stacked in signal order.
pub fn frequency_features(
    signal: &MultichannelSignal,
    t_w: f64,
    r_o: f64,
    bands: &[Band],
    scaling: PowerScaling,
) -> Result<Array2<f64>> {
    let stft = Stft::new(signal.fs, t_w, r_o, scaling)?;
    let frames = stft.layout().frames(signal.n_samples());
    let mut out = Array2::zeros((signal.n_channels(), bands.len() * frames));
    for (mut row, channel) in out
        .axis_iter_mut(Axis(0))
        .zip(signal.data.axis_iter(Axis(0)))
    {
        let bp = band_power(&stft.power(channel)?, bands)?;
        for (dst, src) in row.iter_mut().zip(bp.power.iter()) {
            *dst = *src;
        }
    }
    Ok(out)
}
