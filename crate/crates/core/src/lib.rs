//! EEG microstate tokenization.
//!
//! Continuous multichannel EEG is turned into a sequence of discrete
//! microstate ids. A codebook of `k` centroid topographies is fitted with
//! streaming k-means on the maps found at Global Field Power peaks, then
//! every sample of a recording is assigned to its nearest centroid.
//!
//! ```text
//! Recording (EDF / CSV / raw container)
//!   ├─ prep::select_channels   F3 F4 C3 C4 O1 O2
//!   ├─ prep::bandpass          1–40 Hz, zero phase
//!   ├─ prep::resample          → 100 Hz
//!   ├─ gfp::gfp_series / gfp_peaks / extract_peak_maps
//!   ├─ cluster::streaming_fit  → Codebook (k centroids + PAD id)
//!   └─ tokenize::tokenize      → TokenSequence → slice_windows
//! ```
//!
//! Alongside the tokenizer the crate carries the frequency-domain baseline
//! ([`spectral`]), distribution analytics and a softmax classifier with
//! accuracy / Cohen's kappa ([`analytics`]), and a deterministic synthetic
//! generator used by the end-to-end tests ([`synth`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod cluster;
pub mod dataset;
mod error;
pub mod gfp;
pub mod io;
pub mod pipeline;
pub mod prep;
pub mod spectral;
pub mod synth;
pub mod tokenize;

pub use cluster::{Codebook, FitConfig, FitMode};
pub use error::{Error, Result};
pub use io::Recording;
pub use prep::MultichannelSignal;
pub use tokenize::{LabeledWindow, TokenSequence};

/// Label id for an epoch that was not scored.
pub const UNSCORED: u32 = u32::MAX;

/// The six leads shared by nearly every PSG montage.
pub const DEFAULT_CHANNELS: [&str; 6] = ["F3", "F4", "C3", "C4", "O1", "O2"];
