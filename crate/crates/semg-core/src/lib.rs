//! Surface EMG gesture classification pipeline.
//!
//! End-to-end toolkit for classifying hand gestures from multichannel sEMG
//! recordings: CSV ingestion and synthetic data generation, rectify/filter/
//! smooth preprocessing, overlapping window segmentation, SNR-calibrated
//! noise augmentation, a feed-forward attention network with a hand-rolled
//! reverse-mode core, focal-loss training with RAdam+Lookahead, and
//! confusion-matrix metrics (accuracy, balanced accuracy, MCC).
//!
//! The crate is organized to mirror the pipeline stages:
//!
//! * [`data`] — recordings, CSV exchange format, synthetic generation, splits
//! * [`dsp`] — rectification, Butterworth high-pass, moving average
//! * [`windowing`] — overlapping window extraction and the window file format
//! * [`augment`] — SNR-proportional Gaussian noise augmentation
//! * [`nn`] — dense/conv1d/layernorm/activation/dropout forward+backward
//! * [`attention`] — channel-wise temporal attention and its ablation variants
//! * [`model`] — expansion → attention → classifier assembly
//! * [`train`] — focal loss, RAdam, Lookahead, cosine schedule, epoch loop
//! * [`metrics`] — confusion matrix, accuracy, balanced accuracy, MCC
//!
//! All stochastic operations take explicit seeds; identical seeds produce
//! bit-identical outputs.

pub mod attention;
pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod windowing;

pub use error::{Error, Result};
pub use tensor::Tensor2;
