//! Confidence-aware label smoothing and curriculum learning for small
//! softmax classifiers, with calibration metrics.
//!
//! The crate is organised by stage:
//!
//! - [`dataset`]: multi-rater datasets, synthetic generation, splits
//! - [`confidence`]: human confidence from votes, model confidence from a baseline
//! - [`smoothing`]: one-hot, uniform and confidence-weighted soft targets
//! - [`curriculum`]: the decaying ranking threshold that gates hard samples
//! - [`trainer`]: the network, its gradients, SGD with momentum, the training loop
//! - [`calibration`]: accuracy, ECE and reliability bins
//! - [`cli`]: the `confcal` command-line tool
//!
//! ```
//! use confcal::smoothing::{hc_smooth, one_hot, SmoothingConfig};
//! use confcal::ProbVector;
//!
//! let target = one_hot(0, 2)?;
//! let votes = ProbVector::new(vec![0.8, 0.2])?;
//! let soft = hc_smooth(&target, &votes, &SmoothingConfig::new(0.1, 0.1)?)?;
//! assert!((soft[0] - 0.91 / 0.97).abs() < 1e-12);
//! # Ok::<(), confcal::Error>(())
//! ```

pub mod calibration;
pub mod cli;
pub mod confidence;
pub mod curriculum;
pub mod dataset;
mod error;
mod prob;
pub mod smoothing;
pub mod trainer;

pub use error::{Error, Result};
pub use prob::{argmax, ProbVector, SIMPLEX_TOLERANCE};

// Book chapters are compiled as doctests so their snippets stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/label-smoothing.md")]
    mod label_smoothing {}
    #[doc = include_str!("../../../book/src/confidence.md")]
    mod confidence {}
    #[doc = include_str!("../../../book/src/curriculum.md")]
    mod curriculum {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
