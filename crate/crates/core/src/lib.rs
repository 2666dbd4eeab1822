//! Multi-channel neural graphical event models for multivariate event streams.
//!
//! The crate learns history-dependent conditional intensities with a shared
//! LSTM whose hidden state is partitioned into one channel per label (plus a
//! channel for the auxiliary fake label), a memory bank of recent per-label
//! states attended over with dot-product attention, and a small feed-forward
//! network mapping each channel's attended state and elapsed time to a rate.
//!
//! Modules, bottom-up:
//!
//! - [`autodiff`]: dense tensors and a reverse-mode tape.
//! - [`streams`]: event streams, CSV I/O, splitting and fake-epoch augmentation.
//! - [`pgem`]: proximal graphical event models: sampling, exact simulation and
//!   the exact log-likelihood.
//! - [`model`]: the recurrent intensity network and its checkpoint format.
//! - [`train`]: quadrature log-likelihood, regularized objective, Adam loop.
//! - [`eval`]: test log-likelihood, attention graphs and intensity traces.

pub mod autodiff;
pub mod eval;
pub mod model;
mod par;
pub mod pgem;
pub mod streams;
pub mod train;

#[cfg(feature = "cli")]
pub mod cli;
