//! CPU simulation of spiking neural networks with trainable heterogeneous
//! synaptic delays.
//!
//! The crate is organized around a small set of composable pieces:
//!
//! * [`record`] — rolling-window temporal storage ([`record::RecordTensor`])
//!   with continuous-time reads and writes, the backing store for synapse
//!   history and observation reducers.
//! * [`functional`] — reusable neuronal dynamics primitives (exact linear
//!   membrane integration, thresholding, adaptive thresholds).
//! * [`neurons`] — stateful neuron groups (LIF, ALIF, GLIF2) assembled from
//!   the functional primitives.
//! * [`synapses`] — delta synapses that convert spikes to currents and keep
//!   a rolling spike history for delayed access.
//! * [`connections`] — trainable mappings (dense/direct/lateral linear and
//!   2-D convolution) with optional per-weight delays, receptive-field
//!   reshaping, and accumulator-based parameter updates.
//! * [`learn`] — monitors, reducers, pair-based STDP for weights, and
//!   delay-adjusted STDP for delays, written once against the
//!   receptive-field interface so they apply to every connection type.
//! * [`encode`] — Poisson spike-train encoding of rate inputs.
//! * [`network`] — layer/cell wiring, including the excitatory–inhibitory
//!   layer with buffered one-step recurrence.

pub mod component;
pub mod connections;
pub mod encode;
pub mod error;
pub mod functional;
pub mod learn;
pub mod network;
pub mod neurons;
pub mod record;
pub mod synapses;
mod tensor;

pub use error::{AxonError, Result};
pub use tensor::{broadcast_shape, co_broadcast};
