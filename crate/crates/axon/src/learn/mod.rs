//! Observation reducers, shared monitors, and the two trainers: pair-based
//! STDP for weights and delay-adjusted STDP for delays.

mod delay_stdp;
mod monitors;
mod reducers;
mod stdp;

pub use delay_stdp::{DelayStdpConfig, DelayStdpTrainer};
pub use monitors::{Monitor, MonitorKey, MonitorPool, ObservationSource, ReducerSig, SourceKey};
pub use reducers::{CumulativeTraceReducer, EventInitial, EventReducer, Reducer};
pub use stdp::{StdpConfig, StdpTrainer};
