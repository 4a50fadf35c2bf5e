//! Online folds over observation streams.

use ndarray::{ArrayD, IxDyn};

use crate::error::{AxonError, Result};
use crate::record::RecordTensor;

/// Exponentially decaying trace incremented by matching observations:
/// decayed toward zero each step, then incremented by `amplitude` wherever
/// the observation equals `target` (cumulative: increments add on top of
/// the decayed value).
#[derive(Debug, Clone)]
pub struct CumulativeTraceReducer {
    record: RecordTensor,
    tau: f32,
    amplitude: f32,
    target: f32,
}

impl CumulativeTraceReducer {
    pub fn new(shape: &[usize], tau: f32, amplitude: f32, target: f32, dt: f32) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "trace time constant must be positive, got {tau}"
            )));
        }
        Ok(Self {
            // single-slice record: only the folded value is retained
            record: RecordTensor::new(shape, dt, 0.0, true)?,
            tau,
            amplitude,
            target,
        })
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    pub fn amplitude(&self) -> f32 {
        self.amplitude
    }

    /// Current trace value.
    pub fn value(&self) -> ArrayD<f32> {
        self.record.latest()
    }

    /// Folds one observation: `x' = x * exp(-dt/tau) + amplitude * [obs == target]`.
    pub fn step(&mut self, obs: &ArrayD<f32>, dt: f32) -> Result<ArrayD<f32>> {
        if obs.shape() != self.record.slice_shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.record.slice_shape().to_vec(),
                got: obs.shape().to_vec(),
            });
        }
        let decay = (-(dt as f64) / self.tau as f64).exp() as f32;
        let mut next = self.record.latest();
        ndarray::Zip::from(&mut next).and(obs).for_each(|x, &o| {
            *x = *x * decay + if o == self.target { self.amplitude } else { 0.0 };
        });
        self.record.push(&next)?;
        Ok(next)
    }

    pub fn reset(&mut self) {
        self.record.clear();
    }
}

/// Initial value of an event reducer before any observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventInitial {
    /// NaN: lets downstream rules filter out pairs that have never fired.
    Nan,
    Inf,
    Zero,
}

impl EventInitial {
    fn value(&self) -> f32 {
        match self {
            EventInitial::Nan => f32::NAN,
            EventInitial::Inf => f32::INFINITY,
            EventInitial::Zero => 0.0,
        }
    }
}

/// Tracks the time elapsed since the last event per element: zero at steps
/// where the event fires, otherwise the previous value plus `dt` (NaN and
/// infinity propagate).
#[derive(Debug, Clone)]
pub struct EventReducer {
    elapsed: ArrayD<f32>,
    initial: EventInitial,
}

impl EventReducer {
    pub fn new(shape: &[usize], initial: EventInitial) -> Self {
        Self { elapsed: ArrayD::from_elem(IxDyn(shape), initial.value()), initial }
    }

    pub fn initial(&self) -> EventInitial {
        self.initial
    }

    pub fn value(&self) -> &ArrayD<f32> {
        &self.elapsed
    }

    /// Folds one observation; nonzero entries mark events.
    pub fn step(&mut self, obs: &ArrayD<f32>, dt: f32) -> Result<&ArrayD<f32>> {
        if obs.shape() != self.elapsed.shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.elapsed.shape().to_vec(),
                got: obs.shape().to_vec(),
            });
        }
        ndarray::Zip::from(&mut self.elapsed).and(obs).for_each(|e, &o| {
            *e = if o != 0.0 { 0.0 } else { *e + dt };
        });
        Ok(&self.elapsed)
    }

    pub fn reset(&mut self) {
        self.elapsed.fill(self.initial.value());
    }
}

/// Either reducer kind behind one interface, as stored by monitors.
#[derive(Debug, Clone)]
pub enum Reducer {
    Trace(CumulativeTraceReducer),
    Event(EventReducer),
}

impl Reducer {
    pub fn step(&mut self, obs: &ArrayD<f32>, dt: f32) -> Result<ArrayD<f32>> {
        match self {
            Reducer::Trace(r) => r.step(obs, dt),
            Reducer::Event(r) => Ok(r.step(obs, dt)?.clone()),
        }
    }

    pub fn value(&self) -> ArrayD<f32> {
        match self {
            Reducer::Trace(r) => r.value(),
            Reducer::Event(r) => r.value().clone(),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Reducer::Trace(r) => r.reset(),
            Reducer::Event(r) => r.reset(),
        }
    }
}
