//! Monitors attach reducers to observable component state.
//!
//! A [`MonitorPool`] shares monitors between trainer registrations when the
//! observed source and the reducer signature coincide, so a neuron group
//! feeding several cells is only folded once per step.

use std::collections::HashMap;

use ndarray::ArrayD;

use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::learn::reducers::{EventInitial, Reducer};
use crate::network::{SharedConnection, SharedNeuron};

/// What a monitor observes.
#[derive(Clone)]
pub enum ObservationSource {
    /// Spikes emitted by a neuron group (as 0/1 reals).
    NeuronSpikes(SharedNeuron),
    /// Raw input spikes received by a connection's synapse, without any
    /// delay offset.
    SynapseSpikes(SharedConnection),
    /// Delay-shifted input spikes in the connection's delayed layout.
    SynapseSpikesDelayed(SharedConnection),
    /// The current output of another monitor in the same pool; folded in
    /// registration order, so register upstream monitors first.
    MonitorOutput(MonitorKey),
}

impl ObservationSource {
    /// Stable identity used for deduplication.
    pub fn key(&self) -> SourceKey {
        match self {
            ObservationSource::NeuronSpikes(n) => SourceKey::Neuron(n.borrow().id()),
            ObservationSource::SynapseSpikes(c) => SourceKey::Synapse(c.borrow().id()),
            ObservationSource::SynapseSpikesDelayed(c) => {
                SourceKey::SynapseDelayed(c.borrow().id())
            }
            ObservationSource::MonitorOutput(k) => SourceKey::Monitor(Box::new(k.clone())),
        }
    }
}

/// Identity of an observation source.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SourceKey {
    Neuron(ComponentId),
    Synapse(ComponentId),
    SynapseDelayed(ComponentId),
    Monitor(Box<MonitorKey>),
}

/// Reducer signature: the kind plus its parameters, bit-compared so equal
/// configurations share a monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReducerSig {
    Trace { tau_bits: u32, amplitude_bits: u32 },
    Event { initial: EventInitial },
}

impl ReducerSig {
    pub fn trace(tau: f32, amplitude: f32) -> Self {
        ReducerSig::Trace { tau_bits: tau.to_bits(), amplitude_bits: amplitude.to_bits() }
    }

    pub fn event(initial: EventInitial) -> Self {
        ReducerSig::Event { initial }
    }
}

/// Pool key: one live monitor per (source, reducer signature).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonitorKey {
    pub source: SourceKey,
    pub sig: ReducerSig,
}

/// A reducer bound to its observation source.
pub struct Monitor {
    source: ObservationSource,
    reducer: Reducer,
    dt: f32,
    output: Option<ArrayD<f32>>,
    last_folded: u64,
}

impl Monitor {
    pub fn new(source: ObservationSource, reducer: Reducer, dt: f32) -> Self {
        Self { source, reducer, dt, output: None, last_folded: 0 }
    }

    pub fn key(&self) -> MonitorKey {
        MonitorKey {
            source: self.source.key(),
            sig: match &self.reducer {
                Reducer::Trace(t) => ReducerSig::trace(t.tau(), t.amplitude()),
                Reducer::Event(e) => ReducerSig::event(e.initial()),
            },
        }
    }

    /// Latest folded output; the reducer's initial value before any fold.
    pub fn output(&self) -> ArrayD<f32> {
        match &self.output {
            Some(o) => o.clone(),
            None => self.reducer.value(),
        }
    }
}

/// Keyed, refcounted monitor storage with insertion-ordered folding.
#[derive(Default)]
pub struct MonitorPool {
    entries: Vec<(MonitorKey, Monitor, usize)>,
    index: HashMap<MonitorKey, usize>,
}

impl MonitorPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: &MonitorKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &MonitorKey> {
        self.entries.iter().map(|(k, _, _)| k)
    }

    /// Returns the shared monitor for `key`, creating it with `make` when no
    /// equivalent monitor is live. Each acquire must be paired with one
    /// [`MonitorPool::release`].
    pub fn acquire<F>(&mut self, key: MonitorKey, make: F) -> Result<MonitorKey>
    where
        F: FnOnce() -> Result<Monitor>,
    {
        if let Some(&i) = self.index.get(&key) {
            self.entries[i].2 += 1;
            return Ok(key);
        }
        let monitor = make()?;
        debug_assert_eq!(monitor.key(), key);
        self.entries.push((key.clone(), monitor, 1));
        self.index.insert(key.clone(), self.entries.len() - 1);
        Ok(key)
    }

    /// Drops one reference; the monitor is removed when the last holder
    /// releases it.
    pub fn release(&mut self, key: &MonitorKey) -> Result<()> {
        let &i = self.index.get(key).ok_or(AxonError::NotRegistered)?;
        self.entries[i].2 -= 1;
        if self.entries[i].2 == 0 {
            self.entries.remove(i);
            self.index.clear();
            for (j, (k, _, _)) in self.entries.iter().enumerate() {
                self.index.insert(k.clone(), j);
            }
        }
        Ok(())
    }

    /// Latest output of the monitor under `key`.
    pub fn output(&self, key: &MonitorKey) -> Option<ArrayD<f32>> {
        self.index.get(key).map(|&i| self.entries[i].1.output())
    }

    fn observe(&self, source: &ObservationSource) -> Result<ArrayD<f32>> {
        Ok(match source {
            ObservationSource::NeuronSpikes(n) => {
                n.borrow().spikes().mapv(|s| if s { 1.0 } else { 0.0 })
            }
            ObservationSource::SynapseSpikes(c) => c.borrow().raw_spikes(),
            ObservationSource::SynapseSpikesDelayed(c) => c.borrow().delayed_spikes()?,
            ObservationSource::MonitorOutput(key) => self
                .output(key)
                .ok_or(AxonError::NotRegistered)?,
        })
    }

    /// Folds every monitor exactly once for simulation step `step`, in
    /// registration order. Calling twice with the same step number is a
    /// no-op, which is what keeps shared monitors single-folded.
    pub fn fold_all(&mut self, step: u64) -> Result<()> {
        for i in 0..self.entries.len() {
            if self.entries[i].1.last_folded >= step {
                continue;
            }
            let source = self.entries[i].1.source.clone();
            let obs = self.observe(&source)?;
            let entry = &mut self.entries[i].1;
            let out = entry.reducer.step(&obs, entry.dt)?;
            entry.output = Some(out);
            entry.last_folded = step;
        }
        Ok(())
    }
}
