//! Pair-based STDP over connection weights.
//!
//! Potentiation is gated by postsynaptic spikes against the presynaptic
//! trace; depression by presynaptic spikes against the postsynaptic trace.
//! Cumulative traces give all-to-all pair interaction. Everything is
//! expressed through the receptive-field interface, so one implementation
//! serves every connection type.

use ndarray::{ArrayD, Axis};

use crate::component::ComponentId;
use crate::connections::{receptive_product, UpdateSign};
use crate::error::{AxonError, Result};
use crate::learn::monitors::{
    Monitor, MonitorKey, MonitorPool, ObservationSource, ReducerSig,
};
use crate::learn::reducers::{CumulativeTraceReducer, Reducer};
use crate::network::Cell;

/// STDP hyperparameters. `eta_pos`/`eta_neg` are nonnegative magnitudes;
/// potentiation and depression signs are applied by the accumulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpConfig {
    pub eta_pos: f32,
    pub eta_neg: f32,
    /// Presynaptic trace time constant (ms), gates potentiation.
    pub tau_pos: f32,
    /// Postsynaptic trace time constant (ms), gates depression.
    pub tau_neg: f32,
    /// Observe delay-shifted presynaptic spikes instead of raw ones, so
    /// weight updates see inputs as the outputs did.
    pub delay_aware: bool,
}

impl StdpConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau_pos > 0.0) || !(self.tau_neg > 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "trace time constants must be positive, got {} and {}",
                self.tau_pos, self.tau_neg
            )));
        }
        if self.eta_pos < 0.0 || self.eta_neg < 0.0 {
            return Err(AxonError::InvalidConfig(
                "learning-rate magnitudes must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

struct RegisteredCell {
    cell: Cell,
    key: (ComponentId, ComponentId),
    pre_trace: MonitorKey,
    post_trace: MonitorKey,
}

/// Trains the weights of registered cells.
pub struct StdpTrainer {
    cfg: StdpConfig,
    pool: MonitorPool,
    cells: Vec<RegisteredCell>,
    steps: u64,
}

impl StdpTrainer {
    pub fn new(cfg: StdpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, pool: MonitorPool::new(), cells: Vec::new(), steps: 0 })
    }

    pub fn config(&self) -> &StdpConfig {
        &self.cfg
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Number of live (deduplicated) monitors.
    pub fn monitor_count(&self) -> usize {
        self.pool.len()
    }

    pub fn pool(&self) -> &MonitorPool {
        &self.pool
    }

    /// Adds a cell: requires a weight updater on its connection and creates
    /// (or shares) the presynaptic and postsynaptic trace monitors.
    pub fn register(&mut self, cell: &Cell) -> Result<()> {
        let key = cell.key();
        if self.cells.iter().any(|c| c.key == key) {
            return Err(AxonError::DuplicateRegistration);
        }
        if cell.connection.borrow_mut().weight_accumulator_mut().is_none() {
            return Err(AxonError::MissingUpdater);
        }
        let (dt, pre_shape) = {
            let conn = cell.connection.borrow();
            let pre_shape = if self.cfg.delay_aware {
                conn.presyn_delayed_shape()
            } else {
                let mut s = vec![conn.batch()];
                s.extend(conn.input_shape());
                s
            };
            (conn.dt(), pre_shape)
        };
        let post_shape = {
            let neuron = cell.neuron.borrow();
            let mut s = vec![neuron.batch()];
            s.extend_from_slice(neuron.shape());
            s
        };

        let pre_source = if self.cfg.delay_aware {
            ObservationSource::SynapseSpikesDelayed(cell.connection.clone())
        } else {
            ObservationSource::SynapseSpikes(cell.connection.clone())
        };
        let pre_key = MonitorKey {
            source: pre_source.key(),
            sig: ReducerSig::trace(self.cfg.tau_pos, 1.0),
        };
        let tau_pos = self.cfg.tau_pos;
        self.pool.acquire(pre_key.clone(), || {
            Ok(Monitor::new(
                pre_source,
                Reducer::Trace(CumulativeTraceReducer::new(&pre_shape, tau_pos, 1.0, 1.0, dt)?),
                dt,
            ))
        })?;

        let post_source = ObservationSource::NeuronSpikes(cell.neuron.clone());
        let post_key = MonitorKey {
            source: post_source.key(),
            sig: ReducerSig::trace(self.cfg.tau_neg, 1.0),
        };
        let tau_neg = self.cfg.tau_neg;
        if let Err(e) = self.pool.acquire(post_key.clone(), || {
            Ok(Monitor::new(
                post_source,
                Reducer::Trace(CumulativeTraceReducer::new(&post_shape, tau_neg, 1.0, 1.0, dt)?),
                dt,
            ))
        }) {
            self.pool.release(&pre_key)?;
            return Err(e);
        }

        self.cells.push(RegisteredCell { cell: cell.clone(), key, pre_trace: pre_key, post_trace: post_key });
        Ok(())
    }

    /// Removes a cell, releasing exactly the monitors it acquired.
    pub fn unregister(&mut self, cell: &Cell) -> Result<()> {
        let key = cell.key();
        let idx = self
            .cells
            .iter()
            .position(|c| c.key == key)
            .ok_or(AxonError::NotRegistered)?;
        let entry = self.cells.remove(idx);
        self.pool.release(&entry.pre_trace)?;
        self.pool.release(&entry.post_trace)?;
        Ok(())
    }

    /// Folds every monitor once, then stages this step's weight updates on
    /// each registered cell's accumulator. Call after the forward pass of
    /// the simulation step.
    pub fn step(&mut self) -> Result<()> {
        self.steps += 1;
        self.pool.fold_all(self.steps)?;
        for entry in &self.cells {
            let x_pre = self
                .pool
                .output(&entry.pre_trace)
                .ok_or(AxonError::NotRegistered)?;
            let x_post = self
                .pool
                .output(&entry.post_trace)
                .ok_or(AxonError::NotRegistered)?;
            let post_spikes = entry
                .cell
                .neuron
                .borrow()
                .spikes()
                .mapv(|s| if s { 1.0f32 } else { 0.0 });

            let mut conn = entry.cell.connection.borrow_mut();
            let pre_spikes = if self.cfg.delay_aware {
                conn.delayed_spikes()?
            } else {
                conn.raw_spikes()
            };

            let pot = receptive_product(
                &conn.postsyn_receptive(&post_spikes)?,
                &conn.presyn_receptive(&x_pre)?,
            )?;
            let dep = receptive_product(
                &conn.postsyn_receptive(&x_post)?,
                &conn.presyn_receptive(&pre_spikes)?,
            )?;
            let pot = batch_mean(pot, self.cfg.eta_pos);
            let dep = batch_mean(dep, self.cfg.eta_neg);
            conn.stage_weight_update(pot, UpdateSign::Pos)?;
            conn.stage_weight_update(dep, UpdateSign::Neg)?;
        }
        Ok(())
    }
}

/// Collapses the batch axis by mean and applies the learning rate.
pub(crate) fn batch_mean(x: ArrayD<f32>, eta: f32) -> ArrayD<f32> {
    let mut out = x.mean_axis(Axis(0)).expect("batch axis is non-empty");
    out.mapv_inplace(|v| v * eta);
    out
}
