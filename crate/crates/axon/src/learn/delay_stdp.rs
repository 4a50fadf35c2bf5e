//! Spike-timing-based learning of conduction delays.
//!
//! For each (input, output) pair the rule compares the last postsynaptic
//! spike against the last raw presynaptic spike, with the learned delay
//! folded into the comparison:
//!
//! `t_delta = since_post - since_pre + D`
//!
//! where `since_*` are times elapsed since the last spikes. At a step where
//! the postsynaptic neuron has just fired, `t_delta = D - (t_post - t_pre)`:
//! it is negative while the learned delay is shorter than the observed
//! firing-time gap and positive once it overshoots. The staged change is
//!
//! `dD = b_neg * exp(-|t_delta| / tau_neg)` when `t_delta >= 0`,
//! `dD = b_pos * exp(-|t_delta| / tau_pos)` when `t_delta < 0`,
//!
//! so with `b_neg < 0 < b_pos` the update sign is `-sign(t_delta)` and the
//! delay moves toward the measured gap. Pairs in which either side has
//! never fired carry NaN elapsed times and are filtered out; updates are
//! gated to steps where the pair saw a new presynaptic or postsynaptic
//! spike.

use ndarray::{ArrayD, Axis};

use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::learn::monitors::{Monitor, MonitorKey, MonitorPool, ObservationSource, ReducerSig};
use crate::learn::reducers::{EventInitial, EventReducer, Reducer};
use crate::network::Cell;
use crate::tensor::co_broadcast;

/// Delay-learning hyperparameters. Hebbian when `b_neg < 0` and `b_pos > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayStdpConfig {
    /// Update magnitude (ms) on the `t_delta < 0` branch.
    pub b_pos: f32,
    /// Update magnitude (ms) on the `t_delta >= 0` branch.
    pub b_neg: f32,
    /// Decay constant (ms) for the `t_delta < 0` branch.
    pub tau_pos: f32,
    /// Decay constant (ms) for the `t_delta >= 0` branch.
    pub tau_neg: f32,
}

impl DelayStdpConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tau_pos > 0.0) || !(self.tau_neg > 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "decay constants must be positive, got {} and {}",
                self.tau_pos, self.tau_neg
            )));
        }
        Ok(())
    }
}

struct RegisteredCell {
    cell: Cell,
    key: (ComponentId, ComponentId),
    pre_event: MonitorKey,
    post_event: MonitorKey,
}

/// Trains the delays of registered cells.
pub struct DelayStdpTrainer {
    cfg: DelayStdpConfig,
    pool: MonitorPool,
    cells: Vec<RegisteredCell>,
    steps: u64,
}

impl DelayStdpTrainer {
    pub fn new(cfg: DelayStdpConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, pool: MonitorPool::new(), cells: Vec::new(), steps: 0 })
    }

    pub fn config(&self) -> &DelayStdpConfig {
        &self.cfg
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn monitor_count(&self) -> usize {
        self.pool.len()
    }

    pub fn pool(&self) -> &MonitorPool {
        &self.pool
    }

    /// Adds a cell: requires enabled delays and a delay updater. Two
    /// time-since-spike monitors are created (or shared): one on the
    /// neuron's spikes, one on the raw presynaptic spikes, both starting as
    /// NaN so unpaired elements are filtered.
    pub fn register(&mut self, cell: &Cell) -> Result<()> {
        let key = cell.key();
        if self.cells.iter().any(|c| c.key == key) {
            return Err(AxonError::DuplicateRegistration);
        }
        {
            let mut conn = cell.connection.borrow_mut();
            if !conn.delays_enabled() {
                return Err(AxonError::DelaysDisabled);
            }
            if conn.delay_accumulator_mut().is_none() {
                return Err(AxonError::MissingUpdater);
            }
        }
        let (dt, pre_shape) = {
            let conn = cell.connection.borrow();
            let mut s = vec![conn.batch()];
            s.extend(conn.input_shape());
            (conn.dt(), s)
        };
        let post_shape = {
            let neuron = cell.neuron.borrow();
            let mut s = vec![neuron.batch()];
            s.extend_from_slice(neuron.shape());
            s
        };

        let pre_source = ObservationSource::SynapseSpikes(cell.connection.clone());
        let pre_key = MonitorKey {
            source: pre_source.key(),
            sig: ReducerSig::event(EventInitial::Nan),
        };
        self.pool.acquire(pre_key.clone(), || {
            Ok(Monitor::new(
                pre_source,
                Reducer::Event(EventReducer::new(&pre_shape, EventInitial::Nan)),
                dt,
            ))
        })?;

        let post_source = ObservationSource::NeuronSpikes(cell.neuron.clone());
        let post_key = MonitorKey {
            source: post_source.key(),
            sig: ReducerSig::event(EventInitial::Nan),
        };
        if let Err(e) = self.pool.acquire(post_key.clone(), || {
            Ok(Monitor::new(
                post_source,
                Reducer::Event(EventReducer::new(&post_shape, EventInitial::Nan)),
                dt,
            ))
        }) {
            self.pool.release(&pre_key)?;
            return Err(e);
        }

        self.cells.push(RegisteredCell {
            cell: cell.clone(),
            key,
            pre_event: pre_key,
            post_event: post_key,
        });
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
        self.pool.release(&entry.pre_event)?;
        self.pool.release(&entry.post_event)?;
        Ok(())
    }

    /// Folds the event monitors once, then stages this step's delay updates
    /// per cell. The learned delay is read before any staged update is
    /// applied.
    pub fn step(&mut self) -> Result<()> {
        self.steps += 1;
        self.pool.fold_all(self.steps)?;
        for entry in &self.cells {
            let since_post = self
                .pool
                .output(&entry.post_event)
                .ok_or(AxonError::NotRegistered)?;
            let since_pre = self
                .pool
                .output(&entry.pre_event)
                .ok_or(AxonError::NotRegistered)?;
            let post_spikes = entry
                .cell
                .neuron
                .borrow()
                .spikes()
                .mapv(|s| if s { 1.0f32 } else { 0.0 });

            let mut conn = entry.cell.connection.borrow_mut();
            let pre_spikes = conn.raw_spikes();
            let delay = conn.delay().ok_or(AxonError::DelaysDisabled)?;

            let post_v = conn.postsyn_receptive(&since_post)?;
            let pre_v = conn.presyn_receptive(&since_pre)?;
            let gap = {
                let (p, q, _) = co_broadcast(&post_v, &pre_v)?;
                &p.to_owned() - &q
            };
            let last_axis = Axis(delay.ndim());
            let delay_v = delay.insert_axis(last_axis);
            let t_delta = {
                let (g, d, _) = co_broadcast(&gap, &delay_v)?;
                &g.to_owned() + &d
            };

            // Gate: a new spike on either side of the pair this step.
            let gate = {
                let post_s = conn.postsyn_receptive(&post_spikes)?;
                let pre_s = conn.presyn_receptive(&pre_spikes)?;
                let (p, q, _) = co_broadcast(&post_s, &pre_s)?;
                &p.to_owned() + &q
            };

            let cfg = self.cfg;
            let raw = ndarray::Zip::from(&t_delta).and(&gate).map_collect(|&td, &g| {
                if g <= 0.0 || td.is_nan() {
                    f32::NAN
                } else if td >= 0.0 {
                    cfg.b_neg * (-td / cfg.tau_neg).exp()
                } else {
                    cfg.b_pos * (td / cfg.tau_pos).exp()
                }
            });

            // NaN-ignoring sum over the receptive axis, mean over batch.
            let r_axis = Axis(raw.ndim() - 1);
            let summed = raw.map_axis(r_axis, |lane| {
                lane.iter().filter(|v| !v.is_nan()).sum::<f32>()
            });
            let per_param = summed
                .mean_axis(Axis(0))
                .expect("batch axis is non-empty");

            let pos = per_param.mapv(|v| v.max(0.0));
            let neg = per_param.mapv(|v| (-v).max(0.0));
            conn.stage_delay_update(pos, crate::connections::UpdateSign::Pos)?;
            conn.stage_delay_update(neg, crate::connections::UpdateSign::Neg)?;
        }
        Ok(())
    }
}
