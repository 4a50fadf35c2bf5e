//! Delta synapses: discrete spikes in, instantaneous currents out, with a
//! rolling spike history for delayed access.
//!
//! Because delta currents are fully determined by spikes, only the spike
//! history is stored; delayed currents are recomputed from delayed spikes.

use ndarray::{ArrayD, IxDyn};

use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::record::{InterpKind, RecordTensor};

/// Captured synapse hyperparameters awaiting the connection-dependent
/// construction arguments (input shape, step length, maximum delay, batch).
#[derive(Debug, Clone, Copy)]
pub struct SynapseBlueprint {
    q_spike: f32,
    allow_injection: bool,
}

impl SynapseBlueprint {
    /// Blueprint for the plain delta model. `q_spike` is the charge carried
    /// by one spike (pC); each spike contributes `q_spike / dt` of current.
    pub fn new(q_spike: f32) -> Result<Self> {
        if !(q_spike >= 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "charge per spike must be nonnegative, got {q_spike}"
            )));
        }
        Ok(Self { q_spike, allow_injection: false })
    }

    /// Blueprint for the variant that also accepts injected current.
    pub fn with_injection(q_spike: f32) -> Result<Self> {
        Ok(Self { allow_injection: true, ..Self::new(q_spike)? })
    }

    pub fn q_spike(&self) -> f32 {
        self.q_spike
    }

    pub fn allow_injection(&self) -> bool {
        self.allow_injection
    }

    /// Finalizes the blueprint into a synapse over `shape` inputs.
    pub fn finalize(
        &self,
        shape: &[usize],
        dt: f32,
        t_max: f32,
        batch: usize,
    ) -> Result<DeltaSynapse> {
        DeltaSynapse::new(*self, shape, dt, t_max, batch)
    }
}

/// A group of delta synapses over one input tensor.
///
/// The spike history covers `[0, t_max]` with `ceil(1 + t_max/dt)` slices of
/// shape `batch x input_shape`, so any delay up to `t_max` has bracketing
/// samples available.
#[derive(Debug, Clone)]
pub struct DeltaSynapse {
    id: ComponentId,
    spike_record: RecordTensor,
    q_spike: f32,
    allow_injection: bool,
    dt: f32,
    t_max: f32,
    batch: usize,
    shape: Vec<usize>,
}

impl DeltaSynapse {
    fn new(
        blueprint: SynapseBlueprint,
        shape: &[usize],
        dt: f32,
        t_max: f32,
        batch: usize,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(AxonError::NonPositiveStep(dt));
        }
        if t_max < 0.0 {
            return Err(AxonError::InvalidConfig(format!(
                "maximum delay must be nonnegative, got {t_max}"
            )));
        }
        if batch == 0 || shape.is_empty() || shape.iter().any(|&n| n == 0) {
            return Err(AxonError::InvalidSize(format!(
                "synapse needs nonzero batch and input shape, got batch {batch}, shape {shape:?}"
            )));
        }
        // Round the window duration up to the next grid point so the stored
        // slices cover [0, t_max] even when t_max is off-grid. This yields
        // ceil(1 + t_max/dt) slices.
        let steps = (t_max as f64 / dt as f64 - 1e-9).ceil().max(0.0);
        let duration = (steps * dt as f64) as f32;
        let mut slice_shape = Vec::with_capacity(shape.len() + 1);
        slice_shape.push(batch);
        slice_shape.extend_from_slice(shape);
        Ok(Self {
            id: ComponentId::fresh(),
            spike_record: RecordTensor::new(&slice_shape, dt, duration, true)?,
            q_spike: blueprint.q_spike,
            allow_injection: blueprint.allow_injection,
            dt,
            t_max,
            batch,
            shape: shape.to_vec(),
        })
    }

    pub fn id(&self) -> ComponentId {
        self.id
    }

    pub fn dt(&self) -> f32 {
        self.dt
    }

    pub fn t_max(&self) -> f32 {
        self.t_max
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of history slices.
    pub fn window_len(&self) -> usize {
        self.spike_record.window_len()
    }

    pub fn allow_injection(&self) -> bool {
        self.allow_injection
    }

    pub fn q_spike(&self) -> f32 {
        self.q_spike
    }

    /// Records `spikes` as the newest observation and returns the synaptic
    /// current `q_spike/dt * spikes + sum(injected)`.
    pub fn step(&mut self, spikes: &ArrayD<bool>, injected: &[ArrayD<f32>]) -> Result<ArrayD<f32>> {
        if !injected.is_empty() && !self.allow_injection {
            return Err(AxonError::InjectionNotAllowed);
        }
        self.spike_record.push_bool(spikes)?;
        let amplitude = self.q_spike / self.dt;
        let mut current = spikes.mapv(|s| if s { amplitude } else { 0.0 });
        for inj in injected {
            if inj.shape() != current.shape() {
                return Err(AxonError::ShapeMismatch {
                    expected: current.shape().to_vec(),
                    got: inj.shape().to_vec(),
                });
            }
            current = &current + inj;
        }
        Ok(current)
    }

    /// Delay-shifted history access. `delays` has one trailing selection
    /// dimension over the `batch x input_shape` slice layout; spikes use
    /// previous-sample interpolation (the spike had already occurred at the
    /// queried instant) and currents are re-derived from the delayed spikes.
    pub fn history(&self, delays: &ArrayD<f32>) -> Result<(ArrayD<bool>, ArrayD<f32>)> {
        for &d in delays.iter() {
            if !d.is_finite() || d < 0.0 || d > self.t_max + 1e-5 * self.dt {
                return Err(AxonError::DelayOutOfRange { delay: d, max: self.t_max });
            }
        }
        if self.spike_record.observed() == 0 {
            // A fresh synapse has received nothing: the delayed view is
            // silent rather than an error.
            let shape = self.spike_record.select_shape(delays)?;
            let spikes = ArrayD::from_elem(IxDyn(&shape), false);
            let currents = ArrayD::zeros(IxDyn(&shape));
            return Ok((spikes, currents));
        }
        let raw = self.spike_record.select(delays, InterpKind::Previous)?;
        let spikes = raw.mapv(|v| v > 0.5);
        let amplitude = self.q_spike / self.dt;
        let currents = spikes.mapv(|s| if s { amplitude } else { 0.0 });
        Ok((spikes, currents))
    }

    /// The most recent spike tensor, `batch x input_shape`.
    pub fn spike(&self) -> ArrayD<bool> {
        self.spike_record.latest().mapv(|v| v > 0.5)
    }

    /// The most recent spike-derived current (injection is instantaneous and
    /// not part of the stored history).
    pub fn current(&self) -> ArrayD<f32> {
        let amplitude = self.q_spike / self.dt;
        self.spike_record.latest().mapv(|v| if v > 0.5 { amplitude } else { 0.0 })
    }

    /// Clears the stored history.
    pub fn reset(&mut self) {
        self.spike_record.clear();
    }
}

/// Convenience for building the `[1, ..., D]`-shaped selector used with
/// [`DeltaSynapse::history`] when every element shares one delay.
pub fn uniform_selector(slice_ndim: usize, d: usize, delay: f32) -> ArrayD<f32> {
    let mut shape = vec![1usize; slice_ndim + 1];
    shape[slice_ndim] = d;
    ArrayD::from_elem(IxDyn(&shape), delay)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn spikes1(b: bool) -> ArrayD<bool> {
        arr2(&[[b]]).into_dyn()
    }

    #[test]
    fn finalization_sizes_the_history_window() {
        // dt = 1.2, t_max = 6, batch 20, 784 inputs -> 6 slices of 20 x 784
        let bp = SynapseBlueprint::new(1.2).unwrap();
        let syn = bp.finalize(&[784], 1.2, 6.0, 20).unwrap();
        assert_eq!(syn.window_len(), 6);
        assert_eq!(syn.spike().shape(), &[20, 784]);

        // t_max = 0 degenerates to a single slice
        let syn = bp.finalize(&[4], 1.0, 0.0, 1).unwrap();
        assert_eq!(syn.window_len(), 1);

        // off-grid t_max still covers [0, t_max]: ceil(1 + 2.5/1) = 4
        let syn = bp.finalize(&[4], 1.0, 2.5, 1).unwrap();
        assert_eq!(syn.window_len(), 4);
    }

    #[test]
    fn finalizations_are_independent() {
        let bp = SynapseBlueprint::new(1.0).unwrap();
        let mut a = bp.finalize(&[1], 1.0, 2.0, 1).unwrap();
        let b = bp.finalize(&[1], 1.0, 2.0, 1).unwrap();
        a.step(&spikes1(true), &[]).unwrap();
        assert!(a.spike()[[0, 0]]);
        assert!(!b.spike()[[0, 0]]);
    }

    #[test]
    fn blueprint_rejects_invalid_arguments() {
        assert!(SynapseBlueprint::new(-1.0).is_err());
        let bp = SynapseBlueprint::new(1.0).unwrap();
        assert!(bp.finalize(&[1], 0.0, 1.0, 1).is_err());
        assert!(bp.finalize(&[1], 1.0, -1.0, 1).is_err());
        assert!(bp.finalize(&[], 1.0, 1.0, 1).is_err());
        assert!(bp.finalize(&[1], 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn step_converts_charge_to_current() {
        let dt = 0.5;
        let bp = SynapseBlueprint::new(dt).unwrap(); // q = dt -> unit current
        let mut syn = bp.finalize(&[1], dt, 2.0, 1).unwrap();
        let quiet = syn.step(&spikes1(false), &[]).unwrap();
        assert_eq!(quiet[[0, 0]], 0.0);
        let active = syn.step(&spikes1(true), &[]).unwrap();
        assert_eq!(active[[0, 0]], 1.0);
    }

    #[test]
    fn injection_adds_to_spike_current() {
        let bp = SynapseBlueprint::with_injection(1.0).unwrap();
        let mut syn = bp.finalize(&[1], 1.0, 0.0, 1).unwrap();
        let inj = arr2(&[[0.3f32]]).into_dyn();
        let current = syn.step(&spikes1(true), &[inj]).unwrap();
        assert_eq!(current[[0, 0]], 1.0 + 0.3);
    }

    #[test]
    fn injection_into_plain_delta_is_rejected() {
        let bp = SynapseBlueprint::new(1.0).unwrap();
        let mut syn = bp.finalize(&[1], 1.0, 0.0, 1).unwrap();
        let inj = arr2(&[[0.3f32]]).into_dyn();
        assert!(matches!(
            syn.step(&spikes1(true), &[inj]),
            Err(AxonError::InjectionNotAllowed)
        ));
    }

    #[test]
    fn injection_variant_without_injection_matches_plain_delta() {
        let plain = SynapseBlueprint::new(2.0).unwrap();
        let plus = SynapseBlueprint::with_injection(2.0).unwrap();
        let mut a = plain.finalize(&[3], 1.0, 2.0, 1).unwrap();
        let mut b = plus.finalize(&[3], 1.0, 2.0, 1).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        for _ in 0..20 {
            let s: ArrayD<bool> =
                ArrayD::from_shape_fn(IxDyn(&[1, 3]), |_| rng.random_bool(0.4));
            let ca = a.step(&s, &[]).unwrap();
            let cb = b.step(&s, &[]).unwrap();
            assert_eq!(ca, cb);
        }
    }

    #[test]
    fn history_at_zero_delay_is_the_latest_observation() {
        let bp = SynapseBlueprint::new(1.0).unwrap();
        let mut syn = bp.finalize(&[2], 1.0, 3.0, 1).unwrap();
        let s = ndarray::arr2(&[[true, false]]).into_dyn();
        syn.step(&s, &[]).unwrap();
        let sel = uniform_selector(2, 1, 0.0);
        let (spikes, currents) = syn.history(&sel).unwrap();
        assert!(spikes[[0, 0, 0]]);
        assert!(!spikes[[0, 1, 0]]);
        assert_eq!(currents[[0, 0, 0]], 1.0);
    }

    #[test]
    fn integer_delays_shift_the_spike_stream() {
        use rand::{Rng, SeedableRng};
        let bp = SynapseBlueprint::new(1.0).unwrap();
        let mut syn = bp.finalize(&[1], 1.0, 5.0, 1).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        let train: Vec<bool> = (0..40).map(|_| rng.random_bool(0.3)).collect();
        let sel = uniform_selector(2, 1, 2.0);
        for (t, &s) in train.iter().enumerate() {
            syn.step(&spikes1(s), &[]).unwrap();
            let (delayed, _) = syn.history(&sel).unwrap();
            let expect = if t >= 2 { train[t - 2] } else { false };
            assert_eq!(delayed[[0, 0, 0]], expect, "step {t}");
        }
    }

    #[test]
    fn fractional_delay_takes_the_older_sample() {
        let bp = SynapseBlueprint::new(1.0).unwrap();
        let mut syn = bp.finalize(&[1], 1.0, 3.0, 1).unwrap();
        syn.step(&spikes1(true), &[]).unwrap(); // older (age 1 after next push)
        syn.step(&spikes1(false), &[]).unwrap(); // newer
        let sel = uniform_selector(2, 1, 0.5);
        let (spikes, currents) = syn.history(&sel).unwrap();
        assert!(spikes[[0, 0, 0]], "previous-interpolation picks the older spike");
        assert_eq!(currents[[0, 0, 0]], 1.0);
    }

    #[test]
    fn delayed_current_is_zero_exactly_where_delayed_spikes_are() {
        use rand::{Rng, SeedableRng};
        let bp = SynapseBlueprint::new(3.0).unwrap();
        let mut syn = bp.finalize(&[4], 1.0, 4.0, 2).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..12 {
            let s: ArrayD<bool> =
                ArrayD::from_shape_fn(IxDyn(&[2, 4]), |_| rng.random_bool(0.5));
            syn.step(&s, &[]).unwrap();
        }
        let sel = uniform_selector(2, 2, 3.0);
        let (spikes, currents) = syn.history(&sel).unwrap();
        for (s, c) in spikes.iter().zip(currents.iter()) {
            assert_eq!(*s, *c != 0.0);
        }
    }

    #[test]
    fn history_rejects_out_of_range_delays() {
        let bp = SynapseBlueprint::new(1.0).unwrap();
        let mut syn = bp.finalize(&[1], 1.0, 2.0, 1).unwrap();
        syn.step(&spikes1(true), &[]).unwrap();
        let sel = uniform_selector(2, 1, 2.5);
        assert!(matches!(
            syn.history(&sel),
            Err(AxonError::DelayOutOfRange { .. })
        ));
    }
}
