//! Stateful neuron groups assembled from the functional primitives.
//!
//! A [`NeuronGroup`] simulates a batch of neurons sharing one model and one
//! parameter set: currents in, spikes out, one tensor each per step.

use ndarray::{ArrayD, IxDyn};

use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::functional::{
    adaptive_thresholds_linear_spike, apply_adaptive_thresholds, voltage_integration_linear,
    voltage_thresholding, AdaptiveThresholdParams, LinearMembraneParams, ResetRule,
};

/// Supported neuron models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuronModel {
    /// Leaky integrate-and-fire with a fixed threshold and constant reset.
    Lif,
    /// LIF plus a spike-incremented adaptive threshold.
    Alif,
    /// Adaptive threshold plus a reset varying linearly with the distance
    /// from rest at spike time.
    Glif2,
}

/// Full parameterization of a neuron group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronConfig {
    pub membrane: LinearMembraneParams,
    /// Base firing threshold (mV).
    pub theta_base: f32,
    pub reset: ResetRule,
    /// Adaptive threshold parameters; required for ALIF and GLIF2.
    pub adapt: Option<AdaptiveThresholdParams>,
    /// Absolute refractory period (ms, >= 0).
    pub t_refrac: f32,
}

impl NeuronConfig {
    /// LIF parameterization with a constant reset and no adaptation.
    pub fn lif(
        membrane: LinearMembraneParams,
        theta_base: f32,
        v_reset: f32,
        t_refrac: f32,
    ) -> Self {
        Self {
            membrane,
            theta_base,
            reset: ResetRule::Constant { v_reset },
            adapt: None,
            t_refrac,
        }
    }
}

/// A batch of identically parameterized neurons.
///
/// State tensors all have shape `batch x shape`. Refractory neurons hold
/// their membrane at the reset value and ignore input; the remaining
/// refractory time is decremented before the release test, so a neuron whose
/// counter reaches zero integrates in that same step.
#[derive(Debug, Clone)]
pub struct NeuronGroup {
    id: ComponentId,
    model: NeuronModel,
    shape: Vec<usize>,
    batch: usize,
    v: ArrayD<f32>,
    theta_adapt: Option<ArrayD<f32>>,
    refrac_remaining: ArrayD<f32>,
    last_spikes: ArrayD<bool>,
    cfg: NeuronConfig,
    dt: f32,
}

impl NeuronGroup {
    pub fn new(
        model: NeuronModel,
        shape: &[usize],
        batch: usize,
        cfg: NeuronConfig,
        dt: f32,
    ) -> Result<Self> {
        cfg.membrane.validate()?;
        if !(dt > 0.0) {
            return Err(AxonError::NonPositiveStep(dt));
        }
        if shape.is_empty() || batch == 0 || shape.iter().any(|&n| n == 0) {
            return Err(AxonError::InvalidSize(format!(
                "neuron group needs nonzero batch and shape, got batch {batch}, shape {shape:?}"
            )));
        }
        if cfg.t_refrac < 0.0 {
            return Err(AxonError::InvalidConfig(format!(
                "refractory period must be nonnegative, got {}",
                cfg.t_refrac
            )));
        }
        let adaptive = matches!(model, NeuronModel::Alif | NeuronModel::Glif2);
        if adaptive {
            match cfg.adapt {
                Some(p) => p.validate()?,
                None => {
                    return Err(AxonError::InvalidConfig(
                        "adaptive models need threshold adaptation parameters".into(),
                    ))
                }
            }
        }
        if matches!(model, NeuronModel::Glif2) && !matches!(cfg.reset, ResetRule::Linear { .. }) {
            return Err(AxonError::InvalidConfig(
                "GLIF2 uses the linear reset rule".into(),
            ));
        }
        let mut full = Vec::with_capacity(shape.len() + 1);
        full.push(batch);
        full.extend_from_slice(shape);
        Ok(Self {
            id: ComponentId::fresh(),
            model,
            shape: shape.to_vec(),
            batch,
            v: ArrayD::from_elem(IxDyn(&full), cfg.membrane.v_rest),
            theta_adapt: adaptive.then(|| ArrayD::zeros(IxDyn(&full))),
            refrac_remaining: ArrayD::zeros(IxDyn(&full)),
            last_spikes: ArrayD::from_elem(IxDyn(&full), false),
            cfg,
            dt,
        })
    }

    pub fn id(&self) -> ComponentId {
        self.id
    }

    pub fn model(&self) -> NeuronModel {
        self.model
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn dt(&self) -> f32 {
        self.dt
    }

    pub fn config(&self) -> &NeuronConfig {
        &self.cfg
    }

    /// Membrane voltages, shape `batch x shape`.
    pub fn voltage(&self) -> &ArrayD<f32> {
        &self.v
    }

    /// Adaptive threshold component, if the model tracks one.
    pub fn theta_adapt(&self) -> Option<&ArrayD<f32>> {
        self.theta_adapt.as_ref()
    }

    /// Remaining refractory time per neuron (ms).
    pub fn refrac_remaining(&self) -> &ArrayD<f32> {
        &self.refrac_remaining
    }

    /// Spikes emitted by the most recent step.
    pub fn spikes(&self) -> &ArrayD<bool> {
        &self.last_spikes
    }

    /// Advances the group one step under the given input currents and
    /// returns the spike tensor. A spike is attributed to the end of the
    /// step in which the threshold is crossed.
    pub fn step(&mut self, current: &ArrayD<f32>) -> Result<ArrayD<bool>> {
        if current.shape() != self.v.shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.v.shape().to_vec(),
                got: current.shape().to_vec(),
            });
        }

        // Refractory countdown happens before the release test: a counter
        // reaching zero frees the neuron to integrate this step.
        let dt = self.dt;
        let mut active = ArrayD::from_elem(self.v.raw_dim(), false);
        ndarray::Zip::from(&mut active)
            .and(&mut self.refrac_remaining)
            .for_each(|a, r| {
                if *r > 0.0 {
                    *r = (*r - dt).max(0.0);
                }
                *a = *r <= 0.0;
            });

        let integrated = voltage_integration_linear(&self.v, current, &self.cfg.membrane, dt)?;
        ndarray::Zip::from(&mut self.v)
            .and(&integrated)
            .and(&active)
            .for_each(|v, &vi, &a| {
                if a {
                    *v = vi;
                }
            });

        // Decay adaptation, evaluate the threshold, then add the spike
        // increments afterward so a spike cannot raise its own trigger.
        let theta_decayed = match (&self.theta_adapt, self.cfg.adapt) {
            (Some(adapt), Some(p)) => {
                let no_spikes = ArrayD::from_elem(adapt.raw_dim(), false);
                Some(adaptive_thresholds_linear_spike(adapt, &no_spikes, &p, dt)?)
            }
            _ => None,
        };
        let theta = match &theta_decayed {
            Some(a) => apply_adaptive_thresholds(self.cfg.theta_base, std::slice::from_ref(a)),
            None => ArrayD::from_elem(self.v.raw_dim(), self.cfg.theta_base),
        };

        let (spikes_raw, v_after) =
            voltage_thresholding(&self.v, &theta, &self.cfg.reset, self.cfg.membrane.v_rest)?;

        // Spikes only from neurons that integrated this step; refractory
        // neurons keep holding the reset value.
        let mut spikes = ArrayD::from_elem(self.v.raw_dim(), false);
        let t_refrac = self.cfg.t_refrac;
        ndarray::Zip::from(&mut spikes)
            .and(&spikes_raw)
            .and(&active)
            .and(&mut self.refrac_remaining)
            .for_each(|s, &raw, &a, r| {
                *s = raw && a;
                if *s {
                    *r = t_refrac;
                }
            });
        ndarray::Zip::from(&mut self.v)
            .and(&v_after)
            .and(&spikes)
            .for_each(|v, &va, &s| {
                if s {
                    *v = va;
                }
            });

        if let (Some(mut decayed), Some(p)) = (theta_decayed, self.cfg.adapt) {
            ndarray::Zip::from(&mut decayed).and(&spikes).for_each(|t, &s| {
                if s {
                    *t += p.a_theta;
                }
            });
            self.theta_adapt = Some(decayed);
        }

        self.last_spikes = spikes.clone();
        Ok(spikes)
    }

    /// Returns the group to its initial state: voltages at rest, adaptation
    /// and refractory counters cleared.
    pub fn reset(&mut self) {
        self.v.fill(self.cfg.membrane.v_rest);
        if let Some(a) = &mut self.theta_adapt {
            a.fill(0.0);
        }
        self.refrac_remaining.fill(0.0);
        self.last_spikes.fill(false);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{LinearMembraneParams, ResetRule};

    fn bench_membrane() -> LinearMembraneParams {
        LinearMembraneParams { tau_m: 20.0, v_rest: -60.0, r_m: 1.0 }
    }

    fn lif_group(n: usize) -> NeuronGroup {
        NeuronGroup::new(
            NeuronModel::Lif,
            &[n],
            1,
            NeuronConfig::lif(bench_membrane(), -50.0, -65.0, 3.0),
            1.0,
        )
        .unwrap()
    }

    fn drive(group: &mut NeuronGroup, level: f32, steps: usize) -> Vec<usize> {
        let i = ArrayD::from_elem(group.voltage().raw_dim(), level);
        let mut spike_steps = Vec::new();
        for t in 0..steps {
            let s = group.step(&i).unwrap();
            if s[[0, 0]] {
                spike_steps.push(t);
            }
        }
        spike_steps
    }

    #[test]
    fn zero_input_at_rest_stays_quiet() {
        let mut g = lif_group(3);
        let i = ArrayD::zeros(g.voltage().raw_dim());
        for _ in 0..10 {
            let s = g.step(&i).unwrap();
            assert!(s.iter().all(|&x| !x));
        }
        assert!(g.voltage().iter().all(|&v| v == -60.0));
    }

    #[test]
    fn constant_drive_matches_the_analytic_interspike_interval() {
        // r*i = 20 mV: ISI = t_refrac + tau * ln((v_inf - v_reset)/(v_inf - theta))
        //            = 3 + 20 ln 2.5 ~ 21.33 ms
        let mut g = lif_group(1);
        let spikes = drive(&mut g, 20.0, 500);
        assert!(spikes.len() > 10);
        let analytic = 3.0 + 20.0 * (25.0f64 / 10.0).ln();
        for w in spikes.windows(2) {
            let isi = (w[1] - w[0]) as f64;
            assert!((isi - analytic).abs() <= 1.0, "isi {isi} vs analytic {analytic}");
        }
    }

    #[test]
    fn no_two_spikes_within_the_refractory_period() {
        let mut g = lif_group(1);
        let spikes = drive(&mut g, 200.0, 200);
        for w in spikes.windows(2) {
            assert!(((w[1] - w[0]) as f32) * g.dt() >= g.config().t_refrac);
        }
    }

    #[test]
    fn alif_rate_is_nonincreasing_under_constant_drive() {
        let cfg = NeuronConfig {
            membrane: bench_membrane(),
            theta_base: -50.0,
            reset: ResetRule::Constant { v_reset: -65.0 },
            adapt: Some(AdaptiveThresholdParams { tau_theta: 100.0, a_theta: 1.0 }),
            t_refrac: 3.0,
        };
        let mut g = NeuronGroup::new(NeuronModel::Alif, &[1], 1, cfg, 1.0).unwrap();
        let spikes = drive(&mut g, 20.0, 500);
        assert!(spikes.len() >= 3);
        for w in spikes.windows(3) {
            let isi0 = w[1] - w[0];
            let isi1 = w[2] - w[1];
            assert!(isi1 >= isi0, "instantaneous rate increased: {isi0} then {isi1}");
        }
    }

    #[test]
    fn alif_without_adaptation_increment_matches_lif_exactly() {
        let cfg = NeuronConfig {
            membrane: bench_membrane(),
            theta_base: -50.0,
            reset: ResetRule::Constant { v_reset: -65.0 },
            adapt: Some(AdaptiveThresholdParams { tau_theta: 50.0, a_theta: 0.0 }),
            t_refrac: 3.0,
        };
        let mut alif = NeuronGroup::new(NeuronModel::Alif, &[4], 1, cfg, 1.0).unwrap();
        let mut lif = lif_group(4);
        let i = ArrayD::from_elem(alif.voltage().raw_dim(), 15.0f32);
        for _ in 0..200 {
            let sa = alif.step(&i).unwrap();
            let sl = lif.step(&i).unwrap();
            assert_eq!(sa, sl);
            assert_eq!(alif.voltage(), lif.voltage());
        }
    }

    #[test]
    fn glif2_with_degenerate_slope_matches_lif_exactly() {
        // m_r = 0, b_r = v_reset - v_rest makes the linear reset constant
        let cfg = NeuronConfig {
            membrane: bench_membrane(),
            theta_base: -50.0,
            reset: ResetRule::Linear { m_r: 0.0, b_r: -5.0 },
            adapt: Some(AdaptiveThresholdParams { tau_theta: 50.0, a_theta: 0.0 }),
            t_refrac: 3.0,
        };
        let mut glif = NeuronGroup::new(NeuronModel::Glif2, &[2], 1, cfg, 1.0).unwrap();
        let mut lif = lif_group(2);
        let i = ArrayD::from_elem(glif.voltage().raw_dim(), 18.0f32);
        for _ in 0..200 {
            let sg = glif.step(&i).unwrap();
            let sl = lif.step(&i).unwrap();
            assert_eq!(sg, sl);
            assert_eq!(glif.voltage(), lif.voltage());
        }
    }

    #[test]
    fn reset_returns_to_the_freshly_created_state() {
        let mut g = lif_group(2);
        drive(&mut g, 30.0, 50);
        g.reset();
        let fresh = lif_group(2);
        assert_eq!(g.voltage(), fresh.voltage());
        assert_eq!(g.refrac_remaining(), fresh.refrac_remaining());
        assert_eq!(g.spikes(), fresh.spikes());
        // idempotent
        let snapshot = g.clone();
        g.reset();
        assert_eq!(g.voltage(), snapshot.voltage());
        // quiescent after reset with zero input
        let spikes = drive(&mut g, 0.0, 50);
        assert!(spikes.is_empty());
    }

    #[test]
    fn step_rejects_mismatched_current_shape() {
        let mut g = lif_group(2);
        let bad = ArrayD::zeros(IxDyn(&[1, 3]));
        assert!(g.step(&bad).is_err());
    }
}
