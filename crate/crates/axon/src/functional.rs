//! Reusable neuronal-dynamics primitives.
//!
//! Neuron models share most of their behavior: linear integration of input
//! current toward a resting voltage, threshold-and-reset spiking, and
//! (for the adaptive models) a spike-incremented threshold component that
//! decays back to zero. Each piece lives here as a pure element-wise
//! function so models are assembled rather than rewritten.

use ndarray::ArrayD;

use crate::error::{AxonError, Result};
use crate::tensor::co_broadcast;

/// Parameters of the linear membrane equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearMembraneParams {
    /// Membrane time constant (ms).
    pub tau_m: f32,
    /// Resting voltage (mV).
    pub v_rest: f32,
    /// Membrane resistance (MOhm).
    pub r_m: f32,
}

impl LinearMembraneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "tau_m must be positive, got {}",
                self.tau_m
            )));
        }
        if !(self.r_m > 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "r_m must be positive, got {}",
                self.r_m
            )));
        }
        Ok(())
    }
}

/// Parameters of the spike-incremented adaptive threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveThresholdParams {
    /// Adaptation time constant (ms).
    pub tau_theta: f32,
    /// Per-spike threshold increment (mV).
    pub a_theta: f32,
}

impl AdaptiveThresholdParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_theta > 0.0) {
            return Err(AxonError::InvalidConfig(format!(
                "tau_theta must be positive, got {}",
                self.tau_theta
            )));
        }
        Ok(())
    }
}

/// Post-spike membrane reset rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResetRule {
    /// Reset to a fixed voltage (LIF, ALIF).
    Constant { v_reset: f32 },
    /// Reset varying linearly with the distance from rest at spike time
    /// (GLIF2): `v_rest + m_r * (v - v_rest) + b_r`.
    Linear { m_r: f32, b_r: f32 },
}

/// One exact integration step of the linear membrane equation with the input
/// current held constant over the step:
/// `v' = v_rest + r_m*i + (v - v_rest - r_m*i) * exp(-dt / tau_m)`.
pub fn voltage_integration_linear(
    v: &ArrayD<f32>,
    i: &ArrayD<f32>,
    p: &LinearMembraneParams,
    dt: f32,
) -> Result<ArrayD<f32>> {
    p.validate()?;
    if !(dt > 0.0) {
        return Err(AxonError::NonPositiveStep(dt));
    }
    if v.shape() != i.shape() {
        return Err(AxonError::ShapeMismatch {
            expected: v.shape().to_vec(),
            got: i.shape().to_vec(),
        });
    }
    // Inner arithmetic in f64: state stays 32-bit, but sub-stepping then
    // differs from a single step only by the final quantization.
    let decay = (-(dt as f64) / p.tau_m as f64).exp();
    let (v_rest, r_m) = (p.v_rest as f64, p.r_m as f64);
    let mut out = v.clone();
    ndarray::Zip::from(&mut out).and(i).for_each(|vv, &cur| {
        let target = v_rest + r_m * cur as f64;
        *vv = (target + (*vv as f64 - target) * decay) as f32;
    });
    Ok(out)
}

/// Threshold comparison and reset. Returns the spike mask `v >= theta` and
/// the post-reset voltages (spiking elements reset, others unchanged).
pub fn voltage_thresholding(
    v: &ArrayD<f32>,
    theta: &ArrayD<f32>,
    reset: &ResetRule,
    v_rest: f32,
) -> Result<(ArrayD<bool>, ArrayD<f32>)> {
    let (vv, tv, shape) = co_broadcast(v, theta)?;
    let mut spikes = ArrayD::from_elem(ndarray::IxDyn(&shape), false);
    let mut out = vv.to_owned();
    ndarray::Zip::from(&mut spikes)
        .and(&mut out)
        .and(&tv)
        .for_each(|s, vv, &th| {
            if *vv >= th {
                *s = true;
                *vv = match reset {
                    ResetRule::Constant { v_reset } => *v_reset,
                    ResetRule::Linear { m_r, b_r } => v_rest + m_r * (*vv - v_rest) + b_r,
                };
            }
        });
    Ok((spikes, out))
}

/// One step of the adaptive threshold component: exponential decay toward
/// zero plus a fixed increment wherever a spike occurred.
pub fn adaptive_thresholds_linear_spike(
    theta_adapt: &ArrayD<f32>,
    spikes: &ArrayD<bool>,
    p: &AdaptiveThresholdParams,
    dt: f32,
) -> Result<ArrayD<f32>> {
    p.validate()?;
    if theta_adapt.shape() != spikes.shape() {
        return Err(AxonError::ShapeMismatch {
            expected: theta_adapt.shape().to_vec(),
            got: spikes.shape().to_vec(),
        });
    }
    let decay = (-dt / p.tau_theta).exp();
    let mut out = theta_adapt.clone();
    ndarray::Zip::from(&mut out).and(spikes).for_each(|t, &s| {
        *t = *t * decay + if s { p.a_theta } else { 0.0 };
    });
    Ok(out)
}

/// Total firing threshold: the base threshold plus every tracked adaptation
/// component, summed element-wise.
pub fn apply_adaptive_thresholds(theta_base: f32, components: &[ArrayD<f32>]) -> ArrayD<f32> {
    match components {
        [] => ArrayD::from_elem(ndarray::IxDyn(&[1]), theta_base),
        [first, rest @ ..] => {
            let mut out = first.mapv(|a| theta_base + a);
            for c in rest {
                out = &out + c;
            }
            out
        }
    }
}
