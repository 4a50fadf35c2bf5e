//! Trainable mappings between neuron groups.
//!
//! Every connection owns its synapse, resolves optional per-weight delays
//! against the synapse history through its `selector`, and exposes the
//! receptive-field reshaping ([`Connection::postsyn_receptive`] /
//! [`Connection::presyn_receptive`]) that lets a training rule written once
//! apply to every connection type.

mod accumulator;
mod conv;
mod linear;

pub use accumulator::{Accumulator, FullBounding, HalfBounding, Reduction, UpdateSign};
pub use conv::{conv_output_size, Conv2dConnection, Conv2dSpec};
pub use linear::{LinearConnection, LinearTopology};

use ndarray::ArrayD;

use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::tensor::co_broadcast;

/// Common interface over connection types.
///
/// Receptive views have shape `batch x P1 x ... x Pn x R` where `P1..Pn` is
/// the shape of the trained parameter and the trailing axis `R` groups the
/// outputs directly affected by one parameter element.
pub trait Connection {
    fn id(&self) -> ComponentId;
    fn batch(&self) -> usize;
    fn dt(&self) -> f32;
    /// Maximum representable delay (ms).
    fn t_max(&self) -> f32;
    /// Input shape without the batch axis.
    fn input_shape(&self) -> Vec<usize>;
    /// Output shape without the batch axis.
    fn output_shape(&self) -> Vec<usize>;
    /// Shape of the trained parameter tensor.
    fn param_shape(&self) -> Vec<usize>;
    /// Shape of the delayed presynaptic layout, batch axis included.
    fn presyn_delayed_shape(&self) -> Vec<usize>;
    fn delays_enabled(&self) -> bool;

    /// Maps one step of input spikes (plus optional injected currents) to
    /// output currents. The owned synapse is stepped exactly once.
    fn forward(&mut self, spikes: &ArrayD<bool>, injected: &[ArrayD<f32>]) -> Result<ArrayD<f32>>;

    /// Learned delays reshaped for use with the synapse history; zeros when
    /// the connection does not use delays.
    fn selector(&self) -> ArrayD<f32>;

    /// Most recent input spikes as 0/1 reals, `batch x input_shape`.
    fn raw_spikes(&self) -> ArrayD<f32>;

    /// Delay-shifted input spikes as 0/1 reals, in this connection's delayed
    /// presynaptic layout.
    fn delayed_spikes(&self) -> Result<ArrayD<f32>>;

    /// Reshapes an output-shaped tensor to the receptive view.
    fn postsyn_receptive(&self, output: &ArrayD<f32>) -> Result<ArrayD<f32>>;

    /// Reshapes an input-shaped tensor (raw or delayed layout) to the
    /// receptive view.
    fn presyn_receptive(&self, input_like: &ArrayD<f32>) -> Result<ArrayD<f32>>;

    /// Trained parameter (weights/kernel) as a dynamic-dimensional view.
    fn weight(&self) -> ArrayD<f32>;

    /// Learned delays, if enabled.
    fn delay(&self) -> Option<ArrayD<f32>>;

    fn weight_accumulator_mut(&mut self) -> Option<&mut Accumulator>;
    fn delay_accumulator_mut(&mut self) -> Option<&mut Accumulator>;

    /// Applies staged weight and delay updates; delays are clamped back to
    /// `[0, t_max]` and topology masks are re-imposed.
    fn apply_updates(&mut self) -> Result<()>;

    /// Stages an update on the weight accumulator.
    fn stage_weight_update(&mut self, update: ArrayD<f32>, sign: UpdateSign) -> Result<()> {
        self.weight_accumulator_mut()
            .ok_or(AxonError::MissingUpdater)?
            .accumulate(update, sign)
    }

    /// Stages an update on the delay accumulator.
    fn stage_delay_update(&mut self, update: ArrayD<f32>, sign: UpdateSign) -> Result<()> {
        self.delay_accumulator_mut()
            .ok_or(AxonError::MissingUpdater)?
            .accumulate(update, sign)
    }
}

/// Product of a postsynaptic and a presynaptic receptive view, broadcast
/// over singleton axes and summed over the trailing receptive dimension:
/// the `"b ... r, b ... r -> b ..."` contraction. Returns `batch x P1..Pn`.
pub fn receptive_product(post: &ArrayD<f32>, pre: &ArrayD<f32>) -> Result<ArrayD<f32>> {
    let (pv, qv, shape) = co_broadcast(post, pre)?;
    if shape.len() < 2 {
        return Err(AxonError::InvalidSize(
            "receptive views need a batch and a receptive axis".into(),
        ));
    }
    let prod = &pv.to_owned() * &qv;
    Ok(prod.sum_axis(ndarray::Axis(shape.len() - 1)))
}
