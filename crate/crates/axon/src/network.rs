//! Composition of connections and neuron groups into layers and trainable
//! cells.
//!
//! Components are held behind shared handles so one connection or neuron
//! group can participate in several cells (and so trainers can deduplicate
//! the monitors attached to them).

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::ArrayD;

use crate::component::ComponentId;
use crate::connections::Connection;
use crate::error::{AxonError, Result};
use crate::neurons::NeuronGroup;

pub type SharedConnection = Rc<RefCell<dyn Connection>>;
pub type SharedNeuron = Rc<RefCell<NeuronGroup>>;

/// Wraps a concrete connection in a shared handle.
pub fn share_connection<C: Connection + 'static>(conn: C) -> SharedConnection {
    Rc::new(RefCell::new(conn))
}

/// Wraps a neuron group in a shared handle.
pub fn share_neuron(group: NeuronGroup) -> SharedNeuron {
    Rc::new(RefCell::new(group))
}

/// A trainable pairing: one connection and the neuron group receiving its
/// output. Cells are handles for training, not an inference path.
#[derive(Clone)]
pub struct Cell {
    pub connection: SharedConnection,
    pub neuron: SharedNeuron,
}

impl Cell {
    pub fn new(connection: SharedConnection, neuron: SharedNeuron) -> Result<Self> {
        {
            let conn = connection.borrow();
            let neuron = neuron.borrow();
            if conn.output_shape() != neuron.shape() || conn.batch() != neuron.batch() {
                return Err(AxonError::ShapeMismatch {
                    expected: conn.output_shape(),
                    got: neuron.shape().to_vec(),
                });
            }
        }
        Ok(Self { connection, neuron })
    }

    /// Identity of the (connection, neuron) pairing.
    pub fn key(&self) -> (ComponentId, ComponentId) {
        (self.connection.borrow().id(), self.neuron.borrow().id())
    }
}

/// One connection feeding one neuron group, wired straight through.
pub struct SerialLayer {
    connection: SharedConnection,
    neuron: SharedNeuron,
}

impl SerialLayer {
    pub fn new<C: Connection + 'static>(connection: C, neuron: NeuronGroup) -> Result<Self> {
        Self::from_shared(share_connection(connection), share_neuron(neuron))
    }

    pub fn from_shared(connection: SharedConnection, neuron: SharedNeuron) -> Result<Self> {
        Cell::new(connection.clone(), neuron.clone())?;
        Ok(Self { connection, neuron })
    }

    pub fn connection(&self) -> &SharedConnection {
        &self.connection
    }

    pub fn neuron(&self) -> &SharedNeuron {
        &self.neuron
    }

    pub fn cell(&self) -> Cell {
        Cell { connection: self.connection.clone(), neuron: self.neuron.clone() }
    }

    /// `neuron_step(connection_forward(input))`.
    pub fn forward(&mut self, input: &ArrayD<bool>) -> Result<ArrayD<bool>> {
        let current = self.connection.borrow_mut().forward(input, &[])?;
        self.neuron.borrow_mut().step(&current)
    }
}

/// Excitatory–inhibitory layer: a feedforward dense connection drives an
/// excitatory group; excitatory spikes trigger an inhibitory group through a
/// one-to-one connection, and inhibitory spikes suppress the excitatory
/// group through a lateral (all-but-self) connection.
///
/// The recurrent paths consume spikes buffered from the previous step, so
/// outputs at step `t` depend only on inputs up to `t` and spikes up to
/// `t - 1`. Inhibition enters with negative sign via the wiring, keeping the
/// lateral weights themselves nonnegative, and is scaled by
/// `inhibition_gain`.
pub struct DiehlCookLayer {
    feedforward: SharedConnection,
    apply_inhibition: SharedConnection,
    trigger_inhibition: SharedConnection,
    excitatory: SharedNeuron,
    inhibitory: SharedNeuron,
    exc_buffer: ArrayD<bool>,
    inh_buffer: ArrayD<bool>,
    inhibition_gain: f32,
}

impl DiehlCookLayer {
    pub fn new<F, A, T>(
        feedforward: F,
        apply_inhibition: A,
        trigger_inhibition: T,
        excitatory: NeuronGroup,
        inhibitory: NeuronGroup,
        inhibition_gain: f32,
    ) -> Result<Self>
    where
        F: Connection + 'static,
        A: Connection + 'static,
        T: Connection + 'static,
    {
        let n = feedforward.output_shape();
        let batch = feedforward.batch();
        for (label, shape_in, shape_out, b) in [
            (
                "apply_inhibition",
                apply_inhibition.input_shape(),
                apply_inhibition.output_shape(),
                apply_inhibition.batch(),
            ),
            (
                "trigger_inhibition",
                trigger_inhibition.input_shape(),
                trigger_inhibition.output_shape(),
                trigger_inhibition.batch(),
            ),
        ] {
            if shape_in != n || shape_out != n || b != batch {
                return Err(AxonError::InvalidConfig(format!(
                    "{label} must map the excitatory shape {n:?} onto itself at batch {batch}"
                )));
            }
        }
        if excitatory.shape() != n || inhibitory.shape() != n {
            return Err(AxonError::ShapeMismatch { expected: n, got: excitatory.shape().to_vec() });
        }
        if excitatory.batch() != batch || inhibitory.batch() != batch {
            return Err(AxonError::InvalidConfig("batch sizes must agree".into()));
        }
        let mut spike_shape = vec![batch];
        spike_shape.extend_from_slice(&n);
        let exc_buffer = ArrayD::from_elem(ndarray::IxDyn(&spike_shape), false);
        let inh_buffer = exc_buffer.clone();
        Ok(Self {
            feedforward: share_connection(feedforward),
            apply_inhibition: share_connection(apply_inhibition),
            trigger_inhibition: share_connection(trigger_inhibition),
            excitatory: share_neuron(excitatory),
            inhibitory: share_neuron(inhibitory),
            exc_buffer,
            inh_buffer,
            inhibition_gain,
        })
    }

    pub fn feedforward(&self) -> &SharedConnection {
        &self.feedforward
    }

    pub fn excitatory(&self) -> &SharedNeuron {
        &self.excitatory
    }

    pub fn inhibitory(&self) -> &SharedNeuron {
        &self.inhibitory
    }

    /// The trainable cell: feedforward connection onto the excitatory group.
    pub fn feedforward_cell(&self) -> Cell {
        Cell { connection: self.feedforward.clone(), neuron: self.excitatory.clone() }
    }

    /// Advances both groups one step and returns the excitatory spikes.
    pub fn forward(&mut self, input: &ArrayD<bool>) -> Result<ArrayD<bool>> {
        let ff_current = self.feedforward.borrow_mut().forward(input, &[])?;
        let inh_current = self.apply_inhibition.borrow_mut().forward(&self.inh_buffer, &[])?;
        let gain = self.inhibition_gain;
        let exc_input = ndarray::Zip::from(&ff_current)
            .and(&inh_current)
            .map_collect(|&ff, &inh| ff - gain * inh);
        let trigger_current = self.trigger_inhibition.borrow_mut().forward(&self.exc_buffer, &[])?;

        let exc_spikes = self.excitatory.borrow_mut().step(&exc_input)?;
        let inh_spikes = self.inhibitory.borrow_mut().step(&trigger_current)?;

        self.exc_buffer = exc_spikes.clone();
        self.inh_buffer = inh_spikes;
        Ok(exc_spikes)
    }
}
