//! Linear connections: dense all-to-all, direct one-to-one, and lateral
//! (all-to-all without self-connections).

use ndarray::{Array2, ArrayD, Axis, IxDyn};

use super::{Accumulator, Connection, UpdateSign};
use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::synapses::{DeltaSynapse, SynapseBlueprint};
use crate::tensor::reshape;

/// Which entries of the weight matrix participate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinearTopology {
    /// Every (output, input) pair.
    Dense,
    /// Diagonal only: input i drives output i.
    Direct,
    /// Everything except the diagonal.
    Lateral,
}

impl LinearTopology {
    fn mask_allows(&self, o: usize, i: usize) -> bool {
        match self {
            LinearTopology::Dense => true,
            LinearTopology::Direct => o == i,
            LinearTopology::Lateral => o != i,
        }
    }
}

/// A linear mapping `N_in -> N_out` backed by a delta synapse, with optional
/// per-weight conduction delays.
#[derive(Debug, Clone)]
pub struct LinearConnection {
    id: ComponentId,
    topology: LinearTopology,
    weight: Array2<f32>, // N_out x N_in
    delay: Option<Array2<f32>>,
    synapse: DeltaSynapse,
    batch: usize,
    n_in: usize,
    n_out: usize,
    dt: f32,
    t_max: f32,
    weight_acc: Option<Accumulator>,
    delay_acc: Option<Accumulator>,
}

impl LinearConnection {
    fn build(
        topology: LinearTopology,
        mut weight: Array2<f32>,
        blueprint: &SynapseBlueprint,
        batch: usize,
        dt: f32,
        t_max: f32,
        delay: Option<Array2<f32>>,
    ) -> Result<Self> {
        let (n_out, n_in) = weight.dim();
        if n_out == 0 || n_in == 0 {
            return Err(AxonError::InvalidSize("weights must be non-empty".into()));
        }
        if matches!(topology, LinearTopology::Direct | LinearTopology::Lateral) && n_out != n_in {
            return Err(AxonError::InvalidSize(format!(
                "direct/lateral connections are square, got {n_out} x {n_in}"
            )));
        }
        if let Some(d) = &delay {
            if d.dim() != (n_out, n_in) {
                return Err(AxonError::ShapeMismatch {
                    expected: vec![n_out, n_in],
                    got: d.shape().to_vec(),
                });
            }
            if d.iter().any(|&v| !v.is_finite() || v < 0.0 || v > t_max) {
                return Err(AxonError::InvalidConfig(format!(
                    "delays must lie in [0, {t_max}]"
                )));
            }
        }
        apply_mask(&mut weight, topology);
        let synapse = blueprint.finalize(&[n_in], dt, t_max, batch)?;
        Ok(Self {
            id: ComponentId::fresh(),
            topology,
            weight,
            delay,
            synapse,
            batch,
            n_in,
            n_out,
            dt,
            t_max,
            weight_acc: None,
            delay_acc: None,
        })
    }

    /// Dense all-to-all connection with weights `N_out x N_in`.
    pub fn dense(
        weight: Array2<f32>,
        blueprint: &SynapseBlueprint,
        batch: usize,
        dt: f32,
        t_max: f32,
        delay: Option<Array2<f32>>,
    ) -> Result<Self> {
        Self::build(LinearTopology::Dense, weight, blueprint, batch, dt, t_max, delay)
    }

    /// One-to-one connection over `n` units with the given diagonal weights.
    pub fn direct(
        diagonal: &[f32],
        blueprint: &SynapseBlueprint,
        batch: usize,
        dt: f32,
        t_max: f32,
        delay: Option<Array2<f32>>,
    ) -> Result<Self> {
        let n = diagonal.len();
        let weight = Array2::from_shape_fn((n, n), |(o, i)| if o == i { diagonal[o] } else { 0.0 });
        Self::build(LinearTopology::Direct, weight, blueprint, batch, dt, t_max, delay)
    }

    /// All-to-all-except-self connection; the diagonal of `weight` is forced
    /// to zero.
    pub fn lateral(
        weight: Array2<f32>,
        blueprint: &SynapseBlueprint,
        batch: usize,
        dt: f32,
        t_max: f32,
        delay: Option<Array2<f32>>,
    ) -> Result<Self> {
        Self::build(LinearTopology::Lateral, weight, blueprint, batch, dt, t_max, delay)
    }

    pub fn topology(&self) -> LinearTopology {
        self.topology
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weight_matrix(&self) -> &Array2<f32> {
        &self.weight
    }

    pub fn delay_matrix(&self) -> Option<&Array2<f32>> {
        self.delay.as_ref()
    }

    pub fn synapse(&self) -> &DeltaSynapse {
        &self.synapse
    }

    /// Attaches a weight accumulator (shape `N_out x N_in`).
    pub fn set_weight_updater(&mut self, acc: Accumulator) -> Result<()> {
        if acc.shape() != [self.n_out, self.n_in] {
            return Err(AxonError::ShapeMismatch {
                expected: vec![self.n_out, self.n_in],
                got: acc.shape().to_vec(),
            });
        }
        self.weight_acc = Some(acc);
        Ok(())
    }

    /// Attaches a delay accumulator; requires delays to be enabled.
    pub fn set_delay_updater(&mut self, acc: Accumulator) -> Result<()> {
        if self.delay.is_none() {
            return Err(AxonError::DelaysDisabled);
        }
        if acc.shape() != [self.n_out, self.n_in] {
            return Err(AxonError::ShapeMismatch {
                expected: vec![self.n_out, self.n_in],
                got: acc.shape().to_vec(),
            });
        }
        self.delay_acc = Some(acc);
        Ok(())
    }

    /// Delay-shifted input spikes, `batch x N_in x N_out`.
    pub fn synspike(&self) -> Result<ArrayD<bool>> {
        let (spikes, _) = self.synapse.history(&self.selector())?;
        Ok(spikes)
    }

    /// Delay-shifted synaptic currents, `batch x N_in x N_out`.
    pub fn syncurrent(&self) -> Result<ArrayD<f32>> {
        let (_, currents) = self.synapse.history(&self.selector())?;
        Ok(currents)
    }

    fn expect_input(&self, got: &[usize]) -> Result<()> {
        if got != [self.batch, self.n_in] {
            return Err(AxonError::ShapeMismatch {
                expected: vec![self.batch, self.n_in],
                got: got.to_vec(),
            });
        }
        Ok(())
    }
}

fn apply_mask(weight: &mut Array2<f32>, topology: LinearTopology) {
    if matches!(topology, LinearTopology::Dense) {
        return;
    }
    for ((o, i), w) in weight.indexed_iter_mut() {
        if !topology.mask_allows(o, i) {
            *w = 0.0;
        }
    }
}

impl Connection for LinearConnection {
    fn id(&self) -> ComponentId {
        self.id
    }

    fn batch(&self) -> usize {
        self.batch
    }

    fn dt(&self) -> f32 {
        self.dt
    }

    fn t_max(&self) -> f32 {
        self.t_max
    }

    fn input_shape(&self) -> Vec<usize> {
        vec![self.n_in]
    }

    fn output_shape(&self) -> Vec<usize> {
        vec![self.n_out]
    }

    fn param_shape(&self) -> Vec<usize> {
        vec![self.n_out, self.n_in]
    }

    fn presyn_delayed_shape(&self) -> Vec<usize> {
        vec![self.batch, self.n_in, self.n_out]
    }

    fn delays_enabled(&self) -> bool {
        self.delay.is_some()
    }

    fn forward(&mut self, spikes: &ArrayD<bool>, injected: &[ArrayD<f32>]) -> Result<ArrayD<f32>> {
        self.expect_input(spikes.shape())?;
        let current = self.synapse.step(spikes, injected)?;
        let current2 = current
            .into_dimensionality::<ndarray::Ix2>()
            .expect("synapse current is batch x n_in");
        match &self.delay {
            None => {
                // One shared current per input: plain matrix multiplication.
                let y = current2.dot(&self.weight.t());
                Ok(y.into_dyn())
            }
            Some(_) => {
                // Materialize the delayed current per (input, output) pair
                // and contract against the weights.
                let (_, mut delayed) = self.synapse.history(&self.selector())?;
                if !injected.is_empty() {
                    // Injection is instantaneous: it reaches every output at
                    // zero delay.
                    let mut inj_total = ArrayD::<f32>::zeros(IxDyn(&[self.batch, self.n_in]));
                    for inj in injected {
                        inj_total = &inj_total + inj;
                    }
                    for b in 0..self.batch {
                        for i in 0..self.n_in {
                            for o in 0..self.n_out {
                                delayed[[b, i, o]] += inj_total[[b, i]];
                            }
                        }
                    }
                }
                let mut y = Array2::<f32>::zeros((self.batch, self.n_out));
                for o in 0..self.n_out {
                    let cur_o = delayed.index_axis(Axis(2), o); // batch x n_in
                    let w_o = self.weight.row(o);
                    for b in 0..self.batch {
                        let mut acc = 0.0f32;
                        for i in 0..self.n_in {
                            acc += w_o[i] * cur_o[[b, i]];
                        }
                        y[[b, o]] = acc;
                    }
                }
                Ok(y.into_dyn())
            }
        }
    }

    fn selector(&self) -> ArrayD<f32> {
        // 1 x N_in x N_out: broadcast over batch, one delay per (input,
        // output) pair against the batch x N_in history slices.
        match &self.delay {
            Some(d) => {
                let t = d.t().as_standard_layout().into_owned(); // N_in x N_out
                t.insert_axis(Axis(0)).into_dyn()
            }
            None => ArrayD::zeros(IxDyn(&[1, self.n_in, self.n_out])),
        }
    }

    fn raw_spikes(&self) -> ArrayD<f32> {
        self.synapse.spike().mapv(|s| if s { 1.0 } else { 0.0 })
    }

    fn delayed_spikes(&self) -> Result<ArrayD<f32>> {
        Ok(self.synspike()?.mapv(|s| if s { 1.0 } else { 0.0 }))
    }

    fn postsyn_receptive(&self, output: &ArrayD<f32>) -> Result<ArrayD<f32>> {
        if output.shape() != [self.batch, self.n_out] {
            return Err(AxonError::ShapeMismatch {
                expected: vec![self.batch, self.n_out],
                got: output.shape().to_vec(),
            });
        }
        Ok(reshape(output.clone(), &[self.batch, self.n_out, 1, 1]))
    }

    fn presyn_receptive(&self, input_like: &ArrayD<f32>) -> Result<ArrayD<f32>> {
        match input_like.shape() {
            [b, n] if *b == self.batch && *n == self.n_in => {
                Ok(reshape(input_like.clone(), &[self.batch, 1, self.n_in, 1]))
            }
            [b, n, m] if *b == self.batch && *n == self.n_in && *m == self.n_out => {
                let permuted = input_like.clone().permuted_axes(IxDyn(&[0, 2, 1]));
                Ok(reshape(permuted, &[self.batch, self.n_out, self.n_in, 1]))
            }
            other => Err(AxonError::ShapeMismatch {
                expected: vec![self.batch, self.n_in],
                got: other.to_vec(),
            }),
        }
    }

    fn weight(&self) -> ArrayD<f32> {
        self.weight.clone().into_dyn()
    }

    fn delay(&self) -> Option<ArrayD<f32>> {
        self.delay.as_ref().map(|d| d.clone().into_dyn())
    }

    fn weight_accumulator_mut(&mut self) -> Option<&mut Accumulator> {
        self.weight_acc.as_mut()
    }

    fn delay_accumulator_mut(&mut self) -> Option<&mut Accumulator> {
        self.delay_acc.as_mut()
    }

    fn apply_updates(&mut self) -> Result<()> {
        if let Some(acc) = &mut self.weight_acc {
            let mut w = self.weight.clone().into_dyn();
            acc.apply(&mut w)?;
            self.weight = w
                .into_dimensionality::<ndarray::Ix2>()
                .expect("weight stays 2-d");
            apply_mask(&mut self.weight, self.topology);
        }
        if let (Some(acc), Some(delay)) = (&mut self.delay_acc, &mut self.delay) {
            let mut d = delay.clone().into_dyn();
            acc.apply(&mut d)?;
            let mut d = d
                .into_dimensionality::<ndarray::Ix2>()
                .expect("delay stays 2-d");
            d.mapv_inplace(|v| v.clamp(0.0, self.t_max));
            *delay = d;
        }
        Ok(())
    }
}
