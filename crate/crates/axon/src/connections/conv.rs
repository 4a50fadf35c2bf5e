//! Two-dimensional convolutional connections.
//!
//! The forward pass unfolds input patches (im2col) and contracts them with
//! the kernel; with delays enabled, each kernel element reads the input at
//! its own learned age before the patches are formed.

use ndarray::{Array4, ArrayD, IxDyn};

use super::{Accumulator, Connection};
use crate::component::ComponentId;
use crate::error::{AxonError, Result};
use crate::synapses::{DeltaSynapse, SynapseBlueprint};

/// Spatial outputs along one dimension:
/// `L = floor((d + 2p - l*(k - 1) - 1) / s) + 1`.
pub fn conv_output_size(
    extent: usize,
    padding: usize,
    dilation: usize,
    kernel: usize,
    stride: usize,
) -> Result<usize> {
    if extent == 0 || kernel == 0 || stride == 0 || dilation == 0 {
        return Err(AxonError::InvalidSize(format!(
            "extent {extent}, kernel {kernel}, stride {stride}, dilation {dilation} must be positive"
        )));
    }
    let numerator =
        extent as isize + 2 * padding as isize - dilation as isize * (kernel as isize - 1) - 1;
    if numerator < 0 {
        return Err(AxonError::InvalidSize(format!(
            "kernel span exceeds the padded extent ({extent} + 2*{padding} vs {kernel} dilated by {dilation})"
        )));
    }
    Ok((numerator / stride as isize) as usize + 1)
}

/// Stride/padding/dilation per spatial dimension (height, width).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub dilation: (usize, usize),
}

impl Default for Conv2dSpec {
    fn default() -> Self {
        Self { stride: (1, 1), padding: (0, 0), dilation: (1, 1) }
    }
}

/// Convolutional mapping over `C x H x W` inputs with an `F x C x kH x kW`
/// kernel and optional per-kernel-element delays of the same shape.
#[derive(Debug, Clone)]
pub struct Conv2dConnection {
    id: ComponentId,
    kernel: Array4<f32>,
    delay: Option<Array4<f32>>,
    synapse: DeltaSynapse,
    batch: usize,
    in_shape: (usize, usize, usize), // C, H, W
    spec: Conv2dSpec,
    out_spatial: (usize, usize), // L_h, L_w
    dt: f32,
    t_max: f32,
    weight_acc: Option<Accumulator>,
    delay_acc: Option<Accumulator>,
}

impl Conv2dConnection {
    pub fn new(
        kernel: Array4<f32>,
        blueprint: &SynapseBlueprint,
        batch: usize,
        in_shape: (usize, usize, usize),
        spec: Conv2dSpec,
        dt: f32,
        t_max: f32,
        delay: Option<Array4<f32>>,
    ) -> Result<Self> {
        let (f, c, kh, kw) = kernel.dim();
        let (ci, h, w) = in_shape;
        if f == 0 || c == 0 || kh == 0 || kw == 0 {
            return Err(AxonError::InvalidSize("kernel must be non-empty".into()));
        }
        if ci != c {
            return Err(AxonError::ShapeMismatch {
                expected: vec![c, h, w],
                got: vec![ci, h, w],
            });
        }
        let l_h = conv_output_size(h, spec.padding.0, spec.dilation.0, kh, spec.stride.0)?;
        let l_w = conv_output_size(w, spec.padding.1, spec.dilation.1, kw, spec.stride.1)?;
        if let Some(d) = &delay {
            if d.dim() != kernel.dim() {
                return Err(AxonError::ShapeMismatch {
                    expected: kernel.shape().to_vec(),
                    got: d.shape().to_vec(),
                });
            }
            if d.iter().any(|&v| !v.is_finite() || v < 0.0 || v > t_max) {
                return Err(AxonError::InvalidConfig(format!(
                    "delays must lie in [0, {t_max}]"
                )));
            }
        }
        let synapse = blueprint.finalize(&[c, h, w], dt, t_max, batch)?;
        Ok(Self {
            id: ComponentId::fresh(),
            kernel,
            delay,
            synapse,
            batch,
            in_shape,
            spec,
            out_spatial: (l_h, l_w),
            dt,
            t_max,
            weight_acc: None,
            delay_acc: None,
        })
    }

    pub fn kernel(&self) -> &Array4<f32> {
        &self.kernel
    }

    pub fn delay_tensor(&self) -> Option<&Array4<f32>> {
        self.delay.as_ref()
    }

    pub fn synapse(&self) -> &DeltaSynapse {
        &self.synapse
    }

    pub fn spec(&self) -> Conv2dSpec {
        self.spec
    }

    /// Spatial output extents `(L_h, L_w)`.
    pub fn out_spatial(&self) -> (usize, usize) {
        self.out_spatial
    }

    /// Total outputs per filter, `L = L_h * L_w`.
    pub fn out_len(&self) -> usize {
        self.out_spatial.0 * self.out_spatial.1
    }

    pub fn set_weight_updater(&mut self, acc: Accumulator) -> Result<()> {
        if acc.shape() != self.kernel.shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.kernel.shape().to_vec(),
                got: acc.shape().to_vec(),
            });
        }
        self.weight_acc = Some(acc);
        Ok(())
    }

    pub fn set_delay_updater(&mut self, acc: Accumulator) -> Result<()> {
        if self.delay.is_none() {
            return Err(AxonError::DelaysDisabled);
        }
        if acc.shape() != self.kernel.shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.kernel.shape().to_vec(),
                got: acc.shape().to_vec(),
            });
        }
        self.delay_acc = Some(acc);
        Ok(())
    }

    /// Input row/column for output position `(lh, lw)` and kernel offset
    /// `(kh, kw)`; `None` lands in the zero padding.
    fn source_index(&self, lh: usize, lw: usize, kh: usize, kw: usize) -> Option<(usize, usize)> {
        let (_, h, w) = self.in_shape;
        let ih = (lh * self.spec.stride.0 + kh * self.spec.dilation.0) as isize
            - self.spec.padding.0 as isize;
        let iw = (lw * self.spec.stride.1 + kw * self.spec.dilation.1) as isize
            - self.spec.padding.1 as isize;
        (ih >= 0 && (ih as usize) < h && iw >= 0 && (iw as usize) < w)
            .then(|| (ih as usize, iw as usize))
    }

    /// im2col on an undelayed `batch x C x H x W` tensor, expanded as
    /// `batch x C x kH x kW x L`.
    fn unfold(&self, x: &ArrayD<f32>) -> ArrayD<f32> {
        let (_, c, _, _) = self.kernel.dim();
        let (_, _, kh, kw) = self.kernel.dim();
        let (l_h, l_w) = self.out_spatial;
        let l = l_h * l_w;
        let mut out = ArrayD::<f32>::zeros(IxDyn(&[self.batch, c, kh, kw, l]));
        for b in 0..self.batch {
            for ci in 0..c {
                for ki in 0..kh {
                    for kj in 0..kw {
                        for lh in 0..l_h {
                            for lw in 0..l_w {
                                if let Some((ih, iw)) = self.source_index(lh, lw, ki, kj) {
                                    out[[b, ci, ki, kj, lh * l_w + lw]] = x[[b, ci, ih, iw]];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// im2col on a delay-selected `batch x C x H x W x (F*kH*kW)` tensor,
    /// expanded as `batch x F x C x kH x kW x L`; each kernel element reads
    /// the plane selected at its own delay.
    fn unfold_delayed(&self, x: &ArrayD<f32>) -> ArrayD<f32> {
        let (f, c, kh, kw) = self.kernel.dim();
        let (l_h, l_w) = self.out_spatial;
        let l = l_h * l_w;
        let mut out = ArrayD::<f32>::zeros(IxDyn(&[self.batch, f, c, kh, kw, l]));
        for b in 0..self.batch {
            for fi in 0..f {
                for ci in 0..c {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            let d = (fi * kh + ki) * kw + kj;
                            for lh in 0..l_h {
                                for lw in 0..l_w {
                                    if let Some((ih, iw)) = self.source_index(lh, lw, ki, kj) {
                                        out[[b, fi, ci, ki, kj, lh * l_w + lw]] =
                                            x[[b, ci, ih, iw, d]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn contract(&self, pre: &ArrayD<f32>, filter_axis: bool) -> ArrayD<f32> {
        let (f, c, kh, kw) = self.kernel.dim();
        let (l_h, l_w) = self.out_spatial;
        let l = l_h * l_w;
        let mut y = ArrayD::<f32>::zeros(IxDyn(&[self.batch, f, l_h, l_w]));
        for b in 0..self.batch {
            for fi in 0..f {
                for li in 0..l {
                    let mut acc = 0.0f32;
                    for ci in 0..c {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let v = if filter_axis {
                                    pre[[b, fi, ci, ki, kj, li]]
                                } else {
                                    pre[[b, ci, ki, kj, li]]
                                };
                                acc += self.kernel[[fi, ci, ki, kj]] * v;
                            }
                        }
                    }
                    y[[b, fi, li / l_w, li % l_w]] = acc;
                }
            }
        }
        y
    }

    fn expect_input(&self, got: &[usize]) -> Result<()> {
        let (c, h, w) = self.in_shape;
        if got != [self.batch, c, h, w] {
            return Err(AxonError::ShapeMismatch {
                expected: vec![self.batch, c, h, w],
                got: got.to_vec(),
            });
        }
        Ok(())
    }
}

impl Connection for Conv2dConnection {
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
        let (c, h, w) = self.in_shape;
        vec![c, h, w]
    }

    fn output_shape(&self) -> Vec<usize> {
        let (f, _, _, _) = self.kernel.dim();
        vec![f, self.out_spatial.0, self.out_spatial.1]
    }

    fn param_shape(&self) -> Vec<usize> {
        self.kernel.shape().to_vec()
    }

    fn presyn_delayed_shape(&self) -> Vec<usize> {
        let (f, c, kh, kw) = self.kernel.dim();
        let (_, h, w) = self.in_shape;
        vec![self.batch, c, h, w, f * kh * kw]
    }

    fn delays_enabled(&self) -> bool {
        self.delay.is_some()
    }

    fn forward(&mut self, spikes: &ArrayD<bool>, injected: &[ArrayD<f32>]) -> Result<ArrayD<f32>> {
        self.expect_input(spikes.shape())?;
        let current = self.synapse.step(spikes, injected)?;
        match &self.delay {
            None => {
                let u = self.unfold(&current);
                Ok(self.contract(&u, false))
            }
            Some(_) => {
                let (_, mut delayed) = self.synapse.history(&self.selector())?;
                if !injected.is_empty() {
                    // Injection is instantaneous: add it at zero delay to
                    // every per-kernel-element stream.
                    let d_len = delayed.shape()[4];
                    for inj in injected {
                        for (idx, v) in inj.indexed_iter() {
                            for d in 0..d_len {
                                delayed[[idx[0], idx[1], idx[2], idx[3], d]] += *v;
                            }
                        }
                    }
                }
                let u = self.unfold_delayed(&delayed);
                Ok(self.contract(&u, true))
            }
        }
    }

    fn selector(&self) -> ArrayD<f32> {
        // 1 x C x 1 x 1 x (F*kH*kW): broadcast over batch and space, one
        // delay per (filter, kernel row, kernel column) and channel.
        let (f, c, kh, kw) = self.kernel.dim();
        let mut sel = ArrayD::<f32>::zeros(IxDyn(&[1, c, 1, 1, f * kh * kw]));
        if let Some(delay) = &self.delay {
            for ci in 0..c {
                for fi in 0..f {
                    for ki in 0..kh {
                        for kj in 0..kw {
                            sel[[0, ci, 0, 0, (fi * kh + ki) * kw + kj]] = delay[[fi, ci, ki, kj]];
                        }
                    }
                }
            }
        }
        sel
    }

    fn raw_spikes(&self) -> ArrayD<f32> {
        self.synapse.spike().mapv(|s| if s { 1.0 } else { 0.0 })
    }

    fn delayed_spikes(&self) -> Result<ArrayD<f32>> {
        let (spikes, _) = self.synapse.history(&self.selector())?;
        Ok(spikes.mapv(|s| if s { 1.0 } else { 0.0 }))
    }

    fn postsyn_receptive(&self, output: &ArrayD<f32>) -> Result<ArrayD<f32>> {
        let (f, _, _, _) = self.kernel.dim();
        let (l_h, l_w) = self.out_spatial;
        if output.shape() != [self.batch, f, l_h, l_w] {
            return Err(AxonError::ShapeMismatch {
                expected: vec![self.batch, f, l_h, l_w],
                got: output.shape().to_vec(),
            });
        }
        Ok(crate::tensor::reshape(
            output.clone(),
            &[self.batch, f, 1, 1, 1, l_h * l_w],
        ))
    }

    fn presyn_receptive(&self, input_like: &ArrayD<f32>) -> Result<ArrayD<f32>> {
        let (f, c, kh, kw) = self.kernel.dim();
        let (_, h, w) = self.in_shape;
        match input_like.shape() {
            [b, ci, hi, wi] if [*b, *ci, *hi, *wi] == [self.batch, c, h, w] => {
                let u = self.unfold(input_like); // B x C x kH x kW x L
                Ok(crate::tensor::reshape(
                    u,
                    &[self.batch, 1, c, kh, kw, self.out_len()],
                ))
            }
            [b, ci, hi, wi, d]
                if [*b, *ci, *hi, *wi, *d] == [self.batch, c, h, w, f * kh * kw] =>
            {
                Ok(self.unfold_delayed(input_like))
            }
            other => Err(AxonError::ShapeMismatch {
                expected: vec![self.batch, c, h, w],
                got: other.to_vec(),
            }),
        }
    }

    fn weight(&self) -> ArrayD<f32> {
        self.kernel.clone().into_dyn()
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
            let mut k = self.kernel.clone().into_dyn();
            acc.apply(&mut k)?;
            self.kernel = k
                .into_dimensionality::<ndarray::Ix4>()
                .expect("kernel stays 4-d");
        }
        if let (Some(acc), Some(delay)) = (&mut self.delay_acc, &mut self.delay) {
            let mut d = delay.clone().into_dyn();
            acc.apply(&mut d)?;
            let mut d = d
                .into_dimensionality::<ndarray::Ix4>()
                .expect("delay stays 4-d");
            d.mapv_inplace(|v| v.clamp(0.0, self.t_max));
            *delay = d;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::receptive_product;
    use rand::{Rng, SeedableRng};

    #[test]
    fn output_size_follows_the_floor_formula() {
        assert_eq!(conv_output_size(28, 0, 1, 3, 1).unwrap(), 26);
        assert_eq!(conv_output_size(32, 1, 1, 3, 2).unwrap(), 16);
        for k in 1..=6 {
            assert_eq!(conv_output_size(k, 0, 1, k, 1).unwrap(), 1);
        }
        assert!(conv_output_size(2, 0, 1, 5, 1).is_err());
        assert!(conv_output_size(8, 0, 1, 3, 0).is_err());
    }

    fn random_conv(
        rng: &mut rand_chacha::ChaCha12Rng,
        batch: usize,
        delayed: bool,
        t_max: f32,
    ) -> Conv2dConnection {
        let (f, c, kh, kw) = (4, 3, 3, 3);
        let kernel = Array4::from_shape_fn((f, c, kh, kw), |_| rng.random_range(-1.0..1.0f32));
        let delay = delayed
            .then(|| Array4::from_shape_fn((f, c, kh, kw), |_| rng.random_range(0.0..t_max)));
        Conv2dConnection::new(
            kernel,
            &SynapseBlueprint::new(1.0).unwrap(),
            batch,
            (c, 8, 8),
            Conv2dSpec::default(),
            1.0,
            t_max,
            delay,
        )
        .unwrap()
    }

    #[test]
    fn undelayed_forward_matches_a_naive_seven_loop_convolution() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(31);
        let mut conn = random_conv(&mut rng, 2, false, 0.0);
        let spikes = ArrayD::from_shape_fn(IxDyn(&[2, 3, 8, 8]), |_| rng.random_bool(0.3));
        let y = conn.forward(&spikes, &[]).unwrap();
        assert_eq!(y.shape(), &[2, 4, 6, 6]);
        let x = spikes.mapv(|s| if s { 1.0f32 } else { 0.0 });
        for b in 0..2 {
            for f in 0..4 {
                for lh in 0..6 {
                    for lw in 0..6 {
                        let mut want = 0.0f64;
                        for c in 0..3 {
                            for ki in 0..3 {
                                for kj in 0..3 {
                                    want += conn.kernel()[[f, c, ki, kj]] as f64
                                        * x[[b, c, lh + ki, lw + kj]] as f64;
                                }
                            }
                        }
                        let got = y[[b, f, lh, lw]] as f64;
                        assert!(
                            (got - want).abs() <= 1e-5 * want.abs().max(1.0),
                            "({b},{f},{lh},{lw}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn uniform_integer_delays_shift_the_undelayed_forward() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(37);
        let (f, c, kh, kw) = (2, 1, 3, 3);
        let kernel = Array4::from_shape_fn((f, c, kh, kw), |_| rng.random_range(-1.0..1.0f32));
        let bp = SynapseBlueprint::new(1.0).unwrap();
        for k in 0..4usize {
            let delay = Array4::from_elem((f, c, kh, kw), k as f32);
            let mut delayed = Conv2dConnection::new(
                kernel.clone(),
                &bp,
                1,
                (c, 6, 6),
                Conv2dSpec::default(),
                1.0,
                4.0,
                Some(delay),
            )
            .unwrap();
            let mut plain = Conv2dConnection::new(
                kernel.clone(),
                &bp,
                1,
                (c, 6, 6),
                Conv2dSpec::default(),
                1.0,
                4.0,
                None,
            )
            .unwrap();
            let steps: Vec<ArrayD<bool>> = (0..12)
                .map(|_| ArrayD::from_shape_fn(IxDyn(&[1, c, 6, 6]), |_| rng.random_bool(0.3)))
                .collect();
            let mut plain_outputs = Vec::new();
            let mut delayed_outputs = Vec::new();
            for s in &steps {
                plain_outputs.push(plain.forward(s, &[]).unwrap());
                delayed_outputs.push(delayed.forward(s, &[]).unwrap());
            }
            for t in 0..steps.len() {
                if t >= k {
                    assert_eq!(delayed_outputs[t], plain_outputs[t - k], "shift {k} step {t}");
                } else {
                    assert!(delayed_outputs[t].iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn receptive_views_have_the_documented_shapes() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(43);
        let mut conn = random_conv(&mut rng, 2, true, 3.0);
        let spikes = ArrayD::from_shape_fn(IxDyn(&[2, 3, 8, 8]), |_| rng.random_bool(0.3));
        conn.forward(&spikes, &[]).unwrap();

        let out = ArrayD::<f32>::zeros(IxDyn(&[2, 4, 6, 6]));
        let post = conn.postsyn_receptive(&out).unwrap();
        assert_eq!(post.shape(), &[2, 4, 1, 1, 1, 36]);

        let raw = ArrayD::<f32>::zeros(IxDyn(&[2, 3, 8, 8]));
        assert_eq!(conn.presyn_receptive(&raw).unwrap().shape(), &[2, 1, 3, 3, 3, 36]);

        let delayed = conn.delayed_spikes().unwrap();
        assert_eq!(delayed.shape(), &[2, 3, 8, 8, 36]);
        assert_eq!(
            conn.presyn_receptive(&delayed).unwrap().shape(),
            &[2, 4, 3, 3, 3, 36]
        );
    }

    #[test]
    fn delayed_receptive_product_matches_a_six_loop_accumulation() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(47);
        let conn = random_conv(&mut rng, 1, true, 3.0);
        let post = ArrayD::from_shape_fn(IxDyn(&[1, 4, 6, 6]), |_| rng.random_range(-1.0..1.0f32));
        let pre_delayed =
            ArrayD::from_shape_fn(IxDyn(&[1, 3, 8, 8, 36]), |_| rng.random_range(-1.0..1.0f32));
        let post_v = conn.postsyn_receptive(&post).unwrap();
        let pre_v = conn.presyn_receptive(&pre_delayed).unwrap();
        let got = receptive_product(&post_v, &pre_v).unwrap();
        assert_eq!(got.shape(), &[1, 4, 3, 3, 3]);
        for f in 0..4 {
            for c in 0..3 {
                for ki in 0..3 {
                    for kj in 0..3 {
                        let mut want = 0.0f64;
                        for li in 0..36 {
                            want += post_v[[0, f, 0, 0, 0, li]] as f64
                                * pre_v[[0, f, c, ki, kj, li]] as f64;
                        }
                        let g = got[[0, f, c, ki, kj]] as f64;
                        assert!((g - want).abs() <= 1e-5 * want.abs().max(1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn one_by_one_kernel_selects_a_single_delayed_stream_per_site() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(53);
        let kernel = Array4::from_elem((1, 1, 1, 1), 1.0f32);
        let delay = Array4::from_elem((1, 1, 1, 1), 2.0f32);
        let mut conn = Conv2dConnection::new(
            kernel,
            &SynapseBlueprint::new(1.0).unwrap(),
            1,
            (1, 4, 4),
            Conv2dSpec::default(),
            1.0,
            3.0,
            Some(delay),
        )
        .unwrap();
        assert_eq!(conn.selector().shape(), &[1, 1, 1, 1, 1]);
        let steps: Vec<ArrayD<bool>> = (0..8)
            .map(|_| ArrayD::from_shape_fn(IxDyn(&[1, 1, 4, 4]), |_| rng.random_bool(0.4)))
            .collect();
        let mut outs = Vec::new();
        for s in &steps {
            outs.push(conn.forward(s, &[]).unwrap());
        }
        // each spatial site is exactly its own input stream delayed 2 steps
        for t in 2..steps.len() {
            let want = steps[t - 2].mapv(|s| if s { 1.0f32 } else { 0.0 });
            assert_eq!(outs[t], want);
        }
    }
}
