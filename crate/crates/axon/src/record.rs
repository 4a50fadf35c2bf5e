//! Rolling-window temporal storage with continuous-time reads and writes.
//!
//! A [`RecordTensor`] holds the last `W` observation slices of a discretely
//! sampled process, together with the step length that elapsed between them.
//! Values at arbitrary past times inside the window are read back through an
//! interpolation strategy, which is what lets connections resolve
//! continuous-valued (and trainable) delays against a discrete simulation.

use ndarray::{ArrayD, IxDyn};

use crate::error::{AxonError, Result};

/// Relative tolerance used to decide whether a query time sits exactly on the
/// sampling grid. Times are externally stored as `f32`, so ratios like
/// `2.4 / 1.2` land near but not exactly on an integer.
const GRID_EPS: f64 = 1e-5;

/// Interpolation (and extrapolation) strategies for off-grid access.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterpKind {
    /// The older bracketing sample: the observation that had already occurred
    /// at the queried instant. The right choice for spike trains.
    Previous,
    /// Whichever bracketing sample is closer in time (ties go to the older).
    Nearest,
    /// Linear mix of the two bracketing samples.
    Linear,
    /// The older sample decayed by `exp(-elapsed / tau)`, where `elapsed` is
    /// the time from the older sample to the queried instant. Exact for
    /// processes governed by first-order linear decay.
    ExpDecay { tau: f32 },
    /// As [`InterpKind::ExpDecay`], with the interpolated value additionally
    /// scaled by `1 / tau` so rate-normalized traces integrate to one.
    ExpRateDecay { tau: f32 },
}

impl InterpKind {
    fn validate(&self) -> Result<()> {
        match self {
            InterpKind::ExpDecay { tau } | InterpKind::ExpRateDecay { tau } if *tau <= 0.0 => Err(
                AxonError::InvalidConfig(format!("interpolation tau must be positive, got {tau}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Ring buffer of timestamped observation slices.
///
/// Storage is a single contiguous tensor of shape `[W, N1, ..., Nd]`. The
/// pointer indexes the next slice to overwrite; the most recent observation
/// therefore lives just behind it. Values are stored as 32-bit reals, with
/// boolean observations stored as 0/1.
#[derive(Debug, Clone)]
pub struct RecordTensor {
    dt: f32,
    duration: f32,
    inclusive: bool,
    data: ArrayD<f32>,
    pointer: usize,
    observed: usize,
}

/// Number of slices needed to cover `duration` at step `dt`:
/// `floor(T/dt) + 1` when the sample at exactly `T` is kept, `floor(T/dt)`
/// otherwise, never less than one.
fn window_len(duration: f32, dt: f32, inclusive: bool) -> usize {
    let steps = eps_floor(duration as f64 / dt as f64);
    let w = if inclusive { steps + 1 } else { steps };
    w.max(1)
}

/// Floor with a relative tolerance so ratios that are integral up to `f32`
/// rounding are treated as integral.
fn eps_floor(x: f64) -> usize {
    let rounded = x.round();
    if (x - rounded).abs() <= GRID_EPS * rounded.abs().max(1.0) {
        rounded.max(0.0) as usize
    } else {
        x.floor().max(0.0) as usize
    }
}

/// Splits a query time into bracketing sample ages. Returns
/// `(newer_age, older_age, frac)` where `frac` is the position between them
/// (0 at the newer sample) and `newer_age == older_age` for on-grid times.
fn bracket(time: f64, dt: f64) -> (usize, usize, f64) {
    let ratio = time / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= GRID_EPS * rounded.abs().max(1.0) {
        let k = rounded.max(0.0) as usize;
        (k, k, 0.0)
    } else {
        let k0 = ratio.floor().max(0.0) as usize;
        (k0, k0 + 1, ratio - k0 as f64)
    }
}

impl RecordTensor {
    /// Creates a zero-filled record of `window_len` slices of `shape`.
    pub fn new(shape: &[usize], dt: f32, duration: f32, inclusive: bool) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(AxonError::NonPositiveStep(dt));
        }
        if duration < 0.0 {
            return Err(AxonError::InvalidSize(format!(
                "duration must be nonnegative, got {duration}"
            )));
        }
        if shape.is_empty() {
            return Err(AxonError::InvalidSize(
                "observation slices need at least one dimension".into(),
            ));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(AxonError::InvalidSize(format!(
                "observation slices must be non-empty, got {shape:?}"
            )));
        }
        let w = window_len(duration, dt, inclusive);
        let mut full = Vec::with_capacity(shape.len() + 1);
        full.push(w);
        full.extend_from_slice(shape);
        Ok(Self {
            dt,
            duration,
            inclusive,
            data: ArrayD::zeros(IxDyn(&full)),
            pointer: 0,
            observed: 0,
        })
    }

    pub fn dt(&self) -> f32 {
        self.dt
    }

    pub fn duration(&self) -> f32 {
        self.duration
    }

    pub fn inclusive(&self) -> bool {
        self.inclusive
    }

    /// Number of stored slices `W`.
    pub fn window_len(&self) -> usize {
        self.data.shape()[0]
    }

    /// Shape of one observation slice.
    pub fn slice_shape(&self) -> &[usize] {
        &self.data.shape()[1..]
    }

    /// Count of pushes so far, saturating at `W`.
    pub fn observed(&self) -> usize {
        self.observed
    }

    /// Index of the next slice to overwrite.
    pub fn pointer(&self) -> usize {
        self.pointer
    }

    /// Oldest age covered by the stored window, `(W - 1) * dt`.
    pub fn max_age(&self) -> f32 {
        (self.window_len() - 1) as f32 * self.dt
    }

    /// Storage row holding the sample `age_steps` steps before present.
    fn row(&self, age_steps: usize) -> usize {
        let w = self.window_len();
        (self.pointer + w - 1 - (age_steps % w)) % w
    }

    /// Appends `obs` as the newest observation, overwriting the oldest slice.
    pub fn push(&mut self, obs: &ArrayD<f32>) -> Result<()> {
        if obs.shape() != self.slice_shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.slice_shape().to_vec(),
                got: obs.shape().to_vec(),
            });
        }
        let p = self.pointer;
        self.data.index_axis_mut(ndarray::Axis(0), p).assign(obs);
        self.pointer = (p + 1) % self.window_len();
        self.observed = (self.observed + 1).min(self.window_len());
        Ok(())
    }

    /// Boolean convenience wrapper around [`RecordTensor::push`].
    pub fn push_bool(&mut self, obs: &ArrayD<bool>) -> Result<()> {
        let as_f32 = obs.mapv(|b| if b { 1.0f32 } else { 0.0 });
        self.push(&as_f32)
    }

    /// The most recent observation; zeros if nothing has been pushed yet.
    pub fn latest(&self) -> ArrayD<f32> {
        if self.observed == 0 {
            ArrayD::zeros(IxDyn(self.slice_shape()))
        } else {
            self.data.index_axis(ndarray::Axis(0), self.row(0)).to_owned()
        }
    }

    fn check_time(&self, time: f32) -> Result<()> {
        let max = self.max_age();
        if !time.is_finite() || time < -GRID_EPS as f32 || time > max + (GRID_EPS as f32) * self.dt
        {
            return Err(AxonError::DelayOutOfRange { delay: time, max });
        }
        Ok(())
    }

    /// Reads values `delays` milliseconds before present.
    ///
    /// `delays` must have one more dimension than an observation slice; its
    /// leading dimensions broadcast against the slice shape and the trailing
    /// dimension selects `D` times per element. The result has shape
    /// `slice_shape x D`. When a requested time falls exactly on the sampling
    /// grid the stored sample is returned unchanged for every [`InterpKind`];
    /// otherwise the two bracketing samples are combined by `interp`.
    /// Validates a selection tensor against the slice layout and returns the
    /// resulting output shape `slice_shape x D`.
    pub fn select_shape(&self, delays: &ArrayD<f32>) -> Result<Vec<usize>> {
        let slice_shape = self.slice_shape();
        if delays.ndim() != slice_shape.len() + 1 {
            return Err(AxonError::ShapeMismatch {
                expected: slice_shape.iter().copied().chain([0]).collect(),
                got: delays.shape().to_vec(),
            });
        }
        let mut out_shape = Vec::with_capacity(delays.ndim());
        for (i, &n) in slice_shape.iter().enumerate() {
            let d = delays.shape()[i];
            if d != n && d != 1 {
                return Err(AxonError::BroadcastMismatch(
                    delays.shape().to_vec(),
                    slice_shape.to_vec(),
                ));
            }
            out_shape.push(n);
        }
        out_shape.push(delays.shape()[slice_shape.len()]);
        Ok(out_shape)
    }

    pub fn select(&self, delays: &ArrayD<f32>, interp: InterpKind) -> Result<ArrayD<f32>> {
        interp.validate()?;
        if self.observed == 0 {
            return Err(AxonError::NoObservations);
        }
        let slice_shape = self.slice_shape().to_vec();
        let out_shape = self.select_shape(delays)?;

        let delays_b = delays
            .broadcast(IxDyn(&out_shape))
            .ok_or_else(|| AxonError::BroadcastMismatch(delays.shape().to_vec(), out_shape.clone()))?;

        let mut out = ArrayD::<f32>::zeros(IxDyn(&out_shape));
        let mut elem = vec![0usize; slice_shape.len() + 1]; // [row, slice index...]
        for (idx, o) in out.indexed_iter_mut() {
            let d = delays_b[&idx];
            self.check_time(d)?;
            let (k0, k1, frac) = bracket(d as f64, self.dt as f64);
            let k1 = k1.min(self.window_len() - 1);
            for (j, e) in elem.iter_mut().skip(1).enumerate() {
                *e = idx[j];
            }
            elem[0] = self.row(k0);
            let newer = self.data[IxDyn(&elem)];
            *o = if k0 == k1 {
                newer
            } else {
                elem[0] = self.row(k1);
                let older = self.data[IxDyn(&elem)];
                interpolate(interp, newer, older, frac, self.dt)
            };
        }
        Ok(out)
    }

    /// Single-delay convenience: every element read at the same age.
    pub fn select_scalar(&self, delay: f32, interp: InterpKind) -> Result<ArrayD<f32>> {
        let mut shape = vec![1usize; self.slice_shape().len() + 1];
        *shape.last_mut().unwrap() = 1;
        let delays = ArrayD::from_elem(IxDyn(&shape), delay);
        let mut out = self.select(&delays, interp)?;
        let ndim = out.ndim();
        out = out.remove_axis(ndarray::Axis(ndim - 1));
        Ok(out)
    }

    /// Writes `value` at `time` milliseconds before present.
    ///
    /// On-grid times overwrite the corresponding slice. Off-grid times
    /// overwrite bracketing slices so that a subsequent [`RecordTensor::select`]
    /// at the same time with the same strategy reads `value` back:
    /// `Previous` writes the older slice, `Nearest` the nearer one, `Linear`
    /// both, and the exponential kinds write the older slice scaled so the
    /// decayed read-back matches.
    pub fn insert(&mut self, time: f32, value: &ArrayD<f32>, extrap: InterpKind) -> Result<()> {
        extrap.validate()?;
        if value.shape() != self.slice_shape() {
            return Err(AxonError::ShapeMismatch {
                expected: self.slice_shape().to_vec(),
                got: value.shape().to_vec(),
            });
        }
        self.check_time(time)?;
        let (k0, k1, frac) = bracket(time as f64, self.dt as f64);
        let k1 = k1.min(self.window_len() - 1);
        if k0 == k1 {
            let row = self.row(k0);
            self.data.index_axis_mut(ndarray::Axis(0), row).assign(value);
            self.observed = self.observed.max(1);
            return Ok(());
        }
        let (row0, row1) = (self.row(k0), self.row(k1));
        match extrap {
            InterpKind::Previous => {
                self.data.index_axis_mut(ndarray::Axis(0), row1).assign(value);
            }
            InterpKind::Nearest => {
                let row = if frac >= 0.5 { row1 } else { row0 };
                self.data.index_axis_mut(ndarray::Axis(0), row).assign(value);
            }
            InterpKind::Linear => {
                // Constant extrapolation through the requested value keeps a
                // linear read-back at the same time exact.
                self.data.index_axis_mut(ndarray::Axis(0), row0).assign(value);
                self.data.index_axis_mut(ndarray::Axis(0), row1).assign(value);
            }
            InterpKind::ExpDecay { tau } => {
                let gain = (((1.0 - frac) * self.dt as f64) / tau as f64).exp() as f32;
                self.data
                    .index_axis_mut(ndarray::Axis(0), row1)
                    .assign(&value.mapv(|v| v * gain));
            }
            InterpKind::ExpRateDecay { tau } => {
                let gain =
                    tau * ((((1.0 - frac) * self.dt as f64) / tau as f64).exp() as f32);
                self.data
                    .index_axis_mut(ndarray::Axis(0), row1)
                    .assign(&value.mapv(|v| v * gain));
            }
        }
        self.observed = self.observed.max(1);
        Ok(())
    }

    /// Zeroes the stored window and resets the pointer and push count.
    pub fn clear(&mut self) {
        self.data.fill(0.0);
        self.pointer = 0;
        self.observed = 0;
    }
}

/// Combines the bracketing samples for an off-grid read. `frac` is in (0, 1),
/// measured from the newer sample toward the older one.
fn interpolate(kind: InterpKind, newer: f32, older: f32, frac: f64, dt: f32) -> f32 {
    match kind {
        InterpKind::Previous => older,
        InterpKind::Nearest => {
            if frac >= 0.5 {
                older
            } else {
                newer
            }
        }
        InterpKind::Linear => ((1.0 - frac) * newer as f64 + frac * older as f64) as f32,
        InterpKind::ExpDecay { tau } => {
            let elapsed = (1.0 - frac) * dt as f64;
            (older as f64 * (-elapsed / tau as f64).exp()) as f32
        }
        InterpKind::ExpRateDecay { tau } => {
            let elapsed = (1.0 - frac) * dt as f64;
            (older as f64 * (-elapsed / tau as f64).exp() / tau as f64) as f32
        }
    }
}
