//! Staged parameter updates with magnitude bounding.
//!
//! Training rules stage nonnegative potentiative and depressive update
//! tensors; applying the accumulator reduces each list, scales the result by
//! the configured bounding rule, and adds `S(pos) - S(neg)` to the parameter.

use ndarray::ArrayD;

use crate::error::{AxonError, Result};

/// How multiple staged updates of one sign combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Magnitude scaling applied to one side (potentiative toward the upper
/// limit, depressive toward the lower limit).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HalfBounding {
    /// Power-law dependence: potentiation scales by `(limit - w)^mu`,
    /// depression by `(w - limit)^mu`. The update is cut to zero once the
    /// parameter reaches the limit, so `mu = 0` degenerates to a hard gate.
    PowerLaw { limit: f32, mu: f32 },
    /// Hard bounding: updates toward the limit are dropped once the
    /// parameter sits at or beyond it, and applied results are clipped at
    /// the limit.
    Sharp { limit: f32 },
}

impl HalfBounding {
    fn validate(&self) -> Result<()> {
        match self {
            HalfBounding::PowerLaw { mu, .. } if *mu < 0.0 => Err(AxonError::InvalidConfig(
                format!("power-law exponent must be nonnegative, got {mu}"),
            )),
            _ => Ok(()),
        }
    }

    /// Scale factor for a potentiative update at parameter value `w`.
    fn upper_scale(&self, w: f32) -> f32 {
        match *self {
            HalfBounding::PowerLaw { limit, mu } => {
                if w >= limit {
                    0.0
                } else {
                    (limit - w).powf(mu)
                }
            }
            HalfBounding::Sharp { limit } => {
                if w >= limit {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Scale factor for a depressive update at parameter value `w`.
    fn lower_scale(&self, w: f32) -> f32 {
        match *self {
            HalfBounding::PowerLaw { limit, mu } => {
                if w <= limit {
                    0.0
                } else {
                    (w - limit).powf(mu)
                }
            }
            HalfBounding::Sharp { limit } => {
                if w <= limit {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }
}

/// Paired upper and lower rules applied as one unit; mutually exclusive with
/// configuring the halves individually.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullBounding {
    pub upper: HalfBounding,
    pub lower: HalfBounding,
}

impl FullBounding {
    /// Hard clipping to `[lower, upper]`.
    pub fn sharp(lower: f32, upper: f32) -> Self {
        Self {
            upper: HalfBounding::Sharp { limit: upper },
            lower: HalfBounding::Sharp { limit: lower },
        }
    }
}

/// Staged potentiative/depressive updates for one parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct Accumulator {
    shape: Vec<usize>,
    pos: Vec<ArrayD<f32>>,
    neg: Vec<ArrayD<f32>>,
    reduction: Reduction,
    upper: Option<HalfBounding>,
    lower: Option<HalfBounding>,
    full: Option<FullBounding>,
}

/// Sign of a staged update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateSign {
    Pos,
    Neg,
}

impl Accumulator {
    pub fn new(shape: &[usize], reduction: Reduction) -> Self {
        Self { shape: shape.to_vec(), reduction, ..Default::default() }
    }

    pub fn with_upper_bound(mut self, bound: HalfBounding) -> Self {
        self.upper = Some(bound);
        self
    }

    pub fn with_lower_bound(mut self, bound: HalfBounding) -> Self {
        self.lower = Some(bound);
        self
    }

    pub fn with_full_bound(mut self, bound: FullBounding) -> Self {
        self.full = Some(bound);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn staged(&self) -> (usize, usize) {
        (self.pos.len(), self.neg.len())
    }

    pub fn staged_pos(&self) -> &[ArrayD<f32>] {
        &self.pos
    }

    pub fn staged_neg(&self) -> &[ArrayD<f32>] {
        &self.neg
    }

    pub fn has_staged(&self) -> bool {
        !self.pos.is_empty() || !self.neg.is_empty()
    }

    /// Stages a nonnegative, parameter-shaped update.
    pub fn accumulate(&mut self, update: ArrayD<f32>, sign: UpdateSign) -> Result<()> {
        if update.shape() != self.shape.as_slice() {
            return Err(AxonError::ShapeMismatch {
                expected: self.shape.clone(),
                got: update.shape().to_vec(),
            });
        }
        if update.iter().any(|&u| !(u >= 0.0)) {
            return Err(AxonError::NegativeUpdate);
        }
        match sign {
            UpdateSign::Pos => self.pos.push(update),
            UpdateSign::Neg => self.neg.push(update),
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.pos.clear();
        self.neg.clear();
    }

    fn reduce(list: &[ArrayD<f32>], reduction: Reduction, shape: &[usize]) -> ArrayD<f32> {
        let mut out = ArrayD::<f32>::zeros(ndarray::IxDyn(shape));
        for u in list {
            out = &out + u;
        }
        if matches!(reduction, Reduction::Mean) && list.len() > 1 {
            out.mapv_inplace(|v| v / list.len() as f32);
        }
        out
    }

    /// Reduces the staged updates, applies bounding, updates `param` in
    /// place, and clears the staged lists. With no staged updates this is a
    /// no-op.
    pub fn apply(&mut self, param: &mut ArrayD<f32>) -> Result<()> {
        if self.full.is_some() && (self.upper.is_some() || self.lower.is_some()) {
            return Err(AxonError::ConflictingBounds);
        }
        if param.shape() != self.shape.as_slice() {
            return Err(AxonError::ShapeMismatch {
                expected: self.shape.clone(),
                got: param.shape().to_vec(),
            });
        }
        let (upper, lower) = match self.full {
            Some(f) => (Some(f.upper), Some(f.lower)),
            None => (self.upper, self.lower),
        };
        if let Some(u) = upper {
            u.validate()?;
        }
        if let Some(l) = lower {
            l.validate()?;
        }
        if !self.has_staged() {
            return Ok(());
        }

        let pos = Self::reduce(&self.pos, self.reduction, &self.shape);
        let neg = Self::reduce(&self.neg, self.reduction, &self.shape);
        self.clear();

        ndarray::Zip::from(param).and(&pos).and(&neg).for_each(|w, &p, &n| {
            let scaled_pos = match upper {
                Some(u) => u.upper_scale(*w) * p,
                None => p,
            };
            let scaled_neg = match lower {
                Some(l) => l.lower_scale(*w) * n,
                None => n,
            };
            let mut next = *w + scaled_pos - scaled_neg;
            if let Some(HalfBounding::Sharp { limit }) = upper {
                next = next.min(limit.max(*w));
            }
            if let Some(HalfBounding::Sharp { limit }) = lower {
                next = next.max(limit.min(*w));
            }
            *w = next;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::arr1;

    fn t(v: &[f32]) -> ArrayD<f32> {
        arr1(v).into_dyn()
    }

    #[test]
    fn zero_update_application_is_a_no_op() {
        let mut acc = Accumulator::new(&[2], Reduction::Mean);
        acc.accumulate(t(&[0.0, 0.0]), UpdateSign::Pos).unwrap();
        let mut param = t(&[0.5, -0.25]);
        let before = param.clone();
        acc.apply(&mut param).unwrap();
        assert_eq!(param, before);
        assert!(!acc.has_staged());
    }

    #[test]
    fn mean_reduction_averages_staged_updates() {
        let mut acc = Accumulator::new(&[1], Reduction::Mean);
        acc.accumulate(t(&[0.2]), UpdateSign::Pos).unwrap();
        acc.accumulate(t(&[0.6]), UpdateSign::Pos).unwrap();
        let mut param = t(&[0.0]);
        acc.apply(&mut param).unwrap();
        assert_relative_eq!(param[[0]], 0.4, max_relative = 1e-6);
    }

    #[test]
    fn sum_reduction_adds_staged_updates() {
        let mut acc = Accumulator::new(&[1], Reduction::Sum);
        acc.accumulate(t(&[0.2]), UpdateSign::Pos).unwrap();
        acc.accumulate(t(&[0.6]), UpdateSign::Pos).unwrap();
        let mut param = t(&[0.0]);
        acc.apply(&mut param).unwrap();
        assert_relative_eq!(param[[0]], 0.8, max_relative = 1e-6);
    }

    #[test]
    fn equal_pos_and_neg_updates_cancel_without_bounding() {
        let mut acc = Accumulator::new(&[3], Reduction::Mean);
        let u = t(&[0.5, 0.1, 0.9]);
        acc.accumulate(u.clone(), UpdateSign::Pos).unwrap();
        acc.accumulate(u, UpdateSign::Neg).unwrap();
        let mut param = t(&[0.3, 0.4, 0.5]);
        let before = param.clone();
        acc.apply(&mut param).unwrap();
        assert_eq!(param, before);
    }

    #[test]
    fn negative_or_misshapen_updates_are_rejected() {
        let mut acc = Accumulator::new(&[2], Reduction::Mean);
        assert!(matches!(
            acc.accumulate(t(&[0.1, -0.2]), UpdateSign::Pos),
            Err(AxonError::NegativeUpdate)
        ));
        assert!(matches!(
            acc.accumulate(t(&[0.1]), UpdateSign::Pos),
            Err(AxonError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn power_law_potentiation_vanishes_at_the_limit() {
        let mut acc = Accumulator::new(&[1], Reduction::Mean)
            .with_upper_bound(HalfBounding::PowerLaw { limit: 1.0, mu: 0.5 });
        acc.accumulate(t(&[0.7]), UpdateSign::Pos).unwrap();
        let mut param = t(&[1.0]);
        acc.apply(&mut param).unwrap();
        assert_eq!(param[[0]], 1.0);
    }

    #[test]
    fn power_law_scales_by_distance_to_the_limit() {
        // w = 0.75, w_max = 1, mu = 0.5 -> scale (0.25)^0.5 = 0.5
        let mut acc = Accumulator::new(&[1], Reduction::Mean)
            .with_upper_bound(HalfBounding::PowerLaw { limit: 1.0, mu: 0.5 });
        let d = 0.4f32;
        acc.accumulate(t(&[d]), UpdateSign::Pos).unwrap();
        let mut param = t(&[0.75]);
        acc.apply(&mut param).unwrap();
        assert_relative_eq!(param[[0]], 0.75 + 0.5 * d, max_relative = 1e-6);
    }

    #[test]
    fn sharp_lower_bound_blocks_depression_only() {
        let mut acc = Accumulator::new(&[1], Reduction::Mean)
            .with_lower_bound(HalfBounding::Sharp { limit: 0.0 });
        acc.accumulate(t(&[0.25]), UpdateSign::Pos).unwrap();
        acc.accumulate(t(&[0.4]), UpdateSign::Neg).unwrap();
        let mut param = t(&[0.0]);
        acc.apply(&mut param).unwrap();
        assert_relative_eq!(param[[0]], 0.25, max_relative = 1e-6);
    }

    #[test]
    fn full_and_half_bounds_conflict() {
        let mut acc = Accumulator::new(&[1], Reduction::Mean)
            .with_upper_bound(HalfBounding::Sharp { limit: 1.0 })
            .with_full_bound(FullBounding::sharp(0.0, 1.0));
        acc.accumulate(t(&[0.1]), UpdateSign::Pos).unwrap();
        let mut param = t(&[0.5]);
        assert!(matches!(acc.apply(&mut param), Err(AxonError::ConflictingBounds)));
    }

    #[test]
    fn sharp_full_bounding_keeps_random_trajectories_inside() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(17);
        let mut acc =
            Accumulator::new(&[4], Reduction::Mean).with_full_bound(FullBounding::sharp(0.0, 1.0));
        let mut param = t(&[0.0, 0.3, 0.9, 1.0]);
        for _ in 0..2000 {
            let pos = ArrayD::from_shape_fn(ndarray::IxDyn(&[4]), |_| rng.random_range(0.0..0.2));
            let neg = ArrayD::from_shape_fn(ndarray::IxDyn(&[4]), |_| rng.random_range(0.0..0.2));
            acc.accumulate(pos, UpdateSign::Pos).unwrap();
            acc.accumulate(neg, UpdateSign::Neg).unwrap();
            acc.apply(&mut param).unwrap();
            assert!(param.iter().all(|&w| (0.0..=1.0).contains(&w)), "param {param:?}");
        }
    }
}
