//! Small broadcasting helpers shared by the connection and learning code.

use ndarray::{ArrayD, ArrayViewD, IxDyn};

use crate::error::{AxonError, Result};

/// Computes the common broadcast shape of two shapes, aligning from the
/// trailing axis like NumPy/PyTorch.
pub fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let ndim = a.len().max(b.len());
    let mut out = vec![0usize; ndim];
    for i in 0..ndim {
        let da = if i < a.len() { a[a.len() - 1 - i] } else { 1 };
        let db = if i < b.len() { b[b.len() - 1 - i] } else { 1 };
        out[ndim - 1 - i] = if da == db || db == 1 {
            da
        } else if da == 1 {
            db
        } else {
            return Err(AxonError::BroadcastMismatch(a.to_vec(), b.to_vec()));
        };
    }
    Ok(out)
}

/// Broadcasts both operands to their common shape.
///
/// `ndarray`'s arithmetic only broadcasts the right-hand side, so mutual
/// broadcasting is done explicitly here.
pub fn co_broadcast<'a>(
    a: &'a ArrayD<f32>,
    b: &'a ArrayD<f32>,
) -> Result<(ArrayViewD<'a, f32>, ArrayViewD<'a, f32>, Vec<usize>)> {
    let shape = broadcast_shape(a.shape(), b.shape())?;
    let av = a
        .broadcast(IxDyn(&shape))
        .ok_or_else(|| AxonError::BroadcastMismatch(a.shape().to_vec(), shape.clone()))?;
    let bv = b
        .broadcast(IxDyn(&shape))
        .ok_or_else(|| AxonError::BroadcastMismatch(b.shape().to_vec(), shape.clone()))?;
    Ok((av, bv, shape))
}

/// Reshapes to `shape`, copying into standard layout when the source view is
/// permuted or otherwise non-contiguous.
pub fn reshape(a: ArrayD<f32>, shape: &[usize]) -> ArrayD<f32> {
    let len: usize = shape.iter().product();
    debug_assert_eq!(a.len(), len);
    if let Ok(r) = a.to_shape(IxDyn(shape)) {
        r.into_owned()
    } else {
        let std = a.as_standard_layout().into_owned();
        std.to_shape(IxDyn(shape)).expect("element count checked").into_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    #[test]
    fn broadcast_shapes_align_from_trailing_axis() {
        assert_eq!(broadcast_shape(&[2, 1, 4], &[3, 1]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape(&[5], &[1, 5]).unwrap(), vec![1, 5]);
        assert!(broadcast_shape(&[2, 3], &[4, 3]).is_err());
    }

    #[test]
    fn co_broadcast_multiplies_like_numpy() {
        let a = Array::from_shape_vec(IxDyn(&[2, 1]), vec![1.0, 2.0]).unwrap();
        let b = Array::from_shape_vec(IxDyn(&[1, 3]), vec![10.0, 20.0, 30.0]).unwrap();
        let (av, bv, shape) = co_broadcast(&a, &b).unwrap();
        assert_eq!(shape, vec![2, 3]);
        let prod = &av.to_owned() * &bv.to_owned();
        assert_eq!(prod[[1, 2]], 60.0);
    }
}
