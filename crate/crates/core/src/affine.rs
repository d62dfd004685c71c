//! The one affine kernel shared by the fast loop, the driver boards and the
//! affine controllers, so that every path computing `A·x + b` rounds alike.

use nalgebra::{DMatrix, DVector};

use crate::Real;

/// `Σ_j a[row, j]·x[j] + b[row]`, accumulated left to right.
#[inline]
pub fn affine_row<T: Real>(a: &DMatrix<T>, row: usize, x: &[T], b: T) -> T {
    let mut acc = T::zero();
    for (j, &xj) in x.iter().enumerate() {
        acc += a[(row, j)] * xj;
    }
    acc + b
}

/// Full affine map `A·x + b` using [`affine_row`].
pub fn affine_apply<T: Real>(a: &DMatrix<T>, x: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    DVector::from_fn(a.nrows(), |i, _| affine_row(a, i, x.as_slice(), b[i]))
}
