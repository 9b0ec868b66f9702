//! Floating-point scalar abstraction.
//!
//! All numeric code is generic over [`Scalar`]. `f64` is the working
//! precision of the trainer and the gradient checker; `f32` is supported
//! for inference-sized experiments.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    /// `c = beta * c + a * b` on strided row/column-major views.
    ///
    /// `a` is `m × k`, `b` is `k × n`, `c` is `m × n`. `beta` must be 0 or 1.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_cols: usize,
    ) {
        naive_gemm(m, k, n, a, a_strides, b, b_strides, beta, c, c_cols)
    }

    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

/// Reference kernel: i-k-j loop order, fixed summation order over `k`.
#[allow(clippy::too_many_arguments)]
pub fn naive_gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (ars, acs): (usize, usize),
    b: &[T],
    (brs, bcs): (usize, usize),
    beta: T,
    c: &mut [T],
    c_cols: usize,
) {
    for i in 0..m {
        let row = &mut c[i * c_cols..i * c_cols + n];
        if beta == T::zero() {
            row.iter_mut().for_each(|v| *v = T::zero());
        }
        for p in 0..k {
            let aip = a[i * ars + p * acs];
            if aip == T::zero() {
                continue;
            }
            for (j, out) in row.iter_mut().enumerate() {
                *out += aip * b[p * brs + j * bcs];
            }
        }
    }
}

macro_rules! blas_like {
    ($ty:ty, $kernel:path) => {
        impl Scalar for $ty {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                (ars, acs): (usize, usize),
                b: &[Self],
                (brs, bcs): (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_cols: usize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                if k == 0 {
                    if beta == 0.0 {
                        for i in 0..m {
                            c[i * c_cols..i * c_cols + n].fill(0.0);
                        }
                    }
                    return;
                }
                assert!((m - 1) * ars + (k - 1) * acs < a.len());
                assert!((k - 1) * brs + (n - 1) * bcs < b.len());
                assert!((m - 1) * c_cols + n <= c.len());
                // SAFETY: the asserts above bound every index the kernel touches.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        ars as isize,
                        acs as isize,
                        b.as_ptr(),
                        brs as isize,
                        bcs as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_cols as isize,
                        1,
                    );
                }
            }
        }
    };
}

blas_like!(f64, matrixmultiply::dgemm);
blas_like!(f32, matrixmultiply::sgemm);
