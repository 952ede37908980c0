//! Pointwise small-matrix algebra on component-major tensor samples.

/// Gather the `dim x dim` matrix at point `p` (row-major).
#[inline]
pub(crate) fn at(data: &[f64], np: usize, dim: usize, p: usize) -> [f64; 9] {
    let mut m = [0.0; 9];
    for c in 0..dim * dim {
        m[c] = data[c * np + p];
    }
    m
}

#[inline]
pub(crate) fn trace(m: &[f64; 9], dim: usize) -> f64 {
    (0..dim).map(|i| m[i * dim + i]).sum()
}

#[inline]
pub(crate) fn det(m: &[f64; 9], dim: usize) -> f64 {
    if dim == 2 {
        m[0] * m[3] - m[1] * m[2]
    } else {
        m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
            + m[2] * (m[3] * m[7] - m[4] * m[6])
    }
}

/// `½[(tr A)² - tr A²]`.
#[inline]
pub(crate) fn gamma2(m: &[f64; 9], dim: usize) -> f64 {
    let tr = trace(m, dim);
    let mut tr_sq = 0.0;
    for i in 0..dim {
        for k in 0..dim {
            tr_sq += m[i * dim + k] * m[k * dim + i];
        }
    }
    0.5 * (tr * tr - tr_sq)
}

/// `det(I + A)`.
#[inline]
pub(crate) fn det_shifted(m: &[f64; 9], dim: usize) -> f64 {
    let mut s = *m;
    for i in 0..dim {
        s[i * dim + i] += 1.0;
    }
    det(&s, dim)
}
