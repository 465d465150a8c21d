//! Plain slice kernels shared by the tape and by untracked code paths.
//! All loops run in a fixed order, so results are reproducible bit for bit.

use super::Float;

/// `out[m×n] += a[m×k] · b[k×n]`
pub fn matmul_acc<F: Float>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

pub fn matmul<F: Float>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    matmul_acc(a, b, &mut out, m, k, n);
    out
}

/// `out[m×n] += a[m×k] · b[n×k]ᵀ`
pub fn matmul_bt_acc<F: Float>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * n + j] += acc;
        }
    }
}

pub fn matmul_bt<F: Float>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    matmul_bt_acc(a, b, &mut out, m, k, n);
    out
}

/// `out[k×n] += a[m×k]ᵀ · b[m×n]`
pub fn matmul_at_acc<F: Float>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == F::zero() {
                continue;
            }
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
}

/// Row-wise softmax with max subtraction. `mask[i] == true` blocks an entry,
/// which then gets weight exactly zero. Returns `None` when a row is fully
/// blocked.
pub fn softmax_rows<F: Float>(
    x: &[F],
    rows: usize,
    cols: usize,
    mask: Option<&[bool]>,
) -> Option<Vec<F>> {
    let mut out = vec![F::zero(); rows * cols];
    for r in 0..rows {
        let xs = &x[r * cols..(r + 1) * cols];
        let blocked = |c: usize| mask.is_some_and(|m| m[r * cols + c]);
        let mut max = F::neg_infinity();
        for (c, &v) in xs.iter().enumerate() {
            if !blocked(c) && v > max {
                max = v;
            }
        }
        if max == F::neg_infinity() {
            return None;
        }
        let ys = &mut out[r * cols..(r + 1) * cols];
        let mut total = F::zero();
        for c in 0..cols {
            if !blocked(c) {
                let e = (xs[c] - max).exp();
                ys[c] = e;
                total += e;
            }
        }
        let inv = F::one() / total;
        ys.iter_mut().for_each(|y| *y *= inv);
    }
    Some(out)
}

/// Softmax of a single vector.
pub fn softmax<F: Float>(x: &[F]) -> Vec<F> {
    softmax_rows(x, 1, x.len(), None).expect("softmax of an empty vector")
}

/// Sinusoidal encoding of an integer position: `sin` on even dimensions,
/// `cos` on odd ones, with wavelength growing as `10000^(2i/d)`.
pub fn sinusoid(pos: usize, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| {
            let pair = (j / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / dim as f64);
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Index of the largest value; ties go to the earliest index.
pub fn argmax<F: PartialOrd + Copy>(xs: &[F]) -> Option<usize> {
    let mut best: Option<(usize, F)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if !(x > b) => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_variants_agree() {
        let a: Vec<f64> = (0..6).map(|x| x as f64 - 2.5).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|x| (x as f64).sin()).collect(); // 3×4
        let c = matmul(&a, &b, 2, 3, 4);
        // bᵀ stored row-major is 4×3
        let mut bt = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                bt[j * 3 + i] = b[i * 4 + j];
            }
        }
        assert_eq!(matmul_bt(&a, &bt, 2, 3, 4), c);
        let mut at = vec![0.0; 6];
        for i in 0..2 {
            for j in 0..3 {
                at[j * 2 + i] = a[i * 3 + j];
            }
        }
        let mut c2 = vec![0.0; 8];
        matmul_at_acc(&at, &b, &mut c2, 3, 2, 4);
        for (x, y) in c.iter().zip(&c2) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_masked_row_is_none() {
        assert!(softmax_rows(&[1.0f64, 2.0], 1, 2, Some(&[true, true])).is_none());
        let p = softmax_rows(&[1.0f64, 2.0], 1, 2, Some(&[false, true])).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn argmax_prefers_first_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), Some(0));
        assert_eq!(argmax(&[0.1, 0.7, 0.2]), Some(1));
        assert_eq!(argmax::<f64>(&[]), None);
    }
}
