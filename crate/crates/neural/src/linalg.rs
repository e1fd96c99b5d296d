//! Dense row-major kernels used by the policy forward and backward passes.

/// `out[n×m] = a[n×k] · b[k×m]`.
pub fn matmul(a: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    matmul_acc(a, b, n, k, m, &mut out);
    out
}

/// `out += a[n×k] · b[k×m]`.
pub fn matmul_acc(a: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), n * k);
    debug_assert_eq!(b.len(), k * m);
    debug_assert_eq!(out.len(), n * m);
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[t * m..(t + 1) * m]) {
                *o += av * bv;
            }
        }
    }
}

/// `out[k×m] += aᵀ · g` with `a[n×k]`, `g[n×m]`.
pub fn matmul_at_b_acc(a: &[f64], g: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k * m);
    for i in 0..n {
        let grow = &g[i * m..(i + 1) * m];
        for (t, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &gv) in out[t * m..(t + 1) * m].iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

/// `out[n×k] += g[n×m] · bᵀ` with `b[k×m]`.
pub fn matmul_a_bt_acc(g: &[f64], b: &[f64], n: usize, k: usize, m: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n * k);
    let bt = transpose(b, k, m);
    matmul_acc(g, &bt, n, m, k, out);
}

/// Row-major `rows × cols` to `cols × rows`.
pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}

/// Copy columns `off..off + w` of an `n × d` matrix into a contiguous `n × w` block.
pub fn gather_cols(a: &[f64], d: usize, off: usize, w: usize) -> Vec<f64> {
    let n = a.len() / d;
    let mut out = Vec::with_capacity(n * w);
    for i in 0..n {
        out.extend_from_slice(&a[i * d + off..i * d + off + w]);
    }
    out
}

/// Add an `n × w` block into columns `off..off + w` of an `n × d` matrix.
pub fn scatter_cols_acc(block: &[f64], d: usize, off: usize, w: usize, out: &mut [f64]) {
    for (i, row) in block.chunks(w).enumerate() {
        for (o, v) in out[i * d + off..i * d + off + w].iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place softmax over `xs`; entries set to `-inf` come out as exactly 0.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = if x.is_finite() { (*x - max).exp() } else { 0.0 };
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0, 0.0, 0.0, 1.0, 1.0, 1.0]; // 3x2
        assert_eq!(matmul(&a, &b, 2, 3, 2), vec![4.0, 5.0, 10.0, 11.0]);
    }

    #[test]
    fn transposed_products() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let g = [1.0, -1.0, 2.0, 0.5]; // 2x2
        let mut atg = vec![0.0; 6];
        matmul_at_b_acc(&a, &g, 2, 3, 2, &mut atg);
        assert_eq!(atg, vec![9.0, 1.0, 12.0, 0.5, 15.0, 0.0]);
        let b = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 3x2
        let mut gbt = vec![0.0; 6];
        matmul_a_bt_acc(&g, &b, 2, 3, 2, &mut gbt);
        assert_eq!(gbt, vec![-1.0, -1.0, -1.0, 3.0, 8.0, 13.0]);
    }

    #[test]
    fn masked_softmax() {
        let mut xs = [1.0, f64::NEG_INFINITY, 1.0];
        softmax_in_place(&mut xs);
        assert_eq!(xs, [0.5, 0.0, 0.5]);
    }
}
