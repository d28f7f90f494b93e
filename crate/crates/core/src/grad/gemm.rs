/// `c = a * b + beta * c` for row-major operands, where `a` is `m x k` and `b`
/// is `k x n`. With `a_t` set, `a` is stored as its `k x m` transpose; with
/// `b_t` set, `b` is stored as its `n x k` transpose.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every index the kernel touches,
    // (i * rs + p * cs) for i < rows and p < cols, lies inside its slice.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> [f64; 6] {
        let mut out = [0.0; 6];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for p in 0..k {
                    let av = if a_t { a[p * m + i] } else { a[i * k + p] };
                    let bv = if b_t { b[j * k + p] } else { b[p * n + j] };
                    s += av * bv;
                }
                out[i * n + j] = s;
            }
        }
        out
    }

    #[test]
    fn all_transpose_combinations_match_naive() {
        let a = [1.0, -2.0, 3.0, 0.5, 4.0, -1.0];
        let b = [2.0, 1.0, 0.0, -3.0, 1.5, 2.5, -0.5, 1.0, 0.25];
        for &a_t in &[false, true] {
            for &b_t in &[false, true] {
                // a is 2x3, b is 3x3 -> c is 2x3
                let mut c = [0.0; 6];
                gemm(2, 3, 3, &a, a_t, &b, b_t, 0.0, &mut c);
                assert_eq!(c, naive(2, 3, 3, &a, a_t, &b, b_t));
            }
        }
    }
}
