//! Accumulating matrix products on row-major slices, backed by a blocked
//! GEMM kernel.

/// Strided matrix operand: element `(i, j)` lives at `i * rs + j * cs`.
#[derive(Clone, Copy)]
struct Operand<'a> {
    data: &'a [f64],
    rs: usize,
    cs: usize,
}

fn extent(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs + 1
    }
}

/// `c[m×n] += a[m×k] · b[k×n]` with `c` row-major and contiguous.
fn gemm_acc(m: usize, k: usize, n: usize, a: Operand, b: Operand, c: &mut [f64]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(
        extent(m, k, a.rs, a.cs) <= a.data.len(),
        "gemm: left operand out of bounds"
    );
    assert!(
        extent(k, n, b.rs, b.cs) <= b.data.len(),
        "gemm: right operand out of bounds"
    );
    assert!(m * n <= c.len(), "gemm: output out of bounds");
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` because it is borrowed mutably.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out[n×m] += a[n×k] · b[k×m]`.
pub(crate) fn mm(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm_acc(
        n,
        k,
        m,
        Operand { data: a, rs: k, cs: 1 },
        Operand { data: b, rs: m, cs: 1 },
        out,
    );
}

/// `out[k×m] += aᵀ · g` for `a[n×k]` and `g[n×m]`.
pub(crate) fn mm_tn(a: &[f64], g: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    gemm_acc(
        k,
        n,
        m,
        Operand { data: a, rs: 1, cs: k },
        Operand { data: g, rs: m, cs: 1 },
        out,
    );
}

/// `out[n×k] += g · bᵀ` for `g[n×m]` and `b[k×m]`.
pub(crate) fn mm_nt(g: &[f64], b: &[f64], out: &mut [f64], n: usize, m: usize, k: usize) {
    gemm_acc(
        n,
        m,
        k,
        Operand { data: g, rs: m, cs: 1 },
        Operand { data: b, rs: 1, cs: m },
        out,
    );
}
