//! Small numeric building blocks shared across the solvers.

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
///
/// Returns `(argmax, max)`. The bracket is shrunk until its width falls below
/// `tol` or `max_iter` evaluations have been spent. For non-unimodal inputs
/// the result is a local maximum; callers that need a certificate scan a grid
/// afterwards.
pub fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64, max_iter: usize) -> (f64, f64) {
    debug_assert!(hi >= lo);
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iter = 0;
    while (b - a) > tol && iter < max_iter {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    // Evaluate the midpoint and endpoints to break ties deterministically
    // towards the smallest argument.
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    let mut best = (mid, fm);
    for (x, fx) in [(lo, f(lo)), (hi, f(hi)), (c, fc), (d, fd)] {
        if fx > best.1 || (fx == best.1 && x < best.0) {
            best = (x, fx);
        }
    }
    best
}

/// Pairwise (cascade) summation. Deterministic and independent of any
/// parallel chunking used to produce `values`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&sq) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Thomas algorithm for a tridiagonal system `(lower, diag, upper) x = rhs`.
///
/// `lower[0]` and `upper[n-1]` are ignored. Panics if a pivot vanishes.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    assert!(lower.len() == n && upper.len() == n && rhs.len() == n);
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        assert!(m != 0.0, "singular tridiagonal system");
        c[i] = upper[i] / m;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = d;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c[i] * next;
    }
    x
}

/// Exponents of total-degree polynomial features in `dim` variables up to
/// `degree`, ordered by total degree then lexicographically.
pub fn poly_exponents(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = vec![0usize; dim];
    for total in 0..=degree {
        fill_exponents(dim, total, 0, &mut current, &mut out);
    }
    out
}

fn fill_exponents(dim: usize, remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos == dim {
        if remaining == 0 {
            out.push(current.clone());
        }
        return;
    }
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for e in 0..=remaining {
        current[pos] = e;
        fill_exponents(dim, remaining - e, pos + 1, current, out);
        current[pos] = 0;
    }
}

/// Evaluate the monomial features given by `exponents` at `x`.
pub fn poly_features(exponents: &[Vec<usize>], x: &[f64], out: &mut [f64]) {
    for (slot, exps) in out.iter_mut().zip(exponents) {
        let mut v = 1.0;
        for (xi, &e) in x.iter().zip(exps) {
            for _ in 0..e {
                v *= xi;
            }
        }
        *slot = v;
    }
}
