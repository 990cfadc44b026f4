//! Shape function kernels: Lagrange polynomials on equally spaced nodes and
//! Cox-de Boor B-spline recursion with first derivatives.

/// Lagrange basis of degree `p` on nodes j/p, evaluated at `t` in [0, 1].
/// Returns values and derivatives with respect to `t`.
pub fn lagrange(p: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
    let nodes: Vec<f64> = (0..=p).map(|j| j as f64 / p as f64).collect();
    let mut n = vec![0.0; p + 1];
    let mut dn = vec![0.0; p + 1];
    for j in 0..=p {
        let mut v = 1.0;
        for (m, &tm) in nodes.iter().enumerate() {
            if m != j {
                v *= (t - tm) / (nodes[j] - tm);
            }
        }
        n[j] = v;
        // d/dt of the product: sum over the omitted factor.
        let mut d = 0.0;
        for (k, &tk) in nodes.iter().enumerate() {
            if k == j {
                continue;
            }
            let mut term = 1.0 / (nodes[j] - tk);
            for (m, &tm) in nodes.iter().enumerate() {
                if m != j && m != k {
                    term *= (t - tm) / (nodes[j] - tm);
                }
            }
            d += term;
        }
        dn[j] = d;
    }
    (n, dn)
}

/// Knot span index such that `knots[span] <= u < knots[span + 1]`.
/// `n` is the index of the last control point.
pub fn find_span(n: usize, p: usize, u: f64, knots: &[f64]) -> usize {
    if u >= knots[n + 1] {
        return n;
    }
    if u <= knots[p] {
        return p;
    }
    let mut lo = p;
    let mut hi = n + 1;
    let mut mid = (lo + hi) / 2;
    while u < knots[mid] || u >= knots[mid + 1] {
        if u < knots[mid] {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = (lo + hi) / 2;
    }
    mid
}

/// Non-zero B-spline basis functions and first derivatives at `u`
/// (Cox-de Boor triangle, derivative from the degree p-1 functions).
pub fn bspline_with_derivative(
    span: usize,
    u: f64,
    p: usize,
    knots: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    // ndu[j][r]: upper triangle basis functions, lower triangle knot spans.
    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = u - knots[span + 1 - j];
        right[j] = knots[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }
    let n: Vec<f64> = (0..=p).map(|j| ndu[j][p]).collect();

    // First derivative: p * (N_{p-1} differences over knot spans).
    let mut dn = vec![0.0; p + 1];
    for r in 0..=p {
        let mut d = 0.0;
        if r >= 1 {
            d += ndu[r - 1][p - 1] / ndu[p][r - 1];
        }
        if r < p {
            d -= ndu[r][p - 1] / ndu[p][r];
        }
        dn[r] = p as f64 * d;
    }
    (n, dn)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lagrange_is_interpolatory() {
        for p in 1..=4 {
            for j in 0..=p {
                let (n, _) = lagrange(p, j as f64 / p as f64);
                for (m, &v) in n.iter().enumerate() {
                    let expect = if m == j { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() < 1e-13, "p={p} j={j} m={m}");
                }
            }
        }
    }

    #[test]
    fn lagrange_derivative_by_finite_differences() {
        let (_, dn) = lagrange(3, 0.37);
        let h = 1e-7;
        let (np, _) = lagrange(3, 0.37 + h);
        let (nm, _) = lagrange(3, 0.37 - h);
        for j in 0..4 {
            let fd = (np[j] - nm[j]) / (2.0 * h);
            assert!((dn[j] - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn bspline_derivative_by_finite_differences() {
        let knots = vec![0.0, 0.0, 0.0, 0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0];
        let p = 3;
        let n = knots.len() - p - 2;
        let u = 0.4;
        let span = find_span(n, p, u, &knots);
        let (_, dn) = bspline_with_derivative(span, u, p, &knots);
        let h = 1e-7;
        let (np, _) = bspline_with_derivative(span, u + h, p, &knots);
        let (nm, _) = bspline_with_derivative(span, u - h, p, &knots);
        for j in 0..=p {
            let fd = (np[j] - nm[j]) / (2.0 * h);
            assert!((dn[j] - fd).abs() < 1e-5, "j={j}: {} vs {fd}", dn[j]);
        }
    }

    #[test]
    fn repeated_interior_knot_is_handled() {
        // Quadratic with a double knot at 0.5 (C0 there).
        let knots = vec![0.0, 0.0, 0.0, 0.25, 0.5, 0.5, 0.75, 1.0, 1.0, 1.0];
        let p = 2;
        let n = knots.len() - p - 2;
        for &u in &[0.1, 0.49, 0.5, 0.51, 0.9] {
            let span = find_span(n, p, u, &knots);
            let (b, db) = bspline_with_derivative(span, u, p, &knots);
            let sum: f64 = b.iter().sum();
            let dsum: f64 = db.iter().sum();
            assert!((sum - 1.0).abs() < 1e-14);
            assert!(dsum.abs() < 1e-11);
        }
    }
}
