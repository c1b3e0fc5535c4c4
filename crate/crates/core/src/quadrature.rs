//! Gauss rules for the Gegenbauer weight `(1 - x^2)^a` on `(-1, 1)` and
//! barycentric differentiation on arbitrary nodes.

use nalgebra::DMatrix;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `∫_{-1}^{1} (1 - x^2)^a dx = B(1/2, a + 1)` for half-integer or integer `2a`.
fn gegenbauer_mass(a: f64) -> f64 {
    // (1 - x^2)^a integrates to ∫_0^π sin^{2a+1}; 2a is an integer for every model we build.
    let m = (2.0 * a + 1.0).round();
    debug_assert!((2.0 * a + 1.0 - m).abs() < 1e-12);
    crate::geometry::sine_power_integral(m as usize)
}

/// Off-diagonal entries `b_k` of the orthonormal Gegenbauer Jacobi matrix, `k >= 1`.
fn recurrence_coefficient(k: usize, a: f64) -> f64 {
    let k = k as f64;
    (k * (k + 2.0 * a) / ((2.0 * k + 2.0 * a + 1.0) * (2.0 * k + 2.0 * a - 1.0))).sqrt()
}

/// Number of eigenvalues of the symmetric tridiagonal matrix (zero diagonal,
/// off-diagonal `off`) strictly below `x`.
fn sturm_count(off: &[f64], n: usize, x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for b in off.iter().take(n - 1) {
        let denom = if q == 0.0 { f64::EPSILON * b.abs().max(1e-300) } else { q };
        q = -x - b * b / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Orthonormal polynomial values `p_0..p_{n}` at `x`, returned as `(Σ_{k<n} p_k^2, p_n, p_n')`.
fn orthonormal_eval(x: f64, n: usize, a: f64, mass: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut p = 1.0 / mass.sqrt();
    let mut dp_prev = 0.0;
    let mut dp = 0.0;
    let mut sum_sq = 0.0;
    let mut b_prev = 0.0;
    for k in 0..n {
        sum_sq += p * p;
        let b_next = recurrence_coefficient(k + 1, a);
        let p_next = (x * p - b_prev * p_prev) / b_next;
        let dp_next = (p + x * dp - b_prev * dp_prev) / b_next;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
        b_prev = b_next;
    }
    (sum_sq, p, dp)
}

/// Gauss nodes (ascending) and weights for `(1 - x^2)^a` on `(-1, 1)`.
///
/// Nodes come from Sturm bisection on the Jacobi matrix and are then polished
/// by Newton steps on the three-term recurrence; weights are the Christoffel
/// numbers `1 / Σ_k p_k(x_i)^2`.
pub fn gauss_gegenbauer(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && a > -0.5);
    let mass = gegenbauer_mass(a);
    let off: Vec<f64> = (1..n).map(|k| recurrence_coefficient(k, a)).collect();
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(&off, n, mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..3 {
            let (_, p, dp) = orthonormal_eval(x, n, a, mass);
            if dp == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.is_finite() || step.abs() > (hi - lo).max(1e-14) {
                break;
            }
            x -= step;
        }
        nodes.push(x);
    }
    let weights = nodes
        .iter()
        .map(|&x| 1.0 / orthonormal_eval(x, n, a, mass).0)
        .collect();
    (nodes, weights)
}

/// Barycentric weights `1 / Π_{k≠j} (x_j - x_k)`, rescaled to unit max modulus.
pub fn barycentric_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let logs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let mut log = 0.0;
            let mut sign = 1.0;
            for k in 0..n {
                if k != j {
                    let diff = nodes[j] - nodes[k];
                    log -= diff.abs().ln();
                    if diff < 0.0 {
                        sign = -sign;
                    }
                }
            }
            (log, sign)
        })
        .collect();
    let max = logs.iter().map(|l| l.0).fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|(l, s)| s * (l - max).exp()).collect()
}

/// First-derivative matrix of the polynomial interpolant through `nodes`.
pub fn differentiation_matrix(nodes: &[f64]) -> DMatrix<f64> {
    let n = nodes.len();
    let bw = barycentric_weights(nodes);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let v = (bw[j] / bw[i]) / (nodes[i] - nodes[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn legendre_rule_matches_known_three_point() {
        let (x, w) = gauss_gegenbauer(3, 0.0);
        let r = (0.6f64).sqrt();
        assert_relative_eq!(x[0], -r, epsilon = 1e-15);
        assert!(x[1].abs() < 1e-15);
        assert_relative_eq!(w[0], 5.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(w[1], 8.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn exact_for_polynomials_up_to_design_order() {
        // ∫ x^{2m} (1 - x^2)^{1/2} dx over (-1,1), by the Beta function recursion:
        // I_m = I_{m-1} (2m - 1) / (2m + 2), I_0 = π/2.
        let n = 12;
        let (x, w) = gauss_gegenbauer(n, 0.5);
        let mut exact = std::f64::consts::FRAC_PI_2;
        for m in 0..n {
            if m > 0 {
                exact *= (2.0 * m as f64 - 1.0) / (2.0 * m as f64 + 2.0);
            }
            let quad = compensated_sum(x.iter().zip(&w).map(|(x, w)| w * x.powi(2 * m as i32)));
            assert_relative_eq!(quad, exact, max_relative = 1e-13);
        }
    }

    #[test]
    fn large_rule_is_symmetric_and_sums_to_mass() {
        for &a in &[0.5, 1.0, 2.5, 7.0] {
            let (x, w) = gauss_gegenbauer(256, a);
            let sum = compensated_sum(w.iter().copied());
            assert_relative_eq!(sum, gegenbauer_mass(a), max_relative = 1e-13);
            for i in 0..x.len() {
                assert!((x[i] + x[x.len() - 1 - i]).abs() < 1e-14);
                assert!(w[i] > 0.0);
            }
            assert!(x.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn differentiation_is_exact_on_polynomials() {
        let (x, _) = gauss_gegenbauer(20, 1.0);
        let d = differentiation_matrix(&x);
        let f: Vec<f64> = x.iter().map(|x| x.powi(7) - 3.0 * x * x).collect();
        for i in 0..x.len() {
            let df: f64 = (0..x.len()).map(|j| d[(i, j)] * f[j]).sum();
            assert_relative_eq!(df, 7.0 * x[i].powi(6) - 6.0 * x[i], epsilon = 1e-11);
        }
    }
}
