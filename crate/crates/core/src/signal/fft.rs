//! Mixed-radix Cooley-Tukey transform for arbitrary frame lengths.
//!
//! The forward transform computes `f_j = sum_k x_k * exp(-2*pi*i*j*k/n)`.
//! Composite lengths recurse on their smallest prime factor; prime lengths
//! fall back to the direct quadratic sum, so every `n >= 1` is supported.

use num_complex::Complex64;
use std::f64::consts::TAU;

/// Forward transform of a complex buffer. `x` must be nonempty.
pub fn fft(x: &[Complex64]) -> Vec<Complex64> {
    debug_assert!(!x.is_empty());
    let n = x.len();
    if n == 1 {
        return x.to_vec();
    }
    let p = smallest_prime_factor(n);
    if p == n {
        return direct_dft(x);
    }
    let m = n / p;

    // Sub-transforms over the p strided subsequences x[r], x[r+p], ...
    let subs: Vec<Vec<Complex64>> = (0..p)
        .map(|r| {
            let sub: Vec<Complex64> = (0..m).map(|q| x[q * p + r]).collect();
            fft(&sub)
        })
        .collect();

    // Recombine: f_j = sum_r twiddle(j*r/n) * F_r[j mod m].
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (r, sub) in subs.iter().enumerate() {
            let angle = -TAU * (j * r) as f64 / n as f64;
            acc += Complex64::from_polar(1.0, angle) * sub[j % m];
        }
        *slot = acc;
    }
    out
}

/// Direct quadratic evaluation of the defining sum.
fn direct_dft(x: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    (0..n)
        .map(|j| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &xk) in x.iter().enumerate() {
                let angle = -TAU * (j * k) as f64 / n as f64;
                acc += xk * Complex64::from_polar(1.0, angle);
            }
            acc
        })
        .collect()
}

fn smallest_prime_factor(n: usize) -> usize {
    if n % 2 == 0 {
        return 2;
    }
    let mut f = 3;
    while f * f <= n {
        if n % f == 0 {
            return f;
        }
        f += 2;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factor_basics() {
        assert_eq!(smallest_prime_factor(2), 2);
        assert_eq!(smallest_prime_factor(20), 2);
        assert_eq!(smallest_prime_factor(15), 3);
        assert_eq!(smallest_prime_factor(7), 7);
        assert_eq!(smallest_prime_factor(49), 7);
    }

    #[test]
    fn matches_direct_sum_on_composite_lengths() {
        for n in [2usize, 6, 12, 20, 21, 64] {
            let x: Vec<Complex64> = (0..n)
                .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos()))
                .collect();
            let fast = fft(&x);
            let slow = direct_dft(&x);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).norm() < 1e-10 * (1.0 + b.norm()), "n={n}");
            }
        }
    }
}
