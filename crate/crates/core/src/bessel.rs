//! Log of the modified Bessel function of the first kind, `ln I_nu(kappa)`,
//! for real order `nu >= 0` and `kappa >= 0`.
//!
//! Three regimes:
//! - convergent power series, summed in log space (small/moderate kappa);
//! - large-argument expansion in 1/kappa (kappa >> nu^2);
//! - uniform large-order expansion with the u_k(t) polynomials (nu >= 40).
//!
//! The series alone covers every input but costs O(kappa) terms, so the
//! asymptotic branches take over where they are accurate to ~1e-10 relative.

use std::sync::OnceLock;

/// Orders of the uniform-expansion correction polynomials kept.
const UNIFORM_TERMS: usize = 12;
/// Below this order the uniform expansion is not trusted; use the other
/// branches instead.
const UNIFORM_MIN_ORDER: f64 = 40.0;

/// `ln I_nu(kappa)`. Returns `-inf` for `kappa == 0, nu > 0` and `0.0` for
/// `kappa == 0, nu == 0`.
pub fn log_bessel_i(nu: f64, kappa: f64) -> f64 {
    assert!(nu >= 0.0, "order must be non-negative");
    assert!(kappa >= 0.0, "argument must be non-negative");
    if kappa == 0.0 {
        return if nu == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if nu >= UNIFORM_MIN_ORDER && kappa > nu {
        log_bessel_uniform(nu, kappa)
    } else if kappa > 2.0 * nu * nu + 30.0 {
        log_bessel_large_arg(nu, kappa)
    } else {
        log_bessel_series(nu, kappa)
    }
}

/// The power series summed directly in linear space. Overflows for large
/// kappa; kept as an independent reference path for validation (safe for
/// kappa up to roughly 500).
pub fn bessel_i_naive(nu: f64, kappa: f64) -> f64 {
    let mut term = (nu * (kappa / 2.0).ln() - libm::lgamma(nu + 1.0)).exp();
    let q = kappa * kappa / 4.0;
    let mut sum = term;
    for k in 0..10_000 {
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (nu + kf + 1.0));
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

// I_nu(k) = sum_j (k/2)^{nu+2j} / (j! Gamma(nu+j+1)), all terms positive,
// accumulated with a streaming log-sum-exp.
fn log_bessel_series(nu: f64, kappa: f64) -> f64 {
    let log_half_k = (kappa / 2.0).ln();
    let mut log_term = nu * log_half_k - libm::lgamma(nu + 1.0);
    let mut log_sum = log_term;
    let two_log_half_k = 2.0 * log_half_k;
    let mut k = 0.0f64;
    loop {
        let delta = two_log_half_k - (k + 1.0).ln() - (nu + k + 1.0).ln();
        log_term += delta;
        log_sum = log_add_exp(log_sum, log_term);
        k += 1.0;
        if delta < 0.0 && log_term < log_sum - 45.0 {
            break;
        }
        if k > 5e6 {
            debug_assert!(false, "bessel series failed to converge");
            break;
        }
    }
    log_sum
}

// I_nu(k) ~ e^k / sqrt(2 pi k) * sum_j (-1)^j a_j(nu) / k^j with
// a_j built from mu = 4 nu^2. Valid for k well beyond nu^2.
fn log_bessel_large_arg(nu: f64, kappa: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        let factor = (2.0 * kf - 1.0).powi(2);
        term *= -(mu - factor) / (8.0 * kappa * kf);
        if term.abs() >= prev {
            break; // asymptotic tail started to diverge
        }
        prev = term.abs();
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    kappa - 0.5 * (2.0 * std::f64::consts::PI * kappa).ln() + sum.ln()
}

// Uniform large-order expansion: with z = kappa/nu, t = 1/sqrt(1+z^2),
//   I_nu(nu z) ~ e^{nu eta} / (sqrt(2 pi nu) (1+z^2)^{1/4})
//                * sum_k u_k(t) / nu^k,
//   nu eta = sqrt(nu^2 + kappa^2) + nu ln(kappa / (nu + sqrt(nu^2+kappa^2))).
fn log_bessel_uniform(nu: f64, kappa: f64) -> f64 {
    let root = (nu * nu + kappa * kappa).sqrt();
    let nu_eta = root + nu * (kappa / (nu + root)).ln();
    let t = nu / root;
    let mut correction = 0.0f64;
    let mut nu_pow = 1.0f64;
    for u in uniform_polynomials().iter().skip(1) {
        nu_pow *= nu;
        correction += poly_eval(u, t) / nu_pow;
    }
    let z2p1 = 1.0 + (kappa / nu) * (kappa / nu);
    nu_eta - 0.5 * (2.0 * std::f64::consts::PI * nu).ln() - 0.25 * z2p1.ln()
        + correction.ln_1p()
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

// u_0 = 1; u_{k+1}(t) = t^2 (1 - t^2) u_k'(t) / 2
//                       + (1/8) Int_0^t (1 - 5 s^2) u_k(s) ds.
fn uniform_polynomials() -> &'static Vec<Vec<f64>> {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut polys: Vec<Vec<f64>> = vec![vec![1.0]];
        for _ in 0..UNIFORM_TERMS {
            let u = polys.last().unwrap();
            // derivative
            let du: Vec<f64> = u
                .iter()
                .enumerate()
                .skip(1)
                .map(|(p, &c)| c * p as f64)
                .collect();
            let mut next = vec![0.0f64; u.len() + 3];
            // t^2 (1 - t^2) u' / 2  ->  (c_p/2) t^{p+2} - (c_p/2) t^{p+4}
            for (p, &c) in du.iter().enumerate() {
                next[p + 2] += 0.5 * c;
                next[p + 4] -= 0.5 * c;
            }
            // (1/8) Int (1 - 5 s^2) u  ->  c_p/(8(p+1)) t^{p+1} - 5 c_p/(8(p+3)) t^{p+3}
            for (p, &c) in u.iter().enumerate() {
                next[p + 1] += c / (8.0 * (p as f64 + 1.0));
                next[p + 3] -= 5.0 * c / (8.0 * (p as f64 + 3.0));
            }
            while next.last() == Some(&0.0) {
                next.pop();
            }
            polys.push(next);
        }
        polys
    })
}
