//! One-sample Kolmogorov–Smirnov test against a continuous CDF.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `D_n = sup |F_n − F|` and its asymptotic p-value, using Stephens'
/// small-sample correction `(√n + 0.12 + 0.11/√n)·D_n`.
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let statistic = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sn = n.sqrt();
    KsResult { statistic, p_value: kolmogorov_survival((sn + 0.12 + 0.11 / sn) * statistic) }
}

/// `P(K > λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}` for the Kolmogorov law.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}
