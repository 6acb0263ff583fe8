//! Reproducible random generation: Fréchet and positive stable variates and
//! whole-vector samplers for the logistic, max-linear and Schlather models.
//!
//! Every sampler consumes an [`RngStream`] by value semantics: the same
//! `(seed, stream_id)` pair always reproduces the same output.

use std::f64::consts::PI;
use std::path::Path;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CorrelationFn, LogisticParams, MaxLinearSpec, SiteSet};
use crate::special_fn::TWO_PI_SQRT;

/// Upper `1 − 10⁻⁶` quantile of the standard normal law.
pub const ENVELOPE_NORMAL_QUANTILE: f64 = 4.753_424_308_822_899;

/// Poisson points allowed per Schlather replicate before giving up.
pub const MAX_POISSON_POINTS: usize = 1_000_000;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identifies one independent random sequence: a ChaCha8 key derived from
/// `seed` and the cipher stream `stream_id`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// A stream for a distinct purpose (`tag`) within the same stream id.
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(tag)),
            stream_id: self.stream_id,
        }
    }
}

/// Where an [`ObservationSet`] came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model: String,
    pub theta: Vec<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

/// `n × d` matrix of strictly positive, finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    n: usize,
    d: usize,
    data: Vec<f64>,
    labels: Vec<String>,
    pub provenance: Option<Provenance>,
}

fn default_labels(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("site_{i}")).collect()
}

impl ObservationSet {
    /// Row-major `data`; every entry must be strictly positive and finite.
    pub fn new(n: usize, d: usize, data: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::Data("observation set needs at least one row and one column".into()));
        }
        if data.len() != n * d {
            return Err(Error::Contract(format!("{} values supplied for a {n}×{d} observation set", data.len())));
        }
        if let Some(pos) = data.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Data(format!(
                "observation at row {}, column {} is {} (must be positive and finite)",
                pos / d + 1,
                pos % d + 1,
                data[pos]
            )));
        }
        let labels = labels.unwrap_or_else(|| default_labels(d));
        if labels.len() != d {
            return Err(Error::Contract(format!("{} labels for {d} columns", labels.len())));
        }
        Ok(Self { n, d, data, labels, provenance: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Data("rows have differing lengths".into()));
        }
        Self::new(rows.len(), d, rows.concat(), None)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// A copy with columns reordered so that new column `k` is old column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d {
            return Err(Error::Contract("permutation length differs from dimension".into()));
        }
        let data = self.rows().flat_map(|r| perm.iter().map(move |&p| r[p])).collect();
        let labels = perm.iter().map(|&p| self.labels[p].clone()).collect();
        Self::new(self.n, self.d, data, Some(labels))
    }

    /// RFC-4180 CSV: header of site labels, one row per observation, floats
    /// with 17 significant digits.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.labels).map_err(|e| csv_error(path, e))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|x| format!("{x:.16e}"))).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let labels: Vec<String> = r.headers().map_err(|e| csv_error(path, e))?.iter().map(str::to_owned).collect();
        let d = labels.len();
        let mut data = Vec::new();
        let mut n = 0;
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            if rec.len() != d {
                return Err(Error::Data(format!("row {} has {} fields, header has {d}", i + 1, rec.len())));
            }
            for (j, field) in rec.iter().enumerate() {
                let x: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!("row {}, column {}: cannot parse `{field}` as a number", i + 1, j + 1))
                })?;
                data.push(x);
            }
            n += 1;
        }
        Self::new(n, d, data, Some(labels))
    }

    pub fn write_provenance(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        #[derive(Serialize)]
        struct Document<'a> {
            schema_version: u32,
            #[serde(flatten)]
            provenance: &'a Option<Provenance>,
        }
        let doc = Document { schema_version: crate::harness::SCHEMA_VERSION, provenance: &self.provenance };
        let doc = serde_json::to_string_pretty(&doc).expect("provenance serialises");
        std::fs::write(path, doc + "\n").map_err(|e| Error::io(path, e))
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::Data(format!("{}: {e}", path.display()))
    }
}

fn open01(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(Open01)
}

/// `n` iid draws `−scale / ln U`.
pub fn sample_frechet(stream: &RngStream, scale: f64, n: usize) -> Result<Vec<f64>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!("Fréchet scale must be positive, got {scale}")));
    }
    let mut rng = stream.rng();
    Ok((0..n).map(|_| -scale / open01(&mut rng).ln()).collect())
}

/// Logarithm of a positive `α`-stable variate with `E e^{−tS} = e^{−t^α}`
/// (Kanter's representation).
#[inline]
fn log_positive_stable(alpha: f64, rng: &mut ChaCha8Rng) -> f64 {
    let u = PI * open01(rng);
    let w: f64 = Exp1.sample(rng);
    (alpha * u).sin().ln() - u.sin().ln() / alpha
        + (1.0 - alpha) / alpha * (((1.0 - alpha) * u).sin().ln() - w.ln())
}

pub fn sample_positive_stable(stream: &RngStream, alpha: f64, n: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("stable index must lie in (0, 1), got {alpha}")));
    }
    let mut rng = stream.rng();
    Ok((0..n).map(|_| log_positive_stable(alpha, &mut rng).exp()).collect())
}

fn finish(stream: &RngStream, model: &str, theta: Vec<f64>, n: usize, d: usize, data: Vec<f64>) -> Result<ObservationSet> {
    let set = ObservationSet::new(n, d, data, None).map_err(|e| Error::Generation(format!("{model} sampler produced invalid output: {e}")))?;
    Ok(set.with_provenance(Provenance { model: model.into(), theta, seed: stream.seed, stream_id: stream.stream_id }))
}

/// Logistic vectors `Xᵢ = σ (S / Eᵢ)^α`, `S` positive `α`-stable and `Eᵢ`
/// iid unit exponential.
pub fn sample_logistic(stream: &RngStream, params: &LogisticParams, d: usize, n: usize) -> Result<ObservationSet> {
    let LogisticParams { sigma, alpha } = *params;
    if !(alpha < 1.0) {
        return Err(Error::Domain("logistic sampler needs alpha < 1".into()));
    }
    let mut rng = stream.rng();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let log_s = log_positive_stable(alpha, &mut rng);
        for _ in 0..d {
            let e: f64 = Exp1.sample(&mut rng);
            data.push(sigma * (alpha * (log_s - e.ln())).exp());
        }
    }
    finish(stream, "logistic", vec![sigma, alpha], n, d, data)
}

/// Max-linear vectors `Xᵢ = maxⱼ aᵢⱼ Zⱼ` from `k` unit Fréchet factors per row.
pub fn sample_max_linear(stream: &RngStream, spec: &MaxLinearSpec, n: usize) -> Result<ObservationSet> {
    let a = spec.selected();
    let (d, k) = (a.dim(), a.factors());
    let mut rng = stream.rng();
    let mut z = vec![0.0; k];
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        z.iter_mut().for_each(|zj| *zj = -1.0 / open01(&mut rng).ln());
        for row in a.rows() {
            data.push(row.iter().zip(&z).map(|(a, z)| a * z).fold(0.0, f64::max));
        }
    }
    finish(stream, "max_linear", vec![spec.theta as f64], n, d, data)
}

/// `n` iid rows of a zero-mean, unit-variance Gaussian vector with
/// correlation `ρ(‖tᵢ − tⱼ‖)` over the sites.
pub fn sample_gaussian_field(stream: &RngStream, f: &CorrelationFn, sites: &SiteSet, n: usize) -> Result<Vec<Vec<f64>>> {
    let factor = sites.correlation_factor(f)?;
    let d = sites.len();
    let mut rng = stream.rng();
    let mut z = vec![0.0; d];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        z.iter_mut().for_each(|zi| *zi = StandardNormal.sample(&mut rng));
        let mut w = vec![0.0; d];
        factor.lower_mul_into(&z, &mut w);
        out.push(w);
    }
    Ok(out)
}

/// Schlather vectors from the spectral representation
/// `X_t = maxᵢ ζᵢ⁻¹ √(2π)(wᵢ(t))₊` with `ζᵢ` the arrival times of a unit-rate
/// Poisson process. The series for one replicate stops once
/// `C/ζᵢ < min_t X_t`, where `C = √(2π)·z` for the `1 − 10⁻⁶` normal
/// quantile `z`; larger spectral values are possible, so margins are only
/// approximately standard.
pub fn sample_schlather(stream: &RngStream, f: &CorrelationFn, sites: &SiteSet, n: usize) -> Result<ObservationSet> {
    let factor = sites.correlation_factor(f)?;
    let d = sites.len();
    let envelope = TWO_PI_SQRT * ENVELOPE_NORMAL_QUANTILE;
    let mut rng = stream.rng();
    let mut z = vec![0.0; d];
    let mut w = vec![0.0; d];
    let mut data = Vec::with_capacity(n * d);
    for replicate in 0..n {
        let mut x = vec![0.0; d];
        let mut arrival = 0.0;
        let mut points = 0;
        loop {
            let e: f64 = Exp1.sample(&mut rng);
            arrival += e;
            let floor = x.iter().copied().fold(f64::INFINITY, f64::min);
            if envelope / arrival < floor {
                break;
            }
            points += 1;
            if points > MAX_POISSON_POINTS {
                return Err(Error::Generation(format!(
                    "Schlather replicate {replicate} did not stop within {MAX_POISSON_POINTS} points ({:?}, θ₁={}, θ₂={})",
                    f.kind, f.theta1, f.theta2
                )));
            }
            z.iter_mut().for_each(|zi| *zi = StandardNormal.sample(&mut rng));
            factor.lower_mul_into(&z, &mut w);
            for (xt, wt) in x.iter_mut().zip(&w) {
                let candidate = TWO_PI_SQRT * wt.max(0.0) / arrival;
                if candidate > *xt {
                    *xt = candidate;
                }
            }
        }
        data.extend_from_slice(&x);
    }
    finish(stream, "schlather", vec![f.theta1, f.theta2], n, d, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gof::ks_test;
    use crate::models::{CorrelationKind, MaxLinearMatrix};
    use crate::special_fn::{erf, FrechetLaw};

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = sample_frechet(&RngStream::new(1, 0), 1.0, 100).unwrap();
        let b = sample_frechet(&RngStream::new(1, 0), 1.0, 100).unwrap();
        let c = sample_frechet(&RngStream::new(1, 1), 1.0, 100).unwrap();
        let d = sample_frechet(&RngStream::new(1, 0).substream(3), 1.0, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn frechet_draws_pass_ks() {
        let xs = sample_frechet(&RngStream::new(2, 0), 2.5, 10_000).unwrap();
        let law = FrechetLaw::new(2.5).unwrap();
        assert!(ks_test(&xs, |x| law.cdf(x)).p_value > 0.01);
        assert!(sample_frechet(&RngStream::new(2, 0), 0.0, 1).is_err());
    }

    #[test]
    fn frechet_truncated_mean() {
        // E min(X, c) = ∫₀^c (1 − e^{−1/x}) dx, evaluated by quadrature.
        let c: f64 = 1e6;
        let exact = crate::special_fn::quad::integrate(&|t: f64| {
            // substitute x = e^t to resolve both ends
            let x = t.exp();
            -(-1.0 / x).exp_m1() * x
        }, (1e-12f64).ln(), c.ln(), 1e-13);
        let xs = sample_frechet(&RngStream::new(3, 0), 1.0, 200_000).unwrap();
        let clipped: Vec<f64> = xs.iter().map(|x| x.min(c)).collect();
        let n = clipped.len() as f64;
        let mean = clipped.iter().sum::<f64>() / n;
        let var = clipped.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - exact).abs() < 3.0 * (var / n).sqrt(), "mean {mean} vs {exact}");
    }

    #[test]
    fn positive_stable_laplace_transform() {
        for &alpha in &[0.3, 0.7] {
            let s = sample_positive_stable(&RngStream::new(4, 0), alpha, 1_000_000).unwrap();
            for &t in &[1.0f64, 4.0] {
                let vals: Vec<f64> = s.iter().map(|x| (-t * x).exp()).collect();
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                let target = (-t.powf(alpha)).exp();
                assert!((mean - target).abs() < 3.0 * (var / n).sqrt(), "alpha {alpha} t {t}: {mean} vs {target}");
            }
        }
        assert!(sample_positive_stable(&RngStream::new(4, 0), 1.0, 1).is_err());
        assert!(sample_positive_stable(&RngStream::new(4, 0), 0.0, 1).is_err());
    }

    #[test]
    fn logistic_margins_and_joint_cdf() {
        let params = LogisticParams::new(5.0, 0.7).unwrap();
        let obs = sample_logistic(&RngStream::new(5, 0), &params, 5, 10_000).unwrap();
        let law = FrechetLaw::new(5.0).unwrap();
        for j in 0..5 {
            assert!(ks_test(&obs.column(j), |x| law.cdf(x)).p_value > 0.01);
        }
        let obs = sample_logistic(&RngStream::new(6, 0), &params, 5, 100_000).unwrap();
        for &x in &[2.0, 5.0, 10.0, 20.0, 40.0] {
            let hits = obs.rows().filter(|r| r.iter().all(|v| *v <= x)).count() as f64;
            let p = (-5.0 * 5f64.powf(0.7) / x).exp();
            let n = obs.n() as f64;
            assert!((hits / n - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt(), "x={x}");
        }
    }

    #[test]
    fn logistic_near_independence_pair() {
        let params = LogisticParams::new(1.0, 0.999).unwrap();
        let obs = sample_logistic(&RngStream::new(7, 0), &params, 2, 100_000).unwrap();
        // P(max(X₁,X₂) ≤ 1) = exp(−ϑ); estimate ϑ from 1/max, which is Exp(ϑ).
        let inv: Vec<f64> = obs.rows().map(|r| 1.0 / r[0].max(r[1])).collect();
        let theta_hat = inv.len() as f64 / inv.iter().sum::<f64>();
        assert!((theta_hat - 2f64.powf(0.999)).abs() < 3.0 * theta_hat / (inv.len() as f64).sqrt());
    }

    #[test]
    fn max_linear_margins_and_comonotone_case() {
        let spec = MaxLinearSpec::new(vec![MaxLinearMatrix::new(vec![vec![2.0, 0.5], vec![0.3, 1.0], vec![1.0, 1.0]]).unwrap()], 0).unwrap();
        let obs = sample_max_linear(&RngStream::new(8, 0), &spec, 10_000).unwrap();
        for j in 0..3 {
            let law = FrechetLaw::new(spec.selected().margin_scale(j)).unwrap();
            assert!(ks_test(&obs.column(j), |x| law.cdf(x)).p_value > 0.01);
        }
        let single = MaxLinearSpec::new(vec![MaxLinearMatrix::new(vec![vec![1.0], vec![3.0], vec![0.5]]).unwrap()], 0).unwrap();
        let obs = sample_max_linear(&RngStream::new(9, 0), &single, 100).unwrap();
        for r in obs.rows() {
            assert!((r[1] / 3.0 - r[0]).abs() <= 1e-15 * r[0] && (r[2] / 0.5 - r[0]).abs() <= 1e-15 * r[0]);
        }
    }

    #[test]
    fn max_linear_joint_cdf() {
        let spec = MaxLinearSpec::new(vec![MaxLinearMatrix::cyclic_pairs()], 0).unwrap();
        let obs = sample_max_linear(&RngStream::new(10, 0), &spec, 100_000).unwrap();
        for &x in &[1.0, 3.0, 10.0] {
            let hits = obs.rows().filter(|r| r.iter().all(|v| *v <= x)).count() as f64;
            let n = obs.n() as f64;
            let p = (-3.0 / x).exp();
            assert!((hits / n - p).abs() < 3.0 * (p * (1.0 - p) / n).sqrt());
        }
    }

    #[test]
    fn gaussian_field_correlations() {
        let sites = SiteSet::new(vec![[0.0, 0.0], [30.0, 40.0], [100.0, 0.0]]).unwrap();
        let f = CorrelationFn::new(CorrelationKind::Stable, 100.0, 1.0).unwrap();
        let rows = sample_gaussian_field(&RngStream::new(11, 0), &f, &sites, 100_000).unwrap();
        let r = sites.correlation_matrix(&f).unwrap();
        let n = rows.len() as f64;
        for i in 0..3 {
            for j in 0..=i {
                let c = rows.iter().map(|w| w[i] * w[j]).sum::<f64>() / n;
                assert!((c - r.get(i, j)).abs() < 0.02, "({i},{j}) {c} vs {}", r.get(i, j));
            }
        }
    }

    #[test]
    fn gaussian_field_single_site_is_standard_normal() {
        let sites = SiteSet::new(vec![[1.0, 1.0]]).unwrap();
        let f = CorrelationFn::new(CorrelationKind::Cauchy, 1.0, 1.0).unwrap();
        let rows = sample_gaussian_field(&RngStream::new(12, 0), &f, &sites, 10_000).unwrap();
        let xs: Vec<f64> = rows.iter().map(|w| w[0]).collect();
        assert!(ks_test(&xs, |x| 0.5 * (1.0 + erf(x / 2f64.sqrt()))).p_value > 0.01);
    }

    #[test]
    fn gaussian_field_near_coincident_sites() {
        let sites = SiteSet::new(vec![[0.0, 0.0], [1e-9, 0.0]]).unwrap();
        let f = CorrelationFn::new(CorrelationKind::Stable, 100.0, 1.0).unwrap();
        let rows = sample_gaussian_field(&RngStream::new(13, 0), &f, &sites, 1000).unwrap();
        assert!(rows.iter().all(|w| (w[0] - w[1]).abs() < 1e-4));
    }

    #[test]
    fn schlather_margins_are_near_standard() {
        let sites = SiteSet::new(vec![[0.0, 0.0], [50.0, 0.0], [0.0, 80.0]]).unwrap();
        let f = CorrelationFn::new(CorrelationKind::Stable, 100.0, 1.0).unwrap();
        let obs = sample_schlather(&RngStream::new(14, 0), &f, &sites, 5000).unwrap();
        let law = FrechetLaw::standard();
        for j in 0..3 {
            assert!(ks_test(&obs.column(j), |x| law.cdf(x)).p_value > 0.005);
        }
    }

    #[test]
    fn observation_set_rejects_bad_cells() {
        let err = ObservationSet::new(2, 2, vec![1.0, 2.0, 0.0, 1.0], None).unwrap_err();
        assert!(err.to_string().contains("row 2, column 1"), "{err}");
        assert!(ObservationSet::new(1, 2, vec![1.0, f64::NAN], None).is_err());
        assert!(ObservationSet::new(1, 2, vec![1.0], None).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("obs.csv");
        let obs = sample_frechet(&RngStream::new(15, 0), 1.0, 12).unwrap();
        let set = ObservationSet::new(4, 3, obs, None).unwrap();
        set.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("site_1,site_2,site_3\n"));
        let back = ObservationSet::read_csv(&path).unwrap();
        assert_eq!(back.as_slice(), set.as_slice());
    }
}
