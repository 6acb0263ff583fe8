//! Tail dependence functions `V_θ` for the logistic, max-linear and
//! Schlather families, their parameter gradients, the isotropic correlation
//! functions driving the Schlather model, and dependence summaries.
//!
//! Every `V` here is homogeneous of order −1 and the joint law of the
//! underlying max-stable vector is `P(X ≤ x) = exp(−V(x))`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::DirectionSet;
use crate::numerics::{cholesky, Cholesky, SymmetricMatrix};
use crate::sampling::{self, ObservationSet, RngStream};
use crate::special_fn::{bessel_k, gamma, TWO_PI_SQRT};

/// Default Monte Carlo size for the Schlather tail function.
pub const DEFAULT_SCHLATHER_MC: usize = 5000;

/// Diagonal jitter tried once when a correlation matrix fails to factor.
pub const CHOLESKY_JITTER: f64 = 1e-10;

fn check_point(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::Contract(format!("point has {} coordinates, model has {dim}", x.len())));
    }
    if let Some(bad) = x.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("tail function needs strictly positive arguments, got {bad}")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Logistic

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub sigma: f64,
    pub alpha: f64,
}

impl LogisticParams {
    pub fn new(sigma: f64, alpha: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!("logistic sigma must be positive, got {sigma}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("logistic alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self { sigma, alpha })
    }

    pub fn from_slice(theta: &[f64]) -> Result<Self> {
        match theta {
            [sigma, alpha] => Self::new(*sigma, *alpha),
            _ => Err(Error::Contract(format!("logistic model takes 2 parameters, got {}", theta.len()))),
        }
    }
}

/// `ln Σᵢ xᵢ^{-1/α}` and the normalised weights `xᵢ^{-1/α} / Σ`.
///
/// Terms are accumulated in sorted order so the result is invariant under
/// permutations of `x`.
fn logistic_log_sum(alpha: f64, x: &[f64]) -> (f64, Vec<f64>) {
    let exps: Vec<f64> = x.iter().map(|&xi| -xi.ln() / alpha).collect();
    let peak = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut scaled: Vec<f64> = exps.iter().map(|&t| (t - peak).exp()).collect();
    let mut sorted = scaled.clone();
    sorted.sort_by(f64::total_cmp);
    let total: f64 = sorted.iter().sum();
    scaled.iter_mut().for_each(|w| *w /= total);
    (peak + total.ln(), scaled)
}

/// `V(x) = σ (Σ xᵢ^{-1/α})^α`. Coordinates may be `+∞` (marginalised out).
pub fn v_logistic(params: &LogisticParams, x: &[f64]) -> Result<f64> {
    check_point(x, x.len())?;
    let (log_sum, _) = logistic_log_sum(params.alpha, x);
    Ok(params.sigma * (params.alpha * log_sum).exp())
}

/// `(∂V/∂σ, ∂V/∂α)` of [`v_logistic`].
pub fn v_logistic_grad(params: &LogisticParams, x: &[f64]) -> Result<[f64; 2]> {
    check_point(x, x.len())?;
    let LogisticParams { sigma, alpha } = *params;
    let (log_sum, weights) = logistic_log_sum(alpha, x);
    let base = (alpha * log_sum).exp();
    let weighted_log: f64 = weights
        .iter()
        .zip(x)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, xi)| w * xi.ln())
        .sum();
    Ok([base, sigma * base * (log_sum + weighted_log / alpha)])
}

// ---------------------------------------------------------------------------
// Max-linear

/// Nonnegative `d × k` coefficient matrix of a max-linear model
/// `Xᵢ = maxⱼ aᵢⱼ Zⱼ` with independent standard 1-Fréchet `Zⱼ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MaxLinearMatrix {
    rows: Vec<Vec<f64>>,
}

impl MaxLinearMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || k == 0 {
            return Err(Error::Domain("max-linear matrix must be non-empty".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::Domain(format!("row {i} has {} columns, expected {k}", row.len())));
            }
            if row.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
                return Err(Error::Domain(format!("row {i} has a negative or non-finite entry")));
            }
            if row.iter().all(|a| *a == 0.0) {
                return Err(Error::Domain(format!("row {i} is identically zero")));
            }
        }
        Ok(Self { rows })
    }

    /// Three sites built from pairs of three factors, arranged cyclically:
    /// `X₁ = Z₁∨Z₂, X₂ = Z₁∨Z₃, X₃ = Z₂∨Z₃`.
    pub fn cyclic_pairs() -> Self {
        Self::new(vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
        ])
        .expect("valid matrix")
    }

    /// Three sites sharing one common factor:
    /// `X₁ = Z₁∨Z₂, X₂ = Z₁∨Z₃, X₃ = Z₁∨Z₄`. Its univariate and bivariate
    /// margins coincide with those of [`MaxLinearMatrix::cyclic_pairs`].
    pub fn star_pairs() -> Self {
        Self::new(vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
        ])
        .expect("valid matrix")
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn factors(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Fréchet scale of margin `i` (the row sum).
    pub fn margin_scale(&self, i: usize) -> f64 {
        self.rows[i].iter().sum()
    }

    #[inline]
    pub(crate) fn v_unchecked(&self, x: &[f64]) -> f64 {
        (0..self.factors())
            .map(|j| {
                self.rows
                    .iter()
                    .zip(x)
                    .map(|(row, xi)| row[j] / xi)
                    .fold(0.0, f64::max)
            })
            .sum()
    }
}

impl TryFrom<Vec<Vec<f64>>> for MaxLinearMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<MaxLinearMatrix> for Vec<Vec<f64>> {
    fn from(m: MaxLinearMatrix) -> Self {
        m.rows
    }
}

/// A finite list of candidate max-linear structures and the selected index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxLinearSpec {
    pub candidates: Vec<MaxLinearMatrix>,
    pub theta: usize,
}

impl MaxLinearSpec {
    pub fn new(candidates: Vec<MaxLinearMatrix>, theta: usize) -> Result<Self> {
        let Some(first) = candidates.first() else {
            return Err(Error::Domain("max-linear candidate list is empty".into()));
        };
        let d = first.dim();
        if let Some(bad) = candidates.iter().position(|c| c.dim() != d) {
            return Err(Error::Domain(format!("candidate {bad} has dimension {}, expected {d}", candidates[bad].dim())));
        }
        if theta >= candidates.len() {
            return Err(Error::Domain(format!("candidate index {theta} out of range 0..{}", candidates.len())));
        }
        Ok(Self { candidates, theta })
    }

    pub fn dim(&self) -> usize {
        self.candidates[0].dim()
    }

    pub fn selected(&self) -> &MaxLinearMatrix {
        &self.candidates[self.theta]
    }
}

/// `V(x) = Σⱼ maxᵢ aᵢⱼ / xᵢ` for the selected candidate.
pub fn v_max_linear(spec: &MaxLinearSpec, x: &[f64]) -> Result<f64> {
    check_point(x, spec.dim())?;
    Ok(spec.selected().v_unchecked(x))
}

// ---------------------------------------------------------------------------
// Correlation functions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    /// `exp[−(h/θ₁)^θ₂]`, `θ₂ ∈ (0, 2]`
    Stable,
    /// Whittle–Matérn with smoothness `θ₂`
    Matern,
    /// `(1 + (h/θ₁)²)^{−θ₂}`
    Cauchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationFn {
    pub kind: CorrelationKind,
    pub theta1: f64,
    pub theta2: f64,
}

impl CorrelationFn {
    pub fn new(kind: CorrelationKind, theta1: f64, theta2: f64) -> Result<Self> {
        if !(theta1 > 0.0) || !theta1.is_finite() {
            return Err(Error::Domain(format!("correlation range must be positive, got {theta1}")));
        }
        let ok = match kind {
            CorrelationKind::Stable => theta2 > 0.0 && theta2 <= 2.0,
            CorrelationKind::Matern | CorrelationKind::Cauchy => theta2 > 0.0 && theta2.is_finite(),
        };
        if !ok {
            return Err(Error::Domain(format!("shape {theta2} outside the domain of the {kind:?} correlation")));
        }
        Ok(Self { kind, theta1, theta2 })
    }

    pub fn eval(&self, h: f64) -> Result<f64> {
        correlation(self, h)
    }
}

pub fn correlation(f: &CorrelationFn, h: f64) -> Result<f64> {
    if !(h >= 0.0) {
        return Err(Error::Domain(format!("distance must be nonnegative, got {h}")));
    }
    if h == 0.0 {
        return Ok(1.0);
    }
    let (t1, t2) = (f.theta1, f.theta2);
    Ok(match f.kind {
        CorrelationKind::Stable => (-(h / t1).powf(t2)).exp(),
        CorrelationKind::Cauchy => (1.0 + (h / t1).powi(2)).powf(-t2),
        CorrelationKind::Matern => {
            let s = (2.0 * t2).sqrt() * h / t1;
            if s > 700.0 {
                0.0
            } else {
                let log_pre = t2 * s.ln() - gamma(t2).ln() - (t2 - 1.0) * std::f64::consts::LN_2;
                (log_pre.exp() * bessel_k(t2, s)?).min(1.0)
            }
        }
    })
}

// ---------------------------------------------------------------------------
// Sites and the Schlather model

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    coordinates: Vec<[f64; 2]>,
    labels: Vec<String>,
}

impl SiteSet {
    pub fn new(coordinates: Vec<[f64; 2]>) -> Result<Self> {
        let labels = (1..=coordinates.len()).map(|i| format!("site_{i}")).collect();
        Self::with_labels(coordinates, labels)
    }

    pub fn with_labels(coordinates: Vec<[f64; 2]>, labels: Vec<String>) -> Result<Self> {
        if coordinates.is_empty() {
            return Err(Error::Domain("site set is empty".into()));
        }
        if labels.len() != coordinates.len() {
            return Err(Error::Contract("one label per site is required".into()));
        }
        if coordinates.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::Domain("site coordinates must be finite".into()));
        }
        for i in 0..coordinates.len() {
            for j in 0..i {
                if coordinates[i] == coordinates[j] {
                    return Err(Error::Domain(format!("sites {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { coordinates, labels })
    }

    /// `count` sites drawn uniformly on `[0, extent]²`.
    pub fn uniform(stream: &RngStream, count: usize, extent: f64) -> Result<Self> {
        use rand::Rng;
        let mut rng = stream.rng();
        let coords = (0..count)
            .map(|_| [rng.random::<f64>() * extent, rng.random::<f64>() * extent])
            .collect();
        Self::new(coords)
    }

    pub fn len(&self) -> usize {
        self.coordinates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.is_empty()
    }

    pub fn coordinates(&self) -> &[[f64; 2]] {
        &self.coordinates
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coordinates[i], self.coordinates[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }

    pub fn max_distance(&self) -> f64 {
        let n = self.len();
        (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| self.distance(i, j))
            .fold(0.0, f64::max)
    }

    pub fn correlation_matrix(&self, f: &CorrelationFn) -> Result<SymmetricMatrix> {
        let mut m = SymmetricMatrix::identity(self.len());
        for i in 0..self.len() {
            for j in 0..i {
                m.set(i, j, correlation(f, self.distance(i, j))?);
            }
        }
        Ok(m)
    }

    /// Cholesky factor of the site correlation matrix. One diagonal jitter of
    /// [`CHOLESKY_JITTER`] is attempted before giving up.
    pub fn correlation_factor(&self, f: &CorrelationFn) -> Result<Cholesky> {
        let mut m = self.correlation_matrix(f)?;
        match cholesky(&m) {
            Ok(l) => Ok(l),
            Err(_) => {
                m.add_to_diagonal(CHOLESKY_JITTER);
                cholesky(&m).map_err(|e| {
                    Error::Numerical(format!(
                        "correlation matrix for {:?}(θ₁={}, θ₂={}) is not positive definite: {e}",
                        f.kind, f.theta1, f.theta2
                    ))
                })
            }
        }
    }
}

/// Schlather model evaluated by plain Monte Carlo over `mc_size` Gaussian
/// draws. The standard normals behind the draws are regenerated from
/// `base_seed` on every call, so evaluations at different `θ` share common
/// random numbers and `θ ↦ V_θ` is a deterministic function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchlatherModel {
    pub kind: CorrelationKind,
    pub sites: SiteSet,
    pub mc_size: usize,
    pub base_seed: u64,
}

/// Monte Carlo tail-function values with their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchlatherGradient {
    /// `grads[u][j] = ∂V(u)/∂θⱼ`
    pub grads: Vec<Vec<f64>>,
    pub steps: Vec<f64>,
    pub warnings: Vec<String>,
}

impl SchlatherModel {
    pub fn new(kind: CorrelationKind, sites: SiteSet, mc_size: usize, base_seed: u64) -> Result<Self> {
        if mc_size < 2 {
            return Err(Error::Domain("Schlather Monte Carlo size must be at least 2".into()));
        }
        Ok(Self { kind, sites, mc_size, base_seed })
    }

    pub fn dim(&self) -> usize {
        self.sites.len()
    }

    pub fn correlation_fn(&self, theta: &[f64]) -> Result<CorrelationFn> {
        match theta {
            [t1, t2] => CorrelationFn::new(self.kind, *t1, *t2),
            _ => Err(Error::Contract(format!("Schlather model takes 2 parameters, got {}", theta.len()))),
        }
    }

    /// Positive parts `√(2π)(w)₊` of the `mc_size` Gaussian draws under `θ`,
    /// row-major `mc_size × d`.
    fn spectral_draws(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let corr = self.correlation_fn(theta)?;
        let factor = self.sites.correlation_factor(&corr)?;
        let d = self.dim();
        let mut rng = RngStream::new(self.base_seed, 0).rng();
        let mut z = vec![0.0; d];
        let mut w = vec![0.0; d];
        let mut out = Vec::with_capacity(self.mc_size * d);
        for _ in 0..self.mc_size {
            z.iter_mut().for_each(|zi| *zi = StandardNormal.sample(&mut rng));
            factor.lower_mul_into(&z, &mut w);
            out.extend(w.iter().map(|&wi| TWO_PI_SQRT * wi.max(0.0)));
        }
        Ok(out)
    }

    /// `V_θ` at every point of `points` (each of length `d`, entries in `(0, ∞]`).
    pub fn v_batch(&self, theta: &[f64], points: &[Vec<f64>]) -> Result<McEstimate> {
        let d = self.dim();
        for p in points {
            check_point(p, d)?;
        }
        let draws = self.spectral_draws(theta)?;
        let k = self.mc_size as f64;
        let (values, std_errors) = points
            .par_iter()
            .map(|x| {
                let inv: Vec<f64> = x.iter().map(|xi| 1.0 / xi).collect();
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for row in draws.chunks_exact(d) {
                    let m = row.iter().zip(&inv).map(|(a, b)| a * b).fold(0.0, f64::max);
                    sum += m;
                    sum_sq += m * m;
                }
                let mean = sum / k;
                let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
                (mean, (var / k).sqrt())
            })
            .unzip();
        Ok(McEstimate { values, std_errors })
    }

    /// Central differences of [`SchlatherModel::v_batch`] under common random
    /// numbers, with step `1e-3·max(1, |θⱼ|)` shrunk to stay inside `space`.
    pub fn grad_batch(&self, theta: &[f64], points: &[Vec<f64>], space: &ParamSpace) -> Result<SchlatherGradient> {
        let p = theta.len();
        let mut grads = vec![vec![0.0; p]; points.len()];
        let mut steps = Vec::with_capacity(p);
        let mut warnings = Vec::new();
        for j in 0..p {
            let mut h = 1e-3 * theta[j].abs().max(1.0);
            let mut shrinks = 0;
            let (plus, minus) = loop {
                let mut plus = theta.to_vec();
                let mut minus = theta.to_vec();
                plus[j] += h;
                minus[j] -= h;
                if space.contains(&plus) && space.contains(&minus) {
                    break (plus, minus);
                }
                shrinks += 1;
                if shrinks > 40 {
                    return Err(Error::Numerical(format!("cannot place a difference step for parameter {j} inside the parameter space at {theta:?}")));
                }
                h *= 0.5;
            };
            if shrinks > 0 {
                warnings.push(format!("parameter {j}: difference step shrunk to {h:e} to stay inside the parameter space"));
            }
            let vp = self.v_batch(&plus, points)?.values;
            let vm = self.v_batch(&minus, points)?.values;
            for (g, (a, b)) in grads.iter_mut().zip(vp.iter().zip(&vm)) {
                g[j] = (a - b) / (2.0 * h);
            }
            steps.push(h);
        }
        Ok(SchlatherGradient { grads, steps, warnings })
    }
}

pub fn v_schlather(model: &SchlatherModel, theta: &[f64], x: &[f64]) -> Result<(f64, f64)> {
    let est = model.v_batch(theta, &[x.to_vec()])?;
    Ok((est.values[0], est.std_errors[0]))
}

pub fn v_schlather_grad(model: &SchlatherModel, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let space = TailModel::Schlather(model.clone()).param_space();
    let g = model.grad_batch(theta, &[x.to_vec()], &space)?;
    Ok(g.grads.into_iter().next().unwrap_or_default())
}

// ---------------------------------------------------------------------------
// Parameter spaces

/// One continuous coordinate of a parameter space. `upper = ∞` marks a
/// positive half-line (optimised on the log scale); otherwise the interval
/// is optimised through a scaled logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub upper_closed: bool,
    /// Box from which multistart points are drawn.
    pub start: [f64; 2],
}

impl ParamBound {
    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && (x < self.upper || (self.upper_closed && x == self.upper))
    }

    pub fn to_unconstrained(&self, x: f64) -> f64 {
        if self.upper.is_infinite() {
            (x - self.lower).ln()
        } else {
            let p = (x - self.lower) / (self.upper - self.lower);
            (p / (1.0 - p)).ln()
        }
    }

    pub fn from_unconstrained(&self, y: f64) -> f64 {
        if self.upper.is_infinite() {
            self.lower + y.exp()
        } else {
            let p = 1.0 / (1.0 + (-y).exp());
            self.lower + (self.upper - self.lower) * p
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamSpace {
    Continuous(Vec<ParamBound>),
    Finite { candidates: usize },
}

impl ParamSpace {
    pub fn dim(&self) -> usize {
        match self {
            ParamSpace::Continuous(b) => b.len(),
            ParamSpace::Finite { .. } => 1,
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        match self {
            ParamSpace::Continuous(bounds) => {
                theta.len() == bounds.len() && bounds.iter().zip(theta).all(|(b, &x)| b.contains(x))
            }
            ParamSpace::Finite { candidates } => {
                matches!(theta, [t] if t.fract() == 0.0 && *t >= 0.0 && (*t as usize) < *candidates)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// The unified model

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    MaxLinear,
    Schlather,
}

/// A parametric max-stable family on `d` sites.
#[derive(Debug, Clone, PartialEq)]
pub enum TailModel {
    Logistic { dim: usize },
    MaxLinear(MaxLinearSpec),
    Schlather(SchlatherModel),
}

impl TailModel {
    pub fn family(&self) -> Family {
        match self {
            TailModel::Logistic { .. } => Family::Logistic,
            TailModel::MaxLinear(_) => Family::MaxLinear,
            TailModel::Schlather(_) => Family::Schlather,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TailModel::Logistic { dim } => *dim,
            TailModel::MaxLinear(spec) => spec.dim(),
            TailModel::Schlather(m) => m.dim(),
        }
    }

    pub fn param_space(&self) -> ParamSpace {
        match self {
            TailModel::Logistic { .. } => ParamSpace::Continuous(vec![
                ParamBound { name: "sigma".into(), lower: 0.0, upper: f64::INFINITY, upper_closed: false, start: [1.0, 10.0] },
                ParamBound { name: "alpha".into(), lower: 0.0, upper: 1.0, upper_closed: false, start: [0.2, 0.9] },
            ]),
            TailModel::MaxLinear(spec) => ParamSpace::Finite { candidates: spec.candidates.len() },
            TailModel::Schlather(m) => {
                let reach = m.sites.max_distance().max(f64::MIN_POSITIVE);
                let shape = match m.kind {
                    CorrelationKind::Stable => ParamBound { name: "theta2".into(), lower: 0.0, upper: 2.0, upper_closed: true, start: [0.5, 1.8] },
                    _ => ParamBound { name: "theta2".into(), lower: 0.0, upper: f64::INFINITY, upper_closed: false, start: [0.5, 2.5] },
                };
                ParamSpace::Continuous(vec![
                    ParamBound { name: "theta1".into(), lower: 0.0, upper: f64::INFINITY, upper_closed: false, start: [0.2 * reach, 2.0 * reach] },
                    shape,
                ])
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.param_space() {
            ParamSpace::Continuous(b) => b.into_iter().map(|b| b.name).collect(),
            ParamSpace::Finite { .. } => vec!["candidate".into()],
        }
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.param_space().contains(theta) {
            Ok(())
        } else {
            Err(Error::Domain(format!("parameter {theta:?} lies outside the {:?} parameter space", self.family())))
        }
    }

    fn max_linear_at(&self, theta: &[f64]) -> Result<&MaxLinearMatrix> {
        match self {
            TailModel::MaxLinear(spec) => {
                self.check_theta(theta)?;
                Ok(&spec.candidates[theta[0] as usize])
            }
            _ => unreachable!(),
        }
    }

    /// `V_θ(x)`; Monte Carlo for the Schlather family.
    pub fn v(&self, theta: &[f64], x: &[f64]) -> Result<f64> {
        check_point(x, self.dim())?;
        match self {
            TailModel::Logistic { .. } => v_logistic(&LogisticParams::from_slice(theta)?, x),
            TailModel::MaxLinear(_) => Ok(self.max_linear_at(theta)?.v_unchecked(x)),
            TailModel::Schlather(m) => Ok(v_schlather(m, theta, x)?.0),
        }
    }

    /// `V_θ(u)` for every direction of `dirs`, in direction order.
    pub fn v_values(&self, theta: &[f64], dirs: &DirectionSet) -> Result<Vec<f64>> {
        if dirs.dim() != self.dim() {
            return Err(Error::Contract(format!("directions have dimension {}, model has {}", dirs.dim(), self.dim())));
        }
        match self {
            TailModel::Logistic { .. } => {
                let params = LogisticParams::from_slice(theta)?;
                dirs.rows().map(|u| v_logistic(&params, u)).collect()
            }
            TailModel::MaxLinear(_) => {
                let a = self.max_linear_at(theta)?;
                Ok(dirs.rows().map(|u| a.v_unchecked(u)).collect())
            }
            TailModel::Schlather(m) => {
                let points: Vec<Vec<f64>> = dirs.rows().map(<[f64]>::to_vec).collect();
                Ok(m.v_batch(theta, &points)?.values)
            }
        }
    }

    /// `∇_θ V_θ(u)` for every direction, as `|𝒰|` rows of length `p`.
    pub fn v_gradients(&self, theta: &[f64], dirs: &DirectionSet) -> Result<Vec<Vec<f64>>> {
        match self {
            TailModel::Logistic { .. } => {
                let params = LogisticParams::from_slice(theta)?;
                dirs.rows().map(|u| v_logistic_grad(&params, u).map(|g| g.to_vec())).collect()
            }
            TailModel::MaxLinear(_) => Err(Error::Contract("max-linear candidates have no parameter gradient".into())),
            TailModel::Schlather(m) => {
                let points: Vec<Vec<f64>> = dirs.rows().map(<[f64]>::to_vec).collect();
                Ok(m.grad_batch(theta, &points, &self.param_space())?.grads)
            }
        }
    }

    /// `n` independent draws from the model at `θ`.
    pub fn sample(&self, stream: &RngStream, theta: &[f64], n: usize) -> Result<ObservationSet> {
        self.check_theta(theta)?;
        match self {
            TailModel::Logistic { dim } => {
                sampling::sample_logistic(stream, &LogisticParams::from_slice(theta)?, *dim, n)
            }
            TailModel::MaxLinear(spec) => {
                let chosen = MaxLinearSpec { candidates: spec.candidates.clone(), theta: theta[0] as usize };
                sampling::sample_max_linear(stream, &chosen, n)
            }
            TailModel::Schlather(m) => sampling::sample_schlather(stream, &m.correlation_fn(theta)?, &m.sites, n),
        }
    }

    /// True when every margin is standard 1-Fréchet at `θ`.
    pub fn has_standard_margins(&self, theta: &[f64]) -> Result<bool> {
        Ok(match self {
            TailModel::Logistic { .. } => LogisticParams::from_slice(theta)?.sigma == 1.0,
            TailModel::MaxLinear(_) => {
                let a = self.max_linear_at(theta)?;
                (0..a.dim()).all(|i| (a.margin_scale(i) - 1.0).abs() <= 1e-12)
            }
            TailModel::Schlather(_) => true,
        })
    }
}

// ---------------------------------------------------------------------------
// Dependence summaries

/// `ϑ(D) = V_θ(1, …, 1)`.
pub fn extremal_coefficient(model: &TailModel, theta: &[f64]) -> Result<f64> {
    model.v(theta, &vec![1.0; model.dim()])
}

/// `2 − V_θ` of the bivariate margin at sites `i` and `j`, evaluated at
/// unit arguments; requires standard 1-Fréchet margins.
pub fn covariation(model: &TailModel, theta: &[f64], i: usize, j: usize) -> Result<f64> {
    let d = model.dim();
    if i >= d || j >= d || i == j {
        return Err(Error::Contract(format!("site pair ({i}, {j}) invalid for dimension {d}")));
    }
    if !model.has_standard_margins(theta)? {
        return Err(Error::Contract("co-variation needs standard 1-Fréchet margins".into()));
    }
    let mut x = vec![f64::INFINITY; d];
    x[i] = 1.0;
    x[j] = 1.0;
    Ok((2.0 - model.v(theta, &x)?).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_grad(params: LogisticParams, x: &[f64]) -> [f64; 2] {
        let hs = 1e-6 * params.sigma.max(1.0);
        let ha = 1e-6;
        let f = |s: f64, a: f64| v_logistic(&LogisticParams { sigma: s, alpha: a }, x).unwrap();
        [
            (f(params.sigma + hs, params.alpha) - f(params.sigma - hs, params.alpha)) / (2.0 * hs),
            (f(params.sigma, params.alpha + ha) - f(params.sigma, params.alpha - ha)) / (2.0 * ha),
        ]
    }

    #[test]
    fn logistic_values() {
        let p = LogisticParams::new(5.0, 0.7).unwrap();
        assert_relative_eq!(v_logistic(&p, &[1.0; 5]).unwrap(), 5.0 * 5f64.powf(0.7), max_relative = 1e-14);
        assert!((v_logistic(&p, &[1.0; 5]).unwrap() - 15.425_846_3).abs() < 1e-6);
        let indep = LogisticParams::new(2.0, 1.0).unwrap();
        assert_relative_eq!(v_logistic(&indep, &[1.0, 2.0, 4.0]).unwrap(), 2.0 * 1.75, max_relative = 1e-14);
        let half = LogisticParams::new(1.0, 0.5).unwrap();
        assert_relative_eq!(v_logistic(&half, &[1.0, 1.0]).unwrap(), 2f64.sqrt(), max_relative = 1e-14);
        assert!(v_logistic(&p, &[1.0, 0.0]).is_err());
        assert!(LogisticParams::new(1.0, 0.0).is_err());
        assert!(LogisticParams::new(-1.0, 0.5).is_err());
    }

    #[test]
    fn logistic_gradient() {
        let p = LogisticParams::new(5.0, 0.7).unwrap();
        let x = [1.0; 5];
        let g = v_logistic_grad(&p, &x).unwrap();
        assert_relative_eq!(g[0], v_logistic(&p, &x).unwrap() / 5.0, max_relative = 1e-14);
        let fd = fd_grad(p, &x);
        assert_relative_eq!(g[1], fd[1], max_relative = 1e-6);

        let p = LogisticParams::new(1.0, 0.3).unwrap();
        let x = [1.0, 2.0, 3.0];
        let g = v_logistic_grad(&p, &x).unwrap();
        let fd = fd_grad(p, &x);
        assert_relative_eq!(g[0], fd[0], max_relative = 1e-6);
        assert_relative_eq!(g[1], fd[1], max_relative = 1e-6);
    }

    #[test]
    fn logistic_gradient_random_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = LogisticParams::new(rng.random_range(0.5..20.0), rng.random_range(0.1..0.9)).unwrap();
            let d = rng.random_range(2..8);
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..1.0)).collect();
            let g = v_logistic_grad(&p, &x).unwrap();
            let fd = fd_grad(p, &x);
            for k in 0..2 {
                assert!((g[k] - fd[k]).abs() <= 1e-5 * g[k].abs().max(1e-8), "{p:?} {x:?} {g:?} {fd:?}");
            }
        }
    }

    #[test]
    fn max_linear_values() {
        let b = MaxLinearSpec::new(vec![MaxLinearMatrix::cyclic_pairs(), MaxLinearMatrix::star_pairs()], 0).unwrap();
        let c = MaxLinearSpec { theta: 1, ..b.clone() };
        assert_eq!(v_max_linear(&b, &[1.0; 3]).unwrap(), 3.0);
        assert_eq!(v_max_linear(&c, &[1.0; 3]).unwrap(), 4.0);
        assert_eq!(v_max_linear(&b, &[1.0 / 3.0; 3]).unwrap(), 9.0);
        assert!(v_max_linear(&b, &[1.0; 2]).is_err());
        assert!(MaxLinearMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).is_err());
        assert!(MaxLinearMatrix::new(vec![vec![1.0, -1.0]]).is_err());
        assert!(MaxLinearSpec::new(vec![MaxLinearMatrix::cyclic_pairs()], 1).is_err());
    }

    #[test]
    fn correlation_values() {
        let st = CorrelationFn::new(CorrelationKind::Stable, 100.0, 1.0).unwrap();
        assert_eq!(correlation(&st, 0.0).unwrap(), 1.0);
        assert_relative_eq!(correlation(&st, 100.0).unwrap(), (-1.0f64).exp(), max_relative = 1e-15);
        let ca = CorrelationFn::new(CorrelationKind::Cauchy, 1.0, 1.0).unwrap();
        assert_eq!(correlation(&ca, 1.0).unwrap(), 0.5);
        // Matérn with ν = 1/2 is the exponential correlation exp(−h/θ₁).
        let ma = CorrelationFn::new(CorrelationKind::Matern, 3.0, 0.5).unwrap();
        for &h in &[0.1, 1.0, 4.0, 20.0] {
            assert_relative_eq!(correlation(&ma, h).unwrap(), (-h / 3.0).exp(), max_relative = 1e-9);
        }
        // ν = 3/2: (1 + √3 h/θ₁) exp(−√3 h/θ₁)
        let ma = CorrelationFn::new(CorrelationKind::Matern, 2.0, 1.5).unwrap();
        for &h in &[0.2, 1.0, 5.0] {
            let s = 3f64.sqrt() * h / 2.0;
            assert_relative_eq!(correlation(&ma, h).unwrap(), (1.0 + s) * (-s).exp(), max_relative = 1e-9);
        }
        assert!(CorrelationFn::new(CorrelationKind::Stable, 1.0, 2.5).is_err());
        assert!(CorrelationFn::new(CorrelationKind::Stable, 0.0, 1.0).is_err());
        assert!(CorrelationFn::new(CorrelationKind::Cauchy, 1.0, 0.0).is_err());
        assert!(correlation(&st, -1.0).is_err());
    }

    #[test]
    fn logistic_extremal_coefficient_is_power_of_dimension() {
        for d in 2..=10 {
            for k in 1..=9 {
                let alpha = k as f64 / 10.0;
                let model = TailModel::Logistic { dim: d };
                let theta = extremal_coefficient(&model, &[1.0, alpha]).unwrap();
                assert_relative_eq!(theta, (d as f64).powf(alpha), max_relative = 1e-13);
            }
        }
        let model = TailModel::Logistic { dim: 5 };
        assert!((extremal_coefficient(&model, &[1.0, 0.7]).unwrap() - 3.085_169_3).abs() < 1e-6);
    }

    #[test]
    fn max_linear_raw_extremal_coefficient() {
        let spec = MaxLinearSpec::new(vec![MaxLinearMatrix::cyclic_pairs()], 0).unwrap();
        assert_eq!(extremal_coefficient(&TailModel::MaxLinear(spec), &[0.0]).unwrap(), 3.0);
    }

    #[test]
    fn covariation_extremes() {
        let complete = MaxLinearSpec::new(vec![MaxLinearMatrix::new(vec![vec![1.0], vec![1.0]]).unwrap()], 0).unwrap();
        assert_eq!(covariation(&TailModel::MaxLinear(complete), &[0.0], 0, 1).unwrap(), 1.0);
        let indep = MaxLinearSpec::new(vec![MaxLinearMatrix::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()], 0).unwrap();
        assert_eq!(covariation(&TailModel::MaxLinear(indep), &[0.0], 0, 1).unwrap(), 0.0);
        let logistic = TailModel::Logistic { dim: 4 };
        assert_relative_eq!(covariation(&logistic, &[1.0, 0.6], 0, 3).unwrap(), 2.0 - 2f64.powf(0.6), max_relative = 1e-14);
        assert!(covariation(&logistic, &[2.0, 0.6], 0, 3).is_err());
        assert!(covariation(&logistic, &[1.0, 0.6], 1, 1).is_err());
    }

    #[test]
    fn standard_margin_bounds_hold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let model = TailModel::Logistic { dim: 4 };
        for _ in 0..100 {
            let alpha = rng.random_range(0.05..1.0);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..10.0)).collect();
            let v = model.v(&[1.0, alpha], &x).unwrap();
            let lo = x.iter().map(|a| 1.0 / a).fold(0.0, f64::max);
            let hi: f64 = x.iter().map(|a| 1.0 / a).sum();
            assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn homogeneity_exact_families() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let b = TailModel::MaxLinear(MaxLinearSpec::new(vec![MaxLinearMatrix::cyclic_pairs()], 0).unwrap());
        for _ in 0..100 {
            let r = rng.random_range(0.1..10.0);
            let theta = [rng.random_range(0.5..20.0), rng.random_range(0.1..0.95)];
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..5.0)).collect();
            let rx: Vec<f64> = x.iter().map(|a| a * r).collect();
            let l = TailModel::Logistic { dim: 3 };
            assert_relative_eq!(l.v(&theta, &rx).unwrap() * r, l.v(&theta, &x).unwrap(), max_relative = 1e-10);
            assert_relative_eq!(b.v(&[0.0], &rx).unwrap() * r, b.v(&[0.0], &x).unwrap(), max_relative = 1e-10);
        }
    }

    #[test]
    fn param_transforms_round_trip() {
        let pos = ParamBound { name: "s".into(), lower: 0.0, upper: f64::INFINITY, upper_closed: false, start: [1.0, 2.0] };
        let unit = ParamBound { name: "a".into(), lower: 0.0, upper: 2.0, upper_closed: true, start: [0.5, 1.5] };
        for &x in &[1e-3, 0.7, 1.0, 1.9] {
            assert_relative_eq!(pos.from_unconstrained(pos.to_unconstrained(x)), x, max_relative = 1e-13);
            assert_relative_eq!(unit.from_unconstrained(unit.to_unconstrained(x)), x, max_relative = 1e-12);
        }
        assert!(unit.contains(2.0) && !unit.contains(0.0) && !pos.contains(-1.0));
    }
}
