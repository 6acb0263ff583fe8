//! CRPS M-estimation: direction sets, max-linear projections, the
//! multistart simplex fit, and the sandwich covariance behind the
//! confidence intervals.

use std::cmp::Ordering;

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crps_core::objective_unchecked;
use crate::error::{Error, Result};
use crate::models::{Family, MaxLinearSpec, ParamBound, ParamSpace, TailModel};
use crate::numerics::{cholesky, symmetric_eigen_min, CompensatedSum, SymmetricMatrix};
use crate::optim::{halton, nelder_mead, NelderMeadOptions};
use crate::sampling::{ObservationSet, RngStream};
use crate::special_fn::gamma_half_unchecked;

/// Normal quantile used for the 95% intervals.
pub const Z_95: f64 = 1.96;

/// Smallest Monte Carlo size accepted for the meat matrix.
pub const MIN_MEAT_DRAWS: usize = 1000;

const DIRECTION_TAG: u64 = 0x6469_7273;
const MEAT_TAG: u64 = 0x6d65_6174;
const MEAT_CHUNK: usize = 256;

// ---------------------------------------------------------------------------
// Directions and projections

/// Finite set of directions in the open simplex. Rows are kept in a
/// canonical order determined by their content, so the order in which they
/// were supplied never affects any downstream reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    d: usize,
    values: Vec<f64>,
    seed: Option<RngStream>,
}

fn canonical_cmp(a: &[f64], b: &[f64]) -> Ordering {
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let by = |x: &[f64], y: &[f64]| {
        x.iter().zip(y).map(|(p, q)| p.total_cmp(q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    };
    by(&sa, &sb).then_with(|| by(a, b))
}

impl DirectionSet {
    /// Validates and canonically orders `rows`; each must be strictly
    /// positive and sum to one within `1e-12`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(rows, None)
    }

    fn build(mut rows: Vec<Vec<f64>>, seed: Option<RngStream>) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::Contract("direction set needs at least one non-empty row".into()));
        }
        for (u, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Contract(format!("direction {u} has {} coordinates, expected {d}", row.len())));
            }
            if row.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::Data(format!("direction {u} is not strictly positive")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Data(format!("direction {u} sums to {s}, not 1")));
            }
        }
        rows.sort_by(|a, b| canonical_cmp(a, b));
        Ok(Self { d, values: rows.concat(), seed })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, u: usize) -> &[f64] {
        &self.values[u * self.d..(u + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    pub fn seed(&self) -> Option<RngStream> {
        self.seed
    }

    /// Relabels coordinates so that new coordinate `k` is old coordinate `perm[k]`.
    pub fn permute_coordinates(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.d {
            return Err(Error::Contract("permutation length differs from dimension".into()));
        }
        let rows = self.rows().map(|r| perm.iter().map(|&p| r[p]).collect()).collect();
        Self::build(rows, self.seed)
    }
}

/// `count` iid uniform directions on the simplex: unit exponential vectors
/// divided by their sums.
pub fn build_direction_set(stream: &RngStream, d: usize, count: usize) -> Result<DirectionSet> {
    if d == 0 || count == 0 {
        return Err(Error::Contract(format!("direction set needs d ≥ 1 and count ≥ 1, got d={d}, count={count}")));
    }
    let mut rng = stream.rng();
    let rows = (0..count)
        .map(|_| {
            let e: Vec<f64> = (0..d).map(|_| Exp1.sample(&mut rng)).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x: f64| x / s).collect()
        })
        .collect();
    DirectionSet::build(rows, Some(*stream))
}

/// `n × |𝒰|` matrix of `M_u⁽ⁱ⁾ = maxⱼ Xⱼ⁽ⁱ⁾ / uⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ProjectionMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Contract(format!("{} values for a {rows}×{cols} projection matrix", values.len())));
        }
        if let Some(k) = values.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Data(format!("projection ({}, {}) is {}", k / cols, k % cols, values[k])));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, u: usize) -> f64 {
        self.values[i * self.cols + u]
    }

    pub fn column(&self, u: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, u)).collect()
    }
}

#[inline]
fn project_point(x: &[f64], u: &[f64]) -> f64 {
    x.iter().zip(u).map(|(a, b)| a / b).fold(0.0, f64::max)
}

pub fn project(data: &ObservationSet, dirs: &DirectionSet) -> Result<ProjectionMatrix> {
    if data.d() != dirs.dim() {
        return Err(Error::Contract(format!("data have {} columns but directions have dimension {}", data.d(), dirs.dim())));
    }
    let values: Vec<f64> = (0..data.n())
        .into_par_iter()
        .flat_map_iter(|i| {
            let x = data.row(i);
            dirs.rows().map(move |u| project_point(x, u))
        })
        .collect();
    ProjectionMatrix::new(data.n(), dirs.len(), values)
}

// ---------------------------------------------------------------------------
// Fit configuration and results

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Size of the direction set.
    pub directions: usize,
    /// Number of space-filling starting points.
    pub restarts: usize,
    pub rel_tol: f64,
    pub max_evaluations: usize,
    /// Monte Carlo size for the meat matrix.
    pub meat_draws: usize,
    pub intervals: bool,
    /// Optional extra starting point tried before the space-filling ones.
    pub start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            directions: 1000,
            restarts: 5,
            rel_tol: 1e-8,
            max_evaluations: 4000,
            meat_draws: 10_000,
            intervals: true,
            start: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub discarded_starts: usize,
    /// Best objective reached from each start, in start order.
    pub restart_objectives: Vec<f64>,
    /// Objective per candidate (finite parameter spaces).
    pub candidate_objectives: Vec<f64>,
    /// Candidates tied with the selected one (finite parameter spaces).
    pub tied_candidates: Vec<usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichCovariance {
    pub bread: SymmetricMatrix,
    pub meat: SymmetricMatrix,
    /// `H⁻¹ J H⁻¹ / n`
    pub asym_cov: SymmetricMatrix,
    pub meat_draws: usize,
    pub meat_seed: RngStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub param_names: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub n: usize,
    pub directions: usize,
    pub direction_seed: Option<RngStream>,
    pub diagnostics: FitDiagnostics,
    pub sandwich: Option<SandwichCovariance>,
    pub intervals: Option<Vec<Interval>>,
}

fn check_dims(data: &ObservationSet, dirs: &DirectionSet, model_dim: usize) -> Result<()> {
    if data.d() != model_dim {
        return Err(Error::Contract(format!("data have {} columns but the model has {model_dim} sites", data.d())));
    }
    if dirs.dim() != model_dim {
        return Err(Error::Contract(format!("directions have dimension {} but the model has {model_dim} sites", dirs.dim())));
    }
    Ok(())
}

fn objective_at(model: &TailModel, theta: &[f64], dirs: &DirectionSet, proj: &ProjectionMatrix) -> f64 {
    match model.v_values(theta, dirs) {
        Ok(v) if v.iter().all(|x| *x > 0.0 && x.is_finite()) => objective_unchecked(proj, &v),
        _ => f64::INFINITY,
    }
}

// ---------------------------------------------------------------------------
// Fitting

/// Minimises the CRPS objective over a continuous parameter space by
/// Nelder–Mead in unconstrained coordinates from several starting points.
/// No sandwich is attached; see [`estimate`].
pub fn fit_continuous(data: &ObservationSet, dirs: &DirectionSet, model: &TailModel, options: &FitOptions) -> Result<FitResult> {
    check_dims(data, dirs, model.dim())?;
    let bounds = match model.param_space() {
        ParamSpace::Continuous(b) => b,
        ParamSpace::Finite { .. } => return Err(Error::Contract("continuous fit requested for a finite parameter space".into())),
    };
    let proj = project(data, dirs)?;
    let to_theta = |y: &[f64]| -> Vec<f64> { bounds.iter().zip(y).map(|(b, &v)| b.from_unconstrained(v)).collect() };
    let to_y = |theta: &[f64]| -> Vec<f64> { bounds.iter().zip(theta).map(|(b, &t)| b.to_unconstrained(t)).collect() };
    let space = ParamSpace::Continuous(bounds.clone());
    let objective = |y: &[f64]| {
        let theta = to_theta(y);
        if !space.contains(&theta) {
            return f64::INFINITY;
        }
        objective_at(model, &theta, dirs, &proj)
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let mut diagnostics = FitDiagnostics::default();
    if let Some(s) = &options.start {
        if space.contains(s) {
            starts.push(s.clone());
        } else {
            diagnostics.warnings.push(format!("supplied start {s:?} lies outside the parameter space; ignored"));
        }
    }
    for k in 1..=options.restarts as u64 {
        let h = halton(k, bounds.len());
        starts.push(bounds.iter().zip(&h).map(|(b, t)| b.start[0] + t * (b.start[1] - b.start[0])).collect());
    }
    let step: Vec<f64> = bounds.iter().map(start_step).collect();
    let nm = NelderMeadOptions { rel_tol: options.rel_tol, max_evaluations: options.max_evaluations, ..Default::default() };

    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for (k, start) in starts.iter().enumerate() {
        let y0 = to_y(start);
        if !objective(&y0).is_finite() {
            diagnostics.discarded_starts += 1;
            diagnostics.warnings.push(format!("objective is not finite at start {k} ({start:?}); start discarded"));
            continue;
        }
        let r = nelder_mead(objective, &y0, &step, &nm);
        diagnostics.restarts += 1;
        diagnostics.iterations += r.iterations;
        diagnostics.evaluations += r.evaluations;
        diagnostics.restart_objectives.push(r.value);
        if best.as_ref().is_none_or(|b| r.value < b.1) {
            best = Some((r.x, r.value, r.converged));
        }
    }
    let (y, value, converged) =
        best.ok_or_else(|| Error::Numerical("objective is not finite at any starting point".into()))?;
    Ok(FitResult {
        family: model.family(),
        param_names: model.param_names(),
        theta_hat: to_theta(&y),
        objective: value,
        converged,
        n: data.n(),
        directions: dirs.len(),
        direction_seed: dirs.seed(),
        diagnostics,
        sandwich: None,
        intervals: None,
    })
}

fn start_step(b: &ParamBound) -> f64 {
    let w = (b.to_unconstrained(b.start[1]) - b.to_unconstrained(b.start[0])).abs() / 4.0;
    if w.is_finite() && w > 0.0 { w } else { 0.5 }
}

/// Scores every candidate and returns the minimiser; ties go to the lowest
/// index and are listed in the diagnostics.
pub fn fit_finite(data: &ObservationSet, dirs: &DirectionSet, spec: &MaxLinearSpec) -> Result<FitResult> {
    let model = TailModel::MaxLinear(spec.clone());
    check_dims(data, dirs, model.dim())?;
    let proj = project(data, dirs)?;
    let values: Vec<f64> = (0..spec.candidates.len())
        .map(|k| {
            let v = model.v_values(&[k as f64], dirs)?;
            crate::crps_core::crps_objective(&proj, &v)
        })
        .collect::<Result<_>>()?;
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (k, v)| if *v < values[b] { k } else { b });
    let tied: Vec<usize> = values.iter().enumerate().filter(|(k, v)| *k != best && **v == values[best]).map(|(k, _)| k).collect();
    let mut diagnostics = FitDiagnostics { candidate_objectives: values.clone(), ..Default::default() };
    if !tied.is_empty() {
        diagnostics.warnings.push(format!("candidate {best} tied with {tied:?}; lowest index kept"));
    }
    diagnostics.tied_candidates = tied;
    Ok(FitResult {
        family: Family::MaxLinear,
        param_names: model.param_names(),
        theta_hat: vec![best as f64],
        objective: values[best],
        converged: true,
        n: data.n(),
        directions: dirs.len(),
        direction_seed: dirs.seed(),
        diagnostics,
        sandwich: None,
        intervals: None,
    })
}

// ---------------------------------------------------------------------------
// Sandwich pieces

/// `H = √π Σ_u (2V(u))^{-3/2} ∇V(u) ∇V(u)ᵀ`, the Hessian at `θ` of the
/// expected objective `Σ_u E 𝔉(M_u, V_θ(u))`.
pub fn bread_from_gradients(v: &[f64], grads: &[Vec<f64>]) -> Result<SymmetricMatrix> {
    if v.len() != grads.len() || v.is_empty() {
        return Err(Error::Contract(format!("{} scales and {} gradients", v.len(), grads.len())));
    }
    let p = grads[0].len();
    let weights: Vec<f64> = v.iter().map(|&vu| crate::special_fn::SQRT_PI * (2.0 * vu).powf(-1.5)).collect();
    let h = SymmetricMatrix::from_fn(p, |a, b| {
        weights.iter().zip(grads).map(|(w, g)| w * g[a] * g[b]).collect::<CompensatedSum>().value()
    });
    if !h.is_finite() {
        return Err(Error::Numerical("bread matrix has non-finite entries".into()));
    }
    let rank_msg = format!("the gradients span fewer than {p} dimensions");
    cholesky(&h).map_err(|e| Error::SingularBread(format!("{e}; {rank_msg}")))?;
    let smallest = symmetric_eigen_min(&h);
    if smallest <= 1e-12 * h.trace() {
        return Err(Error::SingularBread(format!("smallest eigenvalue {smallest:e}; {rank_msg}")));
    }
    Ok(h)
}

pub fn bread_matrix(model: &TailModel, dirs: &DirectionSet, theta: &[f64]) -> Result<SymmetricMatrix> {
    let v = model.v_values(theta, dirs)?;
    let grads = model.v_gradients(theta, dirs)?;
    bread_from_gradients(&v, &grads)
}

/// Monte Carlo estimate of the score covariance `J` with entrywise
/// standard errors, plus the column means of `γ(1/2, V(u)/M_u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeatEstimate {
    pub meat: SymmetricMatrix,
    pub std_errors: SymmetricMatrix,
    pub g_means: Vec<f64>,
    pub g_std_errors: Vec<f64>,
    pub draws: usize,
}

/// `J = cov(s)` for the per-observation score
/// `s = Σ_u γ(1/2, V(u)/M_u) · 2∇V(u)/√V(u)` (the constant part of the
/// score drops out of the covariance), estimated from the rows of `sample`.
pub fn meat_from_sample(sample: &ObservationSet, dirs: &DirectionSet, v: &[f64], grads: &[Vec<f64>]) -> Result<MeatEstimate> {
    if v.len() != dirs.len() || grads.len() != dirs.len() {
        return Err(Error::Contract("scales and gradients must align with the direction set".into()));
    }
    if sample.d() != dirs.dim() {
        return Err(Error::Contract(format!("sample has {} columns, directions have dimension {}", sample.d(), dirs.dim())));
    }
    let p = grads.first().map(Vec::len).unwrap_or(0);
    let n_draws = sample.n();
    let loadings: Vec<Vec<f64>> = v.iter().zip(grads).map(|(vu, g)| g.iter().map(|x| 2.0 * x / vu.sqrt()).collect()).collect();
    let dir_rows: Vec<&[f64]> = dirs.rows().collect();

    struct Chunk {
        scores: Vec<Vec<f64>>,
        g_sum: Vec<f64>,
        g_sq: Vec<f64>,
    }
    let chunks: Vec<Chunk> = (0..n_draws.div_ceil(MEAT_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut chunk = Chunk { scores: Vec::new(), g_sum: vec![0.0; v.len()], g_sq: vec![0.0; v.len()] };
            for k in c * MEAT_CHUNK..((c + 1) * MEAT_CHUNK).min(n_draws) {
                let x = sample.row(k);
                let mut s = vec![0.0; p];
                for (u, dir) in dir_rows.iter().enumerate() {
                    let g = gamma_half_unchecked(v[u] / project_point(x, dir));
                    if !g.is_finite() {
                        return Err(Error::Data(format!("non-finite score term at draw {k}, direction {u}")));
                    }
                    chunk.g_sum[u] += g;
                    chunk.g_sq[u] += g * g;
                    for (sa, la) in s.iter_mut().zip(&loadings[u]) {
                        *sa += g * la;
                    }
                }
                chunk.scores.push(s);
            }
            Ok(chunk)
        })
        .collect::<Result<_>>()?;

    let nf = n_draws as f64;
    let mut g_sum = vec![0.0; v.len()];
    let mut g_sq = vec![0.0; v.len()];
    for c in &chunks {
        for u in 0..v.len() {
            g_sum[u] += c.g_sum[u];
            g_sq[u] += c.g_sq[u];
        }
    }
    let g_means: Vec<f64> = g_sum.iter().map(|s| s / nf).collect();
    let g_std_errors = g_means
        .iter()
        .zip(&g_sq)
        .map(|(m, sq)| (((sq - nf * m * m) / (nf - 1.0)).max(0.0) / nf).sqrt())
        .collect();

    let scores: Vec<&Vec<f64>> = chunks.iter().flat_map(|c| &c.scores).collect();
    let mean: Vec<f64> = (0..p).map(|a| scores.iter().map(|s| s[a]).collect::<CompensatedSum>().value() / nf).collect();
    let mut meat = SymmetricMatrix::zeros(p);
    let mut std_errors = SymmetricMatrix::zeros(p);
    for a in 0..p {
        for b in 0..=a {
            let prod: Vec<f64> = scores.iter().map(|s| (s[a] - mean[a]) * (s[b] - mean[b])).collect();
            let sum: f64 = prod.iter().copied().collect::<CompensatedSum>().value();
            let j = sum / (nf - 1.0);
            let pm = sum / nf;
            let var = prod.iter().map(|x| (x - pm).powi(2)).collect::<CompensatedSum>().value() / (nf - 1.0);
            meat.set(a, b, j);
            std_errors.set(a, b, (var / nf).sqrt());
        }
    }
    Ok(MeatEstimate { meat, std_errors, g_means, g_std_errors, draws: n_draws })
}

/// Simulates `draws` vectors from `model` at `θ` on `stream` and estimates `J`.
pub fn meat_matrix(model: &TailModel, dirs: &DirectionSet, theta: &[f64], draws: usize, stream: &RngStream) -> Result<MeatEstimate> {
    if draws < MIN_MEAT_DRAWS {
        return Err(Error::config("meat_draws", format!("must be at least {MIN_MEAT_DRAWS}, got {draws}")));
    }
    let v = model.v_values(theta, dirs)?;
    let grads = model.v_gradients(theta, dirs)?;
    let sample = model.sample(stream, theta, draws)?;
    meat_from_sample(&sample, dirs, &v, &grads)
}

/// `H⁻¹ J H⁻¹ / n` through the Cholesky factor of `H`.
pub fn sandwich_covariance(bread: &SymmetricMatrix, meat: &SymmetricMatrix, n: usize) -> Result<SymmetricMatrix> {
    let p = bread.order();
    if meat.order() != p || n == 0 {
        return Err(Error::Contract(format!("bread of order {p}, meat of order {}, n = {n}", meat.order())));
    }
    let factor = cholesky(bread).map_err(|e| Error::SingularBread(e.to_string()))?;
    let dense = meat.to_dense();
    // columns of H⁻¹ J
    let hj: Vec<Vec<f64>> = (0..p).map(|c| factor.solve(&dense.iter().map(|r| r[c]).collect::<Vec<_>>())).collect();
    // column r of J H⁻¹ is row r of H⁻¹ J
    let full: Vec<Vec<f64>> = (0..p).map(|r| factor.solve(&hj.iter().map(|col| col[r]).collect::<Vec<_>>())).collect();
    let cov = SymmetricMatrix::from_fn(p, |i, j| 0.5 * (full[i][j] + full[j][i]) / n as f64);
    if let Some(k) = (0..p).find(|&k| cov.get(k, k) < -1e-12) {
        return Err(Error::Numerical(format!("asymptotic variance {k} is negative ({:e})", cov.get(k, k))));
    }
    Ok(cov)
}

/// `θ̂ₖ ± 1.96 √cov_kk`.
pub fn confidence_intervals(theta: &[f64], cov: &SymmetricMatrix) -> Vec<Interval> {
    theta
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let half = Z_95 * cov.get(k, k).max(0.0).sqrt();
            Interval { lower: t - half, upper: t + half }
        })
        .collect()
}

/// Checks `J` is positive semidefinite up to `1e-10·trace`.
pub fn meat_is_psd(meat: &SymmetricMatrix) -> bool {
    symmetric_eigen_min(meat) >= -1e-10 * meat.trace().abs()
}

/// Directions, fit and (for converged continuous fits) the plug-in sandwich
/// at `θ̂`, all driven by substreams of `stream`.
pub fn estimate(data: &ObservationSet, model: &TailModel, options: &FitOptions, stream: &RngStream) -> Result<FitResult> {
    if data.d() != model.dim() {
        return Err(Error::Contract(format!("data have {} columns but the model has {} sites", data.d(), model.dim())));
    }
    let dirs = build_direction_set(&stream.substream(DIRECTION_TAG), model.dim(), options.directions)?;
    estimate_with_directions(data, model, options, &dirs, stream)
}

pub fn estimate_with_directions(
    data: &ObservationSet,
    model: &TailModel,
    options: &FitOptions,
    dirs: &DirectionSet,
    stream: &RngStream,
) -> Result<FitResult> {
    let mut fit = match model {
        TailModel::MaxLinear(spec) => return fit_finite(data, dirs, spec),
        _ => fit_continuous(data, dirs, model, options)?,
    };
    if fit.converged && options.intervals {
        let meat_stream = stream.substream(MEAT_TAG);
        let bread = bread_matrix(model, dirs, &fit.theta_hat)?;
        let meat = meat_matrix(model, dirs, &fit.theta_hat, options.meat_draws, &meat_stream)?;
        let asym_cov = sandwich_covariance(&bread, &meat.meat, data.n())?;
        fit.intervals = Some(confidence_intervals(&fit.theta_hat, &asym_cov));
        fit.sandwich = Some(SandwichCovariance { bread, meat: meat.meat, asym_cov, meat_draws: meat.draws, meat_seed: meat_stream });
    }
    Ok(fit)
}
