//! Derivative-free minimisation: Nelder–Mead on `ℝᵖ` and Halton points for
//! spreading multistarts over a box.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once `|f_worst − f_best| ≤ rel_tol·|f_best|` over the simplex.
    pub rel_tol: f64,
    pub max_evaluations: usize,
    /// Fresh simplices built around the incumbent after convergence.
    pub rebuilds: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, max_evaluations: 4000, rebuilds: 2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        self.points = idx.iter().map(|&i| self.points[i].clone()).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn spread_ok(&self, rel_tol: f64) -> bool {
        let best = self.values[0];
        let worst = *self.values.last().unwrap();
        best.is_finite() && (worst - best).abs() <= rel_tol * best.abs().max(f64::MIN_POSITIVE)
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t (b − a)
    a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect()
}

/// Minimises `f` from `x0` with an initial simplex of per-coordinate
/// offsets `step`. Non-finite values are treated as `+∞`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    options: &NelderMeadOptions,
) -> NelderMeadResult {
    let p = x0.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };

    let mut best_x = x0.to_vec();
    let mut best_v = eval(x0, &mut evaluations);
    if p == 0 {
        return NelderMeadResult { x: best_x, value: best_v, iterations: 0, evaluations, converged: true };
    }
    let mut iterations = 0;
    let mut converged = false;
    let mut scale = 1.0;

    for round in 0..=options.rebuilds {
        let mut simplex = Simplex { points: vec![best_x.clone()], values: vec![best_v] };
        for j in 0..p {
            let mut x = best_x.clone();
            x[j] += scale * step[j];
            let v = eval(&x, &mut evaluations);
            simplex.points.push(x);
            simplex.values.push(v);
        }
        simplex.order();
        let start_value = simplex.values[0];
        converged = false;

        while evaluations < options.max_evaluations {
            if simplex.spread_ok(options.rel_tol) {
                converged = true;
                break;
            }
            iterations += 1;
            let centroid: Vec<f64> = (0..p)
                .map(|j| simplex.points[..p].iter().map(|x| x[j]).sum::<f64>() / p as f64)
                .collect();
            let worst = simplex.points[p].clone();
            let reflected = affine(&centroid, &worst, -1.0);
            let fr = eval(&reflected, &mut evaluations);
            if fr < simplex.values[0] {
                let expanded = affine(&centroid, &worst, -2.0);
                let fe = eval(&expanded, &mut evaluations);
                if fe < fr {
                    simplex.points[p] = expanded;
                    simplex.values[p] = fe;
                } else {
                    simplex.points[p] = reflected;
                    simplex.values[p] = fr;
                }
            } else if fr < simplex.values[p - 1] {
                simplex.points[p] = reflected;
                simplex.values[p] = fr;
            } else {
                let (candidate, fc) = if fr < simplex.values[p] {
                    let c = affine(&centroid, &worst, -0.5);
                    let v = eval(&c, &mut evaluations);
                    (c, v)
                } else {
                    let c = affine(&centroid, &worst, 0.5);
                    let v = eval(&c, &mut evaluations);
                    (c, v)
                };
                if fc < fr.min(simplex.values[p]) {
                    simplex.points[p] = candidate;
                    simplex.values[p] = fc;
                } else {
                    let anchor = simplex.points[0].clone();
                    for i in 1..=p {
                        simplex.points[i] = affine(&anchor, &simplex.points[i], 0.5);
                        simplex.values[i] = eval(&simplex.points[i].clone(), &mut evaluations);
                    }
                }
            }
            simplex.order();
        }

        let improved = simplex.values[0] < best_v;
        if improved || round == 0 {
            best_x = simplex.points[0].clone();
            best_v = simplex.values[0];
        }
        if !converged {
            break;
        }
        let gain = start_value - simplex.values[0];
        if round > 0 && gain <= options.rel_tol * best_v.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        scale *= 0.1;
    }

    NelderMeadResult { x: best_x, value: best_v, iterations, evaluations, converged }
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

/// Radical inverse of `index` in `base`.
fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut result = 0.0;
    let mut f = 1.0 / base as f64;
    while index > 0 {
        result += f * (index % base) as f64;
        index /= base;
        f /= base as f64;
    }
    result
}

/// Point `index` (starting at 1) of the Halton sequence in `[0, 1)^dim`.
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton points limited to {} dimensions", PRIMES.len());
    PRIMES[..dim].iter().map(|&b| radical_inverse(index, b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &[0.5, 0.5], &NelderMeadOptions { rel_tol: 1e-14, max_evaluations: 10_000, rebuilds: 3 });
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn minimises_shifted_quadratic() {
        let q = |x: &[f64]| 3.0 + (x[0] - 2.0).powi(2) + 4.0 * (x[1] + 1.0).powi(2) + (x[2] - 0.5).powi(2);
        let r = nelder_mead(q, &[0.0, 0.0, 0.0], &[1.0; 3], &NelderMeadOptions::default());
        assert!(r.converged);
        assert!((r.value - 3.0).abs() < 1e-7);
    }

    #[test]
    fn never_worse_than_start() {
        let q = |x: &[f64]| (x[0] - 1.0).powi(2);
        let r = nelder_mead(q, &[1.0], &[0.3], &NelderMeadOptions::default());
        assert_eq!(r.value, 0.0);
        assert_eq!(r.x, vec![1.0]);
    }

    #[test]
    fn treats_non_finite_as_infinite() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.1).powi(2) + 1.0 };
        let r = nelder_mead(f, &[0.5], &[1.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.1).abs() < 1e-3);
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
        assert_eq!(halton(3, 1), vec![0.75]);
    }
}
