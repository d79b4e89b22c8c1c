//! Multi-start minimization of circuit costs.
//!
//! Three local methods are available: Nelder–Mead, a projected quasi-Newton
//! descent with Armijo backtracking, and a hybrid that explores with
//! Nelder–Mead before polishing with gradients. Restarts run on the rayon
//! pool with sub-seeds derived from one 64-bit seed, so results do not
//! depend on the thread count.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::{CircuitParams, Template};
use crate::cost::ExactCost;
use crate::error::{Error, Result};

/// Scalar objective over a flat parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Value and gradient. The default uses fourth-order central differences.
    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let f0 = self.value(x);
        let h = 1e-5;
        let mut y = x.to_vec();
        let g = (0..x.len())
            .map(|i| {
                let mut at = |d: f64| {
                    y[i] = x[i] + d;
                    let v = self.value(&y);
                    y[i] = x[i];
                    v
                };
                (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
            })
            .collect();
        (f0, g)
    }

    fn has_exact_gradient(&self) -> bool {
        false
    }
}

/// Linear-estimator BMSE of a template with exact gradients.
pub struct CircuitObjective<'a> {
    pub cost: &'a ExactCost<'a>,
    pub template: Template,
}

impl Objective for CircuitObjective<'_> {
    fn dim(&self) -> usize {
        self.template.parameter_count()
    }

    fn value(&self, x: &[f64]) -> f64 {
        CircuitParams::from_angles(self.template, x, 0.0)
            .and_then(|p| self.cost.evaluate(&p))
            .map_or(f64::INFINITY, |r| r.bmse)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.cost.value_and_gradient(self.template, x) {
            Ok(r) => (r.cost, r.gradient),
            Err(_) => (f64::INFINITY, vec![0.0; x.len()]),
        }
    }

    fn has_exact_gradient(&self) -> bool {
        true
    }
}

/// Any closure as an objective with finite-difference gradients.
pub struct FnObjective<F: Fn(&[f64]) -> f64 + Sync> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    NelderMead,
    Gradient,
    Hybrid,
}

/// Cumulative interaction budget `Σ θ_OAT ≤ max` on a subset of parameters,
/// which are also kept non-negative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleBudget {
    pub indices: Vec<usize>,
    pub max: f64,
}

/// Feasible set, start points and the objective.
pub struct OptimizationProblem<'a> {
    pub objective: &'a dyn Objective,
    pub bounds: Vec<(f64, f64)>,
    pub budget: Option<AngleBudget>,
    /// Deterministic starts tried before the random ones.
    pub warm_starts: Vec<Vec<f64>>,
    /// Used to break ties between equal-cost optima.
    pub interaction_indices: Vec<usize>,
}

impl<'a> OptimizationProblem<'a> {
    pub fn new(objective: &'a dyn Objective) -> Self {
        let n = objective.dim();
        Self {
            objective,
            bounds: vec![(-PI, PI); n],
            budget: None,
            warm_starts: Vec::new(),
            interaction_indices: Vec::new(),
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        for (v, &(lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
        if let Some(b) = &self.budget {
            let mut sub: Vec<f64> = b.indices.iter().map(|&i| x[i].max(0.0)).collect();
            if sub.iter().sum::<f64>() > b.max {
                project_simplex(&mut sub, b.max);
            }
            for (&i, v) in b.indices.iter().zip(sub) {
                x[i] = v;
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.objective.dim();
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.bounds.len(),
            });
        }
        if self.bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
            return Err(Error::InvalidArgument("empty parameter interval".into()));
        }
        if let Some(b) = &self.budget {
            if b.indices.iter().any(|&i| i >= n) || !(b.max >= 0.0) {
                return Err(Error::InvalidArgument("invalid angle budget".into()));
            }
        }
        if let Some(w) = self.warm_starts.iter().find(|w| w.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: w.len(),
            });
        }
        Ok(())
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = s}`.
fn project_simplex(x: &mut [f64], s: f64) {
    let mut u: Vec<f64> = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (k, &v) in u.iter().enumerate() {
        cum += v;
        let t = (cum - s) / (k + 1) as f64;
        if v - t > 0.0 {
            tau = t;
        }
    }
    for v in x.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    pub n_starts: usize,
    pub seed: u64,
    pub method: Method,
    pub max_iters: usize,
    pub tol: f64,
}

impl OptimizeOptions {
    /// Restart budget for a template: 32 up to four layers, 128 beyond.
    pub fn default_starts(template: Template) -> usize {
        if template.n_en + template.n_de <= 4 {
            32
        } else {
            128
        }
    }

    pub fn for_template(template: Template, seed: u64) -> Self {
        Self {
            n_starts: Self::default_starts(template),
            seed,
            method: Method::Hybrid,
            max_iters: 400,
            tol: 1e-12,
        }
    }
}

/// Local search outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalResult {
    pub x: Vec<f64>,
    pub cost: f64,
    /// Best cost after each iteration.
    pub trace: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_x: Vec<f64>,
    pub best_cost: f64,
    /// Trace of the winning restart.
    pub trace: Vec<f64>,
    /// Final cost of every restart, in start order.
    pub restart_costs: Vec<f64>,
    /// Traces of every restart, in start order.
    pub traces: Vec<Vec<f64>>,
    pub restarts_used: usize,
    pub seed: u64,
}

impl OptimizationResult {
    /// CSV with columns `restart,iter,cost`.
    pub fn traces_csv(&self) -> String {
        let mut out = String::from("restart,iter,cost\n");
        for (r, t) in self.traces.iter().enumerate() {
            for (i, c) in t.iter().enumerate() {
                out.push_str(&format!("{r},{i},{c:.17e}\n"));
            }
        }
        out
    }
}

/// Sub-seeded generator for restart `index`.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Multi-start minimization.
pub fn optimize(problem: &OptimizationProblem<'_>, opts: &OptimizeOptions) -> Result<OptimizationResult> {
    problem.validate()?;
    if opts.n_starts == 0 {
        return Err(Error::InvalidArgument("n_starts must be at least 1".into()));
    }
    let n = problem.objective.dim();
    let starts: Vec<Vec<f64>> = (0..opts.n_starts)
        .map(|i| {
            let mut x = match problem.warm_starts.get(i) {
                Some(w) => w.clone(),
                None => {
                    let mut rng = restart_rng(opts.seed, i);
                    (0..n).map(|_| rng.random_range(-FRAC_PI_2..FRAC_PI_2)).collect()
                }
            };
            problem.project(&mut x);
            x
        })
        .collect();
    let runs: Vec<LocalResult> = starts
        .par_iter()
        .map(|x0| local_search(problem, x0, opts))
        .collect();
    let magnitude = |x: &[f64]| -> f64 { problem.interaction_indices.iter().map(|&i| x[i].abs()).sum() };
    let mut best: Option<usize> = None;
    for (i, r) in runs.iter().enumerate() {
        if !r.cost.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let cb = runs[b].cost;
                let tie = (r.cost - cb).abs() <= 1e-12 * cb.abs().max(1e-300);
                if (!tie && r.cost < cb) || (tie && magnitude(&r.x) < magnitude(&runs[b].x)) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    let b = best.ok_or_else(|| {
        Error::OptimizationFailed(format!("all {} starts produced non-finite costs", runs.len()))
    })?;
    Ok(OptimizationResult {
        best_x: runs[b].x.clone(),
        best_cost: runs[b].cost,
        trace: runs[b].trace.clone(),
        restart_costs: runs.iter().map(|r| r.cost).collect(),
        traces: runs.iter().map(|r| r.trace.clone()).collect(),
        restarts_used: runs.len(),
        seed: opts.seed,
    })
}

/// One local search from `x0` with the configured method.
pub fn local_search(problem: &OptimizationProblem<'_>, x0: &[f64], opts: &OptimizeOptions) -> LocalResult {
    if x0.is_empty() {
        let c = problem.objective.value(x0);
        return LocalResult {
            x: Vec::new(),
            cost: c,
            trace: vec![c],
        };
    }
    match opts.method {
        Method::NelderMead => nelder_mead(problem, x0, opts.max_iters * x0.len().max(1), opts.tol),
        Method::Gradient => projected_descent(problem, x0, opts.max_iters, opts.tol),
        Method::Hybrid => {
            let explore = nelder_mead(problem, x0, 40 * x0.len(), 1e-6);
            let mut polish = projected_descent(problem, &explore.x, opts.max_iters, opts.tol);
            let mut trace = explore.trace;
            let last = *trace.last().unwrap_or(&f64::INFINITY);
            trace.extend(polish.trace.iter().map(|c| c.min(last)));
            if explore.cost < polish.cost {
                polish.x = explore.x;
                polish.cost = explore.cost;
            }
            polish.trace = trace;
            polish
        }
    }
}

/// Nelder–Mead with dimension-adaptive coefficients; every trial point is
/// projected onto the feasible set.
pub fn nelder_mead(problem: &OptimizationProblem<'_>, x0: &[f64], max_evals: usize, tol: f64) -> LocalResult {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let f = |x: &[f64]| {
        let v = problem.objective.value(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let feasible = |mut x: Vec<f64>| {
        problem.project(&mut x);
        x
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let base = feasible(x0.to_vec());
    simplex.push((base.clone(), f(&base)));
    for i in 0..n {
        let mut y = base.clone();
        y[i] += if y[i] > 0.0 { -0.3 } else { 0.3 };
        let y = feasible(y);
        let fy = f(&y);
        simplex.push((y, fy));
    }
    let mut evals = n + 1;
    let mut trace = Vec::new();
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .flat_map(|(y, _)| y.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if spread <= tol * (simplex[0].1.abs() + tol) && size < 1e-8 {
            break;
        }
        if size < 1e-12 {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(y, _)| y[j]).sum::<f64>() / nf)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            feasible(
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect(),
            )
        };
        let xr = along(alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = along(alpha * beta);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(alpha * gamma);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(-gamma);
                let fc = f(&xc);
                (xc, fc)
            };
            evals += 1;
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for item in simplex.iter_mut().skip(1) {
                    let y = feasible(
                        best.iter()
                            .zip(&item.0)
                            .map(|(b, v)| b + delta * (v - b))
                            .collect(),
                    );
                    let fy = f(&y);
                    *item = (y, fy);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, cost) = simplex.swap_remove(0);
    trace.push(cost);
    LocalResult { x, cost, trace }
}

/// Projected descent along BFGS-scaled directions with Armijo backtracking.
/// The inverse-Hessian estimate is reset whenever the projected step stops
/// being a descent direction.
pub fn projected_descent(problem: &OptimizationProblem<'_>, x0: &[f64], max_iters: usize, tol: f64) -> LocalResult {
    let n = x0.len();
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let (mut fx, g0) = problem.objective.value_and_gradient(&x);
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut trace = vec![fx];
    if !fx.is_finite() {
        return LocalResult { x, cost: fx, trace };
    }
    for _ in 0..max_iters {
        let mut d = -(&h * &g);
        if g.dot(&d) >= 0.0 {
            h.fill_with_identity();
            d = -g.clone();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xn: Vec<f64> = x.iter().zip(d.iter()).map(|(a, b)| a + t * b).collect();
            problem.project(&mut xn);
            let step = DVector::from_iterator(n, xn.iter().zip(&x).map(|(a, b)| a - b));
            let decrease = g.dot(&step);
            if decrease >= 0.0 {
                t *= 0.5;
                continue;
            }
            let fnew = problem.objective.value(&xn);
            if fnew <= fx + 1e-4 * decrease {
                accepted = Some((xn, fnew, step));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, _, s)) = accepted else {
            if h != DMatrix::<f64>::identity(n, n) {
                h.fill_with_identity();
                continue;
            }
            break;
        };
        let (fnew, gn) = problem.objective.value_and_gradient(&xn);
        let gn = DVector::from_vec(gn);
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let df = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        trace.push(fx);
        if df <= tol * (fx.abs() + tol) && s.amax() < 1e-9 {
            break;
        }
        // projected gradient stationarity
        let mut probe: Vec<f64> = x.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
        problem.project(&mut probe);
        let pg = probe.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        if pg < 1e-11 {
            break;
        }
    }
    LocalResult { x, cost: fx, trace }
}

/// Flat indices of the twisting angles `θ^{(1)}, θ^{(2)}` of every layer.
pub fn interaction_indices(template: Template) -> Vec<usize> {
    (0..template.n_en + template.n_de)
        .flat_map(|l| [3 * l, 3 * l + 1])
        .collect()
}

/// Sum of all twisting angles.
pub fn cumulative_angle(params: &CircuitParams) -> f64 {
    params
        .angles()
        .chunks_exact(3)
        .map(|l| l[0] + l[1])
        .sum()
}

/// Settings for optimizing a pure-state circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitSearch {
    pub options: OptimizeOptions,
    /// Optional cumulative twisting budget, for example `π/2`.
    pub angle_budget: Option<f64>,
}

/// Optimizes one template with exact gradients. `warm` (a shallower optimum)
/// is padded to the template and tried first.
pub fn optimize_circuit(
    cost: &ExactCost<'_>,
    template: Template,
    search: &CircuitSearch,
    warm: &[CircuitParams],
) -> Result<(CircuitParams, OptimizationResult)> {
    let objective = CircuitObjective { cost, template };
    let mut problem = OptimizationProblem::new(&objective);
    problem.interaction_indices = interaction_indices(template);
    if let Some(max) = search.angle_budget {
        problem.budget = Some(AngleBudget {
            indices: interaction_indices(template),
            max,
        });
    }
    for w in warm {
        problem.warm_starts.push(w.padded(template)?.angles());
    }
    let result = optimize(&problem, &search.options)?;
    let mut params = CircuitParams::from_angles(template, &result.best_x, 0.0)?;
    params.a = cost.evaluate(&params)?.a_opt;
    Ok((params, result))
}

/// Optimizes a list of templates in order, seeding each with every earlier
/// optimum that nests into it. Returns the optimized parameters per template.
pub fn optimize_hierarchy(
    cost: &ExactCost<'_>,
    templates: &[Template],
    search: &CircuitSearch,
) -> Result<Vec<(CircuitParams, OptimizationResult)>> {
    let mut out: Vec<(CircuitParams, OptimizationResult)> = Vec::new();
    for &t in templates {
        let mut warm: Vec<CircuitParams> = out
            .iter()
            .filter(|(p, _)| p.template().nests_in(&t))
            .map(|(p, _)| p.clone())
            .collect();
        // deepest nested optimum first
        warm.sort_by_key(|p| std::cmp::Reverse(p.parameter_count()));
        let mut s = search.clone();
        s.options.n_starts = s.options.n_starts.max(warm.len());
        out.push(optimize_circuit(cost, t, &s, &warm)?);
    }
    Ok(out)
}
