use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::circuits::{conditional_probs, entangle, named, CircuitParams, Template};
use crate::clock::{
    css_sigma, ctl_oqc_sigma, hl_sigma, pi_hl_sigma, prior_width, run_servo_ensemble, sql_sigma,
    ClockProtocol, ClockRunConfig, LaserNoiseSpec, NoiseExponent, WhiteFit,
};
use crate::cost::ExactCost;
use crate::error::{Error, Result};
use crate::estimation::{
    bmse, ghz_effective_variance, mean_fisher_information, pi_hl_variance, van_trees_bound, CostReport,
    EstimatorMode, PriorSpec,
};
use crate::finite_range::{DressingModel, DressingObjective};
use crate::io::{fmt_f64, Bundle, Csv};
use crate::optimizer::{
    cumulative_angle, interaction_indices, optimize, optimize_circuit, restart_rng, AngleBudget, CircuitSearch,
    OptimizationProblem, OptimizationResult, OptimizeOptions,
};
use crate::poi::poi_optimize;
use crate::spin::SpinOperatorTable;
use crate::wigner::wigner;

use super::{ClockSpec, OptimizeSpec, PoiSpec, ServoSpec, SweepSpec, WignerSpec, BoundsSpec};

pub(crate) struct Context<'a> {
    pub seed: u64,
    pub hash: &'a str,
}

/// Where a circuit is simulated.
pub enum Backend<'a> {
    Collective {
        table: &'a SpinOperatorTable,
        gamma_t: f64,
    },
    Dressing(&'a DressingModel),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizedPoint {
    pub template: Template,
    pub delta_phi: f64,
    pub params: CircuitParams,
    pub report: CostReport,
    #[serde(skip)]
    pub result: OptimizationResult,
}

fn options(template: Template, seed: u64, n_starts: Option<usize>) -> OptimizeOptions {
    let mut o = OptimizeOptions::for_template(template, seed);
    if let Some(k) = n_starts {
        o.n_starts = k;
    }
    o
}

/// Optimizes one template, warm-started from shallower optima that nest in it.
pub fn optimize_point(
    backend: &Backend<'_>,
    delta_phi: f64,
    template: Template,
    warm: &[CircuitParams],
    seed: u64,
    n_starts: Option<usize>,
    angle_budget: Option<f64>,
) -> Result<OptimizedPoint> {
    let prior = PriorSpec::new(delta_phi)?;
    let mut warm: Vec<CircuitParams> = warm.iter().filter(|p| p.template().nests_in(&template)).cloned().collect();
    warm.sort_by_key(|p| std::cmp::Reverse(p.parameter_count()));
    let mut opts = options(template, seed, n_starts);
    opts.n_starts = opts.n_starts.max(warm.len());
    let (params, result, report) = match backend {
        Backend::Collective { table, gamma_t } => {
            let cost = if *gamma_t > 0.0 {
                ExactCost::dephased(table, prior, *gamma_t)?
            } else {
                ExactCost::new(table, prior)
            };
            let search = CircuitSearch {
                options: opts,
                angle_budget,
            };
            let (params, result) = optimize_circuit(&cost, template, &search, &warm)?;
            let report = cost.evaluate(&params)?;
            (params, result, report)
        }
        Backend::Dressing(model) => {
            let objective = DressingObjective {
                model,
                prior,
                template,
            };
            let mut problem = OptimizationProblem::new(&objective);
            problem.interaction_indices = interaction_indices(template);
            if let Some(max) = angle_budget {
                problem.budget = Some(AngleBudget {
                    indices: interaction_indices(template),
                    max,
                });
            }
            for w in &warm {
                problem.warm_starts.push(w.padded(template)?.angles());
            }
            let result = optimize(&problem, &opts)?;
            let mut params = CircuitParams::from_angles(template, &result.best_x, 0.0)?;
            let report = model.evaluate(&params, &prior)?;
            params.a = report.a_opt;
            (params, result, report)
        }
    };
    if !report.bmse.is_finite() {
        return Err(Error::OptimizationFailed(format!("{template} at δφ = {delta_phi} diverged")));
    }
    Ok(OptimizedPoint {
        template,
        delta_phi,
        params,
        report,
        result,
    })
}

/// All templates at one prior width, shallow ones first so that they seed
/// deeper ones. Results come back in the order given.
pub fn sweep_point(
    backend: &Backend<'_>,
    delta_phi: f64,
    templates: &[Template],
    seed: u64,
    n_starts: Option<usize>,
    angle_budget: Option<f64>,
) -> Result<Vec<OptimizedPoint>> {
    let mut order: Vec<usize> = (0..templates.len()).collect();
    order.sort_by_key(|&i| (templates[i].parameter_count(), templates[i]));
    let mut done: Vec<Option<OptimizedPoint>> = vec![None; templates.len()];
    let mut warm: Vec<CircuitParams> = Vec::new();
    for i in order {
        let p = optimize_point(backend, delta_phi, templates[i], &warm, seed, n_starts, angle_budget)?;
        warm.push(p.params.clone());
        done[i] = Some(p);
    }
    Ok(done.into_iter().map(|p| p.expect("every template visited")).collect())
}

fn with_backend<T>(
    n: usize,
    geometry: &Option<crate::finite_range::GeometrySpec>,
    gamma_t: f64,
    f: impl FnOnce(&Backend<'_>) -> Result<T>,
) -> Result<T> {
    match geometry {
        Some(g) => {
            let model = DressingModel::new(g.build()?)?;
            f(&Backend::Dressing(&model))
        }
        None => {
            let table = SpinOperatorTable::build(n)?;
            f(&Backend::Collective {
                table: &table,
                gamma_t,
            })
        }
    }
}

fn report_cells(r: &CostReport) -> Vec<String> {
    vec![
        fmt_f64(r.bmse),
        fmt_f64(r.posterior_over_prior),
        fmt_f64(r.delta_phi_m()),
        fmt_f64(r.eff_meas_var),
        fmt_f64(r.a_opt),
    ]
}

const REPORT_COLUMNS: [&str; 5] = ["bmse", "posterior_over_prior", "delta_phi_m", "eff_meas_var", "a_opt"];

pub(crate) fn run_optimize(ctx: &Context<'_>, s: &OptimizeSpec) -> Result<Bundle> {
    let n = s.atoms()?;
    let gamma_t = s.noise.map_or(0.0, |d| d.gamma_t(s.delta_phi));
    let point = with_backend(n, &s.geometry, gamma_t, |b| {
        optimize_point(b, s.delta_phi, s.template, &[], ctx.seed, s.n_starts, s.angle_budget)
    })?;
    let mut bundle = Bundle::default();
    bundle.add_json(
        "result.json",
        &serde_json::json!({
            "config_hash": ctx.hash,
            "N": n,
            "template": point.template,
            "delta_phi": s.delta_phi,
            "gamma_T": gamma_t,
            "params": point.params,
            "bmse": point.report.bmse,
            "posterior_over_prior": point.report.posterior_over_prior,
            "delta_phi_m": point.report.delta_phi_m(),
            "eff_meas_var": point.report.eff_meas_var,
            "a_opt": point.report.a_opt,
            "cumulative_angle": cumulative_angle(&point.params),
            "restarts": point.result.restarts_used,
            "restart_costs": point.result.restart_costs,
        }),
    )?;
    let mut traces = Csv::new(&["config_hash", "restart", "iter", "cost"]);
    for (r, t) in point.result.traces.iter().enumerate() {
        for (i, c) in t.iter().enumerate() {
            traces.row(&[ctx.hash.into(), r.to_string(), i.to_string(), fmt_f64(*c)]);
        }
    }
    bundle.add("traces.csv", traces.into_bytes());
    Ok(bundle)
}

pub(crate) fn sweep_rows(ctx: &Context<'_>, points: &[Vec<OptimizedPoint>], gamma: &[f64]) -> Csv {
    let mut header = vec!["config_hash", "template", "delta_phi", "gamma_T"];
    header.extend(REPORT_COLUMNS);
    let mut csv = Csv::new(&header);
    for (row, g) in points.iter().zip(gamma) {
        for p in row {
            let mut cells = vec![ctx.hash.to_string(), format!("\"{}\"", p.template), fmt_f64(p.delta_phi), fmt_f64(*g)];
            cells.extend(report_cells(&p.report));
            csv.row(&cells);
        }
    }
    csv
}

pub(crate) fn run_sweep(ctx: &Context<'_>, s: &SweepSpec) -> Result<Bundle> {
    let n = s.atoms()?;
    let gamma: Vec<f64> = s.delta_phi.iter().map(|&d| s.noise.map_or(0.0, |x| x.gamma_t(d))).collect();
    let points: Vec<Vec<OptimizedPoint>> = s
        .delta_phi
        .par_iter()
        .zip(gamma.par_iter())
        .map(|(&d, &g)| {
            with_backend(n, &s.geometry, g, |b| sweep_point(b, d, &s.templates, ctx.seed, s.n_starts, s.angle_budget))
        })
        .collect::<Result<_>>()?;
    let mut bundle = Bundle::default();
    bundle.add("sweep.csv", sweep_rows(ctx, &points, &gamma).into_bytes());
    let flat: Vec<&OptimizedPoint> = points.iter().flatten().collect();
    bundle.add_json("params.json", &flat)?;
    Ok(bundle)
}

/// `σ = Δφ_M / √(b_α T)` of a fixed circuit at the prior width the clock
/// holds, `δφ = (b_α T)^{α/2}`.
pub fn clock_sigma(table: &SpinOperatorTable, params: &CircuitParams, alpha: NoiseExponent, bt: f64) -> Result<f64> {
    let prior = PriorSpec::new(prior_width(alpha, bt)?)?;
    let report = ExactCost::new(table, prior).evaluate(params)?;
    Ok(report.delta_phi_m() / bt.sqrt())
}

pub(crate) fn servo_config(s: &ClockSpec, servo: &ServoSpec, index: usize, seed: u64) -> Result<ClockRunConfig> {
    let laser = match servo.laser {
        Some(l) => l,
        None => LaserNoiseSpec::new(s.alpha, 1.0, 1.0)?,
    };
    Ok(ClockRunConfig {
        n: s.n,
        t: s.bt[index] / laser.b_alpha,
        t_dead: 0.0,
        gain: servo.gain,
        n_cycles: servo.n_cycles,
        seed: restart_rng(seed, index).next_u64(),
        runs: servo.runs,
        protocol: servo.protocol.clone(),
        noise: laser,
    })
}

#[derive(Serialize)]
struct RunSummary {
    #[serde(rename = "bT")]
    bt: f64,
    seed: u64,
    run: usize,
    sigma: Option<f64>,
    fit: Option<WhiteFit>,
    fringe_hops: usize,
    phase_variance: f64,
}

pub(crate) fn run_clock(ctx: &Context<'_>, s: &ClockSpec) -> Result<Bundle> {
    let alpha = s.alpha;
    let mut curves = Csv::new(&[
        "config_hash",
        "bT",
        "delta_phi",
        "sigma_css",
        "sigma_sql",
        "sigma_hl",
        "sigma_pihl",
        "sigma_ghz",
        "sigma_ctl_css",
        "sigma_ctl_oqc",
        "sigma_oqc_floor",
    ]);
    for &bt in &s.bt {
        let dphi = prior_width(alpha, bt)?;
        let nu = dphi * dphi;
        let ctl_css = if nu > 700.0 { f64::INFINITY } else { ((nu.sinh() - nu) / bt).sqrt() };
        let ctl_oqc = ctl_oqc_sigma(alpha, bt)?;
        let ghz = (ghz_effective_variance(s.n, dphi) / bt).sqrt();
        let floor = (pi_hl_sigma(s.n, bt).powi(2) + ctl_oqc * ctl_oqc).sqrt();
        curves.row(&[
            ctx.hash.into(),
            fmt_f64(bt),
            fmt_f64(dphi),
            fmt_f64(css_sigma(s.n, alpha, bt)?),
            fmt_f64(sql_sigma(s.n, bt)),
            fmt_f64(hl_sigma(s.n, bt)),
            fmt_f64(pi_hl_sigma(s.n, bt)),
            fmt_f64(ghz),
            fmt_f64(ctl_css),
            fmt_f64(ctl_oqc),
            fmt_f64(floor),
        ]);
    }
    let mut bundle = Bundle::default();
    bundle.add("clock_curves.csv", curves.into_bytes());
    let Some(servo) = &s.servo else {
        return Ok(bundle);
    };
    let table = SpinOperatorTable::build(s.n)?;
    let mut table_rows = Csv::new(&[
        "config_hash",
        "bT",
        "sigma_predicted",
        "sigma_mean",
        "sigma_sem",
        "fringe_hops",
        "runs",
    ]);
    let mut summaries = Vec::new();
    for (i, &bt) in s.bt.iter().enumerate() {
        let cfg = servo_config(s, servo, i, ctx.seed)?;
        let predicted = match &servo.protocol {
            ClockProtocol::Ideal => None,
            ClockProtocol::Css => Some(css_sigma(s.n, alpha, bt)?),
            ClockProtocol::Circuit { params } => Some(clock_sigma(&table, params, alpha, bt)?),
        };
        let ens = run_servo_ensemble(&cfg)?;
        let opt = |x: Option<f64>| x.map_or_else(|| "nan".to_string(), fmt_f64);
        table_rows.row(&[
            ctx.hash.into(),
            fmt_f64(bt),
            opt(predicted),
            opt(ens.sigma_mean),
            opt(ens.sigma_sem),
            ens.fringe_hops.to_string(),
            ens.runs.len().to_string(),
        ]);
        let first = &ens.runs[0];
        let mut allan = Csv::new(&["config_hash", "tau_seconds", "sigma_y"]);
        for (t, v) in first.allan.taus.iter().zip(&first.allan.sigma_y) {
            allan.row(&[ctx.hash.into(), fmt_f64(*t), fmt_f64(*v)]);
        }
        bundle.add(format!("allan_{i:03}.csv"), allan.into_bytes());
        summaries.extend(ens.runs.iter().map(|r| RunSummary {
            bt,
            seed: r.seed,
            run: r.run,
            sigma: r.sigma,
            fit: r.fit,
            fringe_hops: r.fringe_hops,
            phase_variance: r.phase_variance,
        }));
    }
    bundle.add("servo.csv", table_rows.into_bytes());
    bundle.add_json("servo_summary.json", &summaries)?;
    Ok(bundle)
}

pub(crate) fn run_wigner(ctx: &Context<'_>, s: &WignerSpec) -> Result<Bundle> {
    let table = SpinOperatorTable::build(s.n)?;
    let params = s.protocol.params(s.n);
    let psi = entangle(&table, &params)?;
    let v = psi.amplitudes();
    let rho = v * v.adjoint();
    let field = wigner(&rho, (s.grid[0], s.grid[1]))?;
    let mut csv = Csv::new(&["config_hash", "theta", "phi", "value"]);
    for (i, th) in field.theta.iter().enumerate() {
        for (j, ph) in field.phi.iter().enumerate() {
            csv.row(&[ctx.hash.into(), fmt_f64(*th), fmt_f64(*ph), fmt_f64(field.value(i, j))]);
        }
    }
    let mut bin = Vec::new();
    field.write_binary(&mut bin)?;
    let mut bundle = Bundle::default();
    bundle.add("wigner.csv", csv.into_bytes());
    bundle.add("wigner.bin", bin);
    bundle.add_json(
        "wigner_summary.json",
        &serde_json::json!({"config_hash": ctx.hash, "N": s.n, "integral": field.integral(), "params": params}),
    )?;
    Ok(bundle)
}

/// Bound checks for one optimized point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub van_trees: f64,
    pub mean_fisher: f64,
    pub satisfies_van_trees: bool,
    pub satisfies_hl: bool,
}

pub fn check_bounds(table: &SpinOperatorTable, point: &OptimizedPoint) -> Result<BoundCheck> {
    let prior = PriorSpec::new(point.delta_phi)?;
    let kernel = conditional_probs(table, &point.params, &prior.rule(table.atoms()))?;
    let mean_fisher = mean_fisher_information(&kernel)?;
    let van_trees = van_trees_bound(mean_fisher, &prior);
    let n = table.atoms() as f64;
    Ok(BoundCheck {
        van_trees,
        mean_fisher,
        satisfies_van_trees: point.report.bmse >= van_trees - 1e-9,
        satisfies_hl: point.report.delta_phi_m() >= 1.0 / n - 1e-9,
    })
}

pub(crate) fn run_bounds(ctx: &Context<'_>, s: &BoundsSpec) -> Result<Bundle> {
    let table = SpinOperatorTable::build(s.n)?;
    let backend = Backend::Collective {
        table: &table,
        gamma_t: 0.0,
    };
    let nf = s.n as f64;
    let ghz = named::ghz(s.n);
    let rows: Vec<(Vec<(OptimizedPoint, BoundCheck)>, f64)> = s
        .delta_phi
        .par_iter()
        .map(|&d| {
            let pts = sweep_point(&backend, d, &s.templates, ctx.seed, s.n_starts, None)?;
            let checked = pts
                .into_iter()
                .map(|p| check_bounds(&table, &p).map(|c| (p, c)))
                .collect::<Result<Vec<_>>>()?;
            let prior = PriorSpec::new(d)?;
            let k = conditional_probs(&table, &ghz, &prior.rule(s.n))?;
            let g = bmse(&k, &prior, EstimatorMode::LinearOptimal)?;
            Ok((checked, g.delta_phi_m()))
        })
        .collect::<Result<_>>()?;
    let mut bounds = Csv::new(&[
        "config_hash",
        "delta_phi",
        "template",
        "bmse",
        "van_trees",
        "mean_fisher",
        "delta_phi_m_times_n",
        "satisfies_van_trees",
        "satisfies_hl",
    ]);
    let mut formulas = Csv::new(&[
        "config_hash",
        "delta_phi",
        "ghz_circuit_delta_phi_m_times_n",
        "ghz_formula_delta_phi_m_times_n",
        "pihl_formula_delta_phi_m_times_n",
        "sql_times_n",
        "hl_times_n",
    ]);
    for (&d, (checked, ghz_m)) in s.delta_phi.iter().zip(&rows) {
        for (p, c) in checked {
            bounds.row(&[
                ctx.hash.into(),
                fmt_f64(d),
                format!("\"{}\"", p.template),
                fmt_f64(p.report.bmse),
                fmt_f64(c.van_trees),
                fmt_f64(c.mean_fisher),
                fmt_f64(p.report.delta_phi_m() * nf),
                c.satisfies_van_trees.to_string(),
                c.satisfies_hl.to_string(),
            ]);
        }
        formulas.row(&[
            ctx.hash.into(),
            fmt_f64(d),
            fmt_f64(ghz_m * nf),
            fmt_f64(ghz_effective_variance(s.n, d).sqrt() * nf),
            fmt_f64(pi_hl_variance(s.n, d).sqrt() * nf),
            fmt_f64(nf.sqrt()),
            fmt_f64(1.0),
        ]);
    }
    let mut bundle = Bundle::default();
    bundle.add("bounds.csv", bounds.into_bytes());
    bundle.add("formulas.csv", formulas.into_bytes());
    Ok(bundle)
}

pub(crate) fn run_poi(ctx: &Context<'_>, s: &PoiSpec) -> Result<Bundle> {
    let results = s
        .delta_phi
        .par_iter()
        .map(|&d| poi_optimize(s.n, &PriorSpec::new(d)?, s.max_iters, s.tol))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Csv::new(&[
        "config_hash",
        "delta_phi",
        "bmse",
        "posterior_over_prior",
        "delta_phi_m",
        "iterations",
        "converged",
        "monotone",
    ]);
    let mut trace = Csv::new(&["config_hash", "delta_phi", "step", "bmse"]);
    for (&d, r) in s.delta_phi.iter().zip(&results) {
        let prior = PriorSpec::new(d)?;
        let report = CostReport::from_bmse(r.bmse, &prior, 0.0);
        let monotone = r.trace.windows(2).all(|w| w[1] <= w[0]);
        table.row(&[
            ctx.hash.into(),
            fmt_f64(d),
            fmt_f64(r.bmse),
            fmt_f64(report.posterior_over_prior),
            fmt_f64(report.delta_phi_m()),
            r.iterations.to_string(),
            r.converged.to_string(),
            monotone.to_string(),
        ]);
        for (k, c) in r.trace.iter().enumerate() {
            trace.row(&[ctx.hash.into(), fmt_f64(d), k.to_string(), fmt_f64(*c)]);
        }
    }
    let mut bundle = Bundle::default();
    bundle.add("poi.csv", table.into_bytes());
    bundle.add("poi_trace.csv", trace.into_bytes());
    Ok(bundle)
}
