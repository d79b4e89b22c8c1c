//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines come out in order. The
//! process fails when a criterion fails unless it is listed in
//! `KNOWN_DEVIATIONS`, whose entries still print FAIL.

mod common;

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{angles, max_abs_diff, ProductSpace};
use vramsey::circuits::{conditional_probs, named, Template};
use vramsey::clock::{
    css_sigma, dick_limits, dick_series, dick_sigma_sq, oqc_numeric_optimum, oqc_scaling, overlapping_allan,
    predict_allan, prior_width, run_servo_ensemble, ClockProtocol, ClockRunConfig, LaserNoiseSpec, NoiseExponent,
    PhaseNoise,
};
use vramsey::decoherence::conditional_probs_dephased;
use vramsey::estimation::{
    bmse, ghz_effective_variance, mean_fisher_information, van_trees_bound, EstimatorMode, PriorSpec,
};
use vramsey::experiment::{sweep_point, Backend, OptimizedPoint};
use vramsey::finite_range::{DressingModel, LatticeGeometry};
use vramsey::io::{sha256_hex, Manifest};
use vramsey::poi::poi_optimize;
use vramsey::quadrature::Rule;
use vramsey::{Axis, CircuitParams, SpinOperatorTable};

/// Criteria that cannot be met as stated; see the README.
const KNOWN_DEVIATIONS: &[u8] = &[5];

const SEED: u64 = 2024;
/// Restart budget for the scans outside criterion 3.
const SCAN_STARTS: Option<usize> = Some(16);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn t(n: usize, d: usize) -> Template {
    Template::new(n, d)
}

fn min_ratio(points: &[&OptimizedPoint]) -> (f64, f64) {
    points
        .iter()
        .map(|p| (p.report.posterior_over_prior, p.delta_phi))
        .fold((f64::INFINITY, f64::NAN), |a, x| if x.0 < a.0 { x } else { a })
}

fn collective(table: &SpinOperatorTable, gamma_t: f64) -> Backend<'_> {
    Backend::Collective { table, gamma_t }
}

/// Optimized N = 16 curves shared by several criteria.
struct Hierarchy {
    table: SpinOperatorTable,
    /// Per grid value, templates in `TEMPLATES` order without (2,5).
    rows: Vec<Vec<OptimizedPoint>>,
    grid: Vec<f64>,
    /// All five templates at δφ = 0.7.
    at_07: Vec<OptimizedPoint>,
}

const HIERARCHY: [(usize, usize); 5] = [(0, 0), (1, 0), (1, 1), (1, 3), (2, 5)];

impl Hierarchy {
    fn column(&self, k: usize) -> Vec<&OptimizedPoint> {
        self.rows.iter().map(|r| &r[k]).collect()
    }
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [8, 64] {
        let table = SpinOperatorTable::build(n).unwrap();
        for dphi in [0.1, 0.5, 1.0] {
            let prior = PriorSpec::new(dphi).unwrap();
            let kernel = conditional_probs(&table, &named::css(), &prior.rule(n)).unwrap();
            let report = bmse(&kernel, &prior, EstimatorMode::LinearOptimal).unwrap();
            // flicker noise: δφ = b₂T
            let bt = dphi;
            assert_eq!(prior_width(NoiseExponent::Flicker, bt).unwrap(), dphi);
            let sigma = css_sigma(n, NoiseExponent::Flicker, bt).unwrap();
            let m2 = (sigma * bt.sqrt()).powi(2);
            let analytic = 1.0 / (1.0 / m2 + 1.0 / (dphi * dphi));
            worst = worst.max((report.bmse / analytic - 1.0).abs());
        }
    }
    Outcome::new(worst < 1e-4, format!("max relative BMSE error {worst:.2e} (< 1e-4)"))
}

fn criterion_2() -> Outcome {
    let rule = Rule {
        nodes: vec![-2.1, -0.7, 0.0, 0.35, 1.3, 2.9],
        weights: vec![1.0 / 6.0; 6],
    };
    let mut gate_err: f64 = 0.0;
    let mut kernel_err: f64 = 0.0;
    for n in 1..=4 {
        let space = ProductSpace::new(n);
        let v = space.dicke();
        let table = SpinOperatorTable::build(n).unwrap();
        for (k, axis) in [Axis::X, Axis::Y, Axis::Z].into_iter().enumerate() {
            let a = angles(2, 1000 + 10 * n as u64 + k as u64);
            let reduced = v.adjoint() * space.gate(axis, a[0], a[1]) * &v;
            let diff = reduced - table.gate_matrix(axis, a[0], a[1]);
            gate_err = gate_err.max(diff.iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        for (s, (ne, nd)) in [(1, 1), (2, 1), (1, 3)].into_iter().enumerate() {
            let template = t(ne, nd);
            let params =
                CircuitParams::from_angles(template, &angles(template.parameter_count(), 77 + s as u64), 0.0).unwrap();
            let kernel = conditional_probs(&table, &params, &rule).unwrap();
            for (i, row) in space.kernel_rows(&params, &rule.nodes, 0.0).iter().enumerate() {
                kernel_err = kernel_err.max(max_abs_diff(&kernel.row(i), row));
            }
        }
    }
    let mut lindblad_err: f64 = 0.0;
    for n in 2..=6 {
        let space = ProductSpace::new(n);
        let table = SpinOperatorTable::build(n).unwrap();
        let template = t(1, 1);
        let params = CircuitParams::from_angles(template, &angles(template.parameter_count(), 300 + n as u64), 0.0).unwrap();
        for gamma_t in [0.3, 1.5] {
            let kernel = conditional_probs_dephased(&table, &params, &rule, gamma_t).unwrap();
            for (i, row) in space.kernel_rows(&params, &rule.nodes, gamma_t).iter().enumerate() {
                lindblad_err = lindblad_err.max(max_abs_diff(&kernel.row(i), row));
            }
        }
    }
    Outcome::new(
        gate_err < 1e-10 && kernel_err < 1e-10 && lindblad_err < 1e-8,
        format!("gates {gate_err:.1e}, kernels {kernel_err:.1e} (N≤4, < 1e-10); Lindblad {lindblad_err:.1e} (N≤6, < 1e-8)"),
    )
}

fn hierarchy() -> Hierarchy {
    let table = SpinOperatorTable::build(16).unwrap();
    let grid = vec![0.5, 0.6, 0.7, 0.8, 0.9];
    let shallow: Vec<Template> = HIERARCHY[..4].iter().map(|&(a, b)| t(a, b)).collect();
    let all: Vec<Template> = HIERARCHY.iter().map(|&(a, b)| t(a, b)).collect();
    let backend = collective(&table, 0.0);
    let rows = grid
        .iter()
        .map(|&d| sweep_point(&backend, d, &shallow, SEED, None, None).unwrap())
        .collect();
    let at_07 = sweep_point(&backend, 0.7, &all, SEED, None, None).unwrap();
    Hierarchy {
        table,
        rows,
        grid,
        at_07,
    }
}

fn criterion_3(h: &Hierarchy) -> Outcome {
    let c: Vec<f64> = h.at_07.iter().map(|p| p.report.bmse).collect();
    let ordered = c[4] <= c[3] * (1.0 + 1e-9) && c[3] < c[2] && c[2] < c[1] && c[1] < c[0];
    let (min_10, _) = min_ratio(&h.column(1));
    let (min_13, _) = min_ratio(&h.column(3));
    let gain = 1.0 - min_13 / min_10;
    let ratios: Vec<String> = h.at_07.iter().map(|p| format!("{:.4}", p.report.posterior_over_prior)).collect();
    Outcome::new(
        ordered && gain >= 0.15,
        format!(
            "Δφ/δφ at δφ=0.7 for (0,0),(1,0),(1,1),(1,3),(2,5) = [{}]; (1,3) min beats (1,0) min by {:.1}% (≥ 15%)",
            ratios.join(", "),
            100.0 * gain
        ),
    )
}

fn bound_violation(table: &SpinOperatorTable, p: &OptimizedPoint) -> f64 {
    let n = table.atoms();
    let prior = PriorSpec::new(p.delta_phi).unwrap();
    let kernel = conditional_probs(table, &p.params, &prior.rule(n)).unwrap();
    let vt = van_trees_bound(mean_fisher_information(&kernel).unwrap(), &prior);
    let hl = 1.0 / n as f64;
    (vt - p.report.bmse).max(hl - p.report.delta_phi_m())
}

fn criterion_4(h: &Hierarchy, pihl: &[(usize, Vec<OptimizedPoint>)]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for p in h.rows.iter().flatten().chain(&h.at_07) {
        worst = worst.max(bound_violation(&h.table, p));
        count += 1;
    }
    for (n, points) in pihl {
        let table = SpinOperatorTable::build(*n).unwrap();
        for p in points {
            worst = worst.max(bound_violation(&table, p));
            count += 1;
        }
    }
    let mut ghz_err: f64 = 0.0;
    for n in 1..=8 {
        let table = SpinOperatorTable::build(n).unwrap();
        for dphi in [0.05, 0.1, 0.2] {
            let prior = PriorSpec::new(dphi).unwrap();
            let kernel = conditional_probs(&table, &named::ghz(n), &prior.rule(n)).unwrap();
            let report = bmse(&kernel, &prior, EstimatorMode::LinearOptimal).unwrap();
            ghz_err = ghz_err.max((report.eff_meas_var / ghz_effective_variance(n, dphi) - 1.0).abs());
        }
    }
    Outcome::new(
        worst <= 1e-9 && ghz_err < 1e-6,
        format!(
            "{count} optimized protocols, worst bound excess {worst:.2e} (≤ 1e-9); GHZ circuit vs formula {ghz_err:.1e} (< 1e-6)"
        ),
    )
}

fn pihl_scan() -> Vec<(usize, Vec<OptimizedPoint>)> {
    let ladder = [t(0, 0), t(1, 0), t(1, 3), t(2, 5)];
    [8, 16]
        .into_iter()
        .map(|n| {
            let table = SpinOperatorTable::build(n).unwrap();
            let backend = collective(&table, 0.0);
            let points = [0.2, 0.5, 0.8]
                .into_iter()
                .map(|d| sweep_point(&backend, d, &ladder, SEED, SCAN_STARTS, None).unwrap().pop().unwrap())
                .collect();
            (n, points)
        })
        .collect()
}

fn criterion_5(pihl: &[(usize, Vec<OptimizedPoint>)]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for (n, points) in pihl {
        let scaled: Vec<f64> = points.iter().map(|p| p.report.delta_phi_m() * *n as f64).collect();
        pass &= scaled.iter().all(|&x| (0.9 * PI..=2.0 * PI).contains(&x));
        parts.push(format!(
            "N={n}: Δφ_M·N = [{}] at δφ = 0.2, 0.5, 0.8",
            scaled.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
        ));
    }
    // GHZ: ≈ 1 well below δφ = 1/N, increasing, far above beyond it
    let mut ghz_ok = true;
    for n in [8usize, 16] {
        let nf = n as f64;
        let at = |x: f64| ghz_effective_variance(n, x / nf).sqrt() * nf;
        ghz_ok &= (at(0.3) - 1.0).abs() < 0.05 && at(1.0) > at(0.3) && at(2.0) > 5.0;
    }
    pass &= ghz_ok;
    parts.push(format!("GHZ divergence beyond 1/N {}", if ghz_ok { "ok" } else { "missing" }));
    Outcome::new(pass, format!("window [0.9π, 2π]; {}", parts.join("; ")))
}

fn criterion_6(h: &Hierarchy) -> Outcome {
    let (min_13, at_13) = min_ratio(&h.column(3));
    let mut min_poi = f64::INFINITY;
    let mut monotone = true;
    for &d in &h.grid {
        let prior = PriorSpec::new(d).unwrap();
        let r = poi_optimize(16, &prior, 200, 1e-12).unwrap();
        min_poi = min_poi.min(r.bmse.sqrt() / d);
        monotone &= r.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    }
    Outcome::new(
        min_13 < min_poi && monotone,
        format!("min Δφ/δφ: (1,3) {min_13:.4} at δφ={at_13}, POI {min_poi:.4}; POI traces monotone: {monotone}"),
    )
}

fn criterion_7() -> Outcome {
    let table = SpinOperatorTable::build(16).unwrap();
    let ts = [t(0, 0), t(1, 0), t(1, 3)];
    let grid = [0.1, 0.2, 0.45, 0.7, 0.95];
    let mut pass = true;
    let mut parts = Vec::new();
    for ratio in [0.01, 0.1, 1.0, 10.0] {
        let rows: Vec<Vec<OptimizedPoint>> = grid
            .iter()
            .map(|&d| sweep_point(&collective(&table, ratio * d), d, &ts, SEED, SCAN_STARTS, None).unwrap())
            .collect();
        let mins: Vec<f64> = (0..3)
            .map(|k| min_ratio(&rows.iter().map(|r| &r[k]).collect::<Vec<_>>()).0)
            .collect();
        let ok = if ratio < 5.0 {
            mins[2] < mins[1] && mins[1] < mins[0]
        } else {
            1.0 - mins[2] / mins[0] < 0.05
        };
        pass &= ok;
        parts.push(format!("γT/δφ={ratio}: [{:.4}, {:.4}, {:.4}]", mins[0], mins[1], mins[2]));
    }
    Outcome::new(pass, format!("min Δφ/δφ for (0,0),(1,0),(1,3): {}", parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let ts = [t(0, 0), t(1, 1)];
    let mut ratios = Vec::new();
    let mut beats = true;
    for rc in [1.0, 2.0, 4.0] {
        let model = DressingModel::new(LatticeGeometry::square(3, 3, rc).unwrap()).unwrap();
        let pts = sweep_point(&Backend::Dressing(&model), 0.8, &ts, SEED, SCAN_STARTS, None).unwrap();
        beats &= pts[1].report.bmse < pts[0].report.bmse;
        ratios.push(pts[1].report.posterior_over_prior);
    }
    let non_increasing = ratios.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
    // long range on six atoms against the collective circuit
    let model = DressingModel::new(LatticeGeometry::square(2, 3, 1e3).unwrap()).unwrap();
    let table = SpinOperatorTable::build(6).unwrap();
    let far = sweep_point(&Backend::Dressing(&model), 0.8, &ts, SEED, SCAN_STARTS, None).unwrap();
    let oat = sweep_point(&collective(&table, 0.0), 0.8, &ts, SEED, SCAN_STARTS, None).unwrap();
    let opt_gap = far
        .iter()
        .zip(&oat)
        .map(|(a, b)| (a.report.posterior_over_prior / b.report.posterior_over_prior - 1.0).abs())
        .fold(0.0, f64::max);
    let prior = PriorSpec::new(0.8).unwrap();
    let same = model.evaluate(&oat[1].params, &prior).unwrap();
    let eval_gap = (same.posterior_over_prior / oat[1].report.posterior_over_prior - 1.0).abs();
    Outcome::new(
        beats && non_increasing && opt_gap < 1e-3 && eval_gap < 1e-3,
        format!(
            "(1,1) Δφ/δφ at δφ=0.8 for R_C/a = 1, 2, 4: [{:.4}, {:.4}, {:.4}], beats (0,0): {beats}; \
             R_C/a=1e3 N=6 vs OAT: optimized {opt_gap:.1e}, same angles {eval_gap:.1e} (< 1e-3)",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / lx.iter().map(|a| (a - mx).powi(2)).sum::<f64>()
}

fn criterion_9() -> Outcome {
    let mut loop_err: f64 = 0.0;
    for bt in [0.1, 0.3] {
        let config = ClockRunConfig {
            n: 8,
            t: 1.0,
            t_dead: 0.0,
            gain: 0.1,
            n_cycles: 100_000,
            seed: SEED,
            runs: 8,
            protocol: ClockProtocol::Css,
            noise: LaserNoiseSpec::new(NoiseExponent::Flicker, bt, 1.0).unwrap(),
        };
        let sim = run_servo_ensemble(&config).unwrap().sigma_mean.unwrap();
        let table = SpinOperatorTable::build(8).unwrap();
        let prior = PriorSpec::new(bt).unwrap();
        let kernel = conditional_probs(&table, &named::css(), &prior.rule(8)).unwrap();
        let dm = bmse(&kernel, &prior, EstimatorMode::LinearOptimal).unwrap().delta_phi_m();
        let predicted = predict_allan(1.0, 1.0, bt, dm).unwrap().sigma;
        loop_err = loop_err.max((sim / predicted - 1.0).abs());
    }

    // raw flicker generator: Allan deviation over τ = 1 … 100 cycles
    let flicker = PhaseNoise::new(NoiseExponent::Flicker, 1.0, 0.1).unwrap();
    let seeds = 8;
    let mut acc: Vec<(f64, f64)> = Vec::new();
    for s in 0..seeds {
        let x = flicker.generate(1 << 20, &mut ChaCha8Rng::seed_from_u64(SEED + s));
        let a = overlapping_allan(&x, 1.0);
        for (i, (&tau, &sig)) in a.taus.iter().zip(&a.sigma_y).enumerate() {
            if i >= acc.len() {
                acc.push((tau, 0.0));
            }
            acc[i].1 += sig * sig / seeds as f64;
        }
    }
    let dev: Vec<f64> = acc.iter().filter(|(tau, _)| (1.0..=100.0).contains(tau)).map(|(_, v)| v.sqrt()).collect();
    let mean = dev.iter().sum::<f64>() / dev.len() as f64;
    let flat = dev.iter().map(|d| (d / mean - 1.0).abs()).fold(0.0, f64::max);

    let white = PhaseNoise::new(NoiseExponent::White, 1.0, 0.1).unwrap();
    let a = overlapping_allan(&white.generate(1 << 20, &mut ChaCha8Rng::seed_from_u64(SEED)), 1.0);
    let (taus, sig): (Vec<f64>, Vec<f64>) =
        a.taus.iter().zip(&a.sigma_y).filter(|(t, _)| (1.0..=1000.0).contains(*t)).map(|(t, s)| (*t, *s)).unzip();
    let slope = log_slope(&taus, &sig);
    Outcome::new(
        loop_err < 0.2 && flat < 0.05 && (slope + 0.5).abs() < 0.05,
        format!(
            "CSS loop vs prediction {:.1}% (< 20%); flicker Allan spread {:.1}% (< 5%); white slope {slope:.3} (−0.5 ± 0.05)",
            100.0 * loop_err,
            100.0 * flat
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut residual: f64 = 0.0;
    for n in [100usize, 10_000, 1_000_000] {
        for a in [NoiseExponent::White, NoiseExponent::Flicker, NoiseExponent::RandomWalk] {
            residual = residual.max(oqc_scaling(n, a).unwrap().residual);
        }
    }
    let gap = |n: usize| {
        let (_, s_num) = oqc_numeric_optimum(n, NoiseExponent::Flicker).unwrap();
        let s = oqc_scaling(n, NoiseExponent::Flicker).unwrap();
        (s_num / s.sigma_two_log.unwrap() - 1.0).abs()
    };
    let (g4, g6) = (gap(10_000), gap(1_000_000));
    Outcome::new(
        residual < 1e-12 && g4 < 0.05 && g6 < 0.02,
        format!("w residual {residual:.1e}; direct vs closed form {:.2}% at N=1e4, {:.2}% at N=1e6", 100.0 * g4, 100.0 * g6),
    )
}

fn criterion_11(h: &Hierarchy) -> Outcome {
    let zeta3 = 1.202_056_903_159_594_3;
    let exact = dick_sigma_sq(0.4, 1.0) == 0.0 && dick_series(1.0) == 0.0;
    let half = (dick_series(0.5) - 7.0 * zeta3 / (8.0 * PI * PI)).abs();
    // flicker noise: σ = Δφ_M/√(b₂T) with b₂T = δφ, minimized over the grid
    let sigma_opt = |points: &[&OptimizedPoint]| {
        points
            .iter()
            .map(|p| (p.delta_phi, p.report.delta_phi_m() / p.delta_phi.sqrt()))
            .fold((f64::NAN, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a })
    };
    let mut optima = Vec::new();
    for n in [4usize, 8] {
        let table = SpinOperatorTable::build(n).unwrap();
        let backend = collective(&table, 0.0);
        let ladder = [t(0, 0), t(1, 0), t(1, 1), t(1, 3)];
        let pts: Vec<OptimizedPoint> = h
            .grid
            .iter()
            .map(|&d| sweep_point(&backend, d, &ladder, SEED, SCAN_STARTS, None).unwrap().pop().unwrap())
            .collect();
        optima.push((n, sigma_opt(&pts.iter().collect::<Vec<_>>())));
    }
    optima.push((16, sigma_opt(&h.column(3))));
    let mut r_max = Vec::new();
    let mut converged = true;
    for (_, (bt, sigma)) in &optima {
        let lim = dick_limits(*bt, *sigma).unwrap();
        converged &= lim.iterations < 100 && lim.d_min > 0.0 && lim.d_min < 1.0;
        r_max.push(lim.r_max);
    }
    let decreasing = r_max.windows(2).all(|w| w[1] < w[0]);
    Outcome::new(
        exact && half < 1e-10 && converged && decreasing,
        format!(
            "σ²_Dick(d=1)=0: {exact}; d=1/2 series error {half:.1e}; R_max for N = 4, 8, 16 from (1,3) optima: [{}]",
            r_max.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn run_cli(args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_vramsey")).args(args).output().unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
}

fn same_bundle(a: &Path, b: &Path) -> bool {
    let ma = Manifest::read(&a.join("manifest.json")).unwrap();
    let mb = Manifest::read(&b.join("manifest.json")).unwrap();
    ma.files == mb.files
        && ma.config_hash == mb.config_hash
        && ma.files.iter().all(|f| {
            let x = std::fs::read(a.join(&f.name)).unwrap();
            let y = std::fs::read(b.join(&f.name)).unwrap();
            x == y && sha256_hex(&x) == f.sha256
        })
}

fn criterion_12() -> Outcome {
    let root = std::env::temp_dir().join(format!("vramsey-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let configs = [
        ("fig8", r#"{"mode": "figure", "figure": "fig8", "seed": 1}"#),
        ("fig2", r#"{"mode": "figure", "figure": "fig2", "N": 4, "points": 3, "n_starts": 2, "seed": 9}"#),
        ("fig12", r#"{"mode": "figure", "figure": "fig12", "N": 4, "points": 3, "n_starts": 2, "seed": 3}"#),
    ];
    let mut identical = Vec::new();
    for (name, json) in configs {
        let cfg = root.join(format!("{name}.json"));
        std::fs::write(&cfg, json).unwrap();
        let (first, second) = (root.join(format!("{name}-a")), root.join(format!("{name}-b")));
        run_cli(&["--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()]);
        let manifest = first.join("manifest.json");
        run_cli(&["--config", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()]);
        identical.push((name, same_bundle(&first, &second)));
    }
    let _ = std::fs::remove_dir_all(&root);
    Outcome::new(
        identical.iter().all(|(_, ok)| *ok),
        identical.iter().map(|(n, ok)| format!("{n}: {}", if *ok { "identical" } else { "differs" })).collect::<Vec<_>>().join(", "),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |id: u8, title: &str, budget: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let mut out = f();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > b {
                out.pass = false;
                out.detail.push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        let tag = if out.pass {
            "PASS"
        } else if KNOWN_DEVIATIONS.contains(&id) {
            "FAIL (known deviation)"
        } else {
            failed.push(id);
            "FAIL"
        };
        println!("{tag} [{id:>2}] {title}: {} ({:.1}s)", out.detail, took.as_secs_f64());
    };

    let secs = Duration::from_secs;
    report(1, "CSS closed form", Some(secs(10)), &mut criterion_1);
    report(2, "oracle equivalence", Some(secs(60)), &mut criterion_2);
    let mut h = None;
    report(3, "hierarchy at N=16", Some(secs(600)), &mut || {
        let hier = hierarchy();
        let out = criterion_3(&hier);
        h = Some(hier);
        out
    });
    let h = h.unwrap();
    let mut pihl = Vec::new();
    // the πHL scan also feeds the bound checks
    report(4, "bounds", None, &mut || {
        pihl = pihl_scan();
        criterion_4(&h, &pihl)
    });
    report(5, "πHL behavior", None, &mut || criterion_5(&pihl));
    report(6, "POI ordering", None, &mut || criterion_6(&h));
    report(7, "dephasing ordering", None, &mut criterion_7);
    report(8, "finite range", None, &mut criterion_8);
    report(9, "clock loop consistency", Some(secs(300)), &mut criterion_9);
    report(10, "asymptotics", Some(secs(1)), &mut criterion_10);
    report(11, "Dick limits", None, &mut || criterion_11(&h));
    report(12, "reproducibility", None, &mut criterion_12);

    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
