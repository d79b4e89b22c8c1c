//! Desk-scale data bundles mirroring individual figures.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuits::Template;
use crate::clock::{dick_limits, oqc_scaling, NoiseExponent};
use crate::clock::analytic::oqc_numeric_optimum;
use crate::error::{Error, Result};
use crate::estimation::{ghz_effective_variance, pi_hl_variance, CostReport, PriorSpec};
use crate::finite_range::{DressingModel, LatticeGeometry};
use crate::io::{fmt_f64, Bundle, Csv};
use crate::poi::poi_optimize;
use crate::spin::SpinOperatorTable;

use super::runners::{run_clock, sweep_point, Backend, Context, OptimizedPoint};
use super::{check_atoms, ClockSpec, MAX_COLLECTIVE_ATOMS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureName {
    Fig2,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig12,
}

impl FigureName {
    pub const ALL: [FigureName; 8] = [
        FigureName::Fig2,
        FigureName::Fig5,
        FigureName::Fig6,
        FigureName::Fig7,
        FigureName::Fig8,
        FigureName::Fig9,
        FigureName::Fig10,
        FigureName::Fig12,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FigureName::Fig2 => "fig2",
            FigureName::Fig5 => "fig5",
            FigureName::Fig6 => "fig6",
            FigureName::Fig7 => "fig7",
            FigureName::Fig8 => "fig8",
            FigureName::Fig9 => "fig9",
            FigureName::Fig10 => "fig10",
            FigureName::Fig12 => "fig12",
        }
    }
}

/// Figure bundle request with optional size overrides.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureSpec {
    pub figure: FigureName,
    /// Particle number; for N-scans, the largest one.
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub n_starts: Option<usize>,
    /// Points per scanned axis.
    #[serde(default)]
    pub points: Option<usize>,
}

const FIGURE_STARTS: usize = 16;

impl FigureSpec {
    pub fn new(figure: FigureName) -> Self {
        Self {
            figure,
            n: None,
            n_starts: None,
            points: None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if let Some(n) = self.n {
            let max = if self.figure == FigureName::Fig8 { usize::MAX } else { MAX_COLLECTIVE_ATOMS };
            check_atoms(n, max)?;
            if self.figure == FigureName::Fig9 {
                return Err(Error::Config("fig9 uses a fixed 3×3 lattice; N cannot be overridden".into()));
            }
        }
        if self.points.is_some_and(|p| p < 2) {
            return Err(Error::Config("points must be at least 2".into()));
        }
        if self.n_starts == Some(0) {
            return Err(Error::Config("n_starts must be at least 1".into()));
        }
        Ok(())
    }

    fn starts(&self) -> Option<usize> {
        Some(self.n_starts.unwrap_or(FIGURE_STARTS))
    }

    fn points(&self, default: usize) -> usize {
        self.points.unwrap_or(default)
    }
}

fn linspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    (0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()
}

fn logspace(a: f64, b: f64, k: usize) -> Vec<f64> {
    linspace(a.ln(), b.ln(), k).into_iter().map(f64::exp).collect()
}

fn tag(t: Template) -> String {
    format!("{}_{}", t.n_en, t.n_de)
}

fn templates(list: &[(usize, usize)]) -> Vec<Template> {
    list.iter().map(|&(a, b)| Template::new(a, b)).collect()
}

fn curve_csv(ctx: &Context<'_>, points: &[&OptimizedPoint], n: usize) -> Vec<u8> {
    let mut csv = Csv::new(&[
        "config_hash",
        "delta_phi",
        "posterior_over_prior",
        "delta_phi_m",
        "delta_phi_m_times_n",
        "bmse",
    ]);
    for p in points {
        csv.row(&[
            ctx.hash.into(),
            fmt_f64(p.delta_phi),
            fmt_f64(p.report.posterior_over_prior),
            fmt_f64(p.report.delta_phi_m()),
            fmt_f64(p.report.delta_phi_m() * n as f64),
            fmt_f64(p.report.bmse),
        ]);
    }
    csv.into_bytes()
}

/// Optimized curves of several templates over a prior grid, one row of
/// points per grid value.
fn curves(
    backend: &Backend<'_>,
    grid: &[f64],
    ts: &[Template],
    ctx: &Context<'_>,
    starts: Option<usize>,
) -> Result<Vec<Vec<OptimizedPoint>>> {
    grid.par_iter()
        .map(|&d| sweep_point(backend, d, ts, ctx.seed, starts, None))
        .collect()
}

fn column<'a>(rows: &'a [Vec<OptimizedPoint>], k: usize) -> Vec<&'a OptimizedPoint> {
    rows.iter().map(|r| &r[k]).collect()
}

struct Readme {
    text: String,
}

impl Readme {
    fn new(title: &str, spec: &FigureSpec) -> Self {
        Self {
            text: format!(
                "# {title}\n\nBundle `{}`, regenerated byte-identically from `manifest.json`.\n\n## Files\n\n",
                spec.figure
            ),
        }
    }

    fn file(&mut self, name: &str, what: &str) {
        self.text.push_str(&format!("- `{name}`: {what}\n"));
    }

    fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

pub(crate) fn figure_bundle(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    spec.validate()?;
    match spec.figure {
        FigureName::Fig2 => fig2(ctx, spec),
        FigureName::Fig5 => fig5(ctx, spec),
        FigureName::Fig6 => fig6(ctx, spec),
        FigureName::Fig7 => fig7(ctx, spec),
        FigureName::Fig8 => fig8(ctx, spec),
        FigureName::Fig9 => fig9(ctx, spec),
        FigureName::Fig10 => fig10(ctx, spec),
        FigureName::Fig12 => fig12(ctx, spec),
    }
}

fn fig2(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let n = spec.n.unwrap_or(16);
    let ts = templates(&[(0, 0), (1, 0), (1, 1), (1, 3), (2, 5)]);
    let grid = linspace(0.1, 1.5, spec.points(8));
    let table = SpinOperatorTable::build(n)?;
    let backend = Backend::Collective {
        table: &table,
        gamma_t: 0.0,
    };
    let rows = curves(&backend, &grid, &ts, ctx, spec.starts())?;
    let mut b = Bundle::default();
    let mut readme = Readme::new(&format!("Figure 2: optimized interferometers, N = {n}"), spec);
    for (k, t) in ts.iter().enumerate() {
        let name = format!("fig2_{}.csv", tag(*t));
        readme.file(&name, &format!("Δφ/δφ of the optimized {t} circuit versus prior width δφ (Fig. 2a curve)"));
        b.add(name, curve_csv(ctx, &column(&rows, k), n));
    }
    readme.file("fig2_params.json", "optimized angles for every curve point");
    let flat: Vec<&OptimizedPoint> = rows.iter().flatten().collect();
    b.add_json("fig2_params.json", &flat)?;
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

fn fig5(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let n = spec.n.unwrap_or(16);
    let ts = templates(&[(0, 0), (1, 3)]);
    let grid = linspace(0.1, 1.5, spec.points(8));
    let table = SpinOperatorTable::build(n)?;
    let backend = Backend::Collective {
        table: &table,
        gamma_t: 0.0,
    };
    let rows = curves(&backend, &grid, &ts, ctx, spec.starts())?;
    let poi = grid
        .par_iter()
        .map(|&d| poi_optimize(n, &PriorSpec::new(d)?, 200, 1e-12))
        .collect::<Result<Vec<_>>>()?;
    let mut b = Bundle::default();
    let mut readme = Readme::new(&format!("Figure 5: phase-operator interferometer, N = {n}"), spec);
    let mut csv = Csv::new(&["config_hash", "delta_phi", "posterior_over_prior", "delta_phi_m", "iterations"]);
    for (&d, r) in grid.iter().zip(&poi) {
        let rep = CostReport::from_bmse(r.bmse, &PriorSpec::new(d)?, 0.0);
        csv.row(&[
            ctx.hash.into(),
            fmt_f64(d),
            fmt_f64(rep.posterior_over_prior),
            fmt_f64(rep.delta_phi_m()),
            r.iterations.to_string(),
        ]);
    }
    readme.file("fig5_poi.csv", "Δφ/δφ of the optimal phase-operator interferometer (MMSE estimator)");
    b.add("fig5_poi.csv", csv.into_bytes());
    for (k, t) in ts.iter().enumerate() {
        let name = format!("fig5_{}.csv", tag(*t));
        readme.file(&name, &format!("optimized {t} circuit for comparison"));
        b.add(name, curve_csv(ctx, &column(&rows, k), n));
    }
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

fn fig6(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let ns: Vec<usize> = match spec.n {
        Some(n) => vec![n],
        None => vec![8, 16],
    };
    let ts = templates(&[(0, 0), (1, 0), (1, 3), (2, 5)]);
    let grid = linspace(0.05, 1.0, spec.points(8));
    let fine = linspace(0.01, 1.2, 120);
    let mut b = Bundle::default();
    let mut readme = Readme::new("Figure 6: approach to the Heisenberg limits", spec);
    for &n in &ns {
        let table = SpinOperatorTable::build(n)?;
        let backend = Backend::Collective {
            table: &table,
            gamma_t: 0.0,
        };
        let rows = curves(&backend, &grid, &ts, ctx, spec.starts())?;
        let name = format!("fig6_N{n}_2_5.csv");
        readme.file(&name, &format!("Δφ_M·N of the optimized (2,5) circuit, N = {n}"));
        b.add(name, curve_csv(ctx, &column(&rows, 3), n));
        let mut csv = Csv::new(&["config_hash", "delta_phi", "ghz_delta_phi_m_times_n", "pihl_delta_phi_m_times_n"]);
        for &d in &fine {
            csv.row(&[
                ctx.hash.into(),
                fmt_f64(d),
                fmt_f64(ghz_effective_variance(n, d).sqrt() * n as f64),
                fmt_f64(pi_hl_variance(n, d).sqrt() * n as f64),
            ]);
        }
        let name = format!("fig6_N{n}_formulas.csv");
        readme.file(&name, "GHZ interferometer and π-corrected Heisenberg limit with phase slips");
        b.add(name, csv.into_bytes());
    }
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

pub(crate) const FIG7_RATIOS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

fn fig7(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let n = spec.n.unwrap_or(16);
    let ts = templates(&[(0, 0), (1, 0), (1, 3)]);
    let grid = linspace(0.2, 1.4, spec.points(6));
    let table = SpinOperatorTable::build(n)?;
    let mut b = Bundle::default();
    let mut readme = Readme::new(&format!("Figure 7: local dephasing, N = {n}"), spec);
    for ratio in FIG7_RATIOS {
        let rows: Vec<Vec<OptimizedPoint>> = grid
            .par_iter()
            .map(|&d| {
                let backend = Backend::Collective {
                    table: &table,
                    gamma_t: ratio * d,
                };
                sweep_point(&backend, d, &ts, ctx.seed, spec.starts(), None)
            })
            .collect::<Result<_>>()?;
        for (k, t) in ts.iter().enumerate() {
            let name = format!("fig7_ratio{ratio}_{}.csv", tag(*t));
            readme.file(&name, &format!("optimized {t} circuit at γT/δφ = {ratio}"));
            b.add(name, curve_csv(ctx, &column(&rows, k), n));
        }
    }
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

fn fig8(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let n = spec.n.unwrap_or(64);
    let clock = ClockSpec {
        n,
        alpha: NoiseExponent::Flicker,
        bt: logspace(1e-3, 10.0, spec.points(60)),
        servo: None,
    };
    let inner = run_clock(ctx, &clock)?;
    let mut b = Bundle::default();
    let mut readme = Readme::new(&format!("Figure 8a: analytic clock instabilities, N = {n}, flicker noise"), spec);
    readme.file(
        "fig8a.csv",
        "dimensionless Allan deviation versus b₂T: CSS, SQL, HL, πHL, GHZ, CSS and OQC coherence-time limits",
    );
    b.add("fig8a.csv", inner.get("clock_curves.csv").expect("clock curves").to_vec());
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

pub(crate) const FIG9_RADII: [f64; 3] = [1.0, 2.0, 4.0];

fn fig9(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let ts = templates(&[(0, 0), (1, 1)]);
    let grid = linspace(0.2, 1.4, spec.points(7));
    let mut b = Bundle::default();
    let mut readme = Readme::new("Figure 9: Rydberg dressing on a 3×3 square lattice", spec);
    for rc in FIG9_RADII {
        let model = DressingModel::new(LatticeGeometry::square(3, 3, rc)?)?;
        let rows = curves(&Backend::Dressing(&model), &grid, &ts, ctx, spec.starts())?;
        for (k, t) in ts.iter().enumerate() {
            let name = format!("fig9_rc{rc}_{}.csv", tag(*t));
            readme.file(&name, &format!("optimized {t} circuit, R_C/a = {rc}"));
            b.add(name, curve_csv(ctx, &column(&rows, k), 9));
        }
    }
    let table = SpinOperatorTable::build(9)?;
    let rows = curves(
        &Backend::Collective {
            table: &table,
            gamma_t: 0.0,
        },
        &grid,
        &ts,
        ctx,
        spec.starts(),
    )?;
    for (k, t) in ts.iter().enumerate() {
        let name = format!("fig9_oat_{}.csv", tag(*t));
        readme.file(&name, &format!("infinite-range one-axis twisting {t} reference"));
        b.add(name, curve_csv(ctx, &column(&rows, k), 9));
    }
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

/// Optimized `σ` minimized over a `b₂T` grid, for each N and template.
pub(crate) struct ClockOptimum {
    pub n: usize,
    pub template: Template,
    pub bt_opt: f64,
    pub sigma_opt: f64,
}

pub(crate) fn clock_optima(
    ns: &[usize],
    ts: &[Template],
    bt_grid: &[f64],
    ctx: &Context<'_>,
    starts: Option<usize>,
) -> Result<Vec<ClockOptimum>> {
    let mut out = Vec::new();
    for &n in ns {
        let table = SpinOperatorTable::build(n)?;
        let backend = Backend::Collective {
            table: &table,
            gamma_t: 0.0,
        };
        // flicker noise: δφ = b₂T
        let rows = curves(&backend, bt_grid, ts, ctx, starts)?;
        for (k, &t) in ts.iter().enumerate() {
            let (bt_opt, sigma_opt) = rows
                .iter()
                .map(|r| (r[k].delta_phi, r[k].report.delta_phi_m() / r[k].delta_phi.sqrt()))
                .fold((f64::NAN, f64::INFINITY), |a, x| if x.1 < a.1 { x } else { a });
            out.push(ClockOptimum {
                n,
                template: t,
                bt_opt,
                sigma_opt,
            });
        }
    }
    Ok(out)
}

fn scan_sizes(spec: &FigureSpec) -> Vec<usize> {
    let max = spec.n.unwrap_or(16);
    let mut ns: Vec<usize> = (1..).map(|k| 1usize << k).take_while(|&n| n <= max).collect();
    if ns.last() != Some(&max) {
        ns.push(max);
    }
    ns
}

fn fig10(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let ns = scan_sizes(spec);
    let ts = templates(&[(0, 0), (1, 0), (1, 1)]);
    let grid = logspace(0.02, 1.5, spec.points(10));
    let optima = clock_optima(&ns, &ts, &grid, ctx, spec.starts())?;
    let mut b = Bundle::default();
    let mut readme = Readme::new("Figure 10: optimal instability versus particle number, flicker noise", spec);
    for &t in &ts {
        let mut csv = Csv::new(&["config_hash", "N", "bT_opt", "sigma_opt"]);
        for o in optima.iter().filter(|o| o.template == t) {
            csv.row(&[ctx.hash.into(), o.n.to_string(), fmt_f64(o.bt_opt), fmt_f64(o.sigma_opt)]);
        }
        let name = format!("fig10_{}.csv", tag(t));
        readme.file(&name, &format!("σ minimized over b₂T for the optimized {t} circuit"));
        b.add(name, csv.into_bytes());
    }
    let mut csv = Csv::new(&[
        "config_hash",
        "N",
        "w",
        "bT_opt",
        "sigma_opt",
        "sigma_two_log",
        "sigma_numeric",
        "bT_numeric",
    ]);
    for n in logspace(10.0, 1e6, 26).into_iter().map(|x| x.round() as usize) {
        let s = oqc_scaling(n, NoiseExponent::Flicker)?;
        let (bt_num, sig_num) = oqc_numeric_optimum(n, NoiseExponent::Flicker)?;
        csv.row(&[
            ctx.hash.into(),
            n.to_string(),
            fmt_f64(s.w),
            fmt_f64(s.bt_opt),
            fmt_f64(s.sigma_opt),
            fmt_f64(s.sigma_two_log.unwrap_or(f64::NAN)),
            fmt_f64(sig_num),
            fmt_f64(bt_num),
        ]);
    }
    readme.file(
        "fig10_asymptote.csv",
        "large-N optimum of πHL plus phase-slip limit: nested-log, two-log and direct minimization",
    );
    b.add("fig10_asymptote.csv", csv.into_bytes());
    b.add("README.md", readme.into_bytes());
    Ok(b)
}

fn fig12(ctx: &Context<'_>, spec: &FigureSpec) -> Result<Bundle> {
    let mut b = Bundle::default();
    let mut readme = Readme::new("Figure 12: largest dead-time fraction versus particle number", spec);
    let mut csv = Csv::new(&["config_hash", "N", "bT_opt", "sigma_opt", "d_min", "r_max"]);
    let sizes: Vec<usize> = logspace(10.0, 1e4, spec.points(7)).into_iter().map(|x| x.round() as usize).collect();
    let rows = sizes
        .par_iter()
        .map(|&n| {
            let s = oqc_scaling(n, NoiseExponent::Flicker)?;
            let lim = dick_limits(s.bt_opt, s.sigma_opt)?;
            Ok((n, s, lim))
        })
        .collect::<Result<Vec<_>>>()?;
    for (n, s, lim) in rows {
        csv.row(&[
            ctx.hash.into(),
            n.to_string(),
            fmt_f64(s.bt_opt),
            fmt_f64(s.sigma_opt),
            fmt_f64(lim.d_min),
            fmt_f64(lim.r_max),
        ]);
    }
    readme.file("fig12_asymptotic.csv", "T_D,max/T_C from the asymptotic optimal clock");
    b.add("fig12_asymptotic.csv", csv.into_bytes());
    let ns = scan_sizes(spec);
    let ts = templates(&[(0, 0), (1, 0), (1, 1)]);
    let optima = clock_optima(&ns, &ts, &logspace(0.02, 1.5, spec.points(7)), ctx, spec.starts())?;
    let mut csv = Csv::new(&["config_hash", "N", "template", "bT_opt", "sigma_opt", "d_min", "r_max"]);
    for o in &optima {
        let lim = dick_limits(o.bt_opt, o.sigma_opt)?;
        csv.row(&[
            ctx.hash.into(),
            o.n.to_string(),
            format!("\"{}\"", o.template),
            fmt_f64(o.bt_opt),
            fmt_f64(o.sigma_opt),
            fmt_f64(lim.d_min),
            fmt_f64(lim.r_max),
        ]);
    }
    readme.file("fig12_circuits.csv", "T_D,max/T_C fed with optimized circuit instabilities");
    b.add("fig12_circuits.csv", csv.into_bytes());
    b.add("README.md", readme.into_bytes());
    Ok(b)
}
