//! Overlapping Allan deviation.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AllanSeries {
    /// Averaging times `τ = n T` in seconds.
    pub taus: Vec<f64>,
    pub sigma_y: Vec<f64>,
    /// Averaging lengths `n` in cycles.
    pub cycles: Vec<usize>,
}

/// Least-squares fit of `σ(n) = c n^{−1/2}` in log space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteFit {
    pub c: f64,
    /// RMS deviation of `ln σ` from the fit.
    pub residual: f64,
    pub points: usize,
}

impl AllanSeries {
    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    /// Fit over averaging lengths `lo ≤ n ≤ hi`; `None` if no point falls inside.
    pub fn fit_white(&self, lo: usize, hi: usize) -> Option<WhiteFit> {
        let logs: Vec<f64> = self
            .cycles
            .iter()
            .zip(&self.sigma_y)
            .filter(|(n, s)| **n >= lo && **n <= hi && **s > 0.0)
            .map(|(n, s)| s.ln() + 0.5 * (*n as f64).ln())
            .collect();
        if logs.is_empty() {
            return None;
        }
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let residual = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
        Some(WhiteFit {
            c: mean.exp(),
            residual,
            points: logs.len(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_seconds,sigma_y\n");
        for (t, s) in self.taus.iter().zip(&self.sigma_y) {
            out.push_str(&format!("{t:e},{s:e}\n"));
        }
        out
    }
}

/// Overlapping estimator at octave lengths `n = 1, 2, 4, … ≤ M/2` for the
/// per-cycle averages `y` of a series with cycle time `t_cycle`.
pub fn overlapping_allan(y: &[f64], t_cycle: f64) -> AllanSeries {
    let m = y.len();
    let mut prefix = Vec::with_capacity(m + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in y {
        acc += v;
        prefix.push(acc);
    }
    let mut out = AllanSeries::default();
    let mut n = 1usize;
    while 2 * n <= m {
        let windows = m - 2 * n + 1;
        let sum: f64 = (0..windows)
            .map(|j| {
                let d = prefix[j + 2 * n] - 2.0 * prefix[j + n] + prefix[j];
                d * d
            })
            .sum();
        let nf = n as f64;
        out.taus.push(nf * t_cycle);
        out.sigma_y.push((sum / (2.0 * nf * nf * windows as f64)).sqrt());
        out.cycles.push(n);
        n *= 2;
    }
    out
}
