//! Empirical-distribution machinery: sorted samples, Kolmogorov–Smirnov
//! distance against `SαS` references, QQ data, the empirical characteristic
//! function and trend checks across `n` grids.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stable::{cdf_sas, AlphaStableParams};

/// Asymptotic 95% quantile of the Kolmogorov distribution.
pub const KS_95: f64 = 1.36;

/// Standard deviation of the Kolmogorov distribution; `KS_SD / √n` is used as
/// one standard error of a KS statistic.
pub const KS_SD: f64 = 0.2603;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub alpha: Option<f64>,
    pub n_sum: Option<u64>,
    pub variant: Option<String>,
    pub seed: Option<u64>,
}

/// Values sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    meta: SampleMeta,
}

impl EmpiricalSample {
    /// Sorts `values`. NaNs are ordered last by `total_cmp`.
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self {
            values,
            meta: SampleMeta::default(),
        }
    }

    pub fn with_meta(values: Vec<f64>, meta: SampleMeta) -> Self {
        Self {
            meta,
            ..Self::new(values)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Empirical quantile using the inverse of the right-continuous ECDF.
    pub fn quantile(&self, p: f64) -> f64 {
        let n = self.values.len();
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        self.values[idx]
    }

    /// Mean of `f(x)` with compensated summation.
    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        let mut sum = 0.0;
        let mut c = 0.0;
        for &x in &self.values {
            let y = f(x) - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum / self.values.len() as f64
    }
}

/// Exact one-sample KS statistic `sup_x |F_n(x) - F(x)|` against a
/// reference CDF, using both one-sided envelopes at each order statistic.
pub fn ks_statistic(sample: &EmpiricalSample, mut cdf: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::param("sample", "empty"));
    }
    let n = sample.len() as f64;
    let mut d: f64 = 0.0;
    let values = sample.values();
    let mut i = 0;
    while i < values.len() {
        // Ties share one CDF value.
        let x = values[i];
        let mut last = i;
        while last + 1 < values.len() && values[last + 1] == x {
            last += 1;
        }
        let f = cdf(x)?;
        d = d.max(f - i as f64 / n).max((last + 1) as f64 / n - f);
        i = last + 1;
    }
    Ok(d)
}

pub fn ks_distance(sample: &EmpiricalSample, reference: &AlphaStableParams) -> Result<f64> {
    ks_statistic(sample, |x| cdf_sas(reference, x))
}

/// Two-sample KS distance between empirical laws.
pub fn ks_two_sample(a: &EmpiricalSample, b: &EmpiricalSample) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("sample", "empty"));
    }
    let (xs, ys) = (a.values(), b.values());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let x = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= x {
            i += 1;
        }
        while j < ys.len() && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `KS_95 / √n` scaled by `multiple`.
pub fn ks_threshold(sample_count: usize, multiple: f64) -> f64 {
    multiple * KS_95 / (sample_count as f64).sqrt()
}

/// `|(1/n) Σ e^{iθx}|` for each θ.
pub fn ecf(sample: &EmpiricalSample, theta_grid: &[f64]) -> Vec<(f64, f64)> {
    let n = sample.len() as f64;
    theta_grid
        .iter()
        .map(|&theta| {
            if theta == 0.0 || sample.is_empty() {
                return (theta, if sample.is_empty() { 0.0 } else { 1.0 });
            }
            let (mut re, mut im) = (0.0, 0.0);
            for &x in sample.values() {
                let (s, c) = (theta * x).sin_cos();
                re += c;
                im += s;
            }
            (theta, ((re / n).hypot(im / n)).min(1.0))
        })
        .collect()
}

/// Theoretical quantile of `SαS(σ)` by bisection on [`cdf_sas`].
pub fn sas_quantile(reference: &AlphaStableParams, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::param("p", format!("{p} outside (0,1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Symmetric: solve for the upper quantile and reflect.
    let target = p.max(1.0 - p);
    let mut hi = reference.sigma();
    while cdf_sas(reference, hi)? < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf_sas(reference, mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let q = 0.5 * (lo + hi);
    Ok(if p > 0.5 { q } else { -q })
}

/// 99 evenly spaced probabilities `0.01, ..., 0.99` with theoretical and
/// empirical quantiles.
pub fn qq_points(sample: &EmpiricalSample, reference: &AlphaStableParams) -> Result<Vec<QqPoint>> {
    (1..=99)
        .map(|i| {
            let p = i as f64 / 100.0;
            Ok(QqPoint {
                p,
                q_theory: sas_quantile(reference, p)?,
                q_empirical: sample.quantile(p),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub p: f64,
    pub q_theory: f64,
    pub q_empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoFReport {
    pub ks: f64,
    pub reference: AlphaStableParams,
    pub sample_count: usize,
    pub qq: Vec<QqPoint>,
    pub pass: bool,
    pub threshold: f64,
}

/// KS distance plus QQ data; passes when `ks <= threshold`.
pub fn gof_report(sample: &EmpiricalSample, reference: &AlphaStableParams, threshold: f64) -> Result<GoFReport> {
    let ks = ks_distance(sample, reference)?;
    Ok(GoFReport {
        ks,
        reference: *reference,
        sample_count: sample.len(),
        qq: qq_points(sample, reference)?,
        pass: ks <= threshold,
        threshold,
    })
}

pub fn write_ecf_csv<W: Write>(out: W, rows: &[(f64, f64)]) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["theta", "ecf_abs"])?;
    for &(theta, mag) in rows {
        w.write_record([fmt17(theta), fmt17(mag)])?;
    }
    w.flush()
}

pub fn write_qq_csv<W: Write>(out: W, rows: &[QqPoint]) -> std::io::Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["p", "q_theory", "q_empirical"])?;
    for r in rows {
        w.write_record([fmt17(r.p), fmt17(r.q_theory), fmt17(r.q_empirical)])?;
    }
    w.flush()
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Seventeen significant digits; enough to round-trip any `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Trend checks

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub n: u64,
    pub value: f64,
    /// One standard error of `value`; zero for deterministic sequences.
    pub se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendExpectation {
    /// Nonincreasing along the grid, up to `3·SE` of slack per step.
    Decreasing,
    /// `value ≈ c / log₂ n`: the fitted `c` must stay stable within a factor
    /// of two across the grid, and the sequence must be nonincreasing.
    BoundedByInverseLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendVerdict {
    pub pass: bool,
    pub monotone: bool,
    /// Least-squares `c` in `value ≈ c / log₂ n`.
    pub fitted_c: f64,
    /// `value · log₂ n` per grid point.
    pub scaled: Vec<f64>,
    /// Largest increase between consecutive points, in standard errors.
    pub worst_step_se: f64,
}

pub fn trend_check(points: &[TrendPoint], expected: TrendExpectation) -> Result<TrendVerdict> {
    if points.len() < 3 {
        return Err(Error::Domain(format!(
            "trend check needs at least 3 grid points, got {}",
            points.len()
        )));
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|p| p.n);
    let mut monotone = true;
    let mut worst_step_se = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let rise = w[1].value - w[0].value;
        let slack = 3.0 * w[0].se.hypot(w[1].se);
        if rise > slack {
            monotone = false;
        }
        let se = w[0].se.hypot(w[1].se);
        let step = if se > 0.0 {
            rise / se
        } else if rise > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        worst_step_se = worst_step_se.max(step);
    }
    // Least squares for value = c · x with x = 1/log2 n.
    let (mut sxy, mut sxx) = (0.0, 0.0);
    let mut scaled = Vec::with_capacity(pts.len());
    for p in &pts {
        let l = (p.n as f64).log2();
        let x = 1.0 / l;
        sxy += x * p.value;
        sxx += x * x;
        scaled.push(p.value * l);
    }
    let fitted_c = sxy / sxx;
    let pass = match expected {
        TrendExpectation::Decreasing => monotone,
        TrendExpectation::BoundedByInverseLog => {
            let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = scaled.iter().cloned().fold(f64::INFINITY, f64::min);
            monotone && min > 0.0 && max <= 2.0 * min
        }
    };
    Ok(TrendVerdict {
        pass,
        monotone,
        fitted_c,
        scaled,
        worst_step_se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::make_params;

    #[test]
    fn single_point_at_median() {
        let s = EmpiricalSample::new(vec![0.0]);
        let p = make_params(1.3, 1.0).unwrap();
        assert_eq!(ks_distance(&s, &p).unwrap(), 0.5);
    }

    #[test]
    fn ks_against_uniform_by_hand() {
        let s = EmpiricalSample::new(vec![0.9, 0.1, 0.5]);
        let d = ks_statistic(&s, |x| Ok(x.clamp(0.0, 1.0))).unwrap();
        // Envelopes: 0.1-0, 1/3-0.1, 0.5-1/3, 2/3-0.5, 0.9-2/3, 1-0.9
        assert!((d - (1.0 / 3.0 - 0.1)).abs() < 1e-15);
    }

    #[test]
    fn ecf_trivia() {
        let zeros = EmpiricalSample::new(vec![0.0; 10]);
        for (_, m) in ecf(&zeros, &[0.5, 3.0, -2.0]) {
            assert_eq!(m, 1.0);
        }
        let s = EmpiricalSample::new(vec![1.0, -2.0, 7.5]);
        assert_eq!(ecf(&s, &[0.0])[0].1, 1.0);
    }

    #[test]
    fn two_sample_identical_is_zero() {
        let a = EmpiricalSample::new(vec![3.0, 1.0, 2.0]);
        assert_eq!(ks_two_sample(&a, &a.clone()).unwrap(), 0.0);
        let b = EmpiricalSample::new(vec![10.0, 11.0, 12.0]);
        assert_eq!(ks_two_sample(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = make_params(1.0, 2.0).unwrap();
        let q = sas_quantile(&p, 0.75).unwrap();
        assert!((q - 2.0).abs() < 1e-9, "{q}");
        assert!((sas_quantile(&p, 0.25).unwrap() + 2.0).abs() < 1e-9);
    }

    #[test]
    fn trend_inverse_log_synthetic() {
        let pts: Vec<TrendPoint> = [8u32, 12, 16]
            .iter()
            .map(|&e| TrendPoint {
                n: 1 << e,
                value: 1.0 / e as f64,
                se: 0.0,
            })
            .collect();
        let v = trend_check(&pts, TrendExpectation::BoundedByInverseLog).unwrap();
        assert!(v.pass);
        assert!((v.fitted_c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trend_increasing_fails() {
        let pts: Vec<TrendPoint> = [(256, 0.1), (4096, 0.2), (65536, 0.3)]
            .iter()
            .map(|&(n, value)| TrendPoint { n, value, se: 0.001 })
            .collect();
        assert!(!trend_check(&pts, TrendExpectation::Decreasing).unwrap().pass);
        assert!(trend_check(&pts[..2], TrendExpectation::Decreasing).is_err());
    }

    #[test]
    fn report_round_trips() {
        let p = make_params(1.0, 1.0).unwrap();
        let s = EmpiricalSample::new(vec![-1.0, 0.2, 0.4, 3.0]);
        let r = gof_report(&s, &p, 0.5).unwrap();
        let text = serde_json::to_string(&r).unwrap();
        let back: GoFReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["ks", "reference", "sample_count", "pass", "threshold"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
