//! The four verbs.

use std::fs;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use stablelab::array::{ArraySpec, Variant};
use stablelab::gof::{
    ecf, gof_report, ks_distance, ks_threshold, trend_check, write_ecf_csv, write_qq_csv, EmpiricalSample, GoFReport,
    TrendExpectation, TrendPoint, TrendVerdict,
};
use stablelab::simulate::{
    audit_entries, estimate_draws, scale_ranges, simulate, theoretical_sigma_n, v_split_diagnostics, EntryAudit, Parts,
    ScaleRanges, SigmaN, SimConfig,
};
use stablelab::stable::{
    dispersion_estimate, sample_iid, tail_bound, tail_sas, truncated_variance, TailBoundCert, TruncVarCert,
};
use stablelab::tower::{
    assign_function, coarsened_z_law, compare_with_oracle, default_system, embedding_validation,
    measure_bookkeeping_holds, EmbeddingReport, LabeledTower, OracleComparison, SystemDescription, ZLaw,
};
use stablelab::{make_params, Error};

use crate::config::{PartsChoice, RunConfig};
use crate::output::{create, read_column, write_json, write_samples_csv};
use crate::{RunError, EXIT_PASS, EXIT_VERDICT};

/// Multiple of the 95% Kolmogorov quantile used for sample-vs-law verdicts.
pub const KS_MULTIPLE: f64 = 1.5;
/// Orbit-vs-oracle KS limit for `tower`.
pub const TOWER_KS_LIMIT: f64 = 0.10;
/// Relative tolerance for dispersion estimates on `tail_draws` samples.
pub const DISPERSION_TOL: f64 = 0.02;
/// Absolute tolerance of the Cauchy closed-form check.
pub const CAUCHY_TOL: f64 = 1e-6;
/// Largest tail threshold checked by `bounds`.
pub const TAIL_T_MAX: u64 = 1 << 16;

/// `θ ∈ {0.1, 0.2, ..., 5}` for ECF files.
pub fn ecf_grid() -> Vec<f64> {
    (1..=50).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub report_path: PathBuf,
    /// One line per verdict, for the terminal.
    pub lines: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            EXIT_PASS
        } else {
            EXIT_VERDICT
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Constants {
    pub tail_bound: TailBoundCert,
    pub truncated_variance: TruncVarCert,
}

impl Constants {
    pub fn calibrate(alpha: f64) -> Result<Self, RunError> {
        Ok(Self {
            tail_bound: TailBoundCert::calibrate(alpha)?,
            truncated_variance: TruncVarCert::calibrate(alpha)?,
        })
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T, RunError> + Send) -> Result<T, RunError> {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Input(format!("worker pool: {e}")))?
        .install(f)
}

fn prepare_dir(cfg: &RunConfig) -> Result<(), RunError> {
    fs::create_dir_all(&cfg.output_dir).map_err(RunError::io(format!("creating {}", cfg.output_dir.display())))
}

fn sim_config(cfg: &RunConfig, n: u64, replicas: u64, variant: Variant, parts: Parts) -> SimConfig {
    SimConfig {
        n,
        replicas,
        variant,
        mode: cfg.mode,
        parts,
        epsilon_tail: cfg.epsilon_tail,
        budget_draws: u128::MAX,
        workers: 0,
    }
}

/// Refuses before any work when the summed estimate exceeds the budget.
fn check_budget(spec: &ArraySpec, budget: u128, runs: &[SimConfig]) -> Result<u128, RunError> {
    let mut total = 0u128;
    let mut detail = Vec::new();
    for run in runs {
        let est = estimate_draws(spec, run)?;
        detail.push(format!("n={} {:?}: {est}", run.n, run.variant));
        total += est;
    }
    if total > budget {
        return Err(RunError::Budget {
            total,
            budget,
            detail: detail.join(", "),
        });
    }
    Ok(total)
}

fn reference_for(alpha: f64, sigma_n: &Option<SigmaN>) -> Result<Option<stablelab::AlphaStableParams>, RunError> {
    Ok(match sigma_n {
        Some(s) => Some(make_params(alpha, s.value.powf(1.0 / alpha))?),
        None => None,
    })
}

fn write_gof_files(cfg: &RunConfig, n: u64, sample: &EmpiricalSample, report: &GoFReport) -> Result<(), RunError> {
    let qq = format!("qq_{n}.csv");
    write_qq_csv(create(&cfg.output_dir, &qq)?, &report.qq).map_err(RunError::io(qq))?;
    let e = format!("ecf_{n}.csv");
    write_ecf_csv(create(&cfg.output_dir, &e)?, &ecf(sample, &ecf_grid())).map_err(RunError::io(e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize)]
pub struct SimulateRun {
    pub n: u64,
    pub ranges: ScaleRanges,
    pub estimated_draws: u128,
    pub sigma_n_alpha: Option<f64>,
    pub limit: f64,
    pub sigma_gap: Option<f64>,
    /// KS of the scaled total against `SαS(σ_n)`.
    pub ks: Option<f64>,
    /// KS of the scaled medium part against `SαS(σ_n)`.
    pub ks_medium: Option<f64>,
    pub ks_threshold: f64,
    pub large_nonzero_fraction: f64,
    /// Replicas with `|S^(M)(Z) - S^(M)(Y)| > (1/α) log₂ n`.
    pub gap_violations: u64,
    /// Replicas whose total is not the sum of its parts.
    pub total_violations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub constants: Constants,
    pub runs: Vec<SimulateRun>,
    /// `|σ_n^α - limit|` decreases along the grid.
    pub sigma_gap_decreasing: Option<bool>,
    pub pass: bool,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let spec = ArraySpec::new(cfg.alpha, cfg.master_seed)?;
    let parts = match cfg.parts {
        PartsChoice::All => Parts::ALL,
        PartsChoice::Medium => Parts::MEDIUM,
    };
    let runs: Vec<SimConfig> = cfg
        .n_grid
        .iter()
        .map(|&n| sim_config(cfg, n, cfg.replicas, cfg.variant, parts))
        .collect();
    check_budget(&spec, cfg.budget_draws, &runs)?;
    prepare_dir(cfg)?;
    let constants = Constants::calibrate(cfg.alpha)?;
    let mut out_runs = Vec::new();
    let mut lines = Vec::new();
    for run in &runs {
        let n = run.n;
        let out = with_workers(cfg.workers, || Ok(simulate(&spec, run)?))?;
        let scale = (n as f64).powf(-1.0 / cfg.alpha);
        let name = format!("samples_{n}.csv");
        write_samples_csv(create(&cfg.output_dir, &name)?, &out.sums, scale).map_err(RunError::io(name))?;
        let total = out.total_sample();
        let medium = out.scaled_sample(|s| s.part_medium);
        let thr = ks_threshold(total.len(), KS_MULTIPLE);
        let reference = reference_for(cfg.alpha, &out.sigma_n)?;
        let (ks, ks_medium) = match &reference {
            Some(r) => {
                let rep = gof_report(&total, r, thr)?;
                write_gof_files(cfg, n, &total, &rep)?;
                (Some(rep.ks), Some(ks_distance(&medium, r)?))
            }
            None => (None, None),
        };
        let gap_limit = (n as f64).log2() / cfg.alpha;
        let gap_violations = out.sums.iter().filter(|s| s.mid_zy_gap.abs() > gap_limit).count() as u64;
        let total_violations = out
            .sums
            .iter()
            .filter(|s| s.total != s.part_small + s.part_medium + s.part_large)
            .count() as u64;
        let large = out.sums.iter().filter(|s| s.large_nonzero).count() as f64 / out.sums.len() as f64;
        lines.push(format!(
            "n={n}: ks={} ks_medium={} sigma_n_alpha={} gap_violations={gap_violations}",
            fmt_opt(ks),
            fmt_opt(ks_medium),
            fmt_opt(out.sigma_n.map(|s| s.value)),
        ));
        out_runs.push(SimulateRun {
            n,
            estimated_draws: out.estimated_draws,
            sigma_n_alpha: out.sigma_n.map(|s| s.value),
            limit: stablelab::simulate::limit_sigma_alpha(cfg.alpha),
            sigma_gap: out.sigma_n.map(|s| (s.value - s.limit).abs()),
            ks,
            ks_medium,
            ks_threshold: thr,
            large_nonzero_fraction: large,
            gap_violations,
            total_violations,
            ranges: out.ranges,
        });
    }
    let gaps: Option<Vec<f64>> = out_runs.iter().map(|r| r.sigma_gap).collect();
    let sigma_gap_decreasing = gaps.filter(|g| g.len() >= 2).map(|g| g.windows(2).all(|w| w[1] < w[0]));
    let pass = out_runs
        .iter()
        .all(|r| r.gap_violations == 0 && r.total_violations == 0);
    let report = SimulateReport {
        command: "simulate",
        config: cfg.clone(),
        constants,
        runs: out_runs,
        sigma_gap_decreasing,
        pass,
    };
    write_json(&cfg.output_dir, "report.json", &report)?;
    Ok(Outcome {
        pass,
        report_path: cfg.output_dir.join("report.json"),
        lines,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{v:.6}"))
}

// ---------------------------------------------------------------------------
// bounds

#[derive(Debug, Clone, Serialize)]
pub struct TailSection {
    pub draws: u64,
    pub t_max: u64,
    /// Integer thresholds where the empirical tail exceeds the bound by more
    /// than 3 binomial standard errors.
    pub empirical_violations: u64,
    pub worst_empirical_excess_se: f64,
    /// Largest `P(|X| ≥ t) / (C_α t^{-α})` from the distribution function, on
    /// a geometric integer grid.
    pub max_oracle_ratio: f64,
    /// `max_t |P(|X| ≥ t) - (2/π) atan(1/t)|` over `t = 1..=t_max`, at α = 1.
    pub cauchy_max_abs_error: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncVarPoint {
    pub k_cut: f64,
    pub empirical: f64,
    pub se: f64,
    pub exact: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncVarSection {
    /// Grid points `(σ, K)` with `Var > c K^{2-α} σ^α`.
    pub bound_violations: u64,
    pub checked: u64,
    /// Monte Carlo truncated second moments at σ = 1 against the exact values.
    pub monte_carlo: Vec<TruncVarPoint>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DispersionSection {
    pub sigma: f64,
    pub target: f64,
    pub estimate: f64,
    pub relative_error: f64,
    /// Dispersion of `X + X` over that of `X`, at α = 0.7.
    pub dependent_ratio: f64,
    /// Dispersion of `X + X'` over that of `X`, at α = 0.7.
    pub independent_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRun {
    pub n: u64,
    pub ranges: ScaleRanges,
    pub replicas: u64,
    pub large_nonzero_fraction: f64,
    /// Empirical `P(S^(L) ≠ 0)` plus the analytic remainder past the cap.
    pub large_value: f64,
    pub large_se: f64,
    pub union_bound: f64,
    pub large_within_union: bool,
    pub gap_violations: u64,
    pub total_violations: u64,
    pub entries: EntryAudit,
    pub v_replicas: u64,
    /// Second moment of `n^{-1/α} V̲`.
    pub v_under_m2: f64,
    pub v_under_se: f64,
    pub v_identity_violations: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub constants: Constants,
    pub estimated_draws: u128,
    pub tail: TailSection,
    pub truncated_variance: TruncVarSection,
    pub dispersion: DispersionSection,
    pub runs: Vec<BoundsRun>,
    pub large_trend: Option<TrendVerdict>,
    pub v_trend: Option<TrendVerdict>,
    pub hard_violations: u64,
    pub pass: bool,
}

fn tail_section(cfg: &RunConfig, cert: &TailBoundCert) -> Result<TailSection, RunError> {
    let alpha = cfg.alpha;
    let params = make_params(alpha, 1.0)?;
    let mut abs: Vec<f64> = sample_iid(&params, cfg.master_seed, 0, cfg.tail_draws)
        .into_iter()
        .map(f64::abs)
        .collect();
    abs.sort_by(f64::total_cmp);
    let total = abs.len() as f64;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for t in 1..=TAIL_T_MAX {
        let tf = t as f64;
        let above = abs.len() - abs.partition_point(|&x| x < tf);
        let emp = above as f64 / total;
        let bound = tail_bound(&params, tf, cert)?;
        let p = bound.min(1.0);
        let se = (p * (1.0 - p) / total).sqrt();
        let excess = if se > 0.0 { (emp - bound) / se } else { 0.0 };
        worst = worst.max(excess);
        if emp > bound + 3.0 * se {
            violations += 1;
        }
    }
    let mut grid: Vec<u64> = (0..=256).map(|i| (2f64.powf(i as f64 / 16.0)).round() as u64).collect();
    grid.dedup();
    let mut max_ratio: f64 = 0.0;
    for &t in &grid {
        let tf = t as f64;
        max_ratio = max_ratio.max(tail_sas(&params, tf)? / tail_bound(&params, tf, cert)?);
    }
    let cauchy = if alpha == 1.0 {
        let mut err: f64 = 0.0;
        for t in 1..=TAIL_T_MAX {
            let tf = t as f64;
            let closed = std::f64::consts::FRAC_2_PI * (1.0 / tf).atan();
            err = err.max((tail_sas(&params, tf)? - closed).abs());
        }
        Some(err)
    } else {
        None
    };
    let pass = violations == 0 && max_ratio <= 1.0 + 1e-12 && cauchy.is_none_or(|e| e <= CAUCHY_TOL);
    Ok(TailSection {
        draws: cfg.tail_draws,
        t_max: TAIL_T_MAX,
        empirical_violations: violations,
        worst_empirical_excess_se: worst,
        max_oracle_ratio: max_ratio,
        cauchy_max_abs_error: cauchy,
        pass,
    })
}

fn trunc_var_section(cfg: &RunConfig, cert: &TruncVarCert) -> Result<TruncVarSection, RunError> {
    let alpha = cfg.alpha;
    let mut violations = 0;
    let mut checked = 0;
    for sigma in [1.0, 0.5, 0.25, 0.125] {
        let params = make_params(alpha, sigma)?;
        for &k in &cert.grid {
            let v = truncated_variance(&params, k)?;
            checked += 1;
            if v > cert.bound(sigma, k) * (1.0 + 1e-12) {
                violations += 1;
            }
        }
    }
    let params = make_params(alpha, 1.0)?;
    let xs = sample_iid(&params, cfg.master_seed, 1, cfg.tail_draws);
    let mut monte_carlo = Vec::new();
    let mut mc_ok = true;
    for k_cut in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        let sq: Vec<f64> = xs.iter().map(|&x| if x.abs() <= k_cut { x * x } else { 0.0 }).collect();
        let m = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (sq.len() as f64 - 1.0);
        let se = (var / sq.len() as f64).sqrt();
        let exact = truncated_variance(&params, k_cut)?;
        mc_ok &= (m - exact).abs() <= 4.0 * se;
        monte_carlo.push(TruncVarPoint {
            k_cut,
            empirical: m,
            se,
            exact,
        });
    }
    Ok(TruncVarSection {
        bound_violations: violations,
        checked,
        monte_carlo,
        pass: violations == 0 && mc_ok,
    })
}

fn dispersion_section(cfg: &RunConfig) -> Result<DispersionSection, RunError> {
    let alpha = cfg.alpha;
    let sigma = 0.5;
    let params = make_params(alpha, sigma)?;
    let xs = EmpiricalSample::new(sample_iid(&params, cfg.master_seed, 2, cfg.tail_draws));
    let target = sigma.powf(alpha);
    let estimate = dispersion_estimate(&xs, alpha, &[0.5, 1.0, 2.0])?;
    let relative_error = (estimate - target).abs() / target;
    let a = 0.7;
    let grid = [0.25, 0.5, 1.0];
    let p = make_params(a, 1.0)?;
    let x = sample_iid(&p, cfg.master_seed, 3, cfg.tail_draws);
    let x2 = sample_iid(&p, cfg.master_seed, 4, cfg.tail_draws);
    let single = dispersion_estimate(&EmpiricalSample::new(x.clone()), a, &grid)?;
    let dep = dispersion_estimate(&EmpiricalSample::new(x.iter().map(|v| 2.0 * v).collect()), a, &grid)?;
    let ind = dispersion_estimate(
        &EmpiricalSample::new(x.iter().zip(&x2).map(|(u, v)| u + v).collect()),
        a,
        &grid,
    )?;
    let dependent_ratio = dep / single;
    let independent_ratio = ind / single;
    let pow = 2f64.powf(a);
    let pass = relative_error <= DISPERSION_TOL
        && (dependent_ratio - pow).abs() <= DISPERSION_TOL * pow
        && dependent_ratio <= 2.0
        && (independent_ratio - 2.0).abs() <= DISPERSION_TOL * 2.0;
    Ok(DispersionSection {
        sigma,
        target,
        estimate,
        relative_error,
        dependent_ratio,
        independent_ratio,
        pass,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn bounds_run(cfg: &RunConfig, spec: &ArraySpec, n: u64) -> Result<BoundsRun, RunError> {
    let run = sim_config(cfg, n, cfg.replicas, Variant::Z, Parts::ALL);
    let out = simulate(spec, &run)?;
    let r = &out.ranges;
    let replicas = out.sums.len() as u64;
    let p = out.sums.iter().filter(|s| s.large_nonzero).count() as f64 / replicas as f64;
    let large_se = (p * (1.0 - p) / replicas as f64).sqrt();
    let large_value = p + r.large_tail_bound;
    let gap_limit = (n as f64).log2() / cfg.alpha;
    let gap_violations = out.sums.iter().filter(|s| s.mid_zy_gap.abs() > gap_limit).count() as u64;
    let total_violations = out
        .sums
        .iter()
        .filter(|s| s.total != s.part_small + s.part_medium + s.part_large)
        .count() as u64;
    let corrupt = cfg.test_corrupt_z;
    let audits = (0..replicas)
        .into_par_iter()
        .map(|rep| {
            let mut armed = corrupt && rep == 0;
            audit_entries(spec, r, cfg.mode, rep, |_, z| {
                if armed && z != 0.0 {
                    armed = false;
                    z * 0.75
                } else {
                    z
                }
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let mut entries = EntryAudit::default();
    for a in &audits {
        entries.merge(a);
    }
    let scale = (n as f64).powf(-1.0 / cfg.alpha);
    let splits = (0..cfg.v_replicas)
        .into_par_iter()
        .map(|rep| v_split_diagnostics(spec, r, rep))
        .collect::<Result<Vec<_>, Error>>()?;
    let v_identity_violations = splits.iter().filter(|v| !v.identity_holds()).count() as u64;
    let sq: Vec<f64> = splits.iter().map(|v| (v.v_under * scale).powi(2)).collect();
    let (v_under_m2, v_under_se) = mean_se(&sq);
    Ok(BoundsRun {
        n,
        replicas,
        large_nonzero_fraction: p,
        large_value,
        large_se,
        union_bound: r.union_bound,
        large_within_union: large_value <= r.union_bound + 3.0 * large_se,
        gap_violations,
        total_violations,
        entries,
        v_replicas: cfg.v_replicas,
        v_under_m2,
        v_under_se,
        v_identity_violations,
        ranges: out.ranges,
    })
}

fn trend(points: Vec<TrendPoint>, expected: TrendExpectation) -> Result<Option<TrendVerdict>, RunError> {
    if points.len() < 3 {
        return Ok(None);
    }
    Ok(Some(trend_check(&points, expected)?))
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let spec = ArraySpec::new(cfg.alpha, cfg.master_seed)?;
    let mut planned = Vec::new();
    for &n in &cfg.n_grid {
        planned.push(sim_config(cfg, n, cfg.replicas, Variant::Z, Parts::ALL));
        planned.push(sim_config(cfg, n, cfg.v_replicas, Variant::X, Parts::MEDIUM));
    }
    let estimated = check_budget(&spec, cfg.budget_draws, &planned)?;
    for &n in &cfg.n_grid {
        scale_ranges(cfg.alpha, n, cfg.epsilon_tail)?;
    }
    prepare_dir(cfg)?;
    let constants = Constants::calibrate(cfg.alpha)?;
    let report = with_workers(cfg.workers, || {
        let tail = tail_section(cfg, &constants.tail_bound)?;
        let truncated_variance = trunc_var_section(cfg, &constants.truncated_variance)?;
        let dispersion = dispersion_section(cfg)?;
        let runs = cfg
            .n_grid
            .iter()
            .map(|&n| bounds_run(cfg, &spec, n))
            .collect::<Result<Vec<_>, _>>()?;
        let large_trend = trend(
            runs.iter()
                .map(|r| TrendPoint {
                    n: r.n,
                    value: r.large_value,
                    se: r.large_se,
                })
                .collect(),
            TrendExpectation::Decreasing,
        )?;
        let v_trend = trend(
            runs.iter()
                .map(|r| TrendPoint {
                    n: r.n,
                    value: r.v_under_m2,
                    se: r.v_under_se,
                })
                .collect(),
            TrendExpectation::BoundedByInverseLog,
        )?;
        let hard_violations = runs
            .iter()
            .map(|r| r.gap_violations + r.total_violations + r.entries.violations() + r.v_identity_violations)
            .sum::<u64>();
        let pass = tail.pass
            && truncated_variance.pass
            && dispersion.pass
            && runs.iter().all(|r| r.large_within_union)
            && large_trend.as_ref().is_none_or(|t| t.pass)
            && v_trend.as_ref().is_none_or(|t| t.pass)
            && hard_violations == 0;
        Ok(BoundsReport {
            command: "bounds",
            config: cfg.clone(),
            constants: constants.clone(),
            estimated_draws: estimated,
            tail,
            truncated_variance,
            dispersion,
            runs,
            large_trend,
            v_trend,
            hard_violations,
            pass,
        })
    })?;
    write_json(&cfg.output_dir, "report.json", &report)?;
    let verdict = |b: bool| if b { "pass" } else { "FAIL" };
    let mut lines = vec![
        format!("tail bound: {}", verdict(report.tail.pass)),
        format!("truncated variance: {}", verdict(report.truncated_variance.pass)),
        format!("dispersion: {}", verdict(report.dispersion.pass)),
    ];
    for r in &report.runs {
        lines.push(format!(
            "n={}: large {:.6} <= union {:.6}: {}; gap/total/entry/identity violations {}/{}/{}/{}",
            r.n,
            r.large_value,
            r.union_bound,
            verdict(r.large_within_union),
            r.gap_violations,
            r.total_violations,
            r.entries.violations(),
            r.v_identity_violations
        ));
    }
    if let Some(t) = &report.large_trend {
        lines.push(format!("large-part trend: {}", verdict(t.pass)));
    }
    if let Some(t) = &report.v_trend {
        lines.push(format!("V-under trend (scaled {:?}): {}", t.scaled, verdict(t.pass)));
    }
    lines.push(format!("hard violations: {}", report.hard_violations));
    Ok(Outcome {
        pass: report.pass,
        report_path: cfg.output_dir.join("report.json"),
        lines,
    })
}

// ---------------------------------------------------------------------------
// tower

#[derive(Debug, Clone, Serialize)]
pub struct TowerReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub system: SystemDescription,
    pub measure_bookkeeping: bool,
    pub laws: Vec<TowerLaw>,
    pub validation: EmbeddingReport,
    pub comparison: OracleComparison,
    pub ks_limit: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TowerLaw {
    pub k: u32,
    pub d: u64,
    pub stage: usize,
    pub height: u64,
    pub law: ZLaw,
}

/// Labeled towers for `k = 1..=k_max`. Rows whose truncation window is empty
/// get the point mass at zero.
pub fn build_towers(system: &stablelab::tower::RankOneSystem, cfg: &RunConfig) -> Result<Vec<LabeledTower>, RunError> {
    (1..=cfg.k_max)
        .map(|k| {
            let law = match coarsened_z_law(cfg.alpha, k, cfg.alphabet_cap, cfg.prob_bits) {
                Ok(l) => l,
                Err(Error::Degenerate(_)) if cfg.alphabet_cap >= 3 => ZLaw::point_mass(cfg.prob_bits),
                Err(e) => return Err(e.into()),
            };
            Ok(assign_function(system, cfg.alpha, k, law)?)
        })
        .collect()
}

pub fn cmd_tower(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let system = default_system(cfg.stages)?;
    let towers = build_towers(&system, cfg)?;
    prepare_dir(cfg)?;
    let (validation, comparison) = with_workers(cfg.workers, || {
        Ok((
            embedding_validation(&system, &towers, cfg.validation_samples, cfg.master_seed)?,
            compare_with_oracle(
                &system,
                &towers,
                cfg.alpha,
                cfg.tower_n,
                cfg.orbits,
                cfg.oracle_samples,
                cfg.master_seed,
            )?,
        ))
    })?;
    let measure_bookkeeping = measure_bookkeeping_holds(&system);
    let pass = validation.pass && comparison.ks <= TOWER_KS_LIMIT && measure_bookkeeping;
    let report = TowerReport {
        command: "tower",
        config: cfg.clone(),
        system: system.describe(),
        measure_bookkeeping,
        laws: towers
            .iter()
            .map(|t| TowerLaw {
                k: t.k,
                d: t.d,
                stage: t.stage,
                height: t.height,
                law: t.law.clone(),
            })
            .collect(),
        validation,
        comparison,
        ks_limit: TOWER_KS_LIMIT,
        pass,
    };
    write_json(&cfg.output_dir, "report.json", &report)?;
    let lines = vec![
        format!(
            "embedding validation: {}",
            if report.validation.pass { "pass" } else { "FAIL" }
        ),
        format!(
            "orbit vs oracle KS {:.4} (limit {TOWER_KS_LIMIT}), {} rejected orbits",
            report.comparison.ks, report.comparison.rejected
        ),
    ];
    Ok(Outcome {
        pass,
        report_path: cfg.output_dir.join("report.json"),
        lines,
    })
}

// ---------------------------------------------------------------------------
// gof

#[derive(Debug, Clone, Serialize)]
pub struct GofCommandReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub input_column: String,
    pub n: u64,
    pub gof: GoFReport,
}

/// Goodness of fit of one CSV column against `SαS(σ)`, with `σ` from
/// `gof_sigma` or else from `σ_n` at the first grid point.
pub fn cmd_gof(cfg: &RunConfig) -> Result<Outcome, RunError> {
    cfg.validate()?;
    let input = cfg.gof_input.as_ref().ok_or_else(|| RunError::Config {
        origin: "validation".into(),
        key: "gof_input".into(),
        message: "required by gof".into(),
    })?;
    let n = cfg.n_grid[0];
    let sigma = match cfg.gof_sigma {
        Some(s) => s,
        None => theoretical_sigma_n(cfg.alpha, n)?.value.powf(1.0 / cfg.alpha),
    };
    let reference = make_params(cfg.alpha, sigma)?;
    let values = read_column(input, &cfg.gof_column)?;
    if values.is_empty() {
        return Err(RunError::Input(format!("{}: no rows", input.display())));
    }
    let sample = EmpiricalSample::new(values);
    let gof = gof_report(&sample, &reference, ks_threshold(sample.len(), KS_MULTIPLE))?;
    prepare_dir(cfg)?;
    write_gof_files(cfg, n, &sample, &gof)?;
    let pass = gof.pass;
    let lines = vec![format!(
        "ks={:.6} threshold={:.6} over {} values: {}",
        gof.ks,
        gof.threshold,
        gof.sample_count,
        if pass { "pass" } else { "FAIL" }
    )];
    let report = GofCommandReport {
        command: "gof",
        config: cfg.clone(),
        input_column: cfg.gof_column.clone(),
        n,
        gof,
    };
    write_json(&cfg.output_dir, "report.json", &report)?;
    Ok(Outcome {
        pass,
        report_path: cfg.output_dir.join("report.json"),
        lines,
    })
}
