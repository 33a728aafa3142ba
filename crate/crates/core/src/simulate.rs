//! Monte Carlo of the scaled Birkhoff sum through its split into small,
//! medium and large scale indices.
//!
//! Row `k` contributes `Σ_{j=1}^{n} (W_k(j) - W_k(j + d_k))`. Medium and large
//! rows have `d_k ≥ n`, small rows are extended i.i.d. to `d_k + n` columns
//! when the coupled small part is requested.

use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{
    check_quantized, lower_cut, quantize_with, row_exponent, truncate_entry, upper_cut, ArraySpec, RowPlan, Variant,
    FLAG_BLOCK, ROW_EXPONENT_CAP,
};
use crate::error::{Error, Result};
use crate::gof::{EmpiricalSample, SampleMeta};
use crate::stable::{check_alpha, TailBoundCert};

/// Tolerance added before taking floors of real-valued range limits, so that
/// `log₂ n / α` landing a hair below an integer still rounds to it.
const FLOOR_EPS: f64 = 1e-9;

pub const DEFAULT_EPSILON_TAIL: f64 = 1e-3;
pub const DEFAULT_BUDGET: u128 = 100_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmallMode {
    /// `G_n = Σ_k Σ_{j ≤ d_k} W_k(j)`.
    GOnly,
    /// `Σ_k Σ_{j ≤ n} (W_k(j) - W_k(j + d_k))` on rows extended to `d_k + n`.
    Coupled,
}

impl std::str::FromStr for SmallMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g_only" => Ok(SmallMode::GOnly),
            "coupled" => Ok(SmallMode::Coupled),
            other => Err(Error::param(
                "mode",
                format!("expected g_only or coupled, got {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRanges {
    pub alpha: f64,
    pub n: u64,
    pub k_small_max: u32,
    pub k_mid_max: u32,
    pub k_large_cap: u32,
    /// `2n C_α Σ_{k > cap} 2^{-αk}/k`.
    pub large_tail_bound: f64,
    /// The same remainder from `k_mid_max` on, i.e. with an empty large range.
    pub union_bound: f64,
    /// The cap wanted by `epsilon_tail` was cut back to the largest row the
    /// array can address.
    pub cap_clipped: bool,
    pub epsilon_tail: f64,
    pub c_alpha: f64,
}

impl ScaleRanges {
    pub fn small(&self) -> RangeInclusive<u32> {
        1..=self.k_small_max
    }

    pub fn medium(&self) -> RangeInclusive<u32> {
        self.k_small_max + 1..=self.k_mid_max
    }

    pub fn large(&self) -> RangeInclusive<u32> {
        self.k_mid_max + 1..=self.k_large_cap
    }
}

fn floor_eps(x: f64) -> u32 {
    (x + FLOOR_EPS).floor().max(0.0) as u32
}

/// `(k_small_max, k_mid_max)`.
pub fn index_bounds(alpha: f64, n: u64) -> Result<(u32, u32)> {
    check_alpha(alpha)?;
    if n < 2 {
        return Err(Error::param("n", format!("{n} < 2")));
    }
    let l = (n as f64).log2();
    Ok((floor_eps((1.0 / alpha - 0.5) * l), floor_eps(l / alpha)))
}

/// `Σ_{k > from} 2^{-αk}/k`, summed until terms stop mattering.
fn tail_series(alpha: f64, from: u32) -> f64 {
    let mut sum = 0.0;
    let mut k = from as f64 + 1.0;
    loop {
        let term = (-alpha * k).exp2() / k;
        sum += term;
        if term < sum * 1e-17 || term == 0.0 {
            return sum;
        }
        k += 1.0;
    }
}

/// Largest `k` whose row the array can address.
pub fn max_addressable_k(alpha: f64) -> u32 {
    let mut k = 1;
    while row_exponent(alpha, k + 1) <= ROW_EXPONENT_CAP && lower_cut(k + 1).is_finite() {
        k += 1;
    }
    k
}

pub fn scale_ranges(alpha: f64, n: u64, epsilon_tail: f64) -> Result<ScaleRanges> {
    let cert = TailBoundCert::calibrate(alpha)?;
    scale_ranges_with(alpha, n, epsilon_tail, &cert)
}

pub fn scale_ranges_with(alpha: f64, n: u64, epsilon_tail: f64, cert: &TailBoundCert) -> Result<ScaleRanges> {
    let (k_small_max, k_mid_max) = index_bounds(alpha, n)?;
    if !(epsilon_tail > 0.0 && epsilon_tail < 1.0) {
        return Err(Error::param("epsilon_tail", format!("{epsilon_tail} outside (0,1)")));
    }
    if cert.alpha != alpha {
        return Err(Error::param("cert", "calibrated for a different alpha"));
    }
    let c = cert.c_alpha;
    let remainder = |cap: u32| 2.0 * n as f64 * c * tail_series(alpha, cap);
    let mut cap = k_mid_max;
    while remainder(cap) >= epsilon_tail {
        cap += 1;
    }
    let limit = max_addressable_k(alpha);
    if k_mid_max > limit {
        return Err(Error::Range(format!(
            "medium range reaches k={k_mid_max}, rows stop at k={limit}"
        )));
    }
    let cap_clipped = cap > limit;
    let cap = cap.min(limit);
    Ok(ScaleRanges {
        alpha,
        n,
        k_small_max,
        k_mid_max,
        k_large_cap: cap,
        large_tail_bound: remainder(cap),
        union_bound: remainder(k_mid_max),
        cap_clipped,
        epsilon_tail,
        c_alpha: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaN {
    /// `σ_n^α = 2 Σ_{k ∈ M} 1/k`.
    pub value: f64,
    /// `2 ln(2/(2-α))`.
    pub limit: f64,
}

pub fn limit_sigma_alpha(alpha: f64) -> f64 {
    2.0 * (2.0 / (2.0 - alpha)).ln()
}

pub fn theoretical_sigma_n(alpha: f64, n: u64) -> Result<SigmaN> {
    let (lo, hi) = index_bounds(alpha, n)?;
    if hi <= lo {
        return Err(Error::Domain(format!("empty medium range at alpha={alpha}, n={n}")));
    }
    let value = 2.0 * (lo + 1..=hi).map(|k| 1.0 / k as f64).sum::<f64>();
    Ok(SigmaN {
        value,
        limit: limit_sigma_alpha(alpha),
    })
}

// ---------------------------------------------------------------------------
// Per-row sums

/// `Σ_{j=1}^{n} W(j) - Σ_{j=d+1}^{d+n} W(j)`, with the overlap of the two
/// windows cancelled before any entry is generated.
fn coboundary_windows(d: u64, n: u64) -> (RangeInclusive<u64>, RangeInclusive<u64>) {
    (1..=n.min(d), n.max(d) + 1..=n + d)
}

/// Everything one pass over a row produces.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct RowTerms {
    w: f64,
    y: f64,
    z: f64,
    over: f64,
    under: f64,
    nonzero: bool,
    over_nonzero: bool,
    abs_mass: f64,
    entries: u64,
}

impl RowTerms {
    fn add(&mut self, sign: f64, x: f64, k: u32, plan: &RowPlan, variant: Variant) {
        let a = x.abs();
        let lo = lower_cut(k);
        let hi = upper_cut(k);
        let y = if a >= lo && a <= hi { x } else { 0.0 };
        let z = quantize_with(k, plan.d, y).expect("truncated entries are in range");
        let w = match variant {
            Variant::X => x,
            Variant::Y => y,
            Variant::Z => z,
        };
        self.w += sign * w;
        self.y += sign * y;
        self.z += sign * z;
        if a > hi {
            self.over += sign * x;
            self.over_nonzero = true;
        }
        if a < lo {
            self.under += sign * x;
        }
        self.nonzero |= w != 0.0;
        self.abs_mass += a;
        self.entries += 1;
    }
}

/// One row's signed windows. With `dense` false only entries that can reach
/// `2^k` are generated, which is enough for everything but `X` sums and the
/// under-threshold part.
fn row_terms(
    plan: &RowPlan,
    windows: [(f64, RangeInclusive<u64>); 2],
    replica: u64,
    variant: Variant,
    dense: bool,
) -> Result<RowTerms> {
    let mut t = RowTerms::default();
    for (sign, range) in windows {
        let entries = if dense {
            plan.support(range, replica, Variant::X)?
        } else {
            plan.flagged_raw(range, replica)?
        };
        for (_, v) in entries {
            t.add(sign, v, plan.k, plan, variant);
        }
    }
    Ok(t)
}

fn coboundary_terms(plan: &RowPlan, n: u64, replica: u64, variant: Variant, dense: bool) -> Result<RowTerms> {
    let (a, b) = coboundary_windows(plan.d, n);
    row_terms(plan, [(1.0, a), (-1.0, b)], replica, variant, dense)
}

fn plans(spec: &ArraySpec, ks: RangeInclusive<u32>) -> Result<Vec<RowPlan>> {
    ks.map(|k| RowPlan::new(spec, k)).collect()
}

/// `S_n^(M)(W)`.
pub fn sum_medium(spec: &ArraySpec, ranges: &ScaleRanges, replica: u64, variant: Variant) -> Result<f64> {
    let mut s = 0.0;
    for plan in plans(spec, ranges.medium())? {
        s += coboundary_terms(&plan, ranges.n, replica, variant, variant == Variant::X)?.w;
    }
    Ok(s)
}

/// Small-scale part; see [`SmallMode`].
pub fn sum_small(
    spec: &ArraySpec,
    ranges: &ScaleRanges,
    replica: u64,
    variant: Variant,
    mode: SmallMode,
) -> Result<f64> {
    let spec = small_spec(spec, ranges.n, mode);
    let mut s = 0.0;
    for plan in plans(&spec, ranges.small())? {
        s += small_row(&plan, ranges.n, replica, variant, mode)?;
    }
    Ok(s)
}

fn small_spec(spec: &ArraySpec, n: u64, mode: SmallMode) -> ArraySpec {
    match mode {
        SmallMode::Coupled => spec.with_row_extension(spec.row_extension().max(n)),
        SmallMode::GOnly => *spec,
    }
}

fn small_row(plan: &RowPlan, n: u64, replica: u64, variant: Variant, mode: SmallMode) -> Result<f64> {
    let dense = variant == Variant::X;
    Ok(match mode {
        SmallMode::GOnly => {
            row_terms(
                plan,
                [(1.0, 1..=plan.d), (0.0, plan.d + 1..=plan.d)],
                replica,
                variant,
                dense,
            )?
            .w
        }
        SmallMode::Coupled => coboundary_terms(plan, n, replica, variant, dense)?.w,
    })
}

/// `S_n^(L)(W)` up to the cap, and whether any contributing entry is nonzero.
pub fn sum_large(spec: &ArraySpec, ranges: &ScaleRanges, replica: u64, variant: Variant) -> Result<(f64, bool)> {
    let mut s = 0.0;
    let mut nonzero = false;
    for plan in plans(spec, ranges.large())? {
        let t = coboundary_terms(&plan, ranges.n, replica, variant, variant == Variant::X)?;
        s += t.w;
        nonzero |= t.nonzero;
    }
    Ok((s, nonzero))
}

/// Split of `S^(M)(X) - S^(M)(Y)` into the part above `2^{k²}` and the part
/// below `2^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VSplit {
    pub v_over: f64,
    pub v_under: f64,
    pub medium_x: f64,
    pub medium_y: f64,
    /// `Σ |X|` over the entries that went into the sums.
    pub abs_mass: f64,
    pub entries: u64,
}

impl VSplit {
    /// `|(X - Y) - (over + under)|`. The identity is exact in real
    /// arithmetic; in floating point each of the four sums is off by at most
    /// `γ_N Σ|x|`, which [`VSplit::rounding_bound`] returns.
    pub fn identity_residual(&self) -> f64 {
        ((self.medium_x - self.medium_y) - (self.v_over + self.v_under)).abs()
    }

    pub fn rounding_bound(&self) -> f64 {
        let u = f64::EPSILON / 2.0;
        let nu = (self.entries as f64 + 2.0) * u;
        4.0 * nu / (1.0 - nu) * self.abs_mass
    }

    pub fn identity_holds(&self) -> bool {
        self.identity_residual() <= self.rounding_bound()
    }
}

pub fn v_split_diagnostics(spec: &ArraySpec, ranges: &ScaleRanges, replica: u64) -> Result<VSplit> {
    let mut v = VSplit {
        v_over: 0.0,
        v_under: 0.0,
        medium_x: 0.0,
        medium_y: 0.0,
        abs_mass: 0.0,
        entries: 0,
    };
    for plan in plans(spec, ranges.medium())? {
        let t = coboundary_terms(&plan, ranges.n, replica, Variant::X, true)?;
        v.v_over += t.over;
        v.v_under += t.under;
        v.medium_x += t.w;
        v.medium_y += t.y;
        v.abs_mass += t.abs_mass;
        v.entries += t.entries;
    }
    Ok(v)
}

/// Quantizer violations over the entries of one replica.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryAudit {
    pub entries: u64,
    pub gap: u64,
    pub support: u64,
    pub grid: u64,
}

impl EntryAudit {
    pub fn violations(&self) -> u64 {
        self.gap + self.support + self.grid
    }

    pub fn merge(&mut self, other: &EntryAudit) {
        self.entries += other.entries;
        self.gap += other.gap;
        self.support += other.support;
        self.grid += other.grid;
    }
}

/// Checks `Z` against `Y` on every tail-region entry of every row a replica
/// touches; entries outside the region are zero in both. `tamper` sees each
/// `(k, z)` before the check and returns the value to check.
pub fn audit_entries(
    spec: &ArraySpec,
    ranges: &ScaleRanges,
    mode: SmallMode,
    replica: u64,
    mut tamper: impl FnMut(u32, f64) -> f64,
) -> Result<EntryAudit> {
    let n = ranges.n;
    let mut audit = EntryAudit::default();
    let mut visit = |plan: &RowPlan, range: RangeInclusive<u64>| -> Result<()> {
        for (_, x) in plan.flagged_raw(range, replica)? {
            let y = truncate_entry(plan.k, x);
            let z = tamper(plan.k, quantize_with(plan.k, plan.d, y)?);
            let c = check_quantized(plan.k, plan.d, y, z);
            audit.entries += 1;
            audit.gap += c.gap as u64;
            audit.support += c.support as u64;
            audit.grid += c.grid as u64;
        }
        Ok(())
    };
    for plan in plans(&small_spec(spec, n, mode), ranges.small())? {
        match mode {
            SmallMode::GOnly => visit(&plan, 1..=plan.d)?,
            SmallMode::Coupled => {
                let (a, b) = coboundary_windows(plan.d, n);
                visit(&plan, a)?;
                visit(&plan, b)?;
            }
        }
    }
    for plan in plans(spec, ranges.medium())?
        .iter()
        .chain(&plans(spec, ranges.large())?)
    {
        let (a, b) = coboundary_windows(plan.d, n);
        visit(plan, a)?;
        visit(plan, b)?;
    }
    Ok(audit)
}

// ---------------------------------------------------------------------------
// Replicas

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecomposedSum {
    pub replica: u64,
    pub part_small: f64,
    pub part_medium: f64,
    pub part_large: f64,
    /// `part_small + part_medium + part_large`.
    pub total: f64,
    pub large_nonzero: bool,
    /// Some medium entry exceeds `2^{k²}`.
    pub v_over_nonzero: bool,
    /// `S^(M)(Z) - S^(M)(Y)`.
    pub mid_zy_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Parts {
    pub small: bool,
    pub medium: bool,
    pub large: bool,
}

impl Parts {
    pub const ALL: Parts = Parts {
        small: true,
        medium: true,
        large: true,
    };
    pub const MEDIUM: Parts = Parts {
        small: false,
        medium: true,
        large: false,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: u64,
    pub replicas: u64,
    pub variant: Variant,
    pub mode: SmallMode,
    pub parts: Parts,
    pub epsilon_tail: f64,
    pub budget_draws: u128,
    /// Worker threads; `0` uses rayon's default.
    pub workers: usize,
}

impl SimConfig {
    pub fn new(n: u64, replicas: u64, variant: Variant) -> Self {
        Self {
            n,
            replicas,
            variant,
            mode: SmallMode::Coupled,
            parts: Parts::ALL,
            epsilon_tail: DEFAULT_EPSILON_TAIL,
            budget_draws: DEFAULT_BUDGET,
            workers: 0,
        }
    }
}

/// Per-replica work: every row with the windows it touches.
struct Plan {
    small: Vec<RowPlan>,
    medium: Vec<RowPlan>,
    large: Vec<RowPlan>,
}

impl Plan {
    fn new(spec: &ArraySpec, ranges: &ScaleRanges, cfg: &SimConfig) -> Result<Self> {
        let pick = |on: bool, ks: RangeInclusive<u32>, s: &ArraySpec| -> Result<Vec<RowPlan>> {
            if on {
                plans(s, ks)
            } else {
                Ok(Vec::new())
            }
        };
        Ok(Self {
            small: pick(cfg.parts.small, ranges.small(), &small_spec(spec, ranges.n, cfg.mode))?,
            // Medium rows are always walked: the gap and V̄ diagnostics need them.
            medium: plans(spec, ranges.medium())?,
            large: pick(cfg.parts.large, ranges.large(), spec)?,
        })
    }

    /// Expected number of sampler calls plus flag-block seeds per replica.
    fn draws(&self, cfg: &SimConfig) -> f64 {
        let n = cfg.n;
        let cost = |plan: &RowPlan, columns: u64, variant: Variant| {
            plan.expected_draws(columns, variant) + (columns / FLAG_BLOCK + 2) as f64
        };
        let mut total = 0.0;
        for p in &self.small {
            let cols = match cfg.mode {
                SmallMode::GOnly => p.d,
                SmallMode::Coupled => 2 * n.min(p.d),
            };
            total += cost(p, cols, cfg.variant);
        }
        let medium_variant = if cfg.parts.medium { cfg.variant } else { Variant::Y };
        for p in &self.medium {
            total += cost(p, 2 * n, medium_variant);
        }
        for p in &self.large {
            total += cost(p, 2 * n, cfg.variant);
        }
        total
    }
}

/// Draws the run would need, without doing any work.
pub fn estimate_draws(spec: &ArraySpec, cfg: &SimConfig) -> Result<u128> {
    let ranges = scale_ranges(spec.alpha(), cfg.n, cfg.epsilon_tail)?;
    let plan = Plan::new(spec, &ranges, cfg)?;
    Ok((plan.draws(cfg) * cfg.replicas as f64).ceil() as u128)
}

fn replica_sum(plan: &Plan, cfg: &SimConfig, replica: u64) -> Result<DecomposedSum> {
    let n = cfg.n;
    let mut part_small = 0.0;
    for p in &plan.small {
        part_small += small_row(p, n, replica, cfg.variant, cfg.mode)?;
    }
    let dense = cfg.parts.medium && cfg.variant == Variant::X;
    let mut part_medium = 0.0;
    let mut mid_zy_gap = 0.0;
    let mut v_over_nonzero = false;
    for p in &plan.medium {
        let t = coboundary_terms(p, n, replica, cfg.variant, dense)?;
        part_medium += t.w;
        mid_zy_gap += t.z - t.y;
        v_over_nonzero |= t.over_nonzero;
    }
    if !cfg.parts.medium {
        part_medium = 0.0;
    }
    let mut part_large = 0.0;
    let mut large_nonzero = false;
    for p in &plan.large {
        let t = coboundary_terms(p, n, replica, cfg.variant, cfg.variant == Variant::X)?;
        part_large += t.w;
        large_nonzero |= t.nonzero;
    }
    Ok(DecomposedSum {
        replica,
        part_small,
        part_medium,
        part_large,
        total: part_small + part_medium + part_large,
        large_nonzero,
        v_over_nonzero,
        mid_zy_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub ranges: ScaleRanges,
    pub sigma_n: Option<SigmaN>,
    pub estimated_draws: u128,
    /// In replica order.
    pub sums: Vec<DecomposedSum>,
}

impl SimulationOutput {
    /// `n^{-1/α}` times the chosen component of every replica, sorted.
    pub fn scaled_sample(&self, pick: impl Fn(&DecomposedSum) -> f64) -> EmpiricalSample {
        let scale = (self.ranges.n as f64).powf(-1.0 / self.ranges.alpha);
        EmpiricalSample::with_meta(
            self.sums.iter().map(|s| pick(s) * scale).collect(),
            SampleMeta {
                alpha: Some(self.ranges.alpha),
                n_sum: Some(self.ranges.n),
                variant: None,
                seed: None,
            },
        )
    }

    pub fn total_sample(&self) -> EmpiricalSample {
        self.scaled_sample(|s| s.total)
    }
}

/// Runs `cfg.replicas` independent replicas. Refuses before doing any work
/// when the draw estimate exceeds `cfg.budget_draws`. Output is identical
/// for every worker count.
pub fn simulate(spec: &ArraySpec, cfg: &SimConfig) -> Result<SimulationOutput> {
    if cfg.replicas == 0 {
        return Err(Error::param("replicas", "must be at least 1"));
    }
    let ranges = scale_ranges(spec.alpha(), cfg.n, cfg.epsilon_tail)?;
    let plan = Plan::new(spec, &ranges, cfg)?;
    let estimated = (plan.draws(cfg) * cfg.replicas as f64).ceil() as u128;
    if estimated > cfg.budget_draws {
        return Err(Error::Budget {
            estimated,
            budget: cfg.budget_draws,
        });
    }
    let run = || {
        (0..cfg.replicas)
            .into_par_iter()
            .map(|r| replica_sum(&plan, cfg, r))
            .collect::<Result<Vec<_>>>()
    };
    let sums = if cfg.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Range(format!("worker pool: {e}")))?
            .install(run)?
    };
    Ok(SimulationOutput {
        sigma_n: theoretical_sigma_n(spec.alpha(), cfg.n).ok(),
        ranges,
        estimated_draws: estimated,
        sums,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_examples() {
        assert_eq!(index_bounds(1.0, 1 << 12).unwrap(), (6, 12));
        assert_eq!(index_bounds(1.0, 2).unwrap(), (0, 1));
        assert_eq!(index_bounds(0.5, 1 << 8).unwrap(), (12, 16));
        let r = scale_ranges(1.0, 1 << 12, 1e-3).unwrap();
        assert!(r.large_tail_bound < 1e-3);
        assert!(!r.cap_clipped);
        assert_eq!(r.small(), 1..=6);
        assert_eq!(r.medium(), 7..=12);
    }

    #[test]
    fn medium_and_large_rows_are_long_enough() {
        for alpha in [0.5, 1.0, 1.5] {
            for e in [4u32, 8, 12, 16] {
                let n = 1u64 << e;
                let r = scale_ranges(alpha, n, 1e-3).unwrap();
                for k in r.medium().chain(r.large()) {
                    let d = crate::array::row_length_alpha(alpha, k).unwrap();
                    assert!(d >= n, "alpha={alpha} n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn sigma_n_values() {
        let s = theoretical_sigma_n(1.0, 1 << 12).unwrap();
        let h = |m: u32| (1..=m).map(|k| 1.0 / k as f64).sum::<f64>();
        assert!((s.value - 2.0 * (h(12) - h(6))).abs() < 1e-15);
        assert!((s.value - 1.30642).abs() < 1e-5);
        assert!((s.limit - 2f64.ln() * 2.0).abs() < 1e-15);
        assert!((limit_sigma_alpha(1.5) - 2.0 * 4f64.ln()).abs() < 1e-15);
        assert!(matches!(theoretical_sigma_n(1.9, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn coupled_windows_telescope() {
        // The overlap-cancelled windows reproduce the direct coboundary sum.
        let spec = ArraySpec::new(1.0, 3).unwrap().with_row_extension(100);
        for k in 1..4 {
            let plan = RowPlan::new(&spec, k).unwrap();
            for n in [1u64, 3, 4, 10, 64, 100] {
                if n + plan.d > plan.limit {
                    continue;
                }
                let direct: f64 = (1..=n)
                    .map(|j| plan.entry(j, 0, Variant::X).unwrap() - plan.entry(j + plan.d, 0, Variant::X).unwrap())
                    .sum();
                let t = coboundary_terms(&plan, n, 0, Variant::X, true).unwrap().w;
                assert!((direct - t).abs() <= 1e-9 * (1.0 + direct.abs()), "k={k} n={n}");
            }
        }
    }

    #[test]
    fn sparse_and_dense_passes_agree_on_truncated_sums() {
        // At n = 2 the medium range is row 1, where 2^k = 2^{k²} and most
        // tail entries lie above the upper cut.
        let spec = ArraySpec::new(0.8, 11).unwrap();
        let r = scale_ranges(0.8, 2, 1e-3).unwrap();
        assert_eq!(r.medium(), 1..=1);
        let mut saw_over = false;
        for replica in 0..200 {
            for variant in [Variant::Y, Variant::Z] {
                for plan in plans(&spec, r.medium()).unwrap() {
                    let a = coboundary_terms(&plan, 2, replica, variant, false).unwrap();
                    let b = coboundary_terms(&plan, 2, replica, variant, true).unwrap();
                    assert_eq!(a.w, b.w);
                    assert_eq!(a.over_nonzero, b.over_nonzero);
                    saw_over |= a.over_nonzero;
                }
            }
        }
        assert!(saw_over);
    }

    #[test]
    fn replica_identities() {
        let spec = ArraySpec::new(1.0, 5).unwrap();
        let mut cfg = SimConfig::new(256, 8, Variant::Z);
        cfg.workers = 1;
        let out = simulate(&spec, &cfg).unwrap();
        let r = &out.ranges;
        for s in &out.sums {
            assert_eq!(s.total, s.part_small + s.part_medium + s.part_large);
            assert!(s.mid_zy_gap.abs() <= 8.0);
            assert_eq!(s.part_medium, sum_medium(&spec, r, s.replica, Variant::Z).unwrap());
            assert_eq!(
                s.part_small,
                sum_small(&spec, r, s.replica, Variant::Z, SmallMode::Coupled).unwrap()
            );
            assert_eq!(
                (s.part_large, s.large_nonzero),
                sum_large(&spec, r, s.replica, Variant::Z).unwrap()
            );
            let v = v_split_diagnostics(&spec, r, s.replica).unwrap();
            assert!(v.identity_holds(), "{v:?}");
        }
    }

    #[test]
    fn budget_refuses_before_work() {
        let spec = ArraySpec::new(1.0, 5).unwrap();
        let mut cfg = SimConfig::new(1 << 12, 1000, Variant::X);
        cfg.budget_draws = 1000;
        assert!(matches!(simulate(&spec, &cfg), Err(Error::Budget { .. })));
        cfg.replicas = 0;
        assert!(simulate(&spec, &cfg).is_err());
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let spec = ArraySpec::new(1.3, 9).unwrap();
        let mut cfg = SimConfig::new(512, 16, Variant::Z);
        cfg.workers = 1;
        let a = simulate(&spec, &cfg).unwrap();
        cfg.workers = 3;
        let b = simulate(&spec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn audit_is_clean_and_catches_tampering() {
        let spec = ArraySpec::new(1.0, 3).unwrap();
        let r = scale_ranges(1.0, 256, 1e-3).unwrap();
        let mut total = EntryAudit::default();
        for rep in 0..20 {
            total.merge(&audit_entries(&spec, &r, SmallMode::Coupled, rep, |_, z| z).unwrap());
        }
        assert!(total.entries > 0);
        assert_eq!(total.violations(), 0);
        let bad = audit_entries(&spec, &r, SmallMode::Coupled, 0, |_, z| z * 0.75).unwrap();
        assert!(bad.violations() > 0);
    }
}
