//! The triangular array of stable entries, their truncations and their
//! quantizations.
//!
//! Row `k` holds i.i.d. `SαS(k^{-1/α})` entries `X_k(j)`. The truncated entry
//! `Y_k(j)` keeps `X_k(j)` only when `2^k ≤ |X_k(j)| ≤ 2^{k²}`, and `Z_k(j)`
//! snaps `Y_k(j)` down onto the grid `2^k + m/d_k`.
//!
//! Entries are generated sparsely. For each row a region `R` of the sampler's
//! uniform inputs is fixed such that `|X| ≥ 2^k` is impossible outside `R`.
//! Column positions inside `R` are drawn per block as a Bernoulli(`P(R)`)
//! process, values inside and outside `R` come from the two conditional
//! laws. The joint law is exactly that of independent stable draws, and a
//! truncated row costs `O(P(R))` per column instead of one sampler call.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{KeyedRng, RandomKey, StreamTag};
use crate::stable::{check_alpha, cms_core};

/// Columns per flag block.
pub const FLAG_BLOCK: u64 = 4096;

/// Largest exponent accepted by [`row_length`].
pub const ROW_EXPONENT_CAP: f64 = 62.0;

/// Inflation of the region threshold, covering rounding in the sampler.
const REGION_SAFETY: f64 = 1.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "X" | "x" => Ok(Variant::X),
            "Y" | "y" => Ok(Variant::Y),
            "Z" | "z" => Ok(Variant::Z),
            other => Err(Error::param("variant", format!("expected X, Y or Z, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    alpha: f64,
    master_seed: u64,
    /// Rows extend to `max(2 d_k, d_k + row_extension)` columns.
    #[serde(default)]
    row_extension: u64,
}

impl ArraySpec {
    pub fn new(alpha: f64, master_seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            alpha,
            master_seed,
            row_extension: 0,
        })
    }

    /// Lets rows run to `d_k + n_max` columns when that exceeds `2 d_k`.
    pub fn with_row_extension(self, n_max: u64) -> Self {
        Self {
            row_extension: n_max,
            ..self
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn row_extension(&self) -> u64 {
        self.row_extension
    }
}

/// `2αk/(2-α)`.
pub fn row_exponent(alpha: f64, k: u32) -> f64 {
    2.0 * alpha * k as f64 / (2.0 - alpha)
}

/// `d_k = floor(2^{2αk/(2-α)})`.
pub fn row_length(spec: &ArraySpec, k: u32) -> Result<u64> {
    row_length_alpha(spec.alpha, k)
}

pub(crate) fn row_length_alpha(alpha: f64, k: u32) -> Result<u64> {
    if k == 0 {
        return Err(Error::param("k", "scale index starts at 1"));
    }
    let x = row_exponent(alpha, k);
    if x > ROW_EXPONENT_CAP {
        return Err(Error::Range(format!(
            "d_k exponent {x:.3} exceeds {ROW_EXPONENT_CAP} at k={k}"
        )));
    }
    // Exponents that are integers up to rounding give exact powers of two.
    let nearest = x.round();
    if (x - nearest).abs() < 1e-9 {
        return Ok(1u64 << nearest as u32);
    }
    Ok(x.exp2().floor() as u64)
}

/// Number of addressable columns in row `k`.
pub fn row_limit(spec: &ArraySpec, k: u32) -> Result<u64> {
    let d = row_length(spec, k)?;
    Ok((2 * d).max(d.saturating_add(spec.row_extension)))
}

/// `k^{-1/α}`.
pub fn row_sigma(alpha: f64, k: u32) -> f64 {
    (k as f64).powf(-1.0 / alpha)
}

/// `2^k`.
pub fn lower_cut(k: u32) -> f64 {
    (k as f64).exp2()
}

/// `2^{k²}`; infinite once it leaves the `f64` range.
pub fn upper_cut(k: u32) -> f64 {
    ((k as f64) * (k as f64)).exp2()
}

pub fn truncate_entry(k: u32, x: f64) -> f64 {
    let a = x.abs();
    if a >= lower_cut(k) && a <= upper_cut(k) {
        x
    } else {
        0.0
    }
}

/// Snaps a truncated entry down onto the grid `2^k + m/d_k`.
///
/// The floor is computed in integer arithmetic from the exact binary
/// expansion of `|y|`, so the grid index is exact; only the final
/// conversion back to `f64` rounds, and it is nudged so that
/// `0 ≤ |y| - |z| ≤ 1/d_k` holds in floating point.
pub fn quantize_entry(spec: &ArraySpec, k: u32, y: f64) -> Result<f64> {
    let d = row_length(spec, k)?;
    quantize_with(k, d, y)
}

pub(crate) fn quantize_with(k: u32, d: u64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(0.0);
    }
    let a = y.abs();
    let lo = lower_cut(k);
    if !(a >= lo && a <= upper_cut(k)) {
        return Err(Error::Contract(format!(
            "quantize_entry expects 0 or |y| in [2^{k}, 2^{}], got {y}",
            k * k
        )));
    }
    let (mant, exp) = decompose(a);
    if exp >= 0 {
        // Integer-valued: (a - 2^k)·d_k is an integer, so `a` is a grid point.
        return Ok(y);
    }
    // a = mant·2^exp with exp < 0 and a ≥ 2^k, so k - exp < 53.
    let shift = (-exp) as u32;
    let scaled_lo = 1i128 << (k as i64 - exp as i64) as u32;
    let num = (mant as i128 - scaled_lo) * d as i128;
    let m = num >> shift;
    let df = d as f64;
    let mut z = lo + m as f64 / df;
    while z > a {
        z = z.next_down();
    }
    while a - z > 1.0 / df {
        z = z.next_up();
    }
    Ok(z.copysign(y))
}

/// `a = mant · 2^exp` with integer `mant < 2^53`, for finite positive `a`.
fn decompose(a: f64) -> (u64, i32) {
    let bits = a.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), biased - 1075)
    }
}

// ---------------------------------------------------------------------------
// Tail region

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailRegion {
    /// Every entry is drawn as flagged; used when `P(R) ≥ 1/2`.
    Dense,
    /// `α = 1`: `R = {h ≤ τ₁/2}`.
    Cauchy { tau1: f64 },
    /// `α < 1`: `R = {h ≤ τ₁/2} ∪ {E ≤ τ₂}`.
    Light { tau1: f64, tau2: f64 },
    /// `α > 1`: `R = {h ≤ τ₁/2} ∪ {E ≥ τ₂}`.
    Heavy { tau1: f64, tau2: f64 },
}

impl TailRegion {
    /// For the sampler inputs, `h` is the distance of the angle's uniform
    /// from the nearest endpoint and `E` the exponential. With
    /// `m = cos U ≥ 2h` the transform satisfies
    /// `|X/σ|^α ≤ m^{-1} E^{α-1}` for `α < 1`,
    /// `|X/σ|^α ≤ m^{-1} (E/κ)^{α-1}` with `κ = cos((α-1)π/2)` for `α > 1`,
    /// and `|X/σ| ≤ 1/m` for `α = 1`. Each region below is the complement of
    /// a product set on which these bounds stay under `(t/σ)^α`.
    pub fn for_threshold(alpha: f64, sigma: f64, t: f64) -> Self {
        let c = (sigma / t).powf(alpha) * REGION_SAFETY;
        let region = if alpha == 1.0 {
            TailRegion::Cauchy { tau1: c }
        } else {
            let mut best = (f64::INFINITY, TailRegion::Dense);
            let lo = c.ln() - 40.0;
            let steps = 800;
            for i in 0..=steps {
                let tau1 = (lo + (0.0 - lo) * i as f64 / steps as f64).exp();
                let r = if alpha < 1.0 {
                    TailRegion::Light {
                        tau1,
                        tau2: (c / tau1).powf(1.0 / (1.0 - alpha)),
                    }
                } else {
                    let kappa = ((alpha - 1.0) * FRAC_PI_2).cos();
                    TailRegion::Heavy {
                        tau1,
                        tau2: kappa * (tau1 / c).powf(1.0 / (alpha - 1.0)),
                    }
                };
                let q = r.probability();
                if q < best.0 {
                    best = (q, r);
                }
            }
            best.1
        };
        if region.probability() >= 0.5 {
            TailRegion::Dense
        } else {
            region
        }
    }

    fn tau1(&self) -> f64 {
        match *self {
            TailRegion::Dense => 1.0,
            TailRegion::Cauchy { tau1 } | TailRegion::Light { tau1, .. } | TailRegion::Heavy { tau1, .. } => tau1,
        }
    }

    /// `P(h ≤ τ₁/2)`.
    fn angle_part(&self) -> f64 {
        self.tau1().min(1.0)
    }

    /// Probability of the exponential condition.
    fn exp_part(&self) -> f64 {
        match *self {
            TailRegion::Dense => 1.0,
            TailRegion::Cauchy { .. } => 0.0,
            TailRegion::Light { tau2, .. } => -(-tau2).exp_m1(),
            TailRegion::Heavy { tau2, .. } => (-tau2).exp(),
        }
    }

    /// `P(R)`.
    pub fn probability(&self) -> f64 {
        let (a, b) = (self.angle_part(), self.exp_part());
        (a + b - a * b).min(1.0)
    }

    /// Exponential conditioned on the region's exponential event (or on its
    /// complement when `inside` is false).
    fn exp_given(&self, rng: &mut KeyedRng, inside: bool) -> f64 {
        match (*self, inside) {
            (TailRegion::Light { tau2, .. }, true) | (TailRegion::Heavy { tau2, .. }, false) => {
                // E | E ≤ τ₂
                -(rng.open01() * (-tau2).exp_m1()).ln_1p()
            }
            (TailRegion::Light { tau2, .. }, false) | (TailRegion::Heavy { tau2, .. }, true) => tau2 + rng.exp1(),
            _ => rng.exp1(),
        }
    }

    /// `(positive, h, E)` drawn from the sampler inputs conditioned on `R`.
    fn draw_inside(&self, rng: &mut KeyedRng) -> (bool, f64, f64) {
        let positive = rng.bit();
        if let TailRegion::Dense = self {
            let h = 0.5 * rng.open01();
            return (positive, h, rng.exp1());
        }
        let (a, q) = (self.angle_part(), self.probability());
        let half = 0.5 * self.tau1();
        if rng.open01() * q < a {
            (positive, half * rng.open01(), rng.exp1())
        } else {
            let h = half + (0.5 - half) * rng.open01();
            (positive, h, self.exp_given(rng, true))
        }
    }

    /// Inputs conditioned on the complement of `R`.
    fn draw_outside(&self, rng: &mut KeyedRng) -> (bool, f64, f64) {
        let positive = rng.bit();
        let half = 0.5 * self.tau1();
        let h = half + (0.5 - half) * rng.open01();
        (positive, h, self.exp_given(rng, false))
    }
}

// ---------------------------------------------------------------------------
// Rows

/// Everything needed to generate one row, computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowPlan {
    pub k: u32,
    pub alpha: f64,
    pub master_seed: u64,
    pub d: u64,
    pub limit: u64,
    pub sigma: f64,
    pub region: TailRegion,
}

impl RowPlan {
    pub fn new(spec: &ArraySpec, k: u32) -> Result<Self> {
        let d = row_length(spec, k)?;
        let sigma = row_sigma(spec.alpha, k);
        Ok(Self {
            k,
            alpha: spec.alpha,
            master_seed: spec.master_seed,
            d,
            limit: row_limit(spec, k)?,
            sigma,
            region: TailRegion::for_threshold(spec.alpha, sigma, lower_cut(k)),
        })
    }

    fn key(&self, tag: StreamTag, j: u64, replica: u64) -> RandomKey {
        RandomKey::new(self.master_seed, tag, self.k, j, replica)
    }

    fn check_range(&self, range: &RangeInclusive<u64>) -> Result<()> {
        if range.is_empty() {
            return Ok(());
        }
        if *range.start() < 1 || *range.end() > self.limit {
            return Err(Error::Range(format!(
                "columns {}..={} outside row {} of length {}",
                range.start(),
                range.end(),
                self.k,
                self.limit
            )));
        }
        Ok(())
    }

    /// Sorted flagged columns of one block (1-based `j`).
    fn block_flags(&self, block: u64, replica: u64) -> Vec<u64> {
        let first = block * FLAG_BLOCK + 1;
        let last = first + FLAG_BLOCK - 1;
        if let TailRegion::Dense = self.region {
            return (first..=last).collect();
        }
        let q = self.region.probability();
        let log_miss = (-q).ln_1p();
        let mut rng = self.key(StreamTag::TailFlags, block, replica).rng();
        let mut out = Vec::new();
        let mut pos = first - 1;
        loop {
            let gap = (rng.open01().ln() / log_miss).floor();
            if gap >= (last - pos) as f64 {
                break;
            }
            pos += gap as u64 + 1;
            out.push(pos);
        }
        out
    }

    fn flagged_in(&self, range: &RangeInclusive<u64>, replica: u64) -> Vec<u64> {
        if range.is_empty() {
            return Vec::new();
        }
        let (b0, b1) = ((range.start() - 1) / FLAG_BLOCK, (range.end() - 1) / FLAG_BLOCK);
        let mut out = Vec::new();
        for b in b0..=b1 {
            out.extend(self.block_flags(b, replica).into_iter().filter(|j| range.contains(j)));
        }
        out
    }

    fn is_flagged(&self, j: u64, replica: u64) -> bool {
        self.block_flags((j - 1) / FLAG_BLOCK, replica)
            .binary_search(&j)
            .is_ok()
    }

    fn raw_value(&self, j: u64, replica: u64, flagged: bool) -> f64 {
        let (positive, h, e) = if flagged {
            self.region
                .draw_inside(&mut self.key(StreamTag::TailValue, j, replica).rng())
        } else {
            self.region
                .draw_outside(&mut self.key(StreamTag::BodyValue, j, replica).rng())
        };
        cms_core(self.alpha, self.sigma, positive, h, e)
    }

    fn variant_value(&self, x: f64, variant: Variant) -> f64 {
        match variant {
            Variant::X => x,
            Variant::Y => truncate_entry(self.k, x),
            Variant::Z => quantize_with(self.k, self.d, truncate_entry(self.k, x))
                .expect("truncated entries satisfy the quantizer contract"),
        }
    }

    pub fn entry(&self, j: u64, replica: u64, variant: Variant) -> Result<f64> {
        self.check_range(&(j..=j))?;
        let x = self.raw_value(j, replica, self.is_flagged(j, replica));
        Ok(self.variant_value(x, variant))
    }

    /// Nonzero entries of the window as `(j, value)`, in column order. For
    /// `X` every column is returned.
    pub fn support(&self, range: RangeInclusive<u64>, replica: u64, variant: Variant) -> Result<Vec<(u64, f64)>> {
        self.check_range(&range)?;
        let flagged = self.flagged_in(&range, replica);
        if variant == Variant::X {
            let mut out = Vec::with_capacity(range.clone().count());
            let mut next = flagged.iter().peekable();
            for j in range {
                let f = next.next_if_eq(&&j).is_some();
                out.push((j, self.raw_value(j, replica, f)));
            }
            return Ok(out);
        }
        Ok(flagged
            .into_iter()
            .filter_map(|j| {
                let v = self.variant_value(self.raw_value(j, replica, true), variant);
                (v != 0.0).then_some((j, v))
            })
            .collect())
    }

    /// Raw values of every entry in the tail region, in column order. Every
    /// entry with `|X| ≥ 2^k` is among them.
    pub fn flagged_raw(&self, range: RangeInclusive<u64>, replica: u64) -> Result<Vec<(u64, f64)>> {
        self.check_range(&range)?;
        Ok(self
            .flagged_in(&range, replica)
            .into_iter()
            .map(|j| (j, self.raw_value(j, replica, true)))
            .collect())
    }

    /// Plain sum of the window.
    pub fn window_sum(&self, range: RangeInclusive<u64>, replica: u64, variant: Variant) -> Result<f64> {
        Ok(self.support(range, replica, variant)?.iter().map(|&(_, v)| v).sum())
    }

    /// Columns that need a full sampler call for this variant, in expectation.
    pub fn expected_draws(&self, columns: u64, variant: Variant) -> f64 {
        match variant {
            Variant::X => columns as f64,
            _ => columns as f64 * self.region.probability(),
        }
    }
}

/// Violations of the quantizer contract by a candidate `z` for `y`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerCheck {
    /// `|z - y| > 1/d_k`, or `z` lies above `y` in magnitude.
    pub gap: bool,
    /// Exactly one of `y`, `z` is zero, or their signs differ.
    pub support: bool,
    /// `|z|` is not of the form `2^k + m/d_k`, up to the resolution of `f64`.
    pub grid: bool,
}

impl QuantizerCheck {
    pub fn ok(&self) -> bool {
        !(self.gap || self.support || self.grid)
    }
}

pub fn check_quantized(k: u32, d: u64, y: f64, z: f64) -> QuantizerCheck {
    let mut c = QuantizerCheck::default();
    if (y == 0.0) != (z == 0.0) || (z != 0.0 && y.signum() != z.signum()) {
        c.support = true;
    }
    let df = d as f64;
    if (y - z).abs() > 1.0 / df || z.abs() > y.abs() {
        c.gap = true;
    }
    if z != 0.0 {
        let a = z.abs();
        let m = (a - lower_cut(k)) * df;
        let slack = 4.0 * f64::EPSILON * a * df;
        if a < lower_cut(k) || (m - m.round()).abs() > slack.max(1e-9) {
            c.grid = true;
        }
    }
    c
}

pub fn raw_entry(spec: &ArraySpec, k: u32, j: u64, replica: u64) -> Result<f64> {
    RowPlan::new(spec, k)?.entry(j, replica, Variant::X)
}

pub fn z_entry(spec: &ArraySpec, k: u32, j: u64, replica: u64) -> Result<f64> {
    RowPlan::new(spec, k)?.entry(j, replica, Variant::Z)
}

/// Lazily generated window values, one per column, zeros included.
pub fn window_entries(
    spec: &ArraySpec,
    k: u32,
    j_range: RangeInclusive<u64>,
    replica: u64,
    variant: Variant,
) -> Result<WindowIter> {
    let plan = RowPlan::new(spec, k)?;
    plan.check_range(&j_range)?;
    Ok(WindowIter {
        plan,
        replica,
        variant,
        next_j: *j_range.start(),
        end: if j_range.is_empty() { 0 } else { *j_range.end() },
        block: u64::MAX,
        flags: Vec::new(),
    })
}

pub struct WindowIter {
    plan: RowPlan,
    replica: u64,
    variant: Variant,
    next_j: u64,
    end: u64,
    block: u64,
    flags: Vec<u64>,
}

impl Iterator for WindowIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.next_j > self.end || self.end == 0 {
            return None;
        }
        let j = self.next_j;
        self.next_j += 1;
        let b = (j - 1) / FLAG_BLOCK;
        if b != self.block {
            self.block = b;
            self.flags = self.plan.block_flags(b, self.replica);
        }
        let flagged = self.flags.binary_search(&j).is_ok();
        if !flagged && self.variant != Variant::X {
            return Some(0.0);
        }
        let x = self.plan.raw_value(j, self.replica, flagged);
        Some(self.plan.variant_value(x, self.variant))
    }
}

// ---------------------------------------------------------------------------
// Binary dumps

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSidecar {
    pub alpha: f64,
    pub k: u32,
    pub j_range: [u64; 2],
    pub replica: u64,
    pub variant: Variant,
    pub master_seed: u64,
}

/// Writes the window as little-endian `f64` values and returns the sidecar
/// describing it.
pub fn dump_window<W: Write>(
    spec: &ArraySpec,
    k: u32,
    j_range: RangeInclusive<u64>,
    replica: u64,
    variant: Variant,
    mut out: W,
) -> Result<WindowSidecar> {
    let sidecar = WindowSidecar {
        alpha: spec.alpha,
        k,
        j_range: [*j_range.start(), *j_range.end()],
        replica,
        variant,
        master_seed: spec.master_seed,
    };
    for v in window_entries(spec, k, j_range, replica, variant)? {
        out.write_all(&v.to_le_bytes())
            .map_err(|e| Error::Range(format!("dump write failed: {e}")))?;
    }
    Ok(sidecar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(alpha: f64) -> ArraySpec {
        ArraySpec::new(alpha, 7).unwrap()
    }

    #[test]
    fn row_lengths() {
        assert_eq!(row_length(&spec(1.0), 3).unwrap(), 64);
        assert_eq!(row_length(&spec(1.0), 1).unwrap(), 4);
        assert_eq!(row_length(&spec(0.5), 3).unwrap(), 4);
        assert_eq!(row_length(&spec(1.0), 31).unwrap(), 1 << 62);
        assert!(matches!(row_length(&spec(1.0), 32), Err(Error::Range(_))));
    }

    #[test]
    fn truncation_examples() {
        assert_eq!(truncate_entry(2, 5.3), 5.3);
        assert_eq!(truncate_entry(2, 3.9), 0.0);
        assert_eq!(truncate_entry(2, -4.0), -4.0);
        assert_eq!(truncate_entry(2, 16.0), 16.0);
        assert_eq!(truncate_entry(2, 16.5), 0.0);
    }

    #[test]
    fn quantize_examples() {
        let s = spec(1.0);
        assert_eq!(quantize_entry(&s, 2, 5.3).unwrap(), 5.25);
        assert_eq!(quantize_entry(&s, 2, -5.3).unwrap(), -5.25);
        assert_eq!(quantize_entry(&s, 2, 0.0).unwrap(), 0.0);
        assert_eq!(quantize_entry(&s, 2, 16.0).unwrap(), 16.0);
        assert!(matches!(quantize_entry(&s, 2, 3.0), Err(Error::Contract(_))));
    }

    #[test]
    fn quantize_non_power_of_two_rows() {
        // α = 1.5 gives d_1 = 8, d_2 = 64, d_3 = 512; α = 0.7 gives irregular d_k.
        for alpha in [0.7, 1.3, 1.5] {
            let s = spec(alpha);
            for k in 1..5 {
                let d = row_length(&s, k).unwrap() as f64;
                for i in 0..2000 {
                    let y = lower_cut(k) * (1.0 + i as f64 * 0.013_7);
                    if y > upper_cut(k) {
                        break;
                    }
                    let z = quantize_entry(&s, k, y).unwrap();
                    assert!(z <= y && y - z <= 1.0 / d, "{alpha} {k} {y} {z}");
                    let m = ((z - lower_cut(k)) * d).round();
                    assert!(((lower_cut(k) + m / d) - z).abs() <= 4.0 * f64::EPSILON * z);
                }
            }
        }
    }

    #[test]
    fn region_probability_is_small_deep_in_the_tail() {
        for alpha in [0.5, 1.0, 1.5] {
            let r = TailRegion::for_threshold(alpha, row_sigma(alpha, 12), lower_cut(12));
            assert!(r.probability() < 0.05, "{alpha}: {r:?}");
        }
    }

    #[test]
    fn region_covers_the_tail() {
        // No draw outside the region may reach the threshold.
        for alpha in [0.4, 0.8, 1.0, 1.2, 1.7] {
            for k in [1, 2, 3, 6] {
                let s = spec(alpha);
                let Ok(plan) = RowPlan::new(&s, k) else { continue };
                for j in 1..=20_000 {
                    let x = plan.raw_value(j, 0, false);
                    if !matches!(plan.region, TailRegion::Dense) {
                        assert!(x.abs() < lower_cut(k), "{alpha} {k} {x}");
                    }
                }
            }
        }
    }

    #[test]
    fn window_matches_entries_and_support() {
        let s = spec(1.0).with_row_extension(10_000);
        let plan = RowPlan::new(&s, 3).unwrap();
        for variant in [Variant::X, Variant::Y, Variant::Z] {
            let w: Vec<f64> = window_entries(&s, 3, 1..=9000, 2, variant).unwrap().collect();
            assert_eq!(w.len(), 9000);
            for j in [1u64, 77, 4096, 4097, 8999] {
                assert_eq!(w[j as usize - 1], plan.entry(j, 2, variant).unwrap());
            }
            let sup = plan.support(1..=9000, 2, variant).unwrap();
            for (j, v) in sup {
                assert_eq!(w[j as usize - 1], v);
            }
        }
    }

    #[test]
    #[allow(clippy::reversed_empty_ranges)]
    fn window_edges() {
        let s = spec(1.0);
        assert_eq!(window_entries(&s, 2, 1..=32, 0, Variant::Z).unwrap().count(), 32);
        assert_eq!(window_entries(&s, 2, 5..=4, 0, Variant::Z).unwrap().count(), 0);
        assert!(window_entries(&s, 2, 1..=33, 0, Variant::Z).is_err());
        assert!(window_entries(&s, 2, 0..=3, 0, Variant::Z).is_err());
    }

    #[test]
    fn variants_agree_on_shared_draws() {
        let s = spec(0.8);
        for k in 1..4 {
            let plan = RowPlan::new(&s, k).unwrap();
            for j in 1..=plan.limit.min(3000) {
                let x = plan.entry(j, 1, Variant::X).unwrap();
                let y = plan.entry(j, 1, Variant::Y).unwrap();
                let z = plan.entry(j, 1, Variant::Z).unwrap();
                assert_eq!(y, truncate_entry(k, x));
                assert_eq!(z, quantize_entry(&s, k, y).unwrap());
                assert_eq!(z == 0.0, y == 0.0);
            }
        }
    }

    #[test]
    fn dump_layout() {
        let s = spec(1.0);
        let mut buf = Vec::new();
        let side = dump_window(&s, 2, 3..=6, 0, Variant::X, &mut buf).unwrap();
        assert_eq!(buf.len(), 32);
        assert_eq!(side.j_range, [3, 6]);
        let first = f64::from_le_bytes(buf[..8].try_into().unwrap());
        assert_eq!(first, raw_entry(&s, 2, 3, 0).unwrap());
    }

    #[test]
    fn quantizer_check_flags_bad_candidates() {
        let (k, d) = (3u32, 40u64);
        let y = 9.3;
        let z = quantize_with(k, d, y).unwrap();
        assert!(check_quantized(k, d, y, z).ok());
        assert!(check_quantized(k, d, 0.0, 0.0).ok());
        assert!(check_quantized(k, d, -y, -z).ok());
        assert!(check_quantized(k, d, y, z + 0.4 / d as f64).grid);
        assert!(check_quantized(k, d, y, z - 2.0 / d as f64).gap);
        assert!(check_quantized(k, d, y, 0.0).support);
        assert!(check_quantized(k, d, y, -z).support);
    }
}
