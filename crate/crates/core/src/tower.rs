//! Rank-one (cutting-and-stacking) systems carrying the functions `f_k`.
//!
//! A system is a stack of stages. Stage `m+1` cuts the stage-`m` tower into
//! `r_m` columns, puts `s_{m,i}` spacer levels on top of column `i`, and
//! stacks the columns left to right. A point of the final tower is a level
//! `L` together with its position `u ∈ [0,1)` inside that level. Relative to
//! stage `m` the same point sits at level `ℓ_m` of copy `N_m`, and its
//! position in the stage-`m` base is `(N_m + u)/R_m` with `R_m = Π_{t≥m} r_t`.
//!
//! `f_k` lives on the first stage whose height reaches `2 d_k`. The base of
//! that stage is read as a base-`D` expansion; the `j`-th digit picks the
//! letter on level `j`, so along a column the letters are i.i.d. with the
//! tower's law. Each `k` reads its own independent position stream.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::array::{lower_cut, row_length_alpha, upper_cut};
use crate::error::{Error, Result};
use crate::gof::{ks_two_sample, EmpiricalSample};
use crate::rng::{RandomKey, StreamTag};
use crate::stable::{make_params, tail_sas};

/// Largest final height accepted by [`build_system`].
pub const MAX_HEIGHT: u64 = 1_000_000;

pub const DEFAULT_DENOMINATOR_BITS: u32 = 12;

// ---------------------------------------------------------------------------
// Systems

#[derive(Debug, Clone, PartialEq)]
pub struct RankOneSystem {
    cut_counts: Vec<u32>,
    spacer_layout: Vec<Vec<u32>>,
    heights: Vec<u64>,
    /// Width of one level at each stage.
    level_widths: Vec<BigRational>,
}

/// Chacon layout for `stages` stages: three columns, one spacer on the
/// middle one.
pub fn chacon_layout(stages: usize) -> (Vec<u32>, Vec<Vec<u32>>) {
    (vec![3; stages], vec![vec![0, 1, 0]; stages])
}

/// Builds the system. The base width is chosen so that the final tower has
/// measure one; earlier stages leave the rest unstacked.
pub fn build_system(cut_counts: &[u32], spacer_layout: &[Vec<u32>], stages: usize) -> Result<RankOneSystem> {
    if cut_counts.len() < stages || spacer_layout.len() < stages {
        return Err(Error::param(
            "cut_counts",
            format!(
                "layout covers {} stages, {stages} requested",
                cut_counts.len().min(spacer_layout.len())
            ),
        ));
    }
    let mut heights = vec![1u64];
    for m in 0..stages {
        let r = cut_counts[m];
        let spacers = &spacer_layout[m];
        if r < 2 {
            return Err(Error::param("cut_counts", format!("r_{m} = {r} < 2")));
        }
        if spacers.len() != r as usize {
            return Err(Error::param(
                "spacer_layout",
                format!("stage {m} lists {} spacer counts for {r} columns", spacers.len()),
            ));
        }
        let h = heights[m] as u128 * r as u128 + spacers.iter().map(|&s| s as u128).sum::<u128>();
        if h > MAX_HEIGHT as u128 {
            return Err(Error::Range(format!(
                "height {h} at stage {} exceeds {MAX_HEIGHT}",
                m + 1
            )));
        }
        heights.push(h as u64);
    }
    // w_M = 1/h_M, and w_m = r_m w_{m+1}.
    let mut level_widths = vec![BigRational::new(BigInt::one(), BigInt::from(heights[stages])); stages + 1];
    for m in (0..stages).rev() {
        level_widths[m] = &level_widths[m + 1] * BigInt::from(cut_counts[m]);
    }
    let system = RankOneSystem {
        cut_counts: cut_counts[..stages].to_vec(),
        spacer_layout: spacer_layout[..stages].to_vec(),
        heights,
        level_widths,
    };
    for m in 0..=stages {
        let (stacked, free) = system.measure_split(m);
        debug_assert_eq!(stacked + free, BigRational::one());
    }
    Ok(system)
}

pub fn default_system(stages: usize) -> Result<RankOneSystem> {
    let (r, s) = chacon_layout(stages);
    build_system(&r, &s, stages)
}

impl RankOneSystem {
    pub fn stages(&self) -> usize {
        self.cut_counts.len()
    }

    pub fn heights(&self) -> &[u64] {
        &self.heights
    }

    pub fn final_height(&self) -> u64 {
        *self.heights.last().expect("at least the initial stage")
    }

    pub fn level_width(&self, m: usize) -> &BigRational {
        &self.level_widths[m]
    }

    /// `(measure of the stage-m tower, unstacked measure)`.
    pub fn measure_split(&self, m: usize) -> (BigRational, BigRational) {
        let stacked = &self.level_widths[m] * BigInt::from(self.heights[m]);
        let free = BigRational::one() - &stacked;
        (stacked, free)
    }

    /// First stage whose tower is at least `height` tall.
    pub fn first_stage_reaching(&self, height: u64) -> Option<usize> {
        self.heights.iter().position(|&h| h >= height)
    }

    /// `R_m`: number of stage-`m` copies in the final tower.
    pub fn copies(&self, m: usize) -> u64 {
        self.cut_counts[m..].iter().map(|&r| r as u64).product()
    }

    /// Final-tower level of stage-`m` level `level` in copy `copy`.
    pub fn compose(&self, m: usize, copy: u64, level: u64) -> u64 {
        let mut l = level;
        let mut n = copy;
        for t in m..self.stages() {
            let below = self.copies(t + 1);
            let column = n / below;
            n %= below;
            l += self.column_offset(t, column as usize);
        }
        l
    }

    fn column_offset(&self, t: usize, column: usize) -> u64 {
        column as u64 * self.heights[t] + self.spacer_layout[t][..column].iter().map(|&s| s as u64).sum::<u64>()
    }

    /// Stage-`m` coordinates `(copy, level)` of final level `l`, or `None`
    /// when `l` is a spacer added after stage `m`.
    pub fn decompose(&self, m: usize, l: u64) -> Option<(u64, u64)> {
        let mut level = l;
        let mut copy = 0u64;
        for t in (m..self.stages()).rev() {
            let h = self.heights[t];
            let mut found = None;
            for (i, &s) in self.spacer_layout[t].iter().enumerate() {
                let off = self.column_offset(t, i);
                if level < off + h {
                    if level >= off {
                        found = Some((i as u64, level - off));
                    }
                    break;
                }
                if level < off + h + s as u64 {
                    break;
                }
            }
            let (column, inner) = found?;
            copy += column * self.copies(t + 1);
            level = inner;
        }
        Some((copy, level))
    }

    pub fn describe(&self) -> SystemDescription {
        SystemDescription {
            cut_counts: self.cut_counts.clone(),
            spacer_layout: self.spacer_layout.clone(),
            heights: self.heights.clone(),
            widths: self.level_widths.iter().map(RationalPair::from).collect(),
            unstacked: (0..=self.stages())
                .map(|m| RationalPair::from(&self.measure_split(m).1))
                .collect(),
        }
    }
}

/// Exact `numer/denom` as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RationalPair(pub String, pub String);

impl From<&BigRational> for RationalPair {
    fn from(r: &BigRational) -> Self {
        RationalPair(r.numer().to_string(), r.denom().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDescription {
    pub cut_counts: Vec<u32>,
    pub spacer_layout: Vec<Vec<u32>>,
    pub heights: Vec<u64>,
    pub widths: Vec<RationalPair>,
    pub unstacked: Vec<RationalPair>,
}

// ---------------------------------------------------------------------------
// Coarsened laws

/// Finite symmetric law with probabilities `counts[i] / 2^denominator_bits`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZLaw {
    /// Ascending, contains 0.
    pub alphabet: Vec<f64>,
    pub counts: Vec<u64>,
    pub denominator_bits: u32,
    /// Total variation distance between the rounded law and the exact
    /// sub-grid law it approximates.
    pub rounding_tv: f64,
}

impl ZLaw {
    pub fn point_mass(denominator_bits: u32) -> Self {
        Self {
            alphabet: vec![0.0],
            counts: vec![1u64 << denominator_bits],
            denominator_bits,
            rounding_tv: 0.0,
        }
    }

    pub fn denominator(&self) -> u64 {
        1u64 << self.denominator_bits
    }

    pub fn pmf(&self) -> Vec<f64> {
        let d = self.denominator() as f64;
        self.counts.iter().map(|&c| c as f64 / d).collect()
    }

    pub fn pmf_exact(&self) -> Vec<BigRational> {
        self.counts
            .iter()
            .map(|&c| BigRational::new(BigInt::from(c), BigInt::from(self.denominator())))
            .collect()
    }

    pub fn is_point_mass(&self) -> bool {
        self.alphabet.len() == 1
    }

    /// Letter index for a base-`D` digit.
    pub fn letter(&self, digit: u64) -> usize {
        let mut acc = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            acc += c;
            if digit < acc {
                return i;
            }
        }
        unreachable!("digit {digit} beyond denominator")
    }

    pub fn zero_index(&self) -> usize {
        self.alphabet
            .iter()
            .position(|&a| a == 0.0)
            .expect("alphabet contains 0")
    }
}

/// Sub-grid law of `Z_k`: bins `[2^{k+i}, 2^{k+i+1})` on each side, the last
/// bin running to `2^{k²}`, each collapsed onto its lower end (a point of
/// the `Z_k` grid). Positive-side probabilities are rounded to multiples of
/// `1/D` and mirrored; zero takes the rest.
pub fn coarsened_z_law(alpha: f64, k: u32, alphabet_cap: usize, denominator_bits: u32) -> Result<ZLaw> {
    if alphabet_cap < 3 {
        return Err(Error::Degenerate(format!(
            "alphabet_cap={alphabet_cap}: need 0 and at least one value of each sign"
        )));
    }
    if !(1..=62).contains(&denominator_bits) {
        return Err(Error::param("prob_denominator", "must be 2^b with 1 <= b <= 62"));
    }
    row_length_alpha(alpha, k)?;
    let sigma = (k as f64).powf(-1.0 / alpha);
    let params = make_params(alpha, sigma)?;
    let lo = lower_cut(k);
    let hi = upper_cut(k);
    let levels = (k * k - k) as usize;
    let bins = ((alphabet_cap - 1) / 2).min(levels);
    if bins == 0 {
        return Err(Error::Degenerate(format!(
            "k={k}: truncation window [2^{k}, 2^{}] has no mass",
            k * k
        )));
    }
    let d = (1u64 << denominator_bits) as f64;
    let mut values = Vec::new();
    let mut exact = Vec::new();
    let mut rounded = Vec::new();
    for i in 0..bins {
        let a = lo * (i as f64).exp2();
        let b = if i + 1 == bins { hi } else { a * 2.0 };
        // One side: half the two-sided tail difference.
        let p = 0.5 * (tail_sas(&params, a)? - if b.is_finite() { tail_sas(&params, b)? } else { 0.0 });
        let p = p.max(0.0);
        values.push(a);
        exact.push(p);
        rounded.push((p * d).round() as u64);
    }
    let positive: u64 = rounded.iter().sum();
    if positive == 0 {
        return Err(Error::Degenerate(format!(
            "k={k}: every nonzero probability rounds to 0 at denominator 2^{denominator_bits}"
        )));
    }
    let denominator = 1u64 << denominator_bits;
    let zero_count = denominator
        .checked_sub(2 * positive)
        .ok_or_else(|| Error::Degenerate(format!("k={k}: rounded mass exceeds one")))?;
    let exact_zero = 1.0 - 2.0 * exact.iter().sum::<f64>();
    let mut tv = (zero_count as f64 / d - exact_zero).abs();
    for (e, r) in exact.iter().zip(&rounded) {
        tv += 2.0 * (*r as f64 / d - e).abs();
    }
    let mut alphabet = Vec::new();
    let mut counts = Vec::new();
    for (v, c) in values.iter().zip(&rounded).rev() {
        if *c > 0 {
            alphabet.push(-v);
            counts.push(*c);
        }
    }
    alphabet.push(0.0);
    counts.push(zero_count);
    for (v, c) in values.iter().zip(&rounded) {
        if *c > 0 {
            alphabet.push(*v);
            counts.push(*c);
        }
    }
    Ok(ZLaw {
        alphabet,
        counts,
        denominator_bits,
        rounding_tv: 0.5 * tv,
    })
}

// ---------------------------------------------------------------------------
// Labeled towers and points

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledTower {
    pub k: u32,
    pub d: u64,
    pub stage: usize,
    pub height: u64,
    /// Copies of the stage in the final tower.
    pub copies: u64,
    pub law: ZLaw,
}

pub fn assign_function(system: &RankOneSystem, alpha: f64, k: u32, law: ZLaw) -> Result<LabeledTower> {
    let d = row_length_alpha(alpha, k)?;
    let stage = system.first_stage_reaching(2 * d).ok_or_else(|| {
        Error::Range(format!(
            "k={k} needs a tower of height 2d_k = {} but the tallest stage has {}",
            2 * d,
            system.final_height()
        ))
    })?;
    Ok(LabeledTower {
        k,
        d,
        stage,
        height: system.heights()[stage],
        copies: system.copies(stage),
        law,
    })
}

/// Lazily drawn binary expansion keyed by `(seed, k, point)`.
struct BitStream {
    key: RandomKey,
    words: Vec<u64>,
}

impl BitStream {
    fn new(master_seed: u64, k: u32, point: u64) -> Self {
        Self {
            key: RandomKey::new(master_seed, StreamTag::TowerPoint, k, 0, point),
            words: Vec::new(),
        }
    }

    fn bit(&mut self, t: usize) -> u64 {
        let w = t / 64;
        while self.words.len() <= w {
            let j = self.words.len() as u64;
            self.words.push(self.key.with_j(j).rng().next_u64());
        }
        (self.words[w] >> (63 - t % 64)) & 1
    }
}

/// Letters of the word on one stage copy, decoded on demand from the digits
/// of `(copy + u)/R` by long division.
struct Word {
    remainder: u64,
    consumed: usize,
    letters: Vec<usize>,
}

/// A uniformly distributed point of the final tower.
pub struct OrbitPoint {
    pub id: u64,
    pub level: u64,
    master_seed: u64,
    streams: HashMap<u32, BitStream>,
    words: HashMap<(u32, u64), Word>,
}

impl OrbitPoint {
    pub fn new(master_seed: u64, id: u64, level: u64) -> Self {
        Self {
            id,
            level,
            master_seed,
            streams: HashMap::new(),
            words: HashMap::new(),
        }
    }

    /// Level drawn uniformly from `[0, height)` by rejection on 64-bit words.
    pub fn sample(master_seed: u64, id: u64, height: u64) -> Self {
        let mut rng = RandomKey::new(master_seed, StreamTag::TowerPoint, 0, 0, id).rng();
        let zone = u64::MAX - u64::MAX % height;
        let level = loop {
            let v = rng.next_u64();
            if v < zone {
                break v % height;
            }
        };
        Self::new(master_seed, id, level)
    }

    fn letter(&mut self, tower: &LabeledTower, copy: u64, level: u64) -> usize {
        let stream = self
            .streams
            .entry(tower.k)
            .or_insert_with(|| BitStream::new(self.master_seed, tower.k, self.id));
        let word = self.words.entry((tower.k, copy)).or_insert(Word {
            remainder: copy,
            consumed: 0,
            letters: Vec::new(),
        });
        let r = tower.copies;
        let b = tower.law.denominator_bits;
        while word.letters.len() <= level as usize {
            let mut digit = 0u64;
            for _ in 0..b {
                let next = 2 * word.remainder + stream.bit(word.consumed);
                word.consumed += 1;
                let q = (next >= r) as u64;
                word.remainder = next - q * r;
                digit = 2 * digit + q;
            }
            word.letters.push(tower.law.letter(digit));
        }
        word.letters[level as usize]
    }

    /// `f_k(T^steps x)`: zero on spacers of the tower's stage.
    pub fn value_at(&mut self, system: &RankOneSystem, tower: &LabeledTower, steps: u64) -> Result<f64> {
        let l = self.level + steps;
        if l >= system.final_height() {
            return Err(Error::Coverage { uncovered: 0.0 });
        }
        Ok(match system.decompose(tower.stage, l) {
            Some((copy, level)) => tower.law.alphabet[self.letter(tower, copy, level)],
            None => 0.0,
        })
    }

    /// Letter index on a given stage copy and level, bypassing the orbit.
    pub fn letter_on(&mut self, tower: &LabeledTower, copy: u64, level: u64) -> usize {
        self.letter(tower, copy, level)
    }
}

/// `Σ_{j<n} Σ_k (f_k(T^j x) - f_k(T^{j+d_k} x))`.
pub fn orbit_sum(system: &RankOneSystem, towers: &[LabeledTower], point: &mut OrbitPoint, n: u64) -> Result<f64> {
    let reach = towers.iter().map(|t| t.d).max().unwrap_or(0) + n;
    if point.level + reach > system.final_height() {
        return Err(Error::Coverage {
            uncovered: reach.saturating_sub(1) as f64 / system.final_height() as f64,
        });
    }
    let mut s = 0.0;
    for t in towers {
        if t.law.is_point_mass() && t.law.alphabet[0] == 0.0 {
            continue;
        }
        for j in 0..n {
            s += point.value_at(system, t, j)? - point.value_at(system, t, j + t.d)?;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    /// Orbit sums in point order.
    pub sums: Vec<f64>,
    /// Points drawn in total, accepted or not.
    pub drawn: u64,
    pub rejected: u64,
    /// Exact measure of starting levels whose orbit leaves the final tower.
    pub uncovered_measure: f64,
}

/// Orbit sums over `count` accepted uniform points; points whose orbit would
/// leave the tower are rejected and counted.
pub fn orbit_sums(
    system: &RankOneSystem,
    towers: &[LabeledTower],
    n: u64,
    count: usize,
    master_seed: u64,
) -> Result<OrbitSample> {
    let h = system.final_height();
    let reach = towers.iter().map(|t| t.d).max().unwrap_or(0) + n;
    if reach > h {
        return Err(Error::Coverage { uncovered: 1.0 });
    }
    let mut sums = Vec::with_capacity(count);
    let mut id = 0;
    let mut rejected = 0;
    while sums.len() < count {
        let mut p = OrbitPoint::sample(master_seed, id, h);
        id += 1;
        match orbit_sum(system, towers, &mut p, n) {
            Ok(s) => sums.push(s),
            Err(Error::Coverage { .. }) => rejected += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(OrbitSample {
        sums,
        drawn: id,
        rejected,
        uncovered_measure: (reach - 1) as f64 / h as f64,
    })
}

// ---------------------------------------------------------------------------
// Array oracle

/// The same sum built from i.i.d. rows drawn from each tower's law, rows
/// extended to `d_k + n` columns.
pub fn oracle_sums(towers: &[LabeledTower], n: u64, count: usize, master_seed: u64) -> Vec<f64> {
    (0..count as u64)
        .map(|rep| {
            let mut s = 0.0;
            for t in towers {
                if t.law.is_point_mass() {
                    continue;
                }
                let draw = |j: u64| {
                    let mut rng = RandomKey::new(master_seed, StreamTag::Oracle, t.k, j, rep).rng();
                    let digit = rng.next_u64() >> (64 - t.law.denominator_bits);
                    t.law.alphabet[t.law.letter(digit)]
                };
                for j in 1..=n {
                    s += draw(j) - draw(j + t.d);
                }
            }
            s
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub k: u32,
    pub levels: u64,
    pub samples: usize,
    /// `Σ` of per-level chi-square statistics.
    pub chi2: f64,
    pub df: u64,
    /// `(chi2 - df) / √(2 df)`.
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCheck {
    pub label: String,
    pub corr: f64,
    /// One standard error under independence, `1/√samples`.
    pub se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub marginals: Vec<MarginalCheck>,
    pub level_pairs: Vec<CorrelationCheck>,
    pub cross_k: Vec<CorrelationCheck>,
    pub pass: bool,
}

/// Chi-square of level letters against `claimed` over base points of the
/// tower's stage, aggregated across levels.
pub fn marginal_check(tower: &LabeledTower, claimed: &[f64], samples: usize, master_seed: u64) -> MarginalCheck {
    let letters = tower.law.alphabet.len();
    let mut counts = vec![vec![0u64; letters]; tower.height as usize];
    for s in 0..samples as u64 {
        let mut p = OrbitPoint::new(master_seed, s, 0);
        let copy = base_copy(master_seed, s, tower.copies);
        for level in 0..tower.height {
            counts[level as usize][p.letter_on(tower, copy, level)] += 1;
        }
    }
    let mut chi2 = 0.0;
    let mut df = 0;
    for row in &counts {
        let mut used = 0;
        for (c, &q) in row.iter().zip(claimed) {
            let e = q * samples as f64;
            if e > 0.0 {
                chi2 += (*c as f64 - e).powi(2) / e;
                used += 1;
            } else if *c > 0 {
                chi2 = f64::INFINITY;
            }
        }
        df += used.max(1) as u64 - 1;
    }
    let z = if df > 0 {
        (chi2 - df as f64) / (2.0 * df as f64).sqrt()
    } else if chi2 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    MarginalCheck {
        k: tower.k,
        levels: tower.height,
        samples,
        chi2,
        df,
        z,
        pass: z <= 3.0,
    }
}

fn base_copy(master_seed: u64, sample: u64, copies: u64) -> u64 {
    let mut rng = RandomKey::new(master_seed, StreamTag::Aux, 0, 1, sample).rng();
    let zone = u64::MAX - u64::MAX % copies;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % copies;
        }
    }
}

fn correlation(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (mx / n, my / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

fn corr_check(label: String, pairs: &[(f64, f64)]) -> Option<CorrelationCheck> {
    let corr = correlation(pairs)?;
    let se = 1.0 / (pairs.len() as f64).sqrt();
    Some(CorrelationCheck {
        label,
        corr,
        se,
        pass: corr.abs() <= 3.0 * se,
    })
}

/// Marginals per level, independence of the nonzero indicator across
/// level pairs, and across towers at a common point.
pub fn embedding_validation(
    system: &RankOneSystem,
    towers: &[LabeledTower],
    samples: usize,
    master_seed: u64,
) -> Result<EmbeddingReport> {
    if samples < 1000 {
        return Err(Error::param("samples", format!("{samples} < 1000")));
    }
    let mut marginals = Vec::new();
    let mut level_pairs = Vec::new();
    for t in towers.iter().filter(|t| !t.law.is_point_mass()) {
        marginals.push(marginal_check(t, &t.law.pmf(), samples, master_seed));
        let zero = t.law.zero_index();
        let mid = t.height / 2;
        for (a, b) in [(0, 1), (0, t.d), (mid, mid + 1)] {
            let pairs: Vec<(f64, f64)> = (0..samples as u64)
                .map(|s| {
                    let mut p = OrbitPoint::new(master_seed, s, 0);
                    let copy = base_copy(master_seed, s, t.copies);
                    let ia = (p.letter_on(t, copy, a) != zero) as u8 as f64;
                    let ib = (p.letter_on(t, copy, b) != zero) as u8 as f64;
                    (ia, ib)
                })
                .collect();
            level_pairs.extend(corr_check(format!("k={} levels ({a},{b})", t.k), &pairs));
        }
    }
    let mut cross_k = Vec::new();
    let live: Vec<&LabeledTower> = towers.iter().filter(|t| !t.law.is_point_mass()).collect();
    let h = system.final_height();
    for (i, a) in live.iter().enumerate() {
        for b in &live[i + 1..] {
            let mut pairs = Vec::with_capacity(samples);
            let mut id = 0u64;
            while pairs.len() < samples {
                let mut p = OrbitPoint::sample(master_seed ^ 0x5EED, id, h);
                id += 1;
                let (Some(_), Some(_)) = (system.decompose(a.stage, p.level), system.decompose(b.stage, p.level))
                else {
                    continue;
                };
                let ia = (p.value_at(system, a, 0)? != 0.0) as u8 as f64;
                let ib = (p.value_at(system, b, 0)? != 0.0) as u8 as f64;
                pairs.push((ia, ib));
            }
            cross_k.extend(corr_check(format!("k={} vs k={}", a.k, b.k), &pairs));
        }
    }
    let pass = marginals.iter().all(|m| m.pass) && level_pairs.iter().all(|c| c.pass) && cross_k.iter().all(|c| c.pass);
    Ok(EmbeddingReport {
        marginals,
        level_pairs,
        cross_k,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub ks: f64,
    pub orbit_count: usize,
    pub oracle_count: usize,
    pub rejected: u64,
    pub uncovered_measure: f64,
}

/// Two-sample KS between scaled orbit sums and the array oracle.
pub fn compare_with_oracle(
    system: &RankOneSystem,
    towers: &[LabeledTower],
    alpha: f64,
    n: u64,
    orbits: usize,
    oracle: usize,
    master_seed: u64,
) -> Result<OracleComparison> {
    let scale = (n as f64).powf(-1.0 / alpha);
    let orb = orbit_sums(system, towers, n, orbits, master_seed)?;
    let a = EmpiricalSample::new(orb.sums.iter().map(|s| s * scale).collect());
    let b = EmpiricalSample::new(
        oracle_sums(towers, n, oracle, master_seed)
            .iter()
            .map(|s| s * scale)
            .collect(),
    );
    Ok(OracleComparison {
        ks: ks_two_sample(&a, &b)?,
        orbit_count: orbits,
        oracle_count: oracle,
        rejected: orb.rejected,
        uncovered_measure: orb.uncovered_measure,
    })
}

/// Exact check that the per-stage measures add to one.
pub fn measure_bookkeeping_holds(system: &RankOneSystem) -> bool {
    (0..=system.stages()).all(|m| {
        let (a, b) = system.measure_split(m);
        b >= BigRational::zero() && a + b == BigRational::one()
    })
}

/// `f64` view of an exact width, for reports.
pub fn width_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
