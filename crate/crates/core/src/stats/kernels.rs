//! Non-parametric tests and effect sizes. Ties use average ranks throughout.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

/// Significance level for one-tailed tests.
pub const ALPHA: f64 = 0.05;

/// Pooled sample size up to which Mann–Whitney p-values are exact.
pub const EXACT_MWU_MAX: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("empty sample")]
    EmptySample,
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("at least {0} observations required")]
    TooFewObservations(usize),
    #[error("non-finite value in sample")]
    NonFinite,
    #[error("negative value in sample")]
    Negative,
    #[error("contingency table has a zero marginal")]
    ZeroMarginal,
    #[error("ranking has zero variance")]
    ZeroVariance,
}

fn check(sample: &[f64]) -> Result<(), StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if sample.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfRow {
    pub threshold: f64,
    /// Share of the sample at or above `threshold`.
    pub fraction: f64,
}

/// CCDF evaluated at every distinct sample value, ascending.
pub fn ccdf(sample: &[f64]) -> Result<Vec<CcdfRow>, StatsError> {
    check(sample)?;
    if sample.iter().any(|v| *v < 0.0) {
        return Err(StatsError::Negative);
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let v = sorted[i];
        out.push(CcdfRow {
            threshold: v,
            fraction: (sorted.len() - i) as f64 / n,
        });
        while i < sorted.len() && sorted[i] == v {
            i += 1;
        }
    }
    Ok(out)
}

/// Fraction of the sample at or above `t`, read from a CCDF table.
pub fn ccdf_value(table: &[CcdfRow], t: f64) -> f64 {
    table.iter().find(|r| r.threshold >= t).map_or(0.0, |r| r.fraction)
}

/// 1-based average ranks.
pub fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MwuMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first sample.
    pub u: f64,
    /// P(U ≥ observed) under H0.
    pub p_value: f64,
    /// The first sample is stochastically greater at [`ALPHA`].
    pub greater: bool,
    pub method: MwuMethod,
    /// Every pooled value is identical; the test carries no information.
    pub degenerate: bool,
}

/// One-tailed test of H1: `a` is stochastically greater than `b`.
pub fn mann_whitney_one_tailed(a: &[f64], b: &[f64]) -> Result<MannWhitney, StatsError> {
    check(a)?;
    check(b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let r = ranks(&pooled);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let rank_sum_a: f64 = r[..a.len()].iter().sum();
    let u = rank_sum_a - na * (na + 1.0) / 2.0;
    let method = if pooled.len() <= EXACT_MWU_MAX { MwuMethod::Exact } else { MwuMethod::Normal };
    if pooled.iter().all(|v| *v == pooled[0]) {
        return Ok(MannWhitney {
            u,
            p_value: 0.5,
            greater: false,
            method,
            degenerate: true,
        });
    }
    let p_value = match method {
        MwuMethod::Exact => exact_upper_tail(&r, a.len(), rank_sum_a),
        MwuMethod::Normal => {
            let n = na + nb;
            let tie_term: f64 = tie_groups(&pooled).iter().map(|&t| t * t * t - t).sum();
            let var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
            let z = (u - na * nb / 2.0 - 0.5) / var.sqrt();
            let normal = Normal::new(0.0, 1.0).expect("standard normal");
            1.0 - normal.cdf(z)
        }
    };
    Ok(MannWhitney {
        u,
        p_value,
        greater: p_value < ALPHA,
        method,
        degenerate: false,
    })
}

fn tie_groups(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .chunk_by(|x, y| x == y)
        .filter(|g| g.len() > 1)
        .map(|g| g.len() as f64)
        .collect()
}

/// P(rank sum of a random `k`-subset ≥ observed), counted exactly. Ranks are
/// doubled so midranks become integers.
fn exact_upper_tail(ranks: &[f64], k: usize, observed: f64) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    // ways[j][s]: subsets of size j with doubled rank sum s.
    let mut ways = vec![vec![0u128; max_sum + 1]; k + 1];
    ways[0][0] = 1;
    for &d in &doubled {
        for j in (1..=k).rev() {
            for s in (d..=max_sum).rev() {
                ways[j][s] += ways[j - 1][s - d];
            }
        }
    }
    let threshold = (observed * 2.0).round() as usize;
    let total: u128 = ways[k].iter().sum();
    let tail: u128 = ways[k][threshold.min(max_sum + 1)..].iter().sum();
    tail as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub delta: f64,
    pub magnitude: Magnitude,
}

pub fn delta_magnitude(delta: f64) -> Magnitude {
    let d = delta.abs();
    if d <= 0.147 {
        Magnitude::Negligible
    } else if d <= 0.33 {
        Magnitude::Small
    } else if d <= 0.474 {
        Magnitude::Medium
    } else {
        Magnitude::Large
    }
}

/// Cliff's delta by merging the sorted samples, O((m + n) log(m + n)).
pub fn cliffs_delta(a: &[f64], b: &[f64]) -> Result<EffectSize, StatsError> {
    check(a)?;
    check(b)?;
    let mut sb = b.to_vec();
    sb.sort_by(f64::total_cmp);
    let mut dominance: i128 = 0;
    for x in a {
        let below = sb.partition_point(|y| y < x);
        let not_above = sb.partition_point(|y| y <= x);
        let above = sb.len() - not_above;
        dominance += below as i128 - above as i128;
    }
    let delta = dominance as f64 / (a.len() as f64 * b.len() as f64);
    Ok(EffectSize {
        delta,
        magnitude: delta_magnitude(delta),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhiMagnitude {
    /// φ = 0, outside every labelled band.
    None,
    Small,
    Medium,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEffect {
    pub phi: f64,
    pub magnitude: PhiMagnitude,
}

pub fn phi_magnitude(phi: f64) -> PhiMagnitude {
    let p = phi.abs();
    if p == 0.0 {
        PhiMagnitude::None
    } else if p <= 0.3 {
        PhiMagnitude::Small
    } else if p <= 0.5 {
        PhiMagnitude::Medium
    } else {
        PhiMagnitude::Large
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare2x2 {
    pub chi2: f64,
    pub p_value: f64,
    pub effect: PhiEffect,
    pub n: u64,
}

/// Pearson chi-square on a 2×2 table, no continuity correction.
pub fn chi_square_2x2(table: [[u64; 2]; 2]) -> Result<ChiSquare2x2, StatsError> {
    let [[a, b], [c, d]] = table.map(|r| r.map(|v| v as f64));
    let n = a + b + c + d;
    let marginals = [a + b, c + d, a + c, b + d];
    if marginals.iter().any(|m| *m == 0.0) {
        return Err(StatsError::ZeroMarginal);
    }
    let diff = a * d - b * c;
    let chi2 = n * diff * diff / marginals.iter().product::<f64>();
    let phi = (chi2 / n).sqrt();
    Ok(ChiSquare2x2 {
        chi2,
        p_value: chi2_sf(chi2, 1.0),
        effect: PhiEffect {
            phi,
            magnitude: phi_magnitude(phi),
        },
        n: table.iter().flatten().sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub n: u64,
}

/// Pearson chi-square test of independence on an r×c table.
pub fn chi_square_independence(table: &[Vec<u64>]) -> Result<ChiSquareTest, StatsError> {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows < 2 || cols < 2 || table.iter().any(|r| r.len() != cols) {
        return Err(StatsError::TooFewObservations(4));
    }
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
    let col_sums: Vec<f64> = (0..cols).map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64).collect();
    if row_sums.iter().chain(&col_sums).any(|m| *m == 0.0) {
        return Err(StatsError::ZeroMarginal);
    }
    let n: f64 = row_sums.iter().sum();
    let mut chi2 = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = row_sums[i] * col_sums[j] / n;
            chi2 += (o as f64 - e).powi(2) / e;
        }
    }
    let dof = (rows - 1) * (cols - 1);
    Ok(ChiSquareTest {
        chi2,
        dof,
        p_value: chi2_sf(chi2, dof as f64),
        n: n as u64,
    })
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    (1.0 - dist.cdf(x)).max(0.0)
}

/// Spearman's rho as the Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(StatsError::TooFewObservations(2));
    }
    check(x)?;
    check(y)?;
    pearson(&ranks(x), &ranks(y))
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand::distributions::Distribution;
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Ranks by counting: below + (equal + 1) / 2.
    fn rank_oracle(values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .map(|v| {
                let below = values.iter().filter(|w| *w < v).count() as f64;
                let equal = values.iter().filter(|w| *w == v).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }

    /// Every k-subset of pooled positions, counting those with U ≥ observed.
    fn enumeration_oracle(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let r = rank_oracle(&pooled);
        let k = a.len();
        let observed: f64 = r[..k].iter().sum();
        let n = pooled.len();
        let (mut hit, mut total) = (0u64, 0u64);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            total += 1;
            let s: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| r[i]).sum();
            if s >= observed - 1e-9 {
                hit += 1;
            }
        }
        hit as f64 / total as f64
    }

    fn pairwise_delta(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0i64;
        for x in a {
            for y in b {
                s += (x > y) as i64 - (x < y) as i64;
            }
        }
        s as f64 / (a.len() * b.len()) as f64
    }

    #[test]
    fn ccdf_examples() {
        let t = ccdf(&[1.0, 1.0, 2.0, 5.0]).unwrap();
        assert_eq!(ccdf_value(&t, 2.0), 0.5);
        assert_eq!(t[0].fraction, 1.0);
        assert_eq!(ccdf(&[3.0; 4]).unwrap(), vec![CcdfRow { threshold: 3.0, fraction: 1.0 }]);
        assert_eq!(ccdf(&[]), Err(StatsError::EmptySample));
        assert_eq!(ccdf(&[-1.0]), Err(StatsError::Negative));
    }

    #[test]
    fn mwu_maximal_separation() {
        let r = mann_whitney_one_tailed(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u, 9.0);
        assert_eq!(r.method, MwuMethod::Exact);
        // One of C(6,3) = 20 assignments reaches U = 9.
        assert!(approx(r.p_value, 1.0 / 20.0, 1e-12));
        assert!(approx(enumeration_oracle(&[5.0, 6.0, 7.0], &[1.0, 2.0, 3.0]), 0.05, 1e-12));
    }

    #[test]
    fn mwu_identical_samples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let r = mann_whitney_one_tailed(&a, &a).unwrap();
        assert!(r.p_value >= 0.5);
        assert!(!r.greater);
        let big: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        let r = mann_whitney_one_tailed(&big, &big).unwrap();
        assert_eq!(r.method, MwuMethod::Normal);
        assert!(r.p_value >= 0.5);
        let d = mann_whitney_one_tailed(&[2.0; 15], &[2.0; 15]).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.p_value, 0.5);
    }

    /// Normal-approximation p against a 10^5-resample permutation p.
    fn permutation_check(shift: f64, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let a: Vec<f64> = (0..50).map(|_| normal.sample(&mut rng) + shift).collect();
        let b: Vec<f64> = (0..50).map(|_| normal.sample(&mut rng)).collect();
        let r = mann_whitney_one_tailed(&a, &b).unwrap();
        assert_eq!(r.method, MwuMethod::Normal);
        // U as the pair count with ties scored one half.
        let u_of = |pooled: &[f64]| {
            let (x, y) = pooled.split_at(50);
            let mut u = 0.0;
            for p in x {
                for q in y {
                    u += if p > q { 1.0 } else if p == q { 0.5 } else { 0.0 };
                }
            }
            u
        };
        let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        let observed = u_of(&pooled);
        assert_eq!(observed, r.u);
        let resamples = 100_000;
        let mut hits = 0;
        for _ in 0..resamples {
            pooled.shuffle(&mut rng);
            if u_of(&pooled) >= observed {
                hits += 1;
            }
        }
        (r.p_value, hits as f64 / resamples as f64)
    }

    #[test]
    fn mwu_normal_matches_permutation_oracle() {
        let (p, perm) = permutation_check(1.0, 7);
        assert!(p < 0.05);
        assert!(approx(p, perm, 0.01), "normal {p} vs permutation {perm}");
        // A weak shift keeps the p-value away from zero.
        let (p, perm) = permutation_check(0.25, 11);
        assert!(p > 0.01, "p {p}");
        assert!(approx(p, perm, 0.01), "normal {p} vs permutation {perm}");
    }

    #[test]
    fn cliffs_examples() {
        let e = cliffs_delta(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((e.delta, e.magnitude), (1.0, Magnitude::Large));
        let e = cliffs_delta(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((e.delta, e.magnitude), (0.0, Magnitude::Negligible));
        assert_eq!(delta_magnitude(0.34), Magnitude::Medium);
        assert_eq!(delta_magnitude(0.37), Magnitude::Medium);
        assert_eq!(delta_magnitude(0.27), Magnitude::Small);
        assert_eq!(delta_magnitude(0.52), Magnitude::Large);
        assert_eq!(delta_magnitude(0.147), Magnitude::Negligible);
        assert_eq!(delta_magnitude(0.33), Magnitude::Small);
        assert_eq!(delta_magnitude(-0.474), Magnitude::Medium);
    }

    #[test]
    fn chi_square_examples() {
        let r = chi_square_2x2([[19547, 28691], [1140, 29793]]).unwrap();
        assert!(approx(r.effect.phi, 0.4, 0.02), "phi {}", r.effect.phi);
        assert_eq!(r.effect.magnitude, PhiMagnitude::Medium);
        assert!(r.p_value < 0.05);
        let r = chi_square_2x2([[10, 10], [10, 10]]).unwrap();
        assert_eq!((r.chi2, r.effect.phi), (0.0, 0.0));
        assert!(approx(r.p_value, 1.0, 1e-12));
        assert_eq!(chi_square_2x2([[0, 0], [3, 4]]), Err(StatsError::ZeroMarginal));
        assert_eq!(phi_magnitude(0.3), PhiMagnitude::Small);
        assert_eq!(phi_magnitude(0.5), PhiMagnitude::Medium);
        assert_eq!(phi_magnitude(0.51), PhiMagnitude::Large);
    }

    #[test]
    fn chi_square_pvalue_reference() {
        // 3.841459 is the 0.95 quantile of chi-square with one degree of freedom.
        assert!(approx(chi2_sf(3.841459, 1.0), 0.05, 1e-6));
    }

    #[test]
    fn spearman_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!(approx(spearman(&x, &[10.0, 20.0, 35.0, 100.0]).unwrap(), 1.0, 1e-12));
        assert!(approx(spearman(&x, &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0, 1e-12));
        assert_eq!(spearman(&x, &[1.0; 4]), Err(StatsError::ZeroVariance));
        assert_eq!(spearman(&x, &[1.0]), Err(StatsError::LengthMismatch(4, 1)));
    }

    fn small_sample() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0u8..6).prop_map(f64::from), 1..6)
    }

    proptest! {
        #[test]
        fn ccdf_matches_brute_force(sample in prop::collection::vec(0u32..50, 1..40)) {
            let s: Vec<f64> = sample.iter().map(|v| *v as f64).collect();
            let table = ccdf(&s).unwrap();
            prop_assert_eq!(table[0].fraction, 1.0);
            for w in table.windows(2) {
                prop_assert!(w[1].fraction <= w[0].fraction);
            }
            for t in 0..52 {
                let t = t as f64;
                let brute = s.iter().filter(|v| **v >= t).count() as f64 / s.len() as f64;
                prop_assert!(approx(ccdf_value(&table, t), brute, 1e-12));
            }
        }

        #[test]
        fn ranks_match_counting_oracle(v in prop::collection::vec(0u8..10, 0..30)) {
            let v: Vec<f64> = v.into_iter().map(f64::from).collect();
            prop_assert_eq!(ranks(&v), rank_oracle(&v));
        }

        #[test]
        fn exact_mwu_matches_enumeration(a in small_sample(), b in small_sample()) {
            prop_assume!(a.len() + b.len() <= 8);
            let r = mann_whitney_one_tailed(&a, &b).unwrap();
            if !r.degenerate {
                prop_assert!(approx(r.p_value, enumeration_oracle(&a, &b), 1e-12));
            }
        }

        #[test]
        fn cliffs_antisymmetric_and_bounded(a in small_sample(), b in small_sample()) {
            let ab = cliffs_delta(&a, &b).unwrap().delta;
            let ba = cliffs_delta(&b, &a).unwrap().delta;
            prop_assert!(approx(ab, -ba, 1e-12));
            prop_assert!(ab.abs() <= 1.0);
            prop_assert!(approx(ab, pairwise_delta(&a, &b), 1e-12));
        }

        #[test]
        fn chi_square_matches_textbook(cells in prop::array::uniform4(1u64..500), k in 1u64..20) {
            let t = [[cells[0], cells[1]], [cells[2], cells[3]]];
            let r = chi_square_2x2(t).unwrap();
            let general = chi_square_independence(&[vec![t[0][0], t[0][1]], vec![t[1][0], t[1][1]]]).unwrap();
            prop_assert!(approx(r.chi2, general.chi2, 1e-9 * r.chi2.max(1.0)));
            let swapped_rows = chi_square_2x2([t[1], t[0]]).unwrap();
            let swapped_cols = chi_square_2x2([[t[0][1], t[0][0]], [t[1][1], t[1][0]]]).unwrap();
            prop_assert!(approx(r.chi2, swapped_rows.chi2, 1e-9 * r.chi2.max(1.0)));
            prop_assert!(approx(r.chi2, swapped_cols.chi2, 1e-9 * r.chi2.max(1.0)));
            let scaled = chi_square_2x2(t.map(|row| row.map(|v| v * k))).unwrap();
            prop_assert!(approx(r.effect.phi, scaled.effect.phi, 1e-9));
        }

        #[test]
        fn spearman_matches_rank_then_pearson(pairs in prop::collection::vec((0u8..8, 0u8..8), 2..25)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let (rx, ry) = (rank_oracle(&x), rank_oracle(&y));
            let n = x.len() as f64;
            let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
            let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
            let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
            let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
            match spearman(&x, &y) {
                Ok(rho) => prop_assert!(approx(rho, cov / (vx * vy).sqrt(), 1e-9)),
                Err(e) => {
                    prop_assert_eq!(e, StatsError::ZeroVariance);
                    prop_assert!(vx == 0.0 || vy == 0.0);
                }
            }
        }

        #[test]
        fn mwu_u_complement(a in prop::collection::vec(0u8..20, 1..15), b in prop::collection::vec(0u8..20, 1..15)) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let ab = mann_whitney_one_tailed(&a, &b).unwrap();
            let ba = mann_whitney_one_tailed(&b, &a).unwrap();
            prop_assert!(approx(ab.u + ba.u, (a.len() * b.len()) as f64, 1e-9));
        }
    }
}
