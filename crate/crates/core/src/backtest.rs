//! Coverage backtests: violation rates, Christoffersen likelihood-ratio tests
//! and an exact McNemar comparison of two interval methods.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Normal};

use crate::error::{GdfmError, Result};
use crate::forecast::ForecastRecord;

/// Significance levels reported in backtest tables.
pub const DELTAS: [f64; 3] = [0.1, 0.05, 0.01];

/// Hit indicators of one series over M evaluation points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitSeries {
    pub hits: Vec<bool>,
    pub upper: Vec<bool>,
    pub lower: Vec<bool>,
    pub lengths: Vec<f64>,
    pub alpha: f64,
}

impl HitSeries {
    /// Builds the series from (realized, lower, upper) triples.
    pub fn from_bounds(points: &[(f64, f64, f64)], alpha: f64) -> Self {
        let mut s = HitSeries {
            hits: Vec::with_capacity(points.len()),
            upper: Vec::with_capacity(points.len()),
            lower: Vec::with_capacity(points.len()),
            lengths: Vec::with_capacity(points.len()),
            alpha,
        };
        for &(y, lo, hi) in points {
            s.lower.push(y < lo);
            s.upper.push(y > hi);
            s.hits.push(y >= lo && y <= hi);
            s.lengths.push(hi - lo);
        }
        s
    }

    /// Hits only; violations are all attributed to no side and lengths are zero.
    pub fn from_hits(hits: &[bool], alpha: f64) -> Self {
        HitSeries {
            hits: hits.to_vec(),
            upper: hits.iter().map(|h| !h).collect(),
            lower: vec![false; hits.len()],
            lengths: vec![0.0; hits.len()],
            alpha,
        }
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn n_hits(&self) -> usize {
        self.hits.iter().filter(|&&h| h).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub coverage: f64,
    pub upper_rate: f64,
    pub lower_rate: f64,
    pub mean_length: f64,
}

pub fn summarize(h: &HitSeries) -> Summary {
    let m = h.len().max(1) as f64;
    let count = |v: &[bool]| v.iter().filter(|&&b| b).count() as f64 / m;
    Summary {
        coverage: count(&h.hits),
        upper_rate: count(&h.upper),
        lower_rate: count(&h.lower),
        mean_length: h.lengths.iter().sum::<f64>() / m,
    }
}

fn chi2_sf(x: f64, dof: f64) -> f64 {
    let d = ChiSquared::new(dof).expect("positive degrees of freedom");
    d.sf(x.max(0.0))
}

/// Score test of correct coverage: (n₁ − M(1−α))² / (Mα(1−α)), χ²(1).
pub fn lr_cover(h: &HitSeries) -> (f64, f64) {
    let m = h.len() as f64;
    let a = h.alpha;
    let stat = (h.n_hits() as f64 - m * (1.0 - a)).powi(2) / (m * a * (1.0 - a));
    (stat, chi2_sf(stat, 1.0))
}

/// How the one-sided coverage tests compute their thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OneSidedMethod {
    #[default]
    ExactBinomial,
    NormalApprox,
}

/// (validity rejected, sharpness rejected) at level δ. Validity is rejected
/// when coverage is too low, sharpness when it is too high.
pub fn one_sided_coverage_tests(h: &HitSeries, delta: f64, method: OneSidedMethod) -> (bool, bool) {
    let m = h.len() as u64;
    let n1 = h.n_hits() as u64;
    let p = 1.0 - h.alpha;
    match method {
        OneSidedMethod::ExactBinomial => {
            let b = Binomial::new(p, m).expect("valid binomial");
            let below = b.cdf(n1);
            let above = if n1 == 0 { 1.0 } else { b.sf(n1 - 1) };
            (below < delta, above < delta)
        }
        OneSidedMethod::NormalApprox => {
            let z = Normal::standard().inverse_cdf(1.0 - delta);
            let se = (h.alpha * (1.0 - h.alpha) / m as f64).sqrt();
            let rate = n1 as f64 / m as f64;
            (rate < p - z * se, rate > p + z * se)
        }
    }
}

/// Transition counts n_{jk} = #{t: hit_{t−1} = j, hit_t = k}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Transitions {
    pub n00: usize,
    pub n01: usize,
    pub n10: usize,
    pub n11: usize,
}

impl Transitions {
    pub fn count(hits: &[bool]) -> Self {
        let mut t = Transitions::default();
        for w in hits.windows(2) {
            match (w[0], w[1]) {
                (false, false) => t.n00 += 1,
                (false, true) => t.n01 += 1,
                (true, false) => t.n10 += 1,
                (true, true) => t.n11 += 1,
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Independence {
    pub statistic: f64,
    pub p_value: f64,
    pub counts: Transitions,
    pub pi: f64,
    pub pi01: f64,
    pub pi11: f64,
    /// All hits equal: no information about dependence.
    pub degenerate: bool,
}

/// k·ln p with 0·ln 0 = 0.
fn xlogy(k: usize, p: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        k as f64 * p.ln()
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Markov-chain independence test on consecutive hit pairs, χ²(1).
pub fn lr_independence(h: &HitSeries) -> Independence {
    let c = Transitions::count(&h.hits);
    let pairs = c.n00 + c.n01 + c.n10 + c.n11;
    let pi = ratio(c.n01 + c.n11, pairs);
    let pi01 = ratio(c.n01, c.n00 + c.n01);
    let pi11 = ratio(c.n11, c.n10 + c.n11);
    let degenerate = h.hits.iter().all(|&x| x) || h.hits.iter().all(|&x| !x);
    if degenerate || pairs == 0 {
        return Independence {
            statistic: 0.0,
            p_value: 1.0,
            counts: c,
            pi,
            pi01,
            pi11,
            degenerate: true,
        };
    }
    let l0 = xlogy(c.n00 + c.n10, 1.0 - pi) + xlogy(c.n01 + c.n11, pi);
    let l1 = xlogy(c.n00, 1.0 - pi01) + xlogy(c.n01, pi01) + xlogy(c.n10, 1.0 - pi11) + xlogy(c.n11, pi11);
    let stat = (2.0 * (l1 - l0)).max(0.0);
    Independence {
        statistic: stat,
        p_value: chi2_sf(stat, 1.0),
        counts: c,
        pi,
        pi01,
        pi11,
        degenerate: false,
    }
}

/// LR_cover + LR_ind, χ²(2).
pub fn lr_combined(h: &HitSeries) -> (f64, f64) {
    let stat = lr_cover(h).0 + lr_independence(h).statistic;
    (stat, chi2_sf(stat, 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemar {
    /// a covers, b misses.
    pub n12: usize,
    /// b covers, a misses.
    pub n21: usize,
    pub p_a_better: f64,
    pub p_b_better: f64,
    pub no_information: bool,
}

/// P(Bin(n, 1/2) ≥ k) by direct summation.
pub fn binomial_half_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    let ln_choose = |j: usize| statrs::function::factorial::ln_binomial(n as u64, j as u64);
    (k..=n).map(|j| (ln_choose(j) - n as f64 * ln2).exp()).sum::<f64>().min(1.0)
}

pub fn mcnemar(a: &HitSeries, b: &HitSeries) -> Result<McNemar> {
    if a.len() != b.len() {
        return Err(GdfmError::Shape(format!(
            "hit series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n12 = a.hits.iter().zip(&b.hits).filter(|(x, y)| **x && !**y).count();
    let n21 = a.hits.iter().zip(&b.hits).filter(|(x, y)| !**x && **y).count();
    let nd = n12 + n21;
    if nd == 0 {
        return Ok(McNemar {
            n12,
            n21,
            p_a_better: 1.0,
            p_b_better: 1.0,
            no_information: true,
        });
    }
    Ok(McNemar {
        n12,
        n21,
        p_a_better: binomial_half_upper_tail(nd, n12),
        p_b_better: binomial_half_upper_tail(nd, n21),
        no_information: false,
    })
}

/// One row of the backtest report. Decision columns are 0/1 per series and
/// rejection proportions on the aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub series: String,
    pub alpha: f64,
    pub window: String,
    pub m: usize,
    pub coverage: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub length: f64,
    pub lr_cover: f64,
    pub p_cover: f64,
    pub lr_ind: f64,
    pub p_ind: f64,
    pub lr_cc: f64,
    pub p_cc: f64,
    pub n00: f64,
    pub n01: f64,
    pub n10: f64,
    pub n11: f64,
    pub pi: f64,
    pub pi01: f64,
    pub pi11: f64,
    pub reject_valid_10: f64,
    pub reject_valid_05: f64,
    pub reject_valid_01: f64,
    pub reject_sharp_10: f64,
    pub reject_sharp_05: f64,
    pub reject_sharp_01: f64,
    pub reject_cover_10: f64,
    pub reject_cover_05: f64,
    pub reject_cover_01: f64,
    pub reject_ind_10: f64,
    pub reject_ind_05: f64,
    pub reject_ind_01: f64,
    pub reject_cc_10: f64,
    pub reject_cc_05: f64,
    pub reject_cc_01: f64,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn report_row(method: &str, series: &str, window: &str, h: &HitSeries, one_sided: OneSidedMethod) -> ReportRow {
    let s = summarize(h);
    let (lc, pc) = lr_cover(h);
    let ind = lr_independence(h);
    let (lcc, pcc) = lr_combined(h);
    let vs: Vec<(bool, bool)> = DELTAS.iter().map(|&d| one_sided_coverage_tests(h, d, one_sided)).collect();
    ReportRow {
        method: method.to_string(),
        series: series.to_string(),
        alpha: h.alpha,
        window: window.to_string(),
        m: h.len(),
        coverage: s.coverage,
        v_plus: s.upper_rate,
        v_minus: s.lower_rate,
        length: s.mean_length,
        lr_cover: lc,
        p_cover: pc,
        lr_ind: ind.statistic,
        p_ind: ind.p_value,
        lr_cc: lcc,
        p_cc: pcc,
        n00: ind.counts.n00 as f64,
        n01: ind.counts.n01 as f64,
        n10: ind.counts.n10 as f64,
        n11: ind.counts.n11 as f64,
        pi: ind.pi,
        pi01: ind.pi01,
        pi11: ind.pi11,
        reject_valid_10: flag(vs[0].0),
        reject_valid_05: flag(vs[1].0),
        reject_valid_01: flag(vs[2].0),
        reject_sharp_10: flag(vs[0].1),
        reject_sharp_05: flag(vs[1].1),
        reject_sharp_01: flag(vs[2].1),
        reject_cover_10: flag(pc < DELTAS[0]),
        reject_cover_05: flag(pc < DELTAS[1]),
        reject_cover_01: flag(pc < DELTAS[2]),
        reject_ind_10: flag(ind.p_value < DELTAS[0]),
        reject_ind_05: flag(ind.p_value < DELTAS[1]),
        reject_ind_01: flag(ind.p_value < DELTAS[2]),
        reject_cc_10: flag(pcc < DELTAS[0]),
        reject_cc_05: flag(pcc < DELTAS[1]),
        reject_cc_01: flag(pcc < DELTAS[2]),
    }
}

/// Cross-sectional means of a set of rows sharing method, α and window.
pub fn aggregate_row(rows: &[ReportRow]) -> Option<ReportRow> {
    let first = rows.first()?;
    let k = rows.len() as f64;
    let mean = |f: fn(&ReportRow) -> f64| rows.iter().map(f).sum::<f64>() / k;
    Some(ReportRow {
        method: first.method.clone(),
        series: "ALL".into(),
        alpha: first.alpha,
        window: first.window.clone(),
        m: rows.iter().map(|r| r.m).sum::<usize>() / rows.len(),
        coverage: mean(|r| r.coverage),
        v_plus: mean(|r| r.v_plus),
        v_minus: mean(|r| r.v_minus),
        length: mean(|r| r.length),
        lr_cover: mean(|r| r.lr_cover),
        p_cover: mean(|r| r.p_cover),
        lr_ind: mean(|r| r.lr_ind),
        p_ind: mean(|r| r.p_ind),
        lr_cc: mean(|r| r.lr_cc),
        p_cc: mean(|r| r.p_cc),
        n00: mean(|r| r.n00),
        n01: mean(|r| r.n01),
        n10: mean(|r| r.n10),
        n11: mean(|r| r.n11),
        pi: mean(|r| r.pi),
        pi01: mean(|r| r.pi01),
        pi11: mean(|r| r.pi11),
        reject_valid_10: mean(|r| r.reject_valid_10),
        reject_valid_05: mean(|r| r.reject_valid_05),
        reject_valid_01: mean(|r| r.reject_valid_01),
        reject_sharp_10: mean(|r| r.reject_sharp_10),
        reject_sharp_05: mean(|r| r.reject_sharp_05),
        reject_sharp_01: mean(|r| r.reject_sharp_01),
        reject_cover_10: mean(|r| r.reject_cover_10),
        reject_cover_05: mean(|r| r.reject_cover_05),
        reject_cover_01: mean(|r| r.reject_cover_01),
        reject_ind_10: mean(|r| r.reject_ind_10),
        reject_ind_05: mean(|r| r.reject_ind_05),
        reject_ind_01: mean(|r| r.reject_ind_01),
        reject_cc_10: mean(|r| r.reject_cc_10),
        reject_cc_05: mean(|r| r.reject_cc_05),
        reject_cc_01: mean(|r| r.reject_cc_01),
    })
}

/// Groups evaluated forecast records by (method, α, series) into hit series.
pub fn hit_series_from_records(records: &[ForecastRecord]) -> Vec<(String, String, HitSeries)> {
    let mut index: HashMap<(String, u64, String), usize> = HashMap::new();
    let mut keys: Vec<(String, u64, String)> = Vec::new();
    let mut groups: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    for r in records {
        let Some(y) = r.realized else { continue };
        let key = (r.method.clone(), r.alpha.to_bits(), r.series.clone());
        let idx = *index.entry(key.clone()).or_insert_with(|| {
            keys.push(key);
            groups.push(Vec::new());
            keys.len() - 1
        });
        groups[idx].push((y, r.lower, r.upper));
    }
    keys.into_iter()
        .zip(groups)
        .map(|((method, a, series), pts)| (method, series, HitSeries::from_bounds(&pts, f64::from_bits(a))))
        .collect()
}

/// Per-series rows followed by one aggregate row per (method, α).
pub fn backtest_report(records: &[ForecastRecord], window: &str, one_sided: OneSidedMethod) -> Vec<ReportRow> {
    let series = hit_series_from_records(records);
    let mut rows: Vec<ReportRow> = series
        .iter()
        .map(|(method, name, h)| report_row(method, name, window, h, one_sided))
        .collect();
    let mut groups: Vec<(String, u64)> = Vec::new();
    for r in &rows {
        let g = (r.method.clone(), r.alpha.to_bits());
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    let aggregates: Vec<ReportRow> = groups
        .iter()
        .filter_map(|(m, a)| {
            let sel: Vec<ReportRow> = rows
                .iter()
                .filter(|r| &r.method == m && r.alpha.to_bits() == *a)
                .cloned()
                .collect();
            aggregate_row(&sel)
        })
        .collect();
    rows.extend(aggregates);
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_examples() {
        let all = HitSeries::from_hits(&[true; 5], 0.1);
        let s = summarize(&all);
        assert_eq!((s.coverage, s.upper_rate, s.lower_rate), (1.0, 0.0, 0.0));
        let alt = HitSeries::from_hits(&[true, false, true, false], 0.1);
        let s = summarize(&alt);
        assert_eq!((s.coverage, s.upper_rate, s.lower_rate), (0.5, 0.5, 0.0));
    }

    #[test]
    fn cover_examples() {
        let mut hits = vec![true; 80];
        hits.extend(vec![false; 20]);
        let (stat, p) = lr_cover(&HitSeries::from_hits(&hits, 0.1));
        assert!((stat - 100.0 / 9.0).abs() < 1e-12);
        assert!((p - 8.57e-4).abs() < 1e-5);
        let (stat, _) = lr_cover(&HitSeries::from_hits(&[true; 100], 0.1));
        assert!((stat - 100.0 * 0.1 / 0.9).abs() < 1e-10);
        let mut exact = vec![true; 90];
        exact.extend(vec![false; 10]);
        let (stat, p) = lr_cover(&HitSeries::from_hits(&exact, 0.1));
        assert!(stat.abs() < 1e-20 && p == 1.0);
    }

    #[test]
    fn combined_example() {
        assert!((chi2_sf(7.0, 2.0) - (-3.5f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn mcnemar_examples() {
        assert!((binomial_half_upper_tail(10, 5) - 0.623046875).abs() < 1e-12);
        assert!((binomial_half_upper_tail(10, 8) - 0.0546875).abs() < 1e-12);
        let a = HitSeries::from_hits(&[true, false, true], 0.1);
        let r = mcnemar(&a, &a).unwrap();
        assert!(r.no_information);
    }

    #[test]
    fn one_sided_example() {
        let mut hits = vec![true; 1700];
        hits.extend(vec![false; 248]);
        let h = HitSeries::from_hits(&hits, 0.1);
        assert_eq!(one_sided_coverage_tests(&h, 0.01, OneSidedMethod::ExactBinomial), (true, false));
        let full = HitSeries::from_hits(&[true; 200], 0.1);
        assert!(one_sided_coverage_tests(&full, 0.01, OneSidedMethod::ExactBinomial).1);
    }
}
