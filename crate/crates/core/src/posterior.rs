//! Summaries of posterior draws: MAP partition, co-clustering frequencies,
//! percentile intervals, coverage and autocorrelation.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonical_labels, relabel_map, ChainState, Phase};
use crate::simulate::SimTruth;

/// One stored draw. `sigma2` and `rho` cover the clusters in use, indexed by
/// canonical label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub phase: Phase,
    pub z: Vec<usize>,
    pub alpha: f64,
    pub sigma2: Vec<f64>,
    pub rho: Vec<f64>,
    /// Row-major `M x p`.
    pub b: Option<Vec<Vec<f64>>>,
}

impl Snapshot {
    pub fn from_state(state: &ChainState, store_b: bool) -> Self {
        let j = state.assignment.max_label().map_or(0, |l| l + 1);
        Snapshot {
            iteration: state.iteration,
            phase: state.phase,
            z: state.assignment.z.clone(),
            alpha: state.sticks.alpha,
            sigma2: state.cov.sigma2[..j].to_vec(),
            rho: state.cov.rho[..j].to_vec(),
            b: store_b.then(|| state.coef.0.row_iter().map(|r| r.iter().copied().collect()).collect()),
        }
    }

    pub fn n_clusters(&self) -> usize {
        let mut seen = vec![false; self.z.iter().max().map_or(0, |l| l + 1)];
        self.z.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|s| *s).count()
    }
}

fn non_empty(snaps: &[Snapshot]) -> Result<()> {
    if snaps.is_empty() {
        Err(Error::Empty("no posterior draws in the requested window".into()))
    } else {
        Ok(())
    }
}

/// Canonical partitions with their visit counts, most frequent first and
/// ties in order of first appearance.
pub fn partition_frequencies(snaps: &[Snapshot]) -> Vec<(Vec<usize>, usize)> {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut table: Vec<(Vec<usize>, usize)> = Vec::new();
    for s in snaps {
        let key = canonical_labels(&s.z);
        match index.get(&key) {
            Some(&i) => table[i].1 += 1,
            None => {
                index.insert(key.clone(), table.len());
                table.push((key, 1));
            }
        }
    }
    // stable sort keeps first-seen order among ties
    table.sort_by_key(|e| std::cmp::Reverse(e.1));
    table
}

/// Most visited canonical partition and its relative frequency.
pub fn map_partition(snaps: &[Snapshot]) -> Result<(Vec<usize>, f64)> {
    non_empty(snaps)?;
    let table = partition_frequencies(snaps);
    let (z, count) = table.into_iter().next().expect("non-empty");
    Ok((z, count as f64 / snaps.len() as f64))
}

/// Smallest set of most-visited partitions whose total frequency reaches
/// `level`.
pub fn partition_credible_set(snaps: &[Snapshot], level: f64) -> Result<Vec<(Vec<usize>, f64)>> {
    non_empty(snaps)?;
    let total = snaps.len() as f64;
    let mut out = Vec::new();
    let mut mass = 0.0;
    for (z, c) in partition_frequencies(snaps) {
        let f = c as f64 / total;
        out.push((z, f));
        mass += f;
        if mass >= level - 1e-12 {
            break;
        }
    }
    Ok(out)
}

/// Fraction of draws placing each pair of coordinates together.
pub fn similarity_matrix(snaps: &[Snapshot]) -> Result<DMatrix<f64>> {
    non_empty(snaps)?;
    let m = snaps[0].z.len();
    let mut s = DMatrix::<f64>::zeros(m, m);
    for snap in snaps {
        for a in 0..m {
            for b in a..m {
                if snap.z[a] == snap.z[b] {
                    s[(a, b)] += 1.0;
                }
            }
        }
    }
    let n = snaps.len() as f64;
    for a in 0..m {
        for b in a..m {
            let v = s[(a, b)] / n;
            s[(a, b)] = v;
            s[(b, a)] = v;
        }
    }
    Ok(s)
}

/// Pairs `(a, b)`, `a < b`, with similarity at least `threshold`.
pub fn similar_pairs(sim: &DMatrix<f64>, threshold: f64) -> Vec<(usize, usize, f64)> {
    let m = sim.nrows();
    let mut out = Vec::new();
    for a in 0..m {
        for b in a + 1..m {
            if sim[(a, b)] >= threshold {
                out.push((a, b, sim[(a, b)]));
            }
        }
    }
    out
}

/// Linear interpolation between order statistics (`type 7`).
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed interval at `level`.
pub fn percentile_interval(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty("no values for a credible interval".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok((quantile_type7(&v, tail), quantile_type7(&v, 1.0 - tail)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Rho,
    Sigma2,
    B,
}

impl ParamKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamKind::Rho => "rho",
            ParamKind::Sigma2 => "sigma2",
            ParamKind::B => "B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub kind: ParamKind,
    /// Cluster label for `rho`/`sigma2`, coordinate for `B`.
    pub index: usize,
    /// Covariate column for `B`.
    pub column: Option<usize>,
    pub lower: f64,
    pub upper: f64,
    pub truth: Option<f64>,
    pub covered: Option<bool>,
}

impl IntervalRow {
    pub fn name(&self) -> String {
        match self.column {
            Some(q) => format!("{}[{},{}]", self.kind.as_str(), self.index + 1, q + 1),
            None => format!("{}[{}]", self.kind.as_str(), self.index + 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    pub level: f64,
    pub conditioned_on_map: bool,
    pub draws_used: usize,
    /// Whether the MAP equals the true partition, when truth is given.
    pub map_is_truth: Option<bool>,
    pub rows: Vec<IntervalRow>,
}

impl IntervalTable {
    /// Fraction of covered intervals of one kind, over rows with a truth.
    pub fn coverage(&self, kind: ParamKind) -> Option<f64> {
        let flags: Vec<bool> = self.rows.iter().filter(|r| r.kind == kind).filter_map(|r| r.covered).collect();
        (!flags.is_empty()).then(|| flags.iter().filter(|&&c| c).count() as f64 / flags.len() as f64)
    }
}

/// Percentile intervals for `rho` and `sigma2` of each MAP cluster and every
/// entry of `B`.
///
/// With `condition_on_map` only draws whose partition equals the MAP are
/// used. Otherwise cluster parameters are pooled by canonical label over
/// draws in which the label exists. Truth values are attached to clusters
/// whose member set equals a true cluster's.
pub fn credible_intervals(
    snaps: &[Snapshot],
    level: f64,
    condition_on_map: bool,
    truth: Option<&SimTruth>,
) -> Result<IntervalTable> {
    non_empty(snaps)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain {
            name: "level",
            value: level,
            domain: "(0, 1)".into(),
        });
    }
    let (map, mass) = map_partition(snaps)?;
    let used: Vec<&Snapshot> = if condition_on_map {
        snaps.iter().filter(|s| canonical_labels(&s.z) == map).collect()
    } else {
        snaps.iter().collect()
    };
    if used.is_empty() {
        return Err(Error::Empty(format!("no draws match the MAP partition (mass {mass})")));
    }
    let j_map = map.iter().max().map_or(0, |l| l + 1);

    let mut rho: Vec<Vec<f64>> = vec![Vec::new(); j_map];
    let mut sigma2: Vec<Vec<f64>> = vec![Vec::new(); j_map];
    for s in &used {
        let relabel = relabel_map(&s.z, 0);
        for (old, &new) in relabel.new_of_old.iter().enumerate() {
            if new < j_map && old < s.rho.len() && s.z.contains(&old) {
                rho[new].push(s.rho[old]);
                sigma2[new].push(s.sigma2[old]);
            }
        }
    }

    // true cluster matched to each MAP label by member set
    let matched: Vec<Option<usize>> = match truth {
        Some(t) => {
            let truth_sets = members_by_label(&t.z);
            let index: HashMap<&Vec<usize>, usize> = truth_sets.iter().enumerate().map(|(j, s)| (s, j)).collect();
            members_by_label(&map).iter().map(|s| index.get(s).copied()).collect()
        }
        None => vec![None; j_map],
    };

    let mut rows = Vec::new();
    for (kind, values, truth_of) in [
        (ParamKind::Rho, &rho, truth.map(|t| &t.rho)),
        (ParamKind::Sigma2, &sigma2, truth.map(|t| &t.sigma2)),
    ] {
        for j in 0..j_map {
            if values[j].is_empty() {
                continue;
            }
            let (lower, upper) = percentile_interval(&values[j], level)?;
            let tv = matched[j].zip(truth_of).map(|(t, v)| v[t]);
            rows.push(IntervalRow {
                kind,
                index: j,
                column: None,
                lower,
                upper,
                truth: tv,
                covered: tv.map(|v| lower <= v && v <= upper),
            });
        }
    }

    let with_b: Vec<&Vec<Vec<f64>>> = used.iter().filter_map(|s| s.b.as_ref()).collect();
    if let Some(first) = with_b.first() {
        let (m, p) = (first.len(), first.first().map_or(0, Vec::len));
        let tb = truth.map(SimTruth::b_matrix);
        for r in 0..m {
            for q in 0..p {
                let values: Vec<f64> = with_b.iter().map(|b| b[r][q]).collect();
                let (lower, upper) = percentile_interval(&values, level)?;
                let tv = tb.as_ref().map(|b| b[(r, q)]);
                rows.push(IntervalRow {
                    kind: ParamKind::B,
                    index: r,
                    column: Some(q),
                    lower,
                    upper,
                    truth: tv,
                    covered: tv.map(|v| lower <= v && v <= upper),
                });
            }
        }
    }

    Ok(IntervalTable {
        level,
        conditioned_on_map: condition_on_map,
        draws_used: used.len(),
        map_is_truth: truth.map(|t| canonical_labels(&t.z) == map),
        rows,
    })
}

fn members_by_label(z: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); z.iter().max().map_or(0, |l| l + 1)];
    for (m, &l) in z.iter().enumerate() {
        out[l].push(m);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub kind: ParamKind,
    pub mean: f64,
    pub sd: f64,
    pub replicates: usize,
}

/// Mean and sample standard deviation of per-replicate coverage for each
/// parameter kind.
pub fn coverage_table(reports: &[IntervalTable]) -> Result<Vec<CoverageRow>> {
    if reports.len() < 2 {
        return Err(Error::Empty("coverage table needs at least two replicates".into()));
    }
    let mut rows = Vec::new();
    for kind in [ParamKind::Rho, ParamKind::Sigma2, ParamKind::B] {
        let c: Vec<f64> = reports.iter().filter_map(|r| r.coverage(kind)).collect();
        if c.is_empty() {
            continue;
        }
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let sd = if c.len() > 1 {
            (c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(CoverageRow {
            kind,
            mean,
            sd,
            replicates: c.len(),
        });
    }
    Ok(rows)
}

/// `(iteration, phase, J)` per draw.
pub fn cluster_count_trace(snaps: &[Snapshot]) -> Vec<(usize, Phase, usize)> {
    snaps.iter().map(|s| (s.iteration, s.phase, s.n_clusters())).collect()
}

/// Sample autocorrelations at lags `0..=max_lag`.
pub fn autocorrelation(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if series.len() <= max_lag {
        return Err(Error::Data(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let dev: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 0.0) {
        return Err(Error::Data("constant series has no autocorrelation".into()));
    }
    Ok((0..=max_lag)
        .map(|k| dev.iter().zip(&dev[k..]).map(|(a, b)| a * b).sum::<f64>() / denom)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn snap(z: Vec<usize>) -> Snapshot {
        let j = z.iter().max().unwrap() + 1;
        Snapshot {
            iteration: 0,
            phase: Phase::Sampling,
            z,
            alpha: 1.0,
            sigma2: vec![1.0; j],
            rho: vec![0.5; j],
            b: None,
        }
    }

    #[test]
    fn map_examples() {
        let s = vec![snap(vec![0, 0, 1]), snap(vec![0, 0, 1]), snap(vec![0, 1, 1])];
        let (z, f) = map_partition(&s).unwrap();
        assert_eq!(z, vec![0, 0, 1]);
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        let (z, f) = map_partition(&s[2..]).unwrap();
        assert_eq!((z, f), (canonical_labels(&[0, 1, 1]), 1.0));
        let tie = vec![snap(vec![0, 1, 1]), snap(vec![0, 0, 1])];
        assert_eq!(map_partition(&tie).unwrap().0, vec![1, 0, 0]);
        // label permutation of the same partition counts once
        let perm = vec![snap(vec![1, 1, 0]), snap(vec![0, 0, 1])];
        assert_eq!(map_partition(&perm).unwrap().1, 1.0);
        assert!(map_partition(&[]).is_err());
    }

    #[test]
    fn similarity_examples() {
        let s = similarity_matrix(&[snap(vec![0, 0, 1]), snap(vec![0, 1, 1])]).unwrap();
        assert_eq!(s[(0, 1)], 0.5);
        assert_eq!(s[(1, 2)], 0.5);
        assert_eq!(s[(0, 2)], 0.0);
        assert!((0..3).all(|i| s[(i, i)] == 1.0));
        assert_eq!(similar_pairs(&s, 0.5), vec![(0, 1, 0.5), (1, 2, 0.5)]);
    }

    #[test]
    fn constant_and_normal_intervals() {
        assert_eq!(percentile_interval(&[2.5; 10], 0.95).unwrap(), (2.5, 2.5));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (lo, hi) = percentile_interval(&x, 0.95).unwrap();
        assert!((lo + 1.96).abs() < 0.05 && (hi - 1.96).abs() < 0.05, "{lo} {hi}");
        assert_eq!(quantile_type7(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
    }

    #[test]
    fn coverage_arithmetic() {
        let table = |c: Vec<bool>| IntervalTable {
            level: 0.95,
            conditioned_on_map: true,
            draws_used: 1,
            map_is_truth: Some(true),
            rows: c
                .into_iter()
                .enumerate()
                .map(|(i, covered)| IntervalRow {
                    kind: ParamKind::Rho,
                    index: i,
                    column: None,
                    lower: 0.0,
                    upper: 1.0,
                    truth: Some(0.5),
                    covered: Some(covered),
                })
                .collect(),
        };
        let rows = coverage_table(&[table(vec![true; 10]), table(vec![true, true, true, true, true, true, true, true, true, false])])
            .unwrap();
        assert!((rows[0].mean - 0.95).abs() < 1e-15);
        assert!((rows[0].sd - 0.0707).abs() < 1e-4);
        let rows = coverage_table(&[table(vec![true]), table(vec![true])]).unwrap();
        assert_eq!((rows[0].mean, rows[0].sd), (1.0, 0.0));
        assert!(coverage_table(&[table(vec![true])]).is_err());
    }

    #[test]
    fn truth_matching_by_member_set() {
        let mut draws = Vec::new();
        for i in 0..20 {
            let mut s = snap(vec![0, 0, 1]);
            s.rho = vec![0.4 + 0.01 * i as f64, 0.0];
            s.sigma2 = vec![1.0, 2.0];
            s.b = Some(vec![vec![0.0], vec![1.0], vec![2.0]]);
            draws.push(s);
        }
        let truth = SimTruth {
            z: vec![1, 1, 0],
            sigma2: vec![2.0, 5.0],
            rho: vec![0.0, 0.45],
            b: vec![vec![0.0], vec![1.0], vec![3.0]],
            seed: 0,
        };
        let t = credible_intervals(&draws, 0.95, true, Some(&truth)).unwrap();
        assert_eq!(t.map_is_truth, Some(true));
        let rho0 = t.rows.iter().find(|r| r.kind == ParamKind::Rho && r.index == 0).unwrap();
        assert_eq!(rho0.truth, Some(0.45));
        assert_eq!(rho0.covered, Some(true));
        assert_eq!(t.coverage(ParamKind::Sigma2), Some(0.5));
        assert_eq!(t.coverage(ParamKind::B), Some(2.0 / 3.0));
    }

    #[test]
    fn acf_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut x = vec![0.0f64; 100_000];
        for t in 1..x.len() {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.5 * x[t - 1] + e;
        }
        let r = autocorrelation(&x, 3).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[1] - 0.5).abs() < 0.02);
        let w: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        assert!(autocorrelation(&w, 5).unwrap()[1..].iter().all(|v| v.abs() < 0.01));
        assert!(autocorrelation(&[1.0; 5], 1).is_err());
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    fn partitions() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(prop::collection::vec(0usize..4, 6), 1..12)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn similarity_ignores_labels(zs in partitions(), shift in 1usize..4) {
            let a: Vec<Snapshot> = zs.iter().map(|z| snap(z.clone())).collect();
            let b: Vec<Snapshot> = zs.iter().map(|z| snap(z.iter().map(|l| (l + shift) % 4).collect())).collect();
            prop_assert_eq!(similarity_matrix(&a).unwrap(), similarity_matrix(&b).unwrap());
            let s = similarity_matrix(&a).unwrap();
            prop_assert!(s.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert_eq!(s.transpose(), s);
        }

        #[test]
        fn map_ignores_labels(zs in partitions(), shift in 1usize..4) {
            let a: Vec<Snapshot> = zs.iter().map(|z| snap(z.clone())).collect();
            let b: Vec<Snapshot> = zs.iter().map(|z| snap(z.iter().map(|l| (l + shift) % 4).collect())).collect();
            prop_assert_eq!(map_partition(&a).unwrap(), map_partition(&b).unwrap());
        }

        #[test]
        fn intervals_nest(values in prop::collection::vec(-10.0f64..10.0, 1..200)) {
            let (a, b) = percentile_interval(&values, 0.9).unwrap();
            let (c, d) = percentile_interval(&values, 0.95).unwrap();
            prop_assert!(a <= b && c <= a && b <= d);
        }
    }
}
