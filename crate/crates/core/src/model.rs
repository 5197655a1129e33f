//! Parameter containers of the hierarchical model and the chain state that
//! ties them together.
//!
//! Cluster labels are 0-based throughout the crate: a coordinate with label
//! `j` belongs to block `j`, and labels `0..K` exist in every state. After
//! [`relabel`] the labels in use are exactly `0..J`, sorted by decreasing
//! block size.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Split-selection weights of the four largest (head) or smallest (tail)
/// multi-member clusters; the remaining mass is shared evenly by the rest.
pub const DEFAULT_SPLIT_WEIGHTS: [f64; 4] = [0.3, 0.2, 0.15, 0.1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Truncation level: maximum number of clusters.
    pub k: usize,
    /// Prior variance of every regression coefficient.
    pub tau2: f64,
    /// Gamma(shape, rate) prior on the DP scale.
    pub a0: f64,
    pub b0: f64,
    /// Inverse-Gamma(shape, scale) prior on block variances.
    pub a1: f64,
    pub b1: f64,
    /// Beta prior on the transformed correlation parameter.
    pub a2: f64,
    pub b2: f64,
    pub lambda_burnin: f64,
    pub lambda_sampling: f64,
    /// Probability of proposing a split in a split-merge step.
    pub p0: f64,
    /// Step size of the discrete slice sampler for cluster indices.
    pub walker_step: usize,
    pub rho_upper: f64,
    /// Unnormalised weights for the first few clusters in split selection;
    /// leftover mass `1 - sum` is spread uniformly over the others.
    pub split_weights: Vec<f64>,
}

impl HyperParams {
    /// Defaults used in the simulation studies for an `m`-dimensional outcome:
    /// `K = M/2`, `s = K/2`, `alpha ~ Gamma(K + 0.01, 1.01)`.
    pub fn for_dimension(m: usize) -> Self {
        let k = (m / 2).max(1);
        Self::with_truncation(k)
    }

    pub fn with_truncation(k: usize) -> Self {
        HyperParams {
            k,
            tau2: 1.0,
            a0: k as f64 + 0.01,
            b0: 1.01,
            a1: 2.01,
            b1: 1.01,
            a2: 2.01,
            b2: 1.01,
            lambda_burnin: 100.0,
            lambda_sampling: 150.0,
            p0: 0.7,
            walker_step: (k / 2).max(1),
            rho_upper: 0.95,
            split_weights: DEFAULT_SPLIT_WEIGHTS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p0) {
            return bad(format!("p0 = {} must lie in [0, 1]", self.p0));
        }
        for (name, v) in [
            ("tau2", self.tau2),
            ("a0", self.a0),
            ("b0", self.b0),
            ("a1", self.a1),
            ("b1", self.b1),
            ("a2", self.a2),
            ("b2", self.b2),
            ("lambda_burnin", self.lambda_burnin),
            ("lambda_sampling", self.lambda_sampling),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive and finite"));
            }
        }
        if !(self.rho_upper > 0.0 && self.rho_upper < 1.0) {
            return bad(format!("rho_upper = {} must lie in (0, 1)", self.rho_upper));
        }
        if self.lambda_sampling < self.lambda_burnin {
            return bad("lambda_sampling must not be smaller than lambda_burnin".into());
        }
        if self.walker_step == 0 {
            return bad("walker_step must be at least 1".into());
        }
        let total: f64 = self.split_weights.iter().sum();
        if self.split_weights.iter().any(|w| !(*w > 0.0)) || total > 1.0 + 1e-12 {
            return bad("split_weights must be positive and sum to at most 1".into());
        }
        Ok(())
    }
}

/// Outcomes (`N x M`, one row per replicate), covariates (`N x p`) and the
/// optional coordinates of the `M` outcome locations.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub outcomes: DMatrix<f64>,
    pub covariates: DMatrix<f64>,
    pub locations: Option<Vec<Vec<f64>>>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        outcomes: DMatrix<f64>,
        covariates: DMatrix<f64>,
        locations: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let labels = (1..=outcomes.ncols()).map(|m| format!("y{m}")).collect();
        let data = Dataset {
            outcomes,
            covariates,
            locations,
            labels,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn m(&self) -> usize {
        self.outcomes.ncols()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.outcomes.shape();
        if n < 2 || m < 2 {
            return Err(Error::Data(format!(
                "need at least 2 replicates and 2 outcomes, got {n} x {m}"
            )));
        }
        if self.covariates.nrows() != n {
            return Err(Error::Data(format!(
                "covariates have {} rows, outcomes have {n}",
                self.covariates.nrows()
            )));
        }
        if self.covariates.ncols() == 0 {
            return Err(Error::Data("covariate matrix has no columns".into()));
        }
        if self.outcomes.iter().chain(self.covariates.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("missing or non-finite values".into()));
        }
        if let Some(locs) = &self.locations {
            if locs.len() != m {
                return Err(Error::Data(format!(
                    "{} locations for {m} outcomes",
                    locs.len()
                )));
            }
            let dim = locs.first().map_or(0, Vec::len);
            if dim == 0 || locs.iter().any(|l| l.len() != dim) {
                return Err(Error::Data("locations must share a positive dimension".into()));
            }
        }
        if self.labels.len() != m {
            return Err(Error::Data("one column label per outcome required".into()));
        }
        Ok(())
    }
}

/// Cluster index vector `z` over `M` coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub z: Vec<usize>,
}

impl ClusterAssignment {
    pub fn new(z: Vec<usize>) -> Self {
        ClusterAssignment { z }
    }

    pub fn m(&self) -> usize {
        self.z.len()
    }

    /// Per-label counts over labels `0..k`.
    pub fn counts(&self, k: usize) -> Vec<usize> {
        let mut c = vec![0; k.max(self.max_label().map_or(0, |l| l + 1))];
        for &l in &self.z {
            c[l] += 1;
        }
        c
    }

    pub fn max_label(&self) -> Option<usize> {
        self.z.iter().copied().max()
    }

    /// Number of distinct labels in use.
    pub fn n_clusters(&self) -> usize {
        let mut seen = vec![false; self.max_label().map_or(0, |l| l + 1)];
        self.z.iter().for_each(|&l| seen[l] = true);
        seen.into_iter().filter(|s| *s).count()
    }

    /// Number of clusters with more than one member.
    pub fn n_multi(&self) -> usize {
        self.counts(0).into_iter().filter(|&c| c > 1).count()
    }

    /// Member lists, indexed by label, in ascending coordinate order.
    pub fn members(&self, k: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); k.max(self.max_label().map_or(0, |l| l + 1))];
        for (m, &l) in self.z.iter().enumerate() {
            out[l].push(m);
        }
        out
    }

    /// True when labels in use are `0..J` with non-increasing sizes.
    pub fn is_canonical(&self) -> bool {
        let counts = self.counts(0);
        let j = self.n_clusters();
        counts.len() == j
            && counts.iter().all(|&c| c > 0)
            && counts.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Relabeling of the `K` slots: `new_of_old[old] = new`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMap {
    pub new_of_old: Vec<usize>,
}

impl SlotMap {
    pub fn apply<T: Clone>(&self, values: &[T]) -> Vec<T> {
        let mut out = values.to_vec();
        for (old, &new) in self.new_of_old.iter().enumerate() {
            out[new] = values[old].clone();
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        self.new_of_old.iter().enumerate().all(|(i, &j)| i == j)
    }
}

/// Slot map sending labels in use to `0..J` by decreasing cluster size, with
/// ties broken by the first coordinate carrying the label. Unused slots keep
/// their relative order after `J`.
pub fn relabel_map(z: &[usize], k: usize) -> SlotMap {
    let k = k.max(z.iter().copied().max().map_or(0, |l| l + 1));
    let mut size = vec![0usize; k];
    let mut first = vec![usize::MAX; k];
    for (m, &l) in z.iter().enumerate() {
        size[l] += 1;
        if first[l] == usize::MAX {
            first[l] = m;
        }
    }
    let mut used: Vec<usize> = (0..k).filter(|&l| size[l] > 0).collect();
    used.sort_by(|&a, &b| size[b].cmp(&size[a]).then(first[a].cmp(&first[b])));
    let mut new_of_old = vec![0; k];
    let mut next = 0;
    for &l in &used {
        new_of_old[l] = next;
        next += 1;
    }
    for l in (0..k).filter(|&l| size[l] == 0) {
        new_of_old[l] = next;
        next += 1;
    }
    SlotMap { new_of_old }
}

/// Canonical form of a label vector (see [`relabel_map`]).
pub fn canonical_labels(z: &[usize]) -> Vec<usize> {
    let map = relabel_map(z, 0);
    z.iter().map(|&l| map.new_of_old[l]).collect()
}

/// Relabels `assignment` canonically and carries the block parameters along.
pub fn relabel(
    assignment: &ClusterAssignment,
    cov: &ClusterCovParams,
) -> (ClusterAssignment, ClusterCovParams) {
    let map = relabel_map(&assignment.z, cov.k());
    let z = assignment.z.iter().map(|&l| map.new_of_old[l]).collect();
    (ClusterAssignment::new(z), cov.permuted(&map))
}

/// Stable ordering of coordinates by label.
///
/// `order[i]` is the original coordinate placed at sorted position `i`, and
/// `position[m]` inverts it. `P_pi` is never formed; gathers go through
/// these index vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    pub order: Vec<usize>,
    pub position: Vec<usize>,
}

impl Permutation {
    pub fn from_z(z: &[usize]) -> Self {
        let mut order: Vec<usize> = (0..z.len()).collect();
        order.sort_by_key(|&m| z[m]);
        let mut position = vec![0; z.len()];
        for (i, &m) in order.iter().enumerate() {
            position[m] = i;
        }
        Permutation { order, position }
    }

    pub fn identity(m: usize) -> Self {
        Permutation {
            order: (0..m).collect(),
            position: (0..m).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// `P x`: the entries of `x` in sorted order.
    pub fn gather<T: Copy>(&self, x: &[T]) -> Vec<T> {
        self.order.iter().map(|&m| x[m]).collect()
    }

    /// `P^T y`: undoes [`Permutation::gather`].
    pub fn scatter<T: Copy>(&self, y: &[T]) -> Vec<T> {
        self.position.iter().map(|&i| y[i]).collect()
    }

    /// `P A P^T` for a square matrix.
    pub fn gather_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |r, c| a[(self.order[r], self.order[c])])
    }

    /// `P^T A P` for a square matrix.
    pub fn scatter_matrix(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |r, c| a[(self.position[r], self.position[c])])
    }
}

/// Truncated stick-breaking weights `w_j = V_j prod_{l<j} (1 - V_l)`.
pub fn stick_weights(v: &[f64]) -> Result<Vec<f64>> {
    let mut w = Vec::with_capacity(v.len());
    let mut remaining = 1.0;
    for (j, &vj) in v.iter().enumerate() {
        if !(vj > 0.0 && vj <= 1.0) {
            return Err(Error::Domain {
                name: "V",
                value: vj,
                domain: format!("(0, 1] at index {j}"),
            });
        }
        w.push(vj * remaining);
        remaining *= 1.0 - vj;
    }
    if let Some(last) = v.last() {
        if *last != 1.0 {
            return Err(Error::Domain {
                name: "V_K",
                value: *last,
                domain: "{1}".into(),
            });
        }
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickState {
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub alpha: f64,
}

impl StickState {
    pub fn from_v(v: Vec<f64>, alpha: f64) -> Result<Self> {
        let w = stick_weights(&v)?;
        Ok(StickState { v, w, alpha })
    }

    pub fn k(&self) -> usize {
        self.v.len()
    }
}

/// Per-slot block variance and correlation parameter, `K` slots each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterCovParams {
    pub sigma2: Vec<f64>,
    pub rho: Vec<f64>,
}

impl ClusterCovParams {
    pub fn k(&self) -> usize {
        self.sigma2.len()
    }

    pub fn permuted(&self, map: &SlotMap) -> Self {
        ClusterCovParams {
            sigma2: map.apply(&self.sigma2),
            rho: map.apply(&self.rho),
        }
    }
}

/// Regression matrix `B` (`M x p`, column `q` holds `beta_q`).
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionCoefficients(pub DMatrix<f64>);

impl RegressionCoefficients {
    pub fn zeros(m: usize, p: usize) -> Self {
        RegressionCoefficients(DMatrix::zeros(m, p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    BurnIn1,
    BurnIn2,
    Sampling,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::BurnIn1 => "burnin1",
            Phase::BurnIn2 => "burnin2",
            Phase::Sampling => "sampling",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "burnin1" => Ok(Phase::BurnIn1),
            "burnin2" => Ok(Phase::BurnIn2),
            "sampling" => Ok(Phase::Sampling),
            other => Err(Error::Config(format!("unknown phase {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub assignment: ClusterAssignment,
    pub sticks: StickState,
    pub cov: ClusterCovParams,
    pub coef: RegressionCoefficients,
    /// Step sizes of the correlation slice sampler, one per slot.
    pub rho_steps: Vec<f64>,
    pub iteration: usize,
    pub phase: Phase,
}

impl ChainState {
    pub fn k(&self) -> usize {
        self.cov.k()
    }

    /// Relabels the assignment canonically, permuting every per-slot vector
    /// (block parameters, stick weights, slice step sizes) with it.
    pub fn relabel(&mut self) {
        let map = relabel_map(&self.assignment.z, self.k());
        if map.is_identity() {
            return;
        }
        for l in self.assignment.z.iter_mut() {
            *l = map.new_of_old[*l];
        }
        self.cov = self.cov.permuted(&map);
        self.sticks.w = map.apply(&self.sticks.w);
        self.rho_steps = map.apply(&self.rho_steps);
    }
}
