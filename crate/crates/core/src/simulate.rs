//! Synthetic data from the two simulation designs: equal-size or
//! Dirichlet-process partitions with per-cluster correlation and variance.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily, KernelSpec};
use crate::model::{canonical_labels, ClusterAssignment, ClusterCovParams, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    /// Contiguous blocks of `M / clusters` coordinates.
    UniformEqual { clusters: usize },
    /// Chinese-restaurant draw with concentration `alpha`.
    DirichletProcess { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ParamRule {
    /// `rho` uniform over 0.40, 0.45, ..., 0.90 and `sigma2` over
    /// 0.95, 1.00, ..., 1.50, independently per cluster.
    Heterogeneous,
    Homogeneous { rho: f64, sigma2: f64 },
}

pub const RHO_GRID: (f64, f64) = (0.40, 0.90);
pub const SIGMA2_GRID: (f64, f64) = (0.95, 1.50);
pub const GRID_SPACING: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub m: usize,
    pub n: usize,
    pub partition: PartitionKind,
    pub kernel: KernelSpec,
    pub params: ParamRule,
    pub seed: u64,
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("simulation needs m >= 1 and n >= 1".into()));
        }
        match self.partition {
            PartitionKind::UniformEqual { clusters } => {
                if clusters == 0 || !self.m.is_multiple_of(clusters) {
                    return Err(Error::Config(format!(
                        "{clusters} equal clusters do not divide m = {}",
                        self.m
                    )));
                }
            }
            PartitionKind::DirichletProcess { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Domain {
                        name: "alpha",
                        value: alpha,
                        domain: "(0, inf)".into(),
                    });
                }
            }
        }
        if let ParamRule::Homogeneous { rho, sigma2 } = self.params {
            if !(sigma2 > 0.0) {
                return Err(Error::Domain {
                    name: "sigma2",
                    value: sigma2,
                    domain: "(0, inf)".into(),
                });
            }
            if !(rho.abs() < 1.0) {
                return Err(Error::Domain {
                    name: "rho",
                    value: rho,
                    domain: "(-1, 1)".into(),
                });
            }
        }
        self.kernel.validate()
    }
}

/// Ground truth of a simulated dataset. `cov` has one slot per true cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub z: Vec<usize>,
    pub sigma2: Vec<f64>,
    pub rho: Vec<f64>,
    /// Row-major `M x p`.
    pub b: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SimTruth {
    pub fn assignment(&self) -> ClusterAssignment {
        ClusterAssignment::new(self.z.clone())
    }

    pub fn cov(&self) -> ClusterCovParams {
        ClusterCovParams {
            sigma2: self.sigma2.clone(),
            rho: self.rho.clone(),
        }
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let p = self.b.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.b.len(), p, |r, c| self.b[r][c])
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: SimTruth,
}

/// True partition, relabeled canonically.
pub fn gen_partition<R: Rng + ?Sized>(m: usize, kind: PartitionKind, rng: &mut R) -> Result<ClusterAssignment> {
    let z = match kind {
        PartitionKind::UniformEqual { clusters } => {
            if clusters == 0 || !m.is_multiple_of(clusters) {
                return Err(Error::Config(format!("{clusters} equal clusters do not divide m = {m}")));
            }
            let size = m / clusters;
            (0..m).map(|i| i / size).collect()
        }
        PartitionKind::DirichletProcess { alpha } => {
            let mut z = Vec::with_capacity(m);
            let mut sizes: Vec<usize> = Vec::new();
            for i in 0..m {
                let u = rng.random::<f64>() * (i as f64 + alpha);
                let mut acc = 0.0;
                let mut label = sizes.len();
                for (j, &s) in sizes.iter().enumerate() {
                    acc += s as f64;
                    if u < acc {
                        label = j;
                        break;
                    }
                }
                if label == sizes.len() {
                    sizes.push(0);
                }
                sizes[label] += 1;
                z.push(label);
            }
            z
        }
    };
    Ok(ClusterAssignment::new(canonical_labels(&z)))
}

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    let steps = ((hi - lo) / GRID_SPACING).round() as usize;
    (0..=steps).map(|i| lo + i as f64 * GRID_SPACING).collect()
}

/// True block parameters; singleton clusters get `rho = 0`.
pub fn gen_params<R: Rng + ?Sized>(assignment: &ClusterAssignment, rule: ParamRule, rng: &mut R) -> ClusterCovParams {
    let counts = assignment.counts(0);
    let rho_grid = grid(RHO_GRID.0, RHO_GRID.1);
    let sigma2_grid = grid(SIGMA2_GRID.0, SIGMA2_GRID.1);
    let mut sigma2 = Vec::with_capacity(counts.len());
    let mut rho = Vec::with_capacity(counts.len());
    for &c in &counts {
        let (r, s) = match rule {
            ParamRule::Heterogeneous => (
                rho_grid[rng.random_range(0..rho_grid.len())],
                sigma2_grid[rng.random_range(0..sigma2_grid.len())],
            ),
            ParamRule::Homogeneous { rho, sigma2 } => (rho, sigma2),
        };
        rho.push(if c == 1 { 0.0 } else { r });
        sigma2.push(s);
    }
    ClusterCovParams { sigma2, rho }
}

/// Columns: intercept, Bernoulli(0.5), Bernoulli(0.7), standard normal, and
/// the product of the second and fourth.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let b5 = Bernoulli::new(0.5).expect("valid probability");
    let b7 = Bernoulli::new(0.7).expect("valid probability");
    let mut x = DMatrix::zeros(n, 5);
    for i in 0..n {
        let x2 = f64::from(u8::from(b5.sample(rng)));
        let x3 = f64::from(u8::from(b7.sample(rng)));
        let x4: f64 = StandardNormal.sample(rng);
        x[(i, 0)] = 1.0;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        x[(i, 3)] = x4;
        x[(i, 4)] = x2 * x4;
    }
    x
}

/// GenAR1: the points `1..=m` on a line. Matern: a unit-spaced square grid
/// with `ceil(sqrt(m))` columns, filled row by row. Compound symmetry: none.
pub fn gen_locations(m: usize, kernel: &KernelSpec) -> Option<Vec<Vec<f64>>> {
    match kernel.family {
        KernelFamily::CompoundSymmetry => None,
        KernelFamily::GenAr1 { .. } => Some((1..=m).map(|i| vec![i as f64]).collect()),
        KernelFamily::Matern32 => {
            let side = (m as f64).sqrt().ceil() as usize;
            Some((0..m).map(|i| vec![(i % side) as f64, (i / side) as f64]).collect())
        }
    }
}

/// `Y = X B^T + E` with the rows of `E` drawn blockwise from
/// `N(0, sigma2_j Gamma_j)`.
pub fn gen_outcomes<R: Rng + ?Sized>(
    kernel: &Kernel,
    assignment: &ClusterAssignment,
    cov: &ClusterCovParams,
    b: &DMatrix<f64>,
    covariates: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = covariates.nrows();
    let mut y = covariates * b.transpose();
    for (j, mem) in assignment.members(cov.k()).iter().enumerate() {
        if mem.is_empty() {
            continue;
        }
        let l = kernel.cholesky_factor(mem, cov.rho[j])? * cov.sigma2[j].sqrt();
        for i in 0..n {
            let e = DVector::from_fn(mem.len(), |_, _| StandardNormal.sample(rng));
            let draw = &l * e;
            for (a, &m) in mem.iter().enumerate() {
                y[(i, m)] += draw[a];
            }
        }
    }
    Ok(y)
}

pub fn simulate(design: &SimDesign) -> Result<Simulated> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(design.seed);
    let assignment = gen_partition(design.m, design.partition, &mut rng)?;
    let cov = gen_params(&assignment, design.params, &mut rng);
    let b = DMatrix::from_fn(design.m, 5, |_, _| StandardNormal.sample(&mut rng));
    let x = gen_covariates(design.n, &mut rng);
    let locations = gen_locations(design.m, &design.kernel);
    let kernel = Kernel::new(design.kernel, design.m, locations.clone())?;
    let y = gen_outcomes(&kernel, &assignment, &cov, &b, &x, &mut rng)?;
    let data = Dataset::new(y, x, locations)?;
    let truth = SimTruth {
        z: assignment.z,
        sigma2: cov.sigma2,
        rho: cov.rho,
        b: b.row_iter().map(|r| r.iter().copied().collect()).collect(),
        seed: design.seed,
    };
    Ok(Simulated { data, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = gen_partition(10, PartitionKind::UniformEqual { clusters: 5 }, &mut rng).unwrap();
        assert_eq!(a.counts(0), vec![2; 5]);
        assert!(gen_partition(10, PartitionKind::UniformEqual { clusters: 3 }, &mut rng).is_err());
    }

    #[test]
    fn dp_cluster_count_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let expected: f64 = (1..=500).map(|i| 6.0 / (6.0 + i as f64 - 1.0)).sum();
        let reps = 1000;
        let mean = (0..reps)
            .map(|_| {
                gen_partition(500, PartitionKind::DirichletProcess { alpha: 6.0 }, &mut rng)
                    .unwrap()
                    .n_clusters() as f64
            })
            .sum::<f64>()
            / reps as f64;
        assert!((mean / expected - 1.0).abs() < 0.05, "{mean} vs {expected}");
        let a = gen_partition(50, PartitionKind::DirichletProcess { alpha: 1e-12 }, &mut rng).unwrap();
        assert_eq!(a.n_clusters(), 1);
    }

    #[test]
    fn covariate_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = gen_covariates(100_000, &mut rng);
        let means: Vec<f64> = (0..5).map(|c| x.column(c).mean()).collect();
        for (got, want) in means.iter().zip([1.0, 0.5, 0.7, 0.0, 0.0]) {
            assert!((got - want).abs() < 0.01, "{means:?}");
        }
        assert!(x.column(0).iter().all(|&v| v == 1.0));
        assert!((0..x.nrows()).all(|i| x[(i, 4)] == x[(i, 1)] * x[(i, 3)]));
    }

    #[test]
    fn locations() {
        assert_eq!(gen_locations(3, &KernelSpec::gen_ar1(0.2)), Some(vec![vec![1.0], vec![2.0], vec![3.0]]));
        assert_eq!(
            gen_locations(4, &KernelSpec::matern32(20.0)),
            Some(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]])
        );
        let k = Kernel::new(KernelSpec::gen_ar1(0.2), 3, gen_locations(3, &KernelSpec::gen_ar1(0.2))).unwrap();
        let g = k.corr_matrix(&[0, 1], 0.6).unwrap();
        assert!((g[(0, 1)] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn grids_and_singletons() {
        assert_eq!(grid(0.4, 0.9).len(), 11);
        assert_eq!(grid(0.95, 1.5).len(), 12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = ClusterAssignment::new(vec![0, 0, 1]);
        let c = gen_params(&a, ParamRule::Heterogeneous, &mut rng);
        assert_eq!(c.rho[1], 0.0);
        assert!(c.rho[0] >= 0.4 - 1e-12 && c.rho[0] <= 0.9 + 1e-12);
    }

    #[test]
    fn cs_block_sample_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel = Kernel::new(KernelSpec::compound_symmetry(), 3, None).unwrap();
        let a = ClusterAssignment::new(vec![0, 0, 0]);
        let cov = ClusterCovParams { sigma2: vec![1.0], rho: vec![0.6] };
        let x = DMatrix::from_element(100_000, 1, 1.0);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let y = gen_outcomes(&kernel, &a, &cov, &b, &x, &mut rng).unwrap();
        let r = &y - &x * b.transpose();
        let s = r.transpose() * &r / 100_000.0;
        for i in 0..3 {
            assert!(r.column(i).mean().abs() < 0.02);
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.6 };
                assert!((s[(i, j)] - want).abs() < 0.02, "{s}");
            }
        }
    }

    #[test]
    fn deterministic() {
        let d = SimDesign {
            m: 10,
            n: 8,
            partition: PartitionKind::UniformEqual { clusters: 5 },
            kernel: KernelSpec::gen_ar1(0.2),
            params: ParamRule::Heterogeneous,
            seed: 11,
        };
        let a = simulate(&d).unwrap();
        let b = simulate(&d).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.data.outcomes, b.data.outcomes);
        assert_eq!(a.data.outcomes.shape(), (8, 10));
    }
}
