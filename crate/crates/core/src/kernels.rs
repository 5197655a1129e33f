//! Correlation kernels and the block-structured Gaussian likelihood.
//!
//! The covariance of the outcomes is block diagonal after a permutation of
//! the coordinates, with block `j` equal to `sigma2_j * Gamma(S_j; rho_j)`.
//! Everything here works on member index lists of a block; the permutation
//! matrix itself is never built.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainState, ClusterAssignment, Dataset, Permutation, RegressionCoefficients};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Constant off-diagonal correlation `rho`.
    CompoundSymmetry,
    /// `rho^(d^nu)` for distance `d`.
    GenAr1 { nu: f64 },
    /// Matérn with smoothness 3/2 and range `rho`.
    Matern32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    /// Euclidean distances are divided by this before entering the kernel.
    pub distance_scale: f64,
}

impl KernelSpec {
    pub fn compound_symmetry() -> Self {
        KernelSpec {
            family: KernelFamily::CompoundSymmetry,
            distance_scale: 1.0,
        }
    }

    pub fn gen_ar1(nu: f64) -> Self {
        KernelSpec {
            family: KernelFamily::GenAr1 { nu },
            distance_scale: 1.0,
        }
    }

    pub fn matern32(distance_scale: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Matern32,
            distance_scale,
        }
    }

    pub fn needs_locations(&self) -> bool {
        !matches!(self.family, KernelFamily::CompoundSymmetry)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_scale > 0.0 && self.distance_scale.is_finite()) {
            return Err(Error::Config(format!(
                "distance_scale = {} must be positive",
                self.distance_scale
            )));
        }
        if let KernelFamily::GenAr1 { nu } = self.family {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::Config(format!("nu = {nu} must be positive")));
            }
        }
        Ok(())
    }
}

/// A kernel bound to the `M` outcome locations it is evaluated on.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub spec: KernelSpec,
    m: usize,
    locations: Option<Vec<Vec<f64>>>,
}

impl Kernel {
    pub fn new(spec: KernelSpec, m: usize, locations: Option<Vec<Vec<f64>>>) -> Result<Self> {
        spec.validate()?;
        if spec.needs_locations() {
            match &locations {
                None => {
                    return Err(Error::Config(
                        "distance-based kernel configured but no locations supplied".into(),
                    ))
                }
                Some(l) if l.len() != m => {
                    return Err(Error::Data(format!("{} locations for {m} outcomes", l.len())))
                }
                _ => {}
            }
        }
        Ok(Kernel { spec, m, locations })
    }

    pub fn for_data(spec: KernelSpec, data: &Dataset) -> Result<Self> {
        let locs = if spec.needs_locations() {
            data.locations.clone()
        } else {
            None
        };
        Kernel::new(spec, data.m(), locs)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_compound_symmetry(&self) -> bool {
        matches!(self.spec.family, KernelFamily::CompoundSymmetry)
    }

    fn distance(&self, a: usize, b: usize) -> f64 {
        let locs = self.locations.as_ref().expect("checked at construction");
        let d2: f64 = locs[a].iter().zip(&locs[b]).map(|(x, y)| (x - y) * (x - y)).sum();
        d2.sqrt() / self.spec.distance_scale
    }

    /// Off-diagonal correlation between two distinct coordinates.
    fn off_diagonal(&self, a: usize, b: usize, rho: f64) -> f64 {
        match self.spec.family {
            KernelFamily::CompoundSymmetry => rho,
            KernelFamily::GenAr1 { nu } => {
                if rho == 0.0 {
                    0.0
                } else {
                    rho.powf(self.distance(a, b).powf(nu))
                }
            }
            KernelFamily::Matern32 => {
                if rho == 0.0 {
                    0.0
                } else {
                    let t = 3f64.sqrt() * self.distance(a, b) / rho;
                    (1.0 + t) * (-t).exp()
                }
            }
        }
    }

    /// Checks that `rho` gives a valid correlation block of size `d`.
    pub fn check_rho(&self, d: usize, rho: f64) -> Result<()> {
        let ok = match self.spec.family {
            KernelFamily::CompoundSymmetry => {
                rho < 1.0 && (d < 2 || rho > -1.0 / (d as f64 - 1.0))
            }
            KernelFamily::GenAr1 { .. } => (0.0..1.0).contains(&rho),
            KernelFamily::Matern32 => rho >= 0.0 && rho.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                name: "rho",
                value: rho,
                domain: format!("admissible set of {:?} for a block of size {d}", self.spec.family),
            })
        }
    }

    pub fn corr_matrix(&self, members: &[usize], rho: f64) -> Result<DMatrix<f64>> {
        let d = members.len();
        self.check_rho(d, rho)?;
        Ok(DMatrix::from_fn(d, d, |r, c| {
            if r == c {
                1.0
            } else {
                self.off_diagonal(members[r], members[c], rho)
            }
        }))
    }

    fn cholesky(&self, members: &[usize], rho: f64) -> Result<Cholesky<f64, Dyn>> {
        let g = self.corr_matrix(members, rho)?;
        Cholesky::new(g).ok_or(Error::NotPositiveDefinite {
            dim: members.len(),
            rho,
        })
    }

    /// Lower Cholesky factor of the correlation block.
    pub fn cholesky_factor(&self, members: &[usize], rho: f64) -> Result<DMatrix<f64>> {
        Ok(self.cholesky(members, rho)?.l())
    }

    pub fn block_logdet(&self, members: &[usize], rho: f64) -> Result<f64> {
        let d = members.len();
        if d <= 1 {
            return Ok(0.0);
        }
        if self.is_compound_symmetry() {
            self.check_rho(d, rho)?;
            return Ok(cs_logdet(d, rho));
        }
        Ok(chol_logdet(&self.cholesky(members, rho)?))
    }

    /// `tr(A_j Gamma_j^{-1})` without forming the inverse.
    pub fn block_trace(&self, members: &[usize], rho: f64, a_block: &DMatrix<f64>) -> Result<f64> {
        Ok(self.block_quadratics(members, rho, a_block)?.1)
    }

    /// `(log det Gamma_j, tr(A_j Gamma_j^{-1}))` from one factorisation.
    pub fn block_quadratics(
        &self,
        members: &[usize],
        rho: f64,
        a_block: &DMatrix<f64>,
    ) -> Result<(f64, f64)> {
        let d = members.len();
        debug_assert_eq!(a_block.nrows(), d);
        match d {
            0 => Ok((0.0, 0.0)),
            1 => Ok((0.0, a_block[(0, 0)])),
            _ if self.is_compound_symmetry() => {
                self.check_rho(d, rho)?;
                Ok((cs_logdet(d, rho), cs_trace(d, rho, a_block)))
            }
            _ => {
                let chol = self.cholesky(members, rho)?;
                let solved = chol.solve(a_block);
                Ok((chol_logdet(&chol), solved.trace()))
            }
        }
    }

    /// Transform of `rho` onto the unit interval used by the Beta prior.
    pub fn eta(&self, rho: f64) -> f64 {
        if self.is_compound_symmetry() {
            let m = self.m as f64;
            (m - 1.0) * rho / m + 1.0 / m
        } else {
            rho
        }
    }

    pub fn rho_from_eta(&self, eta: f64) -> f64 {
        if self.is_compound_symmetry() {
            let m = self.m as f64;
            (m * eta - 1.0) / (m - 1.0)
        } else {
            eta
        }
    }

    /// `log |d eta / d rho|`.
    pub fn log_jacobian(&self) -> f64 {
        if self.is_compound_symmetry() {
            let m = self.m as f64;
            ((m - 1.0) / m).ln()
        } else {
            0.0
        }
    }

    /// Open lower and closed upper bound of `rho` under the prior.
    pub fn rho_bounds(&self, rho_upper: f64) -> (f64, f64) {
        if self.is_compound_symmetry() {
            (-1.0 / (self.m as f64 - 1.0), rho_upper)
        } else {
            (0.0, rho_upper)
        }
    }
}

fn cs_logdet(d: usize, rho: f64) -> f64 {
    let d = d as f64;
    (d - 1.0) * (1.0 - rho).ln() + (1.0 + (d - 1.0) * rho).ln()
}

/// `Gamma^{-1} = (I - c 11^T) / (1 - rho)` with `c = rho / (1 + (d-1) rho)`.
fn cs_trace(d: usize, rho: f64, a: &DMatrix<f64>) -> f64 {
    let c = rho / (1.0 + (d as f64 - 1.0) * rho);
    (a.trace() - c * a.sum()) / (1.0 - rho)
}

fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Log-likelihood contribution of one block, without the `2 pi` constant.
pub fn block_loglik(n: usize, d: usize, sigma2: f64, logdet: f64, trace: f64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    -0.5 * n as f64 * (d as f64 * sigma2.ln() + logdet) - 0.5 * trace / sigma2
}

/// Residual cross-product `sum_i r_i r_i^T`, `r_i = y_i - B X_i`, kept in
/// the original coordinate order. Blocks and the permuted matrix `A` are
/// gathered from it on demand.
#[derive(Debug, Clone)]
pub struct ResidualCrossProduct {
    pub raw: DMatrix<f64>,
}

impl ResidualCrossProduct {
    pub fn compute(data: &Dataset, coef: &RegressionCoefficients) -> Self {
        let resid = &data.outcomes - &data.covariates * coef.0.transpose();
        ResidualCrossProduct {
            raw: resid.transpose() * resid,
        }
    }

    /// `A = P (sum_i r_i r_i^T) P^T`.
    pub fn permuted(&self, perm: &Permutation) -> DMatrix<f64> {
        perm.gather_matrix(&self.raw)
    }

    pub fn block(&self, members: &[usize]) -> DMatrix<f64> {
        let d = members.len();
        DMatrix::from_fn(d, d, |r, c| self.raw[(members[r], members[c])])
    }
}

/// `A` for explicit data, coefficients and permutation.
pub fn residual_crossproduct(
    data: &Dataset,
    coef: &RegressionCoefficients,
    perm: &Permutation,
) -> DMatrix<f64> {
    ResidualCrossProduct::compute(data, coef).permuted(perm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockQuadratics {
    pub logdet: Vec<f64>,
    pub trace: Vec<f64>,
    pub size: Vec<usize>,
}

impl BlockQuadratics {
    /// Per-label quantities for labels `0..members.len()`; empty labels get
    /// zeros.
    pub fn compute(
        kernel: &Kernel,
        members: &[Vec<usize>],
        rho: &[f64],
        cross: &ResidualCrossProduct,
    ) -> Result<Self> {
        let mut logdet = Vec::with_capacity(members.len());
        let mut trace = Vec::with_capacity(members.len());
        for (j, mem) in members.iter().enumerate() {
            let (ld, tr) = kernel.block_quadratics(mem, rho[j], &cross.block(mem))?;
            logdet.push(ld);
            trace.push(tr);
        }
        Ok(BlockQuadratics {
            logdet,
            trace,
            size: members.iter().map(Vec::len).collect(),
        })
    }
}

/// Exact Gaussian log-density of the outcomes given `(B, z, rho, sigma2)`.
pub fn log_likelihood(kernel: &Kernel, state: &ChainState, data: &Dataset) -> Result<f64> {
    let cross = ResidualCrossProduct::compute(data, &state.coef);
    log_likelihood_with(kernel, &state.assignment, &state.cov.sigma2, &state.cov.rho, &cross, data.n())
}

pub fn log_likelihood_with(
    kernel: &Kernel,
    assignment: &ClusterAssignment,
    sigma2: &[f64],
    rho: &[f64],
    cross: &ResidualCrossProduct,
    n: usize,
) -> Result<f64> {
    let members = assignment.members(sigma2.len());
    let q = BlockQuadratics::compute(kernel, &members, rho, cross)?;
    let m = assignment.m();
    // summation in label order
    let mut ll = -0.5 * (n * m) as f64 * LN_2PI;
    for j in 0..members.len() {
        ll += block_loglik(n, q.size[j], sigma2[j], q.logdet[j], q.trace[j]);
    }
    Ok(ll)
}
