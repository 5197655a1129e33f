//! Conditional samplers for the stick end-points, block correlations and
//! variances, the DP scale and the regression matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{BlockQuadratics, Kernel, ResidualCrossProduct};
use crate::model::{
    stick_weights, ChainState, ClusterAssignment, ClusterCovParams, Dataset, HyperParams, Phase,
    RegressionCoefficients, StickState,
};

/// Shrinkage iterations after which a slice sampler gives up.
pub const SLICE_CAP: usize = 10_000;

/// Floor applied to `1 - V_j` inside the DP-scale conditional.
const ONE_MINUS_V_FLOOR: f64 = 1e-12;

fn beta_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b).expect("positive shape parameters").sample(rng)
}

fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive shape and rate")
        .sample(rng)
}

/// Inverse-Gamma with shape `a` and scale `b`.
pub fn inv_gamma_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    1.0 / gamma_draw(a, b, rng)
}

/// `V_j ~ Beta(1 + m_j, alpha + sum_{l>j} m_l)` for `j < K`, `V_K = 1`.
pub fn sample_v<R: Rng + ?Sized>(
    assignment: &ClusterAssignment,
    k: usize,
    alpha: f64,
    rng: &mut R,
) -> Vec<f64> {
    let counts = assignment.counts(k);
    let mut tail: usize = counts.iter().sum();
    let mut v = Vec::with_capacity(k);
    for &c in counts.iter().take(k - 1) {
        tail -= c;
        let draw = beta_draw(1.0 + c as f64, alpha + tail as f64, rng);
        v.push(draw.max(f64::MIN_POSITIVE));
    }
    v.push(1.0);
    v
}

/// Variances: conjugate Inverse-Gamma update for occupied labels, prior for
/// the rest.
pub fn sample_sigma2<R: Rng + ?Sized>(
    blocks: &BlockQuadratics,
    hyper: &HyperParams,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    (0..hyper.k)
        .map(|j| {
            let d = blocks.size.get(j).copied().unwrap_or(0);
            if d == 0 {
                inv_gamma_draw(hyper.a1, hyper.b1, rng)
            } else {
                let shape = hyper.a1 + 0.5 * (n * d) as f64;
                let scale = hyper.b1 + 0.5 * blocks.trace[j];
                inv_gamma_draw(shape, scale, rng)
            }
        })
        .collect()
}

/// Shape and rate of the DP-scale conditional.
pub fn alpha_conditional(v: &[f64], hyper: &HyperParams) -> (f64, f64) {
    let k = v.len();
    let log_sum: f64 = v[..k - 1]
        .iter()
        .map(|vj| (1.0 - vj).max(ONE_MINUS_V_FLOOR).ln())
        .sum();
    (hyper.a0 + (k - 1) as f64, hyper.b0 - log_sum)
}

pub fn sample_alpha<R: Rng + ?Sized>(v: &[f64], hyper: &HyperParams, rng: &mut R) -> f64 {
    let (shape, rate) = alpha_conditional(v, hyper);
    gamma_draw(shape, rate, rng)
}

/// `log Beta(eta; a, b)` density, `-inf` outside `(0, 1)`.
pub fn ln_beta_density(eta: f64, a: f64, b: f64) -> f64 {
    if !(eta > 0.0 && eta < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * eta.ln() + (b - 1.0) * (1.0 - eta).ln() - statrs::function::beta::ln_beta(a, b)
}

/// `log Inv-Gamma(x; a, b)` density (shape `a`, scale `b`).
pub fn ln_inv_gamma_density(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// Log conditional of one block's correlation parameter, up to a constant:
/// block likelihood in `rho` times the Beta prior on the transformed value.
pub struct RhoConditional<'a> {
    pub kernel: &'a Kernel,
    pub members: &'a [usize],
    pub a_block: &'a DMatrix<f64>,
    pub sigma2: f64,
    pub n: usize,
    pub a2: f64,
    pub b2: f64,
    pub bounds: (f64, f64),
}

impl RhoConditional<'_> {
    pub fn log_density(&self, rho: f64) -> Result<f64> {
        let (lb, ub) = self.bounds;
        if !(rho > lb && rho <= ub) {
            return Ok(f64::NEG_INFINITY);
        }
        let eta = self.kernel.eta(rho);
        let prior = (self.a2 - 1.0) * eta.ln() + (self.b2 - 1.0) * (1.0 - eta).ln();
        if self.members.len() < 2 {
            return Ok(prior);
        }
        let (logdet, trace) = self.kernel.block_quadratics(self.members, rho, self.a_block)?;
        Ok(-0.5 * self.n as f64 * logdet - 0.5 * trace / self.sigma2 + prior)
    }
}

/// One update of the latent-step slice sampler for a bounded scalar.
///
/// Returns the new value and the new step size. The step size is drawn from
/// `2 |l - x0| + Exponential(mean lambda)`, the interval is clipped to
/// `(lb, ub)`, and proposals shrink towards `x0` until one lands above the
/// slice.
pub fn slice_sample_rho<F, R>(
    x0: f64,
    step0: f64,
    lambda: f64,
    bounds: (f64, f64),
    mut log_target: F,
    rng: &mut R,
) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
    R: Rng + ?Sized,
{
    let (lb, ub) = bounds;
    let f0 = log_target(x0)?;
    if !f0.is_finite() {
        return Err(Error::Numerical(format!(
            "slice sampler started at {x0} where the log target is {f0}"
        )));
    }
    let e: f64 = Exp::new(1.0).expect("unit rate").sample(rng);
    let log_omega = f0 - e;

    let l1 = x0 + step0 * (rng.random::<f64>() - 0.5);
    let extra: f64 = Exp::new(1.0 / lambda).expect("positive lambda").sample(rng);
    let s1 = 2.0 * (l1 - x0).abs() + extra;

    let lo = l1 - 0.5 * s1;
    let hi = l1 + 0.5 * s1;
    let mut a = if lb < lo && lo < ub { lo } else { lb };
    let mut b = if lb < hi && hi < ub { hi } else { ub };

    for _ in 0..SLICE_CAP {
        let x = a + rng.random::<f64>() * (b - a);
        if log_target(x)? > log_omega {
            return Ok((x, s1));
        }
        if x < x0 {
            a = a.max(x);
        } else {
            b = b.min(x);
        }
    }
    Err(Error::SliceCap {
        sampler: "correlation slice sampler",
        cap: SLICE_CAP,
    })
}

/// Draw of `rho` from its prior restricted to the support `(lb, ub]`.
pub fn sample_rho_prior<R: Rng + ?Sized>(kernel: &Kernel, hyper: &HyperParams, rng: &mut R) -> f64 {
    let (lb, ub) = kernel.rho_bounds(hyper.rho_upper);
    loop {
        let rho = kernel.rho_from_eta(beta_draw(hyper.a2, hyper.b2, rng));
        if rho > lb && rho <= ub {
            return rho;
        }
    }
}

/// Updates every slot's correlation parameter in place.
///
/// Blocks with two or more members are slice sampled; singleton blocks get
/// `rho = 0`; empty slots are refreshed from the prior. A block whose current
/// value lies outside the prior support (a former singleton at `rho = 0`
/// under a distance kernel) restarts from a prior draw.
#[allow(clippy::too_many_arguments)]
pub fn sample_rho_all<R: Rng + ?Sized>(
    kernel: &Kernel,
    members: &[Vec<usize>],
    cov: &mut ClusterCovParams,
    steps: &mut [f64],
    cross: &ResidualCrossProduct,
    hyper: &HyperParams,
    lambda: f64,
    n: usize,
    rng: &mut R,
) -> Result<()> {
    let bounds = kernel.rho_bounds(hyper.rho_upper);
    for j in 0..hyper.k {
        let mem: &[usize] = members.get(j).map_or(&[], Vec::as_slice);
        match mem.len() {
            0 => cov.rho[j] = sample_rho_prior(kernel, hyper, rng),
            1 => cov.rho[j] = 0.0,
            _ => {
                let a_block = cross.block(mem);
                let target = RhoConditional {
                    kernel,
                    members: mem,
                    a_block: &a_block,
                    sigma2: cov.sigma2[j],
                    n,
                    a2: hyper.a2,
                    b2: hyper.b2,
                    bounds,
                };
                let mut start = cov.rho[j];
                while !target.log_density(start)?.is_finite() {
                    start = sample_rho_prior(kernel, hyper, rng);
                }
                let (rho, step) =
                    slice_sample_rho(start, steps[j], lambda, bounds, |r| target.log_density(r), rng)?;
                cov.rho[j] = rho;
                steps[j] = step;
            }
        }
    }
    Ok(())
}

/// Eigendecomposition of one block of `Sigma_perm^{-1}`.
#[derive(Debug, Clone)]
pub struct BlockEigen {
    pub members: Vec<usize>,
    pub vectors: DMatrix<f64>,
    /// Eigenvalues of the precision block `(sigma2 Gamma)^{-1}`.
    pub values: DVector<f64>,
}

/// Posterior machinery for `vec(B)`.
///
/// The covariate Gram matrix `sum_i X_i X_i^T = Q1 L1 Q1^T` is decomposed once;
/// each draw decomposes the precision blocks, so that
/// `Xi = (Q1 (x) P^T Q2)(L1 (x) L2 + I / tau2)^{-1} (Q1 (x) P^T Q2)^T`.
/// Kronecker products are applied through the `vec(C X A^T)` identity.
#[derive(Debug, Clone)]
pub struct BSamplerWorkspace {
    pub q1: DMatrix<f64>,
    pub lam1: DVector<f64>,
    /// `sum_i y_i X_i^T` (`M x p`).
    pub yx: DMatrix<f64>,
}

impl BSamplerWorkspace {
    pub fn new(data: &Dataset) -> Result<Self> {
        let gram = data.covariates.transpose() * &data.covariates;
        let eig = SymmetricEigen::new(gram);
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("covariate Gram matrix has non-finite eigenvalues".into()));
        }
        Ok(BSamplerWorkspace {
            q1: eig.eigenvectors,
            lam1: eig.eigenvalues,
            yx: data.outcomes.transpose() * &data.covariates,
        })
    }

    pub fn block_eigens(
        kernel: &Kernel,
        members: &[Vec<usize>],
        cov: &ClusterCovParams,
    ) -> Result<Vec<BlockEigen>> {
        members
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(j, mem)| {
                let g = kernel.corr_matrix(mem, cov.rho[j])?;
                let eig = SymmetricEigen::new(g);
                if eig.eigenvalues.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::NotPositiveDefinite {
                        dim: mem.len(),
                        rho: cov.rho[j],
                    });
                }
                Ok(BlockEigen {
                    members: mem.clone(),
                    vectors: eig.eigenvectors,
                    values: eig.eigenvalues.map(|v| 1.0 / (cov.sigma2[j] * v)),
                })
            })
            .collect()
    }

    /// Returns `(mu, D)` in the rotated basis: the posterior mean rotated by
    /// `(Q1 (x) Q)^T`, and the diagonal `L1 (x) L2 + I / tau2` as an `M x p`
    /// array (entry `[k, q]` pairs eigenvalue `k` of the precision with `q`
    /// of the Gram matrix).
    fn rotated(&self, eigs: &[BlockEigen], tau2: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let (m, p) = self.yx.shape();
        let mut t = DMatrix::zeros(m, p);
        let mut lam2 = DVector::zeros(m);
        for e in eigs {
            // diag(L2) V^T G[mem]
            for (b, &row) in e.members.iter().enumerate() {
                lam2[row] = e.values[b];
                for q in 0..p {
                    let mut acc = 0.0;
                    for (a, &src) in e.members.iter().enumerate() {
                        acc += e.vectors[(a, b)] * self.yx[(src, q)];
                    }
                    t[(row, q)] = e.values[b] * acc;
                }
            }
        }
        let t = t * &self.q1;
        let diag = DMatrix::from_fn(m, p, |k, q| lam2[k] * self.lam1[q] + 1.0 / tau2);
        (t.component_div(&diag), diag)
    }

    /// `Q R Q1^T` for a rotated-basis array `R`.
    fn unrotate(&self, eigs: &[BlockEigen], r: &DMatrix<f64>) -> DMatrix<f64> {
        let (m, p) = r.shape();
        let mut out = DMatrix::zeros(m, p);
        for e in eigs {
            for (a, &row) in e.members.iter().enumerate() {
                for q in 0..p {
                    let mut acc = 0.0;
                    for (b, &src) in e.members.iter().enumerate() {
                        acc += e.vectors[(a, b)] * r[(src, q)];
                    }
                    out[(row, q)] = acc;
                }
            }
        }
        out * self.q1.transpose()
    }

    pub fn posterior_mean(&self, eigs: &[BlockEigen], tau2: f64) -> DMatrix<f64> {
        let (mu, _) = self.rotated(eigs, tau2);
        self.unrotate(eigs, &mu)
    }

    /// `vec(B) = mu + U nu` with `nu` standard normal.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        eigs: &[BlockEigen],
        tau2: f64,
        rng: &mut R,
    ) -> DMatrix<f64> {
        let (mu, diag) = self.rotated(eigs, tau2);
        let (m, p) = mu.shape();
        let noise = DMatrix::from_fn(m, p, |k, q| {
            let z: f64 = StandardNormal.sample(rng);
            z / diag[(k, q)].sqrt()
        });
        self.unrotate(eigs, &(mu + noise))
    }

    /// Dense `U` (`Mp x Mp`), for checks on small problems.
    pub fn dense_u(&self, eigs: &[BlockEigen], tau2: f64) -> DMatrix<f64> {
        let (m, p) = self.yx.shape();
        let mut q2 = DMatrix::zeros(m, m);
        let mut lam2 = DVector::zeros(m);
        for e in eigs {
            for (b, &col) in e.members.iter().enumerate() {
                lam2[col] = e.values[b];
                for (a, &row) in e.members.iter().enumerate() {
                    q2[(row, col)] = e.vectors[(a, b)];
                }
            }
        }
        let kron = self.q1.kronecker(&q2);
        let scale = DVector::from_fn(m * p, |i, _| {
            let (q, k) = (i / m, i % m);
            1.0 / (lam2[k] * self.lam1[q] + 1.0 / tau2).sqrt()
        });
        kron * DMatrix::from_diagonal(&scale)
    }

    /// Dense posterior covariance `Xi = U U^T`.
    pub fn dense_covariance(&self, eigs: &[BlockEigen], tau2: f64) -> DMatrix<f64> {
        let u = self.dense_u(eigs, tau2);
        &u * u.transpose()
    }
}

pub fn sample_b<R: Rng + ?Sized>(
    workspace: &BSamplerWorkspace,
    kernel: &Kernel,
    members: &[Vec<usize>],
    cov: &ClusterCovParams,
    tau2: f64,
    rng: &mut R,
) -> Result<RegressionCoefficients> {
    let eigs = BSamplerWorkspace::block_eigens(kernel, members, cov)?;
    Ok(RegressionCoefficients(workspace.sample(&eigs, tau2, rng)))
}

/// Starting state: prior draws for `theta`, `V` and the DP scale at its prior
/// mean, `B = 0`, and labels `z_m = ceil(m K / M)` (singletons when `K = M`).
pub fn initial_state<R: Rng + ?Sized>(
    data: &Dataset,
    kernel: &Kernel,
    hyper: &HyperParams,
    rng: &mut R,
) -> Result<ChainState> {
    let (m, k) = (data.m(), hyper.k);
    let j0 = k.min(m);
    let z: Vec<usize> = (1..=m).map(|i| (i * j0).div_ceil(m) - 1).collect();
    let assignment = ClusterAssignment::new(z);
    let counts = assignment.counts(k);
    let alpha = hyper.a0 / hyper.b0;
    let mut v: Vec<f64> = (0..k - 1)
        .map(|_| beta_draw(1.0, alpha, rng).max(f64::MIN_POSITIVE))
        .collect();
    v.push(1.0);
    let sticks = StickState {
        w: stick_weights(&v)?,
        v,
        alpha,
    };
    let sigma2 = (0..k).map(|_| inv_gamma_draw(hyper.a1, hyper.b1, rng)).collect();
    let rho = (0..k)
        .map(|j| {
            if counts[j] == 1 {
                0.0
            } else {
                sample_rho_prior(kernel, hyper, rng)
            }
        })
        .collect();
    Ok(ChainState {
        assignment,
        sticks,
        cov: ClusterCovParams { sigma2, rho },
        coef: RegressionCoefficients::zeros(m, data.p()),
        rho_steps: vec![1.0; k],
        iteration: 0,
        phase: Phase::BurnIn1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn v_conditional_moments() {
        // z = (1,1,2), K = 3, alpha = 1: V1 ~ Beta(3,2), V2 ~ Beta(2,1)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = ClusterAssignment::new(vec![0, 0, 1]);
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_v(&a, 3, 1.0, &mut rng)).collect();
        let (m1, _) = mean_var(&draws.iter().map(|v| v[0]).collect::<Vec<_>>());
        let (m2, _) = mean_var(&draws.iter().map(|v| v[1]).collect::<Vec<_>>());
        assert!((m1 - 0.6).abs() < 0.01, "{m1}");
        assert!((m2 - 2.0 / 3.0).abs() < 0.01, "{m2}");
        assert!(draws.iter().all(|v| v[2] == 1.0));
    }

    #[test]
    fn empty_tail_slots_follow_the_prior() {
        // K = 3 with everything in cluster 1: V2 ~ Beta(1, alpha)
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = ClusterAssignment::new(vec![0; 4]);
        let alpha = 3.0;
        let v2: Vec<f64> = (0..100_000).map(|_| sample_v(&a, 3, alpha, &mut rng)[1]).collect();
        let (m, _) = mean_var(&v2);
        assert!((m - 1.0 / (1.0 + alpha)).abs() < 0.01);
    }

    #[test]
    fn alpha_conditional_arithmetic() {
        let mut h = HyperParams::with_truncation(3);
        h.a0 = 1.0;
        h.b0 = 1.0;
        let (shape, rate) = alpha_conditional(&[0.5, 0.5, 1.0], &h);
        assert_eq!(shape, 3.0);
        assert!((rate - (1.0 + 2.0 * 2f64.ln())).abs() < 1e-14);
        let (shape, rate) = alpha_conditional(&[1e-300, 1e-300, 1.0], &h);
        assert_eq!((shape, rate), (3.0, 1.0));
        // saturated draws stay finite
        let (_, rate) = alpha_conditional(&[1.0, 0.5, 1.0], &h);
        assert!(rate.is_finite());
    }

    #[test]
    fn sigma2_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut h = HyperParams::with_truncation(2);
        h.a1 = 2.01;
        h.b1 = 1.01;
        let blocks = BlockQuadratics {
            logdet: vec![0.0, 0.0],
            trace: vec![3.0, 0.0],
            size: vec![2, 0],
        };
        let draws: Vec<Vec<f64>> = (0..100_000).map(|_| sample_sigma2(&blocks, &h, 4, &mut rng)).collect();
        let (m0, _) = mean_var(&draws.iter().map(|v| v[0]).collect::<Vec<_>>());
        let (m1, _) = mean_var(&draws.iter().map(|v| v[1]).collect::<Vec<_>>());
        assert!((m0 - 2.51 / 5.01).abs() < 0.01, "{m0}");
        assert!((m1 - 1.0).abs() < 0.05, "{m1}");
    }

    #[test]
    fn slice_sampler_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = 0.94;
        let mut s = 1.0;
        for _ in 0..10_000 {
            let (nx, ns) = slice_sample_rho(
                x,
                s,
                100.0,
                (0.0, 0.95),
                |r| Ok(if r > 0.0 && r <= 0.95 { 5.0 * r.ln() } else { f64::NEG_INFINITY }),
                &mut rng,
            )
            .unwrap();
            assert!(nx > 0.0 && nx <= 0.95);
            x = nx;
            s = ns;
        }
    }

    #[test]
    fn singleton_rho_is_zero_and_cs_eta() {
        let k = Kernel::new(KernelSpec::compound_symmetry(), 100, None).unwrap();
        assert!((k.eta(0.0) - 0.01).abs() < 1e-15);
        let h = HyperParams::with_truncation(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let members = vec![vec![0], vec![1]];
        let mut cov = ClusterCovParams {
            sigma2: vec![1.0, 1.0],
            rho: vec![0.5, 0.5],
        };
        let cross = ResidualCrossProduct {
            raw: DMatrix::identity(100, 100),
        };
        let mut steps = vec![1.0; 2];
        sample_rho_all(&k, &members, &mut cov, &mut steps, &cross, &h, 100.0, 10, &mut rng).unwrap();
        assert_eq!(cov.rho, vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_b_posterior() {
        // p = M = 1, X = 1, sigma2 = 1: N(sum y / (N + 1/tau2), 1 / (N + 1/tau2))
        let y = DMatrix::from_column_slice(4, 1, &[0.5, 1.5, -0.2, 1.0]);
        let x = DMatrix::from_element(4, 1, 1.0);
        let data = Dataset {
            outcomes: y,
            covariates: x,
            locations: None,
            labels: vec!["y1".into()],
        };
        let ws = BSamplerWorkspace::new(&data).unwrap();
        let k = Kernel::new(KernelSpec::compound_symmetry(), 1, None).unwrap();
        let cov = ClusterCovParams {
            sigma2: vec![1.0],
            rho: vec![0.0],
        };
        let members = vec![vec![0]];
        let tau2 = 2.0;
        let prec = 4.0 + 1.0 / tau2;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_b(&ws, &k, &members, &cov, tau2, &mut rng).unwrap().0[(0, 0)])
            .collect();
        let (mean, var) = mean_var(&draws);
        assert!((mean - 2.8 / prec).abs() < 0.01, "{mean}");
        assert!((var - 1.0 / prec).abs() < 0.01, "{var}");
    }

    #[test]
    fn initial_labels() {
        let y = DMatrix::from_fn(3, 6, |i, j| (i + j) as f64);
        let x = DMatrix::from_element(3, 1, 1.0);
        let data = Dataset::new(y, x, None).unwrap();
        let k = Kernel::for_data(KernelSpec::compound_symmetry(), &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = initial_state(&data, &k, &HyperParams::with_truncation(6), &mut rng).unwrap();
        assert_eq!(s.assignment.z, vec![0, 1, 2, 3, 4, 5]);
        assert!(s.cov.rho.iter().all(|&r| r == 0.0));
        let s = initial_state(&data, &k, &HyperParams::with_truncation(3), &mut rng).unwrap();
        assert_eq!(s.assignment.z, vec![0, 0, 1, 1, 2, 2]);
        assert!((s.sticks.w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
