//! Samplers for the cluster index vector: single-coordinate Gibbs and
//! Walker slice updates, and the head-tail split-merge move.

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{block_loglik, Kernel, ResidualCrossProduct};
use crate::model::{ChainState, ClusterAssignment, ClusterCovParams, HyperParams};
use crate::params::{ln_inv_gamma_density, SLICE_CAP};

/// Block log-likelihoods for arbitrary member sets and block parameters.
#[derive(Clone, Copy)]
pub struct BlockEval<'a> {
    pub kernel: &'a Kernel,
    pub cross: &'a ResidualCrossProduct,
    pub n: usize,
}

impl BlockEval<'_> {
    /// Block log-likelihood without the `2 pi` constant; `-inf` when the
    /// correlation matrix is not admissible for this block.
    pub fn ll(&self, members: &[usize], sigma2: f64, rho: f64) -> Result<f64> {
        if members.is_empty() {
            return Ok(0.0);
        }
        let a = self.cross.block(members);
        match self.kernel.block_quadratics(members, rho, &a) {
            Ok((logdet, trace)) => Ok(block_loglik(self.n, members.len(), sigma2, logdet, trace)),
            Err(Error::NotPositiveDefinite { .. } | Error::Domain { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }
}

fn inserted(v: &[usize], m: usize) -> Vec<usize> {
    let mut out = v.to_vec();
    if let Err(pos) = out.binary_search(&m) {
        out.insert(pos, m);
    }
    out
}

fn removed(v: &[usize], m: usize) -> Vec<usize> {
    v.iter().copied().filter(|&x| x != m).collect()
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn first_empty(counts: &[usize]) -> Option<usize> {
    counts.iter().position(|&c| c == 0)
}

/// `log p(Z_m = j | Z_{-m}, ...)` relative to the current label of `m`:
/// the change in log-likelihood from moving `m` to `j`, plus `log w_j`.
pub fn z_log_conditional(
    eval: &BlockEval,
    assignment: &ClusterAssignment,
    cov: &ClusterCovParams,
    w: &[f64],
    m: usize,
    j: usize,
) -> Result<f64> {
    let c = assignment.z[m];
    if j == c {
        return Ok(w[c].ln());
    }
    let members = assignment.members(cov.k());
    let base = eval.ll(&members[c], cov.sigma2[c], cov.rho[c])?
        - eval.ll(&removed(&members[c], m), cov.sigma2[c], cov.rho[c])?;
    let gain = eval.ll(&inserted(&members[j], m), cov.sigma2[j], cov.rho[j])?
        - eval.ll(&members[j], cov.sigma2[j], cov.rho[j])?;
    Ok(gain - base + w[j].ln())
}

/// Member lists and cached block log-likelihoods for a sweep.
struct SweepBlocks<'a> {
    eval: BlockEval<'a>,
    cov: &'a ClusterCovParams,
    log_w: Vec<f64>,
    members: Vec<Vec<usize>>,
    ll: Vec<f64>,
}

/// Per-coordinate scratch: the coordinate's current block with it removed,
/// and lazily evaluated candidate labels.
struct Candidate {
    m: usize,
    c: usize,
    without: Vec<usize>,
    ll_without: f64,
    base: f64,
    with: Vec<Option<(f64, f64)>>,
}

impl<'a> SweepBlocks<'a> {
    fn new(eval: BlockEval<'a>, assignment: &ClusterAssignment, cov: &'a ClusterCovParams, w: &[f64]) -> Result<Self> {
        let members = assignment.members(cov.k());
        let ll = members
            .iter()
            .enumerate()
            .map(|(j, mem)| eval.ll(mem, cov.sigma2[j], cov.rho[j]))
            .collect::<Result<Vec<_>>>()?;
        Ok(SweepBlocks {
            eval,
            cov,
            log_w: w.iter().map(|x| x.ln()).collect(),
            members,
            ll,
        })
    }

    fn k(&self) -> usize {
        self.cov.k()
    }

    fn candidate(&self, m: usize, c: usize) -> Result<Candidate> {
        let without = removed(&self.members[c], m);
        let ll_without = self.eval.ll(&without, self.cov.sigma2[c], self.cov.rho[c])?;
        Ok(Candidate {
            m,
            c,
            without,
            ll_without,
            base: self.ll[c] - ll_without,
            with: vec![None; self.k()],
        })
    }

    /// Returns the relative log conditional of label `j`.
    fn gain(&self, cand: &mut Candidate, j: usize) -> Result<f64> {
        if j == cand.c {
            return Ok(self.log_w[j]);
        }
        if let Some((g, _)) = cand.with[j] {
            return Ok(g);
        }
        let ll_with = self
            .eval
            .ll(&inserted(&self.members[j], cand.m), self.cov.sigma2[j], self.cov.rho[j])?;
        let g = ll_with - self.ll[j] - cand.base + self.log_w[j];
        cand.with[j] = Some((g, ll_with));
        Ok(g)
    }

    fn apply(&mut self, cand: Candidate, j: usize) {
        if j == cand.c {
            return;
        }
        let ll_with = cand.with[j].expect("gain evaluated before the move").1;
        self.members[j] = inserted(&self.members[j], cand.m);
        self.ll[j] = ll_with;
        self.members[cand.c] = cand.without;
        self.ll[cand.c] = cand.ll_without;
    }
}

/// How the Walker slice sampler chooses its initial label window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkerWindow {
    /// Window of `s` labels placed uniformly among those containing the
    /// current label, then clipped to `1..=K`.
    #[default]
    Exact,
    /// `[1, l]` with `l` uniform on `z0..=min(z0 + s - 1, K)`.
    Published,
}

impl std::str::FromStr for WalkerWindow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(WalkerWindow::Exact),
            "published" => Ok(WalkerWindow::Published),
            other => Err(Error::Config(format!("unknown walker window `{other}`"))),
        }
    }
}

fn walker_label<R: Rng + ?Sized>(
    blocks: &SweepBlocks,
    cand: &mut Candidate,
    step: usize,
    window: WalkerWindow,
    rng: &mut R,
) -> Result<usize> {
    let k = blocks.k();
    let c = cand.c;
    let e: f64 = Exp1.sample(rng);
    let log_omega = blocks.gain(cand, c)? - e;
    let (mut a, mut b) = match window {
        WalkerWindow::Exact => {
            let l = c + rng.random_range(0..step);
            ((l + 1).saturating_sub(step), l.min(k - 1))
        }
        WalkerWindow::Published => {
            let hi = (c + step - 1).min(k - 1);
            (0, rng.random_range(c..=hi))
        }
    };
    for _ in 0..SLICE_CAP {
        let proposal = rng.random_range(a..=b);
        if proposal == c || blocks.gain(cand, proposal)? > log_omega {
            return Ok(proposal);
        }
        if proposal < c {
            a = proposal + 1;
        } else {
            b = proposal - 1;
        }
    }
    Err(Error::SliceCap {
        sampler: "label slice sampler",
        cap: SLICE_CAP,
    })
}

fn gibbs_label<R: Rng + ?Sized>(blocks: &SweepBlocks, cand: &mut Candidate, rng: &mut R) -> Result<usize> {
    let gains = (0..blocks.k())
        .map(|j| blocks.gain(cand, j))
        .collect::<Result<Vec<_>>>()?;
    let lse = log_sum_exp(&gains);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, g) in gains.iter().enumerate() {
        acc += (g - lse).exp();
        if u < acc {
            return Ok(j);
        }
    }
    Ok(gains
        .iter()
        .enumerate()
        .rev()
        .find(|(_, g)| g.is_finite())
        .map_or(cand.c, |(j, _)| j))
}

/// Which single-coordinate update a sweep uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZUpdate {
    Walker { step: usize, window: WalkerWindow },
    Gibbs,
}

/// One label update for every coordinate in ascending order. Returns the
/// number of coordinates that changed label.
pub fn z_sweep<R: Rng + ?Sized>(
    eval: BlockEval,
    assignment: &mut ClusterAssignment,
    cov: &ClusterCovParams,
    w: &[f64],
    update: ZUpdate,
    rng: &mut R,
) -> Result<usize> {
    let mut blocks = SweepBlocks::new(eval, assignment, cov, w)?;
    let mut moved = 0;
    for m in 0..assignment.m() {
        let c = assignment.z[m];
        let mut cand = blocks.candidate(m, c)?;
        let j = match update {
            ZUpdate::Walker { step, window } => walker_label(&blocks, &mut cand, step.max(1), window, rng)?,
            ZUpdate::Gibbs => gibbs_label(&blocks, &mut cand, rng)?,
        };
        if j != c {
            blocks.apply(cand, j);
            assignment.z[m] = j;
            moved += 1;
        }
    }
    Ok(moved)
}

#[allow(clippy::too_many_arguments)]
/// Label update for a single coordinate by Walker's slice sampler.
pub fn walker_slice_z<R: Rng + ?Sized>(
    eval: BlockEval,
    assignment: &ClusterAssignment,
    cov: &ClusterCovParams,
    w: &[f64],
    m: usize,
    step: usize,
    window: WalkerWindow,
    rng: &mut R,
) -> Result<usize> {
    let blocks = SweepBlocks::new(eval, assignment, cov, w)?;
    let mut cand = blocks.candidate(m, assignment.z[m])?;
    walker_label(&blocks, &mut cand, step.max(1), window, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    Head,
    Tail,
}

/// Selection probabilities over multi-member clusters, as `(label, prob)`.
///
/// The `head` weights go to the largest clusters in order of decreasing size
/// (ties by label); clusters past them share what is left of unit mass
/// equally. Tail mode assigns the same sequence starting from the smallest
/// cluster. Empty when no cluster has two or more members.
pub fn build_split_weights(counts: &[usize], mode: SplitMode, head: &[f64]) -> Vec<(usize, f64)> {
    let mut multi: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > 1).collect();
    multi.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    if mode == SplitMode::Tail {
        multi.reverse();
    }
    let rest = multi.len().saturating_sub(head.len());
    let leftover = (1.0 - head.iter().sum::<f64>()).max(0.0);
    let raw: Vec<f64> = (0..multi.len())
        .map(|r| head.get(r).copied().unwrap_or(leftover / rest as f64))
        .collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) {
        let even = 1.0 / multi.len() as f64;
        return multi.into_iter().map(|j| (j, even)).collect();
    }
    multi.into_iter().zip(raw).map(|(j, r)| (j, r / total)).collect()
}

/// Prior density of one slot's block parameters, as it enters the
/// acceptance ratio: Inverse-Gamma on the variance, and for blocks with two
/// or more members the truncated transformed-Beta density on the
/// correlation.
#[derive(Debug, Clone)]
pub struct ThetaPrior {
    a1: f64,
    b1: f64,
    a2: f64,
    b2: f64,
    bounds: (f64, f64),
    log_jacobian: f64,
    log_mass: f64,
    eta_of: Kernel,
}

impl ThetaPrior {
    pub fn new(kernel: &Kernel, hyper: &HyperParams) -> Self {
        use statrs::distribution::{Beta as BetaDist, ContinuousCDF};
        let bounds = kernel.rho_bounds(hyper.rho_upper);
        let dist = BetaDist::new(hyper.a2, hyper.b2).expect("positive shape parameters");
        let mass = dist.cdf(kernel.eta(bounds.1)) - dist.cdf(kernel.eta(bounds.0));
        ThetaPrior {
            a1: hyper.a1,
            b1: hyper.b1,
            a2: hyper.a2,
            b2: hyper.b2,
            bounds,
            log_jacobian: kernel.log_jacobian(),
            log_mass: mass.ln(),
            eta_of: kernel.clone(),
        }
    }

    pub fn ln_density(&self, sigma2: f64, rho: f64, size: usize) -> f64 {
        let mut lp = ln_inv_gamma_density(sigma2, self.a1, self.b1);
        if size >= 2 {
            if !(rho > self.bounds.0 && rho <= self.bounds.1) {
                return f64::NEG_INFINITY;
            }
            lp += crate::params::ln_beta_density(self.eta_of.eta(rho), self.a2, self.b2) + self.log_jacobian
                - self.log_mass;
        }
        lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Split,
    Merge,
}

/// A split or merge proposal.
///
/// `labels = (j, j2)`: for a split, `j` is the cluster split and `j2` the
/// new label; for a merge, `j2` is absorbed into `j`. `members` is the union
/// of the two clusters in ascending order, and `launch`/`path` give each
/// member's side (0 for `j`, 1 for `j2`) before and after the restricted scan.
#[derive(Debug, Clone)]
pub struct HtsmProposal {
    pub kind: MoveKind,
    pub labels: (usize, usize),
    pub members: Vec<usize>,
    pub launch: Vec<u8>,
    pub path: Vec<u8>,
    pub assignment: ClusterAssignment,
    pub cov: ClusterCovParams,
    pub log_q_forward: f64,
    pub log_q_reverse: f64,
}

/// Restricted two-label scan over `members` in ascending order, starting
/// from `launch`. With `target` the scan is replayed deterministically and
/// its path probability returned; otherwise sides are sampled.
#[allow(clippy::too_many_arguments)]
fn restricted_scan<R: Rng + ?Sized>(
    eval: &BlockEval,
    members: &[usize],
    launch: &[u8],
    target: Option<&[u8]>,
    theta: [(f64, f64); 2],
    log_w: [f64; 2],
    rng: &mut R,
) -> Result<(Vec<u8>, f64)> {
    let mut side = launch.to_vec();
    let mut sets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &m) in members.iter().enumerate() {
        sets[side[i] as usize].push(m);
    }
    let mut ll = [
        eval.ll(&sets[0], theta[0].0, theta[0].1)?,
        eval.ll(&sets[1], theta[1].0, theta[1].1)?,
    ];
    let mut log_p = 0.0;
    for (i, &m) in members.iter().enumerate() {
        let s = side[i] as usize;
        let o = 1 - s;
        let without = removed(&sets[s], m);
        let other_with = inserted(&sets[o], m);
        let ll_without = eval.ll(&without, theta[s].0, theta[s].1)?;
        let ll_other_with = eval.ll(&other_with, theta[o].0, theta[o].1)?;
        let g_stay = ll[s] + ll[o] + log_w[s];
        let g_move = ll_without + ll_other_with + log_w[o];
        let lse = log_sum_exp(&[g_stay, g_move]);
        let (lp_stay, lp_move) = if lse == f64::NEG_INFINITY {
            (0.5f64.ln(), 0.5f64.ln())
        } else {
            (g_stay - lse, g_move - lse)
        };
        let go = match target {
            Some(t) => t[i] as usize == o,
            None => rng.random::<f64>() < lp_move.exp(),
        };
        if go {
            log_p += lp_move;
            sets[s] = without;
            sets[o] = other_with;
            ll[s] = ll_without;
            ll[o] = ll_other_with;
            side[i] = o as u8;
        } else {
            log_p += lp_stay;
        }
    }
    Ok((side, log_p))
}

/// Split proposal, or `None` when every cluster is a singleton or no slot is
/// free.
pub fn propose_split<R: Rng + ?Sized>(
    eval: &BlockEval,
    state: &ChainState,
    hyper: &HyperParams,
    mode: SplitMode,
    rng: &mut R,
) -> Result<Option<HtsmProposal>> {
    let k = state.k();
    let counts = state.assignment.counts(k);
    let Some(new) = first_empty(&counts) else {
        return Ok(None);
    };
    let weights = build_split_weights(&counts, mode, &hyper.split_weights);
    if weights.is_empty() {
        return Ok(None);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut j = weights[weights.len() - 1].0;
    for &(label, p) in &weights {
        acc += p;
        if u < acc {
            j = label;
            break;
        }
    }
    let members: Vec<usize> = (0..state.assignment.m()).filter(|&m| state.assignment.z[m] == j).collect();
    let launch: Vec<u8> = members.iter().map(|_| u8::from(rng.random::<bool>())).collect();
    split_with_launch(eval, state, j, new, &members, launch, None, rng).map(Some)
}

/// Split of cluster `j` into `j` and `new` from a given launch. With
/// `target`, the scan is replayed to that configuration instead of sampled.
#[allow(clippy::too_many_arguments)]
pub fn split_with_launch<R: Rng + ?Sized>(
    eval: &BlockEval,
    state: &ChainState,
    j: usize,
    new: usize,
    members: &[usize],
    launch: Vec<u8>,
    target: Option<&[u8]>,
    rng: &mut R,
) -> Result<HtsmProposal> {
    let w = &state.sticks.w;
    let theta = (state.cov.sigma2[j], state.cov.rho[j]);
    let (path, log_p) = restricted_scan(eval, members, &launch, target, [theta, theta], [w[j].ln(), w[new].ln()], rng)?;
    let mut assignment = state.assignment.clone();
    for (i, &m) in members.iter().enumerate() {
        assignment.z[m] = if path[i] == 0 { j } else { new };
    }
    let mut cov = state.cov.clone();
    cov.sigma2[new] = theta.0;
    cov.rho[new] = theta.1;
    let j_after = assignment.n_clusters() as f64;
    Ok(HtsmProposal {
        kind: MoveKind::Split,
        labels: (j, new),
        members: members.to_vec(),
        launch,
        path,
        assignment,
        cov,
        log_q_forward: members.len() as f64 * 0.5f64.ln() + log_p,
        log_q_reverse: -(j_after * (j_after - 1.0)).ln(),
    })
}

/// Merge proposal for a uniformly drawn ordered pair, or `None` when fewer
/// than two clusters are in use.
pub fn propose_merge<R: Rng + ?Sized>(
    eval: &BlockEval,
    state: &ChainState,
    rng: &mut R,
) -> Result<Option<HtsmProposal>> {
    let counts = state.assignment.counts(state.k());
    let used: Vec<usize> = (0..counts.len()).filter(|&j| counts[j] > 0).collect();
    if used.len() < 2 {
        return Ok(None);
    }
    let a = rng.random_range(0..used.len());
    let mut b = rng.random_range(0..used.len() - 1);
    if b >= a {
        b += 1;
    }
    merge_pair(eval, state, used[a], used[b], None).map(Some)
}

/// Merge of `j2` into `j`. The reverse split is scored by replaying the
/// restricted scan to the pre-merge configuration, starting from `launch`
/// (the pre-merge configuration itself when `None`) with the pre-merge
/// block parameters.
pub fn merge_pair(
    eval: &BlockEval,
    state: &ChainState,
    j: usize,
    j2: usize,
    launch: Option<Vec<u8>>,
) -> Result<HtsmProposal> {
    let z = &state.assignment.z;
    let members: Vec<usize> = (0..z.len()).filter(|&m| z[m] == j || z[m] == j2).collect();
    let original: Vec<u8> = members.iter().map(|&m| u8::from(z[m] == j2)).collect();
    let launch = launch.unwrap_or_else(|| original.clone());

    let mut assignment = state.assignment.clone();
    for &m in &members {
        assignment.z[m] = j;
    }
    let mut cov = state.cov.clone();
    cov.sigma2[j2] = cov.sigma2[j];
    cov.rho[j2] = cov.rho[j];

    let counts = assignment.counts(state.k());
    let reverse_new = first_empty(&counts).expect("merge frees a slot");
    let w = &state.sticks.w;
    let theta = [
        (state.cov.sigma2[j], state.cov.rho[j]),
        (state.cov.sigma2[j2], state.cov.rho[j2]),
    ];
    let mut no_rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let (_, log_p) = restricted_scan(
        eval,
        &members,
        &launch,
        Some(&original),
        theta,
        [w[j].ln(), w[reverse_new].ln()],
        &mut no_rng,
    )?;
    let j_before = state.assignment.n_clusters() as f64;
    Ok(HtsmProposal {
        kind: MoveKind::Merge,
        labels: (j, j2),
        log_q_reverse: members.len() as f64 * 0.5f64.ln() + log_p,
        members,
        path: original,
        launch,
        assignment,
        cov,
        log_q_forward: -(j_before * (j_before - 1.0)).ln(),
    })
}

/// `log alpha*` of a proposal: transition-probability ratio plus the changes
/// in log-likelihood, `sum_m log w_{z_m}` and the block-parameter prior,
/// each evaluated over the two affected labels. Splits that leave either
/// side empty get `-inf`.
pub fn log_acceptance(
    eval: &BlockEval,
    prior: &ThetaPrior,
    state: &ChainState,
    proposal: &HtsmProposal,
) -> Result<f64> {
    if proposal.kind == MoveKind::Split {
        let ones = proposal.path.iter().filter(|&&s| s == 1).count();
        if ones == 0 || ones == proposal.path.len() {
            return Ok(f64::NEG_INFINITY);
        }
    }
    let (j, j2) = proposal.labels;
    let w = &state.sticks.w;
    let score = |assignment: &ClusterAssignment, cov: &ClusterCovParams| -> Result<f64> {
        let mut total = 0.0;
        for l in [j, j2] {
            let mem: Vec<usize> = (0..assignment.m()).filter(|&m| assignment.z[m] == l).collect();
            if mem.is_empty() {
                continue;
            }
            total += eval.ll(&mem, cov.sigma2[l], cov.rho[l])?
                + mem.len() as f64 * w[l].ln()
                + prior.ln_density(cov.sigma2[l], cov.rho[l], mem.len());
        }
        Ok(total)
    };
    let after = score(&proposal.assignment, &proposal.cov)?;
    let before = score(&state.assignment, &state.cov)?;
    let log_alpha = proposal.log_q_reverse - proposal.log_q_forward + after - before;
    Ok(if log_alpha.is_nan() { f64::NEG_INFINITY } else { log_alpha })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HtsmOutcome {
    pub kind: Option<MoveKind>,
    pub accepted: bool,
    pub log_alpha: f64,
}

/// One split-merge step. Split is attempted with probability `p0`, merge
/// otherwise; an impossible move type falls through to the other. Accepted
/// states are relabeled canonically.
pub fn htsm_step<R: Rng + ?Sized>(
    eval: &BlockEval,
    prior: &ThetaPrior,
    state: &mut ChainState,
    hyper: &HyperParams,
    mode: SplitMode,
    rng: &mut R,
) -> Result<HtsmOutcome> {
    let proposal = if rng.random::<f64>() < hyper.p0 {
        match propose_split(eval, state, hyper, mode, rng)? {
            Some(p) => Some(p),
            None => propose_merge(eval, state, rng)?,
        }
    } else {
        match propose_merge(eval, state, rng)? {
            Some(p) => Some(p),
            None => propose_split(eval, state, hyper, mode, rng)?,
        }
    };
    let Some(proposal) = proposal else {
        return Ok(HtsmOutcome {
            kind: None,
            accepted: false,
            log_alpha: f64::NEG_INFINITY,
        });
    };
    let log_alpha = log_acceptance(eval, prior, state, &proposal)?;
    let u: f64 = rng.random();
    let accepted = log_alpha > f64::NEG_INFINITY && u.ln() < log_alpha;
    if accepted {
        state.assignment = proposal.assignment;
        state.cov = proposal.cov;
        state.relabel();
    }
    Ok(HtsmOutcome {
        kind: Some(proposal.kind),
        accepted,
        log_alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::model::{Dataset, Phase, RegressionCoefficients, StickState};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(m: usize, n: usize, seed: u64) -> (Dataset, Kernel) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = DMatrix::from_fn(n, m, |_, _| rand_distr::StandardNormal.sample(&mut rng));
        let x = DMatrix::from_element(n, 1, 1.0);
        let data = Dataset::new(y, x, None).unwrap();
        let kernel = Kernel::for_data(KernelSpec::compound_symmetry(), &data).unwrap();
        (data, kernel)
    }

    fn state(z: Vec<usize>, k: usize) -> ChainState {
        let v: Vec<f64> = (0..k).map(|j| if j + 1 == k { 1.0 } else { 0.4 }).collect();
        ChainState {
            assignment: ClusterAssignment::new(z.clone()),
            sticks: StickState::from_v(v, 1.0).unwrap(),
            cov: ClusterCovParams {
                sigma2: (0..k).map(|j| 0.8 + 0.1 * j as f64).collect(),
                rho: (0..k).map(|j| 0.1 + 0.05 * j as f64).collect(),
            },
            coef: RegressionCoefficients::zeros(z.len(), 1),
            rho_steps: vec![1.0; k],
            iteration: 0,
            phase: Phase::BurnIn1,
        }
    }

    #[test]
    fn head_and_tail_weights() {
        let head = crate::model::DEFAULT_SPLIT_WEIGHTS;
        let w = build_split_weights(&[5, 4, 3, 2, 1], SplitMode::Head, &head);
        let expect = [0.3 / 0.75, 0.2 / 0.75, 0.15 / 0.75, 0.1 / 0.75];
        for (i, (label, p)) in w.iter().enumerate() {
            assert_eq!(*label, i);
            assert!((p - expect[i]).abs() < 1e-15);
        }
        assert_eq!(build_split_weights(&[1, 3, 1], SplitMode::Head, &head), vec![(1, 1.0)]);
        let w = build_split_weights(&[7, 6, 5, 4, 3, 2], SplitMode::Head, &head);
        assert!((w[4].1 - 0.125).abs() < 1e-15 && (w[5].1 - 0.125).abs() < 1e-15);
        let w = build_split_weights(&[7, 6, 5, 4, 3, 2], SplitMode::Tail, &head);
        assert_eq!(w[0], (5, 0.3));
        assert!(build_split_weights(&[1, 1], SplitMode::Head, &head).is_empty());
    }

    #[test]
    fn conditional_matches_dense_ratio() {
        let (data, kernel) = toy(4, 6, 1);
        let cross = ResidualCrossProduct::compute(&data, &RegressionCoefficients::zeros(4, 1));
        let eval = BlockEval { kernel: &kernel, cross: &cross, n: 6 };
        let s = state(vec![0, 0, 1, 2], 3);
        let full = |z: Vec<usize>| {
            crate::kernels::log_likelihood_with(
                &kernel,
                &ClusterAssignment::new(z.clone()),
                &s.cov.sigma2,
                &s.cov.rho,
                &cross,
                6,
            )
            .unwrap()
                + z.iter().map(|&l| s.sticks.w[l].ln()).sum::<f64>()
        };
        let g1 = z_log_conditional(&eval, &s.assignment, &s.cov, &s.sticks.w, 1, 1).unwrap();
        let g2 = z_log_conditional(&eval, &s.assignment, &s.cov, &s.sticks.w, 1, 2).unwrap();
        let d1 = full(vec![0, 1, 1, 2]);
        let d2 = full(vec![0, 2, 1, 2]);
        assert!(((g1 - g2) - (d1 - d2)).abs() < 1e-10);
        let g0 = z_log_conditional(&eval, &s.assignment, &s.cov, &s.sticks.w, 1, 0).unwrap();
        assert_eq!(g0, s.sticks.w[0].ln());
    }

    #[test]
    fn walker_with_one_label() {
        let (data, kernel) = toy(3, 5, 2);
        let cross = ResidualCrossProduct::compute(&data, &RegressionCoefficients::zeros(3, 1));
        let eval = BlockEval { kernel: &kernel, cross: &cross, n: 5 };
        let s = state(vec![0, 0, 0], 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for window in [WalkerWindow::Exact, WalkerWindow::Published] {
            for _ in 0..50 {
                assert_eq!(walker_slice_z(eval, &s.assignment, &s.cov, &s.sticks.w, 1, 3, window, &mut rng).unwrap(), 0);
            }
        }
    }

    #[test]
    fn merge_probabilities_and_degenerate_split() {
        let (data, kernel) = toy(6, 8, 4);
        let cross = ResidualCrossProduct::compute(&data, &RegressionCoefficients::zeros(6, 1));
        let eval = BlockEval { kernel: &kernel, cross: &cross, n: 8 };
        let hyper = HyperParams::with_truncation(6);
        let prior = ThetaPrior::new(&kernel, &hyper);
        let s = state(vec![0, 0, 1, 2, 3, 3], 6);
        let p = merge_pair(&eval, &s, 1, 2, None).unwrap();
        assert!((p.log_q_forward + 12f64.ln()).abs() < 1e-14);
        assert!(p.log_q_reverse <= 2.0 * 0.5f64.ln() + 1e-12);
        assert!(log_acceptance(&eval, &prior, &s, &p).unwrap().is_finite());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let members = vec![0, 1];
        let p = split_with_launch(&eval, &s, 0, 4, &members, vec![0, 0], Some(&[0, 0]), &mut rng).unwrap();
        assert_eq!(log_acceptance(&eval, &prior, &s, &p).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn unused_slots_do_not_enter_the_ratio() {
        let (data, kernel) = toy(5, 7, 6);
        let cross = ResidualCrossProduct::compute(&data, &RegressionCoefficients::zeros(5, 1));
        let eval = BlockEval { kernel: &kernel, cross: &cross, n: 7 };
        let hyper = HyperParams::with_truncation(5);
        let prior = ThetaPrior::new(&kernel, &hyper);
        let s = state(vec![0, 0, 0, 1, 1], 5);
        let mut t = s.clone();
        t.cov.sigma2[4] = 9.0;
        t.cov.rho[4] = -0.2;
        let ps = merge_pair(&eval, &s, 0, 1, None).unwrap();
        let pt = merge_pair(&eval, &t, 0, 1, None).unwrap();
        let a = log_acceptance(&eval, &prior, &s, &ps).unwrap();
        let b = log_acceptance(&eval, &prior, &t, &pt).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_then_replayed_merge_is_antisymmetric() {
        let (data, kernel) = toy(8, 10, 7);
        let cross = ResidualCrossProduct::compute(&data, &RegressionCoefficients::zeros(8, 1));
        let eval = BlockEval { kernel: &kernel, cross: &cross, n: 10 };
        let hyper = HyperParams::with_truncation(8);
        let prior = ThetaPrior::new(&kernel, &hyper);
        let s = state(vec![0, 0, 0, 0, 0, 1, 1, 2], 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut checked = 0;
        while checked < 20 {
            let split = propose_split(&eval, &s, &hyper, SplitMode::Head, &mut rng).unwrap().unwrap();
            let fwd = log_acceptance(&eval, &prior, &s, &split).unwrap();
            if !fwd.is_finite() {
                continue;
            }
            let mut after = s.clone();
            after.assignment = split.assignment.clone();
            after.cov = split.cov.clone();
            let (j, new) = split.labels;
            let merge = merge_pair(&eval, &after, j, new, Some(split.launch.clone())).unwrap();
            let rev = log_acceptance(&eval, &prior, &after, &merge).unwrap();
            assert!((fwd + rev).abs() < 1e-10, "{fwd} {rev}");
            assert_eq!(merge.assignment, s.assignment);
            checked += 1;
        }
    }
}
