//! The three-phase sampler loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BlockQuadratics, Kernel, ResidualCrossProduct};
use crate::model::{ChainState, Dataset, HyperParams, Phase, StickState};
use crate::params::{
    initial_state, sample_alpha, sample_b, sample_rho_all, sample_sigma2, sample_v, BSamplerWorkspace,
};
use crate::partition::{htsm_step, z_sweep, BlockEval, HtsmOutcome, SplitMode, ThetaPrior, WalkerWindow, ZUpdate};

/// Iteration counts of the two burn-in phases and the sampling phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub burnin1: usize,
    pub burnin2: usize,
    pub sampling: usize,
}

impl PhaseSchedule {
    pub fn total(&self) -> usize {
        self.burnin1 + self.burnin2 + self.sampling
    }

    /// Phase of 1-based iteration `t`.
    pub fn phase_of(&self, t: usize) -> Phase {
        if t <= self.burnin1 {
            Phase::BurnIn1
        } else if t <= self.burnin1 + self.burnin2 {
            Phase::BurnIn2
        } else {
            Phase::Sampling
        }
    }

    pub fn lambda(&self, phase: Phase, hyper: &HyperParams) -> f64 {
        match phase {
            Phase::Sampling => hyper.lambda_sampling,
            _ => hyper.lambda_burnin,
        }
    }
}

/// Partition moves made in each phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZMoves {
    /// Walker sweeps in phase I, split-merge in every phase.
    Htsm,
    /// Walker sweeps only.
    WalkerOnly,
    /// Single-coordinate Gibbs sweeps only.
    GibbsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainOptions {
    pub moves: ZMoves,
    pub walker_window: WalkerWindow,
    /// Run Walker sweeps in phases II and III as well.
    pub walker_all_phases: bool,
    /// Snapshot every `thin`-th iteration.
    pub thin: usize,
}

impl Default for ChainOptions {
    fn default() -> Self {
        ChainOptions {
            moves: ZMoves::Htsm,
            walker_window: WalkerWindow::Exact,
            walker_all_phases: true,
            thin: 1,
        }
    }
}

/// Per-iteration diagnostics handed to the sink with each snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationInfo {
    pub iteration: usize,
    pub phase: Phase,
    pub htsm: Option<HtsmOutcome>,
    pub walker_moves: usize,
    /// Split-merge proposals accepted so far.
    pub htsm_accepted: usize,
}

/// Runs one chain, calling `sink` with the state after every `thin`-th
/// iteration. Failures are wrapped with the iteration at which they
/// occurred.
pub fn run_chain<F>(
    data: &Dataset,
    kernel: &Kernel,
    hyper: &HyperParams,
    schedule: PhaseSchedule,
    options: ChainOptions,
    seed: u64,
    sink: F,
) -> Result<ChainState>
where
    F: FnMut(&ChainState, &IterationInfo) -> Result<()>,
{
    hyper.validate()?;
    if options.thin == 0 {
        return Err(Error::Config("thin must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state = initial_state(data, kernel, hyper, &mut rng)?;
    run_chain_from(data, kernel, hyper, schedule, options, state, &mut rng, sink)
}

/// As [`run_chain`], starting from a given state and random stream.
#[allow(clippy::too_many_arguments)]
pub fn run_chain_from<F>(
    data: &Dataset,
    kernel: &Kernel,
    hyper: &HyperParams,
    schedule: PhaseSchedule,
    options: ChainOptions,
    mut state: ChainState,
    rng: &mut ChaCha8Rng,
    mut sink: F,
) -> Result<ChainState>
where
    F: FnMut(&ChainState, &IterationInfo) -> Result<()>,
{
    hyper.validate()?;
    if options.thin == 0 {
        return Err(Error::Config("thin must be at least 1".into()));
    }
    if state.k() != hyper.k || state.assignment.m() != data.m() {
        return Err(Error::Config("starting state does not match K or M".into()));
    }
    state.relabel();
    let workspace = BSamplerWorkspace::new(data)?;
    let prior = ThetaPrior::new(kernel, hyper);
    let mut accepted = 0;

    for t in 1..=schedule.total() {
        let phase = schedule.phase_of(t);
        state.iteration = t;
        state.phase = phase;
        let mut info = iterate(data, kernel, hyper, &schedule, &options, &workspace, &prior, &mut state, rng)
            .map_err(|e| Error::ChainAbort {
                iteration: t,
                cause: Box::new(e),
            })?;
        accepted += info.htsm.is_some_and(|h| h.accepted) as usize;
        info.htsm_accepted = accepted;
        if t % options.thin == 0 {
            sink(&state, &info)?;
        }
    }
    Ok(state)
}

#[allow(clippy::too_many_arguments)]
fn iterate(
    data: &Dataset,
    kernel: &Kernel,
    hyper: &HyperParams,
    schedule: &PhaseSchedule,
    options: &ChainOptions,
    workspace: &BSamplerWorkspace,
    prior: &ThetaPrior,
    state: &mut ChainState,
    rng: &mut ChaCha8Rng,
) -> Result<IterationInfo> {
    let phase = state.phase;
    let n = data.n();
    let cross = ResidualCrossProduct::compute(data, &state.coef);
    let eval = BlockEval { kernel, cross: &cross, n };

    let walker = ZUpdate::Walker {
        step: hyper.walker_step,
        window: options.walker_window,
    };
    let (sweep, split_mode) = match options.moves {
        ZMoves::Htsm => {
            let sweep = (phase == Phase::BurnIn1 || options.walker_all_phases).then_some(walker);
            let mode = if phase == Phase::BurnIn1 { SplitMode::Head } else { SplitMode::Tail };
            (sweep, Some(mode))
        }
        ZMoves::WalkerOnly => (Some(walker), None),
        ZMoves::GibbsOnly => (Some(ZUpdate::Gibbs), None),
    };

    let mut walker_moves = 0;
    if let Some(update) = sweep {
        walker_moves = z_sweep(eval, &mut state.assignment, &state.cov, &state.sticks.w, update, rng)?;
        state.relabel();
    }
    let htsm = match split_mode {
        Some(mode) => Some(htsm_step(&eval, prior, state, hyper, mode, rng)?),
        None => None,
    };

    let k = hyper.k;
    let v = sample_v(&state.assignment, k, state.sticks.alpha, rng);
    state.sticks = StickState::from_v(v, state.sticks.alpha)?;

    let members = state.assignment.members(k);
    let lambda = schedule.lambda(phase, hyper);
    sample_rho_all(kernel, &members, &mut state.cov, &mut state.rho_steps, &cross, hyper, lambda, n, rng)?;
    let blocks = BlockQuadratics::compute(kernel, &members, &state.cov.rho, &cross)?;
    state.cov.sigma2 = sample_sigma2(&blocks, hyper, n, rng);
    state.sticks.alpha = sample_alpha(&state.sticks.v, hyper, rng);
    state.coef = sample_b(workspace, kernel, &members, &state.cov, hyper.tau2, rng)?;

    Ok(IterationInfo {
        iteration: state.iteration,
        phase,
        htsm,
        walker_moves,
        htsm_accepted: 0,
    })
}
