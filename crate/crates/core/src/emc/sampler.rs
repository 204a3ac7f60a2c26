//! Exchange Monte Carlo: per-replica Metropolis sweeps interleaved with
//! replica swaps between adjacent inverse temperatures.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emc::ladder::ReplicaLadder;
use crate::emc::record::SampleRecord;
use crate::emc::target::{SamplerRng, Target};
use crate::error::{Error, Result};

/// Stream id reserved for the exchange pass; replica `l` uses stream `l`.
const EXCHANGE_STREAM: u64 = u64::MAX;

/// Run schedule and proposal settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Total Monte Carlo steps, burn-in included.
    pub total_mcs: usize,
    pub burn_in: usize,
    /// Metropolis sweeps per MCS; one exchange pass follows them.
    pub sweeps_per_mcs: usize,
    /// Keep every `thin`-th post-burn-in MCS.
    pub thin: usize,
    pub seed: u64,
    /// Initial proposal width as a fraction of each coordinate's prior scale.
    pub step_fraction: f64,
    /// Adapt proposal widths during burn-in.
    pub tune: bool,
    /// Acceptance band targeted by the burn-in adaptation.
    pub tune_band: (f64, f64),
    /// Worker threads for the sweep phase; 0 uses the global rayon pool.
    pub threads: usize,
    /// Keep parameter snapshots; energies and log priors are always kept.
    pub store_params: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            total_mcs: 60_000,
            burn_in: 30_000,
            sweeps_per_mcs: 50,
            thin: 1,
            seed: 0,
            step_fraction: 0.05,
            tune: true,
            tune_band: (0.25, 0.5),
            threads: 1,
            store_params: true,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_mcs == 0 {
            return Err(Error::config("total MCS must be positive"));
        }
        if self.burn_in >= self.total_mcs {
            return Err(Error::config(format!(
                "burn-in ({}) must be smaller than the total MCS ({})",
                self.burn_in, self.total_mcs
            )));
        }
        if self.sweeps_per_mcs == 0 {
            return Err(Error::config("sweeps per MCS must be at least 1"));
        }
        if self.thin == 0 {
            return Err(Error::config("thinning interval must be at least 1"));
        }
        if !(self.step_fraction > 0.0) || !self.step_fraction.is_finite() {
            return Err(Error::config("step fraction must be positive"));
        }
        let (lo, hi) = self.tune_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::config("tuning band must satisfy 0 < lo < hi < 1"));
        }
        Ok(())
    }

    /// Number of records kept per replica.
    pub fn retained(&self) -> usize {
        (self.total_mcs - self.burn_in) / self.thin
    }
}

/// Per-replica Metropolis machinery: RNG stream, proposal widths, counters.
#[derive(Debug, Clone)]
pub struct Kernel {
    rng: SamplerRng,
    steps: Vec<f64>,
    max_steps: Vec<f64>,
    accepted: Vec<u64>,
    attempted: Vec<u64>,
    window_accepted: Vec<u32>,
    window_attempted: Vec<u32>,
}

impl Kernel {
    /// Kernel for replica `stream` with widths `fraction × scale`.
    pub fn new<T: Target>(target: &T, seed: u64, stream: u64, fraction: f64) -> Self {
        let mut rng = SamplerRng::seed_from_u64(seed);
        rng.set_stream(stream);
        let dim = target.dim();
        let scales: Vec<f64> = (0..dim).map(|c| target.coord_scale(c)).collect();
        Self {
            rng,
            steps: scales.iter().map(|s| s * fraction).collect(),
            max_steps: scales,
            accepted: vec![0; dim],
            attempted: vec![0; dim],
            window_accepted: vec![0; dim],
            window_attempted: vec![0; dim],
        }
    }

    pub fn rng(&mut self) -> &mut SamplerRng {
        &mut self.rng
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn set_steps(&mut self, steps: Vec<f64>) {
        assert_eq!(steps.len(), self.steps.len());
        self.steps = steps;
    }

    pub fn accepted(&self) -> &[u64] {
        &self.accepted
    }

    pub fn attempted(&self) -> &[u64] {
        &self.attempted
    }

    /// Rescales proposal widths from the acceptance seen since the last call.
    fn adapt(&mut self, band: (f64, f64)) {
        for c in 0..self.steps.len() {
            let tried = self.window_attempted[c];
            if tried == 0 {
                continue;
            }
            let rate = self.window_accepted[c] as f64 / tried as f64;
            if rate < band.0 {
                self.steps[c] *= 0.8;
            } else if rate > band.1 {
                self.steps[c] *= 1.25;
            }
            let max = self.max_steps[c];
            self.steps[c] = self.steps[c].clamp(max * 1e-9, max);
        }
        self.reset_window();
    }

    fn reset_window(&mut self) {
        self.window_accepted.iter_mut().for_each(|v| *v = 0);
        self.window_attempted.iter_mut().for_each(|v| *v = 0);
    }

    fn reset_totals(&mut self) {
        self.accepted.iter_mut().for_each(|v| *v = 0);
        self.attempted.iter_mut().for_each(|v| *v = 0);
    }
}

/// Metropolis acceptance test in log space, `u < exp(log_ratio)`.
#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    let u: f64 = rng.random();
    log_ratio >= 0.0 || u.ln() < log_ratio
}

/// One proposed update of every coordinate of one replica at inverse
/// temperature `beta`. Returns the number of accepted moves.
///
/// The acceptance ratio is `exp(−N·b·ΔE_N + Δlog p)`; at `b = 0` the
/// likelihood term is dropped and the chain targets the prior.
pub fn metropolis_sweep<T: Target>(
    target: &T,
    state: &mut T::State,
    beta: f64,
    kernel: &mut Kernel,
) -> usize {
    let n = target.n_data() as f64;
    let mut accepted = 0;
    for coord in 0..target.dim() {
        let z: f64 = kernel.rng.sample(StandardNormal);
        let delta = kernel.steps[coord] * z;
        kernel.attempted[coord] += 1;
        kernel.window_attempted[coord] += 1;
        let Some(trial) = target.propose(state, coord, delta) else {
            continue;
        };
        let d_lp = trial.log_prior - target.log_prior(state);
        let log_ratio = if beta == 0.0 {
            d_lp
        } else {
            -n * beta * (trial.error - target.error(state)) + d_lp
        };
        if accept(log_ratio, &mut kernel.rng) {
            target.commit(state);
            kernel.accepted[coord] += 1;
            kernel.window_accepted[coord] += 1;
            accepted += 1;
        }
    }
    accepted
}

/// Swap acceptance for the adjacent pair `(l, l+1)`:
/// `min[1, exp{N (b_{l+1} − b_l)(E_N(θ_{l+1}) − E_N(θ_l))}]`.
pub fn exchange_probability(
    error_low: f64,
    error_high: f64,
    beta_low: f64,
    beta_high: f64,
    n: usize,
) -> f64 {
    let x = n as f64 * (beta_high - beta_low) * (error_high - error_low);
    if x >= 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Swap statistics per adjacent pair `(l, l+1)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExchangeStats {
    pub accepted: Vec<u64>,
    pub attempted: Vec<u64>,
}

impl ExchangeStats {
    pub fn new(pairs: usize) -> Self {
        Self {
            accepted: vec![0; pairs],
            attempted: vec![0; pairs],
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.accepted
            .iter()
            .zip(&self.attempted)
            .map(|(&a, &t)| if t == 0 { f64::NAN } else { a as f64 / t as f64 })
            .collect()
    }
}

/// Attempts swaps on the disjoint pairs `(l, l+1)` with `l ≡ parity (mod 2)`.
/// States move with their caches.
pub fn exchange_step<T: Target>(
    target: &T,
    states: &mut [T::State],
    betas: &[f64],
    parity: usize,
    rng: &mut SamplerRng,
    stats: &mut ExchangeStats,
) {
    let n = target.n_data();
    let mut l = parity % 2;
    while l + 1 < states.len() {
        let p = exchange_probability(
            target.error(&states[l]),
            target.error(&states[l + 1]),
            betas[l],
            betas[l + 1],
            n,
        );
        let u: f64 = rng.random();
        stats.attempted[l] += 1;
        if u < p {
            states.swap(l, l + 1);
            stats.accepted[l] += 1;
        }
        l += 2;
    }
}

/// Exchange Monte Carlo driver holding one state and one kernel per rung.
pub struct Emc<'t, T: Target> {
    target: &'t T,
    betas: Vec<f64>,
    config: SamplerConfig,
    states: Vec<T::State>,
    kernels: Vec<Kernel>,
    exchange_rng: SamplerRng,
    exchange: ExchangeStats,
    pool: Option<rayon::ThreadPool>,
    mcs_done: usize,
}

impl<'t, T: Target> Emc<'t, T> {
    /// Draws every replica's initial state from its own stream.
    pub fn new(target: &'t T, ladder: &ReplicaLadder, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        if target.n_data() == 0 {
            return Err(Error::invalid("target has no data"));
        }
        let betas = ladder.betas().to_vec();
        let mut kernels: Vec<Kernel> = (0..betas.len())
            .map(|l| Kernel::new(target, config.seed, l as u64, config.step_fraction))
            .collect();
        let states = kernels
            .iter_mut()
            .map(|k| target.draw_initial(&mut k.rng))
            .collect();
        let mut exchange_rng = SamplerRng::seed_from_u64(config.seed);
        exchange_rng.set_stream(EXCHANGE_STREAM);
        let pool = if config.threads == 1 {
            None
        } else {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(config.threads)
                    .build()
                    .map_err(|e| Error::config(format!("cannot build thread pool: {e}")))?,
            )
        };
        Ok(Self {
            target,
            exchange: ExchangeStats::new(betas.len() - 1),
            betas,
            config,
            states,
            kernels,
            exchange_rng,
            pool,
            mcs_done: 0,
        })
    }

    pub fn states(&self) -> &[T::State] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [T::State] {
        &mut self.states
    }

    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [Kernel] {
        &mut self.kernels
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn mcs_done(&self) -> usize {
        self.mcs_done
    }

    /// Sweeps every replica `sweeps_per_mcs` times, then refreshes caches.
    pub fn sweep_all(&mut self) {
        let target = self.target;
        let sweeps = self.config.sweeps_per_mcs;
        let betas = &self.betas;
        let work = |(l, (state, kernel)): (usize, (&mut T::State, &mut Kernel))| {
            for _ in 0..sweeps {
                metropolis_sweep(target, state, betas[l], kernel);
            }
            target.refresh(state);
        };
        match &self.pool {
            None => self
                .states
                .iter_mut()
                .zip(self.kernels.iter_mut())
                .enumerate()
                .for_each(work),
            Some(pool) => pool.install(|| {
                self.states
                    .par_iter_mut()
                    .zip(self.kernels.par_iter_mut())
                    .enumerate()
                    .for_each(work)
            }),
        }
    }

    /// One exchange pass with the given pair parity.
    pub fn exchange(&mut self, parity: usize) {
        exchange_step(
            self.target,
            &mut self.states,
            &self.betas,
            parity,
            &mut self.exchange_rng,
            &mut self.exchange,
        );
    }

    /// One MCS: sweeps, burn-in adaptation, exchange with alternating parity.
    pub fn step_mcs(&mut self) {
        self.sweep_all();
        let in_burn_in = self.mcs_done < self.config.burn_in;
        if in_burn_in && self.config.tune {
            let band = self.config.tune_band;
            self.kernels.iter_mut().for_each(|k| k.adapt(band));
        }
        self.exchange(self.mcs_done % 2);
        self.mcs_done += 1;
        if self.mcs_done == self.config.burn_in {
            self.kernels.iter_mut().for_each(|k| {
                k.reset_totals();
                k.reset_window();
            });
            self.exchange = ExchangeStats::new(self.betas.len() - 1);
        }
    }

    /// `(cached, recomputed)` relative discrepancies of the worst replica.
    pub fn audit(&self) -> (f64, f64) {
        let mut worst = (0.0_f64, 0.0_f64);
        for s in &self.states {
            let (e, lp) = self.target.recompute(s);
            let de = (self.target.error(s) - e).abs() / e.abs().max(f64::MIN_POSITIVE);
            let dl = (self.target.log_prior(s) - lp).abs() / lp.abs().max(1.0);
            worst = (worst.0.max(de), worst.1.max(dl));
        }
        worst
    }

    /// Runs the configured schedule and returns the retained samples.
    pub fn run(mut self, progress: &mut dyn FnMut(usize, usize)) -> SampleRecord<T::Params> {
        let total = self.config.total_mcs;
        let burn_in = self.config.burn_in;
        let thin = self.config.thin;
        let replicas = self.betas.len();
        let mut record = SampleRecord::new(
            self.target.n_data(),
            self.betas.clone(),
            self.target.dim(),
            self.config.retained(),
            total,
        );
        while self.mcs_done < total {
            self.step_mcs();
            let m = self.mcs_done - 1;
            for l in 0..replicas {
                record.energy_trace[l].push(self.target.error(&self.states[l]));
            }
            if m >= burn_in && (m - burn_in + 1) % thin == 0 {
                record.mcs.push(m);
                for l in 0..replicas {
                    let s = &self.states[l];
                    record.energy[l].push(self.target.error(s));
                    record.log_prior[l].push(self.target.log_prior(s));
                    if self.config.store_params {
                        record.params[l].push(self.target.snapshot(s));
                    }
                }
            }
            progress(self.mcs_done, total);
        }
        record.exchange = self.exchange;
        for (l, k) in self.kernels.into_iter().enumerate() {
            record.move_accepted[l] = k.accepted;
            record.move_attempted[l] = k.attempted;
            record.step_sizes[l] = k.steps;
        }
        record
    }
}

/// Full exchange Monte Carlo run from prior-drawn initial states.
pub fn run_emc<T: Target>(
    target: &T,
    ladder: &ReplicaLadder,
    config: &SamplerConfig,
) -> Result<SampleRecord<T::Params>> {
    Ok(Emc::new(target, ladder, config.clone())?.run(&mut |_, _| {}))
}

/// [`run_emc`] with a progress callback `(mcs_done, total)`.
pub fn run_emc_with_progress<T: Target>(
    target: &T,
    ladder: &ReplicaLadder,
    config: &SamplerConfig,
    progress: &mut dyn FnMut(usize, usize),
) -> Result<SampleRecord<T::Params>> {
    Ok(Emc::new(target, ladder, config.clone())?.run(progress))
}
