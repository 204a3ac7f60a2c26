use rand_chacha::ChaCha8Rng;

/// Random number generator used by every replica and by the exchange pass.
pub type SamplerRng = ChaCha8Rng;

/// Energy of a staged single-coordinate move.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trial {
    pub error: f64,
    pub log_prior: f64,
}

/// A posterior family `p_b(θ) ∝ exp(−N·b·E_N(θ)) · p(θ)` the exchange Monte
/// Carlo engine can sample.
///
/// States carry their own caches. The engine only ever moves one scalar
/// coordinate at a time: [`Target::propose`] stages the move and reports the
/// staged energy, [`Target::commit`] makes it current. A later `propose`
/// simply overwrites an uncommitted stage.
pub trait Target: Sync {
    type State: Clone + Send;
    /// Snapshot stored in sample records.
    type Params: Clone + Send;

    /// Number of data points `N` in the likelihood.
    fn n_data(&self) -> usize;

    /// Number of scalar coordinates updated per sweep.
    fn dim(&self) -> usize;

    /// Reference width of coordinate `coord`, used to size proposals.
    fn coord_scale(&self, coord: usize) -> f64;

    fn draw_initial(&self, rng: &mut SamplerRng) -> Self::State;

    /// Cached `E_N`.
    fn error(&self, state: &Self::State) -> f64;

    /// Cached log prior.
    fn log_prior(&self, state: &Self::State) -> f64;

    /// Stages `coord += delta`. Returns `None` when the move leaves the prior
    /// support; such moves are rejected without evaluating the likelihood.
    fn propose(&self, state: &mut Self::State, coord: usize, delta: f64) -> Option<Trial>;

    /// Applies the most recently staged move.
    fn commit(&self, state: &mut Self::State);

    /// Recomputes every cache from the parameters, discarding round-off
    /// accumulated by incremental updates.
    fn refresh(&self, _state: &mut Self::State) {}

    /// `(E_N, log prior)` computed from scratch, for cache audits.
    fn recompute(&self, state: &Self::State) -> (f64, f64);

    fn snapshot(&self, state: &Self::State) -> Self::Params;
}
