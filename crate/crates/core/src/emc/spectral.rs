//! [`Target`] implementation for the XANES spectral model.
//!
//! Each state caches the per-component curves (edge, white line, one curve
//! per peak), their sum, the squared residual sum and the log prior, so that a
//! single-coordinate move costs one component evaluation over the data points
//! that component reaches.

use crate::emc::target::{SamplerRng, Target, Trial};
use crate::error::Result;
use crate::model::{error_function, gaussian, Dataset, Peak, SpectralParams};
use crate::prior::{log_prior, sample_prior, DistributionSpec, ModelSpec, PeakPriors, Regime};

/// Number of step-block coordinates preceding the peak coordinates.
pub const STEP_COORDS: usize = 6;
const EDGE_POS: usize = 1;

const EDGE: usize = 0;
const WHITE: usize = 1;
const FIRST_PEAK: usize = 2;

/// Gaussian components are taken as zero farther than this many FWHM from
/// their centre (relative size below 1e-19).
const SUPPORT_FWHM: f64 = 4.0;

#[derive(Debug, Clone, Copy)]
enum Affected {
    One(usize),
    Two(usize, usize),
    All,
}

impl Affected {
    fn components(self) -> impl Iterator<Item = usize> {
        let (a, b) = match self {
            Affected::One(c) => (Some(c), None),
            Affected::Two(c, d) => (Some(c), Some(d)),
            Affected::All => (None, None),
        };
        a.into_iter().chain(b)
    }
}

#[derive(Debug, Clone, Copy)]
struct Stage {
    coord: usize,
    value: f64,
    sse: f64,
    log_prior: f64,
    affected: Affected,
    /// Index span over which staged buffers are valid.
    span: (usize, usize),
}

/// Replica state with cached model curves.
///
/// `parts[c]` is exactly zero outside `ranges[c]`.
#[derive(Debug, Clone)]
pub struct SpectralState {
    params: SpectralParams<f64>,
    parts: Vec<Vec<f64>>,
    ranges: Vec<(usize, usize)>,
    curve: Vec<f64>,
    sse: f64,
    log_prior: f64,
    stage: Option<Stage>,
    spare_parts: Vec<Vec<f64>>,
    spare_curve: Vec<f64>,
}

impl SpectralState {
    pub fn params(&self) -> &SpectralParams<f64> {
        &self.params
    }

    /// Cached model curve at the data energies.
    pub fn curve(&self) -> &[f64] {
        &self.curve
    }
}

/// Posterior family of one candidate model on one dataset.
#[derive(Debug, Clone)]
pub struct SpectralTarget {
    model: ModelSpec<f64>,
    data: Dataset<f64>,
    scales: Vec<f64>,
    sorted: bool,
}

impl SpectralTarget {
    pub fn new(model: ModelSpec<f64>, data: Dataset<f64>) -> Self {
        let mut scales = step_priors(&model).iter().map(|d| d.scale()).collect::<Vec<_>>();
        for j in 0..model.peaks.total() {
            let pop = population(&model, j);
            scales.extend([pop.height.scale(), pop.position.scale(), pop.width.scale()]);
        }
        let sorted = data.energy().windows(2).all(|w| w[0] <= w[1]);
        Self {
            model,
            data,
            scales,
            sorted,
        }
    }

    pub fn model(&self) -> &ModelSpec<f64> {
        &self.model
    }

    pub fn data(&self) -> &Dataset<f64> {
        &self.data
    }

    /// Builds a fully cached state from explicit parameters.
    pub fn state_from_params(&self, params: SpectralParams<f64>) -> Result<SpectralState> {
        self.model.check_shape(&params)?;
        params.validate()?;
        let n = self.data.len();
        let comps = FIRST_PEAK + params.below.len() + params.above.len();
        let mut state = SpectralState {
            params,
            parts: vec![vec![0.0; n]; comps],
            ranges: vec![(0, n); comps],
            curve: vec![0.0; n],
            sse: 0.0,
            log_prior: 0.0,
            stage: None,
            spare_parts: vec![vec![0.0; n]; comps],
            spare_curve: vec![0.0; n],
        };
        self.refresh(&mut state);
        Ok(state)
    }

    /// Data indices where component `comp` can be nonzero.
    fn active_range(&self, p: &SpectralParams<f64>, comp: usize) -> (usize, usize) {
        let n = self.data.len();
        let (center, fwhm) = match comp {
            EDGE => return (0, n),
            WHITE => (p.step.edge + p.step.white_offset, p.step.white_width),
            _ => {
                let pk = peak(p, comp - FIRST_PEAK);
                (p.step.edge + pk.offset, pk.width)
            }
        };
        if !self.sorted {
            return (0, n);
        }
        let reach = SUPPORT_FWHM * fwhm;
        let energy = self.data.energy();
        let lo = energy.partition_point(|&e| e < center - reach);
        let hi = energy.partition_point(|&e| e <= center + reach);
        (lo, hi.max(lo))
    }

    /// Writes component `comp` over `span` of `out`, zero outside its active range.
    fn fill(&self, p: &SpectralParams<f64>, comp: usize, out: &mut [f64], span: (usize, usize)) {
        let energy = self.data.energy();
        let (lo, hi) = self.active_range(p, comp);
        let a = lo.clamp(span.0, span.1);
        let b = hi.clamp(a, span.1);
        out[span.0..a].fill(0.0);
        out[b..span.1].fill(0.0);
        let (out, energy) = (&mut out[a..b], &energy[a..b]);
        match comp {
            EDGE => {
                for (o, &e) in out.iter_mut().zip(energy) {
                    *o = p.step.edge_at(e);
                }
            }
            WHITE => {
                for (o, &e) in out.iter_mut().zip(energy) {
                    *o = p.step.white_line_at(e);
                }
            }
            _ => {
                let pk = peak(p, comp - FIRST_PEAK);
                let center = p.step.edge + pk.offset;
                for (o, &e) in out.iter_mut().zip(energy) {
                    *o = gaussian(e, center, pk.height, pk.width);
                }
            }
        }
    }

    fn coordinate(&self, p: &SpectralParams<f64>, coord: usize) -> f64 {
        match coord {
            0 => p.step.height,
            1 => p.step.edge,
            2 => p.step.edge_width,
            3 => p.step.white_height,
            4 => p.step.white_offset,
            5 => p.step.white_width,
            _ => {
                let pk = peak(p, (coord - STEP_COORDS) / 3);
                match (coord - STEP_COORDS) % 3 {
                    0 => pk.height,
                    1 => pk.offset,
                    _ => pk.width,
                }
            }
        }
    }

    fn set_coordinate(&self, p: &mut SpectralParams<f64>, coord: usize, v: f64) {
        match coord {
            0 => p.step.height = v,
            1 => p.step.edge = v,
            2 => p.step.edge_width = v,
            3 => p.step.white_height = v,
            4 => p.step.white_offset = v,
            5 => p.step.white_width = v,
            _ => {
                let pk = peak_mut(p, (coord - STEP_COORDS) / 3);
                match (coord - STEP_COORDS) % 3 {
                    0 => pk.height = v,
                    1 => pk.offset = v,
                    _ => pk.width = v,
                }
            }
        }
    }

    fn affected(&self, coord: usize) -> Affected {
        match coord {
            0 | 2 => Affected::One(EDGE),
            EDGE_POS => match self.model.regime() {
                // peaks keep their absolute positions when the edge moves
                Regime::Conventional => Affected::Two(EDGE, WHITE),
                Regime::Proposed => Affected::All,
            },
            3..=5 => Affected::One(WHITE),
            _ => Affected::One(FIRST_PEAK + (coord - STEP_COORDS) / 3),
        }
    }

    /// Log-prior terms touched by a move of `coord`, evaluated at `p`.
    fn local_log_prior(&self, p: &SpectralParams<f64>, coord: usize) -> f64 {
        if coord < STEP_COORDS {
            step_priors(&self.model)[coord].log_density_unchecked(self.coordinate(p, coord))
        } else {
            let j = (coord - STEP_COORDS) / 3;
            self.model
                .peak_log_density(population(&self.model, j), p.step.edge, peak(p, j))
        }
    }

    /// Stages the moved components over `span` and returns the new SSE.
    fn stage_span(&self, state: &mut SpectralState, affected: Affected, span: (usize, usize)) -> f64 {
        let intensity = self.data.intensity();
        let mut delta = 0.0;
        for i in span.0..span.1 {
            let old = state.curve[i];
            let mut f = old;
            for c in affected.components() {
                f = f - state.parts[c][i] + state.spare_parts[c][i];
            }
            state.spare_curve[i] = f;
            let (r_new, r_old) = (intensity[i] - f, intensity[i] - old);
            delta += r_new * r_new - r_old * r_old;
        }
        state.sse + delta
    }

    fn stage_full_curve(&self, state: &mut SpectralState) -> f64 {
        let intensity = self.data.intensity();
        let mut sse = 0.0;
        for i in 0..intensity.len() {
            let f = state.spare_parts.iter().fold(0.0, |acc, part| acc + part[i]);
            state.spare_curve[i] = f;
            let r = intensity[i] - f;
            sse += r * r;
        }
        sse
    }

    fn sse_to_error(&self, sse: f64) -> f64 {
        sse / (2.0 * self.data.len() as f64)
    }
}

/// Coordinates that only scale one component: `H`, `A` and every `F`.
fn is_height(coord: usize) -> bool {
    coord == 0 || coord == 3 || (coord >= STEP_COORDS && (coord - STEP_COORDS) % 3 == 0)
}

fn step_priors(model: &ModelSpec<f64>) -> [DistributionSpec<f64>; STEP_COORDS] {
    let s = &model.priors.step;
    [
        s.height,
        s.edge,
        s.edge_width,
        s.white_height,
        s.white_offset,
        s.white_width,
    ]
}

fn population(model: &ModelSpec<f64>, j: usize) -> &PeakPriors<f64> {
    if j < model.peaks.k1 {
        model.priors.below()
    } else {
        model.priors.above()
    }
}

fn peak(p: &SpectralParams<f64>, j: usize) -> &Peak<f64> {
    let k1 = p.below.len();
    if j < k1 {
        &p.below[j]
    } else {
        &p.above[j - k1]
    }
}

fn peak_mut(p: &mut SpectralParams<f64>, j: usize) -> &mut Peak<f64> {
    let k1 = p.below.len();
    if j < k1 {
        &mut p.below[j]
    } else {
        &mut p.above[j - k1]
    }
}

impl Target for SpectralTarget {
    type State = SpectralState;
    type Params = SpectralParams<f64>;

    fn n_data(&self) -> usize {
        self.data.len()
    }

    fn dim(&self) -> usize {
        self.scales.len()
    }

    fn coord_scale(&self, coord: usize) -> f64 {
        self.scales[coord]
    }

    fn draw_initial(&self, rng: &mut SamplerRng) -> SpectralState {
        let params = sample_prior(&self.model, rng);
        self.state_from_params(params)
            .expect("prior draws satisfy the parameter invariants")
    }

    fn error(&self, state: &SpectralState) -> f64 {
        self.sse_to_error(state.sse)
    }

    fn log_prior(&self, state: &SpectralState) -> f64 {
        state.log_prior
    }

    fn propose(&self, state: &mut SpectralState, coord: usize, delta: f64) -> Option<Trial> {
        let old = self.coordinate(&state.params, coord);
        let new = old + delta;
        if !new.is_finite() {
            return None;
        }
        let lp_old = self.local_log_prior(&state.params, coord);
        self.set_coordinate(&mut state.params, coord, new);
        let lp_new = self.local_log_prior(&state.params, coord);
        if lp_new == f64::NEG_INFINITY {
            self.set_coordinate(&mut state.params, coord, old);
            return None;
        }

        let affected = self.affected(coord);
        let n = self.data.len();
        let span = match affected {
            Affected::All => (0, n),
            _ => affected.components().fold((n, 0), |(lo, hi), c| {
                let (a, b) = state.ranges[c];
                let (x, y) = self.active_range(&state.params, c);
                (lo.min(a).min(x), hi.max(b).max(y))
            }),
        };
        let span = (span.0.min(span.1), span.1);
        let sse = match affected {
            Affected::All => {
                let SpectralState {
                    params,
                    spare_parts,
                    ..
                } = &mut *state;
                for (c, part) in spare_parts.iter_mut().enumerate() {
                    self.fill(params, c, part, (0, n));
                }
                self.stage_full_curve(state)
            }
            _ => {
                let ratio = if is_height(coord) && old > 0.0 { Some(new / old) } else { None };
                for c in affected.components() {
                    match ratio {
                        // amplitude moves rescale the cached component
                        Some(r) => {
                            let (a, b) = span;
                            let (src, dst) = (&state.parts[c][a..b], &mut state.spare_parts[c][a..b]);
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = s * r;
                            }
                        }
                        None => self.fill(&state.params, c, &mut state.spare_parts[c], span),
                    }
                }
                self.stage_span(state, affected, span)
            }
        };
        self.set_coordinate(&mut state.params, coord, old);

        let log_prior = state.log_prior - lp_old + lp_new;
        state.stage = Some(Stage {
            coord,
            value: new,
            sse,
            log_prior,
            affected,
            span,
        });
        Some(Trial {
            error: self.sse_to_error(sse),
            log_prior,
        })
    }

    fn commit(&self, state: &mut SpectralState) {
        let Some(stage) = state.stage.take() else {
            return;
        };
        if stage.coord == EDGE_POS && self.model.regime() == Regime::Conventional {
            let shift = stage.value - state.params.step.edge;
            for pk in state.params.below.iter_mut().chain(state.params.above.iter_mut()) {
                pk.offset -= shift;
            }
        }
        self.set_coordinate(&mut state.params, stage.coord, stage.value);
        match stage.affected {
            Affected::All => {
                std::mem::swap(&mut state.parts, &mut state.spare_parts);
                std::mem::swap(&mut state.curve, &mut state.spare_curve);
                for c in 0..state.parts.len() {
                    state.ranges[c] = self.active_range(&state.params, c);
                }
            }
            affected => {
                let (a, b) = stage.span;
                for c in affected.components() {
                    let (parts, spare) = (&mut state.parts[c], &state.spare_parts[c]);
                    parts[a..b].copy_from_slice(&spare[a..b]);
                    state.ranges[c] = self.active_range(&state.params, c);
                }
                state.curve[a..b].copy_from_slice(&state.spare_curve[a..b]);
            }
        }
        state.sse = stage.sse;
        state.log_prior = stage.log_prior;
    }

    fn refresh(&self, state: &mut SpectralState) {
        state.stage = None;
        let n = self.data.len();
        for c in 0..state.parts.len() {
            self.fill(&state.params, c, &mut state.parts[c], (0, n));
            state.ranges[c] = self.active_range(&state.params, c);
        }
        let intensity = self.data.intensity();
        let mut sse = 0.0;
        for i in 0..intensity.len() {
            let f = state.parts.iter().fold(0.0, |acc, part| acc + part[i]);
            state.curve[i] = f;
            let r = intensity[i] - f;
            sse += r * r;
        }
        state.sse = sse;
        state.log_prior = log_prior(&self.model, &state.params).unwrap_or(f64::NAN);
    }

    fn recompute(&self, state: &SpectralState) -> (f64, f64) {
        let e = error_function(&state.params, &self.data).unwrap_or(f64::NAN);
        let lp = log_prior(&self.model, &state.params).unwrap_or(f64::NAN);
        (e, lp)
    }

    fn snapshot(&self, state: &SpectralState) -> SpectralParams<f64> {
        let mut p = state.params.clone();
        p.sort_peaks();
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PeakConfig;
    use crate::synth::default_truth;
    use rand::{Rng, SeedableRng};

    fn target(model: ModelSpec<f64>) -> SpectralTarget {
        let truth = default_truth();
        let data = crate::synth::synthesize(&truth);
        SpectralTarget::new(model, data)
    }

    fn audit(t: &SpectralTarget, s: &SpectralState) {
        let (e, lp) = t.recompute(s);
        assert!((t.error(s) - e).abs() <= 1e-10 * e.abs(), "{} vs {}", t.error(s), e);
        assert!((t.log_prior(s) - lp).abs() <= 1e-10 * lp.abs().max(1.0), "{} vs {lp}", t.log_prior(s));
        for ((&c, e), part) in s.curve.iter().zip(t.data().energy()).zip(0..) {
            assert!((c - s.params.value_at(*e)).abs() < 1e-12, "curve point {part}");
        }
    }

    fn random_walk(t: &SpectralTarget, seed: u64) {
        let mut rng = SamplerRng::seed_from_u64(seed);
        let s = t.draw_initial(&mut rng);
        walk_from(t, s, &mut rng);
    }

    fn walk_from(t: &SpectralTarget, mut s: SpectralState, rng: &mut SamplerRng) {
        audit(t, &s);
        for step in 0..5000 {
            let coord = rng.random_range(0..t.dim());
            let delta = 0.05 * t.coord_scale(coord) * (rng.random::<f64>() - 0.5);
            if let Some(trial) = t.propose(&mut s, coord, delta) {
                assert!(trial.log_prior.is_finite());
                if rng.random::<f64>() < 0.5 {
                    t.commit(&mut s);
                    assert_eq!(t.error(&s), trial.error);
                }
            }
            if step % 997 == 0 {
                audit(t, &s);
            }
        }
        audit(t, &s);
    }

    #[test]
    fn caches_track_fresh_values_proposed() {
        random_walk(&target(ModelSpec::proposed(3, 2)), 11);
    }

    #[test]
    fn caches_track_fresh_values_conventional() {
        random_walk(&target(ModelSpec::conventional(4)), 12);
    }

    #[test]
    fn caches_track_fresh_values_near_truth() {
        let t = target(ModelSpec::proposed(5, 5));
        let s = t.state_from_params(default_truth().params).unwrap();
        walk_from(&t, s, &mut SamplerRng::seed_from_u64(13));
    }

    #[test]
    fn caches_track_fresh_values_on_unsorted_energies() {
        let data = crate::synth::synthesize(&default_truth());
        let mut pts: Vec<(f64, f64)> = data.points().collect();
        pts.reverse();
        pts.swap(10, 400);
        let t = SpectralTarget::new(ModelSpec::proposed(2, 2), Dataset::from_points(&pts).unwrap());
        assert!(!t.sorted);
        random_walk(&t, 14);
    }

    #[test]
    fn conventional_edge_move_keeps_absolute_positions() {
        let t = target(ModelSpec::conventional(3));
        let mut rng = SamplerRng::seed_from_u64(5);
        let mut s = t.draw_initial(&mut rng);
        let before: Vec<f64> = s.params.below.iter().map(|p| s.params.center(p)).collect();
        let lp_peaks_before = t.recompute(&s).1 - t.model.step_log_density(&s.params.step);
        t.propose(&mut s, EDGE_POS, 0.3).unwrap();
        t.commit(&mut s);
        for (p, b) in s.params.below.iter().zip(&before) {
            assert!((s.params.center(p) - b).abs() < 1e-9);
        }
        let lp_peaks_after = t.recompute(&s).1 - t.model.step_log_density(&s.params.step);
        assert!((lp_peaks_after - lp_peaks_before).abs() < 1e-12);
        audit(&t, &s);
    }

    #[test]
    fn proposed_edge_move_carries_peaks() {
        let t = target(ModelSpec::proposed(2, 2));
        let mut rng = SamplerRng::seed_from_u64(6);
        let mut s = t.draw_initial(&mut rng);
        let offsets: Vec<f64> = s.params.peaks().map(|p| p.offset).collect();
        t.propose(&mut s, EDGE_POS, 0.3).unwrap();
        t.commit(&mut s);
        let after: Vec<f64> = s.params.peaks().map(|p| p.offset).collect();
        assert_eq!(offsets, after);
        audit(&t, &s);
    }

    #[test]
    fn out_of_support_is_refused() {
        let t = target(ModelSpec::proposed(1, 1));
        let mut rng = SamplerRng::seed_from_u64(7);
        let mut s = t.draw_initial(&mut rng);
        // below-edge offset pushed above the edge
        let coord = STEP_COORDS + 1;
        let off = s.params.below[0].offset;
        assert!(t.propose(&mut s, coord, -off + 0.5).is_none());
        // Gamma (edge width) beyond its uniform support
        assert!(t.propose(&mut s, 2, 10.0).is_none());
        audit(&t, &s);
    }

    #[test]
    fn uncommitted_stage_is_discarded() {
        let t = target(ModelSpec::proposed(1, 1));
        let mut rng = SamplerRng::seed_from_u64(8);
        let mut s = t.draw_initial(&mut rng);
        let e = t.error(&s);
        t.propose(&mut s, 0, 0.01);
        assert_eq!(t.error(&s), e);
        t.refresh(&mut s);
        t.commit(&mut s);
        assert_eq!(t.error(&s), e);
    }

    #[test]
    fn snapshot_sorts_each_population() {
        let t = target(ModelSpec::proposed(3, 0));
        let mut rng = SamplerRng::seed_from_u64(9);
        let s = t.draw_initial(&mut rng);
        let snap = t.snapshot(&s);
        assert!(snap.below.windows(2).all(|w| w[0].offset <= w[1].offset));
        assert_eq!(snap.config(), PeakConfig::new(3, 0));
    }
}
