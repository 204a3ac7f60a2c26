//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use xanes_deconv::emc::{SamplerRng, Target, Trial};

/// `I_i = a·g_i + ε_i` with prior `a ~ N(μ0, s0²)`: every tempered posterior
/// and every `Z̃(b)` is available in closed form.
#[derive(Debug, Clone)]
pub struct LinearToy {
    pub g: Vec<f64>,
    pub y: Vec<f64>,
    pub mu0: f64,
    pub s0: f64,
}

#[derive(Debug, Clone)]
pub struct ToyState {
    pub a: f64,
    sse: f64,
    lp: f64,
    staged: Option<(f64, f64, f64)>,
}

impl LinearToy {
    pub fn new(n: usize, a_true: f64, b_true: f64, seed: u64) -> Self {
        let mut rng = SamplerRng::seed_from_u64(seed);
        let g: Vec<f64> = (0..n).map(|i| 1.0 + (0.37 * i as f64).sin()).collect();
        let sd = 1.0 / b_true.sqrt();
        let y = g
            .iter()
            .map(|gi| a_true * gi + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { g, y, mu0: 0.5, s0: 2.0 }
    }

    fn sums(&self) -> (f64, f64, f64) {
        let sgg = self.g.iter().map(|g| g * g).sum();
        let sgy = self.g.iter().zip(&self.y).map(|(g, y)| g * y).sum();
        let syy = self.y.iter().map(|y| y * y).sum();
        (sgg, sgy, syy)
    }

    /// Exact `log ∫ exp(−N·b·E_N(a)) p(a) da`.
    pub fn log_ztilde(&self, b: f64) -> f64 {
        let (sgg, sgy, syy) = self.sums();
        let s2 = self.s0 * self.s0;
        let p = b * sgg + 1.0 / s2;
        let m = (b * sgy + self.mu0 / s2) / p;
        let tau = 2.0 * std::f64::consts::PI;
        -0.5 * b * syy - self.mu0 * self.mu0 / (2.0 * s2) + 0.5 * p * m * m + 0.5 * (tau / p).ln()
            - 0.5 * (tau * s2).ln()
    }

    /// Exact free energy `−(N/2) log(b/2π) − log Z̃(b)`.
    pub fn free_energy(&self, b: f64) -> f64 {
        let n = self.g.len() as f64;
        -n / 2.0 * (b / (2.0 * std::f64::consts::PI)).ln() - self.log_ztilde(b)
    }

    /// Mean and standard deviation of the posterior at inverse temperature `b`.
    pub fn posterior(&self, b: f64) -> (f64, f64) {
        let (sgg, sgy, _) = self.sums();
        let s2 = self.s0 * self.s0;
        let p = b * sgg + 1.0 / s2;
        ((b * sgy + self.mu0 / s2) / p, 1.0 / p.sqrt())
    }

    fn sse(&self, a: f64) -> f64 {
        self.g
            .iter()
            .zip(&self.y)
            .map(|(g, y)| (y - a * g).powi(2))
            .sum()
    }

    fn lp(&self, a: f64) -> f64 {
        let z = (a - self.mu0) / self.s0;
        -0.5 * z * z - (self.s0 * (2.0 * std::f64::consts::PI).sqrt()).ln()
    }

    pub fn state(&self, a: f64) -> ToyState {
        ToyState {
            a,
            sse: self.sse(a),
            lp: self.lp(a),
            staged: None,
        }
    }
}

impl Target for LinearToy {
    type State = ToyState;
    type Params = f64;

    fn n_data(&self) -> usize {
        self.g.len()
    }

    fn dim(&self) -> usize {
        1
    }

    fn coord_scale(&self, _coord: usize) -> f64 {
        self.s0
    }

    fn draw_initial(&self, rng: &mut SamplerRng) -> ToyState {
        self.state(self.mu0 + self.s0 * rng.sample::<f64, _>(StandardNormal))
    }

    fn error(&self, s: &ToyState) -> f64 {
        s.sse / (2.0 * self.g.len() as f64)
    }

    fn log_prior(&self, s: &ToyState) -> f64 {
        s.lp
    }

    fn propose(&self, s: &mut ToyState, _coord: usize, delta: f64) -> Option<Trial> {
        let a = s.a + delta;
        let (sse, lp) = (self.sse(a), self.lp(a));
        s.staged = Some((a, sse, lp));
        Some(Trial {
            error: sse / (2.0 * self.g.len() as f64),
            log_prior: lp,
        })
    }

    fn commit(&self, s: &mut ToyState) {
        if let Some((a, sse, lp)) = s.staged.take() {
            *s = ToyState { a, sse, lp, staged: None };
        }
    }

    fn recompute(&self, s: &ToyState) -> (f64, f64) {
        (self.sse(s.a) / (2.0 * self.g.len() as f64), self.lp(s.a))
    }

    fn snapshot(&self, s: &ToyState) -> f64 {
        s.a
    }
}

/// Symmetric double well `E(x) = (x² − 1)²` with `N = 1` and a uniform prior
/// on `[−3, 3]`; the modes at `±1` are separated by a barrier of height `b`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell;

#[derive(Debug, Clone)]
pub struct WellState {
    pub x: f64,
    staged: f64,
}

fn well(x: f64) -> f64 {
    (x * x - 1.0).powi(2)
}

impl Target for DoubleWell {
    type State = WellState;
    type Params = f64;

    fn n_data(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        1
    }

    fn coord_scale(&self, _coord: usize) -> f64 {
        6.0
    }

    fn draw_initial(&self, _rng: &mut SamplerRng) -> WellState {
        WellState { x: 1.0, staged: 1.0 }
    }

    fn error(&self, s: &WellState) -> f64 {
        well(s.x)
    }

    fn log_prior(&self, _s: &WellState) -> f64 {
        -(6.0f64.ln())
    }

    fn propose(&self, s: &mut WellState, _coord: usize, delta: f64) -> Option<Trial> {
        let x = s.x + delta;
        if !(-3.0..=3.0).contains(&x) {
            return None;
        }
        s.staged = x;
        Some(Trial {
            error: well(x),
            log_prior: -(6.0f64.ln()),
        })
    }

    fn commit(&self, s: &mut WellState) {
        s.x = s.staged;
    }

    fn recompute(&self, s: &WellState) -> (f64, f64) {
        (well(s.x), -(6.0f64.ln()))
    }

    fn snapshot(&self, s: &WellState) -> f64 {
        s.x
    }
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Anderson–Darling `A²` of `samples` against a fully specified `cdf`.
pub fn anderson_darling(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len();
    let s: f64 = (0..n)
        .map(|i| {
            let a = cdf(x[i]).clamp(1e-300, 1.0 - 1e-16);
            let b = cdf(x[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
            (2 * i + 1) as f64 * (a.ln() + (1.0 - b).ln())
        })
        .sum();
    -(n as f64) - s / n as f64
}

/// Critical value of `A²` at the 1% level for a fully specified distribution.
pub const AD_CRITICAL_1PCT: f64 = 3.857;
