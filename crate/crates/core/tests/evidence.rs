mod common;

use common::LinearToy;
use proptest::prelude::*;
use xanes_deconv::emc::{run_emc, ReplicaLadder, SamplerConfig};
use xanes_deconv::evidence::{
    log_ztilde_from_energies, peak_count_posterior, select_model, trapezoid_weights, EvidenceTable, ModelEvidence,
};
use xanes_deconv::{estimate_log_ztilde, free_energy, marginals, PeakConfig, Regime};

#[test]
fn toy_free_energy_matches_closed_form() {
    let toy = LinearToy::new(50, 1.3, 100.0, 21);
    let ladder = ReplicaLadder::geometric(20, 1.8, 100.0).unwrap();
    let cfg = SamplerConfig {
        total_mcs: 3000,
        burn_in: 500,
        seed: 8,
        ..Default::default()
    };
    let rec = run_emc(&toy, &ladder, &cfg).unwrap();
    let lz = estimate_log_ztilde(&rec).unwrap();
    for (l, &b) in ladder.betas().iter().enumerate().skip(1) {
        let f = free_energy(lz[l], b, 50).unwrap();
        assert!((f - toy.free_energy(b)).abs() < 0.1, "rung {}: {f} vs {}", l + 1, toy.free_energy(b));
    }
}

#[test]
fn estimator_is_stable_for_large_energies() {
    // the sample mean of exp(−x) underflows without the log-sum-exp shift
    let e = vec![vec![1e6, 1e6 + 1.0], vec![0.0]];
    let lz = log_ztilde_from_energies(&e, &[0.0, 1.0], 1).unwrap();
    let expected = -1e6 + ((1.0 + (-1.0f64).exp()) / 2.0).ln();
    assert!((lz[1] - expected).abs() < 1e-9);
}

fn grid_table(fs: &[(PeakConfig, Vec<f64>)], betas: &[f64]) -> EvidenceTable {
    EvidenceTable {
        regime: Regime::Proposed,
        n_data: 10,
        models: fs
            .iter()
            .map(|(p, f)| {
                let mut fe = vec![f64::NAN];
                fe.extend(f);
                ModelEvidence {
                    peaks: *p,
                    betas: betas.to_vec(),
                    log_ztilde: vec![0.0; betas.len()],
                    free_energy: fe,
                    samples: 1,
                }
            })
            .collect(),
    }
}

#[test]
fn three_by_three_grid_by_direct_summation() {
    let betas = [0.0, 1.0, 2.0, 4.0];
    let mut fs = Vec::new();
    for k1 in 0..3 {
        for k2 in 0..3 {
            let f: Vec<f64> = (0..3).map(|r| ((k1 * 7 + k2 * 3 + r * 5) % 11) as f64 * 0.4 - 1.0).collect();
            fs.push((PeakConfig::new(k1, k2), f));
        }
    }
    let post = peak_count_posterior(&grid_table(&fs, &betas)).unwrap();

    // trapezoid weights on b = 1, 2, 4 are 0.5, 1.5, 1.0
    let w = [0.5, 1.5, 1.0];
    let mass: Vec<f64> = fs
        .iter()
        .map(|(_, f)| f.iter().zip(&w).map(|(f, w)| w * (-f).exp()).sum())
        .collect();
    let z: f64 = mass.iter().sum();
    for (m, p) in mass.iter().zip(&post.probability) {
        assert!((p - m / z).abs() < 1e-14);
    }
    let total: f64 = post.probability.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);

    let marg = marginals(&post.peaks, &post.probability);
    for k1 in 0..3 {
        let direct: f64 = (0..3).map(|k2| mass[k1 * 3 + k2] / z).sum();
        let got = marg.k1.iter().find(|(k, _)| *k == k1).unwrap().1;
        assert!((got - direct).abs() < 1e-14);
    }
    let k2_2: f64 = marg.k.iter().find(|(k, _)| *k == 2).unwrap().1;
    let direct = (mass[2] + mass[4] + mass[6]) / z;
    assert!((k2_2 - direct).abs() < 1e-14);
}

#[test]
fn trapezoid_weights_integrate_linear_functions() {
    let b = [0.3, 0.7, 1.9, 2.0, 5.5];
    let w = trapezoid_weights(&b);
    let integral: f64 = b.iter().zip(&w).map(|(x, w)| (2.0 * x + 1.0) * w).sum();
    let exact = (5.5f64.powi(2) + 5.5) - (0.3f64.powi(2) + 0.3);
    assert!((integral - exact).abs() < 1e-12);
}

proptest! {
    #[test]
    fn argmin_free_energy_is_argmax_density(
        values in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 1..12),
    ) {
        let betas = [0.0, 10.0, 20.0, 40.0, 80.0];
        let fs: Vec<(PeakConfig, Vec<f64>)> = values
            .iter()
            .enumerate()
            .map(|(i, f)| (PeakConfig::new(i / 3, i % 3), f.clone()))
            .collect();
        let table = grid_table(&fs, &betas);
        let choice = select_model(&table).unwrap();
        let post = peak_count_posterior(&table).unwrap();
        let mut best = (0, 0, f64::NEG_INFINITY);
        for (m, row) in post.density.iter().enumerate() {
            for (r, &d) in row.iter().enumerate() {
                if d > best.2 {
                    best = (m, r, d);
                }
            }
        }
        let (fm, fr) = (choice.model, choice.rung);
        prop_assert!((post.density[fm][fr - 1] - best.2).abs() <= 1e-12 * best.2);
        let total: f64 = post.probability.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
