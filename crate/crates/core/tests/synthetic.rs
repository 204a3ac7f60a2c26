mod common;

use common::{anderson_darling, AD_CRITICAL_1PCT};
use statrs::distribution::{ContinuousCDF, Normal};
use xanes_deconv::io::{read_dataset, write_dataset};
use xanes_deconv::synth::{draw_truth, energy_grid, MIN_PEAK_SEPARATION};
use xanes_deconv::{default_truth, synthesize};

#[test]
fn residuals_are_standard_normal_after_scaling() {
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut fails = 0;
    for seed in 0..20 {
        let t = default_truth().with_seed(seed);
        let d = synthesize(&t);
        let r: Vec<f64> = d
            .points()
            .map(|(e, i)| (i - t.params.value_at(e)) * t.precision.sqrt())
            .collect();
        if anderson_darling(&r, |x| z.cdf(x)) > AD_CRITICAL_1PCT {
            fails += 1;
        }
    }
    // 20 tests at the 1% level: more than two rejections has probability < 0.1%
    assert!(fails <= 2, "{fails} of 20 seeds rejected");
}

#[test]
fn noise_variance_matches_precision() {
    let t = default_truth();
    let mut total = 0.0;
    let mut n = 0;
    for seed in 0..50 {
        let d = synthesize(&t.clone().with_seed(seed));
        for (e, i) in d.points() {
            total += (i - t.params.value_at(e)).powi(2);
            n += 1;
        }
    }
    let var = total / n as f64;
    assert!((var * t.precision - 1.0).abs() < 0.02, "{}", var * t.precision);
}

#[test]
fn dataset_csv_round_trip_is_exact() {
    let d = synthesize(&default_truth());
    let mut buf = Vec::new();
    write_dataset(&mut buf, &d).unwrap();
    assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);
}

#[test]
fn drawn_truths_respect_the_design() {
    for seed in 0..30 {
        let p = draw_truth(seed, 4, 3, 543.1, (530.0, 590.0));
        let mut centres: Vec<f64> = p.peaks().map(|pk| p.center(pk)).collect();
        assert!(centres.iter().all(|&c| c > 530.0 && c < 590.0));
        centres.push(p.step.edge + p.step.white_offset);
        for i in 0..centres.len() {
            for j in i + 1..centres.len() {
                assert!((centres[i] - centres[j]).abs() >= MIN_PEAK_SEPARATION);
            }
        }
        assert!(p.below.iter().all(|pk| pk.offset < 0.0));
        assert!(p.above.iter().all(|pk| pk.offset > 0.0));
    }
}

#[test]
fn single_point_grid() {
    assert_eq!(energy_grid((530.0, 590.0), 1), vec![560.0]);
}
