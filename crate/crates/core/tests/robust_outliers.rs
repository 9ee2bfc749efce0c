use fmahal::covariance::{
    eigendecompose, fit_empirical, mcd_covariance, McdConfig, DEFAULT_TOL_REL,
};
use fmahal::outliers::{
    boxplot_config, detect_outliers, evaluate_detection, functional_boxplot, CovMode,
    DetectionConfig,
};
use fmahal::rng::substream;
use fmahal::simulate::{contamination_model, gp_sample, ContaminationModel, KernelSpec};
use fmahal::{Curve, FunctionalSample, Grid};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

fn model1(c: f64, n: usize, seed: u64) -> FunctionalSample {
    contamination_model(
        ContaminationModel::Model1,
        n,
        c,
        &Grid::uniform(50).unwrap(),
        seed,
    )
    .unwrap()
}

fn truth(s: &FunctionalSample) -> Vec<bool> {
    s.labels().unwrap().iter().map(|l| *l == 1).collect()
}

#[test]
fn mcd_subset_avoids_contamination() {
    let good_runs = (0..50u64)
        .into_par_iter()
        .filter(|&r| {
            let s = model1(0.2, 100, 500 + r);
            let est = mcd_covariance(
                &s,
                &McdConfig {
                    seed: r,
                    ..McdConfig::default()
                },
            )
            .unwrap();
            let labels = s.labels().unwrap();
            let main = est.subset.iter().filter(|&&i| labels[i] == 0).count();
            main as f64 >= 0.9 * est.subset.len() as f64
        })
        .count();
    assert!(
        good_runs >= 45,
        "{good_runs} of 50 runs kept a 90% clean subset"
    );
}

#[test]
fn mcd_tracks_empirical_spectrum_on_clean_data() {
    let g = Grid::uniform(50).unwrap();
    let s = gp_sample(
        &KernelSpec::Ou {
            scale: 0.3,
            range: 0.3,
        },
        &Curve::zeros(50),
        &g,
        200,
        3,
    )
    .unwrap();
    let cfg = McdConfig {
        k_dims: Some(5),
        seed: 4,
        ..McdConfig::default()
    };
    let est = mcd_covariance(&s, &cfg).unwrap();
    let robust = eigendecompose(&est.cov, &est.mean, DEFAULT_TOL_REL, Some(5)).unwrap();
    let empirical = fit_empirical(&s).unwrap();
    for (r, e) in robust.eigenvalues().iter().zip(empirical.eigenvalues()) {
        assert!((r - e).abs() <= 0.25 * e, "{r} vs {e}");
    }
}

#[test]
fn full_subset_mcd_equals_empirical_detection() {
    let s = model1(0.1, 60, 8);
    let base = DetectionConfig {
        seed: 3,
        ..DetectionConfig::default()
    };
    let empirical = detect_outliers(
        &s,
        &DetectionConfig {
            cov_mode: CovMode::Empirical,
            ..base.clone()
        },
    )
    .unwrap();
    let full = DetectionConfig {
        mcd: McdConfig {
            h_fraction: 1.0,
            ..McdConfig::default()
        },
        ..base
    };
    let mcd = detect_outliers(&s, &full).unwrap();
    assert_eq!(mcd.distances_sq, empirical.distances_sq);
    assert_eq!(mcd.threshold, empirical.threshold);
    assert_eq!(mcd.flags, empirical.flags);
}

#[test]
fn flags_follow_threshold_and_level() {
    let s = model1(0.1, 80, 9);
    let mut previous = usize::MAX;
    for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
        let cfg = DetectionConfig {
            level,
            seed: 12,
            ..DetectionConfig::default()
        };
        let report = detect_outliers(&s, &cfg).unwrap();
        for (f, d) in report.flags.iter().zip(&report.distances_sq) {
            assert_eq!(*f, *d > report.threshold);
        }
        let count = report.outlier_indices().len();
        assert!(count <= previous);
        previous = count;
    }
}

#[test]
fn extreme_level_uses_the_largest_draw() {
    let s = model1(0.0, 100, 10);
    let cfg = DetectionConfig {
        level: 1.0 - 1e-12,
        cov_mode: CovMode::Empirical,
        ..DetectionConfig::default()
    };
    let report = detect_outliers(&s, &cfg).unwrap();
    let model = fmahal::outliers::fit_model(&s, &cfg).unwrap();
    let law =
        fmahal::distribution::WeightedChiSq::central(model.eigsys().eigenvalues(), 0.01).unwrap();
    let max = law
        .sample(cfg.n_mc, cfg.seed)
        .into_iter()
        .fold(f64::MIN, f64::max);
    assert!((report.threshold - max).abs() <= 1e-9 * max);
    assert!(report.outlier_indices().len() <= 1);
}

#[test]
fn detection_finds_model_two_contamination() {
    let s = contamination_model(
        ContaminationModel::Model2,
        100,
        0.1,
        &Grid::uniform(50).unwrap(),
        4,
    )
    .unwrap();
    let report = detect_outliers(&s, &DetectionConfig::default()).unwrap();
    let (pc, pf) = evaluate_detection(&report.flags, &truth(&s)).unwrap();
    assert_eq!(pc, 1.0);
    assert!(pf <= 0.1, "{pf}");
}

/// `n` copies of one smooth curve with iid `N(0, sd²)` jitter per point.
fn jittered(n: usize, p: usize, sd: f64, seed: u64) -> FunctionalSample {
    let g = Grid::uniform(p).unwrap();
    let base = g.curve_from_fn(|t| (2.0 * std::f64::consts::PI * t).sin());
    let mut rng = substream(seed, 0);
    let curves = (0..n)
        .map(|_| {
            Curve::from(
                base.iter()
                    .map(|v| v + sd * rng.sample::<f64, _>(StandardNormal))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    FunctionalSample::new(g, curves, None).unwrap()
}

#[test]
fn jittered_copies_have_a_thin_band_and_no_outliers() {
    let sd = 1e-3;
    let clean_runs = (0..50u64)
        .filter(|&seed| {
            // small n: with many curves a 0.95 threshold flags ~5% of clean ones
            let s = jittered(10, 100, sd, seed);
            let cfg = DetectionConfig {
                seed,
                ..boxplot_config()
            };
            let b = functional_boxplot(&s, &cfg).unwrap();
            for (lo, hi) in b.central_lower.iter().zip(b.central_upper.iter()) {
                assert!(hi - lo <= 8.0 * sd);
            }
            b.outlier_indices.is_empty()
        })
        .count();
    assert!(clean_runs >= 45, "{clean_runs} of 50 runs without outliers");
}

#[test]
fn planted_outlier_is_flagged_and_left_out_of_whiskers() {
    let g = Grid::uniform(50).unwrap();
    let scale = 0.3;
    let mut curves = gp_sample(
        &KernelSpec::Ou { scale, range: 0.3 },
        &Curve::zeros(50),
        &g,
        40,
        6,
    )
    .unwrap()
    .curves()
    .to_vec();
    let shift = 10.0 * scale.sqrt();
    curves[17] = curves[17].add(&g.curve_from_fn(|_| shift));
    let s = FunctionalSample::new(g, curves, None).unwrap();
    let b = functional_boxplot(
        &s,
        &DetectionConfig {
            seed: 2,
            ..boxplot_config()
        },
    )
    .unwrap();
    assert!(b.outlier_indices.contains(&17), "{:?}", b.outlier_indices);
    let planted = &s.curves()[17];
    assert!(planted
        .iter()
        .zip(b.whisker_upper.iter())
        .any(|(v, w)| v > w));
}

#[test]
fn boxplot_structure() {
    let s = model1(0.1, 30, 11);
    let b = functional_boxplot(
        &s,
        &DetectionConfig {
            seed: 1,
            ..boxplot_config()
        },
    )
    .unwrap();
    let max = b.depths.iter().copied().fold(f64::MIN, f64::max);
    assert_eq!(b.depths[b.median_index], max);
    assert!(b.depths.iter().all(|d| *d > 0.0 && *d <= 1.0));
    for j in 0..50 {
        assert!(b.central_lower[j] <= b.central_upper[j]);
        assert!(b.whisker_lower[j] <= b.central_lower[j]);
        assert!(b.whisker_upper[j] >= b.central_upper[j]);
    }
    assert!(functional_boxplot(&s.subset(&[0, 1, 2]), &boxplot_config()).is_err());
}
