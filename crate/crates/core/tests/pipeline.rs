//! Surface → FE → surrogate → statistics → life, across module boundaries.

use ktfield::cluster::{label_clusters, stressed_volume_features, ClusterConfig};
use ktfield::fem::{solve_slice, Material, SolveConfig};
use ktfield::life::{calibrate, predict_life, Coupon, LifeModelParams, TestCondition};
use ktfield::stats::{compare_curves, default_thresholds, exceedance};
use ktfield::surface::{generate_slice, RoughnessParams};
use ktfield::surrogate::{
    evaluate, load_dataset, make_dataset, predict_large, train, Architecture, DatasetConfig, ParamRange, Split,
    TrainConfig,
};

fn small_dataset_config() -> DatasetConfig {
    DatasetConfig {
        n_samples: 12,
        patch_size: 32,
        cols: 32,
        margin_rows: 8,
        rms_um: ParamRange::new(2.0, 8.0),
        correlation_um: ParamRange::new(6.0, 15.0),
        mean_offset_um: ParamRange::new(30.0, 40.0),
        seed: 3,
        ..DatasetConfig::default()
    }
}

#[test]
fn rougher_surfaces_concentrate_more_stress() {
    let mut gentle = 0.0;
    let mut rough = 0.0;
    for seed in 0..4 {
        for (rms, acc) in [(2.0, &mut gentle), (15.0, &mut rough)] {
            let p = RoughnessParams {
                rms_amplitude: rms,
                correlation_length: 15.0,
                mean_bore_offset: 90.0,
                seed,
            };
            let slice = generate_slice(&p, 96, 64, 3.0, 1500.0).unwrap();
            let (field, _) = solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap();
            *acc += field.max().unwrap();
        }
    }
    assert!(rough > gentle, "{rough} vs {gentle}");
}

#[test]
fn dataset_to_surrogate_to_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_dataset_config();
    let summary = make_dataset(&config, dir.path()).unwrap();
    assert_eq!(summary.computed + summary.failed, 12);
    let dataset = load_dataset(dir.path()).unwrap();
    assert_eq!(dataset.samples.len(), summary.computed);
    for s in &dataset.samples {
        assert!(s.kt.iter().zip(&s.mask).all(|(v, &m)| m == v.is_finite()));
    }

    let arch = Architecture::small(32, &[4, 8, 8, 8, 8]);
    let cfg = TrainConfig {
        batch_size: 2,
        epochs: 3,
        seed: 1,
        ..TrainConfig::default()
    };
    let (model, report) = train(&dataset, &arch, &cfg).unwrap();
    assert!(report.history.iter().all(|h| h.train_loss.is_finite()));
    let held: Vec<_> = dataset.samples.iter().filter(|s| s.split != Split::Train).collect();
    if !held.is_empty() {
        let m = evaluate(&model, &held, &config).unwrap();
        assert!(m.mean_relative_error.is_finite());
        assert!((0.0..=1.0).contains(&m.exceedance_gap_pooled));
    }

    // a longer section than one patch goes through tiling
    let p = RoughnessParams {
        rms_amplitude: 5.0,
        correlation_length: 10.0,
        mean_bore_offset: 35.0,
        seed: 8,
    };
    let slice = generate_slice(&p, 90, 32, 3.0, config.r_inner_nominal_um).unwrap();
    let sm = predict_large(&model, &slice).unwrap();
    sm.check_aligned(&slice).unwrap();
    let (fe, _) = solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap();
    let t = default_thresholds();
    let a = exceedance(&fe, &slice, &t, fe.mode).unwrap();
    let b = exceedance(&sm, &slice, &t, sm.mode).unwrap();
    let gap = compare_curves(&a, &b).unwrap();
    assert!((0.0..=1.0).contains(&gap.max_gap));
}

#[test]
fn fe_clusters_feed_a_calibrated_life_model() {
    let truth = LifeModelParams {
        c: 2e13,
        b: 3.0,
        m: 8.0,
        v_ref: 1e4,
        kt_eff_quantile: 0.95,
    };
    let mut coupons = Vec::new();
    for k in 0..8u64 {
        let p = RoughnessParams {
            rms_amplitude: 4.0 + 2.0 * k as f64,
            correlation_length: 12.0,
            mean_bore_offset: 90.0,
            seed: k,
        };
        let slice = generate_slice(&p, 96, 64, 3.0, 1500.0).unwrap();
        let (field, _) = solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap();
        let report = label_clusters(&field, &slice, &ClusterConfig { threshold: 1.6, ..Default::default() }).unwrap();
        let features = stressed_volume_features(&report, 0.95).unwrap();
        let condition = TestCondition {
            nominal_stress_amplitude: [300.0, 500.0][k as usize % 2],
            stress_ratio: 0.1,
            temperature: "ambient".into(),
        };
        let n = predict_life(&features, &condition, &truth).unwrap().cycles_to_failure;
        coupons.push(Coupon {
            coupon_id: format!("s{k}"),
            condition,
            features,
            observed_cycles: Some(n),
        });
    }
    let cal = calibrate(&coupons, truth.v_ref, 0.95).unwrap();
    assert!((cal.params.b - truth.b).abs() < 1e-6 * truth.b, "{:?}", cal.params);
    assert!((cal.params.m - truth.m).abs() < 1e-6 * truth.m);
    assert_eq!(cal.band_fraction, 1.0);
}
