use ktfield::cluster::{
    label_clusters, read_histogram_csv, read_report_json, size_distribution, stressed_volume_features,
    write_histogram_csv, write_report_json, ClusterConfig,
};
use ktfield::fem::{load_field, load_field_sidecar, save_field, solve_slice, FieldSidecar, Material, SolveConfig};
use ktfield::life::{read_coupons_csv, write_coupons_csv, Coupon, TestCondition};
use ktfield::stats::{default_thresholds, exceedance, read_curve_csv, write_curve_csv};
use ktfield::surface::{generate_slice, load_slice, save_slice, RoughnessParams};
use ktfield::surrogate::{decode_model, encode_model, load_model, save_model, Architecture, SurrogateModel};
use ktfield::{Error, KtField64};

fn rough() -> ktfield::surface::SurfaceSlice {
    let p = RoughnessParams {
        rms_amplitude: 8.0,
        correlation_length: 12.0,
        mean_bore_offset: 45.0,
        seed: 17,
    };
    generate_slice(&p, 48, 32, 3.0, 900.0).unwrap()
}

#[test]
fn slice_round_trip_keeps_mask_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.pgm");
    let slice = rough();
    save_slice(&slice, &path).unwrap();
    let back = load_slice(&path).unwrap();
    assert_eq!(back, slice);
    assert_eq!(back.digest(), slice.digest());
}

#[test]
fn field_round_trip_is_f32_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kt.pfm");
    let slice = rough();
    let (field, timing) = solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap();
    let mut side = FieldSidecar::for_field(&field, "fem");
    side.timing = Some(timing);
    save_field(&field, &side, &path).unwrap();
    let back: KtField64 = load_field(&path).unwrap();
    back.check_aligned(&slice).unwrap();
    for (a, b) in field.raw().iter().zip(back.raw()) {
        assert!(a.is_nan() && b.is_nan() || (*a as f32) as f64 == *b);
    }
    assert_eq!(load_field_sidecar(&path).unwrap(), side);
}

#[test]
fn field_without_sidecar_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("kt.pfm");
    let slice = rough();
    let field = KtField64::from_slice_fn(&slice, ktfield::fem::AnalysisMode::Axisymmetric, |_, _| 1.0);
    save_field(&field, &FieldSidecar::for_field(&field, "fem"), &path).unwrap();
    std::fs::remove_file(dir.path().join("kt.field.json")).unwrap();
    assert!(matches!(load_field::<f64>(&path), Err(Error::Format(_))));
}

#[test]
fn curve_cluster_and_coupon_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let slice = rough();
    let (field, _) = solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap();
    let mode = field.mode;

    let curve = exceedance(&field, &slice, &default_thresholds(), mode).unwrap();
    let p = dir.path().join("curve.csv");
    write_curve_csv(&p, &curve).unwrap();
    let back = read_curve_csv(&p).unwrap();
    assert_eq!(back.thresholds, curve.thresholds);
    assert_eq!(back.fractions, curve.fractions);

    let cfg = ClusterConfig {
        threshold: 1.2,
        ..ClusterConfig::default()
    };
    let report = label_clusters(&field, &slice, &cfg).unwrap();
    assert!(!report.clusters.is_empty());
    let p = dir.path().join("clusters.json");
    write_report_json(&p, &report).unwrap();
    assert_eq!(read_report_json(&p).unwrap(), report);
    let bins = size_distribution(&report);
    let p = dir.path().join("hist.csv");
    write_histogram_csv(&p, &bins).unwrap();
    assert_eq!(read_histogram_csv(&p).unwrap(), bins);

    let features = stressed_volume_features(&report, 0.95).unwrap();
    let coupons: Vec<Coupon> = (0..3)
        .map(|k| Coupon {
            coupon_id: format!("c{k}"),
            condition: TestCondition {
                nominal_stress_amplitude: 300.0 + 100.0 * k as f64,
                stress_ratio: 0.1,
                temperature: "ambient".into(),
            },
            features: features.clone(),
            observed_cycles: if k == 1 { None } else { Some(1e4 * (k + 1) as f64) },
        })
        .collect();
    let p = dir.path().join("coupons.csv");
    write_coupons_csv(&p, &coupons, Some(&[1.0, 2.0, 3.0])).unwrap();
    let (back, pred) = read_coupons_csv(&p).unwrap();
    assert_eq!(back, coupons);
    assert_eq!(pred, vec![Some(1.0), Some(2.0), Some(3.0)]);
}

#[test]
fn model_file_round_trip_and_forward_are_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let model = SurrogateModel::<f32>::new(&Architecture::small(32, &[4, 8, 8]), 5).unwrap();
    let path = dir.path().join("m.ktsm");
    save_model(&model, &path).unwrap();
    let back = load_model::<f32>(&path).unwrap();
    let mask: Vec<bool> = (0..32 * 32).map(|k| k % 32 > 5 + (k / 32) % 3).collect();
    let (a, b) = (model.forward(&mask).unwrap(), back.forward(&mask).unwrap());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"KTSM");
    assert_eq!(encode_model(&decode_model::<f32>(&bytes).unwrap()).unwrap(), bytes);
}
