use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ktfield::cluster::{self, ClusterConfig, Connectivity};
use ktfield::fem::{self, FieldSidecar, KtField, LoadCase};
use ktfield::io;
use ktfield::life::{self, LifeModelParams};
use ktfield::plot::{self, Series};
use ktfield::seed::derive_seed;
use ktfield::stats;
use ktfield::surface::{self, RoughnessParams, SliceMeta, SurfaceSlice};
use ktfield::surrogate::{self, Split};
use serde_json::json;

use crate::config::{FemConfig, FileConfig};
use crate::manifest::{manifest_path_for, RunManifest};
use crate::overlay;
use crate::{
    require_file, ClusterFlags, ClustersArgs, CliResult, ConnectivityArg, ExceedanceArgs, FemFlags, FemSolveArgs,
    GenSurfaceArgs, LifeCalibrateArgs, LifePredictArgs, MakeDatasetArgs, PredictArgs, TrainArgs,
};

pub fn create_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// `<dir>/<stem><suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn apply_fem_flags(base: &FemConfig, f: &FemFlags) -> FemConfig {
    let mut c = base.clone();
    if let Some(m) = f.mode {
        c.solve.mode = m.into();
    }
    if let Some(e) = f.youngs_modulus {
        c.material.youngs_modulus = e;
    }
    if let Some(v) = f.poisson_ratio {
        c.material.poisson_ratio = v;
    }
    if let Some(t) = f.traction {
        c.solve.load = LoadCase::Traction(t);
    }
    if let Some(d) = f.displacement {
        c.solve.load = LoadCase::Displacement(d);
    }
    if let Some(t) = f.cg_tol {
        c.solve.cg_rel_tol = t;
    }
    if let Some(n) = f.cg_max_iters {
        c.solve.cg_max_iters = n;
    }
    c
}

pub fn apply_cluster_flags(base: &ClusterConfig, f: &ClusterFlags) -> ClusterConfig {
    let mut c = *base;
    if let Some(t) = f.threshold {
        c.threshold = t;
    }
    if let Some(k) = f.connectivity {
        c.connectivity = match k {
            ConnectivityArg::Four => Connectivity::Four,
            ConnectivityArg::Eight => Connectivity::Eight,
        };
    }
    if f.max_depth.is_some() {
        c.max_depth_um = f.max_depth;
    }
    c
}

fn load_slice_checked(path: &Path) -> CliResult<SurfaceSlice> {
    require_file(path)?;
    Ok(surface::load_slice(path)?)
}

fn load_field_checked(path: &Path) -> CliResult<KtField<f64>> {
    require_file(path)?;
    Ok(fem::load_field(path)?)
}

pub fn gen_surface(cfg: &FileConfig, a: GenSurfaceArgs) -> CliResult<()> {
    let t0 = Instant::now();
    let mut s = cfg.surface.clone();
    macro_rules! over {
        ($($flag:ident => $field:ident),*) => { $(if let Some(v) = a.$flag { s.$field = v; })* };
    }
    over!(rows => rows, cols => cols, pixel_pitch => pixel_pitch_um, r_inner => r_inner_nominal_um,
          rms => rms_um, correlation => correlation_um, mean_offset => mean_offset_um);
    let mut run = RunManifest::new("gen-surface", Some(cfg.seed), &s)?;
    let slice = match &a.import {
        Some(src) => {
            require_file(src)?;
            run.input(src)?;
            let img = io::read_pgm(src)?;
            let meta = SliceMeta {
                seed: None,
                generator: None,
                source: Some(src.to_string_lossy().into_owned()),
            };
            let mask = img.data.iter().map(|&v| v >= 128).collect();
            SurfaceSlice::new(img.height, img.width, mask, s.pixel_pitch_um, s.r_inner_nominal_um, meta)?
        }
        None => {
            let params = RoughnessParams {
                rms_amplitude: s.rms_um,
                correlation_length: s.correlation_um,
                mean_bore_offset: s.mean_offset_um,
                seed: derive_seed(cfg.seed, "surface", 0),
            };
            surface::generate_slice(&params, s.rows, s.cols, s.pixel_pitch_um, s.r_inner_nominal_um)?
        }
    };
    create_parent(&a.out)?;
    surface::save_slice(&slice, &a.out)?;
    run.output(&a.out)?;
    run.output(&io::sidecar_path(&a.out))?;
    run.time("total", t0.elapsed().as_secs_f64());
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

pub fn fem_solve(cfg: &FileConfig, a: FemSolveArgs) -> CliResult<()> {
    let fc = apply_fem_flags(&cfg.fem, &a.fem);
    let slice = load_slice_checked(&a.slice)?;
    let mut run = RunManifest::new("fem-solve", None, &fc)?;
    run.input(&a.slice)?;
    let (field, timing) = fem::solve_slice::<f64>(&slice, &fc.material, &fc.solve)?;
    let mut side = FieldSidecar::for_field(&field, "fem");
    side.config_hash = Some(fem::config_hash(&fc.material, &fc.solve));
    side.timing = Some(timing.clone());
    create_parent(&a.out)?;
    fem::save_field(&field, &side, &a.out)?;
    run.output(&a.out)?;
    run.output(&io::field_sidecar_path(&a.out))?;
    run.time("assemble", timing.assemble_s);
    run.time("solve", timing.solve_s);
    run.time("recover", timing.recover_s);
    run.time("total", timing.total_s);
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

pub fn make_dataset(cfg: &FileConfig, a: MakeDatasetArgs) -> CliResult<()> {
    let fc = apply_fem_flags(&cfg.fem, &a.fem);
    let mut dc = cfg.dataset.clone();
    dc.seed = cfg.seed;
    dc.material = fc.material;
    dc.solve = fc.solve;
    if let Some(n) = a.n_samples {
        dc.n_samples = n;
    }
    if let Some(p) = a.patch_size {
        dc.patch_size = p;
        dc.cols = p;
    }
    for (flag, field) in [
        (a.rms, &mut dc.rms_um),
        (a.correlation, &mut dc.correlation_um),
        (a.mean_offset, &mut dc.mean_offset_um),
    ] {
        if let Some((lo, hi)) = flag {
            *field = surrogate::ParamRange::new(lo, hi);
        }
    }
    let mut run = RunManifest::new("make-dataset", Some(cfg.seed), &dc)?;
    let summary = surrogate::make_dataset(&dc, &a.out)?;
    run.output(&a.out.join(surrogate::MANIFEST_FILE))?;
    run.time("total", summary.wall_time_s);
    let mut doc = serde_json::to_value(&run)?;
    doc["summary"] = json!({
        "computed": summary.computed,
        "skipped": summary.skipped,
        "failed": summary.failed,
    });
    io::write_json(&a.out.join("make_dataset.run.json"), &doc)?;
    Ok(())
}

fn loss_plot(path: &Path, report: &surrogate::TrainReport) -> CliResult<()> {
    let train: Vec<(f64, f64)> = report.history.iter().map(|h| (h.epoch as f64, h.train_loss)).collect();
    let mut val = vec![(0.0, report.initial_val_loss)];
    val.extend(report.history.iter().map(|h| (h.epoch as f64, h.val_loss)));
    let svg = plot::line_chart(
        "Training loss",
        "epoch",
        "masked MSE",
        &[
            Series { label: "train", points: train },
            Series { label: "validation", points: val },
        ],
    );
    fs::write(path, svg)?;
    Ok(())
}

fn loss_csv(path: &Path, report: &surrogate::TrainReport) -> CliResult<()> {
    let mut text = String::from("epoch,train_loss,val_loss\n");
    text.push_str(&format!("0,,{}\n", report.initial_val_loss));
    for h in &report.history {
        text.push_str(&format!("{},{},{}\n", h.epoch, h.train_loss, h.val_loss));
    }
    fs::write(path, text)?;
    Ok(())
}

/// Train on `dataset`, write model, report, loss CSV/SVG; returns the paths written.
pub fn train_and_write(
    cfg: &FileConfig,
    dataset: &surrogate::Dataset,
    arch: &surrogate::Architecture,
    tc: &surrogate::TrainConfig,
    out: &Path,
) -> CliResult<(Vec<PathBuf>, f64)> {
    let t0 = Instant::now();
    let (model, report) = surrogate::train(dataset, arch, tc)?;
    let elapsed = t0.elapsed().as_secs_f64();
    create_parent(out)?;
    surrogate::save_model(&model, out)?;
    let test = dataset.split(Split::Test);
    let metrics = if test.is_empty() {
        None
    } else {
        Some(surrogate::evaluate(&model, &test, &dataset.manifest.config)?)
    };
    let report_path = sibling(out, ".report.json");
    io::write_json(
        &report_path,
        &json!({ "train": report, "test_metrics": metrics, "seed": cfg.seed }),
    )?;
    let (csv, svg) = (sibling(out, "_loss.csv"), sibling(out, "_loss.svg"));
    loss_csv(&csv, &report)?;
    loss_plot(&svg, &report)?;
    Ok((vec![out.to_path_buf(), report_path, csv, svg], elapsed))
}

pub fn architecture_for(cfg: &FileConfig, patch: usize, sdf: bool) -> surrogate::Architecture {
    let mut arch = cfg.surrogate.architecture.clone();
    arch.patch_size = patch;
    if sdf {
        arch.input_channels = 2;
    }
    arch
}

pub fn train(cfg: &FileConfig, a: TrainArgs) -> CliResult<()> {
    require_file(&a.dataset.join(surrogate::MANIFEST_FILE))?;
    let dataset = surrogate::load_dataset(&a.dataset)?;
    let mut tc = cfg.surrogate.train.clone();
    tc.seed = cfg.seed;
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(b) = a.batch_size {
        tc.batch_size = b;
    }
    if let Some(lr) = a.learning_rate {
        tc.learning_rate = lr;
    }
    if a.patience.is_some() {
        tc.patience = a.patience;
    }
    let arch = architecture_for(cfg, dataset.manifest.config.patch_size, a.sdf);
    let mut run = RunManifest::new("train", Some(cfg.seed), &json!({ "train": tc, "architecture": arch }))?;
    run.input(&a.dataset.join(surrogate::MANIFEST_FILE))?;
    let (outputs, elapsed) = train_and_write(cfg, &dataset, &arch, &tc, &a.out)?;
    for p in &outputs {
        run.output(p)?;
    }
    run.time("train", elapsed);
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

pub fn predict(_cfg: &FileConfig, a: PredictArgs) -> CliResult<()> {
    require_file(&a.model)?;
    let slice = load_slice_checked(&a.slice)?;
    let model = surrogate::load_model::<f32>(&a.model)?;
    let mut run = RunManifest::new("predict", None, &json!({ "model": a.model }))?;
    run.input(&a.model)?;
    run.input(&a.slice)?;
    let t0 = Instant::now();
    let field = surrogate::predict_large(&model, &slice)?;
    run.time("predict", t0.elapsed().as_secs_f64());
    create_parent(&a.out)?;
    fem::save_field(&field, &FieldSidecar::for_field(&field, "surrogate"), &a.out)?;
    run.output(&a.out)?;
    run.output(&io::field_sidecar_path(&a.out))?;
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

pub fn exceedance_svg(curves: &[(&str, &stats::ExceedanceCurve)]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|(label, c)| Series {
            label,
            points: c.thresholds.iter().copied().zip(c.fractions.iter().copied()).collect(),
        })
        .collect();
    plot::line_chart("Exceedance", "K_t threshold", "volume fraction above", &series)
}

pub fn exceedance(_cfg: &FileConfig, a: ExceedanceArgs) -> CliResult<()> {
    let slice = load_slice_checked(&a.slice)?;
    let field = load_field_checked(&a.field)?;
    let thresholds = stats::thresholds_from(a.threshold_min);
    let mut run = RunManifest::new("exceedance", None, &json!({ "threshold_min": a.threshold_min }))?;
    run.input(&a.slice)?;
    run.input(&a.field)?;
    let curve = stats::exceedance(&field, &slice, &thresholds, field.mode)?;
    create_parent(&a.out)?;
    stats::write_curve_csv(&a.out, &curve)?;
    run.output(&a.out)?;
    let svg_path = a.out.with_extension("svg");
    match &a.reference {
        Some(r) => {
            let reference = load_field_checked(r)?;
            run.input(r)?;
            let rc = stats::exceedance(&reference, &slice, &thresholds, reference.mode)?;
            let ref_csv = sibling(&a.out, "_reference.csv");
            stats::write_curve_csv(&ref_csv, &rc)?;
            run.output(&ref_csv)?;
            let gap = stats::compare_curves(&curve, &rc)?;
            let gap_path = sibling(&a.out, "_gap.json");
            io::write_json(&gap_path, &gap)?;
            run.output(&gap_path)?;
            fs::write(&svg_path, exceedance_svg(&[("field", &curve), ("reference", &rc)]))?;
        }
        None => fs::write(&svg_path, exceedance_svg(&[("field", &curve)]))?,
    }
    run.output(&svg_path)?;
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

/// Report JSON, histogram CSV and overlay PNG for one field.
pub fn write_cluster_outputs(
    field: &KtField<f64>,
    slice: &SurfaceSlice,
    cc: &ClusterConfig,
    out: &Path,
) -> CliResult<(cluster::ClusterReport, Vec<PathBuf>)> {
    let report = cluster::label_clusters(field, slice, cc)?;
    create_parent(out)?;
    cluster::write_report_json(out, &report)?;
    let hist = sibling(out, "_histogram.csv");
    cluster::write_histogram_csv(&hist, &cluster::size_distribution(&report))?;
    let png = out.with_extension("png");
    overlay::write_png(&overlay::cluster_overlay(field, slice, cc), &png)?;
    Ok((report, vec![out.to_path_buf(), hist, png]))
}

pub fn clusters(cfg: &FileConfig, a: ClustersArgs) -> CliResult<()> {
    let cc = apply_cluster_flags(&cfg.cluster, &a.cluster);
    let slice = load_slice_checked(&a.slice)?;
    let field = load_field_checked(&a.field)?;
    let mut run = RunManifest::new("clusters", None, &cc)?;
    run.input(&a.slice)?;
    run.input(&a.field)?;
    let t0 = Instant::now();
    let (_, outputs) = write_cluster_outputs(&field, &slice, &cc, &a.out)?;
    run.time("total", t0.elapsed().as_secs_f64());
    for p in &outputs {
        run.output(p)?;
    }
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

pub fn life_calibrate(cfg: &FileConfig, a: LifeCalibrateArgs) -> CliResult<()> {
    require_file(&a.coupons)?;
    let v_ref = a.v_ref.unwrap_or(cfg.life.params.v_ref);
    let q = a.quantile.unwrap_or(cfg.life.params.kt_eff_quantile);
    let mut run = RunManifest::new("life-calibrate", None, &json!({ "v_ref": v_ref, "quantile": q }))?;
    run.input(&a.coupons)?;
    let (coupons, _) = life::read_coupons_csv(&a.coupons)?;
    let cal = life::calibrate(&coupons, v_ref, q)?;
    create_parent(&a.out)?;
    io::write_json(&a.out, &cal)?;
    let fitted = sibling(&a.out, "_coupons.csv");
    let labelled: Vec<_> = coupons.iter().filter(|c| c.observed_cycles.is_some()).cloned().collect();
    let predicted: Vec<f64> = cal.coupons.iter().map(|c| c.predicted_cycles).collect();
    life::write_coupons_csv(&fitted, &labelled, Some(&predicted))?;
    let svg = a.out.with_extension("svg");
    let points: Vec<(f64, f64)> = cal.coupons.iter().map(|c| (c.observed_cycles, c.predicted_cycles)).collect();
    fs::write(&svg, plot::band_scatter("Predicted vs observed life", &points))?;
    for p in [&a.out, &fitted, &svg] {
        run.output(p)?;
    }
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}

fn life_params(cfg: &FileConfig, calibration: Option<&Path>) -> CliResult<LifeModelParams> {
    match calibration {
        Some(p) => {
            require_file(p)?;
            let cal: life::Calibration = io::read_json(p)?;
            Ok(cal.params)
        }
        None => Ok(cfg.life.params),
    }
}

pub fn life_predict(cfg: &FileConfig, a: LifePredictArgs) -> CliResult<()> {
    let params = life_params(cfg, a.calibration.as_deref())?;
    let mut condition = cfg.life.condition.clone();
    if let Some(s) = a.stress_amplitude {
        condition.nominal_stress_amplitude = s;
    }
    if let Some(r) = a.stress_ratio {
        condition.stress_ratio = r;
    }
    if let Some(t) = &a.temperature {
        condition.temperature = t.clone();
    }
    let mut run = RunManifest::new("life-predict", None, &json!({ "params": params, "condition": condition }))?;
    if let Some(c) = &a.calibration {
        run.input(c)?;
    }
    create_parent(&a.out)?;
    if let Some(path) = &a.clusters {
        require_file(path)?;
        run.input(path)?;
        let report = cluster::read_report_json(path)?;
        let features = cluster::stressed_volume_features(&report, params.kt_eff_quantile)?;
        let prediction = life::predict_life(&features, &condition, &params)?;
        io::write_json(
            &a.out,
            &json!({ "features": features, "condition": condition, "params": params, "prediction": prediction }),
        )?;
    } else if let Some(path) = &a.coupons {
        require_file(path)?;
        run.input(path)?;
        let (coupons, _) = life::read_coupons_csv(path)?;
        let predicted: Vec<f64> = coupons
            .iter()
            .map(|c| life::predict_life(&c.features, &c.condition, &params).map(|p| p.cycles_to_failure))
            .collect::<ktfield::Result<_>>()?;
        life::write_coupons_csv(&a.out, &coupons, Some(&predicted))?;
    }
    run.output(&a.out)?;
    run.write(&manifest_path_for(&a.out))?;
    Ok(())
}
