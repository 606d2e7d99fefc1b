use std::fs;
use std::path::Path;
use std::time::Instant;

use ktfield::cluster;
use ktfield::fem::{self, FieldSidecar, KtField};
use ktfield::io;
use ktfield::life;
use ktfield::seed::derive_seed;
use ktfield::stats;
use ktfield::surface::{self, RoughnessParams, SurfaceSlice};
use ktfield::surrogate::{self, Architecture, SurrogateModel};
use ktfield::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::commands::{self, create_parent};
use crate::config::FileConfig;
use crate::manifest::RunManifest;
use crate::{require_file, BenchArgs, CliResult, PipelineArgs};

#[derive(Debug, Serialize)]
pub struct Hardware {
    pub os: &'static str,
    pub arch: &'static str,
    pub available_cpus: usize,
    pub threads: usize,
}

impl Hardware {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            available_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            threads: rayon::current_num_threads(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub slices: usize,
    pub rows: usize,
    pub cols: usize,
    pub generate_s: f64,
    pub fe_s: Vec<f64>,
    pub surrogate_s: Vec<f64>,
    pub fe_total_s: f64,
    pub surrogate_total_s: f64,
    /// `fe_total_s / surrogate_total_s`.
    pub speedup: f64,
    pub fe_max_kt: Vec<f64>,
    pub surrogate_max_kt: Vec<f64>,
    pub trained_model: bool,
    pub hardware: Hardware,
    pub config_hash: String,
}

fn section_params(cfg: &FileConfig, stage: &str, k: usize) -> RoughnessParams {
    RoughnessParams {
        rms_amplitude: cfg.surface.rms_um,
        correlation_length: cfg.surface.correlation_um,
        mean_bore_offset: cfg.surface.mean_offset_um,
        seed: derive_seed(cfg.seed, stage, k as u64),
    }
}

pub fn bench(cfg: &FileConfig, a: BenchArgs) -> CliResult<()> {
    if a.slices == 0 {
        return Err(Error::Parameter("--slices must be >= 1".into()).into());
    }
    let s = &cfg.surface;
    let model: SurrogateModel<f32> = match &a.model {
        Some(p) => {
            require_file(p)?;
            surrogate::load_model(p)?
        }
        None => {
            let mut m = SurrogateModel::new(&cfg.surrogate.architecture, cfg.seed)?;
            m.training_meta.pixel_pitch_um = s.pixel_pitch_um;
            m.training_meta.mode = cfg.fem.solve.mode;
            m
        }
    };
    let mut run = RunManifest::new("bench", Some(cfg.seed), &json!({ "surface": s, "fem": cfg.fem, "rows": a.rows, "cols": a.cols }))?;
    if let Some(p) = &a.model {
        run.input(p)?;
    }

    let t0 = Instant::now();
    let slices: Vec<SurfaceSlice> = (0..a.slices)
        .map(|k| surface::generate_slice(&section_params(cfg, "bench", k), a.rows, a.cols, s.pixel_pitch_um, s.r_inner_nominal_um))
        .collect::<ktfield::Result<_>>()?;
    let generate_s = t0.elapsed().as_secs_f64();

    let (mut fe_s, mut sm_s, mut fe_max, mut sm_max) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for slice in &slices {
        let t = Instant::now();
        let (field, _) = fem::solve_slice::<f64>(slice, &cfg.fem.material, &cfg.fem.solve)?;
        fe_s.push(t.elapsed().as_secs_f64());
        fe_max.push(field.max().unwrap_or(f64::NAN));
        let t = Instant::now();
        let pred = surrogate::predict_large(&model, slice)?;
        sm_s.push(t.elapsed().as_secs_f64());
        sm_max.push(pred.max().map_or(f64::NAN, f64::from));
    }
    let (fe_total, sm_total): (f64, f64) = (fe_s.iter().sum(), sm_s.iter().sum());
    let report = BenchReport {
        slices: a.slices,
        rows: a.rows,
        cols: a.cols,
        generate_s,
        fe_s,
        surrogate_s: sm_s,
        fe_total_s: fe_total,
        surrogate_total_s: sm_total,
        speedup: fe_total / sm_total,
        fe_max_kt: fe_max,
        surrogate_max_kt: sm_max,
        trained_model: a.model.is_some(),
        hardware: Hardware::current(),
        config_hash: run.config_hash.clone(),
    };
    create_parent(&a.out)?;
    io::write_json(&a.out, &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    run.output(&a.out)?;
    run.time("fe", fe_total);
    run.time("surrogate", sm_total);
    run.write(&crate::manifest::manifest_path_for(&a.out))?;
    Ok(())
}

fn section_name(k: usize) -> String {
    format!("section_{k:03}")
}

fn save_fem_field(field: &KtField<f64>, timing: Option<fem::SolveTiming>, cfg: &FileConfig, path: &Path) -> CliResult<()> {
    let mut side = FieldSidecar::for_field(field, "fem");
    side.config_hash = Some(fem::config_hash(&cfg.fem.material, &cfg.fem.solve));
    side.timing = timing;
    fem::save_field(field, &side, path)?;
    Ok(())
}

/// gen → fem → dataset + train → predict → exceedance → clusters → life,
/// all under `out`. Every file except timing fields is a pure function of
/// the configuration and the root seed.
pub fn pipeline(mut cfg: FileConfig, a: PipelineArgs) -> CliResult<()> {
    if let Some(n) = a.sections {
        cfg.pipeline.sections = n;
    }
    if let Some(n) = a.dataset_samples {
        cfg.pipeline.dataset_samples = n;
    }
    if let Some(e) = a.epochs {
        cfg.pipeline.epochs = e;
    }
    let pc = cfg.pipeline.clone();
    if pc.sections == 0 {
        return Err(Error::Config("pipeline needs at least one section".into()).into());
    }
    let out = a.out.as_path();
    for sub in ["sections", "fem", "predict", "exceedance", "clusters"] {
        fs::create_dir_all(out.join(sub))?;
    }
    let mut run = RunManifest::new("pipeline", Some(cfg.seed), &cfg)?.relative_to(out);
    io::write_json(&out.join("config.json"), &cfg)?;
    let s = cfg.surface.clone();

    // gen
    let t = Instant::now();
    let slices: Vec<SurfaceSlice> = (0..pc.sections)
        .map(|k| surface::generate_slice(&section_params(&cfg, "section", k), s.rows, s.cols, s.pixel_pitch_um, s.r_inner_nominal_um))
        .collect::<ktfield::Result<_>>()?;
    for (k, slice) in slices.iter().enumerate() {
        surface::save_slice(slice, &out.join("sections").join(format!("{}.pgm", section_name(k))))?;
    }
    run.time("gen", t.elapsed().as_secs_f64());

    // fem
    let t = Instant::now();
    let fe: Vec<(KtField<f64>, fem::SolveTiming)> = slices
        .par_iter()
        .map(|slice| fem::solve_slice::<f64>(slice, &cfg.fem.material, &cfg.fem.solve))
        .collect::<ktfield::Result<_>>()?;
    for (k, (field, timing)) in fe.iter().enumerate() {
        save_fem_field(field, Some(timing.clone()), &cfg, &out.join("fem").join(format!("{}_kt.pfm", section_name(k))))?;
    }
    run.time("fem", t.elapsed().as_secs_f64());

    // dataset + train
    let t = Instant::now();
    let mut dc = cfg.dataset.clone();
    dc.n_samples = pc.dataset_samples;
    dc.seed = cfg.seed;
    dc.material = cfg.fem.material;
    dc.solve = cfg.fem.solve;
    dc.pixel_pitch_um = s.pixel_pitch_um;
    dc.r_inner_nominal_um = s.r_inner_nominal_um;
    surrogate::make_dataset(&dc, &out.join("dataset"))?;
    let dataset = surrogate::load_dataset(&out.join("dataset"))?;
    run.time("dataset", t.elapsed().as_secs_f64());
    let mut tc = cfg.surrogate.train.clone();
    tc.seed = cfg.seed;
    tc.epochs = pc.epochs;
    let n_train = dataset.split(surrogate::Split::Train).len();
    tc.batch_size = tc.batch_size.min(n_train.max(1));
    let arch: Architecture = commands::architecture_for(&cfg, dc.patch_size, false);
    let model_path = out.join("model.ktsm");
    let (_, train_s) = commands::train_and_write(&cfg, &dataset, &arch, &tc, &model_path)?;
    run.time("train", train_s);
    let model: SurrogateModel<f32> = surrogate::load_model(&model_path)?;

    // predict
    let t = Instant::now();
    let predicted: Vec<KtField<f64>> = slices
        .iter()
        .map(|slice| surrogate::predict_large(&model, slice).map(|f| f.cast::<f64>()))
        .collect::<ktfield::Result<_>>()?;
    for (k, field) in predicted.iter().enumerate() {
        fem::save_field(
            field,
            &FieldSidecar::for_field(field, "surrogate"),
            &out.join("predict").join(format!("{}_kt.pfm", section_name(k))),
        )?;
    }
    run.time("predict", t.elapsed().as_secs_f64());

    // exceedance, FE against surrogate
    let thresholds = stats::default_thresholds();
    let mut gaps = Vec::new();
    let mut pooled = [vec![0.0; thresholds.len()], vec![0.0; thresholds.len()]];
    let mut volume = 0.0;
    for (k, slice) in slices.iter().enumerate() {
        let a = stats::exceedance(&fe[k].0, slice, &thresholds, fe[k].0.mode)?;
        let b = stats::exceedance(&predicted[k], slice, &thresholds, predicted[k].mode)?;
        let dir = out.join("exceedance");
        stats::write_curve_csv(&dir.join(format!("{}_fem.csv", section_name(k))), &a)?;
        stats::write_curve_csv(&dir.join(format!("{}_surrogate.csv", section_name(k))), &b)?;
        gaps.push(stats::compare_curves(&a, &b)?);
        for i in 0..thresholds.len() {
            pooled[0][i] += a.fractions[i] * a.total_volume;
            pooled[1][i] += b.fractions[i] * b.total_volume;
        }
        volume += a.total_volume;
    }
    let pooled_curves: Vec<stats::ExceedanceCurve> = pooled
        .iter()
        .map(|p| stats::ExceedanceCurve {
            thresholds: thresholds.clone(),
            fractions: p.iter().map(|v| v / volume).collect(),
            total_volume: volume,
        })
        .collect();
    stats::write_curve_csv(&out.join("exceedance").join("pooled_fem.csv"), &pooled_curves[0])?;
    stats::write_curve_csv(&out.join("exceedance").join("pooled_surrogate.csv"), &pooled_curves[1])?;
    fs::write(
        out.join("exceedance").join("pooled.svg"),
        commands::exceedance_svg(&[("FE", &pooled_curves[0]), ("surrogate", &pooled_curves[1])]),
    )?;
    io::write_json(&out.join("exceedance").join("gaps.json"), &gaps)?;

    // clusters on the surrogate maps
    let t = Instant::now();
    let mut reports = Vec::new();
    for (k, slice) in slices.iter().enumerate() {
        let path = out.join("clusters").join(format!("{}.json", section_name(k)));
        let (report, _) = commands::write_cluster_outputs(&predicted[k], slice, &cfg.cluster, &path)?;
        reports.push(report);
    }
    let pooled_report = cluster::pool_reports(&reports)?;
    cluster::write_report_json(&out.join("clusters").join("pooled.json"), &pooled_report)?;
    run.time("clusters", t.elapsed().as_secs_f64());

    // life
    let params = cfg.life.params;
    let features = cluster::stressed_volume_features(&pooled_report, params.kt_eff_quantile)?;
    let prediction = life::predict_life(&features, &cfg.life.condition, &params)?;
    io::write_json(
        &out.join("life.json"),
        &json!({ "features": features, "condition": cfg.life.condition, "params": params, "prediction": prediction }),
    )?;

    let manifest_path = out.join("run_manifest.json");
    if manifest_path.exists() {
        fs::remove_file(&manifest_path)?;
    }
    run.output_dir(out)?;
    run.write(&manifest_path)?;
    Ok(())
}
