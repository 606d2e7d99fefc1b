//! Acceptance suite: one line per criterion with its pinned tolerance.
//!
//! Runs as a plain binary (`harness = false`). The surrogate dataset and the
//! trained model are cached under the cargo target tmp directory, so only the
//! first run pays for FE labelling and training. The process exits non-zero
//! on a FAIL only when `KTFIELD_ACCEPTANCE_STRICT=1`.

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ktfield::cluster::{exceeding_mask, label_clusters, label_mask, ClusterConfig, Connectivity, StressedVolumeFeatures};
use ktfield::fem::{
    assemble, axial_force, reactions, solve, solve_slice, AnalysisMode, KtField, LoadCase, Material, SolveConfig,
};
use ktfield::life::{calibrate, in_band, predict_life, Coupon, LifeModelParams, TestCondition};
use ktfield::seed::splitmix64;
use ktfield::stats::{default_thresholds, exceedance};
use ktfield::surface::{generate_slice, RoughnessParams, SurfaceSlice};
use ktfield::surrogate::{
    evaluate, load_dataset, load_model, make_dataset, predict_large, sample_loss, save_model, train,
    Architecture, Dataset, DatasetConfig, Gradients, Network, Split, SurrogateModel, TrainConfig, TrainReport,
};

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((name.into(), pass, detail));
    }

    fn info(&self, name: &str, detail: String) {
        println!("INFO {name}: {detail}");
    }
}

fn cache_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("cache dir");
    dir
}

/// Cheap deterministic stream for test fields.
struct Stream(u64);

impl Stream {
    fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(1);
        splitmix64(self.0)
    }

    fn unit(&mut self) -> f64 {
        (self.next() >> 11) as f64 / (1u64 << 53) as f64
    }

    fn normal(&mut self) -> f64 {
        let (u, v) = (self.unit().max(1e-300), self.unit());
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    }
}

// ---------------------------------------------------------------- FE

fn tight() -> SolveConfig {
    SolveConfig::default().with_tol(1e-12)
}

fn kirsch_plate(radius: usize) -> SurfaceSlice {
    let w = 20 * radius;
    let c = w as f64 / 2.0;
    let r2 = (radius * radius) as f64;
    SurfaceSlice::from_fn(w, w, 1.0, 0.0, |i, j| {
        let (dz, dx) = (i as f64 + 0.5 - c, j as f64 + 0.5 - c);
        dz * dz + dx * dx >= r2
    })
    .unwrap()
}

fn bore_notch(radius: usize, pitch: f64) -> SurfaceSlice {
    let (rows, cols) = (20 * radius, 12 * radius);
    let r2 = (radius * radius) as f64;
    SurfaceSlice::from_fn(rows, cols, pitch, 1500.0, |i, j| {
        let dz = i as f64 + 0.5 - rows as f64 / 2.0;
        let dr = j as f64 + 0.5;
        dz * dz + dr * dr >= r2
    })
    .unwrap()
}

fn fe_analytic(rep: &mut Report) {
    let t = Instant::now();
    let plate = kirsch_plate(20);
    let cfg = SolveConfig::default().with_mode(AnalysisMode::PlaneStress);
    let (field, timing) = solve_slice::<f64>(&plate, &Material::default(), &cfg).unwrap();
    let max = field.max().unwrap();
    rep.check(
        "1a FE Kirsch hole max K_t = 3.0 ± 6%",
        (max - 3.0).abs() <= 0.06 * 3.0,
        format!(
            "max K_t {max:.4} (hole radius 20 px, plate {}×{} px, {} CG iterations, {:.1} s)",
            plate.rows(),
            plate.cols(),
            timing.cg_iterations,
            t.elapsed().as_secs_f64()
        ),
    );

    let tube = SurfaceSlice::solid(96, 48, 3.0, 1500.0).unwrap();
    let (field, _) = solve_slice::<f64>(&tube, &Material::default(), &SolveConfig::default()).unwrap();
    let dev = field.values().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    rep.check(
        "1b FE smooth hollow cylinder K_t = 1 ± 1e-6",
        dev <= 1e-6,
        format!("max |K_t − 1| = {dev:.2e}"),
    );

    let mut worst: f64 = 0.0;
    for (mode, r_inner) in [(AnalysisMode::Axisymmetric, 150.0), (AnalysisMode::PlaneStress, 0.0)] {
        let slice = SurfaceSlice::solid(20, 12, 2.0, r_inner).unwrap();
        let mat = Material {
            youngs_modulus: 5.0,
            poisson_ratio: 0.3,
        };
        let cfg = SolveConfig {
            load: LoadCase::Traction(2.0),
            ..tight().with_mode(mode)
        };
        let sys = assemble::<f64>(&slice, &mat, &cfg).unwrap();
        let u = solve(&sys, &cfg).unwrap();
        // uniform σ_zz = 2: u_z = σ z / E, u_r = −ν σ r / E (up to a rigid
        // radial shift in plane stress, removed via the pinned node)
        let r_of = |b: usize| r_inner + b as f64 * 2.0;
        let pinned = sys.mesh.nodes().iter().position(|&(a, _)| a == 0).unwrap();
        let shift = match mode {
            AnalysisMode::Axisymmetric => 0.0,
            AnalysisMode::PlaneStress => u.u_r(pinned) + 0.3 * 2.0 * r_of(sys.mesh.nodes()[pinned].1) / 5.0,
        };
        for (k, &(a, b)) in sys.mesh.nodes().iter().enumerate() {
            let z = a as f64 * 2.0;
            let ez = (u.u_z(k) - 2.0 * z / 5.0).abs() / (2.0 * 40.0 / 5.0);
            let er = (u.u_r(k) - shift + 0.3 * 2.0 * r_of(b) / 5.0).abs() / (0.3 * 2.0 * (r_inner + 24.0) / 5.0);
            worst = worst.max(ez).max(er);
        }
        let (field, _) = solve_slice::<f64>(&slice, &mat, &cfg).unwrap();
        worst = worst.max(field.values().map(|v| (v - 1.0).abs()).fold(0.0, f64::max));
    }
    rep.check(
        "1c FE patch test exact to 1e-10",
        worst <= 1e-10,
        format!("max relative deviation {worst:.2e} (both modes)"),
    );
}

fn rough_slice(seed: u64, rows: usize, cols: usize) -> SurfaceSlice {
    let p = RoughnessParams {
        rms_amplitude: 12.0,
        correlation_length: 15.0,
        mean_bore_offset: 100.0,
        seed,
    };
    generate_slice(&p, rows, cols, 3.0, 1500.0).unwrap()
}

fn fe_invariants(rep: &mut Report) {
    let slice = rough_slice(3, 128, 96);
    let base = solve_slice::<f64>(&slice, &Material::default(), &tight()).unwrap().0;
    let steel = Material {
        youngs_modulus: 200e9,
        ..Material::default()
    };
    let loaded = SolveConfig {
        load: LoadCase::Traction(400e6),
        ..tight()
    };
    let mut dev: f64 = 0.0;
    for (mat, cfg) in [(steel, tight()), (Material::default(), loaded), (steel, loaded)] {
        let f = solve_slice::<f64>(&slice, &mat, &cfg).unwrap().0;
        for (a, b) in base.values().zip(f.values()) {
            dev = dev.max((a - b).abs());
        }
    }
    rep.check(
        "2a FE K_t invariant under E and load scaling (≤ 1e-9)",
        dev <= 1e-9,
        format!("max field difference {dev:.2e}"),
    );

    let mut worst: f64 = 0.0;
    for load in [LoadCase::Traction(3.0), LoadCase::Displacement(0.05)] {
        let cfg = SolveConfig { load, ..tight() };
        let sys = assemble::<f64>(&slice, &Material::default(), &cfg).unwrap();
        let u = solve(&sys, &cfg).unwrap();
        let applied = axial_force(&sys, &u);
        let support: f64 = reactions(&sys, &u)
            .into_iter()
            .filter(|(d, _)| sys.bottom_dofs.contains(d))
            .map(|(_, f)| f)
            .sum();
        worst = worst.max((support + applied).abs() / applied.abs());
    }
    rep.check(
        "2b FE axial reaction balances applied force (≤ 1e-8 relative)",
        worst <= 1e-8,
        format!("max imbalance {worst:.2e} (traction and displacement control)"),
    );

    let cfg = SolveConfig {
        load: LoadCase::Displacement(0.05),
        ..tight()
    };
    let a = solve_slice::<f64>(&slice, &Material::default(), &cfg).unwrap().0;
    let b = solve_slice::<f64>(&slice.mirrored_axial(), &Material::default(), &cfg).unwrap().0;
    let rows = slice.rows();
    let mut sym: f64 = 0.0;
    for i in 0..rows {
        for j in 0..slice.cols() {
            if let (Some(x), Some(y)) = (a.get(i, j), b.get(rows - 1 - i, j)) {
                sym = sym.max((x - y).abs());
            }
        }
    }
    rep.check(
        "property: axial mirror symmetry (≤ 1e-8, displacement control)",
        sym <= 1e-8,
        format!("max |K_t − mirrored K_t| = {sym:.2e}"),
    );

    let t = Instant::now();
    let coarse = solve_slice::<f64>(&bore_notch(10, 3.0), &Material::default(), &SolveConfig::default())
        .unwrap()
        .0
        .max()
        .unwrap();
    let fine = solve_slice::<f64>(&bore_notch(20, 1.5), &Material::default(), &SolveConfig::default())
        .unwrap()
        .0
        .max()
        .unwrap();
    let change = (fine - coarse).abs() / coarse;
    rep.check(
        "property: bore notch r = 10 px max K_t in [2.0, 3.5]",
        (2.0..=3.5).contains(&coarse),
        format!("max K_t {coarse:.4}"),
    );
    rep.check(
        "property: mesh objectivity, max K_t change < 5% at half pitch",
        change < 0.05,
        format!(
            "30 µm notch: {coarse:.4} at 3 µm, {fine:.4} at 1.5 µm, change {:.1}% ({:.1} s)",
            100.0 * change,
            t.elapsed().as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------- surrogate

fn param(net: &mut Network<f64>, layer: usize, bias: bool, i: usize) -> &mut f64 {
    let l = &mut net.layers[layer];
    if bias {
        &mut l.bias[i]
    } else {
        &mut l.weight[i]
    }
}

fn gradient_check(rep: &mut Report) {
    let arch = Architecture::small(16, &[3, 4, 4]);
    let mut net = Network::<f64>::init(&arch, 77).unwrap();
    // generic point: zero biases leave units exactly on the ReLU kink
    let mut s = Stream(5);
    for l in &mut net.layers {
        l.bias.iter_mut().for_each(|b| *b = 0.1 * s.normal());
    }
    let n = 16 * 16;
    let x: Vec<f64> = (0..n).map(|_| if s.unit() < 0.6 { 1.0 } else { -1.0 }).collect();
    let target: Vec<f64> = (0..n).map(|_| s.normal()).collect();
    let mask: Vec<bool> = (0..n).map(|_| s.unit() < 0.8).collect();
    let loss = |net: &Network<f64>| -> f64 {
        let y = net.forward(&x).unwrap();
        let m = mask.iter().filter(|&&m| m).count() as f64;
        (0..n).filter(|&k| mask[k]).map(|k| (y[k] - target[k]).powi(2)).sum::<f64>() / m
    };

    let trace = net.forward_trace(&x).unwrap();
    let m = mask.iter().filter(|&&m| m).count() as f64;
    let out = trace.acts.last().unwrap();
    let d_out: Vec<f64> = (0..n)
        .map(|k| if mask[k] { 2.0 * (out[k] - target[k]) / m } else { 0.0 })
        .collect();
    let mut g = Gradients::zeros_like(&net);
    net.backward(&trace, &d_out, &mut g);

    // the loss is piecewise quadratic in any one parameter, so a central
    // difference is exact unless the step moves a pre-activation across zero
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut worst_at = String::new();
    let mut tensors = 0;
    for l in 0..net.layers.len() {
        for bias in [false, true] {
            let len = if bias { net.layers[l].bias.len() } else { net.layers[l].weight.len() };
            let mut num = 0.0;
            let mut den_a = 0.0;
            let mut den_b = 0.0;
            for i in 0..len {
                let mut probe = net.clone();
                *param(&mut probe, l, bias, i) += h;
                let up = loss(&probe);
                *param(&mut probe, l, bias, i) -= 2.0 * h;
                let down = loss(&probe);
                let fd = (up - down) / (2.0 * h);
                let an = if bias { g.layers[l].bias[i] } else { g.layers[l].weight[i] };
                num += (fd - an) * (fd - an);
                den_a += an * an;
                den_b += fd * fd;
            }
            let r = num.sqrt() / f64::max(den_a, den_b).sqrt().max(1e-300);
            if r > worst {
                worst = r;
                worst_at = format!("layer {l} {}", if bias { "bias" } else { "weight" });
            }
            tensors += 1;
        }
    }
    rep.check(
        "4  gradient check, 3+3 layers, every tensor within 1e-4 relative",
        worst <= 1e-4,
        format!("{tensors} tensors, worst relative error {worst:.2e} at {worst_at} (central differences, step 1e-6)"),
    );
}

fn trained_model(dataset: &Dataset, rep: &Report) -> (SurrogateModel<f32>, TrainReport) {
    let dir = cache_dir();
    let (model_path, report_path) = (dir.join("model.ktsm"), dir.join("train_report.json"));
    let (arch, config) = (Architecture::default(), TrainConfig::default());
    let key = serde_json::to_string(&(&dataset.hash, &arch, &config)).unwrap();
    let key_path = dir.join("model.key");
    let cached = fs::read_to_string(&key_path).is_ok_and(|k| k == key);
    if let (true, Ok(model), Ok(text)) = (cached, load_model::<f32>(&model_path), fs::read_to_string(&report_path)) {
        if model.training_meta.dataset_hash == dataset.hash {
            rep.info("3  surrogate model", format!("reusing cached {}", model_path.display()));
            return (model, serde_json::from_str(&text).unwrap());
        }
    }
    let t = Instant::now();
    let (model, report) = train(dataset, &arch, &config).unwrap();
    rep.info(
        "3  surrogate training",
        format!("{} epochs in {:.0} s", report.history.len(), t.elapsed().as_secs_f64()),
    );
    save_model(&model, &model_path).unwrap();
    fs::write(&report_path, serde_json::to_string_pretty(&report).unwrap()).unwrap();
    fs::write(&key_path, key).unwrap();
    (model, report)
}

fn surrogate_accuracy(rep: &mut Report) -> SurrogateModel<f32> {
    let dir = cache_dir().join("dataset");
    let config = DatasetConfig::default();
    let t = Instant::now();
    let summary = make_dataset(&config, &dir).unwrap();
    rep.info(
        "3  dataset",
        format!(
            "{} computed, {} cached, {} failed ({:.0} s)",
            summary.computed,
            summary.skipped,
            summary.failed,
            t.elapsed().as_secs_f64()
        ),
    );
    let dataset = load_dataset(&dir).unwrap();
    let n = dataset.samples.len();
    let maxes: Vec<f64> = dataset.manifest.samples.iter().map(|e| e.max_kt).collect();
    let first: Vec<f64> = maxes.iter().take(200).copied().collect();
    let (lo, hi) = (
        first.iter().copied().fold(f64::INFINITY, f64::min),
        first.iter().copied().fold(0.0, f64::max),
    );
    rep.check(
        "property: per-sample max K_t spans [1.2, 3.0] (first 200 samples)",
        lo <= 1.2 && hi >= 3.0,
        format!("span [{lo:.3}, {hi:.3}]"),
    );

    let (model, report) = trained_model(&dataset, rep);
    let test = dataset.split(Split::Test);
    let m = evaluate(&model, &test, &config).unwrap();
    rep.check(
        "3  surrogate held-out mean relative error < 5% (K_t ≥ 0.5, ≥ 500 patches)",
        n >= 500 && m.mean_relative_error < 0.05,
        format!(
            "{n} patches ({} train, {} val, {} test); mean {:.2}%, max {:.1}%, {:.1}% of pixels over 5%, MAE {:.4}",
            report.n_train,
            report.n_val,
            m.n_patches,
            100.0 * m.mean_relative_error,
            100.0 * m.max_relative_error,
            100.0 * m.fraction_over_5_percent,
            m.mean_absolute_error
        ),
    );
    rep.check(
        "3  surrogate exceedance-curve gap ≤ 0.05 at every threshold",
        m.exceedance_gap_pooled <= 0.05,
        format!(
            "pooled gap {:.4}, worst single patch {:.4}",
            m.exceedance_gap_pooled, m.exceedance_gap_worst
        ),
    );

    let h = &report.history;
    let third = (h.len() / 3).max(1);
    let early = h[..third].iter().map(|e| e.val_loss).sum::<f64>() / third as f64;
    let late = h[h.len() - third..].iter().map(|e| e.val_loss).sum::<f64>() / third as f64;
    let best = h.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    rep.check(
        "3  validation loss decreases over training",
        best < report.initial_val_loss && late < early,
        format!(
            "initial {:.4}, first-third mean {early:.4}, last-third mean {late:.4}, best {best:.4} at epoch {}",
            report.initial_val_loss, report.best_epoch
        ),
    );
    rep.check(
        "3  first epoch lowers the training loss",
        h[0].train_loss < report.initial_train_loss,
        format!("{:.4} → {:.4}", report.initial_train_loss, h[0].train_loss),
    );

    // memorization with the default architecture on one real patch
    let one = dataset.split(Split::Train)[0].clone();
    let single = Dataset::from_samples(vec![one.clone()], config.clone());
    let cfg = TrainConfig {
        batch_size: 1,
        epochs: 500,
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let (fit, _) = train(&single, &Architecture::default(), &cfg).unwrap();
    let mse = sample_loss(&fit, &one).unwrap();
    rep.check(
        "3  overfit sanity: one patch, 500 epochs, masked MSE < 1e-3",
        mse < 1e-3,
        format!("MSE {mse:.2e} K_t² ({:.0} s)", t.elapsed().as_secs_f64()),
    );
    model
}

fn tile_phase(rep: &mut Report, model: &SurrogateModel<f32>) {
    let smooth = |rows: usize| SurfaceSlice::from_fn(rows, 128, 3.0, 1500.0, |_, j| j >= 33).unwrap();
    let shift = 40;
    let a = predict_large(model, &smooth(600)).unwrap();
    let b = predict_large(model, &smooth(600 + shift)).unwrap();
    let mut dev: f64 = 0.0;
    for i in 100..500 {
        for j in 33..128 {
            let (x, y) = (a.get(i, j).unwrap(), b.get(i + shift, j).unwrap());
            dev = dev.max((f64::from(x) - f64::from(y)).abs());
        }
    }
    rep.check(
        "property: tile-phase translation on a smooth slice (≤ 1e-6)",
        dev <= 1e-6,
        format!("max interior difference {dev:.2e} between tile phases shifted by {shift} rows"),
    );
}

fn speedup(rep: &mut Report, model: &SurrogateModel<f32>) {
    let (rows, cols, n) = (1024, 256, 2);
    let mut fe = 0.0;
    let mut sm = 0.0;
    for k in 0..n {
        let p = RoughnessParams {
            rms_amplitude: 10.0,
            correlation_length: 20.0,
            mean_bore_offset: 100.0,
            seed: 900 + k,
        };
        let slice = generate_slice(&p, rows, cols, 3.0, 1500.0).unwrap();
        let t = Instant::now();
        solve_slice::<f64>(&slice, &Material::default(), &SolveConfig::default()).unwrap();
        fe += t.elapsed().as_secs_f64();
        let t = Instant::now();
        predict_large(model, &slice).unwrap();
        sm += t.elapsed().as_secs_f64();
    }
    rep.check(
        "5  speedup: surrogate ≤ 1/100 of FE wall time (1024×256)",
        sm * 100.0 <= fe,
        format!(
            "{n} slices, FE {fe:.2} s, surrogate {sm:.3} s, ratio {:.0}×, {} threads",
            fe / sm,
            rayon::current_num_threads()
        ),
    );
}

// ---------------------------------------------------------------- statistics

fn exceedance_props(rep: &mut Report) {
    let mut ok = true;
    let mut worst_count: f64 = 0.0;
    for seed in 0..20 {
        let slice = rough_slice(seed, 96, 64);
        let mut s = Stream(seed);
        let field = KtField::from_slice_fn(&slice, AnalysisMode::Axisymmetric, |_, _| 4.0 * s.unit());
        let c = exceedance(&field, &slice, &default_thresholds(), AnalysisMode::Axisymmetric).unwrap();
        ok &= c.fractions.iter().all(|f| (0.0..=1.0).contains(f));
        ok &= c.fractions.windows(2).all(|w| w[1] <= w[0]);

        let plane = KtField::from_slice_fn(&slice, AnalysisMode::PlaneStress, |i, j| field.get(i, j).unwrap());
        let cp = exceedance(&plane, &slice, &default_thresholds(), AnalysisMode::PlaneStress).unwrap();
        let values: Vec<f64> = plane.values().collect();
        for (t, f) in cp.thresholds.iter().zip(&cp.fractions) {
            let count = values.iter().filter(|&&v| v > *t).count() as f64 / values.len() as f64;
            worst_count = worst_count.max((count - f).abs());
        }
    }
    rep.check(
        "6a exceedance fractions in [0, 1] and non-increasing",
        ok,
        "20 random fields on rough slices".into(),
    );
    rep.check(
        "6b plane-mode exceedance equals exact counting",
        worst_count <= 1e-15,
        format!("max difference {worst_count:.1e}"),
    );

    // two material pixels at r = 2 and 4 µm; only the outer one exceeds
    let slice = SurfaceSlice::from_fn(8, 8, 2.0, 1.0, |i, j| i == 0 && j < 2).unwrap();
    let field = KtField::from_slice_fn(&slice, AnalysisMode::Axisymmetric, |_, j| if j == 1 { 3.0 } else { 1.0 });
    let c = exceedance(&field, &slice, &[2.0], AnalysisMode::Axisymmetric).unwrap();
    rep.check(
        "6c axisymmetric two-pixel case equals 2/3 exactly",
        c.fractions[0] == 2.0 / 3.0,
        format!("fraction {:?}", c.fractions[0]),
    );
}

/// Breadth-first flood fill, labels numbered by first pixel in scan order.
fn flood_fill(mask: &[bool], rows: usize, cols: usize, conn: Connectivity) -> (Vec<u32>, usize) {
    let mut labels = vec![0u32; mask.len()];
    let mut count = 0;
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        count += 1;
        labels[start] = count as u32;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (i, j) = ((p / cols) as isize, (p % cols) as isize);
            for di in -1..=1isize {
                for dj in -1..=1isize {
                    if (di, dj) == (0, 0) || (conn == Connectivity::Four && di != 0 && dj != 0) {
                        continue;
                    }
                    let (ni, nj) = (i + di, j + dj);
                    if ni < 0 || nj < 0 || ni >= rows as isize || nj >= cols as isize {
                        continue;
                    }
                    let q = ni as usize * cols + nj as usize;
                    if mask[q] && labels[q] == 0 {
                        labels[q] = count as u32;
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    (labels, count)
}

fn adversarial(n: usize) -> Vec<Vec<bool>> {
    let mut out = vec![vec![false; n * n], vec![true; n * n]];
    out.push((0..n * n).map(|p| (p / n + p % n) % 2 == 0).collect()); // checkerboard
    out.push((0..n * n).map(|p| (p / n + p % n) % 3 == 0).collect()); // diagonal stripes
    out.push((0..n * n).map(|p| (p / n) % 2 == 0 || p % n == n - 1).collect()); // serpentine
    out.push((0..n * n).map(|p| p % n % 2 == 0 || p / n == n - 1).collect()); // comb joined at the end
    out.push((0..n * n).map(|p| (p / n).abs_diff(p % n) == 0 || (p / n) + (p % n) == n - 1).collect()); // X
    let mut spiral = vec![false; n * n];
    let (mut top, mut left, mut bottom, mut right) = (0, 0, n - 1, n - 1);
    while top <= bottom && left <= right {
        (left..=right).for_each(|j| spiral[top * n + j] = true);
        (top..=bottom).for_each(|i| spiral[i * n + right] = true);
        (left..=right).for_each(|j| spiral[bottom * n + j] = true);
        if left + 2 <= right {
            (top + 2..=bottom).for_each(|i| spiral[i * n + left] = true);
        }
        if right < 4 || bottom < 4 {
            break;
        }
        top += 2;
        left += 2;
        bottom -= 2;
        right -= 2;
    }
    out.push(spiral);
    out
}

fn cluster_oracle(rep: &mut Report) {
    let n = 64;
    let mut fields: Vec<Vec<bool>> = Vec::new();
    let mut s = Stream(2024);
    for k in 0..1000 {
        let density = 0.2 + 0.6 * (k as f64 / 999.0);
        fields.push((0..n * n).map(|_| s.unit() < density).collect());
    }
    fields.extend(adversarial(n));
    let mut mismatches = 0;
    for mask in &fields {
        for conn in [Connectivity::Four, Connectivity::Eight] {
            let uf = label_mask(mask, n, n, conn);
            let (ff, count) = flood_fill(mask, n, n, conn);
            if uf.labels != ff || uf.count != count {
                mismatches += 1;
            }
        }
    }
    rep.check(
        "7a union-find labels identical to flood-fill oracle",
        mismatches == 0,
        format!("{} fields × 2 connectivities, {mismatches} mismatches", fields.len()),
    );

    let mut monotone = true;
    for seed in 0..10 {
        let slice = rough_slice(seed + 50, 96, 64);
        let mut st = Stream(seed);
        let field = KtField::from_slice_fn(&slice, AnalysisMode::Axisymmetric, |_, _| 1.0 + 2.5 * st.unit());
        let mut prev: Option<(f64, usize, Vec<u32>)> = None;
        for t in [1.5, 2.0, 2.5, 3.0, 3.4] {
            let cfg = ClusterConfig {
                threshold: t,
                ..ClusterConfig::default()
            };
            let r = label_clusters(&field, &slice, &cfg).unwrap();
            let pixels: usize = r.clusters.iter().map(|c| c.size_pixels).sum();
            let mask = exceeding_mask(&field, &slice, &cfg);
            let labels = label_mask(&mask, slice.rows(), slice.cols(), cfg.connectivity).labels;
            if let Some((v, px, lower)) = &prev {
                monotone &= r.total_stressed_volume <= *v && pixels <= *px;
                // each cluster lies inside one cluster of the lower threshold
                let mut parent: BTreeMap<u32, u32> = BTreeMap::new();
                for (p, &l) in labels.iter().enumerate() {
                    if l != 0 {
                        monotone &= lower[p] != 0 && *parent.entry(l).or_insert(lower[p]) == lower[p];
                    }
                }
            }
            prev = Some((r.total_stressed_volume, pixels, labels));
        }
    }
    rep.check(
        "7b cluster threshold monotonicity",
        monotone,
        "10 fields, thresholds 1.5..3.4: volume, pixel count and nesting".into(),
    );
}

// ---------------------------------------------------------------- life

fn features(v: f64, kt: f64) -> StressedVolumeFeatures {
    StressedVolumeFeatures {
        total_stressed_volume: v,
        p95_cluster_volume: v / 5.0,
        number_density: 2.0,
        max_kt: kt * 1.15,
        kt_eff: kt,
        kt_eff_quantile: 0.95,
        volume_floor: 50.0,
    }
}

fn coupons(truth: &LifeModelParams, n: usize, noise: f64, s: &mut Stream, tag: &str) -> Vec<Coupon> {
    (0..n)
        .map(|k| {
            let condition = TestCondition {
                nominal_stress_amplitude: [350.0, 450.0, 550.0, 650.0, 750.0][k % 5],
                stress_ratio: 0.1,
                temperature: "ambient".into(),
            };
            let f = features(10f64.powf(3.0 + 3.0 * s.unit()), 2.5 + s.unit());
            let n_true = predict_life(&f, &condition, truth).unwrap().cycles_to_failure;
            Coupon {
                coupon_id: format!("{tag}{k:02}"),
                condition,
                features: f,
                observed_cycles: Some(n_true * (noise * s.normal()).exp()),
            }
        })
        .collect()
}

fn life(rep: &mut Report) {
    let truth = LifeModelParams {
        c: 5e13,
        b: 3.3,
        m: 7.0,
        v_ref: 1e4,
        kt_eff_quantile: 0.95,
    };
    let mut s = Stream(31);
    let exact = calibrate(&coupons(&truth, 12, 0.0, &mut s, "x"), truth.v_ref, 0.95).unwrap();
    let err = [
        (exact.params.c / truth.c - 1.0).abs(),
        (exact.params.b / truth.b - 1.0).abs(),
        (exact.params.m / truth.m - 1.0).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    rep.check(
        "8a life model exact recovery from noiseless data (≤ 1e-6)",
        err <= 1e-6,
        format!("max relative parameter error {err:.2e}"),
    );

    let fit = calibrate(&coupons(&truth, 40, 0.1, &mut s, "c"), truth.v_ref, 0.95).unwrap();
    let held = coupons(&truth, 40, 0.1, &mut s, "h");
    let inside = held
        .iter()
        .filter(|c| {
            let p = predict_life(&c.features, &c.condition, &fit.params).unwrap().cycles_to_failure;
            in_band(c.observed_cycles.unwrap(), p)
        })
        .count();
    let frac = inside as f64 / held.len() as f64;
    rep.check(
        "8b life model: ≥ 80% of held-out coupons inside the 2× band (10% noise, 40 coupons)",
        frac >= 0.8,
        format!(
            "{:.0}% inside (synthetic self-consistency check; fitted b {:.3}, m {:.2})",
            100.0 * frac,
            fit.params.b,
            fit.params.m
        ),
    );
}

// ---------------------------------------------------------------- reproducibility

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn comparable(path: &Path) -> Vec<u8> {
    let bytes = fs::read(path).unwrap();
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        ktfield::io::strip_timing(&mut v);
        return serde_json::to_vec(&v).unwrap();
    }
    bytes
}

fn reproducibility(rep: &mut Report) {
    let root = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let mut ok = true;
    for name in ["a", "b"] {
        let status = Command::new(env!("CARGO_BIN_EXE_ktfield"))
            .args(["pipeline", "--sections", "4", "--seed", "7", "--out"])
            .arg(root.path().join(name))
            .status()
            .unwrap();
        ok &= status.success();
    }
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let (fa, fb) = (files(&a), files(&b));
    let mut differing = Vec::new();
    if ok && fa == fb {
        for f in &fa {
            if comparable(&a.join(f)) != comparable(&b.join(f)) {
                differing.push(f.display().to_string());
            }
        }
    }
    rep.check(
        "9  pipeline --sections 4 --seed 7 twice: identical artifacts excluding timings",
        ok && fa == fb && differing.is_empty(),
        format!(
            "{} files compared, {} differ{} ({:.0} s)",
            fa.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) },
            t.elapsed().as_secs_f64()
        ),
    );
}

fn main() {
    let mut rep = Report { lines: Vec::new() };
    let t = Instant::now();
    fe_analytic(&mut rep);
    fe_invariants(&mut rep);
    gradient_check(&mut rep);
    let model = surrogate_accuracy(&mut rep);
    speedup(&mut rep, &model);
    tile_phase(&mut rep, &model);
    exceedance_props(&mut rep);
    cluster_oracle(&mut rep);
    life(&mut rep);
    reproducibility(&mut rep);

    let failed: Vec<&str> = rep.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    println!(
        "\n{} checks, {} passed, {} failed ({:.0} s)",
        rep.lines.len(),
        rep.lines.len() - failed.len(),
        failed.len(),
        t.elapsed().as_secs_f64()
    );
    if !failed.is_empty() && std::env::var("KTFIELD_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
