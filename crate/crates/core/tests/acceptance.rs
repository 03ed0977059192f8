//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and exits
//! nonzero if any failed.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interp3d::camera::{rotation_matrix, Keypoints2D};
use interp3d::dataset::Dataset;
use interp3d::eval::{self, Predictor};
use interp3d::fit::{fit_keypoints, FitConfig};
use interp3d::net::{
    finetune_through_projection, train_interpreter, train_refiner, DenseNet, Interpreter,
    Normalizer, TrainConfig, WeightsFile,
};
use interp3d::synth::{generate_dataset, sample_params, Range};
use interp3d::{
    compose_skeleton, project_skeleton, projection_jacobian, BaseShapeSet, HeatmapStack,
    ParamVector, SamplerConfig, StructuralParams,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn chair() -> BaseShapeSet {
    BaseShapeSet::bundled("chair").unwrap()
}

fn random_params(rng: &mut ChaCha8Rng, k: usize) -> ParamVector {
    ParamVector {
        alpha_free: (1..k).map(|_| rng.random_range(-1.0..1.0)).collect(),
        azimuth: rng.random_range(0.0..std::f64::consts::TAU),
        elevation: rng.random_range(-0.5..1.0),
        tilt: rng.random_range(-0.3..0.3),
        t: [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)],
        inv_f: rng.random_range(0.01..0.8),
    }
}

fn central_difference(s: &ParamVector, bases: &BaseShapeSet, h: f64) -> DMatrix<f64> {
    let base = s.to_vec();
    let k = bases.num_bases();
    let n = bases.num_keypoints();
    let mut jac = DMatrix::zeros(2 * n, base.len());
    for c in 0..base.len() {
        let (mut plus, mut minus) = (base.clone(), base.clone());
        plus[c] += h;
        minus[c] -= h;
        let xp = project_skeleton(&ParamVector::from_slice(&plus, k).unwrap(), bases).unwrap();
        let xm = project_skeleton(&ParamVector::from_slice(&minus, k).unwrap(), bases).unwrap();
        for i in 0..n {
            for a in 0..2 {
                jac[(2 * i + a, c)] = (xp.coords[(a, i)] - xm.coords[(a, i)]) / (2.0 * h);
            }
        }
    }
    jac
}

fn c1_jacobian() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let models = [chair(), BaseShapeSet::bundled("car").unwrap()];
    let mut worst = 0.0f64;
    for i in 0..200 {
        let bases = &models[i % 2];
        let s = random_params(&mut rng, bases.num_bases());
        let analytic = projection_jacobian(&s, bases).unwrap();
        let numeric = central_difference(&s, bases, 1e-5);
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            worst = worst.max((a - n).abs() / a.abs().max(1.0));
        }
    }
    outcome(worst < 1e-5, format!("200 configurations, max relative error {worst:.2e}"))
}

fn c2_parallel_limit() -> Outcome {
    let bases = chair();
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut exact = true;
    let mut worst_cont = 0.0f64;
    for _ in 0..100 {
        let mut s = random_params(&mut rng, 4);
        s.inv_f = 0.0;
        let (alpha, cam) = s.decode().unwrap();
        let y = compose_skeleton(&alpha, &bases).unwrap();
        let r = rotation_matrix(&cam);
        let x = project_skeleton(&s, &bases).unwrap();
        for (i, col) in y.coords.column_iter().enumerate() {
            let p = r * col + cam.t;
            exact &= x.coords[(0, i)] == p.x && x.coords[(1, i)] == p.y;
        }
        let mut near = s.clone();
        near.inv_f = 1e-6;
        let xn = project_skeleton(&near, &bases).unwrap();
        worst_cont = worst_cont.max((xn.coords - &x.coords).abs().max());
    }
    outcome(
        exact && worst_cont < 1e-4,
        format!("inv_f = 0 exact: {exact}; max deviation at inv_f = 1e-6: {worst_cont:.2e}"),
    )
}

fn normalized_rmse(alpha_hat: &[f64], alpha_true: &[f64], bases: &BaseShapeSet) -> f64 {
    let a = compose_skeleton(&StructuralParams::from_free(alpha_hat), bases).unwrap();
    let b = compose_skeleton(&StructuralParams::from_free(alpha_true), bases).unwrap();
    eval::rmse_3d(&a, &b).unwrap()
}

fn c3_round_trip() -> Outcome {
    let bases = chair();
    let cfg = SamplerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut good = 0;
    for i in 0..100 {
        let s = sample_params(&cfg, &bases, &mut rng).unwrap();
        let x = project_skeleton(&s, &bases).unwrap();
        let fit = fit_keypoints(&x, &bases, &FitConfig { seed: i, ..FitConfig::default() }).unwrap();
        if normalized_rmse(&fit.s_hat.alpha_free, &s.alpha_free, &bases) < 1e-3 {
            good += 1;
        }
    }
    outcome(good >= 95, format!("{good}/100 clean instances recovered to RMSE < 1e-3"))
}

fn c4_noise_sweep(bases: &BaseShapeSet) -> (Outcome, Interpreter) {
    let started = Instant::now();
    let train = generate_dataset(&SamplerConfig { seed: 1, ..Default::default() }, bases, 5000).unwrap();
    let test = generate_dataset(&SamplerConfig { seed: 2, ..Default::default() }, bases, 1000).unwrap();
    let (model, _) = train_interpreter(&train, &TrainConfig::interpreter(), None).unwrap();
    drop(train);
    let train_secs = started.elapsed().as_secs_f64();

    let levels = eval::DEFAULT_NOISE_LEVELS;
    let sweep = eval::noise_sweep(&test, bases, &FitConfig::default(), &model, &levels, 0).unwrap();
    let get = |p: f64, m| sweep.row(p, m).unwrap().mean_rmse_3d;
    use eval::Method::{Fit, Net};
    let high_noise = [0.3, 0.4].iter().all(|&p| get(p, Net) < get(p, Fit));
    let clean = get(0.0, Fit) <= 2.0 * get(0.0, Net);
    let floor = get(0.0, Net) < 0.05;

    // paper-scale latency on an untrained network of the full widths
    let dims = [test[0].heatmaps.len(), 2048, 512, 128, ParamVector::dim_for(4)];
    let big = Interpreter {
        net: DenseNet::init(&dims, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(),
        normalizer: Normalizer { mean: vec![0.0; dims[4]], std: vec![1.0; dims[4]] },
        num_bases: 4,
    };
    let t = Instant::now();
    for s in test.iter().take(20) {
        big.predict(&s.heatmaps).unwrap();
    }
    let latency_ms = t.elapsed().as_secs_f64() * 1000.0 / 20.0;

    let mut detail = String::new();
    for p in levels {
        detail.push_str(&format!("p={p}: fit {:.3e} net {:.4}; ", get(p, Fit), get(p, Net)));
    }
    detail.push_str(&format!(
        "net < fit at p >= 0.3: {high_noise}; fit within 2x of net at p = 0: {clean}; net p=0 RMSE < 0.05: {floor}; \
         training {train_secs:.0}s (budget 7200s); paper-scale inference {latency_ms:.1} ms/sample (soft target 50); \
         monotonicity violations (soft): {}",
        if sweep.violations.is_empty() { "none".to_string() } else { sweep.violations.join(" | ") }
    ));
    let pass = high_noise && clean && floor && train_secs <= 7200.0;
    (outcome(pass, detail), model)
}

fn c5_finetune(bases: &BaseShapeSet, model: &Interpreter) -> Outcome {
    // the stand-in for real images: stronger perspective, wider tilt, noisy heatmaps
    let shifted = SamplerConfig {
        inv_f: Range::new(0.4, 1.0),
        tilt: Range::new(-0.4, 0.4),
        noise: 0.1,
        seed: 21,
        ..Default::default()
    };
    let data2d = generate_dataset(&shifted, bases, 1000).unwrap();
    let held_out = generate_dataset(&SamplerConfig { seed: 22, ..shifted }, bases, 300).unwrap();
    let (tuned, report) =
        finetune_through_projection(&model, &data2d, bases, &TrainConfig::finetune()).unwrap();
    let before = eval::evaluate(&held_out, bases, Predictor::Net(&model), None, 0.0, 0).unwrap();
    let after = eval::evaluate(&held_out, bases, Predictor::Net(&tuned), None, 0.0, 0).unwrap();
    let (r0, r1) = (before.mean_reproj_2d(), after.mean_reproj_2d());
    let (a0, a1) = (before.recall_at(0.15), after.recall_at(0.15));
    outcome(
        r1 < r0 && a1 >= a0,
        format!(
            "held-out 2D reprojection {r0:.5} -> {r1:.5}; 3D recall at 0.15 {a0:.4} -> {a1:.4}; kept epoch {}",
            report.best_epoch
        ),
    )
}

fn mse(a: &HeatmapStack, b: &HeatmapStack) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / a.data.len() as f64
}

fn c6_refiner(bases: &BaseShapeSet) -> Outcome {
    let train = generate_dataset(&SamplerConfig { seed: 1, ..Default::default() }, bases, 2000).unwrap();
    let test = generate_dataset(&SamplerConfig { seed: 3, ..Default::default() }, bases, 100).unwrap();
    let (refiner, _) = train_refiner(&train, &TrainConfig { epochs: 15, ..TrainConfig::refiner() }).unwrap();
    drop(train);
    let p = 0.2;
    let (mut corrupted, mut refined) = (0.0, 0.0);
    for (i, s) in test.iter().enumerate() {
        let c = eval::corrupt_for_eval(&s.heatmaps, p, 0, i);
        corrupted += mse(&c, &s.heatmaps);
        refined += mse(&refiner.refine(&c).unwrap(), &s.heatmaps);
    }
    let n = test.len() as f64;
    let fit = FitConfig::default();
    let with = eval::evaluate(&test, bases, Predictor::Fit(&fit), Some(&refiner), p, 0).unwrap();
    let without = eval::evaluate(&test, bases, Predictor::Fit(&fit), None, p, 0).unwrap();
    let (w, wo) = (with.mean_rmse_3d(), without.mean_rmse_3d());
    outcome(
        refined < corrupted && w < wo,
        format!(
            "p = 0.2 heatmap MSE {:.5} corrupted vs {:.5} refined; fit 3D RMSE {wo:.3e} raw vs {w:.4} refined",
            corrupted / n,
            refined / n
        ),
    )
}

fn kp(points: &[[f64; 2]]) -> Keypoints2D {
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    Keypoints2D::new(nalgebra::Matrix2xX::from_column_slice(&flat))
}

fn c7_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let mut worst = 0.0f64;
    // degrees pass through radians, so allow for that round trip
    let mut worst_angle = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..20);
        // quarter-unit grid coordinates make exact threshold hits common
        let mut pts = || -> Vec<[f64; 2]> {
            (0..n).map(|_| [rng.random_range(-8..8) as f64 * 0.25, rng.random_range(-8..8) as f64 * 0.25]).collect()
        };
        let (p, g) = (pts(), pts());
        let dist: Vec<f64> = p.iter().zip(&g).map(|(a, b)| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).collect();
        let norm = rng.random_range(0.5..2.0);
        let t = rng.random_range(0.0..2.0);
        let stds: Vec<f64> = (0..n).map(|_| rng.random_range(1..8) as f64 * 0.25).collect();
        let bound = rng.random_range(0.5..6.0);

        let mut hits = 0;
        let mut pcp_hits = 0;
        let mut ae = 0.0;
        for i in 0..n {
            if dist[i] / norm <= t {
                hits += 1;
            }
            if dist[i] <= 1.5 * stds[i] {
                pcp_hits += 1;
            }
            ae += if dist[i] < bound { dist[i] } else { bound };
        }
        let (pk, pg) = (kp(&p), kp(&g));
        worst = worst.max((eval::pck(&pk, &pg, norm, t).unwrap() - hits as f64 / n as f64).abs());
        worst = worst.max((eval::pcp(&pk, &pg, &stds).unwrap() - 100.0 * pcp_hits as f64 / n as f64).abs());
        worst = worst.max((eval::average_error(&pk, &pg, bound).unwrap() - ae / n as f64).abs());

        let errors: Vec<f64> = (0..rng.random_range(1..50)).map(|_| rng.random_range(0..40) as f64 * 0.01).collect();
        let thresholds: Vec<f64> = (1..=30).map(|i| i as f64 * 0.01).collect();
        let curve = eval::recall_curve(&errors, &thresholds).unwrap();
        let mut sum = 0.0;
        for (j, th) in thresholds.iter().enumerate() {
            let count = errors.iter().filter(|e| **e <= *th).count() as f64 / errors.len() as f64;
            sum += count;
            worst = worst.max((curve.recall[j] - count).abs());
        }
        worst = worst.max((curve.average_recall - sum / thresholds.len() as f64).abs());

        let (a, b) = (rng.random_range(0.0..720.0f64), rng.random_range(0.0..720.0f64));
        let mut d = (a - b).abs() % 360.0;
        if d > 180.0 {
            d = 360.0 - d;
        }
        worst_angle = worst_angle.max((eval::angle_difference_deg(a.to_radians(), b.to_radians()) - d).abs());
    }
    // distances of 7, 9 and 5 all contribute exactly the bound
    let gt = kp(&[[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
    let far = kp(&[[7.0, 0.0], [0.0, 9.0], [3.0, 4.0]]);
    let saturated = eval::average_error(&far, &gt, eval::AE_BOUND).unwrap() == 5.0;
    outcome(
        worst <= 1e-12 && worst_angle <= 1e-9 && saturated,
        format!(
            "1000 random cases, max deviation from counting oracles {worst:.1e}, angle oracle {worst_angle:.1e}; \
             AE saturation at 5: {saturated}"
        ),
    )
}

fn c8_determinism(bases: &BaseShapeSet) -> Outcome {
    let run = || -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let cfg = SamplerConfig { seed: 8, noise: 0.1, ..Default::default() };
        let samples = generate_dataset(&cfg, bases, 60).unwrap();
        let ds = Dataset::new(bases, cfg, samples);
        let mut data = Vec::new();
        ds.write_to(&mut data).unwrap();
        let tc = TrainConfig { hidden: vec![32, 16], epochs: 3, seed: 8, ..TrainConfig::interpreter() };
        let (model, _) = train_interpreter(&ds.samples, &tc, None).unwrap();
        let mut weights = Vec::new();
        WeightsFile::from_interpreter(&model, bases).write_to(&mut weights).unwrap();
        let mut report = Vec::new();
        let fit = FitConfig { restarts: 2, ..FitConfig::default() };
        for p in [Predictor::Fit(&fit), Predictor::Net(&model)] {
            eval::evaluate(&ds.samples[..10], bases, p, None, 0.2, 8).unwrap().write_csv(&mut report, true).unwrap();
        }
        (data, weights, report)
    };
    let (a, b) = (run(), run());
    outcome(
        a == b,
        format!(
            "dataset {} bytes, weights {} bytes, eval report {} bytes identical across runs: {}",
            a.0.len(),
            a.1.len(),
            a.2.len(),
            a == b
        ),
    )
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this suite
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let bases = chair();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, o: Outcome| {
        println!("criterion {n} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(1, "projection Jacobian vs central differences", c1_jacobian());
    record(2, "parallel-projection limit", c2_parallel_limit());
    record(3, "optimization round trip", c3_round_trip());
    let (o4, model) = c4_noise_sweep(&bases);
    record(4, "noise-robustness ordering", o4);
    record(5, "fine-tuning through the projection", c5_finetune(&bases, &model));
    drop(model);
    record(6, "heatmap refiner efficacy", c6_refiner(&bases));
    record(7, "metric counting oracles", c7_metrics());
    record(8, "byte-level determinism", c8_determinism(&bases));

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0}s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
