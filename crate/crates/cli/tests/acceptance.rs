//! Acceptance gate: runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use advpipe::attack::{dem_scales, AttackConfig, PresetParams, PRESET_NAMES};
use advpipe::harness::experiment::{experiment_data, train_model, ExperimentConfig};
use advpipe::harness::viz::adjoint_mask_stripes;
use advpipe::harness::EvalReport;
use advpipe::oracle::{check_input_gradient, translation_sum, GradCheckReport};
use advpipe::{
    clip_to_ball, conv2d_same, run_attack, sign, Architecture, Classifier, Image, Kernel2d, KernelSpec, Model, Rng,
    Shape, TransformKind,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn random_image(shape: Shape, rng: &mut Rng) -> Image {
    Image::from_fn(shape, |_, _, _| rng.next_f64())
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let shape = Shape::square(28, 1);
    let families = [
        Architecture::tiny_cnn(shape, 10),
        Architecture::Mlp {
            input: shape,
            hidden: 64,
            classes: 10,
        },
        Architecture::Linear { input: shape, classes: 10 },
    ];
    let mut rng = Rng::new(2024);
    let mut total = GradCheckReport::default();
    for arch in &families {
        for trial in 0..10 {
            let model: Model<f64> = arch.build(1000 + trial).unwrap();
            let x = random_image(shape, &mut rng);
            let y = rng.uniform_usize(0, 10).unwrap();
            let r = check_input_gradient(&model, &x, y, 100, 1e-5, &mut rng).unwrap();
            total.merge(&r);
        }
    }
    let t = start.elapsed();
    outcome(
        total.max_rel_error < 1e-4 && total.checked == 3000 && within(t, 60),
        format!(
            "max relative error {:.2e} over {} coordinates (3 families x 10 trials x 100), {} kink draws redrawn, {:.1}s",
            total.max_rel_error,
            total.checked,
            total.skipped,
            t.as_secs_f64()
        ),
    )
}

fn tim_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(99);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let h = rng.uniform_usize(1, 33).unwrap();
        let w = rng.uniform_usize(1, 33).unwrap();
        let c = rng.uniform_usize(1, 4).unwrap();
        let side = 2 * rng.uniform_usize(0, 5).unwrap() + 1;
        let k = Kernel2d::new(side, (0..side * side).map(|_| rng.normal()).collect()).unwrap();
        let g = Image::from_fn(Shape::new(h, w, c), |_, _, _| rng.normal());
        let a = conv2d_same(&g, &k).unwrap();
        let b = translation_sum(&g, &k).unwrap();
        worst = worst.max(a.zip_map(&b, |p, q| p - q).unwrap().linf_norm());
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-10 && within(t, 60),
        format!("max abs diff {worst:.2e} over 50 random pairs up to 32x32 / 9x9, {:.2}s", t.as_secs_f64()),
    )
}

fn snapshots(model: &Model<f64>, x: &Image, y: usize, cfg: &AttackConfig) -> Vec<Image> {
    let mut cfg = cfg.clone();
    cfg.record_snapshots = true;
    run_attack(&[model as &dyn Classifier<f64>], &[1.0], x, y, &cfg).unwrap().trace.snapshots
}

fn reduction_lattice() -> Outcome {
    let shape = Shape::square(28, 1);
    let model: Model<f64> = Architecture::tiny_cnn(shape, 10).build(5).unwrap();
    let mut held = [0usize; 5];
    let seeds = 5;
    for seed in 0..seeds {
        let x = random_image(shape, &mut Rng::new(500 + seed));
        let y = (seed % 10) as usize;
        let base = AttackConfig {
            seed,
            ..AttackConfig::default()
        };
        let mi = AttackConfig { momentum: true, ..base.clone() };
        let plain = snapshots(&model, &x, y, &base);
        let mi_trace = snapshots(&model, &x, y, &mi);

        let mu0 = snapshots(&model, &x, y, &AttackConfig { mu: 0.0, ..mi.clone() });
        held[0] += (plain == mu0) as usize;

        let nes = snapshots(&model, &x, y, &AttackConfig { nesterov: true, mu: 0.0, ..mi.clone() });
        held[1] += (plain == nes) as usize;

        let k1 = snapshots(
            &model,
            &x,
            y,
            &AttackConfig {
                transform: TransformKind::Rdim,
                diversity_scales: vec![28],
                ..mi.clone()
            },
        );
        held[2] += (mi_trace == k1) as usize;

        let kern = snapshots(
            &model,
            &x,
            y,
            &AttackConfig {
                kernel: KernelSpec::Gaussian { size: 1, sigma: None },
                ..mi.clone()
            },
        );
        held[3] += (mi_trace == kern) as usize;

        let f = snapshots(
            &model,
            &x,
            y,
            &AttackConfig {
                iterations: 1,
                alpha: Some(base.eps),
                ..base.clone()
            },
        );
        let (_, g) = model.loss_and_input_gradient(&x, y).unwrap();
        let step = x.zip_map(&sign(&g).unwrap(), |v, s| v + base.eps * s).unwrap();
        let fgsm = clip_to_ball(&step, &x, base.eps, 0.0, 1.0).unwrap();
        held[4] += (f.len() == 1 && f[0] == fgsm) as usize;
    }
    let names = ["momentum-off = mu 0", "nesterov mu 0 = I-FGSM", "K=1,S1=S = no DEM", "kernel 1 = no TIM", "T=1,alpha=eps = FGSM"];
    let detail = names
        .iter()
        .zip(held)
        .map(|(n, h)| format!("{n} {h}/{seeds}"))
        .collect::<Vec<_>>()
        .join("; ");
    outcome(held.iter().all(|&h| h == seeds as usize), format!("bit-identical iterates: {detail}"))
}

fn feasibility() -> Outcome {
    let start = Instant::now();
    let side = 16;
    let shape = Shape::square(side, 1);
    let models: Vec<Model<f64>> = (0..4)
        .map(|i| {
            let arch = match i % 3 {
                0 => Architecture::tiny_cnn(shape, 5),
                1 => Architecture::Mlp {
                    input: shape,
                    hidden: 12,
                    classes: 5,
                },
                _ => Architecture::Linear { input: shape, classes: 5 },
            };
            arch.build(70 + i).unwrap()
        })
        .collect();
    let mut rng = Rng::new(4242);
    let (mut runs, mut iterates, mut violations) = (0, 0, 0);
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let name = PRESET_NAMES[rng.uniform_usize(0, PRESET_NAMES.len()).unwrap()];
        let p = PresetParams {
            input_side: side,
            eps: (1.0 + 31.0 * rng.next_f64()) / 255.0,
            iterations: rng.uniform_usize(1, 7).unwrap(),
            mu: 2.0 * rng.next_f64(),
            kernel_size: 2 * rng.uniform_usize(0, 4).unwrap() + 1,
            dim_prob: rng.next_f64(),
            seed: rng.next_u64(),
        };
        let mut cfg = AttackConfig::preset(name, &p).unwrap();
        cfg.record_snapshots = true;
        cfg.targeted = rng.next_f64() < 0.2;
        // images with saturated regions exercise the pixel-range clip
        let x = Image::from_fn(shape, |_, _, _| {
            let v = 1.4 * rng.next_f64() - 0.2;
            v.clamp(0.0, 1.0)
        });
        let m = rng.uniform_usize(1, 3).unwrap();
        let members: Vec<&dyn Classifier<f64>> = (0..m)
            .map(|_| &models[rng.uniform_usize(0, models.len()).unwrap()] as &dyn Classifier<f64>)
            .collect();
        let weights = vec![1.0 / m as f64; m];
        let y = rng.uniform_usize(0, 5).unwrap();
        let out = run_attack(&members, &weights, &x, y, &cfg).unwrap();
        runs += 1;
        for s in &out.trace.snapshots {
            iterates += 1;
            let linf = s.zip_map(&x, |a, b| a - b).unwrap().linf_norm();
            worst_excess = worst_excess.max(linf - cfg.eps);
            if linf > cfg.eps + 1e-9 || !s.is_pixel_valued() {
                violations += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        violations == 0 && runs == 1000,
        format!(
            "{runs} randomized runs, {iterates} iterates, {violations} violations, max (linf - eps) {worst_excess:.2e}, {:.1}s",
            t.as_secs_f64()
        ),
    )
}

fn fitting_signature() -> Outcome {
    let shape = Shape::square(28, 1);
    let model: Model<f64> = Architecture::tiny_cnn(shape, 10).build(31).unwrap();
    let eps = 16.0 / 255.0;
    let mut checked = 0;
    let (mut rf_bad, mut vf_bad) = (0, 0);
    for seed in 0..5u64 {
        let mut r = Rng::new(900 + seed);
        // interior pixels only: x0 in [eps, 1 - eps]
        let x = Image::from_fn(shape, |_, _, _| eps + (1.0 - 2.0 * eps) * r.next_f64());
        let y = (seed % 10) as usize;
        let (_, g) = model.loss_and_input_gradient(&x, y).unwrap();
        let base = AttackConfig {
            momentum: true,
            seed,
            ..AttackConfig::default()
        };
        let alpha = base.step_size();
        let rf = snapshots(&model, &x, y, &AttackConfig { region_fitting: true, ..base.clone() });
        let vf = snapshots(&model, &x, y, &base);
        for i in 0..x.len() {
            if g.data()[i] == 0.0 {
                continue;
            }
            checked += 1;
            if ((rf[0].data()[i] - x.data()[i]).abs() - eps).abs() > 1e-12 {
                rf_bad += 1;
            }
            if ((vf[0].data()[i] - x.data()[i]).abs() - alpha).abs() > 1e-12 {
                vf_bad += 1;
            }
        }
    }
    outcome(
        checked > 0 && rf_bad == 0 && vf_bad == 0,
        format!(
            "iteration 1 over {checked} interior pixels with nonzero gradient: region fitting |d| != eps at {rf_bad}, value fitting |d| != eps/10 at {vf_bad} (tolerance 1e-12)"
        ),
    )
}

fn white_box() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let (train, test) = experiment_data(&cfg, 0).unwrap();
    let m = train_model(&cfg, "cnn", 0, &train, &test).unwrap();
    let attack = AttackConfig::preset("i-fgsm", &PresetParams::standard(28)).unwrap();
    let (mut correct, mut fooled) = (0, 0);
    for (i, ex) in test.iter().enumerate() {
        if m.model.predict(&ex.image).unwrap() != ex.label {
            continue;
        }
        correct += 1;
        let cfg = AttackConfig { seed: i as u64, ..attack.clone() };
        let out = run_attack(&[&m.model as &dyn Classifier<f64>], &[1.0], &ex.image, ex.label, &cfg).unwrap();
        fooled += (m.model.predict(&out.adversarial).unwrap() != ex.label) as usize;
    }
    let t = start.elapsed();
    let rate = fooled as f64 / correct as f64;
    outcome(
        m.test_accuracy >= 0.95 && rate >= 0.90 && within(t, 300),
        format!(
            "clean held-out accuracy {:.1}%, I-FGSM (eps 16/255, T 10) success {:.1}% ({fooled}/{correct}), {:.1}s",
            100.0 * m.test_accuracy,
            100.0 * rate,
            t.as_secs_f64()
        ),
    )
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_advpipe"))
}

fn run_matrix_cli(config: &Path, out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = cli()
        .args(["matrix", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("ADVPIPE_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(start.elapsed())
}

fn flagship_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper_flagship.cfg")
}

fn transferability(out: &Path) -> (Outcome, Option<Outcome>) {
    let config = flagship_config();
    let t = match run_matrix_cli(&config, out) {
        Ok(t) => t,
        Err(e) => return (outcome(false, format!("matrix run failed: {e}")), None),
    };
    let cfg = ExperimentConfig::load(&config).unwrap();
    let reports: Vec<EvalReport> = cfg
        .seeds
        .iter()
        .map(|s| EvalReport::from_csv(&std::fs::read_to_string(out.join(format!("report_seed{s}.csv"))).unwrap()).unwrap())
        .collect();
    let held_out = ["cnn-wide", "mlp"];
    let mean = |attack: &str| {
        let mut v = Vec::new();
        for r in &reports {
            for t in held_out {
                v.push(r.rate("cnn", attack, t).unwrap());
            }
        }
        v.iter().sum::<f64>() / v.len() as f64
    };
    let per_target = |attack: &str| {
        held_out
            .iter()
            .map(|t| {
                let m = reports.iter().map(|r| r.rate("cnn", attack, t).unwrap()).sum::<f64>() / reports.len() as f64;
                format!("{t} {:.1}", 100.0 * m)
            })
            .collect::<Vec<_>>()
            .join(", ")
    };
    let (dim, rdim, de) = (mean("ti-dim"), mean("ti-rdim"), mean("de-tim"));
    let main = outcome(
        rdim >= dim && de >= rdim && within(t, 1800),
        format!(
            "mean black-box success over seeds {:?} x (cnn-wide, mlp): TI-DIM {:.1}% [{}], TI-RDIM {:.1}% [{}], DE-TIM {:.1}% [{}]; needs TI-RDIM >= TI-DIM ({}) and DE-TIM >= TI-RDIM ({}); {:.0}s",
            cfg.seeds,
            100.0 * dim,
            per_target("ti-dim"),
            100.0 * rdim,
            per_target("ti-rdim"),
            100.0 * de,
            per_target("de-tim"),
            if rdim >= dim { "holds" } else { "violated" },
            if de >= rdim { "holds" } else { "violated" },
            t.as_secs_f64()
        ),
    );
    let columns: Vec<String> = held_out
        .iter()
        .map(|t| {
            let m = |a: &str| reports.iter().map(|r| r.rate("cnn", a, t).unwrap()).sum::<f64>() / reports.len() as f64;
            format!("{t}: RF-DE-TIM {:.1}% vs TIM {:.1}%", 100.0 * m("rf-de-tim"), 100.0 * m("tim"))
        })
        .collect();
    let beats = held_out.iter().all(|t| {
        let m = |a: &str| reports.iter().map(|r| r.rate("cnn", a, t).unwrap()).sum::<f64>() / reports.len() as f64;
        m("rf-de-tim") > m("tim")
    });
    (main, Some(outcome(beats, columns.join("; "))))
}

fn stripe_monotonicity() -> Outcome {
    let side = 28;
    let scales = dem_scales(side);
    let mut monotone = 0;
    let mut max_rows = 0;
    let mut max_cols = 0;
    for seed in 0..20 {
        let counts: Vec<_> = scales.iter().map(|&s1| adjoint_mask_stripes(side, s1, seed).unwrap()).collect();
        max_rows = counts.iter().map(|c| c.rows).max().unwrap().max(max_rows);
        max_cols = counts.iter().map(|c| c.cols).max().unwrap().max(max_cols);
        monotone += counts.windows(2).all(|w| w[0].rows <= w[1].rows) as usize;
    }
    let degenerate = if max_rows == 0 && max_cols == 0 {
        " (degenerate: bilinear adjoints reach every pixel at these ratios, so every count is 0)"
    } else {
        ""
    };
    outcome(
        monotone == 20,
        format!(
            "zero-row count non-decreasing over scales {scales:?} for {monotone}/20 seeds; max zero rows {max_rows}, max zero cols {max_cols}{degenerate}"
        ),
    )
}

const DETERMINISM_CONFIG: &str = "\
seeds = 3, 4
side = 16
classes = 4
train_per_class = 12
test_per_class = 4
epochs = 3
sources = cnn
targets = cnn, mlp, linear
attacks = i-fgsm, mi-fgsm, ni-fgsm, tim, ti-dim, ti-rdim, de-tim, rf-de-tim
kernel_size = 3
";

fn determinism(dir: &Path) -> Outcome {
    let cfg = dir.join("determinism.cfg");
    std::fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let (a, b) = (dir.join("run_a"), dir.join("run_b"));
    for out in [&a, &b] {
        if let Err(e) = run_matrix_cli(&cfg, out) {
            return outcome(false, format!("matrix run failed: {e}"));
        }
    }
    let mut files = Vec::new();
    let mut identical = true;
    for s in [3, 4] {
        let name = format!("report_seed{s}.csv");
        let (x, y) = (std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
        identical &= x == y && !x.is_empty();
        files.push(name);
    }
    outcome(
        identical,
        format!("two identical `advpipe matrix` runs (2 seeds, 8 attacks, 3 targets): {} byte-identical = {identical}", files.join(", ")),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let mut all_pass = true;
    let mut report = |n: usize, name: &str, o: Outcome| {
        all_pass &= o.pass;
        println!("[{}] {n}. {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "gradient correctness", gradient_correctness());
    report(2, "TIM equivalence", tim_equivalence());
    report(3, "reduction lattice", reduction_lattice());
    report(4, "feasibility invariant", feasibility());
    report(5, "region-fitting signature", fitting_signature());
    report(6, "white-box potency", white_box());
    let (transfer, extra) = transferability(&dir.path().join("flagship"));
    report(7, "directional transferability", transfer);
    report(8, "stripe monotonicity", stripe_monotonicity());
    report(9, "determinism", determinism(dir.path()));
    if let Some(o) = extra {
        println!(
            "[{}] note (not a criterion): RF-DE-TIM above TIM on every held-out column: {}",
            if o.pass { "yes" } else { "no" },
            o.detail
        );
    }
    println!("acceptance: {}", if all_pass { "all criteria pass" } else { "at least one criterion failed" });
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
