//! `advpipe`: toy data, training, attacks, transfer matrices, gradient
//! checks and diagnostic images from the command line.
//!
//! Budgets given as `--eps` are on the 0–255 scale and divided by 255.
//! When `--seed` is absent, `ADVPIPE_SEED` supplies the default seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use advpipe::attack::{AttackConfig, PresetParams, TransformKind};
use advpipe::harness::experiment::{model_architecture, ExperimentConfig};
use advpipe::harness::viz::{adjoint_mask_stripes, visualize_gradient_stripes};
use advpipe::harness::{
    dataset_checksum, load_dataset, load_tensor, make_toy_dataset, mean_rate, save_tensor, visualize_perturbation,
};
use advpipe::model::{accuracy, load_checkpoint, save_checkpoint, train, Architecture, Classifier, Model, TrainConfig};
use advpipe::oracle::{check_input_gradient, GradCheckReport};
use advpipe::{run_attack, Image, Rng};

/// Relative-error threshold for `gradcheck`.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "advpipe", version, about = "Transferable adversarial attacks on small classifiers")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic pattern dataset (tensor files plus manifest).
    GenData(GenDataArgs),
    /// Train a model on a dataset manifest and save a checkpoint.
    Train(TrainArgs),
    /// Attack one image with one or more source models.
    Attack(AttackArgs),
    /// Run a (source x attack x target) transfer experiment from a config file.
    Matrix(MatrixArgs),
    /// Compare analytic input gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Write the nonzero mask of a diverse-input gradient as a PGM.
    VizStripes(VizStripesArgs),
    /// Write per-iteration perturbation frames of an attack as PGMs.
    VizPerturb(AttackArgs),
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100)]
    n_per_class: usize,
    #[arg(long, default_value_t = 28)]
    side: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Training manifest.
    #[arg(long)]
    data: PathBuf,
    /// Optional held-out manifest for test accuracy.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Catalogue id (cnn, cnn-b, cnn-wide, mlp, linear) or an architecture descriptor.
    #[arg(long, default_value = "cnn")]
    model: String,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AttackArgs {
    /// Source checkpoint; repeat for an equal-weight ensemble.
    #[arg(long = "model", required = true)]
    models: Vec<PathBuf>,
    /// Input image as a tensor file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label: usize,
    /// Output tensor file (`attack`) or frame directory (`viz-perturb`).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    attack: AttackFlags,
}

/// Attack configuration: a preset or config file, then individual overrides.
#[derive(Args, Clone, Default)]
struct AttackFlags {
    /// Named method, e.g. i-fgsm, ti-dim, rf-de-tim.
    #[arg(long)]
    preset: Option<String>,
    /// Attack config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// L-infinity budget on the 0-255 scale.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Step size on the 0-255 scale.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    momentum: Option<bool>,
    #[arg(long)]
    nesterov: Option<bool>,
    #[arg(long)]
    region_fitting: Option<bool>,
    /// none | dim | rdim
    #[arg(long)]
    transform: Option<String>,
    #[arg(long)]
    dim_prob: Option<f64>,
    /// Comma-separated diversity scales.
    #[arg(long)]
    diversity_scales: Option<String>,
    /// Comma-separated scale weights, or `equal`.
    #[arg(long)]
    scale_weights: Option<String>,
    /// none | gaussian
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long)]
    kernel_sigma: Option<f64>,
    #[arg(long)]
    targeted: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the CSV and markdown reports.
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Catalogue id of a freshly initialized model.
    #[arg(long, default_value = "cnn")]
    model: String,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Coordinates checked per trial.
    #[arg(long, default_value_t = 100)]
    coords: usize,
    #[arg(long, default_value_t = 28)]
    side: usize,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct VizStripesArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label: usize,
    /// Diversity scale.
    #[arg(long)]
    s1: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn default_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("ADVPIPE_SEED") {
        Ok(v) => v.trim().parse().with_context(|| format!("ADVPIPE_SEED='{v}' is not an unsigned integer")),
        Err(_) => Ok(0),
    }
}

fn resolve_architecture(id: &str, input: advpipe::Shape, classes: usize) -> Result<Architecture> {
    if id.contains(' ') {
        return Ok(id.parse()?);
    }
    Ok(model_architecture(id, input, classes)?)
}

impl AttackFlags {
    fn build(&self, side: usize) -> Result<AttackConfig> {
        let mut cfg = match (&self.preset, &self.config) {
            (Some(_), Some(_)) => bail!("--preset and --config are mutually exclusive"),
            (Some(name), None) => {
                let mut p = PresetParams::standard(side);
                if let Some(e) = self.eps {
                    p.eps = e / 255.0;
                }
                if let Some(t) = self.iterations {
                    p.iterations = t;
                }
                if let Some(m) = self.mu {
                    p.mu = m;
                }
                if let Some(k) = self.kernel_size {
                    p.kernel_size = k;
                }
                if let Some(d) = self.dim_prob {
                    p.dim_prob = d;
                }
                AttackConfig::preset(name, &p)?
            }
            (None, Some(path)) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                AttackConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            (None, None) => AttackConfig::default(),
        };
        let mut set = |k: &str, v: String| cfg.set(k, &v);
        if let Some(e) = self.eps {
            set("eps", (e / 255.0).to_string())?;
        }
        if let Some(v) = self.iterations {
            set("iterations", v.to_string())?;
        }
        if let Some(a) = self.alpha {
            set("alpha", (a / 255.0).to_string())?;
        }
        if let Some(v) = self.mu {
            set("mu", v.to_string())?;
        }
        if let Some(v) = self.momentum {
            set("momentum", v.to_string())?;
        }
        if let Some(v) = self.nesterov {
            set("nesterov", v.to_string())?;
        }
        if let Some(v) = self.region_fitting {
            set("region_fitting", v.to_string())?;
        }
        if let Some(v) = &self.transform {
            set("transform", v.clone())?;
        }
        if let Some(v) = self.dim_prob {
            set("dim_prob", v.to_string())?;
        }
        if let Some(v) = &self.diversity_scales {
            set("diversity_scales", v.clone())?;
        }
        if let Some(v) = &self.scale_weights {
            set("scale_weights", v.clone())?;
        }
        if let Some(v) = &self.kernel {
            set("kernel", v.clone())?;
        }
        if let Some(v) = self.kernel_size {
            set("kernel_size", v.to_string())?;
        }
        if let Some(v) = self.kernel_sigma {
            set("kernel_sigma", v.to_string())?;
        }
        if let Some(v) = self.targeted {
            set("targeted", v.to_string())?;
        }
        cfg.seed = default_seed(self.seed)?;
        if cfg.transform == TransformKind::Rdim && cfg.diversity_scales.is_empty() {
            cfg.diversity_scales = advpipe::attack::dem_scales(side);
        }
        cfg.validate(Some(side))?;
        Ok(cfg)
    }
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let seed = default_seed(a.seed)?;
    let manifest = make_toy_dataset(&a.out, seed, a.n_per_class, a.side, a.classes)?;
    let path = a.out.join("manifest.csv");
    let data = load_dataset(&path)?;
    println!(
        "wrote {} examples to {} (sha256 {})",
        manifest.entries.len(),
        path.display(),
        dataset_checksum(&data.examples)
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let d = data.descriptor;
    let arch = resolve_architecture(&a.model, d.shape, d.classes)?;
    let seed = default_seed(a.seed)?;
    let mut model: Model<f64> = arch.build(seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        seed,
    };
    let report = train(&mut model, &data.examples, &cfg)?;
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.6}", e + 1);
    }
    println!("train accuracy {:.4}", report.final_accuracy);
    if let Some(test) = &a.test {
        let held = load_dataset(test)?;
        println!("test accuracy {:.4}", accuracy(&model, &held.examples)?);
    }
    save_checkpoint(&model, &a.out)?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Model<f64>>> {
    paths
        .iter()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading {}", p.display())))
        .collect()
}

fn attack_cmd(a: &AttackArgs, frames: bool) -> Result<()> {
    let models = load_models(&a.models)?;
    let x: Image = load_tensor(&a.input)?;
    let mut cfg = a.attack.build(x.height())?;
    cfg.record_snapshots = frames;
    let members: Vec<&dyn Classifier<f64>> = models.iter().map(|m| m as &dyn Classifier<f64>).collect();
    let weights = vec![1.0 / members.len() as f64; members.len()];
    let out = run_attack(&members, &weights, &x, a.label, &cfg)?;
    for (i, m) in members.iter().enumerate() {
        println!(
            "model {i}: clean prediction {}, adversarial prediction {}",
            m.predict(&x)?,
            m.predict(&out.adversarial)?
        );
    }
    if let Some(last) = out.trace.records.last() {
        println!("final loss {:.6}, linf {:.6}", last.loss, last.linf);
    }
    if frames {
        let paths = visualize_perturbation(&out.trace, &a.out)?;
        println!("wrote {} frames to {}", paths.len(), a.out.display());
    } else {
        save_tensor(&a.out, &out.adversarial)?;
        println!("saved {}", a.out.display());
    }
    Ok(())
}

fn matrix_cmd(a: &MatrixArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let base = ExperimentConfig {
        seeds: vec![default_seed(None)?],
        ..ExperimentConfig::default()
    };
    let mut cfg = base.with_text(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let run = advpipe::harness::experiment::run_seed(&cfg, seed)?;
        for m in &run.models {
            eprintln!(
                "seed {seed}: {} train {:.4} test {:.4}",
                m.id, m.train_accuracy, m.test_accuracy
            );
        }
        write_file(&a.out.join(format!("report_seed{seed}.csv")), &run.report.to_csv())?;
        write_file(&a.out.join(format!("report_seed{seed}.md")), &run.report.to_markdown())?;
        println!("{}", run.report.to_markdown());
        reports.push(run.report);
    }
    let summary = summary_markdown(&cfg, &reports);
    write_file(&a.out.join("summary.md"), &summary)?;
    println!("{summary}");
    Ok(())
}

/// Mean success rate per (source, attack, target) over seeds.
fn summary_markdown(cfg: &ExperimentConfig, reports: &[advpipe::harness::EvalReport]) -> String {
    let seeds: Vec<String> = cfg.seeds.iter().map(|s| s.to_string()).collect();
    let mut s = format!(
        "Mean success rates (%) over seeds {}, denominator: {}\n\n| source | attack |",
        seeds.join(","),
        cfg.denominator
    );
    for t in &cfg.targets {
        s.push_str(&format!(" {t} |"));
    }
    s.push_str("\n|---|---|");
    s.push_str(&"---|".repeat(cfg.targets.len()));
    s.push('\n');
    for src in &cfg.sources {
        for atk in &cfg.attacks {
            s.push_str(&format!("| {src} | {atk} |"));
            for t in &cfg.targets {
                match mean_rate(reports, src, atk, t) {
                    Ok(r) => s.push_str(&format!(" {:.1} |", 100.0 * r)),
                    Err(_) => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn gradcheck_cmd(a: &GradcheckArgs) -> Result<bool> {
    let seed = default_seed(a.seed)?;
    let input = advpipe::Shape::square(a.side, 1);
    let arch = resolve_architecture(&a.model, input, a.classes)?;
    let mut rng = Rng::new(seed);
    let mut total = GradCheckReport::default();
    for trial in 0..a.trials {
        let model: Model<f64> = arch.build(rng.next_u64())?;
        let x = Image::from_fn(input, |_, _, _| rng.next_f64());
        let y = rng.uniform_usize(0, a.classes)?;
        let r = check_input_gradient(&model, &x, y, a.coords, a.step, &mut rng)?;
        println!(
            "trial {:>2}: {} coordinates, max relative error {:.3e}",
            trial + 1,
            r.checked,
            r.max_rel_error
        );
        total.merge(&r);
    }
    println!(
        "max relative error {:.3e} over {} coordinates ({} kink draws skipped)",
        total.max_rel_error, total.checked, total.skipped
    );
    Ok(total.max_rel_error < GRADCHECK_TOLERANCE)
}

fn viz_stripes_cmd(a: &VizStripesArgs) -> Result<()> {
    let model: Model<f64> = load_checkpoint(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let x: Image = load_tensor(&a.input)?;
    let seed = default_seed(a.seed)?;
    let g = visualize_gradient_stripes(&model, &x, a.label, a.s1, seed, &a.out)?;
    let t = adjoint_mask_stripes(x.height(), a.s1, seed)?;
    println!("gradient mask: {} zero rows, {} zero columns", g.rows, g.cols);
    println!("transform adjoint mask: {} zero rows, {} zero columns", t.rows, t.cols);
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::GenData(a) => gen_data(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Attack(a) => attack_cmd(a, false)?,
        Command::VizPerturb(a) => attack_cmd(a, true)?,
        Command::Matrix(a) => matrix_cmd(a)?,
        Command::Gradcheck(a) => {
            if !gradcheck_cmd(a)? {
                eprintln!("gradcheck failed: tolerance {GRADCHECK_TOLERANCE:e}");
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::VizStripes(a) => viz_stripes_cmd(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
