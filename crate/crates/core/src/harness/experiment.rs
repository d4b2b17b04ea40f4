//! End-to-end transfer experiments from a flat `key = value` config.
//!
//! ```text
//! seeds = 0,1,2
//! side = 28
//! classes = 10
//! train_per_class = 100
//! test_per_class = 20
//! epochs = 20
//! learning_rate = 0.1
//! batch_size = 16
//! sources = cnn
//! targets = cnn-b,mlp
//! attacks = ti-dim,ti-rdim,de-tim,rf-de-tim
//! eps = 16/255
//! iterations = 10
//! mu = 1
//! kernel_size = 15
//! dim_prob = 0.5
//! denominator = clean-correct
//! ```
//!
//! Per seed: a fresh synthetic dataset, freshly initialised and trained
//! models, and one [`EvalReport`].

use rayon::prelude::*;

use super::dataset::generate_toy_examples;
use super::matrix::{run_matrix, MatrixOptions, NamedModel, Source};
use super::report::{DenominatorPolicy, EvalReport};
use crate::attack::config::{fmt_real, parse_list, parse_pairs, parse_real};
use crate::attack::{AttackConfig, PresetParams};
use crate::error::{Error, Result};
use crate::model::{accuracy, train, Architecture, Classifier, LabeledExample, Model, TrainConfig};
use crate::rng::child_seed;
use crate::tensor::Shape;

/// Model identifiers understood by [`model_architecture`].
pub const MODEL_IDS: &[&str] = &["cnn", "cnn-b", "cnn-wide", "mlp", "linear"];

/// Architecture of a catalogue model. `cnn` and `cnn-b` share an
/// architecture and differ only in initialisation and data order.
pub fn model_architecture(id: &str, input: Shape, classes: usize) -> Result<Architecture> {
    Ok(match id {
        "cnn" | "cnn-b" => Architecture::tiny_cnn(input, classes),
        "cnn-wide" => Architecture::Cnn {
            input,
            conv1: 16,
            conv2: 32,
            classes,
        },
        "mlp" => Architecture::Mlp {
            input,
            hidden: 64,
            classes,
        },
        "linear" => Architecture::Linear { input, classes },
        _ => {
            return Err(Error::Config(format!(
                "unknown model '{id}'; known: {}",
                MODEL_IDS.join(", ")
            )))
        }
    })
}

/// Seed for model `id` within experiment seed `seed`.
pub fn model_seed(seed: u64, id: &str) -> u64 {
    let index = MODEL_IDS.iter().position(|m| *m == id).unwrap_or(MODEL_IDS.len());
    child_seed(seed, 1000 + index as u64)
}

/// Seed of the synthetic dataset within experiment seed `seed`.
pub fn data_seed(seed: u64) -> u64 {
    child_seed(seed, 0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub side: usize,
    pub classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub attacks: Vec<String>,
    pub eps: f64,
    pub iterations: usize,
    pub mu: f64,
    pub kernel_size: usize,
    pub dim_prob: f64,
    pub denominator: DenominatorPolicy,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            side: 28,
            classes: 10,
            train_per_class: 100,
            test_per_class: 20,
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 16,
            sources: vec!["cnn".into()],
            targets: vec!["cnn-b".into(), "mlp".into()],
            attacks: vec!["ti-dim".into(), "ti-rdim".into(), "de-tim".into(), "rf-de-tim".into()],
            eps: 16.0 / 255.0,
            iterations: 10,
            mu: 1.0,
            kernel_size: 15,
            dim_prob: 0.5,
            denominator: DenominatorPolicy::CleanCorrect,
        }
    }
}

fn names(v: &str) -> Option<Vec<String>> {
    parse_list(v, |s| (!s.is_empty()).then(|| s.to_string()))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::Config(format!("bad value '{value}' for '{key}'"));
        let int = || value.parse::<usize>().map_err(|_| bad());
        match key {
            "seeds" => self.seeds = parse_list(value, |s| s.parse().ok()).ok_or_else(bad)?,
            "side" => self.side = int()?,
            "classes" => self.classes = int()?,
            "train_per_class" => self.train_per_class = int()?,
            "test_per_class" => self.test_per_class = int()?,
            "epochs" => self.epochs = int()?,
            "learning_rate" => self.learning_rate = parse_real(value).ok_or_else(bad)?,
            "batch_size" => self.batch_size = int()?,
            "sources" => self.sources = names(value).ok_or_else(bad)?,
            "targets" => self.targets = names(value).ok_or_else(bad)?,
            "attacks" => self.attacks = names(value).ok_or_else(bad)?,
            "eps" => self.eps = parse_real(value).ok_or_else(bad)?,
            "iterations" => self.iterations = int()?,
            "mu" => self.mu = parse_real(value).ok_or_else(bad)?,
            "kernel_size" => self.kernel_size = int()?,
            "dim_prob" => self.dim_prob = parse_real(value).ok_or_else(bad)?,
            "denominator" => self.denominator = value.parse()?,
            _ => return Err(Error::Config(format!("unknown experiment key '{key}'"))),
        }
        Ok(())
    }

    /// Parses the text form on top of the defaults and validates.
    pub fn parse(text: &str) -> Result<Self> {
        Self::default().with_text(text)
    }

    /// Applies the text form on top of `self` and validates.
    pub fn with_text(mut self, text: &str) -> Result<Self> {
        for (k, v) in parse_pairs(text)? {
            self.set(&k, &v)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        format!(
            "seeds = {}\nside = {}\nclasses = {}\ntrain_per_class = {}\ntest_per_class = {}\n\
             epochs = {}\nlearning_rate = {}\nbatch_size = {}\nsources = {}\ntargets = {}\n\
             attacks = {}\neps = {}\niterations = {}\nmu = {}\nkernel_size = {}\ndim_prob = {}\n\
             denominator = {}\n",
            seeds.join(","),
            self.side,
            self.classes,
            self.train_per_class,
            self.test_per_class,
            self.epochs,
            fmt_real(self.learning_rate),
            self.batch_size,
            join(&self.sources),
            join(&self.targets),
            join(&self.attacks),
            fmt_real(self.eps),
            self.iterations,
            fmt_real(self.mu),
            self.kernel_size,
            fmt_real(self.dim_prob),
            self.denominator,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.sources.is_empty() || self.targets.is_empty() || self.attacks.is_empty() {
            return Err(Error::Config("sources, targets and attacks must be non-empty".into()));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config("train_per_class and test_per_class must be positive".into()));
        }
        let input = self.input_shape();
        for id in self.sources.iter().chain(&self.targets) {
            model_architecture(id, input, self.classes)?;
        }
        for (i, t) in self.targets.iter().enumerate() {
            if self.targets[..i].contains(t) {
                return Err(Error::Config(format!("duplicate target '{t}'")));
            }
        }
        self.attack_configs()?;
        Ok(())
    }

    pub fn input_shape(&self) -> Shape {
        Shape::square(self.side, 1)
    }

    pub fn preset_params(&self) -> PresetParams {
        PresetParams {
            input_side: self.side,
            eps: self.eps,
            iterations: self.iterations,
            mu: self.mu,
            kernel_size: self.kernel_size,
            dim_prob: self.dim_prob,
            seed: 0,
        }
    }

    pub fn attack_configs(&self) -> Result<Vec<AttackConfig>> {
        let p = self.preset_params();
        self.attacks
            .iter()
            .map(|name| {
                let cfg = AttackConfig::preset(name, &p)?;
                cfg.validate(Some(self.side))?;
                Ok(cfg)
            })
            .collect()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
        }
    }
}

/// A trained catalogue model and its accuracies.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub id: String,
    pub model: Model<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Everything produced for one experiment seed.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub models: Vec<TrainedModel>,
    pub report: EvalReport,
}

/// Synthetic train and test split for one experiment seed.
pub fn experiment_data(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<LabeledExample<f64>>, Vec<LabeledExample<f64>>)> {
    let all = generate_toy_examples(
        data_seed(seed),
        cfg.train_per_class + cfg.test_per_class,
        cfg.side,
        cfg.classes,
    )?;
    let n_train = cfg.train_per_class * cfg.classes;
    let test = all[n_train..].to_vec();
    let mut train_set = all;
    train_set.truncate(n_train);
    Ok((train_set, test))
}

/// Builds and trains catalogue model `id` for experiment seed `seed`.
pub fn train_model(
    cfg: &ExperimentConfig,
    id: &str,
    seed: u64,
    train_set: &[LabeledExample<f64>],
    test_set: &[LabeledExample<f64>],
) -> Result<TrainedModel> {
    let arch = model_architecture(id, cfg.input_shape(), cfg.classes)?;
    let ms = model_seed(seed, id);
    let mut model: Model<f64> = arch.build(ms)?;
    let report = train(&mut model, train_set, &cfg.train_config(ms)).map_err(|e| e.context(format!("training '{id}'")))?;
    let test_accuracy = accuracy(&model, test_set)?;
    Ok(TrainedModel {
        id: id.to_string(),
        model,
        train_accuracy: report.final_accuracy,
        test_accuracy,
    })
}

/// Runs one seed: data, training of every distinct model, attack matrix on
/// the test split.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    cfg.validate()?;
    let (train_set, test_set) = experiment_data(cfg, seed)?;
    let mut ids: Vec<&String> = Vec::new();
    for id in cfg.sources.iter().chain(&cfg.targets) {
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    let models = ids
        .par_iter()
        .map(|id| train_model(cfg, id, seed, &train_set, &test_set))
        .collect::<Result<Vec<_>>>()?;
    let find = |id: &str| -> &dyn Classifier<f64> {
        &models.iter().find(|m| m.id == id).expect("every id was trained").model
    };
    let sources: Vec<Source<'_>> = cfg.sources.iter().map(|id| Source::single(id.clone(), find(id))).collect();
    let targets: Vec<NamedModel<'_>> = cfg
        .targets
        .iter()
        .map(|id| NamedModel {
            name: id,
            model: find(id),
        })
        .collect();
    let report = run_matrix(
        &sources,
        &targets,
        &cfg.attack_configs()?,
        &test_set,
        MatrixOptions {
            policy: cfg.denominator,
            seed,
        },
    )
    .map_err(|e| e.context(format!("seed {seed}")))?;
    Ok(SeedRun { seed, models, report })
}

/// Runs every configured seed in order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let cfg = ExperimentConfig::parse(
            "seeds = 3, 4\nside = 16\nattacks = i-fgsm, tim\ntargets = mlp\neps = 8/255 # budget\ndenominator = all\n",
        )
        .unwrap();
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.side, 16);
        assert_eq!(cfg.attacks, vec!["i-fgsm", "tim"]);
        assert!((cfg.eps - 8.0 / 255.0).abs() < 1e-18);
        assert_eq!(cfg.denominator, DenominatorPolicy::All);
        assert!(ExperimentConfig::parse("targets = vgg\n").is_err());
        assert!(ExperimentConfig::parse("attacks = nope\n").is_err());
        assert!(ExperimentConfig::parse("colour = red\n").is_err());
        assert!(ExperimentConfig::parse("seeds =\n").is_err());
        assert!(ExperimentConfig::parse("targets = mlp, mlp\n").is_err());
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn seeds_are_distinct_per_model() {
        let a = model_seed(0, "cnn");
        assert_ne!(a, model_seed(0, "cnn-b"));
        assert_ne!(a, model_seed(1, "cnn"));
        assert_ne!(a, data_seed(0));
    }

    #[test]
    fn small_run_is_reproducible() {
        let cfg = ExperimentConfig::parse(
            "side = 12\nclasses = 3\ntrain_per_class = 6\ntest_per_class = 3\nepochs = 2\n\
             sources = linear\ntargets = linear, mlp\nattacks = i-fgsm, de-tim\nkernel_size = 3\n",
        )
        .unwrap();
        let a = run_seed(&cfg, 7).unwrap();
        let b = run_seed(&cfg, 7).unwrap();
        assert_eq!(a.report.to_csv(), b.report.to_csv());
        assert_eq!(a.report.rows.len(), 2);
        assert_eq!(a.models.len(), 2);
    }
}
