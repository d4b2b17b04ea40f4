//! The (source × attack × target) transfer experiment.

use rayon::prelude::*;

use super::report::{Count, DenominatorPolicy, EvalReport, ReportRow};
use crate::attack::{run_attack, AttackConfig};
use crate::error::{Error, Result};
use crate::model::{Classifier, LabeledExample};
use crate::rng::child_seed;

/// A target (black-box) model with its column label.
#[derive(Clone, Copy)]
pub struct NamedModel<'a> {
    pub name: &'a str,
    pub model: &'a dyn Classifier<f64>,
}

/// White-box source: one model, or a weighted ensemble whose logits are fused.
#[derive(Clone)]
pub struct Source<'a> {
    pub name: String,
    pub members: Vec<&'a dyn Classifier<f64>>,
    pub weights: Vec<f64>,
}

impl<'a> Source<'a> {
    pub fn single(name: impl Into<String>, model: &'a dyn Classifier<f64>) -> Self {
        Self {
            name: name.into(),
            members: vec![model],
            weights: vec![1.0],
        }
    }

    /// Equal-weight ensemble.
    pub fn ensemble(name: impl Into<String>, models: Vec<&'a dyn Classifier<f64>>) -> Self {
        let w = 1.0 / models.len().max(1) as f64;
        Self {
            name: name.into(),
            weights: vec![w; models.len()],
            members: models,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct MatrixOptions {
    pub policy: DenominatorPolicy,
    /// Root of every per-example attack seed.
    pub seed: u64,
}

/// Seed of the attack on example `example` in cell `cell` (row-major over
/// sources × attacks). The config's own `seed` field is replaced by it.
pub fn cell_seed(root: u64, cell: usize, example: usize) -> u64 {
    child_seed(child_seed(root, cell as u64), example as u64)
}

/// Crafts adversarial examples on every source with every attack and
/// evaluates them on every target. Success means the target's prediction
/// differs from the true label.
pub fn run_matrix(
    sources: &[Source<'_>],
    targets: &[NamedModel<'_>],
    attacks: &[AttackConfig],
    data: &[LabeledExample<f64>],
    opts: MatrixOptions,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if sources.is_empty() || targets.is_empty() || attacks.is_empty() {
        return Err(Error::Config("matrix needs at least one source, target and attack".into()));
    }
    for (i, a) in attacks.iter().enumerate() {
        if attacks[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::Config(format!("duplicate attack name '{}'", a.name)));
        }
    }
    let shape = data[0].image.shape();
    for s in sources {
        for m in &s.members {
            if m.input_shape() != shape {
                return Err(Error::Config(format!(
                    "source '{}' takes {} inputs, data is {shape}",
                    s.name,
                    m.input_shape()
                )));
            }
        }
        for a in attacks {
            a.validate(Some(shape.height))
                .map_err(|e| e.context(format!("source '{}', attack '{}'", s.name, a.name)))?;
        }
    }
    for t in targets {
        if t.model.input_shape() != shape {
            return Err(Error::Config(format!(
                "target '{}' takes {} inputs, data is {shape}",
                t.name,
                t.model.input_shape()
            )));
        }
    }

    // clean predictions, one column per target
    let clean_correct: Vec<Vec<bool>> = targets
        .par_iter()
        .map(|t| {
            data.iter()
                .enumerate()
                .map(|(i, ex)| {
                    t.model
                        .predict(&ex.image)
                        .map(|p| p == ex.label)
                        .map_err(|e| e.context(format!("target '{}', example {i}", t.name)))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n_cells = sources.len() * attacks.len();
    let jobs: Vec<(usize, usize)> = (0..n_cells).flat_map(|c| (0..data.len()).map(move |e| (c, e))).collect();
    // fooled[job][target]
    let fooled: Vec<Vec<bool>> = jobs
        .par_iter()
        .map(|&(cell, e)| {
            let source = &sources[cell / attacks.len()];
            let attack = &attacks[cell % attacks.len()];
            let at = || format!("source '{}', attack '{}', example {e}", source.name, attack.name);
            let mut cfg = attack.clone();
            cfg.seed = cell_seed(opts.seed, cell, e);
            cfg.record_snapshots = false;
            let ex = &data[e];
            let out = run_attack(&source.members, &source.weights, &ex.image, ex.label, &cfg).map_err(|err| err.context(at()))?;
            targets
                .iter()
                .map(|t| {
                    t.model
                        .predict(&out.adversarial)
                        .map(|p| p != ex.label)
                        .map_err(|err| err.context(format!("{}, target '{}'", at(), t.name)))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;

    let clean = clean_correct
        .iter()
        .map(|col| Count {
            hits: col.iter().filter(|&&c| c).count(),
            total: col.len(),
        })
        .collect();
    let mut rows = Vec::with_capacity(n_cells);
    for cell in 0..n_cells {
        let per_example = &fooled[cell * data.len()..(cell + 1) * data.len()];
        let cells = (0..targets.len())
            .map(|t| {
                let mut c = Count::default();
                for (e, f) in per_example.iter().enumerate() {
                    if opts.policy == DenominatorPolicy::CleanCorrect && !clean_correct[t][e] {
                        continue;
                    }
                    c.total += 1;
                    c.hits += f[t] as usize;
                }
                c
            })
            .collect();
        rows.push(ReportRow {
            source: sources[cell / attacks.len()].name.clone(),
            attack: attacks[cell % attacks.len()].name.clone(),
            cells,
        });
    }
    let report = EvalReport {
        policy: opts.policy,
        targets: targets.iter().map(|t| t.name.to_string()).collect(),
        clean,
        rows,
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearSoftmax;
    use crate::rng::Rng;
    use crate::tensor::{ImageTensor, Shape};

    fn setup() -> (LinearSoftmax<f64>, LinearSoftmax<f64>, Vec<LabeledExample<f64>>) {
        let mut rng = Rng::new(8);
        let s = Shape::square(6, 1);
        let mut lin = || {
            let w = (0..3 * s.len()).map(|_| rng.normal()).collect();
            LinearSoftmax::new(s, w, vec![0.0; 3]).unwrap()
        };
        let (a, b) = (lin(), lin());
        let data = (0..12)
            .map(|i| {
                let mut r = Rng::new(100 + i);
                let image = ImageTensor::from_fn(s, |_, _, _| r.next_f64());
                LabeledExample { label: a.predict(&image).unwrap(), image }
            })
            .collect();
        (a, b, data)
    }

    #[test]
    fn zero_budget_fools_nobody_on_clean_correct() {
        let (a, b, data) = setup();
        let mut cfg = AttackConfig::default();
        cfg.eps = 0.0;
        let report = run_matrix(
            &[Source::single("a", &a)],
            &[NamedModel { name: "a", model: &a }, NamedModel { name: "b", model: &b }],
            &[cfg],
            &data,
            MatrixOptions::default(),
        )
        .unwrap();
        assert_eq!(report.clean[0], Count { hits: 12, total: 12 });
        for c in &report.rows[0].cells {
            assert_eq!(c.hits, 0);
        }
        // under the all-examples policy the clean errors count as successes
        let all = run_matrix(
            &[Source::single("a", &a)],
            &[NamedModel { name: "b", model: &b }],
            &[AttackConfig { eps: 0.0, ..AttackConfig::default() }],
            &data,
            MatrixOptions {
                policy: DenominatorPolicy::All,
                seed: 0,
            },
        )
        .unwrap();
        let c = all.rows[0].cells[0];
        assert_eq!(c.total, 12);
        assert_eq!(c.hits, 12 - all.clean[0].hits);
    }

    #[test]
    fn deterministic_and_validated() {
        let (a, b, data) = setup();
        let sources = [Source::single("a", &a), Source::ensemble("ab", vec![&a, &b])];
        let targets = [NamedModel { name: "b", model: &b }];
        let mut rdim = AttackConfig::default();
        rdim.name = "rdim".into();
        rdim.transform = crate::attack::TransformKind::Rdim;
        rdim.diversity_scales = vec![8, 9];
        let attacks = [AttackConfig::default(), rdim];
        let r1 = run_matrix(&sources, &targets, &attacks, &data, MatrixOptions::default()).unwrap();
        let r2 = run_matrix(&sources, &targets, &attacks, &data, MatrixOptions::default()).unwrap();
        assert_eq!(r1.to_csv(), r2.to_csv());
        assert_eq!(r1.rows.len(), 4);
        let dup = [AttackConfig::default(), AttackConfig::default()];
        assert!(run_matrix(&sources, &targets, &dup, &data, MatrixOptions::default()).is_err());
        assert!(run_matrix(&sources, &targets, &attacks, &[], MatrixOptions::default()).is_err());
    }
}
