use rayon::prelude::*;

use super::{softmax_cross_entropy, Classifier, LabeledExample, Network};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::Rng;

/// Plain minibatch SGD settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch.
    pub epoch_losses: Vec<f64>,
    /// Accuracy on the training set after the last epoch.
    pub final_accuracy: f64,
}

/// Trains `model` in place. Per-example gradients are computed in parallel
/// but summed in example order, so the result depends only on `cfg.seed`.
pub fn train<T: Scalar, N: Network<T>>(
    model: &mut N,
    data: &[LabeledExample<T>],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.learning_rate > 0.0) || cfg.batch_size == 0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate and batch size must be positive ({cfg:?})"
        )));
    }
    let classes = model.num_classes();
    for (i, ex) in data.iter().enumerate() {
        if ex.label >= classes {
            return Err(Error::LabelOutOfRange { label: ex.label, classes }.context(format!("example {i}")));
        }
        ex.image
            .expect_shape(model.input_shape())
            .map_err(|e| e.context(format!("example {i}")))?;
    }

    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let sizes: Vec<usize> = model.params().iter().map(|p| p.data.len()).collect();

    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let model_ref: &N = model;
            let per_example: Vec<(T, Vec<Vec<T>>)> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &data[i];
                    let trace = model_ref.forward(&ex.image)?;
                    let (loss, upstream) = softmax_cross_entropy(&trace.logits, ex.label)?;
                    let mut grads: Vec<Vec<T>> = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
                    model_ref.backward_with_params(&trace, &upstream, &mut grads);
                    Ok((loss, grads))
                })
                .collect::<Result<_>>()?;

            let step = T::of(cfg.learning_rate / batch.len() as f64);
            let mut sum: Vec<Vec<T>> = sizes.iter().map(|&n| vec![T::zero(); n]).collect();
            for (loss, grads) in &per_example {
                total_loss += loss.as_f64();
                for (acc, g) in sum.iter_mut().zip(grads) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += v;
                    }
                }
            }
            for (param, g) in model.params_mut().iter_mut().zip(&sum) {
                for (w, &v) in param.data.iter_mut().zip(g) {
                    *w -= step * v;
                }
            }
        }
        epoch_losses.push(total_loss / data.len() as f64);
    }

    Ok(TrainReport {
        epoch_losses,
        final_accuracy: accuracy(model, data)?,
    })
}

/// Fraction of examples whose prediction matches the label.
pub fn accuracy<T: Scalar, C: Classifier<T> + ?Sized>(model: &C, data: &[LabeledExample<T>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let correct = data
        .par_iter()
        .map(|ex| model.predict(&ex.image).map(|p| usize::from(p == ex.label)))
        .collect::<Result<Vec<_>>>()?;
    Ok(correct.iter().sum::<usize>() as f64 / data.len() as f64)
}
