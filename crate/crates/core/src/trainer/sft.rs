use super::policy::{accumulate, class_log_probabilities, PolicyParams};
use super::{check_finite, Example, TrainConfig, TrainLogEntry};
use crate::error::{Error, Result};
use crate::par;

/// Inverse-frequency class weights `n / (k * n_c)` over the `k` classes
/// present; absent classes get 0. The weights of all examples sum to `n`.
pub fn class_weights(examples: &[Example]) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for e in examples {
        counts[e.label.index()] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    let n = examples.len() as f64;
    counts.map(|c| if c == 0 { 0.0 } else { n / (present as f64 * c as f64) })
}

/// Class-weighted cross-entropy, averaged over examples, and its gradient
/// laid out like [`PolicyParams::to_flat`].
pub fn sft_loss_and_grad(params: &PolicyParams, examples: &[Example], weights: &[f64; 4]) -> Result<(f64, Vec<f64>)> {
    if examples.is_empty() {
        return Err(Error::InvalidArgument("empty training split".into()));
    }
    let dim = params.dim;
    let (loss, mut grad) = par::chunked_reduce(
        examples,
        Ok((0.0, vec![0.0; params.len()])),
        |chunk| -> Result<(f64, Vec<f64>)> {
            let mut loss = 0.0;
            let mut grad = vec![0.0; 4 * dim + 4];
            for e in chunk {
                let y = e.label.index();
                let lp = class_log_probabilities(params, &e.features)?;
                loss -= weights[y] * lp[y];
                let mut dz = [0.0; 4];
                for k in 0..4 {
                    dz[k] = lp[k].exp() - f64::from(u8::from(k == y));
                }
                accumulate(&mut grad, dim, &e.features, &dz, weights[y]);
            }
            Ok((loss, grad))
        },
        |acc, part| {
            let (mut l, mut g) = acc?;
            let (pl, pg) = part?;
            l += pl;
            for (a, b) in g.iter_mut().zip(pg) {
                *a += b;
            }
            Ok((l, g))
        },
    )?;
    let n = examples.len() as f64;
    for g in grad.iter_mut() {
        *g /= n;
    }
    Ok((loss / n, grad))
}

/// Full-batch gradient descent on the class-weighted cross-entropy from a
/// seeded random start.
pub fn train_sft(examples: &[Example], config: &TrainConfig) -> Result<(PolicyParams, Vec<TrainLogEntry>)> {
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty training split".into()))?;
    config.validate()?;
    let mut params = PolicyParams::random(first.features.len(), config.init_scale, config.seed);
    let weights = class_weights(examples);
    let mut log = Vec::with_capacity(config.sft_epochs);
    for epoch in 0..config.sft_epochs {
        let (loss, grad) = sft_loss_and_grad(&params, examples, &weights)?;
        check_finite(epoch, loss, &grad)?;
        log.push(TrainLogEntry {
            stage: "sft".into(),
            epoch,
            loss,
            mean_margin: None,
            frac_negative_margin: None,
        });
        params.descend(&grad, config.learning_rate);
    }
    Ok((params, log))
}
