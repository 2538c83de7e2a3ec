use super::clip::clip_delta;
use super::{ClientDataset, Result, RoundConfig};
use crate::model::{loss_and_grad, ModelError, ModelParameters};
use crate::par::Parallelism;
use crate::rng::{domain, stream};
use rand::seq::SliceRandom;

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u64,
    /// Clipped delta `θ − w`.
    pub delta: Vec<f64>,
    /// Norm before clipping.
    pub norm: f64,
    pub clipped: bool,
    /// Mean of the local minibatch losses.
    pub loss: f64,
}

/// Local SGD from `w` over the client's data, then clipping of the delta.
/// Batches follow a per-(round, client, epoch) seeded shuffle, so the
/// result is independent of scheduling. A non-finite loss or gradient is
/// an error; the server drops such clients.
pub fn client_update(
    w: &ModelParameters,
    data: &ClientDataset,
    cfg: &RoundConfig,
    round: u64,
) -> Result<ClientUpdate> {
    let seqs = data.sequences();
    let mut theta = w.clone();
    let mut losses = Vec::new();
    for epoch in 0..cfg.local_epochs {
        let mut order: Vec<usize> = (0..seqs.len()).collect();
        order.shuffle(&mut stream(
            cfg.seed,
            &[domain::CLIENT_UPDATE, round, data.client_id, epoch],
        ));
        for batch in order.chunks(cfg.local_batch_size.max(1)) {
            let b: Vec<&[u32]> = batch.iter().map(|&i| seqs[i]).collect();
            let (loss, grad) = loss_and_grad(&theta, &b, Parallelism::Sequential)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(ModelError::NonFinite("local loss").into());
            }
            losses.push(loss);
            for (t, g) in theta.flat_mut().iter_mut().zip(&grad) {
                *t -= cfg.client_lr * g;
            }
        }
    }
    if !theta.is_finite() {
        return Err(ModelError::NonFinite("local model").into());
    }
    let delta: Vec<f64> = theta.flat().iter().zip(w.flat()).map(|(t, w)| t - w).collect();
    let (delta, norm) = clip_delta(delta, cfg.clip_norm);
    let loss = if losses.is_empty() {
        0.0
    } else {
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    Ok(ClientUpdate {
        client_id: data.client_id,
        delta,
        norm,
        clipped: norm > cfg.clip_norm,
        loss,
    })
}
