//! The shared epoch/minibatch update loop: shuffle indices, accumulate
//! per-minibatch gradients, clip the global norm, Adam-step every parameter
//! group. A non-finite loss or gradient aborts the whole update and restores
//! the pre-update networks and optimizer state.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::loss::{ppo_loss, ppoc_loss, ppoem_loss, soap_loss, BatchLoss};
use super::targets::{
    ppo_targets, ppoc_targets, ppoem_targets, soap_targets, PpoTargets, PpocTargets, PpoemTargets, SoapTargets,
};
use super::{AgentNets, AlgoKind, HyperParams, NetGrads, Optimizers};
use crate::rollout::{PpocBuffer, RolloutBuffer};
use crate::{Error, Result};

/// A rollout paired with its algorithm-specific advantages and targets,
/// ready for [`update_epoch`].
pub enum RolloutData<'a> {
    Ppo { buf: &'a RolloutBuffer, targets: PpoTargets },
    Soap { buf: &'a RolloutBuffer, targets: SoapTargets },
    Ppoem { buf: &'a RolloutBuffer, targets: PpoemTargets },
    Ppoc { buf: &'a PpocBuffer, targets: PpocTargets },
}

/// Compute targets for a ζ-tracking rollout under the given algorithm.
pub fn prepare_zeta<'a>(algo: AlgoKind, buf: &'a RolloutBuffer, hp: &HyperParams) -> Result<RolloutData<'a>> {
    match algo {
        AlgoKind::Ppo => Ok(RolloutData::Ppo { buf, targets: ppo_targets(buf, hp)? }),
        AlgoKind::Soap => Ok(RolloutData::Soap { buf, targets: soap_targets(buf, hp)? }),
        AlgoKind::Ppoem => Ok(RolloutData::Ppoem { buf, targets: ppoem_targets(buf, hp)? }),
        AlgoKind::Ppoc => Err(Error::Config("sampled-option rollouts use prepare_ppoc".into())),
    }
}

pub fn prepare_ppoc<'a>(buf: &'a PpocBuffer, hp: &HyperParams) -> Result<RolloutData<'a>> {
    Ok(RolloutData::Ppoc { buf, targets: ppoc_targets(buf, hp)? })
}

impl RolloutData<'_> {
    pub fn len(&self) -> usize {
        match self {
            Self::Ppo { buf, .. } | Self::Soap { buf, .. } | Self::Ppoem { buf, .. } => buf.len(),
            Self::Ppoc { buf, .. } => buf.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn loss(&self, nets: &AgentNets, idx: &[usize], hp: &HyperParams, grads: Option<&mut NetGrads>) -> Result<BatchLoss> {
        match self {
            Self::Ppo { buf, targets } => ppo_loss(nets, buf, targets, idx, hp, grads),
            Self::Soap { buf, targets } => soap_loss(nets, buf, targets, idx, hp, grads),
            Self::Ppoem { buf, targets } => ppoem_loss(nets, buf, targets, idx, hp, grads),
            Self::Ppoc { buf, targets } => ppoc_loss(nets, buf, targets, idx, hp, grads),
        }
    }
}

/// Mean per-minibatch training metrics of one update.
#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateMetrics {
    pub loss_policy: f64,
    pub loss_value: f64,
    pub entropy: f64,
    pub clip_frac: f64,
}

/// Run the configured number of epochs of shuffled minibatch steps over one
/// prepared rollout.
pub fn update_epoch(
    data: &RolloutData<'_>,
    nets: &mut AgentNets,
    opts: &mut Optimizers,
    hp: &HyperParams,
    shuffle_rng: &mut ChaCha8Rng,
) -> Result<UpdateMetrics> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty rollout".into()));
    }
    let nets_snapshot = nets.clone();
    let opts_snapshot = opts.clone();
    let mut indices: Vec<usize> = (0..data.len()).collect();
    let mut sums = UpdateMetrics::default();
    let mut batches = 0usize;
    let mut failure: Option<Error> = None;
    'epochs: for _ in 0..hp.epochs {
        indices.shuffle(shuffle_rng);
        for chunk in indices.chunks(hp.minibatch_size) {
            let mut grads = NetGrads::zeros(nets);
            let loss = match data.loss(nets, chunk, hp, Some(&mut grads)) {
                Ok(loss) => loss,
                Err(e) => {
                    failure = Some(e);
                    break 'epochs;
                }
            };
            if !grads.all_finite() {
                failure = Some(Error::Numerical("non-finite gradient".into()));
                break 'epochs;
            }
            grads.clip_global_norm(hp.max_grad_norm);
            if let Err(e) = opts.step(nets, &grads) {
                failure = Some(e);
                break 'epochs;
            }
            sums.loss_policy += loss.policy;
            sums.loss_value += loss.value;
            sums.entropy += loss.entropy;
            sums.clip_frac += loss.clip_frac;
            batches += 1;
        }
    }
    if let Some(e) = failure {
        *nets = nets_snapshot;
        *opts = opts_snapshot;
        return Err(e);
    }
    let k = batches.max(1) as f64;
    Ok(UpdateMetrics {
        loss_policy: sums.loss_policy / k,
        loss_value: sums.loss_value / k,
        entropy: sums.entropy / k,
        clip_frac: sums.clip_frac / k,
    })
}
