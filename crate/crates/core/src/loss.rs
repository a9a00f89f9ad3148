//! Full and region-masked mean squared error.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Membership flags for the samples a sub-network is responsible for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    members: Vec<bool>,
}

impl RegionMask {
    pub fn new(members: Vec<bool>) -> Self {
        RegionMask { members }
    }

    pub fn all(n: usize) -> Self {
        RegionMask { members: alloc::vec![true; n] }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.members
    }

    pub fn count(&self) -> usize {
        self.members.iter().filter(|&&m| m).count()
    }

    /// Indices inside the region.
    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.members.len() == other.members.len() && self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec {
    /// Mean over samples of the squared error summed over channels.
    FullMse,
    /// Like `FullMse` inside the region; outside it the prediction is pulled to zero.
    MaskedMse(RegionMask),
}

impl LossSpec {
    pub fn full() -> Self {
        LossSpec::FullMse
    }

    pub fn masked(mask: RegionMask) -> Self {
        LossSpec::MaskedMse(mask)
    }

    /// The target the squared error is taken against: the given targets, with
    /// samples outside the mask replaced by zero.
    pub fn effective_target<'a>(&self, targets: &'a Matrix) -> Result<Cow<'a, Matrix>> {
        match self {
            LossSpec::FullMse => Ok(Cow::Borrowed(targets)),
            LossSpec::MaskedMse(mask) => {
                if mask.len() != targets.rows() {
                    return Err(Error::shape("masked loss", (targets.rows(), 1), (mask.len(), 1)));
                }
                let mut t = targets.clone();
                for (i, &m) in mask.as_slice().iter().enumerate() {
                    if !m {
                        t.row_mut(i).fill(0.0);
                    }
                }
                Ok(Cow::Owned(t))
            }
        }
    }

    pub fn evaluate(&self, pred: &Matrix, target: &Matrix) -> Result<f64> {
        match self {
            LossSpec::FullMse => loss_full(pred, target),
            LossSpec::MaskedMse(mask) => loss_masked(pred, target, mask),
        }
    }
}

fn check(pred: &Matrix, target: &Matrix) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("loss", target.shape(), pred.shape()));
    }
    if pred.rows() == 0 {
        return Err(Error::arg("loss over zero samples"));
    }
    Ok(())
}

/// `(1/N) sum_i |pred_i - target_i|^2`.
pub fn loss_full(pred: &Matrix, target: &Matrix) -> Result<f64> {
    check(pred, target)?;
    let sum: f64 = pred
        .row_iter()
        .zip(target.row_iter())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum();
    Ok(sum / pred.rows() as f64)
}

/// `(1/N) (sum_{i not in S} |pred_i|^2 + sum_{i in S} |pred_i - target_i|^2)`.
pub fn loss_masked(pred: &Matrix, target: &Matrix, mask: &RegionMask) -> Result<f64> {
    check(pred, target)?;
    if mask.len() != pred.rows() {
        return Err(Error::shape("masked loss", (pred.rows(), 1), (mask.len(), 1)));
    }
    let sum: f64 = pred
        .row_iter()
        .zip(target.row_iter())
        .zip(mask.as_slice())
        .map(|((p, t), &inside)| {
            if inside {
                p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            } else {
                p.iter().map(|a| a * a).sum::<f64>()
            }
        })
        .sum();
    Ok(sum / pred.rows() as f64)
}
