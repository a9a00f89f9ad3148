//! Progressive, slimmable and fixed-width training.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::{LossSpec, RegionMask};
use crate::metrics::{self, LogRow, MetricsReport, StageMetrics};
use crate::net::{ActivationConfig, GradientSet, GrowInit, StreamableNet, Tape};
use crate::optim::{AdamState, TrainConfig};
use crate::signal::{Grid, SampledSignal};
use crate::tensor::{Matrix, RngState};

/// Training aborts once the loss exceeds this multiple of its first value.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// One growth step: widen to `width`, then train for `epochs` with `loss`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanStage {
    pub width: usize,
    pub epochs: usize,
    pub loss: LossSpec,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GrowthPlan {
    pub stages: Vec<PlanStage>,
    pub init: GrowInit,
}

impl GrowthPlan {
    /// Same loss for every stage, `epochs` each.
    pub fn uniform(widths: &[usize], epochs: usize) -> Self {
        GrowthPlan {
            stages: widths.iter().map(|&width| PlanStage { width, epochs, loss: LossSpec::full() }).collect(),
            init: GrowInit::Zero,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.width).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::arg("growth plan is empty"));
        }
        if self.stages.windows(2).any(|w| w[0].width >= w[1].width) {
            return Err(Error::arg("growth plan widths must be strictly increasing"));
        }
        if self.stages.iter().any(|s| s.epochs == 0) {
            return Err(Error::arg("every plan stage needs at least one epoch"));
        }
        Ok(())
    }
}

fn check_signal(net: &StreamableNet, signal: &SampledSignal) -> Result<()> {
    if signal.coords.cols() != net.in_dim() || signal.values.cols() != net.out_dim() {
        return Err(Error::shape(
            "signal",
            (net.in_dim(), net.out_dim()),
            (signal.coords.cols(), signal.values.cols()),
        ));
    }
    if signal.is_empty() {
        return Err(Error::arg("signal has no samples"));
    }
    Ok(())
}

/// Rows compared when logging PSNR: the trained region for masked losses.
fn region_of(loss: &LossSpec) -> Option<&[bool]> {
    match loss {
        LossSpec::FullMse => None,
        LossSpec::MaskedMse(mask) => Some(mask.as_slice()),
    }
}

struct Batch {
    coords: Matrix,
    target: Matrix,
    tape: Tape,
}

fn make_batches(
    net: &StreamableNet,
    coords: &Matrix,
    target: &Matrix,
    stage: usize,
    live_from: usize,
    cfg: &TrainConfig,
) -> Vec<Batch> {
    let n = coords.rows();
    match cfg.batch_size {
        Some(b) if b < n => {
            // one seeded permutation, then fixed contiguous batches
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = RngState::new(cfg.seed ^ 0x5eed_ba7c);
            for i in (1..n).rev() {
                let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                order.swap(i, j);
            }
            order
                .chunks(b)
                .map(|idx| {
                    let c = coords.select_rows(idx.iter().copied());
                    let t = target.select_rows(idx.iter().copied());
                    let tape = Tape::build(net, &c, stage, live_from);
                    Batch { coords: c, target: t, tape }
                })
                .collect()
        }
        _ => {
            let tape = Tape::build(net, coords, stage, live_from);
            alloc::vec![Batch { coords: coords.clone(), target: target.clone(), tape }]
        }
    }
}

fn diverged(loss: f64, first: Option<f64>) -> bool {
    !loss.is_finite() || first.is_some_and(|f| loss > DIVERGENCE_FACTOR * f.max(f64::MIN_POSITIVE))
}

/// Trains the newest stage of `net` for `cfg.epochs` full passes. All earlier
/// stages must be frozen; they are left bit-for-bit unchanged.
pub fn train_stage(
    net: &mut StreamableNet,
    signal: &SampledSignal,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    check_signal(net, signal)?;
    let stage = net.num_stages();
    if net.first_trainable() != stage - 1 {
        return Err(Error::arg("train_stage: exactly the newest stage must be trainable"));
    }
    let target = loss.effective_target(&signal.values)?.into_owned();
    let region = region_of(loss);
    let mut batches = make_batches(net, &signal.coords, &target, stage, stage - 1, cfg);
    let mut adam = AdamState::for_net(net);
    let mut report = MetricsReport::default();
    let mut first_loss = None;

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for (bi, batch) in batches.iter_mut().enumerate() {
            if epoch > 0 || bi > 0 {
                batch.tape.refresh(net, &batch.coords);
            }
            let (l, grads) = batch.tape.loss_and_grad(net, &batch.coords, &batch.target, stage);
            if diverged(l, first_loss) {
                return Err(Error::Diverged { stage, epoch, loss: l });
            }
            first_loss.get_or_insert(l);
            epoch_loss += l * batch.coords.rows() as f64;
            adam.step(net, &grads, cfg)?;
        }
        epoch_loss /= signal.len() as f64;
        if (epoch + 1) % cfg.log_every == 0 {
            // logged metrics describe the parameters the epoch started from
            let psnr = if batches.len() == 1 {
                metrics::unit_psnr(batches[0].tape.output(), &target, region)?
            } else {
                f64::NAN
            };
            report.series.push(LogRow { epoch: epoch + 1, stage, loss: epoch_loss, psnr });
        }
    }
    let pred = Tape::build(net, &signal.coords, stage, stage).output().clone();
    let final_loss = metrics::unit_mse(&pred, &target, region)?;
    if !final_loss.is_finite() {
        return Err(Error::Diverged { stage, epoch: cfg.epochs, loss: final_loss });
    }
    report.stages.push(StageMetrics::new(stage, net.param_count(stage)?, final_loss, None));
    if batches.len() > 1 {
        for row in report.series.iter_mut() {
            row.psnr = metrics::psnr_from_mse(row.loss / (4.0 * signal.values.cols() as f64), 1.0);
        }
    }
    Ok(report)
}

/// Grows and trains per `plan`. `signals` holds either one signal shared by
/// every stage or one per stage.
///
/// A first plan entry whose width equals the net's current width trains the
/// existing newest stage instead of growing.
pub fn train_progressive(
    net: &mut StreamableNet,
    signals: &[SampledSignal],
    plan: &GrowthPlan,
    cfg: &TrainConfig,
    rng: &mut RngState,
) -> Result<MetricsReport> {
    plan.validate()?;
    if signals.len() != 1 && signals.len() != plan.stages.len() {
        return Err(Error::arg("train_progressive: need one signal or one per stage"));
    }
    let current = *net.stage_widths().last().expect("non-empty net");
    if plan.stages[0].width < current {
        return Err(Error::arg("growth plan starts below the current width"));
    }
    let mut report = MetricsReport::default();
    for (i, ps) in plan.stages.iter().enumerate() {
        if ps.width > current || i > 0 {
            net.grow_with(ps.width, plan.init, rng)?;
        }
        let signal = &signals[if signals.len() == 1 { 0 } else { i }];
        let stage_cfg = TrainConfig { epochs: ps.epochs, ..*cfg };
        let r = train_stage(net, signal, &ps.loss, &stage_cfg)?;
        log::debug!("stage {} (width {}) done: {:?}", net.num_stages(), ps.width, r.stages.last());
        report.extend(r);
    }
    Ok(report)
}

/// Joint training of every width prefix. Each epoch accumulates the gradient
/// of the loss at every prefix and applies one Adam update to all stages.
pub fn train_slimmable(
    net: &mut StreamableNet,
    signal: &SampledSignal,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    cfg.validate()?;
    check_signal(net, signal)?;
    if net.stages().iter().any(|s| s.is_frozen()) {
        return Err(Error::arg("train_slimmable: every stage must be trainable"));
    }
    if cfg.batch_size.is_some_and(|b| b < signal.len()) {
        return Err(Error::arg("train_slimmable runs full batch only"));
    }
    let k = net.num_stages();
    let target = loss.effective_target(&signal.values)?.into_owned();
    let region = region_of(loss);
    let mut tape = Tape::build(net, &signal.coords, k, 0);
    let mut adam = AdamState::for_net(net);
    let mut report = MetricsReport::default();
    let mut first_loss = None;

    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            tape.refresh(net, &signal.coords);
        }
        let (acc, losses) = slimmable_gradient(net, &tape, &signal.coords, &target)?;
        for (s, &l) in losses.iter().enumerate() {
            if diverged(l, first_loss) {
                return Err(Error::Diverged { stage: s + 1, epoch, loss: l });
            }
        }
        first_loss.get_or_insert(losses[k - 1]);
        if (epoch + 1) % cfg.log_every == 0 {
            for (s, &l) in losses.iter().enumerate() {
                let pred = tape.output_at(net, s + 1);
                let psnr = metrics::unit_psnr(&pred, &target, region)?;
                report.series.push(LogRow { epoch: epoch + 1, stage: s + 1, loss: l, psnr });
            }
        }
        adam.step(net, &acc, cfg)?;
    }
    let tape = Tape::build(net, &signal.coords, k, k);
    for s in 1..=k {
        let pred = tape.output_at(net, s);
        let mse = metrics::unit_mse(&pred, &target, region)?;
        report.stages.push(StageMetrics::new(s, net.param_count(s)?, mse, None));
    }
    Ok(report)
}

/// Sum of the gradients of the loss at every prefix `1..=K`, plus each prefix's loss.
pub fn slimmable_gradient(
    net: &StreamableNet,
    tape: &Tape,
    coords: &Matrix,
    target: &Matrix,
) -> Result<(GradientSet, Vec<f64>)> {
    let k = net.num_stages();
    if tape.stage() != k || target.shape() != (coords.rows(), net.out_dim()) || tape.output().rows() != coords.rows() {
        return Err(Error::shape("slimmable_gradient", (coords.rows(), net.out_dim()), target.shape()));
    }
    let mut acc = GradientSet::zeros_for(net);
    let mut losses = Vec::with_capacity(k);
    for s in 1..=k {
        let (l, g) = tape.loss_and_grad(net, coords, target, s);
        acc.accumulate(&g)?;
        losses.push(l);
    }
    Ok((acc, losses))
}

/// Trains a plain single-stage network of the given width from scratch.
/// The network is initialized from `cfg.seed`.
pub fn train_individual(
    width: usize,
    depth: usize,
    activation: ActivationConfig,
    signal: &SampledSignal,
    loss: &LossSpec,
    cfg: &TrainConfig,
) -> Result<(StreamableNet, MetricsReport)> {
    let mut rng = RngState::new(cfg.seed);
    let mut net = StreamableNet::new(signal.coords.cols(), signal.values.cols(), depth, width, activation, &mut rng)?;
    net.set_value_map(signal.value_map);
    let report = train_stage(&mut net, signal, loss, cfg)?;
    Ok((net, report))
}

/// Width of a plain net whose parameter count is closest to `params`
/// (ties toward the narrower net).
pub fn matched_width(in_dim: usize, out_dim: usize, depth: usize, params: usize) -> usize {
    let count = |w: usize| w * in_dim + w + (depth - 1) * (w * w + w) + out_dim * w;
    let mut best = 1;
    let mut w = 1;
    while count(w) <= params.saturating_mul(2) + 16 {
        if count(w).abs_diff(params) < count(best).abs_diff(params) {
            best = w;
        }
        w += 1;
    }
    best
}

/// Evaluates stage `stage` on `signal`, optionally restricted to `region`.
/// SSIM is filled in for full-image evaluations of at least 11x11 pixels.
pub fn evaluate_stage(
    net: &StreamableNet,
    signal: &SampledSignal,
    stage: usize,
    region: Option<&RegionMask>,
) -> Result<StageMetrics> {
    check_signal(net, signal)?;
    let pred = net.forward(&signal.coords, stage)?;
    let rows = region.map(|r| r.as_slice());
    let mse = metrics::unit_mse(&pred, &signal.values, rows)?;
    let ssim = match (signal.grid, region) {
        (Grid::Image { width, height, .. }, None)
            if width >= metrics::SSIM_WINDOW && height >= metrics::SSIM_WINDOW =>
        {
            let p = pred.map(metrics::to_unit);
            let t = signal.values.map(metrics::to_unit);
            Some(metrics::ssim(&p, &t, width, height)?)
        }
        _ => None,
    };
    Ok(StageMetrics::new(stage, net.param_count(stage)?, mse, ssim))
}
