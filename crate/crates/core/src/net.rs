//! The width-partitioned sine MLP.
//!
//! Hidden units are grouped into stages. Stage `i` owns, at every hidden
//! layer, the rows of its own units: weights from all units of the previous
//! layer that existed when it was added (the lateral part) plus weights among
//! its own units (the new-to-new part), and a bias segment. It also owns the
//! output-layer columns reading its last-layer units. Units never read from
//! stages added after them, so evaluating the first `k` stages is a complete
//! network on its own.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::LossSpec;
use crate::tensor::{Matrix, RngState};

pub const DEFAULT_OMEGA0: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationConfig {
    /// Frequency factor applied to the first layer's pre-activation.
    pub omega0: f64,
}

impl ActivationConfig {
    pub fn new(omega0: f64) -> Result<Self> {
        if !omega0.is_finite() || omega0 <= 0.0 {
            return Err(Error::arg("omega0 must be positive and finite"));
        }
        Ok(ActivationConfig { omega0 })
    }
}

impl Default for ActivationConfig {
    fn default() -> Self {
        ActivationConfig { omega0: DEFAULT_OMEGA0 }
    }
}

/// Affine map from network outputs to presentation values:
/// `display = output * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueMap {
    pub scale: f64,
    pub offset: f64,
}

impl ValueMap {
    pub const IDENTITY: ValueMap = ValueMap { scale: 1.0, offset: 0.0 };
    /// Network range `[-1, 1]` to unit range `[0, 1]`.
    pub const UNIT: ValueMap = ValueMap { scale: 0.5, offset: 0.5 };

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        v * self.scale + self.offset
    }
}

impl Default for ValueMap {
    fn default() -> Self {
        ValueMap::IDENTITY
    }
}

/// How the non-lateral parameters of a freshly grown stage start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrowInit {
    /// New-to-new weights, biases and output columns start at zero.
    #[default]
    Zero,
    /// Everything new is drawn the way a fresh network would be.
    Siren,
}

/// One hidden layer's rows for one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBlock {
    /// `stage width x fan_in`. For layers after the first, columns
    /// `0..fan_in - stage width` are lateral, the rest are new-to-new.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// All parameters introduced by one stage. Also reused as the container for
/// gradients and optimizer moments, which have the same shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct StageBlocks {
    pub hidden: Vec<LayerBlock>,
    /// `out_dim x stage width`
    pub output: Matrix,
}

impl StageBlocks {
    pub fn zeros_like(other: &StageBlocks) -> Self {
        StageBlocks {
            hidden: other
                .hidden
                .iter()
                .map(|l| LayerBlock {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            output: Matrix::zeros(other.output.rows(), other.output.cols()),
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>() + self.output.len()
    }

    /// Every parameter slice in a fixed order.
    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.hidden
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .chain(core::iter::once(self.output.as_slice()))
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.hidden
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .chain(core::iter::once(self.output.as_mut_slice()))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.slices().flat_map(|s| s.iter().copied())
    }

    fn same_shape(&self, other: &StageBlocks) -> bool {
        self.hidden.len() == other.hidden.len()
            && self
                .hidden
                .iter()
                .zip(&other.hidden)
                .all(|(a, b)| a.weights.shape() == b.weights.shape() && a.bias.len() == b.bias.len())
            && self.output.shape() == other.output.shape()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    width: usize,
    frozen: bool,
    blocks: StageBlocks,
}

impl Stage {
    /// Number of hidden units this stage adds per layer.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn blocks(&self) -> &StageBlocks {
        &self.blocks
    }
}

/// Gradients for the trainable stages `first..first + blocks.len()` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    first: usize,
    blocks: Vec<StageBlocks>,
}

impl GradientSet {
    /// 1-based index of the first stage covered.
    pub fn first_stage(&self) -> usize {
        self.first + 1
    }

    /// 1-based index of the last stage covered.
    pub fn last_stage(&self) -> usize {
        self.first + self.blocks.len()
    }

    pub fn stage(&self, stage: usize) -> Option<&StageBlocks> {
        stage.checked_sub(self.first + 1).and_then(|i| self.blocks.get(i))
    }

    pub fn blocks(&self) -> &[StageBlocks] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [StageBlocks] {
        &mut self.blocks
    }

    /// Zero gradients for every unfrozen stage of `net`.
    pub fn zeros_for(net: &StreamableNet) -> Self {
        let first = net.first_trainable();
        GradientSet { first, blocks: net.stages[first..].iter().map(|s| StageBlocks::zeros_like(&s.blocks)).collect() }
    }

    /// Adds `other` into `self`. `other` must cover a subrange of `self`.
    pub fn accumulate(&mut self, other: &GradientSet) -> Result<()> {
        if other.first < self.first || other.last_stage() > self.last_stage() {
            return Err(Error::arg("gradient accumulation: stage range not covered"));
        }
        for (i, src) in other.blocks.iter().enumerate() {
            let dst = &mut self.blocks[other.first - self.first + i];
            if !dst.same_shape(src) {
                return Err(Error::arg("gradient accumulation: block shapes differ"));
            }
            for (d, s) in dst.slices_mut().zip(src.slices()) {
                for (a, b) in d.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.blocks.iter().flat_map(|b| b.values())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamableNet {
    in_dim: usize,
    out_dim: usize,
    depth: usize,
    stage_widths: Vec<usize>,
    activation: ActivationConfig,
    value_map: ValueMap,
    stages: Vec<Stage>,
}

/// Draws `count` initial weights for a layer with `fan_in` inputs.
///
/// First-layer weights come from `U(-1/n, 1/n)`; every other hidden weight
/// from `U(-sqrt(6/n), sqrt(6/n))`.
pub fn init_siren(fan_in: usize, first_layer: bool, count: usize, rng: &mut RngState) -> Result<Vec<f64>> {
    if fan_in == 0 {
        return Err(Error::arg("init_siren: fan_in must be at least 1"));
    }
    let n = fan_in as f64;
    let bound = if first_layer { 1.0 / n } else { libm::sqrt(6.0 / n) };
    rng.uniform(-bound, bound, count)
}

fn hidden_bias(fan_in: usize, count: usize, rng: &mut RngState) -> Result<Vec<f64>> {
    let bound = 1.0 / libm::sqrt(fan_in as f64);
    rng.uniform(-bound, bound, count)
}

fn output_weights(out_dim: usize, width: usize, fan_in: usize, omega0: f64, rng: &mut RngState) -> Result<Matrix> {
    let bound = libm::sqrt(6.0 / fan_in as f64) / omega0;
    Matrix::uniform(out_dim, width, -bound, bound, rng)
}

impl StreamableNet {
    /// A single-stage network of hidden width `width`.
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        depth: usize,
        width: usize,
        activation: ActivationConfig,
        rng: &mut RngState,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 || depth == 0 || width == 0 {
            return Err(Error::arg("new_net: all dimensions must be at least 1"));
        }
        ActivationConfig::new(activation.omega0)?;
        let mut hidden = Vec::with_capacity(depth);
        for layer in 0..depth {
            let fan_in = if layer == 0 { in_dim } else { width };
            let weights = Matrix::from_vec(width, fan_in, init_siren(fan_in, layer == 0, width * fan_in, rng)?)?;
            hidden.push(LayerBlock { weights, bias: hidden_bias(fan_in, width, rng)? });
        }
        let output = output_weights(out_dim, width, width, activation.omega0, rng)?;
        Ok(StreamableNet {
            in_dim,
            out_dim,
            depth,
            stage_widths: vec![width],
            activation,
            value_map: ValueMap::IDENTITY,
            stages: vec![Stage { width, frozen: false, blocks: StageBlocks { hidden, output } }],
        })
    }

    /// A network with every stage of `widths` present and none frozen.
    pub fn with_stages(
        in_dim: usize,
        out_dim: usize,
        depth: usize,
        widths: &[usize],
        activation: ActivationConfig,
        init: GrowInit,
        rng: &mut RngState,
    ) -> Result<Self> {
        let (&first, rest) = widths.split_first().ok_or_else(|| Error::arg("with_stages: empty width list"))?;
        let mut net = StreamableNet::new(in_dim, out_dim, depth, first, activation, rng)?;
        for &w in rest {
            net.grow_with(w, init, rng)?;
        }
        net.unfreeze_all();
        Ok(net)
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Number of hidden layers.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Cumulative hidden widths, one per stage.
    pub fn stage_widths(&self) -> &[usize] {
        &self.stage_widths
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn activation(&self) -> ActivationConfig {
        self.activation
    }

    pub fn value_map(&self) -> ValueMap {
        self.value_map
    }

    pub fn set_value_map(&mut self, map: ValueMap) {
        self.value_map = map;
    }

    /// Stage `stage` (1-based).
    pub fn stage(&self, stage: usize) -> Option<&Stage> {
        stage.checked_sub(1).and_then(|i| self.stages.get(i))
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub(crate) fn stage_blocks_mut(&mut self, idx: usize) -> &mut StageBlocks {
        &mut self.stages[idx].blocks
    }

    /// Direct access to the parameters of stage `stage` (1-based), frozen or not.
    pub fn blocks_mut(&mut self, stage: usize) -> Option<&mut StageBlocks> {
        self.stages.get_mut(stage.checked_sub(1)?).map(|s| &mut s.blocks)
    }

    /// Hidden-unit offset where stage `idx` (0-based) begins.
    fn offset(&self, idx: usize) -> usize {
        if idx == 0 {
            0
        } else {
            self.stage_widths[idx - 1]
        }
    }

    /// Index (0-based) of the first unfrozen stage, or `num_stages()` if all are frozen.
    pub(crate) fn first_trainable(&self) -> usize {
        self.stages.iter().position(|s| !s.frozen).unwrap_or(self.stages.len())
    }

    pub fn freeze_all(&mut self) {
        self.stages.iter_mut().for_each(|s| s.frozen = true);
    }

    pub fn unfreeze_all(&mut self) {
        self.stages.iter_mut().for_each(|s| s.frozen = false);
    }

    /// Appends a stage so the hidden width becomes `new_width`, using the
    /// default zero initialization for non-lateral parameters.
    pub fn grow(&mut self, new_width: usize, rng: &mut RngState) -> Result<()> {
        self.grow_with(new_width, GrowInit::Zero, rng)
    }

    /// Appends a stage and freezes every existing one.
    ///
    /// Lateral weights (from the coordinates at the first layer, from
    /// existing units elsewhere) are drawn with `init_siren` using the full
    /// visible width as fan-in.
    pub fn grow_with(&mut self, new_width: usize, init: GrowInit, rng: &mut RngState) -> Result<()> {
        let old = *self.stage_widths.last().expect("net has at least one stage");
        if new_width <= old {
            return Err(Error::arg(alloc::format!("grow: new width {new_width} must exceed current width {old}")));
        }
        let delta = new_width - old;
        let mut hidden = Vec::with_capacity(self.depth);
        for layer in 0..self.depth {
            let block = if layer == 0 {
                let weights =
                    Matrix::from_vec(delta, self.in_dim, init_siren(self.in_dim, true, delta * self.in_dim, rng)?)?;
                let bias = match init {
                    GrowInit::Zero => vec![0.0; delta],
                    GrowInit::Siren => hidden_bias(self.in_dim, delta, rng)?,
                };
                LayerBlock { weights, bias }
            } else {
                let mut weights = Matrix::zeros(delta, new_width);
                let lateral = init_siren(new_width, false, delta * old, rng)?;
                for r in 0..delta {
                    weights.row_mut(r)[..old].copy_from_slice(&lateral[r * old..(r + 1) * old]);
                }
                let bias = match init {
                    GrowInit::Zero => vec![0.0; delta],
                    GrowInit::Siren => {
                        let inner = init_siren(new_width, false, delta * delta, rng)?;
                        for r in 0..delta {
                            weights.row_mut(r)[old..].copy_from_slice(&inner[r * delta..(r + 1) * delta]);
                        }
                        hidden_bias(new_width, delta, rng)?
                    }
                };
                LayerBlock { weights, bias }
            };
            hidden.push(block);
        }
        let output = match init {
            GrowInit::Zero => Matrix::zeros(self.out_dim, delta),
            GrowInit::Siren => output_weights(self.out_dim, delta, new_width, self.activation.omega0, rng)?,
        };
        self.freeze_all();
        self.stages.push(Stage { width: delta, frozen: false, blocks: StageBlocks { hidden, output } });
        self.stage_widths.push(new_width);
        Ok(())
    }

    fn check_stage(&self, stage: usize) -> Result<()> {
        if stage == 0 || stage > self.stages.len() {
            return Err(Error::arg(alloc::format!("stage {stage} out of range 1..={}", self.stages.len())));
        }
        Ok(())
    }

    fn check_coords(&self, coords: &Matrix) -> Result<()> {
        if coords.cols() != self.in_dim {
            return Err(Error::shape("forward", (coords.rows(), self.in_dim), coords.shape()));
        }
        Ok(())
    }

    /// Evaluates the sub-network made of stages `1..=stage`.
    pub fn forward(&self, coords: &Matrix, stage: usize) -> Result<Matrix> {
        self.check_stage(stage)?;
        self.check_coords(coords)?;
        Ok(Tape::build(self, coords, stage, stage).output)
    }

    /// The output contribution of stage `stage` alone: the last hidden layer
    /// at width `w_stage`, read only through that stage's output columns.
    pub fn forward_residual(&self, coords: &Matrix, stage: usize) -> Result<Matrix> {
        self.check_stage(stage)?;
        if stage < 2 {
            return Err(Error::arg("forward_residual: stage 1 has no residual, use forward(.., 1)"));
        }
        self.check_coords(coords)?;
        let tape = Tape::build(self, coords, stage, stage);
        let mut out = Matrix::zeros(coords.rows(), self.out_dim);
        tape.add_contribution(self, stage - 1, &mut out);
        Ok(out)
    }

    /// Loss at `stage` and its exact gradient with respect to every unfrozen
    /// stage up to `stage`. Frozen stages get no entries.
    pub fn backward(
        &self,
        coords: &Matrix,
        targets: &Matrix,
        stage: usize,
        loss: &LossSpec,
    ) -> Result<(f64, GradientSet)> {
        self.check_stage(stage)?;
        self.check_coords(coords)?;
        if targets.shape() != (coords.rows(), self.out_dim) {
            return Err(Error::shape("backward", (coords.rows(), self.out_dim), targets.shape()));
        }
        let target = loss.effective_target(targets)?;
        let tape = Tape::build(self, coords, stage, self.first_trainable().min(stage));
        Ok(tape.loss_and_grad(self, coords, &target, stage))
    }

    /// Parameters reachable by `forward(.., stage)`.
    pub fn param_count(&self, stage: usize) -> Result<usize> {
        self.check_stage(stage)?;
        Ok(self.stages[..stage].iter().map(|s| s.blocks.param_count()).sum())
    }

    /// Parameters of all stages.
    pub fn total_params(&self) -> usize {
        self.stages.iter().map(|s| s.blocks.param_count()).sum()
    }

    /// Shape a stage would have if it were added to a net with these dims.
    /// Used by decoders to lay out incoming payloads.
    pub(crate) fn stage_shape(in_dim: usize, out_dim: usize, depth: usize, prev: usize, width: usize) -> StageBlocks {
        let delta = width - prev;
        let hidden = (0..depth)
            .map(|l| LayerBlock {
                weights: Matrix::zeros(delta, if l == 0 { in_dim } else { width }),
                bias: vec![0.0; delta],
            })
            .collect();
        StageBlocks { hidden, output: Matrix::zeros(out_dim, delta) }
    }

    /// Assembles a net from decoded parts. Every stage but the last is frozen.
    pub(crate) fn from_parts(
        in_dim: usize,
        out_dim: usize,
        depth: usize,
        activation: ActivationConfig,
        value_map: ValueMap,
        blocks: Vec<StageBlocks>,
    ) -> Self {
        let mut stage_widths = Vec::with_capacity(blocks.len());
        let mut acc = 0;
        let n = blocks.len();
        let stages = blocks
            .into_iter()
            .enumerate()
            .map(|(i, b)| {
                let width = b.output.cols();
                acc += width;
                stage_widths.push(acc);
                Stage { width, frozen: i + 1 < n, blocks: b }
            })
            .collect();
        StreamableNet { in_dim, out_dim, depth, stage_widths, activation, value_map, stages }
    }

    /// Verifies that `grads` addresses only unfrozen stages with matching shapes.
    pub(crate) fn check_grads(&self, grads: &GradientSet) -> Result<()> {
        for (i, g) in grads.blocks.iter().enumerate() {
            let s =
                self.stages.get(grads.first + i).ok_or_else(|| Error::arg("gradient set addresses a missing stage"))?;
            if s.frozen {
                return Err(Error::arg("gradient set addresses a frozen stage"));
            }
            if !s.blocks.same_shape(g) {
                return Err(Error::arg("gradient shapes do not match the network"));
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Cached forward pass. Activations of stages before `live_from` are
/// computed once; `refresh` recomputes only the rest, which is valid as long
/// as the earlier stages have not changed.
#[derive(Debug, Clone)]
pub struct Tape {
    stage: usize,
    live_from: usize,
    /// Per hidden layer, `N x w_stage` sine outputs.
    acts: Vec<Matrix>,
    /// Per hidden layer, derivative of the activation wrt its pre-activation.
    slopes: Vec<Matrix>,
    /// Output contribution of stages `< live_from`.
    base: Matrix,
    /// Output at `stage`.
    output: Matrix,
}

impl Tape {
    /// Forward pass at `stage` that caches the frozen prefix of `net`.
    pub fn new(net: &StreamableNet, coords: &Matrix, stage: usize) -> Result<Tape> {
        net.check_stage(stage)?;
        net.check_coords(coords)?;
        Ok(Tape::build(net, coords, stage, net.first_trainable().min(stage)))
    }

    /// `stage` is 1-based, `live_from` 0-based (stages `>= live_from` are recomputed on refresh).
    pub(crate) fn build(net: &StreamableNet, coords: &Matrix, stage: usize, live_from: usize) -> Tape {
        let n = coords.rows();
        let width = net.stage_widths[stage - 1];
        let mut tape = Tape {
            stage,
            live_from: live_from.min(stage),
            acts: (0..net.depth).map(|_| Matrix::zeros(n, width)).collect(),
            slopes: (0..net.depth).map(|_| Matrix::zeros(n, width)).collect(),
            base: Matrix::zeros(n, net.out_dim),
            output: Matrix::zeros(n, net.out_dim),
        };
        tape.compute_units(net, coords, 0);
        for idx in 0..tape.live_from {
            let mut base = core::mem::replace(&mut tape.base, Matrix::zeros(0, 0));
            tape.add_contribution(net, idx, &mut base);
            tape.base = base;
        }
        tape.finish_output(net);
        tape
    }

    /// Recomputes the live stages after their parameters changed.
    pub(crate) fn refresh(&mut self, net: &StreamableNet, coords: &Matrix) {
        self.compute_units(net, coords, self.live_from);
        self.finish_output(net);
    }

    pub fn output(&self) -> &Matrix {
        &self.output
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    /// Output of the narrower prefix `stage <= self.stage()`.
    pub fn prefix_output(&self, net: &StreamableNet, stage: usize) -> Result<Matrix> {
        if stage == 0 || stage > self.stage {
            return Err(Error::arg("prefix_output: stage outside the taped range"));
        }
        Ok(self.output_at(net, stage))
    }

    fn finish_output(&mut self, net: &StreamableNet) {
        let mut out = self.base.clone();
        for idx in self.live_from..self.stage {
            self.add_contribution(net, idx, &mut out);
        }
        self.output = out;
    }

    /// Output at a narrower prefix, reusing the cached activations.
    pub(crate) fn output_at(&self, net: &StreamableNet, stage: usize) -> Matrix {
        debug_assert!(stage <= self.stage);
        let mut out = Matrix::zeros(self.output.rows(), net.out_dim);
        for idx in 0..stage {
            self.add_contribution(net, idx, &mut out);
        }
        out
    }

    fn add_contribution(&self, net: &StreamableNet, idx: usize, out: &mut Matrix) {
        let last = &self.acts[net.depth - 1];
        let off = net.offset(idx);
        let w_out = &net.stages[idx].blocks.output;
        let delta = net.stages[idx].width;
        for r in 0..out.rows() {
            let h = &last.row(r)[off..off + delta];
            let o_row = out.row_mut(r);
            for (o, y) in o_row.iter_mut().enumerate() {
                *y += dot(h, w_out.row(o));
            }
        }
    }

    fn compute_units(&mut self, net: &StreamableNet, coords: &Matrix, from_stage: usize) {
        let omega0 = net.activation.omega0;
        let width = self.acts[0].cols();
        for layer in 0..net.depth {
            let (prev_layers, rest) = self.acts.split_at_mut(layer);
            let acts = &mut rest[0];
            let slopes = &mut self.slopes[layer];
            for idx in from_stage..self.stage {
                let off = net.offset(idx);
                let block = &net.stages[idx].blocks.hidden[layer];
                let fan_in = block.weights.cols();
                for r in 0..coords.rows() {
                    let input = if layer == 0 { coords.row(r) } else { &prev_layers[layer - 1].row(r)[..fan_in] };
                    let a_row = &mut acts.as_mut_slice()[r * width..(r + 1) * width];
                    let s_row = &mut slopes.as_mut_slice()[r * width..(r + 1) * width];
                    for u in 0..block.weights.rows() {
                        let z = dot(input, block.weights.row(u)) + block.bias[u];
                        let (s, c) = if layer == 0 { libm::sincos(omega0 * z) } else { libm::sincos(z) };
                        a_row[off + u] = s;
                        s_row[off + u] = if layer == 0 { omega0 * c } else { c };
                    }
                }
            }
        }
    }

    /// Mean squared error of the output at `stage` against `target` and the
    /// gradient for the unfrozen stages up to `stage`.
    pub(crate) fn loss_and_grad(
        &self,
        net: &StreamableNet,
        coords: &Matrix,
        target: &Matrix,
        stage: usize,
    ) -> (f64, GradientSet) {
        let pred_owned;
        let pred = if stage == self.stage {
            &self.output
        } else {
            pred_owned = self.output_at(net, stage);
            &pred_owned
        };
        let n = pred.rows();
        let mut d_out = Matrix::zeros(n, net.out_dim);
        let mut loss = 0.0;
        let scale = 2.0 / n as f64;
        for r in 0..n {
            let mut row_sq = 0.0;
            for ((d, &p), &t) in d_out.row_mut(r).iter_mut().zip(pred.row(r)).zip(target.row(r)) {
                let e = p - t;
                row_sq += e * e;
                *d = scale * e;
            }
            loss += row_sq;
        }
        loss /= n as f64;
        let grads = self.backprop(net, coords, &d_out, stage);
        (loss, grads)
    }

    /// Reverse pass from `d_out` (gradient of the loss wrt the output at `stage`).
    pub(crate) fn backprop(&self, net: &StreamableNet, coords: &Matrix, d_out: &Matrix, stage: usize) -> GradientSet {
        let first = net.first_trainable().min(stage);
        let mut grads: Vec<StageBlocks> =
            net.stages[first..stage].iter().map(|s| StageBlocks::zeros_like(&s.blocks)).collect();
        if first == stage {
            return GradientSet { first, blocks: grads };
        }
        let n = coords.rows();
        let lo = net.offset(first);
        let hi = net.stage_widths[stage - 1];
        let live = hi - lo;
        let tape_width = self.acts[0].cols();
        let depth = net.depth;

        // output layer
        let last = &self.acts[depth - 1];
        let mut d_h = Matrix::zeros(n, live);
        for r in 0..n {
            let dy = d_out.row(r);
            let h = &last.row(r)[lo..hi];
            let dh = d_h.row_mut(r);
            for idx in first..stage {
                let off = net.offset(idx) - lo;
                let delta = net.stages[idx].width;
                let w_out = &net.stages[idx].blocks.output;
                let g_out = &mut grads[idx - first].output;
                for (o, &g) in dy.iter().enumerate() {
                    axpy(g, &h[off..off + delta], g_out.row_mut(o));
                    axpy(g, w_out.row(o), &mut dh[off..off + delta]);
                }
            }
        }

        let mut d_z = Matrix::zeros(n, live);
        for layer in (0..depth).rev() {
            let slopes = &self.slopes[layer];
            for r in 0..n {
                let s = &slopes.as_slice()[r * tape_width + lo..r * tape_width + hi];
                for ((z, &h), &sl) in d_z.row_mut(r).iter_mut().zip(d_h.row(r)).zip(s) {
                    *z = h * sl;
                }
            }
            let prev = if layer == 0 { None } else { Some(&self.acts[layer - 1]) };
            let mut next_d_h = if layer == 0 { None } else { Some(Matrix::zeros(n, live)) };
            for r in 0..n {
                let dz = d_z.row(r);
                let input = match prev {
                    None => coords.row(r),
                    Some(p) => p.row(r),
                };
                for idx in first..stage {
                    let off = net.offset(idx) - lo;
                    let block = &net.stages[idx].blocks.hidden[layer];
                    let fan_in = block.weights.cols();
                    let g = &mut grads[idx - first].hidden[layer];
                    for u in 0..block.weights.rows() {
                        let dzu = dz[off + u];
                        axpy(dzu, &input[..fan_in], g.weights.row_mut(u));
                        g.bias[u] += dzu;
                        if let Some(nd) = next_d_h.as_mut() {
                            // only live inputs (>= lo) carry gradient to trainable parameters
                            if fan_in > lo {
                                axpy(dzu, &block.weights.row(u)[lo..fan_in], &mut nd.row_mut(r)[..fan_in - lo]);
                            }
                        }
                    }
                }
            }
            if let Some(nd) = next_d_h {
                d_h = nd;
            }
        }
        GradientSet { first, blocks: grads }
    }
}
