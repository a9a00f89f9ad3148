#![allow(dead_code)]

use snf_core::net::GrowInit;
use snf_core::{ActivationConfig, Matrix, RngState, StreamableNet};

/// Random net with every stage drawn like a fresh network, so no block is
/// trivially zero.
pub fn random_net(rng: &mut RngState, max_depth: usize, max_width: usize, max_stages: usize) -> StreamableNet {
    let in_dim = 1 + (rng.next_u64() % 3) as usize;
    let out_dim = 1 + (rng.next_u64() % 3) as usize;
    let depth = 1 + (rng.next_u64() % max_depth as u64) as usize;
    let stages = 1 + (rng.next_u64() % max_stages as u64) as usize;
    let mut widths = Vec::new();
    let mut w = 0;
    for k in 0..stages {
        let room = max_width - w - (stages - k - 1);
        let step = 1 + (rng.next_u64() % (room.min(8) as u64)) as usize;
        w += step;
        widths.push(w);
    }
    let omega0 = [1.0, 5.0, 30.0][(rng.next_u64() % 3) as usize];
    StreamableNet::with_stages(
        in_dim,
        out_dim,
        depth,
        &widths,
        ActivationConfig::new(omega0).unwrap(),
        GrowInit::Siren,
        rng,
    )
    .unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut RngState) -> Matrix {
    Matrix::uniform(rows, cols, -1.0, 1.0, rng).unwrap()
}

/// Plain dense MLP assembled from the stage blocks: hidden layer `l` is a
/// `w x fan_in` matrix whose rows come from the stages in order, with the
/// entries a stage cannot see (later units) left at zero.
pub struct DenseMlp {
    pub layers: Vec<(Matrix, Vec<f64>)>,
    pub output: Matrix,
    pub omega0: f64,
}

impl DenseMlp {
    pub fn from_net(net: &StreamableNet, stage: usize) -> Self {
        let widths = &net.stage_widths()[..stage];
        let w = widths[stage - 1];
        let mut layers = Vec::new();
        for l in 0..net.depth() {
            let fan_in = if l == 0 { net.in_dim() } else { w };
            let mut m = Matrix::zeros(w, fan_in);
            let mut b = vec![0.0; w];
            let mut row = 0;
            for k in 1..=stage {
                let block = &net.stage(k).unwrap().blocks().hidden[l];
                for u in 0..block.weights.rows() {
                    m.row_mut(row)[..block.weights.cols()].copy_from_slice(block.weights.row(u));
                    b[row] = block.bias[u];
                    row += 1;
                }
            }
            layers.push((m, b));
        }
        let mut output = Matrix::zeros(net.out_dim(), w);
        let mut col = 0;
        for k in 1..=stage {
            let o = &net.stage(k).unwrap().blocks().output;
            for c in 0..o.cols() {
                for r in 0..o.rows() {
                    output.row_mut(r)[col] = o[(r, c)];
                }
                col += 1;
            }
        }
        DenseMlp { layers, output, omega0: net.activation().omega0 }
    }

    pub fn forward(&self, coords: &Matrix) -> Matrix {
        let mut h = coords.clone();
        for (l, (w, b)) in self.layers.iter().enumerate() {
            let z = h.matmul(&w.transpose()).unwrap();
            let scale = if l == 0 { self.omega0 } else { 1.0 };
            h = Matrix::from_fn(z.rows(), z.cols(), |r, c| (scale * (z[(r, c)] + b[c])).sin());
        }
        h.matmul(&self.output.transpose()).unwrap()
    }
}
