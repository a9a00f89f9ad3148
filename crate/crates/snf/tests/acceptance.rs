//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the PASS/FAIL lines are
//! always visible. `cargo test -p snf --test acceptance -- 3 10` runs a subset.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::HashMap;
use std::net::TcpListener;
use std::path::Path;
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use common::{random_matrix, random_net, DenseMlp};
use snf::config::{Mode, RunConfig};
use snf::run::{self, FitOutcome};
use snf::transport;
use snf_core::codec::{decode_prefix, pack};
use snf_core::metrics::{self, max_drawdown};
use snf_core::net::GrowInit;
use snf_core::signal::{image_from_pixels, partition_spatial, Grid};
use snf_core::train::{matched_width, train_stage};
use snf_core::{ActivationConfig, LossSpec, Matrix, RegionMask, RngState, StreamableNet, TrainConfig};

/// Stage PSNRs (dB) of `presets/image.cfg`, recorded from a reference run.
const IMAGE_GOLDENS: [f64; 4] = [14.135, 17.016, 19.448, 21.845];
const GOLDEN_TOL_DB: f64 = 0.5;
const MIN_GAIN_DB: f64 = 2.0;
const SLIMMABLE_MARGIN_DB: f64 = 0.5;
const OUTSIDE_ABS_MAX: f64 = 0.05;
const SEAM_FACTOR: f64 = 2.0;
const VIDEO_MIN_PSNR: f64 = 30.0;
const FD_EPS: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
const EXACT_TOL: f64 = 1e-12;
const SEEDS: [u64; 3] = [0, 1, 2];
/// Learning rate of the stability study. At the image preset's 2e-4 neither
/// model ever loses PSNR, so drawdowns are all zero.
const STABILITY_LR: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Verdict { pass, detail }
    }
}

fn within(elapsed: Duration, limit_s: u64, v: Verdict) -> Verdict {
    let ok = elapsed <= Duration::from_secs(limit_s);
    Verdict::new(v.pass && ok, format!("{}; {:.1} s (limit {limit_s} s)", v.detail, elapsed.as_secs_f64()))
}

fn preset(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name);
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Training runs shared between criteria, keyed by their full configuration.
#[derive(Default)]
struct Runs {
    cache: HashMap<String, FitOutcome>,
}

impl Runs {
    fn fit(&mut self, cfg: &RunConfig) -> &FitOutcome {
        self.cache
            .entry(format!("{cfg:?}"))
            .or_insert_with(|| run::fit(cfg).unwrap_or_else(|e| panic!("training failed: {e}")))
    }
}

fn psnrs(out: &FitOutcome) -> Vec<f64> {
    out.report.stages.iter().map(|s| s.psnr).collect()
}

fn fmt_db(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn gradients() -> Verdict {
    let loss_at = |net: &StreamableNet, x: &Matrix, y: &Matrix, loss: &LossSpec| {
        loss.evaluate(&net.forward(x, net.num_stages()).unwrap(), y).unwrap()
    };
    let mut rng = RngState::new(2024);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for trial in 0..20 {
        let net = random_net(&mut rng, 3, 16, 3);
        let x = random_matrix(8, net.in_dim(), &mut rng);
        let y = random_matrix(8, net.out_dim(), &mut rng);
        let loss = if trial % 2 == 0 {
            LossSpec::full()
        } else {
            LossSpec::masked(RegionMask::new((0..8).map(|i| i % 3 != 0).collect()))
        };
        let k = net.num_stages();
        let (_, grads) = net.backward(&x, &y, k, &loss).unwrap();
        for s in 1..=k {
            let analytic: Vec<f64> = grads.stage(s).unwrap().values().collect();
            for (i, &a) in analytic.iter().enumerate() {
                let probe = |delta: f64| {
                    let mut n = net.clone();
                    let mut j = i;
                    for slice in n.blocks_mut(s).unwrap().slices_mut() {
                        if j < slice.len() {
                            slice[j] += delta;
                            break;
                        }
                        j -= slice.len();
                    }
                    loss_at(&n, &x, &y, &loss)
                };
                let numeric = (probe(FD_EPS) - probe(-FD_EPS)) / (2.0 * FD_EPS);
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    Verdict::new(
        worst < FD_REL_TOL,
        format!("{checked} entries, worst relative error {worst:.2e} (tol {FD_REL_TOL:.0e})"),
    )
}

fn invariants() -> Verdict {
    let mut failures = Vec::new();
    let mut rng = RngState::new(7);

    // growth leaves every existing prefix and the new full width unchanged
    let mut growth_ok = true;
    for _ in 0..10 {
        let mut net = random_net(&mut rng, 3, 12, 3);
        let x = random_matrix(16, net.in_dim(), &mut rng);
        let k = net.num_stages();
        let before: Vec<Matrix> = (1..=k).map(|s| net.forward(&x, s).unwrap()).collect();
        let w = *net.stage_widths().last().unwrap();
        net.grow(w + 3, &mut rng).unwrap();
        growth_ok &= (1..=k).all(|s| net.forward(&x, s).unwrap() == before[s - 1]);
        growth_ok &= net.forward(&x, k + 1).unwrap() == before[k - 1];
    }
    if !growth_ok {
        failures.push("growth changed an output");
    }

    // residuals telescope and the blocks flatten to a plain dense MLP
    let (mut telescope, mut flat): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let net = random_net(&mut rng, 3, 16, 3);
        let x = random_matrix(16, net.in_dim(), &mut rng);
        let k = net.num_stages();
        let mut sum = net.forward(&x, 1).unwrap();
        for s in 2..=k {
            sum = sum.add(&net.forward_residual(&x, s).unwrap()).unwrap();
        }
        telescope = telescope.max(sum.max_abs_diff(&net.forward(&x, k).unwrap()));
        for s in 1..=k {
            flat = flat.max(DenseMlp::from_net(&net, s).forward(&x).max_abs_diff(&net.forward(&x, s).unwrap()));
        }
    }
    if telescope >= EXACT_TOL {
        failures.push("residuals do not telescope");
    }
    if flat >= EXACT_TOL {
        failures.push("dense flattening differs");
    }

    let px: Vec<u8> = (0..12 * 10 * 3).map(|_| (rng.next_u64() % 256) as u8).collect();
    let sig = image_from_pixels(12, 10, 3, &px).unwrap();
    let cfg = |epochs| TrainConfig { lr: 1e-3, epochs, log_every: 5, ..TrainConfig::default() };
    let mut net = StreamableNet::new(2, 3, 3, 4, ActivationConfig::default(), &mut rng).unwrap();
    net.set_value_map(sig.value_map);

    // full-region masked loss trains exactly like the plain loss
    let mut a = net.clone();
    let mut b = net.clone();
    let ra = train_stage(&mut a, &sig, &LossSpec::full(), &cfg(20)).unwrap();
    let rb = train_stage(&mut b, &sig, &LossSpec::masked(RegionMask::all(sig.len())), &cfg(20)).unwrap();
    if a != b || ra != rb {
        failures.push("all-true mask differs from the plain loss");
    }

    // earlier stages stay bit-identical while later stages train
    let bits = |n: &StreamableNet| -> Vec<u64> { n.stage(1).unwrap().blocks().values().map(f64::to_bits).collect() };
    let frozen = bits(&a);
    for w in [7, 10] {
        a.grow(w, &mut rng).unwrap();
        train_stage(&mut a, &sig, &LossSpec::full(), &cfg(20)).unwrap();
    }
    if bits(&a) != frozen || a.forward(&sig.coords, 1).unwrap() != b.forward(&sig.coords, 1).unwrap() {
        failures.push("frozen stage changed");
    }

    let detail = format!(
        "growth exact: {growth_ok}, telescoping {telescope:.1e}, flattening {flat:.1e}{}",
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
    );
    Verdict::new(failures.is_empty(), detail)
}

fn sinusoid(runs: &mut Runs) -> Verdict {
    let cfg = preset("sinusoid.cfg");
    let signal = run::build_signal(&cfg).unwrap();
    let net = &runs.fit(&cfg).net;
    let k = net.num_stages();
    let map = net.value_map();
    let raw = signal.raw_values();
    let raw_mse: Vec<f64> = (1..=k)
        .map(|s| {
            let pred = net.forward(&signal.coords, s).unwrap().map(|v| map.apply(v));
            metrics::mse(pred.as_slice(), raw.as_slice()).unwrap()
        })
        .collect();
    let centroids: Vec<f64> = (2..=k)
        .map(|s| {
            let res = net.forward_residual(&signal.coords, s).unwrap();
            metrics::spectral_centroid(&metrics::dft_1d(res.as_slice()).unwrap()).unwrap()
        })
        .collect();
    let a = raw_mse.windows(2).all(|w| w[1] < w[0]);
    let b = strictly_increasing(&centroids);
    let c = raw_mse[k - 1] < 0.5 * raw_mse[0];
    let mse_str: Vec<String> = raw_mse.iter().map(|m| format!("{m:.4}")).collect();
    let cen_str: Vec<String> = centroids.iter().map(|m| format!("{m:.2}")).collect();
    Verdict::new(
        a && b && c,
        format!(
            "MSE [{}] decreasing: {a}; residual centroids (stages 2..{k}) [{}] increasing: {b}; last < half first: {c}",
            mse_str.join(", "),
            cen_str.join(", ")
        ),
    )
}

fn spectral(runs: &mut Runs) -> Verdict {
    let p = psnrs(runs.fit(&preset("image.cfg")));
    let monotone = p.windows(2).all(|w| w[1] >= w[0]);
    let gain = p[p.len() - 1] - p[0];
    let golden =
        p.len() == IMAGE_GOLDENS.len() && p.iter().zip(IMAGE_GOLDENS).all(|(a, g)| (a - g).abs() <= GOLDEN_TOL_DB);
    Verdict::new(
        monotone && gain >= MIN_GAIN_DB && golden,
        format!(
            "PSNR {} non-decreasing: {monotone}; gain {gain:.3} dB (min {MIN_GAIN_DB}); goldens {} +-{GOLDEN_TOL_DB}: {golden}",
            fmt_db(&p),
            fmt_db(&IMAGE_GOLDENS)
        ),
    )
}

fn slimmable(runs: &mut Runs) -> Verdict {
    let prog = *psnrs(runs.fit(&preset("image.cfg"))).last().unwrap();
    let slim = psnrs(runs.fit(&preset("image_slimmable.cfg")));
    let margin = prog - slim.last().unwrap();
    Verdict::new(
        margin >= SLIMMABLE_MARGIN_DB,
        format!(
            "progressive {prog:.3} dB, slimmable {} ; margin {margin:.3} dB (min {SLIMMABLE_MARGIN_DB})",
            fmt_db(&slim)
        ),
    )
}

/// Mean absolute difference between neighbouring columns, one value per
/// column pair.
fn column_steps(values: &Matrix, width: usize, height: usize) -> Vec<f64> {
    let c = values.cols();
    (0..width - 1)
        .map(|x| {
            let mut s = 0.0;
            for y in 0..height {
                for ch in 0..c {
                    s += (values[(y * width + x + 1, ch)] - values[(y * width + x, ch)]).abs();
                }
            }
            s / (height * c) as f64
        })
        .collect()
}

fn spatial(runs: &mut Runs) -> Verdict {
    let cfg = preset("spatial.cfg");
    let signal = run::build_signal(&cfg).unwrap();
    let Grid::Image { width, height, .. } = signal.grid else { unreachable!("image preset") };
    let net = &runs.fit(&cfg).net;

    let mask = partition_spatial(&signal, cfg.strips, 1).unwrap();
    let p1 = net.forward(&signal.coords, 1).unwrap();
    let outside: Vec<f64> =
        (0..signal.len()).filter(|&i| !mask.contains(i)).flat_map(|i| p1.row(i).iter().map(|v| v.abs())).collect();
    let outside_mean = mean(&outside);

    // column pairs straddling the strip boundary, and one on either side
    let steps = column_steps(&net.forward(&signal.coords, 2).unwrap(), width, height);
    let seam = width / cfg.strips - 1;
    let at_seam = steps[seam - 1..=seam + 1].iter().copied().fold(0.0, f64::max);
    let interior = median(&steps);
    let pass = outside_mean < OUTSIDE_ABS_MAX && at_seam <= SEAM_FACTOR * interior;
    Verdict::new(
        pass,
        format!(
            "mean |out| outside S {outside_mean:.4} (max {OUTSIDE_ABS_MAX}); seam step {at_seam:.4} vs {SEAM_FACTOR} x median {interior:.4}"
        ),
    )
}

fn temporal(runs: &mut Runs) -> Verdict {
    let cfg = preset("video.cfg");
    let signal = run::build_signal(&cfg).unwrap();
    let net = &runs.fit(&cfg).net;
    let p: Vec<f64> = (1..=cfg.stages())
        .map(|k| {
            let (s, _) = run::stage_target(&cfg, &signal, k).unwrap();
            metrics::unit_psnr(&net.forward(&s.coords, k).unwrap(), &s.values, None).unwrap()
        })
        .collect();
    Verdict::new(
        p.iter().all(|&v| v >= VIDEO_MIN_PSNR),
        format!("stage PSNR on frames 1..4 and 1..8: {} (min {VIDEO_MIN_PSNR})", fmt_db(&p)),
    )
}

fn init_ablation(runs: &mut Runs) -> Verdict {
    let mut zero = Vec::new();
    let mut siren = Vec::new();
    for seed in SEEDS {
        let mut cfg = preset("image.cfg");
        cfg.seed = seed;
        cfg.init_mode = GrowInit::Zero;
        zero.push(*psnrs(runs.fit(&cfg)).last().unwrap());
        cfg.init_mode = GrowInit::Siren;
        siren.push(*psnrs(runs.fit(&cfg)).last().unwrap());
    }
    let (z, s) = (mean(&zero), mean(&siren));
    Verdict::new(
        z >= s,
        format!("final PSNR zero-init {} mean {z:.3}, random-init {} mean {s:.3}", fmt_db(&zero), fmt_db(&siren)),
    )
}

fn stability(runs: &mut Runs) -> Verdict {
    let mut prog = Vec::new();
    let mut ind = Vec::new();
    for seed in SEEDS {
        let mut cfg = preset("image.cfg");
        cfg.seed = seed;
        cfg.lr = STABILITY_LR;
        cfg.log_every = 1;
        let out = runs.fit(&cfg);
        prog.push(max_drawdown(out.report.series.iter().map(|r| r.psnr)));
        let params = out.net.param_count(out.net.num_stages()).unwrap();
        let width = matched_width(out.net.in_dim(), out.net.out_dim(), cfg.depth, params);
        let mut base = cfg.clone();
        base.mode = Mode::Individual;
        base.widths = vec![width];
        base.epochs = vec![cfg.epochs[0]];
        let out = runs.fit(&base);
        ind.push(max_drawdown(out.report.series.iter().map(|r| r.psnr)));
    }
    let (mp, mi) = (median(&prog), median(&ind));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ");
    Verdict::new(
        mi > mp,
        format!(
            "max drawdown (dB) individual [{}] median {mi:.4} > progressive [{}] median {mp:.4}",
            fmt(&ind),
            fmt(&prog)
        ),
    )
}

fn codec_transport(net: &StreamableNet, cfg: &RunConfig) -> Verdict {
    let signal = run::build_signal(cfg).unwrap();
    let bytes = pack(net);
    let k = net.num_stages();
    let mut failures = Vec::new();

    let exact = (1..=k).all(|s| {
        decode_prefix(&bytes, s)
            .map(|d| d.forward(&signal.coords, s).unwrap() == net.forward(&signal.coords, s).unwrap())
            .unwrap_or(false)
    });
    if !exact {
        failures.push("prefix decode not bit-exact");
    }

    let mut undetected = 0;
    for i in 0..bytes.len() {
        for flip in [0x01u8, 0x80] {
            let mut bad = bytes.clone();
            bad[i] ^= flip;
            if decode_prefix(&bad, k).is_ok() {
                undetected += 1;
            }
        }
    }
    if undetected > 0 {
        failures.push("corruption went undetected");
    }

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let stream = bytes.clone();
    let server = thread::spawn(move || transport::serve_on(&listener, &stream, None));
    let mut curve = Vec::new();
    let fetched = transport::fetch(addr, None, |s, n| {
        curve.push(metrics::unit_psnr(&n.forward(&signal.coords, s)?, &signal.values, None)?);
        Ok(())
    })
    .unwrap();
    server.join().unwrap().unwrap();
    let monotone = curve.len() == k && curve.windows(2).all(|w| w[1] >= w[0]);
    if !monotone || fetched.bytes != bytes {
        failures.push("fetched stream wrong or PSNR decreased");
    }

    Verdict::new(
        failures.is_empty(),
        format!(
            "{} bytes, {k} prefixes exact: {exact}; {} flips undetected: {undetected}; fetched PSNR {}{}",
            bytes.len(),
            2 * bytes.len(),
            fmt_db(&curve),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

fn parameter_accounting() -> Verdict {
    let widths: Vec<usize> = (1..=15).map(|k| 4 * k).collect();
    let act = ActivationConfig::default();
    let mut rng = RngState::new(0);
    let net = StreamableNet::with_stages(2, 3, 3, &widths, act, GrowInit::Zero, &mut rng).unwrap();
    let mut cumulative = 0usize;
    let mut ratios = Vec::new();
    for (i, &w) in widths.iter().enumerate() {
        cumulative += StreamableNet::new(2, 3, 3, w, act, &mut rng).unwrap().total_params();
        ratios.push(cumulative as f64 / net.param_count(i + 1).unwrap() as f64);
    }
    let pass = ratios[0] == 1.0 && strictly_increasing(&ratios) && ratios[1..].iter().all(|&r| r > 1.0);
    Verdict::new(
        pass,
        format!(
            "individual/streamable parameter ratio {:.3} at 1 stage -> {:.3} at 15 stages, strictly increasing: {}",
            ratios[0],
            ratios[14],
            strictly_increasing(&ratios)
        ),
    )
}

fn main() -> ExitCode {
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| only.is_empty() || only.contains(&n);
    let mut runs = Runs::default();
    let mut failed = Vec::new();
    let mut report = |n: u32, name: &str, v: Verdict| {
        println!("criterion {n:>2} {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(n);
        }
    };

    macro_rules! timed {
        ($e:expr) => {{
            let t = Instant::now();
            let v = $e;
            (t.elapsed(), v)
        }};
    }

    if wanted(1) {
        let (t, v) = timed!(gradients());
        report(1, "gradient correctness", within(t, 30, v));
    }
    if wanted(2) {
        let (t, v) = timed!(invariants());
        report(2, "structural invariants", within(t, 10, v));
    }
    if wanted(3) {
        let (t, v) = timed!(sinusoid(&mut runs));
        report(3, "1D sinusoid growth", within(t, 120, v));
    }
    if wanted(4) {
        let (t, v) = timed!(spectral(&mut runs));
        report(4, "spectral growing on an image", within(t, 600, v));
    }
    if wanted(5) {
        report(5, "progressive beats slimmable", slimmable(&mut runs));
    }
    if wanted(6) {
        report(6, "spatial growing", spatial(&mut runs));
    }
    if wanted(7) {
        report(7, "temporal growing", temporal(&mut runs));
    }
    if wanted(8) {
        report(8, "zero-init ablation", init_ablation(&mut runs));
    }
    if wanted(9) {
        report(9, "training stability", stability(&mut runs));
    }
    if wanted(10) {
        let cfg = preset("image.cfg");
        let net = runs.fit(&cfg).net.clone();
        let (t, v) = timed!(codec_transport(&net, &cfg));
        report(10, "codec and transport", within(t, 10, v));
    }
    if wanted(11) {
        report(11, "parameter accounting", parameter_accounting());
    }

    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
