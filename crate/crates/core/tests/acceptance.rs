//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Trained models are cached under `$INTERSPEC_ACCEPTANCE_CACHE` (default:
//! the cargo target tmp dir) keyed by a hash of corpus, network and schedule.
//! Exits non-zero when a closed-form criterion fails or any criterion errors;
//! accuracy shortfalls of trained models are reported without failing.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use interspec::colorimetry::{CameraSensitivities, ColorMatchingFunctions};
use interspec::data::{find_munsell_patch, munsell_patches, Patch};
use interspec::dataset::{Dataset, NamedIlluminant};
use interspec::eval::{evaluate, EvalReport};
use interspec::experiments::{build_corpus, d65_light, metamer_demo, planckian_lights, CorpusConfig};
use interspec::geometry::{build_v_cavity, Facet, VCavity};
use interspec::inverse::{build_basis, estimate_reflectance, ForwardOperator, SolverConfig};
use interspec::kernel::{
    assemble_kernel, cached_kernel, eigendecompose, KernelConfig, KernelMatrix, KernelProvenance,
};
use interspec::net::layers::{pool2_backward, pool2_forward, Conv2d, Linear};
use interspec::net::loss::batch_loss;
use interspec::net::{
    consistency_weights, init_network, train, Checkpoint, ForwardCache, LossWeights, NetworkConfig, PoolKind,
    TrainConfig, TrainOutputs,
};
use interspec::render::{
    direct_irradiance, infinite_bounce_radiance, infinite_bounce_radiance_eig, nbounce_irradiance, render_panel_image,
    PanelImage,
};
use interspec::spectrum::{IlluminantSpd, ReflectanceSpectrum, WavelengthGrid};

type Outcome = interspec::Result<(bool, String)>;

/// Whether a failure should fail the run.
#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Exact,
    Trained,
}

fn cache_dir() -> PathBuf {
    std::env::var_os("INTERSPEC_ACCEPTANCE_CACHE")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"))
}

fn kernel_cfg() -> KernelConfig {
    KernelConfig::default()
}

fn kernel(angle: f64, n: usize) -> interspec::Result<(VCavity, KernelMatrix)> {
    let cav = build_v_cavity(angle, 1.0, n)?;
    let k = cached_kernel(&cav, &kernel_cfg(), Some(&cache_dir().join("kernels")))?;
    Ok((cav, k))
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 { 0.0 } else { (a - b).abs() / scale }
}

fn grid() -> WavelengthGrid {
    WavelengthGrid::visible()
}

fn forward_oracle() -> Outcome {
    let t = Instant::now();
    let patches = munsell_patches(&grid())?;
    let picks = sample(&mut ChaCha8Rng::seed_from_u64(11), patches.len(), 20);
    let e0_spd = IlluminantSpd::equal_energy(grid());
    let mut worst = 0.0f64;
    for angle in [30.0, 45.0, 90.0, 120.0, 150.0] {
        let (cav, k) = kernel(angle, 10)?;
        let e0 = direct_irradiance(&e0_spd, cav.facet_count())?;
        for i in picks.iter() {
            let r = &patches[i].reflectance;
            let closed = infinite_bounce_radiance(&k, r, &e0)?;
            let series = nbounce_irradiance(&k, r, &e0, 200)?;
            let m = cav.facet_count();
            for (l, &rl) in r.values().iter().enumerate() {
                for f in 0..m {
                    let want = rl * series.value(f, l) / std::f64::consts::PI;
                    worst = worst.max(rel_err(closed.value(f, l), want));
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((worst <= 1e-8 && secs < 60.0, format!("max rel err {worst:.2e}, {secs:.1} s")))
}

fn mean_time(reps: usize, mut f: impl FnMut() -> interspec::Result<()>) -> interspec::Result<Duration> {
    f()?;
    let t = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    Ok(t.elapsed() / reps as u32)
}

fn eigen_fast_path() -> Outcome {
    let (cav, k) = kernel(45.0, 10)?;
    let r = find_munsell_patch("5R 4/14", &grid())?.reflectance;
    let e0 = direct_irradiance(&d65_light(&grid())?.spd, cav.facet_count())?;
    let t = Instant::now();
    let eig = eigendecompose(&k)?;
    let t_decomp = t.elapsed();
    let dense = infinite_bounce_radiance(&k, &r, &e0)?;
    let fast = infinite_bounce_radiance_eig(&eig, &r, &e0)?;
    let worst = dense.values().iter().zip(fast.values()).map(|(a, b)| rel_err(*a, *b)).fold(0.0, f64::max);
    let t_dense = mean_time(5, || infinite_bounce_radiance(&k, &r, &e0).map(drop))?;
    let t_fast = mean_time(50, || infinite_bounce_radiance_eig(&eig, &r, &e0).map(drop))?;
    let speedup = t_dense.as_secs_f64() / t_fast.as_secs_f64();
    let with_decomp = t_dense.as_secs_f64() / (t_fast + t_decomp).as_secs_f64();
    Ok((
        worst <= 1e-8 && speedup >= 5.0,
        format!(
            "{} facets, max rel err {worst:.2e}, speedup {speedup:.0}x per render ({with_decomp:.1}x counting one decomposition)",
            cav.facet_count()
        ),
    ))
}

/// `(1/A_i) ∫∫ cosθi cosθj / (π d²) dA_j dA_i` by the midpoint rule on an
/// `n × n` grid over each facet.
fn quadrature_form_factor(fi: &Facet, fj: &Facet, n: usize) -> f64 {
    let nodes: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
    let pj: Vec<_> = nodes.iter().flat_map(|&u| nodes.iter().map(move |&v| (u, v))).map(|(u, v)| fj.point(u, v)).collect();
    let mut sum = 0.0;
    for &u in &nodes {
        for &v in &nodes {
            let x = fi.point(u, v);
            for y in &pj {
                let d = y - x;
                let d2 = d.norm_squared();
                let ci = fi.normal.dot(&d);
                let cj = -fj.normal.dot(&d);
                if ci > 0.0 && cj > 0.0 {
                    sum += ci * cj / (std::f64::consts::PI * d2 * d2);
                }
            }
        }
    }
    sum * fj.area() / (n * n * n * n) as f64
}

fn monte_carlo_kernel_check() -> Outcome {
    let n = 10;
    let cav = build_v_cavity(45.0, 1.0, n)?;
    let raw = assemble_kernel(&cav, &kernel_cfg())?;
    let a = |row: usize, col: usize| row * n + col;
    let b = |row: usize, col: usize| n * n + row * n + col;
    let mut worst = 0.0f64;
    for (i, j) in [(a(2, 5), b(2, 5)), (a(0, 0), b(5, 9)), (a(9, 9), b(9, 0)), (a(1, 3), b(4, 3))] {
        let oracle = quadrature_form_factor(&cav.facets[i], &cav.facets[j], 64);
        worst = worst.max((raw[(i, j)] - oracle).abs() / oracle);
    }
    let m = cav.facet_count();
    let asym = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).map(|(i, j)| (raw[(i, j)] - raw[(j, i)]).abs()).fold(0.0, f64::max);
    let half = n * n;
    let blocks_zero = (0..m).all(|i| (0..m).all(|j| (i < half) != (j < half) || raw[(i, j)] == 0.0));
    Ok((
        worst <= 0.01 && asym < 1e-3 && blocks_zero,
        format!("max rel err vs 64x64 quadrature {worst:.2e}, raw symmetry residual {asym:.2e}, same-panel blocks zero: {blocks_zero}"),
    ))
}

struct FdCheck {
    worst: f64,
    count: usize,
}

impl FdCheck {
    fn new() -> Self {
        Self { worst: 0.0, count: 0 }
    }

    /// Central difference of `f` at `x[k]` against `analytic`.
    fn probe(&mut self, x: &mut [f64], k: usize, analytic: f64, f: &mut dyn FnMut(&[f64]) -> f64) {
        let eps = 1e-5;
        let orig = x[k];
        x[k] = orig + eps;
        let fp = f(x);
        x[k] = orig - eps;
        let fm = f(x);
        x[k] = orig;
        let num = (fp - fm) / (2.0 * eps);
        let scale = num.abs().max(analytic.abs()).max(1e-7);
        self.worst = self.worst.max((num - analytic).abs() / scale);
        self.count += 1;
    }
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut fd = FdCheck::new();
    let mut per_part = Vec::new();

    let conv = Conv2d { in_channels: 2, out_channels: 3, kernel: 3, stride: 1, pad: 1 };
    let (bt, h, w) = (2, 4, 4);
    let mut x = random(2 * bt * h * w, &mut rng);
    let mut wt = random(conv.weight_len(), &mut rng);
    let mut bias = random(3, &mut rng);
    let g = random(3 * bt * h * w, &mut rng);
    let (mut cols, mut out) = (Vec::new(), Vec::new());
    conv.forward(&x, bt, h, w, &wt, &bias, &mut cols, &mut out);
    let (mut dw, mut db, mut dx) = (vec![0.0; wt.len()], vec![0.0; 3], Vec::new());
    conv.backward(&cols, &g, bt, h, w, &wt, &mut dw, &mut db, Some(&mut dx));
    {
        let (wt0, b0, x0) = (wt.clone(), bias.clone(), x.clone());
        let run = |x: &[f64], wt: &[f64], b: &[f64]| {
            let (mut c, mut o) = (Vec::new(), Vec::new());
            conv.forward(x, bt, h, w, wt, b, &mut c, &mut o);
            dot(&g, &o)
        };
        for k in 0..x.len() {
            fd.probe(&mut x, k, dx[k], &mut |v| run(v, &wt0, &b0));
        }
        for k in 0..wt.len() {
            fd.probe(&mut wt, k, dw[k], &mut |v| run(&x0, v, &b0));
        }
        for k in 0..bias.len() {
            fd.probe(&mut bias, k, db[k], &mut |v| run(&x0, &wt0, v));
        }
    }
    per_part.push(("conv", fd.worst));

    for kind in [PoolKind::Max, PoolKind::Average] {
        let mut fdp = FdCheck::new();
        let mut x = random(3 * 4 * 4, &mut rng);
        let g = random(3 * 2 * 2, &mut rng);
        let (mut o, mut am, mut dx) = (Vec::new(), Vec::new(), Vec::new());
        pool2_forward(kind, &x, 3, 4, 4, &mut o, &mut am);
        pool2_backward(kind, &g, &am, 3, 4, 4, &mut dx);
        for k in 0..x.len() {
            fdp.probe(&mut x, k, dx[k], &mut |v| {
                let (mut o, mut am) = (Vec::new(), Vec::new());
                pool2_forward(kind, v, 3, 4, 4, &mut o, &mut am);
                dot(&g, &o)
            });
        }
        per_part.push((if kind == PoolKind::Max { "maxpool" } else { "avgpool" }, fdp.worst));
        fd.worst = fd.worst.max(fdp.worst);
        fd.count += fdp.count;
    }

    {
        let mut fdl = FdCheck::new();
        let lin = Linear { inputs: 5, outputs: 4 };
        let bt = 3;
        let mut x = random(5 * bt, &mut rng);
        let mut wt = random(lin.weight_len(), &mut rng);
        let b0 = random(4, &mut rng);
        let g = random(4 * bt, &mut rng);
        let (mut dw, mut db, mut dx) = (vec![0.0; wt.len()], vec![0.0; 4], Vec::new());
        lin.backward(&x, &g, bt, &wt, &mut dw, &mut db, Some(&mut dx));
        let run = |x: &[f64], wt: &[f64]| {
            let mut o = Vec::new();
            lin.forward(x, bt, wt, &b0, &mut o);
            dot(&g, &o)
        };
        let (x0, wt0) = (x.clone(), wt.clone());
        for k in 0..x.len() {
            fdl.probe(&mut x, k, dx[k], &mut |v| run(v, &wt0));
        }
        for k in 0..wt.len() {
            fdl.probe(&mut wt, k, dw[k], &mut |v| run(&x0, v));
        }
        per_part.push(("linear", fdl.worst));
        fd.worst = fd.worst.max(fdl.worst);
        fd.count += fdl.count;
    }

    let cmf = ColorMatchingFunctions::cie1931(&grid())?;
    let f2 = consistency_weights(&cmf);
    for (name, weights) in [
        ("L_R", LossWeights { reflectance: 1.0, illuminant: 0.0, consistency: 0.0 }),
        ("L_E", LossWeights { reflectance: 0.0, illuminant: 1.0, consistency: 0.0 }),
        ("L_S", LossWeights { reflectance: 0.0, illuminant: 0.0, consistency: 1.0 }),
    ] {
        let mut fdl = FdCheck::new();
        let n = 2 * 61;
        let mut rh: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut eh: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let (mut gr, mut ge) = (vec![0.0; n], vec![0.0; n]);
        batch_loss(&rh, Some(&eh), &r, &e, &f2, &weights, &mut gr, Some(&mut ge));
        let eh0 = eh.clone();
        let rh0 = rh.clone();
        let (mut sr, mut se) = (vec![0.0; n], vec![0.0; n]);
        for k in 0..n {
            fdl.probe(&mut rh, k, gr[k], &mut |v| {
                batch_loss(v, Some(&eh0), &r, &e, &f2, &weights, &mut sr, Some(&mut se)).total
            });
            fdl.probe(&mut eh, k, ge[k], &mut |v| {
                batch_loss(&rh0, Some(v), &r, &e, &f2, &weights, &mut sr, Some(&mut se)).total
            });
        }
        per_part.push((name, fdl.worst));
        fd.worst = fd.worst.max(fdl.worst);
        fd.count += fdl.count;
    }

    for (spd, pool) in [(true, PoolKind::Max), (false, PoolKind::Average)] {
        let mut fdn = FdCheck::new();
        let cfg = NetworkConfig { input_size: 6, in_channels: 3, c1: 3, c2: 2, c3: 4, hidden: 5, outputs: 61, pool, spd_branch: spd };
        let mut p = init_network::<f64>(&cfg, 3)?;
        for i in (1..cfg.tensor_count()).step_by(2) {
            for v in p.tensors[i].iter_mut() {
                *v = rng.random_range(-0.1..0.1);
            }
        }
        let images = random(2 * cfg.image_len(), &mut rng);
        let r: Vec<f64> = (0..122).map(|_| rng.random_range(0.0..1.0)).collect();
        let e: Vec<f64> = (0..122).map(|_| rng.random_range(0.5..1.5)).collect();
        let w = LossWeights::default();
        let mut cache = ForwardCache::default();
        let (_, grads) = p.loss_and_gradients(&images, &r, &e, &f2, &w, &mut cache)?;
        for ti in 0..cfg.tensor_count() {
            let mut t = p.tensors[ti].clone();
            for k in 0..t.len() {
                fdn.probe(&mut t, k, grads[ti][k], &mut |v| {
                    let mut q = p.clone();
                    q.tensors[ti] = v.to_vec();
                    q.loss_and_gradients(&images, &r, &e, &f2, &w, &mut cache).map(|o| o.0.total).unwrap_or(f64::NAN)
                });
            }
            p.tensors[ti] = t;
        }
        per_part.push((if spd { "network(two-branch)" } else { "network(single-branch)" }, fdn.worst));
        fd.worst = fd.worst.max(fdn.worst);
        fd.count += fdn.count;
    }

    let parts: Vec<String> = per_part.iter().map(|(n, v)| format!("{n} {v:.1e}")).collect();
    Ok((
        fd.worst < 1e-4 && fd.worst.is_finite(),
        format!("{} probes, worst rel err {:.2e} [{}]", fd.count, fd.worst, parts.join(", ")),
    ))
}

/// A training run: corpus, network and schedule.
#[derive(Serialize)]
struct Run<'a> {
    corpus: &'a str,
    angle: f64,
    network: NetworkConfig,
    train: TrainConfig,
}

struct Corpus {
    tag: String,
    angle: f64,
    train: Dataset,
    test: Dataset,
}

fn corpus(tag: &str, lights: &[NamedIlluminant], angle: f64, patches: &[Patch]) -> interspec::Result<Corpus> {
    let cam = CameraSensitivities::from_cmf(&ColorMatchingFunctions::cie1931(&grid())?);
    let mut cfg = CorpusConfig::default();
    cfg.generation.cache_dir = Some(cache_dir().join("kernels"));
    cfg.generation.camera_id = "xyz".into();
    let (train, test) = build_corpus(patches, lights, &[angle], &cam, &cfg)?;
    Ok(Corpus { tag: tag.into(), angle, train, test })
}

/// Trains or loads the cached checkpoint of `run` and scores it on the test split.
fn trained(c: &Corpus, network: &NetworkConfig, cfg: &TrainConfig) -> interspec::Result<(Checkpoint, EvalReport)> {
    let run = Run { corpus: &c.tag, angle: c.angle, network: *network, train: cfg.clone() };
    let key = hex(&Sha256::digest(serde_json::to_vec(&run)?));
    let path = cache_dir().join("models").join(format!("{}_{}.ckpt", c.tag, &key[..16]));
    let cmf = ColorMatchingFunctions::cie1931(&grid())?;
    let ck = match Checkpoint::load(&path) {
        Ok(ck) if ck.epoch == cfg.epochs => ck,
        _ => {
            let t = Instant::now();
            let res = train(&c.train, None, network, cfg, &cmf, &TrainOutputs::default(), None)?;
            std::fs::create_dir_all(path.parent().expect("model dir")).map_err(interspec::Error::from)?;
            res.checkpoint.save(&path)?;
            eprintln!("  trained {} seed {} in {:.0} s", c.tag, cfg.seed, t.elapsed().as_secs_f64());
            res.checkpoint
        }
    };
    let rep = evaluate(&ck, &c.test, &cmf)?;
    Ok((ck, rep))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn single_schedule() -> (NetworkConfig, TrainConfig) {
    let net = NetworkConfig { spd_branch: false, ..Default::default() };
    let cfg = TrainConfig { lr0: 1e-2, decay_every: 150, epochs: 400, ..Default::default() };
    (net, cfg)
}

fn multi_schedule() -> (NetworkConfig, TrainConfig) {
    let cfg = TrainConfig { lr0: 3e-3, decay_every: 50, epochs: 120, ..Default::default() };
    (NetworkConfig::default(), cfg)
}

fn single_illuminant(c: &Corpus) -> interspec::Result<(bool, String, f64)> {
    let (net, cfg) = single_schedule();
    let (_, rep) = trained(c, &net, &cfg)?;
    let (rmse, de) = (rep.rmse.avg, rep.de00.avg);
    Ok((
        rmse <= 0.015 && de <= 1.5,
        format!("test RMSE {rmse:.4} (<= 0.015), DE00 {de:.3} (<= 1.5), PD {:.4}, {} test samples", rep.pd.avg, rep.samples.len()),
        rmse,
    ))
}

fn multi_illuminant(patches: &[Patch]) -> Outcome {
    let c = corpus("planck23_a45", &planckian_lights(&grid())?, 45.0, patches)?;
    let (net, cfg) = multi_schedule();
    let (_, rep) = trained(&c, &net, &cfg)?;
    let spd = rep.spd_rmse.map_or(f64::NAN, |s| s.avg);
    let (rmse, de) = (rep.rmse.avg, rep.de00.avg);
    Ok((
        rmse <= 0.015 && spd <= 0.03 && de <= 1.6,
        format!("test RMSE {rmse:.4} (<= 0.015), SPD RMSE {spd:.4} (<= 0.03), DE00 {de:.3} (<= 1.6)"),
    ))
}

fn consistency_ablation(patches: &[Patch]) -> Outcome {
    let lights = NamedIlluminant::planckian_series(4000.0, 15000.0, 2200.0, &grid())?;
    let c = corpus("planck6_a45", &lights, 45.0, patches)?;
    let net = NetworkConfig::default();
    let base = TrainConfig { lr0: 3e-3, decay_every: 25, epochs: 40, ..Default::default() };
    let (mut with, mut without) = ([0.0; 2], [0.0; 2]);
    let seeds = [0u64, 1, 2];
    for &seed in &seeds {
        for (acc, w_s) in [(&mut with, 1.0), (&mut without, 0.0)] {
            let cfg = TrainConfig { seed, weights: LossWeights { consistency: w_s, ..base.weights }, ..base.clone() };
            let (_, rep) = trained(&c, &net, &cfg)?;
            acc[0] += rep.rmse.avg / seeds.len() as f64;
            acc[1] += rep.de00.avg / seeds.len() as f64;
        }
    }
    let pct = |a: f64, b: f64| (b - a) / b * 100.0;
    let (d_rmse, d_de) = (pct(with[0], without[0]), pct(with[1], without[1]));
    Ok((
        d_rmse > 0.0 && d_de > 0.0,
        format!(
            "{} seeds, {} lights: RMSE {:.4} vs {:.4} ({d_rmse:+.1}%), DE00 {:.3} vs {:.3} ({d_de:+.1}%)",
            seeds.len(),
            lights.len(),
            with[0],
            without[0],
            with[1],
            without[1]
        ),
    ))
}

fn angle_degradation(rmse_45: f64, patches: &[Patch]) -> Outcome {
    let c = corpus("d65_a150", &[d65_light(&grid())?], 150.0, patches)?;
    let (net, cfg) = single_schedule();
    let (_, rep) = trained(&c, &net, &cfg)?;
    let ratio = rep.rmse.avg / rmse_45;
    Ok((ratio >= 2.0, format!("RMSE 150/150 {:.4} vs 45/45 {rmse_45:.4}: ratio {ratio:.2} (>= 2)", rep.rmse.avg)))
}

fn metamerism() -> Outcome {
    let patch = find_munsell_patch("5R 4/14", &grid())?;
    let cam = CameraSensitivities::from_cmf(&ColorMatchingFunctions::cie1931(&grid())?);
    let cam = cam.scaled(cam.unit_gain())?;
    let d = metamer_demo(
        &patch.reflectance,
        &d65_light(&grid())?.spd,
        &cam,
        45.0,
        10,
        &kernel_cfg(),
        Some(&cache_dir().join("kernels")),
    )?;
    Ok((
        d.flat_max_rel_diff <= 1e-6 && d.folded_max_rel_diff > 0.01,
        format!(
            "flat max rel diff {:.2e} (<= 1e-6), folded 45 deg max rel diff {:.3} (> 0.01)",
            d.flat_max_rel_diff, d.folded_max_rel_diff
        ),
    ))
}

fn inverse_baseline(patches: &[Patch]) -> Outcome {
    let spectra: Vec<ReflectanceSpectrum> = patches.iter().map(|p| p.reflectance.clone()).collect();
    let basis = build_basis(&spectra, 8)?;
    let (cav, k) = kernel(45.0, 10)?;
    let eig = eigendecompose(&k)?;
    let cam = CameraSensitivities::from_cmf(&ColorMatchingFunctions::cie1931(&grid())?);
    let cam = cam.scaled(cam.unit_gain())?;
    let illum = d65_light(&grid())?.spd;
    let op = ForwardOperator::new(&cav, &eig, &illum, &cam)?;
    let mut worst = 0.0f64;
    let mut used = 0;
    for i in [40usize, 300, 640, 900, 1200] {
        let truth = basis.reconstruct(spectra[i].values());
        if truth.iter().any(|v| !(0.0..=1.0).contains(v)) {
            continue;
        }
        let r = ReflectanceSpectrum::new(interspec::spectrum::Spectrum::new(grid(), truth.as_slice().to_vec())?)?;
        let image = render_panel_image(&cav, &eig, &r, &illum, &cam)?;
        let est = estimate_reflectance(&image, &op, &basis, &SolverConfig::default())?;
        let rmse = (est.reflectance.values().iter().zip(truth.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            / truth.len() as f64)
            .sqrt();
        worst = worst.max(rmse);
        used += 1;
    }

    let flat = build_v_cavity(180.0, 1.0, 10)?;
    let zero = KernelMatrix::new(
        DMatrix::zeros(flat.facet_count(), flat.facet_count()),
        KernelProvenance { angle_deg: 180.0, facets_per_side: 10, ..k.provenance },
    )?;
    let flat_op = ForwardOperator::new(&flat, &eigendecompose(&zero)?, &illum, &cam)?;
    let img = flat_op.render(spectra[640].values())?;
    let image = PanelImage { size: 10, channels: 3, data: img.iter().copied().collect() };
    let est = estimate_reflectance(&image, &flat_op, &basis, &SolverConfig { max_iterations: 500, ..Default::default() })?;
    Ok((
        used >= 3 && worst < 1e-4 && est.ambiguous,
        format!(
            "{used} renders, worst RMSE {worst:.1e} (< 1e-4); flat plate Jacobian rank {} of 8, ambiguous: {}",
            est.jacobian_rank, est.ambiguous
        ),
    ))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failed_exact = 0;
    let mut passed = 0;
    let mut total = 0;
    let mut report = |name: &str, kind: Kind, outcome: Outcome| {
        total += 1;
        match outcome {
            Ok((true, detail)) => {
                passed += 1;
                println!("PASS  {name}: {detail}");
            }
            Ok((false, detail)) => {
                if kind == Kind::Exact {
                    failed_exact += 1;
                }
                println!("FAIL  {name}: {detail}");
            }
            Err(e) => {
                failed_exact += 1;
                println!("ERROR {name}: {e}");
            }
        }
    };

    report("forward model closed form vs 200-bounce series", Kind::Exact, forward_oracle());
    report("eigendecomposition fast path", Kind::Exact, eigen_fast_path());
    report("Monte Carlo kernel", Kind::Exact, monte_carlo_kernel_check());
    report("gradient suite", Kind::Exact, gradient_suite());
    report("metamerism demo", Kind::Exact, metamerism());
    let patches = munsell_patches(&grid()).expect("bundled Munsell set");
    report("inverse baseline", Kind::Exact, inverse_baseline(&patches));

    let single = corpus("d65_a45", &[d65_light(&grid()).expect("D65")], 45.0, &patches)
        .and_then(|c| single_illuminant(&c));
    let rmse_45 = single.as_ref().map(|s| s.2).ok();
    report("single-illuminant experiment", Kind::Trained, single.map(|s| (s.0, s.1)));
    report("23-illuminant experiment", Kind::Trained, multi_illuminant(&patches));
    report("consistency-loss ablation", Kind::Trained, consistency_ablation(&patches));
    let angle = match rmse_45 {
        Some(r) => angle_degradation(r, &patches),
        None => Err(interspec::Error::Config("needs the 45 degree single-illuminant model".into())),
    };
    report("angle degradation", Kind::Trained, angle);

    println!(
        "acceptance: {passed}/{total} passed in {:.0} s",
        started.elapsed().as_secs_f64()
    );
    if failed_exact > 0 { ExitCode::FAILURE } else { ExitCode::SUCCESS }
}
