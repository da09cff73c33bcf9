use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use interspec::colorimetry::ColorMatchingFunctions;
use interspec::dataset::{generate_dataset, split_and_normalize, Dataset, GenerationConfig, NormalizationMode};
use interspec::eval::evaluate;
use interspec::experiments::{metamer_demo, write_angle_table, AngleRow, AngleStudy, CorpusConfig};
use interspec::geometry::build_v_cavity;
use interspec::inverse::{build_basis, estimate_reflectance, ForwardOperator, SolverConfig};
use interspec::kernel::{cached_kernel, default_cache_dir, eigendecompose, KernelConfig, KernelEstimator};
use interspec::net::{train, Checkpoint, LossWeights, NetworkConfig, PoolKind, TrainConfig, TrainOutputs};
use interspec::render::{render_panel_image, PanelImage};
use interspec::spectrum::{Spectrum, WavelengthGrid};
use interspec::table::SpectralTable;

use crate::args::*;
use crate::error::{CliError, CliResult};
use crate::{inputs, report};

pub fn run(cli: Cli) -> CliResult<()> {
    let cache = cli.cache_dir.clone().unwrap_or_else(default_cache_dir);
    match &cli.command {
        Command::Kernel(a) => cmd_kernel(a, &cache),
        Command::Render(a) => cmd_render(a, &cache),
        Command::Dataset(DatasetCommand::Gen(a)) => cmd_dataset_gen(a, &cache),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Estimate(a) => cmd_estimate(a, &cache),
        Command::AngleStudy(a) => cmd_angle_study(a, &cache),
        Command::Metamer(a) => cmd_metamer(a, &cache),
        Command::Report(a) => report::cmd_report(a),
    }
}

/// Records the resolved arguments of a run.
fn write_manifest<A: Serialize>(path: &Path, command: &str, args: &A) -> CliResult<()> {
    let m = json!({
        "tool": "interspec",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": args,
    });
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn beside(file: &Path, suffix: &str) -> PathBuf {
    let mut name = file.file_name().map(|s| s.to_os_string()).unwrap_or_default();
    name.push(suffix);
    file.with_file_name(name)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| interspec::Error::Io { path: Some(dir.into()), source: e }.into())
}

fn create_file(path: &Path) -> CliResult<std::io::BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let f = fs::File::create(path).map_err(|e| interspec::Error::Io { path: Some(path.into()), source: e })?;
    Ok(std::io::BufWriter::new(f))
}

fn kernel_config(samples: usize, seed: u64, point_pair: bool) -> KernelConfig {
    KernelConfig {
        samples_per_pair: samples,
        seed,
        estimator: if point_pair { KernelEstimator::PointPair } else { KernelEstimator::PointToFacet },
        ..Default::default()
    }
}

fn cmd_kernel(a: &KernelArgs, cache: &Path) -> CliResult<()> {
    let g = &a.geometry;
    let cavity = build_v_cavity(g.angle, 1.0, g.facets)?;
    let k = cached_kernel(&cavity, &kernel_config(g.samples, g.kernel_seed, g.point_pair), Some(cache))?;
    let row_max = k.row_sums().into_iter().fold(0.0, f64::max);
    let summary = json!({
        "provenance": k.provenance,
        "facets": k.size(),
        "symmetry_residual": k.symmetry_residual,
        "max_row_sum": row_max,
        "spectral_radius": k.spectral_radius(),
        "cache_dir": cache,
    });
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        k.save(out)?;
        write_manifest(&beside(out, ".manifest.json"), "kernel", a)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_render(a: &RenderArgs, cache: &Path) -> CliResult<()> {
    let grid = WavelengthGrid::visible();
    let r = match (&a.patch, &a.reflectance) {
        (Some(sel), None) => interspec::data::find_munsell_patch(sel, &grid)?.reflectance,
        (None, Some(path)) => inputs::reflectance_file(path, &grid)?,
        _ => return Err(CliError::Config("give exactly one of --patch or --reflectance".into())),
    };
    let illum = inputs::illuminant(&a.illuminant, &grid)?;
    let (_, cam, gain) = inputs::camera(&a.camera, &grid)?;
    let cam = cam.scaled(gain)?;
    let g = &a.geometry;
    let cavity = build_v_cavity(g.angle, 1.0, g.facets)?;
    let k = cached_kernel(&cavity, &kernel_config(g.samples, g.kernel_seed, g.point_pair), Some(cache))?;
    let img = render_panel_image(&cavity, &eigendecompose(&k)?, &r, &illum.spd, &cam)?;
    img.write_csv(&cam.names, create_file(&a.out)?)?;
    if let Some(png) = &a.png {
        let peak = img.max();
        img.write_png16(png, if peak > 0.0 { 1.0 / peak } else { 1.0 })?;
    }
    write_manifest(&beside(&a.out, ".manifest.json"), "render", a)?;
    Ok(())
}

fn corpus_config(c: &CorpusArgs, camera_id: String, gain: f64, seed: u64, cache: &Path) -> CorpusConfig {
    CorpusConfig {
        generation: GenerationConfig {
            facets_per_side: c.facets,
            kernel: kernel_config(c.samples, c.kernel_seed, false),
            cache_dir: Some(cache.to_path_buf()),
            camera_id,
            camera_gain: Some(gain),
            seed,
            ..Default::default()
        },
        train_fraction: c.train_fraction,
        split_seed: c.split_seed,
        normalization: if c.per_image_norm { NormalizationMode::PerImage } else { NormalizationMode::Dataset },
    }
}

fn cmd_dataset_gen(a: &DatasetGenArgs, cache: &Path) -> CliResult<()> {
    let grid = WavelengthGrid::visible();
    let patches = inputs::patches(&a.corpus.patches, &grid)?;
    let lights = inputs::illuminants(&a.corpus.illuminants, &grid)?;
    let (id, cam, gain) = inputs::camera(&a.corpus.camera, &grid)?;
    let cfg = corpus_config(&a.corpus, id, gain, a.seed, cache);
    let ds = generate_dataset(&patches, &lights, &a.angle, &cam, &cfg.generation)?;
    let (tr, te) = split_and_normalize(&ds, cfg.train_fraction, cfg.split_seed, cfg.normalization)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    ds.save(&a.out)?;
    let train_path = a.out.with_extension("train.ds");
    let test_path = a.out.with_extension("test.ds");
    tr.save(&train_path)?;
    te.save(&test_path)?;
    write_manifest(&beside(&a.out, ".manifest.json"), "dataset gen", a)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "samples": ds.len(),
            "train_samples": tr.len(),
            "test_samples": te.len(),
            "train_patches": tr.manifest.split.as_ref().map(|s| s.train_patches.len()),
            "test_patches": te.manifest.split.as_ref().map(|s| s.test_patches.len()),
            "files": [&a.out, &train_path, &test_path],
        }))?
    );
    Ok(())
}

fn network_and_train(opts: &TrainOpts, ds: &Dataset) -> (NetworkConfig, TrainConfig) {
    let net = NetworkConfig {
        input_size: ds.manifest.facets_per_side,
        in_channels: ds.channels(),
        c1: opts.c1,
        c2: opts.c2,
        c3: opts.c3,
        hidden: opts.hidden,
        outputs: ds.manifest.grid.count(),
        pool: if opts.avg_pool { PoolKind::Average } else { PoolKind::Max },
        spd_branch: !opts.no_spd_branch,
    };
    let tc = TrainConfig {
        lr0: opts.lr,
        decay_every: opts.decay_every,
        decay_factor: opts.decay_factor,
        momentum: opts.momentum,
        batch_size: opts.batch_size,
        epochs: opts.epochs,
        seed: opts.seed,
        weights: LossWeights { reflectance: opts.w_r, illuminant: opts.w_e, consistency: opts.w_s },
        noise: if opts.no_noise { None } else { Some(ds.manifest.noise.clone()) },
        eval_every: 0,
    };
    (net, tc)
}

fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    let tr = Dataset::load(&a.dataset)?;
    let te = a.test.as_ref().map(Dataset::load).transpose()?;
    let (net, mut tc) = network_and_train(&a.opts, &tr);
    tc.eval_every = a.eval_every;
    let cmf = ColorMatchingFunctions::cie1931(&tr.manifest.grid)?;
    let resume = a.resume.as_ref().map(Checkpoint::load).transpose()?;
    create_dir(&a.out)?;
    write_manifest(&a.out.join("manifest.json"), "train", a)?;
    let outputs = TrainOutputs {
        log_csv: Some(a.out.join("log.csv")),
        checkpoint_dir: Some(a.out.join("checkpoints")),
        checkpoint_every: a.checkpoint_every,
    };
    let res = train(&tr, te.as_ref(), &net, &tc, &cmf, &outputs, resume)?;
    let path = a.out.join("model.ckpt");
    res.checkpoint.save(&path)?;
    let last = res.history.last();
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "checkpoint": path,
            "sha256": res.checkpoint.hash()?,
            "epochs": res.checkpoint.epoch,
            "final_loss": last.map(|h| h.loss),
            "test": last.and_then(|h| h.test.as_ref()).map(|t| json!({"rmse": t.rmse, "pd": t.pd, "de00": t.de00, "spd_rmse": t.spd_rmse})),
        }))?
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let ds = Dataset::load(&a.dataset)?;
    let cmf = ColorMatchingFunctions::cie1931(&ds.manifest.grid)?;
    let rep = evaluate(&ck, &ds, &cmf)?;
    create_dir(&a.out)?;
    rep.write_samples_csv(create_file(&a.out.join("samples.csv"))?)?;
    rep.write_summary_csv(create_file(&a.out.join("summary.csv"))?)?;
    write_spectra(&ck, &ds, &a.out.join("spectra.csv"))?;
    let summary = json!({"rmse": rep.rmse, "pd": rep.pd, "de00": rep.de00, "spd_rmse": rep.spd_rmse});
    fs::write(a.out.join("eval.json"), serde_json::to_string_pretty(&summary)?)?;
    write_manifest(&a.out.join("manifest.json"), "eval", a)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

/// Long-format predicted and true spectra of every sample.
fn write_spectra(ck: &Checkpoint, ds: &Dataset, path: &Path) -> CliResult<()> {
    use std::io::Write;
    let mut w = create_file(path)?;
    writeln!(w, "index,patch,illuminant,wavelength_nm,reflectance_true,reflectance_est,spd_true,spd_est")?;
    let grid = ds.manifest.grid;
    let len = ds.image_len();
    let idx: Vec<usize> = (0..ds.len()).collect();
    for chunk in idx.chunks(256) {
        let mut images = Vec::with_capacity(chunk.len() * len);
        for &i in chunk {
            images.extend_from_slice(ds.image(i));
        }
        for (&i, p) in chunk.iter().zip(ck.predict_batch(&images)?) {
            let s = ds.sample(i)?;
            for l in 0..grid.count() {
                writeln!(
                    w,
                    "{i},{},{},{},{:.6},{:.6},{:.6},{}",
                    s.patch_id,
                    s.illuminant_id,
                    grid.wavelength(l),
                    s.target_reflectance.values()[l],
                    p.reflectance.values()[l],
                    s.target_spd.values()[l],
                    p.spd.as_ref().map(|e| format!("{:.6}", e.values()[l])).unwrap_or_default()
                )?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs, cache: &Path) -> CliResult<()> {
    let grid = WavelengthGrid::visible();
    let file = fs::File::open(&a.image).map_err(|e| interspec::Error::Io { path: Some(a.image.clone()), source: e })?;
    let (image, names) = PanelImage::read_csv(std::io::BufReader::new(file))?;
    let (_, cam, gain) = inputs::camera(&a.camera, &grid)?;
    if names.len() != cam.len() {
        return Err(CliError::Config(format!("image has {} channels, camera has {}", names.len(), cam.len())));
    }
    let cam = cam.scaled(gain)?;
    let illum = inputs::illuminant(&a.illuminant, &grid)?;
    let cavity = build_v_cavity(a.angle, 1.0, image.size)?;
    let k = cached_kernel(&cavity, &kernel_config(a.samples, a.kernel_seed, false), Some(cache))?;
    let op = ForwardOperator::new(&cavity, &eigendecompose(&k)?, &illum.spd, &cam)?;
    let spectra: Vec<_> = inputs::patches(&a.basis, &grid)?.into_iter().map(|p| p.reflectance).collect();
    let basis = build_basis(&spectra, a.k)?;
    let cfg = SolverConfig { k: a.k, max_iterations: a.max_iterations, restarts: a.restarts, ..Default::default() };
    let est = estimate_reflectance(&image, &op, &basis, &cfg)?;
    let spec: &Spectrum = est.reflectance.as_spectrum();
    SpectralTable::from_spectra(vec!["reflectance".into()], &[spec])?.write(create_file(&a.out)?)?;
    let summary = json!({
        "iterations": est.iterations,
        "converged": est.converged,
        "ambiguous": est.ambiguous,
        "jacobian_rank": est.jacobian_rank,
        "k": a.k,
        "objective": est.objective_trace.last(),
        "objective_trace": est.objective_trace,
    });
    fs::write(beside(&a.out, ".json"), serde_json::to_string_pretty(&summary)?)?;
    write_manifest(&beside(&a.out, ".manifest.json"), "estimate", a)?;
    if est.ambiguous {
        log::warn!("image constrains only {} of {} basis directions", est.jacobian_rank, a.k);
    }
    Ok(())
}

pub fn parse_rows(spec: &str) -> CliResult<Vec<AngleRow>> {
    spec.split(',')
        .filter(|r| !r.trim().is_empty())
        .map(|r| {
            let (train, test) = r
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("angle row {r:?} needs <train>:<test>")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("bad angle {s:?} in row {r:?}")))
            };
            Ok(AngleRow {
                train_angles: train.split('+').map(parse).collect::<CliResult<_>>()?,
                test_angle: parse(test)?,
            })
        })
        .collect()
}

fn cmd_angle_study(a: &AngleStudyArgs, cache: &Path) -> CliResult<()> {
    let grid = WavelengthGrid::visible();
    let rows = parse_rows(&a.rows)?;
    if rows.is_empty() {
        return Err(CliError::Config("no angle rows given".into()));
    }
    let patches = inputs::patches(&a.corpus.patches, &grid)?;
    let lights = inputs::illuminants(&a.corpus.illuminants, &grid)?;
    let (id, cam, gain) = inputs::camera(&a.corpus.camera, &grid)?;
    let cmf = ColorMatchingFunctions::cie1931(&grid)?;
    let corpus = corpus_config(&a.corpus, id, gain, a.opts.seed, cache);
    // Shapes only depend on the manifest fields read below.
    let probe = generate_dataset(&patches[..1], &lights[..1], &[rows[0].test_angle], &cam, &corpus.generation)?;
    let (network, train_cfg) = network_and_train(&a.opts, &probe);
    let study = AngleStudy { patches: &patches, lights: &lights, camera: &cam, cmf: &cmf, corpus, network, train: train_cfg };
    create_dir(&a.out)?;
    write_manifest(&a.out.join("manifest.json"), "angle-study", a)?;
    let results = study.run(&rows)?;
    write_angle_table(&results, create_file(&a.out.join("angle_table.csv"))?)?;
    fs::write(a.out.join("angle_study.json"), serde_json::to_string_pretty(&results)?)?;
    write_angle_table(&results, std::io::stdout())?;
    Ok(())
}

fn cmd_metamer(a: &MetamerArgs, cache: &Path) -> CliResult<()> {
    let grid = WavelengthGrid::visible();
    let patch = interspec::data::find_munsell_patch(&a.patch, &grid)?;
    let illum = inputs::illuminant(&a.illuminant, &grid)?;
    let (_, cam, gain) = inputs::camera(&a.camera, &grid)?;
    let cam = cam.scaled(gain)?;
    let g = &a.geometry;
    let demo = metamer_demo(
        &patch.reflectance,
        &illum.spd,
        &cam,
        g.angle,
        g.facets,
        &kernel_config(g.samples, g.kernel_seed, g.point_pair),
        Some(cache),
    )?;
    create_dir(&a.out)?;
    for (name, img) in [
        ("flat_original", &demo.flat_original),
        ("flat_metamer", &demo.flat_metamer),
        ("folded_original", &demo.folded_original),
        ("folded_metamer", &demo.folded_metamer),
        ("folded_difference", &demo.folded_difference),
    ] {
        img.write_csv(&cam.names, create_file(&a.out.join(format!("{name}.csv")))?)?;
    }
    let light: &Spectrum = demo.metameric_light.as_spectrum();
    SpectralTable::from_spectra(vec!["metameric_light".into()], &[light])?
        .write(create_file(&a.out.join("metameric_light.csv"))?)?;
    let summary = json!({
        "patch": patch.id,
        "illuminant": illum.id,
        "angle": g.angle,
        "flat_max_rel_diff": demo.flat_max_rel_diff,
        "folded_max_rel_diff": demo.folded_max_rel_diff,
    });
    fs::write(a.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    write_manifest(&a.out.join("manifest.json"), "metamer", a)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
