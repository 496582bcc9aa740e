use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::Serialize;
use serde_json::json;

use rainres::dataset::SplitRule;
use rainres::flow::{estimate_flow, midpoint_synthesize, FlowConfig};
use rainres::metrics::{write_report_csv, Aggregation, MetricsReport};
use rainres::models::{
    load_checkpoint, save_checkpoint, train, CheckpointHeader, CnnBaseline, Network, TempNet,
    TrainConfig,
};
use rainres::neural::AdamConfig;
use rainres::pipeline::{
    bench_interpolators, eval_direct, eval_second_iteration, eval_skip_one, recursive_upsample,
    render_png_file, FlowInterpolator, Interpolator, LoadedSplit, NearestInterpolator,
    NetworkInterpolator, OracleInterpolator, PairContext, Palette, SplitFile,
};
use rainres::raster::{
    read_event_dir, read_grid_file, write_event_dir, write_grid_file, write_signed_grid,
    EVENT_META_FILE,
};
use rainres::synth::{gen_events, SynthConfig, SynthManifest};

use crate::manifest::RunManifest;
use crate::{
    BenchArgs, Command, DatasetArgs, EvalArgs, InterpolateArgs, MethodArg, ModelArg, ModelPaths,
    Protocol, RenderArgs, SynthArgs, TrainArgs, UpsampleArgs,
};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Dataset(a) => dataset(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Interpolate(a) => interpolate(a),
        Command::Upsample(a) => upsample(a),
        Command::Render(a) => render(a),
        Command::Bench(a) => bench(a),
    }
}

fn config_value<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn read_split(path: &Path) -> Result<LoadedSplit> {
    let file: SplitFile = serde_json::from_slice(
        &fs::read(path).with_context(|| format!("reading {}", path.display()))?,
    )
    .with_context(|| format!("parsing {}", path.display()))?;
    Ok(file.load()?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = SynthConfig {
        rows: a.rows,
        cols: a.cols,
        n_cells: a.cells,
        n_frames: a.frames,
        seed: a.seed,
        salt_density: a.salt_density,
        velocity_range: (
            SynthConfig::default().velocity_range.0.min(a.max_speed),
            a.max_speed,
        ),
        ..Default::default()
    };
    let generated = gen_events(&cfg, a.events)?;
    let mut manifest = RunManifest::new("synth", config_value(&a));
    for (event, _) in &generated {
        let dir = a.out.join(&event.event_id);
        write_event_dir(event, &dir)?;
        manifest.output(dir);
    }
    let oracles = generated.into_iter().map(|(_, o)| o).collect();
    let synth_manifest = SynthManifest::new(cfg, oracles);
    let path = a.out.join("synth_manifest.json");
    fs::write(&path, serde_json::to_vec_pretty(&synth_manifest)?)?;
    manifest.output(path);
    manifest.write(&a.out)?;
    log::info!("wrote {} events to {}", a.events, a.out.display());
    Ok(())
}

fn dataset(a: DatasetArgs) -> Result<()> {
    let rule = match a.test_from_year {
        Some(year) => SplitRule::YearBoundary {
            test_from_year: year,
        },
        None => SplitRule::IndexFraction {
            train_fraction: a.train_fraction,
        },
    };
    let (file, _) = SplitFile::build(&a.data, &rule)?;
    let dir = parent_dir(&a.out);
    fs::create_dir_all(&dir)?;
    fs::write(&a.out, serde_json::to_vec_pretty(&file)?)?;
    let mut manifest = RunManifest::new("dataset", config_value(&a));
    manifest.output(&a.out);
    manifest.results(serde_json::to_value(&file.split)?);
    manifest.write(&dir)?;
    log::info!(
        "train: {} events / {} triples, test: {} events / {} triples",
        file.split.train_events.len(),
        file.split.train_entries,
        file.split.test_events.len(),
        file.split.test_entries
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let loaded = read_split(&a.data)?;
    let cfg = TrainConfig {
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        adam: AdamConfig {
            lr: a.lr,
            ..Default::default()
        },
        reference_mode: a.reference,
        ..Default::default()
    };
    let dir = parent_dir(&a.out);
    fs::create_dir_all(&dir)?;
    let mut manifest = RunManifest::new("train", config_value(&a));
    let results = match a.model {
        ModelArg::Cnn => {
            train_and_save::<CnnBaseline<f32>>(&loaded, &cfg, &a, &dir, &mut manifest)?
        }
        ModelArg::Tempnet => {
            train_and_save::<TempNet<f32>>(&loaded, &cfg, &a, &dir, &mut manifest)?
        }
    };
    manifest.results(results);
    manifest.write(&dir)?;
    Ok(())
}

fn train_and_save<M: Network<f32>>(
    loaded: &LoadedSplit,
    cfg: &TrainConfig,
    a: &TrainArgs,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<serde_json::Value> {
    let outcome = train::<M>(&loaded.split, cfg)?;
    let epochs_run = outcome.history.records.len();
    let best_epoch = outcome.best_epoch.unwrap_or(0);

    let header = CheckpointHeader::for_model(
        &outcome.best,
        &outcome.optimizer,
        false,
        cfg.plateau,
        best_epoch,
        cfg.seed,
    );
    save_checkpoint(&a.out, &header, &outcome.best, None)?;
    manifest.output(&a.out);

    let stem = a
        .out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("model");
    let final_path = dir.join(format!("{stem}_final.ckpt"));
    let header = CheckpointHeader::for_model(
        &outcome.model,
        &outcome.optimizer,
        true,
        cfg.plateau,
        epochs_run,
        cfg.seed,
    );
    save_checkpoint(
        &final_path,
        &header,
        &outcome.model,
        Some(&outcome.optimizer),
    )?;
    manifest.output(final_path);

    let history = dir.join("history.csv");
    fs::write(&history, outcome.history.to_csv(!cfg.reference_mode))?;
    manifest.output(&history);
    if cfg.reference_mode {
        let timing = dir.join("timing.csv");
        let mut text = String::from("epoch,epoch_seconds\n");
        for r in &outcome.history.records {
            text.push_str(&format!("{},{:.6}\n", r.epoch, r.epoch_seconds));
        }
        fs::write(&timing, text)?;
        manifest.output(timing);
    }

    Ok(json!({
        "model": M::KIND.name(),
        "param_count": outcome.model.param_count(),
        "epochs_run": epochs_run,
        "best_epoch": outcome.best_epoch,
        "final_train_loss": outcome.history.records.last().map(|r| r.train_loss),
        "final_test_loss": outcome.history.records.last().and_then(|r| r.test_loss),
        "train_triples": loaded.split.train.len(),
        "test_triples": loaded.split.test.len(),
    }))
}

fn load_network<M: Network<f32> + 'static>(
    path: Option<&PathBuf>,
    flag: &str,
) -> Result<Box<dyn Interpolator>> {
    let path =
        path.with_context(|| format!("--{flag} <checkpoint> is required for this method"))?;
    let ck = load_checkpoint::<M>(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Box::new(NetworkInterpolator::new(ck.model)))
}

fn interpolator(method: MethodArg, models: &ModelPaths) -> Result<Box<dyn Interpolator>> {
    Ok(match method {
        MethodArg::Nearest => Box::new(NearestInterpolator),
        MethodArg::Flow => Box::new(FlowInterpolator::default()),
        MethodArg::Cnn => load_network::<CnnBaseline<f32>>(models.cnn.as_ref(), "cnn")?,
        MethodArg::Tempnet => load_network::<TempNet<f32>>(models.tempnet.as_ref(), "tempnet")?,
        MethodArg::Oracle => {
            let path = models
                .synth_manifest
                .as_ref()
                .context("--synth-manifest is required for the oracle method")?;
            let m: SynthManifest = serde_json::from_slice(&fs::read(path)?)?;
            Box::new(OracleInterpolator::from_manifest(&m))
        }
        MethodArg::All => bail!("`all` is not a single method"),
    })
}

fn selected_methods(method: MethodArg) -> Vec<MethodArg> {
    match method {
        MethodArg::All => vec![
            MethodArg::Nearest,
            MethodArg::Flow,
            MethodArg::Cnn,
            MethodArg::Tempnet,
        ],
        m => vec![m],
    }
}

fn single_thread<T: Send>(reference: bool, f: impl FnOnce() -> T + Send) -> Result<T> {
    if reference {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
        Ok(pool.install(f))
    } else {
        Ok(f())
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let loaded = read_split(&a.data)?;
    let mut rows: Vec<(String, MetricsReport)> = Vec::new();
    for method in selected_methods(a.method) {
        let interp = interpolator(method, &a.models)?;
        let report = single_thread(a.reference, || match a.protocol {
            Protocol::Direct => eval_direct(interp.as_ref(), &loaded.split.test, a.threshold),
            Protocol::SkipOne => eval_skip_one(interp.as_ref(), &loaded.test_events, a.threshold),
            Protocol::SecondIteration => {
                eval_second_iteration(interp.as_ref(), &loaded.test_events, a.threshold)
            }
        })??;
        log::info!(
            "{}: mae {:.6} pod {:?} far {:?} csi {:?}",
            interp.name(),
            report.mae,
            report.pod,
            report.far,
            report.csi
        );
        rows.push((interp.name().to_string(), report));
    }
    fs::create_dir_all(&a.out)?;
    let mut manifest = RunManifest::new("eval", config_value(&a));
    let pooled = a.out.join("report.csv");
    write_report_csv(&rows, Aggregation::Pooled, fs::File::create(&pooled)?)?;
    manifest.output(pooled);
    let per_frame = a.out.join("report_per_frame.csv");
    write_report_csv(&rows, Aggregation::PerFrame, fs::File::create(&per_frame)?)?;
    manifest.output(per_frame);
    manifest.results(serde_json::to_value(
        rows.iter()
            .map(|(m, r)| (m.clone(), *r))
            .collect::<std::collections::BTreeMap<_, _>>(),
    )?);
    manifest.write(&a.out)?;
    Ok(())
}

fn checkpoint_paths(method: MethodArg, checkpoint: Option<PathBuf>) -> ModelPaths {
    ModelPaths {
        cnn: (method == MethodArg::Cnn)
            .then(|| checkpoint.clone())
            .flatten(),
        tempnet: (method == MethodArg::Tempnet)
            .then_some(checkpoint)
            .flatten(),
        synth_manifest: None,
    }
}

fn interpolate(a: InterpolateArgs) -> Result<()> {
    ensure!(
        !matches!(a.method, MethodArg::All | MethodArg::Oracle),
        "interpolate takes one of nearest, flow, cnn, tempnet"
    );
    let before =
        read_grid_file(&a.before).with_context(|| format!("reading {}", a.before.display()))?;
    let after =
        read_grid_file(&a.after).with_context(|| format!("reading {}", a.after.display()))?;
    let mut manifest = RunManifest::new("interpolate", config_value(&a));
    let dir = parent_dir(&a.out);
    fs::create_dir_all(&dir)?;
    let mid = if a.method == MethodArg::Flow {
        let flow = estimate_flow(&before, &after, &FlowConfig::default())?;
        if let Some(prefix) = &a.flow_out {
            let (u, v) = flow.components();
            fs::create_dir_all(parent_dir(prefix))?;
            for (delta, suffix) in [(u, "u"), (v, "v")] {
                let path = PathBuf::from(format!("{}_{suffix}.rgrd", prefix.display()));
                write_signed_grid(&delta, std::io::BufWriter::new(fs::File::create(&path)?))?;
                manifest.output(path);
            }
        }
        midpoint_synthesize(&before, &after, &flow)?
    } else {
        let interp = interpolator(a.method, &checkpoint_paths(a.method, a.checkpoint.clone()))?;
        interp.interpolate(&before, &after, &PairContext::new("cli", 0.0, 2.0))?
    };
    write_grid_file(&mid, &a.out)?;
    manifest.output(&a.out);
    manifest.write(&dir)?;
    Ok(())
}

fn upsample(a: UpsampleArgs) -> Result<()> {
    ensure!(
        !matches!(a.method, MethodArg::All | MethodArg::Oracle),
        "upsample takes one of nearest, flow, cnn, tempnet"
    );
    let event =
        read_event_dir(&a.event).with_context(|| format!("reading {}", a.event.display()))?;
    let interp = interpolator(a.method, &checkpoint_paths(a.method, a.checkpoint.clone()))?;
    let up = recursive_upsample(interp.as_ref(), &event, a.depth)?;
    write_event_dir(&up, &a.out)?;
    let mut manifest = RunManifest::new("upsample", config_value(&a));
    manifest.output(a.out.join(EVENT_META_FILE));
    manifest.results(json!({
        "input_frames": event.len(),
        "output_frames": up.len(),
        "step_minutes": up.step_minutes,
    }));
    manifest.write(&a.out)?;
    log::info!(
        "{} -> {} frames, step {} min",
        event.len(),
        up.len(),
        up.step_minutes
    );
    Ok(())
}

fn render(a: RenderArgs) -> Result<()> {
    let palette = Palette::default();
    let mut manifest = RunManifest::new("render", config_value(&a));
    let dir = if a.input.is_dir() {
        let event = read_event_dir(&a.input)?;
        fs::create_dir_all(&a.out)?;
        for (i, frame) in event.frames().iter().enumerate() {
            let path = a.out.join(format!("frame_{i:04}.png"));
            render_png_file(frame, &palette, &path)?;
            manifest.output(path);
        }
        a.out.clone()
    } else {
        let map = read_grid_file(&a.input)?;
        let dir = parent_dir(&a.out);
        fs::create_dir_all(&dir)?;
        render_png_file(&map, &palette, &a.out)?;
        manifest.output(&a.out);
        dir
    };
    manifest.write(&dir)?;
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let loaded = read_split(&a.data)?;
    let test = &loaded.split.test;
    ensure!(!test.is_empty(), "the split has no test triples");
    let pairs: Vec<_> = test
        .iter()
        .take(a.pairs.max(1))
        .map(|s| {
            let (t0, t1) = s.provenance.input_times();
            (
                s.before.as_ref(),
                s.after.as_ref(),
                PairContext::new(s.provenance.event_id.clone(), t0, t1),
            )
        })
        .collect();
    let mut interps: Vec<Box<dyn Interpolator>> = vec![
        Box::new(NearestInterpolator),
        Box::new(FlowInterpolator::default()),
    ];
    if a.models.cnn.is_some() {
        interps.push(interpolator(MethodArg::Cnn, &a.models)?);
    }
    if a.models.tempnet.is_some() {
        interps.push(interpolator(MethodArg::Tempnet, &a.models)?);
    }
    let refs: Vec<&dyn Interpolator> = interps.iter().map(|b| b.as_ref()).collect();
    let records = bench_interpolators(&refs, &pairs)?;
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("bench.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &records {
        log::info!("{}: {:.3} ms per pair", r.method, r.ms_per_pair);
        w.serialize(r)?;
    }
    w.flush()?;
    let mut manifest = RunManifest::new("bench", config_value(&a));
    manifest.output(path);
    manifest.results(serde_json::to_value(&records)?);
    manifest.write(&a.out)?;
    Ok(())
}
