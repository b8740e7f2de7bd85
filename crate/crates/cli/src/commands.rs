use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use breakout_core::eval::{assess_all, build_report, top_k, write_rank_csv, ModelPredictions};
use breakout_core::ingest::{aggregate_weekly, filter_outliers, filter_require_broadcast, parse_records, read_panels, write_panels};
use breakout_core::pipeline::{train_model, training_dataset, PipelineError};
use breakout_core::preprocess::{test_windows, WindowSample};
use breakout_core::synth::{generate, to_daily_records, write_ground_truth, write_records_csv};
use breakout_core::ml::MlError;
use breakout_core::{ModelArtifact, ModelChoice, PanelMap, Regressor, ScenarioConfig, SupervisedDataset};
use log::{info, warn};

use crate::config::{all_choices, parse_grid, RunConfig};
use crate::{Cli, CliError, Command, EvaluateArgs, IngestArgs, Preset, RankArgs, SynthArgs, TrainArgs};

const RESOLVED_CONFIG: &str = "resolved_config.toml";

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Command::Synth(args) = &cli.command {
        // The preset replaces the scenario before flags are applied.
        if args.preset == Some(Preset::Gradual) {
            cfg.scenario = ScenarioConfig::gradual_breakouts();
        }
    }
    cfg.apply_seed();
    cfg.validate()?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    }
    let config_inputs: Vec<PathBuf> = cli.config.iter().cloned().collect();
    match cli.command {
        Command::Ingest(args) => ingest(cfg, args, &config_inputs),
        Command::Synth(args) => synth(cfg, args, &config_inputs),
        Command::Train(args) => train(cfg, args, &config_inputs),
        Command::Evaluate(args) => evaluate(cfg, args, &config_inputs),
        Command::Rank(args) => rank(cfg, args, &config_inputs),
    }
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("missing --{flag} (or its [paths] entry in the config)")))
}

/// Absolute form of `path`, resolving symlinks where the file or its parent exists.
fn normalized(path: &Path) -> PathBuf {
    if let Ok(p) = path.canonicalize() {
        return p;
    }
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    match (parent.canonicalize(), path.file_name()) {
        (Ok(dir), Some(name)) => dir.join(name),
        _ => path.to_path_buf(),
    }
}

fn check_distinct(inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<(), CliError> {
    let ins: Vec<PathBuf> = inputs.iter().map(|p| normalized(p)).collect();
    for (i, out) in outputs.iter().enumerate() {
        let n = normalized(out);
        if ins.contains(&n) {
            return Err(CliError::Usage(format!("{} is both read and written", out.display())));
        }
        if outputs[..i].iter().any(|o| normalized(o) == n) {
            return Err(CliError::Usage(format!("{} is written twice", out.display())));
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

/// Creates the file and any missing parent directories.
fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    make_parent(path)?;
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))
}

fn make_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => create_dir(dir),
        _ => Ok(()),
    }
}

fn write_failed(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("writing {}: {e}", path.display()))
}

fn write_config(cfg: &RunConfig, path: &Path) -> Result<(), CliError> {
    let text = cfg.to_toml()?;
    make_parent(path)?;
    std::fs::write(path, text).map_err(|e| write_failed(path, e))
}

/// `report.csv` gets `report.resolved_config.toml` beside it.
fn config_beside(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
    path.with_file_name(format!("{stem}.{RESOLVED_CONFIG}"))
}

fn load_panels(path: &Path) -> Result<PanelMap, CliError> {
    let panels = read_panels(open(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    if panels.is_empty() {
        return Err(CliError::Invalid(format!("{}: no entities", path.display())));
    }
    Ok(panels)
}

fn pipeline_error(e: PipelineError) -> CliError {
    match e {
        PipelineError::UnknownModel(_)
        | PipelineError::NoSocialOnlyVariant(_)
        | PipelineError::Config(_)
        | PipelineError::Preprocess(_)
        | PipelineError::Ml(MlError::Empty) => CliError::Invalid(e.to_string()),
        _ => CliError::Internal(e.to_string()),
    }
}

fn model_path(dir: &Path, choice: &ModelChoice) -> PathBuf {
    dir.join(format!("{}.json", choice.key()))
}

fn ingest(mut cfg: RunConfig, args: IngestArgs, config_inputs: &[PathBuf]) -> Result<(), CliError> {
    if args.input.is_some() {
        cfg.paths.records = args.input;
    }
    if args.out_dir.is_some() {
        cfg.paths.out_dir = args.out_dir;
    }
    if args.format.is_some() {
        cfg.data.format = args.format;
    }
    if let Some(v) = args.origin {
        cfg.data.origin = v;
    }
    if let Some(v) = args.span_weeks {
        cfg.data.span_weeks = v;
    }
    if let Some(v) = args.outlier_low {
        cfg.data.outlier_low = v;
    }
    if let Some(v) = args.outlier_high {
        cfg.data.outlier_high = v;
    }
    if args.require_broadcast {
        cfg.data.require_broadcast = true;
    }
    cfg.validate()?;
    let input = required(cfg.paths.records.clone(), "input")?;
    let out_dir = required(cfg.paths.out_dir.clone(), "out-dir")?;
    let panels_path = out_dir.join("panels.csv");
    let summary_path = out_dir.join("ingest_summary.txt");
    let config_path = out_dir.join(RESOLVED_CONFIG);
    let mut inputs = config_inputs.to_vec();
    inputs.push(input.clone());
    check_distinct(&inputs, &[panels_path.clone(), summary_path.clone(), config_path.clone()])?;

    let format = cfg.data.record_format(&input)?;
    let records = parse_records(open(&input)?, format).map_err(|e| CliError::Invalid(format!("{}: {e}", input.display())))?;
    let panels = aggregate_weekly(&records, cfg.data.origin, cfg.data.span_weeks)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", input.display())))?;
    let n_entities = panels.len();
    let (panels, outliers) = filter_outliers(&panels, cfg.data.outlier_low, cfg.data.outlier_high);
    let (panels, no_broadcast) = if cfg.data.require_broadcast {
        filter_require_broadcast(&panels)
    } else {
        (panels, Vec::new())
    };
    if !outliers.is_empty() {
        info!("dropped {} entities outside the outlier bounds", outliers.len());
    }
    if !no_broadcast.is_empty() {
        warn!("dropped {} entities without broadcast mentions", no_broadcast.len());
    }
    if panels.is_empty() {
        warn!("no entities left after filtering");
    }

    create_dir(&out_dir)?;
    write_config(&cfg, &config_path)?;
    let mut w = create(&panels_path)?;
    write_panels(&mut w, &panels).map_err(|e| write_failed(&panels_path, e))?;
    w.flush().map_err(|e| write_failed(&panels_path, e))?;

    let mut summary = format!(
        "records {}\nentities {}\nkept {}\ndropped_outlier {}\ndropped_no_broadcast {}\n",
        records.len(),
        n_entities,
        panels.len(),
        outliers.len(),
        no_broadcast.len()
    );
    for id in &outliers {
        summary.push_str(&format!("outlier {id}\n"));
    }
    for id in &no_broadcast {
        summary.push_str(&format!("no_broadcast {id}\n"));
    }
    std::fs::write(&summary_path, summary).map_err(|e| write_failed(&summary_path, e))?;
    info!("wrote {} panels to {}", panels.len(), panels_path.display());
    Ok(())
}

fn synth(mut cfg: RunConfig, args: SynthArgs, config_inputs: &[PathBuf]) -> Result<(), CliError> {
    if args.out_dir.is_some() {
        cfg.paths.out_dir = args.out_dir;
    }
    if let Some(v) = args.n_entities {
        cfg.scenario.n_entities = v;
    }
    if let Some(v) = args.span_weeks {
        cfg.scenario.span_weeks = v;
    }
    if let Some(v) = args.breakout_fraction {
        cfg.scenario.breakout_fraction = v;
    }
    if let Some(v) = args.breakout_lift {
        cfg.scenario.breakout_lift = v;
    }
    // Keep the ingest settings consistent with the generated span.
    cfg.data.origin = cfg.scenario.origin;
    cfg.data.span_weeks = cfg.scenario.span_weeks;
    cfg.scenario.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out_dir = required(cfg.paths.out_dir.clone(), "out-dir")?;
    let records_path = out_dir.join("records.csv");
    let truth_path = out_dir.join("ground_truth.csv");
    let config_path = out_dir.join(RESOLVED_CONFIG);
    check_distinct(config_inputs, &[records_path.clone(), truth_path.clone(), config_path.clone()])?;

    let scenario = generate(&cfg.scenario).map_err(|e| CliError::Usage(e.to_string()))?;
    create_dir(&out_dir)?;
    write_config(&cfg, &config_path)?;
    let records = to_daily_records(&scenario.panels);
    let mut w = create(&records_path)?;
    write_records_csv(&mut w, &records).map_err(|e| write_failed(&records_path, e))?;
    w.flush().map_err(|e| write_failed(&records_path, e))?;
    let mut w = create(&truth_path)?;
    write_ground_truth(&mut w, &scenario.ground_truth).map_err(|e| write_failed(&truth_path, e))?;
    w.flush().map_err(|e| write_failed(&truth_path, e))?;
    let n_breakouts = scenario.ground_truth.values().filter(|b| **b).count();
    info!(
        "generated {} entities ({} injected breakouts) into {}",
        scenario.panels.len(),
        n_breakouts,
        out_dir.display()
    );
    Ok(())
}

fn train(mut cfg: RunConfig, args: TrainArgs, config_inputs: &[PathBuf]) -> Result<(), CliError> {
    if args.panels.is_some() {
        cfg.paths.panels = args.panels;
    }
    if args.out_dir.is_some() {
        cfg.paths.out_dir = args.out_dir;
    }
    if args.models.is_some() {
        cfg.models = args.models;
    }
    if let Some(spec) = &args.grid {
        cfg.pipeline.classical.grid = parse_grid(spec)?;
    }
    if let Some(v) = args.month_weeks {
        cfg.pipeline.month_weeks = v;
    }
    if args.tune {
        cfg.pipeline.tuning.enabled = true;
    }
    cfg.validate()?;
    let choices = cfg.model_choices()?;
    let panels_path = required(cfg.paths.panels.clone(), "panels")?;
    let out_dir = required(cfg.paths.out_dir.clone(), "out-dir")?;
    let summary_path = out_dir.join("training_summary.csv");
    let config_path = out_dir.join(RESOLVED_CONFIG);
    let mut outputs: Vec<PathBuf> = choices.iter().map(|c| model_path(&out_dir, c)).collect();
    outputs.extend(choices.iter().filter(|c| c.family.is_classical()).map(|c| out_dir.join(format!("{}.orders.csv", c.key()))));
    outputs.push(summary_path.clone());
    outputs.push(config_path.clone());
    let mut inputs = config_inputs.to_vec();
    inputs.push(panels_path.clone());
    check_distinct(&inputs, &outputs)?;

    let panels = load_panels(&panels_path)?;
    let dataset: Option<SupervisedDataset> = if choices.iter().any(|c| !c.family.is_classical()) {
        let (ds, skipped) =
            training_dataset(&panels, cfg.pipeline.month_weeks, cfg.pipeline.stride_weeks).map_err(pipeline_error)?;
        if !skipped.skipped.is_empty() {
            warn!("{} entities are too short for a training window", skipped.skipped.len());
        }
        if ds.is_empty() {
            return Err(CliError::Invalid("no training windows fit before the forecast origin".into()));
        }
        info!("{} pooled training windows", ds.len());
        Some(ds)
    } else {
        None
    };

    create_dir(&out_dir)?;
    write_config(&cfg, &config_path)?;
    let mut summary = csv::Writer::from_path(&summary_path).map_err(|e| write_failed(&summary_path, e))?;
    summary
        .write_record(["model", "n_fitted", "n_excluded", "n_training_windows", "mean_validation_mae", "training_mae"])
        .map_err(|e| write_failed(&summary_path, e))?;
    for choice in &choices {
        info!("training {}", choice.name());
        let artifact = train_model(&panels, *choice, &cfg.pipeline, dataset.as_ref()).map_err(pipeline_error)?;
        let path = model_path(&out_dir, choice);
        let mut w = create(&path)?;
        artifact.write(&mut w).map_err(|e| write_failed(&path, e))?;
        w.flush().map_err(|e| write_failed(&path, e))?;

        let row = match &artifact {
            ModelArtifact::Classical(run) => {
                write_orders(run, &out_dir.join(format!("{}.orders.csv", choice.key())))?;
                let n = run.forecasts.len();
                let mean_mae = run.forecasts.values().map(|f| f.valid_mae).sum::<f64>() / n as f64;
                if !run.failures.is_empty() {
                    warn!("{}: {} entities excluded", choice.name(), run.failures.len());
                }
                [choice.name(), n.to_string(), run.failures.len().to_string(), String::new(), mean_mae.to_string(), String::new()]
            }
            ModelArtifact::Pooled(saved) => {
                let ds = dataset.as_ref().expect("pooled models have a dataset");
                let pred = saved.model.predict(&ds.samples).map_err(|e| CliError::Internal(e.to_string()))?;
                let mae = pred.iter().zip(&ds.samples).map(|(p, s)| (p - s.target).abs()).sum::<f64>() / ds.len() as f64;
                [
                    choice.name(),
                    panels.len().to_string(),
                    "0".into(),
                    ds.len().to_string(),
                    String::new(),
                    mae.to_string(),
                ]
            }
        };
        summary.write_record(&row).map_err(|e| write_failed(&summary_path, e))?;
        info!("wrote {}", path.display());
    }
    summary.flush().map_err(|e| write_failed(&summary_path, e))?;
    Ok(())
}

/// Per-entity order selection of a classical run.
fn write_orders(run: &breakout_core::pipeline::ClassicalRun, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| write_failed(path, e))?;
    let err = |e: csv::Error| write_failed(path, e);
    w.write_record(["entity_id", "status", "transform", "p", "q", "validation_mae"]).map_err(err)?;
    for f in run.forecasts.values() {
        w.write_record([
            f.entity_id.clone(),
            "fitted".into(),
            format!("{:?}", f.transform),
            f.p.to_string(),
            f.q.to_string(),
            f.valid_mae.to_string(),
        ])
        .map_err(err)?;
    }
    for (id, reason) in &run.failures {
        w.write_record([id.clone(), format!("excluded: {reason}"), String::new(), String::new(), String::new(), String::new()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| write_failed(path, e))
}

/// Test windows plus the loaded artifacts of the selected (or all present) models.
fn load_models(
    cfg: &RunConfig,
    models_dir: &Path,
    panels: &PanelMap,
) -> Result<(Vec<WindowSample>, Vec<(ModelChoice, ModelArtifact)>), CliError> {
    let choices: Vec<ModelChoice> = match &cfg.models {
        Some(_) => cfg.model_choices()?,
        None => all_choices().into_iter().filter(|c| model_path(models_dir, c).exists()).collect(),
    };
    if choices.is_empty() {
        return Err(CliError::Invalid(format!("no model files in {}", models_dir.display())));
    }
    let (windows, skipped) = test_windows(panels, cfg.pipeline.month_weeks);
    if !skipped.skipped.is_empty() {
        warn!("{} entities are too short for a test window", skipped.skipped.len());
    }
    if windows.is_empty() {
        return Err(CliError::Invalid("no entity has a complete test window".into()));
    }
    let mut out = Vec::with_capacity(choices.len());
    for choice in choices {
        let path = model_path(models_dir, &choice);
        let artifact = ModelArtifact::read(open(&path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
        out.push((choice, artifact));
    }
    Ok((windows, out))
}

fn predictions(artifact: &ModelArtifact, windows: &[WindowSample]) -> Result<Vec<Option<f64>>, CliError> {
    artifact.predictions(windows).map_err(|e| match e {
        MlError::LayoutMismatch { .. } | MlError::NotNormalized(_) => CliError::Invalid(format!("{}: {e}", artifact.name())),
        _ => CliError::Internal(format!("{}: {e}", artifact.name())),
    })
}

fn evaluate(mut cfg: RunConfig, args: EvaluateArgs, config_inputs: &[PathBuf]) -> Result<(), CliError> {
    if args.panels.is_some() {
        cfg.paths.panels = args.panels;
    }
    if args.models_dir.is_some() {
        cfg.paths.models_dir = args.models_dir;
    }
    if args.models.is_some() {
        cfg.models = args.models;
    }
    if let Some(v) = args.k {
        cfg.eval.k = v;
    }
    if let Some(v) = args.threshold {
        cfg.eval.threshold = v;
    }
    if let Some(v) = args.recall_mode {
        cfg.eval.recall_mode = v;
    }
    if let Some(v) = args.month_weeks {
        cfg.pipeline.month_weeks = v;
    }
    cfg.validate()?;
    let panels_path = required(cfg.paths.panels.clone(), "panels")?;
    let models_dir = required(cfg.paths.models_dir.clone(), "models-dir")?;
    let mut outputs = Vec::new();
    if let Some(out) = &args.out {
        outputs.push(out.clone());
        outputs.push(config_beside(out));
    }
    outputs.extend(args.predictions.iter().cloned());
    let mut inputs = config_inputs.to_vec();
    inputs.push(panels_path.clone());
    if let Some(models) = &cfg.models {
        inputs.extend(crate::config::parse_models(models)?.iter().map(|c| model_path(&models_dir, c)));
    } else {
        inputs.extend(all_choices().iter().map(|c| model_path(&models_dir, c)));
    }
    check_distinct(&inputs, &outputs)?;

    let panels = load_panels(&panels_path)?;
    let (windows, models) = load_models(&cfg, &models_dir, &panels)?;
    let mut results: Vec<ModelPredictions> = Vec::with_capacity(models.len());
    for (_, artifact) in &models {
        results.push((artifact.name(), predictions(artifact, &windows)?));
    }
    let report = build_report(&results, &windows, cfg.eval.k, cfg.eval.threshold, cfg.eval.recall_mode)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    print!("{}", report.to_table());

    if let Some(out) = &args.out {
        let config_path = config_beside(out);
        write_config(&cfg, &config_path)?;
        let mut w = create(out)?;
        report.write_csv(&mut w).map_err(|e| write_failed(out, e))?;
        w.flush().map_err(|e| write_failed(out, e))?;
    }
    if let Some(path) = &args.predictions {
        let mut w = csv::Writer::from_writer(create(path)?);
        let err = |e: csv::Error| write_failed(path, e);
        w.write_record(["model", "entity_id", "prediction", "actual"]).map_err(err)?;
        for (name, preds) in &results {
            for (s, p) in windows.iter().zip(preds) {
                w.write_record([
                    name.clone(),
                    s.entity_id.clone(),
                    p.map(|v| v.to_string()).unwrap_or_default(),
                    s.target.to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| write_failed(path, e))?;
    }
    Ok(())
}

fn rank(mut cfg: RunConfig, args: RankArgs, config_inputs: &[PathBuf]) -> Result<(), CliError> {
    if args.panels.is_some() {
        cfg.paths.panels = args.panels;
    }
    if args.models_dir.is_some() {
        cfg.paths.models_dir = args.models_dir;
    }
    if let Some(v) = args.k {
        cfg.eval.k = v;
    }
    if let Some(v) = args.threshold {
        cfg.eval.threshold = v;
    }
    if let Some(v) = args.month_weeks {
        cfg.pipeline.month_weeks = v;
    }
    cfg.models = Some(vec![args.model.clone()]);
    cfg.validate()?;
    let panels_path = required(cfg.paths.panels.clone(), "panels")?;
    let models_dir = required(cfg.paths.models_dir.clone(), "models-dir")?;
    let choice = cfg.model_choices()?[0];
    let mut outputs = Vec::new();
    if let Some(out) = &args.out {
        outputs.push(out.clone());
        outputs.push(config_beside(out));
    }
    let mut inputs = config_inputs.to_vec();
    inputs.push(panels_path.clone());
    inputs.push(model_path(&models_dir, &choice));
    check_distinct(&inputs, &outputs)?;

    let panels = load_panels(&panels_path)?;
    let (windows, models) = load_models(&cfg, &models_dir, &panels)?;
    let artifact = &models[0].1;
    let preds = predictions(artifact, &windows)?;
    let assessments = assess_all(&windows, &preds, cfg.eval.threshold);
    let rows = top_k(&assessments, cfg.eval.k);
    if rows.len() < cfg.eval.k {
        warn!(
            "k = {} exceeds the {} entities with a defined predicted ratio; listing all of them",
            cfg.eval.k,
            rows.len()
        );
    }
    match &args.out {
        Some(out) => {
            write_config(&cfg, &config_beside(out))?;
            let mut w = create(out)?;
            write_rank_csv(&rows, &mut w).map_err(|e| write_failed(out, e))?;
            w.flush().map_err(|e| write_failed(out, e))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_rank_csv(&rows, &mut lock).map_err(|e| CliError::Internal(e.to_string()))?;
        }
    }
    Ok(())
}
