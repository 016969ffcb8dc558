//! One handler per subcommand. Every handler returns the summary printed
//! under `--json`; errors carry the failing stage's name as context.

use crate::output::{self, Summary};
use crate::{Cli, Command, DEFAULT_SEED, SEED_ENV_VAR};
use anyhow::{anyhow, bail, Context, Result};
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use strain_sense_core::cnn::{model as model_io, Model};
use strain_sense_core::dataset;
use strain_sense_core::signal::{self, NormStats, Spectrogram};
use strain_sense_core::stream;
use strain_sense_core::train::{
    evaluate, split_dataset, sweep, train, LabelMap, OptimizerKind, OptimizerSpec, TrainConfig,
};
use strain_sense_core::tsne;

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV_VAR) {
        Ok(text) => text
            .parse::<u64>()
            .with_context(|| format!("{SEED_ENV_VAR} must be an unsigned integer, got \"{text}\"")),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn run(cli: Cli) -> Result<Summary> {
    let seed = resolve_seed(cli.seed)?;
    let verbose = cli.verbose;
    match cli.command {
        Command::Gen {
            profiles,
            duration,
            output,
        } => gen(&profiles, duration, seed, &output).context("gen"),
        Command::Import {
            input,
            time_column,
            labels,
            trim_tail_s,
            output,
        } => import(&input, &time_column, &labels, trim_tail_s, &output).context("import"),
        Command::Featurize { input, output } => featurize(&input, &output).context("featurize"),
        Command::Train {
            spectrograms,
            optimizer,
            lr,
            epochs,
            batch_size,
            train_fraction,
            val_fraction,
            growth_rate,
            output,
            report_dir,
        } => {
            let optimizer = OptimizerSpec::new(OptimizerKind::parse(&optimizer)?, lr);
            let config = TrainConfig {
                optimizer,
                epochs,
                batch_size,
                seed,
                validation_fraction: val_fraction,
                growth_rate,
            };
            train_command(
                &spectrograms,
                &config,
                train_fraction,
                &output,
                report_dir.as_deref(),
                verbose,
            )
            .context("train")
        }
        Command::Sweep {
            spectrograms,
            grid,
            epochs,
            batch_size,
            train_fraction,
            val_fraction,
            growth_rate,
            output,
        } => {
            let base = TrainConfig {
                optimizer: OptimizerSpec::adam(0.02),
                epochs,
                batch_size,
                seed,
                validation_fraction: val_fraction,
                growth_rate,
            };
            sweep_command(&spectrograms, &grid, &base, train_fraction, &output).context("sweep")
        }
        Command::Eval {
            spectrograms,
            model,
            report_dir,
        } => eval_command(&spectrograms, &model, report_dir.as_deref(), verbose).context("eval"),
        Command::Embed {
            spectrograms,
            model,
            raw,
            perplexity,
            exaggeration,
            iterations,
            exaggeration_iters,
            learning_rate,
            output,
            svg,
        } => {
            let config = tsne::TsneConfig {
                perplexity,
                early_exaggeration: exaggeration,
                output_dims: 3,
                iterations,
                exaggeration_iters,
                learning_rate,
                seed,
            };
            embed_command(
                &spectrograms,
                model.as_deref(),
                raw,
                &config,
                &output,
                svg.as_deref(),
                verbose,
            )
            .context("embed")
        }
        Command::Watch {
            input,
            model,
            poll_interval_ms,
            output,
            on_event,
        } => watch_command(
            &input,
            &model,
            poll_interval_ms,
            output.as_deref(),
            on_event.as_deref(),
            verbose,
        )
        .context("watch"),
    }
}

fn gen(profiles: &str, duration: f64, seed: u64, output: &Path) -> Result<Summary> {
    let profiles = match profiles {
        "default4" | "state4" => dataset::state_profiles(),
        "impact3" => dataset::impact_profiles(),
        path => dataset::read_profiles_file(Path::new(path))
            .with_context(|| format!("reading profiles from {path}"))?,
    };
    let ds = dataset::generate_synthetic(&profiles, duration, seed)?;
    output::write_atomic(output, dataset::export_canonical(&ds).as_bytes())?;
    let mut summary = Summary::new("gen", Some(seed));
    summary.output("data", output);
    summary.metric("classes", ds.classes().len() as f64);
    summary.metric("samples_per_class", ds.classes()[0].1.samples.len() as f64);
    Ok(summary)
}

fn import(
    input: &Path,
    time_column: &str,
    labels: &[String],
    trim_tail_s: f64,
    output: &Path,
) -> Result<Summary> {
    let ds = dataset::import_wide_csv(input, time_column, labels, trim_tail_s)
        .with_context(|| format!("reading {}", input.display()))?;
    output::write_atomic(output, dataset::export_canonical(&ds).as_bytes())?;
    let mut summary = Summary::new("import", None);
    summary.output("data", output);
    summary.metric("classes", ds.classes().len() as f64);
    Ok(summary)
}

fn featurize(input: &Path, output: &Path) -> Result<Summary> {
    let ds = dataset::import_canonical(input).with_context(|| format!("reading {}", input.display()))?;
    let (specs, stats) = dataset::featurize_dataset(&ds)?;
    let mut jsonl = Vec::new();
    signal::io::write_spectrograms(&mut jsonl, &specs)?;
    output::write_atomic(output, &jsonl)?;
    let sidecar = signal::io::norm_stats_sidecar_path(output);
    output::write_atomic(
        &sidecar,
        (serde_json::to_string_pretty(&serde_json::json!({
            "min": stats.min,
            "max": stats.max,
            "version": 1,
        }))? + "\n")
            .as_bytes(),
    )?;
    let mut summary = Summary::new("featurize", None);
    summary.output("spectrograms", output);
    summary.output("norm_stats", &sidecar);
    summary.metric("spectrograms", specs.len() as f64);
    summary.metric("classes", ds.classes().len() as f64);
    Ok(summary)
}

/// Loads a featurized batch together with its sidecar statistics.
fn load_batch(path: &Path) -> Result<(Vec<Spectrogram>, Option<NormStats>)> {
    let specs = signal::io::read_spectrograms_file(path)
        .with_context(|| format!("reading {}", path.display()))?;
    if specs.is_empty() {
        bail!("{} holds no spectrograms", path.display());
    }
    let sidecar = signal::io::norm_stats_sidecar_path(path);
    let stats = if sidecar.exists() {
        Some(signal::io::read_norm_stats_file(&sidecar)?)
    } else {
        None
    };
    Ok((specs, stats))
}

/// Brings a batch into a model's input space. Batches featurized alongside
/// the model (identical statistics) pass through untouched; anything else is
/// mapped back to raw magnitudes and renormalized with the model's
/// statistics, clamped to the training range.
fn align_to_model(
    specs: Vec<Spectrogram>,
    file_stats: Option<NormStats>,
    model_stats: NormStats,
    verbose: bool,
) -> Vec<Spectrogram> {
    match file_stats {
        None => specs,
        Some(s) if s == model_stats => specs,
        Some(s) => {
            if verbose {
                eprintln!(
                    "note: batch was scaled with [{}, {}], model expects [{}, {}]; realigning",
                    s.min, s.max, model_stats.min, model_stats.max
                );
            }
            specs
                .into_iter()
                .map(|mut spec| {
                    for row in spec.bins.iter_mut() {
                        for v in row.iter_mut() {
                            *v = s.min + *v * (s.max - s.min);
                        }
                    }
                    spec.normalized_clamped(&model_stats).0
                })
                .collect()
        }
    }
}

fn train_command(
    spectrograms: &Path,
    config: &TrainConfig,
    train_fraction: f64,
    output: &Path,
    report_dir: Option<&Path>,
    verbose: bool,
) -> Result<Summary> {
    let (specs, stats) = load_batch(spectrograms)?;
    let stats = stats.ok_or_else(|| {
        anyhow!(
            "missing normalization sidecar {} (run featurize first)",
            signal::io::norm_stats_sidecar_path(spectrograms).display()
        )
    })?;
    let labels = LabelMap::from_specs(&specs)?;
    let (train_set, test_set) = split_dataset(&specs, train_fraction, config.seed)?;
    if verbose {
        eprintln!(
            "training on {} items, testing on {} ({} classes)",
            train_set.len(),
            test_set.len(),
            labels.len()
        );
    }
    let (net, mut report) = train(&train_set, &labels, config)?;
    let (test_accuracy, confusion) = evaluate(&net, &test_set, &labels)?;
    report.attach_test(test_accuracy, confusion);
    if verbose {
        eprintln!(
            "train accuracy {:.4}, validation {:.4}, test {:.4} in {:.1} s",
            report.train_accuracy, report.val_accuracy, test_accuracy, report.wall_clock_seconds
        );
    }

    let model = Model::new(net, labels.labels().to_vec(), stats)?;
    output::write_atomic(output, model_io::model_to_json(&model)?.as_bytes())?;

    let mut summary = Summary::new("train", Some(config.seed));
    summary.output("model", output);
    summary.metric("train_accuracy", report.train_accuracy);
    summary.metric("val_accuracy", report.val_accuracy);
    summary.metric("test_accuracy", test_accuracy);
    summary.metric("final_train_cost", *report.train_costs.last().unwrap());
    summary.metric("final_val_cost", *report.val_costs.last().unwrap());
    if let Some(dir) = report_dir {
        for (name, path) in output::emit_train_reports(dir, &report)? {
            summary.output(&name, &path);
        }
    }
    Ok(summary)
}

fn parse_grid(grid: &str) -> Result<Vec<OptimizerSpec>> {
    let mut out = Vec::new();
    for entry in grid.split(',').filter(|e| !e.trim().is_empty()) {
        let (kind, lr) = entry
            .split_once(':')
            .ok_or_else(|| anyhow!("grid entry \"{entry}\" is not kind:learning-rate"))?;
        let lr: f64 = lr
            .trim()
            .parse()
            .with_context(|| format!("bad learning rate in \"{entry}\""))?;
        out.push(OptimizerSpec::new(OptimizerKind::parse(kind.trim())?, lr));
    }
    if out.is_empty() {
        bail!("the sweep grid is empty");
    }
    Ok(out)
}

fn sweep_command(
    spectrograms: &Path,
    grid: &str,
    base: &TrainConfig,
    train_fraction: f64,
    output: &Path,
) -> Result<Summary> {
    let (specs, _) = load_batch(spectrograms)?;
    let labels = LabelMap::from_specs(&specs)?;
    let candidates = parse_grid(grid)?;
    let table = sweep(&specs, &labels, &candidates, base, train_fraction)?;
    output::write_atomic(output, output::sweep_csv(&table).as_bytes())?;
    let best = table.optimal_index();
    let mut summary = Summary::new("sweep", Some(base.seed));
    summary.output("table", output);
    summary.metric("candidates", table.rows.len() as f64);
    summary.metric("optimal_index", best as f64);
    summary.metric("optimal_val_cost", table.rows[best].final_val_cost);
    summary.metric("optimal_test_accuracy", table.rows[best].test_accuracy);
    Ok(summary)
}

fn eval_command(
    spectrograms: &Path,
    model_path: &Path,
    report_dir: Option<&Path>,
    verbose: bool,
) -> Result<Summary> {
    let (specs, file_stats) = load_batch(spectrograms)?;
    let model = model_io::load_model(model_path)?;
    let specs = align_to_model(specs, file_stats, model.norm_stats, verbose);
    let labels = LabelMap::new(model.label_map.clone())?;
    let (accuracy, confusion) = evaluate(&model.network, &specs, &labels)?;
    if verbose {
        eprintln!("accuracy {accuracy:.4} on {} items", specs.len());
    }
    let mut summary = Summary::new("eval", None);
    summary.metric("accuracy", accuracy);
    summary.metric("items", specs.len() as f64);
    if let Some(dir) = report_dir {
        let path = dir.join("confusion.csv");
        output::write_atomic(
            &path,
            output::confusion_csv(labels.labels(), &confusion).as_bytes(),
        )?;
        summary.output("confusion", &path);
    }
    Ok(summary)
}

fn embed_command(
    spectrograms: &Path,
    model_path: Option<&Path>,
    raw: bool,
    config: &tsne::TsneConfig,
    output: &Path,
    svg: Option<&Path>,
    verbose: bool,
) -> Result<Summary> {
    let (specs, file_stats) = load_batch(spectrograms)?;
    let features = if raw {
        tsne::raw_features(&specs)?
    } else {
        let model_path =
            model_path.ok_or_else(|| anyhow!("--model is required unless --raw is set"))?;
        let model = model_io::load_model(model_path)?;
        let specs = align_to_model(specs, file_stats, model.norm_stats, verbose);
        tsne::extract_features(&model.network, &specs)?
    };
    let affinities = tsne::conditional_affinities(&features, config.perplexity)?;
    let stuck = affinities.converged.iter().filter(|&&c| !c).count();
    if stuck > 0 {
        eprintln!("warning: perplexity search did not converge for {stuck} rows; keeping best bandwidths");
    }
    let embedding = tsne::tsne_from_affinities(&affinities, &features.labels, config)?;
    output::write_atomic(output, tsne::export::embedding_csv(&embedding).as_bytes())?;
    let mut summary = Summary::new("embed", Some(config.seed));
    summary.output("embedding", output);
    summary.metric("points", embedding.n as f64);
    summary.metric("final_kl", embedding.final_kl);
    summary.metric("kl_after_exaggeration", embedding.kl_after_exaggeration);
    if let Some(svg_path) = svg {
        output::write_atomic(svg_path, tsne::export::embedding_svg(&embedding)?.as_bytes())?;
        summary.output("svg", svg_path);
    }
    Ok(summary)
}

static INTERRUPTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    INTERRUPTED.store(true, Ordering::SeqCst);
}

fn watch_command(
    input: &Path,
    model_path: &Path,
    poll_interval_ms: u64,
    output: Option<&Path>,
    on_event: Option<&str>,
    verbose: bool,
) -> Result<Summary> {
    let model = model_io::load_model(model_path)?;
    unsafe {
        libc::signal(
            libc::SIGINT,
            on_sigint as extern "C" fn(libc::c_int) as usize,
        );
    }
    let options = stream::WatchOptions {
        poll_interval: Duration::from_millis(poll_interval_ms.max(1)),
    };
    let mut event_log = match output {
        Some(path) => Some(
            std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?,
        ),
        None => None,
    };
    let mut count: u64 = 0;
    let stdout = std::io::stdout();
    if verbose {
        eprintln!("watching {} (ctrl-c to stop)", input.display());
    }
    stream::watch(
        input,
        &model,
        &options,
        &INTERRUPTED,
        |event| {
            let line = serde_json::to_string(event)?;
            match &mut event_log {
                Some(file) => {
                    writeln!(file, "{line}").map_err(strain_sense_core::Error::Io)?;
                    file.flush().map_err(strain_sense_core::Error::Io)?;
                }
                None => {
                    let mut lock = stdout.lock();
                    writeln!(lock, "{line}").map_err(strain_sense_core::Error::Io)?;
                    lock.flush().map_err(strain_sense_core::Error::Io)?;
                }
            }
            if let Some(cmd) = on_event {
                run_event_hook(cmd, &line);
            }
            count += 1;
            Ok(())
        },
        |msg| eprintln!("warning: {msg}"),
    )?;
    let mut summary = Summary::new("watch", None);
    if let Some(path) = output {
        summary.output("events", path);
    }
    summary.metric("events", count as f64);
    Ok(summary)
}

/// Runs `sh -c CMD` with the event JSON on stdin; hook failures are reported
/// but never stop the stream.
fn run_event_hook(cmd: &str, event_json: &str) {
    let spawned = std::process::Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(std::process::Stdio::piped())
        .spawn();
    match spawned {
        Ok(mut child) => {
            if let Some(stdin) = child.stdin.as_mut() {
                let _ = stdin.write_all(event_json.as_bytes());
                let _ = stdin.write_all(b"\n");
            }
            match child.wait() {
                Ok(status) if !status.success() => {
                    eprintln!("warning: --on-event command exited with {status}");
                }
                Ok(_) => {}
                Err(e) => eprintln!("warning: --on-event command failed: {e}"),
            }
        }
        Err(e) => eprintln!("warning: cannot spawn --on-event command: {e}"),
    }
}
