//! Command-line entry points: `synth`, `train`, `detect`, `eval`.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 data error,
//! 4 numerical divergence.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::checkpoint::{file_hash, Checkpoint};
use crate::config::{init_thread_pool, RunConfig, OVERRIDE_KEYS};
use crate::data::{
    read_labels_csv, read_logs_jsonl, read_metrics_csv, read_provenance_csv, write_labels_csv,
    write_logs_jsonl, write_metrics_csv, write_provenance_csv,
};
use crate::error::{Error, Result};
use crate::model::AspectMap;
use crate::pipeline::{detect, prepare_inference, prepare_training, train_detector, Telemetry};
use crate::report::{join_rows, render_html, report_from_rows, write_report_json};
use crate::synth::{emit_labels, gen_standard_suite, standard_profile, SUITE_LENGTH_S};

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn command() -> Command {
    let config_args = |cmd: Command| -> Command {
        let mut cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("TOML run configuration"),
        );
        for key in OVERRIDE_KEYS {
            cmd = cmd.arg(
                Arg::new(*key)
                    .long(*key)
                    .value_name("VALUE")
                    .help("override the config key of the same name"),
            );
        }
        cmd
    };

    Command::new("hadeskit")
        .about("Telemetry anomaly detection: log/metric fusion with a fault-injection synthesizer")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("synth")
                .about("Generate a synthetic telemetry corpus with injected faults")
                .arg(Arg::new("suite").long("suite").default_value("standard"))
                .arg(Arg::new("seed").long("seed").default_value("0"))
                .arg(Arg::new("length-s").long("length-s").value_name("SECONDS"))
                .arg(Arg::new("t-steps").long("t-steps").default_value("10"))
                .arg(Arg::new("stride").long("stride").value_name("STEPS"))
                .arg(
                    Arg::new("aspect-map")
                        .long("aspect-map")
                        .action(ArgAction::SetTrue)
                        .help("also write the suite's aspect map JSON"),
                )
                .arg(Arg::new("out").long("out").required(true).value_name("DIR")),
        )
        .subcommand(config_args(
            Command::new("train")
                .about("Train a detector and write a checkpoint plus a JSONL training log")
                .arg(Arg::new("out").long("out").required(true).value_name("DIR")),
        ))
        .subcommand(
            Command::new("detect")
                .about("Score telemetry chunks with a trained checkpoint")
                .arg(Arg::new("checkpoint").long("checkpoint").required(true))
                .arg(Arg::new("logs").long("logs").required(true))
                .arg(Arg::new("metrics").long("metrics").required(true))
                .arg(Arg::new("out").long("out").required(true).value_name("FILE"))
                .arg(
                    Arg::new("remine")
                        .long("remine")
                        .action(ArgAction::SetTrue)
                        .help("re-mine templates from the incoming logs instead of the stored ones"),
                ),
        )
        .subcommand(
            Command::new("eval")
                .about("Compare predictions against labels; write JSON and HTML reports")
                .arg(Arg::new("predictions").long("predictions").required(true))
                .arg(Arg::new("labels").long("labels").required(true))
                .arg(Arg::new("logs").long("logs"))
                .arg(Arg::new("metrics").long("metrics"))
                .arg(Arg::new("out").long("out").required(true).value_name("DIR")),
        )
}

/// Parse argv and run. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            // clap prints usage itself; usage problems are config errors.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_thread_pool();
    let result = match matches.subcommand() {
        Some(("synth", m)) => cmd_synth(m),
        Some(("train", m)) => cmd_train(m),
        Some(("detect", m)) => cmd_detect(m),
        Some(("eval", m)) => cmd_eval(m),
        _ => unreachable!("subcommand required"),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn parse_flag<T: std::str::FromStr>(m: &ArgMatches, name: &str) -> Result<T> {
    let raw = m.get_one::<String>(name).expect("defaulted flag");
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value {raw:?} for --{name}")))
}

fn cmd_synth(m: &ArgMatches) -> Result<()> {
    let suite = m.get_one::<String>("suite").unwrap();
    if suite != "standard" {
        return Err(Error::Config(format!("unknown suite {suite:?}")));
    }
    let seed: u64 = parse_flag(m, "seed")?;
    let t_steps: usize = parse_flag(m, "t-steps")?;
    let stride: usize = match m.get_one::<String>("stride") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad value {v:?} for --stride")))?,
        None => t_steps,
    };
    let length_s: u64 = match m.get_one::<String>("length-s") {
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad value {v:?} for --length-s")))?,
        None => SUITE_LENGTH_S,
    };
    let out = PathBuf::from(m.get_one::<String>("out").unwrap());
    std::fs::create_dir_all(&out)?;

    let corpus = gen_standard_suite(seed, length_s)?;
    let chunks = emit_labels(&corpus, t_steps, stride)?;
    let labels: Vec<(u64, u8)> = chunks
        .iter()
        .map(|c| (c.window_start, c.label.unwrap_or(0)))
        .collect();

    write_logs_jsonl(&out.join("logs.jsonl"), &corpus.logs)?;
    write_metrics_csv(&out.join("metrics.csv"), &corpus.metrics)?;
    write_provenance_csv(&out.join("provenance.csv"), &corpus.provenance)?;
    write_labels_csv(&out.join("labels.csv"), &labels)?;
    if m.get_flag("aspect-map") {
        std::fs::write(out.join("aspect_map.json"), standard_profile().aspect_map_json())?;
    }
    println!(
        "wrote corpus: {} log lines, {} metric rows, {} chunks ({} abnormal) to {}",
        corpus.logs.len(),
        corpus.metrics.len(),
        labels.len(),
        labels.iter().filter(|(_, l)| *l == 1).count(),
        out.display()
    );
    Ok(())
}

fn load_config(m: &ArgMatches) -> Result<RunConfig> {
    let mut config = match m.get_one::<String>("config") {
        Some(path) => RunConfig::load(Path::new(path))?,
        None => RunConfig::default(),
    };
    for key in OVERRIDE_KEYS {
        if let Some(value) = m.get_one::<String>(*key) {
            config.apply_override(key, value)?;
        }
    }
    Ok(config)
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{what} path {} does not exist",
            path.display()
        )));
    }
    Ok(())
}

fn cmd_train(m: &ArgMatches) -> Result<()> {
    let config = load_config(m)?;
    let out = PathBuf::from(m.get_one::<String>("out").unwrap());
    std::fs::create_dir_all(&out)?;

    require_file(&config.paths.logs, "logs")?;
    require_file(&config.paths.metrics, "metrics")?;
    require_file(&config.paths.aspect_map, "aspect map")?;
    require_file(&config.paths.labels, "labels")?;

    let logs = read_logs_jsonl(&config.paths.logs)?;
    let (metric_rows, metric_names) = read_metrics_csv(&config.paths.metrics)?;
    let labels = read_labels_csv(&config.paths.labels)?;
    let provenance = if config.paths.provenance.as_os_str().is_empty() {
        Vec::new()
    } else {
        require_file(&config.paths.provenance, "provenance")?;
        read_provenance_csv(&config.paths.provenance)?
    };
    let aspect_map = AspectMap::from_json(&std::fs::read_to_string(&config.paths.aspect_map)?)?;

    let telemetry = Telemetry {
        logs,
        metric_rows,
        metric_names,
        labels,
        provenance,
    };
    let prep = prepare_training(&telemetry, &aspect_map, &config)?;
    eprintln!(
        "prepared: {} labeled / {} unlabeled train chunks, {} test chunks, {} templates",
        prep.train_labeled.len(),
        prep.train_unlabeled.len(),
        prep.test.len(),
        prep.template_count()
    );
    let (detector, trace) = train_detector(&prep, &config)?;

    let log_path = out.join("train_log.jsonl");
    let mut log_file = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    for record in &trace {
        serde_json::to_writer(&mut log_file, record)?;
        log_file.write_all(b"\n")?;
    }
    log_file.flush()?;

    let ckpt_path = out.join("checkpoint.hkpt");
    let ckpt = Checkpoint::build(detector, prep.artifacts.clone(), config.clone());
    ckpt.save(&ckpt_path)?;
    println!(
        "checkpoint {} sha256 {}",
        ckpt_path.display(),
        file_hash(&ckpt_path)?
    );
    if let Some(last) = trace.last() {
        println!(
            "final losses: L_plus {:.6} L_minus {:.6} L_total {:.6}",
            last.loss.l_plus, last.loss.l_minus, last.loss.l_total
        );
    }
    Ok(())
}

fn cmd_detect(m: &ArgMatches) -> Result<()> {
    let ckpt_path = PathBuf::from(m.get_one::<String>("checkpoint").unwrap());
    let logs_path = PathBuf::from(m.get_one::<String>("logs").unwrap());
    let metrics_path = PathBuf::from(m.get_one::<String>("metrics").unwrap());
    let out = PathBuf::from(m.get_one::<String>("out").unwrap());

    let ckpt = Checkpoint::load(&ckpt_path).map_err(|e| match e {
        Error::Config(c) => Error::Config(c),
        other => Error::Data(format!("checkpoint: {other}")),
    })?;
    let logs = read_logs_jsonl(&logs_path)?;
    let (metric_rows, metric_names) = read_metrics_csv(&metrics_path)?;

    let mut artifacts = ckpt.artifacts.clone();
    if m.get_flag("remine") {
        // Re-mine the template tree from the incoming stream; embeddings
        // still come from the checkpoint (subwords cover new tokens).
        let mut store =
            crate::logs::TemplateStore::new(artifacts.store.sim_threshold, artifacts.store.max_depth);
        let mut sorted: Vec<&crate::data::RawLogRecord> = logs.iter().collect();
        sorted.sort_by_key(|r| r.ts);
        for rec in sorted {
            store.parse_event(&crate::logs::tokenize(&rec.msg));
        }
        store.freeze();
        if ckpt.manifest.variant == crate::model::Variant::WoS {
            eprintln!("warning: --remine changes event ids; one-hot checkpoints will misread them");
        }
        artifacts.store = store;
    }

    let prepared = prepare_inference(&logs, &metric_rows, &metric_names, &artifacts)?;
    let started = std::time::Instant::now();
    let predictions = detect(&ckpt.detector, &prepared, artifacts.store.len())?;
    let elapsed = started.elapsed();

    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["chunk_window_start", "label", "confidence"])?;
    for (_, window_start, pred) in &predictions {
        w.write_record([
            window_start.to_string(),
            pred.label.to_string(),
            format!("{:.6}", pred.confidence),
        ])?;
    }
    w.flush()?;
    let per_chunk_ms = elapsed.as_secs_f64() * 1000.0 / predictions.len().max(1) as f64;
    println!(
        "scored {} chunks in {:.1} ms ({:.3} ms/chunk) -> {}",
        predictions.len(),
        elapsed.as_secs_f64() * 1000.0,
        per_chunk_ms,
        out.display()
    );
    Ok(())
}

fn read_predictions_csv(path: &Path) -> Result<Vec<(u64, u8, f64)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let ws: u64 = rec[0]
            .parse()
            .map_err(|_| Error::Data(format!("bad window start {:?}", &rec[0])))?;
        let label: u8 = rec[1]
            .parse()
            .map_err(|_| Error::Data(format!("bad label {:?}", &rec[1])))?;
        let conf: f64 = rec[2]
            .parse()
            .map_err(|_| Error::Data(format!("bad confidence {:?}", &rec[2])))?;
        out.push((ws, label, conf));
    }
    Ok(out)
}

fn cmd_eval(m: &ArgMatches) -> Result<()> {
    let predictions = read_predictions_csv(Path::new(m.get_one::<String>("predictions").unwrap()))?;
    let labels = read_labels_csv(Path::new(m.get_one::<String>("labels").unwrap()))?;
    let out = PathBuf::from(m.get_one::<String>("out").unwrap());
    std::fs::create_dir_all(&out)?;

    // Window length: the smallest gap between consecutive window starts.
    let duration_ms = predictions
        .windows(2)
        .map(|w| w[1].0.saturating_sub(w[0].0))
        .filter(|&d| d > 0)
        .min()
        .unwrap_or(10_000);

    let rows = join_rows(&predictions, &labels, duration_ms)?;
    let report = report_from_rows(&rows);
    write_report_json(&out.join("report.json"), &report)?;

    let telemetry = match (m.get_one::<String>("logs"), m.get_one::<String>("metrics")) {
        (Some(lp), Some(mp)) => {
            let logs = read_logs_jsonl(Path::new(lp))?;
            let (rows_m, names) = read_metrics_csv(Path::new(mp))?;
            let frame = crate::data::regularize_metrics(&rows_m, &names, 1000)?;
            Some((logs, frame))
        }
        _ => None,
    };
    let html = render_html(
        &rows,
        &report,
        telemetry.as_ref().map(|(l, f)| (l.as_slice(), f)),
    );
    std::fs::write(out.join("report.html"), html)?;
    println!(
        "TP {} FP {} FN {} TN {} | Rec {:.4} Pre {:.4} F1 {:.4}",
        report.tp, report.fp, report.fn_, report.tn, report.rec, report.pre, report.f1
    );
    Ok(())
}
