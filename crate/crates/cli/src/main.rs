use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use turbine_core::artifact::write_atomic;
use turbine_core::config::{describe, ConfigError, RunConfig};
use turbine_core::dataio::{ingest_csv, read_dataset, split_dataset, synth_dataset, write_records_csv, SplitTag};
use turbine_core::neuralnet::{make_windows, ArchKind, NetModel};
use turbine_core::pipeline::{
    export_plot_data, inference_dataset, read_records, run_pipeline, train_architecture, write_split, Layout, PipelineError, Stage,
    StageOutcome, COMPARISON_STEM, SVR_REPORT_STEM,
};
use turbine_core::svr::{kfold_cv_split, SvrModel};

/// Wind-turbine power-curve regression and operating-fault classification.
#[derive(Debug, Parser)]
#[command(name = "turbine", version, after_help = AFTER_HELP)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

const AFTER_HELP: &str = "\
Configuration precedence, lowest first: built-in defaults, --config file,
the TURBINE_OUT_DIR environment variable, --out-dir, --set overrides.

Exit status: 0 success, 2 config error, 3 data error, 4 training error,
5 i/o error.";

#[derive(Debug, Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set svr.c=10` or `--set nn.archs=["ff"]`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read the met data (or generate it) into records.csv.
    Ingest,
    /// Split, label and normalize records.csv into dataset.csv.
    Label,
    /// Assign split tags to records.csv and write split.csv only.
    Split,
    /// Train the SVR power-curve model on the Train rows.
    TrainSvr {
        /// Also copy the model here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one neural fault classifier.
    TrainNn {
        #[arg(long, value_parser = parse_arch)]
        arch: ArchKind,
        /// Model path; defaults to nn_<arch>.model in the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train every configured architecture (resumable).
    Sweep {
        /// Concurrent trainings.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// k-fold cross-validation of the SVR on the Train rows.
    Cv {
        /// Number of folds; defaults to svr.cv_folds.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Predict with a saved model on a met-data CSV.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output CSV; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the comparison reports and plot data, then print them.
    Report,
    /// Export the empirical and SVR-predicted power curves.
    PlotData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic met-data CSV.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
        #[arg(long)]
        fault_fraction: Option<f64>,
    },
    /// Run pipeline stages in order; all of them by default.
    Run {
        /// Comma-separated subset of ingest,label,train_svr,sweep_nn,report.
        #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
        stages: Vec<Stage>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn parse_arch(s: &str) -> Result<ArchKind, String> {
    ArchKind::from_short(s).ok_or_else(|| format!("unknown architecture {s:?} (ff, rnn, cnn, sae, nar)"))
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::parse(s).ok_or_else(|| format!("unknown stage {s:?}"))
}

fn load_config(g: &Global, extra: &[String]) -> Result<RunConfig, PipelineError> {
    let mut sets = Vec::new();
    if let Some(dir) = &g.out_dir {
        sets.push(format!("out_dir = {}", toml_string(&dir.display().to_string())));
    }
    sets.extend(g.set.iter().cloned());
    sets.extend(extra.iter().cloned());
    Ok(RunConfig::load(g.config.as_deref(), &sets)?)
}

fn toml_string(s: &str) -> String {
    let escaped: String = s
        .chars()
        .flat_map(|c| if c == '"' || c == '\\' { vec!['\\', c] } else { vec![c] })
        .collect();
    format!("\"{escaped}\"")
}

fn log_stage(stage: Stage, outcome: StageOutcome) {
    let what = match outcome {
        StageOutcome::Ran => "done",
        StageOutcome::Skipped => "up to date",
    };
    eprintln!("{}: {what}", stage.name());
}

fn stages(cfg: &RunConfig, which: &[Stage]) -> Result<(), PipelineError> {
    run_pipeline(cfg, which, log_stage).map(|_| ())
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_atomic(path, text.as_bytes()).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn copy_file(from: &Path, to: &Path) -> Result<(), PipelineError> {
    let bytes = fs::read(from).map_err(|source| PipelineError::Io {
        path: from.display().to_string(),
        source,
    })?;
    write_atomic(to, &bytes).map_err(|source| PipelineError::Io {
        path: to.display().to_string(),
        source,
    })
}

fn jobs_override(jobs: Option<usize>) -> Vec<String> {
    jobs.map(|j| vec![format!("nn.jobs = {j}")]).unwrap_or_default()
}

fn print_file(path: &Path) -> Result<(), PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    print!("{text}");
    Ok(())
}

fn predict(cfg: &RunConfig, model: &Path, input: &Path) -> Result<String, PipelineError> {
    let text = fs::read_to_string(model).map_err(|e| PipelineError::Data(format!("{}: {e}", model.display())))?;
    let records = ingest_csv(input, &cfg.data.schema, cfg.data.mode)
        .map_err(PipelineError::reading)?
        .records;
    let mut out = String::new();
    if text.lines().next() == Some("format = turbine-svr-model") {
        let m = SvrModel::from_text(&text)?;
        let stats = m
            .stats
            .ok_or_else(|| PipelineError::Data("SVR model has no normalization statistics".into()))?;
        let ds = inference_dataset(&records, &stats, &cfg.turbine)?;
        let preds = m.predict_batch(&ds.features);
        out.push_str("row,wind_speed,power,predicted_power\n");
        for (i, (r, p)) in records.iter().zip(&preds).enumerate() {
            out.push_str(&format!("{i},{},{},{}\n", r.wind_speed, r.power, stats.denormalize_power(*p)));
        }
    } else {
        let m = NetModel::from_text(&text)?;
        let stats = m
            .stats
            .ok_or_else(|| PipelineError::Data("network model has no normalization statistics".into()))?;
        let spec = m.spec.unwrap_or(cfg.turbine);
        let ds = inference_dataset(&records, &stats, &spec)?;
        let windows = make_windows(&ds, m.window, m.kind)?;
        let (set, rows) = windows.get(SplitTag::Test);
        let preds = m.predict_set(set)?;
        out.push_str("row,wind_speed,fault_label,fault_probability\n");
        for (&row, p) in rows.iter().zip(&preds) {
            out.push_str(&format!("{row},{},{},{p}\n", records[row].wind_speed, ds.fault_label[row]));
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let g = &cli.global;
    match cli.command {
        Command::Ingest => stages(&load_config(g, &[])?, &[Stage::Ingest]),
        Command::Label => stages(&load_config(g, &[])?, &[Stage::Label]),
        Command::Split => {
            let cfg = load_config(g, &[])?;
            let layout = Layout::new(&cfg.out_dir);
            let n = read_records(&layout.records())?.len();
            let tags = split_dataset(n, cfg.split.fractions(), cfg.split.seed, cfg.split.mode).map_err(PipelineError::reading)?;
            write_split(&layout.split(), &tags)?;
            for tag in [SplitTag::Train, SplitTag::Val, SplitTag::Test] {
                println!("{}: {}", tag.as_str(), tags.iter().filter(|t| **t == tag).count());
            }
            Ok(())
        }
        Command::TrainSvr { out } => {
            let cfg = load_config(g, &[])?;
            stages(&cfg, &[Stage::TrainSvr])?;
            let layout = Layout::new(&cfg.out_dir);
            print_file(&layout.svr_eval())?;
            match out {
                Some(path) => copy_file(&layout.svr_model(), &path),
                None => Ok(()),
            }
        }
        Command::TrainNn { arch, out } => {
            let cfg = load_config(g, &[])?;
            let layout = Layout::new(&cfg.out_dir);
            let ds = read_dataset(&layout.dataset()).map_err(PipelineError::reading)?;
            let (model, eval) = train_architecture(&cfg, &ds, arch)?;
            let path = out.unwrap_or_else(|| layout.nn_model(arch));
            model.save(&path)?;
            println!(
                "{}: epochs {} (best {}), val MSE {:.6}, test MSE {:.6}, {:.2} s",
                arch.display_name(),
                eval.epochs,
                eval.best_epoch,
                eval.val_mse,
                eval.test_mse,
                eval.wall_time_seconds
            );
            Ok(())
        }
        Command::Sweep { jobs } => stages(&load_config(g, &jobs_override(jobs))?, &[Stage::SweepNn]),
        Command::Cv { folds } => {
            let cfg = load_config(g, &[])?;
            let layout = Layout::new(&cfg.out_dir);
            let ds = read_dataset(&layout.dataset()).map_err(PipelineError::reading)?;
            let k = folds.unwrap_or(if cfg.svr.cv_folds >= 2 { cfg.svr.cv_folds } else { 5 });
            let (_, ys) = ds.rows(&ds.indices(SplitTag::Train));
            let cv = kfold_cv_split(&ds, SplitTag::Train, k, &cfg.svr.hyper_for(&ys), cfg.svr.seed)?;
            for (i, m) in cv.fold_mses.iter().enumerate() {
                println!("fold {i}: MSE {m:.6} ({} rows)", cv.folds[i].len());
            }
            println!("mean MSE {:.6}, std {:.6}", cv.mean_mse, cv.std_mse);
            Ok(())
        }
        Command::Predict { model, input, out } => {
            let cfg = load_config(g, &[])?;
            let text = predict(&cfg, &model, &input)?;
            match out {
                Some(path) => write_file(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Report => {
            let cfg = load_config(g, &[])?;
            stages(&cfg, &[Stage::Report])?;
            print_file(&cfg.out_dir.join(format!("{COMPARISON_STEM}.txt")))?;
            println!();
            print_file(&cfg.out_dir.join(format!("{SVR_REPORT_STEM}.txt")))
        }
        Command::PlotData { out } => {
            let cfg = load_config(g, &[])?;
            let layout = Layout::new(&cfg.out_dir);
            let ds = read_dataset(&layout.dataset()).map_err(PipelineError::reading)?;
            let model = SvrModel::load(&layout.svr_model()).map_err(|e| PipelineError::Data(e.to_string()))?;
            let path = out.unwrap_or_else(|| layout.curve());
            let (actual, predicted) = export_plot_data(&cfg, &layout, &ds, &model, &path)?;
            println!("{}\n{}", actual.display(), predicted.display());
            Ok(())
        }
        Command::Synth {
            out,
            rows,
            seed,
            noise_sigma,
            fault_fraction,
        } => {
            let cfg = load_config(g, &[])?;
            let s = &cfg.data.synthetic;
            let recs = synth_dataset(
                &cfg.turbine,
                rows.unwrap_or(s.rows),
                noise_sigma.unwrap_or(s.noise_sigma),
                fault_fraction.unwrap_or(s.fault_fraction),
                seed.unwrap_or(s.seed),
            )
            .map_err(|e| PipelineError::Config(ConfigError::Invalid(e.to_string())))?;
            write_records_csv(&out, &recs).map_err(PipelineError::writing)
        }
        Command::Run { stages: which, jobs } => {
            let cfg = load_config(g, &jobs_override(jobs))?;
            for (k, v) in describe(&cfg) {
                eprintln!("{k}: {v}");
            }
            let which = if which.is_empty() { Stage::ALL.to_vec() } else { which };
            stages(&cfg, &which)?;
            if which.contains(&Stage::Report) {
                print_file(&cfg.out_dir.join(format!("{COMPARISON_STEM}.txt")))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
