//! `hnam` subcommands.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use hnam_core::data::records::date_at;
use hnam_core::data::{
    ingest_csv, select_series, split_train_val, write_long_format, FeaturePlan, SampleStore,
    SchemaConfig, SeriesKey,
};
use hnam_core::eval::{
    rolling_evaluate, test_periods, HnamForecaster, HoltWintersBaseline, SeasonalNaive, TestPeriod,
};
use hnam_core::model::{load_model, save_model, HnamModel};
use hnam_core::synthetic::{generate, Composition, SyntheticSpec};
use hnam_core::train::{finetune, init_model, train, TrainLog};
use serde_json::json;

use crate::adjust::AdjustmentLog;
use crate::config::RunConfig;
use crate::engine::ForecastEngine;
use crate::error::{ErrorClass, Result, ServiceError};
use crate::plot::write_plot_data;
use crate::scenario::ForecastSource;
use crate::server::{serve, AppState};

#[derive(Debug, Parser)]
#[command(name = "hnam", version, about = "Decomposed demand forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with its ground-truth effects.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// TOML generator spec; defaults apply to absent fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        series: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        multiplicative: bool,
    },
    /// Ingest a long-format CSV, select series and build a sample store.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        /// TOML column mapping.
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model ahead of the first test period.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training a snapshot ahead of test period `period`.
    Finetune {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        period: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rolling-origin evaluation against the statistical baselines.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Decomposed forecast for one series and origin, with plot data.
    Forecast {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// `product@store`.
        #[arg(long)]
        series: String,
        /// First forecast day, YYYY-MM-DD.
        #[arg(long)]
        origin: NaiveDate,
        #[arg(long)]
        out_dir: PathBuf,
        /// Apply adjustments recorded in this log.
        #[arg(long)]
        adjustment_log: Option<PathBuf>,
    },
    /// Serve the JSON API.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long, default_value = "adjustments.jsonl")]
        adjustment_log: PathBuf,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| ServiceError::new(ErrorClass::Io, format!("{}: {e}", path.display())))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path)
        .map_err(|e| ServiceError::new(ErrorClass::Io, format!("{}: {e}", path.display())))
}

fn periods(cfg: &RunConfig, n_days: usize) -> Result<Vec<TestPeriod>> {
    Ok(test_periods(
        n_days,
        cfg.model.horizon,
        cfg.evaluation.periods,
        cfg.evaluation.period_length,
    )?)
}

fn load_store(cfg: &RunConfig, path: &Path) -> Result<SampleStore> {
    let store = SampleStore::load(path)?;
    let plan = store.plan();
    if plan.history != cfg.model.history || plan.horizon != cfg.model.horizon {
        return Err(ServiceError::new(
            ErrorClass::Config,
            format!(
                "store was built for windows {}+{}, configuration asks for {}+{}",
                plan.history, plan.horizon, cfg.model.history, cfg.model.horizon
            ),
        ));
    }
    Ok(store)
}

fn save(path: &Path, model: &HnamModel, test_start: usize, log: &TrainLog) -> Result<()> {
    save_model(
        path,
        model,
        json!({ "test_start": test_start, "train_log": log }),
    )?;
    Ok(())
}

fn load(path: &Path) -> Result<(HnamModel, Option<usize>)> {
    let (model, extra) = load_model(path)?;
    let test_start = extra
        .get("test_start")
        .and_then(|v| v.as_u64())
        .map(|v| v as usize);
    Ok((model, test_start))
}

fn report_training(log: &TrainLog) {
    println!(
        "best epoch {} of {}, validation loss {:.6} ({:?})",
        log.best_epoch,
        log.epochs.len() - 1,
        log.best_val_loss,
        log.stop_reason
    );
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out_dir,
            spec,
            seed,
            series,
            days,
            multiplicative,
        } => {
            let mut s = match spec {
                Some(p) => {
                    let text = fs::read_to_string(&p).map_err(|e| {
                        ServiceError::new(ErrorClass::Config, format!("{}: {e}", p.display()))
                    })?;
                    toml::from_str(&text)
                        .map_err(|e| ServiceError::new(ErrorClass::Config, e.to_string()))?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = series {
                s.n_series = v;
            }
            if let Some(v) = days {
                s.n_days = v;
            }
            if multiplicative {
                s.composition = Composition::Multiplicative;
            }
            let data = generate(&s)?;
            make_dir(&out_dir)?;
            write_long_format(create(&out_dir.join("sales.csv"))?, &data.dataset)?;
            data.truth.write_csv(create(&out_dir.join("truth.csv"))?)?;
            fs::write(
                out_dir.join("schema.toml"),
                SchemaConfig::standard(data.dataset.fields).to_toml(),
            )?;
            fs::write(
                out_dir.join("spec.toml"),
                toml::to_string(&s)
                    .map_err(|e| ServiceError::new(ErrorClass::Internal, e.to_string()))?,
            )?;
            println!(
                "{} series x {} days written to {}",
                s.n_series,
                s.n_days,
                out_dir.display()
            );
        }
        Command::Ingest {
            config,
            schema,
            input,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let schema = SchemaConfig::load(&schema)
                .map_err(|e| ServiceError::new(ErrorClass::Config, e.to_string()))?;
            let dataset = ingest_csv(&input, &schema)?;
            let test_start = periods(&cfg, dataset.n_days)?[0].start();
            let keys: Vec<SeriesKey> = if cfg.selection.enabled {
                let report =
                    select_series(&dataset, &cfg.selection.criteria, dataset.date(test_start))?;
                let path = out.with_extension("selection.json");
                serde_json::to_writer_pretty(create(&path)?, &report)
                    .map_err(|e| ServiceError::new(ErrorClass::Io, e.to_string()))?;
                println!(
                    "selected {} of {} series ({})",
                    report.selected.len(),
                    dataset.series.len(),
                    path.display()
                );
                report.selected
            } else {
                dataset.series.keys().cloned().collect()
            };
            if keys.is_empty() {
                return Err(ServiceError::new(
                    ErrorClass::Data,
                    "no series passed selection",
                ));
            }
            let plan = FeaturePlan::fit(&dataset, test_start, cfg.model.history, cfg.model.horizon);
            let store = SampleStore::build(&dataset, plan, &keys)?;
            store.save(&out)?;
            println!(
                "store with {} series written to {}",
                keys.len(),
                out.display()
            );
        }
        Command::Train { config, store, out } => {
            let cfg = RunConfig::load(&config)?;
            let store = load_store(&cfg, &store)?;
            let test_start = periods(&cfg, store.n_days())?[0].start();
            let (tr, va) =
                split_train_val(store.series(), store.covariates(), store.plan(), test_start)?;
            let model = init_model(
                cfg.model.config(store.covariates().clone()),
                &tr,
                cfg.model.seed,
            )?;
            let (model, log) = train(&model, &tr, &va, &cfg.train)?;
            report_training(&log);
            save(&out, &model, test_start, &log)?;
        }
        Command::Finetune {
            config,
            store,
            model,
            period,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let store = load_store(&cfg, &store)?;
            let all = periods(&cfg, store.n_days())?;
            let test_start = all
                .get(period)
                .ok_or_else(|| {
                    ServiceError::new(
                        ErrorClass::Config,
                        format!("period {period} of {}", all.len()),
                    )
                })?
                .start();
            let (model, _) = load(&model)?;
            let (tr, va) =
                split_train_val(store.series(), store.covariates(), store.plan(), test_start)?;
            let (model, log) = finetune(&model, store.covariates(), &tr, &va, &cfg.train)?;
            report_training(&log);
            save(&out, &model, test_start, &log)?;
        }
        Command::Evaluate {
            config,
            store,
            model,
            out_dir,
        } => {
            let cfg = RunConfig::load(&config)?;
            let store = load_store(&cfg, &store)?;
            let all = periods(&cfg, store.n_days())?;
            let (model, fitted_for) = load(&model)?;
            let horizon = cfg.model.horizon;
            let mut hnam = HnamForecaster::new(
                model,
                fitted_for,
                cfg.evaluation.finetune.then(|| cfg.train.clone()),
            );
            let mut naive = SeasonalNaive { horizon };
            let mut hw = HoltWintersBaseline { horizon };
            let report =
                rolling_evaluate(&store, &all, &mut [&mut hnam, &mut naive, &mut hw], true)?;
            make_dir(&out_dir)?;
            report.write_csv(create(&out_dir.join("metrics.csv"))?)?;
            report.write_decompositions(create(&out_dir.join("decompositions.jsonl"))?)?;
            let summary = report.summary();
            fs::write(out_dir.join("summary.txt"), &summary)?;
            serde_json::to_writer_pretty(
                create(&out_dir.join("report.json"))?,
                &json!({
                    "periods": all.iter().map(|p| json!({
                        "index": p.index,
                        "first_origin": date_at(store.plan().start, p.origins.start),
                        "last_origin": date_at(store.plan().start, p.origins.end - 1),
                    })).collect::<Vec<_>>(),
                    "aggregates": report.aggregates,
                    "ranks": report.ranks,
                    "ties": report.ties,
                    "excluded": report.excluded,
                }),
            )
            .map_err(|e| ServiceError::new(ErrorClass::Io, e.to_string()))?;
            print!("{summary}");
        }
        Command::Forecast {
            store,
            model,
            series,
            origin,
            out_dir,
            adjustment_log,
        } => {
            let engine = ForecastEngine::open(&model, &store)?;
            let series: SeriesKey = series.parse().map_err(|e: hnam_core::CoreError| {
                ServiceError::new(ErrorClass::InvalidRequest, e.to_string())
            })?;
            let log = match adjustment_log {
                Some(p) => AdjustmentLog::open(p)?,
                None => AdjustmentLog::in_memory(),
            };
            let source = ForecastSource {
                series,
                origin,
                overrides: Vec::new(),
            };
            let response = engine.respond(&source, &log)?;
            make_dir(&out_dir)?;
            serde_json::to_writer_pretty(create(&out_dir.join("forecast.json"))?, &response)
                .map_err(|e| ServiceError::new(ErrorClass::Io, e.to_string()))?;
            write_plot_data(create(&out_dir.join("plot.csv"))?, &response)?;
            println!("{}", response.id);
        }
        Command::Serve {
            store,
            model,
            bind,
            adjustment_log,
        } => {
            let engine = ForecastEngine::open(&model, &store)?;
            let state = Arc::new(AppState::new(engine, AdjustmentLog::open(adjustment_log)?));
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(serve(state, &bind))?;
        }
    }
    Ok(())
}
