//! Command-line surface for the shapelet attribution pipeline.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{FileConfig, RunConfig};
use shapex_core::attribution::{
    equal_length_shapley, explain, shapley_result_to_json, ExplainConfig, SegmentConfig,
    ShapleyConfig,
};
use shapex_core::data::{load_dataset, save_dataset, Dataset, Format, SaliencyMap};
use shapex_core::error::{Error, Result};
use shapex_core::eval::{
    occlusion_curve_to_csv, occlusion_with_order, saliency_metrics, MaskOrder, OcclusionBaseline,
    OcclusionCurve,
};
use shapex_core::jsonfmt::fmt_f64;
use shapex_core::model::{train_reference, Classifier, CnnTrainConfig, ExternalModel, ReferenceCnn};
use shapex_core::plot::{occlusion_curves_svg, saliency_overlay_svg};
use shapex_core::sdd::{bank_from_json, bank_to_json, train, Pooling, ShapeletHyper, TrainConfig};
use shapex_core::synth::{generate, AmplitudeMode, SynthConfig, Variant};

#[derive(Parser)]
#[command(
    name = "shapex",
    about = "Shapelet-driven segment-level attribution for black-box time-series classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override (flags > config file > SHAPEX_SEED > default).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a motif-insertion benchmark with ground-truth saliency.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        variant: VariantArg,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Series length.
        #[arg(long)]
        t: usize,
        /// Training instances.
        #[arg(long)]
        train: usize,
        /// Test instances.
        #[arg(long)]
        test: usize,
        #[arg(long, default_value_t = 40)]
        motif_len: usize,
        /// Output directory for train.tsv and test.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the built-in reference classifier.
    TrainBlackbox {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: Option<PathBuf>,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        /// Probability of linear-structure augmentation during training.
        #[arg(long)]
        augment: Option<f64>,
        /// Input files carry no trailing saliency columns.
        #[arg(long)]
        no_saliency: bool,
    },
    /// Learn the shapelet bank.
    TrainShapelets {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        /// Output bank JSON path.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long)]
        patch_len: Option<usize>,
        #[arg(long)]
        num_heads: Option<usize>,
        #[arg(long)]
        d_model: Option<usize>,
        #[arg(long)]
        lambda_match: Option<f64>,
        #[arg(long)]
        lambda_div: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Pool activations by mean instead of max for the class head.
        #[arg(long)]
        mean_pool: bool,
        #[arg(long)]
        no_saliency: bool,
    },
    /// Explain instances: segment, attribute Shapley values, emit saliency.
    Explain {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Classifier: `builtin:model.json` or `external:"command"`.
        #[arg(long)]
        model: String,
        /// Output directory for saliency_NNNN.csv and shapley_NNNN.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        gap_tolerance: Option<usize>,
        /// Keep every super-threshold run, not only the peak's run.
        #[arg(long)]
        all_runs: bool,
        #[arg(long)]
        k_exact: Option<usize>,
        #[arg(long)]
        num_samples: Option<usize>,
        /// Attribution target class (default: the model's own prediction).
        #[arg(long)]
        target: Option<usize>,
        /// Equal-length ablation: segment into windows of this length
        /// instead of using a shapelet bank.
        #[arg(long)]
        equal_len: Option<usize>,
        /// Comma-separated instance indices (default: all).
        #[arg(long, value_delimiter = ',')]
        indices: Option<Vec<usize>>,
        #[arg(long)]
        no_saliency: bool,
    },
    /// Score saliency maps against ground truth (AUPRC/AUP/AUR).
    EvalSaliency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Directory of saliency_NNNN.csv files from `explain`.
        #[arg(long)]
        maps: PathBuf,
        /// Optional CSV output path (per-instance rows plus a mean row).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Occlusion protocol: mask by saliency rank and track classifier AUROC.
    EvalOcclusion {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5])]
        ratios: Vec<f64>,
        #[arg(long, value_enum, default_value_t = BaselineArg::Linear)]
        baseline: BaselineArg,
        #[arg(long, value_enum, default_value_t = OrderArg::Bottom)]
        order: OrderArg,
        /// Output CSV path (`ratio,auroc` rows).
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_saliency: bool,
    },
    /// Render SVG plots.
    Plot {
        #[command(subcommand)]
        what: PlotCommand,
    },
}

#[derive(Subcommand)]
enum PlotCommand {
    /// Series overlaid with its saliency heat strip.
    Saliency {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        /// Instance index.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_saliency: bool,
    },
    /// Occlusion curves (one per input CSV).
    Occlusion {
        #[command(flatten)]
        common: Common,
        /// Comma-separated curve CSV paths.
        #[arg(long, value_delimiter = ',')]
        curves: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Mcc,
    Mtc,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    E,
    H,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BaselineArg {
    Linear,
    Zero,
    Mean,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum OrderArg {
    Bottom,
    Top,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

/// Resolve the run configuration for a command: defaults, then SHAPEX_SEED,
/// then the config file, then explicit flags (applied by the caller).
fn resolve(common: &Common) -> Result<RunConfig> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = RunConfig::resolve(&file);
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_data(path: &Path, with_saliency: bool) -> Result<Dataset> {
    load_dataset(path, Format::from_path(path), with_saliency)
}

/// Build a classifier from `builtin:path` or `external:command`.
fn load_model(spec: &str) -> Result<Box<dyn Classifier>> {
    if let Some(path) = spec.strip_prefix("builtin:") {
        let text = std::fs::read_to_string(path)?;
        Ok(Box::new(ReferenceCnn::from_json(&text, path)?))
    } else if let Some(command) = spec.strip_prefix("external:") {
        Ok(Box::new(ExternalModel::spawn(command)?))
    } else {
        Err(Error::Config(format!(
            "model spec must start with `builtin:` or `external:`, got {:?}",
            spec
        )))
    }
}

/// Saliency maps from an `explain` output directory, ordered by file name.
fn load_maps(dir: &Path) -> Result<Vec<SaliencyMap>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map(|n| n.starts_with("saliency_") && n.ends_with(".csv"))
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no saliency_*.csv files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| SaliencyMap::from_csv(&std::fs::read_to_string(p)?))
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            common,
            variant,
            mode,
            t,
            train,
            test,
            motif_len,
            out,
        } => {
            let cfg = resolve(&common)?;
            cfg.echo("gen");
            let synth = SynthConfig {
                variant: match variant {
                    VariantArg::Mcc => Variant::Mcc,
                    VariantArg::Mtc => Variant::Mtc,
                },
                mode: match mode {
                    ModeArg::E => AmplitudeMode::E,
                    ModeArg::H => AmplitudeMode::H,
                },
                series_len: t,
                n_train: train,
                n_test: test,
                motif_len,
                seed: cfg.seed,
            };
            let (train_ds, test_ds) = generate(&synth)?;
            std::fs::create_dir_all(&out)?;
            save_dataset(&train_ds, &out.join("train.tsv"), Format::Tsv)?;
            save_dataset(&test_ds, &out.join("test.tsv"), Format::Tsv)?;
            println!(
                "wrote {} train and {} test instances to {}",
                train_ds.len(),
                test_ds.len(),
                out.display()
            );
            Ok(())
        }

        Command::TrainBlackbox {
            common,
            train: train_path,
            test,
            out,
            epochs,
            lr,
            batch,
            augment,
            no_saliency,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = batch {
                cfg.batch = v;
            }
            cfg.echo("train-blackbox");
            let train_ds = load_data(&train_path, !no_saliency)?;
            let test_ds = match &test {
                Some(p) => Some(load_data(p, !no_saliency)?),
                None => None,
            };
            let mut train_cfg = CnnTrainConfig {
                lr: cfg.lr,
                batch_size: cfg.batch,
                epochs: cfg.epochs,
                seed: cfg.seed,
                ..Default::default()
            };
            if let Some(p) = augment {
                train_cfg.linear_augment_prob = p;
            }
            let out_model = train_reference(&train_ds, test_ds.as_ref(), &train_cfg)?;
            std::fs::write(&out, out_model.model.to_json())?;
            print!(
                "train accuracy {}",
                fmt_f64(out_model.train_accuracy)
            );
            match out_model.test_accuracy {
                Some(acc) => println!(", test accuracy {}", fmt_f64(acc)),
                None => println!(),
            }
            Ok(())
        }

        Command::TrainShapelets {
            common,
            train: train_path,
            out,
            n,
            l,
            patch_len,
            num_heads,
            d_model,
            lambda_match,
            lambda_div,
            delta,
            lr,
            batch,
            epochs,
            mean_pool,
            no_saliency,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(v) = n {
                cfg.n = v;
            }
            if let Some(v) = l {
                cfg.l = v;
            }
            if let Some(v) = patch_len {
                cfg.patch_len = v;
            }
            if let Some(v) = num_heads {
                cfg.num_heads = v;
            }
            if let Some(v) = d_model {
                cfg.d_model = v;
            }
            if let Some(v) = lambda_match {
                cfg.lambda_match = v;
            }
            if let Some(v) = lambda_div {
                cfg.lambda_div = v;
            }
            if let Some(v) = delta {
                cfg.delta = v;
            }
            if let Some(v) = lr {
                cfg.lr = v;
            }
            if let Some(v) = batch {
                cfg.batch = v;
            }
            if let Some(v) = epochs {
                cfg.epochs = v;
            }
            cfg.echo("train-shapelets");
            let train_ds = load_data(&train_path, !no_saliency)?;
            let mut hyper = ShapeletHyper::defaults(train_ds.series_len(), train_ds.num_classes);
            hyper.n = cfg.n;
            if cfg.l > 0 {
                hyper.l = cfg.l;
                hyper.patch_len = if cfg.patch_len > 0 {
                    cfg.patch_len
                } else {
                    (cfg.l / 4).max(1)
                };
            } else if cfg.patch_len > 0 {
                hyper.patch_len = cfg.patch_len;
            }
            hyper.num_heads = cfg.num_heads;
            hyper.d_model = cfg.d_model;
            if mean_pool {
                hyper.pooling = Pooling::Mean;
            }
            let train_cfg = TrainConfig {
                hyper,
                lambda_match: cfg.lambda_match,
                lambda_div: cfg.lambda_div,
                delta: cfg.delta,
                lr: cfg.lr,
                batch_size: cfg.batch,
                epochs: cfg.epochs,
                seed: cfg.seed,
            };
            let result = train(&train_ds, &train_cfg)?;
            std::fs::write(&out, bank_to_json(&result.bank))?;
            if let (Some(first), Some(last)) =
                (result.loss_history.first(), result.loss_history.last())
            {
                println!(
                    "loss per instance: first epoch {}, last epoch {}",
                    fmt_f64(*first),
                    fmt_f64(*last)
                );
            }
            Ok(())
        }

        Command::Explain {
            common,
            data,
            bank,
            model,
            out,
            omega,
            gap_tolerance,
            all_runs,
            k_exact,
            num_samples,
            target,
            equal_len,
            indices,
            no_saliency,
        } => {
            let mut cfg = resolve(&common)?;
            if omega.is_some() {
                cfg.omega = omega;
            }
            if let Some(v) = gap_tolerance {
                cfg.gap_tolerance = v;
            }
            if all_runs {
                cfg.all_runs = true;
            }
            if let Some(v) = k_exact {
                cfg.k_exact = v;
            }
            if let Some(v) = num_samples {
                cfg.num_samples = v;
            }
            cfg.echo("explain");
            let ds = load_data(&data, !no_saliency)?;
            let f = load_model(&model)?;
            std::fs::create_dir_all(&out)?;
            let shapley_cfg = ShapleyConfig {
                k_exact: cfg.k_exact,
                num_samples: cfg.num_samples,
                seed: cfg.seed,
            };
            let indices: Vec<usize> = match indices {
                Some(list) => list,
                None => (0..ds.len()).collect(),
            };

            if let Some(seg_len) = equal_len {
                for &idx in &indices {
                    let inst = ds
                        .instances
                        .get(idx)
                        .ok_or_else(|| Error::Config(format!("instance {} out of range", idx)))?;
                    let probs = f.predict_proba(&inst.values)?;
                    let target_class =
                        target.unwrap_or_else(|| shapex_core::model::argmax_class(&probs));
                    let map = equal_length_shapley(
                        &inst.values,
                        f.as_ref(),
                        target_class,
                        seg_len,
                        &shapley_cfg,
                    )?;
                    std::fs::write(out.join(format!("saliency_{idx:04}.csv")), map.to_csv())?;
                }
                println!("explained {} instances (equal-length {})", indices.len(), seg_len);
                return Ok(());
            }

            let bank_path = bank.ok_or_else(|| {
                Error::Config("--bank is required unless --equal-len is given".into())
            })?;
            let bank_text = std::fs::read_to_string(&bank_path)?;
            let bank = bank_from_json(&bank_text, &bank_path.display().to_string())?;
            let mut segment_cfg = SegmentConfig::for_shapelet_count(bank.hyper.n);
            if let Some(w) = cfg.omega {
                segment_cfg.omega = w;
            }
            segment_cfg.gap_tolerance = cfg.gap_tolerance;
            segment_cfg.all_runs = cfg.all_runs;
            let explain_cfg = ExplainConfig {
                segment: Some(segment_cfg),
                shapley: shapley_cfg,
                target,
            };
            let mut empty = 0usize;
            for &idx in &indices {
                let inst = ds
                    .instances
                    .get(idx)
                    .ok_or_else(|| Error::Config(format!("instance {} out of range", idx)))?;
                let explanation = explain(&inst.values, &bank, f.as_ref(), &explain_cfg)?;
                std::fs::write(
                    out.join(format!("saliency_{idx:04}.csv")),
                    explanation.saliency.to_csv(),
                )?;
                if let Some(res) = &explanation.shapley {
                    std::fs::write(
                        out.join(format!("shapley_{idx:04}.json")),
                        shapley_result_to_json(res, &explanation.segments, explanation.target),
                    )?;
                }
                if explanation.empty_segments {
                    empty += 1;
                    eprintln!("warning: instance {idx} produced no segments; saliency is all zeros");
                }
            }
            println!(
                "explained {} instances to {} ({} with empty segmentation)",
                indices.len(),
                out.display(),
                empty
            );
            Ok(())
        }

        Command::EvalSaliency {
            common,
            data,
            maps,
            out,
        } => {
            let cfg = resolve(&common)?;
            cfg.echo("eval-saliency");
            let ds = load_data(&data, true)?;
            let maps = load_maps(&maps)?;
            if maps.len() != ds.len() {
                return Err(Error::Shape(format!(
                    "{} maps for {} instances",
                    maps.len(),
                    ds.len()
                )));
            }
            let mut rows = String::from("instance,auprc,aup,aur\n");
            let (mut sp, mut su, mut sr) = (0.0, 0.0, 0.0);
            for (i, (inst, map)) in ds.instances.iter().zip(&maps).enumerate() {
                let gt = inst
                    .gt_saliency
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("instance {i} has no ground truth")))?;
                let m = saliency_metrics(map, gt)?;
                rows.push_str(&format!(
                    "{},{},{},{}\n",
                    i,
                    fmt_f64(m.auprc),
                    fmt_f64(m.aup),
                    fmt_f64(m.aur)
                ));
                sp += m.auprc;
                su += m.aup;
                sr += m.aur;
            }
            let n = maps.len() as f64;
            let mean_row = format!(
                "mean,{},{},{}\n",
                fmt_f64(sp / n),
                fmt_f64(su / n),
                fmt_f64(sr / n)
            );
            rows.push_str(&mean_row);
            println!("auprc,aup,aur");
            println!(
                "{},{},{}",
                fmt_f64(sp / n),
                fmt_f64(su / n),
                fmt_f64(sr / n)
            );
            if let Some(path) = out {
                std::fs::write(path, rows)?;
            }
            Ok(())
        }

        Command::EvalOcclusion {
            common,
            data,
            maps,
            model,
            ratios,
            baseline,
            order,
            out,
            no_saliency,
        } => {
            let cfg = resolve(&common)?;
            cfg.echo("eval-occlusion");
            let ds = load_data(&data, !no_saliency)?;
            let maps = load_maps(&maps)?;
            let f = load_model(&model)?;
            let curve: OcclusionCurve = occlusion_with_order(
                &ds,
                &maps,
                f.as_ref(),
                &ratios,
                match baseline {
                    BaselineArg::Linear => OcclusionBaseline::Linear,
                    BaselineArg::Zero => OcclusionBaseline::Zero,
                    BaselineArg::Mean => OcclusionBaseline::Mean,
                },
                match order {
                    OrderArg::Bottom => MaskOrder::BottomFirst,
                    OrderArg::Top => MaskOrder::TopFirst,
                },
            )?;
            let csv = occlusion_curve_to_csv(&curve);
            print!("{}", csv);
            std::fs::write(out, csv)?;
            Ok(())
        }

        Command::Plot { what } => match what {
            PlotCommand::Saliency {
                common,
                data,
                maps,
                index,
                out,
                no_saliency,
            } => {
                let cfg = resolve(&common)?;
                cfg.echo("plot-saliency");
                let ds = load_data(&data, !no_saliency)?;
                let maps = load_maps(&maps)?;
                let inst = ds
                    .instances
                    .get(index)
                    .ok_or_else(|| Error::Config(format!("instance {} out of range", index)))?;
                let map = maps
                    .get(index)
                    .ok_or_else(|| Error::Config(format!("no map for instance {}", index)))?;
                let gt: Option<Vec<bool>> = inst.gt_saliency.clone();
                let svg = saliency_overlay_svg(
                    &inst.values,
                    map,
                    gt.as_deref(),
                    &format!("instance {index}"),
                );
                std::fs::write(out, svg)?;
                Ok(())
            }
            PlotCommand::Occlusion {
                common,
                curves,
                out,
            } => {
                let cfg = resolve(&common)?;
                cfg.echo("plot-occlusion");
                if curves.is_empty() {
                    return Err(Error::Config("need at least one curve CSV".into()));
                }
                let mut parsed = Vec::new();
                for path in &curves {
                    let text = std::fs::read_to_string(path)?;
                    let mut ratios = Vec::new();
                    let mut aurocs = Vec::new();
                    for (i, line) in text.lines().enumerate() {
                        if i == 0 || line.trim().is_empty() {
                            continue;
                        }
                        let (r, a) = line.split_once(',').ok_or_else(|| Error::Format {
                            row: i + 1,
                            msg: "expected `ratio,auroc`".into(),
                        })?;
                        ratios.push(r.trim().parse().map_err(|_| Error::Parse {
                            row: i + 1,
                            msg: format!("bad ratio {:?}", r),
                        })?);
                        aurocs.push(a.trim().parse().map_err(|_| Error::Parse {
                            row: i + 1,
                            msg: format!("bad auroc {:?}", a),
                        })?);
                    }
                    let label = path
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("curve")
                        .to_string();
                    parsed.push((
                        label,
                        OcclusionCurve {
                            ratios,
                            auroc: aurocs,
                        },
                    ));
                }
                let svg = occlusion_curves_svg(&parsed, "occlusion");
                std::fs::write(out, svg)?;
                Ok(())
            }
        },
    }
}
