//! `geoseer` command-line front end.
//!
//! Exit codes: 0 success, 1 domain errors (bad data, single-class sets,
//! unreadable models), 2 usage errors. Diagnostics go to stderr; results go
//! to `--out` files or stdout.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use geoseer_core::dataset::{fuse_features, stratified_split, Modality};
use geoseer_core::metrics::{confusion, evaluate, DEFAULT_THRESHOLD};
use geoseer_core::pipeline::run_ablation_detailed;
use geoseer_core::synth::{planted_dataset, SynthConfig};
use geoseer_core::{
    load_model, parse_manifest, render_report, save_model, smote_oversample, write_manifest, AblationSpec, BoostParams,
    Dataset, DisasterType, Error, ModalityMask, ReportFormat, SmoteParams, SmoteTarget, Trainer,
};

pub const THREADS_ENV: &str = "GEOSEER_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "geoseer",
    version,
    about = "Multimodal disaster prediction with boosted trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest against the schema and print a summary
    Validate { manifest: PathBuf },
    /// Stratified train/test split of a manifest
    Split {
        manifest: PathBuf,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Train a classifier on every sample of a manifest
    Train {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Modalities to fuse: a code such as `wti`, `wi`, `t`
        #[arg(long, default_value = "wti")]
        combo: String,
        /// Train on the data as given, without SMOTE balancing
        #[arg(long)]
        no_smote: bool,
        #[command(flatten)]
        common: ModelArgs,
    },
    /// Score a manifest with a saved model
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Defaults to the combination implied by the model's feature dimension
        #[arg(long)]
        combo: Option<String>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_parser = ["text", "json"], default_value = "text")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the modality ablation and render the report table
    Ablate {
        manifest: PathBuf,
        /// Expected disaster type of the manifest
        #[arg(long, value_parser = ["flood", "landslide"])]
        disaster: Option<String>,
        /// Report path; the extension (.txt, .csv, .json) picks the format
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_parser = ["text", "csv", "json"])]
        format: Option<String>,
        /// Comma-separated combination codes; defaults to all seven
        #[arg(long, value_delimiter = ',')]
        combos: Vec<String>,
        #[arg(long, default_value_t = 0.3)]
        test_fraction: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Also write one model file per combination into this directory
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[command(flatten)]
        common: ModelArgs,
    },
    /// Write a synthetic manifest with a planted label signal
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = ["flood", "landslide"], default_value = "flood")]
        disaster: String,
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long, default_value_t = 80)]
        positives: usize,
        /// Modalities carrying the signal, as a combination code
        #[arg(long, default_value = "i")]
        signal: String,
        #[arg(long, default_value_t = 1.5)]
        strength: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    rounds: usize,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 3)]
    max_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    reg_lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    min_child_weight: f64,
    #[arg(long, default_value_t = 5)]
    k_neighbors: usize,
    /// Record wall-clock timestamps in JSON provenance and model metadata
    #[arg(long)]
    timestamps: bool,
}

impl ModelArgs {
    fn boost(&self) -> BoostParams {
        BoostParams {
            rounds: self.rounds,
            learning_rate: self.learning_rate,
            max_depth: self.max_depth,
            reg_lambda: self.reg_lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
            seed: self.seed,
        }
    }

    fn smote(&self) -> SmoteParams {
        SmoteParams {
            k_neighbors: self.k_neighbors,
            seed: self.seed,
            target: SmoteTarget::Balance,
        }
    }

    fn now(&self) -> Option<u64> {
        self.timestamps.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Domain(e)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return e.exit_code();
        }
    };

    let outcome = match thread_cap() {
        Ok(Some(n)) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => {
                // the caller's writers need not be Send, so buffer inside the pool
                let (mut out, mut err) = (Vec::new(), Vec::new());
                let outcome = pool.install(|| execute(cli.command, &mut out, &mut err));
                let _ = stdout.write_all(&out);
                let _ = stderr.write_all(&err);
                outcome
            }
            Err(e) => Err(CliError::Usage(format!("cannot build thread pool: {e}"))),
        },
        Ok(None) => execute(cli.command, stdout, stderr),
        Err(e) => Err(e),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
        Err(CliError::Domain(e)) => {
            let _ = writeln!(stderr, "error: {e}");
            1
        }
    }
}

fn thread_cap() -> CliResult<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(CliError::Usage(format!(
                "{THREADS_ENV}={v:?} is not a non-negative integer"
            ))),
        },
    }
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("input file {} does not exist", path.display())))
    }
}

fn require_parent(path: &Path) -> CliResult {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(CliError::Usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn parse_mask(code: &str) -> CliResult<ModalityMask> {
    code.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str, stdout: &mut dyn Write) -> CliResult {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| {
            CliError::Domain(Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }),
        None => stdout.write_all(text.as_bytes()).map_err(|e| {
            CliError::Domain(Error::Io {
                path: "<stdout>".into(),
                source: e,
            })
        }),
    }
}

fn execute(command: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CliResult {
    match command {
        Command::Validate { manifest } => {
            require_file(&manifest)?;
            let ds = parse_manifest(&manifest)?;
            emit(None, &summarize(&ds), stdout)
        }
        Command::Split {
            manifest,
            train_out,
            test_out,
            test_fraction,
            seed,
        } => {
            require_file(&manifest)?;
            require_parent(&train_out)?;
            require_parent(&test_out)?;
            let ds = parse_manifest(&manifest)?;
            let (train, test) = stratified_split(&ds, test_fraction, seed)?;
            write_manifest(&train, &train_out)?;
            write_manifest(&test, &test_out)?;
            let (tr, te) = (train.class_counts(), test.class_counts());
            let _ = writeln!(
                stderr,
                "split seed {seed}: train {} positive / {} negative, test {} positive / {} negative",
                tr.positive, tr.negative, te.positive, te.negative
            );
            Ok(())
        }
        Command::Train {
            manifest,
            out,
            combo,
            no_smote,
            common,
        } => {
            require_file(&manifest)?;
            require_parent(&out)?;
            let mask = parse_mask(&combo)?;
            let ds = parse_manifest(&manifest)?;
            let ds = if no_smote {
                ds
            } else {
                smote_oversample(&ds, mask, &common.smote())?
            };
            let rows = fused_rows(&ds, mask)?;
            let model = Trainer::new(common.boost())
                .trained_at(common.now())
                .fit(&rows, &ds.labels())?;
            save_model(&model, &out)?;
            let counts = ds.class_counts();
            let _ = writeln!(
                stderr,
                "trained {} trees on {} rows ({} positive / {} negative), seed {}",
                model.trees.len(),
                rows.len(),
                counts.positive,
                counts.negative,
                common.seed
            );
            Ok(())
        }
        Command::Evaluate {
            manifest,
            model,
            combo,
            threshold,
            format,
            out,
        } => {
            require_file(&manifest)?;
            require_file(&model)?;
            if let Some(p) = &out {
                require_parent(p)?;
            }
            let model = load_model(&model)?;
            let mask = match combo {
                Some(code) => parse_mask(&code)?,
                None => mask_for_dim(model.feature_dim).ok_or_else(|| {
                    CliError::Usage(format!(
                        "feature_dim {} matches no modality combination; pass --combo",
                        model.feature_dim
                    ))
                })?,
            };
            let ds = parse_manifest(&manifest)?;
            let rows = fused_rows(&ds, mask)?;
            let scores = model.predict_proba_batch(&rows)?;
            let labels = ds.labels();
            let metrics = evaluate(&labels, &scores, threshold)?;
            let cm = confusion(&labels, &scores, threshold)?;
            let text = if format == "json" {
                let doc = serde_json::json!({
                    "combo": mask.code(),
                    "threshold": threshold,
                    "metrics": metrics,
                    "confusion": cm,
                });
                format!("{}\n", serde_json::to_string_pretty(&doc).expect("plain JSON values"))
            } else {
                format!(
                    "combo {} ({}), threshold {threshold}\nAUROC              {:.4}\nF1                 {:.4}\nBalanced accuracy  {:.2}%\ntp {} fp {} tn {} fn {}\n",
                    mask.code(),
                    mask.title(),
                    metrics.auroc,
                    metrics.f1,
                    metrics.balanced_accuracy * 100.0,
                    cm.tp,
                    cm.fp,
                    cm.tn,
                    cm.fn_
                )
            };
            emit(out.as_deref(), &text, stdout)
        }
        Command::Ablate {
            manifest,
            disaster,
            out,
            format,
            combos,
            test_fraction,
            threshold,
            models_dir,
            common,
        } => {
            require_file(&manifest)?;
            if let Some(p) = &out {
                require_parent(p)?;
            }
            if let Some(dir) = &models_dir {
                if !dir.is_dir() {
                    return Err(CliError::Usage(format!(
                        "models directory {} does not exist",
                        dir.display()
                    )));
                }
            }
            let format = report_format(format.as_deref(), out.as_deref())?;
            let mut spec = AblationSpec::with_seed(common.seed);
            spec.boost = common.boost();
            spec.smote = common.smote();
            spec.test_fraction = test_fraction;
            spec.threshold = threshold;
            if !combos.is_empty() {
                spec.combos = combos.iter().map(|c| parse_mask(c)).collect::<CliResult<_>>()?;
            }
            spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

            let ds = parse_manifest(&manifest)?;
            if let Some(expected) = disaster {
                let expected: DisasterType = expected.parse()?;
                if ds.disaster_type != expected {
                    return Err(CliError::Domain(Error::invalid(
                        "manifest",
                        format!("contains {} records, --disaster asked for {expected}", ds.disaster_type),
                    )));
                }
            }
            let run = run_ablation_detailed(&ds, &spec)?;
            let mut report = run.report;
            if let (Some(p), Some(t)) = (report.provenance.as_mut(), common.now()) {
                if format == ReportFormat::Json {
                    p.generated_at_unix = Some(t);
                }
            }
            if let Some(dir) = &models_dir {
                for r in &run.runs {
                    save_model(
                        &r.model,
                        dir.join(format!("{}-{}.json", ds.disaster_type, r.mask.code())),
                    )?;
                }
            }
            let _ = writeln!(
                stderr,
                "ablation seed {}: {} combinations",
                spec.seed,
                spec.combos.len()
            );
            emit(out.as_deref(), &render_report(&report, format)?, stdout)
        }
        Command::Synth {
            out,
            disaster,
            samples,
            positives,
            signal,
            strength,
            seed,
        } => {
            require_parent(&out)?;
            if positives > samples {
                return Err(CliError::Usage("--positives exceeds --samples".into()));
            }
            let signal: Vec<Modality> = parse_mask(&signal)?.modalities().collect();
            let ds = planted_dataset(&SynthConfig {
                disaster_type: disaster.parse()?,
                samples,
                positives,
                signal,
                strength,
                seed,
            });
            write_manifest(&ds, &out)?;
            Ok(())
        }
    }
}

fn report_format(flag: Option<&str>, out: Option<&Path>) -> CliResult<ReportFormat> {
    if let Some(f) = flag {
        return f.parse().map_err(|e: Error| CliError::Usage(e.to_string()));
    }
    match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        None => Ok(ReportFormat::Text),
        Some(ext) => ext.parse().map_err(|_| {
            CliError::Usage(format!(
                "cannot infer report format from extension .{ext}; pass --format"
            ))
        }),
    }
}

fn fused_rows(ds: &Dataset, mask: ModalityMask) -> CliResult<Vec<Vec<f64>>> {
    Ok(ds
        .samples
        .iter()
        .map(|s| fuse_features(s, mask).map(|f| f.values))
        .collect::<Result<_, _>>()?)
}

/// Every modality subset has a distinct fused dimension.
fn mask_for_dim(dim: usize) -> Option<ModalityMask> {
    geoseer_core::default_combos().into_iter().find(|m| m.dim() == dim)
}

fn summarize(ds: &Dataset) -> String {
    let counts = ds.class_counts();
    let present = |m: Modality| ds.samples.iter().filter(|s| s.modality(m).is_some()).count();
    let synthetic = ds.samples.iter().filter(|s| s.synthetic).count();
    format!(
        "ok: {} {} samples ({} positive / {} negative, {} synthetic); weather {}, text_emb {}, image_emb {}\n",
        ds.len(),
        ds.disaster_type,
        counts.positive,
        counts.negative,
        synthetic,
        present(Modality::Weather),
        present(Modality::Text),
        present(Modality::Image),
    )
}
