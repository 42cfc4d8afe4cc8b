//! Modality ablation: one stratified split, then per modality combination
//! SMOTE on the training side, a boosted-tree fit and evaluation on the
//! untouched test side. Results render as a metric-by-combination table.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boosting::{BoostParams, Model, Trainer};
use crate::dataset::{fuse_features, stratified_split, ClassCounts, Dataset, DisasterType, ModalityMask};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricSet, DEFAULT_THRESHOLD};
use crate::resample::{smote_oversample, SmoteParams};

/// The seven non-empty modality subsets in report column order.
pub fn default_combos() -> Vec<ModalityMask> {
    ["wti", "wt", "wi", "ti", "w", "t", "i"]
        .iter()
        .map(|code| code.parse().expect("static combo code"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSpec {
    pub combos: Vec<ModalityMask>,
    pub boost: BoostParams,
    pub smote: SmoteParams,
    pub test_fraction: f64,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            combos: default_combos(),
            boost: BoostParams::default(),
            smote: SmoteParams::default(),
            test_fraction: 0.3,
            seed: 42,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl AblationSpec {
    /// Default settings with every seed set to `seed`.
    pub fn with_seed(seed: u64) -> Self {
        let mut spec = AblationSpec {
            seed,
            ..AblationSpec::default()
        };
        spec.boost.seed = seed;
        spec.smote.seed = seed;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.combos.is_empty() {
            return Err(Error::invalid("ablation spec", "no modality combinations"));
        }
        let mut seen = HashSet::new();
        for combo in &self.combos {
            if !seen.insert(*combo) {
                return Err(Error::invalid(
                    "ablation spec",
                    format!("duplicate combination {combo}"),
                ));
            }
        }
        self.boost.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComboColumn {
    /// Compact mask code, e.g. `wti`.
    pub combo: String,
    pub title: String,
    pub auroc: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub train_after_smote: ClassCounts,
    pub synthetic: usize,
}

impl ComboColumn {
    pub fn metrics(&self) -> MetricSet {
        MetricSet {
            auroc: self.auroc,
            f1: self.f1,
            balanced_accuracy: self.balanced_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub test_fraction: f64,
    pub threshold: f64,
    pub k_neighbors: usize,
    pub boost: BoostParams,
    pub train: ClassCounts,
    pub test: ClassCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at_unix: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportTable {
    pub disaster_type: DisasterType,
    pub columns: Vec<ComboColumn>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl ReportTable {
    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Report("table has no columns".into()));
        }
        for c in &self.columns {
            let mask: ModalityMask = c.combo.parse()?;
            if mask.title() != c.title {
                return Err(Error::Report(format!(
                    "title {:?} does not match combo {}",
                    c.title, c.combo
                )));
            }
            for (name, v) in [
                ("auroc", c.auroc),
                ("f1", c.f1),
                ("balanced_accuracy", c.balanced_accuracy),
            ] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Report(format!(
                        "{name} = {v} outside [0, 1] in column {}",
                        c.combo
                    )));
                }
            }
        }
        Ok(())
    }

    /// Parses and validates a JSON report.
    pub fn from_json(text: &str) -> Result<Self> {
        let table: ReportTable = serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }
}

/// Everything produced by one combination's run.
#[derive(Debug, Clone)]
pub struct ComboRun {
    pub mask: ModalityMask,
    pub model: Model,
    pub metrics: MetricSet,
    pub train_after_smote: ClassCounts,
    pub synthetic: usize,
    /// sample_ids of the evaluated test rows, in evaluation order.
    pub evaluated_ids: Vec<String>,
    /// How many evaluated rows were flagged synthetic (always 0).
    pub evaluated_synthetic: usize,
}

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub report: ReportTable,
    pub runs: Vec<ComboRun>,
}

pub fn run_ablation(ds: &Dataset, spec: &AblationSpec) -> Result<ReportTable> {
    run_ablation_detailed(ds, spec).map(|r| r.report)
}

/// Runs every combination, concurrently, on one shared split.
pub fn run_ablation_detailed(ds: &Dataset, spec: &AblationSpec) -> Result<AblationRun> {
    spec.validate()?;
    if let Some(s) = ds.samples.iter().find(|s| s.synthetic) {
        return Err(Error::invalid(
            "ablation input",
            format!(
                "sample {:?} is synthetic; oversampling happens inside the run",
                s.sample_id
            ),
        ));
    }
    let (train, test) = stratified_split(ds, spec.test_fraction, spec.seed)?;

    let runs: Vec<ComboRun> = spec
        .combos
        .par_iter()
        .map(|&mask| run_combo(&train, &test, mask, spec))
        .collect::<Result<_>>()?;

    let columns = runs
        .iter()
        .map(|r| ComboColumn {
            combo: r.mask.code(),
            title: r.mask.title(),
            auroc: r.metrics.auroc,
            f1: r.metrics.f1,
            balanced_accuracy: r.metrics.balanced_accuracy,
            train_after_smote: r.train_after_smote,
            synthetic: r.synthetic,
        })
        .collect();
    let report = ReportTable {
        disaster_type: ds.disaster_type,
        columns,
        provenance: Some(Provenance {
            seed: spec.seed,
            test_fraction: spec.test_fraction,
            threshold: spec.threshold,
            k_neighbors: spec.smote.k_neighbors,
            boost: spec.boost,
            train: train.class_counts(),
            test: test.class_counts(),
            generated_at_unix: None,
        }),
    };
    Ok(AblationRun { report, runs })
}

fn run_combo(train: &Dataset, test: &Dataset, mask: ModalityMask, spec: &AblationSpec) -> Result<ComboRun> {
    let balanced = smote_oversample(train, mask, &spec.smote)?;
    let synthetic = balanced.samples.iter().filter(|s| s.synthetic).count();
    let rows: Vec<Vec<f64>> = balanced
        .samples
        .iter()
        .map(|s| fuse_features(s, mask).map(|f| f.values))
        .collect::<Result<_>>()?;
    let model = Trainer::new(spec.boost).fit(&rows, &balanced.labels())?;

    let test_rows: Vec<Vec<f64>> = test
        .samples
        .iter()
        .map(|s| fuse_features(s, mask).map(|f| f.values))
        .collect::<Result<_>>()?;
    let scores = model.predict_proba_batch(&test_rows)?;
    let metrics = evaluate(&test.labels(), &scores, spec.threshold)?;
    Ok(ComboRun {
        mask,
        model,
        metrics,
        train_after_smote: balanced.class_counts(),
        synthetic,
        evaluated_ids: test.samples.iter().map(|s| s.sample_id.clone()).collect(),
        evaluated_synthetic: test.samples.iter().filter(|s| s.synthetic).count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" | "txt" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(
                "report format",
                format!("{other:?} is not text|csv|json"),
            )),
        }
    }
}

pub fn render_report(rt: &ReportTable, format: ReportFormat) -> Result<String> {
    rt.validate()?;
    match format {
        ReportFormat::Text => Ok(render_text(rt)),
        ReportFormat::Csv => render_csv(rt),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(rt).map_err(|e| Error::Report(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

const METRIC_ROWS: [&str; 3] = ["AUROC", "F1", "Balanced accuracy"];

fn render_text(rt: &ReportTable) -> String {
    let cells: Vec<[String; 3]> = rt
        .columns
        .iter()
        .map(|c| {
            [
                format!("{:.4}", c.auroc),
                format!("{:.4}", c.f1),
                format!("{:.2}%", c.balanced_accuracy * 100.0),
            ]
        })
        .collect();
    let label_width = METRIC_ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = rt
        .columns
        .iter()
        .zip(&cells)
        .map(|(c, vals)| vals.iter().map(String::len).chain([c.title.len()]).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "Results for {} prediction.", rt.disaster_type);
    let mut header = format!("{:<label_width$}", "Metric");
    for (c, w) in rt.columns.iter().zip(&widths) {
        let _ = write!(header, "  {:<w$}", c.title);
    }
    let rule = "-".repeat(header.trim_end().len());
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{}", header.trim_end());
    let _ = writeln!(out, "{rule}");
    for (row, name) in METRIC_ROWS.iter().enumerate() {
        let mut line = format!("{name:<label_width$}");
        for (vals, w) in cells.iter().zip(&widths) {
            let _ = write!(line, "  {:<w$}", vals[row]);
        }
        let _ = writeln!(out, "{}", line.trim_end());
    }
    let _ = writeln!(out, "{rule}");
    if let Some(p) = &rt.provenance {
        let _ = writeln!(
            out,
            "seed {}, test fraction {}, threshold {}, SMOTE k {}",
            p.seed, p.test_fraction, p.threshold, p.k_neighbors
        );
        let _ = writeln!(
            out,
            "boosting: {} rounds, learning rate {}, max depth {}, lambda {}, gamma {}, min child weight {}",
            p.boost.rounds,
            p.boost.learning_rate,
            p.boost.max_depth,
            p.boost.reg_lambda,
            p.boost.gamma,
            p.boost.min_child_weight
        );
        let _ = writeln!(
            out,
            "train: {} positive / {} negative; test: {} positive / {} negative",
            p.train.positive, p.train.negative, p.test.positive, p.test.negative
        );
        for c in &rt.columns {
            let _ = writeln!(
                out,
                "  {:<4} after SMOTE: {} positive / {} negative ({} synthetic)",
                c.combo, c.train_after_smote.positive, c.train_after_smote.negative, c.synthetic
            );
        }
        if let Some(t) = p.generated_at_unix {
            let _ = writeln!(out, "generated at unix time {t}");
        }
    }
    out
}

fn render_csv(rt: &ReportTable) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "# disaster_type={}", rt.disaster_type);
    if let Some(p) = &rt.provenance {
        let _ = writeln!(out, "# seed={}", p.seed);
        let _ = writeln!(out, "# test_fraction={}", p.test_fraction);
        let _ = writeln!(out, "# threshold={}", p.threshold);
        let _ = writeln!(out, "# k_neighbors={}", p.k_neighbors);
        let b = &p.boost;
        let _ = writeln!(
            out,
            "# boost=rounds:{} learning_rate:{} max_depth:{} reg_lambda:{} gamma:{} min_child_weight:{}",
            b.rounds, b.learning_rate, b.max_depth, b.reg_lambda, b.gamma, b.min_child_weight
        );
        let _ = writeln!(
            out,
            "# train=positive:{} negative:{}",
            p.train.positive, p.train.negative
        );
        let _ = writeln!(out, "# test=positive:{} negative:{}", p.test.positive, p.test.negative);
        if let Some(t) = p.generated_at_unix {
            let _ = writeln!(out, "# generated_at_unix={t}");
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Report(e.to_string());
    let mut header = vec!["metric".to_string()];
    header.extend(rt.columns.iter().map(|c| c.title.clone()));
    w.write_record(&header).map_err(to_err)?;
    type Cell = fn(&ComboColumn) -> String;
    let rows: [(&str, Cell); 6] = [
        ("auroc", |c| c.auroc.to_string()),
        ("f1", |c| c.f1.to_string()),
        ("balanced_accuracy", |c| c.balanced_accuracy.to_string()),
        ("train_positive", |c| c.train_after_smote.positive.to_string()),
        ("train_negative", |c| c.train_after_smote.negative.to_string()),
        ("synthetic", |c| c.synthetic.to_string()),
    ];
    for (name, cell) in &rows {
        let mut record = vec![name.to_string()];
        record.extend(rt.columns.iter().map(cell));
        w.write_record(&record).map_err(to_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    out.push_str(&String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))?);
    Ok(out)
}

/// Reads back the metric rows of a CSV report as `(mask, metrics)` per column.
pub fn parse_csv_metrics(text: &str) -> Result<Vec<(ModalityMask, MetricSet)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let to_err = |e: csv::Error| Error::Report(e.to_string());
    let masks: Vec<ModalityMask> = reader
        .headers()
        .map_err(to_err)?
        .iter()
        .skip(1)
        .map(str::parse)
        .collect::<Result<_>>()?;
    let mut values = vec![[f64::NAN; 3]; masks.len()];
    for record in reader.records() {
        let record = record.map_err(to_err)?;
        let row = match record.get(0) {
            Some("auroc") => 0,
            Some("f1") => 1,
            Some("balanced_accuracy") => 2,
            _ => continue,
        };
        for (col, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Report(format!("bad number {cell:?}")))?;
            if let Some(slot) = values.get_mut(col) {
                slot[row] = v;
            }
        }
    }
    Ok(masks
        .into_iter()
        .zip(values)
        .map(|(m, [auroc, f1, balanced_accuracy])| {
            (
                m,
                MetricSet {
                    auroc,
                    f1,
                    balanced_accuracy,
                },
            )
        })
        .collect())
}
