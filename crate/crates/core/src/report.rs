//! Table and plot-ready CSV rendering of harness output, annotated with the
//! published reference values. The references never enter a computation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{LeakError, Result};
use crate::harness::{results_from_jsonl, summarize, ArtifactsFile, ProtocolId, ProtocolReport, RunResult, ARTIFACTS_FILE, RESULTS_FILE};
use crate::metrics::mean_std;

/// One published row on the 1,200-video benchmark. `None` marks a value
/// that was not reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub row: u8,
    pub method: String,
    /// `published`, `original` or `reimplementation`.
    pub source: String,
    pub plcc: f64,
    pub plcc_std: Option<f64>,
    pub srocc: f64,
    pub srocc_std: Option<f64>,
    pub pool: Option<String>,
    /// `Some(true)` for correct fine-tuning.
    pub ft_correct: Option<bool>,
    /// `Some(true)` for an independent test set.
    pub test_independent: Option<bool>,
}

type RawRow = (u8, &'static str, &'static str, f64, Option<f64>, f64, Option<f64>, Option<&'static str>, Option<bool>, Option<bool>);

const ROWS: [RawRow; 12] = [
    (1, "CORNIA", "published", 0.51, Some(0.02), 0.51, Some(0.04), None, None, None),
    (2, "V-BLIINDS", "published", 0.58, Some(0.05), 0.61, Some(0.04), None, None, None),
    (3, "STFC", "published", 0.64, None, 0.61, None, None, None, None),
    (4, "TLVQM", "published", 0.77, Some(0.02), 0.78, Some(0.02), None, None, None),
    (5, "MLSP-VQA-FF", "published", 0.83, Some(0.02), 0.82, Some(0.02), None, None, None),
    (6, "Inception-V3", "original", 0.72, None, 0.68, None, Some("max"), None, None),
    (7, "Inception-V3", "reimplementation", 0.73, Some(0.02), 0.70, Some(0.03), Some("max"), None, None),
    (8, "Inception-V3", "original", 0.85, None, 0.85, None, Some("avg"), Some(false), Some(false)),
    (9, "Inception-V3", "reimplementation", 0.83, Some(0.02), 0.84, Some(0.03), Some("avg"), Some(false), Some(false)),
    (10, "Inception-V3", "reimplementation", 0.76, Some(0.03), 0.74, Some(0.04), Some("avg"), Some(true), Some(false)),
    (11, "Inception-V3", "reimplementation", 0.72, Some(0.03), 0.69, Some(0.04), Some("avg"), Some(false), Some(true)),
    (12, "Inception-V3", "reimplementation", 0.71, Some(0.03), 0.69, Some(0.04), Some("avg"), Some(true), Some(true)),
];

/// The published regression-head variant (not a table row).
pub const END_TO_END_REFERENCE: (f64, f64, f64, f64) = (0.66, 0.02, 0.65, 0.03);
/// Classifier accuracy gain over always predicting the dominant class, in points.
pub const CLASSIFIER_UPLIFT_REFERENCE: f64 = 5.44;
/// Validation accuracy reached with frame-pooled splits, as a lower bound in percent.
pub const LEAKY_VALIDATION_ACCURACY_REFERENCE: f64 = 95.0;

/// All twelve published rows, verbatim.
pub fn reference_table() -> Vec<ReferenceRow> {
    ROWS.iter()
        .map(|&(row, method, source, plcc, plcc_std, srocc, srocc_std, pool, ft, test)| ReferenceRow {
            row,
            method: method.into(),
            source: source.into(),
            plcc,
            plcc_std,
            srocc,
            srocc_std,
            pool: pool.map(Into::into),
            ft_correct: ft,
            test_independent: test,
        })
        .collect()
}

/// Published row the protocol reproduces.
pub fn reference_row_number(protocol: ProtocolId) -> Option<u8> {
    match protocol {
        ProtocolId::NoFinetune => Some(7),
        ProtocolId::LeakyFtTaintedTest => Some(9),
        ProtocolId::CleanFtTaintedTest => Some(10),
        ProtocolId::LeakyFtCleanTest => Some(11),
        ProtocolId::Clean => Some(12),
        ProtocolId::EndToEnd => None,
    }
}

pub fn reference_for(protocol: ProtocolId) -> Option<ReferenceRow> {
    if protocol == ProtocolId::EndToEnd {
        let (plcc, plcc_std, srocc, srocc_std) = END_TO_END_REFERENCE;
        return Some(ReferenceRow {
            row: 0,
            method: "Inception-V3 regression head".into(),
            source: "reimplementation".into(),
            plcc,
            plcc_std: Some(plcc_std),
            srocc,
            srocc_std: Some(srocc_std),
            pool: None,
            ft_correct: Some(true),
            test_independent: Some(true),
        });
    }
    let n = reference_row_number(protocol)?;
    reference_table().into_iter().find(|r| r.row == n)
}

fn fmt_value(v: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{v:.2} (±{s:.2})"),
        None => format!("{v:.2} (±--)"),
    }
}

fn fmt_flag(flag: Option<bool>, good: &str, bad: &str) -> String {
    match flag {
        None => "-".into(),
        Some(true) => good.into(),
        Some(false) => bad.into(),
    }
}

impl ReferenceRow {
    pub fn annotation(&self) -> String {
        let label = if self.row == 0 { "ref".to_string() } else { format!("ref row {}", self.row) };
        format!("{label}: {} / {}", fmt_value(self.plcc, self.plcc_std), fmt_value(self.srocc, self.srocc_std))
    }
}

/// One rendered table row; the `reference` column is annotation only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub protocol: String,
    pub plcc: String,
    pub srocc: String,
    pub pool: String,
    pub kernel: String,
    pub ft: String,
    pub test: String,
    pub scheme: String,
    pub runs: String,
    pub reference: String,
}

impl TableRow {
    const HEADER: [&'static str; 10] = ["protocol", "PLCC", "SROCC", "pool", "kernel", "ft", "test", "scheme", "runs", "reference"];

    fn cells(&self) -> [&str; 10] {
        [
            &self.protocol,
            &self.plcc,
            &self.srocc,
            &self.pool,
            &self.kernel,
            &self.ft,
            &self.test,
            &self.scheme,
            &self.runs,
            &self.reference,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub rows: Vec<TableRow>,
    pub references: Vec<ReferenceRow>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl TableDocument {
    pub fn to_text(&self) -> String {
        let mut widths = TableRow::HEADER.map(str::len);
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r.cells()) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |cells: [&str; 10]| -> String {
            let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            parts.join("  ").trim_end().to_string()
        };
        let mut out = line(TableRow::HEADER);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for r in &self.rows {
            out.push_str(&line(r.cells()));
            out.push('\n');
        }
        out.push_str("\npublished reference rows\n");
        for r in &self.references {
            let _ = writeln!(
                out,
                "{:>2}  {:<12} {:<16} {} / {}  pool={} ft={} test={}",
                r.row,
                r.method,
                r.source,
                fmt_value(r.plcc, r.plcc_std),
                fmt_value(r.srocc, r.srocc_std),
                r.pool.as_deref().unwrap_or("-"),
                fmt_flag(r.ft_correct, "correct", "leaky"),
                fmt_flag(r.test_independent, "independent", "tainted"),
            );
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = TableRow::HEADER.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.cells().iter().map(|c| csv_field(c)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Rows ordered as the protocol matrix (no fine-tuning, the four leakage
/// combinations, then the regression head).
pub fn render_table(reports: &[ProtocolReport]) -> Result<TableDocument> {
    if reports.is_empty() {
        return Err(LeakError::domain("nothing to render: no protocol reports"));
    }
    let mut sorted: Vec<&ProtocolReport> = reports.iter().collect();
    sorted.sort_by_key(|r| (ProtocolId::ALL.iter().position(|&p| p == r.protocol), r.pooling, r.kernel.clone()));
    let rows = sorted
        .into_iter()
        .map(|r| {
            let ms = |m: &Option<crate::metrics::MeanStd<f64>>| m.map_or("n/a".to_string(), |m| m.to_string());
            TableRow {
                protocol: r.protocol.name().to_string(),
                plcc: ms(&r.plcc),
                srocc: ms(&r.srocc),
                pool: r.pooling.map_or("-".into(), |p| p.name().to_string()),
                kernel: r.kernel.clone().unwrap_or_else(|| "-".into()),
                ft: fmt_flag(r.ft_leaky.map(|l| !l), "correct", "leaky"),
                test: fmt_flag(r.test_tainted.map(|t| !t), "independent", "tainted"),
                scheme: r.scheme.clone(),
                runs: if r.failures > 0 { format!("{} ({} failed)", r.runs, r.failures) } else { r.runs.to_string() },
                reference: r.reference.as_ref().map_or(String::new(), ReferenceRow::annotation),
            }
        })
        .collect();
    Ok(TableDocument { rows, references: reference_table() })
}

/// CSV text for each plot.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureBundle {
    /// Clean vs leaky fine-tuning curves on a shared iteration axis.
    pub traces: String,
    /// Voted-class percentages per split, then mean and standard error.
    pub class_histogram: String,
    /// Kernel × protocol bars with reference markers.
    pub kernel_bars: String,
}

const NA: &str = "NA";

fn opt(v: Option<f64>) -> String {
    v.map_or(NA.to_string(), |x| x.to_string())
}

fn traces_csv(artifacts: &ArtifactsFile) -> String {
    let mut out = String::from(
        "split,iteration,clean_train_loss,clean_train_acc,clean_val_loss,clean_val_acc,clean_test_acc,\
         leaky_train_loss,leaky_train_acc,leaky_val_loss,leaky_val_acc,leaky_test_acc\n",
    );
    type Cols = [Option<f64>; 5];
    for a in &artifacts.splits {
        let mut axis: BTreeMap<usize, (Cols, Cols)> = BTreeMap::new();
        for (slot, trace) in [(0, &a.clean_trace), (1, &a.leaky_trace)] {
            let Some(t) = trace else { continue };
            for it in &t.iterations {
                let e = axis.entry(it.iteration).or_default();
                let cols = if slot == 0 { &mut e.0 } else { &mut e.1 };
                cols[0] = Some(it.train_loss);
                cols[1] = Some(it.train_acc);
            }
            for v in &t.validations {
                let e = axis.entry(v.iteration).or_default();
                let cols = if slot == 0 { &mut e.0 } else { &mut e.1 };
                cols[2] = Some(v.val_loss);
                cols[3] = Some(v.val_acc);
                cols[4] = v.test_acc;
            }
        }
        for (it, (c, l)) in axis {
            let cells: Vec<String> = c.iter().chain(&l).map(|v| opt(*v)).collect();
            let _ = writeln!(out, "{},{},{}", a.split_index, it, cells.join(","));
        }
    }
    out
}

fn histogram_csv(artifacts: &ArtifactsFile) -> String {
    let mut out = String::from("split,class,percent,std_error,accuracy,dominant_class_baseline\n");
    let mut per_class: Vec<Vec<f64>> = vec![Vec::new(); ClassLabel::COUNT];
    let mut accs = Vec::new();
    for a in &artifacts.splits {
        match &a.class_histogram {
            Some(h) => {
                for (c, label) in ClassLabel::ALL.iter().enumerate() {
                    per_class[c].push(h.percent[c]);
                    let _ = writeln!(out, "{},{},{},,{},{}", a.split_index, label, h.percent[c], h.accuracy, h.dominant_class_baseline);
                }
                accs.push(h.accuracy);
            }
            None => {
                let _ = writeln!(out, "{},{NA},{NA},,{NA},{NA}", a.split_index);
            }
        }
    }
    if !accs.is_empty() {
        let acc = accs.iter().sum::<f64>() / accs.len() as f64;
        for (c, label) in ClassLabel::ALL.iter().enumerate() {
            let ms = mean_std(&per_class[c]).expect("non-empty");
            let se = ms.std / (per_class[c].len() as f64).sqrt();
            let _ = writeln!(out, "mean,{},{},{},{},{}", label, ms.mean, se, acc, artifacts.dominant_class_share);
        }
    }
    out
}

/// Chart letter per protocol; the regression head has no chart.
pub fn chart_of(protocol: ProtocolId) -> Option<char> {
    match protocol {
        ProtocolId::NoFinetune => Some('a'),
        ProtocolId::Clean => Some('b'),
        ProtocolId::LeakyFtCleanTest => Some('c'),
        ProtocolId::LeakyFtTaintedTest => Some('d'),
        ProtocolId::CleanFtTaintedTest => Some('e'),
        ProtocolId::EndToEnd => None,
    }
}

/// Reference markers per chart: original and reimplementation, PLCC and
/// SROCC, as `(label, row)` pairs.
fn chart_markers(chart: char) -> [(&'static str, u8); 2] {
    match chart {
        'a' => [("original", 6), ("reimplementation", 7)],
        'b' => [("original", 8), ("reimplementation", 12)],
        'c' => [("original", 8), ("reimplementation", 11)],
        'd' => [("original", 8), ("reimplementation", 9)],
        _ => [("original", 8), ("reimplementation", 10)],
    }
}

fn bars_csv(reports: &[ProtocolReport]) -> String {
    let mut out = String::from("chart,protocol,pooling,kernel,kind,metric,value,std\n");
    let kernels: BTreeSet<String> = reports.iter().filter_map(|r| r.kernel.clone()).collect();
    let poolings: BTreeSet<_> = reports.iter().filter_map(|r| r.pooling).collect();
    let refs = reference_table();
    for protocol in ProtocolId::ALL {
        let Some(chart) = chart_of(protocol) else { continue };
        let present: Vec<&ProtocolReport> = reports.iter().filter(|r| r.protocol == protocol).collect();
        if present.is_empty() && !matches!(chart, 'a'..='d') {
            continue;
        }
        for &pooling in &poolings {
            for kernel in &kernels {
                let found = present.iter().find(|r| r.pooling == Some(pooling) && r.kernel.as_ref() == Some(kernel));
                for (metric, pick) in [("plcc", 0), ("srocc", 1)] {
                    let ms = found.and_then(|r| if pick == 0 { r.plcc } else { r.srocc });
                    let (kind, value, std) = match ms {
                        Some(m) => ("measured", m.mean.to_string(), m.std.to_string()),
                        None => ("missing", NA.to_string(), NA.to_string()),
                    };
                    let _ = writeln!(out, "{chart},{protocol},{pooling},{},{kind},{metric},{value},{std}", csv_field(kernel));
                }
            }
        }
        for (label, row) in chart_markers(chart) {
            let r = refs.iter().find(|r| r.row == row).expect("reference row exists");
            for (metric, value) in [("plcc", r.plcc), ("srocc", r.srocc)] {
                let _ = writeln!(out, "{chart},{protocol},,,reference_{label},{metric},{value},");
            }
        }
    }
    out
}

pub fn emit_figure_data(artifacts: &ArtifactsFile, reports: &[ProtocolReport]) -> FigureBundle {
    FigureBundle { traces: traces_csv(artifacts), class_histogram: histogram_csv(artifacts), kernel_bars: bars_csv(reports) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = LeakError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            other => Err(LeakError::domain(format!("unknown report format `{other}` (text or csv)"))),
        }
    }
}

/// Reads a run directory and writes the table plus the three figure CSVs.
pub fn write_report(input: &Path, output: &Path, format: TableFormat) -> Result<Vec<std::path::PathBuf>> {
    let results_path = input.join(RESULTS_FILE);
    let text = fs::read_to_string(&results_path).map_err(|e| LeakError::io(&results_path, e))?;
    let results: Vec<RunResult> = results_from_jsonl(&text, &results_path)?;
    let artifacts_path = input.join(ARTIFACTS_FILE);
    let artifacts: ArtifactsFile = match fs::read_to_string(&artifacts_path) {
        Ok(s) => serde_json::from_str(&s)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            log::warn!("{} not found; figure data will mark traces and histograms as missing", artifacts_path.display());
            ArtifactsFile { dominant_class_share: f64::NAN, splits: Vec::new() }
        }
        Err(e) => return Err(LeakError::io(&artifacts_path, e)),
    };
    let reports = summarize(&results);
    let table = render_table(&reports)?;
    fs::create_dir_all(output).map_err(|e| LeakError::io(output, e))?;
    let (name, body) = match format {
        TableFormat::Text => ("table.txt", table.to_text()),
        TableFormat::Csv => ("table.csv", table.to_csv()),
    };
    let figs = emit_figure_data(&artifacts, &reports);
    let files = [
        (name, body),
        ("traces.csv", figs.traces),
        ("class_histogram.csv", figs.class_histogram),
        ("kernel_bars.csv", figs.kernel_bars),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = output.join(name);
        fs::write(&path, body).map_err(|e| LeakError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::{ClassDistribution, IterationRecord, TrainTrace, ValidationRecord};
    use crate::harness::SplitArtifacts;
    use crate::metrics::MeanStd;
    use crate::pooling::PoolingMethod;

    fn report(protocol: ProtocolId, plcc: f64) -> ProtocolReport {
        ProtocolReport {
            protocol,
            pooling: protocol.uses_svr().then_some(PoolingMethod::Mean),
            kernel: protocol.uses_svr().then(|| "gaussian(gamma=0.015625)".to_string()),
            scheme: "random_splits".into(),
            plcc: Some(MeanStd { mean: plcc, std: 0.01 }),
            srocc: Some(MeanStd { mean: plcc - 0.01, std: 0.02 }),
            split_plcc: vec![plcc],
            split_srocc: vec![plcc - 0.01],
            runs: 5,
            failures: 0,
            ft_leaky: protocol.has_flags().then(|| protocol.ft_leaky()),
            test_tainted: protocol.has_flags().then(|| protocol.test_tainted()),
            reference: reference_for(protocol),
        }
    }

    #[test]
    fn reference_annotations() {
        assert_eq!(reference_for(ProtocolId::Clean).unwrap().annotation(), "ref row 12: 0.71 (±0.03) / 0.69 (±0.04)");
        assert_eq!(reference_for(ProtocolId::LeakyFtTaintedTest).unwrap().annotation(), "ref row 9: 0.83 (±0.02) / 0.84 (±0.03)");
        assert_eq!(reference_table().len(), 12);
    }

    #[test]
    fn table_order_and_flags() {
        let reports = vec![report(ProtocolId::Clean, 0.7), report(ProtocolId::NoFinetune, 0.5), report(ProtocolId::LeakyFtTaintedTest, 0.9)];
        let t = render_table(&reports).unwrap();
        let names: Vec<&str> = t.rows.iter().map(|r| r.protocol.as_str()).collect();
        assert_eq!(names, ["NoFinetune", "LeakyFt_TaintedTest", "Clean"]);
        assert_eq!((t.rows[0].ft.as_str(), t.rows[0].test.as_str()), ("-", "-"));
        assert_eq!((t.rows[1].ft.as_str(), t.rows[1].test.as_str()), ("leaky", "tainted"));
        assert_eq!(t.rows[2].plcc, "0.70 (±0.01)");
        assert!(t.to_text().contains("ref row 12"));
        assert!(render_table(&[]).is_err());
        assert_eq!(render_table(&reports).unwrap(), t);
    }

    #[test]
    fn references_do_not_touch_computed_columns() {
        let reports = vec![report(ProtocolId::Clean, 0.7), report(ProtocolId::CleanFtTaintedTest, 0.8)];
        let stripped: Vec<ProtocolReport> = reports.iter().cloned().map(|mut r| {
            r.reference = None;
            r
        }).collect();
        let a = render_table(&reports).unwrap();
        let b = render_table(&stripped).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.cells()[..9], y.cells()[..9]);
        }
        assert_eq!(bars_csv(&reports), bars_csv(&stripped));
    }

    fn trace(n: usize, every: usize) -> TrainTrace {
        TrainTrace {
            iterations: (1..=n).map(|i| IterationRecord { iteration: i, train_loss: 1.0 / i as f64, train_acc: 0.5 }).collect(),
            validations: (1..=n)
                .filter(|i| i % every == 0)
                .map(|i| ValidationRecord { iteration: i, frames_seen: i * 32, val_loss: 1.0, val_acc: 0.6, test_acc: Some(0.4), learning_rate: 0.01 })
                .collect(),
            selected_iteration: every,
        }
    }

    fn artifacts() -> ArtifactsFile {
        let hist = |counts: [usize; 5]| {
            let n: usize = counts.iter().sum();
            ClassDistribution { counts, percent: counts.map(|c| 100.0 * c as f64 / n as f64), accuracy: 0.4, dominant_class_baseline: 0.3 }
        };
        ArtifactsFile {
            dominant_class_share: 0.25,
            splits: vec![
                SplitArtifacts { split_index: 0, seed: 1, clean_trace: Some(trace(6, 3)), leaky_trace: Some(trace(6, 2)), end_to_end_trace: None, gap: None, class_histogram: Some(hist([1, 2, 3, 0, 1])) },
                SplitArtifacts { split_index: 1, seed: 2, clean_trace: Some(trace(6, 3)), leaky_trace: None, end_to_end_trace: None, gap: None, class_histogram: Some(hist([0, 0, 3, 3, 3])) },
            ],
        }
    }

    #[test]
    fn traces_share_iteration_axis() {
        let csv = traces_csv(&artifacts());
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 12);
        let s0: Vec<&Vec<&str>> = rows.iter().filter(|r| r[0] == "0").collect();
        assert!(s0.iter().all(|r| r[2] != NA && r[7] != NA));
        // Missing leaky run in split 1 is marked, not zero-filled.
        assert!(rows.iter().filter(|r| r[0] == "1").all(|r| r[7] == NA));
    }

    #[test]
    fn histogram_rows_sum_to_hundred() {
        let csv = histogram_csv(&artifacts());
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for l in csv.lines().skip(1) {
            let f: Vec<&str> = l.split(',').collect();
            *sums.entry(f[0].to_string()).or_default() += f[2].parse::<f64>().unwrap();
        }
        assert_eq!(sums.len(), 3);
        assert!(sums.values().all(|s| (s - 100.0).abs() < 0.1));
    }

    #[test]
    fn bars_have_four_markers_and_gap_rows() {
        let csv = bars_csv(&[report(ProtocolId::Clean, 0.7)]);
        for chart in ['a', 'b', 'c', 'd'] {
            let markers = csv.lines().filter(|l| l.starts_with(chart) && l.contains(",reference_")).count();
            assert_eq!(markers, 4, "chart {chart}");
        }
        assert!(csv.lines().any(|l| l.starts_with("b,Clean") && l.contains(",measured,plcc,0.7,")));
        assert!(csv.lines().any(|l| l.starts_with("a,NoFinetune") && l.contains(",missing,plcc,NA,NA")));
    }
}
