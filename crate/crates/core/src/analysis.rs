//! Output analysis: per-run counters, replication batches, confidence
//! intervals, MSER-5 warm-up truncation and CSV export.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::error::ModelError;
use crate::network::Model;
use crate::sim::Simulation;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("series of length {len} too short for batch size {batch} (need at least {})", 2 * .batch)]
    SeriesTooShort { len: usize, batch: usize },
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Counts collected during one observation window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowSample {
    pub end: f64,
    pub arrivals: u64,
    pub detected: u64,
    pub missed: u64,
    /// Entrance-queue length of each shed at the window's end, in node order.
    pub queue_lengths: Vec<usize>,
    pub berth_parked: usize,
}

impl WindowSample {
    pub fn detection_fraction(&self) -> Option<f64> {
        fraction(self.detected, self.missed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShedSummary {
    pub node: i64,
    pub name: Option<String>,
    pub mean_in_system: f64,
    pub served: u64,
    pub max_queue: usize,
}

/// Everything a single run reports.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunCounters {
    pub replication: u64,
    pub horizon: f64,
    pub events: u64,
    pub arrivals: u64,
    pub clandestine_arrivals: u64,
    pub detected: u64,
    /// Detections keyed by (node id, sensor label).
    pub detected_by: BTreeMap<(i64, String), u64>,
    /// Clandestine lorries that left the system with clandestines aboard,
    /// including those that balked at a full queue.
    pub missed: u64,
    pub false_positives: u64,
    pub screenings: u64,
    pub balked: u64,
    pub exits: u64,
    pub in_flight_at_end: u64,
    pub clandestine_in_flight: u64,
    pub berth_ticks: u64,
    pub berth_checks: u64,
    /// Times each node was entered, keyed by node id.
    pub node_visits: BTreeMap<i64, u64>,
    pub windows: Vec<WindowSample>,
    pub sheds: Vec<ShedSummary>,
}

impl RunCounters {
    /// Checks both conservation identities. Returns a description of the
    /// first one that fails.
    pub fn check_conservation(&self) -> Result<(), String> {
        let clandestine = self.detected + self.missed + self.clandestine_in_flight;
        if clandestine != self.clandestine_arrivals {
            return Err(format!(
                "detected {} + missed {} + in-flight {} != clandestine arrivals {}",
                self.detected, self.missed, self.clandestine_in_flight, self.clandestine_arrivals
            ));
        }
        let all = self.exits + self.in_flight_at_end + self.balked;
        if all != self.arrivals {
            return Err(format!(
                "exits {} + in-flight {} + balked {} != arrivals {}",
                self.exits, self.in_flight_at_end, self.balked, self.arrivals
            ));
        }
        Ok(())
    }
}

fn fraction(detected: u64, missed: u64) -> Option<f64> {
    let completed = detected + missed;
    (completed > 0).then(|| detected as f64 / completed as f64)
}

/// Detected over detected-plus-missed; `None` when no clandestine lorry
/// completed its passage.
pub fn detection_fraction(rc: &RunCounters) -> Option<f64> {
    fraction(rc.detected, rc.missed)
}

/// Replications of one scenario under one master seed, ordered by index.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSet {
    pub scenario_hash: String,
    pub master_seed: u64,
    pub replications: Vec<RunCounters>,
}

impl ReplicationSet {
    pub fn values(&self, metric: Metric) -> Vec<Option<f64>> {
        self.replications.iter().map(|rc| metric.value(rc)).collect()
    }

    pub fn summarize(&self, metric: Metric, confidence: f64) -> Summary {
        let defined: Vec<f64> = self.values(metric).into_iter().flatten().collect();
        summarize(&defined, confidence)
    }

    /// Detection fraction per observation window, pooling detections and
    /// misses across replications. Windows with no completions are skipped.
    pub fn pooled_detection_series(&self) -> Vec<f64> {
        let windows = self.replications.iter().map(|r| r.windows.len()).max().unwrap_or(0);
        (0..windows)
            .filter_map(|w| {
                let (d, m) = self
                    .replications
                    .iter()
                    .filter_map(|r| r.windows.get(w))
                    .fold((0, 0), |(d, m), s| (d + s.detected, m + s.missed));
                fraction(d, m)
            })
            .collect()
    }

    /// MSER-5 truncation point of the pooled detection series, if it is long
    /// enough.
    pub fn detection_warmup(&self) -> Option<Mser> {
        mser_warmup(&self.pooled_detection_series(), MSER_BATCH).ok()
    }
}

/// Runs replications `0..n` of `model`. Replication `i` is identical whether
/// run alone or as part of any batch.
pub fn run_replications(model: &Model, n: u64, master_seed: u64) -> Result<ReplicationSet, ModelError> {
    let horizon = model.run.horizon;
    let replications = (0..n)
        .into_par_iter()
        .map(|i| Simulation::new(model, master_seed, i).run_until(horizon))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReplicationSet {
        scenario_hash: model.hash.clone(),
        master_seed,
        replications,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    DetectionFraction,
    Arrivals,
    ClandestineArrivals,
    Detected,
    Missed,
    FalsePositives,
    Balked,
    InFlight,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::DetectionFraction,
        Metric::Arrivals,
        Metric::ClandestineArrivals,
        Metric::Detected,
        Metric::Missed,
        Metric::FalsePositives,
        Metric::Balked,
        Metric::InFlight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::DetectionFraction => "detection_fraction",
            Metric::Arrivals => "arrivals",
            Metric::ClandestineArrivals => "clandestine_arrivals",
            Metric::Detected => "detected",
            Metric::Missed => "missed",
            Metric::FalsePositives => "false_positives",
            Metric::Balked => "balked",
            Metric::InFlight => "in_flight",
        }
    }

    pub fn value(self, rc: &RunCounters) -> Option<f64> {
        let count = |c: u64| Some(c as f64);
        match self {
            Metric::DetectionFraction => detection_fraction(rc),
            Metric::Arrivals => count(rc.arrivals),
            Metric::ClandestineArrivals => count(rc.clandestine_arrivals),
            Metric::Detected => count(rc.detected),
            Metric::Missed => count(rc.missed),
            Metric::FalsePositives => count(rc.false_positives),
            Metric::Balked => count(rc.balked),
            Metric::InFlight => count(rc.in_flight_at_end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// `None` when fewer than two values are available.
    pub ci_half_width: Option<f64>,
}

/// Two-sided Student-t quantile for the given confidence level.
pub fn t_quantile(confidence: f64, df: f64) -> f64 {
    let t = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    t.inverse_cdf(0.5 + confidence / 2.0)
}

/// Mean, sample standard deviation and t-based confidence half-width.
pub fn summarize(values: &[f64], confidence: f64) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            n,
            mean: f64::NAN,
            sd: f64::NAN,
            ci_half_width: None,
        };
    }
    if values.iter().all(|&x| x == values[0]) {
        // exact for identical replications, where summing would round
        return Summary {
            n,
            mean: values[0],
            sd: if n == 1 { f64::NAN } else { 0.0 },
            ci_half_width: (n > 1).then_some(0.0),
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Summary {
            n,
            mean,
            sd: f64::NAN,
            ci_half_width: None,
        };
    }
    let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    Summary {
        n,
        mean,
        sd,
        ci_half_width: Some(t_quantile(confidence, (n - 1) as f64) * sd / (n as f64).sqrt()),
    }
}

pub const MSER_BATCH: usize = 5;

/// MSER truncation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mser {
    /// Batches deleted from the front.
    pub batches: usize,
    /// Observations deleted from the front (`batches * batch size`).
    pub index: usize,
    /// The unconstrained minimum lay beyond half the series.
    pub capped: bool,
}

/// MSER warm-up rule on batch means of size `batch`.
///
/// For each candidate truncation `d` the statistic is the variance of the
/// remaining batch means divided by their count; the smallest `d` attaining
/// the minimum wins. Truncation is limited to half the batches.
pub fn mser_warmup(series: &[f64], batch: usize) -> Result<Mser, AnalysisError> {
    if batch == 0 || series.len() < 2 * batch {
        return Err(AnalysisError::SeriesTooShort {
            len: series.len(),
            batch,
        });
    }
    let means: Vec<f64> = series
        .chunks_exact(batch)
        .map(|c| c.iter().sum::<f64>() / batch as f64)
        .collect();
    let k = means.len();
    let mut best = (0, f64::INFINITY);
    for d in 0..=k - 2 {
        let rest = &means[d..];
        let m = rest.len() as f64;
        let mean = rest.iter().sum::<f64>() / m;
        let stat = rest.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m * m);
        if stat < best.1 {
            best = (d, stat);
        }
    }
    let cap = k / 2;
    let (batches, capped) = if best.0 > cap { (cap, true) } else { (best.0, false) };
    Ok(Mser {
        batches,
        index: batches * batch,
        capped,
    })
}

/// Centred moving average with window half-width `w`, shrinking the window
/// near the start of the series.
pub fn welch_moving_average(series: &[f64], w: usize) -> Vec<f64> {
    let n = series.len();
    (0..n)
        .map(|i| {
            let h = w.min(i).min(n - 1 - i);
            let s = &series[i - h..=i + h];
            s.iter().sum::<f64>() / s.len() as f64
        })
        .collect()
}

/// Decimal rendering with `sig` significant digits; `NA` for missing or
/// non-finite values.
pub fn format_sig(x: Option<f64>, sig: usize) -> String {
    let Some(x) = x.filter(|x| x.is_finite()) else {
        return "NA".to_string();
    };
    if x == 0.0 {
        return "0".to_string();
    }
    let render = |x: f64| {
        let mag = x.abs().log10().floor() as i32;
        let decimals = (sig as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    };
    let s = render(x);
    // rounding can carry into a new leading digit (9.99.. -> 10.0..)
    let reparsed: f64 = s.parse().expect("formatted float parses");
    if reparsed != 0.0 && reparsed.abs().log10().floor() != x.abs().log10().floor() {
        render(reparsed)
    } else {
        s
    }
}

pub const SIG_DIGITS: usize = 10;

/// Writes one row per replication per metric, followed by a summary block.
pub fn write_csv<W: Write>(
    set: &ReplicationSet,
    metrics: &[Metric],
    confidence: f64,
    out: W,
) -> Result<(), AnalysisError> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["scenario_hash", "master_seed", "replication", "metric", "value"])?;
    for &metric in metrics {
        for rc in &set.replications {
            w.write_record([
                set.scenario_hash.clone(),
                set.master_seed.to_string(),
                rc.replication.to_string(),
                metric.name().to_string(),
                format_sig(metric.value(rc), SIG_DIGITS),
            ])?;
        }
    }
    if !set.replications.is_empty() {
        // a bare newline; the csv writer would quote an empty record
        let mut inner = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        inner.write_all(b"\n").map_err(csv::Error::from)?;
        w = csv::WriterBuilder::new().flexible(true).from_writer(inner);
        w.write_record(["metric", "n", "mean", "sd", "ci95_half_width", "warmup_index"])?;
        let warmup = set.detection_warmup();
        for &metric in metrics {
            let s = set.summarize(metric, confidence);
            let warm = match (metric, warmup) {
                (Metric::DetectionFraction, Some(m)) => m.index.to_string(),
                _ => "NA".to_string(),
            };
            w.write_record([
                metric.name().to_string(),
                s.n.to_string(),
                format_sig((s.n > 0).then_some(s.mean), SIG_DIGITS),
                format_sig((s.n > 1).then_some(s.sd), SIG_DIGITS),
                format_sig(s.ci_half_width, SIG_DIGITS),
                warm,
            ])?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn export_csv(
    set: &ReplicationSet,
    metrics: &[Metric],
    confidence: f64,
    path: impl AsRef<Path>,
) -> Result<(), AnalysisError> {
    let path = path.as_ref();
    let io_err = |source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    write_csv(set, metrics, confidence, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counters(rep: u64, detected: u64, missed: u64) -> RunCounters {
        RunCounters {
            replication: rep,
            detected,
            missed,
            clandestine_arrivals: detected + missed,
            arrivals: 1000,
            exits: 1000,
            ..Default::default()
        }
    }

    #[test]
    fn detection_fraction_examples() {
        assert_eq!(detection_fraction(&counters(0, 30, 10)), Some(0.75));
        assert_eq!(detection_fraction(&counters(0, 0, 50)), Some(0.0));
        assert_eq!(detection_fraction(&counters(0, 0, 0)), None);
    }

    #[test]
    fn conservation_identities() {
        let mut rc = counters(0, 3, 2);
        assert!(rc.check_conservation().is_ok());
        rc.clandestine_in_flight = 1;
        assert!(rc.check_conservation().is_err());
        rc.clandestine_arrivals += 1;
        rc.balked = 1;
        assert!(rc.check_conservation().is_err());
    }

    #[test]
    fn summarize_examples() {
        let s = summarize(&[0.4; 20], 0.95);
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.ci_half_width, Some(0.0));

        let s = summarize(&[0.2, 0.4], 0.95);
        assert!((s.mean - 0.3).abs() < 1e-15);
        assert!((s.sd - 0.141_421_356_237).abs() < 1e-9);
        // t(0.975, 1) = 12.706; half-width = 12.706 * 0.1414 / sqrt 2 = 1.2706
        assert!((s.ci_half_width.unwrap() - 1.270_620_473_6).abs() < 1e-6);

        let s = summarize(&[0.5], 0.95);
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.ci_half_width, None);
    }

    #[test]
    fn t_quantile_reference_values() {
        assert!((t_quantile(0.95, 1.0) - 12.706_204_736).abs() < 1e-6);
        assert!((t_quantile(0.95, 9.0) - 2.262_157_163).abs() < 1e-6);
        assert!((t_quantile(0.95, 39.0) - 2.022_690_901).abs() < 1e-6);
    }

    #[test]
    fn half_width_shrinks_with_root_n() {
        // two-point alternating series keeps sd fixed as n grows
        let series = |n: usize| (0..n).map(|i| if i % 2 == 0 { 0.0 } else { 1.0 }).collect::<Vec<_>>();
        let h10 = summarize(&series(10), 0.95);
        let h40 = summarize(&series(40), 0.95);
        let ratio = h40.ci_half_width.unwrap() / h10.ci_half_width.unwrap();
        let expected = 0.5 * (t_quantile(0.95, 39.0) / t_quantile(0.95, 9.0)) * (h40.sd / h10.sd);
        assert!((ratio - expected).abs() < 1e-12);
        assert!(ratio < 0.5);
    }

    #[test]
    fn mser_constant_series() {
        assert_eq!(
            mser_warmup(&[3.0; 100], 5).unwrap(),
            Mser {
                batches: 0,
                index: 0,
                capped: false
            }
        );
    }

    #[test]
    fn mser_step_series_truncates_first_batch() {
        let mut series = vec![10.0; 5];
        series.extend(std::iter::repeat_n(0.0, 45));
        let m = mser_warmup(&series, 5).unwrap();
        assert_eq!(m.batches, 1);
        assert_eq!(m.index, 5);
        assert!(!m.capped);
    }

    #[test]
    fn mser_rejects_short_series() {
        assert!(matches!(
            mser_warmup(&[1.0; 9], 5),
            Err(AnalysisError::SeriesTooShort { len: 9, batch: 5 })
        ));
        assert!(mser_warmup(&[1.0; 10], 5).is_ok());
    }

    #[test]
    fn mser_cap_is_flagged() {
        // a long transient followed by a short flat tail
        let mut series: Vec<f64> = (0..40).map(|i| 100.0 - i as f64).collect();
        series.extend(std::iter::repeat_n(0.0, 10));
        let m = mser_warmup(&series, 5).unwrap();
        assert!(m.capped);
        assert_eq!(m.batches, 5);
    }

    #[test]
    fn welch_average_smooths() {
        let ma = welch_moving_average(&[1.0, 3.0, 5.0, 7.0, 9.0], 1);
        assert_eq!(ma, vec![1.0, 3.0, 5.0, 7.0, 9.0]);
        let ma = welch_moving_average(&[0.0, 6.0, 0.0, 6.0], 1);
        assert_eq!(ma, vec![0.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(Some(0.75), 10), "0.7500000000");
        assert_eq!(format_sig(Some(75123.0), 10), "75123.00000");
        assert_eq!(format_sig(Some(0.0), 10), "0");
        assert_eq!(format_sig(None, 10), "NA");
        assert_eq!(format_sig(Some(f64::NAN), 10), "NA");
        assert_eq!(format_sig(Some(9.99999999996), 10), "10.00000000");
        assert_eq!(format_sig(Some(-0.001234), 4), "-0.001234");
    }

    fn sample_set(n: u64) -> ReplicationSet {
        ReplicationSet {
            scenario_hash: "abc".into(),
            master_seed: 7,
            replications: (0..n).map(|i| counters(i, 30 + i, 10)).collect(),
        }
    }

    fn rows(set: &ReplicationSet, metrics: &[Metric]) -> Vec<Vec<String>> {
        let mut buf = Vec::new();
        write_csv(set, metrics, 0.95, &mut buf).unwrap();
        csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(buf.as_slice())
            .records()
            .map(|r| r.unwrap().iter().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn csv_shape() {
        let r = rows(&sample_set(20), &[Metric::DetectionFraction]);
        // header, 20 data rows, summary header, 1 summary row; the reader
        // skips the blank separator line
        assert_eq!(r.len(), 1 + 20 + 1 + 1);
        assert_eq!(r[0], ["scenario_hash", "master_seed", "replication", "metric", "value"]);
        assert_eq!(r[1], ["abc", "7", "0", "detection_fraction", "0.7500000000"]);
        assert_eq!(r[21], ["metric", "n", "mean", "sd", "ci95_half_width", "warmup_index"]);
        assert_eq!(r[22][0], "detection_fraction");
        assert_eq!(r[22][1], "20");
        let mut buf = Vec::new();
        write_csv(&sample_set(2), &[Metric::Arrivals], 0.95, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().contains(".000000\n\nmetric,n,"));
    }

    #[test]
    fn csv_empty_set_is_header_only() {
        let r = rows(&sample_set(0), &Metric::ALL);
        assert_eq!(r.len(), 1);
    }

    #[test]
    fn csv_single_replication_has_no_ci() {
        let r = rows(&sample_set(1), &[Metric::Arrivals]);
        assert_eq!(r.last().unwrap()[4], "NA");
    }

    #[test]
    fn csv_values_round_trip() {
        let set = sample_set(5);
        let r = rows(&set, &[Metric::DetectionFraction]);
        for (row, rc) in r[1..6].iter().zip(&set.replications) {
            let parsed: f64 = row[4].parse().unwrap();
            assert_eq!(format_sig(Some(parsed), SIG_DIGITS), row[4]);
            assert!((parsed - detection_fraction(rc).unwrap()).abs() < 1e-9);
        }
    }
}
