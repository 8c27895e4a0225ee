use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::compare::MethodResult;
use super::metrics::confidence_interval;
use crate::data::write_atomic;
use crate::error::{Error, Result};

/// One long-format row of the results table. Runtimes are left out so that
/// seeded runs produce byte-identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub method: String,
    #[serde(rename = "V")]
    pub v: Option<usize>,
    pub seed: u64,
    pub gamma: Option<f64>,
    pub n_invalid: Option<usize>,
    pub metric: String,
    pub value: f64,
}

/// Expands each result into an `mse` and a `cate_abs_bias` record.
pub fn records_from(results: &[MethodResult], gamma: Option<f64>, n_invalid: Option<usize>) -> Vec<ResultRecord> {
    results
        .iter()
        .flat_map(|r| {
            let method = match r.method {
                super::Method::Single { .. } => r.method.to_string(),
                m => m.name().to_string(),
            };
            [("mse", r.mse), ("cate_abs_bias", r.cate_abs_bias)].map(|(metric, value)| ResultRecord {
                method: method.clone(),
                v: r.method.v(),
                seed: r.seed,
                gamma,
                n_invalid,
                metric: metric.to_string(),
                value,
            })
        })
        .collect()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(T::to_string).unwrap_or_default()
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl Iterator<Item = [String; N]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::Schema(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Schema(format!("csv encoding failed: {e}")))
}

/// `method,V,seed,gamma,n_invalid,metric,value`.
pub fn results_csv(records: &[ResultRecord]) -> Result<Vec<u8>> {
    to_csv(
        ["method", "V", "seed", "gamma", "n_invalid", "metric", "value"],
        records.iter().map(|r| {
            [
                r.method.clone(),
                opt(&r.v),
                r.seed.to_string(),
                opt(&r.gamma),
                opt(&r.n_invalid),
                r.metric.clone(),
                r.value.to_string(),
            ]
        }),
    )
}

pub fn write_results_csv(path: &Path, records: &[ResultRecord]) -> Result<()> {
    write_atomic(path, &results_csv(records)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Present only with at least two replicates.
    pub ci_half_width: Option<f64>,
    pub n_replicates: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    /// Groups by method label (ModeIV split by `V`) and metric, with a 95%
    /// Student-t interval across seeds.
    pub fn from_records(records: &[ResultRecord]) -> Result<Self> {
        let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in records {
            let label = match r.v {
                Some(v) => format!("{}_v{v}", r.method),
                None => r.method.clone(),
            };
            groups.entry((label, r.metric.clone())).or_default().push(r.value);
        }
        let rows = groups
            .into_iter()
            .map(|((method, metric), values)| {
                let n = values.len();
                let (mean, ci) = if n >= 2 {
                    let (m, h) = confidence_interval(&values, 0.95)?;
                    (m, Some(h))
                } else {
                    (values[0], None)
                };
                Ok(ReportRow {
                    method,
                    metric,
                    mean,
                    ci_half_width: ci,
                    n_replicates: n,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn get(&self, method: &str, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.metric == metric)
    }

    /// `method,metric,mean,ci_half_width,n_replicates`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        to_csv(
            ["method", "metric", "mean", "ci_half_width", "n_replicates"],
            self.rows.iter().map(|r| {
                [
                    r.method.clone(),
                    r.metric.clone(),
                    r.mean.to_string(),
                    opt(&r.ci_half_width),
                    r.n_replicates.to_string(),
                ]
            }),
        )
    }
}

/// One point of a figure-style curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub x_axis_value: f64,
    pub method: String,
    pub mean: f64,
    pub ci: Option<f64>,
}

/// `x_axis_value,method,mean,ci`.
pub fn plot_csv(points: &[PlotPoint]) -> Result<Vec<u8>> {
    to_csv(
        ["x_axis_value", "method", "mean", "ci"],
        points
            .iter()
            .map(|p| [p.x_axis_value.to_string(), p.method.clone(), p.mean.to_string(), opt(&p.ci)]),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Method;

    fn result(method: Method, seed: u64, mse: f64) -> MethodResult {
        MethodResult {
            method,
            seed,
            mse,
            cate_abs_bias: mse / 10.0,
            runtime_secs: 1.5,
        }
    }

    #[test]
    fn results_csv_layout() {
        let recs = records_from(&[result(Method::ModeIv { v: 4 }, 7, 0.25)], Some(1.0), Some(3));
        let text = String::from_utf8(results_csv(&recs).unwrap()).unwrap();
        assert_eq!(
            text,
            "method,V,seed,gamma,n_invalid,metric,value\nmodeiv,4,7,1,3,mse,0.25\nmodeiv,4,7,1,3,cate_abs_bias,0.025\n"
        );
    }

    #[test]
    fn report_groups_and_intervals() {
        let results = vec![
            result(Method::MeanEnsemble, 0, 1.0),
            result(Method::MeanEnsemble, 1, 3.0),
            result(Method::ModeIv { v: 4 }, 0, 0.5),
        ];
        let report = ExperimentReport::from_records(&records_from(&results, None, None)).unwrap();
        let mean = report.get("mean_ensemble", "mse").unwrap();
        assert_eq!((mean.mean, mean.n_replicates), (2.0, 2));
        assert!((mean.ci_half_width.unwrap() - 12.7062).abs() < 1e-3);
        let modal = report.get("modeiv_v4", "mse").unwrap();
        assert_eq!(modal.ci_half_width, None);
        let text = String::from_utf8(report.to_csv().unwrap()).unwrap();
        assert!(text.starts_with("method,metric,mean,ci_half_width,n_replicates\n"));
        assert!(text.contains("modeiv_v4,mse,0.5,,1\n"));
    }
}
