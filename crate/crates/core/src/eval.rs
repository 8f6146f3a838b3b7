//! Metrics, simple baselines, and the repeated-run benchmark harness with
//! its ablation variants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{compute_norm_stats, kfold_split, make_batch, standardized_features, Dataset};
use crate::error::{Error, Result};
use crate::mechanism::difference_residual;
use crate::model::{FusionConfig, Model, ModelConfig, NormStats, Provenance, TrunkConfig};
use crate::optim::{train, TrainConfig};
use crate::scalar::Scalar;
use crate::tape::Value;

/// Which interval limit a metric row refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limit {
    Lower,
    Upper,
}

impl fmt::Display for Limit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Limit::Lower => "lower",
            Limit::Upper => "upper",
        })
    }
}

/// Absolute and relative accuracy for one limit. Relative metrics are
/// undefined (None) when any true value is exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub rmsre: Option<f64>,
}

/// Accuracy plus the interval-consistency rate for the run that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    pub mape: Option<f64>,
    pub rmsre: Option<f64>,
    pub violation_rate: f64,
}

impl MetricSet {
    pub fn from_parts(acc: Accuracy, violation_rate: f64) -> Self {
        Self {
            rmse: acc.rmse,
            mae: acc.mae,
            mape: acc.mape,
            rmsre: acc.rmsre,
            violation_rate,
        }
    }

    pub fn value(&self, metric: &str) -> Option<f64> {
        match metric {
            "rmse" => Some(self.rmse),
            "mae" => Some(self.mae),
            "mape" => self.mape,
            "rmsre" => self.rmsre,
            "violation_rate" => Some(self.violation_rate),
            _ => None,
        }
    }
}

pub const METRIC_NAMES: [&str; 5] = ["rmse", "mae", "mape", "rmsre", "violation_rate"];

/// `rmse = √mean(e²)`, `mae = mean|e|`, `mape = mean|e/t|`,
/// `rmsre = √mean((e/t)²)`.
pub fn metrics(pred: &[f64], truth: &[f64]) -> Result<Accuracy> {
    if pred.is_empty() {
        return Err(Error::Contract("metrics need at least one sample".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "metrics got {} predictions for {} true values",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut rel_sq = 0.0;
    let mut rel_abs = 0.0;
    let mut relatives_defined = true;
    for (&p, &t) in pred.iter().zip(truth) {
        let e = p - t;
        sq += e * e;
        abs += e.abs();
        if t == 0.0 {
            relatives_defined = false;
        } else {
            let rel = e / t;
            rel_sq += rel * rel;
            rel_abs += rel.abs();
        }
    }
    let rmse = (sq / n).sqrt();
    let mae = abs / n;
    let (mape, rmsre) = if relatives_defined {
        (Some(rel_abs / n), Some((rel_sq / n).sqrt()))
    } else {
        (None, None)
    };

    // Power-mean ordering holds mathematically; allow rounding slack.
    assert!(rmse >= mae - 1e-12 * (1.0 + mae.abs()));
    if let (Some(mape), Some(rmsre)) = (mape, rmsre) {
        assert!(rmsre >= mape - 1e-12 * (1.0 + mape.abs()));
    }
    Ok(Accuracy {
        rmse,
        mae,
        mape,
        rmsre,
    })
}

/// Fraction of rows whose predicted interval is narrower than the gap
/// (`pred_u < pred_l + y_IG`, strictly).
pub fn violation_rate<S: Scalar>(preds: &[[S; 2]], y_ig: &[S]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    let violations = preds
        .iter()
        .zip(y_ig)
        .filter(|(p, &g)| difference_residual(p[0], p[1], g) > S::zero())
        .count();
    violations as f64 / preds.len() as f64
}

/// Unweighted k-nearest-neighbor regression on standardized features
/// (Euclidean distance; ties broken by training-row index).
pub fn knn_baseline<S: Scalar>(
    train_x: &Value<S>,
    train_y: &[[S; 2]],
    test_x: &Value<S>,
    k: usize,
) -> Result<Vec<[S; 2]>> {
    let (n_train, width) = train_x
        .shape2()
        .ok_or_else(|| Error::Shape("knn training features must be N×F".into()))?;
    let (n_test, test_width) = test_x
        .shape2()
        .ok_or_else(|| Error::Shape("knn query features must be N×F".into()))?;
    if width != test_width {
        return Err(Error::Shape(format!(
            "knn feature widths differ: {width} vs {test_width}"
        )));
    }
    if train_y.len() != n_train {
        return Err(Error::Contract("knn targets misaligned with features".into()));
    }
    if k == 0 || k > n_train {
        return Err(Error::Contract(format!(
            "k must be in 1..={n_train}, got {k}"
        )));
    }

    let mut out = Vec::with_capacity(n_test);
    for q in 0..n_test {
        let query = &test_x.data()[q * width..(q + 1) * width];
        let mut dist: Vec<(f64, usize)> = (0..n_train)
            .map(|r| {
                let row = &train_x.data()[r * width..(r + 1) * width];
                let d2: f64 = row
                    .iter()
                    .zip(query)
                    .map(|(&a, &b)| {
                        let d = (a - b).as_f64();
                        d * d
                    })
                    .sum();
                (d2, r)
            })
            .collect();
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut acc = [S::zero(); 2];
        for &(_, r) in dist.iter().take(k) {
            acc[0] += train_y[r][0];
            acc[1] += train_y[r][1];
        }
        let kf = S::of(k as f64);
        out.push([acc[0] / kf, acc[1] / kf]);
    }
    Ok(out)
}

/// Benchmark variants: the full model, the three single-module ablations,
/// the all-off network, and the non-neural baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoModule1,
    NoModule2,
    NoModule3,
    PlainDnn,
    Knn,
    AustinOnly,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::NoModule1,
        Variant::NoModule2,
        Variant::NoModule3,
        Variant::PlainDnn,
        Variant::Knn,
        Variant::AustinOnly,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoModule1 => "no_module1",
            Variant::NoModule2 => "no_module2",
            Variant::NoModule3 => "no_module3",
            Variant::PlainDnn => "plain_dnn",
            Variant::Knn => "knn",
            Variant::AustinOnly => "austin_only",
        }
    }

    fn uses_network(&self) -> bool {
        !matches!(self, Variant::Knn | Variant::AustinOnly)
    }

    fn uses_mechanism_node(&self) -> bool {
        matches!(self, Variant::Full | Variant::NoModule1 | Variant::NoModule3)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .iter()
            .find(|v| v.name() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}` (expected one of {:?})",
                    Variant::ALL.map(|v| v.name())
                ))
            })
    }
}

/// Model configuration for a network variant.
pub fn variant_model_config(
    variant: Variant,
    fusion: &FusionConfig,
    trunk: &TrunkConfig,
    stats: NormStats,
    seed: u64,
) -> ModelConfig {
    let mut trunk = trunk.clone();
    trunk.use_mechanism_node = variant.uses_mechanism_node();
    ModelConfig {
        fusion: fusion.clone(),
        trunk,
        use_fusion: matches!(
            variant,
            Variant::Full | Variant::NoModule2 | Variant::NoModule3
        ),
        seed,
        norm_stats: stats,
    }
}

/// Loss weights for a network variant (module 3 off means both zero).
pub fn variant_train_config(variant: Variant, base: &TrainConfig, seed: u64) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.seed = seed;
    if matches!(variant, Variant::NoModule3 | Variant::PlainDnn) {
        cfg.loss = crate::loss::LossWeights::data_only();
    }
    cfg
}

/// Benchmark settings; the defaults reproduce the experimental protocol
/// (ten seeds over ten fold rotations, all seven variants).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub fusion: FusionConfig,
    pub trunk: TrunkConfig,
    pub variants: Vec<Variant>,
    pub seeds: Vec<u64>,
    pub knn_k: usize,
    pub split_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            fusion: FusionConfig::default(),
            trunk: TrunkConfig::default(),
            variants: Variant::ALL.to_vec(),
            seeds: (0..10).collect(),
            knn_k: 5,
            split_seed: 0,
        }
    }
}

/// One (variant, limit, seed) measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCell {
    pub variant: Variant,
    pub limit: Limit,
    pub seed: u64,
    pub metrics: MetricSet,
}

/// Five-number summary of one metric across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: Variant,
    pub limit: Limit,
    pub metric: String,
    pub min: Option<f64>,
    pub q1: Option<f64>,
    pub median: Option<f64>,
    pub q3: Option<f64>,
    pub max: Option<f64>,
}

/// Full per-seed metric table plus box-plot summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub cells: Vec<EvalCell>,
    pub summary: Vec<SummaryRow>,
}

impl EvalReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Median of a metric over seeds for one (variant, limit).
    pub fn median(&self, variant: Variant, limit: Limit, metric: &str) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.variant == variant && s.limit == limit && s.metric == metric)
            .and_then(|s| s.median)
    }

    /// Flat CSV: variant,limit,seed,metric,value.
    pub fn write_cells_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.provenance.comment_line())?;
        writeln!(w, "variant,limit,seed,metric,value")?;
        for cell in &self.cells {
            for metric in METRIC_NAMES {
                let value = cell
                    .metrics
                    .value(metric)
                    .map(|v| format!("{v}"))
                    .unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    cell.variant, cell.limit, cell.seed, metric, value
                )?;
            }
        }
        Ok(())
    }

    /// Box-plot CSV: variant,limit,metric,min,q1,median,q3,max.
    pub fn write_summary_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.provenance.comment_line())?;
        writeln!(w, "variant,limit,metric,min,q1,median,q3,max")?;
        let fmt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        for row in &self.summary {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                row.variant,
                row.limit,
                row.metric,
                fmt(row.min),
                fmt(row.q1),
                fmt(row.median),
                fmt(row.q3),
                fmt(row.max)
            )?;
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of pre-sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn summarize(cells: &[EvalCell], variant: Variant, limit: Limit, metric: &str) -> SummaryRow {
    let mut values: Vec<f64> = cells
        .iter()
        .filter(|c| c.variant == variant && c.limit == limit)
        .filter_map(|c| c.metrics.value(metric))
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let get = |p: f64| {
        if values.is_empty() {
            None
        } else {
            Some(quantile(&values, p))
        }
    };
    SummaryRow {
        variant,
        limit,
        metric: metric.to_string(),
        min: get(0.0),
        q1: get(0.25),
        median: get(0.5),
        q3: get(0.75),
        max: get(1.0),
    }
}

/// Run every requested (variant, seed) cell: seed `r` trains on fold
/// rotation `r mod 10`, evaluates on that rotation's test fold, and the
/// report collects per-cell metrics plus box-plot summaries.
pub fn run_experiment<S: Scalar>(ds: &Dataset<S>, cfg: &ExperimentConfig) -> Result<EvalReport> {
    if cfg.variants.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::Config("benchmark needs at least one variant and one seed".into()));
    }
    if ds.is_empty() {
        return Err(Error::Contract("benchmark dataset is empty".into()));
    }
    cfg.train.validate()?;
    let plans = kfold_split(ds.len(), cfg.split_seed)?;

    let mut cells = Vec::new();
    for &variant in &cfg.variants {
        for &seed in &cfg.seeds {
            let plan = &plans[(seed % plans.len() as u64) as usize];
            let stats = compute_norm_stats(ds, &plan.train)?;

            let preds: Vec<[S; 2]> = if variant.uses_network() {
                let with_ym = variant.uses_mechanism_node();
                let train_batch = make_batch(ds, &stats, &plan.train, with_ym)?;
                let val_batch = make_batch(ds, &stats, &plan.validation, with_ym)?;
                let test_batch = make_batch(ds, &stats, &plan.test, with_ym)?;
                let model_cfg = variant_model_config(
                    variant,
                    &cfg.fusion,
                    &cfg.trunk,
                    stats.clone(),
                    seed,
                );
                let train_cfg = variant_train_config(variant, &cfg.train, seed);
                let model = Model::<S>::init(model_cfg, ds.manifest().clone())?;
                let outcome = train(model, &train_batch, &val_batch, &train_cfg)?;
                test_batch.predict(&outcome.model)?
            } else if variant == Variant::Knn {
                let train_x = standardized_features(ds, &stats, &plan.train)?;
                let test_x = standardized_features(ds, &stats, &plan.test)?;
                let train_y: Vec<[S; 2]> =
                    plan.train.iter().map(|&r| ds.targets()[r]).collect();
                knn_baseline(&train_x, &train_y, &test_x, cfg.knn_k)?
            } else {
                // Austin only: the mechanism result bounds the interval
                // from below, plus the operation-plan gap for the upper.
                let ym = ds.austin_lengths(&plan.test)?;
                ym.iter()
                    .zip(plan.test.iter().map(|&r| ds.y_ig()[r]))
                    .map(|(&y, g)| [y, y + g])
                    .collect()
            };

            let truth: Vec<[S; 2]> = plan.test.iter().map(|&r| ds.targets()[r]).collect();
            let gaps: Vec<S> = plan.test.iter().map(|&r| ds.y_ig()[r]).collect();
            let vrate = violation_rate(&preds, &gaps);
            for (idx, limit) in [(0usize, Limit::Lower), (1usize, Limit::Upper)] {
                let p: Vec<f64> = preds.iter().map(|row| row[idx].as_f64()).collect();
                let t: Vec<f64> = truth.iter().map(|row| row[idx].as_f64()).collect();
                let acc = metrics(&p, &t)?;
                cells.push(EvalCell {
                    variant,
                    limit,
                    seed,
                    metrics: MetricSet::from_parts(acc, vrate),
                });
            }
        }
    }

    let mut summary = Vec::new();
    for &variant in &cfg.variants {
        for limit in [Limit::Lower, Limit::Upper] {
            for metric in METRIC_NAMES {
                summary.push(summarize(&cells, variant, limit, metric));
            }
        }
    }

    Ok(EvalReport {
        provenance: Provenance::new(cfg.split_seed, cfg),
        seeds: cfg.seeds.clone(),
        variants: cfg.variants.clone(),
        cells,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_synthetic;
    use crate::optim::AdamConfig;

    #[test]
    fn metrics_hand_cases() {
        let zero = metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(zero.rmse, 0.0);
        assert_eq!(zero.mae, 0.0);
        assert_eq!(zero.mape, Some(0.0));
        assert_eq!(zero.rmsre, Some(0.0));

        let one = metrics(&[110.0], &[100.0]).unwrap();
        assert!((one.rmse - 10.0).abs() < 1e-12);
        assert!((one.mae - 10.0).abs() < 1e-12);
        assert!((one.mape.unwrap() - 0.10).abs() < 1e-12);
        assert!((one.rmsre.unwrap() - 0.10).abs() < 1e-12);

        let two = metrics(&[3.0, 4.0], &[1.0, 1.0]).unwrap();
        assert!((two.rmse - 6.5_f64.sqrt()).abs() < 1e-12);
        assert!((two.mae - 2.5).abs() < 1e-12);
    }

    #[test]
    fn zero_truth_disables_relative_metrics() {
        let m = metrics(&[1.0, 2.0], &[0.0, 4.0]).unwrap();
        assert!(m.mape.is_none());
        assert!(m.rmsre.is_none());
        assert!(m.rmse > 0.0);
    }

    #[test]
    fn metrics_reject_empty_input() {
        assert!(matches!(metrics(&[], &[]), Err(Error::Contract(_))));
    }

    #[test]
    fn knn_exact_match_and_global_mean() {
        let train_x: Value<f64> = Value::matrix(
            3,
            2,
            vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let train_y = [[10.0, 12.0], [20.0, 24.0], [30.0, 36.0]];

        // k=1 on a training row reproduces its targets exactly.
        let q = Value::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let p = knn_baseline(&train_x, &train_y, &q, 1).unwrap();
        assert_eq!(p[0], [20.0, 24.0]);

        // k = train size averages everything for any query.
        let q = Value::matrix(1, 2, vec![9.0, -3.0]).unwrap();
        let p = knn_baseline(&train_x, &train_y, &q, 3).unwrap();
        assert!((p[0][0] - 20.0).abs() < 1e-12);
        assert!((p[0][1] - 24.0).abs() < 1e-12);

        assert!(knn_baseline(&train_x, &train_y, &q, 4).is_err());
        assert!(knn_baseline(&train_x, &train_y, &q, 0).is_err());
    }

    #[test]
    fn knn_matches_brute_force_oracle() {
        // 3-point instance, k=2: the two closest by hand are rows 0 and 2.
        let train_x: Value<f64> = Value::matrix(3, 1, vec![0.0, 5.0, 1.0]).unwrap();
        let train_y = [[1.0, 2.0], [100.0, 200.0], [3.0, 6.0]];
        let q = Value::matrix(1, 1, vec![0.4]).unwrap();
        let p = knn_baseline(&train_x, &train_y, &q, 2).unwrap();
        assert!((p[0][0] - 2.0).abs() < 1e-12);
        assert!((p[0][1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::from_str(v.name()).unwrap(), v);
        }
        assert!(Variant::from_str("bogus").is_err());
    }

    fn tiny_experiment_config() -> ExperimentConfig {
        ExperimentConfig {
            train: TrainConfig {
                epochs: 30,
                adam: AdamConfig {
                    learning_rate: 3e-3,
                    ..AdamConfig::default()
                },
                ..TrainConfig::default()
            },
            fusion: FusionConfig {
                extractor_widths: [4, 3, 3, 2],
                fusion_width: 6,
                dropout_rate: 0.1,
            },
            trunk: TrunkConfig {
                hidden_widths: vec![8, 5],
                use_mechanism_node: true,
            },
            variants: vec![Variant::Full, Variant::Knn, Variant::AustinOnly],
            seeds: vec![0, 1],
            knn_k: 5,
            split_seed: 0,
        }
    }

    #[test]
    fn experiment_produces_expected_cells_and_austin_never_violates() {
        let ds = generate_synthetic::<f64>(60, 0, 0.05).unwrap();
        let cfg = tiny_experiment_config();
        let report = run_experiment(&ds, &cfg).unwrap();
        // 3 variants × 2 limits × 2 seeds.
        assert_eq!(report.cells.len(), 12);
        for cell in &report.cells {
            if cell.variant == Variant::AustinOnly {
                assert_eq!(cell.metrics.violation_rate, 0.0);
            }
        }
        // Summary exists for each variant/limit/metric combination.
        assert_eq!(report.summary.len(), 3 * 2 * 5);
    }

    #[test]
    fn experiment_report_is_deterministic() {
        let ds = generate_synthetic::<f64>(60, 1, 0.05).unwrap();
        let cfg = tiny_experiment_config();
        let a = run_experiment(&ds, &cfg).unwrap().to_json_string();
        let b = run_experiment(&ds, &cfg).unwrap().to_json_string();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_variant_is_a_config_error() {
        assert!(matches!(
            Variant::from_str("no_module4"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn no_module3_history_total_equals_data_term() {
        use crate::data::make_batch;
        let ds = generate_synthetic::<f64>(40, 2, 0.05).unwrap();
        let plans = kfold_split(ds.len(), 0).unwrap();
        let plan = &plans[0];
        let stats = compute_norm_stats(&ds, &plan.train).unwrap();
        let train_batch = make_batch(&ds, &stats, &plan.train, true).unwrap();
        let val_batch = make_batch(&ds, &stats, &plan.validation, true).unwrap();
        let model_cfg = variant_model_config(
            Variant::NoModule3,
            &tiny_experiment_config().fusion,
            &tiny_experiment_config().trunk,
            stats,
            0,
        );
        let train_cfg = variant_train_config(
            Variant::NoModule3,
            &tiny_experiment_config().train,
            0,
        );
        let model = Model::<f64>::init(model_cfg, ds.manifest().clone()).unwrap();
        let out = train(model, &train_batch, &val_batch, &train_cfg).unwrap();
        for rec in &out.history {
            assert_eq!(rec.total.to_bits(), rec.l_data.to_bits());
        }
    }

    #[test]
    fn quartile_summary_matches_hand_case() {
        let cells: Vec<EvalCell> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| EvalCell {
                variant: Variant::Knn,
                limit: Limit::Lower,
                seed: i as u64,
                metrics: MetricSet {
                    rmse: v,
                    mae: v,
                    mape: None,
                    rmsre: None,
                    violation_rate: 0.0,
                },
            })
            .collect();
        let row = summarize(&cells, Variant::Knn, Limit::Lower, "rmse");
        assert_eq!(row.min, Some(1.0));
        assert_eq!(row.q1, Some(1.75));
        assert_eq!(row.median, Some(2.5));
        assert_eq!(row.q3, Some(3.25));
        assert_eq!(row.max, Some(4.0));
        // Undefined metrics summarize to empty.
        let empty = summarize(&cells, Variant::Knn, Limit::Lower, "mape");
        assert_eq!(empty.median, None);
    }
}
