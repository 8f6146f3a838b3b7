//! Dataset schema, CSV ingestion, preprocessing, standardization, k-fold
//! splitting, and the physics-consistent synthetic generator that stands in
//! for the proprietary SCADA data.
//!
//! CSV layout: UTF-8, header row, `.` decimal separator; columns are the
//! manifest features (group order, then column order) followed by
//! `y_l, y_u, q_min, t_delay`. Lines starting with `#` are comments.

use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::mechanism::{
    austin_length, interval_gap, FlowState, OperationPlan, PipeSpec,
};
use crate::model::{ModalityManifest, Model, NormStats, Provenance};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tape::Value;

/// Column names required beyond the manifest features.
pub const TARGET_COLUMNS: [&str; 4] = ["y_l", "y_u", "q_min", "t_delay"];

/// Feature columns the mechanism formulas read.
pub const DIAMETER_COLUMN: &str = "diameter";
pub const LENGTH_COLUMN: &str = "length";
pub const REYNOLDS_COLUMN: &str = "reynolds";

/// Rows whose feature z-score exceeds this are dropped by `preprocess`.
pub const OUTLIER_Z: f64 = 4.0;

/// A column counts as constant when its spread is at rounding-noise level.
fn effectively_constant(std: f64, mean: f64) -> bool {
    std <= 1e-12 * (1.0 + mean.abs())
}

/// Manifest-grouped feature matrix plus per-row targets and interval gaps.
/// Missing cells are NaN until `preprocess` removes their rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    manifest: ModalityManifest,
    columns: Vec<String>,
    features: Vec<S>,
    targets: Vec<[S; 2]>,
    q_min: Vec<S>,
    t_delay: Vec<S>,
    y_ig: Vec<S>,
}

/// Dropped-row accounting from `preprocess`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessReport {
    pub rows_in: usize,
    pub missing_dropped: usize,
    pub outlier_dropped: usize,
    pub rows_out: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn manifest(&self) -> &ModalityManifest {
        &self.manifest
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.columns.len()
    }

    pub fn feature(&self, row: usize, col: usize) -> S {
        self.features[row * self.columns.len() + col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn targets(&self) -> &[[S; 2]] {
        &self.targets
    }

    pub fn y_ig(&self) -> &[S] {
        &self.y_ig
    }

    pub fn q_min(&self) -> &[S] {
        &self.q_min
    }

    pub fn t_delay(&self) -> &[S] {
        &self.t_delay
    }

    /// Direct mutable feature access; exists for leakage tests and tooling.
    pub fn feature_mut(&mut self, row: usize, col: usize) -> &mut S {
        &mut self.features[row * self.columns.len() + col]
    }

    fn row_has_missing(&self, row: usize) -> bool {
        let width = self.columns.len();
        self.features[row * width..(row + 1) * width]
            .iter()
            .any(|x| x.is_nan())
            || self.targets[row].iter().any(|x| x.is_nan())
            || self.q_min[row].is_nan()
            || self.t_delay[row].is_nan()
    }

    fn keep_rows(&self, keep: &[usize]) -> Dataset<S> {
        let width = self.columns.len();
        let mut features = Vec::with_capacity(keep.len() * width);
        for &r in keep {
            features.extend_from_slice(&self.features[r * width..(r + 1) * width]);
        }
        Dataset {
            manifest: self.manifest.clone(),
            columns: self.columns.clone(),
            features,
            targets: keep.iter().map(|&r| self.targets[r]).collect(),
            q_min: keep.iter().map(|&r| self.q_min[r]).collect(),
            t_delay: keep.iter().map(|&r| self.t_delay[r]).collect(),
            y_ig: keep.iter().map(|&r| self.y_ig[r]).collect(),
        }
    }

    /// Drop rows with missing cells, then rows where any feature sits more
    /// than `OUTLIER_Z` standard deviations from its column mean (computed
    /// on the post-missing rows).
    pub fn preprocess(&self) -> Result<(Dataset<S>, PreprocessReport)> {
        let rows_in = self.len();
        let complete: Vec<usize> = (0..rows_in).filter(|&r| !self.row_has_missing(r)).collect();
        let missing_dropped = rows_in - complete.len();
        if complete.is_empty() {
            return Err(Error::Data("all rows dropped: every row has missing cells".into()));
        }

        let width = self.columns.len();
        let nc = complete.len() as f64;
        let mut keep = Vec::with_capacity(complete.len());
        let mut is_outlier = vec![false; complete.len()];
        for c in 0..width {
            let mut mean = 0.0;
            for &r in &complete {
                mean += self.feature(r, c).as_f64();
            }
            mean /= nc;
            let mut var = 0.0;
            for &r in &complete {
                let d = self.feature(r, c).as_f64() - mean;
                var += d * d;
            }
            let std = (var / nc).sqrt();
            if effectively_constant(std, mean) {
                continue;
            }
            for (i, &r) in complete.iter().enumerate() {
                if ((self.feature(r, c).as_f64() - mean) / std).abs() > OUTLIER_Z {
                    is_outlier[i] = true;
                }
            }
        }
        for (i, &r) in complete.iter().enumerate() {
            if !is_outlier[i] {
                keep.push(r);
            }
        }
        let outlier_dropped = complete.len() - keep.len();
        if keep.is_empty() {
            return Err(Error::Data("all rows dropped: every complete row is an outlier".into()));
        }
        let out = self.keep_rows(&keep);
        Ok((
            out,
            PreprocessReport {
                rows_in,
                missing_dropped,
                outlier_dropped,
                rows_out: keep.len(),
            },
        ))
    }

    /// Austin-formula result per row, from the diameter/length/reynolds
    /// feature columns.
    pub fn austin_lengths(&self, rows: &[usize]) -> Result<Vec<S>> {
        let d = self
            .column_index(DIAMETER_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{DIAMETER_COLUMN}`")))?;
        let l = self
            .column_index(LENGTH_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{LENGTH_COLUMN}`")))?;
        let re = self
            .column_index(REYNOLDS_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{REYNOLDS_COLUMN}`")))?;
        rows.iter()
            .map(|&r| {
                let pipe = PipeSpec::new(self.feature(r, d), self.feature(r, l))?;
                let flow = FlowState::new(self.feature(r, re))?;
                Ok(austin_length(&pipe, &flow))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W, provenance: Option<&Provenance>) -> Result<()> {
        if let Some(p) = provenance {
            writeln!(w, "{}", p.comment_line())?;
        }
        let mut header: Vec<&str> = self.columns.iter().map(String::as_str).collect();
        header.extend(TARGET_COLUMNS);
        writeln!(w, "{}", header.join(","))?;
        let width = self.columns.len();
        for r in 0..self.len() {
            let mut cells: Vec<String> = (0..width)
                .map(|c| format_cell(self.feature(r, c)))
                .collect();
            cells.push(format_cell(self.targets[r][0]));
            cells.push(format_cell(self.targets[r][1]));
            cells.push(format_cell(self.q_min[r]));
            cells.push(format_cell(self.t_delay[r]));
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, provenance: Option<&Provenance>) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, provenance).expect("write to Vec");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn save_csv(&self, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file), provenance)
    }
}

fn format_cell<S: Scalar>(x: S) -> String {
    if x.is_nan() {
        String::new()
    } else {
        // Shortest representation that reparses to the same f64.
        format!("{}", x.as_f64())
    }
}

/// Parse a dataset from CSV. The header must contain every manifest column
/// plus `y_l, y_u, q_min, t_delay` (extra columns are ignored); empty cells
/// are treated as missing and survive until `preprocess`.
pub fn read_csv<S: Scalar, R: Read>(reader: R, manifest: &ModalityManifest) -> Result<Dataset<S>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let header = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let columns: Vec<String> = manifest.columns().iter().map(|s| s.to_string()).collect();
    let feature_idx: Vec<usize> = columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let special_idx: Vec<usize> = TARGET_COLUMNS
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut q_min = Vec::new();
    let mut t_delay = Vec::new();
    let mut y_ig = Vec::new();

    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(csv::Position::line)
            .unwrap_or_default();
        let parse = |idx: usize| -> Result<f64> {
            let cell = record.get(idx).unwrap_or("");
            if cell.is_empty() {
                return Ok(f64::NAN);
            }
            cell.parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("cannot parse `{cell}` in column `{}`", &header[idx]),
            })
        };

        for &idx in &feature_idx {
            features.push(S::of(parse(idx)?));
        }
        let y_l = parse(special_idx[0])?;
        let y_u = parse(special_idx[1])?;
        let q = parse(special_idx[2])?;
        let t = parse(special_idx[3])?;

        let complete = !(y_l.is_nan() || y_u.is_nan() || q.is_nan() || t.is_nan());
        if complete {
            if y_u < y_l {
                return Err(Error::Data(format!(
                    "line {line}: upper limit {y_u} is below lower limit {y_l}"
                )));
            }
            let plan = OperationPlan::new(q, t)
                .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
            y_ig.push(S::of(interval_gap(&plan)));
        } else {
            y_ig.push(S::nan());
        }
        targets.push([S::of(y_l), S::of(y_u)]);
        q_min.push(S::of(q));
        t_delay.push(S::of(t));
    }

    Ok(Dataset {
        manifest: manifest.clone(),
        columns,
        features,
        targets,
        q_min,
        t_delay,
        y_ig,
    })
}

pub fn load_csv<S: Scalar>(path: &Path, manifest: &ModalityManifest) -> Result<Dataset<S>> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file), manifest)
}

/// Feature-only rows (raw, unstandardized), aligned with a manifest; the
/// input side of `predict`.
#[derive(Debug, Clone)]
pub struct FeatureTable<S> {
    columns: Vec<String>,
    values: Vec<S>,
    rows: usize,
}

impl<S: Scalar> FeatureTable<S> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn value(&self, row: usize, col: usize) -> S {
        self.values[row * self.columns.len() + col]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Z-score with (training) statistics from a checkpoint.
    pub fn standardized(&self, stats: &NormStats) -> Result<Value<S>> {
        stats.validate(self.columns.len())?;
        let width = self.columns.len();
        let data = (0..self.rows * width)
            .map(|i| {
                let c = i % width;
                S::of((self.values[i].as_f64() - stats.feature_mean[c]) / stats.feature_std[c])
            })
            .collect();
        Value::matrix(self.rows, width, data)
    }

    pub fn austin_lengths(&self) -> Result<Vec<S>> {
        let d = self
            .column_index(DIAMETER_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{DIAMETER_COLUMN}`")))?;
        let l = self
            .column_index(LENGTH_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{LENGTH_COLUMN}`")))?;
        let re = self
            .column_index(REYNOLDS_COLUMN)
            .ok_or_else(|| Error::Schema(format!("missing column `{REYNOLDS_COLUMN}`")))?;
        (0..self.rows)
            .map(|r| {
                let pipe = PipeSpec::new(self.value(r, d), self.value(r, l))?;
                let flow = FlowState::new(self.value(r, re))?;
                Ok(austin_length(&pipe, &flow))
            })
            .collect()
    }
}

/// Parse prediction input: every manifest column must be present and every
/// cell must parse (there is no preprocessing pass to absorb gaps here).
pub fn read_features_csv<S: Scalar, R: Read>(
    reader: R,
    manifest: &ModalityManifest,
) -> Result<FeatureTable<S>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let columns: Vec<String> = manifest.columns().iter().map(|s| s.to_string()).collect();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == c)
                .ok_or_else(|| Error::Schema(format!("missing column `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = Vec::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record
            .position()
            .map(csv::Position::line)
            .unwrap_or_default();
        for &i in &idx {
            let cell = record.get(i).unwrap_or("");
            let parsed: f64 = if cell.is_empty() {
                return Err(Error::Parse {
                    line,
                    msg: format!("empty cell in column `{}`", &header[i]),
                });
            } else {
                cell.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("cannot parse `{cell}` in column `{}`", &header[i]),
                })?
            };
            values.push(S::of(parsed));
        }
        rows += 1;
    }
    Ok(FeatureTable {
        columns,
        values,
        rows,
    })
}

/// Fold assignment for one rotation of the 80/10/10 protocol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub rotation: usize,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

pub const FOLD_COUNT: usize = 10;

/// Shuffle the row indices and partition them into 10 near-equal folds;
/// rotation `r` tests on fold `r`, validates on fold `r+1 (mod 10)` and
/// trains on the rest.
pub fn kfold_split(n: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    if n < FOLD_COUNT {
        return Err(Error::Contract(format!(
            "k-fold needs at least {FOLD_COUNT} rows, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);

    let base = n / FOLD_COUNT;
    let rem = n % FOLD_COUNT;
    let mut folds: Vec<Vec<usize>> = Vec::with_capacity(FOLD_COUNT);
    let mut start = 0;
    for f in 0..FOLD_COUNT {
        let size = base + usize::from(f < rem);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }

    Ok((0..FOLD_COUNT)
        .map(|r| {
            let val_fold = (r + 1) % FOLD_COUNT;
            let mut train: Vec<usize> = (0..FOLD_COUNT)
                .filter(|&f| f != r && f != val_fold)
                .flat_map(|f| folds[f].iter().copied())
                .collect();
            let mut validation = folds[val_fold].clone();
            let mut test = folds[r].clone();
            train.sort_unstable();
            validation.sort_unstable();
            test.sort_unstable();
            SplitPlan {
                rotation: r,
                train,
                validation,
                test,
            }
        })
        .collect())
}

/// Per-feature and per-target statistics from the given rows only (population
/// moments). Rejects constant columns; also derives the Austin-node scale.
pub fn compute_norm_stats<S: Scalar>(ds: &Dataset<S>, rows: &[usize]) -> Result<NormStats> {
    if rows.is_empty() {
        return Err(Error::Contract("cannot compute statistics on zero rows".into()));
    }
    let n = rows.len() as f64;
    let width = ds.feature_count();
    let mut feature_mean = vec![0.0; width];
    let mut feature_std = vec![0.0; width];
    for c in 0..width {
        let mut mean = 0.0;
        for &r in rows {
            mean += ds.feature(r, c).as_f64();
        }
        mean /= n;
        let mut var = 0.0;
        for &r in rows {
            let d = ds.feature(r, c).as_f64() - mean;
            var += d * d;
        }
        let std = (var / n).sqrt();
        if effectively_constant(std, mean) {
            return Err(Error::Data(format!(
                "column `{}` is constant on the training rows",
                ds.columns()[c]
            )));
        }
        feature_mean[c] = mean;
        feature_std[c] = std;
    }

    let moments = |values: &mut dyn Iterator<Item = f64>| -> (f64, f64) {
        let vals: Vec<f64> = values.collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        (mean, var.sqrt())
    };
    let (mean_l, std_l) = moments(&mut rows.iter().map(|&r| ds.targets()[r][0].as_f64()));
    let (mean_u, std_u) = moments(&mut rows.iter().map(|&r| ds.targets()[r][1].as_f64()));
    if effectively_constant(std_l, mean_l) || effectively_constant(std_u, mean_u) {
        return Err(Error::Data("target columns are constant on the training rows".into()));
    }

    let ym = ds.austin_lengths(rows)?;
    let (ym_mean, ym_std) = moments(&mut ym.iter().map(|y| y.as_f64()));
    if effectively_constant(ym_std, ym_mean) {
        return Err(Error::Data("Austin results are constant on the training rows".into()));
    }

    Ok(NormStats {
        feature_mean,
        feature_std,
        target_mean: [mean_l, mean_u],
        target_std: [std_l, std_u],
        ym_mean,
        ym_std,
    })
}

/// Z-score the selected rows with training statistics.
pub fn standardized_features<S: Scalar>(
    ds: &Dataset<S>,
    stats: &NormStats,
    rows: &[usize],
) -> Result<Value<S>> {
    stats.validate(ds.feature_count())?;
    let width = ds.feature_count();
    let mut data = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        for c in 0..width {
            let z = (ds.feature(r, c).as_f64() - stats.feature_mean[c]) / stats.feature_std[c];
            data.push(S::of(z));
        }
    }
    Value::matrix(rows.len(), width, data)
}

/// One prepared split: standardized features, targets in meters, per-row
/// interval gaps, and (when requested) the raw Austin results.
#[derive(Debug, Clone)]
pub struct Batch<S> {
    pub features: Value<S>,
    pub targets: Value<S>,
    pub y_ig: Vec<S>,
    pub ym: Option<Vec<S>>,
}

impl<S: Scalar> Batch<S> {
    pub fn len(&self) -> usize {
        self.features.shape2().map(|(n, _)| n).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Batch<S> {
        let (_, width) = self.features.shape2().expect("features are N×F");
        let mut features = Vec::with_capacity(rows.len() * width);
        let mut targets = Vec::with_capacity(rows.len() * 2);
        for &r in rows {
            features.extend_from_slice(&self.features.data()[r * width..(r + 1) * width]);
            targets.extend_from_slice(&self.targets.data()[r * 2..(r + 1) * 2]);
        }
        Batch {
            features: Value::matrix(rows.len(), width, features).expect("consistent"),
            targets: Value::matrix(rows.len(), 2, targets).expect("consistent"),
            y_ig: rows.iter().map(|&r| self.y_ig[r]).collect(),
            ym: self
                .ym
                .as_ref()
                .map(|ym| rows.iter().map(|&r| ym[r]).collect()),
        }
    }

    /// Eval-mode predictions in meters.
    pub fn predict(&self, model: &Model<S>) -> Result<Vec<[S; 2]>> {
        model.predict(&self.features, self.ym.as_deref())
    }
}

/// Standardize the selected rows into a ready-to-train batch.
pub fn make_batch<S: Scalar>(
    ds: &Dataset<S>,
    stats: &NormStats,
    rows: &[usize],
    with_ym: bool,
) -> Result<Batch<S>> {
    let features = standardized_features(ds, stats, rows)?;
    let mut targets = Vec::with_capacity(rows.len() * 2);
    for &r in rows {
        targets.push(ds.targets()[r][0]);
        targets.push(ds.targets()[r][1]);
    }
    Ok(Batch {
        features,
        targets: Value::matrix(rows.len(), 2, targets)?,
        y_ig: rows.iter().map(|&r| ds.y_ig()[r]).collect(),
        ym: if with_ym {
            Some(ds.austin_lengths(rows)?)
        } else {
            None
        },
    })
}

// ---------------------------------------------------------------------------
// Synthetic generator.
// ---------------------------------------------------------------------------

/// Relative amplitude of the nonlinear feature mixing on the lower limit.
pub const GEN_ALPHA: f64 = 0.3;

/// Fixed operational cutting delay, minutes.
pub const GEN_T_DELAY: f64 = 5.0;

const R_FLOW: (f64, f64) = (200.0, 2000.0);
const R_REYNOLDS: (f64, f64) = (5e3, 5e5);
const R_OIL_TEMP: (f64, f64) = (5.0, 45.0);
const R_PRESSURE: (f64, f64) = (1.0, 8.0);
const R_MEAN_VISC: (f64, f64) = (1.5, 12.0);
const R_DIAMETER: (f64, f64) = (0.2, 0.6);
const R_LENGTH: (f64, f64) = (1e4, 2e5);
const R_ELEVATION: (f64, f64) = (-150.0, 150.0);
const R_ROUGHNESS: (f64, f64) = (0.01, 0.08);
const R_DENSITY: (f64, f64) = (715.0, 860.0);
const R_VISC: (f64, f64) = (1.0, 12.0);
const R_MIX0: (f64, f64) = (0.0, 250.0);
const R_VOLUME: (f64, f64) = (1e3, 4e4);
const R_INJ_TEMP: (f64, f64) = (5.0, 45.0);
const R_QMIN_FRAC: (f64, f64) = (0.45, 0.55);
const R_QACT_FRAC: (f64, f64) = (1.8, 2.45);

/// The default 16-feature schema.
pub fn default_manifest() -> ModalityManifest {
    let mut groups = IndexMap::new();
    groups.insert(
        "hydrothermal".to_string(),
        ["flow_rate", "reynolds", "oil_temperature", "pressure", "mean_viscosity"]
            .map(String::from)
            .to_vec(),
    );
    groups.insert(
        "pipeline".to_string(),
        ["diameter", "length", "elevation_diff", "roughness"]
            .map(String::from)
            .to_vec(),
    );
    groups.insert(
        "product_properties".to_string(),
        ["density_a", "density_b", "viscosity_a", "viscosity_b"]
            .map(String::from)
            .to_vec(),
    );
    groups.insert(
        "initial_condition".to_string(),
        ["initial_mix_length", "upstream_batch_volume", "injection_temp"]
            .map(String::from)
            .to_vec(),
    );
    ModalityManifest::new(groups).expect("default manifest is valid")
}

fn unit_span(x: f64, range: (f64, f64)) -> f64 {
    2.0 * (x - range.0) / (range.1 - range.0) - 1.0
}

/// Fixed smooth nonlinear mixing of the non-Austin features, in (-1, 1);
/// this is the signal the fusion network has to learn on top of the Austin
/// baseline. Recomputable from the feature row alone.
pub fn feature_mixing(row: &GeneratedFeatures) -> f64 {
    let z_flow = unit_span(row.flow_rate, R_FLOW);
    let z_temp = unit_span(row.oil_temperature, R_OIL_TEMP);
    let z_press = unit_span(row.pressure, R_PRESSURE);
    let z_mvisc = unit_span(row.mean_viscosity, R_MEAN_VISC);
    let z_elev = unit_span(row.elevation_diff, R_ELEVATION);
    let z_rough = unit_span(row.roughness, R_ROUGHNESS);
    let z_densa = unit_span(row.density_a, R_DENSITY);
    let z_densb = unit_span(row.density_b, R_DENSITY);
    let z_visca = unit_span(row.viscosity_a, R_VISC);
    let z_viscb = unit_span(row.viscosity_b, R_VISC);
    let z_mix0 = unit_span(row.initial_mix_length, R_MIX0);
    let z_vol = unit_span(row.upstream_batch_volume, R_VOLUME);
    let z_injt = unit_span(row.injection_temp, R_INJ_TEMP);

    (0.9 * z_temp * z_mvisc + 0.7 * z_press - 0.6 * z_densa * z_flow + 0.6 * z_mix0
        - 0.45 * z_densb
        + 0.35 * z_rough * z_elev
        + 0.5 * z_visca * z_vol
        - 0.3 * z_injt
        + 0.4 * z_viscb * z_flow)
        .tanh()
}

/// One generated feature row, in generation order.
#[derive(Debug, Clone, Copy)]
pub struct GeneratedFeatures {
    pub flow_rate: f64,
    pub reynolds: f64,
    pub oil_temperature: f64,
    pub pressure: f64,
    pub mean_viscosity: f64,
    pub diameter: f64,
    pub length: f64,
    pub elevation_diff: f64,
    pub roughness: f64,
    pub density_a: f64,
    pub density_b: f64,
    pub viscosity_a: f64,
    pub viscosity_b: f64,
    pub initial_mix_length: f64,
    pub upstream_batch_volume: f64,
    pub injection_temp: f64,
}

impl GeneratedFeatures {
    fn draw(rng: &mut Rng) -> Self {
        Self {
            flow_rate: rng.uniform(R_FLOW.0, R_FLOW.1),
            reynolds: rng.log_uniform(R_REYNOLDS.0, R_REYNOLDS.1),
            oil_temperature: rng.uniform(R_OIL_TEMP.0, R_OIL_TEMP.1),
            pressure: rng.uniform(R_PRESSURE.0, R_PRESSURE.1),
            mean_viscosity: rng.uniform(R_MEAN_VISC.0, R_MEAN_VISC.1),
            diameter: rng.uniform(R_DIAMETER.0, R_DIAMETER.1),
            length: rng.uniform(R_LENGTH.0, R_LENGTH.1),
            elevation_diff: rng.uniform(R_ELEVATION.0, R_ELEVATION.1),
            roughness: rng.uniform(R_ROUGHNESS.0, R_ROUGHNESS.1),
            density_a: rng.uniform(R_DENSITY.0, R_DENSITY.1),
            density_b: rng.uniform(R_DENSITY.0, R_DENSITY.1),
            viscosity_a: rng.uniform(R_VISC.0, R_VISC.1),
            viscosity_b: rng.uniform(R_VISC.0, R_VISC.1),
            initial_mix_length: rng.uniform(R_MIX0.0, R_MIX0.1),
            upstream_batch_volume: rng.uniform(R_VOLUME.0, R_VOLUME.1),
            injection_temp: rng.uniform(R_INJ_TEMP.0, R_INJ_TEMP.1),
        }
    }

    fn as_vec(&self) -> [f64; 16] {
        [
            self.flow_rate,
            self.reynolds,
            self.oil_temperature,
            self.pressure,
            self.mean_viscosity,
            self.diameter,
            self.length,
            self.elevation_diff,
            self.roughness,
            self.density_a,
            self.density_b,
            self.viscosity_a,
            self.viscosity_b,
            self.initial_mix_length,
            self.upstream_batch_volume,
            self.injection_temp,
        ]
    }

    pub fn from_row<S: Scalar>(ds: &Dataset<S>, row: usize) -> Self {
        let get = |name: &str| ds.feature(row, ds.column_index(name).expect("column")).as_f64();
        Self {
            flow_rate: get("flow_rate"),
            reynolds: get("reynolds"),
            oil_temperature: get("oil_temperature"),
            pressure: get("pressure"),
            mean_viscosity: get("mean_viscosity"),
            diameter: get("diameter"),
            length: get("length"),
            elevation_diff: get("elevation_diff"),
            roughness: get("roughness"),
            density_a: get("density_a"),
            density_b: get("density_b"),
            viscosity_a: get("viscosity_a"),
            viscosity_b: get("viscosity_b"),
            initial_mix_length: get("initial_mix_length"),
            upstream_batch_volume: get("upstream_batch_volume"),
            injection_temp: get("injection_temp"),
        }
    }
}

/// Generate a physics-consistent dataset against the default manifest.
///
/// Ground truth: `y_l = austin(d, L, Re)·(1 + α·s(features) + noise·ε₁)`
/// with `s` the fixed nonlinear mixing above, and
/// `y_u = y_l + q_actual·T_d/600·(1 + |noise·ε₂|)` with
/// `q_actual ≥ 2.2·q_min`, so `y_u - y_l ≥ y_IG` holds for every row by a
/// wide margin. `q_min` tracks the nominal flowrate (a 45-55% floor) and
/// the delay is the fixed 5-minute operational value, which keeps the gap
/// learnable from the features.
pub fn generate_synthetic<S: Scalar>(n: usize, seed: u64, noise_level: f64) -> Result<Dataset<S>> {
    if n < FOLD_COUNT {
        return Err(Error::Domain(format!(
            "synthetic dataset needs at least {FOLD_COUNT} rows, got {n}"
        )));
    }
    if !(0.0..=0.5).contains(&noise_level) {
        return Err(Error::Domain(format!(
            "noise level must be in [0, 0.5], got {noise_level}"
        )));
    }
    let manifest = default_manifest();
    let columns: Vec<String> = manifest.columns().iter().map(|s| s.to_string()).collect();
    let mut rng = Rng::derive(seed, 0x67656e); // "gen"

    let mut features = Vec::with_capacity(n * 16);
    let mut targets = Vec::with_capacity(n);
    let mut q_min_col = Vec::with_capacity(n);
    let mut t_delay_col = Vec::with_capacity(n);
    let mut y_ig_col = Vec::with_capacity(n);

    for _ in 0..n {
        let row = GeneratedFeatures::draw(&mut rng);
        let q_min = row.flow_rate * rng.uniform(R_QMIN_FRAC.0, R_QMIN_FRAC.1);
        let q_actual = q_min * rng.uniform(R_QACT_FRAC.0, R_QACT_FRAC.1);
        let eps1 = rng.normal();
        let eps2 = rng.normal();

        let pipe = PipeSpec::new(row.diameter, row.length)?;
        let flow = FlowState::new(row.reynolds)?;
        let y_base: f64 = austin_length(&pipe, &flow);
        let s = feature_mixing(&row);
        let y_l = y_base * (1.0 + GEN_ALPHA * s + noise_level * eps1);
        let gap_actual = q_actual * GEN_T_DELAY / 600.0 * (1.0 + (noise_level * eps2).abs());
        let y_u = y_l + gap_actual;
        let y_ig = q_min * GEN_T_DELAY / 600.0;

        features.extend(row.as_vec().map(S::of));
        targets.push([S::of(y_l), S::of(y_u)]);
        q_min_col.push(S::of(q_min));
        t_delay_col.push(S::of(GEN_T_DELAY));
        y_ig_col.push(S::of(y_ig));
    }

    Ok(Dataset {
        manifest,
        columns,
        features,
        targets,
        q_min: q_min_col,
        t_delay: t_delay_col,
        y_ig: y_ig_col,
    })
}
