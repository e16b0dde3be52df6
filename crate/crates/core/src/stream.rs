//! Observation streams: data types, synthetic periodic generation, CSV
//! ingestion and block permutation.

use std::f64::consts::PI;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig12;
use crate::seed;

/// A single stream element: position `index` and its location in
/// observation space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub index: usize,
    pub features: Vec<f64>,
}

impl Observation {
    pub fn new(index: usize, features: Vec<f64>) -> Self {
        Self { index, features }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// Ground-truth quantity of interest at a stream position. Never visible to
/// selectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoiSample {
    pub index: usize,
    pub value: f64,
}

/// Deterministic base pattern for one period, indexed by phase `0..T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Waveform {
    /// Explicit feature vector per phase; must have exactly `T` rows.
    Table { rows: Vec<Vec<f64>> },
    /// One-dimensional `offset + sin(2πt) + sin(3πt)` where `t = 2p/T`, so
    /// the waveform's own period (2 in `t`) spans exactly one stream period.
    SineMix {
        #[serde(default)]
        offset: f64,
    },
    /// Two-dimensional `[offset + sin(2πt) + sin(3πt), cos(2πp/T)]`: a
    /// sine-mix signal plus the cosine of the fraction of the period.
    Seasonal {
        #[serde(default)]
        offset: f64,
    },
}

impl Waveform {
    pub fn table(rows: Vec<Vec<f64>>) -> Self {
        Waveform::Table { rows }
    }

    /// Scalar table, one feature per phase.
    pub fn scalar_table(values: &[f64]) -> Self {
        Waveform::Table {
            rows: values.iter().map(|&v| vec![v]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Waveform::Table { rows } => rows.first().map_or(0, Vec::len),
            Waveform::SineMix { .. } => 1,
            Waveform::Seasonal { .. } => 2,
        }
    }

    pub fn at(&self, phase: usize, period: usize) -> Vec<f64> {
        let t = 2.0 * phase as f64 / period as f64;
        let mix = (2.0 * PI * t).sin() + (3.0 * PI * t).sin();
        match self {
            Waveform::Table { rows } => rows[phase].clone(),
            Waveform::SineMix { offset } => vec![offset + mix],
            Waveform::Seasonal { offset } => {
                let frac = phase as f64 / period as f64;
                vec![offset + mix, (2.0 * PI * frac).cos()]
            }
        }
    }
}

/// Parameters of an approximately periodic stream: `x_i ~ N(x_{i mod T}, Σ_d)`
/// for `i ≥ T`, with the first period equal to the base waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicStreamSpec {
    pub period: usize,
    pub length: usize,
    pub noise_cov: Vec<Vec<f64>>,
    pub waveform: Waveform,
}

impl PeriodicStreamSpec {
    /// Spec with isotropic noise `noise_var · I` and `periods` whole periods.
    pub fn isotropic(period: usize, periods: usize, noise_var: f64, waveform: Waveform) -> Self {
        let d = waveform.dim();
        let noise_cov = (0..d)
            .map(|r| (0..d).map(|c| if r == c { noise_var } else { 0.0 }).collect())
            .collect();
        Self {
            period,
            length: period * periods,
            noise_cov,
            waveform,
        }
    }

    pub fn dim(&self) -> usize {
        self.waveform.dim()
    }

    pub fn periods(&self) -> usize {
        self.length / self.period.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::InvalidSpec("period must be positive".into()));
        }
        if self.length < self.period {
            return Err(Error::InvalidSpec(format!(
                "length {} is shorter than one period ({})",
                self.length, self.period
            )));
        }
        let d = self.dim();
        if d == 0 {
            return Err(Error::InvalidSpec("waveform has zero dimension".into()));
        }
        if let Waveform::Table { rows } = &self.waveform {
            if rows.len() != self.period {
                return Err(Error::InvalidSpec(format!(
                    "waveform table has {} rows but the period is {}",
                    rows.len(),
                    self.period
                )));
            }
            if rows.iter().any(|r| r.len() != d) {
                return Err(Error::InvalidSpec("waveform rows differ in dimension".into()));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpec("waveform contains non-finite values".into()));
            }
        }
        self.noise_sqrt().map(|_| ())
    }

    /// Symmetric square root of `Σ_d`; rejects non-symmetric or indefinite input.
    fn noise_sqrt(&self) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if self.noise_cov.len() != d || self.noise_cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidSpec(format!("noise covariance must be {d}x{d}")));
        }
        let cov = DMatrix::from_fn(d, d, |r, c| self.noise_cov[r][c]);
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("noise covariance has non-finite entries".into()));
        }
        let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if (&cov - cov.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidSpec("noise covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(cov);
        let min = eig.eigenvalues.min();
        if min < -1e-12 * scale {
            return Err(Error::InvalidSpec(format!(
                "noise covariance is not positive semidefinite (min eigenvalue {min:.3e})"
            )));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
    }
}

/// An ordered stream of observations with optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStream {
    observations: Vec<Observation>,
    qoi: Option<Vec<QoiSample>>,
    labels: Option<Vec<String>>,
    spec: Option<PeriodicStreamSpec>,
}

impl ObservationStream {
    /// Builds a stream from feature rows, indexing them `0..N`.
    pub fn from_features(rows: Vec<Vec<f64>>) -> Result<Self> {
        let observations = rows
            .into_iter()
            .enumerate()
            .map(|(i, f)| Observation::new(i, f))
            .collect();
        Self::new(observations)
    }

    pub fn new(observations: Vec<Observation>) -> Result<Self> {
        if let Some(first) = observations.first() {
            let d = first.dim();
            for (i, obs) in observations.iter().enumerate() {
                if obs.index != i {
                    return Err(Error::InvalidArgument(format!(
                        "observation at position {i} has index {}",
                        obs.index
                    )));
                }
                if obs.dim() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: obs.dim(),
                    });
                }
                if obs.features.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "observation {i} has non-finite features"
                    )));
                }
            }
        }
        Ok(Self {
            observations,
            qoi: None,
            labels: None,
            spec: None,
        })
    }

    /// Attaches ground-truth values, one per observation.
    pub fn with_qoi(mut self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} qoi values for {} observations",
                values.len(),
                self.len()
            )));
        }
        self.qoi = Some(
            values
                .into_iter()
                .enumerate()
                .map(|(index, value)| QoiSample { index, value })
                .collect(),
        );
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidArgument("one label per observation required".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_spec(mut self, spec: PeriodicStreamSpec) -> Self {
        self.spec = Some(spec);
        self
    }

    /// The selector-facing view: observations only, no ground truth.
    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn qoi(&self) -> Option<&[QoiSample]> {
        self.qoi.as_deref()
    }

    pub fn qoi_values(&self) -> Option<Vec<f64>> {
        self.qoi.as_ref().map(|q| q.iter().map(|s| s.value).collect())
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn spec(&self) -> Option<&PeriodicStreamSpec> {
        self.spec.as_ref()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observations.first().map_or(0, Observation::dim)
    }

    /// Standardizes each feature to zero mean and unit variance using only
    /// the first `reference_len` observations. Constant features keep unit
    /// scale.
    pub fn standardize(&self, reference_len: usize) -> Result<Self> {
        if reference_len == 0 || reference_len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "reference length {reference_len} outside 1..={}",
                self.len()
            )));
        }
        let d = self.dim();
        let reference = &self.observations[..reference_len];
        let n = reference_len as f64;
        let mut mean = vec![0.0; d];
        for obs in reference {
            for (m, v) in mean.iter_mut().zip(&obs.features) {
                *m += v / n;
            }
        }
        let mut sd = vec![0.0; d];
        for obs in reference {
            for j in 0..d {
                sd[j] += (obs.features[j] - mean[j]).powi(2) / n;
            }
        }
        for s in &mut sd {
            *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
        }
        let mut out = self.clone();
        for obs in &mut out.observations {
            for j in 0..d {
                obs.features[j] = (obs.features[j] - mean[j]) / sd[j];
            }
        }
        Ok(out)
    }
}

/// What selectors see: observations in stream order plus an optional
/// eligibility mask. Ineligible observations (held-out test points) remain
/// visible as context but may never be sampled.
#[derive(Debug, Clone, Copy)]
pub struct StreamView<'a> {
    observations: &'a [Observation],
    eligible: Option<&'a [bool]>,
}

impl<'a> StreamView<'a> {
    pub fn new(observations: &'a [Observation]) -> Self {
        Self {
            observations,
            eligible: None,
        }
    }

    /// Restricts sampling to positions where `eligible[i]` is true.
    pub fn with_mask(observations: &'a [Observation], eligible: &'a [bool]) -> Result<Self> {
        if eligible.len() != observations.len() {
            return Err(Error::InvalidArgument(format!(
                "eligibility mask has {} entries for {} observations",
                eligible.len(),
                observations.len()
            )));
        }
        Ok(Self {
            observations,
            eligible: Some(eligible),
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_eligible(&self, position: usize) -> bool {
        self.eligible.is_none_or(|m| m[position])
    }

    /// Single forward pass over the stream.
    pub fn iter(&self) -> std::slice::Iter<'a, Observation> {
        self.observations.iter()
    }

    pub fn get(&self, position: usize) -> &'a Observation {
        &self.observations[position]
    }

    /// Observations that may be sampled, in stream order.
    pub fn eligible_observations(&self) -> Vec<Observation> {
        self.observations
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_eligible(*i))
            .map(|(_, o)| o.clone())
            .collect()
    }
}

impl<'a> From<&'a [Observation]> for StreamView<'a> {
    fn from(observations: &'a [Observation]) -> Self {
        Self::new(observations)
    }
}

impl<'a> From<&'a ObservationStream> for StreamView<'a> {
    fn from(stream: &'a ObservationStream) -> Self {
        Self::new(stream.observations())
    }
}

/// Draws a stream from `spec`. The first period is the noiseless base
/// waveform; later observations add Gaussian noise with covariance `Σ_d`
/// around the waveform value at the same phase.
pub fn generate_periodic_stream(spec: &PeriodicStreamSpec, seed: u64) -> Result<ObservationStream> {
    spec.validate()?;
    let root = spec.noise_sqrt()?;
    let d = spec.dim();
    let base: Vec<Vec<f64>> = (0..spec.period).map(|p| spec.waveform.at(p, spec.period)).collect();
    let mut rng = seed::rng(seed);
    let mut z = vec![0.0; d];
    let rows = (0..spec.length)
        .map(|i| {
            let mut x = base[i % spec.period].clone();
            if i >= spec.period {
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
                for (r, xr) in x.iter_mut().enumerate() {
                    *xr += (0..d).map(|c| root[(r, c)] * z[c]).sum::<f64>();
                }
            }
            x
        })
        .collect();
    Ok(ObservationStream::from_features(rows)?.with_spec(spec.clone()))
}

/// Column mapping for CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Time or index column. Values are kept as opaque labels.
    pub index: String,
    pub features: Vec<String>,
    #[serde(default)]
    pub qoi: Option<String>,
}

impl CsvSchema {
    pub fn new(index: &str, features: &[&str], qoi: Option<&str>) -> Self {
        Self {
            index: index.into(),
            features: features.iter().map(|s| s.to_string()).collect(),
            qoi: qoi.map(str::to_string),
        }
    }

    /// Reads only the header of `path`: the first column is the index,
    /// columns named `x<digits>` are features (in file order) and a `qoi`
    /// column, if any, is the ground truth.
    pub fn infer(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        let headers = reader.headers()?;
        let index = headers
            .get(0)
            .ok_or_else(|| Error::Empty(path.to_path_buf()))?
            .trim()
            .to_string();
        let features: Vec<String> = headers
            .iter()
            .skip(1)
            .map(str::trim)
            .filter(|h| h.len() > 1 && h.starts_with('x') && h[1..].bytes().all(|b| b.is_ascii_digit()))
            .map(str::to_string)
            .collect();
        if features.is_empty() {
            return Err(Error::MissingColumn("x0".into()));
        }
        let qoi = headers
            .iter()
            .skip(1)
            .any(|h| h.trim() == "qoi")
            .then(|| "qoi".to_string());
        Ok(Self { index, features, qoi })
    }

    /// Default layout written by [`write_csv`]: `t, x0..x{d-1}[, qoi]`.
    pub fn default_for(dim: usize, with_qoi: bool) -> Self {
        Self {
            index: "t".into(),
            features: (0..dim).map(|j| format!("x{j}")).collect(),
            qoi: with_qoi.then(|| "qoi".to_string()),
        }
    }
}

/// Reads a comma-separated file with a header row. Rows keep file order.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<ObservationStream> {
    if schema.features.is_empty() {
        return Err(Error::InvalidArgument("schema names no feature columns".into()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let index_col = column(&schema.index)?;
    let feature_cols = schema.features.iter().map(|n| column(n)).collect::<Result<Vec<_>>>()?;
    let qoi_col = schema.qoi.as_deref().map(column).transpose()?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut qoi = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| Error::Malformed {
                line,
                column: name.to_string(),
                message: format!("`{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Malformed {
                    line,
                    column: name.to_string(),
                    message: format!("`{raw}` is not finite"),
                });
            }
            Ok(v)
        };
        let features = feature_cols
            .iter()
            .zip(&schema.features)
            .map(|(&c, n)| cell(c, n))
            .collect::<Result<Vec<_>>>()?;
        if let (Some(c), Some(name)) = (qoi_col, schema.qoi.as_deref()) {
            qoi.push(cell(c, name)?);
        }
        labels.push(record.get(index_col).unwrap_or("").trim().to_string());
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(Error::Empty(path.to_path_buf()));
    }
    let mut stream = ObservationStream::from_features(rows)?.with_labels(labels)?;
    if qoi_col.is_some() {
        stream = stream.with_qoi(qoi)?;
    }
    Ok(stream)
}

/// Writes `stream` using [`CsvSchema::default_for`]; numbers carry 12
/// significant digits.
pub fn write_csv(stream: &ObservationStream, path: &Path) -> Result<()> {
    let schema = CsvSchema::default_for(stream.dim(), stream.qoi().is_some());
    let mut file = File::create(path)?;
    let mut header = vec![schema.index.clone()];
    header.extend(schema.features.iter().cloned());
    header.extend(schema.qoi.iter().cloned());
    writeln!(file, "{}", header.join(","))?;
    let qoi = stream.qoi_values();
    for (i, obs) in stream.observations().iter().enumerate() {
        let mut fields = vec![match stream.labels() {
            Some(l) => l[i].clone(),
            None => obs.index.to_string(),
        }];
        fields.extend(obs.features.iter().map(|&v| sig12(v)));
        if let Some(q) = &qoi {
            fields.push(sig12(q[i]));
        }
        writeln!(file, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reorders whole blocks of `block_len` observations by a seeded uniform
/// shuffle. A trailing partial block stays at the end; ground truth and
/// labels move with their observations; the result is re-indexed `0..N`.
pub fn block_permute(stream: &ObservationStream, block_len: usize, seed: u64) -> Result<ObservationStream> {
    let n = stream.len();
    if block_len == 0 || block_len > n {
        return Err(Error::InvalidArgument(format!(
            "block length {block_len} outside 1..={n}"
        )));
    }
    let blocks = n / block_len;
    let mut order: Vec<usize> = (0..blocks).collect();
    order.shuffle(&mut seed::rng(seed));
    let source: Vec<usize> = order
        .iter()
        .flat_map(|&b| b * block_len..(b + 1) * block_len)
        .chain(blocks * block_len..n)
        .collect();

    let rows = source
        .iter()
        .map(|&s| stream.observations[s].features.clone())
        .collect();
    let mut out = ObservationStream::from_features(rows)?;
    out.spec = stream.spec.clone();
    if let Some(q) = stream.qoi_values() {
        out = out.with_qoi(source.iter().map(|&s| q[s]).collect())?;
    }
    if let Some(l) = stream.labels() {
        out = out.with_labels(source.iter().map(|&s| l[s].clone()).collect())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_spec(noise: f64, periods: usize) -> PeriodicStreamSpec {
        PeriodicStreamSpec::isotropic(4, periods, noise, Waveform::scalar_table(&[0.0, 3.0, 1.0, 2.0]))
    }

    #[test]
    fn noiseless_stream_repeats_exactly() {
        let s = generate_periodic_stream(&table_spec(0.0, 3), 1).unwrap();
        let values: Vec<f64> = s.observations().iter().map(|o| o.features[0]).collect();
        assert_eq!(values, [0.0, 3.0, 1.0, 2.0].repeat(3));
    }

    #[test]
    fn first_period_is_the_waveform() {
        let spec = PeriodicStreamSpec::isotropic(100, 10, 0.35, Waveform::SineMix { offset: 0.0 });
        let s = generate_periodic_stream(&spec, 3).unwrap();
        assert_eq!(s.len(), 1000);
        assert_eq!(spec.periods(), 10);
        for p in 0..100 {
            assert_eq!(s.observations()[p].features, spec.waveform.at(p, 100));
        }
        // Later periods are noisy.
        assert_ne!(s.observations()[101].features, s.observations()[1].features);
    }

    #[test]
    fn same_seed_same_stream() {
        let spec = PeriodicStreamSpec::isotropic(10, 5, 0.2, Waveform::Seasonal { offset: 0.0 });
        let a = generate_periodic_stream(&spec, 42).unwrap();
        let b = generate_periodic_stream(&spec, 42).unwrap();
        let c = generate_periodic_stream(&spec, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_invalid_specs() {
        let mut spec = table_spec(0.1, 1);
        spec.length = 3;
        assert!(matches!(generate_periodic_stream(&spec, 0), Err(Error::InvalidSpec(_))));

        let mut spec = PeriodicStreamSpec::isotropic(4, 2, 0.0, Waveform::Seasonal { offset: 0.0 });
        spec.noise_cov = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let err = generate_periodic_stream(&spec, 0).unwrap_err();
        assert!(err.to_string().contains("positive semidefinite"), "{err}");

        spec.noise_cov = vec![vec![1.0, 0.5], vec![0.0, 1.0]];
        assert!(generate_periodic_stream(&spec, 0).is_err());

        let mut spec = table_spec(0.0, 2);
        spec.waveform = Waveform::scalar_table(&[1.0, 2.0]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn semidefinite_noise_is_accepted() {
        let mut spec = PeriodicStreamSpec::isotropic(4, 3, 0.0, Waveform::Seasonal { offset: 0.0 });
        spec.noise_cov = vec![vec![0.5, 0.0], vec![0.0, 0.0]];
        let s = generate_periodic_stream(&spec, 9).unwrap();
        for obs in &s.observations()[4..] {
            let base = spec.waveform.at(obs.index % 4, 4);
            assert_eq!(obs.features[1], base[1]);
        }
    }

    #[test]
    fn empirical_noise_covariance_matches() {
        let sigma2 = 0.35;
        let spec = PeriodicStreamSpec::isotropic(20, 501, sigma2, Waveform::Seasonal { offset: 1.0 });
        let s = generate_periodic_stream(&spec, 11).unwrap();
        let resid: Vec<[f64; 2]> = s.observations()[20..]
            .iter()
            .map(|o| {
                let base = &s.observations()[o.index % 20].features;
                [o.features[0] - base[0], o.features[1] - base[1]]
            })
            .collect();
        let n = resid.len() as f64;
        for (a, b, target) in [(0, 0, sigma2), (1, 1, sigma2), (0, 1, 0.0)] {
            let m: f64 = resid.iter().map(|r| r[a] * r[b]).sum::<f64>() / n;
            // Standard error of a product-moment estimate: sqrt(Var(r_a r_b)/n).
            let se = if a == b {
                (2.0 * sigma2 * sigma2 / n).sqrt()
            } else {
                (sigma2 * sigma2 / n).sqrt()
            };
            assert!((m - target).abs() < 3.0 * se, "cov[{a}{b}] = {m}");
        }
    }

    #[test]
    fn block_permute_single_block_is_identity() {
        let s = generate_periodic_stream(&table_spec(0.5, 3), 1).unwrap();
        assert_eq!(block_permute(&s, s.len(), 99).unwrap(), s);
    }

    #[test]
    fn block_permute_keeps_pairs_and_tail() {
        let s = ObservationStream::from_features((0..7).map(|i| vec![i as f64]).collect())
            .unwrap()
            .with_qoi((0..7).map(|i| 10.0 * i as f64).collect())
            .unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..40 {
            let p = block_permute(&s, 2, seed).unwrap();
            let v: Vec<f64> = p.observations().iter().map(|o| o.features[0]).collect();
            assert_eq!(v[6], 6.0, "trailing remainder stays in place");
            for pair in v[..6].chunks(2) {
                assert_eq!(pair[1], pair[0] + 1.0);
                assert_eq!(pair[0] as usize % 2, 0);
            }
            let q = p.qoi_values().unwrap();
            for (x, y) in v.iter().zip(&q) {
                assert_eq!(*y, 10.0 * x);
            }
            for (i, o) in p.observations().iter().enumerate() {
                assert_eq!(o.index, i);
            }
            seen.insert(v.iter().map(|x| *x as i64).collect::<Vec<_>>());
        }
        assert_eq!(seen.len(), 6, "all 3! block orders appear");
    }

    #[test]
    fn block_permute_rejects_bad_lengths() {
        let s = generate_periodic_stream(&table_spec(0.0, 2), 0).unwrap();
        assert!(block_permute(&s, 0, 0).is_err());
        assert!(block_permute(&s, 9, 0).is_err());
    }

    #[test]
    fn standardize_uses_reference_statistics() {
        let s = ObservationStream::from_features(vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![100.0, 7.0]]).unwrap();
        let z = s.standardize(2).unwrap();
        let f: Vec<_> = z.observations().iter().map(|o| o.features.clone()).collect();
        assert_eq!(f[0], vec![-1.0, 0.0]);
        assert_eq!(f[1], vec![1.0, 0.0]);
        assert_eq!(f[2], vec![98.0, 2.0]);
    }
}
