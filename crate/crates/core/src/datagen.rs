//! Labeled datasets, the synthetic conditional-shift generator, and CSV I/O.
//!
//! Every generator is driven by `ChaCha8Rng` seeded through
//! `SeedableRng::seed_from_u64`, so a seed reproduces the same samples on
//! any platform.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on label columns summing to one.
pub const LABEL_SUM_TOL: f64 = 1e-6;

/// Features (`d x p`, one column per sample) with optional label
/// distributions (`K x p`, one probability vector per sample).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    x: Array2<f64>,
    y: Option<Array2<f64>>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, x: Array2<f64>, y: Option<Array2<f64>>) -> Result<Self> {
        if x.ncols() == 0 || x.nrows() == 0 {
            return Err(Error::TooFewSamples {
                context: "dataset",
                needed: 1,
                found: x.ncols(),
            });
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset features"));
        }
        if let Some(y) = &y {
            if y.ncols() != x.ncols() {
                return Err(Error::DimensionMismatch {
                    context: "label count",
                    expected: x.ncols(),
                    found: y.ncols(),
                });
            }
            validate_label_columns(&y.view())?;
        }
        Ok(Self {
            name: name.into(),
            x,
            y,
        })
    }

    pub fn unlabeled(name: impl Into<String>, x: Array2<f64>) -> Result<Self> {
        Self::new(name, x, None)
    }

    /// Builds a dataset with one-hot labels from integer class indices.
    pub fn from_class_indices(
        name: impl Into<String>,
        x: Array2<f64>,
        labels: &[usize],
        n_classes: usize,
    ) -> Result<Self> {
        let y = one_hot(labels, n_classes)?;
        Self::new(name, x, Some(y))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn labels(&self) -> Option<ArrayView2<'_, f64>> {
        self.y.as_ref().map(|y| y.view())
    }

    pub fn require_labels(&self) -> Result<ArrayView2<'_, f64>> {
        self.labels()
            .ok_or_else(|| Error::MissingLabels(self.name.clone()))
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    /// Sample count `p`.
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.y.as_ref().map(|y| y.nrows())
    }

    /// Argmax class per sample, ties broken towards the lowest index.
    pub fn class_indices(&self) -> Option<Vec<usize>> {
        self.labels().map(|y| argmax_columns(&y))
    }

    pub fn without_labels(&self) -> Self {
        Self {
            name: self.name.clone(),
            x: self.x.clone(),
            y: None,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Columns `idx` as a new dataset, labels included.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            x: self.x.select(Axis(1), idx),
            y: self.y.as_ref().map(|y| y.select(Axis(1), idx)),
        }
    }
}

pub(crate) fn validate_label_columns(y: &ArrayView2<f64>) -> Result<()> {
    if y.nrows() == 0 {
        return Err(Error::InvalidLabels("label dimension is zero".into()));
    }
    for (j, col) in y.axis_iter(Axis(1)).enumerate() {
        if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidLabels(format!(
                "column {j} has negative or non-finite entries"
            )));
        }
        let s = col.sum();
        if (s - 1.0).abs() > LABEL_SUM_TOL {
            return Err(Error::InvalidLabels(format!(
                "column {j} sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

/// `K x p` one-hot matrix for the given class indices.
pub fn one_hot(labels: &[usize], n_classes: usize) -> Result<Array2<f64>> {
    let mut y = Array2::zeros((n_classes, labels.len()));
    for (j, &c) in labels.iter().enumerate() {
        if c >= n_classes {
            return Err(Error::InvalidLabels(format!(
                "label {c} outside [0, {n_classes})"
            )));
        }
        y[[c, j]] = 1.0;
    }
    Ok(y)
}

/// Index of the largest entry of each column; the lowest index wins ties.
pub fn argmax_columns(y: &ArrayView2<f64>) -> Vec<usize> {
    y.axis_iter(Axis(1))
        .map(|col| {
            let mut best = 0;
            for (i, v) in col.iter().enumerate() {
                if *v > col[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Parameters of the class-conditional Gaussian generator.
///
/// Target samples of class `k` are source-distributed samples of class `k`
/// rotated by `rotation_deg` in the plane of the first two coordinates
/// (about the origin) and then shifted by `translations[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub dim: usize,
    pub n_classes: usize,
    pub class_means: Vec<Vec<f64>>,
    /// Standard deviation of the isotropic class noise.
    pub noise_std: f64,
    pub rotation_deg: f64,
    pub translations: Vec<Vec<f64>>,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl ShiftConfig {
    pub const DEFAULT_RADIUS: f64 = 3.0;
    pub const DEFAULT_NOISE_STD: f64 = 1.0;

    /// Three classes on a circle in 2-D, target rotated by 30 degrees and
    /// shifted by one unit along the first axis.
    pub fn default_benchmark(seed: u64) -> Self {
        let k = 3;
        Self {
            dim: 2,
            n_classes: k,
            class_means: circle_means(k, Self::DEFAULT_RADIUS),
            noise_std: Self::DEFAULT_NOISE_STD,
            rotation_deg: 30.0,
            translations: vec![vec![1.0, 0.0]; k],
            samples_per_class: 100,
            seed,
        }
    }

    /// Two antipodal classes, target rotated by 180 degrees: the marginal is
    /// unchanged while the class-conditionals trade places.
    pub fn antipodal_swap(seed: u64) -> Self {
        Self {
            dim: 2,
            n_classes: 2,
            class_means: vec![
                vec![Self::DEFAULT_RADIUS, 0.0],
                vec![-Self::DEFAULT_RADIUS, 0.0],
            ],
            noise_std: Self::DEFAULT_NOISE_STD,
            rotation_deg: 180.0,
            translations: vec![vec![0.0, 0.0]; 2],
            samples_per_class: 100,
            seed,
        }
    }

    /// Same class layout as `default_benchmark` without any shift.
    pub fn no_shift(n_classes: usize, samples_per_class: usize, seed: u64) -> Self {
        Self {
            dim: 2,
            n_classes,
            class_means: circle_means(n_classes, Self::DEFAULT_RADIUS),
            noise_std: Self::DEFAULT_NOISE_STD,
            rotation_deg: 0.0,
            translations: vec![vec![0.0, 0.0]; n_classes],
            samples_per_class,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if self.samples_per_class < 2 {
            return bad(format!(
                "need at least 2 samples per class, got {}",
                self.samples_per_class
            ));
        }
        if self.dim == 0 {
            return bad("feature dimension must be positive".into());
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return bad(format!("noise_std must be > 0, got {}", self.noise_std));
        }
        if !self.rotation_deg.is_finite() {
            return bad("rotation must be finite".into());
        }
        if self.dim < 2 && self.rotation_deg.rem_euclid(360.0) != 0.0 {
            return bad("rotation needs at least 2 feature dimensions".into());
        }
        for (what, rows) in [
            ("class_means", &self.class_means),
            ("translations", &self.translations),
        ] {
            if rows.len() != self.n_classes {
                return bad(format!(
                    "{what} has {} rows, expected {}",
                    rows.len(),
                    self.n_classes
                ));
            }
            if let Some(r) = rows.iter().find(|r| r.len() != self.dim) {
                return bad(format!(
                    "{what} row has length {}, expected {}",
                    r.len(),
                    self.dim
                ));
            }
            if rows.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("{what} has non-finite entries"));
            }
        }
        Ok(())
    }
}

fn circle_means(k: usize, radius: f64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|c| {
            let angle = 2.0 * PI * c as f64 / k as f64;
            vec![radius * angle.cos(), radius * angle.sin()]
        })
        .collect()
}

/// Source and target domains; the target keeps its ground-truth labels for
/// evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: LabeledDataset,
    pub target: LabeledDataset,
}

/// Draws stratified class-conditional Gaussians for both domains.
pub fn synth_conditional_shift(cfg: &ShiftConfig) -> Result<DomainPair> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let p = cfg.n_classes * cfg.samples_per_class;
    let labels: Vec<usize> = (0..cfg.n_classes)
        .flat_map(|c| std::iter::repeat_n(c, cfg.samples_per_class))
        .collect();

    let draw = |rng: &mut ChaCha8Rng| -> Array2<f64> {
        let mut x = Array2::zeros((cfg.dim, p));
        for (j, &c) in labels.iter().enumerate() {
            for i in 0..cfg.dim {
                let z: f64 = rng.sample(StandardNormal);
                x[[i, j]] = cfg.class_means[c][i] + cfg.noise_std * z;
            }
        }
        x
    };

    let xs = draw(&mut rng);
    let mut xt = draw(&mut rng);
    let (sin, cos) = cfg.rotation_deg.to_radians().sin_cos();
    for (j, &c) in labels.iter().enumerate() {
        if cfg.dim >= 2 {
            let (a, b) = (xt[[0, j]], xt[[1, j]]);
            xt[[0, j]] = cos * a - sin * b;
            xt[[1, j]] = sin * a + cos * b;
        }
        for i in 0..cfg.dim {
            xt[[i, j]] += cfg.translations[c][i];
        }
    }

    Ok(DomainPair {
        source: LabeledDataset::from_class_indices("source", xs, &labels, cfg.n_classes)?,
        target: LabeledDataset::from_class_indices("target", xt, &labels, cfg.n_classes)?,
    })
}

/// Random labeled instance for sweeps: Gaussian class clusters with random
/// means, every class present, class order shuffled.
pub fn random_labeled<R: Rng>(
    rng: &mut R,
    name: &str,
    dim: usize,
    n_classes: usize,
    n: usize,
) -> Result<LabeledDataset> {
    if n < n_classes {
        return Err(Error::TooFewSamples {
            context: "random_labeled",
            needed: n_classes,
            found: n,
        });
    }
    let means: Vec<Vec<f64>> = (0..n_classes)
        .map(|_| {
            (0..dim)
                .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let mut labels: Vec<usize> = (0..n).map(|j| j % n_classes).collect();
    labels.shuffle(rng);
    let mut x = Array2::zeros((dim, n));
    for (j, &c) in labels.iter().enumerate() {
        for i in 0..dim {
            x[[i, j]] = means[c][i] + rng.sample::<f64, _>(StandardNormal);
        }
    }
    LabeledDataset::from_class_indices(name, x, &labels, n_classes)
}

/// Column layout of a dataset CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    /// Explicit feature columns; `None` picks up `f0..f{d-1}` from the header.
    pub feature_columns: Option<Vec<String>>,
    /// Integer label column; absent from the file means an unlabeled dataset.
    pub label_column: String,
    /// Number of classes; `None` infers `max label + 1`.
    pub n_classes: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            feature_columns: None,
            label_column: "label".to_string(),
            n_classes: None,
        }
    }
}

fn csv_err(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h.trim() == name);

    let feature_idx: Vec<usize> = match &schema.feature_columns {
        Some(names) => names
            .iter()
            .map(|n| position(n).ok_or_else(|| csv_err(1, format!("missing feature column `{n}`"))))
            .collect::<Result<_>>()?,
        None => {
            let mut idx = Vec::new();
            while let Some(p) = position(&format!("f{}", idx.len())) {
                idx.push(p);
            }
            idx
        }
    };
    if feature_idx.is_empty() {
        return Err(csv_err(1, "no feature columns (expected f0, f1, ...)"));
    }
    let label_idx = position(&schema.label_column);

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut col = Vec::with_capacity(feature_idx.len());
        for &i in &feature_idx {
            let raw = record.get(i).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| csv_err(line, format!("cannot parse `{raw}` as a number")))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("non-finite value `{raw}`")));
            }
            col.push(v);
        }
        columns.push(col);
        if let Some(li) = label_idx {
            let raw = record.get(li).unwrap_or("").trim();
            let c: usize = raw.parse().map_err(|_| {
                csv_err(line, format!("label `{raw}` is not a non-negative integer"))
            })?;
            if let Some(k) = schema.n_classes {
                if c >= k {
                    return Err(csv_err(line, format!("label {c} outside [0, {k})")));
                }
            }
            labels.push(c);
        }
    }

    let d = feature_idx.len();
    let p = columns.len();
    let mut x = Array2::zeros((d, p));
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            x[[i, j]] = *v;
        }
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    match label_idx {
        Some(_) => {
            let k = schema
                .n_classes
                .unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
            LabeledDataset::from_class_indices(name, x, &labels, k)
        }
        None => LabeledDataset::unlabeled(name, x),
    }
}

/// Writes `f0..f{d-1}` plus an integer `label` column (argmax of the label
/// distribution) when labels are present.
pub fn write_csv(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(0, e.to_string()))?;
    let mut header: Vec<String> = (0..ds.dim()).map(|i| format!("f{i}")).collect();
    let classes = ds.class_indices();
    if classes.is_some() {
        header.push("label".into());
    }
    writer
        .write_record(&header)
        .map_err(|e| csv_err(1, e.to_string()))?;
    let x = ds.features();
    for j in 0..ds.len() {
        let mut row: Vec<String> = x.column(j).iter().map(|v| format!("{v:?}")).collect();
        if let Some(c) = &classes {
            row.push(c[j].to_string());
        }
        writer
            .write_record(&row)
            .map_err(|e| csv_err(j as u64 + 2, e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::io::Write;

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = synth_conditional_shift(&ShiftConfig::default_benchmark(7)).unwrap();
        let b = synth_conditional_shift(&ShiftConfig::default_benchmark(7)).unwrap();
        assert_eq!(a, b);
        let c = synth_conditional_shift(&ShiftConfig::default_benchmark(8)).unwrap();
        assert_ne!(a.source, c.source);
    }

    #[test]
    fn class_proportions_are_exact() {
        let pair = synth_conditional_shift(&ShiftConfig::default_benchmark(1)).unwrap();
        for ds in [&pair.source, &pair.target] {
            let idx = ds.class_indices().unwrap();
            for c in 0..3 {
                assert_eq!(idx.iter().filter(|&&v| v == c).count(), 100);
            }
        }
    }

    #[test]
    fn rotation_maps_class_means() {
        let mut cfg = ShiftConfig::antipodal_swap(3);
        cfg.samples_per_class = 2000;
        let pair = synth_conditional_shift(&cfg).unwrap();
        let idx = pair.target.class_indices().unwrap();
        let x = pair.target.features();
        let mean0: f64 = idx
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == 0)
            .map(|(j, _)| x[[0, j]])
            .sum::<f64>()
            / 2000.0;
        // class 0 sits at +3 in the source and at -3 after a half turn
        assert!((mean0 + 3.0).abs() < 0.1, "mean0 = {mean0}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = ShiftConfig::default_benchmark(0);
        cfg.samples_per_class = 1;
        assert!(matches!(
            synth_conditional_shift(&cfg),
            Err(Error::InvalidConfig(_))
        ));
        let mut cfg = ShiftConfig::default_benchmark(0);
        cfg.n_classes = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = ShiftConfig::default_benchmark(0);
        cfg.translations.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn labels_must_be_distributions() {
        let x = array![[0.0, 1.0]];
        let bad = array![[0.5, 1.0], [0.4, 0.0]];
        assert!(matches!(
            LabeledDataset::new("bad", x.clone(), Some(bad)),
            Err(Error::InvalidLabels(_))
        ));
        let soft = array![[0.25, 1.0], [0.75, 0.0]];
        assert!(LabeledDataset::new("soft", x, Some(soft)).is_ok());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        let y = array![[0.5, 0.2], [0.5, 0.8]];
        assert_eq!(argmax_columns(&y.view()), vec![0, 1]);
    }

    fn write_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".csv").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_row_file() {
        let f = write_file("f0,f1,label\n0.5,1.5,0\n2,3,1\n-1,0.25,1\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(ds.features().dim(), (2, 3));
        assert_eq!(ds.labels().unwrap().dim(), (2, 3));
        assert_eq!(ds.features()[[1, 2]], 0.25);
        assert_eq!(ds.class_indices().unwrap(), vec![0, 1, 1]);
    }

    #[test]
    fn file_without_labels_is_unlabeled() {
        let f = write_file("f0,f1\n0,1\n2,3\n");
        let ds = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert!(ds.labels().is_none());
        assert!(matches!(ds.require_labels(), Err(Error::MissingLabels(_))));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let f = write_file("f0,label\n1.0,0\noops,1\n");
        match load_csv(f.path(), &CsvSchema::default()) {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_file("f0,label\n1.0,0\n2.0,5\n");
        let schema = CsvSchema {
            n_classes: Some(2),
            ..CsvSchema::default()
        };
        match load_csv(f.path(), &schema) {
            Err(Error::Csv { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("outside"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let pair = synth_conditional_shift(&ShiftConfig::default_benchmark(11)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("source.csv");
        write_csv(&path, &pair.source).unwrap();
        let back = load_csv(&path, &CsvSchema::default()).unwrap();
        let diff = (&back.features() - &pair.source.features())
            .iter()
            .fold(0.0_f64, |a, v| a.max(v.abs()));
        assert!(diff <= 1e-12);
        assert_eq!(back.labels(), pair.source.labels());
    }
}
