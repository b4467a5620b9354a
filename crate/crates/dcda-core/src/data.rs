//! Synthetic domain-shift benchmarks and CSV ingestion.
//!
//! Generators are pure functions of their parameters and seed. The CSV
//! schema is `f0,f1,...,f{d-1}[,label]` with comma separator, `.` decimal
//! and no quoting; values are written in their shortest form that parses
//! back to the identical f64 bits.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Feature rows with optional class labels, a domain tag and a split tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub domain: Domain,
    pub split: Split,
    pub name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(labels) = &self.labels {
            if labels.len() != self.len() {
                return Err(Error::DimensionMismatch(format!(
                    "dataset `{}`: {} labels for {} rows",
                    self.name,
                    labels.len(),
                    self.len()
                )));
            }
            for &l in labels {
                if l > 1 {
                    return Err(Error::InvalidLabel {
                        value: l,
                        context: format!("dataset `{}`", self.name),
                    });
                }
            }
        }
        Ok(())
    }

    /// Same rows with the labels dropped.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: None,
            ..self.clone()
        }
    }
}

/// Affine domain shift: rotate (first two coordinates), scale, translate,
/// then add isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSpec {
    pub rotation: f64,
    pub translation: Vec<f64>,
    pub scale: f64,
    pub noise_std: f64,
}

impl ShiftSpec {
    pub fn identity(dim: usize) -> Self {
        ShiftSpec {
            rotation: 0.0,
            translation: vec![0.0; dim],
            scale: 1.0,
            noise_std: 0.0,
        }
    }
}

/// Two interleaved half-circles: class 0 is the upper moon on the unit
/// circle, class 1 the lower moon. Gaussian noise with `noise_std` is
/// added to both coordinates.
pub fn gen_moons(n_per_class: usize, noise_std: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std.max(0.0)).expect("std is non-negative");
    let n = n_per_class.max(1);
    let mut rows = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for i in 0..n {
        let t = std::f64::consts::PI * i as f64 / (n.max(2) - 1).max(1) as f64;
        let (x, y) = (t.cos(), t.sin());
        let (nx, ny) = if noise_std > 0.0 {
            (normal.sample(&mut rng), normal.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        rows.push(vec![x + nx, y + ny]);
        labels.push(0);
    }
    for i in 0..n {
        let t = std::f64::consts::PI * i as f64 / (n.max(2) - 1).max(1) as f64;
        let (x, y) = (1.0 - t.cos(), 0.5 - t.sin());
        let (nx, ny) = if noise_std > 0.0 {
            (normal.sample(&mut rng), normal.sample(&mut rng))
        } else {
            (0.0, 0.0)
        };
        rows.push(vec![x + nx, y + ny]);
        labels.push(1);
    }
    Dataset {
        features: Matrix::from_rows(&rows).expect("rows share a width"),
        labels: Some(labels),
        domain: Domain::Source,
        split: Split::Train,
        name: "moons".into(),
    }
}

/// Two isotropic Gaussian blobs, one per class, centered at `centers`.
pub fn gen_blobs(n_per_class: usize, centers: &[Vec<f64>; 2], std: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std.max(0.0)).expect("std is non-negative");
    let dim = centers[0].len();
    assert_eq!(centers[1].len(), dim, "blob centers must share a dimension");
    let n = n_per_class.max(1);
    let mut rows = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..n {
            let row: Vec<f64> = center
                .iter()
                .map(|&c| {
                    if std > 0.0 {
                        c + normal.sample(&mut rng)
                    } else {
                        c
                    }
                })
                .collect();
            rows.push(row);
            labels.push(class);
        }
    }
    Dataset {
        features: Matrix::from_rows(&rows).expect("rows share a width"),
        labels: Some(labels),
        domain: Domain::Source,
        split: Split::Train,
        name: "blobs".into(),
    }
}

/// `x <- scale * R(rotation) x + translation + noise`, labels preserved,
/// domain tag set to target. Rotation acts on the first two coordinates.
pub fn apply_shift(dataset: &Dataset, spec: &ShiftSpec, seed: u64) -> Result<Dataset> {
    if spec.scale <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "shift scale must be > 0, got {}",
            spec.scale
        )));
    }
    let dim = dataset.dim();
    if spec.translation.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "translation has {} entries for {dim}-dimensional data",
            spec.translation.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spec.noise_std.max(0.0)).expect("std is non-negative");
    let (sin, cos) = spec.rotation.sin_cos();
    let mut features = dataset.features.clone();
    for r in 0..features.rows() {
        let row = features.row_mut(r);
        if dim >= 2 {
            let (x, y) = (row[0], row[1]);
            row[0] = cos * x - sin * y;
            row[1] = sin * x + cos * y;
        }
        for (t, v) in row.iter_mut().enumerate() {
            *v = spec.scale * *v + spec.translation[t];
            if spec.noise_std > 0.0 {
                *v += normal.sample(&mut rng);
            }
        }
    }
    Ok(Dataset {
        features,
        labels: dataset.labels.clone(),
        domain: Domain::Target,
        split: dataset.split,
        name: dataset.name.clone(),
    })
}

/// The default benchmark: source moons, target moons rotated 35 degrees,
/// translated (0.3, -0.1), with light extra noise, plus a separately
/// seeded target test split.
pub struct Moons35 {
    pub source_train: Dataset,
    pub target_train: Dataset,
    pub target_test: Dataset,
}

pub const MOONS35_ROTATION_DEG: f64 = 35.0;
pub const MOONS35_TRANSLATION: [f64; 2] = [0.3, -0.1];
pub const MOONS35_NOISE: f64 = 0.08;
pub const MOONS35_SHIFT_NOISE: f64 = 0.02;
pub const MOONS35_N_TRAIN: usize = 300;
pub const MOONS35_N_TEST: usize = 200;

pub fn gen_moons35(seed: u64) -> Result<Moons35> {
    let spec = ShiftSpec {
        rotation: MOONS35_ROTATION_DEG.to_radians(),
        translation: MOONS35_TRANSLATION.to_vec(),
        scale: 1.0,
        noise_std: MOONS35_SHIFT_NOISE,
    };
    let mut source_train = gen_moons(MOONS35_N_TRAIN, MOONS35_NOISE, seed);
    source_train.name = "moons35_source_train".into();

    let raw_train = gen_moons(MOONS35_N_TRAIN, MOONS35_NOISE, seed.wrapping_add(1));
    let mut target_train = apply_shift(&raw_train, &spec, seed.wrapping_add(2))?;
    target_train.name = "moons35_target_train".into();

    let raw_test = gen_moons(MOONS35_N_TEST, MOONS35_NOISE, seed.wrapping_add(3));
    let mut target_test = apply_shift(&raw_test, &spec, seed.wrapping_add(4))?;
    target_test.split = Split::Test;
    target_test.name = "moons35_target_test".into();

    Ok(Moons35 {
        source_train,
        target_train,
        target_test,
    })
}

/// Writes the dataset to the CSV schema. Feature values are printed in
/// shortest round-trip form, so save -> load is bit-exact.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    dataset.validate()?;
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| Error::io(path.display().to_string(), csv_io(e)))?;
    let mut header: Vec<String> = (0..dataset.dim()).map(|i| format!("f{i}")).collect();
    if dataset.labels.is_some() {
        header.push("label".into());
    }
    writer
        .write_record(&header)
        .map_err(|e| Error::io(path.display().to_string(), csv_io(e)))?;
    for r in 0..dataset.len() {
        let mut record: Vec<String> = dataset.features.row(r).iter().map(|v| format!("{v}")).collect();
        if let Some(labels) = &dataset.labels {
            record.push(labels[r].to_string());
        }
        writer
            .write_record(&record)
            .map_err(|e| Error::io(path.display().to_string(), csv_io(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

/// Loads the CSV schema. Feature columns must be named `f0..f{d-1}`; an
/// optional trailing `label` column carries 0/1 class labels. Malformed
/// cells are reported with 1-based data row and column numbers.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(display.clone(), std::io::Error::other(e.to_string()))
            }
            _ => Error::CsvParse {
                path: display.clone(),
                row: 0,
                col: 0,
                message: e.to_string(),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::CsvParse {
            path: display.clone(),
            row: 0,
            col: 0,
            message: e.to_string(),
        })?
        .clone();

    let mut has_label = false;
    let mut dim = 0usize;
    for (i, name) in headers.iter().enumerate() {
        if name == "label" {
            if i + 1 != headers.len() {
                return Err(Error::CsvParse {
                    path: display,
                    row: 0,
                    col: i + 1,
                    message: "`label` must be the final column".into(),
                });
            }
            has_label = true;
        } else if name == format!("f{dim}") {
            dim += 1;
        } else {
            return Err(Error::CsvParse {
                path: display,
                row: 0,
                col: i + 1,
                message: format!("unexpected column `{name}` (expected `f{dim}` or `label`)"),
            });
        }
    }
    if dim == 0 {
        return Err(Error::CsvParse {
            path: display,
            row: 0,
            col: 1,
            message: "no feature columns found".into(),
        });
    }

    let expected_width = dim + usize::from(has_label);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 1;
        let record = record.map_err(|e| Error::CsvParse {
            path: display.clone(),
            row: row_no,
            col: 0,
            message: e.to_string(),
        })?;
        if record.len() != expected_width {
            return Err(Error::CsvParse {
                path: display,
                row: row_no,
                col: record.len(),
                message: format!("expected {expected_width} cells, found {}", record.len()),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for c in 0..dim {
            let cell = record.get(c).unwrap_or("");
            let value: f64 = cell.trim().parse().map_err(|_| Error::CsvParse {
                path: display.clone(),
                row: row_no,
                col: c + 1,
                message: format!("cell `{cell}` is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::CsvParse {
                    path: display,
                    row: row_no,
                    col: c + 1,
                    message: format!("cell `{cell}` is not finite"),
                });
            }
            row.push(value);
        }
        if has_label {
            let cell = record.get(dim).unwrap_or("");
            let label: usize = cell.trim().parse().map_err(|_| Error::CsvParse {
                path: display.clone(),
                row: row_no,
                col: dim + 1,
                message: format!("label `{cell}` is not 0 or 1"),
            })?;
            if label > 1 {
                return Err(Error::CsvParse {
                    path: display,
                    row: row_no,
                    col: dim + 1,
                    message: format!("label `{cell}` is not 0 or 1"),
                });
            }
            labels.push(label);
        }
        rows.push(row);
    }

    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(Dataset {
        features: Matrix::from_rows(&rows)?,
        labels: if has_label { Some(labels) } else { None },
        domain: Domain::Source,
        split: Split::Train,
        name,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moons_class0_on_unit_upper_half_circle_when_noiseless() {
        let data = gen_moons(50, 0.0, 1);
        let labels = data.labels.as_ref().unwrap();
        for r in 0..data.len() {
            if labels[r] == 0 {
                let (x, y) = (data.features.get(r, 0), data.features.get(r, 1));
                assert!(((x * x + y * y).sqrt() - 1.0).abs() < 1e-12);
                assert!(y >= -1e-12);
            }
        }
    }

    #[test]
    fn moons_deterministic_and_balanced() {
        let a = gen_moons(40, 0.1, 7);
        let b = gen_moons(40, 0.1, 7);
        assert_eq!(a, b);
        let labels = a.labels.as_ref().unwrap();
        assert_eq!(labels.iter().filter(|&&l| l == 0).count(), 40);
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 40);
    }

    #[test]
    fn blobs_zero_std_sits_on_centers() {
        let centers = [vec![1.0, 2.0], vec![-3.0, 0.5]];
        let data = gen_blobs(5, &centers, 0.0, 3);
        for r in 0..5 {
            assert_eq!(data.features.row(r), &[1.0, 2.0]);
        }
        for r in 5..10 {
            assert_eq!(data.features.row(r), &[-3.0, 0.5]);
        }
    }

    #[test]
    fn blobs_empirical_means_near_centers() {
        let centers = [vec![2.0, -1.0], vec![-2.0, 1.0]];
        let std = 0.5;
        let n = 200;
        for seed in 0..10 {
            let data = gen_blobs(n, &centers, std, seed);
            for (class, center) in centers.iter().enumerate() {
                let start = class * n;
                for t in 0..2 {
                    let mean: f64 = (start..start + n)
                        .map(|r| data.features.get(r, t))
                        .sum::<f64>()
                        / n as f64;
                    let tol = 4.0 * std / (n as f64).sqrt();
                    assert!(
                        (mean - center[t]).abs() < tol,
                        "seed {seed} class {class} coord {t}: {mean} vs {}",
                        center[t]
                    );
                }
            }
        }
    }

    #[test]
    fn identity_shift_changes_only_domain_tag() {
        let data = gen_moons(20, 0.05, 5);
        let shifted = apply_shift(&data, &ShiftSpec::identity(2), 9).unwrap();
        assert_eq!(shifted.features, data.features);
        assert_eq!(shifted.labels, data.labels);
        assert_eq!(shifted.domain, Domain::Target);
    }

    #[test]
    fn rotation_pi_twice_is_involution() {
        let data = gen_moons(15, 0.05, 11);
        let spec = ShiftSpec {
            rotation: std::f64::consts::PI,
            translation: vec![0.0, 0.0],
            scale: 1.0,
            noise_std: 0.0,
        };
        let once = apply_shift(&data, &spec, 0).unwrap();
        let twice = apply_shift(&once, &spec, 0).unwrap();
        for (a, b) in twice.features.data().iter().zip(data.features.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // Frozen from a 50-digit evaluation: rotation pi/6, scale 2,
    // translation (0.3, -0.1) applied to three fixed points.
    #[test]
    fn shift_matches_hand_computed_fixture() {
        let features = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![-0.5, 0.25],
        ])
        .unwrap();
        let data = Dataset {
            features,
            labels: Some(vec![0, 1, 0]),
            domain: Domain::Source,
            split: Split::Train,
            name: "fixture".into(),
        };
        let spec = ShiftSpec {
            rotation: std::f64::consts::FRAC_PI_6,
            translation: vec![0.3, -0.1],
            scale: 2.0,
            noise_std: 0.0,
        };
        let shifted = apply_shift(&data, &spec, 0).unwrap();
        let expected = [
            [2.0320508075688773, 0.9],
            [-0.7, 1.6320508075688773],
            [-0.81602540378443865, -0.16698729810778068],
        ];
        for r in 0..3 {
            for c in 0..2 {
                assert!(
                    (shifted.features.get(r, c) - expected[r][c]).abs() < 1e-14,
                    "row {r} col {c}: {}",
                    shifted.features.get(r, c)
                );
            }
        }
    }

    // isometry + scaling preserves relative geometry, so nearest-neighbor
    // class agreement across the shift is exact under zero noise
    #[test]
    fn noiseless_shift_preserves_class_structure() {
        let data = gen_moons(30, 0.05, 13);
        let spec = ShiftSpec {
            rotation: 0.6,
            translation: vec![1.0, -2.0],
            scale: 1.7,
            noise_std: 0.0,
        };
        let shifted = apply_shift(&data, &spec, 0).unwrap();
        let labels = data.labels.as_ref().unwrap();
        let (s, c) = spec.rotation.sin_cos();
        for r in 0..data.len() {
            // map the original point forward and compare in target space
            let (x, y) = (data.features.get(r, 0), data.features.get(r, 1));
            let mapped = [
                spec.scale * (c * x - s * y) + spec.translation[0],
                spec.scale * (s * x + c * y) + spec.translation[1],
            ];
            let mut best = usize::MAX;
            let mut best_d = f64::INFINITY;
            for o in 0..shifted.len() {
                let d = shifted.features.row_sq_dist(o, &mapped);
                if d < best_d {
                    best_d = d;
                    best = o;
                }
            }
            assert_eq!(labels[best], labels[r]);
        }
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixture.csv");
        let data = Dataset {
            features: Matrix::from_rows(&[
                vec![0.1 + 0.2, -1.0 / 3.0],
                vec![f64::MIN_POSITIVE, 12345.6789012345678],
            ])
            .unwrap(),
            labels: Some(vec![0, 1]),
            domain: Domain::Source,
            split: Split::Train,
            name: "fixture".into(),
        };
        save_csv(&data, &path).unwrap();
        let loaded = load_csv(&path).unwrap();
        assert_eq!(loaded.features.data(), data.features.data());
        assert_eq!(loaded.labels, data.labels);
    }

    #[test]
    fn csv_without_label_column_has_no_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unlabeled.csv");
        std::fs::write(&path, "f0,f1\n1.0,2.0\n3.5,-4.25\n").unwrap();
        let loaded = load_csv(&path).unwrap();
        assert!(loaded.labels.is_none());
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.features.get(1, 1), -4.25);
    }

    #[test]
    fn csv_malformed_cell_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,f1\n1.0,2.0\n3.0,4.0\n5.0,oops\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3"), "message was: {msg}");
        assert!(msg.contains("column 2"), "message was: {msg}");
    }

    #[test]
    fn csv_ragged_row_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ragged.csv");
        std::fs::write(&path, "f0,f1\n1.0,2.0\n3.0\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(err.to_string().contains("row 2"), "was: {err}");
    }

    #[test]
    fn csv_missing_file_rejected() {
        assert!(load_csv(Path::new("/nonexistent/nowhere.csv")).is_err());
    }

    #[test]
    fn moons35_is_deterministic() {
        let a = gen_moons35(7).unwrap();
        let b = gen_moons35(7).unwrap();
        assert_eq!(a.source_train, b.source_train);
        assert_eq!(a.target_train, b.target_train);
        assert_eq!(a.target_test, b.target_test);
        assert_eq!(a.target_test.split, Split::Test);
        assert_eq!(a.target_train.domain, Domain::Target);
    }
}
