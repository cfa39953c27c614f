//! LIBSVM-format ingestion, feature scaling to the encoding angle range and
//! deterministic train/validation/test splitting.

use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A dense labeled dataset with 0-based contiguous class indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Rows at `indices` as (features, label) pairs.
    pub fn rows(&self, indices: &[usize]) -> Vec<(Vec<f64>, usize)> {
        indices
            .iter()
            .map(|&i| (self.features[i].clone(), self.labels[i]))
            .collect()
    }
}

/// Disjoint index lists covering all rows of a dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Parse LIBSVM sparse text: `<label> <index>:<value> ...` with 1-based
/// indices. Absent indices read as 0; labels are remapped to contiguous
/// 0-based indices by sorted order of the distinct raw labels.
pub fn parse_libsvm(name: &str, reader: impl BufRead) -> Result<Dataset> {
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut n_features = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let label_tok = parts.next().unwrap();
        let label: i64 = label_tok.parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            column: 1,
            message: format!("invalid label {label_tok:?}"),
        })?;
        let mut entries = Vec::new();
        for tok in parts {
            let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                column: line.find(tok).unwrap_or(0) + 1,
                message: format!("expected index:value, got {tok:?}"),
            })?;
            let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: line.find(tok).unwrap_or(0) + 1,
                message: format!("invalid feature index {idx_s:?}"),
            })?;
            let val: f64 = val_s.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                column: line.find(tok).unwrap_or(0) + 1,
                message: format!("invalid feature value {val_s:?}"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    column: line.find(tok).unwrap_or(0) + 1,
                    message: "feature indices are 1-based".into(),
                });
            }
            n_features = n_features.max(idx);
            entries.push((idx - 1, val));
        }
        raw_labels.push(label);
        rows.push(entries);
    }

    if rows.is_empty() {
        return Err(Error::Ingestion(format!("dataset {name} is empty")));
    }

    let mut distinct: Vec<i64> = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| distinct.binary_search(l).unwrap())
        .collect();

    let features = rows
        .into_iter()
        .map(|entries| {
            let mut row = vec![0.0; n_features];
            for (idx, val) in entries {
                row[idx] = val;
            }
            row
        })
        .collect();

    Ok(Dataset {
        name: name.to_string(),
        features,
        labels,
        n_features,
        n_classes: distinct.len(),
    })
}

pub fn load_libsvm(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Ingestion(format!("cannot open dataset {}: {e}", path.display()))
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_libsvm(&name, std::io::BufReader::new(file))
}

/// Serialize back to LIBSVM text (all features written densely).
pub fn to_libsvm_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (row, label) in dataset.features.iter().zip(&dataset.labels) {
        out.push_str(&(label + 1).to_string());
        for (i, v) in row.iter().enumerate() {
            out.push_str(&format!(" {}:{}", i + 1, v));
        }
        out.push('\n');
    }
    out
}

/// Min-max scale every column onto [0, pi]; constant columns map to pi/2.
pub fn scale_features(dataset: &Dataset) -> Dataset {
    use std::f64::consts::PI;
    let mut scaled = dataset.clone();
    for col in 0..dataset.n_features {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in &dataset.features {
            lo = lo.min(row[col]);
            hi = hi.max(row[col]);
        }
        for row in &mut scaled.features {
            row[col] = if hi > lo {
                (row[col] - lo) / (hi - lo) * PI
            } else {
                PI / 2.0
            };
        }
    }
    scaled
}

/// Shuffle under the seed, then partition contiguously by the fractions.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be nonnegative and sum to 1, got {ft}+{fv}+{fs}"
        )));
    }
    let m = dataset.len();
    let mut indices: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..m).rev() {
        let j = rand::Rng::gen_range(&mut rng, 0..=i);
        indices.swap(i, j);
    }
    let n_train = (ft * m as f64).floor() as usize;
    let n_val = (fv * m as f64).floor() as usize;
    let train = indices[..n_train].to_vec();
    let validation = indices[n_train..n_train + n_val].to_vec();
    let test = indices[n_train + n_val..].to_vec();
    Ok(Split {
        train,
        validation,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use std::io::Cursor;

    fn parse(text: &str) -> Dataset {
        parse_libsvm("test", Cursor::new(text)).unwrap()
    }

    #[test]
    fn sparse_rows_densify() {
        let d = parse("1 1:5.1 2:3.5\n2 3:1.0 4:2.0\n");
        assert_eq!(d.n_features, 4);
        assert_eq!(d.features[0], vec![5.1, 3.5, 0.0, 0.0]);
        assert_eq!(d.features[1], vec![0.0, 0.0, 1.0, 2.0]);
        assert_eq!(d.labels, vec![0, 1]);
    }

    #[test]
    fn labels_remap_sorted_contiguous() {
        let d = parse("7 1:1\n-1 1:2\n3 1:3\n7 1:4\n");
        // distinct sorted: -1, 3, 7
        assert_eq!(d.labels, vec![2, 0, 1, 2]);
        assert_eq!(d.n_classes, 3);
    }

    #[test]
    fn malformed_line_reports_position() {
        let err = parse_libsvm("t", Cursor::new("1 1:5\nx 1:2\n")).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_libsvm("t", Cursor::new("")).is_err());
        assert!(parse_libsvm("t", Cursor::new("1 0:5\n")).is_err());
    }

    #[test]
    fn iris_file_shape() {
        let d = load_libsvm(std::path::Path::new(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../../data/iris.libsvm"
        )))
        .unwrap();
        assert_eq!(d.n_features, 4);
        assert_eq!(d.n_classes, 3);
        assert_eq!(d.len(), 150);
    }

    #[test]
    fn scaling_maps_onto_angle_range() {
        let d = parse("1 1:0 2:7\n1 1:5 2:7\n2 1:10 2:7\n");
        let s = scale_features(&d);
        assert!((s.features[0][0] - 0.0).abs() < 1e-12);
        assert!((s.features[1][0] - PI / 2.0).abs() < 1e-12);
        assert!((s.features[2][0] - PI).abs() < 1e-12);
        // constant column
        assert!((s.features[0][1] - PI / 2.0).abs() < 1e-12);
        // idempotent
        let ss = scale_features(&s);
        for (a, b) in ss.features.iter().flatten().zip(s.features.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn libsvm_round_trip() {
        let d = parse("1 1:5.125 2:3.5\n2 1:1.25 2:0.5\n3 1:0 2:9\n");
        let d2 = parse(&to_libsvm_string(&d));
        assert_eq!(d.labels, d2.labels);
        for (a, b) in d.features.iter().flatten().zip(d2.features.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn split_is_disjoint_covering_and_deterministic() {
        let d = parse(&"1 1:1\n".repeat(150));
        let s = split(&d, (0.4, 0.3, 0.3), 7).unwrap();
        assert_eq!(s.train.len(), 60);
        assert_eq!(s.validation.len(), 45);
        assert_eq!(s.test.len(), 45);
        let mut all: Vec<usize> = s
            .train
            .iter()
            .chain(&s.validation)
            .chain(&s.test)
            .cloned()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..150).collect::<Vec<_>>());

        let s2 = split(&d, (0.4, 0.3, 0.3), 7).unwrap();
        assert_eq!(s.train, s2.train);
        assert_eq!(s.validation, s2.validation);
        assert_eq!(s.test, s2.test);

        let full = split(&d, (1.0, 0.0, 0.0), 7).unwrap();
        assert_eq!(full.train.len(), 150);
        assert!(full.test.is_empty());

        assert!(split(&d, (0.5, 0.3, 0.3), 7).is_err());
    }
}
