use std::path::Path;

use super::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which CSV column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for LabelColumn {
    fn from(s: &str) -> Self {
        LabelColumn::Name(s.to_owned())
    }
}

impl From<usize> for LabelColumn {
    fn from(i: usize) -> Self {
        LabelColumn::Index(i)
    }
}

/// Load a headered CSV. Every column except the label column must be numeric.
/// Labels are mapped to dense indices in first-occurrence order and the
/// original label strings are kept as class names.
pub fn load_csv_labeled<T: Scalar>(
    path: impl AsRef<Path>,
    label_column: impl Into<LabelColumn>,
) -> Result<(FeatureMatrix<T>, LabelVector)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let label_idx = match label_column.into() {
        LabelColumn::Name(name) => headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::config(format!("label column {name:?} not found in {}", path.display())))?,
        LabelColumn::Index(i) if i < headers.len() => i,
        LabelColumn::Index(i) => {
            return Err(Error::config(format!(
                "label column index {i} out of range ({} columns)",
                headers.len()
            )))
        }
    };

    let mut names: Vec<String> = Vec::new();
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        // header is line 1, so data row i sits on line i + 2
        let line = row_no + 2;
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                let key = field.trim();
                let id = match names.iter().position(|n| n == key) {
                    Some(id) => id,
                    None => {
                        names.push(key.to_owned());
                        names.len() - 1
                    }
                };
                labels.push(id);
                continue;
            }
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: line,
                column: headers.get(col).unwrap_or("?").to_owned(),
                message: format!("non-numeric value {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: headers.get(col).unwrap_or("?").to_owned(),
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(T::from_f64_lossy(v));
        }
    }
    let width = headers.len() - 1;
    let features = FeatureMatrix::new(values, labels.len(), width)?;
    let class_count = names.len().max(1);
    let labels = LabelVector::new(labels, class_count)?;
    let labels = if names.is_empty() {
        labels
    } else {
        labels.with_names(names)?
    };
    Ok((features, labels))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            row: line,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, body: &str) -> std::path::PathBuf {
        let p = dir.path().join("data.csv");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn labels_in_first_occurrence_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "f0,label,f1\n1.5,b,2\n0.5,a,3\n");
        let (x, y) = load_csv_labeled::<f64>(&p, "label").unwrap();
        assert_eq!(x.row(0), &[1.5, 2.0]);
        assert_eq!(y.labels(), &[0, 1]);
        assert_eq!(y.class_names(), &["b".to_owned(), "a".to_owned()]);
    }

    #[test]
    fn label_by_index() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x,y\n0.1,a\n0.2,b\n0.3,a\n");
        let (x, y) = load_csv_labeled::<f32>(&p, 1usize).unwrap();
        assert_eq!(x.feature_count(), 1);
        assert_eq!(y.labels(), &[0, 1, 0]);
    }

    #[test]
    fn missing_label_column_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x,y\n0.1,0.2\n");
        assert!(matches!(load_csv_labeled::<f64>(&p, "class"), Err(Error::Config(_))));
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "x,y,label\n0.1,0.2,a\n0.3,oops,b\n");
        match load_csv_labeled::<f64>(&p, "label") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "y");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
