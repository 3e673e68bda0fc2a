use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::Dataset;
use crate::error::{Error, Result};
use crate::netcore::Tensor;

/// Column reference: a zero-based index or a header name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.trim().to_string()),
        })
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Column::Index(i) => write!(f, "#{i}"),
            Column::Name(n) => f.write_str(n),
        }
    }
}

/// Reads a comma-separated file into a dataset.
///
/// The first record is a header iff any of its cells is not a number.
/// Row numbers in errors are 1-based file lines.
pub fn load_csv(path: &Path, feature_cols: &[Column], target_cols: &[Column]) -> Result<Dataset> {
    if feature_cols.is_empty() || target_cols.is_empty() {
        return Err(Error::CsvSchema {
            path: path.to_path_buf(),
            message: "at least one feature and one target column required".into(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut records = reader.records();

    let first = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => return Err(Error::EmptyDataset),
    };
    let is_header = first.iter().any(|c| c.trim().parse::<f64>().is_err());
    let header: Option<Vec<String>> =
        is_header.then(|| first.iter().map(|c| c.trim().to_string()).collect());

    let resolve = |c: &Column| -> Result<(usize, String)> {
        match c {
            Column::Index(i) => {
                let name = header
                    .as_ref()
                    .and_then(|h| h.get(*i).cloned())
                    .unwrap_or_else(|| format!("col{i}"));
                Ok((*i, name))
            }
            Column::Name(n) => header
                .as_ref()
                .and_then(|h| h.iter().position(|x| x == n))
                .map(|i| (i, n.clone()))
                .ok_or_else(|| Error::CsvSchema {
                    path: path.to_path_buf(),
                    message: format!("column {n:?} not found in header"),
                }),
        }
    };
    let features: Vec<(usize, String)> = feature_cols.iter().map(resolve).collect::<Result<_>>()?;
    let targets: Vec<(usize, String)> = target_cols.iter().map(resolve).collect::<Result<_>>()?;

    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut rows = 0usize;
    let mut parse_row = |line: usize, rec: &csv::StringRecord| -> Result<()> {
        for (cols, out) in [(&features, &mut x), (&targets, &mut y)] {
            for (idx, name) in cols.iter() {
                let cell = rec.get(*idx).map(str::trim).unwrap_or("");
                let cell_err = |message: String| Error::CsvCell {
                    path: path.to_path_buf(),
                    row: line,
                    column: name.clone(),
                    message,
                };
                if cell.is_empty() {
                    return Err(cell_err("missing value".into()));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| cell_err(format!("not a number: {cell:?}")))?;
                if !v.is_finite() {
                    return Err(cell_err(format!("non-finite value {cell:?}")));
                }
                out.push(v);
            }
        }
        Ok(())
    };
    let mut line = 1;
    if !is_header {
        parse_row(line, &first)?;
        rows += 1;
    }
    for rec in records {
        line += 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        parse_row(line, &rec)?;
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptyDataset);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut d = Dataset::new(
        name,
        Tensor::new(vec![rows, features.len()], x)?,
        Tensor::new(vec![rows, targets.len()], y)?,
    )?;
    d.feature_names = features.into_iter().map(|c| c.1).collect();
    d.target_names = targets.into_iter().map(|c| c.1).collect();
    Ok(d)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::CsvSchema {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn cols(s: &[&str]) -> Vec<Column> {
        s.iter().map(|c| c.parse().unwrap()).collect()
    }

    #[test]
    fn two_rows_with_header() {
        let f = write("a,b,y\n1,2,3\n4,5,6\n");
        let d = load_csv(f.path(), &cols(&["a", "b"]), &cols(&["y"])).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.features.data(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(d.targets.data(), &[3.0, 6.0]);
        assert_eq!(d.feature_names, vec!["a", "b"]);
    }

    #[test]
    fn headerless_by_index() {
        let f = write("1,2,3\n4,5,6\n");
        let d = load_csv(f.path(), &cols(&["0"]), &cols(&["2"])).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.targets.data(), &[3.0, 6.0]);
    }

    #[test]
    fn missing_cell_names_row_and_column() {
        let f = write("a,b,y\n1,2,3\n4,,6\n");
        match load_csv(f.path(), &cols(&["a", "b"]), &cols(&["y"])) {
            Err(Error::CsvCell { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write("a,b,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &cols(&["a"]), &cols(&["y"])),
            Err(Error::CsvCell { row: 2, .. })
        ));
    }

    #[test]
    fn non_numeric_cell() {
        let f = write("a,y\n1,2\nfoo,3\n");
        assert!(matches!(
            load_csv(f.path(), &cols(&["a"]), &cols(&["y"])),
            Err(Error::CsvCell { row: 3, .. })
        ));
    }

    #[test]
    fn header_only_is_empty() {
        let f = write("a,b,y\n");
        assert!(matches!(
            load_csv(f.path(), &cols(&["a"]), &cols(&["y"])),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn unknown_column() {
        let f = write("a,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &cols(&["zzz"]), &cols(&["y"])),
            Err(Error::CsvSchema { .. })
        ));
    }

    #[test]
    fn missing_file() {
        let p = Path::new("/nonexistent/definitely.csv");
        assert!(matches!(
            load_csv(p, &cols(&["a"]), &cols(&["y"])),
            Err(Error::Io { .. })
        ));
    }
}
