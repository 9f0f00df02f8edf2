//! Dataset CSV contract: a header `f0,f1,…,f{d-1},label` followed by one
//! numeric row per sample. Row order is preserved.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::trace::fmt_f64;
use crate::problems::Dataset;

pub fn load_csv_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv_dataset(file, path)
}

/// Parses from any reader; `path` is only used in error messages.
pub fn read_csv_dataset<R: Read>(input: R, path: &Path) -> Result<Dataset> {
    let err = |line: usize, message: String| Error::Dataset {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let label_col = header
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| err(1, "missing required column `label`".into()))?;
    if label_col != header.len() - 1 {
        return Err(err(1, "column `label` must be last".into()));
    }
    let dim = header.len() - 1;
    if dim == 0 {
        return Err(err(1, "no feature columns before `label`".into()));
    }
    for (j, name) in header.iter().take(dim).enumerate() {
        if name != format!("f{j}") {
            return Err(err(1, format!("expected feature column `f{j}`, found `{name}`")));
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| err(line, e.to_string()))?;
        if record.len() != dim + 1 {
            return Err(err(
                line,
                format!("expected {} fields, found {}", dim + 1, record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| err(line, format!("non-numeric value {cell:?} in column `{}`", &header[j])))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite value in column `{}`", &header[j])));
            }
            if j == dim {
                labels.push(v);
            } else {
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(err(2, "dataset has no rows".into()));
    }
    Dataset::new(dim, features, labels)
}

pub fn write_csv_dataset(data: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_dataset(data, &mut out).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_dataset<W: Write>(data: &Dataset, out: &mut W) -> std::io::Result<()> {
    let header: Vec<String> = (0..data.dim())
        .map(|j| format!("f{j}"))
        .chain(["label".into()])
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.len() {
        let cells: Vec<String> = data
            .row(i)
            .iter()
            .chain([&data.label(i)])
            .map(|v| fmt_f64(*v))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::SyntheticLogistic;

    fn parse(text: &str) -> Result<Dataset> {
        read_csv_dataset(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn two_rows() {
        let d = parse("f0,f1,label\n1,2,0\n3.5,-4,1\n").unwrap();
        assert_eq!((d.len(), d.dim()), (2, 2));
        assert_eq!(d.row(1), &[3.5, -4.0]);
        assert_eq!(d.labels(), &[0.0, 1.0]);
    }

    #[test]
    fn errors_name_lines_and_columns() {
        let e = parse("f0,f1,y\n1,2,0\n").unwrap_err().to_string();
        assert!(e.contains("label"), "{e}");
        let e = parse("f0,label\n1,0\nx,1\n").unwrap_err().to_string();
        assert!(e.contains("line 3") && e.contains("f0"), "{e}");
        let e = parse("f0,label\n1,0\n1,2,3\n").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        assert!(parse("f0,label\n").is_err());
        assert!(parse("a,label\n1,0\n").is_err());
    }

    #[test]
    fn round_trip() {
        let data = SyntheticLogistic {
            n_total: 40,
            dim: 3,
            imbalance_ratio: 0.3,
            separation: 1.0,
            seed: 5,
        }
        .generate()
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv_dataset(&data, &path).unwrap();
        assert_eq!(load_csv_dataset(&path).unwrap(), data);
    }
}
