//! CSV ingestion for real-data analyses and CSV export of datasets.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::numerics::mean_sd;
use crate::scalar::Scalar;

/// Column mapping for [`ingest_csv`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub y_col: String,
    pub d_col: String,
    pub x_cols: Vec<String>,
    pub z_cols: Vec<String>,
    /// Center and scale (sd with divisor n - 1) the non-intercept Z columns.
    pub standardize_z: bool,
}

impl CsvSchema {
    /// The layout written by [`write_dataset_csv`].
    pub fn for_export(q: usize, dz: usize) -> Self {
        Self {
            y_col: "y".into(),
            d_col: "d".into(),
            x_cols: (1..q).map(|j| format!("x{j}")).collect(),
            z_cols: (1..dz).map(|j| format!("z{j}")).collect(),
            standardize_z: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested<T> {
    pub dataset: Dataset<T>,
    /// Rows dropped because a used column was missing.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "null" | "NULL")
}

pub fn ingest_csv<T: Scalar>(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Ingested<T>> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(file, schema)
}

/// Same as [`ingest_csv`] over any reader.
pub fn ingest_reader<T: Scalar, R: Read>(reader: R, schema: &CsvSchema) -> Result<Ingested<T>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(&schema.y_col)?;
    let d_idx = find(&schema.d_col)?;
    let x_idx = schema.x_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;
    let z_idx = schema.z_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut d = Vec::new();
    let mut xs: Vec<Vec<f64>> = vec![Vec::new(); x_idx.len()];
    let mut zs: Vec<Vec<f64>> = vec![Vec::new(); z_idx.len()];
    let mut dropped = 0;

    let used: Vec<(usize, &str)> = std::iter::once((y_idx, schema.y_col.as_str()))
        .chain(std::iter::once((d_idx, schema.d_col.as_str())))
        .chain(x_idx.iter().copied().zip(schema.x_cols.iter().map(String::as_str)))
        .chain(z_idx.iter().copied().zip(schema.z_cols.iter().map(String::as_str)))
        .collect();

    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(row + 2, |p| p.line() as usize);
        let mut values = Vec::with_capacity(used.len());
        let mut missing = false;
        for &(idx, name) in &used {
            let cell = rec.get(idx).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                break;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: line,
                column: name.to_string(),
                message: format!("`{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { row: line, column: name.to_string(), message: "non-finite value".into() });
            }
            values.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        y.push(values[0]);
        d.push(values[1]);
        let mut it = values[2..].iter();
        for col in xs.iter_mut().chain(zs.iter_mut()) {
            col.push(*it.next().expect("one value per used column"));
        }
    }

    let n = y.len();
    if n == 0 {
        return Err(Error::InvalidData("no complete rows".into()));
    }
    if schema.standardize_z {
        for (col, name) in zs.iter_mut().zip(&schema.z_cols) {
            if is_intercept(col) {
                continue;
            }
            let (m, sd) = mean_sd(col);
            if !(sd > 0.0) {
                return Err(Error::ZeroVariance(name.clone()));
            }
            col.iter_mut().for_each(|v| *v = (*v - m) / sd);
        }
    }

    let xcols = with_intercept(xs, n);
    let zcols = with_intercept(zs, n);
    let (q, dz) = (xcols.len(), zcols.len());
    let to_t = |v: f64| T::c(v);
    let x: Vec<T> = (0..n).flat_map(|i| xcols.iter().map(move |c| c[i])).map(to_t).collect();
    let z: Vec<T> = (0..n).flat_map(|i| zcols.iter().map(move |c| c[i])).map(to_t).collect();
    let dataset = Dataset::new(y.into_iter().map(to_t).collect(), x, q, d.into_iter().map(to_t).collect(), z, dz)?;
    Ok(Ingested { dataset, dropped_rows: dropped })
}

fn is_intercept(col: &[f64]) -> bool {
    col.iter().all(|&v| v == 1.0)
}

/// Puts an all-ones column first: an existing one is moved, otherwise one is added.
fn with_intercept(mut cols: Vec<Vec<f64>>, n: usize) -> Vec<Vec<f64>> {
    match cols.iter().position(|c| is_intercept(c)) {
        Some(pos) => {
            let c = cols.remove(pos);
            cols.insert(0, c);
        }
        None => cols.insert(0, vec![1.0; n]),
    }
    cols
}

/// Writes `y, d, x1.., z1..` (intercepts omitted) with a header row.
pub fn write_dataset_csv<T: Scalar, W: Write>(ds: &Dataset<T>, out: W) -> Result<()> {
    let schema = CsvSchema::for_export(ds.q(), ds.dz());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![schema.y_col.clone(), schema.d_col.clone()];
    header.extend(schema.x_cols.iter().cloned());
    header.extend(schema.z_cols.iter().cloned());
    w.write_record(&header)?;
    let mut rec = Vec::with_capacity(header.len());
    for i in 0..ds.n() {
        rec.clear();
        rec.push(ds.y()[i].to_f64_lossy().to_string());
        rec.push(ds.d()[i].to_f64_lossy().to_string());
        rec.extend(ds.x_row(i)[1..].iter().map(|v| v.to_f64_lossy().to_string()));
        rec.extend(ds.z_row(i)[1..].iter().map(|v| v.to_f64_lossy().to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn schema(z: &[&str], standardize: bool) -> CsvSchema {
        CsvSchema {
            y_col: "y".into(),
            d_col: "trt".into(),
            x_cols: vec!["age".into()],
            z_cols: z.iter().map(|s| s.to_string()).collect(),
            standardize_z: standardize,
        }
    }

    #[test]
    fn standardizes_z_by_hand_values() {
        let data = "y,trt,age,w\n1.0,0,30,2\n2.0,1,40,4\n1.5,1,50,6\n";
        let got: Ingested<f64> = ingest_reader(data.as_bytes(), &schema(&["w"], true)).unwrap();
        let ds = got.dataset;
        assert_eq!((ds.q(), ds.dz()), (2, 2));
        let z: Vec<f64> = (0..3).map(|i| ds.z_row(i)[1]).collect();
        for (a, b) in z.iter().zip([-1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(ds.x_row(2), &[1.0, 50.0]);
    }

    #[test]
    fn missing_column_is_named() {
        let data = "y,treatment,age\n1,0,3\n";
        match ingest_reader::<f64, _>(data.as_bytes(), &schema(&[], false)) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "trt"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_treatment_is_rejected() {
        let data = "y,trt,age\n1,1,3\n2,1,4\n3,1,5\n";
        assert!(matches!(
            ingest_reader::<f64, _>(data.as_bytes(), &schema(&[], false)),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn non_numeric_cell_reports_location() {
        let data = "y,trt,age\n1,0,3\n2,1,abc\n";
        match ingest_reader::<f64, _>(data.as_bytes(), &schema(&[], false)) {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn drops_incomplete_rows_and_flags_zero_variance() {
        let data = "y,trt,age,w\n1,0,3,1\n2,1,NA,5\n3,1,5,\n4,1,6,7\n";
        let got: Ingested<f64> = ingest_reader(data.as_bytes(), &schema(&["w"], false)).unwrap();
        assert_eq!(got.dropped_rows, 2);
        assert_eq!(got.dataset.n(), 2);

        let flat = "y,trt,age,w\n1,0,3,2\n2,1,4,2\n";
        assert!(matches!(
            ingest_reader::<f64, _>(flat.as_bytes(), &schema(&["w"], true)),
            Err(Error::ZeroVariance(c)) if c == "w"
        ));
    }

    #[test]
    fn export_then_ingest_round_trips() {
        let ds = Dataset::from_rows(
            vec![0.1, -2.5, 3.25],
            &[vec![1.0, 0.5], vec![1.0, -1.0 / 3.0], vec![1.0, 2.0]],
            vec![0.0, 1.0, 1.0],
            &[vec![1.0, 0.7, -0.2], vec![1.0, 1e-9, 4.0], vec![1.0, -3.0, 0.0]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&ds, &mut buf).unwrap();
        let back: Ingested<f64> = ingest_reader(buf.as_slice(), &CsvSchema::for_export(2, 3)).unwrap();
        assert_eq!(back.dataset, ds);
    }
}
