//! Curve CSV format and atomic file output.
//!
//! ```text
//! t,0.0,0.5,1.0[,label]
//! c1,0.1,0.3,0.2[,0]
//! ```
//!
//! Grid points outside `[0,1]` are mapped affinely onto `[0,1]` for the
//! computations; the original points are kept for output.

use std::fs;
use std::io::Write;
use std::path::Path;

use fmahal::{Curve, FunctionalSample, Grid};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    /// Grid points as written in the file.
    pub points: Vec<f64>,
    pub ids: Vec<String>,
    /// Curves on the grid rescaled to `[0,1]`, with labels if present.
    pub sample: FunctionalSample,
}

impl CurveTable {
    /// Wraps a sample whose grid already lies in `[0,1]`; ids are `c<i>`.
    pub fn from_sample(sample: FunctionalSample) -> Self {
        CurveTable {
            points: sample.grid().points().to_vec(),
            ids: (0..sample.len()).map(|i| format!("c{i}")).collect(),
            sample,
        }
    }
}

pub fn read_curves(path: &Path) -> CliResult<CurveTable> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    parse_curves(&bytes)
}

fn parse_number(field: &str, row: usize, column: usize) -> CliResult<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| CliError::parse(row, column, format!("not a number: {field:?}")))?;
    if !v.is_finite() {
        return Err(CliError::parse(
            row,
            column,
            format!("non-finite value {field:?}"),
        ));
    }
    Ok(v)
}

pub fn parse_curves(bytes: &[u8]) -> CliResult<CurveTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(CliError::parse(1, 1, "empty input")),
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
    };
    if header.get(0) != Some("t") {
        return Err(CliError::parse(1, 1, "header must start with \"t\""));
    }
    let labelled = header.len() > 2 && header.get(header.len() - 1) == Some("label");
    let p = header.len() - 1 - usize::from(labelled);
    if p < 2 {
        return Err(CliError::parse(
            1,
            header.len(),
            "need at least two grid points",
        ));
    }
    let mut points = Vec::with_capacity(p);
    for j in 0..p {
        let t = parse_number(&header[j + 1], 1, j + 2)?;
        if let Some(prev) = points.last() {
            if t <= *prev {
                return Err(CliError::parse(
                    1,
                    j + 2,
                    "grid points must be strictly increasing",
                ));
            }
        }
        points.push(t);
    }

    let mut ids = Vec::new();
    let mut curves = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(e, row))?;
        if record.len() != header.len() {
            return Err(CliError::parse(
                row,
                record.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        ids.push(record[0].to_string());
        let values = (0..p)
            .map(|j| parse_number(&record[j + 1], row, j + 2))
            .collect::<CliResult<Vec<_>>>()?;
        curves.push(Curve::from(values));
        if labelled {
            let field = &record[p + 1];
            let label: u32 = field.parse().map_err(|_| {
                CliError::parse(
                    row,
                    p + 2,
                    format!("label must be a nonnegative integer, got {field:?}"),
                )
            })?;
            labels.push(label);
        }
    }
    if curves.is_empty() {
        return Err(CliError::parse(2, 1, "no curves after the header"));
    }

    let grid = Grid::from_points(unit_points(&points))?;
    let sample = FunctionalSample::new(grid, curves, labelled.then_some(labels))?;
    Ok(CurveTable {
        points,
        ids,
        sample,
    })
}

fn csv_error(e: csv::Error, row: usize) -> CliError {
    CliError::parse(row, 1, e.to_string())
}

/// Points unchanged if inside `[0,1]`, otherwise mapped onto it.
fn unit_points(points: &[f64]) -> Vec<f64> {
    let (lo, hi) = (points[0], points[points.len() - 1]);
    if lo >= 0.0 && hi <= 1.0 {
        return points.to_vec();
    }
    let mut scaled: Vec<f64> = points.iter().map(|t| (t - lo) / (hi - lo)).collect();
    // pin the ends against rounding
    scaled[0] = 0.0;
    *scaled.last_mut().unwrap() = 1.0;
    scaled
}

/// 17 significant digits: enough to read back the same `f64`.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn curves_to_csv(table: &CurveTable) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let labels = table.sample.labels();
    let mut header = vec!["t".to_string()];
    header.extend(table.points.iter().map(|t| format_value(*t)));
    if labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header).expect("writing to memory");
    for (i, curve) in table.sample.curves().iter().enumerate() {
        let mut row = vec![table.ids[i].clone()];
        row.extend(curve.iter().map(|v| format_value(*v)));
        if let Some(l) = labels {
            row.push(l[i].to_string());
        }
        w.write_record(&row).expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

/// Writes via a temporary file in the same directory and a rename, so a
/// failed command never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| CliError::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(CliError::io(path, e));
    }
    Ok(())
}

/// Writes every `(path, bytes)` pair or, on the first failure, removes the
/// ones already written.
pub fn write_all_atomic(outputs: &[(&Path, Vec<u8>)]) -> CliResult<()> {
    for (k, (path, bytes)) in outputs.iter().enumerate() {
        if let Err(e) = write_atomic(path, bytes) {
            for (done, _) in &outputs[..k] {
                let _ = fs::remove_file(done);
            }
            return Err(e);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_labels_and_locates_errors() {
        let t = parse_curves(b"t,0,0.5,1,label\na,1,2,3,0\nb,4,5,6,1\n").unwrap();
        assert_eq!(t.ids, ["a", "b"]);
        assert_eq!(t.sample.labels().unwrap(), [0, 1]);
        assert_eq!(t.sample.curves()[1].values(), [4.0, 5.0, 6.0]);

        let err = parse_curves(b"t,0,0.5,1\na,1,x,3\n").unwrap_err();
        assert!(
            matches!(
                err,
                CliError::Parse {
                    row: 2,
                    column: 3,
                    ..
                }
            ),
            "{err}"
        );
        let err = parse_curves(b"t,0,0.5,1\na,1,2\n").unwrap_err();
        assert!(matches!(err, CliError::Parse { row: 2, .. }));
        let err = parse_curves(b"t,0,0.5,0.4\na,1,2,3\n").unwrap_err();
        assert!(matches!(
            err,
            CliError::Parse {
                row: 1,
                column: 4,
                ..
            }
        ));
        assert!(matches!(
            parse_curves(b"").unwrap_err(),
            CliError::Parse { row: 1, .. }
        ));
        assert!(matches!(
            parse_curves(b"t,0,1\n").unwrap_err(),
            CliError::Parse { row: 2, .. }
        ));
    }

    #[test]
    fn rescales_points_outside_unit_interval() {
        let t = parse_curves(b"t,1,3,5\na,1,2,3\n").unwrap();
        assert_eq!(t.points, [1.0, 3.0, 5.0]);
        assert_eq!(t.sample.grid().points(), [0.0, 0.5, 1.0]);
        let back = parse_curves(&curves_to_csv(&t)).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn formatting_round_trips() {
        for v in [
            0.1,
            1.0 / 3.0,
            -2.5e-300,
            6.02e23,
            f64::MIN_POSITIVE,
            f64::MAX,
        ] {
            assert_eq!(
                format_value(v).parse::<f64>().unwrap().to_bits(),
                v.to_bits()
            );
        }
    }
}
