//! Dataset CSVs: a header row, an outcome column named `y`, and every other
//! column a feature in file order. Lines starting with `#` are comments.

use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use msda::{DomainData, Features};
use ndarray::{Array1, Array2, ArrayView1};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Option<Array1<f64>>,
}

pub fn read_table<R: Read>(r: R, name: &str) -> Result<Table, String> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).flexible(true).from_reader(r);
    let headers: Vec<String> =
        reader.headers().map_err(|e| format!("{name}: {e}"))?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(format!("{name}: missing header row"));
    }
    if let Some(dup) = headers.iter().enumerate().find(|(i, h)| headers[..*i].contains(h)) {
        return Err(format!("{name}: duplicate column `{}`", dup.1));
    }
    let y_col = headers.iter().position(|h| h == "y");
    let feature_names: Vec<String> = headers.iter().filter(|h| *h != "y").cloned().collect();
    if feature_names.is_empty() {
        return Err(format!("{name}: no feature columns"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| format!("{name}: {e}"))?;
        let line = rec.position().map_or(i + 2, |p| p.line() as usize);
        if rec.len() != headers.len() {
            return Err(format!("{name}, line {line}: expected {} fields, found {}", headers.len(), rec.len()));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| format!("{name}, line {line}, column `{}`: `{field}` is not a number", headers[j]))?;
            if !v.is_finite() {
                return Err(format!("{name}, line {line}, column `{}`: non-finite value", headers[j]));
            }
            if Some(j) == y_col {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(format!("{name}: no data rows"));
    }
    let x = Array2::from_shape_vec((rows, feature_names.len()), xs).expect("row-major fill");
    Ok(Table { feature_names, x, y: y_col.map(|_| Array1::from(ys)) })
}

fn open(path: &Path) -> Result<std::fs::File, String> {
    std::fs::File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))
}

/// A labeled source domain; the `y` column is required.
pub fn load_source(path: &Path) -> Result<(Vec<String>, DomainData), String> {
    let name = path.display().to_string();
    let t = read_table(open(path)?, &name)?;
    let y = t.y.ok_or_else(|| format!("{name}: source file has no `y` column"))?;
    let d = DomainData::labeled(t.x, y).map_err(|e| format!("{name}: {e}"))?;
    Ok((t.feature_names, d))
}

/// Unlabeled features; a `y` column, if present, is dropped with a warning.
pub fn load_features(path: &Path) -> Result<(Vec<String>, Features), String> {
    let name = path.display().to_string();
    let t = read_table(open(path)?, &name)?;
    if t.y.is_some() {
        warn!("{name}: ignoring the `y` column of an unlabeled file");
    }
    let f = Features::new(t.x).map_err(|e| format!("{name}: {e}"))?;
    Ok((t.feature_names, f))
}

/// One `prediction` column after a `# config:` provenance line.
pub fn write_predictions<W: Write>(mut w: W, pred: ArrayView1<f64>, provenance: &str) -> std::io::Result<()> {
    writeln!(w, "# config: {provenance}")?;
    writeln!(w, "prediction")?;
    for v in pred {
        writeln!(w, "{v}")?;
    }
    w.flush()
}
