//! Dataset files, run metadata and atomic output.
//!
//! Datasets are CSV with a header whose first column is `y`; every other
//! column is a covariate and rows are in time order. Floats are written with
//! Rust's shortest round-trip formatting, so a written file parses back to
//! the identical values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricRow;
use crate::sim::{self, SimConfig};

/// Provenance block embedded in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub program: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub rng: String,
    pub config: serde_json::Value,
}

impl RunMetadata {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            program: "glslasso".into(),
            version: crate::VERSION.into(),
            command: command.into(),
            seed,
            rng: sim::RNG_NAME.into(),
            config,
        }
    }

    /// `#`-prefixed header lines placed ahead of CSV output.
    pub fn csv_comment(&self) -> Result<String> {
        Ok(format!(
            "# {} {}\n# metadata {}\n",
            self.program,
            self.version,
            serde_json::to_string(self)?
        ))
    }
}

fn parse_error(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message: message.into(),
    }
}

fn format_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a dataset CSV. Rows and columns in errors are 1-based file positions.
pub fn parse_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| format_error(path, format!("cannot open: {e}")))?;
    read_dataset(BufReader::new(file), path)
}

/// As [`parse_dataset`]; `path` only labels errors.
pub fn read_dataset<R: Read>(reader: R, path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| format_error(path, format!("malformed header: {e}")))?
        .clone();
    if header.is_empty() || header.iter().all(str::is_empty) {
        return Err(format_error(path, "empty file: expected a header starting with `y`"));
    }
    if header.get(0) != Some("y") {
        return Err(parse_error(
            path,
            1,
            1,
            format!("first column must be `y`, found {:?}", header.get(0).unwrap_or("")),
        ));
    }
    let width = header.len();
    if width < 2 {
        return Err(format_error(path, "no covariate columns after `y`"));
    }

    let mut values: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, row, 0, format!("malformed CSV: {e}"))
        })?;
        let row = record.position().map_or(n + 2, |p| p.line() as usize);
        if record.len() != width {
            return Err(parse_error(
                path,
                row,
                record.len().min(width) + 1,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(parse_error(path, row, j + 1, "missing value"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_error(path, row, j + 1, format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(path, row, j + 1, format!("non-finite value: {cell:?}")));
            }
            values.push(v);
        }
        n += 1;
    }
    if n == 0 {
        return Err(format_error(path, "no data rows"));
    }
    let all = Array2::from_shape_vec((n, width), values).expect("row lengths checked");
    let y: Array1<f64> = all.column(0).to_owned();
    let x = all.slice(ndarray::s![.., 1..]).to_owned();
    Dataset::new(y, x)
}

/// Writes `y,x1,...,xp` then one row per observation.
pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["y".to_string()];
    header.extend((1..=dataset.n_vars()).map(|j| format!("x{j}")));
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(dataset.n_vars() + 1);
    for t in 0..dataset.n_obs() {
        row.clear();
        row.push(dataset.y[t].to_string());
        row.extend(dataset.x.row(t).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Creates `path` through a temporary file in the same directory, so a
/// failure never leaves a partial file behind.
pub fn atomic_write<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let tmp = staged_write(path, fill)?;
    commit(tmp, path)
}

/// A written temporary file waiting to be moved into place.
pub struct Staged {
    file: tempfile::NamedTempFile,
    target: PathBuf,
}

/// Writes into a temporary sibling of `path` without publishing it.
pub fn stage<F>(path: &Path, fill: F) -> Result<Staged>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    Ok(Staged {
        file: staged_write(path, fill)?,
        target: path.to_path_buf(),
    })
}

impl Staged {
    pub fn commit(self) -> Result<()> {
        commit(self.file, &self.target)
    }
}

fn staged_write<F>(path: &Path, fill: F) -> Result<tempfile::NamedTempFile>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let tmp = tempfile::Builder::new()
        .prefix(".glslasso-")
        .tempfile_in(dir)
        .map_err(|e| format_error(path, format!("cannot create output: {e}")))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    Ok(tmp)
}

fn commit(tmp: tempfile::NamedTempFile, path: &Path) -> Result<()> {
    tmp.persist(path)
        .map_err(|e| format_error(path, format!("cannot write output: {}", e.error)))?;
    Ok(())
}

pub fn write_dataset_file(dataset: &Dataset, path: &Path) -> Result<()> {
    atomic_write(path, |w| write_dataset(dataset, w))
}

/// Pretty JSON with a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(SimConfig),
    Many(Vec<SimConfig>),
}

/// A single simulation config or an array of them (one per cell).
pub fn read_sim_configs(path: &Path) -> Result<Vec<SimConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| format_error(path, format!("cannot open: {e}")))?;
    let parsed: OneOrMany = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(_) => {
            // rerun against the concrete shape for a useful message
            let err = if text.trim_start().starts_with('[') {
                serde_json::from_str::<Vec<SimConfig>>(&text).err()
            } else {
                serde_json::from_str::<SimConfig>(&text).err()
            };
            let msg = err.map_or_else(|| "invalid simulation config".to_string(), |e| e.to_string());
            return Err(format_error(path, msg));
        }
    };
    let configs = match parsed {
        OneOrMany::One(c) => vec![c],
        OneOrMany::Many(v) => v,
    };
    if configs.is_empty() {
        return Err(format_error(path, "no simulation cells"));
    }
    for (i, c) in configs.iter().enumerate() {
        c.validate()
            .map_err(|e| format_error(path, format!("cell {i}: {e}")))?;
    }
    Ok(configs)
}

/// Rows of a metrics CSV, skipping `#` metadata lines.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>> {
    let file = File::open(path).map_err(|e| format_error(path, format!("cannot open: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(file));
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        let row: MetricRow = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(path, line, 0, e.to_string())
        })?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse_str(s: &str) -> Result<Dataset> {
        read_dataset(s.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn three_rows_two_covariates() {
        let d = parse_str("y,a,b\n1,2,3\n4,5,6\n7,8,9\n").unwrap();
        assert_eq!((d.n_obs(), d.n_vars()), (3, 2));
        assert_eq!(d.y, array![1.0, 4.0, 7.0]);
        assert_eq!(d.x.row(2), array![8.0, 9.0]);
    }

    #[test]
    fn blank_cell_names_location() {
        let err = parse_str("y,a,b\n1,2,3\n4,,6\n").unwrap_err();
        match err {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn distinct_errors() {
        let bad_number = parse_str("y,a\n1,abc\n").unwrap_err().to_string();
        assert!(bad_number.contains("not a number") && bad_number.contains("row 2, column 2"));
        let no_y = parse_str("z,a\n1,2\n").unwrap_err().to_string();
        assert!(no_y.contains("first column must be `y`"));
        let ragged = parse_str("y,a\n1,2,3\n").unwrap_err().to_string();
        assert!(ragged.contains("expected 2 fields"));
        assert!(parse_str("y,a\n1,NaN\n").unwrap_err().to_string().contains("non-finite"));
        assert!(parse_str("").is_err());
        assert!(parse_str("y,a\n").unwrap_err().to_string().contains("no data rows"));
    }

    #[test]
    fn round_trip_is_exact() {
        let d = Dataset::new(
            array![0.1, -1.0 / 3.0, 1e-300],
            array![[std::f64::consts::PI, 2.5e17], [-0.0, 1.0 + f64::EPSILON], [7.0, -1e-9]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice(), Path::new("mem.csv")).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn atomic_write_leaves_nothing_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let r = atomic_write(&path, |w| {
            w.write_all(b"partial")?;
            Err(Error::InvalidParameter("boom".into()))
        });
        assert!(r.is_err());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
        atomic_write(&path, |w| Ok(w.write_all(b"done")?)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "done");
    }

    #[test]
    fn sim_configs_single_or_list() {
        let dir = tempfile::tempdir().unwrap();
        let one = dir.path().join("one.json");
        std::fs::write(&one, r#"{"T":50,"p":10,"s0":2,"phi":0.5,"dgp":"gaussian","seed":1}"#).unwrap();
        assert_eq!(read_sim_configs(&one).unwrap().len(), 1);
        let many = dir.path().join("many.json");
        std::fs::write(
            &many,
            r#"[{"T":50,"p":10,"s0":2,"phi":0.5,"dgp":"gaussian","seed":1},
                {"T":60,"p":10,"s0":2,"phi":0.0,"dgp":"dgp1","df":8,"seed":1,"reps":3}]"#,
        )
        .unwrap();
        assert_eq!(read_sim_configs(&many).unwrap()[1].reps, 3);
        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"T":50,"p":10,"s0":2,"phi":0.5,"dgp":"gaussian","seed":1,"oops":1}"#).unwrap();
        assert!(read_sim_configs(&bad).unwrap_err().to_string().contains("oops"));
    }

    #[test]
    fn metadata_comment_lines() {
        let m = RunMetadata::new("simulate", Some(3), serde_json::json!({"a": 1}));
        let c = m.csv_comment().unwrap();
        assert!(c.lines().all(|l| l.starts_with("# ")));
        assert!(c.contains(sim::RNG_NAME) && c.contains(crate::VERSION));
    }
}
