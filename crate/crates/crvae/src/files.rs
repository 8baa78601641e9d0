//! CSV tables, checkpoint files and JSON configs on disk.
//!
//! Data files hold one row per time step and one column per series. A first
//! row that does not parse as numbers is taken as a header. Adjacency and
//! score files are square with rows indexed by the effect.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crvae_core::datagen::Adjacency;
use crvae_core::pipeline::{Checkpoint, EpochRecord, TrainConfig};
use crvae_core::recnet::CausalMatrix;
use crvae_core::Tensor;
use serde::de::DeserializeOwned;

use crate::{Error, Result};

fn parse_rows(path: &Path) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        let first_numeric = rec.iter().next().is_some_and(|f| f.parse::<f64>().is_ok());
        if i == 0 && !first_numeric {
            header = Some(rec.iter().map(str::to_owned).collect());
            continue;
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.into(),
                row: i + 1,
                column: c + 1,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.into(),
                    row: i + 1,
                    column: c + 1,
                    message: format!("non-finite value {field}"),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    path: path.into(),
                    row: i + 1,
                    column: row.len().min(first.len()) + 1,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format {
            path: path.into(),
            message: "no data rows".into(),
        });
    }
    Ok((header, rows))
}

/// A `T x M` data table.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let (_, rows) = parse_rows(path)?;
    Ok(Tensor::from_rows(&rows)?)
}

/// Writes a matrix with an `x0,x1,..` header, values in shortest
/// round-trip form.
pub fn save_csv(path: impl AsRef<Path>, x: &Tensor) -> Result<()> {
    let header: Vec<String> = (0..x.cols()).map(|c| format!("x{c}")).collect();
    write_table(path.as_ref(), Some(&header), x.rows(), |r| {
        x.row_slice(r).iter().map(|v| v.to_string()).collect()
    })
}

fn write_table(
    path: &Path,
    header: Option<&[String]>,
    rows: usize,
    row: impl Fn(usize) -> Vec<String>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fmt = |e: csv::Error| Error::Format {
        path: path.into(),
        message: e.to_string(),
    };
    if let Some(h) = header {
        w.write_record(h).map_err(fmt)?;
    }
    for r in 0..rows {
        w.write_record(row(r)).map_err(fmt)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    write_atomic(path, &bytes)
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path.file_name().ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn square(path: &Path, rows: &[Vec<f64>]) -> Result<usize> {
    let m = rows.len();
    if rows[0].len() != m {
        return Err(Error::Format {
            path: path.into(),
            message: format!("expected a square table, found {} x {}", m, rows[0].len()),
        });
    }
    Ok(m)
}

/// Binary adjacency; every entry must be 0 or 1.
pub fn load_adjacency(path: impl AsRef<Path>) -> Result<Adjacency> {
    let path = path.as_ref();
    let (_, rows) = parse_rows(path)?;
    let m = square(path, &rows)?;
    let mut edges = Vec::with_capacity(m * m);
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Parse {
                    path: path.into(),
                    row: r + 1,
                    column: c + 1,
                    message: format!("adjacency entries must be 0 or 1, found {v}"),
                });
            }
            edges.push(v == 1.0);
        }
    }
    Ok(Adjacency::new(m, edges)?)
}

pub fn save_adjacency(path: impl AsRef<Path>, a: &Adjacency) -> Result<()> {
    let m = a.size();
    write_table(path.as_ref(), None, m, |r| {
        (0..m).map(|c| if a.get(r, c) { "1" } else { "0" }.to_owned()).collect()
    })
}

/// Real-valued score matrix such as an estimated adjacency.
pub fn load_scores(path: impl AsRef<Path>) -> Result<CausalMatrix> {
    let path = path.as_ref();
    let (_, rows) = parse_rows(path)?;
    square(path, &rows)?;
    Ok(CausalMatrix::from_rows(&rows)?)
}

pub fn save_scores(path: impl AsRef<Path>, s: &CausalMatrix) -> Result<()> {
    let m = s.size();
    write_table(path.as_ref(), None, m, |r| {
        (0..m).map(|c| s.get(r, c).to_string()).collect()
    })
}

pub fn save_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    let header: Vec<String> = ["phase", "epoch", "recon", "kl", "penalty", "comp", "density"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    write_table(path.as_ref(), Some(&header), history.len(), |r| {
        let h = &history[r];
        vec![
            serde_json::to_value(h.phase)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            h.epoch.to_string(),
            h.recon.to_string(),
            h.kl.to_string(),
            h.penalty.to_string(),
            h.comp.to_string(),
            h.density.to_string(),
        ]
    })
}

/// Flattened windows from both sets with a trailing `label` column
/// (`real` or `synth`), for external 2-D projection.
pub fn save_pointcloud(path: impl AsRef<Path>, real: &Tensor, synth: &Tensor) -> Result<()> {
    let d = real.cols();
    let mut header: Vec<String> = (0..d).map(|c| format!("f{c}")).collect();
    header.push("label".into());
    let n = real.rows();
    write_table(path.as_ref(), Some(&header), n + synth.rows(), |r| {
        let (src, row, label) = if r < n { (real, r, "real") } else { (synth, r - n, "synth") };
        let mut out: Vec<String> = src.row_slice(row).iter().map(|v| v.to_string()).collect();
        out.push(label.into());
        out
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path.as_ref(), &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Parses a JSON document into `T`, filling unspecified fields with their
/// defaults.
pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Training config from a JSON file; every violated constraint is reported
/// in one error.
pub fn load_train_config(path: impl AsRef<Path>) -> Result<TrainConfig> {
    let path = path.as_ref();
    let cfg: TrainConfig = load_json(path).map_err(|e| match e {
        Error::Format { path, message } => Error::Config(vec![format!("{}: {message}", path.display())]),
        e => e,
    })?;
    cfg.validate().map_err(Error::Config)?;
    Ok(cfg)
}

/// `dir/stem_suffix.ext`-style sibling of `path`: `data.csv` with suffix
/// `truth` becomes `data_truth.csv`.
pub fn sibling(path: &Path, suffix: &str, ext: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}.{ext}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sibling_names() {
        assert_eq!(sibling(Path::new("out/data.csv"), "truth", "csv"), PathBuf::from("out/data_truth.csv"));
        assert_eq!(sibling(Path::new("m.ckpt"), "loss", "csv"), PathBuf::from("m_loss.csv"));
    }

    #[test]
    fn bad_cell_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        fs::write(&p, "a,b\n1,2\n3,oops\n").unwrap();
        let err = load_csv(&p).unwrap_err().to_string();
        assert!(err.contains("row 3, column 2"), "{err}");
    }
}
