//! Artifact files: JSON for structured data, CSV for matrices, plus the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gluing::{CoveringCertificate, CoveringSpec};
use crate::green::{FlaggedColumn, GreensSystem};
use crate::instance::Instance;
use crate::jets::{coeff_weights, JetVector, RawJet};
use crate::lens::Context;

fn parse_err(path: &Path, msg: impl ToString) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        msg: msg.to_string(),
    }
}

/// Reads a JSON file; errors carry the path and the line/column serde reports.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| parse_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e))
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    let inst: Instance = read_json(path)?;
    inst.validate().map_err(|e| parse_err(path, e))?;
    Ok(inst)
}

/// A jet file is a flat coefficient array `[a_1, u_1.., a_2, ...]`.
pub fn read_jet(path: &Path, inst: &Instance) -> Result<JetVector> {
    let raw: RawJet = read_json(path)?;
    JetVector::from_coeffs(inst, DVector::from_vec(raw.0)).map_err(|e| parse_err(path, e))
}

/// One row per line, shortest round-trip formatting.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| m[(r, c)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, matrix_csv(m))?;
    Ok(())
}

/// Reads a matrix of known shape. A matrix without columns is an empty file.
pub fn read_matrix_csv(path: &Path, nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    let mut m = DMatrix::zeros(nrows, ncols);
    if ncols == 0 {
        return Ok(m);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;
    let mut r = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if r >= nrows {
            return Err(parse_err(
                path,
                format!("line {line}: more than {nrows} rows"),
            ));
        }
        if rec.len() != ncols {
            return Err(parse_err(
                path,
                format!("line {line}: {} fields, expected {ncols}", rec.len()),
            ));
        }
        for (c, field) in rec.iter().enumerate() {
            m[(r, c)] = field.trim().parse().map_err(|_| {
                parse_err(
                    path,
                    format!("line {line}, field {}: not a number: {field:?}", c + 1),
                )
            })?;
        }
        r += 1;
    }
    if r != nrows {
        return Err(parse_err(path, format!("{r} rows, expected {nrows}")));
    }
    Ok(m)
}

/// Structured part of a saved Green's system; matrices live in CSV side files
/// named `<stem>.<matrix>.csv` next to it.
#[derive(Serialize, Deserialize)]
pub struct GreensFile {
    pub instance: Instance,
    pub covering: CoveringSpec,
    pub future: CoveringCertificate,
    pub past: CoveringCertificate,
    pub admissible: Vec<usize>,
    pub columns: Vec<usize>,
    pub flagged: Vec<FlaggedColumn>,
    pub max_rounds: usize,
    pub n_coeffs: usize,
    pub test_dims: [usize; 3],
    pub matrices: Vec<String>,
}

const MATRICES: [&str; 6] = ["s_ret", "s_adv", "g", "test", "future_test", "past_test"];

fn side_file(path: &Path, name: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{name}.csv"))
}

fn matrix_of<'a>(gs: &'a GreensSystem, name: &str) -> &'a DMatrix<f64> {
    match name {
        "s_ret" => &gs.s_ret,
        "s_adv" => &gs.s_adv,
        "g" => &gs.g,
        "test" => &gs.test,
        "future_test" => &gs.future_test,
        _ => &gs.past_test,
    }
}

/// Writes `path` and the side files; returns every path written.
pub fn save_greens(path: &Path, inst: &Instance, gs: &GreensSystem) -> Result<Vec<PathBuf>> {
    let file = GreensFile {
        instance: inst.clone(),
        covering: gs.covering.clone(),
        future: gs.future.clone(),
        past: gs.past.clone(),
        admissible: gs.admissible.clone(),
        columns: gs.columns.clone(),
        flagged: gs.flagged.clone(),
        max_rounds: gs.max_rounds,
        n_coeffs: gs.n_coeffs(),
        test_dims: [
            gs.test.ncols(),
            gs.future_test.ncols(),
            gs.past_test.ncols(),
        ],
        matrices: MATRICES
            .iter()
            .map(|m| {
                side_file(path, m)
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    write_json(path, &file)?;
    let mut out = vec![path.to_path_buf()];
    for name in MATRICES {
        let p = side_file(path, name);
        write_matrix_csv(&p, matrix_of(gs, name))?;
        out.push(p);
    }
    Ok(out)
}

/// Loads a saved system; `D` and the weights are reassembled from the embedded instance.
pub fn load_greens(path: &Path) -> Result<(Instance, GreensSystem)> {
    let file: GreensFile = read_json(path)?;
    let inst = file.instance;
    inst.validate().map_err(|e| parse_err(path, e))?;
    let n = inst.n_coeffs();
    if n != file.n_coeffs {
        return Err(parse_err(
            path,
            format!(
                "n_coeffs {} does not match the instance ({n})",
                file.n_coeffs
            ),
        ));
    }
    if let Some(&k) = file.columns.iter().find(|&&k| k >= n) {
        return Err(parse_err(path, format!("column index {k} out of range")));
    }
    let nc = file.columns.len();
    let [t, tf, tp] = file.test_dims;
    let read = |name: &str, cols: usize| read_matrix_csv(&side_file(path, name), n, cols);
    let ctx = Context::new(&inst);
    let gs = GreensSystem {
        block: inst.block(),
        covering: file.covering,
        future: file.future,
        past: file.past,
        admissible: file.admissible,
        columns: file.columns,
        flagged: file.flagged,
        max_rounds: file.max_rounds,
        s_ret: read("s_ret", nc)?,
        s_adv: read("s_adv", nc)?,
        g: read("g", nc)?,
        test: read("test", t)?,
        future_test: read("future_test", tf)?,
        past_test: read("past_test", tp)?,
        d: ctx.op.d.clone(),
        weights: coeff_weights(&inst),
    };
    Ok((inst, gs))
}

#[derive(Clone, Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path)?;
        let hash = Sha256::digest(&data);
        Ok(InputDigest {
            path: path.display().to_string(),
            bytes: data.len() as u64,
            sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        })
    }
}

/// What a run read, which parameters it used and how long it took.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub parameters: serde_json::Value,
    pub threads: usize,
    pub exit_code: i32,
    pub wall_time_s: f64,
}
