//! Vector and matrix sources: CSV files, inline `a,b;c,d` text or TOML arrays.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use framecover_core::spaces::SpaceSpec;

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Rows {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
    Text(String),
}

impl From<&str> for Rows {
    fn from(s: &str) -> Self {
        Rows::Text(s.to_string())
    }
}

fn looks_inline(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_ascii_digit() || " \t.,;+-eE".contains(c) || "infINF".contains(c))
        && s.chars().any(|c| c.is_ascii_digit() || c == 'i' || c == 'I')
}

fn parse_inline(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| {
            r.split(',')
                .map(|t| t.trim().parse::<f64>().with_context(|| format!("`{}` is not a number", t.trim())))
                .collect()
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: bad record {}", path.display(), i + 1))?;
        let row: Vec<f64> = rec
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().with_context(|| format!("{}: `{t}` is not a number", path.display())))
            .collect::<Result<_>>()?;
        if !row.is_empty() {
            out.push(row);
        }
    }
    Ok(out)
}

/// Where relative file names are looked up.
#[derive(Clone, Debug)]
pub struct Ctx {
    pub base: PathBuf,
}

impl Ctx {
    pub fn cwd() -> Self {
        Ctx { base: PathBuf::from(".") }
    }

    pub fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn rows(&self, r: &Rows) -> Result<Vec<Vec<f64>>> {
        let rows = match r {
            Rows::Flat(v) => vec![v.clone()],
            Rows::Nested(v) => v.clone(),
            Rows::Text(t) => {
                let t = t.trim();
                let path = self.path(t);
                if path.is_file() {
                    read_csv(&path)?
                } else if looks_inline(t) {
                    parse_inline(t)?
                } else {
                    bail!("file not found: {}", path.display())
                }
            }
        };
        if rows.is_empty() {
            bail!("no rows given");
        }
        let w = rows[0].len();
        if rows.iter().any(|r| r.len() != w) {
            bail!("rows have different lengths");
        }
        Ok(rows)
    }

    pub fn vectors(&self, r: &Rows, dim: usize) -> Result<Vec<DVector<f64>>> {
        let rows = self.rows(r)?;
        if rows[0].len() != dim {
            bail!("vectors have length {}, the space has dimension {dim}", rows[0].len());
        }
        Ok(rows.into_iter().map(DVector::from_vec).collect())
    }

    pub fn vector(&self, r: &Rows, dim: usize) -> Result<DVector<f64>> {
        let mut v = self.vectors(r, dim)?;
        if v.len() != 1 {
            bail!("expected a single vector, found {}", v.len());
        }
        Ok(v.remove(0))
    }

    /// Rows of the matrix, `rows × cols` checked.
    pub fn matrix(&self, r: &Rows, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let data = self.rows(r)?;
        if data.len() != rows || data[0].len() != cols {
            bail!("matrix is {}x{}, the spaces need {rows}x{cols}", data.len(), data[0].len());
        }
        Ok(DMatrix::from_fn(rows, cols, |i, j| data[i][j]))
    }

    /// `canonical` or explicit basis vectors.
    pub fn basis(&self, r: &Rows, space: &SpaceSpec) -> Result<Option<Vec<DVector<f64>>>> {
        if matches!(r, Rows::Text(t) if t.trim() == "canonical") {
            return Ok(None);
        }
        self.vectors(r, space.dim()).map(Some)
    }
}

pub fn space(s: &str) -> Result<SpaceSpec> {
    s.parse::<SpaceSpec>().map_err(|e| anyhow!("{e}"))
}
