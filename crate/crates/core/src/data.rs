//! Paired samples `(X_i, Z_i)` and their CSV form.
//!
//! The CSV dialect is comma separated with a `x_1..x_dx,z_1..z_dz` header;
//! lines starting with `#` carry provenance and are skipped on read.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{CdeError, Result};

/// Row-major storage of `n` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim_x: usize,
    dim_z: usize,
    xs: Vec<f64>,
    zs: Vec<f64>,
}

impl Dataset {
    pub fn new(dim_x: usize, dim_z: usize) -> Self {
        Self {
            dim_x,
            dim_z,
            xs: Vec::new(),
            zs: Vec::new(),
        }
    }

    pub fn from_pairs(dim_x: usize, dim_z: usize, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Self> {
        let mut ds = Self::new(dim_x, dim_z);
        for (x, z) in pairs {
            ds.push(x, z)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: &[f64], z: &[f64]) -> Result<()> {
        if x.len() != self.dim_x {
            return Err(CdeError::DimensionMismatch {
                expected: self.dim_x,
                got: x.len(),
            });
        }
        if z.len() != self.dim_z {
            return Err(CdeError::DimensionMismatch {
                expected: self.dim_z,
                got: z.len(),
            });
        }
        self.xs.extend_from_slice(x);
        self.zs.extend_from_slice(z);
        Ok(())
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn dim_z(&self) -> usize {
        self.dim_z
    }

    pub fn len(&self) -> usize {
        if self.dim_x > 0 {
            self.xs.len() / self.dim_x
        } else if self.dim_z > 0 {
            self.zs.len() / self.dim_z
        } else {
            0
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim_x..(i + 1) * self.dim_x]
    }

    pub fn z(&self, i: usize) -> &[f64] {
        &self.zs[i * self.dim_z..(i + 1) * self.dim_z]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        (0..self.len()).map(move |i| (self.x(i), self.z(i)))
    }

    /// Sub-dataset of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut out = Self::new(self.dim_x, self.dim_z);
        for &i in rows {
            out.xs.extend_from_slice(self.x(i));
            out.zs.extend_from_slice(self.z(i));
        }
        out
    }

    /// First sample with a coordinate outside [0, 1].
    pub fn check_unit_cube(&self) -> Result<()> {
        for (i, (x, z)) in self.iter().enumerate() {
            if let Some(&value) = x.iter().chain(z).find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(CdeError::OutOfUnitCube { index: i, value });
            }
        }
        Ok(())
    }

    fn header(&self) -> String {
        let mut cols: Vec<String> = (1..=self.dim_x).map(|k| format!("x_{k}")).collect();
        cols.extend((1..=self.dim_z).map(|k| format!("z_{k}")));
        cols.join(",")
    }

    /// Writes `# `-prefixed provenance lines, the header, then one row per sample.
    pub fn write_csv<W: Write>(&self, mut out: W, provenance: &[String]) -> Result<()> {
        let mut buf = String::new();
        for line in provenance {
            for part in line.lines() {
                let _ = writeln!(buf, "# {part}");
            }
        }
        let _ = writeln!(buf, "{}", self.header());
        for (x, z) in self.iter() {
            let mut first = true;
            for v in x.iter().chain(z) {
                if !first {
                    buf.push(',');
                }
                first = false;
                let _ = write!(buf, "{v}");
            }
            buf.push('\n');
        }
        out.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Reads a dataset; dimensions come from the `x_*` / `z_*` header columns.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut dims: Option<(usize, usize)> = None;
        let mut ds = Self::new(0, 0);
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((dx, dz)) = dims else {
                let cols: Vec<&str> = trimmed.split(',').map(str::trim).collect();
                let dx = cols.iter().take_while(|c| c.starts_with("x_")).count();
                let dz = cols[dx..].iter().take_while(|c| c.starts_with("z_")).count();
                if dx + dz != cols.len() || dx == 0 {
                    return Err(CdeError::Format(format!(
                        "line {}: expected header x_1..x_dx,z_1..z_dz, got `{trimmed}`",
                        lineno + 1
                    )));
                }
                dims = Some((dx, dz));
                ds = Self::new(dx, dz);
                continue;
            };
            let values = trimmed
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| CdeError::Format(format!("line {}: {e}", lineno + 1)))?;
            if values.len() != dx + dz {
                return Err(CdeError::Format(format!(
                    "line {}: expected {} values, got {}",
                    lineno + 1,
                    dx + dz,
                    values.len()
                )));
            }
            ds.push(&values[..dx], &values[dx..])?;
        }
        if dims.is_none() {
            return Err(CdeError::Format("missing header line".into()));
        }
        Ok(ds)
    }
}
