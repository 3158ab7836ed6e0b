use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dataset::{csv_error, csv_reader};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Binary geographic connectivity with self-loops and its symmetric
/// degree normalization `D^{-1/2} A D^{-1/2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAdjacency", into = "RawAdjacency")]
pub struct AdjacencyMatrix {
    raw: Tensor,
    degree: Vec<f64>,
    normalized: Tensor,
}

#[derive(Serialize, Deserialize)]
struct RawAdjacency {
    raw: Tensor,
}

impl TryFrom<RawAdjacency> for AdjacencyMatrix {
    type Error = Error;

    fn try_from(r: RawAdjacency) -> Result<Self> {
        AdjacencyMatrix::from_raw(r.raw)
    }
}

impl From<AdjacencyMatrix> for RawAdjacency {
    fn from(a: AdjacencyMatrix) -> Self {
        RawAdjacency { raw: a.raw }
    }
}

impl AdjacencyMatrix {
    /// Validates a symmetric 0/1 matrix; the diagonal is set to 1.
    pub fn from_raw(mut raw: Tensor) -> Result<Self> {
        let shape = raw.shape().to_vec();
        if shape.len() != 2 || shape[0] != shape[1] {
            return Err(Error::Validation(format!("adjacency must be square, got {shape:?}")));
        }
        let n = shape[0];
        for i in 0..n {
            raw.set(i, i, 1.0);
        }
        for i in 0..n {
            for j in 0..n {
                let v = raw.get(i, j);
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Validation(format!("adjacency entry ({i},{j}) is {v}, expected 0 or 1")));
                }
                if v != raw.get(j, i) {
                    return Err(Error::Validation(format!("adjacency is not symmetric at ({i},{j})")));
                }
            }
        }
        let degree: Vec<f64> = (0..n).map(|i| raw.row_slice(i).iter().sum()).collect();
        let mut normalized = Tensor::zeros(&[n, n]);
        for i in 0..n {
            for j in 0..n {
                let a = raw.get(i, j);
                if a != 0.0 {
                    normalized.set(i, j, a / (degree[i] * degree[j]).sqrt());
                }
            }
        }
        Ok(AdjacencyMatrix { raw, degree, normalized })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_raw(Tensor::identity(n)).expect("identity is a valid adjacency")
    }

    pub fn fully_connected(n: usize) -> Self {
        Self::from_raw(Tensor::full(&[n, n], 1.0)).expect("all-ones is a valid adjacency")
    }

    pub fn size(&self) -> usize {
        self.degree.len()
    }

    pub fn raw(&self) -> &Tensor {
        &self.raw
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn normalized(&self) -> &Tensor {
        &self.normalized
    }

    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        let n = order.len();
        let mut raw = Tensor::zeros(&[n, n]);
        for (a, &i) in order.iter().enumerate() {
            for (b, &j) in order.iter().enumerate() {
                raw.set(a, b, self.raw.get(i, j));
            }
        }
        Self::from_raw(raw)
    }
}

/// Reads an adjacency CSV and reorders it to `locations`.
///
/// The header lists location names, optionally preceded by one label cell;
/// each following row is `<name>,<0|1>,...`.
pub fn load_adjacency(path: impl AsRef<Path>, locations: &[String]) -> Result<AdjacencyMatrix> {
    let path = path.as_ref();
    let n = locations.len();
    let mut reader = csv_reader(path)?;
    let mut records = reader.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Validation(format!("{}: empty adjacency file", path.display())))?
        .map_err(|e| csv_error(path, e))?;
    let names: Vec<String> = match header.len() {
        len if len == n + 1 => header.iter().skip(1).map(|s| s.trim().to_string()).collect(),
        len if len == n => header.iter().map(|s| s.trim().to_string()).collect(),
        len => {
            return Err(Error::Validation(format!(
                "{}: header has {len} cells for {n} dataset locations",
                path.display()
            )))
        }
    };
    let index: HashMap<&str, usize> = locations.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let col_pos = names
        .iter()
        .map(|name| {
            index
                .get(name.as_str())
                .copied()
                .ok_or_else(|| Error::Validation(format!("{}: unknown location {name:?} in header", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen_cols = vec![false; n];
    for &c in &col_pos {
        if std::mem::replace(&mut seen_cols[c], true) {
            return Err(Error::Validation(format!("{}: repeated location in header", path.display())));
        }
    }

    let mut raw = Tensor::zeros(&[n, n]);
    let mut seen_rows = vec![false; n];
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != n + 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: record.len().min(n + 1) + 1,
                message: format!("expected {} fields, found {}", n + 1, record.len()),
            });
        }
        let name = record[0].trim();
        let r = *index
            .get(name)
            .ok_or_else(|| Error::Validation(format!("{}: unknown location {name:?} on line {line}", path.display())))?;
        if std::mem::replace(&mut seen_rows[r], true) {
            return Err(Error::Validation(format!("{}: location {name:?} has two rows", path.display())));
        }
        for (k, &c) in col_pos.iter().enumerate() {
            let cell = record[k + 1].trim();
            let v = match cell {
                "0" | "0.0" => 0.0,
                "1" | "1.0" => 1.0,
                _ => {
                    return Err(Error::Parse {
                        path: path.to_path_buf(),
                        line,
                        column: k + 2,
                        message: format!("expected 0 or 1, found {cell:?}"),
                    })
                }
            };
            raw.set(r, c, v);
        }
    }
    if let Some(missing) = seen_rows.iter().position(|s| !s) {
        return Err(Error::Validation(format!(
            "{}: no row for location {:?}",
            path.display(),
            locations[missing]
        )));
    }
    AdjacencyMatrix::from_raw(raw).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

/// Writes the header `location,<names...>` and one row per location.
pub fn write_adjacency(adj: &AdjacencyMatrix, locations: &[String], mut out: impl Write) -> std::io::Result<()> {
    write!(out, "location")?;
    for name in locations {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (i, name) in locations.iter().enumerate() {
        write!(out, "{name}")?;
        for j in 0..adj.size() {
            write!(out, ",{}", adj.raw().get(i, j) as u8)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("l{i}")).collect()
    }

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn identity_normalizes_to_identity() {
        let a = AdjacencyMatrix::identity(4);
        assert_eq!(a.normalized(), &Tensor::identity(4));
    }

    #[test]
    fn all_ones_two_by_two() {
        let a = AdjacencyMatrix::fully_connected(2);
        assert!(a.normalized().data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn path_graph_entry() {
        let raw = Tensor::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap();
        let a = AdjacencyMatrix::from_raw(raw).unwrap();
        assert_eq!(a.degree(), &[2.0, 3.0, 2.0]);
        assert!((a.normalized().get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((a.normalized().get(0, 1) - 0.4082).abs() < 1e-4);
    }

    #[test]
    fn diagonal_is_forced_and_asymmetry_rejected() {
        let a = AdjacencyMatrix::from_raw(Tensor::zeros(&[3, 3])).unwrap();
        assert_eq!(a.raw(), &Tensor::identity(3));
        let asym = Tensor::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(AdjacencyMatrix::from_raw(asym).is_err());
    }

    #[test]
    fn loads_and_reorders_by_name() {
        let f = tmp("location,l1,l0,l2\nl1,1,1,0\nl0,1,1,1\nl2,0,1,1\n");
        let a = load_adjacency(f.path(), &names(3)).unwrap();
        assert_eq!(a.raw().get(0, 1), 1.0);
        assert_eq!(a.raw().get(0, 2), 1.0);
        assert_eq!(a.raw().get(1, 2), 0.0);

        let bare = tmp("l0,l1\nl0,1,0\nl1,0,1\n");
        assert_eq!(load_adjacency(bare.path(), &names(2)).unwrap().raw(), &Tensor::identity(2));
    }

    #[test]
    fn load_errors() {
        let asym = tmp("location,l0,l1\nl0,1,1\nl1,0,1\n");
        assert!(matches!(load_adjacency(asym.path(), &names(2)), Err(Error::Validation(_))));
        let unknown = tmp("location,l0,zz\nl0,1,0\nzz,0,1\n");
        assert!(matches!(load_adjacency(unknown.path(), &names(2)), Err(Error::Validation(_))));
        let bad_cell = tmp("location,l0,l1\nl0,1,2\nl1,2,1\n");
        assert!(matches!(load_adjacency(bad_cell.path(), &names(2)), Err(Error::Parse { .. })));
    }

    #[test]
    fn write_then_load_round_trips() {
        let raw = Tensor::from_rows(&[vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let a = AdjacencyMatrix::from_raw(raw).unwrap();
        let mut buf = Vec::new();
        write_adjacency(&a, &names(3), &mut buf).unwrap();
        let f = tmp(std::str::from_utf8(&buf).unwrap());
        let b = load_adjacency(f.path(), &names(3)).unwrap();
        assert_eq!(a, b);
        let mut buf2 = Vec::new();
        write_adjacency(&b, &names(3), &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }
}
