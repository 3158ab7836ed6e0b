use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Weekly counts for `N` locations over `T` weeks.
#[derive(Clone, Debug, PartialEq)]
pub struct EpiDataset {
    locations: Vec<String>,
    weeks: Vec<String>,
    /// `N×T`, one row per location.
    values: Tensor,
    /// Index of the first week within the series this slice was cut from.
    offset: usize,
}

impl EpiDataset {
    pub fn new(locations: Vec<String>, weeks: Vec<String>, values: Tensor) -> Result<Self> {
        let n = locations.len();
        if n < 2 {
            return Err(Error::Validation(format!("need at least 2 locations, found {n}")));
        }
        if values.shape() != [n, weeks.len()] {
            return Err(Error::shape("dataset", values.shape(), &[n, weeks.len()]));
        }
        let mut seen = HashSet::new();
        for name in &locations {
            if !seen.insert(name.as_str()) {
                return Err(Error::Validation(format!("duplicate location name {name:?}")));
            }
        }
        if let Some(bad) = values.data().iter().position(|v| !v.is_finite() || *v < 0.0) {
            let (i, t) = (bad / weeks.len().max(1), bad % weeks.len().max(1));
            return Err(Error::Validation(format!(
                "count for {} at week {} is {}; counts must be finite and nonnegative",
                locations[i], weeks[t], values.data()[bad]
            )));
        }
        Ok(EpiDataset {
            locations,
            weeks,
            values,
            offset: 0,
        })
    }

    /// Same shape and labels as `self` with different values; used for the
    /// normalized view, which may leave `[0, 1]` and is not count-valued.
    pub(crate) fn with_values(&self, values: Tensor) -> Self {
        debug_assert_eq!(values.shape(), self.values.shape());
        EpiDataset {
            locations: self.locations.clone(),
            weeks: self.weeks.clone(),
            values,
            offset: self.offset,
        }
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn weeks(&self) -> &[String] {
        &self.weeks
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn num_weeks(&self) -> usize {
        self.weeks.len()
    }

    pub fn series(&self, location: usize) -> &[f64] {
        self.values.row_slice(location)
    }

    pub fn value(&self, location: usize, week: usize) -> f64 {
        self.values.get(location, week)
    }

    /// Weeks `[start, end)` as a new dataset remembering its offset.
    pub fn slice_weeks(&self, start: usize, end: usize) -> Self {
        let (n, t) = (self.num_locations(), self.num_weeks());
        let end = end.min(t);
        let start = start.min(end);
        let mut data = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            data.extend_from_slice(&self.series(i)[start..end]);
        }
        EpiDataset {
            locations: self.locations.clone(),
            weeks: self.weeks[start..end].to_vec(),
            values: Tensor::new(vec![n, end - start], data).expect("slice shape"),
            offset: self.offset + start,
        }
    }

    /// Reorders locations; `order[k]` is the old index of new location `k`.
    pub fn permute_locations(&self, order: &[usize]) -> Result<Self> {
        let t = self.num_weeks();
        let mut data = Vec::with_capacity(self.values.len());
        for &i in order {
            data.extend_from_slice(self.series(i));
        }
        let locations = order.iter().map(|&i| self.locations[i].clone()).collect();
        let mut out = EpiDataset::new(locations, self.weeks.clone(), Tensor::new(vec![order.len(), t], data)?)?;
        out.offset = self.offset;
        Ok(out)
    }
}

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            column: 0,
            message: format!("{other:?}"),
        },
    }
}

fn parse_count(path: &Path, line: u64, column: usize, cell: &str) -> Result<f64> {
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(err("missing value".into()));
    }
    let v: f64 = cell.parse().map_err(|_| err(format!("not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(err(format!("not a finite number: {cell:?}")));
    }
    if v < 0.0 {
        return Err(err(format!("negative count {cell}")));
    }
    Ok(v)
}

/// Reads `week,<loc1>,<loc2>,...` followed by one row per week.
pub fn load_series(path: impl AsRef<Path>) -> Result<EpiDataset> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_error(path, e))?,
        None => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: 0,
                message: "empty file".into(),
            })
        }
    };
    let width = header.len();
    if width < 3 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            column: width,
            message: "header needs a week column and at least 2 locations".into(),
        });
    }
    let locations: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for (k, name) in locations.iter().enumerate() {
        if !seen.insert(name.as_str()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                column: k + 2,
                message: format!("duplicate location name {name:?}"),
            });
        }
    }

    let n = locations.len();
    let mut weeks = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n];
    for record in records {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                column: record.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        weeks.push(record[0].trim().to_string());
        for (k, col) in columns.iter_mut().enumerate() {
            col.push(parse_count(path, line, k + 2, &record[k + 1])?);
        }
    }
    let t = weeks.len();
    let data = columns.into_iter().flatten().collect();
    EpiDataset::new(locations, weeks, Tensor::new(vec![n, t], data)?)
}

pub fn write_series(ds: &EpiDataset, mut out: impl Write) -> std::io::Result<()> {
    write!(out, "week")?;
    for name in ds.locations() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for (t, week) in ds.weeks().iter().enumerate() {
        write!(out, "{week}")?;
        for i in 0..ds.num_locations() {
            write!(out, ",{}", ds.value(i, t))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Split points for contiguous train|val|test slices of `t` weeks.
pub fn split_points(t: usize, ratios: [f64; 3]) -> Result<(usize, usize)> {
    if ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios must be in [0,1] and sum to 1, got {ratios:?}")));
    }
    // The small offset keeps e.g. 360·0.7 from flooring to 251.
    let cut = |r: f64| (((t as f64) * r + 1e-9).floor() as usize).min(t);
    let first = cut(ratios[0]);
    let second = cut(ratios[0] + ratios[1]).max(first);
    Ok((first, second))
}

pub fn split_by_time(ds: &EpiDataset, ratios: [f64; 3]) -> Result<(EpiDataset, EpiDataset, EpiDataset)> {
    let t = ds.num_weeks();
    let (a, b) = split_points(t, ratios)?;
    Ok((ds.slice_weeks(0, a), ds.slice_weeks(a, b), ds.slice_weeks(b, t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn toy(t: usize) -> EpiDataset {
        let weeks = (0..t).map(|i| format!("w{i}")).collect();
        let data = (0..2 * t).map(|v| v as f64).collect();
        EpiDataset::new(vec!["a".into(), "b".into()], weeks, Tensor::new(vec![2, t], data).unwrap()).unwrap()
    }

    #[test]
    fn loads_well_formed_file() {
        let f = write_tmp("week,a,b,c\n2020-01,1,2,3\n2020-02,4.5,0,6\n");
        let ds = load_series(f.path()).unwrap();
        assert_eq!(ds.locations(), &["a", "b", "c"]);
        assert_eq!(ds.weeks(), &["2020-01", "2020-02"]);
        assert_eq!(ds.series(0), &[1.0, 4.5]);
        assert_eq!(ds.series(2), &[3.0, 6.0]);
    }

    #[test]
    fn single_row_is_accepted() {
        let f = write_tmp("week,a,b\nw1,1,2\n");
        assert_eq!(load_series(f.path()).unwrap().num_weeks(), 1);
    }

    #[test]
    fn rejects_bad_cells_with_position() {
        let cases = [
            ("week,a,b\nw1,1,-2\n", 2, 3),
            ("week,a,b\nw1,1,x\n", 2, 3),
            ("week,a,b\nw1,1,2\nw2,1\n", 3, 3),
            ("week,a,b\nw1,,2\n", 2, 2),
            ("week,a,a\nw1,1,2\n", 1, 3),
        ];
        for (content, line, column) in cases {
            let f = write_tmp(content);
            match load_series(f.path()) {
                Err(Error::Parse { line: l, column: c, .. }) => assert_eq!((l, c), (line, column), "{content}"),
                other => panic!("{content}: {other:?}"),
            }
        }
    }

    #[test]
    fn write_then_load_round_trips() {
        let f = write_tmp("week,a,b\nw1,1,2.25\nw2,0.1,7\n");
        let ds = load_series(f.path()).unwrap();
        let mut buf = Vec::new();
        write_series(&ds, &mut buf).unwrap();
        let g = write_tmp(std::str::from_utf8(&buf).unwrap());
        let again = load_series(g.path()).unwrap();
        assert_eq!(ds, again);
        let mut buf2 = Vec::new();
        write_series(&again, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn split_lengths() {
        for (t, expect) in [(360, (180, 72, 108)), (10, (5, 2, 3)), (785, (392, 157, 236))] {
            let (a, b, c) = split_by_time(&toy(t), [0.5, 0.2, 0.3]).unwrap();
            assert_eq!((a.num_weeks(), b.num_weeks(), c.num_weeks()), expect);
            assert_eq!(b.offset(), expect.0);
            assert_eq!(c.offset(), expect.0 + expect.1);
        }
        let (a, b, c) = split_by_time(&toy(10), [1.0, 0.0, 0.0]).unwrap();
        assert_eq!((a.num_weeks(), b.num_weeks(), c.num_weeks()), (10, 0, 0));
        assert!(split_by_time(&toy(10), [0.5, 0.5, 0.5]).is_err());
    }
}
