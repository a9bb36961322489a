//! CSV ingestion, block specifications and atomic output.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::BlockedSample;

/// Whether the first CSV record is a header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// Header if any field of the first record is not a number.
    #[default]
    Auto,
    Present,
    Absent,
}

/// A numeric table read from CSV, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTable {
    pub header: Option<Vec<String>>,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DataTable {
    pub fn column_name(&self, c: usize) -> String {
        self.header.as_ref().and_then(|h| h.get(c).cloned()).unwrap_or_else(|| format!("column {}", c + 1))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// Splits into blocks by half-open 0-based column ranges.
    pub fn to_sample(&self, ranges: &[(usize, usize)], labels: Option<Vec<String>>) -> Result<BlockedSample> {
        check_partition(ranges, self.cols)?;
        let sample = BlockedSample::from_column_ranges(self.rows, self.cols, &self.data, ranges)?;
        match labels {
            Some(l) => sample.with_labels(l),
            None => Ok(sample),
        }
    }
}

fn parse_number(field: &str) -> Option<f64> {
    let t = field.trim();
    if t.is_empty() {
        return None;
    }
    t.parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn read_csv<R: Read>(input: R, mode: HeaderMode) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let records = reader.records();
    let mut header = None;
    let mut data = Vec::new();
    let mut cols = 0;
    let mut rows = 0;
    let mut line = 0usize;

    for rec in records {
        let rec = rec?;
        line = rec.position().map_or(line + 1, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rows == 0 && header.is_none() {
            let is_header = match mode {
                HeaderMode::Present => true,
                HeaderMode::Absent => false,
                HeaderMode::Auto => rec.iter().any(|f| parse_number(f).is_none()),
            };
            cols = rec.len();
            if is_header {
                header = Some(rec.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>());
                continue;
            }
        }
        if rec.len() != cols {
            let name = |c: usize| {
                header.as_ref().and_then(|h: &Vec<String>| h.get(c).cloned()).unwrap_or_else(|| format!("column {}", c + 1))
            };
            let reason = if rec.len() < cols {
                format!("missing column {} (`{}`): row has {} fields, expected {cols}", rec.len() + 1, name(rec.len()), rec.len())
            } else {
                format!("row has {} fields, expected {cols}", rec.len())
            };
            return Err(Error::Parse { line, reason });
        }
        for (c, f) in rec.iter().enumerate() {
            match parse_number(f) {
                Some(v) => data.push(v),
                None => {
                    let name = header.as_ref().and_then(|h| h.get(c).cloned()).unwrap_or_else(|| format!("column {}", c + 1));
                    return Err(Error::Parse {
                        line,
                        reason: format!("column {} (`{name}`): cannot parse `{}` as a finite number", c + 1, f.trim()),
                    });
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse { line: line.max(1), reason: "no data rows".to_string() });
    }
    Ok(DataTable { header, rows, cols, data })
}

pub fn read_csv_path(path: &Path, mode: HeaderMode) -> Result<DataTable> {
    read_csv(fs::File::open(path)?, mode)
}

/// Parses `a-b,c-d,...` (1-based, inclusive; a single `k` is `k-k`) into
/// half-open 0-based ranges.
pub fn parse_block_spec(spec: &str) -> Result<Vec<(usize, usize)>> {
    let bad = |msg: String| Error::BlockSpec(msg);
    spec.split(',')
        .map(|part| {
            let part = part.trim();
            let (a, b) = match part.split_once('-') {
                Some((a, b)) => (a.trim(), b.trim()),
                None => (part, part),
            };
            let a: usize = a.parse().map_err(|_| bad(format!("cannot parse `{part}` as a column range")))?;
            let b: usize = b.parse().map_err(|_| bad(format!("cannot parse `{part}` as a column range")))?;
            if a == 0 || b < a {
                return Err(bad(format!("range `{part}` must satisfy 1 <= start <= end")));
            }
            Ok((a - 1, b))
        })
        .collect()
}

/// Ranges must be disjoint and together cover every column.
pub fn check_partition(ranges: &[(usize, usize)], cols: usize) -> Result<()> {
    if ranges.len() < 2 {
        return Err(Error::BlockSpec(format!("need at least 2 blocks, got {}", ranges.len())));
    }
    let mut covered = vec![0u8; cols];
    for &(s, e) in ranges {
        if e > cols {
            return Err(Error::BlockSpec(format!("range {}-{} exceeds the {cols} data columns", s + 1, e)));
        }
        for c in &mut covered[s..e] {
            *c += 1;
        }
    }
    if let Some(c) = covered.iter().position(|&k| k > 1) {
        return Err(Error::BlockSpec(format!("column {} belongs to more than one block", c + 1)));
    }
    if let Some(c) = covered.iter().position(|&k| k == 0) {
        return Err(Error::BlockSpec(format!("column {} is not assigned to any block", c + 1)));
    }
    Ok(())
}

/// JSON block schema:
/// `{"blocks": [{"name": "X1", "from": 1, "to": 3}, ...]}` with 1-based inclusive columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchema {
    pub blocks: Vec<BlockSchemaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSchemaEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub from: usize,
    pub to: usize,
}

impl BlockSchema {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::BlockSpec(format!("invalid block schema: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn ranges(&self) -> Result<Vec<(usize, usize)>> {
        self.blocks
            .iter()
            .map(|b| {
                if b.from == 0 || b.to < b.from {
                    Err(Error::BlockSpec(format!("block range {}-{} must satisfy 1 <= from <= to", b.from, b.to)))
                } else {
                    Ok((b.from - 1, b.to))
                }
            })
            .collect()
    }

    /// Block names, when every block has one.
    pub fn labels(&self) -> Option<Vec<String>> {
        self.blocks.iter().map(|b| b.name.clone()).collect()
    }
}

/// Writes the sample with a `b{i}_c{k}` header.
pub fn write_sample_csv<W: Write>(sample: &BlockedSample, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(sample.column_names())?;
    for a in 0..sample.n() {
        w.write_record(sample.joint_row(a).iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, header: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|s| s.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_detection() {
        let t = read_csv("a,b\n1,2\n3,4\n".as_bytes(), HeaderMode::Auto).unwrap();
        assert_eq!(t.header, Some(vec!["a".into(), "b".into()]));
        assert_eq!(t.data, vec![1.0, 2.0, 3.0, 4.0]);
        let t = read_csv("1,2\n3,4\n".as_bytes(), HeaderMode::Auto).unwrap();
        assert_eq!(t.header, None);
        assert_eq!(t.rows, 2);
    }

    #[test]
    fn parse_errors_name_line_and_column() {
        let err = read_csv("x,y,z\n1,2,3\n4,oops,6\n".as_bytes(), HeaderMode::Auto).unwrap_err();
        match err {
            Error::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("`y`"), "{reason}");
            }
            e => panic!("{e}"),
        }
        let err = read_csv("x,y,z\n1,2,3\n4,5\n".as_bytes(), HeaderMode::Auto).unwrap_err();
        match err {
            Error::Parse { line, reason } => {
                assert_eq!(line, 3);
                assert!(reason.contains("missing column 3 (`z`)"), "{reason}");
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn block_specs() {
        assert_eq!(parse_block_spec("1-3,4-6,7").unwrap(), vec![(0, 3), (3, 6), (6, 7)]);
        assert!(parse_block_spec("0-2").is_err());
        assert!(parse_block_spec("3-1").is_err());
        assert!(parse_block_spec("a-b").is_err());
        assert!(check_partition(&[(0, 3), (3, 6)], 6).is_ok());
        assert!(check_partition(&[(0, 3), (2, 6)], 6).is_err());
        assert!(check_partition(&[(0, 3), (4, 6)], 6).is_err());
        assert!(check_partition(&[(0, 3), (3, 7)], 6).is_err());
    }

    #[test]
    fn schema_file() {
        let s = BlockSchema::from_json(r#"{"blocks":[{"name":"A","from":1,"to":2},{"name":"B","from":3,"to":3}]}"#).unwrap();
        assert_eq!(s.ranges().unwrap(), vec![(0, 2), (2, 3)]);
        assert_eq!(s.labels(), Some(vec!["A".into(), "B".into()]));
        assert!(BlockSchema::from_json("{}").is_err());
    }

    #[test]
    fn sample_round_trip() {
        let t = read_csv("1,2,3\n4,5,6\n".as_bytes(), HeaderMode::Absent).unwrap();
        let s = t.to_sample(&[(0, 1), (1, 3)], None).unwrap();
        let mut buf = Vec::new();
        write_sample_csv(&s, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "b1_c1,b2_c1,b2_c2\n1.0,2.0,3.0\n4.0,5.0,6.0\n");
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"{}").unwrap();
        write_atomic(&p, b"[]").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "[]");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
