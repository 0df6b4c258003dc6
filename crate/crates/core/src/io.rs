//! Plain-text formats: numeric CSV tables and key=value configuration.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fitsolver::DataPoint;

/// Parses `key = value` lines. Blank lines and `#` comments are ignored;
/// a repeated key keeps its last value.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value, got `{raw}`", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", n + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// A numeric table with named columns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Table { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, names: &[&str]) -> Option<usize> {
        self.headers.iter().position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[idx]).collect()
    }

    /// Writes with a header row. Numbers use the shortest representation
    /// that round-trips (exponent form for very small or large values), so
    /// output is reproducible byte for byte.
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(&self.headers)?;
        for row in &self.rows {
            wr.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(r);
        let headers: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for (n, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| Error::Parse(format!("row {}: `{f}` is not a number", n + 1))))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != headers.len() {
                return Err(Error::Parse(format!("row {}: {} fields, header has {}", n + 1, row.len(), headers.len())));
            }
            rows.push(row);
        }
        Ok(Table { headers, rows })
    }
}

/// Reads fringe data with columns `phi`, `value` (or `counts`) and an
/// optional `sigma`; σ defaults to √counts.
pub fn read_data_points<R: Read>(r: R) -> Result<Vec<DataPoint>> {
    let t = Table::read(r)?;
    let phi = t.column_index(&["phi"]).ok_or_else(|| Error::Parse("missing `phi` column".into()))?;
    let val = t
        .column_index(&["value", "counts"])
        .ok_or_else(|| Error::Parse("missing `value` or `counts` column".into()))?;
    let sig = t.column_index(&["sigma"]);
    Ok(t.rows
        .iter()
        .map(|r| match sig {
            Some(s) => DataPoint::new(r[phi], r[val], r[s]),
            None => DataPoint::counts(r[phi], r[val]),
        })
        .collect())
}

pub fn write_data_points<W: Write>(w: W, data: &[DataPoint]) -> Result<()> {
    let mut t = Table::new(&["phi", "value", "sigma"]);
    for d in data {
        t.push(vec![d.phi, d.value, d.sigma]);
    }
    t.write(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\ninput = 22\n\nscheme=3,1  # trailing\ng2 = 0.018\ng2=0.02\n").unwrap();
        assert_eq!(kv["input"], "22");
        assert_eq!(kv["scheme"], "3,1");
        assert_eq!(kv["g2"], "0.02");
        assert!(parse_key_values("no equals sign").is_err());
        assert!(parse_key_values("= 3").is_err());
    }

    #[test]
    fn table_round_trip() {
        let mut t = Table::new(&["phi", "prob"]);
        t.push(vec![0.0, 0.1]);
        t.push(vec![std::f64::consts::PI, 1.0 / 3.0]);
        let mut buf = Vec::new();
        t.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("phi,prob\n0.0,0.1\n"));
        let mut tiny = Table::new(&["x"]);
        tiny.push(vec![2.5e-32]);
        let mut buf2 = Vec::new();
        tiny.write(&mut buf2).unwrap();
        assert_eq!(String::from_utf8(buf2).unwrap(), "x\n2.5e-32\n");
        assert_eq!(Table::read(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn data_points_default_sigma() {
        let d = read_data_points("phi,counts\n0.0,100\n0.5,0\n".as_bytes()).unwrap();
        assert_eq!(d[0].sigma, 10.0);
        assert_eq!(d[1].sigma, 1.0);
        let d = read_data_points("phi,value,sigma\n0.0,5,0.5\n".as_bytes()).unwrap();
        assert_eq!(d[0].sigma, 0.5);
        assert!(read_data_points("x,y\n1,2\n".as_bytes()).is_err());
        assert!(read_data_points("phi,value\n1,abc\n".as_bytes()).is_err());
    }
}
