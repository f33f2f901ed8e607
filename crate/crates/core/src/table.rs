//! CSV tables: per-generation summaries, backward-tree rows, report records,
//! and merging of tables that share a header.
//!
//! Dialect: comma separated, '.' decimal point, no quoting, mandatory header,
//! empty field for a missing value.

use std::io::Write;

use crate::backward_tree::StabilityReport;
use crate::error::{Error, Result};
use crate::simulator::GenerationSummary;

/// A parsed CSV document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Csv { line, msg: format!("{kind:?}") },
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().quote_style(csv::QuoteStyle::Never).from_writer(w)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl Table {
    pub fn parse(text: &str) -> Result<Table> {
        let mut rd = csv::ReaderBuilder::new().has_headers(false).quoting(false).from_reader(text.as_bytes());
        let mut records = rd.records();
        let header: Vec<String> = match records.next() {
            Some(r) => r.map_err(csv_err)?.iter().map(str::to_string).collect(),
            None => return Err(Error::Csv { line: 1, msg: "missing header".into() }),
        };
        if header.iter().any(|h| h.trim().is_empty()) {
            return Err(Error::Csv { line: 1, msg: "empty column name".into() });
        }
        let mut rows = Vec::new();
        for r in records {
            let r = r.map_err(csv_err)?;
            if r.len() != header.len() {
                let line = r.position().map_or(0, |p| p.line() as usize);
                return Err(Error::Csv { line, msg: format!("expected {} fields, found {}", header.len(), r.len()) });
            }
            rows.push(r.iter().map(str::to_string).collect());
        }
        Ok(Table { header, rows })
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = writer(w);
        wr.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            wr.write_record(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric column; empty fields become None.
    pub fn floats(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let i = self.column(name).ok_or_else(|| Error::Csv { line: 1, msg: format!("no column {name}") })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let f = r[i].trim();
                if f.is_empty() {
                    return Ok(None);
                }
                f.parse()
                    .map(Some)
                    .map_err(|_| Error::Csv { line: k + 2, msg: format!("{name}: not a number: {f:?}") })
            })
            .collect()
    }
}

/// Concatenate tables with identical headers, in order.
pub fn merge(tables: &[Table]) -> Result<Table> {
    let first = tables.first().ok_or_else(|| Error::Csv { line: 0, msg: "nothing to merge".into() })?;
    let mut out = Table { header: first.header.clone(), rows: Vec::new() };
    for (i, t) in tables.iter().enumerate() {
        if t.header != out.header {
            return Err(Error::Csv { line: 1, msg: format!("input {} has a different header", i + 1) });
        }
        out.rows.extend(t.rows.iter().cloned());
    }
    Ok(out)
}

/// Rows: replicate, gen, count_in_obs, max_pos, leader_root_pos, bin_0..bin_{B-1}.
pub fn generations_table(runs: &[Vec<GenerationSummary>], bins: usize) -> Table {
    let mut header: Vec<String> =
        ["replicate", "gen", "count_in_obs", "max_pos", "leader_root_pos"].map(String::from).to_vec();
    header.extend((0..bins).map(|i| format!("bin_{i}")));
    let rows = runs
        .iter()
        .enumerate()
        .flat_map(|(rep, rows)| {
            rows.iter().map(move |g| {
                let mut r = vec![
                    rep.to_string(),
                    g.gen_index.to_string(),
                    g.count_in_obs.to_string(),
                    opt(g.max_pos),
                    opt(g.leader_root_pos),
                ];
                r.extend(g.histogram.iter().map(|c| c.to_string()));
                r
            })
        })
        .collect();
    Table { header, rows }
}

/// Rows: sample_id, n, S_n, k_n, rho_n_count, hit_n; truncated counts are empty.
pub fn backward_table(report: &StabilityReport) -> Table {
    let header = ["sample_id", "n", "S_n", "k_n", "rho_n_count", "hit_n"].map(String::from).to_vec();
    let mut rows = Vec::new();
    for (id, s) in report.samples.iter().enumerate() {
        for n in 0..s.depth() {
            rows.push(vec![
                id.to_string(),
                (n + 1).to_string(),
                s.s[n].to_string(),
                s.k[n].to_string(),
                s.rho[n].map(|c| c.to_string()).unwrap_or_default(),
                u8::from(s.hit[n]).to_string(),
            ]);
        }
    }
    Table { header, rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_write_round_trip() {
        let text = "a,b,c\n1,,3\n4,5.5,-6e-3\n";
        let t = Table::parse(text).unwrap();
        assert_eq!(t.rows.len(), 2);
        let mut out = Vec::new();
        t.write(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        assert_eq!(t.floats("b").unwrap(), vec![None, Some(5.5)]);
        assert!(t.floats("z").is_err());
    }

    #[test]
    fn ragged_rows_and_missing_header_are_errors() {
        assert!(matches!(Table::parse(""), Err(Error::Csv { line: 1, .. })));
        match Table::parse("a,b\n1,2\n3\n") {
            Err(Error::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(Table::parse("a,,b\n"), Err(Error::Csv { .. })));
        assert!(matches!(Table::parse("a\nx\n").unwrap().floats("a"), Err(Error::Csv { line: 2, .. })));
    }

    #[test]
    fn merge_requires_equal_headers() {
        let a = Table::parse("x,y\n1,2\n").unwrap();
        let b = Table::parse("x,y\n3,4\n").unwrap();
        let m = merge(&[a.clone(), b]).unwrap();
        assert_eq!(m.rows, vec![vec!["1", "2"], vec!["3", "4"]]);
        assert!(merge(&[a, Table::parse("x,z\n").unwrap()]).is_err());
        assert!(merge(&[]).is_err());
    }

    #[test]
    fn generation_rows() {
        let g = GenerationSummary {
            gen_index: 2,
            count_in_obs: 3,
            max_pos: Some(0.5),
            leader_root_pos: None,
            histogram: vec![1, 2],
        };
        let t = generations_table(&[vec![g]], 2);
        assert_eq!(t.header.len(), 7);
        assert_eq!(t.rows[0], vec!["0", "2", "3", "0.5", "", "1", "2"]);
    }
}
