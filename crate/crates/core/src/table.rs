//! Delimited text tables shared by every file format in the crate.
//!
//! Lines are split on commas when a comma is present, otherwise on runs of
//! whitespace. Blank lines are ignored. Lines starting with `#` are comments;
//! a comment of the form `# key=value` is kept as a directive.

use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub directives: Vec<(String, String)>,
    pub header: Vec<String>,
    /// Data rows in file order.
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            ..Self::default()
        }
    }

    pub fn directive(&self, key: &str) -> Option<&str> {
        self.directives
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn push_row<I, S>(&mut self, cells: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows
            .push(cells.into_iter().map(|c| c.to_string()).collect());
    }
}

pub fn split_fields(line: &str) -> Vec<String> {
    if line.contains(',') {
        line.split(',').map(|f| f.trim().to_string()).collect()
    } else {
        line.split_whitespace().map(str::to_string).collect()
    }
}

/// Reads a table. When `has_header` is set the first non-comment line is the
/// header row.
pub fn read_table<R: BufRead>(reader: R, has_header: bool) -> Result<Table> {
    let mut table = Table::default();
    let mut header_pending = has_header;
    for (line_no, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            row: line_no + 1,
            reason: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some((k, v)) = comment.split_once('=') {
                table
                    .directives
                    .push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        let fields = split_fields(trimmed);
        if header_pending {
            table.header = fields;
            header_pending = false;
        } else {
            table.rows.push(fields);
        }
    }
    Ok(table)
}

pub fn write_table<W: Write>(mut w: W, table: &Table) -> io::Result<()> {
    for (k, v) in &table.directives {
        writeln!(w, "# {k}={v}")?;
    }
    if !table.header.is_empty() {
        write_row(&mut w, &table.header)?;
    }
    for row in &table.rows {
        write_row(&mut w, row)?;
    }
    Ok(())
}

fn write_row<W: Write>(w: &mut W, cells: &[String]) -> io::Result<()> {
    if let Some(bad) = cells.iter().find(|c| c.contains([',', '\n'])) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidInput,
            format!("cell {bad:?} contains a delimiter"),
        ));
    }
    writeln!(w, "{}", cells.join(","))
}

pub fn to_string(table: &Table) -> String {
    let mut buf = Vec::new();
    write_table(&mut buf, table).expect("cells validated by caller");
    String::from_utf8(buf).expect("table cells are utf-8")
}
