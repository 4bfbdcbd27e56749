use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use super::{IdMap, RawDataset};
use crate::error::{Error, Result};

/// Field separator of a rating file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Separator {
    Tab,
    Comma,
    /// MovieLens `.dat` style `::`.
    DoubleColon,
    /// Any run of spaces or tabs.
    Whitespace,
    Custom(String),
}

impl Separator {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Separator::Tab => line.split('\t').collect(),
            Separator::Comma => line.split(',').collect(),
            Separator::DoubleColon => line.split("::").collect(),
            Separator::Whitespace => line.split_whitespace().collect(),
            Separator::Custom(s) => line.split(s.as_str()).collect(),
        }
    }
}

impl FromStr for Separator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "tab" | "\\t" | "\t" | "tsv" => Separator::Tab,
            "comma" | "," | "csv" => Separator::Comma,
            "::" | "dat" | "movielens" => Separator::DoubleColon,
            "whitespace" | "ws" | "space" => Separator::Whitespace,
            "" => return Err("empty separator".into()),
            other => Separator::Custom(other.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub separator: Separator,
    /// Skip the first non-comment line.
    pub header: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            separator: Separator::Tab,
            header: false,
        }
    }
}

/// Reads `user<sep>item<sep>rating[<sep>timestamp]` lines.
///
/// Identifiers are remapped to dense indices in order of first appearance.
/// A repeated `(user, item)` pair keeps its last rating.
pub fn load_dataset(path: impl AsRef<Path>, options: &LoadOptions) -> Result<RawDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(BufReader::new(file), options).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub(crate) fn read_dataset(reader: impl BufRead, options: &LoadOptions) -> Result<RawDataset> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut header_pending = options.header;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields = options.separator.split(line);
        let fields: Vec<&str> = fields.into_iter().map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 3 or 4 fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: "empty user or item identifier".into(),
            });
        }
        let raw: f64 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno + 1,
            message: format!("invalid rating {:?}", fields[2]),
        })?;
        if !raw.is_finite() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("non-finite rating {:?}", fields[2]),
            });
        }
        let u = users.intern(fields[0]);
        let i = items.intern(fields[1]);
        entries.push((u, i, raw));
    }
    if entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // stable: among duplicates the file order survives, keep the last
    entries.sort_by_key(|e| (e.0, e.1));
    let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
    for e in entries {
        match dedup.last_mut() {
            Some(last) if last.0 == e.0 && last.1 == e.1 => *last = e,
            _ => dedup.push(e),
        }
    }
    Ok(RawDataset {
        user_ids: users,
        item_ids: items,
        entries: dedup,
    })
}
