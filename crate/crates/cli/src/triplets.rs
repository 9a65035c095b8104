//! Rating triplet ingestion: `user item rating [timestamp]` records,
//! tab-separated (the ML100K layout) or comma-separated.
//!
//! Ids may be arbitrary tokens and need not be dense; they are remapped
//! to 0-based indices in first-appearance order and the mapping is
//! reported back so results can be traced to the original ids.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use proprec::matrix::{ObservationSample, ObservedEntry};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripletFormat {
    Ml100kTsv,
    Csv,
}

impl TripletFormat {
    fn separator(self) -> char {
        match self {
            TripletFormat::Ml100kTsv => '\t',
            TripletFormat::Csv => ',',
        }
    }
}

impl std::str::FromStr for TripletFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ml100k-tsv" => Ok(TripletFormat::Ml100kTsv),
            "csv" => Ok(TripletFormat::Csv),
            other => Err(format!(
                "unknown triplet format '{other}', expected ml100k-tsv or csv"
            )),
        }
    }
}

/// Dense index -> original id, in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMapping {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

impl IdMapping {
    /// Tab-separated `kind original dense` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (dense, original) in self.users.iter().enumerate() {
            let _ = writeln!(out, "user\t{original}\t{dense}");
        }
        for (dense, original) in self.items.iter().enumerate() {
            let _ = writeln!(out, "item\t{original}\t{dense}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| CliError::io(path, e))
    }
}

pub fn ingest_triplets(
    path: &Path,
    format: TripletFormat,
) -> Result<(ObservationSample, IdMapping)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let sep = format.separator();

    let mut mapping = IdMapping::default();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut seen: HashMap<(usize, usize), usize> = HashMap::new();
    let mut entries: Vec<ObservedEntry> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        if fields.len() < 3 || fields.len() > 4 {
            return Err(CliError::parse(
                path,
                lineno + 1,
                format!(
                    "expected user{sep}item{sep}rating[{sep}timestamp], found {} fields",
                    fields.len()
                ),
            ));
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(CliError::parse(path, lineno + 1, "empty user or item id"));
        }
        let rating: f64 = fields[2].parse().map_err(|_| {
            CliError::parse(
                path,
                lineno + 1,
                format!("cannot parse rating from '{}'", fields[2]),
            )
        })?;
        if !rating.is_finite() {
            return Err(CliError::parse(
                path,
                lineno + 1,
                format!("non-finite rating {rating}"),
            ));
        }
        let user = intern(fields[0], &mut user_index, &mut mapping.users);
        let item = intern(fields[1], &mut item_index, &mut mapping.items);
        if let Some(first) = seen.insert((user, item), lineno + 1) {
            return Err(CliError::parse(
                path,
                lineno + 1,
                format!(
                    "duplicate pair (user {}, item {}), first seen on line {first}",
                    fields[0], fields[1]
                ),
            ));
        }
        entries.push(ObservedEntry { user, item, rating });
    }

    if entries.is_empty() {
        return Err(CliError::invalid(format!(
            "{}: no rating records",
            path.display()
        )));
    }
    let obs = ObservationSample::new(mapping.users.len(), mapping.items.len(), entries)?;
    Ok((obs, mapping))
}

fn intern(id: &str, index: &mut HashMap<String, usize>, order: &mut Vec<String>) -> usize {
    if let Some(&dense) = index.get(id) {
        return dense;
    }
    let dense = order.len();
    order.push(id.to_string());
    index.insert(id.to_string(), dense);
    dense
}
