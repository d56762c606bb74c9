//! Interaction data: loading, implicit conversion, k-core pruning and
//! summary statistics.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    /// Explicit feedback value; 1 once the dataset is implicit.
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl Interaction {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, rating: f64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            rating,
            timestamp: None,
        }
    }

    pub fn with_timestamp(mut self, timestamp: i64) -> Self {
        self.timestamp = Some(timestamp);
        self
    }
}

/// An ordered collection of interactions with dense user and item indices.
///
/// Indices are assigned in first-seen order, so reloading the same file
/// always produces the same numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    user_of: Vec<usize>,
    item_of: Vec<usize>,
    implicit: bool,
}

impl Dataset {
    pub fn from_interactions(interactions: Vec<Interaction>, implicit: bool) -> Result<Self> {
        if interactions.is_empty() {
            return Err(Error::Dataset("no interactions".into()));
        }
        let mut users = Vec::new();
        let mut items = Vec::new();
        let mut user_index = HashMap::new();
        let mut item_index = HashMap::new();
        let mut user_of = Vec::with_capacity(interactions.len());
        let mut item_of = Vec::with_capacity(interactions.len());
        for (pos, it) in interactions.iter().enumerate() {
            if it.user_id.is_empty() || it.item_id.is_empty() {
                return Err(Error::Dataset(format!(
                    "interaction {pos} has an empty user or item id"
                )));
            }
            if implicit && it.rating != 1.0 {
                return Err(Error::Dataset(format!(
                    "implicit dataset holds rating {} at interaction {pos}",
                    it.rating
                )));
            }
            user_of.push(intern(&it.user_id, &mut users, &mut user_index));
            item_of.push(intern(&it.item_id, &mut items, &mut item_index));
        }
        if implicit {
            let mut seen = std::collections::HashSet::with_capacity(interactions.len());
            for (u, i) in user_of.iter().zip(&item_of) {
                if !seen.insert((*u, *i)) {
                    return Err(Error::Dataset(format!(
                        "implicit dataset holds duplicate pair ({}, {})",
                        users[*u], items[*i]
                    )));
                }
            }
        }
        Ok(Self {
            interactions,
            users,
            items,
            user_index,
            item_index,
            user_of,
            item_of,
            implicit,
        })
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_implicit(&self) -> bool {
        self.implicit
    }

    /// Dense user index of interaction `pos`.
    pub fn user_of(&self, pos: usize) -> usize {
        self.user_of[pos]
    }

    /// Dense item index of interaction `pos`.
    pub fn item_of(&self, pos: usize) -> usize {
        self.item_of[pos]
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.users[user]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.items[item]
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.user_index.get(user_id).copied()
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_index.get(item_id).copied()
    }

    /// Interaction positions grouped by dense user index, in dataset order.
    pub fn interactions_by_user(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.n_users()];
        for (pos, &u) in self.user_of.iter().enumerate() {
            groups[u].push(pos);
        }
        groups
    }

    /// Writes `user<TAB>item<TAB>rating<TAB>timestamp` rows; a missing
    /// timestamp is an empty field.
    pub fn write_canonical<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for it in &self.interactions {
            match it.timestamp {
                Some(ts) => writeln!(out, "{}\t{}\t{}\t{}", it.user_id, it.item_id, it.rating, ts)?,
                None => writeln!(out, "{}\t{}\t{}\t", it.user_id, it.item_id, it.rating)?,
            }
        }
        Ok(())
    }

    pub fn save_canonical(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        self.write_canonical(&mut out)
            .and_then(|_| out.flush())
            .map_err(|e| Error::io(path, e))
    }
}

fn intern(id: &str, names: &mut Vec<String>, index: &mut HashMap<String, usize>) -> usize {
    if let Some(&ix) = index.get(id) {
        return ix;
    }
    let ix = names.len();
    names.push(id.to_owned());
    index.insert(id.to_owned(), ix);
    ix
}

/// Role of one input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    User,
    Item,
    Rating,
    Timestamp,
    Ignore,
}

/// Delimiter and column layout of a raw interaction file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFormat {
    pub delimiter: String,
    pub columns: Vec<Column>,
    pub skip_header: bool,
}

impl InputFormat {
    /// Tab-separated `user item rating timestamp`; also MovieLens-100K `u.data`.
    pub fn canonical() -> Self {
        Self {
            delimiter: "\t".into(),
            columns: vec![
                Column::User,
                Column::Item,
                Column::Rating,
                Column::Timestamp,
            ],
            skip_header: false,
        }
    }

    /// Builds a format from a delimiter name (`tab`, `comma`, `::`, or a
    /// literal) and a comma-separated column list such as
    /// `user,item,rating,timestamp` where `_` skips a column.
    pub fn parse(delimiter: &str, columns: &str, skip_header: bool) -> Result<Self> {
        let delimiter = match delimiter {
            "tab" | "\\t" | "\t" => "\t".to_owned(),
            "comma" | "," => ",".to_owned(),
            "dcolon" | "::" => "::".to_owned(),
            "" => return Err(Error::Dataset("empty delimiter".into())),
            other => other.to_owned(),
        };
        let columns = columns
            .split(',')
            .map(|c| match c.trim() {
                "user" => Ok(Column::User),
                "item" => Ok(Column::Item),
                "rating" => Ok(Column::Rating),
                "timestamp" => Ok(Column::Timestamp),
                "_" | "" => Ok(Column::Ignore),
                other => Err(Error::Dataset(format!("unknown column name '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let count = |c: Column| columns.iter().filter(|&&x| x == c).count();
        if count(Column::User) != 1 || count(Column::Item) != 1 {
            return Err(Error::Dataset(
                "column mapping must name exactly one user and one item column".into(),
            ));
        }
        if count(Column::Rating) > 1 || count(Column::Timestamp) > 1 {
            return Err(Error::Dataset(
                "duplicate rating or timestamp column".into(),
            ));
        }
        Ok(Self {
            delimiter,
            columns,
            skip_header,
        })
    }

    fn position(&self, column: Column) -> Option<usize> {
        self.columns.iter().position(|&c| c == column)
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    /// Named presets: `canonical`/`ml-100k`, `ml-1m`, `csv` (with header).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" | "tsv" | "ml-100k" => Ok(Self::canonical()),
            "ml-1m" => Self::parse("::", "user,item,rating,timestamp", false),
            "csv" => Self::parse(",", "user,item,rating,timestamp", true),
            other => Err(Error::Dataset(format!(
                "unknown input format preset '{other}'"
            ))),
        }
    }
}

/// Reads one interaction per data row. Indices follow first-seen order and
/// the result is never flagged implicit.
pub fn load_interactions(path: &Path, format: &InputFormat) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };

    let user_col = format.position(Column::User).expect("validated format");
    let item_col = format.position(Column::Item).expect("validated format");
    let rating_col = format.position(Column::Rating);
    let ts_col = format.position(Column::Timestamp);
    let width = format.columns.len();

    let mut interactions = Vec::new();
    for (ix, line) in reader.lines().enumerate() {
        let line_no = ix as u64 + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if ix == 0 && format.skip_header {
            continue;
        }
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(format.delimiter.as_str()).collect();
        if fields.len() != width {
            return Err(parse_err(
                line_no,
                format!("expected {width} columns, found {}", fields.len()),
            ));
        }
        let user = fields[user_col].trim();
        let item = fields[item_col].trim();
        if user.is_empty() || item.is_empty() {
            return Err(parse_err(line_no, "empty user or item id".into()));
        }
        let rating = match rating_col {
            Some(c) => fields[c]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|r| r.is_finite())
                .ok_or_else(|| parse_err(line_no, format!("non-numeric rating '{}'", fields[c])))?,
            None => 1.0,
        };
        let timestamp = match ts_col.map(|c| fields[c].trim()) {
            None | Some("") => None,
            Some(raw) => Some(
                raw.parse::<i64>()
                    .map_err(|_| parse_err(line_no, format!("non-integer timestamp '{raw}'")))?,
            ),
        };
        interactions.push(Interaction {
            user_id: user.to_owned(),
            item_id: item.to_owned(),
            rating,
            timestamp,
        });
    }
    Dataset::from_interactions(interactions, false)
}

/// Treats every rating as positive feedback of value 1.
///
/// Duplicate (user, item) pairs collapse onto the position of their first
/// occurrence and keep the earliest known timestamp.
pub fn to_implicit(ds: &Dataset) -> Dataset {
    if ds.implicit {
        return ds.clone();
    }
    let mut first_at: HashMap<(usize, usize), usize> = HashMap::with_capacity(ds.len());
    let mut out: Vec<Interaction> = Vec::with_capacity(ds.len());
    for (pos, it) in ds.interactions.iter().enumerate() {
        let key = (ds.user_of[pos], ds.item_of[pos]);
        match first_at.get(&key) {
            Some(&slot) => {
                let kept = &mut out[slot];
                kept.timestamp = match (kept.timestamp, it.timestamp) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            None => {
                first_at.insert(key, out.len());
                out.push(Interaction {
                    rating: 1.0,
                    ..it.clone()
                });
            }
        }
    }
    Dataset::from_interactions(out, true).expect("implicit conversion preserves invariants")
}

/// Iteratively drops users and items with fewer than `core` interactions
/// until every remaining user and item has at least `core`.
///
/// The fixed point is unique, so the sweep order (users, then items) does not
/// affect the result.
pub fn prune_kcore(ds: &Dataset, core: usize) -> Result<Dataset> {
    if core == 0 {
        return Err(Error::Dataset("k-core requires core >= 1".into()));
    }
    let mut alive = vec![true; ds.len()];
    let mut user_count = vec![0usize; ds.n_users()];
    let mut item_count = vec![0usize; ds.n_items()];
    for pos in 0..ds.len() {
        user_count[ds.user_of[pos]] += 1;
        item_count[ds.item_of[pos]] += 1;
    }

    loop {
        let mut removed = 0usize;
        for pos in 0..ds.len() {
            if alive[pos] && user_count[ds.user_of[pos]] < core {
                alive[pos] = false;
                removed += 1;
            }
        }
        recount(ds, &alive, &mut user_count, &mut item_count);
        for pos in 0..ds.len() {
            if alive[pos] && item_count[ds.item_of[pos]] < core {
                alive[pos] = false;
                removed += 1;
            }
        }
        recount(ds, &alive, &mut user_count, &mut item_count);
        if removed == 0 {
            break;
        }
    }

    let kept: Vec<Interaction> = ds
        .interactions
        .iter()
        .zip(&alive)
        .filter(|(_, &a)| a)
        .map(|(it, _)| it.clone())
        .collect();
    if kept.is_empty() {
        return Err(Error::Dataset("dataset vanished under k-core".into()));
    }
    Dataset::from_interactions(kept, ds.implicit)
}

fn recount(ds: &Dataset, alive: &[bool], users: &mut [usize], items: &mut [usize]) {
    users.fill(0);
    items.fill(0);
    for (pos, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
        users[ds.user_of[pos]] += 1;
        items[ds.item_of[pos]] += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    #[serde(rename = "users")]
    pub n_users: usize,
    #[serde(rename = "items")]
    pub n_items: usize,
    #[serde(rename = "interactions")]
    pub n_interactions: usize,
    pub density_percent: f64,
}

pub fn compute_stats(ds: &Dataset) -> Result<DatasetStats> {
    let (users, items) = (ds.n_users(), ds.n_items());
    if users == 0 || items == 0 {
        return Err(Error::Dataset(
            "density undefined for a dataset without users or items".into(),
        ));
    }
    Ok(DatasetStats {
        n_users: users,
        n_items: items,
        n_interactions: ds.len(),
        density_percent: ds.len() as f64 / (users as f64 * items as f64) * 100.0,
    })
}
