use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// One raw interaction record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub user: String,
    pub item: String,
    pub time: i64,
}

impl Event {
    pub fn new(user: impl Into<String>, item: impl Into<String>, time: i64) -> Self {
        Event {
            user: user.into(),
            item: item.into(),
            time,
        }
    }
}

/// Parses `user_id \t item_id \t timestamp` lines (no header). Blank lines
/// are skipped; anything else malformed is an error naming the line.
pub fn parse_tsv(text: &str) -> Result<Vec<Event>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(user), Some(item), Some(ts), None) =
            (cols.next(), cols.next(), cols.next(), cols.next())
        else {
            return Err(Error::Data(format!(
                "line {}: expected 3 tab-separated columns",
                lineno + 1
            )));
        };
        let time = ts.trim().parse::<i64>().map_err(|e| {
            Error::Data(format!("line {}: bad timestamp {ts:?}: {e}", lineno + 1))
        })?;
        out.push(Event::new(user, item, time));
    }
    Ok(out)
}

pub fn read_tsv(path: &Path) -> Result<Vec<Event>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv(&text)
}

pub fn to_tsv(events: &[Event]) -> String {
    let mut s = String::new();
    for e in events {
        s.push_str(&format!("{}\t{}\t{}\n", e.user, e.item, e.time));
    }
    s
}

/// Keeps events with `start <= time < end`. Applied before core filtering.
pub fn filter_time_range(events: Vec<Event>, start: Option<i64>, end: Option<i64>) -> Vec<Event> {
    events
        .into_iter()
        .filter(|e| start.is_none_or(|s| e.time >= s) && end.is_none_or(|t| e.time < t))
        .collect()
}

/// Iteratively drops users and items with fewer than `min_count` records
/// until nothing changes. Input order is preserved.
pub fn k_core_filter(mut events: Vec<Event>, min_count: usize) -> Result<Vec<Event>> {
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for e in &events {
            *users.entry(&e.user).or_default() += 1;
            *items.entry(&e.item).or_default() += 1;
        }
        let keep: Vec<bool> = events
            .iter()
            .map(|e| users[e.user.as_str()] >= min_count && items[e.item.as_str()] >= min_count)
            .collect();
        if keep.iter().all(|&k| k) {
            break;
        }
        let mut it = keep.into_iter();
        events.retain(|_| it.next().unwrap_or(false));
    }
    if events.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(events)
}

/// The standard 5-core filter.
pub fn five_core_filter(events: Vec<Event>) -> Result<Vec<Event>> {
    k_core_filter(events, 5)
}
