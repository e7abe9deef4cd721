use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One product sold in one store.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub product_id: String,
    pub store_id: String,
}

impl SeriesKey {
    pub fn new(product_id: impl Into<String>, store_id: impl Into<String>) -> Self {
        Self {
            product_id: product_id.into(),
            store_id: store_id.into(),
        }
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.product_id, self.store_id)
    }
}

impl FromStr for SeriesKey {
    type Err = CoreError;

    /// Parses the `product@store` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        match s.rsplit_once('@') {
            Some((p, st)) if !p.is_empty() && !st.is_empty() => Ok(Self::new(p, st)),
            _ => Err(CoreError::SeriesNotFound(format!(
                "`{s}` is not of the form product@store"
            ))),
        }
    }
}

/// Monday = 0 .. Sunday = 6.
pub fn weekday_index(date: NaiveDate) -> u8 {
    date.weekday().num_days_from_monday() as u8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    pub sales: f64,
    pub price: Option<f64>,
    pub promotion: Option<String>,
    pub holiday: Option<String>,
    pub weekday: u8,
    pub snap: Option<bool>,
    /// Calendar gap filled in during alignment; `sales` is 0.
    pub missing: bool,
}

impl DailyRecord {
    pub fn new(date: NaiveDate, sales: f64) -> Self {
        Self {
            date,
            sales,
            price: None,
            promotion: None,
            holiday: None,
            weekday: weekday_index(date),
            snap: None,
            missing: false,
        }
    }

    fn gap(date: NaiveDate) -> Self {
        Self {
            missing: true,
            ..Self::new(date, 0.0)
        }
    }
}

/// Which optional record fields the source provides.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fields {
    pub price: bool,
    pub promotion: bool,
    pub holiday: bool,
    pub snap: bool,
}

/// Daily records aligned on a shared calendar: every series has exactly
/// one record per day in `[start, start + n_days)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub start: NaiveDate,
    pub n_days: usize,
    pub fields: Fields,
    pub series: BTreeMap<SeriesKey, Vec<DailyRecord>>,
}

impl Dataset {
    /// Aligns loose records onto the common calendar spanning all dates.
    /// Absent days become records flagged `missing`. `lines[i]` is used to
    /// report duplicates of `records[i]`.
    pub fn align(
        records: Vec<(SeriesKey, DailyRecord)>,
        fields: Fields,
        lines: Option<&[usize]>,
    ) -> Result<Self> {
        let (Some(start), Some(end)) = (
            records.iter().map(|(_, r)| r.date).min(),
            records.iter().map(|(_, r)| r.date).max(),
        ) else {
            return Err(CoreError::InsufficientData("no records".into()));
        };
        let n_days = (end - start).num_days() as usize + 1;
        let mut series: BTreeMap<SeriesKey, Vec<Option<DailyRecord>>> = BTreeMap::new();
        for (i, (key, rec)) in records.into_iter().enumerate() {
            let slot = (rec.date - start).num_days() as usize;
            let days = series
                .entry(key.clone())
                .or_insert_with(|| vec![None; n_days]);
            if days[slot].is_some() {
                return Err(CoreError::Row {
                    line: lines.map_or(i + 1, |l| l[i]),
                    message: format!("duplicate record for {key} on {}", rec.date),
                });
            }
            days[slot] = Some(rec);
        }
        let series = series
            .into_iter()
            .map(|(key, days)| {
                let filled = days
                    .into_iter()
                    .enumerate()
                    .map(|(t, r)| r.unwrap_or_else(|| DailyRecord::gap(date_at(start, t))))
                    .collect();
                (key, filled)
            })
            .collect();
        Ok(Self {
            start,
            n_days,
            fields,
            series,
        })
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        date_at(self.start, index)
    }

    /// Day index of `date`, if inside the calendar.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let i = (date - self.start).num_days();
        (i >= 0 && (i as usize) < self.n_days).then_some(i as usize)
    }

    pub fn get(&self, key: &SeriesKey) -> Result<&[DailyRecord]> {
        self.series
            .get(key)
            .map(Vec::as_slice)
            .ok_or_else(|| CoreError::SeriesNotFound(key.to_string()))
    }

    /// Keeps only `keys`.
    pub fn restrict(&self, keys: &[SeriesKey]) -> Result<Self> {
        let mut series = BTreeMap::new();
        for k in keys {
            series.insert(k.clone(), self.get(k)?.to_vec());
        }
        Ok(Self {
            series,
            ..self.clone_header()
        })
    }

    fn clone_header(&self) -> Self {
        Self {
            start: self.start,
            n_days: self.n_days,
            fields: self.fields,
            series: BTreeMap::new(),
        }
    }
}

pub fn date_at(start: NaiveDate, index: usize) -> NaiveDate {
    start + chrono::Days::new(index as u64)
}
