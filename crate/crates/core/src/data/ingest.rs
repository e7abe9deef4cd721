use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::records::{DailyRecord, Dataset, Fields, SeriesKey};
use crate::error::{CoreError, Result};

/// Maps source columns onto record fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnMap {
    pub product_id: String,
    pub store_id: String,
    pub date: String,
    pub sales: String,
    pub price: Option<String>,
    pub promotion: Option<String>,
    pub holiday: Option<String>,
    pub snap: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaConfig {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub columns: ColumnMap,
}

fn default_delimiter() -> char {
    ','
}

fn default_date_format() -> String {
    "%Y-%m-%d".into()
}

impl SchemaConfig {
    /// Column names equal to the field names, optional columns as given by
    /// `fields`.
    pub fn standard(fields: Fields) -> Self {
        let opt = |present: bool, name: &str| present.then(|| name.to_string());
        Self {
            delimiter: default_delimiter(),
            date_format: default_date_format(),
            columns: ColumnMap {
                product_id: "product_id".into(),
                store_id: "store_id".into(),
                date: "date".into(),
                sales: "sales".into(),
                price: opt(fields.price, "price"),
                promotion: opt(fields.promotion, "promotion"),
                holiday: opt(fields.holiday, "holiday"),
                snap: opt(fields.snap, "snap"),
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

struct Positions {
    product: usize,
    store: usize,
    date: usize,
    sales: usize,
    price: Option<usize>,
    promotion: Option<usize>,
    holiday: Option<usize>,
    snap: Option<usize>,
}

fn locate(header: &csv::StringRecord, cols: &ColumnMap) -> Result<Positions> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CoreError::Schema(format!("mapped column `{name}` not in header")))
    };
    let opt = |name: &Option<String>| name.as_deref().map(find).transpose();
    Ok(Positions {
        product: find(&cols.product_id)?,
        store: find(&cols.store_id)?,
        date: find(&cols.date)?,
        sales: find(&cols.sales)?,
        price: opt(&cols.price)?,
        promotion: opt(&cols.promotion)?,
        holiday: opt(&cols.holiday)?,
        snap: opt(&cols.snap)?,
    })
}

fn non_empty(row: &csv::StringRecord, pos: Option<usize>) -> Option<&str> {
    pos.and_then(|p| row.get(p))
        .map(str::trim)
        .filter(|s| !s.is_empty())
}

fn parse_row(
    row: &csv::StringRecord,
    pos: &Positions,
    schema: &SchemaConfig,
) -> std::result::Result<(SeriesKey, DailyRecord), String> {
    let field = |p: usize| row.get(p).map(str::trim).unwrap_or("");
    let key = SeriesKey::new(field(pos.product), field(pos.store));
    if key.product_id.is_empty() || key.store_id.is_empty() {
        return Err("empty series key".into());
    }
    let date = NaiveDate::parse_from_str(field(pos.date), &schema.date_format)
        .map_err(|e| format!("date `{}`: {e}", field(pos.date)))?;
    let sales: f64 = field(pos.sales)
        .parse()
        .map_err(|_| format!("sales `{}` is not a number", field(pos.sales)))?;
    if !sales.is_finite() || sales < 0.0 {
        return Err(format!("sales {sales} must be finite and nonnegative"));
    }
    let mut rec = DailyRecord::new(date, sales);
    if let Some(p) = non_empty(row, pos.price) {
        let price: f64 = p
            .parse()
            .map_err(|_| format!("price `{p}` is not a number"))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(format!("price {price} must be positive"));
        }
        rec.price = Some(price);
    }
    rec.promotion = non_empty(row, pos.promotion).map(str::to_string);
    rec.holiday = non_empty(row, pos.holiday).map(str::to_string);
    if let Some(s) = non_empty(row, pos.snap) {
        rec.snap = Some(match s.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => return Err(format!("snap `{other}` is not a boolean")),
        });
    }
    Ok((key, rec))
}

/// Reads a long-format delimited table (one row per series and day).
pub fn ingest_reader<R: Read>(input: R, schema: &SchemaConfig) -> Result<Dataset> {
    if !schema.delimiter.is_ascii() {
        return Err(CoreError::Config("delimiter must be ASCII".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(false)
        .from_reader(input);
    let header = reader.headers()?.clone();
    let pos = locate(&header, &schema.columns)?;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let parsed =
            parse_row(&row, &pos, schema).map_err(|message| CoreError::Row { line, message })?;
        records.push(parsed);
        lines.push(line);
    }
    let fields = Fields {
        price: pos.price.is_some(),
        promotion: pos.promotion.is_some(),
        holiday: pos.holiday.is_some(),
        snap: pos.snap.is_some(),
    };
    Dataset::align(records, fields, Some(&lines))
}

pub fn ingest_csv(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    ingest_reader(std::io::BufReader::new(file), schema)
}

/// Writes `dataset` in the long format read by [`SchemaConfig::standard`].
/// Gap rows are omitted.
pub fn write_long_format<W: std::io::Write>(out: W, dataset: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["product_id", "store_id", "date", "sales"];
    let f = dataset.fields;
    let optional: BTreeMap<&str, bool> = [
        ("price", f.price),
        ("promotion", f.promotion),
        ("holiday", f.holiday),
        ("snap", f.snap),
    ]
    .into_iter()
    .collect();
    header.extend(
        ["price", "promotion", "holiday", "snap"]
            .iter()
            .filter(|c| optional[*c]),
    );
    w.write_record(&header)?;
    for (key, days) in &dataset.series {
        for r in days.iter().filter(|r| !r.missing) {
            let mut row = vec![
                key.product_id.clone(),
                key.store_id.clone(),
                r.date.to_string(),
                r.sales.to_string(),
            ];
            if f.price {
                row.push(r.price.map(|p| p.to_string()).unwrap_or_default());
            }
            if f.promotion {
                row.push(r.promotion.clone().unwrap_or_default());
            }
            if f.holiday {
                row.push(r.holiday.clone().unwrap_or_default());
            }
            if f.snap {
                row.push(r.snap.map(|s| (s as u8).to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
