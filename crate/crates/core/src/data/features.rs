use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::records::{date_at, DailyRecord, Dataset, Fields, SeriesKey};
use crate::error::{CoreError, Result};
use crate::model::{CovariateKind, CovariateSet, CovariateSpec, DType};

pub const RELATIVE_PRICE_WINDOW: usize = 20;
pub const YEAR_DAYS: f64 = 365.25;

/// Placeholder entry keeping every vocabulary at two or more categories.
pub const OTHER: &str = "<other>";

/// Category labels; index 0 is the reference category. Absent values are
/// represented by the empty label, which sorts first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: Vec<String>,
}

impl Vocabulary {
    pub fn from_values<'a>(values: impl IntoIterator<Item = Option<&'a str>>) -> Self {
        let mut set: BTreeSet<String> = values
            .into_iter()
            .map(|v| v.unwrap_or("").to_string())
            .collect();
        if set.len() < 2 {
            set.insert(OTHER.to_string());
        }
        Self {
            labels: set.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index(&self, value: Option<&str>) -> Option<usize> {
        self.labels
            .binary_search_by(|l| l.as_str().cmp(value.unwrap_or("")))
            .ok()
    }

    /// Unknown labels map to the reference category.
    pub fn encode(&self, value: Option<&str>) -> (usize, bool) {
        match self.index(value) {
            Some(i) => (i, true),
            None => (0, false),
        }
    }
}

/// Dataset-level encoding decisions: vocabularies, present fields and
/// window lengths. Determines the covariate schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturePlan {
    pub start: NaiveDate,
    pub history: usize,
    pub horizon: usize,
    pub fields: Fields,
    pub products: Vocabulary,
    pub stores: Vocabulary,
    pub promotion: Option<Vocabulary>,
    pub holiday: Option<Vocabulary>,
}

/// Per-day covariate columns in the order they are engineered.
pub const STATIC_COLUMNS: [&str; 2] = ["product", "store"];
pub const DAILY_NON_CAUSAL: [&str; 3] = ["year_sin", "year_cos", "time_index"];
pub const WINDOW_POSITION: &str = "window_position";
pub const SNAP: &str = "snap";
pub const SALES: &str = "sales";
pub const MISSING: &str = "missing";
pub const WEEKDAY: &str = "weekday";
pub const RELATIVE_PRICE: &str = "relative_price";
pub const PROMOTION: &str = "promotion";
pub const HOLIDAY: &str = "holiday";

impl FeaturePlan {
    /// Vocabularies for promotion and holiday come from days before
    /// `fit_end` only.
    pub fn fit(dataset: &Dataset, fit_end: usize, history: usize, horizon: usize) -> Self {
        let keys = dataset.series.keys();
        let products = Vocabulary::from_values(keys.clone().map(|k| Some(k.product_id.as_str())));
        let stores = Vocabulary::from_values(keys.map(|k| Some(k.store_id.as_str())));
        let train_days = || {
            dataset
                .series
                .values()
                .flat_map(move |d| d[..fit_end.min(d.len())].iter())
        };
        let fields = dataset.fields;
        let vocab = |f: fn(&DailyRecord) -> Option<&str>| {
            Vocabulary::from_values(train_days().filter(|r| !r.missing).map(f))
        };
        Self {
            start: dataset.start,
            history,
            horizon,
            fields,
            products,
            stores,
            promotion: fields.promotion.then(|| vocab(|r| r.promotion.as_deref())),
            holiday: fields.holiday.then(|| vocab(|r| r.holiday.as_deref())),
        }
    }

    /// Schema: product and store static; calendar and window position
    /// non-causal; sales and gap flag past; weekday, relative price,
    /// promotion and holiday causal in that order.
    pub fn covariates(&self) -> CovariateSet {
        let mut specs = vec![
            CovariateSpec::categorical("product", CovariateKind::Static, self.products.len()),
            CovariateSpec::categorical("store", CovariateKind::Static, self.stores.len()),
        ];
        for name in DAILY_NON_CAUSAL.iter().chain([&WINDOW_POSITION]) {
            specs.push(CovariateSpec::continuous(name, CovariateKind::NonCausal));
        }
        if self.fields.snap {
            specs.push(CovariateSpec::categorical(
                SNAP,
                CovariateKind::NonCausal,
                2,
            ));
        }
        specs.push(CovariateSpec::continuous(SALES, CovariateKind::Past));
        specs.push(CovariateSpec::categorical(MISSING, CovariateKind::Past, 2));
        let mut causal = vec![(WEEKDAY, DType::Categorical { cardinality: 7 })];
        if self.fields.price {
            causal.push((RELATIVE_PRICE, DType::Continuous));
        }
        if let Some(v) = &self.promotion {
            causal.push((
                PROMOTION,
                DType::Categorical {
                    cardinality: v.len(),
                },
            ));
        }
        if let Some(v) = &self.holiday {
            causal.push((
                HOLIDAY,
                DType::Categorical {
                    cardinality: v.len(),
                },
            ));
        }
        for (rank, (name, dtype)) in causal.into_iter().enumerate() {
            specs.push(CovariateSpec::causal(name, dtype, rank));
        }
        CovariateSet::new(specs).expect("plan schema is valid")
    }
}

/// Engineered per-day columns of one series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesFeatures {
    pub key: SeriesKey,
    pub sales: Vec<f64>,
    /// Per-day covariate values by covariate name. Static columns repeat
    /// one value; the window-position column is absent.
    pub columns: BTreeMap<String, Vec<f64>>,
    /// Days whose relative price fell back to 0 for lack of prices.
    pub price_fallback: Vec<bool>,
    /// Days whose promotion or holiday label was outside the vocabulary.
    pub unseen_category_days: usize,
}

impl SeriesFeatures {
    pub fn len(&self) -> usize {
        self.sales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sales.is_empty()
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| CoreError::Schema(format!("no engineered column `{name}`")))
    }
}

/// `(p[t] - m) / m` with `m` the mean of the available prices over the
/// trailing window `t-19..=t`. Days without any price in the window, or
/// without a price of their own, yield 0 and are flagged.
pub fn relative_price(prices: &[Option<f64>]) -> (Vec<f64>, Vec<bool>) {
    let mut out = Vec::with_capacity(prices.len());
    let mut flags = Vec::with_capacity(prices.len());
    for t in 0..prices.len() {
        let lo = (t + 1).saturating_sub(RELATIVE_PRICE_WINDOW);
        let window: Vec<f64> = prices[lo..=t].iter().flatten().copied().collect();
        match prices[t] {
            Some(p) if !window.is_empty() => {
                let mean = window.iter().sum::<f64>() / window.len() as f64;
                out.push((p - mean) / mean);
                flags.push(false);
            }
            _ => {
                out.push(0.0);
                flags.push(true);
            }
        }
    }
    (out, flags)
}

/// Forward fill; leading gaps stay empty.
pub fn carry_forward(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut last = None;
    values
        .iter()
        .map(|v| {
            last = v.or(last);
            last
        })
        .collect()
}

/// `(sin, cos)` of the zero-based day of year over a 365.25-day cycle.
pub fn year_phase(date: NaiveDate) -> (f64, f64) {
    let angle = 2.0 * PI * date.ordinal0() as f64 / YEAR_DAYS;
    (angle.sin(), angle.cos())
}

/// Relative position of step `position` in a window of `history + horizon`
/// steps: negative in the history, zero at the origin.
pub fn window_position(position: usize, history: usize, horizon: usize) -> f64 {
    (position as f64 - history as f64) / (history + horizon) as f64
}

pub fn engineer_features(
    key: &SeriesKey,
    days: &[DailyRecord],
    plan: &FeaturePlan,
) -> Result<SeriesFeatures> {
    let n = days.len();
    let mut columns = BTreeMap::new();
    let product = plan.products.index(Some(&key.product_id));
    let store = plan.stores.index(Some(&key.store_id));
    let (Some(product), Some(store)) = (product, store) else {
        return Err(CoreError::SeriesNotFound(format!(
            "{key} is not in the plan"
        )));
    };
    columns.insert("product".to_string(), vec![product as f64; n]);
    columns.insert("store".to_string(), vec![store as f64; n]);
    let (mut sin, mut cos, mut time) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for t in 0..n {
        let (s, c) = year_phase(date_at(plan.start, t));
        sin.push(s);
        cos.push(c);
        time.push(t as f64);
    }
    columns.insert("year_sin".to_string(), sin);
    columns.insert("year_cos".to_string(), cos);
    columns.insert("time_index".to_string(), time);
    if plan.fields.snap {
        columns.insert(
            SNAP.to_string(),
            days.iter()
                .map(|r| r.snap.unwrap_or(false) as u8 as f64)
                .collect(),
        );
    }
    columns.insert(
        MISSING.to_string(),
        days.iter().map(|r| r.missing as u8 as f64).collect(),
    );
    columns.insert(
        WEEKDAY.to_string(),
        days.iter().map(|r| r.weekday as f64).collect(),
    );
    let mut price_fallback = vec![false; n];
    if plan.fields.price {
        let prices = carry_forward(&days.iter().map(|r| r.price).collect::<Vec<_>>());
        let (rel, flags) = relative_price(&prices);
        columns.insert(RELATIVE_PRICE.to_string(), rel);
        price_fallback = flags;
    }
    let mut unseen = 0;
    let mut encode = |vocab: &Vocabulary, get: fn(&DailyRecord) -> Option<&str>| -> Vec<f64> {
        days.iter()
            .map(|r| {
                let (i, known) = vocab.encode(get(r));
                unseen += usize::from(!known && !r.missing);
                i as f64
            })
            .collect()
    };
    if let Some(v) = &plan.promotion {
        let col = encode(v, |r| r.promotion.as_deref());
        columns.insert(PROMOTION.to_string(), col);
    }
    if let Some(v) = &plan.holiday {
        let col = encode(v, |r| r.holiday.as_deref());
        columns.insert(HOLIDAY.to_string(), col);
    }
    if unseen > 0 {
        log::warn!(
            "{key}: {unseen} days with categories unseen in training mapped to the reference"
        );
    }
    Ok(SeriesFeatures {
        key: key.clone(),
        sales: days.iter().map(|r| r.sales).collect(),
        columns,
        price_fallback,
        unseen_category_days: unseen,
    })
}
