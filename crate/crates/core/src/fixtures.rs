//! Randomized schemas, bundles and models for property checks and demos.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::model::{
    CovariateBundle, CovariateKind, CovariateSet, CovariateSpec, DType, HnamConfig, HnamModel,
    Standardization, TransformStats,
};

/// Retail-style schema with the first `n_causal` of weekday, relative
/// price, promotion and holiday as causal covariates.
pub fn retail_covariates(n_causal: usize) -> CovariateSet {
    let causal = [
        ("weekday", DType::Categorical { cardinality: 7 }),
        ("relative_price", DType::Continuous),
        ("promotion", DType::Categorical { cardinality: 2 }),
        ("holiday", DType::Categorical { cardinality: 2 }),
    ];
    assert!(
        n_causal <= causal.len(),
        "at most {} causal covariates",
        causal.len()
    );
    let mut specs = vec![
        CovariateSpec::categorical("store", CovariateKind::Static, 3),
        CovariateSpec::continuous("year_sin", CovariateKind::NonCausal),
        CovariateSpec::continuous("time_index", CovariateKind::NonCausal),
        CovariateSpec::continuous("sales", CovariateKind::Past),
    ];
    for (rank, (name, dtype)) in causal.into_iter().take(n_causal).enumerate() {
        specs.push(CovariateSpec::causal(name, dtype, rank));
    }
    CovariateSet::new(specs).expect("fixed schema is valid")
}

/// Small configuration on top of `covariates`.
pub fn tiny_config(
    covariates: CovariateSet,
    d: usize,
    history: usize,
    horizon: usize,
) -> HnamConfig {
    HnamConfig {
        embedding_size: d,
        n_heads: 2,
        mlp_expansion: 2,
        dropout: 0.1,
        history,
        horizon,
        ..HnamConfig::new(covariates)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Arbitrary standardization statistics for every continuous covariate.
pub fn random_stats<R: Rng + ?Sized>(set: &CovariateSet, rng: &mut R) -> TransformStats {
    let mut stats = TransformStats::default();
    for spec in set.specs().iter().filter(|s| !s.is_categorical()) {
        stats.continuous.insert(
            spec.name.clone(),
            Standardization {
                mean: normal(rng),
                std: rng.random_range(0.5..2.0),
            },
        );
    }
    stats
}

fn random_value<R: Rng + ?Sized>(spec: &CovariateSpec, rng: &mut R) -> f64 {
    match spec.dtype {
        DType::Categorical { cardinality } => rng.random_range(0..cardinality) as f64,
        DType::Continuous => normal(rng),
    }
}

/// Random valid bundle for `set`.
pub fn random_bundle<R: Rng + ?Sized>(
    set: &CovariateSet,
    history: usize,
    horizon: usize,
    rng: &mut R,
) -> CovariateBundle {
    let len = history + horizon;
    let mut bundle = CovariateBundle {
        history,
        horizon,
        statics: Vec::new(),
        non_causal: Vec::new(),
        past: Vec::new(),
        causal: Vec::new(),
        scale: rng.random_range(1.0..20.0),
    };
    for spec in set.specs() {
        let row = match spec.kind {
            CovariateKind::Static => vec![random_value(spec, rng); len],
            CovariateKind::Past => (0..len)
                .map(|t| {
                    if t < history {
                        random_value(spec, rng)
                    } else {
                        0.0
                    }
                })
                .collect(),
            _ => (0..len).map(|_| random_value(spec, rng)).collect(),
        };
        bundle.rows_mut(spec.kind).push(row);
    }
    bundle
}

/// Returns a copy of `bundle` with causal row `i` replaced by fresh random
/// values at every step.
pub fn perturb_causal<R: Rng + ?Sized>(
    set: &CovariateSet,
    bundle: &CovariateBundle,
    i: usize,
    rng: &mut R,
) -> CovariateBundle {
    let spec = set.causal()[i];
    let mut out = bundle.clone();
    for v in out.causal[i].iter_mut() {
        *v = random_value(spec, rng);
    }
    out
}

/// Model with freshly drawn parameters and statistics.
pub fn random_model<R: Rng + ?Sized>(config: HnamConfig, rng: &mut R) -> Result<HnamModel> {
    let stats = random_stats(&config.covariates, rng);
    HnamModel::new(config, stats, rng.random())
}

/// Hand-built selection case: 10 series over 400 days with the test block
/// at day 300. Four clean series pass; each other series violates exactly
/// one criterion by the smallest margin (99 sale days, a 101-day zero run,
/// median exactly 5, rank 10 by sales, rank 10 by revenue, 2 gap days).
pub struct SelectionFixture {
    pub dataset: crate::data::Dataset,
    pub criteria: crate::data::SelectionCriteria,
    pub test_start: chrono::NaiveDate,
    pub survivors: [&'static str; 4],
}

pub fn selection_fixture() -> SelectionFixture {
    use crate::data::{DailyRecord, Dataset, Fields, SelectionCriteria, SeriesKey};
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date");
    let day = |t: u64| start + chrono::Days::new(t);
    let series = |name: &str,
                  sales: &dyn Fn(u64) -> Option<f64>,
                  price: f64|
     -> Vec<(SeriesKey, DailyRecord)> {
        (0..400)
            .filter_map(|t| {
                sales(t).map(|s| {
                    let mut r = DailyRecord::new(day(t), s);
                    r.price = Some(price);
                    (SeriesKey::new(name, "s"), r)
                })
            })
            .collect()
    };
    let mut records = Vec::new();
    records.extend(series("clean_a", &|_| Some(20.0), 1.0));
    records.extend(series(
        "clean_b",
        &|t| Some(if t % 2 == 0 { 6.0 } else { 30.0 }),
        1.0,
    ));
    records.extend(series(
        "clean_c",
        &|t| Some(if (50..150).contains(&t) { 0.0 } else { 20.0 }),
        1.0,
    ));
    records.extend(series(
        "clean_d",
        &|t| Some(if t < 200 { 0.0 } else { 20.0 }),
        1.0,
    ));
    records.extend(series(
        "few_days",
        &|t| Some(if t < 201 { 0.0 } else { 20.0 }),
        1.0,
    ));
    records.extend(series(
        "zero_run",
        &|t| Some(if (50..151).contains(&t) { 0.0 } else { 20.0 }),
        1.0,
    ));
    records.extend(series(
        "median_5",
        &|t| Some(if (200..301).contains(&t) { 5.0 } else { 100.0 }),
        1.0,
    ));
    records.extend(series("low_sales", &|_| Some(6.0), 10.0));
    records.extend(series("low_revenue", &|_| Some(10.0), 0.1));
    records.extend(series(
        "gappy",
        &|t| (t != 250 && t != 350).then_some(20.0),
        1.0,
    ));
    SelectionFixture {
        dataset: Dataset::align(
            records,
            Fields {
                price: true,
                ..Fields::default()
            },
            None,
        )
        .expect("fixture aligns"),
        criteria: SelectionCriteria {
            top_n_sales: 9,
            top_n_revenue: 9,
            ..SelectionCriteria::default()
        },
        test_start: day(300),
        survivors: ["clean_a", "clean_b", "clean_c", "clean_d"],
    }
}
