//! Stacked-decomposition plot data: one record per step and component.

use std::io::Write;

use crate::api::ForecastResponse;
use crate::error::{ErrorClass, Result, ServiceError};

/// Columns `step,date,component,role,value`. Roles are `level` (line),
/// `effect` (stacked bar), `prediction` (line) and `actual` (overlay).
pub fn write_plot_data<W: Write>(out: W, response: &ForecastResponse) -> Result<()> {
    let err = |e: csv::Error| ServiceError::new(ErrorClass::Io, e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "date", "component", "role", "value"])
        .map_err(err)?;
    let fc = &response.forecast;
    for (t, date) in response.dates.iter().enumerate() {
        let mut row = |component: &str, role: &str, value: f64| {
            w.write_record([
                t.to_string(),
                date.to_string(),
                component.to_string(),
                role.to_string(),
                value.to_string(),
            ])
        };
        row("level", "level", fc.level[t]).map_err(err)?;
        for (name, effect) in fc.covariates.iter().zip(&fc.effects) {
            row(name, "effect", effect[t]).map_err(err)?;
        }
        row("prediction", "prediction", fc.prediction[t]).map_err(err)?;
        if let Some(actual) = response.actuals[t] {
            row("actual", "actual", actual).map_err(err)?;
        }
    }
    w.flush()?;
    Ok(())
}
