use serde::{Deserialize, Serialize};

/// Additive decomposition of one forecast window: a level plus one effect
/// per causal covariate. All quantities are in target units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposedForecast {
    /// Causal covariate names, lowest hierarchy rank first.
    pub covariates: Vec<String>,
    pub level: Vec<f64>,
    /// `effects[i][t]`, one row per causal covariate.
    pub effects: Vec<Vec<f64>>,
    /// `coefficients[i][t]`: width 1 for continuous, `k-1` for categorical.
    pub coefficients: Vec<Vec<Vec<f64>>>,
    /// Transformed covariate values the coefficients multiply.
    pub values: Vec<Vec<Vec<f64>>>,
    /// Raw covariate values over the horizon.
    pub raw_values: Vec<Vec<f64>>,
    pub prediction: Vec<f64>,
    /// `max(prediction, 0)`.
    pub truncated_prediction: Vec<f64>,
}

impl ComposedForecast {
    /// Builds effects as coefficient·value dot products and recomposes the
    /// prediction.
    pub fn from_parts(
        covariates: Vec<String>,
        level: Vec<f64>,
        coefficients: Vec<Vec<Vec<f64>>>,
        values: Vec<Vec<Vec<f64>>>,
        raw_values: Vec<Vec<f64>>,
    ) -> Self {
        let effects = coefficients
            .iter()
            .zip(&values)
            .map(|(cs, vs)| {
                cs.iter()
                    .zip(vs)
                    .map(|(c, v)| c.iter().zip(v).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        let mut out = Self {
            covariates,
            level,
            effects,
            coefficients,
            values,
            raw_values,
            prediction: Vec::new(),
            truncated_prediction: Vec::new(),
        };
        out.recompose();
        out
    }

    pub fn horizon(&self) -> usize {
        self.level.len()
    }

    /// Recomputes `prediction = level + Σ effects` and its truncation from
    /// the current level and effect rows.
    pub fn recompose(&mut self) {
        self.prediction = (0..self.level.len())
            .map(|t| {
                self.effects
                    .iter()
                    .fold(self.level[t], |acc, row| acc + row[t])
            })
            .collect();
        self.truncated_prediction = self.prediction.iter().map(|&p| p.max(0.0)).collect();
    }

    pub fn effect_row(&self, name: &str) -> Option<&[f64]> {
        let i = self.covariates.iter().position(|c| c == name)?;
        Some(&self.effects[i])
    }
}
