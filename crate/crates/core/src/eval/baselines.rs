use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const WEEK: usize = 7;

/// Repeats the last `m` observations.
pub fn seasonal_naive(history: &[f64], m: usize, horizon: usize) -> Result<Vec<f64>> {
    if m == 0 || history.len() < m {
        return Err(CoreError::InsufficientData(format!(
            "seasonal naive needs {m} observations, got {}",
            history.len()
        )));
    }
    let last = &history[history.len() - m..];
    Ok((0..horizon).map(|t| last[t % m]).collect())
}

/// Additive error, trend and seasonality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtsParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub season_length: usize,
    /// States before the first observation; seasonal entries sum to 0.
    pub initial_level: f64,
    pub initial_trend: f64,
    pub initial_seasonal: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoltWinters {
    pub params: EtsParams,
    pub level: f64,
    pub trend: f64,
    /// `seasonal[i]` applies `i + 1` steps after the last observation
    /// (modulo the season length).
    pub seasonal: Vec<f64>,
    /// One-step in-sample sum of squared errors at `params`.
    pub sse: f64,
    /// Best sum of squared errors among the grid starts.
    pub grid_sse: f64,
}

struct Filtered {
    sse: f64,
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
}

fn filter(y: &[f64], p: &EtsParams) -> Filtered {
    let m = p.season_length;
    let (mut level, mut trend) = (p.initial_level, p.initial_trend);
    let mut seasonal = p.initial_seasonal.clone();
    let mut sse = 0.0;
    for (t, &obs) in y.iter().enumerate() {
        let s = seasonal[t % m];
        let err = obs - (level + trend + s);
        sse += err * err;
        let (prev_level, prev_trend) = (level, trend);
        level = p.alpha * (obs - s) + (1.0 - p.alpha) * (prev_level + prev_trend);
        trend = p.beta * (level - prev_level) + (1.0 - p.beta) * prev_trend;
        seasonal[t % m] = p.gamma * (obs - prev_level - prev_trend) + (1.0 - p.gamma) * s;
    }
    let n = y.len();
    let seasonal = (0..m).map(|i| seasonal[(n + i) % m]).collect();
    Filtered {
        sse,
        level,
        trend,
        seasonal,
    }
}

/// Initial states from the first two seasons: level and trend from the
/// season means, seasonal indices from the detrended average, centered.
pub fn initial_states(y: &[f64], m: usize) -> (f64, f64, Vec<f64>) {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (a1, a2) = (mean(&y[..m]), mean(&y[m..2 * m]));
    let trend = (a2 - a1) / m as f64;
    let center = (m as f64 - 1.0) / 2.0;
    let mut seasonal: Vec<f64> = (0..m)
        .map(|i| {
            let off = trend * (i as f64 - center);
            0.5 * ((y[i] - (a1 + off)) + (y[i + m] - (a2 + off)))
        })
        .collect();
    let s_mean = mean(&seasonal);
    seasonal.iter_mut().for_each(|s| *s -= s_mean);
    let level = a1 - trend * (center + 1.0);
    (level, trend, seasonal)
}

struct Objective<'a> {
    y: &'a [f64],
    template: EtsParams,
}

fn project(x: &[f64]) -> [f64; 3] {
    [
        x[0].clamp(0.0, 1.0),
        x[1].clamp(0.0, 1.0),
        x[2].clamp(0.0, 1.0),
    ]
}

impl Objective<'_> {
    fn params(&self, x: &[f64]) -> EtsParams {
        let [alpha, beta, gamma] = project(x);
        EtsParams {
            alpha,
            beta,
            gamma,
            ..self.template.clone()
        }
    }

    fn sse(&self, x: &[f64]) -> f64 {
        let s = filter(self.y, &self.params(x)).sse;
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.sse(x))
    }
}

const GRID: [f64; 3] = [0.1, 0.4, 0.7];
const SIMPLEX_STARTS: usize = 3;

/// Chooses smoothing weights minimizing the one-step in-sample squared
/// error: coarse grid, then Nelder-Mead from the best grid points.
pub fn holt_winters_fit(history: &[f64], m: usize) -> Result<HoltWinters> {
    if m < 2 || history.len() < 2 * m + 10 {
        return Err(CoreError::InsufficientData(format!(
            "Holt-Winters with season {m} needs {} observations, got {}",
            2 * m + 10,
            history.len()
        )));
    }
    let (initial_level, initial_trend, initial_seasonal) = initial_states(history, m);
    let objective = Objective {
        y: history,
        template: EtsParams {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            season_length: m,
            initial_level,
            initial_trend,
            initial_seasonal,
        },
    };
    let mut grid: Vec<(f64, Vec<f64>)> = Vec::new();
    for a in GRID {
        for b in GRID {
            for g in GRID {
                let x = vec![a, b, g];
                grid.push((objective.sse(&x), x));
            }
        }
    }
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let grid_sse = grid[0].0;
    let mut best = grid[0].clone();
    for (_, start) in grid.iter().take(SIMPLEX_STARTS) {
        let mut simplex = vec![start.clone()];
        for i in 0..3 {
            let mut v = start.clone();
            v[i] += if v[i] + 0.1 <= 1.0 { 0.1 } else { -0.1 };
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-12)
            .map_err(|e| CoreError::Evaluation(e.to_string()))?;
        let run = Executor::new(
            Objective {
                y: history,
                template: objective.template.clone(),
            },
            solver,
        )
        .configure(|s| s.max_iters(300))
        .run();
        if let Ok(res) = run {
            if let Some(x) = res.state.best_param {
                let x = project(&x).to_vec();
                let s = objective.sse(&x);
                if s < best.0 {
                    best = (s, x);
                }
            }
        }
    }
    let params = objective.params(&best.1);
    let fitted = filter(history, &params);
    Ok(HoltWinters {
        params,
        level: fitted.level,
        trend: fitted.trend,
        seasonal: fitted.seasonal,
        sse: fitted.sse,
        grid_sse,
    })
}

/// `level + h * trend + seasonal` for `h = 1..=horizon`.
pub fn holt_winters_forecast(fit: &HoltWinters, horizon: usize) -> Vec<f64> {
    let m = fit.params.season_length;
    (1..=horizon)
        .map(|h| fit.level + h as f64 * fit.trend + fit.seasonal[(h - 1) % m])
        .collect()
}

/// In-sample one-step squared error of `params` on `history`.
pub fn one_step_sse(history: &[f64], params: &EtsParams) -> f64 {
    filter(history, params).sse
}
