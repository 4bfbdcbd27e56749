use rayon::prelude::*;

use super::{MetricsReport, ResultRow};
use crate::data::UserSet;
use crate::error::{Error, Result};
use crate::hyper::Hyperparams;

/// A point of a hyperparameter grid.
pub trait GridConfig: Clone + Send + Sync {
    /// `(λ2, N)`: lower values win accuracy ties.
    fn tie_key(&self) -> (f64, usize);

    fn describe(&self) -> String;
}

impl GridConfig for Hyperparams {
    fn tie_key(&self) -> (f64, usize) {
        (self.lambda2, self.latent_dim)
    }

    fn describe(&self) -> String {
        format!(
            "N={} lr={} lambda1={} lambda2={} epochs={}",
            self.latent_dim, self.learning_rate, self.lambda1, self.lambda2, self.epochs
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub config: usize,
    pub seed: u64,
    /// A failed cell keeps its error message.
    pub outcome: std::result::Result<MetricsReport, String>,
}

#[derive(Debug, Clone)]
pub struct GridResult<C> {
    pub configs: Vec<C>,
    /// Validation cells in `(config, seed)` order.
    pub cells: Vec<GridCell>,
    /// Mean validation accuracy; `None` when any seed failed.
    pub mean_accuracy: Vec<Option<f64>>,
    pub best: usize,
    /// The best config retrained and evaluated on the test users, one run per seed.
    pub test_runs: Vec<MetricsReport>,
    pub test: MetricsReport,
}

impl<C: GridConfig> GridResult<C> {
    pub fn best_config(&self) -> &C {
        &self.configs[self.best]
    }

    /// One row per validation cell and per test run.
    pub fn rows(&self, dataset: &str, method: &str) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            let (rmse, accuracy, q, users, status) = match &cell.outcome {
                Ok(r) => (r.rmse, r.accuracy, r.interview_size, r.users_evaluated, "ok".to_string()),
                Err(e) => (f64::NAN, f64::NAN, 0, 0, format!("failed: {e}")),
            };
            rows.push(ResultRow {
                method: method.to_string(),
                dataset: dataset.to_string(),
                users: UserSet::Valid.name().to_string(),
                interview_size: q,
                seed: cell.seed,
                rmse,
                accuracy,
                users_evaluated: users,
                config: self.configs[cell.config].describe(),
                status,
            });
        }
        for r in &self.test_runs {
            rows.push(ResultRow::from_report(r, dataset, UserSet::Test, &self.best_config().describe()));
        }
        rows
    }
}

/// Mean rmse and accuracy of several runs; seeds are concatenated.
pub fn average_reports(reports: &[MetricsReport]) -> Result<MetricsReport> {
    let first = reports.first().ok_or(Error::NoData("no runs to average"))?;
    let n = reports.len() as f64;
    Ok(MetricsReport {
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / n,
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        seeds: reports.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
        ..first.clone()
    })
}

/// Trains and evaluates every `(config, seed)` on the validation users, picks the
/// config with the best mean accuracy, then retrains it per seed for the test users.
pub fn grid_search<C, M, T, E>(space: &[C], seeds: &[u64], train: T, eval: E) -> Result<GridResult<C>>
where
    C: GridConfig,
    M: Send,
    T: Fn(&C, u64, UserSet) -> Result<M> + Sync,
    E: Fn(&M, UserSet) -> Result<MetricsReport> + Sync,
{
    if space.is_empty() {
        return Err(Error::NoData("empty hyperparameter space"));
    }
    if seeds.is_empty() {
        return Err(Error::NoData("no seeds"));
    }
    let jobs: Vec<(usize, u64)> = (0..space.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let cells: Vec<GridCell> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let outcome = train(&space[c], seed, UserSet::Valid)
                .and_then(|m| eval(&m, UserSet::Valid))
                .map(|mut r| {
                    r.seeds = vec![seed];
                    r
                })
                .map_err(|e| e.to_string());
            if let Err(e) = &outcome {
                log::warn!("grid cell {} seed {seed} failed: {e}", space[c].describe());
            }
            GridCell { config: c, seed, outcome }
        })
        .collect();
    let mean_accuracy: Vec<Option<f64>> = (0..space.len())
        .map(|c| {
            let accs: Option<Vec<f64>> = cells
                .iter()
                .filter(|cell| cell.config == c)
                .map(|cell| cell.outcome.as_ref().ok().map(|r| r.accuracy))
                .collect();
            accs.map(|a| a.iter().sum::<f64>() / a.len() as f64)
        })
        .collect();
    let best = (0..space.len())
        .filter_map(|c| mean_accuracy[c].map(|a| (c, a)))
        .min_by(|&(ca, aa), &(cb, ab)| {
            let (la, na) = space[ca].tie_key();
            let (lb, nb) = space[cb].tie_key();
            ab.total_cmp(&aa)
                .then(la.total_cmp(&lb))
                .then(na.cmp(&nb))
                .then(ca.cmp(&cb))
        })
        .map(|(c, _)| c)
        .ok_or_else(|| Error::Insufficient("every grid configuration failed".into()))?;
    let test_runs: Vec<MetricsReport> = seeds
        .par_iter()
        .map(|&seed| {
            let mut r = eval(&train(&space[best], seed, UserSet::Test)?, UserSet::Test)?;
            r.seeds = vec![seed];
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let test = average_reports(&test_runs)?;
    Ok(GridResult {
        configs: space.to_vec(),
        cells,
        mean_accuracy,
        best,
        test_runs,
        test,
    })
}
