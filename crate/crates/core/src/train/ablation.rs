use std::fmt::Write as _;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::trainer::{evaluate, train, Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::model::scan::Axis;
use crate::model::{ModelConfig, VimConfig};

/// One of the four ablation sweeps over the ViM configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Blocks,
    Patch,
    Scan,
    Batch,
}

impl Grid {
    pub const ALL: [Grid; 4] = [Grid::Blocks, Grid::Patch, Grid::Scan, Grid::Batch];

    pub fn name(self) -> &'static str {
        match self {
            Grid::Blocks => "blocks",
            Grid::Patch => "patch",
            Grid::Scan => "scan",
            Grid::Batch => "batch",
        }
    }

    /// Grid values as labels.
    pub fn values(self) -> Vec<String> {
        let nums = |v: &[usize]| v.iter().map(usize::to_string).collect();
        match self {
            Grid::Blocks => nums(&[1, 2, 3, 4, 5]),
            Grid::Patch => nums(&[4, 8, 16, 32, 64]),
            Grid::Scan => ["all", "x", "y", "z"].map(String::from).to_vec(),
            Grid::Batch => nums(&[4, 16, 32, 128, 256]),
        }
    }

    /// Applies one grid value to the base configuration.
    pub fn apply(self, value: &str, model: &VimConfig, train: &TrainConfig) -> Result<(VimConfig, TrainConfig)> {
        let (mut m, mut t) = (model.clone(), train.clone());
        let num = || {
            value
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{} value {value:?} is not an integer", self.name())))
        };
        match self {
            Grid::Blocks => m.blocks = num()?,
            Grid::Patch => m.patch = num()?,
            Grid::Batch => t.batch_size = num()?,
            Grid::Scan => {
                m.scan_axes = match value {
                    "all" => Axis::ALL.to_vec(),
                    "x" => vec![Axis::X],
                    "y" => vec![Axis::Y],
                    "z" => vec![Axis::Z],
                    _ => return Err(Error::Config(format!("unknown scan setting {value:?}"))),
                }
            }
        }
        m.validate()?;
        t.validate()?;
        Ok((m, t))
    }
}

impl FromStr for Grid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Grid::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation grid {s:?} (blocks, patch, scan, batch)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub grid: Grid,
    pub value: String,
    pub parameters: Option<usize>,
    pub best_epoch: Option<usize>,
    pub r2: Option<f64>,
    #[serde(rename = "rmse_mD")]
    pub rmse_md: Option<f64>,
    pub max_rel_err: Option<f64>,
    /// `ok`, or the reason the point was skipped.
    pub status: String,
}

/// Trains and evaluates the model at every point of `grid` with a shared
/// seed. Invalid or failing points are kept as skipped rows.
pub fn ablate(
    grid: Grid,
    model: &VimConfig,
    cfg: &TrainConfig,
    train_set: &Dataset,
    valid: &Dataset,
    test: &Dataset,
) -> Vec<AblationRow> {
    grid.values()
        .into_iter()
        .map(|value| {
            let run = || -> Result<AblationRow> {
                let (m, t) = grid.apply(&value, model, cfg)?;
                let mc = ModelConfig::Vim(m);
                let mut net = mc.build(t.seed)?;
                let outcome = train(net.as_mut(), train_set, valid, &t)?;
                let report = evaluate(net.as_mut(), test, &outcome.norm, t.batch_size)?;
                Ok(AblationRow {
                    grid,
                    value: value.clone(),
                    parameters: Some(mc.count_parameters()),
                    best_epoch: Some(outcome.best_epoch),
                    r2: Some(report.r2),
                    rmse_md: Some(report.rmse_md),
                    max_rel_err: report.max_rel_err,
                    status: "ok".into(),
                })
            };
            run().unwrap_or_else(|e| {
                warn!("{} = {value}: skipped: {e}", grid.name());
                AblationRow {
                    grid,
                    value: value.clone(),
                    parameters: None,
                    best_epoch: None,
                    r2: None,
                    rmse_md: None,
                    max_rel_err: None,
                    status: format!("skipped: {e}"),
                }
            })
        })
        .collect()
}

pub fn rows_csv(rows: &[AblationRow]) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("grid,value,parameters,best_epoch,r2,rmse_mD,max_rel_err,status\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},\"{}\"",
            r.grid.name(),
            r.value,
            r.parameters.map(|p| p.to_string()).unwrap_or_default(),
            r.best_epoch.map(|p| p.to_string()).unwrap_or_default(),
            opt(r.r2),
            opt(r.rmse_md),
            opt(r.max_rel_err),
            r.status.replace('"', "'"),
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_have_the_expected_points() {
        assert_eq!(Grid::Blocks.values().len(), 5);
        assert_eq!(Grid::Patch.values().len(), 5);
        assert_eq!(Grid::Scan.values(), ["all", "x", "y", "z"]);
        assert_eq!(Grid::Batch.values().len(), 5);
        assert_eq!("scan".parse::<Grid>().unwrap(), Grid::Scan);
        assert!("depth".parse::<Grid>().is_err());
    }

    #[test]
    fn points_apply_to_the_base_config() {
        let (m, t) = (VimConfig::default(), TrainConfig::default());
        assert_eq!(Grid::Patch.apply("64", &m, &t).unwrap().0.grid(), 1);
        assert_eq!(Grid::Scan.apply("y", &m, &t).unwrap().0.scan_axes, vec![Axis::Y]);
        assert_eq!(Grid::Batch.apply("4", &m, &t).unwrap().1.batch_size, 4);
        let small = VimConfig { n: 32, ..m };
        assert!(Grid::Patch.apply("64", &small, &t).is_err());
    }
}
