//! Run settings: defaults, then a TOML file, then command-line flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dclose::metrics::DEFAULT_STEPS;
use dclose::{ExplainConfig, FusionOrder, GridMaskConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Everything that shapes the numbers a run produces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub explain: ExplainConfig,
    pub drise: GridMaskConfig,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Steps of the deletion and insertion curves.
    pub steps: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { steps: DEFAULT_STEPS }
    }
}

impl Settings {
    pub fn from_toml_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Parse(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.explain.validate().map_err(|e| CliError::input(format!("explain settings: {e}")))?;
        self.drise.validate().map_err(|e| CliError::input(format!("drise settings: {e}")))?;
        if self.metrics.steps < 2 {
            return Err(CliError::input("metrics.steps must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderArg {
    FineToCoarse,
    CoarseToFine,
}

impl From<OrderArg> for FusionOrder {
    fn from(o: OrderArg) -> Self {
        match o {
            OrderArg::FineToCoarse => FusionOrder::FineToCoarse,
            OrderArg::CoarseToFine => FusionOrder::CoarseToFine,
        }
    }
}

/// Engine flags shared by the commands that compute saliency.
#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// TOML file with [explain], [drise] and [metrics] tables; flags win over it.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Requested superpixels per level, e.g. 150,300,600,1200,2400.
    #[arg(long, value_delimiter = ',', value_name = "N,N,...")]
    pub levels: Option<Vec<usize>>,
    /// Masks per segmentation level.
    #[arg(long)]
    pub masks: Option<usize>,
    /// Probability that a segment or grid cell is kept.
    #[arg(long)]
    pub probability: Option<f64>,
    #[arg(long)]
    pub resize_ratio: Option<f64>,
    #[arg(long)]
    pub compactness: Option<f64>,
    /// Seed for both mask generators.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub fusion_order: Option<OrderArg>,
    /// Skip the density normalization.
    #[arg(long)]
    pub no_density: bool,
    /// Average the levels instead of fusing them.
    #[arg(long)]
    pub no_fusion: bool,
    /// Grid resolution of the baseline, as WxH.
    #[arg(long, value_name = "WxH", value_parser = parse_grid)]
    pub grid: Option<(usize, usize)>,
    /// Masks drawn by the baseline.
    #[arg(long)]
    pub drise_masks: Option<usize>,
    /// Steps of the deletion and insertion curves.
    #[arg(long)]
    pub steps: Option<usize>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
    let w = w.trim().parse().map_err(|e| format!("grid width: {e}"))?;
    let h = h.trim().parse().map_err(|e| format!("grid height: {e}"))?;
    Ok((w, h))
}

impl EngineArgs {
    /// Resolves the effective settings. `jobs` goes to the per-object engine.
    pub fn resolve(&self, jobs: Option<usize>) -> CliResult<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::from_toml_file(path)?,
            None => Settings::default(),
        };
        let e = &mut s.explain;
        if let Some(v) = &self.levels {
            e.segments_per_level = v.clone();
        }
        if let Some(v) = self.masks {
            e.masks_per_level = v;
        }
        if let Some(v) = self.probability {
            e.fill_probability = v;
            s.drise.fill_probability = v;
        }
        if let Some(v) = self.resize_ratio {
            e.resize_ratio = v;
        }
        if let Some(v) = self.compactness {
            e.compactness = v;
        }
        if let Some(v) = self.seed {
            e.master_seed = v;
            s.drise.seed = v;
        }
        if let Some(v) = self.batch_size {
            e.batch_size = v;
            s.drise.batch_size = v;
        }
        if let Some(v) = jobs {
            e.jobs = v;
            s.drise.jobs = v;
        }
        if let Some(v) = self.fusion_order {
            e.fusion_order = v.into();
        }
        if self.no_density {
            e.ablation.use_density = false;
        }
        if self.no_fusion {
            e.ablation.use_fusion = false;
        }
        if let Some((w, h)) = self.grid {
            s.drise.grid_w = w;
            s.drise.grid_h = h;
        }
        if let Some(v) = self.drise_masks {
            s.drise.masks = v;
        }
        if let Some(v) = self.steps {
            s.metrics.steps = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn flags_override_file_override_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[explain]\nmasks_per_level = 40\nmaster_seed = 5\n[drise]\nmasks = 70\n[metrics]\nsteps = 20").unwrap();
        let args = EngineArgs { config: Some(f.path().into()), seed: Some(9), ..Default::default() };
        let s = args.resolve(Some(1)).unwrap();
        assert_eq!(s.explain.masks_per_level, 40);
        assert_eq!((s.explain.master_seed, s.drise.seed), (9, 9));
        assert_eq!((s.drise.masks, s.metrics.steps, s.explain.jobs), (70, 20, 1));
        assert_eq!(s.explain.segments_per_level, ExplainConfig::default().segments_per_level);
    }

    #[test]
    fn bad_config_is_a_parse_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[explain]\nmasks = 3").unwrap();
        let err = EngineArgs { config: Some(f.path().into()), ..Default::default() }.resolve(None).unwrap_err();
        assert_eq!(err.exit_code(), 7);
        let err = EngineArgs { masks: Some(0), ..Default::default() }.resolve(None).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("16x8"), Ok((16, 8)));
        assert!(parse_grid("16").is_err());
    }
}
