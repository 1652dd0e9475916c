use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::BenchError;
use crate::layout::{Orientation, PadChoice};
use crate::model::{HeteroSetup, ModelSetup};
use crate::physics::{GridSpec, KernelVariant, DEFAULT_MODEL_CHUNK_SIZE};
use crate::scheduler::{ExecMode, ScheduleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutConfig {
    pub orientation: Orientation,
    pub pad: PadChoice,
}

/// One experiment, loadable from a TOML file. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Experiment id written to every record.
    pub experiment: String,
    pub timesteps: usize,
    pub repetitions: usize,
    pub mode: ExecMode,
    pub kernel_variant: KernelVariant,
    pub model_chunk_size: usize,
    /// Simulated cost of one dispatch.
    pub grab_overhead_s: f64,
    pub dynamics: bool,
    pub grid: GridSpec,
    pub schedule: ScheduleSpec,
    pub layout: LayoutConfig,
    pub hetero: Option<HeteroSetup>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelSetup::default();
        Self {
            experiment: "run".into(),
            timesteps: 1,
            repetitions: 5,
            mode: ExecMode::Measured,
            kernel_variant: KernelVariant::Naive,
            model_chunk_size: DEFAULT_MODEL_CHUNK_SIZE,
            grab_overhead_s: model.grab_overhead_s,
            dynamics: true,
            grid: GridSpec::default(),
            schedule: ScheduleSpec::default(),
            layout: LayoutConfig::default(),
            hetero: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            BenchError::Config(msg) => BenchError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn config_hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        hex::encode(digest)[..16].to_owned()
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.timesteps == 0 {
            return bad("timesteps must be >= 1".into());
        }
        if self.repetitions == 0 {
            return bad("repetitions must be >= 1".into());
        }
        if self.model_chunk_size == 0 {
            return bad("model_chunk_size must be >= 1".into());
        }
        if !(self.grab_overhead_s >= 0.0) {
            return bad(format!("grab_overhead_s {} must be >= 0", self.grab_overhead_s));
        }
        self.grid
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        self.schedule
            .validate()
            .map_err(|e| BenchError::Config(e.to_string()))?;
        if let Some(h) = &self.hetero {
            h.host.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            h.device.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            h.transfer.validate().map_err(|e| BenchError::Config(e.to_string()))?;
            if let Some(f) = h.f_device {
                if !(0.0..=1.0).contains(&f) {
                    return bad(format!("hetero.f_device {f} outside [0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn model_setup(&self) -> ModelSetup {
        ModelSetup {
            grid: self.grid.clone(),
            model_chunk_size: self.model_chunk_size,
            variant: self.kernel_variant,
            schedule: self.schedule,
            hetero: self.hetero,
            orientation: self.layout.orientation,
            pad: self.layout.pad,
            mode: self.mode,
            grab_overhead_s: self.grab_overhead_s,
            dynamics: self.dynamics,
        }
    }
}
