//! Evidence-model files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use rbse_core::evidence::{
    calibrate_synthetic, gaussian_evidence_model, separation_for_auc, sigma_point_estimates, CalibrationParams,
    CvSelection,
};
use rbse_core::{EvidenceModel, SigmaEstimates};

use crate::output::json_hash;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    Gaussian,
    Synthetic,
}

/// Parameters that determine a calibration run; hashed for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum CalibrationRequest {
    Gaussian { auc: f64 },
    Synthetic(CalibrationParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub manifest_hash: String,
    pub seed: u64,
    pub source: ModelSource,
    /// Analytic AUC for the Gaussian model, out-of-fold score AUC otherwise.
    pub auc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<CvSelection>,
    pub sigma: SigmaEstimates,
    pub model: EvidenceModel,
}

impl ModelFile {
    pub fn build(request: &CalibrationRequest) -> Result<Self> {
        let manifest_hash = json_hash(request)?;
        match request {
            CalibrationRequest::Gaussian { auc } => {
                let model = gaussian_evidence_model(*auc)?;
                Ok(Self {
                    manifest_hash,
                    seed: 0,
                    source: ModelSource::Gaussian,
                    auc: *auc,
                    separation: Some(separation_for_auc(*auc)),
                    selection: None,
                    sigma: sigma_point_estimates(&model),
                    model,
                })
            }
            CalibrationRequest::Synthetic(params) => {
                let outcome = calibrate_synthetic(params)?;
                Ok(Self {
                    manifest_hash,
                    seed: params.seed,
                    source: ModelSource::Synthetic,
                    auc: outcome.score_auc,
                    separation: None,
                    selection: Some(outcome.selection),
                    sigma: outcome.sigma,
                    model: outcome.model,
                })
            }
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing evidence model {}", path.display()))?;
        EvidenceModel::new(file.model.target.clone(), file.model.nontarget.clone())
            .with_context(|| format!("invalid evidence model in {}", path.display()))?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}
