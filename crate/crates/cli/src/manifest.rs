//! Experiment manifest: the JSON file that fully determines a study.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use rbse_core::language_model::{BUNDLED_CORPUS, BUNDLED_PHRASES, DEFAULT_BACKSPACE_PROB, DEFAULT_ORDER};
use rbse_core::paradigms::Paradigm;
use rbse_core::simulator::SimulatedUser;
use rbse_core::{ArmSpec, NgramModel, PhrasePool, SimConfig, StudyConfig, Vocabulary};

use crate::calibrate::ModelFile;

fn default_vocabulary() -> String {
    Vocabulary::english().symbols().iter().collect()
}

fn default_order() -> usize {
    DEFAULT_ORDER
}

fn default_backspace_prob() -> f64 {
    DEFAULT_BACKSPACE_PROB
}

fn default_reps() -> usize {
    20
}

fn default_phrases() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default = "default_vocabulary")]
    pub vocabulary: String,
    /// LM training text; the bundled corpus when absent.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// `PREFIX|MISSING` phrase pool; the bundled pool when absent.
    #[serde(default)]
    pub phrases: Option<PathBuf>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_backspace_prob")]
    pub backspace_prob: f64,
    pub arms: Vec<Paradigm>,
    /// One Gaussian-evidence user per entry.
    #[serde(default)]
    pub auc_levels: Vec<f64>,
    /// Evidence-model files written by `calibrate`, one user each.
    #[serde(default)]
    pub evidence_models: Vec<PathBuf>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_phrases")]
    pub phrases_per_session: usize,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// A parsed manifest together with the directory its paths resolve from.
#[derive(Debug, Clone)]
pub struct LoadedManifest {
    pub manifest: Manifest,
    pub base_dir: PathBuf,
}

impl LoadedManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self { manifest, base_dir };
        loaded.check_paths()?;
        Ok(loaded)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    fn check_paths(&self) -> Result<()> {
        let m = &self.manifest;
        for path in m.corpus.iter().chain(&m.phrases).chain(&m.evidence_models) {
            let full = self.resolve(path);
            ensure!(full.is_file(), "manifest path {} does not exist", full.display());
        }
        Ok(())
    }

    /// Everything but the output location, which must not change results.
    pub fn provenance(&self) -> Manifest {
        Manifest { output_dir: None, ..self.manifest.clone() }
    }

    pub fn output_dir(&self) -> Option<PathBuf> {
        self.manifest.output_dir.as_ref().map(|p| self.resolve(p))
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.manifest;
        ensure!(!m.arms.is_empty(), "manifest defines no arms");
        ensure!(
            !m.auc_levels.is_empty() || !m.evidence_models.is_empty(),
            "manifest defines no simulated users (auc_levels or evidence_models)"
        );
        ensure!(m.reps >= 1, "reps must be at least 1");
        ensure!(m.phrases_per_session >= 1, "phrases_per_session must be at least 1");
        ensure!(m.order >= 1, "order must be at least 1");
        for (i, arm) in m.arms.iter().enumerate() {
            if m.arms[..i].iter().any(|a| a.label() == arm.label()) {
                bail!("arm {} appears more than once", arm.label());
            }
        }
        m.simulation.validate()?;
        Ok(())
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        Ok(Vocabulary::new(self.manifest.vocabulary.chars())?)
    }

    pub fn language_model(&self) -> Result<NgramModel> {
        let corpus = match &self.manifest.corpus {
            Some(p) => read(&self.resolve(p))?,
            None => BUNDLED_CORPUS.to_string(),
        };
        Ok(NgramModel::train(&self.vocabulary()?, &corpus, self.manifest.order)?)
    }

    pub fn phrase_pool(&self, lm: &NgramModel) -> Result<PhrasePool> {
        let text = match &self.manifest.phrases {
            Some(p) => read(&self.resolve(p))?,
            None => BUNDLED_PHRASES.to_string(),
        };
        Ok(PhrasePool::parse(lm, &text)?)
    }

    pub fn users(&self) -> Result<Vec<SimulatedUser>> {
        let mut users = Vec::new();
        for &auc in &self.manifest.auc_levels {
            users.push(SimulatedUser::from_auc(auc).with_context(|| format!("auc level {auc}"))?);
        }
        for path in &self.manifest.evidence_models {
            let file = ModelFile::read(&self.resolve(path))?;
            users.push(SimulatedUser { auc: file.auc, model: file.model });
        }
        Ok(users)
    }

    pub fn study_config(&self, workers: Option<usize>) -> Result<StudyConfig> {
        let m = &self.manifest;
        Ok(StudyConfig {
            arms: m.arms.iter().cloned().map(ArmSpec::new).collect(),
            users: self.users()?,
            reps: m.reps,
            phrases_per_session: m.phrases_per_session,
            backspace_prob: m.backspace_prob,
            sim: m.simulation.clone(),
            workers,
        })
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"arms":[{"paradigm":"scp"}],"auc_levels":[0.8]}"#;

    #[test]
    fn defaults_fill_in() {
        let m: Manifest = serde_json::from_str(MINIMAL).unwrap();
        assert_eq!(m.order, 6);
        assert_eq!(m.reps, 20);
        assert_eq!(m.phrases_per_session, 10);
        assert_eq!(m.simulation, SimConfig::default());
        assert_eq!(m.vocabulary.len(), 28);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{"arms":[{"paradigm":"scp"}],"auc_levels":[0.8],"rep":3}"#;
        assert!(serde_json::from_str::<Manifest>(bad).is_err());
        let bad_sim = r#"{"arms":[{"paradigm":"scp"}],"simulation":{"iti":100}}"#;
        assert!(serde_json::from_str::<Manifest>(bad_sim).is_err());
        let bad_arm = r#"{"arms":[{"paradigm":"arsvp","trials":14}]}"#;
        assert!(serde_json::from_str::<Manifest>(bad_arm).is_err());
    }

    #[test]
    fn missing_paths_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"arms":[{"paradigm":"scp"}],"auc_levels":[0.8],"corpus":"nope.txt"}"#).unwrap();
        let err = LoadedManifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("does not exist"));
    }

    #[test]
    fn duplicate_arms_rejected() {
        let m: Manifest =
            serde_json::from_str(r#"{"arms":[{"paradigm":"scp"},{"paradigm":"scp"}],"auc_levels":[0.8]}"#).unwrap();
        let loaded = LoadedManifest { manifest: m, base_dir: PathBuf::new() };
        assert!(loaded.validate().is_err());
    }
}
