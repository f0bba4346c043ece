//! Layered settings: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mmda_core::hitgen::HitConfig;
use mmda_core::qc::{HeuristicConfig, QcConfig};
use mmda_core::seeds::derive_seed;
use mmda_core::sim::PersonaParams;
use mmda_core::tts::{ProviderKind, VoiceConfig, DEFAULT_CLOUD_ENDPOINT};

use crate::error::{CliResult, Failure};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub testset: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub target: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HitgenSection {
    pub qc_ratio: Option<f64>,
    pub hit_size: Option<usize>,
    pub min_qc_gap: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtsSection {
    pub provider: Option<String>,
    pub voice: Option<String>,
    pub speaking_rate: Option<f64>,
    pub language: Option<String>,
    pub endpoint: Option<String>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcSection {
    pub alpha: Option<f64>,
    pub min_item_ms: Option<u64>,
    pub min_distinct: Option<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: Option<String>,
    pub port: Option<u16>,
    pub lease_ms: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub seed: Option<u64>,
    pub noise_sd: Option<f64>,
    pub leniency_sd: Option<f64>,
    pub quality_center: Option<f64>,
    pub quality_spacing: Option<f64>,
    pub hits_per_worker: Option<usize>,
}

/// The config file as written; every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run: RunSection,
    pub paths: PathsSection,
    pub sampling: SamplingSection,
    pub hitgen: HitgenSection,
    pub tts: TtsSection,
    pub qc: QcSection,
    pub service: ServiceSection,
    pub simulation: SimulationSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub target: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hitgen {
    pub qc_ratio: f64,
    pub hit_size: usize,
    pub min_qc_gap: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tts {
    pub provider: ProviderKind,
    pub voice: String,
    pub speaking_rate: f64,
    pub language: String,
    pub endpoint: String,
    pub parallelism: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qc {
    pub alpha: f64,
    pub min_item_ms: u64,
    pub min_distinct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Service {
    pub bind: String,
    pub port: u16,
    pub lease_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub seed: u64,
    pub noise_sd: f64,
    pub leniency_sd: f64,
    pub quality_center: f64,
    pub quality_spacing: f64,
    pub hits_per_worker: usize,
}

/// Effective settings; recorded verbatim in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub root_seed: u64,
    pub workdir: PathBuf,
    pub testset: Option<PathBuf>,
    pub outputs: Option<PathBuf>,
    pub sampling: Sampling,
    pub hitgen: Hitgen,
    pub tts: Tts,
    pub qc: Qc,
    pub service: Service,
    pub simulation: Simulation,
}

impl Settings {
    pub fn resolve(file: FileConfig) -> CliResult<Self> {
        let root = file.run.seed.unwrap_or(0);
        let hit_defaults = HitConfig::default();
        let voice = VoiceConfig::default();
        let heur = HeuristicConfig::default();
        let persona = PersonaParams::default();
        let provider = match file.tts.provider.as_deref() {
            Some(p) => p.parse::<ProviderKind>().map_err(Failure::Validation)?,
            None => voice.provider,
        };
        let s = Settings {
            root_seed: root,
            workdir: file.paths.workdir.unwrap_or_else(|| PathBuf::from("mmda-work")),
            testset: file.paths.testset,
            outputs: file.paths.outputs,
            sampling: Sampling {
                target: file.sampling.target.unwrap_or(450),
                seed: file.sampling.seed.unwrap_or_else(|| derive_seed(root, "sampling")),
            },
            hitgen: Hitgen {
                qc_ratio: file.hitgen.qc_ratio.unwrap_or(hit_defaults.qc_ratio),
                hit_size: file.hitgen.hit_size.unwrap_or(hit_defaults.hit_size),
                min_qc_gap: file.hitgen.min_qc_gap.unwrap_or(hit_defaults.min_qc_gap),
                seed: file.hitgen.seed.unwrap_or_else(|| derive_seed(root, "hitgen")),
            },
            tts: Tts {
                provider,
                voice: file.tts.voice.unwrap_or(voice.voice_name),
                speaking_rate: file.tts.speaking_rate.unwrap_or(voice.speaking_rate),
                language: file.tts.language.unwrap_or(voice.language_tag),
                endpoint: file.tts.endpoint.unwrap_or_else(|| DEFAULT_CLOUD_ENDPOINT.to_string()),
                parallelism: file.tts.parallelism.unwrap_or(4),
            },
            qc: Qc {
                alpha: file.qc.alpha.unwrap_or(0.05),
                min_item_ms: file.qc.min_item_ms.unwrap_or(heur.min_item_ms),
                min_distinct: file.qc.min_distinct.unwrap_or(heur.min_distinct),
            },
            service: Service {
                bind: file.service.bind.unwrap_or_else(|| "127.0.0.1".into()),
                port: file.service.port.unwrap_or(8080),
                lease_ms: file.service.lease_ms.unwrap_or(mmda_core::campaign::DEFAULT_LEASE_MS),
            },
            simulation: Simulation {
                seed: file.simulation.seed.unwrap_or_else(|| derive_seed(root, "simulation")),
                noise_sd: file.simulation.noise_sd.unwrap_or(persona.noise_sd),
                leniency_sd: file.simulation.leniency_sd.unwrap_or(persona.leniency_sd),
                quality_center: file.simulation.quality_center.unwrap_or(60.0),
                quality_spacing: file.simulation.quality_spacing.unwrap_or(2.0),
                hits_per_worker: file.simulation.hits_per_worker.unwrap_or(1),
            },
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> CliResult<()> {
        if !(self.qc.alpha > 0.0 && self.qc.alpha < 1.0) {
            return Err(Failure::validation(format!("qc.alpha {} not in (0, 1)", self.qc.alpha)));
        }
        if self.sampling.target == 0 {
            return Err(Failure::validation("sampling.target must be positive"));
        }
        if self.simulation.noise_sd < 0.0 || self.simulation.leniency_sd < 0.0 {
            return Err(Failure::validation("simulation standard deviations must be non-negative"));
        }
        self.hit_config().validate()?;
        Ok(())
    }

    pub fn hit_config(&self) -> HitConfig {
        HitConfig { qc_ratio: self.hitgen.qc_ratio, hit_size: self.hitgen.hit_size, min_qc_gap: self.hitgen.min_qc_gap }
    }

    pub fn qc_config(&self) -> QcConfig {
        QcConfig {
            alpha: self.qc.alpha,
            heuristics: HeuristicConfig { min_item_ms: self.qc.min_item_ms, min_distinct: self.qc.min_distinct },
        }
    }

    pub fn voice(&self) -> VoiceConfig {
        VoiceConfig {
            provider: self.tts.provider,
            voice_name: self.tts.voice.clone(),
            speaking_rate: self.tts.speaking_rate,
            language_tag: self.tts.language.clone(),
        }
    }

    pub fn persona_params(&self) -> PersonaParams {
        PersonaParams { noise_sd: self.simulation.noise_sd, leniency_sd: self.simulation.leniency_sd, ..PersonaParams::default() }
    }
}
