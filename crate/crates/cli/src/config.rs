//! Run configuration, read from a TOML file.
//!
//! ```toml
//! [paths]                      # relative paths resolve against the config file
//! pairs = "data/pairs.tsv"
//! synonyms = "data/synonyms.csv"
//! candidates = "out/candidates.jsonl"
//! journal = "out/journal.jsonl"
//! reports = "out/reports"
//!
//! [overlap]                    # all optional; defaults shown
//! target_overlap = 5
//! min_votes = 3
//! threshold = 0.8
//!
//! [service]                    # all optional
//! host = "127.0.0.1"
//! port = 8080
//! ui_dir = "ui/dist"
//!
//! [[backends]]
//! id = "opus"
//! kind = "translate"           # or "paraphrase"
//! endpoint = "http://localhost:9000"   # or mock://identity|tagging|rotate
//! timeout_secs = 30
//! max_retries = 3
//! cache_dir = "cache"
//! bearer_token_env = "OPUS_TOKEN"      # token read from this variable
//!
//! [[pipelines]]
//! id = "m4"
//! translate_backend = "opus"
//! paraphrase_backend = "..."   # m1 and m3
//! num_beams = 5
//! num_return_sequences = 2
//! early_stopping = true
//! replacement = "deterministic" # m2: or "stochastic"
//! probability = 0.5            # m2 stochastic
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use malpara::annotation::OverlapPolicy;
use malpara::backends::{BackendConfig, BackendKind, BeamParams};
use malpara::corpus::{load_synonyms_csv, PipelineId};
use malpara::pipelines::PipelineSpec;
use malpara::synonym::ReplacementPolicy;
use serde::Deserialize;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    paths: RawPaths,
    #[serde(default)]
    overlap: RawOverlap,
    #[serde(default)]
    service: RawService,
    #[serde(default)]
    backends: Vec<RawBackend>,
    #[serde(default)]
    pipelines: Vec<RawPipeline>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    pairs: Option<PathBuf>,
    synonyms: Option<PathBuf>,
    candidates: Option<PathBuf>,
    journal: Option<PathBuf>,
    reports: Option<PathBuf>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOverlap {
    target_overlap: Option<u32>,
    min_votes: Option<u32>,
    threshold: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawService {
    host: Option<String>,
    port: Option<u16>,
    ui_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    id: String,
    kind: String,
    endpoint: String,
    timeout_secs: Option<u64>,
    max_retries: Option<u32>,
    cache_dir: Option<PathBuf>,
    bearer_token_env: Option<String>,
}

#[derive(Debug, Deserialize, Clone, Copy, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ReplacementMode {
    #[default]
    Deterministic,
    Stochastic,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPipeline {
    id: String,
    translate_backend: String,
    paraphrase_backend: Option<String>,
    num_beams: Option<u32>,
    num_return_sequences: Option<u32>,
    early_stopping: Option<bool>,
    #[serde(default)]
    replacement: ReplacementMode,
    probability: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub pairs: Option<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub journal: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct ServiceSettings {
    pub host: String,
    pub port: u16,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct PipelineEntry {
    pub translate_backend: String,
    pub paraphrase_backend: Option<String>,
    pub params: BeamParams,
    pub replacement: ReplacementMode,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub paths: Paths,
    pub policy: OverlapPolicy,
    pub service: ServiceSettings,
    pub backends: Vec<BackendConfig>,
    pub pipelines: BTreeMap<PipelineId, PipelineEntry>,
}

fn resolve(base: &Path, p: Option<PathBuf>) -> Option<PathBuf> {
    p.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| e.to_string())?;

        let paths = Paths {
            pairs: resolve(base, raw.paths.pairs),
            synonyms: resolve(base, raw.paths.synonyms),
            candidates: resolve(base, raw.paths.candidates),
            journal: resolve(base, raw.paths.journal),
            reports: resolve(base, raw.paths.reports),
        };
        let all_paths: Vec<&PathBuf> = [&paths.pairs, &paths.synonyms, &paths.candidates, &paths.journal, &paths.reports]
            .into_iter()
            .flatten()
            .collect();
        if all_paths.iter().collect::<BTreeSet<_>>().len() != all_paths.len() {
            return Err("[paths] entries must be distinct".into());
        }

        let defaults = OverlapPolicy::default();
        let policy = OverlapPolicy {
            target_overlap: raw.overlap.target_overlap.unwrap_or(defaults.target_overlap),
            min_votes: raw.overlap.min_votes.unwrap_or(defaults.min_votes),
            threshold: raw.overlap.threshold.unwrap_or(defaults.threshold),
        };
        policy.validate().map_err(|e| e.to_string())?;

        let service = ServiceSettings {
            host: raw.service.host.unwrap_or_else(|| "127.0.0.1".into()),
            port: raw.service.port.unwrap_or(8080),
            ui_dir: resolve(base, raw.service.ui_dir),
        };

        let mut backends = Vec::new();
        let mut kinds: BTreeMap<String, BackendKind> = BTreeMap::new();
        for b in raw.backends {
            let kind: BackendKind = b.kind.parse().map_err(|e: malpara::backends::BackendError| e.to_string())?;
            let mut cfg = BackendConfig::new(&b.id, kind, &b.endpoint).map_err(|e| e.to_string())?;
            if let Some(secs) = b.timeout_secs {
                cfg = cfg.with_timeout(Duration::from_secs(secs));
            }
            if let Some(n) = b.max_retries {
                cfg = cfg.with_max_retries(n);
            }
            if let Some(dir) = resolve(base, b.cache_dir) {
                cfg = cfg.with_cache_dir(dir);
            }
            if let Some(var) = b.bearer_token_env {
                let token = std::env::var(&var)
                    .map_err(|_| format!("backend {}: environment variable {var} is not set", b.id))?;
                cfg.bearer_token = Some(token);
            }
            if kinds.insert(b.id.clone(), kind).is_some() {
                return Err(format!("duplicate backend id {:?}", b.id));
            }
            backends.push(cfg);
        }

        let mut pipelines = BTreeMap::new();
        for p in raw.pipelines {
            let id: PipelineId = p.id.parse().map_err(|e: malpara::corpus::CorpusError| e.to_string())?;
            for backend in std::iter::once(&p.translate_backend).chain(&p.paraphrase_backend) {
                if !kinds.contains_key(backend) {
                    return Err(format!("pipeline {id}: unknown backend {backend:?}"));
                }
            }
            let defaults = BeamParams::default();
            let params = BeamParams::new(
                p.num_beams.unwrap_or(defaults.num_beams),
                p.num_return_sequences.unwrap_or(defaults.num_return_sequences),
                p.early_stopping.unwrap_or(defaults.early_stopping),
            )
            .map_err(|e| format!("pipeline {id}: {e}"))?;
            let entry = PipelineEntry {
                translate_backend: p.translate_backend,
                paraphrase_backend: p.paraphrase_backend,
                params,
                replacement: p.replacement,
                probability: p.probability.unwrap_or(ReplacementPolicy::DEFAULT_PROBABILITY),
            };
            if pipelines.insert(id, entry).is_some() {
                return Err(format!("duplicate pipeline {id}"));
            }
        }

        Ok(Self {
            paths,
            policy,
            service,
            backends,
            pipelines,
        })
    }

    /// Spec for pipeline `id`; m2 loads the synonym lexicon and takes `seed`
    /// for stochastic replacement.
    pub fn pipeline_spec(&self, id: PipelineId, seed: u64) -> Result<PipelineSpec, String> {
        let entry = self
            .pipelines
            .get(&id)
            .ok_or_else(|| format!("pipeline {id} is not configured"))?;
        let mut spec = PipelineSpec::new(id, entry.translate_backend.clone()).with_params(entry.params);
        spec.paraphrase_backend = entry.paraphrase_backend.clone();
        if id == PipelineId::M2 {
            let path = self
                .paths
                .synonyms
                .as_ref()
                .ok_or("pipeline m2 needs [paths] synonyms")?;
            let load = load_synonyms_csv(path).map_err(|e| e.to_string())?;
            if load.skipped > 0 {
                log::warn!("{}: skipped {} self-pairs", path.display(), load.skipped);
            }
            let policy = match entry.replacement {
                ReplacementMode::Deterministic => ReplacementPolicy::deterministic(),
                ReplacementMode::Stochastic => {
                    ReplacementPolicy::stochastic(entry.probability, seed).map_err(|e| e.to_string())?
                }
            };
            spec = spec.with_lexicon(Arc::new(load.lexicon), policy);
        }
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
[paths]
pairs = "pairs.tsv"
synonyms = "syn.csv"

[overlap]
threshold = 0.9

[[backends]]
id = "tr"
kind = "translate"
endpoint = "mock://identity"
max_retries = 0

[[backends]]
id = "pa"
kind = "paraphrase"
endpoint = "mock://rotate"

[[pipelines]]
id = "m1"
translate_backend = "tr"
paraphrase_backend = "pa"

[[pipelines]]
id = "m4"
translate_backend = "tr"
num_return_sequences = 2
"#;

    #[test]
    fn parses_sample() {
        let cfg = RunConfig::parse(SAMPLE, Path::new("/base")).unwrap();
        assert_eq!(cfg.paths.pairs.as_deref(), Some(Path::new("/base/pairs.tsv")));
        assert_eq!(cfg.policy.threshold, 0.9);
        assert_eq!(cfg.policy.min_votes, 3);
        assert_eq!(cfg.backends.len(), 2);
        assert_eq!(cfg.backends[0].max_retries, 0);
        assert_eq!(cfg.pipelines[&PipelineId::M4].params.num_return_sequences, 2);
        assert!(cfg.pipeline_spec(PipelineId::M1, 0).is_ok());
        assert!(cfg.pipeline_spec(PipelineId::M3, 0).is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let base = Path::new(".");
        let unknown_backend = SAMPLE.replace("paraphrase_backend = \"pa\"", "paraphrase_backend = \"zz\"");
        assert!(RunConfig::parse(&unknown_backend, base).unwrap_err().contains("zz"));
        let same_paths = SAMPLE.replace("syn.csv", "pairs.tsv");
        assert!(RunConfig::parse(&same_paths, base).is_err());
        assert!(RunConfig::parse("[paths]\nbogus = 1\n", base).is_err());
        assert!(RunConfig::parse("[overlap]\nthreshold = 0.5\n", base).is_err());
        let dup = format!("{SAMPLE}\n[[pipelines]]\nid = \"m1\"\ntranslate_backend = \"tr\"\nparaphrase_backend = \"pa\"\n");
        assert!(RunConfig::parse(&dup, base).unwrap_err().contains("duplicate"));
    }
}
