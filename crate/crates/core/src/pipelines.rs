//! The four English-to-Malayalam paraphrase pipelines and the batch runner.
//!
//! | id | composition |
//! |---|---|
//! | m1 | translate en→ml, then paraphrase the Malayalam text |
//! | m2 | synonym-substitute the English text, translate both sides |
//! | m3 | neural English rewrite (one sequence), translate both sides |
//! | m4 | one beam-search translation; the top two distinct beams form the pair |

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backends::{Backend, BackendError, BackendKind, BackendRegistry, BeamParams};
use crate::corpus::{CandidateRecord, Lang, PipelineId, SentencePair, SynonymLexicon};
use crate::synonym::{replace_synonyms, ReplacementPolicy};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline spec: {0}")]
    Spec(String),
    #[error("{pipeline} {pair_id}: {source}")]
    Backend {
        pipeline: PipelineId,
        pair_id: String,
        #[source]
        source: BackendError,
    },
    #[error("{pipeline} {pair_id}: {message}")]
    Record {
        pipeline: PipelineId,
        pair_id: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub id: PipelineId,
    pub translate_backend: String,
    /// Required by m1 and m3.
    pub paraphrase_backend: Option<String>,
    /// Required by m2.
    pub lexicon: Option<Arc<SynonymLexicon>>,
    /// Required by m2.
    pub policy: Option<ReplacementPolicy>,
    pub params: BeamParams,
}

impl PipelineSpec {
    pub fn new(id: PipelineId, translate_backend: impl Into<String>) -> Self {
        Self {
            id,
            translate_backend: translate_backend.into(),
            paraphrase_backend: None,
            lexicon: None,
            policy: None,
            params: BeamParams::default(),
        }
    }

    pub fn with_paraphrase_backend(mut self, id: impl Into<String>) -> Self {
        self.paraphrase_backend = Some(id.into());
        self
    }

    pub fn with_lexicon(mut self, lexicon: Arc<SynonymLexicon>, policy: ReplacementPolicy) -> Self {
        self.lexicon = Some(lexicon);
        self.policy = Some(policy);
        self
    }

    pub fn with_params(mut self, params: BeamParams) -> Self {
        self.params = params;
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let spec_err = |m: String| PipelineError::Spec(format!("{}: {m}", self.id));
        self.params.validate().map_err(|e| spec_err(e.to_string()))?;
        match self.id {
            PipelineId::M1 | PipelineId::M3 if self.paraphrase_backend.is_none() => {
                Err(spec_err("paraphrase_backend is required".into()))
            }
            PipelineId::M2 if self.lexicon.is_none() || self.policy.is_none() => {
                Err(spec_err("lexicon and replacement policy are required".into()))
            }
            PipelineId::M2 => self
                .policy
                .expect("checked above")
                .validate()
                .map_err(|e| spec_err(e.to_string())),
            PipelineId::M4 if self.params.num_return_sequences < 2 => Err(spec_err(format!(
                "num_return_sequences must be at least 2, got {}",
                self.params.num_return_sequences
            ))),
            _ => Ok(()),
        }
    }
}

/// A spec bound to live backends.
#[derive(Debug, Clone)]
pub struct Pipeline {
    spec: PipelineSpec,
    translate: Arc<Backend>,
    paraphrase: Option<Arc<Backend>>,
}

impl Pipeline {
    pub fn new(spec: PipelineSpec, registry: &BackendRegistry) -> Result<Self, PipelineError> {
        spec.validate()?;
        let resolve = |id: &str, kind: BackendKind| -> Result<Arc<Backend>, PipelineError> {
            let backend = registry
                .get(id)
                .map_err(|e| PipelineError::Spec(format!("{}: {e}", spec.id)))?;
            if backend.kind() != kind {
                return Err(PipelineError::Spec(format!(
                    "{}: backend {id:?} is {}, expected {kind}",
                    spec.id,
                    backend.kind()
                )));
            }
            Ok(backend)
        };
        let translate = resolve(&spec.translate_backend, BackendKind::Translate)?;
        let paraphrase = match (&spec.paraphrase_backend, spec.id) {
            (Some(id), PipelineId::M1 | PipelineId::M3) => Some(resolve(id, BackendKind::Paraphrase)?),
            _ => None,
        };
        Ok(Self {
            spec,
            translate,
            paraphrase,
        })
    }

    pub fn id(&self) -> PipelineId {
        self.spec.id
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    /// Runs the pipeline on the English source side of `pair`.
    pub fn run(&self, pair: &SentencePair) -> Result<CandidateRecord, PipelineError> {
        let src_en = pair.source.as_str();
        match self.spec.id {
            PipelineId::M1 => self.run_m1(&pair.id, src_en),
            PipelineId::M2 => self.run_m2(&pair.id, src_en),
            PipelineId::M3 => self.run_m3(&pair.id, src_en),
            PipelineId::M4 => self.run_m4(&pair.id, src_en),
        }
    }

    fn backend_err(&self, pair_id: &str) -> impl Fn(BackendError) -> PipelineError + '_ {
        let pair_id = pair_id.to_string();
        move |source| PipelineError::Backend {
            pipeline: self.spec.id,
            pair_id: pair_id.clone(),
            source,
        }
    }

    fn translate(&self, pair_id: &str, text: &str) -> Result<String, PipelineError> {
        self.translate
            .translate(text, Lang::En, Lang::Ml)
            .map_err(self.backend_err(pair_id))
    }

    fn paraphrase_first(&self, pair_id: &str, text: &str, lang: Lang, params: BeamParams) -> Result<String, PipelineError> {
        let backend = self.paraphrase.as_ref().expect("validated spec has a paraphrase backend");
        let mut candidates = backend.paraphrase(text, lang, params).map_err(self.backend_err(pair_id))?;
        Ok(candidates.swap_remove(0))
    }

    fn record(
        &self,
        pair_id: &str,
        src_en: &str,
        source_ml: String,
        paraphrase_ml: String,
        params: Option<BeamParams>,
        unchanged: bool,
    ) -> Result<CandidateRecord, PipelineError> {
        let id = format!("{}-{pair_id}", self.spec.id);
        let pair = SentencePair::new(id, source_ml, paraphrase_ml, Lang::Ml, Lang::Ml).map_err(|e| {
            PipelineError::Record {
                pipeline: self.spec.id,
                pair_id: pair_id.to_string(),
                message: e.to_string(),
            }
        })?;
        Ok(CandidateRecord {
            pair,
            source_en: src_en.to_string(),
            pipeline: self.spec.id,
            params,
            scores: None,
            unchanged,
        })
    }

    /// Translate, then paraphrase the translation; the pair is
    /// (translation, first paraphrase).
    pub fn run_m1(&self, pair_id: &str, src_en: &str) -> Result<CandidateRecord, PipelineError> {
        let translation = self.translate(pair_id, src_en)?;
        let paraphrase = self.paraphrase_first(pair_id, &translation, Lang::Ml, self.spec.params)?;
        let unchanged = paraphrase == translation;
        self.record(pair_id, src_en, translation, paraphrase, Some(self.spec.params), unchanged)
    }

    /// Synonym substitution on the English side, then translation of both
    /// the original and the substituted sentence.
    pub fn run_m2(&self, pair_id: &str, src_en: &str) -> Result<CandidateRecord, PipelineError> {
        let lexicon = self.spec.lexicon.as_ref().expect("validated spec has a lexicon");
        let policy = self.spec.policy.expect("validated spec has a policy").salted(pair_id);
        let replaced = replace_synonyms(src_en, lexicon, &policy).map_err(|e| PipelineError::Record {
            pipeline: self.spec.id,
            pair_id: pair_id.to_string(),
            message: e.to_string(),
        })?;
        let source_ml = self.translate(pair_id, src_en)?;
        let paraphrase_ml = self.translate(pair_id, &replaced.paraphrase)?;
        let unchanged = replaced.unchanged || source_ml == paraphrase_ml;
        self.record(pair_id, src_en, source_ml, paraphrase_ml, None, unchanged)
    }

    /// English rewrite with a single returned sequence, then translation of
    /// both sides.
    pub fn run_m3(&self, pair_id: &str, src_en: &str) -> Result<CandidateRecord, PipelineError> {
        let params = BeamParams {
            num_return_sequences: 1,
            ..self.spec.params
        };
        let rewrite = self.paraphrase_first(pair_id, src_en, Lang::En, params)?;
        let source_ml = self.translate(pair_id, src_en)?;
        let paraphrase_ml = self.translate(pair_id, &rewrite)?;
        let unchanged = rewrite == src_en || source_ml == paraphrase_ml;
        self.record(pair_id, src_en, source_ml, paraphrase_ml, Some(params), unchanged)
    }

    /// One beam-search translation; the pair is (beam 1, beam 2). With a
    /// single distinct beam the candidate repeats the source.
    pub fn run_m4(&self, pair_id: &str, src_en: &str) -> Result<CandidateRecord, PipelineError> {
        let params = self.spec.params;
        let beams = self
            .translate
            .translate_beams(src_en, Lang::En, Lang::Ml, params)
            .map_err(self.backend_err(pair_id))?;
        let mut beams = beams.into_iter();
        let first = beams.next().expect("backend guarantees at least one candidate");
        let (second, unchanged) = match beams.next() {
            Some(second) => (second, false),
            None => (first.clone(), true),
        };
        self.record(pair_id, src_en, first, second, Some(params), unchanged)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchStatus {
    /// Every record succeeded (or the batch was empty).
    Complete,
    /// Some records failed.
    Partial,
    /// Every record failed.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub pair_id: String,
    pub outcome: Result<CandidateRecord, PipelineError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub items: Vec<BatchItem>,
}

impl BatchResult {
    pub fn records(&self) -> Vec<CandidateRecord> {
        self.items
            .iter()
            .filter_map(|item| item.outcome.as_ref().ok().cloned())
            .collect()
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &PipelineError)> {
        self.items
            .iter()
            .filter_map(|item| item.outcome.as_ref().err().map(|e| (item.pair_id.as_str(), e)))
    }

    pub fn status(&self) -> BatchStatus {
        let failed = self.failures().count();
        if failed == 0 {
            BatchStatus::Complete
        } else if failed == self.items.len() {
            BatchStatus::Failed
        } else {
            BatchStatus::Partial
        }
    }
}

/// Seeded uniform sample of `k` indices out of `n`, returned in ascending order.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Runs `pipeline` over `pairs` (optionally a seeded sample of them) on up to
/// `parallel` worker threads. Output order follows input order and does not
/// depend on scheduling; per-record failures are captured, not propagated.
pub fn run_batch(
    pairs: &[SentencePair],
    pipeline: &Pipeline,
    sample: Option<usize>,
    seed: u64,
    parallel: usize,
) -> Result<BatchResult, PipelineError> {
    let selected: Vec<&SentencePair> = match sample {
        Some(k) if k > pairs.len() => {
            return Err(PipelineError::Spec(format!(
                "sample size {k} exceeds the {} available pairs",
                pairs.len()
            )))
        }
        Some(k) => sample_indices(pairs.len(), k, seed)
            .into_iter()
            .map(|i| &pairs[i])
            .collect(),
        None => pairs.iter().collect(),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.max(1))
        .build()
        .map_err(|e| PipelineError::Spec(format!("cannot start worker pool: {e}")))?;
    let items = pool.install(|| {
        selected
            .par_iter()
            .map(|pair| BatchItem {
                pair_id: pair.id.clone(),
                outcome: pipeline.run(pair),
            })
            .collect()
    });
    Ok(BatchResult { items })
}
