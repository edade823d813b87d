//! Malayalam paraphrase generation and evaluation workbench.
//!
//! * [`corpus`]: sentence pairs, synonym lexicons, candidate records and their file formats
//! * [`tokenize`]: NFC-normalizing tokenizer for English and Malayalam
//! * [`metrics`]: sentence-level BLEU, METEOR and cosine similarity
//! * [`synonym`]: lexicon-driven English paraphrasing
//! * [`backends`]: translation/paraphrase service clients, mocks, response cache
//! * [`pipelines`]: the four generation pipelines and batch runner
//! * [`annotation`]: judgment journal, task assignment, aggregation, HTTP service
//! * [`report`]: per-pipeline summaries and metric/human correlations

pub mod annotation;
pub mod backends;
pub mod corpus;
pub mod metrics;
pub mod pipelines;
pub mod report;
pub mod synonym;
pub mod tokenize;
