//! Retrieval quality (recall@k, MRR) and back-translation equivalence over
//! gold sets.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedder;
use crate::lang::{round_trip_score, translate, LangError, LanguageRegistry, LanguageTag, Translator};
use crate::providers::Providers;
use crate::qa::{retrieve_context, IndexedManual, QaError, RetrievalConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold line {line}: {reason}")]
    MalformedGold { line: usize, reason: String },
    #[error("gold set is empty")]
    EmptyGold,
    #[error("reading gold set {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("item {item}: {source}")]
    Item {
        item: usize,
        #[source]
        source: QaError,
    },
}

/// One gold question. Lines are JSON objects in this shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldQA {
    pub question: String,
    pub question_language: LanguageTag,
    pub expected_chunk_ordinals: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_answer_substring: Option<String>,
}

/// Parse JSON Lines; blank lines are skipped and line numbers are 1-based.
pub fn parse_gold(text: &str) -> Result<Vec<GoldQA>, EvalError> {
    let mut items = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| EvalError::MalformedGold { line: i + 1, reason };
        let item: GoldQA = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if item.question.trim().is_empty() {
            return Err(malformed("question is empty".into()));
        }
        if item.expected_chunk_ordinals.is_empty() {
            return Err(malformed("expected_chunk_ordinals is empty".into()));
        }
        items.push(item);
    }
    if items.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    Ok(items)
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldQA>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_gold(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalItem {
    pub index: usize,
    pub question: String,
    pub question_en: String,
    pub expected_chunk_ordinals: Vec<usize>,
    pub hit_ordinals: Vec<usize>,
    pub scores: Vec<f64>,
    /// Rank of the first expected chunk among the hits.
    pub first_relevant_rank: Option<usize>,
    pub reciprocal_rank: f64,
    /// Left empty for human reviewers.
    pub clarity: Option<u8>,
    pub relevance: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalReport {
    pub k: usize,
    pub min_score: f64,
    pub items: usize,
    pub recall_at_k: f64,
    pub mrr: f64,
    pub per_item: Vec<RetrievalItem>,
}

pub fn eval_retrieval(
    gold: &[GoldQA],
    manual: &IndexedManual,
    cfg: &RetrievalConfig,
    providers: &Providers,
    registry: &LanguageRegistry,
) -> Result<RetrievalReport, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let pivot = LanguageTag::pivot();
    let mut per_item = Vec::with_capacity(gold.len());
    for (index, item) in gold.iter().enumerate() {
        let fail = |source: QaError| EvalError::Item {
            item: index,
            source,
        };
        if !registry.contains(&item.question_language) {
            return Err(fail(
                LangError::UnknownLanguage(item.question_language.to_string()).into(),
            ));
        }
        let question_en = if item.question_language == pivot {
            item.question.clone()
        } else {
            let t = translate(
                &item.question,
                &item.question_language,
                &pivot,
                providers.translator.as_ref(),
            )
            .map_err(|e| fail(e.into()))?;
            providers.translator.strip_markers(&t.text).to_string()
        };
        let ctx = retrieve_context(manual, &question_en, cfg, providers.embedder.as_ref())
            .map_err(fail)?;
        let expected: HashSet<usize> = item.expected_chunk_ordinals.iter().copied().collect();
        let first_relevant_rank = ctx
            .hits
            .iter()
            .find(|h| expected.contains(&h.ordinal))
            .map(|h| h.rank);
        per_item.push(RetrievalItem {
            index,
            question: item.question.clone(),
            question_en,
            expected_chunk_ordinals: item.expected_chunk_ordinals.clone(),
            hit_ordinals: ctx.hits.iter().map(|h| h.ordinal).collect(),
            scores: ctx.hits.iter().map(|h| h.score).collect(),
            first_relevant_rank,
            reciprocal_rank: first_relevant_rank.map_or(0.0, |r| 1.0 / r as f64),
            clarity: None,
            relevance: None,
        });
    }
    let n = per_item.len() as f64;
    let recall_at_k = per_item.iter().filter(|r| r.first_relevant_rank.is_some()).count() as f64 / n;
    let mrr = per_item.iter().map(|r| r.reciprocal_rank).sum::<f64>() / n;
    Ok(RetrievalReport {
        k: cfg.k,
        min_score: cfg.min_score,
        items: per_item.len(),
        recall_at_k,
        mrr,
        per_item,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripItem {
    pub index: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTripReport {
    pub language: LanguageTag,
    pub threshold: f64,
    pub mean_score: f64,
    pub scores: Vec<f64>,
    pub below_threshold: Vec<RoundTripItem>,
}

/// Back-translate every sentence of `corpus` through `lang` and flag those
/// scoring under `threshold`.
pub fn eval_roundtrip(
    corpus: &[String],
    translator: &dyn Translator,
    lang: &LanguageTag,
    embedder: &dyn Embedder,
    threshold: f64,
) -> Result<RoundTripReport, EvalError> {
    if corpus.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let mut scores = Vec::with_capacity(corpus.len());
    let mut below_threshold = Vec::new();
    for (index, text) in corpus.iter().enumerate() {
        let score = round_trip_score(text, translator, lang, embedder).map_err(|e| EvalError::Item {
            item: index,
            source: e.into(),
        })?;
        if score < threshold {
            below_threshold.push(RoundTripItem {
                index,
                text: text.clone(),
                score,
            });
        }
        scores.push(score);
    }
    Ok(RoundTripReport {
        language: lang.clone(),
        threshold,
        mean_score: scores.iter().sum::<f64>() / scores.len() as f64,
        scores,
        below_threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub manual_id: String,
    pub retrieval: RetrievalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roundtrip: Option<RoundTripReport>,
}
