//! Answer pipeline: detect → translate in → retrieve → prompt → generate →
//! guardrail → translate out, with citations and per-stage latencies.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{words, EmbedError, Embedder};
use crate::index::{IndexError, RetrievalHit, VectorIndex};
use crate::ingest::Chunk;
use crate::lang::{detect_language, translate, LangError, LanguageRegistry, LanguageTag};
use crate::providers::{http_agent, probe_endpoint, ProbeStatus, ProviderError, Providers};

pub const DEFAULT_K: usize = 4;
/// Similarity floor for the hashing embedder at its default dimension.
pub const DEFAULT_MIN_SCORE: f64 = 0.08;
pub const DEFAULT_CONTEXT_TOKEN_BUDGET: usize = 1200;

pub const PROMPT_TEMPLATE_VERSION: &str = "v1";
const PROMPT_TEMPLATE: &str = include_str!("../data/prompt_template_v1.txt");
pub const DENY_LIST_VERSION: &str = "v1";
const DEFAULT_DENY_LIST: &str = include_str!("../data/deny_list_v1.txt");
const BUILTIN_MESSAGES: &[(&str, &str)] = &[
    ("en", include_str!("../data/messages/en.json")),
    ("pcm", include_str!("../data/messages/pcm.json")),
];

pub const MSG_REFUSE_NO_CONTEXT: &str = "refuse_no_context";
pub const MSG_REFUSE_UNSAFE: &str = "refuse_unsafe";
pub const MSG_SERVICE_UNAVAILABLE: &str = "service_unavailable";

/// Stage names, in pipeline order.
pub const STAGES: [&str; 6] = [
    "detect",
    "translate_in",
    "retrieve",
    "generate",
    "guardrail",
    "translate_out",
];

#[derive(Debug, Error)]
pub enum QaError {
    #[error("question is empty")]
    EmptyText,
    #[error("no context excerpts to build a prompt from")]
    NoContext,
    #[error("manual {0} has no index")]
    ManualNotIndexed(String),
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("message catalog: {0}")]
    Catalog(String),
    #[error("deny list: {0}")]
    DenyList(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Lang(#[from] LangError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub k: usize,
    pub min_score: f64,
    pub context_token_budget: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            min_score: DEFAULT_MIN_SCORE,
            context_token_budget: DEFAULT_CONTEXT_TOKEN_BUDGET,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self, chunk_size_tokens: usize) -> Result<(), QaError> {
        if self.k == 0 {
            return Err(QaError::InvalidConfig("k must be at least 1".into()));
        }
        if !(-1.0..=1.0).contains(&self.min_score) {
            return Err(QaError::InvalidConfig(format!(
                "min_score {} outside [-1, 1]",
                self.min_score
            )));
        }
        if self.context_token_budget < chunk_size_tokens {
            return Err(QaError::InvalidConfig(format!(
                "context budget {} is smaller than the chunk size {chunk_size_tokens}",
                self.context_token_budget
            )));
        }
        Ok(())
    }
}

/// A manual's chunks and their index, ready for retrieval.
#[derive(Debug, Clone)]
pub struct IndexedManual {
    pub chunks: Vec<Chunk>,
    pub index: VectorIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedContext {
    pub hits: Vec<RetrievalHit>,
    /// Hit chunks in rank order, trimmed to the token budget.
    pub chunks: Vec<Chunk>,
    /// Best cosine over the whole manual, whether or not it cleared the floor.
    pub max_score: Option<f64>,
}

pub fn retrieve_context(
    manual: &IndexedManual,
    question_en: &str,
    cfg: &RetrievalConfig,
    embedder: &dyn Embedder,
) -> Result<RetrievedContext, QaError> {
    if question_en.trim().is_empty() {
        return Err(QaError::EmptyText);
    }
    let query = match embedder.embed(question_en) {
        Ok(v) => v,
        // nothing to match on, e.g. "???"
        Err(EmbedError::EmptyText | EmbedError::AllFeaturesCancelled) => {
            return Ok(RetrievedContext {
                hits: Vec::new(),
                chunks: Vec::new(),
                max_score: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    // Top-k without the floor, then filter: the hits above the floor are a
    // prefix, so this matches search(k, min_score) and also yields the top score.
    let top = manual.index.search(&query, cfg.k, -1.0)?;
    let max_score = top.first().map(|h| h.score);
    let hits: Vec<RetrievalHit> = top.into_iter().filter(|h| h.score >= cfg.min_score).collect();
    let mut chunks = Vec::new();
    let mut used = 0usize;
    for hit in &hits {
        let chunk = manual
            .chunks
            .get(hit.ordinal)
            .ok_or_else(|| QaError::ManualNotIndexed(manual.index.manual_id.clone()))?;
        if !chunks.is_empty() && used + chunk.token_count > cfg.context_token_budget {
            break;
        }
        used += chunk.token_count;
        chunks.push(chunk.clone());
    }
    Ok(RetrievedContext {
        hits,
        chunks,
        max_score,
    })
}

/// A rendered prompt plus the parts it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub text: String,
    pub question: String,
    /// Excerpt texts in rank order; `[1]` is `excerpts[0]`.
    pub excerpts: Vec<String>,
}

pub fn assemble_prompt(question_en: &str, context: &[Chunk]) -> Result<Prompt, QaError> {
    if context.is_empty() {
        return Err(QaError::NoContext);
    }
    let excerpts = context
        .iter()
        .enumerate()
        .map(|(i, c)| {
            format!(
                "[{}] (pages {}\u{2013}{})\n{}",
                i + 1,
                c.page_first,
                c.page_last,
                c.text
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n");
    // substitute left to right so placeholder-like text in a chunk stays literal
    let (head, tail) = PROMPT_TEMPLATE
        .split_once("{excerpts}")
        .expect("template has an excerpts slot");
    let text = format!("{head}{excerpts}{}", tail.replace("{question}", question_en));
    Ok(Prompt {
        text,
        question: question_en.to_string(),
        excerpts: context.iter().map(|c| c.text.clone()).collect(),
    })
}

pub trait Generator: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError>;

    fn probe(&self) -> ProbeStatus {
        ProbeStatus::Ok
    }
}

/// Offline generator: the sentence of excerpt `[1]` sharing the most distinct
/// words with the question; the earliest such sentence on ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveGenerator;

impl Generator for ExtractiveGenerator {
    fn id(&self) -> &str {
        "extractive"
    }

    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let excerpt = prompt.excerpts.first().ok_or(ProviderError::EmptyCompletion)?;
        let question: HashSet<String> = words(&prompt.question).into_iter().collect();
        let mut best: Option<(usize, &str)> = None;
        for sentence in split_sentences(excerpt) {
            let overlap = words(sentence)
                .into_iter()
                .collect::<HashSet<_>>()
                .intersection(&question)
                .count();
            if best.is_none_or(|(n, _)| overlap > n) {
                best = Some((overlap, sentence));
            }
        }
        best.map(|(_, s)| s.to_string())
            .ok_or(ProviderError::EmptyCompletion)
    }
}

/// Sentences end at `.`, `!` or `?` (kept); each is a trimmed slice of `text`.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed<'a>(out: &mut Vec<&'a str>, s: &'a str) {
    let s = s.trim();
    if s.chars().any(|c| c.is_alphanumeric()) {
        out.push(s);
    }
}

/// OpenAI-style chat completions client: one user message, temperature 0.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    endpoint: String,
    model: String,
    token: Option<String>,
    timeout: Duration,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    #[serde(default)]
    message: Option<ChatReply>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
    #[serde(default)]
    refusal: Option<String>,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, token: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            token,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Generator for HttpGenerator {
    fn id(&self) -> &str {
        "http"
    }

    fn generate(&self, prompt: &Prompt) -> Result<String, ProviderError> {
        let agent = http_agent(self.timeout);
        let mut req = agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send_json(&ChatRequest {
                model: &self.model,
                messages: [ChatMessage {
                    role: "user",
                    content: &prompt.text,
                }],
                temperature: 0.0,
            })
            .map_err(ProviderError::from_transport)?;
        let body: ChatResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        let choice = body.choices.into_iter().next().ok_or(ProviderError::EmptyCompletion)?;
        if choice.finish_reason.as_deref() == Some("content_filter") {
            return Err(ProviderError::Refusal("content_filter".into()));
        }
        let reply = choice.message.ok_or(ProviderError::EmptyCompletion)?;
        if let Some(refusal) = reply.refusal.filter(|r| !r.trim().is_empty()) {
            return Err(ProviderError::Refusal(refusal));
        }
        match reply.content {
            Some(text) if !text.trim().is_empty() => Ok(text.trim().to_string()),
            _ => Err(ProviderError::EmptyCompletion),
        }
    }

    fn probe(&self) -> ProbeStatus {
        probe_endpoint(&self.endpoint)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Answer,
    RefuseNoContext,
    RefuseUnsafe,
}

impl Decision {
    pub fn is_refusal(self) -> bool {
        self != Self::Answer
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Answer => "answer",
            Self::RefuseNoContext => "refuse_no_context",
            Self::RefuseUnsafe => "refuse_unsafe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardrailVerdict {
    pub decision: Decision,
    pub reason: String,
}

impl GuardrailVerdict {
    pub fn answer() -> Self {
        Self {
            decision: Decision::Answer,
            reason: String::new(),
        }
    }

    pub fn no_context(reason: impl Into<String>) -> Self {
        Self {
            decision: Decision::RefuseNoContext,
            reason: reason.into(),
        }
    }
}

/// Case-insensitive regular expressions; a draft matching any of them is withheld.
#[derive(Debug, Clone)]
pub struct DenyList {
    patterns: Vec<Regex>,
}

impl Default for DenyList {
    fn default() -> Self {
        Self::parse(DEFAULT_DENY_LIST).expect("built-in deny list compiles")
    }
}

impl DenyList {
    /// One pattern per line; blank lines and `#` comments are skipped.
    pub fn parse(source: &str) -> Result<Self, QaError> {
        let mut patterns = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let re = RegexBuilder::new(line)
                .case_insensitive(true)
                .build()
                .map_err(|e| QaError::DenyList(format!("line {}: {e}", i + 1)))?;
            patterns.push(re);
        }
        Ok(Self { patterns })
    }

    pub fn from_file(path: &Path) -> Result<Self, QaError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| QaError::DenyList(format!("{}: {e}", path.display())))?;
        Self::parse(&source)
    }

    pub fn first_match(&self, text: &str) -> Option<&str> {
        self.patterns.iter().find(|re| re.is_match(text)).map(|re| re.as_str())
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

pub fn apply_guardrails(hits: &[RetrievalHit], draft: &str, deny: &DenyList) -> GuardrailVerdict {
    if hits.is_empty() {
        return GuardrailVerdict::no_context("no manual excerpt reached the similarity floor");
    }
    if let Some(pattern) = deny.first_match(draft) {
        return GuardrailVerdict {
            decision: Decision::RefuseUnsafe,
            reason: format!("draft matched deny-list pattern {pattern}"),
        };
    }
    GuardrailVerdict::answer()
}

/// Reviewed, pre-translated user-facing strings, keyed by language then message key.
#[derive(Debug, Clone)]
pub struct MessageCatalog {
    messages: BTreeMap<String, BTreeMap<String, String>>,
}

impl Default for MessageCatalog {
    fn default() -> Self {
        let mut catalog = Self {
            messages: BTreeMap::new(),
        };
        for (code, json) in BUILTIN_MESSAGES {
            catalog
                .insert_json(code, json)
                .expect("built-in catalog parses");
        }
        catalog
    }
}

impl MessageCatalog {
    /// Built-ins plus every `<code>.json` in `dir`; files override built-ins per key.
    pub fn with_dir(dir: &Path) -> Result<Self, QaError> {
        let mut catalog = Self::default();
        let entries = std::fs::read_dir(dir)
            .map_err(|e| QaError::Catalog(format!("{}: {e}", dir.display())))?;
        for entry in entries {
            let path = entry.map_err(|e| QaError::Catalog(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(code) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let json = std::fs::read_to_string(&path)
                .map_err(|e| QaError::Catalog(format!("{}: {e}", path.display())))?;
            catalog.insert_json(&code.to_lowercase(), &json)?;
        }
        Ok(catalog)
    }

    pub fn insert_json(&mut self, code: &str, json: &str) -> Result<(), QaError> {
        let parsed: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| QaError::Catalog(format!("{code}: {e}")))?;
        self.messages.entry(code.to_string()).or_default().extend(parsed);
        Ok(())
    }

    pub fn get(&self, lang: &LanguageTag, key: &str) -> Option<&str> {
        self.messages.get(lang.code())?.get(key).map(String::as_str)
    }

    pub fn english<'a>(&'a self, key: &'a str) -> &'a str {
        self.get(&LanguageTag::pivot(), key).unwrap_or(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub chunk_id: String,
    pub page_first: u32,
    pub page_last: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub english_text: String,
    pub localized_text: String,
    pub language: LanguageTag,
    pub citations: Vec<Citation>,
    pub verdict: GuardrailVerdict,
    pub max_retrieval_score: Option<f64>,
    pub stage_latencies_ms: BTreeMap<String, u64>,
}

/// Everything an answer needs besides the manual and the question.
#[derive(Debug, Clone)]
pub struct QaEngine {
    pub providers: Providers,
    pub registry: LanguageRegistry,
    pub catalog: MessageCatalog,
    pub deny_list: DenyList,
    pub retrieval: RetrievalConfig,
}

impl QaEngine {
    pub fn new(providers: Providers) -> Self {
        Self {
            providers,
            registry: LanguageRegistry::default(),
            catalog: MessageCatalog::default(),
            deny_list: DenyList::default(),
            retrieval: RetrievalConfig::default(),
        }
    }

    /// Answer `question` in the language it was asked in. Provider failures
    /// become a refusal whose reason is the failure class; only caller errors
    /// (empty text, unusable index) are returned as `Err`.
    pub fn answer_question(
        &self,
        manual: &IndexedManual,
        session_language: &LanguageTag,
        question: &str,
    ) -> Result<Answer, QaError> {
        let mut clock = StageClock::default();
        let pivot = LanguageTag::pivot();

        let t = Instant::now();
        let detection = match detect_language(question, &self.registry, session_language) {
            Ok(d) => d,
            Err(LangError::EmptyText) => return Err(QaError::EmptyText),
            Err(e) => return Err(e.into()),
        };
        clock.record("detect", t);
        let language = detection.language;

        let t = Instant::now();
        let translated = translate(question, &language, &pivot, self.providers.translator.as_ref());
        clock.record("translate_in", t);
        let question_en = match translated {
            Ok(r) => self.providers.translator.strip_markers(&r.text).to_string(),
            Err(LangError::Provider(e)) => {
                return Ok(self.service_unavailable(&e, &language, None, clock))
            }
            Err(e) => return Err(e.into()),
        };

        let t = Instant::now();
        let retrieved = match retrieve_context(
            manual,
            &question_en,
            &self.retrieval,
            self.providers.embedder.as_ref(),
        ) {
            Ok(r) => r,
            Err(QaError::Embed(EmbedError::Provider(e))) => {
                clock.record("retrieve", t);
                return Ok(self.service_unavailable(&e, &language, None, clock));
            }
            Err(e) => return Err(e),
        };
        clock.record("retrieve", t);

        let t = Instant::now();
        let draft = if retrieved.chunks.is_empty() {
            String::new()
        } else {
            let prompt = assemble_prompt(&question_en, &retrieved.chunks)?;
            match self.providers.generator.generate(&prompt) {
                Ok(text) => text,
                Err(e) => {
                    clock.record("generate", t);
                    return Ok(self.service_unavailable(&e, &language, retrieved.max_score, clock));
                }
            }
        };
        clock.record("generate", t);

        let t = Instant::now();
        let verdict = apply_guardrails(&retrieved.hits, &draft, &self.deny_list);
        clock.record("guardrail", t);

        let t = Instant::now();
        let (english_text, localized_text) = match verdict.decision {
            Decision::Answer => {
                match translate(&draft, &pivot, &language, self.providers.translator.as_ref()) {
                    Ok(r) => (draft, r.text),
                    Err(LangError::Provider(e)) => {
                        clock.record("translate_out", t);
                        return Ok(self.service_unavailable(
                            &e,
                            &language,
                            retrieved.max_score,
                            clock,
                        ));
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            Decision::RefuseNoContext => self.catalog_pair(MSG_REFUSE_NO_CONTEXT, &language),
            Decision::RefuseUnsafe => self.catalog_pair(MSG_REFUSE_UNSAFE, &language),
        };
        clock.record("translate_out", t);

        let citations = if verdict.decision == Decision::Answer {
            retrieved
                .chunks
                .iter()
                .map(|c| Citation {
                    chunk_id: c.chunk_id.clone(),
                    page_first: c.page_first,
                    page_last: c.page_last,
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(Answer {
            english_text,
            localized_text,
            language,
            citations,
            verdict,
            max_retrieval_score: retrieved.max_score,
            stage_latencies_ms: clock.finish(),
        })
    }

    /// English and localized text for a catalog message. Languages without a
    /// catalog entry get a provider translation of the English string, and the
    /// English string itself if that fails too.
    fn catalog_pair(&self, key: &str, language: &LanguageTag) -> (String, String) {
        let english = self.catalog.english(key).to_string();
        let localized = match self.catalog.get(language, key) {
            Some(text) => text.to_string(),
            None => translate(
                &english,
                &LanguageTag::pivot(),
                language,
                self.providers.translator.as_ref(),
            )
            .map(|r| r.text)
            .unwrap_or_else(|_| english.clone()),
        };
        (english, localized)
    }

    fn service_unavailable(
        &self,
        err: &ProviderError,
        language: &LanguageTag,
        max_retrieval_score: Option<f64>,
        clock: StageClock,
    ) -> Answer {
        let english = self.catalog.english(MSG_SERVICE_UNAVAILABLE).to_string();
        // the provider just failed, so do not ask it to translate the apology
        let localized = self
            .catalog
            .get(language, MSG_SERVICE_UNAVAILABLE)
            .map(str::to_string)
            .unwrap_or_else(|| english.clone());
        Answer {
            english_text: english,
            localized_text: localized,
            language: language.clone(),
            citations: Vec::new(),
            verdict: GuardrailVerdict::no_context(err.class()),
            max_retrieval_score,
            stage_latencies_ms: clock.finish(),
        }
    }
}

#[derive(Debug, Default)]
struct StageClock {
    stages: BTreeMap<String, u64>,
}

impl StageClock {
    fn record(&mut self, stage: &str, started: Instant) {
        let ms = started.elapsed().as_millis() as u64;
        *self.stages.entry(stage.to_string()).or_default() += ms;
    }

    /// Stages that never ran are reported as 0 ms.
    fn finish(mut self) -> BTreeMap<String, u64> {
        for stage in STAGES {
            self.stages.entry(stage.to_string()).or_default();
        }
        self.stages
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashingEmbedder;
    use crate::index::build_index;
    use crate::ingest::{chunk_pages, ChunkingConfig, PageText};

    fn chunk(page_first: u32, page_last: u32, text: &str, tokens: usize) -> Chunk {
        Chunk {
            chunk_id: format!("c{page_first}"),
            manual_id: "m".into(),
            ordinal: 0,
            text: text.into(),
            char_start: 0,
            char_end: text.chars().count(),
            page_first,
            page_last,
            token_count: tokens,
        }
    }

    fn prompt(excerpt: &str, question: &str) -> Prompt {
        assemble_prompt(question, &[chunk(1, 1, excerpt, 4)]).unwrap()
    }

    #[test]
    fn extractive_picks_max_overlap() {
        let p = prompt("Charge daily. Avoid water.", "how do I charge?");
        assert_eq!(ExtractiveGenerator.generate(&p).unwrap(), "Charge daily.");
    }

    #[test]
    fn extractive_zero_overlap_takes_first() {
        let p = prompt("Charge daily. Avoid water.", "xyzzy");
        assert_eq!(ExtractiveGenerator.generate(&p).unwrap(), "Charge daily.");
        let p = prompt("Charge daily. Avoid water!", "water");
        assert_eq!(ExtractiveGenerator.generate(&p).unwrap(), "Avoid water!");
    }

    #[test]
    fn sentence_split() {
        assert_eq!(
            split_sentences("One. Two? Three! tail"),
            vec!["One.", "Two?", "Three!", "tail"]
        );
        assert!(split_sentences("...").is_empty());
    }

    #[test]
    fn prompt_template() {
        let p = assemble_prompt("how?", &[chunk(3, 3, "Charge daily.", 2)]).unwrap();
        assert!(p.text.starts_with("Answer ONLY from the numbered excerpts"));
        let at = p.text.find("[1] (pages 3\u{2013}3)\nCharge daily.").unwrap();
        assert!(p.text[at..].contains("Question: how?"));
        assert_eq!(p, assemble_prompt("how?", &[chunk(3, 3, "Charge daily.", 2)]).unwrap());
        assert!(matches!(assemble_prompt("how?", &[]), Err(QaError::NoContext)));
    }

    #[test]
    fn prompt_follows_rank_order() {
        let p = assemble_prompt("q", &[chunk(7, 8, "later", 1), chunk(1, 1, "earlier", 1)]).unwrap();
        assert!(p.text.find("[1] (pages 7\u{2013}8)\nlater").unwrap() < p.text.find("[2] (pages 1").unwrap());
    }

    #[test]
    fn guardrail_rules() {
        let deny = DenyList::default();
        let hit = RetrievalHit {
            chunk_id: "a".into(),
            ordinal: 0,
            score: 0.9,
            rank: 1,
        };
        assert_eq!(apply_guardrails(&[], "fine", &deny).decision, Decision::RefuseNoContext);
        let v = apply_guardrails(
            std::slice::from_ref(&hit),
            "Open the battery casing and rewire the contacts.",
            &deny,
        );
        assert_eq!(v.decision, Decision::RefuseUnsafe);
        assert!(!v.reason.is_empty());
        assert_eq!(
            apply_guardrails(&[hit], "Charge the battery for three hours.", &deny),
            GuardrailVerdict::answer()
        );
    }

    #[test]
    fn deny_list_parse_errors_name_line() {
        let err = DenyList::parse("# c\nok\n(unclosed").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn catalog_lookup() {
        let c = MessageCatalog::default();
        let pcm = LanguageTag::new("pcm");
        assert!(c.get(&pcm, MSG_REFUSE_NO_CONTEXT).unwrap().starts_with("Dis manual"));
        assert!(c.english(MSG_REFUSE_UNSAFE).starts_with("For your safety"));
        assert!(c.get(&LanguageTag::new("yo"), MSG_REFUSE_UNSAFE).is_none());
    }

    fn tokens(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn budget_keeps_four_256_token_chunks() {
        let text = tokens(1024);
        let pages = vec![PageText {
            page_no: 1,
            text: text.clone(),
        }];
        let chunks = chunk_pages("m", &pages, &ChunkingConfig::new(256, 0).unwrap()).unwrap();
        assert_eq!(chunks.len(), 4);
        let embedder = HashingEmbedder::new(256).unwrap();
        let manual = IndexedManual {
            index: build_index(&chunks, &embedder).unwrap(),
            chunks,
        };
        let cfg = RetrievalConfig {
            min_score: -1.0,
            ..RetrievalConfig::default()
        };
        let ctx = retrieve_context(&manual, "w1 w300 w600 w900", &cfg, &embedder).unwrap();
        assert_eq!(ctx.hits.len(), 4);
        assert_eq!(ctx.chunks.len(), 4);
        let small = RetrievalConfig {
            context_token_budget: 300,
            ..cfg
        };
        let ctx = retrieve_context(&manual, "w1 w300 w600 w900", &small, &embedder).unwrap();
        assert_eq!(ctx.chunks.len(), 1);
        let tiny = RetrievalConfig {
            context_token_budget: 10,
            ..cfg
        };
        let ctx = retrieve_context(&manual, "w1", &tiny, &embedder).unwrap();
        assert_eq!(ctx.chunks.len(), 1, "rank 1 is always kept");
    }

    #[test]
    fn below_floor_yields_nothing() {
        let pages = vec![PageText {
            page_no: 1,
            text: "Charge the battery daily.".into(),
        }];
        let chunks = chunk_pages("m", &pages, &ChunkingConfig::default()).unwrap();
        let embedder = HashingEmbedder::new(256).unwrap();
        let manual = IndexedManual {
            index: build_index(&chunks, &embedder).unwrap(),
            chunks,
        };
        let cfg = RetrievalConfig {
            min_score: 1.01,
            ..RetrievalConfig::default()
        };
        assert!(cfg.validate(64).is_err());
        let ctx = retrieve_context(&manual, "charge", &cfg, &embedder).unwrap();
        assert!(ctx.hits.is_empty() && ctx.chunks.is_empty());
        assert!(ctx.max_score.unwrap() > 0.0);
        let ctx = retrieve_context(&manual, "???", &RetrievalConfig::default(), &embedder).unwrap();
        assert!(ctx.hits.is_empty() && ctx.max_score.is_none());
    }

    #[test]
    fn config_validation() {
        assert!(RetrievalConfig::default().validate(64).is_ok());
        assert!(RetrievalConfig::default().validate(2000).is_err());
        let zero_k = RetrievalConfig {
            k: 0,
            ..RetrievalConfig::default()
        };
        assert!(zero_k.validate(64).is_err());
    }
}
