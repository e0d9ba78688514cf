//! Language registry, marker-word detection, pivot translation and
//! back-translation equivalence.
//!
//! Questions are translated into English, answered against the English manual,
//! and the answer is translated back. A new language needs a marker list, a
//! message catalog and a translation provider that supports the pair; nothing
//! else changes.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{embed_text, words, EmbedError, Embedder};
use crate::providers::{http_agent, probe_endpoint, ProbeStatus, ProviderError};

/// Every manual is indexed and answered in this language.
pub const PIVOT: &str = "en";
pub const DEFAULT_USER_LANGUAGE: &str = "pcm";
pub const DEFAULT_EQUIVALENCE_THRESHOLD: f64 = 0.80;

const BUILTIN_MARKERS: &[(&str, &str)] = &[
    ("en", include_str!("../data/markers/en.txt")),
    ("pcm", include_str!("../data/markers/pcm.txt")),
];

#[derive(Debug, Error)]
pub enum LangError {
    #[error("text is empty")]
    EmptyText,
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("reading marker list {path}: {source}")]
    MarkerFile {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// A registered language code, lowercase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LanguageTag(String);

impl LanguageTag {
    /// Unchecked; use [`LanguageRegistry::tag`] for codes that come from users.
    pub fn new(code: impl Into<String>) -> Self {
        Self(code.into().to_lowercase())
    }

    pub fn pivot() -> Self {
        Self(PIVOT.to_string())
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    pub fn is_pivot(&self) -> bool {
        self.0 == PIVOT
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LanguageInfo {
    pub code: String,
    pub name: String,
    #[serde(skip)]
    markers: HashSet<String>,
}

impl LanguageInfo {
    pub fn markers(&self) -> &HashSet<String> {
        &self.markers
    }
}

/// Parse a marker list: one word per line, `#` comments, optional `# name: X` header.
fn parse_markers(code: &str, body: &str) -> LanguageInfo {
    let mut name = code.to_string();
    let mut markers = HashSet::new();
    for line in body.lines() {
        let line = line.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("name:") {
                name = n.trim().to_string();
            }
            continue;
        }
        if !line.is_empty() {
            markers.insert(line.to_lowercase());
        }
    }
    LanguageInfo {
        code: code.to_string(),
        name,
        markers,
    }
}

#[derive(Debug, Clone)]
pub struct LanguageRegistry {
    languages: BTreeMap<String, LanguageInfo>,
    default_language: LanguageTag,
}

impl Default for LanguageRegistry {
    fn default() -> Self {
        let languages = BUILTIN_MARKERS
            .iter()
            .map(|(code, body)| (code.to_string(), parse_markers(code, body)))
            .collect();
        Self {
            languages,
            default_language: LanguageTag::new(DEFAULT_USER_LANGUAGE),
        }
    }
}

impl LanguageRegistry {
    /// Built-in languages plus every `<code>.txt` marker file in `dir`.
    /// A file for an existing code replaces its marker list.
    pub fn with_marker_dir(dir: &Path) -> Result<Self, LangError> {
        let mut reg = Self::default();
        let io_err = |source| LangError::MarkerFile {
            path: dir.display().to_string(),
            source,
        };
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(io_err)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        paths.sort();
        for path in paths {
            let Some(code) = path.file_stem().and_then(|s| s.to_str()) else {
                continue;
            };
            let body = std::fs::read_to_string(&path).map_err(|source| LangError::MarkerFile {
                path: path.display().to_string(),
                source,
            })?;
            reg.insert(parse_markers(&code.to_lowercase(), &body));
        }
        Ok(reg)
    }

    pub fn insert(&mut self, info: LanguageInfo) {
        self.languages.insert(info.code.clone(), info);
    }

    pub fn add_language(&mut self, code: &str, name: &str, markers: &[&str]) {
        self.insert(LanguageInfo {
            code: code.to_lowercase(),
            name: name.to_string(),
            markers: markers.iter().map(|m| m.to_lowercase()).collect(),
        });
    }

    pub fn tag(&self, code: &str) -> Result<LanguageTag, LangError> {
        let code = code.trim().to_lowercase();
        if self.languages.contains_key(&code) {
            Ok(LanguageTag(code))
        } else {
            Err(LangError::UnknownLanguage(code))
        }
    }

    pub fn contains(&self, tag: &LanguageTag) -> bool {
        self.languages.contains_key(tag.code())
    }

    pub fn get(&self, tag: &LanguageTag) -> Option<&LanguageInfo> {
        self.languages.get(tag.code())
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageInfo> {
        self.languages.values()
    }

    pub fn default_language(&self) -> &LanguageTag {
        &self.default_language
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub language: LanguageTag,
    pub confidence: f64,
}

/// Marker-ratio language identification.
///
/// For each registered language, ratio = marker hits / total tokens. The best
/// ratio wins with confidence `best / sum(ratios)`. A tie for first place, or no
/// hits at all, falls back to `session_language` with confidence 0.
pub fn detect_language(
    text: &str,
    registry: &LanguageRegistry,
    session_language: &LanguageTag,
) -> Result<Detection, LangError> {
    if text.trim().is_empty() {
        return Err(LangError::EmptyText);
    }
    let fallback = Detection {
        language: session_language.clone(),
        confidence: 0.0,
    };
    let tokens = words(text);
    if tokens.is_empty() {
        return Ok(fallback);
    }
    let total = tokens.len() as f64;
    let ratios: Vec<(&str, f64)> = registry
        .languages()
        .map(|lang| {
            let hits = tokens.iter().filter(|t| lang.markers.contains(*t)).count();
            (lang.code.as_str(), hits as f64 / total)
        })
        .collect();
    let sum: f64 = ratios.iter().map(|(_, r)| r).sum();
    let best = ratios.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let leaders: Vec<&str> = ratios
        .iter()
        .filter(|(_, r)| *r == best)
        .map(|(c, _)| *c)
        .collect();
    if best == 0.0 || leaders.len() > 1 {
        return Ok(fallback);
    }
    Ok(Detection {
        language: LanguageTag(leaders[0].to_string()),
        confidence: best / sum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TranslationResult {
    pub source: LanguageTag,
    pub target: LanguageTag,
    pub text: String,
    pub provider_id: String,
}

pub trait Translator: Send + Sync {
    fn id(&self) -> &str;

    /// Translate non-empty `text`; `src != tgt` is guaranteed by [`translate`].
    fn translate_text(
        &self,
        text: &str,
        src: &LanguageTag,
        tgt: &LanguageTag,
    ) -> Result<String, ProviderError>;

    /// Remove any provider-specific decoration from an output before it is fed
    /// back in as input.
    fn strip_markers<'a>(&self, text: &'a str) -> &'a str {
        text
    }

    fn probe(&self) -> ProbeStatus {
        ProbeStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn id(&self) -> &str {
        "identity"
    }

    fn translate_text(&self, text: &str, _: &LanguageTag, _: &LanguageTag) -> Result<String, ProviderError> {
        Ok(text.to_string())
    }
}

/// Test stub: prefixes the target code, `"[pcm] charge daily"`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TaggingTranslator;

impl Translator for TaggingTranslator {
    fn id(&self) -> &str {
        "tagging"
    }

    fn translate_text(&self, text: &str, _: &LanguageTag, tgt: &LanguageTag) -> Result<String, ProviderError> {
        Ok(format!("[{}] {}", tgt.code(), text))
    }

    fn strip_markers<'a>(&self, text: &'a str) -> &'a str {
        strip_tag(text)
    }
}

/// Strip one leading `"[code] "` tag.
pub fn strip_tag(text: &str) -> &str {
    let Some(rest) = text.strip_prefix('[') else {
        return text;
    };
    match rest.split_once("] ") {
        Some((code, body))
            if !code.is_empty()
                && code.chars().all(|c| c.is_ascii_lowercase() || c == '-' || c == '_') =>
        {
            body
        }
        _ => text,
    }
}

/// Machine-translation endpoint: `POST {"text","src","tgt"}` → `{"text"}`.
#[derive(Debug, Clone)]
pub struct HttpTranslator {
    endpoint: String,
    token: Option<String>,
    timeout: Duration,
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    src: &'a str,
    tgt: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>, token: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            token,
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Translator for HttpTranslator {
    fn id(&self) -> &str {
        "http"
    }

    fn translate_text(
        &self,
        text: &str,
        src: &LanguageTag,
        tgt: &LanguageTag,
    ) -> Result<String, ProviderError> {
        let agent = http_agent(self.timeout);
        let mut req = agent.post(&self.endpoint);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let result = req.send_json(&TranslateRequest {
            text,
            src: src.code(),
            tgt: tgt.code(),
        });
        let mut resp = match result {
            Ok(resp) => resp,
            Err(ureq::Error::StatusCode(400 | 404 | 422)) => {
                return Err(ProviderError::UnsupportedPair {
                    src: src.to_string(),
                    tgt: tgt.to_string(),
                })
            }
            Err(e) => return Err(ProviderError::from_transport(e)),
        };
        let body: TranslateResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        Ok(body.text)
    }

    fn probe(&self) -> ProbeStatus {
        probe_endpoint(&self.endpoint)
    }
}

/// Translate `text` from `src` to `tgt`; identical languages are returned untouched.
pub fn translate(
    text: &str,
    src: &LanguageTag,
    tgt: &LanguageTag,
    provider: &dyn Translator,
) -> Result<TranslationResult, LangError> {
    if text.trim().is_empty() {
        return Err(LangError::EmptyText);
    }
    if src == tgt {
        return Ok(TranslationResult {
            source: src.clone(),
            target: tgt.clone(),
            text: text.to_string(),
            provider_id: "identity".into(),
        });
    }
    let out = provider.translate_text(text, src, tgt)?;
    if out.trim().is_empty() {
        return Err(ProviderError::BadResponse("empty translation".into()).into());
    }
    Ok(TranslationResult {
        source: src.clone(),
        target: tgt.clone(),
        text: out,
        provider_id: provider.id().to_string(),
    })
}

/// Translate English `original` into `lang` and back, then compare the two
/// English texts by embedding cosine.
pub fn round_trip_score(
    original: &str,
    provider: &dyn Translator,
    lang: &LanguageTag,
    embedder: &dyn Embedder,
) -> Result<f64, LangError> {
    let pivot = LanguageTag::pivot();
    let there = translate(original, &pivot, lang, provider)?;
    let back = translate(provider.strip_markers(&there.text), lang, &pivot, provider)?;
    let back_text = provider.strip_markers(&back.text);
    let a = embed_text(original, embedder)?;
    let b = embed_text(back_text, embedder)?;
    Ok(a.cosine(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashingEmbedder;

    fn reg() -> LanguageRegistry {
        LanguageRegistry::default()
    }

    fn pcm() -> LanguageTag {
        LanguageTag::new("pcm")
    }

    #[test]
    fn builtin_registry() {
        let r = reg();
        let codes: Vec<_> = r.languages().map(|l| l.code.as_str()).collect();
        assert_eq!(codes, vec!["en", "pcm"]);
        assert_eq!(r.get(&pcm()).unwrap().name, "Nigerian Pidgin");
        for w in ["abeg", "dey", "wetin", "una", "dem", "sabi", "di", "na"] {
            assert!(r.get(&pcm()).unwrap().markers().contains(w), "{w}");
        }
        for w in ["the", "how", "is", "of", "do", "what"] {
            assert!(r.get(&LanguageTag::pivot()).unwrap().markers().contains(w), "{w}");
        }
        assert!(r.tag("PCM").is_ok());
        assert!(matches!(r.tag("xx"), Err(LangError::UnknownLanguage(_))));
    }

    #[test]
    fn detects_english_question() {
        // how, do, the: 3 of 6 tokens; no pcm markers
        let d = detect_language("How do I charge the battery?", &reg(), &pcm()).unwrap();
        assert_eq!(d.language.code(), "en");
        assert_eq!(d.confidence, 1.0);
    }

    #[test]
    fn detects_pidgin_question() {
        // pcm: abeg, di = 2/8; en: how = 1/8; confidence = 0.25 / 0.375
        let d = detect_language("Abeg how I go take charge di battery?", &reg(), &LanguageTag::pivot())
            .unwrap();
        assert_eq!(d.language.code(), "pcm");
        assert!((d.confidence - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn no_markers_falls_back_to_session() {
        let d = detect_language("12345 67890", &reg(), &pcm()).unwrap();
        assert_eq!(d, Detection { language: pcm(), confidence: 0.0 });
        let d = detect_language("???", &reg(), &pcm()).unwrap();
        assert_eq!(d.confidence, 0.0);
    }

    #[test]
    fn tie_falls_back_to_session() {
        let d = detect_language("the dey", &reg(), &LanguageTag::pivot()).unwrap();
        assert_eq!(d.language.code(), "en");
        assert_eq!(d.confidence, 0.0);
    }

    #[test]
    fn empty_detection_input() {
        assert!(matches!(detect_language("  ", &reg(), &pcm()), Err(LangError::EmptyText)));
    }

    #[test]
    fn extra_languages_from_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("yo.txt"), "# name: Yoruba\nni\nati\nkini\n").unwrap();
        let r = LanguageRegistry::with_marker_dir(dir.path()).unwrap();
        assert_eq!(r.languages().count(), 3);
        let yo = r.tag("yo").unwrap();
        assert_eq!(r.get(&yo).unwrap().name, "Yoruba");
        let d = detect_language("kini ati ni", &r, &pcm()).unwrap();
        assert_eq!(d.language, yo);
    }

    #[test]
    fn identity_when_languages_match() {
        for provider in [&TaggingTranslator as &dyn Translator, &IdentityTranslator] {
            let en = LanguageTag::pivot();
            let r = translate("hello", &en, &en, provider).unwrap();
            assert_eq!(r.text, "hello");
        }
    }

    #[test]
    fn tagging_stub_output() {
        let r = translate("charge daily", &LanguageTag::pivot(), &pcm(), &TaggingTranslator).unwrap();
        assert_eq!(r.text, "[pcm] charge daily");
        assert_eq!(r.provider_id, "tagging");
        assert!(matches!(
            translate("", &LanguageTag::pivot(), &pcm(), &TaggingTranslator),
            Err(LangError::EmptyText)
        ));
    }

    #[test]
    fn strip_tag_cases() {
        assert_eq!(strip_tag("[pcm] charge daily"), "charge daily");
        assert_eq!(strip_tag("[1] charge"), "[1] charge");
        assert_eq!(strip_tag("[pcm]charge"), "[pcm]charge");
        assert_eq!(strip_tag("plain"), "plain");
    }

    #[test]
    fn round_trip_is_exact_for_lossless_providers() {
        let e = HashingEmbedder::new(256).unwrap();
        for provider in [&TaggingTranslator as &dyn Translator, &IdentityTranslator] {
            let s = round_trip_score("Charge the battery every night.", provider, &pcm(), &e).unwrap();
            assert!((s - 1.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn unreachable_http_translator() {
        let t = HttpTranslator::new("http://127.0.0.1:9/translate", None)
            .with_timeout(Duration::from_millis(500));
        let err = translate("hi", &LanguageTag::pivot(), &pcm(), &t).unwrap_err();
        assert!(matches!(err, LangError::Provider(ProviderError::Unreachable(_))), "{err}");
        assert_eq!(t.probe(), ProbeStatus::Degraded);
    }
}
