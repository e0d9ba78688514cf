mod common;

use std::sync::Arc;
use std::time::Duration;

use manualbridge_core::embed::DEFAULT_DIM;
use manualbridge_core::lang::{HttpTranslator, IdentityTranslator, LanguageTag};
use manualbridge_core::qa::{Decision, MessageCatalog, Prompt, QaEngine, QaError, MSG_REFUSE_NO_CONTEXT, MSG_REFUSE_UNSAFE, STAGES};
use manualbridge_core::qa::Generator;
use manualbridge_core::providers::ProviderError;
use manualbridge_core::Providers;

fn engine() -> QaEngine {
    QaEngine::new(Providers::stub(DEFAULT_DIM))
}

#[test]
fn planted_facts_are_answered_from_cited_chunks() {
    let manual = common::fixture_manual();
    let engine = engine();
    for fact in common::facts() {
        let a = engine
            .answer_question(&manual, &LanguageTag::pivot(), &fact.query_en)
            .unwrap();
        assert_eq!(a.verdict.decision, Decision::Answer, "{}", fact.query_en);
        assert_eq!(a.language.code(), "en");
        assert_eq!(a.english_text, fact.fact);
        assert_eq!(a.localized_text, a.english_text);
        assert!(!a.citations.is_empty());
        let cited: Vec<_> = a
            .citations
            .iter()
            .map(|c| manual.chunks.iter().find(|ch| ch.chunk_id == c.chunk_id).unwrap())
            .collect();
        assert!(cited.iter().any(|c| c.text.contains(&a.english_text)));
        for (c, ch) in a.citations.iter().zip(&cited) {
            assert_eq!((c.page_first, c.page_last), (ch.page_first, ch.page_last));
        }
    }
}

#[test]
fn markerless_question_follows_session_language() {
    let manual = common::fixture_manual();
    let fact = &common::facts()[0];
    let a = engine()
        .answer_question(&manual, &LanguageTag::new("pcm"), &fact.query_en)
        .unwrap();
    assert_eq!(a.language.code(), "pcm");
    assert_eq!(a.english_text, fact.fact);
    assert_eq!(a.localized_text, format!("[pcm] {}", fact.fact));
}

#[test]
fn pidgin_questions_come_back_tagged() {
    let manual = common::fixture_manual();
    let engine = engine();
    let mut answered = 0;
    for fact in common::facts() {
        let a = engine
            .answer_question(&manual, &LanguageTag::pivot(), &fact.query_pcm)
            .unwrap();
        assert_eq!(a.language.code(), "pcm", "{}", fact.query_pcm);
        if a.verdict.decision == Decision::Answer {
            answered += 1;
            assert_eq!(a.localized_text, format!("[pcm] {}", a.english_text));
        }
    }
    assert_eq!(answered, 19);
}

#[test]
fn zero_overlap_question_is_refused_from_catalog() {
    let manual = common::fixture_manual();
    let a = engine()
        .answer_question(&manual, &LanguageTag::new("pcm"), "zorblax quindle frumious vex")
        .unwrap();
    assert_eq!(a.verdict.decision, Decision::RefuseNoContext);
    assert!(a.citations.is_empty());
    let catalog = MessageCatalog::default();
    assert_eq!(a.localized_text, catalog.get(&LanguageTag::new("pcm"), MSG_REFUSE_NO_CONTEXT).unwrap());
    assert_eq!(a.english_text, catalog.english(MSG_REFUSE_NO_CONTEXT));
}

struct Scripted(&'static str);

impl Generator for Scripted {
    fn id(&self) -> &str {
        "scripted"
    }

    fn generate(&self, _: &Prompt) -> Result<String, ProviderError> {
        Ok(self.0.to_string())
    }
}

#[test]
fn unsafe_draft_is_withheld() {
    let manual = common::fixture_manual();
    let mut engine = engine();
    engine.providers.generator = Arc::new(Scripted("Open the battery casing and rewire the red lead."));
    let a = engine
        .answer_question(&manual, &LanguageTag::pivot(), &common::facts()[1].query_en)
        .unwrap();
    assert_eq!(a.verdict.decision, Decision::RefuseUnsafe);
    assert!(a.citations.is_empty());
    assert_eq!(a.english_text, MessageCatalog::default().english(MSG_REFUSE_UNSAFE));
}

#[test]
fn unreachable_translator_becomes_localized_service_refusal() {
    let manual = common::fixture_manual();
    let mut engine = engine();
    engine.providers.translator = Arc::new(
        HttpTranslator::new("http://127.0.0.1:9/translate", None).with_timeout(Duration::from_millis(300)),
    );
    let a = engine
        .answer_question(&manual, &LanguageTag::pivot(), &common::facts()[0].query_pcm)
        .unwrap();
    assert_eq!(a.verdict.decision, Decision::RefuseNoContext);
    assert_eq!(a.verdict.reason, "provider_unreachable");
    assert!(a.localized_text.starts_with("Di service"));
    for stage in STAGES {
        assert!(a.stage_latencies_ms.contains_key(stage));
    }
}

#[test]
fn identity_translator_returns_english_draft() {
    let manual = common::fixture_manual();
    let mut engine = engine();
    engine.providers.translator = Arc::new(IdentityTranslator);
    let fact = &common::facts()[2];
    let a = engine
        .answer_question(&manual, &LanguageTag::pivot(), &fact.query_pcm)
        .unwrap();
    assert_eq!(a.localized_text, a.english_text);
}

#[test]
fn empty_question_is_an_error() {
    let manual = common::fixture_manual();
    assert!(matches!(
        engine().answer_question(&manual, &LanguageTag::pivot(), "   "),
        Err(QaError::EmptyText)
    ));
}

#[test]
fn latencies_cover_every_stage() {
    let manual = common::fixture_manual();
    let engine = engine();
    for q in ["wash silicone liner", "???", "Abeg wetin I go do?"] {
        let start = std::time::Instant::now();
        let a = engine.answer_question(&manual, &LanguageTag::new("pcm"), q).unwrap();
        let wall = start.elapsed().as_millis() as u64;
        assert_eq!(a.stage_latencies_ms.len(), 6);
        assert!(a.stage_latencies_ms.values().sum::<u64>() <= wall + 50);
    }
}
