use std::cmp::Ordering;

use manualbridge_core::embed::EmbeddingVector;
use manualbridge_core::index::{IndexEntry, VectorIndex};
use manualbridge_core::ingest::{chunk_pages, concatenated_text, window_ranges, ChunkingConfig, PageText};
use manualbridge_core::lang::{round_trip_score, translate, IdentityTranslator, LanguageTag, TaggingTranslator};
use manualbridge_core::HashingEmbedder;
use proptest::prelude::*;

/// Brute-force cosine ranking written independently of `VectorIndex::search`.
fn reference_ranking(corpus: &[Vec<f32>], query: &[f32], k: usize, min_score: f64) -> Vec<(usize, f64)> {
    let norm = |v: &[f32]| v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    let qn = norm(query);
    let mut scored: Vec<(usize, f64)> = corpus
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let dot: f64 = v.iter().zip(query).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
            (i, dot / (norm(v) * qn))
        })
        .filter(|(_, s)| *s >= min_score)
        .collect();
    scored.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    scored.truncate(k);
    scored
}

fn unit(raw: Vec<f32>) -> Option<EmbeddingVector> {
    EmbeddingVector::from_components(raw).ok()
}

fn index_of(vectors: &[EmbeddingVector]) -> VectorIndex {
    VectorIndex {
        manual_id: "m".into(),
        dim: vectors[0].dim(),
        entries: vectors
            .iter()
            .enumerate()
            .map(|(i, v)| IndexEntry {
                chunk_id: format!("c{i}"),
                vector: v.clone(),
            })
            .collect(),
    }
}

/// Small integer components make exact ties and duplicates likely.
fn corpus_strategy() -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<f32>)> {
    (2usize..12).prop_flat_map(|dim| {
        let vec = prop::collection::vec((-3i8..=3).prop_map(f32::from), dim);
        (prop::collection::vec(vec.clone(), 1..200), vec)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn search_equals_brute_force(
        (raw, query) in corpus_strategy(),
        k in 1usize..20,
        min_score in -1.0f64..1.0,
    ) {
        let vectors: Vec<EmbeddingVector> = raw.into_iter().filter_map(unit).collect();
        prop_assume!(!vectors.is_empty());
        let Some(q) = unit(query) else { return Ok(()) };
        let got = index_of(&vectors).search(&q, k, min_score).unwrap();
        let stored: Vec<Vec<f32>> = vectors.iter().map(|v| v.components().to_vec()).collect();
        let want = reference_ranking(&stored, q.components(), k, min_score);
        prop_assert_eq!(got.len(), want.len());
        for (rank, (hit, (ordinal, score))) in got.iter().zip(&want).enumerate() {
            prop_assert_eq!(hit.rank, rank + 1);
            prop_assert_eq!(hit.ordinal, *ordinal);
            prop_assert!((hit.score - score).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_is_scale_invariant(
        raw in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 16), 1..200),
        query in prop::collection::vec(-1.0f32..1.0, 16),
        factor in 0.001f32..1000.0,
    ) {
        let vectors: Vec<EmbeddingVector> = raw.into_iter().filter_map(unit).collect();
        prop_assume!(!vectors.is_empty());
        let Some(q) = unit(query) else { return Ok(()) };
        let index = index_of(&vectors);
        let a = index.search(&q, 10, -1.0).unwrap();
        let b = index.search(&q.scaled(factor), 10, -1.0).unwrap();
        // f32 rounding of the scaled query can only reorder hits whose scores are within rounding of each other
        let near_tie = a.windows(2).any(|w| w[0].score - w[1].score < 1e-6);
        prop_assume!(!near_tie);
        prop_assert_eq!(
            a.iter().map(|h| h.ordinal).collect::<Vec<_>>(),
            b.iter().map(|h| h.ordinal).collect::<Vec<_>>()
        );
    }

    #[test]
    fn exact_ties_survive_power_of_two_scaling((raw, query) in corpus_strategy(), exp in -20i32..20) {
        let vectors: Vec<EmbeddingVector> = raw.into_iter().filter_map(unit).collect();
        prop_assume!(!vectors.is_empty());
        let Some(q) = unit(query) else { return Ok(()) };
        let index = index_of(&vectors);
        let a = index.search(&q, 10, -1.0).unwrap();
        let b = index.search(&q.scaled(2f32.powi(exp)), 10, -1.0).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn stored_vectors_have_unit_self_similarity(text in "[a-z]{1,8}( [a-z]{1,8}){0,30}") {
        let v = manualbridge_core::Embedder::embed(&HashingEmbedder::new(64).unwrap(), &text).unwrap();
        prop_assert!((v.cosine(&v) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn persistence_round_trip((raw, query) in corpus_strategy()) {
        let vectors: Vec<EmbeddingVector> = raw.into_iter().filter_map(unit).collect();
        prop_assume!(!vectors.is_empty());
        let index = index_of(&vectors);
        let loaded = VectorIndex::from_bytes(&index.to_bytes(), "m").unwrap();
        prop_assert_eq!(&loaded, &index);
        if let Some(q) = unit(query) {
            prop_assert_eq!(index.search(&q, 5, -1.0).unwrap(), loaded.search(&q, 5, -1.0).unwrap());
        }
    }

    #[test]
    fn chunks_cover_and_overlap(
        n_tokens in 1usize..600,
        size in 1usize..80,
        overlap_frac in 0.0f64..1.0,
        tokens_per_page in 1usize..120,
    ) {
        let overlap = ((size as f64) * overlap_frac) as usize % size;
        let cfg = ChunkingConfig::new(size, overlap).unwrap();
        let words: Vec<String> = (0..n_tokens).map(|i| format!("t{i}")).collect();
        let pages: Vec<PageText> = words
            .chunks(tokens_per_page)
            .enumerate()
            .map(|(i, w)| PageText { page_no: i as u32 + 1, text: w.join(" ") })
            .collect();
        let chunks = chunk_pages("m", &pages, &cfg).unwrap();
        let ranges = window_ranges(n_tokens, &cfg);
        prop_assert_eq!(chunks.len(), ranges.len());
        let mut covered = vec![false; n_tokens];
        for (r, (s, e)) in ranges.iter().enumerate() {
            covered[*s..*e].iter_mut().for_each(|c| *c = true);
            prop_assert_eq!(chunks[r].token_count, e - s);
            prop_assert_eq!(chunks[r].ordinal, r);
            if r + 2 < ranges.len() {
                prop_assert_eq!(ranges[r].1 - ranges[r + 1].0, overlap);
            }
        }
        prop_assert!(covered.iter().all(|c| *c));
        let text: Vec<char> = concatenated_text(&pages).chars().collect();
        for c in &chunks {
            prop_assert!(c.char_start < c.char_end);
            prop_assert!(c.page_first <= c.page_last);
            let slice: String = text[c.char_start..c.char_end].iter().collect();
            prop_assert_eq!(&slice, &c.text);
            let (s, e) = ranges[c.ordinal];
            prop_assert_eq!(c.text.split_whitespace().collect::<Vec<_>>(), words[s..e].iter().map(String::as_str).collect::<Vec<_>>());
        }
    }

    #[test]
    fn identity_law_and_exact_round_trip(text in "[A-Za-z][A-Za-z ,.]{0,80}", code in "(en|pcm|yo)") {
        let lang = LanguageTag::new(code);
        for provider in [&IdentityTranslator as &dyn manualbridge_core::Translator, &TaggingTranslator] {
            prop_assert_eq!(translate(&text, &lang, &lang, provider).unwrap().text, text.clone());
            let s = round_trip_score(&text, provider, &LanguageTag::new("pcm"), &HashingEmbedder::default()).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
