use proptest::prelude::*;

use attanchor::anchor::{insert_image_plan, plan_image_into_text};
use attanchor::attention::{attention_row, softmax};
use attanchor::threshold::{optimal_threshold, precision_recall, LabeledPair};
use attanchor::tokens::build_similarity_matrix_parallel;
use attanchor::*;

fn embedding_set() -> impl Strategy<Value = EmbeddingSet> {
    (1usize..12, 1usize..8, 1usize..6).prop_flat_map(|(m, n, d)| {
        let row = prop::collection::vec(prop_oneof![-1.0f64..1.0, Just(0.5)], d)
            .prop_filter("nonzero", |r| r.iter().any(|x| x.abs() > 1e-3));
        (
            prop::collection::vec(row.clone(), m),
            prop::collection::vec(row, n),
        )
            .prop_map(move |(image, text)| EmbeddingSet::new(d, image, text).unwrap())
    })
}

proptest! {
    #[test]
    fn removing_insertions_recovers_the_concatenation(e in embedding_set(), tau in 0.0f64..=1.0, k in 0usize..3) {
        let sim = build_similarity_matrix(&e);
        for mode in [Mode::TextIntoImage, Mode::ImageIntoText] {
            let cfg = ImageIntoTextConfig::new(tau, k, k > 0).unwrap();
            let (plan, seq) = reorder(&e, &sim, mode, &cfg).unwrap();
            prop_assert_eq!(seq.without_insertions(), MultimodalSequence::baseline(e.m(), e.n()));
            let pauses = if mode == Mode::ImageIntoText { k } else { 0 };
            prop_assert_eq!(seq.len(), e.m() + e.n() + plan.len() + pauses);
            let cap = if mode == Mode::TextIntoImage { e.n() } else { e.m() };
            prop_assert!(plan.len() <= cap);
            prop_assert!(plan.entries.windows(2).all(|w| w[0].source < w[1].source));
            prop_assert!(plan.entries.iter().all(|a| a.score >= tau));
        }
    }

    #[test]
    fn plans_are_nested_in_threshold(e in embedding_set(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let sim = build_similarity_matrix(&e);
        let wide = plan_text_into_image(&sim, lo).unwrap();
        let narrow = plan_text_into_image(&sim, hi).unwrap();
        prop_assert!(narrow.entries.iter().all(|x| wide.entries.contains(x)));
        prop_assert!(anchor_fraction(&narrow, e.n()) <= anchor_fraction(&wide, e.n()));
    }

    #[test]
    fn anchors_sit_right_after_their_targets(e in embedding_set(), tau in 0.0f64..=1.0) {
        let sim = build_similarity_matrix(&e);
        let plan = plan_text_into_image(&sim, tau).unwrap();
        let seq = insert_text_into_image(&e, &plan).unwrap();
        let tokens = seq.tokens();
        for a in &plan.entries {
            let at = seq.position_of(TokenKind::AnchorText, a.source).unwrap();
            let mut j = at - 1;
            while tokens[j].kind == TokenKind::AnchorText {
                prop_assert!(tokens[j].source_index.unwrap() < a.source);
                j -= 1;
            }
            prop_assert_eq!(tokens[j].kind, TokenKind::Image);
            prop_assert_eq!(tokens[j].source_index, Some(a.target));
        }
        let plan = plan_image_into_text(&sim, tau).unwrap();
        let cfg = ImageIntoTextConfig::new(tau, 0, false).unwrap();
        let seq = insert_image_plan(&e, &plan, &cfg).unwrap();
        prop_assert_eq!(seq.anchor_count(), plan.len());
    }

    #[test]
    fn parallel_similarity_is_bitwise_serial(e in embedding_set()) {
        prop_assert_eq!(build_similarity_matrix(&e), build_similarity_matrix_parallel(&e));
    }

    #[test]
    fn cosine_stays_in_range(e in embedding_set()) {
        for v in build_similarity_matrix(&e).values() {
            prop_assert!((-1.0..=1.0).contains(v));
        }
    }

    #[test]
    fn softmax_rows_sum_to_one(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let p = softmax(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn attention_rows_sum_to_one(e in embedding_set(), alpha in 0.01f64..2.0, tau in 0.0f64..1.0) {
        prop_assume!(e.dim() % 2 == 0);
        let sim = build_similarity_matrix(&e);
        let seq = insert_text_into_image(&e, &plan_text_into_image(&sim, tau).unwrap()).unwrap();
        for family in [BiasFamily::Linear, BiasFamily::Logarithmic] {
            let inst = AttentionInstance::from_sequence(&e, &seq, BiasModel::new(family, alpha).unwrap()).unwrap();
            for i in 0..inst.len() {
                prop_assert!((attention_row(&inst, i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bias_decreases_with_distance(alpha in 0.001f64..5.0, d1 in 0usize..1000, gap in 1usize..1000) {
        for family in [BiasFamily::Linear, BiasFamily::Logarithmic] {
            let b = BiasModel::new(family, alpha).unwrap();
            prop_assert_eq!(b.bias(0), 0.0);
            prop_assert!(b.bias(d1) > b.bias(d1 + gap));
        }
    }

    #[test]
    fn tuner_depends_only_on_score_order(
        raw in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..60),
    ) {
        prop_assume!(raw.iter().any(|r| r.1));
        let make = |f: &dyn Fn(f64) -> f64| {
            CorrespondenceLabels::new(
                raw.iter().enumerate().map(|(i, &(s, t))| LabeledPair { text: i, image: 0, is_true: t, score: f(s) }).collect(),
            )
            .unwrap()
        };
        let plain = optimal_threshold(&make(&|s| s)).unwrap();
        let squashed = optimal_threshold(&make(&|s| s * s * 0.5 + 0.1)).unwrap();
        prop_assert!((plain.f1_star - squashed.f1_star).abs() < 1e-12);

        let labels = make(&|s| s);
        for p in &plain.points {
            prop_assert!(plain.f1_star >= p.f1);
            let (precision, recall) = precision_recall(&labels, p.tau).unwrap();
            prop_assert_eq!((precision, recall), (p.precision, p.recall));
        }
        prop_assert!(plain.points.windows(2).all(|w| w[0].recall >= w[1].recall));
    }
}
