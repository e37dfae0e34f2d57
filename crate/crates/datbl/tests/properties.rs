//! Property tests for the crate's structural invariants: tokenizer laws,
//! corpus round-trips, cue selection monotonicity, superstring-filter
//! laws, training monotonicity, and snapshot application
//! order-independence.

use std::collections::BTreeSet;

use proptest::prelude::*;

use datbl::corpus::{
    apply_clusters, feature_view, parse_corpus, serialize_corpus, tokenize, ClusterMap, Corpus,
    Dialogue, Tag, TagColumn, Utterance, PUNCTUATION_ALPHABET,
};
use datbl::cues::{
    conditional_entropy, enumerate_substrings, filter_superstrings, select_cues, Cue, CueConfig,
    CueSet, SubstringMode,
};
use datbl::eval::t_test;
use datbl::tbl::{
    apply_rule, train_exhaustive, Condition, Rule, TemplateSet, TrainingConfig,
};

const WORDS: [&str; 10] =
    ["no", "yes", "monday", "see", "you", "meet", "ok", "sounds", "maybe", "later"];
const TAGS: [&str; 4] = ["SUGGEST", "REJECT", "ACCEPT", "GREET"];

fn tag(label: &str) -> Tag {
    Tag::new(label).unwrap()
}

prop_compose! {
    fn arb_utterance()(
        speaker in prop::sample::select(vec!["A", "B"]),
        words in prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..5),
        tag_idx in 0..TAGS.len(),
    ) -> (String, Vec<String>, Tag) {
        (
            speaker.to_string(),
            words.into_iter().map(str::to_string).collect(),
            tag(TAGS[tag_idx]),
        )
    }
}

prop_compose! {
    fn arb_corpus()(
        dialogues in prop::collection::vec(prop::collection::vec(arb_utterance(), 1..8), 1..4),
    ) -> Corpus {
        let dialogues: Vec<Dialogue> = dialogues
            .into_iter()
            .enumerate()
            .map(|(d, utts)| Dialogue {
                id: format!("d{d}"),
                utterances: utts
                    .into_iter()
                    .enumerate()
                    .map(|(i, (speaker, tokens, gold))| Utterance {
                        speaker,
                        tokens,
                        punctuation: BTreeSet::new(),
                        gold_tag: gold,
                        working_tag: Tag::NONE,
                        index_in_dialogue: i,
                    })
                    .collect(),
            })
            .collect();
        let tag_set = dialogues
            .iter()
            .flat_map(|d| d.utterances.iter().map(|u| u.gold_tag.clone()))
            .collect();
        Corpus { dialogues, tag_set }
    }
}

fn arb_condition() -> impl Strategy<Value = Condition> {
    prop_oneof![
        prop::sample::select(WORDS.to_vec()).prop_map(|w| Condition::ContainsCue(w.to_string())),
        (1usize..5).prop_map(Condition::LengthLessThan),
        any::<bool>().prop_map(Condition::ChangeOfSpeakerIs),
        (prop::sample::select(vec![-2i32, -1, 1, 2]), 0..=TAGS.len()).prop_map(|(off, t)| {
            Condition::TagAtOffset {
                offset: off,
                tag: if t == TAGS.len() { Tag::NONE } else { tag(TAGS[t]) },
            }
        }),
    ]
}

prop_compose! {
    fn arb_rule()(
        conds in prop::collection::vec(arb_condition(), 0..3),
        tag_idx in 0..TAGS.len(),
    ) -> Option<Rule> {
        Rule::new(conds, tag(TAGS[tag_idx])).ok()
    }
}

proptest! {
    #[test]
    fn tokenizer_laws(raw in "[A-Za-z',.?!;:$ -]{0,40}") {
        let (tokens, punct) = tokenize(&raw);
        prop_assert!(tokens.iter().all(|t| !t.is_empty()));
        prop_assert!(punct.iter().all(|p| PUNCTUATION_ALPHABET.contains(p)));
        prop_assert!(tokens
            .iter()
            .all(|t| t.chars().all(|c| !PUNCTUATION_ALPHABET.contains(&c))));
        // tokenization is a fixed point on its own output
        let (again, extra_punct) = tokenize(&tokens.join(" "));
        prop_assert_eq!(&again, &tokens);
        prop_assert!(extra_punct.is_empty());
    }

    #[test]
    fn corpus_roundtrip(
        header in any::<bool>(),
        lines in prop::collection::vec(
            (
                prop::sample::select(vec!["A", "B"]),
                prop::sample::select(vec!["?", "SUGGEST", "REJECT", "ACCEPT", "GREET"]),
                prop::collection::vec(
                    prop::sample::select(vec!["No,", "can't.", "monday", "'bout", "OK", "see", "you!", "4-5", "y'all's"]),
                    0..5,
                ),
            ),
            0..10,
        ),
    ) {
        let mut text = String::new();
        if header {
            text.push_str("#tags: SUGGEST REJECT ACCEPT GREET\n");
        }
        text.push_str("#dialogue: d0\n");
        for (i, (speaker, tag, words)) in lines.iter().enumerate() {
            if i == 5 {
                text.push_str("#dialogue: d1\n");
            }
            text.push_str(&format!("{speaker}\t{tag}\t{}\n", words.join(" ")));
        }
        let once = parse_corpus(&text).unwrap();
        let again = parse_corpus(&serialize_corpus(&once, TagColumn::Gold)).unwrap();
        prop_assert_eq!(once, again);
    }

    #[test]
    fn cluster_substitution_laws(corpus in arb_corpus()) {
        let map = ClusterMap::parse("$weekday$: monday tuesday\n$verb$: see meet\n").unwrap();
        let once = apply_clusters(&corpus, &map);
        prop_assert_eq!(apply_clusters(&once, &map), once.clone());
        prop_assert_eq!(once.utterance_count(), corpus.utterance_count());
        for ((_, _, a), (_, _, b)) in corpus.iter_utterances().zip(once.iter_utterances()) {
            prop_assert_eq!(a.tokens.len(), b.tokens.len());
        }
    }

    #[test]
    fn feature_view_stays_inside_dialogue(corpus in arb_corpus(), w in 1usize..4) {
        for (d, dlg) in corpus.dialogues.iter().enumerate() {
            let n = dlg.utterances.len();
            let first = feature_view(&corpus, d, 0, w).unwrap();
            prop_assert!(first.preceding_tags.iter().all(Tag::is_none));
            prop_assert!(first.change_of_speaker);
            let last = feature_view(&corpus, d, n - 1, w).unwrap();
            prop_assert!(last.following_tags.iter().all(Tag::is_none));
        }
    }

    #[test]
    fn entropy_bounds_hold(corpus in arb_corpus()) {
        let bound = (corpus.tag_set.len() as f64).log2();
        for stats in enumerate_substrings(&corpus, 3).values() {
            let h = conditional_entropy(stats).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= bound + 1e-12);
        }
    }

    #[test]
    fn cue_selection_is_monotone(
        corpus in arb_corpus(),
        theta1 in 0.1f64..2.0,
        theta2 in 0u32..4,
        looser_t1 in 0.0f64..1.0,
        looser_t2 in 0u32..3,
    ) {
        let base = CueConfig {
            theta1: Some(theta1),
            theta2,
            mode: SubstringMode::Entropy,
            ..CueConfig::default()
        };
        let loose = CueConfig {
            theta1: Some(theta1 + looser_t1),
            theta2: theta2.saturating_sub(looser_t2),
            ..base.clone()
        };
        let strict_set = select_cues(&corpus, &base).unwrap();
        let loose_set = select_cues(&corpus, &loose).unwrap();
        let stats = enumerate_substrings(&corpus, 3);
        for cue in strict_set.cues() {
            prop_assert!(stats.contains_key(&cue.substring));
            prop_assert!(loose_set.contains(&cue.substring));
        }
    }

    #[test]
    fn superstring_filter_laws(
        cues in prop::collection::vec(
            (
                prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..4),
                0u8..8,
                1u32..50,
            ),
            0..20,
        ),
    ) {
        // quantized entropies so equal scores actually occur
        let input = CueSet::new(
            cues.into_iter()
                .map(|(words, ent, count)| Cue {
                    substring: words.join(" "),
                    count,
                    entropy: f64::from(ent) * 0.25,
                })
                .collect(),
        );
        let output = filter_superstrings(&input);

        let is_token_substring = |needle: &str, hay: &str| {
            let n: Vec<&str> = needle.split(' ').collect();
            let h: Vec<&str> = hay.split(' ').collect();
            n.len() < h.len() && h.windows(n.len()).any(|w| w == n.as_slice())
        };

        // output is a subset of the input
        for cue in output.cues() {
            prop_assert!(input.contains(&cue.substring));
        }
        // no survivor is subsumed by an input cue with better-or-equal entropy
        for cue in output.cues() {
            for other in input.cues() {
                if is_token_substring(&other.substring, &cue.substring) {
                    prop_assert!(other.entropy > cue.entropy);
                }
            }
        }
        // single-token cues always survive
        for cue in input.cues() {
            if !cue.substring.contains(' ') {
                prop_assert!(output.contains(&cue.substring));
            }
        }
        // idempotence
        prop_assert_eq!(filter_superstrings(&output), output);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Each learned rule raises the weighted correct count by exactly its
    /// recorded improvement score, and every score clears theta.
    #[test]
    fn training_is_monotone(corpus in arb_corpus(), unit in any::<bool>()) {
        let weights: Vec<f64> = if unit {
            vec![1.0; corpus.utterance_count()]
        } else {
            (0..corpus.utterance_count()).map(|i| 1.0 + (i % 3) as f64 * 0.5).collect()
        };
        let cue_config = CueConfig { mode: SubstringMode::AllNgrams, ..CueConfig::default() };
        let cues = datbl::cues::substring_source(&corpus, &cue_config, None).unwrap();
        let config = TrainingConfig {
            weights: Some(weights.clone()),
            ..TrainingConfig::default()
        };
        let mut trained = corpus.clone();
        let report =
            train_exhaustive(&mut trained, &TemplateSet::default_set(), &cues, &config).unwrap();

        let weighted_correct = |c: &Corpus| -> f64 {
            c.iter_utterances()
                .enumerate()
                .filter(|(_, (_, _, u))| !u.gold_tag.is_none() && u.working_tag == u.gold_tag)
                .map(|(i, _)| weights[i])
                .sum()
        };

        let mut replay = corpus.clone();
        replay.reset_working_tags();
        let mut previous = weighted_correct(&replay);
        for (rule, pass) in report.model().rules().iter().zip(report.passes()) {
            prop_assert!(pass.score >= config.theta);
            apply_rule(rule, &mut replay);
            let now = weighted_correct(&replay);
            prop_assert!((now - previous - pass.score).abs() < 1e-9);
            previous = now;
        }
        prop_assert_eq!(&replay, &trained);
    }

    /// Snapshot application commutes with dialogue order.
    #[test]
    fn rule_application_is_order_independent(
        corpus in arb_corpus(),
        rule in arb_rule(),
        order_seed in 0usize..24,
    ) {
        prop_assume!(rule.is_some());
        let rule = rule.unwrap();

        let mut forward = corpus.clone();
        apply_rule(&rule, &mut forward);

        let mut permuted = corpus.clone();
        let rotation = order_seed % permuted.dialogues.len().max(1);
        permuted.dialogues.rotate_left(rotation);
        apply_rule(&rule, &mut permuted);

        for dlg in &forward.dialogues {
            let twin = permuted.dialogues.iter().find(|d| d.id == dlg.id).unwrap();
            for (a, b) in dlg.utterances.iter().zip(&twin.utterances) {
                prop_assert_eq!(&a.working_tag, &b.working_tag);
            }
        }
    }

    /// Tagging never reads gold tags.
    #[test]
    fn tagging_ignores_gold(corpus in arb_corpus(), scramble in 0..TAGS.len()) {
        let cue_config = CueConfig { mode: SubstringMode::AllNgrams, ..CueConfig::default() };
        let cues = datbl::cues::substring_source(&corpus, &cue_config, None).unwrap();
        let mut trained = corpus.clone();
        let report = train_exhaustive(
            &mut trained,
            &TemplateSet::default_set(),
            &cues,
            &TrainingConfig::default(),
        )
        .unwrap();

        let mut scrambled = corpus.clone();
        for dlg in &mut scrambled.dialogues {
            for utt in &mut dlg.utterances {
                utt.gold_tag = tag(TAGS[scramble]);
            }
        }
        let a = datbl::tbl::tag_corpus(report.model(), &corpus);
        let b = datbl::tbl::tag_corpus(report.model(), &scrambled);
        for ((_, _, ua), (_, _, ub)) in a.iter_utterances().zip(b.iter_utterances()) {
            prop_assert_eq!(&ua.working_tag, &ub.working_tag);
        }
    }

    #[test]
    fn t_test_is_antisymmetric(
        a in prop::collection::vec(0.0f64..1.0, 2..8),
        b in prop::collection::vec(0.0f64..1.0, 2..8),
    ) {
        let ab = t_test(&a, &b).unwrap();
        let ba = t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.t, -ba.t);
        prop_assert_eq!(ab.p, ba.p);
        prop_assert!((0.0..=1.0).contains(&ab.p));
    }
}
