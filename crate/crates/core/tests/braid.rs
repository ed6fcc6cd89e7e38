use antitangle_core::braid::{
    braid_equal, confluence_oracle, inversion_count, iteration_cap, reduces_to_identity, simplify, BraidWord,
    ConfluenceVerdict, Letter, Rule,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_word(rng: &mut ChaCha8Rng, max_len: usize, strands: usize) -> BraidWord {
    let len = rng.gen_range(0..=max_len);
    let letters = (0..len)
        .map(|_| Letter {
            generator: rng.gen_range(1..strands as u16),
            inverse: rng.gen_bool(0.5),
        })
        .collect();
    BraidWord::from_letters(strands, letters).unwrap()
}

fn word_strategy(max_len: usize, max_strands: usize) -> impl Strategy<Value = BraidWord> {
    (2..=max_strands).prop_flat_map(move |n| {
        prop::collection::vec((1..n as u16, any::<bool>()), 0..=max_len).prop_map(move |v| {
            let letters = v
                .into_iter()
                .map(|(generator, inverse)| Letter { generator, inverse })
                .collect();
            BraidWord::from_letters(n, letters).unwrap()
        })
    })
}

fn w(s: &str) -> BraidWord {
    BraidWord::parse(s, None).unwrap()
}

#[test]
fn worked_examples_match_exhaustive_search() {
    for s in ["s1 s2 S2 S1", "s1 s2 s1 S2 S1 S2"] {
        let word = w(s);
        assert_eq!(reduces_to_identity(&word, 100_000), Some(true), "{s}");
        assert!(simplify(&word).unwrap().0.is_empty(), "{s}");
    }
}

#[test]
fn inversions_by_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..500 {
        let word = random_word(&mut rng, 30, 7);
        let g: Vec<u16> = word.letters().iter().map(|l| l.generator).collect();
        let mut brute = 0;
        for k in 0..g.len() {
            for l in (k + 1)..g.len() {
                if g[k] > g[l] {
                    brute += 1;
                }
            }
        }
        assert_eq!(inversion_count(&word), brute);
    }
}

#[test]
fn random_words_are_confluent_under_cancel_and_commute() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let strands = rng.gen_range(2..=4);
        let word = random_word(&mut rng, 10, strands);
        let verdict = confluence_oracle(&word, 200_000);
        assert!(verdict.is_confluent(), "{word}: {verdict:?}");
    }
}

#[test]
fn confluent_normal_form_agrees_with_simplify_when_no_braid_move_fires() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..500 {
        let word = random_word(&mut rng, 10, 5);
        let (nf, trace) = simplify(&word).unwrap();
        if trace.count(Rule::Braid) > 0 {
            continue;
        }
        match confluence_oracle(&word, 200_000) {
            ConfluenceVerdict::Confluent { normal_form } => assert_eq!(normal_form.letters(), nf.letters()),
            v => panic!("{word}: {v:?}"),
        }
    }
}

#[test]
fn simplify_is_sound_against_free_group_action() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let strands = rng.gen_range(2..=5);
        let word = random_word(&mut rng, 14, strands);
        let (nf, _) = simplify(&word).unwrap();
        assert!(braid_equal(&word, &nf), "{word} -> {nf}");
    }
}

#[test]
fn simplify_is_sound_against_unrestricted_rewriting() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut decided = 0;
    for _ in 0..300 {
        let word = random_word(&mut rng, 6, 4);
        let (nf, _) = simplify(&word).unwrap();
        let probe = word.concat(&nf.inverse());
        if let Some(v) = reduces_to_identity(&probe, 50_000) {
            assert!(v, "{word} -> {nf}");
            decided += 1;
        }
    }
    assert!(decided > 250, "too many inconclusive searches: {decided}");
}

#[test]
fn long_random_words_terminate() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..2000 {
        let strands = rng.gen_range(2..=6);
        let word = random_word(&mut rng, 50, strands);
        let (_, trace) = simplify(&word).unwrap();
        assert!(trace.steps.len() <= iteration_cap(word.len()));
    }
}

proptest! {
    #[test]
    fn idempotent(word in word_strategy(40, 6)) {
        let (nf, _) = simplify(&word).unwrap();
        let (nf2, trace2) = simplify(&nf).unwrap();
        prop_assert_eq!(&nf, &nf2);
        prop_assert!(trace2.steps.is_empty());
    }

    #[test]
    fn measure_decreases(word in word_strategy(40, 6)) {
        let (nf, trace) = simplify(&word).unwrap();
        // Braid moves may raise I on their own; the measure is checked
        // between consecutive braid moves, once the cancellations and
        // commutations each one enables have run.
        let mut checkpoint = None;
        for step in &trace.steps {
            match step.rule {
                Rule::Cancel => {
                    prop_assert_eq!(step.after.0 + 2, step.before.0);
                }
                Rule::Commute => {
                    prop_assert_eq!(step.after.0, step.before.0);
                    prop_assert_eq!(step.after.1 + 1, step.before.1);
                }
                Rule::Braid => {
                    if let Some(c) = checkpoint {
                        prop_assert!(step.before < c);
                    }
                    checkpoint = Some(step.before);
                }
            }
        }
        prop_assert!(nf.measure() <= word.measure());
        if let Some(c) = checkpoint {
            prop_assert!(nf.measure() < c);
        }
    }

    #[test]
    fn inverse_cancels(word in word_strategy(12, 5)) {
        let (nf, _) = simplify(&word.concat(&word.inverse())).unwrap();
        prop_assert!(nf.is_empty());
    }

    #[test]
    fn text_round_trip(word in word_strategy(20, 6)) {
        let back = BraidWord::parse(&word.to_string(), Some(word.strands())).unwrap();
        prop_assert_eq!(back, word);
    }
}
