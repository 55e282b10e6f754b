//! Recursive updates against brute-force enumeration of the joint model,
//! plus randomized properties of the update engine.

mod common;

use common::{brute_force_posterior, max_abs_diff, random_instance, RawEvidence};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsvp_bayes::models::{generative_to_discriminative, ConversionPrior};
use rsvp_bayes::{
    apply_query, init_posterior, update_discriminative, update_generative, Alphabet, LabelPrior, LikelihoodPair,
    PosteriorState, QueryEvent,
};

fn run_recursive(prior: &[f64], events: &[(usize, RawEvidence)], label_prior: LabelPrior) -> PosteriorState {
    let alphabet = Alphabet::with_size(prior.len()).unwrap();
    let mut state = init_posterior(&alphabet, Some(prior)).unwrap();
    for (q, ev) in events {
        let event = QueryEvent::new(*q, ev.pair());
        state = match ev {
            RawEvidence::Disc { .. } => update_discriminative(&state, &event, label_prior).unwrap(),
            RawEvidence::Gen { .. } => update_generative(&state, &event).unwrap(),
        };
    }
    state
}

#[test]
fn four_symbol_example_matches_joint() {
    let events = [(2, RawEvidence::Disc { pos: 0.9 })];
    let prior = [0.25; 4];
    let got = run_recursive(&prior, &events, LabelPrior::new(0.25).unwrap()).probs();
    let want = brute_force_posterior(&prior, &events, 0.25);
    assert!(max_abs_diff(&got, &want) < 1e-12, "{got:?} vs {want:?}");
    // 0.9/0.25 = 3.6 against 0.1/0.75 for the others
    assert!((want[2] - 3.6 / (3.6 + 3.0 * 0.1 / 0.75)).abs() < 1e-12);
}

#[test]
fn five_symbols_three_events_match_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let inst = random_instance(&mut rng, 5..=5, 3);
        let got = run_recursive(&inst.prior, &inst.events, inst.label_prior()).probs();
        let want = brute_force_posterior(&inst.prior, &inst.events, inst.p_pos);
        assert!(max_abs_diff(&got, &want) < 1e-9);
    }
}

#[test]
fn random_instances_match_joint() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let inst = random_instance(&mut rng, 2..=6, 6);
        let got = run_recursive(&inst.prior, &inst.events, inst.label_prior());
        let want = brute_force_posterior(&inst.prior, &inst.events, inst.p_pos);
        assert!(max_abs_diff(&got.probs(), &want) < 1e-9);
        assert_eq!(got.step(), inst.events.len() as u64);
    }
}

fn disc_event(a: usize) -> impl Strategy<Value = (usize, f64)> {
    (0..a, 0.001f64..0.999)
}

fn gen_event(a: usize) -> impl Strategy<Value = (usize, f64, f64)> {
    (0..a, 1e-6f64..10.0, 1e-6f64..10.0)
}

fn sum_probs(state: &PosteriorState) -> f64 {
    state.probs().iter().sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn discriminative_updates_stay_normalized(
        (a, events, p_pos) in (2usize..30).prop_flat_map(|a| (Just(a), prop::collection::vec(disc_event(a), 0..40), 0.01f64..0.99))
    ) {
        let prior = LabelPrior::new(p_pos).unwrap();
        let mut state = init_posterior(&Alphabet::with_size(a).unwrap(), None).unwrap();
        for (q, pos) in events {
            state = update_discriminative(&state, &QueryEvent::new(q, LikelihoodPair::discriminative(pos, 1.0 - pos).unwrap()), prior).unwrap();
            prop_assert!((sum_probs(&state) - 1.0).abs() < 1e-12);
            prop_assert!(state.probs().iter().all(|p| *p >= 0.0));
            prop_assert!(state.log_probs().iter().any(|l| l.is_finite()));
        }
    }

    #[test]
    fn query_order_does_not_matter(
        (a, events, seed) in (2usize..12).prop_flat_map(|a| (Just(a), prop::collection::vec(gen_event(a), 1..12), any::<u64>()))
    ) {
        let alphabet = Alphabet::with_size(a).unwrap();
        let state = init_posterior(&alphabet, None).unwrap();
        let qs: Vec<QueryEvent> = events.iter().map(|&(q, p, n)| QueryEvent::new(q, LikelihoodPair::generative(p, n).unwrap())).collect();
        let mut shuffled = qs.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let prior = LabelPrior::uniform_over(a).unwrap();
        let x = apply_query(&state, &qs, prior).unwrap();
        let y = apply_query(&state, &shuffled, prior).unwrap();
        prop_assert!(max_abs_diff(&x.probs(), &y.probs()) < 1e-12);
    }

    #[test]
    fn generative_scale_invariance((a, q, p, n) in (2usize..10).prop_flat_map(|a| (Just(a), 0..a, 1e-3f64..5.0, 1e-3f64..5.0)), c in 1e-6f64..1e6) {
        let s = init_posterior(&Alphabet::with_size(a).unwrap(), None).unwrap();
        let x = update_generative(&s, &QueryEvent::new(q, LikelihoodPair::generative(p, n).unwrap())).unwrap();
        let y = update_generative(&s, &QueryEvent::new(q, LikelihoodPair::generative(c * p, c * n).unwrap())).unwrap();
        prop_assert!(max_abs_diff(&x.probs(), &y.probs()) < 1e-12);
    }

    #[test]
    fn generative_equals_converted_discriminative(
        (a, events) in (2usize..10).prop_flat_map(|a| (Just(a), prop::collection::vec(gen_event(a), 1..10))),
        p_pos in 0.01f64..0.99,
    ) {
        let state = init_posterior(&Alphabet::with_size(a).unwrap(), None).unwrap();
        let prior = LabelPrior::new(p_pos).unwrap();
        let mut g = state.clone();
        let mut d = state;
        for (q, dp, dn) in events {
            let pair = LikelihoodPair::generative(dp, dn).unwrap();
            g = update_generative(&g, &QueryEvent::new(q, pair)).unwrap();
            let converted = generative_to_discriminative(&pair, ConversionPrior::Empirical(p_pos)).unwrap();
            d = update_discriminative(&d, &QueryEvent::new(q, converted), prior).unwrap();
        }
        prop_assert!(max_abs_diff(&g.probs(), &d.probs()) < 1e-9);
    }

    #[test]
    fn informative_evidence_raises_queried_symbol((a, q, pos) in (2usize..20).prop_flat_map(|a| (Just(a), 0..a, 0.01f64..0.99)), p_pos in 0.01f64..0.99) {
        let prior = LabelPrior::new(p_pos).unwrap();
        let s = init_posterior(&Alphabet::with_size(a).unwrap(), None).unwrap();
        let t = update_discriminative(&s, &QueryEvent::new(q, LikelihoodPair::discriminative(pos, 1.0 - pos).unwrap()), prior).unwrap();
        let before = s.log_probs()[q] - s.log_probs()[(q + 1) % a];
        let after = t.log_probs()[q] - t.log_probs()[(q + 1) % a];
        if pos / p_pos > (1.0 - pos) / (1.0 - p_pos) {
            prop_assert!(after > before);
        }
    }
}
