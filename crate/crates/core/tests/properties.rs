//! Property tests for the library invariants.

mod common;

use common::{small_task, tiny_model};
use linkprobe::dataset::vocab::{CLS, PAD, SEP};
use linkprobe::dataset::{
    find_subsequence, read_jsonl, to_jsonl_string, QAInstance, SpanAlignment,
};
use linkprobe::encoder::{encode_pair, predict, score_sentences, HeadGrid, HeadId};
use linkprobe::metrics::{
    a2q_link_weight, mac_mas_for_instance, mac_overlap_and_accuracy, maw_baseline,
    maw_for_head,
};
use linkprobe::numkernel::{softmax_rows, Tape};
use linkprobe::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-30.0f64..30.0, rows * cols)
        .prop_map(move |v| Tensor::new(&[rows, cols], v).unwrap())
}

/// A valid `[CLS] q [SEP] a [SEP] [PAD]*` sequence over ids `4..20`.
fn sentence() -> impl Strategy<Value = Vec<u32>> {
    (
        prop::collection::vec(4u32..20, 1..6),
        prop::collection::vec(4u32..20, 1..5),
        0usize..4,
    )
        .prop_map(|(q, a, pad)| {
            let mut s = vec![CLS];
            s.extend(q);
            s.push(SEP);
            s.extend(a);
            s.push(SEP);
            s.extend(std::iter::repeat_n(PAD, pad));
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn softmax_rows_are_stochastic_and_shift_invariant(m in matrix(4, 4), c in -50.0f64..50.0) {
        let y = softmax_rows(&m, None).unwrap();
        for i in 0..4 {
            prop_assert!(y.row(i).iter().all(|&v| v >= 0.0));
            prop_assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let shifted = softmax_rows(&m.map(|v| v + c), None).unwrap();
        prop_assert!(y.max_abs_diff(&shifted) < 1e-12);
    }

    #[test]
    fn tape_replay_is_bit_exact(a in matrix(3, 4), b in matrix(4, 3)) {
        let mut tape = Tape::new();
        let va = tape.leaf(a);
        let vb = tape.leaf(b);
        let c = tape.matmul(va, vb, false).unwrap();
        let s = tape.softmax_rows(c, None).unwrap();
        let g = tape.gelu(s).unwrap();
        let total = tape.sum(g).unwrap();
        let replayed = tape.replay().unwrap();
        for v in [va, vb, c, s, g, total] {
            prop_assert!(replayed[v.index()].bit_eq(tape.value(v)));
        }
    }

    #[test]
    fn captures_are_row_stochastic_with_zero_padding_columns(tokens in sentence()) {
        let p = tiny_model(2, 20);
        let e = encode_pair(&tokens, &p).unwrap();
        let valid = tokens.iter().rposition(|&t| t != PAD).unwrap() + 1;
        for (_, m) in e.attention.iter() {
            prop_assert_eq!(m.shape(), &[tokens.len(), tokens.len()]);
            for i in 0..tokens.len() {
                let row = m.row(i);
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                prop_assert!(row[valid..].iter().all(|&v| v == 0.0));
            }
        }
        prop_assert_eq!(e.hidden.iter().map(|h| h.rows()).collect::<Vec<_>>(), vec![tokens.len(); 2]);
    }

    #[test]
    fn prediction_ignores_constant_logit_shift(l in prop::collection::vec(-5.0f64..5.0, 5), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = l.iter().map(|v| v + c).collect();
        // A large shift can merge nearly equal logits; only compare when the gap survives.
        let mut sorted = l.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted[4] - sorted[3] > 1e-9);
        prop_assert_eq!(predict(&l), predict(&shifted));
    }

    #[test]
    fn a2q_matches_double_loop(
        m in matrix(12, 12),
        q in 1usize..6, b in 0usize..5, len_s in 1usize..3,
        off in 0usize..3, len_t in 1usize..3,
    ) {
        let b_s = 1 + b % q;
        let e_s = (b_s + len_s - 1).min(q);
        let b_t = q + 2 + off;
        let e_t = b_t + len_t - 1;
        prop_assume!(e_t < 12);
        let span = SpanAlignment { question_len: q, concept_begin: b_s, concept_end: e_s, answer_begin: b_t, answer_end: e_t };
        let mut total = 0.0;
        for i in b_s..=e_s {
            for j in b_t..=e_t {
                total += m.values()[j * 12 + i];
            }
        }
        let want = total / ((e_s - b_s + 1) * (e_t - b_t + 1)) as f64;
        prop_assert_eq!(a2q_link_weight(&m, &span).unwrap(), want);
    }

    #[test]
    fn subsequence_search_matches_brute_force(
        hay in prop::collection::vec(0u32..4, 0..12),
        needle in prop::collection::vec(0u32..4, 1..4),
    ) {
        let brute = (0..hay.len()).find(|&s| s + needle.len() <= hay.len() && hay[s..s + needle.len()] == needle[..]);
        prop_assert_eq!(find_subsequence(&hay, &needle), brute);
    }

    #[test]
    fn mac_mas_are_permutation_equivariant(seed in 0u64..1000, perm in Just(()).prop_perturb(|_, mut rng| {
        let mut p: Vec<usize> = (0..5).collect();
        for i in (1..5).rev() { p.swap(i, rng.random_range(0..=i)); }
        p
    })) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spans: Vec<SpanAlignment> = (0..5).map(|_| SpanAlignment { question_len: 3, concept_begin: 1, concept_end: 2, answer_begin: 5, answer_end: 6 }).collect();
        let grids: Vec<HeadGrid<Tensor>> = (0..5)
            .map(|_| HeadGrid::from_fn(1, 2, |_| Tensor::from_fn(&[8, 8], |_| rng.random::<f64>())))
            .collect();
        let refs: Vec<&HeadGrid<Tensor>> = grids.iter().collect();
        let permuted: Vec<&HeadGrid<Tensor>> = perm.iter().map(|&k| &grids[k]).collect();
        for h in [HeadId::new(0, 0), HeadId::new(0, 1)] {
            let a = mac_mas_for_instance(&refs, &spans, h).unwrap();
            let b = mac_mas_for_instance(&permuted, &spans, h).unwrap();
            // Candidate perm[k] sits at slot k after permuting.
            prop_assert_eq!(perm[b.mac - 1] + 1, a.mac);
            prop_assert_eq!(perm[b.mas - 1] + 1, a.mas);
        }
    }

    #[test]
    fn mac_rates_are_in_unit_interval(picks in prop::collection::vec(1usize..=5, 1..40), seed in 0u64..100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds: Vec<usize> = picks.iter().map(|_| rng.random_range(1..=5)).collect();
        let golds: Vec<usize> = picks.iter().map(|_| rng.random_range(1..=5)).collect();
        let grids: Vec<HeadGrid<usize>> = picks.iter().map(|&p| HeadGrid::from_vec(1, 1, vec![p]).unwrap()).collect();
        let s = mac_overlap_and_accuracy(&grids, &preds, &golds).unwrap();
        let again = mac_overlap_and_accuracy(&grids, &preds, &golds).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.overlap[0]) && (0.0..=1.0).contains(&s.accuracy[0]));
        prop_assert_eq!(s, again);
        let same = mac_overlap_and_accuracy(&grids, &picks, &golds).unwrap();
        prop_assert_eq!(same.overlap[0], 1.0);
    }
}

#[test]
fn baseline_formula_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let spans: Vec<SpanAlignment> = (0..50)
        .map(|_| {
            let q = rng.random_range(3..12);
            let b = rng.random_range(1..=q);
            let e = (b + rng.random_range(0..3)).min(q);
            SpanAlignment { question_len: q, concept_begin: b, concept_end: e, answer_begin: q + 2, answer_end: q + 2 }
        })
        .collect();
    let formula = maw_baseline(&spans).unwrap();
    let draws = 100_000;
    let mut hits = 0usize;
    for k in 0..draws {
        let s = &spans[k % spans.len()];
        let link: Vec<f64> = (0..s.question_len).map(|_| rng.random::<f64>()).collect();
        hits += usize::from(maw_for_head(&link, s).hit);
    }
    let mc = hits as f64 / draws as f64;
    assert!((mc - formula).abs() < 0.01, "monte carlo {mc} vs formula {formula}");
}

#[test]
fn generated_data_roundtrips_and_gold_is_uniform() {
    let task = small_task(1500, 300);
    let text = to_jsonl_string(&task.train_raw);
    assert_eq!(read_jsonl(text.as_bytes()).unwrap(), task.train_raw);
    let n = task.train_raw.len() as f64;
    for k in 1..=5 {
        let share = task.train_raw.iter().filter(|i| i.gold_index == k).count() as f64 / n;
        assert!((share - 0.2).abs() <= 0.03, "gold {k}: {share}");
    }
    for inst in task.train_raw.iter().chain(&task.dev_raw) {
        assert!(inst.gold_in_graph(&task.graph), "{}", inst.id);
    }
}

#[test]
fn identical_candidates_get_identical_logits() {
    let task = small_task(20, 1);
    let p = tiny_model(2, task.vocab.len());
    let mut inst: QAInstance = task.train_raw[0].clone();
    inst.candidates[1] = inst.candidates[0].clone();
    let t = linkprobe::dataset::tokenize_and_align(&inst, &task.vocab).unwrap();
    let s: Vec<&[u32]> = t.sentences.iter().map(Vec::as_slice).collect();
    let l = score_sentences(&s, &p, None).unwrap();
    assert_eq!(l[0].to_bits(), l[1].to_bits());
}
