//! Randomized property suite for the pipeline and model invariants.

use proptest::prelude::*;

use edit_dynamics::episodes::{segment_episodes, GapPolicy};
use edit_dynamics::ingest::{PageHistory, Revision};
use edit_dynamics::model::{self, GroupSpectrum, ModelParams};
use edit_dynamics::ngram::{ngram_spectrum, work_measure};

fn revision(id: u64, ts: i64, user: u8, delta: i64) -> Revision {
    Revision {
        rev_id: id,
        parent_id: if id == 1 { None } else { Some(id - 1) },
        timestamp: ts,
        user_key: format!("user{user}"),
        content_hash: format!("h{id}"),
        byte_size: 100,
        size_delta: delta,
        comment: String::new(),
        tags: vec![],
        is_minor: false,
        is_bot: false,
    }
}

prop_compose! {
    fn arbitrary_history()(
        gaps in prop::collection::vec(0i64..500_000, 0..40),
        users in prop::collection::vec(0u8..6, 41),
    ) -> PageHistory {
        let mut ts = 0i64;
        let mut revs = vec![revision(1, 0, users[0], 10)];
        for (i, g) in gaps.iter().enumerate() {
            ts += g;
            revs.push(revision(i as u64 + 2, ts, users[i + 1], 5));
        }
        PageHistory::canonicalize(1, "P".into(), revs).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // Episode ranges partition the revision index set, in order.
    #[test]
    fn episode_partition_property(history in arbitrary_history(), gap_s in 1i64..600_000) {
        let eps = segment_episodes(&history, &GapPolicy::absolute(gap_s));
        let mut covered = Vec::new();
        for e in &eps {
            for i in e.revision_range.0..=e.revision_range.1 {
                covered.push(i);
            }
            prop_assert!(e.n_users >= 1);
            prop_assert!(e.n_users as usize <= e.revision_range.1 - e.revision_range.0 + 1);
            prop_assert!(e.n_users_human <= e.n_users);
        }
        prop_assert_eq!(covered, (0..history.len()).collect::<Vec<_>>());
    }

    // Raising the gap threshold never increases the episode count.
    #[test]
    fn threshold_monotonicity(history in arbitrary_history(), gap_s in 1i64..300_000, extra in 0i64..300_000) {
        let small = segment_episodes(&history, &GapPolicy::absolute(gap_s)).len();
        let large = segment_episodes(&history, &GapPolicy::absolute(gap_s + extra)).len();
        prop_assert!(large <= small);
    }

    // Spectrum total equals max(0, symbols - n + 1) on whitespace-free text.
    #[test]
    fn ngram_total_formula(text in "[a-z0-9]{0,60}", n in 1usize..6) {
        let s = ngram_spectrum(&text, n);
        let symbols = text.chars().count();
        let expected = if symbols < n { 0 } else { symbols - n + 1 };
        prop_assert_eq!(s.total as usize, expected);
    }

    // work(x, x) = 0 and work(a, b) = work(b, a).
    #[test]
    fn work_measure_identity_and_symmetry(a in "[ -~\n]{0,80}", b in "[ -~\n]{0,80}") {
        prop_assert_eq!(work_measure(Some(&a), &a), 0);
        prop_assert_eq!(work_measure(Some(&a), &b), work_measure(Some(&b), &a));
    }

    // pmf(N+1)/pmf(N) matches the closed-form ratio independent of z.
    #[test]
    fn pmf_pointwise_ratio_identity(beta in 0.5f64..2.0, n_bar in 2.0f64..30.0) {
        let p = ModelParams::<f64>::new(beta, n_bar).unwrap();
        let d = model::pmf(&p, p.default_n_max()).unwrap();
        for n in 2..d.n_max {
            if d.prob(n) < 1e-250 {
                break;
            }
            let lhs = d.prob(n + 1) / d.prob(n);
            let nu_a = p.nu(n).unwrap();
            let nu_b = p.nu(n + 1).unwrap();
            let rhs = (nu_b / nu_a).sqrt() * (-(nu_b - nu_a)).exp();
            prop_assert!((lhs - rhs).abs() < 1e-12, "N={}: {} vs {}", n, lhs, rhs);
        }
    }

    // Scaling all counts by a constant leaves the fit argmax unchanged.
    #[test]
    fn likelihood_scale_invariance_of_fit(
        seed_counts in prop::collection::vec(1u64..50, 4..10),
        scale in 2u64..20,
    ) {
        let mut a = GroupSpectrum::new();
        let mut b = GroupSpectrum::new();
        for (i, &c) in seed_counts.iter().enumerate() {
            let n = i as u32 + 2;
            a.add(n, c * 30);
            b.add(n, c * 30 * scale);
        }
        let (pa, _) = model::fit::<f64>(&a).unwrap();
        let (pb, _) = model::fit::<f64>(&b).unwrap();
        prop_assert!((pa.beta - pb.beta).abs() <= 2e-4, "{} vs {}", pa.beta, pb.beta);
        prop_assert_eq!(pa.n_bar, pb.n_bar);
    }
}
