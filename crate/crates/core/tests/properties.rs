use kvc_core::corpus::{
    parse_corpus, write_corpus, Corpus, CorpusKind, Gender, KeystrokeEvent, Session, SubjectRecord,
};
use kvc_core::features::extract_features;
use kvc_core::metrics::{compute_auc, compute_eer, det_curve, error_rates_at_threshold};
use proptest::prelude::*;

/// (key, gap before press, hold) triples.
fn events() -> impl Strategy<Value = Vec<(u8, u64, u64)>> {
    prop::collection::vec((any::<u8>(), 0u64..400, 0u64..300), 1..12)
}

fn session(id: String, raw: &[(u8, u64, u64)], origin: u64) -> Session {
    let mut t = origin;
    let events = raw
        .iter()
        .map(|&(k, gap, hold)| {
            t += gap;
            KeystrokeEvent::new(k, t, t + hold).unwrap()
        })
        .collect();
    Session::new(id, events).unwrap()
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    // Coarse grid so that ties occur.
    prop::collection::vec((0u32..200).prop_map(|v| v as f64 / 200.0), 1..150)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_round_trips(subjects in prop::collection::vec(prop::collection::vec(events(), 1..4), 1..4)) {
        let records: Vec<SubjectRecord> = subjects
            .iter()
            .enumerate()
            .map(|(s, sessions)| {
                let sessions = sessions
                    .iter()
                    .enumerate()
                    .map(|(k, raw)| session(format!("u{s}_{k}"), raw, 0))
                    .collect();
                SubjectRecord::new(format!("u{s}"), Gender::Unspecified, None, sessions).unwrap()
            })
            .collect();
        let corpus = Corpus::development(records).unwrap();
        let mut buf = Vec::new();
        write_corpus(&corpus, &mut buf).unwrap();
        let parsed = parse_corpus(buf.as_slice(), CorpusKind::Development).unwrap();
        prop_assert_eq!(parsed, corpus);
    }

    #[test]
    fn features_ignore_time_origin(raw in events(), shift in 0u64..10_000_000) {
        let a = extract_features(&session("a".into(), &raw, 0));
        let b = extract_features(&session("a".into(), &raw, shift));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn press_interval_is_gap_plus_hold(raw in events()) {
        let seq = extract_features(&session("a".into(), &raw, 50));
        let rows = seq.rows();
        for r in &rows[..rows.len() - 1] {
            prop_assert!((r.ipt - (r.ikt + r.ht)).abs() < 1e-12);
        }
    }

    #[test]
    fn rates_are_staircase_monotone(g in scores(), i in scores(), t1 in 0.0f64..1.0, dt in 0.0f64..0.5) {
        let a = error_rates_at_threshold(&g, &i, t1).unwrap();
        let b = error_rates_at_threshold(&g, &i, t1 + dt).unwrap();
        prop_assert!(a.fmr >= b.fmr && a.fnmr <= b.fnmr);
        let curve = det_curve(&g, &i).unwrap();
        for w in curve.points().windows(2) {
            prop_assert!(w[0].fmr >= w[1].fmr && w[0].fnmr <= w[1].fnmr);
        }
    }

    #[test]
    fn metrics_are_rank_invariant(g in scores(), i in scores()) {
        let eer = compute_eer(&g, &i).unwrap();
        let auc = compute_auc(&g, &i).unwrap();
        let transforms: [fn(f64) -> f64; 2] = [|x| x * x * x, |x| 1.0 / (1.0 + (-x).exp())];
        for f in transforms {
            let g2: Vec<f64> = g.iter().map(|&x| f(x)).collect();
            let i2: Vec<f64> = i.iter().map(|&x| f(x)).collect();
            prop_assert!((compute_eer(&g2, &i2).unwrap() - eer).abs() < 1e-9);
            prop_assert!((compute_auc(&g2, &i2).unwrap() - auc).abs() < 1e-9);
        }
    }

    #[test]
    fn pooled_metrics_lie_between_subsets(g in scores(), n in 1usize..100, seed_a in scores(), seed_b in scores()) {
        let similar: Vec<f64> = seed_a.iter().cycle().take(n).copied().collect();
        let dissimilar: Vec<f64> = seed_b.iter().cycle().take(n).map(|x| x * 0.5).collect();
        let pooled: Vec<f64> = similar.iter().chain(&dissimilar).copied().collect();
        let auc = [compute_auc(&g, &similar).unwrap(), compute_auc(&g, &dissimilar).unwrap()];
        let p = compute_auc(&g, &pooled).unwrap();
        prop_assert!(p >= auc[0].min(auc[1]) - 1e-9 && p <= auc[0].max(auc[1]) + 1e-9);

        let eer = [compute_eer(&g, &similar).unwrap(), compute_eer(&g, &dissimilar).unwrap()];
        let p = compute_eer(&g, &pooled).unwrap();
        // Interpolation happens on each curve's own staircase, so allow one step.
        let step = 100.0 / (g.len().min(n) as f64);
        prop_assert!(p >= eer[0].min(eer[1]) - step && p <= eer[0].max(eer[1]) + step,
            "pooled {} vs subsets {:?}", p, eer);
    }
}
