mod common;

use infoshare::equilibrium::{
    build_bimatrix, enumerate_strategies, expected_payoffs, find_pure_nash, pareto_and_dominance,
    solve, Exact, ShareAction,
};
use infoshare::game_core::{FalsificationConvention, TreatmentId, TreatmentSpec};
use infoshare::rng::derive;
use num_traits::ToPrimitive;
use proptest::prelude::*;

fn golden(t: TreatmentId, c: FalsificationConvention) -> String {
    let path = format!("{}/tests/golden/equilibrium_{t}_{c}.json", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn matrices_match_golden_files() {
    for t in [TreatmentId::A, TreatmentId::B] {
        for c in [FalsificationConvention::Deceptive, FalsificationConvention::Fabricate] {
            let doc = solve(&TreatmentSpec::standard(t), c).unwrap();
            let json = serde_json::to_string_pretty(&doc).unwrap() + "\n";
            assert_eq!(json, golden(t, c), "{t} {c}");
        }
    }
}

#[test]
fn golden_files_carry_convention_labels() {
    let d: serde_json::Value = serde_json::from_str(&golden(TreatmentId::A, FalsificationConvention::Deceptive)).unwrap();
    let f: serde_json::Value = serde_json::from_str(&golden(TreatmentId::A, FalsificationConvention::Fabricate)).unwrap();
    assert_eq!(d["convention"], "deceptive");
    assert_eq!(f["convention"], "fabricate");
    assert_ne!(d["matrix"], f["matrix"]);
}

#[test]
fn fabricate_cells_agree_with_monte_carlo() {
    // A sample of falsifying cells under the alternative convention.
    let strategies = enumerate_strategies();
    for t in [TreatmentId::A, TreatmentId::B] {
        let spec = TreatmentSpec::standard(t);
        let m = build_bimatrix(&spec, FalsificationConvention::Fabricate).unwrap();
        for (i, s) in strategies.iter().enumerate() {
            if !matches!(s.share, ShareAction::F1 | ShareAction::F2) {
                continue;
            }
            for j in [0usize, 2, 4, 6] {
                let mut rng = derive(77, &[t.index() as u64, i as u64, j as u64]);
                let est = common::simulate_cell(
                    common::parse_strategy(&m.row_labels[i]),
                    common::parse_strategy(&m.col_labels[j]),
                    &spec,
                    FalsificationConvention::Fabricate,
                    100_000,
                    &mut rng,
                );
                let (r, c) = m.cell(i, j);
                for (k, e) in [r, c].iter().enumerate() {
                    let e = e.to_f64().unwrap();
                    assert!(
                        (est.mean[k] - e).abs() <= 4.0 * est.se[k].max(1e-9),
                        "{t} {} vs {}: {} vs {e}",
                        m.row_labels[i],
                        m.col_labels[j],
                        est.mean[k]
                    );
                }
            }
        }
    }
}

#[test]
fn every_nash_profile_survives_all_deviations() {
    for t in [TreatmentId::A, TreatmentId::B] {
        for c in [FalsificationConvention::Deceptive, FalsificationConvention::Fabricate] {
            let m = build_bimatrix(&TreatmentSpec::standard(t), c).unwrap();
            let ne = find_pure_nash(&m);
            assert!(!ne.is_empty());
            for i in 0..10 {
                for j in 0..10 {
                    let (r, cc) = m.cell(i, j);
                    let stable = (0..10).all(|k| m.cell(k, j).0 <= r) && (0..10).all(|l| m.cell(i, l).1 <= cc);
                    assert_eq!(stable, ne.contains(&(i, j)));
                }
            }
        }
    }
}

#[test]
fn pareto_set_is_exactly_the_undominated_profiles() {
    let m = build_bimatrix(&TreatmentSpec::standard(TreatmentId::B), FalsificationConvention::Deceptive).unwrap();
    let report = pareto_and_dominance(&m);
    let payoffs: Vec<(Exact, Exact)> = (0..100).map(|k| m.cell(k / 10, k % 10)).collect();
    for (k, &(r, c)) in payoffs.iter().enumerate() {
        let dominated = payoffs.iter().any(|&(r2, c2)| r2 >= r && c2 >= c && (r2 > r || c2 > c));
        let listed = report.pareto_optimal.iter().any(|p| p.row_index == k / 10 && p.col_index == k % 10);
        assert_eq!(listed, !dominated);
    }
}

#[test]
fn cooperative_equilibria_are_the_reported_set() {
    // One player shares both entries (either response) and the other stays
    // silent and trusts; plus mutual silence with distrust.
    let m = build_bimatrix(&TreatmentSpec::standard(TreatmentId::A), FalsificationConvention::Deceptive).unwrap();
    let mut ne: Vec<(String, String)> = find_pure_nash(&m)
        .into_iter()
        .map(|(i, j)| (m.row_labels[i].clone(), m.col_labels[j].clone()))
        .collect();
    ne.sort();
    let mut expected = vec![
        ("(S0,distrust)".to_string(), "(S0,distrust)".to_string()),
        ("(S0,trust)".to_string(), "(S2,trust)".to_string()),
        ("(S0,trust)".to_string(), "(S2,distrust)".to_string()),
        ("(S2,trust)".to_string(), "(S0,trust)".to_string()),
        ("(S2,distrust)".to_string(), "(S0,trust)".to_string()),
    ];
    expected.sort();
    assert_eq!(ne, expected);
}

proptest! {
    #[test]
    fn payoffs_are_symmetric(i in 0usize..10, j in 0usize..10, tournament in any::<bool>(), fabricate in any::<bool>()) {
        let s = enumerate_strategies();
        let t = TreatmentSpec::standard(if tournament { TreatmentId::B } else { TreatmentId::A });
        let c = if fabricate { FalsificationConvention::Fabricate } else { FalsificationConvention::Deceptive };
        let (a, _) = expected_payoffs(s[i], s[j], &t, c).unwrap();
        let (_, b) = expected_payoffs(s[j], s[i], &t, c).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn payoffs_are_bounded(i in 0usize..10, j in 0usize..10) {
        let s = enumerate_strategies();
        for id in [TreatmentId::A, TreatmentId::B] {
            let t = TreatmentSpec::standard(id);
            let (a, b) = expected_payoffs(s[i], s[j], &t, FalsificationConvention::Deceptive).unwrap();
            let max = Exact::from_integer(t.tournament_bonus.max(t.coop_bonus));
            let min = Exact::from_integer(-2 * t.share_cost);
            prop_assert!(a <= max && a >= min && b <= max && b >= min);
        }
    }
}
