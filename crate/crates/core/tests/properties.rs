use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use proptest::prelude::*;

use airygeom::airy::{generate_coo, partitions_with_length, wk_tensor_entry, TensorKind};
use airygeom::analysis::{cosine_matrix, FeatureMatrix};
use airygeom::asymptotics::leading_asymptotic_log;
use airygeom::conformal::{calibrate_intervals, PredictionSample};
use airygeom::dataset::{counterfactual_shuffle, parse_records_jsonl, records_to_jsonl, DatasetRecord, Modality};
use airygeom::dra::{activation_eval, ActivationKind, ActivationParams};
use airygeom::recursion::{intersection_number_with, AmplitudeCache};
use airygeom::{Partition, SurfaceClass};

fn surface() -> impl Strategy<Value = (u32, u32)> {
    (0u32..=3, 1u32..=4).prop_filter("stable", |&(g, n)| SurfaceClass::new(g, n).is_stable())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn amplitudes_ignore_input_order((g, n) in surface(), pick in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let dim = SurfaceClass::new(g, n).dimension().unwrap();
        let parts = partitions_with_length(dim, n as usize);
        let canonical = parts[pick.index(parts.len())].parts().to_vec();
        let mut shuffled = canonical.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let cache = AmplitudeCache::new();
        let a = intersection_number_with(g, &Partition::new(canonical), &cache);
        let b = intersection_number_with(g, &Partition::new(shuffled), &AmplitudeCache::new());
        prop_assert!(a.is_positive());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn off_dimension_amplitudes_vanish((g, n) in surface(), parts in prop::collection::vec(0u32..8, 4)) {
        let d = Partition::new(parts[..n as usize].to_vec());
        let dim = SurfaceClass::new(g, n).dimension().unwrap();
        let v = intersection_number_with(g, &d, &AmplitudeCache::new());
        prop_assert_eq!(v.is_zero(), d.weight() != dim);
    }

    #[test]
    fn b_and_c_supports(i in 0u32..=20, j in 0u32..=20, k in 0u32..=20) {
        let b = wk_tensor_entry(TensorKind::B, i, j, k);
        prop_assert_eq!(!b.is_zero(), i + j == k + 1);
        prop_assert!(!b.is_negative());
        let c = wk_tensor_entry(TensorKind::C, i, j, k);
        prop_assert_eq!(!c.is_zero(), i == j + k + 2);
        prop_assert!(!c.is_negative());
        prop_assert_eq!(c, wk_tensor_entry(TensorKind::C, i, k, j));
    }

    #[test]
    fn coo_matches_pointwise_entries(dim in 0u32..=12) {
        for which in [TensorKind::B, TensorKind::C] {
            let entries = generate_coo(which, dim).unwrap();
            let mut seen = BTreeMap::new();
            for e in &entries {
                prop_assert!(seen.insert((e.i, e.j, e.k), ()).is_none());
                prop_assert_eq!(&e.value, &wk_tensor_entry(which, e.i, e.j, e.k));
            }
            let mut nonzero = 0;
            for i in 0..=dim {
                for j in 0..=dim {
                    for k in 0..=dim {
                        if !wk_tensor_entry(which, i, j, k).is_zero() {
                            nonzero += 1;
                        }
                    }
                }
            }
            prop_assert_eq!(nonzero, entries.len());
        }
    }

    #[test]
    fn records_round_trip(rows in prop::collection::vec((0u32..20, 1u32..6, 1i64..i64::MAX, 1i64..i64::MAX, 0u32..60), 1..20)) {
        let records: Vec<DatasetRecord> = rows
            .iter()
            .map(|&(g, n, p, q, b_ref)| {
                let v = BigRational::new(BigInt::from(p), BigInt::from(q));
                DatasetRecord {
                    g,
                    n,
                    d: Partition::new(vec![b_ref; n as usize]),
                    target: format!("{}/{}", v.numer(), v.denom()),
                    log10_target: (p as f64).log10() - (q as f64).log10(),
                    b_ref,
                }
            })
            .collect();
        let text = records_to_jsonl(&records).unwrap();
        let back = parse_records_jsonl(&text).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(records_to_jsonl(&back).unwrap(), text);
    }

    #[test]
    fn shuffle_preserves_modality_multisets(seed in any::<u64>(), sizes in prop::collection::vec(1usize..6, 1..4)) {
        let mut records = Vec::new();
        for (g, &size) in sizes.iter().enumerate() {
            for i in 0..size {
                let n = 1 + i as u32 % 3;
                records.push(DatasetRecord {
                    g: g as u32,
                    n,
                    d: Partition::new((0..n).map(|p| p + i as u32).collect()),
                    target: format!("1/{}", i + 1),
                    log10_target: -((i + 1) as f64).log10(),
                    b_ref: 10 + i as u32,
                });
            }
        }
        for modality in [Modality::N, Modality::B, Modality::D] {
            let out = counterfactual_shuffle(&records, modality, seed);
            prop_assert_eq!(out.len(), records.len());
            for g in 0..sizes.len() as u32 {
                let before: Vec<&DatasetRecord> = records.iter().filter(|r| r.g == g).collect();
                let after: Vec<&DatasetRecord> = out.iter().filter(|r| r.g == g).collect();
                let key = |r: &DatasetRecord| match modality {
                    Modality::N => format!("{}", r.n),
                    Modality::B => format!("{}", r.b_ref),
                    Modality::D => r.d.to_dashed(),
                };
                let mut x: Vec<String> = before.iter().map(|r| key(r)).collect();
                let mut y: Vec<String> = after.iter().map(|r| key(r)).collect();
                x.sort();
                y.sort();
                prop_assert_eq!(x, y);
                let tx: Vec<&String> = before.iter().map(|r| &r.target).collect();
                let ty: Vec<&String> = after.iter().map(|r| &r.target).collect();
                prop_assert_eq!(tx, ty);
            }
            prop_assert_eq!(&out, &counterfactual_shuffle(&records, modality, seed));
        }
    }

    #[test]
    fn larger_alpha_never_widens(residuals in prop::collection::vec(-5.0f64..5.0, 40..120), a1 in 0.01f64..0.5, a2 in 0.01f64..0.5) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let samples: Vec<PredictionSample> = residuals
            .iter()
            .enumerate()
            .map(|(i, r)| PredictionSample::new(i as f64, i as f64 + r, 1 + (i % 2) as u32))
            .collect();
        let narrow = calibrate_intervals(&samples, hi, 20).unwrap();
        let wide = calibrate_intervals(&samples, lo, 20).unwrap();
        for (n, w) in narrow.half_widths.iter().zip(&wide.half_widths) {
            prop_assert!(n <= w);
        }
    }

    #[test]
    fn growth_constant_scales_log_exactly((g, n) in surface(), pick in any::<prop::sample::Index>(), growth in 0.05f64..5.0) {
        let dim = SurfaceClass::new(g, n).dimension().unwrap();
        let parts = partitions_with_length(dim, n as usize);
        let d = &parts[pick.index(parts.len())];
        match (leading_asymptotic_log(g, d, growth), leading_asymptotic_log(g, d, growth / 10.0)) {
            (Ok(a), Ok(b)) => {
                let euler = (2 * g as i64 - 2 + n as i64) as f64;
                prop_assert!((b - a - euler).abs() < 1e-9 * (1.0 + a.abs()));
            }
            (a, b) => prop_assert_eq!(a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn cosine_matrix_is_psd_with_unit_diagonal(rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 2..10)) {
        prop_assume!(rows.iter().all(|r| r.iter().any(|v| v.abs() > 1e-3)));
        let c = cosine_matrix(&FeatureMatrix::from_rows(&rows).unwrap()).unwrap();
        for i in 0..c.nrows() {
            prop_assert_eq!(c[(i, i)], 1.0);
        }
        let eig = c.symmetric_eigen().eigenvalues;
        prop_assert!(eig.iter().all(|&e| e >= -1e-9));
    }

    #[test]
    fn activation_derivatives_match_differences(
        x in -4.0f64..4.0,
        a in -1.0f64..1.0,
        b in 0.3f64..3.0,
        c in -1.0f64..1.0,
        d in -1.0f64..1.0,
    ) {
        let h = 1e-5;
        let p = ActivationParams { a, b, c, d };
        let e = activation_eval(ActivationKind::Dra, &p, x);
        let f = |p: &ActivationParams, x: f64| activation_eval(ActivationKind::Dra, p, x).value;
        let checks = [
            (e.dx, (f(&p, x + h) - f(&p, x - h)) / (2.0 * h)),
            (e.da, (f(&ActivationParams { a: a + h, ..p }, x) - f(&ActivationParams { a: a - h, ..p }, x)) / (2.0 * h)),
            (e.db, (f(&ActivationParams { b: b + h, ..p }, x) - f(&ActivationParams { b: b - h, ..p }, x)) / (2.0 * h)),
            (e.dc, (f(&ActivationParams { c: c + h, ..p }, x) - f(&ActivationParams { c: c - h, ..p }, x)) / (2.0 * h)),
            (e.dd, (f(&ActivationParams { d: d + h, ..p }, x) - f(&ActivationParams { d: d - h, ..p }, x)) / (2.0 * h)),
        ];
        for (analytic, numeric) in checks {
            prop_assert!((analytic - numeric).abs() / analytic.abs().max(1.0) < 1e-6, "{analytic} vs {numeric}");
        }
    }
}

#[test]
fn record_counts_match_partition_counts() {
    use airygeom::dataset::{build_records, BuildConfig};
    let ds = build_records(&BuildConfig::new(0, 4, 16), &AmplitudeCache::new()).unwrap();
    let mut counts: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for r in &ds.records {
        *counts.entry((r.g, r.n)).or_default() += 1;
    }
    // number of ways to write w as an unordered sum of n non-negative parts
    fn count(w: u64, n: u32, max: u64) -> usize {
        if n == 0 {
            return (w == 0) as usize;
        }
        (0..=w.min(max)).map(|p| count(w - p, n - 1, p)).sum()
    }
    for ((g, n), c) in counts {
        let w = 3 * g as u64 + n as u64 - 3;
        assert_eq!(c, count(w, n, w), "(g, n) = ({g}, {n})");
    }
}
