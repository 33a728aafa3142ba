use stablelab::array::{lower_cut, row_limit, window_entries, ArraySpec, RowPlan, Variant};
use stablelab::gof::{ks_distance, ks_threshold, EmpiricalSample};
use stablelab::make_params;
use stablelab::stable::{dispersion_estimate, tail_sas};

fn row(alpha: f64, k: u32, columns: u64, replicas: u64) -> Vec<f64> {
    let spec = ArraySpec::new(alpha, 2024).unwrap();
    let limit = row_limit(&spec, k).unwrap().min(columns);
    (0..replicas)
        .flat_map(|r| window_entries(&spec, k, 1..=limit, r, Variant::X).unwrap())
        .collect()
}

#[test]
fn raw_rows_have_the_stable_law() {
    for alpha in [0.5, 1.0, 1.5] {
        for k in [1u32, 2, 5] {
            let spec = ArraySpec::new(alpha, 2024).unwrap();
            let limit = row_limit(&spec, k).unwrap();
            let replicas = 10_000 / limit.min(10_000) + 1;
            let xs = row(alpha, k, 10_000, replicas);
            let sample = EmpiricalSample::new(xs);
            let sigma = (k as f64).powf(-1.0 / alpha);
            let ks = ks_distance(&sample, &make_params(alpha, sigma).unwrap()).unwrap();
            let thr = ks_threshold(sample.len(), 1.5);
            assert!(ks <= thr, "alpha={alpha} k={k} ks={ks} thr={thr}");
        }
    }
}

#[test]
fn tail_frequency_matches_the_oracle() {
    // Only region entries can pass 2^k; their count must match P(|X| ≥ 2^k).
    for alpha in [0.6, 1.0, 1.4] {
        let k = 4;
        let spec = ArraySpec::new(alpha, 77).unwrap();
        let plan = RowPlan::new(&spec, k).unwrap();
        let cols = plan.limit;
        let replicas = 4_000_000 / cols + 1;
        let mut hits = 0u64;
        for r in 0..replicas {
            hits += plan
                .flagged_raw(1..=cols, r)
                .unwrap()
                .iter()
                .filter(|(_, x)| x.abs() >= lower_cut(k))
                .count() as u64;
        }
        let total = (replicas * cols) as f64;
        let p = tail_sas(&make_params(alpha, plan.sigma).unwrap(), lower_cut(k)).unwrap();
        let se = (p * (1.0 - p) / total).sqrt();
        let freq = hits as f64 / total;
        assert!((freq - p).abs() <= 4.0 * se, "alpha={alpha} freq={freq} p={p} se={se}");
    }
}

#[test]
fn row_four_dispersion_at_alpha_one() {
    // Row 4 has 2 d_4 = 512 columns; independent replicas fill out 10^6 draws.
    let xs = row(1.0, 4, 512, 1954);
    let s = EmpiricalSample::new(xs);
    let est = dispersion_estimate(&s, 1.0, &[0.5, 1.0, 2.0]).unwrap();
    assert!((est - 0.25).abs() <= 0.02 * 0.25, "{est}");
}
