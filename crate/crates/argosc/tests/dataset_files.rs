use argosc::io::{load_dataset, save_dataset};
use argosc_core::{Provenance, TimeSeriesDataset};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6f64..1e6,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
        Just(-0.0),
        Just(f64::MIN_POSITIVE),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn save_then_load_is_bit_exact(
        n in 2usize..40,
        m in 1usize..4,
        r in 0usize..3,
        with_truth in any::<bool>(),
        dt in 1e-4f64..1.0,
        seed in any::<u64>(),
        values in proptest::collection::vec(finite(), 40 * 10),
    ) {
        let t: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
        let mut it = values.iter().copied().cycle();
        let mut next = || it.next().unwrap();
        let states = DMatrix::from_fn(n, m, |_, _| next());
        let inputs = DMatrix::from_fn(n, r, |_, _| next());
        let truth = with_truth.then(|| DMatrix::from_fn(n, m, |_, _| next()));
        let meta = Provenance {
            system: "random".into(),
            parameters: vec![("p".into(), next())],
            snr_db: Some(14.0),
            seed: Some(seed),
        };
        let ds = TimeSeriesDataset::new(t, states, inputs, truth, meta).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path).unwrap();
        let bits = |d: &TimeSeriesDataset| -> Vec<u64> {
            d.t().iter()
                .chain(d.states().iter())
                .chain(d.inputs().iter())
                .chain(d.truth().into_iter().flat_map(|x| x.iter()))
                .map(|v| v.to_bits())
                .collect()
        };
        prop_assert_eq!(bits(&back), bits(&ds));
        prop_assert_eq!(back.meta(), ds.meta());
    }
}
