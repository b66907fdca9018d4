use proptest::prelude::*;
use spatialprobe::tensor::softmax;
use spatialprobe::trace_io::{render_report, Dtype, ReportFormat, Tabular, TraceFile};
use spatialprobe::probes::{cmb_heatmap, StepAggregation};
use spatialprobe::{AttentionTrace, Error, HeadTrace, Matrix, RopeConfig, TokenPartition};

fn trace_file() -> impl Strategy<Value = TraceFile> {
    (1usize..3, 1usize..3, 1usize..4, 1usize..4, 1usize..4, 1usize..4, any::<bool>())
        .prop_flat_map(|(layers, heads, half, ns, nv, nt, hidden)| {
            let d = 2 * half;
            let n = ns + nv + nt;
            let steps = prop::collection::btree_set(0..n, 1..=n).prop_map(|s| s.into_iter().collect::<Vec<_>>());
            (
                Just((layers, heads, d, ns, nv, nt, hidden)),
                steps,
                prop::collection::vec(-10.0..10.0f64, layers * heads * (2 * n * d + n * n) + 4 * n * (layers + 1)),
            )
        })
        .prop_map(|((layers, heads, d, ns, nv, nt, hidden), steps, pool)| {
            let n = ns + nv + nt;
            let mut it = pool.into_iter().cycle();
            let mut take = |r: usize, c: usize| Matrix::from_vec(r, c, it.by_ref().take(r * c).collect()).unwrap();
            let captures = (0..layers * heads)
                .map(|_| {
                    let queries = take(steps.len(), d);
                    let keys = take(n, d);
                    let logits = take(steps.len(), n);
                    let rows: Vec<Vec<f64>> = logits.iter_rows().map(|r| softmax(r).unwrap()).collect();
                    HeadTrace {
                        queries,
                        keys,
                        attention: Matrix::from_rows(&rows).unwrap(),
                    }
                })
                .collect();
            let hidden = hidden.then(|| (0..=layers).map(|_| take(n, 4)).collect());
            let positions = (0..n).map(|i| i as f64 * 1.5).collect();
            TraceFile {
                model: "random".into(),
                trace: AttentionTrace::new(layers, heads, d, positions, steps, captures).unwrap(),
                partition: TokenPartition::contiguous(ns, nv, nt),
                rope: RopeConfig::new(d, 500.0).unwrap(),
                dtype: Dtype::F64,
                hidden,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roundtrip_is_bit_exact(f in trace_file()) {
        let bytes = f.to_bytes().unwrap();
        let (back, rep) = TraceFile::from_bytes(&bytes).unwrap();
        prop_assert_eq!(rep.renormalized_rows, 0);
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn f32_files_are_stable_after_one_trip(mut f in trace_file()) {
        f.dtype = Dtype::F32;
        let (once, _) = TraceFile::from_bytes(&f.to_bytes().unwrap()).unwrap();
        let (twice, _) = TraceFile::from_bytes(&once.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(twice.trace.captures(), once.trace.captures());
    }

    #[test]
    fn every_truncation_is_an_error(f in trace_file(), cut in any::<prop::sample::Index>()) {
        let bytes = f.to_bytes().unwrap();
        let at = cut.index(bytes.len());
        prop_assert!(TraceFile::from_bytes(&bytes[..at]).is_err());
    }

    #[test]
    fn heatmap_reports_are_plain_ascii(f in trace_file()) {
        let h = cmb_heatmap(&f.trace, &f.partition, true, StepAggregation::AllSteps).unwrap();
        let csv = render_report(&h.table(), ReportFormat::Csv);
        prop_assert!(csv.is_ascii());
        prop_assert_eq!(csv.lines().count(), 1 + f.trace.layers() * f.trace.heads());
        for line in csv.lines().skip(1) {
            prop_assert_eq!(line.split(',').count(), 3);
        }
    }
}

#[test]
fn future_versions_are_refused() {
    let f = TraceFile {
        model: "empty".into(),
        trace: AttentionTrace::new(0, 1, 2, vec![0.0], vec![0], vec![]).unwrap(),
        partition: TokenPartition::contiguous(0, 1, 0),
        rope: RopeConfig::new(2, 10.0).unwrap(),
        dtype: Dtype::F64,
        hidden: None,
    };
    let mut bytes = f.to_bytes().unwrap();
    bytes[4..8].copy_from_slice(&7u32.to_le_bytes());
    let err = TraceFile::from_bytes(&bytes).unwrap_err();
    assert!(matches!(err, Error::UnsupportedVersion { found: 7, supported: 1 }));
}
