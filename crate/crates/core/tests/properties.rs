use proptest::prelude::*;

use decim_core::cic::{
    exact_recursive_cic, pipeline_latency, reference_fir_decimate, register_growth, run_cic, CicConfig, CicParams,
    Precision, RunOptions,
};
use decim_core::fir::{apply_fir, design_halfband, FirFilter};
use decim_core::stream::SampleStream;

fn params() -> impl Strategy<Value = CicParams> {
    (1u32..=4, 1u32..=2, 2u32..=8, 1u32..=4).prop_map(|(n, m, r, b)| CicParams::new(n, m, r, b))
}

fn input_for(p: CicParams) -> impl Strategy<Value = (CicParams, Vec<i64>)> {
    let half = 1i64 << (p.input_width - 1);
    (Just(p), prop::collection::vec(-half..half, 1..300))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn full_precision_matches_both_references((p, x) in params().prop_flat_map(input_for)) {
        let cfg = CicConfig::new(p, register_growth(&p).unwrap().register_width).unwrap();
        let run = run_cic(&cfg, &SampleStream::int(1.0, p.input_width, x.clone()).unwrap(), RunOptions::default()).unwrap();
        let got: Vec<i128> = run.values().iter().map(|&v| v as i128).collect();
        prop_assert_eq!(&got, &reference_fir_decimate(&p, &x));
        prop_assert_eq!(&got, &exact_recursive_cic(&p, &x));
    }

    #[test]
    fn pipelined_is_delayed_direct((p, x) in params().prop_flat_map(input_for), drop in 0u32..4) {
        let rw = register_growth(&p).unwrap().register_width;
        let cfg = CicConfig::new(p, rw - drop.min(rw - 1)).unwrap();
        let input = SampleStream::int(1.0, p.input_width, x).unwrap();
        let opts = RunOptions { precision: Precision::Truncated, ..Default::default() };
        let d = run_cic(&cfg, &input, opts).unwrap();
        let q = run_cic(&cfg, &input, RunOptions { pipelined: true, ..opts }).unwrap();
        let l = pipeline_latency(&p);
        for m in l..q.values().len() {
            prop_assert_eq!(q.values()[m], d.values()[m - l]);
        }
    }

    #[test]
    fn apply_fir_is_linear(
        h in prop::collection::vec(-1.0f64..1.0, 1..40),
        xy in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..200),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        decim in 1usize..=2,
    ) {
        let f = FirFilter::new(h, 1.0, decim).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        let run = |v: Vec<f64>| apply_fir(&f, &SampleStream::real(1.0, v)).unwrap().as_real().unwrap().to_vec();
        let combo = run(x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect());
        let (fx, fy) = (run(x), run(y));
        for i in 0..combo.len() {
            let expected = a * fx[i] + b * fy[i];
            let scale = 1.0f64.max(expected.abs());
            prop_assert!((combo[i] - expected).abs() <= 1e-12 * scale * 40.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn halfband_structure(pass_frac in 0.05f64..0.2, atten in 60.0f64..110.0) {
        let fs = 96_000.0;
        let f = design_halfband(pass_frac * fs, fs, atten).unwrap();
        let c = f.center();
        prop_assert_eq!(f.coeffs[c], 0.5);
        prop_assert!(f.is_symmetric());
        for (i, &v) in f.coeffs.iter().enumerate() {
            let offset = i.abs_diff(c);
            if offset != 0 && offset % 2 == 0 {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
