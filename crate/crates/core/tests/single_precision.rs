//! The generic core at f32.

use causal_rd::exact_oracle::{directed_information, enumerate_joint, EnumerationOptions, Var};
use causal_rd::matching::match_source_to_channel;
use causal_rd::nrdf::bsms_nrdf;
use causal_rd::realization::{build_matched_scheme, joint_chain};
use causal_rd::Source32;

#[test]
fn f32_pipeline_tracks_f64() {
    let pt = bsms_nrdf(&Source32::new(0.25).unwrap(), 0.1).unwrap();
    assert!((pt.rate - 0.412_295_3).abs() < 1e-5);
    let r = match_source_to_channel(0.25f32, 0.1).unwrap();
    assert!(r.gap < 1e-5);

    let s = build_matched_scheme(0.25f32, 0.1, true).unwrap();
    let chain = joint_chain(&s).unwrap();
    assert!((chain.expected_distortion - 0.1).abs() < 1e-5);
    assert!((chain.expected_cost.unwrap() - 0.7).abs() < 1e-5);

    let t = enumerate_joint(&s, 4, &[Var::X, Var::Y], &EnumerationOptions::default()).unwrap();
    assert!((t.total_mass() - 1.0).abs() < 1e-5);
    let di = directed_information(&t).unwrap().per_symbol;
    let wide = build_matched_scheme(0.25f64, 0.1, true).unwrap();
    let t64 = enumerate_joint(&wide, 4, &[Var::X, Var::Y], &EnumerationOptions::default()).unwrap();
    assert!((di as f64 - directed_information(&t64).unwrap().per_symbol).abs() < 1e-4);
}
