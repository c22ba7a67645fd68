mod common;

use common::{model_case, worst_over, LAYERS};
use emplite::model::Variant;
use emplite::nn::AttentionMode;

const TOL: f64 = 1e-4;

#[test]
fn every_layer_matches_finite_differences() {
    for (name, case) in LAYERS {
        let worst = worst_over(case, 20);
        assert!(worst < TOL, "{name}: max relative error {worst:e}");
    }
}

#[test]
fn whole_model_matches_finite_differences() {
    for variant in Variant::ALL {
        let worst = model_case(variant, AttentionMode::Scale);
        assert!(worst < TOL, "{variant}: max relative error {worst:e}");
    }
    let worst = model_case(Variant::EmpliteFull, AttentionMode::ConcatContext);
    assert!(worst < TOL, "concat_context: max relative error {worst:e}");
}
