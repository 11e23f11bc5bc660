mod common;

use common::gradsuite::run_suite;

#[test]
fn layers_loss_and_detector_match_finite_differences() {
    for c in run_suite(0..3, true) {
        assert!(c.error < 1e-3, "{} seed {}: {:.3e}", c.name, c.seed, c.error);
    }
}
