mod common;

use argsim::numcore::GradCheckReport;
use common::{mlm_gradient_check, nli_gradient_check, sts_gradient_check};

fn assert_passed(report: GradCheckReport) {
    assert!(!report.tensors.is_empty());
    assert!(report.passed(), "max rel err {} in {:?}", report.max_rel_error(), report.violations);
}

#[test]
fn mlm_loss_gradients_match_finite_differences() {
    assert_passed(mlm_gradient_check());
}

#[test]
fn sts_loss_gradients_match_finite_differences() {
    assert_passed(sts_gradient_check());
}

#[test]
fn nli_loss_gradients_match_finite_differences() {
    assert_passed(nli_gradient_check());
}
