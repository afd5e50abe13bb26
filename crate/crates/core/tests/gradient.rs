mod common;

#[test]
fn backprop_matches_finite_differences() {
    for seed in 0..40 {
        let err = common::gradient_check(seed);
        assert!(err <= 1e-3, "seed {seed}: relative error {err:e}");
    }
}
