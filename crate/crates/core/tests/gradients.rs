mod common;

#[test]
fn all_gradients_match_finite_differences() {
    for seed in 0..100 {
        for (name, err) in common::gradient_suite(seed) {
            assert!(err < 1e-4, "{name} seed {seed}: relative error {err:e}");
        }
    }
}
