mod common;

use jacprop::neural::Activation;

#[test]
fn analytic_derivatives_match_finite_differences() {
    for (a, act) in Activation::ALL.into_iter().enumerate() {
        for form in 0..4 {
            let (g, j) =
                common::check_derivatives(act, form, 10, 100 + 10 * a as u64 + form as u64);
            assert!(g < 1e-5, "{act} form {form}: gradient error {g:e}");
            assert!(j < 1e-5, "{act} form {form}: jacobian error {j:e}");
        }
    }
}
