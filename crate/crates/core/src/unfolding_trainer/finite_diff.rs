/// Central differences `(f(p + εe_i) − f(p − εe_i)) / 2ε` for every coordinate.
pub fn finite_difference_gradient<F>(params: &[f64], epsilon: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(epsilon > 0.0, "finite-difference step must be positive");
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            probe[i] = params[i] + epsilon;
            let up = loss(&probe);
            probe[i] = params[i] - epsilon;
            let down = loss(&probe);
            probe[i] = params[i];
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}
