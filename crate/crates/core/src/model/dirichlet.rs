use crate::domain::ActionId;

/// Per-class regression targets and noise variances for one labelled point.
///
/// Pseudo-counts are `alpha_eps + 1[k == label]`; each class's count is
/// matched by a lognormal, giving noise variance `ln(1/a + 1)` and target
/// `ln(a) - var/2`.
pub fn dirichlet_transform(label: ActionId, m: usize, alpha_eps: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(alpha_eps > 0.0, "alpha_eps must be positive");
    assert!(label.0 < m, "label {} out of range for {m} classes", label.0);
    let mut targets = Vec::with_capacity(m);
    let mut noise = Vec::with_capacity(m);
    for k in 0..m {
        let a = alpha_eps + if k == label.0 { 1.0 } else { 0.0 };
        let var = (1.0 / a + 1.0).ln();
        targets.push(a.ln() - var / 2.0);
        noise.push(var);
    }
    (targets, noise)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_example_matches_scalar_oracle() {
        let (t, v) = dirichlet_transform(ActionId(0), 2, 0.01);
        // 40-digit mpmath reference values.
        assert!((v[0] - 0.688_184_391_217_816_3).abs() < 1e-12);
        assert!((v[1] - 4.615_120_516_841_259).abs() < 1e-12);
        assert!((t[0] - -0.334_141_864_755_740_1).abs() < 1e-12);
        assert!((t[1] - -6.912_730_444_408_721).abs() < 1e-12);
    }

    #[test]
    fn targets_recover_log_counts() {
        for label in 0..4 {
            let (t, v) = dirichlet_transform(ActionId(label), 4, 0.05);
            for k in 0..4 {
                let a: f64 = 0.05 + if k == label { 1.0 } else { 0.0 };
                assert!((t[k] + v[k] / 2.0 - a.ln()).abs() < 1e-15);
            }
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn label_out_of_range_panics() {
        dirichlet_transform(ActionId(3), 3, 0.01);
    }
}
