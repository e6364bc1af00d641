//! Quadrature rules on the reference triangle and unit segment.

/// Six-point rule on the reference triangle {ξ ≥ 0, η ≥ 0, ξ+η ≤ 1},
/// exact for polynomials of degree 4. Weights sum to the reference area 1/2.
pub const TRI_Q: [([f64; 2], f64); 6] = {
    const A1: f64 = 0.445948490915964886318329253883051;
    const W1: f64 = 0.111690794839005732847503504216561;
    const A2: f64 = 0.091576213509770743459571463402202;
    const W2: f64 = 0.054975871827660933819163679095864;
    [
        ([A1, A1], W1),
        ([1.0 - 2.0 * A1, A1], W1),
        ([A1, 1.0 - 2.0 * A1], W1),
        ([A2, A2], W2),
        ([1.0 - 2.0 * A2, A2], W2),
        ([A2, 1.0 - 2.0 * A2], W2),
    ]
};

pub const N_Q: usize = 6;

/// Two-point Gauss rule on [0, 1], exact for cubics.
pub const SEG_Q: [(f64, f64); 2] = {
    const C: f64 = 0.288675134594812882254574390251; // 1/(2*sqrt(3))
    [(0.5 - C, 0.5), (0.5 + C, 0.5)]
};

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(f: impl Fn(f64, f64) -> f64) -> f64 {
        TRI_Q.iter().map(|&([x, y], w)| w * f(x, y)).sum()
    }

    /// ∫ x^p y^q over the reference triangle = p! q! / (p+q+2)!
    fn exact_monomial(p: u32, q: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
        fact(p) * fact(q) / fact(p + q + 2)
    }

    #[test]
    fn degree_four_exact() {
        for p in 0..=4u32 {
            for q in 0..=(4 - p) {
                let got = integrate(|x, y| x.powi(p as i32) * y.powi(q as i32));
                let want = exact_monomial(p, q);
                assert!(
                    (got - want).abs() < 1e-15,
                    "x^{p} y^{q}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn x2y2_is_one_over_180() {
        let got = integrate(|x, y| x * x * y * y);
        assert!((got - 1.0 / 180.0).abs() < 1e-16);
    }

    #[test]
    fn weights_positive_and_sum_to_half() {
        let sum: f64 = TRI_Q.iter().map(|&(_, w)| w).sum();
        assert!((sum - 0.5).abs() < 1e-15);
        assert!(TRI_Q.iter().all(|&(_, w)| w > 0.0));
    }

    #[test]
    fn segment_rule_cubic_exact() {
        let int = |f: &dyn Fn(f64) -> f64| SEG_Q.iter().map(|&(x, w)| w * f(x)).sum::<f64>();
        assert!((int(&|x| x * x * x) - 0.25).abs() < 1e-15);
        assert!((int(&|x| x * x) - 1.0 / 3.0).abs() < 1e-15);
    }
}
