//! Small shared statistics helpers.

use statrs::function::erf::erfc;

/// Tail probabilities are floored here instead of underflowing to zero.
pub const P_VALUE_FLOOR: f64 = 1e-300;

/// Two-sided normal tail probability `2 (1 - Phi(|z|))`, computed via the
/// complementary error function and floored at [`P_VALUE_FLOOR`].
pub fn two_sided_normal_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).max(P_VALUE_FLOOR)
}

/// Upper-tail probability of a chi-square statistic with 1 degree of freedom.
pub fn chi_square_1df_p(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    erfc((x / 2.0).sqrt()).max(P_VALUE_FLOOR)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Mean and population standard deviation (divides by n).
pub fn mean_and_pop_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
