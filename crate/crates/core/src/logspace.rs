//! Numerically stable log-domain helpers shared by every estimator.

/// `log Σ exp(v)`, max-shifted. Returns `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming accumulator for `log Σ exp` over an unknown number of terms.
#[derive(Clone, Copy, Debug)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v <= self.max {
            self.scaled += (v - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Normalizes log-weights in place to a probability vector.
pub fn softmax_in_place(values: &mut [f64]) {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
}

pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = values.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive_on_moderate_values() {
        let v = [0.1, -2.0, 3.5, 1.25];
        let naive = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - naive).abs() < 1e-14);
    }

    #[test]
    fn lse_survives_huge_magnitudes() {
        let v = [1000.0, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn streaming_matches_batch() {
        let v = [-5.0, 40.0, 39.0, -700.0, 12.0];
        let mut acc = LogSumExp::default();
        v.iter().for_each(|&x| acc.push(x));
        assert!((acc.value() - log_sum_exp(&v)).abs() < 1e-12);
        assert!((log_add_exp(40.0, 39.0) - log_sum_exp(&[40.0, 39.0])).abs() < 1e-14);
    }

    #[test]
    fn entropy_edge_cases() {
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }
}
