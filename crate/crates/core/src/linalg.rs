//! Dense vector helpers shared by the solver and the analysis code.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Euclidean norm, scaled by the largest entry so that tiny vectors do not
/// lose precision to subnormal squares.
pub fn norm(a: &[f64]) -> f64 {
    scaled_norm(a.iter().copied())
}

fn scaled_norm(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    m * it.map(|x| (x / m) * (x / m)).sum::<f64>().sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    scaled_norm(a.iter().zip(b).map(|(x, y)| x - y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norms_survive_tiny_and_huge_scales() {
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(norm(&[0.0, 0.0]), 0.0);
        let tiny = norm(&[3e-160, 4e-160]);
        assert!((tiny / 5e-160 - 1.0).abs() < 1e-15);
        let huge = norm(&[3e200, 4e200]);
        assert!((huge / 5e200 - 1.0).abs() < 1e-15);
        assert_eq!(dist(&[1.0, 1.0], &[4.0, 5.0]), 5.0);
    }
}
