//! Rotary position embedding on a single head vector.
//!
//! Dimension `i` is paired with `i + head_dim/2` and rotated by
//! `position * base^(-2i/head_dim)`.

pub fn apply_rope(x: &mut [f32], position: usize, base: f64) {
    let head_dim = x.len();
    let half = head_dim / 2;
    for i in 0..half {
        let freq = base.powf(-2.0 * i as f64 / head_dim as f64);
        let (sin, cos) = (position as f64 * freq).sin_cos();
        let x0 = x[i] as f64;
        let x1 = x[i + half] as f64;
        x[i] = (x0 * cos - x1 * sin) as f32;
        x[i + half] = (x0 * sin + x1 * cos) as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
    }

    #[test]
    fn position_zero_is_identity() {
        let mut x = vec![1.0, 2.0, 3.0, 4.0];
        apply_rope(&mut x, 0, 10_000.0);
        assert_eq!(x, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn preserves_pair_norms() {
        let mut x = vec![3.0f32, 1.0, 4.0, 2.0];
        apply_rope(&mut x, 7, 10_000.0);
        assert!(((x[0] * x[0] + x[2] * x[2]) - 25.0).abs() < 1e-4);
        assert!(((x[1] * x[1] + x[3] * x[3]) - 5.0).abs() < 1e-4);
    }

    #[test]
    fn scores_depend_on_offset_only() {
        let q = [0.3f32, -1.2, 0.7, 0.4];
        let k = [1.1f32, 0.2, -0.5, 0.9];
        let score = |pq: usize, pk: usize| {
            let (mut a, mut b) = (q, k);
            apply_rope(&mut a, pq, 10_000.0);
            apply_rope(&mut b, pk, 10_000.0);
            dot(&a, &b)
        };
        assert!((score(5, 2) - score(13, 10)).abs() < 1e-5);
    }
}
