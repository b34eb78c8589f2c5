use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::Field;

/// Multiplicative uniform noise `C ← C (1 + δ e)`, `e ~ U[−1, 1]`.
///
/// Draws come from ChaCha8 seeded with `seed`, one draw per grid entry in
/// storage order (masked entries consume a draw but are left untouched), so
/// the perturbation of an entry does not depend on the mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub delta: f64,
    pub seed: u64,
}

pub fn add_noise(field: &Field, spec: NoiseSpec) -> Field {
    let mut out = field.clone();
    if spec.delta == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for (v, &valid) in out.values.iter_mut().zip(&field.mask) {
        let e: f64 = rng.random_range(-1.0..=1.0);
        if valid {
            *v *= 1.0 + spec.delta * e;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> Field {
        Field::from_fn(7, 9, 0.0, 0.5, 0.0, 1.0, |x, t| 0.01 + x * 0.1 + t * 0.01)
    }

    #[test]
    fn zero_delta_is_identity() {
        let f = ramp();
        assert_eq!(add_noise(&f, NoiseSpec { delta: 0.0, seed: 3 }), f);
    }

    #[test]
    fn perturbation_is_bounded_and_reproducible() {
        let f = ramp();
        let spec = NoiseSpec { delta: 0.1, seed: 42 };
        let a = add_noise(&f, spec);
        let b = add_noise(&f, spec);
        assert_eq!(a.values, b.values);
        for (n, c) in a.values.iter().zip(&f.values) {
            assert!((n - c).abs() <= 0.1 * c.abs() * (1.0 + 1e-12));
        }
        let c = add_noise(&f, NoiseSpec { delta: 0.1, seed: 43 });
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn masked_entries_untouched() {
        let mut f = ramp();
        f.mask[5] = false;
        let n = add_noise(&f, NoiseSpec { delta: 0.1, seed: 1 });
        assert_eq!(n.values[5], f.values[5]);
        assert_eq!(n.mask, f.mask);
    }

    #[test]
    fn mean_preserving_over_seeds() {
        let f = Field::new(1, 1, 0.0, 1.0, 0.0, 1.0, vec![0.02]).unwrap();
        let n = 1000;
        let mean: f64 =
            (0..n).map(|s| add_noise(&f, NoiseSpec { delta: 0.1, seed: s }).values[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.02).abs() / 0.02 < 0.01, "mean {mean}");
    }
}
