#![allow(dead_code)]

use pdeid::library::Term;
use pdeid::params::ModelParams;
use pdeid::preprocess::{DataSplit, DerivPoint};

/// Gaussian plume `C = A exp(−(x − u t)²/(4 d t))` and its exact space
/// derivatives.
pub fn plume(x: f64, t: f64) -> [f64; 4] {
    let (amp, u, d) = (0.04, 0.01, 0.01);
    let s = 4.0 * d * t;
    let z = x - u * t;
    let c = amp * (-z * z / s).exp();
    let c_x = c * (-2.0 * z / s);
    let c_xx = c * (4.0 * z * z / (s * s) - 2.0 / s);
    let c_xxx = c * (-8.0 * z * z * z / (s * s * s) + 12.0 * z / (s * s));
    [c, c_x, c_xx, c_xxx]
}

/// Points on which `∂C/∂t = Σ α_j φ_j(m*)` holds exactly. Sorption columns
/// contain `∂C/∂t` themselves, so the target solves the implicit relation
/// `C_t (1 − α_s w(C)) = Σ_other α_j φ_j`.
pub fn manufactured_split(terms: &[Term], alpha: &[f64], m_star: ModelParams, nx: usize, nt: usize) -> DataSplit {
    let mut points = Vec::new();
    for it in 0..nt {
        let t = 200.0 + 4.0 * it as f64;
        for ix in 0..nx {
            let x = 0.5 + 6.0 * ix as f64 / (nx - 1) as f64;
            let [c, c_x, c_xx, c_xxx] = plume(x, t);
            if c < 1e-4 {
                continue;
            }
            let mut p = DerivPoint {
                ix,
                it,
                x,
                t,
                c,
                c_t: 1.0,
                c_x,
                c_xx,
                c_xxx,
                c2_x: 2.0 * c * c_x,
                c2_xx: 2.0 * (c_x * c_x + c * c_xx),
                c2_xxx: 2.0 * (3.0 * c_x * c_xx + c * c_xxx),
            };
            let mut explicit = 0.0;
            let mut weight = 0.0;
            for (term, a) in terms.iter().zip(alpha) {
                match term {
                    Term::FreundlichSorption | Term::LangmuirSorption => weight += a * term.evaluate(&p, &m_star),
                    _ => explicit += a * term.evaluate(&p, &m_star),
                }
            }
            p.c_t = explicit / (1.0 - weight);
            points.push(p);
        }
    }
    let cutoff = (nt as f64 * 0.6) as usize;
    let (train, test): (Vec<_>, Vec<_>) = points.into_iter().partition(|p| p.it < cutoff);
    DataSplit { train, test, ratio: 0.6, train_steps: cutoff, test_steps: nt - cutoff }
}
