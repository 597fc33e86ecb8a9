//! Built-in population models with closed-form derivatives.

mod constant;
mod mrdl;
mod seir;
mod two_state;
mod wsn;

pub use constant::constant;
pub use mrdl::{consensus_functional, mrdl, MrdlParams};
pub use seir::{seir, SeirParams};
pub use two_state::{two_state, TwoStateParams};
pub use wsn::{response_time_functional, wsn, WsnParams};

use crate::error::{Error, Result};

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

fn check_probability(name: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::InvalidParameter {
            name: name.into(),
            reason: format!("{value} is not in [0, 1]"),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivatives::{fd_hessian, fd_jacobian, hessian_phi1, jacobian_phi1};
    use crate::population::{OccupancyVector, PopulationModel};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> OccupancyVector {
        let raw: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let s: f64 = raw.iter().sum();
        OccupancyVector::renormalize(&DVector::from_vec(raw.iter().map(|x| x / s).collect())).unwrap()
    }

    fn builtins() -> Vec<PopulationModel> {
        vec![
            seir(&SeirParams::default()).unwrap(),
            wsn(&WsnParams::default()).unwrap(),
            mrdl(&MrdlParams::default()).unwrap(),
            two_state(&TwoStateParams { alpha: 0.6 }).unwrap(),
            two_state(&TwoStateParams { alpha: 0.75 }).unwrap(),
        ]
    }

    #[test]
    fn kernels_are_stochastic_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in builtins() {
            for _ in 0..1000 {
                let m = random_simplex(&mut rng, model.dim());
                model.kernel().eval_checked(&m).unwrap();
            }
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for model in builtins() {
            let fd = model.without_analytic_derivatives();
            for _ in 0..100 {
                let m = random_simplex(&mut rng, model.dim());
                let a = jacobian_phi1(&model, &m).unwrap();
                let a_fd = jacobian_phi1(&fd, &m).unwrap();
                assert!((&a - &a_fd).amax() < 1e-6, "{}: jacobian", model.name());
                let b = hessian_phi1(&model, &m).unwrap();
                let b_fd = hessian_phi1(&fd, &m).unwrap();
                assert!(b.max_abs_diff(&b_fd) < 1e-3, "{}: hessian", model.name());
            }
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(seir(&SeirParams { alpha_e: 0.5, alpha_i: 0.6, ..Default::default() }).is_err());
        assert!(seir(&SeirParams { alpha_r: -0.1, ..Default::default() }).is_err());
        assert!(wsn(&WsnParams { beta: 0.995, gamma: 0.01, ..Default::default() }).is_err());
        assert!(wsn(&WsnParams { clamp: 0.0, ..Default::default() }).is_err());
        assert!(mrdl(&MrdlParams { q: 2.0, lambda: 1.0 }).is_err());
        assert!(mrdl(&MrdlParams { q: 10.0, lambda: 0.0 }).is_err());
        assert!(two_state(&TwoStateParams { alpha: 1.0 }).is_err());
        assert!(two_state(&TwoStateParams { alpha: 0.0 }).is_err());
    }

    #[test]
    fn seir_defaults() {
        let p = SeirParams::default();
        assert_eq!(
            (p.alpha_e, p.alpha_i, p.alpha_a, p.alpha_r, p.alpha_l),
            (0.01, 0.08, 0.04, 0.02, 0.01)
        );
        assert_eq!(seir(&p).unwrap().labels(), ["S", "E", "I", "R"]);
    }

    #[test]
    fn wsn_blocks_never_mix() {
        let model = wsn(&WsnParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let m = random_simplex(&mut rng, 5);
            let k = model.kernel().eval_checked(&m).unwrap();
            for i in 0..5 {
                for j in 0..5 {
                    if (i < 2) != (j < 2) {
                        assert_eq!(k[(i, j)], 0.0);
                    }
                }
            }
        }
        let m0 = OccupancyVector::new(vec![0.2, 0.15, 0.3, 0.1, 0.25]).unwrap();
        let traj = crate::population::trajectory(&model, &m0, 400).unwrap();
        for m in traj {
            assert!((m[0] + m[1] - 0.35).abs() < 1e-12);
        }
    }

    #[test]
    fn wsn_response_time_derivatives() {
        let p = WsnParams::default();
        let h = response_time_functional(&p);
        let m = DVector::from_element(5, 0.2);
        let lam = p.lambda;
        let grad = h.gradient_at(&m).unwrap();
        let want = [0.0, 0.0, 1.0 / (lam * 0.2), 1.0 / (lam * 0.2), -0.4 / (lam * 0.04)];
        for k in 0..5 {
            assert!((grad[(0, k)] - want[k]).abs() < 1e-12);
        }
        let hess = h.hessian_at(&m).unwrap();
        let eval = |x: &DVector<f64>| h.eval(x).unwrap();
        let fd = fd_hessian(eval, &m, 1e-4);
        assert!(hess.max_abs_diff(&fd) < 1e-3 * hess.max_abs());
        assert!((hess[(0, 4, 4)] - 2.0 * 0.4 / (lam * 0.008)).abs() < 1e-9);
        assert!((hess[(0, 2, 4)] + 1.0 / (lam * 0.04)).abs() < 1e-9);
        let fdj = fd_jacobian(eval, &m, 1e-5);
        assert!((grad - fdj).amax() < 1e-4);
        assert!(h.eval(&DVector::from_vec(vec![0.5, 0.0, 0.3, 0.2, 0.0])).is_err());
    }

    #[test]
    fn mrdl_diagonal_entry() {
        let model = mrdl(&MrdlParams { q: 10.0, lambda: 1.0 }).unwrap();
        let k = model.kernel().eval(&DVector::from_vec(vec![0.0, 0.5, 0.0, 0.5]));
        assert!((k[(1, 1)] - 0.775).abs() < 1e-15);
    }

    #[test]
    fn mrdl_consensus_vertices_are_fixed() {
        let model = mrdl(&MrdlParams::default()).unwrap();
        for v in [[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]] {
            let m = OccupancyVector::new(v.to_vec()).unwrap();
            let traj = crate::population::trajectory(&model, &m, 50).unwrap();
            let h = consensus_functional();
            let c0 = h.eval(&m).unwrap()[0];
            for x in traj {
                assert!((h.eval(&x).unwrap()[0] - c0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mrdl_majority_wins_above_critical_density() {
        let p = MrdlParams { q: 10.0, lambda: 1.0 };
        assert!(0.6 > p.lambda / (1.0 + p.lambda));
        let model = mrdl(&p).unwrap();
        let m0 = OccupancyVector::new(vec![0.6, 0.0, 0.4, 0.0]).unwrap();
        let traj = crate::population::trajectory(&model, &m0, 5000).unwrap();
        let h = consensus_functional();
        let last = h.eval(traj.last().unwrap()).unwrap()[0];
        assert!(last > 0.999, "consensus on A: {last}");
        for m in &traj {
            let c = h.eval(m).unwrap()[0];
            assert!((0.0..=1.0 + 1e-12).contains(&c));
        }
    }
}
