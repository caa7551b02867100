//! Property tests for the identities the library is built on.

use bvdual::bregman::divergence;
use bvdual::moments::conditional_dual_means;
use bvdual::*;
use proptest::prelude::*;

fn simplex(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..1.0, c).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn real(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0f64..3.0, c)
}

fn positive(c: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..4.0, c)
}

fn law(points: impl Strategy<Value = Vec<f64>>, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(points, n)
}

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn log(p: &[f64]) -> Vec<f64> {
    SimplexPointF64::new(p.to_vec()).unwrap().log_probs().to_vec()
}

/// Damped Newton descent on `z ↦ Σ wᵢ KL(z‖xᵢ)` over the first `c − 1`
/// coordinates, the last being `1 − Σ` of the others. Works from the
/// objective and its derivatives only; never forms softmax(E log X).
fn argmin_oracle(xs: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let c = xs[0].len();
    let objective = |z: &[f64]| -> f64 {
        xs.iter()
            .zip(w)
            .map(|(x, &wi)| wi * z.iter().zip(x).map(|(&a, &b)| a * (a / b).ln()).sum::<f64>())
            .sum()
    };
    let m: Vec<f64> = (0..c)
        .map(|j| xs.iter().zip(w).map(|(x, &wi)| wi * x[j].ln()).sum())
        .collect();
    let mut z = vec![1.0 / c as f64; c];
    for _ in 0..200 {
        let last = c - 1;
        let g: Vec<f64> = (0..last)
            .map(|i| (z[i].ln() - m[i]) - (z[last].ln() - m[last]))
            .collect();
        // Hessian diag(1/zᵢ) + 11ᵀ/z_last, inverted by Sherman–Morrison.
        let a = 1.0 / z[last];
        let zg: f64 = (0..last).map(|i| z[i] * g[i]).sum();
        let zs: f64 = z[..last].iter().sum();
        let step: Vec<f64> = (0..last)
            .map(|i| z[i] * g[i] - z[i] * zg * a / (1.0 + a * zs))
            .collect();
        let f0 = objective(&z);
        let mut t = 1.0;
        let next = loop {
            let mut cand: Vec<f64> = (0..last).map(|i| z[i] - t * step[i]).collect();
            cand.push(1.0 - cand.iter().sum::<f64>());
            if cand.iter().all(|&v| v > 0.0) && objective(&cand) <= f0 + 1e-15 {
                break cand;
            }
            t *= 0.5;
            if t < 1e-20 {
                return z;
            }
        };
        let moved = next.iter().zip(&z).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        z = next;
        if moved < 1e-16 {
            break;
        }
    }
    z
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn conjugate_identity_kl(x in simplex(4), y in simplex(4)) {
        let g = NegativeEntropy::new(4);
        let d = divergence(&g, &x, &y).unwrap();
        let dc = conjugate_divergence(&g, &to_dual(&g, &y).unwrap(), &to_dual(&g, &x).unwrap()).unwrap();
        prop_assert!((d - dc).abs() <= 1e-9, "{d} vs {dc}");
    }

    #[test]
    fn conjugate_identity_mse(x in real(3), y in real(3)) {
        let g = SquaredEuclidean::new(3);
        let d = divergence(&g, &x, &y).unwrap();
        let dc = conjugate_divergence(&g, &to_dual(&g, &y).unwrap(), &to_dual(&g, &x).unwrap()).unwrap();
        prop_assert!((d - dc).abs() <= 1e-9);
    }

    #[test]
    fn conjugate_identity_idiv(x in positive(3), y in positive(3)) {
        let g = GeneralizedEntropy::new(3);
        let d = divergence(&g, &x, &y).unwrap();
        let dc = conjugate_divergence(&g, &to_dual(&g, &y).unwrap(), &to_dual(&g, &x).unwrap()).unwrap();
        prop_assert!((d - dc).abs() <= 1e-9);
    }

    #[test]
    fn divergence_is_nonnegative_and_zero_on_diagonal(x in simplex(3), y in simplex(3)) {
        let g = NegativeEntropy::new(3);
        prop_assert!(divergence(&g, &x, &y).unwrap() >= -1e-15);
        prop_assert!(divergence(&g, &x, &x).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn primal_dual_round_trip(x in simplex(5)) {
        let g = NegativeEntropy::new(5);
        let back = to_primal(&g, &to_dual(&g, &x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn dual_mean_is_the_argmin(xs in law(simplex(3), 2..6)) {
        let n = xs.len();
        let set = PredictionSetF64::uniform(xs.clone()).unwrap();
        let got = dual_mean(&NegativeEntropy::new(3), &set).unwrap();
        let want = argmin_oracle(&xs, &vec![1.0 / n as f64; n]);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-6, "{got:?} vs {want:?}");
        }
    }

    #[test]
    fn decomposition_is_additive_kl(ys in law(simplex(3), 1..4), xs in law(simplex(3), 1..6)) {
        let g = NegativeEntropy::new(3);
        let d = decompose(&g, &PredictionSetF64::uniform(ys).unwrap(), &PredictionSetF64::uniform(xs).unwrap()).unwrap();
        prop_assert!(d.residual().abs() <= 1e-9);
        prop_assert!(d.bayes_error >= -1e-12 && d.bias >= -1e-12 && d.variance >= -1e-12);
    }

    #[test]
    fn decomposition_is_additive_mse(ys in law(real(2), 1..4), xs in law(real(2), 1..6)) {
        let g = SquaredEuclidean::new(2);
        let d = decompose(&g, &PredictionSetF64::uniform(ys).unwrap(), &PredictionSetF64::uniform(xs).unwrap()).unwrap();
        prop_assert!(d.residual().abs() <= 1e-9);
    }

    #[test]
    fn total_expectation_and_variance(
        xs in law(simplex(3), 4..9),
        seed in 0u64..1000,
    ) {
        let n = xs.len();
        let groups: Vec<String> = (0..n).map(|i| format!("g{}", (i as u64 + seed) % 3)).collect();
        let g = NegativeEntropy::new(3);
        let set = PredictionSetF64::grouped(xs, groups).unwrap();
        let total = dual_mean(&g, &set).unwrap();
        let conditional = conditional_dual_means(&g, &set).unwrap();
        let (cw, cm): (Vec<f64>, Vec<Vec<f64>>) = conditional.into_values().unzip();
        let iterated = dual_mean(&g, &PredictionSetF64::weighted(cm, cw).unwrap()).unwrap();
        for (a, b) in total.iter().zip(&iterated) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let split = total_variance_split(&g, &set).unwrap();
        prop_assert!(split.residual().abs() <= 1e-9);
    }

    #[test]
    fn closed_form_matches_definition(xs in law(simplex(4), 1..7), y in 0usize..4) {
        let g = NegativeEntropy::new(4);
        let logs: Vec<Vec<f64>> = xs.iter().map(|p| log(p)).collect();
        let cf = kl_bias_variance_closed_form(&logs, y).unwrap();
        let onehot = SimplexPointF64::one_hot(y, 4).unwrap().probs().to_vec();
        let d = decompose(
            &g,
            &PredictionSetF64::uniform(vec![onehot]).unwrap(),
            &PredictionSetF64::uniform(xs).unwrap(),
        ).unwrap();
        prop_assert!((cf.variance - d.variance).abs() <= 1e-9);
        prop_assert!((cf.bias - d.bias).abs() <= 1e-9);
    }

    #[test]
    fn jensen_for_primal_ensembles(xs in law(simplex(3), 1..6), y in 0usize..3) {
        let e = primal_ensemble(&xs).unwrap();
        let mean_nll = xs.iter().map(|p| -p[y].ln()).sum::<f64>() / xs.len() as f64;
        prop_assert!(-e[y].ln() <= mean_nll + 1e-12);
    }

    #[test]
    fn diversity_reordering(xs in law(simplex(3), 1..6), y in 0usize..3) {
        let g = NegativeEntropy::new(3);
        let e = dual_ensemble(&g, &xs).unwrap();
        let mean_nll = xs.iter().map(|p| -log(p)[y]).sum::<f64>() / xs.len() as f64;
        let var = variance(&g, &PredictionSetF64::uniform(xs).unwrap()).unwrap();
        prop_assert!((-log(&e)[y] - (mean_nll - var)).abs() <= 1e-9);
    }

    #[test]
    fn ensembling_on_enumerable_pools(xs in law(simplex(3), 1..5), k in 1usize..4) {
        let kl = NegativeEntropy::new(3);
        let single = PredictionSetF64::uniform(xs.clone()).unwrap();
        let v1 = variance(&kl, &single).unwrap();
        let m1 = dual_mean(&kl, &single).unwrap();

        let primal = PredictionSetF64::uniform(exhaustive_ensemble_law(&kl, &xs, k, EnsembleMode::Primal).unwrap()).unwrap();
        prop_assert!(variance(&kl, &primal).unwrap() <= v1 + 1e-12);

        let dual = PredictionSetF64::uniform(exhaustive_ensemble_law(&kl, &xs, k, EnsembleMode::Dual).unwrap()).unwrap();
        prop_assert!(variance(&kl, &dual).unwrap() <= v1 + 1e-12);
        for (a, b) in dual_mean(&kl, &dual).unwrap().iter().zip(&m1) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn primal_variance_reduction_mse(xs in law(real(2), 1..5), k in 1usize..4) {
        let se = SquaredEuclidean::new(2);
        let v1 = variance(&se, &PredictionSetF64::uniform(xs.clone()).unwrap()).unwrap();
        let law = exhaustive_ensemble_law(&se, &xs, k, EnsembleMode::Primal).unwrap();
        prop_assert!(variance(&se, &PredictionSetF64::uniform(law).unwrap()).unwrap() <= v1 + 1e-12);
    }

    #[test]
    fn weights_are_respected(xs in law(simplex(3), 3..4), w in weights(3)) {
        let g = NegativeEntropy::new(3);
        let got = dual_mean(&g, &PredictionSetF64::weighted(xs.clone(), w.clone()).unwrap()).unwrap();
        let want = argmin_oracle(&xs, &w);
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn greedy_trace_is_monotone(xs in law(simplex(3), 2..5), budget in 1usize..6) {
        // Three examples; model m predicts xs[m] on each, rotated per example.
        let preds: Vec<Vec<SimplexPointF64>> = xs
            .iter()
            .map(|p| {
                (0..3)
                    .map(|r| {
                        let mut q = p.clone();
                        q.rotate_left(r);
                        SimplexPointF64::new(q).unwrap()
                    })
                    .collect()
            })
            .collect();
        let pool = ModelPoolF64::new(preds).unwrap();
        let (_, trace) = bvdual::ensembling::greedy_select_with_trace(&pool, &[0, 1, 2], budget).unwrap();
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

#[test]
fn f32_core_agrees_with_f64() {
    let a32 = PredictionSetF32::uniform(vec![vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
    let a64 = PredictionSetF64::uniform(vec![vec![0.8, 0.2], vec![0.6, 0.4]]).unwrap();
    let v32 = variance(&NegativeEntropy::new(2), &a32).unwrap();
    let v64 = variance(&NegativeEntropy::new(2), &a64).unwrap();
    assert!((v32 as f64 - v64).abs() < 1e-5);
}
