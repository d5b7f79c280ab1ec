mod common;

use common::oracle_log_marginal;
use gaga::fitting::total_log_marginal;
use gaga::gas::{gas_log_density_unnorm, gas_log_norm_const, gas_log_norm_const_oracle, GasParams};
use gaga::inference::{prior_predictive_sample, GaGaHyper, Hyper, MiGaGaHyper, PriorComponent};
use gaga::model::PatternSet;
use gaga::simulation::{roc_curve, simulate_parametric};

fn small_gas() -> GasParams {
    GasParams::new(vec![3.0, 4.0], 2.0, 2.5, 1.5, 1.0, vec![2.0, 3.0]).unwrap()
}

// Reference values computed with mpmath at 40 digits.
#[test]
fn gas_kernel_and_normalizer_match_high_precision_reference() {
    let p = small_gas();
    let kernel = gas_log_density_unnorm(6.0, &p).unwrap();
    assert!((kernel - -2.316_237_309_231_111_3).abs() < 1e-12 * 2.32, "{kernel}");
    let log_c = gas_log_norm_const_oracle(&p, 1e-12).unwrap();
    assert!((log_c - -3.869_118_556_558_435_8).abs() < 1e-10, "{log_c}");
    // the gamma approximation is close but not exact this far from its regime
    let approx = gas_log_norm_const(&p).unwrap();
    assert!((approx - log_c).abs() < 0.05, "{approx} vs {log_c}");
}

fn hyper() -> GaGaHyper {
    GaGaHyper::new(25.5, 0.109, 1.183, 1683.0, vec![0.8, 0.2]).unwrap()
}

#[test]
fn total_log_marginal_matches_quadrature() {
    let h = hyper();
    let ps = PatternSet::two_group();
    let (x, g, _) = simulate_parametric(&h.clone().into(), 8, 10, &ps, 91).unwrap();
    let mut oracle = 0.0;
    for row in x.rows() {
        let ee = oracle_log_marginal(&[row.to_vec()], &h);
        let de = oracle_log_marginal(&[row[..10].to_vec(), row[10..].to_vec()], &h);
        let (a, b) = (h.pi[0].ln() + ee, h.pi[1].ln() + de);
        let m = a.max(b);
        oracle += m + ((a - m).exp() + (b - m).exp()).ln();
    }
    let got = total_log_marginal(&x, &g, &ps, &h.into()).unwrap();
    // per-gene shape integrals are approximated; 8 genes of 20 arrays
    assert!((got - oracle).abs() < 5e-3, "{got} vs {oracle}");
}

#[test]
fn prior_predictive_mean() {
    // E[x] = E[λ] = (α0/ν)/(α0 − 1) per component
    let h: Hyper = hyper().into();
    let draws = prior_predictive_sample(&h, 40_000, 3);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let expect = (25.5 / 0.109) / 24.5;
    assert!((mean - expect).abs() < 0.02 * expect, "{mean} vs {expect}");

    let mix: Hyper = MiGaGaHyper::new(
        vec![PriorComponent { alpha0: 20.0, nu: 0.05 }, PriorComponent { alpha0: 10.0, nu: 0.5 }],
        vec![0.3, 0.7],
        vec![1.0, 1.0],
        5.0,
        200.0,
        vec![0.9, 0.1],
    )
    .unwrap()
    .into();
    let draws = prior_predictive_sample(&mix, 40_000, 4);
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let expect = 0.3 * (20.0 / 0.05) / 19.0 + 0.7 * (10.0 / 0.5) / 9.0;
    assert!((mean - expect).abs() < 0.02 * expect, "{mean} vs {expect}");
}

#[test]
fn informative_ranking_beats_permuted_ranking() {
    let h = hyper();
    let ps = PatternSet::two_group();
    let (x, g, truth) = simulate_parametric(&h.clone().into(), 3000, 5, &ps, 17).unwrap();
    let stats = gaga::model::all_sufficient_stats(&x, &g, &ps).unwrap();
    let (post, _) = gaga::inference::posterior_all(&stats, &h.into()).unwrap();
    let v0 = post.null_probs();
    let informed = roc_curve(&v0, &truth.delta).unwrap();

    let mut shuffled = v0.clone();
    let mut r = gaga::rng::substream(18, 0);
    rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut r);
    let null = roc_curve(&shuffled, &truth.delta).unwrap();

    let n_de = truth.is_de().iter().filter(|&&d| d).count();
    assert!(informed.points[n_de].0 < null.points[n_de].0);
    // a random ordering declares DE genes at the base rate
    let base = 1.0 - n_de as f64 / x.n_genes() as f64;
    let tail = &null.points[x.n_genes() / 2..];
    let mean_fdr = tail.iter().map(|p| p.0).sum::<f64>() / tail.len() as f64;
    assert!((mean_fdr - base).abs() < 0.03, "{mean_fdr} vs {base}");
}
