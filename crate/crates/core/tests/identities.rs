//! Information identities on random discrete joints, checked against a
//! brute-force oracle that sums `p log p / (p p)` directly over outcomes.

use std::collections::HashMap;

use condind_core::prob::{infogan_decomposition, ConditionalTable, ProbTable, Variable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: u32 = 200;

/// Data variable `x` (cardinality ≤ 6) followed by 1–3 latents of
/// cardinality ≤ 4.
fn random_joint(seed: u64) -> (ProbTable, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latents = rng.random_range(1..=3);
    let mut vars = vec![Variable::new("x", rng.random_range(2..=6))];
    let names: Vec<String> = (0..latents).map(|i| format!("z{i}")).collect();
    for n in &names {
        vars.push(Variable::new(n.clone(), rng.random_range(2..=4)));
    }
    (ProbTable::random(vars, &mut rng).unwrap(), names)
}

/// Joint marginal over the listed column indices.
fn marginal(t: &ProbTable, cols: &[usize]) -> HashMap<Vec<usize>, f64> {
    let mut out = HashMap::new();
    t.for_each_outcome(|a, p| {
        *out.entry(cols.iter().map(|&c| a[c]).collect()).or_insert(0.0) += p;
    });
    out
}

fn oracle_mi(t: &ProbTable, a: &[usize], b: &[usize]) -> f64 {
    let ab: Vec<usize> = a.iter().chain(b).copied().collect();
    let (pa, pb, pab) = (marginal(t, a), marginal(t, b), marginal(t, &ab));
    pab.iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| {
            let (ka, kb) = k.split_at(a.len());
            p * (p / (pa[ka] * pb[kb])).ln()
        })
        .sum()
}

fn oracle_tc(t: &ProbTable, cols: &[usize]) -> f64 {
    let joint = marginal(t, cols);
    let singles: Vec<_> = cols.iter().map(|&c| marginal(t, &[c])).collect();
    joint
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| {
            let prod: f64 = k.iter().zip(&singles).map(|(&s, m)| m[&vec![s]]).product();
            p * (p / prod).ln()
        })
        .sum()
}

fn names(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn chain_rule_residual(seed in any::<u64>()) {
        let (t, latents) = random_joint(seed);
        let s = names(&latents);
        for (k, j) in s.iter().enumerate() {
            let rest: Vec<&str> = s.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, n)| *n).collect();
            let r = t.verify_chain_rule(&["x"], j, &rest).unwrap();
            prop_assert!(r.residual < 1e-10, "residual {}", r.residual);
            let cols: Vec<usize> = (1..=s.len()).collect();
            prop_assert!((r.lhs - oracle_mi(&t, &cols, &[0])).abs() < 1e-10);
            prop_assert!((r.marginal_mi - oracle_mi(&t, &[k + 1], &[0])).abs() < 1e-10);
        }
    }

    #[test]
    fn theorem1_residual(seed in any::<u64>()) {
        let (t, latents) = random_joint(seed);
        let s = names(&latents);
        let r = t.verify_theorem1(&["x"], &s).unwrap();
        prop_assert!(r.residual < 1e-10, "residual {}", r.residual);
        let cols: Vec<usize> = (1..=s.len()).collect();
        let singles: f64 = cols.iter().map(|&c| oracle_mi(&t, &[c], &[0])).sum();
        prop_assert!((r.lhs - (oracle_mi(&t, &cols, &[0]) - singles)).abs() < 1e-10);
        prop_assert!((r.marginal_tc - oracle_tc(&t, &cols)).abs() < 1e-10);
    }

    #[test]
    fn nonnegative_and_symmetric(seed in any::<u64>()) {
        let (t, latents) = random_joint(seed);
        let s = names(&latents);
        prop_assert!(t.entropy(&s).unwrap() >= -1e-12);
        let mi = t.mutual_information(&s, &["x"]).unwrap();
        prop_assert!(mi >= -1e-12);
        prop_assert!((mi - t.mutual_information(&["x"], &s).unwrap()).abs() < 1e-12);
        prop_assert!(t.total_correlation(&s).unwrap() >= -1e-12);
        if s.len() >= 2 {
            let cmi = t.conditional_mutual_information(&[s[0]], &["x"], &s[1..]).unwrap();
            prop_assert!(cmi >= -1e-12);
        }
    }

    #[test]
    fn decomposition_residual(seed in any::<u64>()) {
        let (t, _) = random_joint(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
        let x = t.variables()[0].clone();
        let factors = t.variables()[1..]
            .iter()
            .map(|v| {
                let w: Vec<f64> = (0..x.cardinality * v.cardinality).map(|_| rng.random_range(0.05..1.0)).collect();
                let rows: Vec<f64> = w
                    .chunks(v.cardinality)
                    .flat_map(|r| {
                        let s: f64 = r.iter().sum();
                        r.iter().map(move |p| p / s)
                    })
                    .collect();
                (v.clone(), rows)
            })
            .collect();
        let q = ConditionalTable::from_factors(vec![x], factors).unwrap();
        let r = infogan_decomposition(&t, &q).unwrap();
        let residual = r.residual.expect("full-support Q gives finite terms");
        prop_assert!(residual < 1e-10, "residual {residual}");
        let h_joint: f64 = t.probs().iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum();
        let h_x: f64 = marginal(&t, &[0]).values().map(|p| -p * p.ln()).sum();
        prop_assert!((r.conditional_entropy - (h_joint - h_x)).abs() < 1e-10);
    }

    #[test]
    fn data_processing(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ca, cb, cc) = (rng.random_range(2..=4), rng.random_range(2..=4), rng.random_range(2..=4));
        let stochastic = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| {
                    let w: Vec<f64> = (0..cols).map(|_| rng.random_range(0.01..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|v| v / s).collect()
                })
                .collect()
        };
        let pa = stochastic(1, ca, &mut rng).remove(0);
        let b_given_a = stochastic(ca, cb, &mut rng);
        let c_given_b = stochastic(cb, cc, &mut rng);
        let t = ProbTable::from_fn(
            vec![Variable::new("a", ca), Variable::new("b", cb), Variable::new("c", cc)],
            |s| pa[s[0]] * b_given_a[s[0]][s[1]] * c_given_b[s[1]][s[2]],
        )
        .unwrap();
        let ab = t.mutual_information(&["a"], &["b"]).unwrap();
        let ac = t.mutual_information(&["a"], &["c"]).unwrap();
        prop_assert!(ac <= ab + 1e-12, "I(a;c)={ac} > I(a;b)={ab}");
    }
}

/// When every `p(S | x)` factorizes and the marginal TC is zero, the joint
/// information is the sum of the per-latent informations.
#[test]
fn additive_information_when_both_sides_factorize() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // x = (x1, x2) flattened, uniform; z1 reads x1 only, z2 reads x2 only.
        let (c1, c2) = (rng.random_range(2..=3), rng.random_range(2..=3));
        let (k1, k2) = (rng.random_range(2..=4), rng.random_range(2..=4));
        let row = |k: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        };
        let z1: Vec<Vec<f64>> = (0..c1).map(|_| row(k1, &mut rng)).collect();
        let z2: Vec<Vec<f64>> = (0..c2).map(|_| row(k2, &mut rng)).collect();
        let t = ProbTable::from_fn(
            vec![
                Variable::new("x", c1 * c2),
                Variable::new("z1", k1),
                Variable::new("z2", k2),
            ],
            |s| {
                let (x1, x2) = (s[0] / c2, s[0] % c2);
                z1[x1][s[1]] * z2[x2][s[2]] / (c1 * c2) as f64
            },
        )
        .unwrap();
        assert!(t.total_correlation(&["z1", "z2"]).unwrap().abs() < 1e-12);
        for x in 0..c1 * c2 {
            let c = t.condition(&[("x", x)]).unwrap();
            assert!(c.total_correlation(&["z1", "z2"]).unwrap().abs() < 1e-12);
        }
        let joint = t.mutual_information(&["z1", "z2"], &["x"]).unwrap();
        let sum = t.mutual_information(&["z1"], &["x"]).unwrap() + t.mutual_information(&["z2"], &["x"]).unwrap();
        assert!((joint - sum).abs() < 1e-10, "seed {seed}: {joint} vs {sum}");
        let r = t.verify_theorem1(&["x"], &["z1", "z2"]).unwrap();
        assert!(r.lhs.abs() < 1e-10);
    }
}

/// The exhaustive factor grid has exactly independent, uniform factors.
#[test]
fn factor_grid_has_zero_total_correlation() {
    let data = condind_core::generate(&condind_core::FactorSpec::default()).unwrap();
    let cards = data.factor_cardinalities();
    let vars: Vec<Variable> = condind_core::datagen::FACTOR_NAMES
        .iter()
        .zip(&cards)
        .map(|(n, &c)| Variable::new(*n, c))
        .collect();
    let mut counts = HashMap::new();
    for f in data.factors() {
        *counts.entry(f.clone()).or_insert(0.0) += 1.0;
    }
    let t = ProbTable::from_fn(vars, |a| counts.get(a).copied().unwrap_or(0.0)).unwrap();
    assert!(t.total_correlation(&condind_core::datagen::FACTOR_NAMES).unwrap().abs() < 1e-12);
}
