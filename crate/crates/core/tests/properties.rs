use contagion_core::attribution::{self as at, InstrumentSpec, Regime};
use contagion_core::detect::{self, FlowTensor};
use contagion_core::network::{self, walktrap, UndirectedGraph};
use contagion_core::quantreg::{check_loss, qr_fit};
use contagion_core::wavelet::{modwt_coefficients, modwt_with, mra, WaveletFilter};
use contagion_core::{ContagionNetwork, LinkSample, MarketClass};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn filter() -> impl Strategy<Value = WaveletFilter> {
    prop_oneof![Just(WaveletFilter::Haar), Just(WaveletFilter::D4), Just(WaveletFilter::La8)]
}

fn endogenous_sample(seed: u64, n_obs: usize) -> LinkSample {
    let spec = InstrumentSpec::default();
    let rows = n_obs + spec.max_lag();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(rows, 5);
    let mut c = vec![0.0; rows];
    let mut f = vec![0.0; rows];
    for t in 0..rows {
        let u: f64 = StandardNormal.sample(&mut rng);
        let mut y = u;
        for k in 0..5 {
            let prev = if t == 0 { 0.0 } else { x[(t - 1, k)] };
            let e: f64 = StandardNormal.sample(&mut rng);
            x[(t, k)] = 0.8 * prev + e + 0.3 * u;
            y += (k as f64 + 1.0) * 0.1 * x[(t, k)];
        }
        f[t] = StandardNormal.sample(&mut rng);
        c[t] = y + 0.5 * f[t];
    }
    LinkSample::from_outcome("p", ("A".into(), "B".into()), &c, &x, &f, &spec).unwrap()
}

fn random_flows(seed: u64, n: usize) -> FlowTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n * n).map(|_| Some(StandardNormal.sample(&mut rng))).collect();
    FlowTensor::from_values(
        "P",
        5,
        0.5,
        (0..n).map(|i| format!("M{i}")).collect(),
        vec![MarketClass::Advanced; n],
        values,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mra_sums_to_signal(xs in prop::collection::vec(-5.0f64..5.0, 64..400), levels in 1usize..6, f in filter()) {
        let d = modwt_with(&xs, levels, f).unwrap();
        for t in 0..xs.len() {
            let s: f64 = d.details.iter().map(|v| v[t]).sum::<f64>() + d.smooth[t];
            prop_assert!((s - xs[t]).abs() < 1e-10);
        }
    }

    #[test]
    fn modwt_preserves_energy(xs in prop::collection::vec(-5.0f64..5.0, 64..400), levels in 1usize..6, f in filter()) {
        let c = modwt_coefficients(&xs, levels, f).unwrap();
        let e: f64 = c.wavelet.iter().chain([&c.scaling]).flatten().map(|v| v * v).sum();
        let x2: f64 = xs.iter().map(|v| v * v).sum();
        prop_assert!((e - x2).abs() <= 1e-9 * x2.max(1.0));
    }

    #[test]
    fn modwt_is_shift_equivariant(xs in prop::collection::vec(-5.0f64..5.0, 64..200), shift in 1usize..50) {
        let n = xs.len();
        let rotated: Vec<f64> = (0..n).map(|t| xs[(t + n - shift % n) % n]).collect();
        let a = mra(&modwt_coefficients(&xs, 3, WaveletFilter::La8).unwrap());
        let b = mra(&modwt_coefficients(&rotated, 3, WaveletFilter::La8).unwrap());
        for t in 0..n {
            prop_assert!((b.details[2][t] - a.details[2][(t + n - shift % n) % n]).abs() < 1e-10);
        }
    }

    #[test]
    fn quantile_fit_beats_perturbations(seed in any::<u64>(), tau in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 40;
        let x = DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fit = qr_fit(&x, &y, tau).unwrap();
        let loss = |b: &[f64]| -> f64 {
            (0..n).map(|i| check_loss(y[i] - b[0] - b[1] * x[(i, 0)] - b[2] * x[(i, 1)], tau)).sum()
        };
        prop_assert!((loss(&fit.coefficients) - fit.check_loss).abs() < 1e-9);
        for k in 0..3 {
            for d in [-1e-3, 1e-3] {
                let mut b = fit.coefficients.clone();
                b[k] += d;
                prop_assert!(loss(&b) >= fit.check_loss - 1e-10);
            }
        }
    }

    #[test]
    fn wqte_median_is_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..80).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..80).map(|_| StandardNormal.sample(&mut rng)).collect();
        prop_assert!(detect::wqte_pair(&a, &b, 0.5).unwrap() >= -1e-9);
    }

    #[test]
    fn raising_threshold_drops_edges(seed in any::<u64>(), lo in -1.0f64..1.0, gap in 0.0f64..1.0) {
        let flows = random_flows(seed, 6);
        let low = detect::threshold_network(&flows, lo).unwrap();
        let high = detect::threshold_network(&flows, lo + gap).unwrap();
        for e in &high.edges {
            prop_assert!(low.edges.iter().any(|l| l.source == e.source && l.target == e.target));
        }
    }

    #[test]
    fn symmetrize_is_idempotent(seed in any::<u64>(), threshold in -0.5f64..1.0) {
        let flows = random_flows(seed, 7);
        let net = detect::threshold_network(&flows, threshold).unwrap();
        let g = network::symmetrize(&net);
        let mut edges = Vec::new();
        for (a, b, w) in g.edges() {
            edges.push(detect::Edge { source: a, target: b, weight: w });
            edges.push(detect::Edge { source: b, target: a, weight: w });
        }
        let again = network::symmetrize(&ContagionNetwork { edges, ..net });
        prop_assert_eq!(g, again);
    }

    #[test]
    fn walktrap_ignores_node_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 9;
        let mut g = UndirectedGraph::new((0..n).map(|i| format!("N{i}")).collect());
        for a in 0..n {
            for b in a + 1..n {
                // strong within thirds, weak across
                let w = if a / 3 == b / 3 { 1.0 } else { 0.05 * rand::Rng::random::<f64>(&mut rng) };
                g.set(a, b, w);
            }
        }
        let perm: Vec<usize> = (0..n).map(|i| (i * 4 + 1) % n).collect();
        let mut h = UndirectedGraph::new(perm.iter().map(|&i| format!("N{i}")).collect());
        for a in 0..n {
            for b in a + 1..n {
                h.set(a, b, g.weight(perm[a], perm[b]));
            }
        }
        let pg = walktrap(&g, 4);
        let ph = walktrap(&h, 4);
        prop_assert_eq!(pg.n_communities, ph.n_communities);
        prop_assert!((pg.modularity - ph.modularity).abs() < 1e-10);
        for a in 0..n {
            for b in 0..n {
                prop_assert_eq!(
                    ph.assignments[a] == ph.assignments[b],
                    pg.assignments[perm[a]] == pg.assignments[perm[b]]
                );
            }
        }
    }

    #[test]
    fn robustness_value_in_unit_interval(t in -1e6f64..1e6, dof in 1usize..100_000) {
        let rv = at::robustness_value(t, dof).unwrap();
        prop_assert!((0.0..1.0).contains(&rv) || rv == 1.0);
    }

    #[test]
    fn classifier_is_order_invariant(labels in prop::collection::vec(0usize..5, 2..4)) {
        let chans: Vec<_> = labels.iter().map(|&i| contagion_core::Channel::from_index(i).unwrap()).collect();
        let mut rev = chans.clone();
        rev.reverse();
        prop_assert_eq!(
            contagion_core::report::classify_identification(&chans).unwrap(),
            contagion_core::report::classify_identification(&rev).unwrap()
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn shares_invariant_to_outcome_scale(seed in any::<u64>(), scale in prop_oneof![0.01f64..0.5, 2.0f64..100.0]) {
        let s = endogenous_sample(seed, 150);
        let base = at::shares(&at::fit_2sls(&s).unwrap().0).unwrap();
        let scaled = at::shares(&at::fit_2sls(&s.with_scaled_outcome(scale)).unwrap().0).unwrap();
        let lp = at::shares(&at::fit_local_projection(&s, 1).unwrap()).unwrap();
        let lp_scaled = at::shares(&at::fit_local_projection(&s.with_scaled_outcome(-scale), 1).unwrap()).unwrap();
        for k in 0..5 {
            prop_assert!((base[k] - scaled[k]).abs() < 1e-9);
            prop_assert!((lp[k] - lp_scaled[k]).abs() < 1e-9);
        }
        prop_assert!((base.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rigobon_ignores_constants(seed in any::<u64>(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let (s, regimes) = contagion_core::synth::gen_two_regime_sample([1.0, 0.5, 0.0, -0.5, 0.2], 300, 0.4, seed).unwrap();
        let mut shifted = s.clone();
        shifted.comovement.add_scalar_mut(a);
        shifted.channels.add_scalar_mut(b);
        let t0 = at::fit_rigobon(&s, &regimes).unwrap().estimate.theta;
        let t1 = at::fit_rigobon(&shifted, &regimes).unwrap().estimate.theta;
        for k in 0..5 {
            prop_assert!((t0[k] - t1[k]).abs() < 1e-8 * (1.0 + t0[k].abs()));
        }
    }

    #[test]
    fn bootstrap_stays_in_convex_hull(seed in any::<u64>(), n_links in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let links: Vec<[f64; 5]> = (0..n_links)
            .map(|_| {
                let raw: [f64; 5] = std::array::from_fn(|_| rand::Rng::random::<f64>(&mut rng) + 1e-3);
                let s: f64 = raw.iter().sum();
                raw.map(|v| v / s)
            })
            .collect();
        let ci = at::bootstrap_shares(&links, 200, seed).unwrap();
        for k in 0..5 {
            let min = links.iter().map(|l| l[k]).fold(f64::INFINITY, f64::min);
            let max = links.iter().map(|l| l[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(ci.lo[k] >= min - 1e-12 && ci.hi[k] <= max + 1e-12 && ci.lo[k] <= ci.hi[k]);
        }
        prop_assert_eq!(ci, at::bootstrap_shares(&links, 200, seed).unwrap());
    }
}

#[test]
fn rigobon_uses_row_aligned_regimes() {
    let (s, regimes) = contagion_core::synth::gen_two_regime_sample([1.5, 0.0, 0.0, 0.0, 0.0], 200, 0.5, 3).unwrap();
    assert_eq!(regimes.len(), s.n_obs());
    assert_eq!(regimes.iter().filter(|r| **r == Regime::High).count(), 100);
    assert!(at::fit_rigobon(&s, &regimes[1..]).is_err());
}

#[test]
fn two_stage_rejects_underidentification() {
    let y = DVector::from_element(20, 1.0);
    let x = DMatrix::from_fn(20, 2, |r, c| (r * (c + 1)) as f64);
    let w = DMatrix::from_element(20, 1, 1.0);
    let z = DMatrix::from_fn(20, 1, |r, _| (r % 3) as f64);
    assert!(at::two_stage_least_squares(&y, &x, &w, &z).is_err());
}
