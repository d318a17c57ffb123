use detloop::behaviors::{
    ace, bell_from_quantum, instrumental_from_bell, instrumental_from_quantum, no_signaling_report, Behavior, Scenario,
};
use detloop::closedform::{
    branciard_feasible, ch_nsite_threshold, istar_bounds, mermin_threshold, pam_eta_qc, quintino_feasible,
};
use detloop::functionals::{build, build_default, evaluate_ij, Params};
use detloop::io::{results_to_csv, ResultRow};
use detloop::loss::{bell_absorb, bell_extra_outcome, instrumental_absorb, LossSpec};
use detloop::optimize::{maximize, OptimizerConfig, Problem, StrategySpace};
use detloop::polytope::{enumerate_vertices, facet_enumeration, membership, Membership};
use detloop::qcore::{
    apply_channel, bloch_direction, bloch_projective, bloch_qubit, born_joint, c, dual_apply, make_channel, schmidt_pair,
    CMatrix, ChannelKind, Povm, QuantumState,
};
use proptest::prelude::*;

fn unit() -> impl Strategy<Value = f64> {
    0.0f64..=1.0
}

/// Point of a strategy space from uniform samples in [0,1].
fn point(space: &StrategySpace, u: &[f64]) -> Vec<f64> {
    space.bounds().iter().zip(u).map(|((lo, hi), t)| lo + (hi - lo) * t).collect()
}

fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(unit(), n)
}

fn bell_space() -> StrategySpace {
    StrategySpace::BellQubits { n_a: 2, n_b: 2, n_x: 2, n_y: 2 }
}

fn random_qubit_state(polar: f64, azimuth: f64, r: f64) -> QuantumState {
    let d = bloch_direction(polar, azimuth);
    bloch_qubit([r * d[0], r * d[1], r * d[2]]).unwrap()
}

fn qutrit_projector(v: &[f64]) -> CMatrix {
    let ket = [c(v[0] + 0.1, v[1]), c(v[2] - 0.5, v[3]), c(v[4], v[5] - 0.5)];
    QuantumState::pure(&ket).unwrap().mat().clone()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn mix(a: &Behavior, b: &Behavior, lambda: f64) -> Behavior {
    let p: Vec<f64> = a.probs().iter().zip(b.probs()).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
    Behavior::new(a.scenario(), p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn channel_duality(u in samples(6), t in unit(), q in unit()) {
        let rho = random_qubit_state(u[0] * 3.2, u[1] * 6.3, u[2]);
        let effect = bloch_projective(bloch_direction(u[3] * 3.2, u[4] * 6.3)).unwrap().effects()[0].clone();
        for kind in [ChannelKind::AmplitudeDamping { t }, ChannelKind::Depolarizing { q, d: 2 }] {
            let ch = make_channel(kind).unwrap();
            let lhs = apply_channel(&ch, &rho).unwrap().mat().trace_product(&effect);
            let rhs = rho.mat().trace_product(&dual_apply(&ch, &effect).unwrap());
            prop_assert!((lhs - rhs).norm() < 1e-9);
        }
    }

    #[test]
    fn fock_channel_duality(u in samples(12), tr in unit()) {
        let rho = QuantumState::new(qutrit_projector(&u[..6])).unwrap();
        let effect = qutrit_projector(&u[6..]);
        let ch = make_channel(ChannelKind::AmplitudeDampingFock { transmittance: tr, dim: 3 }).unwrap();
        let lhs = apply_channel(&ch, &rho).unwrap().mat().trace_product(&effect);
        let rhs = rho.mat().trace_product(&dual_apply(&ch, &effect).unwrap());
        prop_assert!((lhs - rhs).norm() < 1e-9);
    }

    #[test]
    fn depolarizing_composes(u in samples(3), q1 in unit(), q2 in unit()) {
        let rho = random_qubit_state(u[0] * 3.2, u[1] * 6.3, u[2]);
        let a = make_channel(ChannelKind::Depolarizing { q: q1, d: 2 }).unwrap();
        let b = make_channel(ChannelKind::Depolarizing { q: q2, d: 2 }).unwrap();
        let ab = make_channel(ChannelKind::Depolarizing { q: 1.0 - (1.0 - q1) * (1.0 - q2), d: 2 }).unwrap();
        let seq = apply_channel(&a.compose(&b).unwrap(), &rho).unwrap();
        let direct = apply_channel(&ab, &rho).unwrap();
        prop_assert!(seq.mat().max_abs_diff(direct.mat()) < 1e-9);
    }

    #[test]
    fn born_rule_normalizes(u in samples(5)) {
        let state = schmidt_pair(u[0] * 1.6).unwrap();
        let pa = bloch_projective(bloch_direction(u[1] * 3.2, u[2] * 6.3)).unwrap();
        let pb = bloch_projective(bloch_direction(u[3] * 3.2, u[4] * 6.3)).unwrap();
        let mut total = 0.0;
        for ea in pa.effects() {
            for eb in pb.effects() {
                total += born_joint(&state, &[ea, eb]).unwrap();
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bell_map_matches_direct_instrumental(u in samples(11)) {
        let state = schmidt_pair(u[0] * 1.6).unwrap();
        let povm = |k: usize| bloch_projective(bloch_direction(u[k] * 3.2, u[k + 1] * 6.3)).unwrap();
        let a: Vec<Povm> = vec![povm(1), povm(3)];
        let b: Vec<Povm> = vec![povm(5), povm(7)];
        let via_bell = instrumental_from_bell(&bell_from_quantum(&state, &a, &b).unwrap()).unwrap();
        let direct = instrumental_from_quantum(&state, &a, &b).unwrap();
        prop_assert!(max_diff(via_bell.probs(), direct.probs()) < 1e-9);
    }

    #[test]
    fn ace_ignores_relabeling_of_b(u in samples(11)) {
        let space = StrategySpace::InstrumentalQubits { n_x: 2, n_a: 2, n_b: 2 };
        let b = space.decode(&point(&space, &u)).unwrap();
        let sc = b.scenario();
        let mut p = vec![0.0; sc.len()];
        for k in 0..sc.len() {
            let mut idx = sc.index_tuple(k);
            idx[2] = idx[2].map(|v| v ^ 1);
            p[sc.flat_index(&idx).unwrap()] = b.get(k);
        }
        let swapped = Behavior::new(sc, p).unwrap();
        prop_assert!((ace(&b).unwrap() - ace(&swapped).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn bell_loss_preserves_no_signaling(u in samples(9), e1 in unit(), e2 in unit(), sa in 0usize..2, sb in 0usize..2) {
        let b = bell_space().decode(&point(&bell_space(), &u)).unwrap();
        prop_assert!(no_signaling_report(&bell_absorb(&b, e1, e2, sa, sb).unwrap()).unwrap().pass);
        prop_assert!(no_signaling_report(&bell_extra_outcome(&b, e1, e2).unwrap()).unwrap().pass);
    }

    #[test]
    fn qutrit_absorption_preserves_no_signaling(u in samples(10), e1 in unit(), e2 in unit(), sa in 0usize..3, sb in 0usize..3) {
        let space = StrategySpace::BellQutritFourier;
        let b = space.decode(&point(&space, &u)).unwrap();
        prop_assert!(no_signaling_report(&bell_absorb(&b, e1, e2, sa, sb).unwrap()).unwrap().pass);
    }

    #[test]
    fn loss_maps_are_affine_in_the_behavior(u in samples(9), v in samples(9), lambda in unit(), e1 in unit(), e2 in unit()) {
        let b1 = bell_space().decode(&point(&bell_space(), &u)).unwrap();
        let b2 = bell_space().decode(&point(&bell_space(), &v)).unwrap();
        let m = mix(&b1, &b2, lambda);
        for spec in [LossSpec::absorption(e1, e2, 1, 0), LossSpec::extra_outcome(e1, e2)] {
            let lhs = spec.apply(&m).unwrap();
            let rhs = mix(&spec.apply(&b1).unwrap(), &spec.apply(&b2).unwrap(), lambda);
            prop_assert!(max_diff(lhs.probs(), rhs.probs()) < 1e-12);
        }
    }

    #[test]
    fn loss_map_endpoints(u in samples(9), v in samples(9), sa in 0usize..2, sb in 0usize..2) {
        let b1 = bell_space().decode(&point(&bell_space(), &u)).unwrap();
        let b2 = bell_space().decode(&point(&bell_space(), &v)).unwrap();
        prop_assert!(max_diff(bell_absorb(&b1, 1.0, 1.0, sa, sb).unwrap().probs(), b1.probs()) < 1e-15);
        let e = bell_extra_outcome(&b1, 1.0, 1.0).unwrap();
        let esc = e.scenario();
        for x in 0..2 {
            for y in 0..2 {
                for a in 0..3 {
                    for b in 0..3 {
                        let want = if a < 2 && b < 2 { b1.bell(a, b, x, y) } else { 0.0 };
                        prop_assert!((e.get(esc.ix_bell(a, b, x, y)) - want).abs() < 1e-15);
                    }
                }
            }
        }
        for spec in [LossSpec::absorption(0.0, 0.0, sa, sb), LossSpec::extra_outcome(0.0, 0.0)] {
            prop_assert!(max_diff(spec.apply(&b1).unwrap().probs(), spec.apply(&b2).unwrap().probs()) < 1e-15);
        }
    }

    #[test]
    fn instrumental_absorption_commutes_with_bell_map(u in samples(9), e1 in unit(), e2 in unit(), sa in 0usize..2, sb in 0usize..2) {
        let b = bell_space().decode(&point(&bell_space(), &u)).unwrap();
        let lhs = instrumental_from_bell(&bell_absorb(&b, e1, e2, sa, sb).unwrap()).unwrap();
        let rhs = instrumental_absorb(&instrumental_from_bell(&b).unwrap(), e1, e2, sa, sb).unwrap();
        prop_assert!(max_diff(lhs.probs(), rhs.probs()) < 1e-12);
    }

    #[test]
    fn linear_functionals_are_affine_in_each_efficiency(u in samples(12), other in unit(), t in unit()) {
        let cases: Vec<(&str, LossSpec)> = vec![
            ("chsh", LossSpec::absorption(1.0, 1.0, 1, 0)),
            ("chsh", LossSpec::absorption(1.0, 1.0, 1, 1)),
            ("eberhard", LossSpec::extra_outcome(1.0, 1.0)),
            ("i222", LossSpec::absorption(1.0, 1.0, 1, 0)),
            ("i223", LossSpec::hybrid(1.0, 1.0, 1)),
            ("i233", LossSpec::absorption(1.0, 1.0, 2, 2)),
            ("cglmp3", LossSpec::absorption(1.0, 1.0, 2, 2)),
        ];
        for (name, loss) in cases {
            let f = build_default(name).unwrap();
            let space = StrategySpace::for_functional(&f, Some(&loss)).unwrap();
            let x = point(&space, &u[..space.dim()]);
            let p = Problem::new(&f, &space, Some(&loss)).unwrap();
            for first in [true, false] {
                let at = |e: f64| {
                    let spec = if first { loss.with_parties(e, other) } else { loss.with_parties(other, e) };
                    p.with_loss(Some(spec)).value(&x).unwrap()
                };
                let (g0, g1, gt) = (at(0.0), at(1.0), at(t));
                prop_assert!((gt - ((1.0 - t) * g0 + t * g1)).abs() < 1e-9, "{name}: {gt} vs {g0}, {g1}");
            }
        }
    }

    #[test]
    fn pam_loss_is_affine_per_setting(u in samples(10), other in unit(), t in unit()) {
        let f = build_default("s3").unwrap();
        let loss = LossSpec::pam_absorption(vec![1.0, 1.0], 0);
        let space = StrategySpace::for_functional(&f, Some(&loss)).unwrap();
        let x = point(&space, &u[..space.dim()]);
        let p = Problem::new(&f, &space, Some(&loss)).unwrap();
        let at = |e: f64| p.with_loss(Some(loss.with_settings(vec![e, other]))).value(&x).unwrap();
        prop_assert!((at(t) - ((1.0 - t) * at(0.0) + t * at(1.0))).abs() < 1e-9);
    }

    #[test]
    fn ij_follows_the_square_root_scaling_law(u in samples(10), e1 in unit(), e2 in unit()) {
        let f = build_default("ij").unwrap();
        let x = point(&StrategySpace::Bilocal, &u);
        let ideal = Problem::new(&f, &StrategySpace::Bilocal, None).unwrap().value(&x).unwrap();
        let lossy = Problem::new(&f, &StrategySpace::Bilocal, Some(&LossSpec::extra_outcome(e1, e2))).unwrap().value(&x).unwrap();
        prop_assert!((lossy - (e1 * e2).sqrt() * ideal).abs() < 1e-9, "{lossy} vs {}", (e1 * e2).sqrt() * ideal);
    }

    #[test]
    fn ij_is_symmetric_under_end_swap_and_bob_relabeling(u in samples(10)) {
        let b = StrategySpace::Bilocal.decode(&point(&StrategySpace::Bilocal, &u)).unwrap();
        let sc = b.scenario();
        let mut p = vec![0.0; sc.len()];
        let mut q = vec![0.0; sc.len()];
        for x in 0..2 {
            for z in 0..2 {
                for a in 0..2 {
                    for b0 in 0..2 {
                        for b1 in 0..2 {
                            for cc in 0..2 {
                                p[sc.ix_bilocal(cc, b0, b1, a, z, x)] = b.bilocal(a, b0, b1, cc, x, z);
                                q[sc.ix_bilocal(a, b0 ^ 1, b1 ^ 1, cc, x, z)] = b.bilocal(a, b0, b1, cc, x, z);
                            }
                        }
                    }
                }
            }
        }
        let ij = evaluate_ij(&b).unwrap();
        prop_assert!((ij - evaluate_ij(&Behavior::new(sc, p).unwrap()).unwrap()).abs() < 1e-12);
        prop_assert!((ij - evaluate_ij(&Behavior::new(sc, q).unwrap()).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ace_bound_holds_on_classical_mixtures(w in prop::collection::vec(0.0f64..1.0, 16)) {
        let vs = enumerate_vertices(Scenario::instrumental(2, 2, 2), true).unwrap();
        let f = build_default("ace_lb").unwrap();
        let total: f64 = w.iter().sum::<f64>() + 1e-9;
        let mut p = vec![0.0; vs.scenario.len()];
        for (k, wk) in w.iter().enumerate().take(vs.len()) {
            for (pi, vi) in p.iter_mut().zip(vs.full_vertex(k)) {
                *pi += wk / total * vi;
            }
        }
        let b = Behavior::new(vs.scenario, p.iter().map(|v| v.min(1.0)).collect());
        if let Ok(b) = b {
            prop_assert!(ace(&b).unwrap() >= f.evaluate(&b).unwrap() - 1e-12);
        }
    }

    #[test]
    fn quintino_with_equal_efficiencies_is_branciard(e in unit()) {
        prop_assert_eq!(quintino_feasible(e, e, e, e).unwrap(), branciard_feasible(e, e).unwrap());
    }

    #[test]
    fn membership_reconstructs_inside_points(w in prop::collection::vec(0.01f64..1.0, 12)) {
        let vs = enumerate_vertices(Scenario::instrumental(2, 2, 2), false).unwrap();
        let total: f64 = w.iter().sum();
        let mut p = vec![0.0; vs.scenario.len()];
        for (k, wk) in w.iter().enumerate() {
            for (pi, vi) in p.iter_mut().zip(vs.full_vertex(k)) {
                *pi += wk / total * vi;
            }
        }
        let proj: Vec<f64> = vs.coords.iter().map(|c| p[*c]).collect();
        match membership(&proj, &vs).unwrap() {
            Membership::Inside { weights, reconstruction_error } => {
                prop_assert!(weights.iter().all(|x| *x >= -1e-12));
                prop_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
                prop_assert!(reconstruction_error < 1e-8);
            }
            Membership::Outside { certificate } => prop_assert!(false, "outside, margin {}", certificate.margin),
        }
    }

    #[test]
    fn quantum_instrumental_points_are_inside_the_observational_polytope(u in samples(11)) {
        let space = StrategySpace::InstrumentalQubits { n_x: 2, n_a: 2, n_b: 2 };
        let b = space.decode(&point(&space, &u)).unwrap();
        let vs = enumerate_vertices(Scenario::instrumental(2, 2, 2), false).unwrap();
        let proj: Vec<f64> = vs.coords.iter().map(|c| b.get(*c)).collect();
        let inside = matches!(membership(&proj, &vs).unwrap(), Membership::Inside { .. });
        prop_assert!(inside);
    }
}

#[test]
fn closed_form_threshold_orderings() {
    let mut prev = ch_nsite_threshold(2).unwrap();
    for n in 3..=100 {
        let t = ch_nsite_threshold(n).unwrap();
        assert!(t < prev && t > 0.5, "n={n}");
        prev = t;
    }
    assert!(prev - 0.5 < 3e-3);
    for n in 2..=100 {
        assert!(mermin_threshold(n).unwrap() > ch_nsite_threshold(n).unwrap(), "n={n}");
    }
    for n in 3..=100 {
        let m = mermin_threshold(n).unwrap();
        assert!(m > 0.5 && m <= 0.75, "n={n}: {m}");
    }
    // n = 2 gives 1, outside the (1/2, 3/4] window that holds from n = 3
    assert_eq!(mermin_threshold(2).unwrap(), 1.0);
    for d in 2..=20u64 {
        let (lo, _) = istar_bounds(d).unwrap();
        let eta = pam_eta_qc(d, lo).unwrap();
        let df = d as f64;
        assert!(eta <= (df - 1.0) / (df - 2.0 + 2f64.sqrt()) + 1e-15);
        assert!(eta >= (df - 1.0) / df - 1e-15);
    }
}

/// Affine rank of a set of integer points.
fn affine_rank(points: &[Vec<f64>]) -> usize {
    if points.is_empty() {
        return 0;
    }
    let mut rows: Vec<Vec<f64>> = points[1..].iter().map(|p| p.iter().zip(&points[0]).map(|(a, b)| a - b).collect()).collect();
    let cols = points[0].len();
    let mut rank = 0;
    for col in 0..cols {
        let Some(piv) = (rank..rows.len()).find(|r| rows[*r][col].abs() > 1e-9) else { continue };
        rows.swap(rank, piv);
        for r in 0..rows.len() {
            if r != rank {
                let factor = rows[r][col] / rows[rank][col];
                if factor != 0.0 {
                    for k in col..cols {
                        rows[r][k] -= factor * rows[rank][k];
                    }
                }
            }
        }
        rank += 1;
    }
    rank
}

#[test]
fn facets_are_valid_and_tight() {
    for (sc, hybrid) in [
        (Scenario::instrumental(2, 2, 2), true),
        (Scenario::instrumental(2, 2, 2), false),
        (Scenario::instrumental(3, 2, 2), false),
        (Scenario::instrumental(2, 2, 3), true),
        (Scenario::bell(2, 2, 2, 2), false),
    ] {
        let vs = enumerate_vertices(sc, hybrid).unwrap();
        let pts: Vec<Vec<f64>> = (0..vs.len()).map(|k| vs.full_vertex(k)).collect();
        let dim = affine_rank(&pts);
        for f in facet_enumeration(&vs).unwrap() {
            let values: Vec<f64> = pts.iter().map(|p| f.normal.iter().zip(p).map(|(n, x)| *n as f64 * x).sum()).collect();
            assert!(values.iter().all(|v| *v <= f.offset as f64 + 1e-9), "{}", f.render(&sc));
            let tight: Vec<Vec<f64>> =
                pts.iter().zip(&values).filter(|(_, v)| (**v - f.offset as f64).abs() < 1e-9).map(|(p, _)| p.clone()).collect();
            assert_eq!(tight.len(), f.tight.len());
            assert_eq!(affine_rank(&tight), dim - 1, "{} {}", sc.label(), f.render(&sc));
        }
    }
}

#[test]
fn optimization_is_bitwise_reproducible() {
    let f = build("chsh", &Params::new()).unwrap();
    let loss = LossSpec::absorption(0.9, 0.8, 1, 0);
    let space = StrategySpace::for_functional(&f, Some(&loss)).unwrap();
    let cfg = OptimizerConfig { restarts: 6, seed: 42, ..Default::default() };
    let a = maximize(&f, &space, Some(&loss), &cfg).unwrap();
    let b = maximize(&f, &space, Some(&loss), &cfg).unwrap();
    assert_eq!(a.value.to_bits(), b.value.to_bits());
    assert_eq!(a.params.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.params.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    let row = |v: f64| ResultRow {
        task: "maximize".into(),
        functional: "chsh".into(),
        loss_model: "absorption".into(),
        eta1: Some(0.9),
        eta2: Some(0.8),
        value: Some(v),
        classical_bound: 2.0,
        converged: true,
    };
    assert_eq!(results_to_csv(&[row(a.value)]).unwrap(), results_to_csv(&[row(b.value)]).unwrap());
    let other = maximize(&f, &space, Some(&loss), &OptimizerConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(other.params, a.params);
}

#[test]
fn critical_efficiency_brackets_the_violation() {
    use detloop::optimize::{critical_efficiency, maximize_problem, EtaFamily};
    let f = build("chsh", &[("branch".to_string(), "lower".into())].into_iter().collect()).unwrap();
    let loss = LossSpec::absorption(1.0, 1.0, 1, 0);
    let space = StrategySpace::for_functional(&f, Some(&loss)).unwrap();
    let cfg = OptimizerConfig::default().with_restarts(16);
    let tol = 1e-3;
    let r = critical_efficiency(&f, &space, &loss, EtaFamily::Symmetric, &cfg, tol).unwrap();
    let p = Problem::new(&f, &space, Some(&loss)).unwrap();
    // the violating region near the threshold is narrow, so both probes start from the bisection's strategy
    let warm = cfg.with_initial(Some(r.best_params.clone()));
    let probe = |eta: f64| maximize_problem(&p.with_loss(Some(loss.with_parties(eta, eta))), &warm).unwrap();
    let above = probe(r.eta_star + 2.0 * tol);
    let below = probe(r.eta_star - 2.0 * tol);
    // same violation criterion as the bisection
    assert!(above.margin > cfg.violation_tol, "{}", above.value);
    assert!(below.margin <= cfg.violation_tol, "{}", below.value);
}
