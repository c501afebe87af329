use martrep_core::enlargement::{
    canonical_pstar, compensated_occurrence_g, immersion_check, is_minimal_martingale_measure, JointModel,
};
use martrep_core::martingale_calculus::{
    covariation, doob_decomposition, enveloping_compensator, is_martingale, mutually_singular,
    predictable_support, sharp_bracket, BracketMeasure,
};
use martrep_core::representation::{
    classify_multiplicity, girsanov, hedge, multiplicity, occurrence_law_from_compensator, prp_check,
    uniqueness_check,
};
use martrep_core::testkit::{atomic_time_law, joint_model_with, SupportShape};
use martrep_core::{cond_exp, Filtration, MeasureVector, ProcessTable, Rational, Scalar};
use martrep_core::{enlargement::density_process, scalar::ratio};
use num::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(seed: u64) -> JointModel<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = [SupportShape::Free, SupportShape::Disjoint, SupportShape::Degenerate][(seed % 3) as usize];
    joint_model_with(&mut rng, shape)
}

fn random_rv(rng: &mut impl Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| ratio(rng.random_range(-20..=20), rng.random_range(1..=5))).collect()
}

fn random_adapted(rng: &mut impl Rng, f: &Filtration) -> ProcessTable<Rational> {
    let rows: Vec<Vec<Rational>> = f
        .partitions()
        .iter()
        .map(|part| {
            let per_cell = random_rv(rng, part.n_cells());
            (0..part.n_atoms()).map(|a| per_cell[part.cell_of(a)].clone()).collect()
        })
        .collect();
    ProcessTable::raw(rows)
}

fn brute_covariation(x: &ProcessTable<Rational>, y: &ProcessTable<Rational>) -> Vec<Vec<Rational>> {
    let mut out = vec![vec![Rational::zero(); x.n_atoms()]];
    for k in 1..x.n_times() {
        let row = (0..x.n_atoms())
            .map(|a| {
                let dx = x.value(k, a) - x.value(k - 1, a);
                let dy = y.value(k, a) - y.value(k - 1, a);
                &out[k - 1][a] + dx * dy
            })
            .collect();
        out.push(row);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tower_property(seed in any::<u64>()) {
        let m = model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let rv = random_rv(&mut rng, m.n_atoms());
        let g = m.g();
        for fine in 0..g.n_times() {
            for coarse in 0..=fine {
                let inner = cond_exp(&rv, g.at(fine), m.p()).unwrap();
                prop_assert_eq!(
                    cond_exp(&inner, g.at(coarse), m.p()).unwrap(),
                    cond_exp(&rv, g.at(coarse), m.p()).unwrap()
                );
            }
        }
    }

    #[test]
    fn join_refines_both_inputs(seed in any::<u64>()) {
        let m = model(seed);
        for k in 0..m.n_times() {
            prop_assert!(m.g().at(k).n_cells() >= m.f().at(k).n_cells());
            prop_assert!(m.g().at(k).n_cells() >= m.h().at(k).n_cells());
        }
    }

    #[test]
    fn stopping_time_validation_matches_level_sets(seed in any::<u64>()) {
        let m = model(seed);
        // η against H: a stopping time iff every {η ≤ t_k} is a union of H_k cells.
        let h = m.h();
        let oracle = (0..m.n_times()).all(|k| {
            h.at(k).cells().iter().all(|cell| {
                let first = m.eta().at(cell[0]).is_some_and(|e| e <= k);
                cell.iter().all(|&a| m.eta().at(a).is_some_and(|e| e <= k) == first)
            })
        });
        prop_assert_eq!(m.eta().validate_stopping_time(h, "eta").is_ok(), oracle);
    }

    #[test]
    fn doob_is_idempotent(seed in any::<u64>()) {
        let m = model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x = random_adapted(&mut rng, m.g());
        let d = doob_decomposition(&x, m.g(), m.p()).unwrap();
        let again = doob_decomposition(&d.martingale, m.g(), m.p()).unwrap();
        prop_assert!(again.predictable.values().iter().flatten().all(|v| v.is_zero()));
        let rebuilt = d.martingale.plus(&d.predictable).unwrap();
        let shifted = x.started_at_zero();
        prop_assert_eq!(rebuilt.values(), shifted.values());
    }

    #[test]
    fn enveloping_compensator_equals_doob(seed in any::<u64>()) {
        let m = model(seed);
        for time in [m.eta(), m.tau()] {
            let z = time.occurrence::<Rational>(m.n_times());
            let env = enveloping_compensator(&z, m.g(), m.p()).unwrap();
            let doob = doob_decomposition(&z, m.g(), m.p()).unwrap();
            prop_assert_eq!(env.values(), doob.predictable.values());
        }
    }

    #[test]
    fn covariation_is_pathwise(seed in any::<u64>()) {
        let m = model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let x = random_adapted(&mut rng, m.g());
        let y = random_adapted(&mut rng, m.g());
        let xy = covariation(&x, &y).unwrap();
        let brute = brute_covariation(&x, &y);
        prop_assert_eq!(xy.values(), brute.as_slice());
        let yx = covariation(&y, &x).unwrap();
        prop_assert_eq!(xy.values(), yx.values());
        let two = ratio(2, 1);
        let lhs = covariation(&x.scaled(&two).plus(&y).unwrap(), &y).unwrap();
        let rhs = covariation(&x, &y).unwrap().scaled(&two).plus(&covariation(&y, &y).unwrap()).unwrap();
        prop_assert_eq!(lhs.values(), rhs.values());
        // Built under P and under P*, the same paths give the same bracket.
        let pstar = canonical_pstar(&m).unwrap();
        let under_p = covariation(&m.m(m.p()).unwrap(), &m.h_martingale(m.p()).unwrap()).unwrap();
        let under_star = covariation(&m.m(&pstar).unwrap(), &m.h_martingale(&pstar).unwrap()).unwrap();
        prop_assert_eq!(under_p.values(), under_star.values());
    }

    #[test]
    fn covariation_zero_iff_brackets_singular(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        let mm = m.m(m.p()).unwrap();
        let n = m.h_martingale(m.p()).unwrap();
        let cov_zero = covariation(&mm, &n).unwrap().vanishes_as(m.p());
        let bm = BracketMeasure::from_process(&sharp_bracket(&mm, &mm, m.g(), &pstar).unwrap()).unwrap();
        let bn = BracketMeasure::from_process(&sharp_bracket(&n, &n, m.g(), &pstar).unwrap()).unwrap();
        let singular = mutually_singular(&bm, &bn, m.g(), &pstar).unwrap().singular;
        prop_assert_eq!(cov_zero, singular);
    }

    #[test]
    fn single_basis_iff_singular(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        let mm = m.m(m.p()).unwrap();
        let n = m.h_martingale(m.p()).unwrap();
        let bm = BracketMeasure::from_process(&sharp_bracket(&mm, &mm, m.g(), &pstar).unwrap()).unwrap();
        let bn = BracketMeasure::from_process(&sharp_bracket(&n, &n, m.g(), &pstar).unwrap()).unwrap();
        let singular = mutually_singular(&bm, &bn, m.g(), &pstar).unwrap().singular;
        let sum = mm.plus(&n).unwrap();
        let sum_spans = prp_check(&[sum], m.g(), &pstar).unwrap().holds;
        if singular {
            prop_assert!(sum_spans);
        }
        let report = multiplicity(m.g(), &pstar).unwrap();
        if report.multiplicity <= 1 {
            prop_assert!(singular);
        }
    }

    #[test]
    fn classifier_matches_multiplicity(seed in any::<u64>()) {
        let m = model(seed);
        let c = classify_multiplicity(&m).unwrap();
        let pstar = canonical_pstar(&m).unwrap();
        prop_assert_eq!(c.verdict, multiplicity(m.g(), &pstar).unwrap().multiplicity);
    }

    #[test]
    fn bracket_atoms_are_predictable_and_supported(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        for x in [m.m(m.p()).unwrap(), m.h_martingale(m.p()).unwrap()] {
            let b = sharp_bracket(&x, &x, m.g(), &pstar).unwrap();
            prop_assert!(b.is_predictable(m.g()));
            let support = predictable_support(&b, m.g(), &pstar).unwrap();
            prop_assert!(support.is_predictable(m.g()));
            let measure = BracketMeasure::from_process(&b).unwrap();
            for a in pstar.support() {
                prop_assert_eq!(support.mass_outside(&measure, a), 0.0);
            }
        }
    }

    #[test]
    fn pstar_preserves_marginals(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        for part in [m.f().terminal(), m.h().terminal()] {
            for cell in part.cells() {
                prop_assert_eq!(pstar.mass_of(cell), m.p().mass_of(cell));
            }
        }
        for c in m.f().terminal().cells() {
            for d in m.h().terminal().cells() {
                let both: Vec<usize> = c.iter().copied().filter(|a| d.contains(a)).collect();
                prop_assert_eq!(pstar.mass_of(&both), pstar.mass_of(c) * pstar.mass_of(d));
            }
        }
    }

    #[test]
    fn h_prime_identity(seed in any::<u64>()) {
        let m = model(seed);
        let c = compensated_occurrence_g(&m, m.p()).unwrap();
        let rebuilt = c.h.plus(&c.a_h).unwrap().minus(&c.a_g).unwrap();
        prop_assert_eq!(rebuilt.values(), c.h_prime.values());
        prop_assert!(is_martingale(&c.h_prime, m.g(), m.p()));
    }

    #[test]
    fn independence_gives_immersion_and_bracket_route(seed in any::<u64>()) {
        let base = model(seed);
        let pstar = canonical_pstar(&base).unwrap();
        let m = base.with_measure(pstar.clone()).unwrap();
        let immersion = immersion_check(&m, m.p());
        prop_assert!(immersion.holds);
        let mh_zero = covariation(&m.m(m.p()).unwrap(), &m.h_martingale(m.p()).unwrap()).unwrap().vanishes_as(m.p());
        let verdict = is_minimal_martingale_measure(&m, m.p(), &pstar).unwrap();
        if immersion.holds && mh_zero {
            prop_assert!(verdict.bracket_route.holds);
        }
        prop_assert!(verdict.is_mmm);
    }

    #[test]
    fn triplet_is_orthogonal_under_pstar(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        let mm = m.m(&pstar).unwrap();
        let h = m.h_martingale(&pstar).unwrap();
        let mh = covariation(&mm, &h).unwrap();
        let triplet = [mm, h, mh];
        for i in 0..3 {
            for j in i + 1..3 {
                prop_assert!(sharp_bracket(&triplet[i], &triplet[j], m.g(), &pstar).unwrap().vanishes_as(&pstar));
            }
        }
        prop_assert!(prp_check(&triplet, m.g(), &pstar).unwrap().holds);
    }

    #[test]
    fn hedging_is_exact_or_orthogonal(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let payoff = random_rv(&mut rng, m.n_atoms());
        let mm = m.m(&pstar).unwrap();
        let h = m.h_martingale(&pstar).unwrap();
        let mh = covariation(&mm, &h).unwrap();
        let full = hedge(&payoff, &[mm.clone(), h.clone(), mh], m.g(), &pstar).unwrap();
        prop_assert!(full.residual.iter().all(|r| r.is_zero()));
        let pair = [mm, h];
        let partial = hedge(&payoff, &pair, m.g(), &pstar).unwrap();
        if prp_check(&pair, m.g(), &pstar).unwrap().holds {
            prop_assert!(partial.residual.iter().all(|r| r.is_zero()));
        }
        for x in &pair {
            let xr: Vec<Rational> = x.terminal().iter().zip(&partial.residual).map(|(a, b)| a * b).collect();
            prop_assert!(pstar.expectation(&xr).is_zero());
        }
    }

    #[test]
    fn gram_schmidt_basis_is_orthogonal(seed in any::<u64>()) {
        let m = model(seed);
        let report = multiplicity(m.g(), m.p()).unwrap();
        for i in 0..report.basis.len() {
            for j in i + 1..report.basis.len() {
                let b = sharp_bracket(&report.basis[i], &report.basis[j], m.g(), m.p()).unwrap();
                prop_assert!(b.values().iter().flatten().all(|v| v.is_zero()));
            }
        }
    }

    #[test]
    fn atomic_time_laws_have_unique_measures(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (tau, p, n_times) = atomic_time_law(&mut rng);
        let h = Filtration::natural_of_occurrence(&tau, n_times);
        let a = martingale_core_compensator(&tau, &h, &p);
        let hm = tau.occurrence::<Rational>(n_times).minus(&a).unwrap();
        let u = uniqueness_check(std::slice::from_ref(&hm), &h, &p).unwrap();
        prop_assert!(u.unique);
        prop_assert_eq!(u.unique, prp_check(&[hm], &h, &p).unwrap().holds);
        prop_assert_eq!(occurrence_law_from_compensator(&tau, &a), p.weights().to_vec());
    }

    #[test]
    fn equal_compensators_force_equal_laws(seed in any::<u64>()) {
        // Reweighting inside H_T cells keeps the H-compensator and the H_T law.
        let m = model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let mut masses: Vec<Rational> = vec![Rational::zero(); m.n_atoms()];
        for cell in m.h().terminal().cells() {
            let w: Vec<Rational> = cell.iter().map(|_| ratio(rng.random_range(1..=9), 1)).collect();
            let total: Rational = w.iter().sum();
            let cell_mass = m.p().mass_of(cell);
            for (&a, wa) in cell.iter().zip(&w) {
                masses[a] = &cell_mass * wa / &total;
            }
        }
        let q = MeasureVector::new(masses).unwrap();
        let ap = martingale_core_compensator(m.tau(), m.h(), m.p());
        let aq = martingale_core_compensator(m.tau(), m.h(), &q);
        prop_assert_eq!(ap.values(), aq.values());
        let law_p = occurrence_law_from_compensator(m.tau(), &ap);
        let law_q = occurrence_law_from_compensator(m.tau(), &aq);
        prop_assert_eq!(&law_p, &law_q);
        for cell in m.h().terminal().cells() {
            prop_assert_eq!(law_p[cell[0]].clone(), q.mass_of(cell));
        }
    }

    #[test]
    fn girsanov_moves_martingales_to_p(seed in any::<u64>()) {
        let m = model(seed);
        let pstar = canonical_pstar(&m).unwrap();
        let h = m.h_martingale(&pstar).unwrap();
        let mm = m.m(&pstar).unwrap();
        let d = density_process(m.p(), &pstar, m.g(), &h).unwrap();
        for x in girsanov(&[mm, h.clone()], &d.l, m.g(), &pstar).unwrap() {
            prop_assert!(is_martingale(&x, m.g(), m.p()));
        }
        prop_assert!(d.l.value(0, 0).is_one());
    }
}

fn martingale_core_compensator(
    tau: &martrep_core::RandomTime,
    h: &Filtration,
    p: &MeasureVector<Rational>,
) -> ProcessTable<Rational> {
    martrep_core::martingale_calculus::compensator_of_occurrence(tau, h, p).unwrap()
}

#[test]
fn double_mode_agrees_with_exact_mode() {
    for seed in 0..20 {
        let m = model(seed);
        let exact = canonical_pstar(&m).unwrap();
        let approx = canonical_pstar(&m.to_f64()).unwrap();
        for (a, b) in exact.weights().iter().zip(approx.weights()) {
            assert!((a.to_f64_lossy() - b).abs() < 1e-12);
        }
    }
}
