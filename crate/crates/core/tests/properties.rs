use proptest::prelude::*;

use ris_isac::admm::{update_lambda, update_psi};
use ris_isac::channel::ChannelSet;
use ris_isac::config_io::{complex_normal, make_rng, parse_config, Field, ScenarioConfig, Stream, Table};
use ris_isac::detection::analytic_pd;
use ris_isac::manifold::{random_phases, retract, tangent_project};
use ris_isac::signal::{make_shift_matrix, radar_snr};
use ris_isac::surrogate::{build_surrogate, f_surr, g_surr, quadratic_objective, true_constraint};
use ris_isac::{CMat, CVec, C64};

fn cvec(rng: &mut Stream, n: usize, var: f64) -> CVec {
    CVec::from_fn(n, |_, _| complex_normal(rng, var))
}

fn cmat(rng: &mut Stream, r: usize, c: usize, var: f64) -> CMat {
    CMat::from_fn(r, c, |_, _| complex_normal(rng, var))
}

fn channels(rng: &mut Stream, m: usize, n: usize, k: usize) -> ChannelSet {
    ChannelSet {
        h_dt: cvec(rng, m, 1.0),
        h_rt: cvec(rng, n, 1.0),
        g: cmat(rng, n, m, 1.0),
        h_dk: (0..k).map(|_| cvec(rng, m, 1.0)).collect(),
        h_rk: (0..k).map(|_| cvec(rng, n, 1.0)).collect(),
    }
}

fn unit_cfg(m: usize, n: usize, k: usize, gamma_db: f64) -> ScenarioConfig {
    let mut c = ScenarioConfig::reference();
    c.m = m;
    c.n = n;
    c.k = k;
    c.l = 8;
    c.tau = 2;
    c.radar_noise_dbm = 30.0;
    c.user_noise_dbm = 30.0;
    c.power_w = 10.0;
    c.set_uniform_gamma_db(gamma_db);
    c
}

fn complex_vec(len: usize) -> impl Strategy<Value = CVec> {
    prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), len)
        .prop_map(|v| CVec::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn psi_is_unit_modulus(phi in complex_vec(12), lam in complex_vec(12), rho in 1e-3f64..1e3) {
        let psi = update_psi(&phi, &lam, rho);
        for (p, (a, b)) in psi.iter().zip(phi.iter().zip(lam.iter())) {
            prop_assert!((p.norm() - 1.0).abs() < 1e-14);
            let z = a * rho + b;
            if z.norm() > 1e-9 {
                // psi is the closest unit-modulus point to rho phi + lambda
                prop_assert!((p - z / z.norm()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn psi_breaks_ties_to_one(n in 1usize..8, rho in 1e-3f64..1e3) {
        let psi = update_psi(&CVec::zeros(n), &CVec::zeros(n), rho);
        prop_assert!(psi.iter().all(|z| *z == C64::new(1.0, 0.0)));
    }

    #[test]
    fn lambda_step_is_affine(phi in complex_vec(6), psi in complex_vec(6), lam in complex_vec(6), rho in 1e-3f64..1e3) {
        let next = update_lambda(&lam, &phi, &psi, rho);
        let expect = &lam + (&phi - &psi) * C64::new(rho, 0.0);
        prop_assert!((next - expect).norm() <= 1e-12 * (1.0 + lam.norm() + rho * (phi.norm() + psi.norm())));
        prop_assert_eq!(update_lambda(&lam, &phi, &phi, rho), lam);
    }

    #[test]
    fn tangent_projection_is_orthogonal_and_idempotent(seed in any::<u64>(), n in 1usize..16) {
        let mut rng = make_rng(seed, "prop.tangent");
        let phi = random_phases(&mut rng, n);
        let g = cvec(&mut rng, n, 1.0);
        let t = tangent_project(&phi, &g);
        for (tn, pn) in t.iter().zip(phi.iter()) {
            prop_assert!((tn * pn.conj()).re.abs() < 1e-12);
        }
        prop_assert!((tangent_project(&phi, &t) - &t).norm() < 1e-12);
        let step = &t * C64::new(0.3, 0.0);
        let next = retract(&phi, &step).phi;
        prop_assert!(next.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
    }

    #[test]
    fn snr_invariant_under_unitary_mixing(seed in any::<u64>(), m in 1usize..4, n in 0usize..5, k in 0usize..3) {
        let mut rng = make_rng(seed, "prop.unitary");
        let ch = channels(&mut rng, m, n, k);
        let cfg = unit_cfg(m, n, k, 0.0);
        let phi = random_phases(&mut rng, n);
        let w = cmat(&mut rng, m, k + m, 1.0);
        let q = cmat(&mut rng, k + m, k + m, 1.0).qr().q();
        let a = radar_snr(&w, &phi, &cfg, &ch);
        let b = radar_snr(&(&w * q), &phi, &cfg, &ch);
        prop_assert!((a - b).abs() <= 1e-10 * a);
    }

    #[test]
    fn surrogates_are_global_minorants(seed in any::<u64>(), m in 1usize..4, n in 1usize..5, k in 1usize..3, scale in 0.01f64..10.0) {
        let mut rng = make_rng(seed, "prop.surrogate");
        let ch = channels(&mut rng, m, n, k);
        let cfg = unit_cfg(m, n, k, 3.0);
        let phi_t = random_phases(&mut rng, n);
        let w_t = cmat(&mut rng, m, k + m, 1.0);
        let sp = build_surrogate(&w_t, &phi_t, &cfg, &ch);
        let w = &sp.w_t + cmat(&mut rng, m, k + m, scale);
        let phi = &phi_t + cvec(&mut rng, n, scale);
        let q = quadratic_objective(&w, &phi_t, &cfg, &ch);
        let s = 2.0 * f_surr(&sp, &w, &phi_t) - sp.c1;
        prop_assert!(s <= q + 1e-10 * q.max(sp.c1));
        for kk in 0..k {
            let g = g_surr(&sp, kk, &w, &phi);
            let t = true_constraint(kk, &w, &phi, &cfg, &ch);
            prop_assert!(g <= t + 1e-10 * (1.0 + t.abs() + g.abs()));
        }
    }

    #[test]
    fn swerling_power_law_is_monotone(p in 1e-6f64..0.5, dp in 1e-6f64..0.4, snr in 0.0f64..1e4, ds in 0.0f64..1e3) {
        let base = analytic_pd(p, snr);
        prop_assert!(base >= p && base <= 1.0);
        prop_assert!(analytic_pd(p + dp, snr) >= base);
        prop_assert!(analytic_pd(p, snr + ds) >= base);
    }

    #[test]
    fn shift_matches_dense_product(l in 1usize..8, extra in 0usize..6, seed in any::<u64>()) {
        let q = l + extra;
        let offset = extra / 2;
        let j = make_shift_matrix(l, q, offset).unwrap();
        let x = cmat(&mut make_rng(seed, "prop.shift"), 3, l, 1.0);
        prop_assert_eq!(j.apply_right(&x), &x * j.to_dense());
    }

    #[test]
    fn config_round_trips(
        m in 1usize..32, n in 0usize..128, k in 0usize..8, l in 2usize..128,
        power in 0.1f64..100.0, gamma in -5.0f64..20.0, s1 in 0.0f64..2.0,
        rho in 1e-3f64..1e3, seed in any::<u64>(),
    ) {
        let mut c = ScenarioConfig::reference();
        c.m = m;
        c.n = n;
        c.k = k;
        c.l = l;
        c.tau = l / 3;
        c.power_w = power;
        c.set_uniform_gamma_db(gamma);
        c.sigma1_sq = s1;
        c.sigma0_sq = 2.0 - s1;
        c.solver.rho = rho;
        c.seed = seed;
        prop_assume!(c.validate().is_ok());
        let text = c.to_toml_string();
        let back = parse_config(&text).unwrap();
        prop_assert_eq!(&back, &c);
        prop_assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn csv_is_deterministic_and_parses_back(rows in prop::collection::vec((any::<i64>(), -1e12f64..1e12, "[a-z_,\" ]{0,8}"), 0..20)) {
        let mut t = Table::new("t", &["i", "x", "s"]);
        for (i, x, s) in &rows {
            t.push(vec![Field::Int(*i), Field::Float(*x), Field::Text(s.clone())]);
        }
        let text = t.to_csv_string();
        prop_assert_eq!(&text, &t.clone().to_csv_string());
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        prop_assert_eq!(reader.headers().unwrap().iter().collect::<Vec<_>>(), vec!["i", "x", "s"]);
        let back: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        prop_assert_eq!(back.len(), rows.len());
        for (rec, (i, x, s)) in back.iter().zip(&rows) {
            prop_assert_eq!(rec[0].parse::<i64>().unwrap(), *i);
            let v: f64 = rec[1].parse().unwrap();
            prop_assert!((v - x).abs() <= 1e-8 * x.abs().max(1e-4));
            prop_assert_eq!(&rec[2], s.as_str());
        }
    }
}
