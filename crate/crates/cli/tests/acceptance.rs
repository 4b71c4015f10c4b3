//! Acceptance gate: nine executable criteria covering the closed-form
//! anchors, the simulation-backed domination properties, the capacity-limit
//! distance ladder, the generator property suite, and CLI reproducibility.
//!
//! Each criterion is one test printing a single `PASS criterion N` line
//! (visible with `--nocapture`); a violated criterion fails its test, so
//! the cargo summary doubles as the pass/fail table.

use std::fs;
use std::process::Command;
use std::time::Instant;

use driftbound::arrival::MarkovArrivalProcess;
use driftbound::bound::{
    atom_bound, general_bound, map_gi1_witness, map_gi1_witness_special, optimize_witness,
};
use driftbound::drift::{
    build_map_gi1, build_mg1_light, build_mg1_moderate, build_mg1_polynomial, generator_check,
    DriftCertificate, DriftInput, ModerateParams, PolynomialParams, QueueArrivals,
};
use driftbound::linalg::{matrix_exponential, Matrix};
use driftbound::service::TailEnvelope;
use driftbound::sim::{
    estimate_h, estimate_pi_g, estimate_return_probability, estimate_stationary_histogram,
    QueueModel, RegenerativeEstimate, Reward, WorkloadState,
};
use driftbound::wcl::wcl_distance_bound;
use driftbound::{ServiceLaw, Tolerances, WclModel};

// ---------------------------------------------------------------------------
// Shared fixtures

fn tol() -> Tolerances {
    Tolerances::default()
}

fn exp_service(rate: f64) -> ServiceLaw {
    ServiceLaw::Exponential { rate }
}

/// Rate-1 exponential service at offered load 1/2 with drift exponent 0.4:
/// every constant is available in closed form.
fn light_cert() -> DriftCertificate {
    let input = DriftInput::new(0.5, exp_service(1.0));
    build_mg1_light(&input, 0.4, &tol()).expect("light certificate")
}

/// Stretched-exponential service tail `e^{-x^0.5}` at offered load 1/2.
fn moderate_cert() -> (DriftCertificate, DriftInput) {
    let law = ServiceLaw::WeibullTail {
        shape: 0.5,
        rate: 1.0,
    };
    let input = DriftInput::new(0.25, law);
    let envelope = TailEnvelope::for_law(&input.law);
    let params = ModerateParams {
        epsilon: 0.1,
        x0: 100.0,
        rho_tilde: 0.75,
    };
    let cert =
        build_mg1_moderate(&input, &envelope, &params, &tol()).expect("moderate certificate");
    (cert, input)
}

/// Power-law service tail `(1 + x)^{-3}` at offered load 1/2.
fn polynomial_cert() -> (DriftCertificate, DriftInput) {
    let law = ServiceLaw::ParetoTail {
        exponent: 3.0,
        scale: 1.0,
    };
    let input = DriftInput::new(1.0, law);
    let envelope = TailEnvelope::for_law(&input.law);
    let params = PolynomialParams {
        kappa_tilde: 2.0,
        x0: 2.0,
        rho_tilde: 0.8,
    };
    let cert =
        build_mg1_polynomial(&input, &envelope, &params, &tol()).expect("polynomial certificate");
    (cert, input)
}

/// Two-phase arrival modulation with identity arrival rates: stationary
/// rate 1, offered load 1/2 with rate-2 exponential service.
fn map2() -> MarkovArrivalProcess {
    MarkovArrivalProcess::new(
        Matrix::from_rows(vec![vec![-2.0, 1.0], vec![0.5, -1.5]]).unwrap(),
        Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        &tol(),
    )
    .expect("valid arrival process")
}

fn map_cert(map: &MarkovArrivalProcess) -> DriftCertificate {
    build_map_gi1(map, &exp_service(2.0), 0.5, &tol()).expect("phase certificate")
}

fn grid10() -> Vec<f64> {
    (0..10).map(|k| 0.5 * k as f64).collect()
}

/// `|estimate| <= bound + 3 SE` at one state, with context on failure.
fn assert_dominates(bound: f64, est: &RegenerativeEstimate, what: &str) {
    assert!(
        est.point.abs() <= bound + 3.0 * est.std_error,
        "{what}: |{}| > {} + 3 * {}",
        est.point,
        bound,
        est.std_error
    );
}

// ---------------------------------------------------------------------------
// Criteria

#[test]
fn criterion_1_closed_form_prefactor_anchor() {
    let clock = Instant::now();
    let cert = light_cert();
    let report = atom_bound(&cert, 1.0 - cert.diagnostics.rho).unwrap();

    assert!(
        (report.prefactor - 4.0).abs() <= 1e-12,
        "prefactor {}",
        report.prefactor
    );
    assert_eq!(report.additive, 0.0);
    for k in 0..=45 {
        let x = 0.1 * k as f64;
        let expected = 4.0 * ((0.4 * x).exp() - 1.0);
        let got = report.evaluate(x, 0);
        assert!(
            (got - expected).abs() <= 1e-12 * expected.max(1.0),
            "x = {x}: {got} vs {expected}"
        );
    }
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}");
    println!(
        "PASS criterion 1: prefactor = {} (target 4 within 1e-12), curve matches \
         4(e^{{0.4x}}-1) at 46 points in {elapsed:?}",
        report.prefactor
    );
}

#[test]
fn criterion_2_stationary_transform_oracle() {
    let clock = Instant::now();
    let queue = QueueModel::mg1(0.5, exp_service(1.0)).unwrap();
    let reward = Reward::Exponential {
        coeff: 1.0,
        theta: 0.4,
        weights: vec![1.0],
    };
    // Statistical caveat: cycle sums of e^{0.4 W} have tail index
    // (mu - lambda) / theta = 1.25, so their variance is infinite and the
    // reported standard error is only indicative; the 3-SE coverage of
    // this one-shot check is roughly 80 percent per seed rather than the
    // nominal 99.7 (measured 11/16 seeds at 1e5 cycles, 7/8 at 4e6).
    // The pinned replication count buys typical-sample accuracy
    // (|bias| ~ n^{-0.2}) and keeps the run near a second.
    let est = estimate_pi_g(&queue, &reward, 4_000_000, 20_260_814).unwrap();

    // Stationary exponential moment of the workload in closed form:
    // (1 - rho) + rho (mu - lambda) / (mu - lambda - theta)
    //   = 0.5 + 0.5 * 0.5 / 0.1 = 3.
    let target = 3.0;
    let gap = (est.point - target).abs();
    assert!(
        gap <= 3.0 * est.std_error,
        "estimate {} +- {} misses {target}",
        est.point,
        est.std_error
    );
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "PASS criterion 2: E[e^{{0.4 W}}] estimate {:.5} +- {:.5} covers 3.0 \
         ({} cycles in {elapsed:?})",
        est.point, est.std_error, est.n
    );
}

#[test]
fn criterion_3_bound_domination_three_regimes() {
    let clock = Instant::now();
    let reps = 10_000_u64;
    let light = light_cert();
    let (moderate, moderate_input) = moderate_cert();
    let (polynomial, polynomial_input) = polynomial_cert();
    let cases: [(&str, DriftCertificate, f64, ServiceLaw); 3] = [
        ("light", light, 0.5, exp_service(1.0)),
        (
            "moderate",
            moderate,
            moderate_input.lambda,
            moderate_input.law,
        ),
        (
            "polynomial",
            polynomial,
            polynomial_input.lambda,
            polynomial_input.law,
        ),
    ];

    for (name, cert, lambda, law) in cases {
        let report = atom_bound(&cert, 1.0 - cert.diagnostics.rho).unwrap();
        let queue = QueueModel::mg1(lambda, law).unwrap();
        let reward = Reward::CertRate(cert.clone());
        let seed = 77;
        let pi_g = estimate_pi_g(&queue, &reward, reps, seed).unwrap();
        for (k, &x) in grid10().iter().enumerate() {
            let est = estimate_h(
                &queue,
                &reward,
                WorkloadState::new(x, 0),
                reps,
                &pi_g,
                seed + 1 + k as u64,
            )
            .unwrap();
            assert_dominates(
                report.evaluate(x, 0),
                &est,
                &format!("{name} regime at x = {x}"),
            );
        }
    }
    let elapsed = clock.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    println!(
        "PASS criterion 3: bias bound dominates at 10 points x 3 regimes \
         ({reps} replications each, {elapsed:?})"
    );
}

#[test]
fn criterion_4_phase_model_domination_and_witnesses() {
    let map = map2();
    let law = exp_service(2.0);
    let cert = map_cert(&map);
    let t = tol();
    let i0 = cert.atom_phase();

    // Grid-optimized witness and the vanishing-return-time special case.
    let t0_grid = [0.1, 0.25, 0.5, 1.0, 2.0];
    let x0_grid = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];
    let searched = optimize_witness(&map, &law, i0, &t0_grid, &x0_grid, &t).unwrap();
    let special = map_gi1_witness_special(&map, i0).unwrap();
    println!(
        "criterion 4 witnesses: special-case ratio {:.6}, grid-search ratio {:.6}",
        special.ratio(),
        searched.ratio()
    );
    assert!(
        special.ratio() <= searched.ratio() + 1e-12,
        "special-case ratio {} exceeds grid ratio {} (discrepancy reported above)",
        special.ratio(),
        searched.ratio()
    );
    let witness = if special.ratio() <= searched.ratio() {
        special
    } else {
        searched
    };

    let rho = map.stationary(&t).unwrap().lambda * law.mean();
    let pi_g_abs = cert.b * (1.0 - rho);
    let report = general_bound(&cert, &witness, pi_g_abs).unwrap();

    let queue = QueueModel::map_gi1(map, law, i0).unwrap();
    let reward = Reward::CertRate(cert.clone());
    let reps = 10_000_u64;
    let seed = 404;
    let pi_g = estimate_pi_g(&queue, &reward, reps, seed).unwrap();
    for (k, &x) in grid10().iter().enumerate() {
        for phase in 0..cert.phases() {
            let est = estimate_h(
                &queue,
                &reward,
                WorkloadState::new(x, phase),
                reps,
                &pi_g,
                seed + 1 + (2 * k + phase) as u64,
            )
            .unwrap();
            assert_dominates(
                report.evaluate(x, phase),
                &est,
                &format!("x = {x}, phase {phase}"),
            );
        }
    }

    // Atom consistency: the bias estimate at the atom is 0 within 3 SE.
    let atom = estimate_h(
        &queue,
        &reward,
        WorkloadState::new(0.0, i0),
        reps,
        &pi_g,
        seed + 99,
    )
    .unwrap();
    assert!(
        atom.point.abs() <= 3.0 * atom.std_error.max(f64::EPSILON),
        "atom estimate {} +- {}",
        atom.point,
        atom.std_error
    );
    println!(
        "PASS criterion 4: phase-model bound dominates at 10 points x 2 phases, \
         atom estimate {} +- {}, special-case witness kept",
        atom.point, atom.std_error
    );
}

#[test]
fn criterion_5_return_probability_meets_witness() {
    let map = map2();
    let law = exp_service(2.0);
    let cert = map_cert(&map);
    let t = tol();
    let i0 = cert.atom_phase();

    // An explicit finite-time witness so there is a probe to simulate.
    let witness = map_gi1_witness(&map, &law, i0, 0.5, 1.0, &t).unwrap();
    let (time, xi) = match &witness {
        driftbound::bound::ReturnWitness::MapFormula { time, xi, .. } => (*time, *xi),
        other => panic!("expected the explicit witness, got {other:?}"),
    };

    let queue = QueueModel::map_gi1(map, law, i0).unwrap();
    for phase in 0..queue.phases() {
        let est =
            estimate_return_probability(&queue, phase, time, 20_000, 505 + phase as u64).unwrap();
        assert!(
            est.point >= xi - 3.0 * est.std_error,
            "phase {phase}: return probability {} +- {} undercuts xi = {xi}",
            est.point,
            est.std_error
        );
        println!(
            "criterion 5 phase {phase}: return probability {:.4} +- {:.4} vs xi_T = {:.6}",
            est.point, est.std_error, xi
        );
    }
    println!("PASS criterion 5: observed return probability meets xi_T in every phase");
}

#[test]
fn criterion_6_occupation_inequality() {
    let map = map2();
    let law = exp_service(2.0);
    let cert = map_cert(&map);
    let i0 = cert.atom_phase();

    // The emitted witness for this model is the vanishing-return-time
    // limit; its ratio bounds the expected level-zero occupation time.
    let witness = map_gi1_witness_special(&map, i0).unwrap();
    let ratio = witness.ratio();

    let queue = QueueModel::map_gi1(map, law, i0).unwrap();
    let occupancy = Reward::Band { lo: 0.0, hi: 0.0 };
    let zero = RegenerativeEstimate {
        point: 0.0,
        std_error: 0.0,
        n: 1,
        seed: 0,
    };
    let starts =
        [(0.0, 1), (0.75, 0), (1.5, 1), (3.0, 0), (4.5, 1)].map(|(w, i)| WorkloadState::new(w, i));
    for (j, start) in starts.into_iter().enumerate() {
        let est = estimate_h(&queue, &occupancy, start, 10_000, &zero, 606 + j as u64).unwrap();
        assert!(
            est.point <= ratio + 3.0 * est.std_error,
            "start ({}, {}): occupation {} +- {} exceeds T/xi_T = {ratio}",
            start.w,
            start.phase,
            est.point,
            est.std_error
        );
        println!(
            "criterion 6 start ({}, {}): occupation {:.4} +- {:.4} vs T/xi_T = {ratio}",
            start.w, start.phase, est.point, est.std_error
        );
    }
    println!("PASS criterion 6: level-zero occupation stays below T/xi_T at 5 starts");
}

#[test]
fn criterion_7_capacity_limit_distance_ladder() {
    let lambda = 0.5;
    let law = exp_service(1.0);
    let cert = light_cert();
    let requested_tol = 1e-3;
    let cycles = 40_000_u64;

    let mut bounds = Vec::new();
    for (j, capacity) in [5.0, 10.0, 20.0].into_iter().enumerate() {
        let model = WclModel::new(lambda, law.clone(), capacity).unwrap();
        let distance = wcl_distance_bound(&model, &cert, requested_tol).unwrap();
        assert!(
            distance.truncation_error <= requested_tol,
            "L = {capacity}: truncation {} > tol",
            distance.truncation_error
        );

        // Empirical f-weighted distance between the capped and uncapped
        // stationary laws, from binned histograms with the test weight
        // g-bar = f (f grows, so bins extend well past the capacity).
        let uncapped = QueueModel::mg1(lambda, law.clone()).unwrap();
        let capped = QueueModel::mg1_wcl(lambda, law.clone(), capacity).unwrap();
        let inside = 60;
        let outside = 40;
        let mut edges: Vec<f64> = (1..=inside)
            .map(|i| capacity * i as f64 / inside as f64)
            .collect();
        edges.extend((1..=outside).map(|i| capacity + 0.5 * i as f64));
        let hist_u =
            estimate_stationary_histogram(&uncapped, &edges, cycles, 707 + j as u64).unwrap();
        let hist_c =
            estimate_stationary_histogram(&capped, &edges, cycles, 808 + j as u64).unwrap();

        let weight = |x: f64| cert.drift_rate(x, 0);
        let mut empirical = weight(0.0) * (hist_u.atom.point - hist_c.atom.point).abs();
        let mut lo = 0.0;
        for (i, &hi) in edges.iter().enumerate() {
            empirical +=
                weight(0.5 * (lo + hi)) * (hist_u.bins[i].point - hist_c.bins[i].point).abs();
            lo = hi;
        }

        assert!(
            empirical <= distance.value,
            "L = {capacity}: empirical distance {empirical} exceeds bound {}",
            distance.value
        );
        println!(
            "criterion 7 L = {capacity}: bound {:.6} >= empirical {:.6} \
             (truncation {:.2e}, {} series terms)",
            distance.value,
            empirical,
            distance.truncation_error,
            distance.m_used + 1
        );
        bounds.push(distance.value);
    }
    assert!(
        bounds[0] > bounds[1] && bounds[1] > bounds[2],
        "bound must strictly decrease in L: {bounds:?}"
    );
    println!(
        "PASS criterion 7: distance bound dominates empirical histograms and \
         decreases strictly in L: {bounds:?}"
    );
}

/// SplitMix64: tiny deterministic generator for the random-matrix sweep,
/// independent of the simulation RNG.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    }

    /// Uniform draw on `[0, 1)`.
    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Independent matrix-exponential oracle: Taylor series with scaling and
/// squaring, summed until terms vanish at machine precision.
fn expm_taylor(a: &Matrix, t: f64) -> Matrix {
    let n = a.rows();
    let b = a.scaled(t);
    let norm = (0..n)
        .map(|i| (0..n).map(|j| b.get(i, j).abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let c = b.scaled(0.5_f64.powi(squarings as i32));

    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..200 {
        term = term.matmul(&c).unwrap().scaled(1.0 / k as f64);
        sum = sum.add_scaled(1.0, &term).unwrap();
        if term.max_abs() <= 1e-18 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum).unwrap();
    }
    sum
}

#[test]
fn criterion_8_generator_property_suite() {
    let t = tol();
    let grid200: Vec<f64> = (0..200).map(|k| 0.1 * k as f64).collect();

    // Drift inequality recheck for every emitted certificate family.
    let light = light_cert();
    let (moderate, moderate_input) = moderate_cert();
    let (polynomial, polynomial_input) = polynomial_cert();
    let map = map2();
    let phase_cert = map_cert(&map);
    let cases: [(&str, QueueArrivals, &ServiceLaw, &DriftCertificate); 4] = [
        (
            "light",
            QueueArrivals::Poisson { lambda: 0.5 },
            &exp_service(1.0),
            &light,
        ),
        (
            "moderate",
            QueueArrivals::Poisson {
                lambda: moderate_input.lambda,
            },
            &moderate_input.law,
            &moderate,
        ),
        (
            "polynomial",
            QueueArrivals::Poisson {
                lambda: polynomial_input.lambda,
            },
            &polynomial_input.law,
            &polynomial,
        ),
        (
            "phase",
            QueueArrivals::Map(&map),
            &exp_service(2.0),
            &phase_cert,
        ),
    ];
    for (name, arrivals, law, cert) in cases {
        let points = generator_check(&arrivals, law, cert, &grid200, &t).unwrap();
        assert_eq!(points.len(), 200 * cert.phases());
        for p in &points {
            assert!(
                p.ok,
                "{name}: drift inequality violated at w = {}, phase {} (margin {})",
                p.w, p.phase, p.margin
            );
        }
    }

    // Spectral witness quality for the phase certificate.
    let residual = phase_cert
        .diagnostics
        .eigen_residual
        .expect("phase certificate records it");
    assert!(residual <= 1e-10, "eigen residual {residual}");

    // Uniformization against an independent Taylor scaling-squaring oracle
    // on random conservative generators of orders 2..=6.
    let mut rng = SplitMix64(0x5eed_cafe);
    let mut worst = 0.0_f64;
    for trial in 0..100 {
        let n = 2 + (rng.next_u64() % 5) as usize;
        let mut q = Matrix::zeros(n, n);
        for i in 0..n {
            let mut total = 0.0;
            for j in 0..n {
                if i != j {
                    let rate = 2.0 * rng.next_f64();
                    q.set(i, j, rate);
                    total += rate;
                }
            }
            q.set(i, i, -total);
        }
        let horizon = 0.1 + 2.9 * rng.next_f64();
        let fast = matrix_exponential(&q, horizon, t.structural).unwrap();
        let oracle = expm_taylor(&q, horizon);
        let diff = fast.max_abs_diff(&oracle);
        assert!(
            diff <= 1e-10,
            "trial {trial}: order {n}, t = {horizon}, entrywise gap {diff}"
        );
        worst = worst.max(diff);
    }

    println!(
        "PASS criterion 8: drift inequality holds at 200 points for all 4 \
         certificates, eigen residual {residual:.2e} <= 1e-10, worst \
         exponential gap {worst:.2e} <= 1e-10 over 100 random generators"
    );
}

#[test]
fn criterion_9_byte_identical_verification_reports() {
    let dir = std::env::temp_dir().join(format!("driftbound-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let model_path = dir.join("model.json");
    fs::write(
        &model_path,
        r#"{
  "kind": "mg1_wcl",
  "lambda": 0.5,
  "service": { "family": "exponential", "rate": 1.0 },
  "capacity": 10.0,
  "regime": "light",
  "theta": 0.4
}"#,
    )
    .unwrap();

    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.join(format!("report-{run}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_driftbound"))
            .args([
                "verify",
                "--model",
                model_path.to_str().unwrap(),
                "--seed",
                "2026",
                "--reps",
                "4000",
                "--out",
                out.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success(), "verify run {run} failed");
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(
        outputs[0], outputs[1],
        "reports differ between identical runs"
    );
    assert!(!outputs[0].is_empty());
    println!(
        "PASS criterion 9: two verify runs with seed 2026 produced byte-identical \
         {}-byte reports",
        outputs[0].len()
    );
}
