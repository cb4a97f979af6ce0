//! Verification suite: every release-gating criterion runs here at its
//! stated tolerance and prints one PASS/FAIL line (visible with
//! `cargo test --test acceptance -- --nocapture`).

use capstream_core::continuous::sample_fixed_k_continuous;
use capstream_core::continuous_est::{
    estimate_continuous_1pass, estimate_continuous_2pass, inclusion_probability_continuous,
};
use capstream_core::discrete::{sample_fixed_k_discrete, sample_fixed_tau_discrete};
use capstream_core::discrete_est::{
    estimate_discrete_1pass, estimate_discrete_2pass, DiscreteCoefficients,
};
use capstream_core::harness::{
    generate_zipf_stream, run_error_grid, ErrorGrid, ExactAggregate, ExperimentConfig, SchemeKind,
};
use capstream_core::multiobjective::{
    build_multi_sample, estimate_multi, rect_union_probability, CapSet,
};
use capstream_core::random::exp_from_unit;
use capstream_core::stats::{ks_critical, ks_statistic, Moments};
use capstream_core::twopass::{pass_one, Scheme, SummaryMode};
use capstream_core::{
    Element, Ell, FrequencyFunction, Key, KeyHasher, RandomSource, SegmentPredicate,
};
use std::sync::OnceLock;
use std::time::Instant;

fn report(name: &str, pass: bool, details: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {name}: {status} ({details})");
    assert!(pass, "{name}: {details}");
}

fn unit_stream(counts: &[(Key, u64)]) -> Vec<Element> {
    let mut remaining: Vec<(Key, u64)> = counts.to_vec();
    let mut out = Vec::new();
    while remaining.iter().any(|(_, c)| *c > 0) {
        for (k, c) in remaining.iter_mut() {
            if *c > 0 {
                out.push(Element::unit(*k));
                *c -= 1;
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Transform inverse: Y(psi) Y(phi) = I, psi prefix positivity, beta >= 0.
// ---------------------------------------------------------------------------

#[test]
fn transform_inverse() {
    let start = Instant::now();
    let fs = [
        FrequencyFunction::cap(1.0).unwrap(),
        FrequencyFunction::cap(5.0).unwrap(),
        FrequencyFunction::Sum,
    ];
    let mut worst_residual: f64 = 0.0;
    let mut min_prefix = f64::INFINITY;
    let mut min_beta = f64::INFINITY;
    for &ell in &[1u64, 2, 5, 10, 20] {
        for &tau in &[0.5, 0.1, 0.01] {
            let c = DiscreteCoefficients::new(Ell::Finite(ell), tau, 300).unwrap();
            assert!(c.len() <= 300, "M = {} exceeds 300", c.len());
            worst_residual = worst_residual.max(c.inverse_identity_residual());
            let mut prefix = 0.0;
            for &p in c.psi() {
                prefix += p;
                min_prefix = min_prefix.min(prefix);
            }
            for f in &fs {
                for i in 1..=c.len() as u64 {
                    min_beta = min_beta.min(c.beta(f, i));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "transform-inverse",
        worst_residual <= 1e-8 && min_prefix > 0.0 && min_beta >= -1e-9 && elapsed < 10.0,
        &format!(
            "max residual {worst_residual:.2e}, min psi prefix {min_prefix:.3e}, \
             min beta {min_beta:.3e}, {elapsed:.1}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// Closed-form degenerations at ell = 1 and ell = infinity.
// ---------------------------------------------------------------------------

#[test]
fn closed_form_degenerations() {
    let tau = 0.37;
    let f = FrequencyFunction::cap(7.0).unwrap();
    let mut worst: f64 = 0.0;
    let one = DiscreteCoefficients::with_len(Ell::Finite(1), tau, 50).unwrap();
    for i in 1..=50usize {
        let phi = one.phi().get(i - 1).copied().unwrap_or(0.0);
        let psi = one.psi().get(i - 1).copied().unwrap_or(0.0);
        let want_phi = if i == 1 { tau } else { 0.0 };
        let want_psi = if i == 1 { 1.0 / tau } else { 0.0 };
        worst = worst
            .max((phi - want_phi).abs())
            .max((psi - want_psi).abs())
            .max((one.beta(&f, i as u64) - f.value_at(i as u64) / tau).abs());
    }
    let inf = DiscreteCoefficients::with_len(Ell::Infinite, tau, 50).unwrap();
    let mut q = 1.0;
    for i in 1..=50usize {
        let phi = inf.phi().get(i - 1).copied().unwrap_or(0.0);
        let psi = inf.psi().get(i - 1).copied().unwrap_or(0.0);
        let want_psi = match i {
            1 => 1.0 / tau,
            2 => -(1.0 - tau) / tau,
            _ => 0.0,
        };
        let want_beta = (f.value_at(i as u64) - f.value_at(i as u64 - 1) * (1.0 - tau)) / tau;
        worst = worst
            .max((phi - q * tau).abs())
            .max((psi - want_psi).abs())
            .max((inf.beta(&f, i as u64) - want_beta).abs());
        q *= 1.0 - tau;
    }
    report(
        "closed-form-degenerations",
        worst <= 1e-12,
        &format!("max deviation from the ell=1 / ell=inf formulas: {worst:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// Distributional laws: continuous count density (KS), continuous admission
// rate, discrete inclusion probability.
// ---------------------------------------------------------------------------

#[test]
fn distributional_laws() {
    let start = Instant::now();
    let mut details = String::new();
    let mut ok = true;

    // continuous count CDF vs the analytic law, three settings, 1e5 runs
    for &(w, ell, tau) in &[
        (5.0f64, 10.0f64, 0.05f64),
        (20.0, 10.0, 0.2),
        (3.0, 1.0, 0.5),
    ] {
        let r = tau.max(1.0 / ell);
        let denom = 1.0 - (-r * w).exp();
        let cdf = move |c: f64| ((-r * (w - c)).exp() - (-r * w).exp()) / denom;
        let mut counts = Vec::new();
        let mut admitted = 0u64;
        let runs = 100_000u64;
        for t in 0..runs {
            let h = KeyHasher::new(t.wrapping_mul(0x9e37_79b9) ^ ell.to_bits());
            let src = RandomSource::new(t ^ tau.to_bits());
            let s = capstream_core::continuous::sample_fixed_tau_continuous(
                [Element::new(1, w).unwrap()],
                ell,
                tau,
                h,
                &src,
            )
            .unwrap();
            if let Some(&c) = s.entries.get(&1) {
                counts.push(c);
                admitted += 1;
            }
        }
        counts.sort_by(f64::total_cmp);
        let d = ks_statistic(&counts, cdf);
        let crit = ks_critical(counts.len(), 0.01);
        let ks_ok = d < crit;
        // admission rate vs the closed-form inclusion probability
        let expected = inclusion_probability_continuous(w, tau, ell);
        let p = admitted as f64 / runs as f64;
        let sigma = (expected * (1.0 - expected) / runs as f64).sqrt();
        let adm_ok = (p - expected).abs() < 3.0 * sigma;
        ok &= ks_ok && adm_ok;
        details.push_str(&format!(
            "(w={w},l={ell},tau={tau}): KS {d:.4} vs {crit:.4}, admit {p:.4} vs {expected:.4}; "
        ));
    }

    // discrete inclusion probability vs the cumulative phi
    for &(ell, tau, w) in &[(3u64, 0.3f64, 6u64), (10, 0.01, 5), (10, 0.01, 60)] {
        let coef = DiscreteCoefficients::new(Ell::Finite(ell), tau, w as usize + 1).unwrap();
        let expected = coef.inclusion_probability(w);
        let runs = 100_000u64;
        let mut hits = 0u64;
        for t in 0..runs {
            let h = KeyHasher::new(t.wrapping_mul(0x517c_c1b7) ^ ell);
            let src = RandomSource::new(t ^ (w << 8));
            let s =
                sample_fixed_tau_discrete(unit_stream(&[(1, w)]), Ell::Finite(ell), tau, h, &src)
                    .unwrap();
            hits += s.entries.len() as u64;
        }
        let p = hits as f64 / runs as f64;
        let sigma = (expected * (1.0 - expected) / runs as f64).sqrt();
        let inc_ok = (p - expected).abs() < 3.0 * sigma;
        ok &= inc_ok;
        details.push_str(&format!(
            "discrete(l={ell},tau={tau},w={w}): {p:.4} vs {expected:.4}; "
        ));
    }

    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 120.0;
    details.push_str(&format!("{elapsed:.0}s"));
    report("distributional-laws", ok, &details);
}

// ---------------------------------------------------------------------------
// Unbiasedness oracle suite on small key sets, all estimator routes.
// ---------------------------------------------------------------------------

struct MoSuite {
    exact: f64,
    mo: Moments,
    singles: Vec<Moments>,
}

fn mo_five_key_suite() -> &'static MoSuite {
    static SUITE: OnceLock<MoSuite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let weights: [(Key, f64); 5] = [(1, 0.5), (2, 2.0), (3, 8.0), (4, 20.0), (5, 64.0)];
        let caps = vec![1.0, 8.0, 64.0];
        let f = FrequencyFunction::cap(8.0).unwrap();
        let exact: f64 = weights.iter().map(|&(_, w)| w.min(8.0)).sum();
        let mut mo = Moments::default();
        let mut singles = vec![Moments::default(); caps.len()];
        for trial in 0..100_000u64 {
            let hasher = KeyHasher::new(trial.wrapping_mul(0x9e37_79b9).wrapping_add(17));
            let stream: Vec<Element> = weights
                .iter()
                .map(|&(k, w)| Element::new(k, w).unwrap())
                .collect();
            let ms = build_multi_sample(&stream, 2, &CapSet::Grid(caps.clone()), &hasher).unwrap();
            mo.push(estimate_multi(&ms, &f, &SegmentPredicate::All));
            for g in &ms.grid {
                let pairs = weights
                    .iter()
                    .filter(|(key, _)| g.sample_keys().any(|s| s == *key))
                    .copied();
                let q = estimate_continuous_2pass(pairs, g.tau, g.ell, &f, &SegmentPredicate::All)
                    .unwrap();
                let slot = caps.iter().position(|&c| c == g.ell).unwrap();
                singles[slot].push(q);
            }
        }
        MoSuite { exact, mo, singles }
    })
}

#[test]
fn unbiasedness_oracle_suite() {
    let start = Instant::now();
    let mut ok = true;
    let mut details = String::new();

    // discrete, 5 keys, fixed-k sampling at ell = 3, k = 2
    let discrete_weights: [(Key, u64); 5] = [(1, 1), (2, 3), (3, 7), (4, 12), (5, 2)];
    let stream_d = unit_stream(&discrete_weights);
    for f in [
        FrequencyFunction::cap(1.0).unwrap(),
        FrequencyFunction::cap(3.0).unwrap(),
        FrequencyFunction::Sum,
    ] {
        let exact: f64 = discrete_weights.iter().map(|&(_, w)| f.value_at(w)).sum();
        let mut m1 = Moments::default();
        let mut m2 = Moments::default();
        for trial in 0..100_000u64 {
            let h = KeyHasher::new(trial.wrapping_mul(0x2545_f491));
            let src = RandomSource::new(trial ^ 0xd15c);
            let s = sample_fixed_k_discrete(stream_d.iter().copied(), Ell::Finite(3), 2, h, &src)
                .unwrap();
            m1.push(estimate_discrete_1pass(&s, &f, &SegmentPredicate::All).unwrap());
            let p1 = pass_one(
                stream_d.iter().copied(),
                Scheme::Discrete(Ell::Finite(3)),
                SummaryMode::FixedSize(2),
                KeyHasher::new(trial.wrapping_mul(0x2545_f491) ^ 0xaa),
            )
            .unwrap();
            let coef =
                DiscreteCoefficients::new(Ell::Finite(3), p1.tau.as_f64().min(1.0), 13).unwrap();
            let pairs = discrete_weights
                .iter()
                .filter(|(k, _)| p1.entries.contains_key(k))
                .copied();
            m2.push(estimate_discrete_2pass(pairs, &f, &SegmentPredicate::All, &coef).unwrap());
        }
        let ok1 = (m1.mean() - exact).abs() < 4.0 * m1.sem();
        let ok2 = (m2.mean() - exact).abs() < 4.0 * m2.sem();
        ok &= ok1 && ok2;
        details.push_str(&format!(
            "d/{f}: 1p {:.3} 2p {:.3} vs {exact:.3}; ",
            m1.mean(),
            m2.mean()
        ));
    }

    // continuous, 5 weighted keys, fixed-k sampling at ell = 5, k = 2
    let cont_weights: [(Key, f64); 5] = [(1, 0.5), (2, 2.0), (3, 5.0), (4, 9.0), (5, 30.0)];
    let stream_c: Vec<Element> = cont_weights
        .iter()
        .map(|&(k, w)| Element::new(k, w).unwrap())
        .collect();
    for f in [
        FrequencyFunction::cap(1.0).unwrap(),
        FrequencyFunction::cap(5.0).unwrap(),
        FrequencyFunction::Sum,
    ] {
        let exact: f64 = cont_weights.iter().map(|&(_, w)| f.value(w)).sum();
        let mut m1 = Moments::default();
        let mut m2 = Moments::default();
        for trial in 0..100_000u64 {
            let h = KeyHasher::new(trial.wrapping_mul(0x85eb_ca6b));
            let src = RandomSource::new(trial ^ 0xc0a7);
            let s = sample_fixed_k_continuous(stream_c.iter().copied(), 5.0, 2, h, &src).unwrap();
            m1.push(estimate_continuous_1pass(&s, &f, &SegmentPredicate::All).unwrap());
            let p1 = pass_one(
                stream_c.iter().copied(),
                Scheme::Continuous(5.0),
                SummaryMode::FixedSize(2),
                KeyHasher::new(trial.wrapping_mul(0x85eb_ca6b) ^ 0xbb),
            )
            .unwrap();
            let pairs = cont_weights
                .iter()
                .filter(|(k, _)| p1.entries.contains_key(k))
                .copied();
            m2.push(
                estimate_continuous_2pass(pairs, p1.tau, 5.0, &f, &SegmentPredicate::All).unwrap(),
            );
        }
        let ok1 = (m1.mean() - exact).abs() < 4.0 * m1.sem();
        let ok2 = (m2.mean() - exact).abs() < 4.0 * m2.sem();
        ok &= ok1 && ok2;
        details.push_str(&format!(
            "c/{f}: 1p {:.3} 2p {:.3} vs {exact:.3}; ",
            m1.mean(),
            m2.mean()
        ));
    }

    // multi-objective estimator over the shared 5-key suite
    let mo = mo_five_key_suite();
    let mo_ok = (mo.mo.mean() - mo.exact).abs() < 4.0 * mo.mo.sem();
    ok &= mo_ok;
    details.push_str(&format!("mo: {:.3} vs {:.3}; ", mo.mo.mean(), mo.exact));

    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 300.0;
    details.push_str(&format!("{elapsed:.0}s"));
    report("unbiasedness-oracle-suite", ok, &details);
}

// ---------------------------------------------------------------------------
// Error-grid reproduction and diagonal dominance (shared grids).
// ---------------------------------------------------------------------------

const GRID_PARAMS: [f64; 8] = [1.0, 5.0, 20.0, 50.0, 100.0, 500.0, 1000.0, 10000.0];

fn table_grids() -> &'static (ErrorGrid, ErrorGrid) {
    static GRIDS: OnceLock<(ErrorGrid, ErrorGrid)> = OnceLock::new();
    GRIDS.get_or_init(|| {
        let continuous = run_error_grid(&ExperimentConfig {
            scheme: SchemeKind::Continuous,
            k: 100,
            ells: GRID_PARAMS.to_vec(),
            caps: GRID_PARAMS.to_vec(),
            alpha: 1.5,
            stream_len: 100_000,
            repetitions: 200,
            seed: 0x00c0_ffee,
        })
        .unwrap();
        let discrete = run_error_grid(&ExperimentConfig {
            scheme: SchemeKind::Discrete,
            k: 100,
            ells: GRID_PARAMS.to_vec(),
            caps: GRID_PARAMS.to_vec(),
            alpha: 1.2,
            stream_len: 100_000,
            repetitions: 200,
            seed: 0x0dd_ba11,
        })
        .unwrap();
        (continuous, discrete)
    })
}

fn index_of(v: f64) -> usize {
    GRID_PARAMS.iter().position(|&x| x == v).unwrap()
}

#[test]
fn error_grid_continuous() {
    let (grid, _) = table_grids();
    // reference one-pass NRMSE for the diagonal cells (k=100, alpha=1.5)
    let reference = [
        (1.0, 0.103),
        (5.0, 0.096),
        (20.0, 0.096),
        (50.0, 0.092),
        (100.0, 0.082),
        (500.0, 0.059),
        (1000.0, 0.048),
    ];
    let mut ok = true;
    let mut details = String::new();
    for &(t, want) in &reference {
        let i = index_of(t);
        let got = grid.cell(i, i).nrmse_1pass;
        let cell_ok = (got - want).abs() <= 0.30 * want;
        ok &= cell_ok;
        details.push_str(&format!("T={t}: {got:.3} vs {want}; "));
    }
    // diagonal estimates are unbiased at grid scale
    let rep = 200.0;
    let budget = 4.0 / (rep * 100.0_f64).sqrt();
    let mut worst_signed: f64 = 0.0;
    for i in 0..GRID_PARAMS.len() {
        worst_signed = worst_signed.max(grid.cell(i, i).signed_rel_err_1pass.abs());
    }
    ok &= worst_signed < budget;
    // exact weights never hurt: two-pass NRMSE below one-pass plus noise
    let mut worst_excess = f64::NEG_INFINITY;
    for cell in &grid.cells {
        let margin = 4.0 * cell.nrmse_1pass.max(cell.nrmse_2pass) / rep.sqrt();
        worst_excess = worst_excess.max(cell.nrmse_2pass - cell.nrmse_1pass - margin);
    }
    ok &= worst_excess <= 0.0;
    details.push_str(&format!(
        "max |signed diag| {worst_signed:.4} (budget {budget:.4}); \
         worst 2p-over-1p excess {worst_excess:.4}"
    ));
    report("error-grid-continuous", ok, &details);
}

#[test]
fn error_grid_discrete() {
    let (_, grid) = table_grids();
    let reference = [(1.0, 0.098), (100.0, 0.099), (10000.0, 0.056)];
    let mut ok = true;
    let mut details = String::new();
    for &(t, want) in &reference {
        let i = index_of(t);
        let got = grid.cell(i, i).nrmse_1pass;
        let cell_ok = (got - want).abs() <= 0.30 * want;
        ok &= cell_ok;
        details.push_str(&format!("T={t}: {got:.3} vs {want}; "));
    }
    let rep = 200.0;
    let budget = 4.0 / (rep * 100.0_f64).sqrt();
    let mut worst_signed: f64 = 0.0;
    for i in 0..GRID_PARAMS.len() {
        worst_signed = worst_signed.max(grid.cell(i, i).signed_rel_err_1pass.abs());
    }
    ok &= worst_signed < budget;
    let mut worst_excess = f64::NEG_INFINITY;
    for cell in &grid.cells {
        let margin = 4.0 * cell.nrmse_1pass.max(cell.nrmse_2pass) / rep.sqrt();
        worst_excess = worst_excess.max(cell.nrmse_2pass - cell.nrmse_1pass - margin);
    }
    ok &= worst_excess <= 0.0;
    details.push_str(&format!(
        "max |signed diag| {worst_signed:.4} (budget {budget:.4}); \
         worst 2p-over-1p excess {worst_excess:.4}"
    ));
    report("error-grid-discrete", ok, &details);
}

#[test]
fn diagonal_dominance() {
    let (continuous, discrete) = table_grids();
    let mut ok = true;
    let mut details = String::new();
    for (name, grid) in [("continuous", continuous), ("discrete", discrete)] {
        let hits = grid
            .diagonal_dominance_report()
            .iter()
            .filter(|e| e.within_one_step)
            .count();
        ok &= hits >= 6;
        details.push_str(&format!("{name}: {hits}/8 caps within one grid step; "));
    }
    report("diagonal-dominance", ok, &details);
}

// ---------------------------------------------------------------------------
// Distinct-count calibration: NRMSE of the (ell=1, T=1) cell.
// ---------------------------------------------------------------------------

#[test]
fn distinct_count_calibration() {
    let mut ok = true;
    let mut details = String::new();
    for &k in &[50usize, 100] {
        let grid = run_error_grid(&ExperimentConfig {
            scheme: SchemeKind::Discrete,
            k,
            ells: vec![1.0],
            caps: vec![1.0],
            alpha: 1.2,
            stream_len: 100_000,
            repetitions: 400,
            seed: 0xd157 + k as u64,
        })
        .unwrap();
        let got = grid.cell(0, 0).nrmse_1pass;
        let want = 1.0 / ((k as f64) - 2.0).sqrt();
        let cell_ok = (got - want).abs() <= 0.20 * want;
        ok &= cell_ok;
        details.push_str(&format!(
            "k={k}: NRMSE {got:.4} vs 1/sqrt(k-2) = {want:.4}; "
        ));
    }
    report("distinct-count-calibration", ok, &details);
}

// ---------------------------------------------------------------------------
// CV bound conformance at T = ell on a full-population segment.
// ---------------------------------------------------------------------------

#[test]
fn cv_bound_conformance() {
    let k = 100usize;
    let reps = 500u64;
    let e = std::f64::consts::E;
    let bound_2pass = (e / (e - 1.0) / (k as f64 - 1.0)).sqrt();
    let bound_1pass = ((2.0 * e - 1.0) / (e - 1.0) / (k as f64 - 1.0)).sqrt();
    let mut ok = true;
    let mut details = String::new();
    // one fixed dataset; the CV is a property of the estimator, so only the
    // sampling randomness varies across repetitions
    let stream = generate_zipf_stream(1.5, 20_000, &RandomSource::new(0xcb0a)).unwrap();
    let aggregate = ExactAggregate::from_elements(&stream);
    for &ell in &[5.0f64, 100.0] {
        let f = FrequencyFunction::cap(ell).unwrap();
        let mut m1 = Moments::default();
        let mut m2 = Moments::default();
        for rep in 0..reps {
            let (q1, q2) = capstream_core::harness::continuous_paired_estimates(
                &stream,
                &aggregate,
                ell,
                k,
                &f,
                0x5eed_0000 + rep * 7919 + ell as u64,
            )
            .unwrap();
            m1.push(q1);
            m2.push(q2);
        }
        let noise1 = 4.0 * m1.cv() / (2.0 * reps as f64).sqrt();
        let noise2 = 4.0 * m2.cv() / (2.0 * reps as f64).sqrt();
        let ok1 = m1.cv() <= bound_1pass + noise1;
        let ok2 = m2.cv() <= bound_2pass + noise2;
        ok &= ok1 && ok2;
        details.push_str(&format!(
            "T=l={ell}: CV 1p {:.4} (bound {bound_1pass:.4}), 2p {:.4} (bound {bound_2pass:.4}); ",
            m1.cv(),
            m2.cv()
        ));
    }
    report("cv-bound-conformance", ok, &details);
}

// ---------------------------------------------------------------------------
// Mergeability: sharded pass I is bit-identical to the unsharded run.
// ---------------------------------------------------------------------------

#[test]
fn mergeability() {
    let mut ok = true;
    let mut details = String::new();
    let stream = generate_zipf_stream(1.2, 10_000, &RandomSource::new(0x3a6d)).unwrap();
    let schemes = [
        Scheme::Discrete(Ell::Finite(3)),
        Scheme::Discrete(Ell::Infinite),
        Scheme::Continuous(2.0),
        Scheme::Continuous(50.0),
    ];
    let modes = [
        SummaryMode::FixedSize(100),
        SummaryMode::FixedThreshold(0.01),
    ];
    for scheme in schemes {
        for mode in modes {
            let hasher = KeyHasher::new(0xfade);
            let whole = pass_one(stream.iter().copied(), scheme, mode, hasher).unwrap();
            // four shards keyed so all elements of a key share a shard
            let shards: Vec<_> = (0..4u64)
                .map(|s| {
                    let part: Vec<Element> = stream
                        .iter()
                        .filter(|e| e.key.wrapping_mul(0x9e37_79b9_7f4a_7c15) % 4 == s)
                        .copied()
                        .collect();
                    pass_one(part, scheme, mode, hasher).unwrap()
                })
                .collect();
            let merged = shards[0]
                .merge(&shards[1])
                .unwrap()
                .merge(&shards[2])
                .unwrap()
                .merge(&shards[3])
                .unwrap();
            let identical = merged == whole;
            // commutativity and associativity on this split
            let reversed = shards[3]
                .merge(&shards[2])
                .unwrap()
                .merge(&shards[1])
                .unwrap()
                .merge(&shards[0])
                .unwrap();
            let paired = shards[0]
                .merge(&shards[1])
                .unwrap()
                .merge(&shards[2].merge(&shards[3]).unwrap())
                .unwrap();
            ok &= identical && reversed == whole && paired == whole;
            if !identical {
                details.push_str(&format!("{scheme:?}/{mode:?} differs; "));
            }
        }
    }
    if ok {
        details.push_str("4-way shard merges bit-identical for 4 schemes x 2 modes");
    }
    report("mergeability", ok, &details);
}

// ---------------------------------------------------------------------------
// Multi-objective: union size, geometric oracle, variance domination.
// ---------------------------------------------------------------------------

#[test]
fn multiobjective_union_size() {
    let k = 100usize;
    let mut ok = true;
    let mut sizes = Vec::new();
    let mut mean_budget = 0.0;
    for seed in 0..20u64 {
        let stream = generate_zipf_stream(1.2, 100_000, &RandomSource::new(0xab1e + seed)).unwrap();
        let n = ExactAggregate::from_elements(&stream).distinct_keys() as f64;
        let hasher = KeyHasher::new(seed.wrapping_mul(0x6c62_272e));
        let ms = build_multi_sample(&stream, k, &CapSet::AllPositive, &hasher).unwrap();
        let budget = k as f64 * n.ln();
        ok &= (ms.len() as f64) <= 3.0 * budget;
        sizes.push(ms.len() as f64 / budget);
        mean_budget += ms.len() as f64 / budget / 20.0;
    }
    ok &= mean_budget <= 1.2;
    let max_ratio = sizes.iter().copied().fold(0.0, f64::max);
    report(
        "multiobjective-union-size",
        ok,
        &format!("|S_L| / (k ln n): mean {mean_budget:.3}, max {max_ratio:.3} over 20 seeds"),
    );
}

#[test]
fn multiobjective_inclusion_oracle() {
    let mut ok = true;
    let mut worst = 0.0f64;
    let mut draws = RandomSource::new(0x0e0e).stream(1);
    for instance in 0..50u64 {
        let w = if instance % 2 == 0 { 1.0 } else { 10.0 };
        let rects: Vec<(f64, f64)> = (0..5)
            .map(|_| {
                let ell = 10f64.powf(-1.0 + 4.0 * draws.next_unit());
                let tau = 10f64.powf(-3.0 + 3.3 * draws.next_unit());
                (tau.max(1.0 / ell), (ell * tau).min(1.0))
            })
            .collect();
        let analytic = rect_union_probability(w, &rects);
        let trials = 1_000_000u64;
        let mut hits = 0u64;
        for _ in 0..trials {
            let y = exp_from_unit(draws.next_unit(), w);
            let h = draws.next_unit();
            if rects.iter().any(|&(ry, rh)| y < ry && h < rh) {
                hits += 1;
            }
        }
        let p = hits as f64 / trials as f64;
        let sigma = (analytic * (1.0 - analytic) / trials as f64)
            .sqrt()
            .max(1e-9);
        let dev = (p - analytic).abs() / sigma;
        worst = worst.max(dev);
        ok &= dev < 3.0;
    }
    report(
        "multiobjective-inclusion-oracle",
        ok,
        &format!("worst deviation {worst:.2} sigma over 50 instances x 1e6 draws"),
    );
}

#[test]
fn multiobjective_variance_domination() {
    let mo = mo_five_key_suite();
    let best = mo
        .singles
        .iter()
        .map(|m| m.variance())
        .fold(f64::INFINITY, f64::min);
    let noise = 4.0 * best * (2.0 / mo.mo.count() as f64).sqrt();
    let ok = mo.mo.variance() <= best + noise;
    report(
        "multiobjective-variance",
        ok,
        &format!(
            "union-sample variance {:.4} vs best single-cap {:.4}",
            mo.mo.variance(),
            best
        ),
    );
}
