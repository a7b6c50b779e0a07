//! Acceptance suite. Runs every criterion at its stated tolerance, prints
//! one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use secinfer::centralized::{choose_k_star, ByzantineVoting, CentralModel, FusionProblem, L0_EPS};
use secinfer::consensus::{average_consensus_step, run_wmsr, ConsensusWeights};
use secinfer::estimator::{EstimatorParams, ThresholdState};
use secinfer::harness::config::{Scenario, ScenarioConfig};
use secinfer::harness::run::{prepare, Outcome};
use secinfer::harness::{run_monte_carlo, run_scenario, trace_csv_string};
use secinfer::topology::{is_connected, numerical_rank, random_geometric_graph, Graph};

const SEEDS: std::ops::Range<u64> = 0..20;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Mean per-node SNR of 13 dB for θ ~ U[0,160]: E[θ_k²] / Σ = 10^1.3 gives
/// ≈ 16 dB as the dB of the mean, and the mean of the dB values sits about
/// 3 dB lower, so Σ = 200 lands near 13 dB.
const NOISY_VARIANCE: f64 = 200.0;

fn no_adversary() -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for variance in [10.0, NOISY_VARIANCE] {
        let mut c = ScenarioConfig::desk(Scenario::None);
        c.noise_variance = variance;
        let p = prepare(&c).expect("desk preset prepares");
        let (mut worst, mut slowest, mut flags, mut converged, mut snr) = (0.0f64, 0.0f64, 0usize, 0usize, 0.0);
        for seed in SEEDS {
            let t0 = Instant::now();
            let r = p.run(seed, false).expect("run succeeds");
            slowest = slowest.max(t0.elapsed().as_secs_f64());
            worst = worst.max(r.summary.max_final_error);
            flags += r.summary.detected_nodes;
            converged += (r.summary.outcome == Outcome::Converged) as usize;
            snr += r.summary.mean_snr_db;
        }
        snr /= SEEDS.count() as f64;
        let ok = converged == SEEDS.count() && flags == 0 && worst < 0.05 && slowest < 60.0;
        let snr_ok = variance == 10.0 || (snr - 13.0).abs() <= 3.0;
        pass &= ok && snr_ok;
        details.push(format!(
            "noise variance {variance}: {converged}/20 converged, {flags} flags, max error {worst:.2e}, mean per-node SNR {snr:.1} dB, slowest run {slowest:.2} s"
        ));
    }
    verdict(pass, details.join("; "))
}

fn strong_adversary() -> Verdict {
    let mc =
        run_monte_carlo(&ScenarioConfig::desk(Scenario::Strong), &SEEDS.collect::<Vec<_>>()).expect("runs succeed");
    let flags: usize = mc.rows.iter().map(|r| r.detected_nodes).sum();
    let min_center = mc.rows.iter().map(|r| r.min_center_error).fold(f64::INFINITY, f64::min);
    verdict(
        flags == 0 && min_center > 0.2,
        format!("{flags} flags over 20 runs, smallest center-component error {min_center:.4} (need > 0.2)"),
    )
}

fn weak_adversary() -> Verdict {
    let mc = run_monte_carlo(&ScenarioConfig::desk(Scenario::Weak), &SEEDS.collect::<Vec<_>>()).expect("runs succeed");
    verdict(
        mc.missed_and_wrong == 0,
        format!(
            "{} converged, {} detected, {} missed-and-wrong; max error {:.2e}",
            mc.converged, mc.detected, mc.missed_and_wrong, mc.error_quantiles[2]
        ),
    )
}

/// `γ_t = (1-r1)^t γ_0 + Σ_{s<t} (1-r1)^{t-1-s} α 2K / (s+1)^τ`, summed
/// directly.
fn gamma_closed_form(p: &EstimatorParams, gamma0: f64, t: u64) -> f64 {
    let q = 1.0 - p.r1;
    let mut sum = q.powf(t as f64) * gamma0;
    for s in 0..t {
        sum += q.powf((t - 1 - s) as f64) * p.alpha * 2.0 * p.big_k / ((s + 1) as f64).powf(p.tau);
    }
    sum
}

fn threshold_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let p = EstimatorParams {
            alpha: rng.random_range(1e-3..0.5),
            beta: 0.1,
            big_k: rng.random_range(1e-3..10.0),
            tau: rng.random_range(0.01..0.49),
            r1: rng.random_range(1e-4..1.0),
            eta: rng.random_range(1.0..1000.0),
        };
        let n = rng.random_range(1..600);
        let mut checkpoints: Vec<u64> = (0..=20).chain([100, 1000, 10_000, 50_000, 100_000]).collect();
        checkpoints.extend((0..40).map(|_| rng.random_range(0..=100_000u64)));
        checkpoints.sort_unstable();
        let mut s = ThresholdState::initial(p.eta, n);
        let gamma0 = s.gamma;
        let mut next = checkpoints.iter().peekable();
        for t in 0..=100_000u64 {
            while next.peek() == Some(&&t) {
                next.next();
                let exact = gamma_closed_form(&p, gamma0, t);
                worst = worst.max((s.gamma - exact).abs() / exact.abs().max(1.0));
            }
            s = s.step(&p);
        }
    }
    verdict(
        worst <= 1e-10,
        format!("largest deviation from the closed form {worst:.2e} (relative, tolerance 1e-10)"),
    )
}

fn average_consensus() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut graphs, mut converged, mut worst_sum, mut max_steps) = (0usize, 0usize, 0.0f64, 0usize);
    let mut seed = 0u64;
    while graphs < 200 {
        seed += 1;
        let n = rng.random_range(2..=30);
        let g = random_geometric_graph(n, 1.0, 0.45, seed).unwrap();
        if !is_connected(&g) {
            continue;
        }
        graphs += 1;
        let w = ConsensusWeights::metropolis(&g);
        let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let sum0 = x.iter().sum::<f64>();
        for step in 0..1_000_000 {
            if x.iter().all(|v| (v - mean).abs() < 1e-6) {
                converged += 1;
                max_steps = max_steps.max(step);
                break;
            }
            x = average_consensus_step(&x, &w).unwrap();
            let drift = (x.iter().sum::<f64>() - sum0).abs() / sum0.abs().max(1.0);
            worst_sum = worst_sum.max(drift);
        }
    }
    verdict(
        converged == 200 && worst_sum <= 1e-12,
        format!("{converged}/200 graphs within 1e-6 of the mean (slowest {max_steps} steps); largest per-step sum drift {worst_sum:.1e} relative"),
    )
}

fn wmsr() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut trials, mut safe, mut agreed, mut slowest) = (0usize, 0usize, 0usize, 0u64);
    for (n, f) in [(5usize, 1usize), (5, 2), (11, 1), (11, 2)] {
        let g = Graph::complete(n).unwrap();
        for _ in 0..250 {
            trials += 1;
            let b = rng.random_range(0..=f);
            let byz: Vec<usize> = rand::seq::index::sample(&mut rng, n, b).into_iter().collect();
            let init: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
            let fixed: Vec<f64> = (0..n).map(|_| rng.random_range(-1e6..1e6)).collect();
            let fresh = rng.random::<bool>();
            let mut brng = ChaCha8Rng::seed_from_u64(rng.random());
            let normal: Vec<usize> = (0..n).filter(|i| !byz.contains(i)).collect();
            let lo = normal.iter().map(|&i| init[i]).fold(f64::INFINITY, f64::min);
            let hi = normal.iter().map(|&i| init[i]).fold(f64::NEG_INFINITY, f64::max);
            let trace = run_wmsr(&g, &init, f, 10_000, |i, _| {
                byz.contains(&i)
                    .then(|| if fresh { brng.random_range(-1e6..1e6) } else { fixed[i] })
            });
            if trace.iter().all(|s| s.value >= lo && s.value <= hi) {
                safe += 1;
            }
            let per_step = normal.len();
            let first = trace.chunks(per_step).position(|step| {
                let vals = step.iter().map(|s| s.value);
                let mx = vals.clone().fold(f64::NEG_INFINITY, f64::max);
                let mn = vals.fold(f64::INFINITY, f64::min);
                mx - mn < 1e-6
            });
            if let Some(t) = first {
                agreed += 1;
                slowest = slowest.max(t as u64);
            }
        }
    }
    verdict(
        safe == trials && agreed == trials,
        format!("{safe}/{trials} trials inside the normal envelope, {agreed}/{trials} with spread < 1e-6 (slowest at step {slowest})"),
    )
}

fn random_h(rng: &mut ChaCha8Rng, p: usize, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, m, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn survives_two_row_removal(h: &DMatrix<f64>) -> bool {
    let p = h.nrows();
    (0..p).all(|a| {
        (a + 1..p).all(|b| {
            let kept: Vec<usize> = (0..p).filter(|&i| i != a && i != b).collect();
            numerical_rank(&h.select_rows(&kept)) == h.ncols()
        })
    })
}

fn l0_identification() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut exact, mut l1_agree, mut made) = (0usize, 0usize, 0usize);
    while made < 100 {
        let h = random_h(&mut rng, 8, 2);
        if !survives_two_row_removal(&h) {
            continue;
        }
        made += 1;
        let model = CentralModel::new(h.clone(), 1.0).unwrap();
        let theta = DVector::from_fn(2, |_, _| rng.random_range(-10.0..10.0));
        let row = rng.random_range(0..8);
        let mut a = DVector::zeros(8);
        a[row] = rng.random_range(1.0..20.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let y = &h * &theta + a;
        if model
            .identify_l0(&y, 1, L0_EPS)
            .map(|r| r.support == vec![row])
            .unwrap_or(false)
        {
            exact += 1;
        }
        if model.identify_l1(&y).map(|r| r.support == vec![row]).unwrap_or(false) {
            l1_agree += 1;
        }
    }
    verdict(
        exact == 100,
        format!("l0 recovered the attacked row in {exact}/100; l1 support agreement {l1_agree}/100 (reported only)"),
    )
}

fn stealth_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut exceptions = 0;
    for _ in 0..500 {
        let p = rng.random_range(3..12);
        let m = rng.random_range(1..p.min(4));
        let model = CentralModel::new(random_h(&mut rng, p, m), rng.random_range(0.1..5.0)).unwrap();
        let y = DVector::from_fn(p, |_, _| rng.random_range(-3.0..3.0));
        let c = DVector::from_fn(m, |_, _| rng.random_range(-100.0..100.0));
        let attacked = &y + model.stealthy_attack(&c);
        if model.residual_detect(&y).unwrap() != model.residual_detect(&attacked).unwrap() {
            exceptions += 1;
        }
    }
    verdict(exceptions == 0, format!("{exceptions} exceptions in 500 cases"))
}

fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
}

/// Bayes error of "H₁ iff ≥ k votes" with `b` always-wrong voters.
fn fusion_error_oracle(n: u64, b: u64, acc: f64, p0: f64, k: u64) -> f64 {
    let h = n - b;
    let miss: f64 = (0..=h).filter(|&c| c < k).map(|c| binomial_pmf(h, c, acc)).sum();
    let false_alarm: f64 = (0..=h)
        .filter(|&c| c + b >= k)
        .map(|c| binomial_pmf(h, c, 1.0 - acc))
        .sum();
    (1.0 - p0) * miss + p0 * false_alarm
}

/// Gated on symmetric priors. Skewed priors are printed for context: their
/// errors are a few 1e-4 apart, a handful of events in 1e4 trials.
fn counting_fusion() -> Verdict {
    let majority = 13;
    let mut pass = true;
    let mut details = Vec::new();
    for p0 in [0.5, 0.9] {
        let p = FusionProblem::new(25, p0, 0.9, 0.2).unwrap();
        let k = choose_k_star(&p);
        let mc_k = p.simulate_error(k, ByzantineVoting::AlwaysWrong, 10_000, 9);
        let mc_majority = p.simulate_error(majority, ByzantineVoting::AlwaysWrong, 10_000, 9);
        let oracle = fusion_error_oracle(25, 5, 0.9, p0, k as u64);
        let lib_vs_oracle = (p.worst_case_error(k) - oracle).abs();
        let gated = p0 == 0.5;
        if gated {
            pass &= mc_k <= mc_majority && (mc_k - oracle).abs() <= 0.01 && lib_vs_oracle < 1e-12;
        }
        details.push(format!(
            "P0 = {p0}{}: k* = {k}, Monte-Carlo error {mc_k:.4} vs majority {mc_majority:.4}, enumeration {oracle:.6} vs majority {:.6}",
            if gated { "" } else { " (reported only; 1e4 trials cannot resolve the gap)" },
            fusion_error_oracle(25, 5, 0.9, p0, majority as u64)
        ));
    }
    verdict(pass, details.join("; "))
}

fn determinism() -> Verdict {
    let mut identical = 0;
    let mut rows = 0;
    for (scenario, seed) in [(Scenario::None, 3), (Scenario::Strong, 11), (Scenario::Weak, 17)] {
        let mut c = ScenarioConfig::desk(scenario);
        c.seed = seed;
        let first = run_scenario(&c).unwrap();
        let echoed = ScenarioConfig::from_json(&first.config.to_json(), "echo").unwrap();
        let replay = run_scenario(&echoed).unwrap();
        let (a, b) = (trace_csv_string(&first.trace), trace_csv_string(&replay.trace));
        rows += first.trace.len();
        identical += (a == b) as usize;
    }
    verdict(
        identical == 3,
        format!("{identical}/3 replays bit-identical ({rows} trace rows compared)"),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("no-adversary consistency", no_adversary),
        ("strong adversary missed with wrong estimate", strong_adversary),
        ("weak adversary dichotomy", weak_adversary),
        ("threshold recursion exactness", threshold_exactness),
        ("average consensus", average_consensus),
        ("W-MSR safety and agreement", wmsr),
        ("l0 identification exactness", l0_identification),
        ("stealth invariance", stealth_invariance),
        ("counting fusion", counting_fusion),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let v = check();
        failed += (!v.pass) as usize;
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
