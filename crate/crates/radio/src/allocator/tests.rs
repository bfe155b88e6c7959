use super::oracle::linspace;
use super::radio::{min_rates_for, solve_fixed};
use super::*;
use crate::wireless::{channel_gain, dbm_to_watts, DEFAULT_CAPACITANCE, DEFAULT_CYCLES_PER_SAMPLE};
use proptest::prelude::*;

const NOISE_PSD: f64 = 3.981_071_705_534_972e-21;

fn device(id: usize, distance_m: f64, dataset: u64) -> DeviceProfile {
    DeviceProfile {
        id,
        channel_gain: channel_gain(distance_m),
        power_min: dbm_to_watts(0.0),
        power_max: dbm_to_watts(12.0),
        freq_min: 0.2e9,
        freq_max: 2.0e9,
        cycles_per_sample: DEFAULT_CYCLES_PER_SAMPLE,
        dataset_size: dataset,
        payload_bits: 2.81e5,
    }
}

fn system(m: usize, weight: f64) -> SystemParams {
    SystemParams {
        device_count: m,
        noise_psd: NOISE_PSD,
        capacitance: DEFAULT_CAPACITANCE,
        local_iters: 1,
        global_rounds: 100,
        weight,
        total_bandwidth: 20e6,
    }
}

fn problem(distances: &[f64], datasets: &[u64], weight: f64) -> AllocationProblem {
    let devices = distances.iter().zip(datasets).enumerate().map(|(u, (&d, &n))| device(u, d, n)).collect();
    AllocationProblem::new(devices, system(distances.len(), weight)).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn problem_rejects_count_mismatch() {
    let err = AllocationProblem::new(vec![device(0, 100.0, 100)], system(2, 0.5)).unwrap_err();
    assert!(matches!(err, RadioError::Domain(_)));
}

#[test]
fn stationary_frequency_before_clipping() {
    // l = 2*alpha*G*xi*(1e9)^3 recovers 1 GHz.
    let (alpha, g, xi) = (0.5, 100.0, 1e-28);
    let l = 2.0 * alpha * g * xi * 1e27;
    let f = frequency_from_multiplier(l, alpha, g, xi, 0.2e9, 2e9);
    assert!(rel(f, 1e9) < 1e-12);
    assert_eq!(frequency_from_multiplier(l * 1e6, alpha, g, xi, 0.2e9, 2e9), 2e9);
    assert_eq!(frequency_from_multiplier(0.0, alpha, g, xi, 0.2e9, 2e9), 0.2e9);
}

#[test]
fn kkt_power_closed_form_and_clipping() {
    // Lambda = 1 gives zero unclipped power, so the lower bound applies.
    assert_eq!(kkt_power(1.0, 1e6, 1e9, 1e-3, 1e-2), 1e-3);
    // Lambda = 3, b = 1 MHz, s = 1e9 -> rho = 2e-3.
    assert!(rel(kkt_power(3.0, 1e6, 1e9, 1e-3, 1e-2), 2e-3) < 1e-12);
    assert_eq!(kkt_power(1e9, 1e6, 1e9, 1e-3, 1e-2), 1e-2);
    // Lambda from the ratio parameters.
    let lam = kkt_ratio(2.0, 3.0, 4.0, 1e9, 1e6);
    assert!(rel(lam, 5.0 * 1e9 / (1e6 * std::f64::consts::LN_2)) < 1e-12);
}

#[test]
fn rate_tight_bandwidth_meets_rate_exactly() {
    let s = channel_gain(100.0) / NOISE_PSD;
    let p = dbm_to_watts(0.0);
    let target = 2e6;
    let b = rate_tight_bandwidth(p, s, target).unwrap();
    let rate = b * (p * s / b).ln_1p() / std::f64::consts::LN_2;
    assert!(rel(rate, target) < 1e-10);
    // Above the infinite-bandwidth limit there is no solution.
    assert!(rate_tight_bandwidth(p, s, 2.0 * p * s / std::f64::consts::LN_2).is_none());
    assert_eq!(rate_tight_bandwidth(p, s, 0.0), Some(0.0));
}

#[test]
fn subproblem_a_matches_grid_for_single_device() {
    for &alpha in &[0.1, 0.5, 0.9, 0.99] {
        let prob = problem(&[120.0], &[500], alpha);
        let rate = 5e6;
        let a = solve_subproblem_a(&prob, &[rate]).unwrap();
        let t_ul = prob.devices[0].payload_bits / rate;
        let c = prob.cycles(0);
        let g = prob.sys.rounds();
        let value = |f: f64| alpha * g * prob.sys.capacitance * c * f * f + (1.0 - alpha) * g * (c / f + t_ul);
        let grid = linspace(0.2e9, 2e9, 2000);
        let best = grid.iter().map(|&f| value(f)).fold(f64::INFINITY, f64::min);
        let got = value(a.freqs[0]);
        assert!(got <= best * (1.0 + 1e-9), "alpha {alpha}: {got} vs grid {best}");
        assert!(rel(a.latency_cap, c / a.freqs[0] + t_ul) < 1e-9);
    }
}

#[test]
fn subproblem_a_extreme_weights() {
    let prob = problem(&[50.0, 200.0], &[300, 700], 0.0);
    let a = solve_subproblem_a(&prob, &[4e6, 1e6]).unwrap();
    assert_eq!(a.freqs, vec![2e9, 2e9]);
    let prob = problem(&[50.0, 200.0], &[300, 700], 1.0);
    let a = solve_subproblem_a(&prob, &[4e6, 1e6]).unwrap();
    assert_eq!(a.freqs, vec![0.2e9, 0.2e9]);
}

#[test]
fn subproblem_a_rejects_bad_rates() {
    let prob = problem(&[50.0], &[300], 0.5);
    assert!(solve_subproblem_a(&prob, &[0.0]).is_err());
    assert!(solve_subproblem_a(&prob, &[f64::NAN]).is_err());
    assert!(solve_subproblem_a(&prob, &[1.0, 2.0]).is_err());
}

/// Grid oracle for the radio block with two devices: the budget is spent in
/// full, so `b_2 = b_total - b_1`.
fn radio_grid(prob: &AllocationProblem, min_rates: &[f64], n: usize) -> f64 {
    let ag = prob.sys.weight * prob.sys.rounds();
    let p0 = linspace(prob.devices[0].power_min, prob.devices[0].power_max, n);
    let p1 = linspace(prob.devices[1].power_min, prob.devices[1].power_max, n);
    let bs = linspace(0.0, prob.sys.total_bandwidth, n + 2);
    let mut best = f64::INFINITY;
    for &b0 in &bs[1..bs.len() - 1] {
        let b1 = prob.sys.total_bandwidth - b0;
        for &r0 in &p0 {
            let g0 = prob.rate(0, r0, b0);
            if g0 < min_rates[0] {
                continue;
            }
            for &r1 in &p1 {
                let g1 = prob.rate(1, r1, b1);
                if g1 < min_rates[1] {
                    continue;
                }
                let v = ag
                    * (r0 * prob.devices[0].payload_bits / g0 + r1 * prob.devices[1].payload_bits / g1);
                best = best.min(v);
            }
        }
    }
    best
}

fn radio_value(prob: &AllocationProblem, sol: &RadioSolution) -> f64 {
    let ag = prob.sys.weight * prob.sys.rounds();
    (0..prob.len())
        .map(|u| ag * sol.powers[u] * prob.devices[u].payload_bits / prob.rate(u, sol.powers[u], sol.bandwidths[u]))
        .sum()
}

#[test]
fn subproblem_b_matches_grid_for_two_devices() {
    for (dists, alpha) in [([60.0, 220.0], 0.5), ([150.0, 150.0], 0.8), ([30.0, 240.0], 0.2)] {
        let prob = problem(&dists, &[400, 600], alpha);
        let freqs = vec![1e9, 1e9];
        for cap_scale in [1.5, 3.0, 20.0] {
            let compute = (0..2).map(|u| prob.cycles(u) / freqs[u]).fold(0.0, f64::max);
            let cap = compute * cap_scale;
            let Ok(sol) = solve_subproblem_b(&prob, &freqs, cap) else { continue };
            let min_rates = min_rates_for(&prob, &freqs, cap).unwrap();
            for u in 0..2 {
                assert!(prob.rate(u, sol.powers[u], sol.bandwidths[u]) >= min_rates[u] * (1.0 - 1e-9));
            }
            assert!(sol.bandwidths.iter().sum::<f64>() <= prob.sys.total_bandwidth * (1.0 + 1e-9));
            let grid = radio_grid(&prob, &min_rates, 100);
            let got = radio_value(&prob, &sol);
            assert!(got <= grid * (1.0 + 1e-3), "{dists:?} alpha {alpha} cap x{cap_scale}: {got} vs {grid}");
        }
    }
}

#[test]
fn subproblem_b_converges_and_certifies() {
    let prob = problem(&[80.0, 160.0, 240.0], &[300, 500, 700], 0.6);
    let freqs = vec![1.2e9, 1.0e9, 0.8e9];
    let compute = (0..3).map(|u| prob.cycles(u) / freqs[u]).fold(0.0, f64::max);
    let sol = solve_subproblem_b(&prob, &freqs, compute * 2.0).unwrap();
    assert!(sol.converged);
    assert!(sol.residual_norm < 1e-4);
    let res = newton_residual(&sol.state, &sol.powers, &sol.bandwidths, &prob);
    assert!(rel(res.relative_norm(), sol.residual_norm) < 1e-12 || sol.residual_norm == 0.0);
    assert!(sol.state.mu > 0.0);
    let used: f64 = sol.bandwidths.iter().sum();
    assert!(rel(used, prob.sys.total_bandwidth) < 1e-6);
}

#[test]
fn subproblem_b_reports_infeasible_devices() {
    let prob = problem(&[80.0, 249.0], &[300, 500], 0.5);
    let freqs = vec![2e9, 2e9];
    let compute = (0..2).map(|u| prob.cycles(u) / freqs[u]).fold(0.0, f64::max);
    let err = solve_subproblem_b(&prob, &freqs, compute * (1.0 + 1e-9)).unwrap_err();
    assert!(matches!(err, RadioError::Infeasible { .. }), "{err:?}");
}

#[test]
fn zero_weight_uses_maximum_power() {
    let prob = problem(&[80.0, 160.0], &[300, 500], 0.0);
    let sol = solve_fixed(&prob, &[1e6, 1e6]).unwrap();
    assert_eq!(sol.powers, vec![prob.devices[0].power_max, prob.devices[1].power_max]);
}

#[test]
fn identical_devices_share_bandwidth_equally() {
    for &alpha in &[0.0, 0.3, 0.7, 1.0] {
        let prob = problem(&[120.0; 4], &[500; 4], alpha);
        let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
        for &b in &sol.bandwidths {
            assert!(rel(b, prob.sys.total_bandwidth / 4.0) < 1e-6, "alpha {alpha}: {:?}", sol.bandwidths);
        }
    }
}

#[test]
fn latency_only_weight_maxes_power_and_frequency() {
    let prob = problem(&[40.0, 130.0, 230.0], &[300, 500, 800], 0.0);
    let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
    for u in 0..3 {
        assert_eq!(sol.powers[u], prob.devices[u].power_max);
        assert_eq!(sol.freqs[u], prob.devices[u].freq_max);
    }
}

#[test]
fn energy_only_weight_mins_power_and_frequency() {
    let prob = problem(&[40.0, 130.0, 230.0], &[300, 500, 800], 1.0);
    let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
    for u in 0..3 {
        assert!(rel(sol.powers[u], prob.devices[u].power_min) < 1e-9, "{:?}", sol.powers);
        assert_eq!(sol.freqs[u], prob.devices[u].freq_min);
    }
}

#[test]
fn alternating_is_close_to_brute_force_for_two_devices() {
    for (dists, alpha) in [([60.0, 220.0], 0.5), ([150.0, 90.0], 0.8), ([30.0, 240.0], 0.2)] {
        let prob = problem(&dists, &[400, 600], alpha);
        let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
        let grid = brute_force_allocate(&prob, 40).unwrap();
        assert!(
            sol.objective <= grid.objective * 1.02,
            "{dists:?} alpha {alpha}: {} vs grid {}",
            sol.objective,
            grid.objective
        );
    }
}

#[test]
fn oracle_refuses_large_instances_and_tiny_grids() {
    let prob = problem(&[50.0; 4], &[100; 4], 0.5);
    assert!(matches!(brute_force_allocate(&prob, 5), Err(RadioError::TooLarge { devices: 4, max: 3 })));
    let prob = problem(&[50.0], &[100], 0.5);
    assert!(brute_force_allocate(&prob, 1).is_err());
}

/// Full enumeration of the oracle grid, for cross-checking the frontier
/// search.
fn naive_grid(prob: &AllocationProblem, n: usize) -> f64 {
    let m = prob.len();
    let b_axis = linspace(0.0, prob.sys.total_bandwidth, n);
    let mut best = f64::INFINITY;
    let pr: Vec<Vec<f64>> = prob.devices.iter().map(|d| linspace(d.power_min, d.power_max, n)).collect();
    let fr: Vec<Vec<f64>> = prob.devices.iter().map(|d| linspace(d.freq_min, d.freq_max, n)).collect();
    assert_eq!(m, 2);
    for &b0 in &b_axis {
        let b = [b0, prob.sys.total_bandwidth - b0];
        if b.iter().any(|&x| x <= 0.0) {
            continue;
        }
        for &r0 in &pr[0] {
            for &r1 in &pr[1] {
                for &f0 in &fr[0] {
                    for &f1 in &fr[1] {
                        let (p, f) = ([r0, r1], [f0, f1]);
                        let cap = prob.induced_cap(&p, &b, &f);
                        best = best.min(evaluate_objective(prob, &p, &b, &f, cap));
                    }
                }
            }
        }
    }
    best
}

#[test]
fn frontier_search_equals_full_enumeration() {
    for alpha in [0.0, 0.3, 0.9, 1.0] {
        let prob = problem(&[70.0, 200.0], &[300, 900], alpha);
        let fast = brute_force_allocate(&prob, 7).unwrap();
        let slow = naive_grid(&prob, 7);
        assert!(rel(fast.objective, slow) < 1e-12, "alpha {alpha}: {} vs {slow}", fast.objective);
    }
}

#[test]
fn refining_the_grid_never_hurts() {
    let prob = problem(&[70.0, 200.0], &[300, 900], 0.6);
    let coarse = brute_force_allocate(&prob, 9).unwrap();
    let fine = brute_force_allocate(&prob, 17).unwrap();
    assert!(fine.objective <= coarse.objective * (1.0 + 1e-12));
}

#[test]
fn kkt_report_is_clean_at_returned_solution() {
    let prob = problem(&[40.0, 130.0, 230.0], &[300, 500, 800], 0.5);
    let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
    assert!(sol.converged);
    let kkt = sol.kkt_report(&prob).unwrap();
    assert!(kkt.rate_slackness < 1e-6, "{kkt:?}");
    assert!(kkt.bandwidth_slackness < 1e-6, "{kkt:?}");
    assert!(kkt.newton_residual < 1e-4, "{kkt:?}");
}

#[test]
fn boundary_solutions_still_carry_a_certificate() {
    // A lone device whose latency term dominates ends at maximum power with
    // the whole budget, exactly on the radio block's feasibility boundary.
    for (dist, bw, alpha) in [(20.0, 1e6, 0.1), (20.0, 3e6, 0.2), (20.0, 1e7, 0.1)] {
        let mut prob = problem(&[dist], &[900], alpha);
        prob.sys.total_bandwidth = bw;
        let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
        let kkt = sol.kkt_report(&prob).expect("certificate");
        assert!(kkt.rate_slackness < 1e-6 && kkt.newton_residual < 1e-4, "{kkt:?}");
    }
}

#[test]
fn fixed_cap_mode_still_feasible_and_monotone() {
    let prob = problem(&[40.0, 130.0, 230.0], &[300, 500, 800], 0.5);
    let opts = AllocationOptions { cap_mode: CapMode::Fixed, ..Default::default() };
    let sol = alternate_optimize(&prob, &opts).unwrap();
    for w in sol.trajectory.windows(2) {
        assert!(w[1].objective <= w[0].objective * (1.0 + 1e-9));
    }
    assert!(sol.trajectory.iter().all(|r| r.max_constraint_violation < 1e-9));
}

fn arb_problem(max_devices: usize) -> impl Strategy<Value = AllocationProblem> {
    (
        prop::collection::vec((5.0f64..250.0, 100u64..1000), 1..=max_devices),
        0.0f64..=1.0,
        1e6f64..4e7,
    )
        .prop_map(|(devs, alpha, bw)| {
            let m = devs.len();
            let devices = devs.iter().enumerate().map(|(u, &(d, n))| device(u, d, n)).collect();
            let mut sys = system(m, alpha);
            sys.total_bandwidth = bw;
            AllocationProblem::new(devices, sys).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solution_is_feasible_and_trajectory_monotone(prob in arb_problem(6)) {
        let sol = alternate_optimize(&prob, &AllocationOptions::default()).unwrap();
        let used: f64 = sol.bandwidths.iter().sum();
        prop_assert!(used <= prob.sys.total_bandwidth * (1.0 + 1e-9));
        for u in 0..prob.len() {
            let d = &prob.devices[u];
            prop_assert!(sol.powers[u] >= d.power_min * (1.0 - 1e-12) && sol.powers[u] <= d.power_max * (1.0 + 1e-12));
            prop_assert!(sol.freqs[u] >= d.freq_min && sol.freqs[u] <= d.freq_max);
            prop_assert!(sol.bandwidths[u] > 0.0);
        }
        for w in sol.trajectory.windows(2) {
            prop_assert!(w[1].objective <= w[0].objective * (1.0 + 1e-9), "{:?}", sol.trajectory);
        }
        prop_assert!(sol.trajectory.iter().all(|r| r.max_constraint_violation < 1e-9));
    }

    #[test]
    fn compute_multipliers_sum_to_latency_price(prob in arb_problem(5), rates in prop::collection::vec(1e5f64..1e8, 5)) {
        prop_assume!(prob.sys.weight > 0.0);
        let rates = &rates[..prob.len()];
        let a = solve_subproblem_a(&prob, rates).unwrap();
        let price = (1.0 - prob.sys.weight) * prob.sys.rounds();
        let total: f64 = a.multipliers.iter().sum();
        prop_assert!((total - price).abs() <= 1e-6 * price.max(1.0), "{total} vs {price}");
        prop_assert!(a.multipliers.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn oracle_is_monotone_under_refinement(prob in arb_problem(2), n in 3usize..8) {
        let coarse = brute_force_allocate(&prob, n).unwrap();
        let fine = brute_force_allocate(&prob, 2 * n - 1).unwrap();
        prop_assert!(fine.objective <= coarse.objective * (1.0 + 1e-12));
    }
}

