//! Scenario builders and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use pursuit_core::belief::Belief;
use pursuit_core::episode::{default_max_steps, run_batch, Scenario};
use pursuit_core::odor::bessel::bessel_k0;
use pursuit_core::policy::{value_iteration, PolicySpec, DEFAULT_GAMMA, DEFAULT_TOLERANCE};
use pursuit_core::target::{
    discrete_transition_matrix, estimate_discretized_transition, invariant_distribution,
    symmetrized_matrix, ContinuousRtParams, DiscreteRtParams,
};
use pursuit_core::{
    Action, Alphabet, DetectionModel, Displacement, GridSpec, LatticePoint, LikelihoodKind,
    LikelihoodTable, Observation, TransitionMatrix,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LAMBDA: f64 = 3.0;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Lattice scenario with `lambda = 3`, `R = 1` and its value table attached.
pub fn lattice(side: usize, tau_p: f64, policy: PolicySpec) -> Scenario {
    let grid = GridSpec::unit(side).unwrap();
    let model = DetectionModel::lattice(LAMBDA, 1.0).unwrap();
    let params = DiscreteRtParams::from_persistence_time(tau_p).unwrap();
    let q = Arc::new(
        value_iteration(&discrete_transition_matrix(params), &grid, DEFAULT_GAMMA, DEFAULT_TOLERANCE).unwrap(),
    );
    Scenario::discrete(grid, model, params, policy, default_max_steps(&grid), Some(q)).unwrap()
}

/// Continuous scenario at `U = 1`, run time `tau_p`, `U tau_d / lambda = ratio`
/// and `R tau_d = 36`, with the lattice chain calibrated on 10^7 steps.
pub fn continuous(side: usize, tau_p: f64, ratio: f64, policy: PolicySpec) -> Scenario {
    let grid = GridSpec::unit(side).unwrap();
    let tau_d = ratio * LAMBDA;
    let model = DetectionModel::new(LAMBDA, 36.0 / tau_d, tau_d, 1.0, 1.0).unwrap();
    let params = ContinuousRtParams::new(1.0, tau_p, 0.1).unwrap();
    let est = estimate_discretized_transition(&params, &grid, 10_000_000, &mut rng(2024)).unwrap();
    let q = Arc::new(value_iteration(&est.matrix, &grid, DEFAULT_GAMMA, DEFAULT_TOLERANCE).unwrap());
    Scenario::continuous(grid, model, params, est.matrix, policy, default_max_steps(&grid), Some(q)).unwrap()
}

fn min_image_component(d: i64, side: i64) -> i64 {
    let m = d.rem_euclid(side);
    if m > side / 2 {
        m - side
    } else {
        m
    }
}

/// Forward pass over the explicit joint state `(x, u)` of a small lattice,
/// built directly from the definitions. Returns the largest absolute
/// difference from the library filter over `episodes` random episodes of
/// `steps` steps each.
pub fn filter_oracle_error(p: &TransitionMatrix, side: usize, episodes: usize, steps: usize, seed: u64) -> f64 {
    let grid = GridSpec::unit(side).unwrap();
    let alphabet = p.alphabet();
    let n = alphabet.len();
    let l = side as i64;
    let cells = side * side;
    let model = DetectionModel::lattice(2.0, 2.0).unwrap();
    let table = LikelihoodTable::new(&model, &grid, LikelihoodKind::HitRate).unwrap();
    let q = invariant_distribution(p).unwrap();
    let state = |x: usize, u: usize| u * cells + x;
    let pos = |x: usize| ((x / side) as i64, (x % side) as i64);
    let captured = |agent: (i64, i64), x: usize| {
        let (xi, xj) = pos(x);
        let di = min_image_component(agent.0 - xi, l);
        let dj = min_image_component(agent.1 - xj, l);
        di * di + dj * dj <= 2
    };
    let detect_prob = |agent: (i64, i64), x: usize| {
        let (xi, xj) = pos(x);
        let d = Displacement::new(min_image_component(agent.0 - xi, l), min_image_component(agent.1 - xj, l));
        if d.is_zero() {
            0.0
        } else {
            model.detection_likelihood(d).unwrap().1
        }
    };
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..episodes {
        let mut agent = (r.random_range(0..l), r.random_range(0..l));
        let mut oracle = vec![0.0; cells * n];
        for x in 0..cells {
            if captured(agent, x) {
                continue;
            }
            for u in 0..n {
                oracle[state(x, u)] = detect_prob(agent, x) * q[u];
            }
        }
        let z: f64 = oracle.iter().sum();
        oracle.iter_mut().for_each(|b| *b /= z);
        let lp = LatticePoint::new(agent.0, agent.1);
        let mut belief = Belief::initial(lp, &table, &q, &grid, alphabet).unwrap();
        for (a, b) in oracle.iter().zip(belief.as_slice()) {
            worst = worst.max((a - b).abs());
        }
        for _ in 0..steps {
            let mut next = vec![0.0; cells * n];
            for x in 0..cells {
                let (xi, xj) = pos(x);
                for u in 0..n {
                    let mass = oracle[state(x, u)];
                    if mass == 0.0 {
                        continue;
                    }
                    let (vi, vj) = alphabet.velocity(u);
                    let x2 = ((xi + vi).rem_euclid(l) * l + (xj + vj).rem_euclid(l)) as usize;
                    for u2 in 0..n {
                        next[state(x2, u2)] += p.prob(u2, u) * mass;
                    }
                }
            }
            let (ai, aj) = Action::from_index(r.random_range(0..4)).offset();
            agent = ((agent.0 + ai).rem_euclid(l), (agent.1 + aj).rem_euclid(l));
            for x in 0..cells {
                if captured(agent, x) {
                    for u in 0..n {
                        next[state(x, u)] = 0.0;
                    }
                }
            }
            let alive: f64 = next.iter().sum();
            if alive < 1e-6 {
                break;
            }
            let p_yes: f64 = (0..cells)
                .map(|x| detect_prob(agent, x) * (0..n).map(|u| next[state(x, u)]).sum::<f64>())
                .sum::<f64>()
                / alive;
            let obs = if r.random::<f64>() < p_yes {
                Observation::Detection
            } else {
                Observation::NoDetection
            };
            for x in 0..cells {
                let lik = match obs {
                    Observation::Detection => detect_prob(agent, x),
                    _ => 1.0 - detect_prob(agent, x),
                };
                for u in 0..n {
                    next[state(x, u)] *= lik;
                }
            }
            let z: f64 = next.iter().sum();
            next.iter_mut().for_each(|b| *b /= z);
            oracle = next;

            let lp = LatticePoint::new(agent.0, agent.1);
            belief = belief.predict(p, &grid).unwrap();
            belief.observe(obs, lp, &table, &grid).unwrap();
            for (a, b) in oracle.iter().zip(belief.as_slice()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}

/// Random nine-state matrix obeying the square-lattice symmetries.
pub fn random_moore_matrix(seed: u64) -> TransitionMatrix {
    let mut r = rng(seed);
    let counts: Vec<u64> = (0..81).map(|_| r.random_range(1..1000)).collect();
    symmetrized_matrix(&counts, Alphabet::Moore).unwrap()
}

/// Largest deviation between value iteration and a depth-`horizon`
/// expectimax on a `side` lattice where the target stops after one move.
pub fn expectimax_error(side: usize, horizon: usize) -> f64 {
    let grid = GridSpec::unit(side).unwrap();
    let l = side as i64;
    let gamma = DEFAULT_GAMMA;
    let alphabet = Alphabet::Cardinal;
    let p = TransitionMatrix::stationary(alphabet);
    let table = value_iteration(&p, &grid, gamma, 1e-13).unwrap();
    let wrap = |v: i64| min_image_component(v, l);
    // V_h(d) with the target at rest, memoized per horizon.
    let mut layers: Vec<Vec<f64>> = vec![vec![0.0; side * side]];
    let idx = |di: i64, dj: i64| (di.rem_euclid(l) * l + dj.rem_euclid(l)) as usize;
    let backup = |prev: &[f64], di: i64, dj: i64, u: (i64, i64), a: (i64, i64)| {
        let (ni, nj) = (wrap(di + a.0 - u.0), wrap(dj + a.1 - u.1));
        if ni * ni + nj * nj <= 2 {
            1.0
        } else {
            gamma * prev[idx(ni, nj)]
        }
    };
    for _ in 0..horizon {
        let prev = layers.last().unwrap().clone();
        let mut cur = vec![0.0; side * side];
        for di in -(l / 2)..=(l / 2) {
            for dj in -(l / 2)..=(l / 2) {
                cur[idx(di, dj)] = (0..4)
                    .map(|k| backup(&prev, di, dj, (0, 0), Action::from_index(k).offset()))
                    .fold(f64::MIN, f64::max);
            }
        }
        layers.push(cur);
    }
    let last = &layers[horizon - 1];
    let mut worst: f64 = 0.0;
    for di in -(l / 2)..=(l / 2) {
        for dj in -(l / 2)..=(l / 2) {
            for u in 0..alphabet.len() {
                let v = alphabet.velocity(u);
                for k in 0..4 {
                    let a = Action::from_index(k);
                    let expect = backup(last, di, dj, v, a.offset());
                    let got = table.q(&grid, Displacement::new(di, dj), u, a);
                    worst = worst.max((expect - got).abs());
                }
            }
        }
    }
    worst
}

/// `K0(x) = int_0^inf exp(-x cosh t) dt` by the trapezoid rule, which
/// converges geometrically for this integrand.
pub fn k0_oracle(x: f64) -> f64 {
    let h = 1.0 / 64.0;
    let t_max = (746.0 / x).max(1.0).acosh() + 1.0;
    let steps = (t_max / h).ceil() as usize;
    let mut sum = 0.5 * (-x).exp();
    for k in 1..=steps {
        sum += (-x * (k as f64 * h).cosh()).exp();
    }
    sum * h
}

/// Largest relative error of `bessel_k0` over `n` log-spaced points of `[lo, hi]`.
pub fn k0_max_rel_error(n: usize, lo: f64, hi: f64) -> f64 {
    (0..n)
        .map(|k| {
            let x = lo * (hi / lo).powf(k as f64 / (n - 1) as f64);
            let exact = k0_oracle(x);
            ((bessel_k0(x).unwrap() - exact) / exact).abs()
        })
        .fold(0.0, f64::max)
}

/// Worst violations seen over `ops` random belief operations: returns
/// `(normalization error, most negative entry, mass change under prediction)`.
pub fn belief_invariants(ops: usize, seed: u64) -> (f64, f64, f64) {
    let mut r = rng(seed);
    let side = 9;
    let grid = GridSpec::unit(side).unwrap();
    let model = DetectionModel::lattice(2.0, 1.5).unwrap();
    let table = LikelihoodTable::new(&model, &grid, LikelihoodKind::HitRate).unwrap();
    let matrices = [
        discrete_transition_matrix(DiscreteRtParams::from_persistence_time(4.0).unwrap()),
        random_moore_matrix(seed ^ 0x55),
    ];
    let (mut norm, mut neg, mut drift): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut which = 0;
    let fresh = |r: &mut ChaCha8Rng, which: usize| {
        let alphabet = matrices[which].alphabet();
        let w: Vec<f64> = (0..grid.cells() * alphabet.len())
            .map(|_| if r.random::<f64>() < 0.3 { 0.0 } else { r.random::<f64>() })
            .collect();
        Belief::from_weights(&grid, alphabet, w).unwrap()
    };
    let mut b = fresh(&mut r, which);
    for _ in 0..ops {
        match r.random_range(0..10) {
            0 => {
                which = r.random_range(0..2);
                b = fresh(&mut r, which);
            }
            1..=4 => {
                let before = b.total();
                b = b.predict(&matrices[which], &grid).unwrap();
                drift = drift.max((b.total() - before).abs());
            }
            _ => {
                let agent = LatticePoint::new(r.random_range(0..side as i64), r.random_range(0..side as i64));
                let obs = if r.random::<f64>() < 0.3 {
                    Observation::Detection
                } else {
                    Observation::NoDetection
                };
                let before = b.clone();
                if b.observe(obs, agent, &table, &grid).is_err() {
                    if b != before {
                        return (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
                    }
                    b = fresh(&mut r, which);
                }
            }
        }
        norm = norm.max((b.total() - 1.0).abs());
        neg = neg.min(b.as_slice().iter().cloned().fold(0.0, f64::min));
    }
    (norm, neg, drift)
}

/// Whether batches run on 1, 4 and 8 workers produce identical records.
pub fn deterministic_across_jobs(scenario: &Scenario, n: usize, seed: u64) -> bool {
    let reference = run_batch(scenario, n, seed, 1).unwrap();
    [4, 8].iter().all(|&j| run_batch(scenario, n, seed, j).unwrap() == reference)
}

/// Episodes where `Hybrid { w: 0 }` and Infotaxis disagree in any record field.
pub fn hybrid_zero_mismatches(scenario: &Scenario, n: usize, seed: u64) -> usize {
    let a = run_batch(&scenario.with_policy(PolicySpec::Hybrid { w: 0.0 }).unwrap(), n, seed, 1).unwrap();
    let b = run_batch(&scenario.with_policy(PolicySpec::Infotaxis).unwrap(), n, seed, 1).unwrap();
    a.records.iter().zip(&b.records).filter(|(x, y)| x != y).count()
}
