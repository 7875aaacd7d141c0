use qmdp::dp::{solve_neutral_dp, solve_var_dp, DpKind, MarkovPolicy, QTensor, RiskGrid, TensorKind};
use qmdp::exec::{
    evaluate_policy, exec_var_episode, mc_quantile, rollout_returns, simulate_markov, PolicyRef,
};
use qmdp::mdp::{gen_random_mdp, Mdp, Transition};
use qmdp::Error;

fn tr(next: usize, prob: f64, reward: f64) -> Transition<f64> {
    Transition { next, prob, reward }
}

#[test]
fn deterministic_return_matches_lower_bound() {
    let mdp = gen_random_mdp::<f64>(21, 4, 3, 1, (-1.0, 1.0)).unwrap();
    let grid = RiskGrid::new(8).unwrap();
    let q = solve_var_dp(&mdp, &grid, 6, DpKind::Lower).unwrap();
    for &alpha0 in &[0.2, 0.5, 0.9] {
        let j = grid.index_of(alpha0).unwrap();
        let a = q.greedy_action(6, 0, j);
        let res = exec_var_episode(&mdp, &q, 0, alpha0, 6, 3, false).unwrap();
        assert!((res.discounted_return - q.get(6, 0, j, a)).abs() < 1e-12);
    }
}

#[test]
fn horizon_one_collects_greedy_reward() {
    let mdp = gen_random_mdp::<f64>(22, 3, 3, 2, (-1.0, 1.0)).unwrap();
    let grid = RiskGrid::new(4).unwrap();
    let q = solve_var_dp(&mdp, &grid, 1, DpKind::Lower).unwrap();
    // per-(s,a) rewards: every successor pays the same
    let a = q.greedy_action(1, 2, 2);
    let res = exec_var_episode(&mdp, &q, 2, 0.5, 1, 9, true).unwrap();
    assert_eq!(res.discounted_return, mdp.transitions(2, a)[0].reward);
    assert_eq!(res.trace.unwrap().len(), 1);
}

#[test]
fn empty_risk_set_falls_back_to_top_index() {
    let mdp = Mdp::new(1, 1, vec![vec![tr(0, 1.0, 0.0)]], 0.5).unwrap();
    let grid = RiskGrid::new(2).unwrap();
    let mut values = vec![0.0; 3 * 2];
    values[2 * 2] = 10.0;
    values[2 * 2 + 1] = 10.0;
    let q = QTensor::from_values(TensorKind::Lower, 2, 1, 1, grid, values).unwrap();
    let res = exec_var_episode(&mdp, &q, 0, 0.1, 2, 0, true).unwrap();
    let trace = res.trace.unwrap();
    assert_eq!(trace[0].j, 0);
    assert_eq!(trace[1].j, 1);
}

#[test]
fn exec_errors() {
    let mdp = gen_random_mdp::<f64>(1, 2, 2, 2, (-1.0, 1.0)).unwrap();
    let grid = RiskGrid::new(4).unwrap();
    let q = solve_var_dp(&mdp, &grid, 2, DpKind::Lower).unwrap();
    assert_eq!(
        exec_var_episode(&mdp, &q, 0, 0.5, 3, 0, false),
        Err(Error::HorizonMismatch { available: 2, requested: 3 })
    );
    assert!(matches!(exec_var_episode(&mdp, &q, 0, 1.0, 2, 0, false), Err(Error::AlphaOutOfRange(_))));
    let flat = mdp.clone().with_gamma(0.0).unwrap();
    assert_eq!(exec_var_episode(&flat, &q, 0, 0.5, 2, 0, false), Err(Error::GammaZero));
}

#[test]
fn markov_rollouts() {
    let det = gen_random_mdp::<f64>(23, 3, 2, 1, (-1.0, 1.0)).unwrap();
    let policy = solve_neutral_dp(&det, 5).unwrap().greedy_policy();
    let (mut s, mut ret, mut disc) = (1, 0.0, 1.0);
    for k in 0..5 {
        let t = det.transitions(s, policy.action(5 - k, s))[0];
        ret += disc * t.reward;
        disc *= det.gamma();
        s = t.next;
    }
    assert!((simulate_markov(&det, &policy, 1, 5, 77).unwrap().discounted_return - ret).abs() < 1e-12);

    let absorbing = Mdp::new(1, 1, vec![vec![tr(0, 1.0, 0.0)]], 0.9).unwrap();
    let stay = MarkovPolicy::constant(4, 1, 0);
    assert_eq!(simulate_markov(&absorbing, &stay, 0, 4, 1).unwrap().discounted_return, 0.0);

    let mdp = gen_random_mdp::<f64>(24, 4, 2, 3, (-1.0, 1.0)).unwrap();
    let p = MarkovPolicy::constant(10, 4, 1);
    let runs: Vec<f64> = (0..20).map(|seed| simulate_markov(&mdp, &p, 0, 10, seed).unwrap().discounted_return).collect();
    assert!(runs.windows(2).any(|w| w[0] != w[1]));
    for seed in 0..5 {
        assert_eq!(runs[seed as usize], simulate_markov(&mdp, &p, 0, 10, seed).unwrap().discounted_return);
    }
}

#[test]
fn quantile_examples() {
    let r: Vec<f64> = (1..=100).map(f64::from).collect();
    let est = mc_quantile(&r, 0.25).unwrap();
    assert_eq!(est.point, 26.0);
    assert!(est.ci_lo <= est.point && est.point <= est.ci_hi);
    assert!(est.ci_lo < 26.0 && est.ci_hi > 26.0);

    let c = vec![3.5; 40];
    let est = mc_quantile(&c, 0.7).unwrap();
    assert_eq!((est.point, est.ci_lo, est.ci_hi), (3.5, 3.5, 3.5));
    assert_eq!(est.half_width(), 0.0);

    assert_eq!(mc_quantile(&[1.0; 5], 0.5), Err(Error::TooFewSamples { needed: 20, got: 5 }));
    assert!(matches!(mc_quantile(&r, 0.0), Err(Error::AlphaOutOfRange(_))));
}

#[test]
fn quantile_interval_covers_known_quantile() {
    // Uniform(0,1) order statistics: the 0.3 quantile should fall inside
    // the 99% interval in the vast majority of replications.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut misses = 0;
    for _ in 0..200 {
        let xs: Vec<f64> = (0..500).map(|_| rng.gen()).collect();
        let est = mc_quantile(&xs, 0.3).unwrap();
        if !(est.ci_lo <= 0.3 && 0.3 <= est.ci_hi) {
            misses += 1;
        }
    }
    assert!(misses <= 8, "{misses} misses");
}

#[test]
fn evaluation_reports() {
    let det = gen_random_mdp::<f64>(25, 3, 2, 1, (-1.0, 1.0)).unwrap();
    let policy = MarkovPolicy::constant(4, 3, 0);
    let alphas = [0.1, 0.5, 0.9];
    let rep = evaluate_policy(&det, PolicyRef::Markov(&policy), 0, 4, &alphas, 100, 1).unwrap();
    let first = rep.rows[0].estimate.point;
    assert!(rep.rows.iter().all(|r| r.estimate.point == first && r.estimate.ci_lo == first && r.n == 100));

    let mdp = gen_random_mdp::<f64>(26, 3, 2, 2, (-1.0, 1.0)).unwrap();
    let grid = RiskGrid::new(16).unwrap();
    let q = solve_var_dp(&mdp, &grid, 5, DpKind::Lower).unwrap();
    let p = PolicyRef::Var { q: &q, alpha0: 0.3 };
    let a = evaluate_policy(&mdp, p, 0, 5, &alphas, 500, 42).unwrap();
    let b = evaluate_policy(&mdp, p, 0, 5, &alphas, 500, 42).unwrap();
    assert_eq!(a, b);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.write_csv(&mut ca).unwrap();
    b.write_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
    assert!(String::from_utf8(ca).unwrap().starts_with("alpha,point,ci_lo,ci_hi,n,seed\n"));
    assert!(matches!(evaluate_policy(&mdp, p, 0, 5, &alphas, 50, 1), Err(Error::TooFewSamples { .. })));
}

#[test]
fn var_policy_meets_its_bound_on_small_fixture() {
    let mdp = gen_random_mdp::<f64>(7, 2, 2, 2, (-1.0, 1.0)).unwrap();
    let grid = RiskGrid::new(64).unwrap();
    let q = solve_var_dp(&mdp, &grid, 2, DpKind::Lower).unwrap();
    for &alpha0 in &[0.1, 0.3, 0.5, 0.7, 0.9] {
        let j = grid.index_of(alpha0).unwrap();
        let bound = q.max_over_actions(2, 0, j);
        let returns = rollout_returns(&mdp, PolicyRef::Var { q: &q, alpha0 }, 0, 2, 4000, 11).unwrap();
        let est = mc_quantile(&returns, alpha0).unwrap();
        assert!(est.point >= bound - est.half_width() - 1e-12, "α₀={alpha0}: {} < {bound}", est.point);
    }
}
