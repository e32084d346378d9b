use pixelpolicy::algos::nets::{
    critic_loss, ipg_gradient, ipg_loss, lr_policy_gradient, sac_actor_loss, OffPolicyBatch, OnPolicyBatch, TrustRegion,
};
use pixelpolicy::algos::policy::{log_prob, PolicyParams};
use pixelpolicy::algos::{
    mbse_loss, ppo_actor_loss, ppo_surrogate, ppo_surrogate_grad, q_target, sac_q_target, train_season, validate,
    Agent, AgentConfig, Algo, Experience,
};
use pixelpolicy::envs::EnvConfig;
use pixelpolicy::netlib::gradcheck::relative_error;
use pixelpolicy::netlib::{Activation, LayerSpec, NetworkGraph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const FD_STEP: f64 = 1e-5;

fn mlp(input: usize, hidden: usize, out: usize, seed: u64) -> NetworkGraph {
    NetworkGraph::build(
        &[
            LayerSpec::Dense {
                units: hidden,
                activation: Activation::Tanh,
            },
            LayerSpec::Dense {
                units: out,
                activation: Activation::Linear,
            },
        ],
        &[input],
        seed,
    )
    .unwrap()
}

fn uniform(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

fn normals(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn batch(b: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![b, d], uniform(b * d, -1.0, 1.0, rng)).unwrap()
}

/// Worst relative error between the gradients already accumulated in `net`
/// and central differences of `loss`.
fn fd_error(net: &mut NetworkGraph, loss: &dyn Fn(&mut NetworkGraph) -> f64) -> f64 {
    let analytic = net.gradients();
    let mut worst: f64 = 0.0;
    for (name, grad) in &analytic {
        for j in 0..grad.len() {
            let orig = net.param(name).unwrap().value.data()[j];
            net.param_mut(name).unwrap().value.data_mut()[j] = orig + FD_STEP;
            let plus = loss(net);
            net.param_mut(name).unwrap().value.data_mut()[j] = orig - FD_STEP;
            let minus = loss(net);
            net.param_mut(name).unwrap().value.data_mut()[j] = orig;
            worst = worst.max(relative_error(grad.data()[j], (plus - minus) / (2.0 * FD_STEP)));
        }
    }
    worst
}

fn flat(grads: &[(String, Tensor)]) -> Vec<f64> {
    grads.iter().flat_map(|(_, g)| g.data().iter().copied()).collect()
}

// ---------------------------------------------------------------- MSBE / targets

#[test]
fn msbe_exact_cases() {
    let y = [0.5, -1.0, 2.0, 3.5];
    let (l, g) = mbse_loss(&y, &y).unwrap();
    assert_eq!(l, 0.0);
    assert!(g.iter().all(|&v| v == 0.0));
    let q: Vec<f64> = y.iter().map(|v| v + 0.75).collect();
    let (l, _) = mbse_loss(&q, &y).unwrap();
    assert!((l - 0.5625).abs() < 1e-12);
    assert!(mbse_loss(&q[..3], &y).is_err());
}

#[test]
fn msbe_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..50);
        let q = uniform(n, -5.0, 5.0, &mut rng);
        let y = uniform(n, -5.0, 5.0, &mut rng);
        let mut direct = 0.0;
        for i in 0..n {
            direct += (y[i] - q[i]) * (y[i] - q[i]);
        }
        direct /= n as f64;
        assert!((mbse_loss(&q, &y).unwrap().0 - direct).abs() < 1e-12);
    }
}

#[test]
fn terminal_target_is_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let r = rng.random_range(-3.0..3.0);
        let (q1, q2, lp) = (
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-10.0..2.0),
        );
        assert_eq!(q_target(r, true, q1, 0.995), r);
        assert_eq!(sac_q_target(r, true, q1, q2, lp, 0.2, 0.995), r);
    }
}

#[test]
fn twin_min_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let r = rng.random_range(-1.0..1.0);
        let (q1, q2, lp) = (
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..1.0),
        );
        let y = sac_q_target(r, false, q1, q2, lp, 0.2, 0.9);
        assert!(y <= sac_q_target(r, false, q1, q1, lp, 0.2, 0.9) + 1e-12);
        assert!(y <= sac_q_target(r, false, q2, q2, lp, 0.2, 0.9) + 1e-12);
    }
}

#[test]
fn sac_target_scalar_case() {
    let y = sac_q_target(1.0, false, 2.0, 3.0, -1.0, 0.2, 0.9);
    assert!((y - 2.98).abs() < 1e-12);
}

#[test]
fn sac_target_without_entropy_reduces_to_generic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let (r, q, lp) = (
            rng.random_range(-1.0..1.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..1.0),
        );
        assert_eq!(sac_q_target(r, false, q, q, lp, 0.0, 0.95), q_target(r, false, q, 0.95));
    }
}

// ---------------------------------------------------------------- PPO

#[test]
fn ppo_surrogate_cases() {
    assert_eq!(ppo_surrogate(1.0, -3.0, 0.2), -3.0);
    assert!((ppo_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
    assert!((ppo_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
}

#[test]
fn ppo_clip_branch_has_zero_ratio_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let a = rng.random_range(0.01..5.0);
        assert_eq!(ppo_surrogate_grad(rng.random_range(1.2001..4.0), a, 0.2), 0.0);
        assert_eq!(ppo_surrogate_grad(rng.random_range(0.0..0.7999), -a, 0.2), 0.0);
        assert_eq!(ppo_surrogate_grad(rng.random_range(0.0..1.1999), a, 0.2), a);
        assert_eq!(ppo_surrogate_grad(rng.random_range(0.8001..4.0), -a, 0.2), -a);
    }
}

// ---------------------------------------------------------------- finite differences

struct Instance {
    actor: NetworkGraph,
    critics: Vec<NetworkGraph>,
    feats: Tensor,
    dim: usize,
    rng: ChaCha8Rng,
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
    let f = rng.random_range(2..5);
    let dim = rng.random_range(1..3);
    let b = rng.random_range(2..6);
    let actor = mlp(f, 8, 2 * dim, seed);
    let critics = vec![mlp(f + dim, 8, 1, seed + 100), mlp(f + dim, 8, 1, seed + 200)];
    let feats = batch(b, f, &mut rng);
    Instance {
        actor,
        critics,
        feats,
        dim,
        rng,
    }
}

#[test]
fn msbe_network_gradients_match_fd() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (b, d, f, a) = (4, 3, 4, 2);
        let mut trunk = mlp(d, 6, f, seed);
        let mut head = mlp(f + a, 6, 1, seed + 1);
        let obs = batch(b, d, &mut rng);
        let actions = uniform(b * a, -1.0, 1.0, &mut rng);
        let y = vec![uniform(b, -2.0, 2.0, &mut rng)];
        critic_loss(&mut trunk, &mut [&mut head], &obs, Some(&actions), &y, true).unwrap();
        let h = head.clone();
        worst = worst.max(fd_error(&mut trunk, &|t| {
            critic_loss(t, &mut [&mut h.clone()], &obs, Some(&actions), &y, false).unwrap()[0]
        }));
        let t = trunk.clone();
        worst = worst.max(fd_error(&mut head, &|h| {
            critic_loss(&mut t.clone(), &mut [h], &obs, Some(&actions), &y, false).unwrap()[0]
        }));
    }
    eprintln!("msbe worst relative error {worst:.3e}");
    assert!(worst < 1e-5);
}

#[test]
fn sac_actor_gradient_matches_fd() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut inst = instance(seed);
        let eps = normals(inst.feats.shape()[0] * inst.dim, &mut inst.rng);
        let alpha = inst.rng.random_range(0.0..0.5);
        let critics: Vec<&NetworkGraph> = inst.critics.iter().collect();
        inst.actor.zero_grad();
        sac_actor_loss(&mut inst.actor, &critics, &inst.feats, &eps, alpha, true).unwrap();
        worst = worst.max(fd_error(&mut inst.actor, &|a| {
            sac_actor_loss(a, &critics, &inst.feats, &eps, alpha, false).unwrap()
        }));
    }
    eprintln!("sac actor worst relative error {worst:.3e}");
    assert!(worst < 1e-5);
}

#[test]
fn sac_actor_loss_is_affine_in_alpha() {
    let mut inst = instance(1);
    let eps = normals(inst.feats.shape()[0] * inst.dim, &mut inst.rng);
    let critics: Vec<&NetworkGraph> = inst.critics.iter().collect();
    let mut l = |alpha| sac_actor_loss(&mut inst.actor, &critics, &inst.feats, &eps, alpha, false).unwrap();
    let (l0, l1, l3) = (l(0.0), l(0.1), l(0.3));
    assert!(((l3 - l0) - 3.0 * (l1 - l0)).abs() < 1e-12);
}

#[test]
fn constant_critic_gives_zero_actor_gradient() {
    let mut inst = instance(2);
    let f = inst.feats.shape()[1];
    let mut flat_critic = mlp(f + inst.dim, 4, 1, 9);
    for p in flat_critic.params_mut() {
        p.value.fill(0.0);
    }
    flat_critic.param_mut("1.dense.bias").unwrap().value.fill(1.7);
    let eps = normals(inst.feats.shape()[0] * inst.dim, &mut inst.rng);
    inst.actor.zero_grad();
    let loss = sac_actor_loss(&mut inst.actor, &[&flat_critic], &inst.feats, &eps, 0.0, true).unwrap();
    assert!((loss + 1.7).abs() < 1e-12);
    assert!(inst
        .actor
        .gradients()
        .iter()
        .all(|(_, g)| g.data().iter().all(|&v| v == 0.0)));
}

/// Pre-squash actions drawn from the actor's own distribution.
fn on_policy_u(inst: &mut Instance) -> Vec<f64> {
    let p = PolicyParams::from_output(&inst.actor.infer(&inst.feats).unwrap(), inst.dim).unwrap();
    let eps = normals(p.mean.len(), &mut inst.rng);
    p.mean
        .iter()
        .zip(&p.log_std)
        .zip(&eps)
        .map(|((m, s), e)| m + s.exp() * e)
        .collect()
}

/// Rollout log-probabilities giving ratios spread over both clip edges
/// (ε = 0.2) but away from the kinks.
fn old_log_probs(inst: &mut Instance, u: &[f64]) -> Vec<f64> {
    let p = PolicyParams::from_output(&inst.actor.infer(&inst.feats).unwrap(), inst.dim).unwrap();
    let (lp, _) = log_prob(&p, u).unwrap();
    lp.iter()
        .map(|l| loop {
            let r: f64 = inst.rng.random_range(0.5..1.6);
            if (r - 0.8).abs() > 0.02 && (r - 1.2).abs() > 0.02 {
                break l - r.ln();
            }
        })
        .collect()
}

#[test]
fn ppo_surrogate_gradient_matches_fd() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut inst = instance(seed);
        let u = on_policy_u(&mut inst);
        let old = old_log_probs(&mut inst, &u);
        let adv = uniform(old.len(), -2.0, 2.0, &mut inst.rng);
        inst.actor.zero_grad();
        ppo_actor_loss(&mut inst.actor, &inst.feats, &u, &old, &adv, 0.2, true).unwrap();
        worst = worst.max(fd_error(&mut inst.actor, &|a| {
            ppo_actor_loss(a, &inst.feats, &u, &old, &adv, 0.2, false).unwrap().0
        }));
    }
    eprintln!("ppo worst relative error {worst:.3e}");
    assert!(worst < 1e-5);
}

fn ipg_batches(inst: &mut Instance) -> (OnPolicyBatch, OffPolicyBatch) {
    let u = on_policy_u(inst);
    let b = inst.feats.shape()[0];
    let old_log_prob = old_log_probs(inst, &u);
    let on = OnPolicyBatch {
        feats: inst.feats.clone(),
        u,
        weights: uniform(b, -2.0, 2.0, &mut inst.rng),
        trust_region: Some(TrustRegion {
            old_log_prob,
            clip: 0.2,
        }),
    };
    let off_b = inst.rng.random_range(2..6);
    let off = OffPolicyBatch {
        feats: batch(off_b, inst.feats.shape()[1], &mut inst.rng),
        eps: normals(off_b * inst.dim, &mut inst.rng),
        scale: inst.rng.random_range(0.3..2.0),
    };
    (on, off)
}

#[test]
fn ipg_gradient_matches_fd() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut inst = instance(seed);
        let (on, off) = ipg_batches(&mut inst);
        let nu = inst.rng.random_range(0.0..1.0);
        let critic = inst.critics[0].clone();
        inst.actor.zero_grad();
        ipg_loss(&mut inst.actor, &critic, &on, Some(&off), nu, true).unwrap();
        worst = worst.max(fd_error(&mut inst.actor, &|a| {
            ipg_loss(a, &critic, &on, Some(&off), nu, false).unwrap()
        }));
    }
    eprintln!("ipg worst relative error {worst:.3e}");
    assert!(worst < 1e-5);
}

#[test]
fn lr_gradient_matches_fd_and_is_linear() {
    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let mut inst = instance(seed);
        let u = on_policy_u(&mut inst);
        let adv = uniform(inst.feats.shape()[0], -2.0, 2.0, &mut inst.rng);
        let g = flat(&lr_policy_gradient(&mut inst.actor, &inst.feats, &u, &adv).unwrap());
        let zero = vec![0.0; adv.len()];
        assert!(
            flat(&lr_policy_gradient(&mut inst.actor, &inst.feats, &u, &zero).unwrap())
                .iter()
                .all(|&v| v == 0.0)
        );
        let scaled: Vec<f64> = adv.iter().map(|a| -2.5 * a).collect();
        let g2 = flat(&lr_policy_gradient(&mut inst.actor, &inst.feats, &u, &scaled).unwrap());
        for (a, b) in g.iter().zip(&g2) {
            assert!((b + 2.5 * a).abs() < 1e-10 * (1.0 + a.abs()));
        }
        // ascent gradient of mean(logπ·Â)
        let mut net = inst.actor.clone();
        for (name, g) in lr_policy_gradient(&mut inst.actor, &inst.feats, &u, &adv).unwrap() {
            net.param_mut(&name).unwrap().grad = g.map(|x| -x);
        }
        worst = worst.max(fd_error(&mut net, &|a| {
            pixelpolicy::algos::nets::lr_loss(a, &inst.feats, &u, &adv, false).unwrap()
        }));
    }
    assert!(worst < 1e-5, "lr worst {worst:.3e}");
}

// ---------------------------------------------------------------- IPG structure

#[test]
fn ipg_gradient_is_affine_in_nu() {
    for seed in 0..20 {
        let mut inst = instance(seed);
        let (on, off) = ipg_batches(&mut inst);
        let critic = inst.critics[0].clone();
        let mut g = |nu| flat(&ipg_gradient(&mut inst.actor, &critic, &on, Some(&off), nu).unwrap());
        let (g0, g1) = (g(0.0), g(1.0));
        for nu in [0.0, 0.2, 0.5, 1.0] {
            let gn = g(nu);
            for k in 0..gn.len() {
                let mix = (1.0 - nu) * g0[k] + nu * g1[k];
                assert!((gn[k] - mix).abs() < 1e-10, "seed {seed} nu {nu}: {} vs {mix}", gn[k]);
            }
        }
    }
}

#[test]
fn ipg_endpoints() {
    let mut inst = instance(3);
    let (on, off) = ipg_batches(&mut inst);
    let critic = inst.critics[0].clone();
    let off_only = flat(&ipg_gradient(&mut inst.actor, &critic, &on, Some(&off), 1.0).unwrap());
    let eps_loss = |a: &mut NetworkGraph| sac_actor_loss(a, &[&critic], &off.feats, &off.eps, 0.0, true).map(|_| ());
    inst.actor.zero_grad();
    eps_loss(&mut inst.actor).unwrap();
    let direct: Vec<f64> = flat(&inst.actor.gradients()).iter().map(|v| -v * off.scale).collect();
    inst.actor.zero_grad();
    for (a, b) in off_only.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-12);
    }
    // ν = 0 without an off-policy batch is the control-variate LR estimator
    let plain = OnPolicyBatch {
        trust_region: None,
        ..on.clone()
    };
    let lr = flat(&lr_policy_gradient(&mut inst.actor, &on.feats, &on.u, &on.weights).unwrap());
    let g0 = flat(&ipg_gradient(&mut inst.actor, &critic, &plain, None, 0.0).unwrap());
    for (a, b) in lr.iter().zip(&g0) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(ipg_gradient(&mut inst.actor, &critic, &on, None, 1.5).is_err());
}

#[test]
fn trust_region_keeps_the_gradient_at_the_rollout_policy() {
    for seed in 0..20 {
        let mut inst = instance(seed);
        let (mut on, off) = ipg_batches(&mut inst);
        let critic = inst.critics[0].clone();
        let p = PolicyParams::from_output(&inst.actor.infer(&inst.feats).unwrap(), inst.dim).unwrap();
        let (lp, _) = log_prob(&p, &on.u).unwrap();
        on.trust_region = Some(TrustRegion {
            old_log_prob: lp.clone(),
            clip: 0.2,
        });
        let plain = OnPolicyBatch {
            trust_region: None,
            ..on.clone()
        };
        let a = flat(&ipg_gradient(&mut inst.actor, &critic, &on, Some(&off), 0.2).unwrap());
        let b = flat(&ipg_gradient(&mut inst.actor, &critic, &plain, Some(&off), 0.2).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()), "seed {seed}: {x} vs {y}");
        }
        // ratios e ≈ 2.7 with positive weights: every on-policy sample is clipped
        on.weights.iter_mut().for_each(|w| *w = w.abs() + 0.1);
        on.trust_region = Some(TrustRegion {
            old_log_prob: lp.iter().map(|l| l - 1.0).collect(),
            clip: 0.2,
        });
        let g = flat(&ipg_gradient(&mut inst.actor, &critic, &on, None, 0.0).unwrap());
        assert!(g.iter().all(|&v| v == 0.0));
    }
}

/// Linear Gaussian actor on a scalar state with a linear critic: every term
/// of the interpolated gradient has a closed form.
#[test]
fn ipg_scalar_toy_matches_hand_derivation() {
    let linear = |units, input| {
        NetworkGraph::build(
            &[LayerSpec::Dense {
                units,
                activation: Activation::Linear,
            }],
            &[input],
            0,
        )
        .unwrap()
    };
    let mut actor = linear(2, 1);
    let (wm, wl, bm, bl) = (0.6, -0.3, 0.1, -0.5);
    actor
        .param_mut("0.dense.weight")
        .unwrap()
        .value
        .data_mut()
        .copy_from_slice(&[wm, wl]);
    actor
        .param_mut("0.dense.bias")
        .unwrap()
        .value
        .data_mut()
        .copy_from_slice(&[bm, bl]);
    let mut critic = linear(1, 2);
    let (cs, ca) = (0.4, 1.3);
    critic
        .param_mut("0.dense.weight")
        .unwrap()
        .value
        .data_mut()
        .copy_from_slice(&[cs, ca]);
    critic.param_mut("0.dense.bias").unwrap().value.data_mut()[0] = 0.25;

    let s_on = [0.5, -1.0];
    let u = [0.2, -0.4];
    let w = [1.5, -0.7];
    let s_off = [0.8, -0.2, 0.3];
    let eps = [0.3, -1.1, 0.6];
    let (nu, scale) = (0.5, 0.8);
    let on = OnPolicyBatch {
        feats: Tensor::new(vec![2, 1], s_on.to_vec()).unwrap(),
        u: u.to_vec(),
        weights: w.to_vec(),
        trust_region: None,
    };
    let off = OffPolicyBatch {
        feats: Tensor::new(vec![3, 1], s_off.to_vec()).unwrap(),
        eps: eps.to_vec(),
        scale,
    };
    let got = ipg_gradient(&mut actor, &critic, &on, Some(&off), nu).unwrap();

    // [d/dw_m, d/dw_l, d/db_m, d/db_l]
    let mut want = [0.0; 4];
    for i in 0..2 {
        let (m, ls) = (wm * s_on[i] + bm, wl * s_on[i] + bl);
        let sigma: f64 = ls.exp();
        let z = (u[i] - m) / sigma;
        let (dm, dls) = ((u[i] - m) / (sigma * sigma), z * z - 1.0);
        let k = (1.0 - nu) * w[i] / 2.0;
        want[0] += k * dm * s_on[i];
        want[1] += k * dls * s_on[i];
        want[2] += k * dm;
        want[3] += k * dls;
    }
    for i in 0..3 {
        let (m, ls) = (wm * s_off[i] + bm, wl * s_off[i] + bl);
        let sigma: f64 = ls.exp();
        let a = (m + sigma * eps[i]).tanh();
        let dq_du = ca * (1.0 - a * a);
        let (dm, dls) = (dq_du, dq_du * sigma * eps[i]);
        want[0] += scale * dm * s_off[i] / 3.0;
        want[1] += scale * dls * s_off[i] / 3.0;
        want[2] += scale * dm / 3.0;
        want[3] += scale * dls / 3.0;
    }
    let weight = &got.iter().find(|(n, _)| n == "0.dense.weight").unwrap().1;
    let bias = &got.iter().find(|(n, _)| n == "0.dense.bias").unwrap().1;
    let got = [weight.data()[0], weight.data()[1], bias.data()[0], bias.data()[1]];
    for k in 0..4 {
        assert!(
            (got[k] - want[k]).abs() < 1e-12,
            "component {k}: {} vs {}",
            got[k],
            want[k]
        );
    }
}

// ---------------------------------------------------------------- agents

fn small_config(algo: Algo, env: EnvConfig) -> AgentConfig {
    let mut cfg = AgentConfig::new(algo, env);
    cfg.trajectory_length = 256;
    cfg.batch_size = 32;
    cfg.epochs = 2;
    cfg
}

#[test]
fn ppo_fresh_ratios_are_one_and_zero_advantage_is_inert() {
    let env = EnvConfig::racer();
    let mut cfg_lr0 = small_config(Algo::Ppo, env);
    cfg_lr0.learning_rate = 0.0;
    // roll out one trajectory without learning, then inspect ratios
    let mut frozen = Agent::new(cfg_lr0, 0).unwrap();
    let mut exp = Experience::new(&frozen, 0).unwrap();
    train_season(&mut frozen, &mut exp).unwrap();
    let steps = exp.trajectory.steps();
    let x = pixelpolicy::algos::stack_batch(steps.iter().map(|s| (&s.transition.s, None))).unwrap();
    let feats = frozen.features.net.infer(&x).unwrap();
    let u: Vec<f64> = steps.iter().flat_map(|s| s.pre_tanh.iter().copied()).collect();
    let old: Vec<f64> = steps.iter().map(|s| s.log_prob).collect();
    let adv = vec![0.0; steps.len()];
    let (loss, ratio) = ppo_actor_loss(&mut frozen.actor.net, &feats, &u, &old, &adv, 0.2, false).unwrap();
    assert_eq!(ratio, 1.0);
    assert_eq!(loss, 0.0);
    // zero advantages leave the actor untouched
    let before = frozen.actor.net.checksum();
    frozen.actor.net.zero_grad();
    ppo_actor_loss(&mut frozen.actor.net, &feats, &u, &old, &adv, 0.2, true).unwrap();
    assert!(frozen
        .actor
        .net
        .gradients()
        .iter()
        .all(|(_, g)| g.data().iter().all(|&v| v == 0.0)));
    frozen.actor.step().unwrap();
    assert_eq!(frozen.actor.net.checksum(), before);
}

#[test]
fn season_runs_requested_steps_and_is_deterministic() {
    for algo in [Algo::Sac, Algo::Ppo, Algo::Ipg] {
        let run = || {
            let mut agent = Agent::new(small_config(algo, EnvConfig::racer()), 11).unwrap();
            let mut exp = Experience::new(&agent, 11).unwrap();
            let a = train_season(&mut agent, &mut exp).unwrap();
            let b = train_season(&mut agent, &mut exp).unwrap();
            (a, b, agent.checksum())
        };
        let (a, b, c) = run();
        assert_eq!(a.steps, 256);
        assert_eq!(b.steps, 256);
        assert!(a.episodes >= 2, "racer episodes are at most 100 steps");
        let (a2, b2, c2) = run();
        assert_eq!(a.train_return_mean.to_bits(), a2.train_return_mean.to_bits());
        assert_eq!(b.critic_loss.to_bits(), b2.critic_loss.to_bits());
        assert_eq!(c, c2, "{algo:?} not deterministic");
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    for algo in [Algo::Sac, Algo::Ppo, Algo::Ipg] {
        let mut cfg = small_config(algo, EnvConfig::grasp());
        cfg.learning_rate = 0.0;
        let mut agent = Agent::new(cfg, 2).unwrap();
        let before = agent.checksum();
        let mut exp = Experience::new(&agent, 2).unwrap();
        for _ in 0..2 {
            train_season(&mut agent, &mut exp).unwrap();
        }
        assert_eq!(agent.checksum(), before, "{algo:?}");
    }
}

#[test]
fn validation_is_pure_and_bounded() {
    let env = EnvConfig::grasp();
    let agent = Agent::new(small_config(Algo::Ipg, env.clone()), 4).unwrap();
    let before = agent.checksum();
    let a = validate(&agent, &env, 20, 9).unwrap();
    let b = validate(&agent, &env, 20, 9).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
    assert!((0.0..=1.0).contains(&a));
    assert_eq!(agent.checksum(), before);
}
