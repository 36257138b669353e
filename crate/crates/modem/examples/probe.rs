// Scratch diagnostic: reward-head accuracy and value structure of a
// trained checkpoint, plus planner-vs-policy success.
use autodiff::{Graph, Tensor};
use modem::envs::{make_env, Env, PointEnv};
use modem::model::{load_params, ModelParams};
use modem::parse_config;
use modem::pipeline::encode_observation;
use modem::planner::{mppi_plan, LearnedPlanModel, PlanState};
use modem::rng::derive_rng;
use rand::Rng;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let cfg = parse_config(Some(std::path::Path::new(&args[1])), &[]).unwrap();
    let env0 = make_env(&cfg.env_config()).unwrap();
    let template = ModelParams::init(
        cfg.net_config(env0.proprio_dim(), env0.action_dim()),
        &mut derive_rng(cfg.seed, 0x1217),
    ).unwrap();
    let params = load_params(&template, std::path::Path::new(&args[2])).unwrap();
    let plan_cfg = cfg.planner_config();
    let mut g = Graph::inference();
    let mut rng = derive_rng(777, 3);

    // Reward-head accuracy: random states labeled by the true predicate.
    let mut env = PointEnv::reach(cfg.env_config());
    let (mut tp, mut tn, mut fp, mut fneg) = (0, 0, 0, 0);
    for _ in 0..400 {
        let _ = env.reset(&mut rng);
        let st = env.state();
        // place the agent at a random offset from the goal, half within radius
        let near: bool = rng.gen_bool(0.5);
        let r = if near { rng.gen_range(0.0..cfg.goal_radius) } else { rng.gen_range(cfg.goal_radius..1.0) };
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let pos = [
            (st.goal[0] + r * th.cos()).clamp(-1.0, 1.0),
            (st.goal[1] + r * th.sin()).clamp(-1.0, 1.0),
        ];
        env.place(pos, [0.0, 0.0], st.object, st.goal);
        let out = env.step(&[0.0, 0.0]);
        let z = encode_observation(&params, &out.obs);
        let rhat = params.predict_reward(&mut g, &z, &Tensor::zeros(vec![1, 2])).item();
        let pred = rhat > 0.5;
        match (out.reward > 0.5, pred) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
        }
    }
    println!("reward head: tp {} tn {} fp {} fn {} (acc {:.2})", tp, tn, fp, fneg,
             (tp + tn) as f64 / 400.0);

    // Q monotonicity vs distance: correlation of Q(z, pi(z)) with -distance.
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for _ in 0..200 {
        let _ = env.reset(&mut rng);
        let st = env.state();
        let d = rng.gen_range(0.05..1.4);
        let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let pos = [
            (st.goal[0] + d * th.cos()).clamp(-1.0, 1.0),
            (st.goal[1] + d * th.sin()).clamp(-1.0, 1.0),
        ];
        env.place(pos, [0.0, 0.0], st.object, st.goal);
        let out = env.step(&[0.0, 0.0]);
        let true_d = {
            let s = env.state();
            ((s.agent[0]-s.goal[0]).powi(2) + (s.agent[1]-s.goal[1]).powi(2)).sqrt()
        };
        let z = encode_observation(&params, &out.obs);
        let a = params.policy(&mut g, &z);
        let q = params.q_min(&mut g, &z, &a).item();
        pairs.push((true_d, q));
    }
    let n = pairs.len() as f64;
    let (md, mq) = (pairs.iter().map(|p| p.0).sum::<f64>()/n, pairs.iter().map(|p| p.1).sum::<f64>()/n);
    let cov = pairs.iter().map(|p| (p.0-md)*(p.1-mq)).sum::<f64>()/n;
    let sd = (pairs.iter().map(|p| (p.0-md).powi(2)).sum::<f64>()/n).sqrt();
    let sq = (pairs.iter().map(|p| (p.1-mq).powi(2)).sum::<f64>()/n).sqrt();
    println!("Q vs distance: corr {:.3} (want strongly negative), mean Q {:.2}, Q range [{:.2}, {:.2}]",
             cov/(sd*sq), mq,
             pairs.iter().map(|p| p.1).fold(f64::MAX, f64::min),
             pairs.iter().map(|p| p.1).fold(f64::MIN, f64::max));

    // planner vs policy success over 20 episodes each
    let mut env = make_env(&cfg.env_config()).unwrap();
    let mut pol = 0; let mut plan = 0;
    for _ in 0..20 {
        let mut obs = env.reset(&mut rng);
        let mut s = false;
        loop {
            let z = encode_observation(&params, &obs);
            let a = params.policy_action(&z, 0.0, &mut rng);
            let out = env.step(&a);
            obs = out.obs; s |= out.success;
            if out.done { break; }
        }
        pol += s as usize;
    }
    for _ in 0..20 {
        let mut obs = env.reset(&mut rng);
        let mut st = PlanState::fresh(&plan_cfg, env.action_dim());
        let mut s = false;
        loop {
            let z = encode_observation(&params, &obs);
            let model = LearnedPlanModel { params: &params };
            let (a, next, _) = mppi_plan(&model, z.data(), &plan_cfg, &st, 0.0, &mut rng).unwrap();
            st = next;
            let out = env.step(&a);
            obs = out.obs; s |= out.success;
            if out.done { break; }
        }
        plan += s as usize;
    }
    println!("policy success {}/20  planner success {}/20", pol, plan);

    // Dynamics rollout fidelity: unroll d from a real state with the real
    // executed actions, compare to the encoder latents of the actual next
    // observations (relative error per step).
    let mut env = make_env(&cfg.env_config()).unwrap();
    let mut rel = vec![0.0f64; 5];
    let mut rhat_seq_err = 0.0;
    let trials = 30;
    for _ in 0..trials {
        let mut obs = env.reset(&mut rng);
        // burn a few random steps for a generic state
        for _ in 0..5 {
            obs = env.step(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).obs;
        }
        let mut z = encode_observation(&params, &obs);
        let z_scale = (z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64).sqrt();
        for t in 0..5 {
            let a = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let at = Tensor::new(vec![1, 2], a.to_vec());
            let r_pred = params.predict_reward(&mut g, &z, &at).item();
            z = params.dynamics_step(&mut g, &z, &at);
            let out = env.step(&a);
            obs = out.obs;
            rhat_seq_err += (r_pred - out.reward).abs() / (trials * 5) as f64;
            let z_true = encode_observation(&params, &obs);
            let err = z.iter().zip(z_true.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                / z.len() as f64;
            rel[t] += err.sqrt() / z_scale.max(1e-9) / trials as f64;
        }
    }
    println!("dynamics rel err by rollout step: {:?}", rel.iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>());
    println!("open-loop reward pred abs err: {:.3}", rhat_seq_err);
}
