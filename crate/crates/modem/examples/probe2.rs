// Scratch: BC-only policy quality, bypassing later phases.
use modem::envs::{generate_demos, Env, OracleKind, PointEnv};
use modem::pipeline::{encode_observation, Runner};
use modem::rng::derive_rng;
use modem::parse_config;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mut cfg = parse_config(Some(std::path::Path::new(&args[1])), &[]).unwrap();
    if args.len() > 3 {
        for kv in args[3..].chunks(2) {
            cfg.set(&kv[0], &kv[1]).unwrap();
        }
    }
    let demos = generate_demos(
        &cfg.env_config(),
        OracleKind::Scripted,
        cfg.demo_count,
        cfg.demo_noise,
        &mut derive_rng(9999, 0xDE05),
    )
    .unwrap();
    let mut runner = Runner::new(&cfg, demos).unwrap();
    runner.phase1(&mut |row| println!("phase1 row: bc {:?} eval {:?}", row.bc_loss, row.eval_success_rate)).unwrap();

    // independent policy rollouts with distance traces
    let params = runner.params().clone();
    let mut rng = derive_rng(31, 9);
    let reach = args[2] == "reach";
    let mut env = if reach { PointEnv::reach(cfg.env_config()) } else { PointEnv::push(cfg.env_config()) };
    let mut succ = 0;
    for ep in 0..10 {
        let mut obs = env.reset(&mut rng);
        let mut dists = Vec::new();
        let mut s = false;
        loop {
            let z = encode_observation(&params, &obs);
            let a = params.policy_action(&z, 0.0, &mut rng);
            let out = env.step(&a);
            obs = out.obs;
            s |= out.success;
            let st = env.state();
            let tgt = if reach { st.agent } else { st.object };
            let d = ((tgt[0] - st.goal[0]).powi(2) + (tgt[1] - st.goal[1]).powi(2)).sqrt();
            dists.push((d * 100.0).round() / 100.0);
            if out.done {
                break;
            }
        }
        succ += s as usize;
        {
            let st = env.state();
            println!("  ep {} goal ({:.2},{:.2}) success {} min {:.2}", ep, st.goal[0], st.goal[1], s,
                     dists.iter().cloned().fold(f64::MAX, f64::min));
        }
        if ep < 0 {
            println!(
                "ep {}: success {} min {:.2} trace {:?}",
                ep,
                s,
                dists.iter().cloned().fold(f64::MAX, f64::min),
                dists.iter().step_by(6).collect::<Vec<_>>()
            );
        }
    }
    println!("bc-only success {}/10", succ);
}
