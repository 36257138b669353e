use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use modem::envs::{generate_demos, make_env, OracleKind};
use modem::model::{load_params, save_params, ModelParams};
use modem::pipeline::{encode_observation, run_modem};
use modem::planner::{mppi_plan, LearnedPlanModel, PlanState};
use modem::replay::{load_demos, save_demos, DemoHeader, Episode};
use modem::rng::derive_rng;
use modem::RunConfig;

use crate::csv::{row_to_csv, CSV_HEADER};

/// Output root: the MODEM_OUT_DIR environment variable wins over the
/// configured directory.
pub fn out_root(cfg: &RunConfig) -> PathBuf {
    std::env::var_os("MODEM_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir))
}

fn load_demo_episodes(cfg: &RunConfig) -> Result<Vec<Episode>> {
    if cfg.demo_count == 0 {
        return Ok(Vec::new());
    }
    let path = Path::new(&cfg.demo_file);
    let (header, episodes) =
        load_demos(path).with_context(|| format!("loading demos from {}", path.display()))?;
    header.check_env(&cfg.env_config())?;
    if episodes.len() < cfg.demo_count {
        bail!(
            "{} holds {} demonstrations, config wants {}",
            path.display(),
            episodes.len(),
            cfg.demo_count
        );
    }
    Ok(episodes.into_iter().take(cfg.demo_count).collect())
}

pub fn cmd_gen_demos(cfg: &RunConfig) -> Result<()> {
    if cfg.demo_count == 0 {
        bail!("demo_count is 0; nothing to generate");
    }
    let kind = OracleKind::from_name(&cfg.demo_oracle)?;
    let mut rng = derive_rng(cfg.seed, 0xDE05);
    let episodes = generate_demos(&cfg.env_config(), kind, cfg.demo_count, cfg.demo_noise, &mut rng)?;
    let env = make_env(&cfg.env_config())?;
    let header = DemoHeader::for_env(&cfg.env_config(), env.proprio_dim(), env.action_dim());
    let path = Path::new(&cfg.demo_file);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    save_demos(path, &header, &episodes)?;
    println!(
        "wrote {} {} demonstrations ({}) to {}",
        episodes.len(),
        cfg.task,
        cfg.demo_oracle,
        path.display()
    );
    Ok(())
}

/// One training run into `dir`: config snapshot, streamed metrics CSV
/// (flushed per row), final checkpoint. Returns final eval success/return.
pub fn train_into(cfg: &RunConfig, demos: Vec<Episode>, dir: &Path) -> Result<(f64, f64)> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.cfg"), cfg.emit())?;
    let csv_path = dir.join("metrics.csv");
    let mut csv = File::create(&csv_path)?;
    writeln!(csv, "{}", CSV_HEADER)?;
    csv.flush()?;
    let mut write_err = None;
    let out = run_modem(cfg, demos, &mut |row| {
        if write_err.is_none() {
            let res = writeln!(csv, "{}", row_to_csv(row)).and_then(|_| csv.flush());
            if let Err(e) = res {
                write_err = Some(e);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing metrics CSV");
    }
    save_params(&out.params, &dir.join("checkpoint.bin"))?;
    Ok((out.final_eval_success, out.final_eval_return))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let demos = load_demo_episodes(cfg)?;
    let dir = out_root(cfg);
    let env = make_env(&cfg.env_config())?;
    let probe = ModelParams::init(
        cfg.net_config(env.proprio_dim(), env.action_dim()),
        &mut derive_rng(cfg.seed, 0x1217),
    )?;
    println!("task {} seed {} parameters {}", cfg.task, cfg.seed, probe.parameter_count());
    let (success, mean_return) = train_into(cfg, demos, &dir)?;
    println!(
        "done: final eval success {:.3}, mean return {:.3}; outputs in {}",
        success,
        mean_return,
        dir.display()
    );
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, episodes: usize) -> Result<()> {
    if episodes == 0 {
        bail!("episodes must be at least 1");
    }
    let env_cfg = cfg.env_config();
    let probe_env = make_env(&env_cfg)?;
    let template = ModelParams::init(
        cfg.net_config(probe_env.proprio_dim(), probe_env.action_dim()),
        &mut derive_rng(cfg.seed, 0x1217),
    )?;
    let params = load_params(&template, checkpoint)?;
    let plan_cfg = cfg.planner_config();

    let dir = out_root(cfg);
    fs::create_dir_all(&dir)?;
    let mut report = String::from("seed,success_rate,mean_return\n");
    let mut total_success = 0.0;
    let mut total_return = 0.0;
    for &seed in &cfg.seeds {
        let mut rng = derive_rng(seed, 0xE7A1);
        let mut env = make_env(&env_cfg)?;
        let mut successes = 0usize;
        let mut ret = 0.0;
        for _ in 0..episodes {
            let mut obs = env.reset(&mut rng);
            let mut plan_state = PlanState::fresh(&plan_cfg, env.action_dim());
            let mut success = false;
            loop {
                let z = encode_observation(&params, &obs);
                let model = LearnedPlanModel { params: &params };
                let (action, next, _) =
                    mppi_plan(&model, z.data(), &plan_cfg, &plan_state, 0.0, &mut rng)?;
                plan_state = next;
                let out = env.step(&action);
                obs = out.obs;
                ret += out.reward;
                success |= out.success;
                if out.done {
                    break;
                }
            }
            successes += usize::from(success);
        }
        let rate = successes as f64 / episodes as f64;
        let mean_ret = ret / episodes as f64;
        total_success += rate;
        total_return += mean_ret;
        report.push_str(&format!("{},{},{}\n", seed, rate, mean_ret));
    }
    let n = cfg.seeds.len() as f64;
    println!(
        "seeds {:?}: success rate {:.3}, mean return {:.3}",
        cfg.seeds,
        total_success / n,
        total_return / n
    );
    fs::write(dir.join("eval.csv"), report)?;
    Ok(())
}

/// One ablation cell: a name and the config edits that define it.
struct Cell {
    name: String,
    edit: Box<dyn Fn(&mut RunConfig)>,
}

fn phase_cells() -> Vec<Cell> {
    let mut cells = Vec::new();
    for bits in 0..8u8 {
        let (p1, p2, p3) = (bits & 4 != 0, bits & 2 != 0, bits & 1 != 0);
        let mut name = String::from("phases_");
        name.push(if p1 { '1' } else { '0' });
        name.push(if p2 { '1' } else { '0' });
        name.push(if p3 { '1' } else { '0' });
        cells.push(Cell {
            name,
            edit: Box::new(move |c: &mut RunConfig| {
                c.pretrain_policy = p1;
                c.bc_seeding = p2;
                c.oversample = p3;
            }),
        });
    }
    cells
}

fn axis_cells(axis: &str) -> Result<Vec<Cell>> {
    Ok(match axis {
        "phases" => phase_cells(),
        "demos" => vec![
            Cell { name: "demos_1".into(), edit: Box::new(|c| c.demo_count = 1) },
            Cell { name: "demos_5".into(), edit: Box::new(|c| c.demo_count = 5) },
        ],
        "seeding" => vec![
            Cell { name: "seeding_bc".into(), edit: Box::new(|c| c.bc_seeding = true) },
            Cell { name: "seeding_random".into(), edit: Box::new(|c| c.bc_seeding = false) },
        ],
        "augment" => vec![
            Cell { name: "augment_on".into(), edit: Box::new(|c| c.augment = true) },
            Cell { name: "augment_off".into(), edit: Box::new(|c| c.augment = false) },
        ],
        "kappa" => vec![
            Cell {
                name: "kappa_annealed".into(),
                edit: Box::new(|c| c.demo_ratio_constant = false),
            },
            Cell {
                name: "kappa_constant".into(),
                edit: Box::new(|c| c.demo_ratio_constant = true),
            },
        ],
        other => bail!("unknown ablation axis '{}' (phases, demos, seeding, augment, kappa)", other),
    })
}

pub fn cmd_ablate(cfg: &RunConfig, axes: &str) -> Result<()> {
    let root = out_root(cfg).join("ablate");
    fs::create_dir_all(&root)?;
    let mut summary = String::from("cell,status,seeds,final_success_mean,final_return_mean\n");
    let mut cells = Vec::new();
    for axis in axes.split(',').map(str::trim).filter(|a| !a.is_empty()) {
        cells.extend(axis_cells(axis)?);
    }
    if cells.is_empty() {
        bail!("no ablation cells selected");
    }
    for cell in &cells {
        let mut cell_cfg = cfg.clone();
        (cell.edit)(&mut cell_cfg);
        let dir = root.join(&cell.name);
        let result = run_cell(&cell_cfg, &dir);
        match result {
            Ok((success, ret)) => {
                println!("cell {}: success {:.3} return {:.3}", cell.name, success, ret);
                summary.push_str(&format!(
                    "{},ok,{},{},{}\n",
                    cell.name,
                    cell_cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"),
                    success,
                    ret
                ));
            }
            Err(e) => {
                println!("cell {}: FAILED: {:#}", cell.name, e);
                summary.push_str(&format!("{},error,,,\n", cell.name));
            }
        }
    }
    fs::write(root.join("summary.csv"), summary)?;
    println!("ablation summary in {}", root.join("summary.csv").display());
    Ok(())
}

/// Run one cell over its seed list; per-seed metrics land in the cell
/// directory and the mean final evaluation comes back.
fn run_cell(cell_cfg: &RunConfig, dir: &Path) -> Result<(f64, f64)> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.cfg"), cell_cfg.emit())?;
    let demos = load_demo_episodes(cell_cfg)?;
    let mut success_sum = 0.0;
    let mut return_sum = 0.0;
    for &seed in &cell_cfg.seeds {
        let mut run_cfg = cell_cfg.clone();
        run_cfg.seed = seed;
        let seed_dir = dir.join(format!("seed{}", seed));
        let (s, r) = train_into(&run_cfg, demos.clone(), &seed_dir)?;
        success_sum += s;
        return_sum += r;
    }
    let n = cell_cfg.seeds.len() as f64;
    Ok((success_sum / n, return_sum / n))
}
