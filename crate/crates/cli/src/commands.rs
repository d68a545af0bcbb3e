use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use simrel::certifier::{full_certificate, precheck};
use simrel::cosim::{match_initial, monte_carlo_soundness, run_transfer, SoundnessReport};
use simrel::cover::{build_joint_dataset, cell_count, JointDataset};
use simrel::nn::{load_role, save, CheckpointMeta, Mlp, Role};
use simrel::system::{builtin_controller, builtin_system, sample_lipschitz_check, LipschitzCheck, SystemDef};
use simrel::trainer::{algorithm1, label_dataset};

use crate::config::RunConfig;
use crate::{Cli, Cmd, Status};

const DEFAULT_OUT: &str = "simrel-out";
/// Largest product grid `|cover(X)|·|cover(X̂)|` the CLI will enumerate.
const MAX_PRODUCT: u128 = 20_000_000_000;

/// Effective config after flag overrides, with its output directory and hash.
struct Run {
    cfg: RunConfig,
    out: PathBuf,
    hash: String,
}

fn load_run(cli: &Cli) -> Result<Run> {
    let Some(path) = &cli.config else {
        bail!("--config is required for this subcommand");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
        cfg.transfer.seed = seed;
        cfg.lipcheck.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.train.mode = mode;
    }
    if let Some(h) = cli.horizon {
        cfg.transfer.horizon = h;
    }
    if let Some(t) = cli.trials {
        cfg.transfer.trials = t;
    }
    cfg.train.validate().context("[train]")?;
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let hash = cfg.hash()?;
    Ok(Run { cfg, out, hash })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_toml<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    write(path, &toml::to_string(value)?)
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Appends a timestamped line to the sidecar log; the only file that is not
/// reproducible byte for byte.
fn sidecar(out: &Path, line: &str) -> Result<()> {
    ensure_dir(out)?;
    let path = out.join("run.log");
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{} {line}", unix_time())?;
    Ok(())
}

fn dataset(run: &Run, target: &SystemDef<f64>, source: &SystemDef<f64>) -> Result<JointDataset<f64>> {
    let e = run.cfg.train.e;
    let product = cell_count(&target.state_set, e)?
        .checked_mul(cell_count(&source.state_set, e)?)
        .unwrap_or(u128::MAX);
    if product > MAX_PRODUCT {
        bail!(
            "the product grid at e = {e} has {product} cells, above the limit of {MAX_PRODUCT}; \
             use a coarser e or smaller state sets"
        );
    }
    build_joint_dataset(target, source, &run.cfg.train.dataset_params()).context("building the joint grid")
}

fn load_networks(run: &Run) -> Result<(Mlp<f64>, Mlp<f64>)> {
    let mut nets = Vec::new();
    for (file, role) in [("v.ckpt", Role::V), ("k.ckpt", Role::K)] {
        let path = run.out.join(file);
        let (net, meta) = load_role::<f64>(&path, role)?;
        if meta.config_hash != run.hash {
            bail!(
                "{} was written for config hash {}, but the current config hashes to {}",
                path.display(),
                meta.config_hash,
                run.hash
            );
        }
        nets.push(net);
    }
    let k = nets.pop().unwrap();
    let v = nets.pop().unwrap();
    Ok((v, k))
}

pub fn run(cli: &Cli) -> Result<Status> {
    match cli.cmd {
        Cmd::Info => info(cli),
        Cmd::GenGrid => gen_grid(&load_run(cli)?),
        Cmd::Train => train(&load_run(cli)?),
        Cmd::Certify => certify(&load_run(cli)?, cli.report.as_deref()),
        Cmd::Transfer => transfer(&load_run(cli)?),
        Cmd::Lipcheck => lipcheck(&load_run(cli)?),
    }
}

fn describe(sys: &SystemDef<f64>) -> String {
    let b = |s: &simrel::geometry::BoxSet<f64>| {
        s.lo.iter()
            .zip(&s.hi)
            .map(|(l, h)| format!("[{l}, {h}]"))
            .collect::<Vec<_>>()
            .join(" x ")
    };
    let tau = sys.sampling_time.map_or("none".to_string(), |t| t.to_string());
    format!(
        "system = {}\nstate_dim = {}\ninput_dim = {}\noutput_dim = {}\nsampling_time = {tau}\n\
         state_set = {}\ninitial_set = {}\ninput_set = {}\noutput_set = {}\n\
         lipschitz_state = {}\nlipschitz_input = {}\nlipschitz_output = {}\n",
        sys.name,
        sys.n(),
        sys.m(),
        sys.l(),
        b(&sys.state_set),
        b(&sys.initial_set),
        b(&sys.input_set),
        b(&sys.output_set),
        sys.lipschitz.state,
        sys.lipschitz.input,
        sys.lipschitz.output,
    )
}

fn info(cli: &Cli) -> Result<Status> {
    if let Some(name) = &cli.system {
        print!("{}", describe(&builtin_system::<f64>(name)?));
        return Ok(Status::Ok);
    }
    let Some(path) = &cli.config else {
        bail!("info needs --system <name> or --config <file>");
    };
    let (target, source) = RunConfig::load(path)?.systems()?;
    println!("[target]");
    print!("{}", describe(&target));
    println!("\n[source]");
    print!("{}", describe(&source));
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct GridInfo {
    config_hash: String,
    target: String,
    source: String,
    epsilon: f64,
    e: f64,
    e_hat: f64,
    filter_slack: f64,
    target_cells: u64,
    source_cells: u64,
    product: String,
    pairs: u64,
    pass_rate: f64,
    inputs: u64,
    initial: u64,
    initial_hat: u64,
    initial_candidates: u64,
}

fn gen_grid(run: &Run) -> Result<Status> {
    let (target, source) = run.cfg.systems()?;
    let ds = dataset(run, &target, &source)?;
    let product = ds.grid.product_len();
    let p = ds.params;
    let info = GridInfo {
        config_hash: run.hash.clone(),
        target: target.name.clone(),
        source: source.name.clone(),
        epsilon: p.epsilon,
        e: p.e,
        e_hat: p.e_hat,
        filter_slack: p.filter_slack,
        target_cells: ds.grid.target_cover.len() as u64,
        source_cells: ds.grid.source_cover.len() as u64,
        product: product.to_string(),
        pairs: ds.len() as u64,
        pass_rate: ds.len() as f64 / product as f64,
        inputs: ds.inputs.len() as u64,
        initial: ds.initial.len() as u64,
        initial_hat: ds.initial_hat.len() as u64,
        initial_candidates: ds.init_candidates.iter().map(|c| c.len() as u64).sum(),
    };
    let path = run.out.join("grid.toml");
    write_toml(&path, &info)?;
    println!(
        "pairs={} product={} pass_rate={:.6} inputs={} -> {}",
        info.pairs,
        info.product,
        info.pass_rate,
        info.inputs,
        path.display()
    );
    Ok(Status::Ok)
}

fn train(run: &Run) -> Result<Status> {
    let (target, source) = run.cfg.systems()?;
    let cfg = &run.cfg.train;
    write(&run.out.join("config.toml"), &run.cfg.to_toml()?)?;
    sidecar(&run.out, &format!("train start config_hash={}", run.hash))?;

    let l_v_max = 2.0 * cfg.eta / cfg.e;
    let pre = precheck(&target.lipschitz, &source.lipschitz, &cfg.into(), l_v_max, 1.0);
    println!(
        "precheck: e_max={:.6} gamma_min={:.6} feasible={} (assuming L_V <= {l_v_max:.3}, L_K <= 1)",
        pre.e_max, pre.gamma_min, pre.feasible
    );

    let ds = dataset(run, &target, &source)?;
    println!("dataset: pairs={} inputs={}", ds.len(), ds.inputs.len());
    let meta = CheckpointMeta {
        config_hash: run.hash.clone(),
    };
    let history_path = run.out.join("history.log");
    let mut history = String::new();
    let mut io_error = None;
    let out = algorithm1(&target, &source, &ds, cfg, &mut |ev| {
        let line = ev.record.to_line();
        println!("{line}");
        history.push_str(&line);
        history.push('\n');
        let saved = save(ev.v, &meta, &run.out.join("v.ckpt"))
            .and_then(|_| save(ev.k, &meta, &run.out.join("k.ckpt")))
            .map_err(anyhow::Error::from)
            .and_then(|_| write(&history_path, &history));
        if let Err(e) = saved {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }

    save(&out.v, &meta, &run.out.join("v.ckpt"))?;
    save(&out.k, &meta, &run.out.join("k.ckpt"))?;
    let mut report = out.report.clone();
    report.config_hash = run.hash.clone();
    write(&run.out.join("report.toml"), &report.to_toml()?)?;
    sidecar(&run.out, &format!("train end verdict={}", report.verdict))?;
    println!(
        "verdict={} iterations={} restarts={} failing=[{}]",
        report.verdict,
        out.iterations,
        out.history.restarts,
        report.failing.join(",")
    );
    Ok(if out.success { Status::Ok } else { Status::Failed })
}

fn certify(run: &Run, report_path: Option<&Path>) -> Result<Status> {
    let (target, source) = run.cfg.systems()?;
    let (v, k) = load_networks(run)?;
    let ds = dataset(run, &target, &source)?;
    let cfg = &run.cfg.train;
    let labels = label_dataset(&ds, &target, &k, cfg)?;
    let mut report = full_certificate(&ds, &labels, &v, &k, &target, &source, cfg);
    report.config_hash = run.hash.clone();
    let path = report_path.map_or_else(|| run.out.join("report.toml"), Path::to_path_buf);
    write(&path, &report.to_toml()?)?;
    for c in &report.conditions {
        println!(
            "{:<11} {} violations={} checked={} margin={:.6}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.violations,
            c.checked,
            c.margin
        );
    }
    let val = &report.validity;
    println!(
        "validity    11: {:.6} <= {} {}  12: {:.6} <= {} {}  13: {:.6} <= {} {}",
        val.lhs_11,
        val.rhs_11,
        val.pass_11,
        val.lhs_12,
        val.rhs_12,
        val.pass_12,
        val.lhs_13,
        val.rhs_13,
        val.pass_13
    );
    println!("verdict={} failing=[{}] -> {}", report.verdict, report.failing.join(","), path.display());
    Ok(if report.passed() { Status::Ok } else { Status::Failed })
}

#[derive(Serialize)]
struct SoundnessFile {
    config_hash: String,
    horizon: usize,
    seed: u64,
    #[serde(flatten)]
    report: SoundnessReport,
}

fn transfer(run: &Run) -> Result<Status> {
    let (target, source) = run.cfg.systems()?;
    let (v, k) = load_networks(run)?;
    let ds = dataset(run, &target, &source)?;
    let t = &run.cfg.transfer;
    let eps = run.cfg.train.epsilon;
    let controller = builtin_controller(&t.controller, &source)?;
    let x_hat0 = t.x_hat0.clone().unwrap_or_else(|| source.initial_set.center());
    if !source.initial_set.contains(&x_hat0) {
        bail!("[transfer] x_hat0 = {x_hat0:?} is outside the source initial set");
    }
    let (_, x0) = match_initial(&x_hat0, &ds, &v, &target, &source)?;
    let trace = run_transfer(&target, &source, &controller, &k, &x_hat0, &x0, t.horizon, eps)?;
    let path = run.out.join("trace.csv");
    let mut buf = format!("# config_hash = {}\n", run.hash).into_bytes();
    trace.write_csv(&mut buf)?;
    write(&path, buf)?;
    println!(
        "trace: steps={} max_err={:.6} violations={} excursions={} -> {}",
        t.horizon,
        trace.max_err,
        trace.violations,
        trace.excursions.len(),
        path.display()
    );
    if let Some(d) = &trace.diagnostic {
        println!("trace stopped: {d}");
    }
    let mut ok = trace.violations == 0 && trace.diagnostic.is_none();
    if t.trials > 0 {
        let mc = monte_carlo_soundness(&target, &source, &k, &v, &ds, t.trials, t.horizon, t.seed)?;
        println!(
            "monte carlo: trials={} matched={} unmatched={} violations={} max_err={:.6}",
            mc.trials, mc.matched, mc.unmatched, mc.violations, mc.max_err
        );
        ok &= mc.violations == 0;
        write_toml(
            &run.out.join("soundness.toml"),
            &SoundnessFile {
                config_hash: run.hash.clone(),
                horizon: t.horizon,
                seed: t.seed,
                report: mc,
            },
        )?;
    }
    Ok(if ok { Status::Ok } else { Status::Failed })
}

#[derive(Serialize)]
struct LipcheckFile {
    config_hash: String,
    seed: u64,
    target: LipschitzCheck,
    source: LipschitzCheck,
}

fn lipcheck(run: &Run) -> Result<Status> {
    let (target, source) = run.cfg.systems()?;
    let l = &run.cfg.lipcheck;
    let file = LipcheckFile {
        config_hash: run.hash.clone(),
        seed: l.seed,
        target: sample_lipschitz_check(&target, l.pairs, l.seed),
        source: sample_lipschitz_check(&source, l.pairs, l.seed),
    };
    for (role, sys, c) in [("target", &target, &file.target), ("source", &source, &file.source)] {
        println!(
            "{role} {}: pairs={} max_ratio_f={:.6} max_ratio_h={:.6} violations={}",
            sys.name, c.pairs, c.max_ratio_f, c.max_ratio_h, c.violations
        );
    }
    write_toml(&run.out.join("lipcheck.toml"), &file)?;
    Ok(if file.target.violations + file.source.violations == 0 {
        Status::Ok
    } else {
        Status::Failed
    })
}
