use std::fmt::Write as _;
use std::time::Instant;

use jpmap_core::degradation::{degrade, DegradationModel};
use jpmap_core::energy::EnergyContext;
use jpmap_core::mnist::{export_grid, export_pgm, Split};
use jpmap_core::model_io::{load_model, model_fingerprint};
use jpmap_core::report::sig17;
use jpmap_core::rng;
use jpmap_core::solver::{
    algorithm1, algorithm2, algorithm3, csgm, CsgmReport, GdConfig, SolverConfig, SolverReport,
    XInit, ZInit,
};
use jpmap_core::vae::VaeModel;
use jpmap_core::{Error, Result};

use crate::args::{RestoreArgs, SolverKind, SolverOpts, Task, ZInitKind};
use crate::common::{load_split, mse, shuffled_indices, write_text};

pub fn build_degradation(args: &RestoreArgs) -> Result<DegradationModel> {
    let op_seed = rng::derive(args.seed, &[1]);
    match args.task {
        Task::Denoise => DegradationModel::denoise(784, args.sigma),
        Task::Inpainting => match args.known_fraction {
            Some(f) => DegradationModel::inpainting_fraction(784, f, args.sigma, op_seed),
            None => DegradationModel::inpainting_count(784, args.known, args.sigma, op_seed),
        },
        Task::Cs => DegradationModel::compressed_sensing(784, args.m, args.sigma, op_seed),
    }
}

pub fn solver_config(opts: &SolverOpts, seed: u64) -> SolverConfig {
    SolverConfig {
        n_min: opts.n_min,
        n_max: opts.n_max,
        gd: GdConfig {
            lr: opts.gd_lr,
            max_iters: opts.gd_iters,
            rel_tol: opts.gd_tol,
        },
        x_init: XInit::PseudoInverse {
            epsilon: opts.pinv_eps,
        },
        z_init: match opts.z_init {
            ZInitKind::Encoder => ZInit::EncoderOfX0,
            ZInitKind::Zeros => ZInit::Zeros,
            ZInitKind::Gaussian => ZInit::Gaussian,
        },
        seed,
    }
}

fn csgm_trace_csv(report: &CsgmReport) -> String {
    let mut s = String::from("restart,iter,objective\n");
    for (r, run) in report.restarts.iter().enumerate() {
        for (i, obj) in run.trace.iter().enumerate() {
            let _ = writeln!(s, "{r},{i},{}", sig17(*obj));
        }
    }
    s
}

struct ImageOutcome {
    dataset_index: usize,
    restored: Vec<f64>,
    baseline: Option<Vec<f64>>,
    recon: Vec<f64>,
    mse_restored: f64,
    mse_baseline: Option<f64>,
    mse_recon: f64,
    iterations: usize,
}

#[allow(clippy::too_many_arguments)]
fn restore_one(
    args: &RestoreArgs,
    model: &VaeModel,
    deg: &DegradationModel,
    truth: &[f64],
    dataset_index: usize,
    k: usize,
    reports: &mut Vec<(String, String)>,
) -> Result<ImageOutcome> {
    let obs = degrade(deg, truth, rng::derive(args.seed, &[3, k as u64]));
    let ctx = EnergyContext::new(model, deg, &obs.y)?;
    let cfg = solver_config(&args.solver_opts, rng::derive(args.seed, &[4, k as u64]));

    let mut run_csgm = || -> Result<(Vec<f64>, CsgmReport)> {
        let mut stream = rng::seeded(rng::derive(args.seed, &[5, k as u64]));
        let z0 = rng::normal_vec(&mut stream, model.z_dim());
        csgm(&ctx, args.lambda, &z0, &cfg.gd, args.restarts, rng::derive(args.seed, &[6, k as u64]))
    };

    let (restored, baseline, iterations) = match args.solver {
        SolverKind::Csgm => {
            let (x_hat, report) = run_csgm()?;
            reports.push((
                format!("restore_{k:03}_csgm.csv"),
                csgm_trace_csv(&report),
            ));
            let iters = report.restarts[report.best].iters;
            (x_hat, None, iters)
        }
        kind => {
            let report: SolverReport = match kind {
                SolverKind::Alg1 => algorithm1(&ctx, &cfg)?,
                SolverKind::Alg2 => algorithm2(&ctx, &cfg)?,
                SolverKind::Alg3 => algorithm3(&ctx, &cfg)?,
                SolverKind::Csgm => unreachable!(),
            };
            reports.push((
                format!("restore_{k:03}_{}.csv", kind.as_str()),
                report.to_csv(),
            ));
            reports.push((
                format!("restore_{k:03}_{}.txt", kind.as_str()),
                report.to_text(),
            ));
            let (x_base, base_report) = run_csgm()?;
            reports.push((
                format!("restore_{k:03}_csgm.csv"),
                csgm_trace_csv(&base_report),
            ));
            let iters = report.iterations.len();
            (report.final_x, Some(x_base), iters)
        }
    };

    // Best possible reconstruction under this prior: μθ(μφ(x*)).
    let (mu_phi, _) = model.encode(truth)?;
    let recon = model.decode(&mu_phi)?;

    Ok(ImageOutcome {
        dataset_index,
        mse_restored: mse(&restored, truth),
        mse_baseline: baseline.as_ref().map(|b| mse(b, truth)),
        mse_recon: mse(&recon, truth),
        restored,
        baseline,
        recon,
        iterations,
    })
}

pub fn run(args: &RestoreArgs) -> Result<()> {
    if args.count == 0 {
        return Err(Error::param("--count must be ≥ 1"));
    }
    let test = load_split(&args.data_dir, Split::Test)?;
    if test.is_empty() {
        return Err(Error::param("test split is empty"));
    }
    let model = load_model(&args.model)?;
    let deg = build_degradation(args)?;
    let order = shuffled_indices(test.len(), args.seed);
    let picks: Vec<usize> = order.iter().copied().take(args.count).collect();

    let started = Instant::now();
    let mut outcomes = Vec::with_capacity(picks.len());
    let mut reports: Vec<(String, String)> = Vec::new();
    let mut corrupted_row: Vec<Vec<f64>> = Vec::new();
    for (k, &idx) in picks.iter().enumerate() {
        let truth = &test.images[idx];
        let outcome = restore_one(args, &model, &deg, truth, idx, k, &mut reports)?;
        let obs = degrade(&deg, truth, rng::derive(args.seed, &[3, k as u64]));
        match args.task {
            Task::Denoise => corrupted_row.push(obs.y),
            Task::Inpainting => corrupted_row.push(deg.apply_t(&obs.y)),
            Task::Cs => {} // measurements are not image-shaped
        }
        outcomes.push(outcome);
    }

    // Files: per-image restored PGM + solver traces + summary + panel + meta.
    for (k, o) in outcomes.iter().enumerate() {
        export_pgm(&o.restored, &args.out_dir.join(format!("restored_{k:03}.pgm")))?;
    }
    for (name, text) in &reports {
        write_text(&args.out_dir.join(name), text)?;
    }

    let mut panel: Vec<Vec<f64>> = Vec::new();
    let n = picks.len();
    panel.extend(picks.iter().map(|&i| test.images[i].clone()));
    panel.extend(corrupted_row);
    if args.solver != SolverKind::Csgm {
        panel.extend(outcomes.iter().map(|o| o.baseline.clone().unwrap()));
    }
    panel.extend(outcomes.iter().map(|o| o.restored.clone()));
    panel.extend(outcomes.iter().map(|o| o.recon.clone()));
    export_grid(&panel, n, &args.out_dir.join("panel.pgm"))?;

    let mut summary = String::from(
        "image,dataset_index,mse_restored,mse_csgm,mse_vae_recon,iterations\n",
    );
    for (k, o) in outcomes.iter().enumerate() {
        let baseline = o
            .mse_baseline
            .map(|v| sig17(v))
            .unwrap_or_default();
        let _ = writeln!(
            summary,
            "{k},{},{},{baseline},{},{}",
            o.dataset_index,
            sig17(o.mse_restored),
            sig17(o.mse_recon),
            o.iterations
        );
    }
    write_text(&args.out_dir.join("restore_summary.csv"), &summary)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "command = restore");
    let _ = writeln!(meta, "model = {}", args.model.display());
    let _ = writeln!(meta, "model_fingerprint = {:016x}", model_fingerprint(&args.model)?);
    let _ = writeln!(meta, "solver = {}", args.solver.as_str());
    let _ = writeln!(meta, "count = {}", args.count);
    let _ = writeln!(meta, "seed = {}", args.seed);
    let _ = writeln!(meta, "lambda = {}", args.lambda);
    let _ = writeln!(meta, "restarts = {}", args.restarts);
    meta.push_str(&solver_config(&args.solver_opts, args.seed).config_text());
    meta.push_str(&deg.config_text());
    let _ = writeln!(meta, "picked_indices = {:?}", picks);
    write_text(&args.out_dir.join("restore_meta.txt"), &meta)?;

    for (k, o) in outcomes.iter().enumerate() {
        match o.mse_baseline {
            Some(b) => println!(
                "image {k}: mse_restored {:.6} mse_csgm {:.6} mse_recon {:.6}",
                o.mse_restored, b, o.mse_recon
            ),
            None => println!(
                "image {k}: mse_restored {:.6} mse_recon {:.6}",
                o.mse_restored, o.mse_recon
            ),
        }
    }
    let mean = |f: &dyn Fn(&ImageOutcome) -> f64| {
        outcomes.iter().map(|o| f(o)).sum::<f64>() / outcomes.len() as f64
    };
    println!(
        "mean: mse_restored {:.6} mse_recon {:.6} ({} images)",
        mean(&|o| o.mse_restored),
        mean(&|o| o.mse_recon),
        outcomes.len()
    );
    eprintln!("restore finished in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}
