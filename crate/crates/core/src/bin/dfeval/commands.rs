use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dfeval::estimator::SnrReference;
use dfeval::evaluation::{
    AdaptiveStop, DEFAULT_ADAPTIVE_TOL, DEFAULT_BIN_WIDTH_DEG, DEFAULT_TRIALS,
};
use dfeval::flightreplay::{
    build_report, default_bin_edges, load_track_file, replay_track, TrackMode,
    DEFAULT_BIN_WIDTH_DEG as ELEVATION_BIN_DEG, DEFAULT_OUTLIER_THRESHOLD_DEG,
};
use dfeval::geometry::parse_grid_spec;
use dfeval::modeselect::{
    enumerate_admissible_sets, load_structure_file, rank_sets, sort_ranking, write_ranking_csv,
    DEFAULT_MAX_EIGENVALUE,
};
use dfeval::patterns::{parse_port_spec, save_pattern_file, Lattice};
use dfeval::{run_monte_carlo, Error, Estimator, MonteCarloConfig, Result};
use serde::Serialize;
use serde_json::json;

use crate::settings::{read_config_file, Resolver};
use crate::{Common, EvalArgs, GenPatternArgs, RankArgs, ReplayArgs, SimArgs};

const WORKERS_ENV: &str = "DFEVAL_WORKERS";

fn resolver(config: Option<&Path>) -> Result<Resolver> {
    let file = match config {
        Some(p) => read_config_file(p)?,
        None => BTreeMap::new(),
    };
    Ok(Resolver::new(file))
}

/// Sizes the global worker pool: flag, then config, then `DFEVAL_WORKERS`.
fn setup_workers(r: &mut Resolver, flag: Option<usize>) -> Result<()> {
    let from_env = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            Error::InvalidParameter(format!("{WORKERS_ENV}='{v}' is not a worker count"))
        })?),
        Err(_) => None,
    };
    let workers = r.optional("workers", flag)?.or(from_env);
    r.hide("workers");
    if let Some(n) = workers {
        if n == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        // a pool that already exists (e.g. in tests) is kept
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

fn output_dir(r: &mut Resolver, common: &Common) -> Result<PathBuf> {
    let out: PathBuf = r
        .optional::<String>("out", common.out.as_ref().map(|p| p.display().to_string()))?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    r.hide("out");
    fs::create_dir_all(&out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    Ok(out)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn write_json<T: Serialize>(path: &Path, r: &Resolver, workflow: &str, body: &T) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    let config = json!({
        "workflow": workflow,
        "version": env!("CARGO_PKG_VERSION"),
        "settings": r.effective(),
    });
    match value.as_object_mut() {
        Some(obj) => {
            obj.insert("effective_config".into(), config);
        }
        None => value = json!({ "effective_config": config, "result": value }),
    }
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn monte_carlo_config(r: &mut Resolver, sim: &SimArgs) -> Result<MonteCarloConfig> {
    let snr: f64 = r.required("snr", sim.snr)?;
    let reference: SnrReference = r
        .value(
            "snr-reference",
            sim.snr_reference.clone(),
            "per-port".to_string(),
        )?
        .parse()?;
    let trials = r.value("trials", sim.trials, DEFAULT_TRIALS)?;
    let seed = r.value("seed", sim.seed, 0u64)?;
    let mut cfg = MonteCarloConfig::new(snr, trials, seed);
    cfg.snr_reference = reference;
    cfg.bin_width_deg = r.value("bin-width", sim.bin_width, DEFAULT_BIN_WIDTH_DEG)?;
    Ok(cfg)
}

fn grids(r: &mut Resolver, sim: &SimArgs) -> Result<(dfeval::DoaGrid, dfeval::DoaGrid)> {
    let grid_spec = r.value("grid", sim.grid.clone(), "hemisphere:341".to_string())?;
    let cand_spec = r.value(
        "candidate-grid",
        sim.candidate_grid.clone(),
        grid_spec.clone(),
    )?;
    let grid = parse_grid_spec(&grid_spec)?;
    let candidates = if cand_spec == grid_spec {
        grid.clone()
    } else {
        parse_grid_spec(&cand_spec)?
    };
    Ok((grid, candidates))
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let mut r = resolver(a.common.config.as_deref())?;
    setup_workers(&mut r, a.common.workers)?;
    let out = output_dir(&mut r, &a.common)?;
    let ports_spec: String = r.required("ports", a.ports.clone())?;
    let (grid, candidates) = grids(&mut r, &a.sim)?;
    let mut cfg = monte_carlo_config(&mut r, &a.sim)?;
    cfg.keep_trials = r.switch("keep-trials", a.keep_trials)?;
    if r.switch("adaptive-stop", a.adaptive_stop)? {
        cfg.adaptive = Some(AdaptiveStop {
            tol: r.value("adaptive-tol", a.adaptive_tol, DEFAULT_ADAPTIVE_TOL)?,
            max_trials: r.value("max-trials", a.max_trials, 8 * cfg.trials_per_doa)?,
        });
    }
    let ports = parse_port_spec(&ports_spec)?;

    let report = run_monte_carlo(&ports, &grid, &candidates, &cfg)?;
    let comments = r.comment_lines("eval");
    write_json(&out.join("eval_report.json"), &r, "eval", &report)?;
    report.write_doa_csv(create(&out.join("eval_doa.csv"))?, &comments)?;
    report.write_histogram_csv(create(&out.join("eval_histogram.csv"))?, &comments)?;
    if cfg.keep_trials {
        report.write_trials_csv(create(&out.join("eval_trials.csv"))?, &comments)?;
    }

    let g = &report.aggregate;
    println!(
        "eval: {} DoAs x {} trials, seed {}",
        grid.len() - report.skipped_doas.len(),
        report.config.trials_per_doa,
        report.config.master_seed
    );
    println!("azimuth RMSE: {:.3} deg", g.rmse_az);
    println!("elevation RMSE: {:.3} deg", g.rmse_el);
    println!("great-circle RMSE: {:.3} deg", g.rmse_gc);
    Ok(())
}

pub fn rank_modes(a: &RankArgs) -> Result<()> {
    let mut r = resolver(a.common.config.as_deref())?;
    setup_workers(&mut r, a.common.workers)?;
    let out = output_dir(&mut r, &a.common)?;
    let joined = (!a.structures.is_empty()).then(|| {
        a.structures
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(",")
    });
    let structure_list: String = r.required("structure", joined)?;
    let max_eig = r.value("max-eigenvalue", a.max_eigenvalue, DEFAULT_MAX_EIGENVALUE)?;
    let (grid, candidates) = grids(&mut r, &a.sim)?;
    let cfg = monte_carlo_config(&mut r, &a.sim)?;

    let structures = structure_list
        .split(',')
        .map(|p| load_structure_file(Path::new(p.trim())))
        .collect::<Result<Vec<_>>>()?;

    let mut ranked = Vec::new();
    let mut admissible = Vec::new();
    for s in &structures {
        let sets = enumerate_admissible_sets(s, max_eig);
        ranked.extend(rank_sets(s, &sets, &grid, &candidates, &cfg)?);
        admissible.push(json!({ "structure": s.name, "admissible_sets": sets }));
    }
    sort_ranking(&mut ranked);
    if ranked.is_empty() {
        eprintln!("warning: no admissible mode set (|eigenvalue| < {max_eig}); ranking is empty");
    }

    let comments = r.comment_lines("rank-modes");
    write_ranking_csv(create(&out.join("ranking.csv"))?, &ranked, &comments)?;
    write_json(
        &out.join("ranking.json"),
        &r,
        "rank-modes",
        &json!({ "structures": admissible, "ranking": ranked }),
    )?;
    for (k, x) in ranked.iter().enumerate() {
        println!(
            "{}. {} [{}]: RMSE {:.3} deg (az {:.3}, el {:.3})",
            k + 1,
            x.structure,
            x.set.label(),
            x.rmse_gc_deg,
            x.rmse_az_deg,
            x.rmse_el_deg
        );
    }
    Ok(())
}

pub fn replay(a: &ReplayArgs) -> Result<()> {
    let mut r = resolver(a.common.config.as_deref())?;
    setup_workers(&mut r, a.common.workers)?;
    let out = output_dir(&mut r, &a.common)?;
    let track_path: String =
        r.required("track", a.track.as_ref().map(|p| p.display().to_string()))?;
    let threshold = r.value("threshold", a.threshold, DEFAULT_OUTLIER_THRESHOLD_DEG)?;
    let bin_width = r.value("bin-width", a.bin_width, ELEVATION_BIN_DEG)?;
    let edges = default_bin_edges(bin_width)?;

    let track = load_track_file(Path::new(&track_path))?;
    let pairs = match track.mode() {
        TrackMode::Estimated => replay_track(&track, None)?,
        TrackMode::Steering { .. } => {
            let ports_spec: String = r.required("ports", a.ports.clone())?;
            let cand_spec = r.value(
                "candidate-grid",
                a.candidate_grid.clone(),
                "equiangular:5".to_string(),
            )?;
            let ports = parse_port_spec(&ports_spec)?;
            let est = Estimator::new(&ports, &parse_grid_spec(&cand_spec)?)?;
            replay_track(&track, Some(&est))?
        }
    };
    let report = build_report(&pairs, threshold, &edges)?;

    let comments = r.comment_lines("replay");
    write_json(&out.join("replay_report.json"), &r, "replay", &report)?;
    report.write_bins_csv(create(&out.join("replay_bins.csv"))?, &comments)?;

    let s = &report.stats;
    println!("samples: {}", s.samples);
    println!(
        "azimuth offset removed: {:.3} deg",
        report.azimuth_offset_deg
    );
    println!(
        "elevation RMSE: {:.3} deg, median |error| {:.3} deg",
        s.raw_elevation.rmse_deg, s.raw_elevation.median_abs_deg
    );
    println!(
        "azimuth RMSE: {:.3} deg, median |error| {:.3} deg",
        s.raw_azimuth.rmse_deg, s.raw_azimuth.median_abs_deg
    );
    println!(
        "excluded (|azimuth error| > {} deg): {:.2}%",
        threshold,
        100.0 * s.excluded_fraction
    );
    match (&s.filtered_azimuth, &s.filtered_absent_reason) {
        (Some(f), _) => println!(
            "filtered azimuth RMSE: {:.3} deg, median |error| {:.3} deg",
            f.rmse_deg, f.median_abs_deg
        ),
        (None, reason) => println!(
            "filtered azimuth RMSE: absent ({})",
            reason.as_deref().unwrap_or("no samples")
        ),
    }
    Ok(())
}

pub fn gen_pattern(a: &GenPatternArgs) -> Result<()> {
    let mut r = resolver(a.config.as_deref())?;
    let spec: String = r.required("ports", a.ports.clone())?;
    let step = r.value("step", a.step, 5.0)?;
    let theta_max = r.value("theta-max", a.theta_max, 180.0)?;
    let out: PathBuf = r
        .value(
            "out",
            a.out.as_ref().map(|p| p.display().to_string()),
            "pattern.csv".to_string(),
        )?
        .into();
    r.hide("out");
    if spec.starts_with("file:") {
        return Err(Error::InvalidParameter(
            "gen-pattern samples analytic patterns; file: is not accepted".into(),
        ));
    }
    let ports = parse_port_spec(&spec)?;
    let lattice = Lattice::regular(step, theta_max)?;
    let sampled = ports.sample_on(&lattice)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let mut comments = r.comment_lines("gen-pattern");
    comments.push(format!("labels={}", ports.labels().join(",")));
    save_pattern_file(&out, &sampled, &comments)?;
    println!(
        "wrote {} ports x {} lattice nodes to {}",
        sampled.len(),
        lattice.len(),
        out.display()
    );
    Ok(())
}
