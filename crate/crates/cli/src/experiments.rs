//! The six experiment kinds, each producing one output table.

use std::time::Instant;

use rayon::prelude::*;

use holdback::analytic::{mes_quantities, solve_fugacity, threshold, typical_flux, zr_flux_curve};
use holdback::ballot::{survival_experiment, survival_lower_bound_left};
use holdback::fluid::{mes_profile, single_cluster_profile, FluidProfile};
use holdback::metrics::{find_clusters, mes_distance, product_series, FluxAccumulator};
use holdback::rng::derive_seed;
use holdback::{ModelParams, Simulation, Variant};

use crate::config::{ExperimentConfig, Kind};
use crate::table::{Cell, Table};

/// Config columns a row overrides, e.g. the swept density and its seed.
pub type Overrides = Vec<(&'static str, String)>;

pub struct Output {
    pub table: Table,
    pub overrides: Vec<Overrides>,
    /// Slots simulated, for the throughput line.
    pub slots: u64,
}

pub const RUN_COLUMNS: &[&str] = &[
    "replicate",
    "run_seed",
    "window_start",
    "window_end",
    "flux_realized",
    "flux_expected",
    "flux_perturb",
    "flux_std_err",
    "mean_max_cluster",
    "max_cluster",
    "mean_clusters",
    "fraction_ideal",
    "mes_distance_median",
    "mes_distance_q90",
    "h",
    "tau_star",
    "phi_star",
    "phi_analytic",
];

pub const SURVIVAL_COLUMNS: &[&str] = &[
    "trials",
    "created",
    "survived",
    "horizon",
    "p_survive",
    "std_err",
    "delta2_bound",
];

pub const ZR_COLUMNS: &[&str] = &[
    "point_rho",
    "gamma",
    "z_star",
    "eta",
    "v",
    "phi",
    "residual_fuga",
    "residual_cubic",
    "phi_limit",
];

pub const FLUID_COLUMNS: &[&str] = &[
    "t",
    "tau",
    "ell",
    "r",
    "has_cluster",
    "zero_length",
    "mu",
    "left_density",
    "mass",
];

pub const PROFILE_COLUMNS: &[&str] = &["t", "x", "density"];

pub const SNAPSHOT_COLUMNS: &[&str] = &["slot", "site", "occupied", "product"];

fn quantile(v: &mut [f64], q: f64) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Some(v[((v.len() - 1) as f64 * q).round() as usize])
}

/// Analytic reference values `(h, tau*, phi*, phi)` for a parameter set.
fn analytic_overlay(params: &ModelParams) -> (Cell, Cell, Cell, Cell) {
    let rho = params.rho();
    match params.variant {
        Variant::Csma => (Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty),
        variant => {
            let (tau, phi_star) = match mes_quantities(rho, params.p) {
                Ok(q) => (q.tau_star.into(), q.phi_star.into()),
                Err(_) => (Cell::Empty, Cell::Empty),
            };
            let phi = if variant == Variant::ZeroRange && params.pi < 1.0 && rho < 1.0 {
                solve_fugacity(1.0 - rho, params.pi, params.p)
                    .map(|s| Cell::Float(s.phi))
                    .unwrap_or(Cell::Empty)
            } else {
                Cell::Float(typical_flux(rho, params.p))
            };
            (threshold(params.p).into(), tau, phi_star, phi)
        }
    }
}

/// One trajectory: burn-in, then a measured window.
fn run_one(
    cfg: &ExperimentConfig,
    params: &ModelParams,
    replicate: u64,
) -> holdback::Result<Vec<Cell>> {
    let mut sim = Simulation::new(params, &cfg.init_spec())?;
    sim.skip(cfg.burn_in)?;
    let window = cfg.slots - cfg.burn_in;
    let n = params.n as f64;
    let exclusion = params.variant.is_exclusion();
    let mes_defined = exclusion && params.rho() > params.h();

    let mut acc = FluxAccumulator::new(params.n, cfg.include_perturb_flux);
    let mut ideal = 0u64;
    let (mut max_sum, mut max_all, mut count_sum, mut samples) = (0.0, 0usize, 0.0, 0u64);
    let mut dists = Vec::new();
    for k in 0..window {
        let out = sim.advance()?;
        acc.push(out.slot, &out.moves);
        let state = sim.state();
        if exclusion {
            ideal += state.is_ideal() as u64;
            if (k + 1) % cfg.sample_every == 0 {
                let stats = find_clusters(state);
                max_sum += stats.max_length as f64 / n;
                max_all = max_all.max(stats.max_length);
                count_sum += stats.num_clusters as f64;
                samples += 1;
                if mes_defined {
                    dists.push(mes_distance(state, params)?);
                }
            }
        }
    }
    let est = acc.estimate()?;
    let per_sample = |x: f64| (samples > 0).then(|| x / samples as f64);
    let (h, tau, phi_star, phi) = analytic_overlay(params);
    Ok(vec![
        replicate.into(),
        params.seed.into(),
        est.window.0.into(),
        est.window.1.into(),
        est.realized.into(),
        est.expected.into(),
        est.perturb_term.into(),
        est.std_err.into(),
        per_sample(max_sum).into(),
        if samples > 0 {
            Cell::from(max_all)
        } else {
            Cell::Empty
        },
        per_sample(count_sum).into(),
        if exclusion {
            Cell::Float(ideal as f64 / window as f64)
        } else {
            Cell::Empty
        },
        quantile(&mut dists, 0.5).into(),
        quantile(&mut dists, 0.9).into(),
        h,
        tau,
        phi_star,
        phi,
    ])
}

fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    if replicate == 0 {
        seed
    } else {
        derive_seed(seed, replicate)
    }
}

pub fn run(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let jobs: Vec<u64> = (0..cfg.replicates).collect();
    let rows: holdback::Result<Vec<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&r| {
            let params = cfg.model_params(cfg.rho, cfg.p, replicate_seed(cfg.seed, r))?;
            run_one(cfg, &params, r)
        })
        .collect();
    let mut table = Table::new(RUN_COLUMNS);
    for row in rows? {
        table.push(row);
    }
    Ok(Output {
        table,
        overrides: Vec::new(),
        slots: cfg.slots * cfg.replicates,
    })
}

/// Row seed from the swept values, independent of execution order.
fn sweep_seed(seed: u64, p: f64, rho: f64, replicate: u64) -> u64 {
    derive_seed(
        derive_seed(derive_seed(seed, p.to_bits()), rho.to_bits()),
        replicate,
    )
}

pub fn sweep(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let mut jobs = Vec::new();
    for &p in &cfg.sweep_p_values() {
        for &rho in &cfg.grid {
            for r in 0..cfg.replicates {
                jobs.push((p, rho, r));
            }
        }
    }
    let rows: holdback::Result<Vec<(Overrides, Vec<Cell>)>> = jobs
        .par_iter()
        .map(|&(p, rho, r)| {
            let seed = sweep_seed(cfg.seed, p, rho, r);
            let params = cfg.model_params(rho, p, seed)?;
            let row = run_one(cfg, &params, r)?;
            Ok((vec![("rho", rho.to_string()), ("p", p.to_string())], row))
        })
        .collect();
    let mut table = Table::new(RUN_COLUMNS);
    let mut overrides = Vec::new();
    for (o, row) in rows? {
        overrides.push(o);
        table.push(row);
    }
    Ok(Output {
        table,
        overrides,
        slots: cfg.slots * jobs.len() as u64,
    })
}

pub fn survival(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let params = cfg.model_params(cfg.rho, cfg.p, cfg.seed)?;
    let est = survival_experiment(&params, cfg.trials, cfg.horizon_factor)?;
    let mut table = Table::new(SURVIVAL_COLUMNS);
    table.push(vec![
        est.trials.into(),
        est.created.into(),
        est.survived.into(),
        est.horizon.into(),
        est.p_survive.into(),
        est.std_err.into(),
        survival_lower_bound_left(cfg.rho, cfg.p).ok().into(),
    ]);
    Ok(Output {
        table,
        overrides: Vec::new(),
        slots: est.trials * est.horizon,
    })
}

pub fn zr_curve(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let curve = zr_flux_curve(&cfg.grid, cfg.pi, cfg.p)?;
    let mut table = Table::new(ZR_COLUMNS);
    for (rho, s) in curve {
        table.push(vec![
            rho.into(),
            s.gamma.into(),
            s.z_star.into(),
            s.eta.into(),
            s.v.into(),
            s.phi.into(),
            s.residual_fuga.into(),
            s.residual_cubic.into(),
            rho.min(cfg.p * (1.0 - rho)).into(),
        ]);
    }
    Ok(Output {
        table,
        overrides: Vec::new(),
        slots: 0,
    })
}

pub fn fluid(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let profile = cfg.profile;
    let mut state: FluidProfile = match cfg.init.as_str() {
        "mes" => mes_profile(cfg.rho, cfg.p)?,
        "single_cluster" => single_cluster_profile(cfg.rho, cfg.p)?,
        other => {
            return Err(holdback::Error::InvalidInit(format!(
                "fluid runs start from single_cluster or mes, not {other}"
            )))
        }
    };
    let steps = (cfg.t_end / cfg.dt + 1e-9).floor() as u64;
    let mut table = Table::new(if profile {
        PROFILE_COLUMNS
    } else {
        FLUID_COLUMNS
    });
    let emit = |s: &FluidProfile, table: &mut Table| {
        if profile {
            for (x, d) in s.breakpoints() {
                table.push(vec![s.t.into(), x.rem_euclid(1.0).into(), d.into()]);
            }
        } else {
            table.push(vec![
                s.t.into(),
                s.tau.into(),
                s.ell().into(),
                s.r.into(),
                s.has_cluster.into(),
                s.zero_length_cluster().into(),
                s.mu().into(),
                s.left_density().into(),
                s.to_density().mass().into(),
            ]);
        }
    };
    emit(&state, &mut table);
    for k in 1..=steps {
        // Advance to the grid time rather than accumulating dt.
        let target = (k as f64 * cfg.dt).min(cfg.t_end);
        state.advance(target - state.t);
        emit(&state, &mut table);
    }
    Ok(Output {
        table,
        overrides: Vec::new(),
        slots: 0,
    })
}

pub fn snapshot(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let params = cfg.model_params(cfg.rho, cfg.p, cfg.seed)?;
    if !params.variant.is_exclusion() {
        return Err(holdback::Error::UnsupportedVariant(params.variant.name()));
    }
    let mut sim = Simulation::new(&params, &cfg.init_spec())?;
    sim.skip(cfg.slots)?;
    let state = sim.state();
    let product = product_series(state);
    let mut table = Table::new(SNAPSHOT_COLUMNS);
    for (i, &x) in product.iter().enumerate() {
        table.push(vec![
            state.t().into(),
            i.into(),
            (state.occupied(i) as u64).into(),
            (x as u64).into(),
        ]);
    }
    Ok(Output {
        table,
        overrides: Vec::new(),
        slots: cfg.slots,
    })
}

/// Run the configured experiment, reporting wall time on stderr.
pub fn execute(cfg: &ExperimentConfig) -> holdback::Result<Output> {
    let start = Instant::now();
    let out = match cfg.kind {
        Kind::Run => run(cfg),
        Kind::Sweep => sweep(cfg),
        Kind::Survival => survival(cfg),
        Kind::ZrCurve => zr_curve(cfg),
        Kind::Fluid => fluid(cfg),
        Kind::Snapshot => snapshot(cfg),
    }?;
    let secs = start.elapsed().as_secs_f64();
    if out.slots > 0 {
        eprintln!(
            "holdback {}: {secs:.2} s, {:.3e} slots/s",
            cfg.kind.name(),
            out.slots as f64 / secs.max(1e-9)
        );
    } else {
        eprintln!("holdback {}: {secs:.3} s", cfg.kind.name());
    }
    Ok(out)
}
